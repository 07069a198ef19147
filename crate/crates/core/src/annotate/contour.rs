//! Marching-squares boundaries of binary slice masks at the 0.5 level.
//!
//! Mask values sit on the voxel-center lattice, so every boundary vertex is an
//! edge midpoint between a set and an unset center. Segments are emitted with
//! the set region on their left, which makes outer boundaries counter-clockwise
//! and holes clockwise. Diagonal-only contact (the saddle cases) is treated as
//! disconnected, so loops never touch or cross.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::label::{LabelVolume, MaskSlice};
use crate::error::Result;
use crate::volume::Axis;

/// Closed loop in slice millimeters; the last vertex repeats the first.
pub type Polygon = Vec<[f64; 2]>;

/// Doubled lattice coordinates: edge midpoints land on integers.
type Key = (i64, i64);

pub fn extract_contours(slice: &MaskSlice, spacing: [f64; 2]) -> Vec<Polygon> {
    let (w, h) = (slice.width as i64, slice.height as i64);
    let at = |u: i64, v: i64| u >= 0 && v >= 0 && u < w && v < h && slice.get(u as usize, v as usize);

    let mut next: HashMap<Key, Key> = HashMap::new();
    for j in -1..h {
        for i in -1..w {
            // Corners counter-clockwise from bottom-left (v grows upward).
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let inside = corners.map(|(u, v)| at(u, v));
            if inside.iter().all(|&b| b) || inside.iter().all(|&b| !b) {
                continue;
            }
            let mid = |k: usize| {
                let (a, b) = (corners[k], corners[(k + 1) % 4]);
                (a.0 + b.0, a.1 + b.1)
            };
            for k in 0..4 {
                // Edge k leaves the set region: a segment starts on it and ends
                // on the edge entering the same run of set corners.
                if inside[k] && !inside[(k + 1) % 4] {
                    let mut m = (k + 3) % 4;
                    while !(!inside[m] && inside[(m + 1) % 4]) {
                        m = (m + 3) % 4;
                    }
                    next.insert(mid(k), mid(m));
                }
            }
        }
    }

    let starts: BTreeMap<Key, Key> = next.iter().map(|(a, b)| (*a, *b)).collect();
    let mut visited: HashSet<Key> = HashSet::with_capacity(next.len());
    let to_mm = |(x, y): Key| [x as f64 * 0.5 * spacing[0], y as f64 * 0.5 * spacing[1]];
    let mut polygons = Vec::new();
    for &start in starts.keys() {
        if visited.contains(&start) {
            continue;
        }
        let mut poly = vec![to_mm(start)];
        let mut cur = start;
        loop {
            visited.insert(cur);
            cur = next[&cur];
            poly.push(to_mm(cur));
            if cur == start {
                break;
            }
        }
        polygons.push(poly);
    }
    polygons
}

/// Shoelace area; positive for counter-clockwise loops.
pub fn signed_area(poly: &[[f64; 2]]) -> f64 {
    poly.windows(2).map(|w| w[0][0] * w[1][1] - w[1][0] * w[0][1]).sum::<f64>() * 0.5
}

/// Even-odd membership of `p` across all loops.
pub fn point_in_polygons(polys: &[Polygon], p: [f64; 2]) -> bool {
    let mut inside = false;
    for poly in polys {
        for w in poly.windows(2) {
            let (a, b) = (w[0], w[1]);
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

/// Rasterizes loops back onto the voxel-center lattice.
pub fn rasterize_polygons(polys: &[Polygon], width: usize, height: usize, spacing: [f64; 2]) -> MaskSlice {
    MaskSlice::from_fn(width, height, |u, v| {
        point_in_polygons(polys, [u as f64 * spacing[0], v as f64 * spacing[1]])
    })
}

/// Per-slice contours of a label volume along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourSet {
    pub axis: Axis,
    pub per_slice: BTreeMap<usize, Vec<Polygon>>,
}

/// One record of the contour export format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceContours {
    pub axis: Axis,
    pub slice: usize,
    pub polygons: Vec<Polygon>,
}

impl ContourSet {
    pub fn extract(m: &LabelVolume, spacing: [f64; 3], axis: Axis) -> Result<Self> {
        let (a, b) = axis.in_plane();
        let mut per_slice = BTreeMap::new();
        for k in 0..m.axis_len(axis) {
            let slice = m.mask_slice(axis, k)?;
            if slice.is_empty() {
                continue;
            }
            per_slice.insert(k, extract_contours(&slice, [spacing[a], spacing[b]]));
        }
        Ok(ContourSet { axis, per_slice })
    }

    pub fn to_records(&self) -> Vec<SliceContours> {
        self.per_slice
            .iter()
            .map(|(&slice, polygons)| SliceContours { axis: self.axis, slice, polygons: polygons.clone() })
            .collect()
    }
}
