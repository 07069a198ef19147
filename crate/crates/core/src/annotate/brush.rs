use serde::{Deserialize, Serialize};

use super::label::LabelVolume;
use crate::error::{Error, Result};
use crate::volume::{Axis, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BrushMode {
    Paint,
    Erase,
}

impl BrushMode {
    fn value(self) -> bool {
        self == BrushMode::Paint
    }
}

/// Tool and stamp path. Disc strokes live on a single slice; their path
/// points are in-plane millimeters `(u * su, v * sv)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tool")]
pub enum StrokeTool {
    #[serde(rename = "disc2d")]
    Disc2d { axis: Axis, slice: usize, path: Vec<[f64; 2]> },
    #[serde(rename = "sphere3d")]
    Sphere3d { path: Vec<[f64; 3]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StrokeWire", into = "StrokeWire")]
pub struct BrushStroke {
    pub tool: StrokeTool,
    pub mode: BrushMode,
    pub radius_mm: f64,
    /// Milliseconds; informational for replay ordering.
    pub timestamp: f64,
}

#[derive(Serialize, Deserialize)]
struct StrokeWire {
    #[serde(flatten)]
    tool: StrokeTool,
    mode: BrushMode,
    radius_mm: f64,
    #[serde(default)]
    timestamp: f64,
}

impl TryFrom<StrokeWire> for BrushStroke {
    type Error = Error;

    fn try_from(w: StrokeWire) -> Result<Self> {
        let s = BrushStroke { tool: w.tool, mode: w.mode, radius_mm: w.radius_mm, timestamp: w.timestamp };
        s.validate()?;
        Ok(s)
    }
}

impl From<BrushStroke> for StrokeWire {
    fn from(s: BrushStroke) -> Self {
        StrokeWire { tool: s.tool, mode: s.mode, radius_mm: s.radius_mm, timestamp: s.timestamp }
    }
}

impl BrushStroke {
    pub fn disc(axis: Axis, slice: usize, path: Vec<[f64; 2]>, radius_mm: f64, mode: BrushMode) -> Self {
        BrushStroke { tool: StrokeTool::Disc2d { axis, slice, path }, mode, radius_mm, timestamp: 0.0 }
    }

    pub fn sphere(path: Vec<[f64; 3]>, radius_mm: f64, mode: BrushMode) -> Self {
        BrushStroke { tool: StrokeTool::Sphere3d { path }, mode, radius_mm, timestamp: 0.0 }
    }

    pub fn at(mut self, timestamp: f64) -> Self {
        self.timestamp = timestamp;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius_mm > 0.0 && self.radius_mm.is_finite()) {
            return Err(Error::InvalidStroke(format!("radius_mm {} must be positive", self.radius_mm)));
        }
        let (empty, finite) = match &self.tool {
            StrokeTool::Disc2d { path, .. } => {
                (path.is_empty(), path.iter().flatten().all(|c| c.is_finite()))
            }
            StrokeTool::Sphere3d { path } => {
                (path.is_empty(), path.iter().flatten().all(|c| c.is_finite()))
            }
        };
        if empty {
            return Err(Error::InvalidStroke("stroke path is empty".into()));
        }
        if !finite {
            return Err(Error::InvalidStroke("stroke path has non-finite coordinates".into()));
        }
        Ok(())
    }
}

fn check_radius(radius_mm: f64) -> Result<()> {
    if !(radius_mm > 0.0 && radius_mm.is_finite()) {
        return Err(Error::InvalidStroke(format!("radius_mm {radius_mm} must be positive")));
    }
    Ok(())
}

/// Inclusive voxel index range whose centers may lie within `[lo, hi]` mm.
fn index_range(lo: f64, hi: f64, spacing: f64, n: usize) -> Option<(usize, usize)> {
    let first = (lo / spacing).ceil().max(0.0);
    let last = (hi / spacing).floor().min((n - 1) as f64);
    (first <= last).then(|| (first as usize, last as usize))
}

/// Squared distance from `p` to segment `a`-`b`, in any dimension.
#[inline]
fn dist2_to_segment<const N: usize>(p: [f64; N], a: [f64; N], b: [f64; N]) -> f64 {
    let mut ab2 = 0.0;
    let mut dot = 0.0;
    for i in 0..N {
        let ab = b[i] - a[i];
        ab2 += ab * ab;
        dot += (p[i] - a[i]) * ab;
    }
    let t = if ab2 > 0.0 { (dot / ab2).clamp(0.0, 1.0) } else { 0.0 };
    let mut d2 = 0.0;
    for i in 0..N {
        let q = if t == 0.0 { a[i] } else { a[i] + (b[i] - a[i]) * t };
        let d = p[i] - q;
        d2 += d * d;
    }
    d2
}

/// Sets or clears every voxel of one slice whose center lies within
/// `radius_mm` of segment `a`-`b` (a disc when `a == b`).
fn stamp_2d(m: &mut LabelVolume, spacing: [f64; 2], axis: Axis, index: usize, a: [f64; 2], b: [f64; 2], r: f64, on: bool) {
    let (ua, va) = axis.in_plane();
    let dims = m.dims();
    let Some((u0, u1)) = index_range(a[0].min(b[0]) - r, a[0].max(b[0]) + r, spacing[0], dims[ua]) else {
        return;
    };
    let Some((v0, v1)) = index_range(a[1].min(b[1]) - r, a[1].max(b[1]) + r, spacing[1], dims[va]) else {
        return;
    };
    let r2 = r * r;
    for v in v0..=v1 {
        for u in u0..=u1 {
            let p = [u as f64 * spacing[0], v as f64 * spacing[1]];
            if dist2_to_segment(p, a, b) <= r2 {
                m.set(axis.voxel(index, u, v), on);
            }
        }
    }
}

/// 3D counterpart of [`stamp_2d`]: a capsule, or a sphere when `a == b`.
fn stamp_3d(m: &mut LabelVolume, spacing: [f64; 3], a: [f64; 3], b: [f64; 3], r: f64, on: bool) {
    let dims = m.dims();
    let mut ranges = [(0, 0); 3];
    for i in 0..3 {
        match index_range(a[i].min(b[i]) - r, a[i].max(b[i]) + r, spacing[i], dims[i]) {
            Some(range) => ranges[i] = range,
            None => return,
        }
    }
    let r2 = r * r;
    for z in ranges[2].0..=ranges[2].1 {
        for y in ranges[1].0..=ranges[1].1 {
            for x in ranges[0].0..=ranges[0].1 {
                let p = [x as f64 * spacing[0], y as f64 * spacing[1], z as f64 * spacing[2]];
                if dist2_to_segment(p, a, b) <= r2 {
                    m.set([x, y, z], on);
                }
            }
        }
    }
}

/// Paints or erases a disc on one slice. `center` is in-plane millimeters.
pub fn paint_disc(
    m: &mut LabelVolume,
    v: &Volume,
    axis: Axis,
    index: usize,
    center: [f64; 2],
    radius_mm: f64,
    mode: BrushMode,
) -> Result<()> {
    m.check_dims(v.dims())?;
    check_radius(radius_mm)?;
    let len = v.axis_len(axis);
    if index >= len {
        return Err(Error::IndexOutOfRange { axis, index, len });
    }
    stamp_2d(m, v.slice_spacing(axis), axis, index, center, center, radius_mm, mode.value());
    Ok(())
}

/// Paints or erases a ball in millimeter space; parts outside the volume are clipped.
pub fn paint_sphere(
    m: &mut LabelVolume,
    v: &Volume,
    center: [f64; 3],
    radius_mm: f64,
    mode: BrushMode,
) -> Result<()> {
    m.check_dims(v.dims())?;
    check_radius(radius_mm)?;
    stamp_3d(m, v.spacing(), center, center, radius_mm, mode.value());
    Ok(())
}

/// Applies the swept footprint of a stroke: every stamp plus the continuous
/// sweep between consecutive stamps, so fast strokes leave no gaps.
pub fn apply_stroke(m: &mut LabelVolume, v: &Volume, s: &BrushStroke) -> Result<()> {
    m.check_dims(v.dims())?;
    s.validate()?;
    let on = s.mode.value();
    let r = s.radius_mm;
    match &s.tool {
        StrokeTool::Disc2d { axis, slice, path } => {
            let len = v.axis_len(*axis);
            if *slice >= len {
                return Err(Error::IndexOutOfRange { axis: *axis, index: *slice, len });
            }
            let spacing = v.slice_spacing(*axis);
            stamp_2d(m, spacing, *axis, *slice, path[0], path[0], r, on);
            for w in path.windows(2) {
                stamp_2d(m, spacing, *axis, *slice, w[0], w[1], r, on);
            }
        }
        StrokeTool::Sphere3d { path } => {
            let spacing = v.spacing();
            stamp_3d(m, spacing, path[0], path[0], r, on);
            for w in path.windows(2) {
                stamp_3d(m, spacing, w[0], w[1], r, on);
            }
        }
    }
    Ok(())
}
