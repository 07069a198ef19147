//! Voxel data model.
//!
//! Voxel centers sit on the integer lattice and the volume origin is the
//! center of voxel `(0, 0, 0)`, so a voxel index maps to millimeters by a
//! per-axis multiply with the spacing. Storage is x-fastest, then y, then z.

mod file;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use file::{read_volume, write_volume, VolumeDtype, VolumeMeta};

/// One of the three anatomical cutting planes, identified by the volume axis
/// held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Fixed z.
    #[serde(alias = "z")]
    Transverse,
    /// Fixed x.
    #[serde(alias = "x")]
    Sagittal,
    /// Fixed y.
    #[serde(alias = "y")]
    Coronal,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Transverse, Axis::Sagittal, Axis::Coronal];

    /// Index of the volume axis held constant by this plane.
    pub fn normal(self) -> usize {
        match self {
            Axis::Transverse => 2,
            Axis::Sagittal => 0,
            Axis::Coronal => 1,
        }
    }

    /// Volume axes spanning the plane, as (u, v). u varies fastest in slice grids.
    pub fn in_plane(self) -> (usize, usize) {
        match self {
            Axis::Transverse => (0, 1),
            Axis::Sagittal => (1, 2),
            Axis::Coronal => (0, 2),
        }
    }

    /// Volume voxel coordinates of slice cell `(u, v)` on plane `index`.
    pub fn voxel(self, index: usize, u: usize, v: usize) -> [usize; 3] {
        let mut p = [0; 3];
        let (a, b) = self.in_plane();
        p[self.normal()] = index;
        p[a] = u;
        p[b] = v;
        p
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Transverse => "transverse",
            Axis::Sagittal => "sagittal",
            Axis::Coronal => "coronal",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "z" | "transverse" | "axial" => Ok(Axis::Transverse),
            "x" | "sagittal" => Ok(Axis::Sagittal),
            "y" | "coronal" => Ok(Axis::Coronal),
            other => Err(format!("unknown axis `{other}` (expected x, y, z or a plane name)")),
        }
    }
}

/// Lower/upper density bounds remapped to [0, 1] at view time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct DensityWindow {
    lo: f64,
    hi: f64,
}

impl DensityWindow {
    pub const FULL: DensityWindow = DensityWindow { lo: 0.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo < hi {
            Ok(DensityWindow { lo, hi })
        } else {
            Err(Error::InvalidWindow { lo, hi })
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn is_full(&self) -> bool {
        self.lo == 0.0 && self.hi == 1.0
    }

    /// `clamp((d - lo) / (hi - lo), 0, 1)`.
    #[inline]
    pub fn apply(&self, d: f64) -> f64 {
        if self.is_full() {
            return d.clamp(0.0, 1.0);
        }
        ((d - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }
}

impl Default for DensityWindow {
    fn default() -> Self {
        DensityWindow::FULL
    }
}

impl TryFrom<[f64; 2]> for DensityWindow {
    type Error = Error;

    fn try_from([lo, hi]: [f64; 2]) -> Result<Self> {
        DensityWindow::new(lo, hi)
    }
}

impl From<DensityWindow> for [f64; 2] {
    fn from(w: DensityWindow) -> Self {
        [w.lo, w.hi]
    }
}

impl FromStr for DensityWindow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lo, hi) = s.split_once(',').ok_or_else(|| format!("window `{s}` is not `lo,hi`"))?;
        let lo: f64 = lo.trim().parse().map_err(|e| format!("window lo: {e}"))?;
        let hi: f64 = hi.trim().parse().map_err(|e| format!("window hi: {e}"))?;
        DensityWindow::new(lo, hi).map_err(|e| e.to_string())
    }
}

/// Free-function form of [`DensityWindow::apply`].
pub fn apply_window(d: f64, w: DensityWindow) -> f64 {
    w.apply(d)
}

/// Scalar density grid with per-axis spacing in millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f64; 3],
    densities: Vec<f32>,
    raw_range: (f64, f64),
}

impl Volume {
    /// Builds a volume from already-normalized densities.
    pub fn from_densities(
        dims: [usize; 3],
        spacing: [f64; 3],
        densities: Vec<f32>,
        raw_range: (f64, f64),
    ) -> Result<Self> {
        check_geometry(dims, spacing, densities.len())?;
        if let Some(bad) = densities.iter().find(|d| !(0.0..=1.0).contains(*d)) {
            return Err(Error::corrupt("<memory>", "densities", format!("{bad} outside [0, 1]")));
        }
        Ok(Volume { dims, spacing, densities, raw_range })
    }

    /// Builds a volume by evaluating `f` at every voxel index.
    pub fn from_fn(
        dims: [usize; 3],
        spacing: [f64; 3],
        mut f: impl FnMut([usize; 3]) -> f32,
    ) -> Result<Self> {
        check_geometry(dims, spacing, dims.iter().product())?;
        let mut densities = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    densities.push(f([x, y, z]).clamp(0.0, 1.0));
                }
            }
        }
        Ok(Volume { dims, spacing, densities, raw_range: (0.0, 1.0) })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn raw_range(&self) -> (f64, f64) {
        self.raw_range
    }

    pub fn densities(&self) -> &[f32] {
        &self.densities
    }

    pub fn len(&self) -> usize {
        self.densities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.densities.is_empty()
    }

    #[inline]
    pub fn index(&self, [x, y, z]: [usize; 3]) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, p: [usize; 3]) -> f32 {
        self.densities[self.index(p)]
    }

    /// Physical extent between the first and last voxel centers, per axis.
    pub fn extent_mm(&self) -> [f64; 3] {
        std::array::from_fn(|i| (self.dims[i] - 1) as f64 * self.spacing[i])
    }

    /// Center of the voxel lattice in millimeters.
    pub fn center_mm(&self) -> [f64; 3] {
        let e = self.extent_mm();
        [e[0] * 0.5, e[1] * 0.5, e[2] * 0.5]
    }

    pub fn axis_len(&self, axis: Axis) -> usize {
        self.dims[axis.normal()]
    }

    /// In-plane spacing `(su, sv)` for slices along `axis`.
    pub fn slice_spacing(&self, axis: Axis) -> [f64; 2] {
        let (a, b) = axis.in_plane();
        [self.spacing[a], self.spacing[b]]
    }

    /// In-plane size `(width, height)` for slices along `axis`.
    pub fn slice_size(&self, axis: Axis) -> (usize, usize) {
        let (a, b) = axis.in_plane();
        (self.dims[a], self.dims[b])
    }

    pub fn world_to_voxel(&self, p: [f64; 3]) -> [f64; 3] {
        world_to_voxel(self.spacing, p)
    }

    pub fn voxel_to_world(&self, c: [f64; 3]) -> [f64; 3] {
        voxel_to_world(self.spacing, c)
    }

    pub fn extract_slice(&self, axis: Axis, index: usize) -> Result<Slice2D> {
        let len = self.axis_len(axis);
        if index >= len {
            return Err(Error::IndexOutOfRange { axis, index, len });
        }
        let (width, height) = self.slice_size(axis);
        let mut grid = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                grid.push(self.get(axis.voxel(index, u, v)));
            }
        }
        Ok(Slice2D { axis, index, width, height, grid, spacing: self.slice_spacing(axis) })
    }

    /// Windowed trilinear sample at fractional voxel coordinates. Points outside
    /// `[0, dims - 1]` on any axis read as empty space (0).
    #[inline]
    pub fn sample_trilinear(&self, p: [f64; 3], w: DensityWindow) -> f64 {
        match self.trilinear_raw(p) {
            Some(d) => w.apply(d),
            None => 0.0,
        }
    }

    /// Unwindowed trilinear interpolation, `None` outside the lattice.
    #[inline]
    pub fn trilinear_raw(&self, p: [f64; 3]) -> Option<f64> {
        let mut base = [0usize; 3];
        let mut frac = [0f64; 3];
        let mut step = [0usize; 3];
        for i in 0..3 {
            let n = self.dims[i];
            let c = p[i];
            if !(c >= 0.0 && c <= (n - 1) as f64) {
                return None;
            }
            let b = (c.floor() as usize).min(n.saturating_sub(2));
            base[i] = b;
            frac[i] = c - b as f64;
            step[i] = usize::from(n > 1);
        }
        let nx = self.dims[0];
        let nxy = nx * self.dims[1];
        let i000 = base[0] + nx * base[1] + nxy * base[2];
        let dx = step[0];
        let dy = step[1] * nx;
        let dz = step[2] * nxy;
        let d = &self.densities;
        let c00 = lerp(d[i000] as f64, d[i000 + dx] as f64, frac[0]);
        let c10 = lerp(d[i000 + dy] as f64, d[i000 + dy + dx] as f64, frac[0]);
        let c01 = lerp(d[i000 + dz] as f64, d[i000 + dz + dx] as f64, frac[0]);
        let c11 = lerp(d[i000 + dz + dy] as f64, d[i000 + dz + dy + dx] as f64, frac[0]);
        let c0 = lerp(c00, c10, frac[1]);
        let c1 = lerp(c01, c11, frac[1]);
        Some(lerp(c0, c1, frac[2]))
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn check_geometry(dims: [usize; 3], spacing: [f64; 3], len: usize) -> Result<()> {
    if dims.iter().any(|&n| n == 0) {
        return Err(Error::GridSize { dims, found: len });
    }
    if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::corrupt("<memory>", "spacing_mm", format!("{spacing:?} must be positive")));
    }
    if dims.iter().product::<usize>() != len {
        return Err(Error::GridSize { dims, found: len });
    }
    Ok(())
}

/// Min-max normalizes `raw` (x-fastest order) into a [`Volume`] at the same
/// resolution.
pub fn normalize_minmax<T: Copy + Into<f64>>(
    raw: &[T],
    dims: [usize; 3],
    spacing: [f64; 3],
) -> Result<Volume> {
    check_geometry(dims, spacing, raw.len())?;
    let (min, max) = raw.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        let v: f64 = v.into();
        (lo.min(v), hi.max(v))
    });
    if !(max > min) {
        return Err(Error::ConstantVolume);
    }
    let scale = max - min;
    let densities = raw.iter().map(|&v| ((v.into() - min) / scale) as f32).collect();
    Ok(Volume { dims, spacing, densities, raw_range: (min, max) })
}

pub fn world_to_voxel(spacing: [f64; 3], p: [f64; 3]) -> [f64; 3] {
    [p[0] / spacing[0], p[1] / spacing[1], p[2] / spacing[2]]
}

pub fn voxel_to_world(spacing: [f64; 3], c: [f64; 3]) -> [f64; 3] {
    [c[0] * spacing[0], c[1] * spacing[1], c[2] * spacing[2]]
}

/// Axis-aligned plane of densities. `grid` is row-major with u fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice2D {
    pub axis: Axis,
    pub index: usize,
    pub width: usize,
    pub height: usize,
    pub grid: Vec<f32>,
    pub spacing: [f64; 2],
}

impl Slice2D {
    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.grid[u + self.width * v]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_three_values() {
        let v = normalize_minmax(&[10.0, 20.0, 30.0], [3, 1, 1], [1.0; 3]).unwrap();
        assert_eq!(v.densities(), &[0.0, 0.5, 1.0]);
        assert_eq!(v.raw_range(), (10.0, 30.0));
    }

    #[test]
    fn normalize_identity_for_unit_range() {
        let raw = [0.0f32, 0.25, 1.0, 0.75];
        let v = normalize_minmax(&raw, [2, 2, 1], [1.0; 3]).unwrap();
        assert_eq!(v.densities(), &raw);
    }

    #[test]
    fn normalize_constant_fails() {
        let err = normalize_minmax(&[7.0; 8], [2, 2, 2], [1.0; 3]).unwrap_err();
        assert!(matches!(err, Error::ConstantVolume));
    }

    #[test]
    fn normalize_dims_mismatch() {
        let err = normalize_minmax(&[1.0, 2.0], [3, 1, 1], [1.0; 3]).unwrap_err();
        assert!(matches!(err, Error::GridSize { .. }));
    }

    #[test]
    fn window_examples() {
        let w = DensityWindow::new(0.2, 0.6).unwrap();
        assert!((apply_window(0.4, w) - 0.5).abs() < 1e-12);
        assert_eq!(apply_window(0.1, w), 0.0);
        assert_eq!(apply_window(0.2, w), 0.0);
        assert_eq!(apply_window(0.6, w), 1.0);
        assert_eq!(apply_window(0.37, DensityWindow::FULL), 0.37);
        assert!(DensityWindow::new(0.5, 0.5).is_err());
        assert!(DensityWindow::new(-0.1, 0.5).is_err());
        assert_eq!("0.2,0.6".parse::<DensityWindow>().unwrap(), w);
    }

    #[test]
    fn slice_of_2x2x2() {
        let v = Volume::from_fn([2, 2, 2], [1.0; 3], |[x, y, z]| (x + 2 * y + 4 * z) as f32 / 7.0)
            .unwrap();
        let s = v.extract_slice(Axis::Transverse, 0).unwrap();
        assert_eq!((s.width, s.height), (2, 2));
        assert_eq!(s.grid, vec![0.0, 1.0 / 7.0, 2.0 / 7.0, 3.0 / 7.0]);
        let err = v.extract_slice(Axis::Transverse, 2).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { index: 2, len: 2, .. }));
    }

    #[test]
    fn slice_of_z_ramp_is_uniform() {
        let nz = 5;
        let v = Volume::from_fn([3, 4, nz], [1.0; 3], |[_, _, z]| z as f32 / (nz - 1) as f32).unwrap();
        for k in 0..nz {
            let s = v.extract_slice(Axis::Transverse, k).unwrap();
            let expected = k as f32 / (nz - 1) as f32;
            assert!(s.grid.iter().all(|&d| d == expected));
        }
    }

    #[test]
    fn sagittal_and_coronal_shapes() {
        let v = Volume::from_fn([3, 4, 5], [1.0, 2.0, 3.0], |_| 0.5).unwrap();
        let s = v.extract_slice(Axis::Sagittal, 2).unwrap();
        assert_eq!((s.width, s.height, s.spacing), (4, 5, [2.0, 3.0]));
        let c = v.extract_slice(Axis::Coronal, 3).unwrap();
        assert_eq!((c.width, c.height, c.spacing), (3, 5, [1.0, 3.0]));
        assert!(v.extract_slice(Axis::Sagittal, 3).is_err());
    }

    #[test]
    fn world_voxel_examples() {
        assert_eq!(world_to_voxel([1.0, 1.0, 3.0], [0.0; 3]), [0.0; 3]);
        assert_eq!(world_to_voxel([1.0, 1.0, 3.0], [2.0, 1.0, 6.0]), [2.0, 1.0, 2.0]);
    }

    #[test]
    fn trilinear_examples() {
        let v = Volume::from_fn([2, 1, 1], [1.0; 3], |[x, _, _]| x as f32).unwrap();
        assert_eq!(v.sample_trilinear([0.5, 0.0, 0.0], DensityWindow::FULL), 0.5);
        assert_eq!(v.sample_trilinear([1.0, 0.0, 0.0], DensityWindow::FULL), 1.0);
        assert_eq!(v.sample_trilinear([0.0, 0.0, 0.0], DensityWindow::FULL), 0.0);
        assert_eq!(v.sample_trilinear([50.0, -3.0, 9.0], DensityWindow::FULL), 0.0);
        assert_eq!(v.sample_trilinear([1.0001, 0.0, 0.0], DensityWindow::FULL), 0.0);
        let w = DensityWindow::new(0.25, 0.75).unwrap();
        assert_eq!(v.sample_trilinear([0.5, 0.0, 0.0], w), 0.5);
    }

    proptest! {
        #[test]
        fn normalization_is_order_preserving(raw in prop::collection::vec(0u16..4096, 8)) {
            prop_assume!(raw.iter().min() != raw.iter().max());
            let v = normalize_minmax(&raw, [2, 2, 2], [1.0; 3]).unwrap();
            for i in 0..8 {
                for j in 0..8 {
                    if raw[i] < raw[j] {
                        prop_assert!(v.densities()[i] < v.densities()[j]);
                    }
                }
            }
            prop_assert!(v.densities().iter().all(|d| (0.0..=1.0).contains(d)));
        }

        #[test]
        fn window_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0, lo in 0.0f64..0.5, width in 0.01f64..0.5) {
            let w = DensityWindow::new(lo, lo + width).unwrap();
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(w.apply(a) <= w.apply(b));
            prop_assert_eq!(w.apply(lo), 0.0);
            prop_assert_eq!(w.apply(lo + width), 1.0);
        }

        #[test]
        fn voxel_world_round_trip(x in 0usize..500, y in 0usize..500, z in 0usize..500,
                                  sx in 0.1f64..5.0, sy in 0.1f64..5.0, sz in 0.1f64..5.0) {
            let s = [sx, sy, sz];
            let c = [x as f64, y as f64, z as f64];
            let back = world_to_voxel(s, voxel_to_world(s, c));
            for i in 0..3 {
                prop_assert!((back[i] - c[i]).abs() < 1e-9);
                prop_assert_eq!(back[i].round(), c[i]);
            }
        }

        #[test]
        fn slices_tile_the_volume(seed in any::<u64>(), nx in 1usize..6, ny in 1usize..6, nz in 1usize..6) {
            let mut s = seed;
            let v = Volume::from_fn([nx, ny, nz], [1.0; 3], |_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 40) as f32 / (1u64 << 24) as f32
            }).unwrap();
            for axis in Axis::ALL {
                let mut rebuilt = vec![f32::NAN; v.len()];
                for k in 0..v.axis_len(axis) {
                    let sl = v.extract_slice(axis, k).unwrap();
                    for vv in 0..sl.height {
                        for u in 0..sl.width {
                            rebuilt[v.index(axis.voxel(k, u, vv))] = sl.get(u, vv);
                        }
                    }
                }
                prop_assert_eq!(&rebuilt[..], v.densities());
            }
        }

        #[test]
        fn trilinear_bounded_by_stencil(seed in any::<u64>(), px in 0.0f64..3.0, py in 0.0f64..3.0, pz in 0.0f64..3.0) {
            let mut s = seed;
            let v = Volume::from_fn([4, 4, 4], [1.0; 3], |_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 40) as f32 / (1u64 << 24) as f32
            }).unwrap();
            let b = [px.floor() as usize, py.floor() as usize, pz.floor() as usize];
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for dz in 0..2 { for dy in 0..2 { for dx in 0..2 {
                let d = v.get([(b[0] + dx).min(3), (b[1] + dy).min(3), (b[2] + dz).min(3)]) as f64;
                lo = lo.min(d);
                hi = hi.max(d);
            }}}
            let d = v.sample_trilinear([px, py, pz], DensityWindow::FULL);
            prop_assert!(d >= lo - 1e-12 && d <= hi + 1e-12);
        }
    }
}
