//! Shape-based inter-slice interpolation.
//!
//! Each key slice becomes a signed distance field in millimeters, and every
//! intermediate slice is the negative region of the linear blend of the two
//! bracketing fields.

use rayon::prelude::*;

use crate::annotate::{LabelVolume, MaskSlice};
use crate::error::{Error, Result};
use crate::volume::{Axis, Volume};

/// Negative inside, positive outside, in millimeters.
///
/// A value is half the Euclidean distance from the voxel center to the nearest
/// center of the opposite label, which places the zero level midway between
/// set and unset centers (the 0.5 iso-line of the mask). Centers are never
/// exactly zero, so `value < 0` reproduces the mask. A mask with no set voxels
/// holds `+diagonal` everywhere, one with no unset voxels `-diagonal`, where
/// `diagonal` is the slice's diagonal length in mm; finite fields never exceed
/// that bound, so an empty key pulls interpolated shapes toward extinction.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedDistanceField {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl SignedDistanceField {
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[u + self.width * v]
    }

    pub fn to_mask(&self) -> MaskSlice {
        MaskSlice { width: self.width, height: self.height, bits: self.values.iter().map(|&d| d < 0.0).collect() }
    }
}

/// Sentinel magnitude for a slice with no boundary.
pub fn slice_diagonal(width: usize, height: usize, spacing: [f64; 2]) -> f64 {
    ((width as f64 * spacing[0]).powi(2) + (height as f64 * spacing[1]).powi(2)).sqrt()
}

/// Squared distance transform of one line: `out[p] = min_q (s (p - q))^2 + f[q]`.
/// Infinite entries of `f` are not features.
fn edt_1d(f: &[f64], s: f64, out: &mut [f64], verts: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    let s2 = s * s;
    verts.clear();
    bounds.clear();
    let meet = |q: usize, r: usize| {
        let (q, r) = (q as f64, r as f64);
        let (fq, fr) = (f[q as usize], f[r as usize]);
        ((fr + s2 * r * r) - (fq + s2 * q * q)) / (2.0 * s2 * (r - q))
    };
    for q in 0..f.len() {
        if !f[q].is_finite() {
            continue;
        }
        while let Some(&last) = verts.last() {
            let x = meet(last, q);
            if bounds.last().is_some_and(|&b| x <= b) {
                verts.pop();
                bounds.pop();
            } else {
                bounds.push(x);
                break;
            }
        }
        if verts.is_empty() {
            bounds.clear();
        }
        verts.push(q);
    }
    if verts.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (p, o) in out.iter_mut().enumerate() {
        let x = p as f64;
        while k < bounds.len() && bounds[k] < x {
            k += 1;
        }
        let q = verts[k];
        let d = s * (x - q as f64);
        *o = d * d + f[q];
    }
}

/// Exact squared Euclidean distance (mm^2) from each center to the nearest
/// center where `feature` is true; infinite when there is none.
fn squared_distance_to(slice: &MaskSlice, feature: bool, spacing: [f64; 2]) -> Vec<f64> {
    let (w, h) = (slice.width, slice.height);
    let mut grid: Vec<f64> =
        slice.bits.iter().map(|&b| if b == feature { 0.0 } else { f64::INFINITY }).collect();
    let (mut verts, mut bounds) = (Vec::new(), Vec::new());
    let mut line = vec![0.0; w.max(h)];
    let mut out = vec![0.0; w.max(h)];
    for v in 0..h {
        let row = &mut grid[v * w..(v + 1) * w];
        line[..w].copy_from_slice(row);
        edt_1d(&line[..w], spacing[0], &mut out[..w], &mut verts, &mut bounds);
        row.copy_from_slice(&out[..w]);
    }
    for u in 0..w {
        for v in 0..h {
            line[v] = grid[u + w * v];
        }
        edt_1d(&line[..h], spacing[1], &mut out[..h], &mut verts, &mut bounds);
        for v in 0..h {
            grid[u + w * v] = out[v];
        }
    }
    grid
}

pub fn signed_distance(mask: &MaskSlice, spacing: [f64; 2]) -> SignedDistanceField {
    let (w, h) = (mask.width, mask.height);
    let diagonal = slice_diagonal(w, h, spacing);
    let count = mask.count();
    let values = if count == 0 {
        vec![diagonal; w * h]
    } else if count == w * h {
        vec![-diagonal; w * h]
    } else {
        let to_set = squared_distance_to(mask, true, spacing);
        let to_unset = squared_distance_to(mask, false, spacing);
        mask.bits
            .iter()
            .enumerate()
            .map(|(i, &b)| if b { -0.5 * to_unset[i].sqrt() } else { 0.5 * to_set[i].sqrt() })
            .collect()
    };
    SignedDistanceField { width: w, height: h, values }
}

/// Blend of two fields at `t` in [0, 1], thresholded at zero.
pub fn blend(a: &SignedDistanceField, b: &SignedDistanceField, t: f64) -> MaskSlice {
    weighted(a, b, 1.0 - t, t)
}

/// Sign of `wa * a + wb * b`. Slices between keys use the integer distances
/// to the keys as weights, so a->b and b->a agree exactly, ties included.
fn weighted(a: &SignedDistanceField, b: &SignedDistanceField, wa: f64, wb: f64) -> MaskSlice {
    let bits = a.values.iter().zip(&b.values).map(|(&x, &y)| wa * x + wb * y < 0.0).collect();
    MaskSlice { width: a.width, height: a.height, bits }
}

/// Fills the slices strictly between consecutive keys along `axis`. Key slices
/// and slices outside `[first, last]` are left untouched.
pub fn interpolate_slices(m: &mut LabelVolume, v: &Volume, axis: Axis, keys: &[usize]) -> Result<()> {
    m.check_dims(v.dims())?;
    if keys.len() < 2 {
        return Err(Error::NeedTwoKeys);
    }
    if keys.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::UnsortedKeys);
    }
    let len = m.axis_len(axis);
    let last = keys[keys.len() - 1];
    if last >= len {
        return Err(Error::IndexOutOfRange { axis, index: last, len });
    }
    let spacing = v.slice_spacing(axis);
    let fields: Vec<SignedDistanceField> = keys
        .iter()
        .map(|&k| m.mask_slice(axis, k).map(|s| signed_distance(&s, spacing)))
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = keys
        .windows(2)
        .enumerate()
        .flat_map(|(i, w)| (w[0] + 1..w[1]).map(move |j| (i, j)))
        .collect();
    let filled: Vec<(usize, MaskSlice)> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (keys[i], keys[i + 1]);
            (j, weighted(&fields[i], &fields[i + 1], (b - j) as f64, (j - a) as f64))
        })
        .collect();
    for (j, slice) in &filled {
        m.write_slice(axis, *j, slice)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// All-pairs oracle for the signed field.
    fn brute_sdf(mask: &MaskSlice, spacing: [f64; 2]) -> Vec<f64> {
        let (w, h) = (mask.width, mask.height);
        let mut out = Vec::with_capacity(w * h);
        for v in 0..h {
            for u in 0..w {
                let me = mask.get(u, v);
                let mut best = f64::INFINITY;
                for vv in 0..h {
                    for uu in 0..w {
                        if mask.get(uu, vv) != me {
                            let dx = (u as f64 - uu as f64) * spacing[0];
                            let dy = (v as f64 - vv as f64) * spacing[1];
                            best = best.min(dx * dx + dy * dy);
                        }
                    }
                }
                out.push(if me { -0.5 * best.sqrt() } else { 0.5 * best.sqrt() });
            }
        }
        out
    }

    fn disc(w: usize, h: usize, c: [f64; 2], r: f64) -> MaskSlice {
        MaskSlice::from_fn(w, h, |u, v| (u as f64 - c[0]).powi(2) + (v as f64 - c[1]).powi(2) <= r * r)
    }

    #[test]
    fn single_voxel_field() {
        let mut s = MaskSlice::new(5, 5);
        s.set(2, 2, true);
        let f = signed_distance(&s, [1.0, 1.0]);
        assert_eq!(f.get(2, 2), -0.5);
        for (u, v) in [(1, 2), (3, 2), (2, 1), (2, 3)] {
            assert_eq!(f.get(u, v), 0.5);
        }
        assert!((f.get(0, 0) - 0.5 * 8f64.sqrt()).abs() < 1e-12);
        assert_eq!(f.to_mask(), s);
    }

    #[test]
    fn empty_and_full_sentinels() {
        let e = signed_distance(&MaskSlice::new(4, 3), [1.0, 2.0]);
        let diag = slice_diagonal(4, 3, [1.0, 2.0]);
        assert!(e.values.iter().all(|&d| d == diag));
        let full = MaskSlice::from_fn(4, 3, |_, _| true);
        assert!(signed_distance(&full, [1.0, 2.0]).values.iter().all(|&d| d <= 0.0));
    }

    #[test]
    fn identical_keys_reproduce_themselves() {
        let v = Volume::from_fn([16, 16, 9], [1.0; 3], |_| 0.0).unwrap();
        let circle = disc(16, 16, [7.3, 8.1], 4.5);
        let mut m = LabelVolume::for_volume(&v);
        m.write_slice(Axis::Transverse, 0, &circle).unwrap();
        m.write_slice(Axis::Transverse, 8, &circle).unwrap();
        interpolate_slices(&mut m, &v, Axis::Transverse, &[0, 8]).unwrap();
        for k in 0..9 {
            assert_eq!(m.mask_slice(Axis::Transverse, k).unwrap(), circle, "slice {k}");
        }
    }

    #[test]
    fn key_validation() {
        let v = Volume::from_fn([4, 4, 6], [1.0; 3], |_| 0.0).unwrap();
        let mut m = LabelVolume::for_volume(&v);
        assert!(matches!(interpolate_slices(&mut m, &v, Axis::Transverse, &[2]), Err(Error::NeedTwoKeys)));
        assert!(matches!(interpolate_slices(&mut m, &v, Axis::Transverse, &[3, 1]), Err(Error::UnsortedKeys)));
        assert!(matches!(interpolate_slices(&mut m, &v, Axis::Transverse, &[1, 1]), Err(Error::UnsortedKeys)));
        assert!(matches!(
            interpolate_slices(&mut m, &v, Axis::Transverse, &[1, 6]),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn empty_key_shrinks_to_nothing() {
        let v = Volume::from_fn([20, 20, 9], [1.0; 3], |_| 0.0).unwrap();
        let mut m = LabelVolume::for_volume(&v);
        m.write_slice(Axis::Transverse, 0, &disc(20, 20, [10.0, 10.0], 6.0)).unwrap();
        interpolate_slices(&mut m, &v, Axis::Transverse, &[0, 8]).unwrap();
        let counts: Vec<usize> = (0..9).map(|k| m.mask_slice(Axis::Transverse, k).unwrap().count()).collect();
        assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{counts:?}");
        assert!(counts[0] > 0);
        assert_eq!(counts[8], 0);
    }

    #[test]
    fn concentric_discs_nest_monotonically() {
        let v = Volume::from_fn([32, 32, 11], [1.0; 3], |_| 0.0).unwrap();
        let mut m = LabelVolume::for_volume(&v);
        m.write_slice(Axis::Transverse, 0, &disc(32, 32, [15.5, 15.5], 4.0)).unwrap();
        m.write_slice(Axis::Transverse, 10, &disc(32, 32, [15.5, 15.5], 12.0)).unwrap();
        interpolate_slices(&mut m, &v, Axis::Transverse, &[0, 10]).unwrap();
        for k in 0..10 {
            let a = m.mask_slice(Axis::Transverse, k).unwrap();
            let b = m.mask_slice(Axis::Transverse, k + 1).unwrap();
            assert!(a.bits.iter().zip(&b.bits).all(|(x, y)| !x || *y), "slice {k} not inside {}", k + 1);
        }
    }

    proptest! {
        #[test]
        fn field_matches_brute_force(w in 1usize..10, h in 1usize..10, seed in any::<u64>(),
                                     su in 0.4f64..2.5, sv in 0.4f64..2.5) {
            let mut x = seed | 1;
            let s = MaskSlice::from_fn(w, h, |_, _| { x ^= x << 13; x ^= x >> 7; x ^= x << 17; x % 3 == 0 });
            prop_assume!(s.count() > 0 && s.count() < w * h);
            let f = signed_distance(&s, [su, sv]);
            let oracle = brute_sdf(&s, [su, sv]);
            for (a, b) in f.values.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
            prop_assert_eq!(f.to_mask(), s);
        }

        #[test]
        fn interpolation_is_symmetric(seed in any::<u64>(), gap in 2usize..7) {
            let n = gap + 1;
            let v = Volume::from_fn([12, 12, n], [1.0, 1.0, 2.0], |_| 0.0).unwrap();
            let mut x = seed | 1;
            let mut rnd = || { x ^= x << 13; x ^= x >> 7; x ^= x << 17; (x % 1000) as f64 / 1000.0 };
            let a = disc(12, 12, [3.0 + 6.0 * rnd(), 3.0 + 6.0 * rnd()], 1.0 + 4.0 * rnd());
            let b = disc(12, 12, [3.0 + 6.0 * rnd(), 3.0 + 6.0 * rnd()], 1.0 + 4.0 * rnd());
            let mut fwd = LabelVolume::for_volume(&v);
            fwd.write_slice(Axis::Transverse, 0, &a).unwrap();
            fwd.write_slice(Axis::Transverse, gap, &b).unwrap();
            interpolate_slices(&mut fwd, &v, Axis::Transverse, &[0, gap]).unwrap();
            let mut rev = LabelVolume::for_volume(&v);
            rev.write_slice(Axis::Transverse, 0, &b).unwrap();
            rev.write_slice(Axis::Transverse, gap, &a).unwrap();
            interpolate_slices(&mut rev, &v, Axis::Transverse, &[0, gap]).unwrap();
            for k in 0..n {
                prop_assert_eq!(fwd.mask_slice(Axis::Transverse, k).unwrap(),
                                rev.mask_slice(Axis::Transverse, gap - k).unwrap());
            }
        }
    }
}
