//! Synthetic volumes with analytic reference masks.

use crate::annotate::LabelVolume;
use crate::error::Result;
use crate::volume::Volume;

/// Axis-aligned ellipsoid in millimeters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub radii: [f64; 3],
}

impl Ellipsoid {
    /// Squared normalized radius; `<= 1` inside.
    pub fn level(&self, p: [f64; 3]) -> f64 {
        (0..3).map(|i| ((p[i] - self.center[i]) / self.radii[i]).powi(2)).sum()
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        self.level(p) <= 1.0
    }

    /// Voxels whose centers lie inside.
    pub fn mask(&self, dims: [usize; 3], spacing: [f64; 3]) -> LabelVolume {
        LabelVolume::from_fn(dims, |[x, y, z]| {
            self.contains([x as f64 * spacing[0], y as f64 * spacing[1], z as f64 * spacing[2]])
        })
    }

    /// Smooth blob: 0.1 background, rising from 0.6 at the surface to 0.9 at
    /// the center.
    pub fn volume(&self, dims: [usize; 3], spacing: [f64; 3]) -> Result<Volume> {
        Volume::from_fn(dims, spacing, |[x, y, z]| {
            let q = self.level([x as f64 * spacing[0], y as f64 * spacing[1], z as f64 * spacing[2]]);
            if q <= 1.0 {
                (0.6 + 0.3 * (1.0 - q)) as f32
            } else {
                0.1
            }
        })
    }
}

/// Ellipsoid phantom plus its analytic mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub shape: Ellipsoid,
    pub volume: Volume,
    pub reference: LabelVolume,
}

impl Phantom {
    pub fn ellipsoid(dims: [usize; 3], spacing: [f64; 3], radii: [f64; 3]) -> Result<Self> {
        let center = [0, 1, 2].map(|i| (dims[i] - 1) as f64 * spacing[i] / 2.0);
        let shape = Ellipsoid { center, radii };
        Ok(Phantom { shape, volume: shape.volume(dims, spacing)?, reference: shape.mask(dims, spacing) })
    }

    /// 48 x 48 x 40 voxels at 1 x 1 x 1.5 mm with radii 14, 10, 20 mm.
    pub fn standard() -> Self {
        Self::ellipsoid([48, 48, 40], [1.0, 1.0, 1.5], [14.0, 10.0, 20.0]).expect("standard phantom is valid")
    }
}

/// Centered cube of density 1 with half-width `half_mm`, 0 elsewhere.
pub fn cube_volume(n: usize, spacing: f64, half_mm: f64) -> Result<Volume> {
    let c = (n - 1) as f64 * spacing / 2.0;
    Volume::from_fn([n; 3], [spacing; 3], |p| {
        let inside = p.iter().all(|&i| (i as f64 * spacing - c).abs() <= half_mm);
        if inside { 1.0 } else { 0.0 }
    })
}

/// Voxels whose centers lie within `radius` mm of `center`.
pub fn sphere_mask(dims: [usize; 3], spacing: [f64; 3], center: [f64; 3], radius: f64) -> LabelVolume {
    Ellipsoid { center, radii: [radius; 3] }.mask(dims, spacing)
}

/// Smooth deterministic test pattern in [0, 1].
pub fn wave_volume(dims: [usize; 3], spacing: [f64; 3]) -> Result<Volume> {
    let c = [0, 1, 2].map(|i| (dims[i] - 1) as f64 / 2.0);
    let r = c[0].max(c[1]).max(c[2]).max(1.0);
    Volume::from_fn(dims, spacing, |[x, y, z]| {
        let d = ((x as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2) + (z as f64 - c[2]).powi(2)).sqrt() / r;
        let w = 0.5 + 0.5 * (6.0 * d).cos() * (1.0 - d).max(0.0);
        w.clamp(0.0, 1.0) as f32
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_phantom_is_centered() {
        let p = Phantom::standard();
        assert!(p.reference.count() > 0);
        assert_eq!(p.reference.dims(), p.volume.dims());
        let center = p.shape.center;
        assert_eq!(center, [23.5, 23.5, 29.25]);
        assert!(p.reference.get([24, 24, 20]));
        assert!(!p.reference.get([0, 0, 0]));
        assert_eq!(p.volume.get([0, 0, 0]), 0.1);
    }

    #[test]
    fn cube_is_binary() {
        let v = cube_volume(9, 1.0, 2.0);
        let v = v.unwrap();
        assert_eq!(v.get([4, 4, 4]), 1.0);
        assert_eq!(v.get([2, 2, 2]), 1.0);
        assert_eq!(v.get([1, 4, 4]), 0.0);
        assert_eq!(v.densities().iter().filter(|&&d| d == 1.0).count(), 125);
    }

    #[test]
    fn sphere_mask_counts_lattice_points() {
        // Integer points with x^2 + y^2 + z^2 <= 4: 1 + 6 + 12 + 8 + 6 = 33.
        let m = sphere_mask([5, 5, 5], [1.0; 3], [2.0, 2.0, 2.0], 2.0);
        assert_eq!(m.count(), 33);
    }
}
