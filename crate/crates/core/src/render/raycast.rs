use rayon::prelude::*;

use super::camera::Camera;
use super::composite::Accumulated;
use super::image::Frame;
use super::tf::{Rgba, TransferFunction};
use crate::annotate::LabelVolume;
use crate::error::Result;
use crate::geom::{Pose, Ray, Vec3};
use crate::volume::{DensityWindow, Volume};

/// Samples per ray.
pub const DEFAULT_STEPS: usize = 256;
/// Accumulated opacity at which a ray may stop early.
pub const EARLY_TERMINATION_ALPHA: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    pub steps: usize,
    /// `None` composites every sample.
    pub early_termination: Option<f64>,
    /// Labeled samples are blended toward `rgb` (at full opacity) by `a`.
    pub label_tint: Rgba,
    pub pose: Pose,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            steps: DEFAULT_STEPS,
            early_termination: Some(EARLY_TERMINATION_ALPHA),
            label_tint: Rgba::new(1.0, 0.0, 0.0, 0.6),
            pose: Pose::default(),
        }
    }
}

impl RenderSettings {
    /// Reference settings: no early termination.
    pub fn unterminated() -> Self {
        RenderSettings { early_termination: None, ..Default::default() }
    }
}

/// Entry/exit parameters of `ray` through the box `[0, extent]`, clipped to `t >= 0`.
pub fn clip_to_box(ray: &Ray, extent: [f64; 3]) -> Option<(f64, f64)> {
    let mut t_near = 0.0f64;
    let mut t_far = f64::INFINITY;
    for i in 0..3 {
        let (o, d) = (ray.origin[i], ray.dir[i]);
        if d.abs() < 1e-15 {
            if o < 0.0 || o > extent[i] {
                return None;
            }
            continue;
        }
        let t1 = (0.0 - o) / d;
        let t2 = (extent[i] - o) / d;
        t_near = t_near.max(t1.min(t2));
        t_far = t_far.min(t1.max(t2));
    }
    (t_far >= t_near).then_some((t_near, t_far))
}

/// Shared read-only ray evaluation state.
pub struct RayCaster<'a> {
    volume: &'a Volume,
    labels: Option<&'a LabelVolume>,
    tf: &'a TransferFunction,
    window: DensityWindow,
    settings: RenderSettings,
    pivot: Vec3,
    extent: [f64; 3],
    inv_spacing: [f64; 3],
    tint_target: Rgba,
}

impl<'a> RayCaster<'a> {
    pub fn new(
        volume: &'a Volume,
        labels: Option<&'a LabelVolume>,
        tf: &'a TransferFunction,
        window: DensityWindow,
        settings: RenderSettings,
    ) -> Result<Self> {
        if let Some(l) = labels {
            l.check_dims(volume.dims())?;
        }
        let s = volume.spacing();
        let t = settings.label_tint;
        Ok(RayCaster {
            volume,
            labels,
            tf,
            window,
            settings,
            pivot: Vec3::from(volume.center_mm()),
            extent: volume.extent_mm(),
            inv_spacing: [1.0 / s[0], 1.0 / s[1], 1.0 / s[2]],
            tint_target: Rgba::new(t.r, t.g, t.b, 1.0),
        })
    }

    /// Evenly spaced sample positions (voxel coordinates) on the clipped ray.
    fn sample_points(&self, ray: &Ray) -> Option<impl Iterator<Item = [f64; 3]> + '_> {
        let local = self.settings.pose.ray_to_local(ray, self.pivot);
        let (t0, t1) = clip_to_box(&local, self.extent)?;
        let n = self.settings.steps.max(1);
        let dt = (t1 - t0) / n as f64;
        let o = local.origin;
        let d = local.dir;
        let inv = self.inv_spacing;
        Some((0..n).map(move |k| {
            let t = t0 + (k as f64 + 0.5) * dt;
            [(o[0] + d[0] * t) * inv[0], (o[1] + d[1] * t) * inv[1], (o[2] + d[2] * t) * inv[2]]
        }))
    }

    #[inline]
    fn classify(&self, p: [f64; 3]) -> Rgba {
        let density = self.volume.sample_trilinear(p, self.window);
        let c = self.tf.eval(density);
        match self.labels {
            Some(labels) if self.is_labeled(labels, p) => c.lerp(&self.tint_target, self.settings.label_tint.a),
            _ => c,
        }
    }

    #[inline]
    fn is_labeled(&self, labels: &LabelVolume, p: [f64; 3]) -> bool {
        let dims = labels.dims();
        let mut idx = [0usize; 3];
        for i in 0..3 {
            let r = p[i].round();
            if !(r >= 0.0 && r <= (dims[i] - 1) as f64) {
                return false;
            }
            idx[i] = r as usize;
        }
        labels.get(idx)
    }

    /// Classified samples along the ray, nearest first. Empty on a miss.
    pub fn samples(&self, ray: &Ray) -> Vec<Rgba> {
        match self.sample_points(ray) {
            Some(points) => points.map(|p| self.classify(p)).collect(),
            None => Vec::new(),
        }
    }

    pub fn cast(&self, ray: &Ray) -> Accumulated {
        let mut acc = Accumulated::EMPTY;
        let Some(points) = self.sample_points(ray) else {
            return acc;
        };
        let stop = self.settings.early_termination.unwrap_or(f64::INFINITY);
        for p in points {
            acc.push_behind(self.classify(p));
            if acc.alpha >= stop {
                break;
            }
        }
        acc
    }
}

/// One ray through `volume` with default settings (256 samples, early termination).
pub fn cast_ray(volume: &Volume, tf: &TransferFunction, window: DensityWindow, ray: &Ray) -> Accumulated {
    RayCaster::new(volume, None, tf, window, RenderSettings::default())
        .expect("no labels to mismatch")
        .cast(ray)
}

/// Renders one ray per pixel. Rows are distributed over the rayon pool; each
/// pixel is written by exactly one task, so output is independent of thread count.
pub fn render_image(
    volume: &Volume,
    labels: Option<&LabelVolume>,
    tf: &TransferFunction,
    window: DensityWindow,
    camera: &Camera,
    settings: RenderSettings,
) -> Result<Frame> {
    let caster = RayCaster::new(volume, labels, tf, window, settings)?;
    let (width, height) = camera.size();
    let mut pixels = vec![Accumulated::EMPTY; width * height];
    pixels.par_chunks_mut(width).enumerate().for_each(|(py, row)| {
        for (px, out) in row.iter_mut().enumerate() {
            *out = caster.cast(&camera.ray(px, py));
        }
    });
    Ok(Frame::new(width, height, pixels))
}
