use std::str::FromStr;

use nalgebra::UnitQuaternion;

use crate::error::{Error, Result};
use crate::geom::{Ray, Vec3};

/// Orthographic camera. Pixel (0, 0) is the top-left corner of the image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    position: Vec3,
    view_dir: Vec3,
    up: Vec3,
    right: Vec3,
    width: usize,
    height: usize,
    world_width: f64,
}

impl Camera {
    pub fn look_at(
        position: Vec3,
        target: Vec3,
        up: Vec3,
        (width, height): (usize, usize),
        world_width: f64,
    ) -> Result<Self> {
        Camera::with_direction(position, target - position, up, (width, height), world_width)
    }

    pub fn with_direction(
        position: Vec3,
        view_dir: Vec3,
        up: Vec3,
        (width, height): (usize, usize),
        world_width: f64,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera(format!("image size {width}x{height}")));
        }
        if !(world_width > 0.0 && world_width.is_finite()) {
            return Err(Error::InvalidCamera(format!("world width {world_width}")));
        }
        let view_dir = view_dir
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidCamera("camera looks at its own position".into()))?;
        let right = view_dir
            .cross(&up)
            .try_normalize(1e-9)
            .ok_or_else(|| Error::InvalidCamera("up vector is parallel to the view direction".into()))?;
        let up = right.cross(&view_dir);
        Ok(Camera { position, view_dir, up, right, width, height, world_width })
    }

    /// Camera on a sphere around `center`. Azimuth is measured in the xy plane
    /// from +x toward +y; elevation toward +z. At (0, 90) it looks down -z.
    pub fn orbit(
        center: Vec3,
        azimuth_deg: f64,
        elevation_deg: f64,
        distance: f64,
        size: (usize, usize),
        world_width: f64,
    ) -> Result<Self> {
        let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
        let offset = Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()) * distance;
        // +z is parallel to the view direction at the poles.
        let up = if el.cos().abs() < 1e-6 { Vec3::y() } else { Vec3::z() };
        Camera::look_at(center + offset, center, up, size, world_width)
    }

    /// Orbit camera framing a box of `extent` mm centered at `center`. The
    /// default plane width is 1.2 times the box diagonal.
    pub fn framing(
        center: Vec3,
        extent: [f64; 3],
        azimuth_deg: f64,
        elevation_deg: f64,
        size: (usize, usize),
        world_width: Option<f64>,
    ) -> Result<Self> {
        let diag = Vec3::from(extent).norm().max(1.0);
        Camera::orbit(center, azimuth_deg, elevation_deg, 2.0 * diag, size, world_width.unwrap_or(1.2 * diag))
    }

    /// Rigidly rotates the camera about `pivot`.
    pub fn rotated_about(&self, pivot: Vec3, q: &UnitQuaternion<f64>) -> Self {
        Camera {
            position: pivot + q * (self.position - pivot),
            view_dir: q * self.view_dir,
            up: q * self.up,
            right: q * self.right,
            ..*self
        }
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn world_width(&self) -> f64 {
        self.world_width
    }

    pub fn world_height(&self) -> f64 {
        self.world_width * self.height as f64 / self.width as f64
    }

    pub fn position(&self) -> Vec3 {
        self.position
    }

    pub fn view_dir(&self) -> Vec3 {
        self.view_dir
    }

    pub fn up(&self) -> Vec3 {
        self.up
    }

    /// Ray through the center of pixel `(px, py)`.
    pub fn ray(&self, px: usize, py: usize) -> Ray {
        let x = ((px as f64 + 0.5) / self.width as f64 - 0.5) * self.world_width;
        let y = (0.5 - (py as f64 + 0.5) / self.height as f64) * self.world_height();
        Ray { origin: self.position + self.right * x + self.up * y, dir: self.view_dir }
    }
}

/// Query-string form: `px,py,pz,tx,ty,tz,ux,uy,uz,width,height,world_width`
/// (position, look-at target, up vector, image size in pixels, plane width in mm).
impl FromStr for Camera {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("camera `{s}`: {e}")))
            .collect::<Result<_, _>>()?;
        if v.len() != 12 {
            return Err(format!("camera needs 12 comma-separated numbers, got {}", v.len()));
        }
        if v[9] < 1.0 || v[10] < 1.0 || v[9].fract() != 0.0 || v[10].fract() != 0.0 {
            return Err("camera image size must be positive integers".into());
        }
        Camera::look_at(
            Vec3::new(v[0], v[1], v[2]),
            Vec3::new(v[3], v[4], v[5]),
            Vec3::new(v[6], v[7], v[8]),
            (v[9] as usize, v[10] as usize),
            v[11],
        )
        .map_err(|e| e.to_string())
    }
}
