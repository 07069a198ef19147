//! Volume placement geometry: two-ray placement and absolute rotation mapping.
//!
//! A [`Pose`] moves the volume in world space about a pivot (the lattice
//! center): `world = pivot + translation + scale * R * (local - pivot)`.
//! The identity pose leaves local millimeter coordinates unchanged.

use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

const UNIT_TOLERANCE: f64 = 1e-6;
const PARALLEL_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
}

impl Ray {
    /// Builds a ray, normalizing `dir`.
    pub fn new(origin: Vec3, dir: Vec3) -> Result<Self> {
        let n = dir.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidCamera(format!("ray direction {dir:?} has no length")));
        }
        Ok(Ray { origin, dir: dir / n })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseWire", into = "PoseWire")]
pub struct Pose {
    pub translation: Vec3,
    pub rotation: UnitQuaternion<f64>,
    pub scale: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Pose { translation: Vec3::zeros(), rotation: UnitQuaternion::identity(), scale: 1.0 }
    }
}

impl Pose {
    pub fn is_identity(&self) -> bool {
        self.translation == Vec3::zeros()
            && self.rotation.quaternion().coords == UnitQuaternion::identity().quaternion().coords
            && self.scale == 1.0
    }

    pub fn to_world(&self, local: Vec3, pivot: Vec3) -> Vec3 {
        pivot + self.translation + self.rotation * (local - pivot) * self.scale
    }

    pub fn to_local(&self, world: Vec3, pivot: Vec3) -> Vec3 {
        pivot + self.rotation.inverse() * (world - pivot - self.translation) / self.scale
    }

    /// Maps a world ray into the volume's local frame. The direction is
    /// re-normalized, so parametric distances differ by `scale`.
    pub fn ray_to_local(&self, ray: &Ray, pivot: Vec3) -> Ray {
        if self.is_identity() {
            return *ray;
        }
        let origin = self.to_local(ray.origin, pivot);
        let dir = (self.rotation.inverse() * ray.dir).normalize();
        Ray { origin, dir }
    }
}

/// Wire form: rotation as `[w, x, y, z]`.
#[derive(Serialize, Deserialize)]
struct PoseWire {
    translation: [f64; 3],
    rotation: [f64; 4],
    scale: f64,
}

impl TryFrom<PoseWire> for Pose {
    type Error = Error;

    fn try_from(w: PoseWire) -> Result<Self> {
        let [qw, qx, qy, qz] = w.rotation;
        let rotation = unit_quaternion(Quaternion::new(qw, qx, qy, qz))?;
        if !(w.scale > 0.0 && w.scale.is_finite()) {
            return Err(Error::InvalidPose(format!("scale {} must be positive", w.scale)));
        }
        Ok(Pose { translation: Vec3::from(w.translation), rotation, scale: w.scale })
    }
}

impl From<Pose> for PoseWire {
    fn from(p: Pose) -> Self {
        let q = p.rotation.quaternion();
        PoseWire {
            translation: p.translation.into(),
            rotation: [q.w, q.i, q.j, q.k],
            scale: p.scale,
        }
    }
}

/// Accepts `q` as a rotation only if it is unit length within 1e-6. The
/// coefficients are kept as given so that stored poses round-trip exactly.
pub fn unit_quaternion(q: Quaternion<f64>) -> Result<UnitQuaternion<f64>> {
    let n = q.norm();
    if (n - 1.0).abs() > UNIT_TOLERANCE || !n.is_finite() {
        return Err(Error::NonUnitQuaternion(n));
    }
    Ok(Unit::new_unchecked(q))
}

/// Midpoint of the shortest segment joining two rays (parameters constrained
/// to `t, s >= 0`).
pub fn shortest_segment_midpoint(a: &Ray, b: &Ray) -> Result<Vec3> {
    let w0 = a.origin - b.origin;
    let ab = a.dir.dot(&b.dir);
    let aa = a.dir.norm_squared();
    let bb = b.dir.norm_squared();
    if a.dir.cross(&b.dir).norm() < PARALLEL_EPS {
        return Err(Error::ParallelRays);
    }
    let d = a.dir.dot(&w0);
    let e = b.dir.dot(&w0);
    let denom = aa * bb - ab * ab;
    let t = (ab * e - bb * d) / denom;
    let s = (aa * e - ab * d) / denom;

    let (t, s) = if t >= 0.0 && s >= 0.0 {
        (t, s)
    } else {
        // The distance is a convex quadratic in (t, s); the constrained minimum
        // lies on the boundary t = 0 or s = 0.
        let on_s0 = ((-d / aa).max(0.0), 0.0);
        let on_t0 = (0.0, (e / bb).max(0.0));
        let dist = |(t, s): (f64, f64)| (a.at(t) - b.at(s)).norm_squared();
        if dist(on_s0) <= dist(on_t0) {
            on_s0
        } else {
            on_t0
        }
    };
    Ok((a.at(t) + b.at(s)) * 0.5)
}

/// Absolute rotation mapping: the pose takes `anchor` as its rotation.
pub fn apply_rotation(pose: &Pose, anchor: Quaternion<f64>) -> Result<Pose> {
    let rotation = unit_quaternion(anchor)?;
    Ok(Pose { rotation, ..*pose })
}

pub fn set_translation(pose: &Pose, target: Vec3) -> Pose {
    Pose { translation: target, ..*pose }
}
