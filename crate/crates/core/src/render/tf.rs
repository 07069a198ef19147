use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Straight (non-premultiplied) color with opacity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rgba {
    pub r: f64,
    pub g: f64,
    pub b: f64,
    pub a: f64,
}

impl Rgba {
    pub const TRANSPARENT: Rgba = Rgba { r: 0.0, g: 0.0, b: 0.0, a: 0.0 };

    pub const fn new(r: f64, g: f64, b: f64, a: f64) -> Self {
        Rgba { r, g, b, a }
    }

    pub const fn gray(v: f64, a: f64) -> Self {
        Rgba { r: v, g: v, b: v, a }
    }

    pub fn rgb(&self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }

    pub fn lerp(&self, other: &Rgba, t: f64) -> Rgba {
        Rgba {
            r: self.r + (other.r - self.r) * t,
            g: self.g + (other.g - self.g) * t,
            b: self.b + (other.b - self.b) * t,
            a: self.a + (other.a - self.a) * t,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.r, self.g, self.b, self.a].iter().all(|c| (0.0..=1.0).contains(c))
    }
}

impl std::str::FromStr for Rgba {
    type Err = String;

    /// `r,g,b,a` with components in [0, 1].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("color `{s}`: {e}")))
            .collect::<Result<_, _>>()?;
        let [r, g, b, a] = parts[..] else {
            return Err(format!("color `{s}` needs four components r,g,b,a"));
        };
        let c = Rgba { r, g, b, a };
        if !c.is_valid() {
            return Err(format!("color `{s}` has components outside [0, 1]"));
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub density: f64,
    pub color: [f64; 3],
    pub alpha: f64,
}

impl ControlPoint {
    pub fn rgba(&self) -> Rgba {
        Rgba { r: self.color[0], g: self.color[1], b: self.color[2], a: self.alpha }
    }
}

/// Piecewise-linear 1D map from density to color and opacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TfWire", into = "TfWire")]
pub struct TransferFunction {
    points: Vec<ControlPoint>,
}

#[derive(Serialize, Deserialize)]
struct TfWire {
    points: Vec<ControlPoint>,
}

impl TryFrom<TfWire> for TransferFunction {
    type Error = Error;

    fn try_from(w: TfWire) -> Result<Self> {
        TransferFunction::new(w.points)
    }
}

impl From<TransferFunction> for TfWire {
    fn from(tf: TransferFunction) -> Self {
        TfWire { points: tf.points }
    }
}

impl TransferFunction {
    pub fn new(points: Vec<ControlPoint>) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidTransferFunction(m.to_string()));
        if points.len() < 2 {
            return bad("needs at least two control points");
        }
        if points[0].density != 0.0 || points[points.len() - 1].density != 1.0 {
            return bad("control points must span densities 0 to 1");
        }
        if points.windows(2).any(|w| !(w[0].density < w[1].density)) {
            return bad("control point densities must be strictly increasing");
        }
        if points.iter().any(|p| !p.rgba().is_valid()) {
            return bad("colors and alphas must lie in [0, 1]");
        }
        Ok(TransferFunction { points })
    }

    /// Black transparent at 0 to white opaque at 1.
    pub fn grayscale_ramp() -> Self {
        TransferFunction {
            points: vec![
                ControlPoint { density: 0.0, color: [0.0; 3], alpha: 0.0 },
                ControlPoint { density: 1.0, color: [1.0; 3], alpha: 1.0 },
            ],
        }
    }

    /// Same color and opacity for every density.
    pub fn constant(c: Rgba) -> Self {
        let p = |density| ControlPoint { density, color: c.rgb(), alpha: c.a };
        TransferFunction { points: vec![p(0.0), p(1.0)] }
    }

    pub fn points(&self) -> &[ControlPoint] {
        &self.points
    }

    #[inline]
    pub fn eval(&self, d: f64) -> Rgba {
        let d = d.clamp(0.0, 1.0);
        let pts = &self.points;
        // First point with density > d; brackets are (hi - 1, hi).
        let hi = pts.partition_point(|p| p.density <= d);
        if hi == 0 {
            return pts[0].rgba();
        }
        if hi == pts.len() {
            return pts[pts.len() - 1].rgba();
        }
        let (a, b) = (&pts[hi - 1], &pts[hi]);
        if d == a.density {
            return a.rgba();
        }
        let t = (d - a.density) / (b.density - a.density);
        a.rgba().lerp(&b.rgba(), t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::corrupt(path, "points", e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).expect("transfer function serializes");
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

impl Default for TransferFunction {
    fn default() -> Self {
        TransferFunction::grayscale_ramp()
    }
}

/// Free-function form of [`TransferFunction::eval`].
pub fn tf_eval(tf: &TransferFunction, d: f64) -> Rgba {
    tf.eval(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_point() -> TransferFunction {
        TransferFunction::new(vec![
            ControlPoint { density: 0.0, color: [0.0, 0.0, 0.0], alpha: 0.0 },
            ControlPoint { density: 0.3, color: [1.0, 0.5, 0.0], alpha: 0.2 },
            ControlPoint { density: 1.0, color: [1.0, 1.0, 1.0], alpha: 0.9 },
        ])
        .unwrap()
    }

    #[test]
    fn nodes_evaluate_exactly() {
        let tf = three_point();
        for p in tf.points() {
            assert_eq!(tf.eval(p.density), p.rgba());
        }
        assert_eq!(tf_eval(&tf, 0.0), tf.points()[0].rgba());
    }

    #[test]
    fn ramp_midpoint_is_mid_gray() {
        let c = TransferFunction::grayscale_ramp().eval(0.5);
        assert_eq!(c, Rgba::gray(0.5, 0.5));
    }

    #[test]
    fn rejects_malformed() {
        let p = |density| ControlPoint { density, color: [0.0; 3], alpha: 0.0 };
        assert!(TransferFunction::new(vec![p(0.0)]).is_err());
        assert!(TransferFunction::new(vec![p(0.1), p(1.0)]).is_err());
        assert!(TransferFunction::new(vec![p(0.0), p(0.5), p(0.5), p(1.0)]).is_err());
        assert!(TransferFunction::new(vec![p(0.0), p(0.9)]).is_err());
        let mut bad = p(1.0);
        bad.alpha = 1.5;
        assert!(TransferFunction::new(vec![p(0.0), bad]).is_err());
    }

    #[test]
    fn json_round_trip_validates() {
        let tf = three_point();
        let json = serde_json::to_string(&tf).unwrap();
        assert_eq!(serde_json::from_str::<TransferFunction>(&json).unwrap(), tf);
        let bad = r#"{"points":[{"density":0.5,"color":[0,0,0],"alpha":0}]}"#;
        assert!(serde_json::from_str::<TransferFunction>(bad).is_err());
    }

    #[test]
    fn eval_between_nodes_is_linear() {
        let tf = three_point();
        let c = tf.eval(0.65);
        assert!((c.a - 0.55).abs() < 1e-12);
        assert!((c.g - 0.75).abs() < 1e-12);
    }
}
