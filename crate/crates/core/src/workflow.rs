//! Scripted contouring sessions that emulate the study conditions against a
//! known target mask.
//!
//! - `C1`: disc strokes on every slice.
//! - `C2`: disc strokes on every `key_step`-th slice, then interpolation.
//! - `C4`: coarse sphere strokes through the structure, disc refinement of the
//!   key slices, then interpolation.
//!
//! Disc painting sweeps each row run of the target cross-section with a
//! narrow capsule, so a painted key slice reproduces the target exactly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotate::{BrushMode, BrushStroke, LabelVolume, MaskSlice};
use crate::error::Result;
use crate::interp::signed_distance;
use crate::metrics::{EventKind, SessionRecord};
use crate::store::apply_event;
use crate::volume::{Axis, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    C1,
    C2,
    C4,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::C1 => "c1",
            Condition::C2 => "c2",
            Condition::C4 => "c4",
        })
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "c1" => Ok(Condition::C1),
            "c2" => Ok(Condition::C2),
            "c4" => Ok(Condition::C4),
            _ => Err(format!("unknown workflow condition {s:?} (c1, c2, c4)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkflowOptions {
    pub axis: Axis,
    pub key_step: usize,
    /// Milliseconds between anchoring and the first stroke.
    pub exploration_ms: f64,
    pub stroke_ms: f64,
}

impl Default for WorkflowOptions {
    fn default() -> Self {
        WorkflowOptions { axis: Axis::Transverse, key_step: 4, exploration_ms: 5_000.0, stroke_ms: 400.0 }
    }
}

/// Recorded session plus the mask it produced while recording.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkflowRun {
    pub session: SessionRecord,
    pub mask: LabelVolume,
}

struct Recorder<'a> {
    volume: &'a Volume,
    mask: LabelVolume,
    session: SessionRecord,
    t: f64,
    stroke_ms: f64,
}

impl Recorder<'_> {
    fn emit(&mut self, kind: EventKind) -> Result<()> {
        apply_event(&mut self.mask, self.volume, &kind)?;
        self.session.push(self.t, kind);
        Ok(())
    }

    fn stroke(&mut self, s: BrushStroke) -> Result<()> {
        self.emit(EventKind::StrokeStart)?;
        self.t += self.stroke_ms;
        let s = s.at(self.t);
        self.emit(EventKind::StrokeEnd { stroke: Some(s) })?;
        self.t += self.stroke_ms / 4.0;
        Ok(())
    }

    fn goto(&mut self, axis: Axis, index: usize) -> Result<()> {
        self.t += 100.0;
        self.emit(EventKind::SliceChange { axis, index })
    }
}

/// Disc strokes covering exactly the set voxels of `slice`.
pub fn row_strokes(axis: Axis, index: usize, slice: &MaskSlice, spacing: [f64; 2]) -> Vec<BrushStroke> {
    let radius = 0.45 * spacing[0].min(spacing[1]);
    let mut out = Vec::new();
    for v in 0..slice.height {
        let mut u = 0;
        while u < slice.width {
            if !slice.get(u, v) {
                u += 1;
                continue;
            }
            let start = u;
            while u < slice.width && slice.get(u, v) {
                u += 1;
            }
            let y = v as f64 * spacing[1];
            let path = vec![[start as f64 * spacing[0], y], [(u - 1) as f64 * spacing[0], y]];
            out.push(BrushStroke::disc(axis, index, path, radius, BrushMode::Paint));
        }
    }
    out
}

/// One erase stamp that covers the whole slice.
pub fn clear_stroke(axis: Axis, index: usize, width: usize, height: usize, spacing: [f64; 2]) -> BrushStroke {
    let c = [(width - 1) as f64 * spacing[0] / 2.0, (height - 1) as f64 * spacing[1] / 2.0];
    let r = (width as f64 * spacing[0]).hypot(height as f64 * spacing[1]);
    BrushStroke::disc(axis, index, vec![c], r, BrushMode::Erase)
}

/// Key slices: every `step`-th index from the first to the last non-empty
/// slice, always including the last.
pub fn key_slices(target: &LabelVolume, axis: Axis, step: usize) -> Result<Vec<usize>> {
    let filled: Vec<usize> =
        (0..target.axis_len(axis)).filter(|&k| target.mask_slice(axis, k).is_ok_and(|s| !s.is_empty())).collect();
    let (Some(&first), Some(&last)) = (filled.first(), filled.last()) else {
        return Ok(Vec::new());
    };
    let mut keys: Vec<usize> = (first..=last).step_by(step.max(1)).collect();
    if keys.last() != Some(&last) {
        keys.push(last);
    }
    Ok(keys)
}

pub fn run_workflow(
    condition: Condition,
    volume: &Volume,
    target: &LabelVolume,
    opts: &WorkflowOptions,
) -> Result<WorkflowRun> {
    target.check_dims(volume.dims())?;
    let axis = opts.axis;
    let spacing = volume.slice_spacing(axis);
    let mut rec = Recorder {
        volume,
        mask: LabelVolume::for_volume(volume),
        session: SessionRecord::default(),
        t: 0.0,
        stroke_ms: opts.stroke_ms,
    };
    rec.emit(EventKind::Anchor)?;
    rec.t += opts.exploration_ms;

    let step = if condition == Condition::C1 { 1 } else { opts.key_step };
    let keys = key_slices(target, axis, step)?;

    if condition == Condition::C4 {
        for stroke in sphere_strokes(volume, target, axis, &keys)? {
            rec.stroke(stroke)?;
        }
    }
    for &k in &keys {
        rec.goto(axis, k)?;
        let slice = target.mask_slice(axis, k)?;
        if condition == Condition::C4 {
            rec.stroke(clear_stroke(axis, k, slice.width, slice.height, spacing))?;
        }
        for stroke in row_strokes(axis, k, &slice, spacing) {
            rec.stroke(stroke)?;
        }
    }
    if condition != Condition::C1 && keys.len() >= 2 {
        rec.t += 200.0;
        rec.emit(EventKind::Interp { axis, keys: keys.clone() })?;
    }
    rec.t += 1_000.0;
    rec.emit(EventKind::End)?;
    Ok(WorkflowRun { session: rec.session, mask: rec.mask })
}

/// One sphere per key slice, centered at the deepest point of the target
/// cross-section. Radii stay inside the cross-section and short of the first
/// and last key so that nothing spills past the structure's ends.
fn sphere_strokes(volume: &Volume, target: &LabelVolume, axis: Axis, keys: &[usize]) -> Result<Vec<BrushStroke>> {
    let (Some(&first), Some(&last)) = (keys.first(), keys.last()) else {
        return Ok(Vec::new());
    };
    let spacing = volume.spacing();
    let s_axis = spacing[axis.normal()];
    let in_plane = volume.slice_spacing(axis);
    let (a, b) = axis.in_plane();
    let mut out = Vec::new();
    for &k in keys {
        let slice = target.mask_slice(axis, k)?;
        let sdf = signed_distance(&slice, in_plane);
        let Some((i, depth)) = sdf
            .values
            .iter()
            .enumerate()
            .filter(|(_, d)| **d < 0.0)
            .min_by(|x, y| x.1.total_cmp(y.1))
            .map(|(i, d)| (i, -2.0 * d))
        else {
            continue;
        };
        let to_end = (k - first).min(last - k) as f64 * s_axis;
        let radius = 0.8 * depth.min(to_end);
        if radius < in_plane[0].min(in_plane[1]) {
            continue;
        }
        let (u, v) = (i % slice.width, i / slice.width);
        let mut center = [0.0; 3];
        center[a] = u as f64 * spacing[a];
        center[b] = v as f64 * spacing[b];
        center[axis.normal()] = k as f64 * s_axis;
        out.push(BrushStroke::sphere(vec![center], radius, BrushMode::Paint));
    }
    Ok(out)
}
