//! Contour agreement and session timing / gaze measures.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotate::{BrushStroke, LabelVolume};
use crate::error::{Error, Result};
use crate::volume::Axis;

/// Default saccade threshold in degrees per second.
pub const SACCADE_THRESHOLD: f64 = 150.0;

/// Dice similarity of two masks. Two empty masks agree vacuously (1.0).
pub fn dsc(x: &LabelVolume, y: &LabelVolume) -> Result<f64> {
    x.check_dims(y.dims())?;
    let (mut both, mut nx, mut ny) = (0u64, 0u64, 0u64);
    for (&a, &b) in x.bits().iter().zip(y.bits()) {
        nx += a as u64;
        ny += b as u64;
        both += (a && b) as u64;
    }
    Ok(dice_from_counts(both, nx, ny))
}

/// Same value accumulated slice by slice along `axis`.
pub fn dsc_slicewise(x: &LabelVolume, y: &LabelVolume, axis: Axis) -> Result<f64> {
    x.check_dims(y.dims())?;
    let (mut both, mut nx, mut ny) = (0u64, 0u64, 0u64);
    for k in 0..x.axis_len(axis) {
        let (sx, sy) = (x.mask_slice(axis, k)?, y.mask_slice(axis, k)?);
        nx += sx.count() as u64;
        ny += sy.count() as u64;
        both += sx.bits.iter().zip(&sy.bits).filter(|(a, b)| **a && **b).count() as u64;
    }
    Ok(dice_from_counts(both, nx, ny))
}

fn dice_from_counts(both: u64, nx: u64, ny: u64) -> f64 {
    if nx + ny == 0 {
        1.0
    } else {
        2.0 * both as f64 / (nx + ny) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hit {
    Tablet,
    Volume,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub t: f64,
    pub dir: [f64; 3],
    pub hit: Hit,
}

impl GazeSample {
    pub fn new(t: f64, dir: [f64; 3], hit: Hit) -> Self {
        GazeSample { t, dir, hit }
    }
}

/// Event payloads of the session log, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// The spatial UI was anchored; timing starts here.
    Anchor,
    StrokeStart,
    /// Carries the applied stroke so that the log can be replayed.
    StrokeEnd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stroke: Option<BrushStroke>,
    },
    SliceChange { axis: Axis, index: usize },
    Gaze { dir: [f64; 3], hit: Hit },
    /// Inter-slice interpolation between the given key slices.
    Interp { axis: Axis, keys: Vec<usize> },
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl SessionEvent {
    pub fn new(t: f64, kind: EventKind) -> Self {
        SessionEvent { t, kind }
    }
}

/// Append-only event stream of one contouring session.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionRecord {
    pub events: Vec<SessionEvent>,
}

impl SessionRecord {
    pub fn new(events: Vec<SessionEvent>) -> Self {
        SessionRecord { events }
    }

    pub fn push(&mut self, t: f64, kind: EventKind) {
        self.events.push(SessionEvent { t, kind });
    }

    /// Parses JSON lines. Blank lines are skipped; line numbers are 1-based.
    /// Times must be finite and non-decreasing, gaze times strictly
    /// increasing and gaze directions unit length.
    pub fn parse_jsonl(text: &str) -> Result<Self> {
        let mut rec = SessionRecord::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let ev: SessionEvent = serde_json::from_str(line)
                .map_err(|e| Error::MalformedEvent { line: i + 1, reason: e.to_string() })?;
            rec.check_next(&ev).map_err(|reason| Error::MalformedEvent { line: i + 1, reason })?;
            rec.events.push(ev);
        }
        Ok(rec)
    }

    /// Validates `ev` as the next event of this record.
    pub fn check_next(&self, ev: &SessionEvent) -> std::result::Result<(), String> {
        if !ev.t.is_finite() {
            return Err("timestamp is not finite".into());
        }
        if let Some(prev) = self.events.last() {
            if ev.t < prev.t {
                return Err(format!("timestamp {} precedes {}", ev.t, prev.t));
            }
        }
        if let EventKind::Gaze { dir, .. } = &ev.kind {
            let n = dir.iter().map(|c| c * c).sum::<f64>().sqrt();
            if (n - 1.0).abs() > 1e-6 {
                return Err(format!("gaze direction has length {n}"));
            }
            let last_gaze = self.events.iter().rev().find(|e| matches!(e.kind, EventKind::Gaze { .. }));
            if last_gaze.is_some_and(|g| ev.t <= g.t) {
                return Err("gaze timestamps must strictly increase".into());
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for ev in &self.events {
            out.push_str(&serde_json::to_string(ev).expect("session events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_jsonl(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn anchor_time(&self) -> Result<f64> {
        self.events.iter().find(|e| e.kind == EventKind::Anchor).map(|e| e.t).ok_or(Error::NoAnchor)
    }

    pub fn end_time(&self) -> Option<f64> {
        self.events.iter().find(|e| e.kind == EventKind::End).map(|e| e.t)
    }

    pub fn gaze_samples(&self) -> Vec<GazeSample> {
        self.events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::Gaze { dir, hit } => Some(GazeSample { t: e.t, dir, hit }),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TemporalMetrics {
    pub initial_exploration: f64,
    #[serde(rename = "overallTCT")]
    pub overall_tct: f64,
}

pub fn temporal_metrics(s: &SessionRecord) -> Result<TemporalMetrics> {
    let anchor = s.anchor_time()?;
    let end = s.end_time().ok_or(Error::NoSessionEnd)?;
    let first_stroke = s
        .events
        .iter()
        .take_while(|e| e.kind != EventKind::End)
        .find(|e| e.kind == EventKind::StrokeStart)
        .ok_or(Error::NoStroke)?;
    Ok(TemporalMetrics { initial_exploration: first_stroke.t - anchor, overall_tct: end - anchor })
}

/// Degrees per second between two gaze samples.
pub fn angular_speed(g1: &GazeSample, g2: &GazeSample) -> Result<f64> {
    let dt = g2.t - g1.t;
    if !(dt > 0.0) {
        return Err(Error::NonIncreasingTime);
    }
    let dot: f64 = g1.dir.iter().zip(&g2.dir).map(|(a, b)| a * b).sum();
    Ok(dot.clamp(-1.0, 1.0).acos().to_degrees() * 1000.0 / dt)
}

/// Drops every sample whose speed from the preceding input sample reaches
/// `threshold`. A sample that does not advance in time counts as infinitely fast.
pub fn filter_saccades(samples: &[GazeSample], threshold: f64) -> Vec<GazeSample> {
    let mut out = Vec::with_capacity(samples.len());
    if let Some(first) = samples.first() {
        out.push(*first);
    }
    for w in samples.windows(2) {
        let speed = angular_speed(&w[0], &w[1]).unwrap_or(f64::INFINITY);
        if speed < threshold {
            out.push(w[1]);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AttentionPoint {
    /// Upper edge of the window, 1..=100.
    pub progress: u32,
    pub tablet_pct: f64,
    pub volume_pct: f64,
    pub frames: usize,
    /// No retained frames fell in this window.
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionSeries {
    pub points: Vec<AttentionPoint>,
}

impl AttentionSeries {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("progress,tabletPct,volumePct,empty\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{:.4},{:.4},{}", p.progress, p.tablet_pct, p.volume_pct, p.empty as u8);
        }
        out
    }
}

/// Tiles `[anchor, anchor + tct)` into 100 half-open windows and reports hit
/// shares of the given (already filtered) samples per window.
pub fn attention_windows(samples: &[GazeSample], anchor: f64, tct: f64) -> AttentionSeries {
    let mut counts = [[0usize; 3]; 100];
    if tct > 0.0 {
        for g in samples {
            let bucket = ((g.t - anchor) * 100.0 / tct).floor();
            if (0.0..100.0).contains(&bucket) {
                let slot = match g.hit {
                    Hit::Tablet => 0,
                    Hit::Volume => 1,
                    Hit::None => 2,
                };
                counts[bucket as usize][slot] += 1;
            }
        }
    }
    let points = counts
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let frames = c.iter().sum::<usize>();
            let pct = |n: usize| if frames == 0 { 0.0 } else { 100.0 * n as f64 / frames as f64 };
            AttentionPoint {
                progress: i as u32 + 1,
                tablet_pct: pct(c[0]),
                volume_pct: pct(c[1]),
                frames,
                empty: frames == 0,
            }
        })
        .collect();
    AttentionSeries { points }
}

/// Saccade-filtered attention allocation over task progress.
pub fn attention_series(s: &SessionRecord) -> Result<AttentionSeries> {
    attention_series_with(s, SACCADE_THRESHOLD)
}

pub fn attention_series_with(s: &SessionRecord, threshold: f64) -> Result<AttentionSeries> {
    let tm = temporal_metrics(s)?;
    let anchor = s.anchor_time()?;
    let retained = filter_saccades(&s.gaze_samples(), threshold);
    Ok(attention_windows(&retained, anchor, tm.overall_tct))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricsSummary {
    pub initial_exploration_ms: f64,
    pub overall_tct_ms: f64,
    pub gaze_samples: usize,
    pub retained_samples: usize,
    pub saccade_threshold: f64,
    pub mean_tablet_pct: f64,
    pub mean_volume_pct: f64,
    pub empty_windows: usize,
    pub strokes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dsc: Option<f64>,
}

/// Means are taken over non-empty windows.
pub fn summarize(s: &SessionRecord, dsc: Option<f64>) -> Result<MetricsSummary> {
    let tm = temporal_metrics(s)?;
    let gaze = s.gaze_samples();
    let retained = filter_saccades(&gaze, SACCADE_THRESHOLD);
    let series = attention_windows(&retained, s.anchor_time()?, tm.overall_tct);
    let filled: Vec<&AttentionPoint> = series.points.iter().filter(|p| !p.empty).collect();
    let mean = |f: fn(&AttentionPoint) -> f64| {
        if filled.is_empty() {
            0.0
        } else {
            filled.iter().map(|p| f(p)).sum::<f64>() / filled.len() as f64
        }
    };
    Ok(MetricsSummary {
        initial_exploration_ms: tm.initial_exploration,
        overall_tct_ms: tm.overall_tct,
        gaze_samples: gaze.len(),
        retained_samples: retained.len(),
        saccade_threshold: SACCADE_THRESHOLD,
        mean_tablet_pct: mean(|p| p.tablet_pct),
        mean_volume_pct: mean(|p| p.volume_pct),
        empty_windows: series.points.len() - filled.len(),
        strokes: s.events.iter().filter(|e| e.kind == EventKind::StrokeStart).count(),
        dsc,
    })
}
