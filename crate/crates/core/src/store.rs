//! Project persistence and deterministic session replay.
//!
//! A project is a directory holding `project.json` plus the files it
//! references (paths relative to the directory):
//!
//! ```text
//! project.json            {"version":1,"id":..,"volume":"volume.json",
//!                          "masks":{"user":"masks/user.mask.json",..},
//!                          "transferFunction":"transfer_function.json",
//!                          "window":[lo,hi],"pose":{..},"session":"session.jsonl"}
//! volume.json/.raw        volume metadata and little-endian payload
//! masks/<name>.mask.json  RLE label volumes
//! session.jsonl           append-only event log
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotate::{apply_stroke, LabelVolume};
use crate::error::{Error, Result};
use crate::geom::Pose;
use crate::interp::interpolate_slices;
use crate::metrics::{EventKind, SessionEvent, SessionRecord};
use crate::render::TransferFunction;
use crate::volume::{read_volume, write_volume, DensityWindow, Volume};

pub const PROJECT_VERSION: u32 = 1;
pub const PROJECT_FILE: &str = "project.json";
pub const USER_MASK: &str = "user";
pub const REFERENCE_MASK: &str = "reference";

#[derive(Debug, Clone, PartialEq)]
pub struct Project {
    pub id: String,
    pub volume: Volume,
    pub masks: BTreeMap<String, LabelVolume>,
    pub transfer_function: TransferFunction,
    pub window: DensityWindow,
    pub pose: Pose,
    pub session: SessionRecord,
}

impl Project {
    /// New project with an empty `user` mask.
    pub fn new(id: impl Into<String>, volume: Volume) -> Self {
        let mut masks = BTreeMap::new();
        masks.insert(USER_MASK.to_string(), LabelVolume::for_volume(&volume));
        Project {
            id: id.into(),
            volume,
            masks,
            transfer_function: TransferFunction::default(),
            window: DensityWindow::FULL,
            pose: Pose::default(),
            session: SessionRecord::default(),
        }
    }

    pub fn with_reference(mut self, reference: LabelVolume) -> Self {
        self.masks.insert(REFERENCE_MASK.to_string(), reference);
        self
    }

    pub fn mask(&self, name: &str) -> Option<&LabelVolume> {
        self.masks.get(name)
    }

    /// The user mask, created empty when absent.
    pub fn user_mask_mut(&mut self) -> &mut LabelVolume {
        let dims = self.volume.dims();
        self.masks.entry(USER_MASK.to_string()).or_insert_with(|| LabelVolume::new(dims))
    }

    pub fn user_mask(&self) -> Option<&LabelVolume> {
        self.mask(USER_MASK)
    }

    pub fn reference_mask(&self) -> Option<&LabelVolume> {
        self.mask(REFERENCE_MASK)
    }

    /// All masks match the volume.
    pub fn check(&self) -> Result<()> {
        for m in self.masks.values() {
            m.check_dims(self.volume.dims())?;
        }
        Ok(())
    }
}

/// On-disk `project.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProjectFile {
    pub version: u32,
    pub id: String,
    pub volume: PathBuf,
    pub masks: BTreeMap<String, PathBuf>,
    pub transfer_function: PathBuf,
    pub window: DensityWindow,
    pub pose: Pose,
    pub session: PathBuf,
}

fn is_safe_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Writes through a temporary sibling and renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn mask_path(dir: &Path, name: &str) -> PathBuf {
    dir.join("masks").join(format!("{name}.mask.json"))
}

fn project_file(p: &Project) -> ProjectFile {
    ProjectFile {
        version: PROJECT_VERSION,
        id: p.id.clone(),
        volume: "volume.json".into(),
        masks: p.masks.keys().map(|k| (k.clone(), PathBuf::from("masks").join(format!("{k}.mask.json")))).collect(),
        transfer_function: "transfer_function.json".into(),
        window: p.window,
        pose: p.pose,
        session: "session.jsonl".into(),
    }
}

/// Writes only `project.json` (metadata changes such as pose or window).
pub fn save_metadata(dir: impl AsRef<Path>, p: &Project) -> Result<()> {
    project_file(p).save(dir)
}

pub fn save_mask(dir: impl AsRef<Path>, name: &str, m: &LabelVolume) -> Result<()> {
    let path = mask_path(dir.as_ref(), name);
    write_atomic(&path, m.to_mask_json().as_bytes())
}

pub fn save_project(dir: impl AsRef<Path>, p: &Project) -> Result<()> {
    let dir = dir.as_ref();
    p.check()?;
    if let Some(bad) = p.masks.keys().find(|k| !is_safe_name(k)) {
        return Err(Error::corrupt(dir.join(PROJECT_FILE), "masks", format!("invalid mask name {bad:?}")));
    }
    fs::create_dir_all(dir.join("masks")).map_err(|e| Error::io(dir, e))?;
    write_volume(dir.join("volume.json"), &p.volume)?;
    for (name, m) in &p.masks {
        save_mask(dir, name, m)?;
    }
    p.transfer_function.save(dir.join("transfer_function.json"))?;
    p.session.save(dir.join("session.jsonl"))?;
    save_metadata(dir, p)
}

fn field<T: DeserializeOwned>(
    obj: &mut serde_json::Map<String, serde_json::Value>,
    name: &str,
    path: &Path,
) -> Result<T> {
    let value = obj.remove(name).ok_or_else(|| Error::corrupt(path, name, "missing"))?;
    serde_json::from_value(value).map_err(|e| Error::corrupt(path, name, e.to_string()))
}

/// Parses and validates `project.json` text.
pub fn parse_project_file(text: &str, path: &Path) -> Result<ProjectFile> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::corrupt(path, "project", e.to_string()))?;
    let serde_json::Value::Object(mut obj) = value else {
        return Err(Error::corrupt(path, "project", "expected a JSON object"));
    };
    let version: u32 = field(&mut obj, "version", path)?;
    if version != PROJECT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: PROJECT_VERSION });
    }
    Ok(ProjectFile {
        version,
        id: field(&mut obj, "id", path)?,
        volume: field(&mut obj, "volume", path)?,
        masks: field(&mut obj, "masks", path)?,
        transfer_function: field(&mut obj, "transferFunction", path)?,
        window: field(&mut obj, "window", path)?,
        pose: field(&mut obj, "pose", path)?,
        session: field(&mut obj, "session", path)?,
    })
}

/// Reads `project.json` given the project directory or the file itself.
/// Returns the project directory alongside the parsed metadata.
pub fn read_project_file(path: impl AsRef<Path>) -> Result<(PathBuf, ProjectFile)> {
    let path = path.as_ref();
    let (dir, file) = if path.is_dir() {
        (path.to_path_buf(), path.join(PROJECT_FILE))
    } else {
        (path.parent().unwrap_or(Path::new(".")).to_path_buf(), path.to_path_buf())
    };
    let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    Ok((dir, parse_project_file(&text, &file)?))
}

impl ProjectFile {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("project metadata serializes");
        write_atomic(&dir.as_ref().join(PROJECT_FILE), text.as_bytes())
    }
}

/// Appends events to a JSON-lines session file.
pub fn append_events(path: impl AsRef<Path>, events: &[SessionEvent]) -> Result<()> {
    use std::io::Write;
    let path = path.as_ref();
    let mut text = String::new();
    for ev in events {
        text.push_str(&serde_json::to_string(ev).expect("session events serialize"));
        text.push('\n');
    }
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Loads from a project directory or directly from its `project.json`.
pub fn load_project(path: impl AsRef<Path>) -> Result<Project> {
    let (dir, meta) = read_project_file(path)?;

    let volume = read_volume(dir.join(&meta.volume))?;
    let mut masks = BTreeMap::new();
    for (name, rel) in &meta.masks {
        let m = LabelVolume::load(dir.join(rel))?;
        m.check_dims(volume.dims())?;
        masks.insert(name.clone(), m);
    }
    let transfer_function = TransferFunction::load(dir.join(&meta.transfer_function))?;
    let session_path = dir.join(&meta.session);
    let session =
        if session_path.exists() { SessionRecord::load(&session_path)? } else { SessionRecord::default() };
    Ok(Project {
        id: meta.id,
        volume,
        masks,
        transfer_function,
        window: meta.window,
        pose: meta.pose,
        session,
    })
}

/// Rebuilds the user mask from scratch by applying every recorded stroke and
/// interpolation in order.
pub fn replay_session(p: &Project, log: &SessionRecord) -> Result<LabelVolume> {
    replay_prefix(p, log, log.events.len())
}

/// Replays the first `n` events; undo is a replay of a shorter prefix.
pub fn replay_prefix(p: &Project, log: &SessionRecord, n: usize) -> Result<LabelVolume> {
    let mut m = LabelVolume::for_volume(&p.volume);
    for (i, ev) in log.events.iter().take(n).enumerate() {
        apply_event(&mut m, &p.volume, &ev.kind)
            .map_err(|e| Error::MalformedEvent { line: i + 1, reason: e.to_string() })?;
    }
    Ok(m)
}

/// Applies the mask-changing part of one event; other kinds are no-ops.
pub fn apply_event(m: &mut LabelVolume, v: &Volume, kind: &EventKind) -> Result<()> {
    match kind {
        EventKind::StrokeEnd { stroke: Some(s) } => apply_stroke(m, v, s),
        EventKind::Interp { axis, keys } => interpolate_slices(m, v, *axis, keys),
        _ => Ok(()),
    }
}

/// Hex SHA-256 over the dims and packed mask bits.
pub fn mask_hash(m: &LabelVolume) -> String {
    let mut h = Sha256::new();
    for d in m.dims() {
        h.update((d as u64).to_le_bytes());
    }
    for chunk in m.bits().chunks(8) {
        let byte = chunk.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b as u8) << i));
        h.update([byte]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
