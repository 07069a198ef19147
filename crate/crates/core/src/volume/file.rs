use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Volume;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeDtype {
    /// Normalized densities in [0, 1].
    F32,
    /// Raw scanner values, normalized with `raw_range` at load.
    U16,
}

impl VolumeDtype {
    fn width(self) -> usize {
        match self {
            VolumeDtype::F32 => 4,
            VolumeDtype::U16 => 2,
        }
    }
}

/// Sidecar metadata for a `<name>.raw` volume payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeMeta {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub dtype: VolumeDtype,
    pub raw_range: [f64; 2],
}

/// Path of the binary payload paired with a metadata file.
pub fn raw_path(meta_path: &Path) -> PathBuf {
    meta_path.with_extension("raw")
}

pub fn read_volume(meta_path: impl AsRef<Path>) -> Result<Volume> {
    let meta_path = meta_path.as_ref();
    let text = fs::read_to_string(meta_path).map_err(|e| Error::io(meta_path, e))?;
    let meta: VolumeMeta = serde_json::from_str(&text)
        .map_err(|e| Error::corrupt(meta_path, "metadata", e.to_string()))?;
    if meta.dims.iter().any(|&n| n == 0) {
        return Err(Error::corrupt(meta_path, "dims", "all dims must be >= 1"));
    }
    if meta.spacing_mm.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::corrupt(meta_path, "spacing_mm", "spacing must be positive"));
    }
    let raw = raw_path(meta_path);
    let bytes = fs::read(&raw).map_err(|e| Error::io(&raw, e))?;
    let count: usize = meta.dims.iter().product();
    let expected = count * meta.dtype.width();
    if bytes.len() != expected {
        return Err(Error::corrupt(
            &raw,
            "raw",
            format!("expected {expected} bytes for dims {:?}, found {}", meta.dims, bytes.len()),
        ));
    }

    let [min, max] = meta.raw_range;
    let densities: Vec<f32> = match meta.dtype {
        VolumeDtype::F32 => {
            let values: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if let Some(pos) = values.iter().position(|d| !(0.0..=1.0).contains(d)) {
                return Err(Error::corrupt(
                    &raw,
                    "raw",
                    format!("density {} at voxel {pos} outside [0, 1]", values[pos]),
                ));
            }
            values
        }
        VolumeDtype::U16 => {
            if !(max > min) {
                return Err(Error::corrupt(meta_path, "raw_range", "max must exceed min"));
            }
            bytes
                .chunks_exact(2)
                .map(|c| {
                    let v = u16::from_le_bytes([c[0], c[1]]) as f64;
                    ((v - min) / (max - min)).clamp(0.0, 1.0) as f32
                })
                .collect()
        }
    };
    Volume::from_densities(meta.dims, meta.spacing_mm, densities, (min, max))
}

/// Writes `<name>.json` + `<name>.raw` with normalized f32 densities.
pub fn write_volume(meta_path: impl AsRef<Path>, volume: &Volume) -> Result<()> {
    let meta_path = meta_path.as_ref();
    let (min, max) = volume.raw_range();
    let meta = VolumeMeta {
        dims: volume.dims(),
        spacing_mm: volume.spacing(),
        dtype: VolumeDtype::F32,
        raw_range: [min, max],
    };
    let json = serde_json::to_string_pretty(&meta).expect("volume metadata serializes");
    fs::write(meta_path, json).map_err(|e| Error::io(meta_path, e))?;
    let mut bytes = Vec::with_capacity(volume.len() * 4);
    for d in volume.densities() {
        bytes.extend_from_slice(&d.to_le_bytes());
    }
    let raw = raw_path(meta_path);
    fs::write(&raw, bytes).map_err(|e| Error::io(&raw, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_round_trip_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.json");
        let v = Volume::from_fn([3, 2, 2], [0.5, 0.7, 2.5], |[x, y, z]| {
            (x * 7 + y * 3 + z) as f32 / 20.0
        })
        .unwrap();
        write_volume(&path, &v).unwrap();
        let raw_a = fs::read(raw_path(&path)).unwrap();
        let meta_a = fs::read(&path).unwrap();
        let back = read_volume(&path).unwrap();
        assert_eq!(back, v);
        write_volume(&path, &back).unwrap();
        assert_eq!(fs::read(raw_path(&path)).unwrap(), raw_a);
        assert_eq!(fs::read(&path).unwrap(), meta_a);
    }

    #[test]
    fn u16_payload_is_normalized_by_raw_range() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ct.json");
        let meta = VolumeMeta {
            dims: [3, 1, 1],
            spacing_mm: [1.0; 3],
            dtype: VolumeDtype::U16,
            raw_range: [100.0, 300.0],
        };
        fs::write(&path, serde_json::to_string(&meta).unwrap()).unwrap();
        let bytes: Vec<u8> = [100u16, 200, 300].iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(raw_path(&path), bytes).unwrap();
        let v = read_volume(&path).unwrap();
        assert_eq!(v.densities(), &[0.0, 0.5, 1.0]);
        assert_eq!(v.raw_range(), (100.0, 300.0));
    }

    #[test]
    fn truncated_raw_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.json");
        let v = Volume::from_fn([4, 4, 4], [1.0; 3], |_| 0.25).unwrap();
        write_volume(&path, &v).unwrap();
        let raw = raw_path(&path);
        let bytes = fs::read(&raw).unwrap();
        fs::write(&raw, &bytes[..bytes.len() - 3]).unwrap();
        match read_volume(&path).unwrap_err() {
            Error::CorruptFile { field, .. } => assert_eq!(field, "raw"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
