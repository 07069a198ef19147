use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Axis, Volume};

/// Binary contour mask aligned voxel-for-voxel with a [`Volume`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelVolume {
    dims: [usize; 3],
    bits: Vec<bool>,
}

/// 2D plane of mask bits, u fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSlice {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl MaskSlice {
    pub fn new(width: usize, height: usize) -> Self {
        MaskSlice { width, height, bits: vec![false; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                bits.push(f(u, v));
            }
        }
        MaskSlice { width, height, bits }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.bits[u + self.width * v]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, on: bool) {
        self.bits[u + self.width * v] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.contains(&true)
    }
}

impl LabelVolume {
    pub fn new(dims: [usize; 3]) -> Self {
        LabelVolume { dims, bits: vec![false; dims.iter().product()] }
    }

    pub fn for_volume(v: &Volume) -> Self {
        LabelVolume::new(v.dims())
    }

    pub fn from_bits(dims: [usize; 3], bits: Vec<bool>) -> Result<Self> {
        if dims.iter().product::<usize>() != bits.len() || dims.contains(&0) {
            return Err(Error::GridSize { dims, found: bits.len() });
        }
        Ok(LabelVolume { dims, bits })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut([usize; 3]) -> bool) -> Self {
        let mut bits = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    bits.push(f([x, y, z]));
                }
            }
        }
        LabelVolume { dims, bits }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn index(&self, [x, y, z]: [usize; 3]) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, p: [usize; 3]) -> bool {
        self.bits[self.index(p)]
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> bool {
        self.bits[i]
    }

    #[inline]
    pub fn set(&mut self, p: [usize; 3], on: bool) {
        let i = self.index(p);
        self.bits[i] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn clear(&mut self) {
        self.bits.fill(false);
    }

    pub fn check_dims(&self, expected: [usize; 3]) -> Result<()> {
        if self.dims != expected {
            return Err(Error::DimensionMismatch { expected, found: self.dims });
        }
        Ok(())
    }

    pub fn axis_len(&self, axis: Axis) -> usize {
        self.dims[axis.normal()]
    }

    fn check_index(&self, axis: Axis, index: usize) -> Result<()> {
        let len = self.axis_len(axis);
        if index >= len {
            return Err(Error::IndexOutOfRange { axis, index, len });
        }
        Ok(())
    }

    /// The exact plane of bits at `index` along `axis`.
    pub fn mask_slice(&self, axis: Axis, index: usize) -> Result<MaskSlice> {
        self.check_index(axis, index)?;
        let (a, b) = axis.in_plane();
        let (w, h) = (self.dims[a], self.dims[b]);
        Ok(MaskSlice::from_fn(w, h, |u, v| self.get(axis.voxel(index, u, v))))
    }

    /// Overwrites the plane at `index` along `axis`.
    pub fn write_slice(&mut self, axis: Axis, index: usize, slice: &MaskSlice) -> Result<()> {
        self.check_index(axis, index)?;
        let (a, b) = axis.in_plane();
        if (slice.width, slice.height) != (self.dims[a], self.dims[b]) {
            let mut found = self.dims;
            found[a] = slice.width;
            found[b] = slice.height;
            return Err(Error::DimensionMismatch { expected: self.dims, found });
        }
        for v in 0..slice.height {
            for u in 0..slice.width {
                self.set(axis.voxel(index, u, v), slice.get(u, v));
            }
        }
        Ok(())
    }

    /// Run lengths in storage order, alternating 0/1 and starting with a
    /// (possibly empty) 0-run.
    pub fn to_rle(&self) -> Vec<u64> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0u64;
        for &b in &self.bits {
            if b != current {
                runs.push(len);
                current = b;
                len = 0;
            }
            len += 1;
        }
        runs.push(len);
        runs
    }

    pub fn from_rle(dims: [usize; 3], runs: &[u64]) -> Result<Self> {
        let total: usize = dims.iter().product();
        let corrupt = |reason: String| Error::corrupt("<rle>", "rle", reason);
        if dims.contains(&0) {
            return Err(Error::corrupt("<rle>", "dims", "all dims must be >= 1"));
        }
        let mut bits = Vec::with_capacity(total);
        for (i, &run) in runs.iter().enumerate() {
            if run == 0 && i > 0 {
                return Err(corrupt(format!("zero-length run at position {i}")));
            }
            if bits.len() as u64 + run > total as u64 {
                return Err(corrupt(format!("runs exceed {total} voxels")));
            }
            bits.extend(std::iter::repeat_n(i % 2 == 1, run as usize));
        }
        if bits.len() != total {
            return Err(corrupt(format!("runs cover {} of {total} voxels", bits.len())));
        }
        Ok(LabelVolume { dims, bits })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_mask_json(&text).map_err(|e| match e {
            Error::CorruptFile { field, reason, .. } => Error::corrupt(path, field, reason),
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_mask_json()).map_err(|e| Error::io(path, e))
    }

    pub fn to_mask_json(&self) -> String {
        serde_json::to_string(&MaskFile { dims: self.dims, rle: self.to_rle() })
            .expect("mask serializes")
    }

    pub fn from_mask_json(text: &str) -> Result<Self> {
        let file: MaskFile = serde_json::from_str(text)
            .map_err(|e| Error::corrupt("<mask>", "mask", e.to_string()))?;
        LabelVolume::from_rle(file.dims, &file.rle)
    }
}

/// `<name>.mask.json` layout.
#[derive(Debug, Serialize, Deserialize)]
pub struct MaskFile {
    pub dims: [usize; 3],
    pub rle: Vec<u64>,
}
