use std::io::Cursor;

use super::composite::Accumulated;
use super::tf::Rgba;
use crate::annotate::MaskSlice;
use crate::error::{Error, Result};
use crate::volume::{DensityWindow, Slice2D};

/// Rendered pixels, row-major from the top-left.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Accumulated>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<Accumulated>) -> Self {
        debug_assert_eq!(pixels.len(), width * height);
        Frame { width, height, pixels }
    }

    pub fn get(&self, x: usize, y: usize) -> &Accumulated {
        &self.pixels[x + self.width * y]
    }

    /// 8-bit straight-alpha RGBA.
    pub fn to_rgba8(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|p| p.to_rgba8()).collect()
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        encode_png_rgba(self.width, self.height, &self.to_rgba8())
    }
}

/// RGBA8 view of a density slice: windowed gray, with `mask` voxels blended
/// toward `tint.rgb` by `tint.a`. Image row `v` holds in-plane row `v`.
pub fn slice_rgba(slice: &Slice2D, mask: Option<&MaskSlice>, window: DensityWindow, tint: Rgba) -> Vec<u8> {
    let mut out = Vec::with_capacity(slice.width * slice.height * 4);
    for v in 0..slice.height {
        for u in 0..slice.width {
            let g = window.apply(slice.get(u, v) as f64);
            let mut c = [g, g, g];
            if mask.is_some_and(|m| m.get(u, v)) {
                for (ch, t) in c.iter_mut().zip(tint.rgb()) {
                    *ch += (t - *ch) * tint.a;
                }
            }
            out.extend(c.map(|x| (x.clamp(0.0, 1.0) * 255.0).round() as u8));
            out.push(255);
        }
    }
    out
}

pub fn encode_png_rgba(width: usize, height: usize, rgba: &[u8]) -> Result<Vec<u8>> {
    if rgba.len() != width * height * 4 {
        return Err(Error::Png(format!("{} bytes for a {width}x{height} RGBA image", rgba.len())));
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Rgba);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
        writer.write_image_data(rgba).map_err(|e| Error::Png(e.to_string()))?;
        writer.finish().map_err(|e| Error::Png(e.to_string()))?;
    }
    Ok(out)
}

/// Decoded PNG, expanded to 8 or 16 bits per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedPng {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub bit_depth: u8,
    pub data: Vec<u8>,
}

impl DecodedPng {
    /// Intensity of the first channel at `(x, y)`.
    pub fn luma(&self, x: usize, y: usize) -> f64 {
        let i = (x + self.width * y) * self.channels;
        if self.bit_depth == 16 {
            u16::from_be_bytes([self.data[2 * i], self.data[2 * i + 1]]) as f64
        } else {
            self.data[i] as f64
        }
    }
}

pub fn decode_png(bytes: &[u8]) -> Result<DecodedPng> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND);
    let mut reader = dec.read_info().map_err(|e| Error::Png(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Png("image too large".into()))?;
    let mut data = vec![0; size];
    let info = reader.next_frame(&mut data).map_err(|e| Error::Png(e.to_string()))?;
    data.truncate(info.buffer_size());
    Ok(DecodedPng {
        width: info.width as usize,
        height: info.height as usize,
        channels: info.color_type.samples(),
        bit_depth: match info.bit_depth {
            png::BitDepth::Sixteen => 16,
            _ => 8,
        },
        data,
    })
}
