//! Grayscale raster container, TIFF / raw `AGRW` I/O and image statistics.

use std::io::Cursor;
use std::path::Path;

use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::{colortype, TiffEncoder};
use tiff::tags::Tag;
use tiff::ColorType;

use crate::error::{Error, Result};
use crate::threshold;

pub const RAW_MAGIC: &[u8; 4] = b"AGRW";
const RAW_HEADER_LEN: usize = 13;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    bit_depth: u8,
    pixels: Vec<u16>,
}

impl Raster {
    pub fn new(width: u32, height: u32, bit_depth: u8, pixels: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!("zero dimension {width}x{height}")));
        }
        if !(1..=16).contains(&bit_depth) {
            return Err(Error::InvalidRaster(format!("bit depth {bit_depth} outside 1..=16")));
        }
        let expected = width as u64 * height as u64;
        if pixels.len() as u64 != expected {
            return Err(Error::InvalidRaster(format!(
                "{} samples for a {width}x{height} raster",
                pixels.len()
            )));
        }
        let max = max_for_depth(bit_depth);
        if let Some(v) = pixels.iter().find(|&&v| v > max) {
            return Err(Error::InvalidRaster(format!("sample {v} exceeds {bit_depth}-bit range")));
        }
        Ok(Raster {
            width,
            height,
            bit_depth,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, bit_depth: u8, value: u16) -> Result<Self> {
        let n = width as usize * height as usize;
        Raster::new(width, height, bit_depth, vec![value; n])
    }

    pub fn from_fn(
        width: u32,
        height: u32,
        bit_depth: u8,
        mut f: impl FnMut(u32, u32) -> u16,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Raster::new(width, height, bit_depth, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u16> {
        self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn max_value(&self) -> u16 {
        max_for_depth(self.bit_depth)
    }
}

pub fn max_for_depth(bit_depth: u8) -> u16 {
    ((1u32 << bit_depth) - 1) as u16
}

/// Smallest depth able to hold `v` (at least 1).
pub fn depth_for_max(v: u32) -> u8 {
    (32 - v.leading_zeros()).max(1) as u8
}

pub fn load_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let bytes = std::fs::read(path.as_ref())?;
    decode_raster_bytes(&bytes)
}

/// Sniffs the magic: `AGRW` raw fixtures or TIFF (either byte order).
pub fn decode_raster_bytes(bytes: &[u8]) -> Result<Raster> {
    if bytes.starts_with(RAW_MAGIC) {
        read_raw(bytes)
    } else if bytes.starts_with(b"II*\0") || bytes.starts_with(b"MM\0*") {
        read_tiff(bytes)
    } else {
        Err(Error::UnsupportedFormat("neither TIFF nor AGRW".into()))
    }
}

/// `.tif`/`.tiff` selects TIFF, anything else the raw fixture format.
pub fn save_raster(r: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tiff = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.eq_ignore_ascii_case("tif") || e.eq_ignore_ascii_case("tiff"))
        .unwrap_or(false);
    let bytes = if tiff { write_tiff(r)? } else { write_raw(r) };
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn write_raw(r: &Raster) -> Vec<u8> {
    let mut out = Vec::with_capacity(RAW_HEADER_LEN + 2 * r.len());
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&r.width.to_le_bytes());
    out.extend_from_slice(&r.height.to_le_bytes());
    out.push(r.bit_depth);
    for &p in &r.pixels {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn read_raw(bytes: &[u8]) -> Result<Raster> {
    if bytes.len() < RAW_HEADER_LEN || &bytes[..4] != RAW_MAGIC {
        return Err(Error::UnsupportedFormat("truncated AGRW header".into()));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let depth = bytes[12];
    let n = width as u64 * height as u64;
    let body = &bytes[RAW_HEADER_LEN..];
    if body.len() as u64 != n * 2 {
        return Err(Error::InvalidRaster(format!(
            "AGRW body holds {} bytes, {width}x{height} needs {}",
            body.len(),
            n * 2
        )));
    }
    let pixels = body
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    Raster::new(width, height, depth, pixels)
}

fn tiff_err(e: tiff::TiffError) -> Error {
    match e {
        tiff::TiffError::IoError(io) => Error::Io(io),
        tiff::TiffError::UnsupportedError(u) => Error::UnsupportedFormat(u.to_string()),
        other => Error::UnsupportedFormat(other.to_string()),
    }
}

pub fn read_tiff(bytes: &[u8]) -> Result<Raster> {
    let mut dec = Decoder::new(Cursor::new(bytes)).map_err(tiff_err)?;
    let (width, height) = dec.dimensions().map_err(tiff_err)?;
    let stored_bits = match dec.colortype().map_err(tiff_err)? {
        ColorType::Gray(8) => 8u8,
        ColorType::Gray(16) => 16u8,
        ColorType::Gray(b) => {
            return Err(Error::UnsupportedFormat(format!("{b}-bit grayscale TIFF")));
        }
        other => return Err(Error::UnsupportedFormat(format!("TIFF color type {other:?}"))),
    };
    let max_sample: Option<u32> = dec
        .find_tag_unsigned(Tag::MaxSampleValue)
        .map_err(tiff_err)?;
    let pixels: Vec<u16> = match dec.read_image().map_err(tiff_err)? {
        DecodingResult::U8(v) => v.into_iter().map(u16::from).collect(),
        DecodingResult::U16(v) => v,
        _ => return Err(Error::UnsupportedFormat("non-integer TIFF samples".into())),
    };
    // A MaxSampleValue of 2^d-1 records a narrower nominal depth.
    let depth = match max_sample {
        Some(m) if m >= 1 && (m + 1).is_power_of_two() && depth_for_max(m) < stored_bits => {
            depth_for_max(m)
        }
        _ => stored_bits,
    };
    Raster::new(width, height, depth, pixels)
}

pub fn write_tiff(r: &Raster) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    {
        let mut enc = TiffEncoder::new(&mut buf).map_err(tiff_err)?;
        if r.bit_depth <= 8 {
            let data: Vec<u8> = r.pixels.iter().map(|&p| p as u8).collect();
            let mut img = enc
                .new_image::<colortype::Gray8>(r.width, r.height)
                .map_err(tiff_err)?;
            if r.bit_depth < 8 {
                img.encoder()
                    .write_tag(Tag::MaxSampleValue, r.max_value())
                    .map_err(tiff_err)?;
            }
            img.write_data(&data).map_err(tiff_err)?;
        } else {
            let mut img = enc
                .new_image::<colortype::Gray16>(r.width, r.height)
                .map_err(tiff_err)?;
            if r.bit_depth < 16 {
                img.encoder()
                    .write_tag(Tag::MaxSampleValue, r.max_value())
                    .map_err(tiff_err)?;
            }
            img.write_data(&r.pixels).map_err(tiff_err)?;
        }
    }
    Ok(buf.into_inner())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageStats {
    pub gini: f64,
    pub shannon_entropy: f64,
    pub std_dev: f64,
    /// std_dev / (max - min), 0 for a constant image.
    pub normalized_contrast: f64,
    pub dynamic_range: (u16, u16),
    pub background_fraction: f64,
}

/// Counts per intensity value, indexed by value, trimmed after the maximum.
pub fn intensity_histogram(r: &Raster) -> Vec<u64> {
    let max = r.pixels.iter().copied().max().unwrap_or(0) as usize;
    let mut hist = vec![0u64; max + 1];
    for &p in &r.pixels {
        hist[p as usize] += 1;
    }
    hist
}

/// Population Gini over pixel values, via the sorted-rank identity
/// G = sum_i (2i - n - 1) x_(i) / (n * sum x).
pub fn gini_from_histogram(hist: &[u64]) -> f64 {
    let n: u64 = hist.iter().sum();
    let total: u128 = hist
        .iter()
        .enumerate()
        .map(|(v, &c)| v as u128 * c as u128)
        .sum();
    if n == 0 || total == 0 {
        return 0.0;
    }
    // Ranks r+1..=r+c all hold value v; their weights sum to c(2r + c - n).
    let mut rank = 0i128;
    let mut acc = 0i128;
    for (v, &c) in hist.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let c = c as i128;
        acc += v as i128 * c * (2 * rank + c - n as i128);
        rank += c;
    }
    (acc as f64 / (n as f64 * total as f64)).clamp(0.0, 1.0)
}

pub fn entropy_from_histogram(hist: &[u64]) -> f64 {
    let n: u64 = hist.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    hist.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0)
}

pub fn compute_stats(r: &Raster) -> ImageStats {
    let hist = intensity_histogram(r);
    let n = r.len() as f64;
    let min = r.pixels.iter().copied().min().unwrap_or(0);
    let max = r.pixels.iter().copied().max().unwrap_or(0);
    let mean = r.pixels.iter().map(|&p| p as f64).sum::<f64>() / n;
    let var = r
        .pixels
        .iter()
        .map(|&p| {
            let d = p as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let std_dev = var.sqrt();
    let background_fraction = match threshold::otsu_floor(&hist) {
        Ok(t) => hist[..t as usize].iter().sum::<u64>() as f64 / n,
        Err(_) => 0.0,
    };
    ImageStats {
        gini: gini_from_histogram(&hist),
        shannon_entropy: entropy_from_histogram(&hist),
        std_dev,
        normalized_contrast: if max > min {
            std_dev / (max - min) as f64
        } else {
            0.0
        },
        dynamic_range: (min, max),
        background_fraction,
    }
}
