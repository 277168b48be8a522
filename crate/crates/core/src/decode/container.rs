use crate::codec::backend::{self, CodecId};
use crate::codec::container::{
    parse_container, raster_crc, BinDescriptor, Container, DecodeLimits, Layout, LossTag, PayloadInfo, Strategy,
    ToleranceKind,
};
use crate::contour::Vertex;
use crate::decode::paint_shapes;
use crate::error::{corrupt, Error, Result};
use crate::raster_io::{depth_for_max, max_for_depth, Raster};
use crate::region_store::{deserialize_at, ShapeSet, StreamLimits};
use crate::threshold::ToleranceRaster;

#[derive(Clone, Copy, Debug)]
pub struct DecodeOptions {
    pub threads: usize,
    pub limits: DecodeLimits,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            threads: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            limits: DecodeLimits::default(),
        }
    }
}

impl DecodeOptions {
    pub fn with_threads(threads: usize) -> Self {
        DecodeOptions {
            threads: threads.max(1),
            ..Default::default()
        }
    }
}

/// Paints a shape set onto a `background` raster in stream order after
/// checking every vertex lies inside the image and every tolerance < k.
pub fn reconstruct_tolerance(set: &ShapeSet, width: u32, height: u32, k: usize, threads: usize) -> Result<ToleranceRaster> {
    if set.background as usize >= k {
        return Err(Error::MalformedShape(format!("background tolerance {} >= k = {k}", set.background)));
    }
    let inside = |v: &Vertex| v.x >= 0 && v.y >= 0 && (v.x as u32) < width && (v.y as u32) < height;
    for (i, s) in set.shapes.iter().enumerate() {
        if s.tolerance as usize >= k {
            return Err(Error::MalformedShape(format!("shape {i} has tolerance {} >= k = {k}", s.tolerance)));
        }
        if s.contour.rings().any(|r| r.is_empty() || !r.iter().all(inside)) {
            return Err(Error::MalformedShape(format!("shape {i} has a vertex outside the image")));
        }
    }
    let shapes: Vec<_> = set.shapes.iter().map(|s| (&s.contour, s.tolerance)).collect();
    paint_shapes(width, height, set.background, &shapes, threads)
}

fn stream_limits(pixels: u64) -> StreamLimits {
    StreamLimits {
        max_block_bytes: 16 * pixels + 4096,
        max_vertices: 4 * pixels + 64,
    }
}

/// The stored shapes, or `None` when the container keeps its tolerance
/// raster as an image.
pub fn container_shapes(c: &Container) -> Result<Option<ShapeSet>> {
    match c.tolerance_kind {
        ToleranceKind::Raster => Ok(None),
        ToleranceKind::Shapes => {
            let pixels = c.header.width as u64 * c.header.height as u64;
            deserialize_at(c.tolerance_bytes, c.tolerance_at, &stream_limits(pixels)).map(Some)
        }
    }
}

pub fn label_bits(k: usize) -> u8 {
    depth_for_max(k.saturating_sub(1) as u32).max(1)
}

pub fn read_tolerance(c: &Container, threads: usize) -> Result<ToleranceRaster> {
    let (w, h) = (c.header.width, c.header.height);
    let k = c.header.k as usize;
    match c.tolerance_kind {
        ToleranceKind::Shapes => {
            let set = container_shapes(c)?.expect("shape container");
            reconstruct_tolerance(&set, w, h, k, threads)
        }
        ToleranceKind::Raster => {
            let at = c.tolerance_at;
            let (&id, payload) = c
                .tolerance_bytes
                .split_first()
                .ok_or_else(|| corrupt(at, "empty tolerance raster"))?;
            let codec = CodecId::from_u8(id).ok_or_else(|| corrupt(at, format!("tolerance codec {id}")))?;
            let n = w as usize * h as usize;
            let bits = label_bits(k);
            let labels = match codec {
                CodecId::PredictiveImage => backend::jpegls_decode(payload, w, h, bits)?,
                CodecId::LossyWavelet => return Err(corrupt(at, "lossy tolerance raster")),
                general => backend::decompress(general, payload, n)?
                    .into_iter()
                    .map(u16::from)
                    .collect(),
            };
            if labels.len() != n {
                return Err(corrupt(at, "tolerance raster size mismatch"));
            }
            if let Some(&l) = labels.iter().find(|&&l| l as usize >= k) {
                return Err(corrupt(at, format!("tolerance label {l} >= k = {k}")));
            }
            ToleranceRaster::new(w, h, labels.into_iter().map(|l| l as u8).collect())
        }
    }
}

fn bytes_per_sample(bits: u8) -> u64 {
    if bits <= 8 {
        1
    } else {
        2
    }
}

fn with_bin(e: Error, bin: usize) -> Error {
    match e {
        Error::Backend { codec, reason, .. } => Error::Backend {
            codec,
            bin: Some(bin),
            reason,
        },
        other => other,
    }
}

/// Samples of a general-codec payload holding `count` values.
fn general_samples(info: &PayloadInfo, bytes: &[u8], count: u64) -> Result<Vec<u16>> {
    if info.codec.is_image() {
        return Err(Error::Unsupported(format!("{} payload in a byte layout", info.codec)));
    }
    let expected = count * bytes_per_sample(info.bits);
    if info.raw_len != expected {
        return Err(Error::Unsupported(format!(
            "payload declares {} raw bytes, layout needs {expected}",
            info.raw_len
        )));
    }
    let raw = backend::decompress(info.codec, bytes, expected as usize)?;
    Ok(backend::bytes_to_samples(&raw, info.bits))
}

fn image_samples(info: &PayloadInfo, bytes: &[u8], w: u32, h: u32) -> Result<Vec<u16>> {
    match info.codec {
        CodecId::PredictiveImage => backend::jpegls_decode(bytes, w, h, info.bits),
        CodecId::LossyWavelet => backend::j2k_decode(bytes, w, h, info.bits),
        _ => general_samples(info, bytes, w as u64 * h as u64),
    }
}

/// Original-space value of one stored sample.
fn restore(c: &Container, d: &BinDescriptor, s: u16) -> Result<u16> {
    let v = s as u32 + d.offset as u32;
    match d.loss {
        LossTag::Lossless => c
            .packing
            .unpack(u16::try_from(v).unwrap_or(u16::MAX))
            .filter(|_| v <= u16::MAX as u32)
            .ok_or_else(|| Error::Unsupported(format!("packed value {v} outside the packing table"))),
        LossTag::Ratio(_) => Ok(v.min(max_for_depth(c.header.bit_depth) as u32) as u16),
        LossTag::Mean => Ok(d.offset),
    }
}

/// Writes bin `b`'s pixels into `out` (raster order) from its own payload.
fn decode_bin(c: &Container, tol: &ToleranceRaster, b: usize, out: &mut [u16]) -> Result<()> {
    let (d, bytes) = (&c.bins[b].0, c.bins[b].1);
    let w = c.header.width as usize;
    let members: Vec<usize> = tol
        .cells()
        .iter()
        .enumerate()
        .filter(|(_, &t)| t as usize == b)
        .map(|(i, _)| i)
        .collect();
    if d.loss == LossTag::Mean {
        let v = restore(c, d, 0)?;
        if v > max_for_depth(c.header.bit_depth) {
            return Err(Error::Unsupported(format!("bin {b} mean {v} exceeds the bit depth")));
        }
        for &i in &members {
            out[i] = v;
        }
        return Ok(());
    }
    match d.layout {
        Layout::None => {
            if !members.is_empty() {
                return Err(Error::Unsupported(format!("bin {b} has pixels but no payload")));
            }
        }
        Layout::Sequence => {
            let samples = general_samples(&d.payload, bytes, members.len() as u64)?;
            for (&i, &s) in members.iter().zip(&samples) {
                out[i] = restore(c, d, s)?;
            }
        }
        Layout::Cropped => {
            let cr = d.crop;
            let samples = image_samples(&d.payload, bytes, cr.width, cr.height)?;
            for &i in &members {
                let (x, y) = ((i % w) as u32, (i / w) as u32);
                if !cr.contains(x as i32, y as i32) {
                    return Err(Error::Unsupported(format!("bin {b} pixel ({x}, {y}) outside its crop")));
                }
                let j = (y - cr.y) as usize * cr.width as usize + (x - cr.x) as usize;
                out[i] = restore(c, d, samples[j])?;
            }
        }
    }
    Ok(())
}

fn data_error(e: Error, at: usize) -> Error {
    match e {
        Error::Unsupported(reason) => corrupt(at, reason),
        other => other,
    }
}

fn payload_offset(c: &Container, b: Option<usize>) -> usize {
    let mut at = c.header_len + 8;
    if let Some((info, _)) = &c.whole {
        if b.is_none() {
            return at;
        }
        at += info.len as usize;
    }
    for (d, _) in c.bins.iter().take(b.unwrap_or(0)) {
        at += d.payload.len as usize;
    }
    at
}

/// Decoded samples without the raster checksum test.
pub(crate) fn decode_samples(c: &Container, threads: usize) -> Result<Vec<u16>> {
    let tol = read_tolerance(c, threads)?;
    let n = tol.cells().len();
    let mut out = vec![0u16; n];
    if let Some((info, bytes)) = &c.whole {
        let at = payload_offset(c, None);
        let samples = image_samples(info, bytes, c.header.width, c.header.height)
            .map_err(|e| data_error(e, at))?;
        for (i, (&s, &t)) in samples.iter().zip(tol.cells()).enumerate() {
            let d = &c.bins[t as usize].0;
            if d.loss != LossTag::Lossless {
                return Err(corrupt(at, "lossy bin in an in-place container"));
            }
            out[i] = restore(c, d, s).map_err(|e| data_error(e, at))?;
        }
    } else {
        for b in 0..c.bins.len() {
            decode_bin(c, &tol, b, &mut out).map_err(|e| data_error(with_bin(e, b), payload_offset(c, Some(b))))?;
        }
    }
    Ok(out)
}

/// Decodes a parsed container; the result is checked against the stored
/// raster checksum.
pub fn decode_parsed(c: &Container, threads: usize) -> Result<Raster> {
    let out = decode_samples(c, threads)?;
    let computed = raster_crc(&out);
    if computed != c.raster_crc {
        return Err(Error::Checksum {
            stored: c.raster_crc,
            computed,
        });
    }
    Raster::new(c.header.width, c.header.height, c.header.bit_depth, out)
}

pub fn decode_container(bytes: &[u8], opts: &DecodeOptions) -> Result<Raster> {
    let c = parse_container(bytes, &opts.limits)?;
    decode_parsed(&c, opts.threads)
}

/// Bin `bin`'s pixels restored, every other pixel 0. Only that bin's
/// payload is decoded.
pub fn extract_bin(bytes: &[u8], bin: usize, opts: &DecodeOptions) -> Result<Raster> {
    let c = parse_container(bytes, &opts.limits)?;
    if c.header.strategy == Strategy::InPlace {
        return Err(Error::Unsupported(
            "in-place containers store all bins in one payload; bins cannot be extracted".into(),
        ));
    }
    if bin >= c.bins.len() {
        return Err(Error::Config(format!("bin {bin} out of range (k = {})", c.bins.len())));
    }
    let tol = read_tolerance(&c, opts.threads)?;
    let mut out = vec![0u16; tol.cells().len()];
    decode_bin(&c, &tol, bin, &mut out).map_err(|e| data_error(with_bin(e, bin), payload_offset(&c, Some(bin))))?;
    Raster::new(c.header.width, c.header.height, c.header.bit_depth, out)
}
