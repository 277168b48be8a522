//! Pluggable compressors: bzip2 (BWT), xz (LZMA2), JPEG-LS and JPEG 2000.

use std::io::{Read, Write};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum CodecId {
    Stored = 0,
    GeneralBwt = 1,
    GeneralLz = 2,
    PredictiveImage = 3,
    LossyWavelet = 4,
}

impl CodecId {
    pub const ALL: [CodecId; 5] = [
        CodecId::Stored,
        CodecId::GeneralBwt,
        CodecId::GeneralLz,
        CodecId::PredictiveImage,
        CodecId::LossyWavelet,
    ];

    pub const GENERAL: [CodecId; 3] = [CodecId::Stored, CodecId::GeneralBwt, CodecId::GeneralLz];

    pub fn from_u8(v: u8) -> Option<CodecId> {
        CodecId::ALL.get(v as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            CodecId::Stored => "stored",
            CodecId::GeneralBwt => "bzip2",
            CodecId::GeneralLz => "xz",
            CodecId::PredictiveImage => "jpeg-ls",
            CodecId::LossyWavelet => "jpeg2000",
        }
    }

    pub fn is_lossless(self) -> bool {
        self != CodecId::LossyWavelet
    }

    /// Codes 2-D sample grids rather than byte strings.
    pub fn is_image(self) -> bool {
        matches!(self, CodecId::PredictiveImage | CodecId::LossyWavelet)
    }

    pub fn available(self) -> bool {
        match self {
            CodecId::PredictiveImage => cfg!(feature = "jpeg-ls"),
            CodecId::LossyWavelet => cfg!(feature = "jpeg2000"),
            _ => true,
        }
    }
}

impl std::fmt::Display for CodecId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn backend_err(codec: CodecId, reason: impl std::fmt::Display) -> Error {
    Error::Backend {
        codec: codec.name(),
        bin: None,
        reason: reason.to_string(),
    }
}

/// Memory ceiling handed to the xz decoder.
const XZ_MEMLIMIT: u64 = 256 << 20;

fn xz_compress(data: &[u8]) -> Result<Vec<u8>> {
    use xz2::stream::{Check, Filters, LzmaOptions, Stream};
    let err = |e: xz2::stream::Error| backend_err(CodecId::GeneralLz, e);
    let mut opts = LzmaOptions::new_preset(6).map_err(err)?;
    // A dictionary larger than the input buys nothing.
    let dict = (data.len() as u32).next_power_of_two().clamp(4096, 8 << 20);
    opts.dict_size(dict);
    let mut filters = Filters::new();
    filters.lzma2(&opts);
    let stream = Stream::new_stream_encoder(&filters, Check::None).map_err(err)?;
    let mut enc = xz2::write::XzEncoder::new_stream(Vec::new(), stream);
    enc.write_all(data)?;
    Ok(enc.finish()?)
}

fn bz_compress(data: &[u8]) -> Result<Vec<u8>> {
    let mut enc = bzip2::write::BzEncoder::new(Vec::new(), bzip2::Compression::best());
    enc.write_all(data)?;
    Ok(enc.finish()?)
}

/// Reads exactly `expected` bytes, rejecting short or over-long output
/// without ever buffering more than expected + 1 bytes.
fn read_capped(codec: CodecId, reader: impl Read, expected: usize) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(expected.min(1 << 24));
    reader
        .take(expected as u64 + 1)
        .read_to_end(&mut out)
        .map_err(|e| backend_err(codec, e))?;
    if out.len() != expected {
        return Err(backend_err(
            codec,
            format!("decoded {} bytes, expected {expected}", out.len()),
        ));
    }
    Ok(out)
}

/// Byte-stream compression with one of the general backends.
pub fn compress(codec: CodecId, data: &[u8]) -> Result<Vec<u8>> {
    match codec {
        CodecId::Stored => Ok(data.to_vec()),
        CodecId::GeneralBwt => bz_compress(data),
        CodecId::GeneralLz => xz_compress(data),
        other => Err(Error::Unsupported(format!("{other} is not a byte codec"))),
    }
}

pub fn decompress(codec: CodecId, data: &[u8], expected: usize) -> Result<Vec<u8>> {
    match codec {
        CodecId::Stored => {
            if data.len() != expected {
                return Err(backend_err(codec, "stored length mismatch"));
            }
            Ok(data.to_vec())
        }
        CodecId::GeneralBwt => {
            if expected == 0 && data.is_empty() {
                return Ok(Vec::new());
            }
            read_capped(codec, bzip2::read::BzDecoder::new(data), expected)
        }
        CodecId::GeneralLz => {
            let stream = xz2::stream::Stream::new_stream_decoder(XZ_MEMLIMIT, 0)
                .map_err(|e| backend_err(codec, e))?;
            read_capped(codec, xz2::read::XzDecoder::new_stream(data, stream), expected)
        }
        other => Err(Error::Unsupported(format!("{other} is not a byte codec"))),
    }
}

/// Smallest encoding among `codecs`; earlier entries win ties.
pub fn compress_best(data: &[u8], codecs: &[CodecId]) -> Result<(CodecId, Vec<u8>)> {
    let mut best: Option<(CodecId, Vec<u8>)> = None;
    for &c in codecs {
        let out = compress(c, data)?;
        if best.as_ref().map(|b| out.len() < b.1.len()).unwrap_or(true) {
            best = Some((c, out));
        }
    }
    best.ok_or_else(|| Error::Config("no codec to choose from".into()))
}

/// Little-endian sample bytes: one byte per sample when `bits` <= 8.
pub fn samples_to_bytes(samples: &[u16], bits: u8) -> Vec<u8> {
    if bits <= 8 {
        samples.iter().map(|&s| s as u8).collect()
    } else {
        samples.iter().flat_map(|s| s.to_le_bytes()).collect()
    }
}

pub fn bytes_to_samples(bytes: &[u8], bits: u8) -> Vec<u16> {
    if bits <= 8 {
        bytes.iter().map(|&b| b as u16).collect()
    } else {
        bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect()
    }
}

/// JPEG-LS sample precision is 2..=16 bits.
pub fn jpegls_bits(bits: u8) -> u8 {
    bits.clamp(2, 16)
}

#[cfg(feature = "jpeg-ls")]
pub fn jpegls_encode(samples: &[u16], width: u32, height: u32, bits: u8) -> Result<Vec<u8>> {
    let bits = jpegls_bits(bits);
    let info = charls::FrameInfo {
        width,
        height,
        bits_per_sample: bits as i32,
        component_count: 1,
    };
    let raw = if bits <= 8 {
        samples_to_bytes(samples, bits)
    } else {
        samples.iter().flat_map(|s| s.to_ne_bytes()).collect()
    };
    charls::CharLS::default()
        .encode(info, 0, &raw)
        .map_err(|e| backend_err(CodecId::PredictiveImage, e))
}

#[cfg(feature = "jpeg-ls")]
pub fn jpegls_decode(data: &[u8], width: u32, height: u32, bits: u8) -> Result<Vec<u16>> {
    let bits = jpegls_bits(bits);
    let err = |e: charls::Error| backend_err(CodecId::PredictiveImage, e);
    let info = charls::CharLS::default().get_frame_info(data).map_err(err)?;
    if info.width != width
        || info.height != height
        || info.bits_per_sample != bits as i32
        || info.component_count != 1
    {
        return Err(backend_err(
            CodecId::PredictiveImage,
            format!(
                "frame {}x{}x{}@{} does not match {width}x{height}@{bits}",
                info.width, info.height, info.component_count, info.bits_per_sample
            ),
        ));
    }
    let raw = charls::CharLS::default().decode(data).map_err(err)?;
    let n = width as usize * height as usize;
    let per = if bits <= 8 { 1 } else { 2 };
    if raw.len() != n * per {
        return Err(backend_err(CodecId::PredictiveImage, "decoded size mismatch"));
    }
    Ok(if bits <= 8 {
        raw.iter().map(|&b| b as u16).collect()
    } else {
        raw.chunks_exact(2)
            .map(|c| u16::from_ne_bytes([c[0], c[1]]))
            .collect()
    })
}

#[cfg(not(feature = "jpeg-ls"))]
pub fn jpegls_encode(_: &[u16], _: u32, _: u32, _: u8) -> Result<Vec<u8>> {
    Err(Error::BackendUnavailable("jpeg-ls"))
}

#[cfg(not(feature = "jpeg-ls"))]
pub fn jpegls_decode(_: &[u8], _: u32, _: u32, _: u8) -> Result<Vec<u16>> {
    Err(Error::BackendUnavailable("jpeg-ls"))
}

#[cfg(feature = "jpeg2000")]
pub use super::jpeg2000::{decode as j2k_decode, encode as j2k_encode};

#[cfg(not(feature = "jpeg2000"))]
pub fn j2k_encode(_: &[u16], _: u32, _: u32, _: u8, _: f32) -> Result<Vec<u8>> {
    Err(Error::BackendUnavailable("jpeg2000"))
}

#[cfg(not(feature = "jpeg2000"))]
pub fn j2k_decode(_: &[u8], _: u32, _: u32, _: u8) -> Result<Vec<u16>> {
    Err(Error::BackendUnavailable("jpeg2000"))
}
