//! The `.agcr` byte layout. All integers are little-endian and fixed-width
//! unless noted; the packing table and shape stream use LEB128 varints.
//!
//! ```text
//! "AGCR" u8:version
//! u32:width u32:height u8:bit_depth u16:k u8:strategy u16:flags
//! f32:sigma u32:floor (u32::MAX = none) u16:reduce (0 = none)
//! packing   u8:kind  0 -> u16:max_value
//!                    1 -> u32:count u32:byte_len varint[first, gap-1 ...]
//! tolerance u8:kind (0 shapes, 1 raster) u64:len bytes
//!           raster = u8:codec + payload of width*height labels
//! whole     (in-place only) u8:codec u8:bits u64:raw_len u64:len u32:crc
//! k x bin   u8:tolerance u16:offset u8:loss f32:loss_param u8:codec
//!           u8:layout u8:bits u32:x u32:y u32:w u32:h u64:raw_len u64:len u32:crc
//! u32:header_crc (every byte above)  u32:raster_crc (decoded samples, u16 LE)
//! payloads, whole first, then bins in order
//! ```

use crate::codec::backend::CodecId;
use crate::contour::BBox;
use crate::error::{corrupt, Error, Result};
use crate::raster_io::max_for_depth;
use crate::threshold::PackingTransform;
use crate::wire::{put_varint, Reader};

pub const MAGIC: &[u8; 4] = b"AGCR";
pub const VERSION: u8 = 1;

pub mod flags {
    /// Tolerance indices came from a user template (AGCR+).
    pub const TEMPLATE: u16 = 1;
    /// The tolerance raster is stored as an image rather than as shapes.
    pub const TOLERANCE_RASTER: u16 = 1 << 1;
    /// No predictive image backend was available to the encoder.
    pub const NO_IMAGE_BACKEND: u16 = 1 << 2;
    /// No lossy wavelet backend was available to the encoder.
    pub const NO_LOSSY_BACKEND: u16 = 1 << 3;
    /// Shapes went through vertex reduction and are not pixel-exact.
    pub const REDUCED_SHAPES: u16 = 1 << 4;
    /// Exhaustive search was requested.
    pub const SLOWEST: u16 = 1 << 5;
    pub const ALL: u16 = (1 << 6) - 1;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    InPlace,
    Binned,
    Mixed,
    /// Encoder-only: try the candidate lattice, keep the smallest.
    Auto,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::InPlace => "in-place",
            Strategy::Binned => "binned",
            Strategy::Mixed => "mixed",
            Strategy::Auto => "auto",
        }
    }

    fn to_u8(self) -> u8 {
        match self {
            Strategy::InPlace => 0,
            Strategy::Binned => 1,
            Strategy::Mixed => 2,
            Strategy::Auto => 3,
        }
    }

    fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Strategy::InPlace),
            1 => Some(Strategy::Binned),
            2 => Some(Strategy::Mixed),
            _ => None,
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossTag {
    Lossless,
    /// Lossy wavelet at the given compression ratio; offsets are in
    /// original intensity units.
    Ratio(f32),
    /// Every pixel of the bin decodes to the bin offset.
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// No payload of its own: empty bin, in-place, or mean.
    None,
    /// Member values in raster order.
    Sequence,
    /// Bounding-box crop, non-members padded.
    Cropped,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Header {
    pub width: u32,
    pub height: u32,
    pub bit_depth: u8,
    pub k: u16,
    pub strategy: Strategy,
    pub flags: u16,
    pub sigma: f32,
    pub floor: Option<u32>,
    pub reduce: Option<u16>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToleranceKind {
    Shapes,
    Raster,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PayloadInfo {
    pub codec: CodecId,
    pub bits: u8,
    pub raw_len: u64,
    pub len: u64,
    pub crc: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinDescriptor {
    pub tolerance: u8,
    pub offset: u16,
    pub loss: LossTag,
    pub layout: Layout,
    pub crop: BBox,
    pub payload: PayloadInfo,
}

impl BinDescriptor {
    pub fn empty(tolerance: u8) -> Self {
        BinDescriptor {
            tolerance,
            offset: 0,
            loss: LossTag::Lossless,
            layout: Layout::None,
            crop: BBox {
                x: 0,
                y: 0,
                width: 0,
                height: 0,
            },
            payload: PayloadInfo {
                codec: CodecId::Stored,
                bits: 0,
                raw_len: 0,
                len: 0,
                crc: 0,
            },
        }
    }
}

/// A parsed container. Payload bytes are borrowed from the input.
#[derive(Clone, Debug)]
pub struct Container<'a> {
    pub header: Header,
    pub packing: PackingTransform,
    pub tolerance_kind: ToleranceKind,
    pub tolerance_bytes: &'a [u8],
    /// Offset of `tolerance_bytes` within the file.
    pub tolerance_at: usize,
    pub whole: Option<(PayloadInfo, &'a [u8])>,
    pub bins: Vec<(BinDescriptor, &'a [u8])>,
    pub raster_crc: u32,
    pub header_len: usize,
}

/// Owned parts handed to `write_container`.
#[derive(Clone, Debug)]
pub struct ContainerParts {
    pub header: Header,
    pub packing: PackingTransform,
    pub tolerance_kind: ToleranceKind,
    pub tolerance_bytes: Vec<u8>,
    pub whole: Option<(PayloadInfo, Vec<u8>)>,
    pub bins: Vec<(BinDescriptor, Vec<u8>)>,
    pub raster_crc: u32,
}

/// Ceilings applied before any allocation sized by file contents.
#[derive(Clone, Copy, Debug)]
pub struct DecodeLimits {
    pub max_pixels: u64,
}

impl Default for DecodeLimits {
    fn default() -> Self {
        DecodeLimits { max_pixels: 1 << 28 }
    }
}

pub fn raster_crc(samples: &[u16]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    for s in samples {
        h.update(&s.to_le_bytes());
    }
    h.finalize()
}

fn put_payload_info(out: &mut Vec<u8>, p: &PayloadInfo) {
    out.push(p.codec as u8);
    out.push(p.bits);
    out.extend_from_slice(&p.raw_len.to_le_bytes());
    out.extend_from_slice(&p.len.to_le_bytes());
    out.extend_from_slice(&p.crc.to_le_bytes());
}

pub fn write_container(parts: &ContainerParts) -> Vec<u8> {
    let h = &parts.header;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&h.width.to_le_bytes());
    out.extend_from_slice(&h.height.to_le_bytes());
    out.push(h.bit_depth);
    out.extend_from_slice(&h.k.to_le_bytes());
    out.push(h.strategy.to_u8());
    out.extend_from_slice(&h.flags.to_le_bytes());
    out.extend_from_slice(&h.sigma.to_le_bytes());
    out.extend_from_slice(&h.floor.unwrap_or(u32::MAX).to_le_bytes());
    out.extend_from_slice(&h.reduce.unwrap_or(0).to_le_bytes());

    if parts.packing.is_identity() {
        out.push(0);
        let max = parts.packing.len().saturating_sub(1) as u16;
        out.extend_from_slice(&max.to_le_bytes());
    } else {
        out.push(1);
        let values = parts.packing.distinct_values();
        let mut table = Vec::new();
        let mut prev: Option<u16> = None;
        for &v in values {
            let d = match prev {
                None => v as u64,
                Some(p) => (v - p - 1) as u64,
            };
            put_varint(&mut table, d);
            prev = Some(v);
        }
        out.extend_from_slice(&(values.len() as u32).to_le_bytes());
        out.extend_from_slice(&(table.len() as u32).to_le_bytes());
        out.extend_from_slice(&table);
    }

    out.push(match parts.tolerance_kind {
        ToleranceKind::Shapes => 0,
        ToleranceKind::Raster => 1,
    });
    out.extend_from_slice(&(parts.tolerance_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&parts.tolerance_bytes);

    if let Some((info, _)) = &parts.whole {
        put_payload_info(&mut out, info);
    }
    for (d, _) in &parts.bins {
        out.push(d.tolerance);
        out.extend_from_slice(&d.offset.to_le_bytes());
        let (tag, param) = match d.loss {
            LossTag::Lossless => (0u8, 0f32),
            LossTag::Ratio(r) => (1, r),
            LossTag::Mean => (2, 0.0),
        };
        out.push(tag);
        out.extend_from_slice(&param.to_le_bytes());
        out.push(d.payload.codec as u8);
        out.push(match d.layout {
            Layout::None => 0,
            Layout::Sequence => 1,
            Layout::Cropped => 2,
        });
        out.push(d.payload.bits);
        for v in [d.crop.x, d.crop.y, d.crop.width, d.crop.height] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&d.payload.raw_len.to_le_bytes());
        out.extend_from_slice(&d.payload.len.to_le_bytes());
        out.extend_from_slice(&d.payload.crc.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out.extend_from_slice(&parts.raster_crc.to_le_bytes());
    if let Some((_, bytes)) = &parts.whole {
        out.extend_from_slice(bytes);
    }
    for (_, bytes) in &parts.bins {
        out.extend_from_slice(bytes);
    }
    out
}

fn read_payload_info(r: &mut Reader, what: &str) -> Result<PayloadInfo> {
    let at = r.offset();
    let codec = r.u8(what)?;
    let codec = CodecId::from_u8(codec).ok_or_else(|| corrupt(at, format!("{what}: unknown codec {codec}")))?;
    let bits = r.u8(what)?;
    if bits > 16 {
        return Err(corrupt(at + 1, format!("{what}: {bits}-bit samples")));
    }
    Ok(PayloadInfo {
        codec,
        bits,
        raw_len: r.u64(what)?,
        len: r.u64(what)?,
        crc: r.u32(what)?,
    })
}

/// Parses and validates the layout and header checksum. Payload contents
/// are not decoded here.
pub fn parse_container<'a>(bytes: &'a [u8], limits: &DecodeLimits) -> Result<Container<'a>> {
    let mut r = Reader::new(bytes);
    let magic = r.bytes(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::UnsupportedFormat("not an AGCR container (bad magic)".into()));
    }
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedFormat(format!("container version {version}, expected {VERSION}")));
    }
    let width = r.u32("width")?;
    let height = r.u32("height")?;
    if width == 0 || height == 0 {
        return Err(corrupt(5, "zero image dimension"));
    }
    let pixels = width as u64 * height as u64;
    if pixels > limits.max_pixels {
        return Err(Error::Limit(format!("{width}x{height} exceeds the {}-pixel limit", limits.max_pixels)));
    }
    let at = r.offset();
    let bit_depth = r.u8("bit depth")?;
    if !(1..=16).contains(&bit_depth) {
        return Err(corrupt(at, format!("bit depth {bit_depth}")));
    }
    let at = r.offset();
    let k = r.u16("bin count")?;
    if !(1..=256).contains(&k) {
        return Err(corrupt(at, format!("bin count {k}")));
    }
    let at = r.offset();
    let strategy = r.u8("strategy")?;
    let strategy = Strategy::from_u8(strategy).ok_or_else(|| corrupt(at, format!("strategy {strategy}")))?;
    let at = r.offset();
    let flags = r.u16("flags")?;
    if flags & !flags::ALL != 0 {
        return Err(corrupt(at, format!("unknown flags {flags:#x}")));
    }
    let sigma = f32::from_le_bytes(r.bytes(4, "sigma")?.try_into().unwrap());
    let floor = match r.u32("floor")? {
        u32::MAX => None,
        f => Some(f),
    };
    let reduce = match r.u16("reduce")? {
        0 => None,
        v => Some(v),
    };
    let header = Header {
        width,
        height,
        bit_depth,
        k,
        strategy,
        flags,
        sigma,
        floor,
        reduce,
    };

    let at = r.offset();
    let packing = match r.u8("packing kind")? {
        0 => {
            let at = r.offset();
            let max = r.u16("packing max")?;
            if max > max_for_depth(bit_depth) {
                return Err(corrupt(at, format!("packing max {max} exceeds bit depth")));
            }
            PackingTransform::identity(max, bit_depth)
        }
        1 => {
            let at = r.offset();
            let count = r.u32("packing count")? as u64;
            if count == 0 || count > max_for_depth(bit_depth) as u64 + 1 {
                return Err(corrupt(at, format!("packing table of {count} values")));
            }
            let len = r.u32("packing length")? as usize;
            let table = r.bytes(len, "packing table")?;
            let mut tr = Reader::with_base(table, r.offset() - len);
            let mut values = Vec::with_capacity(count as usize);
            let limit = max_for_depth(bit_depth) as u64 + 1;
            let mut next = 0u64;
            for _ in 0..count {
                let d = tr.varint_below(limit, "packing delta")?;
                let v = next + d;
                if v >= limit {
                    return Err(corrupt(tr.offset(), "packing value exceeds bit depth"));
                }
                values.push(v as u16);
                next = v + 1;
            }
            if !tr.is_empty() {
                return Err(corrupt(tr.offset(), "trailing bytes in packing table"));
            }
            PackingTransform::new(values, bit_depth).map_err(|e| corrupt(at, e.to_string()))?
        }
        other => return Err(corrupt(at, format!("packing kind {other}"))),
    };

    let at = r.offset();
    let tolerance_kind = match r.u8("tolerance kind")? {
        0 => ToleranceKind::Shapes,
        1 => ToleranceKind::Raster,
        other => return Err(corrupt(at, format!("tolerance kind {other}"))),
    };
    let len = r.u64("tolerance length")?;
    let tolerance_at = r.offset();
    let tolerance_bytes = r.bytes(usize::try_from(len).unwrap_or(usize::MAX), "tolerance section")?;

    let whole_info = if strategy == Strategy::InPlace {
        Some(read_payload_info(&mut r, "in-place payload")?)
    } else {
        None
    };
    let mut descs = Vec::with_capacity(k as usize);
    for i in 0..k {
        let at = r.offset();
        let tolerance = r.u8("bin tolerance")?;
        if tolerance as u16 != i {
            return Err(corrupt(at, format!("bin {i} labelled {tolerance}")));
        }
        let offset = r.u16("bin offset")?;
        let at = r.offset();
        let tag = r.u8("loss tag")?;
        let param = f32::from_le_bytes(r.bytes(4, "loss parameter")?.try_into().unwrap());
        let loss = match tag {
            0 => LossTag::Lossless,
            1 if param.is_finite() && param >= 1.0 => LossTag::Ratio(param),
            2 => LossTag::Mean,
            _ => return Err(corrupt(at, format!("loss tag {tag} ({param})"))),
        };
        let at = r.offset();
        let codec = r.u8("bin codec")?;
        let codec = CodecId::from_u8(codec).ok_or_else(|| corrupt(at, format!("bin codec {codec}")))?;
        let at = r.offset();
        let layout = match r.u8("bin layout")? {
            0 => Layout::None,
            1 => Layout::Sequence,
            2 => Layout::Cropped,
            other => return Err(corrupt(at, format!("bin layout {other}"))),
        };
        let at = r.offset();
        let bits = r.u8("bin bits")?;
        if bits > 16 {
            return Err(corrupt(at, format!("bin of {bits}-bit samples")));
        }
        let at = r.offset();
        let crop = BBox {
            x: r.u32("crop x")?,
            y: r.u32("crop y")?,
            width: r.u32("crop width")?,
            height: r.u32("crop height")?,
        };
        if layout == Layout::Cropped
            && (crop.width == 0
                || crop.height == 0
                || crop.x as u64 + crop.width as u64 > width as u64
                || crop.y as u64 + crop.height as u64 > height as u64)
        {
            return Err(corrupt(at, format!("bin {i} crop outside the image")));
        }
        let raw_len = r.u64("bin raw length")?;
        let len = r.u64("bin length")?;
        let crc = r.u32("bin crc")?;
        if layout == Layout::None && len != 0 {
            return Err(corrupt(at, format!("bin {i} has bytes but no layout")));
        }
        descs.push(BinDescriptor {
            tolerance,
            offset,
            loss,
            layout,
            crop,
            payload: PayloadInfo {
                codec,
                bits,
                raw_len,
                len,
                crc,
            },
        });
    }
    let header_len = r.offset();
    let at = r.offset();
    let stored = r.u32("header crc")?;
    let computed = crc32fast::hash(&bytes[..header_len]);
    if stored != computed {
        let _ = at;
        return Err(Error::Checksum { stored, computed });
    }
    let raster_crc = r.u32("raster crc")?;

    let mut take = |info: &PayloadInfo, what: &str| -> Result<&'a [u8]> {
        let n = usize::try_from(info.len).unwrap_or(usize::MAX);
        let at = r.offset();
        let b = r.bytes(n, what)?;
        if crc32fast::hash(b) != info.crc {
            return Err(corrupt(at, format!("{what}: payload checksum mismatch")));
        }
        Ok(b)
    };
    let whole = match whole_info {
        Some(info) => {
            let b = take(&info, "in-place payload")?;
            Some((info, b))
        }
        None => None,
    };
    let mut bins = Vec::with_capacity(descs.len());
    for d in descs {
        let b = take(&d.payload, "bin payload")?;
        bins.push((d, b));
    }
    if !r.is_empty() {
        return Err(corrupt(r.offset(), "trailing bytes after payloads"));
    }
    Ok(Container {
        header,
        packing,
        tolerance_kind,
        tolerance_bytes,
        tolerance_at,
        whole,
        bins,
        raster_crc,
        header_len,
    })
}
