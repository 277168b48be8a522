//! The encode pipeline: thresholding, shapes, per-bin payloads and the
//! candidate search behind the automatic strategy.

use std::collections::BTreeMap;

use log::{debug, warn};

use crate::codec::backend::{self, CodecId};
use crate::codec::container::{
    flags, parse_container, raster_crc, write_container, BinDescriptor, ContainerParts, DecodeLimits, Header,
    Layout, LossTag, PayloadInfo, Strategy, ToleranceKind,
};
use crate::contour::{extract_regions, optimize_contour, reduce_contour, trace_contour, BBox};
use crate::decode::{decode_samples, label_bits, paint_shapes};
use crate::error::{Error, Result};
use crate::raster_io::{depth_for_max, entropy_from_histogram, Raster};
use crate::region_store::{
    min_region_size, prune_best_background, relabel_small_regions, serialize_regions, sort_and_prune, RegionRecord,
    ShapeSet, StoredShape,
};
use crate::threshold::{
    auto_tune, histogram_pack, otsu_floor, packed_histogram, template_labels, tolerance_raster, Bin, FloorMode, PackingTransform,
    ThresholdPlan, ToleranceRaster, TuneConfig,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossSpec {
    Lossless,
    /// Lossy wavelet coding at this compression ratio.
    Ratio(f32),
    /// Store only the rounded mean intensity of the bin.
    Mean,
}

#[derive(Clone, Debug)]
pub struct EncodeConfig {
    pub strategy: Strategy,
    pub bins: Option<usize>,
    pub sigma: Option<f64>,
    pub floor: FloorMode,
    /// Vertex budget per 100 region pixels; `None` keeps exact shapes.
    pub reduce: Option<usize>,
    pub slowest: bool,
    /// Also try the tolerance raster as an image and keep the smaller.
    pub novis: bool,
    pub template: Option<Raster>,
    pub loss: BTreeMap<u8, LossSpec>,
    /// Mixed mode sends bins above this many bits per symbol to a general backend.
    pub entropy_threshold: f64,
    pub threads: usize,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        EncodeConfig {
            strategy: Strategy::Auto,
            bins: None,
            sigma: None,
            floor: FloorMode::Auto,
            reduce: None,
            slowest: false,
            novis: false,
            template: None,
            loss: BTreeMap::new(),
            entropy_threshold: 4.0,
            threads: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateReport {
    pub label: String,
    pub strategy: Strategy,
    /// `None` when the candidate failed verification.
    pub bytes: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct EncodeReport {
    pub strategy: Strategy,
    pub label: String,
    pub k: usize,
    pub sigma: f64,
    pub regions: usize,
    pub vertices: usize,
    pub background: u8,
    pub tolerance_kind: ToleranceKind,
    pub candidates: Vec<CandidateReport>,
}

#[derive(Clone, Debug)]
pub struct Candidate {
    pub label: String,
    pub strategy: Strategy,
    pub bytes: Vec<u8>,
}

fn strategy_rank(s: Strategy) -> u8 {
    match s {
        Strategy::Mixed => 0,
        Strategy::Binned => 1,
        Strategy::InPlace => 2,
        Strategy::Auto => 3,
    }
}

/// Smallest container wins; equal sizes fall to Mixed, then Binned, then
/// InPlace, then list order.
pub fn select_strategy(candidates: Vec<Candidate>) -> Result<Candidate> {
    candidates
        .into_iter()
        .enumerate()
        .min_by_key(|(i, c)| (c.bytes.len(), strategy_rank(c.strategy), *i))
        .map(|(_, c)| c)
        .ok_or_else(|| Error::Internal("no candidate encoding survived verification".into()))
}

/// One way of splitting the image into bins, with its stored tolerance
/// section.
#[derive(Clone)]
struct Partition {
    label: &'static str,
    transform: PackingTransform,
    packed: Vec<u16>,
    /// The tolerance raster the decoder will reconstruct.
    tol: ToleranceRaster,
    members: Vec<Vec<usize>>,
    loss: Vec<LossSpec>,
    tol_kind: ToleranceKind,
    tol_bytes: Vec<u8>,
    flags: u16,
    sigma: f64,
    floor: Option<u32>,
    reduce: Option<u16>,
    regions: usize,
    vertices: usize,
    background: u8,
}

fn members_of(tol: &ToleranceRaster, k: usize) -> Vec<Vec<usize>> {
    let mut m = vec![Vec::new(); k];
    for (i, &t) in tol.cells().iter().enumerate() {
        m[t as usize].push(i);
    }
    m
}

fn shape_codecs(slowest: bool) -> Vec<CodecId> {
    if slowest {
        CodecId::GENERAL.to_vec()
    } else {
        vec![CodecId::Stored, CodecId::GeneralLz]
    }
}

fn bin_codecs(slowest: bool) -> Vec<CodecId> {
    if slowest {
        CodecId::GENERAL.to_vec()
    } else {
        vec![CodecId::Stored, CodecId::GeneralBwt]
    }
}

struct Shapes {
    set: ShapeSet,
    decoded: ToleranceRaster,
    reduced: bool,
}

/// Traces, optimises and prunes the regions of `tol`, then reduces them if
/// asked. `decoded` is what painting the kept shapes yields.
fn build_shapes(tol: &ToleranceRaster, reduce: Option<usize>, cfg: &EncodeConfig) -> Result<Shapes> {
    let m = min_region_size(tol.width(), tol.height());
    let mut records = Vec::new();
    for region in extract_regions(tol) {
        let traced = trace_contour(&region)?;
        records.push(RegionRecord::new(&region, optimize_contour(&traced, &region)));
    }
    let outcome = if cfg.slowest {
        prune_best_background(&records, tol, m, cfg.threads)?
    } else {
        sort_and_prune(records, tol, m, 0, cfg.threads)?
    };
    debug!(
        "kept {} regions (background {}, {} small dropped, {} eliminated, {} restored)",
        outcome.records.len(),
        outcome.background,
        outcome.dropped_small,
        outcome.eliminated,
        outcome.restored
    );
    let exact = ShapeSet {
        background: outcome.background,
        shapes: outcome.records.iter().map(StoredShape::from).collect(),
    };
    if let Some(budget) = reduce {
        let reduced = ShapeSet {
            background: exact.background,
            shapes: outcome
                .records
                .iter()
                .map(|r| StoredShape {
                    contour: reduce_contour(&r.contour, r.area, budget),
                    tolerance: r.tolerance,
                })
                .collect(),
        };
        let shapes: Vec<_> = reduced.shapes.iter().map(|s| (&s.contour, s.tolerance)).collect();
        match paint_shapes(tol.width(), tol.height(), reduced.background, &shapes, cfg.threads) {
            Ok(decoded) => {
                return Ok(Shapes {
                    set: reduced,
                    decoded,
                    reduced: true,
                })
            }
            Err(e) => warn!("reduced shapes do not fill cleanly ({e}); keeping exact shapes"),
        }
    }
    Ok(Shapes {
        set: exact,
        decoded: tol.clone(),
        reduced: false,
    })
}

/// Shape stream, or with `novis` whichever of shapes and labels-as-image is
/// smaller.
fn tolerance_section(set: &ShapeSet, decoded: &ToleranceRaster, k: usize, cfg: &EncodeConfig) -> Result<(ToleranceKind, Vec<u8>)> {
    let shapes = serialize_regions(set, &shape_codecs(cfg.slowest))?;
    if !cfg.novis {
        return Ok((ToleranceKind::Shapes, shapes));
    }
    let bits = label_bits(k);
    let (codec, mut best) = backend::compress_best(decoded.cells(), &shape_codecs(cfg.slowest))?;
    let mut raster = vec![codec as u8];
    raster.append(&mut best);
    if CodecId::PredictiveImage.available() {
        let labels: Vec<u16> = decoded.cells().iter().map(|&c| c as u16).collect();
        let z = backend::jpegls_encode(&labels, decoded.width(), decoded.height(), bits)?;
        if z.len() + 1 < raster.len() {
            raster = vec![CodecId::PredictiveImage as u8];
            raster.extend_from_slice(&z);
        }
    }
    if raster.len() < shapes.len() {
        Ok((ToleranceKind::Raster, raster))
    } else {
        Ok((ToleranceKind::Shapes, shapes))
    }
}

fn availability_flags() -> u16 {
    let mut f = 0;
    if !CodecId::PredictiveImage.available() {
        f |= flags::NO_IMAGE_BACKEND;
    }
    if !CodecId::LossyWavelet.available() {
        f |= flags::NO_LOSSY_BACKEND;
    }
    f
}

fn loss_vector(k: usize, cfg: &EncodeConfig, present: &[bool], template: bool) -> Result<Vec<LossSpec>> {
    if let Some((&b, _)) = cfg.loss.iter().find(|(&b, _)| b as usize >= k && !template) {
        return Err(Error::Config(format!("loss entry for bin {b}, but there are only {k} bins")));
    }
    let mut out = Vec::with_capacity(k);
    for b in 0..k {
        let spec = match cfg.loss.get(&(b as u8)) {
            Some(&s) => s,
            None if cfg.loss.is_empty() || !present[b] => LossSpec::Lossless,
            None => return Err(Error::Config(format!("label {b} has no loss entry"))),
        };
        if let LossSpec::Ratio(r) = spec {
            if !(r.is_finite() && r >= 1.0) {
                return Err(Error::Config(format!("compression ratio {r} for bin {b} must be >= 1")));
            }
            if !CodecId::LossyWavelet.available() {
                return Err(Error::BackendUnavailable("jpeg2000"));
            }
        }
        out.push(spec);
    }
    Ok(out)
}

fn tuned_partition(r: &Raster, cfg: &EncodeConfig) -> Result<Partition> {
    let tune_cfg = TuneConfig {
        bins: cfg.bins,
        sigma: cfg.sigma,
        floor: cfg.floor,
        ..TuneConfig::default()
    };
    let tune = auto_tune(r, &tune_cfg);
    let k = tune.plan.k();
    let (floor, sigma) = (tune.plan.floor(), tune.sigma);
    labelled_partition("tuned", r, tune.transform, tune.packed, &tune.tolerance, k, sigma, floor, cfg)
}

/// Two levels split at the Otsu threshold of the raw histogram, no blur. Image backends do best
/// with few bins and exact boundaries.
fn coarse_partition(r: &Raster, cfg: &EncodeConfig) -> Result<Option<Partition>> {
    let (packed, transform) = histogram_pack(r);
    let hist = packed_histogram(&packed, transform.len());
    // Ranks stretch wide classes, so the split is found on raw intensities.
    let Ok(raw_t) = otsu_floor(&crate::raster_io::intensity_histogram(r)) else {
        return Ok(None);
    };
    let t = transform.pack_ceil(raw_t as u16);
    let count = |lo: u32, hi: u32| hist[lo as usize..=hi as usize].iter().sum::<u64>();
    let top = transform.len() as u32 - 1;
    let plan = ThresholdPlan::from_bins(
        vec![
            Bin { lo: 0, hi: t - 1, count: count(0, t - 1) },
            Bin { lo: t, hi: top, count: count(t, top) },
        ],
        None,
        0.0,
    )?;
    let tol = tolerance_raster(&packed, &plan, None)?;
    labelled_partition("coarse", r, transform, packed, &tol, 2, 0.0, None, cfg).map(Some)
}

#[allow(clippy::too_many_arguments)]
fn labelled_partition(
    label: &'static str,
    r: &Raster,
    transform: PackingTransform,
    packed: Raster,
    labels: &ToleranceRaster,
    k: usize,
    sigma: f64,
    floor: Option<u32>,
    cfg: &EncodeConfig,
) -> Result<Partition> {
    let m = min_region_size(r.width(), r.height());
    let tol = relabel_small_regions(labels, m);
    let shapes = build_shapes(&tol, cfg.reduce, cfg)?;
    let members = members_of(&shapes.decoded, k);
    let present: Vec<bool> = members.iter().map(|m| !m.is_empty()).collect();
    let loss = loss_vector(k, cfg, &present, false)?;
    let (tol_kind, tol_bytes) = tolerance_section(&shapes.set, &shapes.decoded, k, cfg)?;
    let mut fl = 0;
    if shapes.reduced {
        fl |= flags::REDUCED_SHAPES;
    }
    if tol_kind == ToleranceKind::Raster {
        fl |= flags::TOLERANCE_RASTER;
    }
    Ok(Partition {
        label,
        transform,
        packed: packed.pixels().to_vec(),
        members,
        loss,
        tol_kind,
        tol_bytes,
        flags: fl,
        sigma,
        floor,
        reduce: cfg.reduce.map(|v| v.clamp(1, u16::MAX as usize) as u16),
        regions: shapes.set.shapes.len(),
        vertices: shapes.set.shapes.iter().map(|s| s.contour.vertex_count()).sum(),
        background: shapes.set.background,
        tol: shapes.decoded,
    })
}

/// The same labels with samples left in original units. Ranks bend smooth
/// gradients, which costs the image backend.
fn unpacked(part: &Partition, r: &Raster, label: &'static str) -> Partition {
    let mut p = part.clone();
    p.label = label;
    p.transform = PackingTransform::identity(r.max_value(), r.bit_depth());
    p.packed = r.pixels().to_vec();
    p
}

fn template_partition(r: &Raster, template: &Raster, cfg: &EncodeConfig) -> Result<Partition> {
    let tol = template_labels(template, r.width(), r.height())?;
    let k = tol.cells().iter().copied().max().unwrap_or(0) as usize + 1;
    let members = members_of(&tol, k);
    let present: Vec<bool> = members.iter().map(|m| !m.is_empty()).collect();
    let loss = loss_vector(k, cfg, &present, true)?;
    // Template labels are kept exactly: no relabelling, no reduction.
    let shapes = build_shapes(&tol, None, cfg)?;
    let (tol_kind, tol_bytes) = tolerance_section(&shapes.set, &shapes.decoded, k, cfg)?;
    let (packed, transform) = histogram_pack(r);
    let mut fl = flags::TEMPLATE;
    if tol_kind == ToleranceKind::Raster {
        fl |= flags::TOLERANCE_RASTER;
    }
    Ok(Partition {
        label: "template",
        transform,
        packed: packed.pixels().to_vec(),
        members,
        loss,
        tol_kind,
        tol_bytes,
        flags: fl,
        sigma: 0.0,
        floor: None,
        reduce: None,
        regions: shapes.set.shapes.len(),
        vertices: shapes.set.shapes.iter().map(|s| s.contour.vertex_count()).sum(),
        background: shapes.set.background,
        tol,
    })
}

/// One bin, no shapes. `pack` chooses histogram packing over identity.
fn baseline_partition(r: &Raster, pack: bool, cfg: &EncodeConfig) -> Result<Partition> {
    let (transform, packed) = if pack {
        let (p, t) = histogram_pack(r);
        (t, p.pixels().to_vec())
    } else {
        (PackingTransform::identity(r.max_value(), r.bit_depth()), r.pixels().to_vec())
    };
    let tol = ToleranceRaster::zeros(r.width(), r.height());
    let set = ShapeSet::default();
    let tol_bytes = serialize_regions(&set, &shape_codecs(cfg.slowest))?;
    Ok(Partition {
        label: if pack { "single bin, packed" } else { "single bin, unpacked" },
        transform,
        packed,
        members: members_of(&tol, 1),
        loss: vec![LossSpec::Lossless],
        tol_kind: ToleranceKind::Shapes,
        tol_bytes,
        flags: 0,
        sigma: 0.0,
        floor: None,
        reduce: None,
        regions: 0,
        vertices: 0,
        background: 0,
        tol,
    })
}

fn sample_bits(values: &[u16]) -> u8 {
    depth_for_max(values.iter().copied().max().unwrap_or(0) as u32).max(1)
}

/// Bin values (already offset) in raster order through the smallest of
/// `codecs`.
pub fn encode_bin_binned(values: &[u16], codecs: &[CodecId]) -> Result<(PayloadInfo, Vec<u8>)> {
    let bits = sample_bits(values);
    let raw = backend::samples_to_bytes(values, bits);
    let (codec, z) = backend::compress_best(&raw, codecs)?;
    Ok((
        PayloadInfo {
            codec,
            bits,
            raw_len: raw.len() as u64,
            len: z.len() as u64,
            crc: crc32fast::hash(&z),
        },
        z,
    ))
}

/// Bin values placed into the members' bounding box, every other pixel set
/// to `pad`, coded as an image. `ratio` applies to the lossy backend only.
pub fn encode_bin_cropped(
    values: &[u16],
    members: &[usize],
    width: u32,
    codec: CodecId,
    pad: u16,
    ratio: f32,
) -> Result<(BBox, PayloadInfo, Vec<u8>)> {
    if members.is_empty() {
        return Err(Error::Config("cannot crop an empty bin".into()));
    }
    let w = width as usize;
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for &i in members {
        let (x, y) = (i % w, i / w);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let (cw, ch) = (x1 - x0 + 1, y1 - y0 + 1);
    let mut grid = vec![pad; cw * ch];
    for (&i, &v) in members.iter().zip(values) {
        grid[(i / w - y0) * cw + (i % w - x0)] = v;
    }
    let bits = sample_bits(&grid);
    let z = match codec {
        CodecId::PredictiveImage => backend::jpegls_encode(&grid, cw as u32, ch as u32, bits)?,
        CodecId::LossyWavelet => backend::j2k_encode(&grid, cw as u32, ch as u32, bits, ratio)?,
        other => backend::compress(other, &backend::samples_to_bytes(&grid, bits))?,
    };
    let crop = BBox {
        x: x0 as u32,
        y: y0 as u32,
        width: cw as u32,
        height: ch as u32,
    };
    let raw_len = (cw * ch) as u64 * if bits <= 8 { 1 } else { 2 };
    Ok((
        crop,
        PayloadInfo {
            codec,
            bits,
            raw_len,
            len: z.len() as u64,
            crc: crc32fast::hash(&z),
        },
        z,
    ))
}

/// The whole raster of offset values through one backend.
pub fn encode_inplace(samples: &[u16], width: u32, height: u32, codec: CodecId) -> Result<(PayloadInfo, Vec<u8>)> {
    let bits = sample_bits(samples);
    let (z, raw_len) = match codec {
        CodecId::PredictiveImage => (
            backend::jpegls_encode(samples, width, height, bits)?,
            samples.len() as u64 * if bits <= 8 { 1 } else { 2 },
        ),
        CodecId::LossyWavelet => return Err(Error::Config("in-place coding is lossless only".into())),
        other => {
            let raw = backend::samples_to_bytes(samples, bits);
            (backend::compress(other, &raw)?, raw.len() as u64)
        }
    };
    Ok((
        PayloadInfo {
            codec,
            bits,
            raw_len,
            len: z.len() as u64,
            crc: crc32fast::hash(&z),
        },
        z,
    ))
}

fn shannon(values: &[u16]) -> f64 {
    let mut hist = vec![0u64; values.iter().copied().max().unwrap_or(0) as usize + 1];
    for &v in values {
        hist[v as usize] += 1;
    }
    entropy_from_histogram(&hist)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Plan {
    InPlace(CodecId),
    Binned,
    Mixed,
    /// Mixed, but each bin takes whichever route codes it smaller.
    MixedTrial,
}

impl Plan {
    fn strategy(self) -> Strategy {
        match self {
            Plan::InPlace(_) => Strategy::InPlace,
            Plan::Binned => Strategy::Binned,
            Plan::Mixed | Plan::MixedTrial => Strategy::Mixed,
        }
    }
}

/// Offset and values of a lossless bin, in packed units.
fn lossless_values(part: &Partition, b: usize) -> (u16, Vec<u16>) {
    let m = &part.members[b];
    let min = m.iter().map(|&i| part.packed[i]).min().unwrap_or(0);
    (min, m.iter().map(|&i| part.packed[i] - min).collect())
}

/// Bins above the entropy threshold go to a general backend. When every
/// bin lands on one side although entropies differ by a bit or more, the
/// threshold moves to the midpoint so both backends are used.
fn mixed_routes(entropies: &[Option<f64>], threshold: f64) -> Vec<bool> {
    let known: Vec<f64> = entropies.iter().flatten().copied().collect();
    let mut t = threshold;
    if known.len() >= 2 {
        let lo = known.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = known.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let one_side = known.iter().all(|&h| h > t) || known.iter().all(|&h| h <= t);
        if one_side && hi - lo >= 1.0 {
            t = (lo + hi) / 2.0;
        }
    }
    entropies.iter().map(|e| e.map(|h| h > t).unwrap_or(true)).collect()
}

fn build_parts(r: &Raster, part: &Partition, plan: Plan, cfg: &EncodeConfig) -> Result<ContainerParts> {
    let k = part.members.len();
    let (w, h) = (r.width(), r.height());
    let mut bins: Vec<(BinDescriptor, Vec<u8>)> = Vec::with_capacity(k);
    let mut whole = None;
    let image_ok = CodecId::PredictiveImage.available();

    let entropies: Vec<Option<f64>> = (0..k)
        .map(|b| {
            (part.loss[b] == LossSpec::Lossless && !part.members[b].is_empty())
                .then(|| shannon(&lossless_values(part, b).1))
        })
        .collect();
    let general_route = mixed_routes(&entropies, cfg.entropy_threshold);

    if let Plan::InPlace(codec) = plan {
        if part.loss.iter().any(|l| *l != LossSpec::Lossless) {
            return Err(Error::Config("in-place coding cannot carry lossy bins".into()));
        }
        let offsets: Vec<u16> = (0..k).map(|b| lossless_values(part, b).0).collect();
        let samples: Vec<u16> = part
            .packed
            .iter()
            .zip(part.tol.cells())
            .map(|(&p, &t)| p - offsets[t as usize])
            .collect();
        whole = Some(encode_inplace(&samples, w, h, codec)?);
        for (b, &off) in offsets.iter().enumerate() {
            let mut d = BinDescriptor::empty(b as u8);
            d.offset = off;
            bins.push((d, Vec::new()));
        }
    } else {
        for b in 0..k {
            let mut d = BinDescriptor::empty(b as u8);
            let members = &part.members[b];
            if members.is_empty() {
                bins.push((d, Vec::new()));
                continue;
            }
            let bytes = match part.loss[b] {
                LossSpec::Mean => {
                    let sum: u64 = members.iter().map(|&i| r.pixels()[i] as u64).sum();
                    let n = members.len() as u64;
                    d.offset = ((sum + n / 2) / n) as u16;
                    d.loss = LossTag::Mean;
                    Vec::new()
                }
                LossSpec::Ratio(ratio) => {
                    let orig: Vec<u16> = members.iter().map(|&i| r.pixels()[i]).collect();
                    let min = orig.iter().copied().min().unwrap();
                    let vals: Vec<u16> = orig.iter().map(|&v| v - min).collect();
                    let mean = (vals.iter().map(|&v| v as u64).sum::<u64>() / vals.len() as u64) as u16;
                    let (crop, info, z) = encode_bin_cropped(&vals, members, w, CodecId::LossyWavelet, mean, ratio)?;
                    d.offset = min;
                    d.loss = LossTag::Ratio(ratio);
                    d.layout = Layout::Cropped;
                    d.crop = crop;
                    d.payload = info;
                    z
                }
                LossSpec::Lossless => {
                    let (off, vals) = lossless_values(part, b);
                    d.offset = off;
                    let try_general = plan != Plan::Mixed || !image_ok || general_route[b];
                    let try_image = image_ok
                        && match plan {
                            Plan::Mixed => !general_route[b],
                            Plan::MixedTrial => true,
                            _ => cfg.slowest,
                        };
                    let mut best: Option<(Layout, BBox, PayloadInfo, Vec<u8>)> = None;
                    if try_general {
                        let (info, z) = encode_bin_binned(&vals, &bin_codecs(cfg.slowest))?;
                        best = Some((Layout::Sequence, d.crop, info, z));
                    }
                    if try_image {
                        let (crop, info, z) = encode_bin_cropped(&vals, members, w, CodecId::PredictiveImage, 0, 0.0)?;
                        if best.as_ref().map(|b| z.len() < b.3.len()).unwrap_or(true) {
                            best = Some((Layout::Cropped, crop, info, z));
                        }
                    }
                    let (layout, crop, info, z) = best.expect("at least one route");
                    d.layout = layout;
                    d.crop = crop;
                    d.payload = info;
                    z
                }
            };
            bins.push((d, bytes));
        }
    }

    let mut fl = part.flags | availability_flags();
    if cfg.slowest {
        fl |= flags::SLOWEST;
    }
    let mut parts = ContainerParts {
        header: Header {
            width: w,
            height: h,
            bit_depth: r.bit_depth(),
            k: k as u16,
            strategy: plan.strategy(),
            flags: fl,
            sigma: part.sigma as f32,
            floor: part.floor,
            reduce: part.reduce,
        },
        packing: part.transform.clone(),
        tolerance_kind: part.tol_kind,
        tolerance_bytes: part.tol_bytes.clone(),
        whole,
        bins,
        raster_crc: raster_crc(r.pixels()),
    };
    if part.loss.iter().any(|l| *l != LossSpec::Lossless) {
        // The stored checksum covers what the decoder will produce.
        let bytes = write_container(&parts);
        let c = parse_container(&bytes, &DecodeLimits::default())?;
        parts.raster_crc = raster_crc(&decode_samples(&c, cfg.threads)?);
    }
    Ok(parts)
}

/// Decodes `bytes` and checks every lossless-bin pixel against `r`.
fn verify(bytes: &[u8], r: &Raster, part: &Partition, threads: usize) -> Result<()> {
    let c = parse_container(bytes, &DecodeLimits::default())?;
    let decoded = crate::decode::decode_parsed(&c, threads)?;
    let lossless = |i: usize| part.loss[part.tol.cells()[i] as usize] == LossSpec::Lossless;
    let bad = decoded
        .pixels()
        .iter()
        .zip(r.pixels())
        .enumerate()
        .filter(|&(i, (a, b))| a != b && lossless(i))
        .count();
    if decoded.bit_depth() != r.bit_depth() || bad > 0 {
        return Err(Error::Internal(format!("round trip differs in {bad} lossless pixels")));
    }
    Ok(())
}

fn inplace_codecs() -> Vec<CodecId> {
    let mut v = Vec::new();
    if CodecId::PredictiveImage.available() {
        v.push(CodecId::PredictiveImage);
    }
    v.extend([CodecId::GeneralBwt, CodecId::GeneralLz]);
    v
}

fn plans_for(strategy: Strategy, slowest: bool, lossy: bool) -> Vec<Plan> {
    let image_ok = CodecId::PredictiveImage.available();
    let inplace: Vec<Plan> = if lossy {
        Vec::new()
    } else if slowest {
        inplace_codecs().into_iter().map(Plan::InPlace).collect()
    } else {
        vec![Plan::InPlace(if image_ok { CodecId::PredictiveImage } else { CodecId::GeneralBwt })]
    };
    match strategy {
        Strategy::InPlace => inplace,
        Strategy::Binned => vec![Plan::Binned],
        Strategy::Mixed => vec![Plan::Mixed],
        Strategy::Auto => {
            let mut v: Vec<Plan> = if lossy {
                Vec::new()
            } else {
                inplace_codecs().into_iter().map(Plan::InPlace).collect()
            };
            v.push(Plan::Binned);
            if image_ok {
                v.extend([Plan::Mixed, Plan::MixedTrial]);
            }
            v
        }
    }
}

pub struct Encoded {
    pub bytes: Vec<u8>,
    pub report: EncodeReport,
}

pub fn encode(r: &Raster, cfg: &EncodeConfig) -> Result<Vec<u8>> {
    encode_with_report(r, cfg).map(|e| e.bytes)
}

/// Builds every candidate the configuration allows, verifies each by
/// decoding it, and keeps the smallest.
pub fn encode_with_report(r: &Raster, cfg: &EncodeConfig) -> Result<Encoded> {
    let main = match &cfg.template {
        Some(t) => template_partition(r, t, cfg)?,
        None => tuned_partition(r, cfg)?,
    };
    let lossy = main.loss.iter().any(|l| *l != LossSpec::Lossless);
    if cfg.strategy == Strategy::InPlace && lossy {
        return Err(Error::Config("lossy bins need a binned or mixed strategy".into()));
    }
    let mut partitions = vec![main];
    if cfg.strategy == Strategy::Auto && cfg.template.is_none() && !lossy {
        let packs = !partitions[0].transform.is_identity();
        if packs {
            partitions.push(unpacked(&partitions[0], r, "tuned, unpacked"));
        }
        // Explicit thresholding overrides pin the partition.
        if cfg.bins.is_none() && cfg.sigma.is_none() && cfg.floor == FloorMode::Auto {
            if let Some(c) = coarse_partition(r, cfg)? {
                if c.tol != partitions[0].tol {
                    if packs {
                        partitions.push(unpacked(&c, r, "coarse, unpacked"));
                    }
                    partitions.push(c);
                }
            }
            partitions.push(baseline_partition(r, false, cfg)?);
            let (_, t) = histogram_pack(r);
            if !t.is_identity() {
                partitions.push(baseline_partition(r, true, cfg)?);
            }
        }
    }

    let mut reports = Vec::new();
    let mut survivors: Vec<(Candidate, usize)> = Vec::new();
    let mut last_err = None;
    for (pi, part) in partitions.iter().enumerate() {
        let plans = if !part.label.starts_with("single bin") {
            plans_for(cfg.strategy, cfg.slowest, lossy)
        } else {
            inplace_codecs().into_iter().map(Plan::InPlace).collect()
        };
        for plan in plans {
            let label = match plan {
                Plan::InPlace(c) => format!("{}: in-place {c}", part.label),
                Plan::MixedTrial => format!("{}: mixed, per-bin trial", part.label),
                other => format!("{}: {}", part.label, other.strategy()),
            };
            let built = build_parts(r, part, plan, cfg)
                .map(|p| write_container(&p))
                .and_then(|bytes| verify(&bytes, r, part, cfg.threads).map(|_| bytes));
            match built {
                Ok(bytes) => {
                    reports.push(CandidateReport {
                        label: label.clone(),
                        strategy: plan.strategy(),
                        bytes: Some(bytes.len()),
                    });
                    survivors.push((
                        Candidate {
                            label,
                            strategy: plan.strategy(),
                            bytes,
                        },
                        pi,
                    ));
                }
                Err(e) => {
                    warn!("candidate {label} dropped: {e}");
                    reports.push(CandidateReport {
                        label,
                        strategy: plan.strategy(),
                        bytes: None,
                    });
                    last_err = Some(e);
                }
            }
        }
    }
    let index: Vec<usize> = survivors.iter().map(|s| s.1).collect();
    let labels: Vec<String> = survivors.iter().map(|s| s.0.label.clone()).collect();
    let chosen = match select_strategy(survivors.into_iter().map(|s| s.0).collect()) {
        Ok(c) => c,
        Err(e) => return Err(last_err.unwrap_or(e)),
    };
    let part = &partitions[index[labels.iter().position(|l| *l == chosen.label).unwrap()]];
    Ok(Encoded {
        report: EncodeReport {
            strategy: chosen.strategy,
            label: chosen.label.clone(),
            k: part.members.len(),
            sigma: part.sigma,
            regions: part.regions,
            vertices: part.vertices,
            background: part.background,
            tolerance_kind: part.tol_kind,
            candidates: reports,
        },
        bytes: chosen.bytes,
    })
}
