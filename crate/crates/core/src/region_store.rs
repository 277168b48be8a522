//! Region ordering, pruning, background elimination and the compact shape
//! stream (sizes / tolerances / x / y blocks with a ring dictionary).

use std::collections::HashMap;

use crate::codec::backend::{self, CodecId};
use crate::contour::{label_components, BBox, GeometricContour, PixelRegion, Vertex};
use crate::decode::{fill_region, paint_shapes};
use crate::error::{corrupt, Error, Result};
use crate::threshold::ToleranceRaster;
use crate::wire::{put_varint, Reader};

/// m = max(32, floor(w * h * 0.4e-5)).
pub fn min_region_size(width: u32, height: u32) -> usize {
    let scaled = (width as f64 * height as f64 * 0.4e-5).floor() as usize;
    scaled.max(32)
}

/// |d| * 2, plus one when negative.
pub fn signbit_encode(delta: i64) -> u64 {
    (delta.unsigned_abs() << 1) | u64::from(delta < 0)
}

pub fn signbit_decode(v: u64) -> i64 {
    let mag = (v >> 1) as i64;
    if v & 1 == 1 {
        -mag
    } else {
        mag
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionRecord {
    pub contour: GeometricContour,
    pub tolerance: u8,
    pub area: usize,
    pub bbox: BBox,
}

impl RegionRecord {
    pub fn new(region: &PixelRegion, contour: GeometricContour) -> Self {
        RegionRecord {
            contour,
            tolerance: region.tolerance,
            area: region.area(),
            bbox: region.bbox(),
        }
    }
}

/// What the stream holds per region; area and bbox are not stored.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StoredShape {
    pub contour: GeometricContour,
    pub tolerance: u8,
}

impl From<&RegionRecord> for StoredShape {
    fn from(r: &RegionRecord) -> Self {
        StoredShape {
            contour: r.contour.clone(),
            tolerance: r.tolerance,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ShapeSet {
    /// Tolerance of every pixel no stored shape covers.
    pub background: u8,
    pub shapes: Vec<StoredShape>,
}

/// Relabels every 4-connected region smaller than `min_size` to the
/// tolerance most common among its outside 4-neighbours (lowest on ties).
/// Each pass takes small regions smallest first, skipping any that touch a
/// region already taken, so neighbours never swap labels and every pass
/// removes at least one region.
pub fn relabel_small_regions(t: &ToleranceRaster, min_size: usize) -> ToleranceRaster {
    let mut t = t.clone();
    if min_size <= 1 {
        return t;
    }
    let w = t.width() as usize;
    let h = t.height() as usize;
    loop {
        let (labels, sizes) = label_components(&t);
        if sizes.len() <= 1 {
            break;
        }
        let mut small: Vec<u32> = (0..sizes.len() as u32).filter(|&l| sizes[l as usize] < min_size).collect();
        if small.is_empty() {
            break;
        }
        small.sort_by_key(|&l| (sizes[l as usize], l));

        let mut touching: HashMap<u32, Vec<u32>> = HashMap::new();
        let mut votes: HashMap<u32, [u64; 256]> = HashMap::new();
        let is_small = |l: u32| sizes[l as usize] < min_size;
        for i in 0..w * h {
            let (x, y) = (i % w, i / w);
            let l = labels[i];
            for j in [(x + 1 < w).then(|| i + 1), (y + 1 < h).then(|| i + w)].into_iter().flatten() {
                let m = labels[j];
                if m == l {
                    continue;
                }
                for (a, b, cell) in [(l, m, j), (m, l, i)] {
                    if is_small(a) {
                        touching.entry(a).or_default().push(b);
                        votes.entry(a).or_insert([0; 256])[t.cells()[cell] as usize] += 1;
                    }
                }
            }
        }

        let mut blocked = vec![false; sizes.len()];
        let mut target: HashMap<u32, u8> = HashMap::new();
        for l in small {
            if blocked[l as usize] {
                continue;
            }
            let v = &votes[&l];
            let best = (0..256).max_by_key(|&k| (v[k], std::cmp::Reverse(k))).unwrap();
            target.insert(l, best as u8);
            blocked[l as usize] = true;
            for &n in &touching[&l] {
                blocked[n as usize] = true;
            }
        }
        let cells = t.cells_mut();
        for i in 0..w * h {
            if let Some(&nt) = target.get(&labels[i]) {
                cells[i] = nt;
            }
        }
    }
    t
}

/// Descending area; ties by lowest row, then leftmost column of the bbox.
pub fn sort_regions(records: &mut [RegionRecord]) {
    records.sort_by(|a, b| {
        b.area
            .cmp(&a.area)
            .then(a.bbox.y.cmp(&b.bbox.y))
            .then(a.bbox.x.cmp(&b.bbox.x))
    });
}

#[derive(Clone, Debug)]
pub struct PruneOutcome {
    pub records: Vec<RegionRecord>,
    pub background: u8,
    /// Regions removed for being smaller than the minimum size.
    pub dropped_small: usize,
    /// Background regions removed.
    pub eliminated: usize,
    /// Removed regions restored because decoding needed them.
    pub restored: usize,
}

impl PruneOutcome {
    pub fn vertex_count(&self) -> usize {
        self.records.iter().map(|r| r.contour.vertex_count()).sum()
    }
}

/// Drops regions below `min_size` and every region of the `background`
/// tolerance, then decodes the remainder onto a background-filled raster
/// and restores any removed region covering a pixel that came out wrong.
pub fn sort_and_prune(
    records: Vec<RegionRecord>,
    tolerance: &ToleranceRaster,
    min_size: usize,
    background: u8,
    threads: usize,
) -> Result<PruneOutcome> {
    let (mut kept, mut removed): (Vec<RegionRecord>, Vec<RegionRecord>) = records
        .into_iter()
        .partition(|r| r.area >= min_size && r.tolerance != background);
    let dropped_small = removed.iter().filter(|r| r.area < min_size).count();
    let eliminated = removed.len() - dropped_small;
    let mut restored = 0;
    sort_regions(&mut kept);
    loop {
        let shapes: Vec<(&GeometricContour, u8)> =
            kept.iter().map(|r| (&r.contour, r.tolerance)).collect();
        let painted = paint_shapes(tolerance.width(), tolerance.height(), background, &shapes, threads)?;
        let wrong: Vec<usize> = painted
            .cells()
            .iter()
            .zip(tolerance.cells())
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i)
            .collect();
        if wrong.is_empty() {
            break;
        }
        if removed.is_empty() {
            return Err(Error::Internal(format!(
                "{} pixels differ after restoring every pruned region",
                wrong.len()
            )));
        }
        let w = tolerance.width() as usize;
        let mut back = Vec::new();
        let mut still = Vec::new();
        for r in removed {
            let fill = fill_region(&r.contour)?;
            let hit = wrong
                .iter()
                .any(|&i| fill.contains((i % w) as i32, (i / w) as i32));
            if hit {
                back.push(r);
            } else {
                still.push(r);
            }
        }
        if back.is_empty() {
            // Lossy shapes can disagree everywhere; fall back to keeping all.
            back = still;
            still = Vec::new();
        }
        restored += back.len();
        kept.extend(back);
        removed = still;
        sort_regions(&mut kept);
    }
    Ok(PruneOutcome {
        records: kept,
        background,
        dropped_small,
        eliminated,
        restored,
    })
}

/// Runs `sort_and_prune` for every tolerance present and keeps the outcome
/// with the fewest stored vertices (lowest tolerance on ties).
pub fn prune_best_background(
    records: &[RegionRecord],
    tolerance: &ToleranceRaster,
    min_size: usize,
    threads: usize,
) -> Result<PruneOutcome> {
    let mut present = [false; 256];
    for &c in tolerance.cells() {
        present[c as usize] = true;
    }
    let mut best: Option<PruneOutcome> = None;
    for bg in (0..256).filter(|&b| present[b]) {
        let out = sort_and_prune(records.to_vec(), tolerance, min_size, bg as u8, threads)?;
        if best
            .as_ref()
            .map(|b| out.vertex_count() < b.vertex_count())
            .unwrap_or(true)
        {
            best = Some(out);
        }
    }
    best.ok_or_else(|| Error::Internal("empty tolerance raster".into()))
}

fn ring_corner(ring: &[Vertex]) -> (i64, i64) {
    let x = ring.iter().map(|v| v.x).min().unwrap_or(0);
    let y = ring.iter().map(|v| v.y).min().unwrap_or(0);
    (x as i64, y as i64)
}

/// Shape stream layout: u32 region count, u8 background tolerance, then
/// four blocks (sizes, tolerances, x, y). A block is codec id u8, raw
/// length u64, stored length u64 and the stored bytes; raw content is
/// LEB128 varints.
///
/// Per region the sizes block holds the hole count, then for each ring
/// its vertex count, or 0 followed by the index of an earlier stored ring
/// with identical local offsets. The x and y blocks hold, per ring, the
/// sign-bit delta of the ring's bottom-left corner from the previous
/// ring's corner, then (unless a reference) the local vertex offsets.
pub fn serialize_regions(set: &ShapeSet, codecs: &[CodecId]) -> Result<Vec<u8>> {
    let mut sizes = Vec::new();
    let mut tols = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dict: HashMap<Vec<(u32, u32)>, u64> = HashMap::new();
    let mut stored_rings = 0u64;
    let mut prev = (0i64, 0i64);
    for shape in &set.shapes {
        put_varint(&mut sizes, shape.contour.holes.len() as u64);
        put_varint(&mut tols, shape.tolerance as u64);
        for ring in shape.contour.rings() {
            if ring.is_empty() {
                return Err(Error::MalformedShape("empty ring".into()));
            }
            let corner = ring_corner(ring);
            put_varint(&mut xs, signbit_encode(corner.0 - prev.0));
            put_varint(&mut ys, signbit_encode(corner.1 - prev.1));
            prev = corner;
            let local: Vec<(u32, u32)> = ring
                .iter()
                .map(|v| ((v.x as i64 - corner.0) as u32, (v.y as i64 - corner.1) as u32))
                .collect();
            if let Some(&idx) = dict.get(&local) {
                put_varint(&mut sizes, 0);
                put_varint(&mut sizes, idx);
                continue;
            }
            put_varint(&mut sizes, local.len() as u64);
            for &(x, y) in &local {
                put_varint(&mut xs, x as u64);
                put_varint(&mut ys, y as u64);
            }
            dict.insert(local, stored_rings);
            stored_rings += 1;
        }
    }
    let mut out = Vec::new();
    out.extend_from_slice(&(set.shapes.len() as u32).to_le_bytes());
    out.push(set.background);
    for block in [&sizes, &tols, &xs, &ys] {
        let (codec, z) = backend::compress_best(block, codecs)?;
        out.push(codec as u8);
        out.extend_from_slice(&(block.len() as u64).to_le_bytes());
        out.extend_from_slice(&(z.len() as u64).to_le_bytes());
        out.extend_from_slice(&z);
    }
    Ok(out)
}

/// Decoded-size ceiling for each of the four blocks.
#[derive(Clone, Copy, Debug)]
pub struct StreamLimits {
    pub max_block_bytes: u64,
    /// Total vertices over all rings, dictionary copies included.
    pub max_vertices: u64,
}

impl Default for StreamLimits {
    fn default() -> Self {
        StreamLimits {
            max_block_bytes: 1 << 30,
            max_vertices: 1 << 30,
        }
    }
}

pub fn deserialize_regions(bytes: &[u8], limits: &StreamLimits) -> Result<ShapeSet> {
    deserialize_at(bytes, 0, limits)
}

/// As `deserialize_regions`, with error offsets shifted by `base`.
pub(crate) fn deserialize_at(bytes: &[u8], base: usize, limits: &StreamLimits) -> Result<ShapeSet> {
    let mut r = Reader::with_base(bytes, base);
    let count = r.u32("region count")? as usize;
    let background = r.u8("background tolerance")?;
    let mut blocks = Vec::with_capacity(4);
    for name in ["sizes", "tolerances", "x", "y"] {
        let at = r.offset();
        let codec = r.u8(name)?;
        let codec = CodecId::from_u8(codec)
            .filter(|c| !c.is_image())
            .ok_or_else(|| corrupt(at, format!("{name} block: unknown codec {codec}")))?;
        let raw_len = r.u64(name)?;
        let z_len = r.u64(name)?;
        if raw_len > limits.max_block_bytes {
            return Err(corrupt(at, format!("{name} block of {raw_len} bytes exceeds limit")));
        }
        let z = r.bytes(usize::try_from(z_len).unwrap_or(usize::MAX), name)?;
        let start = r.offset() - z.len();
        let raw = backend::decompress(codec, z, raw_len as usize).map_err(|e| match e {
            Error::Backend { reason, .. } => corrupt(start, format!("{name} block: {reason}")),
            other => other,
        })?;
        blocks.push((raw, start));
    }
    if !r.is_empty() {
        return Err(corrupt(r.offset(), "trailing bytes after shape stream"));
    }
    let mut sizes = Reader::with_base(&blocks[0].0, blocks[0].1);
    let mut tols = Reader::with_base(&blocks[1].0, blocks[1].1);
    let mut xs = Reader::with_base(&blocks[2].0, blocks[2].1);
    let mut ys = Reader::with_base(&blocks[3].0, blocks[3].1);
    // Every region needs at least one byte in the sizes block.
    if count > sizes.remaining() {
        return Err(corrupt(base, format!("{count} regions but sizes block is too short")));
    }

    let mut dict: Vec<Vec<(u32, u32)>> = Vec::new();
    let mut prev = (0i64, 0i64);
    let mut vertices = 0u64;
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let holes = sizes.varint_below(sizes.remaining() as u64 + 1, "hole count")? as usize;
        let tolerance = tols.varint_below(256, "tolerance")? as u8;
        let mut rings = Vec::with_capacity(holes + 1);
        for _ in 0..=holes {
            let dx = signbit_decode(xs.varint("corner x")?);
            let dy = signbit_decode(ys.varint("corner y")?);
            let corner = (prev.0 + dx, prev.1 + dy);
            if !(0..=i32::MAX as i64).contains(&corner.0) || !(0..=i32::MAX as i64).contains(&corner.1) {
                return Err(corrupt(xs.offset(), "ring corner out of range"));
            }
            prev = corner;
            let size = sizes.varint("ring size")?;
            let local = if size == 0 {
                let idx = sizes.varint_below(dict.len() as u64, "dictionary index")?;
                dict[idx as usize].clone()
            } else {
                if size > xs.remaining() as u64 || size > ys.remaining() as u64 {
                    return Err(corrupt(sizes.offset(), format!("ring of {size} vertices overruns")));
                }
                let mut local = Vec::with_capacity(size as usize);
                for _ in 0..size {
                    let x = xs.varint_below(1 << 31, "offset x")? as u32;
                    let y = ys.varint_below(1 << 31, "offset y")? as u32;
                    local.push((x, y));
                }
                dict.push(local.clone());
                local
            };
            vertices += local.len() as u64;
            if vertices > limits.max_vertices {
                return Err(corrupt(sizes.offset(), "shape stream exceeds the vertex limit"));
            }
            let mut ring = Vec::with_capacity(local.len());
            for (x, y) in local {
                let gx = corner.0 + x as i64;
                let gy = corner.1 + y as i64;
                if gx > i32::MAX as i64 || gy > i32::MAX as i64 {
                    return Err(corrupt(xs.offset(), "vertex out of range"));
                }
                ring.push(Vertex::new(gx as i32, gy as i32));
            }
            rings.push(ring);
        }
        let outer = rings.remove(0);
        shapes.push(StoredShape {
            contour: GeometricContour {
                outer,
                holes: rings,
            },
            tolerance,
        });
    }
    for (rd, name) in [(&sizes, "sizes"), (&tols, "tolerances"), (&xs, "x"), (&ys, "y")] {
        if !rd.is_empty() {
            return Err(corrupt(rd.offset(), format!("{name} block has unread data")));
        }
    }
    Ok(ShapeSet { background, shapes })
}

/// Number of rings stored with explicit offsets (dictionary misses).
pub fn stored_ring_count(set: &ShapeSet) -> usize {
    let mut seen = std::collections::HashSet::new();
    for s in &set.shapes {
        for ring in s.contour.rings() {
            let c = ring_corner(ring);
            let local: Vec<(i64, i64)> = ring.iter().map(|v| (v.x as i64 - c.0, v.y as i64 - c.1)).collect();
            seen.insert(local);
        }
    }
    seen.len()
}
