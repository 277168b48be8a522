use std::cmp::Ordering;
use std::ops::Range;

use crate::contour::{raster_segment, ring_is_simple, BBox, GeometricContour, PixelMask, Vertex};
use crate::error::{Error, Result};

/// Largest bitmap a single ring may allocate.
const MAX_RING_AREA: u64 = 1 << 32;

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedShape(msg.into())
}

fn floor_div(a: i128, b: i128) -> i128 {
    a.div_euclid(b)
}

fn ceil_div(a: i128, b: i128) -> i128 {
    -(-a).div_euclid(b)
}

struct Edge {
    y_lo: i32,
    y_hi: i32,
    x_lo: i32,
    dx: i32,
    dy: i32,
}

/// Scanline fill of one ring: every edge rasterised, then pixel centres on
/// each row lying strictly between crossing pairs. An edge crosses row y
/// when y_lo <= y < y_hi, so a vertex on the row counts for one of its two
/// edges only; horizontal edges never cross.
pub fn fill_ring(ring: &[Vertex]) -> Result<PixelMask> {
    if ring.is_empty() {
        return Err(malformed("empty ring"));
    }
    let (mut x0, mut y0, mut x1, mut y1) = (i32::MAX, i32::MAX, i32::MIN, i32::MIN);
    for v in ring {
        if v.x < 0 || v.y < 0 {
            return Err(malformed(format!("negative vertex ({}, {})", v.x, v.y)));
        }
        x0 = x0.min(v.x);
        y0 = y0.min(v.y);
        x1 = x1.max(v.x);
        y1 = y1.max(v.y);
    }
    let bw = (x1 - x0) as u64 + 1;
    let bh = (y1 - y0) as u64 + 1;
    if bw * bh > MAX_RING_AREA {
        return Err(malformed(format!("ring bounding box {bw}x{bh} too large")));
    }
    if !ring_is_simple(ring) {
        return Err(malformed("ring edges cross"));
    }
    let bbox = BBox {
        x: x0 as u32,
        y: y0 as u32,
        width: bw as u32,
        height: bh as u32,
    };
    let w = bw as usize;
    let mut bits = vec![false; w * bh as usize];
    let n = ring.len();
    let mut edges = Vec::with_capacity(n);
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        for p in raster_segment(a, b) {
            bits[(p.y - y0) as usize * w + (p.x - x0) as usize] = true;
        }
        if a.y != b.y {
            let (lo, hi) = if a.y < b.y { (a, b) } else { (b, a) };
            edges.push(Edge {
                y_lo: lo.y,
                y_hi: hi.y,
                x_lo: lo.x,
                dx: hi.x - lo.x,
                dy: hi.y - lo.y,
            });
        }
    }
    edges.sort_by_key(|e| e.y_lo);

    let mut active: Vec<&Edge> = Vec::new();
    let mut next = 0;
    let mut xs: Vec<(i128, i128)> = Vec::new();
    for y in y0..=y1 {
        active.retain(|e| e.y_hi > y);
        while next < edges.len() && edges[next].y_lo <= y {
            if edges[next].y_hi > y {
                active.push(&edges[next]);
            }
            next += 1;
        }
        xs.clear();
        for e in &active {
            let den = e.dy as i128;
            let num = e.x_lo as i128 * den + (y - e.y_lo) as i128 * e.dx as i128;
            xs.push((num, den));
        }
        xs.sort_by(|a, b| (a.0 * b.1).cmp(&(b.0 * a.1)).then(Ordering::Equal));
        let row = (y - y0) as usize * w;
        for pair in xs.chunks_exact(2) {
            let from = floor_div(pair[0].0, pair[0].1) + 1;
            let to = ceil_div(pair[1].0, pair[1].1) - 1;
            let from = from.max(x0 as i128);
            let to = to.min(x1 as i128);
            for x in from..=to {
                bits[row + (x - x0 as i128) as usize] = true;
            }
        }
    }
    Ok(PixelMask::from_bitmap(bbox, bits).expect("vertices are drawn"))
}

/// Outer ring fill minus every hole ring's fill.
pub fn fill_region(c: &GeometricContour) -> Result<PixelMask> {
    let mut mask = fill_ring(&c.outer)?;
    for hole in &c.holes {
        let h = fill_ring(hole)?;
        mask = mask
            .subtract(&h)
            .ok_or_else(|| malformed("holes cover the whole ring"))?;
    }
    Ok(mask)
}

/// Contiguous, near-equal shares of the region list, one per worker.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FillSegmentPlan {
    segments: Vec<Range<usize>>,
}

impl FillSegmentPlan {
    pub fn new(regions: usize, threads: usize) -> Self {
        let t = threads.max(1).min(regions.max(1));
        let base = regions / t;
        let extra = regions % t;
        let mut segments = Vec::with_capacity(t);
        let mut start = 0;
        for i in 0..t {
            let len = base + usize::from(i < extra);
            segments.push(start..start + len);
            start += len;
        }
        FillSegmentPlan { segments }
    }

    pub fn segments(&self) -> &[Range<usize>] {
        &self.segments
    }
}

/// Fills every contour, segments running on scoped threads. Results come
/// back in input order whatever the thread count.
pub fn fill_all(contours: &[&GeometricContour], threads: usize) -> Vec<Result<PixelMask>> {
    let plan = FillSegmentPlan::new(contours.len(), threads);
    if plan.segments().len() <= 1 {
        return contours.iter().map(|c| fill_region(c)).collect();
    }
    let mut parts: Vec<Vec<Result<PixelMask>>> = Vec::new();
    std::thread::scope(|s| {
        let handles: Vec<_> = plan
            .segments()
            .iter()
            .map(|r| {
                let slice = &contours[r.clone()];
                s.spawn(move || slice.iter().map(|c| fill_region(c)).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            parts.push(h.join().expect("fill worker panicked"));
        }
    });
    parts.into_iter().flatten().collect()
}
