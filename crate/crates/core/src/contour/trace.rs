use super::{find_holes, moore_chain, ring_is_simple, step, Chain, GeometricContour, PixelMask, PixelRegion, Vertex};
use crate::decode::fill_region;
use crate::error::{Error, Result};

/// Chain index of pixel `target` within (from, from + window], if any.
fn locate(chain: &Chain, from: usize, target: Vertex, window: usize) -> Option<usize> {
    let end = (from + window).min(chain.len());
    (from + 1..=end).find(|&j| chain.at(j) == target)
}

fn run_end(chain: &Chain, i: usize) -> usize {
    let d = chain.dirs[i];
    let mut j = i + 1;
    while j < chain.len() && chain.dirs[j] == d {
        j += 1;
    }
    j
}

/// Next vertex index after chain index `i`.
///
/// Two rays advance in the step direction d: one from the empty pixel v_e
/// seen just before the next boundary pixel v_f, one from v_f itself. The
/// walk halts when the empty ray lands on a member (that member becomes the
/// candidate) or the filled ray leaves the region (its last inside pixel is
/// the candidate). Diagonal rays also halt on the corner configurations
/// below. A candidate is kept only if the straight raster to it retraces
/// the boundary; otherwise the plain run of equal steps is used.
fn agc_next(chain: &Chain, mask: &PixelMask, i: usize, limit: usize) -> usize {
    let n = chain.len();
    let d = chain.dirs[i];
    let (dx, dy) = super::DIRS[d as usize];
    let v0 = chain.pts[0];
    let vf = chain.at(i + 1);
    let fallback = run_end(chain, i);
    let Some(ve) = chain.empties[i] else {
        return fallback;
    };
    let m = |v: Vertex| mask.contains_v(v);

    let mut hit = None;
    let mut stop = None;
    let mut reach = 0usize;
    for l in 1..=limit as i32 {
        let e = step(ve, d, l);
        let f = step(vf, d, l);
        reach = l as usize;
        if m(e) {
            hit = Some(e);
            stop = Some(step(vf, d, l - 1));
            break;
        }
        if !m(f) {
            stop = Some(step(vf, d, l - 1));
            break;
        }
        if dx != 0 && dy != 0 {
            let corner = m(Vertex::new(e.x, e.y - dy)) && m(Vertex::new(e.x - dx, e.y));
            let pinch = m(Vertex::new(e.x + dx, e.y))
                && m(Vertex::new(e.x - dx, e.y))
                && step(ve, d, l + 1) == v0;
            if corner || pinch {
                stop = Some(step(vf, d, l - 1));
                break;
            }
        }
    }

    let window = 4 * (reach + 2) + 2;
    let mut best = fallback;
    for cand in [hit, stop].into_iter().flatten() {
        if let Some(j) = locate(chain, i, cand, window) {
            if j > best && chain.edge_is_exact(i, j) {
                best = j;
            }
        }
    }
    best.min(n)
}

fn agc_indices(chain: &Chain, mask: &PixelMask) -> Vec<usize> {
    let n = chain.len();
    let mut out = vec![0];
    if n == 1 {
        return out;
    }
    let b = mask.bbox();
    let limit = (b.width.max(b.height) as usize + 2).min(n + 2);
    let mut i = 0;
    loop {
        let j = agc_next(chain, mask, i, limit);
        if j >= n {
            break;
        }
        out.push(j);
        i = j;
    }
    out
}

fn run_indices(chain: &Chain) -> Vec<usize> {
    let n = chain.len();
    let mut out = vec![0];
    for i in 1..n {
        if chain.dirs[i] != chain.dirs[i - 1] {
            out.push(i);
        }
    }
    out
}

/// AGC ring for a mask, starting at its lowest-then-leftmost pixel.
pub fn trace_ring(mask: &PixelMask) -> Result<Vec<Vertex>> {
    let chain = moore_chain(mask)?;
    Ok(agc_indices(&chain, mask)
        .into_iter()
        .map(|i| chain.pts[i])
        .collect())
}

pub fn trace_contour(r: &PixelRegion) -> Result<GeometricContour> {
    let mut masks = vec![r.mask.clone()];
    masks.extend(find_holes(&r.mask));
    let chains = masks
        .iter()
        .map(moore_chain)
        .collect::<Result<Vec<_>>>()?;

    let build = |pick: &dyn Fn(&Chain, &PixelMask) -> Vec<usize>| -> GeometricContour {
        let mut rings: Vec<Vec<Vertex>> = chains
            .iter()
            .zip(&masks)
            .map(|(c, m)| pick(c, m).into_iter().map(|i| c.pts[i]).collect())
            .collect();
        let outer = rings.remove(0);
        GeometricContour {
            outer,
            holes: rings,
        }
    };

    let agc = build(&agc_indices);
    if reproduces(&agc, &r.mask) {
        return Ok(agc);
    }
    log::debug!("AGC ring rejected at {:?}; using run-merged boundary", r.mask.start());
    let runs = build(&|c, _| run_indices(c));
    if reproduces(&runs, &r.mask) {
        return Ok(runs);
    }
    Err(Error::Internal(format!(
        "no pixel-perfect contour for region starting at {:?}",
        r.mask.start()
    )))
}

/// Simple rings whose fill is exactly `mask`.
pub(crate) fn reproduces(c: &GeometricContour, mask: &PixelMask) -> bool {
    c.rings().all(|r| ring_is_simple(r))
        && matches!(fill_region(c), Ok(f) if &f == mask)
}
