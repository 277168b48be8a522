use super::trace::reproduces;
use super::{find_holes, moore_chain, Chain, GeometricContour, PixelRegion, Vertex};

/// Chain indices of the ring's vertices, matched left to right; each edge
/// must retrace the chain between its matched ends.
fn map_ring(ring: &[Vertex], chain: &Chain) -> Option<Vec<usize>> {
    if ring.first() != chain.pts.first() {
        return None;
    }
    let n = chain.len();
    let mut idx = vec![0];
    for &v in &ring[1..] {
        let last = *idx.last().unwrap();
        let j = (last + 1..n).find(|&j| chain.pts[j] == v && chain.edge_is_exact(last, j))?;
        idx.push(j);
    }
    if n > 1 && !chain.edge_is_exact(*idx.last().unwrap(), n) {
        return None;
    }
    Some(idx)
}

/// From each kept vertex, jump to the furthest later vertex reachable by
/// an edge that retraces the boundary.
fn shortcut(idx: &[usize], chain: &Chain) -> Vec<usize> {
    let n = chain.len();
    if n == 1 {
        return vec![0];
    }
    let mut ext = idx.to_vec();
    ext.push(n);
    let mut out = vec![0];
    let mut a = 0;
    while ext[a] < n {
        let limit = chain.straight_limit(ext[a], n);
        let mut best = a + 1;
        for (b, &j) in ext.iter().enumerate().skip(a + 2) {
            if j > limit {
                break;
            }
            if chain.edge_is_exact(ext[a], j) {
                best = b;
            }
        }
        if ext[best] >= n {
            break;
        }
        out.push(ext[best]);
        a = best;
    }
    out
}

/// Replaces runs of vertices by the longest forward edges that stay on the
/// region boundary. Never adds vertices; returns the input unchanged when
/// it does not belong to `r` or nothing improves.
pub fn optimize_contour(c: &GeometricContour, r: &PixelRegion) -> GeometricContour {
    let holes = find_holes(&r.mask);
    if holes.len() != c.holes.len() {
        return c.clone();
    }
    let masks = std::iter::once(&r.mask).chain(holes.iter());
    let mut rings = Vec::with_capacity(holes.len() + 1);
    for (ring, mask) in c.rings().zip(masks) {
        let Ok(chain) = moore_chain(mask) else {
            return c.clone();
        };
        let Some(idx) = map_ring(ring, &chain) else {
            return c.clone();
        };
        rings.push(
            shortcut(&idx, &chain)
                .into_iter()
                .map(|i| chain.pts[i])
                .collect::<Vec<_>>(),
        );
    }
    let outer = rings.remove(0);
    let out = GeometricContour {
        outer,
        holes: rings,
    };
    if out.vertex_count() < c.vertex_count() && reproduces(&out, &r.mask) {
        out
    } else {
        c.clone()
    }
}
