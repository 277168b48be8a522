use super::{raster_segment, step, PixelMask, Vertex};
use crate::error::{Error, Result};

/// Closed 8-connected boundary walk of a mask, region on the left.
/// `dirs[i]` leads from `pts[i]` to `pts[i + 1]` (cyclically) and
/// `empties[i]` is the last non-member passed before that neighbour was
/// found in the counterclockwise sweep.
#[derive(Clone, Debug)]
pub(crate) struct Chain {
    pub pts: Vec<Vertex>,
    pub dirs: Vec<u8>,
    pub empties: Vec<Option<Vertex>>,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn at(&self, i: usize) -> Vertex {
        self.pts[i % self.pts.len()]
    }

    /// The edge between chain indices a < b (b may equal len, meaning the
    /// start again) is exact when the straight raster between its ends
    /// walks the very same pixels as the chain.
    pub fn edge_is_exact(&self, a: usize, b: usize) -> bool {
        debug_assert!(a < b && b <= self.len());
        if b - a == 1 {
            return true;
        }
        let (p, q) = (self.at(a), self.at(b));
        let span = (p.x - q.x).unsigned_abs().max((p.y - q.y).unsigned_abs()) as usize;
        if span != b - a {
            return false;
        }
        raster_segment(p, q)
            .into_iter()
            .enumerate()
            .all(|(k, v)| v == self.at(a + k))
    }

    /// A straight raster uses at most two step directions, 45 degrees apart.
    /// Returns the first index c > a at which chain steps a..c stop fitting.
    pub fn straight_limit(&self, a: usize, max: usize) -> usize {
        let mut seen: [bool; 8] = [false; 8];
        let mut distinct = 0;
        let mut first = None;
        for i in a..max {
            let d = self.dirs[i % self.len()];
            if !seen[d as usize] {
                match first {
                    None => first = Some(d),
                    Some(f) => {
                        let diff = (d as i32 - f as i32).rem_euclid(8);
                        if distinct >= 2 || (diff != 1 && diff != 7) {
                            return i;
                        }
                    }
                }
                seen[d as usize] = true;
                distinct += 1;
            }
        }
        max
    }
}

/// Radial-sweep boundary trace from the lowest-then-leftmost member.
/// Each sweep starts one step counterclockwise of the previous pixel; the
/// walk ends when the start would be left through the same first step again.
pub(crate) fn moore_chain(mask: &PixelMask) -> Result<Chain> {
    let v0 = mask.start();
    let mut chain = Chain {
        pts: Vec::new(),
        dirs: Vec::new(),
        empties: Vec::new(),
    };
    let isolated = (0..8u8).all(|d| !mask.contains_v(step(v0, d, 1)));
    if isolated {
        chain.pts.push(v0);
        return Ok(chain);
    }
    let limit = 8 * mask.count() + 8;
    let mut cur = v0;
    // The virtual previous pixel sits West of the start.
    let mut back: u8 = 4;
    loop {
        let mut found = None;
        for s in 1..=8u8 {
            let d = (back + s) % 8;
            if mask.contains_v(step(cur, d, 1)) {
                found = Some(d);
                break;
            }
        }
        let d = found.ok_or_else(|| Error::Internal("boundary walk stranded".into()))?;
        let next = step(cur, d, 1);
        if cur == v0 && chain.pts.len() > 1 && next == chain.pts[1] {
            break;
        }
        let empty = (1..8u8)
            .map(|s| step(cur, (d + 8 - s) % 8, 1))
            .find(|&v| !mask.contains_v(v));
        chain.pts.push(cur);
        chain.dirs.push(d);
        chain.empties.push(empty);
        if chain.pts.len() > limit {
            return Err(Error::Internal(format!(
                "boundary walk exceeded {limit} steps"
            )));
        }
        back = (d + 4) % 8;
        cur = next;
    }
    Ok(chain)
}
