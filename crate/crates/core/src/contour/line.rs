use super::{GeometricContour, PixelMask, Vertex};

fn div_floor(a: i64, b: i64) -> i64 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

/// Symmetric integer line: one pixel per step of the major axis, minor
/// coordinate rounded half-up. Endpoints are taken in canonical order so
/// raster(a, b) is raster(b, a) reversed.
pub fn raster_segment(a: Vertex, b: Vertex) -> Vec<Vertex> {
    let dx = b.x as i64 - a.x as i64;
    let dy = b.y as i64 - a.y as i64;
    if dx == 0 && dy == 0 {
        return vec![a];
    }
    let x_major = dx.abs() >= dy.abs();
    let (s, e) = if x_major {
        if a.x <= b.x { (a, b) } else { (b, a) }
    } else if a.y <= b.y {
        (a, b)
    } else {
        (b, a)
    };
    let mut out = Vec::new();
    if x_major {
        let n = (e.x - s.x) as i64;
        let dd = (e.y - s.y) as i64;
        for i in 0..=n {
            let y = s.y as i64 + div_floor(2 * i * dd + n, 2 * n);
            out.push(Vertex::new(s.x + i as i32, y as i32));
        }
    } else {
        let n = (e.y - s.y) as i64;
        let dd = (e.x - s.x) as i64;
        for i in 0..=n {
            let x = s.x as i64 + div_floor(2 * i * dd + n, 2 * n);
            out.push(Vertex::new(x as i32, s.y + i as i32));
        }
    }
    if s != a {
        out.reverse();
    }
    out
}

/// Every vertex plus the rasterisation of every ring edge. None for an
/// empty contour or negative coordinates.
pub fn rasterize_edges(c: &GeometricContour) -> Option<PixelMask> {
    let mut px = Vec::new();
    for ring in c.rings() {
        for i in 0..ring.len() {
            let a = ring[i];
            let b = ring[(i + 1) % ring.len()];
            for v in raster_segment(a, b) {
                if v.x < 0 || v.y < 0 {
                    return None;
                }
                px.push((v.x as u32, v.y as u32));
            }
        }
    }
    PixelMask::from_pixels(px)
}

fn orient(a: Vertex, b: Vertex, c: Vertex) -> i64 {
    let v = (b.x as i64 - a.x as i64) * (c.y as i64 - a.y as i64)
        - (b.y as i64 - a.y as i64) * (c.x as i64 - a.x as i64);
    v.signum()
}

/// True when the segments meet in a single point interior to both.
pub fn segments_cross(a: Vertex, b: Vertex, c: Vertex, d: Vertex) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    o1 * o2 < 0 && o3 * o4 < 0
}

/// No two non-adjacent edges properly cross. Touching and collinear
/// overlap are allowed; they do not disturb the even-odd fill.
pub fn ring_is_simple(ring: &[Vertex]) -> bool {
    let n = ring.len();
    if n < 4 {
        return true;
    }
    struct E {
        i: usize,
        a: Vertex,
        b: Vertex,
        x0: i32,
        x1: i32,
        y0: i32,
        y1: i32,
    }
    let mut edges: Vec<E> = (0..n)
        .map(|i| {
            let a = ring[i];
            let b = ring[(i + 1) % n];
            E {
                i,
                a,
                b,
                x0: a.x.min(b.x),
                x1: a.x.max(b.x),
                y0: a.y.min(b.y),
                y1: a.y.max(b.y),
            }
        })
        .collect();
    edges.sort_by_key(|e| (e.x0, e.i));
    for p in 0..edges.len() {
        let e = &edges[p];
        for f in &edges[p + 1..] {
            if f.x0 > e.x1 {
                break;
            }
            let gap = e.i.abs_diff(f.i);
            if gap <= 1 || gap == n - 1 {
                continue;
            }
            if f.y0 > e.y1 || f.y1 < e.y0 {
                continue;
            }
            if segments_cross(e.a, e.b, f.a, f.b) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_steps_round_up() {
        let got = raster_segment(Vertex::new(0, 0), Vertex::new(2, 1));
        assert_eq!(got, vec![Vertex::new(0, 0), Vertex::new(1, 1), Vertex::new(2, 1)]);
        let rev = raster_segment(Vertex::new(2, 1), Vertex::new(0, 0));
        assert_eq!(rev, vec![Vertex::new(2, 1), Vertex::new(1, 1), Vertex::new(0, 0)]);
    }

    #[test]
    fn crossing_diagonals() {
        let v = Vertex::new;
        assert!(segments_cross(v(0, 0), v(1, 1), v(1, 0), v(0, 1)));
        assert!(!segments_cross(v(0, 0), v(2, 0), v(1, 0), v(1, 2)));
        assert!(!segments_cross(v(0, 0), v(2, 0), v(1, 0), v(3, 0)));
    }
}
