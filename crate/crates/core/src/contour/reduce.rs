use super::{ring_is_simple, GeometricContour, Vertex};

fn twice_triangle(a: Vertex, b: Vertex, c: Vertex) -> i64 {
    ((b.x as i64 - a.x as i64) * (c.y as i64 - a.y as i64)
        - (b.y as i64 - a.y as i64) * (c.x as i64 - a.x as i64))
        .abs()
}

fn twice_area(ring: &[Vertex]) -> i64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            a.x as i64 * b.y as i64 - b.x as i64 * a.y as i64
        })
        .sum::<i64>()
        .abs()
}

/// Lossy vertex budget: keeps at most ceil(area / 100) * max_per_100px
/// vertices by repeatedly dropping the vertex spanning the smallest
/// triangle with its neighbours, skipping removals that would make a ring
/// cross itself. Rings keep at least three vertices (fewer if they started
/// with fewer); when even that exceeds the budget the smallest holes go.
/// The result is generally not pixel-perfect.
pub fn reduce_contour(c: &GeometricContour, area: usize, max_per_100px: usize) -> GeometricContour {
    let budget = area.div_ceil(100) * max_per_100px;
    if c.vertex_count() <= budget {
        return c.clone();
    }
    let mut holes = c.holes.clone();
    let floor_of = |r: &Vec<Vertex>| r.len().min(3);
    while !holes.is_empty()
        && floor_of(&c.outer) + holes.iter().map(floor_of).sum::<usize>() > budget
    {
        let smallest = (0..holes.len())
            .min_by_key(|&i| (twice_area(&holes[i]), i))
            .unwrap();
        holes.remove(smallest);
    }
    let mut rings: Vec<Vec<Vertex>> = std::iter::once(c.outer.clone()).chain(holes).collect();

    let total = |rings: &Vec<Vec<Vertex>>| rings.iter().map(Vec::len).sum::<usize>();
    while total(&rings) > budget {
        let mut cands: Vec<(i64, usize, usize)> = Vec::new();
        for (ri, ring) in rings.iter().enumerate() {
            let n = ring.len();
            if n <= 3 {
                continue;
            }
            for i in 1..n {
                let a = ring[i - 1];
                let b = ring[(i + 1) % n];
                cands.push((twice_triangle(a, ring[i], b), ri, i));
            }
        }
        cands.sort_unstable();
        let mut removed = false;
        for (_, ri, i) in cands {
            let mut trial = rings[ri].clone();
            trial.remove(i);
            if ring_is_simple(&trial) {
                rings[ri] = trial;
                removed = true;
                break;
            }
        }
        if !removed {
            break;
        }
    }
    let outer = rings.remove(0);
    GeometricContour {
        outer,
        holes: rings,
    }
}
