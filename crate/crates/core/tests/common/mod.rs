#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use agcr::contour::{PixelMask, PixelRegion};
use agcr::raster_io::Raster;
use agcr::threshold::ToleranceRaster;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub type PixelSet = BTreeSet<(u32, u32)>;

pub fn set_of(mask: &PixelMask) -> PixelSet {
    mask.pixels().collect()
}

pub fn region_of(pixels: &PixelSet) -> PixelRegion {
    PixelRegion::new(1, PixelMask::from_pixels(pixels.iter().copied()).unwrap())
}

/// Independent breadth-first 4-connected labelling (queue, not stack).
pub fn bfs_components(w: u32, h: u32, cells: &[u8]) -> Vec<PixelSet> {
    let (w, h) = (w as usize, h as usize);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for s in 0..w * h {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut q = VecDeque::from([s]);
        let mut comp = PixelSet::new();
        while let Some(i) = q.pop_front() {
            comp.insert(((i % w) as u32, (i / w) as u32));
            let (x, y) = (i % w, i / w);
            let mut n = Vec::new();
            if x > 0 {
                n.push(i - 1);
            }
            if x + 1 < w {
                n.push(i + 1);
            }
            if y > 0 {
                n.push(i - w);
            }
            if y + 1 < h {
                n.push(i + w);
            }
            for j in n {
                if !seen[j] && cells[j] == cells[s] {
                    seen[j] = true;
                    q.push_back(j);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Largest 4-connected component of `set`.
pub fn largest_component(set: &PixelSet) -> PixelSet {
    let mut left = set.clone();
    let mut best = PixelSet::new();
    while let Some(&s) = left.iter().next() {
        left.remove(&s);
        let mut q = VecDeque::from([s]);
        let mut comp = PixelSet::new();
        while let Some((x, y)) = q.pop_front() {
            comp.insert((x, y));
            let mut n = vec![(x + 1, y), (x, y + 1)];
            if x > 0 {
                n.push((x - 1, y));
            }
            if y > 0 {
                n.push((x, y - 1));
            }
            for p in n {
                if left.remove(&p) {
                    q.push_back(p);
                }
            }
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    best
}

/// Random 4-connected region up to `max`x`max`, mixing noise blobs, random
/// walks and carved holes so that thin parts, pinches and holes all occur.
pub fn random_region(r: &mut ChaCha8Rng, max: u32) -> PixelSet {
    let w = r.gen_range(1..=max);
    let h = r.gen_range(1..=max);
    let ox = r.gen_range(0..4);
    let oy = r.gen_range(0..4);
    let mut set = PixelSet::new();
    match r.gen_range(0..4) {
        0 => {
            let p = r.gen_range(0.35..0.9);
            for y in 0..h {
                for x in 0..w {
                    if r.gen_bool(p) {
                        set.insert((x + ox, y + oy));
                    }
                }
            }
        }
        1 => {
            let (mut x, mut y) = (w / 2, h / 2);
            let steps = r.gen_range(1..(w * h).max(2) * 2);
            for _ in 0..steps {
                set.insert((x + ox, y + oy));
                match r.gen_range(0..4) {
                    0 if x + 1 < w => x += 1,
                    1 if x > 0 => x -= 1,
                    2 if y + 1 < h => y += 1,
                    3 if y > 0 => y -= 1,
                    _ => {}
                }
            }
        }
        2 => {
            // solid disc or rectangle with random holes punched
            let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
            let rad = (w.min(h) as f64 / 2.0).max(0.6);
            let disc = r.gen_bool(0.5);
            for y in 0..h {
                for x in 0..w {
                    let d = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
                    if !disc || d <= rad {
                        set.insert((x + ox, y + oy));
                    }
                }
            }
            for _ in 0..r.gen_range(0..6) {
                let hx = r.gen_range(0..w);
                let hy = r.gen_range(0..h);
                let hw = r.gen_range(1..=3);
                let hh = r.gen_range(1..=3);
                for y in hy..(hy + hh).min(h) {
                    for x in hx..(hx + hw).min(w) {
                        set.remove(&(x + ox, y + oy));
                    }
                }
            }
        }
        _ => {
            // smoothed noise threshold: larger organic blobs
            let mut g = vec![0f64; (w * h) as usize];
            for v in g.iter_mut() {
                *v = r.gen::<f64>();
            }
            for _ in 0..2 {
                let src = g.clone();
                for y in 0..h as i64 {
                    for x in 0..w as i64 {
                        let mut s = 0.0;
                        let mut c = 0.0;
                        for dy in -1..=1 {
                            for dx in -1..=1 {
                                let (xx, yy) = (x + dx, y + dy);
                                if xx >= 0 && yy >= 0 && xx < w as i64 && yy < h as i64 {
                                    s += src[(yy * w as i64 + xx) as usize];
                                    c += 1.0;
                                }
                            }
                        }
                        g[(y * w as i64 + x) as usize] = s / c;
                    }
                }
            }
            let t = r.gen_range(0.4..0.6);
            for y in 0..h {
                for x in 0..w {
                    if g[(y * w + x) as usize] > t {
                        set.insert((x + ox, y + oy));
                    }
                }
            }
        }
    }
    if set.is_empty() {
        set.insert((ox, oy));
    }
    largest_component(&set)
}

fn from_rows(rows: &[&str]) -> PixelSet {
    // First string is the top row.
    let h = rows.len() as u32;
    let mut s = PixelSet::new();
    for (ry, row) in rows.iter().enumerate() {
        for (x, c) in row.chars().enumerate() {
            if c == '#' {
                s.insert((x as u32, h - 1 - ry as u32));
            }
        }
    }
    s
}

/// Hand-built hard cases: spirals, combs, 1-px bridges, pinches, holes.
pub fn adversarial_regions() -> Vec<(&'static str, PixelSet)> {
    let mut out = vec![
        ("single", from_rows(&["#"])),
        ("bar3", from_rows(&["###"])),
        ("column", from_rows(&["#", "#", "#", "#"])),
        ("block3", from_rows(&["###", "###", "###"])),
        ("staircase", from_rows(&["   #", "  ##", " ## ", "##  "])),
        ("ring", from_rows(&["#####", "#   #", "# # #", "#   #", "#####"])),
        ("pinhole", from_rows(&["###", "# #", "###"])),
        (
            "diagonal-gap-hole",
            from_rows(&["## ", "# #", "###"]),
        ),
        (
            "comb",
            from_rows(&["# # # # #", "# # # # #", "#########"]),
        ),
        (
            "bridge",
            from_rows(&["###   ###", "###   ###", "#########", "###   ###"]),
        ),
        (
            "dumbbell-1px",
            from_rows(&["##     ##", "##     ##", " ####### ", "##     ##"]),
        ),
        (
            "checker-hole",
            from_rows(&["#######", "# # # #", "## # ##", "# # # #", "#######"]),
        ),
        (
            "zigzag",
            from_rows(&["##   ", " ##  ", "  ## ", "   ##", "  ## ", " ##  ", "##   "]),
        ),
        (
            "nested",
            from_rows(&[
                "#########",
                "#       #",
                "# ##### #",
                "# #   # #",
                "# # # # #",
                "# #   # #",
                "# ##### #",
                "#       #",
                "#########",
            ]),
        ),
    ];
    out.push(("spiral", spiral(21)));
    out.push(("diamond", diamond(9)));
    out.push(("solid-64", (0..64).flat_map(|y| (0..64).map(move |x| (x, y))).collect()));
    out.into_iter()
        .map(|(n, s)| (n, largest_component(&s)))
        .collect()
}

pub fn spiral(n: i32) -> PixelSet {
    let mut s = PixelSet::new();
    let (mut x0, mut y0, mut x1, mut y1) = (0, 0, n - 1, n - 1);
    while x0 <= x1 && y0 <= y1 {
        for x in x0..=x1 {
            s.insert((x as u32, y0 as u32));
        }
        for y in y0..=y1 {
            s.insert((x1 as u32, y as u32));
        }
        for x in x0..=x1 {
            s.insert((x as u32, y1 as u32));
        }
        for y in (y0 + 2)..=y1 {
            s.insert((x0 as u32, y as u32));
        }
        x0 += 2;
        y0 += 2;
        x1 -= 2;
        y1 -= 2;
        if x0 <= x1 {
            s.insert(((x0 - 1) as u32, y0 as u32));
        }
    }
    s
}

pub fn diamond(r: i32) -> PixelSet {
    let mut s = PixelSet::new();
    for y in -r..=r {
        for x in -r..=r {
            if x.abs() + y.abs() <= r {
                s.insert(((x + r) as u32, (y + r) as u32));
            }
        }
    }
    s
}

/// Vertex count of the axis-aligned boundary of the pixel squares (corners
/// of the crack boundary, rings and holes included). Counted from 2x2
/// neighbourhoods: one or three members make a corner, a diagonal pair
/// makes two.
pub fn crack_corner_count(set: &PixelSet) -> usize {
    let has = |x: i64, y: i64| x >= 0 && y >= 0 && set.contains(&(x as u32, y as u32));
    let xs = set.iter().map(|p| p.0 as i64);
    let ys = set.iter().map(|p| p.1 as i64);
    let (x0, x1) = (xs.clone().min().unwrap(), xs.max().unwrap());
    let (y0, y1) = (ys.clone().min().unwrap(), ys.max().unwrap());
    let mut corners = 0;
    for y in y0..=y1 + 1 {
        for x in x0..=x1 + 1 {
            let a = has(x - 1, y - 1);
            let b = has(x, y - 1);
            let c = has(x - 1, y);
            let d = has(x, y);
            let n = [a, b, c, d].iter().filter(|&&v| v).count();
            corners += match n {
                1 | 3 => 1,
                2 if (a && d) || (b && c) => 2,
                _ => 0,
            };
        }
    }
    corners
}

/// Random raster with values in 0..=max.
pub fn noise_raster(r: &mut ChaCha8Rng, w: u32, h: u32, depth: u8, max: u16) -> Raster {
    Raster::from_fn(w, h, depth, |_, _| r.gen_range(0..=max)).unwrap()
}

pub fn tolerance_from(w: u32, h: u32, cells: Vec<u8>) -> ToleranceRaster {
    ToleranceRaster::new(w, h, cells).unwrap()
}

/// Seeded 16-bit raster, 8..=128 on each side, drawn from several
/// families so thresholding sees flat, sparse, smooth and noisy inputs.
pub fn random_raster(r: &mut ChaCha8Rng) -> Raster {
    let w = r.gen_range(8..=128);
    let h = r.gen_range(8..=128);
    match r.gen_range(0..5) {
        0 => noise_raster(r, w, h, 16, u16::MAX),
        1 => {
            let levels: Vec<u16> = (0..r.gen_range(1..6)).map(|_| r.gen()).collect();
            Raster::from_fn(w, h, 16, |_, _| levels[r.gen_range(0..levels.len())]).unwrap()
        }
        2 => {
            let (ax, ay) = (r.gen_range(0..300u32), r.gen_range(0..300u32));
            let amp = r.gen_range(0..64u32);
            Raster::from_fn(w, h, 16, |x, y| {
                (x * ax + y * ay + r.gen_range(0..=amp)).min(65535) as u16
            })
            .unwrap()
        }
        3 => blobs_raster(r, w, h),
        _ => {
            let fg: u16 = r.gen_range(1000..=65535);
            let bits: Vec<bool> = (0..w * h).map(|_| r.gen_bool(0.3)).collect();
            Raster::from_fn(w, h, 16, |x, y| {
                if bits[(y * w + x) as usize] {
                    fg - r.gen_range(0..16)
                } else {
                    r.gen_range(0..8)
                }
            })
            .unwrap()
        }
    }
}

/// Background near zero with a few bright discs.
pub fn blobs_raster(r: &mut ChaCha8Rng, w: u32, h: u32) -> Raster {
    let discs: Vec<(i64, i64, i64, u16)> = (0..r.gen_range(1..5))
        .map(|_| {
            (
                r.gen_range(0..w as i64),
                r.gen_range(0..h as i64),
                r.gen_range(2..=(w.min(h) as i64 / 3).max(3)),
                r.gen_range(2000..60000),
            )
        })
        .collect();
    Raster::from_fn(w, h, 16, |x, y| {
        let mut v = r.gen_range(0..10u16);
        for &(cx, cy, rad, level) in &discs {
            let (dx, dy) = (x as i64 - cx, y as i64 - cy);
            if dx * dx + dy * dy <= rad * rad {
                v = level + r.gen_range(0..200);
            }
        }
        v
    })
    .unwrap()
}

/// Rasters that stress connectivity, extremes and degenerate shapes.
pub fn adversarial_rasters() -> Vec<(&'static str, Raster)> {
    let mut r = rng(0xAD);
    let mut out = vec![
        ("constant", Raster::filled(64, 64, 16, 1234).unwrap()),
        ("zero", Raster::filled(16, 16, 16, 0).unwrap()),
        ("max", Raster::filled(16, 16, 16, 65535).unwrap()),
        ("single-pixel", Raster::filled(1, 1, 16, 65535).unwrap()),
        ("one-row", Raster::from_fn(97, 1, 16, |x, _| (x * 677) as u16).unwrap()),
        ("one-column", Raster::from_fn(1, 53, 16, |_, y| if y % 7 == 0 { 65535 } else { 0 }).unwrap()),
        (
            "checkerboard",
            Raster::from_fn(32, 32, 16, |x, y| if (x + y) % 2 == 0 { 0 } else { 65535 }).unwrap(),
        ),
        (
            "block-checker",
            Raster::from_fn(40, 40, 16, |x, y| if (x / 8 + y / 8) % 2 == 0 { 0 } else { 65535 }).unwrap(),
        ),
        (
            "extremes-noise",
            Raster::from_fn(48, 48, 16, |_, _| if r.gen_bool(0.5) { 0 } else { 65535 }).unwrap(),
        ),
    ];
    let sp = spiral(15);
    out.push((
        "spiral",
        Raster::from_fn(34, 34, 16, |x, y| if sp.contains(&(x, y)) { 50000 } else { 10 }).unwrap(),
    ));
    out.push((
        "holes",
        Raster::from_fn(60, 60, 16, |x, y| {
            let ring = (x / 6 + y / 6) % 3;
            let inside = (10..50).contains(&x) && (10..50).contains(&y);
            match (inside, ring) {
                (true, 0) => 40000,
                (true, _) => 20000 + (x * y % 13) as u16,
                _ => 5,
            }
        })
        .unwrap(),
    ));
    out.push((
        "bridges",
        Raster::from_fn(64, 40, 16, |x, y| {
            let left = (4..24).contains(&x) && (4..36).contains(&y);
            let right = (40..60).contains(&x) && (4..36).contains(&y);
            let bridge = (24..40).contains(&x) && (y == 10 || y == 30);
            if left || right || bridge {
                65535
            } else {
                0
            }
        })
        .unwrap(),
    ));
    out.push((
        "diagonal-lines",
        Raster::from_fn(50, 50, 16, |x, y| if (x + 2 * y) % 9 == 0 { 65535 } else { 0 }).unwrap(),
    ));
    out.push(("blobs", blobs_raster(&mut r, 100, 90)));
    out.push(("eight-bit", Raster::from_fn(33, 21, 8, |x, y| ((x * 31 + y * 17) % 256) as u16).unwrap()));
    out.push(("twelve-bit", Raster::from_fn(45, 30, 12, |x, y| ((x * y * 37) % 4096) as u16).unwrap()));
    out
}

/// 16-bit, roughly `fraction` of the pixels in bright blobs over a
/// low-noise background.
pub fn sparse_blob_image(r: &mut ChaCha8Rng, w: u32, h: u32, fraction: f64) -> Raster {
    let target = (w as f64 * h as f64 * fraction) as i64;
    let mut discs = Vec::new();
    let mut area = 0;
    while area < target {
        let rad: i64 = r.gen_range(3..=(w.min(h) as i64 / 10).max(4));
        discs.push((r.gen_range(0..w as i64), r.gen_range(0..h as i64), rad, r.gen_range(20000..50000u16)));
        area += 3 * rad * rad;
    }
    Raster::from_fn(w, h, 16, |x, y| {
        for &(cx, cy, rad, level) in &discs {
            let (dx, dy) = (x as i64 - cx, y as i64 - cy);
            if dx * dx + dy * dy <= rad * rad {
                return level + r.gen_range(0..400);
            }
        }
        100 + r.gen_range(0..12)
    })
    .unwrap()
}

/// Dim background with gaussian noise of spread `noise`, and one bright
/// ellipse carrying a smooth texture with light noise.
pub fn two_region_image(r: &mut ChaCha8Rng, w: u32, h: u32, noise: f64) -> Raster {
    let (cx, cy) = (w as f64 * r.gen_range(0.35..0.65), h as f64 * r.gen_range(0.35..0.65));
    let (ax, ay) = (w as f64 * r.gen_range(0.2..0.35), h as f64 * r.gen_range(0.2..0.35));
    let bg = r.gen_range(80.0..400.0);
    let fg = r.gen_range(25000.0..45000.0);
    let (fx, fy) = (r.gen_range(5.0..15.0), r.gen_range(5.0..15.0));
    let nb = Normal::new(0.0, noise).unwrap();
    let nf = Normal::new(0.0, 2.0).unwrap();
    Raster::from_fn(w, h, 16, |x, y| {
        let (dx, dy) = ((x as f64 - cx) / ax, (y as f64 - cy) / ay);
        let v = if dx * dx + dy * dy <= 1.0 {
            fg + 6000.0 * (x as f64 / fx).sin() * (y as f64 / fy).cos() + nf.sample(r)
        } else {
            bg + nb.sample(r)
        };
        v.round().clamp(0.0, 65535.0) as u16
    })
    .unwrap()
}
