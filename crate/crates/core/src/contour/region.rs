use super::{BBox, PixelMask, PixelRegion};
use crate::threshold::ToleranceRaster;

/// 4-connected component labels (numbered in raster-scan seed order) and
/// component sizes. Iterative DFS over a flat visited array.
pub fn label_components(t: &ToleranceRaster) -> (Vec<u32>, Vec<usize>) {
    let w = t.width() as usize;
    let h = t.height() as usize;
    let cells = t.cells();
    let mut labels = vec![u32::MAX; w * h];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for seed in 0..w * h {
        if labels[seed] != u32::MAX {
            continue;
        }
        let id = sizes.len() as u32;
        let tol = cells[seed];
        labels[seed] = id;
        stack.push(seed);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if labels[j] == u32::MAX && cells[j] == tol {
                    labels[j] = id;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

pub fn count_regions(t: &ToleranceRaster) -> usize {
    label_components(t).1.len()
}

/// Exhaustive partition of the raster into 4-connected equal-index regions,
/// in raster order of each region's first pixel.
pub fn extract_regions(t: &ToleranceRaster) -> Vec<PixelRegion> {
    let (labels, sizes) = label_components(t);
    let w = t.width() as usize;
    let n = sizes.len();
    let mut lo = vec![(u32::MAX, u32::MAX); n];
    let mut hi = vec![(0u32, 0u32); n];
    for (i, &l) in labels.iter().enumerate() {
        let (x, y) = ((i % w) as u32, (i / w) as u32);
        let l = l as usize;
        lo[l] = (lo[l].0.min(x), lo[l].1.min(y));
        hi[l] = (hi[l].0.max(x), hi[l].1.max(y));
    }
    let mut bitmaps: Vec<(BBox, Vec<bool>)> = (0..n)
        .map(|l| {
            let bbox = BBox {
                x: lo[l].0,
                y: lo[l].1,
                width: hi[l].0 - lo[l].0 + 1,
                height: hi[l].1 - lo[l].1 + 1,
            };
            (bbox, vec![false; bbox.width as usize * bbox.height as usize])
        })
        .collect();
    let mut tol = vec![0u8; n];
    for (i, &l) in labels.iter().enumerate() {
        let (x, y) = ((i % w) as u32, (i / w) as u32);
        let (bbox, bits) = &mut bitmaps[l as usize];
        bits[(y - bbox.y) as usize * bbox.width as usize + (x - bbox.x) as usize] = true;
        tol[l as usize] = t.cells()[i];
    }
    bitmaps
        .into_iter()
        .zip(tol)
        .map(|((bbox, bits), t)| {
            PixelRegion::new(t, PixelMask::from_bitmap(bbox, bits).expect("non-empty component"))
        })
        .collect()
}

/// Non-members not 4-connected to the outside, split into 4-connected holes
/// ordered by their lowest-then-leftmost pixel.
pub fn find_holes(mask: &PixelMask) -> Vec<PixelMask> {
    let b = mask.bbox();
    let fw = b.width as usize + 2;
    let fh = b.height as usize + 2;
    let member = |fx: usize, fy: usize| -> bool {
        fx >= 1
            && fy >= 1
            && fx <= b.width as usize
            && fy <= b.height as usize
            && mask.bits()[(fy - 1) * b.width as usize + (fx - 1)]
    };
    // 0 = unvisited non-member, 1 = member, 2 = outside, 3+ = hole id + 3
    let mut state = vec![0u32; fw * fh];
    for fy in 0..fh {
        for fx in 0..fw {
            if member(fx, fy) {
                state[fy * fw + fx] = 1;
            }
        }
    }
    let mut stack = vec![0usize];
    state[0] = 2;
    flood(&mut state, fw, fh, &mut stack, 2);

    let mut holes = Vec::new();
    for i in 0..fw * fh {
        if state[i] != 0 {
            continue;
        }
        let id = 3 + holes.len() as u32;
        state[i] = id;
        stack.push(i);
        let mut pixels = Vec::new();
        while let Some(j) = stack.pop() {
            pixels.push((
                b.x + (j % fw) as u32 - 1,
                b.y + (j / fw) as u32 - 1,
            ));
            push_neighbours(&mut state, fw, fh, j, id, &mut stack);
        }
        holes.push(PixelMask::from_pixels(pixels).expect("non-empty hole"));
    }
    holes
}

fn flood(state: &mut [u32], fw: usize, fh: usize, stack: &mut Vec<usize>, id: u32) {
    while let Some(j) = stack.pop() {
        push_neighbours(state, fw, fh, j, id, stack);
    }
}

fn push_neighbours(state: &mut [u32], fw: usize, fh: usize, j: usize, id: u32, stack: &mut Vec<usize>) {
    let (x, y) = (j % fw, j / fw);
    let mut go = |k: usize| {
        if state[k] == 0 {
            state[k] = id;
            stack.push(k);
        }
    };
    if x > 0 {
        go(j - 1);
    }
    if x + 1 < fw {
        go(j + 1);
    }
    if y > 0 {
        go(j - fw);
    }
    if y + 1 < fh {
        go(j + fw);
    }
}
