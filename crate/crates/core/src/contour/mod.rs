//! 4-connected regions and their vertex-minimised, pixel-perfect contours.
//!
//! Vertices are pixel coordinates. A contour's fill (edge rasterisation plus
//! even-odd interior, minus hole fills) reproduces its region exactly.
//! Rows grow upward, so "counterclockwise" is read with y pointing up.

mod chain;
mod line;
mod optimize;
mod reduce;
mod region;
mod trace;

pub use line::{rasterize_edges, raster_segment, ring_is_simple, segments_cross};
pub use optimize::optimize_contour;
pub use reduce::reduce_contour;
pub use region::{count_regions, extract_regions, find_holes, label_components};
pub use trace::{trace_contour, trace_ring};

pub(crate) use chain::{moore_chain, Chain};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Vertex {
    pub x: i32,
    pub y: i32,
}

impl Vertex {
    pub const fn new(x: i32, y: i32) -> Self {
        Vertex { x, y }
    }
}

/// Neighbour offsets, counterclockwise from East.
pub(crate) const DIRS: [(i32, i32); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

pub(crate) fn step(v: Vertex, dir: u8, len: i32) -> Vertex {
    let (dx, dy) = DIRS[dir as usize];
    Vertex::new(v.x + dx * len, v.y + dy * len)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl BBox {
    pub fn contains(&self, x: i32, y: i32) -> bool {
        x >= self.x as i32
            && y >= self.y as i32
            && (x as i64) < self.x as i64 + self.width as i64
            && (y as i64) < self.y as i64 + self.height as i64
    }

    pub fn max_x(&self) -> u32 {
        self.x + self.width - 1
    }

    pub fn max_y(&self) -> u32 {
        self.y + self.height - 1
    }
}

/// A non-empty pixel set stored as a bitmap over its tight bounding box.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PixelMask {
    bbox: BBox,
    bits: Vec<bool>,
    count: usize,
}

impl PixelMask {
    pub fn from_pixels<I: IntoIterator<Item = (u32, u32)>>(pixels: I) -> Option<Self> {
        let pts: Vec<(u32, u32)> = pixels.into_iter().collect();
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for &(x, y) in &pts {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        if pts.is_empty() {
            return None;
        }
        let bbox = BBox {
            x: x0,
            y: y0,
            width: x1 - x0 + 1,
            height: y1 - y0 + 1,
        };
        let mut bits = vec![false; bbox.width as usize * bbox.height as usize];
        let mut count = 0;
        for (x, y) in pts {
            let i = (y - y0) as usize * bbox.width as usize + (x - x0) as usize;
            if !bits[i] {
                bits[i] = true;
                count += 1;
            }
        }
        Some(PixelMask { bbox, bits, count })
    }

    /// Bitmap over `bbox`; shrinks to the tight box. None when empty.
    pub fn from_bitmap(bbox: BBox, bits: Vec<bool>) -> Option<Self> {
        debug_assert_eq!(bits.len(), bbox.width as usize * bbox.height as usize);
        let count = bits.iter().filter(|&&b| b).count();
        if count == 0 {
            return None;
        }
        let w = bbox.width as usize;
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
            let (x, y) = (i % w, i / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        if x0 == 0 && y0 == 0 && x1 + 1 == w && y1 + 1 == bbox.height as usize {
            return Some(PixelMask { bbox, bits, count });
        }
        let nw = x1 - x0 + 1;
        let nh = y1 - y0 + 1;
        let mut nb = vec![false; nw * nh];
        for y in 0..nh {
            let src = (y + y0) * w + x0;
            nb[y * nw..(y + 1) * nw].copy_from_slice(&bits[src..src + nw]);
        }
        Some(PixelMask {
            bbox: BBox {
                x: bbox.x + x0 as u32,
                y: bbox.y + y0 as u32,
                width: nw as u32,
                height: nh as u32,
            },
            bits: nb,
            count,
        })
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Row-major bitmap over `bbox()`.
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn contains(&self, x: i32, y: i32) -> bool {
        self.bbox.contains(x, y)
            && self.bits[(y - self.bbox.y as i32) as usize * self.bbox.width as usize
                + (x - self.bbox.x as i32) as usize]
    }

    pub fn contains_v(&self, v: Vertex) -> bool {
        self.contains(v.x, v.y)
    }

    /// Lowest row, then leftmost pixel in it.
    pub fn start(&self) -> Vertex {
        let i = self.bits.iter().position(|&b| b).expect("mask is non-empty");
        let w = self.bbox.width as usize;
        Vertex::new(
            self.bbox.x as i32 + (i % w) as i32,
            self.bbox.y as i32 + (i / w) as i32,
        )
    }

    /// Members in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.bbox.width as usize;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (self.bbox.x + (i % w) as u32, self.bbox.y + (i / w) as u32))
    }

    /// Removes every pixel of `other`; None if nothing is left.
    pub fn subtract(mut self, other: &PixelMask) -> Option<PixelMask> {
        for (x, y) in other.pixels() {
            if self.bbox.contains(x as i32, y as i32) {
                let i = (y - self.bbox.y) as usize * self.bbox.width as usize
                    + (x - self.bbox.x) as usize;
                if self.bits[i] {
                    self.bits[i] = false;
                    self.count -= 1;
                }
            }
        }
        PixelMask::from_bitmap(self.bbox, self.bits)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PixelRegion {
    pub tolerance: u8,
    pub mask: PixelMask,
}

impl PixelRegion {
    pub fn new(tolerance: u8, mask: PixelMask) -> Self {
        PixelRegion { tolerance, mask }
    }

    pub fn area(&self) -> usize {
        self.mask.count()
    }

    pub fn bbox(&self) -> BBox {
        self.mask.bbox()
    }
}

/// Outer ring (counterclockwise) plus hole rings. Hole rings run over the
/// pixels of the hole they cut out.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct GeometricContour {
    pub outer: Vec<Vertex>,
    pub holes: Vec<Vec<Vertex>>,
}

impl GeometricContour {
    pub fn vertex_count(&self) -> usize {
        self.outer.len() + self.holes.iter().map(Vec::len).sum::<usize>()
    }

    pub fn rings(&self) -> impl Iterator<Item = &Vec<Vertex>> {
        std::iter::once(&self.outer).chain(self.holes.iter())
    }
}
