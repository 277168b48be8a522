//! Shape fill, tolerance-raster reconstruction and container decoding.

mod container;
mod fill;

pub use container::{
    container_shapes, decode_container, decode_parsed, extract_bin, label_bits, read_tolerance, reconstruct_tolerance,
    DecodeOptions,
};
pub(crate) use container::decode_samples;
pub use fill::{fill_all, fill_region, fill_ring, FillSegmentPlan};

use crate::contour::GeometricContour;
use crate::error::{Error, Result};
use crate::threshold::ToleranceRaster;

/// Paints each shape's fill with its tolerance onto a raster initialised to
/// `background`. Shapes are painted in slice order, so later shapes win
/// where fills overlap. A fill reaching outside the raster is an error.
pub fn paint_shapes(
    width: u32,
    height: u32,
    background: u8,
    shapes: &[(&GeometricContour, u8)],
    threads: usize,
) -> Result<ToleranceRaster> {
    let contours: Vec<&GeometricContour> = shapes.iter().map(|s| s.0).collect();
    let fills = fill_all(&contours, threads);
    let mut cells = vec![background; width as usize * height as usize];
    for (i, (fill, &(_, tol))) in fills.into_iter().zip(shapes).enumerate() {
        let mask = fill?;
        let b = mask.bbox();
        if b.x as u64 + b.width as u64 > width as u64 || b.y as u64 + b.height as u64 > height as u64 {
            return Err(Error::MalformedShape(format!(
                "shape {i} covers {}x{} at ({}, {}) outside the {width}x{height} raster",
                b.width, b.height, b.x, b.y
            )));
        }
        for (x, y) in mask.pixels() {
            cells[y as usize * width as usize + x as usize] = tol;
        }
    }
    ToleranceRaster::new(width, height, cells)
}
