//! Region-based lossless raster compression built on adaptive geometric
//! contouring (AGC).

pub mod codec;
pub mod contour;
pub mod decode;
pub mod error;
pub mod raster_io;
pub mod region_store;
pub mod threshold;
mod wire;

pub use error::{Error, Result};
