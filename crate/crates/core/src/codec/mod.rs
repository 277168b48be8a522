//! Entropy/image backends, the `.agcr` container and encoding strategies.

pub mod backend;
#[cfg(feature = "jpeg2000")]
mod jpeg2000;
pub mod container;

pub use container::{parse_container, DecodeLimits, LossTag, Strategy};
pub mod encode;

pub use encode::{encode, encode_with_report, select_strategy, Candidate, EncodeConfig, EncodeReport, Encoded, LossSpec};
