//! File formats, benchmarks and plotting around `crowdtrack-core`.

pub mod bench;
pub mod clock;
pub mod config;
pub mod formats;
pub mod plot;
pub mod ppm;

pub use crowdtrack_core as core;
