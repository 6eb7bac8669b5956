//! Running and benchmarking classical image-forgery detectors.

pub mod benchmark;
pub mod data;
pub mod datasets;
pub mod image_io;
pub mod methods;
pub mod metrics;
pub mod postprocessing;
pub mod preprocessing;
