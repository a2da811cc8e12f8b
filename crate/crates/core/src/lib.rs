//! Ridge regression robust to missing features through a learned linear
//! imputation, solved as a convex relaxation over imputation tensors.

pub mod bench;
pub mod corruption;
pub mod dataset;
pub mod error;
pub mod imputation;
pub mod kernel;
pub mod matrix_file;
pub mod rng;
pub mod solver;
pub mod theory;

pub use dataset::{CorruptedSample, CsvOptions, Dataset};
pub use error::{IrrError, Result};
