//! Integer-only mixed-precision GRU quantization with an NSGA-II bit-width
//! search.
//!
//! The float reference network lives in [`refnet`], calibration in
//! [`calib`], the integer kernels in [`qops`] and [`fxp`], the assembled
//! integer model in [`qgru`] and the search in [`evolve`].

// `!(a <= b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calib;
pub mod dataio;
pub mod error;
pub mod evolve;
pub mod fxp;
pub mod qgru;
pub mod qops;
pub mod refnet;

pub use calib::{calibrate, CalibrationStats};
pub use dataio::SequenceDataset;
pub use error::{Error, Result};
pub use evolve::{run_nsga2, Individual, SearchConfig, SearchResult};
pub use fxp::{FixedPointScale, QuantMode, QuantParams};
pub use qgru::{quantize_model, BlockId, Genome, ModelDims, QuantizedGRUModel, Site};
pub use refnet::{GRUWeights, TrainConfig};
