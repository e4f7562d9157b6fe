//! Multi-decoder prediction of speech reception thresholds (SRTs) from
//! multichannel neural recordings.
//!
//! The pipeline runs in stages that mirror the module layout:
//!
//! * [`dsp`]: envelope and onset extraction, FIR band filtering, resampling, z-scoring.
//! * [`synth`]: synthetic subjects with known SRTs (the oracle that replaces real EEG).
//! * [`decoding`]: the 648-configuration grid of ridge backward decoders and
//!   their neural-tracking (NT) values.
//! * [`features`]: baseline adjustment, NT vector assembly and the ERF transform.
//! * [`srtmodel`]: linear SVR with nested leave-one-out selection of the ERF steepness.
//! * [`eval`]: metrics, permutation null, linear SHAP and the data-reduction harness.
//! * [`pipeline`]: run configuration, artifacts and the CLI commands.

mod binio;
pub mod decoding;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod features;
mod linalg;
pub mod pipeline;
pub mod rng;
pub mod srtmodel;
pub mod synth;

pub use error::{Error, Result};

/// Version string recorded in caches and manifests.
pub const CODE_VERSION: &str = concat!("multidecoder-", env!("CARGO_PKG_VERSION"));
