//! Backward decoders: lagged designs, ridge training, subject-independent
//! and subject-specific cross-validation, and neural tracking (NT).
//!
//! [`run_grid`] computes the whole 648-configuration grid from sufficient
//! statistics. [`run_si_config`] and [`run_ss_config`] train one
//! configuration directly and are used to cross-check the grid.

pub mod cache;
mod config;
mod explicit;
mod grid;
mod prep;
mod ridge;
mod table;

pub use config::{
    canonical_windows, decoders_per_run, enumerate_configs, enumerate_filtered, ConfigFilter, DecoderConfig,
    DecoderType, MAX_WINDOW_LAG,
};
pub use explicit::{run_si_config, run_ss_config, sentence_fold, si_training_sources, DecodeSettings};
pub use grid::{run_band, run_grid, GridOptions, DEFAULT_LAMBDA_REL};
pub use prep::{
    prepare_band, prepare_features, prepare_subject, BandFeatures, BandPreprocessor, PreparedBand,
    PreparedSubject, FILTER_ORDER,
};
pub use ridge::{
    lag_design, lag_design_rows, neural_tracking, pool_designs, reconstruct, relative_lambda, train_ridge,
    train_ridge_lambda, DecoderWeights, LaggedDesign, PredictionMoments,
};
pub use table::{NtKey, NtTable, NtValue};
