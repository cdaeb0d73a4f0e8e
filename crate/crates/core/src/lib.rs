//! Incremental dependency-based memory-maintenance metrics and their
//! evaluation against reading times.
//!
//! The crate is organised as a pipeline:
//!
//! - [`corpus`]: CoNLL-U treebanks, region segmentation, reading times
//! - [`metrics`]: predicted heads, incomplete dependencies, completions
//! - [`features`]: analyzable regions, control predictors, spillover lags
//! - [`regression`]: OLS, repeated k-fold ΔMSE, permutation tests
//! - [`participants`]: per-reader typology and the anti-locality tradeoff
//! - [`pipeline`] / [`report`]: configuration, CLI commands, output tables
//!
//! The statistical code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which the pipeline uses throughout.

pub mod config;
pub mod corpus;
pub mod error;
pub mod features;
pub mod metrics;
pub mod participants;
pub mod pipeline;
pub mod regression;
pub mod report;
pub mod scalar;
pub mod seed;
pub mod synth;
pub mod tsv;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset = regression::Dataset<f64>;
pub type Dataset32 = regression::Dataset<f32>;
pub type DesignMatrix = regression::DesignMatrix<f64>;
pub type LinearModel = regression::LinearModel<f64>;
pub type OlsFit = regression::OlsFit<f64>;
pub type EvalResult = regression::EvalResult<f64>;
pub type EvalResult32 = regression::EvalResult<f32>;
pub type FoldFits = regression::FoldFits<f64>;
