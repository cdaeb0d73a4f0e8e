//! Linear models, repeated cross-validation, and permutation inference.
//!
//! Everything here is generic over [`Scalar`](crate::Scalar); the crate
//! root exposes `f64` aliases for the common case.

pub mod cv;
pub mod dataset;
pub mod ols;
pub mod permutation;

pub use cv::{
    cross_validate, cross_validated_errors, fold_coefficient_test, fold_fits, CoefficientTest,
    CvConfig, EvalResult, FoldFits, Side,
};
pub use dataset::{Dataset, ModelSpec};
pub use ols::{fit_ols, DesignMatrix, LinearModel, OlsFit};
pub use permutation::{
    label_permutation_test, permutation_test_errors, sign_flip_pvalue, GroupDifference,
    EXHAUSTIVE_MAX_ITEMS,
};
