//! Least squares, two-stage least squares, within fixed effects,
//! cluster-robust inference, the Grether regression and the Wilcoxon
//! signed-rank test.

mod grether;
mod regression;
mod wilcoxon;

use alloc::string::String;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grether::{
    build_grether_rows, grether_estimate, treatment_regression, GretherDrops, GretherEstimate,
    GretherInstrument, GretherOptions, GretherRow, GretherSubset, GRETHER_NAMES,
};
pub use regression::{
    cluster_codes, f_test, Estimate, linear_combination, ols, tsls, within_transform, Covariance, CovarianceKind,
    RegressionFit,
};
pub use wilcoxon::{exact_signed_rank_distribution, signed_ranks, wilcoxon_signed_rank, EXACT_LIMIT};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EconError {
    #[error("design matrix is rank deficient (column {column})")]
    SingularDesign { column: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("need at least as many instruments ({instruments}) as endogenous regressors ({endogenous})")]
    Underidentified { instruments: usize, endogenous: usize },
    #[error("restriction matrix is not of full row rank")]
    RestrictionRank,
    #[error("not enough observations: n={n}, k={k}")]
    TooFewObservations { n: usize, k: usize },
    #[error("{treatment} treatment has fewer than 2 distinct reported priors")]
    Identification { treatment: String },
    #[error("no nonzero differences")]
    NoDifferences,
}

pub type Result<T> = core::result::Result<T, EconError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    WaldF,
    WilcoxonExact,
    WilcoxonNormal,
    /// Every difference was zero; nothing to test.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Numerator and denominator degrees of freedom of an F test.
    pub df: Option<(f64, f64)>,
    pub method: TestMethod,
}
