//! Evaluation helpers for prepared datasets: regression and classification
//! metrics, a least-squares baseline, the Wilcoxon signed-rank test, seeded
//! synthetic bundles and a cross-validated dataset comparison.

pub mod checks;
pub mod compare;
pub mod metrics;
pub mod ols;
pub mod synth;
pub mod wilcoxon;

pub use compare::{compare_datasets, CompareOptions, ComparisonReport};
pub use metrics::{classification_metrics, f1_score, regression_metrics, ClassificationReport, RegressionReport};
pub use ols::{ols_fit, Encoder, OlsModel, DEFAULT_RIDGE};
pub use synth::{random_case, synth_generate, CaseShape, SynthBundle, SynthSpec};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no observations")]
    Empty,
    #[error("target range must be positive, got {0}")]
    BadRange(f64),
    #[error("normal equations are singular; use a ridge penalty > 0")]
    Singular,
    #[error("at least 2 folds are needed")]
    TooFewFolds,
    #[error("{0} folds requested but only {1} distinct keys")]
    TooManyFolds(usize, usize),
    #[error("key {0} of the training dataset is missing from the flat dataset")]
    KeyMismatch(String),
    #[error("invalid generator spec: {0}")]
    BadSpec(String),
}
