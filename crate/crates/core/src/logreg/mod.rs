//! Logistic regression: IRLS fitting with Wald statistics, Bayes-factor
//! forward selection inside repeated random cross-validation, and the final
//! ranking-prefix model.

mod irls;
mod model;
mod select;

pub use irls::{fit_irls, CoefficientRecord, IrlsFit, IrlsOptions, IterationStep, INTERCEPT};
pub use model::{LogisticModel, TrainingInfo};
pub use select::{
    bayes_factor, finalize, forward_select_bf, mrcv_rank, DesignMatrix, FinalizeReport, MrcvOptions, MrcvReport,
    PrefixScore, RankedTerm, RepeatOutcome, Selection, SelectionStep, MAX_FAILURE_RATE,
};

use thiserror::Error;

use crate::data::DataError;
use crate::metrics::MetricError;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("{0}")]
    Shape(String),
    #[error("{rows} complete rows are not enough for {params} parameters")]
    TooFewRows { rows: usize, params: usize },
    #[error("no complete cases with known labels")]
    NoData,
    #[error("information matrix is singular")]
    Singular,
    #[error("perfect separation: coefficient of `{term}` diverges")]
    Separation { term: String },
    #[error("no convergence after {} iterations", trace.len())]
    NotConverged { trace: Vec<IterationStep> },
    #[error("{failed} of {total} repeats failed")]
    TooManyFailures { failed: usize, total: usize },
    #[error("data: {0}")]
    Data(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

impl From<DataError> for FitError {
    fn from(e: DataError) -> Self {
        FitError::Data(e.to_string())
    }
}
