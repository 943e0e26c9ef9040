//! Second-order gradient-boosted trees with learned missing-value routing,
//! stability ranking, wrapper feature selection and random-search tuning.

mod booster;
mod select;
mod tree;
mod tune;

pub use booster::{fit_boosted, logistic_loss, BoostedEnsemble, Booster, Dataset, HyperParams, DEFAULT_BASE_SCORE};
pub use select::{
    selection_params, stability_rank, wrapper_select, xgb_eval, EvalOptions, EvalScore, StabilityEntry,
    StabilityOptions, StabilityReport, WrapperAction, WrapperState, WrapperStep, WRAPPER_TOL,
};
pub(crate) use tree::midpoint;
pub use tree::{best_split, leaf_weight, split_gain, Node, RegressionTree, Split, SplitCandidate, TreeParams};
pub use tune::{cv_f1, tune_hyperparams, SearchSpace, Trial, TuneOptions, TuningReport};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BoostError {
    #[error("no rows or no features")]
    Empty,
    #[error("labels contain a single class")]
    SingleClass,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("no feature occurred in at least {needed} draws")]
    NoStableFeature { needed: usize },
    #[error("{failed} of {total} repeats failed")]
    TooManyFailures { failed: usize, total: usize },
    #[error("data: {0}")]
    Data(String),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
}
