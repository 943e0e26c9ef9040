//! Screening classifiers for questionnaire data: cohort handling, missingness
//! pruning, logistic regression and gradient-boosted trees tuned to a weighted
//! NPV/PPV objective, and surrogate-tree explanations.

pub mod data;
pub mod features;
pub mod gbdt;
pub mod logreg;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod prep;
pub mod surrogate;

pub use data::{Answers, Cohort, CovidTest, DataError, Feature, Sex, SurveyRecord, ValueKind};
pub use features::{FeatureError, InteractionOp, Term};
pub use metrics::{whm, ConfusionMatrix, CutoffResult, MetricError, MetricSet};
pub use model::{ModelFile, Prediction, ScreeningModel, TrainedModel};

/// Crate version, embedded in every artifact.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
