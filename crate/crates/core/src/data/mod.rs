//! Questionnaire schema, cohort I/O, subset selection and synthetic cohorts.

mod cohort;
mod record;
mod split;
mod synth;

pub use cohort::{
    filter_symptomatic, parse_cohort, record_fields, serialize_cohort, split_holdout, Cohort, DroppedRow, ParsedCohort,
    SubsetCounts, COLUMNS, SCHEMA_VERSION,
};
pub use record::{Answers, CovidTest, Feature, Sex, SurveyRecord, ValueKind, SATURATION_RANGE, TEMP_RANGE};
pub use split::{stratified_folds, stratified_partition, stratified_split, Partition, SplitReport, BALANCE_TOLERANCE};
pub use synth::{
    synthesize_cohort, CohortCells, FeatureModel, GroundTruth, GroupModel, HoldoutCounts, MissingBlock,
    MissingnessModel, NumericDist, SynthSpec,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("row {row}, column `{column}`: {message}")]
    Row {
        row: usize,
        column: String,
        message: String,
    },
    #[error("row {row}: invariant violated: {invariant}")]
    Invariant { row: usize, invariant: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("cohort is empty")]
    EmptyCohort,
    #[error("record {index} has no known test result")]
    UnknownLabel { index: usize },
    #[error("split ratio must lie in (0, 1), got {0}")]
    InvalidRatio(f64),
    #[error("feature `{0}` is not binary")]
    NotBinary(Feature),
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error(
        "class marginals not reached after {draws} draws \
         ({missing_negative} negative, {missing_positive} positive still needed)"
    )]
    Infeasible {
        draws: usize,
        missing_negative: usize,
        missing_positive: usize,
    },
}
