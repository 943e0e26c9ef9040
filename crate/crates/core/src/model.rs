//! Trained-model files and the common prediction interface.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Answers;
use crate::gbdt::BoostedEnsemble;
use crate::logreg::LogisticModel;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum PredictError {
    #[error("insufficient data: missing {}", .0.join(", "))]
    MissingFields(Vec<String>),
}

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model format version {0}")]
    Version(u32),
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// Signed influence of one model input on the logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub feature: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probability: f64,
    pub positive: bool,
    pub logit: f64,
    /// Part of the logit not attributed to any input.
    pub bias: f64,
    pub contributions: Vec<Contribution>,
}

/// Anything that turns a questionnaire into a screening decision.
pub trait ScreeningModel {
    fn predict(&self, a: &Answers) -> Result<Prediction, PredictError>;
    fn cutoff(&self) -> f64;
    fn kind(&self) -> &'static str;
}

impl ScreeningModel for LogisticModel {
    fn predict(&self, a: &Answers) -> Result<Prediction, PredictError> {
        LogisticModel::predict(self, a)
    }

    fn cutoff(&self) -> f64 {
        self.cutoff
    }

    fn kind(&self) -> &'static str {
        "logistic"
    }
}

impl ScreeningModel for BoostedEnsemble {
    fn predict(&self, a: &Answers) -> Result<Prediction, PredictError> {
        Ok(BoostedEnsemble::predict(self, a))
    }

    fn cutoff(&self) -> f64 {
        self.cutoff
    }

    fn kind(&self) -> &'static str {
        "gbdt"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_type", rename_all = "lowercase")]
pub enum TrainedModel {
    Logistic(LogisticModel),
    Gbdt(BoostedEnsemble),
}

impl TrainedModel {
    pub fn as_screening(&self) -> &(dyn ScreeningModel + Send + Sync) {
        match self {
            TrainedModel::Logistic(m) => m,
            TrainedModel::Gbdt(m) => m,
        }
    }

    fn validate(&self) -> Result<(), ModelFileError> {
        match self {
            TrainedModel::Logistic(m) => m.validate().map_err(|e| ModelFileError::Invalid(e.to_string())),
            TrainedModel::Gbdt(m) => m.validate().map_err(|e| ModelFileError::Invalid(e.to_string())),
        }
    }
}

impl ScreeningModel for TrainedModel {
    fn predict(&self, a: &Answers) -> Result<Prediction, PredictError> {
        self.as_screening().predict(a)
    }

    fn cutoff(&self) -> f64 {
        self.as_screening().cutoff()
    }

    fn kind(&self) -> &'static str {
        self.as_screening().kind()
    }
}

/// Versioned model document. Floats are written at full precision and read
/// back bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub tool_version: String,
    pub model: TrainedModel,
    #[serde(default)]
    pub run_config: serde_json::Value,
}

impl ModelFile {
    pub fn new(model: TrainedModel, run_config: serde_json::Value) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            tool_version: crate::TOOL_VERSION.to_string(),
            model,
            run_config,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelFileError> {
        let f: ModelFile = serde_json::from_str(text)?;
        if f.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelFileError::Version(f.format_version));
        }
        f.model.validate()?;
        Ok(f)
    }
}
