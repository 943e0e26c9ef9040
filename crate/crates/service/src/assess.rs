//! Turning a validated submission into a screening decision.

use decode_core::model::PredictError;
use decode_core::{ModelFile, ScreeningModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::submission::QuestionnaireSubmission;

pub const DISCLAIMER: &str = "This result is a screening suggestion, not a diagnosis. \
Only a medical test can fully confirm infection.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Influence {
    pub feature: String,
    /// Signed contribution to the model's log-odds.
    pub influence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentResult {
    pub decision: Decision,
    pub probability: f64,
    pub cutoff: f64,
    pub model_id: String,
    /// Largest absolute influence first.
    pub contributions: Vec<Influence>,
    pub disclaimer: String,
    /// Result of the secondary model, when one is configured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary: Option<Box<AssessmentResult>>,
}

/// A model file together with its content-derived identifier.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub file: ModelFile,
    pub id: String,
}

impl LoadedModel {
    pub fn new(file: ModelFile) -> Self {
        let json = serde_json::to_vec(&file.model).expect("models serialize");
        let digest = Sha256::digest(&json);
        let id = format!("{}-{}", file.model.kind(), &hex::encode(digest)[..16]);
        LoadedModel { file, id }
    }

    pub fn kind(&self) -> &'static str {
        self.file.model.kind()
    }

    /// Pure function of (model, submission).
    pub fn assess(&self, s: &QuestionnaireSubmission) -> Result<AssessmentResult, PredictError> {
        let p = self.file.model.predict(&s.answers)?;
        let mut contributions: Vec<Influence> = p
            .contributions
            .into_iter()
            .map(|c| Influence {
                feature: c.feature,
                influence: c.value,
            })
            .collect();
        contributions.sort_by(|a, b| {
            b.influence
                .abs()
                .total_cmp(&a.influence.abs())
                .then_with(|| a.feature.cmp(&b.feature))
        });
        Ok(AssessmentResult {
            decision: if p.positive {
                Decision::Positive
            } else {
                Decision::Negative
            },
            probability: p.probability,
            cutoff: self.file.model.cutoff(),
            model_id: self.id.clone(),
            contributions,
            disclaimer: DISCLAIMER.to_string(),
            secondary: None,
        })
    }
}
