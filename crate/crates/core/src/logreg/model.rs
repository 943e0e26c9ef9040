use serde::{Deserialize, Serialize};

use super::irls::CoefficientRecord;
use super::FitError;
use crate::data::{Answers, Feature};
use crate::features::Term;
use crate::metrics::CutoffGrid;
use crate::model::{Contribution, PredictError, Prediction};
use crate::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub n: usize,
    pub seed: u64,
    pub weight: f64,
    pub log_likelihood: f64,
    #[serde(default)]
    pub training_whm: Option<f64>,
}

/// Logistic model over questionnaire terms; `coefficients[0]` is the
/// intercept, followed by one coefficient per term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub terms: Vec<Term>,
    pub coefficients: Vec<f64>,
    pub cutoff: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub statistics: Vec<CoefficientRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingInfo>,
}

impl LogisticModel {
    pub fn new(terms: Vec<Term>, coefficients: Vec<f64>, cutoff: f64) -> Result<Self, FitError> {
        let m = LogisticModel {
            terms,
            coefficients,
            cutoff,
            statistics: Vec::new(),
            training: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), FitError> {
        if self.coefficients.len() != self.terms.len() + 1 {
            return Err(FitError::Shape(format!(
                "{} coefficients for {} terms (plus intercept)",
                self.coefficients.len(),
                self.terms.len()
            )));
        }
        let grid = CutoffGrid::default();
        if !(grid.lo..=grid.hi).contains(&self.cutoff) {
            return Err(FitError::Shape(format!(
                "cutoff {} outside [{}, {}]",
                self.cutoff, grid.lo, grid.hi
            )));
        }
        Ok(())
    }

    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    /// Base features the model reads.
    pub fn required_features(&self) -> Vec<Feature> {
        let mut out: Vec<Feature> = self.terms.iter().flat_map(|t| t.operands()).collect();
        out.sort();
        out.dedup();
        out
    }

    /// Fields a record lacks for this model (contact is imputed, never
    /// missing).
    pub fn missing_fields(&self, a: &Answers) -> Vec<Feature> {
        self.required_features()
            .into_iter()
            .filter(|&f| a.value(f).is_none())
            .collect()
    }

    pub fn predict(&self, a: &Answers) -> Result<Prediction, PredictError> {
        let missing = self.missing_fields(a);
        if !missing.is_empty() {
            return Err(PredictError::MissingFields(
                missing.iter().map(|f| f.name().to_string()).collect(),
            ));
        }
        let bias = self.intercept();
        let contributions: Vec<Contribution> = self
            .terms
            .iter()
            .zip(&self.coefficients[1..])
            .map(|(t, b)| Contribution {
                feature: t.name(),
                value: b * t.evaluate(a).expect("required fields present"),
            })
            .collect();
        let logit = bias + contributions.iter().map(|c| c.value).sum::<f64>();
        let probability = sigmoid(logit);
        Ok(Prediction {
            probability,
            positive: probability >= self.cutoff,
            logit,
            bias,
            contributions,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frozen() -> LogisticModel {
        let t = |s: &str| s.parse::<Term>().unwrap();
        LogisticModel::new(
            vec![
                t("days_of_symptoms"),
                t("loss_of_smell_taste"),
                t("contact_with_infected"),
                t("days_of_symptoms AND loss_of_smell_taste"),
                t("contact_with_infected AND loss_of_smell_taste"),
                t("days_of_symptoms AND temp_gt_38"),
            ],
            vec![-0.9299, -0.1720, 1.4948, 1.1546, 0.0112, -0.9736, 0.0763],
            0.3,
        )
        .unwrap()
    }

    #[test]
    fn worked_example() {
        let a = Answers {
            days_of_symptoms: Some(5),
            loss_of_smell_taste: Some(true),
            contact_with_infected: Some(true),
            temp_gt_38: Some(false),
            ..Default::default()
        };
        let p = frozen().predict(&a).unwrap();
        assert!((p.logit + 0.0581).abs() < 1e-12);
        assert!((p.probability - 0.4855).abs() < 1e-4);
    }

    #[test]
    fn all_absent_record() {
        let a = Answers {
            days_of_symptoms: Some(0),
            loss_of_smell_taste: Some(false),
            temp_gt_38: Some(false),
            ..Default::default()
        };
        let p = frozen().predict(&a).unwrap();
        assert!((p.probability - sigmoid(-0.9299)).abs() < 1e-15);
        assert!((p.probability - 0.2830).abs() < 1e-4);
    }

    #[test]
    fn missing_field_rejected() {
        let a = Answers {
            days_of_symptoms: Some(2),
            temp_gt_38: Some(false),
            ..Default::default()
        };
        assert_eq!(
            frozen().predict(&a),
            Err(PredictError::MissingFields(vec!["loss_of_smell_taste".into()]))
        );
    }

    #[test]
    fn shape_is_checked() {
        assert!(LogisticModel::new(vec![Term::Base(Feature::Cough)], vec![0.0], 0.5).is_err());
        assert!(LogisticModel::new(vec![], vec![0.0], 0.95).is_err());
    }

    proptest! {
        #[test]
        fn contributions_sum_to_logit(days in 0u32..30, loss: bool, contact: bool, temp: bool) {
            let a = Answers {
                days_of_symptoms: Some(days),
                loss_of_smell_taste: Some(loss),
                contact_with_infected: Some(contact),
                temp_gt_38: Some(temp),
                ..Default::default()
            };
            let p = frozen().predict(&a).unwrap();
            let sum = p.bias + p.contributions.iter().map(|c| c.value).sum::<f64>();
            prop_assert_eq!(sum, p.logit);
            prop_assert_eq!(sigmoid(p.logit), p.probability);
        }

        #[test]
        fn monotone_in_positive_terms(days in 0u32..30, contact: bool, temp: bool) {
            // Loss of smell has a positive coefficient; with contact absent the
            // net effect of switching it on is 1.4948 + 0.0112 * days > 0.
            let mk = |loss| Answers {
                days_of_symptoms: Some(days),
                loss_of_smell_taste: Some(loss),
                contact_with_infected: Some(contact),
                temp_gt_38: Some(temp),
                ..Default::default()
            };
            let m = frozen();
            let (lo, hi) = (m.predict(&mk(false)).unwrap(), m.predict(&mk(true)).unwrap());
            if !contact {
                prop_assert!(hi.probability > lo.probability);
            }
        }
    }
}
