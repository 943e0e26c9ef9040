//! Synthetic cohorts with known ground truth.
//!
//! Features are drawn per symptomatic group, the COVID-19 label is drawn from a
//! logistic model over the complete (pre-missingness) answers, and missingness
//! is applied last. The shipped default configuration is illustrative: its
//! class marginals follow a 3114-record reference cohort, but the per-feature
//! rates are invented.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::cohort::Cohort;
use super::record::{Answers, CovidTest, Feature, Sex, SurveyRecord, TEMP_RANGE};
use super::DataError;
use crate::features::Term;
use crate::sigmoid;

/// Number of records in each (symptomatic x test result) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CohortCells {
    /// Labels are sampled from the ground-truth model and then accepted only
    /// while their cell still has room, so every cell is hit exactly.
    Exact {
        healthy_negative: usize,
        healthy_positive: usize,
        sick_negative: usize,
        sick_positive: usize,
    },
    /// Labels are sampled from the ground-truth model with no adjustment.
    Natural { healthy: usize, sick: usize },
}

impl CohortCells {
    pub fn total(&self) -> usize {
        match *self {
            CohortCells::Exact {
                healthy_negative,
                healthy_positive,
                sick_negative,
                sick_positive,
            } => healthy_negative + healthy_positive + sick_negative + sick_positive,
            CohortCells::Natural { healthy, sick } => healthy + sick,
        }
    }
}

/// Test-set flags to assign among symptomatic records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoldoutCounts {
    pub negative: usize,
    pub positive: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NumericDist {
    /// Normal draw clipped to `[min, max]`.
    Normal {
        mean: f64,
        sd: f64,
        min: f64,
        max: f64,
    },
    /// `offset + Poisson(mean)`, capped at `max`.
    Poisson {
        offset: f64,
        mean: f64,
        max: f64,
    },
    Constant {
        value: f64,
    },
}

impl NumericDist {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            NumericDist::Normal { mean, sd, min, max } => {
                let d = Normal::new(mean, sd.max(0.0)).expect("finite normal parameters");
                d.sample(rng).clamp(min, max)
            }
            NumericDist::Poisson { offset, mean, max } => {
                let draw = if mean > 0.0 {
                    Poisson::new(mean).expect("positive rate").sample(rng)
                } else {
                    0.0
                };
                (offset + draw).min(max)
            }
            NumericDist::Constant { value } => value,
        }
    }

    fn is_valid(&self) -> bool {
        match *self {
            NumericDist::Normal { mean, sd, min, max } => mean.is_finite() && sd.is_finite() && sd >= 0.0 && min <= max,
            NumericDist::Poisson { offset, mean, max } => {
                offset.is_finite() && mean.is_finite() && mean >= 0.0 && offset >= 0.0 && max >= offset
            }
            NumericDist::Constant { value } => value.is_finite(),
        }
    }
}

/// Feature distributions for one symptomatic group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupModel {
    pub p_male: f64,
    /// Probability of "yes" for each tri-state answer (contact and symptoms).
    pub rates: BTreeMap<Feature, f64>,
    pub days_of_symptoms: NumericDist,
    /// Maximal temperature when `temp_gt_38` is "yes" / "no".
    pub max_temp_febrile: NumericDist,
    pub max_temp_afebrile: NumericDist,
    pub temperature: NumericDist,
    pub saturation: NumericDist,
    pub age: NumericDist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureModel {
    pub healthy: GroupModel,
    pub sick: GroupModel,
}

/// A fraction of records whose answers go missing with elevated probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissingBlock {
    pub fraction: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MissingnessModel {
    /// Per-feature probability that an answer is left blank.
    #[serde(default)]
    pub per_feature: BTreeMap<Feature, f64>,
    #[serde(default)]
    pub block: Option<MissingBlock>,
}

/// Logistic model used to sample labels: `P(positive) = sigmoid(intercept +
/// sum coefficient * term)`, with terms evaluated on the complete answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub intercept: f64,
    pub terms: Vec<(Term, f64)>,
}

impl GroundTruth {
    pub fn probability(&self, answers: &Answers) -> f64 {
        let eta = self.terms.iter().fold(self.intercept, |acc, (t, c)| {
            acc + c * t.evaluate(answers).unwrap_or(0.0)
        });
        sigmoid(eta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_total: usize,
    pub cells: CohortCells,
    #[serde(default)]
    pub holdout: Option<HoldoutCounts>,
    pub feature_model: FeatureModel,
    #[serde(default)]
    pub missingness: MissingnessModel,
    pub ground_truth: GroundTruth,
    pub seed: u64,
    /// Candidate draws allowed per requested record before giving up.
    #[serde(default = "default_budget")]
    pub draws_per_record: usize,
}

fn default_budget() -> usize {
    200
}

fn prob_ok(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidSpec(m));
        if self.cells.total() != self.n_total {
            return bad(format!(
                "cell counts sum to {}, n_total is {}",
                self.cells.total(),
                self.n_total
            ));
        }
        for (name, g) in [
            ("healthy", &self.feature_model.healthy),
            ("sick", &self.feature_model.sick),
        ] {
            if !prob_ok(g.p_male) {
                return bad(format!("{name}.p_male out of [0,1]"));
            }
            for (f, &p) in &g.rates {
                if g_rate_feature(*f).is_none() {
                    return bad(format!("{name}.rates: `{f}` is not a tri-state answer"));
                }
                if !prob_ok(p) {
                    return bad(format!("{name}.rates.{f} out of [0,1]"));
                }
            }
            for d in [
                &g.days_of_symptoms,
                &g.max_temp_febrile,
                &g.max_temp_afebrile,
                &g.temperature,
                &g.saturation,
                &g.age,
            ] {
                if !d.is_valid() {
                    return bad(format!("{name}: invalid numeric distribution {d:?}"));
                }
            }
        }
        for (f, &p) in &self.missingness.per_feature {
            if !prob_ok(p) {
                return bad(format!("missingness.{f} out of [0,1]"));
            }
        }
        if let Some(b) = self.missingness.block {
            if !prob_ok(b.fraction) || !prob_ok(b.probability) {
                return bad("missingness.block probabilities out of [0,1]".into());
            }
        }
        if let Some(h) = self.holdout {
            let (sick_neg, sick_pos) = match self.cells {
                CohortCells::Exact {
                    sick_negative,
                    sick_positive,
                    ..
                } => (sick_negative, sick_positive),
                CohortCells::Natural { .. } => return bad("holdout counts require exact cohort cells".into()),
            };
            if h.negative > sick_neg || h.positive > sick_pos {
                return bad("holdout counts exceed symptomatic cell counts".into());
            }
        }
        if !self.ground_truth.intercept.is_finite() || self.ground_truth.terms.iter().any(|(_, c)| !c.is_finite()) {
            return bad("ground-truth coefficients must be finite".into());
        }
        Ok(())
    }

    /// Illustrative defaults with reference cohort counts: 3114 records, 1941
    /// symptomatic, 759 positive, 577 symptomatic records in the test
    /// partition. Labels follow a six-term reference logistic model.
    pub fn reference(seed: u64) -> SynthSpec {
        use Feature::*;
        let sick_rates = BTreeMap::from([
            (ContactWithInfected, 0.25),
            (TempGt38, 0.45),
            (Cough, 0.55),
            (Dyspnoea, 0.30),
            (MuscleAches, 0.35),
            (LossOfSmellTaste, 0.22),
            (SoreThroat, 0.30),
            (Headache, 0.35),
            (Dizziness, 0.15),
            (SkinReactions, 0.05),
        ]);
        let healthy_rates = BTreeMap::from([
            (ContactWithInfected, 0.30),
            (TempGt38, 0.0),
            (Cough, 0.0),
            (Dyspnoea, 0.0),
            (MuscleAches, 0.0),
            (LossOfSmellTaste, 0.0),
            (SoreThroat, 0.0),
            (Headache, 0.0),
            (Dizziness, 0.0),
            (SkinReactions, 0.0),
        ]);
        let common = |rates, days| GroupModel {
            p_male: 0.45,
            rates,
            days_of_symptoms: days,
            max_temp_febrile: NumericDist::Normal {
                mean: 38.8,
                sd: 0.5,
                min: 38.1,
                max: 41.5,
            },
            max_temp_afebrile: NumericDist::Normal {
                mean: 37.2,
                sd: 0.4,
                min: 35.5,
                max: 38.0,
            },
            temperature: NumericDist::Normal {
                mean: 36.9,
                sd: 0.6,
                min: 35.0,
                max: 40.5,
            },
            saturation: NumericDist::Normal {
                mean: 96.0,
                sd: 2.5,
                min: 75.0,
                max: 100.0,
            },
            age: NumericDist::Normal {
                mean: 52.0,
                sd: 18.0,
                min: 18.0,
                max: 95.0,
            },
        };
        let per_feature = BTreeMap::from([
            (Sex, 0.02),
            (ContactWithInfected, 0.30),
            (DaysOfSymptoms, 0.04),
            (TempGt38, 0.03),
            (MaxTemp, 0.35),
            (Cough, 0.03),
            (Dyspnoea, 0.04),
            (MuscleAches, 0.06),
            (LossOfSmellTaste, 0.05),
            (SoreThroat, 0.06),
            (Headache, 0.06),
            (Dizziness, 0.08),
            (SkinReactions, 0.10),
            (Temperature, 0.30),
            (Saturation, 0.35),
            (Age, 0.02),
        ]);
        let t = |s: &str| s.parse::<Term>().expect("valid term name");
        SynthSpec {
            n_total: 3114,
            cells: CohortCells::Exact {
                healthy_negative: 1000,
                healthy_positive: 173,
                sick_negative: 1355,
                sick_positive: 586,
            },
            holdout: Some(HoldoutCounts {
                negative: 393,
                positive: 184,
            }),
            feature_model: FeatureModel {
                healthy: common(healthy_rates, NumericDist::Constant { value: 0.0 }),
                sick: common(
                    sick_rates,
                    NumericDist::Poisson {
                        offset: 1.0,
                        mean: 5.0,
                        max: 60.0,
                    },
                ),
            },
            missingness: MissingnessModel {
                per_feature,
                block: Some(MissingBlock {
                    fraction: 0.06,
                    probability: 0.8,
                }),
            },
            ground_truth: GroundTruth {
                intercept: -0.9299,
                terms: vec![
                    (t("days_of_symptoms"), -0.1720),
                    (t("loss_of_smell_taste"), 1.4948),
                    (t("contact_with_infected"), 1.1546),
                    (t("days_of_symptoms AND loss_of_smell_taste"), 0.0112),
                    (t("contact_with_infected AND loss_of_smell_taste"), -0.9736),
                    (t("days_of_symptoms AND temp_gt_38"), 0.0763),
                ],
            },
            seed,
            draws_per_record: default_budget(),
        }
    }
}

fn g_rate_feature(f: Feature) -> Option<()> {
    (f == Feature::ContactWithInfected || f.is_symptom()).then_some(())
}

fn sample_answers(g: &GroupModel, rng: &mut impl Rng) -> Answers {
    let mut a = Answers {
        sex: Some(if rng.random::<f64>() < g.p_male { Sex::M } else { Sex::F }),
        ..Default::default()
    };
    let tri = std::iter::once(Feature::ContactWithInfected).chain(Feature::SYMPTOMS);
    for f in tri {
        let p = g.rates.get(&f).copied().unwrap_or(0.0);
        let v = rng.random::<f64>() < p;
        *a.tri_state_mut(f).expect("tri-state feature") = Some(v);
    }
    let mut days = g.days_of_symptoms.sample(rng).round().max(0.0) as u32;
    if days == 0 && a.any_symptom() {
        days = 1;
    }
    a.days_of_symptoms = Some(days);
    let febrile = a.temp_gt_38 == Some(true);
    let max_temp = if febrile {
        g.max_temp_febrile.sample(rng)
    } else {
        g.max_temp_afebrile.sample(rng)
    };
    a.max_temp = Some(round1(max_temp.clamp(TEMP_RANGE.0, TEMP_RANGE.1)));
    a.temperature = Some(round1(g.temperature.sample(rng).clamp(TEMP_RANGE.0, TEMP_RANGE.1)));
    a.saturation = Some(g.saturation.sample(rng).round().clamp(50.0, 100.0) as u8);
    a.age = Some(g.age.sample(rng).round().max(0.0) as u32);
    a
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn apply_missingness(a: &mut Answers, m: &MissingnessModel, in_block: bool, rng: &mut impl Rng) {
    for f in Feature::ALL {
        let base = m.per_feature.get(&f).copied().unwrap_or(0.0);
        let p = match (in_block, m.block) {
            (true, Some(b)) => b.probability.max(base),
            _ => base,
        };
        // Draw for every feature so the stream does not depend on the rates.
        let u = rng.random::<f64>();
        if u < p {
            a.clear(f);
        }
    }
}

/// Generates a cohort from `spec`. Deterministic for a given spec.
pub fn synthesize_cohort(spec: &SynthSpec) -> Result<Cohort, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let budget = spec.draws_per_record.max(1);

    let mut records: Vec<SurveyRecord> = Vec::with_capacity(spec.n_total);
    let groups: [(bool, &GroupModel); 2] = [(false, &spec.feature_model.healthy), (true, &spec.feature_model.sick)];
    for (symptomatic, model) in groups {
        match spec.cells {
            CohortCells::Exact {
                healthy_negative,
                healthy_positive,
                sick_negative,
                sick_positive,
            } => {
                let (mut need_neg, mut need_pos) = if symptomatic {
                    (sick_negative, sick_positive)
                } else {
                    (healthy_negative, healthy_positive)
                };
                let limit = budget * (need_neg + need_pos);
                let mut draws = 0usize;
                while need_neg + need_pos > 0 {
                    if draws >= limit {
                        return Err(DataError::Infeasible {
                            draws,
                            missing_negative: need_neg,
                            missing_positive: need_pos,
                        });
                    }
                    draws += 1;
                    let answers = sample_answers(model, &mut rng);
                    let positive = rng.random::<f64>() < spec.ground_truth.probability(&answers);
                    let slot = if positive { &mut need_pos } else { &mut need_neg };
                    if *slot > 0 {
                        *slot -= 1;
                        records.push(SurveyRecord {
                            answers,
                            symptomatic,
                            covid_test: CovidTest::from(positive),
                            holdout_flag: false,
                        });
                    }
                }
            }
            CohortCells::Natural { healthy, sick } => {
                let n = if symptomatic { sick } else { healthy };
                for _ in 0..n {
                    let answers = sample_answers(model, &mut rng);
                    let positive = rng.random::<f64>() < spec.ground_truth.probability(&answers);
                    records.push(SurveyRecord {
                        answers,
                        symptomatic,
                        covid_test: CovidTest::from(positive),
                        holdout_flag: false,
                    });
                }
            }
        }
    }

    if let Some(h) = spec.holdout {
        for (positive, count) in [(false, h.negative), (true, h.positive)] {
            let mut idx: Vec<usize> = (0..records.len())
                .filter(|&i| records[i].symptomatic && records[i].label() == Some(positive))
                .collect();
            idx.shuffle(&mut rng);
            for &i in idx.iter().take(count) {
                records[i].holdout_flag = true;
            }
        }
    }

    let block_fraction = spec.missingness.block.map_or(0.0, |b| b.fraction);
    for r in &mut records {
        let in_block = rng.random::<f64>() < block_fraction;
        apply_missingness(&mut r.answers, &spec.missingness, in_block, &mut rng);
    }
    records.shuffle(&mut rng);

    Ok(Cohort::new(records, format!("synthetic cohort (seed {})", spec.seed)))
}
