use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, Presorted, RegressionTree, TreeParams};
use super::BoostError;
use crate::data::{Answers, Cohort};
use crate::features::Term;
use crate::model::{Contribution, Prediction};
use crate::{logit, sigmoid};

/// Column-major training data; missing cells are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Term>,
    pub columns: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

impl Dataset {
    /// Records with a known label; missing term values become NaN.
    pub fn from_cohort(c: &Cohort, features: &[Term]) -> Dataset {
        let kept: Vec<_> = c.records.iter().filter_map(|r| r.label().map(|l| (r, l))).collect();
        Dataset {
            features: features.to_vec(),
            columns: features
                .iter()
                .map(|t| {
                    kept.iter()
                        .map(|(r, _)| t.evaluate(&r.answers).unwrap_or(f64::NAN))
                        .collect()
                })
                .collect(),
            labels: kept.iter().map(|&(_, l)| l).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select_features(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: idx.iter().map(|&i| self.features[i]).collect(),
            columns: idx.iter().map(|&i| self.columns[i].clone()).collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[r]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_child_weight: f64,
    pub l2_lambda: f64,
    pub gamma: f64,
    pub subsample: f64,
    pub colsample: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            n_rounds: 100,
            max_depth: 6,
            learning_rate: 0.3,
            min_child_weight: 1.0,
            l2_lambda: 1.0,
            gamma: 0.0,
            subsample: 1.0,
            colsample: 1.0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), BoostError> {
        let ok = self.n_rounds > 0
            && self.max_depth > 0
            && self.learning_rate > 0.0
            && self.min_child_weight >= 0.0
            && self.l2_lambda >= 0.0
            && self.gamma >= 0.0
            && self.subsample > 0.0
            && self.subsample <= 1.0
            && self.colsample > 0.0
            && self.colsample <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(BoostError::InvalidParams(format!("{self:?}")))
        }
    }

    fn tree(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_child_weight: self.min_child_weight,
            lambda: self.l2_lambda,
            gamma: self.gamma,
        }
    }
}

/// Additive tree model on the logit scale:
/// `logit(base_score) + learning_rate * Σ leaf weights`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Booster {
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    pub trees: Vec<RegressionTree>,
}

impl Booster {
    pub fn margin(&self, x: &[f64]) -> f64 {
        logit(self.base_score) + self.learning_rate * self.trees.iter().map(|t| t.leaf_value(|f| x[f])).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }

    pub fn predict_dataset(&self, d: &Dataset) -> Vec<f64> {
        (0..d.len()).map(|r| self.predict_proba(&d.row(r))).collect()
    }

    /// Path attribution: each split moves the running value from the parent's
    /// weight to the child's, credited (scaled by the learning rate) to the
    /// split feature. Returns `(bias, per-feature contributions)`, where the
    /// bias collects the base logit and the root weights.
    pub fn contributions(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut bias = logit(self.base_score);
        let mut out = vec![0.0; self.n_features];
        for t in &self.trees {
            let path = t.path(|f| x[f]);
            bias += self.learning_rate * t.nodes[0].value;
            for pair in path.windows(2) {
                let parent = &t.nodes[pair[0]];
                let child = &t.nodes[pair[1]];
                let f = parent.split.expect("inner node").feature;
                out[f] += self.learning_rate * (child.value - parent.value);
            }
        }
        (bias, out)
    }

    /// Total split gain per feature.
    pub fn importance(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        for t in &self.trees {
            for n in &t.nodes {
                if let Some(s) = n.split {
                    out[s.feature] += s.gain;
                }
            }
        }
        out
    }
}

pub const DEFAULT_BASE_SCORE: f64 = 0.5;

/// Logistic-loss gradient boosting with exact greedy splits, learned
/// missing-value directions and seeded row/column subsampling (rows without
/// replacement per round, columns per tree).
pub fn fit_boosted(d: &Dataset, params: &HyperParams, seed: u64) -> Result<Booster, BoostError> {
    params.validate()?;
    let n = d.len();
    let m = d.columns.len();
    if n == 0 || m == 0 {
        return Err(BoostError::Empty);
    }
    let pos = d.labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == n {
        return Err(BoostError::SingleClass);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let presorted = Presorted::new(&d.columns);
    let tp = params.tree();
    let y: Vec<f64> = d.labels.iter().map(|&l| f64::from(u8::from(l))).collect();
    let mut margin = vec![logit(DEFAULT_BASE_SCORE); n];
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let n_rows = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let n_cols = ((params.colsample * m as f64).round() as usize).clamp(1, m);
    let mut trees = Vec::with_capacity(params.n_rounds);
    for _ in 0..params.n_rounds {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            g[i] = p - y[i];
            h[i] = p * (1.0 - p);
        }
        let mut rows: Vec<usize> = if n_rows < n {
            sample(&mut rng, n, n_rows).into_vec()
        } else {
            (0..n).collect()
        };
        rows.sort_unstable();
        let mut cols: Vec<usize> = if n_cols < m {
            sample(&mut rng, m, n_cols).into_vec()
        } else {
            (0..m).collect()
        };
        cols.sort_unstable();
        let tree = grow_tree(&d.columns, &presorted, &rows, &cols, &g, &h, &tp);
        for (i, mg) in margin.iter_mut().enumerate() {
            *mg += params.learning_rate * tree.leaf_value(|f| d.columns[f][i]);
        }
        trees.push(tree);
    }
    Ok(Booster {
        base_score: DEFAULT_BASE_SCORE,
        learning_rate: params.learning_rate,
        n_features: m,
        trees,
    })
}

/// Mean logistic loss of a booster on a dataset.
pub fn logistic_loss(b: &Booster, d: &Dataset) -> f64 {
    (0..d.len())
        .map(|r| {
            let z = b.margin(&d.row(r));
            crate::softplus(z) - if d.labels[r] { z } else { 0.0 }
        })
        .sum::<f64>()
        / d.len() as f64
}

/// A trained booster bound to its questionnaire features and decision cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub features: Vec<Term>,
    pub booster: Booster,
    pub cutoff: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<HyperParams>,
}

impl BoostedEnsemble {
    pub fn feature_values(&self, a: &Answers) -> Vec<f64> {
        self.features
            .iter()
            .map(|t| t.evaluate(a).unwrap_or(f64::NAN))
            .collect()
    }

    pub fn validate(&self) -> Result<(), BoostError> {
        if self.features.len() != self.booster.n_features {
            return Err(BoostError::InvalidParams(format!(
                "{} feature names for {} model inputs",
                self.features.len(),
                self.booster.n_features
            )));
        }
        for t in &self.booster.trees {
            for n in &t.nodes {
                if !n.value.is_finite() {
                    return Err(BoostError::InvalidParams("non-finite node weight".into()));
                }
                if let Some(s) = n.split {
                    if s.feature >= self.booster.n_features || s.left >= t.nodes.len() || s.right >= t.nodes.len() {
                        return Err(BoostError::InvalidParams("dangling split reference".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Missing answers are routed by the learned default directions, so every
    /// record gets a prediction.
    pub fn predict(&self, a: &Answers) -> Prediction {
        let x = self.feature_values(a);
        let logit = self.booster.margin(&x);
        let (bias, contrib) = self.booster.contributions(&x);
        let probability = sigmoid(logit);
        Prediction {
            probability,
            positive: probability >= self.cutoff,
            logit,
            bias,
            contributions: self
                .features
                .iter()
                .zip(contrib)
                .map(|(t, value)| Contribution {
                    feature: t.name(),
                    value,
                })
                .collect(),
        }
    }
}
