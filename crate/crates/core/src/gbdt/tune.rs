use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::booster::{fit_boosted, Dataset, HyperParams};
use super::BoostError;
use crate::data::stratified_folds;
use crate::metrics::{metric_set, optimize_cutoff, ConfusionMatrix, CutoffGrid};

/// Bounds of the random search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub n_rounds: (usize, usize),
    pub max_depth: (usize, usize),
    pub learning_rate: (f64, f64),
    pub min_child_weight: (f64, f64),
    pub l2_lambda: (f64, f64),
    pub gamma: (f64, f64),
    pub subsample: (f64, f64),
    pub colsample: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            n_rounds: (20, 500),
            max_depth: (2, 8),
            learning_rate: (0.01, 0.3),
            min_child_weight: (1.0, 10.0),
            l2_lambda: (0.1, 10.0),
            gamma: (0.0, 5.0),
            subsample: (0.5, 1.0),
            colsample: (0.5, 1.0),
        }
    }
}

fn log_uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo.ln()..=hi.ln()).exp().clamp(lo, hi)
}

impl SearchSpace {
    /// Learning rate and L2 penalty are drawn log-uniformly, the rest
    /// uniformly.
    pub fn sample(&self, rng: &mut impl Rng) -> HyperParams {
        HyperParams {
            n_rounds: rng.random_range(self.n_rounds.0..=self.n_rounds.1),
            max_depth: rng.random_range(self.max_depth.0..=self.max_depth.1),
            learning_rate: log_uniform(rng, self.learning_rate),
            min_child_weight: rng.random_range(self.min_child_weight.0..=self.min_child_weight.1),
            l2_lambda: log_uniform(rng, self.l2_lambda),
            gamma: rng.random_range(self.gamma.0..=self.gamma.1),
            subsample: rng.random_range(self.subsample.0..=self.subsample.1),
            colsample: rng.random_range(self.colsample.0..=self.colsample.1),
        }
    }

    pub fn contains(&self, p: &HyperParams) -> bool {
        let within = |v: f64, (lo, hi): (f64, f64)| lo <= v && v <= hi;
        (self.n_rounds.0..=self.n_rounds.1).contains(&p.n_rounds)
            && (self.max_depth.0..=self.max_depth.1).contains(&p.max_depth)
            && within(p.learning_rate, self.learning_rate)
            && within(p.min_child_weight, self.min_child_weight)
            && within(p.l2_lambda, self.l2_lambda)
            && within(p.gamma, self.gamma)
            && within(p.subsample, self.subsample)
            && within(p.colsample, self.colsample)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    pub budget: usize,
    pub folds: usize,
    /// WHM weight used to tune the cutoff inside each fold.
    pub weight: f64,
    pub grid: CutoffGrid,
    pub space: SearchSpace,
    pub seed: u64,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            budget: 100,
            folds: 5,
            weight: 0.7,
            grid: CutoffGrid::default(),
            space: SearchSpace::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub params: HyperParams,
    pub mean_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub best: HyperParams,
    pub best_index: usize,
    pub trials: Vec<Trial>,
}

/// Mean validation F1 of `params` over the given fold assignment. Within each
/// fold the cutoff is tuned for WHM on the training part; folds with an
/// undefined F1 or a failed fit score 0.
pub fn cv_f1(
    d: &Dataset,
    folds: &[usize],
    k: usize,
    params: &HyperParams,
    weight: f64,
    grid: &CutoffGrid,
    seed: u64,
) -> f64 {
    let mut total = 0.0;
    for fold in 0..k {
        let train: Vec<usize> = (0..d.len()).filter(|&i| folds[i] != fold).collect();
        let valid: Vec<usize> = (0..d.len()).filter(|&i| folds[i] == fold).collect();
        let (tr, va) = (d.select_rows(&train), d.select_rows(&valid));
        let Ok(b) = fit_boosted(&tr, params, seed.wrapping_add(fold as u64)) else {
            continue;
        };
        let Ok(cut) = optimize_cutoff(&b.predict_dataset(&tr), &tr.labels, weight, grid) else {
            continue;
        };
        let m = ConfusionMatrix::from_scores(&b.predict_dataset(&va), &va.labels, cut.cutoff).expect("equal lengths");
        total += metric_set(&m).ok().and_then(|s| s.f1).unwrap_or(0.0);
    }
    total / k as f64
}

/// Random search scored by mean validation F1 over stratified folds shared
/// by all trials. The first trial with the highest score wins.
pub fn tune_hyperparams(d: &Dataset, o: &TuneOptions) -> Result<TuningReport, BoostError> {
    if o.budget == 0 {
        return Err(BoostError::InvalidParams("budget must be at least 1".into()));
    }
    let folds = stratified_folds(&d.labels, o.folds, o.seed).map_err(|e| BoostError::Data(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    let candidates: Vec<HyperParams> = (0..o.budget).map(|_| o.space.sample(&mut rng)).collect();
    let trials: Vec<Trial> = candidates
        .into_par_iter()
        .map(|params| Trial {
            mean_f1: cv_f1(d, &folds, o.folds, &params, o.weight, &o.grid, o.seed),
            params,
        })
        .collect();
    let mut best_index = 0;
    for (i, t) in trials.iter().enumerate() {
        if t.mean_f1 > trials[best_index].mean_f1 {
            best_index = i;
        }
    }
    Ok(TuningReport {
        best: trials[best_index].params,
        best_index,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Feature;
    use crate::features::Term;
    use proptest::prelude::*;

    fn data() -> Dataset {
        let x: Vec<f64> = (0..80).map(|i| ((i * 13) % 7) as f64).collect();
        let labels = x.iter().enumerate().map(|(i, &v)| v >= 4.0 || i % 11 == 0).collect();
        Dataset {
            features: vec![Term::Base(Feature::DaysOfSymptoms)],
            columns: vec![x],
            labels,
        }
    }

    #[test]
    fn budget_one_returns_the_sampled_configuration() {
        let o = TuneOptions {
            budget: 1,
            space: SearchSpace {
                n_rounds: (20, 30),
                ..Default::default()
            },
            ..Default::default()
        };
        let r = tune_hyperparams(&data(), &o).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
        assert_eq!(r.best, o.space.sample(&mut rng));
        assert_eq!(r.trials.len(), 1);
    }

    #[test]
    fn best_trial_has_highest_score() {
        let o = TuneOptions {
            budget: 4,
            space: SearchSpace {
                n_rounds: (20, 40),
                ..Default::default()
            },
            ..Default::default()
        };
        let r = tune_hyperparams(&data(), &o).unwrap();
        let best = r.trials[r.best_index].mean_f1;
        assert!(r.trials.iter().all(|t| t.mean_f1 <= best));
        assert!(r.trials[..r.best_index].iter().all(|t| t.mean_f1 < best));
    }

    proptest! {
        #[test]
        fn samples_stay_in_bounds(seed in any::<u64>()) {
            let s = SearchSpace::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..20 {
                prop_assert!(s.contains(&s.sample(&mut rng)));
            }
        }
    }
}
