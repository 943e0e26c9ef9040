use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::booster::{fit_boosted, Dataset, HyperParams};
use super::BoostError;
use crate::data::{stratified_folds, stratified_partition};
use crate::metrics::{metric_set, optimize_cutoff, ConfusionMatrix, CutoffGrid};

/// Settings of the booster used inside selection loops: small and fast.
pub fn selection_params() -> HyperParams {
    HyperParams {
        n_rounds: 50,
        max_depth: 3,
        learning_rate: 0.1,
        ..HyperParams::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityOptions {
    pub draws: usize,
    /// Lower bound of the row and column fractions drawn per draw.
    pub min_fraction: f64,
    pub cv_repeats: usize,
    pub folds: usize,
    /// Share of draws a feature must occur in to be ranked.
    pub min_occurrence: f64,
    pub params: HyperParams,
    pub seed: u64,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        StabilityOptions {
            draws: 100,
            min_fraction: 0.6,
            cv_repeats: 10,
            folds: 5,
            min_occurrence: 0.6,
            params: selection_params(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityEntry {
    pub feature: usize,
    pub name: String,
    pub mean_position: f64,
    pub occurrences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub draws: usize,
    pub ranking: Vec<StabilityEntry>,
    /// Features that occurred too rarely to be ranked.
    pub dropped: Vec<String>,
}

/// Total-gain importance of one draw's features, accumulated over repeated
/// k-fold training folds. Returns per-draw ranking positions (1-based) for
/// features with positive gain.
fn draw_positions(d: &Dataset, draw: usize, o: &StabilityOptions) -> Vec<(usize, usize)> {
    let seed = o.seed.wrapping_add(draw as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = d.len();
    let m = d.columns.len();
    let rf: f64 = rng.random_range(o.min_fraction..=1.0);
    let cf: f64 = rng.random_range(o.min_fraction..=1.0);
    let nr = ((rf * n as f64).ceil() as usize).clamp(1, n);
    let nc = ((cf * m as f64).ceil() as usize).clamp(1, m);
    let mut rows = sample(&mut rng, n, nr).into_vec();
    rows.sort_unstable();
    let mut cols = sample(&mut rng, m, nc).into_vec();
    cols.sort_unstable();
    let sub = d.select_rows(&rows).select_features(&cols);

    let mut gain = vec![0.0; nc];
    for rep in 0..o.cv_repeats {
        let Ok(folds) = stratified_folds(&sub.labels, o.folds, seed.wrapping_mul(31).wrapping_add(rep as u64)) else {
            continue;
        };
        for k in 0..o.folds {
            let train: Vec<usize> = (0..sub.len()).filter(|&i| folds[i] != k).collect();
            let Ok(b) = fit_boosted(&sub.select_rows(&train), &o.params, seed ^ ((rep * o.folds + k) as u64)) else {
                continue;
            };
            for (g, v) in gain.iter_mut().zip(b.importance()) {
                *g += v;
            }
        }
    }
    let mut present: Vec<usize> = (0..nc).filter(|&j| gain[j] > 0.0).collect();
    present.sort_by(|&a, &b| gain[b].total_cmp(&gain[a]).then(a.cmp(&b)));
    present.iter().enumerate().map(|(pos, &j)| (cols[j], pos + 1)).collect()
}

/// Stability ranking: each draw takes a random share (at least
/// `min_fraction`) of rows and of features, trains in repeated k-fold CV and
/// ranks features by total gain. Features occurring (positive gain) in at
/// least `min_occurrence` of the draws are ranked by mean position.
pub fn stability_rank(d: &Dataset, o: &StabilityOptions) -> Result<StabilityReport, BoostError> {
    if d.is_empty() || d.columns.is_empty() {
        return Err(BoostError::Empty);
    }
    if o.draws == 0 || !(0.0..=1.0).contains(&o.min_fraction) {
        return Err(BoostError::InvalidParams(format!("{o:?}")));
    }
    let per_draw: Vec<Vec<(usize, usize)>> = (0..o.draws).into_par_iter().map(|k| draw_positions(d, k, o)).collect();
    let m = d.columns.len();
    let mut count = vec![0usize; m];
    let mut pos_sum = vec![0usize; m];
    for draw in &per_draw {
        for &(f, p) in draw {
            count[f] += 1;
            pos_sum[f] += p;
        }
    }
    let needed = (o.min_occurrence * o.draws as f64 - 1e-9).ceil().max(1.0) as usize;
    let mut ranking: Vec<StabilityEntry> = (0..m)
        .filter(|&f| count[f] >= needed)
        .map(|f| StabilityEntry {
            feature: f,
            name: d.features[f].name(),
            mean_position: pos_sum[f] as f64 / count[f] as f64,
            occurrences: count[f],
        })
        .collect();
    if ranking.is_empty() {
        return Err(BoostError::NoStableFeature { needed });
    }
    ranking.sort_by(|a, b| {
        a.mean_position
            .total_cmp(&b.mean_position)
            .then(a.feature.cmp(&b.feature))
    });
    let dropped = (0..m)
        .filter(|&f| count[f] < needed)
        .map(|f| d.features[f].name())
        .collect();
    Ok(StabilityReport {
        draws: o.draws,
        ranking,
        dropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub repeats: usize,
    pub ratio: f64,
    pub weight: f64,
    pub params: HyperParams,
    pub grid: CutoffGrid,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            repeats: 100,
            ratio: 0.6,
            weight: 0.7,
            params: selection_params(),
            grid: CutoffGrid::default(),
            seed: 0,
        }
    }
}

/// Mean training and validation WHM of a feature subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalScore {
    pub tr: f64,
    pub ts: f64,
}

/// Repeated stratified train/validation evaluation of the booster on the
/// features `subset`. Per repeat the cutoff is tuned on the training
/// predictions. Repeats where the cutoff cannot be tuned or WHM is undefined
/// are left out of the respective mean; a mean over no defined repeat is 0.
pub fn xgb_eval(d: &Dataset, subset: &[usize], o: &EvalOptions) -> Result<EvalScore, BoostError> {
    if subset.is_empty() {
        return Err(BoostError::Empty);
    }
    if o.repeats == 0 {
        return Err(BoostError::InvalidParams("repeats must be positive".into()));
    }
    let data = d.select_features(subset);
    type Repeat = (Option<f64>, Option<f64>);
    let results: Vec<Option<Repeat>> = (0..o.repeats)
        .into_par_iter()
        .map(|r| {
            let seed = o.seed.wrapping_add(r as u64);
            let p = stratified_partition(&data.labels, &[], o.ratio, 1, seed).ok()?;
            let train = data.select_rows(&p.a);
            let valid = data.select_rows(&p.b);
            let b = fit_boosted(&train, &o.params, seed).ok()?;
            let tr_scores = b.predict_dataset(&train);
            let Ok(cut) = optimize_cutoff(&tr_scores, &train.labels, o.weight, &o.grid) else {
                return Some((None, None));
            };
            let whm_at = |scores: &[f64], labels: &[bool]| {
                let m = ConfusionMatrix::from_scores(scores, labels, cut.cutoff).expect("equal lengths");
                metric_set(&m).ok().and_then(|s| s.whm(o.weight))
            };
            Some((
                whm_at(&tr_scores, &train.labels),
                whm_at(&b.predict_dataset(&valid), &valid.labels),
            ))
        })
        .collect();
    let failed = results.iter().filter(|r| r.is_none()).count();
    if failed as f64 > 0.2 * o.repeats as f64 {
        return Err(BoostError::TooManyFailures {
            failed,
            total: o.repeats,
        });
    }
    let ok: Vec<Repeat> = results.into_iter().flatten().collect();
    let mean = |values: Vec<f64>| {
        if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        }
    };
    Ok(EvalScore {
        tr: mean(ok.iter().filter_map(|r| r.0).collect()),
        ts: mean(ok.iter().filter_map(|r| r.1).collect()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WrapperAction {
    Start,
    Add,
    Reject,
    Prune,
    Keep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrapperStep {
    pub action: WrapperAction,
    pub feature: String,
    pub tr: f64,
    pub ts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrapperState {
    /// Candidate features (indices into the dataset), in ranking order.
    pub candidates: Vec<usize>,
    pub selected: Vec<usize>,
    pub history: Vec<WrapperStep>,
}

/// Absolute tolerance for "does not degrade" comparisons.
pub const WRAPPER_TOL: f64 = 1e-9;

/// Wrapper selection. Starts from the candidate with the best validation WHM
/// on its own, then adds the remaining candidates in ranking order as long as
/// validation WHM improves without training WHM degrading, or training WHM
/// improves without validation WHM degrading; the first candidate meeting
/// neither condition ends the forward stage. Finally every
/// selected feature whose removal does not lower validation WHM is pruned
/// (never leaving the set empty).
pub fn wrapper_select(d: &Dataset, candidates: &[usize], o: &EvalOptions) -> Result<WrapperState, BoostError> {
    if candidates.is_empty() {
        return Err(BoostError::Empty);
    }
    let name = |f: usize| d.features[f].name();
    let mut history = Vec::new();
    let mut start: Option<(usize, EvalScore)> = None;
    for &a in candidates {
        let s = xgb_eval(d, &[a], o)?;
        if start.is_none_or(|(_, b)| s.ts > b.ts) {
            start = Some((a, s));
        }
    }
    let (first, mut score) = start.expect("non-empty candidates");
    history.push(WrapperStep {
        action: WrapperAction::Start,
        feature: name(first),
        tr: score.tr,
        ts: score.ts,
    });
    let mut selected = vec![first];

    for &a in candidates {
        if selected.contains(&a) {
            continue;
        }
        let mut trial = selected.clone();
        trial.push(a);
        let s = xgb_eval(d, &trial, o)?;
        let better_ts = s.ts > score.ts + WRAPPER_TOL && s.tr >= score.tr - WRAPPER_TOL;
        let better_tr = s.ts >= score.ts - WRAPPER_TOL && s.tr > score.tr + WRAPPER_TOL;
        if better_ts || better_tr {
            selected = trial;
            score = s;
            history.push(WrapperStep {
                action: WrapperAction::Add,
                feature: name(a),
                tr: s.tr,
                ts: s.ts,
            });
        } else {
            history.push(WrapperStep {
                action: WrapperAction::Reject,
                feature: name(a),
                tr: s.tr,
                ts: s.ts,
            });
            break;
        }
    }

    for b in selected.clone() {
        if selected.len() == 1 {
            break;
        }
        let trial: Vec<usize> = selected.iter().copied().filter(|&f| f != b).collect();
        let s = xgb_eval(d, &trial, o)?;
        let action = if s.ts >= score.ts - WRAPPER_TOL {
            selected = trial;
            score = s;
            WrapperAction::Prune
        } else {
            WrapperAction::Keep
        };
        history.push(WrapperStep {
            action,
            feature: name(b),
            tr: s.tr,
            ts: s.ts,
        });
    }
    Ok(WrapperState {
        candidates: candidates.to_vec(),
        selected,
        history,
    })
}
