use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cohort::Cohort;
use super::record::Feature;
use super::DataError;

/// Largest tolerated difference in a balanced feature's positive rate
/// between the two parts of a split.
pub const BALANCE_TOLERANCE: f64 = 0.05;

/// Index partition produced by [`stratified_partition`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    /// Whether every balanced feature ended within [`BALANCE_TOLERANCE`].
    pub balanced: bool,
    /// Largest positive-rate gap over the balanced features.
    pub worst_gap: f64,
    pub attempts: usize,
}

/// Number of records of each class that go to the first part. The first part
/// receives `round(n * ratio)` records overall; per class the floor of
/// `n_class * ratio` is taken and the leftover slots go to the classes with the
/// largest fractional remainders (ties drawn at random).
fn class_quotas(n_pos: usize, n_neg: usize, ratio: f64, rng: &mut impl Rng) -> (usize, usize) {
    let total = ((n_pos + n_neg) as f64 * ratio).round() as usize;
    let exact = [n_pos as f64 * ratio, n_neg as f64 * ratio];
    let mut quota = [exact[0].floor() as usize, exact[1].floor() as usize];
    let caps = [n_pos, n_neg];
    let mut order = [0usize, 1];
    let frac = |i: usize| exact[i] - exact[i].floor();
    if frac(0) == frac(1) {
        if rng.random::<bool>() {
            order.swap(0, 1);
        }
    } else if frac(1) > frac(0) {
        order.swap(0, 1);
    }
    let mut left = total.saturating_sub(quota[0] + quota[1]);
    for &c in &order {
        if left > 0 && quota[c] < caps[c] {
            quota[c] += 1;
            left -= 1;
        }
    }
    (quota[0], quota[1])
}

fn positive_rate(indices: &[usize], column: &[Option<bool>]) -> Option<f64> {
    let (mut yes, mut seen) = (0usize, 0usize);
    for &i in indices {
        if let Some(v) = column[i] {
            seen += 1;
            yes += usize::from(v);
        }
    }
    (seen > 0).then(|| yes as f64 / seen as f64)
}

fn worst_gap(a: &[usize], b: &[usize], balance: &[Vec<Option<bool>>]) -> f64 {
    balance
        .iter()
        .filter_map(|col| match (positive_rate(a, col), positive_rate(b, col)) {
            (Some(x), Some(y)) => Some((x - y).abs()),
            _ => None,
        })
        .fold(0.0, f64::max)
}

/// Label-stratified random partition of `labels.len()` items into parts of
/// relative size `ratio` and `1 - ratio`.
///
/// Each column of `balance` is a binary feature whose positive rate should
/// agree between the parts within [`BALANCE_TOLERANCE`]; the partition is
/// redrawn up to `max_tries` times and the best draw is kept.
pub fn stratified_partition(
    labels: &[bool],
    balance: &[Vec<Option<bool>>],
    ratio: f64,
    max_tries: usize,
    seed: u64,
) -> Result<Partition, DataError> {
    if labels.is_empty() {
        return Err(DataError::EmptyCohort);
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::InvalidRatio(ratio));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();

    let mut best: Option<Partition> = None;
    for attempt in 1..=max_tries.max(1) {
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        let (qp, qn) = class_quotas(pos.len(), neg.len(), ratio, &mut rng);
        let mut a: Vec<usize> = pos[..qp].iter().chain(&neg[..qn]).copied().collect();
        let mut b: Vec<usize> = pos[qp..].iter().chain(&neg[qn..]).copied().collect();
        a.sort_unstable();
        b.sort_unstable();
        let gap = worst_gap(&a, &b, balance);
        let better = best.as_ref().is_none_or(|p| gap < p.worst_gap);
        if better {
            best = Some(Partition {
                a,
                b,
                balanced: gap <= BALANCE_TOLERANCE,
                worst_gap: gap,
                attempts: attempt,
            });
        }
        if gap <= BALANCE_TOLERANCE {
            break;
        }
    }
    let mut best = best.expect("at least one attempt");
    best.attempts = best.attempts.max(1);
    Ok(best)
}

/// Fold index (`0..k`) of every item for label-stratified k-fold
/// cross-validation: each class is shuffled and dealt round-robin, continuing
/// across classes so fold sizes differ by at most one.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>, DataError> {
    if labels.len() < k || k < 2 {
        return Err(DataError::InvalidSpec(format!(
            "cannot form {k} folds from {} records",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            fold[i] = next % k;
            next += 1;
        }
    }
    Ok(fold)
}

/// Diagnostics reported alongside a cohort split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub balanced: bool,
    pub worst_gap: f64,
    pub attempts: usize,
}

/// Label-stratified split of a cohort, balancing the listed binary features.
/// Every record must carry a known test result.
pub fn stratified_split(
    c: &Cohort,
    ratio: f64,
    balance_features: &[Feature],
    max_tries: usize,
    seed: u64,
) -> Result<(Cohort, Cohort, SplitReport), DataError> {
    if c.is_empty() {
        return Err(DataError::EmptyCohort);
    }
    let labels = c.labels()?;
    let mut balance = Vec::with_capacity(balance_features.len());
    for &f in balance_features {
        if !f.is_binary() {
            return Err(DataError::NotBinary(f));
        }
        balance.push(
            c.records
                .iter()
                .map(|r| r.answers.value(f).map(|v| v > 0.5))
                .collect::<Vec<_>>(),
        );
    }
    let p = stratified_partition(&labels, &balance, ratio, max_tries, seed)?;
    Ok((
        c.subset(&p.a),
        c.subset(&p.b),
        SplitReport {
            balanced: p.balanced,
            worst_gap: p.worst_gap,
            attempts: p.attempts,
        },
    ))
}
