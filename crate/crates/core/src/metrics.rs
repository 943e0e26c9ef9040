//! Confusion-matrix metrics, the weighted harmonic mean of NPV and PPV, and
//! cutoff search over a constrained probability interval.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("confusion matrix is empty")]
    EmptyConfusion,
    #[error("length mismatch: {0} scores vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("weight must lie in [0, 1], got {0}")]
    InvalidWeight(f64),
    #[error("invalid cutoff interval [{lo}, {hi}] with step {step}")]
    InvalidGrid { lo: f64, hi: f64, step: f64 },
    #[error("score {0} is outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("NPV or PPV is undefined at every grid cutoff")]
    AllUndefined,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn from_predictions(predicted: &[bool], actual: &[bool]) -> Result<Self, MetricError> {
        if predicted.len() != actual.len() {
            return Err(MetricError::LengthMismatch(predicted.len(), actual.len()));
        }
        let mut m = ConfusionMatrix::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => m.tp += 1,
                (true, false) => m.fp += 1,
                (false, false) => m.tn += 1,
                (false, true) => m.fn_ += 1,
            }
        }
        Ok(m)
    }

    /// Classifies `score >= cutoff` as positive.
    pub fn from_scores(scores: &[f64], actual: &[bool], cutoff: f64) -> Result<Self, MetricError> {
        let predicted: Vec<bool> = scores.iter().map(|&s| s >= cutoff).collect();
        Self::from_predictions(&predicted, actual)
    }

    /// The same outcome with classes and predictions both flipped.
    pub fn transposed(&self) -> Self {
        ConfusionMatrix {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }
}

/// Derived screening metrics; a ratio with a zero denominator is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub f1: Option<f64>,
    pub bacc: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl MetricSet {
    pub fn whm(&self, w: f64) -> Option<f64> {
        Some(whm(self.npv?, self.ppv?, w))
    }
}

pub fn metric_set(m: &ConfusionMatrix) -> Result<MetricSet, MetricError> {
    if m.total() == 0 {
        return Err(MetricError::EmptyConfusion);
    }
    let sensitivity = ratio(m.tp, m.tp + m.fn_);
    let specificity = ratio(m.tn, m.tn + m.fp);
    let ppv = ratio(m.tp, m.tp + m.fp);
    let npv = ratio(m.tn, m.tn + m.fn_);
    let f1 = match (ppv, sensitivity) {
        (Some(p), Some(s)) if p + s > 0.0 => Some(2.0 * p * s / (p + s)),
        _ => None,
    };
    let bacc = match (sensitivity, specificity) {
        (Some(a), Some(b)) => Some((a + b) / 2.0),
        _ => None,
    };
    Ok(MetricSet {
        sensitivity,
        specificity,
        ppv,
        npv,
        f1,
        bacc,
    })
}

/// Weighted harmonic mean of NPV and PPV with weight `w` on NPV. Zero when
/// either input is zero.
pub fn whm(npv: f64, ppv: f64, w: f64) -> f64 {
    if npv <= 0.0 || ppv <= 0.0 {
        return 0.0;
    }
    1.0 / (w / npv + (1.0 - w) / ppv)
}

/// Candidate cutoffs `lo, lo + step, ..., hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for CutoffGrid {
    fn default() -> Self {
        CutoffGrid {
            lo: 0.1,
            hi: 0.9,
            step: 0.01,
        }
    }
}

impl CutoffGrid {
    pub fn with_step(step: f64) -> Self {
        CutoffGrid {
            step,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<(), MetricError> {
        let ok = self.lo.is_finite()
            && self.hi.is_finite()
            && self.lo < self.hi
            && self.step > 0.0
            && (self.hi - self.lo) / self.step < 1e7;
        if ok {
            Ok(())
        } else {
            Err(MetricError::InvalidGrid {
                lo: self.lo,
                hi: self.hi,
                step: self.step,
            })
        }
    }

    /// Grid points. When `1/step` is an integer the points are computed as
    /// `k/(1/step)`, so that e.g. 0.21 is the nearest double to 0.21 rather
    /// than an accumulated sum.
    pub fn points(&self) -> Vec<f64> {
        let inv = 1.0 / self.step;
        if (inv - inv.round()).abs() < 1e-9 {
            let inv = inv.round();
            let first = (self.lo * inv - 1e-9).ceil() as i64;
            let last = (self.hi * inv + 1e-9).floor() as i64;
            (first..=last).map(|k| k as f64 / inv).collect()
        } else {
            let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as i64;
            (0..=n).map(|i| self.lo + i as f64 * self.step).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffResult {
    pub cutoff: f64,
    pub achieved_whm: f64,
    pub grid: f64,
    pub interval: [f64; 2],
}

/// Grid search for the cutoff maximising WHM(w). Positive iff
/// `score >= cutoff`; ties go to the lowest cutoff; cutoffs with undefined NPV
/// or PPV are skipped.
pub fn optimize_cutoff(
    scores: &[f64],
    labels: &[bool],
    w: f64,
    grid: &CutoffGrid,
) -> Result<CutoffResult, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    if !(0.0..=1.0).contains(&w) {
        return Err(MetricError::InvalidWeight(w));
    }
    grid.validate()?;
    if let Some(&s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(MetricError::ScoreOutOfRange(s));
    }

    let mut pos: Vec<f64> = Vec::new();
    let mut neg: Vec<f64> = Vec::new();
    for (&s, &l) in scores.iter().zip(labels) {
        if l {
            pos.push(s)
        } else {
            neg.push(s)
        }
    }
    // A single-class sample has no meaningful NPV/PPV trade-off.
    if pos.is_empty() || neg.is_empty() {
        return Err(MetricError::AllUndefined);
    }
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);

    let mut best: Option<(f64, f64)> = None;
    for c in grid.points() {
        let fn_ = pos.partition_point(|&s| s < c) as u64;
        let tn = neg.partition_point(|&s| s < c) as u64;
        let tp = pos.len() as u64 - fn_;
        let fp = neg.len() as u64 - tn;
        let (Some(npv), Some(ppv)) = (ratio(tn, tn + fn_), ratio(tp, tp + fp)) else {
            continue;
        };
        let value = whm(npv, ppv, w);
        if best.is_none_or(|(_, b)| value > b) {
            best = Some((c, value));
        }
    }
    let (cutoff, achieved_whm) = best.ok_or(MetricError::AllUndefined)?;
    Ok(CutoffResult {
        cutoff,
        achieved_whm,
        grid: grid.step,
        interval: [grid.lo, grid.hi],
    })
}

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Versioned evaluation document: confusion matrix plus derived metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub format_version: u32,
    pub tool_version: String,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricSet,
    pub weight: f64,
    pub whm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
}

impl EvaluationReport {
    pub fn new(confusion: ConfusionMatrix, weight: f64, cutoff: Option<f64>) -> Result<Self, MetricError> {
        let metrics = metric_set(&confusion)?;
        Ok(EvaluationReport {
            format_version: REPORT_FORMAT_VERSION,
            tool_version: crate::TOOL_VERSION.to_string(),
            confusion,
            whm: metrics.whm(weight),
            metrics,
            weight,
            cutoff,
            run_config: None,
        })
    }
}

fn fmt3(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.3}"))
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.confusion;
        writeln!(f, "                 actual +   actual -")?;
        writeln!(f, "predicted +  {:>11} {:>10}", c.tp, c.fp)?;
        writeln!(f, "predicted -  {:>11} {:>10}", c.fn_, c.tn)?;
        writeln!(f)?;
        let m = &self.metrics;
        writeln!(f, "Sensitivity  {}", fmt3(m.sensitivity))?;
        writeln!(f, "Specificity  {}", fmt3(m.specificity))?;
        writeln!(f, "PPV          {}", fmt3(m.ppv))?;
        writeln!(f, "NPV          {}", fmt3(m.npv))?;
        writeln!(f, "F1           {}", fmt3(m.f1))?;
        writeln!(f, "BAcc         {}", fmt3(m.bacc))?;
        write!(f, "WHM(w={})  {}", self.weight, fmt3(self.whm))?;
        if let Some(c) = self.cutoff {
            write!(f, "\ncutoff       {c}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r3(v: Option<f64>) -> f64 {
        (v.unwrap() * 1000.0).round() / 1000.0
    }

    #[test]
    fn reference_confusions() {
        let cases = [
            (ConfusionMatrix::new(161, 269, 124, 23), [0.875, 0.316, 0.374, 0.844]),
            (ConfusionMatrix::new(171, 322, 41, 4), [0.977, 0.113, 0.347, 0.911]),
            (ConfusionMatrix::new(5, 195, 211, 3), [0.625, 0.520, 0.025, 0.986]),
        ];
        for (m, want) in cases {
            let s = metric_set(&m).unwrap();
            assert_eq!([r3(s.sensitivity), r3(s.specificity), r3(s.ppv), r3(s.npv)], want);
        }
    }

    #[test]
    fn undefined_is_not_zero() {
        let s = metric_set(&ConfusionMatrix::new(0, 0, 5, 3)).unwrap();
        assert_eq!(s.ppv, None);
        assert_eq!(s.f1, None);
        assert_eq!(s.whm(0.5), None);
        assert_eq!(
            metric_set(&ConfusionMatrix::default()),
            Err(MetricError::EmptyConfusion)
        );
    }

    #[test]
    fn whm_examples() {
        assert!((whm(0.4, 0.4, 0.3) - 0.4).abs() < 1e-15);
        assert_eq!(whm(0.7, 0.2, 1.0), 0.7);
        assert!((whm(0.9111, 0.3469, 0.85) - 0.7324).abs() < 5e-4);
        assert_eq!(whm(0.0, 0.5, 0.5), 0.0);
    }

    #[test]
    fn grid_points_are_exact_decimals() {
        let pts = CutoffGrid::default().points();
        assert_eq!(pts.len(), 81);
        assert_eq!(pts[0], 0.1);
        assert_eq!(pts[11], 0.21);
        assert_eq!(pts[80], 0.9);
    }

    #[test]
    fn cutoff_examples() {
        let scores = [0.2, 0.2, 0.2, 0.8, 0.8];
        let labels = [false, false, false, true, true];
        let r = optimize_cutoff(&scores, &labels, 0.85, &CutoffGrid::default()).unwrap();
        assert_eq!(r.cutoff, 0.21);
        assert_eq!(r.achieved_whm, 1.0);

        let r = optimize_cutoff(&[1.0, 0.0], &[true, false], 0.3, &CutoffGrid::default()).unwrap();
        assert_eq!(r.achieved_whm, 1.0);

        assert_eq!(
            optimize_cutoff(&[0.3, 0.6], &[true, true], 0.5, &CutoffGrid::default()),
            Err(MetricError::AllUndefined)
        );
    }

    #[test]
    fn report_display_rounds_to_three_places() {
        let r = EvaluationReport::new(ConfusionMatrix::new(161, 269, 124, 23), 0.85, None).unwrap();
        let text = r.to_string();
        for v in ["0.875", "0.316", "0.374", "0.844"] {
            assert!(text.contains(v), "{text}");
        }
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"fn\":23"));
        let back: EvaluationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    proptest! {
        #[test]
        fn whm_between_inputs(npv in 1e-6f64..=1.0, ppv in 1e-6f64..=1.0, w in 0.0f64..=1.0) {
            let v = whm(npv, ppv, w);
            prop_assert!(v >= npv.min(ppv) * (1.0 - 1e-12));
            prop_assert!(v <= npv.max(ppv) * (1.0 + 1e-12));
        }

        #[test]
        fn whm_monotone(npv in 1e-3f64..0.9, ppv in 1e-3f64..0.9, d in 0.0f64..0.1, w in 0.0f64..=1.0) {
            let base = whm(npv, ppv, w);
            prop_assert!(whm(npv + d, ppv, w) >= base - 1e-15);
            prop_assert!(whm(npv, ppv + d, w) >= base - 1e-15);
        }

        #[test]
        fn transposition_swaps_metrics(tp in 0u64..50, fp in 0u64..50, tn in 0u64..50, fn_ in 0u64..50) {
            let m = ConfusionMatrix::new(tp, fp, tn, fn_);
            prop_assume!(m.total() > 0);
            let a = metric_set(&m).unwrap();
            let b = metric_set(&m.transposed()).unwrap();
            prop_assert_eq!(a.sensitivity, b.specificity);
            prop_assert_eq!(a.specificity, b.sensitivity);
            prop_assert_eq!(a.ppv, b.npv);
            prop_assert_eq!(a.npv, b.ppv);
        }
    }
}
