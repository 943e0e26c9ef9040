use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::irls::{fit_irls, IrlsFit, IrlsOptions};
use super::model::{LogisticModel, TrainingInfo};
use super::FitError;
use crate::data::{stratified_partition, Cohort};
use crate::features::Term;
use crate::metrics::{optimize_cutoff, ConfusionMatrix, CutoffGrid};
use crate::sigmoid;

/// Complete-case design over a list of terms: only records with a known label
/// and every term computable are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub terms: Vec<Term>,
    /// One column per term.
    pub columns: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
    /// Cohort positions of the kept records.
    pub rows: Vec<usize>,
}

impl DesignMatrix {
    pub fn complete_cases(c: &Cohort, terms: &[Term]) -> DesignMatrix {
        let mut columns = vec![Vec::new(); terms.len()];
        let mut labels = Vec::new();
        let mut rows = Vec::new();
        'records: for (i, r) in c.records.iter().enumerate() {
            let Some(label) = r.label() else { continue };
            let mut values = Vec::with_capacity(terms.len());
            for t in terms {
                match t.evaluate(&r.answers) {
                    Some(v) => values.push(v),
                    None => continue 'records,
                }
            }
            for (col, v) in columns.iter_mut().zip(values) {
                col.push(v);
            }
            labels.push(label);
            rows.push(i);
        }
        DesignMatrix {
            terms: terms.to_vec(),
            columns,
            labels,
            rows,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    /// Fits the model on `terms` (column indices) restricted to `rows`.
    pub fn fit(&self, terms: &[usize], rows: &[usize], opts: &IrlsOptions) -> Result<IrlsFit, FitError> {
        let names: Vec<String> = terms.iter().map(|&t| self.terms[t].name()).collect();
        let cols: Vec<Vec<f64>> = terms
            .iter()
            .map(|&t| rows.iter().map(|&r| self.columns[t][r]).collect())
            .collect();
        let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
        let y: Vec<bool> = rows.iter().map(|&r| self.labels[r]).collect();
        fit_irls(&names, &refs, &y, opts)
    }

    /// Predicted probabilities for `rows` under coefficients fitted on `terms`.
    pub fn scores(&self, terms: &[usize], coefficients: &[f64], rows: &[usize]) -> Vec<f64> {
        rows.iter()
            .map(|&r| {
                let eta = coefficients[0]
                    + terms
                        .iter()
                        .zip(&coefficients[1..])
                        .map(|(&t, b)| b * self.columns[t][r])
                        .sum::<f64>();
                sigmoid(eta)
            })
            .collect()
    }

    fn label_subset(&self, rows: &[usize]) -> Vec<bool> {
        rows.iter().map(|&r| self.labels[r]).collect()
    }

    /// Binary base-feature columns, used to balance random splits.
    fn balance_columns(&self) -> Vec<Vec<Option<bool>>> {
        self.terms
            .iter()
            .zip(&self.columns)
            .filter(|(t, _)| matches!(t, Term::Base(f) if f.is_binary()))
            .map(|(_, col)| col.iter().map(|&v| Some(v > 0.5)).collect())
            .collect()
    }
}

/// BIC approximation of the Bayes factor of the larger model over the smaller:
/// `exp((BIC_small - BIC_large) / 2)` with `BIC = -2 ll + k ln n`.
pub fn bayes_factor(ll_small: f64, k_small: usize, ll_large: f64, k_large: usize, n: usize) -> Result<f64, FitError> {
    if n < 2 {
        return Err(FitError::TooFewRows {
            rows: n,
            params: k_large,
        });
    }
    if k_large <= k_small {
        return Err(FitError::Shape(format!(
            "models not nested: k_small={k_small}, k_large={k_large}"
        )));
    }
    let ln_n = (n as f64).ln();
    let bic_small = -2.0 * ll_small + k_small as f64 * ln_n;
    let bic_large = -2.0 * ll_large + k_large as f64 * ln_n;
    Ok(((bic_small - bic_large) / 2.0).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub term: String,
    pub bayes_factor: f64,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Indices into the design's terms, in order of addition.
    pub selected: Vec<usize>,
    pub steps: Vec<SelectionStep>,
}

/// Greedy forward selection: at each step the candidate with the largest Bayes
/// factor against the current model is added while that factor is at least 1.
/// Equal factors go to the earlier candidate; candidates whose fit fails are
/// skipped for that step.
pub fn forward_select_bf(
    design: &DesignMatrix,
    candidates: &[usize],
    rows: &[usize],
    opts: &IrlsOptions,
) -> Result<Selection, FitError> {
    let n = rows.len();
    let mut current = design.fit(&[], rows, opts)?;
    let mut selected: Vec<usize> = Vec::new();
    let mut steps = Vec::new();
    loop {
        let mut best: Option<(usize, f64, IrlsFit)> = None;
        for &c in candidates.iter().filter(|c| !selected.contains(c)) {
            let mut trial = selected.clone();
            trial.push(c);
            let Ok(fit) = design.fit(&trial, rows, opts) else {
                continue;
            };
            let bf = bayes_factor(
                current.log_likelihood,
                selected.len() + 1,
                fit.log_likelihood,
                trial.len() + 1,
                n,
            )?;
            if best.as_ref().is_none_or(|b| bf > b.1) {
                best = Some((c, bf, fit));
            }
        }
        match best {
            Some((c, bf, fit)) if bf >= 1.0 => {
                steps.push(SelectionStep {
                    term: design.terms[c].name(),
                    bayes_factor: bf,
                    log_likelihood: fit.log_likelihood,
                });
                selected.push(c);
                current = fit;
            }
            _ => break,
        }
    }
    Ok(Selection { selected, steps })
}

/// Fits on `train`, tunes the cutoff on the training predictions and returns
/// `(cutoff, validation WHM)`. An untunable cutoff (e.g. an intercept-only
/// model) or an undefined validation WHM gives `None`.
fn split_score(
    design: &DesignMatrix,
    terms: &[usize],
    train: &[usize],
    valid: &[usize],
    w: f64,
    grid: &CutoffGrid,
    opts: &IrlsOptions,
) -> Result<(Option<f64>, Option<f64>), FitError> {
    let fit = design.fit(terms, train, opts)?;
    let tr_scores = design.scores(terms, &fit.coefficients, train);
    let Ok(cut) = optimize_cutoff(&tr_scores, &design.label_subset(train), w, grid) else {
        return Ok((None, None));
    };
    let va_scores = design.scores(terms, &fit.coefficients, valid);
    let m = ConfusionMatrix::from_scores(&va_scores, &design.label_subset(valid), cut.cutoff).expect("equal lengths");
    let whm = crate::metrics::metric_set(&m).ok().and_then(|s| s.whm(w));
    Ok((Some(cut.cutoff), whm))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrcvOptions {
    pub repeats: usize,
    pub weight: f64,
    pub ratio: f64,
    pub seed: u64,
    pub grid: CutoffGrid,
    pub max_tries: usize,
    pub irls: IrlsOptions,
}

impl Default for MrcvOptions {
    fn default() -> Self {
        MrcvOptions {
            repeats: 100,
            weight: 0.85,
            ratio: 0.5,
            seed: 0,
            grid: CutoffGrid::default(),
            max_tries: 20,
            irls: IrlsOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatOutcome {
    pub repeat: usize,
    pub seed: u64,
    pub selected: Vec<String>,
    pub cutoff: Option<f64>,
    pub validation_whm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTerm {
    pub term: Term,
    pub frequency: usize,
    /// Mean validation WHM over repeats that selected the term (undefined
    /// counted as 0).
    pub mean_whm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrcvReport {
    pub repeats: usize,
    pub outcomes: Vec<RepeatOutcome>,
    pub ranking: Vec<RankedTerm>,
    pub failures: usize,
}

/// Largest tolerated share of failed repeats.
pub const MAX_FAILURE_RATE: f64 = 0.2;

/// Multiple random cross-validation: per repeat a stratified split, forward
/// selection on the training half, cutoff tuning on the training half and WHM
/// on the validation half. Terms are ranked by selection frequency, then mean
/// validation WHM, then candidate order.
pub fn mrcv_rank(design: &DesignMatrix, opts: &MrcvOptions) -> Result<MrcvReport, FitError> {
    if design.is_empty() {
        return Err(FitError::NoData);
    }
    if opts.repeats == 0 {
        return Err(FitError::Shape("repeats must be positive".into()));
    }
    let balance = design.balance_columns();
    let candidates: Vec<usize> = (0..design.terms.len()).collect();
    let outcomes: Vec<(RepeatOutcome, Vec<usize>)> = (0..opts.repeats)
        .into_par_iter()
        .map(|repeat| {
            let seed = opts.seed.wrapping_add(repeat as u64);
            let run = || -> Result<(Vec<usize>, Option<f64>, Option<f64>), FitError> {
                let p = stratified_partition(&design.labels, &balance, opts.ratio, opts.max_tries, seed)?;
                let sel = forward_select_bf(design, &candidates, &p.a, &opts.irls)?;
                let (cutoff, whm) =
                    split_score(design, &sel.selected, &p.a, &p.b, opts.weight, &opts.grid, &opts.irls)?;
                Ok((sel.selected, cutoff, whm))
            };
            match run() {
                Ok((selected, cutoff, validation_whm)) => (
                    RepeatOutcome {
                        repeat,
                        seed,
                        selected: selected.iter().map(|&t| design.terms[t].name()).collect(),
                        cutoff,
                        validation_whm,
                        error: None,
                    },
                    selected,
                ),
                Err(e) => (
                    RepeatOutcome {
                        repeat,
                        seed,
                        selected: Vec::new(),
                        cutoff: None,
                        validation_whm: None,
                        error: Some(e.to_string()),
                    },
                    Vec::new(),
                ),
            }
        })
        .collect();

    let failures = outcomes.iter().filter(|(o, _)| o.error.is_some()).count();
    if failures as f64 > MAX_FAILURE_RATE * opts.repeats as f64 {
        return Err(FitError::TooManyFailures {
            failed: failures,
            total: opts.repeats,
        });
    }

    let k = design.terms.len();
    let mut freq = vec![0usize; k];
    let mut whm_sum = vec![0.0; k];
    for (o, sel) in &outcomes {
        for &t in sel {
            freq[t] += 1;
            whm_sum[t] += o.validation_whm.unwrap_or(0.0);
        }
    }
    let mut order: Vec<usize> = (0..k).filter(|&t| freq[t] > 0).collect();
    let mean = |t: usize| whm_sum[t] / freq[t] as f64;
    order.sort_by(|&a, &b| freq[b].cmp(&freq[a]).then(mean(b).total_cmp(&mean(a))).then(a.cmp(&b)));
    Ok(MrcvReport {
        repeats: opts.repeats,
        outcomes: outcomes.into_iter().map(|(o, _)| o).collect(),
        ranking: order
            .into_iter()
            .map(|t| RankedTerm {
                term: design.terms[t],
                frequency: freq[t],
                mean_whm: mean(t),
            })
            .collect(),
        failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrefixScore {
    pub terms: usize,
    pub mean_validation_whm: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalizeReport {
    pub prefixes: Vec<PrefixScore>,
    pub chosen: usize,
}

/// Chooses how many leading terms of `ranking` to keep by mean validation WHM
/// over `opts.repeats` random splits (ties to the shorter prefix), refits on
/// all complete cases and tunes the cutoff on them.
pub fn finalize(c: &Cohort, ranking: &[Term], opts: &MrcvOptions) -> Result<(LogisticModel, FinalizeReport), FitError> {
    if ranking.is_empty() {
        return Err(FitError::Shape("ranking is empty".into()));
    }
    let design = DesignMatrix::complete_cases(c, ranking);
    if design.is_empty() {
        return Err(FitError::NoData);
    }
    let balance = design.balance_columns();
    let partitions = (0..opts.repeats)
        .map(|s| {
            stratified_partition(
                &design.labels,
                &balance,
                opts.ratio,
                opts.max_tries,
                opts.seed.wrapping_add(s as u64),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut prefixes = Vec::with_capacity(ranking.len());
    for len in 1..=ranking.len() {
        let terms: Vec<usize> = (0..len).collect();
        let results: Vec<Option<f64>> = partitions
            .par_iter()
            .map(|p| {
                split_score(&design, &terms, &p.a, &p.b, opts.weight, &opts.grid, &opts.irls)
                    .ok()
                    .map(|(_, whm)| whm.unwrap_or(0.0))
            })
            .collect();
        let failures = results.iter().filter(|r| r.is_none()).count();
        let mean = results.iter().map(|r| r.unwrap_or(0.0)).sum::<f64>() / opts.repeats.max(1) as f64;
        prefixes.push(PrefixScore {
            terms: len,
            mean_validation_whm: mean,
            failures,
        });
    }
    let eligible = |p: &&PrefixScore| p.failures as f64 <= MAX_FAILURE_RATE * opts.repeats as f64;
    let mut chosen: Option<&PrefixScore> = None;
    for p in prefixes.iter().filter(eligible) {
        if chosen.is_none_or(|c| p.mean_validation_whm > c.mean_validation_whm) {
            chosen = Some(p);
        }
    }
    let chosen = chosen
        .ok_or(FitError::TooManyFailures {
            failed: prefixes.iter().map(|p| p.failures).min().unwrap_or(0),
            total: opts.repeats,
        })?
        .terms;

    let terms: Vec<usize> = (0..chosen).collect();
    let all: Vec<usize> = (0..design.len()).collect();
    let fit = design.fit(&terms, &all, &opts.irls)?;
    let scores = design.scores(&terms, &fit.coefficients, &all);
    let cut = optimize_cutoff(&scores, &design.labels, opts.weight, &opts.grid)?;
    let model = LogisticModel {
        terms: ranking[..chosen].to_vec(),
        coefficients: fit.coefficients.clone(),
        cutoff: cut.cutoff,
        statistics: fit.records.clone(),
        training: Some(TrainingInfo {
            n: design.len(),
            seed: opts.seed,
            weight: opts.weight,
            log_likelihood: fit.log_likelihood,
            training_whm: Some(cut.achieved_whm),
        }),
    };
    Ok((model, FinalizeReport { prefixes, chosen }))
}
