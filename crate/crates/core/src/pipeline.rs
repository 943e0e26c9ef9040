//! End-to-end training flows for both classifiers and their surrogate trees.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Cohort, Feature};
use crate::features::{effect_size, filter_small_effect, interaction_terms, EffectSize, InteractionOp, Term};
use crate::gbdt::{
    fit_boosted, stability_rank, tune_hyperparams, wrapper_select, BoostError, BoostedEnsemble, Dataset, EvalOptions,
    StabilityOptions, StabilityReport, TuneOptions, TuningReport, WrapperState,
};
use crate::logreg::{
    finalize, mrcv_rank, DesignMatrix, FinalizeReport, FitError, LogisticModel, MrcvOptions, MrcvReport,
};
use crate::metrics::{optimize_cutoff, CutoffGrid};
use crate::model::{ScreeningModel, TrainedModel};
use crate::prep::impute_contact;
use crate::surrogate::{fidelity, fit_surrogate_terms, CartParams, CartTree, SurrogateError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no records with a known test result")]
    NoLabels,
    #[error("no feature passed the effect-size screen")]
    NoFeatures,
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Boost(#[from] BoostError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub seed: u64,
    pub weight: f64,
    pub repeats: usize,
    pub v_min: f64,
    pub r_min: f64,
    /// Largest number of screened base features fed to selection.
    pub max_features: usize,
    pub grid: CutoffGrid,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            seed: 0,
            weight: 0.85,
            repeats: 100,
            v_min: 0.1,
            r_min: 0.1,
            max_features: 5,
            grid: CutoffGrid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticTraining {
    pub model: LogisticModel,
    pub effect_sizes: Vec<EffectSize>,
    pub base_features: Vec<Feature>,
    pub candidates: Vec<Term>,
    pub complete_cases: usize,
    pub mrcv: MrcvReport,
    pub finalize: FinalizeReport,
}

/// Effect sizes of every base feature with a defined association.
pub fn screen_effects(c: &Cohort) -> Vec<EffectSize> {
    let labelled: Vec<_> = c
        .records
        .iter()
        .filter_map(|r| r.label().map(|l| (&r.answers, l)))
        .collect();
    let answers: Vec<_> = labelled.iter().map(|p| p.0).collect();
    let labels: Vec<bool> = labelled.iter().map(|p| p.1).collect();
    Feature::ALL
        .iter()
        .filter_map(|&f| effect_size(f, &answers, &labels).ok())
        .collect()
}

/// Screens base features by effect size, builds the AND-interaction pool,
/// ranks terms by repeated random cross-validation and keeps the best ranking
/// prefix.
pub fn train_logistic(c: &Cohort, cfg: &LogisticConfig) -> Result<LogisticTraining, PipelineError> {
    let c = impute_contact(c);
    if c.records.iter().all(|r| r.label().is_none()) {
        return Err(PipelineError::NoLabels);
    }
    let effect_sizes = screen_effects(&c);
    let kept = filter_small_effect(&effect_sizes, cfg.v_min, cfg.r_min);
    let mut ranked: Vec<&EffectSize> = effect_sizes.iter().filter(|e| kept.contains(&e.feature)).collect();
    ranked.sort_by(|a, b| b.value.abs().total_cmp(&a.value.abs()));
    let mut base: Vec<Feature> = ranked
        .iter()
        .take(cfg.max_features)
        .map(|e| e.feature.parse().expect("feature names round-trip"))
        .collect();
    base.sort();
    if base.is_empty() {
        return Err(PipelineError::NoFeatures);
    }
    let mut candidates: Vec<Term> = base.iter().map(|&f| Term::Base(f)).collect();
    candidates.extend(interaction_terms(&base, InteractionOp::And));

    let design = DesignMatrix::complete_cases(&c, &candidates);
    let opts = MrcvOptions {
        repeats: cfg.repeats,
        weight: cfg.weight,
        seed: cfg.seed,
        grid: cfg.grid,
        ..MrcvOptions::default()
    };
    let mrcv = mrcv_rank(&design, &opts)?;
    let ranking: Vec<Term> = mrcv.ranking.iter().map(|r| r.term).collect();
    if ranking.is_empty() {
        return Err(PipelineError::Fit(FitError::Shape("no term was ever selected".into())));
    }
    let (model, finalize) = finalize(&c, &ranking, &opts)?;
    Ok(LogisticTraining {
        model,
        effect_sizes,
        base_features: base,
        candidates,
        complete_cases: design.len(),
        mrcv,
        finalize,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub seed: u64,
    pub weight: f64,
    pub stability: StabilityOptions,
    pub eval: EvalOptions,
    pub tune: TuneOptions,
    /// Base features withheld from this path.
    pub excluded: Vec<Feature>,
    pub grid: CutoffGrid,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            seed: 0,
            weight: 0.7,
            stability: StabilityOptions::default(),
            eval: EvalOptions::default(),
            tune: TuneOptions::default(),
            excluded: vec![Feature::MaxTemp, Feature::Temperature],
            grid: CutoffGrid::default(),
        }
    }
}

impl BoostConfig {
    /// Applies one seed, weight and grid to every stage.
    pub fn seeded(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.stability.seed = seed;
        self.eval.seed = seed;
        self.tune.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostTraining {
    pub model: BoostedEnsemble,
    pub stability: StabilityReport,
    pub candidates: Vec<Term>,
    pub wrapper: WrapperState,
    pub tuning: TuningReport,
}

/// The wrapper's candidate list: stability-ranked inputs followed by OR
/// interactions of their binary members (pairs in ranking order).
pub fn wrapper_candidates(ranked: &[Term]) -> Vec<Term> {
    let mut out = ranked.to_vec();
    let binary: Vec<Feature> = ranked
        .iter()
        .filter_map(|t| match t {
            Term::Base(f) if f.is_binary() => Some(*f),
            _ => None,
        })
        .collect();
    for i in 0..binary.len() {
        for j in i + 1..binary.len() {
            if let Ok(t) = Term::interaction(InteractionOp::Or, binary[i], binary[j]) {
                out.push(t);
            }
        }
    }
    out
}

/// Stability ranking, OR-interaction expansion, wrapper selection, F1 tuning
/// and a final fit on all labelled records.
pub fn train_boosted(c: &Cohort, cfg: &BoostConfig) -> Result<BoostTraining, PipelineError> {
    let c = impute_contact(c);
    let mut inputs: Vec<Term> = Feature::ALL
        .iter()
        .filter(|f| !cfg.excluded.contains(f))
        .map(|&f| Term::Base(f))
        .collect();
    inputs.push(Term::SumOfSymptoms);
    let data = Dataset::from_cohort(&c, &inputs);
    if data.is_empty() {
        return Err(PipelineError::NoLabels);
    }
    let stability = stability_rank(&data, &cfg.stability)?;
    let ranked: Vec<Term> = stability.ranking.iter().map(|e| inputs[e.feature]).collect();
    let candidates = wrapper_candidates(&ranked);
    let cand_data = Dataset::from_cohort(&c, &candidates);
    let order: Vec<usize> = (0..candidates.len()).collect();
    let wrapper = wrapper_select(&cand_data, &order, &cfg.eval)?;

    let chosen = cand_data.select_features(&wrapper.selected);
    let tuning = tune_hyperparams(&chosen, &cfg.tune)?;
    let booster = fit_boosted(&chosen, &tuning.best, cfg.seed)?;
    let cut = optimize_cutoff(&booster.predict_dataset(&chosen), &chosen.labels, cfg.weight, &cfg.grid)?;
    Ok(BoostTraining {
        model: BoostedEnsemble {
            features: chosen.features.clone(),
            booster,
            cutoff: cut.cutoff,
            params: Some(tuning.best),
        },
        stability,
        candidates,
        wrapper,
        tuning,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateFit {
    pub tree: CartTree,
    pub fidelity: f64,
    /// Records the model could score (and the surrogate was fitted on).
    pub records: usize,
}

/// Fits a surrogate tree over `terms` (base features by default) to the
/// model's decisions on every record the model can score.
pub fn fit_model_surrogate(
    model: &TrainedModel,
    c: &Cohort,
    terms: &[Term],
    params: &CartParams,
) -> Result<SurrogateFit, PipelineError> {
    let mut columns = vec![Vec::new(); terms.len()];
    let mut decisions = Vec::new();
    for r in &c.records {
        let Ok(p) = model.predict(&r.answers) else { continue };
        decisions.push(p.positive);
        for (col, t) in columns.iter_mut().zip(terms) {
            col.push(t.evaluate(&r.answers).unwrap_or(f64::NAN));
        }
    }
    let tree = fit_surrogate_terms(terms, &columns, &decisions, params)?;
    let fidelity = fidelity(&tree, &columns, &decisions)?;
    Ok(SurrogateFit {
        tree,
        fidelity,
        records: decisions.len(),
    })
}

/// The sixteen base features as terms.
pub fn base_terms() -> Vec<Term> {
    Feature::ALL.iter().map(|&f| Term::Base(f)).collect()
}
