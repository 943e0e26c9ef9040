use std::fmt::Write as _;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use decode_core::data::{
    filter_symptomatic, parse_cohort, serialize_cohort, split_holdout, synthesize_cohort, SynthSpec,
};
use decode_core::gbdt::{EvalOptions, StabilityOptions, TuneOptions};
use decode_core::metrics::{CutoffGrid, EvaluationReport};
use decode_core::pipeline::{
    base_terms, fit_model_surrogate, train_boosted, train_logistic, BoostConfig, LogisticConfig, PipelineError,
};
use decode_core::prep::prune_by_missingness;
use decode_core::surrogate::{extract_rules, render_tree, CartParams, RenderFormat};
use decode_core::{Cohort, ConfusionMatrix, ModelFile, ScreeningModel, TrainedModel};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{check_parent, CliError, Result, RunConfig};

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn read_text(p: &Path) -> Result<String> {
    fs::read_to_string(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
}

fn write_text(p: &Path, text: &str) -> Result<()> {
    fs::write(p, text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
}

fn write_json(p: &Path, v: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v).expect("artifact serializes");
    text.push('\n');
    write_text(p, &text)
}

fn load_cohort(p: &Path, strict: bool) -> Result<Cohort> {
    let parsed = parse_cohort(&read_text(p)?, strict).map_err(data_err)?;
    if !parsed.dropped.is_empty() {
        eprintln!(
            "warning: {} malformed rows dropped from {}",
            parsed.dropped.len(),
            p.display()
        );
    }
    Ok(parsed.cohort)
}

fn load_model(p: &Path) -> Result<ModelFile> {
    ModelFile::from_json(&read_text(p)?).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
}

fn provenance(cfg: &RunConfig, source: &str) -> String {
    json!({ "tool_version": cfg.tool_version, "run_config": cfg, "source": source }).to_string()
}

fn training_err(e: PipelineError) -> CliError {
    match e {
        PipelineError::NoLabels => CliError::Data(e.to_string()),
        e => CliError::Training(e.to_string()),
    }
}

/// Which symptomatic records a command works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Holdout,
    All,
}

fn select(c: &Cohort, p: Partition) -> Cohort {
    let (sick, _) = filter_symptomatic(c);
    match p {
        Partition::Train => split_holdout(&sick).0,
        Partition::Holdout => split_holdout(&sick).1,
        Partition::All => sick,
    }
}

fn report_path(explicit: &Option<PathBuf>, output: &Path, ext: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| output.with_extension(ext))
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Seed; overrides the seed of `--spec`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: PathBuf,
    /// JSON synthesis spec; the reference spec is used when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg = RunConfig::new("synth");
    cfg.output = Some(a.output.clone());
    cfg.input = a.spec.clone();
    cfg.validate()?;
    let mut spec = match &a.spec {
        Some(p) => serde_json::from_str::<SynthSpec>(&read_text(p)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        None => SynthSpec::reference(a.seed.unwrap_or(0)),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    cfg.seed = Some(spec.seed);
    let cfg = cfg.with("spec", &spec);
    let mut cohort = synthesize_cohort(&spec).map_err(data_err)?;
    cohort.provenance = provenance(&cfg, &cohort.provenance);
    write_text(&a.output, &serialize_cohort(&cohort))?;

    let positives = cohort.records.iter().filter(|r| r.label() == Some(true)).count();
    let symptomatic = cohort.records.iter().filter(|r| r.symptomatic).count();
    let holdout = cohort.records.iter().filter(|r| r.holdout_flag).count();
    println!("seed={}", spec.seed);
    println!("records={}", cohort.len());
    println!("positives={positives}");
    println!("symptomatic={symptomatic}");
    println!("holdout={holdout}");
    println!("output={}", a.output.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct PrepArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Cleaned cohort CSV.
    #[arg(long)]
    pub output: PathBuf,
    /// Prune report (JSON); a plain-text copy is written next to it.
    /// Defaults to the output path with a `.prune.json` extension.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub clusters_patients: usize,
    #[arg(long, default_value_t = 2)]
    pub clusters_features: usize,
    /// Fail on the first malformed row instead of dropping it.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Serialize)]
struct PrepReport {
    tool_version: &'static str,
    run_config: Value,
    input_records: usize,
    dropped_rows: Vec<decode_core::data::DroppedRow>,
    symptomatic: decode_core::data::SubsetCounts,
    /// 0-based positions among the parsed input records.
    removed_records: Vec<usize>,
    removed_features: Vec<decode_core::Feature>,
    patient_cluster_missingness: Vec<f64>,
    feature_cluster_missingness: Vec<f64>,
    retained_records: usize,
    warnings: Vec<String>,
}

impl PrepReport {
    fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# decode {} prep", self.tool_version);
        let _ = writeln!(s, "input records:        {}", self.input_records);
        let _ = writeln!(s, "malformed rows:       {}", self.dropped_rows.len());
        let _ = writeln!(s, "non-symptomatic:      {}", self.symptomatic.removed);
        let _ = writeln!(s, "removed by pruning:   {}", self.removed_records.len());
        let _ = writeln!(s, "retained records:     {}", self.retained_records);
        let ids: Vec<String> = self.removed_records.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(s, "removed record ids:   {}", ids.join(" "));
        let names: Vec<&str> = self.removed_features.iter().map(|f| f.name()).collect();
        let _ = writeln!(s, "removed features:     {}", names.join(" "));
        let fmt = |v: &[f64]| v.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "patient clusters:     {}", fmt(&self.patient_cluster_missingness));
        let _ = writeln!(s, "feature clusters:     {}", fmt(&self.feature_cluster_missingness));
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}

pub fn prep(a: PrepArgs) -> Result<()> {
    let mut cfg = RunConfig::new("prep");
    cfg.input = Some(a.input.clone());
    cfg.output = Some(a.output.clone());
    cfg.clusters_patients = Some(a.clusters_patients);
    cfg.clusters_features = Some(a.clusters_features);
    let report = report_path(&a.report, &a.output, "prune.json");
    check_parent(&report)?;
    let cfg = cfg.with("report", &report).with("strict", a.strict);
    cfg.validate()?;

    let parsed = parse_cohort(&read_text(&a.input)?, a.strict).map_err(data_err)?;
    let cohort = parsed.cohort;
    let sick_ids: Vec<usize> = (0..cohort.len()).filter(|&i| cohort.records[i].symptomatic).collect();
    let (sick, counts) = filter_symptomatic(&cohort);
    let (mut pruned, pr) = prune_by_missingness(&sick, a.clusters_patients, a.clusters_features).map_err(data_err)?;
    pruned.provenance = provenance(&cfg, &cohort.provenance);
    write_text(&a.output, &serialize_cohort(&pruned))?;

    let r = PrepReport {
        tool_version: cfg.tool_version,
        run_config: cfg.to_value(),
        input_records: cohort.len(),
        dropped_rows: parsed.dropped,
        symptomatic: counts,
        removed_records: pr.removed_patients.iter().map(|&i| sick_ids[i]).collect(),
        removed_features: pr.removed_features,
        patient_cluster_missingness: pr.patient_cluster_missingness,
        feature_cluster_missingness: pr.feature_cluster_missingness,
        retained_records: pruned.len(),
        warnings: pr.warnings,
    };
    write_json(&report, &r)?;
    let text = r.text();
    write_text(&report.with_extension("txt"), &text)?;
    print!("{text}");
    println!("retained={}", r.retained_records);
    println!("removed_records={}", r.removed_records.len());
    println!("removed_features={}", r.removed_features.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainLogregArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Model file.
    #[arg(long)]
    pub output: PathBuf,
    /// Selection report; defaults to the output path with `.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.85)]
    pub weight: f64,
    #[arg(long, default_value_t = 100)]
    pub repeats: usize,
    #[arg(long, default_value_t = 5)]
    pub max_features: usize,
    #[arg(long, default_value_t = 0.01)]
    pub grid_step: f64,
    #[arg(long, value_enum, default_value_t = Partition::Train)]
    pub partition: Partition,
}

pub fn train_logreg(a: TrainLogregArgs) -> Result<()> {
    let mut cfg = RunConfig::new("train-logreg");
    cfg.input = Some(a.input.clone());
    cfg.output = Some(a.output.clone());
    cfg.seed = Some(a.seed);
    cfg.weight = Some(a.weight);
    cfg.repeats = Some(a.repeats);
    cfg.grid_step = Some(a.grid_step);
    let report = report_path(&a.report, &a.output, "report.json");
    check_parent(&report)?;
    let cfg = cfg
        .with("report", &report)
        .with("max_features", a.max_features)
        .with("partition", a.partition);
    cfg.validate()?;
    println!("seed={}", a.seed);

    let cohort = select(&load_cohort(&a.input, false)?, a.partition);
    let lc = LogisticConfig {
        seed: a.seed,
        weight: a.weight,
        repeats: a.repeats,
        max_features: a.max_features,
        grid: CutoffGrid::with_step(a.grid_step),
        ..LogisticConfig::default()
    };
    let t = train_logistic(&cohort, &lc).map_err(training_err)?;
    let file = ModelFile::new(TrainedModel::Logistic(t.model.clone()), cfg.to_value());
    write_text(&a.output, &file.to_json())?;
    write_json(
        &report,
        &json!({ "tool_version": cfg.tool_version, "run_config": cfg, "training": t }),
    )?;

    let m = &t.model;
    println!("{:<48} {:>10}", "term", "estimate");
    println!("{:<48} {:>10.4}", "(intercept)", m.intercept());
    for (term, c) in m.terms.iter().zip(&m.coefficients[1..]) {
        println!("{:<48} {:>10.4}", term.name(), c);
    }
    println!("records={}", cohort.len());
    println!("complete_cases={}", t.complete_cases);
    println!("terms={}", m.terms.len());
    println!("cutoff={}", m.cutoff);
    println!("output={}", a.output.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainGbdtArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Model file.
    #[arg(long)]
    pub output: PathBuf,
    /// Selection history; defaults to the output path with `.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.7)]
    pub weight: f64,
    /// Train/validation repeats per wrapper evaluation.
    #[arg(long, default_value_t = 100)]
    pub repeats: usize,
    /// Random row/column draws for the stability ranking.
    #[arg(long, default_value_t = 100)]
    pub draws: usize,
    /// Cross-validation repeats inside each stability draw.
    #[arg(long, default_value_t = 10)]
    pub cv_repeats: usize,
    /// Hyperparameter configurations tried by the random search.
    #[arg(long, default_value_t = 100)]
    pub budget: usize,
    #[arg(long, default_value_t = 0.01)]
    pub grid_step: f64,
    #[arg(long, value_enum, default_value_t = Partition::Train)]
    pub partition: Partition,
}

pub fn train_gbdt(a: TrainGbdtArgs) -> Result<()> {
    let mut cfg = RunConfig::new("train-gbdt");
    cfg.input = Some(a.input.clone());
    cfg.output = Some(a.output.clone());
    cfg.seed = Some(a.seed);
    cfg.weight = Some(a.weight);
    cfg.repeats = Some(a.repeats);
    cfg.budget = Some(a.budget);
    cfg.grid_step = Some(a.grid_step);
    let report = report_path(&a.report, &a.output, "report.json");
    check_parent(&report)?;
    let cfg = cfg
        .with("report", &report)
        .with("draws", a.draws)
        .with("cv_repeats", a.cv_repeats)
        .with("partition", a.partition);
    cfg.validate()?;
    if a.draws == 0 || a.cv_repeats == 0 {
        return Err(CliError::Usage("--draws and --cv-repeats must be at least 1".into()));
    }
    println!("seed={}", a.seed);

    let cohort = select(&load_cohort(&a.input, false)?, a.partition);
    let grid = CutoffGrid::with_step(a.grid_step);
    let bc = BoostConfig {
        weight: a.weight,
        stability: StabilityOptions {
            draws: a.draws,
            cv_repeats: a.cv_repeats,
            ..Default::default()
        },
        eval: EvalOptions {
            repeats: a.repeats,
            weight: a.weight,
            grid,
            ..Default::default()
        },
        tune: TuneOptions {
            budget: a.budget,
            weight: a.weight,
            grid,
            ..Default::default()
        },
        grid,
        ..BoostConfig::default()
    }
    .seeded(a.seed);
    let t = train_boosted(&cohort, &bc).map_err(training_err)?;
    let file = ModelFile::new(TrainedModel::Gbdt(t.model.clone()), cfg.to_value());
    write_text(&a.output, &file.to_json())?;
    write_json(
        &report,
        &json!({ "tool_version": cfg.tool_version, "run_config": cfg, "training": t }),
    )?;

    println!("stability ranking:");
    for e in &t.stability.ranking {
        println!("  {:<40} mean position {:.2}", e.name, e.mean_position);
    }
    println!("wrapper history:");
    for s in &t.wrapper.history {
        println!(
            "  {:<6} {:<48} tr {:.4}  ts {:.4}",
            format!("{:?}", s.action).to_lowercase(),
            s.feature,
            s.tr,
            s.ts
        );
    }
    let names: Vec<String> = t.model.features.iter().map(|f| f.name()).collect();
    println!("records={}", cohort.len());
    println!("features={}", names.join(";"));
    println!("best_trial={}", t.tuning.best_index);
    println!("cutoff={}", t.model.cutoff);
    println!("output={}", a.output.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, required_unless_present = "confusion")]
    pub model: Option<PathBuf>,
    #[arg(long, required_unless_present = "confusion")]
    pub input: Option<PathBuf>,
    /// Evaluate a given outcome instead of scoring a cohort, e.g.
    /// `tp=161,fn=23,tn=124,fp=269`.
    #[arg(long, conflicts_with_all = ["model", "input"])]
    pub confusion: Option<String>,
    /// WHM weight; defaults to 0.85 for logistic models and 0.7 for boosted ones.
    #[arg(long)]
    pub weight: Option<f64>,
    #[arg(long, value_enum, default_value_t = Partition::Holdout)]
    pub partition: Partition,
    /// Metric report (JSON).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Serialize)]
struct RecordCounts {
    scored: usize,
    /// Labelled records the model cannot score (missing inputs).
    insufficient: usize,
    unlabelled: usize,
}

#[derive(Debug, Serialize)]
struct EvaluationArtifact {
    #[serde(flatten)]
    report: EvaluationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    records: Option<RecordCounts>,
}

pub fn parse_confusion(s: &str) -> Result<ConfusionMatrix> {
    let mut cells = [None; 4];
    for part in s.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected key=value in --confusion, got `{part}`")))?;
        let slot = match k.trim() {
            "tp" => 0,
            "fp" => 1,
            "tn" => 2,
            "fn" => 3,
            other => return Err(CliError::Usage(format!("unknown confusion cell `{other}`"))),
        };
        let v: u64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("`{}` is not a count", v.trim())))?;
        if cells[slot].replace(v).is_some() {
            return Err(CliError::Usage(format!("confusion cell `{}` given twice", k.trim())));
        }
    }
    match cells {
        [Some(tp), Some(fp), Some(tn), Some(fn_)] => Ok(ConfusionMatrix::new(tp, fp, tn, fn_)),
        _ => Err(CliError::Usage("--confusion needs tp, fp, tn and fn".into())),
    }
}

fn fmt_kv(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |v| v.to_string())
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut cfg = RunConfig::new("evaluate");
    cfg.input = a.input.clone();
    cfg.model = a.model.clone();
    cfg.output = a.output.clone();
    cfg.weight = a.weight;
    let cfg = cfg.with("partition", a.partition).with("confusion", &a.confusion);
    cfg.validate()?;

    let (confusion, weight, cutoff, records) = match &a.confusion {
        Some(s) => (parse_confusion(s)?, a.weight.unwrap_or(0.85), None, None),
        None => {
            let (Some(mp), Some(ip)) = (&a.model, &a.input) else {
                return Err(CliError::Usage(
                    "--model and --input are required without --confusion".into(),
                ));
            };
            let file = load_model(mp)?;
            let cohort = select(&load_cohort(ip, false)?, a.partition);
            let (mut predicted, mut actual) = (Vec::new(), Vec::new());
            let mut counts = RecordCounts {
                scored: 0,
                insufficient: 0,
                unlabelled: 0,
            };
            for r in &cohort.records {
                let Some(label) = r.label() else {
                    counts.unlabelled += 1;
                    continue;
                };
                match file.model.predict(&r.answers) {
                    Ok(p) => {
                        predicted.push(p.positive);
                        actual.push(label);
                        counts.scored += 1;
                    }
                    Err(_) => counts.insufficient += 1,
                }
            }
            if counts.scored == 0 {
                return Err(CliError::Data("no labelled record could be scored".into()));
            }
            let m = ConfusionMatrix::from_predictions(&predicted, &actual).map_err(data_err)?;
            let default_w = match file.model {
                TrainedModel::Logistic(_) => 0.85,
                TrainedModel::Gbdt(_) => 0.7,
            };
            (
                m,
                a.weight.unwrap_or(default_w),
                Some(file.model.cutoff()),
                Some(counts),
            )
        }
    };
    let mut report = EvaluationReport::new(confusion, weight, cutoff).map_err(data_err)?;
    report.run_config = Some(cfg.to_value());
    println!("{report}");
    println!();
    let c = &report.confusion;
    println!("tp={}\nfp={}\ntn={}\nfn={}", c.tp, c.fp, c.tn, c.fn_);
    let m = &report.metrics;
    for (k, v) in [
        ("sensitivity", m.sensitivity),
        ("specificity", m.specificity),
        ("ppv", m.ppv),
        ("npv", m.npv),
        ("f1", m.f1),
        ("bacc", m.bacc),
        ("whm", report.whm),
    ] {
        println!("{k}={}", fmt_kv(v));
    }
    println!("weight={}", report.weight);
    if let Some(r) = records {
        println!(
            "scored={}\ninsufficient={}\nunlabelled={}",
            r.scored, r.insufficient, r.unlabelled
        );
    }
    if let Some(p) = &a.output {
        write_json(p, &EvaluationArtifact { report, records })?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Directory receiving surrogate.txt, surrogate.dot, rules.json and
    /// explain.json.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub min_split: usize,
    #[arg(long, default_value_t = 0.01)]
    pub complexity: f64,
    #[arg(long, value_enum, default_value_t = Partition::Train)]
    pub partition: Partition,
}

pub fn explain(a: ExplainArgs) -> Result<()> {
    let mut cfg = RunConfig::new("explain");
    cfg.input = Some(a.input.clone());
    cfg.model = Some(a.model.clone());
    cfg.output = Some(a.output.clone());
    let cfg = cfg
        .with("min_split", a.min_split)
        .with("complexity", a.complexity)
        .with("partition", a.partition);
    cfg.validate()?;
    if !(a.complexity >= 0.0) || a.min_split < 2 {
        return Err(CliError::Usage(
            "--min-split must be at least 2 and --complexity non-negative".into(),
        ));
    }
    if !a.output.is_dir() {
        fs::create_dir_all(&a.output).map_err(|e| CliError::Data(format!("{}: {e}", a.output.display())))?;
    }

    let file = load_model(&a.model)?;
    let cohort = select(&load_cohort(&a.input, false)?, a.partition);
    let params = CartParams::with_min_split(a.min_split, a.complexity);
    let fit = fit_model_surrogate(&file.model, &cohort, &base_terms(), &params).map_err(training_err)?;
    let rules = extract_rules(&fit.tree);

    let cfg_line = serde_json::to_string(&cfg).expect("run config serializes");
    let text = render_tree(&fit.tree, RenderFormat::Text);
    write_text(
        &a.output.join("surrogate.txt"),
        &format!("# decode {}\n# run_config: {cfg_line}\n{text}", cfg.tool_version),
    )?;
    write_text(
        &a.output.join("surrogate.dot"),
        &format!(
            "// decode {}\n// run_config: {cfg_line}\n{}",
            cfg.tool_version,
            render_tree(&fit.tree, RenderFormat::Dot)
        ),
    )?;
    write_json(
        &a.output.join("rules.json"),
        &json!({ "tool_version": cfg.tool_version, "run_config": cfg, "rules": rules }),
    )?;
    write_json(
        &a.output.join("explain.json"),
        &json!({
            "tool_version": cfg.tool_version,
            "run_config": cfg,
            "model_type": file.model.kind(),
            "fidelity": fit.fidelity,
            "records": fit.records,
            "leaves": fit.tree.leaves(),
            "tree": fit.tree,
        }),
    )?;

    print!("{text}");
    if !text.ends_with('\n') {
        println!();
    }
    println!("fidelity={}", fit.fidelity);
    println!("records={}", fit.records);
    println!("leaves={}", fit.tree.leaves());
    println!("rules={}", rules.rules.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Second model reported alongside the primary one.
    #[arg(long)]
    pub secondary: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// Directory of the case log; cases are kept in memory when omitted.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 14)]
    pub ttl_days: u32,
}

pub fn serve(a: ServeArgs) -> Result<()> {
    let mut cfg = RunConfig::new("serve");
    cfg.model = Some(a.model.clone());
    let cfg = cfg.with("secondary", &a.secondary).with("listen", a.listen);
    cfg.validate()?;
    if a.ttl_days == 0 {
        return Err(CliError::Usage("--ttl-days must be at least 1".into()));
    }
    let model = load_model(&a.model)?;
    let secondary = a.secondary.as_deref().map(load_model).transpose()?;
    if let Some(dir) = &a.data_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    let config = decode_service::ServiceConfig {
        listen: a.listen,
        data_dir: a.data_dir,
        ttl: chrono::TimeDelta::days(i64::from(a.ttl_days)),
    };
    let _ = tracing_subscriber::fmt().try_init();
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Service(e.to_string()))?;
    rt.block_on(decode_service::serve(model, secondary, config))
        .map_err(|e| CliError::Service(e.to_string()))
}
