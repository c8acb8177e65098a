//! Command-line front end: train, score, evaluate, and synthesize data.
//!
//! Every subcommand prints `key=value` summary lines on standard output.
//! Exit codes: 0 success, 1 data or model error, 2 usage error.
//!
//! `--config FILE` names a TOML file whose top-level keys are the long flag
//! names of the invoked subcommand (or `seed`); flags given on the command
//! line win over the file, and unknown keys are a usage error.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::parser::ValueSource;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use crate::codec::{
    load_records, read_manifest, save_records, ComboScheme, CodecError,
};
use crate::dataset::{
    balance, balance_per_dataset, binarize, split_identity_disjoint, BinaryLabel, SplitSpec,
};
use crate::derive_seed;
use crate::eval::{
    class_flow, det_csv, det_curve, discard_grid, edc_csv, edc_curve, flow_csv, format_comparisons,
    read_comparisons, EdcConfig, ThresholdMode,
};
use crate::learners::{
    boost::BoostStop, load_model, save_model, train_boost, train_forest, train_svm, BoostConfig, ForestConfig,
    LabeledSet, SvmConfig,
};
use crate::neutrality::{read_scores, score_samples, write_scores, NeutralityQuality};
use crate::synthetic::{synth_comparisons, synth_records, SynthConfig};

pub const THREADS_ENV: &str = "NEUTRAL_GATE_THREADS";

const DEFAULT_STARTING_FNMR: f64 = 0.05;

#[derive(Debug, Parser)]
#[command(name = "neutral-gate", version, about = "Expression-neutrality face image quality")]
pub struct Cli {
    /// Master seed for every randomized step.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// TOML file with flag values; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a neutral / non-neutral classifier.
    Train(TrainArgs),
    /// Score samples with a trained model.
    Score(ScoreArgs),
    /// DET curve and EER of scores against manifest labels.
    EvalDet(DetArgs),
    /// Error-versus-discard curve and its partial area.
    EvalEdc(EdcArgs),
    /// Expression mix of the retained samples as low scores are discarded.
    ClassFlow(FlowArgs),
    /// Write a synthetic dataset (manifest, features, comparisons).
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    Svm,
    Rf,
    Adaboost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BalanceMode {
    Global,
    PerDataset,
    None,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub combo: ComboScheme,
    #[arg(long, value_enum)]
    pub model: ModelChoice,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = SplitSpec::DEFAULT_VALIDATION_FRACTION)]
    pub validation_fraction: f64,
    #[arg(long, value_enum, default_value_t = BalanceMode::Global)]
    pub balance: BalanceMode,

    #[arg(long)]
    pub svm_c: Option<f64>,
    #[arg(long)]
    pub svm_gamma: Option<f64>,
    #[arg(long)]
    pub svm_kkt_tolerance: Option<f64>,
    #[arg(long)]
    pub svm_max_passes: Option<usize>,
    #[arg(long)]
    pub svm_cache_mb: Option<usize>,

    #[arg(long)]
    pub rf_max_trees: Option<usize>,
    #[arg(long)]
    pub rf_oob_epsilon: Option<f64>,
    #[arg(long)]
    pub rf_active_var_count: Option<usize>,
    #[arg(long)]
    pub rf_min_sample_count: Option<usize>,
    #[arg(long)]
    pub rf_max_depth: Option<usize>,

    #[arg(long)]
    pub boost_weak_count: Option<usize>,
    #[arg(long)]
    pub boost_weight_trim_rate: Option<f64>,
    #[arg(long)]
    pub boost_min_sample_count: Option<usize>,
    #[arg(long)]
    pub boost_max_depth: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Fail unless the model was trained on this combination.
    #[arg(long)]
    pub combo: Option<ComboScheme>,
}

#[derive(Debug, Args)]
pub struct DetArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EdcArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub comparisons: PathBuf,
    #[arg(long, default_value_t = 0.20)]
    pub dmax: f64,
    #[arg(long, default_value_t = 0.01)]
    pub grid_step: f64,
    #[arg(long, conflicts_with = "starting_fnmr")]
    pub threshold: Option<f64>,
    /// Defaults to 0.05 when no fixed threshold is given.
    #[arg(long)]
    pub starting_fnmr: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 0.20)]
    pub dmax: f64,
    #[arg(long, default_value_t = 0.01)]
    pub grid_step: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory; receives manifest.tsv, features/ and comparisons.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub subjects: usize,
    #[arg(long, default_value_t = 6)]
    pub per_subject: usize,
    #[arg(long, default_value_t = 0.4)]
    pub neutral_share: f64,
    #[arg(long, default_value_t = 1.5)]
    pub separation: f32,
}

/// Marks an error as a usage error (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

/// Parses `args` (program name first), runs the subcommand, and returns the
/// process exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match parse(args) {
        Ok(cli) => cli,
        Err(Parsed::Clap(e)) => {
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{text}");
            return e.exit_code();
        }
        Err(Parsed::Other(e)) => return report(e, err),
    };
    match configure_threads().and_then(|_| dispatch(cli, out)) {
        Ok(()) => 0,
        Err(e) => report(e, err),
    }
}

fn report(e: anyhow::Error, err: &mut dyn Write) -> i32 {
    // Skip causes whose text the outer message already includes.
    let mut message = e.to_string();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !message.contains(&text) {
            message = format!("{message}: {text}");
        }
    }
    let _ = writeln!(err, "error: {message}");
    if e.downcast_ref::<UsageError>().is_some() {
        2
    } else {
        1
    }
}

enum Parsed {
    Clap(clap::Error),
    Other(anyhow::Error),
}

fn parse(args: Vec<OsString>) -> Result<Cli, Parsed> {
    // First pass without required-ness, since the config may supply them.
    let relaxed = Cli::command().mut_subcommands(|s| s.mut_args(|a| a.required(false)));
    let matches = relaxed.try_get_matches_from(&args).map_err(Parsed::Clap)?;
    let mut merged = args;
    if let Some(config) = matches.get_one::<PathBuf>("config") {
        merged.extend(config_args(config, &matches).map_err(Parsed::Other)?);
    }
    let matches = Cli::command().try_get_matches_from(&merged).map_err(Parsed::Clap)?;
    Cli::from_arg_matches(&matches).map_err(Parsed::Clap)
}

/// Turns config-file entries not already given as flags into extra
/// arguments appended after the subcommand.
fn config_args(path: &Path, matches: &clap::ArgMatches) -> anyhow::Result<Vec<OsString>> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?;
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let command = Cli::command();
    let sub_cmd = command.find_subcommand(name).expect("parsed subcommand exists");

    let mut extra = Vec::new();
    for (key, value) in &table {
        let long = key.replace('_', "-");
        let arg = sub_cmd
            .get_arguments()
            .chain(command.get_arguments())
            .find(|a| a.get_long() == Some(long.as_str()) && long != "config")
            .ok_or_else(|| usage(format!("unknown config key {key:?} for {name}")))?;
        let id = arg.get_id().as_str();
        let given = |m: &clap::ArgMatches| {
            m.try_get_raw(id).ok().flatten().is_some()
                && m.value_source(id) == Some(ValueSource::CommandLine)
        };
        if given(sub) || given(matches) {
            continue;
        }
        let text = match value {
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            other => bail!(usage(format!("config key {key:?} has unsupported value {other}"))),
        };
        extra.push(OsString::from(format!("--{long}={text}")));
    }
    Ok(extra)
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| usage(format!("{THREADS_ENV} must be a non-negative integer, got {raw:?}")))?;
    if threads > 0 {
        // Fails only if the pool was already built earlier in this process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    Ok(())
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Train(a) => cmd_train(&a, seed, out),
        Command::Score(a) => cmd_score(&a, out),
        Command::EvalDet(a) => cmd_eval_det(&a, out),
        Command::EvalEdc(a) => cmd_eval_edc(&a, out),
        Command::ClassFlow(a) => cmd_class_flow(&a, out),
        Command::Synth(a) => cmd_synth(&a, seed, out),
    }
}

enum LearnerSetup {
    Svm(SvmConfig),
    Forest(ForestConfig),
    Boost(BoostConfig),
}

fn learner_setup(a: &TrainArgs, seed: u64) -> anyhow::Result<LearnerSetup> {
    let setup = match a.model {
        ModelChoice::Svm => {
            let d = SvmConfig::default();
            let cfg = SvmConfig {
                c: a.svm_c.unwrap_or(d.c),
                gamma: a.svm_gamma.unwrap_or(d.gamma),
                kkt_tolerance: a.svm_kkt_tolerance.unwrap_or(d.kkt_tolerance),
                max_passes: a.svm_max_passes.unwrap_or(d.max_passes),
                cache_budget_bytes: a.svm_cache_mb.map_or(d.cache_budget_bytes, |mb| mb << 20),
            };
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            LearnerSetup::Svm(cfg)
        }
        ModelChoice::Rf => {
            let d = ForestConfig::default();
            let cfg = ForestConfig {
                max_trees: a.rf_max_trees.unwrap_or(d.max_trees),
                oob_epsilon: a.rf_oob_epsilon.unwrap_or(d.oob_epsilon),
                active_var_count: a.rf_active_var_count.unwrap_or(d.active_var_count),
                min_sample_count: a.rf_min_sample_count.unwrap_or(d.min_sample_count),
                max_depth: a.rf_max_depth.unwrap_or(d.max_depth),
                seed,
            };
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            LearnerSetup::Forest(cfg)
        }
        ModelChoice::Adaboost => {
            let d = BoostConfig::default();
            let cfg = BoostConfig {
                weak_count: a.boost_weak_count.unwrap_or(d.weak_count),
                weight_trim_rate: a.boost_weight_trim_rate.unwrap_or(d.weight_trim_rate),
                min_sample_count: a.boost_min_sample_count.unwrap_or(d.min_sample_count),
                max_depth: a.boost_max_depth.unwrap_or(d.max_depth),
                seed,
            };
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            LearnerSetup::Boost(cfg)
        }
    };
    Ok(setup)
}

fn cmd_train(a: &TrainArgs, seed: u64, out: &mut dyn Write) -> anyhow::Result<()> {
    let setup = learner_setup(a, seed)?;
    let split = SplitSpec::new(a.validation_fraction, derive_seed(seed, 1))
        .map_err(|e| usage(e.to_string()))?;

    let records = load_records(&a.manifest, &a.features).context("loading features")?;
    let samples = binarize(records);
    let samples = match a.balance {
        BalanceMode::Global => balance(samples, derive_seed(seed, 0))?,
        BalanceMode::PerDataset => balance_per_dataset(samples, derive_seed(seed, 0))?,
        BalanceMode::None => samples,
    };
    let (train, validation) = split_identity_disjoint(samples, &split)?;
    let train = LabeledSet::from_samples(&train, a.combo);
    let validation = LabeledSet::from_samples(&validation, a.combo);

    let mut lines: Vec<(String, String)> = Vec::new();
    let mut kv = |k: &str, v: String| lines.push((k.to_string(), v));
    kv("command", "train".into());
    kv("model", a.model.to_possible_value().unwrap().get_name().into());
    kv("combo", a.combo.to_string());
    kv("seed", seed.to_string());
    kv("balance", a.balance.to_possible_value().unwrap().get_name().into());
    kv("validation_fraction", a.validation_fraction.to_string());
    kv("train_samples", train.len().to_string());
    kv("validation_samples", validation.len().to_string());

    let model = match setup {
        LearnerSetup::Svm(cfg) => {
            let (model, report) = train_svm(&train, &validation, &cfg)?;
            kv("svm_c", cfg.c.to_string());
            kv("svm_gamma", cfg.gamma.to_string());
            kv("svm_kkt_tolerance", cfg.kkt_tolerance.to_string());
            kv("svm_max_passes", cfg.max_passes.to_string());
            kv("svm_iterations", report.iterations.to_string());
            kv("svm_converged", report.converged.to_string());
            kv("svm_platt_on_validation", report.platt_on_validation.to_string());
            model
        }
        LearnerSetup::Forest(cfg) => {
            let (model, report) = train_forest(&train, &cfg)?;
            kv("rf_max_trees", cfg.max_trees.to_string());
            kv("rf_oob_epsilon", cfg.oob_epsilon.to_string());
            kv("rf_active_var_count", cfg.active_var_count.to_string());
            kv("rf_min_sample_count", cfg.min_sample_count.to_string());
            kv("rf_max_depth", cfg.max_depth.to_string());
            kv("rf_trees", report.oob_errors.len().to_string());
            kv("rf_stopped_on_epsilon", report.stopped_on_epsilon.to_string());
            model
        }
        LearnerSetup::Boost(cfg) => {
            let (model, report) = train_boost(&train, &cfg)?;
            kv("boost_weak_count", cfg.weak_count.to_string());
            kv("boost_weight_trim_rate", cfg.weight_trim_rate.to_string());
            kv("boost_min_sample_count", cfg.min_sample_count.to_string());
            kv("boost_max_depth", cfg.max_depth.to_string());
            kv("boost_rounds", report.rounds.len().to_string());
            let stop = match report.stop {
                BoostStop::WeakCount => "weak_count",
                BoostStop::ZeroError => "zero_error",
                BoostStop::WeakLearnerTooWeak => "weak_learner_too_weak",
            };
            kv("boost_stop", stop.into());
            model
        }
    };
    kv("train_accuracy", format!("{:.9}", model.accuracy(&train)?));
    kv("validation_accuracy", format!("{:.9}", model.accuracy(&validation)?));
    save_model(&model, &a.out)?;
    kv("model_file", a.out.display().to_string());
    emit(out, &lines)
}

fn cmd_score(a: &ScoreArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let model = load_model(&a.model)?;
    if let Some(combo) = a.combo {
        if combo != model.scheme() {
            bail!("scheme mismatch: model was trained on {} but {combo} was requested", model.scheme());
        }
    }
    let entries = read_manifest(&a.manifest)?;
    let scores = if entries.is_empty() {
        Vec::new()
    } else {
        let records = load_records(&a.manifest, &a.features).map_err(|e| match e {
            CodecError::ColumnMismatch { .. } | CodecError::RowCountMismatch { .. } => {
                anyhow::anyhow!("feature mismatch for {} model: {e}", model.scheme())
            }
            other => other.into(),
        })?;
        score_samples(&model, &records)?
    };
    write_scores(&a.out, &scores)?;
    emit(
        out,
        &[
            ("command".into(), "score".into()),
            ("model".into(), model.kind().as_str().into()),
            ("combo".into(), model.scheme().to_string()),
            ("samples".into(), scores.len().to_string()),
            ("scores_file".into(), a.out.display().to_string()),
        ],
    )
}

fn quality_map(scores: &[NeutralityQuality]) -> anyhow::Result<HashMap<String, f64>> {
    let mut map = HashMap::with_capacity(scores.len());
    for s in scores {
        if map.insert(s.sample_id.clone(), s.confidence).is_some() {
            bail!("duplicate sample_id {:?} in scores", s.sample_id);
        }
    }
    Ok(map)
}

fn cmd_eval_det(a: &DetArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let qualities = quality_map(&read_scores(&a.scores)?)?;
    let entries = read_manifest(&a.manifest)?;
    let mut labeled = Vec::with_capacity(entries.len());
    for e in &entries {
        let score = qualities
            .get(&e.meta.sample_id)
            .with_context(|| format!("no score for sample {:?}", e.meta.sample_id))?;
        labeled.push((*score, BinaryLabel::of(e.meta.expression)));
    }
    let curve = det_curve(&labeled)?;
    write_file(&a.out, det_csv(&curve))?;
    let positives = labeled.iter().filter(|(_, l)| *l == BinaryLabel::Neutral).count();
    emit(
        out,
        &[
            ("command".into(), "eval-det".into()),
            ("neutral".into(), positives.to_string()),
            ("non_neutral".into(), (labeled.len() - positives).to_string()),
            ("points".into(), curve.points.len().to_string()),
            ("eer".into(), format!("{:.9}", curve.eer)),
            ("det_file".into(), a.out.display().to_string()),
        ],
    )
}

fn cmd_eval_edc(a: &EdcArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let mode = match (a.threshold, a.starting_fnmr) {
        (Some(t), _) => ThresholdMode::Fixed(t),
        (None, f0) => ThresholdMode::StartingFnmr(f0.unwrap_or(DEFAULT_STARTING_FNMR)),
    };
    if let ThresholdMode::StartingFnmr(f0) = mode {
        if !(0.0..=1.0).contains(&f0) {
            return Err(usage(format!("--starting-fnmr {f0} outside [0, 1]")));
        }
    }
    discard_grid(a.dmax, a.grid_step).map_err(|e| usage(e.to_string()))?;
    let cfg = EdcConfig {
        d_max: a.dmax,
        grid_step: a.grid_step,
        threshold_mode: mode,
    };

    let qualities = quality_map(&read_scores(&a.scores)?)?;
    let comparisons = read_comparisons(&a.comparisons)?;
    let curve = edc_curve(&qualities, &comparisons, &cfg)?;
    write_file(&a.out, edc_csv(&curve))?;

    let mut lines: Vec<(String, String)> = vec![
        ("command".into(), "eval-edc".into()),
        ("comparisons".into(), comparisons.len().to_string()),
        ("dmax".into(), a.dmax.to_string()),
        ("grid_step".into(), a.grid_step.to_string()),
    ];
    match mode {
        ThresholdMode::Fixed(t) => {
            lines.push(("threshold_mode".into(), "fixed".into()));
            lines.push(("threshold".into(), t.to_string()));
        }
        ThresholdMode::StartingFnmr(f0) => {
            lines.push(("threshold_mode".into(), "starting_fnmr".into()));
            lines.push(("starting_fnmr".into(), f0.to_string()));
            lines.push(("threshold".into(), curve.threshold.to_string()));
        }
    }
    lines.extend([
        ("pauc".into(), format!("{:.9}", curve.pauc)),
        ("pauc_normalized".into(), format!("{:.9}", curve.pauc_normalized)),
        ("truncated".into(), curve.truncated.to_string()),
        ("edc_file".into(), a.out.display().to_string()),
    ]);
    emit(out, &lines)
}

fn cmd_class_flow(a: &FlowArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let grid = discard_grid(a.dmax, a.grid_step).map_err(|e| usage(e.to_string()))?;
    let qualities = quality_map(&read_scores(&a.scores)?)?;
    let entries = read_manifest(&a.manifest)?;
    let metas: Vec<_> = entries.into_iter().map(|e| e.meta).collect();
    let flow = class_flow(&qualities, &metas, &grid)?;
    write_file(&a.out, flow_csv(&flow))?;

    let mut lines: Vec<(String, String)> = vec![
        ("command".into(), "class-flow".into()),
        ("samples".into(), metas.len().to_string()),
        ("dmax".into(), a.dmax.to_string()),
        ("grid_step".into(), a.grid_step.to_string()),
        ("grid_points".into(), grid.len().to_string()),
    ];
    for (label, shares) in &flow.proportions {
        let last = shares.last().copied().unwrap_or(0.0);
        lines.push((format!("proportion_at_dmax.{label}"), format!("{last:.9}")));
    }
    lines.push(("flow_file".into(), a.out.display().to_string()));
    emit(out, &lines)
}

fn cmd_synth(a: &SynthArgs, seed: u64, out: &mut dyn Write) -> anyhow::Result<()> {
    if !(0.0..=1.0).contains(&a.neutral_share) {
        return Err(usage("--neutral-share must lie in [0, 1]"));
    }
    let cfg = SynthConfig {
        subjects: a.subjects,
        samples_per_subject: a.per_subject,
        neutral_share: a.neutral_share,
        separation: a.separation,
        ..SynthConfig::default()
    };
    let records = synth_records(&cfg, seed);
    let comparisons = synth_comparisons(&records, seed);
    let manifest = a.out.join("manifest.tsv");
    let features = a.out.join("features");
    save_records(&records, &manifest, &features)?;
    let comparisons_path = a.out.join("comparisons.csv");
    write_file(&comparisons_path, format_comparisons(&comparisons))?;
    emit(
        out,
        &[
            ("command".into(), "synth".into()),
            ("seed".into(), seed.to_string()),
            ("samples".into(), records.len().to_string()),
            ("comparisons".into(), comparisons.len().to_string()),
            ("manifest".into(), manifest.display().to_string()),
            ("features".into(), features.display().to_string()),
            ("comparisons_file".into(), comparisons_path.display().to_string()),
        ],
    )
}

fn write_file(path: &Path, text: String) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit(out: &mut dyn Write, lines: &[(String, String)]) -> anyhow::Result<()> {
    for (k, v) in lines {
        writeln!(out, "{k}={v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            std::iter::once("neutral-gate").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn bogus_combo_is_usage_error() {
        let (code, _, err) = run_capture(&[
            "train", "--manifest", "m", "--features", "f", "--combo", "bogus", "--model", "svm", "--out", "o",
        ]);
        assert_eq!(code, 2);
        assert!(err.contains("bogus"));
    }

    #[test]
    fn invalid_learner_flag_is_usage_error() {
        let (code, _, _) = run_capture(&[
            "train", "--manifest", "m", "--features", "f", "--combo", "hse1", "--model", "svm", "--out", "o",
            "--svm-c", "-1",
        ]);
        assert_eq!(code, 2);
    }

    #[test]
    fn missing_input_is_data_error() {
        let (code, _, err) = run_capture(&[
            "score", "--model", "/nonexistent/model.bin", "--manifest", "m", "--features", "f", "--out", "o",
        ]);
        assert_eq!(code, 1);
        assert!(err.starts_with("error:"));
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        fs::write(&cfg, "bogus_key = 1\n").unwrap();
        let (code, _, err) = run_capture(&[
            "eval-det", "--scores", "s", "--manifest", "m", "--out", "o", "--config", cfg.to_str().unwrap(),
        ]);
        assert_eq!(code, 2);
        assert!(err.contains("bogus_key"));
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_capture(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("train"));
    }
}
