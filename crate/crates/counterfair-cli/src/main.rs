//! Batch front-end for the `counterfair` toolkit.
//!
//! Six verbs cover the pipeline: `generate` seeded benchmark data, compute
//! `bounds` for one confounding budget, `sweep` a budget grid, `train`
//! standard or fairness-constrained predictors, `evaluate` a stored model,
//! and `oracle-check` the closed-form intervals against a brute-force search
//! over compatible structural models.
//!
//! Every command takes `--config <json>` (a JSON object with the same field
//! names as the flags; explicit flags win), `--out <dir>` for artifacts, and
//! writes a `resolved_config.json` snapshot next to its outputs so any run
//! can be reproduced from the artifact directory alone. The primary report
//! is also printed to stdout as JSON.
//!
//! Exit codes: 0 success; 2 validation or input error; 3 numerical error
//! (overlap violation, degenerate probability, failed containment).

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use counterfair::bounds::{bound_effects, report_json as bounds_report, total_variation};
use counterfair::error::{Error, Result};
use counterfair::estimation::{
    fit_frequency_tables, fit_neural_density_with_epochs, DensityEstimator, DensityTarget,
    ObsTables,
};
use counterfair::evaluation::{mse, roc_auc, EvalReport};
use counterfair::model::{ColumnSchema, Dataset, RawTable, Role, VariableDomain};
use counterfair::model::{Interval, SensitivityParams};
use counterfair::neural::MlpConfig;
use counterfair::oracle::{
    report_json as oracle_report, search_effect_range, CompatSearchConfig,
};
use counterfair::synthesis::{generate, ScmSetting, ScmSpec};
use counterfair::training::{
    audit_predictor, train_fair, train_penalized, train_standard, ConstraintMode, EffectAudit,
    FairPredictor, LagrangianConfig, MultiplierRule, PenaltyConfig, TaskKind, ZSupport,
};

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "counterfair",
    version,
    about = "Causal fairness bounds under unobserved confounding: data synthesis, interval computation, constrained training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic benchmark dataset with stored noise.
    Generate(GenerateArgs),
    /// Compute effect bounds for one (Γ_M, Γ_Y) budget.
    Bounds(BoundsArgs),
    /// Sweep effect bounds over an ascending Γ grid.
    Sweep(SweepArgs),
    /// Train a standard or fairness-constrained predictor.
    Train(TrainArgs),
    /// Audit a stored predictor: performance plus certified unfairness.
    Evaluate(EvaluateArgs),
    /// Compare closed-form intervals against a brute-force model search.
    OracleCheck(OracleCheckArgs),
}

/// Merge explicitly passed flags over the (possibly file-loaded) config.
macro_rules! merge_flags {
    ($cfg:expr, $args:expr, [$($field:ident),* $(,)?]) => {
        $( if let Some(v) = $args.$field.clone() { $cfg.$field = v; } )*
    };
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::OracleCheck(a) => cmd_oracle_check(a),
    };
    match run {
        Ok(report) => {
            // Ignore a closed pipe so reports compose with `head` and co.
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            let _ = writeln!(io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Numerics(_) | Error::Search(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn load_config<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_str(&fs::read_to_string(p)?)?),
        None => Ok(T::default()),
    }
}

fn write_snapshot<T: Serialize>(out: &Path, command: &str, config: &T) -> Result<()> {
    fs::create_dir_all(out)?;
    let doc = json!({ "command": command, "config": config });
    let text = serde_json::to_string_pretty(&doc)?;
    fs::write(out.join("resolved_config.json"), text + "\n")?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn require_data(data: &Option<PathBuf>) -> Result<&PathBuf> {
    data.as_ref()
        .ok_or_else(|| Error::validation("a dataset is required: pass --data or set it in --config"))
}

/// Density-estimator backend choice for commands that audit predictors.
fn resolve_estimators(
    data: &Dataset,
    backend: &str,
    smoothing: f64,
    epochs: usize,
    seed: u64,
) -> Result<(DensityEstimator, DensityEstimator)> {
    let discrete = data.z_cells().is_some();
    let choice = match backend {
        "auto" => {
            if discrete {
                "frequency"
            } else {
                "neural"
            }
        }
        other => other,
    };
    match choice {
        "frequency" => {
            if !discrete {
                return Err(Error::validation(
                    "frequency estimators need discrete confounders; use --estimator neural",
                ));
            }
            let tables = fit_frequency_tables(data, smoothing)?;
            Ok((
                DensityEstimator::from_tables(&tables, DensityTarget::AGivenZ),
                DensityEstimator::from_tables(&tables, DensityTarget::MGivenZA),
            ))
        }
        "neural" => {
            let z_dim = data.z_feature_dim();
            let cfg_a = MlpConfig {
                layer_dims: vec![z_dim, 16, 2],
                dropout_rate: 0.0,
                seed: seed.wrapping_add(100),
                learning_rate: 1e-3,
                ..MlpConfig::default()
            };
            let cfg_m = MlpConfig {
                layer_dims: vec![z_dim + 1, 16, data.m_cardinality()],
                dropout_rate: 0.0,
                seed: seed.wrapping_add(200),
                learning_rate: 1e-3,
                ..MlpConfig::default()
            };
            let g_a = fit_neural_density_with_epochs(
                data,
                DensityTarget::AGivenZ,
                &cfg_a,
                seed.wrapping_add(100),
                epochs,
            )?;
            let g_m = fit_neural_density_with_epochs(
                data,
                DensityTarget::MGivenZA,
                &cfg_m,
                seed.wrapping_add(200),
                epochs,
            )?;
            Ok((g_a, g_m))
        }
        other => Err(Error::validation(format!(
            "unknown estimator backend '{other}' (expected auto, frequency, or neural)"
        ))),
    }
}

/// Scorecard from a predictor's audit triplet: AUC for binary outcomes, MSE
/// for regression, plus the certified worst-case effect magnitudes.
fn audit_scorecard(
    predictor: &FairPredictor,
    data: &Dataset,
    audit: &EffectAudit,
    omega: f64,
) -> Result<EvalReport> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::validation(format!("omega must lie in [0, 1], got {omega}")));
    }
    let scores = predictor.predict_dataset(data)?;
    let fairness =
        (audit.de.max_abs() + audit.ie.max_abs() + audit.se.max_abs()) / 3.0;
    let (auc, err) = match predictor.task {
        TaskKind::Binary => {
            let labels: Vec<u8> =
                data.y_labels()
                    .ok_or_else(|| Error::validation("binary task needs class labels"))?
                    .iter()
                    .map(|&y| y as u8)
                    .collect();
            (Some(roc_auc(&scores, &labels)?), None)
        }
        TaskKind::Regression => {
            let targets =
                data.y_values().ok_or_else(|| Error::validation("regression task needs real outcomes"))?;
            (None, Some(mse(&scores, targets)?))
        }
        TaskKind::MultiClass(_) => {
            return Err(Error::validation(
                "scorecards cover binary and regression outcomes only",
            ))
        }
    };
    let r = auc.unwrap_or_else(|| -err.unwrap_or(0.0));
    Ok(EvalReport {
        roc_auc: auc,
        mse: err,
        fairness,
        utility: omega * r - (1.0 - omega) * fairness,
        omega,
        de_max_abs: audit.de.max_abs(),
        ie_max_abs: audit.ie.max_abs(),
        se_max_abs: audit.se.max_abs(),
    })
}

fn audit_json(audit: &EffectAudit) -> serde_json::Value {
    let iv = |i: &Interval, naive: f64| json!({ "lo": i.lo, "hi": i.hi, "naive": naive });
    json!({
        "de": iv(&audit.de, audit.de_naive),
        "ie": iv(&audit.ie, audit.ie_naive),
        "se": iv(&audit.se, audit.se_naive),
    })
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct GenerateConfig {
    setting: String,
    phi: f64,
    n: usize,
    seed: u64,
    clip_lo: f64,
    clip_hi: f64,
    u_sd: f64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        let spec = ScmSpec::default();
        GenerateConfig {
            setting: spec.setting.to_string(),
            phi: spec.phi,
            n: spec.n,
            seed: spec.seed,
            clip_lo: spec.overlap_clip.0,
            clip_hi: spec.overlap_clip.1,
            u_sd: spec.u_sd,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// JSON file with GenerateConfig fields (flags override).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for data.csv, exogenous.csv, splits.json.
    #[arg(long)]
    out: PathBuf,
    /// Structural-equation family: u_de, u_ie, or continuous.
    #[arg(long)]
    setting: Option<String>,
    /// Confounding level Φ (mean of the latent draws).
    #[arg(long)]
    phi: Option<f64>,
    /// Number of records.
    #[arg(long)]
    n: Option<usize>,
    /// Generation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Lower Bernoulli clamp.
    #[arg(long)]
    clip_lo: Option<f64>,
    /// Upper Bernoulli clamp.
    #[arg(long)]
    clip_hi: Option<f64>,
    /// Latent standard deviation.
    #[arg(long)]
    u_sd: Option<f64>,
}

/// Fractions of the 60/20/20 train/validation/test split manifest.
const SPLIT_FRACTIONS: (f64, f64) = (0.6, 0.2);

fn cmd_generate(args: &GenerateArgs) -> Result<serde_json::Value> {
    let mut cfg: GenerateConfig = load_config(args.config.as_ref())?;
    merge_flags!(cfg, args, [setting, phi, n, seed, clip_lo, clip_hi, u_sd]);

    let spec = ScmSpec {
        setting: cfg.setting.parse::<ScmSetting>()?,
        phi: cfg.phi,
        n: cfg.n,
        seed: cfg.seed,
        overlap_clip: (cfg.clip_lo, cfg.clip_hi),
        u_sd: cfg.u_sd,
    };
    let gen = generate(&spec)?;
    write_snapshot(&args.out, "generate", &cfg)?;

    let data_path = args.out.join("data.csv");
    gen.data.write_csv(&data_path)?;

    // Exogenous sidecar: one row per record, confounder noises flattened.
    let exo_path = args.out.join("exogenous.csv");
    let z_noises = gen.exo.first().map_or(0, |e| e.e_z.len());
    let mut sidecar = String::from("u_de,u_ie,u_se");
    for i in 0..z_noises {
        sidecar.push_str(&format!(",e_z{i}"));
    }
    sidecar.push_str(",e_a,e_m,e_y\n");
    for exo in &gen.exo {
        sidecar.push_str(&format!("{},{},{}", exo.u_de, exo.u_ie, exo.u_se));
        for v in &exo.e_z {
            sidecar.push_str(&format!(",{v}"));
        }
        sidecar.push_str(&format!(",{},{},{}\n", exo.e_a, exo.e_m, exo.e_y));
    }
    fs::write(&exo_path, sidecar)?;

    // 60/20/20 split manifest, shuffled deterministically from the seed.
    let mut order: Vec<usize> = (0..cfg.n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let n_train = (cfg.n as f64 * SPLIT_FRACTIONS.0).floor() as usize;
    let n_val = (cfg.n as f64 * SPLIT_FRACTIONS.1).floor() as usize;
    let splits = json!({
        "train": order[..n_train],
        "val": order[n_train..n_train + n_val],
        "test": order[n_train + n_val..],
    });
    let splits_path = args.out.join("splits.json");
    write_json(&splits_path, &splits)?;

    Ok(json!({
        "setting": cfg.setting,
        "phi": cfg.phi,
        "rows": cfg.n,
        "files": {
            "data": data_path,
            "exogenous": exo_path,
            "splits": splits_path,
        },
    }))
}

// ---------------------------------------------------------------------------
// bounds
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct BoundsConfig {
    data: Option<PathBuf>,
    gamma_m: f64,
    gamma_y: f64,
    smoothing: f64,
    y: usize,
    a_i: u8,
    a_j: u8,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            data: None,
            gamma_m: 2.0,
            gamma_y: 2.0,
            smoothing: 0.5,
            y: 1,
            a_i: 0,
            a_j: 1,
        }
    }
}

#[derive(Args)]
struct BoundsArgs {
    /// JSON file with BoundsConfig fields (flags override).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for bounds.json.
    #[arg(long)]
    out: PathBuf,
    /// Dataset CSV path.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Mediator confounding budget Γ_M ≥ 1.
    #[arg(long)]
    gamma_m: Option<f64>,
    /// Outcome confounding budget Γ_Y ≥ 1.
    #[arg(long)]
    gamma_y: Option<f64>,
    /// Laplace smoothing for the probability tables.
    #[arg(long)]
    smoothing: Option<f64>,
    /// Outcome class the effects target.
    #[arg(long)]
    y: Option<usize>,
    /// Reference attribute value.
    #[arg(long)]
    a_i: Option<u8>,
    /// Comparison attribute value.
    #[arg(long)]
    a_j: Option<u8>,
}

fn cmd_bounds(args: &BoundsArgs) -> Result<serde_json::Value> {
    let mut cfg: BoundsConfig = load_config(args.config.as_ref())?;
    if args.data.is_some() {
        cfg.data = args.data.clone();
    }
    merge_flags!(cfg, args, [gamma_m, gamma_y, smoothing, y, a_i, a_j]);

    let data = Dataset::from_csv(require_data(&cfg.data)?)?;
    let tables = fit_frequency_tables(&data, cfg.smoothing)?;
    let params = SensitivityParams::new(cfg.gamma_m, cfg.gamma_y)?;
    let bounds = bound_effects(&tables, &params, cfg.y, cfg.a_i, cfg.a_j)?;
    let tv = total_variation(&tables, cfg.y, cfg.a_i, cfg.a_j)?;
    let report = bounds_report(&bounds, &params, tv);

    write_snapshot(&args.out, "bounds", &cfg)?;
    write_json(&args.out.join("bounds.json"), &report)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct SweepConfig {
    data: Option<PathBuf>,
    grid: Vec<f64>,
    smoothing: f64,
    y: usize,
    a_i: u8,
    a_j: u8,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            data: None,
            grid: vec![1.2, 2.0, 5.0],
            smoothing: 0.5,
            y: 1,
            a_i: 0,
            a_j: 1,
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    /// JSON file with SweepConfig fields (flags override).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for sweep.csv.
    #[arg(long)]
    out: PathBuf,
    /// Dataset CSV path.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Ascending Γ grid (both budgets move together).
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Laplace smoothing for the probability tables.
    #[arg(long)]
    smoothing: Option<f64>,
    /// Outcome class the effects target.
    #[arg(long)]
    y: Option<usize>,
    /// Reference attribute value.
    #[arg(long)]
    a_i: Option<u8>,
    /// Comparison attribute value.
    #[arg(long)]
    a_j: Option<u8>,
}

fn cmd_sweep(args: &SweepArgs) -> Result<serde_json::Value> {
    let mut cfg: SweepConfig = load_config(args.config.as_ref())?;
    if args.data.is_some() {
        cfg.data = args.data.clone();
    }
    merge_flags!(cfg, args, [grid, smoothing, y, a_i, a_j]);

    if cfg.grid.is_empty() {
        return Err(Error::validation("gamma grid must be non-empty"));
    }
    for pair in cfg.grid.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::validation(format!(
                "gamma grid must be strictly ascending, got {} after {}",
                pair[1], pair[0]
            )));
        }
    }

    let data = Dataset::from_csv(require_data(&cfg.data)?)?;
    let tables = fit_frequency_tables(&data, cfg.smoothing)?;
    let mut csv = String::from("gamma,de_lo,de_hi,ie_lo,ie_hi,se_lo,se_hi\n");
    for &gamma in &cfg.grid {
        let params = SensitivityParams::new(gamma, gamma)?;
        let b = bound_effects(&tables, &params, cfg.y, cfg.a_i, cfg.a_j)?;
        csv.push_str(&format!(
            "{gamma},{},{},{},{},{},{}\n",
            b.de.lo, b.de.hi, b.ie.lo, b.ie.hi, b.se.lo, b.se.hi
        ));
    }

    write_snapshot(&args.out, "sweep", &cfg)?;
    let csv_path = args.out.join("sweep.csv");
    fs::write(&csv_path, &csv)?;
    Ok(json!({ "rows": cfg.grid.len(), "csv": csv_path }))
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct TrainConfig {
    data: Option<PathBuf>,
    mode: String,
    gamma_m: f64,
    threshold: f64,
    lambda0: f64,
    mu0: f64,
    alpha: f64,
    iterations: usize,
    nested_epochs: usize,
    epochs: usize,
    rule: String,
    penalty_weight: Option<f64>,
    seed: u64,
    smoothing: f64,
    estimator: String,
    estimator_epochs: usize,
    hidden: Vec<usize>,
    dropout: f64,
    learning_rate: f64,
    batch_size: usize,
    omega: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let lag = LagrangianConfig::default();
        TrainConfig {
            data: None,
            mode: "fair".into(),
            gamma_m: 2.0,
            threshold: lag.gamma_vec[0],
            lambda0: lag.lambda0,
            mu0: lag.mu0,
            alpha: lag.alpha,
            iterations: 30,
            nested_epochs: 2,
            epochs: 60,
            rule: "ascent".into(),
            penalty_weight: None,
            seed: 0,
            smoothing: 0.5,
            estimator: "auto".into(),
            estimator_epochs: 30,
            hidden: vec![10],
            dropout: 0.1,
            learning_rate: 1e-4,
            batch_size: 128,
            omega: 0.5,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// JSON file with TrainConfig fields (flags override).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for model.json, train_report.json, eval_report.json.
    #[arg(long)]
    out: PathBuf,
    /// Dataset CSV path.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Training mode: standard or fair.
    #[arg(long)]
    mode: Option<String>,
    /// Mediator confounding budget Γ_M the constraints certify against.
    #[arg(long)]
    gamma_m: Option<f64>,
    /// Fairness threshold γ applied to each effect.
    #[arg(long)]
    threshold: Option<f64>,
    /// Initial multiplier λ₀.
    #[arg(long)]
    lambda0: Option<f64>,
    /// Initial penalty μ₀.
    #[arg(long)]
    mu0: Option<f64>,
    /// Penalty growth rate α.
    #[arg(long)]
    alpha: Option<f64>,
    /// Outer iterations of the augmented-Lagrangian loop.
    #[arg(long)]
    iterations: Option<usize>,
    /// Minibatch epochs per outer iteration.
    #[arg(long)]
    nested_epochs: Option<usize>,
    /// Epochs for standard mode (and the fixed-penalty trainer).
    #[arg(long)]
    epochs: Option<usize>,
    /// Multiplier update rule: ascent or printed_decay.
    #[arg(long)]
    rule: Option<String>,
    /// Use the fixed-penalty trainer with this weight instead of multipliers.
    #[arg(long)]
    penalty_weight: Option<f64>,
    /// Network initialization / shuffling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Laplace smoothing for frequency estimators.
    #[arg(long)]
    smoothing: Option<f64>,
    /// Density estimator backend: auto, frequency, or neural.
    #[arg(long)]
    estimator: Option<String>,
    /// Training epochs for neural density estimators.
    #[arg(long)]
    estimator_epochs: Option<usize>,
    /// Hidden layer widths of the predictor network.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Dropout rate during training.
    #[arg(long)]
    dropout: Option<f64>,
    /// Adam learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Minibatch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Utility weight ω for the post-hoc scorecard.
    #[arg(long)]
    omega: Option<f64>,
}

fn parse_rule(rule: &str) -> Result<MultiplierRule> {
    match rule {
        "ascent" => Ok(MultiplierRule::Ascent),
        "printed_decay" => Ok(MultiplierRule::PrintedDecay),
        other => Err(Error::validation(format!(
            "unknown multiplier rule '{other}' (expected ascent or printed_decay)"
        ))),
    }
}

fn cmd_train(args: &TrainArgs) -> Result<serde_json::Value> {
    let mut cfg: TrainConfig = load_config(args.config.as_ref())?;
    if args.data.is_some() {
        cfg.data = args.data.clone();
    }
    if args.penalty_weight.is_some() {
        cfg.penalty_weight = args.penalty_weight;
    }
    merge_flags!(
        cfg,
        args,
        [
            mode,
            gamma_m,
            threshold,
            lambda0,
            mu0,
            alpha,
            iterations,
            nested_epochs,
            epochs,
            rule,
            seed,
            smoothing,
            estimator,
            estimator_epochs,
            hidden,
            dropout,
            learning_rate,
            batch_size,
            omega,
        ]
    );

    let data = Dataset::from_csv(require_data(&cfg.data)?)?;
    let task = TaskKind::infer(&data);
    let mut layer_dims = vec![2 + data.z_feature_dim()];
    layer_dims.extend(&cfg.hidden);
    layer_dims.push(task.output_dim());
    let net_cfg = MlpConfig {
        layer_dims,
        dropout_rate: cfg.dropout,
        seed: cfg.seed,
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        ..MlpConfig::default()
    };

    let constraint_flags_given = args.gamma_m.is_some()
        || args.threshold.is_some()
        || args.lambda0.is_some()
        || args.mu0.is_some()
        || args.alpha.is_some()
        || args.iterations.is_some()
        || args.nested_epochs.is_some()
        || args.rule.is_some()
        || args.penalty_weight.is_some();

    let (g_a, g_m) = resolve_estimators(
        &data,
        &cfg.estimator,
        cfg.smoothing,
        cfg.estimator_epochs,
        cfg.seed,
    )?;

    let (predictor, report) = match cfg.mode.as_str() {
        "standard" => {
            if constraint_flags_given {
                eprintln!("warning: standard mode ignores constraint flags");
            }
            train_standard(&data, &net_cfg, cfg.epochs)?
        }
        "fair" => match cfg.penalty_weight {
            Some(weight) => {
                let penalty = PenaltyConfig {
                    thresholds: vec![cfg.threshold; 3],
                    weight,
                    epochs: cfg.epochs,
                };
                train_penalized(&data, &g_a, &g_m, cfg.gamma_m, &penalty, &net_cfg)?
            }
            None => {
                let lag = LagrangianConfig {
                    gamma_vec: vec![cfg.threshold; 3],
                    lambda0: cfg.lambda0,
                    mu0: cfg.mu0,
                    alpha: cfg.alpha,
                    max_iterations: cfg.iterations,
                    nested_epochs: cfg.nested_epochs,
                    epsilon: f64::INFINITY,
                    rule: parse_rule(&cfg.rule)?,
                };
                train_fair(
                    &data,
                    &g_a,
                    &g_m,
                    cfg.gamma_m,
                    &lag,
                    &net_cfg,
                    ConstraintMode::ScalarExpectation,
                )?
            }
        },
        other => {
            return Err(Error::validation(format!(
                "unknown mode '{other}' (expected standard or fair)"
            )))
        }
    };

    // Post-hoc audit at the same budget the constraints certify against.
    let support = ZSupport::from_dataset(&data)?;
    let audits = audit_predictor(
        &predictor,
        &g_a,
        &g_m,
        cfg.gamma_m,
        &support,
        ConstraintMode::ScalarExpectation,
    )?;
    let scorecard = audit_scorecard(&predictor, &data, &audits[0], cfg.omega)?;

    write_snapshot(&args.out, "train", &cfg)?;
    let model_path = args.out.join("model.json");
    fs::write(&model_path, serde_json::to_string_pretty(&predictor)? + "\n")?;
    let train_path = args.out.join("train_report.json");
    fs::write(&train_path, report.to_json()? + "\n")?;
    let eval_path = args.out.join("eval_report.json");
    write_json(&eval_path, &scorecard.to_json())?;

    Ok(json!({
        "mode": cfg.mode,
        "converged": report.converged,
        "final_constraints": report.final_constraints,
        "bounds": audit_json(&audits[0]),
        "scorecard": scorecard.to_json(),
        "files": { "model": model_path, "train_report": train_path, "eval_report": eval_path },
    }))
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct EvaluateConfig {
    data: Option<PathBuf>,
    model: Option<PathBuf>,
    gamma_m: f64,
    omega: f64,
    smoothing: f64,
    estimator: String,
    estimator_epochs: usize,
    seed: u64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            data: None,
            model: None,
            gamma_m: 2.0,
            omega: 0.5,
            smoothing: 0.5,
            estimator: "auto".into(),
            estimator_epochs: 30,
            seed: 0,
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    /// JSON file with EvaluateConfig fields (flags override).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for eval_report.json.
    #[arg(long)]
    out: PathBuf,
    /// Dataset CSV path.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Stored model.json path.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Mediator confounding budget Γ_M for the audit.
    #[arg(long)]
    gamma_m: Option<f64>,
    /// Utility weight ω.
    #[arg(long)]
    omega: Option<f64>,
    /// Laplace smoothing for frequency estimators.
    #[arg(long)]
    smoothing: Option<f64>,
    /// Density estimator backend: auto, frequency, or neural.
    #[arg(long)]
    estimator: Option<String>,
    /// Training epochs for neural density estimators.
    #[arg(long)]
    estimator_epochs: Option<usize>,
    /// Seed for neural density estimators.
    #[arg(long)]
    seed: Option<u64>,
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<serde_json::Value> {
    let mut cfg: EvaluateConfig = load_config(args.config.as_ref())?;
    if args.data.is_some() {
        cfg.data = args.data.clone();
    }
    if args.model.is_some() {
        cfg.model = args.model.clone();
    }
    merge_flags!(cfg, args, [gamma_m, omega, smoothing, estimator, estimator_epochs, seed]);

    let data = Dataset::from_csv(require_data(&cfg.data)?)?;
    let model_path = cfg
        .model
        .as_ref()
        .ok_or_else(|| Error::validation("a model is required: pass --model or set it in --config"))?;
    let predictor: FairPredictor = serde_json::from_str(&fs::read_to_string(model_path)?)?;

    let (g_a, g_m) = resolve_estimators(
        &data,
        &cfg.estimator,
        cfg.smoothing,
        cfg.estimator_epochs,
        cfg.seed,
    )?;
    let support = ZSupport::from_dataset(&data)?;
    let audits = audit_predictor(
        &predictor,
        &g_a,
        &g_m,
        cfg.gamma_m,
        &support,
        ConstraintMode::ScalarExpectation,
    )?;
    let scorecard = audit_scorecard(&predictor, &data, &audits[0], cfg.omega)?;

    write_snapshot(&args.out, "evaluate", &cfg)?;
    let eval_path = args.out.join("eval_report.json");
    write_json(&eval_path, &scorecard.to_json())?;

    Ok(json!({
        "gamma_m": cfg.gamma_m,
        "bounds": audit_json(&audits[0]),
        "scorecard": scorecard.to_json(),
        "files": { "eval_report": eval_path },
    }))
}

// ---------------------------------------------------------------------------
// oracle-check
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct OracleCheckConfig {
    data: Option<PathBuf>,
    gamma_m: f64,
    gamma_y: f64,
    budget: usize,
    seed: u64,
    smoothing: f64,
    y: usize,
    a_i: u8,
    a_j: u8,
    refine_steps: usize,
    obs_match_tol: f64,
}

impl Default for OracleCheckConfig {
    fn default() -> Self {
        let search = CompatSearchConfig::default();
        OracleCheckConfig {
            data: None,
            gamma_m: 2.0,
            gamma_y: 2.0,
            budget: 100_000,
            seed: 0,
            smoothing: 0.5,
            y: 1,
            a_i: 0,
            a_j: 1,
            refine_steps: search.refine_steps,
            obs_match_tol: search.obs_match_tol,
        }
    }
}

#[derive(Args)]
struct OracleCheckArgs {
    /// JSON file with OracleCheckConfig fields (flags override).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for oracle_report.json.
    #[arg(long)]
    out: PathBuf,
    /// Dataset CSV path (omitted: fuzz a random binary instance from --seed).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Mediator confounding budget Γ_M.
    #[arg(long)]
    gamma_m: Option<f64>,
    /// Outcome confounding budget Γ_Y.
    #[arg(long)]
    gamma_y: Option<f64>,
    /// Candidate models to draw.
    #[arg(long)]
    budget: Option<usize>,
    /// Seed for the candidate stream (and the fuzzed instance).
    #[arg(long)]
    seed: Option<u64>,
    /// Laplace smoothing when fitting tables from --data.
    #[arg(long)]
    smoothing: Option<f64>,
    /// Outcome class the effects target.
    #[arg(long)]
    y: Option<usize>,
    /// Reference attribute value.
    #[arg(long)]
    a_i: Option<u8>,
    /// Comparison attribute value.
    #[arg(long)]
    a_j: Option<u8>,
    /// Hill-climb steps per endpoint witness.
    #[arg(long)]
    refine_steps: Option<usize>,
    /// Observational-match tolerance for candidate acceptance.
    #[arg(long)]
    obs_match_tol: Option<f64>,
}

/// Random binary tables with strictly interior conditionals, for fuzzing the
/// search without a dataset on disk.
fn fuzzed_tables(seed: u64, smoothing: f64) -> Result<ObsTables> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns = vec![
        ColumnSchema { name: "a".into(), role: Role::Attribute, domain: VariableDomain::Binary },
        ColumnSchema { name: "z".into(), role: Role::Confounder, domain: VariableDomain::Binary },
        ColumnSchema { name: "m".into(), role: Role::Mediator, domain: VariableDomain::Binary },
        ColumnSchema { name: "y".into(), role: Role::Outcome, domain: VariableDomain::Binary },
    ];
    let mut rows = Vec::new();
    for a in 0..2u8 {
        for z in 0..2usize {
            for m in 0..2usize {
                let total = rng.gen_range(40..160);
                let ones = rng.gen_range(1..total);
                for i in 0..total {
                    let y = if i < ones { 1.0 } else { 0.0 };
                    rows.push(vec![a as f64, z as f64, m as f64, y]);
                }
            }
        }
    }
    let data = counterfair::model::validate_dataset(&RawTable { columns, rows })?;
    fit_frequency_tables(&data, smoothing)
}

fn cmd_oracle_check(args: &OracleCheckArgs) -> Result<serde_json::Value> {
    let mut cfg: OracleCheckConfig = load_config(args.config.as_ref())?;
    if args.data.is_some() {
        cfg.data = args.data.clone();
    }
    merge_flags!(
        cfg,
        args,
        [gamma_m, gamma_y, budget, seed, smoothing, y, a_i, a_j, refine_steps, obs_match_tol]
    );

    let tables = match &cfg.data {
        Some(path) => fit_frequency_tables(&Dataset::from_csv(path)?, cfg.smoothing)?,
        None => fuzzed_tables(cfg.seed, cfg.smoothing)?,
    };
    let params = SensitivityParams::new(cfg.gamma_m, cfg.gamma_y)?;
    let search = CompatSearchConfig {
        budget: cfg.budget,
        seed: cfg.seed,
        refine_steps: cfg.refine_steps,
        obs_match_tol: cfg.obs_match_tol,
        ..CompatSearchConfig::default()
    };
    let outcome = search_effect_range(&tables, &params, cfg.y, cfg.a_i, cfg.a_j, &search)?;
    if !outcome.sound(1e-9) {
        return Err(Error::numerics(format!(
            "achieved ranges escape the closed-form intervals: gaps {:?}",
            outcome.endpoint_gaps()
        )));
    }
    let report = oracle_report(&outcome);

    write_snapshot(&args.out, "oracle-check", &cfg)?;
    write_json(&args.out.join("oracle_report.json"), &report)?;
    Ok(report)
}
