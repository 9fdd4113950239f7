//! Command-line front end: configuration layering, presets, validation and dispatch.
//!
//! A run's configuration is built in layers: built-in defaults, then the
//! preset, then the TOML config file, then command-line flags.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::estimators::{mc_price, mlmc_price, plan_with_mode, Estimate, PlanMode};
use crate::experiments::{
    covariance_check, mse_cost_curve, strong_error_curve, weak_error_curve, EstimatorFamily, MseCostSettings, Z95,
};
use crate::model::{ForwardCurve, Interpolation, ModelParams};
use crate::output::{self, Manifest};
use crate::payoff::Payoff;
use crate::scheme::SchemeKind;

/// Tolerance the covariance check must meet.
pub const COVARIANCE_CHECK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Price,
    StrongError,
    WeakError,
    MseCost,
    CovarianceCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Price => "price",
            Command::StrongError => "strong-error",
            Command::WeakError => "weak-error",
            Command::MseCost => "mse-cost",
            Command::CovarianceCheck => "covariance-check",
        }
    }
}

/// Named experimental setups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Strong error, H = 0.1, T = 0.5.
    Fig1,
    /// Strong error, H = 0.2, T = 0.5.
    #[value(name = "fig1-h02")]
    #[serde(rename = "fig1-h02")]
    Fig1H02,
    /// Strong error, H = 0.3, T = 0.5.
    #[value(name = "fig1-h03")]
    #[serde(rename = "fig1-h03")]
    Fig1H03,
    /// Weak error and first reference price, H = 0.3, T = 0.25.
    Fig2,
    /// MSE versus cost and second reference price, H = 0.1, T = 0.5.
    Fig3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Mc,
    Mlmc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PayoffKind {
    Call,
    Put,
    Future,
}

/// Tabulated initial curve source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct X0Source {
    pub path: PathBuf,
    pub interpolation: Interpolation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    /// Plain MC grid size.
    pub n: usize,
    /// Plain MC sample count.
    pub m: u64,
    pub use_cv: bool,
    /// Multilevel target RMSE.
    pub epsilon: f64,
    pub n0: usize,
    pub plan_mode: PlanMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrongConfig {
    pub n_values: Vec<usize>,
    pub n_ref: usize,
    pub m: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakConfig {
    pub n_values: Vec<usize>,
    pub m: u64,
    pub reference_price: f64,
    pub reference_ci: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MseConfig {
    pub families: Vec<EstimatorFamily>,
    pub epsilons: Vec<f64>,
    pub n_mse: usize,
    pub reference_price: f64,
    pub reference_ci: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceCheckConfig {
    pub pairs: usize,
    pub h_min: f64,
    pub h_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Falls back to the `VIX_MLMC_OUTPUT_DIR` environment variable, then `.`.
    pub dir: Option<PathBuf>,
    pub format: OutputFormat,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub preset: Option<Preset>,
    pub paper_scale: bool,
    pub model: ModelParams,
    pub x0_source: Option<X0Source>,
    pub scheme: SchemeKind,
    pub payoff: Payoff,
    pub estimator: EstimatorConfig,
    pub strong: StrongConfig,
    pub weak: WeakConfig,
    pub mse: MseConfig,
    pub covariance_check: CovarianceCheckConfig,
    pub seed: u64,
    /// Worker threads; `None` uses all cores.
    pub threads: Option<usize>,
    pub output: OutputConfig,
}

/// `ln(0.235^2)`, the flat initial log forward variance of all presets.
pub fn x0_reference() -> f64 {
    (0.235f64 * 0.235).ln()
}

/// Reference price of the H = 0.3, T = 0.25 setup and its half-width.
pub const REFERENCE_A: (f64, f64) = (0.130_937_42, 5e-8);
/// Reference price of the H = 0.1, T = 0.5 setup and its half-width.
pub const REFERENCE_B: (f64, f64) = (0.121_971, 6e-7);

impl RunConfig {
    /// Built-in defaults (the H = 0.1, T = 0.5 setup with desk-scale protocols).
    pub fn defaults(command: Command) -> Self {
        Self {
            command,
            preset: None,
            paper_scale: false,
            model: ModelParams::flat(0.1, 0.5, 0.5, 1.0 / 12.0, x0_reference()).expect("valid defaults"),
            x0_source: None,
            scheme: SchemeKind::Rectangle,
            payoff: Payoff::Call { strike: 0.1 },
            estimator: EstimatorConfig {
                kind: EstimatorKind::Mc,
                n: 100,
                m: 10_000,
                use_cv: false,
                epsilon: 0.01,
                n0: 6,
                plan_mode: PlanMode::Auto,
            },
            strong: StrongConfig { n_values: vec![4, 8, 16, 32, 64, 128], n_ref: 512, m: 20_000 },
            weak: WeakConfig {
                n_values: (5..=14).collect(),
                m: 1_000_000,
                reference_price: REFERENCE_A.0,
                reference_ci: REFERENCE_A.1,
            },
            mse: MseConfig {
                families: vec![EstimatorFamily::McRect, EstimatorFamily::MlRect, EstimatorFamily::MlTrap],
                epsilons: vec![0.04, 0.02, 0.01, 0.005],
                n_mse: 100,
                reference_price: REFERENCE_B.0,
                reference_ci: REFERENCE_B.1,
            },
            covariance_check: CovarianceCheckConfig { pairs: 100, h_min: 0.05, h_max: 0.45 },
            seed: 20_240_601,
            threads: None,
            output: OutputConfig { dir: None, format: OutputFormat::Csv },
        }
    }

    /// Defaults with a preset applied.
    pub fn from_preset(command: Command, preset: Preset, paper_scale: bool) -> Self {
        let mut c = Self::defaults(command);
        c.preset = Some(preset);
        c.paper_scale = paper_scale;
        let x0 = x0_reference();
        match preset {
            Preset::Fig1 | Preset::Fig1H02 | Preset::Fig1H03 => {
                let h = match preset {
                    Preset::Fig1 => 0.1,
                    Preset::Fig1H02 => 0.2,
                    _ => 0.3,
                };
                c.model = ModelParams::flat(h, 0.5, 0.5, 1.0 / 12.0, x0).expect("valid preset");
                if paper_scale {
                    c.strong = StrongConfig { n_values: vec![10, 20, 40, 80, 125, 250, 500], n_ref: 2000, m: 100_000 };
                }
            }
            Preset::Fig2 => {
                c.model = ModelParams::flat(0.3, 0.5, 0.25, 1.0 / 12.0, x0).expect("valid preset");
                c.estimator.n = 400;
                c.estimator.m = if paper_scale { 3_000_000 } else { 100_000 };
                c.estimator.use_cv = true;
                c.weak.reference_price = REFERENCE_A.0;
                c.weak.reference_ci = REFERENCE_A.1;
                if paper_scale {
                    c.weak.m = 4_000_000;
                }
            }
            Preset::Fig3 => {
                c.model = ModelParams::flat(0.1, 0.5, 0.5, 1.0 / 12.0, x0).expect("valid preset");
                c.estimator.n = if paper_scale { 500 } else { 250 };
                c.estimator.m = if paper_scale { 10_000_000 } else { 200_000 };
                c.estimator.use_cv = true;
                c.estimator.n0 = 6;
                c.mse.reference_price = REFERENCE_B.0;
                c.mse.reference_ci = REFERENCE_B.1;
                if paper_scale {
                    c.mse.n_mse = 400;
                }
            }
        }
        c
    }

    /// Every violated constraint for the selected command, reported together.
    pub fn validate(&self) -> Result<()> {
        let mut errs = self.model.problems();
        errs.extend(self.payoff.problems());
        if self.threads == Some(0) {
            errs.push("threads: must be at least 1".into());
        }
        let lambda_problems = |errs: &mut Vec<String>| {
            if self.estimator.plan_mode != PlanMode::Lambda {
                return;
            }
            if !(self.model.h > 0.0 && self.model.h < 0.5) {
                errs.push(format!(
                    "h: H={} violates the Lambda hypothesis 0 < H < 1/2; use --plan-mode pilot or auto",
                    self.model.h
                ));
            }
            if self.model.x0.constant_value().is_none() {
                errs.push("x0: Lambda needs a flat initial curve; use --plan-mode pilot or auto".into());
            }
            if !matches!(self.payoff, Payoff::Call { .. }) {
                errs.push(format!(
                    "payoff: the {} has no Lipschitz constant in VIX^2; use --plan-mode pilot or auto",
                    self.payoff.tag()
                ));
            }
        };
        let est = &self.estimator;
        match self.command {
            Command::Price => match est.kind {
                EstimatorKind::Mc => {
                    if est.n == 0 {
                        errs.push("n: grid size must be at least 1".into());
                    }
                    if est.m < 2 {
                        errs.push(format!("m: need at least 2 samples, got {}", est.m));
                    }
                }
                EstimatorKind::Mlmc => {
                    if !(est.epsilon > 0.0 && est.epsilon.is_finite()) {
                        errs.push(format!("epsilon: must be positive for mlmc, got {}", est.epsilon));
                    }
                    if est.n0 == 0 {
                        errs.push("n0: base grid size must be at least 1".into());
                    }
                    if est.use_cv {
                        errs.push("cv: the control variate is only available for plain mc".into());
                    }
                    lambda_problems(&mut errs);
                }
            },
            Command::StrongError => {
                let s = &self.strong;
                if s.n_ref == 0 {
                    errs.push("n_ref: must be at least 1".into());
                }
                for &n in &s.n_values {
                    if n == 0 || (s.n_ref > 0 && !s.n_ref.is_multiple_of(n)) {
                        errs.push(format!("n_values: n={n} does not divide n_ref={}", s.n_ref));
                    }
                }
                if s.n_values.is_empty() {
                    errs.push("n_values: at least one grid size is required".into());
                }
                if s.m < 1000 {
                    errs.push(format!("m: strong error needs M >= 1000, got {}", s.m));
                }
            }
            Command::WeakError => {
                let w = &self.weak;
                if w.n_values.is_empty() || w.n_values.contains(&0) {
                    errs.push("n_values: grid sizes must be positive and non-empty".into());
                }
                if w.m < 2 {
                    errs.push(format!("m: need at least 2 samples, got {}", w.m));
                }
                if !(w.reference_price.is_finite() && w.reference_ci >= 0.0) {
                    errs.push("reference: price must be finite and its half-width nonnegative".into());
                }
            }
            Command::MseCost => {
                let m = &self.mse;
                if m.families.is_empty() {
                    errs.push("families: at least one estimator family is required".into());
                }
                if m.epsilons.is_empty() || m.epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                    errs.push("epsilons: need a non-empty list of positive accuracies".into());
                }
                if m.n_mse < 2 {
                    errs.push(format!("n_mse: need at least 2 replications, got {}", m.n_mse));
                }
                if est.n0 == 0 {
                    errs.push("n0: base grid size must be at least 1".into());
                }
                if m.families.iter().any(|f| *f != EstimatorFamily::McRect) {
                    lambda_problems(&mut errs);
                }
            }
            Command::CovarianceCheck => {
                let c = &self.covariance_check;
                if c.pairs == 0 {
                    errs.push("pairs: must be at least 1".into());
                }
                if !(c.h_min > 0.0 && c.h_max < 1.0 && c.h_min <= c.h_max) {
                    errs.push(format!("h range: [{}, {}] must lie inside (0, 1)", c.h_min, c.h_max));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(errs))
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "vix-mlmc", version, about = "VIX option pricing under rough Bergomi with plain and multilevel Monte Carlo")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Price one option with plain or multilevel Monte Carlo.
    Price(Overrides),
    /// L² strong error of a scheme against a fine reference grid.
    StrongError(Overrides),
    /// Weak error of the control-variate price against a reference price.
    WeakError(Overrides),
    /// MSE versus cost of plain and multilevel estimators.
    MseCost(Overrides),
    /// Closed-form covariance against adaptive quadrature on random pairs.
    CovarianceCheck(Overrides),
}

impl CliCommand {
    fn split(self) -> (Command, Overrides) {
        match self {
            CliCommand::Price(o) => (Command::Price, o),
            CliCommand::StrongError(o) => (Command::StrongError, o),
            CliCommand::WeakError(o) => (Command::WeakError, o),
            CliCommand::MseCost(o) => (Command::MseCost, o),
            CliCommand::CovarianceCheck(o) => (Command::CovarianceCheck, o),
        }
    }
}

/// Flags; each one overrides the config file and preset.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML config file (same layout as the manifest's `config`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Use the full-size protocols of the preset.
    #[arg(long)]
    pub paper_scale: bool,
    /// Hurst index.
    #[arg(long = "hurst", visible_alias = "H", allow_negative_numbers = true)]
    pub h: Option<f64>,
    /// Vol-of-vol.
    #[arg(long, allow_negative_numbers = true)]
    pub eta: Option<f64>,
    /// Maturity in years.
    #[arg(long = "maturity", visible_alias = "T", allow_negative_numbers = true)]
    pub t: Option<f64>,
    /// VIX window in years.
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    /// Flat initial log forward variance.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "x0_csv")]
    pub x0: Option<f64>,
    /// Two-column CSV `(u, X0)` with a header row.
    #[arg(long)]
    pub x0_csv: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Interpolation::PiecewiseConstant)]
    pub x0_interp: Interpolation,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeKind>,
    #[arg(long, value_enum)]
    pub payoff: Option<PayoffKind>,
    /// Strike in volatility units.
    #[arg(long, allow_negative_numbers = true)]
    pub kappa: Option<f64>,
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorKind>,
    /// Grid size for plain MC.
    #[arg(long)]
    pub n: Option<usize>,
    /// Sample count (price, strong-error and weak-error).
    #[arg(long = "M")]
    pub m: Option<u64>,
    /// Enable the control variate.
    #[arg(long, conflicts_with = "no_cv")]
    pub cv: bool,
    /// Disable the control variate.
    #[arg(long)]
    pub no_cv: bool,
    /// Target RMSE for mlmc.
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub n0: Option<usize>,
    #[arg(long, value_enum)]
    pub plan_mode: Option<PlanMode>,
    /// Comma-separated grid sizes (strong-error and weak-error).
    #[arg(long, value_delimiter = ',')]
    pub n_values: Option<Vec<usize>>,
    #[arg(long)]
    pub n_ref: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub reference_price: Option<f64>,
    #[arg(long)]
    pub reference_ci: Option<f64>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub families: Option<Vec<EstimatorFamily>>,
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    #[arg(long)]
    pub n_mse: Option<usize>,
    /// Number of random pairs for covariance-check.
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
}

/// Keys holding tagged enums; a patch replaces these wholesale when it names a variant.
const TAGGED_KEYS: [&str; 2] = ["payoff", "x0"];

/// Deep merge of `patch` into `base`.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let replace = TAGGED_KEYS.contains(&k.as_str()) && v.get("kind").is_some();
                match b.get_mut(&k) {
                    Some(slot) if v.is_object() && !replace => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set(patch: &mut Value, path: &[&str], v: Value) {
    let mut cur = patch;
    for key in &path[..path.len() - 1] {
        cur = cur.as_object_mut().expect("patch object").entry(*key).or_insert_with(|| json!({}));
    }
    cur.as_object_mut().expect("patch object").insert(path[path.len() - 1].to_string(), v);
}

impl Overrides {
    /// JSON patch holding only the flags that were given.
    fn patch(&self, command: Command, errs: &mut Vec<String>) -> Value {
        let mut p = json!({});
        let opt = |p: &mut Value, path: &[&str], v: Option<Value>| {
            if let Some(v) = v {
                set(p, path, v);
            }
        };
        opt(&mut p, &["model", "h"], self.h.map(|v| json!(v)));
        opt(&mut p, &["model", "eta"], self.eta.map(|v| json!(v)));
        opt(&mut p, &["model", "t"], self.t.map(|v| json!(v)));
        opt(&mut p, &["model", "delta"], self.delta.map(|v| json!(v)));
        if let Some(x0) = self.x0 {
            set(&mut p, &["model", "x0"], json!({ "kind": "constant", "value": x0 }));
            set(&mut p, &["x0_source"], Value::Null);
        }
        if let Some(path) = &self.x0_csv {
            set(&mut p, &["x0_source"], json!({ "path": path, "interpolation": self.x0_interp }));
        }
        opt(&mut p, &["scheme"], self.scheme.map(|v| json!(v)));
        match (self.payoff, self.kappa) {
            (Some(PayoffKind::Future), Some(_)) => errs.push("kappa: the future payoff takes no strike".into()),
            (Some(PayoffKind::Future), None) => set(&mut p, &["payoff"], json!({ "kind": "future" })),
            (Some(kind), Some(k)) => set(&mut p, &["payoff"], json!({ "kind": kind, "strike": k })),
            (Some(kind), None) => errs.push(format!("kappa: missing strike for the {} payoff", json!(kind))),
            (None, Some(k)) => set(&mut p, &["payoff", "strike"], json!(k)),
            (None, None) => {}
        }
        opt(&mut p, &["estimator", "kind"], self.estimator.map(|v| json!(v)));
        opt(&mut p, &["estimator", "n"], self.n.map(|v| json!(v)));
        if self.cv {
            set(&mut p, &["estimator", "use_cv"], json!(true));
        }
        if self.no_cv {
            set(&mut p, &["estimator", "use_cv"], json!(false));
        }
        opt(&mut p, &["estimator", "epsilon"], self.epsilon.map(|v| json!(v)));
        opt(&mut p, &["estimator", "n0"], self.n0.map(|v| json!(v)));
        opt(&mut p, &["estimator", "plan_mode"], self.plan_mode.map(|v| json!(v)));
        let section = match command {
            Command::StrongError => Some("strong"),
            Command::WeakError => Some("weak"),
            _ => None,
        };
        if let Some(m) = self.m {
            match command {
                Command::Price => set(&mut p, &["estimator", "m"], json!(m)),
                Command::StrongError | Command::WeakError => set(&mut p, &[section.unwrap(), "m"], json!(m)),
                _ => errs.push(format!("M: not used by {}", command.name())),
            }
        }
        if let Some(v) = &self.n_values {
            match section {
                Some(s) => set(&mut p, &[s, "n_values"], json!(v)),
                None => errs.push(format!("n_values: not used by {}", command.name())),
            }
        }
        opt(&mut p, &["strong", "n_ref"], self.n_ref.map(|v| json!(v)));
        let reference_section = if command == Command::MseCost { "mse" } else { "weak" };
        opt(&mut p, &[reference_section, "reference_price"], self.reference_price.map(|v| json!(v)));
        opt(&mut p, &[reference_section, "reference_ci"], self.reference_ci.map(|v| json!(v)));
        opt(&mut p, &["mse", "families"], self.families.as_ref().map(|v| json!(v)));
        opt(&mut p, &["mse", "epsilons"], self.epsilons.as_ref().map(|v| json!(v)));
        opt(&mut p, &["mse", "n_mse"], self.n_mse.map(|v| json!(v)));
        opt(&mut p, &["covariance_check", "pairs"], self.pairs.map(|v| json!(v)));
        opt(&mut p, &["seed"], self.seed.map(|v| json!(v)));
        opt(&mut p, &["threads"], self.threads.map(|v| json!(v)));
        opt(&mut p, &["output", "dir"], self.output_dir.as_ref().map(|v| json!(v)));
        opt(&mut p, &["output", "format"], self.format.map(|v| json!(v)));
        p
    }
}

fn read_config_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {}", path.display(), e.message())))?;
    Ok(serde_json::to_value(table)?)
}

/// Layers defaults, preset, config file and flags into a validated configuration.
pub fn resolve(command: Command, flags: &Overrides) -> Result<RunConfig> {
    let file = match &flags.config {
        Some(path) => read_config_file(path)?,
        None => json!({}),
    };
    let preset = match flags.preset {
        Some(p) => Some(p),
        None => match file.get("preset") {
            Some(v) if !v.is_null() => Some(
                serde_json::from_value::<Preset>(v.clone())
                    .map_err(|e| Error::usage(format!("config preset: {e}")))?,
            ),
            _ => None,
        },
    };
    let paper_scale = flags.paper_scale || file.get("paper_scale").and_then(Value::as_bool).unwrap_or(false);
    let base = match preset {
        Some(p) => RunConfig::from_preset(command, p, paper_scale),
        None => RunConfig::defaults(command),
    };
    let mut errs = Vec::new();
    let patch = flags.patch(command, &mut errs);
    if !errs.is_empty() {
        return Err(Error::Invalid(errs));
    }
    let mut value = serde_json::to_value(&base)?;
    merge(&mut value, file);
    merge(&mut value, patch);
    set(&mut value, &["command"], json!(command));
    set(&mut value, &["preset"], json!(preset));
    set(&mut value, &["paper_scale"], json!(paper_scale));
    let mut config: RunConfig =
        serde_json::from_value(value).map_err(|e| Error::usage(format!("configuration: {e}")))?;
    if let Some(src) = &config.x0_source {
        config.model.x0 = ForwardCurve::from_csv(&src.path, src.interpolation)?;
    }
    config.validate()?;
    Ok(config)
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: String,
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    PathBuf::from(format!("{}.{ext}", stem.display()))
}

/// Writes one result (CSV or JSON) plus its manifest.
struct Writer<'a> {
    config: &'a RunConfig,
    dir: PathBuf,
    timestamp: String,
    files: Vec<PathBuf>,
    last_stem: Option<PathBuf>,
}

impl<'a> Writer<'a> {
    fn new(config: &'a RunConfig) -> Result<Self> {
        let dir = output::output_dir(config.output.dir.as_deref());
        std::fs::create_dir_all(&dir)?;
        Ok(Self { config, dir, timestamp: chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string(), files: Vec::new(), last_stem: None })
    }

    fn emit<T: Serialize>(&mut self, tag: &str, value: &T, csv: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        let stem = output::unique_stem(&self.dir, self.config.command.name(), tag, &self.timestamp);
        let path = match self.config.output.format {
            OutputFormat::Csv => {
                let p = with_ext(&stem, "csv");
                csv(&p)?;
                p
            }
            OutputFormat::Json => {
                let p = with_ext(&stem, "json");
                output::write_json(&p, value)?;
                p
            }
        };
        self.files.push(path);
        self.last_stem = Some(stem);
        Ok(())
    }

    fn finish(self, tag: &str, summary: String, details: Value, started: Instant) -> Result<RunOutcome> {
        let names = self.files.iter().map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned()).collect();
        let manifest = Manifest::new(self.config.command.name(), self.config.clone(), names, started.elapsed().as_secs_f64(), details)?;
        // A single result shares its stem with the manifest.
        let stem = match (&self.last_stem, self.files.len()) {
            (Some(stem), 1) => stem.clone(),
            _ => output::unique_stem(&self.dir, self.config.command.name(), tag, &self.timestamp),
        };
        let path = with_ext(&stem, "manifest.json");
        output::write_json(&path, &manifest)?;
        Ok(RunOutcome { summary, files: self.files, manifest: path })
    }
}

fn estimate_summary(label: &str, e: &Estimate, secs: f64) -> String {
    format!(
        "{label}: {:.9} ± {:.3e} (95%), cost {:.4e}, {:.2} s",
        e.value,
        Z95 * e.std_error,
        e.cost,
        secs
    )
}

/// Runs a validated configuration, writing its artifacts.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::usage(format!("threads: {e}")))?
            .install(|| run_inner(config)),
        None => run_inner(config),
    }
}

fn run_inner(config: &RunConfig) -> Result<RunOutcome> {
    let started = Instant::now();
    let mut w = Writer::new(config)?;
    let p = &config.model;
    match config.command {
        Command::Price => {
            let est = &config.estimator;
            let (label, e, plan) = match est.kind {
                EstimatorKind::Mc => {
                    let e = mc_price(config.scheme, est.n, est.m, &config.payoff, est.use_cv, p, config.seed)?;
                    let cv = if est.use_cv { " cv" } else { "" };
                    (format!("price[{} mc n={} M={}{cv}]", config.scheme, est.n, est.m), e, None)
                }
                EstimatorKind::Mlmc => {
                    let plan = plan_with_mode(est.plan_mode, est.epsilon, est.n0, config.scheme, &config.payoff, p, config.seed)?;
                    let e = mlmc_price(&plan, &config.payoff, p, config.seed)?;
                    (format!("price[{} mlmc eps={} L={} M0={}]", config.scheme, est.epsilon, plan.levels, plan.m0), e, Some(plan))
                }
            };
            let kind = if est.kind == EstimatorKind::Mc { "mc" } else { "mlmc" };
            let payoff = config.payoff;
            w.emit(config.scheme.tag(), &e, |path| output::write_price_csv(path, kind, &payoff, &e))?;
            let summary = estimate_summary(&label, &e, started.elapsed().as_secs_f64());
            w.finish(config.scheme.tag(), summary, json!({ "estimate": e, "plan": plan }), started)
        }
        Command::StrongError => {
            let s = &config.strong;
            let c = strong_error_curve(config.scheme, &s.n_values, s.n_ref, s.m, p, config.seed)?;
            w.emit(config.scheme.tag(), &c, |path| output::write_error_curve_csv(path, &c))?;
            let mut summary = format!(
                "strong-error[{} n_ref={} M={}]: slope {}",
                config.scheme,
                s.n_ref,
                s.m,
                c.fitted_slope().map_or("n/a".into(), |v| format!("{v:.4}"))
            );
            if let Some(r) = c.lambda_ratios() {
                summary.push_str(&format!(", error*n/Lambda at largest n {:.4}", r[r.len() - 1]));
            }
            summary.push_str(&format!(", {:.2} s", started.elapsed().as_secs_f64()));
            w.finish(config.scheme.tag(), summary, json!({ "curve": c }), started)
        }
        Command::WeakError => {
            let s = &config.weak;
            let c = weak_error_curve(config.scheme, &s.n_values, &config.payoff, s.reference_price, s.reference_ci, s.m, p, config.seed)?;
            w.emit(config.scheme.tag(), &c, |path| output::write_error_curve_csv(path, &c))?;
            let summary = format!(
                "weak-error[{} M={}]: slope {}, {:.2} s",
                config.scheme,
                s.m,
                c.fitted_slope().map_or("n/a".into(), |v| format!("{v:.4}")),
                started.elapsed().as_secs_f64()
            );
            w.finish(config.scheme.tag(), summary, json!({ "curve": c }), started)
        }
        Command::MseCost => {
            let m = &config.mse;
            let settings = MseCostSettings {
                n_mse: m.n_mse,
                reference_price: m.reference_price,
                n0: config.estimator.n0,
                plan_mode: config.estimator.plan_mode,
                seed: config.seed,
            };
            let mut parts = Vec::new();
            let mut curves = Vec::new();
            for &family in &m.families {
                let c = mse_cost_curve(family, &m.epsilons, &settings, p, &config.payoff)?;
                w.emit(family.tag(), &c, |path| output::write_mse_cost_csv(path, &c))?;
                parts.push(format!("{} slope {}", family.tag(), c.fit.map_or("n/a".into(), |f| format!("{:.4}", f.slope))));
                curves.push(c);
            }
            let summary = format!("mse-cost[N={}]: {}, {:.2} s", m.n_mse, parts.join("; "), started.elapsed().as_secs_f64());
            let tag = if m.families.len() == 1 { m.families[0].tag() } else { "all" };
            w.finish(tag, summary, json!({ "curves": curves }), started)
        }
        Command::CovarianceCheck => {
            let c = &config.covariance_check;
            let report = covariance_check(c.pairs, (c.h_min, c.h_max), config.seed)?;
            w.emit("hyp2f1", &report, |path| output::write_covariance_check_csv(path, &report))?;
            let ok = report.max_rel_deviation <= COVARIANCE_CHECK_TOL;
            let summary = format!(
                "covariance-check[{} pairs]: max relative deviation {:.3e} ({}), {:.2} s",
                c.pairs,
                report.max_rel_deviation,
                if ok { "within 1e-9" } else { "EXCEEDS 1e-9" },
                started.elapsed().as_secs_f64()
            );
            let max = report.max_rel_deviation;
            let outcome = w.finish("hyp2f1", summary, json!({ "max_rel_deviation": max, "pairs": c.pairs }), started)?;
            if ok {
                Ok(outcome)
            } else {
                Err(Error::numeric(format!("covariance check: max relative deviation {max:e} exceeds 1e-9")))
            }
        }
    }
}

/// Parses `args`, runs, prints the summary and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (command, flags) = cli.command.split();
    match resolve(command, &flags).and_then(|c| run(&c)) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
