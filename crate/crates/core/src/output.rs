//! CSV tables, file naming and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::estimators::Estimate;
use crate::experiments::{CovarianceCheckReport, ErrorCurve, MseCostCurve};
use crate::payoff::Payoff;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "VIX_MLMC_OUTPUT_DIR";

/// Version of the manifest layout.
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Output directory: explicit setting, then the environment variable, then `.`.
pub fn output_dir(explicit: Option<&Path>) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")),
    }
}

/// `<dir>/<experiment>_<scheme>_<timestamp>` with a numeric suffix if taken.
pub fn unique_stem(dir: &Path, experiment: &str, scheme: &str, timestamp: &str) -> PathBuf {
    let base = format!("{experiment}_{scheme}_{timestamp}");
    let taken = |stem: &str| {
        ["csv", "json", "manifest.json"].iter().any(|ext| dir.join(format!("{stem}.{ext}")).exists())
    };
    let mut stem = base.clone();
    let mut k = 1;
    while taken(&stem) {
        stem = format!("{base}-{k}");
        k += 1;
    }
    dir.join(stem)
}

/// Lower-case hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_rows<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct PriceRow<'a> {
    estimator: &'a str,
    scheme: &'a str,
    payoff: &'a str,
    strike: Option<f64>,
    level: usize,
    n: usize,
    samples: u64,
    level_mean: f64,
    level_variance: f64,
    value: f64,
    std_error: f64,
    ci_halfwidth: f64,
    cost: f64,
    cv_used: bool,
}

/// One row per level (a single row for plain MC); totals repeat on every row.
pub fn write_price_csv(path: &Path, estimator: &str, payoff: &Payoff, e: &Estimate) -> Result<()> {
    let rows: Vec<PriceRow> = (0..e.grid_sizes.len())
        .map(|l| PriceRow {
            estimator,
            scheme: e.scheme.tag(),
            payoff: payoff.tag(),
            strike: payoff.strike(),
            level: l,
            n: e.grid_sizes[l],
            samples: e.samples_used[l],
            level_mean: e.level_means[l],
            level_variance: e.level_variances[l],
            value: e.value,
            std_error: e.std_error,
            ci_halfwidth: crate::experiments::Z95 * e.std_error,
            cost: e.cost,
            cv_used: e.cv_used,
        })
        .collect();
    write_rows(path, &rows)
}

#[derive(Serialize)]
struct ErrorRow<'a> {
    experiment: &'a str,
    scheme: &'a str,
    n: usize,
    n_ref: Option<usize>,
    m: u64,
    error: f64,
    ci_halfwidth: f64,
    ci_low: f64,
    ci_high: f64,
    estimate: Option<f64>,
    std_error: Option<f64>,
    reference_price: Option<f64>,
    lambda_over_n: Option<f64>,
}

pub fn write_error_curve_csv(path: &Path, c: &ErrorCurve) -> Result<()> {
    let rows: Vec<ErrorRow> = (0..c.n_values.len())
        .map(|k| ErrorRow {
            experiment: &c.protocol.experiment,
            scheme: c.protocol.scheme.tag(),
            n: c.n_values[k],
            n_ref: c.protocol.n_ref,
            m: c.protocol.m,
            error: c.errors[k],
            ci_halfwidth: c.ci_halfwidths[k],
            ci_low: (c.errors[k] - c.ci_halfwidths[k]).max(0.0),
            ci_high: c.errors[k] + c.ci_halfwidths[k],
            estimate: c.estimates.as_ref().map(|v| v[k]),
            std_error: c.std_errors.as_ref().map(|v| v[k]),
            reference_price: c.protocol.reference_price,
            lambda_over_n: c.lambda_over_n.as_ref().map(|v| v[k]),
        })
        .collect();
    write_rows(path, &rows)
}

#[derive(Serialize)]
struct MseRow<'a> {
    family: &'a str,
    epsilon: f64,
    n: usize,
    levels: usize,
    m0: u64,
    cost: f64,
    mse: f64,
    ci_halfwidth: f64,
    mse_over_eps2: f64,
    mean_estimate: f64,
    reference_price: f64,
    replications: usize,
}

pub fn write_mse_cost_csv(path: &Path, c: &MseCostCurve) -> Result<()> {
    let rows: Vec<MseRow> = c
        .rows
        .iter()
        .map(|r| MseRow {
            family: c.family.tag(),
            epsilon: r.epsilon,
            n: r.n,
            levels: r.levels,
            m0: r.m0,
            cost: r.cost,
            mse: r.mse,
            ci_halfwidth: r.ci_halfwidth,
            mse_over_eps2: r.mse / (r.epsilon * r.epsilon),
            mean_estimate: r.mean_estimate,
            reference_price: c.reference_price,
            replications: r.replications,
        })
        .collect();
    write_rows(path, &rows)
}

pub fn write_covariance_check_csv(path: &Path, r: &CovarianceCheckReport) -> Result<()> {
    write_rows(path, &r.pairs)
}

/// Manifest written next to every result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest<C> {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub experiment: String,
    pub created_utc: String,
    /// SHA-256 of the compact JSON encoding of `config`.
    pub config_sha256: String,
    pub config: C,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
    pub summary: serde_json::Value,
}

impl<C: Serialize> Manifest<C> {
    pub fn new(experiment: &str, config: C, outputs: Vec<String>, wall_clock_seconds: f64, summary: serde_json::Value) -> Result<Self> {
        let config_sha256 = sha256_hex(serde_json::to_string(&config)?.as_bytes());
        Ok(Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME").into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            experiment: experiment.into(),
            created_utc: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            config_sha256,
            config,
            outputs,
            wall_clock_seconds,
            summary,
        })
    }
}

pub fn read_manifest<C: for<'de> Deserialize<'de>>(path: &Path) -> Result<Manifest<C>> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
