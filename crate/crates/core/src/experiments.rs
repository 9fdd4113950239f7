//! Strong-error, weak-error and MSE-versus-cost studies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{lambda_constant, mc_price, mlmc_price, plan_with_mode, run_batched, Buffers, PlanMode, Welford};
use crate::model::{covariance_entry, covariance_quadrature_oracle, ModelParams};
use crate::payoff::Payoff;
use crate::rng::{derive_seed, mix, Domain, Stream};
use crate::sampler::prepared;
use crate::scheme::SchemeKind;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

impl LogLogFit {
    /// Fitted `y` at `x`.
    pub fn predict(&self, x: f64) -> f64 {
        (self.intercept + self.slope * x.ln()).exp()
    }
}

pub fn fit_loglog_slope(x: &[f64], y: &[f64]) -> Result<LogLogFit> {
    if x.len() != y.len() {
        return Err(Error::usage(format!("fit: {} x values but {} y values", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::usage(format!("fit: need at least 3 points, got {}", x.len())));
    }
    if x.iter().chain(y).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::usage("fit: all values must be positive and finite"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::usage("fit: x values are all equal"));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LogLogFit { slope, intercept: my - slope * mx, r2 })
}

/// Fit, or `None` when some error is exactly zero (for example a flat model).
fn try_fit(n: &[usize], errors: &[f64], burn_in: usize) -> Option<LogLogFit> {
    let x: Vec<f64> = n.iter().skip(burn_in).map(|&v| v as f64).collect();
    fit_loglog_slope(&x, &errors[burn_in.min(errors.len())..]).ok()
}

/// What was run, recorded alongside each curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub experiment: String,
    pub scheme: SchemeKind,
    pub m: u64,
    pub n_ref: Option<usize>,
    pub payoff: Option<Payoff>,
    pub reference_price: Option<f64>,
    pub reference_ci: Option<f64>,
    pub params: ModelParams,
    pub seed: u64,
}

/// Error estimates on a list of grid sizes with a log-log slope fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub n_values: Vec<usize>,
    pub errors: Vec<f64>,
    /// 95% half-widths.
    pub ci_halfwidths: Vec<f64>,
    /// Price estimate per point (weak error only).
    pub estimates: Option<Vec<f64>>,
    pub std_errors: Option<Vec<f64>>,
    /// `Lambda / n` for the rectangle scheme when Lambda is available.
    pub lambda_over_n: Option<Vec<f64>>,
    /// Number of leading points excluded from the fit.
    pub burn_in: usize,
    pub fit: Option<LogLogFit>,
    pub protocol: Protocol,
}

impl ErrorCurve {
    pub fn fitted_slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    /// Refits after dropping the first `burn_in` points.
    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self.fit = try_fit(&self.n_values, &self.errors, burn_in);
        self
    }

    /// `error * n / Lambda` per point, when Lambda is available.
    pub fn lambda_ratios(&self) -> Option<Vec<f64>> {
        let overlay = self.lambda_over_n.as_ref()?;
        Some(self.errors.iter().zip(overlay).map(|(e, l)| e / l).collect())
    }
}

fn check_divisors(n_values: &[usize], n_ref: usize) -> Result<()> {
    let bad: Vec<String> = n_values
        .iter()
        .filter(|&&n| n == 0 || !n_ref.is_multiple_of(n))
        .map(|n| format!("n={n} does not divide n_ref={n_ref}"))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Invalid(bad))
    }
}

/// L² strong error of each scheme against the `n_ref` reference, all schemes
/// and grid sizes sharing the same reference draws.
pub fn strong_error_curves(
    schemes: &[SchemeKind],
    n_values: &[usize],
    n_ref: usize,
    m: u64,
    params: &ModelParams,
    seed: u64,
) -> Result<Vec<ErrorCurve>> {
    check_divisors(n_values, n_ref)?;
    if m < 1000 {
        return Err(Error::usage(format!("strong error: need M >= 1000, got {m}")));
    }
    let prep = prepared(params, n_ref)?;
    let k = n_values.len();
    let parts = run_batched(m, |batch, count| {
        let mut stream = Stream::new(seed, Domain::StrongError, n_ref as u64, batch);
        let mut buf = Buffers::new(n_ref);
        let mut acc = vec![Welford::default(); schemes.len() * k];
        for _ in 0..count {
            buf.draw(&prep, &mut stream);
            for (s, scheme) in schemes.iter().enumerate() {
                let reference = scheme.from_exp(&buf.exps, 1);
                for (j, &n) in n_values.iter().enumerate() {
                    let d = reference - scheme.from_exp(&buf.exps, n_ref / n);
                    acc[s * k + j].push(d * d);
                }
            }
        }
        Ok(acc)
    })?;
    let totals = parts.into_iter().fold(vec![Welford::default(); schemes.len() * k], |a, b| {
        a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect()
    });
    let lambda = lambda_constant(params).ok();
    Ok(schemes
        .iter()
        .enumerate()
        .map(|(s, &scheme)| {
            let stats = &totals[s * k..(s + 1) * k];
            let errors: Vec<f64> = stats.iter().map(|w| w.mean.max(0.0).sqrt()).collect();
            let ci = stats
                .iter()
                .zip(&errors)
                .map(|(w, &e)| if e > 0.0 { Z95 * w.std_error() / (2.0 * e) } else { 0.0 })
                .collect();
            let overlay = match (scheme, lambda) {
                (SchemeKind::Rectangle, Some(l)) => Some(n_values.iter().map(|&n| l / n as f64).collect()),
                _ => None,
            };
            ErrorCurve {
                n_values: n_values.to_vec(),
                fit: try_fit(n_values, &errors, 0),
                errors,
                ci_halfwidths: ci,
                estimates: None,
                std_errors: None,
                lambda_over_n: overlay,
                burn_in: 0,
                protocol: Protocol {
                    experiment: "strong-error".into(),
                    scheme,
                    m,
                    n_ref: Some(n_ref),
                    payoff: None,
                    reference_price: None,
                    reference_ci: None,
                    params: params.clone(),
                    seed,
                },
            }
        })
        .collect())
}

/// Single-scheme strong error curve; every `n` must divide `n_ref`.
pub fn strong_error_curve(
    scheme: SchemeKind,
    n_values: &[usize],
    n_ref: usize,
    m: u64,
    params: &ModelParams,
    seed: u64,
) -> Result<ErrorCurve> {
    Ok(strong_error_curves(&[scheme], n_values, n_ref, m, params, seed)?.remove(0))
}

/// `|E_MC[price with control variate] - reference|` per grid size.
#[allow(clippy::too_many_arguments)]
pub fn weak_error_curve(
    scheme: SchemeKind,
    n_values: &[usize],
    payoff: &Payoff,
    reference_price: f64,
    reference_ci: f64,
    m: u64,
    params: &ModelParams,
    seed: u64,
) -> Result<ErrorCurve> {
    if n_values.is_empty() || n_values.contains(&0) {
        return Err(Error::usage("weak error: grid sizes must be positive"));
    }
    let mut estimates = Vec::new();
    let mut std_errors = Vec::new();
    for &n in n_values {
        let e = mc_price(scheme, n, m, payoff, true, params, seed)?;
        estimates.push(e.value);
        std_errors.push(e.std_error);
    }
    let errors: Vec<f64> = estimates.iter().map(|v| (v - reference_price).abs()).collect();
    let ci = std_errors.iter().map(|s| Z95 * s + reference_ci).collect();
    Ok(ErrorCurve {
        n_values: n_values.to_vec(),
        fit: try_fit(n_values, &errors, 0),
        errors,
        ci_halfwidths: ci,
        estimates: Some(estimates),
        std_errors: Some(std_errors),
        lambda_over_n: None,
        burn_in: 0,
        protocol: Protocol {
            experiment: "weak-error".into(),
            scheme,
            m,
            n_ref: None,
            payoff: Some(*payoff),
            reference_price: Some(reference_price),
            reference_ci: Some(reference_ci),
            params: params.clone(),
            seed,
        },
    })
}

/// Estimator families compared in the MSE-versus-cost study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorFamily {
    /// Plain Monte Carlo, rectangle scheme, `n = ceil(1/eps)`, `M = ceil(eps^-2)`.
    McRect,
    /// Multilevel, rectangle scheme.
    MlRect,
    /// Multilevel, trapezoidal scheme.
    MlTrap,
}

impl EstimatorFamily {
    pub fn tag(self) -> &'static str {
        match self {
            EstimatorFamily::McRect => "mc-rect",
            EstimatorFamily::MlRect => "ml-rect",
            EstimatorFamily::MlTrap => "ml-trap",
        }
    }

    pub fn scheme(self) -> SchemeKind {
        match self {
            EstimatorFamily::McRect | EstimatorFamily::MlRect => SchemeKind::Rectangle,
            EstimatorFamily::MlTrap => SchemeKind::Trapezoid,
        }
    }

    fn id(self) -> u64 {
        self as u64 + 1
    }
}

/// One target accuracy of the MSE-versus-cost study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseCostRow {
    pub epsilon: f64,
    /// Normalized cost of one estimator run.
    pub cost: f64,
    /// Empirical `mean((p_hat - p)^2)` over the replications.
    pub mse: f64,
    pub ci_halfwidth: f64,
    pub mean_estimate: f64,
    pub replications: usize,
    /// Plain MC grid size, or `n0` for multilevel.
    pub n: usize,
    /// Finest level index (0 for plain MC).
    pub levels: usize,
    /// Samples of plain MC, or `M0` for multilevel.
    pub m0: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseCostCurve {
    pub family: EstimatorFamily,
    pub rows: Vec<MseCostRow>,
    /// Fit of MSE against cost.
    pub fit: Option<LogLogFit>,
    pub reference_price: f64,
    pub payoff: Payoff,
    pub params: ModelParams,
    pub seed: u64,
}

/// Settings shared by every family of the MSE-versus-cost study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseCostSettings {
    pub n_mse: usize,
    pub reference_price: f64,
    pub n0: usize,
    pub plan_mode: PlanMode,
    pub seed: u64,
}

/// Replicates one estimator family `n_mse` times at each `eps`.
pub fn mse_cost_curve(
    family: EstimatorFamily,
    epsilons: &[f64],
    settings: &MseCostSettings,
    params: &ModelParams,
    payoff: &Payoff,
) -> Result<MseCostCurve> {
    if settings.n_mse < 2 {
        return Err(Error::usage(format!("mse-cost: need at least 2 replications, got {}", settings.n_mse)));
    }
    if let Some(e) = epsilons.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::usage(format!("mse-cost: epsilon must be positive, got {e}")));
    }
    let seed = settings.seed;
    let mut rows = Vec::with_capacity(epsilons.len());
    for (k, &eps) in epsilons.iter().enumerate() {
        let point_seed = mix(derive_seed(seed, Domain::Replication, family.id()), k as u64);
        let (values, cost, n, levels, m0): (Vec<f64>, f64, usize, usize, u64) = match family {
            EstimatorFamily::McRect => {
                let n = (1.0 / eps).ceil() as usize;
                let m = (1.0 / (eps * eps)).ceil().max(2.0) as u64;
                let values = (0..settings.n_mse as u64)
                    .into_par_iter()
                    .map(|j| {
                        mc_price(SchemeKind::Rectangle, n, m, payoff, false, params, mix(point_seed, j)).map(|e| e.value)
                    })
                    .collect::<Result<_>>()?;
                (values, (n * n) as f64 * m as f64, n, 0, m)
            }
            EstimatorFamily::MlRect | EstimatorFamily::MlTrap => {
                // the trapezoid reuses the rectangle's (L, M0) with its own level decay
                let base = plan_with_mode(settings.plan_mode, eps, settings.n0, SchemeKind::Rectangle, payoff, params, seed)?;
                let mut plan = crate::estimators::MlmcPlan::fixed(family.scheme(), base.n0, base.levels, base.m0, params.h)?;
                plan.epsilon = base.epsilon;
                plan.lambda = base.lambda;
                plan.c1 = base.c1;
                plan.c2 = base.c2;
                plan.constants = base.constants;
                let values = (0..settings.n_mse as u64)
                    .into_par_iter()
                    .map(|j| mlmc_price(&plan, payoff, params, mix(point_seed, j)).map(|e| e.value))
                    .collect::<Result<_>>()?;
                (values, plan.cost(), plan.n0, plan.levels, plan.m0)
            }
        };
        let mut sq = Welford::default();
        let mut mean = Welford::default();
        for v in &values {
            sq.push((v - settings.reference_price).powi(2));
            mean.push(*v);
        }
        rows.push(MseCostRow {
            epsilon: eps,
            cost,
            mse: sq.mean,
            ci_halfwidth: Z95 * sq.std_error(),
            mean_estimate: mean.mean,
            replications: values.len(),
            n,
            levels,
            m0,
        });
    }
    let costs: Vec<f64> = rows.iter().map(|r| r.cost).collect();
    let mses: Vec<f64> = rows.iter().map(|r| r.mse).collect();
    Ok(MseCostCurve {
        family,
        fit: fit_loglog_slope(&costs, &mses).ok(),
        rows,
        reference_price: settings.reference_price,
        payoff: *payoff,
        params: params.clone(),
        seed,
    })
}

/// One closed-form versus quadrature comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariancePair {
    pub u_i: f64,
    pub u_j: f64,
    pub h: f64,
    pub eta: f64,
    pub t: f64,
    pub delta: f64,
    pub closed_form: f64,
    pub oracle: f64,
    pub rel_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceCheckReport {
    pub pairs: Vec<CovariancePair>,
    pub max_rel_deviation: f64,
    pub seed: u64,
}

/// Compares the hypergeometric covariance with quadrature on random draws:
/// `H` uniform in `h_range`, `eta` in [0.1, 1.5], `T` in [0.05, 1],
/// `Delta` in [1/52, 1/4], times uniform in the window (one in ten pinned to `T`).
pub fn covariance_check(pairs: usize, h_range: (f64, f64), seed: u64) -> Result<CovarianceCheckReport> {
    let (lo, hi) = h_range;
    if !(lo > 0.0 && hi < 1.0 && lo <= hi) {
        return Err(Error::usage(format!("covariance check: H range [{lo}, {hi}] must lie inside (0, 1)")));
    }
    let mut stream = Stream::new(seed, Domain::CovarianceCheck, 0, 0);
    let mut out = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let h = lo + (hi - lo) * stream.uniform();
        let eta = 0.1 + 1.4 * stream.uniform();
        let t = 0.05 + 0.95 * stream.uniform();
        let delta = 1.0 / 52.0 + (0.25 - 1.0 / 52.0) * stream.uniform();
        let pin = stream.uniform() < 0.1;
        let u_i = if pin { t } else { t + delta * stream.uniform() };
        let u_j = t + delta * stream.uniform();
        let params = ModelParams::flat(h, eta, t, delta, 0.0)?;
        let closed_form = covariance_entry(u_i, u_j, &params)?;
        let oracle = covariance_quadrature_oracle(u_i, u_j, &params)?;
        let rel_deviation = ((closed_form - oracle) / oracle).abs();
        out.push(CovariancePair { u_i, u_j, h, eta, t, delta, closed_form, oracle, rel_deviation });
    }
    let max_rel_deviation = out.iter().map(|p| p.rel_deviation).fold(0.0, f64::max);
    Ok(CovarianceCheckReport { pairs: out, max_rel_deviation, seed })
}
