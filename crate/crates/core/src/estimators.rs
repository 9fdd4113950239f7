//! Plain and multilevel Monte Carlo estimators, the strong-error constant
//! Lambda and the MLMC planner.
//!
//! Sampling is split into fixed batches of [`BATCH_SIZE`] draws, each on its
//! own stream keyed by `(level or grid size, batch index)`. Batches run in
//! parallel and their statistics are merged in batch order, so results do not
//! depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{lambda_integral, ModelParams};
use crate::payoff::{cv_corrected_payoff, cv_moments, cv_price, lipschitz_constant, Payoff};
use crate::rng::{Domain, Stream};
use crate::sampler::{prepared, PreparedGrid};
use crate::scheme::SchemeKind;

/// Draws per independent stream.
pub const BATCH_SIZE: u64 = 4096;

/// Streaming mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Welford {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(self, other: Welford) -> Welford {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let d = other.mean - self.mean;
        let w = other.count as f64 / count as f64;
        Welford {
            count,
            mean: self.mean + d * w,
            m2: self.m2 + other.m2 + d * d * self.count as f64 * w,
        }
    }

    /// Unbiased sample variance, zero for fewer than two draws.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Runs `m` draws in fixed batches; `f(batch, count)` produces per-batch statistics.
pub(crate) fn run_batched<S, F>(m: u64, f: F) -> Result<Vec<S>>
where
    S: Send,
    F: Fn(u64, u64) -> Result<S> + Sync,
{
    let batches = m.div_ceil(BATCH_SIZE);
    (0..batches)
        .into_par_iter()
        .map(|b| f(b, BATCH_SIZE.min(m - b * BATCH_SIZE)))
        .collect()
}

fn merged(parts: Vec<Welford>) -> Welford {
    parts.into_iter().fold(Welford::default(), Welford::merge)
}

/// A priced quantity with its sampling diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    /// Normalized cost, `sum_l M_l n_l^2`.
    pub cost: f64,
    /// Sample count per level (a single entry for plain MC).
    pub samples_used: Vec<u64>,
    /// Grid size per level.
    pub grid_sizes: Vec<usize>,
    /// Sample mean of the (corrected) payoff per level.
    pub level_means: Vec<f64>,
    /// Sample variance per level.
    pub level_variances: Vec<f64>,
    /// `|mean correction|` on the finest level, MLMC only.
    pub bias_proxy: Option<f64>,
    pub scheme: SchemeKind,
    pub cv_used: bool,
}

/// Plain Monte Carlo price with `m` draws on the `n`-step grid.
pub fn mc_price(
    scheme: SchemeKind,
    n: usize,
    m: u64,
    payoff: &Payoff,
    use_cv: bool,
    params: &ModelParams,
    seed: u64,
) -> Result<Estimate> {
    if n == 0 {
        return Err(Error::usage("mc: n must be at least 1"));
    }
    if m < 2 {
        return Err(Error::usage(format!("mc: need at least 2 samples, got {m}")));
    }
    let prep = prepared(params, n)?;
    let cv_n = if use_cv { Some(cv_price(payoff, &cv_moments(&prep.spec))?) } else { None };
    let parts = run_batched(m, |batch, count| {
        let mut stream = Stream::new(seed, Domain::Mc, n as u64, batch);
        let mut buf = Buffers::new(n);
        let mut acc = Welford::default();
        for _ in 0..count {
            buf.draw(&prep, &mut stream);
            let vix2 = scheme.from_exp(&buf.exps, 1);
            let y = match cv_n {
                Some(cv) => cv_corrected_payoff(payoff, vix2, buf.geometric_right(), cv),
                None => payoff.eval(vix2),
            };
            acc.push(y);
        }
        Ok(acc)
    })?;
    let w = merged(parts);
    Ok(Estimate {
        value: w.mean,
        std_error: w.std_error(),
        cost: (n * n) as f64 * m as f64,
        samples_used: vec![m],
        grid_sizes: vec![n],
        level_means: vec![w.mean],
        level_variances: vec![w.variance()],
        bias_proxy: None,
        scheme,
        cv_used: use_cv,
    })
}

/// Per-worker scratch space for one draw.
pub(crate) struct Buffers {
    g: Vec<f64>,
    pub(crate) x: Vec<f64>,
    pub(crate) exps: Vec<f64>,
}

impl Buffers {
    pub(crate) fn new(n: usize) -> Self {
        Self { g: vec![0.0; n + 1], x: vec![0.0; n + 1], exps: vec![0.0; n + 1] }
    }

    #[inline]
    pub(crate) fn draw(&mut self, prep: &PreparedGrid, stream: &mut Stream) {
        prep.draw_into(stream, &mut self.g, &mut self.x);
        for (e, x) in self.exps.iter_mut().zip(&self.x) {
            *e = x.exp();
        }
    }

    /// `exp` of the mean of `X` over the right points `1..=n`.
    #[inline]
    pub(crate) fn geometric_right(&self) -> f64 {
        let n = self.x.len() - 1;
        (self.x[1..].iter().sum::<f64>() / n as f64).exp()
    }
}

/// Leading constant of the rectangle scheme's L² strong error, `error ~ Lambda / n`.
///
/// Requires `0 < H < 1/2` and a flat initial curve.
pub fn lambda_constant(params: &ModelParams) -> Result<f64> {
    let x0 = params.x0.constant_value().ok_or_else(|| {
        Error::UnsupportedHypothesis("Lambda requires a constant initial forward variance curve".into())
    })?;
    if !(params.h > 0.0 && params.h < 0.5) {
        return Err(Error::UnsupportedHypothesis(format!(
            "Lambda requires 0 < H < 1/2 (got H={}); use pilot-estimated constants",
            params.h
        )));
    }
    let bracket = lambda_bracket(params)?;
    if bracket < -1e-12 {
        return Err(Error::numeric(format!("Lambda bracket is negative: {bracket:e}")));
    }
    Ok(0.5 * x0.exp() * bracket.max(0.0).sqrt())
}

/// `e^A + e^B - 2 e^D` written with `expm1` to avoid cancellation.
pub fn lambda_bracket(params: &ModelParams) -> Result<f64> {
    let (h, t, d) = (params.h, params.t, params.delta);
    let eta2 = params.eta * params.eta;
    let a = eta2 * t.powf(2.0 * h) / (2.0 * h);
    let b = eta2 * ((t + d).powf(2.0 * h) - d.powf(2.0 * h)) / (2.0 * h);
    let c = eta2 * lambda_integral(params)?;
    Ok(a.exp_m1() + b.exp_m1() - 2.0 * c.exp_m1())
}

/// Where the planner's constants came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantSource {
    /// Closed-form Lambda.
    Lambda,
    /// Estimated from pilot level statistics.
    Pilot,
    /// Levels and samples given explicitly.
    Fixed,
}

/// How the planner obtains `c1`, `c2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PlanMode {
    Lambda,
    Pilot,
    /// Lambda when its hypotheses hold, pilot otherwise.
    Auto,
}

/// Levels, grid sizes and sample counts of a multilevel estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlmcPlan {
    pub scheme: SchemeKind,
    pub epsilon: Option<f64>,
    pub n0: usize,
    /// Index of the finest level, `L`.
    pub levels: usize,
    pub m0: u64,
    pub n_levels: Vec<usize>,
    pub m_levels: Vec<u64>,
    pub lambda: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub constants: ConstantSource,
}

impl MlmcPlan {
    /// Plan with explicit `L` and `M0`; per-level counts follow the scheme's decay.
    pub fn fixed(scheme: SchemeKind, n0: usize, levels: usize, m0: u64, h: f64) -> Result<Self> {
        if n0 == 0 || m0 == 0 {
            return Err(Error::usage("mlmc plan: n0 and M0 must be positive"));
        }
        if levels > 30 {
            return Err(Error::usage(format!("mlmc plan: {levels} levels is unreasonable")));
        }
        let decay = match scheme {
            SchemeKind::Rectangle => 2.0,
            SchemeKind::Trapezoid => 2.0 + h,
        };
        Ok(Self {
            scheme,
            epsilon: None,
            n0,
            levels,
            m0,
            n_levels: (0..=levels).map(|l| n0 << l).collect(),
            m_levels: (0..=levels).map(|l| ((m0 as f64) * (-decay * l as f64).exp2()).ceil().max(1.0) as u64).collect(),
            lambda: None,
            c1: None,
            c2: None,
            constants: ConstantSource::Fixed,
        })
    }

    /// `L = ceil(log2(sqrt2 c1 / eps))`, `M0 = ceil(2 eps^-2 c2 (L+1))`.
    pub fn from_constants(scheme: SchemeKind, epsilon: f64, n0: usize, c1: f64, c2: f64, h: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::usage(format!("mlmc plan: epsilon must be positive, got {epsilon}")));
        }
        if !(c1 >= 0.0 && c2 >= 0.0 && c1.is_finite() && c2.is_finite()) {
            return Err(Error::numeric(format!("mlmc plan: invalid constants c1={c1}, c2={c2}")));
        }
        let ratio = std::f64::consts::SQRT_2 * c1 / epsilon;
        let levels = if ratio > 1.0 { (ratio.ln() / std::f64::consts::LN_2).ceil() as usize } else { 0 };
        let m0 = (2.0 * c2 * (levels + 1) as f64 / (epsilon * epsilon)).ceil().max(1.0) as u64;
        let mut plan = Self::fixed(scheme, n0, levels, m0, h)?;
        plan.epsilon = Some(epsilon);
        plan.c1 = Some(c1);
        plan.c2 = Some(c2);
        Ok(plan)
    }

    /// Normalized cost `sum_l M_l n_l^2`.
    pub fn cost(&self) -> f64 {
        self.n_levels.iter().zip(&self.m_levels).map(|(&n, &m)| (n * n) as f64 * m as f64).sum()
    }
}

/// Plan from the closed-form constants `c1 = L_phi Lambda / n0`, `c2 = 10 L_phi^2 Lambda^2 / n0^2`.
///
/// The trapezoid reuses the rectangle's `(L, M0)` with its own level decay.
pub fn mlmc_plan(epsilon: f64, n0: usize, scheme: SchemeKind, payoff: &Payoff, params: &ModelParams) -> Result<MlmcPlan> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::usage(format!("mlmc plan: epsilon must be positive, got {epsilon}")));
    }
    if n0 == 0 {
        return Err(Error::usage("mlmc plan: n0 must be positive"));
    }
    let lphi = lipschitz_constant(payoff)?;
    let lambda = lambda_constant(params)?;
    let c1 = lphi * lambda / n0 as f64;
    let c2 = 10.0 * (lphi * lambda / n0 as f64).powi(2);
    let mut plan = MlmcPlan::from_constants(scheme, epsilon, n0, c1, c2, params.h)?;
    plan.lambda = Some(lambda);
    plan.constants = ConstantSource::Lambda;
    Ok(plan)
}

/// Levels probed when estimating constants from pilot runs.
pub const PILOT_LEVELS: usize = 4;

/// Plan from pilot level statistics: `c2 = max_l V_l 4^l`, `c1 = max_{l>=1} |E[P_l - P_{l-1}]| 2^l`.
pub fn mlmc_plan_pilot(
    epsilon: f64,
    n0: usize,
    scheme: SchemeKind,
    payoff: &Payoff,
    params: &ModelParams,
    probe_m: u64,
    seed: u64,
) -> Result<MlmcPlan> {
    let probe = MlmcPlan::fixed(scheme, n0, PILOT_LEVELS, 1, params.h)?;
    let stats = level_statistics_in(&probe, payoff, params, probe_m, seed, Domain::Pilot)?;
    let c2 = stats.iter().map(|s| s.variance * (2.0 * s.level as f64).exp2()).fold(0.0, f64::max);
    let c1 = stats.iter().skip(1).map(|s| s.mean_correction.abs() * (s.level as f64).exp2()).fold(0.0, f64::max);
    let mut plan = MlmcPlan::from_constants(scheme, epsilon, n0, c1, c2, params.h)?;
    plan.constants = ConstantSource::Pilot;
    Ok(plan)
}

/// Dispatches on the plan mode; `Auto` falls back to pilot constants when Lambda is unavailable.
pub fn plan_with_mode(
    mode: PlanMode,
    epsilon: f64,
    n0: usize,
    scheme: SchemeKind,
    payoff: &Payoff,
    params: &ModelParams,
    seed: u64,
) -> Result<MlmcPlan> {
    match mode {
        PlanMode::Lambda => mlmc_plan(epsilon, n0, scheme, payoff, params),
        PlanMode::Pilot => mlmc_plan_pilot(epsilon, n0, scheme, payoff, params, PILOT_PROBE_M, seed),
        PlanMode::Auto => match mlmc_plan(epsilon, n0, scheme, payoff, params) {
            Err(Error::UnsupportedHypothesis(_)) => {
                mlmc_plan_pilot(epsilon, n0, scheme, payoff, params, PILOT_PROBE_M, seed)
            }
            other => other,
        },
    }
}

/// Pilot sample size per level.
pub const PILOT_PROBE_M: u64 = 10_000;

/// Welford statistics of `P_l - P_{l-1}` (or `P_0`) on one level.
#[allow(clippy::too_many_arguments)]
fn level_welford(
    scheme: SchemeKind,
    payoff: &Payoff,
    params: &ModelParams,
    level: usize,
    n: usize,
    m: u64,
    seed: u64,
    domain: Domain,
) -> Result<Welford> {
    if level > 0 && !n.is_multiple_of(2) {
        return Err(Error::usage(format!("level {level}: grid size {n} is odd")));
    }
    let prep = prepared(params, n)?;
    let parts = run_batched(m, |batch, count| {
        let mut stream = Stream::new(seed, domain, level as u64, batch);
        let mut buf = Buffers::new(n);
        let mut acc = Welford::default();
        for _ in 0..count {
            buf.draw(&prep, &mut stream);
            let fine = payoff.eval(scheme.from_exp(&buf.exps, 1));
            let y = if level == 0 { fine } else { fine - payoff.eval(scheme.from_exp(&buf.exps, 2)) };
            acc.push(y);
        }
        Ok(acc)
    })?;
    Ok(merged(parts))
}

/// Multilevel estimator: level 0 on `n0`, corrections on coupled fine/coarse draws.
pub fn mlmc_price(plan: &MlmcPlan, payoff: &Payoff, params: &ModelParams, seed: u64) -> Result<Estimate> {
    let mut value = 0.0;
    let mut var = 0.0;
    let mut means = Vec::with_capacity(plan.levels + 1);
    let mut variances = Vec::with_capacity(plan.levels + 1);
    for l in 0..=plan.levels {
        let w = level_welford(plan.scheme, payoff, params, l, plan.n_levels[l], plan.m_levels[l], seed, Domain::Mlmc)?;
        value += w.mean;
        var += w.variance() / w.count as f64;
        means.push(w.mean);
        variances.push(w.variance());
    }
    Ok(Estimate {
        value,
        std_error: var.sqrt(),
        cost: plan.cost(),
        samples_used: plan.m_levels.clone(),
        grid_sizes: plan.n_levels.clone(),
        bias_proxy: (plan.levels > 0).then(|| means[plan.levels].abs()),
        level_means: means,
        level_variances: variances,
        scheme: plan.scheme,
        cv_used: false,
    })
}

/// Empirical statistics of one level's correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelStat {
    pub level: usize,
    pub n: usize,
    /// Sample variance of `P_l - P_{l-1}` (of `P_0` on level 0).
    pub variance: f64,
    pub mean_correction: f64,
    pub mean_std_error: f64,
    /// Normalized cost of one draw, `n_l^2`.
    pub cost_per_sample: f64,
}

/// Probes every level of `plan` with `probe_m` coupled draws.
pub fn level_statistics(plan: &MlmcPlan, payoff: &Payoff, params: &ModelParams, probe_m: u64, seed: u64) -> Result<Vec<LevelStat>> {
    level_statistics_in(plan, payoff, params, probe_m, seed, Domain::LevelProbe)
}

fn level_statistics_in(
    plan: &MlmcPlan,
    payoff: &Payoff,
    params: &ModelParams,
    probe_m: u64,
    seed: u64,
    domain: Domain,
) -> Result<Vec<LevelStat>> {
    if probe_m < 100 {
        return Err(Error::usage(format!("level statistics need probe_m >= 100, got {probe_m}")));
    }
    (0..=plan.levels)
        .map(|l| {
            let n = plan.n_levels[l];
            let w = level_welford(plan.scheme, payoff, params, l, n, probe_m, seed, domain)?;
            Ok(LevelStat {
                level: l,
                n,
                variance: w.variance(),
                mean_correction: w.mean,
                mean_std_error: w.std_error(),
                cost_per_sample: (n * n) as f64,
            })
        })
        .collect()
}
