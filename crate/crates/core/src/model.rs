//! Rough Bergomi model parameters and the exact law of the log forward
//! variances `(X_T^u)` on a uniform grid over `[T, T + Delta]`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::quadrature::integrate;
use crate::special::hyp2f1;

/// Initial log forward variance curve `u -> X_0^u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForwardCurve {
    Constant { value: f64 },
    /// Left-continuous step function: `values[k]` on `(knots[k-1], knots[k]]`, flat outside.
    PiecewiseConstant { knots: Vec<f64>, values: Vec<f64> },
    /// Linear interpolation between knots, flat outside.
    Linear { knots: Vec<f64>, values: Vec<f64> },
}

/// Interpolation rule for tabulated curves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    #[default]
    PiecewiseConstant,
    Linear,
}

impl ForwardCurve {
    pub fn constant(value: f64) -> Self {
        ForwardCurve::Constant { value }
    }

    pub fn tabulated(knots: Vec<f64>, values: Vec<f64>, interpolation: Interpolation) -> Result<Self> {
        let curve = match interpolation {
            Interpolation::PiecewiseConstant => ForwardCurve::PiecewiseConstant { knots, values },
            Interpolation::Linear => ForwardCurve::Linear { knots, values },
        };
        let problems = curve.problems();
        if problems.is_empty() {
            Ok(curve)
        } else {
            Err(Error::Invalid(problems))
        }
    }

    /// Reads a two-column CSV `(u, X0)` with a header row.
    pub fn from_csv(path: &Path, interpolation: Interpolation) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
        let (mut knots, mut values) = (Vec::new(), Vec::new());
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != 2 {
                return Err(Error::Parse(format!(
                    "{}: data row {} has {} columns, expected 2 (u, X0)",
                    path.display(),
                    line + 1,
                    record.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| {
                    Error::Parse(format!("{}: data row {}: '{s}': {e}", path.display(), line + 1))
                })
            };
            knots.push(parse(&record[0])?);
            values.push(parse(&record[1])?);
        }
        Self::tabulated(knots, values, interpolation)
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            ForwardCurve::Constant { value } => *value,
            ForwardCurve::PiecewiseConstant { knots, values } => {
                let k = knots.partition_point(|&x| x < u);
                values[k.min(values.len() - 1)]
            }
            ForwardCurve::Linear { knots, values } => {
                let k = knots.partition_point(|&x| x < u);
                if k == 0 {
                    values[0]
                } else if k == knots.len() {
                    values[k - 1]
                } else {
                    let w = (u - knots[k - 1]) / (knots[k] - knots[k - 1]);
                    values[k - 1] + w * (values[k] - values[k - 1])
                }
            }
        }
    }

    /// The constant value if the curve is flat.
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            ForwardCurve::Constant { value } => Some(*value),
            ForwardCurve::PiecewiseConstant { values, .. } | ForwardCurve::Linear { values, .. } => {
                let first = *values.first()?;
                values.iter().all(|&v| v == first).then_some(first)
            }
        }
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            ForwardCurve::Constant { value } => {
                if !value.is_finite() {
                    out.push(format!("x0: constant value must be finite, got {value}"));
                }
            }
            ForwardCurve::PiecewiseConstant { knots, values } | ForwardCurve::Linear { knots, values } => {
                if knots.is_empty() {
                    out.push("x0: tabulated curve needs at least one point".into());
                }
                if knots.len() != values.len() {
                    out.push(format!("x0: {} knots but {} values", knots.len(), values.len()));
                }
                if knots.iter().chain(values).any(|v| !v.is_finite()) {
                    out.push("x0: tabulated curve contains non-finite entries".into());
                }
                if knots.windows(2).any(|w| w[1] <= w[0]) {
                    out.push("x0: knots must be strictly increasing".into());
                }
            }
        }
        out
    }
}

/// Rough Bergomi parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Hurst index in (0, 1).
    pub h: f64,
    /// Vol-of-vol, nonnegative.
    pub eta: f64,
    /// Option maturity in years.
    pub t: f64,
    /// VIX window in years.
    pub delta: f64,
    /// Initial log forward variance curve.
    pub x0: ForwardCurve,
}

impl ModelParams {
    pub fn new(h: f64, eta: f64, t: f64, delta: f64, x0: ForwardCurve) -> Result<Self> {
        let p = Self { h, eta, t, delta, x0 };
        let problems = p.problems();
        if problems.is_empty() {
            Ok(p)
        } else {
            Err(Error::Invalid(problems))
        }
    }

    /// Flat initial curve.
    pub fn flat(h: f64, eta: f64, t: f64, delta: f64, x0: f64) -> Result<Self> {
        Self::new(h, eta, t, delta, ForwardCurve::constant(x0))
    }

    /// Every violated invariant, one message per field.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.h > 0.0 && self.h < 1.0) {
            out.push(format!("h: Hurst index must lie in (0, 1), got {}", self.h));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            out.push(format!("eta: must be finite and nonnegative, got {}", self.eta));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            out.push(format!("t: maturity must be positive, got {}", self.t));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            out.push(format!("delta: window must be positive, got {}", self.delta));
        }
        out.extend(self.x0.problems());
        out
    }

    /// Stable textual key used for caches and factor provenance.
    pub fn cache_key(&self) -> String {
        serde_json::to_string(self).expect("model params serialize")
    }
}

/// Uniform grid `u_i = T + i Delta / n`, `i = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub t: f64,
    pub delta: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(t: f64, delta: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::usage("grid: n must be at least 1"));
        }
        if !(t > 0.0 && delta > 0.0 && t.is_finite() && delta.is_finite()) {
            return Err(Error::usage(format!("grid: need T > 0 and Delta > 0, got T={t}, Delta={delta}")));
        }
        Ok(Self { t, delta, n })
    }

    pub fn for_params(params: &ModelParams, n: usize) -> Result<Self> {
        Self::new(params.t, params.delta, n)
    }

    /// `u_i`; written as `T + (Delta i) / n` so even fine points equal coarse points bit for bit.
    #[inline]
    pub fn point(&self, i: usize) -> f64 {
        if i == self.n {
            self.t + self.delta
        } else {
            self.t + self.delta * i as f64 / self.n as f64
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.point(i)).collect()
    }

    pub fn step(&self) -> f64 {
        self.delta / self.n as f64
    }
}

/// Mean vector and covariance matrix of `(X_T^{u_i})_{i=0..n}`.
#[derive(Debug, Clone)]
pub struct GaussianSpec {
    pub grid: Grid,
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

impl GaussianSpec {
    pub fn new(params: &ModelParams, n: usize) -> Result<Self> {
        let grid = Grid::for_params(params, n)?;
        Ok(Self { grid, mean: mean_vector(&grid, params)?, cov: covariance_matrix(&grid, params)? })
    }
}

fn check_grid(grid: &Grid, params: &ModelParams) -> Result<()> {
    if grid.t != params.t || grid.delta != params.delta {
        return Err(Error::usage(format!(
            "grid [T={}, Delta={}] does not match model [T={}, Delta={}]",
            grid.t, grid.delta, params.t, params.delta
        )));
    }
    Ok(())
}

/// Power-law kernel `eta (u - s)^(H - 1/2)` for `s < u`.
pub fn kernel_eval(u: f64, s: f64, params: &ModelParams) -> Result<f64> {
    if s >= u {
        return Err(Error::usage(format!("kernel: need s < u, got s={s}, u={u}")));
    }
    Ok(params.eta * (u - s).powf(params.h - 0.5))
}

/// Variance of `X_T^u`: `eta^2 / (2H) (u^(2H) - (u-T)^(2H))`.
fn diagonal(u: f64, params: &ModelParams) -> f64 {
    let two_h = 2.0 * params.h;
    params.eta * params.eta / two_h * (u.powf(two_h) - (u - params.t).powf(two_h))
}

/// `mu(u_i) = X_0^{u_i} - Var(X_T^{u_i}) / 2`.
pub fn mean_vector(grid: &Grid, params: &ModelParams) -> Result<Vec<f64>> {
    check_grid(grid, params)?;
    Ok((0..=grid.n)
        .map(|i| {
            let u = grid.point(i);
            params.x0.eval(u) - 0.5 * diagonal(u, params)
        })
        .collect())
}

fn check_time(u: f64, params: &ModelParams) -> Result<()> {
    if !(u >= params.t && u.is_finite()) {
        return Err(Error::usage(format!("covariance: time {u} lies before maturity T={}", params.t)));
    }
    Ok(())
}

/// `Cov(X_T^{u_i}, X_T^{u_j}) = eta^2 int_0^T (u_i - s)^(H-1/2) (u_j - s)^(H-1/2) ds` in closed form.
///
/// Off the diagonal, with `u < v`, `d = v - u` and `a = H - 1/2`:
/// `eta^2 d^a / (a+1) [u^(a+1) F(-u/d) - (u-T)^(a+1) F(-(u-T)/d)]`,
/// `F = 2F1(1/2 - H, 1/2 + H; 3/2 + H; .)`.
pub fn covariance_entry(u_i: f64, u_j: f64, params: &ModelParams) -> Result<f64> {
    check_time(u_i, params)?;
    check_time(u_j, params)?;
    if params.eta == 0.0 {
        return Ok(0.0);
    }
    let (u, v) = if u_i <= u_j { (u_i, u_j) } else { (u_j, u_i) };
    if u == v {
        return Ok(diagonal(u, params));
    }
    let h = params.h;
    let a = h - 0.5;
    let d = v - u;
    let f = |x: f64| hyp2f1(0.5 - h, 0.5 + h, 1.5 + h, x);
    let near = u.powf(a + 1.0) * f(-u / d)?;
    let w = u - params.t;
    let far = if w > 0.0 { w.powf(a + 1.0) * f(-w / d)? } else { 0.0 };
    Ok(params.eta * params.eta * d.powf(a) / (a + 1.0) * (near - far))
}

/// Full `(n+1) x (n+1)` covariance matrix, one evaluation per unordered pair.
pub fn covariance_matrix(grid: &Grid, params: &ModelParams) -> Result<Matrix> {
    check_grid(grid, params)?;
    let dim = grid.n + 1;
    let pts = grid.points();
    let rows: Vec<Vec<f64>> = (0..dim)
        .into_par_iter()
        .map(|i| (i..dim).map(|j| covariance_entry(pts[i], pts[j], params)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let mut m = Matrix::zeros(dim);
    for (i, row) in rows.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            m.set(i, i + k, v);
            m.set(i + k, i, v);
        }
    }
    Ok(m)
}

const ORACLE_TOL: f64 = 1e-13;

/// Covariance by adaptive quadrature of the defining integral.
///
/// For `H < 1/2` the panel `[T/2, T]` is mapped by `s = T - tau^q` so the
/// endpoint singularity at `s = T` (present when `u_i = T`) becomes smooth:
/// `q = 1/(H + 1/2)`, or `q = 1/(2H)` when both times equal `T`.
pub fn covariance_quadrature_oracle(u_i: f64, u_j: f64, params: &ModelParams) -> Result<f64> {
    check_time(u_i, params)?;
    check_time(u_j, params)?;
    if params.eta == 0.0 {
        return Ok(0.0);
    }
    let (u, v) = if u_i <= u_j { (u_i, u_j) } else { (u_j, u_i) };
    let t = params.t;
    let a = params.h - 0.5;
    let eta2 = params.eta * params.eta;
    let plain = |s: f64| ((u - s) * (v - s)).powf(a);
    if a >= 0.0 {
        return Ok(eta2 * integrate(plain, 0.0, t, 0.0, ORACLE_TOL)?);
    }
    let half = 0.5 * t;
    let left = integrate(plain, 0.0, half, 0.0, ORACLE_TOL)?;
    let (wu, wv) = (u - t, v - t);
    let right = if wv == 0.0 {
        // (T - s)^(2a): substitution makes the integrand constant
        half.powf(2.0 * a + 1.0) / (2.0 * a + 1.0)
    } else {
        let q = 1.0 / (a + 1.0);
        let upper = half.powf(a + 1.0);
        let g = |tau: f64| {
            let r = tau.powf(q);
            if wu == 0.0 {
                q * (wv + r).powf(a)
            } else {
                q * tau.powf(q - 1.0) * ((wu + r) * (wv + r)).powf(a)
            }
        };
        integrate(g, 0.0, upper, 0.0, ORACLE_TOL)?
    };
    Ok(eta2 * (left + right))
}

/// `int_0^T t^(H-1/2) (Delta + t)^(H-1/2) dt`, via `t = tau^(1/(H+1/2))`.
pub fn lambda_integral(params: &ModelParams) -> Result<f64> {
    if !(params.h > 0.0 && params.h < 0.5) {
        return Err(Error::UnsupportedHypothesis(format!(
            "lambda integral requires 0 < H < 1/2, got H={}",
            params.h
        )));
    }
    let a = params.h - 0.5;
    let q = 1.0 / (a + 1.0);
    let delta = params.delta;
    integrate(|tau: f64| q * (delta + tau.powf(q)).powf(a), 0.0, params.t.powf(a + 1.0), 0.0, ORACLE_TOL)
}

/// Same integral without the substitution, for cross-checking.
pub fn lambda_integral_direct(params: &ModelParams) -> Result<f64> {
    let a = params.h - 0.5;
    let delta = params.delta;
    integrate(|t: f64| (t * (delta + t)).powf(a), 0.0, params.t, 1e-14, 1e-13)
}

/// Convenience: load a tabulated curve and attach it to otherwise flat parameters.
pub fn params_with_curve_file(
    h: f64,
    eta: f64,
    t: f64,
    delta: f64,
    path: &Path,
    interpolation: Interpolation,
) -> Result<ModelParams> {
    ModelParams::new(h, eta, t, delta, ForwardCurve::from_csv(path, interpolation)?)
}
