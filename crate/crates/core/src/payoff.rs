//! VIX option payoffs, Black–Scholes prices and the log-normal control variate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GaussianSpec;
use crate::special::norm_cdf;
use crate::summation::NeumaierSum;

/// Payoff as a function of VIX².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Payoff {
    /// `(sqrt(x) - strike)+`
    Call { strike: f64 },
    /// `(strike - sqrt(x))+`
    Put { strike: f64 },
    /// `sqrt(x)`
    Future,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OptionType {
    Call,
    Put,
}

impl Payoff {
    pub fn strike(&self) -> Option<f64> {
        match *self {
            Payoff::Call { strike } | Payoff::Put { strike } => Some(strike),
            Payoff::Future => None,
        }
    }

    pub fn problems(&self) -> Vec<String> {
        match self.strike() {
            Some(k) if !(k > 0.0 && k.is_finite()) => {
                vec![format!("kappa: strike must be positive and finite, got {k}")]
            }
            _ => Vec::new(),
        }
    }

    /// Payoff of a VIX² value.
    #[inline]
    pub fn eval(&self, vix2: f64) -> f64 {
        let vix = vix2.max(0.0).sqrt();
        match *self {
            Payoff::Call { strike } => (vix - strike).max(0.0),
            Payoff::Put { strike } => (strike - vix).max(0.0),
            Payoff::Future => vix,
        }
    }

    /// Short tag used in file names and tables.
    pub fn tag(&self) -> &'static str {
        match self {
            Payoff::Call { .. } => "call",
            Payoff::Put { .. } => "put",
            Payoff::Future => "future",
        }
    }
}

/// Lipschitz constant of the call as a function of VIX², `1/(2 strike)`.
///
/// The put `(strike - sqrt(x))+` has slope `1/(2 sqrt(x))` below `strike²`,
/// unbounded at 0, so it is rejected like the future.
pub fn lipschitz_constant(p: &Payoff) -> Result<f64> {
    match *p {
        Payoff::Call { strike } | Payoff::Put { strike } if strike <= 0.0 || strike.is_nan() => {
            Err(Error::usage("lipschitz constant needs a positive strike"))
        }
        Payoff::Call { strike } => Ok(0.5 / strike),
        Payoff::Put { .. } => Err(Error::UnsupportedHypothesis(
            "the put (strike - sqrt(x))+ is not Lipschitz in x near 0; use pilot constants".into(),
        )),
        Payoff::Future => Err(Error::UnsupportedHypothesis(
            "the future payoff sqrt(x) has no finite Lipschitz constant on [0, inf); use pilot constants".into(),
        )),
    }
}

/// Black–Scholes price with forward `x`, strike `y` and total volatility `z`.
pub fn black_scholes(kind: OptionType, x: f64, y: f64, z: f64) -> Result<f64> {
    if !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()) {
        return Err(Error::usage(format!("black-scholes: forward and strike must be positive, got x={x}, y={y}")));
    }
    if !(z >= 0.0 && z.is_finite()) {
        return Err(Error::usage(format!("black-scholes: total volatility must be nonnegative, got z={z}")));
    }
    if z == 0.0 {
        return Ok(match kind {
            OptionType::Call => (x - y).max(0.0),
            OptionType::Put => (y - x).max(0.0),
        });
    }
    let m = (x / y).ln() / z;
    let (d1, d2) = (m + 0.5 * z, m - 0.5 * z);
    Ok(match kind {
        OptionType::Call => x * norm_cdf(d1) - y * norm_cdf(d2),
        OptionType::Put => y * norm_cdf(-d2) - x * norm_cdf(-d1),
    })
}

/// Mean and standard deviation of `(1/n) sum_{i=1..n} X_T^{u_i}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvMoments {
    pub mu_n: f64,
    pub sigma_n: f64,
}

/// Exact control-variate moments over the right points `1..=n` of `spec`.
pub fn cv_moments(spec: &GaussianSpec) -> CvMoments {
    let n = spec.grid.n;
    let nf = n as f64;
    let mut mu = NeumaierSum::new();
    let mut var = NeumaierSum::new();
    for i in 1..=n {
        mu.add(spec.mean[i]);
        for j in 1..=n {
            var.add(spec.cov.get(i, j));
        }
    }
    CvMoments { mu_n: mu.value() / nf, sigma_n: (var.value().max(0.0)).sqrt() / nf }
}

/// Closed-form `E[phi(exp(Z))]` for `Z ~ N(mu_n, sigma_n^2)`.
pub fn cv_price(p: &Payoff, m: &CvMoments) -> Result<f64> {
    let forward = (0.5 * m.mu_n + m.sigma_n * m.sigma_n / 8.0).exp();
    let z = 0.5 * m.sigma_n;
    match *p {
        Payoff::Call { strike } => black_scholes(OptionType::Call, forward, strike, z),
        Payoff::Put { strike } => black_scholes(OptionType::Put, forward, strike, z),
        Payoff::Future => Ok(forward),
    }
}

/// `phi(scheme_value) - phi(cv_sample_value) + cv_n`, where `cv_sample_value`
/// is `exp` of the sample mean of `X` over the right points.
#[inline]
pub fn cv_corrected_payoff(p: &Payoff, scheme_value: f64, cv_sample_value: f64, cv_n: f64) -> f64 {
    p.eval(scheme_value) - p.eval(cv_sample_value) + cv_n
}
