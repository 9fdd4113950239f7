//! Quadrature schemes mapping a Gaussian sample to a discretized VIX².

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::GaussianSample;
use crate::summation::NeumaierSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    /// Right-point rectangle rule.
    #[value(alias = "rect")]
    #[serde(alias = "rect")]
    Rectangle,
    /// Trapezoidal rule.
    #[value(alias = "trap")]
    #[serde(alias = "trap")]
    Trapezoid,
}

impl SchemeKind {
    /// Short tag used in file names.
    pub fn tag(self) -> &'static str {
        match self {
            SchemeKind::Rectangle => "rect",
            SchemeKind::Trapezoid => "trap",
        }
    }

    /// Scheme value from precomputed `exp(X_i)` on a fine grid, using every
    /// `stride`-th point (so the effective grid has `(len-1)/stride` steps).
    #[inline]
    pub fn from_exp(self, exps: &[f64], stride: usize) -> f64 {
        let n = (exps.len() - 1) / stride;
        let mut acc = NeumaierSum::new();
        match self {
            SchemeKind::Rectangle => {
                for k in 1..=n {
                    acc.add(exps[k * stride]);
                }
            }
            SchemeKind::Trapezoid => {
                acc.add(0.5 * exps[0]);
                for k in 1..n {
                    acc.add(exps[k * stride]);
                }
                acc.add(0.5 * exps[n * stride]);
            }
        }
        acc.value() / n as f64
    }

    pub fn vix2(self, sample: &GaussianSample) -> f64 {
        let exps: Vec<f64> = sample.values.iter().map(|x| x.exp()).collect();
        self.from_exp(&exps, 1)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// `(1/n) sum_{i=1..n} exp(X_i)`.
pub fn rectangle_vix2(sample: &GaussianSample) -> f64 {
    SchemeKind::Rectangle.vix2(sample)
}

/// `(1/2n) sum_{i=1..n} (exp(X_i) + exp(X_{i-1}))`.
pub fn trapezoid_vix2(sample: &GaussianSample) -> f64 {
    SchemeKind::Trapezoid.vix2(sample)
}

pub fn vix_from_vix2(v: f64) -> Result<f64> {
    if v < 0.0 || v.is_nan() {
        return Err(Error::usage(format!("VIX^2 must be nonnegative, got {v}")));
    }
    Ok(v.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(v: Vec<f64>) -> GaussianSample {
        GaussianSample::new(v).unwrap()
    }

    #[test]
    fn constant_integrand_is_exact() {
        let x0 = (0.235f64 * 0.235).ln();
        for n in [1, 2, 7, 50] {
            let s = sample(vec![x0; n + 1]);
            assert!((rectangle_vix2(&s) - x0.exp()).abs() <= 1e-16);
            assert!((trapezoid_vix2(&s) - x0.exp()).abs() <= 1e-16);
        }
    }

    #[test]
    fn single_step_values() {
        let s = sample(vec![5.0, 0.0]);
        assert_eq!(rectangle_vix2(&s), 1.0);
        assert_eq!(trapezoid_vix2(&s), 0.5 * (1.0 + 5f64.exp()));
    }

    #[test]
    fn trapezoid_is_average_of_left_and_right_rectangles() {
        let v = vec![-3.0, -2.5, -2.9, -3.3, -2.0];
        let s = sample(v.clone());
        let right = rectangle_vix2(&s);
        let left = v[..4].iter().map(|x| x.exp()).sum::<f64>() / 4.0;
        assert!((trapezoid_vix2(&s) - 0.5 * (left + right)).abs() < 1e-15);
    }

    #[test]
    fn strided_matches_restricted() {
        let v: Vec<f64> = (0..=12).map(|i| -3.0 + 0.1 * (i as f64).sin()).collect();
        let exps: Vec<f64> = v.iter().map(|x| x.exp()).collect();
        let coarse = sample(v.iter().step_by(3).copied().collect());
        for k in [SchemeKind::Rectangle, SchemeKind::Trapezoid] {
            assert_eq!(k.from_exp(&exps, 3), k.vix2(&coarse));
        }
    }

    #[test]
    fn vix_square_root() {
        assert!((vix_from_vix2(0.235 * 0.235).unwrap() - 0.235).abs() < 1e-16);
        assert_eq!(vix_from_vix2(0.0).unwrap(), 0.0);
        assert_eq!(vix_from_vix2(1.0).unwrap(), 1.0);
        assert!(vix_from_vix2(-1e-3).is_err());
    }

    #[test]
    fn names_round_trip() {
        assert_eq!(serde_json::to_string(&SchemeKind::Rectangle).unwrap(), "\"rectangle\"");
        assert_eq!(serde_json::from_str::<SchemeKind>("\"trap\"").unwrap(), SchemeKind::Trapezoid);
    }
}
