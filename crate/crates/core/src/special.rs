//! Special functions: the Gauss hypergeometric function on the negative
//! half-line, the standard normal CDF and its inverse.

use crate::error::{Error, Result};

/// Cap on the number of series terms before reporting non-convergence.
const MAX_SERIES_TERMS: usize = 20_000;
/// Arguments below this use the `1/(1-x)` connection formula instead of the Pfaff series.
const CONNECTION_SWITCH: f64 = -2.0;

/// Gauss hypergeometric function `2F1(a, b; c; x)` for `x <= 0`.
///
/// On `[-2, 0]` the Pfaff transformation
/// `2F1(a,b;c;x) = (1-x)^(-a) 2F1(a, c-b; c; x/(x-1))` maps the argument into
/// `[0, 2/3]`, where the power series converges geometrically. Below `-2` the
/// series in `x/(x-1)` would need tens of thousands of terms (adjacent grid
/// points give `|x|` of order `n T / Delta`), so the linear transformation to
/// `1/(1-x)` is used instead. That transformation needs `b - a` non-integer; when
/// it is an integer the Pfaff series is summed anyway and may hit the term cap.
pub fn hyp2f1(a: f64, b: f64, c: f64, x: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && c.is_finite() && x.is_finite()) {
        return Err(Error::usage(format!("hyp2f1: non-finite input (a={a}, b={b}, c={c}, x={x})")));
    }
    if x > 0.0 {
        return Err(Error::usage(format!("hyp2f1: only x <= 0 is supported, got x={x}")));
    }
    if c <= 0.0 {
        return Err(Error::usage(format!("hyp2f1: c must be positive, got c={c}")));
    }
    if x == 0.0 || a == 0.0 || b == 0.0 {
        return Ok(1.0);
    }

    let integer_gap = (b - a).fract() == 0.0;
    if x >= CONNECTION_SWITCH || integer_gap {
        let z = x / (x - 1.0);
        let series = gauss_series(a, c - b, c, z).map_err(|k| non_convergence(a, b, c, x, k))?;
        return Ok((1.0 - x).powf(-a) * series);
    }

    let w = 1.0 / (1.0 - x);
    let gc = libm::tgamma(c);
    let coef_a = gc * libm::tgamma(b - a) * rgamma(b) * rgamma(c - a);
    let coef_b = gc * libm::tgamma(a - b) * rgamma(a) * rgamma(c - b);
    let mut total = 0.0;
    if coef_a != 0.0 {
        let s = gauss_series(a, c - b, a - b + 1.0, w).map_err(|k| non_convergence(a, b, c, x, k))?;
        total += coef_a * (1.0 - x).powf(-a) * s;
    }
    if coef_b != 0.0 {
        let s = gauss_series(b, c - a, b - a + 1.0, w).map_err(|k| non_convergence(a, b, c, x, k))?;
        total += coef_b * (1.0 - x).powf(-b) * s;
    }
    Ok(total)
}

fn non_convergence(a: f64, b: f64, c: f64, x: f64, terms: usize) -> Error {
    Error::numeric(format!(
        "hyp2f1(a={a}, b={b}, c={c}, x={x}) did not converge after {terms} terms"
    ))
}

/// Reciprocal gamma, zero at the poles.
fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x.fract() == 0.0 {
        0.0
    } else {
        1.0 / libm::tgamma(x)
    }
}

/// Power series `sum (a)_k (b)_k / ((c)_k k!) z^k` for `0 <= z < 1`.
///
/// Stops once the tail, bounded geometrically by the current term ratio, falls
/// below one ulp of the partial sum. Returns the term count on failure.
fn gauss_series(a: f64, b: f64, c: f64, z: f64) -> std::result::Result<f64, usize> {
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut comp = 0.0_f64;
    for k in 0..MAX_SERIES_TERMS {
        let kf = k as f64;
        let ratio = (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * z;
        term *= ratio;
        if term == 0.0 {
            return Ok(sum + comp);
        }
        // Neumaier step; terms can alternate for negative parameters.
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
        let r = ratio.abs();
        if k > 2 && r < 1.0 && term.abs() * r / (1.0 - r) <= 1e-17 * (sum + comp).abs() {
            return Ok(sum + comp);
        }
    }
    Err(MAX_SERIES_TERMS)
}

/// Standard normal CDF, `0.5 erfc(-x / sqrt 2)`.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse standard normal CDF (Wichura's AS241, about 1e-16 relative accuracy).
///
/// Requires `0 < p < 1`; the endpoints map to `-inf` / `+inf`.
pub fn norm_inv_cdf(p: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p), "probability out of range: {p}");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&AS241_A, r) / poly(&AS241_B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    if r <= 0.0 {
        return if q < 0.0 { f64::NEG_INFINITY } else { f64::INFINITY };
    }
    let r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        poly(&AS241_C, r) / poly(&AS241_D, r)
    } else {
        let r = r - 5.0;
        poly(&AS241_E, r) / poly(&AS241_F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[inline]
fn poly(coef: &[f64; 8], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

const AS241_A: [f64; 8] = [
    3.387_132_872_796_366_5,
    1.331_416_678_917_843_8e2,
    1.971_590_950_306_551_3e3,
    1.373_169_376_550_946e4,
    4.592_195_393_154_987e4,
    6.726_577_092_700_87e4,
    3.343_057_558_358_813e4,
    2.509_080_928_730_122_7e3,
];
const AS241_B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091e1,
    6.871_870_074_920_579e2,
    5.394_196_021_424_751e3,
    2.121_379_430_158_659_7e4,
    3.930_789_580_009_271e4,
    2.872_908_573_572_194_3e4,
    5.226_495_278_852_545e3,
];
const AS241_C: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_546,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    2.417_807_251_774_506e-1,
    2.272_384_498_926_918_4e-2,
    7.745_450_142_783_414e-4,
];
const AS241_D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    6.897_673_349_851e-1,
    1.481_039_764_274_800_8e-1,
    1.519_866_656_361_645_7e-2,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const AS241_E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    2.965_605_718_285_048_7e-1,
    2.653_218_952_657_612_4e-2,
    1.242_660_947_388_078_4e-3,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const AS241_F: [f64; 8] = [
    1.0,
    5.998_322_065_558_88e-1,
    1.369_298_809_227_358e-1,
    1.487_536_129_085_061_5e-2,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.044_263_103_389_939_8e-15,
];
