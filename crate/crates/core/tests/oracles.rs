//! Estimators and samplers checked against independent exact values.

use vix_mlmc::estimators::{level_statistics, mc_price, mlmc_price, MlmcPlan};
use vix_mlmc::experiments::strong_error_curves;
use vix_mlmc::model::{covariance_matrix, lambda_integral, lambda_integral_direct, Grid, ModelParams};
use vix_mlmc::payoff::{cv_moments, cv_price, Payoff};
use vix_mlmc::rng::{Domain, Stream};
use vix_mlmc::sampler::{prepared, restrict_to_coarse, GaussianSample};
use vix_mlmc::scheme::SchemeKind;

fn fig3() -> ModelParams {
    ModelParams::flat(0.1, 0.5, 0.5, 1.0 / 12.0, (0.235f64 * 0.235).ln()).unwrap()
}

fn draw(params: &ModelParams, n: usize, m: usize, seed: u64) -> Vec<Vec<f64>> {
    let prep = prepared(params, n).unwrap();
    let mut stream = Stream::new(seed, Domain::Test, n as u64, 0);
    let (mut g, mut out) = (vec![0.0; n + 1], vec![0.0; n + 1]);
    (0..m)
        .map(|_| {
            prep.draw_into(&mut stream, &mut g, &mut out);
            out.clone()
        })
        .collect()
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Shewchuk's exact floating-point summation (partials), rounded once at the end.
fn msum(xs: &[f64]) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for &x in xs {
        let mut x = x;
        let mut kept = Vec::with_capacity(partials.len() + 1);
        for &y in &partials {
            let (a, b) = if x.abs() < y.abs() { (y, x) } else { (x, y) };
            let hi = a + b;
            let lo = b - (hi - a);
            if lo != 0.0 {
                kept.push(lo);
            }
            x = hi;
        }
        kept.push(x);
        partials = kept;
    }
    partials.iter().rev().fold(0.0, |acc, p| acc + p)
}

#[test]
fn sampler_reproduces_exact_covariance_on_small_grids() {
    let p = ModelParams::flat(0.2, 1.2, 0.3, 0.1, -2.0).unwrap();
    let m = 100_000;
    for n in [1usize, 2, 4] {
        let cov = covariance_matrix(&Grid::for_params(&p, n).unwrap(), &p).unwrap();
        let spec_mean = prepared(&p, n).unwrap().spec.mean.clone();
        let xs = draw(&p, n, m, 11);
        for i in 0..=n {
            let (mean, se) = mean_and_se(&xs.iter().map(|x| x[i]).collect::<Vec<_>>());
            assert!((mean - spec_mean[i]).abs() < 4.5 * se, "n={n} mean[{i}]");
            for j in 0..=n {
                let prods: Vec<f64> =
                    xs.iter().map(|x| (x[i] - spec_mean[i]) * (x[j] - spec_mean[j])).collect();
                let (c, se) = mean_and_se(&prods);
                assert!((c - cov.get(i, j)).abs() < 4.5 * se, "n={n} cov[{i}][{j}]: {c} vs {}", cov.get(i, j));
            }
        }
    }
}

#[test]
fn restricted_fine_samples_have_the_coarse_law() {
    let p = fig3();
    let m = 100_000;
    let from_fine: Vec<f64> = draw(&p, 8, m, 1)
        .into_iter()
        .map(|x| SchemeKind::Rectangle.vix2(&restrict_to_coarse(&GaussianSample::new(x).unwrap()).unwrap()))
        .collect();
    let direct: Vec<f64> =
        draw(&p, 4, m, 2).into_iter().map(|x| SchemeKind::Rectangle.vix2(&GaussianSample::new(x).unwrap())).collect();
    let (a, sa) = mean_and_se(&from_fine);
    let (b, sb) = mean_and_se(&direct);
    assert!((a - b).abs() < 4.0 * (sa * sa + sb * sb).sqrt(), "{a} vs {b}");
    // flat curve: E[exp(X_u)] = exp(X0) exactly
    let forward = 0.235f64 * 0.235;
    assert!((b - forward).abs() < 4.0 * sb, "{b} vs {forward}");
}

#[test]
fn control_variate_closed_form_matches_simulation() {
    let p = ModelParams::flat(0.3, 0.5, 0.25, 1.0 / 12.0, (0.235f64 * 0.235).ln()).unwrap();
    let n = 16;
    let moments = cv_moments(&prepared(&p, n).unwrap().spec);
    let xs = draw(&p, n, 200_000, 5);
    let geo: Vec<f64> = xs.iter().map(|x| (x[1..].iter().sum::<f64>() / n as f64).exp()).collect();
    for payoff in [Payoff::Call { strike: 0.1 }, Payoff::Put { strike: 0.25 }, Payoff::Future] {
        let exact = cv_price(&payoff, &moments).unwrap();
        let (mc, se) = mean_and_se(&geo.iter().map(|&g| payoff.eval(g)).collect::<Vec<_>>());
        assert!((mc - exact).abs() < 4.0 * se, "{payoff:?}: {mc} ± {se} vs {exact}");
    }
}

#[test]
fn control_variate_is_unbiased_and_reduces_variance() {
    let p = fig3();
    let call = Payoff::Call { strike: 0.1 };
    let plain = mc_price(SchemeKind::Rectangle, 20, 200_000, &call, false, &p, 1).unwrap();
    let cv = mc_price(SchemeKind::Rectangle, 20, 200_000, &call, true, &p, 2).unwrap();
    let s = (plain.std_error.powi(2) + cv.std_error.powi(2)).sqrt();
    assert!((plain.value - cv.value).abs() < 4.0 * s, "{} vs {}", plain.value, cv.value);
    assert!(cv.std_error < plain.std_error / 5.0, "{} vs {}", cv.std_error, plain.std_error);
}

#[test]
fn strong_error_matches_exact_second_moment() {
    // with w the scheme weights, E|V_ref - V_n|^2 = d' K d where K_ab = exp(X0_a + X0_b + C_ab)
    let p = fig3();
    let (n_ref, n_values, m) = (32usize, [4usize, 8, 16], 40_000u64);
    let cov = covariance_matrix(&Grid::for_params(&p, n_ref).unwrap(), &p).unwrap();
    let x0 = p.x0.constant_value().unwrap();
    let weights = |scheme: SchemeKind, n: usize| -> Vec<f64> {
        let stride = n_ref / n;
        let mut w = vec![0.0; n_ref + 1];
        for k in 1..=n {
            w[k * stride] += 1.0 / n as f64;
        }
        if scheme == SchemeKind::Trapezoid {
            w[0] += 0.5 / n as f64;
            w[n_ref] -= 0.5 / n as f64;
        }
        w
    };
    let curves = strong_error_curves(&[SchemeKind::Rectangle, SchemeKind::Trapezoid], &n_values, n_ref, m, &p, 3).unwrap();
    for curve in &curves {
        let scheme = curve.protocol.scheme;
        let reference = weights(scheme, n_ref);
        for (j, &n) in n_values.iter().enumerate() {
            let d: Vec<f64> = reference.iter().zip(weights(scheme, n)).map(|(a, b)| a - b).collect();
            let mut exact = 0.0;
            for a in 0..=n_ref {
                for b in 0..=n_ref {
                    exact += d[a] * d[b] * (2.0 * x0 + cov.get(a, b)).exp();
                }
            }
            let exact = exact.sqrt();
            let (err, ci) = (curve.errors[j], curve.ci_halfwidths[j]);
            assert!((err - exact).abs() < 2.2 * ci, "{scheme} n={n}: {err} ± {ci} vs exact {exact}");
        }
    }
}

#[test]
fn multilevel_telescopes_to_finest_level_mean() {
    let p = fig3();
    let call = Payoff::Call { strike: 0.1 };
    let plan = MlmcPlan::fixed(SchemeKind::Rectangle, 4, 3, 200_000, p.h).unwrap();
    let ml = mlmc_price(&plan, &call, &p, 8).unwrap();
    let mc = mc_price(SchemeKind::Rectangle, 32, 200_000, &call, false, &p, 9).unwrap();
    let s = (ml.std_error.powi(2) + mc.std_error.powi(2)).sqrt();
    assert!((ml.value - mc.value).abs() < 4.0 * s, "{} vs {}", ml.value, mc.value);
    assert_eq!(ml.grid_sizes, vec![4, 8, 16, 32]);
}

#[test]
fn flat_model_is_exact_for_both_schemes() {
    let x0 = -2.896;
    let p = ModelParams::flat(0.1, 0.0, 0.5, 1.0 / 12.0, x0).unwrap();
    let call = Payoff::Call { strike: 0.1 };
    let exact = (0.5 * x0).exp() - 0.1;
    for scheme in [SchemeKind::Rectangle, SchemeKind::Trapezoid] {
        let e = mc_price(scheme, 10, 100, &call, false, &p, 1).unwrap();
        assert!((e.value - exact).abs() < 1e-15, "{scheme}: {}", e.value);
        assert_eq!(e.std_error, 0.0);
        let plan = MlmcPlan::fixed(scheme, 2, 3, 64, p.h).unwrap();
        let stats = level_statistics(&plan, &call, &p, 100, 1).unwrap();
        for s in &stats[1..] {
            assert!(s.mean_correction.abs() < 1e-16 && s.variance < 1e-30, "{s:?}");
        }
    }
}

#[test]
fn scheme_sums_are_correctly_rounded() {
    let mut stream = Stream::new(4, Domain::Test, 0, 0);
    for len in [2usize, 17, 400, 5000] {
        let exps: Vec<f64> = (0..len).map(|_| (4.0 * stream.normal() - 3.0).exp()).collect();
        let n = (len - 1) as f64;
        let rect = msum(&exps[1..]) / n;
        let mut trap_terms = exps[1..len - 1].to_vec();
        trap_terms.push(0.5 * exps[0]);
        trap_terms.push(0.5 * exps[len - 1]);
        let trap = msum(&trap_terms) / n;
        for (scheme, exact) in [(SchemeKind::Rectangle, rect), (SchemeKind::Trapezoid, trap)] {
            let got = scheme.from_exp(&exps, 1);
            assert!(((got - exact) / exact).abs() < 1e-14, "{scheme} len={len}: {got} vs {exact}");
        }
    }
}

#[test]
fn estimates_are_deterministic_across_thread_counts() {
    let p = fig3();
    let call = Payoff::Call { strike: 0.1 };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mc_price(SchemeKind::Trapezoid, 12, 30_000, &call, true, &p, 77).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
}

#[test]
fn lambda_integral_agrees_with_direct_quadrature() {
    for (h, t) in [(0.1, 0.5), (0.3, 0.25), (0.45, 1.0)] {
        let p = ModelParams::flat(h, 0.5, t, 1.0 / 12.0, -3.0).unwrap();
        let a = lambda_integral(&p).unwrap();
        let b = lambda_integral_direct(&p).unwrap();
        assert!(((a - b) / b).abs() < 1e-8, "H={h}: {a} vs {b}");
    }
}
