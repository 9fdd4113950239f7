//! Model and scheme invariants checked over random parameters.

use proptest::prelude::*;
use vix_mlmc::linalg::CholeskyFactor;
use vix_mlmc::model::{covariance_entry, covariance_matrix, mean_vector, Grid, ModelParams};
use vix_mlmc::payoff::{cv_price, lipschitz_constant, CvMoments, Payoff};
use vix_mlmc::rng::{Domain, Stream};
use vix_mlmc::sampler::{restrict_by, restrict_to_coarse, GaussianSample};
use vix_mlmc::scheme::SchemeKind;
use vix_mlmc::special::hyp2f1;

fn params() -> impl Strategy<Value = ModelParams> {
    (0.03f64..0.97, 0.05f64..2.0, 0.02f64..2.0, 0.005f64..0.5, -5.0f64..0.0)
        .prop_map(|(h, eta, t, delta, x0)| ModelParams::flat(h, eta, t, delta, x0).unwrap())
}

fn window_point(p: &ModelParams, s: f64) -> f64 {
    p.t + p.delta * s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn covariance_is_symmetric_and_bounded(p in params(), s1 in 0.0f64..=1.0, s2 in 0.0f64..=1.0) {
        let (u, v) = (window_point(&p, s1), window_point(&p, s2));
        let cuv = covariance_entry(u, v, &p).unwrap();
        let cvu = covariance_entry(v, u, &p).unwrap();
        prop_assert!((cuv - cvu).abs() <= 1e-13 * cuv.abs().max(1e-300));
        let (cuu, cvv) = (covariance_entry(u, u, &p).unwrap(), covariance_entry(v, v, &p).unwrap());
        prop_assert!(cuv > 0.0);
        prop_assert!(cuv * cuv <= cuu * cvv * (1.0 + 1e-10), "{cuv} {cuu} {cvv}");
    }

    #[test]
    fn diagonal_variance_is_monotone(p in params(), s1 in 0.0f64..1.0, s2 in 0.0f64..1.0) {
        prop_assume!((s1 - s2).abs() > 1e-6 && (p.h - 0.5).abs() > 1e-3);
        let (lo, hi) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
        let (u, v) = (window_point(&p, lo), window_point(&p, hi));
        let (a, b) = (covariance_entry(u, u, &p).unwrap(), covariance_entry(v, v, &p).unwrap());
        if p.h < 0.5 {
            prop_assert!(b <= a * (1.0 + 1e-12), "H={} var({u})={a} var({v})={b}", p.h);
        } else {
            prop_assert!(b >= a * (1.0 - 1e-12), "H={} var({u})={a} var({v})={b}", p.h);
        }
    }

    #[test]
    fn mean_makes_forward_variance_a_martingale(p in params(), n in 1usize..20) {
        let grid = Grid::for_params(&p, n).unwrap();
        let mean = mean_vector(&grid, &p).unwrap();
        for (i, m) in mean.iter().enumerate() {
            let u = grid.point(i);
            let var = covariance_entry(u, u, &p).unwrap();
            prop_assert!((m + 0.5 * var - p.x0.eval(u)).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_reconstructs_covariance(p in params(), n in 1usize..24) {
        let grid = Grid::for_params(&p, n).unwrap();
        let cov = covariance_matrix(&grid, &p).unwrap();
        prop_assert!(cov.is_symmetric());
        let f = CholeskyFactor::new(&cov, "prop").unwrap();
        let r = f.reconstruct();
        let jitter = f.jitter;
        let scale = cov.max_abs();
        for i in 0..=n {
            for j in 0..=n {
                let target = cov.get(i, j) + if i == j { jitter } else { 0.0 };
                prop_assert!((r.get(i, j) - target).abs() <= 1e-11 * scale);
            }
        }
    }

    #[test]
    fn coarse_grid_points_are_fine_even_points(p in params(), n in 1usize..200) {
        let coarse = Grid::for_params(&p, n).unwrap();
        let fine = Grid::for_params(&p, 2 * n).unwrap();
        for i in 0..=n {
            prop_assert_eq!(coarse.point(i).to_bits(), fine.point(2 * i).to_bits());
        }
    }

    #[test]
    fn trapezoid_identity_and_scheme_bounds(xs in prop::collection::vec(-6.0f64..1.0, 2..80)) {
        let n = xs.len() - 1;
        let exps: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        let rect = SchemeKind::Rectangle.from_exp(&exps, 1);
        let trap = SchemeKind::Trapezoid.from_exp(&exps, 1);
        let identity = rect + (exps[0] - exps[n]) / (2.0 * n as f64);
        prop_assert!((trap - identity).abs() <= 1e-14 * rect);
        let lo = exps.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = exps.iter().cloned().fold(0.0, f64::max);
        for s in [rect, trap] {
            prop_assert!(s >= lo * (1.0 - 1e-15) && s <= hi * (1.0 + 1e-15));
        }
    }

    #[test]
    fn restriction_matches_strided_scheme(xs in prop::collection::vec(-6.0f64..1.0, 1..40), stride in 1usize..5) {
        let n = xs.len() * stride;
        let values: Vec<f64> = (0..=n).map(|i| xs[i.min(n - 1) % xs.len()] + i as f64 * 1e-3).collect();
        let fine = GaussianSample::new(values).unwrap();
        let coarse = restrict_by(&fine, stride).unwrap();
        let exps: Vec<f64> = fine.values.iter().map(|x| x.exp()).collect();
        for scheme in [SchemeKind::Rectangle, SchemeKind::Trapezoid] {
            prop_assert_eq!(scheme.vix2(&coarse).to_bits(), scheme.from_exp(&exps, stride).to_bits());
        }
        if n % 2 == 0 {
            prop_assert_eq!(restrict_to_coarse(&fine).unwrap().values, restrict_by(&fine, 2).unwrap().values);
        }
    }

    #[test]
    fn put_call_parity(v in 0.0f64..1.0, k in 0.01f64..1.0, mu in -6.0f64..0.0, sigma in 0.0f64..1.5) {
        let call = Payoff::Call { strike: k };
        let put = Payoff::Put { strike: k };
        prop_assert!((call.eval(v) - put.eval(v) - (v.sqrt() - k)).abs() < 1e-15);
        let m = CvMoments { mu_n: mu, sigma_n: sigma };
        let forward = cv_price(&Payoff::Future, &m).unwrap();
        let parity = cv_price(&call, &m).unwrap() - cv_price(&put, &m).unwrap() - (forward - k);
        prop_assert!(parity.abs() <= 1e-14 * forward.max(k), "{parity}");
    }

    #[test]
    fn call_is_lipschitz_in_vix2(a in 0.0f64..1.0, b in 0.0f64..1.0, k in 0.01f64..1.0) {
        let p = Payoff::Call { strike: k };
        let l = lipschitz_constant(&p).unwrap();
        prop_assert!((p.eval(a) - p.eval(b)).abs() <= l * (a - b).abs() * (1.0 + 1e-12) + 1e-16);
    }

    #[test]
    fn put_is_lipschitz_above_strike_squared_only(k in 0.01f64..1.0, s in 0.01f64..0.99) {
        let p = Payoff::Put { strike: k };
        prop_assert!(lipschitz_constant(&p).is_err());
        // near 0 the slope 1/(2 sqrt(x)) exceeds 1/(2k)
        let b = (s * k).powi(2);
        prop_assert!(p.eval(0.0) - p.eval(b) > 0.5 / k * b);
    }

    #[test]
    fn hyp2f1_is_symmetric_in_upper_parameters(h in 0.02f64..0.98, x in -50.0f64..=0.0) {
        let (a, b, c) = (0.5 - h, 0.5 + h, 1.5 + h);
        let f = hyp2f1(a, b, c, x).unwrap();
        let g = hyp2f1(b, a, c, x).unwrap();
        prop_assert!((f - g).abs() <= 1e-13 * f.abs());
    }

    #[test]
    fn uniforms_are_open(seed in any::<u64>(), major in any::<u64>()) {
        let mut s = Stream::new(seed, Domain::Test, major, 0);
        for _ in 0..64 {
            let u = s.uniform();
            prop_assert!(u > 0.0 && u < 1.0);
            prop_assert!(s.normal().is_finite());
        }
    }
}
