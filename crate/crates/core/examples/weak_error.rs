//! Weak error of the control-variate price against the reference 0.13093742.
//!
//! `cargo run --release --example weak_error -- [M]` (default 1000000)

use vix_mlmc::experiments::weak_error_curve;
use vix_mlmc::model::ModelParams;
use vix_mlmc::payoff::Payoff;
use vix_mlmc::scheme::SchemeKind;

fn main() -> vix_mlmc::Result<()> {
    let m: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1_000_000);
    let params = ModelParams::flat(0.3, 0.5, 0.25, 1.0 / 12.0, (0.235f64 * 0.235).ln())?;
    let n_values: Vec<usize> = (5..=14).collect();
    let call = Payoff::Call { strike: 0.1 };
    for scheme in [SchemeKind::Rectangle, SchemeKind::Trapezoid] {
        let c = weak_error_curve(scheme, &n_values, &call, 0.130_937_42, 5e-8, m, &params, 1)?;
        println!("{scheme} (slope {:.3})", c.fitted_slope().unwrap_or(f64::NAN));
        for (k, n) in c.n_values.iter().enumerate() {
            println!("  n={n:<3} |price - ref| {:.3e} ± {:.1e}", c.errors[k], c.ci_halfwidths[k]);
        }
    }
    Ok(())
}
