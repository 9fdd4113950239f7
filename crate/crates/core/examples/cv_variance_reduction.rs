//! Variance of the plain and control-variate estimators for calls, puts and the VIX future.
//!
//! `cargo run --release --example cv_variance_reduction`

use vix_mlmc::estimators::mc_price;
use vix_mlmc::model::ModelParams;
use vix_mlmc::payoff::{cv_moments, cv_price, Payoff};
use vix_mlmc::sampler::prepared;
use vix_mlmc::scheme::SchemeKind;

fn main() -> vix_mlmc::Result<()> {
    let params = ModelParams::flat(0.1, 0.5, 0.5, 1.0 / 12.0, (0.235f64 * 0.235).ln())?;
    let (n, m) = (100, 50_000);
    let moments = cv_moments(&prepared(&params, n)?.spec);
    println!("control variate law: mu_n = {:.6}, sigma_n = {:.6}", moments.mu_n, moments.sigma_n);
    println!("{:<14} {:>12} {:>12} {:>12} {:>12}", "payoff", "CV price", "plain", "with CV", "var ratio");
    for payoff in [
        Payoff::Call { strike: 0.1 },
        Payoff::Call { strike: 0.3 },
        Payoff::Put { strike: 0.25 },
        Payoff::Future,
    ] {
        let plain = mc_price(SchemeKind::Rectangle, n, m, &payoff, false, &params, 2)?;
        let cv = mc_price(SchemeKind::Rectangle, n, m, &payoff, true, &params, 2)?;
        let label = match payoff.strike() {
            Some(k) => format!("{} {k}", payoff.tag()),
            None => payoff.tag().to_string(),
        };
        println!(
            "{label:<14} {:>12.8} {:>12.8} {:>12.8} {:>12.1}",
            cv_price(&payoff, &moments)?,
            plain.value,
            cv.value,
            (plain.std_error / cv.std_error).powi(2)
        );
    }
    Ok(())
}
