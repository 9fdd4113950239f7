//! Per-level mean and variance of the multilevel corrections for both schemes.
//!
//! `cargo run --release --example level_variance -- [probe_M]` (default 10000)

use vix_mlmc::estimators::{level_statistics, MlmcPlan};
use vix_mlmc::model::ModelParams;
use vix_mlmc::payoff::Payoff;
use vix_mlmc::scheme::SchemeKind;

fn main() -> vix_mlmc::Result<()> {
    let probe: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10_000);
    let params = ModelParams::flat(0.1, 0.5, 0.5, 1.0 / 12.0, (0.235f64 * 0.235).ln())?;
    let call = Payoff::Call { strike: 0.1 };
    for scheme in [SchemeKind::Rectangle, SchemeKind::Trapezoid] {
        let plan = MlmcPlan::fixed(scheme, 6, 5, 1, params.h)?;
        println!("{scheme}");
        for s in level_statistics(&plan, &call, &params, probe, 1)? {
            println!(
                "  level {} n={:<4} variance {:.3e} (log2 {:+.2})  mean {:+.3e} ± {:.1e}",
                s.level,
                s.n,
                s.variance,
                s.variance.log2(),
                s.mean_correction,
                s.mean_std_error
            );
        }
    }
    Ok(())
}
