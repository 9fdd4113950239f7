//! MSE against cost for plain MC, multilevel rectangle and multilevel trapezoid.
//!
//! `cargo run --release --example mse_cost -- [N_MSE]` (default 100)

use vix_mlmc::estimators::PlanMode;
use vix_mlmc::experiments::{mse_cost_curve, EstimatorFamily, MseCostSettings};
use vix_mlmc::model::ModelParams;
use vix_mlmc::payoff::Payoff;

fn main() -> vix_mlmc::Result<()> {
    let n_mse: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100);
    let params = ModelParams::flat(0.1, 0.5, 0.5, 1.0 / 12.0, (0.235f64 * 0.235).ln())?;
    let call = Payoff::Call { strike: 0.1 };
    let settings = MseCostSettings { n_mse, reference_price: 0.121_971, n0: 6, plan_mode: PlanMode::Lambda, seed: 1 };
    let eps = [0.04, 0.02, 0.01, 0.005];
    for family in [EstimatorFamily::McRect, EstimatorFamily::MlRect, EstimatorFamily::MlTrap] {
        let c = mse_cost_curve(family, &eps, &settings, &params, &call)?;
        println!("{} (MSE-cost slope {:.3})", family.tag(), c.fit.map_or(f64::NAN, |f| f.slope));
        for r in &c.rows {
            println!(
                "  eps={:<6} cost {:.3e}  MSE {:.3e} ± {:.1e}  mean {:.6}  n={} L={} M={}",
                r.epsilon, r.cost, r.mse, r.ci_halfwidth, r.mean_estimate, r.n, r.levels, r.m0
            );
        }
    }
    Ok(())
}
