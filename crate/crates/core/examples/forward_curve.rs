//! Pricing with a tabulated initial forward-variance curve and pilot-estimated MLMC constants.
//!
//! `cargo run --release --example forward_curve`

use vix_mlmc::estimators::{mc_price, mlmc_price, plan_with_mode, PlanMode};
use vix_mlmc::model::{ForwardCurve, Interpolation, ModelParams};
use vix_mlmc::payoff::Payoff;
use vix_mlmc::scheme::SchemeKind;

fn main() -> vix_mlmc::Result<()> {
    // upward-sloping term structure of forward variance over the VIX window
    let knots = vec![0.5, 0.52, 0.55, 0.58333];
    let values = [0.22f64, 0.23, 0.24, 0.25].iter().map(|v| (v * v).ln()).collect();
    let curve = ForwardCurve::tabulated(knots, values, Interpolation::Linear)?;
    let params = ModelParams::new(0.1, 0.5, 0.5, 1.0 / 12.0, curve)?;
    let call = Payoff::Call { strike: 0.2 };
    let mc = mc_price(SchemeKind::Trapezoid, 64, 100_000, &call, true, &params, 1)?;
    println!("mc trap n=64 CV: {:.6} ± {:.1e}", mc.value, mc.std_error);
    // Lambda needs a flat curve, so auto mode estimates the constants from pilot runs
    let plan = plan_with_mode(PlanMode::Auto, 0.005, 6, SchemeKind::Trapezoid, &call, &params, 1)?;
    let ml = mlmc_price(&plan, &call, &params, 1)?;
    println!(
        "mlmc trap eps=0.005 ({:?} constants, L={}, M0={}): {:.6} ± {:.1e}",
        plan.constants, plan.levels, plan.m0, ml.value, ml.std_error
    );
    Ok(())
}
