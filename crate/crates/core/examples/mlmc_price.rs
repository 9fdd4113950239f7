//! Plans and runs a multilevel estimator, printing the plan and estimate as JSON.
//!
//! `cargo run --release --example mlmc_price -- [epsilon] [lambda|pilot|auto]` (defaults 0.01, auto)

use vix_mlmc::estimators::{mlmc_price, plan_with_mode, PlanMode};
use vix_mlmc::model::ModelParams;
use vix_mlmc::payoff::Payoff;
use vix_mlmc::scheme::SchemeKind;

fn main() -> vix_mlmc::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let eps: f64 = args.first().and_then(|a| a.parse().ok()).unwrap_or(0.01);
    let mode = match args.get(1).map(String::as_str) {
        Some("lambda") => PlanMode::Lambda,
        Some("pilot") => PlanMode::Pilot,
        _ => PlanMode::Auto,
    };
    let params = ModelParams::flat(0.1, 0.5, 0.5, 1.0 / 12.0, (0.235f64 * 0.235).ln())?;
    let call = Payoff::Call { strike: 0.1 };
    for scheme in [SchemeKind::Rectangle, SchemeKind::Trapezoid] {
        let plan = plan_with_mode(mode, eps, 6, scheme, &call, &params, 1)?;
        let estimate = mlmc_price(&plan, &call, &params, 1)?;
        let out = serde_json::json!({ "plan": plan, "estimate": estimate });
        println!("{}", serde_json::to_string_pretty(&out)?);
    }
    Ok(())
}
