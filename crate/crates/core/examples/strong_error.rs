//! L² strong error of both schemes against a fine reference grid, with the Lambda/n overlay.
//!
//! `cargo run --release --example strong_error -- [H] [M]` (defaults 0.1, 20000)

use vix_mlmc::experiments::strong_error_curves;
use vix_mlmc::model::ModelParams;
use vix_mlmc::scheme::SchemeKind;

fn main() -> vix_mlmc::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let h: f64 = args.first().and_then(|a| a.parse().ok()).unwrap_or(0.1);
    let m: u64 = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(20_000);
    let params = ModelParams::flat(h, 0.5, 0.5, 1.0 / 12.0, (0.235f64 * 0.235).ln())?;
    let n_values = [4, 8, 16, 32, 64, 128];
    let curves = strong_error_curves(&[SchemeKind::Rectangle, SchemeKind::Trapezoid], &n_values, 512, m, &params, 1)?;
    for c in &curves {
        println!("{} (slope {:.3})", c.protocol.scheme, c.fitted_slope().unwrap_or(f64::NAN));
        for (k, n) in c.n_values.iter().enumerate() {
            let overlay = c.lambda_over_n.as_ref().map_or(String::new(), |l| format!("  Lambda/n {:.3e}", l[k]));
            println!("  n={n:<4} error {:.4e} ± {:.1e}{overlay}", c.errors[k], c.ci_halfwidths[k]);
        }
    }
    Ok(())
}
