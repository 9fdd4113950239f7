//! Hypergeometric covariance against adaptive quadrature on random parameter draws.
//!
//! `cargo run --release --example covariance_check -- [pairs]` (default 1000)

use vix_mlmc::experiments::covariance_check;

fn main() -> vix_mlmc::Result<()> {
    let pairs: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1000);
    let report = covariance_check(pairs, (0.05, 0.45), 7)?;
    let worst = report.pairs.iter().max_by(|a, b| a.rel_deviation.total_cmp(&b.rel_deviation)).unwrap();
    println!("{pairs} pairs, max relative deviation {:.3e}", report.max_rel_deviation);
    println!(
        "worst: H={:.3} eta={:.3} T={:.3} Delta={:.4} u=({:.5}, {:.5}) closed form {:.15e} quadrature {:.15e}",
        worst.h, worst.eta, worst.t, worst.delta, worst.u_i, worst.u_j, worst.closed_form, worst.oracle
    );
    Ok(())
}
