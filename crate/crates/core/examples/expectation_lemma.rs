//! Compare the Monte-Carlo mean of the finite-sample objective with its
//! closed-form expectation in terms of the population objective.
//!
//! cargo run --release --example expectation_lemma

use sphere4::model::{make_untf, UntfConfig};
use sphere4::objective::expectation_gap;
use sphere4::SpherePoint;

fn main() -> sphere4::Result<()> {
    let (d, _) = make_untf(3, 4, 0, UntfConfig::default())?;
    let theta = 0.1;
    println!("{:>5} {:>12} {:>10} {:>12} {:>7} {:>12} {:>7}", "point", "mc_mean", "se", "K^2 form", "z", "exact form", "z");
    for t in 0..5 {
        let q = SpherePoint::random(3, 10 + t, 0);
        let g = expectation_gap(&d, theta, &q, 100_000, t)?;
        println!(
            "{t:>5} {:>12.6} {:>10.2e} {:>12.6} {:>7.2} {:>12.6} {:>7.2}",
            g.monte_carlo_mean,
            g.standard_error,
            g.predicted,
            (g.monte_carlo_mean - g.predicted) / g.standard_error,
            g.predicted_exact,
            (g.monte_carlo_mean - g.predicted_exact) / g.standard_error
        );
    }
    Ok(())
}
