//! Convolutional dictionary learning: precondition the measurements, start
//! from a preconditioned data sample and recover every filter up to a cyclic
//! shift and sign.
//!
//! cargo run --release --example cdl_filter_recovery

use sphere4::cdl::{build_preconditioner, preconditioned_frame_residual, ConvProblem, ScaleConvention};
use sphere4::recovery::{recover_filters, FilterRecoveryConfig};

fn main() -> sphere4::Result<()> {
    let (n, k, theta, p) = (32, 2, 0.1, 5_000);
    let prob = ConvProblem::generate(n, k, theta, p, 1)?;
    let pre = build_preconditioner(&prob.measurements, theta, k, ScaleConvention::TightFrame)?;
    println!(
        "kappa = {:.2}, preconditioned frame residual {:.3}",
        prob.filters.kappa(),
        preconditioned_frame_residual(&prob.filters, &pre)
    );

    let rec = recover_filters(&prob, &FilterRecoveryConfig::for_k(k, 1))?;
    for f in &rec.filters {
        println!(
            "filter {}: shift {:>2}, sign {:+}, aligned error {:.3} ({})",
            f.filter,
            f.shift,
            f.sign,
            f.aligned_error,
            if f.recovered { "recovered" } else { "missed" }
        );
    }
    println!("{} trials used", rec.trials_used);
    Ok(())
}
