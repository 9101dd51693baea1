//! Run the power method from random starts on a tight frame and classify
//! every limit point: region, Hessian spectrum, cubic consistency and the
//! column-direction curvature certificate.
//!
//! cargo run --release --example landscape_certify

use sphere4::landscape::{critical_point_report, negative_curvature_certificate, CriticalThresholds, RegionParams, XI_DL};
use sphere4::model::{make_untf, UntfConfig};
use sphere4::optimize::{solve, SolveConfig};
use sphere4::{SpherePoint, TensorObjective};

fn main() -> sphere4::Result<()> {
    let (n, m) = (12, 24);
    let (d, _) = make_untf(n, m, 3, UntfConfig::default())?;
    let obj = TensorObjective::new(d.clone());
    let params = RegionParams::dl(d.coherence());
    let th = CriticalThresholds::default();

    for trial in 0..8 {
        let res = solve(&obj, &SpherePoint::random(n, 9, trial), &SolveConfig::default())?;
        let rep = critical_point_report(&d, &res.q_star, &params, false, &th)?;
        println!(
            "trial {trial}: {:<14} region {:<3} min eig {:+.3e} max |<a_i,q>| {:.3} cubic {}",
            rep.classification.as_str(),
            rep.region.region.as_str(),
            rep.hess_min_eig,
            rep.max_inner_product,
            rep.cubic_consistent
        );
    }

    // The uniform point of the identity frame is a saddle; the certificate
    // names a column along which curvature is negative.
    let eye = sphere4::Dictionary::identity(6);
    let uniform = SpherePoint::from_slice(&[1.0; 6])?;
    let cert = negative_curvature_certificate(&eye, &uniform, XI_DL)?;
    println!(
        "identity, uniform point: column {} has a'Hess a = {:.4} <= bound {:.4}: {}",
        cert.index, cert.rayleigh, cert.bound, cert.holds
    );
    Ok(())
}
