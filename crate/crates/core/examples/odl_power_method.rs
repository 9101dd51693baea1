//! Recover one column of an overcomplete dictionary from sparse samples with
//! the power method on the finite-sample ℓ⁴ objective.
//!
//! cargo run --release --example odl_power_method

use sphere4::model::{make_untf, sample_bg, synth_odl, UntfConfig};
use sphere4::optimize::{solve, SolveConfig};
use sphere4::recovery::recovery_error;
use sphere4::{OdlObjective, SphereObjective, SpherePoint};

fn main() -> sphere4::Result<()> {
    let (n, m, theta, p) = (3, 4, 0.1, 20_000);
    let (d, _) = make_untf(n, m, 0, UntfConfig::default())?;
    let y = synth_odl(&d, &sample_bg(m, p, theta, 0)?)?;
    let obj = OdlObjective::new(&y, theta)?;

    let mut successes = 0;
    for trial in 0..10 {
        let q0 = SpherePoint::random(n, 42, trial);
        let res = solve(&obj, &q0, &SolveConfig::default())?;
        let out = recovery_error(&res.q_star, &d);
        successes += out.success as usize;
        println!(
            "trial {trial}: {:>3} iters, phi {:+.5} -> {:+.5}, column {} with rho_e = {:.2e}",
            res.iterations,
            obj.value(&q0),
            res.final_value(),
            out.best_index,
            out.rho_e
        );
    }
    println!("{successes}/10 trials landed on a column");
    Ok(())
}
