//! Start exactly at a saddle of the population objective, find the most
//! negative tangent curvature with Lanczos and escape along it.
//!
//! cargo run --release --example saddle_escape

use sphere4::optimize::{escape_saddle, min_tangent_eigenpair, solve, Escape, SolveConfig};
use sphere4::recovery::recovery_error;
use sphere4::{Dictionary, SphereObjective, SpherePoint, TensorObjective};

fn main() -> sphere4::Result<()> {
    let d = Dictionary::identity(4);
    let obj = TensorObjective::new(d.clone());
    let saddle = SpherePoint::from_slice(&[1.0, 1.0, 1.0, 0.0])?;
    println!("gradient norm at the saddle: {:.1e}", obj.rgrad(&saddle).norm());

    let eig = min_tangent_eigenpair(&obj, &saddle, 0)?;
    println!("smallest tangent eigenvalue {:+.4} (converged {})", eig.value, eig.converged);

    let out = escape_saddle(&obj, &saddle, 1e-8, 0.1, 0)?;
    if let Some(p) = &out.point {
        println!("escape step lowers phi: {:+.4} -> {:+.4}", obj.value(&saddle), obj.value(p));
    }

    let plain = solve(&obj, &saddle, &SolveConfig::default())?;
    let cfg = SolveConfig { escape: Escape::Eig { curv_tol: 1e-8, step: 0.1 }, ..SolveConfig::default() };
    let escaped = solve(&obj, &saddle, &cfg)?;
    println!("without escape: {:?}, rho_e {:.3}", plain.termination, recovery_error(&plain.q_star, &d).rho_e);
    println!(
        "with escape:    {:?}, rho_e {:.1e} after {} escape(s)",
        escaped.termination,
        recovery_error(&escaped.q_star, &d).rho_e,
        escaped.escapes_taken
    );
    Ok(())
}
