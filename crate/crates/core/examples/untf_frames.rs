//! Build unit-norm tight frames of increasing overcompleteness and compare
//! their coherence with the Welch lower bound.
//!
//! cargo run --release --example untf_frames

use sphere4::model::{make_untf, welch_bound, UntfConfig};

fn main() -> sphere4::Result<()> {
    println!("{:>3} {:>4} {:>6} {:>10} {:>10} {:>10} {:>6}", "n", "m", "m/n", "coherence", "welch", "frame_res", "iters");
    for n in [4, 8, 16] {
        for ratio in [1.5, 2.0, 3.0, 4.0] {
            let m = (ratio * n as f64) as usize;
            let (d, rep) = make_untf(n, m, 7, UntfConfig::default())?;
            println!(
                "{n:>3} {m:>4} {:>6.2} {:>10.4} {:>10.4} {:>10.1e} {:>6}{}",
                d.overcompleteness(),
                d.coherence(),
                welch_bound(n, m),
                rep.frame_residual,
                rep.iterations,
                if rep.converged { "" } else { "  (not converged)" }
            );
        }
    }
    Ok(())
}
