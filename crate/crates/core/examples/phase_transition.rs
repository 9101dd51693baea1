//! Success rate of single-column recovery as the dictionary grows more
//! overcomplete, written as a resumable sweep to a scratch directory.
//!
//! cargo run --release --example phase_transition

use sphere4::harness::{cmd_sweep, RunContext, SweepSpec};

fn main() -> sphere4::Result<()> {
    let dir = std::env::temp_dir().join("sphere4-phase-transition");
    let ctx = RunContext::new(&dir, 0, "phase_transition example")?;
    let rows = cmd_sweep(&ctx, &SweepSpec::overcompleteness(&[3, 4, 5, 6]))?;
    println!("{:>3} {:>4} {:>7} {:>6}", "n", "m", "m/n^2", "rate");
    for r in &rows {
        println!("{:>3} {:>4} {:>7.2} {:>6.2}", r.n, r.m, r.m as f64 / (r.n * r.n) as f64, r.rate);
    }
    println!("raw trials and rates are in {}", dir.display());
    Ok(())
}
