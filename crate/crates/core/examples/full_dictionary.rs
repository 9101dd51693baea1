//! Recover a whole overcomplete dictionary by repeating the power method from
//! independent random starts until every column has been found.
//!
//! cargo run --release --example full_dictionary

use sphere4::model::{make_untf, UntfConfig};
use sphere4::optimize::SolveConfig;
use sphere4::recovery::{default_full_budget, recover_full};
use sphere4::TensorObjective;

fn main() -> sphere4::Result<()> {
    let (n, m) = (16, 32);
    let (d, _) = make_untf(n, m, 1000, UntfConfig::default())?;
    let budget = default_full_budget(m);
    let cov = recover_full(&TensorObjective::new(d.clone()), &d, &SolveConfig::default(), budget, 0)?;
    for rec in cov.per_trial.iter().filter(|r| r.trial % 100 == 0 || r.trial + 1 == cov.trials_used) {
        println!("after trial {:>3}: {:>2}/{m} columns", rec.trial + 1, rec.cumulative_covered);
    }
    println!(
        "{} after {} of {budget} trials; missing {:?}",
        if cov.complete() { "complete" } else { "incomplete" },
        cov.trials_used,
        (0..m).filter(|i| !cov.recovered.contains(i)).collect::<Vec<_>>()
    );
    Ok(())
}
