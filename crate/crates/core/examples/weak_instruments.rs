//! With weak instruments (concentration 5) the union of CLR or AR sets is
//! usually the whole line once some instruments are invalid.
//!
//! cargo run --release --example weak_instruments -- [replicates]

use ivunion::sim::{run_experiment, DgpConfig, ExperimentConfig, SimMethod};
use ivunion::TestKind;

fn main() -> ivunion::Result<()> {
    let reps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let methods = vec![
        SimMethod::Union(TestKind::Ar),
        SimMethod::Union(TestKind::Clr),
        SimMethod::Pretest(TestKind::Clr),
        SimMethod::Oracle(TestKind::Clr),
    ];
    println!("{:<12}{:>5}{:>10}{:>12}{:>14}", "method", "s*", "coverage", "unbounded", "median len");
    for s_star in 0..5 {
        let cfg = ExperimentConfig { dgp: DgpConfig::weak(s_star), s_bar: 5, replicates: reps, methods: methods.clone(), ..Default::default() };
        let r = run_experiment(&cfg)?;
        for m in &r.methods {
            println!(
                "{:<12}{:>5}{:>10.1}{:>12.1}{:>14.3}",
                m.method.to_string(),
                s_star,
                m.coverage.unwrap_or(f64::NAN),
                m.unbounded.unwrap_or(f64::NAN),
                m.median_length.unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}
