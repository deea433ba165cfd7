//! Coverage and median length of union, pretest and oracle intervals with
//! strong instruments, `n = 1000`, `L = 10`, `s_bar = 5`.
//!
//! cargo run --release --example strong_instruments -- [replicates]

use ivunion::procedures::TestKind;
use ivunion::sim::{run_plan, ExperimentConfig, SimMethod, SimulationPlan};

fn main() -> ivunion::error::Result<()> {
    let reps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let plan = SimulationPlan {
        name: "strong".into(),
        experiment: ExperimentConfig {
            s_bar: 5,
            replicates: reps,
            methods: vec![
                SimMethod::Naive(TestKind::Tsls),
                SimMethod::Union(TestKind::Tsls),
                SimMethod::Union(TestKind::Ar),
                SimMethod::Pretest(TestKind::Tsls),
                SimMethod::Oracle(TestKind::Tsls),
                SimMethod::Oracle(TestKind::Ar),
            ],
            ..Default::default()
        },
        s_star: vec![0, 1, 2, 3, 4],
        beta_star: vec![0.0],
    };
    let results = run_plan(&plan)?;
    println!("{:<14}{:>28}{:>40}", "", "coverage (%)", "median length");
    print!("{:<14}", "method");
    for r in &results {
        print!("{:>8}", format!("s*={}", r.design.dgp.s_star));
    }
    for r in &results {
        print!("{:>8}", format!("s*={}", r.design.dgp.s_star));
    }
    println!();
    for (i, m) in plan.experiment.methods.iter().enumerate() {
        print!("{:<14}", m.to_string());
        for r in &results {
            print!("{:>8.1}", r.methods[i].coverage.unwrap_or(f64::NAN));
        }
        for r in &results {
            print!("{:>8.3}", r.methods[i].median_length.unwrap_or(f64::NAN));
        }
        println!();
    }
    let secs: f64 = results.iter().map(|r| r.runtime_secs).sum();
    println!("\n{reps} replicates per cell, {secs:.1} s");
    Ok(())
}
