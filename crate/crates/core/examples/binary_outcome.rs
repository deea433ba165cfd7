//! Rejection rates of the collider, union and combined tests when the
//! outcome is binary (logistic link) and instruments are Bernoulli.
//!
//! cargo run --release --example binary_outcome -- [replicates]

use ivunion::sim::{run_experiment, DgpConfig, ExperimentConfig, SimMethod, YKind, ZKind};
use ivunion::TestKind;

fn main() -> ivunion::Result<()> {
    let reps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    println!("{:>6}{:>5}{:>10}{:>10}{:>10}", "beta*", "s*", "collider", "union-ar", "combined");
    for beta_star in [0.0, -0.5, 0.5] {
        for s_star in [2, 6] {
            let dgp = DgpConfig {
                beta_star,
                z_kind: ZKind::Bernoulli { p: 0.3 },
                y_kind: YKind::Logistic,
                ..DgpConfig::strong(s_star)
            };
            let cfg = ExperimentConfig {
                dgp,
                s_bar: s_star + 1,
                replicates: reps,
                methods: vec![SimMethod::Collider, SimMethod::Union(TestKind::Ar), SimMethod::Combined(TestKind::Ar)],
                ..Default::default()
            };
            let r = run_experiment(&cfg)?;
            let rej: Vec<f64> = r.methods.iter().map(|m| m.rejection).collect();
            println!("{:>6}{:>5}{:>10.1}{:>10.1}{:>10.1}", beta_star, s_star, rej[0], rej[1], rej[2]);
        }
    }
    Ok(())
}
