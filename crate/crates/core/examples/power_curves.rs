//! Exact AR and local TSLS power against `beta*` for three choices of `B`
//! when the invalid set is `{1, 2, 3}`. Writes gnuplot-ready TSV blocks.
//!
//! cargo run --release --example power_curves -- [n]

use ivunion::power::{power_curve, write_curve, PowerSpec, ZDesign};

fn main() -> ivunion::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(250);
    let l = 10;
    let grid: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.02).collect();
    for b in [vec![1, 2, 3], vec![1, 2], vec![1]] {
        let spec = PowerSpec {
            gamma: vec![1.0; l],
            pi: (0..l).map(|j| if j < 3 { 1.0 } else { 0.0 }).collect(),
            beta_star: 0.0,
            beta0: 0.0,
            sigma1: 1.0,
            sigma2: 1.0,
            rho: 0.8,
            z: ZDesign::identity(l, n),
            b: b.clone(),
            delta1: 0.0,
            delta2: vec![],
        };
        println!("# n = {n}, B = {b:?}");
        write_curve(&power_curve(&spec, 0.05, &grid)?, b'\t', std::io::stdout().lock())?;
        println!("\n");
    }
    Ok(())
}
