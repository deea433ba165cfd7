//! Load a CSV, then build union confidence sets for increasing `s_bar`.
//!
//! A set built with `s_bar` allows up to `s_bar - 1` invalid instruments.
//! The data are one draw of the strong-instrument design with two invalid
//! instruments and `beta* = 0.5`, written to a temporary file first.
//!
//! cargo run --release --example quickstart

use ivunion::data::{load_csv, write_csv, Schema};
use ivunion::procedures::run_method;
use ivunion::{Method, ProcedureConfig};
use ivunion::sim::{generate, DgpConfig};

fn main() -> ivunion::Result<()> {
    let dir = std::env::temp_dir().join("ivunion-quickstart");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("study.csv");
    let truth = DgpConfig { beta_star: 0.5, ..DgpConfig::strong(2) };
    write_csv(&generate(&truth, 0)?, std::fs::File::create(&path)?)?;

    let schema = Schema::from_toml_str(
        r#"
        outcome = "y"
        exposure = "d"
        instruments = ["z1", "z2", "z3", "z4", "z5", "z6", "z7", "z8", "z9", "z10"]
        "#,
    )?;
    let loaded = load_csv(&path, &schema)?;
    let sample = loaded.residualized()?;
    println!("n = {}, L = {}, {} rows dropped\n", sample.n(), sample.l(), loaded.dropped_rows);

    println!("{:<12}{:>6}  confidence set", "method", "s_bar");
    for m in Method::ALL {
        for s_bar in 1..=4 {
            let cfg = ProcedureConfig::new(s_bar, 0.05, m.test).with_method(m);
            match run_method(&sample, &cfg) {
                Ok(r) => println!("{:<12}{:>6}  {}", m.label(), s_bar, r.ci),
                Err(e) => println!("{:<12}{:>6}  ({e})", m.label(), s_bar),
            }
        }
    }
    println!("\ntrue effect: {}", truth.beta_star);
    Ok(())
}
