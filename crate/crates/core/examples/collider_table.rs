//! Critical values of the collider-bias test for `L = 10`, one row per
//! level, columns from `s_bar = 10` down to `s_bar = 1`.
//!
//! cargo run --release --example collider_table -- [draws] [seed]

use ivunion::collider::{self, TABLE_DRAWS};

fn main() -> ivunion::Result<()> {
    let mut args = std::env::args().skip(1);
    let draws = args.next().and_then(|s| s.parse().ok()).unwrap_or(TABLE_DRAWS);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let start = std::time::Instant::now();
    collider::write_table_layout(10, 10, &[0.05, 0.025], None, draws, seed, std::io::stdout().lock())?;
    eprintln!("{draws} draws, seed {seed}, {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}
