//! Inference on a causal effect when some instruments may be invalid.
//!
//! The crate builds confidence sets as unions over candidate instrument
//! subsets (TSLS, Anderson-Rubin and CLR tests, optionally behind a Sargan
//! pretest), a collider-bias test of no effect, their combination, exact and
//! local power formulas, and a Monte-Carlo harness.
//!
//! ```no_run
//! use ivunion::{data, procedures::{self, ProcedureConfig, TestKind}};
//! let schema = data::Schema::from_toml_str(r#"
//! outcome = "y"
//! exposure = "d"
//! instruments = ["z1", "z2", "z3", "z4"]
//! "#).unwrap();
//! let sample = data::load_csv("study.csv", &schema).unwrap().residualized().unwrap();
//! let report = procedures::run_method(&sample, &ProcedureConfig::new(2, 0.05, TestKind::Ar)).unwrap();
//! println!("{}", report.ci);
//! ```

pub mod cli;
pub mod collider;
pub mod data;
pub mod dist;
pub mod error;
pub mod intervals;
pub mod mc;
pub mod power;
pub mod procedures;
pub mod sim;
pub mod subset;

#[cfg(test)]
pub(crate) mod testutil;

pub use data::{IvSample, Schema};
pub use error::{Error, Result};
pub use intervals::IntervalUnion;
pub use procedures::{Method, ProcedureConfig, TestKind};
pub use subset::SubsetB;
