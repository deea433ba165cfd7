#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ivunion::data::{self, IvSample};
use ivunion::sim::{self, DgpConfig};
use serde_json::Value;

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ivunion"));
    c.env_remove("IVUNION_SEED").env_remove("IVUNION_FORMAT").env_remove("IVUNION_OUT").env_remove("IVUNION_THREADS");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn ivunion")
}

pub fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

/// Write one replicate of `cfg` as CSV; returns the path.
pub fn write_sample(dir: &Path, name: &str, cfg: &DgpConfig, rep: u64) -> (PathBuf, IvSample) {
    let s = sim::generate(cfg, rep).unwrap();
    let path = dir.join(name);
    data::write_csv(&s, std::fs::File::create(&path).unwrap()).unwrap();
    (path, s)
}

pub fn schema(name: &str) -> Value {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

pub fn assert_valid(name: &str, doc: &Value) {
    let s = schema(name);
    let v = jsonschema::draft202012::new(&s).expect("schema compiles");
    let errs: Vec<String> = v.iter_errors(doc).map(|e| format!("{e} at {}", e.instance_path())).collect();
    assert!(errs.is_empty(), "{name}: {errs:?}");
}
