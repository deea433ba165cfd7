//! Command-line front end.
//!
//! Every run echoes its fully resolved configuration: JSON outputs embed it
//! under `config`, other formats print it to stderr as one JSON line.
//! Exit codes: 0 success, 2 usage, 3 data, 4 numerical degeneracy.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::collider;
use crate::data::{load_csv, IvSample, Schema};
use crate::error::{Error, Result};
use crate::intervals::GridSpec;
use crate::iv_tests::ClrCriticalSource;
use crate::power::{self, PowerSpec, ZDesign};
use crate::procedures::{self, Method, ProcedureConfig, TestKind};
use crate::sim::{self, DgpConfig, ExperimentConfig, GammaMode, SimMethod, SimulationPlan};

#[derive(Debug, Parser, Serialize, Deserialize)]
#[command(name = "ivunion", version, about = "Inference with possibly invalid instruments")]
pub struct Cli {
    /// Master seed for every stochastic component.
    #[arg(long, global = true, env = "IVUNION_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, env = "IVUNION_THREADS")]
    pub threads: Option<usize>,
    /// Output format (default depends on the subcommand).
    #[arg(long, global = true, env = "IVUNION_FORMAT", value_enum)]
    pub format: Option<Format>,
    /// Output file (or directory for `simulate` and `tables`); stdout if absent.
    #[arg(long, global = true, env = "IVUNION_OUT")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Tsv,
}

#[derive(Debug, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "lowercase")]
pub enum Command {
    /// Union (or pretest union) confidence set for the effect.
    Ci(CiArgs),
    /// Collider-bias test of no effect with its critical-value table.
    Collider(ColliderArgs),
    /// Combined union + collider test of no effect.
    Combined(CombinedArgs),
    /// Decisions over s_bar = 1..L, or a grid over alpha1 and methods.
    Sweep(SweepArgs),
    /// Exact AR and local TSLS power curves.
    Power(PowerArgs),
    /// Run a simulation plan and write its tables.
    Simulate(SimulateArgs),
    /// Regenerate the built-in tables.
    Tables(TablesArgs),
    /// Re-run from an echoed config (a JSON output file or its `config` object).
    /// Output goes to this run's `--out`, not the recorded one.
    Replay(ReplayArgs),
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub file: PathBuf,
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long, env = "IVUNION_DATA")]
    pub data: PathBuf,
    /// TOML file with column roles (outcome, exposure, instruments, covariates, add_intercept).
    #[arg(long, env = "IVUNION_SCHEMA")]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub outcome: Option<String>,
    #[arg(long)]
    pub exposure: Option<String>,
    /// Comma-separated instrument columns.
    #[arg(long, value_delimiter = ',')]
    pub instruments: Vec<String>,
    /// Comma-separated covariate columns.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Do not partial out an intercept.
    #[arg(long)]
    pub no_intercept: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClrCritical {
    Tabulated,
    Exact,
    Mc,
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct LevelArgs {
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Sargan pretest level (default alpha / 5); the inversion uses alpha - alpha_s.
    #[arg(long)]
    pub alpha_s: Option<f64>,
    #[arg(long, value_enum, default_value_t = TestArg::Ar)]
    pub test: TestArg,
    #[arg(long)]
    pub pretest: bool,
    #[arg(long, value_enum, default_value_t = ClrCritical::Tabulated)]
    pub clr_critical: ClrCritical,
    /// Draws for Monte-Carlo CLR critical values.
    #[arg(long, default_value_t = 200_000)]
    pub clr_draws: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestArg {
    Tsls,
    Ar,
    Clr,
}

impl From<TestArg> for TestKind {
    fn from(t: TestArg) -> Self {
        match t {
            TestArg::Tsls => TestKind::Tsls,
            TestArg::Ar => TestKind::Ar,
            TestArg::Clr => TestKind::Clr,
        }
    }
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct CiArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Strict upper bound on the number of invalid instruments.
    #[arg(long)]
    pub s_bar: usize,
    #[command(flatten)]
    pub level: LevelArgs,
    /// Include every subset's set in the report.
    #[arg(long)]
    pub keep_per_subset: bool,
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct ColliderArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated levels, one table row each.
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    pub alpha2: Vec<f64>,
    /// Largest s_bar reported (default L).
    #[arg(long)]
    pub s_bar_max: Option<usize>,
    #[arg(long, default_value_t = collider::TABLE_DRAWS)]
    pub draws: usize,
    /// Also report a Monte-Carlo p-value for each s_bar.
    #[arg(long)]
    pub pvalues: bool,
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct CombinedArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub s_bar: usize,
    #[command(flatten)]
    pub level: LevelArgs,
    /// Level of the union part (default alpha / 2); the collider gets alpha - alpha1.
    #[arg(long)]
    pub alpha1: Option<f64>,
    #[arg(long, default_value_t = collider::TABLE_DRAWS)]
    pub draws: usize,
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Comma-separated union levels; more than one value gives the summary grid.
    #[arg(long, value_delimiter = ',')]
    pub alpha1: Vec<f64>,
    /// Comma-separated methods (AR, CLR, TSLS, SarganTSLS, SarganCLR).
    #[arg(long, value_delimiter = ',', default_value = "AR")]
    pub method: Vec<String>,
    /// Summary grid even for a single alpha1.
    #[arg(long)]
    pub grid: bool,
    #[arg(long, default_value_t = collider::TABLE_DRAWS)]
    pub draws: usize,
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct PowerArgs {
    /// TOML power specification; the default is the strong design with identity second moments.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// beta* grid as `lo:hi:points` or a comma-separated list.
    #[arg(long, allow_hyphen_values = true, default_value = "-0.5:0.5:21")]
    pub beta_grid: String,
    /// Add simulated rejection rates with this many replicates. A population
    /// design is first replaced by one Gaussian draw of `Z`.
    #[arg(long)]
    pub simulate: Option<usize>,
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// TOML simulation plan; the default is the strong-instrument coverage study.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the replicate count.
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Table {
    /// Collider critical values for L = 10.
    Collider,
    /// Coverage and length with strong instruments.
    Strong,
    /// Coverage and length with weak instruments.
    Weak,
    /// AR and TSLS power curves.
    Power,
    All,
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct TablesArgs {
    #[arg(long, value_enum, default_value_t = Table::All)]
    pub which: Table,
    #[arg(long, default_value_t = 500)]
    pub replicates: usize,
}

/// Parse `argv`, run, report errors on stderr and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Run a parsed command, inside a pool of `--threads` workers if given.
pub fn execute(cli: &Cli) -> Result<()> {
    match cli.threads {
        Some(0) => Err(Error::InvalidArgument("--threads must be positive".into())),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            pool.install(|| dispatch(cli))
        }
        None => dispatch(cli),
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ci(a) => cmd_ci(cli, a),
        Command::Collider(a) => cmd_collider(cli, a),
        Command::Combined(a) => cmd_combined(cli, a),
        Command::Sweep(a) => cmd_sweep(cli, a),
        Command::Power(a) => cmd_power(cli, a),
        Command::Simulate(a) => cmd_simulate(cli, a),
        Command::Tables(a) => cmd_tables(cli, a),
        Command::Replay(a) => {
            let replayed = read_config(&a.file)?;
            if matches!(replayed.command, Command::Replay(_)) {
                return Err(Error::Config("a replay config cannot itself be a replay".into()));
            }
            let replayed = Cli { out: cli.out.clone(), ..replayed };
            execute(&replayed)
        }
    }
}

/// Parse an echoed config: either a bare config object or a JSON output
/// whose `config` member holds one. The `resolved` member is informational.
pub fn read_config(path: &Path) -> Result<Cli> {
    let text = std::fs::read_to_string(path).or_else(|e| {
        if path.as_os_str() == "-" {
            io::read_to_string(io::stdin())
        } else {
            Err(e)
        }
    })?;
    let line = text.trim().strip_prefix("config:").unwrap_or(text.trim());
    let mut v: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(c) = v.get_mut("config") {
        v = c.take();
    }
    if let Some(m) = v.as_object_mut() {
        m.remove("resolved");
    }
    serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Box::new(File::create(p)?)
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn echo(config: &serde_json::Value) {
    eprintln!("config: {config}");
}

fn emit_json(cli: &Cli, config: serde_json::Value, result: impl Serialize) -> Result<()> {
    let mut w = sink(&cli.out)?;
    serde_json::to_writer_pretty(&mut w, &json!({ "config": config, "result": result }))?;
    writeln!(w)?;
    Ok(())
}

fn config_value(cli: &Cli, extra: serde_json::Value) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(cli)?;
    v["resolved"] = extra;
    Ok(v)
}

fn load(a: &DataArgs) -> Result<(IvSample, serde_json::Value)> {
    let schema = match &a.schema {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            Schema::from_toml_str(&text)?
        }
        None => match (&a.outcome, &a.exposure) {
            (Some(o), Some(e)) if !a.instruments.is_empty() => Schema {
                outcome: o.clone(),
                exposure: e.clone(),
                instruments: a.instruments.clone(),
                covariates: a.covariates.clone(),
                add_intercept: !a.no_intercept,
            },
            _ => {
                return Err(Error::InvalidArgument(
                    "give --schema, or --outcome, --exposure and --instruments".into(),
                ))
            }
        },
    };
    let loaded = load_csv(&a.data, &schema)?;
    let sample = loaded.residualized()?;
    let info = json!({ "schema": schema, "n": sample.n(), "L": sample.l(), "dropped_rows": loaded.dropped_rows });
    Ok((sample, info))
}

fn procedure_config(cli: &Cli, s_bar: usize, lv: &LevelArgs, alpha1: Option<f64>, draws: usize) -> ProcedureConfig {
    let mut cfg = ProcedureConfig::new(s_bar, lv.alpha, lv.test.into());
    if let Some(a_s) = lv.alpha_s {
        cfg.alpha_s = a_s;
        cfg.alpha_t = lv.alpha - a_s;
    }
    if let Some(a1) = alpha1 {
        cfg = cfg.with_alpha1(a1);
    }
    cfg.pretest = lv.pretest;
    cfg.grid = GridSpec {
        critical: match lv.clr_critical {
            ClrCritical::Tabulated => ClrCriticalSource::Tabulated,
            ClrCritical::Exact => ClrCriticalSource::Exact,
            ClrCritical::Mc => ClrCriticalSource::MonteCarlo { draws: lv.clr_draws, seed: cli.seed },
        },
        ..GridSpec::default()
    };
    cfg.collider_draws = draws;
    cfg.seed = cli.seed;
    cfg
}

fn only_json(cli: &Cli, name: &str) -> Result<()> {
    match cli.format {
        None | Some(Format::Json) => Ok(()),
        Some(f) => Err(Error::InvalidArgument(format!("`{name}` writes JSON only (got --format {f:?})"))),
    }
}

fn cmd_ci(cli: &Cli, a: &CiArgs) -> Result<()> {
    only_json(cli, "ci")?;
    let (sample, info) = load(&a.data)?;
    let mut cfg = procedure_config(cli, a.s_bar, &a.level, None, collider::TABLE_DRAWS);
    cfg.keep_per_subset = a.keep_per_subset;
    let report = procedures::run_method(&sample, &cfg)?;
    let config = config_value(cli, json!({ "data": info, "procedure": cfg }))?;
    let decisions = json!({
        "rejects_zero": report.rejects_zero,
        "bounded": report.ci.is_bounded(),
        "empty": report.ci.is_empty(),
        "whole_line": report.ci.is_whole(),
    });
    let mut result = serde_json::to_value(&report)?;
    result["decisions"] = decisions;
    emit_json(cli, config, result)
}

fn cmd_collider(cli: &Cli, a: &ColliderArgs) -> Result<()> {
    let (sample, info) = load(&a.data)?;
    let l = sample.l();
    let s_bar_max = a.s_bar_max.unwrap_or(l);
    if a.alpha2.is_empty() {
        return Err(Error::InvalidArgument("--alpha2 needs at least one value".into()));
    }
    let reports = a
        .alpha2
        .iter()
        .map(|&al| collider::collider_test(&sample, s_bar_max, al, a.draws, cli.seed))
        .collect::<Result<Vec<_>>>()?;
    let pvalues = if a.pvalues {
        let lam = reports[0].lambda_n;
        Some(
            (1..=s_bar_max)
                .map(|s| {
                    let p = collider::collider_pvalue(lam, l, l - s + 1, collider::PVALUE_DRAWS, cli.seed)?;
                    Ok(json!({ "s_bar": s, "v": l - s + 1, "p_value": p }))
                })
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let config = config_value(cli, json!({ "data": info, "s_bar_max": s_bar_max }))?;
    for r in &reports {
        for w in &r.warnings {
            eprintln!("warning: {w}");
        }
    }
    match cli.format.unwrap_or(Format::Csv) {
        Format::Json => emit_json(cli, config, json!({ "reports": reports, "p_values": pvalues })),
        Format::Csv => {
            echo(&config);
            eprintln!("lambda_n = {:.4}", reports[0].lambda_n);
            collider::write_table_layout(l, s_bar_max, &a.alpha2, Some(reports[0].lambda_n), a.draws, cli.seed, sink(&cli.out)?)
        }
        Format::Tsv => Err(Error::InvalidArgument("`collider` writes CSV or JSON".into())),
    }
}

fn cmd_combined(cli: &Cli, a: &CombinedArgs) -> Result<()> {
    only_json(cli, "combined")?;
    let (sample, info) = load(&a.data)?;
    let cfg = procedure_config(cli, a.s_bar, &a.level, a.alpha1, a.draws);
    let report = procedures::combined_test(&sample, &cfg)?;
    let config = config_value(cli, json!({ "data": info, "procedure": cfg }))?;
    emit_json(cli, config, report)
}

fn cmd_sweep(cli: &Cli, a: &SweepArgs) -> Result<()> {
    let (sample, info) = load(&a.data)?;
    let methods = a.method.iter().map(|m| m.parse::<Method>()).collect::<Result<Vec<_>>>()?;
    let alpha1 = if a.alpha1.is_empty() { vec![a.alpha / 2.0] } else { a.alpha1.clone() };
    let mut base = ProcedureConfig::new(1, a.alpha, TestKind::Ar);
    base.collider_draws = a.draws;
    base.seed = cli.seed;
    let config = config_value(cli, json!({ "data": info, "alpha1": alpha1, "base": base }))?;
    let fmt = cli.format.unwrap_or(Format::Csv);
    if a.grid || alpha1.len() > 1 {
        let g = procedures::sweep_grid(&sample, &base, &methods, &alpha1)?;
        return match fmt {
            Format::Json => emit_json(cli, config, g),
            Format::Csv => {
                echo(&config);
                procedures::write_grid_csv(&g, sink(&cli.out)?)
            }
            Format::Tsv => Err(Error::InvalidArgument("`sweep` writes CSV or JSON".into())),
        };
    }
    let reports = methods
        .iter()
        .map(|m| procedures::sensitivity_sweep(&sample, &base.with_method(*m).with_alpha1(alpha1[0])))
        .collect::<Result<Vec<_>>>()?;
    match fmt {
        Format::Json => emit_json(cli, config, reports),
        Format::Csv => {
            echo(&config);
            let mut w = sink(&cli.out)?;
            for (i, r) in reports.iter().enumerate() {
                let mut buf = Vec::new();
                procedures::write_sweep_csv(r, &mut buf)?;
                let text = String::from_utf8_lossy(&buf);
                let body = if i == 0 { &text[..] } else { text.split_once('\n').map_or("", |x| x.1) };
                w.write_all(body.as_bytes())?;
            }
            Ok(())
        }
        Format::Tsv => Err(Error::InvalidArgument("`sweep` writes CSV or JSON".into())),
    }
}

/// `lo:hi:points` or a comma-separated list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidArgument(format!("invalid grid '{s}' (use lo:hi:points or a list)"));
    if let Some((lo, rest)) = s.split_once(':') {
        let (hi, k) = rest.split_once(':').ok_or_else(bad)?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        let k: usize = k.trim().parse().map_err(|_| bad())?;
        if k < 2 || !(hi > lo) {
            return Err(bad());
        }
        Ok((0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect())
    } else {
        s.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| bad())).collect()
    }
}

/// Strong design with `B = {1, 2, 3}`, `pi = (1, 1, 1, 0, ...)`, unit error
/// variances and `n = 250`.
pub fn default_power_spec() -> PowerSpec {
    let l = 10;
    PowerSpec {
        gamma: vec![1.0; l],
        pi: (0..l).map(|j| if j < 3 { 1.0 } else { 0.0 }).collect(),
        beta_star: 0.0,
        beta0: 0.0,
        sigma1: 1.0,
        sigma2: 1.0,
        rho: 0.8,
        z: ZDesign::identity(l, 250),
        b: vec![1, 2, 3],
        delta1: 0.0,
        delta2: vec![],
    }
}

fn cmd_power(cli: &Cli, a: &PowerArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => toml::from_str::<PowerSpec>(&std::fs::read_to_string(p)?).map_err(|e| Error::Config(e.to_string()))?,
        None => default_power_spec(),
    };
    let grid = parse_grid(&a.beta_grid)?;
    let config = config_value(cli, json!({ "spec": spec, "grid": grid }))?;
    if a.simulate.is_some() {
        spec.z = spec.z.realize(cli.seed)?;
    }
    let pts = match a.simulate {
        Some(reps) => power::power_curve_simulated(&spec, a.alpha, &grid, reps, cli.seed)?,
        None => power::power_curve(&spec, a.alpha, &grid)?,
    };
    match cli.format.unwrap_or(Format::Csv) {
        Format::Json => emit_json(cli, config, pts),
        f => {
            echo(&config);
            power::write_curve(&pts, if f == Format::Tsv { b'\t' } else { b',' }, sink(&cli.out)?)
        }
    }
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    only_json(cli, "simulate")?;
    let mut plan = match &a.config {
        Some(p) => SimulationPlan::from_toml_str(&std::fs::read_to_string(p)?)?,
        None => strong_plan(500),
    };
    if let Some(r) = a.replicates {
        plan.experiment.replicates = r;
    }
    if a.config.is_none() || cli.seed != 0 {
        plan.experiment.dgp.seed = cli.seed;
    }
    let config = config_value(cli, json!({ "plan": plan }))?;
    echo(&config);
    let start = Instant::now();
    let results = sim::run_plan(&plan)?;
    let manifest = sim::write_outputs(&plan, &results, start.elapsed().as_secs_f64(), &out_dir(cli))?;
    let mut w = io::stdout().lock();
    serde_json::to_writer_pretty(&mut w, &json!({ "config": config, "result": manifest }))?;
    writeln!(w)?;
    Ok(())
}

fn all_methods() -> Vec<SimMethod> {
    use TestKind::*;
    vec![
        SimMethod::Naive(Tsls),
        SimMethod::Naive(Ar),
        SimMethod::Naive(Clr),
        SimMethod::Union(Tsls),
        SimMethod::Union(Ar),
        SimMethod::Union(Clr),
        SimMethod::Pretest(Tsls),
        SimMethod::Pretest(Clr),
        SimMethod::Oracle(Tsls),
        SimMethod::Oracle(Ar),
        SimMethod::Oracle(Clr),
    ]
}

/// Strong instruments, `s_bar = 5`, `s* = 0..4`, every method.
pub fn strong_plan(replicates: usize) -> SimulationPlan {
    SimulationPlan {
        name: "strong".into(),
        experiment: ExperimentConfig { s_bar: 5, replicates, methods: all_methods(), ..Default::default() },
        s_star: vec![0, 1, 2, 3, 4],
        beta_star: vec![0.0],
    }
}

/// Weak instruments (concentration 5), `s_bar = 5`, `s* = 0..4`.
pub fn weak_plan(replicates: usize) -> SimulationPlan {
    SimulationPlan {
        name: "weak".into(),
        experiment: ExperimentConfig {
            dgp: DgpConfig { gamma: GammaMode::Concentration { target: 5.0 }, ..Default::default() },
            s_bar: 5,
            replicates,
            methods: all_methods(),
            ..Default::default()
        },
        s_star: vec![0, 1, 2, 3, 4],
        beta_star: vec![0.0],
    }
}

fn write_file(dir: &Path, name: &str, f: impl FnOnce(File) -> Result<()>) -> Result<()> {
    f(File::create(dir.join(name))?)?;
    eprintln!("wrote {}", dir.join(name).display());
    Ok(())
}

fn cmd_tables(cli: &Cli, a: &TablesArgs) -> Result<()> {
    let dir = out_dir(cli);
    std::fs::create_dir_all(&dir)?;
    let config = config_value(cli, json!({ "dir": dir }))?;
    echo(&config);
    let want = |t: Table| a.which == t || a.which == Table::All;
    if want(Table::Collider) {
        let alphas = [0.05, 0.025];
        let rows = collider::critical_table(10, &alphas, collider::TABLE_DRAWS, cli.seed)?;
        write_file(&dir, "collider_critical.csv", |f| collider::write_critical_csv(&rows, f))?;
        write_file(&dir, "collider_table.csv", |f| {
            collider::write_table_layout(10, 10, &alphas, None, collider::TABLE_DRAWS, cli.seed, f)
        })?;
    }
    for (t, plan) in [(Table::Strong, strong_plan(a.replicates)), (Table::Weak, weak_plan(a.replicates))] {
        if want(t) {
            let mut plan = plan;
            plan.experiment.dgp.seed = cli.seed;
            let start = Instant::now();
            let results = sim::run_plan(&plan)?;
            sim::write_outputs(&plan, &results, start.elapsed().as_secs_f64(), &dir)?;
            eprintln!("wrote {} tables to {}", plan.name, dir.display());
        }
    }
    if want(Table::Power) {
        let grid = parse_grid("-0.5:0.5:41")?;
        for n in [250usize, 1000] {
            for (label, b) in [("b123", vec![1, 2, 3]), ("b12", vec![1, 2]), ("b1", vec![1])] {
                let mut spec = default_power_spec();
                spec.z = ZDesign::identity(10, n);
                spec.b = b;
                let pts = power::power_curve(&spec, 0.05, &grid)?;
                write_file(&dir, &format!("power_n{n}_{label}.tsv"), |f| power::write_curve(&pts, b'\t', f))?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("0.1, 0.2").unwrap(), vec![0.1, 0.2]);
        assert!(parse_grid("1:0:3").is_err());
        assert!(parse_grid("a,b").is_err());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["ivunion", "ci", "--s-bar", "2"]), 2);
        assert_eq!(run(["ivunion", "bogus"]), 2);
        assert_eq!(run(["ivunion", "--help"]), 0);
    }

    #[test]
    fn env_override() {
        let cli = Cli::try_parse_from(["ivunion", "power"]).unwrap();
        assert_eq!(cli.seed, 0);
    }

    #[test]
    fn default_power_spec_is_valid() {
        default_power_spec().validate().unwrap();
        let p = power::tsls_local_power(&default_power_spec().localized(), 0.05).unwrap();
        assert!((p - 0.05).abs() < 1e-9);
    }
}
