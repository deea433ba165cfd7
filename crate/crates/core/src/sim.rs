//! Data-generating processes and replicated experiments.
//!
//! The model is `Y = Z pi + D beta + eps`, `D = Z gamma + xi` with
//! `Var(xi) = sigma1^2`, `Var(eps) = sigma2^2`, `Cov = rho sigma1 sigma2`,
//! independent instruments and a uniform first stage `gamma_j = c` chosen to
//! hit a target concentration for the valid instruments.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collider;
use crate::data::{residualize_fwl, sample_cov, CovariateBlock, IvSample, ProjectionSpec};
use crate::error::{Error, Result};
use crate::intervals::{GridSpec, IntervalUnion};
use crate::mc::{self, rng_for, tag};
use crate::procedures::{run_method, ProcedureConfig, TestKind};
use crate::subset::SubsetB;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZKind {
    /// Independent `N(0, v_j)`; empty `variances` means all ones.
    Gaussian {
        #[serde(default)]
        variances: Vec<f64>,
    },
    Bernoulli { p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YKind {
    Linear,
    /// `Y ~ Bernoulli(logistic(Z pi + D beta + eps))`.
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GammaMode {
    Concentration { target: f64 },
    Explicit { gamma: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DgpConfig {
    pub n: usize,
    pub l: usize,
    pub beta_star: f64,
    /// Number of invalid instruments; the first `s_star` entries of `pi`
    /// equal `pi_magnitude` unless `pi` is given.
    pub s_star: usize,
    pub pi_magnitude: f64,
    pub pi: Option<Vec<f64>>,
    pub gamma: GammaMode,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub z_kind: ZKind,
    pub y_kind: YKind,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            n: 1000,
            l: 10,
            beta_star: 0.0,
            s_star: 0,
            pi_magnitude: 1.0,
            pi: None,
            gamma: GammaMode::Concentration { target: 100.0 },
            sigma1: 2.0,
            sigma2: 2.0,
            rho: 0.8,
            z_kind: ZKind::Gaussian { variances: Vec::new() },
            y_kind: YKind::Linear,
            seed: 0,
        }
    }
}

impl DgpConfig {
    pub fn strong(s_star: usize) -> Self {
        DgpConfig { s_star, ..Default::default() }
    }

    pub fn weak(s_star: usize) -> Self {
        DgpConfig { s_star, gamma: GammaMode::Concentration { target: 5.0 }, ..Default::default() }
    }

    pub fn pi_vector(&self) -> Vec<f64> {
        match &self.pi {
            Some(p) => p.clone(),
            None => (0..self.l).map(|j| if j < self.s_star { self.pi_magnitude } else { 0.0 }).collect(),
        }
    }

    /// True invalid set `B*`.
    pub fn invalid_set(&self) -> Result<SubsetB> {
        let idx = self.pi_vector().iter().enumerate().filter(|(_, p)| **p != 0.0).map(|(j, _)| j).collect();
        SubsetB::new(idx, self.l)
    }

    /// `Var(Z_j)` for each instrument.
    pub fn z_variances(&self) -> Vec<f64> {
        match &self.z_kind {
            ZKind::Gaussian { variances } if variances.is_empty() => vec![1.0; self.l],
            ZKind::Gaussian { variances } => variances.clone(),
            ZKind::Bernoulli { p } => vec![p * (1.0 - p); self.l],
        }
    }

    /// Whether analyses should partial out an intercept first.
    pub fn needs_centering(&self) -> bool {
        matches!(self.z_kind, ZKind::Bernoulli { .. }) || self.y_kind == YKind::Logistic
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.l == 0 || self.n <= self.l + 2 {
            return bad(format!("need L >= 1 and n > L + 2 (n = {}, L = {})", self.n, self.l));
        }
        if let Some(p) = &self.pi {
            if p.len() != self.l {
                return bad(format!("pi has length {} but L = {}", p.len(), self.l));
            }
        } else if self.s_star >= self.l {
            return bad(format!("s_star = {} must be below L = {}", self.s_star, self.l));
        }
        if self.invalid_set()?.size() >= self.l {
            return bad("at least one instrument must be valid".into());
        }
        if !(self.sigma1 > 0.0 && self.sigma2 > 0.0 && self.rho.abs() < 1.0) {
            return bad("need sigma1, sigma2 > 0 and |rho| < 1".into());
        }
        match &self.z_kind {
            ZKind::Gaussian { variances } if !variances.is_empty() => {
                if variances.len() != self.l || variances.iter().any(|v| !(*v > 0.0)) {
                    return bad("variances must be L positive numbers".into());
                }
            }
            ZKind::Bernoulli { p } if !(*p > 0.0 && *p < 1.0) => return bad(format!("Bernoulli p = {p} must lie in (0, 1)")),
            _ => {}
        }
        match &self.gamma {
            GammaMode::Concentration { target } if !(*target > 0.0) => bad("concentration target must be positive".into()),
            GammaMode::Explicit { gamma } if gamma.len() != self.l => bad(format!("gamma must have length L = {}", self.l)),
            _ => Ok(()),
        }
    }
}

/// Uniform first-stage coefficient for a target expected first-stage F of
/// the valid instruments. With `v` valid instruments the concentration
/// `lambda = n c^2 sum_V Var(Z_j) / sigma1^2` satisfies
/// `E[F] = (1 + lambda / v)(n - L) / (n - L - 2)`.
pub fn calibrate_gamma(cfg: &DgpConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    match &cfg.gamma {
        GammaMode::Explicit { gamma } => Ok(gamma.clone()),
        GammaMode::Concentration { target } => {
            let b = cfg.invalid_set()?;
            let v = (cfg.l - b.size()) as f64;
            let df2 = (cfg.n - cfg.l) as f64;
            let lambda = target * v * (df2 - 2.0) / df2 - v;
            if !(lambda > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "concentration target {target} is not attainable (needs target > (n - L) / (n - L - 2))"
                )));
            }
            let var = cfg.z_variances();
            let sum_v: f64 = b.complement().iter().map(|&j| var[j]).sum();
            let c = cfg.sigma1 * (lambda / (cfg.n as f64 * sum_v)).sqrt();
            Ok(vec![c; cfg.l])
        }
    }
}

/// One replicate with the structural errors kept.
#[derive(Debug, Clone)]
pub struct SimDraw {
    pub sample: IvSample,
    pub eps: DVector<f64>,
    pub xi: DVector<f64>,
}

/// Draw replicate `rep`, using an already calibrated `gamma`.
pub fn generate_with(cfg: &DgpConfig, gamma: &[f64], rep: u64) -> Result<SimDraw> {
    let (n, l) = (cfg.n, cfg.l);
    let mut rng = rng_for(cfg.seed, &[tag::SIM_REPLICATE, rep]);
    let z = match &cfg.z_kind {
        ZKind::Gaussian { .. } => {
            let sd: Vec<f64> = cfg.z_variances().iter().map(|v| v.sqrt()).collect();
            DMatrix::from_fn(n, l, |_, j| {
                let x: f64 = StandardNormal.sample(&mut rng);
                sd[j] * x
            })
        }
        ZKind::Bernoulli { p } => DMatrix::from_fn(n, l, |_, _| if rng.random::<f64>() < *p { 1.0 } else { 0.0 }),
    };
    let sq = (1.0 - cfg.rho * cfg.rho).sqrt();
    let mut xi = DVector::zeros(n);
    let mut eps = DVector::zeros(n);
    for i in 0..n {
        let u1: f64 = StandardNormal.sample(&mut rng);
        let u2: f64 = StandardNormal.sample(&mut rng);
        xi[i] = cfg.sigma1 * u1;
        eps[i] = cfg.sigma2 * (cfg.rho * u1 + sq * u2);
    }
    let d = &z * DVector::from_column_slice(gamma) + &xi;
    let index = &z * DVector::from_vec(cfg.pi_vector()) + &d * cfg.beta_star + &eps;
    let y = match cfg.y_kind {
        YKind::Linear => index,
        YKind::Logistic => index.map(|t| if rng.random::<f64>() < 1.0 / (1.0 + (-t).exp()) { 1.0 } else { 0.0 }),
    };
    let sample = IvSample::new(y, d, z, None)?;
    Ok(SimDraw { sample, eps, xi })
}

pub fn generate_parts(cfg: &DgpConfig, rep: u64) -> Result<SimDraw> {
    generate_with(cfg, &calibrate_gamma(cfg)?, rep)
}

/// Replicate `rep`; deterministic in `(cfg.seed, rep)`.
pub fn generate(cfg: &DgpConfig, rep: u64) -> Result<IvSample> {
    Ok(generate_parts(cfg, rep)?.sample)
}

/// F statistic for the coefficients of the instruments outside `invalid` in
/// the regression of `D` on `Z`.
pub fn first_stage_f(sample: &IvSample, invalid: &SubsetB) -> Result<f64> {
    let v = (sample.l() - invalid.size()) as f64;
    let num = sample.quad_form(sample.d(), ProjectionSpec::PzMinusPzB, invalid)? / v;
    let den = sample.quad_form(sample.d(), ProjectionSpec::Rz, invalid)? / (sample.n() - sample.l()) as f64;
    Ok(num / den)
}

/// A method evaluated in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SimMethod {
    /// Assume every instrument is valid (`s_bar = 1`).
    Naive(TestKind),
    Union(TestKind),
    /// Union behind a Sargan pretest.
    Pretest(TestKind),
    /// Invert under the true invalid set.
    Oracle(TestKind),
    /// Collider test of no effect at `alpha`.
    Collider,
    /// Union at `alpha / 2` combined with the collider test at `alpha / 2`.
    Combined(TestKind),
}

impl SimMethod {
    pub fn has_ci(&self) -> bool {
        !matches!(self, SimMethod::Collider | SimMethod::Combined(_))
    }
}

impl fmt::Display for SimMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimMethod::Naive(t) => write!(f, "naive-{t}"),
            SimMethod::Union(t) => write!(f, "union-{t}"),
            SimMethod::Pretest(t) => write!(f, "sargan-{t}"),
            SimMethod::Oracle(t) => write!(f, "oracle-{t}"),
            SimMethod::Collider => f.write_str("collider"),
            SimMethod::Combined(t) => write!(f, "combined-{t}"),
        }
    }
}

impl FromStr for SimMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        if lower == "collider" {
            return Ok(SimMethod::Collider);
        }
        let (head, test) = lower
            .split_once('-')
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}' (expected e.g. union-ar)")))?;
        let t: TestKind = test.parse()?;
        match head {
            "naive" => Ok(SimMethod::Naive(t)),
            "union" => Ok(SimMethod::Union(t)),
            "sargan" | "pretest" => Ok(SimMethod::Pretest(t)),
            "oracle" => Ok(SimMethod::Oracle(t)),
            "combined" => Ok(SimMethod::Combined(t)),
            _ => Err(Error::InvalidArgument(format!("unknown method '{s}'"))),
        }
    }
}

impl Serialize for SimMethod {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SimMethod {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dgp: DgpConfig,
    pub s_bar: usize,
    pub alpha: f64,
    pub methods: Vec<SimMethod>,
    pub replicates: usize,
    pub grid: GridSpec,
    pub collider_draws: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dgp: DgpConfig::default(),
            s_bar: 5,
            alpha: 0.05,
            methods: vec![
                SimMethod::Naive(TestKind::Tsls),
                SimMethod::Union(TestKind::Ar),
                SimMethod::Oracle(TestKind::Ar),
            ],
            replicates: 500,
            grid: GridSpec::default(),
            collider_draws: collider::TABLE_DRAWS,
        }
    }
}

/// Per-method summary. Rates are percentages.
#[derive(Debug, Clone, Serialize)]
pub struct MethodResult {
    pub method: SimMethod,
    pub coverage: Option<f64>,
    pub coverage_se: Option<f64>,
    #[serde(serialize_with = "crate::intervals::serialize_extended_opt")]
    pub median_length: Option<f64>,
    /// Half-width of a distribution-free 68% interval for the median.
    pub median_length_se: Option<f64>,
    pub unbounded: Option<f64>,
    /// Rejection of `beta = 0`.
    pub rejection: f64,
    pub rejection_se: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub design: ExperimentConfig,
    pub gamma: Vec<f64>,
    pub methods: Vec<MethodResult>,
    pub replicates: usize,
    pub runtime_secs: f64,
}

impl ExperimentResult {
    pub fn get(&self, m: SimMethod) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == m)
    }
}

#[derive(Debug, Clone)]
struct Outcome {
    ci: Option<IntervalUnion>,
    reject: bool,
}

struct Prepared {
    gamma: Vec<f64>,
    invalid: SubsetB,
    collider_crit: Option<f64>,
    combined_crit: Option<f64>,
}

fn collider_rejects(sample: &IvSample, crit: f64) -> Result<bool> {
    let (lam, _) = collider::lambda_stat(&sample_cov(sample)?, sample.n())?;
    Ok(lam > crit)
}

fn run_one(cfg: &ExperimentConfig, prep: &Prepared, sample: &IvSample, m: SimMethod) -> Result<Outcome> {
    let base = |s_bar: usize, test: TestKind| {
        let mut c = ProcedureConfig::new(s_bar, cfg.alpha, test);
        c.grid = cfg.grid;
        c
    };
    let from_union = |c: ProcedureConfig| -> Result<Outcome> {
        let r = run_method(sample, &c)?;
        Ok(Outcome { reject: r.rejects_zero, ci: Some(r.ci) })
    };
    match m {
        SimMethod::Naive(t) => from_union(base(1, t)),
        SimMethod::Union(t) => from_union(base(cfg.s_bar, t)),
        SimMethod::Pretest(t) => from_union(base(cfg.s_bar, t).with_pretest(true)),
        SimMethod::Oracle(t) => {
            let g = crate::iv_tests::SubsetGram::new(sample, &prep.invalid)?;
            let ci = match t {
                TestKind::Tsls => crate::intervals::invert_tsls_gram(&g, cfg.alpha),
                TestKind::Ar => crate::intervals::invert_ar_gram(&g, cfg.alpha).map(|i| i.set),
                TestKind::Clr => crate::intervals::invert_clr_gram(&g, cfg.alpha, &cfg.grid),
            };
            let ci = match ci {
                Err(e) if e.is_numerical() => IntervalUnion::whole(),
                other => other?,
            };
            Ok(Outcome { reject: !ci.contains(0.0), ci: Some(ci) })
        }
        SimMethod::Collider => {
            Ok(Outcome { ci: None, reject: collider_rejects(sample, prep.collider_crit.expect("prepared"))? })
        }
        SimMethod::Combined(t) => {
            let mut c = base(cfg.s_bar, t);
            c.alpha = cfg.alpha / 2.0;
            c.alpha_s = c.alpha / 5.0;
            c.alpha_t = c.alpha * 4.0 / 5.0;
            c = c.with_alpha1(c.alpha);
            let union = run_method(sample, &c)?.rejects_zero;
            let coll = collider_rejects(sample, prep.combined_crit.expect("prepared"))?;
            Ok(Outcome { ci: None, reject: union || coll })
        }
    }
}

fn rate(hits: usize, total: usize) -> (f64, f64) {
    let p = hits as f64 / total as f64;
    (100.0 * p, 100.0 * (p * (1.0 - p) / total as f64).sqrt())
}

fn median_se(lengths: &[f64]) -> f64 {
    let mut v = lengths.to_vec();
    mc::sort_floats(&mut v);
    let r = v.len() as f64;
    let lo = ((r / 2.0 - r.sqrt() / 2.0).floor().max(0.0) as usize).min(v.len() - 1);
    let hi = ((r / 2.0 + r.sqrt() / 2.0).ceil() as usize).min(v.len() - 1);
    0.5 * (v[hi] - v[lo])
}

/// Run every method on `cfg.replicates` replicates of one design.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let start = Instant::now();
    let dgp = &cfg.dgp;
    dgp.validate()?;
    if cfg.replicates == 0 {
        return Err(Error::InvalidArgument("replicates must be positive".into()));
    }
    if cfg.s_bar == 0 || cfg.s_bar > dgp.l {
        return Err(Error::InvalidArgument(format!("s_bar must lie in 1..={}", dgp.l)));
    }
    let needs_collider = cfg.methods.iter().any(|m| matches!(m, SimMethod::Collider));
    let needs_combined = cfg.methods.iter().any(|m| matches!(m, SimMethod::Combined(_)));
    let v = dgp.l - cfg.s_bar + 1;
    let crit = |a: f64| -> Result<f64> { Ok(collider::critical_values(dgp.l, a, cfg.collider_draws, dgp.seed)?[v - 1]) };
    let prep = Prepared {
        gamma: calibrate_gamma(dgp)?,
        invalid: dgp.invalid_set()?,
        collider_crit: if needs_collider { Some(crit(cfg.alpha)?) } else { None },
        combined_crit: if needs_combined { Some(crit(cfg.alpha / 2.0)?) } else { None },
    };
    let per_rep: Vec<Vec<Outcome>> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|rep| -> Result<Vec<Outcome>> {
            let mut sample = generate_with(dgp, &prep.gamma, rep)?.sample;
            if dgp.needs_centering() {
                sample = residualize_fwl(&sample, &CovariateBlock::intercept_only(dgp.n))?;
            }
            cfg.methods.iter().map(|&m| run_one(cfg, &prep, &sample, m)).collect()
        })
        .collect::<Result<_>>()?;
    let r = cfg.replicates;
    let methods = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let outs: Vec<&Outcome> = per_rep.iter().map(|o| &o[i]).collect();
            let (rejection, rejection_se) = rate(outs.iter().filter(|o| o.reject).count(), r);
            let mut res = MethodResult {
                method: m,
                coverage: None,
                coverage_se: None,
                median_length: None,
                median_length_se: None,
                unbounded: None,
                rejection,
                rejection_se,
                replicates: r,
            };
            if m.has_ci() {
                let cis: Vec<&IntervalUnion> = outs.iter().filter_map(|o| o.ci.as_ref()).collect();
                let (cov, cov_se) = rate(cis.iter().filter(|c| c.contains(dgp.beta_star)).count(), r);
                let lengths: Vec<f64> = cis.iter().map(|c| c.length()).collect();
                res.coverage = Some(cov);
                res.coverage_se = Some(cov_se);
                res.median_length = Some(mc::median(&lengths));
                res.median_length_se = Some(median_se(&lengths));
                res.unbounded = Some(rate(cis.iter().filter(|c| !c.is_bounded()).count(), r).0);
            }
            res
        })
        .collect();
    Ok(ExperimentResult {
        design: cfg.clone(),
        gamma: prep.gamma,
        methods,
        replicates: r,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// Design grid: the base experiment repeated over `s_star` and `beta_star`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationPlan {
    pub name: String,
    pub experiment: ExperimentConfig,
    pub s_star: Vec<usize>,
    pub beta_star: Vec<f64>,
}

impl Default for SimulationPlan {
    fn default() -> Self {
        SimulationPlan { name: "simulation".into(), experiment: ExperimentConfig::default(), s_star: vec![0, 1, 2, 3, 4], beta_star: vec![0.0] }
    }
}

impl SimulationPlan {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }
}

pub fn run_plan(plan: &SimulationPlan) -> Result<Vec<ExperimentResult>> {
    let mut out = Vec::new();
    for &beta in &plan.beta_star {
        for &s in &plan.s_star {
            let mut e = plan.experiment.clone();
            e.dgp.s_star = s;
            e.dgp.beta_star = beta;
            log::info!("running s* = {s}, beta* = {beta}");
            out.push(run_experiment(&e)?);
        }
    }
    Ok(out)
}

/// Long format: one row per design and method.
pub fn write_results_csv<W: std::io::Write>(results: &[ExperimentResult], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "s_star",
        "beta_star",
        "s_bar",
        "method",
        "coverage",
        "coverage_se",
        "median_length",
        "median_length_se",
        "unbounded",
        "rejection",
        "rejection_se",
        "replicates",
    ])?;
    let opt = |x: Option<f64>| x.map_or_else(String::new, fmt_num);
    for r in results {
        for m in &r.methods {
            wtr.write_record([
                r.design.dgp.s_star.to_string(),
                r.design.dgp.beta_star.to_string(),
                r.design.s_bar.to_string(),
                m.method.to_string(),
                opt(m.coverage),
                opt(m.coverage_se),
                opt(m.median_length),
                opt(m.median_length_se),
                opt(m.unbounded),
                fmt_num(m.rejection),
                fmt_num(m.rejection_se),
                m.replicates.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

fn fmt_num(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.3}")
    }
}

/// Which summary a wide table shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Coverage,
    MedianLength,
    Rejection,
}

/// Wide format: one row per method, one column per `s_star`, for a single
/// `beta_star`.
pub fn write_wide_csv<W: std::io::Write>(results: &[ExperimentResult], metric: Metric, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["method".to_string()];
    header.extend(results.iter().map(|r| format!("s*={}", r.design.dgp.s_star)));
    wtr.write_record(&header)?;
    let methods: Vec<SimMethod> = results.first().map(|r| r.methods.iter().map(|m| m.method).collect()).unwrap_or_default();
    for m in methods {
        let mut rec = vec![m.to_string()];
        for r in results {
            let mr = r.get(m);
            let v = mr.and_then(|x| match metric {
                Metric::Coverage => x.coverage,
                Metric::MedianLength => x.median_length,
                Metric::Rejection => Some(x.rejection),
            });
            rec.push(v.map_or_else(String::new, fmt_num));
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub name: String,
    pub seed: u64,
    pub git_describe: String,
    pub runtime_secs: f64,
    pub workers: usize,
    pub files: Vec<String>,
    pub plan: SimulationPlan,
}

pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

/// Write `results.csv`, the wide coverage/length/rejection tables (one set
/// per `beta_star`) and `manifest.json` into `dir`.
pub fn write_outputs(plan: &SimulationPlan, results: &[ExperimentResult], runtime_secs: f64, dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut save = |name: String, f: &dyn Fn(std::fs::File) -> Result<()>| -> Result<()> {
        let path: PathBuf = dir.join(&name);
        f(std::fs::File::create(&path)?)?;
        files.push(name);
        Ok(())
    };
    save(format!("{}_results.csv", plan.name), &|f| write_results_csv(results, f))?;
    for &beta in &plan.beta_star {
        let rows: Vec<ExperimentResult> = results.iter().filter(|r| r.design.dgp.beta_star == beta).cloned().collect();
        let suffix = if plan.beta_star.len() > 1 { format!("_beta{beta}") } else { String::new() };
        for (metric, label) in [(Metric::Coverage, "coverage"), (Metric::MedianLength, "length"), (Metric::Rejection, "rejection")] {
            save(format!("{}_{label}{suffix}.csv", plan.name), &|f| write_wide_csv(&rows, metric, f))?;
        }
    }
    let manifest = Manifest {
        name: plan.name.clone(),
        seed: plan.experiment.dgp.seed,
        git_describe: git_describe(),
        runtime_secs,
        workers: rayon::current_num_threads(),
        files: files.clone(),
        plan: plan.clone(),
    };
    let mpath = dir.join(format!("{}_manifest.json", plan.name));
    serde_json::to_writer_pretty(std::fs::File::create(mpath)?, &manifest)?;
    Ok(manifest)
}
