//! Union confidence sets over candidate invalid sets, the Sargan-pretest
//! variant, the combined test of no effect and the `s_bar` sweep.
//!
//! `s_bar` is a strict upper bound on the number of invalid instruments
//! (`s* < s_bar`). Every procedure enumerates all `B` with
//! `c(B) = s_bar - 1` in lexicographic order.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collider::{self, ColliderReport};
use crate::data::IvSample;
use crate::error::{Error, Result};
use crate::intervals::{invert_ar_gram, invert_clr_gram, invert_tsls_gram, GridSpec, IntervalUnion};
use crate::iv_tests::{SubsetGram, TestOutcome};
use crate::subset::{binomial, enumerate, SubsetB};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Tsls,
    Ar,
    Clr,
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestKind::Tsls => "tsls",
            TestKind::Ar => "ar",
            TestKind::Clr => "clr",
        })
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsls" => Ok(TestKind::Tsls),
            "ar" => Ok(TestKind::Ar),
            "clr" => Ok(TestKind::Clr),
            other => Err(Error::InvalidArgument(format!("unknown test '{other}' (expected tsls, ar or clr)"))),
        }
    }
}

/// A union procedure: the inverted test, optionally behind a Sargan pretest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Method {
    pub test: TestKind,
    pub pretest: bool,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method { test: TestKind::Ar, pretest: false },
        Method { test: TestKind::Clr, pretest: false },
        Method { test: TestKind::Tsls, pretest: false },
        Method { test: TestKind::Tsls, pretest: true },
        Method { test: TestKind::Clr, pretest: true },
    ];

    pub fn label(&self) -> String {
        let t = match self.test {
            TestKind::Tsls => "TSLS",
            TestKind::Ar => "AR",
            TestKind::Clr => "CLR",
        };
        if self.pretest {
            format!("Sargan{t}")
        } else {
            t.to_string()
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let (pretest, rest) = match lower.strip_prefix("sargan") {
            Some(r) => (true, r.trim_start_matches(['-', '_'])),
            None => (false, lower.as_str()),
        };
        Ok(Method { test: rest.parse()?, pretest })
    }
}

const SPLIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcedureConfig {
    pub s_bar: usize,
    pub alpha: f64,
    pub alpha_s: f64,
    pub alpha_t: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub test: TestKind,
    pub pretest: bool,
    pub grid: GridSpec,
    pub keep_per_subset: bool,
    pub collider_draws: usize,
    pub seed: u64,
}

impl ProcedureConfig {
    /// Default splits: `alpha_s = alpha / 5`, `alpha_t = 4 alpha / 5`,
    /// `alpha1 = alpha2 = alpha / 2`.
    pub fn new(s_bar: usize, alpha: f64, test: TestKind) -> Self {
        ProcedureConfig {
            s_bar,
            alpha,
            alpha_s: alpha / 5.0,
            alpha_t: alpha * 4.0 / 5.0,
            alpha1: alpha / 2.0,
            alpha2: alpha / 2.0,
            test,
            pretest: false,
            grid: GridSpec::default(),
            keep_per_subset: false,
            collider_draws: collider::TABLE_DRAWS,
            seed: 0,
        }
    }

    pub fn with_pretest(mut self, pretest: bool) -> Self {
        self.pretest = pretest;
        self
    }

    pub fn with_method(mut self, m: Method) -> Self {
        self.test = m.test;
        self.pretest = m.pretest;
        self
    }

    pub fn method(&self) -> Method {
        Method { test: self.test, pretest: self.pretest }
    }

    /// Set `alpha1` and `alpha2 = alpha - alpha1`.
    pub fn with_alpha1(mut self, alpha1: f64) -> Self {
        self.alpha1 = alpha1;
        self.alpha2 = self.alpha - alpha1;
        self
    }

    /// Check the parameters against an instrument count `l`.
    pub fn validate(&self, l: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        for (name, a) in [("alpha_s", self.alpha_s), ("alpha_t", self.alpha_t), ("alpha1", self.alpha1), ("alpha2", self.alpha2)] {
            if !(0.0..=self.alpha).contains(&a) {
                return bad(format!("{name} = {a} must lie in [0, alpha]"));
            }
        }
        if (self.alpha_s + self.alpha_t - self.alpha).abs() > SPLIT_TOL {
            return bad(format!("alpha_s + alpha_t = {} must equal alpha = {}", self.alpha_s + self.alpha_t, self.alpha));
        }
        if (self.alpha1 + self.alpha2 - self.alpha).abs() > SPLIT_TOL {
            return bad(format!("alpha1 + alpha2 = {} must equal alpha = {}", self.alpha1 + self.alpha2, self.alpha));
        }
        if self.s_bar < 1 || self.s_bar > l {
            return bad(format!("s_bar must lie in 1..={l}, got {}", self.s_bar));
        }
        if self.pretest {
            if l + 1 < self.s_bar + 2 {
                return bad(format!(
                    "the Sargan pretest needs at least two instruments outside B (L - (s_bar - 1) >= 2); s_bar = {} is too large for L = {l}",
                    self.s_bar
                ));
            }
            if self.alpha_s <= 0.0 || self.alpha_t <= 0.0 {
                return bad("the pretest needs alpha_s > 0 and alpha_t > 0".into());
            }
        }
        self.grid.validate()
    }
}

/// Result for one candidate invalid set.
#[derive(Debug, Clone, Serialize)]
pub struct SubsetResult {
    pub subset: SubsetB,
    pub ci: IntervalUnion,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pretest: Option<TestOutcome>,
    pub retained: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnionReport {
    pub s_bar: usize,
    pub test: TestKind,
    pub method: String,
    pub pretest: bool,
    /// Level of each inverted test.
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_t: Option<f64>,
    pub ci: IntervalUnion,
    #[serde(serialize_with = "crate::intervals::serialize_extended")]
    pub length: f64,
    pub rejects_zero: bool,
    pub subsets_evaluated: usize,
    pub subsets_pretest_passed: usize,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_subset: Option<Vec<SubsetResult>>,
}

/// Invert `test` for one subset at `alpha`. Degenerate designs give the
/// whole line and a note.
fn invert_subset(g: &SubsetGram, test: TestKind, alpha: f64, grid: &GridSpec) -> Result<(IntervalUnion, Option<String>)> {
    let res = match test {
        TestKind::Tsls => invert_tsls_gram(g, alpha).map(|s| (s, None)),
        TestKind::Ar => invert_ar_gram(g, alpha).map(|i| (i.set, i.note)),
        TestKind::Clr => invert_clr_gram(g, alpha, grid).map(|s| (s, None)),
    };
    match res {
        Err(e) if e.is_numerical() => Ok((IntervalUnion::whole(), Some(format!("{e}; subset contributes the whole line")))),
        other => other,
    }
}

fn evaluate_subset(
    sample: &IvSample,
    b: SubsetB,
    test: TestKind,
    alpha_inv: f64,
    alpha_s: Option<f64>,
    grid: &GridSpec,
) -> Result<SubsetResult> {
    let g = match SubsetGram::new(sample, &b) {
        Ok(g) => g,
        Err(e) if e.is_numerical() => {
            return Ok(SubsetResult {
                subset: b,
                ci: IntervalUnion::whole(),
                pretest: None,
                retained: true,
                note: Some(format!("{e}; subset contributes the whole line")),
            })
        }
        Err(e) => return Err(e),
    };
    let mut notes = Vec::new();
    let mut pretest = None;
    if let Some(a_s) = alpha_s {
        match g.sargan_test(a_s) {
            Ok(t) => {
                if t.reject {
                    return Ok(SubsetResult { subset: b, ci: IntervalUnion::empty(), pretest: Some(t), retained: false, note: None });
                }
                pretest = Some(t);
            }
            Err(e) if e.is_numerical() => notes.push(format!("Sargan pretest undefined ({e}); subset kept")),
            Err(e) => return Err(e),
        }
    }
    let (ci, note) = invert_subset(&g, test, alpha_inv, grid)?;
    notes.extend(note);
    Ok(SubsetResult {
        subset: b,
        ci,
        pretest,
        retained: true,
        note: if notes.is_empty() { None } else { Some(notes.join("; ")) },
    })
}

fn run_union(
    sample: &IvSample,
    s_bar: usize,
    test: TestKind,
    alpha_inv: f64,
    alpha_s: Option<f64>,
    grid: &GridSpec,
    keep: bool,
) -> Result<UnionReport> {
    let subsets = enumerate(sample.l(), s_bar - 1)?;
    let results: Vec<SubsetResult> = subsets
        .into_par_iter()
        .map(|b| evaluate_subset(sample, b, test, alpha_inv, alpha_s, grid))
        .collect::<Result<_>>()?;
    let evaluated = results.len();
    let passed = results.iter().filter(|r| r.retained).count();
    let mut warnings: Vec<String> = results
        .iter()
        .filter_map(|r| r.note.as_ref().map(|n| format!("B = {}: {n}", r.subset)))
        .collect();
    let mut ci: IntervalUnion = results.iter().filter(|r| r.retained).map(|r| r.ci.clone()).collect();
    if alpha_s.is_some() && passed == 0 {
        warnings.push(format!("every one of the {evaluated} subsets failed the Sargan pretest; reporting the whole line"));
        ci = IntervalUnion::whole();
    }
    let pretest = alpha_s.is_some();
    Ok(UnionReport {
        s_bar,
        test,
        method: Method { test, pretest }.label(),
        pretest,
        alpha: alpha_inv,
        alpha_s,
        alpha_t: alpha_s.map(|_| alpha_inv),
        length: ci.length(),
        rejects_zero: !ci.contains(0.0),
        ci,
        subsets_evaluated: evaluated,
        subsets_pretest_passed: passed,
        warnings,
        per_subset: keep.then_some(results),
    })
}

/// Union of the per-subset confidence sets at level `alpha`.
pub fn union_ci(sample: &IvSample, cfg: &ProcedureConfig) -> Result<UnionReport> {
    let cfg = ProcedureConfig { pretest: false, ..*cfg };
    cfg.validate(sample.l())?;
    run_union(sample, cfg.s_bar, cfg.test, cfg.alpha, None, &cfg.grid, cfg.keep_per_subset)
}

/// Union over subsets that pass a Sargan pretest at `alpha_s`, each
/// inverted at `alpha_t`.
pub fn pretest_union_ci(sample: &IvSample, cfg: &ProcedureConfig) -> Result<UnionReport> {
    let cfg = ProcedureConfig { pretest: true, ..*cfg };
    cfg.validate(sample.l())?;
    run_union(sample, cfg.s_bar, cfg.test, cfg.alpha_t, Some(cfg.alpha_s), &cfg.grid, cfg.keep_per_subset)
}

/// [`union_ci`] or [`pretest_union_ci`] according to `cfg.pretest`.
pub fn run_method(sample: &IvSample, cfg: &ProcedureConfig) -> Result<UnionReport> {
    if cfg.pretest {
        pretest_union_ci(sample, cfg)
    } else {
        union_ci(sample, cfg)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CombinedReport {
    pub s_bar: usize,
    pub alpha: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub reject: bool,
    pub union_rejects_zero: bool,
    pub collider_rejects: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub union: Option<UnionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collider: Option<ColliderReport>,
}

/// Union config at level `alpha1` with the pretest split scaled in
/// proportion.
fn union_part(cfg: &ProcedureConfig) -> ProcedureConfig {
    let scale = cfg.alpha1 / cfg.alpha;
    ProcedureConfig {
        alpha: cfg.alpha1,
        alpha_s: cfg.alpha_s * scale,
        alpha_t: cfg.alpha_t * scale,
        alpha1: cfg.alpha1,
        alpha2: 0.0,
        ..*cfg
    }
}

/// Combined test of no effect: reject when `0` is outside the union set at
/// `alpha1` or the collider test rejects at `alpha2`.
pub fn combined_test(sample: &IvSample, cfg: &ProcedureConfig) -> Result<CombinedReport> {
    cfg.validate(sample.l())?;
    let union = if cfg.alpha1 > 0.0 { Some(run_method(sample, &union_part(cfg))?) } else { None };
    let collider = if cfg.alpha2 > 0.0 {
        Some(collider::collider_test(sample, cfg.s_bar, cfg.alpha2, cfg.collider_draws, cfg.seed)?)
    } else {
        None
    };
    let union_rejects_zero = union.as_ref().is_some_and(|u| u.rejects_zero);
    let collider_rejects = collider.as_ref().and_then(|c| c.decision(cfg.s_bar)).unwrap_or(false);
    Ok(CombinedReport {
        s_bar: cfg.s_bar,
        alpha: cfg.alpha,
        alpha1: cfg.alpha1,
        alpha2: cfg.alpha2,
        reject: union_rejects_zero || collider_rejects,
        union_rejects_zero,
        collider_rejects,
        union,
        collider,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub s_bar: usize,
    pub ci: Option<IntervalUnion>,
    pub union_rejects_zero: bool,
    pub collider_critical: Option<f64>,
    pub collider_rejects: bool,
    pub combined_rejects: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub method: String,
    pub alpha: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub lambda_n: Option<f64>,
    pub rows: Vec<SweepRow>,
    /// Largest `s_bar` at which the combined test rejects; `None` is "NR".
    pub largest_rejecting_s_bar: Option<usize>,
    /// Smallest `s_bar` at which the null of no effect is retained.
    pub smallest_retaining_s_bar: Option<usize>,
}

impl SweepReport {
    pub fn summary_cell(&self) -> String {
        self.largest_rejecting_s_bar.map_or_else(|| "NR".to_string(), |s| s.to_string())
    }
}

/// Decisions for `s_bar = 1..=L`. The collider statistic and its critical
/// values are computed once. At `s_bar = L` the pretest is skipped.
pub fn sensitivity_sweep(sample: &IvSample, cfg: &ProcedureConfig) -> Result<SweepReport> {
    let l = sample.l();
    ProcedureConfig { s_bar: 1, pretest: false, ..*cfg }.validate(l)?;
    let collider = if cfg.alpha2 > 0.0 {
        Some(collider::collider_test(sample, l, cfg.alpha2, cfg.collider_draws, cfg.seed)?)
    } else {
        None
    };
    let mut rows = Vec::with_capacity(l);
    for s_bar in 1..=l {
        let mut note = None;
        let mut c = union_part(&ProcedureConfig { s_bar, ..*cfg });
        if c.pretest && l + 1 < s_bar + 2 {
            c.pretest = false;
            c.alpha_s = 0.0;
            c.alpha_t = c.alpha;
            note = Some("pretest skipped: only one instrument outside B".to_string());
        }
        let union = if cfg.alpha1 > 0.0 { Some(run_method(sample, &c)?) } else { None };
        let union_rejects_zero = union.as_ref().is_some_and(|u| u.rejects_zero);
        let collider_rejects = collider.as_ref().and_then(|r| r.decision(s_bar)).unwrap_or(false);
        rows.push(SweepRow {
            s_bar,
            ci: union.map(|u| u.ci),
            union_rejects_zero,
            collider_critical: collider.as_ref().and_then(|r| r.critical(s_bar)),
            collider_rejects,
            combined_rejects: union_rejects_zero || collider_rejects,
            note,
        });
    }
    Ok(SweepReport {
        method: cfg.method().label(),
        alpha: cfg.alpha,
        alpha1: cfg.alpha1,
        alpha2: cfg.alpha2,
        lambda_n: collider.as_ref().map(|c| c.lambda_n),
        largest_rejecting_s_bar: rows.iter().filter(|r| r.combined_rejects).map(|r| r.s_bar).max(),
        smallest_retaining_s_bar: rows.iter().find(|r| !r.combined_rejects).map(|r| r.s_bar),
        rows,
    })
}

/// Summary cells for every method and `alpha1` value.
#[derive(Debug, Clone, Serialize)]
pub struct SweepGrid {
    pub alpha: f64,
    pub alpha1: Vec<f64>,
    pub methods: Vec<String>,
    /// `cells[m][a]` for method `m` and `alpha1[a]`.
    pub cells: Vec<Vec<String>>,
}

pub fn sweep_grid(sample: &IvSample, base: &ProcedureConfig, methods: &[Method], alpha1: &[f64]) -> Result<SweepGrid> {
    let mut cells = Vec::with_capacity(methods.len());
    for m in methods {
        let mut row = Vec::with_capacity(alpha1.len());
        for &a1 in alpha1 {
            let cfg = base.with_method(*m).with_alpha1(a1);
            row.push(sensitivity_sweep(sample, &cfg)?.summary_cell());
        }
        cells.push(row);
    }
    Ok(SweepGrid { alpha: base.alpha, alpha1: alpha1.to_vec(), methods: methods.iter().map(Method::label).collect(), cells })
}

pub fn write_sweep_csv<W: std::io::Write>(r: &SweepReport, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "s_bar",
        "method",
        "ci",
        "union_rejects_zero",
        "collider_critical",
        "collider_rejects",
        "combined_rejects",
        "note",
    ])?;
    for row in &r.rows {
        wtr.write_record([
            row.s_bar.to_string(),
            r.method.clone(),
            row.ci.as_ref().map_or_else(String::new, |c| c.to_string()),
            row.union_rejects_zero.to_string(),
            row.collider_critical.map_or_else(String::new, |c| format!("{c:.3}")),
            row.collider_rejects.to_string(),
            row.combined_rejects.to_string(),
            row.note.clone().unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Rows `alpha1`, `alpha2`, then one row per method.
pub fn write_grid_csv<W: std::io::Write>(g: &SweepGrid, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut a1 = vec!["alpha1".to_string()];
    a1.extend(g.alpha1.iter().map(|a| format!("{a}")));
    wtr.write_record(&a1)?;
    let mut a2 = vec!["alpha2".to_string()];
    a2.extend(g.alpha1.iter().map(|a| format!("{}", round_level(g.alpha - a))));
    wtr.write_record(&a2)?;
    for (m, row) in g.methods.iter().zip(&g.cells) {
        let mut rec = vec![m.clone()];
        rec.extend(row.iter().cloned());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

fn round_level(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

/// Number of subsets a union at `s_bar` enumerates.
pub fn subset_count(l: usize, s_bar: usize) -> u128 {
    binomial(l, s_bar.saturating_sub(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intervals::{invert_ar, invert_tsls};
    use crate::testutil::*;

    fn pi_with(s: usize, l: usize) -> Vec<f64> {
        (0..l).map(|j| if j < s { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = ProcedureConfig::new(5, 0.05, TestKind::Ar);
        assert!((c.alpha_s - 0.01).abs() < 1e-15 && (c.alpha_t - 0.04).abs() < 1e-15);
        assert_eq!(c.alpha1, 0.025);
        c.validate(10).unwrap();
        assert!(ProcedureConfig::new(11, 0.05, TestKind::Ar).validate(10).is_err());
        assert!(ProcedureConfig::new(0, 0.05, TestKind::Ar).validate(10).is_err());
        assert!(ProcedureConfig::new(10, 0.05, TestKind::Ar).with_pretest(true).validate(10).is_err());
        ProcedureConfig::new(9, 0.05, TestKind::Ar).with_pretest(true).validate(10).unwrap();
        let mut bad = c;
        bad.alpha_s = 0.02;
        assert!(bad.validate(10).is_err());
        assert!(c.with_alpha1(0.06).validate(10).is_err());
    }

    #[test]
    fn method_labels_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.label().parse::<Method>().unwrap(), m);
        }
        assert_eq!("sargan-tsls".parse::<Method>().unwrap(), Method { test: TestKind::Tsls, pretest: true });
        assert!("foo".parse::<Method>().is_err());
    }

    #[test]
    fn s_bar_one_is_single_inversion() {
        let s = iv_draw(1, 300, &[0.0; 4], 0.5, 1.0);
        let b = SubsetB::empty(4);
        let r = union_ci(&s, &ProcedureConfig::new(1, 0.05, TestKind::Ar)).unwrap();
        assert_eq!(r.subsets_evaluated, 1);
        assert_eq!(r.ci, invert_ar(&s, &b, 0.05).unwrap());
        let r = union_ci(&s, &ProcedureConfig::new(1, 0.05, TestKind::Tsls)).unwrap();
        assert_eq!(r.ci, invert_tsls(&s, &b, 0.05).unwrap());
    }

    #[test]
    fn subset_count_matches_binomial() {
        assert_eq!(subset_count(10, 5), 210);
        let s = iv_draw(2, 200, &[0.0; 6], 0.5, 0.0);
        let r = union_ci(&s, &ProcedureConfig::new(3, 0.05, TestKind::Ar)).unwrap();
        assert_eq!(r.subsets_evaluated, 15);
    }

    #[test]
    fn union_contains_every_subset_set() {
        let s = iv_draw(3, 400, &pi_with(1, 5), 0.4, 0.5);
        for test in [TestKind::Ar, TestKind::Tsls, TestKind::Clr] {
            let mut cfg = ProcedureConfig::new(3, 0.05, test);
            cfg.keep_per_subset = true;
            let r = union_ci(&s, &cfg).unwrap();
            let per = r.per_subset.as_ref().unwrap();
            assert_eq!(per.len(), 10);
            for p in per {
                assert!(p.ci.is_subset_of(&r.ci), "{test}: {} not in {}", p.ci, r.ci);
            }
            let subsets: Vec<String> = per.iter().map(|p| p.subset.to_string()).collect();
            assert_eq!(subsets[0], "{1,2}");
            assert_eq!(subsets[9], "{4,5}");
        }
    }

    #[test]
    fn deterministic_across_pool_sizes() {
        let s = iv_draw(4, 300, &pi_with(2, 6), 0.4, 0.5);
        let cfg = ProcedureConfig::new(3, 0.05, TestKind::Clr);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| union_ci(&s, &cfg)).unwrap();
        let b = three.install(|| union_ci(&s, &cfg)).unwrap();
        assert_eq!(a.ci, b.ci);
    }

    #[test]
    fn pretest_records_levels_and_shrinks() {
        let s = iv_draw(5, 1000, &pi_with(2, 6), 0.3, 0.5);
        let cfg = ProcedureConfig::new(3, 0.05, TestKind::Tsls);
        let plain = union_ci(&s, &cfg).unwrap();
        let pre = pretest_union_ci(&s, &cfg).unwrap();
        assert_eq!(pre.alpha_s, Some(0.01));
        assert_eq!(pre.alpha_t, Some(0.04));
        assert!(pre.subsets_pretest_passed < pre.subsets_evaluated);
        assert!(pre.ci.length() < plain.ci.length());
        assert!(pre.ci.contains(0.5));
    }

    #[test]
    fn all_pretests_fail_gives_whole_line() {
        // every instrument has a large and distinct direct effect
        let s = iv_draw(6, 2000, &[3.0, -2.0, 4.0, -5.0, 2.5], 0.5, 0.5);
        let r = pretest_union_ci(&s, &ProcedureConfig::new(2, 0.05, TestKind::Tsls)).unwrap();
        assert_eq!(r.subsets_pretest_passed, 0);
        assert!(r.ci.is_whole());
        assert!(r.warnings.iter().any(|w| w.contains("failed the Sargan pretest")));
    }

    #[test]
    fn degenerate_subset_contributes_whole_line() {
        // D unrelated to the instruments outside B
        let mut rng = rand::SeedableRng::seed_from_u64(7);
        let z = randn(&mut rng, 100, 2);
        let d = z.column(0).into_owned() * 3.0;
        let y = randv(&mut rng, 100);
        let s = IvSample::new(y, d.clone(), z, None).unwrap();
        let mut cfg = ProcedureConfig::new(2, 0.05, TestKind::Tsls);
        cfg.keep_per_subset = true;
        let r = union_ci(&s, &cfg).unwrap();
        assert!(r.ci.is_whole());
        assert!(!r.warnings.is_empty());
        assert!(r.per_subset.unwrap()[0].note.is_some());
    }

    #[test]
    fn combined_reductions() {
        let s = iv_draw(8, 500, &pi_with(1, 5), 0.5, 0.3);
        let mut cfg = ProcedureConfig::new(2, 0.05, TestKind::Ar);
        cfg.collider_draws = 100_000;
        let only_union = combined_test(&s, &cfg.with_alpha1(0.05)).unwrap();
        let u = union_ci(&s, &cfg).unwrap();
        assert_eq!(only_union.reject, u.rejects_zero);
        assert!(only_union.collider.is_none());
        let only_coll = combined_test(&s, &cfg.with_alpha1(0.0)).unwrap();
        let c = collider::collider_test(&s, 2, 0.05, 100_000, 0).unwrap();
        assert_eq!(only_coll.reject, c.decision(2).unwrap());
        assert!(only_coll.union.is_none());
        let both = combined_test(&s, &cfg).unwrap();
        assert_eq!(both.reject, both.union_rejects_zero || both.collider_rejects);
    }

    #[test]
    fn combined_pretest_split_is_proportional() {
        let cfg = ProcedureConfig::new(2, 0.05, TestKind::Tsls).with_pretest(true).with_alpha1(0.025);
        let u = union_part(&cfg);
        assert!((u.alpha_s - 0.005).abs() < 1e-15 && (u.alpha_t - 0.02).abs() < 1e-15);
        u.validate(5).unwrap();
    }

    #[test]
    fn sweep_layout() {
        let s = iv_draw(9, 1000, &pi_with(1, 5), 0.5, 1.0);
        let mut cfg = ProcedureConfig::new(1, 0.05, TestKind::Tsls).with_pretest(true);
        cfg.collider_draws = 100_000;
        let r = sensitivity_sweep(&s, &cfg).unwrap();
        assert_eq!(r.rows.len(), 5);
        assert!(r.rows[4].note.as_deref().unwrap().contains("pretest skipped"));
        assert!(r.rows[..4].iter().all(|row| row.note.is_none()));
        assert!(r.lambda_n.is_some());
        let mut buf = Vec::new();
        write_sweep_csv(&r, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 6);

        let g = sweep_grid(&s, &cfg, &Method::ALL[..2], &[0.0, 0.05]).unwrap();
        assert_eq!(g.cells.len(), 2);
        let mut buf = Vec::new();
        write_grid_csv(&g, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("alpha1,0,0.05\nalpha2,0.05,0\nAR,"));
    }

    #[test]
    fn sweep_summary_cells() {
        let rows = |rej: &[bool]| SweepReport {
            method: "AR".into(),
            alpha: 0.05,
            alpha1: 0.05,
            alpha2: 0.0,
            lambda_n: None,
            largest_rejecting_s_bar: rej.iter().enumerate().filter(|(_, r)| **r).map(|(i, _)| i + 1).max(),
            smallest_retaining_s_bar: rej.iter().position(|r| !r).map(|i| i + 1),
            rows: vec![],
        };
        assert_eq!(rows(&[false, false]).summary_cell(), "NR");
        let r = rows(&[true, true, true, false]);
        assert_eq!(r.summary_cell(), "3");
        assert_eq!(r.smallest_retaining_s_bar, Some(4));
    }
}
