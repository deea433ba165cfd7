//! Collider-bias likelihood-ratio test of no effect.
//!
//! Under the null every instrument `Z_j` is independent of the outcome given
//! the others only when it is valid; a nonzero effect makes `Y` a collider
//! between `Z_j` and the unmeasured confounder. The statistic is
//! `lambda_n = min_j n log(s_jj det(S_{-j,-j}) / det S)` over the instrument
//! indices of the covariance of `(Z, Y)`.
//!
//! The null limit is the minimum over `v` rows of the row sums of a
//! symmetric `L x L` matrix with i.i.d. chi-square(1) entries. Its quantiles
//! are simulated for all `v` at once from the same draws, so the tabulated
//! critical values are nonincreasing in `v` by construction.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, LazyLock, RwLock};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::data::{sample_cov, CovMatrix, IvSample};
use crate::dist::chi2_quantile;
use crate::error::{Error, Result};
use crate::mc::{self, par_draws, tag};

/// Default draws for tabulated critical values.
pub const TABLE_DRAWS: usize = 1_000_000;
/// Default draws for interactive p-values.
pub const PVALUE_DRAWS: usize = 100_000;
/// Instrument pairs with larger absolute sample correlation are flagged.
pub const CORRELATION_WARN: f64 = 0.1;

/// `(lambda_n, [lambda_{n,1}, ..., lambda_{n,L}])` from the covariance of
/// `(Z_1, ..., Z_L, Y)`.
pub fn lambda_stat(cov: &CovMatrix, n: usize) -> Result<(f64, Vec<f64>)> {
    let s = &cov.s;
    let p = s.nrows();
    if p < 2 || s.ncols() != p {
        return Err(Error::InvalidArgument("covariance must be square with at least one instrument".into()));
    }
    let l = p - 1;
    if n < l + 2 {
        return Err(Error::InvalidArgument(format!("collider test needs n >= L + 2 (n = {n}, L = {l})")));
    }
    let tr = s.trace();
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("covariance of (Z, Y) is not positive definite".into()))?;
    let min_pivot = chol.l().diagonal().iter().fold(f64::INFINITY, |a, &b| a.min(b * b));
    if !(min_pivot > 1e-13 * tr) {
        return Err(Error::Singular("covariance of (Z, Y) is numerically singular".into()));
    }
    let inv = chol.inverse();
    let per_j: Vec<f64> = (0..l)
        .map(|j| (n as f64 * (s[(j, j)] * inv[(j, j)]).ln()).max(0.0))
        .collect();
    let lambda = per_j.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((lambda, per_j))
}

/// Per-draw running minima of row sums, `out[v - 1]` for `v = 1..=L`.
fn null_draws(l: usize, draws: usize, seed: u64, path_tag: u64) -> Vec<f64> {
    par_draws(draws, seed, &[path_tag, l as u64], |rng, len, out| {
        let mut rows = vec![0.0; l];
        for _ in 0..len {
            rows.iter_mut().for_each(|r| *r = 0.0);
            for j in 0..l {
                for k in j..l {
                    let x: f64 = rng.sample(StandardNormal);
                    let w = x * x;
                    rows[j] += w;
                    if k != j {
                        rows[k] += w;
                    }
                }
            }
            let mut m = f64::INFINITY;
            for r in &rows {
                m = m.min(*r);
                out.push(m);
            }
        }
    })
}

fn column(flat: &[f64], l: usize, v: usize) -> Vec<f64> {
    flat.iter().skip(v - 1).step_by(l).copied().collect()
}

type QuantileKey = (usize, usize, u64, usize, u64);

static QUANTILES: LazyLock<RwLock<HashMap<QuantileKey, f64>>> = LazyLock::new(Default::default);
static PVALUE_DRAWS_CACHE: LazyLock<RwLock<HashMap<(usize, usize, usize, u64), Arc<Vec<f64>>>>> =
    LazyLock::new(Default::default);

fn check_args(l: usize, v: usize, draws: usize, min_draws: usize) -> Result<()> {
    if l == 0 || v == 0 || v > l {
        return Err(Error::InvalidArgument(format!("need 1 <= v <= L, got v = {v}, L = {l}")));
    }
    if draws < min_draws {
        return Err(Error::InvalidArgument(format!("need at least {min_draws} draws, got {draws}")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Monte-Carlo `1 - alpha` quantiles for `v = 1..=L`, every `v` from the
/// same draws.
pub fn null_quantiles_mc(l: usize, alphas: &[f64], draws: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    check_args(l, 1, draws, 1)?;
    for &a in alphas {
        check_alpha(a)?;
    }
    let missing = {
        let cache = QUANTILES.read().unwrap();
        alphas
            .iter()
            .any(|a| (1..=l).any(|v| !cache.contains_key(&(l, v, a.to_bits(), draws, seed))))
    };
    if missing {
        let flat = null_draws(l, draws, seed, tag::COLLIDER_NULL);
        let mut fresh = Vec::new();
        for v in 1..=l {
            let mut col = column(&flat, l, v);
            mc::sort_floats(&mut col);
            for &a in alphas {
                fresh.push(((l, v, a.to_bits(), draws, seed), mc::quantile_sorted(&col, 1.0 - a)));
            }
        }
        QUANTILES.write().unwrap().extend(fresh);
    }
    let cache = QUANTILES.read().unwrap();
    Ok(alphas
        .iter()
        .map(|a| (1..=l).map(|v| cache[&(l, v, a.to_bits(), draws, seed)]).collect())
        .collect())
}

/// `1 - alpha` quantile of the null with `v` assumed-valid instruments.
/// `v = 1` is the exact chi-square(L) quantile.
pub fn null_quantile(l: usize, v: usize, alpha: f64, draws: usize, seed: u64) -> Result<f64> {
    check_args(l, v, draws, 100_000)?;
    check_alpha(alpha)?;
    if v == 1 {
        return Ok(chi2_quantile(1.0 - alpha, l as f64));
    }
    Ok(null_quantiles_mc(l, &[alpha], draws, seed)?[0][v - 1])
}

/// Critical values for `v = 1..=L` (exact at `v = 1`).
pub fn critical_values(l: usize, alpha: f64, draws: usize, seed: u64) -> Result<Vec<f64>> {
    let mut q = null_quantiles_mc(l, &[alpha], draws, seed)?.remove(0);
    q[0] = chi2_quantile(1.0 - alpha, l as f64);
    Ok(q)
}

/// Monte-Carlo `P(null >= lambda_obs)`.
pub fn collider_pvalue(lambda_obs: f64, l: usize, v: usize, draws: usize, seed: u64) -> Result<f64> {
    check_args(l, v, draws, 1_000)?;
    let key = (l, v, draws, seed);
    let cached = PVALUE_DRAWS_CACHE.read().unwrap().get(&key).cloned();
    let sorted = match cached {
        Some(s) => s,
        None => {
            let flat = null_draws(l, draws, seed, tag::COLLIDER_PVALUE);
            let mut col = column(&flat, l, v);
            mc::sort_floats(&mut col);
            let col = Arc::new(col);
            PVALUE_DRAWS_CACHE.write().unwrap().insert(key, col.clone());
            col
        }
    };
    Ok(mc::upper_tail_fraction(&sorted, lambda_obs))
}

/// One `s_bar` column of the decision table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ColliderCell {
    pub s_bar: usize,
    /// `L - s_bar + 1`.
    pub v: usize,
    pub critical: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ColliderReport {
    pub lambda_n: f64,
    pub per_j: Vec<f64>,
    pub n: usize,
    pub l: usize,
    pub alpha2: f64,
    pub cells: Vec<ColliderCell>,
    pub draws: usize,
    pub seed: u64,
    pub workers: usize,
    pub warnings: Vec<String>,
}

impl ColliderReport {
    pub fn decision(&self, s_bar: usize) -> Option<bool> {
        self.cells.iter().find(|c| c.s_bar == s_bar).map(|c| c.reject)
    }

    pub fn critical(&self, s_bar: usize) -> Option<f64> {
        self.cells.iter().find(|c| c.s_bar == s_bar).map(|c| c.critical)
    }

    /// Largest `s_bar` at which the null is rejected.
    pub fn largest_rejecting_s_bar(&self) -> Option<usize> {
        self.cells.iter().filter(|c| c.reject).map(|c| c.s_bar).max()
    }
}

/// Decisions for an observed statistic against critical values for
/// `s_bar = 1..=s_bar_max`.
pub fn decide(lambda_n: f64, critical_by_v: &[f64], s_bar_max: usize) -> Vec<ColliderCell> {
    let l = critical_by_v.len();
    (1..=s_bar_max.min(l))
        .map(|s_bar| {
            let v = l - s_bar + 1;
            let critical = critical_by_v[v - 1];
            ColliderCell { s_bar, v, critical, reject: lambda_n > critical }
        })
        .collect()
}

/// Pairs of instruments whose sample correlation exceeds the warning level.
pub fn correlation_warnings(sample: &IvSample) -> Vec<String> {
    let z = sample.z();
    let n = z.nrows() as f64;
    let l = z.ncols();
    let mut c = z.clone();
    for mut col in c.column_iter_mut() {
        let m = col.sum() / n;
        col.add_scalar_mut(-m);
    }
    let g: DMatrix<f64> = c.transpose() * &c;
    let mut out = Vec::new();
    for j in 0..l {
        for k in j + 1..l {
            let r = g[(j, k)] / (g[(j, j)] * g[(k, k)]).sqrt();
            if r.abs() > CORRELATION_WARN {
                let names = sample.instrument_names();
                out.push(format!(
                    "instruments '{}' and '{}' have sample correlation {r:.3}; the null assumes independent instruments",
                    names[j], names[k]
                ));
            }
        }
    }
    out
}

/// Collider test of no effect for `s_bar = 1..=s_bar_max`.
pub fn collider_test(sample: &IvSample, s_bar_max: usize, alpha2: f64, draws: usize, seed: u64) -> Result<ColliderReport> {
    let l = sample.l();
    if s_bar_max == 0 || s_bar_max > l {
        return Err(Error::InvalidArgument(format!("s_bar_max must lie in 1..={l}")));
    }
    let cov = sample_cov(sample)?;
    let (lambda_n, per_j) = lambda_stat(&cov, sample.n())?;
    let crit = critical_values(l, alpha2, draws, seed)?;
    Ok(ColliderReport {
        lambda_n,
        per_j,
        n: sample.n(),
        l,
        alpha2,
        cells: decide(lambda_n, &crit, s_bar_max),
        draws,
        seed,
        workers: rayon::current_num_threads(),
        warnings: correlation_warnings(sample),
    })
}

/// One row of the exported critical-value table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalRow {
    #[serde(rename = "L")]
    pub l: usize,
    pub v: usize,
    pub alpha: f64,
    pub quantile: f64,
    pub draws: usize,
    pub seed: u64,
}

pub fn critical_table(l: usize, alphas: &[f64], draws: usize, seed: u64) -> Result<Vec<CriticalRow>> {
    let q = null_quantiles_mc(l, alphas, draws, seed)?;
    let mut rows = Vec::new();
    for (a, qs) in alphas.iter().zip(q) {
        for (i, mut quantile) in qs.into_iter().enumerate() {
            if i == 0 {
                quantile = chi2_quantile(1.0 - a, l as f64);
            }
            rows.push(CriticalRow { l, v: i + 1, alpha: *a, quantile, draws, seed });
        }
    }
    Ok(rows)
}

pub fn write_critical_csv<W: Write>(rows: &[CriticalRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Decision-table layout: one row per `alpha2`, columns
/// `s_bar = s_bar_max..1`, each cell the critical value, marked with `*`
/// when `lambda` rejects.
pub fn write_table_layout<W: Write>(
    l: usize,
    s_bar_max: usize,
    alphas: &[f64],
    lambda: Option<f64>,
    draws: usize,
    seed: u64,
    w: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["alpha2".to_string()];
    let top = s_bar_max.clamp(1, l);
    header.extend((1..=top).rev().map(|s| format!("s_bar={s}")));
    wtr.write_record(&header)?;
    for &a in alphas {
        let crit = critical_values(l, a, draws, seed)?;
        let mut rec = vec![format!("{a}")];
        for s_bar in (1..=top).rev() {
            let c = crit[l - s_bar];
            let mark = lambda.is_some_and(|x| x > c);
            rec.push(format!("{c:.3}{}", if mark { "*" } else { "" }));
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
