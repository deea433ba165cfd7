//! Samples, covariate residualization, projections and sample covariance.
//!
//! Every projection-based quantity in the crate is computed from one thin
//! QR factorization `Z = QR` cached on the sample. For a subset `B`,
//! `P_{Z_B}` acts inside `col(Z)` as the projection onto `col(R[:, B])`, so
//! all subset work happens in `L` dimensions and no `n x n` matrix is ever
//! formed.

use std::collections::HashSet;
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subset::SubsetB;

/// Relative singular-value tolerance for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Numerical rank of `m` with tolerance `RANK_TOL * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// Outcome, exposure and instruments for one analysis.
#[derive(Debug, Clone)]
pub struct IvSample {
    y: DVector<f64>,
    d: DVector<f64>,
    z: DMatrix<f64>,
    names: Vec<String>,
    proj: OnceLock<Projector>,
}

impl IvSample {
    pub fn new(y: DVector<f64>, d: DVector<f64>, z: DMatrix<f64>, names: Option<Vec<String>>) -> Result<Self> {
        let n = y.len();
        let l = z.ncols();
        if d.len() != n || z.nrows() != n {
            return Err(Error::InvalidArgument(format!(
                "row mismatch: Y has {n}, D has {}, Z has {}",
                d.len(),
                z.nrows()
            )));
        }
        if l == 0 {
            return Err(Error::InvalidArgument("at least one instrument is required".into()));
        }
        if n <= l {
            return Err(Error::InvalidArgument(format!("need n > L, got n = {n}, L = {l}")));
        }
        if y.iter().chain(d.iter()).chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite value in sample".into()));
        }
        let names = match names {
            Some(v) if v.len() == l => v,
            Some(v) => {
                return Err(Error::InvalidArgument(format!("{} names for {l} instruments", v.len())))
            }
            None => (1..=l).map(|j| format!("z{j}")).collect(),
        };
        let rank = numerical_rank(&z);
        if rank < l {
            return Err(Error::Rank(format!("instrument matrix has rank {rank} < L = {l}")));
        }
        Ok(IvSample { y, d, z, names, proj: OnceLock::new() })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn l(&self) -> usize {
        self.z.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn instrument_names(&self) -> &[String] {
        &self.names
    }

    /// A sample with the same instruments and new `Y`, `D`, reusing the
    /// factorization of `Z`.
    pub fn with_outcomes(&self, y: DVector<f64>, d: DVector<f64>) -> Result<Self> {
        let n = self.n();
        if y.len() != n || d.len() != n {
            return Err(Error::InvalidArgument(format!("Y and D must have length n = {n}")));
        }
        if y.iter().chain(d.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite value in sample".into()));
        }
        let proj = OnceLock::new();
        if let Some(p) = self.proj.get() {
            let _ = proj.set(p.with_data(&y, &d));
        }
        Ok(IvSample { y, d, z: self.z.clone(), names: self.names.clone(), proj })
    }

    pub fn projector(&self) -> &Projector {
        self.proj.get_or_init(|| Projector::new(&self.z, &self.y, &self.d))
    }

    /// `v' A v` for one of the projection specs, without `n x n` matrices.
    pub fn quad_form(&self, v: &DVector<f64>, spec: ProjectionSpec, b: &SubsetB) -> Result<f64> {
        if v.len() != self.n() {
            return Err(Error::InvalidArgument(format!("vector length {} != n = {}", v.len(), self.n())));
        }
        self.check_subset(b)?;
        Ok(self.projector().quad_form(v, spec, b))
    }

    pub(crate) fn check_subset(&self, b: &SubsetB) -> Result<()> {
        if b.l() != self.l() {
            return Err(Error::InvalidArgument(format!(
                "subset defined for L = {} but sample has L = {}",
                b.l(),
                self.l()
            )));
        }
        Ok(())
    }
}

/// Which projection a quadratic form uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProjectionSpec {
    Pz,
    PzB,
    PzMinusPzB,
    Rz,
    RzB,
}

/// Cached thin QR of `Z` plus the reduced data `U = Q'[Y, D]`.
#[derive(Debug, Clone)]
pub struct Projector {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    u: DMatrix<f64>,
    rz: Matrix2<f64>,
}

impl Projector {
    fn new(z: &DMatrix<f64>, y: &DVector<f64>, d: &DVector<f64>) -> Self {
        let qr = z.clone().qr();
        Self::from_factors(qr.q(), qr.r(), y, d)
    }

    fn with_data(&self, y: &DVector<f64>, d: &DVector<f64>) -> Self {
        Self::from_factors(self.q.clone(), self.r.clone(), y, d)
    }

    fn from_factors(q: DMatrix<f64>, r: DMatrix<f64>, y: &DVector<f64>, d: &DVector<f64>) -> Self {
        let mut w = DMatrix::zeros(y.len(), 2);
        w.set_column(0, y);
        w.set_column(1, d);
        let u = q.transpose() * &w;
        let resid = &w - &q * &u;
        let g = resid.transpose() * &resid;
        let rz = Matrix2::new(g[(0, 0)], g[(0, 1)], g[(1, 0)], g[(1, 1)]);
        Projector { q, r, u, rz }
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Orthonormal basis (in Q coordinates) of `col(Z_B)`; `None` for empty `B`.
    pub fn subset_basis(&self, b: &SubsetB) -> Option<DMatrix<f64>> {
        if b.size() == 0 {
            None
        } else {
            Some(self.r.select_columns(b.indices()).qr().q())
        }
    }

    /// Remove the `col(Z_B)` component from vectors given in Q coordinates.
    pub fn orth_subset(&self, b: &SubsetB, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self.subset_basis(b) {
            None => x.clone(),
            Some(qb) => x - &qb * (qb.transpose() * x),
        }
    }

    /// `W'(P_Z - P_{Z_B})W` and `W'R_{Z_B}W` for `W = [Y, D]`.
    pub fn subset_grams(&self, b: &SubsetB) -> (Matrix2<f64>, Matrix2<f64>) {
        let v = self.orth_subset(b, &self.u);
        let g = v.transpose() * &v;
        let m = Matrix2::new(g[(0, 0)], g[(0, 1)], g[(1, 0)], g[(1, 1)]);
        (m, self.rz + m)
    }

    /// `W'R_Z W`.
    pub fn rz_gram(&self) -> Matrix2<f64> {
        self.rz
    }

    /// `W'W`.
    pub fn full_gram(&self) -> Matrix2<f64> {
        let g = self.u.transpose() * &self.u;
        self.rz + Matrix2::new(g[(0, 0)], g[(0, 1)], g[(1, 0)], g[(1, 1)])
    }

    /// `||R_{Z_B} Z x||^2` for a coefficient vector `x` of length L.
    pub fn resid_norm2_of_fitted(&self, b: &SubsetB, x: &DVector<f64>) -> f64 {
        let zx = DMatrix::from_column_slice(x.len(), 1, (&self.r * x).as_slice());
        self.orth_subset(b, &zx).norm_squared()
    }

    fn quad_form(&self, v: &DVector<f64>, spec: ProjectionSpec, b: &SubsetB) -> f64 {
        let x = self.q.transpose() * v;
        let resid = || (v - &self.q * &x).norm_squared();
        let xm = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
        let between = || self.orth_subset(b, &xm).norm_squared();
        match spec {
            ProjectionSpec::Pz => x.norm_squared(),
            ProjectionSpec::PzB => match self.subset_basis(b) {
                None => 0.0,
                Some(qb) => (qb.transpose() * &xm).norm_squared(),
            },
            ProjectionSpec::PzMinusPzB => between(),
            ProjectionSpec::Rz => resid(),
            ProjectionSpec::RzB => resid() + between(),
        }
    }
}

/// Exogenous covariates to partial out (no intercept column).
#[derive(Debug, Clone)]
pub struct CovariateBlock {
    pub x: DMatrix<f64>,
    pub add_intercept: bool,
    pub names: Vec<String>,
}

impl CovariateBlock {
    pub fn intercept_only(n: usize) -> Self {
        CovariateBlock { x: DMatrix::zeros(n, 0), add_intercept: true, names: Vec::new() }
    }

    fn design(&self) -> DMatrix<f64> {
        let n = self.x.nrows();
        if !self.add_intercept {
            return self.x.clone();
        }
        let mut m = DMatrix::from_element(n, self.x.ncols() + 1, 1.0);
        m.view_mut((0, 1), (n, self.x.ncols())).copy_from(&self.x);
        m
    }
}

/// Replace Y, D and each column of Z by residuals on `[1, X]`.
pub fn residualize_fwl(sample: &IvSample, cov: &CovariateBlock) -> Result<IvSample> {
    let n = sample.n();
    if cov.x.nrows() != n {
        return Err(Error::InvalidArgument(format!(
            "covariates have {} rows, sample has {n}",
            cov.x.nrows()
        )));
    }
    let m = cov.design();
    let p = m.ncols();
    if p == 0 {
        return Ok(sample.clone());
    }
    if p >= n {
        return Err(Error::Rank(format!("{p} covariate columns for n = {n}")));
    }
    let rank = numerical_rank(&m);
    if rank < p {
        return Err(Error::Rank(format!("covariate design [1, X] has rank {rank} < {p}")));
    }
    let q = m.qr().q();
    let resid = |a: &DMatrix<f64>| a - &q * (q.transpose() * a);
    let y = resid(&DMatrix::from_column_slice(n, 1, sample.y.as_slice())).column(0).into_owned();
    let d = resid(&DMatrix::from_column_slice(n, 1, sample.d.as_slice())).column(0).into_owned();
    let z = resid(&sample.z);
    IvSample::new(y, d, z, Some(sample.names.clone())).map_err(|e| match e {
        Error::Rank(msg) => Error::Rank(format!("after partialling out covariates: {msg}")),
        other => other,
    })
}

/// Sample covariance of `(Z_1, ..., Z_L, Y)` with denominator `n`.
#[derive(Debug, Clone, Serialize)]
pub struct CovMatrix {
    #[serde(serialize_with = "ser_matrix")]
    pub s: DMatrix<f64>,
    /// Denominator used (`n`).
    pub denominator: f64,
}

fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

pub fn sample_cov(sample: &IvSample) -> Result<CovMatrix> {
    let n = sample.n();
    if n < 2 {
        return Err(Error::InvalidArgument("sample covariance needs n >= 2".into()));
    }
    let l = sample.l();
    let mut a = DMatrix::zeros(n, l + 1);
    a.view_mut((0, 0), (n, l)).copy_from(&sample.z);
    a.set_column(l, &sample.y);
    for mut c in a.column_iter_mut() {
        let mean = c.mean();
        c.add_scalar_mut(-mean);
    }
    let s = a.transpose() * &a / n as f64;
    Ok(CovMatrix { s, denominator: n as f64 })
}

/// Column roles for CSV ingestion.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub outcome: String,
    pub exposure: String,
    pub instruments: Vec<String>,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default = "default_true")]
    pub add_intercept: bool,
}

fn default_true() -> bool {
    true
}

impl Schema {
    /// Roles for a file produced by [`write_csv`].
    pub fn for_sample(sample: &IvSample) -> Self {
        Schema {
            outcome: "y".into(),
            exposure: "d".into(),
            instruments: sample.instrument_names().to_vec(),
            covariates: vec![],
            add_intercept: true,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.instruments.is_empty() {
            return Err(Error::Schema("at least one instrument column is required".into()));
        }
        let mut seen = HashSet::new();
        let all = [&self.outcome, &self.exposure]
            .into_iter()
            .chain(&self.instruments)
            .chain(&self.covariates);
        for c in all {
            if !seen.insert(c.as_str()) {
                return Err(Error::Schema(format!("column '{c}' is assigned more than one role")));
            }
        }
        Ok(())
    }
}

/// Result of [`load_csv`].
#[derive(Debug, Clone)]
pub struct Loaded {
    pub sample: IvSample,
    pub covariates: Option<CovariateBlock>,
    pub dropped_rows: usize,
}

impl Loaded {
    /// Sample with covariates (and the intercept, unless disabled) partialled out.
    pub fn residualized(&self) -> Result<IvSample> {
        match &self.covariates {
            Some(c) => residualize_fwl(&self.sample, c),
            None => Ok(self.sample.clone()),
        }
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "NaN" | "nan" | ".")
}

/// Read a CSV with a header row. Rows with a missing value in any used
/// column are dropped and counted.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Loaded> {
    let rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path.as_ref())?;
    load_reader(rdr, schema)
}

/// Write `y`, `d` and the instruments as CSV with columns `y`, `d` and the
/// instrument names. [`Schema::for_sample`] reads it back.
pub fn write_csv<W: std::io::Write>(sample: &IvSample, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["y".to_string(), "d".to_string()];
    header.extend(sample.instrument_names().iter().cloned());
    wtr.write_record(&header)?;
    for i in 0..sample.n() {
        let mut rec = vec![sample.y()[i].to_string(), sample.d()[i].to_string()];
        rec.extend(sample.z().row(i).iter().map(|x| x.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn load_csv_str(text: &str, schema: &Schema) -> Result<Loaded> {
    let rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    load_reader(rdr, schema)
}

fn load_reader<R: std::io::Read>(mut rdr: csv::Reader<R>, schema: &Schema) -> Result<Loaded> {
    schema.validate()?;
    let headers = rdr.headers()?.clone();
    let find = |name: &String| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in header")))
    };
    let cols: Vec<&String> = [&schema.outcome, &schema.exposure]
        .into_iter()
        .chain(&schema.instruments)
        .chain(&schema.covariates)
        .collect();
    let idx: Vec<usize> = cols.iter().map(|c| find(c)).collect::<Result<_>>()?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut dropped = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row_no = i + 1;
        let mut vals = Vec::with_capacity(idx.len());
        let mut missing = false;
        for (&k, name) in idx.iter().zip(&cols) {
            let cell = rec.get(k).unwrap_or("");
            if is_missing(cell) {
                missing = true;
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: row_no,
                column: (*name).clone(),
                message: format!("'{cell}' is not a number"),
            })?;
            if v.is_nan() {
                missing = true;
            } else if v.is_infinite() {
                return Err(Error::Parse { row: row_no, column: (*name).clone(), message: "infinite value".into() });
            }
            vals.push(v);
        }
        if missing {
            dropped += 1;
        } else {
            rows.push(vals);
        }
    }
    let n = rows.len();
    let l = schema.instruments.len();
    let p = schema.covariates.len();
    let col = |k: usize| DVector::from_iterator(n, rows.iter().map(|r| r[k]));
    let y = col(0);
    let d = col(1);
    let z = DMatrix::from_fn(n, l, |i, j| rows[i][2 + j]);
    let sample = IvSample::new(y, d, z, Some(schema.instruments.clone())).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Schema(m),
        other => other,
    })?;
    let covariates = if p > 0 || schema.add_intercept {
        Some(CovariateBlock {
            x: DMatrix::from_fn(n, p, |i, j| rows[i][2 + l + j]),
            add_intercept: schema.add_intercept,
            names: schema.covariates.clone(),
        })
    } else {
        None
    };
    Ok(Loaded { sample, covariates, dropped_rows: dropped })
}
