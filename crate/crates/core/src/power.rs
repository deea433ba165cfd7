//! Closed-form power of the AR and TSLS tests under invalid instruments.
//!
//! Both formulas reduce to quadratic forms in the Schur complement
//! `G_{CC} - G_{CB} G_{BB}^{-1} G_{BC}` of the instrument Gram matrix
//! `G = Z'Z`, where `C` is the complement of `B`. For a sample design this
//! is `Z_C' R_{Z_B} Z_C`; a population design uses `G = n Sigma_Z`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::IvSample;
use crate::dist::{f_quantile, noncentral_f_cdf, normal_cdf, normal_quantile};
use crate::error::{Error, Result};
use crate::iv_tests::SubsetGram;
use crate::mc::{self, rng_for};
use crate::subset::SubsetB;

/// Instrument design entering the power formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZDesign {
    /// Explicit `n x L` matrix, rows listed.
    Sample { z: Vec<Vec<f64>> },
    /// Second-moment matrix `E[Z Z']` and a sample size.
    Population { second_moment: Vec<Vec<f64>>, n: usize },
}

fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|x| x.len() != c) {
        return Err(Error::InvalidArgument("design matrix rows must be nonempty and of equal length".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl ZDesign {
    pub fn sample(z: &DMatrix<f64>) -> Self {
        ZDesign::Sample { z: z.row_iter().map(|r| r.iter().copied().collect()).collect() }
    }

    pub fn identity(l: usize, n: usize) -> Self {
        ZDesign::Population {
            second_moment: (0..l).map(|i| (0..l).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
            n,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            ZDesign::Sample { z } => z.len(),
            ZDesign::Population { n, .. } => *n,
        }
    }

    pub fn l(&self) -> usize {
        match self {
            ZDesign::Sample { z } => z.first().map_or(0, Vec::len),
            ZDesign::Population { second_moment, .. } => second_moment.len(),
        }
    }

    /// A sample design: the matrix itself, or `n` Gaussian rows with the
    /// population second moment drawn from `seed`.
    pub fn realize(&self, seed: u64) -> Result<ZDesign> {
        match self {
            ZDesign::Sample { .. } => Ok(self.clone()),
            ZDesign::Population { second_moment, n } => {
                let s = from_rows(second_moment)?;
                let chol = s
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::Singular("second-moment matrix is not positive definite".into()))?;
                let mut rng = rng_for(seed, &[mc::tag::POWER_REPLICATE, u64::MAX]);
                let u = DMatrix::<f64>::from_fn(*n, s.nrows(), |_, _| StandardNormal.sample(&mut rng));
                Ok(ZDesign::sample(&(u * chol.l().transpose())))
            }
        }
    }

    /// `Z'Z`, or `n E[Z Z']`.
    pub fn gram(&self) -> Result<DMatrix<f64>> {
        match self {
            ZDesign::Sample { z } => {
                let z = from_rows(z)?;
                Ok(z.transpose() * &z)
            }
            ZDesign::Population { second_moment, n } => {
                let s = from_rows(second_moment)?;
                if s.nrows() != s.ncols() {
                    return Err(Error::InvalidArgument("second-moment matrix must be square".into()));
                }
                Ok(s * *n as f64)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSpec {
    pub gamma: Vec<f64>,
    pub pi: Vec<f64>,
    pub beta_star: f64,
    pub beta0: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub z: ZDesign,
    /// One-based labels of `B`.
    pub b: Vec<usize>,
    /// Local alternative `beta* = beta0 + Delta1 / sqrt(n)`.
    #[serde(default)]
    pub delta1: f64,
    /// Local alternative `pi = Delta2 / sqrt(n)` (length `L`; entries in `B` are ignored).
    #[serde(default)]
    pub delta2: Vec<f64>,
}

impl PowerSpec {
    pub fn l(&self) -> usize {
        self.z.l()
    }

    pub fn n(&self) -> usize {
        self.z.n()
    }

    pub fn subset(&self) -> Result<SubsetB> {
        SubsetB::from_one_based(&self.b, self.l())
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.l();
        if l == 0 {
            return Err(Error::InvalidArgument("design has no instruments".into()));
        }
        if self.gamma.len() != l || self.pi.len() != l {
            return Err(Error::InvalidArgument(format!("gamma and pi must have length L = {l}")));
        }
        if !self.delta2.is_empty() && self.delta2.len() != l {
            return Err(Error::InvalidArgument(format!("delta2 must be empty or have length L = {l}")));
        }
        if !(self.sigma1 > 0.0 && self.sigma2 > 0.0 && self.rho.abs() < 1.0) {
            return Err(Error::InvalidArgument("need sigma1, sigma2 > 0 and |rho| < 1".into()));
        }
        if self.n() <= l {
            return Err(Error::InvalidArgument(format!("need n > L (n = {}, L = {l})", self.n())));
        }
        self.subset().map(|_| ())
    }

    /// Set `delta1` and `delta2` to the local parameters matching the fixed
    /// `beta_star` and `pi` at this `n`.
    pub fn localized(&self) -> Self {
        let rn = (self.n() as f64).sqrt();
        PowerSpec {
            delta1: rn * (self.beta_star - self.beta0),
            delta2: self.pi.iter().map(|p| rn * p).collect(),
            ..self.clone()
        }
    }

    /// `sigma2^2 + d^2 sigma1^2 + 2 d rho sigma1 sigma2` with `d = beta* - beta0`.
    pub fn sigma_tilde2(&self) -> f64 {
        let d = self.beta_star - self.beta0;
        self.sigma2.powi(2) + d * d * self.sigma1.powi(2) + 2.0 * d * self.rho * self.sigma1 * self.sigma2
    }
}

/// Schur complement of `G_BB` in `G` and the complement indices.
fn schur(g: &DMatrix<f64>, b: &SubsetB) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let comp = b.complement();
    let gcc = g.select_rows(&comp).select_columns(&comp);
    if b.size() == 0 {
        return Ok((gcc, comp));
    }
    let bi = b.indices();
    let gbb = g.select_rows(bi).select_columns(bi);
    let gbc = g.select_rows(bi).select_columns(&comp);
    let chol = gbb.cholesky().ok_or_else(|| Error::Singular("Gram matrix of Z_B is not positive definite".into()))?;
    let s = gcc - gbc.transpose() * chol.solve(&gbc);
    Ok((s, comp))
}

fn quad(s: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    x.dot(&(s * y))
}

fn pick(v: &[f64], idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&j| v[j]))
}

/// `eta(B) = ||R_{Z_B} Z_C (pi_C + gamma_C (beta* - beta0))||^2`.
pub fn ar_noncentrality(spec: &PowerSpec) -> Result<f64> {
    spec.validate()?;
    let (s, comp) = schur(&spec.z.gram()?, &spec.subset()?)?;
    let d = spec.beta_star - spec.beta0;
    let x: Vec<f64> = spec.pi.iter().zip(&spec.gamma).map(|(p, g)| p + g * d).collect();
    let x = pick(&x, &comp);
    Ok(quad(&s, &x, &x).max(0.0))
}

/// Exact power of the AR test of `beta0` under `B`: the noncentral F tail
/// beyond the central critical value, with noncentrality `eta / sigma_tilde^2`.
pub fn ar_power_exact(spec: &PowerSpec, alpha: f64) -> Result<f64> {
    let eta = ar_noncentrality(spec)?;
    let b = spec.subset()?;
    let (n, l) = (spec.n(), spec.l());
    let k = (l - b.size()) as f64;
    let df2 = (n - l) as f64;
    let crit = f_quantile(1.0 - alpha, k, df2);
    if eta == 0.0 {
        return Ok(alpha);
    }
    Ok((1.0 - noncentral_f_cdf(crit, k, df2, eta / spec.sigma_tilde2())).clamp(0.0, 1.0))
}

/// Plug-ins `(mu(B), kappa(B))` from the design.
pub fn local_moments(spec: &PowerSpec) -> Result<(f64, f64)> {
    spec.validate()?;
    let (s, comp) = schur(&spec.z.gram()?, &spec.subset()?)?;
    let n = spec.n() as f64;
    let g = pick(&spec.gamma, &comp);
    let d2 = if spec.delta2.is_empty() { DVector::zeros(comp.len()) } else { pick(&spec.delta2, &comp) };
    Ok((quad(&s, &g, &g) / n, quad(&s, &g, &d2) / n))
}

/// Drift of the TSLS t statistic under the local alternative.
pub fn tsls_drift(spec: &PowerSpec) -> Result<f64> {
    let (mu, kappa) = local_moments(spec)?;
    if !(mu > 0.0) {
        return Err(Error::Degenerate(format!("mu(B) = {mu} must be positive")));
    }
    let s2 = spec.sigma2.powi(2);
    Ok(spec.delta1 / (s2 / mu).sqrt() + kappa / (s2 * mu).sqrt())
}

/// Local-asymptotic power of the two-sided TSLS test.
pub fn tsls_local_power(spec: &PowerSpec, alpha: f64) -> Result<f64> {
    let delta = tsls_drift(spec)?;
    let z = normal_quantile(1.0 - alpha / 2.0);
    Ok(1.0 - normal_cdf(z - delta) + normal_cdf(-z - delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerPoint {
    pub beta_star: f64,
    pub eta: f64,
    pub ar: f64,
    pub tsls: Option<f64>,
    /// Monte-Carlo rejection rates, when requested.
    pub ar_sim: Option<f64>,
    pub tsls_sim: Option<f64>,
}

/// Power at each `beta*` in `grid`, with the TSLS local parameters matched to
/// the fixed alternative.
pub fn power_curve(spec: &PowerSpec, alpha: f64, grid: &[f64]) -> Result<Vec<PowerPoint>> {
    grid.iter()
        .map(|&beta_star| {
            let s = PowerSpec { beta_star, ..spec.clone() };
            let tsls = match tsls_local_power(&s.localized(), alpha) {
                Ok(p) => Some(p),
                Err(e) if e.is_numerical() => None,
                Err(e) => return Err(e),
            };
            Ok(PowerPoint {
                beta_star,
                eta: ar_noncentrality(&s)?,
                ar: ar_power_exact(&s, alpha)?,
                tsls,
                ar_sim: None,
                tsls_sim: None,
            })
        })
        .collect()
}

/// [`power_curve`] plus simulated rejection rates at each point.
pub fn power_curve_simulated(spec: &PowerSpec, alpha: f64, grid: &[f64], reps: usize, seed: u64) -> Result<Vec<PowerPoint>> {
    let mut pts = power_curve(spec, alpha, grid)?;
    for (i, p) in pts.iter_mut().enumerate() {
        let s = PowerSpec { beta_star: p.beta_star, ..spec.clone() };
        let sub = mc::derive_seed(seed, &[i as u64]);
        p.ar_sim = Some(simulate_rejection(&s, PowerTest::Ar, alpha, reps, sub)?);
        p.tsls_sim = match simulate_rejection(&s, PowerTest::Tsls, alpha, reps, sub) {
            Ok(x) => Some(x),
            Err(e) if e.is_numerical() => None,
            Err(e) => return Err(e),
        };
    }
    Ok(pts)
}

pub fn write_curve<W: std::io::Write>(points: &[PowerPoint], delimiter: u8, w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().delimiter(delimiter).from_writer(w);
    let sim = points.iter().any(|p| p.ar_sim.is_some());
    let mut header = vec!["beta_star", "eta", "ar_power", "tsls_power"];
    if sim {
        header.extend(["ar_empirical", "tsls_empirical"]);
    }
    wtr.write_record(&header)?;
    let opt = |x: Option<f64>| x.map_or_else(String::new, |t| t.to_string());
    for p in points {
        let mut rec = vec![p.beta_star.to_string(), p.eta.to_string(), p.ar.to_string(), opt(p.tsls)];
        if sim {
            rec.extend([opt(p.ar_sim), opt(p.tsls_sim)]);
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Which test [`simulate_rejection`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerTest {
    Ar,
    Tsls,
}

/// Monte-Carlo rejection rate of the test of `beta0` under `B`. A sample
/// design keeps `Z` fixed; a population design draws fresh Gaussian rows
/// with the given second moment in every replicate.
pub fn simulate_rejection(spec: &PowerSpec, test: PowerTest, alpha: f64, reps: usize, seed: u64) -> Result<f64> {
    spec.validate()?;
    let b = spec.subset()?;
    let gamma = DVector::from_column_slice(&spec.gamma);
    let pi = DVector::from_column_slice(&spec.pi);
    let fixed = match &spec.z {
        ZDesign::Sample { z } => {
            let z = from_rows(z)?;
            let t = IvSample::new(&z * &pi, &z * &gamma, z, None)?;
            t.projector();
            Some(t)
        }
        ZDesign::Population { .. } => None,
    };
    let chol_l = match &spec.z {
        ZDesign::Population { second_moment, .. } => Some(
            from_rows(second_moment)?
                .cholesky()
                .ok_or_else(|| Error::Singular("second-moment matrix is not positive definite".into()))?
                .l(),
        ),
        ZDesign::Sample { .. } => None,
    };
    let (n, l) = (spec.n(), spec.l());
    let sq = (1.0 - spec.rho * spec.rho).sqrt();
    use rayon::prelude::*;
    let rejections: usize = (0..reps)
        .into_par_iter()
        .map(|r| -> Result<usize> {
            let mut rng = rng_for(seed, &[mc::tag::POWER_REPLICATE, r as u64]);
            let drawn;
            let template = match (&fixed, &chol_l) {
                (Some(t), _) => t,
                (None, Some(cl)) => {
                    let u = DMatrix::<f64>::from_fn(n, l, |_, _| StandardNormal.sample(&mut rng));
                    let z = u * cl.transpose();
                    drawn = IvSample::new(&z * &pi, &z * &gamma, z, None)?;
                    &drawn
                }
                (None, None) => unreachable!(),
            };
            let mut d = template.d().clone();
            let mut y = template.y().clone();
            for i in 0..n {
                let u1: f64 = StandardNormal.sample(&mut rng);
                let u2: f64 = StandardNormal.sample(&mut rng);
                let xi = spec.sigma1 * u1;
                let eps = spec.sigma2 * (spec.rho * u1 + sq * u2);
                d[i] += xi;
                y[i] += eps + d[i] * spec.beta_star;
            }
            let s = template.with_outcomes(y, d)?;
            let g = SubsetGram::new(&s, &b)?;
            let reject = match test {
                PowerTest::Ar => g.ar_test(spec.beta0, alpha)?.reject,
                PowerTest::Tsls => g.tsls_test(spec.beta0, alpha)?.reject,
            };
            Ok(reject as usize)
        })
        .sum::<Result<usize>>()?;
    Ok(rejections as f64 / reps as f64)
}
