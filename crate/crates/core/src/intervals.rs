//! Extended-real interval sets and per-subset confidence sets by test
//! inversion.

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::data::IvSample;
use crate::dist::{f_quantile, normal_quantile};
use crate::error::{Error, Result};
use crate::iv_tests::{ClrCriticalSource, SubsetGram};
use crate::subset::SubsetB;

/// Closed interval `[lo, hi]` on the extended real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ExtInterval {
    pub fn new(lo: f64, hi: f64) -> Option<Self> {
        (lo <= hi && !(lo == f64::INFINITY || hi == f64::NEG_INFINITY)).then_some(ExtInterval { lo, hi })
    }

    pub fn whole() -> Self {
        ExtInterval { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

fn ser_endpoint(x: f64) -> serde_json::Value {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        x.into()
    }
}

/// Serialize a possibly infinite float with the `"inf"` / `"-inf"` sentinels.
pub fn serialize_extended<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    ser_endpoint(*x).serialize(s)
}

pub fn serialize_extended_opt<S: Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    x.map(ser_endpoint).serialize(s)
}

impl Serialize for ExtInterval {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [ser_endpoint(self.lo), ser_endpoint(self.hi)].serialize(s)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Endpoint {
    Num(f64),
    Text(String),
}

impl Endpoint {
    fn value<E: de::Error>(self) -> std::result::Result<f64, E> {
        match self {
            Endpoint::Num(x) => Ok(x),
            Endpoint::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Endpoint::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Endpoint::Text(t) => Err(E::custom(format!("bad interval endpoint '{t}'"))),
        }
    }
}

impl<'de> Deserialize<'de> for ExtInterval {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [lo, hi] = <[Endpoint; 2]>::deserialize(d)?;
        let (lo, hi) = (lo.value()?, hi.value()?);
        ExtInterval::new(lo, hi).ok_or_else(|| de::Error::custom(format!("empty interval [{lo}, {hi}]")))
    }
}

/// Sorted union of disjoint closed intervals; touching parts are merged.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(transparent)]
pub struct IntervalUnion {
    parts: Vec<ExtInterval>,
}

impl<'de> Deserialize<'de> for IntervalUnion {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(normalize(Vec::<ExtInterval>::deserialize(d)?))
    }
}

/// Sort and merge into an [`IntervalUnion`].
pub fn normalize(mut parts: Vec<ExtInterval>) -> IntervalUnion {
    parts.retain(|p| p.lo <= p.hi);
    parts.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let mut out: Vec<ExtInterval> = Vec::with_capacity(parts.len());
    for p in parts {
        match out.last_mut() {
            Some(last) if p.lo <= last.hi => last.hi = last.hi.max(p.hi),
            _ => out.push(p),
        }
    }
    IntervalUnion { parts: out }
}

impl IntervalUnion {
    pub fn empty() -> Self {
        IntervalUnion { parts: Vec::new() }
    }

    pub fn whole() -> Self {
        IntervalUnion { parts: vec![ExtInterval::whole()] }
    }

    pub fn single(lo: f64, hi: f64) -> Self {
        normalize(ExtInterval::new(lo, hi).into_iter().collect())
    }

    pub fn parts(&self) -> &[ExtInterval] {
        &self.parts
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn is_whole(&self) -> bool {
        self.parts.len() == 1 && self.parts[0] == ExtInterval::whole()
    }

    pub fn is_bounded(&self) -> bool {
        self.parts.iter().all(|p| p.lo.is_finite() && p.hi.is_finite())
    }

    pub fn contains(&self, x: f64) -> bool {
        let i = self.parts.partition_point(|p| p.hi < x);
        i < self.parts.len() && self.parts[i].contains(x)
    }

    /// Total length in `[0, inf]`.
    pub fn length(&self) -> f64 {
        self.parts.iter().map(ExtInterval::length).sum()
    }

    pub fn lower(&self) -> Option<f64> {
        self.parts.first().map(|p| p.lo)
    }

    pub fn upper(&self) -> Option<f64> {
        self.parts.last().map(|p| p.hi)
    }

    pub fn union(&self, other: &IntervalUnion) -> IntervalUnion {
        normalize(self.parts.iter().chain(&other.parts).copied().collect())
    }

    /// True when every part of `self` lies inside one part of `other`.
    pub fn is_subset_of(&self, other: &IntervalUnion) -> bool {
        self.parts.iter().all(|p| {
            let i = other.parts.partition_point(|q| q.hi < p.lo);
            i < other.parts.len() && other.parts[i].lo <= p.lo && p.hi <= other.parts[i].hi
        })
    }
}

impl FromIterator<IntervalUnion> for IntervalUnion {
    fn from_iter<T: IntoIterator<Item = IntervalUnion>>(iter: T) -> Self {
        normalize(iter.into_iter().flat_map(|u| u.parts).collect())
    }
}

impl std::fmt::Display for IntervalUnion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.parts.is_empty() {
            return write!(f, "{{}}");
        }
        let s: Vec<String> = self.parts.iter().map(|p| format!("[{}, {}]", p.lo, p.hi)).collect();
        write!(f, "{}", s.join(" U "))
    }
}

/// `beta_hat -/+ z se`.
pub fn invert_tsls(sample: &IvSample, b: &SubsetB, alpha: f64) -> Result<IntervalUnion> {
    invert_tsls_gram(&SubsetGram::new(sample, b)?, alpha)
}

pub fn invert_tsls_gram(g: &SubsetGram, alpha: f64) -> Result<IntervalUnion> {
    let fit = g.tsls()?;
    let half = normal_quantile(1.0 - alpha / 2.0) * fit.se;
    Ok(IntervalUnion::single(fit.beta_hat - half, fit.beta_hat + half))
}

/// AR confidence set with an optional diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct Inverted {
    pub set: IntervalUnion,
    pub note: Option<String>,
}

/// Exact AR confidence set from the quadratic acceptance inequality.
pub fn invert_ar(sample: &IvSample, b: &SubsetB, alpha: f64) -> Result<IntervalUnion> {
    let inv = invert_ar_gram(&SubsetGram::new(sample, b)?, alpha)?;
    if let Some(note) = &inv.note {
        log::warn!("{note}");
    }
    Ok(inv.set)
}

pub fn invert_ar_gram(g: &SubsetGram, alpha: f64) -> Result<Inverted> {
    if g.n() <= g.l() {
        return Err(Error::InvalidArgument("AR inversion needs n > L".into()));
    }
    let fcrit = f_quantile(1.0 - alpha, g.k() as f64, (g.n() - g.l()) as f64);
    let q = g.ar_quadratic(fcrit);
    let tol = 1e-12 * q.scale;
    if q.a.abs() <= tol && q.b.abs() <= tol && q.c.abs() <= tol {
        return Ok(Inverted {
            set: IntervalUnion::whole(),
            note: Some("AR quadratic coefficients vanish; confidence set is the whole line".into()),
        });
    }
    Ok(Inverted { set: solve_quadratic_le(q.a, q.b, q.c), note: None })
}

/// `{x : a x^2 + b x + c <= 0}`.
pub fn solve_quadratic_le(a: f64, b: f64, c: f64) -> IntervalUnion {
    if a == 0.0 {
        return if b > 0.0 {
            IntervalUnion::single(f64::NEG_INFINITY, -c / b)
        } else if b < 0.0 {
            IntervalUnion::single(-c / b, f64::INFINITY)
        } else if c <= 0.0 {
            IntervalUnion::whole()
        } else {
            IntervalUnion::empty()
        };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return if a > 0.0 { IntervalUnion::empty() } else { IntervalUnion::whole() };
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let (r1, r2) = if q == 0.0 {
        (0.0, 0.0)
    } else {
        let (x, y) = (q / a, c / q);
        (x.min(y), x.max(y))
    };
    if a > 0.0 {
        IntervalUnion::single(r1, r2)
    } else {
        normalize(vec![
            ExtInterval { lo: f64::NEG_INFINITY, hi: r1 },
            ExtInterval { lo: r2, hi: f64::INFINITY },
        ])
    }
}

/// Adaptive grid for CLR inversion. Widths are in units of the TSLS
/// standard error around the TSLS estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub half_width_se: f64,
    pub expansion: f64,
    pub resolution_se: f64,
    pub probe_bound: f64,
    pub points_per_segment: usize,
    pub critical: ClrCriticalSource,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            half_width_se: 10.0,
            expansion: 4.0,
            resolution_se: 1e-4,
            probe_bound: 1e6,
            points_per_segment: 200,
            critical: ClrCriticalSource::Tabulated,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.half_width_se > 0.0
            && self.expansion > 1.0
            && self.resolution_se > 0.0
            && self.probe_bound > 0.0
            && self.points_per_segment >= 2;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid grid specification {self:?}")))
        }
    }
}

pub fn invert_clr(sample: &IvSample, b: &SubsetB, alpha: f64, grid: &GridSpec) -> Result<IntervalUnion> {
    invert_clr_gram(&SubsetGram::new(sample, b)?, alpha, grid)
}

pub fn invert_clr_gram(g: &SubsetGram, alpha: f64, grid: &GridSpec) -> Result<IntervalUnion> {
    grid.validate()?;
    let (center, se) = match g.tsls() {
        Ok(f) if f.se.is_finite() && f.se > 0.0 => (f.beta_hat, f.se),
        Ok(f) => (f.beta_hat, 1.0),
        Err(_) => (0.0, 1.0),
    };
    let accept = |x: f64| -> Result<bool> {
        let (stat, cond) = g.clr(x)?;
        Ok(stat <= grid.critical.critical(cond.k, cond.q22, alpha)?)
    };
    invert_on_grid(accept, center, se, grid)
}

/// Grid inversion of a generic acceptance predicate.
pub(crate) fn invert_on_grid(
    accept: impl Fn(f64) -> Result<bool>,
    center: f64,
    se: f64,
    grid: &GridSpec,
) -> Result<IntervalUnion> {
    let m = grid.probe_bound.max(center.abs() * 2.0);
    let resolution = grid.resolution_se * se;
    let npts = grid.points_per_segment;
    let mut pts: Vec<(f64, bool)> = Vec::new();

    let h = (grid.half_width_se * se).min(m);
    for i in 0..=npts {
        let x = center - h + 2.0 * h * i as f64 / npts as f64;
        pts.push((x, accept(x)?));
    }
    // grow each side until two consecutive expansions add nothing or +-M is reached
    for dir in [-1.0f64, 1.0] {
        let mut inner = h;
        let mut empty_runs = 0;
        while empty_runs < 2 && inner < m {
            let outer = (inner * grid.expansion).min(m);
            let mut any = false;
            for i in 1..=npts {
                let x = center + dir * (inner + (outer - inner) * i as f64 / npts as f64);
                let a = accept(x)?;
                any |= a;
                pts.push((x, a));
            }
            empty_runs = if any { 0 } else { empty_runs + 1 };
            inner = outer;
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let lo_unbounded = pts.first().is_some_and(|p| p.1 && p.0 <= center - m + 1e-9 * m);
    let hi_unbounded = pts.last().is_some_and(|p| p.1 && p.0 >= center + m - 1e-9 * m);

    let refine = |mut acc: f64, mut rej: f64| -> Result<f64> {
        while (acc - rej).abs() > resolution {
            let mid = 0.5 * (acc + rej);
            if accept(mid)? {
                acc = mid;
            } else {
                rej = mid;
            }
        }
        Ok(acc)
    };

    let mut parts = Vec::new();
    let mut i = 0;
    while i < pts.len() {
        if !pts[i].1 {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < pts.len() && pts[i + 1].1 {
            i += 1;
        }
        let lo = if start == 0 {
            if lo_unbounded { f64::NEG_INFINITY } else { pts[0].0 }
        } else {
            refine(pts[start].0, pts[start - 1].0)?
        };
        let hi = if i + 1 == pts.len() {
            if hi_unbounded { f64::INFINITY } else { pts[i].0 }
        } else {
            refine(pts[i].0, pts[i + 1].0)?
        };
        parts.push(ExtInterval { lo, hi });
        i += 1;
    }
    Ok(normalize(parts))
}
