//! Seeding and Monte-Carlo helpers.
//!
//! A single master seed feeds every stochastic component through
//! [`derive_seed`]: each consumer hashes the master seed together with a
//! fixed path of labels (component tag, replicate id, chunk id, ...). Draws
//! are generated in fixed-size chunks with one stream per chunk, so results
//! never depend on how many worker threads ran them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Component tags used as the first element of a seed path.
pub mod tag {
    pub const CLR_CRITICAL: u64 = 0x434c_5200;
    pub const COLLIDER_NULL: u64 = 0x434f_4c00;
    pub const COLLIDER_PVALUE: u64 = 0x434f_5000;
    pub const SIM_REPLICATE: u64 = 0x5349_4d00;
    pub const POWER_REPLICATE: u64 = 0x504f_5700;
}

/// Draws per chunk in [`par_draws`].
pub const CHUNK: usize = 1 << 14;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the node `path` of the derivation tree rooted at `master`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_for(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}

/// Generate `draws` draws in parallel. `fill` receives a chunk-local RNG and
/// the number of draws in the chunk and pushes their values in order.
pub fn par_draws<T, F>(draws: usize, master: u64, path: &[u64], fill: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize, &mut Vec<T>) + Sync,
{
    let chunks = draws.div_ceil(CHUNK);
    let parts: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(draws - c * CHUNK);
            let mut p = path.to_vec();
            p.push(c as u64);
            let mut rng = rng_for(master, &p);
            let mut out = Vec::with_capacity(len);
            fill(&mut rng, len, &mut out);
            out
        })
        .collect();
    parts.into_iter().flatten().collect()
}

/// Linear-interpolation empirical quantile (type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sort_floats(v: &mut [f64]) {
    v.sort_unstable_by(|a, b| a.total_cmp(b));
}

/// Fraction of sorted values that are `>= x`.
pub fn upper_tail_fraction(sorted: &[f64], x: f64) -> f64 {
    let below = sorted.partition_point(|&s| s < x);
    (sorted.len() - below) as f64 / sorted.len() as f64
}

/// Median that keeps infinities (a majority of infinite values gives inf).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    sort_floats(&mut v);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else if v[m - 1].is_infinite() || v[m].is_infinite() {
        if v[m - 1] == v[m] { v[m] } else { f64::INFINITY }
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derive_seed_separates_paths() {
        let a = derive_seed(7, &[1, 2]);
        assert_eq!(a, derive_seed(7, &[1, 2]));
        assert_ne!(a, derive_seed(7, &[2, 1]));
        assert_ne!(a, derive_seed(8, &[1, 2]));
        assert_ne!(derive_seed(7, &[]), derive_seed(7, &[0]));
    }

    #[test]
    fn par_draws_independent_of_pool_size() {
        let gen = |r: &mut ChaCha8Rng, n: usize, out: &mut Vec<f64>| {
            for _ in 0..n {
                out.push(r.random::<f64>());
            }
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| par_draws(50_001, 3, &[9], gen));
        let b = four.install(|| par_draws(50_001, 3, &[9], gen));
        assert_eq!(a.len(), 50_001);
        assert_eq!(a, b);
    }

    #[test]
    fn quantile_type7() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert!((quantile_sorted(&v, 0.5) - 2.5).abs() < 1e-15);
        assert_eq!(upper_tail_fraction(&v, 2.0), 0.75);
        assert_eq!(upper_tail_fraction(&v, 0.0), 1.0);
    }

    #[test]
    fn median_with_infinities() {
        assert_eq!(median(&[1.0, f64::INFINITY, f64::INFINITY]), f64::INFINITY);
        assert_eq!(median(&[1.0, 3.0, f64::INFINITY]), 3.0);
        assert_eq!(median(&[1.0, 3.0]), 2.0);
        assert_eq!(median(&[1.0, f64::INFINITY]), f64::INFINITY);
    }
}
