use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::IvSample;

pub fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn randv(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Linear IV draw with first-stage coefficient `g` on every instrument,
/// direct effects `pi`, effect `beta` and correlated errors.
pub fn iv_draw(seed: u64, n: usize, pi: &[f64], g: f64, beta: f64) -> IvSample {
    let l = pi.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = randn(&mut rng, n, l);
    let u1 = randv(&mut rng, n);
    let u2 = randv(&mut rng, n);
    let xi = &u1 * 2.0;
    let eps = (&u1 * 0.8 + &u2 * 0.6) * 2.0;
    let d = &z * DVector::from_element(l, g) + xi;
    let y = &z * DVector::from_column_slice(pi) + &d * beta + eps;
    IvSample::new(y, d, z, None).unwrap()
}

pub fn dense_proj(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.ncols() == 0 {
        return DMatrix::zeros(a.nrows(), a.nrows());
    }
    let g = (a.transpose() * a).try_inverse().unwrap();
    a * g * a.transpose()
}

pub fn qf(v: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    (v.transpose() * m * v)[(0, 0)]
}
