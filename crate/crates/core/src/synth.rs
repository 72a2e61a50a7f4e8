//! Seeded synthetic data: a Gaussian mixture under a random rotation with a
//! geometrically decaying spectrum.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::VectorSet;

/// Generates `n` vectors in `d` dimensions from `clusters` Gaussian
/// components sharing one covariance `Q diag(s) Q^T`, where `Q` is a random
/// rotation and `s_i = (1 - correlation)^(4 i / d)`. Component means are
/// drawn from the same distribution scaled by 2. `correlation = 0` gives
/// isotropic components. Values are rounded to f32 so the data survives an
/// fvecs round trip unchanged.
pub fn gen_synthetic(n: usize, d: usize, clusters: usize, correlation: f64, seed: u64) -> Result<VectorSet> {
    if d == 0 {
        return Err(Error::Domain("dimension must be >= 1".into()));
    }
    if clusters == 0 {
        return Err(Error::Domain("need at least one cluster".into()));
    }
    if !(0.0..1.0).contains(&correlation) {
        return Err(Error::Domain(format!("correlation {correlation} outside [0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = gauss.qr().q();
    let scale: Vec<f64> = (0..d)
        .map(|i| (1.0 - correlation).powf(4.0 * i as f64 / d as f64).sqrt())
        .collect();

    let mut z = vec![0.0; d];
    let mut draw = |rng: &mut ChaCha8Rng, factor: f64, out: &mut [f64]| {
        for (v, s) in z.iter_mut().zip(&scale) {
            *v = rng.sample::<f64, _>(StandardNormal) * s * factor;
        }
        for (r, o) in out.iter_mut().enumerate() {
            *o = (0..d).map(|c| q[(r, c)] * z[c]).sum();
        }
    };

    let mut means = vec![0.0; clusters * d];
    for m in means.chunks_exact_mut(d) {
        draw(&mut rng, 2.0, m);
    }
    let mut data = vec![0.0; n * d];
    for x in data.chunks_exact_mut(d) {
        let c = rng.random_range(0..clusters);
        draw(&mut rng, 1.0, x);
        for (v, m) in x.iter_mut().zip(&means[c * d..(c + 1) * d]) {
            *v = (*v + m) as f32 as f64;
        }
    }
    VectorSet::new(d, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::pca_basis;

    fn covariance_eigen(data: &VectorSet) -> Vec<f64> {
        let d = data.dim();
        let n = data.len() as f64;
        let mut mean = vec![0.0; d];
        for x in data.rows() {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let centered: Vec<f64> = data.rows().flat_map(|x| x.iter().zip(&mean).map(|(a, b)| a - b)).collect();
        pca_basis(&VectorSet::new(d, centered).unwrap()).unwrap().explained_variance().to_vec()
    }

    #[test]
    fn deterministic() {
        let a = gen_synthetic(100, 8, 3, 0.5, 7).unwrap();
        let b = gen_synthetic(100, 8, 3, 0.5, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_synthetic(100, 8, 3, 0.5, 8).unwrap());
        assert!(a.as_slice().iter().all(|&v| v as f32 as f64 == v));
    }

    #[test]
    fn isotropic_without_correlation() {
        let data = gen_synthetic(20_000, 6, 1, 0.0, 1).unwrap();
        let ev = covariance_eigen(&data);
        assert!(ev[0] / ev[5] < 1.15, "{ev:?}");
        assert!((ev.iter().sum::<f64>() / 6.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn correlated_spectrum() {
        let data = gen_synthetic(10_000, 32, 8, 0.9, 2).unwrap();
        let ev = covariance_eigen(&data);
        let median = (ev[15] + ev[16]) / 2.0;
        assert!(ev[0] >= 5.0 * median, "{} vs median {}", ev[0], median);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(gen_synthetic(10, 4, 0, 0.5, 0).is_err());
        assert!(gen_synthetic(10, 4, 1, 1.0, 0).is_err());
        assert!(gen_synthetic(10, 0, 1, 0.0, 0).is_err());
    }
}
