use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::VectorSet;

/// Orthonormal rotation whose rows are the principal directions of a dataset,
/// ordered by decreasing explained variance.
///
/// The basis comes from the uncentered second-moment matrix, so rotating back
/// is a plain transpose with no mean to re-add.
#[derive(Clone, Debug)]
pub struct PcaBasis {
    dim: usize,
    /// Row-major `d x d`; row `i` is the `i`-th principal direction.
    rotation: Vec<f64>,
    explained: Vec<f64>,
}

impl PcaBasis {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rotation[i * self.dim..(i + 1) * self.dim]
    }

    /// Second moment along each principal direction, descending.
    pub fn explained_variance(&self) -> &[f64] {
        &self.explained
    }

    /// `R x`
    pub fn project(&self, x: &[f64], out: &mut [f64]) {
        for (o, r) in out.iter_mut().zip(self.rotation.chunks_exact(self.dim)) {
            *o = r.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    /// `R^T y`
    pub fn unproject(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, &coef) in self.rotation.chunks_exact(self.dim).zip(y) {
            for (o, v) in out.iter_mut().zip(r) {
                *o += coef * v;
            }
        }
    }

    pub fn project_set(&self, data: &VectorSet) -> VectorSet {
        let mut out = vec![0.0; data.as_slice().len()];
        for (x, o) in data.rows().zip(out.chunks_exact_mut(self.dim)) {
            self.project(x, o);
        }
        VectorSet::from_raw(self.dim, out)
    }

    pub fn unproject_set(&self, data: &VectorSet) -> VectorSet {
        let mut out = vec![0.0; data.as_slice().len()];
        for (y, o) in data.rows().zip(out.chunks_exact_mut(self.dim)) {
            self.unproject(y, o);
        }
        VectorSet::from_raw(self.dim, out)
    }
}

/// Principal directions of `data` without centering.
pub fn pca_basis(data: &VectorSet) -> Result<PcaBasis> {
    if data.len() < 2 {
        return Err(Error::Domain(format!(
            "PCA needs at least 2 vectors, got {}",
            data.len()
        )));
    }
    let d = data.dim();
    let mut moment = vec![0.0; d * d];
    for x in data.rows() {
        for i in 0..d {
            let xi = x[i];
            let row = &mut moment[i * d..(i + 1) * d];
            for j in i..d {
                row[j] += xi * x[j];
            }
        }
    }
    let n = data.len() as f64;
    for i in 0..d {
        for j in i..d {
            let v = moment[i * d + j] / n;
            moment[i * d + j] = v;
            moment[j * d + i] = v;
        }
    }

    let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, &moment));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut rotation = Vec::with_capacity(d * d);
    let mut explained = Vec::with_capacity(d);
    for &c in &order {
        let v = eig.eigenvectors.column(c);
        let norm = v.norm();
        rotation.extend(v.iter().map(|x| x / norm));
        explained.push(eig.eigenvalues[c].max(0.0));
    }
    Ok(PcaBasis {
        dim: d,
        rotation,
        explained,
    })
}
