use crate::clustering::kmeans::{kmeans, nearest_objective, regularized_kmeans, EpsPenalty, KMeansConfig};
use crate::clustering::pca::pca_basis;
use crate::error::{Error, Result};
use crate::model::{Codebook, VectorSet};

/// Increasing list of active dimensions `d_1 < ... < d_I = d`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionSchedule {
    dims: Vec<usize>,
}

impl TransitionSchedule {
    /// `d_i = round(d^(i/steps))` for `i = 1..=steps`, deduplicated.
    pub fn geometric(dim: usize, steps: usize) -> Result<Self> {
        if dim == 0 || steps == 0 {
            return Err(Error::Domain(format!(
                "schedule needs dim >= 1 and steps >= 1, got dim={dim} steps={steps}"
            )));
        }
        let mut dims: Vec<usize> = (1..=steps)
            .map(|i| ((dim as f64).powf(i as f64 / steps as f64).round() as usize).clamp(1, dim))
            .collect();
        dims.dedup();
        *dims.last_mut().unwrap() = dim;
        dims.dedup();
        Ok(Self { dims })
    }

    /// Single step at full dimension: plain warm-started k-means.
    pub fn full(dim: usize) -> Self {
        Self { dims: vec![dim] }
    }

    pub fn from_dims(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims[0] == 0 || dims.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain(format!("schedule {dims:?} is not strictly increasing")));
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn final_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }
}

/// Optimizes `init` for the points in `xprime` by k-means in the PCA frame of
/// `xprime`, growing the active dimension along `sched`.
///
/// Each stage warm-starts from the previous stage's rotated centroids and
/// only moves their first `d_i` coordinates. The result never has a higher
/// nearest-codeword objective on `xprime` than `init` does.
pub fn transition_cluster(
    xprime: &VectorSet,
    init: &Codebook,
    sched: &TransitionSchedule,
    cfg: &KMeansConfig,
) -> Result<Codebook> {
    run(xprime, init, sched, cfg, None)
}

/// [`transition_cluster`] with the ε-penalized assignment rule at every stage.
pub fn regularized_transition_cluster(
    xprime: &VectorSet,
    init: &Codebook,
    sched: &TransitionSchedule,
    cfg: &KMeansConfig,
    penalty: &EpsPenalty<'_>,
) -> Result<Codebook> {
    run(xprime, init, sched, cfg, Some(penalty))
}

fn run(
    xprime: &VectorSet,
    init: &Codebook,
    sched: &TransitionSchedule,
    cfg: &KMeansConfig,
    penalty: Option<&EpsPenalty<'_>>,
) -> Result<Codebook> {
    let d = xprime.dim();
    if init.dim() != d {
        return Err(Error::Shape(format!(
            "initial codebook is {}-d, data is {d}-d",
            init.dim()
        )));
    }
    if sched.final_dim() != d {
        return Err(Error::Shape(format!(
            "schedule ends at {} dimensions, data has {d}",
            sched.final_dim()
        )));
    }

    let cluster = |data: &VectorSet, start: &Codebook, dims: usize, pen: Option<&EpsPenalty<'_>>| match pen {
        Some(p) => regularized_kmeans(data, start, cfg, dims, p),
        None => kmeans(data, start, cfg, dims),
    };

    // Full-dimension k-means is rotation invariant, so a one-step schedule
    // skips the PCA frame entirely.
    if sched.dims().len() == 1 || xprime.len() < 2 {
        return Ok(cluster(xprime, init, d, penalty)?.codebook);
    }

    let basis = pca_basis(xprime)?;
    let rotated = basis.project_set(xprime);
    let rotated_sum = penalty.map(|p| basis.project_set(p.other_sum));
    let rotated_penalty = penalty.zip(rotated_sum.as_ref()).map(|(p, s)| EpsPenalty {
        other_sum: s,
        ..*p
    });

    let mut centroids = Codebook::from_vectors(basis.project_set(init.as_vectors()))?;
    for &dims in sched.dims() {
        centroids = cluster(&rotated, &centroids, dims, rotated_penalty.as_ref())?.codebook;
    }
    let result = Codebook::from_vectors(basis.unproject_set(centroids.as_vectors()))?;

    if penalty.is_none() && nearest_objective(xprime, &result) > nearest_objective(xprime, init) {
        return Ok(init.clone());
    }
    Ok(result)
}
