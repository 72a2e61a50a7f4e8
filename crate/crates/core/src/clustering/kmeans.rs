use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{dot, Codebook, VectorSet};

/// Points per work unit. Partial sums are merged in chunk order, so results do
/// not depend on how many threads run.
pub(crate) const CHUNK: usize = 512;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansConfig {
    pub max_iters: usize,
    /// Stop once the objective drops by less than this fraction in one iteration.
    pub rel_tol: f64,
    /// Used only when an initial codebook has to be sampled from the data.
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iters: 25,
            rel_tol: 1e-4,
            seed: 0,
        }
    }
}

impl KMeansConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Domain("k-means needs max_iters >= 1".into()));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(Error::Domain("k-means rel_tol must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct KMeansResult {
    pub codebook: Codebook,
    /// Nearest-centroid assignment for the returned codebook.
    pub assignments: Vec<u32>,
    /// Objective (mean over points) after every assignment step, starting with
    /// the assignment to the initial centroids.
    pub history: Vec<f64>,
}

impl KMeansResult {
    pub fn objective(&self) -> f64 {
        *self.history.last().expect("history is never empty")
    }
}

/// Per-point data for the ε-penalized assignment rule.
///
/// For point `n`, choosing centroid `c` gives `ε = eps_other[n] + 2 c . other_sum[n]`
/// and the assignment cost gains `lambda (ε - eps0)^2`.
#[derive(Clone, Copy, Debug)]
pub struct EpsPenalty<'a> {
    pub other_sum: &'a VectorSet,
    pub eps_other: &'a [f64],
    pub lambda: f64,
    pub eps0: f64,
}

/// Picks `k` distinct data points (seeded) as a starting codebook. When the
/// data has fewer than `k` points the remainder repeats from the start.
pub fn sample_init(data: &VectorSet, k: usize, seed: u64) -> Result<Codebook> {
    if k == 0 {
        return Err(Error::Domain("k-means needs K >= 1".into()));
    }
    if data.is_empty() {
        return Err(Error::Empty("cannot sample centroids from an empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = data.len();
    let ids: Vec<usize> = if k <= n {
        index::sample(&mut rng, n, k).into_vec()
    } else {
        (0..k).map(|i| i % n).collect()
    };
    Codebook::from_vectors(data.select(&ids))
}

/// Lloyd's algorithm warm-started from `init`.
///
/// Only the first `active_dims` coordinates take part in assignment and in the
/// centroid update; the remaining centroid coordinates pass through unchanged.
/// Empty clusters are reseeded to the point farthest from its centroid.
pub fn kmeans(
    data: &VectorSet,
    init: &Codebook,
    cfg: &KMeansConfig,
    active_dims: usize,
) -> Result<KMeansResult> {
    lloyd(data, init, cfg, active_dims, None)
}

/// [`kmeans`] on the ε-penalized objective. Both steps minimize it exactly:
/// assignment uses [`regularized_assign`], and each centroid solves the
/// `d x d` linear system that the penalty adds to the mean update. With
/// `lambda = 0` this is plain k-means.
pub fn regularized_kmeans(
    data: &VectorSet,
    init: &Codebook,
    cfg: &KMeansConfig,
    active_dims: usize,
    penalty: &EpsPenalty<'_>,
) -> Result<KMeansResult> {
    if penalty.other_sum.len() != data.len()
        || penalty.eps_other.len() != data.len()
        || penalty.other_sum.dim() != data.dim()
    {
        return Err(Error::Shape("ε penalty terms do not match the data".into()));
    }
    if !(penalty.lambda >= 0.0) {
        return Err(Error::Domain("λ must be >= 0".into()));
    }
    lloyd(data, init, cfg, active_dims, Some(penalty))
}

/// Index minimizing `|point - c(k)|^2 + lambda (ε(k) - eps0)^2` with
/// `ε(k) = eps_other + 2 c(k) . other_sum`. Ties go to the lowest index.
pub fn regularized_assign(
    point: &[f64],
    centroids: &Codebook,
    other_sum: &[f64],
    eps_other: f64,
    lambda: f64,
    eps0: f64,
) -> usize {
    let term = PointPenalty {
        other_sum,
        eps_other,
        lambda,
        eps0,
    };
    nearest(point, centroids, point.len(), Some(&term)).0
}

struct PointPenalty<'a> {
    other_sum: &'a [f64],
    eps_other: f64,
    lambda: f64,
    eps0: f64,
}

/// (index, cost) of the best centroid over the first `dims` coordinates.
fn nearest(
    x: &[f64],
    centroids: &Codebook,
    dims: usize,
    penalty: Option<&PointPenalty<'_>>,
) -> (usize, f64) {
    let xs = &x[..dims];
    let mut best = (0, f64::INFINITY);
    for k in 0..centroids.size() {
        let c = centroids.codeword(k);
        let mut cost: f64 = xs
            .iter()
            .zip(&c[..dims])
            .map(|(a, b)| {
                let t = a - b;
                t * t
            })
            .sum();
        if let Some(p) = penalty {
            let eps = p.eps_other + 2.0 * dot(c, p.other_sum);
            let dev = eps - p.eps0;
            cost += p.lambda * dev * dev;
        }
        if cost < best.1 {
            best = (k, cost);
        }
    }
    best
}

fn assign(
    data: &VectorSet,
    centroids: &Codebook,
    dims: usize,
    penalty: Option<&EpsPenalty<'_>>,
    assignments: &mut [u32],
    costs: &mut [f64],
) -> f64 {
    let d = data.dim();
    data.as_slice()
        .par_chunks(CHUNK * d)
        .zip(assignments.par_chunks_mut(CHUNK))
        .zip(costs.par_chunks_mut(CHUNK))
        .enumerate()
        .for_each(|(chunk, ((rows, asg), cst))| {
            for (j, x) in rows.chunks_exact(d).enumerate() {
                let n = chunk * CHUNK + j;
                let term = penalty.map(|p| PointPenalty {
                    other_sum: p.other_sum.row(n),
                    eps_other: p.eps_other[n],
                    lambda: p.lambda,
                    eps0: p.eps0,
                });
                let (k, c) = nearest(x, centroids, dims, term.as_ref());
                asg[j] = k as u32;
                cst[j] = c;
            }
        });
    costs.iter().sum::<f64>() / data.len() as f64
}

/// Recomputes centroid means on the first `dims` coordinates. Returns the
/// indices of clusters that received no points.
fn update(
    data: &VectorSet,
    centroids: &mut Codebook,
    dims: usize,
    assignments: &[u32],
) -> Vec<usize> {
    let k = centroids.size();
    let d = data.dim();
    let partials: Vec<(Vec<f64>, Vec<usize>)> = data
        .as_slice()
        .par_chunks(CHUNK * d)
        .zip(assignments.par_chunks(CHUNK))
        .map(|(rows, asg)| {
            let mut sums = vec![0.0; k * dims];
            let mut counts = vec![0usize; k];
            for (x, &a) in rows.chunks_exact(d).zip(asg) {
                let a = a as usize;
                counts[a] += 1;
                for (s, v) in sums[a * dims..(a + 1) * dims].iter_mut().zip(x) {
                    *s += v;
                }
            }
            (sums, counts)
        })
        .collect();

    let mut sums = vec![0.0; k * dims];
    let mut counts = vec![0usize; k];
    for (s, c) in partials {
        sums.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
        counts.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
    }

    let mut empty = Vec::new();
    for c in 0..k {
        if counts[c] == 0 {
            empty.push(c);
            continue;
        }
        let inv = counts[c] as f64;
        let word = centroids.codeword_mut(c);
        for (w, s) in word[..dims].iter_mut().zip(&sums[c * dims..(c + 1) * dims]) {
            *w = s / inv;
        }
    }
    empty
}

/// Centroid step for the penalized objective. For cluster `k` with points
/// `P`, the active coordinates `a` solve
/// `(|P| I + 4 lambda sum S_a S_a^T) c_a = sum x_a - 2 lambda sum f S_a`,
/// where `f = eps_other + 2 c_f . S_f - eps0` collects the fixed part of `ε`.
fn penalized_update(
    data: &VectorSet,
    centroids: &mut Codebook,
    dims: usize,
    assignments: &[u32],
    penalty: &EpsPenalty<'_>,
) -> Vec<usize> {
    let k = centroids.size();
    let d = data.dim();
    let lambda = penalty.lambda;
    let snapshot = centroids.clone();
    let partials: Vec<(Vec<f64>, Vec<f64>, Vec<usize>)> = data
        .as_slice()
        .par_chunks(CHUNK * d)
        .zip(assignments.par_chunks(CHUNK))
        .enumerate()
        .map(|(chunk, (rows, asg))| {
            let mut gram = vec![0.0; k * dims * dims];
            let mut rhs = vec![0.0; k * dims];
            let mut counts = vec![0usize; k];
            for (j, (x, &a)) in rows.chunks_exact(d).zip(asg).enumerate() {
                let n = chunk * CHUNK + j;
                let a = a as usize;
                let s = penalty.other_sum.row(n);
                let c = snapshot.codeword(a);
                let fixed = penalty.eps_other[n] + 2.0 * dot(&c[dims..], &s[dims..]) - penalty.eps0;
                counts[a] += 1;
                let r = &mut rhs[a * dims..(a + 1) * dims];
                for ((r, xv), sv) in r.iter_mut().zip(x).zip(s) {
                    *r += xv - 2.0 * lambda * fixed * sv;
                }
                let g = &mut gram[a * dims * dims..(a + 1) * dims * dims];
                for i in 0..dims {
                    let si = s[i];
                    let row = &mut g[i * dims..(i + 1) * dims];
                    for (gv, sj) in row[i..].iter_mut().zip(&s[i..dims]) {
                        *gv += si * sj;
                    }
                }
            }
            (gram, rhs, counts)
        })
        .collect();

    let mut gram = vec![0.0; k * dims * dims];
    let mut rhs = vec![0.0; k * dims];
    let mut counts = vec![0usize; k];
    for (g, r, c) in partials {
        gram.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        rhs.iter_mut().zip(&r).for_each(|(a, b)| *a += b);
        counts.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
    }

    let mut empty = Vec::new();
    for c in 0..k {
        if counts[c] == 0 {
            empty.push(c);
            continue;
        }
        let g = &gram[c * dims * dims..(c + 1) * dims * dims];
        let system = DMatrix::from_fn(dims, dims, |i, j| {
            let v = 4.0 * lambda * if i <= j { g[i * dims + j] } else { g[j * dims + i] };
            if i == j {
                v + counts[c] as f64
            } else {
                v
            }
        });
        let b = DVector::from_column_slice(&rhs[c * dims..(c + 1) * dims]);
        // The system is the identity scaled by |P| plus a PSD term, so the
        // factorization only fails on non-finite input.
        if let Some(chol) = system.cholesky() {
            let sol = chol.solve(&b);
            centroids.codeword_mut(c)[..dims].copy_from_slice(sol.as_slice());
        }
    }
    empty
}

fn lloyd(
    data: &VectorSet,
    init: &Codebook,
    cfg: &KMeansConfig,
    active_dims: usize,
    penalty: Option<&EpsPenalty<'_>>,
) -> Result<KMeansResult> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("k-means on an empty dataset".into()));
    }
    if init.dim() != data.dim() {
        return Err(Error::Shape(format!(
            "initial centroids are {}-d, data is {}-d",
            init.dim(),
            data.dim()
        )));
    }
    if active_dims == 0 || active_dims > data.dim() {
        return Err(Error::Domain(format!(
            "active dimensions {active_dims} outside 1..={}",
            data.dim()
        )));
    }

    let n = data.len();
    let mut centroids = init.clone();
    let mut assignments = vec![0u32; n];
    let mut costs = vec![0.0; n];
    let mut history = vec![assign(data, &centroids, active_dims, penalty, &mut assignments, &mut costs)];

    for _ in 0..cfg.max_iters {
        let prev = *history.last().unwrap();
        let previous = (centroids.clone(), assignments.clone());
        let empty = match penalty {
            Some(p) if p.lambda > 0.0 => penalized_update(data, &mut centroids, active_dims, &assignments, p),
            _ => update(data, &mut centroids, active_dims, &assignments),
        };
        if !empty.is_empty() {
            reseed(data, &mut centroids, active_dims, &empty, &costs);
        }
        let obj = assign(data, &centroids, active_dims, penalty, &mut assignments, &mut costs);
        if obj > prev {
            // Only reachable through floating-point noise once converged.
            centroids = previous.0;
            assignments = previous.1;
            break;
        }
        history.push(obj);
        if prev - obj <= cfg.rel_tol * prev {
            break;
        }
    }

    Ok(KMeansResult {
        codebook: centroids,
        assignments,
        history,
    })
}

/// Moves each empty centroid onto the point that currently costs the most,
/// never reusing a point.
fn reseed(data: &VectorSet, centroids: &mut Codebook, dims: usize, empty: &[usize], costs: &[f64]) {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| costs[b].total_cmp(&costs[a]).then(a.cmp(&b)));
    for (&c, &p) in empty.iter().zip(&order) {
        centroids.codeword_mut(c)[..dims].copy_from_slice(&data.row(p)[..dims]);
    }
}

/// Mean squared distance to the nearest codeword over all coordinates.
pub fn nearest_objective(data: &VectorSet, centroids: &Codebook) -> f64 {
    let mut asg = vec![0u32; data.len()];
    let mut costs = vec![0.0; data.len()];
    assign(data, centroids, data.dim(), None, &mut asg, &mut costs)
}
