//! Exhaustive nearest-neighbor search over compressed vectors with asymmetric
//! distance computation (ADC), plus exact ground truth and recall@R.
//!
//! For a code `(i_1..i_M)` with reconstruction `x̂ = sum_m c_m(i_m)`:
//!
//! ```text
//! |q - x̂|^2 = sum_m |q - c_m(i_m)|^2 - (M - 1)|q|^2 + ε
//! ```
//!
//! The per-codebook terms come from a [`QueryTable`] built once per query, so
//! scoring a code costs `M` table lookups and adds.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{squared_distance, squared_norm, CodeMatrix, EpsMode, QuantModel, VectorSet};

/// `M x K` squared distances from one query to every codeword.
#[derive(Clone, Debug)]
pub struct QueryTable {
    size: usize,
    entries: Vec<f64>,
    query_norm: f64,
}

impl QueryTable {
    pub fn stages(&self) -> usize {
        self.entries.len() / self.size
    }

    /// `|q - c_m(k)|^2`
    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.entries[m * self.size + k]
    }

    /// `|q|^2`
    pub fn query_norm(&self) -> f64 {
        self.query_norm
    }

    /// Sum of the table entries selected by `code`.
    fn lookup(&self, code: &[u32]) -> f64 {
        code.iter()
            .enumerate()
            .map(|(m, &k)| self.entries[m * self.size + k as usize])
            .sum()
    }
}

pub fn build_query_table(q: &[f64], model: &QuantModel) -> Result<QueryTable> {
    if q.len() != model.dim() {
        return Err(Error::Shape(format!(
            "query is {}-d, model is {}-d",
            q.len(),
            model.dim()
        )));
    }
    let k = model.codebook_size();
    let mut entries = Vec::with_capacity(model.stages() * k);
    for cb in model.codebooks() {
        entries.extend((0..k).map(|i| squared_distance(q, cb.codeword(i))));
    }
    Ok(QueryTable {
        size: k,
        entries,
        query_norm: squared_norm(q),
    })
}

/// Approximate `|q - x|^2` for one code. `eps` is the code's ε as the model's
/// mode provides it: exact, dequantized, the target constant, or zero.
pub fn adc_distance(table: &QueryTable, code: &[u32], eps: f64) -> f64 {
    let m = code.len() as f64;
    table.lookup(code) - (m - 1.0) * table.query_norm + eps
}

/// One retrieved item.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub distance: f64,
}

/// Ranked neighbors for each query, closest first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SearchResult {
    pub neighbors: Vec<Vec<Neighbor>>,
}

impl SearchResult {
    pub fn ids(&self, query: usize) -> Vec<usize> {
        self.neighbors[query].iter().map(|n| n.id).collect()
    }
}

/// Max-heap entry: the worst kept candidate sits on top. Ties rank the higher
/// id as worse, so lower ids survive.
#[derive(Clone, Copy, PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Bounded top-`r` selection by ascending score, ties by lower id.
pub(crate) fn top_r(scores: impl Iterator<Item = (usize, f64)>, r: usize) -> Vec<Neighbor> {
    let mut heap = BinaryHeap::with_capacity(r + 1);
    for (id, s) in scores {
        let c = Candidate(s, id);
        if heap.len() < r {
            heap.push(c);
        } else if let Some(top) = heap.peek() {
            if c < *top {
                heap.pop();
                heap.push(c);
            }
        }
    }
    heap.into_sorted_vec()
        .into_iter()
        .map(|Candidate(distance, id)| Neighbor { id, distance })
        .collect()
}

fn clamp_r(r: usize, n: usize) -> usize {
    if r > n {
        warn!("requested {r} neighbors from {n} vectors; returning {n}");
        n
    } else {
        r
    }
}

/// Scores every code against `q` and returns the `r` closest.
///
/// The `-(M-1)|q|^2` term, and `ε₀` for an ε-eliminated model, are the same
/// for every code; they are added once to the reported distances.
pub fn exhaustive_search(q: &[f64], codes: &CodeMatrix, model: &QuantModel, r: usize) -> Result<Vec<Neighbor>> {
    if codes.stages() != model.stages() {
        return Err(Error::Shape(format!(
            "codes have {} stages, model has {}",
            codes.stages(),
            model.stages()
        )));
    }
    let r = clamp_r(r, codes.len());
    let table = build_query_table(q, model)?;
    let mut constant = -((model.stages() - 1) as f64) * table.query_norm;
    let per_code: Option<&[f64]> = match &model.eps_mode {
        EpsMode::Stored | EpsMode::Quantized(_) => Some(codes.eps.as_deref().ok_or_else(|| {
            Error::Shape("model expects per-vector ε but the codes carry none".into())
        })?),
        EpsMode::Eliminated { eps0, .. } => {
            constant += eps0;
            None
        }
        EpsMode::None => None,
    };

    let mut hits = match per_code {
        Some(eps) => top_r(
            codes.iter().zip(eps).enumerate().map(|(i, (c, e))| (i, table.lookup(c) + e)),
            r,
        ),
        None => top_r(codes.iter().enumerate().map(|(i, c)| (i, table.lookup(c))), r),
    };
    for h in &mut hits {
        h.distance += constant;
    }
    Ok(hits)
}

/// [`exhaustive_search`] for every query, in parallel over queries.
pub fn search_all(queries: &VectorSet, codes: &CodeMatrix, model: &QuantModel, r: usize) -> Result<SearchResult> {
    let r = clamp_r(r, codes.len());
    let neighbors = (0..queries.len())
        .into_par_iter()
        .map(|i| exhaustive_search(queries.row(i), codes, model, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(SearchResult { neighbors })
}

/// Exact top-`r` Euclidean neighbors of each query by brute force.
pub fn ground_truth(queries: &VectorSet, database: &VectorSet, r: usize) -> Result<SearchResult> {
    if queries.dim() != database.dim() {
        return Err(Error::Shape(format!(
            "queries are {}-d, database is {}-d",
            queries.dim(),
            database.dim()
        )));
    }
    let r = clamp_r(r, database.len());
    let neighbors = (0..queries.len())
        .into_par_iter()
        .map(|i| {
            let q = queries.row(i);
            top_r(database.rows().enumerate().map(|(j, x)| (j, squared_distance(q, x))), r)
        })
        .collect();
    Ok(SearchResult { neighbors })
}

/// Fraction of queries whose true nearest neighbor (first entry of `truth`)
/// appears among the first `r` results.
pub fn recall_at(results: &SearchResult, truth: &SearchResult, r: usize) -> Result<f64> {
    if results.neighbors.is_empty() {
        return Err(Error::Empty("recall over zero queries".into()));
    }
    if results.neighbors.len() != truth.neighbors.len() {
        return Err(Error::Shape(format!(
            "{} result lists for {} ground-truth lists",
            results.neighbors.len(),
            truth.neighbors.len()
        )));
    }
    let mut hits = 0usize;
    for (res, gt) in results.neighbors.iter().zip(&truth.neighbors) {
        if r > res.len() {
            return Err(Error::Domain(format!(
                "recall@{r} needs at least {r} results per query, got {}",
                res.len()
            )));
        }
        let nn = gt
            .first()
            .ok_or_else(|| Error::Empty("a ground-truth list is empty".into()))?
            .id;
        if res[..r].iter().any(|n| n.id == nn) {
            hits += 1;
        }
    }
    Ok(hits as f64 / results.neighbors.len() as f64)
}
