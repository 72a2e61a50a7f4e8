//! Encoding vectors against an additive model.
//!
//! [`multipath_encode`] runs a beam search over the codebooks in model order,
//! keeping the `L` best partial codes after each codebook. Partial codes are
//! scored by their exact prefix distortion, which is extended per codeword
//! from three cached scalars and the precomputed [`CrossDotTables`]:
//!
//! ```text
//! |x - sum c|^2 = |x|^2 - 2 sum x.c + sum |c|^2 + 2 sum_{a<b} c_a.c_b
//! ```
//!
//! With the codebooks sorted by descending variance the codebooks still to
//! come contribute little, so the prefix distortion is a good proxy for the
//! final one. [`exhaustive_encode`] is the exact solver for tiny models.

use log::warn;
use rayon::prelude::*;

use crate::clustering::CHUNK;
use crate::error::{Error, Result};
use crate::model::{dot, residual_into, squared_norm, CodeMatrix, EpsMode, EpsQuantizer, QuantModel, VectorSet};

/// Dot products between every pair of codewords from different codebooks,
/// plus every codeword's squared norm.
#[derive(Clone, Debug)]
pub struct CrossDotTables {
    stages: usize,
    size: usize,
    norms: Vec<f64>,
    /// For each pair `a < b`, a `K x K` block with `[j * K + k] = c_a(j) . c_b(k)`.
    cross: Vec<f64>,
}

impl CrossDotTables {
    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn norm(&self, m: usize, k: usize) -> f64 {
        self.norms[m * self.size + k]
    }

    fn pair_offset(&self, a: usize, b: usize) -> usize {
        debug_assert!(a < b && b < self.stages);
        let pair = a * self.stages - a * (a + 1) / 2 + (b - a - 1);
        pair * self.size * self.size
    }

    /// `c_a(j) . c_b(k)` for any `a != b`.
    pub fn cross(&self, a: usize, j: usize, b: usize, k: usize) -> f64 {
        let (a, j, b, k) = if a < b { (a, j, b, k) } else { (b, k, a, j) };
        self.cross[self.pair_offset(a, b) + j * self.size + k]
    }

    /// Row `c_a(j) . c_b(*)` for `a < b`.
    fn cross_row(&self, a: usize, j: usize, b: usize) -> &[f64] {
        let start = self.pair_offset(a, b) + j * self.size;
        &self.cross[start..start + self.size]
    }

    /// ε of a full code: twice the sum of cross products over pairs `a < b`.
    pub fn epsilon(&self, code: &[u32]) -> f64 {
        let mut sum = 0.0;
        for a in 0..code.len() {
            for b in a + 1..code.len() {
                sum += self.cross_row(a, code[a] as usize, b)[code[b] as usize];
            }
        }
        2.0 * sum
    }
}

pub fn build_cross_tables(model: &QuantModel) -> CrossDotTables {
    let (m, k) = (model.stages(), model.codebook_size());
    let mut norms = Vec::with_capacity(m * k);
    for cb in model.codebooks() {
        norms.extend((0..k).map(|i| squared_norm(cb.codeword(i))));
    }
    let mut cross = Vec::with_capacity(m * (m - 1) / 2 * k * k);
    for a in 0..m {
        for b in a + 1..m {
            let (ca, cb) = (model.codebook(a), model.codebook(b));
            for j in 0..k {
                let wj = ca.codeword(j);
                cross.extend((0..k).map(|i| dot(wj, cb.codeword(i))));
            }
        }
    }
    CrossDotTables {
        stages: m,
        size: k,
        norms,
        cross,
    }
}

/// Outcome of encoding one vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoded {
    pub code: Vec<u32>,
    /// `|x - reconstruct(code)|^2`
    pub distortion: f64,
    /// ε of the chosen code.
    pub eps: f64,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Penalty {
    lambda: f64,
    eps0: f64,
}

/// Reusable buffers for one encoding thread.
#[derive(Default)]
struct Beam {
    prefixes: Vec<u32>,
    sum_xc: Vec<f64>,
    sum_norm: Vec<f64>,
    sum_cross: Vec<f64>,
    next_prefixes: Vec<u32>,
    next_xc: Vec<f64>,
    next_norm: Vec<f64>,
    next_cross: Vec<f64>,
    xc: Vec<f64>,
    cross_acc: Vec<f64>,
    pool: Vec<(f64, u32, u32)>,
    residual: Vec<f64>,
}

impl Beam {
    /// Beam search over stages `fixed.len()..M`, with the first stages pinned
    /// to `fixed`.
    fn search(
        &mut self,
        x: &[f64],
        model: &QuantModel,
        tables: &CrossDotTables,
        width: usize,
        fixed: &[u32],
        penalty: Option<Penalty>,
    ) -> Encoded {
        let m_total = model.stages();
        let k_total = model.codebook_size();
        let x_norm = squared_norm(x);

        // Seed the beam with the pinned prefix.
        self.prefixes.clear();
        self.prefixes.extend_from_slice(fixed);
        self.prefixes.resize(m_total, 0);
        let mut sum_xc = 0.0;
        let mut sum_norm = 0.0;
        let mut sum_cross = 0.0;
        for (a, &j) in fixed.iter().enumerate() {
            sum_xc += dot(x, model.codebook(a).codeword(j as usize));
            sum_norm += tables.norm(a, j as usize);
            for (b, &i) in fixed.iter().enumerate().skip(a + 1) {
                sum_cross += tables.cross(a, j as usize, b, i as usize);
            }
        }
        self.sum_xc.clear();
        self.sum_xc.push(sum_xc);
        self.sum_norm.clear();
        self.sum_norm.push(sum_norm);
        self.sum_cross.clear();
        self.sum_cross.push(sum_cross);

        let score = |xc: f64, norm: f64, cross: f64| {
            let dist = x_norm - 2.0 * xc + norm + 2.0 * cross;
            match penalty {
                Some(p) => {
                    let dev = 2.0 * cross - p.eps0;
                    dist + p.lambda * dev * dev
                }
                None => dist,
            }
        };

        for m in fixed.len()..m_total {
            let cb = model.codebook(m);
            self.xc.clear();
            self.xc.extend((0..k_total).map(|k| dot(x, cb.codeword(k))));

            let beam_len = self.sum_xc.len();
            self.pool.clear();
            self.cross_acc.resize(beam_len * k_total, 0.0);
            for c in 0..beam_len {
                let prefix = &self.prefixes[c * m_total..c * m_total + m];
                let acc = &mut self.cross_acc[c * k_total..(c + 1) * k_total];
                acc.iter_mut().for_each(|v| *v = 0.0);
                for (a, &j) in prefix.iter().enumerate() {
                    for (v, t) in acc.iter_mut().zip(tables.cross_row(a, j as usize, m)) {
                        *v += t;
                    }
                }
                for k in 0..k_total {
                    let s = score(
                        self.sum_xc[c] + self.xc[k],
                        self.sum_norm[c] + tables.norm(m, k),
                        self.sum_cross[c] + acc[k],
                    );
                    self.pool.push((s, c as u32, k as u32));
                }
            }

            let prefixes = &self.prefixes;
            let order = |a: &(f64, u32, u32), b: &(f64, u32, u32)| {
                a.0.total_cmp(&b.0)
                    .then_with(|| {
                        let pa = &prefixes[a.1 as usize * m_total..a.1 as usize * m_total + m];
                        let pb = &prefixes[b.1 as usize * m_total..b.1 as usize * m_total + m];
                        pa.cmp(pb)
                    })
                    .then(a.2.cmp(&b.2))
            };
            let keep = width.min(self.pool.len());
            if keep < self.pool.len() {
                self.pool.select_nth_unstable_by(keep - 1, order);
                self.pool.truncate(keep);
            }
            self.pool.sort_unstable_by(order);

            self.next_prefixes.clear();
            self.next_xc.clear();
            self.next_norm.clear();
            self.next_cross.clear();
            for &(_, c, k) in &self.pool {
                let (c, k) = (c as usize, k as usize);
                let start = self.next_prefixes.len();
                self.next_prefixes
                    .extend_from_slice(&self.prefixes[c * m_total..(c + 1) * m_total]);
                self.next_prefixes[start + m] = k as u32;
                self.next_xc.push(self.sum_xc[c] + self.xc[k]);
                self.next_norm.push(self.sum_norm[c] + tables.norm(m, k));
                self.next_cross
                    .push(self.sum_cross[c] + self.cross_acc[c * k_total + k]);
            }
            std::mem::swap(&mut self.prefixes, &mut self.next_prefixes);
            std::mem::swap(&mut self.sum_xc, &mut self.next_xc);
            std::mem::swap(&mut self.sum_norm, &mut self.next_norm);
            std::mem::swap(&mut self.sum_cross, &mut self.next_cross);
        }

        // The beam is sorted, so the first candidate is the best one.
        let code = self.prefixes[..m_total].to_vec();
        self.residual.resize(x.len(), 0.0);
        residual_into(model, x, &code, None, &mut self.residual);
        Encoded {
            distortion: squared_norm(&self.residual),
            eps: 2.0 * self.sum_cross[0],
            code,
        }
    }
}

fn check_vector(x: &[f64], model: &QuantModel, tables: &CrossDotTables, width: usize) -> Result<()> {
    if width == 0 {
        return Err(Error::Domain("beam width must be >= 1".into()));
    }
    if x.len() != model.dim() {
        return Err(Error::Shape(format!(
            "vector is {}-d, model is {}-d",
            x.len(),
            model.dim()
        )));
    }
    if tables.stages != model.stages() || tables.size != model.codebook_size() {
        return Err(Error::Shape("cross tables were built for a different model".into()));
    }
    Ok(())
}

/// Beam search of width `width` over the model's codebooks in order.
/// `width = 1` is greedy residual encoding.
pub fn multipath_encode(
    x: &[f64],
    model: &QuantModel,
    tables: &CrossDotTables,
    width: usize,
) -> Result<Encoded> {
    check_vector(x, model, tables, width)?;
    Ok(Beam::default().search(x, model, tables, width, &[], None))
}

/// Beam search minimizing `distortion + lambda (ε - eps0)^2`.
pub fn regularized_encode(
    x: &[f64],
    model: &QuantModel,
    tables: &CrossDotTables,
    width: usize,
    lambda: f64,
    eps0: f64,
) -> Result<Encoded> {
    check_vector(x, model, tables, width)?;
    if !(lambda >= 0.0) {
        return Err(Error::Domain("λ must be >= 0".into()));
    }
    let penalty = (lambda > 0.0).then_some(Penalty { lambda, eps0 });
    Ok(Beam::default().search(x, model, tables, width, &[], penalty))
}

/// Largest `K^M` the exhaustive encoder accepts.
pub const EXHAUSTIVE_LIMIT: usize = 1_000_000;

/// Global minimum-distortion code by enumeration. Ties go to the
/// lexicographically smallest code.
pub fn exhaustive_encode(x: &[f64], model: &QuantModel) -> Result<Encoded> {
    exhaustive_penalized(x, model, 0.0, 0.0)
}

/// Exhaustive minimizer of `distortion + lambda (ε - eps0)^2`.
pub fn exhaustive_penalized(x: &[f64], model: &QuantModel, lambda: f64, eps0: f64) -> Result<Encoded> {
    let (m, k) = (model.stages(), model.codebook_size());
    let total = (0..m).try_fold(1usize, |acc, _| acc.checked_mul(k).filter(|&t| t <= EXHAUSTIVE_LIMIT));
    let Some(total) = total else {
        return Err(Error::Domain(format!(
            "exhaustive encoding of K^M = {k}^{m} codes exceeds {EXHAUSTIVE_LIMIT}"
        )));
    };
    if x.len() != model.dim() {
        return Err(Error::Shape(format!(
            "vector is {}-d, model is {}-d",
            x.len(),
            model.dim()
        )));
    }

    let mut code = vec![0u32; m];
    let mut residual = vec![0.0; x.len()];
    let mut best: Option<(f64, Encoded)> = None;
    for _ in 0..total {
        residual_into(model, x, &code, None, &mut residual);
        let distortion = squared_norm(&residual);
        let eps = crate::model::epsilon_unchecked(model, &code);
        let cost = distortion + lambda * (eps - eps0) * (eps - eps0);
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((
                cost,
                Encoded {
                    code: code.clone(),
                    distortion,
                    eps,
                },
            ));
        }
        // Odometer increment, last stage fastest: lexicographic order.
        for slot in code.iter_mut().rev() {
            *slot += 1;
            if (*slot as usize) < k {
                break;
            }
            *slot = 0;
        }
    }
    Ok(best.expect("at least one code").1)
}

/// Scalar quantizer for ε values: 1-d Lloyd with `2^bits` levels started from
/// evenly spaced quantiles.
pub fn eps_quantizer_fit(values: &[f64], bits: u8) -> Result<EpsQuantizer> {
    if !(1..=16).contains(&bits) {
        return Err(Error::Domain(format!("ε quantizer bits must be in 1..=16, got {bits}")));
    }
    if values.is_empty() {
        return Err(Error::Empty("no ε values to fit".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let count = 1usize << bits;
    let mut levels: Vec<f64> = (0..count)
        .map(|i| sorted[(((2 * i + 1) * n) / (2 * count)).min(n - 1)])
        .collect();

    for _ in 0..100 {
        // Cells are contiguous runs of the sorted values between midpoints.
        let mut sums = vec![0.0; count];
        let mut counts = vec![0usize; count];
        let mut cell = 0;
        for &v in &sorted {
            while cell + 1 < count && v - levels[cell] > levels[cell + 1] - v {
                cell += 1;
            }
            sums[cell] += v;
            counts[cell] += 1;
        }
        let mut moved = false;
        for i in 0..count {
            if counts[i] > 0 {
                let mean = sums[i] / counts[i] as f64;
                moved |= mean != levels[i];
                levels[i] = mean;
            }
        }
        levels.sort_by(f64::total_cmp);
        if !moved {
            break;
        }
    }
    EpsQuantizer::new(bits, levels)
}

/// Encoding strategy used for a whole dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EncodeMethod {
    /// Beam search with the given width.
    Beam(usize),
    /// Enumerate all `K^M` codes. Only for tiny models.
    Exhaustive,
}

/// Encodes every row of `data`. Under [`EpsMode::Eliminated`] the beam search
/// carries the model's ε penalty. The `eps` column is filled according to the
/// model's mode: exact for Stored, dequantized for Quantized, absent otherwise.
pub fn encode_dataset(
    data: &VectorSet,
    model: &QuantModel,
    tables: &CrossDotTables,
    width: usize,
) -> Result<CodeMatrix> {
    if model.stages() > 1 && !model.variance_order {
        warn!("encoding with codebooks not sorted by variance; beam search quality may suffer");
    }
    let penalty = match model.eps_mode {
        EpsMode::Eliminated { eps0, lambda } if lambda > 0.0 => Some(Penalty { lambda, eps0 }),
        _ => None,
    };
    let encoded = encode_rows(data, model, tables, EncodeMethod::Beam(width), None, penalty)?;
    Ok(finish_codes(model, &encoded))
}

/// Turns raw per-row encodings into a code matrix with the ε column the
/// model's mode calls for.
pub(crate) fn finish_codes(model: &QuantModel, encoded: &[Encoded]) -> CodeMatrix {
    let stages = model.stages();
    let mut codes = Vec::with_capacity(encoded.len() * stages);
    let mut eps = Vec::with_capacity(encoded.len());
    for e in encoded {
        codes.extend_from_slice(&e.code);
        eps.push(e.eps);
    }
    let eps = match &model.eps_mode {
        // Stored ε is kept at on-disk precision so files and memory agree.
        EpsMode::Stored => Some(eps.iter().map(|&v| v as f32 as f64).collect()),
        EpsMode::Quantized(q) => Some(eps.iter().map(|&v| q.dequantize(q.quantize(v))).collect()),
        EpsMode::Eliminated { .. } | EpsMode::None => None,
    };
    CodeMatrix::new(stages, codes, eps).expect("encoder output is well formed")
}

/// Encodes rows in parallel. With `prefix = Some((codes, n))` the first `n`
/// stages of each row are pinned to the given codes.
pub(crate) fn encode_rows(
    data: &VectorSet,
    model: &QuantModel,
    tables: &CrossDotTables,
    method: EncodeMethod,
    prefix: Option<(&CodeMatrix, usize)>,
    penalty: Option<Penalty>,
) -> Result<Vec<Encoded>> {
    if data.dim() != model.dim() {
        return Err(Error::Shape(format!(
            "data is {}-d, model is {}-d",
            data.dim(),
            model.dim()
        )));
    }
    if let EncodeMethod::Beam(w) = method {
        if w == 0 {
            return Err(Error::Domain("beam width must be >= 1".into()));
        }
    }
    if tables.stages != model.stages() || tables.size != model.codebook_size() {
        return Err(Error::Shape("cross tables were built for a different model".into()));
    }
    let d = data.dim();
    let chunks: Vec<Result<Vec<Encoded>>> = data
        .as_slice()
        .par_chunks(CHUNK * d)
        .enumerate()
        .map_init(Beam::default, |beam, (chunk, rows)| {
            rows.chunks_exact(d)
                .enumerate()
                .map(|(j, x)| match method {
                    EncodeMethod::Beam(width) => {
                        let fixed = prefix.map_or(&[][..], |(codes, n)| &codes.code(chunk * CHUNK + j)[..n]);
                        Ok(beam.search(x, model, tables, width, fixed, penalty))
                    }
                    EncodeMethod::Exhaustive => match penalty {
                        Some(p) => exhaustive_penalized(x, model, p.lambda, p.eps0),
                        None => exhaustive_encode(x, model),
                    },
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(data.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

pub(crate) fn penalty(lambda: f64, eps0: f64) -> Option<Penalty> {
    (lambda > 0.0).then_some(Penalty { lambda, eps0 })
}
