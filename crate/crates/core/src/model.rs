//! Shared domain types and the algebra of the additive quantization model.
//!
//! A [`QuantModel`] holds `M` codebooks of `K` codewords each. A vector `x` is
//! encoded as one index per codebook and reconstructed as the sum of the
//! selected codewords. All arithmetic runs in `f64`; codewords produced by
//! training are rounded to `f32` precision so that model files (which store
//! `f32`) round-trip bit-exactly.

use crate::error::{Error, Result};

/// A dense, row-major collection of `len()` vectors of dimension `dim()`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorSet {
    dim: usize,
    data: Vec<f64>,
}

impl VectorSet {
    /// Wraps a flat row-major buffer. Every component must be finite.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("vector dimension must be >= 1".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::Shape(format!(
                "buffer of {} values is not a whole number of {dim}-d rows",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite component in row {}",
                pos / dim
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Shape(format!(
                    "row {i} has {} components, expected {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    pub fn zeros(len: usize, dim: usize) -> Self {
        assert!(dim >= 1, "vector dimension must be >= 1");
        Self {
            dim,
            data: vec![0.0; len * dim],
        }
    }

    pub(crate) fn from_raw(dim: usize, data: Vec<f64>) -> Self {
        debug_assert!(dim >= 1 && data.len() % dim == 0);
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.data
    }

    /// Copies the rows at `ids` (in the given order) into a new set.
    pub fn select(&self, ids: &[usize]) -> Self {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for &i in ids {
            data.extend_from_slice(self.row(i));
        }
        Self::from_raw(self.dim, data)
    }

    /// Rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self::from_raw(self.dim, self.data[start * self.dim..end * self.dim].to_vec())
    }

    /// Rounds every component to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
    }
}

/// `K` codewords of dimension `d` for one quantization stage.
///
/// An all-zero codebook is legal and is how training from scratch starts.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    words: VectorSet,
}

impl Codebook {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        let words = VectorSet::new(dim, data)?;
        if words.is_empty() {
            return Err(Error::Domain("a codebook needs at least one codeword".into()));
        }
        Ok(Self { words })
    }

    pub fn from_vectors(words: VectorSet) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::Domain("a codebook needs at least one codeword".into()));
        }
        Ok(Self { words })
    }

    pub fn zeros(size: usize, dim: usize) -> Self {
        assert!(size >= 1, "a codebook needs at least one codeword");
        Self {
            words: VectorSet::zeros(size, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.words.dim()
    }

    pub fn size(&self) -> usize {
        self.words.len()
    }

    pub fn codeword(&self, k: usize) -> &[f64] {
        self.words.row(k)
    }

    pub fn codeword_mut(&mut self, k: usize) -> &mut [f64] {
        let d = self.words.dim;
        &mut self.words.data[k * d..(k + 1) * d]
    }

    pub fn as_vectors(&self) -> &VectorSet {
        &self.words
    }

    pub fn as_slice(&self) -> &[f64] {
        self.words.as_slice()
    }

    /// True when every codeword is the same point (e.g. the all-zero start).
    pub fn is_degenerate(&self) -> bool {
        let first = self.codeword(0);
        self.words.rows().all(|w| w == first)
    }

    /// Scatter trace: mean squared distance of the codewords from their mean.
    pub fn variance(&self) -> f64 {
        let d = self.dim();
        let k = self.size() as f64;
        let mut mean = vec![0.0; d];
        for w in self.words.rows() {
            for (m, v) in mean.iter_mut().zip(w) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= k);
        self.words
            .rows()
            .map(|w| squared_distance(w, &mean))
            .sum::<f64>()
            / k
    }

    pub fn round_to_f32(&mut self) {
        self.words.round_to_f32();
    }
}

/// Scalar quantizer for the per-vector ε term: `2^bits` sorted reconstruction
/// levels with nearest-level assignment. Fitting lives in
/// [`crate::encoder::eps_quantizer_fit`].
#[derive(Clone, Debug, PartialEq)]
pub struct EpsQuantizer {
    bits: u8,
    levels: Vec<f64>,
}

impl EpsQuantizer {
    pub fn new(bits: u8, mut levels: Vec<f64>) -> Result<Self> {
        if !(1..=16).contains(&bits) {
            return Err(Error::Domain(format!("ε quantizer bits must be in 1..=16, got {bits}")));
        }
        if levels.len() != 1usize << bits {
            return Err(Error::Shape(format!(
                "{} levels supplied for a {bits}-bit quantizer",
                levels.len()
            )));
        }
        if levels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite ε level".into()));
        }
        levels.sort_by(f64::total_cmp);
        Ok(Self { bits, levels })
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Index of the nearest level; ties go to the lower level.
    pub fn quantize(&self, value: f64) -> u16 {
        let idx = self.levels.partition_point(|&l| l < value);
        let best = if idx == 0 {
            0
        } else if idx == self.levels.len() {
            idx - 1
        } else if value - self.levels[idx - 1] <= self.levels[idx] - value {
            idx - 1
        } else {
            idx
        };
        best as u16
    }

    pub fn dequantize(&self, index: u16) -> f64 {
        self.levels[index as usize]
    }

    /// Largest gap between adjacent levels.
    pub fn max_gap(&self) -> f64 {
        self.levels
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// How the ε cross term is handled at search time.
#[derive(Clone, Debug, PartialEq)]
pub enum EpsMode {
    /// ε is identically zero (single codebook, or disjoint codebook supports).
    None,
    /// Exact ε is kept per vector.
    Stored,
    /// ε is scalar-quantized per vector.
    Quantized(EpsQuantizer),
    /// Training pushed ε toward the constant `eps0`; nothing is stored per vector.
    Eliminated { eps0: f64, lambda: f64 },
}

impl EpsMode {
    /// Whether codes under this mode carry a per-vector ε value.
    pub fn has_payload(&self) -> bool {
        matches!(self, EpsMode::Stored | EpsMode::Quantized(_))
    }
}

/// An ordered list of codebooks sharing dimension and size, plus ε handling.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantModel {
    codebooks: Vec<Codebook>,
    pub eps_mode: EpsMode,
    /// Set when codebooks are known to be in descending variance order.
    pub variance_order: bool,
    /// Seed the model was trained with.
    pub seed: u64,
}

impl QuantModel {
    pub fn new(codebooks: Vec<Codebook>, eps_mode: EpsMode) -> Result<Self> {
        let first = codebooks
            .first()
            .ok_or_else(|| Error::Domain("a model needs at least one codebook".into()))?;
        let (d, k) = (first.dim(), first.size());
        for (m, cb) in codebooks.iter().enumerate() {
            if cb.dim() != d || cb.size() != k {
                return Err(Error::Shape(format!(
                    "codebook {m} is {}x{}, expected {k}x{d}",
                    cb.size(),
                    cb.dim()
                )));
            }
        }
        Ok(Self {
            codebooks,
            eps_mode,
            variance_order: false,
            seed: 0,
        })
    }

    /// `M` all-zero codebooks: the learn-from-scratch starting point.
    pub fn zeros(stages: usize, size: usize, dim: usize) -> Self {
        assert!(stages >= 1);
        Self {
            codebooks: (0..stages).map(|_| Codebook::zeros(size, dim)).collect(),
            eps_mode: EpsMode::Stored,
            variance_order: false,
            seed: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.codebooks[0].dim()
    }

    /// Number of codebooks `M`.
    pub fn stages(&self) -> usize {
        self.codebooks.len()
    }

    /// Codewords per codebook `K`.
    pub fn codebook_size(&self) -> usize {
        self.codebooks[0].size()
    }

    pub fn codebook(&self, m: usize) -> &Codebook {
        &self.codebooks[m]
    }

    pub fn codebooks(&self) -> &[Codebook] {
        &self.codebooks
    }

    /// Replaces codebook `m`; the replacement must keep the model's shape.
    pub fn set_codebook(&mut self, m: usize, codebook: Codebook) -> Result<()> {
        if codebook.dim() != self.dim() || codebook.size() != self.codebook_size() {
            return Err(Error::Shape(format!(
                "replacement codebook is {}x{}, model is {}x{}",
                codebook.size(),
                codebook.dim(),
                self.codebook_size(),
                self.dim()
            )));
        }
        self.codebooks[m] = codebook;
        self.variance_order = false;
        Ok(())
    }

    /// The model restricted to its first `stages` codebooks.
    pub fn prefix(&self, stages: usize) -> QuantModel {
        QuantModel {
            codebooks: self.codebooks[..stages].to_vec(),
            eps_mode: self.eps_mode.clone(),
            variance_order: self.variance_order,
            seed: self.seed,
        }
    }

    fn check_code(&self, code: &[u32]) -> Result<()> {
        if code.len() != self.stages() {
            return Err(Error::Shape(format!(
                "code has {} entries, model has {} codebooks",
                code.len(),
                self.stages()
            )));
        }
        let k = self.codebook_size();
        if let Some(bad) = code.iter().find(|&&i| i as usize >= k) {
            return Err(Error::Domain(format!("code index {bad} out of range for K={k}")));
        }
        Ok(())
    }
}

/// `N x M` codeword indices (0-based) plus an optional per-vector ε.
#[derive(Clone, Debug, PartialEq)]
pub struct CodeMatrix {
    stages: usize,
    codes: Vec<u32>,
    /// Exact or dequantized ε per vector, present for Stored / Quantized modes.
    pub eps: Option<Vec<f64>>,
}

impl CodeMatrix {
    pub fn new(stages: usize, codes: Vec<u32>, eps: Option<Vec<f64>>) -> Result<Self> {
        if stages == 0 {
            return Err(Error::Domain("codes need at least one stage".into()));
        }
        if codes.len() % stages != 0 {
            return Err(Error::Shape(format!(
                "{} indices is not a whole number of {stages}-stage codes",
                codes.len()
            )));
        }
        if let Some(e) = &eps {
            if e.len() != codes.len() / stages {
                return Err(Error::Shape(format!(
                    "{} ε values for {} codes",
                    e.len(),
                    codes.len() / stages
                )));
            }
        }
        Ok(Self { stages, codes, eps })
    }

    pub fn zeros(len: usize, stages: usize) -> Self {
        Self {
            stages,
            codes: vec![0; len * stages],
            eps: None,
        }
    }

    pub fn len(&self) -> usize {
        self.codes.len() / self.stages
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn code(&self, i: usize) -> &[u32] {
        &self.codes[i * self.stages..(i + 1) * self.stages]
    }

    pub fn code_mut(&mut self, i: usize) -> &mut [u32] {
        &mut self.codes[i * self.stages..(i + 1) * self.stages]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, u32> {
        self.codes.chunks_exact(self.stages)
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.codes
    }

    /// Column `m` as a vector of indices.
    pub fn column(&self, m: usize) -> Vec<u32> {
        self.iter().map(|c| c[m]).collect()
    }
}

pub(crate) fn squared_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let t = x - y;
            t * t
        })
        .sum()
}

/// Writes `x - sum_{m != skip} c_m(code[m])` into `out`, subtracting stage by stage.
pub(crate) fn residual_into(
    model: &QuantModel,
    x: &[f64],
    code: &[u32],
    skip: Option<usize>,
    out: &mut [f64],
) {
    out.copy_from_slice(x);
    for (m, &i) in code.iter().enumerate() {
        if Some(m) == skip {
            continue;
        }
        for (o, c) in out.iter_mut().zip(model.codebooks[m].codeword(i as usize)) {
            *o -= c;
        }
    }
}

fn check_shapes(data: &VectorSet, model: &QuantModel, codes: &CodeMatrix) -> Result<()> {
    if data.dim() != model.dim() {
        return Err(Error::Shape(format!(
            "data is {}-d, model is {}-d",
            data.dim(),
            model.dim()
        )));
    }
    if data.len() != codes.len() || codes.stages() != model.stages() {
        return Err(Error::Shape(format!(
            "{} vectors with {} codes of {} stages for an M={} model",
            data.len(),
            codes.len(),
            codes.stages(),
            model.stages()
        )));
    }
    let k = model.codebook_size() as u32;
    if let Some(bad) = codes.as_slice().iter().find(|&&i| i >= k) {
        return Err(Error::Domain(format!("code index {bad} out of range for K={k}")));
    }
    Ok(())
}

/// Sum of the selected codewords.
pub fn reconstruct(model: &QuantModel, code: &[u32]) -> Result<Vec<f64>> {
    model.check_code(code)?;
    let mut out = vec![0.0; model.dim()];
    for (cb, &i) in model.codebooks.iter().zip(code) {
        for (o, c) in out.iter_mut().zip(cb.codeword(i as usize)) {
            *o += c;
        }
    }
    Ok(out)
}

/// Row `n` of the result is `x_n - reconstruct(code_n)`.
pub fn residuals(data: &VectorSet, model: &QuantModel, codes: &CodeMatrix) -> Result<VectorSet> {
    check_shapes(data, model, codes)?;
    Ok(residuals_unchecked(data, model, codes, None))
}

/// Residuals with codebook `skip` left out, i.e. `e_x + c_skip(i_skip(x))`.
pub(crate) fn residuals_unchecked(
    data: &VectorSet,
    model: &QuantModel,
    codes: &CodeMatrix,
    skip: Option<usize>,
) -> VectorSet {
    let d = data.dim();
    let mut out = vec![0.0; data.as_slice().len()];
    for ((x, code), o) in data.rows().zip(codes.iter()).zip(out.chunks_exact_mut(d)) {
        residual_into(model, x, code, skip, o);
    }
    VectorSet::from_raw(d, out)
}

/// Mean squared reconstruction error over the dataset.
pub fn quantization_error(data: &VectorSet, model: &QuantModel, codes: &CodeMatrix) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("quantization error of an empty dataset".into()));
    }
    check_shapes(data, model, codes)?;
    Ok(quantization_error_unchecked(data, model, codes))
}

pub(crate) fn quantization_error_unchecked(
    data: &VectorSet,
    model: &QuantModel,
    codes: &CodeMatrix,
) -> f64 {
    let mut buf = vec![0.0; data.dim()];
    let mut total = 0.0;
    for (x, code) in data.rows().zip(codes.iter()) {
        residual_into(model, x, code, None, &mut buf);
        total += squared_norm(&buf);
    }
    total / data.len() as f64
}

/// Sum of `c_a . c_b` over ordered pairs `a != b` of the selected codewords.
pub fn epsilon_of(model: &QuantModel, code: &[u32]) -> Result<f64> {
    model.check_code(code)?;
    Ok(epsilon_unchecked(model, code))
}

/// Exact ε of every code in `codes`.
pub fn epsilon_of_codes(model: &QuantModel, codes: &CodeMatrix) -> Result<Vec<f64>> {
    codes.iter().map(|c| epsilon_of(model, c)).collect()
}

pub(crate) fn epsilon_unchecked(model: &QuantModel, code: &[u32]) -> f64 {
    let mut eps = 0.0;
    for a in 0..code.len() {
        let ca = model.codebooks[a].codeword(code[a] as usize);
        for b in a + 1..code.len() {
            eps += dot(ca, model.codebooks[b].codeword(code[b] as usize));
        }
    }
    2.0 * eps
}

/// Stable-sorts codebooks by descending [`Codebook::variance`] and permutes the
/// code columns to match. Returns the permutation as `new position -> old index`.
pub fn reorder_by_variance(
    model: &QuantModel,
    codes: &CodeMatrix,
) -> Result<(QuantModel, CodeMatrix, Vec<usize>)> {
    if codes.stages() != model.stages() {
        return Err(Error::Shape(format!(
            "codes have {} stages, model has {}",
            codes.stages(),
            model.stages()
        )));
    }
    let variances: Vec<f64> = model.codebooks.iter().map(Codebook::variance).collect();
    let mut perm: Vec<usize> = (0..model.stages()).collect();
    perm.sort_by(|&a, &b| variances[b].total_cmp(&variances[a]));

    let mut reordered = model.clone();
    reordered.codebooks = perm.iter().map(|&m| model.codebooks[m].clone()).collect();
    reordered.variance_order = true;

    let mut out = codes.clone();
    for (src, dst) in codes.iter().zip(out.codes.chunks_exact_mut(codes.stages())) {
        for (slot, &old) in dst.iter_mut().zip(&perm) {
            *slot = src[old];
        }
    }
    Ok((reordered, out, perm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(rng: &mut ChaCha8Rng, m: usize, k: usize, d: usize) -> QuantModel {
        let books = (0..m)
            .map(|_| Codebook::new(d, (0..k * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
            .collect();
        QuantModel::new(books, EpsMode::Stored).unwrap()
    }

    fn hand_model() -> QuantModel {
        let c1 = Codebook::new(2, vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        let c2 = Codebook::new(2, vec![0.5, 0.5, -1.0, 3.0]).unwrap();
        QuantModel::new(vec![c1, c2], EpsMode::Stored).unwrap()
    }

    #[test]
    fn reconstruct_single_stage_is_codeword() {
        let model = hand_model().prefix(1);
        assert_eq!(reconstruct(&model, &[1]).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn reconstruct_zero_model() {
        let model = QuantModel::zeros(3, 4, 5);
        assert_eq!(reconstruct(&model, &[3, 0, 2]).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn reconstruct_hand_sum() {
        // code (1,2) in 1-based terms: c_1(1) + c_2(2) = (1,0) + (-1,3)
        assert_eq!(reconstruct(&hand_model(), &[0, 1]).unwrap(), vec![0.0, 3.0]);
    }

    #[test]
    fn reconstruct_rejects_bad_index() {
        assert!(matches!(reconstruct(&hand_model(), &[0, 2]), Err(Error::Domain(_))));
        assert!(matches!(reconstruct(&hand_model(), &[0]), Err(Error::Shape(_))));
    }

    #[test]
    fn residuals_cases() {
        let model = hand_model();
        let data = VectorSet::from_rows(2, &[vec![0.0, 3.0], vec![5.0, -1.0]]).unwrap();
        let codes = CodeMatrix::new(2, vec![0, 1, 1, 0], None).unwrap();
        let r = residuals(&data, &model, &codes).unwrap();
        assert_eq!(r.row(0), &[0.0, 0.0]);
        // (5,-1) - (0,2) - (0.5,0.5)
        assert_eq!(r.row(1), &[4.5, -3.5]);

        let zero = QuantModel::zeros(2, 2, 2);
        assert_eq!(residuals(&data, &zero, &codes).unwrap(), data);

        let bad = CodeMatrix::new(2, vec![0, 1], None).unwrap();
        assert!(matches!(residuals(&data, &model, &bad), Err(Error::Shape(_))));
    }

    #[test]
    fn quantization_error_pythagorean() {
        let model = QuantModel::zeros(1, 1, 2);
        let data = VectorSet::from_rows(2, &[vec![3.0, 4.0]]).unwrap();
        let codes = CodeMatrix::zeros(1, 1);
        assert_eq!(quantization_error(&data, &model, &codes).unwrap(), 25.0);
        let empty = VectorSet::zeros(0, 2);
        assert!(matches!(
            quantization_error(&empty, &model, &CodeMatrix::zeros(0, 1)),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn quantization_error_matches_residual_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = random_model(&mut rng, 3, 5, 4);
        let n = 17;
        let data = VectorSet::new(4, (0..n * 4).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let codes = CodeMatrix::new(3, (0..n * 3).map(|_| rng.random_range(0..5)).collect(), None).unwrap();
        let r = residuals(&data, &model, &codes).unwrap();
        let mut total = 0.0;
        for row in r.rows() {
            total += squared_norm(row);
        }
        assert_eq!(quantization_error(&data, &model, &codes).unwrap(), total / n as f64);
    }

    #[test]
    fn epsilon_cases() {
        let model = hand_model();
        assert_eq!(epsilon_of(&model.prefix(1), &[1]).unwrap(), 0.0);
        // (1,0) . (0.5,0.5) counted twice
        assert_eq!(epsilon_of(&model, &[0, 0]).unwrap(), 1.0);

        let c1 = Codebook::new(2, vec![1.0, 0.0]).unwrap();
        let c2 = Codebook::new(2, vec![0.0, 7.0]).unwrap();
        let orth = QuantModel::new(vec![c1, c2], EpsMode::Stored).unwrap();
        assert_eq!(epsilon_of(&orth, &[0, 0]).unwrap(), 0.0);
    }

    #[test]
    fn epsilon_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let model = random_model(&mut rng, 3, 6, 5);
            let code: Vec<u32> = (0..3).map(|_| rng.random_range(0..6)).collect();
            let recon = reconstruct(&model, &code).unwrap();
            let norms: f64 = (0..3)
                .map(|m| squared_norm(model.codebook(m).codeword(code[m] as usize)))
                .sum();
            let expected = squared_norm(&recon) - norms;
            let eps = epsilon_of(&model, &code).unwrap();
            assert!((eps - expected).abs() <= 1e-6 * squared_norm(&recon).max(1.0));
        }
    }

    #[test]
    fn reorder_sorted_is_identity() {
        let big = Codebook::new(1, vec![-2.0, 2.0]).unwrap();
        let small = Codebook::new(1, vec![-0.5, 0.5]).unwrap();
        let model = QuantModel::new(vec![big.clone(), small.clone()], EpsMode::Stored).unwrap();
        let codes = CodeMatrix::new(2, vec![0, 1], None).unwrap();
        let (_, out, perm) = reorder_by_variance(&model, &codes).unwrap();
        assert_eq!(perm, vec![0, 1]);
        assert_eq!(out, codes);

        // variances 1.0 and 4.0 -> swap
        let v1 = Codebook::new(1, vec![-1.0, 1.0]).unwrap();
        let v4 = Codebook::new(1, vec![-2.0, 2.0]).unwrap();
        assert_eq!(v1.variance(), 1.0);
        assert_eq!(v4.variance(), 4.0);
        let model = QuantModel::new(vec![v1, v4], EpsMode::Stored).unwrap();
        let (re, out, perm) = reorder_by_variance(&model, &codes).unwrap();
        assert_eq!(perm, vec![1, 0]);
        assert_eq!(out.code(0), &[1, 0]);
        assert!(re.variance_order);
    }

    #[test]
    fn reorder_preserves_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = random_model(&mut rng, 5, 4, 3);
        let n = 50;
        let codes = CodeMatrix::new(5, (0..n * 5).map(|_| rng.random_range(0..4)).collect(), None).unwrap();
        let (re, recodes, _) = reorder_by_variance(&model, &codes).unwrap();
        for i in 0..n {
            let a = reconstruct(&model, codes.code(i)).unwrap();
            let b = reconstruct(&re, recodes.code(i)).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-7);
            }
        }
        for w in re.codebooks().windows(2) {
            assert!(w[0].variance() >= w[1].variance());
        }
        let data = VectorSet::new(3, (0..n * 3).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let e1 = quantization_error(&data, &model, &codes).unwrap();
        let e2 = quantization_error(&data, &re, &recodes).unwrap();
        assert!((e1 - e2).abs() <= 1e-9 * e1);
    }

    #[test]
    fn eps_quantizer_nearest_level() {
        let q = EpsQuantizer::new(2, vec![3.0, -1.0, 0.0, 1.0]).unwrap();
        assert_eq!(q.levels(), &[-1.0, 0.0, 1.0, 3.0]);
        assert_eq!(q.quantize(-5.0), 0);
        assert_eq!(q.quantize(0.5), 1);
        assert_eq!(q.quantize(0.51), 2);
        assert_eq!(q.quantize(2.5), 3);
        assert_eq!(q.quantize(9.0), 3);
        assert_eq!(q.max_gap(), 2.0);
        assert!(EpsQuantizer::new(0, vec![0.0]).is_err());
        assert!(EpsQuantizer::new(2, vec![0.0]).is_err());
    }
}
