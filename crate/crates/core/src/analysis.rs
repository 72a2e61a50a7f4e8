//! Diagnostics over encodings: per-codebook entropy, pairwise mutual
//! information and error as a function of the number of codebooks used.
//!
//! All estimators are plug-in (maximum likelihood) with no bias correction.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{squared_norm, CodeMatrix, QuantModel, VectorSet};

fn check_column(codes: &CodeMatrix, m: usize) -> Result<()> {
    if codes.is_empty() {
        return Err(Error::Empty("no codes to analyze".into()));
    }
    if m >= codes.stages() {
        return Err(Error::Shape(format!(
            "codebook {m} out of range for {} stages",
            codes.stages()
        )));
    }
    Ok(())
}

fn entropy_of_counts(counts: impl Iterator<Item = usize>, n: usize) -> f64 {
    let n = n as f64;
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0)
}

fn histogram(codes: &CodeMatrix, m: usize) -> Vec<usize> {
    let size = codes.iter().map(|c| c[m] as usize + 1).max().unwrap_or(0);
    let mut counts = vec![0; size];
    for c in codes.iter() {
        counts[c[m] as usize] += 1;
    }
    counts
}

/// Entropy in bits of the empirical distribution of code column `m`.
pub fn encoding_entropy(codes: &CodeMatrix, m: usize) -> Result<f64> {
    check_column(codes, m)?;
    Ok(entropy_of_counts(histogram(codes, m).into_iter(), codes.len()))
}

/// Mutual information in bits between code columns `i` and `j`, clamped at 0.
pub fn mutual_information(codes: &CodeMatrix, i: usize, j: usize) -> Result<f64> {
    check_column(codes, i)?;
    check_column(codes, j)?;
    if i == j {
        return Err(Error::Domain(format!(
            "mutual information of column {i} with itself; use encoding_entropy"
        )));
    }
    Ok(mi_unchecked(codes, i, j))
}

fn mi_unchecked(codes: &CodeMatrix, i: usize, j: usize) -> f64 {
    let (hi, hj) = (histogram(codes, i), histogram(codes, j));
    let width = hj.len();
    let mut joint = vec![0usize; hi.len() * width];
    for c in codes.iter() {
        joint[c[i] as usize * width + c[j] as usize] += 1;
    }
    let n = codes.len();
    let h_i = entropy_of_counts(hi.into_iter(), n);
    let h_j = entropy_of_counts(hj.into_iter(), n);
    let h_ij = entropy_of_counts(joint.into_iter(), n);
    (h_i + h_j - h_ij).max(0.0)
}

/// Symmetric `M x M` matrix with entropies on the diagonal and pairwise
/// mutual information elsewhere, all in bits.
#[derive(Clone, Debug, PartialEq)]
pub struct MutualInfoMatrix {
    stages: usize,
    bits: Vec<f64>,
}

impl MutualInfoMatrix {
    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.bits[i * self.stages + j]
    }

    pub fn entropies(&self) -> Vec<f64> {
        (0..self.stages).map(|m| self.get(m, m)).collect()
    }

    pub fn mean_entropy(&self) -> f64 {
        self.entropies().iter().sum::<f64>() / self.stages as f64
    }

    /// CSV with header `i,j,bits`, one row per entry in row-major order.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "i,j,bits")?;
        for i in 0..self.stages {
            for j in 0..self.stages {
                writeln!(out, "{i},{j},{}", self.get(i, j))?;
            }
        }
        Ok(())
    }
}

pub fn mutual_info_matrix(codes: &CodeMatrix) -> Result<MutualInfoMatrix> {
    check_column(codes, 0)?;
    let m = codes.stages();
    let mut bits = vec![0.0; m * m];
    for i in 0..m {
        bits[i * m + i] = encoding_entropy(codes, i)?;
        for j in i + 1..m {
            let v = mi_unchecked(codes, i, j);
            bits[i * m + j] = v;
            bits[j * m + i] = v;
        }
    }
    Ok(MutualInfoMatrix { stages: m, bits })
}

/// Mean squared error when each vector is reconstructed from only the first
/// `m` codebooks of its code, for `m = 1..=M`.
pub fn error_vs_stages(data: &VectorSet, model: &QuantModel, codes: &CodeMatrix) -> Result<Vec<(usize, f64)>> {
    if data.dim() != model.dim() || codes.len() != data.len() || codes.stages() != model.stages() {
        return Err(Error::Shape(format!(
            "data {}x{}, codes {}x{}, model M={} d={}",
            data.len(),
            data.dim(),
            codes.len(),
            codes.stages(),
            model.stages(),
            model.dim()
        )));
    }
    if data.is_empty() {
        return Err(Error::Empty("no vectors".into()));
    }
    if let Some(&k) = codes.as_slice().iter().find(|&&k| k as usize >= model.codebook_size()) {
        return Err(Error::Shape(format!(
            "code index {k} out of range for K={}",
            model.codebook_size()
        )));
    }
    let mut sums = vec![0.0; model.stages()];
    let mut residual = vec![0.0; data.dim()];
    for (x, code) in data.rows().zip(codes.iter()) {
        residual.copy_from_slice(x);
        for (m, &k) in code.iter().enumerate() {
            for (r, c) in residual.iter_mut().zip(model.codebook(m).codeword(k as usize)) {
                *r -= c;
            }
            sums[m] += squared_norm(&residual);
        }
    }
    let n = data.len() as f64;
    Ok(sums.into_iter().enumerate().map(|(m, s)| (m + 1, s / n)).collect())
}

/// CSV with header `stages,error`.
pub fn write_error_csv(rows: &[(usize, f64)], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "stages,error")?;
    for (m, e) in rows {
        writeln!(out, "{m},{e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{quantization_error, Codebook, EpsMode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn column_codes(cols: &[Vec<u32>]) -> CodeMatrix {
        let n = cols[0].len();
        let codes = (0..n).flat_map(|i| cols.iter().map(move |c| c[i])).collect();
        CodeMatrix::new(cols.len(), codes, None).unwrap()
    }

    #[test]
    fn entropy_cases() {
        let same = column_codes(&[vec![3; 10]]);
        assert_eq!(encoding_entropy(&same, 0).unwrap(), 0.0);
        let uniform = column_codes(&[(0..256 * 4).map(|i| i % 256).collect()]);
        assert!((encoding_entropy(&uniform, 0).unwrap() - 8.0).abs() < 1e-12);
        let skewed = column_codes(&[vec![0, 0, 1, 2]]);
        assert!((encoding_entropy(&skewed, 0).unwrap() - 1.5).abs() < 1e-12);
        assert!(encoding_entropy(&CodeMatrix::zeros(0, 1), 0).is_err());
    }

    #[test]
    fn mutual_information_cases() {
        let col: Vec<u32> = vec![0, 1, 2, 3, 0, 1, 2, 3];
        let copy = column_codes(&[col.clone(), col]);
        assert!((mutual_information(&copy, 0, 1).unwrap() - 2.0).abs() < 1e-12);
        assert!(mutual_information(&copy, 1, 1).is_err());

        // Joint counts [[3, 1], [1, 3]] over 8 samples:
        // MI = 1 - H(1/4) = 1 - 0.811278...
        let a = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let b = vec![0, 0, 0, 1, 0, 1, 1, 1];
        let hb = -(0.25f64 * 0.25f64.log2() + 0.75 * 0.75f64.log2());
        let mi = mutual_information(&column_codes(&[a, b]), 0, 1).unwrap();
        assert!((mi - (1.0 - hb)).abs() < 1e-12);
    }

    #[test]
    fn independent_columns_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let k = 8u32;
        let a: Vec<u32> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let b: Vec<u32> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let mi = mutual_information(&column_codes(&[a, b]), 0, 1).unwrap();
        let bound = (k * k) as f64 / (2.0 * n as f64 * std::f64::consts::LN_2);
        assert!(mi <= bound, "{mi} > {bound}");
    }

    #[test]
    fn matrix_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 500;
        let a: Vec<u32> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let b: Vec<u32> = a.iter().map(|&v| (v + rng.random_range(0..2)) % 4).collect();
        let c: Vec<u32> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let mat = mutual_info_matrix(&column_codes(&[a, b, c])).unwrap();
        for i in 0..3 {
            assert!(mat.get(i, i) <= 2.0 + 1e-12);
            for j in 0..3 {
                assert_eq!(mat.get(i, j), mat.get(j, i));
                if i != j {
                    assert!(mat.get(i, j) >= 0.0);
                    assert!(mat.get(i, j) <= mat.get(i, i).min(mat.get(j, j)) + 1e-9);
                }
            }
        }
        let one = mutual_info_matrix(&column_codes(&[vec![0, 1, 1, 0]])).unwrap();
        assert_eq!(one.stages(), 1);
        assert!((one.get(0, 0) - 1.0).abs() < 1e-12);

        let mut buf = Vec::new();
        mat.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert!(text.starts_with("i,j,bits\n0,0,"));
    }

    #[test]
    fn error_by_stage() {
        let data = VectorSet::from_rows(2, &[vec![3.0, 4.0], vec![1.0, 1.0]]).unwrap();
        let zero = QuantModel::zeros(3, 2, 2);
        let codes = CodeMatrix::zeros(2, 3);
        let rows = error_vs_stages(&data, &zero, &codes).unwrap();
        assert_eq!(rows, vec![(1, 13.5), (2, 13.5), (3, 13.5)]);

        let model = QuantModel::new(
            vec![
                Codebook::new(2, vec![3.0, 4.0, 1.0, 0.0]).unwrap(),
                Codebook::new(2, vec![0.0, 0.0, 0.0, 1.0]).unwrap(),
            ],
            EpsMode::Stored,
        )
        .unwrap();
        let codes = CodeMatrix::new(2, vec![0, 0, 1, 1], None).unwrap();
        let rows = error_vs_stages(&data, &model, &codes).unwrap();
        assert_eq!(rows, vec![(1, 0.5), (2, 0.0)]);
        assert_eq!(rows[1].1, quantization_error(&data, &model, &codes).unwrap());
    }
}
