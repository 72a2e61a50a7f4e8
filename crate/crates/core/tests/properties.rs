use grvq::analysis::mutual_info_matrix;
use grvq::encoder::{build_cross_tables, exhaustive_encode, multipath_encode, regularized_encode};
use grvq::io::{read_codes, read_model, read_vecs, write_codes, write_model, write_vecs, VecFileKind};
use grvq::model::{epsilon_of, quantization_error, reconstruct, reorder_by_variance};
use grvq::search::{adc_distance, build_query_table};
use grvq::{CodeMatrix, Codebook, EpsMode, EpsQuantizer, QuantModel, VectorSet};
use proptest::prelude::*;

const MAX_M: usize = 4;
const MAX_K: usize = 5;
const MAX_D: usize = 4;

#[derive(Debug, Clone)]
struct Instance {
    model: QuantModel,
    codes: Vec<Vec<u32>>,
    points: Vec<Vec<f64>>,
}

fn instance() -> impl Strategy<Value = Instance> {
    (1..=MAX_M, 1..=MAX_K, 1..=MAX_D).prop_flat_map(|(m, k, d)| {
        let books = prop::collection::vec(prop::collection::vec(-4.0f32..4.0, k * d), m);
        let codes = prop::collection::vec(prop::collection::vec(0..k as u32, m), 1..12);
        let points = prop::collection::vec(prop::collection::vec(-6.0f64..6.0, d), 1..12);
        (books, codes, points).prop_map(move |(books, codes, points)| {
            let books = books
                .into_iter()
                .map(|w| Codebook::new(d, w.into_iter().map(f64::from).collect()).unwrap())
                .collect();
            Instance {
                model: QuantModel::new(books, EpsMode::Stored).unwrap(),
                codes,
                points,
            }
        })
    })
}

fn code_matrix(inst: &Instance) -> CodeMatrix {
    let m = inst.model.stages();
    CodeMatrix::new(m, inst.codes.concat(), None).unwrap()
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-9 * scale.max(1.0)
}

proptest! {
    #[test]
    fn epsilon_is_norm_of_sum_minus_sum_of_norms(inst in instance()) {
        for code in &inst.codes {
            let words: Vec<&[f64]> = code
                .iter()
                .enumerate()
                .map(|(m, &k)| inst.model.codebook(m).codeword(k as usize))
                .collect();
            let sum_of_norms: f64 = words.iter().map(|w| norm2(w)).sum();
            let total = norm2(&reconstruct(&inst.model, code).unwrap());
            let eps = epsilon_of(&inst.model, code).unwrap();
            prop_assert!(close(eps, total - sum_of_norms, total + sum_of_norms));
        }
    }

    #[test]
    fn adc_with_exact_eps_is_squared_distance(inst in instance()) {
        for q in &inst.points {
            let table = build_query_table(q, &inst.model).unwrap();
            for code in &inst.codes {
                let x = reconstruct(&inst.model, code).unwrap();
                let exact: f64 = q.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
                let adc = adc_distance(&table, code, epsilon_of(&inst.model, code).unwrap());
                prop_assert!(close(adc, exact, norm2(q) * inst.model.stages() as f64 + norm2(&x)));
            }
        }
    }

    #[test]
    fn reordering_changes_nothing_but_order(inst in instance()) {
        let codes = code_matrix(&inst);
        let (sorted, sorted_codes, perm) = reorder_by_variance(&inst.model, &codes).unwrap();
        prop_assert!(sorted.variance_order);
        let var: Vec<f64> = sorted.codebooks().iter().map(Codebook::variance).collect();
        prop_assert!(var.windows(2).all(|w| w[0] >= w[1]));
        let mut seen = perm.clone();
        seen.sort();
        prop_assert_eq!(seen, (0..inst.model.stages()).collect::<Vec<_>>());
        for (a, b) in codes.iter().zip(sorted_codes.iter()) {
            let x = reconstruct(&inst.model, a).unwrap();
            let y = reconstruct(&sorted, b).unwrap();
            for (u, v) in x.iter().zip(&y) {
                prop_assert!(close(*u, *v, u.abs()));
            }
        }
    }

    #[test]
    fn full_width_beam_is_exhaustive(inst in instance()) {
        let m = inst.model.stages();
        let k = inst.model.codebook_size();
        let width = k.pow(m.saturating_sub(1) as u32);
        let tables = build_cross_tables(&inst.model);
        for x in &inst.points {
            let beam = multipath_encode(x, &inst.model, &tables, width).unwrap();
            let best = exhaustive_encode(x, &inst.model).unwrap();
            prop_assert!(beam.distortion <= best.distortion + 1e-9 * norm2(x).max(1.0));
        }
    }

    #[test]
    fn zero_lambda_regularized_is_plain_beam(inst in instance(), width in 1usize..6, eps0 in -5.0f64..5.0) {
        let tables = build_cross_tables(&inst.model);
        for x in &inst.points {
            let a = multipath_encode(x, &inst.model, &tables, width).unwrap();
            let b = regularized_encode(x, &inst.model, &tables, width, 0.0, eps0).unwrap();
            prop_assert_eq!(a.code, b.code);
        }
    }

    #[test]
    fn quantization_error_is_mean_residual_norm(inst in instance()) {
        let d = inst.model.dim();
        let n = inst.codes.len().min(inst.points.len());
        let data = VectorSet::from_rows(d, &inst.points[..n]).unwrap();
        let codes = CodeMatrix::new(inst.model.stages(), inst.codes[..n].concat(), None).unwrap();
        let mut total = 0.0;
        for (x, c) in inst.points[..n].iter().zip(&inst.codes) {
            let q = reconstruct(&inst.model, c).unwrap();
            total += x.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        let err = quantization_error(&data, &inst.model, &codes).unwrap();
        prop_assert!(err >= 0.0);
        prop_assert!(close(err, total / n as f64, total));
    }

    #[test]
    fn entropy_and_mutual_information_bounds(
        m in 1usize..5,
        k in 2u32..9,
        raw in prop::collection::vec(0u32..1000, 4..200),
    ) {
        let n = raw.len() / m;
        prop_assume!(n > 0);
        let codes = CodeMatrix::new(m, raw[..n * m].iter().map(|v| v % k).collect(), None).unwrap();
        let mi = mutual_info_matrix(&codes).unwrap();
        let h = mi.entropies();
        for i in 0..m {
            prop_assert!(h[i] >= 0.0 && h[i] <= (k as f64).log2() + 1e-12);
            prop_assert!(h[i] <= (n as f64).log2() + 1e-12);
            for j in 0..m {
                prop_assert_eq!(mi.get(i, j), mi.get(j, i));
                if i != j {
                    prop_assert!(mi.get(i, j) >= 0.0);
                    prop_assert!(mi.get(i, j) <= h[i].min(h[j]) + 1e-9);
                }
            }
        }
    }

    #[test]
    fn eps_quantizer_picks_nearest_level(
        mut levels in prop::collection::vec(-100.0f64..100.0, 4),
        values in prop::collection::vec(-150.0f64..150.0, 1..50),
    ) {
        levels.sort_by(f64::total_cmp);
        let q = EpsQuantizer::new(2, levels.clone()).unwrap();
        for v in values {
            let got = (q.dequantize(q.quantize(v)) - v).abs();
            let best = levels.iter().map(|l| (l - v).abs()).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(got, best);
        }
    }

    #[test]
    fn vector_files_round_trip(
        d in 1usize..6,
        raw in prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 0..60),
        bytes in prop::collection::vec(any::<u8>(), 0..60),
        ints in prop::collection::vec(any::<i32>(), 0..60),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            (raw.iter().map(|&v| v as f64).collect::<Vec<_>>(), VecFileKind::Fvecs),
            (bytes.iter().map(|&v| v as f64).collect(), VecFileKind::Bvecs),
            (ints.iter().map(|&v| v as f64).collect(), VecFileKind::Ivecs),
        ];
        for (values, kind) in cases {
            let n = values.len() / d;
            let set = VectorSet::new(d, values[..n * d].to_vec()).unwrap();
            let path = dir.path().join("v");
            write_vecs(&path, &set, kind).unwrap();
            let back = read_vecs(&path, kind, None).unwrap();
            prop_assert_eq!(back.len(), n);
            prop_assert!(back.as_slice().iter().zip(set.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn model_and_codes_round_trip(inst in instance(), eps0 in -10.0f64..10.0, lambda in 0.0f64..100.0) {
        let dir = tempfile::tempdir().unwrap();
        let codes = code_matrix(&inst);
        let eps: Vec<f64> = codes.iter().map(|c| epsilon_of(&inst.model, c).unwrap() as f32 as f64).collect();
        let stored = CodeMatrix::new(codes.stages(), codes.as_slice().to_vec(), Some(eps)).unwrap();
        let mut elim = inst.model.clone();
        elim.eps_mode = EpsMode::Eliminated { eps0, lambda };
        for (model, codes) in [(&inst.model, &stored), (&elim, &codes)] {
            write_model(dir.path().join("m"), model).unwrap();
            write_codes(dir.path().join("c"), codes, model).unwrap();
            let back = read_model(dir.path().join("m")).unwrap();
            prop_assert_eq!(&back, model);
            prop_assert_eq!(&read_codes(dir.path().join("c"), &back).unwrap(), codes);
        }
    }
}
