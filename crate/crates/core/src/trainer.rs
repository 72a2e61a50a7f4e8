//! Codebook training.
//!
//! [`grvq_train`] is the general loop: encode the data, pick one codebook,
//! rebuild it by transition clustering on the vectors' residuals with that
//! codebook's contribution added back, re-encode, repeat. The classical
//! methods are special cases and have their own direct implementations here
//! ([`rvq_train`], [`pq_train`], [`kmeans_train`]) which the tests compare
//! against the general loop.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clustering::{
    kmeans, nearest_objective, regularized_transition_cluster, sample_init, transition_cluster, EpsPenalty,
    KMeansConfig, TransitionSchedule,
};
use crate::encoder::{build_cross_tables, encode_rows, finish_codes, penalty, CrossDotTables, EncodeMethod, Encoded};
use crate::error::{Error, Result};
use crate::model::{
    quantization_error_unchecked, reorder_by_variance, residuals_unchecked, squared_distance, squared_norm,
    CodeMatrix, Codebook, EpsMode, QuantModel, VectorSet,
};

/// Order in which one sweep visits the codebooks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PickOrder {
    /// A fresh seeded permutation every sweep.
    RandomPerSweep,
    /// `0, 1, ..., M-1` every sweep. Lets re-encoding keep the code columns
    /// of codebooks before the one just optimized.
    Sequential,
}

/// λ schedule for ε elimination, in units of `mean |x|^2 / var(ε)` measured
/// on the first codes with non-zero ε spread.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsRegularization {
    pub lambda_step: f64,
    pub lambda_max: f64,
}

impl Default for EpsRegularization {
    fn default() -> Self {
        Self {
            lambda_step: 0.01,
            lambda_max: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Number of codebooks `M`.
    pub stages: usize,
    /// Codewords per codebook `K`.
    pub size: usize,
    /// Full passes over the codebooks.
    pub sweeps: usize,
    pub pick_order: PickOrder,
    /// How vectors are encoded between codebook updates.
    pub encode: EncodeMethod,
    pub seed: u64,
    pub eps_regularization: Option<EpsRegularization>,
    /// Number of steps `I` of the transition-clustering schedule.
    pub schedule_steps: usize,
    pub kmeans: KMeansConfig,
    /// Stop early once a sweep improves the error by less than this fraction.
    pub sweep_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stages: 8,
            size: 256,
            sweeps: 8,
            pick_order: PickOrder::RandomPerSweep,
            encode: EncodeMethod::Beam(10),
            seed: 0,
            eps_regularization: None,
            schedule_steps: 10,
            kmeans: KMeansConfig::default(),
            sweep_tol: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn new(stages: usize, size: usize) -> Self {
        Self {
            stages,
            size,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.stages == 0 {
            return Err(Error::Domain("need at least one codebook".into()));
        }
        if self.size < 2 {
            return Err(Error::Domain(format!("K must be >= 2, got {}", self.size)));
        }
        if self.encode == EncodeMethod::Beam(0) {
            return Err(Error::Domain("beam width must be >= 1".into()));
        }
        if self.schedule_steps == 0 {
            return Err(Error::Domain("transition schedule needs at least one step".into()));
        }
        if let Some(r) = self.eps_regularization {
            if !(r.lambda_step >= 0.0 && r.lambda_max >= 0.0) {
                return Err(Error::Domain("λ schedule values must be >= 0".into()));
            }
        }
        Ok(())
    }

    /// Seed for the k-means run of the `t`-th codebook update (0-based).
    fn iteration_seed(&self, t: usize) -> u64 {
        self.seed.wrapping_add((t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

/// One row of a training report.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Codebook optimized in this iteration, `None` for the initial state.
    pub codebook: Option<usize>,
    /// Mean squared reconstruction error after re-encoding.
    pub error: f64,
    /// Seconds since training started.
    pub seconds: f64,
    pub lambda: f64,
    pub eps_mean: f64,
    pub eps_std: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// State before the first codebook update.
    pub initial: Option<IterationRecord>,
    pub iterations: Vec<IterationRecord>,
}

impl TrainReport {
    pub fn errors(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.error).collect()
    }

    pub fn final_error(&self) -> Option<f64> {
        self.iterations.last().or(self.initial.as_ref()).map(|r| r.error)
    }

    /// CSV with header `iteration,codebook,error,seconds,lambda,eps_mean,eps_std`.
    /// The initial state is iteration 0 with an empty codebook column.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "iteration,codebook,error,seconds,lambda,eps_mean,eps_std")?;
        for r in self.initial.iter().chain(&self.iterations) {
            let cb = r.codebook.map(|c| c.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.iteration, cb, r.error, r.seconds, r.lambda, r.eps_mean, r.eps_std
            )?;
        }
        Ok(())
    }
}

/// Output of every training routine.
#[derive(Clone, Debug)]
pub struct Trained {
    pub model: QuantModel,
    pub codes: CodeMatrix,
    pub report: TrainReport,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

fn check_data(data: &VectorSet) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Empty("training data has no vectors".into()));
    }
    Ok(())
}

fn mean_squared_norm(data: &VectorSet) -> f64 {
    data.rows().map(squared_norm).sum::<f64>() / data.len() as f64
}

/// Mutable state of the general training loop.
struct Loop<'a> {
    data: &'a VectorSet,
    cfg: &'a TrainConfig,
    schedule: TransitionSchedule,
    model: QuantModel,
    tables: CrossDotTables,
    encoded: Vec<Encoded>,
    codes: CodeMatrix,
    error: f64,
    lambda: f64,
    eps0: f64,
    started: Instant,
    report: TrainReport,
}

impl<'a> Loop<'a> {
    fn new(data: &'a VectorSet, mut model: QuantModel, cfg: &'a TrainConfig) -> Result<Self> {
        let schedule = TransitionSchedule::geometric(data.dim(), cfg.schedule_steps)?;
        for m in 0..model.stages() {
            let mut cb = model.codebook(m).clone();
            cb.round_to_f32();
            model.set_codebook(m, cb)?;
        }
        let tables = build_cross_tables(&model);
        let mut state = Self {
            data,
            cfg,
            schedule,
            model,
            tables,
            encoded: Vec::new(),
            codes: CodeMatrix::zeros(0, 1),
            error: 0.0,
            lambda: 0.0,
            eps0: 0.0,
            started: Instant::now(),
            report: TrainReport::default(),
        };
        state.encode(None)?;
        state.report.initial = Some(state.record(0, None));
        Ok(state)
    }

    fn record(&self, iteration: usize, codebook: Option<usize>) -> IterationRecord {
        let (eps_mean, eps_std) = mean_std(self.encoded.iter().map(|e| e.eps));
        IterationRecord {
            iteration,
            codebook,
            error: self.error,
            seconds: self.started.elapsed().as_secs_f64(),
            lambda: self.lambda,
            eps_mean,
            eps_std,
        }
    }

    /// Re-encodes every vector. `keep` pins the first `keep` code columns.
    fn encode(&mut self, keep: Option<usize>) -> Result<()> {
        self.encoded = encode_rows(
            self.data,
            &self.model,
            &self.tables,
            self.cfg.encode,
            keep.map(|n| (&self.codes, n)),
            penalty(self.lambda, self.eps0),
        )?;
        let mut stored = self.model.clone();
        stored.eps_mode = EpsMode::Stored;
        self.codes = finish_codes(&stored, &self.encoded);
        self.error = quantization_error_unchecked(self.data, &self.model, &self.codes);
        Ok(())
    }

    /// Sorts codebooks by variance; returns `new position -> old position`.
    fn reorder(&mut self) -> Result<Vec<usize>> {
        let (model, codes, perm) = reorder_by_variance(&self.model, &self.codes)?;
        if perm.iter().enumerate().any(|(i, &p)| i != p) {
            for e in &mut self.encoded {
                e.code = perm.iter().map(|&p| e.code[p]).collect();
            }
            self.tables = build_cross_tables(&model);
        }
        self.model = model;
        self.codes = codes;
        Ok(perm)
    }

    /// Rebuilds codebook `m` against the current residuals; `t` is the global
    /// iteration index.
    fn optimize(&mut self, m: usize, t: usize) -> Result<()> {
        let xprime = residuals_unchecked(self.data, &self.model, &self.codes, Some(m));
        let old = self.model.codebook(m).clone();
        let mut kcfg = self.cfg.kmeans.clone();
        kcfg.seed = self.cfg.iteration_seed(t);
        let sampled = old.is_degenerate();
        let init = if sampled {
            sample_init(&xprime, old.size(), kcfg.seed)?
        } else {
            old.clone()
        };

        let mut fresh = if self.lambda > 0.0 {
            let (other_sum, eps_other) = self.penalty_terms(m, &xprime);
            let pen = EpsPenalty {
                other_sum: &other_sum,
                eps_other: &eps_other,
                lambda: self.lambda,
                eps0: self.eps0,
            };
            regularized_transition_cluster(&xprime, &init, &self.schedule, &kcfg, &pen)?
        } else {
            transition_cluster(&xprime, &init, &self.schedule, &kcfg)?
        };
        fresh.round_to_f32();

        if self.lambda == 0.0 && sampled && nearest_objective(&xprime, &fresh) > nearest_objective(&xprime, &old) {
            fresh = old;
        }
        self.model.set_codebook(m, fresh)?;
        self.tables = build_cross_tables(&self.model);
        Ok(())
    }

    /// Per-vector `sum_{b != m} c_b` and the ε contribution among those codebooks.
    fn penalty_terms(&self, m: usize, xprime: &VectorSet) -> (VectorSet, Vec<f64>) {
        let d = self.data.dim();
        let mut other = Vec::with_capacity(self.data.as_slice().len());
        for (x, xp) in self.data.rows().zip(xprime.rows()) {
            other.extend(x.iter().zip(xp).map(|(a, b)| a - b));
        }
        let eps_other = self
            .codes
            .iter()
            .map(|code| {
                let mut s = 0.0;
                for a in 0..code.len() {
                    for b in a + 1..code.len() {
                        if a != m && b != m {
                            s += self.tables.cross(a, code[a] as usize, b, code[b] as usize);
                        }
                    }
                }
                2.0 * s
            })
            .collect();
        (VectorSet::from_raw(d, other), eps_other)
    }

    fn run(mut self) -> Result<Trained> {
        let cfg = self.cfg;
        let stages = self.model.stages();
        let mut pick_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_0F_C0DE_B00C);
        let mut lambda_scale: Option<f64> = None;
        let mut t = 0;

        for sweep in 0..cfg.sweeps {
            self.reorder()?;
            if let Some(reg) = cfg.eps_regularization {
                let (mean, std) = mean_std(self.encoded.iter().map(|e| e.eps));
                self.eps0 = mean;
                if lambda_scale.is_none() && std > 1e-12 {
                    lambda_scale = Some(mean_squared_norm(self.data) / (std * std + 1e-12));
                }
                if let (Some(scale), true) = (lambda_scale, sweep > 0) {
                    self.lambda = (self.lambda + reg.lambda_step * scale).min(reg.lambda_max * scale);
                }
            }

            let mut order: Vec<usize> = (0..stages).collect();
            if cfg.pick_order == PickOrder::RandomPerSweep {
                order.shuffle(&mut pick_rng);
            }

            // Codebook identity at each position, so a sweep visits every
            // codebook once even when random order re-sorts them mid-sweep.
            let mut ids: Vec<usize> = (0..stages).collect();
            let sweep_start = self.error;
            for id in order {
                let m = ids.iter().position(|&i| i == id).expect("codebook identity");
                self.optimize(m, t)?;
                t += 1;
                let keep = match cfg.pick_order {
                    // Codebooks before m are untouched in a sequential sweep,
                    // so their code columns stay valid.
                    PickOrder::Sequential => matches!(cfg.encode, EncodeMethod::Beam(_)).then_some(m),
                    // Beam search needs variance order at every encode.
                    PickOrder::RandomPerSweep => {
                        let perm = self.reorder()?;
                        ids = perm.iter().map(|&p| ids[p]).collect();
                        None
                    }
                };
                self.encode(keep)?;
                let rec = self.record(t, Some(m));
                self.report.iterations.push(rec);
            }

            // While λ is still ramping up the error is expected to stall or rise.
            let ramping = cfg
                .eps_regularization
                .is_some_and(|r| r.lambda_step > 0.0 && lambda_scale.is_none_or(|s| self.lambda < r.lambda_max * s));
            if !ramping && sweep_start - self.error < cfg.sweep_tol * sweep_start {
                break;
            }
        }

        self.reorder()?;
        let eps_mode = match cfg.eps_regularization {
            Some(_) => EpsMode::Eliminated {
                eps0: mean_std(self.encoded.iter().map(|e| e.eps)).0,
                lambda: self.lambda,
            },
            None => EpsMode::Stored,
        };
        self.model.eps_mode = eps_mode;
        self.model.variance_order = true;
        self.model.seed = cfg.seed;
        let codes = finish_codes(&self.model, &self.encoded);
        Ok(Trained {
            model: self.model,
            codes,
            report: self.report,
        })
    }
}

fn check_init(data: &VectorSet, init: &QuantModel, cfg: &TrainConfig) -> Result<()> {
    if init.dim() != data.dim() || init.stages() != cfg.stages || init.codebook_size() != cfg.size {
        return Err(Error::Shape(format!(
            "initial model is M={} K={} d={}, expected M={} K={} d={}",
            init.stages(),
            init.codebook_size(),
            init.dim(),
            cfg.stages,
            cfg.size,
            data.dim()
        )));
    }
    Ok(())
}

/// General GRVQ training from `init` (all-zero codebooks when `None`).
///
/// The returned model has its codebooks in descending variance order and
/// stores exact ε per code.
pub fn grvq_train(data: &VectorSet, init: Option<&QuantModel>, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    check_data(data)?;
    let mut cfg = cfg.clone();
    cfg.eps_regularization = None;
    let model = match init {
        Some(m) => {
            check_init(data, m, &cfg)?;
            m.clone()
        }
        None => QuantModel::zeros(cfg.stages, cfg.size, data.dim()),
    };
    Loop::new(data, model, &cfg)?.run()
}

/// GRVQ with the ε penalty switched on: λ starts at zero and grows by
/// `lambda_step` per sweep up to `lambda_max`, while `ε₀` tracks the mean ε.
/// The result is an [`EpsMode::Eliminated`] model whose codes carry no ε.
pub fn train_eps_eliminated(data: &VectorSet, init: Option<&QuantModel>, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    check_data(data)?;
    if cfg.eps_regularization.is_none() {
        return Err(Error::Domain("ε elimination needs an eps_regularization schedule".into()));
    }
    let model = match init {
        Some(m) => {
            check_init(data, m, cfg)?;
            m.clone()
        }
        None => QuantModel::zeros(cfg.stages, cfg.size, data.dim()),
    };
    Loop::new(data, model, cfg)?.run()
}

/// Continues training `model` on a new batch only. Previously encoded data is
/// not touched. An empty batch returns the model unchanged.
pub fn online_update(model: &QuantModel, batch: &VectorSet, cfg: &TrainConfig) -> Result<Trained> {
    if batch.is_empty() {
        return Ok(Trained {
            model: model.clone(),
            codes: CodeMatrix::zeros(0, model.stages()),
            report: TrainReport::default(),
        });
    }
    if batch.dim() != model.dim() {
        return Err(Error::Shape(format!(
            "batch is {}-d, model is {}-d",
            batch.dim(),
            model.dim()
        )));
    }
    let mut cfg = cfg.clone();
    cfg.stages = model.stages();
    cfg.size = model.codebook_size();
    grvq_train(batch, Some(model), &cfg)
}

/// Classical residual VQ: one k-means per stage on the residuals of the
/// previous stages, with greedy encoding.
pub fn rvq_train(data: &VectorSet, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    check_data(data)?;
    let started = Instant::now();
    let (n, d) = (data.len(), data.dim());
    let mut model = QuantModel::zeros(cfg.stages, cfg.size, d);
    let mut residual = data.clone();
    let mut codes = CodeMatrix::zeros(n, cfg.stages);
    let mut report = TrainReport {
        initial: Some(IterationRecord {
            iteration: 0,
            codebook: None,
            error: mean_squared_norm(data),
            seconds: 0.0,
            lambda: 0.0,
            eps_mean: 0.0,
            eps_std: 0.0,
        }),
        iterations: Vec::new(),
    };

    for m in 0..cfg.stages {
        let mut kcfg = cfg.kmeans.clone();
        kcfg.seed = cfg.iteration_seed(m);
        let init = sample_init(&residual, cfg.size, kcfg.seed)?;
        let mut cb = kmeans(&residual, &init, &kcfg, d)?.codebook;
        cb.round_to_f32();

        let mut next = residual.clone().into_inner();
        for (i, r) in next.chunks_exact_mut(d).enumerate() {
            let k = nearest_codeword(r, &cb);
            codes.code_mut(i)[m] = k as u32;
            for (v, c) in r.iter_mut().zip(cb.codeword(k)) {
                *v -= c;
            }
        }
        residual = VectorSet::from_raw(d, next);
        model.set_codebook(m, cb)?;
        report.iterations.push(IterationRecord {
            iteration: m + 1,
            codebook: Some(m),
            error: mean_squared_norm(&residual),
            seconds: started.elapsed().as_secs_f64(),
            lambda: 0.0,
            eps_mean: 0.0,
            eps_std: 0.0,
        });
    }

    finalize(model, codes, report, cfg.seed, EpsMode::Stored)
}

fn nearest_codeword(x: &[f64], cb: &Codebook) -> usize {
    let mut best = (0, f64::INFINITY);
    for k in 0..cb.size() {
        let dist = squared_distance(x, cb.codeword(k));
        if dist < best.1 {
            best = (k, dist);
        }
    }
    best.0
}

fn finalize(model: QuantModel, codes: CodeMatrix, report: TrainReport, seed: u64, mode: EpsMode) -> Result<Trained> {
    let (mut model, mut codes, _) = reorder_by_variance(&model, &codes)?;
    model.eps_mode = mode;
    model.seed = seed;
    if model.eps_mode == EpsMode::Stored {
        codes.eps = Some(
            codes
                .iter()
                .map(|c| crate::model::epsilon_unchecked(&model, c))
                .collect(),
        );
    }
    Ok(Trained { model, codes, report })
}

/// Contiguous dimension block `[start, end)` of PQ codebook `m`; the last
/// block absorbs the remainder.
pub fn pq_block(dim: usize, stages: usize, m: usize) -> (usize, usize) {
    let width = dim / stages;
    let start = m * width;
    let end = if m + 1 == stages { dim } else { start + width };
    (start, end)
}

/// Product quantization: codebook `m` is k-means on dimension block `m`
/// only, zero elsewhere. Disjoint supports make ε vanish for every code.
pub fn pq_train(data: &VectorSet, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    check_data(data)?;
    let (n, d) = (data.len(), data.dim());
    if cfg.stages > d {
        return Err(Error::Domain(format!(
            "PQ needs M <= d, got M={} d={d}",
            cfg.stages
        )));
    }
    let started = Instant::now();
    let mut books = Vec::with_capacity(cfg.stages);
    let mut codes = CodeMatrix::zeros(n, cfg.stages);
    let mut report = TrainReport {
        initial: Some(IterationRecord {
            iteration: 0,
            codebook: None,
            error: mean_squared_norm(data),
            seconds: 0.0,
            lambda: 0.0,
            eps_mean: 0.0,
            eps_std: 0.0,
        }),
        iterations: Vec::new(),
    };
    let mut block_errors = vec![0.0; cfg.stages];
    let total_norm: f64 = mean_squared_norm(data);

    for m in 0..cfg.stages {
        let (start, end) = pq_block(d, cfg.stages, m);
        let width = end - start;
        let mut sub = Vec::with_capacity(n * width);
        for x in data.rows() {
            sub.extend_from_slice(&x[start..end]);
        }
        let sub = VectorSet::from_raw(width, sub);
        let mut kcfg = cfg.kmeans.clone();
        kcfg.seed = cfg.iteration_seed(m);
        let init = sample_init(&sub, cfg.size, kcfg.seed)?;
        let mut block = kmeans(&sub, &init, &kcfg, width)?.codebook;
        block.round_to_f32();

        let mut err = 0.0;
        for (i, x) in sub.rows().enumerate() {
            let k = nearest_codeword(x, &block);
            codes.code_mut(i)[m] = k as u32;
            err += squared_distance(x, block.codeword(k));
        }
        block_errors[m] = err / n as f64 - sub.rows().map(squared_norm).sum::<f64>() / n as f64;

        let mut full = vec![0.0; cfg.size * d];
        for k in 0..cfg.size {
            full[k * d + start..k * d + end].copy_from_slice(block.codeword(k));
        }
        books.push(Codebook::new(d, full)?);
        report.iterations.push(IterationRecord {
            iteration: m + 1,
            codebook: Some(m),
            error: total_norm + block_errors[..=m].iter().sum::<f64>(),
            seconds: started.elapsed().as_secs_f64(),
            lambda: 0.0,
            eps_mean: 0.0,
            eps_std: 0.0,
        });
    }

    let model = QuantModel::new(books, EpsMode::None)?;
    // Block order is part of the PQ layout, so codebooks are not reordered.
    let mut model = model;
    model.seed = cfg.seed;
    Ok(Trained { model, codes, report })
}

/// Plain k-means as a single-codebook model with a sampled initialization.
pub fn kmeans_train(data: &VectorSet, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    check_data(data)?;
    if cfg.stages != 1 {
        return Err(Error::Domain(format!("k-means trains one codebook, got M={}", cfg.stages)));
    }
    let started = Instant::now();
    let mut kcfg = cfg.kmeans.clone();
    kcfg.seed = cfg.iteration_seed(0);
    let init = sample_init(data, cfg.size, kcfg.seed)?;
    let mut cb = kmeans(data, &init, &kcfg, data.dim())?.codebook;
    cb.round_to_f32();
    let mut codes = CodeMatrix::zeros(data.len(), 1);
    let mut err = 0.0;
    for (i, x) in data.rows().enumerate() {
        let k = nearest_codeword(x, &cb);
        codes.code_mut(i)[0] = k as u32;
        err += squared_distance(x, cb.codeword(k));
    }
    let report = TrainReport {
        initial: Some(IterationRecord {
            iteration: 0,
            codebook: None,
            error: mean_squared_norm(data),
            seconds: 0.0,
            lambda: 0.0,
            eps_mean: 0.0,
            eps_std: 0.0,
        }),
        iterations: vec![IterationRecord {
            iteration: 1,
            codebook: Some(0),
            error: err / data.len() as f64,
            seconds: started.elapsed().as_secs_f64(),
            lambda: 0.0,
            eps_mean: 0.0,
            eps_std: 0.0,
        }],
    };
    let mut model = QuantModel::new(vec![cb], EpsMode::None)?;
    model.variance_order = true;
    model.seed = cfg.seed;
    Ok(Trained { model, codes, report })
}
