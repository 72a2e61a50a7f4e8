use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use grvq::analysis::{error_vs_stages, mutual_info_matrix, write_error_csv};
use grvq::clustering::KMeansConfig;
use grvq::encoder::{build_cross_tables, encode_dataset, eps_quantizer_fit, EncodeMethod};
use grvq::io::{read_codes, read_model, read_vecs, write_codes, write_model, write_vecs, VecFileKind};
use grvq::search::{ground_truth, recall_at, search_all, Neighbor, SearchResult};
use grvq::synth::gen_synthetic;
use grvq::trainer::{
    grvq_train, kmeans_train, pq_train, rvq_train, train_eps_eliminated, EpsRegularization, TrainConfig, Trained,
};
use grvq::{epsilon_of_codes, EpsMode, VectorSet};

#[derive(Parser, Debug)]
#[command(name = "grvq", version, about = "Generalized residual vector quantization")]
struct Cli {
    /// Worker threads. Outputs do not depend on this; use 1 for strict reproduction runs.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Directory searched for relative input paths that do not exist as given.
    #[arg(long, global = true, env = "GRVQ_DATA_DIR")]
    data_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and encode the training data.
    Train(TrainArgs),
    /// Encode vectors with an existing model.
    Encode(EncodeArgs),
    /// Exhaustive compressed-domain search.
    Search(SearchArgs),
    /// Recall@{1,10,100} of search results.
    Eval(EvalArgs),
    /// Entropy, mutual information and error-vs-stages reports.
    Analyze(AnalyzeArgs),
    /// Write a synthetic dataset.
    GenData(GenDataArgs),
    /// Re-run the command recorded in a manifest.
    Replay { manifest: PathBuf },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum Method {
    Grvq,
    Rvq,
    Pq,
    Kmeans,
}

#[derive(Clone, Debug, PartialEq)]
enum EpsArg {
    Store,
    Quant(u8),
    Eliminate,
}

impl std::fmt::Display for EpsArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EpsArg::Store => write!(f, "store"),
            EpsArg::Quant(bits) => write!(f, "quant:{bits}"),
            EpsArg::Eliminate => write!(f, "eliminate"),
        }
    }
}

impl Serialize for EpsArg {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

fn parse_eps(s: &str) -> Result<EpsArg, String> {
    match s {
        "store" => Ok(EpsArg::Store),
        "eliminate" => Ok(EpsArg::Eliminate),
        _ => {
            let bits = s
                .strip_prefix("quant:")
                .ok_or_else(|| format!("expected store, quant:BITS or eliminate, got {s}"))?;
            let bits: u8 = bits.parse().map_err(|_| format!("bad bit count {bits}"))?;
            if !(1..=16).contains(&bits) {
                return Err(format!("quant bits must be 1..=16, got {bits}"));
            }
            Ok(EpsArg::Quant(bits))
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[arg(long, value_enum, default_value = "grvq")]
    method: Method,
    #[arg(long)]
    data: PathBuf,
    /// Number of codebooks.
    #[arg(long = "M", default_value_t = 8)]
    m: usize,
    /// Codewords per codebook.
    #[arg(long = "K", default_value_t = 256)]
    k: usize,
    #[arg(long, default_value_t = 8)]
    sweeps: usize,
    /// Beam width for encoding.
    #[arg(long, default_value_t = 10)]
    beam: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// store, quant:BITS or eliminate.
    #[arg(long, default_value = "store", value_parser = parse_eps)]
    eps: EpsArg,
    /// Steps of the transition-clustering schedule.
    #[arg(long, default_value_t = 10)]
    schedule_steps: usize,
    /// λ increment per sweep for --eps eliminate, in normalized units.
    #[arg(long, default_value_t = 0.01)]
    lambda_step: f64,
    /// λ ceiling for --eps eliminate, in normalized units.
    #[arg(long, default_value_t = 1.0)]
    lambda_max: f64,
    #[arg(long, default_value_t = 25)]
    kmeans_iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    kmeans_tol: f64,
    /// Start from this model instead of all-zero codebooks (grvq only).
    #[arg(long)]
    init: Option<PathBuf>,
    /// Use only the first N training vectors.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EncodeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 10)]
    beam: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SearchArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    codes: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// Neighbors returned per query.
    #[arg(long = "R", default_value_t = 100)]
    r: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    /// Search results CSV.
    #[arg(long)]
    results: PathBuf,
    /// Ground-truth neighbor ids (ivecs). Computed from --database and --queries when absent.
    #[arg(long, conflicts_with = "database")]
    truth: Option<PathBuf>,
    #[arg(long, requires = "queries")]
    database: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct AnalyzeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    codes: PathBuf,
    /// Vectors the codes were computed from; enables the error-vs-stages report.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct GenDataArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 16)]
    clusters: usize,
    #[arg(long, default_value_t = 0.9)]
    correlation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also draw this many extra vectors from the same distribution as queries.
    #[arg(long, default_value_t = 0, requires = "queries_out")]
    queries: usize,
    #[arg(long)]
    queries_out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
}

impl From<grvq::Error> for Failure {
    fn from(e: grvq::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

#[derive(Serialize, Deserialize, Debug)]
struct RunManifest {
    subcommand: String,
    /// Command line, without the program name.
    args: Vec<String>,
    params: serde_json::Value,
    seed: Option<u64>,
    workers: usize,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    wall_seconds: f64,
    version: String,
}

struct Run<'a> {
    argv: &'a [String],
    data_dir: Option<&'a Path>,
    workers: usize,
    started: Instant,
}

impl Run<'_> {
    fn input(&self, path: &Path) -> CliResult<PathBuf> {
        if path.exists() {
            return Ok(path.to_path_buf());
        }
        if let (true, Some(dir)) = (path.is_relative(), self.data_dir) {
            let candidate = dir.join(path);
            if candidate.exists() {
                return Ok(candidate);
            }
        }
        Err(Failure::Data(format!("{}: no such file", path.display())))
    }

    fn manifest(
        &self,
        subcommand: &str,
        params: &impl Serialize,
        seed: Option<u64>,
        inputs: Vec<PathBuf>,
        outputs: Vec<PathBuf>,
        at: &Path,
    ) -> CliResult<()> {
        let manifest = RunManifest {
            subcommand: subcommand.into(),
            args: self.argv.to_vec(),
            params: serde_json::to_value(params).map_err(|e| Failure::Data(e.to_string()))?,
            seed,
            workers: self.workers,
            inputs,
            outputs,
            wall_seconds: self.started.elapsed().as_secs_f64(),
            version: env!("CARGO_PKG_VERSION").into(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Data(e.to_string()))?;
        fs::write(at, text + "\n")?;
        Ok(())
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn read_vectors(path: &Path, limit: Option<usize>) -> CliResult<VectorSet> {
    let kind = VecFileKind::from_path(path).ok_or_else(|| {
        Failure::Usage(format!(
            "{}: expected a .fvecs, .bvecs or .ivecs file",
            path.display()
        ))
    })?;
    Ok(read_vecs(path, kind, limit)?)
}

fn train(run: &Run, a: &TrainArgs) -> CliResult<()> {
    match (a.method, &a.eps) {
        (Method::Pq | Method::Kmeans, EpsArg::Quant(_) | EpsArg::Eliminate) => {
            return Err(Failure::Usage(format!(
                "--eps {} needs an additive model; {} codes have no ε term",
                a.eps,
                a.method.to_possible_value().map_or("these".into(), |v| v.get_name().to_string())
            )))
        }
        (Method::Rvq, EpsArg::Eliminate) => {
            return Err(Failure::Usage("ε elimination needs --method grvq".into()));
        }
        (Method::Kmeans, _) if a.m != 1 => {
            return Err(Failure::Usage(format!("--method kmeans trains one codebook, got --M {}", a.m)));
        }
        (m, _) if a.init.is_some() && m != Method::Grvq => {
            return Err(Failure::Usage("--init is only supported with --method grvq".into()));
        }
        _ => {}
    }
    let data_path = run.input(&a.data)?;
    let data = read_vectors(&data_path, a.limit)?;
    let mut inputs = vec![data_path];
    let init = match &a.init {
        Some(p) => {
            let p = run.input(p)?;
            let model = read_model(&p)?;
            inputs.push(p);
            Some(model)
        }
        None => None,
    };

    let cfg = TrainConfig {
        stages: a.m,
        size: a.k,
        sweeps: a.sweeps,
        encode: EncodeMethod::Beam(a.beam),
        seed: a.seed,
        eps_regularization: (a.eps == EpsArg::Eliminate).then_some(EpsRegularization {
            lambda_step: a.lambda_step,
            lambda_max: a.lambda_max,
        }),
        schedule_steps: a.schedule_steps,
        kmeans: KMeansConfig {
            max_iters: a.kmeans_iters,
            rel_tol: a.kmeans_tol,
            seed: a.seed,
        },
        ..TrainConfig::default()
    };
    info!("training {:?} on {} vectors of dimension {}", a.method, data.len(), data.dim());
    let Trained {
        mut model,
        mut codes,
        report,
    } = match (a.method, &a.eps) {
        (Method::Grvq, EpsArg::Eliminate) => train_eps_eliminated(&data, init.as_ref(), &cfg)?,
        (Method::Grvq, _) => grvq_train(&data, init.as_ref(), &cfg)?,
        (Method::Rvq, _) => rvq_train(&data, &cfg)?,
        (Method::Pq, _) => pq_train(&data, &cfg)?,
        (Method::Kmeans, _) => kmeans_train(&data, &cfg)?,
    };
    if let EpsArg::Quant(bits) = a.eps {
        let exact = epsilon_of_codes(&model, &codes)?;
        let q = eps_quantizer_fit(&exact, bits)?;
        codes.eps = Some(exact.iter().map(|&e| q.dequantize(q.quantize(e))).collect());
        model.eps_mode = EpsMode::Quantized(q);
    }

    fs::create_dir_all(&a.out)?;
    let model_path = a.out.join("model.grvq");
    let codes_path = a.out.join("codes.grvc");
    let report_path = a.out.join("train_report.csv");
    write_model(&model_path, &model)?;
    write_codes(&codes_path, &codes, &model)?;
    report.write_csv(BufWriter::new(File::create(&report_path)?))?;
    if let Some(err) = report.final_error() {
        println!("final quantization error {err}");
    }
    run.manifest(
        "train",
        a,
        Some(a.seed),
        inputs,
        vec![model_path, codes_path, report_path],
        &a.out.join("manifest.json"),
    )
}

fn encode(run: &Run, a: &EncodeArgs) -> CliResult<()> {
    let model_path = run.input(&a.model)?;
    let data_path = run.input(&a.data)?;
    let model = read_model(&model_path)?;
    let data = read_vectors(&data_path, None)?;
    if data.dim() != model.dim() {
        return Err(Failure::Data(format!(
            "data is {}-d, model is {}-d",
            data.dim(),
            model.dim()
        )));
    }
    let tables = build_cross_tables(&model);
    let codes = encode_dataset(&data, &model, &tables, a.beam)?;
    write_codes(&a.out, &codes, &model)?;
    run.manifest(
        "encode",
        a,
        Some(model.seed),
        vec![model_path, data_path],
        vec![a.out.clone()],
        &sidecar(&a.out),
    )
}

fn write_results(path: &Path, results: &SearchResult) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "query,rank,id,distance")?;
    for (q, list) in results.neighbors.iter().enumerate() {
        for (rank, n) in list.iter().enumerate() {
            writeln!(w, "{q},{rank},{},{}", n.id, n.distance)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_results(path: &Path) -> CliResult<SearchResult> {
    let bad = |line: usize, msg: &str| Failure::Data(format!("{}:{line}: {msg}", path.display()));
    let mut neighbors: Vec<Vec<Neighbor>> = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != "query,rank,id,distance" {
                return Err(bad(1, "expected header query,rank,id,distance"));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad(i + 1, "expected 4 fields"));
        }
        let q: usize = fields[0].parse().map_err(|_| bad(i + 1, "bad query index"))?;
        let id: usize = fields[2].parse().map_err(|_| bad(i + 1, "bad id"))?;
        let distance: f64 = fields[3].parse().map_err(|_| bad(i + 1, "bad distance"))?;
        if q >= neighbors.len() {
            neighbors.resize_with(q + 1, Vec::new);
        }
        neighbors[q].push(Neighbor { id, distance });
    }
    Ok(SearchResult { neighbors })
}

fn search(run: &Run, a: &SearchArgs) -> CliResult<()> {
    let model_path = run.input(&a.model)?;
    let codes_path = run.input(&a.codes)?;
    let queries_path = run.input(&a.queries)?;
    let model = read_model(&model_path)?;
    let codes = read_codes(&codes_path, &model)?;
    let queries = read_vectors(&queries_path, None)?;
    let results = search_all(&queries, &codes, &model, a.r)?;
    write_results(&a.out, &results)?;
    run.manifest(
        "search",
        a,
        None,
        vec![model_path, codes_path, queries_path],
        vec![a.out.clone()],
        &sidecar(&a.out),
    )
}

fn eval(run: &Run, a: &EvalArgs) -> CliResult<()> {
    let results_path = run.input(&a.results)?;
    let results = read_results(&results_path)?;
    let mut inputs = vec![results_path];
    let truth = match (&a.truth, &a.database, &a.queries) {
        (Some(t), _, _) => {
            let t = run.input(t)?;
            let ids = read_vecs(&t, VecFileKind::Ivecs, None)?;
            inputs.push(t);
            SearchResult {
                neighbors: ids
                    .rows()
                    .map(|r| {
                        r.iter()
                            .map(|&id| Neighbor {
                                id: id as usize,
                                distance: 0.0,
                            })
                            .collect()
                    })
                    .collect(),
            }
        }
        (None, Some(db), Some(q)) => {
            let (db, q) = (run.input(db)?, run.input(q)?);
            let database = read_vectors(&db, None)?;
            let queries = read_vectors(&q, None)?;
            inputs.extend([db, q]);
            ground_truth(&queries, &database, 1)?
        }
        _ => return Err(Failure::Usage("eval needs --truth or --database with --queries".into())),
    };
    let depth = results.neighbors.iter().map(Vec::len).min().unwrap_or(0);
    let mut w = BufWriter::new(File::create(&a.out)?);
    writeln!(w, "R,recall")?;
    for r in [1, 10, 100].into_iter().filter(|&r| r <= depth) {
        let recall = recall_at(&results, &truth, r)?;
        writeln!(w, "{r},{recall}")?;
        println!("recall@{r} {recall}");
    }
    w.flush()?;
    run.manifest("eval", a, None, inputs, vec![a.out.clone()], &sidecar(&a.out))
}

fn analyze(run: &Run, a: &AnalyzeArgs) -> CliResult<()> {
    let model_path = run.input(&a.model)?;
    let codes_path = run.input(&a.codes)?;
    let model = read_model(&model_path)?;
    let codes = read_codes(&codes_path, &model)?;
    let mut inputs = vec![model_path, codes_path];
    fs::create_dir_all(&a.out)?;
    let mi_path = a.out.join("mutual_info.csv");
    let matrix = mutual_info_matrix(&codes)?;
    matrix.write_csv(BufWriter::new(File::create(&mi_path)?))?;
    println!("mean codebook entropy {} bits", matrix.mean_entropy());
    let mut outputs = vec![mi_path];
    if let Some(d) = &a.data {
        let d = run.input(d)?;
        let data = read_vectors(&d, None)?;
        inputs.push(d);
        let rows = error_vs_stages(&data, &model, &codes)?;
        let path = a.out.join("error_vs_stages.csv");
        write_error_csv(&rows, BufWriter::new(File::create(&path)?))?;
        outputs.push(path);
    }
    run.manifest("analyze", a, None, inputs, outputs, &a.out.join("manifest.json"))
}

fn gen_data(run: &Run, a: &GenDataArgs) -> CliResult<()> {
    let all = gen_synthetic(a.n + a.queries, a.dim, a.clusters, a.correlation, a.seed)?;
    write_vecs(&a.out, &all.slice(0, a.n), VecFileKind::Fvecs)?;
    let mut outputs = vec![a.out.clone()];
    if let Some(q) = &a.queries_out {
        write_vecs(q, &all.slice(a.n, a.n + a.queries), VecFileKind::Fvecs)?;
        outputs.push(q.clone());
    }
    run.manifest("gen-data", a, Some(a.seed), vec![], outputs, &sidecar(&a.out))
}

fn dispatch(argv: &[String], depth: usize) -> CliResult<()> {
    let cli = match Cli::try_parse_from(std::iter::once("grvq".to_string()).chain(argv.iter().cloned())) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(Failure::Usage(e.to_string())),
    };
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(Failure::Usage("--workers must be >= 1".into()));
    }
    if depth == 0 {
        // Only the first call can size the global pool.
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Failure::Data(e.to_string()))?;
    }
    let run = Run {
        argv,
        data_dir: cli.data_dir.as_deref(),
        workers,
        started: Instant::now(),
    };
    match &cli.command {
        Command::Train(a) => train(&run, a),
        Command::Encode(a) => encode(&run, a),
        Command::Search(a) => search(&run, a),
        Command::Eval(a) => eval(&run, a),
        Command::Analyze(a) => analyze(&run, a),
        Command::GenData(a) => gen_data(&run, a),
        Command::Replay { manifest } => {
            if depth > 0 {
                return Err(Failure::Usage("a manifest cannot replay another manifest".into()));
            }
            let path = run.input(manifest)?;
            let text = fs::read_to_string(&path)?;
            let m: RunManifest = serde_json::from_str(&text)
                .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
            dispatch(&m.args, depth + 1)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match dispatch(&argv, 0) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
