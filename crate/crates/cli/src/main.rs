use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use pcdist::bench::{ordering, time_metrics, Timing};
use pcdist::io::{format_real, read_cloud, write_xyz, format_xyz};
use pcdist::morph::{morph_with_observer, sample_shape, LossKind, MorphConfig, ShapeKind};
use pcdist::verify::{self, random_cloud, Suite};
use pcdist::{evaluate, AswConfig, DistanceOrder, Error, Metric, MetricParams, MetricReport, PointCloud, SeededRng};

#[derive(Parser, Debug)]
#[command(name = "pcdist", version, about = "Distances between point clouds")]
struct Cli {
    /// Base seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    /// Emit a single JSON document on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Distance between two point-cloud files.
    Dist(DistArgs),
    /// Gradient-descent morphing of a source cloud onto a target.
    Morph(MorphArgs),
    /// Wall-clock timing of metric evaluations on random clouds.
    Bench(BenchArgs),
    /// Fuzzed invariant suites.
    Verify(VerifyArgs),
    /// Sample a synthetic shape to an XYZ file.
    Sample(SampleArgs),
}

#[derive(Args, Debug)]
struct DistArgs {
    #[arg(long)]
    metric: Metric,
    /// Order p >= 1. Ignored by cd and mcd, which always use squared norms.
    #[arg(long)]
    p: Option<f64>,
    #[arg(short = 'a')]
    a: PathBuf,
    #[arg(short = 'b')]
    b: PathBuf,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    slices: u64,
    #[arg(long, default_value_t = 2)]
    n0: usize,
    #[arg(long, default_value_t = 1)]
    s: usize,
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    #[arg(long, default_value_t = 500)]
    max: usize,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    restarts: u64,
}

#[derive(Args, Debug)]
struct MorphArgs {
    #[arg(long)]
    loss: LossKind,
    /// A file, or `shape:NAME:N`.
    #[arg(long)]
    source: String,
    #[arg(long)]
    target: String,
    /// Step size (default: |source| / 4; per-point gradients scale as 1/n).
    #[arg(long)]
    step: Option<f64>,
    #[arg(long, default_value_t = 5000, value_parser = clap::value_parser!(u64).range(1..))]
    iters: u64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    slices: u64,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    eval_every: u64,
    #[arg(long, default_value_t = MorphConfig::DEFAULT_EMD_STOP)]
    emd_stop: f64,
    /// Order of the emd, swd and msw losses (1 or 2).
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, default_value_t = 2048, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, value_delimiter = ',', default_value = "cd,swd,emd")]
    metrics: Vec<Metric>,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    slices: u64,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    suite: Suite,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    shape: ShapeKind,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Failure of a subcommand, carrying its exit status.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Lib(Error),
    Verify,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn exit_status(err: &Error) -> u8 {
    match err {
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::RaggedRows { .. }
        | Error::EmptyCloud
        | Error::NonFiniteCoordinate { .. }
        | Error::UnsupportedFormat(_) => 3,
        Error::DivergedLoss { .. } => 5,
        Error::InvalidParameter(_) => 2,
        _ => 4,
    }
}

/// Primary output: JSON on stdout with `--json`, otherwise text on stdout.
struct Output {
    json: bool,
}

impl Output {
    fn emit(&self, text: &str, doc: Value) {
        if self.json {
            println!("{doc}");
        } else {
            print!("{text}");
        }
    }

    /// Secondary human-readable text; goes to stderr in JSON mode.
    fn note(&self, text: &str) {
        if self.json {
            eprint!("{text}");
        } else {
            print!("{text}");
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads as usize).build_global() {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let out = Output { json: cli.json };
    let result = match &cli.command {
        Command::Dist(args) => cmd_dist(args, cli.seed, &out),
        Command::Morph(args) => cmd_morph(args, cli.seed, &out),
        Command::Bench(args) => cmd_bench(args, cli.seed, &out),
        Command::Verify(args) => cmd_verify(args, cli.seed, &out),
        Command::Sample(args) => cmd_sample(args, cli.seed, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            if matches!(e, Error::DivergedLoss { .. }) {
                eprintln!("hint: reduce --step");
            }
            ExitCode::from(exit_status(&e))
        }
        Err(Failure::Verify) => ExitCode::from(1),
    }
}

fn order_flag(p: f64) -> Result<DistanceOrder, Failure> {
    DistanceOrder::new(p).map_err(|_| Failure::Usage(format!("--p must be a real >= 1, got {p}")))
}

fn report_json(r: &MetricReport) -> Value {
    let mut doc = Map::new();
    doc.insert("metric".into(), json!(r.metric.name()));
    doc.insert("value".into(), json!(r.value));
    doc.insert("p".into(), json!(r.p));
    if let Some(v) = r.n_slices {
        doc.insert("n_slices".into(), json!(v));
    }
    if let Some(v) = r.n_used {
        doc.insert("n_used".into(), json!(v));
    }
    if let Some(v) = r.converged {
        doc.insert("converged".into(), json!(v));
    }
    if let Some(v) = r.half_width {
        // infinity has no JSON form
        doc.insert("half_width".into(), if v.is_finite() { json!(v) } else { Value::Null });
    }
    if let Some(v) = &r.direction {
        doc.insert("direction".into(), json!(v));
    }
    Value::Object(doc)
}

fn report_text(r: &MetricReport) -> String {
    let mut text = format!("{:?}\n", r.value);
    if let Some(v) = r.n_used {
        text += &format!("n_used {v}\n");
    }
    if let Some(v) = r.converged {
        text += &format!("converged {v}\n");
    }
    if let Some(v) = r.half_width {
        text += &format!("half_width {v:?}\n");
    }
    if let Some(v) = &r.direction {
        let parts: Vec<String> = v.iter().map(|c| format_real(*c)).collect();
        text += &format!("direction {}\n", parts.join(" "));
    }
    text
}

fn cmd_dist(args: &DistArgs, seed: u64, out: &Output) -> Result<(), Failure> {
    let asw = AswConfig::new(args.n0, args.s, args.eps, args.max).map_err(|e| Failure::Usage(e.to_string()))?;
    let params = MetricParams {
        order: args.p.map(order_flag).transpose()?,
        slices: args.slices as usize,
        asw,
        restarts: args.restarts as usize,
        rng: SeededRng::from_seed(seed),
        sinkhorn: None,
    };
    let a = read_cloud(&args.a)?;
    let b = read_cloud(&args.b)?;
    let report = evaluate(args.metric, &a, &b, &params)?;
    out.emit(&report_text(&report), report_json(&report));
    Ok(())
}

/// Resolves `--source` / `--target`: a path, or `shape:NAME:N` sampled from
/// stream `stream` of the run seed.
fn load_input(spec: &str, seed: u64, stream: u64) -> Result<PointCloud, Failure> {
    let Some(rest) = spec.strip_prefix("shape:") else {
        return Ok(read_cloud(spec)?);
    };
    let (name, n) = rest
        .split_once(':')
        .ok_or_else(|| Failure::Usage(format!("expected shape:NAME:N, got `{spec}`")))?;
    let kind: ShapeKind = name.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
    let n: usize = n
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("shape size must be a positive integer, got `{n}`")))?;
    Ok(sample_shape(kind, n, &SeededRng::new(seed, stream))?)
}

fn io_error(path: &Path, source: std::io::Error) -> Failure {
    Failure::Lib(Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn cmd_morph(args: &MorphArgs, seed: u64, out: &Output) -> Result<(), Failure> {
    if !(args.emd_stop >= 0.0) {
        return Err(Failure::Usage("--emd-stop must be non-negative".into()));
    }
    let order = order_flag(args.p)?;
    let source = load_input(&args.source, seed, 0)?;
    let target = load_input(&args.target, seed, 1)?;
    let step = args.step.unwrap_or(source.len() as f64 / 4.0);
    let mut cfg = MorphConfig::new(args.loss, step, args.iters as usize).map_err(|e| Failure::Usage(e.to_string()))?;
    cfg.swd_slices = args.slices as usize;
    cfg.eval_every = args.eval_every as usize;
    cfg.emd_stop = args.emd_stop;
    cfg.order = order;
    cfg.rng = SeededRng::new(seed, 2);
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    fs::create_dir_all(&args.out_dir).map_err(|e| io_error(&args.out_dir, e))?;
    let trace = morph_with_observer(&source, &target, &cfg, |iteration, cloud| {
        write_xyz(cloud, args.out_dir.join(format!("snap_{iteration}.xyz")))
    })?;
    let csv_path = args.out_dir.join("trace.csv");
    fs::write(&csv_path, trace.to_csv()).map_err(|e| io_error(&csv_path, e))?;
    let last_emd = trace.rows.iter().rev().find_map(|r| r.emd);
    let text = match trace.iterations_to_stop {
        Some(i) => format!("iterations_to_stop {i}\n"),
        None => format!("iterations_to_stop not reached within {} iterations\n", args.iters),
    };
    let doc = json!({
        "loss": format!("{:?}", args.loss).to_lowercase(),
        "step": step,
        "iterations_to_stop": trace.iterations_to_stop,
        "rows": trace.rows.len(),
        "final_emd": last_emd,
        "trace": csv_path,
    });
    out.emit(&text, doc);
    Ok(())
}

fn timing_json(t: &Timing) -> Value {
    json!({
        "metric": t.metric.name(),
        "reps": t.reps,
        "mean_ms": t.mean_ms,
        "stddev_ms": t.stddev_ms,
        "min_ms": t.min_ms,
        "median_ms": t.median_ms,
    })
}

fn cmd_bench(args: &BenchArgs, seed: u64, out: &Output) -> Result<(), Failure> {
    let n = args.n as usize;
    let mut g = SeededRng::from_seed(seed).generator();
    let p = random_cloud(&mut g, n, 3);
    let q = random_cloud(&mut g, n, 3);
    let params = MetricParams {
        slices: args.slices as usize,
        rng: SeededRng::new(seed, 1),
        ..MetricParams::default()
    };
    out.note(&format!("timing {} evaluation(s) per metric at n = {n}\n", args.reps));
    let timings = time_metrics(&args.metrics, &p, &q, &params, args.reps as usize)?;
    let order: Vec<&str> = ordering(&timings).into_iter().map(Metric::name).collect();
    let mut text = format!("{:<10}{:>12}{:>12}{:>12}{:>12}\n", "metric", "mean_ms", "stddev_ms", "min_ms", "median_ms");
    for t in &timings {
        text += &format!(
            "{:<10}{:>12.3}{:>12.3}{:>12.3}{:>12.3}\n",
            t.metric.name(),
            t.mean_ms,
            t.stddev_ms,
            t.min_ms,
            t.median_ms
        );
    }
    text += &format!("ordering (fastest first): {}\n", order.join(" < "));
    let doc = json!({
        "n": n,
        "slices": args.slices,
        "reps": args.reps,
        "timings": timings.iter().map(timing_json).collect::<Vec<_>>(),
        "ordering": order,
    });
    out.emit(&text, doc);
    Ok(())
}

fn cmd_verify(args: &VerifyArgs, seed: u64, out: &Output) -> Result<(), Failure> {
    let base = SeededRng::from_seed(seed);
    let reports = verify::run(args.suite, args.trials as usize, &base).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut text = String::new();
    let mut docs = Vec::new();
    for r in &reports {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        text += &format!("{status} {}: {} trials, {} failures", r.suite, r.trials, r.failures.len());
        if let Some(c) = r.coverage {
            text += &format!(", coverage {c:.3} (minimum {})", verify::MIN_COVERAGE);
        }
        text += "\n";
        for f in &r.failures {
            text += &format!(
                "  trial {}: {} (reproduce with seed {} stream {})\n",
                f.trial, f.message, f.rng.seed, f.rng.stream_id
            );
            for (i, c) in f.clouds.iter().enumerate() {
                text += &format!("  # cloud {i}\n{}", format_xyz(c));
            }
        }
        docs.push(json!({
            "suite": r.suite.name(),
            "trials": r.trials,
            "passes": r.passes,
            "passed": r.passed(),
            "coverage": r.coverage,
            "failures": r.failures.iter().map(|f| json!({
                "trial": f.trial,
                "seed": f.rng.seed,
                "stream_id": f.rng.stream_id,
                "message": f.message,
                "clouds": f.clouds.iter().map(format_xyz).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        }));
    }
    let all = reports.iter().all(|r| r.passed());
    out.emit(&text, json!({ "passed": all, "suites": docs }));
    if all {
        Ok(())
    } else {
        Err(Failure::Verify)
    }
}

fn cmd_sample(args: &SampleArgs, seed: u64, out: &Output) -> Result<(), Failure> {
    let cloud = sample_shape(args.shape, args.n as usize, &SeededRng::from_seed(seed))?;
    write_xyz(&cloud, &args.out)?;
    let text = format!("wrote {} points to {}\n", cloud.len(), args.out.display());
    out.emit(&text, json!({ "n": cloud.len(), "dim": cloud.dim(), "out": args.out }));
    Ok(())
}
