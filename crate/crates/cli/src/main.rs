use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use swcoreset::harness::datasets::DatasetSpec;
use swcoreset::harness::experiment::{
    desk_meyerson, run_experiment, summarize_rows, write_rows_csv, write_summary_json, ExperimentConfig,
};
use swcoreset::harness::lowerbound::{
    gen_lowerbound_stream, lowerbound_sweep, sweep_medians, LowerBoundSpec, SweepConfig,
};
use swcoreset::harness::verify::measure_with_random_probes;
use swcoreset::io::{read_stream_csv, read_weighted_csv, write_stream_csv, write_weighted_csv, CsvPoints};
use swcoreset::metric::unit_weights;
use swcoreset::{MeyersonConfig, RingConfig, SlidingWindowConfig, SlidingWindowCoreset, SolveConfig, StreamParams};

#[derive(Parser)]
#[command(name = "swcoreset", version, about = "Sliding-window coresets for (k,z)-clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a stream CSV generated from a dataset spec.
    Generate(GenerateArgs),
    /// Stream a CSV through the sliding-window coreset and dump the window coreset.
    Coreset(CoresetArgs),
    /// Cluster a weighted CSV with k-means++ and Lloyd iterations.
    Solve(SolveArgs),
    /// Run an experiment grid from a JSON config.
    Bench(BenchArgs),
    /// Emit the hard stream or run the minimal-target sweep over it.
    Lowerbound(LowerboundArgs),
    /// Measure online-coreset prefix error against the exact oracle.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SeedArg {
    /// Master seed; a fresh one is drawn and printed when omitted.
    #[arg(long)]
    seed: Option<u64>,
}

impl SeedArg {
    fn resolve(&self) -> u64 {
        self.seed.unwrap_or_else(|| {
            let s = rand::random::<u64>();
            eprintln!("seed: {s}");
            s
        })
    }
}

#[derive(Args)]
struct ProblemArgs {
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    z: u32,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Bound on the aspect ratio of the data.
    #[arg(long, default_value_t = 2f64.powi(32))]
    aspect: f64,
    /// Expected samples per online coreset.
    #[arg(long, visible_alias = "budget", default_value_t = 200.0)]
    target_samples: f64,
    /// Keep every point (lossless mode).
    #[arg(long)]
    exact: bool,
    /// Use the worst-case Meyerson constants instead of the desk-scale ones.
    #[arg(long)]
    worst_case_constants: bool,
}

impl ProblemArgs {
    fn params(&self, horizon: u64) -> StreamParams {
        StreamParams {
            epsilon: self.epsilon,
            delta: self.delta,
            ..StreamParams::new(self.k, self.z, self.aspect, horizon.max(2))
        }
    }

    fn ring(&self) -> RingConfig {
        if self.exact {
            return RingConfig::exact();
        }
        let meyerson = if self.worst_case_constants {
            MeyersonConfig::default()
        } else {
            desk_meyerson()
        };
        RingConfig {
            target_samples: Some(self.target_samples),
            meyerson,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Dataset spec as JSON (tagged by `kind`).
    #[arg(long)]
    spec: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CoresetArgs {
    /// Stream CSV (`id,timestamp,c1..cd`); `-` reads standard input.
    #[arg(long, default_value = "-")]
    input: String,
    /// Window length in timestamp units.
    #[arg(long)]
    window: u64,
    #[command(flatten)]
    problem: ProblemArgs,
    /// Upper bound on the stream length.
    #[arg(long, default_value_t = 1 << 32)]
    horizon: u64,
    /// Level-0 block size; defaults to twice the target.
    #[arg(long)]
    block_size: Option<usize>,
    /// Also write a JSON snapshot of the structure.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    /// Weighted CSV (`id,timestamp,c1..cd,weight`).
    #[arg(long)]
    input: PathBuf,
    /// Treat the input as an unweighted stream CSV.
    #[arg(long)]
    unweighted: bool,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    z: u32,
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[command(flatten)]
    seed: SeedArg,
    /// Centers CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment config as JSON; missing fields take their defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    seed: SeedArg,
    /// Per-run rows as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-cell summary as JSON.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct LowerboundArgs {
    /// Sweep config as JSON; flags below override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    d_prime: Option<usize>,
    #[arg(long)]
    tau: Option<u64>,
    /// Largest number of instances; the sweep covers 1..=gamma-max.
    #[arg(long)]
    gamma_max: Option<usize>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// Only write the stream with this many instances.
    #[arg(long)]
    emit: Option<usize>,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Stream CSV (`id,timestamp,c1..cd`).
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value_t = 20)]
    probes: usize,
    #[arg(long, default_value_t = 20)]
    sets: usize,
    #[command(flatten)]
    seed: SeedArg,
    /// Full report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn generate(args: GenerateArgs) -> Result<()> {
    let spec: DatasetSpec = read_json(&args.spec)?;
    let data = spec.build(args.seed.resolve())?;
    eprintln!("points: {}, window: {}", data.points.len(), data.window);
    let mut out = output(args.out.as_deref())?;
    write_stream_csv(&data.points, &mut out)?;
    out.flush()?;
    Ok(())
}

fn coreset(args: CoresetArgs) -> Result<()> {
    if args.window == 0 {
        bail!("--window must be positive");
    }
    let seed = args.seed.resolve();
    let input: Box<dyn Read> = if args.input == "-" {
        Box::new(io::stdin().lock())
    } else {
        Box::new(File::open(&args.input).with_context(|| format!("opening {}", args.input))?)
    };
    let config = SlidingWindowConfig {
        block_size: args.block_size,
        max_window: Some(args.window),
        ring: args.problem.ring(),
        ..Default::default()
    };
    let mut sw = SlidingWindowCoreset::new(args.problem.params(args.horizon), config, seed)?;
    for record in CsvPoints::new(BufReader::new(input), false) {
        sw.ingest(record?.point)?;
    }
    if sw.seen() == 0 {
        bail!("empty input stream");
    }
    let window = args.window.min(sw.seen()).min(sw.max_window());
    let coreset = sw.query(window)?;
    eprintln!(
        "ingested: {}, window: {}, coreset points: {}, stored points: {}",
        sw.seen(),
        window,
        coreset.len(),
        sw.stored_points()
    );
    if let Some(path) = &args.snapshot {
        sw.write_snapshot(BufWriter::new(File::create(path)?))?;
    }
    let mut out = output(args.out.as_deref())?;
    write_weighted_csv(&coreset, &mut out)?;
    out.flush()?;
    Ok(())
}

fn solve(args: SolveArgs) -> Result<()> {
    let points = if args.unweighted {
        unit_weights(&read_stream_csv(&args.input)?)
    } else {
        read_weighted_csv(&args.input)?
    };
    let config = SolveConfig {
        iterations: args.iterations,
        restarts: args.restarts,
        ..SolveConfig::new(args.k, args.z, args.seed.resolve())
    };
    let sol = swcoreset::weighted_kmeans(&points, &config)?;
    println!("cost: {}", sol.cost);
    if let Some(path) = &args.out {
        let mut out = output(Some(path))?;
        let dim = sol.centers.dim().unwrap_or(0);
        let header: Vec<String> = (1..=dim).map(|i| format!("c{i}")).collect();
        writeln!(out, "{}", header.join(","))?;
        for c in &sol.centers.centers {
            let row: Vec<String> = c.iter().map(f64::to_string).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
    } else {
        for c in &sol.centers.centers {
            let row: Vec<String> = c.iter().map(f64::to_string).collect();
            println!("{}", row.join(","));
        }
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let mut config: ExperimentConfig = match &args.spec {
        Some(p) => read_json(p)?,
        None => ExperimentConfig::default(),
    };
    config.seed = args.seed.resolve();
    if args.jobs.is_some() {
        config.jobs = args.jobs;
    }
    let result = run_experiment(&config)?;
    for f in &result.failures {
        eprintln!(
            "failed: {} k={} m={} seed={}: {}",
            f.algo.name(),
            f.k,
            f.m,
            f.seed,
            f.error
        );
    }
    for s in summarize_rows(&result.rows) {
        eprintln!(
            "{:>4} k={} m={}: median cost {:.6e}, mean size {:.1} over {} runs",
            s.algo.name(),
            s.k,
            s.m,
            s.median_cost,
            s.mean_coreset_size,
            s.runs
        );
    }
    let mut out = output(args.out.as_deref())?;
    write_rows_csv(&result.rows, &mut out)?;
    out.flush()?;
    if let Some(path) = &args.summary {
        write_summary_json(&result, BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}

fn lowerbound(args: LowerboundArgs) -> Result<()> {
    let mut config: SweepConfig = match &args.spec {
        Some(p) => read_json(p)?,
        None => SweepConfig::default(),
    };
    if let Some(v) = args.d_prime {
        config.d_prime = v;
    }
    if let Some(v) = args.tau {
        config.tau = v;
    }
    if let Some(v) = args.gamma_max {
        config.gammas = (1..=v).collect();
    }
    if let Some(v) = args.seeds {
        config.seeds = v;
    }
    if let Some(v) = args.k {
        config.k = v;
    }
    if let Some(v) = args.tolerance {
        config.tolerance = v;
    }
    let mut out = output(args.out.as_deref())?;
    if let Some(g) = args.emit {
        let stream = gen_lowerbound_stream(&LowerBoundSpec::new(config.d_prime, g, config.tau))?;
        eprintln!("points: {}", stream.len());
        write_stream_csv(&stream, &mut out)?;
        out.flush()?;
        return Ok(());
    }
    config.seed = args.seed.resolve();
    let rows = lowerbound_sweep(&config)?;
    writeln!(out, "gamma_lb,seed,length,min_target")?;
    for r in &rows {
        writeln!(out, "{},{},{},{}", r.gamma_lb, r.seed, r.length, r.min_target)?;
    }
    out.flush()?;
    for (g, m) in sweep_medians(&rows) {
        eprintln!("gamma_lb {g}: median minimal target {m}");
    }
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<()> {
    let stream = read_stream_csv(&args.input)?;
    if stream.is_empty() {
        bail!("empty input stream");
    }
    let params = args.problem.params((stream.len() as u64).next_power_of_two());
    let report = measure_with_random_probes(
        &stream,
        &params,
        &args.problem.ring(),
        args.probes,
        args.sets,
        args.seed.resolve(),
    )?;
    println!("max error {}", report.max_error);
    println!("samples {} stored {}", report.samples, report.stored);
    if let Some(path) = &args.out {
        serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), &report)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Coreset(a) => coreset(a),
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench(a),
        Command::Lowerbound(a) => lowerbound(a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
