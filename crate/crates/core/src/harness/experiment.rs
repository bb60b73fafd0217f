use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{histogram_coreset, importance_expiry_coreset, uniform_coreset, BaselineConfig};
use crate::error::{invalid, Error, Result};
use crate::harness::datasets::{build_noisy_skin_stream, load_skin_dataset, skin_path, Dataset, DatasetSpec};
use crate::metric::{cost, unit_weights, Metric, Point, StreamParams, WeightedPoint};
use crate::meyerson::MeyersonConfig;
use crate::ring::RingConfig;
use crate::solver::{derive_seed, weighted_kmeans, SolveConfig};
use crate::window::{SlidingWindowConfig, SlidingWindowCoreset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    /// Lloyd on the full true window.
    Off,
    Uni,
    Hist,
    Imp,
    /// Sliding-window coreset.
    Sw,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Off => "off",
            Algo::Uni => "uni",
            Algo::Hist => "hist",
            Algo::Imp => "imp",
            Algo::Sw => "sw",
        }
    }
}

impl std::str::FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "off" => Algo::Off,
            "uni" => Algo::Uni,
            "hist" => Algo::Hist,
            "imp" => Algo::Imp,
            "sw" => Algo::Sw,
            other => return Err(invalid("algorithm", format!("unknown `{other}`"))),
        })
    }
}

/// Sizing of the sliding-window coreset relative to the budget `m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwSettings {
    /// Expected samples per block, as a multiple of `m`.
    pub target_factor: f64,
    pub aspect_bound: f64,
    pub meyerson: MeyersonConfig,
}

impl Default for SwSettings {
    fn default() -> Self {
        SwSettings {
            target_factor: 1.0,
            aspect_bound: 2f64.powi(32),
            meyerson: desk_meyerson(),
        }
    }
}

/// Meyerson settings that keep a handful of centers on desk-sized streams.
pub fn desk_meyerson() -> MeyersonConfig {
    MeyersonConfig {
        repetitions: Some(1),
        capacity: Some(16),
        guess_floor: 0.01,
        ..Default::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub algorithms: Vec<Algo>,
    /// Cartesian grid of `ks × ms` unless `cells` is given.
    pub ks: Vec<usize>,
    pub ms: Vec<usize>,
    /// Explicit `(k, m)` cells.
    pub cells: Option<Vec<(usize, usize)>>,
    pub repetitions: usize,
    pub seed: u64,
    pub z: u32,
    pub iterations: usize,
    pub restarts: usize,
    pub theta: f64,
    pub sw: SwSettings,
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
    /// Record wall-clock times (makes output nondeterministic).
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSpec::two_cluster_synthetic(100_000),
            algorithms: vec![Algo::Off, Algo::Uni, Algo::Hist, Algo::Imp, Algo::Sw],
            ks: vec![3],
            ms: vec![10],
            cells: None,
            repetitions: 3,
            seed: 0,
            z: 2,
            iterations: 3,
            restarts: 1,
            theta: 8.0,
            sw: SwSettings::default(),
            jobs: None,
            timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn grid(&self) -> Vec<(usize, usize)> {
        match &self.cells {
            Some(c) => c.clone(),
            None => self
                .ks
                .iter()
                .flat_map(|&k| self.ms.iter().map(move |&m| (k, m)))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(invalid("algorithms", "must not be empty"));
        }
        if self.repetitions == 0 {
            return Err(invalid("repetitions", "must be at least 1"));
        }
        let grid = self.grid();
        if grid.is_empty() {
            return Err(invalid("cells", "grid is empty"));
        }
        if grid.iter().any(|&(k, m)| k == 0 || m == 0) {
            return Err(invalid("cells", "k and m must be positive"));
        }
        SolveConfig {
            k: 1,
            z: self.z,
            iterations: self.iterations,
            restarts: self.restarts,
            ..Default::default()
        }
        .validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub algo: Algo,
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub true_cost: f64,
    pub coreset_cost: f64,
    pub coreset_size: usize,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub algo: Algo,
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub algo: Algo,
    pub k: usize,
    pub m: usize,
    pub runs: usize,
    pub mean_cost: f64,
    pub std_cost: f64,
    pub median_cost: f64,
    pub mean_coreset_size: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<CellFailure>,
}

/// Source of per-repetition datasets; the SKIN table is read once.
enum Source {
    Spec(DatasetSpec),
    NoisySkin(Arc<Vec<Point>>),
}

impl Source {
    fn new(spec: &DatasetSpec) -> Result<Self> {
        Ok(match spec {
            DatasetSpec::NoisySkin { path } => {
                let path = path
                    .clone()
                    .or_else(skin_path)
                    .ok_or_else(|| invalid("path", "SKIN file not found"))?;
                Source::NoisySkin(Arc::new(load_skin_dataset(&path)?))
            }
            other => Source::Spec(other.clone()),
        })
    }

    fn build(&self, seed: u64) -> Result<Dataset> {
        match self {
            Source::Spec(s) => s.build(seed),
            Source::NoisySkin(skin) => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                Ok(build_noisy_skin_stream(skin, &mut rng))
            }
        }
    }
}

/// Seed of repetition `rep`; shared by the dataset and every algorithm.
pub fn repetition_seed(master: u64, rep: usize) -> u64 {
    derive_seed(master, rep as u64)
}

/// Coreset produced by `algo` with budget `m` on `data`.
pub fn summarize(
    algo: Algo,
    data: &Dataset,
    k: usize,
    m: usize,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<WeightedPoint>> {
    use rand::SeedableRng;
    let window = data.window_points();
    let baseline = BaselineConfig {
        budget: m,
        seed,
        theta: config.theta,
        z: config.z,
        metric: Metric::Euclidean,
        ..Default::default()
    };
    match algo {
        Algo::Off => Ok(unit_weights(window)),
        Algo::Uni => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            Ok(uniform_coreset(window, m, &mut rng))
        }
        Algo::Hist => histogram_coreset(&data.points, &baseline),
        Algo::Imp => importance_expiry_coreset(&data.points, data.window, &baseline),
        Algo::Sw => {
            let n = data.points.len() as u64;
            let params = StreamParams::new(k, config.z, config.sw.aspect_bound, n.next_power_of_two().max(2));
            let target = config.sw.target_factor * m as f64;
            let sw_config = SlidingWindowConfig {
                max_window: Some(data.window),
                ring: RingConfig {
                    target_samples: Some(target),
                    meyerson: config.sw.meyerson.clone(),
                    ..Default::default()
                },
                ..Default::default()
            };
            let mut sw = SlidingWindowCoreset::new(params, sw_config, seed)?;
            for p in &data.points {
                sw.ingest(p.clone())?;
            }
            sw.query(data.window)
        }
    }
}

fn run_cell(algo: Algo, data: &Dataset, k: usize, m: usize, config: &ExperimentConfig, seed: u64) -> Result<ResultRow> {
    let start = Instant::now();
    let algo_seed = derive_seed(seed, algo as u64 + 1);
    let coreset = summarize(algo, data, k, m, config, algo_seed)?;
    let solve = SolveConfig {
        k,
        z: config.z,
        iterations: config.iterations,
        restarts: config.restarts,
        seed: derive_seed(algo_seed, 0xc0de),
        metric: Metric::Euclidean,
    };
    let sol = weighted_kmeans(&coreset, &solve)?;
    let true_cost = cost(
        &unit_weights(data.window_points()),
        &sol.centers,
        config.z,
        Metric::Euclidean,
    )?;
    let wall_ms = if config.timing {
        start.elapsed().as_millis() as u64
    } else {
        0
    };
    Ok(ResultRow {
        algo,
        k,
        m,
        seed,
        true_cost,
        coreset_cost: sol.cost,
        coreset_size: coreset.len(),
        wall_ms,
    })
}

/// Runs every (repetition, k, m, algorithm) cell. Repetitions run in
/// parallel; rows come back ordered by repetition, then grid, then algorithm.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let source = Source::new(&config.dataset)?;
    let grid = config.grid();
    let work = |rep: usize| -> Vec<std::result::Result<ResultRow, CellFailure>> {
        let seed = repetition_seed(config.seed, rep);
        let data = match source.build(seed) {
            Ok(d) => d,
            Err(e) => {
                return grid
                    .iter()
                    .flat_map(|&(k, m)| config.algorithms.iter().map(move |&a| (a, k, m)))
                    .map(|(algo, k, m)| {
                        Err(CellFailure {
                            algo,
                            k,
                            m,
                            seed,
                            error: e.to_string(),
                        })
                    })
                    .collect()
            }
        };
        let mut out = Vec::new();
        for &(k, m) in &grid {
            for &algo in &config.algorithms {
                out.push(run_cell(algo, &data, k, m, config, seed).map_err(|e| CellFailure {
                    algo,
                    k,
                    m,
                    seed,
                    error: e.to_string(),
                }));
            }
        }
        out
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.unwrap_or(0))
        .build()
        .map_err(|e| invalid("jobs", e.to_string()))?;
    let results: Vec<Vec<_>> = pool.install(|| (0..config.repetitions).into_par_iter().map(work).collect());
    let mut out = ExperimentResult::default();
    for r in results.into_iter().flatten() {
        match r {
            Ok(row) => out.rows.push(row),
            Err(f) => out.failures.push(f),
        }
    }
    Ok(out)
}

pub fn write_rows_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "algo",
        "k",
        "m",
        "seed",
        "true_cost",
        "coreset_cost",
        "coreset_size",
        "wall_ms",
    ])?;
    for r in rows {
        w.write_record([
            r.algo.name().to_string(),
            r.k.to_string(),
            r.m.to_string(),
            r.seed.to_string(),
            r.true_cost.to_string(),
            r.coreset_cost.to_string(),
            r.coreset_size.to_string(),
            r.wall_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per (algorithm, k, m) statistics of the true-window cost.
pub fn summarize_rows(rows: &[ResultRow]) -> Vec<CellSummary> {
    let mut groups: BTreeMap<(usize, usize, Algo), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.k, r.m, r.algo)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((k, m, algo), rs)| {
            let n = rs.len() as f64;
            let mut costs: Vec<f64> = rs.iter().map(|r| r.true_cost).collect();
            let mean = costs.iter().sum::<f64>() / n;
            let var = if rs.len() > 1 {
                costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            CellSummary {
                algo,
                k,
                m,
                runs: rs.len(),
                mean_cost: mean,
                std_cost: var.sqrt(),
                median_cost: median(&mut costs),
                mean_coreset_size: rs.iter().map(|r| r.coreset_size as f64).sum::<f64>() / n,
            }
        })
        .collect()
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    cells: Vec<CellSummary>,
    failures: &'a [CellFailure],
}

pub fn write_summary_json<W: Write>(result: &ExperimentResult, out: W) -> Result<()> {
    serde_json::to_writer_pretty(
        out,
        &SummaryFile {
            cells: summarize_rows(&result.rows),
            failures: &result.failures,
        },
    )?;
    Ok(())
}
