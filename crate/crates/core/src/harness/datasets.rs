use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::harness::lowerbound::{gen_lowerbound_stream, LowerBoundSpec};
use crate::metric::Point;

/// Environment variable naming the SKIN data file.
pub const SKIN_ENV: &str = "SWCORESET_SKIN";
pub const SKIN_ROWS: usize = 245_057;

/// Spherical Gaussian component: `count` draws around `mean`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub mean: Vec<f64>,
    pub stddev: f64,
    pub count: usize,
}

impl Component {
    pub fn new(mean: Vec<f64>, stddev: f64, count: usize) -> Self {
        Component { mean, stddev, count }
    }

    fn validate(&self) -> Result<()> {
        if !(self.stddev > 0.0) || !self.stddev.is_finite() {
            return Err(invalid("stddev", "must be positive and finite"));
        }
        if self.mean.is_empty() {
            return Err(invalid("mean", "must have at least one coordinate"));
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mean
            .iter()
            .map(|m| {
                let g: f64 = StandardNormal.sample(rng);
                m + self.stddev * g
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    GaussianMixture {
        components: Vec<Component>,
        /// Emitted first; these points are expired in the evaluation window.
        #[serde(default)]
        prepend: Vec<Component>,
        /// Shuffle the (non-prepended) component points.
        #[serde(default)]
        interleave: bool,
        /// Evaluation window; defaults to the non-prepended point count.
        #[serde(default)]
        window: Option<u64>,
    },
    SkinCsv {
        #[serde(default)]
        path: Option<PathBuf>,
    },
    NoisySkin {
        #[serde(default)]
        path: Option<PathBuf>,
    },
    Lowerbound(LowerBoundSpec),
}

/// A materialized stream with its evaluation window.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub points: Vec<Point>,
    pub window: u64,
}

impl Dataset {
    /// The `window` most recent points.
    pub fn window_points(&self) -> &[Point] {
        let n = self.points.len();
        &self.points[n - (self.window as usize).min(n)..]
    }
}

impl DatasetSpec {
    /// Two 2-d Gaussians of `per_cluster` points at (±10, ∓10), one far point
    /// at (1e5, 1e5) and two prepended expired outliers, all with σ = 2.75.
    pub fn two_cluster_synthetic(per_cluster: usize) -> Self {
        let s = 2.75;
        DatasetSpec::GaussianMixture {
            components: vec![
                Component::new(vec![-10.0, 10.0], s, per_cluster),
                Component::new(vec![10.0, -10.0], s, per_cluster),
                Component::new(vec![100_000.0, 100_000.0], s, 1),
            ],
            prepend: vec![
                Component::new(vec![-100_000.0, 100_000.0], s, 1),
                Component::new(vec![-100_000.0, -100_000.0], s, 1),
            ],
            interleave: false,
            window: None,
        }
    }

    pub fn build(&self, seed: u64) -> Result<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            DatasetSpec::GaussianMixture {
                components,
                prepend,
                interleave,
                window,
            } => {
                let points = gen_gaussian_mixture(components, prepend, *interleave, &mut rng)?;
                let body: usize = components.iter().map(|c| c.count).sum();
                let window = window.unwrap_or(body as u64);
                Ok(Dataset { points, window })
            }
            DatasetSpec::SkinCsv { path } => {
                let points = load_skin_dataset(&resolve_skin(path.as_deref())?)?;
                let window = points.len() as u64;
                Ok(Dataset { points, window })
            }
            DatasetSpec::NoisySkin { path } => {
                let skin = load_skin_dataset(&resolve_skin(path.as_deref())?)?;
                Ok(build_noisy_skin_stream(&skin, &mut rng))
            }
            DatasetSpec::Lowerbound(spec) => {
                let points = gen_lowerbound_stream(spec)?;
                let window = points.len() as u64;
                Ok(Dataset { points, window })
            }
        }
    }
}

fn resolve_skin(path: Option<&Path>) -> Result<PathBuf> {
    path.map(Path::to_path_buf)
        .or_else(skin_path)
        .ok_or_else(|| invalid("path", format!("no SKIN file given and {SKIN_ENV} is unset")))
}

/// Path of the SKIN file from the environment, if it exists.
pub fn skin_path() -> Option<PathBuf> {
    std::env::var_os(SKIN_ENV).map(PathBuf::from).filter(|p| p.is_file())
}

fn number(points: Vec<Vec<f64>>) -> Vec<Point> {
    points
        .into_iter()
        .enumerate()
        .map(|(i, c)| Point::new(i as u64 + 1, i as u64 + 1, c))
        .collect()
}

/// Prepended points first, then each component in order (or shuffled when
/// `interleave`). Ids and timestamps run 1..=n.
pub fn gen_gaussian_mixture<R: Rng + ?Sized>(
    components: &[Component],
    prepend: &[Component],
    interleave: bool,
    rng: &mut R,
) -> Result<Vec<Point>> {
    let dim = components.iter().chain(prepend).map(|c| c.mean.len()).next();
    for c in components.iter().chain(prepend) {
        c.validate()?;
        if Some(c.mean.len()) != dim {
            return Err(Error::DimensionMismatch {
                expected: dim.unwrap_or(0),
                got: c.mean.len(),
            });
        }
    }
    let mut out: Vec<Vec<f64>> = Vec::new();
    for c in prepend {
        out.extend((0..c.count).map(|_| c.draw(rng)));
    }
    let head = out.len();
    for c in components {
        out.extend((0..c.count).map(|_| c.draw(rng)));
    }
    if interleave {
        out[head..].shuffle(rng);
    }
    Ok(number(out))
}

/// Reads the UCI skin segmentation table (whitespace, tab or comma
/// separated, four numeric columns) and standardizes each column to zero mean
/// and unit population standard deviation.
pub fn load_skin_dataset(path: &Path) -> Result<Vec<Point>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|f| !f.is_empty())
            .collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected 4 columns, got {}", fields.len()),
            });
        }
        let row = fields
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 1,
                    msg: format!("`{f}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("skin dataset"));
    }
    standardize(&mut rows);
    Ok(number(rows))
}

/// Zero mean and unit population standard deviation per column; constant
/// columns are only centered.
pub fn standardize(rows: &mut [Vec<f64>]) {
    let n = rows.len() as f64;
    let d = rows[0].len();
    for j in 0..d {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        for r in rows.iter_mut() {
            r[j] -= mean;
            if sd > 0.0 {
                r[j] /= sd;
            }
        }
    }
}

/// Two expired σ = 2.75 points, then the SKIN rows, then 100 + 100 unit-σ
/// points at (−10, 10, 0, 0) and (10, −10, 0, 0) and one at (500, 500, 0, 0).
/// The window covers everything but the first two points.
pub fn build_noisy_skin_stream<R: Rng + ?Sized>(skin: &[Point], rng: &mut R) -> Dataset {
    let pad = |x: f64, y: f64| vec![x, y, 0.0, 0.0];
    let expired = [
        Component::new(pad(-10.0, 10.0), 2.75, 1),
        Component::new(pad(-10.0, -10.0), 2.75, 1),
    ];
    let noise = [
        Component::new(pad(-10.0, 10.0), 1.0, 100),
        Component::new(pad(10.0, -10.0), 1.0, 100),
        Component::new(pad(500.0, 500.0), 1.0, 1),
    ];
    let mut rows: Vec<Vec<f64>> = expired.iter().map(|c| c.draw(rng)).collect();
    rows.extend(skin.iter().map(|p| p.coords.clone()));
    for c in &noise {
        rows.extend((0..c.count).map(|_| c.draw(rng)));
    }
    let window = rows.len() as u64 - 2;
    Dataset {
        points: number(rows),
        window,
    }
}
