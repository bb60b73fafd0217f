//! Weighted k-means++ seeding and Lloyd iteration.
//!
//! For `z = 2` the update step is the weighted mean of each cluster. For
//! `z = 1` it is the weighted medoid among the cluster's members.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::metric::{cost, CenterSet, Metric, WeightedPoint};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub k: usize,
    pub z: u32,
    pub iterations: usize,
    pub restarts: usize,
    pub seed: u64,
    pub metric: Metric,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            k: 3,
            z: 2,
            iterations: 10,
            restarts: 1,
            seed: 0,
            metric: Metric::Euclidean,
        }
    }
}

impl SolveConfig {
    pub fn new(k: usize, z: u32, seed: u64) -> Self {
        SolveConfig {
            k,
            z,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("k", "must be at least 1"));
        }
        if !(1..=2).contains(&self.z) {
            return Err(invalid("z", "solver supports z = 1 or z = 2"));
        }
        if self.iterations == 0 {
            return Err(invalid("iterations", "must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(invalid("restarts", "must be at least 1"));
        }
        Ok(())
    }
}

/// Result of seeding: chosen input indices and whether any repeat.
#[derive(Clone, Debug, PartialEq)]
pub struct Seeding {
    pub centers: CenterSet,
    pub indices: Vec<usize>,
    pub duplicates: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub centers: CenterSet,
    pub cost: f64,
}

fn check_points(points: &[WeightedPoint]) -> Result<usize> {
    let first = points.first().ok_or(Error::EmptyInput("points"))?;
    let dim = first.point.dim();
    for p in points {
        if p.point.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.point.dim(),
            });
        }
        if !(p.weight >= 0.0) || !p.weight.is_finite() {
            return Err(invalid(
                "weight",
                format!("{} is not a finite non-negative weight", p.weight),
            ));
        }
    }
    if !points.iter().any(|p| p.weight > 0.0) {
        return Err(Error::EmptyInput("points with positive weight"));
    }
    Ok(dim)
}

/// D^z seeding: the first center by weight, each next one proportional to
/// `weight * dist^z` to the nearest chosen center.
pub fn kmeanspp_init<R: Rng + ?Sized>(
    points: &[WeightedPoint],
    k: usize,
    z: u32,
    metric: Metric,
    rng: &mut R,
) -> Result<Seeding> {
    check_points(points)?;
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    let weights: Vec<f64> = points.iter().map(|p| p.weight).collect();
    let first = WeightedIndex::new(&weights)
        .map_err(|e| invalid("weight", e.to_string()))?
        .sample(rng);
    let mut indices = vec![first];
    let mut best: Vec<f64> = points
        .iter()
        .map(|p| metric.cost_z(p.coords(), points[first].coords(), z))
        .collect();
    let mut duplicates = false;
    while indices.len() < k {
        let scores: Vec<f64> = best.iter().zip(&weights).map(|(d, w)| d * w).collect();
        let next = match WeightedIndex::new(&scores) {
            Ok(dist) => dist.sample(rng),
            Err(_) => {
                duplicates = true;
                indices[0]
            }
        };
        indices.push(next);
        for (b, p) in best.iter_mut().zip(points) {
            *b = b.min(metric.cost_z(p.coords(), points[next].coords(), z));
        }
    }
    let centers = CenterSet::new(indices.iter().map(|&i| points[i].coords().to_vec()).collect());
    Ok(Seeding {
        centers,
        indices,
        duplicates,
    })
}

fn assign(points: &[WeightedPoint], centers: &CenterSet, z: u32, metric: Metric) -> (Vec<usize>, f64) {
    let mut total = 0.0;
    let labels = points
        .iter()
        .map(|p| {
            let (i, c) = centers.nearest(p.coords(), metric, z);
            total += p.weight * c;
            i
        })
        .collect();
    (labels, total)
}

fn weighted_medoid(points: &[WeightedPoint], members: &[usize], metric: Metric) -> Vec<f64> {
    let mut best = (f64::INFINITY, members[0]);
    for &c in members {
        let s: f64 = members
            .iter()
            .map(|&m| points[m].weight * metric.distance(points[m].coords(), points[c].coords()))
            .sum();
        if s < best.0 {
            best = (s, c);
        }
    }
    points[best.1].coords().to_vec()
}

/// One assign-then-update round.
fn lloyd_step(points: &[WeightedPoint], centers: &CenterSet, z: u32, metric: Metric) -> CenterSet {
    let k = centers.len();
    let dim = points[0].point.dim();
    let (labels, _) = assign(points, centers, z, metric);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        if points[i].weight > 0.0 {
            members[l].push(i);
        }
    }
    let mut next: Vec<Vec<f64>> = members
        .iter()
        .enumerate()
        .map(|(c, m)| {
            if m.is_empty() {
                centers.centers[c].clone()
            } else if z == 2 {
                let mut acc = vec![0.0; dim];
                let mut wsum = 0.0;
                for &i in m {
                    let w = points[i].weight;
                    wsum += w;
                    for (a, x) in acc.iter_mut().zip(points[i].coords()) {
                        *a += w * x;
                    }
                }
                acc.iter().map(|a| a / wsum).collect()
            } else {
                weighted_medoid(points, m, metric)
            }
        })
        .collect();
    for c in 0..k {
        if members[c].is_empty() {
            let current = CenterSet::new(next.clone());
            let far = points
                .iter()
                .map(|p| p.weight * current.nearest(p.coords(), metric, z).1)
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
                )
                .0;
            next[c] = points[far].coords().to_vec();
        }
    }
    CenterSet::new(next)
}

/// Runs `config.iterations` Lloyd rounds; returns the final centers and
/// their weighted cost.
pub fn lloyd_iterate(points: &[WeightedPoint], centers: &CenterSet, config: &SolveConfig) -> Result<(CenterSet, f64)> {
    let trace = lloyd_trace(points, centers, config)?;
    Ok(trace.into_iter().last().expect("at least one iteration"))
}

/// Like [`lloyd_iterate`] but returns the centers and cost after every round.
pub fn lloyd_trace(
    points: &[WeightedPoint],
    centers: &CenterSet,
    config: &SolveConfig,
) -> Result<Vec<(CenterSet, f64)>> {
    config.validate()?;
    let dim = check_points(points)?;
    if centers.is_empty() {
        return Err(Error::EmptyInput("centers"));
    }
    if centers.dim() != Some(dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: centers.dim().unwrap_or(0),
        });
    }
    let mut current = centers.clone();
    let mut out = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        current = lloyd_step(points, &current, config.z, config.metric);
        let c = cost(points, &current, config.z, config.metric)?;
        out.push((current.clone(), c));
    }
    Ok(out)
}

/// Seed of restart `r` under master seed `seed`.
pub fn derive_seed(seed: u64, r: u64) -> u64 {
    let mut x = seed ^ r.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn single_run(points: &[WeightedPoint], config: &SolveConfig, seed: u64) -> Result<Solution> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = kmeanspp_init(points, config.k, config.z, config.metric, &mut rng)?;
    let (centers, cost) = lloyd_iterate(points, &init.centers, config)?;
    Ok(Solution { centers, cost })
}

/// Best of `restarts` seeded k-means++ plus Lloyd runs. Restarts run in
/// parallel; ties go to the lowest restart index.
pub fn weighted_kmeans(points: &[WeightedPoint], config: &SolveConfig) -> Result<Solution> {
    config.validate()?;
    check_points(points)?;
    let runs: Vec<Result<Solution>> = (0..config.restarts as u64)
        .into_par_iter()
        .map(|r| single_run(points, config, derive_seed(config.seed, r)))
        .collect();
    let mut best: Option<Solution> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().is_none_or(|b| run.cost < b.cost) {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts >= 1"))
}
