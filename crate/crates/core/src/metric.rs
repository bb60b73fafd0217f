//! Points, distances and the (k,z)-clustering objective.
//!
//! `Cost(X, C) = sum_x w(x) * min_{c in C} dist(x, c)^z`. Every module in the
//! crate evaluates the objective through [`Metric::cost_z`] so that running
//! totals and offline recomputations agree bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default cap on distinct points for [`opt_cost_bruteforce`].
pub const BRUTEFORCE_CAP: usize = 12;

/// A stream point: coordinates plus identity and arrival time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub id: u64,
    pub timestamp: u64,
    pub coords: Vec<f64>,
}

impl Point {
    pub fn new(id: u64, timestamp: u64, coords: Vec<f64>) -> Self {
        Point { id, timestamp, coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// A point carrying a positive weight. Raw stream points have weight 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedPoint {
    pub point: Point,
    pub weight: f64,
}

impl WeightedPoint {
    pub fn new(point: Point, weight: f64) -> Self {
        debug_assert!(weight > 0.0, "weights must be positive");
        WeightedPoint { point, weight }
    }

    pub fn unit(point: Point) -> Self {
        WeightedPoint { point, weight: 1.0 }
    }

    pub fn coords(&self) -> &[f64] {
        &self.point.coords
    }

    pub fn timestamp(&self) -> u64 {
        self.point.timestamp
    }
}

/// Wraps raw points with unit weights.
pub fn unit_weights(points: &[Point]) -> Vec<WeightedPoint> {
    points.iter().cloned().map(WeightedPoint::unit).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    L1,
    Linf,
}

impl Metric {
    /// Unchecked distance; callers guarantee equal lengths.
    #[inline]
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Metric::Euclidean => sq_euclidean(a, b).sqrt(),
            Metric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Metric::Linf => a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
        }
    }

    /// `dist(a, b)^z`. Euclidean with z = 2 skips the square root.
    #[inline]
    pub fn cost_z(self, a: &[f64], b: &[f64], z: u32) -> f64 {
        match (self, z) {
            (Metric::Euclidean, 2) => sq_euclidean(a, b),
            (_, 1) => self.distance(a, b),
            _ => self.distance(a, b).powi(z as i32),
        }
    }

    /// Monotone stand-in for the distance that is cheaper to compare.
    #[inline]
    pub(crate) fn rank(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => sq_euclidean(a, b),
            _ => self.distance(a, b),
        }
    }

    /// Converts a [`Metric::rank`] value into `dist^z`.
    #[inline]
    pub(crate) fn rank_to_cost(self, rank: f64, z: u32) -> f64 {
        match (self, z) {
            (Metric::Euclidean, 2) => rank,
            (Metric::Euclidean, 1) => rank.sqrt(),
            (Metric::Euclidean, _) => rank.sqrt().powi(z as i32),
            (_, 1) => rank,
            _ => rank.powi(z as i32),
        }
    }
}

#[inline]
fn sq_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Checked distance between two points.
pub fn dist(p: &Point, q: &Point, metric: Metric) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    Ok(metric.distance(&p.coords, &q.coords))
}

/// Problem parameters shared by every streaming structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamParams {
    pub k: usize,
    pub z: u32,
    /// Declared bound on the ratio of largest to smallest pairwise distance.
    pub aspect_bound: f64,
    /// Upper bound on the stream length.
    pub horizon: u64,
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default)]
    pub metric: Metric,
}

impl StreamParams {
    pub fn new(k: usize, z: u32, aspect_bound: f64, horizon: u64) -> Self {
        StreamParams {
            k,
            z,
            aspect_bound,
            horizon,
            epsilon: 0.5,
            delta: 0.1,
            metric: Metric::Euclidean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("k", "must be positive"));
        }
        if self.z == 0 {
            return Err(invalid("z", "must be positive"));
        }
        if !(self.aspect_bound >= 2.0) || !self.aspect_bound.is_finite() {
            return Err(invalid("aspect_bound", "must be a finite real >= 2"));
        }
        if self.horizon == 0 {
            return Err(invalid("horizon", "must be positive"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid("epsilon", "must lie in (0,1)"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("delta", "must lie in (0,1)"));
        }
        Ok(())
    }

    /// `log2 N`, floored at 1 so that log factors never vanish.
    pub fn log_n(&self) -> f64 {
        (self.horizon as f64).log2().max(1.0)
    }

    pub fn log_delta(&self) -> f64 {
        self.aspect_bound.log2()
    }
}

/// A set of cluster centers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CenterSet {
    pub centers: Vec<Vec<f64>>,
}

impl CenterSet {
    pub fn new(centers: Vec<Vec<f64>>) -> Self {
        CenterSet { centers }
    }

    pub fn from_points(points: &[Point]) -> Self {
        CenterSet {
            centers: points.iter().map(|p| p.coords.clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.centers.first().map(Vec::len)
    }

    /// Index of the nearest center and its `dist^z`. Ties go to the lower index.
    #[inline]
    pub fn nearest(&self, x: &[f64], metric: Metric, z: u32) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centers.iter().enumerate() {
            let d = metric.rank(x, c);
            if d < best.1 {
                best = (i, d);
            }
        }
        (best.0, metric.rank_to_cost(best.1, z))
    }
}

/// Weighted (k,z) cost of `points` against `centers`. Empty point set costs 0.
pub fn cost(points: &[WeightedPoint], centers: &CenterSet, z: u32, metric: Metric) -> Result<f64> {
    if centers.is_empty() {
        return Err(Error::EmptyInput("center set"));
    }
    let d = centers.dim().unwrap_or(0);
    if centers.centers.iter().any(|c| c.len() != d) {
        return Err(invalid("centers", "centers have mixed dimensions"));
    }
    let mut total = 0.0;
    for p in points {
        if p.point.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.point.dim(),
            });
        }
        total += p.weight * centers.nearest(p.coords(), metric, z).1;
    }
    Ok(total)
}

/// Unweighted cost of raw points; skips the per-point checks of [`cost`].
pub fn cost_unweighted(points: &[Point], centers: &CenterSet, z: u32, metric: Metric) -> f64 {
    points.iter().map(|p| centers.nearest(&p.coords, metric, z).1).sum()
}

/// Exact discrete optimum with centers restricted to input points.
///
/// Enumerates every subset of `min(k, #distinct)` distinct input points.
pub fn opt_cost_bruteforce(points: &[WeightedPoint], k: usize, z: u32, metric: Metric) -> Result<(f64, CenterSet)> {
    opt_cost_bruteforce_capped(points, k, z, metric, BRUTEFORCE_CAP)
}

pub fn opt_cost_bruteforce_capped(
    points: &[WeightedPoint],
    k: usize,
    z: u32,
    metric: Metric,
    cap: usize,
) -> Result<(f64, CenterSet)> {
    if points.is_empty() {
        return Err(Error::EmptyInput("points"));
    }
    if k == 0 {
        return Err(invalid("k", "must be positive"));
    }
    // Collapse duplicates so the cap applies to distinct sites.
    let mut sites: Vec<(Vec<f64>, f64)> = Vec::new();
    for p in points {
        match sites.iter_mut().find(|(c, _)| c.as_slice() == p.coords()) {
            Some((_, w)) => *w += p.weight,
            None => sites.push((p.coords().to_vec(), p.weight)),
        }
    }
    let n = sites.len();
    if n > cap || n >= usize::BITS as usize {
        return Err(Error::OracleCapExceeded { cap, got: n });
    }
    let size = k.min(n) as u32;
    let mut best_cost = f64::INFINITY;
    let mut best_mask = 0usize;
    for mask in 0usize..(1 << n) {
        if mask.count_ones() != size {
            continue;
        }
        let total: f64 = sites
            .iter()
            .map(|(x, w)| {
                let m = (0..n)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| metric.cost_z(x, &sites[i].0, z))
                    .fold(f64::INFINITY, f64::min);
                w * m
            })
            .sum();
        if total < best_cost {
            best_cost = total;
            best_mask = mask;
        }
    }
    let centers = (0..n)
        .filter(|i| best_mask & (1 << i) != 0)
        .map(|i| sites[i].0.clone())
        .collect();
    Ok((best_cost, CenterSet::new(centers)))
}
