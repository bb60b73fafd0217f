//! Comparison summaries with a fixed point budget `m`: uniform sampling over
//! the window, distance-proportional importance sampling over the whole
//! stream (histogram style), and the same importance sampler with forced
//! expiry of points that left the window.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::metric::{Metric, Point, WeightedPoint};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// Points stored, `m`.
    pub budget: usize,
    /// Window length; only used in expiry mode.
    pub window: Option<u64>,
    pub seed: u64,
    pub expiry: bool,
    /// Deletion trigger: before an arrival, if the mean cost of the last `m`
    /// arrivals exceeds `theta` times the running mean, the oldest stored
    /// point is folded into its nearest neighbour. `inf` disables it.
    pub theta: f64,
    /// Keep every point at positive distance (no random rejection).
    pub exact: bool,
    pub z: u32,
    pub metric: Metric,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            budget: 10,
            window: None,
            seed: 0,
            expiry: false,
            theta: 8.0,
            exact: false,
            z: 2,
            metric: Metric::Euclidean,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(invalid("budget", "must be positive"));
        }
        if self.expiry && self.window.is_none_or(|w| w == 0) {
            return Err(invalid("window", "expiry mode needs a positive window"));
        }
        if !(self.theta > 0.0) {
            return Err(invalid("theta", "must be positive"));
        }
        Ok(())
    }
}

/// `m` draws without replacement, each weighted `|window| / m`; the whole
/// window with unit weights when it has at most `m` points.
pub fn uniform_coreset<R: Rng + ?Sized>(window: &[Point], m: usize, rng: &mut R) -> Vec<WeightedPoint> {
    if window.len() <= m {
        return window.iter().cloned().map(WeightedPoint::unit).collect();
    }
    let w = window.len() as f64 / m as f64;
    let mut idx = sample(rng, window.len(), m).into_vec();
    idx.sort_unstable();
    idx.into_iter()
        .map(|i| WeightedPoint::new(window[i].clone(), w))
        .collect()
}

/// Streaming importance sampler shared by the histogram and expiry variants.
#[derive(Clone, Debug)]
pub struct ImportanceSampler {
    config: BaselineConfig,
    stored: Vec<WeightedPoint>,
    running_cost: f64,
    seen: u64,
    recent: VecDeque<f64>,
    deletions: u64,
    rng: ChaCha8Rng,
}

impl ImportanceSampler {
    pub fn new(config: BaselineConfig) -> Result<Self> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(ImportanceSampler {
            stored: Vec::with_capacity(config.budget + 1),
            recent: VecDeque::with_capacity(config.budget),
            config,
            running_cost: 0.0,
            seen: 0,
            deletions: 0,
            rng,
        })
    }

    pub fn ingest(&mut self, x: &Point) {
        let m = self.config.budget;
        if self.config.expiry {
            let w = self.config.window.expect("validated");
            let cutoff = x.timestamp.saturating_sub(w - 1);
            self.stored.retain(|p| p.timestamp() >= cutoff);
        }
        self.maybe_delete();
        self.seen += 1;
        let Some((nearest, d)) = self.nearest(x.coords.as_slice()) else {
            self.stored.push(WeightedPoint::unit(x.clone()));
            return;
        };
        self.running_cost += d;
        if self.recent.len() == m {
            self.recent.pop_front();
        }
        self.recent.push_back(d);
        let p = if d <= 0.0 {
            0.0
        } else if self.config.exact {
            1.0
        } else {
            (m as f64 * d / self.running_cost).min(1.0)
        };
        let keep = p >= 1.0 || (p > 0.0 && self.rng.random::<f64>() < p);
        if keep {
            self.stored.push(WeightedPoint::unit(x.clone()));
        } else {
            self.stored[nearest].weight += 1.0;
        }
        if self.stored.len() > m {
            self.merge_closest_pair();
        }
    }

    fn nearest(&self, x: &[f64]) -> Option<(usize, f64)> {
        self.stored
            .iter()
            .map(|p| self.config.metric.cost_z(x, p.coords(), self.config.z))
            .enumerate()
            .fold(None, |acc, (i, d)| match acc {
                Some((_, best)) if best <= d => acc,
                _ => Some((i, d)),
            })
    }

    fn merge_closest_pair(&mut self) {
        let n = self.stored.len();
        let mut best = (f64::INFINITY, 0, 1);
        for i in 0..n {
            for j in i + 1..n {
                let d = self
                    .config
                    .metric
                    .distance(self.stored[i].coords(), self.stored[j].coords());
                if d < best.0 {
                    best = (d, i, j);
                }
            }
        }
        let (_, i, j) = best;
        let (keep, drop) = if self.stored[j].weight > self.stored[i].weight {
            (j, i)
        } else {
            (i, j)
        };
        self.stored[keep].weight += self.stored[drop].weight;
        self.stored.remove(drop);
    }

    fn maybe_delete(&mut self) {
        let m = self.config.budget;
        if !self.config.theta.is_finite() || self.seen < 2 * m as u64 || self.recent.len() < m || self.stored.len() < 2
        {
            return;
        }
        let recent_mean = self.recent.iter().sum::<f64>() / m as f64;
        let mean = self.running_cost / self.seen as f64;
        if recent_mean > self.config.theta * mean {
            let oldest = (0..self.stored.len())
                .min_by_key(|&i| self.stored[i].timestamp())
                .expect("nonempty");
            let gone = self.stored.remove(oldest);
            if let Some((i, _)) = self.nearest(gone.coords()) {
                self.stored[i].weight += gone.weight;
            }
            self.recent.clear();
            self.deletions += 1;
        }
    }

    pub fn coreset(&self) -> &[WeightedPoint] {
        &self.stored
    }

    pub fn into_coreset(self) -> Vec<WeightedPoint> {
        self.stored
    }

    pub fn deletions(&self) -> u64 {
        self.deletions
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }
}

/// One pass over the whole stream, nothing ever expires.
pub fn histogram_coreset(stream: &[Point], config: &BaselineConfig) -> Result<Vec<WeightedPoint>> {
    let mut s = ImportanceSampler::new(BaselineConfig {
        expiry: false,
        ..config.clone()
    })?;
    for x in stream {
        s.ingest(x);
    }
    Ok(s.into_coreset())
}

/// As [`histogram_coreset`], discarding stored points older than the window
/// before every arrival.
pub fn importance_expiry_coreset(stream: &[Point], window: u64, config: &BaselineConfig) -> Result<Vec<WeightedPoint>> {
    let mut s = ImportanceSampler::new(BaselineConfig {
        expiry: true,
        window: Some(window),
        ..config.clone()
    })?;
    for x in stream {
        s.ingest(x);
    }
    Ok(s.into_coreset())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{cost, unit_weights, CenterSet};
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};
    use rand_distr::{Distribution, Normal};

    fn line(n: usize) -> Vec<Point> {
        (0..n)
            .map(|i| Point::new(i as u64 + 1, i as u64 + 1, vec![i as f64, (i * i % 7) as f64]))
            .collect()
    }

    #[test]
    fn uniform_small_window_is_identity() {
        let pts = line(5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = uniform_coreset(&pts, 5, &mut rng);
        assert_eq!(c, unit_weights(&pts));
        let c = uniform_coreset(&pts, 1, &mut rng);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].weight, 5.0);
    }

    #[test]
    fn uniform_is_unbiased() {
        let pts = line(60);
        let centers = CenterSet::new(vec![vec![10.0, 2.0], vec![45.0, 3.0]]);
        let truth = cost(&unit_weights(&pts), &centers, 2, Metric::Euclidean).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let costs: Vec<f64> = (0..500)
            .map(|_| cost(&uniform_coreset(&pts, 8, &mut rng), &centers, 2, Metric::Euclidean).unwrap())
            .collect();
        let n = costs.len() as f64;
        let mean = costs.iter().sum::<f64>() / n;
        let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - truth).abs() <= 3.0 * (var / n).sqrt(), "{mean} vs {truth}");
    }

    #[test]
    fn identical_stream_collapses_to_one_point() {
        let pts: Vec<Point> = (0..40).map(|i| Point::new(i, i, vec![2.0, 2.0])).collect();
        let c = histogram_coreset(&pts, &BaselineConfig::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].weight, 40.0);
    }

    #[test]
    fn exact_sampler_keeps_distinct_points() {
        let mut pts = Vec::new();
        for i in 0..50u64 {
            pts.push(Point::new(i, i, vec![(i % 6) as f64 * 3.0]));
        }
        let cfg = BaselineConfig {
            budget: 6,
            exact: true,
            theta: f64::INFINITY,
            ..Default::default()
        };
        let c = histogram_coreset(&pts, &cfg).unwrap();
        let mut sites: Vec<f64> = c.iter().map(|p| p.coords()[0]).collect();
        sites.sort_by(f64::total_cmp);
        assert_eq!(sites, vec![0.0, 3.0, 6.0, 9.0, 12.0, 15.0]);
        assert_eq!(c.iter().map(|p| p.weight).sum::<f64>(), 50.0);
    }

    #[test]
    fn full_window_expiry_matches_histogram() {
        let pts = line(300);
        let cfg = BaselineConfig {
            seed: 4,
            ..Default::default()
        };
        let h = histogram_coreset(&pts, &cfg).unwrap();
        let e = importance_expiry_coreset(&pts, 300, &cfg).unwrap();
        assert_eq!(h, e);
        let e1 = importance_expiry_coreset(&pts, 1, &cfg).unwrap();
        assert_eq!(e1.len(), 1);
        assert_eq!(e1[0].point, pts[299]);
    }

    fn synthetic(seed: u64, per: usize) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 2.75).unwrap();
        let mut means = vec![[-100000.0, 100000.0], [-100000.0, -100000.0]];
        means.extend(std::iter::repeat_n([-10.0, 10.0], per));
        means.extend(std::iter::repeat_n([10.0, -10.0], per));
        means.push([100000.0, 100000.0]);
        means
            .iter()
            .enumerate()
            .map(|(i, m)| {
                Point::new(
                    i as u64 + 1,
                    i as u64 + 1,
                    vec![m[0] + n.sample(&mut rng), m[1] + n.sample(&mut rng)],
                )
            })
            .collect()
    }

    #[test]
    fn histogram_retains_expired_outliers() {
        let mut retained = 0;
        let mut expiry_clean = true;
        for seed in 0..20 {
            let s = synthetic(seed, 2000);
            let cfg = BaselineConfig {
                seed,
                ..Default::default()
            };
            let h = histogram_coreset(&s, &cfg).unwrap();
            if h.iter().any(|p| p.timestamp() <= 2) {
                retained += 1;
            }
            let e = importance_expiry_coreset(&s, s.len() as u64 - 2, &cfg).unwrap();
            expiry_clean &= e.iter().all(|p| p.timestamp() > 2);
        }
        assert!(retained >= 10, "retained in {retained} of 20 seeds");
        assert!(expiry_clean);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn budget_and_expiry_hold(seed in 0u64..1000, m in 1usize..12, w in 1u64..80, n in 1usize..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Point> = (0..n)
                .map(|i| Point::new(i as u64, i as u64 + 1, vec![rng.random_range(-50.0..50.0)]))
                .collect();
            let mut hist = ImportanceSampler::new(BaselineConfig { budget: m, seed, ..Default::default() }).unwrap();
            let mut exp = ImportanceSampler::new(BaselineConfig { budget: m, seed, expiry: true, window: Some(w), ..Default::default() }).unwrap();
            for x in &pts {
                hist.ingest(x);
                exp.ingest(x);
                prop_assert!(hist.coreset().len() <= m);
                prop_assert!(exp.coreset().len() <= m);
                let cutoff = x.timestamp.saturating_sub(w - 1);
                prop_assert!(exp.coreset().iter().all(|p| p.timestamp() >= cutoff));
            }
            let u = uniform_coreset(&pts, m, &mut rng);
            let total: f64 = u.iter().map(|p| p.weight).sum();
            prop_assert!((total - n as f64).abs() <= 1e-9 * n as f64);
        }
    }
}
