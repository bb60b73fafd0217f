use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::metric::{cost, CenterSet, Point, StreamParams, WeightedPoint};
use crate::ring::{ArrivalOrder, OnlineCoreset, RingConfig};

/// Outcome of comparing an online coreset against every probed prefix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub max_error: f64,
    /// Largest error seen at each probe time.
    pub per_probe: Vec<(u64, f64)>,
    pub samples: usize,
    pub stored: usize,
    pub effective_gamma: f64,
}

/// `count` probe times spread evenly over `1..=n`, always including `n`.
pub fn probe_times(n: u64, count: usize) -> Vec<u64> {
    let count = count.max(1) as u64;
    let mut t: Vec<u64> = (1..=count)
        .map(|i| (i * n).div_ceil(count))
        .filter(|&t| t > 0)
        .collect();
    t.dedup();
    t
}

/// Center sets for error probes: half use `k` random stream points, half
/// draw uniformly from the bounding box of the stream.
pub fn random_center_sets<R: Rng + ?Sized>(points: &[Point], k: usize, count: usize, rng: &mut R) -> Vec<CenterSet> {
    let d = points[0].dim();
    let lo: Vec<f64> = (0..d)
        .map(|j| points.iter().map(|p| p.coords[j]).fold(f64::INFINITY, f64::min))
        .collect();
    let hi: Vec<f64> = (0..d)
        .map(|j| points.iter().map(|p| p.coords[j]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    (0..count)
        .map(|s| {
            let centers = (0..k)
                .map(|_| {
                    if s % 2 == 0 {
                        points[rng.random_range(0..points.len())].coords.clone()
                    } else {
                        (0..d)
                            .map(|j| {
                                if hi[j] > lo[j] {
                                    rng.random_range(lo[j]..=hi[j])
                                } else {
                                    lo[j]
                                }
                            })
                            .collect()
                    }
                })
                .collect();
            CenterSet::new(centers)
        })
        .collect()
}

/// Largest `|cost(extract(t), C) − cost(prefix(t), C)| / cost(prefix(t), C)`
/// over probe times `t` and center sets `C`; zero-cost prefixes are skipped.
pub fn measure_online_coreset_error(
    stream: &[Point],
    params: &StreamParams,
    config: &RingConfig,
    probe_times: &[u64],
    center_sets: &[CenterSet],
    seed: u64,
) -> Result<ErrorReport> {
    if let Some(&t) = probe_times.iter().find(|&&t| t == 0 || t > stream.len() as u64) {
        return Err(invalid("probe_times", format!("{t} outside 1..={}", stream.len())));
    }
    let coreset = OnlineCoreset::build(
        params.clone(),
        config.clone(),
        ArrivalOrder::Forward,
        stream.iter().cloned().map(WeightedPoint::unit),
        seed,
    )?;
    let z = params.z;
    let metric = params.metric;
    let prefix: Vec<Vec<f64>> = center_sets
        .iter()
        .map(|c| {
            let mut acc = 0.0;
            let mut out = Vec::with_capacity(stream.len() + 1);
            out.push(0.0);
            for p in stream {
                acc += c.nearest(&p.coords, metric, z).1;
                out.push(acc);
            }
            out
        })
        .collect();
    let mut report = ErrorReport {
        max_error: 0.0,
        per_probe: Vec::with_capacity(probe_times.len()),
        samples: coreset.samples().len(),
        stored: coreset.stored_len(),
        effective_gamma: coreset.effective_gamma(),
    };
    for &t in probe_times {
        let extracted = coreset.extract(t)?;
        let mut worst = 0.0f64;
        for (c, pre) in center_sets.iter().zip(&prefix) {
            let truth = pre[t as usize];
            if truth <= 0.0 {
                continue;
            }
            let est = cost(&extracted, c, z, metric)?;
            worst = worst.max((est - truth).abs() / truth);
        }
        report.max_error = report.max_error.max(worst);
        report.per_probe.push((t, worst));
    }
    Ok(report)
}

/// Convenience wrapper drawing probes and center sets from `seed`.
pub fn measure_with_random_probes(
    stream: &[Point],
    params: &StreamParams,
    config: &RingConfig,
    probes: usize,
    sets: usize,
    seed: u64,
) -> Result<ErrorReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let centers = random_center_sets(stream, params.k, sets, &mut rng);
    let times = probe_times(stream.len() as u64, probes);
    measure_online_coreset_error(stream, params, config, &times, &centers, seed)
}
