//! Hard stream for online coresets: `γ` instances on disjoint coordinate
//! blocks, instance `i` emitting `d'` elementary vectors each repeated
//! `τ^{i-1}` times in a row. Later instances outweigh all earlier ones, so an
//! online coreset must keep every instance accurate at the moment it is the
//! newest.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::harness::experiment::desk_meyerson;
use crate::harness::verify::{measure_online_coreset_error, probe_times, random_center_sets};
use crate::metric::{CenterSet, Point, StreamParams};
use crate::meyerson::MeyersonConfig;
use crate::ring::RingConfig;
use crate::solver::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundSpec {
    pub d_prime: usize,
    pub gamma_lb: usize,
    #[serde(default = "default_tau")]
    pub tau: u64,
    /// Longest stream that may be materialized.
    #[serde(default = "default_budget")]
    pub max_len: u64,
}

fn default_tau() -> u64 {
    100
}

fn default_budget() -> u64 {
    10_000_000
}

impl LowerBoundSpec {
    pub fn new(d_prime: usize, gamma_lb: usize, tau: u64) -> Self {
        LowerBoundSpec {
            d_prime,
            gamma_lb,
            tau,
            max_len: default_budget(),
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.d_prime * self.gamma_lb
    }

    /// `d' Σ_{i=1}^{γ} τ^{i-1}`, or `None` on overflow.
    pub fn length(&self) -> Option<u128> {
        let mut total: u128 = 0;
        let mut rep: u128 = 1;
        for _ in 0..self.gamma_lb {
            total = total.checked_add(rep.checked_mul(self.d_prime as u128)?)?;
            rep = rep.checked_mul(self.tau as u128)?;
        }
        Some(total)
    }

    /// First coordinate of instance `i` (1-based).
    pub fn block_start(&self, i: usize) -> usize {
        2 * (i - 1) * self.d_prime
    }
}

pub fn gen_lowerbound_stream(spec: &LowerBoundSpec) -> Result<Vec<Point>> {
    if spec.d_prime == 0 {
        return Err(invalid("d_prime", "must be at least 1"));
    }
    if spec.gamma_lb == 0 {
        return Err(invalid("gamma_lb", "must be at least 1"));
    }
    if spec.tau < 2 {
        return Err(invalid("tau", "must be at least 2"));
    }
    let len = spec.length().unwrap_or(u128::MAX);
    if len > spec.max_len as u128 {
        return Err(Error::LengthBudgetExceeded {
            len,
            budget: spec.max_len as u128,
        });
    }
    let dim = spec.dim();
    let mut out = Vec::with_capacity(len as usize);
    let mut rep = 1u64;
    for i in 1..=spec.gamma_lb {
        for j in 0..spec.d_prime {
            let mut coords = vec![0.0; dim];
            coords[spec.block_start(i) + j] = 1.0;
            for _ in 0..rep {
                let t = out.len() as u64 + 1;
                out.push(Point::new(t, t, coords.clone()));
            }
        }
        rep *= spec.tau;
    }
    Ok(out)
}

/// Probe times covering `count` even steps plus the end of every instance.
pub fn instance_probes(spec: &LowerBoundSpec, count: usize) -> Vec<u64> {
    let n = spec.length().unwrap_or(0) as u64;
    let mut probes = probe_times(n, count);
    let (mut end, mut rep) = (0u64, 1u64);
    for _ in 0..spec.gamma_lb {
        end += spec.d_prime as u64 * rep;
        probes.push(end);
        rep = rep.saturating_mul(spec.tau);
    }
    probes.sort_unstable();
    probes.dedup();
    probes
}

/// Smallest `target_samples` whose largest prefix error is at most
/// `tolerance`, found by bisection over `1..=stream.len()`.
pub fn minimal_target(
    stream: &[Point],
    params: &StreamParams,
    meyerson: &MeyersonConfig,
    probes: &[u64],
    center_sets: &[CenterSet],
    tolerance: f64,
    seed: u64,
) -> Result<u64> {
    let error = |t: u64| -> Result<f64> {
        let config = RingConfig {
            target_samples: Some(t as f64),
            meyerson: meyerson.clone(),
            ..Default::default()
        };
        Ok(measure_online_coreset_error(stream, params, &config, probes, center_sets, seed)?.max_error)
    };
    let (mut lo, mut hi) = (1u64, stream.len() as u64);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if error(mid)? <= tolerance {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub d_prime: usize,
    pub tau: u64,
    pub gammas: Vec<usize>,
    pub seeds: usize,
    pub k: usize,
    pub tolerance: f64,
    pub probes: usize,
    pub center_sets: usize,
    pub seed: u64,
    pub meyerson: MeyersonConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            d_prime: 20,
            tau: 5,
            gammas: vec![1, 2, 3, 4],
            seeds: 5,
            k: 2,
            tolerance: 0.2,
            probes: 20,
            center_sets: 20,
            seed: 0,
            meyerson: desk_meyerson(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma_lb: usize,
    pub seed: u64,
    pub length: u64,
    pub min_target: u64,
}

/// Minimal target per `(γ_lb, seed)` on the hard stream.
pub fn lowerbound_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &g in &config.gammas {
        let spec = LowerBoundSpec::new(config.d_prime, g, config.tau);
        let stream = gen_lowerbound_stream(&spec)?;
        let n = stream.len() as u64;
        let params = StreamParams::new(config.k, 2, 2f64.powi(20), n.next_power_of_two());
        let probes = instance_probes(&spec, config.probes);
        for i in 0..config.seeds {
            let seed = derive_seed(config.seed, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sets = random_center_sets(&stream, config.k, config.center_sets, &mut rng);
            let min_target = minimal_target(
                &stream,
                &params,
                &config.meyerson,
                &probes,
                &sets,
                config.tolerance,
                seed,
            )?;
            rows.push(SweepRow {
                gamma_lb: g,
                seed,
                length: n,
                min_target,
            });
        }
    }
    Ok(rows)
}

/// Median minimal target for each `γ_lb`, in sweep order.
pub fn sweep_medians(rows: &[SweepRow]) -> Vec<(usize, u64)> {
    let mut out: Vec<(usize, Vec<u64>)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(g, _)| *g == r.gamma_lb) {
            Some((_, v)) => v.push(r.min_target),
            None => out.push((r.gamma_lb, vec![r.min_target])),
        }
    }
    out.into_iter()
        .map(|(g, mut v)| {
            v.sort_unstable();
            (g, v[v.len() / 2])
        })
        .collect()
}
