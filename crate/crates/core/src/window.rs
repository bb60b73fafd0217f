//! Merge-and-reduce over the reversed stream.
//!
//! Level 0 buffers up to `m` raw points, newest first. When it is full and a
//! new point arrives, the buffer and every occupied level below the first
//! empty level `i` are concatenated newest-first and summarized by a fresh
//! [`OnlineCoreset`] fed in that (reversed) order, which becomes level `i`.
//! Because each block is an online coreset of the reversed stream, any suffix
//! of the stream, that is any window, is a prefix of every block and can be
//! recovered by filtering on timestamps.

use std::collections::VecDeque;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::metric::{cost, CenterSet, Point, StreamParams, WeightedPoint};
use crate::ring::{ArrivalOrder, FrozenCoreset, OnlineCoreset, RingConfig};
use crate::solver::{derive_seed, weighted_kmeans, SolveConfig};

pub const SNAPSHOT_VERSION: u32 = 1;

/// Per-level accuracy so that `log2 N` levels compose to `1 + ε`.
pub fn per_level_epsilon(epsilon: f64, horizon: u64) -> f64 {
    (1.0 + epsilon).ln() / (horizon as f64).log2().max(1.0)
}

/// Per-level failure probability.
pub fn per_level_delta(delta: f64, horizon: u64) -> f64 {
    delta / (horizon as f64).powi(2)
}

/// `ceil(log2(N / m)) + 2`.
pub fn level_slots(horizon: u64, block_size: usize) -> usize {
    let ratio = horizon as f64 / block_size as f64;
    (ratio.log2().ceil().max(0.0) as usize) + 2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlidingWindowConfig {
    /// Level-0 capacity `m`. Defaults to twice the target sample count, or
    /// 512 when no target is set.
    pub block_size: Option<usize>,
    /// Largest queryable window. Defaults to the horizon.
    pub max_window: Option<u64>,
    /// Slack constant of the space bound.
    pub c_samples: f64,
    pub ring: RingConfig,
}

impl Default for SlidingWindowConfig {
    fn default() -> Self {
        SlidingWindowConfig {
            block_size: None,
            max_window: None,
            c_samples: 2.0,
            ring: RingConfig::default(),
        }
    }
}

impl SlidingWindowConfig {
    pub fn block_size_resolved(&self) -> usize {
        self.block_size.unwrap_or_else(|| match self.ring.target_samples {
            Some(t) => (2.0 * t).ceil() as usize,
            None => 512,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub level: usize,
    pub coreset: FrozenCoreset,
    /// `(min_timestamp, max_timestamp)` of the summarized points.
    pub span: (u64, u64),
    /// Number of original stream points summarized.
    pub summarized: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlidingWindowCoreset {
    params: StreamParams,
    config: SlidingWindowConfig,
    block_size: usize,
    max_window: u64,
    level_params: StreamParams,
    /// Raw level-0 points, newest first.
    buffer: VecDeque<Point>,
    /// Slots for levels `1..=L`; index 0 is unused.
    levels: Vec<Option<Block>>,
    seen: u64,
    last_ts: Option<u64>,
    compressions: u64,
    seed: u64,
    dim: Option<usize>,
    exhausted: bool,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    state: SlidingWindowCoreset,
}

impl SlidingWindowCoreset {
    pub fn new(params: StreamParams, config: SlidingWindowConfig, seed: u64) -> Result<Self> {
        params.validate()?;
        let block_size = config.block_size_resolved();
        if block_size == 0 {
            return Err(invalid("block_size", "must be positive"));
        }
        if !(config.c_samples > 0.0) {
            return Err(invalid("c_samples", "must be positive"));
        }
        let max_window = config.max_window.unwrap_or(params.horizon);
        if max_window == 0 {
            return Err(invalid("max_window", "must be positive"));
        }
        let level_params = StreamParams {
            epsilon: per_level_epsilon(params.epsilon, params.horizon),
            delta: per_level_delta(params.delta, params.horizon),
            ..params.clone()
        };
        let slots = level_slots(params.horizon, block_size);
        Ok(SlidingWindowCoreset {
            params,
            config,
            block_size,
            max_window,
            level_params,
            buffer: VecDeque::with_capacity(block_size),
            levels: vec![None; slots],
            seen: 0,
            last_ts: None,
            compressions: 0,
            seed,
            dim: None,
            exhausted: false,
        })
    }

    /// Exact-mode structure: every block keeps all of its points.
    pub fn exact(params: StreamParams, block_size: usize) -> Result<Self> {
        let config = SlidingWindowConfig {
            block_size: Some(block_size),
            ring: RingConfig::exact(),
            ..Default::default()
        };
        Self::new(params, config, 0)
    }

    /// Adds the next stream point. Timestamps must strictly increase.
    pub fn ingest(&mut self, x: Point) -> Result<()> {
        if self.exhausted {
            return Err(Error::HorizonExceeded);
        }
        match self.dim {
            Some(d) if d != x.dim() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.dim(),
                })
            }
            _ => self.dim = Some(x.dim()),
        }
        if let Some(last) = self.last_ts {
            if x.timestamp <= last {
                return Err(invalid(
                    "timestamp",
                    format!("{} does not follow {}", x.timestamp, last),
                ));
            }
        }
        if self.buffer.len() >= self.block_size {
            self.compress(x.timestamp)?;
        }
        self.last_ts = Some(x.timestamp);
        self.buffer.push_front(x);
        self.seen += 1;
        Ok(())
    }

    /// Summarizes level 0 and all occupied levels below the first empty one.
    fn compress(&mut self, now: u64) -> Result<()> {
        let cutoff = now.saturating_sub(self.max_window - 1);
        for slot in self.levels.iter_mut().skip(1) {
            if slot.as_ref().is_some_and(|b| b.span.1 < cutoff) {
                *slot = None;
            }
        }
        let Some(target) = (1..self.levels.len()).find(|&i| self.levels[i].is_none()) else {
            self.exhausted = true;
            return Err(Error::HorizonExceeded);
        };
        let mut inputs: Vec<WeightedPoint> = self.buffer.drain(..).map(WeightedPoint::unit).collect();
        let mut summarized = inputs.len() as u64;
        for slot in self.levels[1..target].iter_mut() {
            let block = slot.take().expect("levels below the first empty one are occupied");
            summarized += block.summarized;
            inputs.extend(block.coreset.entries_newest_first());
        }
        inputs.retain(|p| p.timestamp() >= cutoff);
        let span = inputs.iter().fold((u64::MAX, 0), |(lo, hi), p| {
            (lo.min(p.timestamp()), hi.max(p.timestamp()))
        });
        let seed = derive_seed(self.seed, self.compressions);
        let coreset = OnlineCoreset::build(
            self.level_params.clone(),
            self.config.ring.clone(),
            ArrivalOrder::Reverse,
            inputs,
            seed,
        )?;
        self.levels[target] = Some(Block {
            level: target,
            coreset: coreset.freeze(),
            span,
            summarized,
        });
        self.compressions += 1;
        Ok(())
    }

    /// Weighted coreset of the `window` most recent timestamps.
    pub fn query(&self, window: u64) -> Result<Vec<WeightedPoint>> {
        let limit = self.max_window.min(self.seen);
        if window == 0 || window > limit {
            return Err(Error::WindowOutOfRange { window, max: limit });
        }
        let now = self.last_ts.expect("seen > 0");
        let cutoff = now.saturating_sub(window - 1);
        let mut out: Vec<WeightedPoint> = self
            .buffer
            .iter()
            .take_while(|p| p.timestamp >= cutoff)
            .cloned()
            .map(WeightedPoint::unit)
            .collect();
        for block in self.levels.iter().flatten() {
            if block.span.1 >= cutoff {
                out.extend(block.coreset.extract_since(cutoff));
            }
        }
        Ok(out)
    }

    /// Solves the window on its coreset; returns centers and the coreset
    /// estimate of their cost.
    pub fn solve_window(&self, window: u64, solve: &SolveConfig) -> Result<(CenterSet, f64)> {
        let points = self.query(window)?;
        let sol = weighted_kmeans(&points, solve)?;
        let est = cost(&points, &sol.centers, solve.z, solve.metric)?;
        Ok((sol.centers, est))
    }

    /// Raw points plus stored block entries.
    pub fn stored_points(&self) -> usize {
        self.buffer.len()
            + self
                .levels
                .iter()
                .flatten()
                .map(|b| b.coreset.stored_len())
                .sum::<usize>()
    }

    /// `m (ceil(log2(n/m)) + 2) c_samples` for the current `n`.
    pub fn space_bound(&self) -> f64 {
        let n = self.seen.max(1);
        self.block_size as f64 * level_slots(n, self.block_size) as f64 * self.config.c_samples
    }

    /// Occupied slots including a nonempty level 0.
    pub fn live_blocks(&self) -> usize {
        usize::from(!self.buffer.is_empty()) + self.levels.iter().flatten().count()
    }

    /// Occupancy of levels `1..=L`.
    pub fn occupancy(&self) -> Vec<bool> {
        self.levels.iter().skip(1).map(Option::is_some).collect()
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.levels.iter().flatten()
    }

    pub fn level0(&self) -> &VecDeque<Point> {
        &self.buffer
    }

    pub fn compressions(&self) -> u64 {
        self.compressions
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn slots(&self) -> usize {
        self.levels.len()
    }

    pub fn max_window(&self) -> u64 {
        self.max_window
    }

    pub fn params(&self) -> &StreamParams {
        &self.params
    }

    pub fn level_params(&self) -> &StreamParams {
        &self.level_params
    }

    pub fn config(&self) -> &SlidingWindowConfig {
        &self.config
    }

    pub fn write_snapshot<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(
            out,
            &Snapshot {
                version: SNAPSHOT_VERSION,
                state: self.clone(),
            },
        )?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(input: R) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_reader(input)?;
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != SNAPSHOT_VERSION {
            return Err(Error::SnapshotVersion(version));
        }
        let snap: Snapshot = serde_json::from_value(value)?;
        Ok(snap.state)
    }
}
