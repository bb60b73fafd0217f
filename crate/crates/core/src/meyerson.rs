//! Consistent bicriteria assignment via parallel Meyerson sketches.
//!
//! A [`MeyersonInstance`] runs online facility location for one guess of the
//! optimal cost, repeated independently `repetitions` times. [`MultMeyerson`]
//! runs a doubling grid of guesses in parallel and assigns each arriving point
//! to a center of the smallest guess that has not overflowed. Assignments are
//! written once into an append-only log and never revised, even when the
//! active guess later overflows and a coarser one takes over.

use std::collections::HashMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::metric::{Metric, Point, StreamParams};

/// Number of centers a single Meyerson run may hold before it is declared
/// overflowed: `ceil(4k(1 + log Δ)(2^{z+3}/α^z + 1))`.
pub fn meyerson_capacity(k: usize, aspect_bound: f64, alpha: f64, z: u32) -> usize {
    let per = 2f64.powi(z as i32 + 3) / alpha.powi(z as i32) + 1.0;
    (4.0 * k as f64 * (1.0 + aspect_bound.log2()) * per).ceil() as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeyersonConfig {
    /// Approximation slack of the cost guess, in (0,1].
    pub alpha: f64,
    /// Independent runs per guess. `None` derives `ceil(2 log(N/δ))`.
    pub repetitions: Option<usize>,
    /// Multiplier on [`meyerson_capacity`]; values below 1 trade the
    /// worst-case guarantee for fewer retained centers at desk scale.
    pub capacity_scale: f64,
    /// Absolute per-run capacity; overrides `capacity_scale` when set.
    pub capacity: Option<usize>,
    /// Guess `i` is `guess_floor^z * 2^i`. Use the smallest meaningful
    /// distance of the data; 1 matches integer grids.
    pub guess_floor: f64,
    /// Constant of the retained-center budget `c_β 2^{2z} k log N log Δ`.
    pub c_beta: f64,
    /// Keep the full assignment log (memory linear in the stream).
    pub keep_log: bool,
}

impl Default for MeyersonConfig {
    fn default() -> Self {
        MeyersonConfig {
            alpha: 0.5,
            repetitions: None,
            capacity_scale: 1.0,
            capacity: None,
            guess_floor: 1.0,
            c_beta: 4.0,
            keep_log: false,
        }
    }
}

impl MeyersonConfig {
    pub fn repetitions_for(&self, params: &StreamParams) -> usize {
        self.repetitions.unwrap_or_else(|| {
            // δ is split evenly over the N stream positions.
            let per_position = params.delta / params.horizon as f64;
            ((2.0 * (1.0 / per_position).log2()).ceil() as usize).max(1)
        })
    }

    pub fn capacity_for(&self, params: &StreamParams) -> usize {
        if let Some(c) = self.capacity {
            return c;
        }
        let full = meyerson_capacity(params.k, params.aspect_bound, self.alpha, params.z);
        ((full as f64 * self.capacity_scale).ceil() as usize).max(1)
    }

    /// Ratio of the capacity in use to the worst-case capacity.
    pub fn effective_scale(&self, params: &StreamParams) -> f64 {
        let full = meyerson_capacity(params.k, params.aspect_bound, self.alpha, params.z);
        self.capacity_for(params) as f64 / full as f64
    }

    /// Retained-center budget `β k`.
    pub fn beta_cap(&self, params: &StreamParams) -> f64 {
        self.c_beta * 2f64.powi(2 * params.z as i32) * params.k as f64 * params.log_n() * params.log_delta()
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(invalid("alpha", "must lie in (0,1]"));
        }
        if self.repetitions == Some(0) {
            return Err(invalid("repetitions", "must be at least 1"));
        }
        if self.capacity == Some(0) {
            return Err(invalid("capacity", "must be at least 1"));
        }
        if !(self.capacity_scale > 0.0) {
            return Err(invalid("capacity_scale", "must be positive"));
        }
        if !(self.guess_floor > 0.0) || !self.guess_floor.is_finite() {
            return Err(invalid("guess_floor", "must be positive and finite"));
        }
        Ok(())
    }
}

/// Outcome of feeding one point to one Meyerson run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepOutcome {
    /// The point became a new center (local index).
    Opened(usize),
    /// The point joined an existing center at the given `dist^z`.
    AssignedTo { center: usize, cost_z: f64 },
    /// The run exceeded its capacity and stopped.
    Overflow,
}

/// One independent run of the facility-location sketch.
#[derive(Clone, Debug)]
pub struct MeyersonRun {
    dim: usize,
    /// Row-major center coordinates.
    coords: Vec<f64>,
    /// The point that opened each center.
    openers: Vec<Point>,
    weights: Vec<f64>,
    cost: f64,
    overflowed: bool,
}

impl MeyersonRun {
    fn new(dim: usize) -> Self {
        MeyersonRun {
            dim,
            coords: Vec::new(),
            openers: Vec::new(),
            weights: Vec::new(),
            cost: 0.0,
            overflowed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn centers(&self) -> &[Point] {
        &self.openers
    }

    pub fn is_overflowed(&self) -> bool {
        self.overflowed
    }

    #[inline]
    fn nearest(&self, x: &[f64], metric: Metric, z: u32) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        if metric == Metric::Euclidean && self.dim == 2 {
            let (x0, x1) = (x[0], x[1]);
            for (i, c) in self.coords.chunks_exact(2).enumerate() {
                let (a, b) = (x0 - c[0], x1 - c[1]);
                let d = a * a + b * b;
                if d < best.1 {
                    best = (i, d);
                }
            }
            return (best.0, metric.rank_to_cost(best.1, z));
        }
        for (i, c) in self.coords.chunks_exact(self.dim).enumerate() {
            let d = metric.rank(x, c);
            if d < best.1 {
                best = (i, d);
            }
        }
        (best.0, metric.rank_to_cost(best.1, z))
    }

    fn open(&mut self, x: &Point, weight: f64) -> usize {
        self.coords.extend_from_slice(&x.coords);
        self.openers.push(x.clone());
        self.weights.push(weight);
        self.weights.len() - 1
    }
}

/// All repetitions of the sketch for a single guess of the optimal cost.
#[derive(Clone, Debug)]
pub struct MeyersonInstance {
    guess: f64,
    capacity: usize,
    /// `k (1 + log Δ)`, the numerator scale of the open probability.
    open_scale: f64,
    z: u32,
    metric: Metric,
    runs: Vec<MeyersonRun>,
}

impl MeyersonInstance {
    pub fn new(guess: f64, params: &StreamParams, capacity: usize, repetitions: usize, dim: usize) -> Self {
        MeyersonInstance {
            guess,
            capacity,
            open_scale: params.k as f64 * (1.0 + params.log_delta()),
            z: params.z,
            metric: params.metric,
            runs: (0..repetitions).map(|_| MeyersonRun::new(dim)).collect(),
        }
    }

    pub fn guess(&self) -> f64 {
        self.guess
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn runs(&self) -> &[MeyersonRun] {
        &self.runs
    }

    /// A guess stays valid while any of its runs has not overflowed.
    pub fn is_valid(&self) -> bool {
        self.runs.iter().any(|r| !r.overflowed)
    }

    /// Probability of opening a center for a point of weight `weight` at
    /// `dist^z = cost_z` from the current centers.
    pub fn open_probability(&self, cost_z: f64, weight: f64) -> f64 {
        (self.open_scale * weight * cost_z / self.guess).min(1.0)
    }

    /// Feeds `x` to run `run`.
    pub fn step<R: Rng + ?Sized>(&mut self, run: usize, x: &Point, weight: f64, rng: &mut R) -> StepOutcome {
        let (z, metric, capacity) = (self.z, self.metric, self.capacity);
        let p_open = {
            let r = &self.runs[run];
            if r.overflowed {
                return StepOutcome::Overflow;
            }
            if r.is_empty() {
                None
            } else {
                let (c, d) = r.nearest(&x.coords, metric, z);
                Some((c, d, self.open_probability(d, weight)))
            }
        };
        let r = &mut self.runs[run];
        match p_open {
            None => StepOutcome::Opened(r.open(x, weight)),
            Some((c, d, p)) => {
                let opens = p >= 1.0 || (p > 0.0 && rng.random::<f64>() < p);
                if opens {
                    let idx = r.open(x, weight);
                    if r.len() > capacity {
                        r.overflowed = true;
                        StepOutcome::Overflow
                    } else {
                        StepOutcome::Opened(idx)
                    }
                } else {
                    r.weights[c] += weight;
                    r.cost += weight * d;
                    StepOutcome::AssignedTo { center: c, cost_z: d }
                }
            }
        }
    }

    /// Size of the union of the run center sets.
    pub fn union_size(&self) -> usize {
        self.runs.iter().map(MeyersonRun::len).sum()
    }

    /// Lowest-cost run that has not overflowed.
    pub fn best_run(&self) -> Option<usize> {
        self.runs
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.overflowed)
            .min_by(|a, b| a.1.cost.total_cmp(&b.1.cost))
            .map(|(i, _)| i)
    }
}

/// The irrevocable assignment of one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub point_id: u64,
    /// Index into [`MultMeyerson::center`].
    pub center_id: u32,
    /// Local arrival index (1-based) of the point.
    pub assign_time: u64,
    /// `dist(x, π(x))^z`, unweighted.
    pub cost_z: f64,
    pub weight: f64,
}

/// Guess-and-double wrapper producing a consistent (α,β)-bicriteria assignment.
#[derive(Clone, Debug)]
pub struct MultMeyerson {
    params: StreamParams,
    config: MeyersonConfig,
    instances: Vec<MeyersonInstance>,
    /// (guess index, run index) whose centers receive new points.
    active: (usize, usize),
    registry: HashMap<(usize, usize, usize), u32>,
    centers: Vec<Point>,
    log: Vec<AssignmentRecord>,
    assigned_cost: f64,
    time: u64,
    rng: ChaCha8Rng,
}

impl MultMeyerson {
    pub fn new(params: StreamParams, config: MeyersonConfig, seed: u64) -> Result<Self> {
        params.validate()?;
        config.validate()?;
        Ok(MultMeyerson {
            params,
            config,
            instances: Vec::new(),
            active: (0, 0),
            registry: HashMap::new(),
            centers: Vec::new(),
            log: Vec::new(),
            assigned_cost: 0.0,
            time: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Number of guesses, `ceil(log2(N d Δ^z))`.
    pub fn guess_count(params: &StreamParams, dim: usize) -> usize {
        let bits = (params.horizon as f64).log2() + (dim as f64).log2() + params.z as f64 * params.log_delta();
        (bits.ceil() as usize).max(1)
    }

    fn init(&mut self, dim: usize) {
        let gamma = Self::guess_count(&self.params, dim);
        let reps = self.config.repetitions_for(&self.params);
        let cap = self.config.capacity_for(&self.params);
        let floor = self.config.guess_floor.powi(self.params.z as i32);
        self.instances = (1..=gamma)
            .map(|i| MeyersonInstance::new(floor * 2f64.powi(i as i32), &self.params, cap, reps, dim))
            .collect();
    }

    pub fn ingest(&mut self, x: &Point) -> Result<AssignmentRecord> {
        self.ingest_weighted(x, 1.0)
    }

    /// Feeds `x` (standing for `weight` copies) to every live guess and
    /// records its assignment under the active guess.
    pub fn ingest_weighted(&mut self, x: &Point, weight: f64) -> Result<AssignmentRecord> {
        if !(weight > 0.0) {
            return Err(invalid("weight", "must be positive"));
        }
        if self.instances.is_empty() {
            if x.dim() == 0 {
                return Err(invalid("point", "dimension must be at least 1"));
            }
            self.init(x.dim());
        }
        let dim = self.instances[0].runs[0].dim;
        if x.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: x.dim(),
            });
        }
        self.time += 1;

        let (a_inst, a_run) = self.active;
        let mut active_outcome = None;
        for (gi, inst) in self.instances.iter_mut().enumerate().skip(a_inst) {
            if !inst.is_valid() {
                continue;
            }
            for ri in 0..inst.runs.len() {
                if inst.runs[ri].overflowed {
                    continue;
                }
                let out = inst.step(ri, x, weight, &mut self.rng);
                if active_outcome.is_none() && (gi, ri) >= (a_inst, a_run) && out != StepOutcome::Overflow {
                    active_outcome = Some(((gi, ri), out));
                }
            }
        }
        let ((gi, ri), out) = active_outcome.ok_or(Error::AllGuessesOverflowed)?;
        self.active = (gi, ri);
        let (local, cost_z) = match out {
            StepOutcome::Opened(c) => (c, 0.0),
            StepOutcome::AssignedTo { center, cost_z } => (center, cost_z),
            StepOutcome::Overflow => unreachable!("overflowed runs are never active"),
        };
        let center_id = match self.registry.get(&(gi, ri, local)) {
            Some(&id) => id,
            None => {
                let id = self.centers.len() as u32;
                self.centers.push(self.instances[gi].runs[ri].openers[local].clone());
                self.registry.insert((gi, ri, local), id);
                id
            }
        };
        let rec = AssignmentRecord {
            point_id: x.id,
            center_id,
            assign_time: self.time,
            cost_z,
            weight,
        };
        self.assigned_cost += weight * cost_z;
        if self.config.keep_log {
            self.log.push(rec);
        }
        Ok(rec)
    }

    /// Minimal guess index (1-based) whose best run has union size below
    /// `8k log(1/δ)(1 + log Δ)(2^{2z+3} + 1)` (scaled like the capacity) and
    /// cost below `2^{z+6}` times its guess.
    pub fn select(&self) -> Result<usize> {
        let p = &self.params;
        let size_threshold = 8.0
            * p.k as f64
            * (1.0 / p.delta).log2()
            * (1.0 + p.log_delta())
            * (2f64.powi(2 * p.z as i32 + 3) + 1.0)
            * self.config.effective_scale(p);
        for (i, inst) in self.instances.iter().enumerate() {
            let Some(best) = inst.best_run() else { continue };
            let cost = inst.runs[best].cost;
            if (inst.union_size() as f64) < size_threshold && cost < 2f64.powi(p.z as i32 + 6) * inst.guess {
                return Ok(i + 1);
            }
        }
        Err(Error::AllGuessesOverflowed)
    }

    /// Centers and weights of the lowest-cost valid run of the selected guess.
    pub fn selected_output(&self) -> Result<(&[Point], &[f64], f64)> {
        let j = self.select()?;
        let inst = &self.instances[j - 1];
        let run = &inst.runs[inst.best_run().expect("selected guess is valid")];
        Ok((&run.openers, &run.weights, run.cost))
    }

    pub fn params(&self) -> &StreamParams {
        &self.params
    }

    pub fn config(&self) -> &MeyersonConfig {
        &self.config
    }

    pub fn instances(&self) -> &[MeyersonInstance] {
        &self.instances
    }

    /// 1-based index of the guess currently receiving assignments.
    pub fn active_guess(&self) -> usize {
        self.active.0 + 1
    }

    pub fn center(&self, id: u32) -> &Point {
        &self.centers[id as usize]
    }

    /// Every center some point has been assigned to.
    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn center_count(&self) -> usize {
        self.centers.len()
    }

    /// Running `Σ w(x) dist(x, π(x))^z`.
    pub fn assigned_cost(&self) -> f64 {
        self.assigned_cost
    }

    pub fn log(&self) -> &[AssignmentRecord] {
        &self.log
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    /// Writes the assignment log as `point_id,center_id,assign_time,cost_z`.
    pub fn write_log_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["point_id", "center_id", "assign_time", "cost_z"])?;
        for r in &self.log {
            w.write_record([
                r.point_id.to_string(),
                r.center_id.to_string(),
                r.assign_time.to_string(),
                r.cost_z.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
