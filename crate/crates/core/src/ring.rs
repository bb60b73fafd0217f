//! Online coreset by ring/group importance sampling.
//!
//! Every arriving point is assigned irrevocably by [`MultMeyerson`]. Its
//! assignment cost places it in a ring `j` (`2^j <= dist^z < 2^{j+1}`) of
//! its center, and its position inside that ring places it in a group
//! `G_{j,b}` shared by all centers. The point is then kept independently with
//! probability `p = min(s / r, 1)` where `r` is the current size of its group
//! and `s = 4 γ log N`, and reweighted by `1/p`. Kept points are never
//! dropped, so the samples that arrived by time `t` form a coreset of the
//! prefix ending at `t`.
//!
//! Points that land exactly on their center cost nothing and are tallied on
//! the center instead of sampled. Weighted inputs behave as runs of unit
//! copies: ring positions and group sizes count weight, and `p` scales with
//! the input weight.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::metric::{Point, StreamParams, WeightedPoint};
use crate::meyerson::{AssignmentRecord, MeyersonConfig, MultMeyerson};

/// Ring band of an assignment cost, `None` for zero cost.
pub fn ring_index(cost_z: f64) -> Option<i32> {
    debug_assert!(cost_z >= 0.0);
    if cost_z > 0.0 {
        // log2 may round up just below a power of two; correct by one step.
        let mut j = cost_z.log2().floor() as i32;
        if 2f64.powi(j) > cost_z {
            j -= 1;
        } else if 2f64.powi(j + 1) <= cost_z {
            j += 1;
        }
        Some(j)
    } else {
        None
    }
}

/// Group of the `r`-th arrival in a ring: 0 for the first, else `ceil(log2 r)`.
pub fn group_index(r: u64) -> u32 {
    assert!(r >= 1, "ring positions start at 1");
    if r == 1 {
        0
    } else {
        64 - (r - 1).leading_zeros()
    }
}

/// [`group_index`] over accumulated ring weight.
fn group_index_mass(mass: f64) -> u32 {
    if mass <= 1.0 {
        0
    } else {
        mass.log2().ceil() as u32
    }
}

/// Inputs of the oversampling factor γ.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaInputs {
    pub k: usize,
    pub z: u32,
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Stand-in for the log-size of an approximate centroid set.
    pub centroid_log: f64,
    pub horizon: u64,
    pub c_gamma: f64,
}

/// `C max(α², α^z) β / min(ε², ε^z) · log²(1/ε) · (k L + log log(1/ε) + log N) · log²(1/ε)`.
pub fn gamma(g: &GammaInputs) -> f64 {
    let z = g.z as i32;
    let inv = (1.0 / g.epsilon).log2();
    let loglog = if inv > 0.0 { inv.log2() } else { 0.0 };
    let log_n = (g.horizon as f64).log2().max(1.0);
    g.c_gamma * g.alpha.powi(2).max(g.alpha.powi(z)) * g.beta / g.epsilon.powi(2).min(g.epsilon.powi(z))
        * inv.powi(2)
        * (g.k as f64 * g.centroid_log + loglog + log_n)
        * inv.powi(2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RingConfig {
    pub c_gamma: f64,
    /// Defaults to `d log2(2 Δ N / ε)`.
    pub centroid_log: Option<f64>,
    /// Keep every point with weight 1 (lossless buffer, testing oracle).
    pub exact_mode: bool,
    /// Expected number of sampled points; overrides the γ formula.
    pub target_samples: Option<f64>,
    /// Replace inner/light rings by weighted centers on extraction.
    pub substitute_centers: bool,
    pub meyerson: MeyersonConfig,
}

impl Default for RingConfig {
    fn default() -> Self {
        RingConfig {
            c_gamma: 1.0,
            centroid_log: None,
            exact_mode: false,
            target_samples: None,
            substitute_centers: false,
            meyerson: MeyersonConfig::default(),
        }
    }
}

impl RingConfig {
    /// Lossless configuration. The assignment does not affect what is kept,
    /// so a single small Meyerson run suffices.
    pub fn exact() -> Self {
        RingConfig {
            exact_mode: true,
            meyerson: MeyersonConfig {
                repetitions: Some(1),
                capacity: Some(64),
                ..Default::default()
            },
            ..Default::default()
        }
    }
}

/// Whether timestamps must increase (plain streams) or decrease (reversed
/// blocks of the sliding window).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArrivalOrder {
    #[default]
    Forward,
    Reverse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RingKey {
    pub center: u32,
    /// `None` is the zero-cost ring.
    pub ring: Option<i32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub ring: i32,
    pub group: u32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub count: u64,
    pub mass: f64,
    pub cost: f64,
}

impl Cell {
    fn add(&mut self, weight: f64, cost: f64) {
        self.count += 1;
        self.mass += weight;
        self.cost += cost;
    }
}

/// Running ring, group and per-center statistics. All counters only grow.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroupStats {
    pub groups: HashMap<GroupKey, Cell>,
    pub rings: HashMap<(u32, i32), Cell>,
    /// Includes zero-cost points.
    pub centers: HashMap<u32, Cell>,
    pub sampled: HashMap<GroupKey, u64>,
}

impl GroupStats {
    /// `(|G_{j,b}|, Cost(G_{j,b}))`, zero for untouched keys.
    pub fn group(&self, j: i32, b: u32) -> (u64, f64) {
        self.groups
            .get(&GroupKey { ring: j, group: b })
            .map_or((0, 0.0), |c| (c.count, c.cost))
    }

    pub fn total_group_cost(&self) -> f64 {
        self.groups.values().map(|c| c.cost).sum()
    }
}

/// One kept point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Weight is the input weight divided by `p`.
    pub point: WeightedPoint,
    pub local_time: u64,
    pub center: u32,
    pub group: GroupKey,
    pub p: f64,
    /// Group weight `r` at sampling time, so `p` can be recomputed.
    pub group_mass: f64,
}

/// Consecutive zero-cost arrivals at one center with equal weight and
/// unit-stride ids and timestamps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroRun {
    pub center: u32,
    pub first_local: u64,
    pub len: u64,
    pub weight: f64,
    pub first_id: u64,
    pub first_ts: u64,
    /// +1, -1, or 0 while the run has one element.
    pub step: i64,
}

impl ZeroRun {
    fn ts_at(&self, i: u64) -> u64 {
        (self.first_ts as i64 + self.step * i as i64) as u64
    }

    fn id_at(&self, i: u64) -> u64 {
        (self.first_id as i64 + self.step * i as i64) as u64
    }

    fn try_extend(&mut self, center: u32, local: u64, weight: f64, x: &Point) -> bool {
        if self.center != center || self.weight != weight || self.first_local + self.len != local {
            return false;
        }
        let step = match self.step {
            0 => x.timestamp as i64 - self.first_ts as i64,
            s => s,
        };
        if step.abs() != 1 {
            return false;
        }
        let n = self.len as i64;
        if x.timestamp as i64 != self.first_ts as i64 + step * n || x.id as i64 != self.first_id as i64 + step * n {
            return false;
        }
        self.step = step;
        self.len += 1;
        true
    }

    /// Elements that arrived at local time `<= t`.
    fn count_until(&self, t: u64) -> u64 {
        if t < self.first_local {
            0
        } else {
            (t - self.first_local + 1).min(self.len)
        }
    }

    /// Elements with original timestamp `>= cutoff`.
    fn count_since(&self, cutoff: u64) -> u64 {
        let last = self.ts_at(self.len - 1);
        let (lo, hi) = (self.first_ts.min(last), self.first_ts.max(last));
        if hi < cutoff {
            0
        } else {
            hi - cutoff.max(lo) + 1
        }
    }
}

/// Materializes per-center tallies as weighted center points, in center order.
fn tallies(runs: &[ZeroRun], centers: impl Fn(u32) -> Point, count: impl Fn(&ZeroRun) -> u64) -> Vec<WeightedPoint> {
    let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
    for r in runs {
        let c = count(r);
        if c > 0 {
            *acc.entry(r.center).or_default() += c as f64 * r.weight;
        }
    }
    acc.into_iter()
        .map(|(c, w)| WeightedPoint::new(centers(c), w))
        .collect()
}

/// Report of a single ingest, for tests and diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IngestOutcome {
    pub assignment: AssignmentRecord,
    pub key: RingKey,
    pub group: Option<GroupKey>,
    pub p: f64,
    pub sampled: bool,
}

/// A classified point waiting for its sampling decision.
#[derive(Clone, Debug)]
struct Pending {
    point: Point,
    weight: f64,
    local: u64,
    assignment: AssignmentRecord,
    group: Option<GroupKey>,
    group_mass: f64,
}

/// How the numerator `s` of `p = min(w s / r, 1)` is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Numerator {
    Fixed(f64),
    /// All points kept.
    Exact,
}

#[derive(Clone, Debug)]
pub struct OnlineCoreset {
    params: StreamParams,
    config: RingConfig,
    order: ArrivalOrder,
    meyerson: MultMeyerson,
    numerator: Numerator,
    stats: GroupStats,
    samples: Vec<Sample>,
    zero_runs: Vec<ZeroRun>,
    time: u64,
    last_ts: Option<u64>,
    rng: ChaCha8Rng,
}

impl OnlineCoreset {
    pub fn new(params: StreamParams, config: RingConfig, seed: u64) -> Result<Self> {
        Self::with_order(params, config, ArrivalOrder::Forward, seed)
    }

    pub fn with_order(params: StreamParams, config: RingConfig, order: ArrivalOrder, seed: u64) -> Result<Self> {
        params.validate()?;
        if !(config.c_gamma > 0.0) {
            return Err(invalid("c_gamma", "must be positive"));
        }
        if let Some(t) = config.target_samples {
            if !(t > 0.0) {
                return Err(invalid("target_samples", "must be positive"));
            }
        }
        let meyerson = MultMeyerson::new(params.clone(), config.meyerson.clone(), seed ^ 0x9e37_79b9_7f4a_7c15)?;
        let numerator = if config.exact_mode {
            Numerator::Exact
        } else if let Some(t) = config.target_samples {
            // Streaming approximation of the calibrated numerator: a group
            // of size n keeps about s (1 + ln(n / s)) points.
            Numerator::Fixed(t / (1.0 + (params.horizon as f64).ln()))
        } else {
            Numerator::Fixed(0.0)
        };
        let mut out = OnlineCoreset {
            params,
            config,
            order,
            meyerson,
            numerator,
            stats: GroupStats::default(),
            samples: Vec::new(),
            zero_runs: Vec::new(),
            time: 0,
            last_ts: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        if out.numerator == Numerator::Fixed(0.0) {
            out.numerator = Numerator::Fixed(4.0 * out.theoretical_gamma(None) * out.params.log_n());
        }
        Ok(out)
    }

    /// Builds a coreset over a materialized sequence, choosing the numerator
    /// so that the expected number of samples equals `target_samples` when
    /// set. Group positions do not depend on the sampling decisions, so the
    /// result is distributed exactly as a streaming run with that numerator.
    pub fn build(
        params: StreamParams,
        config: RingConfig,
        order: ArrivalOrder,
        points: impl IntoIterator<Item = WeightedPoint>,
        seed: u64,
    ) -> Result<Self> {
        let mut cs = Self::with_order(params, config, order, seed)?;
        let mut pending = Vec::new();
        for wp in points {
            pending.push(cs.classify(wp.point, wp.weight)?);
        }
        if let (Numerator::Fixed(_), Some(target)) = (cs.numerator, cs.config.target_samples) {
            cs.numerator = Numerator::Fixed(calibrate(&pending, target));
        }
        for p in pending {
            cs.admit(p);
        }
        Ok(cs)
    }

    /// γ from the formula with α = 2^{z+7} and β from the bicriteria budget.
    pub fn theoretical_gamma(&self, dim: Option<usize>) -> f64 {
        let p = &self.params;
        let d = dim.unwrap_or(1) as f64;
        let centroid_log = self
            .config
            .centroid_log
            .unwrap_or_else(|| d * (2.0 * p.aspect_bound * p.horizon as f64 / p.epsilon).log2());
        gamma(&GammaInputs {
            k: p.k,
            z: p.z,
            epsilon: p.epsilon,
            alpha: 2f64.powi(p.z as i32 + 7),
            beta: self.config.meyerson.beta_cap(p) / p.k as f64,
            centroid_log,
            horizon: p.horizon,
            c_gamma: self.config.c_gamma,
        })
    }

    /// γ implied by the numerator in use, `s / (4 log N)`.
    pub fn effective_gamma(&self) -> f64 {
        match self.numerator {
            Numerator::Fixed(s) => s / (4.0 * self.params.log_n()),
            Numerator::Exact => f64::INFINITY,
        }
    }

    pub fn ingest(&mut self, x: Point) -> Result<IngestOutcome> {
        self.ingest_weighted(x, 1.0)
    }

    /// Processes a point standing for `weight` unit copies.
    pub fn ingest_weighted(&mut self, x: Point, weight: f64) -> Result<IngestOutcome> {
        let pending = self.classify(x, weight)?;
        Ok(self.admit(pending))
    }

    fn classify(&mut self, x: Point, weight: f64) -> Result<Pending> {
        if let Some(last) = self.last_ts {
            let ok = match self.order {
                ArrivalOrder::Forward => x.timestamp > last,
                ArrivalOrder::Reverse => x.timestamp < last,
            };
            if !ok {
                return Err(invalid(
                    "timestamp",
                    format!("{} does not follow {} in {:?} order", x.timestamp, last, self.order),
                ));
            }
        }
        let assignment = self.meyerson.ingest_weighted(&x, weight)?;
        self.last_ts = Some(x.timestamp);
        self.time += 1;
        let cost = weight * assignment.cost_z;
        self.stats
            .centers
            .entry(assignment.center_id)
            .or_default()
            .add(weight, cost);
        let (group, group_mass) = match ring_index(assignment.cost_z) {
            None => (None, 0.0),
            Some(j) => {
                let ring = self.stats.rings.entry((assignment.center_id, j)).or_default();
                ring.add(weight, cost);
                let key = GroupKey {
                    ring: j,
                    group: group_index_mass(ring.mass),
                };
                let cell = self.stats.groups.entry(key).or_default();
                cell.add(weight, cost);
                (Some(key), cell.mass)
            }
        };
        Ok(Pending {
            point: x,
            weight,
            local: self.time,
            assignment,
            group,
            group_mass,
        })
    }

    fn probability(&self, weight: f64, group_mass: f64) -> f64 {
        match self.numerator {
            Numerator::Exact => 1.0,
            Numerator::Fixed(s) => {
                let floor = 1.0 / (self.params.horizon as f64).powi(2);
                (weight * s / group_mass).clamp(floor, 1.0)
            }
        }
    }

    fn admit(&mut self, p: Pending) -> IngestOutcome {
        let exact = self.numerator == Numerator::Exact;
        let key = RingKey {
            center: p.assignment.center_id,
            ring: p.group.map(|g| g.ring),
        };
        let Some(group) = p.group else {
            if exact {
                self.samples.push(Sample {
                    point: WeightedPoint::new(p.point, p.weight),
                    local_time: p.local,
                    center: key.center,
                    group: GroupKey {
                        ring: i32::MIN,
                        group: 0,
                    },
                    p: 1.0,
                    group_mass: 0.0,
                });
                return IngestOutcome {
                    assignment: p.assignment,
                    key,
                    group: None,
                    p: 1.0,
                    sampled: true,
                };
            }
            self.push_zero(key.center, p.local, p.weight, &p.point);
            return IngestOutcome {
                assignment: p.assignment,
                key,
                group: None,
                p: 1.0,
                sampled: false,
            };
        };
        let prob = self.probability(p.weight, p.group_mass);
        let sampled = prob >= 1.0 || self.rng.random::<f64>() < prob;
        if sampled {
            *self.stats.sampled.entry(group).or_default() += 1;
            self.samples.push(Sample {
                point: WeightedPoint::new(p.point, p.weight / prob),
                local_time: p.local,
                center: key.center,
                group,
                p: prob,
                group_mass: p.group_mass,
            });
        }
        IngestOutcome {
            assignment: p.assignment,
            key,
            group: Some(group),
            p: prob,
            sampled,
        }
    }

    fn push_zero(&mut self, center: u32, local: u64, weight: f64, x: &Point) {
        if let Some(last) = self.zero_runs.last_mut() {
            if last.try_extend(center, local, weight, x) {
                return;
            }
        }
        self.zero_runs.push(ZeroRun {
            center,
            first_local: local,
            len: 1,
            weight,
            first_id: x.id,
            first_ts: x.timestamp,
            step: 0,
        });
    }

    /// Weighted coreset of the first `t` arrivals.
    pub fn extract(&self, t: u64) -> Result<Vec<WeightedPoint>> {
        if t > self.time {
            return Err(Error::TimeOutOfRange { t, now: self.time });
        }
        if self.config.substitute_centers && t == self.time && t > 0 {
            return Ok(self.extract_substituted());
        }
        let mut out: Vec<WeightedPoint> = self
            .samples
            .iter()
            .take_while(|s| s.local_time <= t)
            .map(|s| s.point.clone())
            .collect();
        out.extend(tallies(
            &self.zero_runs,
            |c| self.meyerson.center(c).clone(),
            |r| r.count_until(t),
        ));
        Ok(out)
    }

    /// Weighted coreset of the arrivals with original timestamp `>= cutoff`.
    pub fn extract_since(&self, cutoff: u64) -> Vec<WeightedPoint> {
        self.freeze_ref().extract_since(cutoff)
    }

    /// Replaces samples of inner rings, light rings and light outer clusters
    /// by their centers, weighted by the exact tracked ring weights. Uses the
    /// statistics as of now, so it applies to the full prefix only.
    fn extract_substituted(&self) -> Vec<WeightedPoint> {
        let p = &self.params;
        let z = p.z as i32;
        let zf = p.z as f64;
        let eps = p.epsilon;
        let beta_k = self.config.meyerson.beta_cap(p);
        let mut ring_cost_by_j: HashMap<i32, f64> = HashMap::new();
        for (&(_, j), cell) in &self.stats.rings {
            *ring_cost_by_j.entry(j).or_default() += cell.cost;
        }
        let kappa = |c: u32| {
            let cell = self.stats.centers[&c];
            if cell.mass > 0.0 {
                cell.cost / cell.mass
            } else {
                0.0
            }
        };
        let inner_limit = (eps / zf).powi(2 * z);
        let outer_limit = (zf / eps).powi(2 * z);
        let is_outer = |c: u32, j: i32| kappa(c) > 0.0 && 2f64.powi(j) >= outer_limit * kappa(c);
        let mut outer_cost: HashMap<u32, f64> = HashMap::new();
        for (&(c, j), cell) in &self.stats.rings {
            if is_outer(c, j) {
                *outer_cost.entry(c).or_default() += cell.cost;
            }
        }
        let total_outer: f64 = outer_cost.values().sum();
        let light = 2.0 * (eps / (4.0 * zf)).powi(z) / beta_k;
        let substituted = |c: u32, j: i32| -> bool {
            let cell = self.stats.rings[&(c, j)];
            let inner = 2f64.powi(j + 1) <= inner_limit * kappa(c);
            let light_ring = cell.cost < light * ring_cost_by_j[&j];
            let light_outer = is_outer(c, j) && outer_cost[&c] < 0.5 * light * total_outer;
            inner || light_ring || light_outer
        };
        let mut extra: BTreeMap<u32, f64> = BTreeMap::new();
        for (&(c, j), cell) in &self.stats.rings {
            if substituted(c, j) {
                *extra.entry(c).or_default() += cell.mass;
            }
        }
        let mut out: Vec<WeightedPoint> = self
            .samples
            .iter()
            .filter(|s| !substituted(s.center, s.group.ring))
            .map(|s| s.point.clone())
            .collect();
        for r in &self.zero_runs {
            *extra.entry(r.center).or_default() += r.len as f64 * r.weight;
        }
        out.extend(
            extra
                .into_iter()
                .map(|(c, w)| WeightedPoint::new(self.meyerson.center(c).clone(), w)),
        );
        out
    }

    fn freeze_ref(&self) -> FrozenCoreset {
        FrozenCoreset::from_parts(&self.samples, &self.zero_runs, |c| self.meyerson.center(c).clone())
    }

    /// Drops the bicriteria state, keeping only what extraction needs.
    pub fn freeze(&self) -> FrozenCoreset {
        self.freeze_ref()
    }

    pub fn params(&self) -> &StreamParams {
        &self.params
    }

    pub fn config(&self) -> &RingConfig {
        &self.config
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn stats(&self) -> &GroupStats {
        &self.stats
    }

    pub fn group_stats(&self, j: i32, b: u32) -> (u64, f64) {
        self.stats.group(j, b)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn zero_runs(&self) -> &[ZeroRun] {
        &self.zero_runs
    }

    pub fn meyerson(&self) -> &MultMeyerson {
        &self.meyerson
    }

    /// Stored entries: samples plus zero-cost runs.
    pub fn stored_len(&self) -> usize {
        self.samples.len() + self.zero_runs.len()
    }

    /// Writes `point_id,timestamp,weight,center_id,j,b,p_x`. Zero-cost tallies
    /// appear once per center with `j = zero`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["point_id", "timestamp", "weight", "center_id", "j", "b", "p_x"])?;
        for s in &self.samples {
            let (j, b) = if s.group.ring == i32::MIN {
                ("zero".to_string(), String::new())
            } else {
                (s.group.ring.to_string(), s.group.group.to_string())
            };
            w.write_record([
                s.point.point.id.to_string(),
                s.point.point.timestamp.to_string(),
                s.point.weight.to_string(),
                s.center.to_string(),
                j,
                b,
                s.p.to_string(),
            ])?;
        }
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for r in &self.zero_runs {
            *acc.entry(r.center).or_default() += r.len as f64 * r.weight;
        }
        for (c, weight) in acc {
            let center = self.meyerson.center(c);
            w.write_record([
                center.id.to_string(),
                center.timestamp.to_string(),
                weight.to_string(),
                c.to_string(),
                "zero".to_string(),
                String::new(),
                "1".to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Numerator `s` with `Σ min(w s / r, 1) = target`, by bisection.
fn calibrate(pending: &[Pending], target: f64) -> f64 {
    let ratios: Vec<(f64, f64)> = pending
        .iter()
        .filter(|p| p.group.is_some())
        .map(|p| (p.weight, p.group_mass))
        .collect();
    if ratios.len() as f64 <= target {
        return f64::INFINITY;
    }
    let expected = |s: f64| -> f64 { ratios.iter().map(|&(w, r)| (w * s / r).min(1.0)).sum() };
    let mut hi = ratios.iter().map(|&(w, r)| r / w).fold(0.0, f64::max);
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    hi
}

/// Extraction-only view of an online coreset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrozenCoreset {
    pub samples: Vec<FrozenSample>,
    pub zero_runs: Vec<ZeroRun>,
    /// Centers referenced by `zero_runs`, indexed by their `center` field.
    pub centers: Vec<Point>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrozenSample {
    pub point: WeightedPoint,
    pub local_time: u64,
}

impl FrozenCoreset {
    fn from_parts(samples: &[Sample], runs: &[ZeroRun], center: impl Fn(u32) -> Point) -> Self {
        let mut remap: BTreeMap<u32, u32> = BTreeMap::new();
        let mut centers = Vec::new();
        let zero_runs = runs
            .iter()
            .map(|r| {
                let id = *remap.entry(r.center).or_insert_with(|| {
                    centers.push(center(r.center));
                    centers.len() as u32 - 1
                });
                ZeroRun {
                    center: id,
                    ..r.clone()
                }
            })
            .collect();
        FrozenCoreset {
            samples: samples
                .iter()
                .map(|s| FrozenSample {
                    point: s.point.clone(),
                    local_time: s.local_time,
                })
                .collect(),
            zero_runs,
            centers,
        }
    }

    /// Weighted coreset of the entries with timestamp `>= cutoff`, zero-cost
    /// runs collapsed onto their centers.
    pub fn extract_since(&self, cutoff: u64) -> Vec<WeightedPoint> {
        let mut out: Vec<WeightedPoint> = self
            .samples
            .iter()
            .filter(|s| s.point.timestamp() >= cutoff)
            .map(|s| s.point.clone())
            .collect();
        out.extend(tallies(
            &self.zero_runs,
            |c| self.centers[c as usize].clone(),
            |r| r.count_since(cutoff),
        ));
        out
    }

    /// Every stored entry as an individual weighted point, zero-cost runs
    /// expanded, ordered by decreasing timestamp.
    pub fn entries_newest_first(&self) -> Vec<WeightedPoint> {
        let mut out: Vec<WeightedPoint> = self.samples.iter().map(|s| s.point.clone()).collect();
        for r in &self.zero_runs {
            let c = &self.centers[r.center as usize];
            for i in 0..r.len {
                let p = Point::new(r.id_at(i), r.ts_at(i), c.coords.clone());
                out.push(WeightedPoint::new(p, r.weight));
            }
        }
        out.sort_by_key(|w| std::cmp::Reverse(w.timestamp()));
        out
    }

    /// Number of stored entries (samples plus runs).
    pub fn stored_len(&self) -> usize {
        self.samples.len() + self.zero_runs.len()
    }

    pub fn span(&self) -> Option<(u64, u64)> {
        let ts = self
            .samples
            .iter()
            .map(|s| (s.point.timestamp(), s.point.timestamp()))
            .chain(self.zero_runs.iter().map(|r| {
                let last = r.ts_at(r.len - 1);
                (r.first_ts.min(last), r.first_ts.max(last))
            }));
        ts.fold(None, |acc, (lo, hi)| match acc {
            None => Some((lo, hi)),
            Some((a, b)) => Some((a.min(lo), b.max(hi))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{cost, CenterSet, Metric};
    use rand_distr::{Distribution, Normal};

    fn params() -> StreamParams {
        StreamParams::new(2, 2, 2f64.powi(16), 1 << 12)
    }

    fn desk_config() -> RingConfig {
        RingConfig {
            target_samples: Some(60.0),
            meyerson: MeyersonConfig {
                repetitions: Some(1),
                capacity_scale: 0.02,
                guess_floor: 0.01,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn stream(n: usize, seed: u64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        (0..n)
            .map(|i| {
                let c = [[-8.0, 3.0], [6.0, -2.0], [0.0, 9.0]][rng.random_range(0..3)];
                let coords = vec![c[0] + normal.sample(&mut rng), c[1] + 2.0 * normal.sample(&mut rng)];
                Point::new(i as u64 + 1, i as u64 + 1, coords)
            })
            .collect()
    }

    #[test]
    fn ring_index_examples() {
        assert_eq!(ring_index(5.0), Some(2));
        assert_eq!(ring_index(1.0), Some(0));
        assert_eq!(ring_index(0.0), None);
        assert_eq!(ring_index(0.75), Some(-1));
        for j in -40..40 {
            let v = 2f64.powi(j);
            assert_eq!(ring_index(v), Some(j));
            assert_eq!(ring_index(v * 1.999_999), Some(j));
            assert_eq!(ring_index(v * 0.999_999_9), Some(j - 1));
        }
    }

    #[test]
    fn group_index_examples() {
        assert_eq!(group_index(1), 0);
        assert_eq!(group_index(2), 1);
        assert_eq!(group_index(3), 2);
        assert_eq!(group_index(4), 2);
        assert_eq!(group_index(5), 3);
        assert_eq!(group_index(8), 3);
        assert_eq!(group_index(9), 4);
        for r in 2..2000u64 {
            let b = group_index(r);
            assert!((1u64 << (b - 1)) < r && r <= 1u64 << b);
            assert_eq!(group_index_mass(r as f64), b);
        }
    }

    fn gamma_base() -> GammaInputs {
        GammaInputs {
            k: 1,
            z: 2,
            epsilon: 0.5,
            alpha: 1.0,
            beta: 1.0,
            centroid_log: 10.0,
            horizon: 1 << 10,
            c_gamma: 1.0,
        }
    }

    #[test]
    fn gamma_formula() {
        // max(1,1)*1/min(1/4,1/4) = 4; log2(2)^2 = 1 twice; k*10 + log2(log2 2) + 10 = 20.
        assert_eq!(gamma(&gamma_base()), 80.0);
        let doubled = GammaInputs {
            c_gamma: 2.0,
            ..gamma_base()
        };
        assert_eq!(gamma(&doubled), 160.0);
        let mut prev = 0.0;
        for eps in [0.9, 0.7, 0.5, 0.3, 0.1, 0.01] {
            let g = gamma(&GammaInputs {
                epsilon: eps,
                ..gamma_base()
            });
            assert!(g >= prev, "gamma must grow as epsilon shrinks");
            prev = g;
        }
    }

    #[test]
    fn empty_and_first_point() {
        let mut cs = OnlineCoreset::new(params(), RingConfig::default(), 1).unwrap();
        assert_eq!(cs.group_stats(2, 0), (0, 0.0));
        assert!(cs.extract(0).unwrap().is_empty());
        cs.ingest(Point::new(1, 1, vec![0.0, 0.0])).unwrap();
        // Point at squared distance 5 from the first: may open or be assigned.
        let out = cs.ingest(Point::new(2, 2, vec![1.0, 2.0])).unwrap();
        if out.assignment.cost_z > 0.0 {
            assert_eq!(cs.group_stats(2, 0), (1, 5.0));
            assert_eq!(out.p, 1.0);
            assert!(out.sampled);
        }
        assert!(matches!(cs.extract(3), Err(Error::TimeOutOfRange { t: 3, now: 2 })));
    }

    #[test]
    fn exact_mode_keeps_everything() {
        let pts = stream(400, 3);
        let mut cs = OnlineCoreset::new(params(), RingConfig::exact(), 7).unwrap();
        for p in &pts {
            let out = cs.ingest(p.clone()).unwrap();
            assert!(out.sampled && out.p == 1.0);
        }
        let all = cs.extract(400).unwrap();
        assert_eq!(all.len(), 400);
        assert!(all.iter().all(|w| w.weight == 1.0));
        let centers = CenterSet::new(vec![vec![1.0, 1.0], vec![-3.0, 4.0]]);
        for t in [1u64, 57, 200, 400] {
            let truth = cost(
                &crate::metric::unit_weights(&pts[..t as usize]),
                &centers,
                2,
                Metric::Euclidean,
            )
            .unwrap();
            let est = cost(&cs.extract(t).unwrap(), &centers, 2, Metric::Euclidean).unwrap();
            assert_eq!(truth, est);
        }
    }

    #[test]
    fn order_is_enforced() {
        let mut cs = OnlineCoreset::new(params(), RingConfig::default(), 1).unwrap();
        cs.ingest(Point::new(5, 5, vec![0.0])).unwrap();
        assert!(cs.ingest(Point::new(4, 4, vec![0.0])).is_err());
        let mut rev = OnlineCoreset::with_order(params(), RingConfig::default(), ArrivalOrder::Reverse, 1).unwrap();
        rev.ingest(Point::new(5, 5, vec![0.0])).unwrap();
        rev.ingest(Point::new(4, 4, vec![0.0])).unwrap();
        assert!(rev.ingest(Point::new(9, 9, vec![0.0])).is_err());
    }

    #[test]
    fn group_costs_sum_to_assignment_cost() {
        let pts = stream(3000, 5);
        let mut cs = OnlineCoreset::new(params(), desk_config(), 2).unwrap();
        for p in &pts {
            cs.ingest(p.clone()).unwrap();
        }
        let total = cs.stats().total_group_cost();
        let c_mu = cs.meyerson().assigned_cost();
        assert!((total - c_mu).abs() <= 1e-12 * c_mu, "{total} vs {c_mu}");
    }

    #[test]
    fn weight_law_and_persistence() {
        let pts = stream(2000, 8);
        let mut cs = OnlineCoreset::new(params(), desk_config(), 3).unwrap();
        let mut prev_samples = 0;
        let mut prev_groups: HashMap<GroupKey, Cell> = HashMap::new();
        for (i, p) in pts.iter().enumerate() {
            cs.ingest(p.clone()).unwrap();
            assert!(cs.samples().len() >= prev_samples);
            prev_samples = cs.samples().len();
            if i % 97 == 0 {
                for (k, old) in &prev_groups {
                    let new = cs.stats().groups[k];
                    assert!(new.count >= old.count && new.cost >= old.cost);
                }
                prev_groups = cs.stats().groups.clone();
            }
        }
        let Numerator::Fixed(s) = cs.numerator else {
            unreachable!()
        };
        for smp in cs.samples() {
            let p = (s / smp.group_mass).clamp(1.0 / (cs.params().horizon as f64).powi(2), 1.0);
            assert_eq!(p, smp.p);
            assert_eq!(smp.point.weight, 1.0 / p);
            assert!(smp.point.weight >= 1.0);
        }
        // extract(t) grows as a multiset.
        let a = cs.extract(700).unwrap();
        let b = cs.extract(1500).unwrap();
        for s in cs.samples().iter().filter(|s| s.local_time <= 700) {
            assert!(b.iter().any(|w| w.point.id == s.point.point.id));
        }
        assert!(a.len() <= b.len());
    }

    #[test]
    fn calibrated_build_hits_target_in_expectation() {
        let pts = stream(4000, 12);
        let mut counts = Vec::new();
        for seed in 0..20 {
            let cs = OnlineCoreset::build(
                params(),
                RingConfig {
                    target_samples: Some(150.0),
                    ..desk_config()
                },
                ArrivalOrder::Forward,
                crate::metric::unit_weights(&pts),
                seed,
            )
            .unwrap();
            counts.push(cs.samples().len() as f64);
        }
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        assert!((mean - 150.0).abs() < 15.0, "mean sample count {mean}");
    }

    #[test]
    fn zero_runs_compress_duplicates() {
        let mut cs = OnlineCoreset::new(params(), desk_config(), 1).unwrap();
        for i in 1..=50u64 {
            cs.ingest(Point::new(i, i, vec![3.0, 3.0])).unwrap();
        }
        assert_eq!(cs.zero_runs().len(), 1);
        assert!(cs.samples().is_empty());
        let ex = cs.extract(20).unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].weight, 20.0);
        let frozen = cs.freeze();
        assert_eq!(frozen.extract_since(41)[0].weight, 10.0);
        let expanded = frozen.entries_newest_first();
        assert_eq!(expanded.len(), 50);
        assert_eq!(expanded[0].point.id, 50);
        assert_eq!(frozen.span(), Some((1, 50)));
    }

    #[test]
    fn reverse_zero_runs_filter_exactly() {
        let mut cs = OnlineCoreset::with_order(params(), desk_config(), ArrivalOrder::Reverse, 1).unwrap();
        for i in (1..=30u64).rev() {
            cs.ingest(Point::new(i, i, vec![1.0])).unwrap();
        }
        let frozen = cs.freeze();
        for cutoff in 1..=31u64 {
            let w: f64 = frozen.extract_since(cutoff).iter().map(|p| p.weight).sum();
            assert_eq!(w, (31 - cutoff) as f64);
        }
    }

    #[test]
    fn csv_export_header() {
        let pts = stream(200, 1);
        let mut cs = OnlineCoreset::new(params(), desk_config(), 1).unwrap();
        for p in &pts {
            cs.ingest(p.clone()).unwrap();
        }
        let mut buf = Vec::new();
        cs.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("point_id,timestamp,weight,center_id,j,b,p_x\n"));
        assert!(text.lines().count() > cs.samples().len());
    }

    #[test]
    fn substitute_mode_preserves_total_weight() {
        let pts = stream(1500, 4);
        let config = RingConfig {
            substitute_centers: true,
            ..desk_config()
        };
        let mut cs = OnlineCoreset::new(params(), config, 9).unwrap();
        for p in &pts {
            cs.ingest(p.clone()).unwrap();
        }
        let out = cs.extract(1500).unwrap();
        let w: f64 = out.iter().map(|p| p.weight).sum();
        // Substituted rings carry exact weight; the rest is an unbiased sample.
        assert!(w > 0.5 * 1500.0 && w < 2.0 * 1500.0, "total weight {w}");
    }
}
