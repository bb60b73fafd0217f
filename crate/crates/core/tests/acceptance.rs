//! Acceptance suite. Each test prints one `PASS`/`FAIL` line and then asserts.
//!
//! Run with `cargo test -p swcoreset --test acceptance -- --nocapture` to see
//! the report lines. Set `SWCORESET_FULL_SCALE=1` for the full-size synthetic
//! experiment and `SWCORESET_SKIN=/path/to/Skin_NonSkin.txt` to enable the
//! SKIN pipeline.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use swcoreset::harness::datasets::{
    build_noisy_skin_stream, gen_gaussian_mixture, load_skin_dataset, skin_path, Component, DatasetSpec, SKIN_ROWS,
};
use swcoreset::harness::experiment::{desk_meyerson, run_experiment, summarize_rows, Algo, ExperimentConfig};
use swcoreset::harness::lowerbound::{lowerbound_sweep, sweep_medians, SweepConfig};
use swcoreset::harness::verify::{measure_with_random_probes, probe_times};
use swcoreset::metric::unit_weights;
use swcoreset::meyerson::{AssignmentRecord, MeyersonConfig};
use swcoreset::ring::GroupKey;
use swcoreset::window::level_slots;
use swcoreset::{
    cost, weighted_kmeans, CenterSet, Metric, MultMeyerson, OnlineCoreset, Point, RingConfig, SlidingWindowConfig,
    SlidingWindowCoreset, SolveConfig, StreamParams,
};

fn report(id: u32, name: &str, pass: bool, elapsed: Duration, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!(
        "criterion {id:>2} [{verdict}] {name} ({:.1}s): {detail}",
        elapsed.as_secs_f64()
    );
}

fn finish(id: u32, name: &str, ok: bool, start: Instant, limit: Duration, detail: String) {
    let elapsed = start.elapsed();
    let in_time = elapsed < limit;
    report(id, name, ok && in_time, elapsed, &detail);
    assert!(in_time, "criterion {id} took {elapsed:?}, limit {limit:?}");
    assert!(ok, "criterion {id} failed: {detail}");
}

fn gaussian_stream(n: usize, d: usize, clusters: usize, spread: f64, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let means: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..d).map(|_| rng.random_range(-spread..spread)).collect())
        .collect();
    let sigma: Vec<f64> = (0..clusters).map(|_| rng.random_range(0.5..3.0)).collect();
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..n)
        .map(|i| {
            let c = rng.random_range(0..clusters);
            let coords = (0..d).map(|j| means[c][j] + sigma[c] * normal.sample(rng)).collect();
            Point::new(i as u64 + 1, i as u64 + 1, coords)
        })
        .collect()
}

fn relative(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}

#[test]
fn c01_exactness_anchor() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut probes = 0usize;
    for _ in 0..50 {
        let n = rng.random_range(50..=2000);
        let d = rng.random_range(1..=4);
        let k = rng.random_range(1..=3);
        let m = rng.random_range(8..=128);
        let pts = gaussian_stream(n, d, k, 30.0, &mut rng);
        let params = StreamParams::new(k, 2, 2f64.powi(24), (n as u64).next_power_of_two());
        let mut sw = SlidingWindowCoreset::exact(params, m).unwrap();
        for p in &pts {
            sw.ingest(p.clone()).unwrap();
        }
        let sets: Vec<CenterSet> = (0..10)
            .map(|_| {
                CenterSet::new(
                    (0..k)
                        .map(|_| (0..d).map(|_| rng.random_range(-40.0..40.0)).collect())
                        .collect(),
                )
            })
            .collect();
        let mut windows: Vec<u64> = (0..8).map(|_| rng.random_range(1..=n as u64)).collect();
        windows.extend([1, n as u64]);
        for w in windows {
            let got = sw.query(w).unwrap();
            let truth = unit_weights(&pts[n - w as usize..]);
            for c in &sets {
                let a = cost(&got, c, 2, Metric::Euclidean).unwrap();
                let b = cost(&truth, c, 2, Metric::Euclidean).unwrap();
                worst = worst.max(relative(a, b));
                probes += 1;
            }
        }
    }
    finish(
        1,
        "exactness anchor",
        worst <= 1e-9,
        start,
        Duration::from_secs(120),
        format!("max relative error {worst:.2e} over {probes} probes"),
    );
}

#[test]
fn c02_online_unbiasedness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let n = 500;
    let pts = gaussian_stream(n, 2, 3, 20.0, &mut rng);
    let centers = CenterSet::new(vec![vec![0.0, 0.0], vec![15.0, -5.0], vec![-10.0, 12.0]]);
    let params = StreamParams::new(3, 2, 2f64.powi(20), 1 << 10);
    let config = RingConfig {
        target_samples: Some(100.0),
        meyerson: desk_meyerson(),
        ..Default::default()
    };
    let probes = [n as u64 / 4, n as u64 / 2, n as u64];
    let mut ok = true;
    let mut detail = Vec::new();
    let mut estimates: Vec<Vec<f64>> = vec![Vec::new(); probes.len()];
    let mut sizes = 0usize;
    for seed in 0..200u64 {
        let mut cs = OnlineCoreset::new(params.clone(), config.clone(), seed).unwrap();
        for p in &pts {
            cs.ingest(p.clone()).unwrap();
        }
        sizes += cs.samples().len();
        for (i, &t) in probes.iter().enumerate() {
            estimates[i].push(cost(&cs.extract(t).unwrap(), &centers, 2, Metric::Euclidean).unwrap());
        }
    }
    for (i, &t) in probes.iter().enumerate() {
        let truth = cost(&unit_weights(&pts[..t as usize]), &centers, 2, Metric::Euclidean).unwrap();
        let e = &estimates[i];
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        let var = e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (e.len() - 1) as f64;
        let se = (var / e.len() as f64).sqrt();
        let z = (mean - truth).abs() / se;
        ok &= z <= 3.0;
        detail.push(format!("t={t} |mean-truth|/se={z:.2}"));
    }
    detail.push(format!("mean samples {:.0}", sizes as f64 / 200.0));
    finish(
        2,
        "online-coreset unbiasedness",
        ok,
        start,
        Duration::from_secs(60),
        detail.join(", "),
    );
}

/// Shadow state of one coreset, rebuilt from ingest outcomes only.
struct Shadow {
    assignments: Vec<AssignmentRecord>,
    sampled_ids: Vec<u64>,
    groups: HashMap<GroupKey, (u64, f64)>,
    zero_tally: HashMap<u32, f64>,
}

/// Runs the randomized ingest suite and returns (events, violations,
/// concentration failures, largest count-to-bound ratio).
fn randomized_suite() -> (u64, u64, u64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut events = 0u64;
    let mut violations = 0u64;
    let mut concentration = 0u64;
    let mut worst_ratio = 0.0f64;
    let mut run = 0u64;
    while events < 1_000_000 {
        run += 1;
        let n = rng.random_range(2_000..12_000);
        let d = rng.random_range(1..=3);
        let k = rng.random_range(1..=4);
        let mut pts = gaussian_stream(n, d, k, 50.0, &mut rng);
        // Exact duplicates exercise the zero-cost path.
        for i in (1..n).step_by(7) {
            pts[i].coords = pts[i - 1].coords.clone();
        }
        let z = 1 + (run % 2) as u32;
        let params = StreamParams::new(k, z, 2f64.powi(24), (n as u64).next_power_of_two());
        let target = if run.is_multiple_of(5) {
            None
        } else {
            Some(rng.random_range(50.0..600.0))
        };
        let config = RingConfig {
            target_samples: target,
            meyerson: MeyersonConfig {
                keep_log: true,
                ..desk_meyerson()
            },
            ..Default::default()
        };
        let mut cs = OnlineCoreset::new(params.clone(), config, run).unwrap();
        let mut shadow = Shadow {
            assignments: Vec::with_capacity(n),
            sampled_ids: Vec::new(),
            groups: HashMap::new(),
            zero_tally: HashMap::new(),
        };
        let mut last_group_snapshot = HashMap::new();
        for (i, p) in pts.iter().enumerate() {
            let out = cs.ingest(p.clone()).unwrap();
            events += 1;
            shadow.assignments.push(out.assignment);
            if out.sampled {
                shadow.sampled_ids.push(p.id);
            }
            match out.group {
                Some(g) => {
                    let e = shadow.groups.entry(g).or_default();
                    e.0 += 1;
                    e.1 += out.assignment.cost_z;
                    let live = cs.group_stats(g.ring, g.group);
                    if live.0 != e.0 || relative(live.1, e.1) > 1e-9 {
                        violations += 1;
                    }
                }
                None => *shadow.zero_tally.entry(out.assignment.center_id).or_default() += 1.0,
            }
            if i % 1000 == 999 || i + 1 == n {
                // Every group is nondecreasing between checkpoints.
                for (key, cell) in &cs.stats().groups {
                    let before: &(u64, f64) = last_group_snapshot.get(key).unwrap_or(&(0, 0.0));
                    if cell.count < before.0 || cell.cost < before.1 {
                        violations += 1;
                    }
                }
                if last_group_snapshot.keys().any(|k| !cs.stats().groups.contains_key(k)) {
                    violations += 1;
                }
                last_group_snapshot = cs.stats().groups.iter().map(|(k, c)| (*k, (c.count, c.cost))).collect();
            }
        }
        // π is immutable: the final log equals what was reported at ingest.
        if cs.meyerson().log() != shadow.assignments.as_slice() {
            violations += 1;
        }
        for rec in &shadow.assignments {
            let c = cs.meyerson().center(rec.center_id);
            let x = &pts[rec.assign_time as usize - 1];
            if relative(Metric::Euclidean.cost_z(&x.coords, &c.coords, z), rec.cost_z) > 1e-9 {
                violations += 1;
            }
        }
        // Samples persist in arrival order.
        let kept: Vec<u64> = cs.samples().iter().map(|s| s.point.point.id).collect();
        if kept != shadow.sampled_ids {
            violations += 1;
        }
        let mut runs: HashMap<u32, f64> = HashMap::new();
        for r in cs.zero_runs() {
            *runs.entry(r.center).or_default() += r.weight * r.len as f64;
        }
        if runs != shadow.zero_tally {
            violations += 1;
        }
        let mut prev = 0usize;
        for t in probe_times(n as u64, 10) {
            let len = cs
                .extract(t)
                .unwrap()
                .iter()
                .filter(|w| shadow.sampled_ids.contains(&w.point.id))
                .count();
            if len < prev {
                violations += 1;
            }
            prev = len;
        }
        // Sample-count concentration per (j, b).
        let log_n = params.log_n();
        let bound = 80.0 * cs.effective_gamma() * log_n * log_n;
        for count in cs.stats().sampled.values() {
            let ratio = *count as f64 / bound;
            worst_ratio = worst_ratio.max(ratio);
            if ratio > 1.0 {
                concentration += 1;
            }
        }
    }
    (events, violations, concentration, worst_ratio)
}

#[test]
fn c03_irrevocability_and_monotonicity() {
    let start = Instant::now();
    let (events, violations, _, _) = randomized_suite();
    finish(
        3,
        "irrevocability and monotonicity",
        violations == 0 && events >= 1_000_000,
        start,
        Duration::from_secs(600),
        format!("{violations} violations over {events} ingest events"),
    );
}

#[test]
fn c04_bicriteria_quality() {
    let start = Instant::now();
    let mut ok = true;
    let mut worst_ratio = 0.0f64;
    let mut worst_centers = 0.0f64;
    for z in [1u32, 2] {
        for s in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(400 + s);
            let comps = vec![
                Component::new(
                    vec![rng.random_range(-60.0..-20.0), rng.random_range(-20.0..20.0)],
                    2.0,
                    1000,
                ),
                Component::new(
                    vec![rng.random_range(20.0..60.0), rng.random_range(-20.0..20.0)],
                    2.0,
                    1000,
                ),
            ];
            let pts = gen_gaussian_mixture(&comps, &[], true, &mut rng).unwrap();
            let params = StreamParams::new(2, z, 2f64.powi(20), 1 << 11);
            let solve = SolveConfig {
                restarts: 20,
                iterations: 20,
                ..SolveConfig::new(2, z, s)
            };
            let opt = weighted_kmeans(&unit_weights(&pts), &solve).unwrap().cost;
            for (name, config) in [("worst-case", MeyersonConfig::default()), ("desk", desk_meyerson())] {
                let mut mm = MultMeyerson::new(params.clone(), config.clone(), s).unwrap();
                for p in &pts {
                    mm.ingest(p).unwrap();
                }
                let ratio = mm.assigned_cost() / opt;
                let allowed = 2f64.powi(z as i32 + 7);
                let center_ratio = mm.center_count() as f64 / config.beta_cap(&params);
                worst_ratio = worst_ratio.max(ratio / allowed);
                worst_centers = worst_centers.max(center_ratio);
                if ratio > allowed || center_ratio > 1.0 {
                    ok = false;
                    eprintln!(
                        "{name} z={z} seed={s}: cost ratio {ratio:.1}, centers {}",
                        mm.center_count()
                    );
                }
            }
        }
    }
    finish(
        4,
        "bicriteria quality",
        ok,
        start,
        Duration::from_secs(180),
        format!(
            "worst cost ratio {:.3} of 2^(z+7), worst center count {:.3} of budget",
            worst_ratio, worst_centers
        ),
    );
}

#[test]
fn c05_sample_count_concentration() {
    let start = Instant::now();
    let (_, _, failures, worst) = randomized_suite();
    finish(
        5,
        "sample-count concentration",
        failures == 0,
        start,
        Duration::from_secs(600),
        format!("{failures} groups over 80 gamma log^2 N, largest ratio {worst:.4}"),
    );
}

#[test]
fn c06_merge_and_reduce_structure() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut ok = true;
    let mut checks = 0u64;
    let mut detail = String::new();
    for run in 0..6u64 {
        let n = rng.random_range(3_000..8_000usize);
        let target = rng.random_range(20.0..80.0);
        let pts = gaussian_stream(n, 2, 3, 40.0, &mut rng);
        let params = StreamParams::new(3, 2, 2f64.powi(24), (n as u64).next_power_of_two());
        let config = SlidingWindowConfig {
            ring: RingConfig {
                target_samples: Some(target),
                meyerson: desk_meyerson(),
                ..Default::default()
            },
            ..Default::default()
        };
        let mut sw = SlidingWindowCoreset::new(params, config, run).unwrap();
        let m = sw.block_size();
        for (i, p) in pts.iter().enumerate() {
            sw.ingest(p.clone()).unwrap();
            let seen = i as u64 + 1;
            let c = (seen - 1) / m as u64;
            let bits: Vec<bool> = (0..sw.occupancy().len()).map(|b| c >> b & 1 == 1).collect();
            let slots = level_slots(seen, m);
            let good = sw.compressions() == c
                && sw.occupancy() == bits
                && sw.live_blocks() <= slots
                && sw.stored_points() as f64 <= m as f64 * slots as f64 * sw.config().c_samples;
            checks += 1;
            if !good && ok {
                ok = false;
                detail = format!(
                    "run {run} n={seen}: compressions {} vs {c}, live {} vs {slots}, stored {}",
                    sw.compressions(),
                    sw.live_blocks(),
                    sw.stored_points()
                );
            }
        }
    }
    if ok {
        detail = format!("{checks} states match the binary-counter oracle and space bounds");
    }
    finish(
        6,
        "merge-and-reduce structure",
        ok,
        start,
        Duration::from_secs(120),
        detail,
    );
}

/// Random 3-Gaussian mixture of `n` points in the plane.
fn desk_mixture(n: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps: Vec<Component> = (0..3)
        .map(|_| {
            Component::new(
                vec![rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)],
                rng.random_range(1.0..5.0),
                n / 3 + 1,
            )
        })
        .collect();
    let mut pts = gen_gaussian_mixture(&comps, &[], true, &mut rng).unwrap();
    pts.truncate(n);
    pts
}

#[test]
fn c07_accuracy_at_desk_scale() {
    let start = Instant::now();
    let params = StreamParams::new(3, 2, 2f64.powi(20), 1 << 14);
    let config = RingConfig {
        target_samples: Some(500.0),
        meyerson: desk_meyerson(),
        ..Default::default()
    };
    let mut errors = Vec::new();
    let mut samples = 0usize;
    for seed in 0..20u64 {
        let pts = desk_mixture(10_000, seed);
        let r = measure_with_random_probes(&pts, &params, &config, 20, 20, seed).unwrap();
        samples += r.samples;
        errors.push(r.max_error);
    }
    let passing = errors.iter().filter(|&&e| e <= 0.25).count();
    let mut sorted = errors.clone();
    sorted.sort_by(f64::total_cmp);
    finish(
        7,
        "accuracy at desk scale",
        passing >= 18,
        start,
        Duration::from_secs(300),
        format!(
            "{passing}/20 seeds with max error <= 0.25 (median error {:.3}, mean samples {:.0})",
            sorted[10],
            samples as f64 / 20.0
        ),
    );
}

#[test]
fn c08_synthetic_reproduction() {
    let start = Instant::now();
    let full = std::env::var_os("SWCORESET_FULL_SCALE").is_some();
    let per_cluster = if full { 100_000 } else { 10_000 };
    let config = ExperimentConfig {
        dataset: DatasetSpec::two_cluster_synthetic(per_cluster),
        repetitions: 50,
        seed: 8,
        ..Default::default()
    };
    let result = run_experiment(&config).unwrap();
    let summary = summarize_rows(&result.rows);
    let med = |a: Algo| summary.iter().find(|s| s.algo == a).map(|s| s.median_cost).unwrap();
    let (off, uni, hist, ours) = (med(Algo::Off), med(Algo::Uni), med(Algo::Hist), med(Algo::Sw));
    let ok = result.failures.is_empty() && ours <= uni && ours <= hist && hist >= 10.0 * ours && ours <= 2.0 * off;
    let limit = Duration::from_secs(if full { 900 } else { 120 });
    finish(
        8,
        "synthetic qualitative reproduction",
        ok,
        start,
        limit,
        format!(
            "{} scale medians: off {off:.4e}, uni {uni:.4e}, hist {hist:.4e}, ours {ours:.4e}; hist/ours {:.1}, ours/off {:.3}",
            if full { "full" } else { "1/10" },
            hist / ours,
            ours / off
        ),
    );
}

#[test]
fn c09_lower_bound_trend() {
    let start = Instant::now();
    let config = SweepConfig {
        seed: 9,
        ..Default::default()
    };
    assert_eq!((config.d_prime, config.tau, config.seeds), (20, 5, 5));
    let rows = lowerbound_sweep(&config).unwrap();
    let medians: Vec<u64> = sweep_medians(&rows).into_iter().map(|(_, m)| m).collect();
    let monotone = medians.windows(2).all(|w| w[0] <= w[1]);
    let growth = medians[3] as f64 >= 1.5 * medians[0] as f64;
    finish(
        9,
        "lower-bound trend",
        monotone && growth,
        start,
        Duration::from_secs(600),
        format!("median minimal target by gamma_lb 1..4: {medians:?}"),
    );
}

#[test]
fn c10_skin_pipeline() {
    let start = Instant::now();
    let Some(path) = skin_path() else {
        report(
            10,
            "SKIN pipeline",
            true,
            start.elapsed(),
            "skipped, dataset file not present",
        );
        return;
    };
    let skin = load_skin_dataset(&path).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let noisy = build_noisy_skin_stream(&skin, &mut rng);
    let shape_ok = skin.len() == SKIN_ROWS && noisy.points.len() == 245_260 && noisy.window == 245_258;
    let config = ExperimentConfig {
        dataset: DatasetSpec::NoisySkin { path: Some(path) },
        algorithms: vec![Algo::Uni, Algo::Sw],
        cells: Some(vec![(3, 25)]),
        repetitions: 10,
        seed: 10,
        ..Default::default()
    };
    let result = run_experiment(&config).unwrap();
    let summary = summarize_rows(&result.rows);
    let med = |a: Algo| summary.iter().find(|s| s.algo == a).map(|s| s.median_cost).unwrap();
    let (uni, ours) = (med(Algo::Uni), med(Algo::Sw));
    finish(
        10,
        "SKIN pipeline",
        shape_ok && result.failures.is_empty() && ours <= uni,
        start,
        Duration::from_secs(1200),
        format!(
            "rows {}, stream {}, medians uni {uni:.4e} ours {ours:.4e}",
            skin.len(),
            noisy.points.len()
        ),
    );
}
