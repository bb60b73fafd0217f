//! Shared inputs for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swcoreset::harness::datasets::{gen_gaussian_mixture, Component};
use swcoreset::Point;

/// Interleaved mixture of three planar Gaussians with `n` points.
pub fn mixture(n: usize, seed: u64) -> Vec<Point> {
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
    let mut pts = gen_gaussian_mixture(&comps, &[], true, &mut rng).expect("valid components");
    pts.truncate(n);
    pts
}
