use keyvote::geom::{Point3, Vec3};
use keyvote::meanshift::{kernel_density, mean_shift_mode, mean_shift_step, mean_shift_trajectory, CandidateSet, Kernel, MeanShiftConfig};
use keyvote::oracle::density_mode_on_grid;
use keyvote::Exec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn config(bandwidth: f64) -> MeanShiftConfig {
    MeanShiftConfig {
        bandwidth,
        kernel: Kernel::Gaussian,
        max_iterations: 1000,
        shift_tolerance: 1e-7,
        merge_radius: bandwidth / 2.0,
        max_seeds: 64,
        truncation: 3.0,
    }
}

/// A dense cluster around `center` plus uniform clutter.
fn cloud(rng: &mut impl Rng, center: Point3, n: usize) -> CandidateSet {
    let normal = Normal::new(0.0, 0.01).unwrap();
    let mut pts = Vec::new();
    for _ in 0..n {
        pts.push(center + Vec3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng)));
    }
    for _ in 0..n / 4 {
        pts.push(Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)));
    }
    let weights = (0..pts.len()).map(|_| rng.random_range(0.5..1.0)).collect();
    CandidateSet::new(pts, weights).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn returned_mode_is_stationary(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = cloud(&mut rng, Vec3::new(0.05, 0.0, -0.03), 200);
        let cfg = config(0.01);
        let m = mean_shift_mode(&set, &cfg, Exec::Sequential).unwrap();
        prop_assert!(m.iterations_used < cfg.max_iterations);
        prop_assert!(mean_shift_step(&set, &cfg, m.mode).unwrap() < cfg.shift_tolerance);
    }

    #[test]
    fn untruncated_gaussian_ascends_density(seed in any::<u64>(), start in 0usize..250) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = cloud(&mut rng, Vec3::new(0.0, 0.02, 0.0), 200);
        let cfg = MeanShiftConfig { truncation: f64::INFINITY, ..config(0.02) };
        let start = set.candidates()[start % set.len()];
        let path = mean_shift_trajectory(&set, &cfg, start);
        for pair in path.windows(2) {
            let (a, b) = (kernel_density(&set, &cfg, pair[0]), kernel_density(&set, &cfg, pair[1]));
            prop_assert!(b >= a * (1.0 - 1e-12), "{a} -> {b}");
        }
    }

    #[test]
    fn policy_and_repetition_do_not_change_the_mode(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = cloud(&mut rng, Vec3::ZERO, 150);
        let cfg = config(0.015);
        let a = mean_shift_mode(&set, &cfg, Exec::Sequential).unwrap();
        let b = mean_shift_mode(&set, &cfg, Exec::Parallel).unwrap();
        let c = mean_shift_mode(&set, &cfg, Exec::Sequential).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(a, c);
    }
}

#[test]
fn mode_agrees_with_grid_density_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let center = Vec3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), 0.0);
        let set = cloud(&mut rng, center, 300);
        let cfg = MeanShiftConfig { truncation: f64::INFINITY, ..config(0.01) };
        let m = mean_shift_mode(&set, &cfg, Exec::Sequential).unwrap();
        let half = 0.01;
        let steps = 41;
        let grid = density_mode_on_grid(set.candidates(), set.weights(), cfg.bandwidth, m.mode, half, steps);
        let spacing = 2.0 * half / (steps - 1) as f64;
        // The oracle's best node lies within one grid cell of the true mode.
        assert!((grid - m.mode).max_abs() <= spacing, "{:?} vs {:?}", grid, m.mode);
        assert!(kernel_density(&set, &cfg, m.mode) >= kernel_density(&set, &cfg, grid) * (1.0 - 1e-9));
    }
}
