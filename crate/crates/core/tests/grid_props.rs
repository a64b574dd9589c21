//! Entropy and coverage invariants on random histograms.

use curator_core::grid::{grid_histogram, GridHistogram};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_histogram(seed: u64) -> GridHistogram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_side = rng.gen_range(1..12usize);
    loop {
        let counts: Vec<u64> = (0..n_side * n_side)
            .map(|_| if rng.gen_bool(0.4) { rng.gen_range(1..50) } else { 0 })
            .collect();
        if counts.iter().any(|&c| c > 0) {
            return GridHistogram::from_counts(n_side, counts).unwrap();
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// 0 <= H <= ln(nonempty cells); the bound is attained only by
    /// equal-count cells.
    #[test]
    fn entropy_is_bounded_by_log_nonempty(seed in 0u64..10_000) {
        let h = random_histogram(seed);
        let entropy = h.spatial_entropy();
        let bound = libm::log(h.nonempty_cells() as f64);
        prop_assert!(entropy >= 0.0);
        prop_assert!(entropy <= bound + 1e-9, "H={entropy} > ln(m)={bound}");

        let nonzero: Vec<u64> = h.counts().iter().copied().filter(|&c| c > 0).collect();
        let uniform = nonzero.iter().all(|&c| c == nonzero[0]);
        if uniform {
            prop_assert!((entropy - bound).abs() < 1e-9);
        } else {
            prop_assert!(entropy < bound - 1e-12);
        }
    }

    /// Merging any two cells never increases entropy.
    #[test]
    fn cell_merging_never_increases_entropy(seed in 0u64..10_000) {
        let h = random_histogram(seed);
        let counts = h.counts().to_vec();
        let nonzero: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] > 0).collect();
        prop_assume!(nonzero.len() >= 2);

        let before = h.spatial_entropy();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5555);
        let a = nonzero[rng.gen_range(0..nonzero.len())];
        let b = loop {
            let b = nonzero[rng.gen_range(0..nonzero.len())];
            if b != a {
                break b;
            }
        };
        let mut merged = counts.clone();
        merged[a] += merged[b];
        merged[b] = 0;
        let after = GridHistogram::from_counts(h.n_side(), merged)
            .unwrap()
            .spatial_entropy();
        prop_assert!(after <= before + 1e-12, "merge raised entropy {before} -> {after}");
    }

    /// Histogram totals equal the number of points binned.
    #[test]
    fn binning_conserves_points(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..400usize);
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)])
            .collect();
        let n_side = rng.gen_range(1..30usize);
        let h = grid_histogram(&pts, n_side).unwrap();
        prop_assert_eq!(h.total(), n as u64);
        prop_assert_eq!(h.counts().iter().sum::<u64>(), n as u64);
    }
}
