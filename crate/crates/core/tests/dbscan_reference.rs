//! DBSCAN must agree exactly with a quadratic brute-force reference.
//!
//! The reference takes a different route: core flags from neighborhood
//! counts, union-find over core-core pairs, cluster ids ordered by each
//! component's minimal core index, and border points attached to the
//! lowest eligible cluster id. Unreachable non-cores are noise.

use curator_core::dbscan::{dbscan_cosine, NOISE};
use curator_core::similarity::cosine_distance;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reference_dbscan(points: &[Vec<f64>], eps: f64, min_samples: usize) -> Vec<i64> {
    let n = points.len();
    let within = |i: usize, j: usize| cosine_distance(&points[i], &points[j]) <= eps;

    let is_core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| within(i, j)).count() >= min_samples)
        .collect();

    // Union-find over core-core pairs.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if is_core[i] && is_core[j] && within(i, j) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    let (lo, hi) = if ri < rj { (ri, rj) } else { (rj, ri) };
                    parent[hi] = lo;
                }
            }
        }
    }

    // Number components by their minimal core index.
    let mut component_min_core: Vec<(usize, usize)> = Vec::new(); // (min core idx, root)
    for i in 0..n {
        if is_core[i] {
            let root = find(&mut parent, i);
            if !component_min_core.iter().any(|(_, r)| *r == root) {
                component_min_core.push((i, root));
            }
        }
    }
    component_min_core.sort();
    let cluster_of_root = |root: usize| -> i64 {
        component_min_core
            .iter()
            .position(|(_, r)| *r == root)
            .unwrap() as i64
    };

    let mut labels = vec![NOISE; n];
    for i in 0..n {
        if is_core[i] {
            let root = find(&mut parent, i);
            labels[i] = cluster_of_root(root);
        }
    }
    for i in 0..n {
        if !is_core[i] {
            let mut best: Option<i64> = None;
            for j in 0..n {
                if is_core[j] && within(i, j) {
                    let root = find(&mut parent, j);
                    let c = cluster_of_root(root);
                    best = Some(best.map_or(c, |b: i64| b.min(c)));
                }
            }
            if let Some(c) = best {
                labels[i] = c;
            }
        }
    }
    labels
}

/// Canonicalize labels by first occurrence so comparisons are
/// permutation-insensitive. Noise stays -1.
fn canonicalize(labels: &[i64]) -> Vec<i64> {
    let mut map: Vec<i64> = Vec::new();
    labels
        .iter()
        .map(|&l| {
            if l == NOISE {
                return NOISE;
            }
            match map.iter().position(|&m| m == l) {
                Some(p) => p as i64,
                None => {
                    map.push(l);
                    (map.len() - 1) as i64
                }
            }
        })
        .collect()
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

#[test]
fn matches_reference_on_random_fixtures() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..50 {
        let n = rng.gen_range(1..=200);
        let dim = rng.gen_range(2..=8);
        let eps = rng.gen_range(0.05..0.6);
        let min_samples = rng.gen_range(1..=5);
        let points = random_points(&mut rng, n, dim);

        let got = dbscan_cosine(&points, eps, min_samples).unwrap();
        let want = reference_dbscan(&points, eps, min_samples);
        assert_eq!(
            canonicalize(&got),
            canonicalize(&want),
            "case {case}: n={n} dim={dim} eps={eps} min_samples={min_samples}"
        );
        // The deterministic numbering itself should also agree.
        assert_eq!(got, want, "case {case}: raw labels diverged");
    }
}

#[test]
fn matches_reference_on_clustered_fixtures() {
    // Points drawn around a few distinct directions, which produces real
    // cluster structure instead of uniform noise.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..20 {
        let centers = rng.gen_range(2..=5);
        let dim = 6;
        let center_dirs = random_points(&mut rng, centers, dim);
        let n = rng.gen_range(20..=150);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let c = rng.gen_range(0..centers);
                center_dirs[c]
                    .iter()
                    .map(|v| v + rng.gen_range(-0.05..0.05))
                    .collect()
            })
            .collect();
        let eps = 0.03;
        let min_samples = 3;
        let got = dbscan_cosine(&points, eps, min_samples).unwrap();
        let want = reference_dbscan(&points, eps, min_samples);
        assert_eq!(got, want, "case {case}");
    }
}

#[test]
fn label_values_are_contiguous_from_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let points = random_points(&mut rng, 120, 4);
    let labels = dbscan_cosine(&points, 0.2, 3).unwrap();
    let max = labels.iter().copied().max().unwrap_or(NOISE);
    for c in 0..=max {
        assert!(labels.contains(&c), "cluster id {c} missing");
    }
    assert!(labels.iter().all(|&l| l >= NOISE));
}
