//! Density-based clustering (DBSCAN) over cosine distance.
//!
//! Semantics:
//! - neighborhood of `i` = all points `j` with `cosine_distance(i, j) <= eps`,
//!   including `i` itself;
//! - `i` is a core point when its neighborhood has at least `min_samples`
//!   members;
//! - clusters are the density-connected sets grown from core points;
//! - non-core points reachable from several clusters are claimed by the
//!   earliest-created cluster, which makes labels a pure function of the
//!   input order;
//! - unreachable non-core points are labeled [`NOISE`].
//!
//! Cluster ids are assigned in order of each cluster's first core point,
//! so the labeling is deterministic and reproducible.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::similarity::cosine_distance;

/// Label for points that belong to no cluster.
pub const NOISE: i64 = -1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DbscanError {
    /// `eps` must be positive and finite.
    InvalidEps,
    /// `min_samples` must be at least 1.
    InvalidMinSamples,
    /// All points must share one dimensionality.
    DimensionMismatch { expected: usize, found: usize },
}

impl fmt::Display for DbscanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DbscanError::InvalidEps => write!(f, "eps must be positive and finite"),
            DbscanError::InvalidMinSamples => write!(f, "min_samples must be at least 1"),
            DbscanError::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
        }
    }
}

/// Cluster `points` with DBSCAN using cosine distance.
///
/// Returns one label per point, `0..k` for cluster members and [`NOISE`]
/// for noise. Empty input yields an empty label vector.
pub fn dbscan_cosine(
    points: &[Vec<f64>],
    eps: f64,
    min_samples: usize,
) -> Result<Vec<i64>, DbscanError> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(DbscanError::InvalidEps);
    }
    if min_samples == 0 {
        return Err(DbscanError::InvalidMinSamples);
    }
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let dim = points[0].len();
    for p in points {
        if p.len() != dim {
            return Err(DbscanError::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
    }
    Ok(dbscan_with_distance(points.len(), eps, min_samples, |i, j| {
        cosine_distance(&points[i], &points[j])
    }))
}

/// DBSCAN over an arbitrary pairwise distance function.
///
/// `dist(i, i)` is assumed to be 0, so every point is in its own
/// neighborhood.
pub fn dbscan_with_distance<F>(n: usize, eps: f64, min_samples: usize, dist: F) -> Vec<i64>
where
    F: Fn(usize, usize) -> f64,
{
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| dist(i, j) <= eps).collect())
        .collect();

    let mut labels = vec![NOISE; n];
    let mut visited = vec![false; n];
    let mut next_cluster: i64 = 0;

    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        if neighbors[i].len() < min_samples {
            continue; // stays noise unless claimed by a later expansion
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[i] = cluster;

        let mut queue: VecDeque<usize> = neighbors[i].iter().copied().collect();
        while let Some(j) = queue.pop_front() {
            if labels[j] == NOISE {
                labels[j] = cluster;
            }
            if !visited[j] {
                visited[j] = true;
                if neighbors[j].len() >= min_samples {
                    queue.extend(neighbors[j].iter().copied());
                }
            }
        }
    }
    labels
}
