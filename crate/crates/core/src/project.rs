//! 2D projection of embedding sets.
//!
//! PCA is the default for all quantitative metrics: it is exact,
//! seed-free, and deterministic. t-SNE is kept for exploratory plots;
//! it runs the classic exact O(n^2) algorithm with a pinned seed.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionMethod {
    Pca,
    Tsne,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProjectionError {
    /// At least two points are required.
    TooFewPoints,
    DimensionMismatch { expected: usize, found: usize },
    NonFiniteInput,
}

impl fmt::Display for ProjectionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProjectionError::TooFewPoints => write!(f, "at least two points are required"),
            ProjectionError::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            ProjectionError::NonFiniteInput => write!(f, "inputs must be finite"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    pub method_used: ProjectionMethod,
    /// True when t-SNE was requested but the input was degenerate
    /// (all points identical) and PCA was used instead.
    pub fell_back: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TsneParams {
    fn default() -> Self {
        TsneParams {
            perplexity: 30.0,
            iterations: 300,
            learning_rate: 200.0,
            seed: 0,
        }
    }
}

/// Project `points` to 2D with the requested method.
pub fn project_2d(
    points: &[Vec<f64>],
    method: ProjectionMethod,
    seed: u64,
) -> Result<Projection, ProjectionError> {
    validate(points)?;
    match method {
        ProjectionMethod::Pca => Ok(Projection {
            coords: pca_2d(points),
            method_used: ProjectionMethod::Pca,
            fell_back: false,
        }),
        ProjectionMethod::Tsne => {
            if all_identical(points) {
                return Ok(Projection {
                    coords: pca_2d(points),
                    method_used: ProjectionMethod::Pca,
                    fell_back: true,
                });
            }
            let params = TsneParams {
                seed,
                ..TsneParams::default()
            };
            Ok(Projection {
                coords: tsne_2d(points, &params),
                method_used: ProjectionMethod::Tsne,
                fell_back: false,
            })
        }
    }
}

fn validate(points: &[Vec<f64>]) -> Result<(), ProjectionError> {
    if points.len() < 2 {
        return Err(ProjectionError::TooFewPoints);
    }
    let dim = points[0].len();
    if dim == 0 {
        return Err(ProjectionError::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    for p in points {
        if p.len() != dim {
            return Err(ProjectionError::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(ProjectionError::NonFiniteInput);
        }
    }
    Ok(())
}

fn all_identical(points: &[Vec<f64>]) -> bool {
    points.iter().all(|p| p == &points[0])
}

/// Exact PCA onto the top two principal components.
///
/// Uses the covariance matrix when the dimensionality is at most the
/// number of points and the Gram matrix otherwise, so the cost is
/// O(n * min(n, d)^2) plus the iteration.
pub fn pca_2d(points: &[Vec<f64>]) -> Vec<[f64; 2]> {
    let n = points.len();
    let d = points[0].len();
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p.iter()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(mean.iter()).map(|(v, m)| v - m).collect())
        .collect();

    let axes: [Vec<f64>; 2] = if d <= n {
        top2_from_covariance(&centered, d)
    } else {
        top2_from_gram(&centered)
    };

    centered
        .iter()
        .map(|row| {
            [
                row.iter().zip(axes[0].iter()).map(|(a, b)| a * b).sum(),
                row.iter().zip(axes[1].iter()).map(|(a, b)| a * b).sum(),
            ]
        })
        .collect()
}

fn top2_from_covariance(centered: &[Vec<f64>], d: usize) -> [Vec<f64>; 2] {
    let n = centered.len() as f64;
    let mut cov = vec![vec![0.0; d]; d];
    for row in centered {
        for a in 0..d {
            if row[a] == 0.0 {
                continue;
            }
            for b in a..d {
                cov[a][b] += row[a] * row[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            cov[a][b] /= n;
            cov[b][a] = cov[a][b];
        }
    }
    let (v1, l1) = power_iteration(&cov);
    deflate(&mut cov, &v1, l1);
    let (v2, l2) = power_iteration(&cov);
    let v2 = if l2 > 1e-12 * l1.max(1.0) {
        v2
    } else {
        vec![0.0; d]
    };
    [v1, v2]
}

/// Dual PCA: eigenvectors `u` of the Gram matrix give principal axes
/// `v = X^T u / (sigma * sqrt(n))` in feature space.
fn top2_from_gram(centered: &[Vec<f64>]) -> [Vec<f64>; 2] {
    let n = centered.len();
    let d = centered[0].len();
    let mut gram = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let g: f64 = centered[i]
                .iter()
                .zip(centered[j].iter())
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64;
            gram[i][j] = g;
            gram[j][i] = g;
        }
    }
    let (u1, l1) = power_iteration(&gram);
    deflate(&mut gram, &u1, l1);
    let (u2, l2) = power_iteration(&gram);

    let to_axis = |u: &[f64], lambda: f64| -> Vec<f64> {
        if lambda <= 1e-12 * l1.max(1.0) {
            return vec![0.0; d];
        }
        let mut v = vec![0.0; d];
        for (i, row) in centered.iter().enumerate() {
            for (vk, xk) in v.iter_mut().zip(row.iter()) {
                *vk += u[i] * xk;
            }
        }
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        fix_sign(v)
    };
    [to_axis(&u1, l1), to_axis(&u2, l2)]
}

/// Deterministic power iteration for the dominant eigenpair of a
/// symmetric nonnegative-definite matrix.
fn power_iteration(m: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let d = m.len();
    // Start from the basis vector with the largest diagonal entry so the
    // start never lies in a null space orthogonal to the top component.
    let start = (0..d)
        .max_by(|&a, &b| m[a][a].partial_cmp(&m[b][b]).unwrap())
        .unwrap_or(0);
    let mut v = vec![0.0; d];
    v[start] = 1.0;

    let mut lambda = 0.0;
    for _ in 0..200 {
        let mut next = vec![0.0; d];
        for (row, nx) in m.iter().zip(next.iter_mut()) {
            *nx = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        }
        let norm = libm::sqrt(next.iter().map(|x| x * x).sum::<f64>());
        if norm <= 1e-300 {
            return (fix_sign(v), 0.0);
        }
        for x in &mut next {
            *x /= norm;
        }
        let delta: f64 = next
            .iter()
            .zip(v.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        lambda = norm;
        if delta < 1e-13 {
            break;
        }
    }
    (fix_sign(v), lambda)
}

fn deflate(m: &mut [Vec<f64>], v: &[f64], lambda: f64) {
    let d = m.len();
    for a in 0..d {
        for b in 0..d {
            m[a][b] -= lambda * v[a] * v[b];
        }
    }
}

/// Make the largest-magnitude entry positive so eigenvector signs are
/// reproducible.
fn fix_sign(mut v: Vec<f64>) -> Vec<f64> {
    let lead = v
        .iter()
        .cloned()
        .max_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
        .unwrap_or(0.0);
    if lead < 0.0 {
        for x in &mut v {
            *x = -*x;
        }
    }
    v
}

/// Exact t-SNE with symmetric affinities and early exaggeration.
pub fn tsne_2d(points: &[Vec<f64>], params: &TsneParams) -> Vec<[f64; 2]> {
    let n = points.len();
    let mut d2 = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dist: f64 = points[i]
                .iter()
                .zip(points[j].iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2[i][j] = dist;
            d2[j][i] = dist;
        }
    }

    let perplexity = params.perplexity.min(((n - 1) as f64 / 3.0).max(2.0));
    let p = joint_affinities(&d2, perplexity);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            [
                (rng.gen::<f64>() - 0.5) * 2e-4,
                (rng.gen::<f64>() - 0.5) * 2e-4,
            ]
        })
        .collect();
    let mut velocity = vec![[0.0f64; 2]; n];

    let exaggeration_until = params.iterations / 4;
    for iter in 0..params.iterations {
        let exaggeration = if iter < exaggeration_until { 12.0 } else { 1.0 };
        let momentum = if iter < exaggeration_until { 0.5 } else { 0.8 };

        // Student-t kernel numerators and normalizer.
        let mut num = vec![vec![0.0; n]; n];
        let mut z = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let dy0 = y[i][0] - y[j][0];
                let dy1 = y[i][1] - y[j][1];
                let q = 1.0 / (1.0 + dy0 * dy0 + dy1 * dy1);
                num[i][j] = q;
                num[j][i] = q;
                z += 2.0 * q;
            }
        }
        let z = z.max(1e-12);

        for i in 0..n {
            let mut grad = [0.0f64; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = num[i][j] / z;
                let mult = (exaggeration * p[i][j] - q) * num[i][j];
                grad[0] += 4.0 * mult * (y[i][0] - y[j][0]);
                grad[1] += 4.0 * mult * (y[i][1] - y[j][1]);
            }
            velocity[i][0] = momentum * velocity[i][0] - params.learning_rate * grad[0];
            velocity[i][1] = momentum * velocity[i][1] - params.learning_rate * grad[1];
        }
        for (yi, vi) in y.iter_mut().zip(velocity.iter()) {
            yi[0] += vi[0];
            yi[1] += vi[1];
        }
    }
    y
}

/// Symmetrized input affinities with per-point bandwidth found by
/// binary search on the Shannon entropy of the conditional
/// distribution.
fn joint_affinities(d2: &[Vec<f64>], perplexity: f64) -> Vec<Vec<f64>> {
    let n = d2.len();
    let target = libm::log(perplexity);
    let mut p = vec![vec![0.0; n]; n];

    for i in 0..n {
        let mut beta = 1.0;
        let mut beta_min = f64::NEG_INFINITY;
        let mut beta_max = f64::INFINITY;
        let mut row = vec![0.0; n];
        for _ in 0..50 {
            let mut sum = 0.0;
            for j in 0..n {
                row[j] = if j == i {
                    0.0
                } else {
                    libm::exp(-beta * d2[i][j])
                };
                sum += row[j];
            }
            if sum <= 0.0 {
                break;
            }
            // H = ln(sum) + beta * E[d^2]
            let mut weighted = 0.0;
            for j in 0..n {
                weighted += row[j] * d2[i][j];
            }
            let entropy = libm::log(sum) + beta * weighted / sum;
            let diff = entropy - target;
            if diff.abs() < 1e-5 {
                break;
            }
            if diff > 0.0 {
                beta_min = beta;
                beta = if beta_max.is_finite() {
                    (beta + beta_max) / 2.0
                } else {
                    beta * 2.0
                };
            } else {
                beta_max = beta;
                beta = if beta_min.is_finite() {
                    (beta + beta_min) / 2.0
                } else {
                    beta / 2.0
                };
            }
        }
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            for (j, r) in row.iter().enumerate() {
                p[i][j] = r / sum;
            }
        }
    }

    // Symmetrize and floor to keep gradients finite.
    let mut joint = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            joint[i][j] = ((p[i][j] + p[j][i]) / (2.0 * n as f64)).max(1e-12);
        }
    }
    for (i, row) in joint.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    joint
}
