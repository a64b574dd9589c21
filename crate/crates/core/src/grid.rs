//! 2D grid histograms over projected embeddings, with spatial entropy
//! and coverage.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GridError {
    EmptyInput,
    ZeroSide,
    NonFinitePoint,
    /// `counts` length must be `n_side * n_side`.
    BadCounts { expected: usize, found: usize },
}

impl fmt::Display for GridError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridError::EmptyInput => write!(f, "cannot build a histogram from no points"),
            GridError::ZeroSide => write!(f, "n_side must be at least 1"),
            GridError::NonFinitePoint => write!(f, "points must be finite"),
            GridError::BadCounts { expected, found } => {
                write!(f, "expected {expected} cells, found {found}")
            }
        }
    }
}

/// Cell-count histogram over the bounding box of a 2D point set.
#[derive(Debug, Clone, PartialEq)]
pub struct GridHistogram {
    n_side: usize,
    counts: Vec<u64>,
    bounds: Bounds,
    total: u64,
}

/// Bin `points` into an `n_side x n_side` grid over their bounding box.
///
/// Points on the maximum edge land in the last row/column; a degenerate
/// axis (all coordinates equal) maps everything to index 0 on that axis.
pub fn grid_histogram(points: &[[f64; 2]], n_side: usize) -> Result<GridHistogram, GridError> {
    if n_side == 0 {
        return Err(GridError::ZeroSide);
    }
    if points.is_empty() {
        return Err(GridError::EmptyInput);
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(GridError::NonFinitePoint);
    }

    let mut bounds = Bounds {
        x_min: f64::INFINITY,
        x_max: f64::NEG_INFINITY,
        y_min: f64::INFINITY,
        y_max: f64::NEG_INFINITY,
    };
    for p in points {
        bounds.x_min = bounds.x_min.min(p[0]);
        bounds.x_max = bounds.x_max.max(p[0]);
        bounds.y_min = bounds.y_min.min(p[1]);
        bounds.y_max = bounds.y_max.max(p[1]);
    }

    let index = |v: f64, lo: f64, hi: f64| -> usize {
        if hi <= lo {
            return 0;
        }
        let raw = libm::floor(n_side as f64 * (v - lo) / (hi - lo)) as i64;
        raw.clamp(0, n_side as i64 - 1) as usize
    };

    let mut counts = vec![0u64; n_side * n_side];
    for p in points {
        let ix = index(p[0], bounds.x_min, bounds.x_max);
        let iy = index(p[1], bounds.y_min, bounds.y_max);
        counts[iy * n_side + ix] += 1;
    }

    Ok(GridHistogram {
        n_side,
        counts,
        bounds,
        total: points.len() as u64,
    })
}

impl GridHistogram {
    /// Build a histogram directly from cell counts (fixtures and tests).
    pub fn from_counts(n_side: usize, counts: Vec<u64>) -> Result<GridHistogram, GridError> {
        if n_side == 0 {
            return Err(GridError::ZeroSide);
        }
        if counts.len() != n_side * n_side {
            return Err(GridError::BadCounts {
                expected: n_side * n_side,
                found: counts.len(),
            });
        }
        let total = counts.iter().sum();
        if total == 0 {
            return Err(GridError::EmptyInput);
        }
        Ok(GridHistogram {
            n_side,
            counts,
            bounds: Bounds {
                x_min: 0.0,
                x_max: 1.0,
                y_min: 0.0,
                y_max: 1.0,
            },
            total,
        })
    }

    pub fn n_side(&self) -> usize {
        self.n_side
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, ix: usize, iy: usize) -> u64 {
        self.counts[iy * self.n_side + ix]
    }

    pub fn nonempty_cells(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Shannon entropy (natural log) of the cell-occupancy distribution:
    /// `H = -sum p_i ln p_i` over non-empty cells. Zero when all points
    /// share one cell; at most `ln(nonempty_cells)`.
    pub fn spatial_entropy(&self) -> f64 {
        let total = self.total as f64;
        let mut h = 0.0;
        for &c in &self.counts {
            if c > 0 {
                let p = c as f64 / total;
                h -= p * libm::log(p);
            }
        }
        if h == 0.0 {
            0.0 // normalize -0.0 from the single-cell case
        } else {
            h
        }
    }

    /// Coverage: natural log of the number of non-empty cells.
    pub fn coverage(&self) -> f64 {
        libm::log(self.nonempty_cells() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_corner_points_map_to_four_corner_cells() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let h = grid_histogram(&pts, 2).unwrap();
        assert_eq!(h.count(0, 0), 1);
        assert_eq!(h.count(1, 0), 1);
        assert_eq!(h.count(0, 1), 1);
        assert_eq!(h.count(1, 1), 1);
        assert_eq!(h.total(), 4);
    }

    #[test]
    fn point_on_max_edge_lands_in_last_column() {
        let pts = [[0.0, 0.0], [10.0, 0.0], [5.0, 0.0]];
        let h = grid_histogram(&pts, 2).unwrap();
        // x = 10.0 is exactly x_max and must clamp into column 1.
        assert_eq!(h.count(1, 0), 2); // 5.0 and 10.0
        assert_eq!(h.count(0, 0), 1);
    }

    #[test]
    fn degenerate_axis_maps_to_index_zero() {
        let pts = [[3.0, 1.0], [3.0, 2.0]];
        let h = grid_histogram(&pts, 4).unwrap();
        assert_eq!(h.count(0, 0), 1);
        assert_eq!(h.count(0, 3), 1);
    }

    #[test]
    fn counts_are_conserved() {
        let pts: Vec<[f64; 2]> = (0..1000)
            .map(|i| [(i % 37) as f64, (i % 11) as f64])
            .collect();
        let h = grid_histogram(&pts, 7).unwrap();
        assert_eq!(h.counts().iter().sum::<u64>(), 1000);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(grid_histogram(&[], 2), Err(GridError::EmptyInput));
    }

    #[test]
    fn single_cell_entropy_is_exactly_zero() {
        let h = GridHistogram::from_counts(2, alloc::vec![7, 0, 0, 0]).unwrap();
        assert_eq!(h.spatial_entropy(), 0.0);
        assert!(h.spatial_entropy().is_sign_positive());
    }

    #[test]
    fn uniform_four_cells_entropy_is_ln_four() {
        let h = GridHistogram::from_counts(2, alloc::vec![1, 1, 1, 1]).unwrap();
        assert!((h.spatial_entropy() - libm::log(4.0)).abs() < 1e-12);
    }

    #[test]
    fn skewed_fixture_entropy_matches_hand_arithmetic() {
        // {2,1,1}: -(1/2 ln 1/2 + 2 * 1/4 ln 1/4) = 1.0397...
        let h = GridHistogram::from_counts(2, alloc::vec![2, 1, 1, 0]).unwrap();
        assert!((h.spatial_entropy() - 1.0397).abs() < 1e-4);
    }

    #[test]
    fn coverage_examples() {
        let h = GridHistogram::from_counts(1, alloc::vec![5]).unwrap();
        assert_eq!(h.coverage(), 0.0);
        let h = GridHistogram::from_counts(4, {
            let mut c = alloc::vec![0u64; 16];
            for cell in c.iter_mut().take(10) {
                *cell = 3;
            }
            c
        })
        .unwrap();
        assert!((h.coverage() - libm::log(10.0)).abs() < 1e-12);
    }
}
