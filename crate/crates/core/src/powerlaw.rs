//! Least-squares power-law fit of a degree spectrum.
//!
//! Fits `ln Freq(d) = alpha - gamma * ln d` over degrees `d >= 1` with
//! nonzero frequency and reports `gamma` together with the coefficient
//! of determination.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    /// Positive exponent of `P(d) ~ d^(-gamma)` (negated fitted slope).
    pub gamma: f64,
    pub r_squared: f64,
    pub points_used: usize,
    /// Fitted `ln Freq` at `ln d = 0`, for reconstructing the line.
    pub ln_intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FitError {
    /// Fewer than two usable `(degree, frequency)` points.
    DegenerateSpectrum,
}

impl fmt::Display for FitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitError::DegenerateSpectrum => write!(f, "degenerate degree spectrum"),
        }
    }
}

/// Fit a power law to `spectrum` (degree -> node count).
///
/// With `log_binning` the log-log points are first pooled into
/// geometric bins `[2^k, 2^(k+1))` and averaged per bin, which
/// stabilizes the noisy tail of empirical distributions without biasing
/// an exact power law.
pub fn fit_power_law(
    spectrum: &BTreeMap<usize, u64>,
    log_binning: bool,
) -> Result<PowerLawFit, FitError> {
    let raw: Vec<(f64, f64)> = spectrum
        .iter()
        .filter(|(d, f)| **d >= 1 && **f > 0)
        .map(|(d, f)| (libm::log(*d as f64), libm::log(*f as f64)))
        .collect();
    let points = if log_binning {
        log_binned_points(spectrum)
    } else {
        raw
    };
    fit_line(&points)
}

fn log_binned_points(spectrum: &BTreeMap<usize, u64>) -> Vec<(f64, f64)> {
    let mut bins: BTreeMap<u32, Vec<(f64, f64)>> = BTreeMap::new();
    for (&d, &f) in spectrum {
        if d >= 1 && f > 0 {
            let k = usize::BITS - 1 - d.leading_zeros(); // floor(log2 d)
            bins.entry(k)
                .or_default()
                .push((libm::log(d as f64), libm::log(f as f64)));
        }
    }
    bins.into_values()
        .map(|pts| {
            let n = pts.len() as f64;
            let x = pts.iter().map(|(x, _)| x).sum::<f64>() / n;
            let y = pts.iter().map(|(_, y)| y).sum::<f64>() / n;
            (x, y)
        })
        .collect()
}

fn fit_line(points: &[(f64, f64)]) -> Result<PowerLawFit, FitError> {
    let n = points.len();
    if n < 2 {
        return Err(FitError::DegenerateSpectrum);
    }
    let nf = n as f64;
    let mean_x = points.iter().map(|(x, _)| x).sum::<f64>() / nf;
    let mean_y = points.iter().map(|(_, y)| y).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|(x, _)| (x - mean_x) * (x - mean_x)).sum();
    let sxy: f64 = points
        .iter()
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    if sxx == 0.0 {
        // All points share one degree; no slope can be estimated.
        return Err(FitError::DegenerateSpectrum);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = points
        .iter()
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let ss_tot: f64 = points.iter().map(|(_, y)| (y - mean_y) * (y - mean_y)).sum();
    let r_squared = if ss_tot == 0.0 {
        if ss_res < 1e-12 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(PowerLawFit {
        gamma: -slope,
        r_squared,
        points_used: n,
        ln_intercept: intercept,
    })
}
