//! Weighted least-squares fits used by the calibration and sweep analyses.
//!
//! Uncertainties are absolute: parameter covariance is `(XᵀWX)⁻¹` with
//! `W = diag(1/σ²)`, not rescaled by the reduced chi-square.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
// inherent f64 math shadows this whenever std is linked into the graph
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// A data point `(x, y, σ_y)`.
pub type Point = (f64, f64, f64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_sigma: f64,
    pub intercept_sigma: f64,
    pub covariance: f64,
    pub r_squared: f64,
}

impl LineFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    /// `x` where the line crosses zero, with its propagated σ.
    pub fn root(&self) -> Result<(f64, f64)> {
        if self.slope == 0.0 {
            return Err(Error::Singular("flat line has no root".into()));
        }
        let x0 = -self.intercept / self.slope;
        // x0 = −b/m: ∂/∂b = −1/m, ∂/∂m = b/m²
        let (db, dm) = (
            -1.0 / self.slope,
            self.intercept / (self.slope * self.slope),
        );
        let var = db * db * self.intercept_sigma.powi(2)
            + dm * dm * self.slope_sigma.powi(2)
            + 2.0 * db * dm * self.covariance;
        Ok((x0, var.max(0.0).sqrt()))
    }
}

struct Lsq {
    params: DVector<f64>,
    cov: DMatrix<f64>,
    r_squared: f64,
}

fn weighted_lsq(
    points: &[Point],
    basis: impl Fn(f64) -> Vec<f64>,
    min_points: usize,
) -> Result<Lsq> {
    if points.len() < min_points {
        return Err(Error::InvalidArgument(format!(
            "need at least {min_points} points, got {}",
            points.len()
        )));
    }
    for &(x, y, s) in points {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::InvalidArgument("non-finite data point".into()));
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "σ must be positive, got {s}"
            )));
        }
    }
    let k = basis(points[0].0).len();
    let x = DMatrix::from_fn(points.len(), k, |r, c| basis(points[r].0)[c] / points[r].2);
    let y = DVector::from_fn(points.len(), |r, _| points[r].1 / points[r].2);
    let normal = x.transpose() * &x;
    let cov = normal
        .clone()
        .try_inverse()
        .filter(|_| normal.rank(1e-12 * normal.amax()) == k)
        .ok_or_else(|| Error::Singular("degenerate abscissae".into()))?;
    let params = &cov * x.transpose() * &y;

    let w: Vec<f64> = points.iter().map(|p| 1.0 / (p.2 * p.2)).collect();
    let wsum: f64 = w.iter().sum();
    let mean = points.iter().zip(&w).map(|(p, w)| w * p.1).sum::<f64>() / wsum;
    let (mut ss_res, mut ss_tot, mut ss) = (0.0, 0.0, 0.0);
    for (p, w) in points.iter().zip(&w) {
        ss += w * p.1 * p.1;
        let fit: f64 = basis(p.0)
            .iter()
            .zip(params.iter())
            .map(|(b, c)| b * c)
            .sum();
        ss_res += w * (p.1 - fit).powi(2);
        ss_tot += w * (p.1 - mean).powi(2);
    }
    Ok(Lsq {
        params,
        cov,
        r_squared: r_squared(ss_res, ss_tot, ss),
    })
}

/// `1 − SS_res/SS_tot`, taken as 1 when both vanish relative to `scale`
/// (the sum of squared observations).
fn r_squared(ss_res: f64, ss_tot: f64, scale: f64) -> f64 {
    let tiny = 1e-24 * scale.max(f64::MIN_POSITIVE);
    if ss_tot <= tiny {
        if ss_res <= tiny {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// Weighted straight-line fit `y = slope·x + intercept`.
pub fn fit_line(points: &[Point]) -> Result<LineFit> {
    let fit = weighted_lsq(points, |x| alloc::vec![x, 1.0], 3)?;
    Ok(LineFit {
        slope: fit.params[0],
        intercept: fit.params[1],
        slope_sigma: fit.cov[(0, 0)].sqrt(),
        intercept_sigma: fit.cov[(1, 1)].sqrt(),
        covariance: fit.cov[(0, 1)],
        r_squared: fit.r_squared,
    })
}

/// `y = amplitude·cos(2x + phase) + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidFit {
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
    pub amplitude_sigma: f64,
    pub phase_sigma: f64,
    pub offset_sigma: f64,
    pub r_squared: f64,
}

/// Fits `a cos 2x + b sin 2x + c` linearly and converts to amplitude/phase.
/// The phase lies in `(−π, π]`.
pub fn fit_sinusoid(points: &[Point]) -> Result<SinusoidFit> {
    let fit = weighted_lsq(
        points,
        |x| alloc::vec![(2.0 * x).cos(), (2.0 * x).sin(), 1.0],
        4,
    )?;
    let (a, b) = (fit.params[0], fit.params[1]);
    let amp2 = a * a + b * b;
    let amplitude = amp2.sqrt();
    let cov = &fit.cov;
    let (amplitude_sigma, phase_sigma) = if amp2 > 0.0 {
        // A = √(a²+b²), φ = atan2(−b, a)
        let ja = [a / amplitude, b / amplitude];
        let jp = [b / amp2, -a / amp2];
        let quad = |j: [f64; 2]| {
            j[0] * j[0] * cov[(0, 0)] + j[1] * j[1] * cov[(1, 1)] + 2.0 * j[0] * j[1] * cov[(0, 1)]
        };
        (quad(ja).max(0.0).sqrt(), quad(jp).max(0.0).sqrt())
    } else {
        (cov[(0, 0)].max(cov[(1, 1)]).sqrt(), f64::INFINITY)
    };
    Ok(SinusoidFit {
        amplitude,
        phase: (-b).atan2(a),
        offset: fit.params[2],
        amplitude_sigma,
        phase_sigma,
        offset_sigma: cov[(2, 2)].sqrt(),
        r_squared: fit.r_squared,
    })
}

/// Coefficient of determination of `observed` against fixed `predicted`
/// values (no fitted parameters).
pub fn coefficient_of_determination(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    if observed.len() != predicted.len() || observed.is_empty() {
        return Err(Error::InvalidArgument("mismatched or empty series".into()));
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let ss_res: f64 = observed
        .iter()
        .zip(predicted)
        .map(|(o, p)| (o - p).powi(2))
        .sum();
    let ss_tot: f64 = observed.iter().map(|o| (o - mean).powi(2)).sum();
    let ss: f64 = observed.iter().map(|o| o * o).sum();
    Ok(r_squared(ss_res, ss_tot, ss))
}
