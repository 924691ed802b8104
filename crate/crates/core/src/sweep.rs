//! Single points of the molarity and rotation-angle sweeps.
//!
//! A point prepares `|ψ+⟩` or `|ψ−⟩`, mixes in white noise, applies the
//! local rotations together with the analyzer offsets, measures the three
//! joint observables and extracts the nonlocal angle. Offsets enter as
//! extra rotations: `pbs_a` on arm A and `pbs_b` on arm B for both
//! branches, `hwp` on arm A for the minus branch only.

use crate::channels::{apply_noise, rotate_pair, AnalyzerOffsets, Branch, NoiseSpec};
use crate::error::{Error, Result};
use crate::fit::{fit_line, LineFit, Point};
use crate::measure::{
    estimate_observables, expected_counts, extract_thetas, observable_settings, simulate_counts,
    ExtractOptions, JointObservables, SimulationParams, DEFAULT_MODULUS_FLOOR,
};
use crate::states::{bell_state, BellKind, TwoQubitState};

pub fn branch_state(branch: Branch) -> TwoQubitState {
    bell_state(match branch {
        Branch::Plus => BellKind::PsiPlus,
        Branch::Minus => BellKind::PsiMinus,
    })
}

/// Inputs shared by every point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointConfig {
    pub offsets: AnalyzerOffsets,
    pub noise: NoiseSpec,
    /// the seed field is replaced per point and branch
    pub params: SimulationParams,
    /// Born-rule expectations instead of samples
    pub exact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPoint {
    pub observables: JointObservables,
    /// nonlocal angle as measured, offsets included
    pub theta_measured: f64,
    /// after removing the analyzer offsets
    pub theta: f64,
    pub sigma: f64,
}

/// The evolved state seen by the analyzers.
pub fn evolved_state(
    branch: Branch,
    theta_a: f64,
    theta_b: f64,
    cfg: &PointConfig,
) -> Result<TwoQubitState> {
    let rho = apply_noise(&branch_state(branch), &cfg.noise)?;
    let hwp = match branch {
        Branch::Plus => 0.0,
        Branch::Minus => cfg.offsets.hwp,
    };
    Ok(rotate_pair(
        &rho,
        theta_a + cfg.offsets.pbs_a + hwp,
        theta_b + cfg.offsets.pbs_b,
    ))
}

/// Observables for one branch; `seed` drives the sampled counts.
pub fn measure_branch(
    branch: Branch,
    theta_a: f64,
    theta_b: f64,
    cfg: &PointConfig,
    seed: u64,
) -> Result<JointObservables> {
    let rho = evolved_state(branch, theta_a, theta_b, cfg)?;
    let params = SimulationParams { seed, ..cfg.params };
    let table = if cfg.exact {
        expected_counts(&rho, &observable_settings(), &params)?
    } else {
        simulate_counts(&rho, &observable_settings(), &params)?
    };
    estimate_observables(&table)
}

pub fn branch_point(
    branch: Branch,
    theta_a: f64,
    theta_b: f64,
    cfg: &PointConfig,
    seed: u64,
) -> Result<BranchPoint> {
    let observables = measure_branch(branch, theta_a, theta_b, cfg, seed)?;
    let est = observables.nonlocal_angle(DEFAULT_MODULUS_FLOOR)?;
    Ok(BranchPoint {
        observables,
        theta_measured: est.theta,
        theta: est.theta - cfg.offsets.total(branch),
        sigma: est.sigma,
    })
}

/// Both branches at one `(θ_A, θ_B)` plus the combined extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaPoint {
    pub plus: BranchPoint,
    pub minus: BranchPoint,
    pub theta_a: f64,
    pub theta_b: f64,
    pub sigma_ab: f64,
}

/// The branches sample with `derive_seed(seed, 0)` and `derive_seed(seed, 1)`.
pub fn theta_point(theta_a: f64, theta_b: f64, cfg: &PointConfig, seed: u64) -> Result<ThetaPoint> {
    let plus = branch_point(
        Branch::Plus,
        theta_a,
        theta_b,
        cfg,
        crate::measure::derive_seed(seed, 0),
    )?;
    let minus = branch_point(
        Branch::Minus,
        theta_a,
        theta_b,
        cfg,
        crate::measure::derive_seed(seed, 1),
    )?;
    let est = extract_thetas(
        &plus.observables,
        &minus.observables,
        &ExtractOptions::default(),
    )?;
    // θ_A picks up (θ+ + θ−)/2 of the offsets, θ_B the half difference
    let off = &cfg.offsets;
    Ok(ThetaPoint {
        plus,
        minus,
        theta_a: est.theta_a - (off.pbs_a + 0.5 * off.hwp),
        theta_b: est.theta_b - (off.pbs_b - 0.5 * off.hwp),
        sigma_ab: est.sigma_a,
    })
}

/// Weighted line through `(x, θ, σ)` and its zero crossing `(x₀, σ_x₀)`.
/// Zero uncertainties (exact mode) are replaced by unit weights.
pub fn zero_crossing(points: &[Point]) -> Result<(f64, f64, LineFit)> {
    let exact = points.iter().all(|p| p.2 == 0.0);
    if !exact && points.iter().any(|p| !(p.2 > 0.0)) {
        return Err(Error::InvalidArgument(
            "mixed zero and non-zero uncertainties".into(),
        ));
    }
    let pts: alloc::vec::Vec<Point> = points
        .iter()
        .map(|&(x, y, s)| (x, y, if exact { 1.0 } else { s }))
        .collect();
    let fit = fit_line(&pts)?;
    let (x0, s0) = fit.root()?;
    Ok((x0, if exact { 0.0 } else { s0 }, fit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{solution_rotation, SolutionSpec};
    use alloc::vec::Vec;
    use approx::assert_abs_diff_eq;

    fn cfg(exact: bool, offsets: AnalyzerOffsets) -> PointConfig {
        PointConfig {
            offsets,
            noise: NoiseSpec::NONE,
            params: SimulationParams::with_detected_pairs(1e5, 0),
            exact,
        }
    }

    #[test]
    fn exact_points_follow_closed_forms() {
        let (ta, tb) = (20f64.to_radians(), 10f64.to_radians());
        let p = theta_point(ta, tb, &cfg(true, AnalyzerOffsets::ZERO), 1).unwrap();
        assert_abs_diff_eq!(p.plus.theta, ta + tb, epsilon = 1e-12);
        assert_abs_diff_eq!(p.minus.theta, ta - tb, epsilon = 1e-12);
        assert_abs_diff_eq!(p.theta_a, ta, epsilon = 1e-12);
        assert_abs_diff_eq!(p.theta_b, tb, epsilon = 1e-12);
        let want = JointObservables::bell_closed_form(Branch::Plus, ta, tb);
        assert_abs_diff_eq!(p.plus.observables.m_zz, want.m_zz, epsilon = 1e-12);
        assert_abs_diff_eq!(p.plus.observables.m_xz, want.m_xz, epsilon = 1e-12);
    }

    #[test]
    fn offsets_are_removed() {
        let off = AnalyzerOffsets::measured_defaults();
        let (ta, tb) = (20.08f64.to_radians(), 15f64.to_radians());
        let p = theta_point(ta, tb, &cfg(true, off), 1).unwrap();
        assert_abs_diff_eq!(p.plus.theta, ta + tb, epsilon = 1e-12);
        assert_abs_diff_eq!(p.minus.theta, ta - tb, epsilon = 1e-12);
        assert_abs_diff_eq!(
            p.minus.theta_measured,
            ta - tb + off.total(Branch::Minus),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(p.theta_a, ta, epsilon = 1e-12);
        assert_abs_diff_eq!(p.theta_b, tb, epsilon = 1e-12);
    }

    #[test]
    fn zero_molarity_gives_zero() {
        let c = cfg(false, AnalyzerOffsets::ZERO);
        let p = theta_point(0.0, 0.0, &c, 3).unwrap();
        assert!(p.plus.theta.abs() <= 3.0 * p.plus.sigma + 1e-12);
        assert!(p.minus.theta.abs() <= 3.0 * p.minus.sigma + 1e-12);
    }

    #[test]
    fn cancellation_on_the_plus_branch() {
        let t = 20f64.to_radians();
        let p = branch_point(Branch::Plus, t, -t, &cfg(false, AnalyzerOffsets::ZERO), 5).unwrap();
        assert!(p.theta.abs() <= 3.0 * p.sigma, "{} ± {}", p.theta, p.sigma);
    }

    #[test]
    fn molarity_zero_crossing() {
        let ta = 20.08f64.to_radians();
        let c = cfg(false, AnalyzerOffsets::measured_defaults());
        let pts: Vec<Point> = (0..13)
            .map(|i| {
                let m = 2.0 + 0.15 * i as f64;
                let tb = solution_rotation(&SolutionSpec::new(m)).unwrap();
                let p = branch_point(Branch::Minus, ta, tb, &c, 100 + i).unwrap();
                (m, p.theta, p.sigma)
            })
            .collect();
        let (c0, s0, _) = zero_crossing(&pts).unwrap();
        let want = 20.08 / 7.01;
        assert!((c0 - want).abs() <= 3.0 * s0, "{c0} ± {s0}");
        assert!(s0 < 0.01);
    }

    #[test]
    fn exact_zero_crossing() {
        let ta = 20.08f64.to_radians();
        let c = cfg(true, AnalyzerOffsets::measured_defaults());
        let pts: Vec<Point> = (0..5)
            .map(|i| {
                let m = 2.5 + 0.2 * i as f64;
                let tb = solution_rotation(&SolutionSpec::new(m)).unwrap();
                let p = branch_point(Branch::Minus, ta, tb, &c, 0).unwrap();
                (m, p.theta, p.sigma)
            })
            .collect();
        let (c0, _, _) = zero_crossing(&pts).unwrap();
        assert_abs_diff_eq!(c0, 20.08 / 7.01, epsilon = 1e-10);
        let unit: Vec<Point> = pts.iter().map(|&(x, y, _)| (x, y, 0.0)).collect();
        let (c1, s1, _) = zero_crossing(&unit).unwrap();
        assert_abs_diff_eq!(c1, 20.08 / 7.01, epsilon = 1e-10);
        assert_eq!(s1, 0.0);
    }
}
