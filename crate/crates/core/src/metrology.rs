//! Fisher-information bound of the N-photon probe and the separable baseline.
//!
//! The probe `(|R⟩^⊗N − |L⟩^⊗N)/√2` acquires `e^{±iNθ}` on its two branches
//! when every photon is rotated by `θ`, so it is kept as two amplitudes on
//! the orthonormal pair `{|R⟩^⊗N, |L⟩^⊗N}`.

use alloc::vec::Vec;

use rand_distr::{Binomial, Distribution};
// inherent f64 math shadows this whenever std is linked into the graph
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::fit::{fit_line, LineFit, Point};
use crate::measure::{derive_seed, stream_rng};
use crate::states::{c, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoonProbe {
    pub n: u32,
    pub theta: f64,
}

impl NoonProbe {
    pub fn new(n: u32, theta: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidArgument(
                "photon number must be at least 1".into(),
            ));
        }
        Ok(NoonProbe { n, theta })
    }

    /// Amplitudes on `(|R⟩^⊗N, |L⟩^⊗N)`.
    pub fn amplitudes(&self) -> [C64; 2] {
        let phi = self.n as f64 * self.theta;
        let s = core::f64::consts::FRAC_1_SQRT_2;
        [C64::from_polar(s, phi), -C64::from_polar(s, -phi)]
    }

    /// `∂ψ/∂θ` on the same pair.
    pub fn derivative(&self) -> [C64; 2] {
        let nf = self.n as f64;
        let [r, l] = self.amplitudes();
        [c(0.0, nf) * r, c(0.0, -nf) * l]
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes()
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `4[⟨∂ψ|∂ψ⟩ − |⟨ψ|∂ψ⟩|²]`.
    pub fn fisher_information(&self) -> f64 {
        let (psi, d) = (self.amplitudes(), self.derivative());
        let dd: f64 = d.iter().map(|z| z.norm_sqr()).sum();
        let overlap: C64 = psi.iter().zip(&d).map(|(a, b)| a.conj() * b).sum();
        4.0 * (dd - overlap.norm_sqr())
    }
}

/// Quantum Fisher information of the `n`-photon probe, evaluated from the
/// derivative formula. Equals `4n²`.
pub fn qfi(n: u32) -> Result<f64> {
    let f = NoonProbe::new(n, 0.0)?.fisher_information();
    let closed = 4.0 * (n as f64).powi(2);
    if (f - closed).abs() > 1e-10 * closed.max(1.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "Fisher information {f} departs from 4n² = {closed}"
        )));
    }
    Ok(f)
}

/// Rotation used for the separable baseline.
pub const BASELINE_THETA: f64 = 20.08 * core::f64::consts::PI / 180.0;

/// One separable trial: `n · counts_per_trial` photons prepared in `|V⟩`,
/// rotated by `theta`, split between `σ_z` (first half, rounded up) and
/// `σ_x`; returns `½ atan2(−⟨σ_x⟩, −⟨σ_z⟩)`.
pub fn separable_estimate(n: u32, counts_per_trial: u64, theta: f64, seed: u64, trial: u64) -> f64 {
    let photons = n as u64 * counts_per_trial;
    let nz = photons.div_ceil(2);
    let nx = photons - nz;
    let mut rng = stream_rng(seed, trial);
    // U(θ)|V⟩ = (−sin θ, cos θ): P(H) = sin²θ, P(D) = (1 − sin 2θ)/2
    let mut mean = |shots: u64, p_plus: f64| {
        if shots == 0 {
            return 0.0;
        }
        let plus = Binomial::new(shots, p_plus.clamp(0.0, 1.0))
            .expect("probability in [0, 1]")
            .sample(&mut rng);
        (2.0 * plus as f64 - shots as f64) / shots as f64
    };
    let ez = mean(nz, theta.sin().powi(2));
    let ex = mean(nx, 0.5 * (1.0 - (2.0 * theta).sin()));
    0.5 * (-ex).atan2(-ez)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRow {
    pub n: u32,
    /// `1/(4n²)`, the Cramér–Rao bound per probe use
    pub var_entangled_bound: f64,
    /// empirical estimator variance scaled to one `n`-photon use
    pub var_separable_sim: f64,
}

/// Entangled bound against the simulated separable variance.
///
/// Each trial spends `counts_per_trial` batches of `n` independent photons;
/// the sample variance across trials is multiplied by `counts_per_trial` so
/// both columns refer to one use of `n` photons. The seed for row `n` is
/// `derive_seed(seed, n)` and trial `t` draws from stream `t`.
pub fn variance_scaling(
    n_values: &[u32],
    trials: u64,
    counts_per_trial: u64,
    seed: u64,
) -> Result<Vec<ScalingRow>> {
    if n_values.iter().any(|&n| n < 1) || trials < 2 || counts_per_trial < 1 {
        return Err(Error::InvalidArgument(
            "photon numbers and counts must be positive, with at least two trials".into(),
        ));
    }
    Ok(n_values
        .iter()
        .map(|&n| {
            let s = derive_seed(seed, n as u64);
            let est: Vec<f64> = (0..trials)
                .map(|t| separable_estimate(n, counts_per_trial, BASELINE_THETA, s, t))
                .collect();
            scaling_row(n, &est, counts_per_trial)
        })
        .collect())
}

/// Builds a row from per-trial estimates; exposed so callers can run the
/// trials in parallel.
pub fn scaling_row(n: u32, estimates: &[f64], counts_per_trial: u64) -> ScalingRow {
    let m = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / m;
    let var = estimates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    ScalingRow {
        n,
        var_entangled_bound: 1.0 / (4.0 * (n as f64).powi(2)),
        var_separable_sim: var * counts_per_trial as f64,
    }
}

/// Line fit of `ln var_separable_sim` against `ln n`; a sample variance
/// from `trials` draws gives `σ(ln var) ≈ √(2/(trials − 1))`.
pub fn loglog_slope(rows: &[ScalingRow], trials: u64) -> Result<LineFit> {
    let sigma = (2.0 / (trials.max(2) - 1) as f64).sqrt();
    let pts: Vec<Point> = rows
        .iter()
        .map(|r| ((r.n as f64).ln(), r.var_separable_sim.ln(), sigma))
        .collect();
    fit_line(&pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{Ket2, Mat2};
    use alloc::vec;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use proptest::prelude::*;

    /// `U(θ)^⊗N` applied to the full `2^N` vector, differentiated centrally.
    fn brute_force_qfi(n: u32, theta: f64) -> f64 {
        let u = |t: f64| -> Mat2 { crate::channels::rotation_unitary(t) };
        let state = |t: f64| -> DVector<C64> {
            let (r, l) = (
                Ket2::r().transformed(&u(t)).unwrap(),
                Ket2::l().transformed(&u(t)).unwrap(),
            );
            let mut vr = DVector::from_element(1, c(1.0, 0.0));
            let mut vl = vr.clone();
            for _ in 0..n {
                vr = vr.kronecker(r.vector());
                vl = vl.kronecker(l.vector());
            }
            (vr - vl) * c(core::f64::consts::FRAC_1_SQRT_2, 0.0)
        };
        let h = 1e-5;
        let psi = state(theta);
        // fourth-order central difference
        let d = (state(theta - 2.0 * h) - state(theta - h) * c(8.0, 0.0)
            + state(theta + h) * c(8.0, 0.0)
            - state(theta + 2.0 * h))
            / c(12.0 * h, 0.0);
        let dd = d.dotc(&d).re;
        let ov = psi.dotc(&d);
        4.0 * (dd - ov.norm_sqr())
    }

    #[test]
    fn qfi_examples() {
        assert_abs_diff_eq!(qfi(1).unwrap(), 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(qfi(3).unwrap(), 36.0, epsilon = 1e-12);
        assert!(qfi(0).is_err());
        for n in 1..=8 {
            assert!((qfi(n).unwrap() - 4.0 * (n * n) as f64).abs() <= 1e-10);
        }
    }

    #[test]
    fn qfi_matches_full_state_oracle() {
        for n in 1..=8 {
            let f = brute_force_qfi(n, 0.3);
            assert!(
                (f - 4.0 * (n * n) as f64).abs() <= 1e-5 * (n * n) as f64,
                "n={n}: {f}"
            );
        }
    }

    #[test]
    fn subspace_amplitudes_match_full_state() {
        // U(θ)|R⟩ = e^{iθ}|R⟩ and U(θ)|L⟩ = e^{−iθ}|L⟩
        let u = crate::channels::rotation_unitary(0.4);
        let r = Ket2::r().transformed(&u).unwrap();
        let z = Ket2::r().vector().dotc(r.vector());
        assert_abs_diff_eq!((z - C64::from_polar(1.0, 0.4)).norm(), 0.0, epsilon = 1e-15);
        let l = Ket2::l().transformed(&u).unwrap();
        let z = Ket2::l().vector().dotc(l.vector());
        assert_abs_diff_eq!(
            (z - C64::from_polar(1.0, -0.4)).norm(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn bound_column() {
        let rows = variance_scaling(&[1, 2, 4], 50, 10, 1).unwrap();
        let b: Vec<f64> = rows.iter().map(|r| r.var_entangled_bound).collect();
        assert_eq!(b, vec![0.25, 0.0625, 0.015625]);
        assert!(variance_scaling(&[0], 10, 10, 1).is_err());
        assert!(variance_scaling(&[1], 1, 10, 1).is_err());
        assert!(variance_scaling(&[1], 10, 0, 1).is_err());
    }

    #[test]
    fn separable_estimator_is_consistent() {
        let est = separable_estimate(1, 1_000_000, BASELINE_THETA, 3, 0);
        assert!((est - BASELINE_THETA).abs() < 2e-3);
        assert_abs_diff_eq!(
            separable_estimate(2, 5, 0.1, 9, 4),
            separable_estimate(2, 5, 0.1, 9, 4)
        );
    }

    #[test]
    fn separable_variance_scales_as_one_over_n() {
        let trials = 10_000;
        let rows = variance_scaling(&[1, 2, 4, 8, 16], trials, 100, 7).unwrap();
        let fit = loglog_slope(&rows, trials).unwrap();
        assert!((fit.slope + 1.0).abs() <= 0.1, "{}", fit.slope);
        let tol = 1.0 + 3.0 * (2.0 / (trials - 1) as f64).sqrt();
        for r in &rows {
            // per-photon Fisher information is 4, so n photons give 1/(4n)
            assert!((r.var_separable_sim * 4.0 * r.n as f64 - 1.0).abs() < 0.1);
            assert!(r.var_entangled_bound <= r.var_separable_sim * tol);
        }
    }

    proptest! {
        #[test]
        fn probe_is_normalized(n in 1u32..10_000, theta in -10.0..10.0f64) {
            let p = NoonProbe::new(n, theta).unwrap();
            prop_assert!((p.norm() - 1.0).abs() <= 1e-12);
            let f = p.fisher_information();
            prop_assert!((f - 4.0 * (n as f64).powi(2)).abs() <= 1e-10 * f);
        }
    }
}
