//! Local polarization transformations: optical rotation, wave plates,
//! solution calibration, analyzer offset correction and isotropic noise.
//!
//! Positive angles are levorotatory and turn the polarization plane from H
//! toward V: `U(θ)|H⟩ = cos θ |H⟩ + sin θ |V⟩`.

use alloc::format;
// inherent f64 math shadows this whenever std is linked into the graph
use nalgebra::Matrix2;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::states::{kron, re, Mat2, TwoQubitState};

/// Default calibration constants, in degrees / (degrees per mol/L).
pub mod defaults {
    pub const SLOPE_DEG_PER_MOLAR: f64 = 7.01;
    pub const PBS_OFFSET_A_DEG: f64 = -4.75;
    pub const PBS_OFFSET_B_DEG: f64 = 4.09;
    pub const HWP_OFFSET_DEG: f64 = 5.47;
    pub const TRANSMISSION: f64 = 0.75;
}

pub const UNITARITY_TOL: f64 = 1e-8;

/// Optical rotation by `theta` radians, `U(θ) = exp(−i σ_y θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationChannel {
    pub theta: f64,
}

impl RotationChannel {
    pub fn new(theta: f64) -> Self {
        RotationChannel { theta }
    }

    pub fn unitary(&self) -> Mat2 {
        rotation_unitary(self.theta)
    }

    pub fn then(&self, other: RotationChannel) -> RotationChannel {
        RotationChannel::new(self.theta + other.theta)
    }
}

/// `[[cos θ, −sin θ], [sin θ, cos θ]]`.
pub fn rotation_unitary(theta: f64) -> Mat2 {
    let (s, co) = theta.sin_cos();
    Matrix2::new(re(co), re(-s), re(s), re(co))
}

/// Linear retarder with fast axis at `axis` and retardance `delta`.
pub fn retarder(axis: f64, delta: f64) -> Mat2 {
    let r = rotation_unitary(axis);
    let d = Matrix2::new(
        re(1.0),
        re(0.0),
        re(0.0),
        nalgebra::Complex::from_polar(1.0, delta),
    );
    r * d * r.adjoint()
}

/// Half-wave plate, global phase dropped: `[[cos 2h, sin 2h], [sin 2h, −cos 2h]]`.
pub fn half_wave_plate(axis: f64) -> Mat2 {
    retarder(axis, core::f64::consts::PI)
}

pub fn quarter_wave_plate(axis: f64) -> Mat2 {
    retarder(axis, core::f64::consts::FRAC_PI_2)
}

pub fn is_unitary(u: &Mat2, tol: f64) -> bool {
    (u.adjoint() * u - Mat2::identity())
        .iter()
        .all(|z| z.norm() <= tol)
}

/// `(u_a ⊗ u_b) ρ (u_a ⊗ u_b)†`.
pub fn apply_local(rho: &TwoQubitState, u_a: &Mat2, u_b: &Mat2) -> Result<TwoQubitState> {
    for (name, u) in [("arm A", u_a), ("arm B", u_b)] {
        if !is_unitary(u, UNITARITY_TOL) {
            return Err(Error::InvalidArgument(format!(
                "{name} operator is not unitary"
            )));
        }
    }
    let u = kron(u_a, u_b);
    let out = u * rho.matrix() * u.adjoint();
    Ok(TwoQubitState::from_matrix_unchecked(
        (out + out.adjoint()) * re(0.5),
    ))
}

/// Local optical rotations on both arms.
pub fn rotate_pair(rho: &TwoQubitState, theta_a: f64, theta_b: f64) -> TwoQubitState {
    apply_local(rho, &rotation_unitary(theta_a), &rotation_unitary(theta_b))
        .expect("rotations are unitary")
}

/// A chiral solution in one arm, described by its molarity and the
/// calibration line of its analyzer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionSpec {
    /// mol/L
    pub molarity: f64,
    /// degrees per mol/L
    pub slope_deg: f64,
    /// analyzer misalignment seen at zero molarity, degrees
    pub pbs_offset_deg: f64,
    /// polarization-independent transmission
    pub transmission: f64,
}

impl SolutionSpec {
    pub fn new(molarity: f64) -> Self {
        SolutionSpec {
            molarity,
            slope_deg: defaults::SLOPE_DEG_PER_MOLAR,
            pbs_offset_deg: defaults::PBS_OFFSET_B_DEG,
            transmission: defaults::TRANSMISSION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.molarity.is_finite() && self.molarity >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "molarity {} must be finite and non-negative",
                self.molarity
            )));
        }
        if !self.slope_deg.is_finite() || !self.pbs_offset_deg.is_finite() {
            return Err(Error::InvalidArgument(
                "calibration constants must be finite".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.transmission) {
            return Err(Error::InvalidArgument(format!(
                "transmission {} outside [0, 1]",
                self.transmission
            )));
        }
        Ok(())
    }
}

/// Physical rotation `slope · c` in radians. The analyzer offset is not
/// included; see [`offset_correct`].
pub fn solution_rotation(spec: &SolutionSpec) -> Result<f64> {
    spec.validate()?;
    Ok((spec.slope_deg * spec.molarity).to_radians())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Plus,
    Minus,
}

/// Analyzer offsets, radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzerOffsets {
    pub pbs_a: f64,
    pub pbs_b: f64,
    /// Rotation from the plate that exchanges ψ+ and ψ−; enters the minus branch only.
    pub hwp: f64,
}

impl AnalyzerOffsets {
    pub const ZERO: AnalyzerOffsets = AnalyzerOffsets {
        pbs_a: 0.0,
        pbs_b: 0.0,
        hwp: 0.0,
    };

    pub fn measured_defaults() -> Self {
        AnalyzerOffsets {
            pbs_a: defaults::PBS_OFFSET_A_DEG.to_radians(),
            pbs_b: defaults::PBS_OFFSET_B_DEG.to_radians(),
            hwp: defaults::HWP_OFFSET_DEG.to_radians(),
        }
    }

    /// Total offset folded into a measured nonlocal angle on `branch`.
    pub fn total(&self, branch: Branch) -> f64 {
        match branch {
            Branch::Plus => self.pbs_a + self.pbs_b,
            Branch::Minus => self.pbs_a - self.pbs_b + self.hwp,
        }
    }
}

/// Removes analyzer offsets from a measured nonlocal angle:
/// plus branch `θ − a − b`, minus branch `θ − a + b − hwp`.
pub fn offset_correct(theta_exp: f64, branch: Branch, pbs_a: f64, pbs_b: f64, hwp: f64) -> f64 {
    let off = AnalyzerOffsets { pbs_a, pbs_b, hwp };
    theta_exp - off.total(branch)
}

/// Inverse of [`offset_correct`].
pub fn offset_apply(theta: f64, branch: Branch, pbs_a: f64, pbs_b: f64, hwp: f64) -> f64 {
    let off = AnalyzerOffsets { pbs_a, pbs_b, hwp };
    theta + off.total(branch)
}

/// Phenomenological imperfections of source and detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// weight `p` of the ideal state in `p·ρ + (1 − p)·I/4`
    pub visibility: f64,
    /// fraction of recorded coincidences that are accidental, in `[0, 1)`
    pub accidental_fraction: f64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec {
        visibility: 1.0,
        accidental_fraction: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(Error::InvalidArgument(format!(
                "visibility {} outside [0, 1]",
                self.visibility
            )));
        }
        if !(0.0..1.0).contains(&self.accidental_fraction) {
            return Err(Error::InvalidArgument(format!(
                "accidental fraction {} outside [0, 1)",
                self.accidental_fraction
            )));
        }
        Ok(())
    }

    /// Visibility giving fidelity `f` with the ideal pure state.
    pub fn visibility_for_fidelity(f: f64) -> f64 {
        (4.0 * f - 1.0) / 3.0
    }
}

pub fn apply_noise(rho: &TwoQubitState, noise: &NoiseSpec) -> Result<TwoQubitState> {
    noise.validate()?;
    rho.mixed_with_identity(noise.visibility)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{bell_state, c, fidelity, BellKind, Ket2, Mat4};
    use approx::assert_abs_diff_eq;
    use core::f64::consts::{FRAC_PI_2, PI};
    use proptest::prelude::*;

    fn max_diff(a: &Mat4, b: &Mat4) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(rotation_unitary(0.0), Mat2::identity());
        let q = rotation_unitary(FRAC_PI_2);
        let want = Matrix2::new(re(0.0), re(-1.0), re(1.0), re(0.0));
        assert!((q - want).iter().all(|z| z.norm() < 1e-15));
        let v = Ket2::h().transformed(&q).unwrap();
        assert_abs_diff_eq!(v.amplitudes().1.re, 1.0, epsilon = 1e-15);

        let th = 20.08f64.to_radians();
        let k = Ket2::h().transformed(&rotation_unitary(th)).unwrap();
        assert_abs_diff_eq!(k.amplitudes().0.re, 0.939_214_15, epsilon = 1e-8);
        assert_abs_diff_eq!(k.amplitudes().1.re, 0.343_331_87, epsilon = 1e-8);

        let u = rotation_unitary(0.7);
        let det = u[(0, 0)] * u[(1, 1)] - u[(0, 1)] * u[(1, 0)];
        assert_abs_diff_eq!(det.re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rotation_is_exp_of_sigma_y() {
        // exp(−iσ_yθ) = cos θ I − i sin θ σ_y
        let th = 0.37;
        let y = crate::states::PauliOp::Y.matrix();
        let u = Mat2::identity() * re(th.cos()) - y * c(0.0, th.sin());
        assert!((u - rotation_unitary(th)).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn nonlocal_equivalence_examples() {
        let th = 0.4;
        let pm = bell_state(BellKind::PsiMinus);
        let out = rotate_pair(&pm, th, th);
        assert!(max_diff(out.matrix(), pm.matrix()) <= 1e-12);

        let (ta, tb) = (0.35, -0.2);
        let pp = bell_state(BellKind::PsiPlus);
        let lhs = rotate_pair(&pp, ta, tb);
        let rhs = rotate_pair(&pp, ta + tb, 0.0);
        assert!(max_diff(lhs.matrix(), rhs.matrix()) <= 1e-12);

        let lhs = rotate_pair(&pm, ta, tb);
        let rhs = rotate_pair(&pm, ta - tb, 0.0);
        assert!(max_diff(lhs.matrix(), rhs.matrix()) <= 1e-12);
    }

    #[test]
    fn apply_local_rejects_non_unitary() {
        let pp = bell_state(BellKind::PsiPlus);
        let bad = Mat2::identity() * re(1.1);
        assert!(apply_local(&pp, &bad, &Mat2::identity()).is_err());
        assert!(apply_local(&pp, &Mat2::identity(), &bad).is_err());
    }

    #[test]
    fn wave_plates() {
        let h = half_wave_plate(0.3);
        let want = Matrix2::new(
            re(0.6f64.cos()),
            re(0.6f64.sin()),
            re(0.6f64.sin()),
            re(-0.6f64.cos()),
        );
        assert!((h - want).iter().all(|z| z.norm() < 1e-14));
        assert!(is_unitary(&quarter_wave_plate(0.2), 1e-14));
        // QWP at 45° turns H into circular light
        let k = Ket2::h()
            .transformed(&quarter_wave_plate(PI / 4.0))
            .unwrap();
        let (a, b) = k.amplitudes();
        assert_abs_diff_eq!(a.norm(), b.norm(), epsilon = 1e-14);
        assert_abs_diff_eq!((b / a).re, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn solution_examples() {
        let deg = |c: f64| {
            solution_rotation(&SolutionSpec::new(c))
                .unwrap()
                .to_degrees()
        };
        assert_eq!(deg(0.0), 0.0);
        assert_abs_diff_eq!(deg(2.877), 20.16777, epsilon = 1e-9);
        assert_abs_diff_eq!(deg(4.236), 29.69436, epsilon = 1e-9);
        assert!(solution_rotation(&SolutionSpec::new(-0.1)).is_err());
        let mut s = SolutionSpec::new(1.0);
        s.transmission = 1.5;
        assert!(solution_rotation(&s).is_err());
    }

    #[test]
    fn offset_examples() {
        let a = -4.75f64.to_radians();
        let b = 4.09f64.to_radians();
        let h = 5.47f64.to_radians();
        assert_abs_diff_eq!(
            offset_correct(a + b, Branch::Plus, a, b, h),
            0.0,
            epsilon = 1e-15
        );
        assert_eq!(offset_correct(0.123, Branch::Minus, 0.0, 0.0, 0.0), 0.123);
        let d = AnalyzerOffsets::measured_defaults();
        assert_abs_diff_eq!(d.pbs_a, a);
        assert_abs_diff_eq!(d.pbs_b, b);
        assert_abs_diff_eq!(d.hwp, h);
        // minus branch: θ − a + b − hwp
        assert_abs_diff_eq!(
            offset_correct(1.0, Branch::Minus, a, b, h),
            1.0 - a + b - h,
            epsilon = 1e-15
        );
    }

    #[test]
    fn noise_examples() {
        let pp = bell_state(BellKind::PsiPlus);
        let n = |p| NoiseSpec {
            visibility: p,
            accidental_fraction: 0.0,
        };
        assert_eq!(apply_noise(&pp, &n(1.0)).unwrap().matrix(), pp.matrix());
        let mm = apply_noise(&pp, &n(0.0)).unwrap();
        assert!(max_diff(mm.matrix(), &(Mat4::identity() * re(0.25))) < 1e-15);

        let p = NoiseSpec::visibility_for_fidelity(0.984);
        assert_abs_diff_eq!(p, 0.978_666_666_666_666_7, epsilon = 1e-12);
        let w = apply_noise(&pp, &n(p)).unwrap();
        assert_abs_diff_eq!(fidelity(&w, &pp), 0.984, epsilon = 1e-9);

        assert!(apply_noise(&pp, &n(1.2)).is_err());
        let bad = NoiseSpec {
            visibility: 1.0,
            accidental_fraction: 1.0,
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn rotations_compose(t1 in -7.0..7.0f64, t2 in -7.0..7.0f64) {
            let lhs = rotation_unitary(t2) * rotation_unitary(t1);
            let rhs = rotation_unitary(t1 + t2);
            prop_assert!((lhs - rhs).iter().all(|z| z.norm() <= 1e-12));
            prop_assert!(is_unitary(&rotation_unitary(t1), 1e-12));
        }

        #[test]
        fn psi_states_see_sum_or_difference(ta in -3.2..3.2f64, tb in -3.2..3.2f64) {
            for (kind, sign) in [(BellKind::PsiPlus, 1.0), (BellKind::PsiMinus, -1.0)] {
                let rho = bell_state(kind);
                let lhs = rotate_pair(&rho, ta, tb);
                let rhs = rotate_pair(&rho, ta + sign * tb, 0.0);
                prop_assert!(max_diff(lhs.matrix(), rhs.matrix()) <= 1e-12);
            }
        }

        #[test]
        fn noise_preserves_physicality(p in 0.0..=1.0f64, t in -2.0..2.0f64) {
            let rho = rotate_pair(&bell_state(BellKind::PhiPlus), t, 0.3);
            let out = apply_noise(&rho, &NoiseSpec { visibility: p, accidental_fraction: 0.0 }).unwrap();
            prop_assert!(TwoQubitState::from_matrix(*out.matrix()).is_ok());
        }

        #[test]
        fn offset_correction_inverts(th in -3.0..3.0f64, a in -0.2..0.2f64, b in -0.2..0.2f64, h in -0.2..0.2f64, plus in any::<bool>()) {
            let br = if plus { Branch::Plus } else { Branch::Minus };
            let back = offset_correct(offset_apply(th, br, a, b, h), br, a, b, h);
            prop_assert!((back - th).abs() <= 1e-14);
        }
    }
}
