//! One- and two-qubit polarization states.
//!
//! Two-photon matrices use the fixed basis order `(HH, HV, VH, VV)` with the
//! first tensor factor belonging to arm A. Index `0` is `H`, index `1` is `V`,
//! so the flat index of `|a b⟩` is `2 * a + b`.
//!
//! Circular states follow `|R⟩ = (|H⟩ − i|V⟩)/√2` and `|L⟩ = (|H⟩ + i|V⟩)/√2`.

use alloc::format;
// inherent f64 math shadows this whenever std is linked into the graph
use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;
pub type Mat2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-9;

const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;

pub(crate) fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub(crate) fn re(x: f64) -> C64 {
    Complex::new(x, 0.0)
}

/// Single-photon polarization ket in the H/V basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ket2 {
    amps: Vector2<C64>,
}

impl Ket2 {
    /// Normalizes `(h, v)`; rejects the zero vector.
    pub fn new(h: C64, v: C64) -> Result<Self> {
        let norm = (h.norm_sqr() + v.norm_sqr()).sqrt();
        if !(norm.is_finite() && norm > 1e-300) {
            return Err(Error::InvalidArgument(format!(
                "cannot normalize ket with norm {norm}"
            )));
        }
        Ok(Ket2 {
            amps: Vector2::new(h / norm, v / norm),
        })
    }

    fn raw(h: C64, v: C64) -> Self {
        Ket2 {
            amps: Vector2::new(h, v),
        }
    }

    pub fn h() -> Self {
        Self::raw(re(1.0), re(0.0))
    }

    pub fn v() -> Self {
        Self::raw(re(0.0), re(1.0))
    }

    pub fn d() -> Self {
        Self::raw(re(FRAC_1_SQRT_2), re(FRAC_1_SQRT_2))
    }

    pub fn a() -> Self {
        Self::raw(re(FRAC_1_SQRT_2), re(-FRAC_1_SQRT_2))
    }

    pub fn r() -> Self {
        Self::raw(re(FRAC_1_SQRT_2), c(0.0, -FRAC_1_SQRT_2))
    }

    pub fn l() -> Self {
        Self::raw(re(FRAC_1_SQRT_2), c(0.0, FRAC_1_SQRT_2))
    }

    /// Linear polarization at `angle` radians from H toward V.
    pub fn linear(angle: f64) -> Self {
        Self::raw(re(angle.cos()), re(angle.sin()))
    }

    pub fn amplitudes(&self) -> (C64, C64) {
        (self.amps[0], self.amps[1])
    }

    pub fn vector(&self) -> &Vector2<C64> {
        &self.amps
    }

    pub fn projector(&self) -> Mat2 {
        self.amps * self.amps.adjoint()
    }

    /// Applies a 2×2 operator and renormalizes.
    pub fn transformed(&self, op: &Mat2) -> Result<Self> {
        let w = op * self.amps;
        Ket2::new(w[0], w[1])
    }

    pub fn with_phase(&self, phi: f64) -> Self {
        let p = Complex::from_polar(1.0, phi);
        Self::raw(self.amps[0] * p, self.amps[1] * p)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps[0].norm_sqr() + self.amps[1].norm_sqr()
    }
}

/// Pauli operators on one polarization qubit, with `σ_z|H⟩ = |H⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PauliOp {
    I,
    X,
    Y,
    Z,
}

impl PauliOp {
    pub const ALL: [PauliOp; 4] = [PauliOp::I, PauliOp::X, PauliOp::Y, PauliOp::Z];

    pub fn matrix(self) -> Mat2 {
        let (o, l, i) = (re(0.0), re(1.0), c(0.0, 1.0));
        match self {
            PauliOp::I => Matrix2::new(l, o, o, l),
            PauliOp::X => Matrix2::new(o, l, l, o),
            PauliOp::Y => Matrix2::new(o, -i, i, o),
            PauliOp::Z => Matrix2::new(l, o, o, -l),
        }
    }

    pub fn label(self) -> char {
        match self {
            PauliOp::I => 'I',
            PauliOp::X => 'X',
            PauliOp::Y => 'Y',
            PauliOp::Z => 'Z',
        }
    }
}

/// `a ⊗ b` with `a` acting on arm A (the slow index).
pub fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
    Matrix4::from_fn(|r, col| a[(r / 2, col / 2)] * b[(r % 2, col % 2)])
}

pub fn kron_ket(a: &Ket2, b: &Ket2) -> Vector4<C64> {
    let (a, b) = (a.vector(), b.vector());
    Vector4::from_fn(|r, _| a[r / 2] * b[r % 2])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BellKind {
    PsiPlus,
    PsiMinus,
    PhiPlus,
    PhiMinus,
}

impl BellKind {
    pub fn ket(self) -> Vector4<C64> {
        let s = FRAC_1_SQRT_2;
        let (hh, hv, vh, vv) = match self {
            BellKind::PsiPlus => (0.0, s, s, 0.0),
            BellKind::PsiMinus => (0.0, s, -s, 0.0),
            BellKind::PhiPlus => (s, 0.0, 0.0, s),
            BellKind::PhiMinus => (s, 0.0, 0.0, -s),
        };
        Vector4::new(re(hh), re(hv), re(vh), re(vv))
    }
}

/// Hermitian eigendecomposition; eigenvalues ascending.
pub fn hermitian_eigen(m: &Mat4) -> (Vector4<f64>, Mat4) {
    let sym = (m + m.adjoint()) * re(0.5);
    let eig = sym.symmetric_eigen();
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = Vector4::from_fn(|r, _| eig.eigenvalues[order[r]]);
    let vectors = Matrix4::from_fn(|r, col| eig.eigenvectors[(r, order[col])]);
    (values, vectors)
}

pub(crate) fn trace(m: &Mat4) -> C64 {
    m[(0, 0)] + m[(1, 1)] + m[(2, 2)] + m[(3, 3)]
}

fn max_abs(m: &Mat4) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Density matrix of a polarization-qubit pair.
///
/// Every value of this type is Hermitian, unit trace, and positive
/// semidefinite within [`HERMITIAN_TOL`], [`TRACE_TOL`] and [`PSD_TOL`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitState {
    rho: Mat4,
}

impl TwoQubitState {
    /// Validates `rho` against the physicality invariants.
    pub fn from_matrix(rho: Mat4) -> Result<Self> {
        if rho.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NotPhysical("non-finite entry".into()));
        }
        let herm = max_abs(&(rho - rho.adjoint()));
        if herm > HERMITIAN_TOL {
            return Err(Error::NotPhysical(format!(
                "Hermiticity violated by {herm:.3e}"
            )));
        }
        let tr = trace(&rho);
        if (tr - re(1.0)).norm() > TRACE_TOL {
            return Err(Error::NotPhysical(format!("trace is {tr}")));
        }
        let (vals, _) = hermitian_eigen(&rho);
        if vals[0] < -PSD_TOL {
            return Err(Error::NotPhysical(format!(
                "minimum eigenvalue {:.3e}",
                vals[0]
            )));
        }
        Ok(TwoQubitState { rho })
    }

    /// Skips validation for matrices that are physical by construction.
    pub(crate) fn from_matrix_unchecked(rho: Mat4) -> Self {
        TwoQubitState { rho }
    }

    /// `|ψ⟩⟨ψ|` for a (renormalized) pure state.
    pub fn pure(ket: &Vector4<C64>) -> Result<Self> {
        let n = ket.norm();
        if !(n.is_finite() && n > 1e-300) {
            return Err(Error::InvalidArgument("zero ket".into()));
        }
        let k = ket / re(n);
        let mut rho = k * k.adjoint();
        // exact hermiticity for downstream checks
        rho = (rho + rho.adjoint()) * re(0.5);
        Ok(TwoQubitState { rho })
    }

    pub fn maximally_mixed() -> Self {
        TwoQubitState {
            rho: Mat4::identity() * re(0.25),
        }
    }

    /// `p·ρ + (1 − p)·I/4`.
    pub fn mixed_with_identity(&self, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "mixing weight {p} outside [0, 1]"
            )));
        }
        Ok(TwoQubitState {
            rho: self.rho * re(p) + Mat4::identity() * re((1.0 - p) / 4.0),
        })
    }

    /// Werner-type state `p·|bell⟩⟨bell| + (1 − p)·I/4`.
    pub fn werner(kind: BellKind, p: f64) -> Result<Self> {
        bell_state(kind).mixed_with_identity(p)
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.rho
    }

    pub fn eigenvalues(&self) -> Vector4<f64> {
        hermitian_eigen(&self.rho).0
    }

    /// Entries in row-major `(HH, HV, VH, VV)` order as `(re, im)` pairs.
    pub fn to_row_major(&self) -> [(f64, f64); 16] {
        let mut out = [(0.0, 0.0); 16];
        for r in 0..4 {
            for col in 0..4 {
                let z = self.rho[(r, col)];
                out[4 * r + col] = (z.re, z.im);
            }
        }
        out
    }

    pub fn from_row_major(entries: &[(f64, f64); 16]) -> Result<Self> {
        let m = Matrix4::from_fn(|r, col| {
            let (a, b) = entries[4 * r + col];
            c(a, b)
        });
        Self::from_matrix(m)
    }

    /// Reduced state of arm A.
    pub fn partial_trace_b(&self) -> Mat2 {
        Matrix2::from_fn(|r, col| self.rho[(2 * r, 2 * col)] + self.rho[(2 * r + 1, 2 * col + 1)])
    }

    /// `Tr[ρ O]`, real part.
    pub fn expectation(&self, op: &Mat4) -> f64 {
        trace(&(self.rho * op)).re
    }
}

pub fn bell_state(kind: BellKind) -> TwoQubitState {
    TwoQubitState::pure(&kind.ket()).expect("Bell kets are normalized")
}

/// `|a⟩⟨a| ⊗ |b⟩⟨b|`.
pub fn separable_state(ket_a: &Ket2, ket_b: &Ket2) -> TwoQubitState {
    TwoQubitState::pure(&kron_ket(ket_a, ket_b)).expect("normalized kets")
}

pub fn purity(rho: &TwoQubitState) -> f64 {
    trace(&(rho.rho * rho.rho)).re
}

const SUPPORT_TOL: f64 = 1e-14;

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²`.
///
/// Evaluated on the support of the lower-rank argument; when either state is
/// pure this reduces to `⟨ψ|σ|ψ⟩`, avoiding square roots of round-off
/// eigenvalues.
pub fn fidelity(rho: &TwoQubitState, sigma: &TwoQubitState) -> f64 {
    let er = hermitian_eigen(&rho.rho);
    let es = hermitian_eigen(&sigma.rho);
    let rank = |v: &Vector4<f64>| v.iter().filter(|&&x| x > SUPPORT_TOL).count();
    let ((vals, vecs), other) = if rank(&er.0) <= rank(&es.0) {
        (er, &sigma.rho)
    } else {
        (es, &rho.rho)
    };
    let support: alloc::vec::Vec<usize> = (0..4).filter(|&i| vals[i] > SUPPORT_TOL).collect();
    let k = support.len();
    if k == 1 {
        let i = support[0];
        let u = vecs.column(i);
        let f = vals[i] * (u.adjoint() * other * u)[(0, 0)].re;
        return f.clamp(0.0, 1.0);
    }
    let m = nalgebra::DMatrix::from_fn(k, k, |r, col| {
        let (i, j) = (support[r], support[col]);
        let v = (vecs.column(i).adjoint() * other * vecs.column(j))[(0, 0)];
        v * re((vals[i] * vals[j]).sqrt())
    });
    let m = (&m + m.adjoint()) * re(0.5);
    let lam = m.symmetric_eigenvalues();
    let tr: f64 = lam
        .iter()
        .filter(|&&x| x > SUPPORT_TOL)
        .map(|x| x.sqrt())
        .sum();
    (tr * tr).clamp(0.0, 1.0)
}

/// Spin-flipped state `(σ_y ⊗ σ_y) ρ* (σ_y ⊗ σ_y)`.
pub fn spin_flip(rho: &TwoQubitState) -> Mat4 {
    let yy = kron(&PauliOp::Y.matrix(), &PauliOp::Y.matrix());
    yy * rho.rho.map(|z| z.conj()) * yy
}

/// Wootters concurrence.
///
/// With `ρ = W W†` restricted to the support of `ρ`, the `λᵢ` (square roots of
/// the eigenvalues of `ρ ρ̃`) are the singular values of `Wᵀ (σ_y ⊗ σ_y) W`,
/// which avoids square roots of round-off eigenvalues.
pub fn concurrence(rho: &TwoQubitState) -> f64 {
    let (vals, vecs) = hermitian_eigen(&rho.rho);
    let support: alloc::vec::Vec<usize> = (0..4).filter(|&i| vals[i] > SUPPORT_TOL).collect();
    let w = nalgebra::DMatrix::from_fn(4, support.len(), |r, col| {
        vecs[(r, support[col])] * re(vals[support[col]].sqrt())
    });
    let yy = kron(&PauliOp::Y.matrix(), &PauliOp::Y.matrix());
    let yy = nalgebra::DMatrix::from_fn(4, 4, |r, col| yy[(r, col)]);
    let a = w.transpose() * yy * &w;
    let mut l = [0.0f64; 4];
    for (slot, sv) in l.iter_mut().zip(a.singular_values().iter()) {
        *slot = *sv;
    }
    l.sort_by(|x, y| y.total_cmp(x));
    (l[0] - l[1] - l[2] - l[3]).max(0.0)
}

/// `Re Tr(ρ†σ) / (‖ρ‖_F ‖σ‖_F)`.
pub fn cosine_similarity(rho: &TwoQubitState, sigma: &TwoQubitState) -> f64 {
    matrix_cosine_similarity(&rho.rho, &sigma.rho).expect("density matrices are nonzero")
}

/// Cosine similarity for arbitrary (possibly unnormalized) matrices.
pub fn matrix_cosine_similarity(a: &Mat4, b: &Mat4) -> Result<f64> {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidArgument("zero matrix".into()));
    }
    Ok((trace(&(a.adjoint() * b)).re / (na * nb)).clamp(-1.0, 1.0))
}

/// Random full-rank state `GG† / Tr(GG†)` with `G` a complex Ginibre matrix.
pub fn random_state<R: rand::Rng + ?Sized>(rng: &mut R) -> TwoQubitState {
    use rand_distr::StandardNormal;
    let g = Mat4::from_fn(|_, _| {
        C64::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        )
    });
    let m = g * g.adjoint();
    let rho = m / c(m.trace().re, 0.0);
    TwoQubitState::from_matrix_unchecked((rho + rho.adjoint()) * c(0.5, 0.0))
}

/// Trace distance `½ Tr|ρ − σ|`.
pub fn trace_distance(rho: &TwoQubitState, sigma: &TwoQubitState) -> f64 {
    let (vals, _) = hermitian_eigen(&(rho.rho - sigma.rho));
    0.5 * vals.iter().map(|x| x.abs()).sum::<f64>()
}
