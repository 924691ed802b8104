//! Two-qubit state tomography from sixteen product projectors.
//!
//! The measurement set is `{H, V, R} × {H, V, D, L}` followed by
//! `D × {H, V, D, R}`, frozen in the order
//!
//! ```text
//! HH HV HD HL  VH VV VD VL  RH RV RD RL  DH DV DD DR
//! ```
//!
//! Its real 16×16 design matrix (rows = projectors expanded on the Pauli
//! products `σ_i ⊗ σ_j / 4`) has full rank with condition number ≈ 9.749
//! (see the `design_matrix_condition_number` test).
//!
//! Maximum-likelihood reconstruction parametrizes `ρ = T†T / Tr(T†T)` with
//! `T` lower triangular (four real diagonal and six complex sub-diagonal
//! entries) and maximizes the Poisson likelihood with the overall flux
//! profiled out. Per count, the objective is
//! `f(t) = Σ_k (n_k / N) ln(q_k / Σ_j q_j)` with `q_k = ‖T ψ_k‖²`, which is
//! invariant under rescaling `t`. Convergence is judged on the gradient of
//! `f` at unit-norm `t`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix4, SMatrix, SVector, Vector4};
// inherent f64 math shadows this whenever std is linked into the graph
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::measure::{sample_poisson, stream_rng};
use crate::states::{
    concurrence, cosine_similarity, fidelity, hermitian_eigen, kron_ket, purity, re, Ket2, Mat4,
    PauliOp, TwoQubitState, C64,
};

/// Single-photon analyzer state used in tomography labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolLabel {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl PolLabel {
    pub fn ket(self) -> Ket2 {
        match self {
            PolLabel::H => Ket2::h(),
            PolLabel::V => Ket2::v(),
            PolLabel::D => Ket2::d(),
            PolLabel::A => Ket2::a(),
            PolLabel::R => Ket2::r(),
            PolLabel::L => Ket2::l(),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            PolLabel::H => 'H',
            PolLabel::V => 'V',
            PolLabel::D => 'D',
            PolLabel::A => 'A',
            PolLabel::R => 'R',
            PolLabel::L => 'L',
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "H" => Ok(PolLabel::H),
            "V" => Ok(PolLabel::V),
            "D" => Ok(PolLabel::D),
            "A" => Ok(PolLabel::A),
            "R" => Ok(PolLabel::R),
            "L" => Ok(PolLabel::L),
            other => Err(Error::InvalidArgument(format!(
                "unknown polarization label `{other}`"
            ))),
        }
    }
}

/// One joint projector `|α⟩_A|β⟩_B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TomographySetting {
    pub a: PolLabel,
    pub b: PolLabel,
    ket: Vector4<C64>,
}

impl TomographySetting {
    pub fn new(a: PolLabel, b: PolLabel) -> Self {
        TomographySetting {
            a,
            b,
            ket: kron_ket(&a.ket(), &b.ket()),
        }
    }

    pub fn ket(&self) -> &Vector4<C64> {
        &self.ket
    }

    pub fn projector(&self) -> Mat4 {
        self.ket * self.ket.adjoint()
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn probability(&self, rho: &Mat4) -> f64 {
        (self.ket.adjoint() * rho * self.ket)[(0, 0)].re
    }
}

/// Ordered list of tomography projectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TomographyBasisSet {
    pub settings: Vec<TomographySetting>,
}

/// The sixteen-projector set in its frozen order.
pub fn tomography_settings() -> TomographyBasisSet {
    use PolLabel::*;
    let gamma = [H, V, D, L];
    let delta = [H, V, D, R];
    let mut settings = Vec::with_capacity(16);
    for a in [H, V, R] {
        settings.extend(gamma.iter().map(|&b| TomographySetting::new(a, b)));
    }
    settings.extend(delta.iter().map(|&b| TomographySetting::new(D, b)));
    TomographyBasisSet { settings }
}

fn bloch(ket: &Ket2) -> [f64; 4] {
    let p = ket.projector();
    let ev = |op: PauliOp| (op.matrix() * p).trace().re;
    [1.0, ev(PauliOp::X), ev(PauliOp::Y), ev(PauliOp::Z)]
}

fn pauli_product(i: usize, j: usize) -> Mat4 {
    crate::states::kron(&PauliOp::ALL[i].matrix(), &PauliOp::ALL[j].matrix())
}

impl TomographyBasisSet {
    pub fn len(&self) -> usize {
        self.settings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.settings.is_empty()
    }

    pub fn find(&self, a: PolLabel, b: PolLabel) -> Option<usize> {
        self.settings.iter().position(|s| s.a == a && s.b == b)
    }

    /// Reordered copy: entry `k` of the result is entry `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        TomographyBasisSet {
            settings: perm.iter().map(|&i| self.settings[i]).collect(),
        }
    }

    /// Rows are projectors, columns the coefficients of `σ_i ⊗ σ_j / 4`
    /// (column `4i + j`, with `σ_0 = I`).
    pub fn design_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), 16, |k, col| {
            let s = &self.settings[k];
            let (ra, rb) = (bloch(&s.a.ket()), bloch(&s.b.ket()));
            0.25 * ra[col / 4] * rb[col % 4]
        })
    }

    pub fn design_rank(&self) -> usize {
        self.design_matrix().rank(1e-10)
    }

    pub fn condition_number(&self) -> f64 {
        let sv = self.design_matrix().singular_values();
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }
}

/// `n̄_k = flux_norm · ⟨ψ_k|ρ|ψ_k⟩`.
pub fn predicted_counts(rho: &TwoQubitState, set: &TomographyBasisSet, flux_norm: f64) -> Vec<f64> {
    set.settings
        .iter()
        .map(|s| flux_norm * s.probability(rho.matrix()).max(0.0))
        .collect()
}

fn check_counts(counts: &[f64], set: &TomographyBasisSet) -> Result<f64> {
    if counts.len() != set.len() {
        return Err(Error::InvalidArgument(format!(
            "{} counts for {} settings",
            counts.len(),
            set.len()
        )));
    }
    if counts.iter().any(|&n| !(n.is_finite() && n >= 0.0)) {
        return Err(Error::InvalidArgument(
            "counts must be finite and non-negative".into(),
        ));
    }
    let total: f64 = counts.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroCounts("tomography data".into()));
    }
    Ok(total)
}

/// Least-squares inversion of the design matrix, symmetrized and trace
/// normalized. The result may have negative eigenvalues.
pub fn linear_inversion(counts: &[f64], set: &TomographyBasisSet) -> Result<Mat4> {
    check_counts(counts, set)?;
    let b = set.design_matrix();
    if b.rank(1e-10) < 16 {
        return Err(Error::Singular(
            "tomography design matrix is rank deficient".into(),
        ));
    }
    let n = DVector::from_column_slice(counts);
    let x = b
        .svd(true, true)
        .solve(&n, 1e-12)
        .map_err(|e| Error::Singular(e.into()))?;
    let mut rho = Mat4::zeros();
    for col in 0..16 {
        rho += pauli_product(col / 4, col % 4) * re(0.25 * x[col]);
    }
    let rho = (rho + rho.adjoint()) * re(0.5);
    let tr = rho.trace().re;
    if !(tr > 0.0) {
        return Err(Error::Singular(format!(
            "reconstructed trace {tr} is not positive"
        )));
    }
    Ok(rho / re(tr))
}

/// Clamps eigenvalues below `floor` to `floor` and renormalizes.
pub fn project_to_physical(m: &Mat4, floor: f64) -> TwoQubitState {
    let (vals, vecs) = hermitian_eigen(m);
    let clamped = vals.map(|x| x.max(floor));
    let total: f64 = clamped.iter().sum();
    let d = Matrix4::from_diagonal(&clamped.map(|x| re(x / total)));
    let rho = vecs * d * vecs.adjoint();
    TwoQubitState::from_matrix_unchecked((rho + rho.adjoint()) * re(0.5))
}

pub const N_PARAMS: usize = 16;
pub type Params = SVector<f64, N_PARAMS>;
type Hessian = SMatrix<f64, N_PARAMS, N_PARAMS>;

const OFF_DIAG: [(usize, usize); 6] = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)];

/// Lower-triangular factor from the 16 real parameters.
pub fn params_to_factor(t: &Params) -> Mat4 {
    let mut m = Mat4::zeros();
    for i in 0..4 {
        m[(i, i)] = re(t[i]);
    }
    for (k, &(i, j)) in OFF_DIAG.iter().enumerate() {
        m[(i, j)] = C64::new(t[4 + 2 * k], t[5 + 2 * k]);
    }
    m
}

/// `T†T / Tr(T†T)`.
pub fn params_to_state(t: &Params) -> Result<TwoQubitState> {
    let f = params_to_factor(t);
    let m = f.adjoint() * f;
    let tr = m.trace().re;
    if !(tr > 0.0 && tr.is_finite()) {
        return Err(Error::InvalidArgument(
            "parameters give a zero matrix".into(),
        ));
    }
    let rho = m / re(tr);
    Ok(TwoQubitState::from_matrix_unchecked(
        (rho + rho.adjoint()) * re(0.5),
    ))
}

/// Parameters with `T†T = ρ` for a positive-definite `ρ`.
///
/// Cholesky of the index-reversed matrix `PρP = LL†` gives `T = P L† P`.
pub fn state_to_params(rho: &TwoQubitState) -> Result<Params> {
    let m = rho.matrix();
    let rev = Matrix4::from_fn(|r, c| m[(3 - r, 3 - c)]);
    let l = rev
        .cholesky()
        .ok_or_else(|| Error::Singular("state is not positive definite".into()))?
        .unpack();
    let lt = l.adjoint();
    let t = Matrix4::from_fn(|r, c| lt[(3 - r, 3 - c)]);
    let mut p = Params::zeros();
    for i in 0..4 {
        p[i] = t[(i, i)].re;
    }
    for (k, &(i, j)) in OFF_DIAG.iter().enumerate() {
        p[4 + 2 * k] = t[(i, j)].re;
        p[5 + 2 * k] = t[(i, j)].im;
    }
    Ok(p)
}

/// Per-count profiled log-likelihood and its gradient at `t`.
///
/// Returns `None` when a setting with counts has vanishing predicted
/// probability.
pub fn mle_objective(
    counts: &[f64],
    set: &TomographyBasisSet,
    t: &Params,
) -> Option<(f64, Params)> {
    let total: f64 = counts.iter().sum();
    let f = params_to_factor(t);
    let mut q_sum = 0.0;
    let mut dq_sum = Params::zeros();
    let mut value = 0.0;
    let mut grad = Params::zeros();
    for (s, &n) in set.settings.iter().zip(counts) {
        let psi = s.ket();
        let v = f * psi;
        let q = v.norm_squared();
        let mut dq = Params::zeros();
        for i in 0..4 {
            dq[i] = 2.0 * (v[i].conj() * psi[i]).re;
        }
        for (k, &(i, j)) in OFF_DIAG.iter().enumerate() {
            let z = v[i].conj() * psi[j];
            dq[4 + 2 * k] = 2.0 * z.re;
            dq[5 + 2 * k] = -2.0 * z.im;
        }
        q_sum += q;
        dq_sum += dq;
        if n > 0.0 {
            if !(q > 0.0) {
                return None;
            }
            let w = n / total;
            value += w * q.ln();
            grad += dq * (w / q);
        }
    }
    if !(q_sum > 0.0) {
        return None;
    }
    value -= q_sum.ln();
    grad -= dq_sum / q_sum;
    Some((value, grad))
}

/// Poisson log-likelihood `Σ n_k ln n̄_k − n̄_k` (without `ln n_k!`) with the
/// flux fitted to the data.
pub fn poisson_log_likelihood(
    counts: &[f64],
    set: &TomographyBasisSet,
    rho: &TwoQubitState,
) -> f64 {
    let total: f64 = counts.iter().sum();
    let p: Vec<f64> = set
        .settings
        .iter()
        .map(|s| s.probability(rho.matrix()))
        .collect();
    let scale = total / p.iter().sum::<f64>();
    counts
        .iter()
        .zip(&p)
        .map(|(&n, &pk)| {
            let mean = scale * pk;
            if n > 0.0 {
                n * mean.ln() - mean
            } else {
                -mean
            }
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// eigenvalue floor for the projected linear-inversion start
    pub param_floor: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            max_iter: 5000,
            grad_tol: 1e-8,
            param_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleResult {
    pub state: TwoQubitState,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    /// max-norm of the per-count gradient at unit-norm parameters
    pub gradient_norm: f64,
    /// per-count objective after each accepted step, starting point first
    pub history: Vec<f64>,
}

fn scaled_grad_norm(t: &Params, g: &Params) -> f64 {
    g.amax() * t.norm()
}

/// Maximum-likelihood state for the observed counts.
///
/// BFGS ascent with Armijo backtracking, started from the linear-inversion
/// estimate projected onto the physical states. Returns the best iterate
/// with `converged = false` if the gradient test is not met in `max_iter`
/// iterations.
pub fn mle_reconstruct(
    counts: &[f64],
    set: &TomographyBasisSet,
    opts: &MleOptions,
) -> Result<MleResult> {
    check_counts(counts, set)?;
    let start = match linear_inversion(counts, set) {
        Ok(m) => project_to_physical(&m, opts.param_floor),
        Err(Error::Singular(_)) => TwoQubitState::maximally_mixed(),
        Err(e) => return Err(e),
    };
    let mut t = state_to_params(&start)?;
    t /= t.norm();
    let (mut f, mut g) = mle_objective(counts, set, &t)
        .ok_or_else(|| Error::Singular("starting point has zero likelihood".into()))?;

    let mut h = Hessian::identity();
    let mut fresh = true;
    let mut history = vec![f];
    let mut iterations = 0;
    let mut converged = scaled_grad_norm(&t, &g) <= opts.grad_tol;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        // ascent direction
        let mut d = h * g;
        if d.dot(&g) <= 0.0 {
            h = Hessian::identity();
            fresh = true;
            d = g;
        }
        let slope = d.dot(&g);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = t + d * step;
            if let Some((ft, gt)) = mle_objective(counts, set, &trial) {
                if ft >= f + 1e-4 * step * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((tn, fnew, gn)) = accepted else {
            if !fresh {
                h = Hessian::identity();
                fresh = true;
                continue;
            }
            break;
        };
        // BFGS on the minimization of −f
        let s = tn - t;
        let y = g - gn;
        let sy = s.dot(&y);
        if sy > 1e-16 * s.norm() * y.norm() && sy > 0.0 {
            let rho = 1.0 / sy;
            let a = Hessian::identity() - s * y.transpose() * rho;
            h = a * h * a.transpose() + s * s.transpose() * rho;
            fresh = false;
        }
        // keep |t| = 1; f is scale invariant and the gradient scales as 1/|t|
        let scale = tn.norm();
        t = tn / scale;
        g = gn * scale;
        h /= scale * scale;
        f = fnew;
        history.push(f);
        converged = scaled_grad_norm(&t, &g) <= opts.grad_tol;
    }
    let state = params_to_state(&t)?;
    Ok(MleResult {
        log_likelihood: poisson_log_likelihood(counts, set, &state),
        state,
        converged,
        iterations,
        gradient_norm: scaled_grad_norm(&t, &g),
        history,
    })
}

/// Quality metrics of a reconstruction relative to a reference state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionReport {
    pub fidelity: f64,
    pub concurrence: f64,
    pub purity: f64,
    pub cosine_similarity: f64,
}

pub fn reconstruction_report(
    rho_hat: &TwoQubitState,
    reference: &TwoQubitState,
) -> ReconstructionReport {
    ReconstructionReport {
        fidelity: fidelity(rho_hat, reference),
        concurrence: concurrence(rho_hat),
        purity: purity(rho_hat),
        cosine_similarity: cosine_similarity(rho_hat, reference),
    }
}

/// Poisson counts with mean `pairs_per_setting · ⟨ψ_k|ρ|ψ_k⟩`; setting `k`
/// draws from stream `k` of `seed`.
pub fn simulate_tomography_counts(
    rho: &TwoQubitState,
    set: &TomographyBasisSet,
    pairs_per_setting: f64,
    seed: u64,
) -> Vec<f64> {
    predicted_counts(rho, set, pairs_per_setting)
        .iter()
        .enumerate()
        .map(|(k, &mean)| {
            let mut rng = stream_rng(seed, k as u64);
            sample_poisson(mean, &mut rng) as f64
        })
        .collect()
}

/// One parametric-bootstrap replicate: Poisson counts drawn from `rho_hat`
/// at the observed total, reconstructed again and scored against
/// `reference`. Replicate `index` uses its own stream of `seed`.
pub fn bootstrap_replicate(
    rho_hat: &TwoQubitState,
    observed_total: f64,
    set: &TomographyBasisSet,
    reference: &TwoQubitState,
    opts: &MleOptions,
    seed: u64,
    index: u64,
) -> Result<ReconstructionReport> {
    let p_sum: f64 = set
        .settings
        .iter()
        .map(|s| s.probability(rho_hat.matrix()))
        .sum();
    let flux = observed_total / p_sum;
    let mut rng = stream_rng(seed, index);
    let counts: Vec<f64> = predicted_counts(rho_hat, set, flux)
        .iter()
        .map(|&m| sample_poisson(m, &mut rng) as f64)
        .collect();
    let fit = mle_reconstruct(&counts, set, opts)?;
    Ok(reconstruction_report(&fit.state, reference))
}

/// Sample standard deviation of each metric across bootstrap replicates.
pub fn bootstrap_sigma(reports: &[ReconstructionReport]) -> ReconstructionReport {
    let sd = |f: fn(&ReconstructionReport) -> f64| {
        let n = reports.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        let mean = reports.iter().map(f).sum::<f64>() / n;
        (reports.iter().map(|r| (f(r) - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    ReconstructionReport {
        fidelity: sd(|r| r.fidelity),
        concurrence: sd(|r| r.concurrence),
        purity: sd(|r| r.purity),
        cosine_similarity: sd(|r| r.cosine_similarity),
    }
}
