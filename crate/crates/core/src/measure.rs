//! Projective polarization analysis on both arms.
//!
//! Outcome order for every joint setting is `(++, +−, −+, −−)`, where `+` is
//! the analyzer's first port. For the Pauli bases `+` is the `+1` eigenstate
//! (`H`, `D`, `L`), so correlations estimated from counts are Pauli
//! expectation values.
//!
//! # Angle extraction
//!
//! Writing `z± = −M_zz^± − i M_xz^±`, the closed forms
//! `M_zz^± = −cos 2θ±`, `M_xz^± = −sin 2θ±` give `z± = exp(2iθ±)`. With
//! `θ± = θ_A ± θ_B` the products `z₊ z₋ = exp(4iθ_A)` and `z₊ z̄₋ = exp(4iθ_B)`,
//! so `θ_{A,B} = −(i/4) ln(z₊ · z₋^{±})` on the principal branch, which is
//! single valued for `θ_{A,B} ∈ (−π/4, π/4]`. The conjugate for arm B is the
//! `ε_B = −1` sign on `M_xz^-`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

// inherent f64 math shadows this whenever std is linked into the graph
use nalgebra::Complex;
#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use crate::channels::{half_wave_plate, quarter_wave_plate, rotate_pair, Branch};
use crate::error::{Error, Result};
use crate::states::{kron, separable_state, Ket2, Mat2, PauliOp, TwoQubitState};

/// Measurement bases whose `±` outcomes are Pauli eigenstates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PauliBasis {
    /// H (+) / V (−)
    Z,
    /// D (+) / A (−)
    X,
    /// L (+) / R (−)
    Y,
}

impl PauliBasis {
    pub fn op(self) -> PauliOp {
        match self {
            PauliBasis::Z => PauliOp::Z,
            PauliBasis::X => PauliOp::X,
            PauliBasis::Y => PauliOp::Y,
        }
    }
}

/// One local analyzer: a wave-plate pair followed by a polarizing beam
/// splitter, or an equivalent abstract basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyzerSetting {
    Basis(PauliBasis),
    /// Linear analyzer at `angle` radians; the second port sits at `angle + 90°`.
    Linear(f64),
    /// HWP then QWP, then a PBS transmitting H into the `+` port. Radians.
    Waveplates {
        hwp: f64,
        qwp: f64,
    },
}

impl AnalyzerSetting {
    pub const Z: AnalyzerSetting = AnalyzerSetting::Basis(PauliBasis::Z);
    pub const X: AnalyzerSetting = AnalyzerSetting::Basis(PauliBasis::X);
    pub const Y: AnalyzerSetting = AnalyzerSetting::Basis(PauliBasis::Y);

    /// State selected by the `+` port.
    pub fn plus_ket(&self) -> Ket2 {
        match *self {
            AnalyzerSetting::Basis(PauliBasis::Z) => Ket2::h(),
            AnalyzerSetting::Basis(PauliBasis::X) => Ket2::d(),
            AnalyzerSetting::Basis(PauliBasis::Y) => Ket2::l(),
            AnalyzerSetting::Linear(angle) => Ket2::linear(angle),
            AnalyzerSetting::Waveplates { hwp, qwp } => {
                let w = quarter_wave_plate(qwp) * half_wave_plate(hwp);
                Ket2::h()
                    .transformed(&w.adjoint())
                    .expect("wave plates are unitary")
            }
        }
    }

    /// `(Π₊, Π₋)` with `Π₋ = I − Π₊`.
    pub fn projectors(&self) -> (Mat2, Mat2) {
        let p = self.plus_ket().projector();
        (p, Mat2::identity() - p)
    }

    /// Stable text identifier; angles in degrees.
    pub fn id(&self) -> String {
        match *self {
            AnalyzerSetting::Basis(PauliBasis::Z) => "Z".into(),
            AnalyzerSetting::Basis(PauliBasis::X) => "X".into(),
            AnalyzerSetting::Basis(PauliBasis::Y) => "Y".into(),
            AnalyzerSetting::Linear(a) => format!("lin:{}", fmt_deg(a)),
            AnalyzerSetting::Waveplates { hwp, qwp } => {
                format!("wp:{}:{}", fmt_deg(hwp), fmt_deg(qwp))
            }
        }
    }

    pub fn parse_id(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidArgument(format!("unrecognized analyzer setting `{s}`"));
        let deg = |t: &str| -> Result<f64> {
            t.trim()
                .parse::<f64>()
                .map(|d| d.to_radians())
                .map_err(|_| bad())
        };
        match s {
            "Z" => return Ok(Self::Z),
            "X" => return Ok(Self::X),
            "Y" => return Ok(Self::Y),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("lin:") {
            return Ok(AnalyzerSetting::Linear(deg(rest)?));
        }
        if let Some(rest) = s.strip_prefix("wp:") {
            let mut it = rest.split(':');
            let (h, q) = (it.next().ok_or_else(bad)?, it.next().ok_or_else(bad)?);
            if it.next().is_some() {
                return Err(bad());
            }
            return Ok(AnalyzerSetting::Waveplates {
                hwp: deg(h)?,
                qwp: deg(q)?,
            });
        }
        Err(bad())
    }

    fn same_as(&self, other: &AnalyzerSetting) -> bool {
        const TOL: f64 = 1e-9;
        match (self, other) {
            (AnalyzerSetting::Basis(a), AnalyzerSetting::Basis(b)) => a == b,
            (AnalyzerSetting::Linear(a), AnalyzerSetting::Linear(b)) => (a - b).abs() <= TOL,
            (
                AnalyzerSetting::Waveplates { hwp: h1, qwp: q1 },
                AnalyzerSetting::Waveplates { hwp: h2, qwp: q2 },
            ) => (h1 - h2).abs() <= TOL && (q1 - q2).abs() <= TOL,
            _ => false,
        }
    }
}

fn fmt_deg(rad: f64) -> String {
    let d = rad.to_degrees();
    // round-trip through six decimals so ids stay short and stable
    let r = (d * 1e6).round() / 1e6;
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r}")
}

/// Analyzer pair `(arm A, arm B)`.
pub type JointSetting = (AnalyzerSetting, AnalyzerSetting);

/// Born-rule probabilities `(p₊₊, p₊₋, p₋₊, p₋₋)`.
pub fn outcome_probabilities(
    rho: &TwoQubitState,
    a: &AnalyzerSetting,
    b: &AnalyzerSetting,
) -> [f64; 4] {
    let (ap, am) = a.projectors();
    let (bp, bm) = b.projectors();
    let mut p = [
        rho.expectation(&kron(&ap, &bp)),
        rho.expectation(&kron(&ap, &bm)),
        rho.expectation(&kron(&am, &bp)),
        rho.expectation(&kron(&am, &bm)),
    ];
    for x in p.iter_mut() {
        *x = x.clamp(0.0, 1.0);
    }
    let total: f64 = p.iter().sum();
    p.map(|x| x / total)
}

/// `Tr[ρ (σ_a ⊗ σ_b)]`.
pub fn joint_expectation(rho: &TwoQubitState, pauli_a: PauliOp, pauli_b: PauliOp) -> f64 {
    rho.expectation(&kron(&pauli_a.matrix(), &pauli_b.matrix()))
}

/// Joint observables `M_zz`, `M_xz`, `M_zx` with one-sigma uncertainties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointObservables {
    pub m_zz: f64,
    pub m_xz: f64,
    pub m_zx: f64,
    pub sigma_zz: f64,
    pub sigma_xz: f64,
    pub sigma_zx: f64,
}

impl JointObservables {
    pub fn new(m_zz: f64, m_xz: f64, m_zx: f64) -> Self {
        JointObservables {
            m_zz,
            m_xz,
            m_zx,
            sigma_zz: 0.0,
            sigma_xz: 0.0,
            sigma_zx: 0.0,
        }
    }

    /// Exact expectation values of `ρ`.
    pub fn exact(rho: &TwoQubitState) -> Self {
        JointObservables::new(
            joint_expectation(rho, PauliOp::Z, PauliOp::Z),
            joint_expectation(rho, PauliOp::X, PauliOp::Z),
            joint_expectation(rho, PauliOp::Z, PauliOp::X),
        )
    }

    /// Closed forms for `|ψ±⟩` after local rotations:
    /// `M_zz = −cos 2θ±`, `M_xz = −sin 2θ±`, `M_zx = ±M_xz`.
    pub fn bell_closed_form(branch: Branch, theta_a: f64, theta_b: f64) -> Self {
        let (th, sign) = match branch {
            Branch::Plus => (theta_a + theta_b, 1.0),
            Branch::Minus => (theta_a - theta_b, -1.0),
        };
        let m_xz = -(2.0 * th).sin();
        JointObservables::new(-(2.0 * th).cos(), m_xz, sign * m_xz)
    }

    /// Nonlocal rotation `θ = ½ arg(−M_zz − i M_xz)` on `(−π/2, π/2]`.
    pub fn nonlocal_angle(&self, modulus_floor: f64) -> Result<AngleEstimate> {
        let (x, y) = (-self.m_zz, -self.m_xz);
        let r2 = x * x + y * y;
        if !(r2.sqrt() >= modulus_floor) {
            return Err(Error::IllConditioned(format!(
                "|M_zz − i M_xz| = {:.3e} below floor {modulus_floor:.1e}",
                r2.sqrt()
            )));
        }
        let theta = 0.5 * y.atan2(x);
        let var =
            0.25 * (x * x * self.sigma_xz.powi(2) + y * y * self.sigma_zz.powi(2)) / (r2 * r2);
        Ok(AngleEstimate {
            theta,
            sigma: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleEstimate {
    pub theta: f64,
    pub sigma: f64,
}

/// Observables of `|H⟩_A|V⟩_B` after local rotations, evaluated on the
/// evolved product state.
pub fn separable_expectations(theta_a: f64, theta_b: f64) -> JointObservables {
    let rho = rotate_pair(&separable_state(&Ket2::h(), &Ket2::v()), theta_a, theta_b);
    JointObservables::exact(&rho)
}

/// Acquisition parameters for a simulated coincidence table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationParams {
    /// generated pairs per second
    pub pair_flux: f64,
    /// seconds per setting
    pub duration: f64,
    pub transmission_a: f64,
    pub transmission_b: f64,
    pub accidental_fraction: f64,
    pub seed: u64,
}

impl SimulationParams {
    /// Parameters whose expected detected-pair count per setting is `n`.
    pub fn with_detected_pairs(n: f64, seed: u64) -> Self {
        SimulationParams {
            pair_flux: n,
            duration: 1.0,
            transmission_a: 1.0,
            transmission_b: 1.0,
            accidental_fraction: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pair_flux.is_finite() && self.pair_flux > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "pair flux must be positive, got {}",
                self.pair_flux
            )));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        for (name, t) in [("A", self.transmission_a), ("B", self.transmission_b)] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidArgument(format!(
                    "transmission of arm {name} outside [0, 1]: {t}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.accidental_fraction) {
            return Err(Error::InvalidArgument(format!(
                "accidental fraction outside [0, 1): {}",
                self.accidental_fraction
            )));
        }
        Ok(())
    }

    /// Expected true coincidences per setting.
    pub fn mean_pairs(&self) -> f64 {
        self.pair_flux * self.duration * self.transmission_a * self.transmission_b
    }

    /// Expected accidental coincidences per setting.
    pub fn mean_accidentals(&self) -> f64 {
        let f = self.accidental_fraction;
        self.mean_pairs() * f / (1.0 - f)
    }
}

/// Acquisition metadata carried with a table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TableMetadata {
    pub pair_flux: Option<f64>,
    pub duration: Option<f64>,
    pub seed: Option<u64>,
    pub transmission_a: Option<f64>,
    pub transmission_b: Option<f64>,
    pub accidental_fraction: Option<f64>,
    /// `true` for Born-rule expectations instead of sampled counts
    pub exact: bool,
    /// free-form `key=value` pairs kept in order
    pub extra: Vec<(String, String)>,
}

impl TableMetadata {
    pub fn from_params(p: &SimulationParams) -> Self {
        TableMetadata {
            pair_flux: Some(p.pair_flux),
            duration: Some(p.duration),
            seed: Some(p.seed),
            transmission_a: Some(p.transmission_a),
            transmission_b: Some(p.transmission_b),
            accidental_fraction: Some(p.accidental_fraction),
            exact: false,
            extra: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceRow {
    pub setting_a: AnalyzerSetting,
    pub setting_b: AnalyzerSetting,
    /// `(n₊₊, n₊₋, n₋₊, n₋₋)`; integral for sampled data
    pub counts: [f64; 4],
}

impl CoincidenceRow {
    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Correlation `(n₊₊ − n₊₋ − n₋₊ + n₋₋)/n` with binomial sigma `√((1 − E²)/n)`.
    pub fn correlation(&self) -> Result<(f64, f64)> {
        let n = self.total();
        if !(n > 0.0) {
            return Err(Error::ZeroCounts(format!(
                "({}, {})",
                self.setting_a.id(),
                self.setting_b.id()
            )));
        }
        let [pp, pm, mp, mm] = self.counts;
        let e = (pp - pm - mp + mm) / n;
        Ok((e, ((1.0 - e * e).max(0.0) / n).sqrt()))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoincidenceTable {
    pub rows: Vec<CoincidenceRow>,
    pub meta: TableMetadata,
}

impl CoincidenceTable {
    pub fn validate(&self) -> Result<()> {
        for r in &self.rows {
            if r.counts.iter().any(|&n| !(n.is_finite() && n >= 0.0)) {
                return Err(Error::InvalidArgument(format!(
                    "negative or non-finite counts for ({}, {})",
                    r.setting_a.id(),
                    r.setting_b.id()
                )));
            }
        }
        Ok(())
    }

    /// Counts summed over every row measured with `(a, b)`.
    pub fn counts_for(&self, a: &AnalyzerSetting, b: &AnalyzerSetting) -> Option<CoincidenceRow> {
        let mut found: Option<CoincidenceRow> = None;
        for r in self
            .rows
            .iter()
            .filter(|r| r.setting_a.same_as(a) && r.setting_b.same_as(b))
        {
            match found.as_mut() {
                None => found = Some(r.clone()),
                Some(acc) => {
                    for k in 0..4 {
                        acc.counts[k] += r.counts[k];
                    }
                }
            }
        }
        found
    }

    fn require(&self, a: &AnalyzerSetting, b: &AnalyzerSetting) -> Result<CoincidenceRow> {
        self.counts_for(a, b)
            .ok_or_else(|| Error::MissingSetting(format!("({}, {})", a.id(), b.id())))
    }
}

/// Derives an independent seed for item `index` of a seeded batch.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for stream `index` under `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub(crate) fn sample_poisson<R: rand::Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite mean");
    d.sample(rng) as u64
}

pub(crate) fn sample_multinomial<R: rand::Rng + ?Sized, const K: usize>(
    n: u64,
    probs: &[f64; K],
    rng: &mut R,
) -> [u64; K] {
    let mut out = [0u64; K];
    let mut left = n;
    let mut mass = 1.0;
    for k in 0..K - 1 {
        if left == 0 {
            break;
        }
        let p = if mass > 0.0 {
            (probs[k] / mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let x = Binomial::new(left, p).expect("p in [0, 1]").sample(rng);
        out[k] = x;
        left -= x;
        mass -= probs[k];
    }
    out[K - 1] += left;
    out
}

/// Samples one joint setting using stream `index` of `params.seed`.
pub fn simulate_row(
    rho: &TwoQubitState,
    setting: &JointSetting,
    params: &SimulationParams,
    index: u64,
) -> CoincidenceRow {
    let mut rng = stream_rng(params.seed, index);
    let probs = outcome_probabilities(rho, &setting.0, &setting.1);
    let n = sample_poisson(params.mean_pairs(), &mut rng);
    let mut counts = sample_multinomial(n, &probs, &mut rng);
    let acc = sample_poisson(params.mean_accidentals(), &mut rng);
    let extra = sample_multinomial(acc, &[0.25; 4], &mut rng);
    for k in 0..4 {
        counts[k] += extra[k];
    }
    CoincidenceRow {
        setting_a: setting.0,
        setting_b: setting.1,
        counts: counts.map(|x| x as f64),
    }
}

/// Poisson pair number per setting, multinomial split over outcomes, plus
/// uniformly distributed accidentals. Each setting draws from its own
/// ChaCha stream, so the table is a pure function of its inputs.
pub fn simulate_counts(
    rho: &TwoQubitState,
    settings: &[JointSetting],
    params: &SimulationParams,
) -> Result<CoincidenceTable> {
    if settings.is_empty() {
        return Err(Error::InvalidArgument("empty settings list".into()));
    }
    params.validate()?;
    let rows = settings
        .iter()
        .enumerate()
        .map(|(i, s)| simulate_row(rho, s, params, i as u64))
        .collect();
    Ok(CoincidenceTable {
        rows,
        meta: TableMetadata::from_params(params),
    })
}

/// Expected counts instead of samples.
pub fn expected_counts(
    rho: &TwoQubitState,
    settings: &[JointSetting],
    params: &SimulationParams,
) -> Result<CoincidenceTable> {
    if settings.is_empty() {
        return Err(Error::InvalidArgument("empty settings list".into()));
    }
    params.validate()?;
    let (n, acc) = (params.mean_pairs(), params.mean_accidentals());
    let rows = settings
        .iter()
        .map(|s| {
            let p = outcome_probabilities(rho, &s.0, &s.1);
            CoincidenceRow {
                setting_a: s.0,
                setting_b: s.1,
                counts: p.map(|x| n * x + 0.25 * acc),
            }
        })
        .collect();
    let mut meta = TableMetadata::from_params(params);
    meta.exact = true;
    Ok(CoincidenceTable { rows, meta })
}

/// The three joint settings behind [`JointObservables`].
pub fn observable_settings() -> [JointSetting; 3] {
    [
        (AnalyzerSetting::Z, AnalyzerSetting::Z),
        (AnalyzerSetting::X, AnalyzerSetting::Z),
        (AnalyzerSetting::Z, AnalyzerSetting::X),
    ]
}

/// Per-setting normalized estimates of `M_zz`, `M_xz`, `M_zx`.
pub fn estimate_observables(table: &CoincidenceTable) -> Result<JointObservables> {
    table.validate()?;
    let [zz, xz, zx] = observable_settings().map(|(a, b)| table.require(&a, &b));
    let (m_zz, sigma_zz) = zz?.correlation()?;
    let (m_xz, sigma_xz) = xz?.correlation()?;
    let (m_zx, sigma_zx) = zx?.correlation()?;
    Ok(JointObservables {
        m_zz,
        m_xz,
        m_zx,
        sigma_zz,
        sigma_xz,
        sigma_zx,
    })
}

pub const DEFAULT_MODULUS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    /// minimum modulus of each phasor `−M_zz − i M_xz`
    pub modulus_floor: f64,
    /// reject when `|Im θ|` exceeds this; `None` keeps any residue
    pub max_imag_residue: Option<f64>,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            modulus_floor: DEFAULT_MODULUS_FLOOR,
            max_imag_residue: None,
        }
    }
}

/// Local rotations recovered from joint measurements on `|ψ+⟩` and `|ψ−⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaEstimate {
    pub theta_a: f64,
    pub theta_b: f64,
    pub sigma_a: f64,
    pub sigma_b: f64,
    /// imaginary parts of `−(i/4) ln(…)`; zero for exact expectations
    pub imag_a: f64,
    pub imag_b: f64,
}

fn phasor(obs: &JointObservables, eps: f64, floor: f64) -> Result<Complex<f64>> {
    let z = Complex::new(-obs.m_zz, -eps * obs.m_xz);
    if !(z.norm() >= floor) {
        return Err(Error::IllConditioned(format!(
            "phasor modulus {:.3e} below floor {floor:.1e}",
            z.norm()
        )));
    }
    Ok(z)
}

/// `θ_{A,B} = −(i/4) ln[(−M_zz^+ − i M_xz^+)(−M_zz^- − i ε M_xz^-)]` with
/// `ε_A = 1`, `ε_B = −1`, principal logarithm.
pub fn extract_thetas(
    plus: &JointObservables,
    minus: &JointObservables,
    opts: &ExtractOptions,
) -> Result<ThetaEstimate> {
    let zp = phasor(plus, 1.0, opts.modulus_floor)?;
    let mut out = [(0.0, 0.0); 2];
    for (slot, eps) in out.iter_mut().zip([1.0, -1.0]) {
        let zm = phasor(minus, eps, opts.modulus_floor)?;
        let ln = (zp * zm).ln();
        // −(i/4)(a + ib) = b/4 − i a/4
        let theta = Complex::new(ln.im / 4.0, -ln.re / 4.0);
        if let Some(tol) = opts.max_imag_residue {
            if theta.im.abs() > tol {
                return Err(Error::IllConditioned(format!(
                    "imaginary residue {:.3e} exceeds {tol:.1e}",
                    theta.im
                )));
            }
        }
        *slot = (theta.re, theta.im);
    }
    let sp = plus.nonlocal_angle(opts.modulus_floor)?.sigma;
    let sm = minus.nonlocal_angle(opts.modulus_floor)?.sigma;
    let sigma = 0.5 * (sp * sp + sm * sm).sqrt();
    Ok(ThetaEstimate {
        theta_a: out[0].0,
        theta_b: out[1].0,
        sigma_a: sigma,
        sigma_b: sigma,
        imag_a: out[0].1,
        imag_b: out[1].1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    /// target angular resolution, radians
    pub resolution: f64,
    /// minimum spread of `|M_zz^-|` across the grid
    pub noise_floor: f64,
    /// coarse grid spacing, radians; never finer than `resolution`
    pub grid_step: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            resolution: 1e-4,
            noise_floor: 1e-3,
            grid_step: 2f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanResult {
    /// recovered `θ_A` in `(−π, π]`
    pub theta_a: f64,
    /// spread of `|M_zz^-|` across the coarse grid
    pub contrast: f64,
    pub evaluations: usize,
}

/// Locates `θ_A` by tuning `θ_B` on `|ψ−⟩`: `M_zz^- = −1` where
/// `θ_B ≡ θ_A (mod π)`.
///
/// The coarse grid maximizes `−M_zz^-`, which keeps the `|M_zz^-|` maxima with
/// negative sign and discards the ones at `θ_A ± π/2`. A golden-section search
/// on `|M_xz^-|` then refines the optimum inside one grid cell, and the
/// positive slope of `M_xz^-` there is checked. Rotations by `θ` and `θ + π`
/// differ by a global phase, so among the equivalent optima inside
/// `range` the one with the smallest `|θ_B|` is returned.
pub fn scan_theta_a<F>(mut probe: F, range: (f64, f64), opts: &ScanOptions) -> Result<ScanResult>
where
    F: FnMut(f64) -> Result<JointObservables>,
{
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::InvalidArgument(format!(
            "bad search range ({lo}, {hi})"
        )));
    }
    if !(opts.resolution > 0.0) {
        return Err(Error::InvalidArgument("resolution must be positive".into()));
    }
    let step = opts.grid_step.max(opts.resolution).min((hi - lo) / 4.0);
    let n = ((hi - lo) / step).ceil() as usize + 1;
    let mut evals = 0usize;
    let mut best: Option<(f64, f64)> = None; // (theta_b, score)
    let (mut amin, mut amax) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..n {
        let tb = (lo + k as f64 * step).min(hi);
        let obs = probe(tb)?;
        evals += 1;
        let a = obs.m_zz.abs();
        amin = amin.min(a);
        amax = amax.max(a);
        let score = -obs.m_zz;
        let better = match best {
            None => true,
            Some((bt, bs)) => {
                score > bs + 1e-12 || ((score - bs).abs() <= 1e-12 && tb.abs() < bt.abs())
            }
        };
        if better {
            best = Some((tb, score));
        }
    }
    let contrast = amax - amin;
    if !(contrast >= opts.noise_floor) {
        return Err(Error::FlatResponse {
            contrast,
            floor: opts.noise_floor,
        });
    }
    let (tb0, score0) = best.expect("grid is non-empty");
    if score0 <= 0.0 {
        return Err(Error::IllConditioned(
            "no anticorrelated optimum on the grid".into(),
        ));
    }

    // golden-section on |M_xz^-| inside the neighbouring cells
    let (mut a, mut b) = (tb0 - step, tb0 + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut f = |x: f64, evals: &mut usize| -> Result<f64> {
        *evals += 1;
        Ok(probe(x)?.m_xz.abs())
    };
    let mut c1 = b - g * (b - a);
    let mut c2 = a + g * (b - a);
    let mut f1 = f(c1, &mut evals)?;
    let mut f2 = f(c2, &mut evals)?;
    while b - a > opts.resolution {
        if f1 < f2 {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - g * (b - a);
            f1 = f(c1, &mut evals)?;
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + g * (b - a);
            f2 = f(c2, &mut evals)?;
        }
    }
    let opt = 0.5 * (a + b);

    // M_xz^- = −sin 2(θ_A − θ_B) rises through zero at the anticorrelated optimum
    let h = step.min(FRAC_PI_2 / 4.0);
    let slope = probe(opt + h)?.m_xz - probe(opt - h)?.m_xz;
    evals += 2;
    if slope <= 0.0 {
        return Err(Error::IllConditioned(
            "M_xz^- slope at the optimum has the wrong sign".into(),
        ));
    }

    // equivalent optima θ + kπ inside the range; prefer the smallest |θ_B|
    let mut theta = opt;
    for k in [-2.0, -1.0, 1.0, 2.0] {
        let cand = opt + k * PI;
        if cand >= lo - opts.resolution && cand <= hi + opts.resolution && cand.abs() < theta.abs()
        {
            theta = cand;
        }
    }
    Ok(ScanResult {
        theta_a: wrap_pi(theta),
        contrast,
        evaluations: evals,
    })
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_pi(x: f64) -> f64 {
    let mut y = x % (2.0 * PI);
    if y <= -PI {
        y += 2.0 * PI;
    } else if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// Correlation `E(x, y) = P₀₀ − P₀₁ − P₁₀ + P₁₁` for linear analyzers; index
/// `1` adds 90° to its own analyzer.
pub fn correlation(rho: &TwoQubitState, x: f64, y: f64) -> f64 {
    let p = outcome_probabilities(
        rho,
        &AnalyzerSetting::Linear(x),
        &AnalyzerSetting::Linear(y),
    );
    p[0] - p[1] - p[2] + p[3]
}

/// Analyzer angles `{a, a'}` for arm A and `{b, b'}` for arm B, radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshAngles {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl ChshAngles {
    /// `{0°, 45°}` and `{22.5°, 67.5°}`.
    pub fn standard() -> Self {
        ChshAngles {
            a: 0.0,
            a_prime: 45f64.to_radians(),
            b: 22.5f64.to_radians(),
            b_prime: 67.5f64.to_radians(),
        }
    }

    /// Joint settings in the order `(a,b), (a,b'), (a',b), (a',b')`.
    pub fn settings(&self) -> [JointSetting; 4] {
        let l = AnalyzerSetting::Linear;
        [
            (l(self.a), l(self.b)),
            (l(self.a), l(self.b_prime)),
            (l(self.a_prime), l(self.b)),
            (l(self.a_prime), l(self.b_prime)),
        ]
    }
}

/// `S = |E(a,b) − E(a,b')| + |E(a',b) + E(a',b')|`.
pub fn chsh_combination(e: [f64; 4]) -> f64 {
    (e[0] - e[1]).abs() + (e[2] + e[3]).abs()
}

pub fn chsh_s(rho: &TwoQubitState, angles: &ChshAngles) -> f64 {
    let e = [
        correlation(rho, angles.a, angles.b),
        correlation(rho, angles.a, angles.b_prime),
        correlation(rho, angles.a_prime, angles.b),
        correlation(rho, angles.a_prime, angles.b_prime),
    ];
    chsh_combination(e)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshEstimate {
    pub s: f64,
    pub sigma: f64,
    /// `(S − 2)/σ`
    pub significance: f64,
    pub angles: ChshAngles,
}

fn distinct_linear(angles: impl Iterator<Item = AnalyzerSetting>, arm: &str) -> Result<[f64; 2]> {
    let mut seen: Vec<f64> = Vec::new();
    for s in angles {
        let AnalyzerSetting::Linear(x) = s else {
            return Err(Error::InvalidArgument(format!(
                "CHSH tables need linear analyzers, arm {arm} has `{}`",
                s.id()
            )));
        };
        if !seen.iter().any(|y| (x - y).abs() <= 1e-9) {
            seen.push(x);
        }
    }
    match seen.as_slice() {
        [a, b] => Ok([*a, *b]),
        _ => Err(Error::InvalidArgument(format!(
            "arm {arm} must use exactly two analyzer angles, found {}",
            seen.len()
        ))),
    }
}

/// Plug-in estimate of `S` from a four-setting table. The first angle seen on
/// each arm is taken as unprimed.
pub fn chsh_from_counts(table: &CoincidenceTable) -> Result<ChshEstimate> {
    table.validate()?;
    let [a, a_prime] = distinct_linear(table.rows.iter().map(|r| r.setting_a), "A")?;
    let [b, b_prime] = distinct_linear(table.rows.iter().map(|r| r.setting_b), "B")?;
    let angles = ChshAngles {
        a,
        a_prime,
        b,
        b_prime,
    };
    let mut e = [0.0; 4];
    let mut var = 0.0;
    for (slot, (sa, sb)) in e.iter_mut().zip(angles.settings()) {
        let (val, sig) = table.require(&sa, &sb)?.correlation()?;
        *slot = val;
        var += sig * sig;
    }
    let s = chsh_combination(e);
    let sigma = var.sqrt();
    Ok(ChshEstimate {
        s,
        sigma,
        significance: if sigma > 0.0 {
            (s - 2.0) / sigma
        } else {
            f64::INFINITY
        },
        angles,
    })
}

impl core::fmt::Display for AnalyzerSetting {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&self.id())
    }
}

impl core::str::FromStr for AnalyzerSetting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        AnalyzerSetting::parse_id(s)
    }
}
