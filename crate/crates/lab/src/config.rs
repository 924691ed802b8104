//! TOML experiment configuration.
//!
//! ```toml
//! [state]
//! kind = "psi_minus"          # phi_plus, phi_minus, psi_plus, psi_minus, separable
//!
//! [noise]
//! visibility = 1.0
//! accidental_fraction = 0.0
//!
//! [arm_a]
//! angle_deg = 20.08           # fixed rotation ...
//!
//! [arm_b]
//! molarity = 2.0              # ... or a solution
//! slope_deg_per_molar = 7.01
//! transmission = 0.75
//!
//! [offsets]
//! pbs_a_deg = -4.75
//! pbs_b_deg = 4.09
//! hwp_deg = 5.47
//!
//! [statistics]
//! pair_flux = 100000.0
//! duration = 1.0
//! seed = 7
//!
//! [sweep]
//! variable = "molarity_b"     # none, molarity_b, theta_b
//! values = [2.0, 2.5, 3.0]
//! ```
//!
//! Omitted sections take the defaults shown. Angles are degrees in the file
//! and radians everywhere else.

use std::path::{Path, PathBuf};

use nonlocal_core::channels::{
    defaults, solution_rotation, AnalyzerOffsets, Branch, NoiseSpec, SolutionSpec,
};
use nonlocal_core::measure::SimulationParams;
use nonlocal_core::states::{bell_state, separable_state, BellKind, TwoQubitState};
use nonlocal_core::sweep::PointConfig;
use nonlocal_core::tomography::PolLabel;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub state: StateConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub arm_a: ArmConfig,
    pub arm_b: ArmConfig,
    #[serde(default)]
    pub offsets: OffsetsConfig,
    #[serde(default)]
    pub statistics: StatisticsConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub outputs: OutputsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supplementary: Option<SupplementaryConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
    Separable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub kind: StateKind,
    /// single-photon labels H, V, D, A, R, L for `separable`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ket_a: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ket_b: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub visibility: f64,
    pub accidental_fraction: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            visibility: 1.0,
            accidental_fraction: 0.0,
        }
    }
}

fn default_slope() -> f64 {
    defaults::SLOPE_DEG_PER_MOLAR
}

fn default_solution_transmission() -> f64 {
    defaults::TRANSMISSION
}

fn unit() -> f64 {
    1.0
}

/// One arm: a fixed rotation or a calibrated solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArmConfig {
    Fixed {
        angle_deg: f64,
        #[serde(default = "unit")]
        transmission: f64,
    },
    Solution {
        molarity: f64,
        #[serde(default = "default_slope")]
        slope_deg_per_molar: f64,
        #[serde(default = "default_solution_transmission")]
        transmission: f64,
    },
}

impl ArmConfig {
    pub fn transmission(&self) -> f64 {
        match *self {
            ArmConfig::Fixed { transmission, .. } | ArmConfig::Solution { transmission, .. } => {
                transmission
            }
        }
    }

    /// Rotation in radians.
    pub fn angle(&self) -> Result<f64> {
        match *self {
            ArmConfig::Fixed { angle_deg, .. } => Ok(angle_deg.to_radians()),
            ArmConfig::Solution { molarity, .. } => {
                Ok(solution_rotation(&self.solution(molarity))?)
            }
        }
    }

    /// The arm with its molarity replaced, or `None` for a fixed rotation.
    pub fn with_molarity(&self, m: f64) -> Option<SolutionSpec> {
        matches!(self, ArmConfig::Solution { .. }).then(|| self.solution(m))
    }

    fn solution(&self, molarity: f64) -> SolutionSpec {
        let (slope, transmission) = match *self {
            ArmConfig::Solution {
                slope_deg_per_molar,
                transmission,
                ..
            } => (slope_deg_per_molar, transmission),
            ArmConfig::Fixed { transmission, .. } => (0.0, transmission),
        };
        SolutionSpec {
            molarity,
            slope_deg: slope,
            pbs_offset_deg: 0.0,
            transmission,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let bad = |msg: String| LabError::Config(format!("{name}: {msg}"));
        match *self {
            ArmConfig::Fixed {
                angle_deg,
                transmission,
            } => {
                if !angle_deg.is_finite() {
                    return Err(bad("angle must be finite".into()));
                }
                if !(0.0..=1.0).contains(&transmission) {
                    return Err(bad(format!("transmission {transmission} outside [0, 1]")));
                }
            }
            ArmConfig::Solution { molarity, .. } => {
                self.solution(molarity)
                    .validate()
                    .map_err(|e| bad(e.to_string()))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OffsetsConfig {
    pub pbs_a_deg: f64,
    pub pbs_b_deg: f64,
    pub hwp_deg: f64,
}

impl Default for OffsetsConfig {
    fn default() -> Self {
        OffsetsConfig {
            pbs_a_deg: defaults::PBS_OFFSET_A_DEG,
            pbs_b_deg: defaults::PBS_OFFSET_B_DEG,
            hwp_deg: defaults::HWP_OFFSET_DEG,
        }
    }
}

impl OffsetsConfig {
    pub fn radians(&self) -> AnalyzerOffsets {
        AnalyzerOffsets {
            pbs_a: self.pbs_a_deg.to_radians(),
            pbs_b: self.pbs_b_deg.to_radians(),
            hwp: self.hwp_deg.to_radians(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatisticsConfig {
    /// generated pairs per second
    pub pair_flux: f64,
    /// seconds per analyzer setting
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for StatisticsConfig {
    fn default() -> Self {
        StatisticsConfig {
            pair_flux: 1e5,
            duration: 1.0,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    #[default]
    None,
    /// molarity of solution B, mol/L
    MolarityB,
    /// fixed rotation of arm B, degrees
    ThetaB,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub variable: SweepVariable,
    #[serde(default)]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<PathBuf>,
}

/// Column mapping for an external `(x, y[, σ])` data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupplementaryConfig {
    pub path: PathBuf,
    pub x_column: String,
    pub y_column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_column: Option<String>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(LabError::io(path))?;
        Self::from_toml(&text).map_err(|e| match e {
            LabError::Config(msg) => LabError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        match self.state.kind {
            StateKind::Separable => {
                for (name, k) in [("ket_a", &self.state.ket_a), ("ket_b", &self.state.ket_b)] {
                    let k = k.as_deref().ok_or_else(|| {
                        LabError::Config(format!("separable state needs state.{name}"))
                    })?;
                    PolLabel::parse(k).map_err(|e| LabError::Config(e.to_string()))?;
                }
            }
            _ => {
                if self.state.ket_a.is_some() || self.state.ket_b.is_some() {
                    return Err(LabError::Config(
                        "kets are only used with kind = \"separable\"".into(),
                    ));
                }
            }
        }
        self.noise_spec()
            .validate()
            .map_err(|e| LabError::Config(e.to_string()))?;
        self.arm_a.validate("arm_a")?;
        self.arm_b.validate("arm_b")?;
        let o = &self.offsets;
        if ![o.pbs_a_deg, o.pbs_b_deg, o.hwp_deg]
            .iter()
            .all(|x| x.is_finite())
        {
            return Err(LabError::Config("offsets must be finite".into()));
        }
        self.simulation_params(0)
            .validate()
            .map_err(|e| LabError::Config(e.to_string()))?;

        let sweep = &self.sweep;
        match sweep.variable {
            SweepVariable::None => {
                if !sweep.values.is_empty() {
                    return Err(LabError::Config(
                        "sweep values given without a sweep variable".into(),
                    ));
                }
            }
            var => {
                if sweep.values.is_empty() || sweep.values.iter().any(|v| !v.is_finite()) {
                    return Err(LabError::Config("sweep needs finite values".into()));
                }
                if !matches!(self.state.kind, StateKind::PsiPlus | StateKind::PsiMinus) {
                    return Err(LabError::Config(
                        "sweeps need a psi_plus or psi_minus state".into(),
                    ));
                }
                if var == SweepVariable::MolarityB {
                    if !matches!(self.arm_b, ArmConfig::Solution { .. }) {
                        return Err(LabError::Config(
                            "molarity sweep needs a solution in arm_b".into(),
                        ));
                    }
                    if sweep.values.iter().any(|&v| v < 0.0) {
                        return Err(LabError::Config("molarities must be non-negative".into()));
                    }
                }
                if var == SweepVariable::ThetaB && !matches!(self.arm_a, ArmConfig::Fixed { .. }) {
                    return Err(LabError::Config(
                        "theta sweep needs a fixed angle in arm_a".into(),
                    ));
                }
            }
        }
        for p in [
            &self.outputs.counts,
            &self.outputs.sweep,
            &self.outputs.scan,
        ]
        .into_iter()
        .flatten()
        {
            check_writable(p)?;
        }
        Ok(())
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec {
            visibility: self.noise.visibility,
            accidental_fraction: self.noise.accidental_fraction,
        }
    }

    pub fn simulation_params(&self, seed: u64) -> SimulationParams {
        SimulationParams {
            pair_flux: self.statistics.pair_flux,
            duration: self.statistics.duration,
            transmission_a: self.arm_a.transmission(),
            transmission_b: self.arm_b.transmission(),
            accidental_fraction: self.noise.accidental_fraction,
            seed,
        }
    }

    pub fn point_config(&self, exact: bool) -> PointConfig {
        PointConfig {
            offsets: self.offsets.radians(),
            noise: self.noise_spec(),
            params: self.simulation_params(0),
            exact,
        }
    }

    /// Seed for a run. Exact runs fall back to 0; sampled runs need one.
    pub fn seed(&self, exact: bool) -> Result<u64> {
        match (self.statistics.seed, exact) {
            (Some(s), _) => Ok(s),
            (None, true) => Ok(0),
            (None, false) => Err(LabError::Config(
                "statistics.seed is required for sampled runs".into(),
            )),
        }
    }

    /// The Bell branch measured by a `psi_plus` or `psi_minus` state.
    pub fn branch(&self) -> Option<Branch> {
        match self.state.kind {
            StateKind::PsiPlus => Some(Branch::Plus),
            StateKind::PsiMinus => Some(Branch::Minus),
            _ => None,
        }
    }

    /// The prepared state, before noise and rotations.
    pub fn prepared_state(&self) -> Result<TwoQubitState> {
        let bell = |k| Ok(bell_state(k));
        match self.state.kind {
            StateKind::PhiPlus => bell(BellKind::PhiPlus),
            StateKind::PhiMinus => bell(BellKind::PhiMinus),
            StateKind::PsiPlus => bell(BellKind::PsiPlus),
            StateKind::PsiMinus => bell(BellKind::PsiMinus),
            StateKind::Separable => {
                let a = PolLabel::parse(self.state.ket_a.as_deref().unwrap_or_default())?;
                let b = PolLabel::parse(self.state.ket_b.as_deref().unwrap_or_default())?;
                Ok(separable_state(&a.ket(), &b.ket()))
            }
        }
    }

    pub fn state_name(&self) -> &'static str {
        match self.state.kind {
            StateKind::PhiPlus => "phi_plus",
            StateKind::PhiMinus => "phi_minus",
            StateKind::PsiPlus => "psi_plus",
            StateKind::PsiMinus => "psi_minus",
            StateKind::Separable => "separable",
        }
    }
}

fn check_writable(path: &Path) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let meta = std::fs::metadata(parent).map_err(|_| {
        LabError::Config(format!(
            "output directory {} does not exist",
            parent.display()
        ))
    })?;
    if !meta.is_dir() || meta.permissions().readonly() {
        return Err(LabError::Config(format!(
            "cannot write into {}",
            parent.display()
        )));
    }
    if path.is_dir() {
        return Err(LabError::Config(format!(
            "output path {} is a directory",
            path.display()
        )));
    }
    Ok(())
}
