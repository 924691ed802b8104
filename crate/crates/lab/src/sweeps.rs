//! Molarity and rotation-angle sweeps.
//!
//! Points run in parallel; point `i` (after sorting the sweep values) uses
//! `derive_seed(seed, i)`, so results do not depend on scheduling.

use std::io::Write;

use nonlocal_core::channels::{solution_rotation, Branch};
use nonlocal_core::fit::{coefficient_of_determination, fit_line, fit_sinusoid, Point};
use nonlocal_core::measure::derive_seed;
use nonlocal_core::sweep::{branch_point, theta_point, zero_crossing, BranchPoint};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, SweepVariable};
use crate::error::{LabError, Result};
use crate::formats::{branch_name, deg, write_metadata, Metadata};

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: &'static str,
    pub exact: bool,
}

impl Provenance {
    pub fn new(cfg: &ExperimentConfig, seed: u64, exact: bool) -> Self {
        Provenance {
            config_hash: cfg.hash(),
            seed,
            version: env!("CARGO_PKG_VERSION"),
            exact,
        }
    }

    pub fn pairs(&self) -> Metadata {
        vec![
            ("config_hash".into(), self.config_hash.clone()),
            ("seed".into(), self.seed.to_string()),
            ("version".into(), self.version.into()),
            ("exact".into(), self.exact.to_string()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MolarityRow {
    pub molarity: f64,
    /// rotation of arm B at this molarity, radians
    pub theta_b: f64,
    pub point: BranchPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaRow {
    pub theta_b: f64,
    pub plus: BranchPoint,
    pub minus: BranchPoint,
    pub theta_a_est: f64,
    pub theta_b_est: f64,
    pub sigma_ab: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepRows {
    Molarity {
        branch: Branch,
        theta_a: f64,
        rows: Vec<MolarityRow>,
    },
    Theta {
        theta_a: f64,
        rows: Vec<ThetaRow>,
    },
}

/// Sweep rows ordered by the swept value, with derived summary figures.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: SweepRows,
    pub summary: Metadata,
    pub provenance: Provenance,
}

fn sorted_values(cfg: &ExperimentConfig) -> Vec<f64> {
    let mut v = cfg.sweep.values.clone();
    v.sort_by(f64::total_cmp);
    v
}

fn want(cfg: &ExperimentConfig, var: SweepVariable) -> Result<()> {
    if cfg.sweep.variable != var {
        return Err(LabError::Config(format!(
            "sweep variable is {:?}, expected {var:?}",
            cfg.sweep.variable
        )));
    }
    cfg.validate()
}

/// Sweeps the molarity of solution B with arm A held fixed.
///
/// Summary: for the minus branch the molarity where `θ_−` crosses zero
/// (weighted line fit), for the plus branch whether `θ_+` increases
/// monotonically and stays above `θ_A`.
pub fn run_molarity_sweep(cfg: &ExperimentConfig, exact: bool) -> Result<SweepResult> {
    want(cfg, SweepVariable::MolarityB)?;
    let seed = cfg.seed(exact)?;
    let branch = cfg.branch().expect("validated");
    let theta_a = cfg.arm_a.angle()?;
    let pc = cfg.point_config(exact);
    let values = sorted_values(cfg);
    let rows = values
        .par_iter()
        .enumerate()
        .map(|(i, &m)| {
            let spec = cfg.arm_b.with_molarity(m).expect("validated");
            let theta_b = solution_rotation(&spec)?;
            let point = branch_point(branch, theta_a, theta_b, &pc, derive_seed(seed, i as u64))?;
            Ok(MolarityRow {
                molarity: m,
                theta_b,
                point,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summary: Metadata = vec![
        ("variable".into(), "molarity_b".into()),
        ("branch".into(), branch_name(branch).into()),
        ("theta_a_deg".into(), deg(theta_a)),
    ];
    match branch {
        Branch::Minus if rows.len() >= 3 => {
            let pts: Vec<Point> = rows
                .iter()
                .map(|r| (r.molarity, r.point.theta, r.point.sigma))
                .collect();
            let (c0, s0, fit) = zero_crossing(&pts)?;
            summary.push(("zero_crossing_molarity".into(), format!("{c0:.6}")));
            summary.push(("zero_crossing_sigma".into(), format!("{s0:.6}")));
            summary.push((
                "slope_deg_per_molar".into(),
                format!("{:.6}", fit.slope.to_degrees()),
            ));
        }
        Branch::Plus => {
            let increasing = rows.windows(2).all(|w| w[1].point.theta > w[0].point.theta);
            let above = rows.iter().all(|r| r.point.theta > theta_a);
            summary.push(("increasing".into(), increasing.to_string()));
            summary.push(("above_theta_a".into(), above.to_string()));
        }
        _ => {}
    }
    Ok(SweepResult {
        rows: SweepRows::Molarity {
            branch,
            theta_a,
            rows,
        },
        summary,
        provenance: Provenance::new(cfg, seed, exact),
    })
}

/// Sweeps the fixed rotation of arm B (degrees in the config) and measures
/// both branches at every point.
///
/// Summary: R² of `θ_±` and of the combined `(θ_A, θ_B)` estimates against
/// the prepared values, and the phase separation of sinusoids fitted to
/// `M_zz^±` versus `θ_B`, expressed as a shift in `θ_B` (ideally `2θ_A`).
pub fn run_theta_sweep(cfg: &ExperimentConfig, exact: bool) -> Result<SweepResult> {
    want(cfg, SweepVariable::ThetaB)?;
    let seed = cfg.seed(exact)?;
    let theta_a = cfg.arm_a.angle()?;
    let pc = cfg.point_config(exact);
    let values = sorted_values(cfg);
    let rows = values
        .par_iter()
        .enumerate()
        .map(|(i, &tb_deg)| {
            let tb = tb_deg.to_radians();
            let p = theta_point(theta_a, tb, &pc, derive_seed(seed, i as u64))?;
            Ok(ThetaRow {
                theta_b: tb,
                plus: p.plus,
                minus: p.minus,
                theta_a_est: p.theta_a,
                theta_b_est: p.theta_b,
                sigma_ab: p.sigma_ab,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let r2 = |obs: Vec<f64>, pred: Vec<f64>| {
        coefficient_of_determination(&obs, &pred).map(|r| format!("{r:.8}"))
    };
    let mut summary: Metadata = vec![
        ("variable".into(), "theta_b".into()),
        ("theta_a_deg".into(), deg(theta_a)),
        (
            "r2_theta_plus".into(),
            r2(
                rows.iter().map(|r| r.plus.theta).collect(),
                rows.iter().map(|r| theta_a + r.theta_b).collect(),
            )?,
        ),
        (
            "r2_theta_minus".into(),
            r2(
                rows.iter().map(|r| r.minus.theta).collect(),
                rows.iter().map(|r| theta_a - r.theta_b).collect(),
            )?,
        ),
        (
            "r2_theta_ab".into(),
            r2(
                rows.iter()
                    .flat_map(|r| [r.theta_a_est, r.theta_b_est])
                    .collect(),
                rows.iter().flat_map(|r| [theta_a, r.theta_b]).collect(),
            )?,
        ),
    ];
    if rows.len() >= 4 {
        let sigma = |s: f64| if s > 0.0 { s } else { 1.0 };
        let plus: Vec<Point> = rows
            .iter()
            .map(|r| {
                (
                    r.theta_b,
                    r.plus.observables.m_zz,
                    sigma(r.plus.observables.sigma_zz),
                )
            })
            .collect();
        let minus: Vec<Point> = rows
            .iter()
            .map(|r| {
                (
                    r.theta_b,
                    r.minus.observables.m_zz,
                    sigma(r.minus.observables.sigma_zz),
                )
            })
            .collect();
        let (fp, fm) = (fit_sinusoid(&plus)?, fit_sinusoid(&minus)?);
        // cos(2θ_B + φ): a phase difference Δφ is a shift of Δφ/2 in θ_B
        let d = nonlocal_core::measure::wrap_pi(fp.phase - fm.phase) / 2.0;
        let sd = 0.5 * (fp.phase_sigma.powi(2) + fm.phase_sigma.powi(2)).sqrt();
        summary.push(("phase_separation_deg".into(), deg(d)));
        summary.push(("phase_separation_sigma_deg".into(), deg(sd)));
    }
    Ok(SweepResult {
        rows: SweepRows::Theta { theta_a, rows },
        summary,
        provenance: Provenance::new(cfg, seed, exact),
    })
}

pub fn run_sweep(cfg: &ExperimentConfig, exact: bool) -> Result<SweepResult> {
    match cfg.sweep.variable {
        SweepVariable::MolarityB => run_molarity_sweep(cfg, exact),
        SweepVariable::ThetaB => run_theta_sweep(cfg, exact),
        SweepVariable::None => Err(LabError::Config("no sweep variable configured".into())),
    }
}

impl SweepResult {
    pub fn summary_value(&self, key: &str) -> Option<&str> {
        crate::formats::lookup(&self.summary, key)
    }

    /// `(x, θ, σ)` series of the swept branch or of `θ_+` for theta sweeps,
    /// angles in radians.
    pub fn series(&self) -> Vec<Point> {
        match &self.rows {
            SweepRows::Molarity { rows, .. } => rows
                .iter()
                .map(|r| (r.molarity, r.point.theta, r.point.sigma))
                .collect(),
            SweepRows::Theta { rows, .. } => rows
                .iter()
                .map(|r| (r.theta_b, r.plus.theta, r.plus.sigma))
                .collect(),
        }
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        write_metadata(w, &self.provenance.pairs())?;
        write_metadata(w, &self.summary)?;
        let obs = |o: &nonlocal_core::measure::JointObservables| {
            format!(
                "{},{},{},{},{},{}",
                o.m_zz, o.m_xz, o.m_zx, o.sigma_zz, o.sigma_xz, o.sigma_zx
            )
        };
        match &self.rows {
            SweepRows::Molarity { rows, .. } => {
                writeln!(
                    w,
                    "molarity,theta_b_deg,theta_deg,sigma_deg,theta_measured_deg,m_zz,m_xz,m_zx,sigma_zz,sigma_xz,sigma_zx"
                )?;
                for r in rows {
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        r.molarity,
                        deg(r.theta_b),
                        deg(r.point.theta),
                        deg(r.point.sigma),
                        deg(r.point.theta_measured),
                        obs(&r.point.observables)
                    )?;
                }
            }
            SweepRows::Theta { rows, .. } => {
                writeln!(
                    w,
                    "theta_b_deg,theta_plus_deg,sigma_plus_deg,theta_minus_deg,sigma_minus_deg,\
                     theta_a_est_deg,theta_b_est_deg,sigma_ab_deg,\
                     m_zz_plus,m_xz_plus,m_zx_plus,sigma_zz_plus,sigma_xz_plus,sigma_zx_plus,\
                     m_zz_minus,m_xz_minus,m_zx_minus,sigma_zz_minus,sigma_xz_minus,sigma_zx_minus"
                )?;
                for r in rows {
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{},{},{},{}",
                        deg(r.theta_b),
                        deg(r.plus.theta),
                        deg(r.plus.sigma),
                        deg(r.minus.theta),
                        deg(r.minus.sigma),
                        deg(r.theta_a_est),
                        deg(r.theta_b_est),
                        deg(r.sigma_ab),
                        obs(&r.plus.observables),
                        obs(&r.minus.observables)
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Weighted RMS residual of external `(x, y, σ)` points (angles in degrees)
/// from the line through the sweep series.
pub fn compare_supplementary(result: &SweepResult, points: &[Point]) -> Result<f64> {
    let series: Vec<Point> = result
        .series()
        .into_iter()
        .map(|(x, y, s)| {
            (
                x,
                y.to_degrees(),
                if s > 0.0 { s.to_degrees() } else { 1.0 },
            )
        })
        .collect();
    let fit = fit_line(&series)?;
    if points.is_empty() {
        return Err(LabError::Config("supplementary file has no points".into()));
    }
    let chi2: f64 = points
        .iter()
        .map(|&(x, y, s)| ((y - fit.eval(x)) / s).powi(2))
        .sum();
    Ok((chi2 / points.len() as f64).sqrt())
}
