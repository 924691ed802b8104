//! Analytic invariants checked without sampling.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

// inherent f64 math shadows this whenever std is linked into the graph
#[allow(unused_imports)]
use num_traits::Float;

use crate::channels::{rotate_pair, Branch};
use crate::measure::{
    chsh_s, extract_thetas, separable_expectations, ChshAngles, ExtractOptions, JointObservables,
};
use crate::metrology::qfi;
use crate::states::{bell_state, concurrence, purity, trace_distance, BellKind, TwoQubitState};
use crate::tomography::{mle_reconstruct, predicted_counts, tomography_settings, MleOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, worst: f64, tol: f64) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: worst <= tol,
        detail: format!("max deviation {worst:.3e} (tolerance {tol:.0e})"),
    }
}

fn grid(lo_deg: f64, hi_deg: f64, n: usize) -> impl Iterator<Item = f64> + Clone {
    (0..n).map(move |i| (lo_deg + (hi_deg - lo_deg) * i as f64 / (n - 1) as f64).to_radians())
}

/// Evolved Bell observables against their closed forms on a 19×19 grid.
pub fn bell_closed_forms() -> CheckOutcome {
    let mut worst: f64 = 0.0;
    for ta in grid(-45.0, 45.0, 19) {
        for tb in grid(-45.0, 45.0, 19) {
            for (kind, branch) in [
                (BellKind::PsiPlus, Branch::Plus),
                (BellKind::PsiMinus, Branch::Minus),
            ] {
                let got = JointObservables::exact(&rotate_pair(&bell_state(kind), ta, tb));
                let want = JointObservables::bell_closed_form(branch, ta, tb);
                worst = worst
                    .max((got.m_zz - want.m_zz).abs())
                    .max((got.m_xz - want.m_xz).abs())
                    .max((got.m_zx - want.m_zx).abs());
            }
        }
    }
    check("bell closed forms", worst, 1e-12)
}

/// `|ψ−⟩` is unchanged by equal rotations of both arms.
pub fn singlet_cancellation() -> CheckOutcome {
    let psi = bell_state(BellKind::PsiMinus);
    let worst = grid(-90.0, 90.0, 37)
        .map(|t| trace_distance(&rotate_pair(&psi, t, t), &psi))
        .fold(0.0, f64::max);
    check("singlet invariance under equal rotations", worst, 1e-12)
}

/// Extraction inverts the closed forms on `(−44°, 44°)²`.
pub fn extraction_round_trip() -> CheckOutcome {
    let mut worst: f64 = 0.0;
    for ta in grid(-44.0, 44.0, 23) {
        for tb in grid(-44.0, 44.0, 23) {
            let plus = JointObservables::bell_closed_form(Branch::Plus, ta, tb);
            let minus = JointObservables::bell_closed_form(Branch::Minus, ta, tb);
            match extract_thetas(&plus, &minus, &ExtractOptions::default()) {
                Ok(e) => {
                    worst = worst
                        .max((e.theta_a - ta).abs())
                        .max((e.theta_b - tb).abs())
                }
                Err(_) => worst = f64::INFINITY,
            }
        }
    }
    check("angle extraction round trip", worst, 1e-9)
}

/// Product-state contrast of `M_zz` versus `θ_B` is `|cos 2θ_A|`.
pub fn separable_contrast() -> CheckOutcome {
    let mut worst: f64 = 0.0;
    for ta in grid(-45.0, 45.0, 19) {
        let values: Vec<f64> = grid(-90.0, 90.0, 181)
            .map(|tb| separable_expectations(ta, tb).m_zz)
            .collect();
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        worst = worst.max((0.5 * (max - min) - (2.0 * ta).cos().abs()).abs());
    }
    check("separable contrast", worst, 1e-12)
}

pub fn chsh_maximum() -> CheckOutcome {
    let s = chsh_s(&bell_state(BellKind::PsiPlus), &ChshAngles::standard());
    check(
        "CHSH value of a Bell state",
        (s - 2.0 * core::f64::consts::SQRT_2).abs(),
        1e-9,
    )
}

pub fn chsh_werner_scaling() -> CheckOutcome {
    let worst = [0.0, 0.3, 0.71, 0.97867, 1.0]
        .iter()
        .map(|&p| {
            let w = TwoQubitState::werner(BellKind::PsiPlus, p).expect("valid weight");
            (chsh_s(&w, &ChshAngles::standard()) - 2.0 * core::f64::consts::SQRT_2 * p).abs()
        })
        .fold(0.0, f64::max);
    check("CHSH scaling of Werner states", worst, 1e-9)
}

pub fn bell_entanglement() -> CheckOutcome {
    let worst = [
        BellKind::PhiPlus,
        BellKind::PhiMinus,
        BellKind::PsiPlus,
        BellKind::PsiMinus,
    ]
    .iter()
    .map(|&k| {
        let b = bell_state(k);
        (concurrence(&b) - 1.0).abs().max((purity(&b) - 1.0).abs())
    })
    .fold(0.0, f64::max);
    check("Bell-state concurrence and purity", worst, 1e-12)
}

pub fn fisher_information() -> CheckOutcome {
    let worst = (1..=8u32)
        .map(|n| match qfi(n) {
            Ok(f) => (f - 4.0 * (n * n) as f64).abs(),
            Err(_) => f64::INFINITY,
        })
        .fold(0.0, f64::max);
    check("quantum Fisher information 4N²", worst, 1e-10)
}

pub fn tomography_completeness() -> CheckOutcome {
    let set = tomography_settings();
    let rank = set.design_rank();
    CheckOutcome {
        name: "tomography design rank",
        passed: rank == 16,
        detail: format!(
            "rank {rank}, condition number {:.4}",
            set.condition_number()
        ),
    }
}

pub fn tomography_exact_bell() -> CheckOutcome {
    let set = tomography_settings();
    let bell = bell_state(BellKind::PsiPlus);
    let counts = predicted_counts(&bell, &set, 1e6);
    let infidelity = match mle_reconstruct(&counts, &set, &MleOptions::default()) {
        Ok(fit) => 1.0 - crate::states::fidelity(&fit.state, &bell),
        Err(_) => f64::INFINITY,
    };
    check(
        "maximum-likelihood reconstruction of a Bell state",
        infidelity,
        1e-4,
    )
}

/// Every invariant in a fixed order.
pub fn run_all() -> Vec<CheckOutcome> {
    alloc::vec![
        bell_closed_forms(),
        singlet_cancellation(),
        extraction_round_trip(),
        separable_contrast(),
        chsh_maximum(),
        chsh_werner_scaling(),
        bell_entanglement(),
        fisher_information(),
        tomography_completeness(),
        tomography_exact_bell(),
    ]
}
