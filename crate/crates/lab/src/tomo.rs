use std::io::Write;

use nonlocal_core::states::{hermitian_eigen, TwoQubitState};
use nonlocal_core::tomography::{
    bootstrap_replicate, bootstrap_sigma, linear_inversion, mle_reconstruct, reconstruction_report,
    MleOptions, MleResult, ReconstructionReport, TomographyBasisSet,
};
use rayon::prelude::*;

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TomographyRun {
    pub fit: MleResult,
    pub report: ReconstructionReport,
    /// `None` when no bootstrap was requested
    pub sigma: Option<ReconstructionReport>,
    pub resamples: usize,
    /// smallest eigenvalue of the linear-inversion estimate
    pub linear_min_eigenvalue: f64,
}

/// MLE reconstruction scored against `reference`, with `resamples`
/// parametric-bootstrap replicates run in parallel.
pub fn run_tomography(
    counts: &[f64],
    set: &TomographyBasisSet,
    reference: &TwoQubitState,
    resamples: usize,
    seed: u64,
    opts: &MleOptions,
) -> Result<TomographyRun> {
    let fit = mle_reconstruct(counts, set, opts)?;
    let report = reconstruction_report(&fit.state, reference);
    let lin = linear_inversion(counts, set)?;
    let linear_min_eigenvalue = hermitian_eigen(&lin).0[0];
    let sigma = if resamples > 0 {
        let total: f64 = counts.iter().sum();
        let reps = (0..resamples as u64)
            .into_par_iter()
            .map(|i| bootstrap_replicate(&fit.state, total, set, reference, opts, seed, i))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Some(bootstrap_sigma(&reps))
    } else {
        None
    };
    Ok(TomographyRun {
        fit,
        report,
        sigma,
        resamples,
        linear_min_eigenvalue,
    })
}

impl TomographyRun {
    pub fn ensure_converged(&self) -> Result<()> {
        if self.fit.converged {
            Ok(())
        } else {
            Err(LabError::NotConverged(format!(
                "likelihood gradient {:.3e} after {} iterations",
                self.fit.gradient_norm, self.fit.iterations
            )))
        }
    }

    /// `key = value` report.
    pub fn write_report(&self, w: &mut impl Write) -> Result<()> {
        let s = self.sigma;
        let line = |w: &mut dyn Write, k: &str, v: f64, sd: Option<f64>| -> std::io::Result<()> {
            writeln!(w, "{k} = {v}")?;
            if let Some(sd) = sd {
                writeln!(w, "{k}_sigma = {sd}")?;
            }
            Ok(())
        };
        line(w, "fidelity", self.report.fidelity, s.map(|s| s.fidelity))?;
        line(
            w,
            "concurrence",
            self.report.concurrence,
            s.map(|s| s.concurrence),
        )?;
        line(w, "purity", self.report.purity, s.map(|s| s.purity))?;
        line(
            w,
            "cosine_similarity",
            self.report.cosine_similarity,
            s.map(|s| s.cosine_similarity),
        )?;
        writeln!(w, "bootstrap_resamples = {}", self.resamples)?;
        writeln!(w, "log_likelihood = {}", self.fit.log_likelihood)?;
        writeln!(w, "converged = {}", self.fit.converged)?;
        writeln!(w, "iterations = {}", self.fit.iterations)?;
        writeln!(w, "gradient_norm = {:e}", self.fit.gradient_norm)?;
        writeln!(w, "linear_min_eigenvalue = {}", self.linear_min_eigenvalue)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nonlocal_core::states::{bell_state, BellKind};
    use nonlocal_core::tomography::{simulate_tomography_counts, tomography_settings};

    #[test]
    fn bootstrap_is_reproducible() {
        let set = tomography_settings();
        let w = TwoQubitState::werner(BellKind::PsiPlus, 0.97867).unwrap();
        let counts = simulate_tomography_counts(&w, &set, 1e4, 2);
        let bell = bell_state(BellKind::PsiPlus);
        let a = run_tomography(&counts, &set, &bell, 20, 9, &MleOptions::default()).unwrap();
        let b = run_tomography(&counts, &set, &bell, 20, 9, &MleOptions::default()).unwrap();
        assert_eq!(a, b);
        a.ensure_converged().unwrap();
        let s = a.sigma.unwrap();
        assert!(s.fidelity > 0.0 && s.fidelity < 0.01);
        let mut buf = Vec::new();
        a.write_report(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        for key in [
            "fidelity_sigma",
            "concurrence_sigma",
            "purity_sigma",
            "cosine_similarity_sigma",
        ] {
            assert!(text.contains(key));
        }
    }
}
