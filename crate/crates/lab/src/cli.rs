//! Command-line driver.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use nonlocal_core::channels::{apply_noise, rotate_pair, Branch};
use nonlocal_core::measure::{
    chsh_from_counts, derive_seed, estimate_observables, expected_counts, extract_thetas,
    observable_settings, scan_theta_a, simulate_counts, ChshAngles, CoincidenceTable,
    ExtractOptions, JointObservables, JointSetting, ScanOptions,
};
use nonlocal_core::metrology::{
    loglog_slope, qfi, scaling_row, separable_estimate, ScalingRow, BASELINE_THETA,
};
use nonlocal_core::states::{bell_state, BellKind, TwoQubitState};
use nonlocal_core::tomography::{
    predicted_counts, simulate_tomography_counts, tomography_settings, MleOptions,
};
use nonlocal_core::verify;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{LabError, Result};
use crate::formats::{
    self, branch_name, deg, lookup, read_observables, read_table, read_tomography_counts,
    write_density_matrix, write_metadata, write_observables, write_table, write_tomography_counts,
};
use crate::sweeps::{compare_supplementary, run_sweep, Provenance};
use crate::tomo::run_tomography;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "NONLOCAL_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "nonlocal",
    version,
    about = "Simulate and analyze nonlocal optical-rotation experiments"
)]
pub struct Cli {
    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Csv, global = true)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment configuration (TOML)
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides statistics.seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Emit Born-rule expectations instead of samples
    #[arg(long)]
    pub exact: bool,
    /// Output file; defaults to the configured path, then the output directory, then stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SettingSet {
    /// ZZ, XZ and ZX
    Observables,
    /// {0°, 45°} × {22.5°, 67.5°}
    Chsh,
    /// the sixteen tomography projectors
    Tomography,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BranchArg {
    Plus,
    Minus,
}

impl From<BranchArg> for Branch {
    fn from(b: BranchArg) -> Branch {
        match b {
            BranchArg::Plus => Branch::Plus,
            BranchArg::Minus => Branch::Minus,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coincidence counts from a configuration
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = SettingSet::Observables)]
        settings: SettingSet,
    },
    /// Estimate M_zz, M_xz, M_zx from coincidence tables
    Observables {
        #[arg(required = true)]
        tables: Vec<PathBuf>,
        /// Branch label for every table; otherwise read from the `state` metadata
        #[arg(long, value_enum)]
        branch: Option<BranchArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recover θ_A and θ_B from plus and minus observables
    Extract {
        observables: PathBuf,
        /// Remove the analyzer offsets of this configuration
        #[arg(long)]
        config: Option<PathBuf>,
        /// Reject estimates whose imaginary residue exceeds this, radians
        #[arg(long)]
        max_imag_residue: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Wide-range θ_A search by tuning θ_B on ψ−
    Scan {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = -180.0, allow_hyphen_values = true)]
        from_deg: f64,
        #[arg(long, default_value_t = 180.0, allow_hyphen_values = true)]
        to_deg: f64,
        #[arg(long, default_value_t = 0.01)]
        resolution_deg: f64,
    },
    /// Maximum-likelihood state reconstruction from tomography counts
    Tomo {
        counts: PathBuf,
        /// Bell state name or density-matrix file
        #[arg(long, default_value = "psi_plus")]
        reference: String,
        #[arg(long, default_value_t = 200)]
        bootstrap: usize,
        /// Iteration cap for the likelihood maximization
        #[arg(long, default_value_t = MleOptions::default().max_iter)]
        max_iter: usize,
        /// Bootstrap seed; falls back to the `seed` metadata of the counts file
        #[arg(long)]
        seed: Option<u64>,
        /// Write the reconstructed density matrix here
        #[arg(long)]
        rho_out: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CHSH parameter from a four-setting table
    Chsh {
        table: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Molarity or θ_B sweep
    Sweep {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Quantum Fisher information and separable-baseline variance
    Fisher {
        #[arg(long, default_value_t = 8)]
        max_n: u32,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 100)]
        counts_per_trial: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the analytic invariant suite
    Verify,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_with<I, T>(
    args: I,
    out_dir: Option<PathBuf>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let mut text = e.render().to_string();
            if e.use_stderr() && !text.contains("Usage:") {
                text = format!("{text}\n{}\n", Cli::command().render_usage());
            }
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    let mut ctx = Context { out_dir, stdout };
    match ctx.dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

/// Entry point for the binary.
pub fn run() -> i32 {
    let out_dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(
        std::env::args_os(),
        out_dir,
        &mut stdout.lock(),
        &mut stderr.lock(),
    )
}

struct Context<'a> {
    out_dir: Option<PathBuf>,
    stdout: &'a mut dyn Write,
}

impl Context<'_> {
    fn dispatch(&mut self, cmd: Command) -> Result<i32> {
        match cmd {
            Command::Simulate { run, settings } => self.simulate(run, settings),
            Command::Observables {
                tables,
                branch,
                out,
            } => self.observables(&tables, branch, out),
            Command::Extract {
                observables,
                config,
                max_imag_residue,
                out,
            } => self.extract(&observables, config.as_deref(), max_imag_residue, out),
            Command::Scan {
                run,
                from_deg,
                to_deg,
                resolution_deg,
            } => self.scan(run, (from_deg, to_deg), resolution_deg),
            Command::Tomo {
                counts,
                reference,
                bootstrap,
                max_iter,
                seed,
                rho_out,
                out,
            } => {
                let opts = MleOptions {
                    max_iter,
                    ..MleOptions::default()
                };
                self.tomo(&counts, &reference, bootstrap, &opts, seed, rho_out, out)
            }
            Command::Chsh { table, out } => self.chsh(&table, out),
            Command::Sweep { run } => self.sweep(run),
            Command::Fisher {
                max_n,
                trials,
                counts_per_trial,
                seed,
                out,
            } => self.fisher(max_n, trials, counts_per_trial, seed, out),
            Command::Verify => self.verify(),
        }
    }

    /// `--out`, then the configured path, then the output directory, then stdout.
    fn destination(
        &self,
        out: Option<PathBuf>,
        configured: Option<&PathBuf>,
        name: &str,
    ) -> Option<PathBuf> {
        out.or_else(|| configured.cloned())
            .or_else(|| self.out_dir.as_ref().map(|d| d.join(name)))
    }

    fn emit(&mut self, dest: Option<&Path>, bytes: &[u8]) -> Result<()> {
        match dest {
            Some(path) => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).map_err(LabError::io(dir))?;
                }
                std::fs::write(path, bytes).map_err(LabError::io(path))
            }
            None => Ok(self.stdout.write_all(bytes)?),
        }
    }

    fn simulate(&mut self, run: RunArgs, settings: SettingSet) -> Result<i32> {
        let (cfg, seed) = load_run(&run)?;
        let rho = analyzed_state(&cfg)?;
        let mut meta = vec![
            ("state".to_string(), cfg.state_name().to_string()),
            ("config_hash".to_string(), cfg.hash()),
        ];
        let mut buf = Vec::new();
        match settings {
            SettingSet::Tomography => {
                let set = tomography_settings();
                let params = cfg.simulation_params(seed);
                let counts = if run.exact {
                    predicted_counts(&rho, &set, params.mean_pairs())
                } else {
                    simulate_tomography_counts(&rho, &set, params.mean_pairs(), seed)
                };
                meta.extend([
                    ("seed".to_string(), seed.to_string()),
                    ("exact".to_string(), run.exact.to_string()),
                ]);
                write_tomography_counts(&mut buf, &set, &counts, &meta)?;
            }
            SettingSet::Observables | SettingSet::Chsh => {
                let joint: Vec<JointSetting> = match settings {
                    SettingSet::Chsh => ChshAngles::standard().settings().to_vec(),
                    _ => observable_settings().to_vec(),
                };
                let mut table = table_for(&cfg, &rho, &joint, seed, run.exact)?;
                table.meta.extra = meta;
                write_table(&mut buf, &table)?;
            }
        }
        let dest = self.destination(run.out, cfg.outputs.counts.as_ref(), "counts.csv");
        self.emit(dest.as_deref(), &buf)?;
        Ok(0)
    }

    fn observables(
        &mut self,
        tables: &[PathBuf],
        branch: Option<BranchArg>,
        out: Option<PathBuf>,
    ) -> Result<i32> {
        let mut rows: Vec<(Option<Branch>, JointObservables)> = Vec::new();
        for path in tables {
            let table = load_table(path)?;
            let b = match branch {
                Some(b) => Some(b.into()),
                None => lookup(&table.meta.extra, "state").and_then(formats::parse_branch),
            };
            rows.push((b, estimate_observables(&table)?));
        }
        let mut buf = Vec::new();
        write_observables(&mut buf, &rows)?;
        let dest = self.destination(out, None, "observables.csv");
        self.emit(dest.as_deref(), &buf)?;
        Ok(0)
    }

    fn extract(
        &mut self,
        path: &Path,
        config: Option<&Path>,
        max_imag_residue: Option<f64>,
        out: Option<PathBuf>,
    ) -> Result<i32> {
        let rows = read_observables(&read(path)?, &path.display().to_string())?;
        let pick = |b: Branch| {
            let mut it = rows.iter().filter(|(r, _)| *r == Some(b));
            match (it.next(), it.next()) {
                (Some((_, o)), None) => Ok(*o),
                (None, _) => Err(LabError::Usage(format!(
                    "{}: no {} row",
                    path.display(),
                    branch_name(b)
                ))),
                _ => Err(LabError::Usage(format!(
                    "{}: several {} rows",
                    path.display(),
                    branch_name(b)
                ))),
            }
        };
        let (plus, minus) = (pick(Branch::Plus)?, pick(Branch::Minus)?);
        let opts = ExtractOptions {
            max_imag_residue,
            ..ExtractOptions::default()
        };
        let mut est = extract_thetas(&plus, &minus, &opts)?;
        if let Some(c) = config {
            let o = ExperimentConfig::load(c)?.offsets.radians();
            est.theta_a -= o.pbs_a + 0.5 * o.hwp;
            est.theta_b -= o.pbs_b - 0.5 * o.hwp;
        }
        let text = format!(
            "theta_a_deg,theta_b_deg,sigma_a_deg,sigma_b_deg,imag_a,imag_b\n{},{},{},{},{:e},{:e}\n",
            deg(est.theta_a),
            deg(est.theta_b),
            deg(est.sigma_a),
            deg(est.sigma_b),
            // adding zero folds −0 into +0
            est.imag_a + 0.0,
            est.imag_b + 0.0
        );
        let dest = self.destination(out, None, "thetas.csv");
        self.emit(dest.as_deref(), text.as_bytes())?;
        Ok(0)
    }

    fn scan(&mut self, run: RunArgs, range_deg: (f64, f64), resolution_deg: f64) -> Result<i32> {
        let (cfg, seed) = load_run(&run)?;
        let pc = cfg.point_config(run.exact);
        let theta_a = cfg.arm_a.angle()?;
        let settings = observable_settings();
        let mut calls = 0u64;
        let mut probe = |theta_b: f64| {
            let rho = nonlocal_core::sweep::evolved_state(
                Branch::Minus,
                theta_a,
                -pc.offsets.pbs_b + theta_b,
                &pc,
            )?;
            let table = table_for(&cfg, &rho, &settings, derive_seed(seed, calls), run.exact)?;
            calls += 1;
            Ok(estimate_observables(&table)?)
        };
        let opts = ScanOptions {
            resolution: resolution_deg.to_radians(),
            ..ScanOptions::default()
        };
        let range = (range_deg.0.to_radians(), range_deg.1.to_radians());
        let res = scan_theta_a(
            |x| {
                probe(x).map_err(|e: LabError| nonlocal_core::Error::InvalidArgument(e.to_string()))
            },
            range,
            &opts,
        )?;
        // θ_B lands on θ_A + pbs_a + hwp once the arm-B offset is cancelled
        let o = pc.offsets;
        let corrected = res.theta_a - o.pbs_a - o.hwp;
        let mut buf = Vec::new();
        write_metadata(&mut buf, &Provenance::new(&cfg, seed, run.exact).pairs())?;
        writeln!(buf, "theta_a_deg,theta_a_raw_deg,contrast,evaluations")?;
        writeln!(
            buf,
            "{},{},{},{}",
            deg(corrected),
            deg(res.theta_a),
            res.contrast,
            res.evaluations
        )?;
        let dest = self.destination(run.out, cfg.outputs.scan.as_ref(), "scan.csv");
        self.emit(dest.as_deref(), &buf)?;
        Ok(0)
    }

    #[allow(clippy::too_many_arguments)]
    fn tomo(
        &mut self,
        path: &Path,
        reference: &str,
        bootstrap: usize,
        opts: &MleOptions,
        seed: Option<u64>,
        rho_out: Option<PathBuf>,
        out: Option<PathBuf>,
    ) -> Result<i32> {
        let file = path.display().to_string();
        let (set, counts, meta) = read_tomography_counts(&read(path)?, &file)?;
        let reference = reference_state(reference)?;
        let seed = match seed {
            Some(s) => s,
            None if bootstrap == 0 => 0,
            None => lookup(&meta, "seed")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| {
                    LabError::Usage("--seed is required for bootstrap resampling".into())
                })?,
        };
        let run = run_tomography(&counts, &set, &reference, bootstrap, seed, opts)?;
        let mut buf = Vec::new();
        run.write_report(&mut buf)?;
        let dest = self.destination(out, None, "tomography.txt");
        self.emit(dest.as_deref(), &buf)?;
        if let Some(p) = rho_out {
            let mut m = Vec::new();
            write_density_matrix(&mut m, &run.fit.state)?;
            self.emit(Some(&p), &m)?;
        }
        run.ensure_converged()?;
        Ok(0)
    }

    fn chsh(&mut self, path: &Path, out: Option<PathBuf>) -> Result<i32> {
        let table = load_table(path)?;
        let est = chsh_from_counts(&table)?;
        let a = est.angles;
        let text = format!(
            "s,sigma,significance,a_deg,a_prime_deg,b_deg,b_prime_deg\n{},{},{},{},{},{},{}\n",
            est.s,
            est.sigma,
            est.significance,
            deg(a.a),
            deg(a.a_prime),
            deg(a.b),
            deg(a.b_prime)
        );
        let dest = self.destination(out, None, "chsh.csv");
        self.emit(dest.as_deref(), text.as_bytes())?;
        Ok(0)
    }

    fn sweep(&mut self, run: RunArgs) -> Result<i32> {
        let (cfg, _) = load_run(&run)?;
        let mut result = run_sweep(&cfg, run.exact)?;
        if let Some(sup) = &cfg.supplementary {
            let points = formats::read_xy(&sup.path, sup)?;
            let rms = compare_supplementary(&result, &points)?;
            result
                .summary
                .push(("supplementary_weighted_rms".into(), rms.to_string()));
        }
        let mut buf = Vec::new();
        result.write_csv(&mut buf)?;
        let dest = self.destination(run.out, cfg.outputs.sweep.as_ref(), "sweep.csv");
        self.emit(dest.as_deref(), &buf)?;
        if dest.is_some() {
            let mut summary = Vec::new();
            for (k, v) in &result.summary {
                writeln!(summary, "{k} = {v}")?;
            }
            self.stdout.write_all(&summary)?;
        }
        Ok(0)
    }

    fn fisher(
        &mut self,
        max_n: u32,
        trials: u64,
        cpt: u64,
        seed: Option<u64>,
        out: Option<PathBuf>,
    ) -> Result<i32> {
        let seed = seed.ok_or_else(|| LabError::Usage("--seed is required".into()))?;
        if max_n < 1 {
            return Err(LabError::Usage("--max-n must be at least 1".into()));
        }
        if trials < 2 || cpt < 1 {
            return Err(LabError::Usage(
                "need --trials >= 2 and --counts-per-trial >= 1".into(),
            ));
        }
        let rows: Vec<(f64, ScalingRow)> = (1..=max_n)
            .map(|n| {
                let estimates: Vec<f64> = (0..trials)
                    .into_par_iter()
                    .map(|t| {
                        separable_estimate(n, cpt, BASELINE_THETA, derive_seed(seed, n as u64), t)
                    })
                    .collect();
                Ok((qfi(n)?, scaling_row(n, &estimates, cpt)))
            })
            .collect::<Result<_>>()?;
        let scaling: Vec<ScalingRow> = rows.iter().map(|r| r.1).collect();
        let mut buf = Vec::new();
        write_metadata(
            &mut buf,
            &[
                ("seed".into(), seed.to_string()),
                ("trials".into(), trials.to_string()),
                ("counts_per_trial".into(), cpt.to_string()),
            ],
        )?;
        if scaling.len() >= 3 {
            let fit = loglog_slope(&scaling, trials)?;
            write_metadata(
                &mut buf,
                &[
                    ("loglog_slope".into(), fit.slope.to_string()),
                    ("loglog_slope_sigma".into(), fit.slope_sigma.to_string()),
                ],
            )?;
        }
        writeln!(buf, "n,qfi,var_entangled_bound,var_separable_sim")?;
        for (q, r) in &rows {
            writeln!(
                buf,
                "{},{q},{},{}",
                r.n, r.var_entangled_bound, r.var_separable_sim
            )?;
        }
        let dest = self.destination(out, None, "fisher.csv");
        self.emit(dest.as_deref(), &buf)?;
        Ok(0)
    }

    fn verify(&mut self) -> Result<i32> {
        let mut failed = 0;
        for c in verify::run_all() {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(self.stdout, "{tag} {}: {}", c.name, c.detail)?;
            failed += usize::from(!c.passed);
        }
        if failed > 0 {
            writeln!(self.stdout, "{failed} check(s) failed")?;
            return Ok(2);
        }
        Ok(0)
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(LabError::io(path))
}

fn load_table(path: &Path) -> Result<CoincidenceTable> {
    read_table(&read(path)?, &path.display().to_string())
}

/// Loads the configuration with `--seed` applied, so the hash records it.
fn load_run(run: &RunArgs) -> Result<(ExperimentConfig, u64)> {
    let mut cfg = ExperimentConfig::load(&run.config)?;
    if run.seed.is_some() {
        cfg.statistics.seed = run.seed;
    }
    let seed = cfg.seed(run.exact)?;
    Ok((cfg, seed))
}

/// Prepared state after noise and the arm rotations plus analyzer offsets.
fn analyzed_state(cfg: &ExperimentConfig) -> Result<TwoQubitState> {
    let rho = apply_noise(&cfg.prepared_state()?, &cfg.noise_spec())?;
    let o = cfg.offsets.radians();
    let hwp = if cfg.branch() == Some(Branch::Minus) {
        o.hwp
    } else {
        0.0
    };
    Ok(rotate_pair(
        &rho,
        cfg.arm_a.angle()? + o.pbs_a + hwp,
        cfg.arm_b.angle()? + o.pbs_b,
    ))
}

fn table_for(
    cfg: &ExperimentConfig,
    rho: &TwoQubitState,
    settings: &[JointSetting],
    seed: u64,
    exact: bool,
) -> Result<CoincidenceTable> {
    let params = cfg.simulation_params(seed);
    Ok(if exact {
        expected_counts(rho, settings, &params)?
    } else {
        simulate_counts(rho, settings, &params)?
    })
}

fn reference_state(spec: &str) -> Result<TwoQubitState> {
    let kind = match spec {
        "phi_plus" => Some(BellKind::PhiPlus),
        "phi_minus" => Some(BellKind::PhiMinus),
        "psi_plus" => Some(BellKind::PsiPlus),
        "psi_minus" => Some(BellKind::PsiMinus),
        _ => None,
    };
    match kind {
        Some(k) => Ok(bell_state(k)),
        None => {
            let path = Path::new(spec);
            formats::read_density_matrix(&read(path)?, spec)
        }
    }
}
