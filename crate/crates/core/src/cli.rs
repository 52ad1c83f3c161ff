//! Command-line front end. Every subcommand writes `manifest.json` first and
//! then its data files into the output directory.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{parse_config, Config, Overrides, Setup};
use crate::diffusive::{
    fit_exponent, jump_generator_vs_diffusive, mean_field_check, run_density_path, run_sse_path, run_unitary_path,
    DiffusionParams, NoiseKind,
};
use crate::error::{Result, SimError};
use crate::jump::{mean_sem, run_ensemble, run_trajectory, sample_outcome, summarize, trajectory_rng, Mode};
use crate::kick::{pointer_statistics, posterior_state};
use crate::lattice::{CMatrix, CVector, C64};
use crate::meter::{expansion_tables, povm_residual};
use crate::mixing::{nonselective_kick, run_density_trajectory, von_neumann_entropy, DensityMatrix};
use crate::oracle::OracleReport;
use crate::output::{CsvWriter, NdjsonWriter, Record, RunManifest};
use crate::verify::{diffusive_vs_oracle, jump_vs_oracle, mixing_vs_oracle};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "LOCSIM_OUT_DIR";

/// Largest POVM residual `povm-check` accepts.
pub const POVM_TOLERANCE: f64 = 1e-8;

#[derive(Parser, Debug)]
#[command(name = "locsim", version, about = "Localization trajectories, diffusive limits and master-equation checks")]
pub struct Cli {
    /// TOML file with [grid], [meter], [dynamics] and [run] tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $LOCSIM_OUT_DIR, else the current directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for ensembles.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub overrides: OverrideArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default)]
pub struct OverrideArgs {
    #[arg(long, global = true)]
    pub n_sites: Option<usize>,
    #[arg(long, global = true)]
    pub spacing: Option<f64>,
    /// Number of particles M.
    #[arg(long, global = true)]
    pub particles: Option<usize>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub nu: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub kappa: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true)]
    pub hbar: Option<f64>,
    /// linear or normalized.
    #[arg(long, global = true)]
    pub mode: Option<Mode>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    #[arg(long, global = true)]
    pub trajectories: Option<usize>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// One meter reading on the initial state.
    Kick {
        /// Reading to condition on; sampled from the pointer law when absent.
        #[arg(long, allow_negative_numbers = true)]
        y: Option<f64>,
    },
    /// One jump trajectory as NDJSON.
    Trajectory {
        #[arg(long, default_value_t = 0)]
        index: u64,
    },
    /// Ensemble summary of jump trajectories.
    Ensemble,
    /// Multiparticle mixing trajectory and nonselective entropy.
    Mixing {
        #[arg(long, default_value_t = 0)]
        index: u64,
        /// Number of nonselective kicks for the entropy sequence.
        #[arg(long, default_value_t = 20)]
        kicks: usize,
    },
    /// Mean-field and diffusive limits.
    Limits {
        #[command(subcommand)]
        action: LimitAction,
    },
    /// Compare an ensemble or generator with its oracle.
    Verify {
        /// Acceptance bound on the reported distance.
        #[arg(long, global = true, default_value_t = 0.02)]
        tolerance: f64,
        #[command(subcommand)]
        pairing: Pairing,
    },
    /// Residual of the meter POVM normalization.
    PovmCheck,
}

#[derive(Subcommand, Debug)]
pub enum LimitAction {
    /// Jump dynamics with κ = s·γ/ν against the mean-field Hamiltonian.
    MeanField {
        #[arg(long, value_delimiter = ',', default_values_t = vec![50.0, 100.0, 200.0])]
        nus: Vec<f64>,
        /// Sign s in κ = s·γ/ν.
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        kappa_sign: f64,
    },
    /// Jump generator with κ = s·γ/√ν against the diffusive generator.
    CentralLimit {
        #[arg(long, value_delimiter = ',', default_values_t = vec![1e2, 1e3, 1e4])]
        nus: Vec<f64>,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        kappa_sign: f64,
    },
    /// Linear diffusive SSE paths.
    DiffusiveSse {
        #[arg(long, default_value_t = 0)]
        index: u64,
    },
    /// Multiparticle diffusive density paths.
    DiffusiveDensity {
        #[arg(long, default_value_t = 0)]
        index: u64,
    },
    /// Norm defect of the Wiener-driven unitary equation.
    UnitaryDiffusion,
}

#[derive(Subcommand, Debug)]
pub enum Pairing {
    JumpVsOracle,
    MixingVsOracle,
    DiffusiveVsOracle,
    /// Generator gap at the largest intensity against the tolerance.
    JumpVsDiffusive {
        #[arg(long, value_delimiter = ',', default_values_t = vec![1e2, 1e3, 1e4])]
        nus: Vec<f64>,
    },
}

impl OverrideArgs {
    fn to_overrides(&self, seed: Option<u64>) -> Overrides {
        Overrides {
            n_sites: self.n_sites,
            spacing: self.spacing,
            particles: self.particles,
            nu: self.nu,
            kappa: self.kappa,
            gamma: self.gamma,
            hbar: self.hbar,
            mode: self.mode,
            dt: self.dt,
            horizon: self.horizon,
            trajectories: self.trajectories,
            seed,
            samples: self.samples,
        }
    }
}

/// Outcome of a subcommand that ran to completion.
enum Status {
    Ok,
    CheckFailed,
}

/// Parses `args` and runs; returns the process exit status: 0 on success,
/// 1 on invalid input, 2 when a `verify` or `povm-check` bound is missed.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(Status::Ok) => 0,
        Ok(Status::CheckFailed) => 2,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn execute(cli: &Cli) -> Result<Status> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(SimError::Config("--threads: at least 1 thread required".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = parse_config(cli.config.as_deref(), &cli.overrides.to_overrides(cli.seed))?;
    let dir = out_dir(cli);
    match &cli.command {
        Command::Kick { y } => kick(&cfg, &dir, *y),
        Command::Trajectory { index } => trajectory(&cfg, &dir, *index),
        Command::Ensemble => ensemble(&cfg, &dir),
        Command::Mixing { index, kicks } => mixing(&cfg, &dir, *index, *kicks),
        Command::Limits { action } => limits(&cfg, &dir, action),
        Command::Verify { tolerance, pairing } => verify(&cfg, &dir, pairing, *tolerance),
        Command::PovmCheck => povm_check(&cfg, &dir),
    }
}

fn manifest(cfg: &Config, dir: &Path, sub: &str, args: &[(&str, String)], outputs: &[&str]) -> Result<()> {
    let args = args.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    RunManifest::new(sub, cfg, args, outputs).write(dir)?;
    Ok(())
}

fn kick(cfg: &Config, dir: &Path, y: Option<f64>) -> Result<Status> {
    let args = [("y", y.map_or("sampled".into(), |v| v.to_string()))];
    manifest(cfg, dir, "kick", &args, &["kick.ndjson", "density.csv"])?;
    let s = Setup::new(cfg)?;
    let y = match y {
        Some(v) => v,
        None => sample_outcome(&s.kernel, &s.psi, &mut trajectory_rng(cfg.run.seed, 0))?,
    };
    let k = posterior_state(&s.kernel, &s.psi, y)?;
    let (mean, var) = k.posterior.position_moments();
    let mut w = NdjsonWriter::create(&dir.join("kick.ndjson"))?;
    w.write(
        Record::new()
            .f("t", 0.0)
            .f("y", k.y)
            .f("likelihood", k.likelihood)
            .f("prior_norm", k.prior_norm)
            .f("mean_x", mean)
            .f("var_x", var),
    )?;
    w.finish()?;
    let p = pointer_statistics(&s.kernel, &s.psi)?;
    let mut c = CsvWriter::create(&dir.join("density.csv"), &["y", "p"])?;
    for (i, v) in p.iter().enumerate() {
        c.row(&[s.kernel.meter().point(i), *v])?;
    }
    c.finish()?;
    Ok(Status::Ok)
}

fn trajectory(cfg: &Config, dir: &Path, index: u64) -> Result<Status> {
    manifest(cfg, dir, "trajectory", &[("index", index.to_string())], &["trajectory.ndjson"])?;
    let s = Setup::new(cfg)?;
    let sim = cfg.sim_config();
    let rec = run_trajectory(&sim, &s.h, &s.kernel, &s.psi, index)?;
    let mut w = NdjsonWriter::create(&dir.join("trajectory.ndjson"))?;
    let (mut ie, mut is) = (0, 0);
    while ie < rec.events.len() || is < rec.snapshots.len() {
        if is < rec.snapshots.len() && (ie >= rec.events.len() || rec.snapshots[is].0 <= rec.events[ie].t) {
            let (t, psi) = &rec.snapshots[is];
            let (mean, var) = psi.position_moments();
            w.write(
                Record::new()
                    .s("kind", "snapshot")
                    .f("t", *t)
                    .f("mean_x", mean)
                    .f("var_x", var)
                    .f("weight", psi.norm_sqr()),
            )?;
            is += 1;
        } else {
            let e = &rec.events[ie];
            w.write(Record::new().s("kind", "event").f("t", e.t).f("y", e.y))?;
            ie += 1;
        }
    }
    w.finish()?;
    Ok(Status::Ok)
}

fn ensemble(cfg: &Config, dir: &Path) -> Result<Status> {
    manifest(cfg, dir, "ensemble", &[], &["ensemble.csv"])?;
    let s = Setup::new(cfg)?;
    let records = run_ensemble(&cfg.sim_config(), &s.h, &s.kernel, &s.psi)?;
    let header = ["t", "mean_x", "sem_x", "mean_var_x", "sem_var_x", "mean_weight", "sem_weight"];
    let mut c = CsvWriter::create(&dir.join("ensemble.csv"), &header)?;
    for r in summarize(&records)? {
        c.row(&[r.t, r.mean_x, r.sem_x, r.mean_var_x, r.sem_var_x, r.mean_weight, r.sem_weight])?;
    }
    c.finish()?;
    Ok(Status::Ok)
}

fn mixing(cfg: &Config, dir: &Path, index: u64, kicks: usize) -> Result<Status> {
    let args = [("index", index.to_string()), ("kicks", kicks.to_string())];
    let outputs = ["mixing_events.ndjson", "mixing_entropy.csv", "mixing_nonselective.csv"];
    manifest(cfg, dir, "mixing", &args, &outputs)?;
    let s = Setup::new(cfg)?;
    let rho0 = s.rho_many();
    let rec = run_density_trajectory(&cfg.sim_config(), &s.h_many, &s.kernel, &rho0, index)?;
    let mut w = NdjsonWriter::create(&dir.join(outputs[0]))?;
    for e in &rec.events {
        w.write(Record::new().f("t", e.t).f("y", e.y))?;
    }
    w.finish()?;
    let mut c = CsvWriter::create(&dir.join(outputs[1]), &["t", "entropy", "trace", "mean_x", "var_x"])?;
    for (t, rho) in &rec.snapshots {
        let n = rho.normalized()?;
        let (mean, var) = n.position_moments();
        c.row(&[*t, von_neumann_entropy(&n)?, rho.trace(), mean, var])?;
    }
    c.finish()?;
    let mut c = CsvWriter::create(&dir.join(outputs[2]), &["kick", "entropy"])?;
    let mut rho = rho0;
    c.row(&[0.0, von_neumann_entropy(&rho)?])?;
    for k in 1..=kicks {
        rho = nonselective_kick(&rho, &s.kernel)?.normalized()?;
        c.row(&[k as f64, von_neumann_entropy(&rho)?])?;
    }
    c.finish()?;
    Ok(Status::Ok)
}

fn convergence_csv(path: &Path, nus: &[f64], errors: &[f64]) -> Result<()> {
    let exponent = fit_exponent(nus, errors);
    let mut c = CsvWriter::create(path, &["nu", "error", "ratio", "exponent"])?;
    for (i, (n, e)) in nus.iter().zip(errors).enumerate() {
        let ratio = if i == 0 { f64::NAN } else { errors[i - 1] / e };
        c.row(&[*n, *e, ratio, exponent])?;
    }
    c.finish()
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn unit_vector(s: &Setup) -> CVector {
    s.psi.amplitudes() * C64::new(s.psi.cell_measure().sqrt(), 0.0)
}

fn limits(cfg: &Config, dir: &Path, action: &LimitAction) -> Result<Status> {
    let d = &cfg.dynamics;
    match action {
        LimitAction::MeanField { nus, kappa_sign } => {
            let args = [("nus", list(nus)), ("kappa_sign", kappa_sign.to_string())];
            manifest(cfg, dir, "limits mean-field", &args, &["mean_field.csv"])?;
            let s = Setup::new(cfg)?;
            let rho0 = DensityMatrix::from_pure(&s.psi).matrix().clone();
            let rep = mean_field_check(
                &s.grid,
                &s.h,
                s.packet.clone(),
                d.gamma,
                kappa_sign * d.gamma,
                nus,
                &rho0,
                cfg.run.horizon,
                d.dt,
                d.hbar,
            )?;
            convergence_csv(&dir.join("mean_field.csv"), nus, &rep.distances)?;
        }
        LimitAction::CentralLimit { nus, kappa_sign } => {
            let args = [("nus", list(nus)), ("kappa_sign", kappa_sign.to_string())];
            manifest(cfg, dir, "limits central-limit", &args, &["central_limit.csv"])?;
            let s = Setup::new(cfg)?;
            let kappa = |nu: f64| kappa_sign * d.gamma / nu.sqrt();
            let rep = jump_generator_vs_diffusive(&s.grid, &s.h, s.packet.clone(), d.gamma, &kappa, nus, d.hbar)?;
            convergence_csv(&dir.join("central_limit.csv"), nus, &rep.errors)?;
        }
        LimitAction::DiffusiveSse { index } => {
            let outputs = ["diffusive_sse.ndjson", "diffusive_sse.csv"];
            manifest(cfg, dir, "limits diffusive-sse", &[("index", index.to_string())], &outputs)?;
            let s = Setup::new(cfg)?;
            let tables = expansion_tables(&s.packet)?;
            let p = DiffusionParams::new(&s.grid, 1, &s.h, &s.r, &tables, d.gamma, NoiseKind::ComplexV, d.dt, d.hbar)?;
            let times = cfg.sample_times();
            let chi0 = unit_vector(&s);
            let xs = s.grid.positions();
            let moments = |chi: &CVector| {
                let w = chi.norm_squared();
                let m = chi.iter().zip(&xs).map(|(c, x)| c.norm_sqr() * x).sum::<f64>() / w;
                let v = chi.iter().zip(&xs).map(|(c, x)| c.norm_sqr() * (x - m).powi(2)).sum::<f64>() / w;
                (w, m, v)
            };
            let path = run_sse_path(&p, &chi0, cfg.run.horizon, &times, cfg.run.seed, *index)?;
            let mut w = NdjsonWriter::create(&dir.join(outputs[0]))?;
            for (t, chi) in times.iter().zip(&path.snapshots) {
                let (wt, m, v) = moments(chi);
                w.write(Record::new().f("t", *t).f("mean_x", m).f("var_x", v).f("weight", wt))?;
            }
            w.finish()?;
            let paths: Vec<Vec<(f64, f64, f64)>> = (0..cfg.run.trajectories as u64)
                .into_par_iter()
                .map(|i| {
                    run_sse_path(&p, &chi0, cfg.run.horizon, &times, cfg.run.seed, i)
                        .map(|r| r.snapshots.iter().map(moments).collect())
                })
                .collect::<Result<_>>()?;
            let mut c = CsvWriter::create(&dir.join(outputs[1]), &["t", "mean_x", "sem_x", "mean_weight", "sem_weight"])?;
            for (k, t) in times.iter().enumerate() {
                let wx: Vec<f64> = paths.iter().map(|p| p[k].0 * p[k].1).collect();
                let ws: Vec<f64> = paths.iter().map(|p| p[k].0).collect();
                let (mx, sx) = mean_sem(&wx);
                let (mw, sw) = mean_sem(&ws);
                c.row(&[*t, mx, sx, mw, sw])?;
            }
            c.finish()?;
        }
        LimitAction::DiffusiveDensity { index } => {
            let outputs = ["diffusive_density.ndjson", "diffusive_density.csv"];
            manifest(cfg, dir, "limits diffusive-density", &[("index", index.to_string())], &outputs)?;
            let s = Setup::new(cfg)?;
            let m = cfg.grid.particles;
            let tables = expansion_tables(&s.packet)?;
            let p = DiffusionParams::new(&s.grid, m, &s.h_many, &s.r, &tables, d.gamma, NoiseKind::ComplexV, d.dt, d.hbar)?;
            let times = cfg.sample_times();
            let rho0 = s.rho_many().matrix().clone();
            let stats = |rho: &CMatrix| -> Result<(f64, f64)> {
                let dm = DensityMatrix::new(s.grid.clone(), m, rho.clone())?;
                Ok((dm.trace(), dm.position_moments().0))
            };
            let path = run_density_path(&p, &rho0, cfg.run.horizon, &times, cfg.run.seed, *index)?;
            let mut w = NdjsonWriter::create(&dir.join(outputs[0]))?;
            for (t, rho) in times.iter().zip(&path.snapshots) {
                let (tr, mx) = stats(rho)?;
                w.write(Record::new().f("t", *t).f("trace", tr).f("mean_x", mx))?;
            }
            w.finish()?;
            let paths: Vec<Vec<(f64, f64)>> = (0..cfg.run.trajectories as u64)
                .into_par_iter()
                .map(|i| {
                    let r = run_density_path(&p, &rho0, cfg.run.horizon, &times, cfg.run.seed, i)?;
                    r.snapshots.iter().map(&stats).collect()
                })
                .collect::<Result<_>>()?;
            let header = ["t", "mean_x", "sem_x", "mean_trace", "sem_trace"];
            let mut c = CsvWriter::create(&dir.join(outputs[1]), &header)?;
            for (k, t) in times.iter().enumerate() {
                let wx: Vec<f64> = paths.iter().map(|p| p[k].0 * p[k].1).collect();
                let ws: Vec<f64> = paths.iter().map(|p| p[k].0).collect();
                let (mx, sx) = mean_sem(&wx);
                let (mw, sw) = mean_sem(&ws);
                c.row(&[*t, mx, sx, mw, sw])?;
            }
            c.finish()?;
        }
        LimitAction::UnitaryDiffusion => {
            manifest(cfg, dir, "limits unitary-diffusion", &[], &["unitary_diffusion.csv"])?;
            let s = Setup::new(cfg)?;
            let tables = expansion_tables(&s.packet)?;
            let p = DiffusionParams::new(&s.grid, 1, &s.h, &s.r, &tables, d.gamma, NoiseKind::RealU, d.dt, d.hbar)?;
            let psi0 = unit_vector(&s);
            let defects: Vec<f64> = (0..cfg.run.trajectories as u64)
                .into_par_iter()
                .map(|i| run_unitary_path(&p, &psi0, cfg.run.horizon, cfg.run.seed, i).map(|r| r.defect))
                .collect::<Result<_>>()?;
            let mut c = CsvWriter::create(&dir.join("unitary_diffusion.csv"), &["path", "defect"])?;
            for (i, v) in defects.iter().enumerate() {
                c.row(&[i as f64, *v])?;
            }
            c.finish()?;
        }
    }
    Ok(Status::Ok)
}

fn report_csv(path: &Path, r: &OracleReport) -> Result<()> {
    let mut c = CsvWriter::create(path, &["t", "trace_distance", "sem", "tolerance", "pass"])?;
    for ((t, d), s) in r.times.iter().zip(&r.trace_distance).zip(&r.sem) {
        c.row(&[*t, *d, *s, r.tolerance, if *d <= r.tolerance { 1.0 } else { 0.0 }])?;
    }
    c.finish()
}

fn verify(cfg: &Config, dir: &Path, pairing: &Pairing, tolerance: f64) -> Result<Status> {
    if !(tolerance > 0.0) {
        return Err(SimError::Config(format!("--tolerance: tolerance > 0 required, got {tolerance}")));
    }
    let tol = [("tolerance", tolerance.to_string())];
    let pass = match pairing {
        Pairing::JumpVsOracle | Pairing::MixingVsOracle | Pairing::DiffusiveVsOracle => {
            let (name, file) = match pairing {
                Pairing::JumpVsOracle => ("verify jump-vs-oracle", "jump_vs_oracle.csv"),
                Pairing::MixingVsOracle => ("verify mixing-vs-oracle", "mixing_vs_oracle.csv"),
                _ => ("verify diffusive-vs-oracle", "diffusive_vs_oracle.csv"),
            };
            manifest(cfg, dir, name, &tol, &[file])?;
            let r = match pairing {
                Pairing::JumpVsOracle => jump_vs_oracle(cfg, tolerance)?,
                Pairing::MixingVsOracle => mixing_vs_oracle(cfg, tolerance)?,
                _ => diffusive_vs_oracle(cfg, tolerance)?,
            };
            report_csv(&dir.join(file), &r)?;
            println!("max trace distance {:.6e} (tolerance {tolerance})", r.max_distance());
            r.pass
        }
        Pairing::JumpVsDiffusive { nus } => {
            let args = [("tolerance", tolerance.to_string()), ("nus", list(nus))];
            manifest(cfg, dir, "verify jump-vs-diffusive", &args, &["jump_vs_diffusive.csv"])?;
            let s = Setup::new(cfg)?;
            let d = &cfg.dynamics;
            let kappa = |nu: f64| d.gamma / nu.sqrt();
            let rep = jump_generator_vs_diffusive(&s.grid, &s.h, s.packet.clone(), d.gamma, &kappa, nus, d.hbar)?;
            convergence_csv(&dir.join("jump_vs_diffusive.csv"), nus, &rep.errors)?;
            let last = rep.errors.last().copied().unwrap_or(f64::INFINITY);
            println!("generator gap {last:.6e} at the largest ν, fitted exponent {:.4}", rep.exponent);
            last <= tolerance
        }
    };
    Ok(if pass { Status::Ok } else { Status::CheckFailed })
}

fn povm_check(cfg: &Config, dir: &Path) -> Result<Status> {
    manifest(cfg, dir, "povm-check", &[], &["povm.csv"])?;
    let s = Setup::new(cfg)?;
    let residual = povm_residual(&s.kernel);
    let mut c = CsvWriter::create(&dir.join("povm.csv"), &["kappa", "residual", "tolerance"])?;
    c.row(&[cfg.dynamics.kappa, residual, POVM_TOLERANCE])?;
    c.finish()?;
    println!("povm residual {residual:.6e}");
    Ok(if residual <= POVM_TOLERANCE { Status::Ok } else { Status::CheckFailed })
}
