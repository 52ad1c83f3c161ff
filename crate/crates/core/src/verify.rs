//! Ensemble-versus-oracle comparisons built from a resolved configuration.

use rayon::prelude::*;

use crate::config::{Config, Setup};
use crate::diffusive::{run_sse_path, DiffusionParams, NoiseKind};
use crate::error::Result;
use crate::jump::{run_ensemble, Mode};
use crate::lattice::{CMatrix, C64};
use crate::meter::expansion_tables;
use crate::mixing::{run_density_ensemble, DensityMatrix};
use crate::oracle::{ensemble_average, ode_samples, trace_distance, DiffusiveGenerator, JumpGenerator, OracleReport};

/// Normalized sample states and, in linear mode, their likelihood weights.
fn compare(
    times: &[f64],
    states: Vec<Vec<CMatrix>>,
    weights: Option<Vec<Vec<f64>>>,
    oracle: &[CMatrix],
    tolerance: f64,
) -> Result<OracleReport> {
    let mut dist = Vec::with_capacity(times.len());
    let mut sem = Vec::with_capacity(times.len());
    for (s, exact) in oracle.iter().enumerate() {
        let w = weights.as_ref().map(|w| w[s].as_slice());
        let avg = ensemble_average(&states[s], w)?;
        dist.push(trace_distance(&avg.mean, exact)?);
        sem.push(avg.sem.max());
    }
    Ok(OracleReport::new(times.to_vec(), dist, sem, tolerance))
}

fn unit_trace(m: &CMatrix) -> (CMatrix, f64) {
    let tr = m.trace().re;
    (m / C64::new(tr, 0.0), tr)
}

/// Single-particle jump ensemble against the jump master equation.
pub fn jump_vs_oracle(cfg: &Config, tolerance: f64) -> Result<OracleReport> {
    let setup = Setup::new(cfg)?;
    let sim = cfg.sim_config();
    let records = run_ensemble(&sim, &setup.h, &setup.kernel, &setup.psi)?;
    let times = sim.sample_times.clone();
    let mut states = vec![Vec::with_capacity(records.len()); times.len()];
    let mut weights = vec![Vec::with_capacity(records.len()); times.len()];
    for r in &records {
        for (s, (_, psi)) in r.snapshots.iter().enumerate() {
            let (rho, w) = unit_trace(DensityMatrix::from_pure(psi).matrix());
            states[s].push(rho);
            weights[s].push(w);
        }
    }
    let gen = JumpGenerator::new(&setup.h, &setup.kernel, &setup.grid, sim.nu, 1, sim.hbar)?;
    let rho0 = DensityMatrix::from_pure(&setup.psi).matrix().clone();
    let oracle = ode_samples(&gen, &rho0, &times, cfg.dynamics.dt)?;
    let weights = (sim.mode == Mode::Linear).then_some(weights);
    compare(&times, states, weights, &oracle, tolerance)
}

/// `M`-particle mixing ensemble against the jump master equation at rate `Mν`.
pub fn mixing_vs_oracle(cfg: &Config, tolerance: f64) -> Result<OracleReport> {
    let setup = Setup::new(cfg)?;
    let sim = cfg.sim_config();
    let rho0 = setup.rho_many();
    let records = run_density_ensemble(&sim, &setup.h_many, &setup.kernel, &rho0)?;
    let times = sim.sample_times.clone();
    let mut states = vec![Vec::with_capacity(records.len()); times.len()];
    let mut weights = vec![Vec::with_capacity(records.len()); times.len()];
    for r in &records {
        for (s, (_, rho)) in r.snapshots.iter().enumerate() {
            let (rho, w) = unit_trace(rho.matrix());
            states[s].push(rho);
            weights[s].push(w);
        }
    }
    let m = cfg.grid.particles;
    let gen = JumpGenerator::new(&setup.h_many, &setup.kernel, &setup.grid, sim.nu, m, sim.hbar)?;
    let oracle = ode_samples(&gen, rho0.matrix(), &times, cfg.dynamics.dt)?;
    let weights = (sim.mode == Mode::Linear).then_some(weights);
    compare(&times, states, weights, &oracle, tolerance)
}

/// Linear diffusive SSE paths against the diffusive master equation.
pub fn diffusive_vs_oracle(cfg: &Config, tolerance: f64) -> Result<OracleReport> {
    let setup = Setup::new(cfg)?;
    let d = &cfg.dynamics;
    let tables = expansion_tables(&setup.packet)?;
    let params =
        DiffusionParams::new(&setup.grid, 1, &setup.h, &setup.r, &tables, d.gamma, NoiseKind::ComplexV, d.dt, d.hbar)?;
    let times = cfg.sample_times();
    let chi0 = setup.psi.amplitudes() * C64::new(setup.psi.cell_measure().sqrt(), 0.0);
    let paths: Vec<_> = (0..cfg.run.trajectories as u64)
        .into_par_iter()
        .map(|i| run_sse_path(&params, &chi0, cfg.run.horizon, &times, cfg.run.seed, i))
        .collect::<Result<_>>()?;
    let mut states = vec![Vec::with_capacity(paths.len()); times.len()];
    let mut weights = vec![Vec::with_capacity(paths.len()); times.len()];
    for p in &paths {
        for (s, chi) in p.snapshots.iter().enumerate() {
            let (rho, w) = unit_trace(&(chi * chi.adjoint()));
            states[s].push(rho);
            weights[s].push(w);
        }
    }
    let gen = DiffusiveGenerator::new(&setup.h, vec![setup.r.matrix().clone()], d.gamma, tables.sigma2, d.hbar)?;
    let rho0 = chi0.clone() * chi0.adjoint();
    let oracle = ode_samples(&gen, &rho0, &times, d.dt)?;
    compare(&times, states, Some(weights), &oracle, tolerance)
}
