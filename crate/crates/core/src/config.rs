//! Run configuration: a TOML file with `[grid]`, `[meter]`, `[dynamics]` and
//! `[run]` tables, command-line overrides, and the operators built from it.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::jump::{Mode, SimConfig};
use crate::lattice::{build_grid, hamiltonian, position_operator, Boundary, DenseOperator, LatticeGrid, WaveFunction};
use crate::meter::{gaussian_packet, reduction_kernel, PointerPacket, ReductionKernel};
use crate::mixing::DensityMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n_sites: usize,
    pub spacing: f64,
    pub boundary: Boundary,
    pub particles: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { n_sites: 16, spacing: 0.25, boundary: Boundary::Dirichlet, particles: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeterSection {
    /// `Y`: the meter grid is `[-Y, Y]`.
    pub half_width: f64,
    /// `h`.
    pub step: f64,
    /// Momentum boost `p₀` of the Gaussian packet.
    pub boost: f64,
}

impl Default for MeterSection {
    fn default() -> Self {
        Self { half_width: 8.0, step: 1.0 / 256.0, boost: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    pub nu: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub hbar: f64,
    pub mass: f64,
    /// Harmonic frequency of `V(x) = ½ m ω² x²`; zero for a free particle.
    pub omega: f64,
    pub mode: Mode,
    /// Step of the stochastic integrators and the master-equation oracles.
    pub dt: f64,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self {
            nu: 2.0,
            kappa: 0.3,
            gamma: 1.0,
            hbar: 1.0,
            mass: 1.0,
            omega: 1.0,
            mode: Mode::Normalized,
            dt: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub horizon: f64,
    pub trajectories: usize,
    pub seed: u64,
    /// Number of equally spaced sample times in `[0, T]`, both ends included.
    pub samples: usize,
    /// Initial Gaussian state, one copy per particle, centers spread by `separation`.
    pub center: f64,
    pub width: f64,
    pub momentum: f64,
    pub separation: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            trajectories: 10_000,
            seed: 0,
            samples: 11,
            center: 0.0,
            width: 0.5,
            momentum: 0.0,
            separation: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub grid: GridSection,
    pub meter: MeterSection,
    pub dynamics: DynamicsSection,
    pub run: RunSection,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub n_sites: Option<usize>,
    pub spacing: Option<f64>,
    pub particles: Option<usize>,
    pub nu: Option<f64>,
    pub kappa: Option<f64>,
    pub gamma: Option<f64>,
    pub hbar: Option<f64>,
    pub mode: Option<Mode>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub trajectories: Option<usize>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
}

fn bound(ok: bool, msg: String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(SimError::Config(msg))
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($field:ident, $target:expr) => {
                if let Some(v) = o.$field.clone() {
                    $target = v;
                }
            };
        }
        set!(n_sites, self.grid.n_sites);
        set!(spacing, self.grid.spacing);
        set!(particles, self.grid.particles);
        set!(nu, self.dynamics.nu);
        set!(kappa, self.dynamics.kappa);
        set!(gamma, self.dynamics.gamma);
        set!(hbar, self.dynamics.hbar);
        set!(mode, self.dynamics.mode);
        set!(dt, self.dynamics.dt);
        set!(horizon, self.run.horizon);
        set!(trajectories, self.run.trajectories);
        set!(seed, self.run.seed);
        set!(samples, self.run.samples);
    }

    pub fn validate(&self) -> Result<()> {
        let (g, m, d, r) = (&self.grid, &self.meter, &self.dynamics, &self.run);
        bound(g.n_sites >= 2, format!("grid.n_sites: N >= 2 required, got {}", g.n_sites))?;
        bound(g.spacing > 0.0, format!("grid.spacing: a > 0 required, got {}", g.spacing))?;
        bound((1..=3).contains(&g.particles), format!("grid.particles: 1 <= M <= 3 required, got {}", g.particles))?;
        bound(m.half_width > 0.0, format!("meter.half_width: Y > 0 required, got {}", m.half_width))?;
        bound(m.step > 0.0, format!("meter.step: h > 0 required, got {}", m.step))?;
        bound(d.nu > 0.0 && d.nu.is_finite(), format!("dynamics.nu: ν > 0 required, got {}", d.nu))?;
        bound(d.kappa.is_finite(), format!("dynamics.kappa: finite κ required, got {}", d.kappa))?;
        bound(d.gamma.is_finite(), format!("dynamics.gamma: finite γ required, got {}", d.gamma))?;
        bound(d.hbar > 0.0, format!("dynamics.hbar: ħ > 0 required, got {}", d.hbar))?;
        bound(d.mass > 0.0, format!("dynamics.mass: m > 0 required, got {}", d.mass))?;
        bound(d.omega >= 0.0, format!("dynamics.omega: ω >= 0 required, got {}", d.omega))?;
        bound(d.dt > 0.0, format!("dynamics.dt: dt > 0 required, got {}", d.dt))?;
        bound(r.horizon > 0.0 && r.horizon.is_finite(), format!("run.horizon: T > 0 required, got {}", r.horizon))?;
        bound(r.trajectories >= 1, "run.trajectories: count >= 1 required, got 0".into())?;
        bound(r.samples >= 2, format!("run.samples: at least 2 sample times required, got {}", r.samples))?;
        bound(r.width > 0.0, format!("run.width: width > 0 required, got {}", r.width))?;
        Ok(())
    }

    pub fn sample_times(&self) -> Vec<f64> {
        let n = self.run.samples;
        (0..n).map(|i| self.run.horizon * i as f64 / (n - 1) as f64).collect()
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            nu: self.dynamics.nu,
            horizon: self.run.horizon,
            mode: self.dynamics.mode,
            sample_times: self.sample_times(),
            trajectories: self.run.trajectories,
            seed: self.run.seed,
            hbar: self.dynamics.hbar,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Reads the file (if any), applies the overrides and validates.
pub fn parse_config(path: Option<&Path>, overrides: &Overrides) -> Result<Config> {
    let mut cfg = match path {
        Some(p) => Config::from_toml(&std::fs::read_to_string(p)?)?,
        None => Config::default(),
    };
    cfg.apply(overrides);
    cfg.validate()?;
    Ok(cfg)
}

/// Operators and initial states resolved from a configuration.
#[derive(Clone, Debug)]
pub struct Setup {
    pub grid: LatticeGrid,
    pub packet: Arc<PointerPacket>,
    pub kernel: ReductionKernel,
    pub r: DenseOperator,
    /// Single-particle Hamiltonian.
    pub h: DenseOperator,
    /// Hamiltonian on the configured number of particles.
    pub h_many: DenseOperator,
    pub psi: WaveFunction,
    pub psi_many: WaveFunction,
}

impl Setup {
    pub fn new(cfg: &Config) -> Result<Self> {
        cfg.validate()?;
        let d = &cfg.dynamics;
        let grid = build_grid(cfg.grid.n_sites, cfg.grid.spacing, cfg.grid.boundary)?;
        let packet = Arc::new(gaussian_packet(cfg.meter.half_width, cfg.meter.step, cfg.meter.boost, d.hbar)?);
        let r = position_operator(&grid);
        let kernel = reduction_kernel(packet.clone(), &r, d.kappa)?;
        let v: Vec<f64> = grid.positions().iter().map(|x| 0.5 * d.mass * d.omega * d.omega * x * x).collect();
        let h = hamiltonian(&grid, d.mass, &v, None, 1, d.hbar)?;
        let m = cfg.grid.particles;
        let h_many = if m == 1 { h.clone() } else { hamiltonian(&grid, d.mass, &v, None, m, d.hbar)? };
        let run = &cfg.run;
        let psi = WaveFunction::gaussian(&grid, run.center, run.width, run.momentum, d.hbar)?;
        let factors: Vec<WaveFunction> = (0..m)
            .map(|k| {
                let c = run.center + run.separation * (k as f64 - 0.5 * (m as f64 - 1.0));
                WaveFunction::gaussian(&grid, c, run.width, run.momentum, d.hbar)
            })
            .collect::<Result<_>>()?;
        let psi_many = WaveFunction::product(&factors)?;
        Ok(Self { grid, packet, kernel, r, h, h_many, psi, psi_many })
    }

    pub fn rho_many(&self) -> DensityMatrix {
        DensityMatrix::from_pure(&self.psi_many)
    }
}
