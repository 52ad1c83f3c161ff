//! Spontaneous localization of one particle by Poisson-timed meter kicks.
//!
//! Linear mode draws events from the input law (Poisson times, readings from
//! `|f₀|²`) and carries the likelihood as the squared norm of the state.
//! Normalized mode draws readings from the output law of the current state
//! and renormalizes after every kick.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::kick::kicked;
use crate::lattice::{DenseOperator, WaveFunction};
use crate::meter::ReductionKernel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Linear,
    Normalized,
}

impl FromStr for Mode {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Mode::Linear),
            "normalized" => Ok(Mode::Normalized),
            other => Err(SimError::InvalidParameter(format!("mode must be linear or normalized, got {other}"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Linear => "linear",
            Mode::Normalized => "normalized",
        })
    }
}

/// Run parameters shared by every trajectory of an ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub nu: f64,
    pub horizon: f64,
    pub mode: Mode,
    pub sample_times: Vec<f64>,
    pub trajectories: usize,
    pub seed: u64,
    pub hbar: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(SimError::InvalidParameter(format!("intensity ν > 0 required, got {}", self.nu)));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(SimError::InvalidParameter(format!("horizon T >= 0 required, got {}", self.horizon)));
        }
        if !(self.hbar > 0.0) {
            return Err(SimError::InvalidParameter(format!("ħ > 0 required, got {}", self.hbar)));
        }
        if self.trajectories == 0 {
            return Err(SimError::InvalidParameter("trajectory count >= 1 required".into()));
        }
        for (i, &t) in self.sample_times.iter().enumerate() {
            if !(0.0..=self.horizon).contains(&t) {
                return Err(SimError::InvalidParameter(format!("sample time {t} outside [0, T = {}]", self.horizon)));
            }
            if i > 0 && t <= self.sample_times[i - 1] {
                return Err(SimError::UnorderedEvents(i));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub t: f64,
    pub y: f64,
    /// Meter grid index of `y`.
    pub index: usize,
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub index: u64,
    pub nu: f64,
    pub horizon: f64,
    pub mode: Mode,
    pub events: Vec<Event>,
    /// States at the requested sample times; events at exactly a sample time
    /// are applied after the snapshot.
    pub snapshots: Vec<(f64, WaveFunction)>,
    /// `‖χ(t)‖²` at the sample times.
    pub weight_path: Vec<f64>,
    /// State at the horizon.
    pub final_state: WaveFunction,
}

/// Independent stream for trajectory `index` of a run seeded with `master`.
pub fn trajectory_rng(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// Event times on `[0, T)` with exponential(ν) gaps.
pub fn sample_poisson_times(nu: f64, horizon: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if !(nu > 0.0) {
        return Err(SimError::InvalidParameter(format!("intensity ν > 0 required, got {nu}")));
    }
    let exp = Exp::new(nu).map_err(|e| SimError::InvalidParameter(e.to_string()))?;
    let mut times = Vec::new();
    let mut t = 0.0;
    loop {
        t += exp.sample(rng);
        if t >= horizon {
            return Ok(times);
        }
        times.push(t);
    }
}

/// Meter index drawn from the input law `|f₀|² h`.
pub fn sample_input_index(kernel: &ReductionKernel, rng: &mut impl Rng) -> usize {
    let cum = kernel.packet().mu_cumulative();
    let u = rng.random::<f64>() * cum[cum.len() - 1];
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

/// Meter index drawn from the output law `‖G(y)χ‖² |f₀(y)|² h` of a state.
pub fn sample_output_index(kernel: &ReductionKernel, chi: &WaveFunction, rng: &mut impl Rng) -> Result<usize> {
    kernel.sample_index(&chi.site_weights(), rng.random::<f64>())
}

/// Reading drawn from the output law of a normalized state.
pub fn sample_outcome(kernel: &ReductionKernel, chi: &WaveFunction, rng: &mut impl Rng) -> Result<f64> {
    chi.require_normalized(1e-8)?;
    Ok(kernel.meter().point(sample_output_index(kernel, chi, rng)?))
}

struct Walk {
    events: Vec<Event>,
    snapshots: Vec<(f64, WaveFunction)>,
    final_state: WaveFunction,
}

/// Piecewise evolution: exact propagation between events, a kick at each
/// event time, snapshots at the sample times. `choose` picks the meter index
/// of the `n`-th event from the pre-kick state.
#[allow(clippy::too_many_arguments)]
fn walk(
    h: &DenseOperator,
    kernel: &ReductionKernel,
    eta: &WaveFunction,
    times: &[f64],
    sample_times: &[f64],
    horizon: f64,
    mode: Mode,
    hbar: f64,
    mut choose: impl FnMut(usize, &WaveFunction) -> Result<usize>,
) -> Result<Walk> {
    if h.dim() != eta.dim() {
        return Err(SimError::DimensionMismatch { expected: eta.dim(), found: h.dim() });
    }
    let spec = h.spectrum()?;
    let mut state = eta.clone();
    let mut now = 0.0;
    let mut events = Vec::with_capacity(times.len());
    let mut snapshots = Vec::with_capacity(sample_times.len());
    let (mut ie, mut is) = (0, 0);
    let advance = |state: &WaveFunction, dt: f64| -> Result<WaveFunction> {
        if dt == 0.0 {
            Ok(state.clone())
        } else {
            state.with_amplitudes(spec.propagate(state.amplitudes(), dt, hbar))
        }
    };
    while ie < times.len() || is < sample_times.len() {
        let take_sample = is < sample_times.len() && (ie >= times.len() || sample_times[is] <= times[ie]);
        if take_sample {
            let t = sample_times[is];
            state = advance(&state, t - now)?;
            now = t;
            snapshots.push((t, state.clone()));
            is += 1;
        } else {
            let t = times[ie];
            state = advance(&state, t - now)?;
            now = t;
            let index = choose(ie, &state)?;
            let chi = state.with_amplitudes(kicked(kernel, &state, index)?)?;
            state = match mode {
                Mode::Linear => chi,
                Mode::Normalized => chi.normalized().map_err(|_| SimError::ZeroLikelihood)?,
            };
            events.push(Event { t, y: kernel.meter().point(index), index });
            ie += 1;
        }
    }
    let final_state = advance(&state, horizon - now)?;
    Ok(Walk { events, snapshots, final_state })
}

/// One trajectory on the stream `trajectory_rng(config.seed, index)`.
pub fn run_trajectory(
    config: &SimConfig,
    h: &DenseOperator,
    kernel: &ReductionKernel,
    eta: &WaveFunction,
    index: u64,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    eta.require_normalized(1e-8)?;
    let mut rng = trajectory_rng(config.seed, index);
    let times = sample_poisson_times(config.nu, config.horizon, &mut rng)?;
    let w = match config.mode {
        Mode::Linear => {
            let indices: Vec<usize> = times.iter().map(|_| sample_input_index(kernel, &mut rng)).collect();
            walk(h, kernel, eta, &times, &config.sample_times, config.horizon, Mode::Linear, config.hbar, |n, _| {
                Ok(indices[n])
            })?
        }
        Mode::Normalized => walk(
            h,
            kernel,
            eta,
            &times,
            &config.sample_times,
            config.horizon,
            Mode::Normalized,
            config.hbar,
            |_, s| sample_output_index(kernel, s, &mut rng),
        )?,
    };
    let weight_path = w.snapshots.iter().map(|(_, s)| s.norm_sqr()).collect();
    Ok(TrajectoryRecord {
        seed: config.seed,
        index,
        nu: config.nu,
        horizon: config.horizon,
        mode: config.mode,
        events: w.events,
        snapshots: w.snapshots,
        weight_path,
        final_state: w.final_state,
    })
}

/// Replays a fixed event list `(tₙ, yₙ)` up to time `t`. In linear mode this
/// is the chronological product `U(t - tₙ)G(yₙ)…G(y₁)U(t₁)η`; normalized mode
/// renormalizes after each kick exactly as the sampler does.
pub fn chronological_reduction(
    events: &[(f64, f64)],
    h: &DenseOperator,
    kernel: &ReductionKernel,
    eta: &WaveFunction,
    t: f64,
    mode: Mode,
    hbar: f64,
) -> Result<WaveFunction> {
    for i in 1..events.len() {
        if !(events[i].0 > events[i - 1].0) {
            return Err(SimError::UnorderedEvents(i));
        }
    }
    if let Some(first) = events.first() {
        if first.0 < 0.0 {
            return Err(SimError::TimeBeforeStart { t: first.0, t0: 0.0 });
        }
    }
    if t < 0.0 {
        return Err(SimError::TimeBeforeStart { t, t0: 0.0 });
    }
    let used: Vec<(f64, usize)> = events
        .iter()
        .filter(|e| e.0 < t)
        .map(|&(te, y)| Ok((te, kernel.meter().index_of(y)?)))
        .collect::<Result<_>>()?;
    let times: Vec<f64> = used.iter().map(|e| e.0).collect();
    let w = walk(h, kernel, eta, &times, &[], t, mode, hbar, |n, _| Ok(used[n].1))?;
    Ok(w.final_state)
}

/// Replays a fixed event list and returns the states at `sample_times`,
/// propagated along the same split points as the sampler, so a recorded
/// trajectory is reproduced bit for bit.
#[allow(clippy::too_many_arguments)]
pub fn replay_snapshots(
    events: &[Event],
    sample_times: &[f64],
    h: &DenseOperator,
    kernel: &ReductionKernel,
    eta: &WaveFunction,
    horizon: f64,
    mode: Mode,
    hbar: f64,
) -> Result<Vec<(f64, WaveFunction)>> {
    for i in 1..events.len() {
        if !(events[i].t > events[i - 1].t) {
            return Err(SimError::UnorderedEvents(i));
        }
    }
    let times: Vec<f64> = events.iter().map(|e| e.t).collect();
    let w = walk(h, kernel, eta, &times, sample_times, horizon, mode, hbar, |n, _| Ok(events[n].index))?;
    Ok(w.snapshots)
}

/// All trajectories of a run, in index order regardless of scheduling.
pub fn run_ensemble(
    config: &SimConfig,
    h: &DenseOperator,
    kernel: &ReductionKernel,
    eta: &WaveFunction,
) -> Result<Vec<TrajectoryRecord>> {
    config.validate()?;
    h.spectrum()?;
    (0..config.trajectories as u64).into_par_iter().map(|i| run_trajectory(config, h, kernel, eta, i)).collect()
}

/// Sample mean and standard error of the mean.
pub fn mean_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Ensemble statistics at one sample time. Position moments are taken in the
/// normalized state; in linear mode they are reweighted by `‖χ‖²`, which turns
/// input-law averages into output-law averages.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub t: f64,
    pub mean_x: f64,
    pub sem_x: f64,
    pub mean_var_x: f64,
    pub sem_var_x: f64,
    pub mean_weight: f64,
    pub sem_weight: f64,
}

pub fn summarize(records: &[TrajectoryRecord]) -> Result<Vec<SummaryRow>> {
    let first = records.first().ok_or(SimError::EmptyEnsemble)?;
    let mut rows = Vec::with_capacity(first.snapshots.len());
    for (s, (t, _)) in first.snapshots.iter().enumerate() {
        let mut xs = Vec::with_capacity(records.len());
        let mut vs = Vec::with_capacity(records.len());
        let mut ws = Vec::with_capacity(records.len());
        for r in records {
            let state = &r.snapshots[s].1;
            let w = state.norm_sqr();
            let (mean, var) = state.position_moments();
            let factor = if r.mode == Mode::Linear { w } else { 1.0 };
            xs.push(factor * mean);
            vs.push(factor * var);
            ws.push(w);
        }
        let (mean_x, sem_x) = mean_sem(&xs);
        let (mean_var_x, sem_var_x) = mean_sem(&vs);
        let (mean_weight, sem_weight) = mean_sem(&ws);
        rows.push(SummaryRow { t: *t, mean_x, sem_x, mean_var_x, sem_var_x, mean_weight, sem_weight });
    }
    Ok(rows)
}
