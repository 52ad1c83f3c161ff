//! Identical particles: each scattering hits one of `M` particles with an
//! unobservable label, so the observed state is the label average
//! `ρ ↦ (1/M) Σ_k G(k,y) ρ G(k,y)†`. Events arrive at the total rate `Mν`.

use nalgebra::SymmetricEigen;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Result, SimError};
use crate::jump::{sample_input_index, sample_poisson_times, trajectory_rng, Event, Mode, SimConfig};
use crate::lattice::{kron_embed, CMatrix, CVector, DenseOperator, LatticeGrid, WaveFunction, C64, MAX_DIM};
use crate::meter::ReductionKernel;

/// Eigenvalues below `-EIGEN_CLAMP · max(1, Tr ρ)` are rejected; smaller
/// negatives are treated as 0.
pub const EIGEN_CLAMP: f64 = 1e-10;

/// Density operator on the `M`-particle tensor grid in the orthonormal site
/// basis, so `ρ = vv†` with `v = ψ a^{M/2}` for a pure state and `Tr ρ = ‖ψ‖²`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    grid: LatticeGrid,
    particles: usize,
    matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(grid: LatticeGrid, particles: usize, matrix: CMatrix) -> Result<Self> {
        let dim = grid.tensor_dim(particles)?;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(SimError::DimensionMismatch { expected: dim, found: matrix.nrows() });
        }
        let scale = matrix.iter().map(|z| z.norm()).fold(1.0f64, f64::max);
        let dev = crate::lattice::hermiticity_defect(&matrix);
        if dev > 1e-12 * scale {
            return Err(SimError::NotHermitian(dev));
        }
        Ok(Self { grid, particles, matrix })
    }

    pub fn from_pure(psi: &WaveFunction) -> Self {
        let v = psi.amplitudes() * C64::new(psi.cell_measure().sqrt(), 0.0);
        let matrix = &v * v.adjoint();
        Self { grid: psi.grid().clone(), particles: psi.particles(), matrix }
    }

    pub fn grid(&self) -> &LatticeGrid {
        &self.grid
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn normalized(&self) -> Result<Self> {
        let tr = self.trace();
        if !(tr > 0.0) {
            return Err(SimError::ZeroLikelihood);
        }
        Ok(Self { matrix: &self.matrix / C64::new(tr, 0.0), ..self.clone() })
    }

    pub fn expectation(&self, x: &CMatrix) -> C64 {
        (x * &self.matrix).trace()
    }

    /// Eigenvalues after the clamp, or an error if one is clearly negative.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let eig = SymmetricEigen::new(self.matrix.clone());
        let mut out = Vec::with_capacity(self.dim());
        let tol = EIGEN_CLAMP * self.trace().max(1.0);
        for &l in eig.eigenvalues.iter() {
            if l < -tol {
                return Err(SimError::NotPositive(l));
            }
            out.push(l.max(0.0));
        }
        Ok(out)
    }

    /// Averaged one-particle site occupation `(1/M) Σ_k Σ_{I: i_k = j} ρ_II`.
    pub fn site_marginal(&self) -> Vec<f64> {
        let n = self.grid.n_sites();
        let mut w = vec![0.0; n];
        let m = self.particles as f64;
        for idx in 0..self.dim() {
            let p = self.matrix[(idx, idx)].re;
            for k in 0..self.particles {
                w[self.grid.site_of(idx, k, self.particles)] += p / m;
            }
        }
        w
    }

    /// Mean and variance of the one-particle position marginal.
    pub fn position_moments(&self) -> (f64, f64) {
        let w = self.site_marginal();
        let total: f64 = w.iter().sum();
        let xs = self.grid.positions();
        let mean = w.iter().zip(&xs).map(|(p, x)| p * x).sum::<f64>() / total;
        let second = w.iter().zip(&xs).map(|(p, x)| p * x * x).sum::<f64>() / total;
        (mean, second - mean * mean)
    }
}

/// `I^{⊗(k-1)} ⊗ op ⊗ I^{⊗(M-k)}` for a 1-based label `k`.
pub fn embed_single(op: &DenseOperator, k: usize, particles: usize) -> Result<DenseOperator> {
    if k == 0 || k > particles {
        return Err(SimError::InvalidParameter(format!("label k in 1..={particles} required, got {k}")));
    }
    let mut dim: usize = 1;
    for _ in 0..particles {
        dim = dim.saturating_mul(op.dim());
        if dim > MAX_DIM {
            return Err(SimError::Capacity { dim, limit: MAX_DIM });
        }
    }
    DenseOperator::new(kron_embed(op.matrix(), k - 1, particles), op.is_hermitian())
}

/// Diagonal of `G(k, y_i)` on the tensor grid, one vector per particle.
fn kick_diagonals(kernel: &ReductionKernel, grid: &LatticeGrid, particles: usize, i: usize) -> Vec<Vec<C64>> {
    let dim = grid.n_sites().pow(particles as u32);
    (0..particles)
        .map(|k| (0..dim).map(|idx| kernel.g(grid.site_of(idx, k, particles), i)).collect())
        .collect()
}

fn check_kernel(rho: &DensityMatrix, kernel: &ReductionKernel) -> Result<()> {
    if kernel.n_sites() != rho.grid.n_sites() {
        return Err(SimError::DimensionMismatch { expected: rho.grid.n_sites(), found: kernel.n_sites() });
    }
    Ok(())
}

/// Label-averaged kick `(1/M) Σ_k G(k,y_i) ρ G(k,y_i)†` at meter index `i`.
pub fn mixing_kick_index(rho: &DensityMatrix, kernel: &ReductionKernel, i: usize) -> Result<DensityMatrix> {
    check_kernel(rho, kernel)?;
    let d = kick_diagonals(kernel, &rho.grid, rho.particles, i);
    let m = rho.particles as f64;
    let dim = rho.dim();
    let out = CMatrix::from_fn(dim, dim, |r, c| {
        let s: C64 = d.iter().map(|dk| dk[r] * dk[c].conj()).sum();
        rho.matrix[(r, c)] * s / m
    });
    Ok(DensityMatrix { matrix: out, ..rho.clone() })
}

pub fn mixing_kick(rho: &DensityMatrix, kernel: &ReductionKernel, y: f64) -> Result<DensityMatrix> {
    mixing_kick_index(rho, kernel, kernel.meter().index_of(y)?)
}

/// Single-label kick `G(k,y_i) ρ G(k,y_i)†` for a 1-based label.
pub fn labeled_kick_index(rho: &DensityMatrix, kernel: &ReductionKernel, k: usize, i: usize) -> Result<DensityMatrix> {
    check_kernel(rho, kernel)?;
    if k == 0 || k > rho.particles {
        return Err(SimError::InvalidParameter(format!("label k in 1..={} required, got {k}", rho.particles)));
    }
    let dim = rho.dim();
    let d: Vec<C64> = (0..dim).map(|idx| kernel.g(rho.grid.site_of(idx, k - 1, rho.particles), i)).collect();
    let out = CMatrix::from_fn(dim, dim, |r, c| d[r] * rho.matrix[(r, c)] * d[c].conj());
    Ok(DensityMatrix { matrix: out, ..rho.clone() })
}

/// `Tr{E(y_i) ρ}` with `E(y) = (1/M) Σ_k G(k,y)†G(k,y)`.
pub fn effect_trace(rho: &DensityMatrix, kernel: &ReductionKernel, i: usize) -> f64 {
    let n = rho.grid.n_sites();
    let marg = rho.site_marginal();
    (0..n).map(|j| marg[j] * kernel.g(j, i).norm_sqr()).sum()
}

/// Averaged kick `ρ ↦ Σ_y (1/M) Σ_k G(k,y) ρ G(k,y)† |f₀(y)|² h`, realized as
/// a Schur product with the kernel overlap matrix.
pub fn nonselective_kick(rho: &DensityMatrix, kernel: &ReductionKernel) -> Result<DensityMatrix> {
    check_kernel(rho, kernel)?;
    let c = kernel.overlap_matrix();
    let (grid, m) = (&rho.grid, rho.particles);
    let dim = rho.dim();
    let digits: Vec<Vec<usize>> = (0..dim).map(|idx| grid.digits(idx, m)).collect();
    let out = CMatrix::from_fn(dim, dim, |r, col| {
        let s: C64 = (0..m).map(|k| c[(digits[r][k], digits[col][k])]).sum();
        rho.matrix[(r, col)] * s / m as f64
    });
    Ok(DensityMatrix { matrix: out, ..rho.clone() })
}

/// `-Tr ρ ln ρ` for a unit-trace density matrix.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    let tr = rho.trace();
    if (tr - 1.0).abs() > 1e-8 {
        return Err(SimError::NotNormalized(tr));
    }
    Ok(rho.eigenvalues()?.into_iter().filter(|&l| l > 0.0).map(|l| -l * l.ln()).sum())
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(m - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, m - 1);
            out.push(q);
        }
    }
    out
}

/// Index map of the particle permutation `perm`: particle `k` takes the site
/// of particle `perm[k]`.
fn permute_index(grid: &LatticeGrid, idx: usize, perm: &[usize]) -> usize {
    let m = perm.len();
    let d = grid.digits(idx, m);
    perm.iter().fold(0, |acc, &p| acc * grid.n_sites() + d[p])
}

/// Permutation operator on the tensor grid.
pub fn permutation_operator(grid: &LatticeGrid, perm: &[usize]) -> Result<CMatrix> {
    let dim = grid.tensor_dim(perm.len())?;
    let mut p = CMatrix::zeros(dim, dim);
    for idx in 0..dim {
        p[(permute_index(grid, idx, perm), idx)] = C64::new(1.0, 0.0);
    }
    Ok(p)
}

/// Largest `‖PρP† - ρ‖_max` over all particle permutations.
pub fn symmetry_defect(rho: &DensityMatrix) -> Result<f64> {
    let mut dev = 0.0f64;
    for perm in permutations(rho.particles) {
        let p = permutation_operator(&rho.grid, &perm)?;
        dev = dev.max((&p * &rho.matrix * p.adjoint() - &rho.matrix).camax());
    }
    Ok(dev)
}

/// Bosonic projection `(1/M!) Σ_π P_π ψ`, renormalized.
pub fn symmetrize(psi: &WaveFunction) -> Result<WaveFunction> {
    let grid = psi.grid();
    let m = psi.particles();
    let perms = permutations(m);
    let mut out = CVector::zeros(psi.dim());
    for perm in &perms {
        for (idx, z) in psi.amplitudes().iter().enumerate() {
            out[permute_index(grid, idx, perm)] += z;
        }
    }
    out /= C64::new(perms.len() as f64, 0.0);
    let sym = psi.with_amplitudes(out)?;
    if sym.norm() < 1e-12 {
        return Err(SimError::ZeroSymmetric);
    }
    sym.normalized()
}

fn conjugate(u: &CMatrix, rho: &DensityMatrix) -> DensityMatrix {
    DensityMatrix { matrix: u * &rho.matrix * u.adjoint(), ..rho.clone() }
}

#[derive(Clone, Debug)]
pub struct DensityRecord {
    pub seed: u64,
    pub index: u64,
    pub mode: Mode,
    /// Observable record only; labels are never sampled.
    pub events: Vec<Event>,
    pub snapshots: Vec<(f64, DensityMatrix)>,
    /// `Tr ρ` at the sample times.
    pub trace_weights: Vec<f64>,
    pub final_state: DensityMatrix,
}

/// One density trajectory with events at rate `Mν` on the stream
/// `trajectory_rng(config.seed, index)`, using the same draw order as the
/// single-particle sampler.
pub fn run_density_trajectory(
    config: &SimConfig,
    h: &DenseOperator,
    kernel: &ReductionKernel,
    rho0: &DensityMatrix,
    index: u64,
) -> Result<DensityRecord> {
    config.validate()?;
    if (rho0.trace() - 1.0).abs() > 1e-8 {
        return Err(SimError::NotNormalized(rho0.trace()));
    }
    if h.dim() != rho0.dim() {
        return Err(SimError::DimensionMismatch { expected: rho0.dim(), found: h.dim() });
    }
    let spec = h.spectrum()?;
    let mut rng = trajectory_rng(config.seed, index);
    let times = sample_poisson_times(config.nu * rho0.particles as f64, config.horizon, &mut rng)?;
    let preset: Vec<usize> = match config.mode {
        Mode::Linear => times.iter().map(|_| sample_input_index(kernel, &mut rng)).collect(),
        Mode::Normalized => Vec::new(),
    };
    let mut rho = rho0.clone();
    let mut now = 0.0;
    let mut events = Vec::with_capacity(times.len());
    let mut snapshots = Vec::with_capacity(config.sample_times.len());
    let (mut ie, mut is) = (0, 0);
    let samples = &config.sample_times;
    let advance = |rho: &DensityMatrix, dt: f64| {
        if dt == 0.0 {
            rho.clone()
        } else {
            conjugate(&spec.unitary(dt, config.hbar), rho)
        }
    };
    while ie < times.len() || is < samples.len() {
        if is < samples.len() && (ie >= times.len() || samples[is] <= times[ie]) {
            rho = advance(&rho, samples[is] - now);
            now = samples[is];
            snapshots.push((now, rho.clone()));
            is += 1;
        } else {
            rho = advance(&rho, times[ie] - now);
            now = times[ie];
            let i = match config.mode {
                Mode::Linear => preset[ie],
                Mode::Normalized => kernel.sample_index(&rho.site_marginal(), rng.random::<f64>())?,
            };
            rho = mixing_kick_index(&rho, kernel, i)?;
            if config.mode == Mode::Normalized {
                rho = rho.normalized()?;
            }
            events.push(Event { t: now, y: kernel.meter().point(i), index: i });
            ie += 1;
        }
    }
    let final_state = advance(&rho, config.horizon - now);
    let trace_weights = snapshots.iter().map(|(_, r)| r.trace()).collect();
    Ok(DensityRecord { seed: config.seed, index, mode: config.mode, events, snapshots, trace_weights, final_state })
}

pub fn run_density_ensemble(
    config: &SimConfig,
    h: &DenseOperator,
    kernel: &ReductionKernel,
    rho0: &DensityMatrix,
) -> Result<Vec<DensityRecord>> {
    config.validate()?;
    h.spectrum()?;
    (0..config.trajectories as u64).into_par_iter().map(|i| run_density_trajectory(config, h, kernel, rho0, i)).collect()
}

/// A pure-state trajectory with its hidden particle labels.
#[derive(Clone, Debug)]
pub struct LabeledTrajectoryRecord {
    pub events: Vec<Event>,
    /// 1-based particle label of each event.
    pub labels: Vec<usize>,
    pub final_state: WaveFunction,
}

/// Pure linear evolution `U(t - tₙ) G(kₙ, yₙ) … G(k₁, y₁) U(t₁) η` for given
/// labels and events.
pub fn labeled_evolution(
    events: &[(f64, f64)],
    labels: &[usize],
    h: &DenseOperator,
    kernel: &ReductionKernel,
    eta: &WaveFunction,
    t: f64,
    hbar: f64,
) -> Result<LabeledTrajectoryRecord> {
    if labels.len() != events.len() {
        return Err(SimError::DimensionMismatch { expected: events.len(), found: labels.len() });
    }
    for i in 1..events.len() {
        if !(events[i].0 > events[i - 1].0) {
            return Err(SimError::UnorderedEvents(i));
        }
    }
    let m = eta.particles();
    let spec = h.spectrum()?;
    let mut v = eta.amplitudes().clone();
    let mut now = 0.0;
    let mut recorded = Vec::new();
    for (&(te, y), &k) in events.iter().zip(labels) {
        if te >= t {
            break;
        }
        if k == 0 || k > m {
            return Err(SimError::InvalidParameter(format!("label k in 1..={m} required, got {k}")));
        }
        v = spec.propagate(&v, te - now, hbar);
        now = te;
        let i = kernel.meter().index_of(y)?;
        kernel.apply_in_place(v.as_mut_slice(), i, k - 1, m);
        recorded.push(Event { t: te, y: kernel.meter().point(i), index: i });
    }
    v = spec.propagate(&v, t - now, hbar);
    let n = recorded.len();
    Ok(LabeledTrajectoryRecord { events: recorded, labels: labels[..n].to_vec(), final_state: eta.with_amplitudes(v)? })
}

/// Linear-mode labeled trajectory: times at rate `Mν`, readings from `|f₀|²`,
/// labels uniform on `1..=M`.
pub fn sample_labeled_trajectory(
    config: &SimConfig,
    h: &DenseOperator,
    kernel: &ReductionKernel,
    eta: &WaveFunction,
    index: u64,
) -> Result<LabeledTrajectoryRecord> {
    config.validate()?;
    let m = eta.particles();
    let mut rng = trajectory_rng(config.seed, index);
    let times = sample_poisson_times(config.nu * m as f64, config.horizon, &mut rng)?;
    let mut events = Vec::with_capacity(times.len());
    let mut labels = Vec::with_capacity(times.len());
    for t in times {
        let i = sample_input_index(kernel, &mut rng);
        events.push((t, kernel.meter().point(i)));
        labels.push(rng.random_range(1..=m));
    }
    labeled_evolution(&events, &labels, h, kernel, eta, config.horizon, config.hbar)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalExpectationReport {
    pub assignments: usize,
    pub max_deviation: f64,
}

/// Compares the label average `M^{-n} Σ_labels F η η† F†` over all `M^n`
/// assignments with iterated mixing kicks interleaved with free evolution.
pub fn conditional_expectation_check(
    h: &DenseOperator,
    kernel: &ReductionKernel,
    eta: &WaveFunction,
    events: &[(f64, f64)],
    t: f64,
    hbar: f64,
) -> Result<ConditionalExpectationReport> {
    let m = eta.particles();
    let n = events.iter().filter(|e| e.0 < t).count();
    let assignments = m.checked_pow(n as u32).filter(|&a| a <= 64).ok_or(SimError::Capacity {
        dim: m.saturating_pow(n as u32),
        limit: 64,
    })?;
    for i in 1..events.len() {
        if !(events[i].0 > events[i - 1].0) {
            return Err(SimError::UnorderedEvents(i));
        }
    }
    let used: Vec<(f64, usize)> = events
        .iter()
        .filter(|e| e.0 < t)
        .map(|&(te, y)| Ok((te, kernel.meter().index_of(y)?)))
        .collect::<Result<_>>()?;
    let spec = h.spectrum()?;
    let steps: Vec<CMatrix> = used
        .iter()
        .scan(0.0, |now, &(te, _)| {
            let u = spec.unitary(te - *now, hbar);
            *now = te;
            Some(u)
        })
        .collect();
    let last = spec.unitary(t - used.last().map_or(0.0, |e| e.0), hbar);
    let rho0 = DensityMatrix::from_pure(eta);

    // Each assignment is one hidden-label history F_labels η η† F_labels†.
    let dim = eta.dim();
    let mut avg = CMatrix::zeros(dim, dim);
    for a in 0..assignments {
        let mut rho = rho0.clone();
        for (e, &(_, i)) in used.iter().enumerate() {
            rho = conjugate(&steps[e], &rho);
            rho = labeled_kick_index(&rho, kernel, (a / m.pow(e as u32)) % m + 1, i)?;
        }
        avg += conjugate(&last, &rho).matrix;
    }
    avg /= C64::new(assignments as f64, 0.0);

    let mut rho = rho0;
    for (e, &(_, i)) in used.iter().enumerate() {
        rho = conjugate(&steps[e], &rho);
        rho = mixing_kick_index(&rho, kernel, i)?;
    }
    rho = conjugate(&last, &rho);
    Ok(ConditionalExpectationReport { assignments, max_deviation: (avg - rho.matrix).camax() })
}
