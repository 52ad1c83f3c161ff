//! Deterministic master equations, a fixed-step RK4 integrator, ensemble
//! averaging with error bars and the trace distance used to compare them.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Result, SimError};
use crate::lattice::{CMatrix, DenseOperator, LatticeGrid, C64};
use crate::meter::ReductionKernel;

/// A linear map on density matrices.
pub trait Generator: Sync {
    fn apply(&self, rho: &CMatrix) -> CMatrix;
}

impl<F: Fn(&CMatrix) -> CMatrix + Sync> Generator for F {
    fn apply(&self, rho: &CMatrix) -> CMatrix {
        self(rho)
    }
}

fn commutator_term(h: &CMatrix, rho: &CMatrix, hbar: f64) -> CMatrix {
    (h * rho - rho * h) * C64::new(0.0, -1.0 / hbar)
}

/// `dρ/dt = -(i/ħ)[H,ρ] + Mν(Σ_y Ψ[ρ](y)|f₀(y)|²h - ρ)` where `Ψ` is the
/// label-averaged kick. Because every `G(k,y)` is diagonal, the averaged kick
/// is the Schur product with `(1/M) Σ_k C(i_k, j_k)` for the kernel overlap `C`.
#[derive(Clone, Debug)]
pub struct JumpGenerator {
    h: CMatrix,
    multiplier: CMatrix,
    rate: f64,
    hbar: f64,
}

impl JumpGenerator {
    pub fn new(
        h: &DenseOperator,
        kernel: &ReductionKernel,
        grid: &LatticeGrid,
        nu: f64,
        particles: usize,
        hbar: f64,
    ) -> Result<Self> {
        let dim = grid.tensor_dim(particles)?;
        if h.dim() != dim || kernel.n_sites() != grid.n_sites() {
            return Err(SimError::DimensionMismatch { expected: dim, found: h.dim() });
        }
        if !(nu >= 0.0) {
            return Err(SimError::InvalidParameter(format!("intensity ν >= 0 required, got {nu}")));
        }
        let c = kernel.overlap_matrix();
        let digits: Vec<Vec<usize>> = (0..dim).map(|i| grid.digits(i, particles)).collect();
        let multiplier = CMatrix::from_fn(dim, dim, |r, col| {
            (0..particles).map(|k| c[(digits[r][k], digits[col][k])]).sum::<C64>() / particles as f64
        });
        Ok(Self { h: h.matrix().clone(), multiplier, rate: nu * particles as f64, hbar })
    }

    /// The Schur multiplier of the averaged kick.
    pub fn multiplier(&self) -> &CMatrix {
        &self.multiplier
    }
}

impl Generator for JumpGenerator {
    fn apply(&self, rho: &CMatrix) -> CMatrix {
        let mut out = commutator_term(&self.h, rho, self.hbar);
        if self.rate > 0.0 {
            out += (self.multiplier.component_mul(rho) - rho) * C64::new(self.rate, 0.0);
        }
        out
    }
}

pub fn jump_master_rhs(rho: &CMatrix, generator: &JumpGenerator) -> CMatrix {
    generator.apply(rho)
}

/// `dρ/dt = -(i/ħ)[H,ρ] + (γ/ħ)² σ² Σ_k (R_k ρ R_k - ½{R_k², ρ})`, evaluated
/// with dense products.
#[derive(Clone, Debug)]
pub struct DiffusiveGenerator {
    h: CMatrix,
    r: Vec<CMatrix>,
    r2: Vec<CMatrix>,
    strength: f64,
    hbar: f64,
}

impl DiffusiveGenerator {
    /// `r` holds the coupling operator of each particle on the full space.
    pub fn new(h: &DenseOperator, r: Vec<CMatrix>, gamma: f64, sigma2: f64, hbar: f64) -> Result<Self> {
        if r.iter().any(|m| m.nrows() != h.dim()) {
            return Err(SimError::DimensionMismatch { expected: h.dim(), found: r[0].nrows() });
        }
        let r2 = r.iter().map(|m| m * m).collect();
        Ok(Self { h: h.matrix().clone(), r, r2, strength: (gamma / hbar).powi(2) * sigma2, hbar })
    }
}

impl Generator for DiffusiveGenerator {
    fn apply(&self, rho: &CMatrix) -> CMatrix {
        let mut out = commutator_term(&self.h, rho, self.hbar);
        if self.strength != 0.0 {
            let s = C64::new(self.strength, 0.0);
            for (r, r2) in self.r.iter().zip(&self.r2) {
                out += (r * rho * r - (r2 * rho + rho * r2) * C64::new(0.5, 0.0)) * s;
            }
        }
        out
    }
}

pub fn diffusive_master_rhs(rho: &CMatrix, generator: &DiffusiveGenerator) -> CMatrix {
    generator.apply(rho)
}

fn rk4_step(g: &dyn Generator, rho: &CMatrix, dt: f64) -> CMatrix {
    let half = C64::new(0.5 * dt, 0.0);
    let k1 = g.apply(rho);
    let k2 = g.apply(&(rho + &k1 * half));
    let k3 = g.apply(&(rho + &k2 * half));
    let k4 = g.apply(&(rho + &k3 * C64::new(dt, 0.0)));
    rho + (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0)
}

fn rk4_run(g: &dyn Generator, rho0: &CMatrix, t: f64, dt: f64) -> CMatrix {
    if t <= 0.0 {
        return rho0.clone();
    }
    let steps = (t / dt).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    (0..steps).fold(rho0.clone(), |rho, _| rk4_step(g, &rho, h))
}

#[derive(Clone, Debug)]
pub struct OdeSolution {
    /// Result with step `dt`.
    pub rho: CMatrix,
    /// `‖ρ_dt - ρ_{dt/2}‖_max`.
    pub error_estimate: f64,
    pub steps: usize,
}

/// Classical RK4 over `[0, T]` with a step-halving self-error estimate. When
/// `tolerance` is given, an estimate above it is an error.
pub fn ode_integrate(
    g: &dyn Generator,
    rho0: &CMatrix,
    t: f64,
    dt: f64,
    tolerance: Option<f64>,
) -> Result<OdeSolution> {
    if !(dt > 0.0) {
        return Err(SimError::InvalidParameter(format!("ODE step dt > 0 required, got {dt}")));
    }
    if t < 0.0 {
        return Err(SimError::TimeBeforeStart { t, t0: 0.0 });
    }
    let rho = rk4_run(g, rho0, t, dt);
    let fine = rk4_run(g, rho0, t, 0.5 * dt);
    let error_estimate = (&rho - fine).camax();
    if let Some(tol) = tolerance {
        if error_estimate > tol {
            return Err(SimError::StepTooLarge { estimate: error_estimate, tolerance: tol });
        }
    }
    Ok(OdeSolution { rho, error_estimate, steps: if t > 0.0 { (t / dt).ceil().max(1.0) as usize } else { 0 } })
}

/// RK4 solution sampled at increasing `times`, integrating piecewise.
pub fn ode_samples(g: &dyn Generator, rho0: &CMatrix, times: &[f64], dt: f64) -> Result<Vec<CMatrix>> {
    let mut out = Vec::with_capacity(times.len());
    let mut rho = rho0.clone();
    let mut now = 0.0;
    for (i, &t) in times.iter().enumerate() {
        if t < now {
            return Err(SimError::UnorderedEvents(i));
        }
        rho = rk4_run(g, &rho, t - now, dt);
        now = t;
        out.push(rho.clone());
    }
    Ok(out)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// `½‖ρ₁ - ρ₂‖₁` for unit-trace Hermitian matrices.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(SimError::DimensionMismatch { expected: a.nrows(), found: b.nrows() });
    }
    for m in [a, b] {
        let tr = m.trace().re;
        if (tr - 1.0).abs() > 1e-6 {
            return Err(SimError::TraceMismatch(tr - 1.0));
        }
    }
    let d = a - b;
    Ok(0.5 * SymmetricEigen::new(d).eigenvalues.iter().map(|l| l.abs()).sum::<f64>())
}

#[derive(Clone, Debug)]
pub struct EnsembleAverage {
    pub mean: CMatrix,
    /// Per-entry standard error of the mean.
    pub sem: DMatrix<f64>,
    pub count: usize,
}

/// Average of per-trajectory matrices. With `weights`, each sample is scaled
/// by its weight and the result is divided by the mean weight, so likelihood
/// weighted samples of unit-trace states average to a unit-trace estimate.
pub fn ensemble_average(samples: &[CMatrix], weights: Option<&[f64]>) -> Result<EnsembleAverage> {
    let first = samples.first().ok_or(SimError::EmptyEnsemble)?;
    if let Some(w) = weights {
        if w.len() != samples.len() {
            return Err(SimError::DimensionMismatch { expected: samples.len(), found: w.len() });
        }
    }
    let n = samples.len();
    let (r, c) = first.shape();
    let wbar = weights.map_or(1.0, |w| w.iter().sum::<f64>() / n as f64);
    if !(wbar > 0.0) {
        return Err(SimError::ZeroLikelihood);
    }
    let scale = |i: usize| weights.map_or(1.0, |w| w[i]) / wbar;
    let mut mean = CMatrix::zeros(r, c);
    for (i, s) in samples.iter().enumerate() {
        mean += s * C64::new(scale(i), 0.0);
    }
    mean /= C64::new(n as f64, 0.0);
    let mut var = DMatrix::<f64>::zeros(r, c);
    if n > 1 {
        for (i, s) in samples.iter().enumerate() {
            let d = s * C64::new(scale(i), 0.0) - &mean;
            var += d.map(|z| z.norm_sqr());
        }
        var /= (n * (n - 1)) as f64;
    }
    Ok(EnsembleAverage { mean, sem: var.map(f64::sqrt), count: n })
}

/// Ensemble vs oracle comparison at a list of times.
#[derive(Clone, Debug)]
pub struct OracleReport {
    pub times: Vec<f64>,
    pub trace_distance: Vec<f64>,
    /// Largest per-entry SEM of the ensemble average at each time.
    pub sem: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    pub fn new(times: Vec<f64>, trace_distance: Vec<f64>, sem: Vec<f64>, tolerance: f64) -> Self {
        let pass = trace_distance.iter().all(|d| *d <= tolerance);
        Self { times, trace_distance, sem, tolerance, pass }
    }

    pub fn max_distance(&self) -> f64 {
        self.trace_distance.iter().cloned().fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_grid, hamiltonian, position_operator, Boundary, CVector, WaveFunction};
    use crate::meter::{gaussian_packet, povm_residual, reduction_kernel};
    use crate::mixing::DensityMatrix;
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    fn setup(n: usize, kappa: f64) -> (LatticeGrid, ReductionKernel, DenseOperator) {
        let g = build_grid(n, 0.25, Boundary::Dirichlet).unwrap();
        let p = Arc::new(gaussian_packet(8.0, 1.0 / 256.0, 0.0, 1.0).unwrap());
        let k = reduction_kernel(p, &position_operator(&g), kappa).unwrap();
        let v: Vec<f64> = g.positions().iter().map(|x| 0.5 * x * x).collect();
        let h = hamiltonian(&g, 1.0, &v, None, 1, 1.0).unwrap();
        (g, k, h)
    }

    fn random_rho(dim: usize, seed: u64) -> CMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = CMatrix::from_fn(dim, dim, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let m = &a * a.adjoint();
        let tr = m.trace();
        m / tr
    }

    #[test]
    fn zero_coupling_is_commutator_only() {
        let (g, k, h) = setup(8, 0.0);
        let gen = JumpGenerator::new(&h, &k, &g, 2.0, 1, 1.0).unwrap();
        let rho = random_rho(8, 1);
        let expect = commutator_term(h.matrix(), &rho, 1.0);
        assert!((gen.apply(&rho) - expect).camax() < 1e-14);
        let gen0 = JumpGenerator::new(&h, &crate::meter::reduction_kernel(k.packet().clone(), &position_operator(&g), 0.7).unwrap(), &g, 0.0, 1, 1.0).unwrap();
        assert!((gen0.apply(&rho) - commutator_term(h.matrix(), &rho, 1.0)).camax() < 1e-14);
    }

    #[test]
    fn jump_rhs_is_traceless() {
        let (g, k, h) = setup(8, 0.9);
        for m in [1usize, 2] {
            let hm = hamiltonian(&g, 1.0, &[0.0; 8], None, m, 1.0).unwrap();
            let gen = JumpGenerator::new(&hm, &k, &g, 3.0, m, 1.0).unwrap();
            let rho = random_rho(8usize.pow(m as u32), 2);
            let tr = jump_master_rhs(&rho, &gen).trace().norm();
            assert!(tr <= 1e-8 * 3.0 * m as f64 && tr <= povm_residual(&k) * 3.0 * m as f64 + 1e-13);
        }
        let _ = h;
    }

    #[test]
    fn diffusive_rhs_is_traceless_and_schur() {
        let (g, _, h) = setup(8, 0.3);
        let r = position_operator(&g).matrix().clone();
        let gen = DiffusiveGenerator::new(&h, vec![r], 0.7, std::f64::consts::FRAC_PI_2, 1.0).unwrap();
        let rho = random_rho(8, 3);
        let out = diffusive_master_rhs(&rho, &gen);
        assert!(out.trace().norm() < 1e-13);
        let xs = g.positions();
        let lind = out - commutator_term(h.matrix(), &rho, 1.0);
        for j in 0..8 {
            for l in 0..8 {
                let e = rho[(j, l)] * (-0.5 * 0.49 * std::f64::consts::FRAC_PI_2 * (xs[j] - xs[l]).powi(2));
                assert!((lind[(j, l)] - e).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn zero_rhs_keeps_state() {
        let rho = random_rho(4, 4);
        let zero = |r: &CMatrix| CMatrix::zeros(r.nrows(), r.ncols());
        let sol = ode_integrate(&zero, &rho, 1.0, 1e-3, None).unwrap();
        assert_eq!(sol.rho, rho);
    }

    #[test]
    fn liouville_matches_conjugation() {
        let (g, k, h) = setup(8, 0.3);
        let gen = JumpGenerator::new(&h, &k, &g, 0.0, 1, 1.0).unwrap();
        let psi = WaveFunction::gaussian(&g, 0.2, 0.4, 0.5, 1.0).unwrap();
        let rho0 = DensityMatrix::from_pure(&psi).matrix().clone();
        let sol = ode_integrate(&gen, &rho0, 1.0, 1e-3, Some(1e-8)).unwrap();
        let u = h.spectrum().unwrap().unitary(1.0, 1.0);
        assert!((sol.rho - &u * rho0 * u.adjoint()).camax() < 1e-8);
    }

    #[test]
    fn rk4_order_from_step_halving() {
        let (g, k, h) = setup(8, 0.5);
        let gen = JumpGenerator::new(&h, &k, &g, 2.0, 1, 1.0).unwrap();
        let rho0 = random_rho(8, 5);
        let a = ode_integrate(&gen, &rho0, 1.0, 0.04, None).unwrap();
        let b = ode_integrate(&gen, &rho0, 1.0, 0.02, None).unwrap();
        let ratio = a.error_estimate / b.error_estimate;
        assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}");
        let err = ode_integrate(&gen, &rho0, 1.0, 0.5, Some(1e-10)).unwrap_err();
        assert!(matches!(err, SimError::StepTooLarge { .. }));
    }

    #[test]
    fn oracle_solution_stays_positive() {
        let (g, k, h) = setup(8, 0.8);
        let gen = JumpGenerator::new(&h, &k, &g, 2.0, 1, 1.0).unwrap();
        let rho0 = DensityMatrix::from_pure(&WaveFunction::gaussian(&g, 0.0, 0.3, 0.0, 1.0).unwrap()).matrix().clone();
        let samples = ode_samples(&gen, &rho0, &[0.25, 0.5, 0.75, 1.0], 1e-3).unwrap();
        for s in samples {
            assert!(min_eigenvalue(&s) >= -1e-8);
            assert!((s.trace().re - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn trace_distance_cases() {
        let rho = random_rho(4, 6);
        assert!(trace_distance(&rho, &rho).unwrap().abs() < 1e-15);
        let mut a = CMatrix::zeros(2, 2);
        a[(0, 0)] = C64::new(1.0, 0.0);
        let mut b = CMatrix::zeros(2, 2);
        b[(1, 1)] = C64::new(1.0, 0.0);
        assert!((trace_distance(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        let c = CMatrix::from_diagonal(&CVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.4, 0.0)]));
        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![C64::new(0.5, 0.0), C64::new(0.5, 0.0)]));
        assert!((trace_distance(&c, &d).unwrap() - 0.1).abs() < 1e-15);
        let e = &d * C64::new(1.1, 0.0);
        assert!(matches!(trace_distance(&c, &e), Err(SimError::TraceMismatch(_))));
    }

    #[test]
    fn averaging_cases() {
        let rho = random_rho(4, 7);
        let avg = ensemble_average(&vec![rho.clone(); 5], None).unwrap();
        assert!((avg.mean - &rho).camax() < 1e-15);
        assert!(avg.sem.max() < 1e-15);
        assert!(matches!(ensemble_average(&[], None), Err(SimError::EmptyEnsemble)));
        let other = random_rho(4, 8);
        let w = ensemble_average(&[rho.clone(), other.clone()], Some(&[3.0, 1.0])).unwrap();
        let expect = (rho * C64::new(0.75, 0.0)) + other * C64::new(0.25, 0.0);
        assert!((w.mean - expect).camax() < 1e-15);
    }
}
