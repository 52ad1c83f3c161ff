//! Diffusive limits of the jump process: the mean-field Hamiltonian, the
//! linear stochastic Schrödinger equation driven by `dv`, its unitary
//! counterpart driven by `du`, the multiparticle density equation and the
//! convergence checks that tie them to the jump dynamics.
//!
//! State vectors here are in the orthonormal site basis, `v = ψ a^{M/2}`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::jump::trajectory_rng;
use crate::lattice::{CMatrix, CVector, DenseOperator, LatticeGrid, C64};
use crate::meter::{expansion_tables, reduction_kernel, ExpansionTables, PointerPacket};
use crate::oracle::{ode_integrate, trace_distance, DiffusiveGenerator, Generator, JumpGenerator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    /// Real momentum-type increment `du`, variance `σ² dt`.
    RealU,
    /// Complex increment `dv` with `E dv² = (f₀†L'L'f₀) dt`, `E|dv|² = (f₀†L'†L'f₀) dt`.
    ComplexV,
}

/// Second moments of the noise per unit time.
#[derive(Clone, Copy, Debug)]
pub struct NoiseMoments {
    /// `E dv dv / dt`.
    pub vv: C64,
    /// `E dv* dv / dt`.
    pub vv_abs: f64,
    /// `σ²`, so `E du² = σ² dt`.
    pub sigma2: f64,
}

impl NoiseMoments {
    pub fn from_tables(t: &ExpansionTables) -> Self {
        Self { vv: t.l1l1_mean, vv_abs: t.l1_abs_mean, sigma2: t.sigma2 }
    }
}

/// Draws increments with prescribed second moments from a stream of
/// standard normals: two per step for `dv`, one for `du`.
#[derive(Clone, Copy, Debug)]
pub struct NoiseSampler {
    kind: NoiseKind,
    // lower Cholesky factor of the (Re, Im) covariance, already times √(scale dt)
    l11: f64,
    l21: f64,
    l22: f64,
}

impl NoiseSampler {
    /// `scale` multiplies both second moments; `M` for the multiparticle density equation.
    pub fn new(m: &NoiseMoments, kind: NoiseKind, dt: f64, scale: f64) -> Self {
        match kind {
            NoiseKind::RealU => Self { kind, l11: (m.sigma2 * dt * scale).sqrt(), l21: 0.0, l22: 0.0 },
            NoiseKind::ComplexV => {
                let a = 0.5 * (m.vv_abs + m.vv.re) * dt * scale;
                let b = 0.5 * m.vv.im * dt * scale;
                let d = 0.5 * (m.vv_abs - m.vv.re) * dt * scale;
                let l11 = a.max(0.0).sqrt();
                let l21 = if l11 > 0.0 { b / l11 } else { 0.0 };
                let l22 = (d - l21 * l21).max(0.0).sqrt();
                Self { kind, l11, l21, l22 }
            }
        }
    }

    pub fn draw(&self, rng: &mut impl Rng) -> C64 {
        let x: f64 = rng.sample(StandardNormal);
        match self.kind {
            NoiseKind::RealU => C64::new(self.l11 * x, 0.0),
            NoiseKind::ComplexV => {
                let z: f64 = rng.sample(StandardNormal);
                C64::new(self.l11 * x, self.l21 * x + self.l22 * z)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct NoisePath {
    pub seed: u64,
    pub index: u64,
    pub kind: NoiseKind,
    pub dt: f64,
    pub increments: Vec<C64>,
}

pub fn wiener_increments(
    moments: &NoiseMoments,
    kind: NoiseKind,
    dt: f64,
    steps: usize,
    seed: u64,
    index: u64,
) -> Result<NoisePath> {
    if !(dt > 0.0) {
        return Err(SimError::InvalidParameter(format!("time step dt > 0 required, got {dt}")));
    }
    let sampler = NoiseSampler::new(moments, kind, dt, 1.0);
    let mut rng = trajectory_rng(seed, index);
    let increments = (0..steps).map(|_| sampler.draw(&mut rng)).collect();
    Ok(NoisePath { seed, index, kind, dt, increments })
}

/// `H - γ p₀ R`.
pub fn mean_field_hamiltonian(h: &DenseOperator, r: &DenseOperator, gamma: f64, p0: f64) -> Result<DenseOperator> {
    if h.dim() != r.dim() {
        return Err(SimError::DimensionMismatch { expected: h.dim(), found: r.dim() });
    }
    if !r.is_hermitian() {
        return Err(SimError::NotHermitian(r.hermiticity_defect()));
    }
    DenseOperator::hermitian(h.matrix() - r.matrix() * C64::new(gamma * p0, 0.0))
}

/// Everything the diffusive steps need, on the `M`-particle space.
#[derive(Clone, Debug)]
pub struct DiffusionParams {
    pub gamma: f64,
    pub sigma2: f64,
    pub p0: f64,
    pub kind: NoiseKind,
    pub dt: f64,
    pub hbar: f64,
    pub particles: usize,
    pub moments: NoiseMoments,
    h: CMatrix,
    /// Diagonal of `R(k)` on the product space, one per particle.
    r: Vec<Vec<f64>>,
    /// Diagonal of `(1/M) Σ_k R(k)`.
    r_bar: Vec<f64>,
    k: CMatrix,
}

impl DiffusionParams {
    /// `r` is the single-particle coupling operator and must be diagonal.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: &LatticeGrid,
        particles: usize,
        h: &DenseOperator,
        r: &DenseOperator,
        tables: &ExpansionTables,
        gamma: f64,
        kind: NoiseKind,
        dt: f64,
        hbar: f64,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(SimError::InvalidParameter(format!("time step dt > 0 required, got {dt}")));
        }
        if !(hbar > 0.0) {
            return Err(SimError::InvalidParameter(format!("ħ > 0 required, got {hbar}")));
        }
        let dim = grid.tensor_dim(particles)?;
        if h.dim() != dim {
            return Err(SimError::DimensionMismatch { expected: dim, found: h.dim() });
        }
        if r.dim() != grid.n_sites() {
            return Err(SimError::DimensionMismatch { expected: grid.n_sites(), found: r.dim() });
        }
        let single = r.real_diagonal()?;
        let r: Vec<Vec<f64>> = (0..particles)
            .map(|k| (0..dim).map(|i| single[grid.site_of(i, k, particles)]).collect())
            .collect();
        let r_bar = (0..dim).map(|i| r.iter().map(|rk| rk[i]).sum::<f64>() / particles as f64).collect();
        let damp = 0.5 * (gamma / hbar).powi(2) * tables.sigma2;
        let mut k = h.matrix() * C64::new(0.0, 1.0 / hbar);
        for i in 0..dim {
            k[(i, i)] += damp * r.iter().map(|rk| rk[i] * rk[i]).sum::<f64>();
        }
        Ok(Self {
            gamma,
            sigma2: tables.sigma2,
            p0: tables.p0,
            kind,
            dt,
            hbar,
            particles,
            moments: NoiseMoments::from_tables(tables),
            h: h.matrix().clone(),
            r,
            r_bar,
            k,
        })
    }

    pub fn k(&self) -> &CMatrix {
        &self.k
    }

    /// Replace `K`, checking that its Hermitian part is `½(γ/ħ)²σ² Σ_k R(k)²`.
    pub fn with_k(mut self, k: CMatrix) -> Result<Self> {
        if k.shape() != self.k.shape() {
            return Err(SimError::DimensionMismatch { expected: self.k.nrows(), found: k.nrows() });
        }
        let herm = (&k + k.adjoint()) * C64::new(0.5, 0.0);
        let want = (&self.k + self.k.adjoint()) * C64::new(0.5, 0.0);
        let defect = (herm - want).camax();
        if defect > 1e-12 * (1.0 + self.k.camax()) {
            return Err(SimError::NotHermitian(defect));
        }
        self.k = k;
        Ok(self)
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.h
    }

    /// `R(k)` as dense matrices on the product space.
    pub fn coupling_matrices(&self) -> Vec<CMatrix> {
        self.r
            .iter()
            .map(|d| CMatrix::from_diagonal(&CVector::from_iterator(d.len(), d.iter().map(|x| C64::new(*x, 0.0)))))
            .collect()
    }

    fn sampler(&self, scale: f64) -> NoiseSampler {
        NoiseSampler::new(&self.moments, self.kind, self.dt, scale)
    }

    fn steps_for(&self, horizon: f64) -> usize {
        (horizon / self.dt).round() as usize
    }
}

/// One Euler–Maruyama step of `dχ + Kχ dt = γ R χ dv`.
pub fn diffusive_sse_step(chi: &CVector, p: &DiffusionParams, dv: C64) -> CVector {
    let r = &p.r[0];
    let mut out = chi - (&p.k * chi) * C64::new(p.dt, 0.0);
    let g = dv * p.gamma;
    for (i, o) in out.iter_mut().enumerate() {
        *o += g * r[i] * chi[i];
    }
    out
}

/// One Heun step of `dψ + Kψ dt = (i/ħ) γ R ψ du`, taken in Stratonovich form
/// `ψ' = ψ + Aψ + ½A²ψ` with `A = -(i/ħ)H dt + i(γ/ħ) R du`. Returns the
/// renormalized state and the norm of `ψ'` before projection. One particle only.
pub fn unitary_diffusive_step(psi: &CVector, p: &DiffusionParams, du: f64) -> (CVector, f64) {
    let r = &p.r[0];
    let apply = |v: &CVector| {
        let mut a = (&p.h * v) * C64::new(0.0, -p.dt / p.hbar);
        let c = C64::new(0.0, p.gamma * du / p.hbar);
        for (i, o) in a.iter_mut().enumerate() {
            *o += c * r[i] * v[i];
        }
        a
    };
    let a1 = apply(psi);
    let a2 = apply(&a1);
    let out = psi + a1 + a2 * C64::new(0.5, 0.0);
    let norm = out.norm();
    (out / C64::new(norm, 0.0), norm)
}

/// One Euler–Maruyama step of
/// `dρ + (Kρ + ρK†)dt = (γ/ħ)² σ² Σ_k R(k) ρ R(k) dt + γ(dw R̄ρ + ρR̄ dw*)`,
/// where `R̄` is the particle-averaged coupling and `dw` carries `M` times the
/// second moments of `dv`. Returns the Hermitian part of the result and the
/// anti-Hermitian part that was removed.
pub fn diffusive_density_step(rho: &CMatrix, p: &DiffusionParams, dw: C64) -> (CMatrix, f64) {
    let dt = C64::new(p.dt, 0.0);
    let n = rho.nrows();
    let kr = &p.k * rho;
    let mut out = rho - (&kr + kr.adjoint()) * dt;
    let s = (p.gamma / p.hbar).powi(2) * p.sigma2 * p.dt;
    for c in 0..n {
        for r in 0..n {
            let sandwich: f64 = p.r.iter().map(|rk| rk[r] * rk[c]).sum();
            let noise = p.gamma * (dw * p.r_bar[r] + dw.conj() * p.r_bar[c]);
            out[(r, c)] += rho[(r, c)] * (s * sandwich + noise);
        }
    }
    let skew = (&out - out.adjoint()).camax() * 0.5;
    let herm = (&out + out.adjoint()) * C64::new(0.5, 0.0);
    (herm, skew)
}

fn sample_steps(times: &[f64], dt: f64, steps: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let n = (t / dt).round();
        if t < 0.0 || n as usize > steps {
            return Err(SimError::InvalidParameter(format!("sample time {t} outside [0, T]")));
        }
        if out.last().is_some_and(|&prev| prev > n as usize) {
            return Err(SimError::UnorderedEvents(i));
        }
        out.push(n as usize);
    }
    Ok(out)
}

/// Unnormalized linear SSE path sampled at given times.
#[derive(Clone, Debug)]
pub struct SsePath {
    pub index: u64,
    pub snapshots: Vec<CVector>,
}

pub fn run_sse_path(
    p: &DiffusionParams,
    chi0: &CVector,
    horizon: f64,
    sample_times: &[f64],
    seed: u64,
    index: u64,
) -> Result<SsePath> {
    if p.particles != 1 {
        return Err(SimError::InvalidParameter("the linear SSE runs on one particle".into()));
    }
    let steps = p.steps_for(horizon);
    let marks = sample_steps(sample_times, p.dt, steps)?;
    let sampler = p.sampler(1.0);
    let mut rng = trajectory_rng(seed, index);
    let mut chi = chi0.clone();
    let mut snapshots = Vec::with_capacity(marks.len());
    let mut next = 0;
    for n in 0..=steps {
        while next < marks.len() && marks[next] == n {
            snapshots.push(chi.clone());
            next += 1;
        }
        if n < steps {
            chi = diffusive_sse_step(&chi, p, sampler.draw(&mut rng));
        }
    }
    Ok(SsePath { index, snapshots })
}

#[derive(Clone, Debug)]
pub struct UnitaryPath {
    pub index: u64,
    pub final_state: CVector,
    /// `|Π_n ‖ψ'_n‖ - 1|`, the norm defect an unprojected run would show.
    pub defect: f64,
}

pub fn run_unitary_path(p: &DiffusionParams, psi0: &CVector, horizon: f64, seed: u64, index: u64) -> Result<UnitaryPath> {
    if p.kind != NoiseKind::RealU {
        return Err(SimError::InvalidParameter("the unitary equation is driven by du".into()));
    }
    if p.particles != 1 {
        return Err(SimError::InvalidParameter("the unitary diffusion runs on one particle".into()));
    }
    let steps = p.steps_for(horizon);
    let sampler = p.sampler(1.0);
    let mut rng = trajectory_rng(seed, index);
    let mut psi = psi0.clone();
    let mut log_norm = 0.0;
    for _ in 0..steps {
        let (next, norm) = unitary_diffusive_step(&psi, p, sampler.draw(&mut rng).re);
        log_norm += norm.ln();
        psi = next;
    }
    Ok(UnitaryPath { index, final_state: psi, defect: log_norm.exp_m1().abs() })
}

#[derive(Clone, Debug)]
pub struct DensityPath {
    pub index: u64,
    pub snapshots: Vec<CMatrix>,
    /// Largest anti-Hermitian part removed in any step.
    pub max_skew: f64,
}

pub fn run_density_path(
    p: &DiffusionParams,
    rho0: &CMatrix,
    horizon: f64,
    sample_times: &[f64],
    seed: u64,
    index: u64,
) -> Result<DensityPath> {
    if p.kind != NoiseKind::ComplexV {
        return Err(SimError::InvalidParameter("the density equation is driven by dw".into()));
    }
    let steps = p.steps_for(horizon);
    let marks = sample_steps(sample_times, p.dt, steps)?;
    let sampler = p.sampler(p.particles as f64);
    let mut rng = trajectory_rng(seed, index);
    let mut rho = rho0.clone();
    let mut snapshots = Vec::with_capacity(marks.len());
    let mut max_skew: f64 = 0.0;
    let mut next = 0;
    for n in 0..=steps {
        while next < marks.len() && marks[next] == n {
            snapshots.push(rho.clone());
            next += 1;
        }
        if n < steps {
            let (r, skew) = diffusive_density_step(&rho, p, sampler.draw(&mut rng));
            max_skew = max_skew.max(skew);
            rho = r;
        }
    }
    Ok(DensityPath { index, snapshots, max_skew })
}

/// Distance between the jump dynamics with `κ = scale/ν` and the unitary
/// evolution under `H - γ p₀ R`, for a ladder of intensities.
#[derive(Clone, Debug, Serialize)]
pub struct MeanFieldReport {
    pub nus: Vec<f64>,
    pub distances: Vec<f64>,
    /// `d(ν_k) / d(ν_{k+1})`.
    pub ratios: Vec<f64>,
    pub ode_error: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn mean_field_check(
    grid: &LatticeGrid,
    h: &DenseOperator,
    packet: Arc<PointerPacket>,
    gamma: f64,
    kappa_scale: f64,
    nus: &[f64],
    rho0: &CMatrix,
    horizon: f64,
    dt: f64,
    hbar: f64,
) -> Result<MeanFieldReport> {
    let r = crate::lattice::position_operator(grid);
    let tables = expansion_tables(&packet)?;
    let h_eff = mean_field_hamiltonian(h, &r, gamma, tables.p0)?;
    let u = h_eff.spectrum()?.unitary(horizon, hbar);
    let target = &u * rho0 * u.adjoint();
    let mut distances = Vec::with_capacity(nus.len());
    let mut ode_error: f64 = 0.0;
    for &nu in nus {
        if !(nu > 0.0) {
            return Err(SimError::InvalidParameter(format!("intensity ν > 0 required, got {nu}")));
        }
        let kernel = reduction_kernel(packet.clone(), &r, kappa_scale / nu)?;
        let gen = JumpGenerator::new(h, &kernel, grid, nu, 1, hbar)?;
        let sol = ode_integrate(&gen, rho0, horizon, dt, None)?;
        ode_error = ode_error.max(sol.error_estimate);
        distances.push(trace_distance(&sol.rho, &target)?);
    }
    let ratios = distances.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(MeanFieldReport { nus: nus.to_vec(), distances, ratios, ode_error })
}

/// Largest entry of `(L_ν - L_∞)(E_jl)` over all matrix units, where `L_ν` is
/// the jump generator with `κ = κ(ν)` and `L_∞` the diffusive generator.
#[derive(Clone, Debug, Serialize)]
pub struct GeneratorReport {
    pub nus: Vec<f64>,
    pub errors: Vec<f64>,
    /// Least-squares `p` in `error ∝ ν^{-p}`.
    pub exponent: f64,
    /// `error(ν_k) / error(ν_{k+1})`.
    pub ratios: Vec<f64>,
}

pub fn jump_generator_vs_diffusive(
    grid: &LatticeGrid,
    h: &DenseOperator,
    packet: Arc<PointerPacket>,
    gamma: f64,
    kappa_of_nu: &dyn Fn(f64) -> f64,
    nus: &[f64],
    hbar: f64,
) -> Result<GeneratorReport> {
    let r = crate::lattice::position_operator(grid);
    let tables = expansion_tables(&packet)?;
    let diffusive = DiffusiveGenerator::new(h, vec![r.matrix().clone()], gamma, tables.sigma2, hbar)?;
    let n = grid.n_sites();
    let mut errors = Vec::with_capacity(nus.len());
    for &nu in nus {
        if !(nu > 0.0) {
            return Err(SimError::InvalidParameter(format!("intensity ν > 0 required, got {nu}")));
        }
        let kernel = reduction_kernel(packet.clone(), &r, kappa_of_nu(nu))?;
        let jump = JumpGenerator::new(h, &kernel, grid, nu, 1, hbar)?;
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for l in 0..n {
                let mut e = CMatrix::zeros(n, n);
                e[(j, l)] = C64::new(1.0, 0.0);
                worst = worst.max((jump.apply(&e) - diffusive.apply(&e)).camax());
            }
        }
        errors.push(worst);
    }
    let exponent = fit_exponent(nus, &errors);
    let ratios = errors.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(GeneratorReport { nus: nus.to_vec(), errors, exponent, ratios })
}

/// `p` minimizing `Σ (ln e + p ln ν - c)²`.
pub fn fit_exponent(nus: &[f64], errors: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = nus
        .iter()
        .zip(errors)
        .filter(|(_, e)| **e > 0.0)
        .map(|(n, e)| (n.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    -sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_grid, hamiltonian, position_operator, Boundary, WaveFunction};
    use crate::meter::gaussian_packet;
    use crate::mixing::DensityMatrix;
    use crate::oracle::{ensemble_average, ode_samples};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn grid(n: usize) -> LatticeGrid {
        build_grid(n, 0.25, Boundary::Dirichlet).unwrap()
    }

    fn packet(boost: f64) -> Arc<PointerPacket> {
        Arc::new(gaussian_packet(8.0, 1.0 / 256.0, boost, 1.0).unwrap())
    }

    fn harmonic(g: &LatticeGrid, m: usize) -> DenseOperator {
        let v: Vec<f64> = g.positions().iter().map(|x| 0.5 * x * x).collect();
        hamiltonian(g, 1.0, &v, None, m, 1.0).unwrap()
    }

    fn unit(psi: &WaveFunction) -> CVector {
        psi.amplitudes() * C64::new(psi.cell_measure().sqrt(), 0.0)
    }

    fn skewed(c: f64) -> Arc<PointerPacket> {
        let f = Arc::new(move |y: f64| {
            C64::from_polar((-PI * y * y / 2.0).exp(), c * (y.powi(3) - 3.0 * y / (2.0 * PI)))
        });
        Arc::new(PointerPacket::analytic(8.0, 1.0 / 256.0, f, 1.0).unwrap())
    }

    #[test]
    fn mean_field_shift() {
        let g = grid(8);
        let h = harmonic(&g, 1);
        let r = position_operator(&g);
        let same = mean_field_hamiltonian(&h, &r, 0.0, 1.0).unwrap();
        assert_eq!(same.matrix(), h.matrix());
        let same = mean_field_hamiltonian(&h, &r, 1.0, 0.0).unwrap();
        assert_eq!(same.matrix(), h.matrix());
        let shifted = mean_field_hamiltonian(&h, &r, 1.0, 2.0).unwrap();
        let d = shifted.matrix() - h.matrix();
        for j in 0..8 {
            assert!((d[(j, j)].re + 2.0 * g.position(j)).abs() < 1e-15);
        }
        let bad = DenseOperator::new(CMatrix::from_element(8, 8, C64::new(0.0, 1.0)), false).unwrap();
        assert!(mean_field_hamiltonian(&h, &bad, 1.0, 1.0).is_err());
    }

    #[test]
    fn k_hermitian_part() {
        let g = grid(8);
        let t = expansion_tables(&packet(0.0)).unwrap();
        let p = DiffusionParams::new(&g, 1, &harmonic(&g, 1), &position_operator(&g), &t, 1.3, NoiseKind::ComplexV, 1e-3, 1.0)
            .unwrap();
        let herm = (p.k() + p.k().adjoint()) * C64::new(0.5, 0.0);
        for j in 0..8 {
            let want = 0.5 * 1.69 * t.sigma2 * g.position(j).powi(2);
            assert!((herm[(j, j)].re - want).abs() < 1e-12);
        }
        let k = p.k() + CMatrix::identity(8, 8) * C64::new(0.0, 0.3);
        assert!(p.clone().with_k(k).is_ok());
        let k = p.k() + CMatrix::identity(8, 8) * C64::new(0.3, 0.0);
        assert!(p.with_k(k).is_err());
    }

    #[test]
    fn gaussian_noise_is_real_with_half_pi_variance() {
        let t = expansion_tables(&packet(0.0)).unwrap();
        assert!((t.sigma2 - FRAC_PI_2).abs() < 1e-6);
        let m = NoiseMoments::from_tables(&t);
        let dt = 1e-3;
        let path = wiener_increments(&m, NoiseKind::ComplexV, dt, 200_000, 11, 0).unwrap();
        assert!(path.increments.iter().all(|z| z.im == 0.0));
        let n = path.increments.len() as f64;
        let var = path.increments.iter().map(|z| z.re * z.re).sum::<f64>() / n;
        let target = FRAC_PI_2 * dt;
        assert!((var - target).abs() < 3.0 * target * (2.0 / n).sqrt());
        let u = wiener_increments(&m, NoiseKind::RealU, dt, 200_000, 12, 0).unwrap();
        let var = u.increments.iter().map(|z| z.re * z.re).sum::<f64>() / n;
        assert!((var - t.sigma2 * dt).abs() < 3.0 * t.sigma2 * dt * (2.0 / n).sqrt());
    }

    #[test]
    fn complex_noise_moments() {
        let t = expansion_tables(&skewed(0.4)).unwrap();
        assert!(t.l1l1_mean.im.abs() > 1e-3 || (t.l1_abs_mean - t.l1l1_mean.re).abs() > 1e-3);
        let m = NoiseMoments::from_tables(&t);
        let path = wiener_increments(&m, NoiseKind::ComplexV, 1.0, 400_000, 13, 0).unwrap();
        let n = path.increments.len() as f64;
        let vv: C64 = path.increments.iter().map(|z| z * z).sum::<C64>() / n;
        let abs: f64 = path.increments.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        let tol = 5.0 * m.vv_abs * (2.0 / n).sqrt();
        assert!((vv - m.vv).norm() < tol, "{vv} vs {}", m.vv);
        assert!((abs - m.vv_abs).abs() < tol);
    }

    #[test]
    fn zero_coupling_sse_is_euler_propagation() {
        let g = grid(8);
        let t = expansion_tables(&packet(0.0)).unwrap();
        let h = harmonic(&g, 1);
        let p = DiffusionParams::new(&g, 1, &h, &position_operator(&g), &t, 0.0, NoiseKind::ComplexV, 1e-3, 1.0).unwrap();
        let chi = unit(&WaveFunction::gaussian(&g, 0.1, 0.4, 0.0, 1.0).unwrap());
        let out = diffusive_sse_step(&chi, &p, C64::new(0.7, 0.0));
        let expect = &chi - (h.matrix() * &chi) * C64::new(0.0, 1e-3);
        assert!((out - expect).camax() < 1e-15);
    }

    #[test]
    fn free_unitary_step_keeps_moduli() {
        let g = grid(8);
        let t = expansion_tables(&packet(0.0)).unwrap();
        let zero = DenseOperator::hermitian(CMatrix::zeros(8, 8)).unwrap();
        let p = DiffusionParams::new(&g, 1, &zero, &position_operator(&g), &t, 1.0, NoiseKind::RealU, 1e-6, 1.0).unwrap();
        let psi = unit(&WaveFunction::gaussian(&g, 0.1, 0.4, 0.0, 1.0).unwrap());
        let du = 1.2e-3;
        let (out, norm) = unitary_diffusive_step(&psi, &p, du);
        for j in 0..8 {
            let theta = g.position(j) * du;
            let closed = psi[j] * C64::new(1.0 - 0.5 * theta * theta, theta);
            assert!((out[j] * norm - closed).norm() < 1e-15);
            assert!((out[j].norm() * norm - psi[j].norm()).abs() < 1e-10);
        }
    }

    #[test]
    fn unitary_defect_shrinks_with_step() {
        let g = grid(16);
        let h = harmonic(&g, 1);
        let t = expansion_tables(&packet(0.0)).unwrap();
        let psi = unit(&WaveFunction::gaussian(&g, 0.0, 0.5, 0.0, 1.0).unwrap());
        let mean_defect = |dt: f64| {
            let p = DiffusionParams::new(&g, 1, &h, &position_operator(&g), &t, 1.0, NoiseKind::RealU, dt, 1.0).unwrap();
            (0..20).map(|i| run_unitary_path(&p, &psi, 0.2, 5, i).unwrap().defect).sum::<f64>() / 20.0
        };
        let a = mean_defect(4e-4);
        let b = mean_defect(2e-4);
        let order = (a / b).log2();
        assert!(order > 0.8, "order {order}");
        assert!(b < 5e-3);
    }

    #[test]
    fn density_step_is_hermitian_and_matches_sse_for_one_particle() {
        let g = grid(8);
        let h = harmonic(&g, 1);
        let t = expansion_tables(&packet(0.0)).unwrap();
        let p = DiffusionParams::new(&g, 1, &h, &position_operator(&g), &t, 1.0, NoiseKind::ComplexV, 1e-3, 1.0).unwrap();
        let psi = WaveFunction::gaussian(&g, 0.2, 0.4, 0.0, 1.0).unwrap();
        let rho0 = DensityMatrix::from_pure(&psi).matrix().clone();
        let chi0 = unit(&psi);
        let times = [0.2];
        let n = 2000;
        let dens: Vec<CMatrix> =
            (0..n).map(|i| run_density_path(&p, &rho0, 0.2, &times, 3, i).unwrap().snapshots[0].clone()).collect();
        let outer: Vec<CMatrix> = (0..n)
            .map(|i| {
                let c = &run_sse_path(&p, &chi0, 0.2, &times, 3, i).unwrap().snapshots[0];
                c * c.adjoint()
            })
            .collect();
        let a = ensemble_average(&dens, None).unwrap();
        let b = ensemble_average(&outer, None).unwrap();
        for idx in 0..64 {
            let sem = (a.sem[idx].powi(2) + b.sem[idx].powi(2)).sqrt();
            assert!((a.mean[idx] - b.mean[idx]).norm() <= 3.0 * sem + 1e-3, "entry {idx}");
        }
        let path = run_density_path(&p, &rho0, 0.2, &times, 4, 0).unwrap();
        assert!(path.max_skew < 1e-12);
    }

    #[test]
    fn two_particle_density_drifts_to_oracle_in_mean() {
        let g = grid(4);
        let h = harmonic(&g, 2);
        let t = expansion_tables(&packet(0.0)).unwrap();
        let p = DiffusionParams::new(&g, 2, &h, &position_operator(&g), &t, 0.8, NoiseKind::ComplexV, 1e-3, 1.0).unwrap();
        let psi = WaveFunction::product(&[
            WaveFunction::gaussian(&g, -0.1, 0.3, 0.0, 1.0).unwrap(),
            WaveFunction::gaussian(&g, 0.1, 0.3, 0.0, 1.0).unwrap(),
        ])
        .unwrap();
        let rho0 = DensityMatrix::from_pure(&psi).matrix().clone();
        let samples: Vec<CMatrix> =
            (0..4000).map(|i| run_density_path(&p, &rho0, 0.1, &[0.1], 9, i).unwrap().snapshots[0].clone()).collect();
        let avg = ensemble_average(&samples, None).unwrap();
        let gen = DiffusiveGenerator::new(&h, p.coupling_matrices(), 0.8, t.sigma2, 1.0).unwrap();
        let oracle = &ode_samples(&gen, &rho0, &[0.1], 1e-3).unwrap()[0];
        for idx in 0..256 {
            assert!((avg.mean[idx] - oracle[idx]).norm() <= 4.0 * avg.sem[idx] + 2e-3, "entry {idx}");
        }
    }

    #[test]
    fn mean_field_distance_halves_when_intensity_doubles() {
        let g = grid(8);
        let h = harmonic(&g, 1);
        let rho0 = DensityMatrix::from_pure(&WaveFunction::gaussian(&g, 0.0, 0.4, 0.0, 1.0).unwrap()).matrix().clone();
        let rep = mean_field_check(&g, &h, packet(0.0), 1.0, 1.0, &[50.0, 100.0, 200.0], &rho0, 0.5, 1e-3, 1.0).unwrap();
        for r in &rep.ratios {
            assert!((1.6..=2.4).contains(r), "{rep:?}");
        }
    }

    #[test]
    fn boosted_mean_field_needs_opposite_sign() {
        let g = grid(8);
        let h = harmonic(&g, 1);
        let rho0 = DensityMatrix::from_pure(&WaveFunction::gaussian(&g, 0.0, 0.4, 0.0, 1.0).unwrap()).matrix().clone();
        let nus = [50.0, 100.0, 200.0];
        let good = mean_field_check(&g, &h, packet(1.0), 1.0, -1.0, &nus, &rho0, 0.5, 1e-3, 1.0).unwrap();
        let bad = mean_field_check(&g, &h, packet(1.0), 1.0, 1.0, &nus, &rho0, 0.5, 1e-3, 1.0).unwrap();
        assert!(good.distances[2] < 0.05 && good.ratios.iter().all(|r| *r > 1.6), "{good:?}");
        assert!(bad.distances[2] > 0.1, "{bad:?}");
    }

    #[test]
    fn generator_gap_rates() {
        let g = grid(16);
        let h = harmonic(&g, 1);
        let nus = [1e2, 1e3, 1e4];
        let kappa = |nu: f64| 1.0 / nu.sqrt();
        let even = jump_generator_vs_diffusive(&g, &h, packet(0.0), 1.0, &kappa, &nus, 1.0).unwrap();
        assert!((even.exponent - 1.0).abs() < 0.1, "{even:?}");
        let skew = jump_generator_vs_diffusive(&g, &h, skewed(2.0), 1.0, &kappa, &[1e3, 1e4, 1e5], 1.0).unwrap();
        assert!((0.35..=0.65).contains(&skew.exponent), "{skew:?}");
        let off = jump_generator_vs_diffusive(&g, &h, packet(0.0), 0.0, &|_| 0.0, &nus, 1.0).unwrap();
        assert!(off.errors.iter().all(|e| *e < 1e-9));
    }
}
