//! Lattice Hilbert spaces: grids, wave functions, dense operators and exact
//! propagation through a cached eigendecomposition.
//!
//! Multi-particle states live on the tensor grid with particle 1 as the most
//! significant index, so `I = i_1 * N^(M-1) + ... + i_M` and the Kronecker
//! product `A ⊗ B` acts with `A` on particle 1.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Largest tensor-grid dimension any dense object may have.
pub const MAX_DIM: usize = 4096;

/// Tolerance for the Hermiticity check of operators flagged Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Dirichlet,
    Periodic,
}

impl std::str::FromStr for Boundary {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirichlet" => Ok(Boundary::Dirichlet),
            "periodic" => Ok(Boundary::Periodic),
            other => Err(SimError::InvalidParameter(format!(
                "unknown boundary '{other}' (expected dirichlet or periodic)"
            ))),
        }
    }
}

/// One-dimensional particle lattice with centered positions
/// `x_j = (j - n/2) * a`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeGrid {
    n_sites: usize,
    spacing: f64,
    boundary: Boundary,
}

impl LatticeGrid {
    pub fn new(n_sites: usize, spacing: f64, boundary: Boundary) -> Result<Self> {
        if n_sites < 2 {
            return Err(SimError::InvalidParameter(format!(
                "n_sites >= 2 required, got {n_sites}"
            )));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(SimError::InvalidParameter(format!(
                "spacing a > 0 required, got {spacing}"
            )));
        }
        Ok(Self { n_sites, spacing, boundary })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn position(&self, j: usize) -> f64 {
        (j as f64 - self.n_sites as f64 / 2.0) * self.spacing
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n_sites).map(|j| self.position(j)).collect()
    }

    /// Dimension `n^M` of the M-particle tensor grid, or a capacity error.
    pub fn tensor_dim(&self, particles: usize) -> Result<usize> {
        if particles == 0 {
            return Err(SimError::InvalidParameter("particle count M >= 1 required".into()));
        }
        let mut dim: usize = 1;
        for _ in 0..particles {
            dim = dim.saturating_mul(self.n_sites);
            if dim > MAX_DIM {
                return Err(SimError::Capacity { dim, limit: MAX_DIM });
            }
        }
        Ok(dim)
    }

    /// Site index of particle `k` (0-based) within tensor index `index`.
    pub fn site_of(&self, index: usize, k: usize, particles: usize) -> usize {
        let stride = self.n_sites.pow((particles - 1 - k) as u32);
        (index / stride) % self.n_sites
    }

    /// All site indices `(i_1, ..., i_M)` of a tensor index.
    pub fn digits(&self, index: usize, particles: usize) -> Vec<usize> {
        (0..particles).map(|k| self.site_of(index, k, particles)).collect()
    }
}

/// Convenience constructor matching the grid contract.
pub fn build_grid(n_sites: usize, spacing: f64, boundary: Boundary) -> Result<LatticeGrid> {
    LatticeGrid::new(n_sites, spacing, boundary)
}

/// Complex amplitudes over the (tensor) lattice. The squared norm carries the
/// lattice measure: `‖ψ‖² = Σ |ψ_I|² a^M`.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveFunction {
    grid: LatticeGrid,
    particles: usize,
    amplitudes: CVector,
}

impl WaveFunction {
    pub fn new(grid: LatticeGrid, particles: usize, amplitudes: CVector) -> Result<Self> {
        let dim = grid.tensor_dim(particles)?;
        if amplitudes.len() != dim {
            return Err(SimError::DimensionMismatch { expected: dim, found: amplitudes.len() });
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(SimError::InvalidParameter("amplitudes must be finite".into()));
        }
        Ok(Self { grid, particles, amplitudes })
    }

    /// Normalized state concentrated on one lattice site.
    pub fn point_mass(grid: &LatticeGrid, site: usize) -> Result<Self> {
        if site >= grid.n_sites() {
            return Err(SimError::InvalidParameter(format!(
                "site {site} outside lattice of {} sites",
                grid.n_sites()
            )));
        }
        let mut amps = CVector::zeros(grid.n_sites());
        amps[site] = C64::new(1.0 / grid.spacing().sqrt(), 0.0);
        Self::new(grid.clone(), 1, amps)
    }

    /// Normalized Gaussian wavepacket `exp(-(x-c)²/(4w²) + i p x/ħ)`.
    pub fn gaussian(grid: &LatticeGrid, center: f64, width: f64, momentum: f64, hbar: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(SimError::InvalidParameter(format!("packet width > 0 required, got {width}")));
        }
        let amps = CVector::from_iterator(
            grid.n_sites(),
            grid.positions().into_iter().map(|x| {
                let env = (-(x - center).powi(2) / (4.0 * width * width)).exp();
                C64::from_polar(env, momentum * x / hbar)
            }),
        );
        Self::new(grid.clone(), 1, amps)?.normalized()
    }

    /// Tensor product of single-particle states on a common grid.
    pub fn product(factors: &[WaveFunction]) -> Result<Self> {
        let first = factors
            .first()
            .ok_or_else(|| SimError::InvalidParameter("empty product".into()))?;
        let grid = first.grid.clone();
        let mut amps = CVector::from_element(1, C64::new(1.0, 0.0));
        let mut particles = 0;
        for f in factors {
            if f.grid != grid {
                return Err(SimError::InvalidParameter("product factors on different grids".into()));
            }
            particles += f.particles;
            grid.tensor_dim(particles)?;
            amps = amps.kronecker(&f.amplitudes);
        }
        Self::new(grid, particles, amps)
    }

    pub fn grid(&self) -> &LatticeGrid {
        &self.grid
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// Lattice volume element `a^M`.
    pub fn cell_measure(&self) -> f64 {
        self.grid.spacing().powi(self.particles as i32)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared() * self.cell_measure()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm();
        if !(n > 0.0) {
            return Err(SimError::InvalidParameter("cannot normalize a zero state".into()));
        }
        self.amplitudes /= C64::new(n, 0.0);
        Ok(self)
    }

    /// Same grid and particle count, new amplitudes.
    pub fn with_amplitudes(&self, amplitudes: CVector) -> Result<Self> {
        Self::new(self.grid.clone(), self.particles, amplitudes)
    }

    pub fn inner(&self, other: &WaveFunction) -> C64 {
        self.amplitudes.dotc(&other.amplitudes) * self.cell_measure()
    }

    /// Probabilities `|ψ_I|² a^M` on the tensor grid (unnormalized states give
    /// unnormalized weights).
    pub fn site_weights(&self) -> Vec<f64> {
        let cell = self.cell_measure();
        self.amplitudes.iter().map(|z| z.norm_sqr() * cell).collect()
    }

    /// Mean and variance of the (single-particle) position, normalized by the norm.
    pub fn position_moments(&self) -> (f64, f64) {
        let w = self.site_weights();
        let total: f64 = w.iter().sum();
        let mut mean = 0.0;
        let mut second = 0.0;
        for (i, wi) in w.iter().enumerate() {
            let x = self.grid.position(self.grid.site_of(i, 0, self.particles));
            mean += wi * x;
            second += wi * x * x;
        }
        mean /= total;
        second /= total;
        (mean, second - mean * mean)
    }

    pub fn require_normalized(&self, tol: f64) -> Result<()> {
        let n2 = self.norm_sqr();
        if (n2 - 1.0).abs() > tol {
            return Err(SimError::NotNormalized(n2));
        }
        Ok(())
    }
}

/// Eigendecomposition `H = V diag(E) V†` of a Hermitian operator.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: DVector<f64>,
    pub vectors: CMatrix,
    vectors_adj: CMatrix,
}

impl Spectrum {
    fn of(matrix: &CMatrix) -> Self {
        let eig = SymmetricEigen::new(matrix.clone());
        let vectors_adj = eig.eigenvectors.adjoint();
        Self { values: eig.eigenvalues, vectors: eig.eigenvectors, vectors_adj }
    }

    /// `exp(-i H dt / ħ) v`.
    pub fn propagate(&self, v: &CVector, dt: f64, hbar: f64) -> CVector {
        let mut coeffs = &self.vectors_adj * v;
        for (c, e) in coeffs.iter_mut().zip(self.values.iter()) {
            *c *= C64::from_polar(1.0, -e * dt / hbar);
        }
        &self.vectors * coeffs
    }

    /// The full propagator matrix `exp(-i H dt / ħ)`.
    pub fn unitary(&self, dt: f64, hbar: f64) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for (mut col, e) in scaled.column_iter_mut().zip(self.values.iter()) {
            col *= C64::from_polar(1.0, -e * dt / hbar);
        }
        scaled * &self.vectors_adj
    }
}

/// Dense complex operator with an optional Hermitian promise. The eigen
/// decomposition is computed at most once per operator and shared by clones.
#[derive(Clone, Debug)]
pub struct DenseOperator {
    matrix: CMatrix,
    hermitian: bool,
    spectrum: OnceLock<Arc<Spectrum>>,
}

impl DenseOperator {
    pub fn new(matrix: CMatrix, hermitian: bool) -> Result<Self> {
        if !matrix.is_square() {
            return Err(SimError::DimensionMismatch { expected: matrix.nrows(), found: matrix.ncols() });
        }
        if matrix.nrows() > MAX_DIM {
            return Err(SimError::Capacity { dim: matrix.nrows(), limit: MAX_DIM });
        }
        if hermitian {
            let dev = hermiticity_defect(&matrix);
            if dev > HERMITIAN_TOL {
                return Err(SimError::NotHermitian(dev));
            }
        }
        Ok(Self { matrix, hermitian, spectrum: OnceLock::new() })
    }

    pub fn hermitian(matrix: CMatrix) -> Result<Self> {
        Self::new(matrix, true)
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let m = CMatrix::from_diagonal(&CVector::from_iterator(
            values.len(),
            values.iter().map(|&v| C64::new(v, 0.0)),
        ));
        Self { matrix: m, hermitian: true, spectrum: OnceLock::new() }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.matrix)
    }

    /// Cached eigendecomposition; only available for Hermitian operators.
    pub fn spectrum(&self) -> Result<Arc<Spectrum>> {
        if !self.hermitian {
            return Err(SimError::NotHermitian(self.hermiticity_defect()));
        }
        Ok(self.spectrum.get_or_init(|| Arc::new(Spectrum::of(&self.matrix))).clone())
    }

    /// Real diagonal entries if the operator is diagonal with real entries.
    pub fn real_diagonal(&self) -> Result<Vec<f64>> {
        let n = self.dim();
        let mut off = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off = off.max(self.matrix[(i, j)].norm());
                }
            }
        }
        if off > 0.0 {
            return Err(SimError::NotDiagonal(off));
        }
        let diag: Vec<f64> = (0..n).map(|i| self.matrix[(i, i)].re).collect();
        if (0..n).any(|i| self.matrix[(i, i)].im != 0.0) {
            return Err(SimError::NotHermitian(
                (0..n).map(|i| self.matrix[(i, i)].im.abs()).fold(0.0, f64::max),
            ));
        }
        Ok(diag)
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        &self.matrix * v
    }
}

pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// `I^{⊗k} ⊗ op ⊗ I^{⊗(M-1-k)}` for a 0-based particle index `k`.
pub fn kron_embed(op: &CMatrix, k: usize, particles: usize) -> CMatrix {
    let n = op.nrows();
    let left = CMatrix::identity(n.pow(k as u32), n.pow(k as u32));
    let right_dim = n.pow((particles - 1 - k) as u32);
    let right = CMatrix::identity(right_dim, right_dim);
    left.kronecker(op).kronecker(&right)
}

/// Diagonal position operator `R = diag(x_j)` of a single particle.
pub fn position_operator(grid: &LatticeGrid) -> DenseOperator {
    DenseOperator::diagonal(&grid.positions())
}

/// `H^M = Σ_k H(k) + Σ_{k<l} W(x_k, x_l)`, with the single-particle part
/// `-ħ²/(2m) Δ + V` from the second-order central difference Laplacian.
pub fn hamiltonian(
    grid: &LatticeGrid,
    mass: f64,
    potential: &[f64],
    pair_potential: Option<&dyn Fn(f64, f64) -> f64>,
    particles: usize,
    hbar: f64,
) -> Result<DenseOperator> {
    if !(mass > 0.0) {
        return Err(SimError::InvalidParameter(format!("mass m > 0 required, got {mass}")));
    }
    if !(hbar > 0.0) {
        return Err(SimError::InvalidParameter(format!("hbar > 0 required, got {hbar}")));
    }
    let n = grid.n_sites();
    if potential.len() != n {
        return Err(SimError::DimensionMismatch { expected: n, found: potential.len() });
    }
    let dim = grid.tensor_dim(particles)?;

    let hop = hbar * hbar / (2.0 * mass * grid.spacing() * grid.spacing());
    let mut single = CMatrix::zeros(n, n);
    for j in 0..n {
        single[(j, j)] += C64::new(2.0 * hop + potential[j], 0.0);
        let neighbours = [j.checked_sub(1), Some(j + 1).filter(|&l| l < n)];
        for (side, l) in neighbours.into_iter().enumerate() {
            let l = match (l, grid.boundary()) {
                (Some(l), _) => l,
                (None, Boundary::Periodic) => {
                    if side == 0 {
                        n - 1
                    } else {
                        0
                    }
                }
                (None, Boundary::Dirichlet) => continue,
            };
            single[(j, l)] -= C64::new(hop, 0.0);
        }
    }

    let mut full = CMatrix::zeros(dim, dim);
    for k in 0..particles {
        full += kron_embed(&single, k, particles);
    }
    if let Some(w) = pair_potential {
        for idx in 0..dim {
            let sites = grid.digits(idx, particles);
            let mut v = 0.0;
            for k in 0..particles {
                for l in (k + 1)..particles {
                    v += w(grid.position(sites[k]), grid.position(sites[l]));
                }
            }
            full[(idx, idx)] += C64::new(v, 0.0);
        }
    }
    DenseOperator::hermitian(full)
}

/// `ψ(dt) = exp(-i H dt/ħ) ψ` through the cached eigendecomposition of `H`.
pub fn evolve_unitary(h: &DenseOperator, psi: &WaveFunction, dt: f64, hbar: f64) -> Result<WaveFunction> {
    if h.dim() != psi.dim() {
        return Err(SimError::DimensionMismatch { expected: h.dim(), found: psi.dim() });
    }
    let spec = h.spectrum()?;
    psi.with_amplitudes(spec.propagate(psi.amplitudes(), dt, hbar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_hermitian(n: usize, seed: u64) -> CMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = CMatrix::from_fn(n, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        (&a + a.adjoint()) * C64::new(0.5, 0.0)
    }

    #[test]
    fn smallest_grid_is_centered() {
        let g = build_grid(2, 1.0, Boundary::Dirichlet).unwrap();
        assert_eq!(g.positions(), vec![-1.0, 0.0]);
    }

    #[test]
    fn periodic_grid_positions() {
        let g = build_grid(4, 0.5, Boundary::Periodic).unwrap();
        assert_eq!(g.positions(), vec![-1.0, -0.5, 0.0, 0.5]);
    }

    #[test]
    fn sixteen_site_grid_span() {
        let g = build_grid(16, 0.25, Boundary::Dirichlet).unwrap();
        let x = g.positions();
        assert_eq!(x[0], -2.0);
        assert_eq!(x[15], 1.75);
        for w in x.windows(2) {
            assert!((w[1] - w[0] - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(build_grid(1, 1.0, Boundary::Dirichlet).is_err());
        assert!(build_grid(4, 0.0, Boundary::Dirichlet).is_err());
        assert!(build_grid(4, -0.1, Boundary::Periodic).is_err());
    }

    #[test]
    fn position_operator_is_diagonal_positions() {
        let g = build_grid(2, 1.0, Boundary::Dirichlet).unwrap();
        let r = position_operator(&g);
        assert_eq!(r.real_diagonal().unwrap(), vec![-1.0, 0.0]);
        let comm = r.matrix() * r.matrix() - r.matrix() * r.matrix();
        assert_eq!(comm.norm(), 0.0);
    }

    #[test]
    fn position_eigenvalues_are_positions() {
        let g = build_grid(16, 0.25, Boundary::Dirichlet).unwrap();
        let r = position_operator(&g);
        let mut ev: Vec<f64> = r.spectrum().unwrap().values.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (e, x) in ev.iter().zip(g.positions()) {
            assert!((e - x).abs() < 1e-14);
        }
    }

    #[test]
    fn periodic_laplacian_annihilates_constants() {
        for n in [2, 3, 8, 16] {
            let g = build_grid(n, 0.25, Boundary::Periodic).unwrap();
            let h = hamiltonian(&g, 1.0, &vec![0.0; n], None, 1, 1.0).unwrap();
            let psi = CVector::from_element(n, C64::new(1.0, 0.0));
            assert!(h.apply(&psi).norm() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn two_free_particles_are_tensor_additive() {
        let g = build_grid(4, 0.5, Boundary::Dirichlet).unwrap();
        let v = [0.3, -0.1, 0.2, 0.0];
        let h1 = hamiltonian(&g, 1.0, &v, None, 1, 1.0).unwrap();
        let h2 = hamiltonian(&g, 1.0, &v, None, 2, 1.0).unwrap();
        let id = CMatrix::identity(4, 4);
        let expected = h1.matrix().kronecker(&id) + id.kronecker(h1.matrix());
        assert!((h2.matrix() - expected).camax() < 1e-14);
    }

    #[test]
    fn pair_potential_is_diagonal_and_symmetric() {
        let g = build_grid(4, 0.5, Boundary::Dirichlet).unwrap();
        let w = |a: f64, b: f64| 1.0 / (1.0 + (a - b).abs());
        let h = hamiltonian(&g, 1.0, &[0.0; 4], Some(&w), 2, 1.0).unwrap();
        let h0 = hamiltonian(&g, 1.0, &[0.0; 4], None, 2, 1.0).unwrap();
        let diff = h.matrix() - h0.matrix();
        for i in 0..16 {
            for j in 0..16 {
                if i != j {
                    assert_eq!(diff[(i, j)].norm(), 0.0);
                }
            }
        }
        let (a, b) = (1usize, 3usize);
        assert!((diff[(a * 4 + b, a * 4 + b)] - diff[(b * 4 + a, b * 4 + a)]).norm() < 1e-15);
    }

    #[test]
    fn harmonic_ground_state_near_half_quantum() {
        // Resolution-limited: N = 8 sites at a = 0.5 cover [-2, 1.5].
        let g = build_grid(8, 0.5, Boundary::Dirichlet).unwrap();
        let omega = 1.0;
        let v: Vec<f64> = g.positions().iter().map(|x| 0.5 * omega * omega * x * x).collect();
        let h = hamiltonian(&g, 1.0, &v, None, 1, 1.0).unwrap();
        let e0 = h.spectrum().unwrap().values.iter().copied().fold(f64::INFINITY, f64::min);
        let rel = (e0 - 0.5).abs() / 0.5;
        assert!(rel < 0.15, "E0 = {e0}");
    }

    #[test]
    fn capacity_is_enforced() {
        let g = build_grid(17, 0.25, Boundary::Dirichlet).unwrap();
        let err = hamiltonian(&g, 1.0, &[0.0; 17], None, 3, 1.0).unwrap_err();
        assert!(matches!(err, SimError::Capacity { .. }));
        let g = build_grid(16, 0.25, Boundary::Dirichlet).unwrap();
        assert_eq!(g.tensor_dim(3).unwrap(), 4096);
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 1)] = C64::new(1.0, 0.0);
        assert!(matches!(DenseOperator::hermitian(m.clone()), Err(SimError::NotHermitian(_))));
        let op = DenseOperator::new(m, false).unwrap();
        let g = build_grid(2, 1.0, Boundary::Dirichlet).unwrap();
        let psi = WaveFunction::point_mass(&g, 0).unwrap();
        assert!(evolve_unitary(&op, &psi, 0.1, 1.0).is_err());
    }

    #[test]
    fn zero_time_is_identity() {
        let g = build_grid(8, 0.25, Boundary::Periodic).unwrap();
        let h = hamiltonian(&g, 1.0, &[0.0; 8], None, 1, 1.0).unwrap();
        let psi = WaveFunction::gaussian(&g, 0.1, 0.3, 1.0, 1.0).unwrap();
        let out = evolve_unitary(&h, &psi, 0.0, 1.0).unwrap();
        assert!((out.amplitudes() - psi.amplitudes()).camax() < 1e-13);
    }

    #[test]
    fn eigenstate_picks_up_phase() {
        let g = build_grid(4, 1.0, Boundary::Dirichlet).unwrap();
        let e = [0.5, -1.0, 2.0, 0.25];
        let h = DenseOperator::diagonal(&e);
        for j in 0..4 {
            let psi = WaveFunction::point_mass(&g, j).unwrap();
            let out = evolve_unitary(&h, &psi, 0.7, 1.0).unwrap();
            let expected = C64::from_polar(1.0, -e[j] * 0.7);
            assert!((out.amplitudes()[j] - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn group_property() {
        let g = build_grid(8, 0.25, Boundary::Dirichlet).unwrap();
        let h = DenseOperator::hermitian(random_hermitian(8, 3)).unwrap();
        let psi = WaveFunction::gaussian(&g, 0.0, 0.4, 0.5, 1.0).unwrap();
        let a = evolve_unitary(&h, &evolve_unitary(&h, &psi, 0.3, 1.0).unwrap(), 1.1, 1.0).unwrap();
        let b = evolve_unitary(&h, &psi, 1.4, 1.0).unwrap();
        assert!((a.amplitudes() - b.amplitudes()).camax() < 1e-10);
    }

    #[test]
    fn noninteracting_pair_factorizes() {
        let g = build_grid(6, 0.5, Boundary::Periodic).unwrap();
        let v: Vec<f64> = g.positions().iter().map(|x| 0.2 * x * x).collect();
        let h1 = hamiltonian(&g, 1.0, &v, None, 1, 1.0).unwrap();
        let h2 = hamiltonian(&g, 1.0, &v, None, 2, 1.0).unwrap();
        let a = WaveFunction::gaussian(&g, -0.5, 0.4, 1.0, 1.0).unwrap();
        let b = WaveFunction::gaussian(&g, 0.5, 0.6, -0.5, 1.0).unwrap();
        let joint = WaveFunction::product(&[a.clone(), b.clone()]).unwrap();
        let t = 0.8;
        let lhs = evolve_unitary(&h2, &joint, t, 1.0).unwrap();
        let rhs = WaveFunction::product(&[
            evolve_unitary(&h1, &a, t, 1.0).unwrap(),
            evolve_unitary(&h1, &b, t, 1.0).unwrap(),
        ])
        .unwrap();
        assert!((lhs.amplitudes() - rhs.amplitudes()).camax() < 1e-10);
    }

    #[test]
    fn built_hamiltonians_are_hermitian() {
        for boundary in [Boundary::Dirichlet, Boundary::Periodic] {
            let g = build_grid(5, 0.3, boundary).unwrap();
            let v: Vec<f64> = g.positions().iter().map(|x| x.sin()).collect();
            let w = |a: f64, b: f64| (a * b).cos();
            for m in 1..=3 {
                let h = hamiltonian(&g, 0.7, &v, Some(&w), m, 1.3).unwrap();
                assert!(h.hermiticity_defect() <= 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn evolution_preserves_norm(seed in 0u64..1000, t in 0.0f64..10.0) {
            let g = build_grid(6, 0.5, Boundary::Dirichlet).unwrap();
            let h = DenseOperator::hermitian(random_hermitian(6, seed)).unwrap();
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
            let amps = CVector::from_fn(6, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let psi = WaveFunction::new(g, 1, amps).unwrap();
            let out = evolve_unitary(&h, &psi, t, 1.0).unwrap();
            prop_assert!((out.norm() - psi.norm()).abs() <= 1e-10);
        }
    }
}
