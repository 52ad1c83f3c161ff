//! The meter: pointer wavepacket `f₀` on a truncated grid, the reduction
//! kernel family `G(y) = f₀(y - κR)/f₀(y)`, outcome densities and the
//! logarithmic-derivative tables that drive the diffusive limits.

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{Result, SimError};
use crate::lattice::{DenseOperator, WaveFunction, C64};

/// Uniform meter grid `y_i = -Y + i h`, `i = 0..n`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeterGrid {
    half_width: f64,
    step: f64,
    n: usize,
}

impl MeterGrid {
    pub fn new(half_width: f64, step: f64) -> Result<Self> {
        if !(half_width > 0.0) || !(step > 0.0) || step > half_width {
            return Err(SimError::InvalidParameter(format!(
                "meter grid needs 0 < h <= Y, got Y = {half_width}, h = {step}"
            )));
        }
        let n = (2.0 * half_width / step).round() as usize + 1;
        if n < 5 {
            return Err(SimError::InvalidParameter("meter grid needs at least 5 points".into()));
        }
        Ok(Self { half_width, step, n })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn point(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.step
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Grid index of a reading that lies on the grid (within `1e-9 h`).
    pub fn index_of(&self, y: f64) -> Result<usize> {
        let pos = (y + self.half_width) / self.step;
        let i = pos.round();
        if i < 0.0 || i as usize >= self.n || (pos - i).abs() > 1e-9 {
            return Err(SimError::OffGrid(y));
        }
        Ok(i as usize)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PacketKind {
    Gaussian,
    GaussianBoosted(f64),
    Custom,
}

#[derive(Clone)]
enum Profile {
    Gaussian { boost: f64 },
    Tabulated,
    Analytic { f: Arc<dyn Fn(f64) -> C64 + Send + Sync>, scale: f64 },
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Gaussian { boost } => write!(f, "Gaussian {{ boost: {boost} }}"),
            Profile::Tabulated => write!(f, "Tabulated"),
            Profile::Analytic { scale, .. } => write!(f, "Analytic {{ scale: {scale} }}"),
        }
    }
}

/// The meter state `f₀` sampled on its grid.
#[derive(Clone, Debug)]
pub struct PointerPacket {
    grid: MeterGrid,
    values: Vec<C64>,
    profile: Profile,
    hbar: f64,
    mu_cumulative: OnceLock<Vec<f64>>,
}

fn check_gaussian_bounds(half_width: f64, step: f64) -> Result<()> {
    if half_width < 6.0 {
        return Err(SimError::InvalidParameter(format!(
            "meter half-width Y >= 6 required, got {half_width}"
        )));
    }
    if step > 1.0 / 64.0 {
        return Err(SimError::InvalidParameter(format!(
            "meter step h <= 1/64 required, got {step}"
        )));
    }
    Ok(())
}

impl PointerPacket {
    /// `f₀(y) = exp(-π y²/2) e^{i p₀ y/ħ}`, so `|f₀|² = exp(-π y²)`.
    pub fn gaussian(half_width: f64, step: f64, boost: f64, hbar: f64) -> Result<Self> {
        check_gaussian_bounds(half_width, step)?;
        if !(hbar > 0.0) {
            return Err(SimError::InvalidParameter(format!("hbar > 0 required, got {hbar}")));
        }
        let grid = MeterGrid::new(half_width, step)?;
        let profile = Profile::Gaussian { boost };
        let values = grid.points().iter().map(|&y| gaussian_value(y, boost, hbar)).collect();
        let packet = Self { grid, values, profile, hbar, mu_cumulative: OnceLock::new() };
        let n2 = packet.norm_sqr();
        if (n2 - 1.0).abs() > 1e-8 {
            return Err(SimError::NotNormalized(n2));
        }
        Ok(packet)
    }

    /// Packet from grid samples; evaluated off-grid by linear interpolation and
    /// extended by zero outside `[-Y, Y]`.
    pub fn tabulated(grid: MeterGrid, values: Vec<C64>, hbar: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(SimError::DimensionMismatch { expected: grid.len(), found: values.len() });
        }
        let n2: f64 = values.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.step();
        if !(n2 > 0.0) || !n2.is_finite() {
            return Err(SimError::InvalidParameter("packet has zero or non-finite norm".into()));
        }
        let s = n2.sqrt();
        let values = values.into_iter().map(|z| z / s).collect();
        Ok(Self { grid, values, profile: Profile::Tabulated, hbar, mu_cumulative: OnceLock::new() })
    }

    /// Packet from a closed-form profile, normalized on the grid. Shifted
    /// arguments are evaluated exactly.
    pub fn analytic(
        half_width: f64,
        step: f64,
        f: Arc<dyn Fn(f64) -> C64 + Send + Sync>,
        hbar: f64,
    ) -> Result<Self> {
        let grid = MeterGrid::new(half_width, step)?;
        let raw: Vec<C64> = grid.points().iter().map(|&y| f(y)).collect();
        let n2: f64 = raw.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.step();
        if !(n2 > 0.0) || !n2.is_finite() {
            return Err(SimError::InvalidParameter("packet has zero or non-finite norm".into()));
        }
        let scale = 1.0 / n2.sqrt();
        let values = raw.into_iter().map(|z| z * scale).collect();
        Ok(Self { grid, values, profile: Profile::Analytic { f, scale }, hbar, mu_cumulative: OnceLock::new() })
    }

    pub fn grid(&self) -> &MeterGrid {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn kind(&self) -> PacketKind {
        match self.profile {
            Profile::Gaussian { boost } if boost == 0.0 => PacketKind::Gaussian,
            Profile::Gaussian { boost } => PacketKind::GaussianBoosted(boost),
            _ => PacketKind::Custom,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.step()
    }

    /// `f₀` at an arbitrary meter coordinate.
    pub fn value_at(&self, y: f64) -> C64 {
        match &self.profile {
            Profile::Gaussian { boost } => gaussian_value(y, *boost, self.hbar),
            Profile::Analytic { f, scale } => f(y) * *scale,
            Profile::Tabulated => {
                let pos = (y + self.grid.half_width) / self.grid.step;
                if pos < 0.0 || pos > (self.grid.n - 1) as f64 {
                    return C64::new(0.0, 0.0);
                }
                let i = (pos.floor() as usize).min(self.grid.n - 2);
                let frac = pos - i as f64;
                self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
            }
        }
    }

    /// Quadrature weights of the input measure `μ₀`: `|f₀(y_i)|² h`.
    pub fn mu_weights(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr() * self.grid.step()).collect()
    }

    /// Running sum of `mu_weights`, used for inverse-CDF sampling under `μ₀`.
    pub fn mu_cumulative(&self) -> &[f64] {
        self.mu_cumulative.get_or_init(|| cumulative(&self.mu_weights()))
    }
}

fn gaussian_value(y: f64, boost: f64, hbar: f64) -> C64 {
    C64::from_polar((-0.5 * PI * y * y).exp(), boost * y / hbar)
}

fn cumulative(w: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    w.iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

pub fn gaussian_packet(half_width: f64, step: f64, boost: f64, hbar: f64) -> Result<PointerPacket> {
    PointerPacket::gaussian(half_width, step, boost, hbar)
}

/// Finite-difference logarithmic-derivative tables and moments of `f₀`.
#[derive(Clone, Debug)]
pub struct ExpansionTables {
    /// `L'(y) = f₀'(y)/f₀(y)`.
    pub l1: Vec<C64>,
    /// `L''(y) = f₀''(y)/f₀(y)`.
    pub l2: Vec<C64>,
    /// `p₀ = (f₀, P f₀)`.
    pub p0: f64,
    /// `σ² = ħ² (f₀', f₀')`.
    pub sigma2: f64,
    /// Osmotic velocity `w₀ = ∂ ln f₀`; equal to `L'` in one dimension.
    pub w0: Vec<C64>,
    /// `f₀† L' f₀`.
    pub l1_mean: C64,
    /// `f₀† L' L' f₀`, the `dv dv` coefficient.
    pub l1l1_mean: C64,
    /// `f₀† L'† L' f₀`, the `dv* dv` coefficient.
    pub l1_abs_mean: f64,
    /// `f₀† L'' f₀`.
    pub l2_mean: C64,
    /// `ħ² (f₀, P² f₀) = -ħ² (f₀, f₀'')`, an independent route to `σ²`.
    pub p2_moment: f64,
}

/// Fourth-order first and second derivative of uniformly sampled values,
/// with one-sided stencils at the two points nearest each end.
fn derivatives(f: &[C64], h: f64) -> (Vec<C64>, Vec<C64>) {
    let n = f.len();
    let mut d1 = vec![C64::new(0.0, 0.0); n];
    let mut d2 = vec![C64::new(0.0, 0.0); n];
    let c = |v: f64| C64::new(v, 0.0);
    for i in 2..n - 2 {
        d1[i] = (f[i - 2] - f[i - 1] * 8.0 + f[i + 1] * 8.0 - f[i + 2]) / c(12.0 * h);
        d2[i] = (-f[i - 2] + f[i - 1] * 16.0 - f[i] * 30.0 + f[i + 1] * 16.0 - f[i + 2]) / c(12.0 * h * h);
    }
    let fwd1 = |g: &dyn Fn(usize) -> C64| {
        (
            (g(0) * -25.0 + g(1) * 48.0 - g(2) * 36.0 + g(3) * 16.0 - g(4) * 3.0) / c(12.0 * h),
            (g(0) * -3.0 - g(1) * 10.0 + g(2) * 18.0 - g(3) * 6.0 + g(4)) / c(12.0 * h),
        )
    };
    let fwd2 = |g: &dyn Fn(usize) -> C64| {
        (
            (g(0) * 35.0 - g(1) * 104.0 + g(2) * 114.0 - g(3) * 56.0 + g(4) * 11.0) / c(12.0 * h * h),
            (g(0) * 11.0 - g(1) * 20.0 + g(2) * 6.0 + g(3) * 4.0 - g(4)) / c(12.0 * h * h),
        )
    };
    let head = |k: usize| f[k];
    let tail = |k: usize| f[n - 1 - k];
    let (a, b) = fwd1(&head);
    d1[0] = a;
    d1[1] = b;
    let (a, b) = fwd1(&tail);
    d1[n - 1] = -a;
    d1[n - 2] = -b;
    let (a, b) = fwd2(&head);
    d2[0] = a;
    d2[1] = b;
    let (a, b) = fwd2(&tail);
    d2[n - 1] = a;
    d2[n - 2] = b;
    (d1, d2)
}

pub fn expansion_tables(packet: &PointerPacket) -> Result<ExpansionTables> {
    let f = packet.values();
    let n = f.len();
    let h = packet.grid().step();
    for i in 1..n - 1 {
        if f[i].norm() == 0.0 {
            return Err(SimError::PacketZero(packet.grid().point(i)));
        }
    }
    let (d1, d2) = derivatives(f, h);
    let ratio = |d: &C64, v: &C64| if v.norm() == 0.0 { C64::new(0.0, 0.0) } else { d / v };
    let l1: Vec<C64> = d1.iter().zip(f).map(|(d, v)| ratio(d, v)).collect();
    let l2: Vec<C64> = d2.iter().zip(f).map(|(d, v)| ratio(d, v)).collect();
    let hbar = packet.hbar();

    let hc = C64::new(h, 0.0);
    let overlap_d1: C64 = f.iter().zip(&d1).map(|(a, b)| a.conj() * b).sum::<C64>() * hc;
    let p0 = hbar * overlap_d1.im;
    let sigma2 = hbar * hbar * d1.iter().map(|z| z.norm_sqr()).sum::<f64>() * h;
    let l1_mean = overlap_d1;
    let l1l1_mean: C64 = f.iter().zip(&l1).map(|(v, l)| v.conj() * l * l * v).sum::<C64>() * hc;
    let l1_abs_mean = sigma2 / (hbar * hbar);
    let l2_mean: C64 = f.iter().zip(&d2).map(|(a, b)| a.conj() * b).sum::<C64>() * hc;
    let p2_moment = -hbar * hbar * l2_mean.re;

    Ok(ExpansionTables {
        w0: l1.clone(),
        l1,
        l2,
        p0,
        sigma2,
        l1_mean,
        l1l1_mean,
        l1_abs_mean,
        l2_mean,
        p2_moment,
    })
}

/// The diagonal family `y ↦ G(y)` for a diagonal coupling operator `R`,
/// tabulated on the meter grid: `g[j][i] = f₀(y_i - κ x_j)/f₀(y_i)`.
#[derive(Clone, Debug)]
pub struct ReductionKernel {
    packet: Arc<PointerPacket>,
    kappa: f64,
    sites: Vec<f64>,
    table: Vec<Vec<C64>>,
    /// `|g_j(y_i)|² |f₀(y_i)|² h`: outcome mass at `y_i` given site `j`.
    site_mass: Vec<Vec<f64>>,
    site_cumulative: OnceLock<Vec<Vec<f64>>>,
}

pub fn reduction_kernel(packet: Arc<PointerPacket>, r: &DenseOperator, kappa: f64) -> Result<ReductionKernel> {
    ReductionKernel::new(packet, r, kappa)
}

impl ReductionKernel {
    pub fn new(packet: Arc<PointerPacket>, r: &DenseOperator, kappa: f64) -> Result<Self> {
        if !kappa.is_finite() {
            return Err(SimError::InvalidParameter(format!("kappa must be finite, got {kappa}")));
        }
        let sites = r.real_diagonal()?;
        let max_x = sites.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let limit = packet.grid().half_width() / 2.0;
        if kappa.abs() * max_x > limit {
            return Err(SimError::ShiftOffGrid { shift: kappa.abs() * max_x, limit });
        }
        let grid = packet.grid().clone();
        let ys = grid.points();
        let hbar = packet.hbar();
        let table: Vec<Vec<C64>> = sites
            .iter()
            .map(|&x| {
                let shift = kappa * x;
                match &packet.profile {
                    Profile::Gaussian { boost } => {
                        let phase = C64::from_polar(1.0, -boost * shift / hbar);
                        ys.iter().map(|&y| phase * (PI * shift * (y - 0.5 * shift)).exp()).collect()
                    }
                    _ => ys
                        .iter()
                        .zip(packet.values())
                        .map(|(&y, &f0)| {
                            if f0.norm() == 0.0 {
                                C64::new(0.0, 0.0)
                            } else {
                                packet.value_at(y - shift) / f0
                            }
                        })
                        .collect(),
                }
            })
            .collect();
        let mu = packet.mu_weights();
        let site_mass = table
            .iter()
            .map(|row| row.iter().zip(&mu).map(|(g, m)| g.norm_sqr() * m).collect())
            .collect();
        Ok(Self { packet, kappa, sites, table, site_mass, site_cumulative: OnceLock::new() })
    }

    pub fn packet(&self) -> &Arc<PointerPacket> {
        &self.packet
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Diagonal of the coupling operator `R`.
    pub fn sites(&self) -> &[f64] {
        &self.sites
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn meter(&self) -> &MeterGrid {
        self.packet.grid()
    }

    /// `G(y_i)` entry on site `j`.
    pub fn g(&self, site: usize, i: usize) -> C64 {
        self.table[site][i]
    }

    pub fn site_mass(&self, site: usize) -> &[f64] {
        &self.site_mass[site]
    }

    /// `G(y_i)` as a dense diagonal matrix.
    pub fn matrix_at(&self, i: usize) -> crate::lattice::CMatrix {
        let d = crate::lattice::CVector::from_iterator(self.n_sites(), (0..self.n_sites()).map(|j| self.g(j, i)));
        crate::lattice::CMatrix::from_diagonal(&d)
    }

    /// Applies `G(k, y_i)` (the kernel acting on particle `k`, 0-based) to
    /// tensor-grid amplitudes in place.
    pub fn apply_in_place(&self, amps: &mut [C64], i: usize, k: usize, particles: usize) {
        let n = self.n_sites();
        let stride = n.pow((particles - 1 - k) as u32);
        for (idx, a) in amps.iter_mut().enumerate() {
            *a *= self.table[(idx / stride) % n][i];
        }
    }

    /// Outcome masses `Σ_j w_j |g_j(y_i)|² |f₀(y_i)|² h` for site weights `w`.
    pub fn outcome_masses(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.meter().len()];
        for (w, row) in weights.iter().zip(&self.site_mass) {
            if *w == 0.0 {
                continue;
            }
            for (o, m) in out.iter_mut().zip(row) {
                *o += w * m;
            }
        }
        out
    }

    fn cumulative_tables(&self) -> &[Vec<f64>] {
        self.site_cumulative.get_or_init(|| self.site_mass.iter().map(|row| cumulative(row)).collect())
    }

    /// Inverse-CDF draw of a meter index from the outcome law with site
    /// weights `w` (not necessarily normalized) and a uniform variate `u ∈ [0,1)`.
    pub fn sample_index(&self, weights: &[f64], u: f64) -> Result<usize> {
        let cum = self.cumulative_tables();
        let n = self.meter().len();
        let cdf = |i: usize| -> f64 { weights.iter().zip(cum).map(|(w, c)| w * c[i]).sum() };
        let total = cdf(n - 1);
        if !(total > 0.0) {
            return Err(SimError::ZeroLikelihood);
        }
        let target = u * total;
        let (mut lo, mut hi) = (0usize, n - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if cdf(mid) > target {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Ok(lo)
    }

    /// `Σ_i g_j(y_i) conj(g_l(y_i)) |f₀(y_i)|² h`: the Schur multiplier of the
    /// averaged kick `ρ ↦ ∫ G ρ G† dμ₀`.
    pub fn overlap_matrix(&self) -> crate::lattice::CMatrix {
        let n = self.n_sites();
        let mu = self.packet.mu_weights();
        crate::lattice::CMatrix::from_fn(n, n, |j, l| {
            self.table[j].iter().zip(&self.table[l]).zip(&mu).map(|((a, b), m)| a * b.conj() * *m).sum()
        })
    }

    /// Max relative deviation between the stored kernel and the direct
    /// quotient `f₀(y - κx)/f₀(y)` over the whole grid.
    pub fn quotient_deviation(&self) -> f64 {
        let ys = self.meter().points();
        let mut dev = 0.0f64;
        for (j, &x) in self.sites.iter().enumerate() {
            for (i, &y) in ys.iter().enumerate() {
                let q = self.packet.value_at(y - self.kappa * x) / self.packet.value_at(y);
                let g = self.table[j][i];
                dev = dev.max((q - g).norm() / g.norm());
            }
        }
        dev
    }
}

/// `max |Σ_y G(y)†G(y) |f₀(y)|² h - I|`.
pub fn povm_residual(kernel: &ReductionKernel) -> f64 {
    (0..kernel.n_sites())
        .map(|j| (kernel.site_mass(j).iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Density `p(y) = ‖G(y)ψ‖² |f₀(y)|²` on the meter grid, `Σ p h ≈ 1`.
pub fn output_density(kernel: &ReductionKernel, psi: &WaveFunction) -> Result<Vec<f64>> {
    if psi.particles() != 1 || psi.dim() != kernel.n_sites() {
        return Err(SimError::DimensionMismatch { expected: kernel.n_sites(), found: psi.dim() });
    }
    psi.require_normalized(1e-8)?;
    let h = kernel.meter().step();
    Ok(kernel.outcome_masses(&psi.site_weights()).into_iter().map(|m| m / h).collect())
}
