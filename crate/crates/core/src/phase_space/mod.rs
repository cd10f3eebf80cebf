//! Phase-space discretization of the full operator `P = P0 + W`.
//!
//! Space is the periodic box `[-L, L)^n` sampled at `nx` points per axis and
//! represented by discrete Fourier coefficients; velocity uses the tensor
//! Hermite functions `phi_alpha` with `alpha_j < nv`. Coefficients are stored
//! alpha-major: entry `alpha * nx^n + k`, both multi-indices row-major with
//! axis 0 slowest.
//!
//! With `u(x_i) = sum_m u_m e^{2 pi i m i / nx}` the `L^2(box x R^n_v)` inner
//! product is `(2L)^n sum conj(w) u`, which is what [`StateVector::inner`]
//! computes.

mod checkpoint;
mod potential;
mod weights;

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fiber::{assemble_fiber, CVector, FiberOperator};
use crate::par;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use potential::{make_potential, Potential, PotentialFamily, PotentialSpec};
pub use weights::{
    apply_velocity_smoothing, apply_weight, random_smooth_state, subelliptic_diagnostic, subelliptic_ratio,
    weighted_norm, weighted_pair, SubellipticReport, WeightSpec,
};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Default wrap-around guard coefficient: horizons must satisfy `t <= beta L^2`.
pub const DEFAULT_WRAP_BETA: f64 = 0.05;

/// Default trust threshold for the relative Hermite tail mass.
pub const DEFAULT_TAIL_THRESHOLD: f64 = 1e-6;

/// Largest number of unknowns a grid may request.
pub const MAX_UNKNOWNS: usize = 1 << 26;

/// Periodic box times truncated Hermite basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub dim: usize,
    pub box_half_width: f64,
    pub nx: usize,
    pub nv: usize,
}

impl PhaseGrid {
    pub fn new(dim: usize, box_half_width: f64, nx: usize, nv: usize) -> Result<Self> {
        let g = Self { dim, box_half_width, nx, nv };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(invalid(format!("phase-space dimension must be 1, 2 or 3, got {}", self.dim)));
        }
        if !(self.box_half_width > 0.0) || !self.box_half_width.is_finite() {
            return Err(invalid(format!("box half-width must be positive, got {}", self.box_half_width)));
        }
        if self.nx < 8 || !self.nx.is_power_of_two() {
            return Err(invalid(format!("nx must be a power of two >= 8, got {}", self.nx)));
        }
        if self.nv < 4 {
            return Err(invalid(format!("nv must be >= 4, got {}", self.nv)));
        }
        let total = self
            .nx
            .checked_pow(self.dim as u32)
            .and_then(|s| self.nv.checked_pow(self.dim as u32).and_then(|v| s.checked_mul(v)));
        match total {
            Some(t) if t <= MAX_UNKNOWNS => Ok(()),
            _ => Err(invalid(format!(
                "grid with nx = {}, nv = {} in dimension {} exceeds {MAX_UNKNOWNS} unknowns",
                self.nx, self.nv, self.dim
            ))),
        }
    }

    /// `nx^n`.
    pub fn spatial_len(&self) -> usize {
        self.nx.pow(self.dim as u32)
    }

    /// `nv^n`.
    pub fn velocity_len(&self) -> usize {
        self.nv.pow(self.dim as u32)
    }

    pub fn len(&self) -> usize {
        self.spatial_len() * self.velocity_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.box_half_width / self.nx as f64
    }

    /// `(2L)^n`.
    pub fn volume(&self) -> f64 {
        (2.0 * self.box_half_width).powi(self.dim as i32)
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.nx).map(|i| -self.box_half_width + self.dx() * i as f64).collect()
    }

    /// Collocation point for a flat spatial index.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let idx = self.spatial_multi(flat);
        idx.iter().map(|&i| -self.box_half_width + self.dx() * i as f64).collect()
    }

    pub fn spatial_multi(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        for j in (0..self.dim).rev() {
            idx[j] = flat % self.nx;
            flat /= self.nx;
        }
        idx
    }

    /// Signed angular wavenumber `pi m / L` of FFT slot `i`.
    pub fn wavenumber(&self, i: usize) -> f64 {
        let m = if i <= self.nx / 2 { i as f64 } else { i as f64 - self.nx as f64 };
        std::f64::consts::PI * m / self.box_half_width
    }

    /// Wavenumbers used for first derivatives; the Nyquist slot is zeroed so
    /// that `d/dx` stays exactly skew-adjoint.
    pub fn derivative_wavenumbers(&self) -> Vec<f64> {
        (0..self.nx).map(|i| if i == self.nx / 2 { 0.0 } else { self.wavenumber(i) }).collect()
    }

    /// Derivative wavenumber vector of a flat Fourier index.
    pub fn mode_frequency(&self, flat: usize) -> Vec<f64> {
        let kd = self.derivative_wavenumbers();
        self.spatial_multi(flat).into_iter().map(|i| kd[i]).collect()
    }

    /// `|k|^2` with the true (not Nyquist-zeroed) wavenumbers.
    pub fn mode_norm_sq(&self, flat: usize) -> f64 {
        self.spatial_multi(flat).into_iter().map(|i| self.wavenumber(i).powi(2)).sum()
    }

    /// Largest admissible time horizon `beta L^2`.
    pub fn wrap_limit(&self, beta: f64) -> f64 {
        beta * self.box_half_width * self.box_half_width
    }

    pub fn check_wrap(&self, t: f64, beta: f64) -> Result<()> {
        let limit = self.wrap_limit(beta);
        if t > limit {
            return Err(Error::WrapGuard { t, limit });
        }
        Ok(())
    }

    /// Per-axis Hermite degree at which the monitored tail starts.
    pub fn tail_start(&self) -> usize {
        self.nv - self.nv.div_ceil(10).max(1)
    }

    pub(crate) fn velocity_stride(&self, axis: usize) -> usize {
        self.nv.pow((self.dim - 1 - axis) as u32)
    }

    pub(crate) fn alpha_component(&self, flat: usize, axis: usize) -> usize {
        (flat / self.velocity_stride(axis)) % self.nv
    }

    fn check_same(&self, other: &PhaseGrid) -> Result<()> {
        if self != other {
            return Err(Error::DimensionMismatch(format!("grids differ: {self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Multi-dimensional FFT on one spatial slab of length `nx^n`.
#[derive(Clone)]
pub struct SpectralTransform {
    dim: usize,
    nx: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralTransform").field("dim", &self.dim).field("nx", &self.nx).finish()
    }
}

impl SpectralTransform {
    pub fn new(grid: &PhaseGrid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            dim: grid.dim,
            nx: grid.nx,
            forward: planner.plan_fft_forward(grid.nx),
            inverse: planner.plan_fft_inverse(grid.nx),
        }
    }

    /// Collocation values to coefficients (scaled by `1/nx^n`).
    pub fn to_fourier(&self, slab: &mut [Complex64]) {
        self.run(slab, &self.forward);
        let scale = 1.0 / slab.len() as f64;
        slab.iter_mut().for_each(|c| *c *= scale);
    }

    /// Coefficients to collocation values.
    pub fn to_values(&self, slab: &mut [Complex64]) {
        self.run(slab, &self.inverse);
    }

    fn run(&self, slab: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let nx = self.nx;
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        let mut line = vec![Complex64::default(); nx];
        for axis in 0..self.dim {
            let stride = nx.pow((self.dim - 1 - axis) as u32);
            if stride == 1 {
                fft.process_with_scratch(slab, &mut scratch);
                continue;
            }
            let outer = nx.pow(axis as u32);
            for o in 0..outer {
                for inner in 0..stride {
                    let start = o * stride * nx + inner;
                    for (m, l) in line.iter_mut().enumerate() {
                        *l = slab[start + m * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (m, l) in line.iter().enumerate() {
                        slab[start + m * stride] = *l;
                    }
                }
            }
        }
    }
}

/// Discrete phase-space state in Fourier x Hermite coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub grid: PhaseGrid,
    pub coeffs: CVector,
}

impl StateVector {
    pub fn zeros(grid: &PhaseGrid) -> Self {
        Self { grid: *grid, coeffs: CVector::zeros(grid.len()) }
    }

    pub fn from_coeffs(grid: &PhaseGrid, coeffs: CVector) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "coefficient vector has length {}, grid needs {}",
                coeffs.len(),
                grid.len()
            )));
        }
        Ok(Self { grid: *grid, coeffs })
    }

    /// Build from collocation values, alpha-major like the coefficients.
    pub fn from_values(grid: &PhaseGrid, mut values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!("{} values for a grid of {}", values.len(), grid.len())));
        }
        let tr = SpectralTransform::new(grid);
        par::for_each_chunk_mut(&mut values, grid.spatial_len(), |_, slab| tr.to_fourier(slab));
        Ok(Self { grid: *grid, coeffs: CVector::from_vec(values) })
    }

    /// State `f(x) phi_alpha(v)` summed over the listed velocity modes.
    pub fn separable<F>(grid: &PhaseGrid, profile: F, modes: &[(Vec<usize>, Complex64)]) -> Result<Self>
    where
        F: Fn(&[f64]) -> Complex64,
    {
        let nxn = grid.spatial_len();
        let prof: Vec<Complex64> = (0..nxn).map(|i| profile(&grid.point(i))).collect();
        let mut values = vec![Complex64::default(); grid.len()];
        for (alpha, amp) in modes {
            if alpha.len() != grid.dim || alpha.iter().any(|&a| a >= grid.nv) {
                return Err(invalid(format!("velocity mode {alpha:?} outside the truncation nv = {}", grid.nv)));
            }
            let a = crate::fiber::flatten(alpha, grid.nv);
            for (i, p) in prof.iter().enumerate() {
                values[a * nxn + i] += amp * p;
            }
        }
        Self::from_values(grid, values)
    }

    pub fn to_values(&self) -> Vec<Complex64> {
        let tr = SpectralTransform::new(&self.grid);
        let mut v = self.coeffs.as_slice().to_vec();
        par::for_each_chunk_mut(&mut v, self.grid.spatial_len(), |_, slab| tr.to_values(slab));
        v
    }

    /// `<self, other> = (2L)^n sum conj(other) self`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        self.grid.check_same(&other.grid)?;
        Ok(self.coeffs.dotc(&other.coeffs).conj() * self.grid.volume())
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.norm() * self.grid.volume().sqrt()
    }

    /// Norm computed from collocation values.
    pub fn collocation_norm(&self) -> f64 {
        let cell = self.grid.dx().powi(self.grid.dim as i32);
        let s: f64 = self.to_values().iter().map(|c| c.norm_sqr()).sum();
        (s * cell).sqrt()
    }

    pub fn scaled(&self, a: Complex64) -> StateVector {
        Self { grid: self.grid, coeffs: &self.coeffs * a }
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: Complex64, other: &StateVector) -> Result<StateVector> {
        self.grid.check_same(&other.grid)?;
        Ok(Self { grid: self.grid, coeffs: &self.coeffs + &other.coeffs * a })
    }

    /// Velocity flip `v -> -v`, i.e. multiplication by `(-1)^{|alpha|}`.
    pub fn flipped(&self) -> StateVector {
        let mut out = self.clone();
        let nxn = self.grid.spatial_len();
        for a in 0..self.grid.velocity_len() {
            let deg: usize = (0..self.grid.dim).map(|j| self.grid.alpha_component(a, j)).sum();
            if deg % 2 == 1 {
                out.coeffs.rows_mut(a * nxn, nxn).iter_mut().for_each(|c| *c = -*c);
            }
        }
        out
    }

    /// Relative mass in velocity modes with some `alpha_j >= tail_start`.
    pub fn tail_mass(&self) -> f64 {
        let nxn = self.grid.spatial_len();
        let start = self.grid.tail_start();
        let mut tail = 0.0;
        let mut total = 0.0;
        for a in 0..self.grid.velocity_len() {
            let m: f64 = self.coeffs.rows(a * nxn, nxn).iter().map(|c| c.norm_sqr()).sum();
            total += m;
            if (0..self.grid.dim).any(|j| self.grid.alpha_component(a, j) >= start) {
                tail += m;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }

    pub fn check_tail(&self, threshold: f64) -> Result<f64> {
        let mass = self.tail_mass();
        if mass > threshold {
            return Err(Error::HermiteTail { mass, threshold });
        }
        Ok(mass)
    }

    /// Velocity coefficient vector of one Fourier mode, in fiber ordering.
    pub fn mode_vector(&self, k: usize) -> CVector {
        let nxn = self.grid.spatial_len();
        CVector::from_iterator(
            self.grid.velocity_len(),
            (0..self.grid.velocity_len()).map(|a| self.coeffs[a * nxn + k]),
        )
    }

    pub fn set_mode_vector(&mut self, k: usize, c: &CVector) {
        let nxn = self.grid.spatial_len();
        for (a, v) in c.iter().enumerate() {
            self.coeffs[a * nxn + k] = *v;
        }
    }

    /// `sum_j ||a_j u||^2`.
    pub fn annihilation_norm_sq(&self) -> f64 {
        let nxn = self.grid.spatial_len();
        let mut s = 0.0;
        for a in 0..self.grid.velocity_len() {
            let deg: usize = (0..self.grid.dim).map(|j| self.grid.alpha_component(a, j)).sum();
            if deg > 0 {
                s += deg as f64 * self.coeffs.rows(a * nxn, nxn).iter().map(|c| c.norm_sqr()).sum::<f64>();
            }
        }
        s * self.grid.volume()
    }
}

/// Matrix-free `P0`, `W` and `P` on a fixed grid and potential.
#[derive(Debug, Clone)]
pub struct PhaseOperator {
    grid: PhaseGrid,
    potential: Potential,
    transform: SpectralTransform,
    kd: Vec<f64>,
    /// `-d_j V` at every collocation point, per axis.
    force: Vec<Vec<f64>>,
    sqrt: Vec<f64>,
}

impl PhaseOperator {
    pub fn new(grid: &PhaseGrid, spec: &PotentialSpec) -> Result<Self> {
        grid.validate()?;
        let potential = make_potential(spec, grid.dim)?;
        let nxn = grid.spatial_len();
        let mut force = vec![vec![0.0; nxn]; grid.dim];
        if !potential.is_zero() {
            #[allow(clippy::needless_range_loop)]
            for i in 0..nxn {
                let (_, g) = potential.value_and_gradient(&grid.point(i));
                for (j, gj) in g.iter().enumerate() {
                    force[j][i] = -gj;
                }
            }
        }
        Ok(Self {
            grid: *grid,
            potential,
            transform: SpectralTransform::new(grid),
            kd: grid.derivative_wavenumbers(),
            force,
            sqrt: (0..=grid.nv).map(|k| (k as f64).sqrt()).collect(),
        })
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn transform(&self) -> &SpectralTransform {
        &self.transform
    }

    /// Discretized Maxwell-Boltzmann state `phi_0(v) e^{-V(x)/2}`.
    pub fn maxwell_state(&self) -> StateVector {
        let nxn = self.grid.spatial_len();
        let mut values = vec![Complex64::default(); self.grid.len()];
        for (i, v) in values.iter_mut().take(nxn).enumerate() {
            *v = Complex64::new((-0.5 * self.potential.value(&self.grid.point(i))).exp(), 0.0);
        }
        StateVector::from_values(&self.grid, values).expect("length matches grid")
    }

    fn check(&self, u: &StateVector) -> Result<()> {
        self.grid.check_same(&u.grid)
    }

    pub fn apply_p0(&self, u: &StateVector) -> Result<StateVector> {
        self.check(u)?;
        Ok(StateVector { grid: self.grid, coeffs: self.apply_p0_vec(&u.coeffs) })
    }

    pub fn apply_w(&self, u: &StateVector) -> Result<StateVector> {
        self.check(u)?;
        Ok(StateVector { grid: self.grid, coeffs: self.apply_w_vec(&u.coeffs) })
    }

    pub fn apply_p(&self, u: &StateVector) -> Result<StateVector> {
        self.check(u)?;
        Ok(StateVector { grid: self.grid, coeffs: self.apply_p_vec(&u.coeffs) })
    }

    /// Flip-conjugated free operator `J P0 J`, the adjoint of `P0`.
    pub fn apply_p0_flipped(&self, u: &StateVector) -> Result<StateVector> {
        Ok(self.apply_p0(&u.flipped())?.flipped())
    }

    pub fn apply_p_vec(&self, u: &CVector) -> CVector {
        let mut out = self.apply_p0_vec(u);
        if !self.potential.is_zero() {
            out += self.apply_w_vec(u);
        }
        out
    }

    pub fn apply_p0_vec(&self, u: &CVector) -> CVector {
        let g = self.grid;
        let nxn = g.spatial_len();
        let src = u.as_slice();
        let mut out = vec![Complex64::default(); g.len()];
        par::for_each_chunk_mut(&mut out, nxn, |a, slab| {
            let mut deg = 0;
            for j in 0..g.dim {
                deg += g.alpha_component(a, j);
            }
            let base = &src[a * nxn..(a + 1) * nxn];
            for (o, s) in slab.iter_mut().zip(base) {
                *o = s * deg as f64;
            }
            for j in 0..g.dim {
                let aj = g.alpha_component(a, j);
                let stride = g.velocity_stride(j);
                let up = (aj + 1 < g.nv).then(|| (&src[(a + stride) * nxn..(a + stride + 1) * nxn], self.sqrt[aj + 1]));
                let down = (aj > 0).then(|| (&src[(a - stride) * nxn..(a - stride + 1) * nxn], self.sqrt[aj]));
                let kstride = g.nx.pow((g.dim - 1 - j) as u32);
                for (k, o) in slab.iter_mut().enumerate() {
                    let kj = self.kd[(k / kstride) % g.nx];
                    if kj == 0.0 {
                        continue;
                    }
                    let mut s = Complex64::default();
                    if let Some((row, c)) = up {
                        s += row[k] * c;
                    }
                    if let Some((row, c)) = down {
                        s += row[k] * c;
                    }
                    *o += I * kj * s;
                }
            }
        });
        CVector::from_vec(out)
    }

    pub fn apply_w_vec(&self, u: &CVector) -> CVector {
        let g = self.grid;
        let nxn = g.spatial_len();
        if self.potential.is_zero() {
            return CVector::zeros(g.len());
        }
        let mut vals = u.as_slice().to_vec();
        par::for_each_chunk_mut(&mut vals, nxn, |_, slab| self.transform.to_values(slab));
        let src = &vals;
        let mut out = vec![Complex64::default(); g.len()];
        par::for_each_chunk_mut(&mut out, nxn, |a, slab| {
            for j in 0..g.dim {
                let aj = g.alpha_component(a, j);
                let stride = g.velocity_stride(j);
                let f = &self.force[j];
                if aj + 1 < g.nv {
                    let row = &src[(a + stride) * nxn..(a + stride + 1) * nxn];
                    let c = 0.5 * self.sqrt[aj + 1];
                    for ((o, r), fi) in slab.iter_mut().zip(row).zip(f) {
                        *o += r * (fi * c);
                    }
                }
                if aj > 0 {
                    let row = &src[(a - stride) * nxn..(a - stride + 1) * nxn];
                    let c = -0.5 * self.sqrt[aj];
                    for ((o, r), fi) in slab.iter_mut().zip(row).zip(f) {
                        *o += r * (fi * c);
                    }
                }
            }
            self.transform.to_fourier(slab);
        });
        CVector::from_vec(out)
    }

    /// Free fiber operator of Fourier mode `k`, consistent with `apply_p0`.
    pub fn mode_fiber(&self, k: usize) -> Result<FiberOperator> {
        assemble_fiber(self.grid.dim, &self.grid.mode_frequency(k), self.grid.nv)
    }
}

/// Discretized Maxwell-Boltzmann state of `spec` on `grid`.
pub fn maxwell_state(grid: &PhaseGrid, spec: &PotentialSpec) -> Result<StateVector> {
    Ok(PhaseOperator::new(grid, spec)?.maxwell_state())
}

pub fn apply_p0(u: &StateVector) -> Result<StateVector> {
    PhaseOperator::new(&u.grid, &PotentialSpec::zero(u.grid.dim))?.apply_p0(u)
}

pub fn apply_w(u: &StateVector, spec: &PotentialSpec) -> Result<StateVector> {
    PhaseOperator::new(&u.grid, spec)?.apply_w(u)
}

pub fn apply_p(u: &StateVector, spec: &PotentialSpec) -> Result<StateVector> {
    PhaseOperator::new(&u.grid, spec)?.apply_p(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_state(grid: &PhaseGrid, seed: u64) -> StateVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<Complex64> =
            (0..grid.len()).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        StateVector::from_coeffs(grid, CVector::from_vec(v)).unwrap()
    }

    fn decay_spec() -> PotentialSpec {
        PotentialSpec::polynomial_decay(1, 0.3, 6.0)
    }

    #[test]
    fn grid_validation() {
        assert!(PhaseGrid::new(1, 8.0, 16, 8).is_ok());
        assert!(PhaseGrid::new(0, 8.0, 16, 8).is_err());
        assert!(PhaseGrid::new(4, 8.0, 16, 8).is_err());
        assert!(PhaseGrid::new(1, 8.0, 12, 8).is_err());
        assert!(PhaseGrid::new(1, 8.0, 4, 8).is_err());
        assert!(PhaseGrid::new(1, 8.0, 16, 3).is_err());
        assert!(PhaseGrid::new(1, -1.0, 16, 8).is_err());
    }

    #[test]
    fn wrap_guard() {
        let g = PhaseGrid::new(1, 48.0, 16, 4).unwrap();
        assert!(g.check_wrap(100.0, DEFAULT_WRAP_BETA).is_ok());
        let err = g.check_wrap(200.0, DEFAULT_WRAP_BETA).unwrap_err();
        assert!(err.is_trust_violation());
    }

    #[test]
    fn free_maxwell_is_pure_ground_mode() {
        let g = PhaseGrid::new(2, 6.0, 16, 4).unwrap();
        let m = maxwell_state(&g, &PotentialSpec::zero(2)).unwrap();
        let nxn = g.spatial_len();
        assert!((m.coeffs[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!(m.coeffs.iter().skip(1).all(|z| z.norm() < 1e-15));
        // unit velocity mass at every x, so the norm is the box volume
        assert!((m.norm() - g.volume().sqrt()).abs() < 1e-12);
        let vals = m.to_values();
        assert!(vals[..nxn].iter().all(|z| (z - 1.0).norm() < 1e-14));
        let p0 = apply_p0(&m).unwrap();
        assert_eq!(p0.coeffs.norm(), 0.0);
    }

    #[test]
    fn p0_accretivity_identity() {
        let g = PhaseGrid::new(1, 5.0, 16, 8).unwrap();
        for seed in 0..20 {
            let u = random_state(&g, seed);
            let pu = apply_p0(&u).unwrap();
            let q = pu.inner(&u).unwrap();
            let a = u.annihilation_norm_sq();
            assert!((q.re - a).abs() <= 1e-12 * a, "{} vs {a}", q.re);
        }
    }

    #[test]
    fn w_is_skew() {
        for (dim, spec) in [(1, decay_spec()), (2, PotentialSpec::polynomial_decay(2, 0.5, 3.0))] {
            let g = PhaseGrid::new(dim, 4.0, 8, 4).unwrap();
            for seed in 0..5 {
                let u = random_state(&g, seed);
                let wu = apply_w(&u, &spec).unwrap();
                let q = wu.inner(&u).unwrap();
                assert!(q.re.abs() <= 1e-12 * u.norm().powi(2), "{q}");
            }
        }
    }

    #[test]
    fn w_matches_dense_assembly() {
        // column-by-column assembly, then check skew-adjointness of the matrix
        let g = PhaseGrid::new(1, 3.0, 8, 4).unwrap();
        let op = PhaseOperator::new(&g, &decay_spec()).unwrap();
        let n = g.len();
        let mut m = nalgebra::DMatrix::<Complex64>::zeros(n, n);
        for col in 0..n {
            let mut e = CVector::zeros(n);
            e[col] = c(1.0, 0.0);
            m.set_column(col, &op.apply_w_vec(&e));
        }
        let herm = (&m + m.adjoint()).norm();
        assert!(herm < 1e-13 * m.norm(), "{herm}");
    }

    #[test]
    fn flip_adjoint_consistency() {
        let g = PhaseGrid::new(2, 4.0, 8, 4).unwrap();
        let op = PhaseOperator::new(&g, &PotentialSpec::polynomial_decay(2, 0.4, 2.0)).unwrap();
        for seed in 0..5 {
            let u = random_state(&g, 2 * seed);
            let w = random_state(&g, 2 * seed + 1);
            let lhs = op.apply_p0(&u).unwrap().inner(&w).unwrap();
            let rhs = u.inner(&op.apply_p0_flipped(&w).unwrap()).unwrap();
            assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm(), "{lhs} {rhs}");
            let lhs = op.apply_p(&u).unwrap().inner(&w).unwrap();
            let rhs = u.inner(&op.apply_p(&w.flipped()).unwrap().flipped()).unwrap();
            assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm(), "{lhs} {rhs}");
            assert!((u.flipped().norm() - u.norm()).abs() < 1e-12 * u.norm());
        }
    }

    #[test]
    fn maxwell_is_stationary() {
        let g = PhaseGrid::new(1, 48.0, 1024, 16).unwrap();
        let op = PhaseOperator::new(&g, &decay_spec()).unwrap();
        let m = op.maxwell_state();
        let r = op.apply_p(&m).unwrap().norm() / m.norm();
        assert!(r <= 1e-8, "{r}");
    }

    #[test]
    fn maxwell_example_values() {
        let g = PhaseGrid::new(1, 8.0, 32, 4).unwrap();
        let p = make_potential(&decay_spec(), 1).unwrap();
        let m = maxwell_state(&g, &decay_spec()).unwrap();
        let vals = m.to_values();
        for (i, x) in g.coordinates().iter().enumerate() {
            assert!((vals[i].re - (-0.5 * p.value(&[*x])).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn resolution_doubling() {
        // the bump needs dx ~ 0.04 before spectral convergence sets in
        let spec = PotentialSpec::compact_bump(1, 0.8, 3.0);
        let mut prev = f64::INFINITY;
        let floor = 1e-12;
        for nx in [128, 256, 512, 1024] {
            let g = PhaseGrid::new(1, 5.0, nx, 6).unwrap();
            let op = PhaseOperator::new(&g, &spec).unwrap();
            let m = op.maxwell_state();
            let r = op.apply_p(&m).unwrap().norm() / m.norm();
            if prev > floor {
                assert!(r <= prev / 10.0 || r <= floor, "nx = {nx}: {r} vs {prev}");
            }
            prev = r;
        }
        assert!(prev < 1e-11);
        // nv enters only through the alpha <= 1 modes, already exact
        let g1 = PhaseGrid::new(1, 5.0, 256, 6).unwrap();
        let g2 = PhaseGrid::new(1, 5.0, 256, 12).unwrap();
        let r = |g: &PhaseGrid| {
            let op = PhaseOperator::new(g, &spec).unwrap();
            let m = op.maxwell_state();
            op.apply_p(&m).unwrap().norm() / m.norm()
        };
        assert!((r(&g1) - r(&g2)).abs() < floor);
    }

    #[test]
    fn parseval() {
        let g = PhaseGrid::new(2, 3.0, 16, 4).unwrap();
        let u = random_state(&g, 7);
        assert!((u.norm() - u.collocation_norm()).abs() < 1e-12 * u.norm());
        let back = StateVector::from_values(&g, u.to_values()).unwrap();
        assert!((&back.coeffs - &u.coeffs).norm() < 1e-13 * u.coeffs.norm());
    }

    #[test]
    fn spectral_derivative_of_periodic_mode() {
        // u = phi_0(v) e^{i k x}: P0 u = i k phi_1 for k on the lattice
        let g = PhaseGrid::new(1, std::f64::consts::PI, 16, 4).unwrap();
        let k = 3.0;
        let u =
            StateVector::separable(&g, |x| Complex64::from_polar(1.0, k * x[0]), &[(vec![0], c(1.0, 0.0))]).unwrap();
        let pu = apply_p0(&u).unwrap();
        let expect =
            StateVector::separable(&g, |x| I * k * Complex64::from_polar(1.0, k * x[0]), &[(vec![1], c(1.0, 0.0))])
                .unwrap();
        assert!((&pu.coeffs - &expect.coeffs).norm() < 1e-13);
    }

    #[test]
    fn mode_fiber_matches_operator() {
        let g = PhaseGrid::new(2, 4.0, 8, 4).unwrap();
        let op = PhaseOperator::new(&g, &PotentialSpec::zero(2)).unwrap();
        let u = random_state(&g, 3);
        let pu = op.apply_p0(&u).unwrap();
        for k in [0, 5, 19, 63] {
            let f = op.mode_fiber(k).unwrap();
            let lhs = f.apply(&u.mode_vector(k));
            assert!((lhs - pu.mode_vector(k)).norm() < 1e-12);
        }
    }

    #[test]
    fn tail_monitor() {
        let g = PhaseGrid::new(1, 4.0, 8, 10).unwrap();
        let m = maxwell_state(&g, &PotentialSpec::zero(1)).unwrap();
        assert_eq!(m.tail_mass(), 0.0);
        let tail =
            StateVector::separable(&g, |_| c(1.0, 0.0), &[(vec![9], c(1e-2, 0.0)), (vec![0], c(1.0, 0.0))]).unwrap();
        assert!((tail.tail_mass() - 1e-4 / (1.0 + 1e-4)).abs() < 1e-12);
        assert!(matches!(tail.check_tail(DEFAULT_TAIL_THRESHOLD), Err(Error::HermiteTail { .. })));
    }

    #[test]
    fn dimension_mismatch() {
        let g1 = PhaseGrid::new(1, 4.0, 8, 4).unwrap();
        let g2 = PhaseGrid::new(1, 4.0, 16, 4).unwrap();
        let op = PhaseOperator::new(&g1, &PotentialSpec::zero(1)).unwrap();
        assert!(matches!(op.apply_p0(&StateVector::zeros(&g2)), Err(Error::DimensionMismatch(_))));
        assert!(StateVector::zeros(&g1).inner(&StateVector::zeros(&g2)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn accretivity_holds_for_random_states(seed in 0u64..10_000, l in 1.0f64..20.0) {
            let g = PhaseGrid::new(1, l, 16, 6).unwrap();
            let op = PhaseOperator::new(&g, &PotentialSpec::polynomial_decay(1, 0.7, 2.0)).unwrap();
            let u = random_state(&g, seed);
            let q = op.apply_p(&u).unwrap().inner(&u).unwrap();
            let a = u.annihilation_norm_sq();
            prop_assert!((q.re - a).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn flip_is_an_involution(seed in 0u64..10_000) {
            let g = PhaseGrid::new(2, 2.0, 8, 4).unwrap();
            let u = random_state(&g, seed);
            prop_assert_eq!(u.flipped().flipped(), u);
        }
    }
}
