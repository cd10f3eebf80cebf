//! Weighted pairings `<<x>^s Lambda^r f, g>` with
//! `Lambda^2 = 1 + <D_v>^2 + |v|^2 + <D_x>^{2/3}`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PhaseGrid, PhaseOperator, PotentialSpec, StateVector};
use crate::error::{invalid, Result};
use crate::fiber::CVector;
use crate::par;

/// Sobolev index `r` and spatial weight exponent `s`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WeightSpec {
    pub r: f64,
    pub s: f64,
}

impl WeightSpec {
    pub fn new(r: f64, s: f64) -> Result<Self> {
        if !r.is_finite() || !s.is_finite() {
            return Err(invalid(format!("weight indices must be finite, got r = {r}, s = {s}")));
        }
        Ok(Self { r, s })
    }
}

/// Per-axis `-d_v^2 + v^2` in the Hermite basis. With `v = a + a^+` and
/// `d_v = (a - a^+)/2` it equals `(3/4)(a^2 + a^+2) + (5/4)(2N + 1)`.
fn axis_oscillator(nv: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(nv, nv);
    for m in 0..nv {
        h[(m, m)] = 1.25 * (2 * m + 1) as f64;
        if m + 2 < nv {
            let b = 0.75 * (((m + 1) * (m + 2)) as f64).sqrt();
            h[(m, m + 2)] = b;
            h[(m + 2, m)] = b;
        }
    }
    h
}

/// Per-axis `d_v^2 = (a^2 + a^+2 - 2N - 1)/4`.
fn axis_second_derivative(nv: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(nv, nv);
    for m in 0..nv {
        h[(m, m)] = -0.25 * (2 * m + 1) as f64;
        if m + 2 < nv {
            let b = 0.25 * (((m + 1) * (m + 2)) as f64).sqrt();
            h[(m, m + 2)] = b;
            h[(m + 2, m)] = b;
        }
    }
    h
}

/// Per-axis `v^2 = a^2 + a^+2 + 2N + 1`.
fn axis_v_squared(nv: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(nv, nv);
    for m in 0..nv {
        h[(m, m)] = (2 * m + 1) as f64;
        if m + 2 < nv {
            let b = (((m + 1) * (m + 2)) as f64).sqrt();
            h[(m, m + 2)] = b;
            h[(m + 2, m)] = b;
        }
    }
    h
}

/// Apply `mat` along velocity axis `axis` of the coefficient tensor.
fn apply_axis(grid: &PhaseGrid, coeffs: &CVector, axis: usize, mat: &DMatrix<f64>) -> CVector {
    let nxn = grid.spatial_len();
    let stride = grid.velocity_stride(axis);
    let src = coeffs.as_slice();
    let mut out = vec![Complex64::default(); grid.len()];
    par::for_each_chunk_mut(&mut out, nxn, |a, slab| {
        let aj = grid.alpha_component(a, axis);
        let base = a - aj * stride;
        for b in 0..grid.nv {
            let m = mat[(aj, b)];
            if m == 0.0 {
                continue;
            }
            let row = &src[(base + b * stride) * nxn..(base + b * stride + 1) * nxn];
            for (o, r) in slab.iter_mut().zip(row) {
                *o += r * m;
            }
        }
    });
    CVector::from_vec(out)
}

fn sum_over_axes(grid: &PhaseGrid, coeffs: &CVector, mat: &DMatrix<f64>) -> CVector {
    let mut out = CVector::zeros(grid.len());
    for j in 0..grid.dim {
        out += apply_axis(grid, coeffs, j, mat);
    }
    out
}

/// Multiply by `<D_x>^{p}` in Fourier space.
fn apply_dx_power(grid: &PhaseGrid, coeffs: &CVector, p: f64) -> CVector {
    let nxn = grid.spatial_len();
    let sym: Vec<f64> = (0..nxn).map(|k| (1.0 + grid.mode_norm_sq(k)).powf(p / 2.0)).collect();
    let mut out = coeffs.clone();
    for (i, c) in out.iter_mut().enumerate() {
        *c *= sym[i % nxn];
    }
    out
}

/// `<x>^s Lambda^r f`.
pub fn apply_weight(f: &StateVector, w: &WeightSpec) -> Result<StateVector> {
    let g = f.grid;
    let nxn = g.spatial_len();
    let mut coeffs = f.coeffs.clone();
    if w.r != 0.0 {
        let eig = SymmetricEigen::new(axis_oscillator(g.nv));
        let q = eig.eigenvectors;
        let qt = q.transpose();
        for j in 0..g.dim {
            coeffs = apply_axis(&g, &coeffs, j, &qt);
        }
        for (i, c) in coeffs.iter_mut().enumerate() {
            let a = i / nxn;
            let k = i % nxn;
            let vel: f64 = (0..g.dim).map(|j| eig.eigenvalues[g.alpha_component(a, j)]).sum();
            let lam2 = 2.0 + vel + (1.0 + g.mode_norm_sq(k)).powf(1.0 / 3.0);
            *c *= lam2.powf(w.r / 2.0);
        }
        for j in 0..g.dim {
            coeffs = apply_axis(&g, &coeffs, j, &q);
        }
    }
    if w.s != 0.0 {
        let weight: Vec<f64> =
            (0..nxn).map(|i| (1.0 + g.point(i).iter().map(|x| x * x).sum::<f64>()).powf(w.s / 2.0)).collect();
        let mut vals = StateVector { grid: g, coeffs }.to_values();
        for (i, v) in vals.iter_mut().enumerate() {
            *v *= weight[i % nxn];
        }
        coeffs = StateVector::from_values(&g, vals)?.coeffs;
    }
    Ok(StateVector { grid: g, coeffs })
}

/// `(1 - Delta_v + |v|^2)^{1/2} f`.
pub fn apply_velocity_smoothing(f: &StateVector) -> StateVector {
    let g = f.grid;
    let nxn = g.spatial_len();
    let eig = SymmetricEigen::new(axis_oscillator(g.nv));
    let q = eig.eigenvectors;
    let qt = q.transpose();
    let mut coeffs = f.coeffs.clone();
    for j in 0..g.dim {
        coeffs = apply_axis(&g, &coeffs, j, &qt);
    }
    for (i, c) in coeffs.iter_mut().enumerate() {
        let a = i / nxn;
        let vel: f64 = (0..g.dim).map(|j| eig.eigenvalues[g.alpha_component(a, j)]).sum();
        *c *= (1.0 + vel).sqrt();
    }
    for j in 0..g.dim {
        coeffs = apply_axis(&g, &coeffs, j, &q);
    }
    StateVector { grid: g, coeffs }
}

/// `<<x>^s Lambda^r f, g>`.
pub fn weighted_pair(f: &StateVector, g: &StateVector, w: &WeightSpec) -> Result<Complex64> {
    apply_weight(f, w)?.inner(g)
}

/// `||<x>^s Lambda^r f||`.
pub fn weighted_norm(f: &StateVector, w: &WeightSpec) -> Result<f64> {
    Ok(apply_weight(f, w)?.norm())
}

/// `(||Delta_v f|| + ||v^2 f|| + ||<D_x>^{2/3} f||) / (||P0 f|| + ||f||)`.
pub fn subelliptic_ratio(op: &PhaseOperator, f: &StateVector) -> Result<f64> {
    let g = f.grid;
    let lap = StateVector { grid: g, coeffs: sum_over_axes(&g, &f.coeffs, &axis_second_derivative(g.nv)) };
    let v2 = StateVector { grid: g, coeffs: sum_over_axes(&g, &f.coeffs, &axis_v_squared(g.nv)) };
    let dx = StateVector { grid: g, coeffs: apply_dx_power(&g, &f.coeffs, 2.0 / 3.0) };
    let num = lap.norm() + v2.norm() + dx.norm();
    let den = op.apply_p0(f)?.norm() + f.norm();
    Ok(num / den)
}

/// Maximum and spread of the subelliptic ratio over a random smooth family.
#[derive(Debug, Clone, Serialize)]
pub struct SubellipticReport {
    pub samples: usize,
    pub max_ratio: f64,
    pub min_ratio: f64,
    pub seed: u64,
}

/// Random smooth localized state: a Gaussian spatial bump times Hermite
/// amplitudes decaying like `2^{-|alpha|}`, confined to the lower half of the
/// velocity truncation.
pub fn random_smooth_state(grid: &PhaseGrid, rng: &mut ChaCha8Rng) -> Result<StateVector> {
    let l = grid.box_half_width;
    let center: Vec<f64> = (0..grid.dim).map(|_| rng.random_range(-0.25 * l..0.25 * l)).collect();
    let width = rng.random_range(0.5..2.0f64).min(0.2 * l);
    let kick: Vec<f64> = (0..grid.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut modes = Vec::new();
    let half = grid.nv / 2;
    for a in 0..grid.velocity_len() {
        let alpha: Vec<usize> = (0..grid.dim).map(|j| grid.alpha_component(a, j)).collect();
        if alpha.iter().any(|&x| x >= half) {
            continue;
        }
        let deg: usize = alpha.iter().sum();
        let amp = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * 0.5f64.powi(deg as i32);
        modes.push((alpha, amp));
    }
    StateVector::separable(
        grid,
        |x| {
            let r2: f64 = x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
            let phase: f64 = x.iter().zip(&kick).map(|(a, b)| a * b).sum();
            Complex64::from_polar((-r2 / (2.0 * width * width)).exp(), phase)
        },
        &modes,
    )
}

/// Measured supremum of [`subelliptic_ratio`] over `count` random states.
pub fn subelliptic_diagnostic(
    grid: &PhaseGrid,
    spec: &PotentialSpec,
    count: usize,
    seed: u64,
) -> Result<SubellipticReport> {
    let op = PhaseOperator::new(grid, spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio: f64 = 0.0;
    let mut min_ratio = f64::INFINITY;
    for _ in 0..count {
        let f = random_smooth_state(grid, &mut rng)?;
        let r = subelliptic_ratio(&op, &f)?;
        max_ratio = max_ratio.max(r);
        min_ratio = min_ratio.min(r);
    }
    Ok(SubellipticReport { samples: count, max_ratio, min_ratio, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::maxwell_state;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_weight_is_plain_pairing() {
        let g = PhaseGrid::new(1, 4.0, 16, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_smooth_state(&g, &mut rng).unwrap();
        let h = random_smooth_state(&g, &mut rng).unwrap();
        let w = WeightSpec::default();
        assert_eq!(weighted_pair(&f, &h, &w).unwrap(), f.inner(&h).unwrap());
    }

    #[test]
    fn spatial_weight_is_monotone_away_from_origin() {
        let g = PhaseGrid::new(1, 8.0, 64, 4).unwrap();
        let f = StateVector::separable(
            &g,
            |x| c((-(x[0] - 4.0).powi(2)).exp() + (-(x[0] + 3.0).powi(2)).exp(), 0.0),
            &[(vec![0], c(1.0, 0.0))],
        )
        .unwrap();
        let mut prev = 0.0;
        for s in [0.0, 0.5, 1.0, 2.0] {
            let n = weighted_norm(&f, &WeightSpec::new(0.0, s).unwrap()).unwrap();
            assert!(n >= prev);
            prev = n;
        }
    }

    #[test]
    fn oscillator_matches_ladder_products() {
        let nv = 12;
        let h = axis_oscillator(nv);
        let d2 = axis_second_derivative(nv);
        let v2 = axis_v_squared(nv);
        let diff = &h - (v2 - d2);
        assert!(diff.norm() < 1e-14);
        // untruncated ground state: (-d^2 + v^2) phi_0 = 5/4 phi_0 + (3/4) sqrt(2) phi_2
        assert!((h[(0, 0)] - 1.25).abs() < 1e-15);
        assert!((h[(2, 0)] - 0.75 * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn lambda_power_composes() {
        let g = PhaseGrid::new(1, 4.0, 16, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_smooth_state(&g, &mut rng).unwrap();
        let once = apply_weight(&f, &WeightSpec::new(2.0, 0.0).unwrap()).unwrap();
        let twice = apply_weight(
            &apply_weight(&f, &WeightSpec::new(1.0, 0.0).unwrap()).unwrap(),
            &WeightSpec::new(1.0, 0.0).unwrap(),
        )
        .unwrap();
        assert!((&once.coeffs - &twice.coeffs).norm() < 1e-11 * once.coeffs.norm());
        // Lambda^2 is 2 + sum(-d^2 + v^2) + <D_x>^{2/3} exactly
        let direct = sum_over_axes(&g, &f.coeffs, &axis_oscillator(g.nv))
            + &f.coeffs * c(2.0, 0.0)
            + apply_dx_power(&g, &f.coeffs, 2.0 / 3.0);
        assert!((&once.coeffs - direct).norm() < 1e-11 * once.coeffs.norm());
    }

    #[test]
    fn velocity_smoothing_squares_to_oscillator() {
        let g = PhaseGrid::new(1, 4.0, 16, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = random_smooth_state(&g, &mut rng).unwrap();
        let twice = apply_velocity_smoothing(&apply_velocity_smoothing(&f));
        let direct = sum_over_axes(&g, &f.coeffs, &axis_oscillator(g.nv)) + &f.coeffs;
        assert!((&twice.coeffs - direct).norm() < 1e-11 * twice.coeffs.norm());
    }

    #[test]
    fn positive_r_dominates_plain_norm() {
        let g = PhaseGrid::new(1, 4.0, 16, 8).unwrap();
        let m = maxwell_state(&g, &PotentialSpec::zero(1)).unwrap();
        let n0 = m.norm();
        let n1 = weighted_norm(&m, &WeightSpec::new(1.0, 0.0).unwrap()).unwrap();
        assert!(n1 > n0);
    }

    #[test]
    fn subelliptic_diagnostic_is_finite_and_reproducible() {
        let g = PhaseGrid::new(1, 6.0, 32, 12).unwrap();
        let spec = PotentialSpec::zero(1);
        let a = subelliptic_diagnostic(&g, &spec, 8, 42).unwrap();
        let b = subelliptic_diagnostic(&g, &spec, 8, 42).unwrap();
        assert!(a.max_ratio.is_finite() && a.max_ratio > 0.0);
        assert_eq!(a.max_ratio, b.max_ratio);
        assert!(a.min_ratio <= a.max_ratio);
    }
}
