//! Resolvent `R(z) = (P - z)^{-1}`: preconditioned Krylov solves, boundary
//! values on the spectrum, low-energy expansion fits, threshold identities of
//! the Maxwell-Boltzmann state and the high-energy decay of `||R(iy)||`.
//!
//! Branch bookkeeping: for `z = -lambda` with `lambda > 0`,
//! `z^{1/2} = i sqrt(lambda)` and `ln(-i z^{1/2}) = ln sqrt(lambda)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Dyn, LU};
use num_complex::Complex64;
use serde::Serialize;

use crate::constants::{a_leading, c_log};
use crate::error::{invalid, Error, Result};
use crate::evolve::SeparableProfile;
use crate::fiber::{axis_matrix, ladder_s, CMatrix, CVector};
use crate::green::{sqrt_branch, Parity};
use crate::linalg::{gmres, integrate_vec, lstsq, lstsq_real};
use crate::par;
use crate::phase_space::{apply_velocity_smoothing, weighted_pair, PhaseOperator, StateVector, WeightSpec};
use crate::special::gamma_half;

pub const GMRES_RESTART: usize = 60;
pub const GMRES_MAX_ITER: usize = 3000;

/// Above this many stored matrix entries the free blocks are refactored on
/// every application instead of cached.
const FACTOR_STORE_LIMIT: usize = 1 << 24;

/// Human-readable branch convention embedded in reports.
pub const BRANCH_CONVENTION: &str = "z = -lambda: z^(1/2) = i sqrt(lambda), ln(-i z^(1/2)) = ln sqrt(lambda)";

fn check_off_cut(z: Complex64) -> Result<()> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(invalid(format!("spectral parameter must be finite, got {z}")));
    }
    if z.im == 0.0 && z.re >= 0.0 {
        return Err(Error::OnSpectralCut(z.to_string()));
    }
    Ok(())
}

type BlockLu = LU<Complex64, Dyn, Dyn>;

/// Exact free resolvent `(P0 - z)^{-1}`, block diagonal over Fourier modes.
pub struct FreeResolvent<'a> {
    op: &'a PhaseOperator,
    z: Complex64,
    blocks: Option<Vec<BlockLu>>,
}

impl<'a> FreeResolvent<'a> {
    pub fn new(op: &'a PhaseOperator, z: Complex64) -> Result<Self> {
        check_off_cut(z)?;
        let g = op.grid();
        let block = g.velocity_len();
        let blocks = if g.spatial_len() * block * block <= FACTOR_STORE_LIMIT {
            let lus = par::map_range(g.spatial_len(), |k| Self::factor(op, z, k));
            Some(lus.into_iter().collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        Ok(Self { op, z, blocks })
    }

    fn factor(op: &PhaseOperator, z: Complex64, k: usize) -> Result<BlockLu> {
        let fib = op.mode_fiber(k)?;
        let n = fib.size();
        let lu = (fib.matrix() - CMatrix::identity(n, n) * z).lu();
        if !lu.is_invertible() {
            return Err(invalid(format!("z = {z} is an eigenvalue of the free block of mode {k}")));
        }
        Ok(lu)
    }

    pub fn z(&self) -> Complex64 {
        self.z
    }

    pub fn apply_vec(&self, b: &CVector) -> CVector {
        let g = self.op.grid();
        let nxn = g.spatial_len();
        let nb = g.velocity_len();
        let solved = par::map_range(nxn, |k| {
            let rhs = CVector::from_iterator(nb, (0..nb).map(|a| b[a * nxn + k]));
            match &self.blocks {
                Some(lus) => lus[k].solve(&rhs).expect("invertible block"),
                None => Self::factor(self.op, self.z, k)
                    .expect("factored at construction")
                    .solve(&rhs)
                    .expect("invertible block"),
            }
        });
        let mut out = CVector::zeros(b.len());
        for (k, s) in solved.iter().enumerate() {
            for (a, v) in s.iter().enumerate() {
                out[a * nxn + k] = *v;
            }
        }
        out
    }

    pub fn apply(&self, u: &StateVector) -> Result<StateVector> {
        if u.grid != *self.op.grid() {
            return Err(Error::DimensionMismatch("state and operator grids differ".into()));
        }
        Ok(StateVector { grid: u.grid, coeffs: self.apply_vec(&u.coeffs) })
    }
}

/// Solution of one shifted system with its achieved residual.
#[derive(Debug, Clone)]
pub struct ResolventSolve {
    pub state: StateVector,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// `(P - z)^{-1}` for one `z`, reusable across right-hand sides. GMRES is
/// right-preconditioned with the exact free resolvent, so it only has to
/// resolve `I + W R0(z)`.
pub struct ResolventSolver<'a> {
    op: &'a PhaseOperator,
    free: FreeResolvent<'a>,
}

impl<'a> ResolventSolver<'a> {
    pub fn new(op: &'a PhaseOperator, z: Complex64) -> Result<Self> {
        Ok(Self { op, free: FreeResolvent::new(op, z)? })
    }

    pub fn z(&self) -> Complex64 {
        self.free.z
    }

    pub fn solve(&self, f: &StateVector, tol: f64) -> Result<ResolventSolve> {
        if f.grid != *self.op.grid() {
            return Err(Error::DimensionMismatch("state and operator grids differ".into()));
        }
        if !(tol > 0.0) {
            return Err(invalid(format!("solver tolerance must be positive, got {tol}")));
        }
        let z = self.free.z;
        let shifted = |v: &CVector| self.op.apply_p_vec(v) - v * z;
        if self.op.potential().is_zero() {
            let u = self.free.apply_vec(&f.coeffs);
            let fnorm = f.coeffs.norm();
            let res = if fnorm > 0.0 { (shifted(&u) - &f.coeffs).norm() / fnorm } else { 0.0 };
            return Ok(ResolventSolve {
                state: StateVector { grid: f.grid, coeffs: u },
                iterations: 0,
                relative_residual: res,
            });
        }
        let rep = gmres(shifted, |v| self.free.apply_vec(v), &f.coeffs, tol, GMRES_RESTART, GMRES_MAX_ITER)?;
        Ok(ResolventSolve {
            state: StateVector { grid: f.grid, coeffs: rep.solution },
            iterations: rep.iterations,
            relative_residual: rep.relative_residual,
        })
    }
}

/// `(P - z)^{-1} f` with `||(P - z)u - f|| <= tol ||f||`.
pub fn solve_resolvent(op: &PhaseOperator, f: &StateVector, z: Complex64, tol: f64) -> Result<ResolventSolve> {
    ResolventSolver::new(op, z)?.solve(f, tol)
}

/// `<R(conj z) f, g>` and `conj <R(z) J g, J f>`, equal because `P* = J P J`.
pub fn flip_adjoint_pair(
    op: &PhaseOperator,
    f: &StateVector,
    g: &StateVector,
    z: Complex64,
    tol: f64,
) -> Result<(Complex64, Complex64)> {
    let lhs = solve_resolvent(op, f, z.conj(), tol)?.state.inner(g)?;
    let rhs = solve_resolvent(op, &g.flipped(), z, tol)?.state.inner(&f.flipped())?.conj();
    Ok((lhs, rhs))
}

/// Boundary-value trace `eps -> <R(lambda + i eps) f, g>`.
#[derive(Debug, Clone, Serialize)]
pub struct LapTrace {
    pub lambda: f64,
    pub eps: Vec<f64>,
    pub pairings: Vec<Complex64>,
    /// `||R(lambda + i eps) f|| / ||f||`.
    pub plain_norms: Vec<f64>,
    /// `|p_{k+1} - p_k|`.
    pub cauchy: Vec<f64>,
    pub monotone: bool,
    /// Mean `log10(cauchy_k / cauchy_{k+1})`.
    pub rate: f64,
    /// Richardson limit assuming `p(eps) = p0 + c eps + O(eps^2)`.
    pub limit: Complex64,
    pub iterations: Vec<usize>,
    pub residuals: Vec<f64>,
    pub weight: WeightSpec,
}

/// Solve at `z = lambda + i eps` along a decreasing schedule and certify
/// self-convergence of the weighted pairing.
pub fn lap_continuation(
    op: &PhaseOperator,
    f: &StateVector,
    g: &StateVector,
    lambda: f64,
    eps_schedule: &[f64],
    weight: &WeightSpec,
    tol: f64,
) -> Result<LapTrace> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(invalid(format!("continuation needs 0 < lambda < 1 (below the first threshold), got {lambda}")));
    }
    if eps_schedule.len() < 3
        || eps_schedule.iter().any(|e| !(*e > 0.0))
        || eps_schedule.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(invalid("eps schedule must hold at least 3 positive, strictly decreasing values"));
    }
    let fnorm = f.norm();
    let solves =
        par::map_range(eps_schedule.len(), |i| solve_resolvent(op, f, Complex64::new(lambda, eps_schedule[i]), tol));
    let mut pairings = Vec::new();
    let mut plain_norms = Vec::new();
    let mut iterations = Vec::new();
    let mut residuals = Vec::new();
    for s in solves {
        let s = s?;
        pairings.push(weighted_pair(&s.state, g, weight)?);
        plain_norms.push(s.state.norm() / fnorm);
        iterations.push(s.iterations);
        residuals.push(s.relative_residual);
    }
    let cauchy: Vec<f64> = pairings.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let monotone = cauchy.windows(2).all(|w| w[1] < w[0]);
    if cauchy.last() > cauchy.first() {
        return Err(Error::DivergentTrace(format!(
            "Cauchy differences grow from {:.3e} to {:.3e} at lambda = {lambda}",
            cauchy[0],
            cauchy[cauchy.len() - 1]
        )));
    }
    let rates: Vec<f64> =
        cauchy.windows(2).filter(|w| w[0] > 0.0 && w[1] > 0.0).map(|w| (w[0] / w[1]).log10()).collect();
    let rate = if rates.is_empty() { f64::INFINITY } else { rates.iter().sum::<f64>() / rates.len() as f64 };
    let k = eps_schedule.len() - 1;
    let r = eps_schedule[k - 1] / eps_schedule[k];
    let limit = (pairings[k] * r - pairings[k - 1]) / (r - 1.0);
    Ok(LapTrace {
        lambda,
        eps: eps_schedule.to_vec(),
        pairings,
        plain_norms,
        cauchy,
        monotone,
        rate,
        limit,
        iterations,
        residuals,
        weight: *weight,
    })
}

/// Default low-energy sample grid: 16 points, logarithmic in `[1e-4, 5e-2]`.
pub fn default_low_energy_grid() -> Vec<f64> {
    log_grid(1e-4, 5e-2, 16)
}

pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count.max(2) - 1) as f64).exp()).collect()
}

/// Model for `<R(-lambda) f, g>` near `lambda = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowEnergyModel {
    pub dim: usize,
    /// Terms retained beyond the leading special term, in each family.
    pub extra_terms: usize,
    /// Add a `z^{-1}` column to test for an eigenvalue at zero.
    pub include_pole: bool,
}

/// Default number of higher-order terms kept in low-energy fits.
pub const LOW_ENERGY_EXTRA_TERMS: usize = 2;

impl LowEnergyModel {
    pub fn new(dim: usize) -> Self {
        Self { dim, extra_terms: LOW_ENERGY_EXTRA_TERMS, include_pole: false }
    }

    pub fn parity(&self) -> Parity {
        if self.dim % 2 == 1 {
            Parity::Odd
        } else {
            Parity::Even
        }
    }

    /// Column labels and their values at `lambda`; the special column is first.
    fn columns(&self, lambda: f64) -> Result<Vec<(String, Complex64)>> {
        let z = Complex64::new(-lambda, 0.0);
        Ok(self.columns_with_root(z, sqrt_branch(z)?))
    }

    fn columns_with_root(&self, z: Complex64, root: Complex64) -> Vec<(String, Complex64)> {
        let n = self.dim as i32;
        let mut cols = Vec::new();
        match self.parity() {
            Parity::Odd => {
                cols.push((format!("z^({}/2)", n - 2), root.powi(n - 2)));
                let top_int = (n - 2).div_euclid(2) + self.extra_terms as i32;
                for k in 0..=top_int {
                    cols.push((format!("z^{k}"), z.powi(k)));
                }
                for j in 1..=self.extra_terms as i32 {
                    cols.push((format!("z^({}/2)", n - 2 + 2 * j), root.powi(n - 2 + 2 * j)));
                }
            }
            Parity::Even => {
                let m = (n - 2) / 2;
                let log = (-Complex64::i() * root).ln();
                cols.push((format!("z^{m} ln(-i z^(1/2))"), z.powi(m) * log));
                for k in 0..=m + self.extra_terms as i32 {
                    cols.push((format!("z^{k}"), z.powi(k)));
                }
                for j in 1..=self.extra_terms as i32 {
                    cols.push((format!("z^{} ln(-i z^(1/2))", m + j), z.powi(m + j) * log));
                }
            }
        }
        if self.include_pole {
            cols.push(("z^-1".into(), z.inv()));
        }
        cols
    }

    /// Closed-form constant multiplying `<f,M><M,g>` in the special term.
    pub fn special_constant(&self) -> Result<Complex64> {
        match (self.parity(), self.dim) {
            // one-dimensional kernel i e^{i z^{1/2}|x|} / (2 z^{1/2})
            (Parity::Odd, 1) => Ok(Complex64::new(0.0, 0.5)),
            (Parity::Odd, n) => a_leading(n),
            (Parity::Even, 2) => Ok(Complex64::new(-1.0 / (2.0 * PI), 0.0)),
            (Parity::Even, n) => Ok(Complex64::new(c_log(n)?, 0.0)),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelTerm {
    pub label: String,
    pub value: Complex64,
}

/// Fitted low-energy expansion of one pairing family.
#[derive(Debug, Clone, Serialize)]
pub struct ResolventFit {
    pub dim: usize,
    pub parity: Parity,
    pub branch: String,
    pub model: LowEnergyModel,
    pub lambda_samples: Vec<f64>,
    pub pairings: Vec<Complex64>,
    pub terms: Vec<ModelTerm>,
    pub leading_special: Complex64,
    pub predicted_special: Complex64,
    pub special_relative_error: f64,
    pub f_moment: Complex64,
    pub g_moment: Complex64,
    pub residual: f64,
    pub condition: f64,
    pub pole: Option<Complex64>,
    /// `|c_pole| / stderr(c_pole)`.
    pub pole_zscore: Option<f64>,
    /// `|c_pole| / lambda_min` relative to `max |pairing|`.
    pub pole_contribution: Option<f64>,
}

/// Least-squares fit of `pairings` to `model`.
pub fn fit_pairings(
    model: &LowEnergyModel,
    lambdas: &[f64],
    pairings: &[Complex64],
    f_moment: Complex64,
    g_moment: Complex64,
) -> Result<ResolventFit> {
    if lambdas.len() != pairings.len() {
        return Err(Error::DimensionMismatch(format!("{} samples vs {} pairings", lambdas.len(), pairings.len())));
    }
    if lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(invalid("low-energy samples must be positive lambda (z = -lambda)"));
    }
    let rows: Vec<Vec<(String, Complex64)>> = lambdas.iter().map(|&l| model.columns(l)).collect::<Result<_>>()?;
    let p = rows[0].len();
    if lambdas.len() <= p {
        return Err(invalid(format!("{} samples cannot determine {p} model terms", lambdas.len())));
    }
    let design = CMatrix::from_fn(lambdas.len(), p, |i, j| rows[i][j].1);
    let rhs = CVector::from_column_slice(pairings);
    let fit = lstsq(&design, &rhs)?;
    let terms: Vec<ModelTerm> = rows[0]
        .iter()
        .zip(fit.coeffs.iter())
        .map(|((label, _), v)| ModelTerm { label: label.clone(), value: *v })
        .collect();
    let special = fit.coeffs[0];
    let predicted = model.special_constant()? * f_moment * g_moment.conj();
    let special_relative_error =
        if predicted.norm() > 0.0 { (special - predicted).norm() / predicted.norm() } else { special.norm() };
    let (pole, pole_zscore, pole_contribution) = if model.include_pole {
        let c = fit.coeffs[p - 1];
        let resid = &design * &fit.coeffs - &rhs;
        let dof = (lambdas.len() - p) as f64;
        let sigma2 = resid.norm_squared() / dof;
        // covariance of the last coefficient through column-scaled normal equations
        let scales: Vec<f64> = (0..p).map(|j| design.column(j).norm()).collect();
        let scaled = CMatrix::from_fn(lambdas.len(), p, |i, j| design[(i, j)] / scales[j]);
        let normal = scaled.adjoint() * &scaled;
        let inv = normal.try_inverse().ok_or_else(|| Error::IllConditioned("normal matrix is singular".into()))?;
        let se = (sigma2 * inv[(p - 1, p - 1)].re).sqrt() / scales[p - 1];
        let lmin = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
        let pmax = pairings.iter().map(|z| z.norm()).fold(0.0, f64::max);
        (Some(c), Some(if se > 0.0 { c.norm() / se } else { f64::INFINITY }), Some(c.norm() / lmin / pmax))
    } else {
        (None, None, None)
    };
    Ok(ResolventFit {
        dim: model.dim,
        parity: model.parity(),
        branch: BRANCH_CONVENTION.into(),
        model: *model,
        lambda_samples: lambdas.to_vec(),
        pairings: pairings.to_vec(),
        terms,
        leading_special: special,
        predicted_special: predicted,
        special_relative_error,
        f_moment,
        g_moment,
        residual: fit.relative_residual,
        condition: fit.condition,
        pole,
        pole_zscore,
        pole_contribution,
    })
}

/// Residuals of a constrained refit with the special term pinned at its
/// predicted value, on the declared branch and on the flipped one
/// `z^{1/2} -> -z^{1/2}`. The remaining columns may only contribute real
/// values, as pairings of real data are real for `z < 0`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BranchCheck {
    pub right: f64,
    pub wrong: f64,
    pub inflation: f64,
}

fn pinned_residual(
    model: &LowEnergyModel,
    lambdas: &[f64],
    pairings: &[Complex64],
    pinned: Complex64,
    flip: bool,
) -> Result<f64> {
    let mut rows = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        let z = Complex64::new(-l, 0.0);
        let root = sqrt_branch(z)?;
        let right = model.columns_with_root(z, root);
        let used = if flip { model.columns_with_root(z, -root) } else { right.clone() };
        // phases fixed by the declared branch
        let cols: Vec<Complex64> = right
            .iter()
            .zip(&used)
            .map(|((_, r), (_, u))| if r.norm() > 0.0 { u * (r.conj() / r.norm()) } else { *u })
            .collect();
        rows.push(cols);
    }
    let p = rows[0].len() - 1;
    let m = lambdas.len();
    let phase0 = {
        let r = model
            .columns_with_root(Complex64::new(-lambdas[0], 0.0), sqrt_branch(Complex64::new(-lambdas[0], 0.0))?)[0]
            .1;
        r / r.norm()
    };
    let rhs: Vec<Complex64> = (0..m).map(|i| pairings[i] - pinned * rows[i][0] * phase0).collect();
    let design = DMatrix::from_fn(2 * m, p, |r, j| {
        let v = rows[r % m][j + 1];
        if r < m {
            v.re
        } else {
            v.im
        }
    });
    let b = nalgebra::DVector::from_fn(2 * m, |r, _| if r < m { rhs[r].re } else { rhs[r - m].im });
    let (coef, _) = lstsq_real(&design, &b)?;
    let resid = (&design * coef - &b).norm();
    let scale = pairings.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    Ok(resid / scale)
}

pub fn branch_check(
    model: &LowEnergyModel,
    lambdas: &[f64],
    pairings: &[Complex64],
    f_moment: Complex64,
    g_moment: Complex64,
) -> Result<BranchCheck> {
    if lambdas.len() != pairings.len() || lambdas.is_empty() {
        return Err(Error::DimensionMismatch(format!("{} samples vs {} pairings", lambdas.len(), pairings.len())));
    }
    let pinned = model.special_constant()? * f_moment * g_moment.conj();
    let right = pinned_residual(model, lambdas, pairings, pinned, false)?;
    let wrong = pinned_residual(model, lambdas, pairings, pinned, true)?;
    Ok(BranchCheck { right, wrong, inflation: wrong / right.max(f64::MIN_POSITIVE) })
}

/// Options for the radial low-energy quadrature.
#[derive(Debug, Clone, Copy)]
pub struct RadialResolventOptions {
    pub trunc: usize,
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for RadialResolventOptions {
    fn default() -> Self {
        Self { trunc: crate::evolve::RADIAL_TRUNCATION, rel_tol: 1e-12, max_panels: 4096 }
    }
}

/// `<R0(-lambda) f, g>` for separable radial data via the fiber route.
pub fn free_resolvent_pairings_radial(
    n: usize,
    f: &SeparableProfile,
    g: &SeparableProfile,
    lambdas: &[f64],
    opts: &RadialResolventOptions,
) -> Result<Vec<Complex64>> {
    if n == 0 {
        return Err(invalid("dimension must be >= 1"));
    }
    if lambdas.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(invalid("lambda must be positive and finite"));
    }
    let trunc = opts.trunc;
    f.radial.validate()?;
    g.radial.validate()?;
    let fc = f.velocity.components(n, trunc);
    let gc = g.velocity.components(n, trunc);
    let sphere = 2.0 * PI.powf(n as f64 / 2.0) / gamma_half(n as i64)?;
    let norm = sphere / (2.0 * PI).powi(n as i32);
    let width = 0.5 * (f.radial.sigma.powi(2) + g.radial.sigma.powi(2));
    let rho_max = (40.0 / width).sqrt();
    let pairing_at = |lambda: f64| -> Result<Complex64> {
        let integrand = |rho: f64| -> Vec<Complex64> {
            let weight = norm * rho.powi(n as i32 - 1) * f.radial.fourier(n, rho) * g.radial.fourier(n, rho);
            if weight == 0.0 {
                return vec![Complex64::new(0.0, 0.0)];
            }
            let a = axis_matrix(rho, trunc);
            let mut s = Complex64::new(0.0, 0.0);
            for ((cf, qf), (cg, _)) in fc.iter().zip(&gc) {
                let shift = Complex64::new(lambda + *qf as f64, 0.0);
                let m = &a + CMatrix::identity(trunc, trunc) * shift;
                let u = m.lu().solve(cf).expect("accretive block shifted by lambda > 0 is invertible");
                s += cg.dotc(&u);
            }
            vec![s * weight]
        };
        // breakpoints resolve the scale sqrt(lambda) of the threshold structure
        let mut cuts = vec![0.0];
        let mut b = lambda.sqrt();
        while b < rho_max {
            cuts.push(b);
            b *= 4.0;
        }
        cuts.push(rho_max);
        let mut total = Complex64::new(0.0, 0.0);
        for w in cuts.windows(2) {
            let (v, _) = integrate_vec(integrand, w[0], w[1], 1e-300, opts.rel_tol, opts.max_panels)?;
            total += v[0];
        }
        Ok(total)
    };
    par::map_range(lambdas.len(), |i| pairing_at(lambdas[i])).into_iter().collect()
}

/// Low-energy fit of the free resolvent for separable radial data, any `n`.
pub fn fit_low_energy_fiber(
    n: usize,
    f: &SeparableProfile,
    g: &SeparableProfile,
    lambdas: &[f64],
    model: &LowEnergyModel,
    opts: &RadialResolventOptions,
) -> Result<ResolventFit> {
    if model.dim != n {
        return Err(Error::DimensionMismatch(format!("model dimension {} vs data dimension {n}", model.dim)));
    }
    let p = free_resolvent_pairings_radial(n, f, g, lambdas, opts)?;
    let fm = Complex64::new(f.maxwell_moment(n), 0.0);
    let gm = Complex64::new(g.maxwell_moment(n), 0.0);
    fit_pairings(model, lambdas, &p, fm, gm)
}

/// `<R(-lambda) f, g>` on the grid for every `lambda`.
pub fn grid_resolvent_pairings(
    op: &PhaseOperator,
    f: &StateVector,
    g: &StateVector,
    lambdas: &[f64],
    tol: f64,
) -> Result<Vec<Complex64>> {
    let out = par::map_range(lambdas.len(), |i| -> Result<Complex64> {
        let s = solve_resolvent(op, f, Complex64::new(-lambdas[i], 0.0), tol)?;
        s.state.inner(g)
    });
    out.into_iter().collect()
}

/// Low-energy fit on the phase-space grid.
pub fn fit_low_energy_grid(
    op: &PhaseOperator,
    f: &StateVector,
    g: &StateVector,
    lambdas: &[f64],
    model: &LowEnergyModel,
    tol: f64,
) -> Result<ResolventFit> {
    if model.dim != op.grid().dim {
        return Err(Error::DimensionMismatch(format!(
            "model dimension {} vs grid dimension {}",
            model.dim,
            op.grid().dim
        )));
    }
    let p = grid_resolvent_pairings(op, f, g, lambdas, tol)?;
    let m = op.maxwell_state();
    fit_pairings(model, lambdas, &p, f.inner(&m)?, g.inner(&m)?)
}

/// Residuals of the Maxwell-Boltzmann threshold identities.
#[derive(Debug, Clone, Serialize)]
pub struct ThresholdReport {
    pub lambdas: Vec<f64>,
    /// `||(1 + R0 W) M + lambda R0 M|| / ||M||`.
    pub identity_residuals: Vec<f64>,
    /// `||(1 + R0 W) M - M0|| / ||M||`.
    pub distance_to_free: Vec<f64>,
    /// Same with `M0` replaced by its box-mean multiple `m M0`.
    pub distance_torus_corrected: Vec<f64>,
    /// Mean of `e^{-V/2}` over the box.
    pub box_mean: f64,
    /// `||P M|| / ||M||`.
    pub stationarity: f64,
}

/// Evaluate `(1 + R0(lambda) W) M = -lambda R0(lambda) M` for `lambda < 0`.
pub fn threshold_identity_check(op: &PhaseOperator, lambdas: &[f64]) -> Result<ThresholdReport> {
    if lambdas.iter().any(|l| !(*l < 0.0)) {
        return Err(invalid("threshold identities are evaluated at negative lambda"));
    }
    let m = op.maxwell_state();
    let mnorm = m.norm();
    let wm = op.apply_w(&m)?;
    let box_mean = m.coeffs[0].re;
    let mut m0 = StateVector::zeros(op.grid());
    m0.coeffs[0] = Complex64::new(1.0, 0.0);
    let stationarity = op.apply_p(&m)?.norm() / mnorm;
    let mut identity_residuals = Vec::new();
    let mut distance_to_free = Vec::new();
    let mut distance_torus_corrected = Vec::new();
    for &l in lambdas {
        let r0 = FreeResolvent::new(op, Complex64::new(l, 0.0))?;
        let lhs = m.axpy(Complex64::new(1.0, 0.0), &r0.apply(&wm)?)?;
        let rm = r0.apply(&m)?;
        identity_residuals.push(lhs.axpy(Complex64::new(l, 0.0), &rm)?.norm() / mnorm);
        distance_to_free.push(lhs.axpy(Complex64::new(-1.0, 0.0), &m0)?.norm() / mnorm);
        distance_torus_corrected.push(lhs.axpy(Complex64::new(-box_mean, 0.0), &m0)?.norm() / mnorm);
    }
    Ok(ThresholdReport {
        lambdas: lambdas.to_vec(),
        identity_residuals,
        distance_to_free,
        distance_torus_corrected,
        box_mean,
        stationarity,
    })
}

/// `lambda = -10^{-k}`, `k = 1..5`.
pub fn vanishing_lambdas() -> Vec<f64> {
    (1..=5).map(|k| -(10f64.powi(-k))).collect()
}

/// Trace of `||lambda R0(lambda) u||` as `lambda -> 0^-`.
#[derive(Debug, Clone, Serialize)]
pub struct VanishingTrace {
    pub lambdas: Vec<f64>,
    pub norms: Vec<f64>,
    /// `norm_{k+1} / norm_k`.
    pub ratios: Vec<f64>,
    /// Log-log slope of the norms against `|lambda|`.
    pub slope: f64,
    pub decreasing: bool,
}

pub fn lambda_vanishing_check(op: &PhaseOperator, u: &StateVector, lambdas: &[f64]) -> Result<VanishingTrace> {
    if lambdas.len() < 2 || lambdas.iter().any(|l| !(*l < 0.0)) {
        return Err(invalid("need at least two negative lambda values"));
    }
    let mut norms = Vec::new();
    for &l in lambdas {
        let r0 = FreeResolvent::new(op, Complex64::new(l, 0.0))?;
        norms.push(r0.apply(u)?.norm() * l.abs());
    }
    let ratios: Vec<f64> = norms.windows(2).map(|w| w[1] / w[0]).collect();
    let decreasing = ratios.iter().all(|r| *r < 1.0);
    let x = DMatrix::from_fn(lambdas.len(), 2, |i, j| if j == 0 { 1.0 } else { lambdas[i].abs().ln() });
    let y = nalgebra::DVector::from_iterator(norms.len(), norms.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()));
    let (coef, _) = lstsq_real(&x, &y)?;
    Ok(VanishingTrace { lambdas: lambdas.to_vec(), norms, ratios, slope: coef[1], decreasing })
}

/// High-energy trace of the resolvent along the imaginary axis.
#[derive(Debug, Clone, Serialize)]
pub struct HighEnergyReport {
    pub ys: Vec<f64>,
    /// `||R(iy) f|| / ||f||`.
    pub norms: Vec<f64>,
    /// `||(1 - Delta_v + v^2)^{1/2} R(iy) f|| / ||f||`.
    pub smoothing_norms: Vec<f64>,
    pub slope: f64,
    pub smoothing_slope: f64,
    /// Extent of the imaginary part of the discrete numerical range.
    pub resolved_limit: f64,
    pub resolved: Vec<bool>,
    pub iterations: Vec<usize>,
    pub residuals: Vec<f64>,
}

impl HighEnergyReport {
    pub fn all_resolved(&self) -> bool {
        self.resolved.iter().all(|r| *r)
    }
}

fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let x = DMatrix::from_fn(xs.len(), 2, |i, j| if j == 0 { 1.0 } else { xs[i].ln() });
    let y = nalgebra::DVector::from_iterator(ys.len(), ys.iter().map(|v| v.ln()));
    Ok(lstsq_real(&x, &y)?.0[1])
}

/// Largest `|Im <P0 u, u>|` the grid can represent: `max |k| * max spec(S)`.
pub fn resolved_imaginary_extent(op: &PhaseOperator) -> f64 {
    let g = op.grid();
    let kmax = g.derivative_wavenumbers().iter().fold(0.0f64, |a, k| a.max(k.abs())) * (g.dim as f64).sqrt();
    let smax = nalgebra::SymmetricEigen::new(ladder_s(g.nv)).eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    kmax * smax
}

/// `||R(iy) f||` and its velocity-smoothing variant over `ys`.
pub fn high_energy_scan(op: &PhaseOperator, f: &StateVector, ys: &[f64], tol: f64) -> Result<HighEnergyReport> {
    if ys.len() < 2 || ys.iter().any(|y| !(*y > 0.0)) || ys.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("y grid must hold at least two positive increasing values"));
    }
    let fnorm = f.norm();
    let limit = resolved_imaginary_extent(op);
    let mut norms = Vec::new();
    let mut smoothing_norms = Vec::new();
    let mut iterations = Vec::new();
    let mut residuals = Vec::new();
    for &y in ys {
        let s = solve_resolvent(op, f, Complex64::new(0.0, y), tol)?;
        norms.push(s.state.norm() / fnorm);
        smoothing_norms.push(apply_velocity_smoothing(&s.state).norm() / fnorm);
        iterations.push(s.iterations);
        residuals.push(s.relative_residual);
    }
    Ok(HighEnergyReport {
        slope: loglog_slope(ys, &norms)?,
        smoothing_slope: loglog_slope(ys, &smoothing_norms)?,
        resolved: ys.iter().map(|y| *y <= limit).collect(),
        resolved_limit: limit,
        ys: ys.to_vec(),
        norms,
        smoothing_norms,
        iterations,
        residuals,
    })
}

/// `(||(P0(xi) - iy)^{-1}||_2, 1 / dist(iy, B))` for one axis, with `B` the
/// box `[0, J-1] x xi [min spec S, max spec S]` containing the numerical range.
pub fn fiber_high_energy_bound(xi: f64, trunc: usize, y: f64) -> Result<(f64, f64)> {
    let a = axis_matrix(xi, trunc);
    let shifted = &a - CMatrix::identity(trunc, trunc) * Complex64::new(0.0, y);
    let sv = shifted.singular_values();
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let spec = nalgebra::SymmetricEigen::new(ladder_s(trunc)).eigenvalues;
    let (lo, hi) = spec.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(xi * v), h.max(xi * v)));
    let dist = if y > hi {
        y - hi
    } else if y < lo {
        lo - y
    } else {
        0.0
    };
    Ok((1.0 / smin, if dist > 0.0 { 1.0 / dist } else { f64::INFINITY }))
}
