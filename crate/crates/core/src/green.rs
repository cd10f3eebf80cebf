//! Resolvent kernel of the Laplacian in dimension `n` and numerical
//! extraction of its low-energy expansion coefficients.
//!
//! Odd `n`: `A r^{n-2} = sum_k a_{n,k} (z^{1/2} r)^k`, with `a_{n,k} = 0` for
//! odd `k < n-2`.
//! Even `n`: `A r^{n-2} = sum_k d_{n,k} (z r^2)^k
//!   + (z r^2)^{(n-2)/2} ln(-i z^{1/2} r) sum_k c_{n,k} (z r^2)^k`.
//!
//! Coefficients are fitted at fixed `r` with `z = -lambda` on a logarithmic
//! `lambda` grid, so the design matrix is a Vandermonde in `lambda^{1/2}`
//! (odd) or in `lambda` and `lambda ln lambda` (even).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::constants::{a_leading, c_log};
use crate::error::{invalid, Error, Result};
use crate::fiber::{CMatrix, CVector};
use crate::linalg::lstsq;
use crate::special::{gamma_half, hankel_h1};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// `z^{1/2}` on the branch with positive imaginary part, cut along `[0, inf)`.
pub fn sqrt_branch(z: Complex64) -> Result<Complex64> {
    if z.im == 0.0 && z.re >= 0.0 {
        return Err(Error::OnSpectralCut(z.to_string()));
    }
    Ok(I * (-z).sqrt())
}

/// `A(r; z) = (i/4) (z^{1/2} / (2 pi r))^{n/2-1} H^{(1)}_{n/2-1}(z^{1/2} r)`.
pub fn green_kernel(n: usize, z: Complex64, r: f64) -> Result<Complex64> {
    if n < 3 {
        return Err(invalid(format!("Green kernel implemented for n >= 3, got {n}")));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(invalid(format!("separation must be positive, got {r}")));
    }
    let k = sqrt_branch(z)?;
    let nu = n as f64 / 2.0 - 1.0;
    let h = hankel_h1(nu, k * r)?;
    Ok(I / 4.0 * (k / (2.0 * PI * r)).powf(nu) * h)
}

/// `Gamma(n/2 - 1) / (4 pi^{n/2})`, the coefficient of `r^{2-n}` at `z = 0`.
pub fn newtonian_constant(n: usize) -> Result<f64> {
    Ok(gamma_half(n as i64 - 2)? / (4.0 * PI.powf(n as f64 / 2.0)))
}

/// Identifies one fitted coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "k")]
pub enum Term {
    /// Odd `n`: coefficient of `(z^{1/2} r)^k`.
    HalfPower(usize),
    /// Even `n`: `d_{n,k}`, coefficient of `(z r^2)^k`.
    Regular(usize),
    /// Even `n`: `c_{n,k}`, coefficient of the logarithmic series.
    Log(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Odd,
    Even,
}

#[derive(Debug, Clone, Serialize)]
pub struct FittedTerm {
    pub term: Term,
    pub value: Complex64,
}

/// Result of a coefficient fit at one probe separation.
#[derive(Debug, Clone, Serialize)]
pub struct GreenExpansion {
    pub dim: usize,
    pub parity: Parity,
    pub r_probe: f64,
    pub fit_window: (f64, f64),
    pub samples: usize,
    pub coeffs: Vec<FittedTerm>,
    /// Relative least-squares residual.
    pub residual: f64,
    /// Condition number of the column-scaled design matrix.
    pub condition: f64,
}

impl GreenExpansion {
    pub fn get(&self, term: Term) -> Option<Complex64> {
        self.coeffs.iter().find(|c| c.term == term).map(|c| c.value)
    }

    /// Closed-form value of the leading fractional/log coefficient.
    pub fn leading_reference(&self) -> Result<(Term, Complex64)> {
        match self.parity {
            Parity::Odd => Ok((Term::HalfPower(self.dim - 2), a_leading(self.dim)?)),
            Parity::Even => Ok((Term::Log(0), Complex64::new(c_log(self.dim)?, 0.0))),
        }
    }

    /// Relative error of the leading coefficient against its closed form.
    pub fn leading_relative_error(&self) -> Result<f64> {
        let (term, want) = self.leading_reference()?;
        let got = self.get(term).ok_or_else(|| invalid("leading term missing from fit"))?;
        Ok((got - want).norm() / want.norm())
    }
}

/// `count` logarithmically spaced points from `hi` down to `lo`.
pub fn lambda_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || count < 2 {
        return Err(invalid(format!("lambda grid needs 0 < lo < hi and >= 2 points, got [{lo}, {hi}] x {count}")));
    }
    let (a, b) = (hi.ln(), lo.ln());
    Ok((0..count).map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp()).collect())
}

/// Default grid: 24 points in `[1e-6, 1e-2]`.
pub fn default_lambda_grid() -> Vec<f64> {
    lambda_grid(1e-6, 1e-2, 24).expect("static grid")
}

/// Number of half-power terms beyond the leading fractional one (odd `n`).
pub const ODD_EXTRA_TERMS: usize = 4;
/// Number of regular/log pairs beyond the leading log term (even `n`).
pub const EVEN_EXTRA_TERMS: usize = 2;

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(invalid("lambda grid values must be positive"));
    }
    Ok(())
}

/// Fit the odd-`n` expansion with terms `k = 0 ..= n - 2 + extra`.
pub fn expand_green_odd_with(n: usize, r_probe: f64, grid: &[f64], extra: usize) -> Result<GreenExpansion> {
    if n < 5 || n.is_multiple_of(2) {
        return Err(invalid(format!("odd expansion needs odd n >= 5, got {n}")));
    }
    check_grid(grid)?;
    let kmax = n - 2 + extra;
    let scale = r_probe.powi(n as i32 - 2);
    let mut design = CMatrix::zeros(grid.len(), kmax + 1);
    let mut rhs = CVector::zeros(grid.len());
    for (i, &lam) in grid.iter().enumerate() {
        let w = I * lam.sqrt() * r_probe;
        for k in 0..=kmax {
            design[(i, k)] = w.powi(k as i32);
        }
        rhs[i] = green_kernel(n, Complex64::new(-lam, 0.0), r_probe)? * scale;
    }
    let fit = lstsq(&design, &rhs)?;
    let coeffs = (0..=kmax).map(|k| FittedTerm { term: Term::HalfPower(k), value: fit.coeffs[k] }).collect();
    Ok(GreenExpansion {
        dim: n,
        parity: Parity::Odd,
        r_probe,
        fit_window: window(grid),
        samples: grid.len(),
        coeffs,
        residual: fit.relative_residual,
        condition: fit.condition,
    })
}

pub fn expand_green_odd(n: usize, r_probe: f64, grid: &[f64]) -> Result<GreenExpansion> {
    expand_green_odd_with(n, r_probe, grid, ODD_EXTRA_TERMS)
}

/// Fit the even-`n` expansion: `d_{n,k}` for `k <= (n-2)/2 + extra` and
/// `c_{n,k}` for `k <= extra`.
pub fn expand_green_even_with(n: usize, r_probe: f64, grid: &[f64], extra: usize) -> Result<GreenExpansion> {
    if n < 4 || n % 2 == 1 {
        return Err(invalid(format!("even expansion needs even n >= 4, got {n}")));
    }
    check_grid(grid)?;
    let m = (n - 2) / 2;
    let kd = m + extra;
    let kc = extra;
    let scale = r_probe.powi(n as i32 - 2);
    let mut design = CMatrix::zeros(grid.len(), kd + kc + 2);
    let mut rhs = CVector::zeros(grid.len());
    for (i, &lam) in grid.iter().enumerate() {
        let z = Complex64::new(-lam, 0.0);
        let u = z * r_probe * r_probe;
        let log = (-I * sqrt_branch(z)? * r_probe).ln();
        for k in 0..=kd {
            design[(i, k)] = u.powi(k as i32);
        }
        for k in 0..=kc {
            design[(i, kd + 1 + k)] = u.powi((m + k) as i32) * log;
        }
        rhs[i] = green_kernel(n, z, r_probe)? * scale;
    }
    let fit = lstsq(&design, &rhs)?;
    let mut coeffs: Vec<FittedTerm> =
        (0..=kd).map(|k| FittedTerm { term: Term::Regular(k), value: fit.coeffs[k] }).collect();
    coeffs.extend((0..=kc).map(|k| FittedTerm { term: Term::Log(k), value: fit.coeffs[kd + 1 + k] }));
    Ok(GreenExpansion {
        dim: n,
        parity: Parity::Even,
        r_probe,
        fit_window: window(grid),
        samples: grid.len(),
        coeffs,
        residual: fit.relative_residual,
        condition: fit.condition,
    })
}

pub fn expand_green_even(n: usize, r_probe: f64, grid: &[f64]) -> Result<GreenExpansion> {
    expand_green_even_with(n, r_probe, grid, EVEN_EXTRA_TERMS)
}

/// Dispatch on parity.
pub fn expand_green(n: usize, r_probe: f64, grid: &[f64]) -> Result<GreenExpansion> {
    if n % 2 == 1 {
        expand_green_odd(n, r_probe, grid)
    } else {
        expand_green_even(n, r_probe, grid)
    }
}

fn window(grid: &[f64]) -> (f64, f64) {
    let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().copied().fold(0.0, f64::max);
    (lo, hi)
}

/// `dA/dz` at `z = 0^-` by Richardson-extrapolated one-sided differences,
/// multiplied by `r^{n-4}` so it estimates the coefficient of `z r^{2-(n-2)}`.
///
/// Valid when the first non-analytic term is of higher order than `z`
/// (odd `n >= 5`, even `n >= 6`).
pub fn first_order_coefficient_fd(n: usize, r: f64, h: f64) -> Result<f64> {
    if n < 5 {
        return Err(invalid(format!("first-order finite difference needs n >= 5, got {n}")));
    }
    let eval = |lam: f64| -> Result<f64> { Ok(green_kernel(n, Complex64::new(-lam, 0.0), r)?.re) };
    let a0 = newtonian_constant(n)? / r.powi(n as i32 - 2);
    // slope (A(-h) - A(0)) / (-h), refined on h, h/2, h/4
    let slope = |step: f64| -> Result<f64> { Ok((eval(step)? - a0) / (-step)) };
    let s1 = slope(h)?;
    let s2 = slope(h / 2.0)?;
    let s4 = slope(h / 4.0)?;
    let order = if n % 2 == 1 { 0.5 } else { 1.0 };
    let f = 2f64.powf(order);
    let r12 = (f * s2 - s1) / (f - 1.0);
    let r24 = (f * s4 - s2) / (f - 1.0);
    let g = if n == 5 { 2.0 } else { 2f64.powf(order.max(1.0)) };
    let best = (g * r24 - r12) / (g - 1.0);
    Ok(best * r.powi(n as i32 - 4))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn three_dimensional_closed_form() {
        let z = c(-0.01, 0.0);
        let got = green_kernel(3, z, 1.0).unwrap();
        let want = (I * sqrt_branch(z).unwrap()).exp() / (4.0 * PI);
        assert!((got - want).norm() <= 1e-10 * want.norm());
        // off-axis z
        let z = c(0.3, 0.4);
        let got = green_kernel(3, z, 2.0).unwrap();
        let want = (I * sqrt_branch(z).unwrap() * 2.0).exp() / (8.0 * PI);
        assert!((got - want).norm() <= 1e-10 * want.norm());
    }

    #[test]
    fn five_dimensional_newtonian_limit() {
        let got = green_kernel(5, c(-1e-12, 0.0), 1.3).unwrap();
        let want = 1.0 / (8.0 * PI * PI * 1.3f64.powi(3));
        assert!((got.re - want).abs() <= 1e-5 * want);
        assert!((newtonian_constant(5).unwrap() - 1.0 / (8.0 * PI * PI)).abs() < 1e-16);
        assert!((newtonian_constant(4).unwrap() - 1.0 / (4.0 * PI * PI)).abs() < 1e-16);
    }

    #[test]
    fn radial_ode_residual() {
        // u'' + ((n-1)/r) u' + z u = 0
        for n in [3usize, 4, 5, 6] {
            for z in [c(-0.5, 0.0), c(0.2, 0.3), c(-1.0, -0.5)] {
                let r = 1.2;
                let h = 1e-3;
                let u = |x: f64| green_kernel(n, z, x).unwrap();
                let d2 = (u(r + h) - 2.0 * u(r) + u(r - h)) / (h * h);
                let d1 = (u(r + h) - u(r - h)) / (2.0 * h);
                let res = d2 + d1 * ((n - 1) as f64 / r) + z * u(r);
                let scale = d2.norm() + u(r).norm();
                assert!(res.norm() <= 1e-6 * scale, "n={n} z={z}: {:e}", res.norm() / scale);
            }
        }
    }

    #[test]
    fn branch_and_decay() {
        assert!(sqrt_branch(c(1.0, 0.0)).is_err());
        assert!(green_kernel(5, c(0.0, 0.0), 1.0).is_err());
        assert!(green_kernel(5, c(-1.0, 0.0), 0.0).is_err());
        for lam in [0.1, 1.0, 4.0] {
            let k = sqrt_branch(c(-lam, 0.0)).unwrap();
            assert!((k.im - lam.sqrt()).abs() < 1e-15);
            for n in [4usize, 5, 7] {
                let base = green_kernel(n, c(-lam, 0.0), 1.0).unwrap().norm();
                for r in [5.0, 10.0, 20.0] {
                    let a = green_kernel(n, c(-lam, 0.0), r).unwrap().norm();
                    assert!(a <= base * (-lam.sqrt() * (r - 1.0) / 2.0).exp(), "n={n} lam={lam} r={r}");
                }
            }
        }
    }

    #[test]
    fn five_dimensional_fit() {
        let fit = expand_green_odd(5, 1.0, &default_lambda_grid()).unwrap();
        let a3 = fit.get(Term::HalfPower(3)).unwrap();
        let want = a_leading(5).unwrap();
        assert!((a3 - want).norm() <= 1e-5 * want.norm(), "a3 = {a3}, rel {:e}", (a3 - want).norm() / want.norm());
        let a0 = fit.get(Term::HalfPower(0)).unwrap();
        assert!((a0 - c(1.0 / (8.0 * PI * PI), 0.0)).norm() <= 1e-6);
        let a1 = fit.get(Term::HalfPower(1)).unwrap();
        assert!(a1.norm() <= 1e-7 * a0.norm(), "a1 = {a1}");
        // a_{5,2} = 1/(16 pi^2) from the closed form (1 - iw) e^{iw} / (8 pi^2)
        let a2 = fit.get(Term::HalfPower(2)).unwrap();
        assert!((a2 - c(1.0 / (16.0 * PI * PI), 0.0)).norm() <= 1e-5 * a2.norm());
    }

    #[test]
    fn seven_dimensional_fit_on_wider_window() {
        // the leading term is O(lambda^{5/2}); the default window leaves it below
        // the sample noise, so n = 7 uses lambda in [1e-3, 1] and more columns
        let grid = lambda_grid(1e-3, 1.0, 24).unwrap();
        for n in [7usize] {
            let fit = expand_green_odd_with(n, 1.0, &grid, 6).unwrap();
            let rel = fit.leading_relative_error().unwrap();
            assert!(rel <= 1e-5, "n={n}: {rel:e}");
            let a0 = fit.get(Term::HalfPower(0)).unwrap();
            for k in (1..=(n - 3) / 2).step_by(2) {
                assert!(fit.get(Term::HalfPower(k)).unwrap().norm() <= 1e-6 * a0.norm(), "n={n} k={k}");
            }
        }
    }

    #[test]
    fn even_fits() {
        let fit = expand_green_even(4, 1.0, &default_lambda_grid()).unwrap();
        let c0 = fit.get(Term::Log(0)).unwrap();
        assert!((c0.re / c_log(4).unwrap() - 1.0).abs() <= 1e-4, "c40 = {c0}");
        let d0 = fit.get(Term::Regular(0)).unwrap();
        assert!((d0 - c(1.0 / (4.0 * PI * PI), 0.0)).norm() <= 1e-6);
        let fit = expand_green_even(6, 1.0, &default_lambda_grid()).unwrap();
        let c0 = fit.get(Term::Log(0)).unwrap();
        assert!((c0.re / c_log(6).unwrap() - 1.0).abs() <= 1e-4, "c60 = {c0}");
    }

    #[test]
    fn finite_difference_oracle_for_first_order_terms() {
        let fit = expand_green_odd(5, 1.0, &default_lambda_grid()).unwrap();
        let fd = first_order_coefficient_fd(5, 1.0, 1e-6).unwrap();
        let a2 = fit.get(Term::HalfPower(2)).unwrap();
        // (z^{1/2} r)^2 = z r^2, so a_{5,2} is the z-slope at r = 1
        assert!((a2.re - fd).abs() <= 1e-4 * fd.abs(), "fit {a2} fd {fd}");

        let fit = expand_green_even(6, 1.0, &default_lambda_grid()).unwrap();
        let d1 = fit.get(Term::Regular(1)).unwrap();
        let fd = first_order_coefficient_fd(6, 1.0, 1e-6).unwrap();
        assert!((d1.re - fd).abs() <= 1e-3 * fd.abs(), "fit {d1} fd {fd}");
    }

    #[test]
    fn two_probe_consistency() {
        let grid = default_lambda_grid();
        for n in [4usize, 5, 6] {
            let a = expand_green(n, 1.0, &grid).unwrap();
            let b = expand_green(n, 2.0, &grid).unwrap();
            let (term, want) = a.leading_reference().unwrap();
            let (va, vb) = (a.get(term).unwrap(), b.get(term).unwrap());
            assert!((va - vb).norm() <= 1e-4 * want.norm(), "n={n}: {va} vs {vb}");
        }
    }

    #[test]
    fn denser_grid_is_stable() {
        let coarse = default_lambda_grid();
        let fine = lambda_grid(1e-6, 1e-2, 48).unwrap();
        for n in [4usize, 5] {
            let a = expand_green(n, 1.0, &coarse).unwrap();
            let b = expand_green(n, 1.0, &fine).unwrap();
            let (term, want) = a.leading_reference().unwrap();
            assert!((a.get(term).unwrap() - b.get(term).unwrap()).norm() <= 1e-5 * want.norm(), "n={n}");
        }
    }

    #[test]
    fn wrong_branch_breaks_the_fit() {
        // principal sqrt on rays in the lower half of the z plane flips the sign of
        // z^{1/2}; the half-power columns can no longer represent the samples
        let n = 5;
        let rays = [3.0 * PI / 4.0, 5.0 * PI / 4.0];
        let mut design = CMatrix::zeros(2 * 24, n - 2 + ODD_EXTRA_TERMS + 1);
        let mut rhs_good = CVector::zeros(2 * 24);
        let mut rhs_bad = CVector::zeros(2 * 24);
        for (ri, theta) in rays.iter().enumerate() {
            for (i, lam) in default_lambda_grid().iter().enumerate() {
                let row = ri * 24 + i;
                let z = Complex64::from_polar(*lam, *theta);
                let good = sqrt_branch(z).unwrap();
                let bad = z.sqrt();
                for k in 0..design.ncols() {
                    design[(row, k)] = good.powi(k as i32);
                }
                rhs_good[row] = green_kernel(n, z, 1.0).unwrap();
                // closed form (1 - i w) e^{i w} / (8 pi^2) at r = 1, continued to the wrong root
                rhs_bad[row] = (1.0 - I * bad) * (I * bad).exp() / (8.0 * PI * PI);
            }
        }
        let good = lstsq(&design, &rhs_good).unwrap();
        let bad = lstsq(&design, &rhs_bad).unwrap();
        assert!(good.relative_residual <= 1e-10, "{:e}", good.relative_residual);
        let inflation = bad.relative_residual / good.relative_residual;
        assert!(inflation >= 1e3, "{inflation:e}");
    }
}
