//! Small dense and iterative linear-algebra helpers: column-scaled least
//! squares, restarted GMRES, a Krylov exponential integrator, and adaptive
//! Gauss-Kronrod quadrature for vector-valued integrands.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::fiber::{CMatrix, CVector};

/// Least-squares solution with diagnostics.
#[derive(Debug, Clone)]
pub struct LstsqFit {
    pub coeffs: CVector,
    /// Ratio of extreme singular values of the column-scaled design matrix.
    pub condition: f64,
    /// `||A x - b|| / ||b||`.
    pub relative_residual: f64,
}

/// Solve `min ||A x - b||` by SVD after scaling every column to unit norm.
pub fn lstsq(design: &CMatrix, rhs: &CVector) -> Result<LstsqFit> {
    if design.nrows() != rhs.len() {
        return Err(Error::DimensionMismatch(format!("{} rows vs rhs length {}", design.nrows(), rhs.len())));
    }
    if design.nrows() < design.ncols() {
        return Err(invalid(format!("{} samples cannot determine {} coefficients", design.nrows(), design.ncols())));
    }
    let scales: Vec<f64> = design.column_iter().map(|c| c.norm()).collect();
    if scales.iter().any(|&s| s == 0.0 || !s.is_finite()) {
        return Err(Error::IllConditioned("design matrix has a zero or non-finite column".into()));
    }
    let mut scaled = design.clone();
    for (j, s) in scales.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(*s);
    }
    let svd = scaled.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = smax / smin;
    if !condition.is_finite() || condition > 1e15 {
        return Err(Error::IllConditioned(format!("condition number {condition:.3e}")));
    }
    let y = svd.solve(rhs, 0.0).map_err(|e| Error::IllConditioned(e.to_string()))?;
    let relative_residual = (&scaled * &y - rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE);
    let coeffs = CVector::from_iterator(y.len(), y.iter().zip(&scales).map(|(v, s)| v / *s));
    Ok(LstsqFit { coeffs, condition, relative_residual })
}

/// Real least squares `min ||A x - b||` with column scaling.
pub fn lstsq_real(design: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let c = design.map(|x| Complex64::new(x, 0.0));
    let b = rhs.map(|x| Complex64::new(x, 0.0));
    let fit = lstsq(&c, &b)?;
    Ok((fit.coeffs.map(|z| z.re), fit.condition))
}

/// Outcome of a GMRES solve.
#[derive(Debug, Clone)]
pub struct GmresReport {
    pub solution: CVector,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Restarted GMRES for `A x = b` with right preconditioner `M`
/// (solves `A M y = b`, `x = M y`). Inner products are the plain
/// Euclidean ones on the coefficient vector.
pub fn gmres<A, M>(apply: A, precond: M, b: &CVector, tol: f64, restart: usize, max_iter: usize) -> Result<GmresReport>
where
    A: Fn(&CVector) -> CVector,
    M: Fn(&CVector) -> CVector,
{
    let n = b.len();
    let bnorm = b.norm();
    if bnorm == 0.0 {
        return Ok(GmresReport { solution: CVector::zeros(n), iterations: 0, relative_residual: 0.0 });
    }
    let restart = restart.max(1);
    let mut x = CVector::zeros(n);
    let mut total = 0;
    while total < max_iter {
        let r = b - apply(&x);
        let beta = r.norm();
        let mut rel = beta / bnorm;
        if rel <= tol {
            break;
        }
        let mut basis: Vec<CVector> = vec![r / Complex64::new(beta, 0.0)];
        let mut z_basis: Vec<CVector> = Vec::new();
        let mut h = CMatrix::zeros(restart + 1, restart);
        let mut cs: Vec<Complex64> = Vec::new();
        let mut sn: Vec<Complex64> = Vec::new();
        let mut g = CVector::zeros(restart + 1);
        g[0] = Complex64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..restart {
            let z = precond(&basis[k]);
            let mut w = apply(&z);
            z_basis.push(z);
            // modified Gram-Schmidt, twice for stability
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let hij = v.dotc(&w);
                    h[(i, k)] += hij;
                    w.axpy(-hij, v, Complex64::new(1.0, 0.0));
                }
            }
            let hn = w.norm();
            h[(k + 1, k)] = Complex64::new(hn, 0.0);
            for i in 0..k {
                let a = h[(i, k)];
                let bb = h[(i + 1, k)];
                h[(i, k)] = cs[i].conj() * a + sn[i].conj() * bb;
                h[(i + 1, k)] = -sn[i] * a + cs[i] * bb;
            }
            let a = h[(k, k)];
            let bb = h[(k + 1, k)];
            let denom = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            let (c, s) = if denom == 0.0 {
                (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
            } else {
                (a / denom, bb / denom)
            };
            cs.push(c);
            sn.push(s);
            h[(k, k)] = Complex64::new(denom, 0.0);
            h[(k + 1, k)] = Complex64::new(0.0, 0.0);
            let gk = g[k];
            g[k] = c.conj() * gk;
            g[k + 1] = -s * gk;
            total += 1;
            k_used = k + 1;
            rel = g[k + 1].norm() / bnorm;
            if rel <= tol || hn == 0.0 || total >= max_iter {
                break;
            }
            basis.push(w / Complex64::new(hn, 0.0));
        }
        // back substitution
        let mut y = CVector::zeros(k_used);
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in i + 1..k_used {
                acc -= h[(i, j)] * y[j];
            }
            y[i] = acc / h[(i, i)];
        }
        for (j, z) in z_basis.iter().take(k_used).enumerate() {
            x.axpy(y[j], z, Complex64::new(1.0, 0.0));
        }
        if rel <= tol {
            break;
        }
    }
    let true_rel = (b - apply(&x)).norm() / bnorm;
    if true_rel > tol * 10.0 {
        return Err(Error::NonConvergence { iterations: total, residual: true_rel });
    }
    Ok(GmresReport { solution: x, iterations: total, relative_residual: true_rel })
}

/// Statistics of one Krylov exponential application.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpvStats {
    pub steps: usize,
    pub rejected: usize,
    pub error_estimate: f64,
}

/// `e^{-t A} v` by Arnoldi projection onto a Krylov space of dimension `m`
/// with substepping and a local error estimate per step.
pub fn expv<A>(apply: A, t: f64, v: &CVector, m: usize, tol: f64) -> Result<(CVector, ExpvStats)>
where
    A: Fn(&CVector) -> CVector,
{
    let n = v.len();
    let mut stats = ExpvStats::default();
    let mut w = v.clone();
    let beta0 = v.norm();
    if beta0 == 0.0 || t == 0.0 {
        return Ok((w, stats));
    }
    let m = m.min(n).max(1);
    let mut t_done = 0.0;
    let mut dt = t.min(1.0);
    let min_step = t * 1e-12;
    while t_done < t {
        let beta = w.norm();
        if beta == 0.0 {
            break;
        }
        let mut basis: Vec<CVector> = vec![&w / Complex64::new(beta, 0.0)];
        let mut h = CMatrix::zeros(m + 2, m + 2);
        let mut breakdown = false;
        let mut k_dim = m;
        for j in 0..m {
            let mut p = apply(&basis[j]) * Complex64::new(-1.0, 0.0);
            for _ in 0..2 {
                for (i, q) in basis.iter().enumerate() {
                    let hij = q.dotc(&p);
                    h[(i, j)] += hij;
                    p.axpy(-hij, q, Complex64::new(1.0, 0.0));
                }
            }
            let hn = p.norm();
            if hn < 1e-13 * (1.0 + h[(j, j)].norm()) {
                breakdown = true;
                k_dim = j + 1;
                break;
            }
            h[(j + 1, j)] = Complex64::new(hn, 0.0);
            basis.push(p / Complex64::new(hn, 0.0));
        }
        let (hm, hnext) = if breakdown {
            (h.view((0, 0), (k_dim, k_dim)).into_owned(), 0.0)
        } else {
            (h.view((0, 0), (m, m)).into_owned(), h[(m, m - 1)].norm())
        };
        let mut step = dt.min(t - t_done);
        loop {
            // augmented exponential gives the error estimate from the next Krylov direction
            let kd = hm.nrows();
            let mut aug = CMatrix::zeros(kd + 1, kd + 1);
            aug.view_mut((0, 0), (kd, kd)).copy_from(&(&hm * Complex64::new(step, 0.0)));
            if !breakdown {
                aug[(kd, kd - 1)] = Complex64::new(hnext * step, 0.0);
            }
            let e = aug.exp();
            let err = if breakdown { 0.0 } else { beta * e[(kd, 0)].norm() };
            let local_tol = tol * beta0 * step / t;
            if err <= local_tol || breakdown {
                let mut next = CVector::zeros(n);
                for (i, q) in basis.iter().take(kd).enumerate() {
                    next.axpy(e[(i, 0)] * beta, q, Complex64::new(1.0, 0.0));
                }
                w = next;
                t_done += step;
                stats.steps += 1;
                stats.error_estimate += err;
                if err < 0.1 * local_tol {
                    dt = step * 2.0;
                } else {
                    dt = step;
                }
                break;
            }
            stats.rejected += 1;
            step *= 0.5;
            if step < min_step {
                return Err(Error::StepCollapse(step));
            }
        }
    }
    Ok((w, stats))
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_KRONROD: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_GAUSS: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// One 15-point Kronrod panel on `[a, b]`: returns `(K15, |K15 - G7|)` per component.
fn gk15<F>(f: &F, a: f64, b: f64) -> (Vec<Complex64>, f64)
where
    F: Fn(f64) -> Vec<Complex64>,
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let len = fc.len();
    let mut k = vec![Complex64::new(0.0, 0.0); len];
    let mut g = vec![Complex64::new(0.0, 0.0); len];
    for i in 0..len {
        k[i] = fc[i] * GK_KRONROD[7];
        g[i] = fc[i] * GK_GAUSS[3];
    }
    for j in 0..7 {
        let dx = h * GK_NODES[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        for i in 0..len {
            let s = f1[i] + f2[i];
            k[i] += s * GK_KRONROD[j];
            if j % 2 == 1 {
                g[i] += s * GK_GAUSS[j / 2];
            }
        }
    }
    let mut err: f64 = 0.0;
    for i in 0..len {
        k[i] *= h;
        g[i] *= h;
        err = err.max((k[i] - g[i]).norm());
    }
    (k, err)
}

/// Adaptive Gauss-Kronrod integration of a vector-valued integrand over
/// `[a, b]`. Panels are bisected until every component error estimate is
/// below `abs_tol + rel_tol * |integral|`. Panels within one refinement
/// round are evaluated in parallel; accumulation order is fixed.
pub fn integrate_vec<F>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<(Vec<Complex64>, f64)>
where
    F: Fn(f64) -> Vec<Complex64> + Sync,
{
    let mut panels: Vec<(f64, f64, Vec<Complex64>, f64)> = Vec::new();
    let mut pending = vec![(a, b)];
    loop {
        let evaluated = map_panels(&f, &pending);
        for ((lo, hi), (val, err)) in pending.iter().zip(evaluated) {
            panels.push((*lo, *hi, val, err));
        }
        panels.sort_by(|x, y| x.0.total_cmp(&y.0));
        let len = panels[0].2.len();
        let mut total = vec![Complex64::new(0.0, 0.0); len];
        let mut err = 0.0;
        for p in &panels {
            for (t, v) in total.iter_mut().zip(&p.2) {
                *t += v;
            }
            err += p.3;
        }
        let scale = total.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let target = abs_tol + rel_tol * scale;
        if err <= target {
            return Ok((total, err));
        }
        if panels.len() >= max_panels {
            return Err(Error::Quadrature(err));
        }
        // bisect every panel whose error exceeds its fair share
        let share = target / panels.len() as f64;
        let mut keep = Vec::new();
        pending.clear();
        for p in panels.drain(..) {
            if p.3 > share {
                let mid = 0.5 * (p.0 + p.1);
                pending.push((p.0, mid));
                pending.push((mid, p.1));
            } else {
                keep.push(p);
            }
        }
        panels = keep;
        if pending.is_empty() {
            return Ok((total, err));
        }
    }
}

#[cfg(feature = "parallel")]
fn map_panels<F>(f: &F, pending: &[(f64, f64)]) -> Vec<(Vec<Complex64>, f64)>
where
    F: Fn(f64) -> Vec<Complex64> + Sync,
{
    use rayon::prelude::*;
    pending.par_iter().map(|&(lo, hi)| gk15(f, lo, hi)).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_panels<F>(f: &F, pending: &[(f64, f64)]) -> Vec<(Vec<Complex64>, f64)>
where
    F: Fn(f64) -> Vec<Complex64> + Sync,
{
    pending.iter().map(|&(lo, hi)| gk15(f, lo, hi)).collect()
}
