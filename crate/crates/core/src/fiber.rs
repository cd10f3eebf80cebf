//! The fibered free operator on a truncated tensor Hermite basis.
//!
//! For a spatial frequency `xi` the free operator acts on velocity functions
//! as `-Delta_v + v^2/4 - n/2 + i v.xi`. In the orthonormal basis
//! `psi_alpha = phi_{alpha_1} x ... x phi_{alpha_n}` this is
//! `N + i sum_j xi_j S_j` with `N` the number operator and `S_j` the symmetric
//! ladder coupling on axis `j`. Its eigenvalues are `|alpha| + |xi|^2` with
//! eigenfunctions `psi_alpha(v + 2 i xi)`.
//!
//! Basis vectors are flattened row-major over the multi-index, axis 0 slowest.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use twofloat::TwoFloat;

use crate::error::{invalid, Error, Result};
use crate::special::{gauss_hermite, hermite_fns, hermite_fns_real, HERMITE_IMAG_LIMIT};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Largest `|xi|` per axis for which shifted Hermite expansions are evaluated.
pub const XI_AXIS_LIMIT: f64 = HERMITE_IMAG_LIMIT / 2.0;

/// Eigenvalues beyond this fraction of the per-axis truncation are flagged as
/// untrusted truncation artifacts.
pub const TRUSTED_LEVEL_FRACTION: f64 = 0.25;

/// Dense materialization limit for projections and operators.
pub const DENSE_LIMIT: usize = 4096;

/// Multi-indices `alpha` with `alpha_j < trunc`, in flat order.
pub fn multi_indices(dim: usize, trunc: usize) -> Vec<Vec<usize>> {
    let total = trunc.pow(dim as u32);
    (0..total).map(|flat| unflatten(flat, dim, trunc)).collect()
}

pub fn unflatten(mut flat: usize, dim: usize, trunc: usize) -> Vec<usize> {
    let mut alpha = vec![0; dim];
    for j in (0..dim).rev() {
        alpha[j] = flat % trunc;
        flat /= trunc;
    }
    alpha
}

pub fn flatten(alpha: &[usize], trunc: usize) -> usize {
    alpha.iter().fold(0, |acc, &a| acc * trunc + a)
}

/// `|alpha|` for every flat index.
pub fn degrees(dim: usize, trunc: usize) -> Vec<usize> {
    multi_indices(dim, trunc).iter().map(|a| a.iter().sum()).collect()
}

/// One-axis matrix `N + i xi S` of size `trunc`.
pub fn axis_matrix(xi: f64, trunc: usize) -> CMatrix {
    let mut m = CMatrix::zeros(trunc, trunc);
    for k in 0..trunc {
        m[(k, k)] = Complex64::new(k as f64, 0.0);
        if k + 1 < trunc {
            let b = I * (xi * ((k + 1) as f64).sqrt());
            m[(k, k + 1)] = b;
            m[(k + 1, k)] = b;
        }
    }
    m
}

/// One-axis symmetric ladder coupling `S` (multiplication by `s`).
pub fn ladder_s(trunc: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(trunc, trunc);
    for k in 0..trunc.saturating_sub(1) {
        let b = ((k + 1) as f64).sqrt();
        m[(k, k + 1)] = b;
        m[(k + 1, k)] = b;
    }
    m
}

/// Truncated fiber operator at one frequency.
#[derive(Debug)]
pub struct FiberOperator {
    pub dim: usize,
    pub xi: Vec<f64>,
    pub trunc: usize,
    matrix: CMatrix,
    spectrum: OnceLock<Vec<Complex64>>,
}

impl Clone for FiberOperator {
    fn clone(&self) -> Self {
        Self {
            dim: self.dim,
            xi: self.xi.clone(),
            trunc: self.trunc,
            matrix: self.matrix.clone(),
            spectrum: OnceLock::new(),
        }
    }
}

/// Assemble the fiber operator `N + i xi.S` on `{psi_alpha : alpha_j < trunc}`.
pub fn assemble_fiber(dim: usize, xi: &[f64], trunc: usize) -> Result<FiberOperator> {
    if dim == 0 {
        return Err(invalid("fiber dimension must be >= 1"));
    }
    if xi.len() != dim {
        return Err(Error::DimensionMismatch(format!("xi has {} components, dim is {dim}", xi.len())));
    }
    if trunc < 2 {
        return Err(invalid(format!("truncation J must be >= 2, got {trunc}")));
    }
    let size = trunc
        .checked_pow(dim as u32)
        .filter(|&s| s <= DENSE_LIMIT)
        .ok_or_else(|| invalid(format!("J^n = {trunc}^{dim} exceeds the dense limit {DENSE_LIMIT}")))?;
    let mut matrix = CMatrix::zeros(size, size);
    let sqrt: Vec<f64> = (0..=trunc).map(|k| (k as f64).sqrt()).collect();
    for flat in 0..size {
        let alpha = unflatten(flat, dim, trunc);
        matrix[(flat, flat)] = Complex64::new(alpha.iter().sum::<usize>() as f64, 0.0);
        let mut stride = 1;
        for j in (0..dim).rev() {
            if alpha[j] + 1 < trunc {
                let b = I * (xi[j] * sqrt[alpha[j] + 1]);
                matrix[(flat, flat + stride)] = b;
                matrix[(flat + stride, flat)] = b;
            }
            stride *= trunc;
        }
    }
    Ok(FiberOperator { dim, xi: xi.to_vec(), trunc, matrix, spectrum: OnceLock::new() })
}

impl FiberOperator {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn xi_sq(&self) -> f64 {
        self.xi.iter().map(|x| x * x).sum()
    }

    pub fn apply(&self, c: &CVector) -> CVector {
        &self.matrix * c
    }

    /// Self-adjoint part (the number operator, diagonal).
    pub fn hermitian_part(&self) -> CMatrix {
        (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0)
    }

    /// Skew-adjoint part `i xi.S`.
    pub fn skew_part(&self) -> CMatrix {
        (&self.matrix - self.matrix.adjoint()) * Complex64::new(0.5, 0.0)
    }

    /// `sum_j ||a_j c||^2` with `a_j` the annihilation map on axis `j`.
    pub fn annihilation_norm_sq(&self, c: &CVector) -> f64 {
        (0..self.size())
            .map(|flat| {
                let alpha = unflatten(flat, self.dim, self.trunc);
                alpha.iter().sum::<usize>() as f64 * c[flat].norm_sqr()
            })
            .sum()
    }

    /// All eigenvalues of the truncated matrix, sorted by real part.
    pub fn eigenvalues(&self) -> Result<&[Complex64]> {
        if let Some(ev) = self.spectrum.get() {
            return Ok(ev);
        }
        let schur = nalgebra::Schur::try_new(self.matrix.clone(), 1e-15, 100_000).ok_or(Error::EigenNonConvergence)?;
        let (_, t) = schur.unpack();
        let mut ev: Vec<Complex64> = (0..t.nrows()).map(|i| t[(i, i)]).collect();
        ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        Ok(self.spectrum.get_or_init(|| ev))
    }
}

/// One computed eigenvalue with its distance to the exact ladder `l + |xi|^2`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FiberEigenvalue {
    pub value: Complex64,
    /// Nearest exact level `l`.
    pub level: usize,
    /// `|value - (level + |xi|^2)|`.
    pub residual: f64,
    /// False when `level` lies in the part of the spectrum polluted by truncation.
    pub trusted: bool,
}

/// Lowest-real-part eigenvalues of the truncated operator.
///
/// `count` may be as large as `J^n`, but only levels `l <= J/4` (or all of
/// them at `xi = 0`, where the matrix is diagonal) are flagged trusted.
pub fn fiber_spectrum(op: &FiberOperator, count: usize) -> Result<Vec<FiberEigenvalue>> {
    if count == 0 || count > op.size() {
        return Err(invalid(format!("count must be in 1..={}, got {count}", op.size())));
    }
    let ev = op.eigenvalues()?;
    let shift = op.xi_sq();
    let diag = op.xi.iter().all(|&x| x == 0.0);
    let cut = (TRUSTED_LEVEL_FRACTION * op.trunc as f64).floor() as usize;
    Ok(ev[..count]
        .iter()
        .map(|&value| {
            let level = (value.re - shift).round().max(0.0) as usize;
            FiberEigenvalue {
                value,
                level,
                residual: (value - Complex64::new(level as f64 + shift, 0.0)).norm(),
                trusted: diag || level <= cut,
            }
        })
        .collect())
}

/// How the bracket `<psi_alpha^{-xi}, phi>` pairs coefficient vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PairingConvention {
    /// Conjugate-linear in the first slot.
    ConjugateFirst,
    /// Bilinear, no conjugation.
    Bilinear,
}

/// `C_{beta alpha} = int phi_beta(v) phi_alpha(v + 2 i xi) dv` for
/// `beta < trunc`, `alpha <= max_level`, by Gauss-Hermite quadrature.
pub fn shifted_expansion(xi: f64, trunc: usize, max_level: usize) -> Result<CMatrix> {
    if xi.abs() > XI_AXIS_LIMIT {
        return Err(invalid(format!("|xi| = {} exceeds the complex-Hermite window {XI_AXIS_LIMIT}", xi.abs())));
    }
    let nodes = (2 * trunc + 48).min(crate::special::GAUSS_HERMITE_MAX_NODES);
    let q = gauss_hermite(nodes)?;
    let cols = max_level + 1;
    let mut c = CMatrix::zeros(trunc, cols);
    for (&x, &w) in q.quad_nodes.iter().zip(&q.plain_weights) {
        let real = hermite_fns_real(trunc, x);
        let shifted = hermite_fns(cols, Complex64::new(x, 2.0 * xi))?;
        for b in 0..trunc {
            let wb = w * real[b];
            for a in 0..cols {
                c[(b, a)] += wb * shifted[a];
            }
        }
    }
    Ok(c)
}

/// Riesz projection onto the eigenvalue `l + |xi|^2`, kept in rank form
/// `Pi c = sum_alpha right_alpha (left_alpha . c)` over `|alpha| = l`.
#[derive(Debug, Clone)]
pub struct RieszProjection {
    pub level: usize,
    pub xi: Vec<f64>,
    pub trunc: usize,
    pub convention: PairingConvention,
    right: Vec<CVector>,
    left: Vec<CVector>,
    /// `||Pi^2 - Pi||_F`.
    pub idempotency_residual: f64,
    /// `||P Pi - (l + |xi|^2) Pi||_F`.
    pub intertwining_residual: f64,
}

impl RieszProjection {
    pub fn rank(&self) -> usize {
        self.right.len()
    }

    pub fn apply(&self, c: &CVector) -> CVector {
        let mut out = CVector::zeros(c.len());
        for (r, l) in self.right.iter().zip(&self.left) {
            out.axpy(l.dot(c), r, Complex64::new(1.0, 0.0));
        }
        out
    }

    pub fn to_dense(&self) -> CMatrix {
        let size = self.trunc.pow(self.xi.len() as u32);
        let mut m = CMatrix::zeros(size, size);
        for (r, l) in self.right.iter().zip(&self.left) {
            m += r * l.transpose();
        }
        m
    }

    pub fn trace(&self) -> Complex64 {
        self.right.iter().zip(&self.left).map(|(r, l)| l.dot(r)).sum()
    }
}

fn kron(parts: &[CVector]) -> CVector {
    let mut out = CVector::from_element(1, Complex64::new(1.0, 0.0));
    for p in parts {
        let mut next = CVector::zeros(out.len() * p.len());
        for (i, a) in out.iter().enumerate() {
            for (j, b) in p.iter().enumerate() {
                next[i * p.len() + j] = a * b;
            }
        }
        out = next;
    }
    out
}

/// Idempotency residual above which a projection is reported ill-conditioned.
pub const PROJECTION_TOLERANCE: f64 = 1e-6;

fn build_projection(level: usize, xi: &[f64], trunc: usize, convention: PairingConvention) -> Result<RieszProjection> {
    let dim = xi.len();
    let plus: Vec<CMatrix> = xi.iter().map(|&x| shifted_expansion(x, trunc, level)).collect::<Result<_>>()?;
    let minus: Vec<CMatrix> = xi.iter().map(|&x| shifted_expansion(-x, trunc, level)).collect::<Result<_>>()?;
    let mut right = Vec::new();
    let mut left = Vec::new();
    for alpha in multi_indices(dim, level + 1).into_iter().filter(|a| a.iter().sum::<usize>() == level) {
        let r: Vec<CVector> = alpha.iter().enumerate().map(|(j, &a)| plus[j].column(a).into_owned()).collect();
        let l: Vec<CVector> = alpha
            .iter()
            .enumerate()
            .map(|(j, &a)| {
                let col = minus[j].column(a).into_owned();
                match convention {
                    PairingConvention::ConjugateFirst => col.map(|z| z.conj()),
                    PairingConvention::Bilinear => col,
                }
            })
            .collect();
        right.push(kron(&r));
        left.push(kron(&l));
    }
    let mut proj = RieszProjection {
        level,
        xi: xi.to_vec(),
        trunc,
        convention,
        right,
        left,
        idempotency_residual: f64::NAN,
        intertwining_residual: f64::NAN,
    };
    // Pi^2 - Pi = sum_{a,b} r_a (l_a . r_b - delta_ab) l_b^T
    let k = proj.rank();
    let mut gram = CMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            gram[(a, b)] = proj.left[a].dot(&proj.right[b]) - if a == b { 1.0 } else { 0.0 };
        }
    }
    let rr = gram_of(&proj.right);
    let ll = gram_of(&proj.left);
    proj.idempotency_residual = frob_rank_form(&gram, &rr, &ll);
    let op = assemble_fiber(dim, xi, trunc)?;
    let lam = Complex64::new(level as f64 + op.xi_sq(), 0.0);
    let shifted: Vec<CVector> = proj.right.iter().map(|r| op.apply(r) - r * lam).collect();
    let identity = CMatrix::identity(k, k);
    proj.intertwining_residual = frob_rank_form(&identity, &gram_of(&shifted), &ll);
    Ok(proj)
}

/// `G_{ab} = conj(u_a) . u_b`.
fn gram_of(vs: &[CVector]) -> CMatrix {
    let k = vs.len();
    CMatrix::from_fn(k, k, |a, b| vs[a].dotc(&vs[b]))
}

/// Frobenius norm of `sum_{ab} M_{ab} r_a l_b^T` from Gram matrices of the
/// factors: `||X||_F^2 = tr(M^H R M L^T)` with `R_{ab} = r_a^H r_b`,
/// `L_{ab} = l_a^H l_b`.
fn frob_rank_form(m: &CMatrix, rr: &CMatrix, ll: &CMatrix) -> f64 {
    let prod = m.adjoint() * rr * m * ll.transpose();
    prod.trace().re.max(0.0).sqrt()
}

/// Riesz projection for level `l` at frequency `xi`, trying the conjugate
/// pairing first and falling back to the bilinear one.
pub fn riesz_projection(level: usize, xi: &[f64], trunc: usize) -> Result<RieszProjection> {
    if xi.is_empty() {
        return Err(invalid("xi must have at least one component"));
    }
    if level + 1 >= trunc {
        return Err(invalid(format!("level {level} needs truncation J > {}", level + 1)));
    }
    let conj = build_projection(level, xi, trunc, PairingConvention::ConjugateFirst)?;
    if conj.idempotency_residual <= PROJECTION_TOLERANCE {
        return Ok(conj);
    }
    let bil = build_projection(level, xi, trunc, PairingConvention::Bilinear)?;
    if bil.idempotency_residual <= PROJECTION_TOLERANCE {
        return Ok(bil);
    }
    Err(Error::IllConditioned(format!(
        "Riesz projection at level {level}, |xi| = {:.3}, J = {trunc}: idempotency residual {:.3e}",
        xi.iter().map(|x| x * x).sum::<f64>().sqrt(),
        conj.idempotency_residual.min(bil.idempotency_residual)
    )))
}

/// `e^{-t P} c` by dense scaling-and-squaring exponential.
pub fn fiber_propagate(op: &FiberOperator, t: f64, c: &CVector) -> Result<CVector> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(invalid(format!("propagation time must be positive, got {t}")));
    }
    check_len(op, c)?;
    let e = (op.matrix() * Complex64::new(-t, 0.0)).exp();
    Ok(e * c)
}

fn check_len(op: &FiberOperator, c: &CVector) -> Result<()> {
    if c.len() != op.size() {
        return Err(Error::DimensionMismatch(format!("vector length {} vs operator size {}", c.len(), op.size())));
    }
    Ok(())
}

/// Distance below which `z` is treated as hitting a truncated eigenvalue.
pub const RESOLVENT_POLE_GUARD: f64 = 1e-8;

/// `(P - z)^{-1} c` by dense LU.
pub fn fiber_resolvent(op: &FiberOperator, z: Complex64, c: &CVector) -> Result<CVector> {
    check_len(op, c)?;
    let ev = op.eigenvalues()?;
    if let Some(near) = ev.iter().find(|&&l| (l - z).norm() < RESOLVENT_POLE_GUARD) {
        return Err(invalid(format!("z = {z} lies within {RESOLVENT_POLE_GUARD:e} of the eigenvalue {near}")));
    }
    let n = op.size();
    let shifted = op.matrix() - CMatrix::identity(n, n) * z;
    let u = shifted.clone().lu().solve(c).ok_or_else(|| invalid(format!("P - z is singular at z = {z}")))?;
    let res = (&shifted * &u - c).norm();
    if res > 1e-10 * c.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::IllConditioned(format!("fiber resolvent residual {res:.3e} at z = {z}")));
    }
    Ok(u)
}

/// Smooth radial cutoff: 1 on `|xi|^2 <= a+3`, 0 on `|xi|^2 >= a+4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffChi {
    pub a: f64,
}

impl Default for CutoffChi {
    fn default() -> Self {
        Self { a: 0.5 }
    }
}

fn bump_tail(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

impl CutoffChi {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(invalid(format!("cutoff parameter a must lie in (0,1), got {a}")));
        }
        Ok(Self { a })
    }

    pub fn eval(&self, xi: &[f64]) -> f64 {
        let r = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
        let r1 = (self.a + 3.0).sqrt();
        let r2 = (self.a + 4.0).sqrt();
        let s = (r - r1) / (r2 - r1);
        if s <= 0.0 {
            1.0
        } else if s >= 1.0 {
            0.0
        } else {
            let up = bump_tail(1.0 - s);
            up / (up + bump_tail(s))
        }
    }
}

/// `2^{n/2} chi(xi) exp(-|v|^2 - |eta|^2 + 2 i v.xi + 2 |xi|^2)`.
pub fn b0_symbol(v: &[f64], xi: &[f64], eta: &[f64], chi: &CutoffChi) -> Result<Complex64> {
    let n = v.len();
    if xi.len() != n || eta.len() != n {
        return Err(Error::DimensionMismatch("v, xi and eta must share a dimension".into()));
    }
    let c = chi.eval(xi);
    if c == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let expo = Complex64::new(-dot(v, v) - dot(eta, eta) + 2.0 * dot(xi, xi), 2.0 * dot(v, xi));
    Ok(2f64.powf(n as f64 / 2.0) * c * expo.exp())
}

/// `<phi_0, phi_0(. + 2 i xi)>` in closed form, `e^{xi^2/2}`; used as a
/// sanity reference for the shifted expansions.
pub fn shifted_ground_overlap(xi: f64) -> f64 {
    (xi * xi / 2.0).exp()
}

/// `P_{beta alpha} = sum_k xi^{alpha+beta-2k} / ((alpha-k)! (beta-k)! k!)`,
/// the sign-definite core of the shift matrix elements.
fn displacement_core(xi: f64, beta: usize, alpha: usize) -> f64 {
    let fact = |m: usize| (1..=m).fold(1.0, |a, j| a * j as f64);
    (0..=alpha.min(beta))
        .map(|k| xi.powi((alpha + beta - 2 * k) as i32) / (fact(alpha - k) * fact(beta - k) * fact(k)))
        .sum()
}

/// Same sum in double-double; `inv_fact[m] = 1/m!`, `pows[m] = xi^m`.
fn displacement_core_dd(inv_fact: &[TwoFloat], pows: &[TwoFloat], beta: usize, alpha: usize) -> TwoFloat {
    (0..=alpha.min(beta)).fold(TwoFloat::from(0.0), |acc, k| {
        acc + pows[alpha + beta - 2 * k] * inv_fact[alpha - k] * inv_fact[beta - k] * inv_fact[k]
    })
}

/// Closed form of [`shifted_expansion`]: the shift `v -> v + 2 i xi` is
/// `exp(i xi (a - a^+))`, whose matrix elements are
/// `e^{xi^2/2} (-1)^alpha (-i xi)^{alpha+beta} sqrt(alpha! beta!) P_{beta alpha} / xi^{alpha+beta}`.
pub fn displacement_expansion(xi: f64, trunc: usize, max_level: usize) -> CMatrix {
    let fact = |m: usize| (1..=m).fold(1.0, |a, j| a * j as f64);
    let pre = (xi * xi / 2.0).exp();
    CMatrix::from_fn(trunc, max_level + 1, |b, a| {
        let phase = Complex64::new(0.0, -1.0).powi((a + b) as i32) * if a % 2 == 0 { 1.0 } else { -1.0 };
        phase * (pre * (fact(a) * fact(b)).sqrt() * displacement_core(xi, b, a))
    })
}

/// Idempotency and mutual annihilation of the one-axis Riesz projections
/// `Pi_l = r_l l_l^T`, evaluated in double-double arithmetic from the closed
/// form. `l_l . r_m = (-1)^{l+m} (-i)^{l+m} e^{xi^2} sqrt(l! m!) S_{lm}` with
/// the alternating sum `S_{lm} = sum_beta (-1)^beta beta! P_{beta l} P_{beta m}`.
#[derive(Debug, Clone, Serialize)]
pub struct RieszCertificate {
    pub xi: f64,
    pub trunc: usize,
    /// `||Pi_l^2 - Pi_l||_F` per level.
    pub idempotency: Vec<f64>,
    /// `max_{l != m} ||Pi_l Pi_m||_F`.
    pub max_cross: f64,
    /// `||Pi_l||_F` per level.
    pub norms: Vec<f64>,
}

pub fn riesz_certificate(xi: f64, trunc: usize, max_level: usize) -> Result<RieszCertificate> {
    if !xi.is_finite() || xi.abs() > XI_AXIS_LIMIT {
        return Err(invalid(format!("|xi| = {} exceeds the complex-Hermite window {XI_AXIS_LIMIT}", xi.abs())));
    }
    if max_level + 1 >= trunc {
        return Err(invalid(format!("level {max_level} needs truncation J > {}", max_level + 1)));
    }
    let x = TwoFloat::from(xi);
    let levels = max_level + 1;
    // TwoFloat / TwoFloat is only f64-accurate, so every division is by an f64
    let top = trunc + levels;
    let mut inv_fact = vec![TwoFloat::from(1.0); top];
    let mut pows = vec![TwoFloat::from(1.0); top];
    let mut bfact = vec![TwoFloat::from(1.0); top];
    for m in 1..top {
        inv_fact[m] = inv_fact[m - 1] / m as f64;
        pows[m] = pows[m - 1] * x;
        bfact[m] = bfact[m - 1] * m as f64;
    }
    let core: Vec<Vec<TwoFloat>> =
        (0..levels).map(|a| (0..trunc).map(|b| displacement_core_dd(&inv_fact, &pows, b, a)).collect()).collect();
    // e^{xi^2} by its Taylor series, all terms positive
    let x2 = x * x;
    let mut exp_x2 = TwoFloat::from(0.0);
    let mut term = TwoFloat::from(1.0);
    for j in 1..200 {
        exp_x2 += term;
        term = term * x2 / j as f64;
        if term.hi() < 1e-34 * exp_x2.hi() {
            break;
        }
    }
    let alt = |l: usize, m: usize| -> TwoFloat {
        (0..trunc).fold(TwoFloat::from(0.0), |acc, b| {
            let t = bfact[b] * core[l][b] * core[m][b];
            if b % 2 == 0 {
                acc + t
            } else {
                acc - t
            }
        })
    };
    let lfact: Vec<f64> = (0..levels).map(|l| (1..=l).fold(1.0, |a, j| a * j as f64)).collect();
    // ||r_l|| = ||l_l|| = sqrt(e^{xi^2} l! sum_beta beta! P_{beta l}^2)
    let norms: Vec<f64> = (0..levels)
        .map(|l| {
            let s: f64 = (0..trunc).map(|b| (bfact[b] * core[l][b] * core[l][b]).hi()).sum();
            exp_x2.hi() * lfact[l] * s
        })
        .collect();
    let idempotency = (0..levels)
        .map(|l| {
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            let pairing = exp_x2 * alt(l, l) * (sign * lfact[l]);
            (pairing - 1.0).hi().abs() * norms[l]
        })
        .collect();
    let mut max_cross: f64 = 0.0;
    for l in 0..levels {
        for m in 0..levels {
            if l != m {
                let pairing = (exp_x2 * alt(l, m)).hi().abs() * (lfact[l] * lfact[m]).sqrt();
                max_cross = max_cross.max(pairing * norms[l].sqrt() * norms[m].sqrt());
            }
        }
    }
    Ok(RieszCertificate { xi, trunc, idempotency, max_cross, norms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_vec(n: usize, seed: u64) -> CVector {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        CVector::from_fn(n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn ladder_relation_by_quadrature() {
        // int s phi_0 phi_1 ds = 1, int s phi_1 phi_2 = sqrt 2
        let q = gauss_hermite(40).unwrap();
        let m01 = q.integrate_plain(|s| {
            let p = hermite_fns_real(3, s);
            c(s * p[0] * p[1], 0.0)
        });
        let m12 = q.integrate_plain(|s| {
            let p = hermite_fns_real(3, s);
            c(s * p[1] * p[2], 0.0)
        });
        assert!((m01.re - 1.0).abs() < 1e-13);
        assert!((m12.re - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn two_by_two_assembly() {
        let xi = 0.3;
        let op = assemble_fiber(1, &[xi], 2).unwrap();
        let m = op.matrix();
        assert_eq!(m[(0, 0)], c(0.0, 0.0));
        assert_eq!(m[(0, 1)], c(0.0, xi));
        assert_eq!(m[(1, 0)], c(0.0, xi));
        assert_eq!(m[(1, 1)], c(1.0, 0.0));
    }

    #[test]
    fn zero_frequency_is_diagonal() {
        let op = assemble_fiber(2, &[0.0, 0.0], 5).unwrap();
        let m = op.matrix();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if i != j {
                    assert_eq!(m[(i, j)], c(0.0, 0.0));
                }
            }
        }
        let deg = degrees(2, 5);
        for (i, d) in deg.iter().enumerate() {
            assert_eq!(m[(i, i)].re, *d as f64);
        }
    }

    #[test]
    fn hermitian_and_skew_parts() {
        let op = assemble_fiber(2, &[0.4, -0.9], 6).unwrap();
        let h = op.hermitian_part();
        let s = op.skew_part();
        assert!((&h - h.adjoint()).norm() == 0.0);
        assert!((&s + s.adjoint()).norm() == 0.0);
        let n = op.size();
        for i in 0..n {
            assert_eq!(s[(i, i)], c(0.0, 0.0));
            for j in 0..n {
                if i != j {
                    assert_eq!(h[(i, j)], c(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn spectrum_examples() {
        let op = assemble_fiber(1, &[0.7], 64).unwrap();
        let ev = fiber_spectrum(&op, 4).unwrap();
        assert!((ev[0].value - c(0.49, 0.0)).norm() <= 1e-8);
        assert_eq!(ev[0].level, 0);
        assert!(ev[0].trusted);

        let op = assemble_fiber(2, &[0.0, 0.0], 6).unwrap();
        let ev = fiber_spectrum(&op, 3).unwrap();
        assert_eq!(ev[0].value, c(0.0, 0.0));
        assert_eq!(ev[1].value, c(1.0, 0.0));
        assert_eq!(ev[2].value, c(1.0, 0.0));

        let op = assemble_fiber(1, &[0.0], 8).unwrap();
        let ev = fiber_spectrum(&op, 8).unwrap();
        for (k, e) in ev.iter().enumerate() {
            assert_eq!(e.value, c(k as f64, 0.0));
        }
        assert!(fiber_spectrum(&op, 9).is_err());
    }

    #[test]
    fn eigenvalue_convergence_in_truncation() {
        // errors are non-increasing in J down to the roundoff floor
        for xi in [0.5, 1.0, 1.5] {
            for level in 0..3 {
                let mut prev = f64::INFINITY;
                for trunc in [16, 32, 64, 128] {
                    let op = assemble_fiber(1, &[xi], trunc).unwrap();
                    let ev = fiber_spectrum(&op, 3).unwrap();
                    let err = (ev[level].value - c(level as f64 + xi * xi, 0.0)).norm();
                    assert!(err <= prev.max(1e-11), "xi={xi} l={level} J={trunc}: {err:e} after {prev:e}");
                    if trunc >= 64 {
                        assert!(err <= 1e-10);
                    }
                    prev = err;
                }
            }
        }
    }

    #[test]
    fn shifted_ground_overlap_matches_closed_form() {
        for xi in [0.0, 0.5, 1.0, 2.0] {
            let m = shifted_expansion(xi, 40, 0).unwrap();
            let want = shifted_ground_overlap(xi);
            assert!((m[(0, 0)] - c(want, 0.0)).norm() <= 1e-11 * want, "xi={xi}: {}", m[(0, 0)]);
        }
    }

    #[test]
    fn projection_at_zero_is_ground_state() {
        let p = riesz_projection(0, &[0.0], 8).unwrap().to_dense();
        for i in 0..8 {
            for j in 0..8 {
                let want = if i == 0 && j == 0 { 1.0 } else { 0.0 };
                assert!((p[(i, j)] - c(want, 0.0)).norm() <= 1e-13);
            }
        }
    }

    #[test]
    fn projection_examples() {
        let p0 = riesz_projection(0, &[0.5], 64).unwrap();
        assert!(p0.idempotency_residual <= 1e-8, "{:e}", p0.idempotency_residual);
        assert_eq!(p0.convention, PairingConvention::ConjugateFirst);
        let d0 = p0.to_dense();
        assert!((&d0 * &d0 - &d0).norm() <= 1e-8);
        let p1 = riesz_projection(1, &[0.5], 64).unwrap().to_dense();
        assert!((&d0 * &p1).norm() <= 1e-8);
        assert!((&p1 * &d0).norm() <= 1e-8);
        // <Pi_0 phi_0, phi_0> = e^{xi^2}
        assert!((d0[(0, 0)] - c(0.25f64.exp(), 0.0)).norm() <= 1e-12);
    }

    #[test]
    fn projection_algebra_and_traces() {
        let xi = [0.5, -0.3];
        let projs: Vec<CMatrix> = (0..=3).map(|l| riesz_projection(l, &xi, 24).unwrap().to_dense()).collect();
        let op = assemble_fiber(2, &xi, 24).unwrap();
        for l in 0..=3 {
            let pl = riesz_projection(l, &xi, 24).unwrap();
            assert!((pl.trace() - c((l + 1) as f64, 0.0)).norm() <= 1e-8, "l={l}");
            let lam = c(l as f64 + 0.34, 0.0);
            assert!((op.matrix() * &projs[l] - &projs[l] * lam).norm() <= 1e-7);
            assert!(pl.intertwining_residual <= 1e-7);
            for m in 0..=3 {
                let prod = &projs[l] * &projs[m];
                let want = if l == m { projs[l].clone() } else { CMatrix::zeros(prod.nrows(), prod.ncols()) };
                assert!((prod - want).norm() <= 1e-7, "l={l} m={m}");
            }
        }
    }

    #[test]
    fn semi_simple_residuals_stay_small() {
        for trunc in [32, 64, 96] {
            let p = riesz_projection(1, &[1.0], trunc).unwrap();
            assert!(p.idempotency_residual <= 1e-8 && p.intertwining_residual <= 1e-8, "J={trunc}");
        }
    }

    #[test]
    fn propagate_examples() {
        let op = assemble_fiber(1, &[0.0], 6).unwrap();
        let v = random_vec(6, 1);
        let out = fiber_propagate(&op, 0.7, &v).unwrap();
        for k in 0..6 {
            assert!((out[k] - v[k] * (-0.7 * k as f64).exp()).norm() <= 1e-14);
        }

        let op = assemble_fiber(2, &[0.8, 0.2], 12).unwrap();
        let v = random_vec(op.size(), 2);
        for t in [0.1, 1.0, 10.0] {
            let out = fiber_propagate(&op, t, &v).unwrap();
            assert!(out.norm() <= v.norm() * (1.0 + 1e-12));
        }
        assert!(fiber_propagate(&op, 0.0, &v).is_err());
    }

    #[test]
    fn propagate_matches_spectral_sum() {
        let xi = 0.5;
        let trunc = 48;
        let op = assemble_fiber(1, &[xi], trunc).unwrap();
        let projs: Vec<RieszProjection> = (0..=3).map(|l| riesz_projection(l, &[xi], trunc).unwrap()).collect();
        let basis = shifted_expansion(xi, trunc, 3).unwrap();
        let weights = [c(1.0, 0.0), c(-0.5, 0.25), c(0.3, 0.0), c(0.0, 0.2)];
        let mut v = CVector::zeros(trunc);
        for (l, w) in weights.iter().enumerate() {
            v += basis.column(l) * *w;
        }
        let t = 1.0;
        let direct = fiber_propagate(&op, t, &v).unwrap();
        let mut spectral = CVector::zeros(trunc);
        for (l, p) in projs.iter().enumerate() {
            spectral += p.apply(&v) * c((-t * (l as f64 + xi * xi)).exp(), 0.0);
        }
        assert!((direct - spectral).norm() <= 1e-6 * v.norm());
    }

    #[test]
    fn resolvent_examples() {
        let op = assemble_fiber(1, &[0.0], 6).unwrap();
        let mut e0 = CVector::zeros(6);
        e0[0] = c(1.0, 0.0);
        let u = fiber_resolvent(&op, c(-1.0, 0.0), &e0).unwrap();
        assert!((u - &e0).norm() <= 1e-15);

        let op = assemble_fiber(1, &[0.6], 32).unwrap();
        let v = random_vec(32, 3);
        let (z1, z2) = (c(-1.0, 0.0), c(-2.0, 1.0));
        let r1 = fiber_resolvent(&op, z1, &v).unwrap();
        let r2 = fiber_resolvent(&op, z2, &v).unwrap();
        let r12 = fiber_resolvent(&op, z1, &r2).unwrap() * (z1 - z2);
        assert!((r1 - r2 - r12).norm() <= 1e-9 * v.norm());

        let pole = c(0.36, 0.0);
        assert!(fiber_resolvent(&op, pole, &v).is_err());
    }

    #[test]
    fn resolvent_blows_up_at_ground_level() {
        let xi = 0.6;
        let op = assemble_fiber(1, &[xi], 32).unwrap();
        let mut e0 = CVector::zeros(32);
        e0[0] = c(1.0, 0.0);
        let target = xi * xi;
        let mut scaled = Vec::new();
        for d in [1e-2, 1e-3, 1e-4] {
            let u = fiber_resolvent(&op, c(target - d, 0.0), &e0).unwrap();
            scaled.push(u.norm() * d);
        }
        // dist * ||R c|| tends to ||Pi_0 c||
        let pi0 = riesz_projection(0, &[xi], 32).unwrap().apply(&e0).norm();
        assert!((scaled[2] - pi0).abs() <= 1e-3 * pi0);
        assert!((scaled[1] - pi0).abs() < (scaled[0] - pi0).abs());
    }

    #[test]
    fn b0_examples() {
        let chi = CutoffChi::default();
        let z = [0.0, 0.0];
        assert!((b0_symbol(&z, &z, &z, &chi).unwrap() - c(2.0, 0.0)).norm() < 1e-15);
        let far = [2.2, 0.5];
        assert_eq!(b0_symbol(&z, &far, &z, &chi).unwrap(), c(0.0, 0.0));
        let v = [0.3, -0.2];
        let xi = [1.0, 0.5];
        let eta = [0.1, 0.4];
        let b = b0_symbol(&v, &xi, &eta, &chi).unwrap();
        let want = 2.0 * chi.eval(&xi) * (-(0.13) - 0.17 + 2.0 * 1.25f64).exp();
        assert!((b.norm() - want).abs() <= 1e-13 * want);
    }

    #[test]
    fn cutoff_profile() {
        let chi = CutoffChi::default();
        assert_eq!(chi.eval(&[0.0]), 1.0);
        assert_eq!(chi.eval(&[3.5f64.sqrt()]), 1.0);
        assert_eq!(chi.eval(&[4.5f64.sqrt()]), 0.0);
        let mut prev = 1.0;
        for k in 0..=100 {
            let r = 3.5f64.sqrt() + (4.5f64.sqrt() - 3.5f64.sqrt()) * k as f64 / 100.0;
            let v = chi.eval(&[r]);
            assert!((0.0..=1.0).contains(&v) && v <= prev);
            prev = v;
        }
        assert!(CutoffChi::new(1.5).is_err());
    }

    proptest::proptest! {
        #[test]
        fn prop_accretive(xi0 in -2.0f64..2.0, xi1 in -2.0f64..2.0, seed in 0u64..1000) {
            let op = assemble_fiber(2, &[xi0, xi1], 7).unwrap();
            let v = random_vec(op.size(), seed);
            let form = op.apply(&v).dotc(&v);
            let a = op.annihilation_norm_sq(&v);
            proptest::prop_assert!(form.re >= 0.0);
            proptest::prop_assert!((form.re - a).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn prop_propagate_contracts(xi in -3.0f64..3.0, t in 0.01f64..10.0, seed in 0u64..1000) {
            let op = assemble_fiber(1, &[xi], 24).unwrap();
            let v = random_vec(24, seed);
            let out = fiber_propagate(&op, t, &v).unwrap();
            proptest::prop_assert!(out.norm() <= v.norm() * (1.0 + 1e-12));
        }

        #[test]
        fn prop_projection_trace_is_multiplicity(l in 0usize..3, x in -0.8f64..0.8, y in -0.8f64..0.8) {
            let p = riesz_projection(l, &[x, y], 20).unwrap();
            proptest::prop_assert!((p.trace() - c((l + 1) as f64, 0.0)).norm() <= 1e-8);
            proptest::prop_assert!(p.idempotency_residual <= 1e-8);
        }
    }

    #[test]
    fn displacement_closed_form_matches_quadrature() {
        for xi in [0.0, 0.4, -0.9, 1.5] {
            let quad = shifted_expansion(xi, 40, 5).unwrap();
            let closed = displacement_expansion(xi, 40, 5);
            let scale = closed.iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!((quad - &closed).norm() <= 1e-12 * scale, "xi={xi}");
        }
    }

    #[test]
    fn certificate_matches_f64_projection_where_both_resolve() {
        let cert = riesz_certificate(0.5, 64, 3).unwrap();
        for l in 0..=3 {
            let p = riesz_projection(l, &[0.5], 64).unwrap();
            assert!((p.to_dense().norm() / cert.norms[l] - 1.0).abs() < 1e-12);
            assert!(cert.idempotency[l] <= 1e-28 * cert.norms[l]);
        }
        assert!(riesz_certificate(0.5, 4, 3).is_err());
        // at xi = 1.5 the f64 projection of level 3 sits at its rounding floor
        let cert = riesz_certificate(1.5, 64, 3).unwrap();
        let p = riesz_projection(3, &[1.5], 64).unwrap();
        assert!(cert.idempotency[3] < 1e-20);
        assert!(p.idempotency_residual < 1e-15 * cert.norms[3] * cert.norms[3]);
    }
}
