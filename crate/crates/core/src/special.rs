//! Scalar special functions: Hermite polynomials and normalized Hermite
//! functions (real and complex argument), Gauss-Hermite quadrature for the
//! weight `e^{-s^2/2}`, Bessel/Hankel functions of integer and half-integer
//! order, and the small Gamma/double-factorial helpers the threshold
//! constants need.
//!
//! Conventions: `F_j` are the probabilists' Hermite polynomials
//! (`F_{j+1} = s F_j - j F_{j-1}`), `phi_j(s) = (j! sqrt(2 pi))^{-1/2} e^{-s^2/4} F_j(s)`
//! are orthonormal in `L^2(R)`, and the ladder relation
//! `s phi_j = sqrt(j) phi_{j-1} + sqrt(j+1) phi_{j+1}` holds.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest `|Im s|` for which complex-argument Hermite functions are evaluated.
pub const HERMITE_IMAG_LIMIT: f64 = 8.0;

/// Largest supported Gauss-Hermite rule. Beyond this the outermost weights
/// underflow (`e^{-x^2/2}` with `x ~ 2 sqrt(m)`).
pub const GAUSS_HERMITE_MAX_NODES: usize = 320;

/// Radius at which the Hankel evaluation switches from power series to the
/// large-argument asymptotic expansion (the actual switch is
/// `max(HANKEL_SWITCH_RADIUS, 2 nu)`).
pub const HANKEL_SWITCH_RADIUS: f64 = 10.0;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `F_j(s)` by the three-term recurrence.
pub fn hermite_poly(j: usize, s: Complex64) -> Complex64 {
    let mut prev = Complex64::new(1.0, 0.0);
    if j == 0 {
        return prev;
    }
    let mut cur = s;
    for k in 1..j {
        let next = s * cur - (k as f64) * prev;
        prev = cur;
        cur = next;
    }
    cur
}

fn check_imag(s: Complex64) -> Result<()> {
    if s.im.abs() > HERMITE_IMAG_LIMIT {
        return Err(Error::HermiteOverflow { imag: s.im.abs(), limit: HERMITE_IMAG_LIMIT });
    }
    Ok(())
}

/// Normalized Hermite function `phi_j(s)`, analytically continued to complex `s`.
pub fn hermite_fn(j: usize, s: Complex64) -> Result<Complex64> {
    Ok(*hermite_fns(j + 1, s)?.last().expect("count >= 1"))
}

/// `phi_0(s), ..., phi_{count-1}(s)` via the normalized recurrence
/// `phi_{j+1} = (s phi_j - sqrt(j) phi_{j-1}) / sqrt(j+1)`.
pub fn hermite_fns(count: usize, s: Complex64) -> Result<Vec<Complex64>> {
    check_imag(s)?;
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return Ok(out);
    }
    let phi0 = (2.0 * PI).powf(-0.25) * (-s * s / 4.0).exp();
    out.push(phi0);
    if count == 1 {
        return Ok(out);
    }
    out.push(s * phi0);
    for j in 1..count - 1 {
        let jf = j as f64;
        let next = (s * out[j] - jf.sqrt() * out[j - 1]) / (jf + 1.0).sqrt();
        out.push(next);
    }
    Ok(out)
}

/// Real-argument variant of [`hermite_fns`].
pub fn hermite_fns_real(count: usize, s: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    out.push((2.0 * PI).powf(-0.25) * (-s * s / 4.0).exp());
    if count > 1 {
        out.push(s * out[0]);
    }
    for j in 1..count.saturating_sub(1) {
        let jf = j as f64;
        out.push((s * out[j] - jf.sqrt() * out[j - 1]) / (jf + 1.0).sqrt());
    }
    out
}

/// Gauss-Hermite rule for `int f(s) e^{-s^2/2} ds`.
#[derive(Debug, Clone)]
pub struct HermiteBasis1D {
    /// Polynomial degree integrated exactly, `2 m - 1`.
    pub max_degree: usize,
    pub quad_nodes: Vec<f64>,
    /// Weights for the `e^{-s^2/2}` measure.
    pub quad_weights: Vec<f64>,
    /// `quad_weights[i] * e^{x_i^2/2}`, for integrands that already carry
    /// their Gaussian decay.
    pub plain_weights: Vec<f64>,
}

impl HermiteBasis1D {
    pub fn len(&self) -> usize {
        self.quad_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quad_nodes.is_empty()
    }

    /// `sum_i w_i f(x_i)`, approximating `int f(s) e^{-s^2/2} ds`.
    pub fn integrate_weighted<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.quad_nodes.iter().zip(&self.quad_weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// `sum_i W_i g(x_i)`, approximating `int g(s) ds` for Gaussian-decaying `g`.
    pub fn integrate_plain<F: Fn(f64) -> Complex64>(&self, g: F) -> Complex64 {
        self.quad_nodes.iter().zip(&self.plain_weights).map(|(&x, &w)| w * g(x)).sum()
    }
}

/// Golub-Welsch nodes, Newton-polished on `phi_m`, with weights from the
/// Christoffel function `1 / sum_k phi_k(x)^2`.
///
/// Supported for `1 <= m <= GAUSS_HERMITE_MAX_NODES`.
pub fn gauss_hermite(m: usize) -> Result<HermiteBasis1D> {
    if m == 0 || m > GAUSS_HERMITE_MAX_NODES {
        return Err(Error::QuadratureSize(m, GAUSS_HERMITE_MAX_NODES));
    }
    let mut jacobi = DMatrix::<f64>::zeros(m, m);
    for k in 1..m {
        let b = (k as f64).sqrt();
        jacobi[(k, k - 1)] = b;
        jacobi[(k - 1, k)] = b;
    }
    let eig = jacobi.symmetric_eigen();
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.total_cmp(b));

    for x in nodes.iter_mut() {
        for _ in 0..4 {
            let phi = hermite_fns_real(m + 1, *x);
            let step = phi[m] / ((m as f64).sqrt() * phi[m - 1]);
            if !step.is_finite() {
                break;
            }
            *x -= step;
            if step.abs() < 1e-15 * x.abs().max(1.0) {
                break;
            }
        }
    }
    // exact reflection symmetry
    for i in 0..m / 2 {
        let a = 0.5 * (nodes[m - 1 - i] - nodes[i]);
        nodes[i] = -a;
        nodes[m - 1 - i] = a;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }

    let mut plain = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for &x in &nodes {
        let phi = hermite_fns_real(m, x);
        let christoffel: f64 = phi.iter().map(|p| p * p).sum();
        let w_plain = 1.0 / christoffel;
        plain.push(w_plain);
        weights.push((-(christoffel.ln()) - 0.5 * x * x).exp());
    }
    for i in 0..m / 2 {
        let w = 0.5 * (weights[i] + weights[m - 1 - i]);
        weights[i] = w;
        weights[m - 1 - i] = w;
        let wp = 0.5 * (plain[i] + plain[m - 1 - i]);
        plain[i] = wp;
        plain[m - 1 - i] = wp;
    }
    Ok(HermiteBasis1D { max_degree: 2 * m - 1, quad_nodes: nodes, quad_weights: weights, plain_weights: plain })
}

/// `k!!` with `(-1)!! = 0!! = 1`.
pub fn double_factorial(k: i64) -> Result<u128> {
    if k < -1 {
        return Err(Error::InvalidArgument(format!("double factorial needs k >= -1, got {k}")));
    }
    let mut acc: u128 = 1;
    let mut i = k;
    while i > 1 {
        acc = acc.checked_mul(i as u128).ok_or_else(|| Error::InvalidArgument(format!("{k}!! overflows u128")))?;
        i -= 2;
    }
    Ok(acc)
}

/// `m!` as a float.
pub fn factorial(m: u64) -> f64 {
    (1..=m).fold(1.0, |acc, k| acc * k as f64)
}

/// `Gamma(m / 2)` for integer `m`, by upward/downward recurrence from
/// `Gamma(1/2) = sqrt(pi)` and `Gamma(1) = 1`. Non-positive even `m` are poles.
pub fn gamma_half(m: i64) -> Result<f64> {
    if m <= 0 && m % 2 == 0 {
        return Err(Error::InvalidArgument(format!("Gamma({m}/2) is a pole")));
    }
    let (mut x2, mut val) = if m % 2 == 0 { (2_i64, 1.0) } else { (1_i64, PI.sqrt()) };
    while x2 < m {
        val *= x2 as f64 / 2.0;
        x2 += 2;
    }
    while x2 > m {
        x2 -= 2;
        val /= x2 as f64 / 2.0;
    }
    Ok(val)
}

fn digamma_int(m: u64) -> f64 {
    // psi(m) for m >= 1
    (1..m).fold(-EULER_GAMMA, |acc, k| acc + 1.0 / k as f64)
}

/// Order of a Bessel function, restricted to integers and half-integers.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Order {
    twice: i64,
}

impl Order {
    fn new(nu: f64) -> Result<Self> {
        let twice = (2.0 * nu).round();
        if (2.0 * nu - twice).abs() > 1e-12 || nu < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "Bessel order must be a non-negative integer or half-integer, got {nu}"
            )));
        }
        Ok(Self { twice: twice as i64 })
    }

    fn value(self) -> f64 {
        self.twice as f64 / 2.0
    }

    fn is_integer(self) -> bool {
        self.twice % 2 == 0
    }
}

/// `J_nu(w)` by power series, for any real order that is not a negative integer.
fn j_series(nu2: i64, w: Complex64) -> Complex64 {
    let nu = nu2 as f64 / 2.0;
    let half = w / 2.0;
    let lead = if nu2 == 0 { Complex64::new(1.0, 0.0) } else { (nu * half.ln()).exp() };
    let gamma = gamma_half(nu2 + 2).expect("order is not a negative integer");
    let q = -(half * half);
    let mut term = lead / gamma;
    let mut sum = term;
    for k in 1..400 {
        let kf = k as f64;
        term *= q / (kf * (kf + nu));
        sum += term;
        if term.norm() <= 1e-17 * sum.norm() && kf > w.norm() {
            break;
        }
    }
    sum
}

/// `Y_n(w)` for integer `n` by the logarithmic series.
fn y_series_integer(n: u64, w: Complex64) -> Complex64 {
    let half = w / 2.0;
    let q = half * half;
    let mut finite = Complex64::new(0.0, 0.0);
    if n > 0 {
        let mut qk = Complex64::new(1.0, 0.0);
        for k in 0..n {
            finite += factorial(n - k - 1) / factorial(k) * qk;
            qk *= q;
        }
        finite *= half.powi(-(n as i32));
    }
    let jn = j_series(2 * n as i64, w);
    let mut tail = Complex64::new(0.0, 0.0);
    let mut term = Complex64::new(1.0 / factorial(n), 0.0);
    let mut psi_a = digamma_int(1);
    let mut psi_b = digamma_int(n + 1);
    for k in 0..400u64 {
        if k > 0 {
            let kf = k as f64;
            term *= -q / (kf * (kf + n as f64));
            psi_a += 1.0 / kf;
            psi_b += 1.0 / (kf + n as f64);
        }
        let add = (psi_a + psi_b) * term;
        tail += add;
        if k > 2 && add.norm() <= 1e-17 * tail.norm() && (k as f64) > w.norm() {
            break;
        }
    }
    tail *= half.powi(n as i32);
    (-finite + 2.0 * half.ln() * jn - tail) / PI
}

fn jy_series(order: Order, w: Complex64) -> (Complex64, Complex64) {
    let j = j_series(order.twice, w);
    let y = if order.is_integer() {
        y_series_integer((order.twice / 2) as u64, w)
    } else {
        // nu = m + 1/2:  Y_nu = (-1)^(m+1) J_{-nu}
        let m = (order.twice - 1) / 2;
        let sign = if (m + 1) % 2 == 0 { 1.0 } else { -1.0 };
        sign * j_series(-order.twice, w)
    };
    (j, y)
}

/// Large-argument expansions of `H^(1)_nu` and `H^(2)_nu`, summed until the
/// terms stop decreasing. For half-integer order the series terminates and is
/// exact at every `w`.
fn hankel_asymptotic(order: Order, w: Complex64) -> (Complex64, Complex64) {
    let nu = order.value();
    let mu = 4.0 * nu * nu;
    let omega = w - nu * PI / 2.0 - PI / 4.0;
    let pref = (2.0 / (PI * w)).sqrt();
    let i = Complex64::new(0.0, 1.0);
    let mut s1 = Complex64::new(1.0, 0.0);
    let mut s2 = Complex64::new(1.0, 0.0);
    let mut ak = 1.0_f64;
    let mut wk = Complex64::new(1.0, 0.0);
    let mut ik = Complex64::new(1.0, 0.0);
    let mut last = f64::INFINITY;
    for k in 1..80 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        ak *= (mu - odd * odd) / (kf * 8.0);
        if ak == 0.0 {
            break;
        }
        wk *= w;
        ik *= i;
        let t = ak / wk;
        let mag = t.norm();
        if mag > last && order.is_integer() {
            break;
        }
        last = mag;
        s1 += ik * t;
        s2 += ik.conj() * t;
        if mag < 1e-17 {
            break;
        }
    }
    let e1 = (i * omega).exp();
    let e2 = (-i * omega).exp();
    (pref * e1 * s1, pref * e2 * s2)
}

fn switch_radius(order: Order) -> f64 {
    HANKEL_SWITCH_RADIUS.max(2.0 * order.value())
}

fn check_hankel_arg(w: Complex64) -> Result<()> {
    if w.norm() == 0.0 {
        return Err(Error::HankelSingular);
    }
    if w.im < 0.0 {
        return Err(Error::InvalidArgument(format!("Hankel argument must satisfy Im w >= 0, got {w}")));
    }
    Ok(())
}

/// Bessel pair `(J_nu(w), Y_nu(w))` for integer or half-integer `nu >= 0`,
/// `Im w >= 0`, `w != 0`.
pub fn bessel_jy(nu: f64, w: Complex64) -> Result<(Complex64, Complex64)> {
    let order = Order::new(nu)?;
    check_hankel_arg(w)?;
    if w.norm() < switch_radius(order) {
        Ok(jy_series(order, w))
    } else {
        let (h1, h2) = hankel_asymptotic(order, w);
        Ok(((h1 + h2) / 2.0, (h1 - h2) / Complex64::new(0.0, 2.0)))
    }
}

/// Hankel function of the first kind `H^(1)_nu(w) = J_nu(w) + i Y_nu(w)`.
///
/// Half-integer orders use the terminating expansion, which is exact. Integer
/// orders use the power series below `max(10, 2 nu)` and the asymptotic
/// expansion above. The series branch degrades near the switch radius when
/// `arg w` approaches `pi/2`: `|J|` grows like `e^{Im w}` while `|H^(1)|`
/// decays like `e^{-Im w}`, so roughly `2 Im w / ln 10` digits are lost
/// (about `3e-8` relative at `|w| = 12`, `arg w = pi/4`).
pub fn hankel_h1(nu: f64, w: Complex64) -> Result<Complex64> {
    let order = Order::new(nu)?;
    check_hankel_arg(w)?;
    if order.is_integer() && w.norm() < switch_radius(order) {
        let (j, y) = jy_series(order, w);
        Ok(j + Complex64::new(0.0, 1.0) * y)
    } else {
        Ok(hankel_asymptotic(order, w).0)
    }
}

/// Series (`J + iY`) and asymptotic evaluations of `H^(1)_nu(w)` regardless
/// of `|w|`, for overlap checks.
pub fn hankel_h1_branches(nu: f64, w: Complex64) -> Result<(Complex64, Complex64)> {
    let order = Order::new(nu)?;
    check_hankel_arg(w)?;
    let (j, y) = jy_series(order, w);
    Ok((j + Complex64::new(0.0, 1.0) * y, hankel_asymptotic(order, w).0))
}
