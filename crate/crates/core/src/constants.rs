//! Threshold and time-decay constants, and the dispersive envelope `gamma(t)`.
//!
//! Everything here is computed from Gamma values and double factorials at
//! call time; the identity `a_{n,n-2} b_n = c_{n,0} e_n = (4 pi)^{-n/2}` is a
//! genuine cross-check between independently computed factors.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::special::{double_factorial, factorial, gamma_half};

/// Below this time `sigma` is summed from its Taylor series.
pub const SIGMA_SERIES_THRESHOLD: f64 = 1e-3;

/// Constants attached to one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KfpConstants {
    pub dim: usize,
    /// Leading low-energy coefficient `a_{n,n-2}` (odd `n`).
    pub a_leading: Option<Complex64>,
    /// Log coefficient `c_{n,0}` (even `n`).
    pub c_log: Option<f64>,
    /// Time-decay factor `b_n` (odd `n`).
    pub b_time: Option<Complex64>,
    /// Time-decay factor `e_n` (even `n`).
    pub e_time: Option<f64>,
    pub heat_product: f64,
}

impl KfpConstants {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(invalid(format!("constants are defined for n >= 3, got {n}")));
        }
        let odd = n % 2 == 1;
        Ok(Self {
            dim: n,
            a_leading: if odd { Some(a_leading(n)?) } else { None },
            c_log: if odd { None } else { Some(c_log(n)?) },
            b_time: if odd { Some(b_time(n)?) } else { None },
            e_time: if odd { None } else { Some(e_time(n)?) },
            heat_product: heat_product(n)?,
        })
    }

    /// `heat_product / (4 pi)^{-n/2} - 1`.
    pub fn identity_residual(&self) -> f64 {
        self.heat_product / heat_kernel_constant(self.dim) - 1.0
    }
}

/// `(4 pi)^{-n/2}`.
pub fn heat_kernel_constant(n: usize) -> f64 {
    (4.0 * PI).powf(-(n as f64) / 2.0)
}

fn require_odd(n: usize) -> Result<()> {
    if n < 3 || n.is_multiple_of(2) {
        return Err(invalid(format!("expected odd n >= 3, got {n}")));
    }
    Ok(())
}

fn require_even(n: usize) -> Result<()> {
    if n < 4 || n % 2 == 1 {
        return Err(invalid(format!("expected even n >= 4, got {n}")));
    }
    Ok(())
}

/// `i / (2 (2 pi)^{(n-1)/2} (n-2)!!)` for odd `n >= 3`.
pub fn a_leading(n: usize) -> Result<Complex64> {
    require_odd(n)?;
    let df = double_factorial(n as i64 - 2)? as f64;
    let den = 2.0 * (2.0 * PI).powi(((n - 1) / 2) as i32) * df;
    Ok(Complex64::new(0.0, 1.0 / den))
}

/// `-1 / ((2 pi)^{n/2} 2^{(n-2)/2} ((n-2)/2)!)` for even `n >= 4`.
pub fn c_log(n: usize) -> Result<f64> {
    require_even(n)?;
    let h = (n - 2) / 2;
    Ok(-1.0 / ((2.0 * PI).powi((n / 2) as i32) * 2f64.powi(h as i32) * factorial(h as u64)))
}

/// `Gamma(n/2) / (pi i)` for odd `n >= 3`.
pub fn b_time(n: usize) -> Result<Complex64> {
    require_odd(n)?;
    Ok(Complex64::new(gamma_half(n as i64)?, 0.0) / Complex64::new(0.0, PI))
}

/// Second closed form of [`b_time`]: `(n-2)!! / (sqrt(pi) i 2^{(n-1)/2})`.
pub fn b_time_double_factorial(n: usize) -> Result<Complex64> {
    require_odd(n)?;
    let df = double_factorial(n as i64 - 2)? as f64;
    let den = PI.sqrt() * 2f64.powi(((n - 1) / 2) as i32);
    Ok(Complex64::new(df / den, 0.0) / Complex64::new(0.0, 1.0))
}

/// `-((n-2)/2)! / 2` for even `n >= 4`.
pub fn e_time(n: usize) -> Result<f64> {
    require_even(n)?;
    Ok(-factorial(((n - 2) / 2) as u64) / 2.0)
}

/// `a_{n,n-2} b_n` (odd `n`) or `c_{n,0} e_n` (even `n`).
pub fn heat_product(n: usize) -> Result<f64> {
    if n < 3 {
        return Err(invalid(format!("heat product is defined for n >= 3, got {n}")));
    }
    if n % 2 == 1 {
        let p = a_leading(n)? * b_time(n)?;
        if p.im.abs() > 1e-15 * p.re.abs().max(1e-300) {
            return Err(Error::IllConditioned(format!("odd-n heat product has imaginary part {}", p.im)));
        }
        Ok(p.re)
    } else {
        Ok(c_log(n)? * e_time(n)?)
    }
}

/// `sigma`, `theta` and their product `gamma` at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaEnvelope {
    pub t: f64,
    pub sigma: f64,
    pub theta: f64,
    pub gamma: f64,
}

/// Taylor series of `t - 2 coth t + 2 cosech t = t - 2 tanh(t/2)`.
pub fn sigma_series(t: f64) -> f64 {
    let t2 = t * t;
    t * t2 * (1.0 / 12.0 + t2 * (-1.0 / 120.0 + t2 * (17.0 / 20160.0 - t2 * 31.0 / 362880.0)))
}

/// `t - 2 coth t + 2 cosech t`, evaluated as `t - 2 tanh(t/2)`.
pub fn sigma_direct(t: f64) -> f64 {
    t - 2.0 * (t / 2.0).tanh()
}

pub fn gamma_envelope(t: f64) -> Result<GammaEnvelope> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(invalid(format!("gamma envelope needs finite t > 0, got {t}")));
    }
    let sigma = if t < SIGMA_SERIES_THRESHOLD { sigma_series(t) } else { sigma_direct(t) };
    // 4 pi e^{-t} sinh t = 2 pi (1 - e^{-2t})
    let theta = -2.0 * PI * (-2.0 * t).exp_m1();
    Ok(GammaEnvelope { t, sigma, theta, gamma: sigma * theta })
}

/// Finite-difference slope of `gamma` between `t0` and `t1`.
pub fn gamma_slope(t0: f64, t1: f64) -> Result<f64> {
    if !(t1 > t0) {
        return Err(invalid("gamma slope needs t1 > t0"));
    }
    Ok((gamma_envelope(t1)?.gamma - gamma_envelope(t0)?.gamma) / (t1 - t0))
}
