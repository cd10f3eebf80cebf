//! Semigroup `S(t) = e^{-tP}`: Krylov time stepping on the phase-space grid,
//! exact per-mode free evolution, and decay-law measurement.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::heat_kernel_constant;
use crate::error::{invalid, Error, Result};
use crate::fiber::{axis_matrix, fiber_propagate, CMatrix, CVector};
use crate::linalg::{expv, integrate_vec, lstsq, lstsq_real};
use crate::par;
use crate::phase_space::{
    weighted_pair, PhaseOperator, PotentialSpec, StateVector, WeightSpec, DEFAULT_TAIL_THRESHOLD, DEFAULT_WRAP_BETA,
};
use crate::special::gamma_half;

/// Krylov subspace dimension for the exponential integrator.
pub const KRYLOV_DIM: usize = 30;

/// Hermite truncation per axis for the radial fiber route.
pub const RADIAL_TRUNCATION: usize = 32;

/// Smallest ratio `t_hi / t_lo` accepted for a decay fit (half a decade).
pub const MIN_FIT_SPAN: f64 = 3.162_277_660_168_379_5;

/// Numerical-trust thresholds applied to time evolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustGuards {
    pub wrap_beta: f64,
    pub tail_threshold: f64,
}

impl Default for TrustGuards {
    fn default() -> Self {
        Self { wrap_beta: DEFAULT_WRAP_BETA, tail_threshold: DEFAULT_TAIL_THRESHOLD }
    }
}

/// Diagnostics of one propagation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PropagateStats {
    pub steps: usize,
    pub rejected: usize,
    pub error_estimate: f64,
    /// `||S(t)u|| / ||u||`.
    pub norm_ratio: f64,
    pub tail_mass: f64,
}

fn propagate_raw(op: &PhaseOperator, u: &StateVector, t: f64, tol: f64) -> Result<(StateVector, PropagateStats)> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid(format!("propagation time must be nonnegative, got {t}")));
    }
    if !(tol > 0.0) {
        return Err(invalid(format!("integrator tolerance must be positive, got {tol}")));
    }
    if u.grid != *op.grid() {
        return Err(Error::DimensionMismatch("state and operator grids differ".into()));
    }
    let (w, stats) = expv(|v| op.apply_p_vec(v), t, &u.coeffs, KRYLOV_DIM, tol)?;
    let out = StateVector { grid: u.grid, coeffs: w };
    let n0 = u.norm();
    let stats = PropagateStats {
        steps: stats.steps,
        rejected: stats.rejected,
        error_estimate: stats.error_estimate,
        norm_ratio: if n0 > 0.0 { out.norm() / n0 } else { 0.0 },
        tail_mass: out.tail_mass(),
    };
    Ok((out, stats))
}

/// `S(t) u` to tolerance `tol` (relative to `||u||`), enforcing the
/// wrap-around and Hermite-tail guards.
pub fn propagate(
    op: &PhaseOperator,
    u: &StateVector,
    t: f64,
    tol: f64,
    guards: &TrustGuards,
) -> Result<(StateVector, PropagateStats)> {
    op.grid().check_wrap(t, guards.wrap_beta)?;
    let (out, stats) = propagate_raw(op, u, t, tol)?;
    if stats.tail_mass > guards.tail_threshold {
        return Err(Error::HermiteTail { mass: stats.tail_mass, threshold: guards.tail_threshold });
    }
    Ok((out, stats))
}

/// `e^{-t P0} u` exactly, one dense fiber exponential per Fourier mode.
pub fn propagate_free_fibers(op: &PhaseOperator, u: &StateVector, t: f64) -> Result<StateVector> {
    let g = *op.grid();
    if u.grid != g {
        return Err(Error::DimensionMismatch("state and operator grids differ".into()));
    }
    if t == 0.0 {
        return Ok(u.clone());
    }
    let modes = par::map_range(g.spatial_len(), |k| -> Result<CVector> {
        let fib = op.mode_fiber(k)?;
        fiber_propagate(&fib, t, &u.mode_vector(k))
    });
    let mut out = StateVector::zeros(&g);
    for (k, m) in modes.into_iter().enumerate() {
        out.set_mode_vector(k, &m?);
    }
    Ok(out)
}

/// Logarithmically spaced times.
pub fn log_times(t_min: f64, t_max: f64, count: usize) -> Result<Vec<f64>> {
    if !(t_min > 0.0) || !(t_max > t_min) || count < 2 {
        return Err(invalid(format!(
            "need 0 < t_min < t_max and at least 2 samples, got [{t_min}, {t_max}] x {count}"
        )));
    }
    let (a, b) = (t_min.ln(), t_max.ln());
    Ok((0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect())
}

/// Closed interval of times used by the decay fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub t_lo: f64,
    pub t_hi: f64,
    pub min_samples: usize,
}

impl Default for FitWindow {
    fn default() -> Self {
        Self { t_lo: 20.0, t_hi: 100.0, min_samples: 12 }
    }
}

impl FitWindow {
    /// Default window clipped to the wrap-around limit.
    pub fn clipped(t_wrap: f64) -> Self {
        let d = Self::default();
        Self { t_hi: d.t_hi.min(t_wrap), ..d }
    }
}

/// Result of fitting a pairing family against `t^{-n/2}`.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    /// Slope of `ln|p|` against `ln t` with a `1/t` correction column.
    pub exponent: f64,
    /// Plain two-parameter log-log slope.
    pub raw_exponent: f64,
    /// `A` in `p(t) t^{n/2} = A + B/t`.
    pub amplitude: Complex64,
    pub samples: usize,
    pub t_lo: f64,
    pub t_hi: f64,
}

/// Fit `pairings` sampled at `times` on `window`.
pub fn fit_decay(dim: usize, times: &[f64], pairings: &[Complex64], window: &FitWindow) -> Result<DecayFit> {
    if times.len() != pairings.len() {
        return Err(Error::DimensionMismatch(format!("{} times vs {} pairings", times.len(), pairings.len())));
    }
    let sel: Vec<usize> = (0..times.len())
        .filter(|&i| times[i] >= window.t_lo * (1.0 - 1e-12) && times[i] <= window.t_hi * (1.0 + 1e-12))
        .collect();
    if sel.len() < window.min_samples {
        return Err(Error::FitWindow(format!(
            "{} samples in [{}, {}], need at least {}",
            sel.len(),
            window.t_lo,
            window.t_hi,
            window.min_samples
        )));
    }
    let t_lo = times[sel[0]];
    let t_hi = times[*sel.last().expect("nonempty")];
    if t_hi / t_lo < MIN_FIT_SPAN * (1.0 - 1e-9) {
        return Err(Error::FitWindow(format!("window [{t_lo}, {t_hi}] spans less than half a decade")));
    }
    if sel.iter().any(|&i| pairings[i].norm() == 0.0 || !pairings[i].norm().is_finite()) {
        return Err(Error::FitWindow("pairing vanishes or is not finite inside the fit window".into()));
    }
    let m = sel.len();
    let y = DVector::from_iterator(m, sel.iter().map(|&i| pairings[i].norm().ln()));
    let raw = DMatrix::from_fn(m, 2, |r, c| if c == 0 { 1.0 } else { times[sel[r]].ln() });
    let (raw_coef, _) = lstsq_real(&raw, &y)?;
    let full = DMatrix::from_fn(m, 3, |r, c| match c {
        0 => 1.0,
        1 => times[sel[r]].ln(),
        _ => 1.0 / times[sel[r]],
    });
    let (coef, _) = lstsq_real(&full, &y)?;
    let half = dim as f64 / 2.0;
    let amp_design = CMatrix::from_fn(m, 2, |r, c| Complex64::new(if c == 0 { 1.0 } else { 1.0 / times[sel[r]] }, 0.0));
    let amp_rhs = CVector::from_iterator(m, sel.iter().map(|&i| pairings[i] * times[i].powf(half)));
    let amp = lstsq(&amp_design, &amp_rhs)?;
    Ok(DecayFit { exponent: coef[1], raw_exponent: raw_coef[1], amplitude: amp.coeffs[0], samples: m, t_lo, t_hi })
}

/// Measured decay of one pairing family, with the heat-kernel prediction.
#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub dim: usize,
    pub potential: PotentialSpec,
    /// `"full-grid"` or `"fiber"`.
    pub route: String,
    pub family: String,
    pub times: Vec<f64>,
    pub pairings: Vec<Complex64>,
    /// `pairing / ((4 pi t)^{-n/2} <f,M><M,g>)` per time.
    pub ratios: Vec<Complex64>,
    pub fitted_exponent: f64,
    pub raw_exponent: f64,
    pub fitted_amplitude: Complex64,
    /// `(4 pi)^{-n/2} <f,M><M,g>`.
    pub predicted_amplitude: Complex64,
    pub f_moment: Complex64,
    pub g_moment: Complex64,
    pub fit_window: (f64, f64),
    pub fit_samples: usize,
    pub envelope_monotone: bool,
    pub box_half_width: Option<f64>,
    pub wrap_limit: Option<f64>,
    pub wrap_guard_ok: bool,
    pub max_tail_mass: f64,
    pub tail_ok: bool,
    pub integrator_tol: f64,
}

impl DecayReport {
    pub fn trusted(&self) -> bool {
        self.wrap_guard_ok && self.tail_ok
    }

    /// Relative amplitude error against the prediction.
    pub fn amplitude_error(&self) -> f64 {
        (self.fitted_amplitude - self.predicted_amplitude).norm() / self.predicted_amplitude.norm()
    }
}

fn predicted(dim: usize, fm: Complex64, gm: Complex64) -> Complex64 {
    fm * gm.conj() * heat_kernel_constant(dim)
}

fn ratios(dim: usize, times: &[f64], pairings: &[Complex64], amp: Complex64) -> Vec<Complex64> {
    times.iter().zip(pairings).map(|(t, p)| p / (amp * t.powf(-(dim as f64) / 2.0))).collect()
}

fn monotone_envelope(times: &[f64], pairings: &[Complex64], window: &FitWindow) -> bool {
    let v: Vec<f64> = times
        .iter()
        .zip(pairings)
        .filter(|(t, _)| **t >= window.t_lo && **t <= window.t_hi)
        .map(|(_, p)| p.norm())
        .collect();
    v.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9))
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(invalid("no sample times given"));
    }
    if times.iter().any(|t| !(*t > 0.0) || !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("sample times must be positive and strictly increasing"));
    }
    Ok(())
}

/// Options for [`decay_scan`].
#[derive(Debug, Clone, Copy)]
pub struct DecayScanOptions {
    pub tol: f64,
    pub guards: TrustGuards,
    pub window: Option<FitWindow>,
}

impl Default for DecayScanOptions {
    fn default() -> Self {
        Self { tol: 1e-8, guards: TrustGuards::default(), window: None }
    }
}

/// Sample `<<x>^s Lambda^r S(t) f, g>` on the grid and fit the decay law.
pub fn decay_scan(
    op: &PhaseOperator,
    f: &StateVector,
    g: &StateVector,
    times: &[f64],
    weight: &WeightSpec,
    opts: &DecayScanOptions,
    family: &str,
) -> Result<DecayReport> {
    check_times(times)?;
    let grid = *op.grid();
    let t_wrap = grid.wrap_limit(opts.guards.wrap_beta);
    let window = opts.window.unwrap_or_else(|| FitWindow::clipped(t_wrap));
    let mut pairings = Vec::with_capacity(times.len());
    let mut max_tail: f64 = 0.0;
    let mut state = f.clone();
    let mut t_prev = 0.0;
    for &t in times {
        let (next, stats) = propagate_raw(op, &state, t - t_prev, opts.tol)?;
        state = next;
        t_prev = t;
        max_tail = max_tail.max(stats.tail_mass);
        pairings.push(weighted_pair(&state, g, weight)?);
    }
    let maxwell = op.maxwell_state();
    let fm = f.inner(&maxwell)?;
    let gm = g.inner(&maxwell)?;
    let pred = predicted(grid.dim, fm, gm);
    let fit = fit_decay(grid.dim, times, &pairings, &window)?;
    let wrap_ok = times.last().is_some_and(|&t| t <= t_wrap);
    Ok(DecayReport {
        dim: grid.dim,
        potential: op.potential().spec().clone(),
        route: "full-grid".into(),
        family: family.to_string(),
        ratios: ratios(grid.dim, times, &pairings, pred),
        envelope_monotone: monotone_envelope(times, &pairings, &window),
        times: times.to_vec(),
        pairings,
        fitted_exponent: fit.exponent,
        raw_exponent: fit.raw_exponent,
        fitted_amplitude: fit.amplitude,
        predicted_amplitude: pred,
        f_moment: fm,
        g_moment: gm,
        fit_window: (fit.t_lo, fit.t_hi),
        fit_samples: fit.samples,
        box_half_width: Some(grid.box_half_width),
        wrap_limit: Some(t_wrap),
        wrap_guard_ok: wrap_ok,
        max_tail_mass: max_tail,
        tail_ok: max_tail <= opts.guards.tail_threshold,
        integrator_tol: opts.tol,
    })
}

/// Spatial profile `(a + b |x|^2) e^{-|x|^2 / (2 sigma^2)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
}

impl RadialProfile {
    pub fn gaussian(sigma: f64) -> Self {
        Self { a: 1.0, b: 0.0, sigma }
    }

    /// Profile with vanishing integral in dimension `n`.
    pub fn moment_free(n: usize, sigma: f64) -> Self {
        Self { a: -(n as f64) * sigma * sigma, b: 1.0, sigma }
    }

    pub fn eval(&self, r2: f64) -> f64 {
        (self.a + self.b * r2) * (-r2 / (2.0 * self.sigma * self.sigma)).exp()
    }

    /// Fourier transform `int F(x) e^{-i x.xi} dx` at `|xi| = rho`.
    pub fn fourier(&self, n: usize, rho: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        let gauss = (2.0 * PI * s2).powf(n as f64 / 2.0) * (-0.5 * s2 * rho * rho).exp();
        gauss * (self.a + self.b * (n as f64 * s2 - s2 * s2 * rho * rho))
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.a.is_finite() || !self.b.is_finite() {
            return Err(invalid(format!("radial profile needs sigma > 0 and finite coefficients, got {self:?}")));
        }
        Ok(())
    }
}

/// Rotation-invariant velocity profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VelocityProfile {
    /// `phi_0(v_1) ... phi_0(v_n)`, the free Maxwellian.
    Maxwellian,
    /// `(|v|^2 - n) phi_0^{(n)} / sqrt(2n)`, orthogonal to the Maxwellian.
    EnergyMoment,
}

impl VelocityProfile {
    /// Components as (axis-1 vector, number of transverse quanta).
    /// With `xi` along axis 1 the transverse axes only see `N`.
    pub(crate) fn components(&self, n: usize, trunc: usize) -> Vec<(CVector, usize)> {
        match self {
            VelocityProfile::Maxwellian => {
                let mut c = CVector::zeros(trunc);
                c[0] = Complex64::new(1.0, 0.0);
                vec![(c, 0)]
            }
            VelocityProfile::EnergyMoment => {
                // v_j^2 phi_0 = phi_0 + sqrt(2) phi_2 on axis j
                let norm = 1.0 / (2.0 * n as f64).sqrt();
                let mut axial = CVector::zeros(trunc);
                axial[2] = Complex64::new(2f64.sqrt() * norm, 0.0);
                let mut out = vec![(axial, 0)];
                for _ in 1..n {
                    let mut c = CVector::zeros(trunc);
                    c[0] = Complex64::new(2f64.sqrt() * norm, 0.0);
                    // one transverse axis in state 2: two quanta, distinct axes are orthogonal
                    out.push((c, 2));
                }
                out
            }
        }
    }

    fn maxwell_component(&self) -> f64 {
        match self {
            VelocityProfile::Maxwellian => 1.0,
            VelocityProfile::EnergyMoment => 0.0,
        }
    }
}

/// Separable datum: radial spatial profile times velocity profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparableProfile {
    pub radial: RadialProfile,
    pub velocity: VelocityProfile,
}

impl SeparableProfile {
    pub fn gaussian_maxwellian(sigma: f64) -> Self {
        Self { radial: RadialProfile::gaussian(sigma), velocity: VelocityProfile::Maxwellian }
    }

    /// `<f, M0>`.
    pub fn maxwell_moment(&self, n: usize) -> f64 {
        self.radial.fourier(n, 0.0) * self.velocity.maxwell_component()
    }
}

/// Options for [`free_decay_radial`].
#[derive(Debug, Clone, Copy)]
pub struct RadialOptions {
    pub trunc: usize,
    pub rel_tol: f64,
    pub max_panels: usize,
    pub window: FitWindow,
    pub tail_threshold: f64,
}

impl Default for RadialOptions {
    fn default() -> Self {
        Self {
            trunc: RADIAL_TRUNCATION,
            rel_tol: 1e-9,
            max_panels: 4096,
            window: FitWindow::default(),
            tail_threshold: DEFAULT_TAIL_THRESHOLD,
        }
    }
}

/// `t - 1 + e^{-t}`, the exponent rate of the free fiber Maxwellian pairing.
fn free_rate(t: f64) -> f64 {
    t + (-t).exp_m1()
}

/// Raw pairings `<S0(t) f, g>` by radial quadrature over `|xi|`; returns the
/// pairings, the quadrature error and the largest relative Hermite tail.
pub fn free_pairings_radial(
    n: usize,
    f: &SeparableProfile,
    g: &SeparableProfile,
    times: &[f64],
    opts: &RadialOptions,
) -> Result<(Vec<Complex64>, f64, f64)> {
    if n == 0 {
        return Err(invalid("dimension must be >= 1"));
    }
    if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) || times.is_empty() {
        return Err(invalid("times must be finite and nonnegative"));
    }
    f.radial.validate()?;
    g.radial.validate()?;
    if opts.trunc < 4 {
        return Err(invalid(format!("radial truncation must be >= 4, got {}", opts.trunc)));
    }
    let trunc = opts.trunc;
    let fc = f.velocity.components(n, trunc);
    let gc = g.velocity.components(n, trunc);
    let sphere = 2.0 * PI.powf(n as f64 / 2.0) / gamma_half(n as i64)?;
    let norm = sphere / (2.0 * PI).powi(n as i32);
    let t_min = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let width = 0.5 * (f.radial.sigma.powi(2) + g.radial.sigma.powi(2));
    let pairing_at = |t: f64| -> Result<(Complex64, f64)> {
        // each time gets its own radial cutoff where the integrand is below e^{-40}
        let rho_max = (40.0 / (free_rate(t) + width)).sqrt();
        let integrand = |rho: f64| -> Vec<Complex64> {
            let weight = norm * rho.powi(n as i32 - 1) * f.radial.fourier(n, rho) * g.radial.fourier(n, rho);
            if weight == 0.0 {
                return vec![Complex64::new(0.0, 0.0)];
            }
            let e = (axis_matrix(rho, trunc) * Complex64::new(-t, 0.0)).exp();
            let mut s = Complex64::new(0.0, 0.0);
            for ((cf, qf), (cg, _)) in fc.iter().zip(&gc) {
                s += cg.dotc(&(&e * cf)) * (-t * *qf as f64).exp();
            }
            vec![s * weight]
        };
        let (v, err) = integrate_vec(integrand, 0.0, rho_max, 1e-300, opts.rel_tol, opts.max_panels)?;
        Ok((v[0], err))
    };
    let results = par::map_range(times.len(), |i| pairing_at(times[i]));
    let mut vals = Vec::with_capacity(times.len());
    let mut err: f64 = 0.0;
    for r in results {
        let (v, e) = r?;
        vals.push(v);
        err = err.max(e);
    }
    // truncation monitor where the data weight has fallen to ~1e-8
    let rho_star = (18.4 / (free_rate(t_min) + width)).sqrt();
    let a = axis_matrix(rho_star, trunc);
    let start = trunc - trunc.div_ceil(10);
    let mut tail: f64 = 0.0;
    for &t in times {
        let e = (&a * Complex64::new(-t, 0.0)).exp();
        for (cf, _) in &fc {
            let w = &e * cf;
            let total = w.norm_squared();
            if total > 0.0 {
                let tm: f64 = w.iter().skip(start).map(|z| z.norm_sqr()).sum();
                tail = tail.max(tm / total);
            }
        }
    }
    Ok((vals, err, tail))
}

/// Free decay for separable radial data in any dimension, without a
/// `2n`-dimensional grid: `<S0(t)f, g> = int <e^{-t P0(xi)} f(xi), g(xi)> dxi`
/// reduces to one radial quadrature because the data are rotation invariant.
pub fn free_decay_radial(
    n: usize,
    f: &SeparableProfile,
    g: &SeparableProfile,
    times: &[f64],
    opts: &RadialOptions,
) -> Result<DecayReport> {
    check_times(times)?;
    let (pairings, _err, tail) = free_pairings_radial(n, f, g, times, opts)?;
    let fm = Complex64::new(f.maxwell_moment(n), 0.0);
    let gm = Complex64::new(g.maxwell_moment(n), 0.0);
    let pred = predicted(n, fm, gm);
    let fit = fit_decay(n, times, &pairings, &opts.window)?;
    Ok(DecayReport {
        dim: n,
        potential: PotentialSpec::zero(n),
        route: "fiber".into(),
        family: format!("{f:?} / {g:?}"),
        ratios: ratios(n, times, &pairings, pred),
        envelope_monotone: monotone_envelope(times, &pairings, &opts.window),
        times: times.to_vec(),
        pairings,
        fitted_exponent: fit.exponent,
        raw_exponent: fit.raw_exponent,
        fitted_amplitude: fit.amplitude,
        predicted_amplitude: pred,
        f_moment: fm,
        g_moment: gm,
        fit_window: (fit.t_lo, fit.t_hi),
        fit_samples: fit.samples,
        box_half_width: None,
        wrap_limit: None,
        wrap_guard_ok: true,
        max_tail_mass: tail,
        tail_ok: tail <= opts.tail_threshold,
        integrator_tol: opts.rel_tol,
    })
}

/// Closed form of `<S0(t) f, g>` for two unit-width Gaussian Maxwellian data:
/// `(pi / (t + e^{-t}))^{n/2}`.
pub fn gaussian_free_pairing(n: usize, t: f64) -> f64 {
    (PI / (t + (-t).exp())).powf(n as f64 / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{random_smooth_state, PhaseGrid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn gaussian_state(grid: &PhaseGrid, center: f64, sigma: f64) -> StateVector {
        StateVector::separable(
            grid,
            |x| c((-(x[0] - center).powi(2) / (2.0 * sigma * sigma)).exp(), 0.0),
            &[(vec![0], c(1.0, 0.0))],
        )
        .unwrap()
    }

    #[test]
    fn maxwell_is_invariant() {
        let g = PhaseGrid::new(1, 5.0, 1024, 8).unwrap();
        let op = PhaseOperator::new(&g, &PotentialSpec::compact_bump(1, 0.8, 3.0)).unwrap();
        let m = op.maxwell_state();
        let tol = 1e-9;
        let (out, stats) = propagate(&op, &m, 1.0, tol, &TrustGuards::default()).unwrap();
        let diff = out.axpy(c(-1.0, 0.0), &m).unwrap().norm() / m.norm();
        assert!(diff <= 10.0 * tol, "{diff}");
        assert!(stats.norm_ratio <= 1.0 + 10.0 * tol);
    }

    #[test]
    fn semigroup_law_and_contraction() {
        let g = PhaseGrid::new(1, 8.0, 64, 8).unwrap();
        let op = PhaseOperator::new(&g, &PotentialSpec::polynomial_decay(1, 0.5, 3.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tol = 1e-10;
        for _ in 0..3 {
            let u = random_smooth_state(&g, &mut rng).unwrap();
            let guards = TrustGuards { tail_threshold: 1.0, ..Default::default() };
            let (one, s1) = propagate(&op, &u, 1.0, tol, &guards).unwrap();
            let (half, _) = propagate(&op, &u, 0.5, tol, &guards).unwrap();
            let (two, _) = propagate(&op, &half, 0.5, tol, &guards).unwrap();
            let d = one.axpy(c(-1.0, 0.0), &two).unwrap().norm() / u.norm();
            assert!(d <= 10.0 * tol, "{d}");
            assert!(s1.norm_ratio <= 1.0 + 10.0 * tol);
        }
    }

    #[test]
    fn krylov_matches_fiber_factorization() {
        let g = PhaseGrid::new(1, 6.0, 32, 10).unwrap();
        let op = PhaseOperator::new(&g, &PotentialSpec::zero(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = random_smooth_state(&g, &mut rng).unwrap();
        let guards = TrustGuards { tail_threshold: 1.0, ..Default::default() };
        let (k, _) = propagate(&op, &u, 1.5, 1e-11, &guards).unwrap();
        let e = propagate_free_fibers(&op, &u, 1.5).unwrap();
        let d = k.axpy(c(-1.0, 0.0), &e).unwrap().norm() / u.norm();
        assert!(d <= 1e-8, "{d}");
    }

    #[test]
    fn halving_tolerance_is_stable() {
        let g = PhaseGrid::new(1, 8.0, 64, 8).unwrap();
        let op = PhaseOperator::new(&g, &PotentialSpec::polynomial_decay(1, 0.3, 6.0)).unwrap();
        let f = gaussian_state(&g, 0.0, 1.0);
        let guards = TrustGuards { tail_threshold: 1.0, ..Default::default() };
        for tol in [1e-6, 1e-8] {
            let (a, _) = propagate(&op, &f, 3.0, tol, &guards).unwrap();
            let (b, _) = propagate(&op, &f, 3.0, tol / 2.0, &guards).unwrap();
            let pa = a.inner(&f).unwrap();
            let pb = b.inner(&f).unwrap();
            assert!((pa - pb).norm() < tol * f.norm().powi(2), "{pa} {pb}");
        }
    }

    #[test]
    fn guards_trip() {
        let g = PhaseGrid::new(1, 4.0, 16, 4).unwrap();
        let op = PhaseOperator::new(&g, &PotentialSpec::zero(1)).unwrap();
        let m = op.maxwell_state();
        let err = propagate(&op, &m, 2.0, 1e-8, &TrustGuards::default()).unwrap_err();
        assert!(matches!(err, Error::WrapGuard { .. }));
        let tail = StateVector::separable(&g, |_| c(1.0, 0.0), &[(vec![3], c(1.0, 0.0))]).unwrap();
        let err = propagate(&op, &tail, 0.01, 1e-8, &TrustGuards::default()).unwrap_err();
        assert!(matches!(err, Error::HermiteTail { .. }));
    }

    #[test]
    fn fit_recovers_synthetic_law() {
        let times = log_times(20.0, 100.0, 16).unwrap();
        let p: Vec<Complex64> = times.iter().map(|t| c(0.7, 0.2) * t.powf(-1.5) * (1.0 + 0.8 / t)).collect();
        let fit = fit_decay(3, &times, &p, &FitWindow::default()).unwrap();
        assert!((fit.exponent + 1.5).abs() < 1e-3, "{}", fit.exponent);
        assert!((fit.amplitude - c(0.7, 0.2)).norm() < 1e-12);
    }

    #[test]
    fn fit_window_errors() {
        let times = log_times(20.0, 40.0, 16).unwrap();
        let p: Vec<Complex64> = times.iter().map(|t| c(t.powf(-0.5), 0.0)).collect();
        assert!(matches!(fit_decay(1, &times, &p, &FitWindow::default()), Err(Error::FitWindow(_))));
        let times = log_times(20.0, 100.0, 6).unwrap();
        let p: Vec<Complex64> = times.iter().map(|t| c(t.powf(-0.5), 0.0)).collect();
        assert!(matches!(fit_decay(1, &times, &p, &FitWindow::default()), Err(Error::FitWindow(_))));
    }

    #[test]
    fn radial_fourier_transform_matches_quadrature() {
        // one-dimensional check of the closed-form transform
        let prof = RadialProfile { a: 0.3, b: -0.7, sigma: 1.3 };
        let xi: f64 = 0.9;
        let h = 1e-3;
        let mut s = 0.0;
        let mut x = -20.0;
        while x <= 20.0 {
            s += prof.eval(x * x) * (xi * x).cos() * h;
            x += h;
        }
        assert!((s - prof.fourier(1, xi)).abs() < 1e-9, "{s} vs {}", prof.fourier(1, xi));
        let mf = RadialProfile::moment_free(3, 1.2);
        assert!(mf.fourier(3, 0.0).abs() < 1e-14 * mf.fourier(3, 1.0).abs());
    }

    #[test]
    fn radial_route_matches_closed_form() {
        let f = SeparableProfile::gaussian_maxwellian(1.0);
        for times in [vec![0.5, 2.0], vec![20.0, 200.0]] {
            for n in [1, 3, 4, 5] {
                let (p, _, tail) = free_pairings_radial(n, &f, &f, &times, &RadialOptions::default()).unwrap();
                for (t, v) in times.iter().zip(&p) {
                    let exact = gaussian_free_pairing(n, *t);
                    assert!((v.re / exact - 1.0).abs() < 1e-8, "n={n} t={t}: {} vs {exact}", v.re);
                    assert!(v.im.abs() < 1e-10 * exact);
                }
                // short times reach |xi| where J = 32 no longer holds the shifted Gaussian
                if times[0] >= 20.0 {
                    assert!(tail < 1e-6, "{tail}");
                } else {
                    assert!(tail > 1e-6);
                }
            }
        }
    }

    #[test]
    fn radial_route_small_time_limit() {
        // S0(0) = 1, so the pairing tends to <f,g> = (pi sigma^2)^{n/2}
        let f = SeparableProfile::gaussian_maxwellian(1.0);
        let (p, _, _) = free_pairings_radial(3, &f, &f, &[1e-6], &RadialOptions::default()).unwrap();
        let inner = PI.powf(1.5);
        assert!((p[0].re / inner - 1.0).abs() < 1e-5);
    }

    #[test]
    fn free_scaling_exponents() {
        let f = SeparableProfile::gaussian_maxwellian(1.0);
        let times = log_times(20.0, 100.0, 12).unwrap();
        for n in [1, 3, 4, 5] {
            let rep = free_decay_radial(n, &f, &f, &times, &RadialOptions::default()).unwrap();
            assert!((rep.fitted_exponent + n as f64 / 2.0).abs() < 0.03, "n={n}: {}", rep.fitted_exponent);
            assert!(rep.envelope_monotone);
            for r in &rep.ratios {
                assert!((r.re - 1.0).abs() < 0.02);
            }
        }
    }

    #[test]
    fn moment_free_data_decay_faster() {
        let f = SeparableProfile::gaussian_maxwellian(1.0);
        let times = log_times(20.0, 100.0, 12).unwrap();
        for (n, h) in [
            (3, SeparableProfile { radial: RadialProfile::moment_free(3, 1.0), velocity: VelocityProfile::Maxwellian }),
            (4, SeparableProfile { radial: RadialProfile::gaussian(1.0), velocity: VelocityProfile::EnergyMoment }),
        ] {
            let rep = free_decay_radial(n, &h, &h, &times, &RadialOptions::default()).unwrap();
            assert!(rep.fitted_exponent <= -(n as f64) / 2.0 - 0.25, "n={n}: {}", rep.fitted_exponent);
            let base = free_decay_radial(n, &f, &f, &times, &RadialOptions::default()).unwrap();
            assert!(rep.fitted_exponent < base.fitted_exponent);
        }
    }

    #[test]
    fn energy_profile_is_normalized() {
        // at t = 0 the pairing of the energy profile with itself is ||F||^2
        let h = SeparableProfile { radial: RadialProfile::gaussian(1.0), velocity: VelocityProfile::EnergyMoment };
        let (p, _, _) = free_pairings_radial(2, &h, &h, &[0.0], &RadialOptions::default()).unwrap();
        assert!((p[0].re / PI - 1.0).abs() < 1e-8, "{}", p[0]);
    }
}
