//! Three interactive operations for the static page in `www/`.
//!
//! Each export returns flat `f64` arrays (or a JSON string) so the page can
//! draw without any glue beyond the generated bindings.

use kfp_core::evolve::{free_decay_radial, log_times, FitWindow, RadialOptions, SeparableProfile};
use kfp_core::fiber::{assemble_fiber, fiber_spectrum as spectrum};
use kfp_core::green::{expand_green, lambda_grid, Term};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn js(e: kfp_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// `[re, im, predicted, trusted]` per eigenvalue of the one-dimensional fiber.
pub fn fiber_rows(xi: f64, trunc: usize, count: usize) -> kfp_core::Result<Vec<f64>> {
    let op = assemble_fiber(1, &[xi], trunc)?;
    let ev = spectrum(&op, count)?;
    Ok(ev
        .iter()
        .flat_map(|e| [e.value.re, e.value.im, e.level as f64 + xi * xi, if e.trusted { 1.0 } else { 0.0 }])
        .collect())
}

fn label(t: &Term) -> String {
    match t {
        Term::HalfPower(k) => format!("a{k}"),
        Term::Regular(k) => format!("d{k}"),
        Term::Log(k) => format!("c{k}"),
    }
}

/// Green-kernel coefficient fit as a JSON document.
pub fn green_json(dim: usize, r: f64, lambda_min: f64, lambda_max: f64) -> kfp_core::Result<String> {
    let grid = lambda_grid(lambda_min, lambda_max, 24)?;
    let fit = expand_green(dim, r, &grid)?;
    let (lead, reference) = fit.leading_reference()?;
    let measured = fit.get(lead).unwrap_or_default();
    let coeffs: Vec<_> = fit.coeffs.iter().map(|c| json!([label(&c.term), c.value.re, c.value.im])).collect();
    Ok(json!({
        "dim": dim,
        "coefficients": coeffs,
        "leading": {
            "term": label(&lead),
            "reference": [reference.re, reference.im],
            "measured": [measured.re, measured.im],
            "relative_error": fit.leading_relative_error()?,
        },
        "condition": fit.condition,
        "residual": fit.residual,
    })
    .to_string())
}

/// `[t, |pairing|, |prediction|, Re ratio]` for Gaussian Maxwellian data.
pub fn decay_rows(dim: usize, t_min: f64, t_max: f64, samples: usize) -> kfp_core::Result<Vec<f64>> {
    let times = log_times(t_min, t_max, samples)?;
    let data = SeparableProfile::gaussian_maxwellian(1.0);
    let opts =
        RadialOptions { window: FitWindow { t_lo: t_min, t_hi: t_max, min_samples: samples }, ..Default::default() };
    let rep = free_decay_radial(dim, &data, &data, &times, &opts)?;
    let half = dim as f64 / 2.0;
    Ok(times
        .iter()
        .zip(&rep.pairings)
        .zip(&rep.ratios)
        .flat_map(|((&t, p), q)| [t, p.norm(), rep.predicted_amplitude.norm() * t.powf(-half), q.re])
        .collect())
}

#[wasm_bindgen]
pub fn fiber_spectrum(xi: f64, trunc: usize, count: usize) -> Result<Vec<f64>, JsError> {
    fiber_rows(xi, trunc, count).map_err(js)
}

#[wasm_bindgen]
pub fn green_coefficients(dim: usize, r: f64, lambda_min: f64, lambda_max: f64) -> Result<String, JsError> {
    green_json(dim, r, lambda_min, lambda_max).map_err(js)
}

#[wasm_bindgen]
pub fn free_decay(dim: usize, t_min: f64, t_max: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    decay_rows(dim, t_min, t_max, samples).map_err(js)
}

#[wasm_bindgen]
pub fn core_version() -> String {
    kfp_core::VERSION.to_string()
}
