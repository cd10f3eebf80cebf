use std::f64::consts::PI;

use kfp_core::acceptance::{run_suite, ALL, QUICK};
use kfp_core::constants::{heat_kernel_constant, KfpConstants};
use kfp_core::evolve::{
    decay_scan, free_decay_radial, log_times, propagate, DecayReport, DecayScanOptions, FitWindow, RadialOptions,
    RadialProfile, SeparableProfile, TrustGuards, VelocityProfile,
};
use kfp_core::fiber::{assemble_fiber, fiber_spectrum, riesz_certificate};
use kfp_core::green::{expand_green, expand_green_even_with, expand_green_odd_with, lambda_grid, Term};
use kfp_core::phase_space::{
    make_potential, random_smooth_state, read_checkpoint, write_checkpoint, PhaseGrid, PhaseOperator, PotentialFamily,
    PotentialSpec, StateVector, WeightSpec,
};
use kfp_core::resolvent::{
    branch_check, default_low_energy_grid, fit_low_energy_fiber, fit_low_energy_grid, high_energy_scan,
    lap_continuation, log_grid, LowEnergyModel, RadialResolventOptions, ResolventFit, BRANCH_CONVENTION,
};
use kfp_core::Complex64;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::report::{num, opt, to_value, Artifact, Comparison, Plot, Table};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Parse `a..b`, `a..=b` (both inclusive) or a single dimension.
pub fn parse_dim_range(s: &str) -> CliResult<Vec<usize>> {
    let bad = || config(format!("dim-range `{s}` is not of the form a..b"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a.trim(), b.trim().trim_start_matches('=')),
        None => (s.trim(), s.trim()),
    };
    let a: usize = a.parse().map_err(|_| bad())?;
    let b: usize = b.parse().map_err(|_| bad())?;
    if a == 0 || b < a {
        return Err(config(format!("dim-range `{s}` must satisfy 1 <= a <= b")));
    }
    Ok((a..=b).collect())
}

fn grid_value(g: &PhaseGrid) -> Value {
    json!({ "dim": g.dim, "box_half_width": g.box_half_width, "nx": g.nx, "nv": g.nv })
}

fn build_grid(dim: usize, a: &GridArgs, defaults: (f64, usize, usize)) -> CliResult<PhaseGrid> {
    Ok(PhaseGrid::new(
        dim,
        a.box_half_width.unwrap_or(defaults.0),
        a.nx.unwrap_or(defaults.1),
        a.nv.unwrap_or(defaults.2),
    )?)
}

fn build_potential(dim: usize, a: &PotentialArgs, default_family: &str) -> CliResult<PotentialSpec> {
    let name = a.potential.as_deref().unwrap_or(default_family);
    let family: PotentialFamily = serde_json::from_value(json!(name))
        .map_err(|_| config(format!("unknown potential `{name}`; expected zero, polynomial-decay or compact-bump")))?;
    let spec = PotentialSpec {
        family,
        amplitude: a.amplitude.unwrap_or(0.3),
        decay_rho: a.rho.unwrap_or(6.0),
        center: vec![0.0; dim],
        radius: a.radius.unwrap_or(1.0),
    };
    make_potential(&spec, dim)?;
    Ok(spec)
}

fn build_data(grid: &PhaseGrid, a: &DataArgs) -> CliResult<StateVector> {
    let sigma = a.sigma.unwrap_or(1.0);
    if !(sigma > 0.0) {
        return Err(config(format!("sigma must be positive, got {sigma}")));
    }
    let mode = [(vec![0; grid.dim], c(1.0, 0.0))];
    let gaussian = |x: &[f64]| (-x.iter().map(|v| v * v).sum::<f64>() / (2.0 * sigma * sigma)).exp();
    match a.data.as_deref().unwrap_or("gaussian") {
        "gaussian" => Ok(StateVector::separable(grid, |x| c(gaussian(x), 0.0), &mode)?),
        "odd-gaussian" => Ok(StateVector::separable(grid, |x| c(x[0] * gaussian(x), 0.0), &mode)?),
        "random" => Ok(random_smooth_state(grid, &mut ChaCha8Rng::seed_from_u64(a.seed.unwrap_or(0)))?),
        other => Err(config(format!("unknown data family `{other}`; expected gaussian, odd-gaussian or random"))),
    }
}

/// Fit window from the flags, defaulting to the whole sampled interval.
fn fit_window(times: &[f64], t: &TimeArgs) -> FitWindow {
    let lo = t.fit_lo.unwrap_or(times[0]);
    let hi = t.fit_hi.unwrap_or(times[times.len() - 1]);
    let inside = times.iter().filter(|&&s| s >= lo && s <= hi).count();
    FitWindow { t_lo: lo, t_hi: hi, min_samples: inside.max(3) }
}

pub fn constants(a: &ConstantsArgs) -> CliResult<Artifact> {
    let dims = parse_dim_range(a.dim_range.as_deref().unwrap_or("3..12"))?;
    let mut art = Artifact::new("constants", a)?;
    let mut t =
        Table::new(&["dim", "a_re", "a_im", "c_log", "b_re", "b_im", "e_time", "heat_product", "identity_residual"]);
    let mut all = Vec::new();
    for n in dims {
        let k = KfpConstants::new(n)?;
        let res = k.identity_residual();
        t.push(vec![
            n.to_string(),
            opt(k.a_leading.map(|z| z.re)),
            opt(k.a_leading.map(|z| z.im)),
            opt(k.c_log),
            opt(k.b_time.map(|z| z.re)),
            opt(k.b_time.map(|z| z.im)),
            opt(k.e_time),
            num(k.heat_product),
            num(res),
        ]);
        art.comparisons.push(Comparison::real(format!("n={n} heat product"), heat_kernel_constant(n), k.heat_product));
        all.push(json!({ "constants": to_value(&k)?, "identity_residual": res }));
    }
    art.result = json!(all);
    art.table = Some(t);
    Ok(art)
}

pub fn fiber(a: &FiberSpectrumArgs) -> CliResult<Artifact> {
    let dim = a.dim.unwrap_or(1);
    let xis = a.xi.clone().unwrap_or_else(|| vec![0.0, 0.5, 1.0, 1.5]);
    let trunc = a.trunc.unwrap_or(if dim == 1 { 64 } else { 8 });
    let count = a.count.unwrap_or(6);
    let mut art = Artifact::new("fiber-spectrum", a)?;
    let mut t = Table::new(&["xi", "index", "re", "im", "level", "predicted", "residual", "trusted"]);
    let mut per_xi = Vec::new();
    let mut untrusted = Vec::new();
    for &r in &xis {
        let mut xi = vec![0.0; dim];
        xi[0] = r;
        let op = assemble_fiber(dim, &xi, trunc)?;
        let spec = fiber_spectrum(&op, count)?;
        for (i, e) in spec.iter().enumerate() {
            let pred = e.level as f64 + r * r;
            t.push(vec![
                num(r),
                i.to_string(),
                num(e.value.re),
                num(e.value.im),
                e.level.to_string(),
                num(pred),
                num(e.residual),
                e.trusted.to_string(),
            ]);
            if !e.trusted {
                untrusted.push(format!("xi={r} level {}", e.level));
            }
        }
        let max_res = spec.iter().map(|e| e.residual).fold(0.0, f64::max);
        art.comparisons.push(Comparison::real(format!("xi={r} lowest eigenvalue"), r * r, spec[0].value.re));
        let certificate = if dim == 1 {
            let top = spec.iter().filter(|e| e.trusted).map(|e| e.level).max().unwrap_or(0).min(3);
            Some(riesz_certificate(r, trunc, top)?)
        } else {
            None
        };
        per_xi.push(json!({ "xi": r, "eigenvalues": to_value(&spec)?, "max_residual": max_res, "riesz_certificate": to_value(&certificate)? }));
    }
    art.guard(
        "hermite-tail",
        untrusted.is_empty(),
        if untrusted.is_empty() {
            "all reported levels lie in the trusted part of the truncated spectrum".to_string()
        } else {
            format!("levels polluted by truncation at J = {trunc}: {}", untrusted.join(", "))
        },
    );
    art.result = json!({ "dim": dim, "trunc": trunc, "spectra": per_xi });
    art.table = Some(t);
    art.plot = Some(Plot {
        title: format!("fiber spectrum, n = {dim}, J = {trunc}"),
        x_col: 1,
        series: vec![("Re eigenvalue".into(), "$3".into()), ("l + |xi|^2".into(), "$6".into())],
        logx: false,
        logy: false,
    });
    Ok(art)
}

fn term_parts(t: &Term) -> (&'static str, usize) {
    match *t {
        Term::HalfPower(k) => ("a", k),
        Term::Regular(k) => ("d", k),
        Term::Log(k) => ("c", k),
    }
}

pub fn green(a: &GreenCoeffsArgs) -> CliResult<Artifact> {
    let n = a.dim.unwrap_or(5);
    let r = a.r.unwrap_or(1.0);
    let grid = lambda_grid(a.lambda_min.unwrap_or(1e-6), a.lambda_max.unwrap_or(1e-2), a.samples.unwrap_or(24))?;
    let fit = match a.extra_terms {
        None => expand_green(n, r, &grid)?,
        Some(e) if n % 2 == 1 => expand_green_odd_with(n, r, &grid, e)?,
        Some(e) => expand_green_even_with(n, r, &grid, e)?,
    };
    let (lead, reference) = fit.leading_reference()?;
    let lead_err = fit.leading_relative_error()?;
    let mut art = Artifact::new("green-coeffs", a)?;
    let mut t = Table::new(&["term", "k", "re", "im", "reference_re", "reference_im", "relative_error"]);
    for ft in &fit.coeffs {
        let (name, k) = term_parts(&ft.term);
        let is_lead = ft.term == lead;
        t.push(vec![
            name.into(),
            k.to_string(),
            num(ft.value.re),
            num(ft.value.im),
            if is_lead { num(reference.re) } else { String::new() },
            if is_lead { num(reference.im) } else { String::new() },
            if is_lead { num(lead_err) } else { String::new() },
        ]);
    }
    let (name, k) = term_parts(&lead);
    art.comparisons.push(Comparison::complex(
        format!("{name}_{{{n},{k}}}"),
        reference,
        fit.get(lead).unwrap_or(c(f64::NAN, 0.0)),
    ));
    art.result = json!({
        "dim": n,
        "parity": fit.parity,
        "coefficients": to_value(&fit.coeffs)?,
        "references": [{ "term": to_value(&lead)?, "value": [reference.re, reference.im] }],
        "relative_errors": [{ "term": to_value(&lead)?, "value": lead_err }],
        "condition": fit.condition,
        "residual": fit.residual,
        "r_probe": fit.r_probe,
        "fit_window": fit.fit_window,
        "samples": fit.samples,
    });
    art.table = Some(t);
    Ok(art)
}

fn decay_table(rep: &DecayReport) -> Table {
    let mut t =
        Table::new(&["t", "pairing_re", "pairing_im", "prediction_re", "prediction_im", "ratio_re", "ratio_im"]);
    let half = rep.dim as f64 / 2.0;
    for ((&s, p), q) in rep.times.iter().zip(&rep.pairings).zip(&rep.ratios) {
        let pred = rep.predicted_amplitude * s.powf(-half);
        t.push(vec![num(s), num(p.re), num(p.im), num(pred.re), num(pred.im), num(q.re), num(q.im)]);
    }
    t
}

fn decay_plot(title: &str) -> Plot {
    Plot {
        title: title.into(),
        x_col: 1,
        series: vec![
            ("|pairing|".into(), "sqrt($2**2+$3**2)".into()),
            ("|prediction|".into(), "sqrt($4**2+$5**2)".into()),
        ],
        logx: true,
        logy: true,
    }
}

fn decay_comparisons(art: &mut Artifact, rep: &DecayReport) {
    art.comparisons.push(Comparison::real("decay exponent", -(rep.dim as f64) / 2.0, rep.fitted_exponent));
    art.comparisons.push(Comparison::complex("leading amplitude", rep.predicted_amplitude, rep.fitted_amplitude));
}

fn tail_guard(art: &mut Artifact, mass: f64, threshold: f64) {
    art.guard("hermite-tail", mass <= threshold, format!("max Hermite tail mass {mass:e}, threshold {threshold:e}"));
}

pub fn free_decay(a: &FreeDecayArgs) -> CliResult<Artifact> {
    let n = a.dim.unwrap_or(4);
    let times = log_times(a.time.t_min.unwrap_or(10.0), a.time.t_max.unwrap_or(200.0), a.time.samples.unwrap_or(16))?;
    let velocity = match a.f_velocity.as_deref().unwrap_or("maxwellian") {
        "maxwellian" => VelocityProfile::Maxwellian,
        "energy-moment" => VelocityProfile::EnergyMoment,
        other => {
            return Err(config(format!("unknown velocity profile `{other}`; expected maxwellian or energy-moment")))
        }
    };
    let sf = a.sigma_f.unwrap_or(1.0);
    let radial = if a.moment_free { RadialProfile::moment_free(n, sf) } else { RadialProfile::gaussian(sf) };
    let f = SeparableProfile { radial, velocity };
    let g = SeparableProfile::gaussian_maxwellian(a.sigma_g.unwrap_or(1.0));
    let defaults = RadialOptions::default();
    let window = fit_window(&times, &a.time);
    let opts = RadialOptions {
        trunc: a.trunc.unwrap_or(defaults.trunc),
        rel_tol: a.rel_tol.unwrap_or(defaults.rel_tol),
        window,
        tail_threshold: a.tail_threshold.unwrap_or(defaults.tail_threshold),
        ..defaults
    };
    let rep = free_decay_radial(n, &f, &g, &times, &opts)?;
    let mut art = Artifact::new("free-decay", a)?;
    tail_guard(&mut art, rep.max_tail_mass, opts.tail_threshold);
    decay_comparisons(&mut art, &rep);
    art.table = Some(decay_table(&rep));
    art.plot = Some(decay_plot(&format!("free decay, n = {n}")));
    art.result = to_value(&rep)?;
    Ok(art)
}

pub fn evolve(a: &EvolveArgs) -> CliResult<Artifact> {
    let dim = a.dim.unwrap_or(1);
    let grid = build_grid(dim, &a.grid, (48.0, 1024, 16))?;
    let spec = build_potential(dim, &a.potential, "polynomial-decay")?;
    let op = PhaseOperator::new(&grid, &spec)?;
    let times = log_times(a.time.t_min.unwrap_or(20.0), a.time.t_max.unwrap_or(100.0), a.time.samples.unwrap_or(12))?;
    let guards = TrustGuards {
        wrap_beta: a.wrap_beta.unwrap_or(TrustGuards::default().wrap_beta),
        tail_threshold: a.tail_threshold.unwrap_or(TrustGuards::default().tail_threshold),
    };
    let opts = DecayScanOptions { tol: a.tol.unwrap_or(1e-8), guards, window: Some(fit_window(&times, &a.time)) };
    let weight = WeightSpec::new(a.weight_r.unwrap_or(0.0), a.weight_s.unwrap_or(0.0))?;
    let data = build_data(&grid, &a.data)?;
    let f = match &a.initial {
        Some(path) => {
            let s = read_checkpoint(path).map_err(|e| match e {
                kfp_core::Error::Io(io) => config(format!("cannot read checkpoint {}: {io}", path.display())),
                other => other.into(),
            })?;
            if s.grid != grid {
                return Err(config(format!("checkpoint {} holds a state on a different grid", path.display())));
            }
            s
        }
        None => data.clone(),
    };
    let family = a.data.data.as_deref().unwrap_or("gaussian");
    let rep = decay_scan(&op, &f, &data, &times, &weight, &opts, family)?;
    let mut art = Artifact::new("evolve", a)?;
    art.grid = grid_value(&grid);
    let t_max = times[times.len() - 1];
    art.guard(
        "wrap-around",
        rep.wrap_guard_ok,
        format!("t_max = {t_max} against beta L^2 = {}", rep.wrap_limit.unwrap_or(f64::NAN)),
    );
    tail_guard(&mut art, rep.max_tail_mass, guards.tail_threshold);
    decay_comparisons(&mut art, &rep);
    if let Some(path) = &a.checkpoint {
        if rep.trusted() {
            let (state, _) = propagate(&op, &f, t_max, opts.tol, &guards)?;
            write_checkpoint(path, &state)?;
        }
    }
    art.table = Some(decay_table(&rep));
    art.plot = Some(decay_plot(&format!("decay on the grid, n = {dim}")));
    art.result = to_value(&rep)?;
    Ok(art)
}

fn resolvent_comparisons(art: &mut Artifact, fit: &ResolventFit, free: bool) {
    if free {
        art.comparisons.push(Comparison::complex("special coefficient", fit.predicted_special, fit.leading_special));
    }
}

pub fn resolvent_fit(a: &ResolventFitArgs) -> CliResult<Artifact> {
    let n = a.dim.unwrap_or(4);
    let spec = build_potential(n, &a.potential, "zero")?;
    let route = match a.route.as_deref().unwrap_or("auto") {
        "auto" if spec.is_zero() => "fiber",
        "auto" => "grid",
        r @ ("fiber" | "grid") => r,
        other => return Err(config(format!("unknown route `{other}`; expected auto, fiber or grid"))),
    };
    if route == "fiber" && !spec.is_zero() {
        return Err(config("the fiber route needs V = 0; use --route grid with a potential"));
    }
    let mut model = LowEnergyModel::new(n);
    model.extra_terms = a.extra_terms.unwrap_or(model.extra_terms);
    model.include_pole = a.pole;
    let samples = a.samples.unwrap_or(16);
    let mut art = Artifact::new("resolvent-fit", a)?;
    let mut notes = Vec::new();
    let fit = if route == "fiber" {
        if !matches!(a.data.data.as_deref(), None | Some("gaussian")) {
            return Err(config("the fiber route supports gaussian data only"));
        }
        let lams = match (a.lambda_min, a.lambda_max) {
            (None, None) if a.samples.is_none() => default_low_energy_grid(),
            (lo, hi) => lambda_grid(lo.unwrap_or(1e-4), hi.unwrap_or(5e-2), samples)?,
        };
        let sf = a.data.sigma.unwrap_or(1.0);
        let f = SeparableProfile::gaussian_maxwellian(sf);
        let g = SeparableProfile::gaussian_maxwellian(a.sigma_g.unwrap_or(sf));
        fit_low_energy_fiber(n, &f, &g, &lams, &model, &RadialResolventOptions::default())?
    } else {
        let grid = build_grid(n, &a.grid, (16.0, 256, 16))?;
        let op = PhaseOperator::new(&grid, &spec)?;
        let gap = (PI / grid.box_half_width).powi(2);
        let lams = lambda_grid(a.lambda_min.unwrap_or(1e-3 * gap), a.lambda_max.unwrap_or(1e-1 * gap), samples)?;
        let hi = lams.iter().cloned().fold(0.0, f64::max);
        art.guard(
            "torus-gap",
            hi < gap,
            format!("largest lambda {hi:e} against the first torus eigenvalue (pi/L)^2 = {gap:e}"),
        );
        if n == 2 && !spec.is_zero() {
            notes.push("n = 2 with a potential is exploratory: no closed-form threshold prediction is asserted");
        }
        art.grid = grid_value(&grid);
        let data = build_data(&grid, &a.data)?;
        fit_low_energy_grid(&op, &data, &data, &lams, &model, a.tol.unwrap_or(1e-10))?
    };
    resolvent_comparisons(&mut art, &fit, spec.is_zero());
    let branch = if model.include_pole {
        None
    } else {
        branch_check(&model, &fit.lambda_samples, &fit.pairings, fit.f_moment, fit.g_moment).ok()
    };
    let mut t = Table::new(&["lambda", "pairing_re", "pairing_im"]);
    for (l, p) in fit.lambda_samples.iter().zip(&fit.pairings) {
        t.push(vec![num(*l), num(p.re), num(p.im)]);
    }
    art.table = Some(t);
    art.plot = Some(Plot {
        title: format!("<R(-lambda) f, g>, n = {n}"),
        x_col: 1,
        series: vec![("Re".into(), "$2".into()), ("Im".into(), "$3".into())],
        logx: true,
        logy: false,
    });
    art.result = json!({
        "route": route,
        "branch_convention": BRANCH_CONVENTION,
        "potential": to_value(&spec)?,
        "fit": to_value(&fit)?,
        "branch_check": to_value(&branch)?,
        "notes": notes,
    });
    Ok(art)
}

pub fn lap_scan(a: &LapScanArgs) -> CliResult<Artifact> {
    let dim = a.dim.unwrap_or(1);
    let grid = build_grid(dim, &a.grid, (24.0, 256, 12))?;
    let spec = build_potential(dim, &a.potential, "polynomial-decay")?;
    let op = PhaseOperator::new(&grid, &spec)?;
    let f = build_data(&grid, &a.data)?;
    let eps = a.eps.clone().unwrap_or_else(|| vec![1e-2, 1e-3, 1e-4, 1e-5]);
    let weight = WeightSpec::new(a.weight_r.unwrap_or(0.0), a.weight_s.unwrap_or(-2.0))?;
    let tr = lap_continuation(&op, &f, &f, a.lambda.unwrap_or(0.3), &eps, &weight, a.tol.unwrap_or(1e-12))?;
    let mut art = Artifact::new("lap-scan", a)?;
    art.grid = grid_value(&grid);
    art.guard("self-convergence", tr.monotone, format!("Cauchy differences {:?}, rate {}", tr.cauchy, tr.rate));
    let mut t = Table::new(&["eps", "pairing_re", "pairing_im", "plain_norm", "cauchy", "iterations", "residual"]);
    for i in 0..tr.eps.len() {
        t.push(vec![
            num(tr.eps[i]),
            num(tr.pairings[i].re),
            num(tr.pairings[i].im),
            num(tr.plain_norms[i]),
            if i == 0 { String::new() } else { num(tr.cauchy[i - 1]) },
            tr.iterations[i].to_string(),
            num(tr.residuals[i]),
        ]);
    }
    art.table = Some(t);
    art.plot = Some(Plot {
        title: format!("limiting absorption at lambda = {}", tr.lambda),
        x_col: 1,
        series: vec![("Re".into(), "$2".into()), ("Im".into(), "$3".into())],
        logx: true,
        logy: false,
    });
    art.result = to_value(&tr)?;
    Ok(art)
}

pub fn high_energy(a: &HighEnergyArgs) -> CliResult<Artifact> {
    let dim = a.dim.unwrap_or(1);
    let grid = build_grid(dim, &a.grid, (6.0, 2048, 12))?;
    let spec = build_potential(dim, &a.potential, "polynomial-decay")?;
    let op = PhaseOperator::new(&grid, &spec)?;
    let f = build_data(&grid, &a.data)?;
    let ys = log_grid(a.y_min.unwrap_or(1e2), a.y_max.unwrap_or(2e3), a.samples.unwrap_or(5));
    let rep = high_energy_scan(&op, &f, &ys, a.tol.unwrap_or(1e-10))?;
    let mut art = Artifact::new("high-energy-scan", a)?;
    art.grid = grid_value(&grid);
    art.guard(
        "numerical-range",
        rep.all_resolved(),
        format!("largest y {} against the resolved imaginary extent {}", ys[ys.len() - 1], rep.resolved_limit),
    );
    art.comparisons.push(Comparison::bound("log-log slope of ||R(iy) f||, at most", -0.5, rep.slope));
    art.comparisons.push(Comparison::bound("log-log slope of the smoothing norm, at most", -0.25, rep.smoothing_slope));
    let mut t = Table::new(&["y", "norm", "smoothing_norm", "resolved", "iterations", "residual"]);
    for i in 0..rep.ys.len() {
        t.push(vec![
            num(rep.ys[i]),
            num(rep.norms[i]),
            num(rep.smoothing_norms[i]),
            rep.resolved[i].to_string(),
            rep.iterations[i].to_string(),
            num(rep.residuals[i]),
        ]);
    }
    art.table = Some(t);
    art.plot = Some(Plot {
        title: "resolvent norm along the imaginary axis".into(),
        x_col: 1,
        series: vec![("norm".into(), "$2".into()), ("smoothing".into(), "$3".into())],
        logx: true,
        logy: true,
    });
    art.result = to_value(&rep)?;
    Ok(art)
}

/// Runs the suite; the second value lists failed criteria.
pub fn acceptance(a: &AcceptanceArgs) -> CliResult<(Artifact, Vec<u8>)> {
    let ids: Vec<u8> = match (&a.only, a.quick) {
        (Some(ids), _) => ids.clone(),
        (None, true) => QUICK.to_vec(),
        (None, false) => ALL.to_vec(),
    };
    if let Some(bad) = ids.iter().find(|i| !ALL.contains(i)) {
        return Err(config(format!("no acceptance criterion {bad}; valid ids are 1..=10")));
    }
    let outcomes = run_suite(&ids);
    let mut t = Table::new(&["id", "title", "passed", "failed_checks", "runtime_limit_s"]);
    for o in &outcomes {
        println!("{}", o.line());
        let failed: Vec<&str> = o.checks.iter().filter(|ch| !ch.passed).map(|ch| ch.name.as_str()).collect();
        t.push(vec![
            o.id.to_string(),
            o.title.to_string(),
            o.passed.to_string(),
            failed.join("; "),
            num(o.runtime_limit_s),
        ]);
    }
    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    let mut art = Artifact::new("acceptance", a)?;
    art.result = json!({ "criteria": to_value(&outcomes)?, "failed": failed });
    art.table = Some(t);
    Ok((art, failed))
}
