//! Per-scenario executors behind [`super::run_scenario`].
//!
//! Builtin names select a curated study; anything else falls through to a
//! plain rate sweep. Every driver appends exactly one row per `t_list`
//! entry, converting per-point compute failures into failed rows instead
//! of aborting the sweep. Requirement problems (a study that needs packets
//! given none) surface as field-path validation errors before any row is
//! produced.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clock::{covariant_time_povm, two_level_clock, uniform_ladder_clock, ClockModel, TimePOVM};
use crate::error::{Error, Result};
use crate::evolve::{
    assemble_total_hamiltonian, dyson_first_order_clock_state, exact_flat_space_evolve,
    gravitational_limit_evolve, CompositeState, EvolutionMethod, HermitianPropagator,
};
use crate::grid::GridSpec;
use crate::hamiltonian::{
    decompose_hamiltonian, expectation_of_ordered, ExpectationMethod, HamiltonianDecomposition,
};
use crate::metric::{isotropic_time_factor, pn_metric_expansion_with_g};
use crate::observables::{
    classical_average_rate, coherent_discrimination_demo, fit_rate_factor, povm_mean_rate,
    quantum_dilation_measure, readout_distribution, universality_check,
};
use crate::ordering::{OrderedMonomial, OrderedPolynomial, OrderingKind};
use crate::states::{superpose, CMDensity, PureCMState, WavePacket};

use super::{ClockKind, PacketConfig, ResultRecord, ResultRow, RunOptions, ScenarioConfig};

pub(super) fn dispatch(
    cfg: &ScenarioConfig,
    options: &RunOptions,
    record: &mut ResultRecord,
) -> Result<()> {
    match cfg.name.as_str() {
        "kinematic-universality" => kinematic_universality(cfg, options, record),
        "dephasing-invariance" => dephasing_invariance(cfg, options, record),
        "special-relativistic-limit" => special_relativistic_limit(cfg, options, record),
        "dyson-truncation-order" => dyson_truncation_order(cfg, options, record),
        "pn-residual-scaling" => pn_residual_scaling(cfg, options, record),
        "weyl-trace-equivalence" => weyl_trace_equivalence(cfg, options, record),
        "quantum-dilation-measure" => dilation_measure_scan(cfg, options, record),
        "coherent-discrimination" => coherent_discrimination(cfg, options, record),
        "gravitational-nonuniversality" => gravitational_nonuniversality(cfg, options, record),
        _ => rate_sweep(cfg, options, record),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn push_row(record: &mut ResultRecord, t: f64, outcome: Result<ResultRow>) {
    match outcome {
        Ok(row) => record.rows.push(row),
        Err(e) => record.rows.push(ResultRow::failed_with(t, &e.to_string())),
    }
}

fn need_packets(cfg: &ScenarioConfig, at_least: usize) -> Result<()> {
    if cfg.cm.packets.len() < at_least {
        return Err(Error::validation(
            "cm.packets",
            format!(
                "scenario `{}` needs at least {at_least} packet(s), got {}",
                cfg.name,
                cfg.cm.packets.len()
            ),
        ));
    }
    Ok(())
}

fn clock_from(cfg: &ScenarioConfig) -> Result<ClockModel> {
    let base = match cfg.clock.kind {
        ClockKind::TwoLevel => two_level_clock(cfg.clock.omega)?,
        ClockKind::Oscillator => uniform_ladder_clock(cfg.clock.omega, cfg.clock.dim)?,
    };
    base.with_kappa(cfg.clock.kappa)
}

fn packet_from(p: &PacketConfig) -> Result<WavePacket> {
    WavePacket::new(p.p_mean, p.p_spread, p.x_mean, 0.0)
}

fn pure_state_from(cfg: &ScenarioConfig) -> Result<PureCMState> {
    let cm = &cfg.cm;
    if let Some(theta) = cm.theta {
        // Validation pinned the packet count to 2 for the shorthand.
        let b1 = PureCMState::single(packet_from(&cm.packets[0])?);
        let b2 = PureCMState::single(packet_from(&cm.packets[1])?);
        return superpose(theta, cm.phi, &b1, &b2);
    }
    let mut terms = Vec::with_capacity(cm.packets.len());
    for p in &cm.packets {
        terms.push((Complex64::new(p.amp_re, p.amp_im), packet_from(p)?));
    }
    PureCMState::new(terms)
}

fn decomp_from(cfg: &ScenarioConfig) -> Result<HamiltonianDecomposition> {
    let g = if cfg.gravity.enabled { cfg.gravity.g } else { 0.0 };
    decompose_hamiltonian(cfg.mass, g, cfg.ordering)
}

/// Flat-space evolution followed by a rate fit: `(s, fit residual, trace
/// drift)`. `t = 0` is the identity, so the fit is skipped.
fn flat_rate(
    state: &CMDensity,
    clock: &ClockModel,
    mass: f64,
    t: f64,
    n_p: usize,
) -> Result<(f64, f64, f64)> {
    if t == 0.0 {
        return Ok((1.0, 0.0, 0.0));
    }
    let report = exact_flat_space_evolve(state, clock, mass, t, n_p)?;
    let est = fit_rate_factor(&report.rho_clock, clock, &clock.initial_density(), t)?;
    Ok((est.s, est.residual, drift_of(&report.diagnostics)))
}

/// Heavy-mass-limit counterpart of [`flat_rate`].
fn grav_rate(
    state: &CMDensity,
    clock: &ClockModel,
    gravity: f64,
    t: f64,
    n_x: usize,
) -> Result<(f64, f64, f64)> {
    if t == 0.0 {
        return Ok((1.0, 0.0, 0.0));
    }
    let report = gravitational_limit_evolve(state, clock, gravity, t, n_x)?;
    let est = fit_rate_factor(&report.rho_clock, clock, &clock.initial_density(), t)?;
    Ok((est.s, est.residual, drift_of(&report.diagnostics)))
}

fn drift_of(diagnostics: &std::collections::BTreeMap<String, f64>) -> f64 {
    diagnostics.get("trace_drift").copied().unwrap_or(f64::NAN)
}

/// Least-squares slope and coefficient of determination of `ln y` against
/// `ln x`. Returns NaNs when a sample cannot be logged; scaling verdicts
/// then fail instead of silently dropping points.
fn loglog_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, r2)
}

// ---------------------------------------------------------------------------
// Builtin studies
// ---------------------------------------------------------------------------

/// Two unrelated clock mechanisms against the same relativistic packet:
/// fitted rates must agree with each other and with the first-order
/// classical average `1 + <v1>`.
fn kinematic_universality(
    cfg: &ScenarioConfig,
    options: &RunOptions,
    record: &mut ResultRecord,
) -> Result<()> {
    need_packets(cfg, 1)?;
    let tol = options.tol.unwrap_or(1e-6);
    let state = CMDensity::pure(pure_state_from(cfg)?);
    let decomp = decomp_from(cfg)?;
    let clocks = [
        two_level_clock(cfg.clock.omega)?,
        uniform_ladder_clock(cfg.clock.omega, 5)?,
    ];
    for &t in &cfg.evolution.t_list {
        let outcome = (|| {
            let mut row = ResultRow::at(t);
            if t == 0.0 {
                row.rate = 1.0;
                row.residual = 0.0;
                row.trace_drift = 0.0;
                row.measure = 0.0;
                return Ok(row);
            }
            let report = universality_check(&clocks, &state, &decomp, t, tol)?;
            let classical = classical_average_rate(&state, &decomp)?;
            let (s, residual, drift) = flat_rate(&state, &clocks[0], cfg.mass, t, 512)?;
            row.rate = s;
            row.residual = residual;
            row.trace_drift = drift;
            row.measure = report.max_relative_deviation;
            row.note_num("classical_rate", classical);
            record.verdict_and("mechanism_independent", report.verdict);
            record.verdict_and(
                "classical_rate_consistent",
                report.estimates.iter().all(|e| (e.s - classical).abs() < tol),
            );
            Ok(row)
        })();
        push_row(record, t, outcome);
    }
    record.metrics.insert("tolerance".to_string(), tol);
    Ok(())
}

fn random_superposition(rng: &mut ChaCha8Rng) -> Result<PureCMState> {
    // Amplitudes are kept away from zero, but near-parallel packets with
    // cancelling amplitudes can still normalise away; redraw those.
    for _ in 0..16 {
        let k = rng.random_range(1..=4usize);
        let mut terms = Vec::with_capacity(k);
        for _ in 0..k {
            let amp = loop {
                let candidate = Complex64::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                if candidate.norm() >= 0.3 {
                    break candidate;
                }
            };
            let packet = WavePacket::new(
                rng.random_range(-0.2..0.2),
                rng.random_range(0.2..0.3),
                rng.random_range(-1.0..1.0),
                0.0,
            )?;
            terms.push((amp, packet));
        }
        match PureCMState::new(terms) {
            Ok(state) => return Ok(state),
            Err(Error::DegenerateState(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::invalid(
        "could not draw a normalizable packet superposition in 16 attempts",
    ))
}

/// Seeded random packet superpositions, each compared against its
/// momentum-dephased mixture through two clock readouts. The momentum
/// density fixes the reduced clock state, so the distributions must agree
/// to numerical precision.
fn dephasing_invariance(
    cfg: &ScenarioConfig,
    options: &RunOptions,
    record: &mut ResultRecord,
) -> Result<()> {
    let tol = options.tol.unwrap_or(1e-12);
    const SIGMA_MIN: f64 = 0.2;
    const SIGMA_MAX: f64 = 0.3;
    const N_SAMPLES: usize = 20;
    // Momentum spacing must stay strictly below sigma_min / 8; the 17/16
    // margin keeps the check off the float boundary.
    let half = 8.5 * PI / SIGMA_MIN;
    let grid = GridSpec::new(cfg.grid.n, -half, half)?;
    let clocks = [
        two_level_clock(cfg.clock.omega)?,
        uniform_ladder_clock(cfg.clock.omega, 3)?,
    ];
    let povms: Vec<TimePOVM> = clocks
        .iter()
        .map(|c| covariant_time_povm(c, 12))
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x0dd5_eed5);
    let samples: Vec<PureCMState> = (0..N_SAMPLES)
        .map(|_| random_superposition(&mut rng))
        .collect::<Result<_>>()?;
    debug_assert!(samples
        .iter()
        .flat_map(|s| s.footprints())
        .all(|f| (SIGMA_MIN..=SIGMA_MAX).contains(&f.p_spread)));
    // The readout identity only holds in the weak-coupling regime; record
    // the worst <p^2>/2m^2 drawn so downstream checks can pin it.
    let max_coupling = samples
        .iter()
        .map(|s| s.moment(0, 2).re / (2.0 * cfg.mass * cfg.mass))
        .fold(0.0_f64, f64::max);
    record
        .metrics
        .insert("max_kinetic_coupling".to_string(), max_coupling);

    for &t in &cfg.evolution.t_list {
        let outcome = (|| {
            let mut row = ResultRow::at(t);
            let mut max_diff = 0.0_f64;
            for (i, psi) in samples.iter().enumerate() {
                let rho = CMDensity::pure(psi.clone()).to_grid(&grid)?;
                let dephased = rho.dephase_momentum(&grid)?;
                for (clock, povm) in clocks.iter().zip(&povms) {
                    let coherent = exact_flat_space_evolve(&rho, clock, cfg.mass, t, grid.n())?;
                    let mixed = exact_flat_space_evolve(&dephased, clock, cfg.mass, t, grid.n())?;
                    let da = readout_distribution(&coherent.rho_clock, povm)?;
                    let db = readout_distribution(&mixed.rho_clock, povm)?;
                    for ((_, pa), (_, pb)) in da.iter().zip(&db) {
                        max_diff = max_diff.max((pa - pb).abs());
                    }
                }
                if i == 0 {
                    let (s, residual, drift) = flat_rate(&rho, &clocks[0], cfg.mass, t, grid.n())?;
                    row.rate = s;
                    row.residual = residual;
                    row.trace_drift = drift;
                }
            }
            row.measure = max_diff;
            row.note_num("samples", N_SAMPLES as f64);
            record.verdict_and("readout_invariant_under_momentum_dephasing", max_diff < tol);
            Ok(row)
        })();
        push_row(record, t, outcome);
    }
    record.metrics.insert("tolerance".to_string(), tol);
    Ok(())
}

/// A narrow packet at momentum `p` slows the clock by `m / sqrt(m^2 + p^2)`
/// up to spread corrections.
fn special_relativistic_limit(
    cfg: &ScenarioConfig,
    options: &RunOptions,
    record: &mut ResultRecord,
) -> Result<()> {
    need_packets(cfg, 1)?;
    let tol = options.tol.unwrap_or(1e-4);
    let state = CMDensity::pure(pure_state_from(cfg)?);
    let clock = clock_from(cfg)?;
    let p_bar = state.moment(0, 1)?.re;
    let lorentz = cfg.mass / (cfg.mass * cfg.mass + p_bar * p_bar).sqrt();
    for &t in &cfg.evolution.t_list {
        let outcome = (|| {
            let mut row = ResultRow::at(t);
            let (s, residual, drift) = flat_rate(&state, &clock, cfg.mass, t, 512)?;
            row.rate = s;
            row.residual = residual;
            row.trace_drift = drift;
            row.measure = s - lorentz;
            if t > 0.0 {
                record.verdict_and("matches_inverse_lorentz_factor", (s - lorentz).abs() < tol);
            }
            Ok(row)
        })();
        push_row(record, t, outcome);
    }
    record.metrics.insert("inverse_lorentz_factor".to_string(), lorentz);
    record.metrics.insert("tolerance".to_string(), tol);
    Ok(())
}

/// Error of the first-order short-time expansion against the dense grid
/// propagator, with the log-log slope of the error in time. A faithful
/// first-order truncation leaves a second-order remainder.
fn dyson_truncation_order(
    cfg: &ScenarioConfig,
    options: &RunOptions,
    record: &mut ResultRecord,
) -> Result<()> {
    need_packets(cfg, 1)?;
    let tol = options.tol.unwrap_or(0.15);
    let psi = pure_state_from(cfg)?;
    let grid = GridSpec::auto(&psi.footprints(), cfg.grid.n)?;
    let rho_cm = CMDensity::pure(psi).to_grid(&grid)?;
    let clock = clock_from(cfg)?;
    let decomp = decomp_from(cfg)?;
    let propagator = HermitianPropagator::new(&assemble_total_hamiltonian(&decomp, &clock, &grid)?)?;
    let rho_clock0 = clock.initial_density();
    let composite = CompositeState::product(&rho_cm, &rho_clock0)?;

    let mut ts = Vec::new();
    let mut errors = Vec::new();
    for &t in &cfg.evolution.t_list {
        let outcome = (|| {
            let mut row = ResultRow::at(t);
            if t == 0.0 {
                row.rate = 1.0;
                row.residual = 0.0;
                row.trace_drift = 0.0;
                row.measure = 0.0;
                return Ok(row);
            }
            let exact = propagator.evolve_clock_state(&composite, t)?;
            let truncated = dyson_first_order_clock_state(
                &rho_cm,
                &rho_clock0,
                &clock,
                &decomp,
                t,
                ExpectationMethod::Operator,
            )?;
            let error = (&exact.rho_clock - &truncated.rho_clock).norm();
            let est = fit_rate_factor(&exact.rho_clock, &clock, &rho_clock0, t)?;
            row.rate = est.s;
            row.residual = est.residual;
            row.trace_drift = drift_of(&exact.diagnostics);
            row.measure = error;
            ts.push(t);
            errors.push(error);
            Ok(row)
        })();
        push_row(record, t, outcome);
    }
    let (slope, r2) = loglog_fit(&ts, &errors);
    record.slopes.insert("dyson_error_vs_t".to_string(), slope);
    record.slopes.insert("r_squared".to_string(), r2);
    record.verdict_and("truncation_order_two", (slope - 2.0).abs() < tol && r2 > 0.99);
    record.metrics.insert("tolerance".to_string(), tol);
    Ok(())
}

/// Residual of the quadratic weak-field redshift truncation against the
/// exact closed form, compared under a common observer normalisation so
/// only the field expansion is probed. `t_list` carries the expansion
/// parameter, not a time.
fn pn_residual_scaling(
    cfg: &ScenarioConfig,
    options: &RunOptions,
    record: &mut ResultRecord,
) -> Result<()> {
    let tol = options.tol.unwrap_or(0.1);
    let mu = cfg.mass;
    let grav = 1.0;
    let eps0 = 1e-3;
    let r0 = grav * mu / eps0;
    let metric = pn_metric_expansion_with_g(mu, r0, grav)?;
    // Truncated observer factor, evaluated once: shared by both routes so
    // the residual isolates the field polynomial.
    let obs = metric.observer_poly();
    let obs_truncated = obs[0] + obs[1] * eps0 + obs[2] * eps0 * eps0;
    let g00_reference_error = (metric.g00(r0)? - 1.0).abs();

    let mut eps_seen = Vec::new();
    let mut residuals = Vec::new();
    for &eps in &cfg.evolution.t_list {
        let outcome = (|| {
            let mut row = ResultRow::at(eps);
            if !(eps > 0.0 && eps < 0.5) {
                return Err(Error::invalid(format!(
                    "expansion parameter must lie in (0, 0.5), got {eps}"
                )));
            }
            let r = grav * mu / eps;
            let truncated = metric.g00(r)?;
            let exact = obs_truncated * isotropic_time_factor(mu, r, grav)?;
            let residual = (truncated - exact).abs();
            row.rate = truncated;
            row.residual = residual;
            row.measure = residual / (eps * eps * eps);
            row.note_num("epsilon", eps);
            eps_seen.push(eps);
            residuals.push(residual);
            Ok(row)
        })();
        push_row(record, eps, outcome);
    }
    let (slope, r2) = loglog_fit(&eps_seen, &residuals);
    record.slopes.insert("pn_residual_vs_epsilon".to_string(), slope);
    record.slopes.insert("r_squared".to_string(), r2);
    record.verdict_and("cubic_truncation_scaling", (slope - 3.0).abs() < tol);
    record.verdict_and("observer_normalization", g00_reference_error < 1e-11);
    record.metrics.insert("g00_reference_error".to_string(), g00_reference_error);
    record.metrics.insert("tolerance".to_string(), tol);
    Ok(())
}

/// Operator-word and phase-space-integral expectation routes on a bank of
/// Gaussian and chirped probe states, plus the symbolic ordering shift
/// between the symmetric and one-sided conventions. `t_list` indexes the
/// probe states.
fn weyl_trace_equivalence(
    cfg: &ScenarioConfig,
    options: &RunOptions,
    record: &mut ResultRecord,
) -> Result<()> {
    let tol = options.tol.unwrap_or(1e-8);
    let half = cfg.grid.extent.unwrap_or(25.0);
    let grid = GridSpec::new(cfg.grid.n, -half, half)?;

    let gaussians: [(f64, f64); 5] = [(-2.0, 0.8), (-1.0, 1.0), (0.5, 1.25), (1.0, 0.9), (2.0, 1.1)];
    let chirped: [(f64, f64, f64); 5] = [
        (-1.5, 1.0, 0.3),
        (-0.5, 0.9, 0.45),
        (0.75, 1.1, 0.6),
        (0.5, 0.8, 0.35),
        (1.5, 1.0, 0.5),
    ];
    let mut states = Vec::with_capacity(gaussians.len() + chirped.len());
    for &(x_mean, x_spread) in &gaussians {
        let packet = WavePacket::new(0.0, 0.5 / x_spread, x_mean, 0.0)?;
        states.push(CMDensity::pure(PureCMState::single(packet)).to_grid(&grid)?);
    }
    for &(x_mean, x_spread, chirp) in &chirped {
        states.push(CMDensity::chirped_gaussian(&grid, x_mean, x_spread, 0.0, chirp)?);
    }

    let word = |kind| {
        OrderedPolynomial::new(
            kind,
            vec![OrderedMonomial { coeff: 1.0, p_pow: 2, x_pow: 1 }],
        )
    };
    let weyl_word = word(OrderingKind::Weyl);

    for &t in &cfg.evolution.t_list {
        let outcome = (|| {
            let mut row = ResultRow::at(t);
            let index = (t.max(0.0) as usize) % states.len();
            let state = &states[index];
            let operator = expectation_of_ordered(&weyl_word, state, ExpectationMethod::Operator)?;
            let integral = expectation_of_ordered(&weyl_word, state, ExpectationMethod::Integral)?;
            let relative = (operator - integral).norm() / operator.norm().max(1e-6);
            row.residual = relative;
            row.measure = operator.im.abs();
            row.note_num("operator_route", operator.re);
            row.note_num("integral_route", integral.re);
            record.verdict_and("integral_route_matches_operator_route", relative < tol);
            record.verdict_and("weyl_expectation_real", operator.im.abs() < 1e-10);
            Ok(row)
        })();
        push_row(record, t, outcome);
    }

    // One-sided (lambda = 1) minus symmetric ordering of the same word is
    // a pure commutator shift, linear in <p> with a fixed imaginary unit.
    let lambda_word = word(OrderingKind::Lambda(1.0));
    let boosted: [(f64, f64); 3] = [(0.8, 0.5), (1.5, -1.0), (-1.2, 1.0)];
    let mut worst = 0.0_f64;
    for &(p_mean, x_mean) in &boosted {
        let packet = WavePacket::new(p_mean, 0.5, x_mean, 0.0)?;
        let pure = CMDensity::pure(PureCMState::single(packet));
        // Closed-form moments only exist on the packet side; take <p>
        // before gridding.
        let p_expect = pure.moment(0, 1)?;
        let state = pure.to_grid(&grid)?;
        let symmetric = expectation_of_ordered(&weyl_word, &state, ExpectationMethod::Operator)?;
        let one_sided = expectation_of_ordered(&lambda_word, &state, ExpectationMethod::Operator)?;
        let predicted = Complex64::new(0.0, -1.0) * p_expect;
        worst = worst.max((one_sided - symmetric - predicted).norm());
    }
    record.verdict_and("lambda_shift_matches_commutator", worst < 1e-9);
    record.metrics.insert("lambda_shift_deviation".to_string(), worst);
    record.metrics.insert("tolerance".to_string(), tol);
    Ok(())
}

/// Rate gap between a two-branch superposition and the matching classical
/// mixture, scanned over the relative branch phase carried by `t_list`.
fn dilation_measure_scan(
    cfg: &ScenarioConfig,
    options: &RunOptions,
    record: &mut ResultRecord,
) -> Result<()> {
    need_packets(cfg, 2)?;
    let tol = options.tol.unwrap_or(1e-8);
    let theta = cfg.cm.theta.unwrap_or(FRAC_PI_4);
    let b1 = packet_from(&cfg.cm.packets[0])?;
    let b2 = packet_from(&cfg.cm.packets[1])?;
    let clock = clock_from(cfg)?;
    let decomp = decomp_from(cfg)?;
    let t_probe = 1.0;
    let overlap = PureCMState::single(b1.clone())
        .overlap(&PureCMState::single(b2.clone()))
        .norm();

    let mut first = f64::NAN;
    let mut last = f64::NAN;
    for &phi in &cfg.evolution.t_list {
        let outcome = (|| {
            let mut row = ResultRow::at(phi);
            let measure = quantum_dilation_measure(theta, phi, &b1, &b2, &clock, &decomp, t_probe)?;
            let branch1 = PureCMState::single(b1.clone());
            let branch2 = PureCMState::single(b2.clone());
            let superposed = CMDensity::pure(superpose(theta, phi, &branch1, &branch2)?);
            let (s, residual, drift) = flat_rate(&superposed, &clock, cfg.mass, t_probe, 512)?;
            row.rate = s;
            row.residual = residual;
            row.trace_drift = drift;
            row.measure = measure;
            row.note_num("branch_overlap", overlap);
            if first.is_nan() {
                first = measure;
            }
            last = measure;
            Ok(row)
        })();
        push_row(record, phi, outcome);
    }

    // Degenerate pairs close both ends: identical branches have no mixture
    // to differ from, and disjoint branches carry no interference term.
    let identical = quantum_dilation_measure(theta, 0.3, &b1, &b1, &clock, &decomp, t_probe)?;
    let fp = b1.footprint();
    let far = WavePacket::new(fp.p_mean + 14.0 * fp.p_spread, fp.p_spread, fp.x_mean, 0.0)?;
    let disjoint = quantum_dilation_measure(theta, 0.3, &b1, &far, &clock, &decomp, t_probe)?;
    record.verdict_and("vanishes_for_identical_branches", identical.abs() < 1e-10);
    record.verdict_and("vanishes_for_distinguishable_branches", disjoint.abs() < 1e-10);
    record.verdict_and("phase_sensitive", (first - last).abs() > tol);
    record.metrics.insert("branch_overlap".to_string(), overlap);
    record.metrics.insert("identical_branch_measure".to_string(), identical.abs());
    record.metrics.insert("disjoint_branch_measure".to_string(), disjoint.abs());
    record.metrics.insert("tolerance".to_string(), tol);
    Ok(())
}

/// Coherent-state pair discrimination: `t_list` sweeps the real part of
/// the second label, moving the pair from identical through partially
/// overlapping while staying momentum-split.
fn coherent_discrimination(
    cfg: &ScenarioConfig,
    options: &RunOptions,
    record: &mut ResultRecord,
) -> Result<()> {
    let tol = options.tol.unwrap_or(1e-8);
    let length = 1.0;
    for &beta in &cfg.evolution.t_list {
        let outcome = (|| {
            let mut row = ResultRow::at(beta);
            let demo = coherent_discrimination_demo(
                Complex64::new(0.0, 0.0),
                Complex64::new(beta, 0.0),
                length,
            )?;
            row.measure = demo.measure;
            row.residual = demo.momentum_l1_distance;
            row.note_num("overlap", demo.overlap);
            Ok(row)
        })();
        push_row(record, beta, outcome);
    }

    // Anchors: a position-split pair shares its momentum density with the
    // mixture exactly; a unit momentum split does not.
    let displaced = coherent_discrimination_demo(
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 9.0),
        length,
    )?;
    let resolved = coherent_discrimination_demo(
        Complex64::new(0.0, 0.0),
        Complex64::new(1.0, 0.0),
        length,
    )?;
    record.verdict_and(
        "position_displaced_pair_yields_zero_measure",
        displaced.measure.abs() < 1e-10,
    );
    record.verdict_and("momentum_displaced_pair_resolved", resolved.measure.abs() > tol);
    record.metrics.insert("position_displaced_measure".to_string(), displaced.measure.abs());
    record.metrics.insert("momentum_displaced_measure".to_string(), resolved.measure.abs());
    record.metrics.insert("tolerance".to_string(), tol);
    Ok(())
}

/// Clock rates in a uniform field for a family of mechanism parameters
/// carried by `t_list`; each must sit at the local law `1 + (1 + kappa) g
/// <x>`, so the family splits and universality fails by design.
fn gravitational_nonuniversality(
    cfg: &ScenarioConfig,
    options: &RunOptions,
    record: &mut ResultRecord,
) -> Result<()> {
    need_packets(cfg, 1)?;
    if !cfg.gravity.enabled {
        return Err(Error::validation(
            "gravity.enabled",
            "this scenario studies a uniform field; enable gravity",
        ));
    }
    let tol = options.tol.unwrap_or(1e-8);
    let g = cfg.gravity.g;
    let state = CMDensity::pure(pure_state_from(cfg)?);
    let x_bar = state.moment(1, 0)?.re;
    let base = clock_from(cfg)?;
    let t_probe = 1.0;

    let mut rates = Vec::new();
    for &kappa in &cfg.evolution.t_list {
        let outcome = (|| {
            let mut row = ResultRow::at(kappa);
            let clock = base.clone().with_kappa(kappa)?;
            let (s, residual, drift) = grav_rate(&state, &clock, g, t_probe, 512)?;
            let expected = 1.0 + (1.0 + kappa) * g * x_bar;
            row.rate = s;
            row.residual = residual;
            row.trace_drift = drift;
            row.measure = s - expected;
            row.note_num("kappa", kappa);
            row.note_num("local_rate_prediction", expected);
            rates.push(s);
            record.verdict_and("local_rate_law_holds", (s - expected).abs() < tol);
            Ok(row)
        })();
        push_row(record, kappa, outcome);
    }
    if rates.len() >= 2 {
        let hi = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = rates.iter().cloned().fold(f64::INFINITY, f64::min);
        record.verdict_and("rate_depends_on_mechanism", hi - lo > 0.25 * (g * x_bar).abs());
        record.metrics.insert("rate_span".to_string(), hi - lo);
    }

    // Position coherence cannot reach the clock in this limit: only the
    // position density enters the reduced dynamics.
    let grid = GridSpec::new(1024, -3.2, 3.2)?;
    let narrow = |x_mean: f64| WavePacket::new(0.0, 50.0, x_mean, 0.0);
    let split = PureCMState::new(vec![
        (Complex64::new(FRAC_1_SQRT_2, 0.0), narrow(1.5)?),
        (Complex64::new(FRAC_1_SQRT_2, 0.0), narrow(2.5)?),
    ])?;
    let coherent = CMDensity::pure(split).to_grid(&grid)?;
    let dephased = coherent.dephase_position(&grid)?;
    let clock0 = base.clone().with_kappa(0.0)?;
    let a = gravitational_limit_evolve(&coherent, &clock0, g, t_probe, grid.n())?;
    let b = gravitational_limit_evolve(&dephased, &clock0, g, t_probe, grid.n())?;
    let mut shift = 0.0_f64;
    for (x, y) in a.rho_clock.iter().zip(b.rho_clock.iter()) {
        shift = shift.max((x - y).norm());
    }
    record.verdict_and("position_dephasing_invariant", shift < 1e-12);
    record.metrics.insert("position_dephasing_shift".to_string(), shift);
    record.metrics.insert("tolerance".to_string(), tol);
    Ok(())
}

// ---------------------------------------------------------------------------
// Generic sweep
// ---------------------------------------------------------------------------

/// Fallback for custom configs: evolve with the requested engine, fit the
/// rate at each `t`, and cross-check the fit against the mean-readout rate
/// while the clock phase stays on the principal branch.
fn rate_sweep(
    cfg: &ScenarioConfig,
    _options: &RunOptions,
    record: &mut ResultRecord,
) -> Result<()> {
    need_packets(cfg, 1)?;
    let state = CMDensity::pure(pure_state_from(cfg)?);
    let clock = clock_from(cfg)?;
    let decomp = decomp_from(cfg)?;
    let rho_clock0 = clock.initial_density();

    // Grid-backed engines pay the eigendecomposition once per sweep.
    let grid_engine = if cfg.evolution.method == EvolutionMethod::ExactGrid {
        let fps = state.footprints().expect("packet states expose footprints");
        let grid = match cfg.grid.extent {
            Some(half) => {
                let lo = fps
                    .iter()
                    .map(|f| f.x_mean - 8.0 * f.x_spread())
                    .fold(f64::INFINITY, f64::min);
                let hi = fps
                    .iter()
                    .map(|f| f.x_mean + 8.0 * f.x_spread())
                    .fold(f64::NEG_INFINITY, f64::max);
                let mid = 0.5 * (lo + hi);
                GridSpec::new(cfg.grid.n, mid - half, mid + half)?
            }
            None => GridSpec::auto(&fps, cfg.grid.n)?,
        };
        let rho_grid = state.to_grid(&grid)?;
        let propagator =
            HermitianPropagator::new(&assemble_total_hamiltonian(&decomp, &clock, &grid)?)?;
        Some((CompositeState::product(&rho_grid, &rho_clock0)?, propagator))
    } else {
        None
    };

    let omega0 = clock.period().ok().map(|p| 2.0 * PI / p);
    let n_outcomes = 4 * clock.dim();
    for &t in &cfg.evolution.t_list {
        let outcome = (|| {
            let mut row = ResultRow::at(t);
            row.note_str("method", cfg.evolution.method.as_str());
            if t == 0.0 {
                row.rate = 1.0;
                row.residual = 0.0;
                row.trace_drift = 0.0;
                return Ok(row);
            }
            let report = match cfg.evolution.method {
                EvolutionMethod::ExactFlat => {
                    exact_flat_space_evolve(&state, &clock, cfg.mass, t, 512)?
                }
                EvolutionMethod::ExactGrid => {
                    let (composite, propagator) =
                        grid_engine.as_ref().expect("engine built for exact-grid");
                    propagator.evolve_clock_state(composite, t)?
                }
                EvolutionMethod::Dyson => dyson_first_order_clock_state(
                    &state,
                    &rho_clock0,
                    &clock,
                    &decomp,
                    t,
                    ExpectationMethod::Operator,
                )?,
                EvolutionMethod::GravitationalLimit => {
                    gravitational_limit_evolve(&state, &clock, cfg.gravity.g, t, 512)?
                }
            };
            let est = fit_rate_factor(&report.rho_clock, &clock, &rho_clock0, t)?;
            row.rate = est.s;
            row.residual = est.residual;
            row.trace_drift = drift_of(&report.diagnostics);
            match omega0 {
                // The mean-readout phase is only trustworthy on the
                // principal branch; 1.5 bounds the fitted rate bracket.
                Some(w0) if w0 * t * 1.5 < PI => {
                    let cross = povm_mean_rate(&report.rho_clock, &clock, &rho_clock0, t, n_outcomes)?;
                    row.measure = (cross.s - est.s).abs();
                    row.note_num("readout_mean_rate", cross.s);
                }
                _ => {
                    row.note_str(
                        "readout_mean_rate",
                        "skipped: clock phase beyond the principal readout branch",
                    );
                }
            }
            Ok(row)
        })();
        push_row(record, t, outcome);
    }
    Ok(())
}
