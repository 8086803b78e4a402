//! Observables on evolved clock states: readout distributions, fitted rate
//! factors, universality verdicts, and the dilation-measure demonstrations.
//!
//! The rate of a clock is defined operationally: the factor `s` whose time
//! rescaling makes the free evolution closest (Frobenius norm) to the
//! observed state. A POVM-mean rate is available as a cross-check; the two
//! agree at first order in the coupling but are distinct estimators.
//!
//! The quantum-dilation measure compares a coherent superposition against
//! the mixture with the same branch weights. The reference choice is a
//! convention, not a law; `coherent_discrimination_demo` exists precisely
//! because the same procedure applied to a classical coherent state also
//! produces a nonzero value.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::clock::{clock_free_evolve, ClockModel, TimePOVM};
use crate::evolve::{exact_flat_space_evolve, gravitational_limit_evolve};
use crate::hamiltonian::{ExpectationMethod, HamiltonianDecomposition};
use crate::states::{superpose, CMDensity, PureCMState, WavePacket};
use crate::{Error, Result};

/// How a rate estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMethod {
    StateFit,
    PovmMean,
}

impl RateMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            RateMethod::StateFit => "state-fit",
            RateMethod::PovmMean => "povm-mean",
        }
    }
}

/// Dimensionless ticking-rate factor with the residual of its extraction.
#[derive(Debug, Clone, Copy)]
pub struct RateEstimate {
    pub s: f64,
    pub residual: f64,
    pub method: RateMethod,
}

/// Per-clock rates under an identical centre-of-mass state, with the
/// worst pairwise relative deviation and the verdict at `tolerance`.
#[derive(Debug, Clone)]
pub struct UniversalityReport {
    pub estimates: Vec<RateEstimate>,
    pub max_relative_deviation: f64,
    pub tolerance: f64,
    pub verdict: bool,
}

/// `P(tau_k) = Tr(E_k rho)` for every POVM outcome.
pub fn readout_distribution(
    rho_clock: &DMatrix<Complex64>,
    povm: &TimePOVM,
) -> Result<Vec<(f64, f64)>> {
    povm.distribution(rho_clock)
}

/// The factor `s` in `[0.5, 1.5]` minimising
/// `|| rho_clock_t - U(s t) rho_clock_0 U(s t)^dag ||_F`, located by
/// golden-section search to 1e-12 in `s`.
///
/// The objective is unimodal when the clock phases advance by less than a
/// half turn across the bracket, i.e. for `|e_max - e_min| * t` below pi;
/// every scenario in this crate stays well inside that. A minimum pinned
/// to a bracket edge means the true rate lies outside `[0.5, 1.5]` and is
/// returned as a fit error carrying the best iterate.
pub fn fit_rate_factor(
    rho_clock_t: &DMatrix<Complex64>,
    clock: &ClockModel,
    rho_clock_0: &DMatrix<Complex64>,
    t: f64,
) -> Result<RateEstimate> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::invalid(format!("fit needs t > 0, got {t}")));
    }
    let d = clock.dim();
    for (name, m) in [("rho_clock_t", rho_clock_t), ("rho_clock_0", rho_clock_0)] {
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::Shape(format!(
                "{name} must be {d} x {d}, got {} x {}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    let objective = |s: f64| -> Result<f64> {
        let reference = clock_free_evolve(clock, rho_clock_0, s * t)?;
        Ok((rho_clock_t - reference).norm())
    };

    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.5_f64, 1.5_f64);
    let mut c = b - inv_phi * (b - a);
    let mut d_pt = a + inv_phi * (b - a);
    let mut fc = objective(c)?;
    let mut fd = objective(d_pt)?;
    while b - a > 1e-12 {
        if fc < fd {
            b = d_pt;
            d_pt = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c)?;
        } else {
            a = c;
            c = d_pt;
            fc = fd;
            d_pt = a + inv_phi * (b - a);
            fd = objective(d_pt)?;
        }
    }
    let s = 0.5 * (a + b);
    let residual = objective(s)?;
    if s < 0.5 + 1e-9 || s > 1.5 - 1e-9 {
        return Err(Error::Fit {
            best_s: s,
            residual,
            message: "minimum pinned to the bracket edge; the rate lies outside [0.5, 1.5]"
                .to_string(),
        });
    }
    Ok(RateEstimate {
        s,
        residual,
        method: RateMethod::StateFit,
    })
}

/// Cross-check rate from the drift of the readout distribution's first
/// circular harmonic: `s = arg(c1_t conj(c1_0)) / (omega_0 t)` with
/// `omega_0 = 2 pi / period`. Valid while the accumulated phase stays on
/// the principal branch (`|omega_0 t s| < pi`). States whose readout has
/// no first harmonic (the maximally mixed clock) carry no phase to read.
pub fn povm_mean_rate(
    rho_clock_t: &DMatrix<Complex64>,
    clock: &ClockModel,
    rho_clock_0: &DMatrix<Complex64>,
    t: f64,
    n_outcomes: usize,
) -> Result<RateEstimate> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::invalid(format!("rate extraction needs t > 0, got {t}")));
    }
    let povm = crate::clock::covariant_time_povm(clock, n_outcomes)?;
    let omega0 = 2.0 * std::f64::consts::PI / povm.period();
    let harmonic = |rho: &DMatrix<Complex64>| -> Result<Complex64> {
        let dist = povm.distribution(rho)?;
        Ok(dist
            .iter()
            .map(|&(tau, p)| p * Complex64::new(0.0, omega0 * tau).exp())
            .sum())
    };
    let c0 = harmonic(rho_clock_0)?;
    let ct = harmonic(rho_clock_t)?;
    if c0.norm() < 1e-10 {
        return Err(Error::DegenerateState(
            "readout distribution has no first harmonic; there is no phase to track".to_string(),
        ));
    }
    Ok(RateEstimate {
        s: (ct * c0.conj()).arg() / (omega0 * t),
        residual: (ct.norm() - c0.norm()).abs(),
        method: RateMethod::PovmMean,
    })
}

/// First-order classical expectation of the ticking rate,
/// `1 + Tr(V1 rho_cm)`.
pub fn classical_average_rate(
    rho_cm: &CMDensity,
    decomp: &HamiltonianDecomposition,
) -> Result<f64> {
    let (v1, _) = decomp.coupling_expectations(rho_cm, ExpectationMethod::Operator)?;
    Ok(1.0 + v1.re)
}

/// Quadrature size for the flat-space engine: every packet covered to 8
/// momentum deviations at 10 points per narrowest spread. Grid states use
/// their own sampling.
fn momentum_sampling_points(state: &CMDensity) -> Result<usize> {
    if let Some((_, grid)) = state.grid_matrix() {
        return Ok(grid.n());
    }
    let fps = state.footprints().expect("packet representation");
    let lo = fps
        .iter()
        .map(|f| f.p_mean - 8.0 * f.p_spread)
        .fold(f64::INFINITY, f64::min);
    let hi = fps
        .iter()
        .map(|f| f.p_mean + 8.0 * f.p_spread)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_spread = fps.iter().map(|f| f.p_spread).fold(f64::INFINITY, f64::min);
    Ok((((hi - lo) / (min_spread / 10.0)).ceil() as usize).max(64))
}

/// Position-space analogue for the gravitational-limit engine.
fn position_sampling_points(state: &CMDensity) -> Result<usize> {
    if let Some((_, grid)) = state.grid_matrix() {
        return Ok(grid.n());
    }
    let fps = state.footprints().expect("packet representation");
    let lo = fps
        .iter()
        .map(|f| f.x_mean - 8.0 * f.x_spread())
        .fold(f64::INFINITY, f64::min);
    let hi = fps
        .iter()
        .map(|f| f.x_mean + 8.0 * f.x_spread())
        .fold(f64::NEG_INFINITY, f64::max);
    let min_spread = fps
        .iter()
        .map(|f| f.x_spread())
        .fold(f64::INFINITY, f64::min);
    Ok((((hi - lo) / (min_spread / 10.0)).ceil() as usize).max(64))
}

fn fitted_rate_for(
    clock: &ClockModel,
    rho_cm: &CMDensity,
    decomp: &HamiltonianDecomposition,
    t: f64,
) -> Result<RateEstimate> {
    let report = if decomp.gravity() != 0.0 {
        let n = position_sampling_points(rho_cm)?;
        gravitational_limit_evolve(rho_cm, clock, decomp.gravity(), t, n)?
    } else {
        let n = momentum_sampling_points(rho_cm)?;
        exact_flat_space_evolve(rho_cm, clock, decomp.mass(), t, n)?
    };
    fit_rate_factor(&report.rho_clock, clock, &clock.initial_density(), t)
}

/// Evolves the same centre-of-mass state against every clock and compares
/// the fitted rates. Kinematic scenarios (`gravity = 0`) use the exact
/// flat engine; gravitating ones use the heavy-mass limit, where the
/// mechanism parameter kappa is allowed to break universality.
pub fn universality_check(
    clocks: &[ClockModel],
    rho_cm: &CMDensity,
    decomp: &HamiltonianDecomposition,
    t: f64,
    tolerance: f64,
) -> Result<UniversalityReport> {
    if clocks.len() < 2 {
        return Err(Error::invalid(
            "universality needs at least 2 clocks to compare",
        ));
    }
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(Error::invalid(format!(
            "tolerance must be positive, got {tolerance}"
        )));
    }
    let estimates: Vec<RateEstimate> = clocks
        .iter()
        .map(|clock| fitted_rate_for(clock, rho_cm, decomp, t))
        .collect::<Result<_>>()?;
    let mut max_dev = 0.0_f64;
    for i in 0..estimates.len() {
        for j in i + 1..estimates.len() {
            let (si, sj) = (estimates[i].s, estimates[j].s);
            max_dev = max_dev.max(2.0 * (si - sj).abs() / (si + sj));
        }
    }
    Ok(UniversalityReport {
        estimates,
        max_relative_deviation: max_dev,
        tolerance,
        verdict: max_dev < tolerance,
    })
}

/// `s_superposed - s_mixture` for the two-branch state
/// `cos(theta) psi1 + sin(theta) e^{i phi} psi2` against the mixture with
/// weights `cos^2(theta)`, `sin^2(theta)`. Kinematic by definition: the
/// branches interfere in momentum, and only the momentum density reaches
/// the clock.
pub fn quantum_dilation_measure(
    theta: f64,
    phi: f64,
    psi1: &WavePacket,
    psi2: &WavePacket,
    clock: &ClockModel,
    decomp: &HamiltonianDecomposition,
    t: f64,
) -> Result<f64> {
    if decomp.gravity() != 0.0 {
        return Err(Error::Unsupported(
            "the dilation measure is kinematic; gravitational mechanisms are compared with \
             mechanism_sensitivity_demo"
                .to_string(),
        ));
    }
    let b1 = PureCMState::single(psi1.clone());
    let b2 = PureCMState::single(psi2.clone());
    let superposed = CMDensity::pure(superpose(theta, phi, &b1, &b2)?);
    let (c, s) = (theta.cos(), theta.sin());
    let mixture = CMDensity::mixture(vec![(c * c, b1), (s * s, b2)])?;
    let s_sup = fitted_rate_for(clock, &superposed, decomp, t)?.s;
    let s_mix = fitted_rate_for(clock, &mixture, decomp, t)?.s;
    Ok(s_sup - s_mix)
}

/// Output of [`coherent_discrimination_demo`].
#[derive(Debug, Clone, Copy)]
pub struct CoherentDemoReport {
    /// `|<alpha|beta>| = exp(-|alpha - beta|^2 / 2)`.
    pub overlap: f64,
    /// L1 distance between the momentum densities of `|alpha><alpha|` and
    /// the mixture.
    pub momentum_l1_distance: f64,
    /// Dilation measure of the pair (superposition minus mixture rate).
    pub measure: f64,
}

/// Discrimination procedure applied to a classical pair: decompose
/// `|alpha>` in the basis `(|alpha> +- |beta>)/sqrt(2)` (which reproduces
/// `|alpha>` itself) and compare against the branch-weighted mixture,
/// which collapses to `(|alpha><alpha| + |beta><beta|)/2`.
///
/// Coherent states are minimum-uncertainty packets on an oscillator of
/// length `length`: the real part of the label displaces momentum by
/// `sqrt(2) Re / length`, the imaginary part displaces position by
/// `sqrt(2) Im * length`. The measure therefore vanishes exactly when
/// `alpha - beta` is purely imaginary (same momentum density) and is
/// generically nonzero otherwise, even though nothing about the pair is
/// quantum: the measure's reference is a convention.
///
/// The internal probe (mass, clock frequency, horizon) is fixed relative
/// to the packet scale so the coupling stays near 1e-3 for labels of
/// order unity.
pub fn coherent_discrimination_demo(
    alpha: Complex64,
    beta: Complex64,
    length: f64,
) -> Result<CoherentDemoReport> {
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::invalid(format!(
            "oscillator length must be positive, got {length}"
        )));
    }
    if !(alpha.re.is_finite() && alpha.im.is_finite() && beta.re.is_finite() && beta.im.is_finite())
    {
        return Err(Error::invalid("coherent labels must be finite"));
    }
    let sigma_p = 1.0 / (std::f64::consts::SQRT_2 * length);
    let packet_of = |label: Complex64| -> Result<WavePacket> {
        WavePacket::new(
            std::f64::consts::SQRT_2 * label.re / length,
            sigma_p,
            std::f64::consts::SQRT_2 * label.im * length,
            0.0,
        )
    };
    let pa = packet_of(alpha)?;
    let pb = packet_of(beta)?;
    let overlap = PureCMState::single(pa.clone())
        .overlap(&PureCMState::single(pb.clone()))
        .norm();

    let superposed = CMDensity::pure(PureCMState::single(pa.clone()));
    let mixture = CMDensity::mixture(vec![
        (0.5, PureCMState::single(pa.clone())),
        (0.5, PureCMState::single(pb.clone())),
    ])?;

    // L1 distance of the momentum densities on a fine midpoint rule.
    let lo = (pa.footprint().p_mean.min(pb.footprint().p_mean)) - 8.0 * sigma_p;
    let hi = (pa.footprint().p_mean.max(pb.footprint().p_mean)) + 8.0 * sigma_p;
    let step = sigma_p / 16.0;
    let n = ((hi - lo) / step).ceil() as usize;
    let mut distance = 0.0;
    for k in 0..n {
        let p = lo + (k as f64 + 0.5) * step;
        distance += (superposed.momentum_density(p) - mixture.momentum_density(p)).abs() * step;
    }

    // Probe scaled to the packets: coupling <p^2>/2m^2 ~ 1e-3 at |label| ~ 1.
    let p_scale = pa
        .footprint()
        .p_mean
        .abs()
        .max(pb.footprint().p_mean.abs())
        .max(sigma_p);
    let mass = 20.0 * p_scale;
    let clock = crate::clock::two_level_clock(1e-2)?;
    let decomp = crate::hamiltonian::decompose_hamiltonian(mass, 0.0, crate::ordering::OrderingKind::Weyl)?;
    let t = 1.0;
    let s_sup = fitted_rate_for(&clock, &superposed, &decomp, t)?.s;
    let s_mix = fitted_rate_for(&clock, &mixture, &decomp, t)?.s;

    Ok(CoherentDemoReport {
        overlap,
        momentum_l1_distance: distance,
        measure: s_sup - s_mix,
    })
}

/// Fitted gravitational-limit rates for each mechanism parameter; monotone
/// in kappa whenever `g <x>` is positive.
pub fn mechanism_sensitivity_demo(
    kappas: &[f64],
    rho_cm: &CMDensity,
    clock_template: &ClockModel,
    gravity: f64,
    t: f64,
) -> Result<Vec<(f64, f64)>> {
    if kappas.is_empty() {
        return Err(Error::invalid("need at least one kappa"));
    }
    let n = position_sampling_points(rho_cm)?;
    kappas
        .iter()
        .map(|&kappa| {
            let clock = clock_template.clone().with_kappa(kappa)?;
            let report = gravitational_limit_evolve(rho_cm, &clock, gravity, t, n)?;
            let est = fit_rate_factor(&report.rho_clock, &clock, &clock.initial_density(), t)?;
            Ok((kappa, est.s))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{covariant_time_povm, two_level_clock, uniform_ladder_clock};
    use crate::hamiltonian::decompose_hamiltonian;
    use crate::ordering::OrderingKind;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn packet(p_mean: f64, p_spread: f64, x_mean: f64) -> WavePacket {
        WavePacket::new(p_mean, p_spread, x_mean, 0.0).unwrap()
    }

    #[test]
    fn free_evolution_fits_to_unit_rate() {
        for clock in [
            two_level_clock(1.0).unwrap(),
            uniform_ladder_clock(0.7, 5).unwrap(),
        ] {
            let rho0 = clock.initial_density();
            let rho_t = clock_free_evolve(&clock, &rho0, 0.8).unwrap();
            let est = fit_rate_factor(&rho_t, &clock, &rho0, 0.8).unwrap();
            assert_abs_diff_eq!(est.s, 1.0, epsilon = 1e-10);
            assert!(est.residual < 1e-10);
            assert_eq!(est.method, RateMethod::StateFit);
        }
    }

    #[test]
    fn rates_outside_the_bracket_are_reported_as_fit_errors() {
        let clock = two_level_clock(1.0).unwrap();
        let rho0 = clock.initial_density();
        // Actual rate 2.0 lies beyond the bracket's upper edge.
        let rho_t = clock_free_evolve(&clock, &rho0, 2.0).unwrap();
        let err = fit_rate_factor(&rho_t, &clock, &rho0, 1.0).unwrap_err();
        match err {
            Error::Fit { best_s, .. } => assert!(best_s > 1.499),
            other => panic!("expected fit error, got {other}"),
        }
    }

    #[test]
    fn near_momentum_eigenstate_fits_the_inverse_lorentz_factor() {
        // m = 1, p = 0.75: exact gap over omega approaches 1/gamma = 0.8
        // as omega -> 0; at finite omega the quadratic dispersion term
        // (omega/2) p^2/E^3 offsets the rate by 1.44e-4 per 1e-3 of omega.
        let (m, p) = (1.0, 0.75);
        let state = CMDensity::pure(PureCMState::single(packet(p, 0.003, 0.0)));
        let e0 = (m * m + p * p).sqrt();
        for (omega, tol_to_limit) in [(1e-3, 2e-4), (1e-4, 5e-5)] {
            let clock = two_level_clock(omega).unwrap();
            let report = exact_flat_space_evolve(&state, &clock, m, 1.0, 256).unwrap();
            let est =
                fit_rate_factor(&report.rho_clock, &clock, &clock.initial_density(), 1.0).unwrap();
            let exact_gap_rate = (((m + omega) * (m + omega) + p * p).sqrt() - e0) / omega;
            assert_abs_diff_eq!(est.s, exact_gap_rate, epsilon = 5e-6);
            assert_abs_diff_eq!(est.s, 0.8, epsilon = tol_to_limit);
        }
    }

    #[test]
    fn perturbative_state_fits_the_classical_average_rate() {
        // Gaussian p_mean 0.1, spread 0.05, m = 1: <p^2>/2m^2 = 0.00625.
        // With omega = 1e-5 the H^2 coupling shifts the rate by only
        // omega <V2> ~ 6e-8, so s = 1 + <V1> = 0.99375 within 1e-6.
        let omega = 1e-5;
        let clock = two_level_clock(omega).unwrap();
        let rho_cm = CMDensity::pure(PureCMState::single(packet(0.1, 0.05, 0.0)));
        let decomp = decompose_hamiltonian(1.0, 0.0, OrderingKind::Weyl).unwrap();
        let t = 1.0;
        let report = crate::evolve::dyson_first_order_clock_state(
            &rho_cm,
            &clock.initial_density(),
            &clock,
            &decomp,
            t,
            ExpectationMethod::Operator,
        )
        .unwrap();
        let est =
            fit_rate_factor(&report.rho_clock, &clock, &clock.initial_density(), t).unwrap();
        assert_abs_diff_eq!(est.s, 0.99375, epsilon = 1e-6);
        let classical = classical_average_rate(&rho_cm, &decomp).unwrap();
        assert_abs_diff_eq!(classical, 0.99375, epsilon = 1e-12);
        assert_abs_diff_eq!(est.s, classical, epsilon = 1e-6);
    }

    #[test]
    fn classical_rate_reduces_to_known_limits() {
        // Slow heavy packet: no dilation.
        let rest = CMDensity::pure(PureCMState::single(packet(0.0, 1e-4, 0.0)));
        let decomp = decompose_hamiltonian(1e6, 0.0, OrderingKind::Weyl).unwrap();
        assert_abs_diff_eq!(
            classical_average_rate(&rest, &decomp).unwrap(),
            1.0,
            epsilon = 1e-10
        );
        // Potential term alone: 1 + g <x>.
        let lifted = CMDensity::pure(PureCMState::single(packet(0.0, 1e-4, 100.0)));
        let decomp = decompose_hamiltonian(1e6, 1e-6, OrderingKind::Weyl).unwrap();
        assert_abs_diff_eq!(
            classical_average_rate(&lifted, &decomp).unwrap(),
            1.0 + 1e-4,
            epsilon = 1e-12
        );
    }

    #[test]
    fn readout_distribution_limits() {
        let clock = two_level_clock(1.0).unwrap();
        let povm = covariant_time_povm(&clock, 8).unwrap();
        // Maximally mixed: uniform over outcomes.
        let mixed = DMatrix::<Complex64>::identity(2, 2) * Complex64::new(0.5, 0.0);
        let dist = readout_distribution(&mixed, &povm).unwrap();
        let total: f64 = dist.iter().map(|(_, p)| p).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
        for &(_, p) in &dist {
            assert_abs_diff_eq!(p, 1.0 / 8.0, epsilon = 1e-12);
        }
        // Initial |+> peaks at tau = 0.
        let dist = readout_distribution(&clock.initial_density(), &povm).unwrap();
        let peak = dist
            .iter()
            .cloned()
            .fold((0.0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        assert_abs_diff_eq!(peak.0, 0.0, epsilon = 1e-12);
        // Free evolution by one outcome spacing rotates the distribution.
        let spacing = povm.period() / 8.0;
        let rho_t = clock_free_evolve(&clock, &clock.initial_density(), spacing).unwrap();
        let shifted = readout_distribution(&rho_t, &povm).unwrap();
        for k in 0..8 {
            assert_abs_diff_eq!(shifted[(k + 1) % 8].1, dist[k].1, epsilon = 1e-10);
        }
    }

    #[test]
    fn povm_mean_rate_cross_checks_the_state_fit() {
        let clock = two_level_clock(0.3).unwrap();
        let rho0 = clock.initial_density();
        // Pure free evolution reads back rate 1.
        let rho_t = clock_free_evolve(&clock, &rho0, 1.0).unwrap();
        let est = povm_mean_rate(&rho_t, &clock, &rho0, 1.0, 64).unwrap();
        assert_abs_diff_eq!(est.s, 1.0, epsilon = 1e-8);
        assert_eq!(est.method, RateMethod::PovmMean);
        // Dilated evolution: the two estimators agree to the coupling scale.
        let state = CMDensity::pure(PureCMState::single(packet(0.5, 0.25, 0.0)));
        let m = 12.0;
        let report = exact_flat_space_evolve(&state, &clock, m, 1.0, 256).unwrap();
        let fitted = fit_rate_factor(&report.rho_clock, &clock, &rho0, 1.0).unwrap();
        let povm_est = povm_mean_rate(&report.rho_clock, &clock, &rho0, 1.0, 64).unwrap();
        assert_abs_diff_eq!(povm_est.s, fitted.s, epsilon = 1e-5);
        // No harmonic, no phase.
        let mixed = DMatrix::<Complex64>::identity(2, 2) * Complex64::new(0.5, 0.0);
        let err = povm_mean_rate(&mixed, &clock, &mixed, 1.0, 64).unwrap_err();
        assert!(matches!(err, Error::DegenerateState(_)), "{err}");
    }

    #[test]
    fn kinematic_rates_are_mechanism_independent() {
        let clocks = [
            two_level_clock(1.0).unwrap(),
            uniform_ladder_clock(1.0, 5).unwrap(),
        ];
        let rho_cm = CMDensity::pure(PureCMState::single(packet(2.0, 1.0, 0.0)));
        let decomp = decompose_hamiltonian(200.0, 0.0, OrderingKind::Weyl).unwrap();
        let report = universality_check(&clocks, &rho_cm, &decomp, 1.0, 1e-6).unwrap();
        assert!(report.verdict, "deviation {}", report.max_relative_deviation);
        assert!(report.max_relative_deviation < 1e-6);
        // Identical mechanisms are indistinguishable outright.
        let twins = [two_level_clock(1.0).unwrap(), two_level_clock(1.0).unwrap()];
        let report = universality_check(&twins, &rho_cm, &decomp, 1.0, 1e-6).unwrap();
        assert!(report.max_relative_deviation < 1e-14);
    }

    #[test]
    fn gravitational_rates_depend_on_the_mechanism() {
        let clocks = [
            two_level_clock(1.0).unwrap(),
            two_level_clock(1.0).unwrap().with_kappa(0.5).unwrap(),
        ];
        let g = 1e-4;
        let x_mean = 2.0;
        let rho_cm = CMDensity::pure(PureCMState::single(packet(0.0, 50.0, x_mean)));
        let decomp = decompose_hamiltonian(1e6, g, OrderingKind::Weyl).unwrap();
        let report = universality_check(&clocks, &rho_cm, &decomp, 1.0, 1e-6).unwrap();
        assert!(!report.verdict);
        assert_relative_eq!(
            report.max_relative_deviation,
            0.5 * g * x_mean,
            max_relative = 1e-3
        );
    }

    #[test]
    fn dilation_measure_limits_and_phase_sensitivity() {
        let clock = two_level_clock(1.0).unwrap();
        let decomp = decompose_hamiltonian(12.5, 0.0, OrderingKind::Weyl).unwrap();
        let theta = std::f64::consts::FRAC_PI_4;
        let sigma = 0.25;

        // Identical branches: superposition equals the mixture.
        let p1 = packet(0.5, sigma, 0.0);
        let m = quantum_dilation_measure(theta, 0.3, &p1, &p1.clone(), &clock, &decomp, 1.0)
            .unwrap();
        assert!(m.abs() < 1e-10, "measure {m}");

        // Momentum-disjoint branches: interference cannot reach the density.
        let far = packet(0.5 + 14.0 * sigma, sigma, 0.0);
        let m = quantum_dilation_measure(theta, 0.9, &p1, &far, &clock, &decomp, 1.0).unwrap();
        assert!(m.abs() < 1e-10, "measure {m}");

        // Overlap 1/2 via position displacement: the relative phase moves
        // the momentum density, so the measure is phi-dependent.
        let dx = (2.0 * (2.0_f64).ln()).sqrt() / sigma;
        let b1 = packet(0.5, sigma, -0.5 * dx);
        let b2 = packet(0.5, sigma, 0.5 * dx);
        let overlap = PureCMState::single(b1.clone())
            .overlap(&PureCMState::single(b2.clone()))
            .norm();
        assert_relative_eq!(overlap, 0.5, max_relative = 1e-12);
        let m0 = quantum_dilation_measure(theta, 0.0, &b1, &b2, &clock, &decomp, 1.0).unwrap();
        let mpi = quantum_dilation_measure(
            theta,
            std::f64::consts::PI,
            &b1,
            &b2,
            &clock,
            &decomp,
            1.0,
        )
        .unwrap();
        assert!((m0 - mpi).abs() > 1e-8, "phase sensitivity {}", m0 - mpi);
    }

    #[test]
    fn dilation_measure_shrinks_monotonically_with_overlap() {
        // For momentum-displaced branches the measure closed form is
        // (sigma^2/m^2) ln(1/ov) ov/(1+ov): it peaks near ov = 0.27 and
        // decays to zero monotonically below that, which is the regime
        // this ladder walks.
        let clock = two_level_clock(1.0).unwrap();
        let decomp = decompose_hamiltonian(12.5, 0.0, OrderingKind::Weyl).unwrap();
        let theta = std::f64::consts::FRAC_PI_4;
        let sigma = 0.25;
        let overlaps = [0.25_f64, 0.15, 0.1, 0.05, 0.02];
        let mut magnitudes = Vec::new();
        for &ov in &overlaps {
            // Momentum displacement around 0.5 with |<1|2>| = ov.
            let dp = sigma * (8.0 * (1.0 / ov).ln()).sqrt();
            let b1 = packet(0.5 - 0.5 * dp, sigma, 0.0);
            let b2 = packet(0.5 + 0.5 * dp, sigma, 0.0);
            let got = PureCMState::single(b1.clone())
                .overlap(&PureCMState::single(b2.clone()))
                .norm();
            assert_relative_eq!(got, ov, max_relative = 1e-10);
            let m =
                quantum_dilation_measure(theta, 0.0, &b1, &b2, &clock, &decomp, 1.0).unwrap();
            magnitudes.push(m.abs());
        }
        for pair in magnitudes.windows(2) {
            assert!(
                pair[0] > pair[1],
                "measure magnitudes not monotone: {magnitudes:?}"
            );
        }
    }

    #[test]
    fn coherent_demo_distinguishes_classical_pairs() {
        // Degenerate decomposition: beta = alpha.
        let same = coherent_discrimination_demo(
            Complex64::new(0.7, 0.2),
            Complex64::new(0.7, 0.2),
            1.0,
        )
        .unwrap();
        assert_eq!(same.momentum_l1_distance, 0.0);
        assert_eq!(same.measure, 0.0);
        assert_relative_eq!(same.overlap, 1.0, max_relative = 1e-12);

        // Far separation along the position axis: same momentum density,
        // so the measure vanishes identically.
        let far = coherent_discrimination_demo(
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 9.0),
            1.0,
        )
        .unwrap();
        assert!(far.overlap < 1e-15);
        assert!(far.measure.abs() < 1e-10, "measure {}", far.measure);

        // alpha = 0, beta = 1: overlap e^{-1/2}, distinct momentum
        // densities, nonzero measure for a classical pair.
        let demo = coherent_discrimination_demo(
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            1.0,
        )
        .unwrap();
        assert_relative_eq!(demo.overlap, (-0.5_f64).exp(), max_relative = 1e-10);
        assert!(demo.momentum_l1_distance > 1e-3);
        assert!(demo.measure.abs() > 1e-8, "measure {}", demo.measure);
    }

    #[test]
    fn mechanism_table_scales_with_kappa() {
        let clock = two_level_clock(1.0).unwrap();
        let g = 1e-4;
        let rho_cm = CMDensity::pure(PureCMState::single(packet(0.0, 50.0, 2.0)));
        let table =
            mechanism_sensitivity_demo(&[0.0, 0.5, 1.0], &rho_cm, &clock, g, 3.0).unwrap();
        for &(kappa, rate) in &table {
            assert_abs_diff_eq!(rate, 1.0 + (1.0 + kappa) * g * 2.0, epsilon = 1e-8);
        }
        assert!(table[0].1 < table[1].1 && table[1].1 < table[2].1);
        // No field, no kappa dependence.
        let flat = mechanism_sensitivity_demo(&[0.0, 1.0], &rho_cm, &clock, 0.0, 3.0).unwrap();
        assert_abs_diff_eq!(flat[0].1, flat[1].1, epsilon = 1e-12);
    }
}
