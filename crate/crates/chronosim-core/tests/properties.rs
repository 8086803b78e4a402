//! Randomized structure-preservation checks over the public API: things
//! that must hold for every valid input, not just the curated scenarios.

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use chronosim_core::clock::{
    clock_free_evolve, covariant_time_povm, two_level_clock, uniform_ladder_clock, ClockModel,
};
use chronosim_core::evolve::exact_flat_space_evolve;
use chronosim_core::grid::GridSpec;
use chronosim_core::hamiltonian::decompose_hamiltonian;
use chronosim_core::observables::{fit_rate_factor, quantum_dilation_measure, readout_distribution};
use chronosim_core::ordering::OrderingKind;
use chronosim_core::scenario::{
    parse_config, ClockConfig, ClockKind, CmConfig, EvolutionConfig, GravityConfig, GridConfig,
    PacketConfig, ScenarioConfig, UnitsConfig,
};
use chronosim_core::states::{CMDensity, PureCMState, WavePacket};

// ---------------------------------------------------------------------------
// Strategies
// ---------------------------------------------------------------------------

/// Amplitude bounded away from zero so superpositions stay normalizable.
fn amp() -> impl Strategy<Value = Complex64> {
    ((-1.0f64..1.0), (-1.0f64..1.0))
        .prop_filter_map("amplitude too small", |(re, im)| {
            let z = Complex64::new(re, im);
            (z.norm() >= 0.3).then_some(z)
        })
}

/// Packet in the band the fixed test grid resolves.
fn packet() -> impl Strategy<Value = WavePacket> {
    ((-0.2f64..0.2), (0.2f64..0.3), (-1.0f64..1.0))
        .prop_map(|(p_mean, p_spread, x_mean)| WavePacket::new(p_mean, p_spread, x_mean, 0.0).unwrap())
}

fn superposition(max_terms: usize) -> impl Strategy<Value = PureCMState> {
    prop::collection::vec((amp(), packet()), 1..=max_terms).prop_filter_map(
        "degenerate superposition",
        |terms| PureCMState::new(terms).ok(),
    )
}

fn any_clock() -> impl Strategy<Value = ClockModel> {
    ((0.2f64..0.8), 2usize..=4, prop::bool::ANY).prop_map(|(omega, dim, ladder)| {
        if ladder {
            uniform_ladder_clock(omega, dim).unwrap()
        } else {
            two_level_clock(omega).unwrap()
        }
    })
}

/// Hermitian, positive, unit-trace matrix carved out of a random 4x4 seed.
fn density_from_seed(seed: &[(f64, f64)], dim: usize) -> DMatrix<Complex64> {
    let a = DMatrix::from_iterator(4, 4, seed.iter().map(|&(re, im)| Complex64::new(re, im)));
    let block = a.view((0, 0), (dim, dim)).into_owned();
    let mut rho = &block * block.adjoint();
    // Tiny ridge keeps the trace away from zero for near-singular draws.
    for i in 0..dim {
        rho[(i, i)] += Complex64::new(1e-3, 0.0);
    }
    let trace: Complex64 = rho.diagonal().iter().sum();
    rho / trace
}

fn sorted_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let mut vals: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

// ---------------------------------------------------------------------------
// Evolution invariants
// ---------------------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Flat-space evolution touches only the clock factor; trace and
    /// Hermiticity of the reduced state must survive exactly.
    #[test]
    fn flat_evolution_preserves_trace_and_positivity(
        psi in superposition(3),
        clock in any_clock(),
        mass in 5.0f64..50.0,
        t in 0.0f64..2.0,
    ) {
        let state = CMDensity::pure(psi);
        let report = exact_flat_space_evolve(&state, &clock, mass, t, 256).unwrap();
        prop_assert!(report.diagnostics["trace_drift"] < 1e-10);
        prop_assert!(report.diagnostics["hermiticity_defect"] < 1e-10);
        let min_eig = sorted_eigenvalues(&report.rho_clock)[0];
        prop_assert!(min_eig > -1e-10, "negative weight {min_eig}");
    }

    /// Free clock evolution is unitary on the internal space: the spectrum
    /// of the clock state is untouched.
    #[test]
    fn free_clock_evolution_is_isospectral(
        clock in any_clock(),
        seed in prop::collection::vec(((-1.0f64..1.0), (-1.0f64..1.0)), 16),
        t in 0.0f64..20.0,
    ) {
        let rho = density_from_seed(&seed, clock.dim());
        let evolved = clock_free_evolve(&clock, &rho, t).unwrap();
        let before = sorted_eigenvalues(&rho);
        let after = sorted_eigenvalues(&evolved);
        for (b, a) in before.iter().zip(&after) {
            prop_assert!((b - a).abs() < 1e-10, "spectrum moved: {b} -> {a}");
        }
    }

    /// Every covariant readout is a probability distribution.
    #[test]
    fn readout_distributions_normalize(
        clock in any_clock(),
        entries in prop::collection::vec(((-1.0f64..1.0), (-1.0f64..1.0)), 16),
    ) {
        let rho = density_from_seed(&entries, clock.dim());
        let povm = covariant_time_povm(&clock, 4 * clock.dim()).unwrap();
        let dist = readout_distribution(&rho, &povm).unwrap();
        let total: f64 = dist.iter().map(|&(_, p)| p).sum();
        prop_assert!((total - 1.0).abs() < 1e-10, "total probability {total}");
        for &(_, p) in &dist {
            prop_assert!(p > -1e-12, "negative outcome probability {p}");
        }
    }

    /// A clock state evolved for rescaled time `s t` must fit back to `s`.
    #[test]
    fn rate_fit_recovers_planted_rescaling(
        clock in any_clock(),
        s in 0.6f64..1.4,
        t in 0.3f64..1.2,
    ) {
        let rho0 = clock.initial_density();
        let rho_t = clock_free_evolve(&clock, &rho0, s * t).unwrap();
        let est = fit_rate_factor(&rho_t, &clock, &rho0, t).unwrap();
        prop_assert!((est.s - s).abs() < 1e-9, "planted {s}, fitted {}", est.s);
        prop_assert!(est.residual < 1e-9);
    }
}

// ---------------------------------------------------------------------------
// Dephasing and phase invariances (heavier: grid-backed)
// ---------------------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    /// Momentum dephasing erases nothing a clock can see: pure input and
    /// dephased input give the same readout distribution.
    #[test]
    fn readout_survives_momentum_dephasing(
        psi in superposition(2),
        ladder in prop::bool::ANY,
        t in 0.2f64..1.5,
    ) {
        // dp stays strictly below (narrowest spread) / 8.
        let half = 8.5 * std::f64::consts::PI / 0.2;
        let grid = GridSpec::new(256, -half, half).unwrap();
        let clock = if ladder {
            uniform_ladder_clock(1.0, 3).unwrap()
        } else {
            two_level_clock(1.0).unwrap()
        };
        let rho = CMDensity::pure(psi).to_grid(&grid).unwrap();
        let dephased = rho.dephase_momentum(&grid).unwrap();
        let povm = covariant_time_povm(&clock, 12).unwrap();

        let a = exact_flat_space_evolve(&rho, &clock, 14.0, t, grid.n()).unwrap();
        let b = exact_flat_space_evolve(&dephased, &clock, 14.0, t, grid.n()).unwrap();
        let da = readout_distribution(&a.rho_clock, &povm).unwrap();
        let db = readout_distribution(&b.rho_clock, &povm).unwrap();
        for (&(_, pa), &(_, pb)) in da.iter().zip(&db) {
            prop_assert!((pa - pb).abs() < 1e-12, "readout moved by {}", (pa - pb).abs());
        }
    }

    /// A global phase on the wavefunction is unphysical and must not move
    /// the density matrix.
    #[test]
    fn global_phase_is_unobservable(
        terms in prop::collection::vec((amp(), packet()), 1..=3),
        phase in 0.0f64..std::f64::consts::TAU,
    ) {
        let rotated: Vec<(Complex64, WavePacket)> = terms
            .iter()
            .map(|(a, p)| (a * Complex64::from_polar(1.0, phase), p.clone()))
            .collect();
        let plain = PureCMState::new(terms);
        prop_assume!(plain.is_ok());
        let plain = plain.unwrap();
        let rotated = PureCMState::new(rotated).unwrap();

        let grid = GridSpec::new(128, -40.0, 40.0).unwrap();
        let a = CMDensity::pure(plain).to_grid(&grid).unwrap();
        let b = CMDensity::pure(rotated).to_grid(&grid).unwrap();
        let (ma, _) = a.grid_matrix().unwrap();
        let (mb, _) = b.grid_matrix().unwrap();
        let diff = (ma - mb).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(diff < 1e-12, "density moved by {diff}");
    }

    /// Identical branches admit no superposition-vs-mixture gap, whatever
    /// the weights and phase.
    #[test]
    fn identical_branches_carry_no_signature(
        theta in 0.05f64..1.5,
        phi in 0.0f64..std::f64::consts::TAU,
        pk in packet(),
        mass in 8.0f64..30.0,
    ) {
        let clock = two_level_clock(1.0).unwrap();
        let decomp = decompose_hamiltonian(mass, 0.0, OrderingKind::Weyl).unwrap();
        let measure = quantum_dilation_measure(theta, phi, &pk, &pk, &clock, &decomp, 1.0).unwrap();
        prop_assert!(measure.abs() < 1e-10, "measure {measure}");
    }
}

// ---------------------------------------------------------------------------
// Config grammar round-trip
// ---------------------------------------------------------------------------

fn packet_config() -> impl Strategy<Value = PacketConfig> {
    (
        (-2.0f64..2.0),
        (-2.0f64..2.0),
        (-5.0f64..5.0),
        (0.05f64..4.0),
        (-10.0f64..10.0),
    )
        .prop_map(|(amp_re, amp_im, p_mean, p_spread, x_mean)| PacketConfig {
            amp_re,
            amp_im,
            p_mean,
            p_spread,
            x_mean,
        })
}

fn valid_config() -> impl Strategy<Value = ScenarioConfig> {
    let name = "[a-z][a-z0-9._-]{0,11}";
    let clock = ((0.01f64..10.0), prop::bool::ANY, 2usize..=8, (-2.0f64..2.0)).prop_map(
        |(omega, two_level, dim, kappa)| {
            if two_level {
                ClockConfig { kind: ClockKind::TwoLevel, omega, dim: 2, kappa }
            } else {
                ClockConfig { kind: ClockKind::Oscillator, omega, dim, kappa }
            }
        },
    );
    let ordering = prop_oneof![
        Just(OrderingKind::Weyl),
        (0.0f64..=1.0).prop_map(OrderingKind::Lambda),
    ];
    let method_gravity = prop_oneof![
        // Flat engines; gravity stays off.
        Just(("exact-flat", false)),
        Just(("exact-grid", false)),
        Just(("dyson", false)),
        // Gravitating engines.
        Just(("exact-grid", true)),
        Just(("dyson", true)),
        Just(("grav-limit", true)),
    ];
    (
        proptest::string::string_regex(name).unwrap(),
        (0.1f64..1000.0),
        method_gravity,
        (0.0f64..0.5),
        clock,
        prop::collection::vec(packet_config(), 0..=3),
        prop::option::of(0.0f64..std::f64::consts::FRAC_PI_2),
        (-3.0f64..3.0),
        prop::collection::vec(0.0f64..10.0, 1..=5),
        (2usize..=2048),
        prop::option::of(1.0f64..100.0),
        ordering,
    )
        .prop_map(
            |(name, mass, (method, grav_on), g, clock, mut packets, theta, phi, t_list, n, extent, ordering)| {
                let method = match method {
                    "exact-flat" => chronosim_core::evolve::EvolutionMethod::ExactFlat,
                    "exact-grid" => chronosim_core::evolve::EvolutionMethod::ExactGrid,
                    "dyson" => chronosim_core::evolve::EvolutionMethod::Dyson,
                    _ => chronosim_core::evolve::EvolutionMethod::GravitationalLimit,
                };
                // The two-packet shorthand needs exactly two packets with
                // default amplitudes, matching what the parser rebuilds.
                let theta = theta.filter(|_| packets.len() >= 2);
                if theta.is_some() {
                    packets.truncate(2);
                    for p in &mut packets {
                        p.amp_re = 1.0;
                        p.amp_im = 0.0;
                    }
                }
                ScenarioConfig {
                    name,
                    mass,
                    gravity: GravityConfig {
                        enabled: grav_on,
                        g: if grav_on { g } else { 0.0 },
                    },
                    clock,
                    cm: CmConfig {
                        packets,
                        theta,
                        phi: if theta.is_some() { phi } else { 0.0 },
                    },
                    evolution: EvolutionConfig { method, t_list },
                    grid: GridConfig { n, extent },
                    ordering,
                    output_dir: "out".to_string(),
                    units: UnitsConfig::Internal,
                }
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Any valid config re-parses from its own canonical text, bit for
    /// bit, and hashes identically.
    #[test]
    fn canonical_text_round_trips(cfg in valid_config()) {
        prop_assert!(cfg.validate().is_ok());
        let text = cfg.canonical_text();
        let reparsed = parse_config(&text)
            .map_err(|e| TestCaseError::fail(format!("reparse failed: {e}\n{text}")))?;
        prop_assert_eq!(&reparsed, &cfg);
        prop_assert_eq!(reparsed.config_hash(), cfg.config_hash());
    }
}
