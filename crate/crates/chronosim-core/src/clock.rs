//! Internal clock models: finite-dimensional systems whose energy gaps tick
//! proper time, plus the covariant time observable built on a commensurate
//! spectrum.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

/// A finite-dimensional clock: its spectrum, the state it starts in, and a
/// mechanism parameter `kappa` that scales how strongly gravity couples to
/// this particular clock (0 is the universal value).
#[derive(Debug, Clone)]
pub struct ClockModel {
    energies: Vec<f64>,
    initial: DVector<Complex64>,
    kappa: f64,
}

impl ClockModel {
    /// `energies` must be finite, non-negative and strictly increasing, with
    /// at least two levels; `initial` is normalised (zero vectors are
    /// degenerate).
    pub fn new(energies: Vec<f64>, initial: DVector<Complex64>, kappa: f64) -> Result<Self> {
        if energies.len() < 2 {
            return Err(Error::invalid("a clock needs at least two levels"));
        }
        for (i, e) in energies.iter().enumerate() {
            if !e.is_finite() || *e < 0.0 {
                return Err(Error::invalid(format!("energy {i} must be finite and non-negative, got {e}")));
            }
            if i > 0 && *e <= energies[i - 1] {
                return Err(Error::invalid("energies must be strictly increasing"));
            }
        }
        if initial.len() != energies.len() {
            return Err(Error::Shape(format!(
                "initial state has dimension {}, spectrum has {}",
                initial.len(),
                energies.len()
            )));
        }
        if !kappa.is_finite() {
            return Err(Error::invalid("kappa must be finite"));
        }
        let norm = initial.norm();
        if norm < 1e-12 {
            return Err(Error::DegenerateState("clock initial state has zero norm".into()));
        }
        Ok(ClockModel {
            energies,
            initial: initial.unscale(norm),
            kappa,
        })
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn initial_state(&self) -> &DVector<Complex64> {
        &self.initial
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn with_kappa(mut self, kappa: f64) -> Result<Self> {
        if !kappa.is_finite() {
            return Err(Error::invalid("kappa must be finite"));
        }
        self.kappa = kappa;
        Ok(self)
    }

    /// Diagonal clock Hamiltonian.
    pub fn hamiltonian(&self) -> DMatrix<Complex64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.dim(),
            self.energies.iter().map(|e| Complex64::new(*e, 0.0)),
        ))
    }

    pub fn initial_density(&self) -> DMatrix<Complex64> {
        &self.initial * self.initial.adjoint()
    }

    /// Largest common frequency unit of the gaps: every level is an integer
    /// multiple of this. Fails with an unsupported-spectrum error when the
    /// gaps share no common unit (incommensurate spectrum).
    pub fn base_frequency(&self) -> Result<f64> {
        let gaps: Vec<f64> = self.energies.windows(2).map(|w| w[1] - w[0]).collect();
        let max_gap = gaps.iter().fold(0.0_f64, |a, &b| a.max(b));
        let mut g = 0.0;
        for &gap in &gaps {
            g = float_gcd(g, gap, 1e-9 * max_gap);
        }
        if g < 1e-6 * max_gap {
            return Err(Error::UnsupportedSpectrum(
                "energy gaps share no common unit; the spectrum is incommensurate".into(),
            ));
        }
        for &gap in &gaps {
            let ratio = gap / g;
            if (ratio - ratio.round()).abs() > 1e-6 {
                return Err(Error::UnsupportedSpectrum(format!(
                    "gap {gap} is not an integer multiple of the common unit {g}"
                )));
            }
        }
        Ok(g)
    }

    /// Recurrence period `2 pi / base_frequency`.
    pub fn period(&self) -> Result<f64> {
        Ok(2.0 * std::f64::consts::PI / self.base_frequency()?)
    }
}

fn float_gcd(a: f64, b: f64, tol: f64) -> f64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b > tol {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// Two levels split by `omega`, starting in the balanced superposition.
pub fn two_level_clock(omega: f64) -> Result<ClockModel> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::invalid(format!("omega must be positive, got {omega}")));
    }
    let amp = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    ClockModel::new(vec![0.0, omega], DVector::from_element(2, amp), 0.0)
}

/// Uniform ladder of `dim` levels spaced by `omega`, starting in the
/// balanced superposition of all levels.
pub fn uniform_ladder_clock(omega: f64, dim: usize) -> Result<ClockModel> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::invalid(format!("omega must be positive, got {omega}")));
    }
    if dim < 2 {
        return Err(Error::invalid(format!("ladder needs at least 2 levels, got {dim}")));
    }
    let energies = (0..dim).map(|k| k as f64 * omega).collect();
    let amp = Complex64::new((dim as f64).sqrt().recip(), 0.0);
    ClockModel::new(energies, DVector::from_element(dim, amp), 0.0)
}

/// Free internal evolution `rho -> e^(-iHt) rho e^(iHt)` for the diagonal
/// clock Hamiltonian; exact phase rotation of the matrix elements.
pub fn clock_free_evolve(clock: &ClockModel, rho: &DMatrix<Complex64>, t: f64) -> Result<DMatrix<Complex64>> {
    let d = clock.dim();
    if rho.nrows() != d || rho.ncols() != d {
        return Err(Error::Shape(format!(
            "clock state must be {d} x {d}, got {} x {}",
            rho.nrows(),
            rho.ncols()
        )));
    }
    let mut out = rho.clone();
    for n in 0..d {
        for m in 0..d {
            let phase = -(clock.energies[n] - clock.energies[m]) * t;
            out[(n, m)] *= Complex64::from_polar(1.0, phase);
        }
    }
    Ok(out)
}

/// Covariant time observable: `n` uniformly spaced outcomes over one period,
/// with effects `(d/n) |tau_k><tau_k|` built from the phase states
/// `|tau> = d^(-1/2) sum_n e^(-i e_n tau) |e_n>`.
#[derive(Debug, Clone)]
pub struct TimePOVM {
    outcomes: Vec<f64>,
    effects: Vec<DMatrix<Complex64>>,
    period: f64,
}

impl TimePOVM {
    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn effects(&self) -> &[DMatrix<Complex64>] {
        &self.effects
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Outcome probabilities `Tr(E_k rho)` for a clock state.
    pub fn distribution(&self, rho: &DMatrix<Complex64>) -> Result<Vec<(f64, f64)>> {
        let d = self.effects[0].nrows();
        if rho.nrows() != d || rho.ncols() != d {
            return Err(Error::Shape(format!(
                "clock state must be {d} x {d}, got {} x {}",
                rho.nrows(),
                rho.ncols()
            )));
        }
        Ok(self
            .outcomes
            .iter()
            .zip(&self.effects)
            .map(|(&tau, e)| {
                let p: Complex64 = (e * rho).diagonal().iter().sum();
                (tau, p.re)
            })
            .collect())
    }
}

/// Builds the covariant time observable for a commensurate clock.
///
/// `n_outcomes` must be at least the clock dimension, and must exceed the
/// spectral span in units of the base frequency or the phase states alias
/// and the effects cannot resolve the identity.
pub fn covariant_time_povm(clock: &ClockModel, n_outcomes: usize) -> Result<TimePOVM> {
    let d = clock.dim();
    if n_outcomes < d {
        return Err(Error::invalid(format!(
            "need at least {d} outcomes for a {d}-level clock, got {n_outcomes}"
        )));
    }
    let base = clock.base_frequency()?;
    let span = ((clock.energies[d - 1] - clock.energies[0]) / base).round() as usize;
    if n_outcomes <= span {
        return Err(Error::UnsupportedSpectrum(format!(
            "{n_outcomes} outcomes alias a spectrum spanning {span} base-frequency units; \
             need more than {span}"
        )));
    }
    let period = 2.0 * std::f64::consts::PI / base;
    let scale = d as f64 / n_outcomes as f64;
    let mut outcomes = Vec::with_capacity(n_outcomes);
    let mut effects = Vec::with_capacity(n_outcomes);
    for k in 0..n_outcomes {
        let tau = k as f64 * period / n_outcomes as f64;
        let phase_state = DVector::from_iterator(
            d,
            clock
                .energies
                .iter()
                .map(|e| Complex64::from_polar((d as f64).sqrt().recip(), -e * tau)),
        );
        let effect = (&phase_state * phase_state.adjoint()).scale(scale);
        outcomes.push(tau);
        effects.push(effect);
    }
    Ok(TimePOVM { outcomes, effects, period })
}
