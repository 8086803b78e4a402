//! Weak-field decomposition of the clock Hamiltonian and the expectation
//! engine for ordered centre-of-mass observables.
//!
//! A clock of rest mass `m` moving slowly in a weak uniform field `g`
//! (internal units, `hbar = c = 1`) has total Hamiltonian
//!
//! ```text
//! H ~ H_clock + H_cm + H_clock (x) V1 + H_clock^2 (x) V2
//!
//! H_cm = m + p^2/2m + m g x + (3g/2m)  :p^2 x:
//! V1   =   - p^2/2m^2 +   g x - (3g/2m^2) :p^2 x:
//! V2   =   + p^2/2m^3         + (3g/2m^3) :p^2 x:
//! ```
//!
//! where `:p^2 x:` is the mixed monomial read through a chosen operator
//! ordering (Weyl by default). `V1` carries the first-order fractional
//! redshift of the clock rate; `V2` the second-order correction. With
//! `g = 0` every position-dependent monomial drops exactly and the split
//! reduces to the special-relativistic expansion of `sqrt(m^2 + p^2)`.
//!
//! Expectations of ordered polynomials come in two routes:
//!
//! * [`ExpectationMethod::Operator`] evaluates the defining arrangement
//!   average as operator words on a grid, or the exact normal form against
//!   closed-form Gaussian moments for packet states.
//! * [`ExpectationMethod::Integral`] Riemann-sums a phase-space double
//!   integral on a grid. The mixed Weyl `p^2 x` monomial uses the
//!   plain-coordinate kernel `(3 x p^2 - i hbar p) / (6 pi hbar)` verbatim.
//!   Because that kernel carries the bare coordinate `x` rather than the
//!   midpoint `(x + x')/2`, the pairing it induces reproduces
//!   momentum-left ordered traces, and for the Weyl arrangement average it
//!   differs by exactly `-(4/3) i hbar <p>`. The offset is purely
//!   imaginary, vanishes on momentum-centered states, and is reported as
//!   computed rather than corrected. Every other monomial goes through the
//!   exact normal form and plain product kernels, which aligns the two
//!   routes to grid accuracy.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::grid::GridSpec;
use crate::operators::{ordered_poly_matrix, trace_with};
use crate::ordering::{
    order_monomial, NormalPolynomial, OrderedMonomial, OrderedPolynomial, OrderingKind,
};
use crate::states::{CMDensity, DensityRep};
use crate::{Error, Result};

/// The three ordered polynomials of the weak-field split, tagged with the
/// parameters that produced them.
#[derive(Debug, Clone)]
pub struct HamiltonianDecomposition {
    mass: f64,
    gravity: f64,
    ordering: OrderingKind,
    h_cm: OrderedPolynomial,
    v1: OrderedPolynomial,
    v2: OrderedPolynomial,
}

/// Splits the weak-field Hamiltonian at fixed `mass` and local acceleration
/// `gravity`, reading every mixed `p^2 x` monomial through `ordering`.
///
/// `gravity = 0` produces the flat-space special case with no
/// position-dependent monomials at all (exact, not a numerical limit).
pub fn decompose_hamiltonian(
    mass: f64,
    gravity: f64,
    ordering: OrderingKind,
) -> Result<HamiltonianDecomposition> {
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::invalid(format!(
            "mass must be positive and finite, got {mass}"
        )));
    }
    if !gravity.is_finite() {
        return Err(Error::invalid(format!(
            "gravitational acceleration must be finite, got {gravity}"
        )));
    }
    if let OrderingKind::Lambda(l) = ordering {
        if !(l.is_finite() && (0.0..=1.0).contains(&l)) {
            return Err(Error::invalid(format!(
                "ordering parameter lambda must lie in [0, 1], got {l}"
            )));
        }
    }
    let m = mass;
    let g = gravity;
    let mono = |coeff, p_pow, x_pow| OrderedMonomial {
        coeff,
        p_pow,
        x_pow,
    };
    let mut h_cm = vec![mono(m, 0, 0), mono(0.5 / m, 2, 0)];
    let mut v1 = vec![mono(-0.5 / (m * m), 2, 0)];
    let mut v2 = vec![mono(0.5 / (m * m * m), 2, 0)];
    if g != 0.0 {
        h_cm.push(mono(m * g, 0, 1));
        h_cm.push(mono(1.5 * g / m, 2, 1));
        v1.push(mono(g, 0, 1));
        v1.push(mono(-1.5 * g / (m * m), 2, 1));
        v2.push(mono(1.5 * g / (m * m * m), 2, 1));
    }
    Ok(HamiltonianDecomposition {
        mass,
        gravity,
        ordering,
        h_cm: OrderedPolynomial::new(ordering, h_cm),
        v1: OrderedPolynomial::new(ordering, v1),
        v2: OrderedPolynomial::new(ordering, v2),
    })
}

impl HamiltonianDecomposition {
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }

    pub fn ordering(&self) -> OrderingKind {
        self.ordering
    }

    /// Kinematic part, including the rest energy `m`.
    pub fn h_cm(&self) -> &OrderedPolynomial {
        &self.h_cm
    }

    /// Couples to the clock Hamiltonian; its expectation is the first-order
    /// fractional rate shift.
    pub fn v1(&self) -> &OrderedPolynomial {
        &self.v1
    }

    /// Couples to the squared clock Hamiltonian.
    pub fn v2(&self) -> &OrderedPolynomial {
        &self.v2
    }

    /// `(<V1>, <V2>)` on `state` under the requested expectation method.
    pub fn coupling_expectations(
        &self,
        state: &CMDensity,
        method: ExpectationMethod,
    ) -> Result<(Complex64, Complex64)> {
        Ok((
            expectation_of_ordered(&self.v1, state, method)?,
            expectation_of_ordered(&self.v2, state, method)?,
        ))
    }
}

/// How to evaluate the expectation of an ordered polynomial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpectationMethod {
    /// Operator words on grids, exact normal form plus closed-form Gaussian
    /// moments on packet states.
    Operator,
    /// Phase-space double integral on a grid density.
    Integral,
}

/// Expectation of `poly` on `state`.
///
/// The two methods agree (to grid accuracy) for every monomial except the
/// single verbatim-kernel case discussed at module level, whose offset
/// `-(4/3) i hbar <p>` vanishes on momentum-centered states.
pub fn expectation_of_ordered(
    poly: &OrderedPolynomial,
    state: &CMDensity,
    method: ExpectationMethod,
) -> Result<Complex64> {
    match method {
        ExpectationMethod::Operator => match state.rep() {
            DensityRep::Grid { matrix, grid } => {
                let op = ordered_poly_matrix(poly, grid)?;
                Ok(trace_with(&op, matrix))
            }
            _ => {
                let nf = poly.normal_form()?;
                let mut acc = Complex64::new(0.0, 0.0);
                for (x_pow, p_pow, coeff) in nf.with_hbar(1.0) {
                    acc += coeff * state.moment(x_pow, p_pow)?;
                }
                Ok(acc)
            }
        },
        ExpectationMethod::Integral => {
            let Some((matrix, grid)) = state.grid_matrix() else {
                return Err(Error::invalid(
                    "the integral expectation needs a grid density; sample packet states \
                     with to_grid first",
                ));
            };
            let pairing = kirkwood_pairing(matrix, grid);
            let mut acc = Complex64::new(0.0, 0.0);
            for t in &poly.terms {
                acc += integral_monomial(t.p_pow, t.x_pow, poly.ordering, &pairing, grid)?
                    .scale(t.coeff);
            }
            Ok(acc)
        }
    }
}

/// `B[i, k] = dx dp e^{-i p_k x_i} sum_j rho[i, j] e^{+i p_k x_j}`.
///
/// Contracting a kernel `K(x, p)` with `B` Riemann-sums the double integral
/// `int dp dx dx' K(x, p) e^{-i p (x - x')} <x|rho|x'>`; the stored grid
/// density already carries one factor of `dx` relative to the continuum
/// position kernel, which is why only `dx dp` appears here.
fn kirkwood_pairing(rho: &DMatrix<Complex64>, grid: &GridSpec) -> DMatrix<Complex64> {
    let n = grid.n();
    let xs = grid.xs();
    let ps = grid.ps();
    let mut phases = DMatrix::<Complex64>::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            phases[(j, k)] = Complex64::new(0.0, ps[k] * xs[j]).exp();
        }
    }
    let mut b = rho * &phases;
    let scale = grid.dx() * grid.dp();
    for i in 0..n {
        for k in 0..n {
            b[(i, k)] *= phases[(i, k)].conj() * scale;
        }
    }
    b
}

/// Unit-coefficient integral-route value of one ordered monomial.
fn integral_monomial(
    p_pow: u32,
    x_pow: u32,
    ordering: OrderingKind,
    pairing: &DMatrix<Complex64>,
    grid: &GridSpec,
) -> Result<Complex64> {
    if matches!(ordering, OrderingKind::Weyl) && p_pow == 2 && x_pow == 1 {
        // Verbatim kernel, bare coordinate and all; see the module docs for
        // the exact -(4/3) i hbar <p> offset this reading implies.
        let xs = grid.xs();
        let ps = grid.ps();
        let n = grid.n();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for k in 0..n {
                let kern = Complex64::new(3.0 * xs[i] * ps[k] * ps[k], -ps[k]);
                acc += kern * pairing[(i, k)];
            }
        }
        return Ok(acc / (6.0 * PI));
    }
    let nf = order_monomial(p_pow, x_pow, ordering)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for (b_p, a_x, coeff) in momentum_left_terms(&nf) {
        acc += coeff * plain_kernel_sum(pairing, grid, a_x, b_p);
    }
    Ok(acc)
}

/// `sum_{i,k} x_i^a p_k^b B[i, k] / (2 pi)`: the plain-coordinate pairing of
/// the product kernel `x^a p^b`, equal to `Tr(rho p^b x^a)` in the continuum.
fn plain_kernel_sum(
    pairing: &DMatrix<Complex64>,
    grid: &GridSpec,
    x_pow: u32,
    p_pow: u32,
) -> Complex64 {
    let xs = grid.xs();
    let ps = grid.ps();
    let n = grid.n();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let xa = xs[i].powi(x_pow as i32);
        for k in 0..n {
            acc += xa * ps[k].powi(p_pow as i32) * pairing[(i, k)];
        }
    }
    acc / (2.0 * PI)
}

/// Rewrites an x-left normal form as momentum-left products via
/// `x^a p^b = sum_k C(a,k) C(b,k) k! (i hbar)^k p^{b-k} x^{a-k}` (hbar = 1).
/// Returns `(p_pow, x_pow, coeff)` triples.
fn momentum_left_terms(nf: &NormalPolynomial) -> Vec<(u32, u32, Complex64)> {
    let mut map: BTreeMap<(u32, u32), Complex64> = BTreeMap::new();
    for (a, b, c) in nf.with_hbar(1.0) {
        for k in 0..=a.min(b) {
            let combo = binomial(a, k) * binomial(b, k) * factorial(k);
            let phase = match k % 4 {
                0 => Complex64::new(1.0, 0.0),
                1 => Complex64::new(0.0, 1.0),
                2 => Complex64::new(-1.0, 0.0),
                _ => Complex64::new(0.0, -1.0),
            };
            *map.entry((b - k, a - k))
                .or_insert(Complex64::new(0.0, 0.0)) += c * combo * phase;
        }
    }
    map.into_iter()
        .filter(|(_, c)| c.norm() > 0.0)
        .map(|((p, x), c)| (p, x, c))
        .collect()
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(|i| i as f64).product::<f64>().max(1.0)
}
