//! Centre-of-mass states: Gaussian wave packets, their finite superpositions
//! and mixtures, and position-grid density matrices.
//!
//! Everything Gaussian is handled in closed form. A packet's momentum- and
//! position-space amplitudes are single complex-Gaussian exponentials, so
//! overlaps and operator moments reduce to integrals of the form
//! `integral of q^k exp(-a q^2 + b q + c) dq`, which satisfy a two-term
//! recursion. Grid representations exist for the operations that have no
//! closed form (dephasing, full composite evolution); a grid density stores
//! the unit-trace discrete matrix whose `(i, j)` entry is `<x_i|rho|x_j> dx`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::grid::{GridSpec, PacketFootprint};
use crate::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Relative tolerance for quadrature-built weight tables: sums must land
/// within this of the expected total or the grid is declared under-resolved.
const WEIGHT_SUM_TOL: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Complex Gaussian exponentials
// ---------------------------------------------------------------------------

/// `exp(-alpha q^2 + beta q + gamma)` with `Re(alpha) > 0`.
///
/// Normalisation constants live inside `gamma` as a real log term, so
/// products of amplitudes are parameter sums.
#[derive(Debug, Clone, Copy)]
struct GaussExp {
    alpha: Complex64,
    beta: Complex64,
    gamma: Complex64,
}

impl GaussExp {
    fn eval(&self, q: f64) -> Complex64 {
        (-self.alpha * q * q + self.beta * q + self.gamma).exp()
    }

    fn conj(&self) -> GaussExp {
        GaussExp {
            alpha: self.alpha.conj(),
            beta: self.beta.conj(),
            gamma: self.gamma.conj(),
        }
    }

    fn product(&self, other: &GaussExp) -> GaussExp {
        GaussExp {
            alpha: self.alpha + other.alpha,
            beta: self.beta + other.beta,
            gamma: self.gamma + other.gamma,
        }
    }

    /// `integral of poly(q) * exp(-alpha q^2 + beta q + gamma) dq` over the
    /// real line. Uses `M_k = mu M_{k-1} + (k-1)/(2 alpha) M_{k-2}` with
    /// `mu = beta / (2 alpha)`.
    fn integrate_poly(&self, poly: &[Complex64]) -> Complex64 {
        let m0 = (std::f64::consts::PI / self.alpha).sqrt()
            * (self.beta * self.beta / (4.0 * self.alpha) + self.gamma).exp();
        let mu = self.beta / (2.0 * self.alpha);
        let half_inv_alpha = 0.5 / self.alpha;
        let mut total = Complex64::new(0.0, 0.0);
        let mut m_prev = Complex64::new(0.0, 0.0);
        let mut m_cur = m0;
        for (k, c) in poly.iter().enumerate() {
            if k > 0 {
                let m_next = mu * m_cur + (k as f64 - 1.0) * half_inv_alpha * m_prev;
                m_prev = m_cur;
                m_cur = m_next;
            }
            total += c * m_cur;
        }
        total
    }
}

fn poly_scaled_derivative_plus_linear(q: &[Complex64], a: Complex64, b: Complex64) -> Vec<Complex64> {
    // i * (q'(p) + q(p) * (a p + b)): one application of x = i d/dp to
    // q(p) exp(...) where the exponent derivative is a p + b.
    let mut out = vec![Complex64::new(0.0, 0.0); q.len() + 1];
    for (k, c) in q.iter().enumerate() {
        if k >= 1 {
            out[k - 1] += I * (k as f64) * c;
        }
        out[k + 1] += I * a * c;
        out[k] += I * b * c;
    }
    out
}

// ---------------------------------------------------------------------------
// Wave packets
// ---------------------------------------------------------------------------

/// Minimum-uncertainty Gaussian wave packet.
///
/// Momentum-space amplitude:
/// `(2 pi s^2)^(-1/4) exp(-(p - p_mean)^2 / (4 s^2) - i p x_mean + i phase)`
/// with `s = p_spread`. The position spread is `1 / (2 s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavePacket {
    p_mean: f64,
    p_spread: f64,
    x_mean: f64,
    phase: f64,
}

impl WavePacket {
    pub fn new(p_mean: f64, p_spread: f64, x_mean: f64, phase: f64) -> Result<Self> {
        if !(p_spread.is_finite() && p_spread > 0.0) {
            return Err(Error::invalid(format!("p_spread must be positive and finite, got {p_spread}")));
        }
        if !(p_mean.is_finite() && x_mean.is_finite() && phase.is_finite()) {
            return Err(Error::invalid("packet parameters must be finite"));
        }
        Ok(WavePacket { p_mean, p_spread, x_mean, phase })
    }

    pub fn p_mean(&self) -> f64 {
        self.p_mean
    }

    pub fn p_spread(&self) -> f64 {
        self.p_spread
    }

    pub fn x_mean(&self) -> f64 {
        self.x_mean
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn x_spread(&self) -> f64 {
        0.5 / self.p_spread
    }

    pub fn footprint(&self) -> PacketFootprint {
        PacketFootprint {
            p_mean: self.p_mean,
            p_spread: self.p_spread,
            x_mean: self.x_mean,
        }
    }

    fn gauss_p(&self) -> GaussExp {
        let s2 = self.p_spread * self.p_spread;
        GaussExp {
            alpha: Complex64::new(0.25 / s2, 0.0),
            beta: Complex64::new(self.p_mean / (2.0 * s2), -self.x_mean),
            gamma: Complex64::new(
                -self.p_mean * self.p_mean / (4.0 * s2)
                    - 0.25 * (2.0 * std::f64::consts::PI * s2).ln(),
                self.phase,
            ),
        }
    }

    fn gauss_x(&self) -> GaussExp {
        let s2 = self.p_spread * self.p_spread;
        GaussExp {
            alpha: Complex64::new(s2, 0.0),
            beta: Complex64::new(2.0 * s2 * self.x_mean, self.p_mean),
            gamma: Complex64::new(
                -s2 * self.x_mean * self.x_mean
                    + 0.25 * (2.0 * s2 / std::f64::consts::PI).ln(),
                self.phase - self.p_mean * self.x_mean,
            ),
        }
    }

    pub fn amplitude_p(&self, p: f64) -> Complex64 {
        self.gauss_p().eval(p)
    }

    pub fn amplitude_x(&self, x: f64) -> Complex64 {
        self.gauss_x().eval(x)
    }

    /// `<self|other>`, in closed form.
    pub fn overlap(&self, other: &WavePacket) -> Complex64 {
        self.gauss_p()
            .conj()
            .product(&other.gauss_p())
            .integrate_poly(&[Complex64::new(1.0, 0.0)])
    }

    /// `<bra| x^a p^b |ket>` with the position operators standing to the left
    /// of the momentum operators. Closed form via `x = i d/dp` in momentum
    /// space.
    fn matrix_element(&self, ket: &WavePacket, x_pow: u32, p_pow: u32) -> Complex64 {
        let kg = ket.gauss_p();
        let mut q = vec![Complex64::new(0.0, 0.0); p_pow as usize + 1];
        q[p_pow as usize] = Complex64::new(1.0, 0.0);
        for _ in 0..x_pow {
            q = poly_scaled_derivative_plus_linear(&q, -2.0 * kg.alpha, kg.beta);
        }
        self.gauss_p().conj().product(&kg).integrate_poly(&q)
    }
}

// ---------------------------------------------------------------------------
// Pure states: finite superpositions of packets
// ---------------------------------------------------------------------------

/// Normalised finite superposition of Gaussian packets.
///
/// Stores the raw amplitudes as given plus the scalar `normalization` that
/// makes the combination unit-norm, computed from the closed-form Gram
/// matrix of the packets. For the two-branch combination
/// `cos(theta) psi_1 + sin(theta) e^(i phi) psi_2` this factor is
/// `(1 + sin(2 theta) Re(e^(i phi) <psi_1|psi_2>))^(-1/2)`.
#[derive(Debug, Clone)]
pub struct PureCMState {
    terms: Vec<(Complex64, WavePacket)>,
    normalization: f64,
}

impl PureCMState {
    pub fn new(terms: Vec<(Complex64, WavePacket)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::invalid("a pure state needs at least one packet"));
        }
        for (c, _) in &terms {
            if !(c.re.is_finite() && c.im.is_finite()) {
                return Err(Error::invalid("packet amplitudes must be finite"));
            }
        }
        let mut norm_sq = 0.0;
        for (ci, pi) in &terms {
            for (cj, pj) in &terms {
                norm_sq += (ci.conj() * cj * pi.overlap(pj)).re;
            }
        }
        if !(norm_sq.is_finite() && norm_sq > 1e-24) {
            return Err(Error::DegenerateState(format!(
                "packet combination has squared norm {norm_sq:e}; the branches cancel"
            )));
        }
        Ok(PureCMState {
            terms,
            normalization: norm_sq.sqrt().recip(),
        })
    }

    pub fn single(packet: WavePacket) -> Self {
        PureCMState {
            terms: vec![(Complex64::new(1.0, 0.0), packet)],
            normalization: 1.0,
        }
    }

    /// Raw amplitude/packet pairs, exactly as handed to the constructor.
    pub fn terms(&self) -> &[(Complex64, WavePacket)] {
        &self.terms
    }

    /// The factor applied to the raw combination to make it unit-norm.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn footprints(&self) -> Vec<PacketFootprint> {
        self.terms.iter().map(|(_, p)| p.footprint()).collect()
    }

    pub fn amplitude_p(&self, p: f64) -> Complex64 {
        let raw: Complex64 = self.terms.iter().map(|(c, pk)| c * pk.amplitude_p(p)).sum();
        self.normalization * raw
    }

    pub fn amplitude_x(&self, x: f64) -> Complex64 {
        let raw: Complex64 = self.terms.iter().map(|(c, pk)| c * pk.amplitude_x(x)).sum();
        self.normalization * raw
    }

    pub fn momentum_density(&self, p: f64) -> f64 {
        self.amplitude_p(p).norm_sqr()
    }

    pub fn position_density(&self, x: f64) -> f64 {
        self.amplitude_x(x).norm_sqr()
    }

    /// `<self|other>`.
    pub fn overlap(&self, other: &PureCMState) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (ci, pi) in &self.terms {
            for (cj, pj) in &other.terms {
                acc += ci.conj() * cj * pi.overlap(pj);
            }
        }
        self.normalization * other.normalization * acc
    }

    /// `<x^a p^b>` with positions ordered left of momenta; exact.
    pub fn moment(&self, x_pow: u32, p_pow: u32) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (ci, pi) in &self.terms {
            for (cj, pj) in &self.terms {
                acc += ci.conj() * cj * pi.matrix_element(pj, x_pow, p_pow);
            }
        }
        self.normalization * self.normalization * acc
    }
}

/// Two-branch combination `cos(theta) psi_1 + sin(theta) e^(i phi) psi_2`,
/// renormalised with the exact overlap. `theta` must lie in `[0, pi/2]`.
pub fn superpose(theta: f64, phi: f64, psi1: &PureCMState, psi2: &PureCMState) -> Result<PureCMState> {
    if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&theta) {
        return Err(Error::invalid(format!("theta must lie in [0, pi/2], got {theta}")));
    }
    if !phi.is_finite() {
        return Err(Error::invalid("phi must be finite"));
    }
    let c1 = Complex64::new(theta.cos(), 0.0) * psi1.normalization;
    let c2 = Complex64::from_polar(theta.sin(), phi) * psi2.normalization;
    let mut terms = Vec::with_capacity(psi1.terms.len() + psi2.terms.len());
    for (c, pk) in &psi1.terms {
        terms.push((c1 * c, *pk));
    }
    for (c, pk) in &psi2.terms {
        terms.push((c2 * c, *pk));
    }
    PureCMState::new(terms)
}

// ---------------------------------------------------------------------------
// Densities
// ---------------------------------------------------------------------------

/// Representation backing a [`CMDensity`].
#[derive(Debug, Clone)]
pub enum DensityRep {
    Pure(PureCMState),
    /// Statistical mixture; weights are positive and sum to exactly 1.
    Mixture(Vec<(f64, PureCMState)>),
    /// Unit-trace discrete matrix, entry `(i, j)` holding `<x_i|rho|x_j> dx`.
    Grid { matrix: DMatrix<Complex64>, grid: GridSpec },
}

/// Centre-of-mass density operator.
#[derive(Debug, Clone)]
pub struct CMDensity {
    rep: DensityRep,
}

impl From<PureCMState> for CMDensity {
    fn from(s: PureCMState) -> Self {
        CMDensity::pure(s)
    }
}

impl From<&PureCMState> for CMDensity {
    fn from(s: &PureCMState) -> Self {
        CMDensity::pure(s.clone())
    }
}

impl CMDensity {
    pub fn pure(state: PureCMState) -> Self {
        CMDensity { rep: DensityRep::Pure(state) }
    }

    /// Statistical mixture. Weights must be non-negative and sum to 1 within
    /// 1e-12; they are rescaled to sum to exactly 1.
    pub fn mixture(components: Vec<(f64, PureCMState)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("a mixture needs at least one component"));
        }
        let mut sum = 0.0;
        for (w, _) in &components {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::invalid(format!("mixture weights must be non-negative, got {w}")));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("mixture weights must sum to 1, got {sum}")));
        }
        let components = components.into_iter().map(|(w, s)| (w / sum, s)).collect();
        Ok(CMDensity { rep: DensityRep::Mixture(components) })
    }

    /// Wraps an explicit grid density matrix. The matrix must be square of
    /// the grid's size, Hermitian to 1e-10 (relative), unit trace to 1e-8,
    /// and positive semidefinite to -1e-10 on the smallest eigenvalue.
    pub fn from_grid(matrix: DMatrix<Complex64>, grid: GridSpec) -> Result<Self> {
        if matrix.nrows() != grid.n() || matrix.ncols() != grid.n() {
            return Err(Error::Shape(format!(
                "grid density must be {0} x {0}, got {1} x {2}",
                grid.n(),
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let scale = matrix.norm().max(1e-300);
        let herm_defect = (&matrix - matrix.adjoint()).norm() / scale;
        if herm_defect > 1e-10 {
            return Err(Error::InvalidOperator(format!(
                "grid density is not Hermitian: relative defect {herm_defect:e}"
            )));
        }
        let trace: Complex64 = matrix.diagonal().iter().sum();
        if (trace.re - 1.0).abs() > 1e-8 || trace.im.abs() > 1e-10 {
            return Err(Error::InvalidOperator(format!(
                "grid density trace is {trace}, expected 1"
            )));
        }
        let herm = (&matrix + matrix.adjoint()).scale(0.5);
        let min_eig = herm
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        if min_eig < -1e-10 {
            return Err(Error::InvalidOperator(format!(
                "grid density has eigenvalue {min_eig:e}; not positive semidefinite"
            )));
        }
        Ok(CMDensity { rep: DensityRep::Grid { matrix, grid } })
    }

    /// Internal constructor for matrices that are PSD/Hermitian by
    /// construction; skips the eigenvalue check.
    pub(crate) fn from_grid_unchecked(matrix: DMatrix<Complex64>, grid: GridSpec) -> Self {
        CMDensity { rep: DensityRep::Grid { matrix, grid } }
    }

    /// Chirped Gaussian sampled straight onto a grid:
    ///
    /// ```text
    /// psi(x) ~ exp(-(x - x_mean)^2 / (4 x_spread^2)
    ///             + i chirp (x - x_mean)^2 + i p_mean (x - x_mean))
    /// ```
    ///
    /// The quadratic phase correlates position with momentum without moving
    /// `<p>` off `p_mean`, which makes these states useful probes of mixed
    /// `x`-`p` observables. The momentum spread widens to
    /// `sqrt(1/(4 x_spread^2) + 4 chirp^2 x_spread^2)`; the grid has to
    /// band-limit that widened spread, not the bare transform width.
    pub fn chirped_gaussian(
        grid: &GridSpec,
        x_mean: f64,
        x_spread: f64,
        p_mean: f64,
        chirp: f64,
    ) -> Result<CMDensity> {
        if !(x_spread.is_finite() && x_spread > 0.0) {
            return Err(Error::invalid(format!(
                "x_spread must be positive and finite, got {x_spread}"
            )));
        }
        if !(x_mean.is_finite() && p_mean.is_finite() && chirp.is_finite()) {
            return Err(Error::invalid(
                "chirped Gaussian parameters must be finite".to_string(),
            ));
        }
        let p_spread =
            (0.25 / (x_spread * x_spread) + 4.0 * chirp * chirp * x_spread * x_spread).sqrt();
        if grid.x_min() > x_mean - 8.0 * x_spread || grid.x_max() < x_mean + 8.0 * x_spread {
            return Err(Error::Resolution(format!(
                "grid [{}, {}] does not cover the chirped packet out to 8 position spreads \
                 around {x_mean} (spread {x_spread})",
                grid.x_min(),
                grid.x_max()
            )));
        }
        if grid.band_edge() < p_mean.abs() + 8.0 * p_spread {
            return Err(Error::Resolution(format!(
                "momentum band edge {:.6} is below |p_mean| + 8 effective spreads = {:.6}; \
                 the chirp widens the momentum support",
                grid.band_edge(),
                p_mean.abs() + 8.0 * p_spread
            )));
        }
        let n = grid.n();
        let dx = grid.dx();
        let mut psi = DVector::<Complex64>::zeros(n);
        for i in 0..n {
            let u = grid.x(i) - x_mean;
            let arg = Complex64::new(
                -u * u / (4.0 * x_spread * x_spread),
                chirp * u * u + p_mean * u,
            );
            psi[i] = arg.exp();
        }
        let norm_sq: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx;
        if norm_sq < 1e-300 {
            return Err(Error::DegenerateState(
                "chirped Gaussian has vanishing norm on this grid".to_string(),
            ));
        }
        psi.scale_mut(1.0 / norm_sq.sqrt());
        let mut matrix = DMatrix::<Complex64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                matrix[(i, j)] = psi[i] * psi[j].conj() * dx;
            }
        }
        Ok(CMDensity::from_grid_unchecked(matrix, grid.clone()))
    }

    pub fn rep(&self) -> &DensityRep {
        &self.rep
    }

    pub fn grid_matrix(&self) -> Option<(&DMatrix<Complex64>, &GridSpec)> {
        match &self.rep {
            DensityRep::Grid { matrix, grid } => Some((matrix, grid)),
            _ => None,
        }
    }

    /// Packet footprints when the representation is packet-based.
    pub fn footprints(&self) -> Option<Vec<PacketFootprint>> {
        match &self.rep {
            DensityRep::Pure(s) => Some(s.footprints()),
            DensityRep::Mixture(cs) => Some(cs.iter().flat_map(|(_, s)| s.footprints()).collect()),
            DensityRep::Grid { .. } => None,
        }
    }

    pub fn trace(&self) -> f64 {
        match &self.rep {
            DensityRep::Pure(_) => 1.0,
            DensityRep::Mixture(cs) => cs.iter().map(|(w, _)| w).sum(),
            DensityRep::Grid { matrix, .. } => matrix.diagonal().iter().map(|z| z.re).sum(),
        }
    }

    /// `<x^a p^b>` (positions left of momenta) for packet representations.
    /// Grid representations are handled by the operator expectation engine
    /// instead.
    pub fn moment(&self, x_pow: u32, p_pow: u32) -> Result<Complex64> {
        match &self.rep {
            DensityRep::Pure(s) => Ok(s.moment(x_pow, p_pow)),
            DensityRep::Mixture(cs) => Ok(cs
                .iter()
                .map(|(w, s)| Complex64::new(*w, 0.0) * s.moment(x_pow, p_pow))
                .sum()),
            DensityRep::Grid { .. } => Err(Error::Unsupported(
                "closed-form moments need a packet representation; use the operator expectation \
                 engine for grid densities"
                    .into(),
            )),
        }
    }

    /// Probability density of momentum `p`. Analytic for packet
    /// representations, linearly interpolated between DFT momenta for grids.
    pub fn momentum_density(&self, p: f64) -> f64 {
        match &self.rep {
            DensityRep::Pure(s) => s.momentum_density(p),
            DensityRep::Mixture(cs) => cs.iter().map(|(w, s)| w * s.momentum_density(p)).sum(),
            DensityRep::Grid { matrix, grid } => {
                let weights = grid_momentum_weights(matrix, grid);
                interp_density(&grid.ps(), &weights, grid.dp(), p)
            }
        }
    }

    /// Probability density of position `x`; interpolated for grids.
    pub fn position_density(&self, x: f64) -> f64 {
        match &self.rep {
            DensityRep::Pure(s) => s.position_density(x),
            DensityRep::Mixture(cs) => cs.iter().map(|(w, s)| w * s.position_density(x)).sum(),
            DensityRep::Grid { matrix, grid } => {
                let weights: Vec<f64> = matrix.diagonal().iter().map(|z| z.re).collect();
                interp_density(&grid.xs(), &weights, grid.dx(), x)
            }
        }
    }

    /// Probability weights of the grid's DFT momenta (summing to 1). For
    /// packet representations these are quadrature samples of the analytic
    /// density; grids diagonalise exactly in the DFT basis.
    pub fn momentum_weights(&self, grid: &GridSpec) -> Result<Vec<f64>> {
        match &self.rep {
            DensityRep::Grid { matrix, grid: own } => {
                if own != grid {
                    return Err(Error::Unsupported(
                        "momentum weights of a grid density are only defined on its own grid".into(),
                    ));
                }
                let w = grid_momentum_weights(matrix, grid);
                normalize_weights(w, "momentum")
            }
            _ => {
                let fps = self.footprints().expect("packet representation");
                grid.assert_resolves(&fps, 6.0, 6.0, 8.0)?;
                let dp = grid.dp();
                let w: Vec<f64> = grid.ps().iter().map(|&p| self.momentum_density(p) * dp).collect();
                normalize_weights(w, "momentum")
            }
        }
    }

    /// Probability weights of the grid's positions (summing to 1).
    pub fn position_weights(&self, grid: &GridSpec) -> Result<Vec<f64>> {
        match &self.rep {
            DensityRep::Grid { matrix, grid: own } => {
                if own != grid {
                    return Err(Error::Unsupported(
                        "position weights of a grid density are only defined on its own grid".into(),
                    ));
                }
                let w: Vec<f64> = matrix.diagonal().iter().map(|z| z.re).collect();
                normalize_weights(w, "position")
            }
            _ => {
                let fps = self.footprints().expect("packet representation");
                grid.assert_resolves(&fps, 6.0, 0.0, 0.0)?;
                let dx = grid.dx();
                let w: Vec<f64> = grid.xs().iter().map(|&x| self.position_density(x) * dx).collect();
                normalize_weights(w, "position")
            }
        }
    }

    /// Discretises the state on `grid`. Requires the grid to cover each
    /// packet to 6 position deviations with the band edge 6 momentum
    /// deviations past each packet momentum.
    pub fn to_grid(&self, grid: &GridSpec) -> Result<CMDensity> {
        match &self.rep {
            DensityRep::Grid { matrix, grid: own } => {
                if own == grid {
                    Ok(CMDensity::from_grid_unchecked(matrix.clone(), grid.clone()))
                } else {
                    Err(Error::Unsupported("regridding a grid density is not supported".into()))
                }
            }
            DensityRep::Pure(s) => {
                grid.assert_resolves(&s.footprints(), 6.0, 6.0, 0.0)?;
                pure_to_grid(s, grid)
            }
            DensityRep::Mixture(cs) => {
                let fps: Vec<_> = cs.iter().flat_map(|(_, s)| s.footprints()).collect();
                grid.assert_resolves(&fps, 6.0, 6.0, 0.0)?;
                let n = grid.n();
                let mut acc = DMatrix::<Complex64>::zeros(n, n);
                for (w, s) in cs {
                    let part = pure_to_grid(s, grid)?;
                    let (m, _) = part.grid_matrix().expect("grid rep");
                    acc += m.scale(*w);
                }
                Ok(CMDensity::from_grid_unchecked(acc, grid.clone()))
            }
        }
    }

    /// Kills momentum coherences: returns the grid density diagonal in the
    /// DFT momentum basis with the same momentum weights as `self`. Requires
    /// at least 8 momentum samples per packet spread.
    pub fn dephase_momentum(&self, grid: &GridSpec) -> Result<CMDensity> {
        let weights = self.momentum_weights(grid)?;
        let n = grid.n();
        let dx = grid.dx();
        let ps = grid.ps();
        // matrix[i, j] = (1/n) sum_k w_k exp(i p_k (x_i - x_j)); on a uniform
        // grid x_i - x_j = (i - j) dx, so one momentum sum per offset suffices.
        let mut by_offset = vec![Complex64::new(0.0, 0.0); n];
        for (d, slot) in by_offset.iter_mut().enumerate() {
            let shift = d as f64 * dx;
            let mut acc = Complex64::new(0.0, 0.0);
            for (&p, &w) in ps.iter().zip(&weights) {
                acc += Complex64::from_polar(w, p * shift);
            }
            *slot = acc;
        }
        let mut matrix = DMatrix::<Complex64>::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = by_offset[i - j] / n as f64;
                matrix[(i, j)] = v;
                matrix[(j, i)] = v.conj();
            }
        }
        Ok(CMDensity::from_grid_unchecked(matrix, grid.clone()))
    }

    /// Kills position coherences: diagonal grid density with the same
    /// position weights as `self`.
    pub fn dephase_position(&self, grid: &GridSpec) -> Result<CMDensity> {
        let weights = self.position_weights(grid)?;
        let n = grid.n();
        let mut matrix = DMatrix::<Complex64>::zeros(n, n);
        for (i, w) in weights.iter().enumerate() {
            matrix[(i, i)] = Complex64::new(*w, 0.0);
        }
        Ok(CMDensity::from_grid_unchecked(matrix, grid.clone()))
    }
}

fn pure_to_grid(s: &PureCMState, grid: &GridSpec) -> Result<CMDensity> {
    let n = grid.n();
    let amps: Vec<Complex64> = grid.xs().iter().map(|&x| s.amplitude_x(x)).collect();
    let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * grid.dx();
    if (norm - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::Resolution(format!(
            "discretised norm is {norm}; the grid under-resolves the state"
        )));
    }
    let scale = (grid.dx() / norm).sqrt();
    let mut matrix = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            matrix[(i, j)] = amps[i] * amps[j].conj() * scale * scale;
        }
    }
    Ok(CMDensity::from_grid_unchecked(matrix, grid.clone()))
}

fn grid_momentum_weights(matrix: &DMatrix<Complex64>, grid: &GridSpec) -> Vec<f64> {
    // diag(F rho F^dagger)_k = (1/n) sum_ij rho_ij exp(i p_k (x_j - x_i))
    // depends on rho only through the anti-diagonal sums S_m = sum_{j-i=m}
    // rho_ij, which collapses the cost from n^3 to n^2.
    let n = grid.n();
    let dx = grid.dx();
    let mut diag_sums = vec![Complex64::new(0.0, 0.0); 2 * n - 1];
    for i in 0..n {
        for j in 0..n {
            diag_sums[j + n - 1 - i] += matrix[(i, j)];
        }
    }
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let p = grid.p(k);
        let mut acc = Complex64::new(0.0, 0.0);
        for (idx, &s) in diag_sums.iter().enumerate() {
            let m = idx as f64 - (n - 1) as f64;
            acc += s * Complex64::from_polar(1.0, p * m * dx);
        }
        out.push(acc.re / n as f64);
    }
    out
}

fn interp_density(points: &[f64], weights: &[f64], step: f64, q: f64) -> f64 {
    // Piecewise-linear interpolation of weight/step; zero outside the range.
    let n = points.len();
    if q < points[0] || q > points[n - 1] {
        return 0.0;
    }
    let t = (q - points[0]) / step;
    let i = (t.floor() as usize).min(n - 2);
    let frac = t - i as f64;
    ((1.0 - frac) * weights[i] + frac * weights[i + 1]) / step
}

fn normalize_weights(mut w: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    for v in &mut w {
        if *v < 0.0 {
            if *v < -1e-12 {
                return Err(Error::InvalidOperator(format!(
                    "{what} weight is negative ({v:e}); density is not positive"
                )));
            }
            *v = 0.0;
        }
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::Resolution(format!(
            "{what} weights sum to {sum}; the grid under-resolves the state"
        )));
    }
    for v in &mut w {
        *v /= sum;
    }
    Ok(w)
}
