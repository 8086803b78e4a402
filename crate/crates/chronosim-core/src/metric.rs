//! Static spherically symmetric metric coefficients around a point source,
//! in the weak-field expansion used by the Hamiltonian decomposition, plus
//! the exact isotropic-coordinate forms they approximate.
//!
//! Conventions: `c = 1`, expansion parameter `eps(r) = G M / r` with `r` the
//! isotropic radial coordinate, and the time coefficient normalised so the
//! reference observer at `r0` carries `g00(r0) = 1 + O(eps^4)`. The exact
//! comparators use `u = G M / (2 rho)`; the time factor `((1-u)/(1+u))^2`
//! equals `1 - 2 G M / r_areal` with `r_areal = rho (1+u)^2`.

use crate::{Error, Result};

/// Quadratic weak-field coefficient sets, normalised to a reference radius.
///
/// `g00(r) = observer_poly(eps0) * field_poly(eps(r))` and the spatial part
/// is the isotropic scalar `spatial_poly(eps(r))` multiplying the flat
/// 3-metric. Polynomials are stored lowest power first.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricCoefficients {
    source_mass: f64,
    r0: f64,
    grav_const: f64,
    observer_poly: [f64; 3],
    field_poly: [f64; 3],
    spatial_poly: [f64; 3],
}

/// Weak-field metric around `source_mass` for a reference observer at `r0`,
/// with `G = 1`.
pub fn pn_metric_expansion(source_mass: f64, r0: f64) -> Result<MetricCoefficients> {
    pn_metric_expansion_with_g(source_mass, r0, 1.0)
}

/// Same expansion with an explicit gravitational constant.
pub fn pn_metric_expansion_with_g(source_mass: f64, r0: f64, grav_const: f64) -> Result<MetricCoefficients> {
    if !(source_mass.is_finite() && source_mass > 0.0) {
        return Err(Error::invalid(format!("source mass must be positive, got {source_mass}")));
    }
    if !(grav_const.is_finite() && grav_const > 0.0) {
        return Err(Error::invalid(format!("gravitational constant must be positive, got {grav_const}")));
    }
    if !(r0.is_finite() && r0 > 0.0) {
        return Err(Error::invalid(format!("reference radius must be positive, got {r0}")));
    }
    let m = MetricCoefficients {
        source_mass,
        r0,
        grav_const,
        observer_poly: [1.0, 2.0, 2.0],
        field_poly: [1.0, -2.0, 2.0],
        spatial_poly: [1.0, 2.0, 1.5],
    };
    // The expansion needs eps << 1 already at the reference radius.
    let e0 = m.epsilon(r0)?;
    if e0 >= 0.5 {
        return Err(Error::Domain(format!(
            "eps(r0) = {e0}; the weak-field expansion needs eps well below 1"
        )));
    }
    Ok(m)
}

fn poly_eval(c: &[f64; 3], x: f64) -> f64 {
    c[0] + x * (c[1] + x * c[2])
}

impl MetricCoefficients {
    pub fn source_mass(&self) -> f64 {
        self.source_mass
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn grav_const(&self) -> f64 {
        self.grav_const
    }

    pub fn observer_poly(&self) -> &[f64; 3] {
        &self.observer_poly
    }

    pub fn field_poly(&self) -> &[f64; 3] {
        &self.field_poly
    }

    pub fn spatial_poly(&self) -> &[f64; 3] {
        &self.spatial_poly
    }

    /// Expansion parameter `G M / r`.
    pub fn epsilon(&self, r: f64) -> Result<f64> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::Domain(format!("radius must be positive, got {r}")));
        }
        Ok(self.grav_const * self.source_mass / r)
    }

    /// Time coefficient normalised at the reference radius:
    /// `(1 + 2 eps0 + 2 eps0^2)(1 - 2 eps + 2 eps^2)`.
    pub fn g00(&self, r: f64) -> Result<f64> {
        let e0 = self.epsilon(self.r0)?;
        let e = self.epsilon(r)?;
        Ok(poly_eval(&self.observer_poly, e0) * poly_eval(&self.field_poly, e))
    }

    /// Isotropic spatial scalar `1 + 2 eps + 3 eps^2 / 2`.
    pub fn spatial_scalar(&self, r: f64) -> Result<f64> {
        let e = self.epsilon(r)?;
        Ok(poly_eval(&self.spatial_poly, e))
    }

    /// Warns when the quadratic truncation stops being trustworthy at `r`
    /// (cubic terms reaching the 1e-6 level, i.e. eps beyond 1e-2).
    pub fn validity_warning(&self, r: f64) -> Option<String> {
        match self.epsilon(r) {
            Ok(e) if e > 1e-2 => Some(format!(
                "eps = {e:.3e} at r = {r}: cubic metric terms reach {:.1e}, beyond the quadratic \
                 truncation's 1e-6 regime",
                1.5 * e * e * e
            )),
            _ => None,
        }
    }
}

fn check_isotropic_args(source_mass: f64, rho: f64, grav_const: f64) -> Result<f64> {
    if !(source_mass.is_finite() && source_mass > 0.0) {
        return Err(Error::invalid(format!("source mass must be positive, got {source_mass}")));
    }
    if !(grav_const.is_finite() && grav_const > 0.0) {
        return Err(Error::invalid(format!("gravitational constant must be positive, got {grav_const}")));
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::Domain(format!("isotropic radius must be positive, got {rho}")));
    }
    let u = 0.5 * grav_const * source_mass / rho;
    if u >= 1.0 {
        return Err(Error::Domain(format!(
            "isotropic radius {rho} is at or inside the horizon surface u = 1 (u = {u})"
        )));
    }
    Ok(u)
}

/// Exact isotropic time factor `((1-u)/(1+u))^2`, `u = G M / (2 rho)`.
pub fn isotropic_time_factor(source_mass: f64, rho: f64, grav_const: f64) -> Result<f64> {
    let u = check_isotropic_args(source_mass, rho, grav_const)?;
    let f = (1.0 - u) / (1.0 + u);
    Ok(f * f)
}

/// Exact isotropic spatial factor `(1+u)^4`.
pub fn isotropic_spatial_factor(source_mass: f64, rho: f64, grav_const: f64) -> Result<f64> {
    let u = check_isotropic_args(source_mass, rho, grav_const)?;
    Ok((1.0 + u).powi(4))
}

/// Areal radius `rho (1+u)^2` of the isotropic coordinate sphere.
pub fn areal_radius(source_mass: f64, rho: f64, grav_const: f64) -> Result<f64> {
    let u = check_isotropic_args(source_mass, rho, grav_const)?;
    Ok(rho * (1.0 + u) * (1.0 + u))
}

/// Exact time coefficient normalised to an observer at `rho0`.
pub fn isotropic_g00_normalized(source_mass: f64, rho: f64, rho0: f64, grav_const: f64) -> Result<f64> {
    Ok(isotropic_time_factor(source_mass, rho, grav_const)?
        / isotropic_time_factor(source_mass, rho0, grav_const)?)
}

/// Classical energy of a point particle on the mass shell:
/// `sqrt(g00 (m^2 + p^2 / spatial_scalar))`.
pub fn classical_energy(p: f64, g00: f64, spatial_scalar: f64, m: f64) -> Result<f64> {
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::invalid(format!("mass must be positive, got {m}")));
    }
    if !p.is_finite() {
        return Err(Error::invalid("momentum must be finite"));
    }
    if !(g00.is_finite() && g00 > 0.0) || !(spatial_scalar.is_finite() && spatial_scalar > 0.0) {
        return Err(Error::Domain(format!(
            "metric coefficients must be positive, got g00 = {g00}, spatial = {spatial_scalar}"
        )));
    }
    Ok((g00 * (m * m + p * p / spatial_scalar)).sqrt())
}
