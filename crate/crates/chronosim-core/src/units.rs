//! Unit system: internally everything is expressed in `hbar = c = 1` units
//! relative to a reference mass.
//!
//! Picking a reference mass `m_ref` fixes the whole system: energies come in
//! units of `m_ref c^2`, momenta in `m_ref c`, lengths in the reduced Compton
//! wavelength `hbar / (m_ref c)`, times in `hbar / (m_ref c^2)`. A particle of
//! mass `m_ref` therefore has internal mass exactly 1.

/// Reduced Planck constant, J s.
pub const HBAR_SI: f64 = 1.054_571_817e-34;
/// Speed of light, m/s.
pub const C_SI: f64 = 299_792_458.0;
/// Newtonian gravitational constant, m^3 kg^-1 s^-2.
pub const G_SI: f64 = 6.674_30e-11;

/// Converter between SI quantities and internal `hbar = c = 1` units
/// anchored to a reference mass in kilograms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiScale {
    reference_mass_kg: f64,
}

impl SiScale {
    /// A scale anchored to `reference_mass_kg`. The reference mass must be
    /// positive and finite.
    pub fn new(reference_mass_kg: f64) -> crate::Result<Self> {
        if !(reference_mass_kg.is_finite() && reference_mass_kg > 0.0) {
            return Err(crate::Error::invalid(format!(
                "reference mass must be positive and finite, got {reference_mass_kg}"
            )));
        }
        Ok(SiScale { reference_mass_kg })
    }

    pub fn reference_mass_kg(&self) -> f64 {
        self.reference_mass_kg
    }

    pub fn mass_to_internal(&self, kg: f64) -> f64 {
        kg / self.reference_mass_kg
    }

    pub fn mass_from_internal(&self, m: f64) -> f64 {
        m * self.reference_mass_kg
    }

    pub fn momentum_to_internal(&self, kg_m_per_s: f64) -> f64 {
        kg_m_per_s / (self.reference_mass_kg * C_SI)
    }

    pub fn momentum_from_internal(&self, p: f64) -> f64 {
        p * self.reference_mass_kg * C_SI
    }

    pub fn length_to_internal(&self, metres: f64) -> f64 {
        metres * self.reference_mass_kg * C_SI / HBAR_SI
    }

    pub fn length_from_internal(&self, x: f64) -> f64 {
        x * HBAR_SI / (self.reference_mass_kg * C_SI)
    }

    pub fn time_to_internal(&self, seconds: f64) -> f64 {
        seconds * self.reference_mass_kg * C_SI * C_SI / HBAR_SI
    }

    pub fn time_from_internal(&self, t: f64) -> f64 {
        t * HBAR_SI / (self.reference_mass_kg * C_SI * C_SI)
    }

    /// Angular frequency, rad/s.
    pub fn frequency_to_internal(&self, rad_per_s: f64) -> f64 {
        rad_per_s * HBAR_SI / (self.reference_mass_kg * C_SI * C_SI)
    }

    pub fn frequency_from_internal(&self, omega: f64) -> f64 {
        omega * self.reference_mass_kg * C_SI * C_SI / HBAR_SI
    }

    pub fn energy_to_internal(&self, joules: f64) -> f64 {
        joules / (self.reference_mass_kg * C_SI * C_SI)
    }

    pub fn energy_from_internal(&self, e: f64) -> f64 {
        e * self.reference_mass_kg * C_SI * C_SI
    }

    pub fn acceleration_to_internal(&self, m_per_s2: f64) -> f64 {
        m_per_s2 * HBAR_SI / (self.reference_mass_kg * C_SI * C_SI * C_SI)
    }

    pub fn acceleration_from_internal(&self, g: f64) -> f64 {
        g * self.reference_mass_kg * C_SI * C_SI * C_SI / HBAR_SI
    }

    /// Newton's constant in internal units. Equals `(m_ref / m_Planck)^2`,
    /// which is tiny for anything lighter than a dust grain; gravitational
    /// scenarios usually set an effective acceleration directly instead.
    pub fn grav_constant_internal(&self) -> f64 {
        G_SI * self.reference_mass_kg * self.reference_mass_kg / (HBAR_SI * C_SI)
    }
}
