//! Uniform position grids and the discrete momentum set paired with them.
//!
//! Sampling is midpoint-based: a grid of `n` cells over `[x_min, x_max]`
//! places points at `x_min + (i + 1/2) dx`. The conjugate momenta are the DFT
//! frequencies `p_k = 2 pi (k - n/2) / (n dx)`, so the band edge is
//! `pi / dx` and the momentum spacing is `2 pi / L`.

use crate::{Error, Result};

/// Extent summary of a Gaussian packet, used for grid sizing and resolution
/// checks without depending on the full state type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketFootprint {
    pub p_mean: f64,
    pub p_spread: f64,
    pub x_mean: f64,
}

impl PacketFootprint {
    /// Position standard deviation of a minimum-uncertainty packet.
    pub fn x_spread(&self) -> f64 {
        0.5 / self.p_spread
    }
}

/// A uniform position grid together with its DFT momentum set.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    n: usize,
    x_min: f64,
    x_max: f64,
}

impl GridSpec {
    pub fn new(n: usize, x_min: f64, x_max: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("grid needs at least 2 points, got {n}")));
        }
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(Error::invalid(format!(
                "grid extent must be finite with x_max > x_min, got [{x_min}, {x_max}]"
            )));
        }
        Ok(GridSpec { n, x_min, x_max })
    }

    /// Smallest symmetric grid that resolves every footprint: the extent
    /// covers each packet centre to 8 position deviations and keeps at least
    /// 8 momentum samples per packet spread; `n` then has to push the band
    /// edge past every packet momentum plus 8 spreads, or the construction
    /// fails with a resolution error.
    pub fn auto(footprints: &[PacketFootprint], n: usize) -> Result<Self> {
        if footprints.is_empty() {
            return Err(Error::invalid("grid auto-sizing needs at least one packet"));
        }
        for (i, f) in footprints.iter().enumerate() {
            if !(f.p_spread.is_finite() && f.p_spread > 0.0) || !f.p_mean.is_finite() || !f.x_mean.is_finite() {
                return Err(Error::invalid(format!(
                    "footprint {i} has non-finite fields or p_spread <= 0"
                )));
            }
        }
        let lo = footprints
            .iter()
            .map(|f| f.x_mean - 8.0 * f.x_spread())
            .fold(f64::INFINITY, f64::min);
        let hi = footprints
            .iter()
            .map(|f| f.x_mean + 8.0 * f.x_spread())
            .fold(f64::NEG_INFINITY, f64::max);
        let min_spread = footprints.iter().map(|f| f.p_spread).fold(f64::INFINITY, f64::min);
        let centre = 0.5 * (lo + hi);
        let half = (0.5 * (hi - lo)).max(8.0 * std::f64::consts::PI / min_spread);
        let grid = GridSpec::new(n, centre - half, centre + half)?;
        grid.assert_resolves(footprints, 8.0, 8.0, 8.0)?;
        Ok(grid)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.len() / self.n as f64
    }

    /// Midpoint of cell `i`.
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Momentum spacing `2 pi / L`.
    pub fn dp(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.len()
    }

    /// DFT momentum `2 pi (k - n/2) / (n dx)`.
    pub fn p(&self, k: usize) -> f64 {
        (k as f64 - (self.n / 2) as f64) * self.dp()
    }

    pub fn ps(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.p(k)).collect()
    }

    /// Largest momentum magnitude the grid represents, `pi / dx`.
    pub fn band_edge(&self) -> f64 {
        std::f64::consts::PI / self.dx()
    }

    /// Checks that the grid resolves every footprint: position coverage to
    /// `cover_sigmas` deviations, band-edge margin of `band_sigmas` momentum
    /// deviations past each packet momentum, and at least
    /// `points_per_spread` momentum samples per packet spread. Pass zero to
    /// skip a criterion.
    pub fn assert_resolves(
        &self,
        footprints: &[PacketFootprint],
        cover_sigmas: f64,
        band_sigmas: f64,
        points_per_spread: f64,
    ) -> Result<()> {
        for (i, f) in footprints.iter().enumerate() {
            let sx = f.x_spread();
            if f.x_mean - cover_sigmas * sx < self.x_min || f.x_mean + cover_sigmas * sx > self.x_max {
                return Err(Error::Resolution(format!(
                    "grid [{}, {}] covers less than {cover_sigmas} position deviations of packet {i} \
                     (centre {}, spread {sx}); widen the extent",
                    self.x_min, self.x_max, f.x_mean
                )));
            }
            let need = f.p_mean.abs() + band_sigmas * f.p_spread;
            if need > self.band_edge() {
                return Err(Error::Resolution(format!(
                    "band edge {:.6} cannot hold packet {i} momenta up to {need:.6}; increase the \
                     point count",
                    self.band_edge()
                )));
            }
            if points_per_spread > 0.0 && self.dp() > f.p_spread / points_per_spread {
                return Err(Error::Resolution(format!(
                    "momentum spacing {:.6} exceeds p_spread/{points_per_spread} for packet {i} \
                     (spread {}); widen the extent",
                    self.dp(),
                    f.p_spread
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fp(p_mean: f64, p_spread: f64, x_mean: f64) -> PacketFootprint {
        PacketFootprint { p_mean, p_spread, x_mean }
    }

    #[test]
    fn midpoint_sampling() {
        let g = GridSpec::new(4, -1.0, 1.0).unwrap();
        assert_relative_eq!(g.dx(), 0.5);
        assert_eq!(g.xs(), vec![-0.75, -0.25, 0.25, 0.75]);
    }

    #[test]
    fn momentum_set_brackets_zero() {
        let g = GridSpec::new(4, -1.0, 1.0).unwrap();
        let ps = g.ps();
        let pi = std::f64::consts::PI;
        assert_relative_eq!(ps[0], -2.0 * pi);
        assert_relative_eq!(ps[1], -pi);
        assert_relative_eq!(ps[2], 0.0);
        assert_relative_eq!(ps[3], pi);
        assert_relative_eq!(g.dp(), pi);
        assert_relative_eq!(g.band_edge(), 2.0 * pi);
    }

    #[test]
    fn auto_meets_both_sampling_rules() {
        let f = fp(0.0, 0.05, 0.0);
        let g = GridSpec::auto(&[f], 256).unwrap();
        // Momentum sampling: at least 8 points per spread.
        assert!(g.dp() <= 0.05 / 8.0 + 1e-15);
        // Position coverage: 8 sigma_x on either side.
        assert!(g.x_max >= 8.0 * f.x_spread());
        // Band edge past p_mean + 8 sigma_p.
        assert!(g.band_edge() >= 0.4);
    }

    #[test]
    fn auto_centres_on_offset_packets() {
        let g = GridSpec::auto(&[fp(0.0, 0.5, 3.0), fp(0.0, 0.5, 7.0)], 128).unwrap();
        assert_relative_eq!(0.5 * (g.x_min() + g.x_max()), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn auto_rejects_underresolved_band() {
        // Huge momentum offset: band edge at any reasonable n = 16 extent fails.
        let err = GridSpec::auto(&[fp(50.0, 0.05, 0.0)], 16).unwrap_err();
        assert!(matches!(err, Error::Resolution(_)), "{err}");
    }

    #[test]
    fn new_rejects_bad_extents() {
        assert!(GridSpec::new(1, 0.0, 1.0).is_err());
        assert!(GridSpec::new(8, 1.0, 1.0).is_err());
        assert!(GridSpec::new(8, 0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn resolution_checks_fire_individually() {
        let g = GridSpec::new(64, -10.0, 10.0).unwrap();
        // Coverage failure: centre too close to the edge.
        let bad_cover = fp(0.0, 1.0, 9.9);
        assert!(matches!(
            g.assert_resolves(&[bad_cover], 6.0, 0.0, 0.0),
            Err(Error::Resolution(_))
        ));
        // Band failure.
        let bad_band = fp(100.0, 1.0, 0.0);
        assert!(matches!(
            g.assert_resolves(&[bad_band], 0.0, 6.0, 0.0),
            Err(Error::Resolution(_))
        ));
        // Sampling failure: dp = pi/10 ~ 0.314 > 0.5/8.
        let bad_sampling = fp(0.0, 0.5, 0.0);
        assert!(matches!(
            g.assert_resolves(&[bad_sampling], 0.0, 0.0, 8.0),
            Err(Error::Resolution(_))
        ));
        // A well-resolved packet passes all three on a wide enough grid.
        let wide = GridSpec::new(256, -32.0, 32.0).unwrap();
        let good = fp(0.0, 1.0, 0.0);
        wide.assert_resolves(&[good], 6.0, 6.0, 8.0).unwrap();
    }
}
