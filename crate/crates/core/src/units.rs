//! Physical constants in SI units and the eV bridge used at data boundaries.
//!
//! Values are CODATA 2018 (NIST). Everything inside the crate works in SI;
//! photon energies in eV only appear when reading tables and on the CLI.

use serde::Serialize;

/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Speed of light in vacuum (m/s), exact.
pub const C: f64 = 299_792_458.0;
/// Boltzmann constant (J/K), exact.
pub const K_BOLTZMANN: f64 = 1.380_649e-23;
/// Vacuum permittivity (F/m).
pub const EPS0: f64 = 8.854_187_812_8e-12;
/// Riemann zeta(3) (Apéry's constant).
pub const ZETA3: f64 = 1.202_056_903_159_594_3;
/// Joules per electronvolt, exact.
pub const EV_TO_JOULE: f64 = 1.602_176_634e-19;
/// Angular frequency (rad/s) of a photon carrying 1 eV.
pub const EV_TO_RAD_PER_S: f64 = EV_TO_JOULE / HBAR;

pub const NANOMETRE: f64 = 1e-9;
pub const MICROMETRE: f64 = 1e-6;
pub const PICONEWTON: f64 = 1e-12;

/// Bundle of the constants above, handy for echoing into reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub c: f64,
    pub k_boltzmann: f64,
    pub eps0: f64,
    pub zeta3: f64,
    pub ev_to_joule: f64,
    pub ev_to_rad_per_s: f64,
}

impl PhysicalConstants {
    pub const CODATA_2018: Self = Self {
        hbar: HBAR,
        c: C,
        k_boltzmann: K_BOLTZMANN,
        eps0: EPS0,
        zeta3: ZETA3,
        ev_to_joule: EV_TO_JOULE,
        ev_to_rad_per_s: EV_TO_RAD_PER_S,
    };
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::CODATA_2018
    }
}

/// Photon energy (eV) to angular frequency (rad/s).
pub fn energy_ev_to_angular_frequency(e: f64) -> f64 {
    e * EV_TO_RAD_PER_S
}

/// Angular frequency (rad/s) to photon energy (eV).
pub fn angular_frequency_to_energy_ev(omega: f64) -> f64 {
    omega / EV_TO_RAD_PER_S
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constants_positive() {
        let k = PhysicalConstants::default();
        for v in [k.hbar, k.c, k.k_boltzmann, k.eps0, k.zeta3, k.ev_to_joule, k.ev_to_rad_per_s] {
            assert!(v > 0.0 && v.is_finite());
        }
        assert_eq!((k.zeta3 * 1000.0).round() / 1000.0, 1.202);
        assert_eq!(k.ev_to_rad_per_s, k.ev_to_joule / k.hbar);
    }

    #[test]
    fn ev_conversion_examples() {
        assert_eq!(energy_ev_to_angular_frequency(0.0), 0.0);
        // 1.602177e-19 / 1.054572e-34, rounded constants
        let oracle = 1.602177e-19 / 1.054572e-34;
        let one = energy_ev_to_angular_frequency(1.0);
        assert!((one / oracle - 1.0).abs() < 1e-5);
        assert!((one / 1.519e15 - 1.0).abs() < 1e-3);
        let r = energy_ev_to_angular_frequency(11.5) / (11.5 * one);
        assert!((r - 1.0).abs() < 1e-15);
        assert!(energy_ev_to_angular_frequency(-2.0) < 0.0);
    }

    #[test]
    fn pi_cubed_hbar_c() {
        // pi^3 = 31.00627668..., hbar*c = 3.16152677e-26 J*m
        let v = std::f64::consts::PI.powi(3) * HBAR * C;
        let oracle = 31.006_276_68 * 3.161_526_77e-26;
        assert!((v / oracle - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn round_trip(omega in 1e-3f64..1e20) {
            let back = energy_ev_to_angular_frequency(angular_frequency_to_energy_ev(omega));
            prop_assert!((back / omega - 1.0).abs() < 1e-12);
        }
    }
}
