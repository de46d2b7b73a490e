//! SI conversions between laboratory quantities and the reduced units.
//!
//! Time is measured in `t0 = 1/B` with `B` in Hz, so an energy `hν` becomes
//! the angular rate `2π ν/B` per `t0`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// C·m per Debye.
pub const DEBYE: f64 = 3.335_64e-30;

/// Peak field in V/m for a cycle-averaged intensity in W/cm².
pub fn field_amplitude(intensity_w_cm2: f64) -> Result<f64> {
    if !(intensity_w_cm2 >= 0.0 && intensity_w_cm2.is_finite()) {
        return Err(Error::InvalidParams(format!("intensity must be finite and >= 0, got {intensity_w_cm2}")));
    }
    Ok((2.0 * intensity_w_cm2 * 1e4 / (VACUUM_PERMITTIVITY * SPEED_OF_LIGHT)).sqrt())
}

/// `μE/h` in MHz.
pub fn dipole_coupling_mhz(mu_debye: f64, field_v_m: f64) -> f64 {
    mu_debye * DEBYE * field_v_m / PLANCK * 1e-6
}

/// `μE/(hB)` for a dipole in Debye, an intensity in W/cm² and `B` in MHz.
pub fn mu_e_over_b(mu_debye: f64, intensity_w_cm2: f64, b_mhz: f64) -> Result<f64> {
    Ok(dipole_coupling_mhz(mu_debye, field_amplitude(intensity_w_cm2)?) / b_mhz)
}

/// `t0` in seconds.
pub fn time_unit(b_mhz: f64) -> Result<f64> {
    if !(b_mhz > 0.0 && b_mhz.is_finite()) {
        return Err(Error::InvalidParams(format!("rotational constant must be positive, got {b_mhz}")));
    }
    Ok(1.0 / (b_mhz * 1e6))
}

/// Angular rate per `t0` of a frequency in MHz.
pub fn angular_rate(freq_mhz: f64, b_mhz: f64) -> f64 {
    2.0 * PI * freq_mhz / b_mhz
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_intensity() {
        assert_eq!(field_amplitude(0.0).unwrap(), 0.0);
        assert!(field_amplitude(-1.0).is_err());
    }

    #[test]
    fn one_debye_at_one_watt() {
        let e = field_amplitude(1.0).unwrap();
        assert_relative_eq!(e, 2744.9, max_relative = 1e-4);
        assert_relative_eq!(dipole_coupling_mhz(1.0, e), 13.82, max_relative = 1e-3);
    }

    #[test]
    fn time_units() {
        assert_relative_eq!(time_unit(692.63).unwrap(), 1.4438e-9, max_relative = 1e-4);
        assert!(time_unit(0.0).is_err());
    }
}
