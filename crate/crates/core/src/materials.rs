//! Dielectric media and their propagation constants.
//!
//! A ray travelling a distance `d` through a medium picks up the factor
//! `exp(-alpha d) exp(-j beta d)`, with `beta = 2 pi sqrt(eps_r) / lambda0`
//! and `alpha = pi sqrt(eps_r) tan_delta / lambda`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialProperties {
    pub name: String,
    pub epsilon_r: f64,
    pub tan_delta: f64,
    pub is_conductor: bool,
}

impl MaterialProperties {
    pub fn dielectric(name: impl Into<String>, epsilon_r: f64, tan_delta: f64) -> Result<Self> {
        let name = name.into();
        if !(epsilon_r.is_finite() && epsilon_r >= 1.0) {
            return Err(Error::InvalidInput(format!(
                "material `{name}`: epsilon_r must be >= 1, got {epsilon_r}"
            )));
        }
        if !(tan_delta.is_finite() && tan_delta >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "material `{name}`: tan_delta must be >= 0, got {tan_delta}"
            )));
        }
        Ok(Self {
            name,
            epsilon_r,
            tan_delta,
            is_conductor: false,
        })
    }

    pub fn conductor(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            epsilon_r: 1.0,
            tan_delta: 0.0,
            is_conductor: true,
        }
    }

    /// Interconnect stack approximated as silicon dioxide at 60 GHz.
    pub fn sio2() -> Self {
        Self::dielectric("SiO2", 3.9, 0.098).unwrap()
    }

    /// Bulk silicon at 60 GHz.
    pub fn si() -> Self {
        Self::dielectric("Si", 11.9, 0.252).unwrap()
    }

    pub fn air() -> Self {
        Self::dielectric("air", 1.0, 0.0).unwrap()
    }

    pub fn refractive_index(&self) -> f64 {
        self.epsilon_r.sqrt()
    }
}

/// Which wavelength divides the loss term of the attenuation constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlphaLambdaMode {
    /// Free-space wavelength; gives `alpha = beta tan_delta / 2`.
    #[default]
    FreeSpace,
    /// In-medium wavelength `lambda0 / sqrt(eps_r)`.
    InMedium,
}

impl AlphaLambdaMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AlphaLambdaMode::FreeSpace => "free_space",
            AlphaLambdaMode::InMedium => "in_medium",
        }
    }
}

impl std::str::FromStr for AlphaLambdaMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "free_space" => Ok(Self::FreeSpace),
            "in_medium" => Ok(Self::InMedium),
            other => Err(format!("expected free_space or in_medium, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationConstants {
    /// Np/m
    pub alpha: f64,
    /// rad/m
    pub beta: f64,
    /// Hz
    pub frequency: f64,
    /// m
    pub lambda0: f64,
}

pub fn propagation_constants(
    mat: &MaterialProperties,
    frequency: f64,
) -> Result<PropagationConstants> {
    propagation_constants_with(mat, frequency, AlphaLambdaMode::FreeSpace)
}

pub fn propagation_constants_with(
    mat: &MaterialProperties,
    frequency: f64,
    mode: AlphaLambdaMode,
) -> Result<PropagationConstants> {
    if !(frequency.is_finite() && frequency > 0.0) {
        return Err(Error::InvalidInput(format!(
            "frequency must be positive, got {frequency}"
        )));
    }
    if mat.is_conductor {
        return Err(Error::UnsupportedMaterial(mat.name.clone()));
    }
    let n = mat.refractive_index();
    let lambda0 = SPEED_OF_LIGHT / frequency;
    let lambda = match mode {
        AlphaLambdaMode::FreeSpace => lambda0,
        AlphaLambdaMode::InMedium => lambda0 / n,
    };
    Ok(PropagationConstants {
        alpha: PI * n * mat.tan_delta / lambda,
        beta: 2.0 * PI / lambda0 * n,
        frequency,
        lambda0,
    })
}

/// `d^-p * exp(-alpha d) * exp(-j beta d)`.
pub fn complex_attenuation(
    pc: &PropagationConstants,
    d: f64,
    spreading_exponent: f64,
) -> Result<Complex64> {
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::InvalidDistance(d));
    }
    if !(spreading_exponent.is_finite() && spreading_exponent >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "spreading exponent must be >= 0, got {spreading_exponent}"
        )));
    }
    Ok(attenuation_factor(pc, d) * spreading(d, spreading_exponent))
}

/// Unchecked `exp(-gamma d)`; callers guarantee `d > 0`.
pub(crate) fn attenuation_factor(pc: &PropagationConstants, d: f64) -> Complex64 {
    Complex64::from_polar((-pc.alpha * d).exp(), -pc.beta * d)
}

pub(crate) fn spreading(d: f64, exponent: f64) -> f64 {
    if exponent == 0.0 {
        1.0
    } else {
        d.powf(-exponent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const F60: f64 = 60e9;

    #[test]
    fn sio2_at_60ghz() {
        let pc = propagation_constants(&MaterialProperties::sio2(), F60).unwrap();
        // Independently evaluated: alpha = pi*sqrt(3.9)*0.098/(c/60e9).
        assert_relative_eq!(pc.alpha, 121.68549115023971, max_relative = 1e-12);
        assert_relative_eq!(pc.beta, 2483.3773704130554, max_relative = 1e-12);
        assert_relative_eq!(pc.lambda0, 4.99654096666667e-3, max_relative = 1e-12);
        assert_relative_eq!(pc.alpha, pc.beta / 2.0 * 0.098, max_relative = 1e-12);
    }

    #[test]
    fn lossless_has_zero_alpha() {
        let m = MaterialProperties::dielectric("x", 2.5, 0.0).unwrap();
        assert_eq!(propagation_constants(&m, 1e9).unwrap().alpha, 0.0);
        let air = propagation_constants(&MaterialProperties::air(), F60).unwrap();
        assert_relative_eq!(air.beta, 1257.507013171009, max_relative = 1e-12);
    }

    #[test]
    fn in_medium_mode_scales_alpha_by_index() {
        let m = MaterialProperties::sio2();
        let a = propagation_constants_with(&m, F60, AlphaLambdaMode::FreeSpace).unwrap();
        let b = propagation_constants_with(&m, F60, AlphaLambdaMode::InMedium).unwrap();
        assert_relative_eq!(
            b.alpha,
            a.alpha * m.refractive_index(),
            max_relative = 1e-12
        );
        assert_eq!(a.beta, b.beta);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = MaterialProperties::sio2();
        assert!(matches!(
            propagation_constants(&m, 0.0),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            propagation_constants(&m, -1.0),
            Err(Error::InvalidInput(_))
        ));
        let al = MaterialProperties::conductor("Al");
        assert!(matches!(
            propagation_constants(&al, F60),
            Err(Error::UnsupportedMaterial(_))
        ));
        assert!(MaterialProperties::dielectric("bad", 0.5, 0.0).is_err());
        assert!(MaterialProperties::dielectric("bad", 2.0, -0.1).is_err());

        let pc = propagation_constants(&m, F60).unwrap();
        assert!(matches!(
            complex_attenuation(&pc, 0.0, 0.0),
            Err(Error::InvalidDistance(_))
        ));
        assert!(matches!(
            complex_attenuation(&pc, -1e-3, 0.0),
            Err(Error::InvalidDistance(_))
        ));
        assert!(complex_attenuation(&pc, 1e-3, -1.0).is_err());
    }

    #[test]
    fn attenuation_one_millimetre_in_sio2() {
        let pc = propagation_constants(&MaterialProperties::sio2(), F60).unwrap();
        let f = complex_attenuation(&pc, 1e-3, 0.0).unwrap();
        assert_relative_eq!(f.norm(), 0.8854267992800487, max_relative = 1e-12);
    }

    #[test]
    fn lossless_is_phase_only() {
        let pc = propagation_constants(&MaterialProperties::air(), F60).unwrap();
        let d = 0.3e-3;
        let f = complex_attenuation(&pc, d, 0.0).unwrap();
        assert_relative_eq!(f.norm(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(f.arg(), -pc.beta * d, max_relative = 1e-12);
    }

    #[test]
    fn one_wavelength_is_full_cycle() {
        let m = MaterialProperties::sio2();
        let pc = propagation_constants(&m, F60).unwrap();
        let f = complex_attenuation(&pc, pc.lambda0 / m.refractive_index(), 0.0).unwrap();
        // arg lands on +-0 modulo 2 pi
        assert!(f.arg().abs() < 1e-9, "phase {}", f.arg());
    }

    #[test]
    fn spreading_exponent_scales_magnitude() {
        let pc = propagation_constants(&MaterialProperties::air(), F60).unwrap();
        let f = complex_attenuation(&pc, 2e-3, 1.0).unwrap();
        assert_relative_eq!(f.norm(), 500.0, max_relative = 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn semigroup(d1 in 1e-6f64..0.05, d2 in 1e-6f64..0.05,
                         er in 1.0f64..15.0, td in 0.0f64..0.5, f in 1e9f64..3e11) {
                let m = MaterialProperties::dielectric("m", er, td).unwrap();
                let pc = propagation_constants(&m, f).unwrap();
                let a = complex_attenuation(&pc, d1, 0.0).unwrap() * complex_attenuation(&pc, d2, 0.0).unwrap();
                let b = complex_attenuation(&pc, d1 + d2, 0.0).unwrap();
                prop_assert!((a - b).norm() <= 1e-12 * b.norm());
            }

            #[test]
            fn alpha_is_half_beta_tan_delta(er in 1.0f64..15.0, td in 0.0f64..0.5, f in 1e9f64..3e11) {
                let m = MaterialProperties::dielectric("m", er, td).unwrap();
                let pc = propagation_constants(&m, f).unwrap();
                let expect = pc.beta / 2.0 * td;
                prop_assert!((pc.alpha - expect).abs() <= 1e-12 * expect.abs().max(f64::MIN_POSITIVE));
            }

            #[test]
            fn magnitude_decreases_with_distance(d in 1e-6f64..0.05, dd in 1e-6f64..0.01) {
                let pc = propagation_constants(&MaterialProperties::si(), 60e9).unwrap();
                let a = complex_attenuation(&pc, d, 0.0).unwrap().norm();
                let b = complex_attenuation(&pc, d + dd, 0.0).unwrap().norm();
                prop_assert!(b < a);
            }
        }
    }
}
