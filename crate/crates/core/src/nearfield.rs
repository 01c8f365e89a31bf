//! Near-field correction close to the antenna.
//!
//! Inside the radius `d_nf` the received power follows
//! `1/(kd)^2 + 1/(kd)^4 + 1/(kd)^6`. The near branch is scaled once so that it
//! meets the far-field law at `d_nf` without a jump.

use crate::{Error, Result};

/// Default near-field radius, m.
pub const DEFAULT_NEAR_FIELD_RADIUS: f64 = 1.3e-3;

pub fn near_field_relative_power(k: f64, d: f64) -> Result<f64> {
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::InvalidDistance(d));
    }
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::InvalidInput(format!("k must be positive, got {k}")));
    }
    Ok(relative_power(k, d))
}

fn relative_power(k: f64, d: f64) -> f64 {
    let x = 1.0 / (k * d * k * d);
    x + x * x + x * x * x
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearFieldModel {
    /// In-medium propagation constant, rad/m.
    pub k: f64,
    /// Near-field radius, m.
    pub d_nf: f64,
    /// Continuity factor applied to the near branch.
    pub scale: f64,
}

impl NearFieldModel {
    /// Fix the continuity factor against `far_model` evaluated at `d_nf`.
    pub fn new(k: f64, d_nf: f64, far_model: impl Fn(f64) -> f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidInput(format!("k must be positive, got {k}")));
        }
        if !(d_nf.is_finite() && d_nf > 0.0) {
            return Err(Error::InvalidInput(format!(
                "near-field radius must be positive, got {d_nf}"
            )));
        }
        let far = far_model(d_nf);
        if !(far.is_finite() && far > 0.0) {
            return Err(Error::InvalidInput(format!(
                "far-field model is undefined at the near-field radius ({far})"
            )));
        }
        let scale = far / relative_power(k, d_nf).sqrt();
        Ok(Self { k, d_nf, scale })
    }

    /// Near-branch magnitude at `d`, valid for any `d > 0`.
    pub fn near_magnitude(&self, d: f64) -> Result<f64> {
        Ok(self.scale * near_field_relative_power(self.k, d)?.sqrt())
    }

    pub fn blended_magnitude(&self, d: f64, far_model: impl Fn(f64) -> f64) -> Result<f64> {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::InvalidDistance(d));
        }
        if d >= self.d_nf {
            Ok(far_model(d))
        } else {
            self.near_magnitude(d)
        }
    }
}

pub fn blended_magnitude(
    d: f64,
    far_model: impl Fn(f64) -> f64,
    nf: &NearFieldModel,
) -> Result<f64> {
    nf.blended_magnitude(d, far_model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const K_SIO2: f64 = 2483.3773704130554;
    const ALPHA_SIO2: f64 = 121.68549115023971;

    fn far(d: f64) -> f64 {
        (-ALPHA_SIO2 * d).exp()
    }

    #[test]
    fn unit_kd() {
        assert_eq!(near_field_relative_power(1.0, 1.0).unwrap(), 3.0);
        assert_relative_eq!(
            near_field_relative_power(2.0, 0.5).unwrap(),
            3.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn kd_ten() {
        assert_relative_eq!(
            near_field_relative_power(10.0, 1.0).unwrap(),
            0.010101,
            max_relative = 1e-14
        );
    }

    #[test]
    fn far_limit() {
        let kd = 1e4;
        let p = near_field_relative_power(kd, 1.0).unwrap();
        assert!((p * kd * kd - 1.0).abs() < 1e-7);
    }

    #[test]
    fn sio2_at_point_two_mm() {
        // kd = 0.49668; terms 4.0537 + 16.433 + 66.614
        let p = near_field_relative_power(K_SIO2, 0.2e-3).unwrap();
        assert_relative_eq!(p, 87.10015924853326, max_relative = 1e-12);
    }

    #[test]
    fn rejects_non_positive_distance() {
        assert!(matches!(
            near_field_relative_power(1.0, 0.0),
            Err(Error::InvalidDistance(_))
        ));
        assert!(matches!(
            near_field_relative_power(1.0, -1.0),
            Err(Error::InvalidDistance(_))
        ));
        let nf = NearFieldModel::new(K_SIO2, DEFAULT_NEAR_FIELD_RADIUS, far).unwrap();
        assert!(nf.blended_magnitude(0.0, far).is_err());
    }

    #[test]
    fn continuity_and_growth() {
        let nf = NearFieldModel::new(K_SIO2, DEFAULT_NEAR_FIELD_RADIUS, far).unwrap();
        let at = nf.blended_magnitude(nf.d_nf, far).unwrap();
        let near = nf.near_magnitude(nf.d_nf).unwrap();
        assert!((20.0 * (near / at).log10()).abs() <= 0.01);
        assert!(nf.blended_magnitude(nf.d_nf / 2.0, far).unwrap() > at);
    }

    #[test]
    fn construction_fails_on_undefined_far_model() {
        assert!(NearFieldModel::new(K_SIO2, 1e-3, |_| f64::NAN).is_err());
        assert!(NearFieldModel::new(K_SIO2, 1e-3, |_| 0.0).is_err());
        assert!(NearFieldModel::new(K_SIO2, 0.0, far).is_err());
    }
}
