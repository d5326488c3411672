//! MACCEPA spring linkage.
//!
//! The spring runs from the lever tip (distance `B` from the joint, driven by
//! the equilibrium servo) to a point at distance `C` on the link, and is
//! pretensioned by winding `r * theta2` onto a drum. With
//! `A = sqrt(B^2 + C^2 - 2 B C cos(theta1 - q))` the spring length, the stored
//! energy is `0.5 * kappa * (A - |C - B| + r theta2)^2`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::circuit::{DampingConfig, DampingScheme, MotorParams, StorageParams, DEFAULT_SPLIT_POINT};
use crate::error::{check_positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaccepaParams {
    /// Lever length `B` (m).
    pub lever: f64,
    /// Spring attachment distance `C` along the link (m).
    pub link: f64,
    /// Pretension drum radius `r` (m).
    pub drum_radius: f64,
    /// Linear spring constant `kappa` (N/m).
    pub spring_constant: f64,
    /// Link inertia (kg m^2).
    pub inertia: f64,
    /// Joint viscous friction (Nms/rad).
    pub friction: f64,
    /// Servo bandwidth `beta` (1/s).
    pub servo_bandwidth: f64,
    /// Constant external joint torque (Nm).
    pub external_torque: f64,
    pub u1_bounds: (f64, f64),
    pub u2_bounds: (f64, f64),
    pub damping: DampingConfig,
}

impl Default for MaccepaParams {
    fn default() -> Self {
        Self {
            lever: 0.036,
            link: 0.135,
            drum_radius: 0.015,
            spring_constant: 394.0,
            inertia: 0.0036,
            friction: 0.0077,
            servo_bandwidth: 25.0,
            external_torque: 0.0,
            u1_bounds: (-PI / 3.0, PI / 3.0),
            u2_bounds: (0.0, PI / 3.0),
            damping: Self::default_damping(),
        }
    }
}

impl MaccepaParams {
    /// Hybrid damping module driven through a 40:1 joint-to-motor ratio.
    pub fn default_damping() -> DampingConfig {
        let motor = Self::damping_motor();
        let storage = StorageParams::rig_load(&motor);
        DampingConfig::from_circuit(DampingScheme::Hybrid, &motor, &storage, DEFAULT_SPLIT_POINT)
            .expect("valid constants")
    }

    pub fn damping_motor() -> MotorParams {
        MotorParams {
            gear_ratio: 40.0,
            ..MotorParams::rig_motor()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lever", self.lever),
            ("link", self.link),
            ("drum_radius", self.drum_radius),
            ("spring_constant", self.spring_constant),
            ("inertia", self.inertia),
            ("servo_bandwidth", self.servo_bandwidth),
        ] {
            check_positive(name, v)?;
        }
        if !(self.lever < self.link) {
            return Err(Error::Inconsistent(format!(
                "lever B = {} must be shorter than link C = {}",
                self.lever, self.link
            )));
        }
        if !(self.friction >= 0.0) {
            return Err(Error::Domain {
                name: "friction",
                value: self.friction,
                domain: "[0, inf)",
            });
        }
        if !self.external_torque.is_finite() {
            return Err(Error::NonFinite("external_torque"));
        }
        for (lo, hi) in [self.u1_bounds, self.u2_bounds] {
            if !(lo <= hi) {
                return Err(Error::Inconsistent(format!("empty command range [{lo}, {hi}]")));
            }
        }
        self.damping.validate()
    }

    /// `|C - B|`, the spring length at zero deflection.
    pub fn rest_length(&self) -> f64 {
        (self.link - self.lever).abs()
    }

    /// Spring length `A(q, theta1)`.
    pub fn spring_length(&self, q: f64, theta1: f64) -> Result<f64> {
        let (b, c) = (self.lever, self.link);
        let a = (b * b + c * c - 2.0 * b * c * (theta1 - q).cos()).sqrt();
        if a > 1e-12 && a.is_finite() {
            Ok(a)
        } else {
            Err(Error::DegenerateGeometry(a))
        }
    }

    /// Spring force magnitude `kappa (A - |C - B| + r theta2)` (N).
    pub fn spring_force(&self, q: f64, theta1: f64, theta2: f64) -> Result<f64> {
        let a = self.spring_length(q, theta1)?;
        Ok(self.spring_constant * (a - self.rest_length() + self.drum_radius * theta2))
    }
}

/// Joint torque exerted by the spring (Nm).
pub fn spring_torque(q: f64, theta1: f64, theta2: f64, p: &MaccepaParams) -> Result<f64> {
    let a = p.spring_length(q, theta1)?;
    let pre = p.drum_radius * theta2 - p.rest_length();
    Ok(p.spring_constant * p.lever * p.link * (theta1 - q).sin() * (1.0 + pre / a))
}

/// Potential energy stored in the spring (J). Its negative `q`-gradient is
/// [`spring_torque`].
pub fn spring_energy(q: f64, theta1: f64, theta2: f64, p: &MaccepaParams) -> Result<f64> {
    let a = p.spring_length(q, theta1)?;
    let stretch = a - p.rest_length() + p.drum_radius * theta2;
    Ok(0.5 * p.spring_constant * stretch * stretch)
}

/// Joint stiffness `-d tau_s / d q` (Nm/rad), positive for a restoring spring.
pub fn joint_stiffness(q: f64, theta1: f64, theta2: f64, p: &MaccepaParams) -> Result<f64> {
    let a = p.spring_length(q, theta1)?;
    let bc = p.lever * p.link;
    let pre = p.drum_radius * theta2 - p.rest_length();
    let phi = theta1 - q;
    let (s, c) = phi.sin_cos();
    Ok(p.spring_constant * bc * (c * (1.0 + pre / a) - pre * bc * s * s / (a * a * a)))
}

/// Reaction torques on the two servos, `(-dE/dtheta1, -dE/dtheta2)` (Nm).
pub fn servo_torques(q: f64, theta1: f64, theta2: f64, p: &MaccepaParams) -> Result<(f64, f64)> {
    let a = p.spring_length(q, theta1)?;
    let force = p.spring_constant * (a - p.rest_length() + p.drum_radius * theta2);
    let da_dtheta1 = p.lever * p.link * (theta1 - q).sin() / a;
    Ok((-force * da_dtheta1, -force * p.drum_radius))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn torque_vanishes_at_equilibrium() {
        let p = MaccepaParams::default();
        for theta2 in [0.0, 0.3, 1.0] {
            assert_eq!(spring_torque(0.4, 0.4, theta2, &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn torque_reference_value() {
        // A = sqrt(0.036^2 + 0.135^2 - 2*0.036*0.135*cos 0.5) = 0.1048375...
        // tau = 394*0.036*0.135*sin(0.5)*(1 + (0.015*pi/6 - 0.099)/A)
        let p = MaccepaParams::default();
        let a = (0.036f64.powi(2) + 0.135f64.powi(2) - 2.0 * 0.036 * 0.135 * 0.5f64.cos()).sqrt();
        let expected = 394.0 * 0.036 * 0.135 * 0.5f64.sin() * (1.0 + (0.015 * PI / 6.0 - 0.099) / a);
        let tau = spring_torque(0.0, 0.5, PI / 6.0, &p).unwrap();
        assert_relative_eq!(tau, expected, max_relative = 1e-14);
        assert!((tau - 0.1198).abs() < 5e-4);
    }

    #[test]
    fn energy_reference_values() {
        let p = MaccepaParams::default();
        assert!(spring_energy(0.2, 0.2, 0.0, &p).unwrap().abs() < 1e-18);
        let e = spring_energy(0.0, 0.5, PI / 6.0, &p).unwrap();
        // 0.5 * 394 * (0.10484 - 0.099 + 0.007854)^2
        assert!((e - 3.65e-2).abs() < 5e-4, "E_s = {e}");
    }

    #[test]
    fn stiffness_at_zero_deflection() {
        let p = MaccepaParams::default();
        let theta2 = 0.8;
        let expected = 394.0 * 0.036 * 0.135 * (1.0 + (0.015 * theta2 - 0.099) / 0.099);
        assert_relative_eq!(joint_stiffness(0.1, 0.1, theta2, &p).unwrap(), expected, max_relative = 1e-12);
    }

    #[test]
    fn stiffness_grows_with_pretension() {
        let p = MaccepaParams::default();
        for phi in [-0.8, -0.3, 0.0, 0.4, 0.9] {
            let ks: Vec<f64> = (0..=60)
                .map(|i| joint_stiffness(0.0, phi, i as f64 / 60.0 * PI / 3.0, &p).unwrap())
                .collect();
            assert!(ks.windows(2).all(|w| w[1] > w[0]), "phi = {phi}");
        }
    }

    #[test]
    fn degenerate_geometry_is_reported() {
        let p = MaccepaParams {
            lever: 0.1,
            link: 0.1,
            ..MaccepaParams::default()
        };
        assert!(matches!(spring_torque(0.0, 0.0, 0.1, &p), Err(Error::DegenerateGeometry(_))));
        assert!(p.validate().is_err());
        assert!(MaccepaParams::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn torque_is_odd_in_deflection(q in -1.0..1.0f64, phi in -1.0..1.0f64, theta2 in 0.0..1.05f64) {
            let p = MaccepaParams::default();
            let fwd = spring_torque(q, q + phi, theta2, &p).unwrap();
            let back = spring_torque(q, q - phi, theta2, &p).unwrap();
            prop_assert!((fwd + back).abs() <= 1e-12 * fwd.abs().max(1.0));
        }

        #[test]
        fn servo_torques_match_energy_gradient(q in -1.0..1.0f64, t1 in -1.0..1.0f64, t2 in 0.0..1.05f64) {
            let p = MaccepaParams::default();
            let h = 1e-6;
            let e = |a: f64, b: f64| spring_energy(q, a, b, &p).unwrap();
            let g1 = (e(t1 + h, t2) - e(t1 - h, t2)) / (2.0 * h);
            let g2 = (e(t1, t2 + h) - e(t1, t2 - h)) / (2.0 * h);
            let (tau1, tau2) = servo_torques(q, t1, t2, &p).unwrap();
            prop_assert!((tau1 + g1).abs() <= 1e-6 * tau1.abs().max(1.0));
            prop_assert!((tau2 + g2).abs() <= 1e-6 * tau2.abs().max(1.0));
        }
    }
}
