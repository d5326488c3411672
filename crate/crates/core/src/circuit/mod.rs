//! Motor-braking damping module.
//!
//! A DC motor on the joint is braked through a switching circuit. Shorting the
//! motor through its own winding resistance gives *dynamic* braking, routing the
//! current through a storage element gives *regenerative* braking, and the
//! four-switch *hybrid* circuit blends the two so that the full dynamic damping
//! range is kept while still harvesting energy below the split point `u_r`.
//!
//! All functions here are pure.

pub mod rig;

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_range, Error, Result};

/// Default split point between the pure-regenerative and blended regimes.
pub const DEFAULT_SPLIT_POINT: f64 = 0.5;

/// Electrical constants of the damping motor.
///
/// The back-EMF constant is taken equal to the torque constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotorParams {
    /// Gearhead ratio between joint and motor shaft.
    pub gear_ratio: f64,
    /// Torque constant (Nm/A), equal to the back-EMF constant (V s/rad).
    pub torque_constant: f64,
    /// Winding resistance (Ohm).
    pub winding_resistance: f64,
}

impl MotorParams {
    pub fn new(gear_ratio: f64, torque_constant: f64, winding_resistance: f64) -> Result<Self> {
        let p = Self {
            gear_ratio,
            torque_constant,
            winding_resistance,
        };
        p.validate()?;
        Ok(p)
    }

    /// Maxon A-max 22 with the 20:1 gearhead used on the characterization rig.
    pub fn rig_motor() -> Self {
        Self {
            gear_ratio: 20.0,
            torque_constant: 0.0212,
            winding_resistance: 21.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("gear_ratio", self.gear_ratio)?;
        check_positive("torque_constant", self.torque_constant)?;
        check_positive("winding_resistance", self.winding_resistance)?;
        Ok(())
    }

    /// `n_d k_t`: joint torque per ampere, and back-EMF volts per joint rad/s.
    pub fn joint_torque_constant(&self) -> f64 {
        self.gear_ratio * self.torque_constant
    }

    /// Maximum dynamic-braking damping `n_d^2 k_t^2 / R_m` (Nms/rad).
    pub fn max_dynamic_damping(&self) -> f64 {
        self.joint_torque_constant().powi(2) / self.winding_resistance
    }

    /// Maximum regenerative-braking damping `n_d^2 k_t^2 / (R_m + R_l)` (Nms/rad).
    pub fn max_regenerative_damping(&self, storage: &StorageParams) -> f64 {
        self.joint_torque_constant().powi(2) / (self.winding_resistance + storage.load_resistance)
    }
}

/// Storage element seen by the damping circuit, modelled as a resistive load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageParams {
    /// Internal resistance of the storage element (Ohm).
    pub load_resistance: f64,
    /// `R_l / (R_m + R_l)`.
    pub alpha: f64,
}

impl StorageParams {
    pub fn new(load_resistance: f64, motor: &MotorParams) -> Result<Self> {
        check_positive("load_resistance", load_resistance)?;
        motor.validate()?;
        Ok(Self {
            load_resistance,
            alpha: load_resistance / (motor.winding_resistance + load_resistance),
        })
    }

    /// The 25.3 Ohm load resistor used on the characterization rig.
    pub fn rig_load(motor: &MotorParams) -> Self {
        Self::new(25.3, motor).expect("rig constants are valid")
    }

    pub fn validate(&self, motor: &MotorParams) -> Result<()> {
        check_positive("load_resistance", self.load_resistance)?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain {
                name: "alpha",
                value: self.alpha,
                domain: "(0, 1)",
            });
        }
        let expected = self.load_resistance / (motor.winding_resistance + self.load_resistance);
        if (expected - self.alpha).abs() > 1e-12 {
            return Err(Error::Inconsistent(format!(
                "alpha = {} but R_l / (R_m + R_l) = {expected}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Which braking law maps the damping command to a damping coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingScheme {
    Dynamic,
    Regenerative,
    Hybrid,
    /// Constant damping, independent of the command.
    Fixed,
}

impl DampingScheme {
    pub fn name(self) -> &'static str {
        match self {
            DampingScheme::Dynamic => "dynamic",
            DampingScheme::Regenerative => "regenerative",
            DampingScheme::Hybrid => "hybrid",
            DampingScheme::Fixed => "fixed",
        }
    }
}

/// Duty cycles of the regenerative (`D_r`) and dynamic (`D_d`) PWM channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DutyCycles {
    pub regenerative: f64,
    pub dynamic: f64,
}

/// Couples both duty cycles to a single command `u` in `[0, 1]`.
///
/// Below the split point only the regenerative channel is modulated; above it
/// the regenerative switch stays closed and the dynamic channel ramps up.
pub fn duty_cycles(u: f64, split_point: f64) -> Result<DutyCycles> {
    check_range("u", u, 0.0, 1.0, "[0, 1]")?;
    check_split_point(split_point)?;
    Ok(duty_cycles_unchecked(u, split_point))
}

/// Same mapping as [`duty_cycles`], extended linearly outside `[0, 1]`.
///
/// Used where finite differences step a hair past the command bounds.
pub(crate) fn duty_cycles_unchecked(u: f64, split_point: f64) -> DutyCycles {
    if u <= split_point {
        DutyCycles {
            regenerative: u / split_point,
            dynamic: 0.0,
        }
    } else {
        DutyCycles {
            regenerative: 1.0,
            dynamic: (u - split_point) / (1.0 - split_point),
        }
    }
}

fn check_split_point(split_point: f64) -> Result<f64> {
    if split_point.is_finite() && split_point > 0.0 && split_point < 1.0 {
        Ok(split_point)
    } else {
        Err(Error::Domain {
            name: "split_point",
            value: split_point,
            domain: "(0, 1)",
        })
    }
}

/// Damping law selector together with the derived maxima of the circuit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DampingConfig {
    pub scheme: DampingScheme,
    /// `u_r`: command at which the hybrid circuit leaves pure regeneration.
    pub split_point: f64,
    /// Maximum dynamic-braking damping `d1` (Nms/rad).
    pub max_dynamic: f64,
    /// Maximum regenerative-braking damping `d2 = (1 - alpha) * d1` (Nms/rad).
    pub max_regenerative: f64,
    /// Maximum hybrid damping `d3 = d1` (Nms/rad).
    pub max_hybrid: f64,
    /// Damping used by [`DampingScheme::Fixed`] (Nms/rad).
    pub fixed_value: f64,
    /// Load ratio `R_l / (R_m + R_l)`.
    pub alpha: f64,
}

impl DampingConfig {
    /// Derives the maxima from the motor and storage constants.
    pub fn from_circuit(
        scheme: DampingScheme,
        motor: &MotorParams,
        storage: &StorageParams,
        split_point: f64,
    ) -> Result<Self> {
        motor.validate()?;
        storage.validate(motor)?;
        let d1 = motor.max_dynamic_damping();
        Self::from_maxima(scheme, d1, storage.alpha, split_point)
    }

    /// Builds a configuration from `d1 = d3` and `alpha`.
    ///
    /// `d2 = n^2 k^2 / (R_m + R_l) = (1 - alpha) * d1` since `alpha = R_l / (R_m + R_l)`.
    pub fn from_maxima(scheme: DampingScheme, max_damping: f64, alpha: f64, split_point: f64) -> Result<Self> {
        check_positive("max_damping", max_damping)?;
        check_split_point(split_point)?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain {
                name: "alpha",
                value: alpha,
                domain: "(0, 1)",
            });
        }
        Ok(Self {
            scheme,
            split_point,
            max_dynamic: max_damping,
            max_regenerative: (1.0 - alpha) * max_damping,
            max_hybrid: max_damping,
            fixed_value: (1.0 - alpha) * max_damping,
            alpha,
        })
    }

    /// Ideal-VIA damping module: `d3 = 50`, `alpha = 0.5`, so `d2 = 25` Nms/rad.
    pub fn toy_hybrid() -> Self {
        Self::from_maxima(DampingScheme::Hybrid, 50.0, 0.5, DEFAULT_SPLIT_POINT).expect("valid constants")
    }

    pub fn with_scheme(mut self, scheme: DampingScheme) -> Self {
        self.scheme = scheme;
        self
    }

    /// Switches to [`DampingScheme::Fixed`] at the given coefficient.
    pub fn fixed(mut self, value: f64) -> Self {
        self.scheme = DampingScheme::Fixed;
        self.fixed_value = value;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_split_point(self.split_point)?;
        check_positive("max_dynamic", self.max_dynamic)?;
        check_positive("max_regenerative", self.max_regenerative)?;
        check_positive("max_hybrid", self.max_hybrid)?;
        check_range("fixed_value", self.fixed_value, 0.0, f64::INFINITY, "[0, inf)")?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain {
                name: "alpha",
                value: self.alpha,
                domain: "(0, 1)",
            });
        }
        let tol = 1e-12 * self.max_dynamic.max(1.0);
        if (self.max_regenerative - (1.0 - self.alpha) * self.max_dynamic).abs() > tol {
            return Err(Error::Inconsistent(format!(
                "max_regenerative = {} but (1 - alpha) * max_dynamic = {}",
                self.max_regenerative,
                (1.0 - self.alpha) * self.max_dynamic
            )));
        }
        if (self.max_hybrid - self.max_dynamic).abs() > tol {
            return Err(Error::Inconsistent(format!(
                "max_hybrid = {} differs from max_dynamic = {}",
                self.max_hybrid, self.max_dynamic
            )));
        }
        Ok(())
    }

    /// Damping coefficient `d(u)` in Nms/rad.
    pub fn damping_coefficient(&self, u: f64) -> Result<f64> {
        check_range("u", u, 0.0, 1.0, "[0, 1]")?;
        Ok(self.damping_unchecked(u))
    }

    /// Regeneration power (W) at command `u` and joint velocity `qdot`.
    pub fn regen_power(&self, u: f64, qdot: f64) -> Result<f64> {
        check_range("u", u, 0.0, 1.0, "[0, 1]")?;
        Ok(self.regen_coefficient_unchecked(u) * qdot * qdot)
    }

    /// Velocity-normalised regeneration coefficient `P0` (W s^2/rad^2).
    pub fn regen_coefficient(&self, u: f64) -> Result<f64> {
        check_range("u", u, 0.0, 1.0, "[0, 1]")?;
        Ok(self.regen_coefficient_unchecked(u))
    }

    pub(crate) fn damping_unchecked(&self, u: f64) -> f64 {
        match self.scheme {
            DampingScheme::Dynamic => self.max_dynamic * u,
            DampingScheme::Regenerative => self.max_regenerative * u,
            // The duty-cycle coupling makes the hybrid law linear over the whole range.
            DampingScheme::Hybrid => self.max_hybrid * u,
            DampingScheme::Fixed => self.fixed_value,
        }
    }

    pub(crate) fn regen_coefficient_unchecked(&self, u: f64) -> f64 {
        match self.scheme {
            DampingScheme::Dynamic => 0.0,
            DampingScheme::Regenerative => self.alpha * self.max_regenerative * u,
            DampingScheme::Hybrid => self.hybrid_regen_coefficient(u),
            // A fixed coefficient is realised by the hybrid circuit at the
            // equivalent command.
            DampingScheme::Fixed => {
                let u_eq = (self.fixed_value / self.max_hybrid).clamp(0.0, 1.0);
                self.hybrid_regen_coefficient(u_eq)
            }
        }
    }

    fn hybrid_regen_coefficient(&self, u: f64) -> f64 {
        let duty = duty_cycles_unchecked(u, self.split_point);
        self.alpha * self.max_regenerative * (duty.regenerative - duty.dynamic)
    }
}

/// Sign of the current produced by the damping motor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurrentDirection {
    Positive,
    Negative,
    Zero,
}

impl CurrentDirection {
    pub fn from_velocity(qdot: f64) -> Self {
        if qdot > 0.0 {
            CurrentDirection::Positive
        } else if qdot < 0.0 {
            CurrentDirection::Negative
        } else {
            CurrentDirection::Zero
        }
    }
}

/// Drive pattern of the four-switch bidirectional circuit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchConfig {
    pub duty_s1: f64,
    pub duty_s2: f64,
    pub s3_closed: bool,
    pub s4_closed: bool,
}

/// Assigns the coupled duty cycles to `S1`/`S2` and sets the steering switches
/// so that current always enters the storage element's positive terminal.
///
/// Zero current is treated as positive; the damping torque vanishes anyway.
pub fn switch_states(u: f64, split_point: f64, direction: CurrentDirection) -> Result<SwitchConfig> {
    let duty = duty_cycles(u, split_point)?;
    Ok(match direction {
        CurrentDirection::Positive | CurrentDirection::Zero => SwitchConfig {
            duty_s1: duty.regenerative,
            duty_s2: duty.dynamic,
            s3_closed: false,
            s4_closed: true,
        },
        CurrentDirection::Negative => SwitchConfig {
            duty_s1: duty.dynamic,
            duty_s2: duty.regenerative,
            s3_closed: true,
            s4_closed: false,
        },
    })
}
