//! Actuator dynamics: the ideal-VIA pendulum and the MACCEPA-VD joint.

pub mod maccepa;
mod integrate;

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::circuit::DampingConfig;
use crate::error::{check_positive, Error, Result};

pub use integrate::{integrate_period, rk4_step, rollout, Powers, StepPowers, Trajectory, DEFAULT_CONTROL_DT, DEFAULT_SUBSTEPS};
pub use maccepa::{joint_stiffness, servo_torques, spring_energy, spring_torque, MaccepaParams};

/// Full state `(q, qdot, theta1, theta2, theta1_dot, theta2_dot)`.
///
/// The pendulum only uses the first two entries; the servo entries stay zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State(pub [f64; 6]);

impl State {
    pub const DIM: usize = 6;

    pub fn pendulum(q: f64, qdot: f64) -> Self {
        State([q, qdot, 0.0, 0.0, 0.0, 0.0])
    }

    pub fn maccepa(q: f64, qdot: f64, theta1: f64, theta2: f64, theta1_dot: f64, theta2_dot: f64) -> Self {
        State([q, qdot, theta1, theta2, theta1_dot, theta2_dot])
    }

    pub fn q(&self) -> f64 {
        self.0[0]
    }
    pub fn qdot(&self) -> f64 {
        self.0[1]
    }
    pub fn theta1(&self) -> f64 {
        self.0[2]
    }
    pub fn theta2(&self) -> f64 {
        self.0[3]
    }
    pub fn theta1_dot(&self) -> f64 {
        self.0[4]
    }
    pub fn theta2_dot(&self) -> f64 {
        self.0[5]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// `self + scale * other`.
    pub fn add_scaled(&self, scale: f64, other: &State) -> State {
        let mut out = *self;
        for (o, d) in out.0.iter_mut().zip(other.0) {
            *o += scale * d;
        }
        out
    }
}

/// Commands: equilibrium (`u1`), stiffness (`u2`) and damping (`u3`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
}

impl Control {
    pub const DIM: usize = 3;

    pub fn new(u1: f64, u2: f64, u3: f64) -> Self {
        Self { u1, u2, u3 }
    }

    pub fn get(&self, channel: usize) -> f64 {
        match channel {
            0 => self.u1,
            1 => self.u2,
            2 => self.u3,
            _ => panic!("control channel {channel} out of range"),
        }
    }

    pub fn set(&mut self, channel: usize, value: f64) {
        match channel {
            0 => self.u1 = value,
            1 => self.u2 = value,
            2 => self.u3 = value,
            _ => panic!("control channel {channel} out of range"),
        }
    }
}

/// Pendulum driven by an ideal VIA with linear stiffness `k = k_max * u2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdealPendulumParams {
    pub mass: f64,
    pub length: f64,
    pub friction: f64,
    /// Stiffness at `u2 = 1` (Nm/rad).
    pub max_stiffness: f64,
    pub u1_bounds: (f64, f64),
    pub u2_bounds: (f64, f64),
    pub damping: DampingConfig,
}

impl Default for IdealPendulumParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            length: 1.0,
            friction: 0.01,
            max_stiffness: 200.0,
            u1_bounds: (-PI / 2.0, PI / 2.0),
            u2_bounds: (0.0, 1.0),
            damping: DampingConfig::toy_hybrid(),
        }
    }
}

impl IdealPendulumParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("mass", self.mass)?;
        check_positive("length", self.length)?;
        check_positive("max_stiffness", self.max_stiffness)?;
        if !(self.friction >= 0.0) {
            return Err(Error::Domain {
                name: "friction",
                value: self.friction,
                domain: "[0, inf)",
            });
        }
        for (lo, hi) in [self.u1_bounds, self.u2_bounds] {
            if !(lo <= hi) {
                return Err(Error::Inconsistent(format!("empty command range [{lo}, {hi}]")));
            }
        }
        self.damping.validate()
    }

    pub fn moment_of_inertia(&self) -> f64 {
        self.mass * self.length * self.length
    }

    pub fn stiffness(&self, u2: f64) -> f64 {
        self.max_stiffness * u2
    }
}

/// `d/dt (q, qdot)` for the ideal-VIA pendulum.
///
/// The damper acts on velocity: `m l^2 qddot = k(u2) (u1 - q) - (d(u3) + b) qdot`.
pub fn pendulum_derivative(x: &State, u: &Control, p: &IdealPendulumParams) -> State {
    let d = p.damping.damping_unchecked(u.u3);
    let torque = p.stiffness(u.u2) * (u.u1 - x.q()) - (d + p.friction) * x.qdot();
    State::pendulum(x.qdot(), torque / p.moment_of_inertia())
}

/// `d/dt x` for the MACCEPA-VD joint with critically damped servos.
pub fn maccepa_derivative(x: &State, u: &Control, p: &MaccepaParams) -> Result<State> {
    let tau_s = spring_torque(x.q(), x.theta1(), x.theta2(), p)?;
    let d = p.damping.damping_unchecked(u.u3);
    let qddot = (tau_s - (d + p.friction) * x.qdot() - p.external_torque) / p.inertia;
    let beta = p.servo_bandwidth;
    let servo = |target: f64, angle: f64, rate: f64| beta * beta * (target - angle) - 2.0 * beta * rate;
    Ok(State::maccepa(
        x.qdot(),
        qddot,
        x.theta1_dot(),
        x.theta2_dot(),
        servo(u.u1, x.theta1(), x.theta1_dot()),
        servo(u.u2, x.theta2(), x.theta2_dot()),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Pendulum,
    Maccepa,
}

/// Either actuator, behind one interface for the integrator and optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActuatorModel {
    Pendulum(IdealPendulumParams),
    Maccepa(MaccepaParams),
}

impl ActuatorModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            ActuatorModel::Pendulum(_) => ModelKind::Pendulum,
            ActuatorModel::Maccepa(_) => ModelKind::Maccepa,
        }
    }

    /// Number of meaningful state entries.
    pub fn state_dim(&self) -> usize {
        match self {
            ActuatorModel::Pendulum(_) => 2,
            ActuatorModel::Maccepa(_) => 6,
        }
    }

    pub fn damping(&self) -> &DampingConfig {
        match self {
            ActuatorModel::Pendulum(p) => &p.damping,
            ActuatorModel::Maccepa(p) => &p.damping,
        }
    }

    pub fn damping_mut(&mut self) -> &mut DampingConfig {
        match self {
            ActuatorModel::Pendulum(p) => &mut p.damping,
            ActuatorModel::Maccepa(p) => &mut p.damping,
        }
    }

    /// Inclusive command box per channel.
    pub fn control_bounds(&self) -> [(f64, f64); 3] {
        match self {
            ActuatorModel::Pendulum(p) => [p.u1_bounds, p.u2_bounds, (0.0, 1.0)],
            ActuatorModel::Maccepa(p) => [p.u1_bounds, p.u2_bounds, (0.0, 1.0)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ActuatorModel::Pendulum(p) => p.validate(),
            ActuatorModel::Maccepa(p) => p.validate(),
        }
    }

    pub fn derivative(&self, x: &State, u: &Control) -> Result<State> {
        match self {
            ActuatorModel::Pendulum(p) => Ok(pendulum_derivative(x, u, p)),
            ActuatorModel::Maccepa(p) => maccepa_derivative(x, u, p),
        }
    }

    /// Instantaneous powers at `(x, u)`.
    pub fn powers(&self, x: &State, u: &Control) -> Result<Powers> {
        let damping = self.damping();
        let d = damping.damping_unchecked(u.u3);
        let p_rege = damping.regen_coefficient_unchecked(u.u3) * x.qdot() * x.qdot();
        match self {
            ActuatorModel::Pendulum(p) => Ok(Powers {
                p_rege,
                p_out: p.stiffness(u.u2) * (u.u1 - x.q()) * x.qdot(),
                p_in1: 0.0,
                p_in2: 0.0,
                damping: d,
            }),
            ActuatorModel::Maccepa(p) => {
                let tau_s = spring_torque(x.q(), x.theta1(), x.theta2(), p)?;
                let (tau1, tau2) = servo_torques(x.q(), x.theta1(), x.theta2(), p)?;
                Ok(Powers {
                    p_rege,
                    p_out: tau_s * x.qdot(),
                    p_in1: -tau1 * x.theta1_dot(),
                    p_in2: -tau2 * x.theta2_dot(),
                    damping: d,
                })
            }
        }
    }

    /// Kinetic energy of the link plus elastic energy in the actuator (J).
    pub fn mechanical_energy(&self, x: &State, u: &Control) -> Result<f64> {
        match self {
            ActuatorModel::Pendulum(p) => {
                let spring = 0.5 * p.stiffness(u.u2) * (u.u1 - x.q()).powi(2);
                Ok(0.5 * p.moment_of_inertia() * x.qdot().powi(2) + spring)
            }
            ActuatorModel::Maccepa(p) => {
                let spring = spring_energy(x.q(), x.theta1(), x.theta2(), p)?;
                Ok(0.5 * p.inertia * x.qdot().powi(2) + spring)
            }
        }
    }

    /// A state at rest with the servos (if any) sitting on their commands.
    pub fn rest_state(&self, q: f64, u: &Control) -> State {
        match self {
            ActuatorModel::Pendulum(_) => State::pendulum(q, 0.0),
            ActuatorModel::Maccepa(_) => State::maccepa(q, 0.0, u.u1, u.u2, 0.0, 0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::DampingScheme;
    use approx::assert_relative_eq;

    #[test]
    fn pendulum_at_equilibrium_is_still() {
        let p = IdealPendulumParams::default();
        let dx = pendulum_derivative(&State::pendulum(PI / 3.0, 0.0), &Control::new(PI / 3.0, 0.7, 0.4), &p);
        assert_eq!(dx.0[..2], [0.0, 0.0]);
    }

    #[test]
    fn pendulum_spring_acceleration() {
        let p = IdealPendulumParams::default();
        let dx = pendulum_derivative(&State::pendulum(0.0, 0.0), &Control::new(PI / 3.0, 0.5, 0.0), &p);
        assert_relative_eq!(dx.qdot(), 100.0 * PI / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn pendulum_pure_damping_deceleration() {
        let p = IdealPendulumParams::default();
        let dx = pendulum_derivative(&State::pendulum(0.0, 1.0), &Control::new(0.0, 0.0, 1.0), &p);
        assert_relative_eq!(dx.qdot(), -50.01, max_relative = 1e-15);
    }

    #[test]
    fn maccepa_full_equilibrium() {
        let p = MaccepaParams::default();
        let x = State::maccepa(0.3, 0.0, 0.3, 0.6, 0.0, 0.0);
        let dx = maccepa_derivative(&x, &Control::new(0.3, 0.6, 0.8), &p).unwrap();
        assert_eq!(dx.0, [0.0; 6]);
    }

    #[test]
    fn maccepa_spring_acceleration() {
        let p = MaccepaParams::default();
        let x = State::maccepa(0.0, 0.0, 0.5, PI / 6.0, 0.0, 0.0);
        let dx = maccepa_derivative(&x, &Control::new(0.5, PI / 6.0, 0.0), &p).unwrap();
        let tau = spring_torque(0.0, 0.5, PI / 6.0, &p).unwrap();
        assert_relative_eq!(dx.qdot(), tau / 0.0036, max_relative = 1e-14);
        assert!((dx.qdot() - 33.3).abs() < 0.1);
    }

    #[test]
    fn external_torque_opposes_motion() {
        let p = MaccepaParams {
            external_torque: 0.01,
            ..MaccepaParams::default()
        };
        let x = State::maccepa(0.0, 0.0, 0.0, 0.5, 0.0, 0.0);
        let dx = maccepa_derivative(&x, &Control::new(0.0, 0.5, 0.0), &p).unwrap();
        assert_relative_eq!(dx.qdot(), -0.01 / 0.0036, max_relative = 1e-14);
    }

    #[test]
    fn powers_follow_scheme() {
        let mut model = ActuatorModel::Pendulum(IdealPendulumParams::default());
        let x = State::pendulum(0.0, 2.0);
        let u = Control::new(PI / 3.0, 0.5, 0.5);
        let pw = model.powers(&x, &u).unwrap();
        assert_eq!(pw.p_rege, 12.5 * 4.0);
        assert_eq!(pw.damping, 25.0);
        assert_relative_eq!(pw.p_out, 100.0 * PI / 3.0 * 2.0, max_relative = 1e-15);
        model.damping_mut().scheme = DampingScheme::Dynamic;
        assert_eq!(model.powers(&x, &u).unwrap().p_rege, 0.0);
    }
}
