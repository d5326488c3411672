use serde::{Deserialize, Serialize};

use super::{ActuatorModel, Control, ModelKind, State};
use crate::error::{Error, Result};

/// 50 Hz command rate.
pub const DEFAULT_CONTROL_DT: f64 = 0.02;
/// RK4 substeps per command period (h = 2 ms at 50 Hz).
pub const DEFAULT_SUBSTEPS: usize = 10;

/// Instantaneous power flows (W) and damping coefficient at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Powers {
    pub p_rege: f64,
    /// Power delivered by the actuator onto the link.
    pub p_out: f64,
    /// Power into the spring from the equilibrium servo (zero for the pendulum).
    pub p_in1: f64,
    /// Power into the spring from the pretension servo (zero for the pendulum).
    pub p_in2: f64,
    pub damping: f64,
}

/// Powers at both ends of one integration step, evaluated with the command
/// held during that step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepPowers {
    pub start: Powers,
    pub end: Powers,
}

/// Result of a zero-order-hold rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub kind: ModelKind,
    /// Integration step (s).
    pub dt: f64,
    pub control_dt: f64,
    pub substeps: usize,
    /// `controls.len() * substeps + 1` samples.
    pub states: Vec<State>,
    pub controls: Vec<Control>,
    /// One entry per integration step.
    pub steps: Vec<StepPowers>,
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        self.steps.len() as f64 * self.dt
    }

    pub fn time(&self, sample: usize) -> f64 {
        sample as f64 * self.dt
    }

    pub fn final_state(&self) -> State {
        *self.states.last().expect("trajectory holds at least the initial state")
    }

    /// Command applied from this sample onwards (the last command for the final sample).
    pub fn control_at(&self, sample: usize) -> Option<Control> {
        if self.controls.is_empty() {
            return None;
        }
        let idx = (sample / self.substeps).min(self.controls.len() - 1);
        Some(self.controls[idx])
    }

    /// Powers at a sample, as seen by the command applied from it onwards.
    pub fn powers_at(&self, sample: usize) -> Option<Powers> {
        if sample < self.steps.len() {
            Some(self.steps[sample].start)
        } else {
            self.steps.last().map(|s| s.end)
        }
    }
}

/// One classical fourth-order Runge-Kutta step of `xdot = f(x)`.
pub fn rk4_step<F>(f: F, x: &State, h: f64) -> Result<State>
where
    F: Fn(&State) -> Result<State>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain {
            name: "h",
            value: h,
            domain: "(0, inf)",
        });
    }
    let k1 = f(x)?;
    let k2 = f(&x.add_scaled(0.5 * h, &k1))?;
    let k3 = f(&x.add_scaled(0.5 * h, &k2))?;
    let k4 = f(&x.add_scaled(h, &k3))?;
    let mut next = *x;
    for i in 0..State::DIM {
        next.0[i] += h / 6.0 * (k1.0[i] + 2.0 * k2.0[i] + 2.0 * k3.0[i] + k4.0[i]);
    }
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::NonFinite("rk4_step"))
    }
}

/// Advances one command period of `control_dt` in `substeps` RK4 steps.
pub fn integrate_period(
    model: &ActuatorModel,
    x: &State,
    u: &Control,
    control_dt: f64,
    substeps: usize,
) -> Result<State> {
    let h = control_dt / substeps as f64;
    let mut x = *x;
    for _ in 0..substeps {
        x = rk4_step(|s| model.derivative(s, u), &x, h)?;
    }
    Ok(x)
}

/// Integrates `model` from `x0`, holding each command for `control_dt`.
pub fn rollout(
    model: &ActuatorModel,
    x0: &State,
    controls: &[Control],
    control_dt: f64,
    substeps: usize,
) -> Result<Trajectory> {
    if substeps == 0 {
        return Err(Error::Domain {
            name: "substeps",
            value: 0.0,
            domain: "[1, inf)",
        });
    }
    if !(control_dt > 0.0 && control_dt.is_finite()) {
        return Err(Error::Domain {
            name: "control_dt",
            value: control_dt,
            domain: "(0, inf)",
        });
    }
    let h = control_dt / substeps as f64;
    let n = controls.len() * substeps;
    let mut states = Vec::with_capacity(n + 1);
    let mut steps = Vec::with_capacity(n);
    states.push(*x0);
    let mut x = *x0;
    for u in controls {
        for _ in 0..substeps {
            let start = model.powers(&x, u)?;
            x = rk4_step(|s| model.derivative(s, u), &x, h)?;
            let end = model.powers(&x, u)?;
            steps.push(StepPowers { start, end });
            states.push(x);
        }
    }
    Ok(Trajectory {
        kind: model.kind(),
        dt: h,
        control_dt,
        substeps,
        states,
        controls: controls.to_vec(),
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{IdealPendulumParams, MaccepaParams};
    use std::f64::consts::PI;

    #[test]
    fn zero_field_is_a_fixed_point() {
        let x = State::maccepa(0.1, -0.2, 0.3, 0.4, 0.5, 0.6);
        assert_eq!(rk4_step(|_| Ok(State::default()), &x, 0.01).unwrap(), x);
    }

    #[test]
    fn exponential_decay_local_error() {
        // One step of xdot = -x: RK4 reproduces e^{-h} up to h^5/120.
        for h in [0.01, 0.05, 0.1] {
            let x = State([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
            let next = rk4_step(
                |s| {
                    let mut d = State::default();
                    d.0[0] = -s.0[0];
                    Ok(d)
                },
                &x,
                h,
            )
            .unwrap();
            let err = (next.0[0] - (-h).exp()).abs();
            assert!(err <= h.powi(5) / 120.0 * 1.01, "h = {h}, err = {err}");
            assert!(err > 0.0 || h < 1e-3);
        }
    }

    #[test]
    fn rejects_bad_step_and_non_finite_field() {
        let x = State::default();
        assert!(rk4_step(|_| Ok(State::default()), &x, 0.0).is_err());
        let blown = rk4_step(|_| Ok(State([f64::INFINITY; 6])), &x, 0.1);
        assert_eq!(blown, Err(Error::NonFinite("rk4_step")));
    }

    #[test]
    fn empty_controls_give_initial_state_only() {
        let model = ActuatorModel::Pendulum(IdealPendulumParams::default());
        let traj = rollout(&model, &State::pendulum(0.2, 0.0), &[], 0.02, 10).unwrap();
        assert_eq!(traj.states, vec![State::pendulum(0.2, 0.0)]);
        assert!(traj.steps.is_empty());
        assert!(rollout(&model, &State::default(), &[], 0.02, 0).is_err());
    }

    #[test]
    fn equilibrium_rollout_is_constant() {
        let model = ActuatorModel::Maccepa(MaccepaParams::default());
        let u = Control::new(0.4, PI / 6.0, 0.5);
        let x0 = model.rest_state(0.4, &u);
        let traj = rollout(&model, &x0, &[u; 20], 0.02, 10).unwrap();
        assert_eq!(traj.states.len(), 201);
        assert!(traj.states.iter().all(|s| *s == x0));
    }

    #[test]
    fn servo_step_never_overshoots() {
        let model = ActuatorModel::Maccepa(MaccepaParams::default());
        let u = Control::new(0.8, 0.9, 0.5);
        let traj = rollout(&model, &State::default(), &[u; 50], 0.02, 10).unwrap();
        assert!(traj.states.iter().all(|s| s.theta1() <= 0.8 && s.theta2() <= 0.9));
        assert!((traj.final_state().theta1() - 0.8).abs() < 1e-6);
    }
}
