//! Energy bookkeeping along rollouts.
//!
//! The spring port obeys `dE_s/dt = -P_out + P_in1 + P_in2`: the link draws
//! `P_out = tau_s qdot`, while the two servos feed `P_in1 = -tau1 theta1_dot`
//! and `P_in2 = -tau2 theta2_dot`, with `tau_i = -dE_s/dtheta_i`. Every integral
//! here is a trapezoid over the integrator's own step grid.

use serde::{Deserialize, Serialize};

use crate::dynamics::{spring_energy, ActuatorModel, Control, ModelKind, State, Trajectory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsumptionMode {
    /// Signed servo power; servos may return energy.
    Raw,
    /// Only positive servo power counts, since the servos cannot regenerate.
    #[default]
    Rectified,
}

/// Energy increments of one integration step (J).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepEnergy {
    pub work: f64,
    pub regenerated: f64,
    pub consumed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    /// Mechanical work delivered to the link.
    #[serde(rename = "E")]
    pub work: f64,
    #[serde(rename = "E_rege")]
    pub regenerated: f64,
    #[serde(rename = "E_net")]
    pub net: f64,
    /// `E_rege / E`, zero when no positive work was delivered.
    #[serde(rename = "eta")]
    pub ratio: f64,
    /// Servo-side consumption; `None` for the pendulum, which has no servos.
    #[serde(rename = "E_in")]
    pub consumed: Option<f64>,
    #[serde(skip)]
    pub breakdown: Vec<StepEnergy>,
}

fn trapezoid(traj: &Trajectory, f: impl Fn(&crate::dynamics::Powers) -> f64) -> f64 {
    traj.steps.iter().map(|s| 0.5 * traj.dt * (f(&s.start) + f(&s.end))).sum()
}

/// `E = integral of P_out dt`.
pub fn mechanical_work(traj: &Trajectory) -> f64 {
    trapezoid(traj, |p| p.p_out)
}

/// `E_rege = integral of P_rege dt`.
pub fn regenerated_energy(traj: &Trajectory) -> f64 {
    trapezoid(traj, |p| p.p_rege)
}

pub fn consumed_energy(traj: &Trajectory, mode: ConsumptionMode) -> Result<f64> {
    if traj.kind != ModelKind::Maccepa {
        return Err(Error::UnsupportedModel("pendulum"));
    }
    Ok(match mode {
        ConsumptionMode::Raw => trapezoid(traj, |p| p.p_in1 + p.p_in2),
        ConsumptionMode::Rectified => trapezoid(traj, |p| p.p_in1.max(0.0) + p.p_in2.max(0.0)),
    })
}

pub fn energy_report(traj: &Trajectory, mode: ConsumptionMode) -> EnergyReport {
    let work = mechanical_work(traj);
    let regenerated = regenerated_energy(traj);
    let consumed = consumed_energy(traj, mode).ok();
    let has_servos = consumed.is_some();
    let breakdown = traj
        .steps
        .iter()
        .map(|s| {
            let half = 0.5 * traj.dt;
            let consumed = if !has_servos {
                0.0
            } else {
                match mode {
                    ConsumptionMode::Raw => half * (s.start.p_in1 + s.start.p_in2 + s.end.p_in1 + s.end.p_in2),
                    ConsumptionMode::Rectified => {
                        let r = |p: &crate::dynamics::Powers| p.p_in1.max(0.0) + p.p_in2.max(0.0);
                        half * (r(&s.start) + r(&s.end))
                    }
                }
            };
            StepEnergy {
                work: half * (s.start.p_out + s.end.p_out),
                regenerated: half * (s.start.p_rege + s.end.p_rege),
                consumed,
            }
        })
        .collect();
    EnergyReport {
        work,
        regenerated,
        net: work - regenerated,
        ratio: if work > 0.0 { regenerated / work } else { 0.0 },
        consumed,
        breakdown,
    }
}

/// Residual of the spring-port balance at `(x, u)`, normalised by `max(1, |P_out|)`.
///
/// `dE_s/dt` is taken by central differences of the spring energy along the
/// flow direction, independently of the analytic torques behind the powers.
pub fn power_balance_residual(model: &ActuatorModel, x: &State, u: &Control, eps: f64) -> Result<f64> {
    let ActuatorModel::Maccepa(p) = model else {
        return Err(Error::UnsupportedModel("pendulum"));
    };
    let flow = model.derivative(x, u)?;
    let e = |s: State| spring_energy(s.q(), s.theta1(), s.theta2(), p);
    let e_dot = (e(x.add_scaled(eps, &flow))? - e(x.add_scaled(-eps, &flow))?) / (2.0 * eps);
    let pw = model.powers(x, u)?;
    Ok((e_dot + pw.p_out - pw.p_in1 - pw.p_in2).abs() / pw.p_out.abs().max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{rollout, IdealPendulumParams, MaccepaParams, Powers, StepPowers};
    use crate::circuit::DampingScheme;
    use std::f64::consts::PI;

    fn constant_power_trajectory(p: Powers, steps: usize, dt: f64) -> Trajectory {
        Trajectory {
            kind: ModelKind::Maccepa,
            dt,
            control_dt: dt,
            substeps: 1,
            states: vec![State::default(); steps + 1],
            controls: vec![Control::default(); steps],
            steps: vec![StepPowers { start: p, end: p }; steps],
        }
    }

    #[test]
    fn rectangle_rules() {
        let p = Powers {
            p_out: 2.0,
            p_rege: 1.0,
            ..Powers::default()
        };
        let single = constant_power_trajectory(p, 1, 0.02);
        assert!((mechanical_work(&single) - 0.04).abs() < 1e-15);
        let second = constant_power_trajectory(p, 100, 0.01);
        assert!((regenerated_energy(&second) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn still_trajectory_has_no_energy_flow() {
        let model = ActuatorModel::Maccepa(MaccepaParams::default());
        let u = Control::new(0.2, 0.5, 0.5);
        let traj = rollout(&model, &model.rest_state(0.2, &u), &[u; 10], 0.02, 10).unwrap();
        let report = energy_report(&traj, ConsumptionMode::Rectified);
        assert_eq!((report.work, report.regenerated, report.consumed), (0.0, 0.0, Some(0.0)));
        assert_eq!(report.ratio, 0.0);
    }

    #[test]
    fn dynamic_braking_regenerates_nothing() {
        let mut params = IdealPendulumParams::default();
        params.damping.scheme = DampingScheme::Dynamic;
        let model = ActuatorModel::Pendulum(params);
        let traj = rollout(&model, &State::pendulum(0.0, 0.0), &[Control::new(PI / 3.0, 0.5, 0.4); 50], 0.02, 10).unwrap();
        assert_eq!(regenerated_energy(&traj), 0.0);
        assert!(mechanical_work(&traj) > 0.0);
    }

    #[test]
    fn full_hybrid_command_regenerates_nothing() {
        let model = ActuatorModel::Pendulum(IdealPendulumParams::default());
        let traj = rollout(&model, &State::pendulum(0.0, 0.0), &[Control::new(PI / 3.0, 0.5, 1.0); 50], 0.02, 10).unwrap();
        assert!(regenerated_energy(&traj).abs() < 1e-12);
    }

    #[test]
    fn pendulum_has_no_consumption() {
        let model = ActuatorModel::Pendulum(IdealPendulumParams::default());
        let traj = rollout(&model, &State::pendulum(0.0, 0.0), &[Control::new(0.5, 0.5, 0.5); 5], 0.02, 10).unwrap();
        assert_eq!(
            consumed_energy(&traj, ConsumptionMode::Raw),
            Err(Error::UnsupportedModel("pendulum"))
        );
        let report = energy_report(&traj, ConsumptionMode::Rectified);
        assert_eq!(report.consumed, None);
        assert_eq!(report.net, report.work - report.regenerated);
        let json = serde_json::to_value(&report).unwrap();
        for key in ["E", "E_rege", "E_net", "eta", "E_in"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    fn moving_maccepa() -> (ActuatorModel, Trajectory) {
        let model = ActuatorModel::Maccepa(MaccepaParams::default());
        let controls: Vec<Control> = (0..75)
            .map(|k| {
                let t = k as f64 * 0.02;
                Control::new(0.8 * (3.0 * t).sin(), 0.5 + 0.4 * (2.0 * t).cos(), 0.5 + 0.4 * (5.0 * t).sin())
            })
            .collect();
        let traj = rollout(&model, &State::maccepa(-0.3, 0.0, 0.0, 0.5, 0.0, 0.0), &controls, 0.02, 10).unwrap();
        (model, traj)
    }

    #[test]
    fn power_balance_holds_pointwise() {
        let (model, traj) = moving_maccepa();
        for (i, x) in traj.states.iter().enumerate() {
            let u = traj.control_at(i).unwrap();
            let r = power_balance_residual(&model, x, &u, 1e-6).unwrap();
            assert!(r < 1e-6, "sample {i}: residual {r}");
        }
    }

    #[test]
    fn raw_consumption_balances_work_and_storage() {
        let (model, traj) = moving_maccepa();
        let ActuatorModel::Maccepa(p) = model else { unreachable!() };
        let e_s = |s: &State| spring_energy(s.q(), s.theta1(), s.theta2(), &p).unwrap();
        let raw = consumed_energy(&traj, ConsumptionMode::Raw).unwrap();
        let stored = e_s(&traj.final_state()) - e_s(&traj.states[0]);
        let scale = raw.abs().max(mechanical_work(&traj).abs()).max(1e-3);
        assert!((raw - mechanical_work(&traj) - stored).abs() < 1e-3 * scale);
        assert!(consumed_energy(&traj, ConsumptionMode::Rectified).unwrap() >= raw);
    }
}
