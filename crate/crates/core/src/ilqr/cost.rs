use serde::{Deserialize, Serialize};

use crate::dynamics::{ActuatorModel, Control, State};
use crate::error::{Error, Result};

/// Which reaching objective the weights belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostVariant {
    /// `w1 (q - q*)^2 + w2 (u1 - q*)^2 + w3 u2^2 - w4 P_rege`
    Pendulum,
    /// `w1 (q - q*)^2 + w2 F_s^2 + w3 (u3 - 0.5)^2 + w4 |u|^2`
    Maccepa,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    /// Reaching target `q*` (rad).
    pub target: f64,
    /// Movement horizon `t_f` (s).
    pub horizon: f64,
    pub variant: CostVariant,
}

impl CostWeights {
    /// Ideal-VIA reaching weights over a 2 s horizon.
    pub fn pendulum(target: f64) -> Self {
        Self {
            w1: 1000.0,
            w2: 1.0,
            w3: 1.0,
            w4: 0.01,
            target,
            horizon: 2.0,
            variant: CostVariant::Pendulum,
        }
    }

    /// MACCEPA-VD reaching weights over a 1.5 s movement.
    pub fn maccepa(target: f64) -> Self {
        Self {
            w1: 1000.0,
            w2: 1.0,
            w3: 500.0,
            w4: 1e-6,
            target,
            horizon: 1.5,
            variant: CostVariant::Maccepa,
        }
    }

    pub fn with_target(mut self, target: f64) -> Self {
        self.target = target;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("w1", self.w1), ("w2", self.w2), ("w3", self.w3), ("w4", self.w4)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Domain {
                    name,
                    value: w,
                    domain: "[0, inf)",
                });
            }
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::Domain {
                name: "horizon",
                value: self.horizon,
                domain: "[0, inf)",
            });
        }
        if !self.target.is_finite() {
            return Err(Error::NonFinite("target"));
        }
        Ok(())
    }
}

fn check_variant(model: &ActuatorModel, w: &CostWeights) -> Result<()> {
    match (model, w.variant) {
        (ActuatorModel::Pendulum(_), CostVariant::Pendulum) | (ActuatorModel::Maccepa(_), CostVariant::Maccepa) => Ok(()),
        _ => Err(Error::Inconsistent(format!("{:?} cost on a {:?} model", w.variant, model.kind()))),
    }
}

/// Integrand of the reaching objective at `(x, u)`.
pub fn running_cost(model: &ActuatorModel, x: &State, u: &Control, w: &CostWeights) -> Result<f64> {
    check_variant(model, w)?;
    let err = x.q() - w.target;
    match model {
        ActuatorModel::Pendulum(p) => {
            let p_rege = p.damping.regen_coefficient_unchecked(u.u3) * x.qdot() * x.qdot();
            Ok(w.w1 * err * err + w.w2 * (u.u1 - w.target).powi(2) + w.w3 * u.u2 * u.u2 - w.w4 * p_rege)
        }
        ActuatorModel::Maccepa(p) => {
            let force = p.spring_force(x.q(), x.theta1(), x.theta2())?;
            let effort = u.u1 * u.u1 + u.u2 * u.u2 + u.u3 * u.u3;
            Ok(w.w1 * err * err + w.w2 * force * force + w.w3 * (u.u3 - 0.5).powi(2) + w.w4 * effort)
        }
    }
}

/// State-only part of the integrand, charged at the final sample.
pub fn terminal_cost(model: &ActuatorModel, x: &State, w: &CostWeights) -> Result<f64> {
    check_variant(model, w)?;
    let err = x.q() - w.target;
    match model {
        ActuatorModel::Pendulum(_) => Ok(w.w1 * err * err),
        ActuatorModel::Maccepa(p) => {
            let force = p.spring_force(x.q(), x.theta1(), x.theta2())?;
            Ok(w.w1 * err * err + w.w2 * force * force)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{IdealPendulumParams, MaccepaParams};
    use std::f64::consts::PI;

    #[test]
    fn pendulum_cost_vanishes_at_rest_on_target() {
        let model = ActuatorModel::Pendulum(IdealPendulumParams::default());
        let w = CostWeights::pendulum(PI / 3.0);
        let c = running_cost(&model, &State::pendulum(PI / 3.0, 0.0), &Control::new(PI / 3.0, 0.0, 0.5), &w).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn pendulum_cost_reference() {
        let model = ActuatorModel::Pendulum(IdealPendulumParams::default());
        let w = CostWeights::pendulum(PI / 3.0);
        let c = running_cost(&model, &State::pendulum(0.0, 0.0), &Control::new(PI / 3.0, 1.0, 0.5), &w).unwrap();
        let expected = 1000.0 * (PI / 3.0).powi(2) + 1.0;
        assert!((c - expected).abs() < 1e-9);
        assert!((expected - 1097.6).abs() < 0.1);
        // Regeneration lowers the cost.
        let moving = running_cost(&model, &State::pendulum(0.0, 2.0), &Control::new(PI / 3.0, 1.0, 0.5), &w).unwrap();
        assert!((moving - (expected - 0.01 * 12.5 * 4.0)).abs() < 1e-9);
    }

    #[test]
    fn maccepa_damping_term_vanishes_at_half() {
        let model = ActuatorModel::Maccepa(MaccepaParams::default());
        let w = CostWeights {
            w1: 0.0,
            w2: 0.0,
            w4: 0.0,
            ..CostWeights::maccepa(0.3)
        };
        let x = State::maccepa(0.1, 0.4, 0.2, 0.5, 0.0, 0.0);
        assert_eq!(running_cost(&model, &x, &Control::new(0.2, 0.5, 0.5), &w).unwrap(), 0.0);
        let c = running_cost(&model, &x, &Control::new(0.2, 0.5, 0.7), &w).unwrap();
        assert!((c - 20.0).abs() < 1e-12);
    }

    #[test]
    fn variant_must_match_model() {
        let model = ActuatorModel::Maccepa(MaccepaParams::default());
        let w = CostWeights::pendulum(0.0);
        assert!(running_cost(&model, &State::default(), &Control::default(), &w).is_err());
        assert!(CostWeights { w2: -1.0, ..w }.validate().is_err());
    }
}
