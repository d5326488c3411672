//! Iterative LQR over the zero-order-hold discretisation of an actuator model.
//!
//! The discrete dynamics are one command period of RK4 substeps; Jacobians of
//! that map and the quadratic model of the cost are taken by central finite
//! differences. Command bounds are enforced by clamping in the forward pass,
//! and channels already pinned against a bound are dropped from the Newton step.

mod cost;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate_period, rollout, ActuatorModel, Control, State, Trajectory};
use crate::error::{Error, Result};

pub use cost::{running_cost, terminal_cost, CostVariant, CostWeights};

/// A reaching problem for one movement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationProblem {
    pub model: ActuatorModel,
    pub x0: State,
    pub weights: CostWeights,
    pub control_dt: f64,
    pub substeps: usize,
    /// Channels held at a constant value; they are not decision variables.
    pub frozen: [Option<f64>; 3],
    /// Warm start; defaults to [`OptimizationProblem::default_initial_controls`].
    pub initial: Option<Vec<Control>>,
}

impl OptimizationProblem {
    pub fn new(model: ActuatorModel, x0: State, weights: CostWeights) -> Self {
        Self {
            model,
            x0,
            weights,
            control_dt: crate::dynamics::DEFAULT_CONTROL_DT,
            substeps: crate::dynamics::DEFAULT_SUBSTEPS,
            frozen: [None; 3],
            initial: None,
        }
    }

    pub fn freeze(mut self, channel: usize, value: f64) -> Self {
        self.frozen[channel] = Some(value);
        self
    }

    pub fn horizon_steps(&self) -> usize {
        (self.weights.horizon / self.control_dt).round() as usize
    }

    pub fn free_channels(&self) -> Vec<usize> {
        (0..Control::DIM).filter(|&c| self.frozen[c].is_none()).collect()
    }

    pub fn bounds(&self) -> [(f64, f64); 3] {
        self.model.control_bounds()
    }

    /// `u1` at the target, `u2` mid-range, `u3` at 0.5; frozen channels at their values.
    pub fn default_initial_controls(&self) -> Vec<Control> {
        let b = self.bounds();
        let mut u = Control::new(
            self.weights.target.clamp(b[0].0, b[0].1),
            0.5 * (b[1].0 + b[1].1),
            0.5f64.clamp(b[2].0, b[2].1),
        );
        self.apply_frozen(&mut u);
        vec![u; self.horizon_steps()]
    }

    fn apply_frozen(&self, u: &mut Control) {
        for (c, v) in self.frozen.iter().enumerate() {
            if let Some(v) = v {
                u.set(c, *v);
            }
        }
    }

    fn clamp(&self, u: &mut Control) {
        for (c, (lo, hi)) in self.bounds().into_iter().enumerate() {
            u.set(c, u.get(c).clamp(lo, hi));
        }
        self.apply_frozen(u);
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.weights.validate()?;
        if !(self.control_dt > 0.0 && self.control_dt.is_finite()) {
            return Err(Error::Domain {
                name: "control_dt",
                value: self.control_dt,
                domain: "(0, inf)",
            });
        }
        if self.substeps == 0 {
            return Err(Error::Domain {
                name: "substeps",
                value: 0.0,
                domain: "[1, inf)",
            });
        }
        if !self.x0.is_finite() {
            return Err(Error::NonFinite("x0"));
        }
        if let Some(init) = &self.initial
            && init.len() != self.horizon_steps()
        {
            return Err(Error::Inconsistent(format!(
                "{} initial controls for a {}-step horizon",
                init.len(),
                self.horizon_steps()
            )));
        }
        Ok(())
    }

    fn step(&self, x: &State, u: &Control) -> Result<State> {
        integrate_period(&self.model, x, u, self.control_dt, self.substeps)
    }

    fn stage_cost(&self, x: &State, u: &Control) -> Result<f64> {
        Ok(self.control_dt * running_cost(&self.model, x, u, &self.weights)?)
    }

    fn final_cost(&self, x: &State) -> Result<f64> {
        Ok(self.control_dt * terminal_cost(&self.model, x, &self.weights)?)
    }

    /// Discretised objective: `dt * (sum of running costs + terminal state cost)`.
    pub fn total_cost(&self, controls: &[Control]) -> Result<f64> {
        let mut x = self.x0;
        let mut j = 0.0;
        for u in controls {
            j += self.stage_cost(&x, u)?;
            x = self.step(&x, u)?;
        }
        j += self.final_cost(&x)?;
        if j.is_finite() { Ok(j) } else { Err(Error::NonFinite("total_cost")) }
    }

    fn simulate(&self, controls: &[Control]) -> Result<(Vec<State>, f64)> {
        let mut xs = Vec::with_capacity(controls.len() + 1);
        let mut x = self.x0;
        let mut j = 0.0;
        xs.push(x);
        for u in controls {
            j += self.stage_cost(&x, u)?;
            x = self.step(&x, u)?;
            xs.push(x);
        }
        j += self.final_cost(&x)?;
        if j.is_finite() { Ok((xs, j)) } else { Err(Error::NonFinite("total_cost")) }
    }
}

/// Central-difference Jacobians `(A, B)` of one command period at `(x, u)`.
///
/// `A` is `n x n` over the model's meaningful state entries, `B` is `n x m`
/// over the free channels only.
pub fn linearize(problem: &OptimizationProblem, x: &State, u: &Control, h_fd: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(h_fd > 0.0) {
        return Err(Error::Domain {
            name: "h_fd",
            value: h_fd,
            domain: "(0, inf)",
        });
    }
    let n = problem.model.state_dim();
    let free = problem.free_channels();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, free.len());
    for j in 0..n {
        let (mut xp, mut xm) = (*x, *x);
        xp.0[j] += h_fd;
        xm.0[j] -= h_fd;
        let (fp, fm) = (problem.step(&xp, u)?, problem.step(&xm, u)?);
        for i in 0..n {
            a[(i, j)] = (fp.0[i] - fm.0[i]) / (2.0 * h_fd);
        }
    }
    for (col, &c) in free.iter().enumerate() {
        let (mut up, mut um) = (*u, *u);
        up.set(c, u.get(c) + h_fd);
        um.set(c, u.get(c) - h_fd);
        let (fp, fm) = (problem.step(x, &up)?, problem.step(x, &um)?);
        for i in 0..n {
            b[(i, col)] = (fp.0[i] - fm.0[i]) / (2.0 * h_fd);
        }
    }
    if a.iter().chain(b.iter()).all(|v| v.is_finite()) {
        Ok((a, b))
    } else {
        Err(Error::NonFinite("linearize"))
    }
}

/// Gradient and Hessian of a scalar function of `z` by central differences.
fn fd_quadratic(f: impl Fn(&[f64]) -> Result<f64>, z: &[f64], h: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = z.len();
    let mut g = DVector::zeros(n);
    let mut hess = DMatrix::zeros(n, n);
    let f0 = f(z)?;
    let mut w = z.to_vec();
    let eval = |w: &mut Vec<f64>, shifts: &[(usize, f64)]| -> Result<f64> {
        for &(i, s) in shifts {
            w[i] += s;
        }
        let v = f(w);
        for &(i, s) in shifts {
            w[i] -= s;
        }
        v
    };
    for i in 0..n {
        let fp = eval(&mut w, &[(i, h)])?;
        let fm = eval(&mut w, &[(i, -h)])?;
        g[i] = (fp - fm) / (2.0 * h);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let pp = eval(&mut w, &[(i, h), (j, h)])?;
            let pm = eval(&mut w, &[(i, h), (j, -h)])?;
            let mp = eval(&mut w, &[(i, -h), (j, h)])?;
            let mm = eval(&mut w, &[(i, -h), (j, -h)])?;
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok((g, hess))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Relative cost change below which the solve counts as converged.
    pub tol: f64,
    pub reg_init: f64,
    pub reg_increase: f64,
    pub reg_decrease: f64,
    pub reg_max: f64,
    /// Step for the dynamics Jacobians.
    pub fd_step: f64,
    /// Step for the cost gradient and Hessian.
    pub cost_fd_step: f64,
    /// Halvings tried by the line search after the full step.
    pub line_search_halvings: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-6,
            reg_init: 1e-6,
            reg_increase: 10.0,
            reg_decrease: 2.0,
            reg_max: 1e10,
            fd_step: 1e-6,
            cost_fd_step: 1e-4,
            line_search_halvings: 10,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tol", self.tol),
            ("reg_init", self.reg_init),
            ("fd_step", self.fd_step),
            ("cost_fd_step", self.cost_fd_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain { name, value: v, domain: "(0, inf)" });
            }
        }
        if !(self.reg_increase > 1.0 && self.reg_decrease >= 1.0 && self.reg_max >= self.reg_init) {
            return Err(Error::Inconsistent("regularisation schedule must grow on rejection".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// No descent step found even at the largest regularisation.
    Stalled,
    /// The initial rollout blew up; the warm start is returned untouched.
    Diverged,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max_iterations",
            SolveStatus::Stalled => "stalled",
            SolveStatus::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    pub controls: Vec<Control>,
    /// Open-loop execution of `controls` from the problem's initial state.
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
    /// Cost after each accepted iteration, starting with the warm start.
    pub iteration_costs: Vec<f64>,
    pub converged: bool,
    pub status: SolveStatus,
    pub iterations: usize,
}

impl Solution {
    pub fn final_cost(&self) -> Option<f64> {
        self.iteration_costs.last().copied()
    }
}

/// Local models along a nominal trajectory.
struct Expansion {
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    lx: Vec<DVector<f64>>,
    lu: Vec<DVector<f64>>,
    lxx: Vec<DMatrix<f64>>,
    luu: Vec<DMatrix<f64>>,
    lux: Vec<DMatrix<f64>>,
    final_x: DVector<f64>,
    final_xx: DMatrix<f64>,
}

fn expand(problem: &OptimizationProblem, xs: &[State], us: &[Control], opts: &SolverOptions) -> Result<Expansion> {
    let n = problem.model.state_dim();
    let free = problem.free_channels();
    let m = free.len();
    let horizon = us.len();
    let mut e = Expansion {
        a: Vec::with_capacity(horizon),
        b: Vec::with_capacity(horizon),
        lx: Vec::with_capacity(horizon),
        lu: Vec::with_capacity(horizon),
        lxx: Vec::with_capacity(horizon),
        luu: Vec::with_capacity(horizon),
        lux: Vec::with_capacity(horizon),
        final_x: DVector::zeros(n),
        final_xx: DMatrix::zeros(n, n),
    };
    for k in 0..horizon {
        let (a, b) = linearize(problem, &xs[k], &us[k], opts.fd_step)?;
        e.a.push(a);
        e.b.push(b);
        let mut z: Vec<f64> = xs[k].0[..n].to_vec();
        z.extend(free.iter().map(|&c| us[k].get(c)));
        let (base_x, base_u) = (xs[k], us[k]);
        let stage = |z: &[f64]| {
            let mut x = base_x;
            x.0[..n].copy_from_slice(&z[..n]);
            let mut u = base_u;
            for (i, &c) in free.iter().enumerate() {
                u.set(c, z[n + i]);
            }
            problem.stage_cost(&x, &u)
        };
        let (g, h) = fd_quadratic(stage, &z, opts.cost_fd_step)?;
        e.lx.push(g.rows(0, n).into_owned());
        e.lu.push(g.rows(n, m).into_owned());
        e.lxx.push(h.view((0, 0), (n, n)).into_owned());
        e.luu.push(h.view((n, n), (m, m)).into_owned());
        e.lux.push(h.view((n, 0), (m, n)).into_owned());
    }
    let last = xs[horizon];
    let terminal = |z: &[f64]| {
        let mut x = last;
        x.0[..n].copy_from_slice(z);
        problem.final_cost(&x)
    };
    let (g, h) = fd_quadratic(terminal, &last.0[..n], opts.cost_fd_step)?;
    e.final_x = g;
    e.final_xx = h;
    Ok(e)
}

/// Adjoint gradient `dJ/du_k` over the free channels along the nominal controls.
pub fn cost_gradient(problem: &OptimizationProblem, controls: &[Control], opts: &SolverOptions) -> Result<Vec<DVector<f64>>> {
    let (xs, _) = problem.simulate(controls)?;
    let e = expand(problem, &xs, controls, opts)?;
    let mut lambda = e.final_x.clone();
    let mut grads = vec![DVector::zeros(0); controls.len()];
    for k in (0..controls.len()).rev() {
        grads[k] = &e.lu[k] + e.b[k].transpose() * &lambda;
        lambda = &e.lx[k] + e.a[k].transpose() * &lambda;
    }
    Ok(grads)
}

struct Gains {
    k: Vec<DVector<f64>>,
    big_k: Vec<DMatrix<f64>>,
}

/// Riccati sweep. `None` when `Q_uu` is not positive definite at this regularisation.
fn backward_pass(problem: &OptimizationProblem, us: &[Control], e: &Expansion, mu: f64) -> Option<Gains> {
    let free = problem.free_channels();
    let bounds = problem.bounds();
    let m = free.len();
    let horizon = us.len();
    let mut vx = e.final_x.clone();
    let mut vxx = e.final_xx.clone();
    let mut gains = Gains {
        k: vec![DVector::zeros(m); horizon],
        big_k: vec![DMatrix::zeros(m, e.final_x.len()); horizon],
    };
    for t in (0..horizon).rev() {
        let (a, b) = (&e.a[t], &e.b[t]);
        let bt_vxx = b.transpose() * &vxx;
        let qx = &e.lx[t] + a.transpose() * &vx;
        let qu = &e.lu[t] + b.transpose() * &vx;
        let qxx = &e.lxx[t] + a.transpose() * &vxx * a;
        let quu = &e.luu[t] + &bt_vxx * b;
        let qux = &e.lux[t] + &bt_vxx * a;

        let quu_reg = &quu + DMatrix::identity(m, m) * mu;
        let chol = quu_reg.clone().cholesky()?;
        let mut k = -chol.solve(&qu);
        let mut big_k = -chol.solve(&qux);

        // Channels pinned at a bound with the step pointing outward are held.
        let pinned: Vec<bool> = free
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let u = us[t].get(c);
                let (lo, hi) = bounds[c];
                (u <= lo + 1e-12 && k[i] < 0.0) || (u >= hi - 1e-12 && k[i] > 0.0)
            })
            .collect();
        if pinned.iter().any(|&p| p) {
            let idx: Vec<usize> = (0..m).filter(|&i| !pinned[i]).collect();
            k.fill(0.0);
            big_k.fill(0.0);
            if !idx.is_empty() {
                let sub = quu_reg.select_rows(&idx).select_columns(&idx);
                let sub_chol = sub.cholesky()?;
                let k_f = -sub_chol.solve(&qu.select_rows(&idx));
                let big_k_f = -sub_chol.solve(&qux.select_rows(&idx));
                for (r, &i) in idx.iter().enumerate() {
                    k[i] = k_f[r];
                    big_k.set_row(i, &big_k_f.row(r));
                }
            }
        }

        vx = &qx + big_k.transpose() * &quu * &k + big_k.transpose() * &qu + qux.transpose() * &k;
        vxx = &qxx + big_k.transpose() * &quu * &big_k + big_k.transpose() * &qux + qux.transpose() * &big_k;
        vxx = 0.5 * (&vxx + vxx.transpose());
        gains.k[t] = k;
        gains.big_k[t] = big_k;
    }
    Some(gains)
}

fn forward_pass(
    problem: &OptimizationProblem,
    xs: &[State],
    us: &[Control],
    gains: &Gains,
    step: f64,
) -> Option<(Vec<State>, Vec<Control>, f64)> {
    let n = problem.model.state_dim();
    let free = problem.free_channels();
    let mut x = problem.x0;
    let mut new_xs = Vec::with_capacity(xs.len());
    let mut new_us = Vec::with_capacity(us.len());
    let mut j = 0.0;
    new_xs.push(x);
    for t in 0..us.len() {
        let dx = DVector::from_iterator(n, (0..n).map(|i| x.0[i] - xs[t].0[i]));
        let du = step * &gains.k[t] + &gains.big_k[t] * dx;
        let mut u = us[t];
        for (i, &c) in free.iter().enumerate() {
            u.set(c, u.get(c) + du[i]);
        }
        problem.clamp(&mut u);
        j += problem.stage_cost(&x, &u).ok()?;
        x = problem.step(&x, &u).ok()?;
        new_xs.push(x);
        new_us.push(u);
    }
    j += problem.final_cost(&x).ok()?;
    j.is_finite().then_some((new_xs, new_us, j))
}

/// Runs iLQR from the warm start and returns the best controls found.
pub fn solve(problem: &OptimizationProblem, opts: &SolverOptions) -> Result<Solution> {
    problem.validate()?;
    opts.validate()?;
    let mut us = problem.initial.clone().unwrap_or_else(|| problem.default_initial_controls());
    for u in us.iter_mut() {
        problem.clamp(u);
    }
    if us.is_empty() {
        let trajectory = rollout(&problem.model, &problem.x0, &[], problem.control_dt, problem.substeps)?;
        return Ok(Solution {
            controls: us,
            trajectory: Some(trajectory),
            iteration_costs: vec![0.0],
            converged: true,
            status: SolveStatus::Converged,
            iterations: 0,
        });
    }
    let (mut xs, mut cost) = match problem.simulate(&us) {
        Ok(v) => v,
        Err(_) => {
            return Ok(Solution {
                controls: us,
                trajectory: None,
                iteration_costs: Vec::new(),
                converged: false,
                status: SolveStatus::Diverged,
                iterations: 0,
            });
        }
    };
    let mut history = vec![cost];
    let mut mu = opts.reg_init;
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;

    'outer: while iterations < opts.max_iters {
        iterations += 1;
        let expansion = match expand(problem, &xs, &us, opts) {
            Ok(e) => e,
            Err(_) => {
                status = SolveStatus::Stalled;
                break;
            }
        };
        loop {
            let accepted = backward_pass(problem, &us, &expansion, mu).and_then(|gains| {
                (0..=opts.line_search_halvings).find_map(|i| {
                    let step = 0.5f64.powi(i as i32);
                    forward_pass(problem, &xs, &us, &gains, step).filter(|(_, _, j)| *j < cost)
                })
            });
            match accepted {
                Some((new_xs, new_us, new_cost)) => {
                    let rel = (cost - new_cost) / cost.abs().max(1e-12);
                    xs = new_xs;
                    us = new_us;
                    cost = new_cost;
                    history.push(cost);
                    mu = (mu / opts.reg_decrease).max(opts.reg_init);
                    if rel < opts.tol {
                        status = SolveStatus::Converged;
                        break 'outer;
                    }
                    break;
                }
                None => {
                    mu *= opts.reg_increase;
                    if mu > opts.reg_max {
                        // No descent direction left: a local minimum up to clamping.
                        status = SolveStatus::Stalled;
                        break 'outer;
                    }
                }
            }
        }
    }

    let trajectory = rollout(&problem.model, &problem.x0, &us, problem.control_dt, problem.substeps).ok();
    Ok(Solution {
        controls: us,
        trajectory,
        iteration_costs: history,
        converged: matches!(status, SolveStatus::Converged | SolveStatus::Stalled),
        status,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{IdealPendulumParams, MaccepaParams};
    use nalgebra::Matrix2;
    use std::f64::consts::PI;

    fn toy_problem() -> OptimizationProblem {
        OptimizationProblem::new(
            ActuatorModel::Pendulum(IdealPendulumParams::default()),
            State::pendulum(0.0, 0.0),
            CostWeights::pendulum(PI / 3.0),
        )
        .freeze(0, PI / 3.0)
    }

    #[test]
    fn pendulum_jacobian_matches_matrix_exponential() {
        // Linear system x' = F x with F = [[0, 1], [-k, -(d + b)]] (unit inertia).
        let problem = toy_problem();
        let (k, d, b) = (100.0, 20.0, 0.01);
        let u = Control::new(PI / 3.0, 0.5, 0.4);
        let x = State::pendulum(PI / 3.0, 0.0);
        let (a, bm) = linearize(&problem, &x, &u, 1e-6).unwrap();
        let f = Matrix2::new(0.0, 1.0, -k, -(d + b));
        // exp(F dt) by scaling and squaring of a Taylor series.
        let scaled = f * (0.02 / 1024.0);
        let mut term: Matrix2<f64> = Matrix2::identity();
        let mut exp: Matrix2<f64> = Matrix2::identity();
        for i in 1..20 {
            term = term * scaled / i as f64;
            exp += term;
        }
        for _ in 0..10 {
            exp = exp * exp;
        }
        for i in 0..2 {
            for j in 0..2 {
                assert!((a[(i, j)] - exp[(i, j)]).abs() < 1e-6, "A[{i},{j}] = {} vs {}", a[(i, j)], exp[(i, j)]);
            }
        }
        // u1 frozen: only the u2 and u3 columns remain.
        assert_eq!(bm.shape(), (2, 2));
    }

    #[test]
    fn jacobian_step_refinement_agrees() {
        let problem = OptimizationProblem::new(
            ActuatorModel::Maccepa(MaccepaParams::default()),
            State::default(),
            CostWeights::maccepa(0.5),
        );
        let x = State::maccepa(0.1, 0.5, 0.4, 0.6, 0.2, -0.1);
        let u = Control::new(0.5, 0.7, 0.3);
        let (a1, b1) = linearize(&problem, &x, &u, 1e-5).unwrap();
        let (a2, b2) = linearize(&problem, &x, &u, 1e-3).unwrap();
        let (a3, b3) = linearize(&problem, &x, &u, 5e-4).unwrap();
        // Richardson extrapolation of the coarse pair removes the h^2 term.
        let a_r = (4.0 * &a3 - &a2) / 3.0;
        let b_r = (4.0 * &b3 - &b2) / 3.0;
        let rel = |m: &DMatrix<f64>, r: &DMatrix<f64>| (m - r).abs().max() / r.abs().max();
        assert!(rel(&a1, &a_r) < 1e-5, "A rel err {}", rel(&a1, &a_r));
        assert!(rel(&b1, &b_r) < 1e-5, "B rel err {}", rel(&b1, &b_r));
        assert_eq!(b1.shape(), (6, 3));
    }

    #[test]
    fn zero_horizon_problem() {
        let mut problem = toy_problem();
        problem.weights.horizon = 0.0;
        let sol = solve(&problem, &SolverOptions::default()).unwrap();
        assert!(sol.controls.is_empty());
        assert_eq!(sol.final_cost(), Some(0.0));
        assert!(sol.converged);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let problem = toy_problem();
        let opts = SolverOptions::default();
        let us = problem.default_initial_controls();
        let grad = cost_gradient(&problem, &us, &opts).unwrap();
        let free = problem.free_channels();
        for (i, &c) in free.iter().enumerate() {
            let h = 1e-6;
            let (mut up, mut um) = (us.clone(), us.clone());
            up[0].set(c, us[0].get(c) + h);
            um[0].set(c, us[0].get(c) - h);
            let fd = (problem.total_cost(&up).unwrap() - problem.total_cost(&um).unwrap()) / (2.0 * h);
            let rel = (grad[0][i] - fd).abs() / fd.abs().max(1e-8);
            assert!(rel < 1e-3, "channel {c}: adjoint {} vs fd {fd}", grad[0][i]);
        }
    }

    #[test]
    fn toy_solve_is_monotone_and_feasible() {
        let problem = toy_problem();
        let sol = solve(&problem, &SolverOptions::default()).unwrap();
        assert!(sol.iteration_costs.windows(2).all(|w| w[1] <= w[0]));
        assert!(sol.iteration_costs.len() > 1);
        let b = problem.bounds();
        for u in &sol.controls {
            assert_eq!(u.u1, PI / 3.0);
            assert!(u.u2 >= b[1].0 && u.u2 <= b[1].1);
            assert!(u.u3 >= b[2].0 && u.u3 <= b[2].1);
        }
        let q_end = sol.trajectory.as_ref().unwrap().final_state().q();
        assert!((q_end - PI / 3.0).abs() < 0.01, "q(t_f) = {q_end}");
    }

    #[test]
    fn solve_is_deterministic() {
        let problem = toy_problem();
        let opts = SolverOptions {
            max_iters: 15,
            ..SolverOptions::default()
        };
        assert_eq!(solve(&problem, &opts).unwrap(), solve(&problem, &opts).unwrap());
    }

    #[test]
    fn mismatched_warm_start_is_rejected() {
        let mut problem = toy_problem();
        problem.initial = Some(vec![Control::default(); 3]);
        assert!(solve(&problem, &SolverOptions::default()).is_err());
    }
}
