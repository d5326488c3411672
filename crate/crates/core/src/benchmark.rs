//! Reaching experiments: the five-scheme pendulum comparison and the
//! long-term consecutive-reaching protocol.

use std::f64::consts::PI;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::DampingScheme;
use crate::dynamics::{rollout, ActuatorModel, Control, IdealPendulumParams, State, Trajectory};
use crate::energy::{energy_report, ConsumptionMode, EnergyReport};
use crate::error::{Error, Result};
use crate::ilqr::{solve, CostWeights, OptimizationProblem, SolveStatus, SolverOptions};
use crate::stats::{mean, sample_std};

/// Pretension command used whenever stiffness is held fixed.
pub const FIXED_PRETENSION: f64 = PI / 6.0;
/// Damping command used whenever damping is held fixed.
pub const FIXED_DAMPING_COMMAND: f64 = 0.5;
/// Velocity threshold as a fraction of the largest speed in a trial.
pub const VELOCITY_THRESHOLD: f64 = 0.01;
/// Acceleration threshold as a fraction of the largest acceleration in a trial.
pub const ACCELERATION_THRESHOLD: f64 = 0.015;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetList {
    pub seed: u64,
    pub targets: Vec<f64>,
}

/// Draws `n` targets uniformly from `range`, rejecting any closer than
/// `min_gap` to its predecessor. The first target is unconstrained.
pub fn generate_targets(seed: u64, n: usize, range: (f64, f64), min_gap: f64) -> Result<TargetList> {
    let (lo, hi) = range;
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(Error::Inconsistent(format!("empty target range [{lo}, {hi}]")));
    }
    if !(min_gap >= 0.0 && min_gap < hi - lo) {
        return Err(Error::Domain {
            name: "min_gap",
            value: min_gap,
            domain: "[0, range width)",
        });
    }
    let dist = Uniform::new_inclusive(lo, hi).map_err(|e| Error::Inconsistent(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut targets: Vec<f64> = Vec::with_capacity(n);
    while targets.len() < n {
        let q = dist.sample(&mut rng);
        if targets.last().is_none_or(|prev| (q - prev).abs() >= min_gap) {
            targets.push(q);
        }
    }
    Ok(TargetList { seed, targets })
}

/// Joint accelerations by central differences of the recorded velocities
/// (one-sided at the ends).
pub fn accelerations(traj: &Trajectory) -> Vec<f64> {
    let v: Vec<f64> = traj.states.iter().map(State::qdot).collect();
    let n = v.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            if i == 0 {
                (v[1] - v[0]) / traj.dt
            } else if i == n - 1 {
                (v[n - 1] - v[n - 2]) / traj.dt
            } else {
                (v[i + 1] - v[i - 1]) / (2.0 * traj.dt)
            }
        })
        .collect()
}

/// Largest `|qdot|` and `|qddot|` over a set of trajectories.
pub fn peak_rates<'a>(trajs: impl IntoIterator<Item = &'a Trajectory>) -> (f64, f64) {
    trajs.into_iter().fold((0.0f64, 0.0f64), |(v, a), t| {
        let vmax = t.states.iter().map(|s| s.qdot().abs()).fold(0.0, f64::max);
        let amax = accelerations(t).into_iter().map(f64::abs).fold(0.0, f64::max);
        (v.max(vmax), a.max(amax))
    })
}

/// Thresholds `(eps1, eps2)` derived from the peak rates of a trial.
pub fn settling_thresholds<'a>(trajs: impl IntoIterator<Item = &'a Trajectory>) -> (f64, f64) {
    let (v, a) = peak_rates(trajs);
    (VELOCITY_THRESHOLD * v, ACCELERATION_THRESHOLD * a)
}

/// Earliest sample time from which `|qdot| < eps1` and `|qddot| < eps2` hold
/// to the end of the trajectory; the full duration if they never do.
pub fn settling_time(traj: &Trajectory, eps1: f64, eps2: f64) -> f64 {
    let acc = accelerations(traj);
    let last_violation = traj
        .states
        .iter()
        .zip(&acc)
        .rposition(|(s, a)| !(s.qdot().abs() < eps1 && a.abs() < eps2));
    match last_violation {
        None => traj.time(0),
        Some(i) if i + 1 >= traj.states.len() => traj.duration(),
        Some(i) => traj.time(i + 1),
    }
}

/// Sample index at which `q` first reaches `target`: the first sign change of
/// `q - target`, or onset when the movement starts on the target.
pub fn first_crossing(traj: &Trajectory, target: f64) -> Option<usize> {
    let e0 = traj.states.first()?.q() - target;
    if e0 == 0.0 {
        return Some(0);
    }
    traj.states.iter().position(|s| {
        let e = s.q() - target;
        e == 0.0 || e.signum() != e0.signum()
    })
}

/// Integral of `(q - target)^2` from the first crossing until `settle` (rad^2 s).
pub fn overshoot(traj: &Trajectory, target: f64, settle: f64) -> f64 {
    let Some(start) = first_crossing(traj, target) else {
        return 0.0;
    };
    let end = ((settle / traj.dt).round() as usize).min(traj.states.len() - 1);
    if end <= start {
        return 0.0;
    }
    let sq = |i: usize| (traj.states[i].q() - target).powi(2);
    (start..end).map(|i| 0.5 * traj.dt * (sq(i) + sq(i + 1))).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Condition {
    /// Fixed stiffness, fixed damping: `u1` steps to the target, nothing is optimised.
    Fsfd,
    /// Fixed stiffness, variable damping: only `u3` is optimised.
    Fsvd,
    /// Variable stiffness, fixed damping.
    Vsfd,
    /// Variable stiffness, variable damping.
    Vsvd,
}

impl Condition {
    pub const ALL: [Condition; 4] = [Condition::Fsfd, Condition::Fsvd, Condition::Vsfd, Condition::Vsvd];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Fsfd => "FSFD",
            Condition::Fsvd => "FSVD",
            Condition::Vsfd => "VSFD",
            Condition::Vsvd => "VSVD",
        }
    }

    /// Held command values for a movement to `target`.
    pub fn frozen(self, target: f64) -> [Option<f64>; 3] {
        let stiff = [Some(target), Some(FIXED_PRETENSION)];
        let damp = Some(FIXED_DAMPING_COMMAND);
        match self {
            Condition::Fsfd => [stiff[0], stiff[1], damp],
            Condition::Fsvd => [stiff[0], stiff[1], None],
            Condition::Vsfd => [None, None, damp],
            Condition::Vsvd => [None; 3],
        }
    }

    pub fn optimizes(self) -> bool {
        self != Condition::Fsfd
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Inconsistent(format!("unknown condition {s:?}")))
    }
}

/// One executed reaching movement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MovementRecord {
    pub index: usize,
    pub target: f64,
    pub start: State,
    pub controls: Vec<Control>,
    #[serde(skip)]
    pub trajectory: Trajectory,
    pub settling_time: f64,
    pub overshoot: f64,
    pub energy: EnergyReport,
    /// `None` when the movement was executed without optimisation.
    pub solver: Option<SolveStatus>,
    pub iterations: usize,
    /// The solve diverged and the warm start was executed instead.
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub condition: Condition,
    pub trial: usize,
    pub seed: u64,
    pub epsilon_velocity: f64,
    pub epsilon_acceleration: f64,
    pub movements: Vec<MovementRecord>,
    pub mean_settling_time: f64,
    pub mean_overshoot: f64,
    pub total_consumed: f64,
    pub total_regenerated: f64,
    pub failed_movements: usize,
}

impl TrialRecord {
    fn from_movements(condition: Condition, trial: usize, seed: u64, mut movements: Vec<MovementRecord>) -> Self {
        let (eps1, eps2) = settling_thresholds(movements.iter().map(|m| &m.trajectory));
        for m in movements.iter_mut() {
            m.settling_time = settling_time(&m.trajectory, eps1, eps2);
            m.overshoot = overshoot(&m.trajectory, m.target, m.settling_time);
        }
        let settling: Vec<f64> = movements.iter().map(|m| m.settling_time).collect();
        let over: Vec<f64> = movements.iter().map(|m| m.overshoot).collect();
        Self {
            condition,
            trial,
            seed,
            epsilon_velocity: eps1,
            epsilon_acceleration: eps2,
            mean_settling_time: mean(&settling),
            mean_overshoot: mean(&over),
            total_consumed: movements.iter().map(|m| m.energy.consumed.unwrap_or(0.0)).sum(),
            total_regenerated: movements.iter().map(|m| m.energy.regenerated).sum(),
            failed_movements: movements.iter().filter(|m| m.failed).count(),
            movements,
        }
    }
}

/// Runs the chained movements of one trial under `condition`.
///
/// Each movement starts from the previous end state. Settling thresholds are
/// taken from the whole trial once every movement has been executed.
pub fn run_condition(
    condition: Condition,
    targets: &TargetList,
    trial: usize,
    model: &ActuatorModel,
    weights: &CostWeights,
    opts: &SolverOptions,
    x0: &State,
) -> Result<TrialRecord> {
    let mut x = *x0;
    let mut movements = Vec::with_capacity(targets.targets.len());
    for (index, &target) in targets.targets.iter().enumerate() {
        let mut problem = OptimizationProblem::new(*model, x, weights.with_target(target));
        problem.frozen = condition.frozen(target);
        let (controls, trajectory, solver, iterations, failed) = if condition.optimizes() {
            let sol = solve(&problem, opts)?;
            match sol.trajectory {
                Some(traj) if sol.status != SolveStatus::Diverged => (sol.controls, traj, Some(sol.status), sol.iterations, false),
                _ => {
                    let controls = problem.default_initial_controls();
                    let traj = rollout(model, &x, &controls, problem.control_dt, problem.substeps)?;
                    (controls, traj, Some(SolveStatus::Diverged), sol.iterations, true)
                }
            }
        } else {
            let controls = problem.default_initial_controls();
            let traj = rollout(model, &x, &controls, problem.control_dt, problem.substeps)?;
            (controls, traj, None, 0, false)
        };
        let energy = energy_report(&trajectory, ConsumptionMode::Rectified);
        let start = x;
        x = trajectory.final_state();
        movements.push(MovementRecord {
            index,
            target,
            start,
            controls,
            trajectory,
            settling_time: 0.0,
            overshoot: 0.0,
            energy,
            solver,
            iterations,
            failed,
        });
    }
    Ok(TrialRecord::from_movements(condition, trial, targets.seed, movements))
}

/// Options of the long-term consecutive-reaching benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LongTermOptions {
    pub seed: u64,
    /// Movements per trial.
    pub movements: usize,
    pub trials: usize,
    pub conditions: Vec<Condition>,
    pub target_range: (f64, f64),
    pub min_gap: f64,
    pub initial_position: f64,
}

impl Default for LongTermOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            movements: 25,
            trials: 20,
            conditions: Condition::ALL.to_vec(),
            target_range: (-PI / 3.0, PI / 3.0),
            min_gap: PI / 3.0,
            initial_position: 0.0,
        }
    }
}

impl LongTermOptions {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.movements == 0 {
            return Err(Error::Inconsistent("trials and movements must be positive".into()));
        }
        if self.conditions.is_empty() {
            return Err(Error::Inconsistent("no conditions requested".into()));
        }
        let (lo, hi) = self.target_range;
        if !(lo < hi && self.min_gap >= 0.0 && self.min_gap < hi - lo) {
            return Err(Error::Inconsistent(format!("min_gap {} does not fit the range [{lo}, {hi}]", self.min_gap)));
        }
        if !self.initial_position.is_finite() {
            return Err(Error::NonFinite("initial_position"));
        }
        Ok(())
    }

    /// Seed of the target list for trial `m`; every condition sees the same targets.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }
}

/// Runs every requested condition over all trials on `jobs` worker threads.
/// Records come back ordered by condition, then trial.
pub fn run_longterm(
    model: &ActuatorModel,
    weights: &CostWeights,
    solver: &SolverOptions,
    opts: &LongTermOptions,
    jobs: usize,
) -> Result<Vec<TrialRecord>> {
    if !matches!(model, ActuatorModel::Maccepa(_)) {
        return Err(Error::UnsupportedModel("pendulum"));
    }
    opts.validate()?;
    let targets = (0..opts.trials)
        .map(|m| generate_targets(opts.trial_seed(m), opts.movements, opts.target_range, opts.min_gap))
        .collect::<Result<Vec<_>>>()?;
    let rest = Control::new(opts.initial_position, FIXED_PRETENSION, FIXED_DAMPING_COMMAND);
    let x0 = model.rest_state(opts.initial_position, &rest);
    let jobs_list: Vec<(Condition, usize)> = opts
        .conditions
        .iter()
        .flat_map(|&c| (0..opts.trials).map(move |m| (c, m)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Inconsistent(e.to_string()))?;
    pool.install(|| {
        jobs_list
            .par_iter()
            .map(|&(c, m)| run_condition(c, &targets[m], m, model, weights, solver, &x0))
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(values: &[f64]) -> Self {
        Self {
            mean: mean(values),
            std: sample_std(values),
        }
    }
}

/// Normalised radar scores; higher is better on every axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RadarScores {
    pub gamma_t: f64,
    pub gamma_o: f64,
    pub gamma_c: f64,
    pub gamma_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionMetrics {
    pub condition: Condition,
    pub trials: usize,
    pub settling_time: MeanStd,
    pub overshoot: MeanStd,
    pub consumed: MeanStd,
    pub regenerated: MeanStd,
    pub failed_movements: usize,
    pub scores: RadarScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<ConditionMetrics>,
}

impl MetricsTable {
    /// Aggregates trial records per condition, in the order conditions first appear.
    pub fn from_trials(records: &[TrialRecord]) -> Self {
        let mut order: Vec<Condition> = Vec::new();
        for r in records {
            if !order.contains(&r.condition) {
                order.push(r.condition);
            }
        }
        let mut rows: Vec<ConditionMetrics> = order
            .into_iter()
            .map(|c| {
                let trials: Vec<&TrialRecord> = records.iter().filter(|r| r.condition == c).collect();
                let col = |f: fn(&TrialRecord) -> f64| trials.iter().map(|r| f(r)).collect::<Vec<_>>();
                ConditionMetrics {
                    condition: c,
                    trials: trials.len(),
                    settling_time: MeanStd::of(&col(|r| r.mean_settling_time)),
                    overshoot: MeanStd::of(&col(|r| r.mean_overshoot)),
                    consumed: MeanStd::of(&col(|r| r.total_consumed)),
                    regenerated: MeanStd::of(&col(|r| r.total_regenerated)),
                    failed_movements: trials.iter().map(|r| r.failed_movements).sum(),
                    scores: RadarScores::default(),
                }
            })
            .collect();
        let scores = normalized_scores(&rows);
        for (row, s) in rows.iter_mut().zip(scores) {
            row.scores = s;
        }
        Self { rows }
    }

    pub fn get(&self, condition: Condition) -> Option<&ConditionMetrics> {
        self.rows.iter().find(|r| r.condition == condition)
    }
}

/// Min-max scaling of one axis; the best value maps to 1 and the worst to 0.
/// An axis whose values are all equal scores 1 throughout.
pub fn min_max_scores(values: &[f64], higher_is_better: bool) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|&v| {
            if !(span > 0.0) {
                1.0
            } else if higher_is_better {
                (v - lo) / span
            } else {
                (hi - v) / span
            }
        })
        .collect()
}

/// Radar scores from the condition means: less time, overshoot and
/// consumption and more regeneration score higher.
pub fn normalized_scores(rows: &[ConditionMetrics]) -> Vec<RadarScores> {
    let axis = |f: fn(&ConditionMetrics) -> f64, higher: bool| min_max_scores(&rows.iter().map(f).collect::<Vec<_>>(), higher);
    let t = axis(|r| r.settling_time.mean, false);
    let o = axis(|r| r.overshoot.mean, false);
    let c = axis(|r| r.consumed.mean, false);
    let g = axis(|r| r.regenerated.mean, true);
    (0..rows.len())
        .map(|i| RadarScores {
            gamma_t: t[i],
            gamma_o: o[i],
            gamma_c: c[i],
            gamma_r: g[i],
        })
        .collect()
}

/// Damping arrangements compared on the ideal-VIA reaching task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonScheme {
    Hybrid,
    Dynamic,
    Regenerative,
    /// Damping fixed at the regenerative maximum; only stiffness is optimised.
    FixedDamping,
    /// `k = 100`, `d = 20`, unit inertia: damping ratio one, nothing optimised.
    CriticallyDamped,
}

impl ComparisonScheme {
    pub const ALL: [ComparisonScheme; 5] = [
        ComparisonScheme::Hybrid,
        ComparisonScheme::Dynamic,
        ComparisonScheme::Regenerative,
        ComparisonScheme::FixedDamping,
        ComparisonScheme::CriticallyDamped,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ComparisonScheme::Hybrid => "hybrid",
            ComparisonScheme::Dynamic => "dynamic",
            ComparisonScheme::Regenerative => "regenerative",
            ComparisonScheme::FixedDamping => "fixed",
            ComparisonScheme::CriticallyDamped => "critically_damped",
        }
    }
}

/// Stiffness command and damping of the critically damped reference.
pub const CRITICAL_STIFFNESS_COMMAND: f64 = 0.5;
pub const CRITICAL_DAMPING: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeResult {
    pub scheme: ComparisonScheme,
    pub controls: Vec<Control>,
    #[serde(skip)]
    pub trajectory: Trajectory,
    pub energy: EnergyReport,
    pub settling_time: f64,
    pub overshoot: f64,
    /// Time at which the target is first reached, if ever.
    pub reach_time: Option<f64>,
    pub solver: Option<SolveStatus>,
    pub iterations: usize,
    pub final_cost: Option<f64>,
}

/// Ideal-VIA problem for one scheme, with `u1` held on the target.
pub fn comparison_problem(scheme: ComparisonScheme, params: &IdealPendulumParams, weights: &CostWeights) -> OptimizationProblem {
    let mut p = *params;
    let base = p.damping;
    p.damping = match scheme {
        ComparisonScheme::Hybrid => base.with_scheme(DampingScheme::Hybrid),
        ComparisonScheme::Dynamic => base.with_scheme(DampingScheme::Dynamic),
        ComparisonScheme::Regenerative => base.with_scheme(DampingScheme::Regenerative),
        ComparisonScheme::FixedDamping => base.fixed(base.max_regenerative),
        ComparisonScheme::CriticallyDamped => base.fixed(CRITICAL_DAMPING),
    };
    let target = weights.target;
    let problem = OptimizationProblem::new(ActuatorModel::Pendulum(p), State::pendulum(0.0, 0.0), *weights).freeze(0, target);
    match scheme {
        ComparisonScheme::FixedDamping => problem.freeze(2, FIXED_DAMPING_COMMAND),
        ComparisonScheme::CriticallyDamped => problem
            .freeze(1, CRITICAL_STIFFNESS_COMMAND)
            .freeze(2, FIXED_DAMPING_COMMAND),
        _ => problem,
    }
}

/// Solves the toy reaching problem once per scheme.
///
/// Settling thresholds are shared by all schemes and taken from their
/// combined peak rates, so settling times are directly comparable.
pub fn pendulum_comparison(
    schemes: &[ComparisonScheme],
    params: &IdealPendulumParams,
    weights: &CostWeights,
    opts: &SolverOptions,
) -> Result<Vec<SchemeResult>> {
    let mut results = schemes
        .iter()
        .map(|&scheme| {
            let problem = comparison_problem(scheme, params, weights);
            let (controls, trajectory, solver, iterations, final_cost) = if problem.free_channels().is_empty() {
                let controls = problem.default_initial_controls();
                let traj = rollout(&problem.model, &problem.x0, &controls, problem.control_dt, problem.substeps)?;
                let cost = problem.total_cost(&controls).ok();
                (controls, traj, None, 0, cost)
            } else {
                let sol = solve(&problem, opts)?;
                let cost = sol.final_cost();
                match sol.trajectory {
                    Some(traj) if sol.status != SolveStatus::Diverged => {
                        (sol.controls, traj, Some(sol.status), sol.iterations, cost)
                    }
                    _ => {
                        let controls = problem.default_initial_controls();
                        let traj = rollout(&problem.model, &problem.x0, &controls, problem.control_dt, problem.substeps)?;
                        (controls, traj, Some(SolveStatus::Diverged), sol.iterations, None)
                    }
                }
            };
            Ok(SchemeResult {
                scheme,
                energy: energy_report(&trajectory, ConsumptionMode::Rectified),
                reach_time: first_crossing(&trajectory, weights.target).map(|i| trajectory.time(i)),
                controls,
                trajectory,
                settling_time: 0.0,
                overshoot: 0.0,
                solver,
                iterations,
                final_cost,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (eps1, eps2) = settling_thresholds(results.iter().map(|r| &r.trajectory));
    for r in results.iter_mut() {
        r.settling_time = settling_time(&r.trajectory, eps1, eps2);
        r.overshoot = overshoot(&r.trajectory, weights.target, r.settling_time);
    }
    Ok(results)
}
