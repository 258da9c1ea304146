//! Time stepping for the best-response inclusion `ẋ ∈ β(F(x) + Δ(t)) − x + ε(t)`,
//! its state-perturbed variant and the projected-gradient baseline.
//!
//! Two best-response selections are available. [`Selection::Explicit`] is plain
//! forward Euler with the LP vertex at the start of the step. It chatters
//! around solutions with amplitude `O(h)` because the vertex switches every
//! step. [`Selection::Implicit`] (the default) picks the best response to the
//! cost predicted at the end of the step, linearized through the Jacobian,
//! which lets the state settle onto faces instead of bouncing across them.

mod selection;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::cost_gap;
use crate::convex_set::{Polytope, FEASIBILITY_TOL};
use crate::disturbances::TimeSignal;
use crate::error::{check_dim, Error, Result};
use crate::operators::{check_monotonicity, AffineOperator, Monotonicity, Operator, Perturbation};
use selection::LocalSelector;

/// Gap below which the integrator treats `x` as its own best response.
pub const DEFAULT_STATIONARITY_GAP: f64 = 1e-10;
/// Zero-disturbance runs stop after this many consecutive converged steps.
pub const CONVERGED_STEPS: usize = 10;
/// Tolerance for the per-step admissibility check and the start point.
pub const ADMISSIBILITY_TOL: f64 = FEASIBILITY_TOL;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Brd,
    Projected,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    #[default]
    Implicit,
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub step: f64,
    pub horizon: f64,
    pub gap_tolerance: f64,
    pub stationarity_gap: f64,
    pub method: Method,
    pub record_stride: usize,
    pub selection: Selection,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            step: 0.01,
            horizon: 30.0,
            gap_tolerance: 1e-8,
            stationarity_gap: DEFAULT_STATIONARITY_GAP,
            method: Method::Brd,
            record_stride: 10,
            selection: Selection::Implicit,
        }
    }
}

impl SolverConfig {
    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_selection(mut self, selection: Selection) -> Self {
        self.selection = selection;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.step) || !positive(self.horizon) {
            return Err(Error::Validation("step and horizon must be positive".into()));
        }
        if !(self.stationarity_gap >= 0.0 && self.stationarity_gap <= self.gap_tolerance) {
            return Err(Error::Validation("need 0 <= stationarity_gap <= gap_tolerance".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::Validation("record_stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of steps that cover the horizon.
    pub fn steps(&self) -> usize {
        (self.horizon / self.step - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Horizon,
    GapTolerance,
    Error,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Gap of the operator being integrated (cost disturbance excluded).
    pub gaps: Vec<f64>,
    /// `[‖Δ(t)‖, ‖ε(t)‖]` per sample.
    pub disturbance_norms: Vec<[f64; 2]>,
    pub terminated_by: Termination,
    pub step: f64,
    /// Steps whose operator evaluation hit the entropy floor.
    pub clamped_evaluations: usize,
    /// Implicit steps that fell back to the explicit vertex.
    pub fallback_selections: usize,
}

impl TrajectoryRecord {
    fn new(step: f64) -> Self {
        TrajectoryRecord {
            times: Vec::new(),
            states: Vec::new(),
            gaps: Vec::new(),
            disturbance_norms: Vec::new(),
            terminated_by: Termination::Horizon,
            step,
            clamped_evaluations: 0,
            fallback_selections: 0,
        }
    }

    fn push(&mut self, t: f64, x: &DVector<f64>, gap: f64, norms: [f64; 2]) {
        self.times.push(t);
        self.states.push(x.clone());
        self.gaps.push(gap);
        self.disturbance_norms.push(norms);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |x| x.len())
    }

    pub fn final_state(&self) -> Option<&DVector<f64>> {
        self.states.last()
    }

    pub fn final_gap(&self) -> Option<f64> {
        self.gaps.last().copied()
    }

    pub fn final_time(&self) -> Option<f64> {
        self.times.last().copied()
    }
}

/// Everything a run integrates, borrowed.
#[derive(Clone, Copy, Debug)]
pub struct Problem<'a> {
    pub operator: &'a Operator,
    pub set: &'a Polytope,
    pub cost_disturbance: &'a TimeSignal,
    pub dynamics_disturbance: &'a TimeSignal,
}

/// One explicit Euler step `x + h(β(F(x)+Δ) − x + ε)`.
///
/// Returns `x` unchanged when `x` is already a best response to `F(x)+Δ`
/// (gap at most [`DEFAULT_STATIONARITY_GAP`]) and `ε` is zero.
pub fn brd_step(
    x: &DVector<f64>,
    f: &Operator,
    k: &Polytope,
    delta: &DVector<f64>,
    eps: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>> {
    let n = k.dim();
    check_dim(n, x.len())?;
    check_dim(n, f.dim())?;
    check_dim(n, delta.len())?;
    check_dim(n, eps.len())?;
    let eps_zero = eps.iter().all(|&v| v == 0.0);
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Validation("step must be positive".into()));
    }
    if h > 1.0 && eps_zero {
        return Err(Error::StepTooLarge(h));
    }
    let pi = f.evaluate(x)? + delta;
    let beta = k.lp_minimize(&pi)?;
    let gap = x.dot(&pi) - beta.dot(&pi);
    if gap <= DEFAULT_STATIONARITY_GAP && eps_zero {
        return Ok(x.clone());
    }
    let next = x + h * (&beta - x + eps);
    if !eps_zero && !k.contains(&next, ADMISSIBILITY_TOL)? {
        return Err(Error::AdmissibilityViolated { time: f64::NAN });
    }
    Ok(next)
}

/// Best-response dynamics with cost disturbance `Δ` and dynamics disturbance `ε`.
pub fn integrate_brd(
    x0: &DVector<f64>,
    f: &Operator,
    k: &Polytope,
    delta: &TimeSignal,
    eps: &TimeSignal,
    cfg: &SolverConfig,
) -> Result<TrajectoryRecord> {
    let problem = Problem { operator: f, set: k, cost_disturbance: delta, dynamics_disturbance: eps };
    into_result(simulate(&problem, x0, &cfg.clone().with_method(Method::Brd)))
}

/// Best responses to `F(x) + δ(x)`, no time-varying disturbances.
pub fn integrate_perturbed_br(
    x0: &DVector<f64>,
    f: &AffineOperator,
    perturbation: &Perturbation,
    k: &Polytope,
    cfg: &SolverConfig,
) -> Result<TrajectoryRecord> {
    let op = Operator::new(f.clone(), perturbation.clone())?;
    match check_monotonicity(&op, k) {
        Ok(report) if matches!(report.class, Monotonicity::StronglyMonotone(_)) => {
            if report.empirical {
                debug!("strong monotonicity of the perturbed operator checked by sampling only");
            }
        }
        Ok(report) => warn!("perturbed operator is not verified strongly monotone: {:?}", report.class),
        Err(e) => warn!("could not check monotonicity of the perturbed operator: {e}"),
    }
    let zero = TimeSignal::zero(k.dim());
    integrate_brd(x0, &op, k, &zero, &zero, cfg)
}

/// Discrete projected iteration `x⁺ = P_K(x − hF(x))`.
pub fn integrate_projected(
    x0: &DVector<f64>,
    f: &Operator,
    k: &Polytope,
    cfg: &SolverConfig,
) -> Result<TrajectoryRecord> {
    let zero = TimeSignal::zero(k.dim());
    let problem = Problem { operator: f, set: k, cost_disturbance: &zero, dynamics_disturbance: &zero };
    into_result(simulate(&problem, x0, &cfg.clone().with_method(Method::Projected)))
}

fn into_result((record, error): (TrajectoryRecord, Option<Error>)) -> Result<TrajectoryRecord> {
    match error {
        Some(e) => Err(e),
        None => Ok(record),
    }
}

/// Runs `cfg.method` and returns whatever was recorded, together with the
/// error that stopped the run early, if any.
pub fn simulate(problem: &Problem<'_>, x0: &DVector<f64>, cfg: &SolverConfig) -> (TrajectoryRecord, Option<Error>) {
    let mut record = TrajectoryRecord::new(cfg.step);
    let outcome = validate(problem, x0, cfg).and_then(|()| match cfg.method {
        Method::Brd => run_brd(problem, x0, cfg, &mut record),
        Method::Projected => run_projected(problem, x0, cfg, &mut record),
    });
    match outcome {
        Ok(()) => (record, None),
        Err(e) => {
            record.terminated_by = Termination::Error;
            (record, Some(e))
        }
    }
}

fn validate(problem: &Problem<'_>, x0: &DVector<f64>, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    let n = problem.set.dim();
    check_dim(n, x0.len())?;
    check_dim(n, problem.operator.dim())?;
    check_dim(n, problem.cost_disturbance.dim())?;
    check_dim(n, problem.dynamics_disturbance.dim())?;
    if !problem.set.contains(x0, ADMISSIBILITY_TOL)? {
        return Err(Error::InfeasibleStart);
    }
    if cfg.step > 1.0 && problem.dynamics_disturbance.is_zero() && cfg.method == Method::Brd {
        return Err(Error::StepTooLarge(cfg.step));
    }
    Ok(())
}

fn run_brd(problem: &Problem<'_>, x0: &DVector<f64>, cfg: &SolverConfig, record: &mut TrajectoryRecord) -> Result<()> {
    let Problem { operator: f, set: k, cost_disturbance, dynamics_disturbance } = *problem;
    let h = cfg.step;
    let steps = cfg.steps();
    let undisturbed = cost_disturbance.is_zero() && dynamics_disturbance.is_zero();
    let mut selector = LocalSelector::default();
    let mut x = x0.clone();
    let mut converged = 0;

    for i in 0..=steps {
        let t = i as f64 * h;
        let delta = cost_disturbance.eval(t);
        let eps = dynamics_disturbance.eval(t);
        let eps_zero = eps.iter().all(|&v| v == 0.0);
        if f.is_clamped(&x) {
            record.clamped_evaluations += 1;
        }
        let pi_plain = f.evaluate(&x)?;
        let pi = &pi_plain + &delta;
        let beta = k.lp_minimize(&pi)?;
        let u = x.dot(&pi) - beta.dot(&pi);

        let last = i == steps;
        converged = if undisturbed && u <= cfg.gap_tolerance { converged + 1 } else { 0 };
        let stop = undisturbed && converged >= CONVERGED_STEPS;
        if i % cfg.record_stride == 0 || last || stop {
            let gap = if cost_disturbance.is_zero() { u } else { cost_gap(&x, &pi_plain, k)? };
            record.push(t, &x, gap, [delta.norm(), eps.norm()]);
        }
        if stop {
            record.terminated_by = Termination::GapTolerance;
            return Ok(());
        }
        if last {
            break;
        }
        if u <= cfg.stationarity_gap && eps_zero {
            continue;
        }

        let target = match cfg.selection {
            Selection::Explicit => beta,
            Selection::Implicit => match implicit_target(&mut selector, f, k, &x, &pi, &eps, h) {
                Some(b) => b,
                None => {
                    record.fallback_selections += 1;
                    beta
                }
            },
        };
        let next = &x + h * (&target - &x + &eps);
        if !eps_zero && !k.contains(&next, ADMISSIBILITY_TOL)? {
            return Err(Error::AdmissibilityViolated { time: t });
        }
        x = next;
    }
    record.terminated_by = Termination::Horizon;
    Ok(())
}

/// Best response to the cost linearly predicted at the end of the step.
fn implicit_target(
    selector: &mut LocalSelector,
    f: &Operator,
    k: &Polytope,
    x: &DVector<f64>,
    pi: &DVector<f64>,
    eps: &DVector<f64>,
    h: f64,
) -> Option<DVector<f64>> {
    let jac: DMatrix<f64> = f.jacobian(x).ok()?;
    let hj = jac * h;
    let p = pi + &hj * (eps - x);
    selector.select(k, &p, &hj)
}

fn run_projected(
    problem: &Problem<'_>,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
    record: &mut TrajectoryRecord,
) -> Result<()> {
    let Problem { operator: f, set: k, .. } = *problem;
    let h = cfg.step;
    let steps = cfg.steps();
    let mut x = x0.clone();
    let mut converged = 0;
    for i in 0..=steps {
        let t = i as f64 * h;
        if f.is_clamped(&x) {
            record.clamped_evaluations += 1;
        }
        let pi = f.evaluate(&x)?;
        let gap = cost_gap(&x, &pi, k)?;
        let last = i == steps;
        converged = if gap <= cfg.gap_tolerance { converged + 1 } else { 0 };
        let stop = converged >= CONVERGED_STEPS;
        if i % cfg.record_stride == 0 || last || stop {
            record.push(t, &x, gap, [0.0, 0.0]);
        }
        if stop {
            record.terminated_by = Termination::GapTolerance;
            return Ok(());
        }
        if last {
            break;
        }
        x = k.project(&(&x - h * &pi))?;
    }
    record.terminated_by = Termination::Horizon;
    Ok(())
}
