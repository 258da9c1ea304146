//! Scenario files, the built-in scenarios, and the run-and-check driver.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    check_exponential_decay, deviation_range, equilibrium_oracle, iss_bound, iss_constants, perturbation_bound,
    AnalysisSummary, BoundCheck,
};
use crate::convex_set::{Polytope, PolytopeSpec};
use crate::disturbances::{SignalSpec, TimeSignal};
use crate::dynamics::{integrate_projected, simulate, Method, Problem, SolverConfig, TrajectoryRecord};
use crate::error::{check_dim, Error, Result};
use crate::export::{export_csv, export_json};
use crate::operators::{check_monotonicity, Operator, OperatorSpec, PerturbationSpec};
use crate::plot::trajectory_svg;

const BUILTIN_SOURCES: [(&str, &str); 6] = [
    ("traffic", include_str!("../scenarios/traffic.json")),
    ("traffic-constrained", include_str!("../scenarios/traffic-constrained.json")),
    ("congestion", include_str!("../scenarios/congestion.json")),
    ("congestion-delta1", include_str!("../scenarios/congestion-delta1.json")),
    ("congestion-delta2", include_str!("../scenarios/congestion-delta2.json")),
    ("congestion-eps", include_str!("../scenarios/congestion-eps.json")),
];

/// Tolerance for "every recorded state is in K".
pub const RECORD_FEASIBILITY_TOL: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    /// Final state within `tol` (Euclidean) of `target`.
    FinalNear { target: Vec<f64>, tol: f64 },
    /// Final state within `tol` of the oracle solution of the integrated operator.
    FinalNearOracle { tol: f64 },
    FinalGap { max: f64 },
    AllFeasible { tol: f64 },
    ExponentialDecay { slack_per_h: f64 },
    /// After `t_from`, the distance to the undisturbed solution stays within
    /// the ultimate input-to-state bound.
    IssBound { t_from: f64 },
    /// After `t_from`, the distance to the undisturbed solution never drops
    /// below `min_deviation`.
    KeepsMoving { t_from: f64, min_deviation: f64 },
    /// The run reached the horizon without leaving the set.
    Admissible,
    /// Distance between the perturbed limit and the unperturbed solution is
    /// within the perturbation bound.
    PerturbationBound,
    /// The projected baseline ends within `tol` of the same point.
    AgreesWithProjected { tol: f64 },
}

impl Check {
    pub fn name(&self) -> &'static str {
        match self {
            Check::FinalNear { .. } => "final_near",
            Check::FinalNearOracle { .. } => "final_near_oracle",
            Check::FinalGap { .. } => "final_gap",
            Check::AllFeasible { .. } => "all_feasible",
            Check::ExponentialDecay { .. } => "exponential_decay",
            Check::IssBound { .. } => "iss_bound",
            Check::KeepsMoving { .. } => "keeps_moving",
            Check::Admissible => "admissible",
            Check::PerturbationBound => "perturbation_bound",
            Check::AgreesWithProjected { .. } => "agrees_with_projected",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub polytope: PolytopeSpec,
    pub operator: OperatorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_disturbance: Option<SignalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics_disturbance: Option<SignalSpec>,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub config: SolverConfig,
    #[serde(default)]
    pub checks: Vec<Check>,
}

/// A validated scenario, ready to integrate.
#[derive(Clone, Debug)]
pub struct Instance {
    pub set: Polytope,
    pub operator: Operator,
    pub cost_disturbance: TimeSignal,
    pub dynamics_disturbance: TimeSignal,
    pub x0: DVector<f64>,
}

impl Instance {
    pub fn problem(&self) -> Problem<'_> {
        Problem {
            operator: &self.operator,
            set: &self.set,
            cost_disturbance: &self.cost_disturbance,
            dynamics_disturbance: &self.dynamics_disturbance,
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Scenario::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn builtin(name: &str) -> Option<Scenario> {
        BUILTIN_SOURCES
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, src)| Scenario::from_json(src).expect("built-in scenarios parse"))
    }

    pub fn builtins() -> Vec<Scenario> {
        BUILTIN_SOURCES.iter().map(|(_, src)| Scenario::from_json(src).expect("built-in scenarios parse")).collect()
    }

    /// A built-in name, or else a path to a scenario file.
    pub fn resolve(name_or_path: &str) -> Result<Scenario> {
        if let Some(s) = Scenario::builtin(name_or_path) {
            return Ok(s);
        }
        let path = Path::new(name_or_path);
        if path.is_file() {
            return Scenario::load(path);
        }
        Err(Error::Validation(format!("`{name_or_path}` is neither a built-in scenario nor a file")))
    }

    pub fn build(&self) -> Result<Instance> {
        self.config.validate()?;
        let set = self.polytope.build()?;
        let n = set.dim();
        let mut spec = self.operator.clone();
        if let Some(p) = &self.perturbation {
            if spec.perturbation.is_some() {
                return Err(Error::Validation("perturbation given both in the scenario and in the operator".into()));
            }
            spec.perturbation = Some(p.clone());
        }
        let operator = spec.build()?;
        check_dim(n, operator.dim())?;
        let signal = |s: &Option<SignalSpec>| match s {
            Some(spec) => TimeSignal::new(n, spec.clone()),
            None => Ok(TimeSignal::zero(n)),
        };
        let cost_disturbance = signal(&self.cost_disturbance)?;
        let dynamics_disturbance = signal(&self.dynamics_disturbance)?;
        check_dim(n, self.x0.len())?;
        let x0 = DVector::from_column_slice(&self.x0);
        if !set.contains(&x0, crate::dynamics::ADMISSIBILITY_TOL)? {
            return Err(Error::InfeasibleStart);
        }
        if self.checks.contains(&Check::PerturbationBound) && operator.perturbation().is_none() {
            return Err(Error::Validation("perturbation_bound check needs a perturbation".into()));
        }
        Ok(Instance { set, operator, cost_disturbance, dynamics_disturbance, x0 })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub svg: bool,
    pub format: Format,
}

#[derive(Clone, Debug)]
pub struct ScenarioReport {
    pub name: String,
    pub record: TrajectoryRecord,
    pub summary: AnalysisSummary,
    /// Error that stopped the integration early.
    pub error: Option<String>,
    pub files: Vec<PathBuf>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.summary.all_pass()
    }
}

#[derive(Serialize)]
struct AnalysisFile<'a> {
    scenario: &'a str,
    #[serde(flatten)]
    summary: &'a AnalysisSummary,
    terminated_by: crate::dynamics::Termination,
    error: Option<&'a str>,
}

/// Integrates the scenario, writes its artifacts into `out_dir`, and
/// evaluates its checks.
pub fn run_scenario(scn: &Scenario, out_dir: &Path, opts: RunOptions) -> Result<ScenarioReport> {
    let inst = scn.build()?;
    info!("running {} for t in [0, {}] with h = {}", scn.name, scn.config.horizon, scn.config.step);
    let (record, error) = simulate(&inst.problem(), &inst.x0, &scn.config);
    let error = error.map(|e| e.to_string());
    let summary = analyze_record(scn, &inst, &record, error.is_some())?;

    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    if !record.is_empty() {
        let path = match opts.format {
            Format::Csv => out_dir.join(format!("{}.csv", scn.name)),
            Format::Json => out_dir.join(format!("{}.trajectory.json", scn.name)),
        };
        match opts.format {
            Format::Csv => export_csv(&record, &path)?,
            Format::Json => export_json(&record, &path)?,
        }
        files.push(path);
    }
    let analysis_path = out_dir.join(format!("{}.analysis.json", scn.name));
    let file = AnalysisFile {
        scenario: &scn.name,
        summary: &summary,
        terminated_by: record.terminated_by,
        error: error.as_deref(),
    };
    fs::write(&analysis_path, serde_json::to_string_pretty(&file)?)?;
    files.push(analysis_path);
    if opts.svg && !record.is_empty() {
        let svg_path = out_dir.join(format!("{}.svg", scn.name));
        fs::write(&svg_path, trajectory_svg(&record, &scn.name))?;
        files.push(svg_path);
    }
    Ok(ScenarioReport { name: scn.name.clone(), record, summary, error, files })
}

/// Evaluates a scenario's checks against an existing trajectory, for
/// example one read back from CSV.
pub fn analyze_trajectory(scn: &Scenario, record: &TrajectoryRecord) -> Result<AnalysisSummary> {
    let inst = scn.build()?;
    analyze_record(scn, &inst, record, false)
}

fn analyze_record(scn: &Scenario, inst: &Instance, record: &TrajectoryRecord, failed: bool) -> Result<AnalysisSummary> {
    let base = inst.operator.unperturbed();
    let base_affine = base.as_affine().expect("base operators are affine");
    let base_star = equilibrium_oracle(&base_affine, &inst.set).ok();
    let iss = iss_constants(&base_affine, &inst.set).ok();
    let mut summary = AnalysisSummary {
        gap_final: record.final_gap().unwrap_or(f64::NAN),
        equilibrium: base_star.as_ref().map(|x| x.iter().copied().collect()),
        iss,
        bound_checks: Vec::new(),
    };
    let last = record.final_state();
    for check in &scn.checks {
        let result = evaluate(check, scn, inst, record, failed, last, base_star.as_ref(), &base);
        let (pass, margin) = match result {
            Ok(Some(margin)) => (margin >= 0.0, margin),
            Ok(None) | Err(_) => (false, f64::NAN),
        };
        summary.bound_checks.push(BoundCheck { name: check.name().into(), pass, margin });
    }
    Ok(summary)
}

/// Margin of one check (nonnegative means pass), or `None` when it cannot be
/// evaluated on this record.
#[allow(clippy::too_many_arguments)]
fn evaluate(
    check: &Check,
    scn: &Scenario,
    inst: &Instance,
    record: &TrajectoryRecord,
    failed: bool,
    last: Option<&DVector<f64>>,
    base_star: Option<&DVector<f64>>,
    base: &Operator,
) -> Result<Option<f64>> {
    let Some(last) = last else { return Ok(None) };
    Ok(match check {
        Check::FinalNear { target, tol } => {
            check_dim(last.len(), target.len())?;
            Some(tol - (last - DVector::from_column_slice(target)).norm())
        }
        Check::FinalNearOracle { tol } => match inst.operator.as_affine() {
            Some(f) => Some(tol - (last - equilibrium_oracle(&f, &inst.set)?).norm()),
            None => None,
        },
        Check::FinalGap { max } => record.final_gap().map(|g| max - g),
        Check::AllFeasible { tol } => {
            let worst = record.states.iter().map(|x| inst.set.max_violation(x)).fold(0.0, f64::max);
            Some(tol - worst)
        }
        Check::ExponentialDecay { slack_per_h } => Some(-check_exponential_decay(record, *slack_per_h).max_violation),
        Check::IssBound { t_from } => {
            let (Some(star), Ok(consts)) = (base_star, iss_constants(&base.as_affine().expect("affine"), &inst.set))
            else {
                return Ok(None);
            };
            let db = inst.cost_disturbance.bounds();
            let eb = inst.dynamics_disturbance.bounds();
            let bound = iss_bound(&consts, eb.sup_norm(), db.sup_norm(), db.derivative_sup_norm(), 0.0, f64::INFINITY)?;
            deviation_range(record, star, *t_from).map(|(hi, _)| bound - hi)
        }
        Check::KeepsMoving { t_from, min_deviation } => {
            base_star.and_then(|star| deviation_range(record, star, *t_from)).map(|(_, lo)| lo - min_deviation)
        }
        Check::Admissible => {
            let reached = record.final_time().is_some_and(|t| t >= scn.config.horizon - 0.5 * scn.config.step);
            let inside = record.states.iter().all(|x| inst.set.max_violation(x) <= RECORD_FEASIBILITY_TOL);
            Some(if !failed && reached && inside { 0.0 } else { -1.0 })
        }
        Check::PerturbationBound => {
            let Some(star) = base_star else { return Ok(None) };
            let report = check_monotonicity(base, &inst.set)?;
            let Some(c) = report.class.strong_modulus() else { return Ok(None) };
            let bound = perturbation_bound(last, base, inst.operator.perturbation(), &inst.set, c)?;
            Some(bound - (last - star).norm())
        }
        Check::AgreesWithProjected { tol } => {
            let cfg = scn.config.clone().with_method(Method::Projected);
            let baseline = integrate_projected(&inst.x0, &inst.operator, &inst.set, &cfg)?;
            baseline.final_state().map(|p| tol - (last - p).norm())
        }
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioEntry {
    pub name: String,
    pub description: String,
    /// `None` for built-ins.
    pub source: Option<PathBuf>,
}

#[derive(Clone, Debug, Default)]
pub struct ScenarioListing {
    pub entries: Vec<ScenarioEntry>,
    pub warnings: Vec<String>,
}

/// The built-ins, followed by every `*.json` scenario in `user_dir`.
/// Files that fail to parse or validate become warnings.
pub fn list_scenarios(user_dir: Option<&Path>) -> ScenarioListing {
    let mut listing = ScenarioListing::default();
    for s in Scenario::builtins() {
        listing.entries.push(ScenarioEntry { name: s.name, description: s.description, source: None });
    }
    let Some(dir) = user_dir else { return listing };
    let mut paths: Vec<PathBuf> = match fs::read_dir(dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect(),
        Err(e) => {
            listing.warnings.push(format!("{}: {e}", dir.display()));
            return listing;
        }
    };
    paths.sort();
    for path in paths {
        match Scenario::load(&path).and_then(|s| s.build().map(|_| s)) {
            Ok(s) => listing.entries.push(ScenarioEntry { name: s.name, description: s.description, source: Some(path) }),
            Err(e) => listing.warnings.push(format!("{}: {e}", path.display())),
        }
    }
    listing
}
