//! Gap (Lyapunov) function, solution checks, input-to-state stability
//! constants and bounds, the perturbed-equilibrium bound, and an independent
//! equilibrium oracle for small affine problems.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::convex_set::{Polytope, FEASIBILITY_TOL};
use crate::dynamics::TrajectoryRecord;
use crate::error::{check_dim, Error, Result};
use crate::operators::{check_monotonicity, AffineOperator, Operator, Perturbation};

/// Largest dimension the equilibrium oracle accepts.
pub const ORACLE_MAX_DIM: usize = 6;
/// Gap an oracle candidate must reach to be accepted.
pub const ORACLE_GAP_TOL: f64 = 1e-9;

/// `xᵀπ − min over K of yᵀπ`.
pub fn cost_gap(x: &DVector<f64>, pi: &DVector<f64>, k: &Polytope) -> Result<f64> {
    check_dim(k.dim(), x.len())?;
    Ok(x.dot(pi) - k.lp_value(pi)?)
}

/// The gap `V(x) = xᵀF(x) − min_y yᵀF(x)`.
pub fn gap(x: &DVector<f64>, f: &Operator, k: &Polytope) -> Result<f64> {
    cost_gap(x, &f.evaluate(x)?, k)
}

/// True iff `x` is feasible and its gap is at most `tol`.
pub fn verify_solution(x: &DVector<f64>, f: &Operator, k: &Polytope, tol: f64) -> bool {
    matches!(k.contains(x, FEASIBILITY_TOL.max(tol)), Ok(true)) && gap(x, f, k).is_ok_and(|v| v <= tol)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayCheck {
    pub pass: bool,
    /// Largest `gaps[k] − (gaps[0] e^{−t_k} + slack)`; negative when passing.
    pub max_violation: f64,
    pub worst_index: usize,
}

/// Checks `gaps[k] <= gaps[0] e^{−(t_k − t_0)} + slack_per_h · h` on every sample.
pub fn check_exponential_decay(traj: &TrajectoryRecord, slack_per_h: f64) -> DecayCheck {
    let slack = slack_per_h * traj.step;
    let (Some(&v0), Some(&t0)) = (traj.gaps.first(), traj.times.first()) else {
        return DecayCheck { pass: true, max_violation: f64::NEG_INFINITY, worst_index: 0 };
    };
    let (worst_index, max_violation) = traj
        .gaps
        .iter()
        .zip(&traj.times)
        .map(|(&v, &t)| v - (v0 * (-(t - t0)).exp() + slack))
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, e)| if e > best.1 { (i, e) } else { best });
    DecayCheck { pass: max_violation <= 0.0, max_violation, worst_index }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IssConstants {
    /// Strong-monotonicity modulus on the tangent space.
    pub c: f64,
    /// Spectral norm of the Jacobian.
    pub sigma: f64,
    /// Largest `‖F(x)‖` over the set.
    #[serde(rename = "M1")]
    pub m1: f64,
    /// Diameter of the set.
    #[serde(rename = "DK")]
    pub dk: f64,
}

pub fn iss_constants(f: &AffineOperator, k: &Polytope) -> Result<IssConstants> {
    check_dim(k.dim(), f.dim())?;
    let report = check_monotonicity(&Operator::from(f.clone()), k)?;
    let Some(c) = report.class.strong_modulus() else {
        return Err(Error::NotStronglyMonotone { modulus: report.modulus });
    };
    let sigma = f.matrix().clone().svd(false, false).singular_values.max();
    let vertices = k.enumerate_vertices()?;
    let mut m1 = 0.0_f64;
    for v in &vertices {
        m1 = m1.max(f.evaluate(v)?.norm());
    }
    let mut dk = 0.0_f64;
    for (i, u) in vertices.iter().enumerate() {
        for v in &vertices[i + 1..] {
            dk = dk.max((u - v).norm());
        }
    }
    Ok(IssConstants { c, sigma, m1, dk })
}

/// Bound on `‖x(t) − x*‖` for a run with the given disturbance norms, starting
/// from Lyapunov value `v2_at_start`. Pass `t = f64::INFINITY` for the
/// ultimate bound.
pub fn iss_bound(
    consts: &IssConstants,
    sup_eps: f64,
    sup_delta: f64,
    sup_delta_dot: f64,
    v2_at_start: f64,
    t: f64,
) -> Result<f64> {
    let IssConstants { c, sigma, m1, dk } = *consts;
    if c.is_nan() || c <= 0.0 {
        return Err(Error::NonpositiveModulus(c));
    }
    let gamma = sup_delta_dot.powi(2) / (2.0 * c)
        + sigma.powi(2) * sup_eps.powi(2) / (2.0 * c)
        + m1 * sup_eps
        + sup_eps * sup_delta;
    let v1 = v2_at_start * (-t).exp() + gamma + dk * sup_delta;
    Ok((v1.max(0.0) / c).sqrt())
}

/// `max{(z − x)ᵀδ(x) : z ∈ argmin over K of yᵀF(x)}`.
pub fn h_function(x: &DVector<f64>, f: &Operator, delta: &Perturbation, k: &Polytope) -> Result<f64> {
    check_dim(k.dim(), x.len())?;
    if delta.is_none() {
        return Ok(0.0);
    }
    let d = delta.evaluate(x)?;
    let z = k.lp_maximize_on_face(&f.evaluate(x)?, &d)?;
    Ok((z - x).dot(&d))
}

/// `√(max(h(x̃*), 0) / c)`, a bound on the distance between the perturbed and
/// the unperturbed equilibrium.
pub fn perturbation_bound(
    x_tilde: &DVector<f64>,
    f: &Operator,
    delta: &Perturbation,
    k: &Polytope,
    c: f64,
) -> Result<f64> {
    if c.is_nan() || c <= 0.0 {
        return Err(Error::NonpositiveModulus(c));
    }
    Ok((h_function(x_tilde, f, delta, k)?.max(0.0) / c).sqrt())
}

/// Solves VI(K, F) for affine `F` by trying every active set of inequality
/// rows and solving its KKT system. Independent of the integrators.
pub fn equilibrium_oracle(f: &AffineOperator, k: &Polytope) -> Result<DVector<f64>> {
    let n = k.dim();
    check_dim(n, f.dim())?;
    if n > ORACLE_MAX_DIM {
        return Err(Error::DimensionTooLarge { dim: n, limit: ORACLE_MAX_DIM });
    }
    let (a, b) = k.inequalities();
    let (c, d) = k.equalities();
    let op = Operator::from(f.clone());
    let mut best: Option<(f64, DVector<f64>)> = None;
    for size in 0..=a.nrows().min(n) {
        for active in (0..a.nrows()).combinations(size) {
            let Some(x) = kkt_candidate(f, a, b, c, d, &active) else {
                continue;
            };
            if k.max_violation(&x) > FEASIBILITY_TOL {
                continue;
            }
            let v = gap(&x, &op, k)?;
            if v <= ORACLE_GAP_TOL {
                return Ok(x);
            }
            if v <= 1e-6 && best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                best = Some((v, x));
            }
        }
    }
    best.map(|(_, x)| x).ok_or(Error::NoSolutionFound)
}

fn kkt_candidate(
    f: &AffineOperator,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DMatrix<f64>,
    d: &DVector<f64>,
    active: &[usize],
) -> Option<DVector<f64>> {
    let n = f.dim();
    let w = active.len();
    let e = c.nrows();
    let size = n + w + e;
    let mut lhs = DMatrix::zeros(size, size);
    let mut rhs = DVector::zeros(size);
    lhs.view_mut((0, 0), (n, n)).copy_from(f.matrix());
    rhs.rows_mut(0, n).copy_from(&(-f.offset()));
    let rows = active.iter().map(|&i| (a.row(i), b[i])).chain((0..e).map(|i| (c.row(i), d[i])));
    for (slot, (row, value)) in rows.enumerate() {
        for j in 0..n {
            lhs[(n + slot, j)] = row[j];
            lhs[(j, n + slot)] = row[j];
        }
        rhs[n + slot] = value;
    }
    let lu = lhs.clone().full_piv_lu();
    let sol = if lu.is_invertible() {
        lu.solve(&rhs)?
    } else {
        // Monotone but not strongly monotone problems can have singular KKT
        // systems; any exact least-squares solution is still a candidate.
        let sol = lhs.clone().svd(true, true).solve(&rhs, 1e-12).ok()?;
        if (&lhs * &sol - &rhs).amax() > 1e-9 {
            return None;
        }
        sol
    };
    if sol.rows(n, w).iter().any(|&l| l < -1e-9) {
        return None;
    }
    Some(sol.rows(0, n).into_owned())
}

/// Largest and smallest `‖x(t) − target‖` over samples with `t >= t_from`.
pub fn deviation_range(traj: &TrajectoryRecord, target: &DVector<f64>, t_from: f64) -> Option<(f64, f64)> {
    traj.times
        .iter()
        .zip(&traj.states)
        .filter(|(&t, _)| t >= t_from)
        .map(|(_, x)| (x - target).norm())
        .fold(None, |acc, d| match acc {
            None => Some((d, d)),
            Some((hi, lo)) => Some((hi.max(d), lo.min(d))),
        })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub pass: bool,
    /// Positive when the check passes with room to spare.
    pub margin: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub gap_final: f64,
    pub equilibrium: Option<Vec<f64>>,
    pub iss: Option<IssConstants>,
    pub bound_checks: Vec<BoundCheck>,
}

impl AnalysisSummary {
    pub fn all_pass(&self) -> bool {
        self.bound_checks.iter().all(|c| c.pass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Termination;
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn traffic() -> Operator {
        AffineOperator::from_rows(&[vec![2.0, 3.0, 1.0], vec![1.0, 2.0, 3.0], vec![3.0, 1.0, 2.0]], &[0.0; 3])
            .unwrap()
            .into()
    }

    fn congestion() -> AffineOperator {
        AffineOperator::from_rows(
            &[vec![2.0, 0.0, 0.5], vec![0.0, 1.5, 0.5], vec![0.5, 0.5, 2.0]],
            &[0.3, 0.5, 0.6],
        )
        .unwrap()
    }

    /// Interior solution of F₁ = F₂ = F₃ on the simplex, by Cramer's rule on
    /// the 3x3 system [M₁−M₂; M₂−M₃; 1 1 1] x = [q₂−q₁; q₃−q₂; 1].
    fn congestion_star() -> DVector<f64> {
        let rows = [[2.0, -1.5, 0.0], [-0.5, 1.0, -1.5], [1.0, 1.0, 1.0]];
        let rhs = [0.2, 0.1, 1.0];
        let det3 = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let det = det3(rows);
        DVector::from_fn(3, |j, _| {
            let mut m = rows;
            for (i, row) in m.iter_mut().enumerate() {
                row[j] = rhs[i];
            }
            det3(m) / det
        })
    }

    fn record(times: Vec<f64>, gaps: Vec<f64>) -> TrajectoryRecord {
        TrajectoryRecord {
            states: vec![v(&[1.0]); times.len()],
            disturbance_norms: vec![[0.0, 0.0]; times.len()],
            times,
            gaps,
            terminated_by: Termination::Horizon,
            step: 0.01,
            clamped_evaluations: 0,
            fallback_selections: 0,
        }
    }

    #[test]
    fn gap_examples() {
        let k = Polytope::simplex(3).unwrap();
        let third = v(&[1.0 / 3.0; 3]);
        assert_abs_diff_eq!(gap(&third, &traffic(), &k).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(gap(&v(&[1.0, 0.0, 0.0]), &traffic(), &k).unwrap(), 1.0, epsilon = 1e-14);
        let zero = Operator::from(AffineOperator::zero(3));
        assert_eq!(gap(&v(&[0.2, 0.3, 0.5]), &zero, &k).unwrap(), 0.0);
    }

    #[test]
    fn verify_solution_examples() {
        let k = Polytope::simplex(3).unwrap();
        assert!(verify_solution(&v(&[1.0 / 3.0; 3]), &traffic(), &k, 1e-8));
        let star = congestion_star();
        assert_abs_diff_eq!(star, v(&[0.446154, 0.461538, 0.092308]), epsilon = 1e-6);
        let f = Operator::from(congestion());
        assert!(verify_solution(&star, &f, &k, 1e-6));
        let e1 = v(&[1.0, 0.0, 0.0]);
        assert!(!verify_solution(&e1, &f, &k, 1e-6));
        assert_abs_diff_eq!(gap(&e1, &f, &k).unwrap(), 1.8, epsilon = 1e-12);
    }

    #[test]
    fn decay_check_examples() {
        let flat = record(vec![0.0, 0.1, 0.2], vec![0.0; 3]);
        assert!(check_exponential_decay(&flat, 10.0).pass);

        let times: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
        let mut gaps: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
        assert!(check_exponential_decay(&record(times.clone(), gaps.clone()), 0.0).max_violation <= 1e-15);
        gaps[5] *= 2.0;
        let check = check_exponential_decay(&record(times, gaps), 1.0);
        assert!(!check.pass);
        assert_eq!(check.worst_index, 5);
    }

    #[test]
    fn iss_constants_examples() {
        let k = Polytope::simplex(3).unwrap();
        let consts = iss_constants(&congestion(), &k).unwrap();
        assert_abs_diff_eq!(consts.c, 1.2113248654, epsilon = 1e-9);
        assert_abs_diff_eq!(consts.dk, 2f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(consts.sigma, 2.6234898, epsilon = 1e-6);
        // F(e₃) = M e₃ + q = [0.8, 1.0, 2.6].
        assert_abs_diff_eq!(consts.m1, 8.4f64.sqrt(), epsilon = 1e-12);

        let id = AffineOperator::new(DMatrix::identity(3, 3), DVector::zeros(3)).unwrap();
        let consts = iss_constants(&id, &k).unwrap();
        assert_abs_diff_eq!(consts.c, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(consts.sigma, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(consts.m1, 1.0, epsilon = 1e-12);

        let traffic_affine = traffic().as_affine().unwrap();
        assert!(matches!(iss_constants(&traffic_affine, &k), Err(Error::NotStronglyMonotone { .. })));
    }

    #[test]
    fn iss_bound_behaviour() {
        let k = Polytope::simplex(3).unwrap();
        let consts = iss_constants(&congestion(), &k).unwrap();
        assert_eq!(iss_bound(&consts, 0.0, 0.0, 0.0, 3.0, f64::INFINITY).unwrap(), 0.0);
        let mut previous = f64::INFINITY;
        for t in [0.0, 1.0, 5.0, 20.0] {
            let b = iss_bound(&consts, 0.0, 0.0, 0.0, 3.0, t).unwrap();
            assert!(b < previous);
            previous = b;
        }
        let grid = [0.0, 0.05, 0.2, 1.0];
        for (&e, &d, &dd) in itertools::iproduct!(&grid, &grid, &grid) {
            let base = iss_bound(&consts, e, d, dd, 0.0, f64::INFINITY).unwrap();
            for bump in [(0.1, 0.0, 0.0), (0.0, 0.1, 0.0), (0.0, 0.0, 0.1)] {
                assert!(iss_bound(&consts, e + bump.0, d + bump.1, dd + bump.2, 0.0, f64::INFINITY).unwrap() >= base);
            }
        }
        let bad = IssConstants { c: 0.0, ..consts };
        assert!(matches!(iss_bound(&bad, 0.0, 0.0, 0.0, 1.0, 1.0), Err(Error::NonpositiveModulus(_))));
    }

    #[test]
    fn h_function_examples() {
        let k = Polytope::simplex(3).unwrap();
        let f = Operator::from(congestion());
        let x = v(&[0.3, 0.3, 0.4]);
        assert_eq!(h_function(&x, &f, &Perturbation::None, &k).unwrap(), 0.0);

        let delta = Perturbation::Affine { p: DMatrix::identity(3, 3) * 0.1, r: DVector::zeros(3) };
        // Whole simplex is optimal at x*, so h = 0.1 (max xᵢ − ‖x‖²).
        let star = congestion_star();
        let expected = 0.1 * (star.max() - star.norm_squared());
        assert_abs_diff_eq!(h_function(&star, &f, &delta, &k).unwrap(), expected, epsilon = 1e-9);
        assert_abs_diff_eq!(expected, 0.0041, epsilon = 1e-4);

        let e1 = v(&[1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(h_function(&e1, &f, &delta, &k).unwrap(), -0.1, epsilon = 1e-12);
        assert_eq!(perturbation_bound(&e1, &f, &delta, &k, 1.2).unwrap(), 0.0);
        assert_eq!(perturbation_bound(&star, &f, &Perturbation::None, &k, 1.2).unwrap(), 0.0);
    }

    #[test]
    fn oracle_examples() {
        let k = Polytope::simplex(3).unwrap();
        let x = equilibrium_oracle(&traffic().as_affine().unwrap(), &k).unwrap();
        assert_abs_diff_eq!(x, v(&[1.0 / 3.0; 3]), epsilon = 1e-12);
        let x = equilibrium_oracle(&congestion(), &k).unwrap();
        assert_abs_diff_eq!(x, congestion_star(), epsilon = 1e-12);
        let x0 = v(&[0.2, 0.5, 0.3]);
        let proj = AffineOperator::new(DMatrix::identity(3, 3), -&x0).unwrap();
        assert_abs_diff_eq!(equilibrium_oracle(&proj, &k).unwrap(), x0, epsilon = 1e-12);
        assert!(matches!(
            equilibrium_oracle(&AffineOperator::zero(7), &Polytope::simplex(7).unwrap()),
            Err(Error::DimensionTooLarge { .. })
        ));
    }
}
