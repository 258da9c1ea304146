//! Euclidean projection by a primal active-set method.
//!
//! Starts from the polytope's feasible witness with the constraints active
//! there, then alternates equality-constrained steps (projections onto the
//! null space of the working set) with blocking-constraint additions and
//! negative-multiplier removals. The Hessian is the identity, so every
//! subproblem is a least-squares solve.

use nalgebra::{DMatrix, DVector};

use super::Polytope;
use crate::error::{Error, Result};

const STEP_TOL: f64 = 1e-13;
const MULTIPLIER_TOL: f64 = 1e-12;
const MAX_ITERATIONS: usize = 1000;

#[derive(Clone, Debug)]
pub struct Projection {
    pub point: DVector<f64>,
    /// One multiplier per inequality row (zero when inactive).
    pub inequality_multipliers: DVector<f64>,
    pub equality_multipliers: DVector<f64>,
    /// Max of stationarity, primal, dual and complementarity residuals.
    pub kkt_residual: f64,
}

fn working_matrix(k: &Polytope, working: &[usize]) -> DMatrix<f64> {
    let (a, _) = k.inequalities();
    let (c, _) = k.equalities();
    let n = k.dim();
    DMatrix::from_fn(c.nrows() + working.len(), n, |i, j| {
        if i < c.nrows() {
            c[(i, j)]
        } else {
            a[(working[i - c.nrows()], j)]
        }
    })
}

fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max();
    sv.iter().filter(|&&s| s > 1e-10 * top.max(1.0)).count()
}

/// Orthonormal basis (as columns) of `{p : w p = 0}`.
fn null_space(w: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if w.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let eig = (w.transpose() * w).symmetric_eigen();
    let top = eig.eigenvalues.amax().max(1.0);
    let cols: Vec<_> = (0..n)
        .filter(|&i| eig.eigenvalues[i] <= 1e-10 * top)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Least-squares solve of `m y = rhs` via SVD.
fn lstsq(m: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let svd = m.clone().svd(true, true);
    let top = svd.singular_values.max();
    svd.solve(rhs, 1e-12 * top.max(1.0)).unwrap_or_else(|_| DVector::zeros(m.ncols()))
}

pub(super) fn project(k: &Polytope, z: &DVector<f64>) -> Result<Projection> {
    let (a, b) = k.inequalities();
    let (c, _) = k.equalities();
    let n = k.dim();
    let m = a.nrows();

    if k.max_violation(z) == 0.0 {
        return Ok(Projection {
            point: z.clone(),
            inequality_multipliers: DVector::zeros(m),
            equality_multipliers: DVector::zeros(c.nrows()),
            kkt_residual: 0.0,
        });
    }

    let mut x = k.witness().clone();
    let mut working: Vec<usize> = Vec::new();
    let mut current_rank = rank(&working_matrix(k, &working));
    for i in 0..m {
        let slack = b[i] - a.row(i).dot(&x.transpose());
        if slack.abs() <= 1e-12 * (1.0 + b[i].abs()) {
            working.push(i);
            let r = rank(&working_matrix(k, &working));
            if r > current_rank {
                current_rank = r;
            } else {
                working.pop();
            }
        }
    }

    for _ in 0..MAX_ITERATIONS {
        let g = &x - z;
        let w = working_matrix(k, &working);
        // Step p = -Z Zᵀ g keeps W-rows at equality.
        let z_basis = null_space(&w, n);
        let p = -(&z_basis * (z_basis.transpose() * &g));

        if p.norm() <= STEP_TOL * (1.0 + x.norm() + g.norm()) {
            let mu = if w.nrows() == 0 {
                DVector::zeros(0)
            } else {
                lstsq(&w.transpose(), &(-&g))
            };
            let ineq = mu.rows(c.nrows(), working.len());
            let (worst, value) = ineq
                .iter()
                .enumerate()
                .fold((None, -MULTIPLIER_TOL), |(wi, wv), (i, &v)| if v < wv { (Some(i), v) } else { (wi, wv) });
            match worst {
                Some(i) if value < -MULTIPLIER_TOL => {
                    working.remove(i);
                }
                _ => return Ok(certificate(k, z, x, &working, &mu)),
            }
            continue;
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..m {
            if working.contains(&i) {
                continue;
            }
            let ap = a.row(i).dot(&p.transpose());
            if ap > 1e-14 {
                let slack = (b[i] - a.row(i).dot(&x.transpose())).max(0.0);
                let step = slack / ap;
                if step < alpha {
                    alpha = step;
                    blocking = Some(i);
                }
            }
        }
        x += alpha * &p;
        if let Some(i) = blocking {
            working.push(i);
        }
    }
    debug_assert!(n > 0);
    Err(Error::NoConvergence("projection"))
}

fn certificate(
    k: &Polytope,
    z: &DVector<f64>,
    x: DVector<f64>,
    working: &[usize],
    mu: &DVector<f64>,
) -> Projection {
    let (a, b) = k.inequalities();
    let (c, _) = k.equalities();
    let p = c.nrows();
    let mut lambda = DVector::zeros(a.nrows());
    for (slot, &i) in working.iter().enumerate() {
        lambda[i] = mu[p + slot].max(0.0);
    }
    let nu = if p == 0 { DVector::zeros(0) } else { mu.rows(0, p).into_owned() };
    let stationarity = &x - z + a.transpose() * &lambda + c.transpose() * &nu;
    let slack = b - a * &x;
    let complementarity = lambda
        .iter()
        .zip(slack.iter())
        .fold(0.0_f64, |acc, (l, s)| acc.max((l * s).abs()));
    let kkt_residual = stationarity.amax().max(k.max_violation(&x)).max(complementarity);
    Projection { point: x, inequality_multipliers: lambda, equality_multipliers: nu, kkt_residual }
}
