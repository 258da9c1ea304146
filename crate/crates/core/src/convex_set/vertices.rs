use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use super::{Polytope, FEASIBILITY_TOL, MAX_ENUMERATION_DIM, VERTEX_MERGE_TOL};
use crate::error::{Error, Result};

/// Brute force over every choice of inequality rows that, together with the
/// equalities, pins down a single point.
pub(super) fn enumerate(k: &Polytope) -> Result<Vec<DVector<f64>>> {
    let n = k.dim();
    if n > MAX_ENUMERATION_DIM {
        return Err(Error::DimensionTooLarge { dim: n, limit: MAX_ENUMERATION_DIM });
    }
    let (a, b) = k.inequalities();
    let (c, d) = k.equalities();
    let eq_rank = if c.nrows() == 0 {
        0
    } else {
        let sv = c.clone().svd(false, false).singular_values;
        let top = sv.max();
        sv.iter().filter(|&&s| s > 1e-10 * top.max(1.0)).count()
    };
    let need = n.saturating_sub(eq_rank);

    let mut found: Vec<DVector<f64>> = Vec::new();
    for rows in (0..a.nrows()).combinations(need) {
        let total = c.nrows() + rows.len();
        let g = DMatrix::from_fn(total, n, |i, j| {
            if i < c.nrows() {
                c[(i, j)]
            } else {
                a[(rows[i - c.nrows()], j)]
            }
        });
        let rhs = DVector::from_fn(total, |i, _| if i < c.nrows() { d[i] } else { b[rows[i - c.nrows()]] });
        let svd = g.clone().svd(true, true);
        let top = svd.singular_values.max();
        let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * top.max(1.0)).count();
        if rank < n {
            continue;
        }
        let Ok(mut x) = svd.solve(&rhs, 1e-12 * top.max(1.0)) else {
            continue;
        };
        if rank == total {
            let lu = g.clone().full_piv_lu();
            if let Some(exact) = lu.solve(&rhs) {
                x = exact;
                if let Some(fix) = lu.solve(&(&rhs - &g * &x)) {
                    x += fix;
                }
            }
        }
        if k.max_violation(&x) > FEASIBILITY_TOL {
            continue;
        }
        if !found.iter().any(|v| (v - &x).amax() <= VERTEX_MERGE_TOL) {
            found.push(x);
        }
    }
    found.sort_by(|u, v| {
        u.iter()
            .zip(v.iter())
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(found)
}
