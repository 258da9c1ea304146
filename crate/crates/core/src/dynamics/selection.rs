//! End-of-step best-response selection.
//!
//! Finds `b ∈ K` with `(z − b)ᵀ(p + H b) >= 0` for all `z ∈ K`, that is, a
//! best response to the linearly predicted cost `p + H b`. The affine VI is
//! solved by guessing the active inequality rows and solving the KKT system
//! for that guess. The previous step's active set is tried first, then its
//! one-row neighbours, then every admissible subset.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use crate::convex_set::Polytope;

const PRIMAL_TOL: f64 = 1e-10;
const DUAL_TOL: f64 = 1e-10;
const RANK_TOL: f64 = 1e-11;
/// Full enumeration is skipped above this many inequality rows.
const MAX_ENUMERATED_ROWS: usize = 20;

#[derive(Clone, Debug, Default)]
pub(crate) struct LocalSelector {
    working: Vec<usize>,
}

impl LocalSelector {
    pub(crate) fn select(&mut self, k: &Polytope, p: &DVector<f64>, h: &DMatrix<f64>) -> Option<DVector<f64>> {
        let (a, _) = k.inequalities();
        let m = a.nrows();
        let (c, _) = k.equalities();
        let free = k.dim().saturating_sub(c.nrows());

        if let Some(b) = try_working_set(k, p, h, &self.working) {
            return Some(b);
        }
        let previous = self.working.clone();
        for i in 0..m {
            let mut guess = previous.clone();
            match guess.iter().position(|&r| r == i) {
                Some(pos) => {
                    guess.remove(pos);
                }
                None if guess.len() < free => {
                    guess.push(i);
                    guess.sort_unstable();
                }
                None => continue,
            }
            if let Some(b) = try_working_set(k, p, h, &guess) {
                self.working = guess;
                return Some(b);
            }
        }
        if m > MAX_ENUMERATED_ROWS {
            return None;
        }
        for size in 0..=free.min(m) {
            for guess in (0..m).combinations(size) {
                if let Some(b) = try_working_set(k, p, h, &guess) {
                    self.working = guess;
                    return Some(b);
                }
            }
        }
        None
    }
}

fn try_working_set(k: &Polytope, p: &DVector<f64>, h: &DMatrix<f64>, working: &[usize]) -> Option<DVector<f64>> {
    let (a, rhs) = k.inequalities();
    let (c, d) = k.equalities();
    let n = k.dim();
    let w = working.len();
    let e = c.nrows();
    let size = n + w + e;

    let mut kkt = DMatrix::zeros(size, size);
    let mut r = DVector::zeros(size);
    kkt.view_mut((0, 0), (n, n)).copy_from(h);
    for (slot, &row) in working.iter().enumerate() {
        for j in 0..n {
            kkt[(n + slot, j)] = a[(row, j)];
            kkt[(j, n + slot)] = a[(row, j)];
        }
        r[n + slot] = rhs[row];
    }
    for i in 0..e {
        for j in 0..n {
            kkt[(n + w + i, j)] = c[(i, j)];
            kkt[(j, n + w + i)] = c[(i, j)];
        }
        r[n + w + i] = d[i];
    }
    for j in 0..n {
        r[j] = -p[j];
    }

    let svd = kkt.svd(true, true);
    let top = svd.singular_values.max().max(1.0);
    if svd.singular_values.min() <= RANK_TOL * top {
        return None;
    }
    let sol = svd.solve(&r, 0.0).ok()?;
    let b = sol.rows(0, n).into_owned();
    let scale = 1.0 + p.amax();
    if working.iter().enumerate().any(|(slot, _)| sol[n + slot] < -DUAL_TOL * scale) {
        return None;
    }
    if k.max_violation(&b) > PRIMAL_TOL {
        return None;
    }
    Some(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn vi_residual(k: &Polytope, p: &DVector<f64>, h: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
        let pi = p + h * b;
        b.dot(&pi) - k.lp_value(&pi).unwrap()
    }

    #[test]
    fn zero_matrix_reduces_to_a_vertex() {
        let k = Polytope::simplex(3).unwrap();
        let p = DVector::from_column_slice(&[2.0, 1.0, 3.0]);
        let b = LocalSelector::default().select(&k, &p, &DMatrix::zeros(3, 3)).unwrap();
        assert_abs_diff_eq!(b, DVector::from_column_slice(&[0.0, 1.0, 0.0]), epsilon = 1e-12);
    }

    #[test]
    fn identity_matrix_gives_a_projection() {
        // (z - b)ᵀ(b - z0) >= 0 characterizes b = proj(z0).
        let k = Polytope::simplex(3).unwrap();
        let z0 = DVector::from_column_slice(&[0.9, 0.5, -0.2]);
        let b = LocalSelector::default().select(&k, &(-&z0), &DMatrix::identity(3, 3)).unwrap();
        assert_abs_diff_eq!(b, k.project(&z0).unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn warm_start_tracks_changing_costs() {
        let k = Polytope::simplex_with(
            DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 1.0]),
            DVector::from_column_slice(&[0.9]),
        )
        .unwrap();
        let h = DMatrix::from_row_slice(3, 3, &[2.0, 3.0, 1.0, 1.0, 2.0, 3.0, 3.0, 1.0, 2.0]) * 0.01;
        let mut sel = LocalSelector::default();
        for i in 0..50 {
            let t = i as f64 * 0.3;
            let p = DVector::from_column_slice(&[t.sin(), (2.0 * t).cos(), 0.5 * t.sin()]);
            let b = sel.select(&k, &p, &h).unwrap();
            assert!(k.contains(&b, 1e-9).unwrap());
            assert!(vi_residual(&k, &p, &h, &b).abs() <= 1e-9);
        }
    }
}
