//! Dense two-phase primal simplex with Bland's rule.
//!
//! The tableau works on one of two standard forms of `{x : Ax <= b, Cx = d}`:
//! free variables split as `x = x+ - x-`, or variables shifted by a known
//! lower bound `x = l + x'` with `x' >= 0`. The shifted form has no column
//! pairs, so a zero reduced cost at the optimum really signals an alternative
//! optimal vertex.

use nalgebra::{DMatrix, DVector};

use crate::error::Error;

const PIVOT_TOL: f64 = 1e-11;
const RATIO_TIE: f64 = 1e-12;
const MAX_PIVOTS: usize = 50_000;

/// Reduced costs at or below this (scaled by the cost magnitude) count as zero.
pub(crate) const OPTIMALITY_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub(crate) enum Structural {
    Split,
    Shifted(Vec<f64>),
}

#[derive(Clone, Debug)]
pub(crate) struct Tableau {
    n: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    allowed: Vec<bool>,
    reduced: Vec<f64>,
    structural: Structural,
}

impl Tableau {
    /// Builds the tableau and runs phase 1. The result holds a feasible basis
    /// with every artificial column retired.
    pub(crate) fn feasible(
        a: &DMatrix<f64>,
        b: &DVector<f64>,
        c: &DMatrix<f64>,
        d: &DVector<f64>,
        structural: Structural,
    ) -> Result<Self, Error> {
        let n = a.ncols().max(c.ncols());
        let m = a.nrows();
        let p = c.nrows();
        let width_x = match structural {
            Structural::Split => 2 * n,
            Structural::Shifted(_) => n,
        };
        let shift = |row: &[f64], rhs: f64| -> f64 {
            match &structural {
                Structural::Split => rhs,
                Structural::Shifted(l) => rhs - row.iter().zip(l).map(|(r, li)| r * li).sum::<f64>(),
            }
        };

        let mut raw_rows: Vec<(Vec<f64>, f64, Option<f64>)> = Vec::with_capacity(m + p);
        for i in 0..m {
            let row: Vec<f64> = a.row(i).iter().copied().collect();
            let rhs = shift(&row, b[i]);
            raw_rows.push((row, rhs, Some(1.0)));
        }
        for i in 0..p {
            let row: Vec<f64> = c.row(i).iter().copied().collect();
            let rhs = shift(&row, d[i]);
            raw_rows.push((row, rhs, None));
        }

        let needs_artificial: Vec<bool> = raw_rows
            .iter()
            .map(|(_, rhs, slack)| slack.is_none() || *rhs < 0.0)
            .collect();
        let n_art = needs_artificial.iter().filter(|&&f| f).count();
        let slack_start = width_x;
        let art_start = width_x + m;
        let cols = width_x + m + n_art;
        let rows = m + p;
        let w = cols + 1;

        let mut data = vec![0.0; rows * w];
        let mut basis = vec![0; rows];
        let mut next_art = art_start;
        for (i, (row, rhs, slack)) in raw_rows.iter().enumerate() {
            let sign = if *rhs < 0.0 { -1.0 } else { 1.0 };
            let r = &mut data[i * w..(i + 1) * w];
            for j in 0..n {
                r[j] = sign * row[j];
                if let Structural::Split = structural {
                    r[n + j] = -sign * row[j];
                }
            }
            if slack.is_some() {
                r[slack_start + i] = sign;
            }
            r[cols] = sign * rhs;
            if needs_artificial[i] {
                r[next_art] = 1.0;
                basis[i] = next_art;
                next_art += 1;
            } else {
                basis[i] = slack_start + i;
            }
        }

        let mut is_basic = vec![false; cols];
        for &j in &basis {
            is_basic[j] = true;
        }
        let mut t = Tableau {
            n,
            rows,
            cols,
            data,
            basis,
            is_basic,
            allowed: vec![true; cols],
            reduced: vec![0.0; w],
            structural,
        };

        if n_art > 0 {
            let mut cost = vec![0.0; cols];
            for c in cost.iter_mut().skip(art_start) {
                *c = 1.0;
            }
            t.optimize(&cost)?;
            let scale = 1.0 + t.rhs_iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
            let infeasibility = -t.reduced[cols];
            if infeasibility > 1e-9 * scale {
                return Err(Error::InfeasibleSet);
            }
            t.retire_artificials(art_start);
        }
        Ok(t)
    }

    fn width(&self) -> usize {
        self.cols + 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width() + j]
    }

    fn rhs_iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |i| self.at(i, self.cols))
    }

    fn retire_artificials(&mut self, art_start: usize) {
        let mut i = 0;
        while i < self.rows {
            if self.basis[i] >= art_start {
                let replacement =
                    (0..art_start).find(|&j| !self.is_basic[j] && self.at(i, j).abs() > 1e-9);
                match replacement {
                    Some(j) => {
                        let w = self.width();
                        self.data[i * w + self.cols] = 0.0;
                        self.pivot(i, j);
                        i += 1;
                    }
                    None => self.remove_row(i),
                }
            } else {
                i += 1;
            }
        }
        for j in art_start..self.cols {
            self.allowed[j] = false;
        }
    }

    fn remove_row(&mut self, i: usize) {
        let w = self.width();
        self.is_basic[self.basis[i]] = false;
        self.data.drain(i * w..(i + 1) * w);
        self.basis.remove(i);
        self.rows -= 1;
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width();
        let inv = 1.0 / self.data[r * w + c];
        for v in &mut self.data[r * w..(r + 1) * w] {
            *v *= inv;
        }
        let (before, rest) = self.data.split_at_mut(r * w);
        let (pivot_row, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[c];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= f * p;
                }
                row[c] = 0.0;
            }
        }
        let f = self.reduced[c];
        if f != 0.0 {
            for (v, p) in self.reduced.iter_mut().zip(pivot_row.iter()) {
                *v -= f * p;
            }
            self.reduced[c] = 0.0;
        }
        self.is_basic[self.basis[r]] = false;
        self.is_basic[c] = true;
        self.basis[r] = c;
    }

    fn price(&mut self, cost: &[f64]) {
        let w = self.width();
        self.reduced.clear();
        self.reduced.extend_from_slice(cost);
        self.reduced.push(0.0);
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.data[i * w..(i + 1) * w];
                for (r, v) in self.reduced.iter_mut().zip(row) {
                    *r -= cb * v;
                }
            }
        }
    }

    fn tolerance(cost: &[f64]) -> f64 {
        OPTIMALITY_TOL * cost.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Minimizes `cost` (indexed by tableau column) over the allowed columns.
    pub(crate) fn optimize(&mut self, cost: &[f64]) -> Result<(), Error> {
        self.price(cost);
        let tol = Self::tolerance(cost);
        for _ in 0..MAX_PIVOTS {
            let entering = (0..self.cols)
                .find(|&j| self.allowed[j] && !self.is_basic[j] && self.reduced[j] < -tol);
            let Some(c) = entering else {
                return Ok(());
            };
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let coef = self.at(i, c);
                if coef > PIVOT_TOL {
                    let ratio = self.at(i, self.cols).max(0.0) / coef;
                    leaving = match leaving {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            let tie = RATIO_TIE * (1.0 + best.abs());
                            if ratio < best - tie || (ratio <= best + tie && self.basis[i] < self.basis[k]) {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leaving else {
                return Err(Error::UnboundedSet);
            };
            self.pivot(r, c);
        }
        Err(Error::NoConvergence("simplex"))
    }

    /// Freezes every nonbasic column whose reduced cost is strictly positive,
    /// so later objectives can only move within the current optimal face.
    /// Returns false when the face is a single vertex.
    pub(crate) fn restrict_to_optimal_face(&mut self, cost: &[f64]) -> bool {
        let tol = Self::tolerance(cost);
        let mut alternative = false;
        for j in 0..self.cols {
            if self.is_basic[j] || !self.allowed[j] {
                continue;
            }
            if self.reduced[j] > tol {
                self.allowed[j] = false;
            } else {
                alternative = true;
            }
        }
        alternative
    }

    /// Objective in x-space mapped to tableau columns.
    pub(crate) fn column_cost(&self, objective: &DVector<f64>) -> Vec<f64> {
        let mut cost = vec![0.0; self.cols];
        for j in 0..self.n {
            cost[j] = objective[j];
            if let Structural::Split = self.structural {
                cost[self.n + j] = -objective[j];
            }
        }
        cost
    }

    pub(crate) fn point(&self) -> DVector<f64> {
        let mut vals = vec![0.0; self.cols];
        for i in 0..self.rows {
            vals[self.basis[i]] = self.at(i, self.cols);
        }
        DVector::from_fn(self.n, |j, _| match &self.structural {
            Structural::Split => vals[j] - vals[self.n + j],
            Structural::Shifted(l) => l[j] + vals[j],
        })
    }
}

/// Minimizes the objectives in lexicographic order: each one is optimized over
/// the optimal face of the ones before it. Stops early once the face is a
/// single vertex.
pub(crate) fn lexicographic_minimize(
    template: &Tableau,
    objectives: &[DVector<f64>],
) -> Result<DVector<f64>, Error> {
    let mut t = template.clone();
    for (k, obj) in objectives.iter().enumerate() {
        let cost = t.column_cost(obj);
        t.optimize(&cost)?;
        if k + 1 < objectives.len() && !t.restrict_to_optimal_face(&cost) {
            break;
        }
    }
    Ok(t.point())
}
