//! Compact convex polytopes `{x : Ax <= b, Cx = d}` and the geometry the
//! dynamics need: the linear-minimization (best-response) oracle, membership,
//! Euclidean projection, vertex enumeration and the diameter.
//!
//! A [`Polytope`] is validated when it is built: it must be nonempty and
//! bounded. Boundedness is checked with one LP per coordinate direction, and
//! the resulting coordinate bounds are kept; the LP oracle works on variables
//! shifted by the lower bounds.

mod projection;
pub(crate) mod simplex;
mod vertices;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use simplex::{lexicographic_minimize, Structural, Tableau};

pub use projection::Projection;

/// Feasibility tolerance used by the oracle outputs.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Distance below which two vertices are merged.
pub const VERTEX_MERGE_TOL: f64 = 1e-9;
/// Vertex enumeration is exponential in the dimension; refuse beyond this.
pub const MAX_ENUMERATION_DIM: usize = 8;

#[derive(Clone, Debug)]
pub struct Polytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: DMatrix<f64>,
    d: DVector<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    witness: DVector<f64>,
    template: Tableau,
}

impl Polytope {
    /// Builds `{x : Ax <= b, Cx = d}`, rejecting empty or unbounded sets.
    ///
    /// Pass `0 x n` matrices (and empty vectors) for absent constraint groups.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: DMatrix<f64>, d: DVector<f64>) -> Result<Self> {
        let n = a.ncols();
        if n == 0 {
            return Err(Error::Validation("polytope must have dimension >= 1".into()));
        }
        check_dim(n, c.ncols())?;
        check_dim(a.nrows(), b.len())?;
        check_dim(c.nrows(), d.len())?;
        if a.iter().chain(b.iter()).chain(c.iter()).chain(d.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("polytope data must be finite".into()));
        }

        let free = Tableau::feasible(&a, &b, &c, &d, Structural::Split)?;
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut witness = DVector::zeros(n);
        for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut t = free.clone();
                let dir = DVector::from_fn(n, |j, _| if j == i { sign } else { 0.0 });
                t.optimize(&t.column_cost(&dir))?;
                let y = t.point();
                if sign > 0.0 {
                    lower[i] = y[i];
                } else {
                    upper[i] = y[i];
                }
                witness += y;
            }
        }
        witness /= (2 * n) as f64;

        let template = Tableau::feasible(&a, &b, &c, &d, Structural::Shifted(lower.clone()))?;
        Ok(Polytope { a, b, c, d, lower, upper, witness, template })
    }

    /// The probability simplex `{x >= 0, sum x = 1}` in `n` dimensions.
    pub fn simplex(n: usize) -> Result<Self> {
        Polytope::new(
            -DMatrix::identity(n, n),
            DVector::zeros(n),
            DMatrix::from_element(1, n, 1.0),
            DVector::from_element(1, 1.0),
        )
    }

    /// The box `lo <= x <= hi`.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        let n = lo.len();
        let a = DMatrix::from_fn(2 * n, n, |i, j| match (i < n, i % n == j) {
            (true, true) => 1.0,
            (false, true) => -1.0,
            _ => 0.0,
        });
        let b = DVector::from_fn(2 * n, |i, _| if i < n { hi[i] } else { -lo[i - n] });
        Polytope::new(a, b, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    /// The simplex with extra inequality rows appended.
    pub fn simplex_with(extra_a: DMatrix<f64>, extra_b: DVector<f64>) -> Result<Self> {
        let n = extra_a.ncols();
        check_dim(extra_a.nrows(), extra_b.len())?;
        let m = extra_a.nrows();
        let mut a = DMatrix::zeros(n + m, n);
        a.view_mut((0, 0), (n, n)).copy_from(&(-DMatrix::<f64>::identity(n, n)));
        a.view_mut((n, 0), (m, n)).copy_from(&extra_a);
        let mut b = DVector::zeros(n + m);
        b.rows_mut(n, m).copy_from(&extra_b);
        Polytope::new(a, b, DMatrix::from_element(1, n, 1.0), DVector::from_element(1, 1.0))
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn inequalities(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.a, &self.b)
    }

    pub fn equalities(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.c, &self.d)
    }

    /// Per-coordinate `(min, max)` over the set, computed at construction.
    pub fn coordinate_bounds(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.lower.iter().copied().zip(self.upper.iter().copied())
    }

    /// A feasible point (the centroid of the coordinate-extreme vertices).
    pub fn witness(&self) -> &DVector<f64> {
        &self.witness
    }

    /// `Ax <= b + tol` and `|Cx - d| <= tol`, componentwise.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        check_dim(self.dim(), x.len())?;
        Ok(self.max_violation(x) <= tol)
    }

    /// Largest constraint violation at `x` (zero when feasible).
    pub(crate) fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let ineq = (&self.a * x - &self.b).iter().fold(0.0_f64, |acc, &v| acc.max(v));
        let eq = (&self.c * x - &self.d).iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()));
        ineq.max(eq)
    }

    /// A vertex minimizing `costᵀy` over the set.
    ///
    /// When several vertices are optimal the lexicographically greatest one
    /// is returned (maximize `y₁`, then `y₂`, ... over the optimal face), so on
    /// the simplex ties resolve to the lowest-index pure strategy.
    pub fn lp_minimize(&self, cost: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), cost.len())?;
        if cost.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("cost vector must be finite".into()));
        }
        let n = self.dim();
        let mut objectives = Vec::with_capacity(n + 1);
        objectives.push(cost.clone());
        objectives.extend((0..n).map(|i| DVector::from_fn(n, |j, _| if i == j { -1.0 } else { 0.0 })));
        lexicographic_minimize(&self.template, &objectives)
    }

    /// `min over the set of costᵀy`.
    pub fn lp_value(&self, cost: &DVector<f64>) -> Result<f64> {
        Ok(self.lp_minimize(cost)?.dot(cost))
    }

    /// Minimizes `primary`, then maximizes `secondary` over the optimal face.
    pub fn lp_maximize_on_face(
        &self,
        primary: &DVector<f64>,
        secondary: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        check_dim(self.dim(), primary.len())?;
        check_dim(self.dim(), secondary.len())?;
        lexicographic_minimize(&self.template, &[primary.clone(), -secondary])
    }

    /// Euclidean projection of `z` onto the set.
    pub fn project(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.project_with_certificate(z)?.point)
    }

    /// Projection together with its multipliers and KKT residual.
    pub fn project_with_certificate(&self, z: &DVector<f64>) -> Result<Projection> {
        check_dim(self.dim(), z.len())?;
        projection::project(self, z)
    }

    /// Every vertex, sorted lexicographically. Only for `dim <= 8`.
    pub fn enumerate_vertices(&self) -> Result<Vec<DVector<f64>>> {
        vertices::enumerate(self)
    }

    /// Largest distance between two points of the set.
    pub fn diameter(&self) -> Result<f64> {
        let vs = self.enumerate_vertices()?;
        let mut best = 0.0_f64;
        for (i, u) in vs.iter().enumerate() {
            for v in &vs[i + 1..] {
                best = best.max((u - v).norm());
            }
        }
        Ok(best)
    }
}

/// JSON description of a polytope: either `{"simplex": n}` or explicit
/// constraint data `{"A": .., "b": .., "C": .., "d": ..}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolytopeSpec {
    Simplex {
        simplex: usize,
    },
    Explicit {
        #[serde(rename = "A", default)]
        a: Vec<Vec<f64>>,
        #[serde(default)]
        b: Vec<f64>,
        #[serde(rename = "C", default)]
        c: Vec<Vec<f64>>,
        #[serde(default)]
        d: Vec<f64>,
    },
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>> {
    for row in rows {
        check_dim(ncols, row.len())?;
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl PolytopeSpec {
    pub fn build(&self) -> Result<Polytope> {
        match self {
            PolytopeSpec::Simplex { simplex } => Polytope::simplex(*simplex),
            PolytopeSpec::Explicit { a, b, c, d } => {
                let n = a.first().or(c.first()).map(Vec::len).ok_or_else(|| {
                    Error::Validation("polytope needs at least one constraint row".into())
                })?;
                Polytope::new(
                    matrix_from_rows(a, n)?,
                    DVector::from_column_slice(b),
                    matrix_from_rows(c, n)?,
                    DVector::from_column_slice(d),
                )
            }
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            PolytopeSpec::Simplex { simplex } => Some(*simplex),
            PolytopeSpec::Explicit { a, c, .. } => a.first().or(c.first()).map(Vec::len),
        }
    }

    pub fn from_polytope(k: &Polytope) -> Self {
        PolytopeSpec::Explicit {
            a: matrix_to_rows(&k.a),
            b: k.b.iter().copied().collect(),
            c: matrix_to_rows(&k.c),
            d: k.d.iter().copied().collect(),
        }
    }
}
