//! Cost maps `F`: affine operators, operators induced by congestion networks,
//! and state-dependent perturbations `F + δ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::convex_set::{matrix_from_rows, matrix_to_rows, Polytope};
use crate::error::{check_dim, Error, Result};

/// Coordinates below this are clamped before taking logarithms.
pub const ENTROPY_FLOOR: f64 = 1e-12;
/// Threshold separating monotone from strongly monotone / indefinite.
pub const MONOTONICITY_TOL: f64 = 1e-9;

/// `F(x) = Mx + q`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineOperator {
    m: DMatrix<f64>,
    q: DVector<f64>,
}

impl AffineOperator {
    pub fn new(m: DMatrix<f64>, q: DVector<f64>) -> Result<Self> {
        check_dim(m.nrows(), m.ncols())?;
        check_dim(m.nrows(), q.len())?;
        Ok(AffineOperator { m, q })
    }

    pub fn from_rows(m: &[Vec<f64>], q: &[f64]) -> Result<Self> {
        AffineOperator::new(matrix_from_rows(m, q.len())?, DVector::from_column_slice(q))
    }

    pub fn zero(n: usize) -> Self {
        AffineOperator { m: DMatrix::zeros(n, n), q: DVector::zeros(n) }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(&self.m * x + &self.q)
    }
}

/// A link with delay `aᵀx + b`, where `x` is the vector of route flows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: Vec<f64>,
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CongestionNetwork {
    pub links: Vec<Link>,
    /// Link indices traversed by each route.
    pub routes: Vec<Vec<usize>>,
}

impl CongestionNetwork {
    /// Route costs as an affine map: row `i` sums the delays of route `i`'s links.
    pub fn build_operator(&self) -> Result<AffineOperator> {
        let n = self.routes.len();
        let mut m = DMatrix::zeros(n, n);
        let mut q = DVector::zeros(n);
        for (i, route) in self.routes.iter().enumerate() {
            for &l in route {
                let link = self.links.get(l).ok_or(Error::BadRouteIndex { route: i, link: l })?;
                check_dim(n, link.a.len())?;
                for (j, aj) in link.a.iter().enumerate() {
                    m[(i, j)] += aj;
                }
                q[i] += link.b;
            }
        }
        AffineOperator::new(m, q)
    }
}

pub fn build_congestion_operator(net: &CongestionNetwork) -> Result<AffineOperator> {
    net.build_operator()
}

/// `δᵢ = η (ln max(xᵢ, floor) + 1)`, the gradient of `η Σ xᵢ ln xᵢ`.
pub fn entropy_gradient(x: &DVector<f64>, eta: f64) -> DVector<f64> {
    x.map(|xi| eta * (xi.max(ENTROPY_FLOOR).ln() + 1.0))
}

/// State-dependent cost perturbation added to the base operator.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Perturbation {
    #[default]
    None,
    EntropyGradient { eta: f64 },
    Affine { p: DMatrix<f64>, r: DVector<f64> },
}

impl Perturbation {
    pub fn is_none(&self) -> bool {
        matches!(self, Perturbation::None)
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Perturbation::None => Ok(DVector::zeros(x.len())),
            Perturbation::EntropyGradient { eta } => Ok(entropy_gradient(x, *eta)),
            Perturbation::Affine { p, r } => {
                check_dim(p.ncols(), x.len())?;
                Ok(p * x + r)
            }
        }
    }

    /// Entropy evaluations at or below the floor are flagged as clamped.
    pub fn is_clamped(&self, x: &DVector<f64>) -> bool {
        match self {
            Perturbation::EntropyGradient { eta } if *eta != 0.0 => x.iter().any(|&xi| xi <= ENTROPY_FLOOR),
            _ => false,
        }
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = x.len();
        match self {
            Perturbation::None => Ok(DMatrix::zeros(n, n)),
            Perturbation::EntropyGradient { eta } => {
                if *eta != 0.0 {
                    if let Some(i) = x.iter().position(|&xi| xi <= ENTROPY_FLOOR) {
                        return Err(Error::DomainError { component: i });
                    }
                }
                Ok(DMatrix::from_diagonal(&x.map(|xi| eta / xi)))
            }
            Perturbation::Affine { p, .. } => Ok(p.clone()),
        }
    }

    /// Analytic lower bound on the tangent-space monotonicity modulus of `δ`
    /// over `k`. For the entropy gradient the Jacobian `diag(η/xᵢ)` dominates
    /// `η / max xᵢ` times the identity.
    pub fn monotonicity_modulus(&self, k: &Polytope) -> f64 {
        match self {
            Perturbation::None => 0.0,
            Perturbation::EntropyGradient { eta } => {
                let top = k.coordinate_bounds().map(|(_, hi)| hi).fold(f64::NEG_INFINITY, f64::max);
                if top > 0.0 {
                    eta / top
                } else {
                    0.0
                }
            }
            Perturbation::Affine { p, .. } => tangent_modulus(p, &tangent_basis(k)),
        }
    }
}

/// Base affine operator plus an optional state-dependent perturbation.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    base: AffineOperator,
    perturbation: Perturbation,
}

impl From<AffineOperator> for Operator {
    fn from(base: AffineOperator) -> Self {
        Operator { base, perturbation: Perturbation::None }
    }
}

impl Operator {
    pub fn new(base: AffineOperator, perturbation: Perturbation) -> Result<Self> {
        if let Perturbation::Affine { p, r } = &perturbation {
            check_dim(base.dim(), p.nrows())?;
            check_dim(base.dim(), p.ncols())?;
            check_dim(base.dim(), r.len())?;
        }
        Ok(Operator { base, perturbation })
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn base(&self) -> &AffineOperator {
        &self.base
    }

    pub fn perturbation(&self) -> &Perturbation {
        &self.perturbation
    }

    /// The same operator with the perturbation dropped.
    pub fn unperturbed(&self) -> Operator {
        Operator::from(self.base.clone())
    }

    /// `F(x) + δ(x)`. Entropy terms are clamped at the floor; see
    /// [`Operator::is_clamped`].
    pub fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut pi = self.base.evaluate(x)?;
        if !self.perturbation.is_none() {
            pi += self.perturbation.evaluate(x)?;
        }
        Ok(pi)
    }

    pub fn is_clamped(&self, x: &DVector<f64>) -> bool {
        self.perturbation.is_clamped(x)
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut j = self.base.m.clone();
        if !self.perturbation.is_none() {
            j += self.perturbation.jacobian(x)?;
        }
        Ok(j)
    }

    /// Constant Jacobian when the operator is affine overall.
    pub fn affine_matrix(&self) -> Option<DMatrix<f64>> {
        match &self.perturbation {
            Perturbation::None => Some(self.base.m.clone()),
            Perturbation::Affine { p, .. } => Some(&self.base.m + p),
            Perturbation::EntropyGradient { .. } => None,
        }
    }

    /// The whole operator as one affine map, when it is affine.
    pub fn as_affine(&self) -> Option<AffineOperator> {
        match &self.perturbation {
            Perturbation::None => Some(self.base.clone()),
            Perturbation::Affine { p, r } => Some(AffineOperator { m: &self.base.m + p, q: &self.base.q + r }),
            Perturbation::EntropyGradient { .. } => None,
        }
    }
}

/// Orthonormal basis (as columns) of the null space of the equality rows.
pub fn tangent_basis(k: &Polytope) -> DMatrix<f64> {
    let (c, _) = k.equalities();
    let n = k.dim();
    if c.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let gram = c.transpose() * c;
    let eig = gram.symmetric_eigen();
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

/// Smallest eigenvalue of `Zᵀ ((M + Mᵀ)/2) Z`; `+inf` for a zero-dimensional tangent space.
pub fn tangent_modulus(m: &DMatrix<f64>, z: &DMatrix<f64>) -> f64 {
    if z.ncols() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    let reduced = z.transpose() * sym * z;
    reduced.symmetric_eigen().eigenvalues.min()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "class", content = "modulus", rename_all = "snake_case")]
pub enum Monotonicity {
    StronglyMonotone(f64),
    Monotone,
    Indefinite(f64),
}

impl Monotonicity {
    pub fn classify(c: f64) -> Self {
        if c > MONOTONICITY_TOL {
            Monotonicity::StronglyMonotone(c)
        } else if c >= -MONOTONICITY_TOL {
            Monotonicity::Monotone
        } else {
            Monotonicity::Indefinite(c)
        }
    }

    pub fn strong_modulus(&self) -> Option<f64> {
        match self {
            Monotonicity::StronglyMonotone(c) => Some(*c),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub class: Monotonicity,
    /// Smallest tangent-space eigenvalue found.
    pub modulus: f64,
    /// True when the modulus comes from sampling the Jacobian rather than
    /// from a constant matrix.
    pub empirical: bool,
}

/// Classifies `op` on `k` through the tangent-space symmetric part of its
/// Jacobian. Affine operators are exact; entropy-perturbed ones are sampled
/// at interior points and flagged empirical.
pub fn check_monotonicity(op: &Operator, k: &Polytope) -> Result<MonotonicityReport> {
    check_dim(k.dim(), op.dim())?;
    let z = tangent_basis(k);
    if let Some(m) = op.affine_matrix() {
        let c = tangent_modulus(&m, &z);
        return Ok(MonotonicityReport { class: Monotonicity::classify(c), modulus: c, empirical: false });
    }

    let n = k.dim();
    let centre = k.witness().clone();
    let mut samples = vec![centre.clone()];
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let dir = DVector::from_fn(n, |j, _| if i == j { sign } else { 0.0 });
            let v = k.lp_minimize(&dir)?;
            for w in [0.5, 0.9] {
                samples.push(&v * w + &centre * (1.0 - w));
            }
        }
    }
    let mut c = f64::INFINITY;
    for x in samples.iter().filter(|x| !op.is_clamped(x)) {
        c = c.min(tangent_modulus(&op.jacobian(x)?, &z));
    }
    Ok(MonotonicityReport { class: Monotonicity::classify(c), modulus: c, empirical: true })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineSpec {
    #[serde(rename = "M")]
    pub m: Vec<Vec<f64>>,
    pub q: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationSpec {
    Entropy(f64),
    Affine {
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
        r: Vec<f64>,
    },
}

impl PerturbationSpec {
    pub fn build(&self, n: usize) -> Result<Perturbation> {
        match self {
            PerturbationSpec::Entropy(eta) if *eta >= 0.0 => Ok(Perturbation::EntropyGradient { eta: *eta }),
            PerturbationSpec::Entropy(eta) => Err(Error::Validation(format!("entropy weight {eta} is negative"))),
            PerturbationSpec::Affine { p, r } => {
                check_dim(n, r.len())?;
                Ok(Perturbation::Affine { p: matrix_from_rows(p, n)?, r: DVector::from_column_slice(r) })
            }
        }
    }

    pub fn from_perturbation(p: &Perturbation) -> Option<Self> {
        match p {
            Perturbation::None => None,
            Perturbation::EntropyGradient { eta } => Some(PerturbationSpec::Entropy(*eta)),
            Perturbation::Affine { p, r } => {
                Some(PerturbationSpec::Affine { p: matrix_to_rows(p), r: r.iter().copied().collect() })
            }
        }
    }
}

/// JSON form: exactly one of `affine` or `congestion`, plus an optional
/// `perturbation`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affine: Option<AffineSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub congestion: Option<CongestionNetwork>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationSpec>,
}

impl OperatorSpec {
    pub fn build(&self) -> Result<Operator> {
        let base = match (&self.affine, &self.congestion) {
            (Some(a), None) => AffineOperator::from_rows(&a.m, &a.q)?,
            (None, Some(net)) => net.build_operator()?,
            _ => return Err(Error::Validation("operator needs exactly one of `affine` or `congestion`".into())),
        };
        let perturbation = match &self.perturbation {
            Some(p) => p.build(base.dim())?,
            None => Perturbation::None,
        };
        Operator::new(base, perturbation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn traffic_network() -> CongestionNetwork {
        let link = |a: [f64; 3]| Link { a: a.to_vec(), b: 0.0 };
        CongestionNetwork {
            links: vec![
                link([1.0, 3.0, 0.0]),
                link([1.0, 1.0, 0.0]),
                link([0.0, 1.0, 3.0]),
                link([0.0, 1.0, 1.0]),
                link([3.0, 0.0, 1.0]),
                link([1.0, 0.0, 1.0]),
            ],
            routes: vec![vec![0, 5], vec![1, 2], vec![4, 3]],
        }
    }

    fn congestion() -> AffineOperator {
        AffineOperator::from_rows(
            &[vec![2.0, 0.0, 0.5], vec![0.0, 1.5, 0.5], vec![0.5, 0.5, 2.0]],
            &[0.3, 0.5, 0.6],
        )
        .unwrap()
    }

    #[test]
    fn traffic_network_matches_route_costs() {
        let f = traffic_network().build_operator().unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[2.0, 3.0, 1.0, 1.0, 2.0, 3.0, 3.0, 1.0, 2.0]);
        assert_eq!(f.matrix(), &expected);
        assert_eq!(f.offset(), &DVector::zeros(3));
        assert_abs_diff_eq!(f.evaluate(&v(&[1.0 / 3.0; 3])).unwrap(), v(&[2.0, 2.0, 2.0]), epsilon = 1e-14);
    }

    #[test]
    fn small_networks() {
        let single = CongestionNetwork { links: vec![Link { a: vec![1.0], b: 0.0 }], routes: vec![vec![0]] };
        let f = single.build_operator().unwrap();
        assert_eq!(f.matrix(), &DMatrix::from_element(1, 1, 1.0));
        assert_eq!(f.offset(), &v(&[0.0]));

        let parallel = CongestionNetwork {
            links: vec![Link { a: vec![1.0, 0.0], b: 1.0 }, Link { a: vec![0.0, 1.0], b: 1.0 }],
            routes: vec![vec![0], vec![1]],
        };
        let f = parallel.build_operator().unwrap();
        assert_eq!(f.matrix(), &DMatrix::identity(2, 2));
        assert_eq!(f.offset(), &v(&[1.0, 1.0]));

        let bad = CongestionNetwork { links: vec![], routes: vec![vec![3]] };
        assert!(matches!(bad.build_operator(), Err(Error::BadRouteIndex { route: 0, link: 3 })));
    }

    #[test]
    fn congestion_operator_values() {
        let f = congestion();
        assert_abs_diff_eq!(f.evaluate(&v(&[1.0, 0.0, 0.0])).unwrap(), v(&[2.3, 0.5, 1.1]), epsilon = 1e-14);
        let zero = AffineOperator::zero(3);
        assert_eq!(zero.evaluate(&v(&[0.2, 0.1, 0.7])).unwrap(), DVector::zeros(3));
    }

    #[test]
    fn monotonicity_classes() {
        let k = Polytope::simplex(3).unwrap();
        let traffic = Operator::from(traffic_network().build_operator().unwrap());
        let r = check_monotonicity(&traffic, &k).unwrap();
        assert_eq!(r.class, Monotonicity::Monotone);
        assert!(r.modulus.abs() < 1e-12);

        // Oracle: closed-form smallest eigenvalue of the 2x2 projection onto
        // the hand-built basis (1,-1,0)/√2, (1,1,-2)/√6 of {Σz = 0}.
        let r = check_monotonicity(&Operator::from(congestion()), &k).unwrap();
        let z = DMatrix::from_row_slice(
            3,
            2,
            &[
                1.0 / 2f64.sqrt(),
                1.0 / 6f64.sqrt(),
                -1.0 / 2f64.sqrt(),
                1.0 / 6f64.sqrt(),
                0.0,
                -2.0 / 6f64.sqrt(),
            ],
        );
        let reduced = z.transpose() * congestion().matrix() * &z;
        let (p, q, s) = (reduced[(0, 0)], reduced[(0, 1)], reduced[(1, 1)]);
        let expected = 0.5 * (p + s) - (0.25 * (p - s) * (p - s) + q * q).sqrt();
        assert_abs_diff_eq!(r.modulus, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(r.modulus, 1.2113248654, epsilon = 1e-9);
        assert!(matches!(r.class, Monotonicity::StronglyMonotone(_)));

        let full = Polytope::from_box(&[0.0; 3], &[1.0; 3]).unwrap();
        let id = Operator::from(AffineOperator::new(DMatrix::identity(3, 3), DVector::zeros(3)).unwrap());
        let r = check_monotonicity(&id, &full).unwrap();
        assert_abs_diff_eq!(r.modulus, 1.0, epsilon = 1e-12);

        let neg = Operator::from(AffineOperator::new(-DMatrix::identity(3, 3), DVector::zeros(3)).unwrap());
        assert!(matches!(check_monotonicity(&neg, &full).unwrap().class, Monotonicity::Indefinite(_)));
    }

    #[test]
    fn traffic_matrix_is_not_symmetric_but_psd() {
        let m = traffic_network().build_operator().unwrap().matrix().clone();
        assert_ne!(m, m.transpose());
        let eig = (&m + m.transpose()).symmetric_eigen();
        assert!(eig.eigenvalues.min() >= -1e-9);
    }

    #[test]
    fn entropy_gradient_values() {
        let d = entropy_gradient(&v(&[1.0 / 3.0; 3]), 1.0);
        for di in d.iter() {
            assert_abs_diff_eq!(*di, (1.0f64 / 3.0).ln() + 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(*di, -0.0986, epsilon = 1e-4);
        }
        assert_eq!(entropy_gradient(&v(&[0.2, 0.0, 0.8]), 0.0), DVector::zeros(3));
        let clamped = entropy_gradient(&v(&[0.0, 0.5, 0.5]), 1.0);
        assert_abs_diff_eq!(clamped[0], ENTROPY_FLOOR.ln() + 1.0, epsilon = 1e-12);
    }

    #[test]
    fn entropy_jacobian_at_boundary_is_a_domain_error() {
        let op = Operator::new(congestion(), Perturbation::EntropyGradient { eta: 0.1 }).unwrap();
        let x = v(&[0.0, 0.5, 0.5]);
        assert!(op.is_clamped(&x));
        assert!(op.evaluate(&x).is_ok());
        assert!(matches!(op.jacobian(&x), Err(Error::DomainError { component: 0 })));
        let j = op.jacobian(&v(&[0.5, 0.25, 0.25])).unwrap();
        assert_abs_diff_eq!(j[(1, 1)], 1.5 + 0.4, epsilon = 1e-14);
    }

    #[test]
    fn entropy_perturbed_check_is_empirical() {
        let k = Polytope::simplex(3).unwrap();
        let op = Operator::new(congestion(), Perturbation::EntropyGradient { eta: 0.05 }).unwrap();
        let r = check_monotonicity(&op, &k).unwrap();
        assert!(r.empirical);
        assert!(r.modulus > 1.21);
        assert_abs_diff_eq!(Perturbation::EntropyGradient { eta: 0.05 }.monotonicity_modulus(&k), 0.05);
    }

    #[test]
    fn operator_json() {
        let spec: OperatorSpec = serde_json::from_str(
            r#"{"affine": {"M": [[2, 0], [0, 1]], "q": [0.1, 0.2]}, "perturbation": {"entropy": 0.05}}"#,
        )
        .unwrap();
        let op = spec.build().unwrap();
        assert_eq!(op.perturbation(), &Perturbation::EntropyGradient { eta: 0.05 });

        let spec: OperatorSpec = serde_json::from_str(
            r#"{"congestion": {"links": [{"a": [1, 0], "b": 1}, {"a": [0, 1], "b": 1}], "routes": [[0], [1]]},
                "perturbation": {"affine": {"P": [[0.1, 0], [0, 0.1]], "r": [0, 0]}}}"#,
        )
        .unwrap();
        let op = spec.build().unwrap();
        assert_abs_diff_eq!(op.affine_matrix().unwrap(), DMatrix::identity(2, 2) * 1.1, epsilon = 1e-15);

        let both: OperatorSpec = serde_json::from_str(
            r#"{"affine": {"M": [[1]], "q": [0]}, "congestion": {"links": [], "routes": []}}"#,
        )
        .unwrap();
        assert!(both.build().is_err());
    }
}
