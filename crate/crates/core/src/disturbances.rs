//! Time-varying disturbances built from sinusoids under an optional
//! exponential envelope, with analytic bounds on the signal and its
//! derivative.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::convex_set::Polytope;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Sin,
    Cos,
}

/// `a · shape(ω t + φ)` added to one component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub a: f64,
    pub omega: f64,
    #[serde(default)]
    pub phi: f64,
    pub shape: Shape,
    pub component: usize,
}

impl Term {
    pub fn sin(component: usize, a: f64, omega: f64, phi: f64) -> Self {
        Term { a, omega, phi, shape: Shape::Sin, component }
    }

    pub fn cos(component: usize, a: f64, omega: f64, phi: f64) -> Self {
        Term { a, omega, phi, shape: Shape::Cos, component }
    }

    fn value(&self, t: f64) -> f64 {
        let arg = self.omega * t + self.phi;
        self.a
            * match self.shape {
                Shape::Sin => arg.sin(),
                Shape::Cos => arg.cos(),
            }
    }
}

/// Multiplies the whole signal by `k e^{-λ t}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub k: f64,
    pub lambda: f64,
}

/// JSON form of a signal. The dimension comes from the scenario.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    #[serde(default)]
    pub terms: Vec<Term>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<Envelope>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeSignal {
    dim: usize,
    spec: SignalSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignalBounds {
    /// Componentwise bound on `|s(t)|` over `t >= 0`.
    pub sup: DVector<f64>,
    /// Componentwise bound on `|ṡ(t)|` over `t >= 0`.
    pub derivative_sup: DVector<f64>,
}

impl SignalBounds {
    /// Euclidean-norm bound: the norm of the componentwise bounds.
    pub fn sup_norm(&self) -> f64 {
        self.sup.norm()
    }

    pub fn derivative_sup_norm(&self) -> f64 {
        self.derivative_sup.norm()
    }
}

impl TimeSignal {
    pub fn new(dim: usize, spec: SignalSpec) -> Result<Self> {
        for term in &spec.terms {
            if term.component >= dim {
                return Err(Error::Validation(format!(
                    "signal term targets component {} of a {dim}-dimensional state",
                    term.component
                )));
            }
            if ![term.a, term.omega, term.phi].iter().all(|v| v.is_finite()) {
                return Err(Error::Validation("signal coefficients must be finite".into()));
            }
        }
        if let Some(env) = &spec.envelope {
            if !(env.lambda >= 0.0 && env.k.is_finite() && env.lambda.is_finite()) {
                return Err(Error::Validation("envelope needs finite k and lambda >= 0".into()));
            }
        }
        if let Some(c) = &spec.constant {
            if c.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: c.len() });
            }
        }
        Ok(TimeSignal { dim, spec })
    }

    pub fn zero(dim: usize) -> Self {
        TimeSignal { dim, spec: SignalSpec::default() }
    }

    pub fn from_terms(dim: usize, terms: Vec<Term>) -> Result<Self> {
        TimeSignal::new(dim, SignalSpec { terms, ..SignalSpec::default() })
    }

    /// The same signal multiplied by `k e^{-λ t}`.
    pub fn with_envelope(mut self, k: f64, lambda: f64) -> Result<Self> {
        self.spec.envelope = Some(Envelope { k, lambda });
        TimeSignal::new(self.dim, self.spec)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> &SignalSpec {
        &self.spec
    }

    /// True when the signal vanishes identically.
    pub fn is_zero(&self) -> bool {
        let scaled_out = self.spec.envelope.is_some_and(|e| e.k == 0.0);
        let constant_zero = self.spec.constant.as_ref().is_none_or(|c| c.iter().all(|&v| v == 0.0));
        scaled_out || (constant_zero && self.spec.terms.iter().all(|t| t.a == 0.0))
    }

    fn envelope_at(&self, t: f64) -> f64 {
        self.spec.envelope.map_or(1.0, |e| e.k * (-e.lambda * t).exp())
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        let mut out = match &self.spec.constant {
            Some(c) => DVector::from_column_slice(c),
            None => DVector::zeros(self.dim),
        };
        for term in &self.spec.terms {
            out[term.component] += term.value(t);
        }
        out * self.envelope_at(t)
    }

    /// Conservative analytic bounds: term amplitudes summed per component,
    /// derivative terms bounded by `|a| (ω + λ)`, all scaled by `|k|`.
    pub fn bounds(&self) -> SignalBounds {
        let (k, lambda) = self.spec.envelope.map_or((1.0, 0.0), |e| (e.k.abs(), e.lambda));
        let mut sup = DVector::zeros(self.dim);
        let mut der = DVector::zeros(self.dim);
        if let Some(c) = &self.spec.constant {
            for (i, ci) in c.iter().enumerate() {
                sup[i] += ci.abs();
                der[i] += ci.abs() * lambda;
            }
        }
        for term in &self.spec.terms {
            sup[term.component] += term.a.abs();
            der[term.component] += term.a.abs() * (term.omega.abs() + lambda);
        }
        SignalBounds { sup: sup * k, derivative_sup: der * k }
    }
}

/// Whether `x + step` stays in `k` (within `tol`). The integrators call this
/// on every step that carries a dynamics disturbance.
pub fn check_admissible_step(k: &Polytope, x: &DVector<f64>, step: &DVector<f64>, tol: f64) -> Result<bool> {
    k.contains(&(x + step), tol)
}
