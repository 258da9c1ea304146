#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use vi_brd::operators::AffineOperator;
use vi_brd::Polytope;

pub fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

pub fn congestion() -> AffineOperator {
    AffineOperator::from_rows(&[vec![2.0, 0.0, 0.5], vec![0.0, 1.5, 0.5], vec![0.5, 0.5, 2.0]], &[0.3, 0.5, 0.6])
        .unwrap()
}

/// A box or simplex cut by a few random halfspaces that keep a known
/// interior point strictly feasible.
pub fn random_polytope(rng: &mut ChaCha8Rng, n: usize) -> Polytope {
    let on_simplex = rng.gen_bool(0.5);
    let centre = if on_simplex {
        DVector::from_element(n, 1.0 / n as f64)
    } else {
        DVector::from_fn(n, |_, _| rng.gen_range(-0.3..0.3))
    };
    let cuts = rng.gen_range(0..=3);
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for _ in 0..cuts {
        let a = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        rhs.push(a.dot(&centre) + rng.gen_range(0.05..0.5));
        rows.push(a);
    }
    let extra_a = DMatrix::from_fn(cuts, n, |i, j| rows[i][j]);
    let extra_b = DVector::from_vec(rhs);
    if on_simplex {
        Polytope::simplex_with(extra_a, extra_b).unwrap()
    } else {
        let mut a = DMatrix::zeros(2 * n + cuts, n);
        let mut b = DVector::zeros(2 * n + cuts);
        for i in 0..n {
            a[(2 * i, i)] = 1.0;
            a[(2 * i + 1, i)] = -1.0;
            b[2 * i] = 1.0;
            b[2 * i + 1] = 1.0;
        }
        a.rows_mut(2 * n, cuts).copy_from(&extra_a);
        b.rows_mut(2 * n, cuts).copy_from(&extra_b);
        Polytope::new(a, b, DMatrix::zeros(0, n), DVector::zeros(0)).unwrap()
    }
}

/// `BᵀB + μI + (S − Sᵀ)` with `μ >= 0.2`, plus a random offset.
pub fn random_strongly_monotone(rng: &mut ChaCha8Rng, n: usize) -> AffineOperator {
    let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let s = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let mu = rng.gen_range(0.2..1.0);
    let m = b.transpose() * &b + DMatrix::identity(n, n) * mu + (&s - s.transpose());
    let q = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    AffineOperator::new(m, q).unwrap()
}

/// A random convex combination of the vertices.
pub fn random_point(rng: &mut ChaCha8Rng, k: &Polytope) -> DVector<f64> {
    let vs = k.enumerate_vertices().unwrap();
    let w: Vec<f64> = (0..vs.len()).map(|_| rng.gen_range(0.0..1.0f64).powi(3)).collect();
    let total: f64 = w.iter().sum();
    vs.iter().zip(&w).fold(DVector::zeros(k.dim()), |acc, (v, wi)| acc + v * (wi / total))
}
