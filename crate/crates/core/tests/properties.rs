mod common;

use common::{congestion, random_point, random_polytope, v};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vi_brd::analysis::{equilibrium_oracle, gap, h_function, iss_bound, iss_constants};
use vi_brd::disturbances::{TimeSignal, Term};
use vi_brd::dynamics::{brd_step, integrate_perturbed_br, SolverConfig};
use vi_brd::operators::{Operator, Perturbation};
use vi_brd::Polytope;

fn cost(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-5.0..5.0f64, n).prop_map(DVector::from_vec)
}

fn simplex_point(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(0.0..1.0f64, n).prop_map(|w| {
        let w = DVector::from_vec(w).map(|x| x + 1e-3);
        let s = w.sum();
        w / s
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lp_value_scales_and_shifts(seed in any::<u64>(), a in 0.1..10.0f64, shift in -3.0..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_polytope(&mut rng, 3);
        let c = DVector::from_fn(3, |i, _| ((seed >> (8 * i)) % 97) as f64 / 10.0 - 4.8);
        let base = k.lp_value(&c).unwrap();
        prop_assert!((k.lp_value(&(&c * a)).unwrap() - a * base).abs() <= 1e-9 * (1.0 + a * base.abs()));
        // On the simplex, adding a constant to every cost shifts the value.
        let s = Polytope::simplex(3).unwrap();
        let sv = s.lp_value(&c).unwrap();
        let shifted = c.add_scalar(shift);
        prop_assert!((s.lp_value(&shifted).unwrap() - (sv + shift)).abs() <= 1e-9);
        prop_assert_eq!(s.lp_minimize(&shifted).unwrap(), s.lp_minimize(&c).unwrap());
    }

    #[test]
    fn lp_answer_is_an_optimal_vertex(seed in any::<u64>(), c in cost(3)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_polytope(&mut rng, 3);
        let x = k.lp_minimize(&c).unwrap();
        let vs = k.enumerate_vertices().unwrap();
        prop_assert!(vs.iter().any(|v| (v - &x).amax() <= 1e-8));
        let best = vs.iter().map(|v| v.dot(&c)).fold(f64::INFINITY, f64::min);
        prop_assert!((x.dot(&c) - best).abs() <= 1e-9);
    }

    #[test]
    fn projection_is_idempotent_and_nonexpansive(seed in any::<u64>(), y in cost(3), z in cost(3)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_polytope(&mut rng, 3);
        let py = k.project(&y).unwrap();
        let pz = k.project(&z).unwrap();
        prop_assert!(k.contains(&py, 1e-9).unwrap());
        prop_assert!((k.project(&py).unwrap() - &py).norm() <= 1e-9);
        prop_assert!((&py - &pz).norm() <= (&y - &z).norm() + 1e-9);
    }

    #[test]
    fn gap_is_nonnegative_and_homogeneous(x in simplex_point(3), a in 0.1..10.0f64) {
        let k = Polytope::simplex(3).unwrap();
        let f = Operator::from(congestion());
        let g = gap(&x, &f, &k).unwrap();
        prop_assert!(g >= -1e-12);
        let scaled = vi_brd::operators::AffineOperator::new(congestion().matrix() * a, congestion().offset() * a).unwrap();
        prop_assert!((gap(&x, &Operator::from(scaled), &k).unwrap() - a * g).abs() <= 1e-10 * (1.0 + a));
    }

    #[test]
    fn euler_steps_stay_feasible(x in simplex_point(3), h in 0.001..1.0f64, d in cost(3)) {
        let k = Polytope::simplex_with(
            nalgebra::DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 1.0]),
            DVector::from_column_slice(&[0.9]),
        ).unwrap();
        let x = k.project(&x).unwrap();
        let f = Operator::from(congestion());
        let next = brd_step(&x, &f, &k, &d, &DVector::zeros(3), h).unwrap();
        prop_assert!(k.contains(&next, 1e-9).unwrap());
        if h == 1.0 {
            prop_assert_eq!(next, k.lp_minimize(&(f.evaluate(&x).unwrap() + d)).unwrap());
        }
    }

    #[test]
    fn signals_respect_their_bounds(a in prop::collection::vec(-1.0..1.0f64, 3), w in prop::collection::vec(0.05..2.0f64, 3), k in 0.5..5.0f64, lambda in 0.0..0.2f64) {
        let terms = (0..3).map(|i| if i % 2 == 0 { Term::sin(i, a[i], w[i], 0.3 * i as f64) } else { Term::cos(i, a[i], w[i], -1.0) }).collect();
        let s = TimeSignal::from_terms(3, terms).unwrap().with_envelope(k, lambda).unwrap();
        let b = s.bounds();
        let wmin = w.iter().copied().fold(f64::INFINITY, f64::min);
        let horizon = 10.0 * std::f64::consts::TAU / wmin;
        let dt = horizon / 4000.0;
        for i in 0..4000 {
            let t = i as f64 * dt;
            let x = s.eval(t);
            prop_assert!(x.amax() <= b.sup_norm() + 1e-12);
            let fd = (s.eval(t + 1e-6) - &x) / 1e-6;
            prop_assert!(fd.amax() <= b.derivative_sup_norm() + 1e-4);
        }
        if lambda > 1e-3 {
            let t = 20.0 / lambda;
            let total: f64 = a.iter().map(|x| x.abs()).sum();
            prop_assert!(s.eval(t).norm() <= k * (-20.0f64).exp() * total + 1e-15);
        }
    }

    #[test]
    fn iss_bound_decreases_without_disturbances(t in 0.0..50.0f64, dt in 0.01..5.0f64, v2 in 0.0..10.0f64) {
        let consts = iss_constants(&congestion(), &Polytope::simplex(3).unwrap()).unwrap();
        let a = iss_bound(&consts, 0.0, 0.0, 0.0, v2, t).unwrap();
        let b = iss_bound(&consts, 0.0, 0.0, 0.0, v2, t + dt).unwrap();
        prop_assert!(b <= a);
    }
}

#[test]
fn gap_is_nonnegative_on_random_points_and_zero_at_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for scenario in vi_brd::scenario::Scenario::builtins() {
        let inst = scenario.build().unwrap();
        let f = inst.operator.as_affine().unwrap();
        let op = Operator::from(f.clone());
        for _ in 0..1000 {
            let x = random_point(&mut rng, &inst.set);
            assert!(gap(&x, &op, &inst.set).unwrap() >= -1e-12);
        }
        let star = equilibrium_oracle(&f, &inst.set).unwrap();
        assert!(gap(&star, &op, &inst.set).unwrap().abs() <= 1e-9);
    }
}

#[test]
fn h_is_nonnegative_at_perturbed_equilibria() {
    let k = Polytope::simplex(3).unwrap();
    let f = Operator::from(congestion());
    for delta in [
        Perturbation::Affine { p: nalgebra::DMatrix::identity(3, 3) * 0.1, r: DVector::zeros(3) },
        Perturbation::Affine { p: nalgebra::DMatrix::identity(3, 3) * 0.5, r: v(&[0.2, -0.1, 0.0]) },
        Perturbation::EntropyGradient { eta: 0.05 },
        Perturbation::EntropyGradient { eta: 0.3 },
    ] {
        let rec = integrate_perturbed_br(&v(&[0.8, 0.1, 0.1]), &congestion(), &delta, &k, &SolverConfig::default().with_horizon(60.0)).unwrap();
        let x = rec.final_state().unwrap();
        assert!(h_function(x, &f, &delta, &k).unwrap() >= -1e-9, "{delta:?}");
    }
}
