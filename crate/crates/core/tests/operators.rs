use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use itreg::{
    estimate_eta, pairing, EllipticOp, Error, ForwardOp, GridFn, GridSpace, IntegralOp, Variance,
};

fn random_fn(space: &Arc<GridSpace<f64>>, variance: Variance, rng: &mut ChaCha8Rng) -> GridFn<f64> {
    let v = (0..space.len())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    GridFn::new(space.clone(), v, variance).unwrap()
}

fn inclusions(space: &Arc<GridSpace<f64>>) -> GridFn<f64> {
    GridFn::from_fn(space.clone(), Variance::Primal, |c: &[f64]| {
        let (x, y) = (c[0], c[1]);
        let disc = (x - 0.3).powi(2) + (y - 0.3).powi(2) <= 0.04;
        let square = (x - 0.7).abs() <= 0.15 && (y - 0.7).abs() <= 0.15;
        if disc || square {
            1.0
        } else {
            0.0
        }
    })
    .unwrap()
}

/// Operator whose exact state for `c_dagger` is `u = x + y`.
fn elliptic(n: usize) -> (EllipticOp<f64>, GridFn<f64>) {
    let space = GridSpace::unit_square(n, n, 2.0).unwrap();
    let c = inclusions(&space);
    let u = GridFn::from_fn(space.clone(), Variance::Primal, |p: &[f64]| p[0] + p[1]).unwrap();
    let f = c.hadamard(&u).unwrap();
    (EllipticOp::new(space, &f, &u).unwrap(), c)
}

fn adjoint_error(op: &dyn ForwardOp<f64>, x: &GridFn<f64>, pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let h = random_fn(op.domain(), Variance::Primal, &mut rng);
        let w = random_fn(op.range(), Variance::Dual, &mut rng);
        let dh = op.deriv(x, &h).unwrap();
        let lhs = pairing(&w, &dh).unwrap();
        let rhs = pairing(&op.adjoint(x, &w).unwrap(), &h).unwrap();
        worst = worst.max((lhs - rhs).abs() / (dh.norm() * w.norm()));
    }
    worst
}

#[test]
fn integral_operator_maps_constants_to_a_parabola() {
    // int_0^1 40 G(s, t) dt = 20 s (1 - s); the trapezoid rule is exact on
    // the piecewise linear integrand because the kink sits on a node
    let op = IntegralOp::new(64, 2.0).unwrap();
    let one = GridFn::from_fn(op.domain().clone(), Variance::Primal, |_: &[f64]| 1.0).unwrap();
    let y = op.apply(&one).unwrap();
    for (k, &v) in y.values().iter().enumerate() {
        let s = k as f64 / 64.0;
        assert!((v - 20.0 * s * (1.0 - s)).abs() < 1e-12, "node {k}: {v}");
    }
}

#[test]
fn integral_operator_is_linear_and_self_adjoint() {
    let op = IntegralOp::new(400, 2.0).unwrap();
    assert!(op.is_linear());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_fn(op.domain(), Variance::Primal, &mut rng);
    let h = random_fn(op.domain(), Variance::Primal, &mut rng);
    let a = op.apply(&h).unwrap();
    let b = op.deriv(&x, &h).unwrap();
    assert_eq!(a.values(), b.values());
    assert!(adjoint_error(&op, &x, 20, 2) <= 1e-8);
    for i in [0, 17, 200, 399] {
        for j in [3, 200, 400] {
            assert_eq!(op.kernel(i, j), op.kernel(j, i));
        }
    }
}

#[test]
fn integral_adjoint_in_lp_spaces() {
    for p in [1.5, 3.0] {
        let op = IntegralOp::new(100, p).unwrap();
        let x = GridFn::zeros(op.domain().clone(), Variance::Primal);
        assert!(adjoint_error(&op, &x, 20, 3) <= 1e-8);
    }
}

#[test]
fn elliptic_state_reproduces_linear_data() {
    let (op, c) = elliptic(40);
    let u = op.apply(&c).unwrap();
    for (k, &v) in u.values().iter().enumerate() {
        let p = op.domain().coords(k);
        assert!((v - p[0] - p[1]).abs() < 1e-12);
    }
}

#[test]
fn elliptic_state_matches_dense_solve() {
    let n = 10;
    let (op, _) = elliptic(n);
    let space = op.domain().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let c = GridFn::primal(
        space.clone(),
        (0..space.len())
            .map(|_| rng.random_range(0.0..2.0))
            .collect(),
    )
    .unwrap();
    let u = op.apply(&c).unwrap();
    let source = inclusions(&space);

    // assemble -Δu + c u on all interior nodes with the boundary values of x + y
    let h = 1.0 / n as f64;
    let m = n - 1;
    let id = |i: usize, j: usize| (j - 1) * m + (i - 1);
    let g = |i: usize, j: usize| (i + j) as f64 * h;
    let mut a = DMatrix::<f64>::zeros(m * m, m * m);
    let mut b = DVector::<f64>::zeros(m * m);
    for j in 1..n {
        for i in 1..n {
            let k = id(i, j);
            let node = space.index(i, j);
            a[(k, k)] = 4.0 / (h * h) + c.values()[node];
            b[k] = source.values()[node] * g(i, j);
            for (ii, jj) in [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)] {
                if ii == 0 || jj == 0 || ii == n || jj == n {
                    b[k] += g(ii, jj) / (h * h);
                } else {
                    a[(k, id(ii, jj))] = -1.0 / (h * h);
                }
            }
        }
    }
    let z = a.cholesky().unwrap().solve(&b);
    for j in 0..=n {
        for i in 0..=n {
            let v = u.values()[space.index(i, j)];
            let expect = if i == 0 || j == 0 || i == n || j == n {
                g(i, j)
            } else {
                z[id(i, j)]
            };
            assert!((v - expect).abs() < 1e-10, "({i}, {j}): {v} vs {expect}");
        }
    }
}

#[test]
fn elliptic_adjoint_is_consistent() {
    let (op, c) = elliptic(40);
    assert!(!op.is_linear());
    let err = adjoint_error(&op, &c, 20, 5);
    assert!(err <= 1e-8, "{err:e}");
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let c2 = c
        .axpy(0.5, &random_fn(c.space(), Variance::Primal, &mut rng))
        .unwrap();
    assert!(adjoint_error(&op, &c2, 5, 7) <= 1e-8);
}

#[test]
fn elliptic_taylor_remainder_is_second_order() {
    let (op, c) = elliptic(40);
    let fc = op.apply(&c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let h = random_fn(c.space(), Variance::Primal, &mut rng);
        let dh = op.deriv(&c, &h).unwrap();
        let rem = |t: f64| {
            let ft = op.apply(&c.axpy(t, &h).unwrap()).unwrap();
            ft.sub(&fc).unwrap().axpy(-t, &dh).unwrap().norm()
        };
        let slope = (rem(1e-2) / rem(1e-3)).log10();
        assert!(slope >= 1.9, "slope {slope}");
    }
}

#[test]
fn elliptic_rejects_indefinite_parameters() {
    let (op, c) = elliptic(8);
    let bad = GridFn::from_fn(c.space().clone(), Variance::Primal, |_: &[f64]| -1e4).unwrap();
    assert!(matches!(
        op.apply(&bad),
        Err(Error::OperatorEvaluation { .. })
    ));
    // the cache still serves the good parameter afterwards
    assert!(op.apply(&c).is_ok());
    let one_d = GridSpace::interval(10, 2.0).unwrap();
    let z = GridFn::zeros(one_d.clone(), Variance::Primal);
    assert!(EllipticOp::new(one_d, &z, &z).is_err());
}

#[test]
fn operators_check_their_arguments() {
    let op = IntegralOp::new(20, 2.0).unwrap();
    let other = GridSpace::interval(30, 2.0).unwrap();
    let x = GridFn::zeros(other, Variance::Primal);
    assert!(op.apply(&x).is_err());
    let primal = GridFn::zeros(op.range().clone(), Variance::Primal);
    assert!(op.adjoint(&primal, &primal).is_err());
    assert!(IntegralOp::on_space(GridSpace::unit_square(4, 4, 2.0).unwrap()).is_err());
}

#[test]
fn tangential_cone_estimate() {
    let (op, c) = elliptic(20);
    let near = estimate_eta(&op, &c, 1e-4, 8, 9).unwrap();
    assert!(near <= 0.05, "{near}");
    let zero = GridFn::zeros(c.space().clone(), Variance::Primal);
    let far = estimate_eta(&op, &zero, 0.5, 8, 9).unwrap();
    assert!(far > near && far < 1.0, "{far}");
    let lin = IntegralOp::new(20, 2.0).unwrap();
    let z = GridFn::zeros(lin.domain().clone(), Variance::Primal);
    assert_eq!(estimate_eta(&lin, &z, 1.0, 4, 0).unwrap(), 0.0);
    assert!(estimate_eta(&op, &c, 0.1, 0, 0).is_err());
}
