use std::sync::Arc;

use proptest::prelude::*;

use itreg::spaces::{bregman_norm, duality_map};
use itreg::{pairing, GridFn, GridSpace, Penalty, Variance};

const EXPONENTS: [f64; 3] = [1.5, 2.0, 3.0];

fn grid_values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, len)
}

fn nonzero(v: &[f64]) -> bool {
    v.iter().any(|x| x.abs() > 1e-3)
}

fn on(space: &Arc<GridSpace<f64>>, v: Vec<f64>) -> GridFn<f64> {
    GridFn::primal(space.clone(), v).unwrap()
}

/// Direct weighted p-norm, independent of the library.
fn lp_norm(space: &GridSpace<f64>, v: &[f64], p: f64) -> f64 {
    space
        .weights()
        .iter()
        .zip(v)
        .map(|(w, x)| w * x.abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

fn penalties() -> [Penalty<f64>; 4] {
    [
        Penalty::quadratic(1.0).unwrap(),
        Penalty::l2_l1(0.01, 1.0, 1e-6).unwrap(),
        Penalty::l2_tv(0.01, 1.0, 1e-6).unwrap(),
        Penalty::l2_tv(1.0, 1.0, 1e-6).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn duality_map_identities(v in grid_values(41), pi in 0usize..3, ri in 0usize..3) {
        prop_assume!(nonzero(&v));
        let (p, r) = (EXPONENTS[pi], EXPONENTS[ri]);
        let space = GridSpace::interval(40, p).unwrap();
        let n = lp_norm(&space, &v, p);
        let f = on(&space, v);
        prop_assert!((f.norm() - n).abs() <= 1e-12 * n);
        let j = duality_map(&f, r).unwrap();
        prop_assert_eq!(j.variance(), Variance::Dual);
        let q = p / (p - 1.0);
        prop_assert!((lp_norm(&space, j.values(), q) - n.powf(r - 1.0)).abs() <= 1e-10 * n.powf(r - 1.0));
        prop_assert!((pairing(&j, &f).unwrap() - n.powf(r)).abs() <= 1e-10 * n.powf(r));
    }

    #[test]
    fn duality_map_is_homogeneous(v in grid_values(21), t in 0.1f64..10.0, ri in 0usize..3) {
        prop_assume!(nonzero(&v));
        let r = EXPONENTS[ri];
        let space = GridSpace::interval(20, 3.0).unwrap();
        let f = on(&space, v);
        let a = duality_map(&f.scale(t).unwrap(), r).unwrap();
        let b = duality_map(&f, r).unwrap().scale(t.powf(r - 1.0)).unwrap();
        let err = a.sub(&b).unwrap().max_abs();
        prop_assert!(err <= 1e-12 * b.max_abs());
    }

    #[test]
    fn norm_bregman_distance_is_nonnegative(u in grid_values(21), v in grid_values(21), pi in 0usize..3, ri in 0usize..3) {
        let space = GridSpace::interval(20, EXPONENTS[pi]).unwrap();
        let (fbar, f) = (on(&space, u), on(&space, v));
        let r = EXPONENTS[ri];
        prop_assert!(bregman_norm(&fbar, &f, r).unwrap() >= 0.0);
        prop_assert!(bregman_norm(&f, &f, r).unwrap() <= 1e-12 * (1.0 + f.norm().powf(r)));
    }

    #[test]
    fn three_point_identity(a in grid_values(49), b in grid_values(49), c in grid_values(49), k in 0usize..4) {
        let space = GridSpace::unit_square(6, 6, 2.0).unwrap();
        let theta = penalties()[k];
        let (x, x1, x2) = (on(&space, a), on(&space, b), on(&space, c));
        let xi = theta.gradient(&x).unwrap();
        let xi1 = theta.gradient(&x1).unwrap();
        let scale = 1.0 + theta.value(&x).unwrap() + theta.value(&x2).unwrap();
        let e = theta.three_point(&x2, &x1, &x, &xi1, &xi).unwrap();
        prop_assert!(e <= 1e-10 * scale, "k {} err {:e} scale {:e}", k, e, scale);
    }

    #[test]
    fn bregman_dominates_the_quadratic_part(a in grid_values(49), b in grid_values(49), k in 0usize..4) {
        let space = GridSpace::unit_square(6, 6, 2.0).unwrap();
        let theta = penalties()[k];
        let (x, xbar) = (on(&space, a), on(&space, b));
        let d = theta.bregman_at_gradient(&xbar, &x).unwrap();
        let gap = xbar.sub(&x).unwrap().l2_norm().powi(2);
        prop_assert!(d >= theta.mu() * gap * (1.0 - 1e-10) - 1e-14);
        prop_assert_eq!(theta.bregman_at_gradient(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn stable_bregman_matches_definition(a in grid_values(49), b in grid_values(49), k in 0usize..4) {
        let space = GridSpace::unit_square(6, 6, 2.0).unwrap();
        let theta = penalties()[k];
        let (x, xbar) = (on(&space, a), on(&space, b));
        let xi = theta.gradient(&x).unwrap();
        let naive = theta.value(&xbar).unwrap() - theta.value(&x).unwrap()
            - pairing(&xi, &xbar.sub(&x).unwrap()).unwrap();
        let stable = theta.bregman(&xbar, &x, &xi).unwrap();
        let scale = theta.value(&xbar).unwrap() + theta.value(&x).unwrap();
        prop_assert!((naive - stable).abs() <= 1e-10 * scale);
    }

    #[test]
    fn gradient_is_the_directional_derivative(a in grid_values(49), dir in grid_values(49), k in 0usize..4) {
        let space = GridSpace::unit_square(6, 6, 2.0).unwrap();
        // a larger smoothing parameter keeps the finite difference well posed
        let base = penalties()[k];
        let theta = Penalty::new(base.kind(), base.mu(), base.a(), base.b(), 1e-2).unwrap();
        let (x, h) = (on(&space, a), on(&space, dir));
        let t = 1e-5;
        let fd = (theta.value(&x.axpy(t, &h).unwrap()).unwrap()
            - theta.value(&x.axpy(-t, &h).unwrap()).unwrap()) / (2.0 * t);
        let exact = pairing(&theta.gradient(&x).unwrap(), &h).unwrap();
        prop_assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()), "{} vs {}", fd, exact);
    }

    #[test]
    fn penalty_is_convex_along_segments(a in grid_values(49), b in grid_values(49), s in 0.0f64..1.0, k in 0usize..4) {
        let space = GridSpace::unit_square(6, 6, 2.0).unwrap();
        let theta = penalties()[k];
        let (x, y) = (on(&space, a), on(&space, b));
        let mid = GridFn::lincomb(&[1.0 - s, s], &[&x, &y]).unwrap();
        let lhs = theta.value(&mid).unwrap();
        let rhs = (1.0 - s) * theta.value(&x).unwrap() + s * theta.value(&y).unwrap();
        prop_assert!(lhs <= rhs + 1e-12 * (1.0 + rhs));
    }

    #[test]
    fn lagged_curvature_reproduces_the_gradient(a in grid_values(49), k in 0usize..4) {
        // each term is phi(|Lx|^2) and the curvature is frozen at x itself,
        // so M(x) x = W grad(x)
        let space = GridSpace::unit_square(6, 6, 2.0).unwrap();
        let theta = penalties()[k];
        let x = on(&space, a);
        let m = theta.lagged_curvature(&x).unwrap();
        let mx = m.matvec(x.values());
        let g = theta.gradient(&x).unwrap();
        for ((&lhs, &gv), &w) in mx.iter().zip(g.values()).zip(space.weights()) {
            prop_assert!((lhs - w * gv).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }
    }
}

#[test]
fn pairing_rejects_two_primal_arguments() {
    let space = GridSpace::interval(10, 2.0).unwrap();
    let x = GridFn::zeros(space.clone(), Variance::Primal);
    assert!(pairing(&x, &x).is_err());
    assert!(duality_map(&x, 1.0).is_err());
    assert_eq!(duality_map(&x, 2.0).unwrap().max_abs(), 0.0);
}
