//! Fast self-checks on small instances, run by `itreg check`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{example51, example52};
use crate::problems::{add_noise, make_problem};
use itreg::inner_cg::{minimize, minimize_linear};
use itreg::spaces::duality_map;
use itreg::{
    pairing, ForwardOp, GridFn, GridSpace, InnerProblem, InnerSettings, IntegralOp, NitSolver,
    Penalty, Variance,
};

pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn result(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed,
        detail,
    }
}

fn random_fn(
    space: &std::sync::Arc<GridSpace<f64>>,
    variance: Variance,
    rng: &mut ChaCha8Rng,
) -> GridFn<f64> {
    let v = (0..space.len())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    GridFn::new(space.clone(), v, variance).expect("finite values")
}

fn duality() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for p in [1.5, 2.0, 3.0] {
        let space = GridSpace::interval(50, p).unwrap();
        for r in [1.5, 2.0, 3.0] {
            for _ in 0..20 {
                let f = random_fn(&space, Variance::Primal, &mut rng);
                let j = duality_map(&f, r).unwrap();
                let nf = f.norm();
                worst = worst
                    .max((j.norm() - nf.powf(r - 1.0)).abs() / nf.powf(r - 1.0))
                    .max((pairing(&j, &f).unwrap() - nf.powf(r)).abs() / nf.powf(r));
            }
        }
    }
    result(
        "duality map identities",
        worst <= 1e-10,
        format!("max rel. error {worst:.2e}"),
    )
}

fn three_point() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let space = GridSpace::unit_square(8, 8, 2.0).unwrap();
    let thetas = [
        Penalty::quadratic(1.0).unwrap(),
        Penalty::l2_l1(0.01, 1.0, 1e-6).unwrap(),
        Penalty::l2_tv(0.01, 1.0, 1e-6).unwrap(),
    ];
    let mut worst = 0.0f64;
    for theta in &thetas {
        for _ in 0..10 {
            let x = random_fn(&space, Variance::Primal, &mut rng);
            let x1 = random_fn(&space, Variance::Primal, &mut rng);
            let x2 = random_fn(&space, Variance::Primal, &mut rng);
            let (xi, xi1) = (theta.gradient(&x).unwrap(), theta.gradient(&x1).unwrap());
            let scale = theta.value(&x2).unwrap() + theta.value(&x).unwrap();
            worst = worst.max(theta.three_point(&x2, &x1, &x, &xi1, &xi).unwrap() / scale);
        }
    }
    result(
        "three-point identity",
        worst <= 1e-10,
        format!("max rel. error {worst:.2e}"),
    )
}

fn adjoint(op: &dyn ForwardOp<f64>, x: &GridFn<f64>, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let h = random_fn(op.domain(), Variance::Primal, &mut rng);
        let w = random_fn(op.range(), Variance::Dual, &mut rng);
        let lhs = pairing(&w, &op.deriv(x, &h).unwrap()).unwrap();
        let rhs = pairing(&op.adjoint(x, &w).unwrap(), &h).unwrap();
        let scale = op.deriv(x, &h).unwrap().norm() * w.norm();
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    worst
}

fn adjoints() -> CheckResult {
    let integral = IntegralOp::new(100, 2.0).unwrap();
    let x = GridFn::zeros(integral.domain().clone(), Variance::Primal);
    let e1 = adjoint(&integral, &x, 3);
    let mut cfg = example52("quadratic").problem;
    cfg.nx = 12;
    cfg.ny = 12;
    let p = make_problem(&cfg, Path::new(".")).unwrap();
    let e2 = adjoint(p.op.as_ref(), &p.x_dagger, 4);
    result(
        "adjoint consistency",
        e1.max(e2) <= 1e-8,
        format!("integral {e1:.2e}, elliptic {e2:.2e}"),
    )
}

fn taylor() -> CheckResult {
    let mut cfg = example52("quadratic").problem;
    cfg.nx = 12;
    cfg.ny = 12;
    let p = make_problem(&cfg, Path::new(".")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c = &p.x_dagger;
    let h = random_fn(c.space(), Variance::Primal, &mut rng);
    let fc = p.op.apply(c).unwrap();
    let dh = p.op.deriv(c, &h).unwrap();
    let rem = |t: f64| {
        let ft = p.op.apply(&c.axpy(t, &h).unwrap()).unwrap();
        ft.sub(&fc).unwrap().axpy(-t, &dh).unwrap().norm()
    };
    let slope = (rem(1e-2) / rem(1e-3)).log10();
    result(
        "Taylor remainder order",
        slope >= 1.9,
        format!("slope {slope:.3}"),
    )
}

fn inner_oracle() -> CheckResult {
    let op = IntegralOp::new(60, 2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let y = random_fn(op.range(), Variance::Primal, &mut rng);
    let theta = Penalty::quadratic(1.0).unwrap();
    let x_prev = random_fn(op.domain(), Variance::Primal, &mut rng);
    let xi_prev = theta.gradient(&x_prev).unwrap();
    let p = InnerProblem {
        op: &op,
        ydelta: &y,
        theta: &theta,
        alpha: 1e-3,
        x_prev: &x_prev,
        xi_prev: &xi_prev,
        r: 2.0,
    };
    let s = InnerSettings {
        grad_tol_rel: 1e-12,
        ..InnerSettings::default()
    };
    let (a, _) = minimize(&p, &s, &x_prev).unwrap();
    let (b, _) = minimize_linear(&p, &s, &x_prev).unwrap();
    let err = a.sub(&b).unwrap().norm() / b.norm();
    result(
        "nonlinear CG vs linear CG",
        err <= 1e-6,
        format!("rel. difference {err:.2e}"),
    )
}

fn noise() -> CheckResult {
    let op = IntegralOp::new(200, 2.0).unwrap();
    let x = GridFn::from_fn(op.domain().clone(), Variance::Primal, |c: &[f64]| {
        c[0].sin()
    })
    .unwrap();
    let y = op.apply(&x).unwrap();
    let mut worst = 0.0f64;
    for (k, delta) in [1e-2, 1e-4, 1e-6].into_iter().enumerate() {
        let yd = add_noise(&y, delta, k as u64).unwrap();
        worst = worst.max((yd.sub(&y).unwrap().norm() - delta).abs() / delta);
    }
    result(
        "noise level exact",
        worst <= 1e-14,
        format!("max rel. error {worst:.2e}"),
    )
}

fn small_run() -> CheckResult {
    let mut cfg = example51("quadratic");
    cfg.problem.n = 100;
    let p = make_problem(&cfg.problem, Path::new(".")).unwrap();
    let yd = add_noise(&p.y_exact, cfg.noise.delta, cfg.noise.seed).unwrap();
    let solver = NitSolver {
        op: p.op.as_ref(),
        theta: cfg.penalty().unwrap(),
        r: cfg.method.r,
        schedule: cfg.alpha_schedule().unwrap(),
        stop: cfg.stopping_rule().unwrap(),
        inner: cfg.inner_settings(),
        reference: Some(p.x_dagger.clone()),
    };
    let report = match solver.run_from_zero(&yd, cfg.noise.delta) {
        Ok(r) => r,
        Err(e) => return result("small monotone run", false, e.to_string()),
    };
    let res = report.residuals();
    let rise = res
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let ok = rise <= 1e-8 && report.final_state().residual <= cfg.stopping.tau * cfg.noise.delta;
    result(
        "small monotone run",
        ok,
        format!(
            "n_delta {}, max residual increase {rise:.2e}",
            report.n_delta
        ),
    )
}

/// Runs all checks; each reports pass/fail and a one-line detail.
pub fn run_checks() -> Vec<CheckResult> {
    vec![
        duality(),
        three_point(),
        adjoints(),
        taylor(),
        inner_oracle(),
        noise(),
        small_run(),
    ]
}
