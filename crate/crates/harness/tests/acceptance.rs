//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use itreg::inner_cg::minimize;
use itreg::nit_solver::diagnostics_bregman;
use itreg::spaces::{bregman_norm, duality_map};
use itreg::{
    pairing, ForwardOp, GridFn, GridSpace, InnerProblem, InnerSettings, IntegralOp, Penalty,
    RunReport, Termination, Variance,
};
use itreg_harness::config::{example51, example52, StudyConfig};
use itreg_harness::{add_noise, make_problem, run_experiment, run_study, ExperimentOutcome};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn random_fn(space: &Arc<GridSpace<f64>>, variance: Variance, rng: &mut ChaCha8Rng) -> GridFn<f64> {
    let v = (0..space.len())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    GridFn::new(space.clone(), v, variance).unwrap()
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Runs the built-in experiments once; several criteria share them.
struct Runs {
    ex51: Vec<(ExperimentOutcome, Duration)>,
    ex52: Vec<(ExperimentOutcome, Duration)>,
}

impl Runs {
    fn new() -> Self {
        let timed = |cfg| {
            let t = Instant::now();
            let out = run_experiment(&cfg, Path::new(".")).expect("experiment runs");
            (out, t.elapsed())
        };
        Runs {
            ex51: ["quadratic", "l2_l1"].map(|p| timed(example51(p))).into(),
            ex52: ["quadratic", "l2_tv_mu0.01", "l2_tv_mu1"]
                .map(|p| timed(example52(p)))
                .into(),
        }
    }
}

fn c1_identities() -> Verdict {
    let t = Instant::now();
    let exps = [2.0, 1.5, 3.0];
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut duality, mut three) = (0.0f64, 0.0f64);
    for p in exps {
        let space = GridSpace::interval(64, p).unwrap();
        for r in exps {
            for _ in 0..100 {
                let f = random_fn(&space, Variance::Primal, &mut rng);
                let nf = f.norm();
                let j = duality_map(&f, r).unwrap();
                // dual norm from the weights directly
                let q = p / (p - 1.0);
                let nj = space
                    .weights()
                    .iter()
                    .zip(j.values())
                    .map(|(w, v)| w * v.abs().powf(q))
                    .sum::<f64>()
                    .powf(1.0 / q);
                duality = duality
                    .max((nj - nf.powf(r - 1.0)).abs() / nf.powf(r - 1.0))
                    .max((pairing(&j, &f).unwrap() - nf.powf(r)).abs() / nf.powf(r));

                // three-point identity for ||.||^r / r
                let x1 = random_fn(&space, Variance::Primal, &mut rng);
                let x2 = random_fn(&space, Variance::Primal, &mut rng);
                let j1 = duality_map(&x1, r).unwrap();
                let lhs = bregman_norm(&x2, &f, r).unwrap() - bregman_norm(&x1, &f, r).unwrap();
                let rhs = bregman_norm(&x2, &x1, r).unwrap()
                    + pairing(&j1.sub(&j).unwrap(), &x2.sub(&x1).unwrap()).unwrap();
                let scale = (nf.powf(r) + x1.norm().powf(r) + x2.norm().powf(r)) / r;
                three = three.max((lhs - rhs).abs() / scale);
            }
        }
    }
    // the same identity for the three penalties on a 2-D grid
    let space = GridSpace::unit_square(12, 12, 2.0).unwrap();
    for theta in [
        Penalty::quadratic(1.0).unwrap(),
        Penalty::l2_l1(0.01, 1.0, 1e-6).unwrap(),
        Penalty::l2_tv(0.01, 1.0, 1e-6).unwrap(),
    ] {
        for _ in 0..100 {
            let x = random_fn(&space, Variance::Primal, &mut rng);
            let x1 = random_fn(&space, Variance::Primal, &mut rng);
            let x2 = random_fn(&space, Variance::Primal, &mut rng);
            let (xi, xi1) = (theta.gradient(&x).unwrap(), theta.gradient(&x1).unwrap());
            let scale =
                theta.value(&x).unwrap() + theta.value(&x1).unwrap() + theta.value(&x2).unwrap();
            three = three.max(theta.three_point(&x2, &x1, &x, &xi1, &xi).unwrap() / scale);
        }
    }
    let el = t.elapsed();
    verdict(
        duality <= 1e-10 && three <= 1e-10 && el < Duration::from_secs(5),
        format!(
            "duality rel. err {duality:.1e}, three-point rel. err {three:.1e}, {:.2} s",
            secs(el)
        ),
    )
}

fn adjoint_error(op: &dyn ForwardOp<f64>, x: &GridFn<f64>, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let h = random_fn(op.domain(), Variance::Primal, &mut rng);
        let w = random_fn(op.range(), Variance::Dual, &mut rng);
        let dh = op.deriv(x, &h).unwrap();
        let lhs = pairing(&w, &dh).unwrap();
        let rhs = pairing(&op.adjoint(x, &w).unwrap(), &h).unwrap();
        worst = worst.max((lhs - rhs).abs() / (dh.norm() * w.norm()));
    }
    worst
}

fn c2_adjoints() -> Verdict {
    let t = Instant::now();
    let integral = IntegralOp::new(400, 2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let x = random_fn(integral.domain(), Variance::Primal, &mut rng);
    let e1 = adjoint_error(&integral, &x, 203);
    let p = make_problem(&example52("quadratic").problem, Path::new(".")).unwrap();
    let e2 = adjoint_error(p.op.as_ref(), &p.x_dagger, 204);
    let el = t.elapsed();
    verdict(
        e1 <= 1e-8 && e2 <= 1e-8 && el < Duration::from_secs(30),
        format!(
            "integral {e1:.1e}, elliptic {e2:.1e} (relative to |F'h| |w|), {:.2} s",
            secs(el)
        ),
    )
}

fn c3_taylor() -> Verdict {
    let p = make_problem(&example52("quadratic").problem, Path::new(".")).unwrap();
    let c = &p.x_dagger;
    let fc = p.op.apply(c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut slopes = Vec::new();
    for _ in 0..5 {
        let h = random_fn(c.space(), Variance::Primal, &mut rng);
        let dh = p.op.deriv(c, &h).unwrap();
        let rem = |t: f64| {
            let ft = p.op.apply(&c.axpy(t, &h).unwrap()).unwrap();
            ft.sub(&fc).unwrap().axpy(-t, &dh).unwrap().norm()
        };
        slopes.push((rem(1e-2) / rem(1e-3)).log10());
    }
    let min = slopes.iter().cloned().fold(f64::INFINITY, f64::min);
    verdict(min >= 1.9, format!("min slope {min:.3} over 5 directions"))
}

/// `(K^T W K + 2 mu alpha W) x = K^T W y + alpha W xi`: the normal equations
/// in the weighted inner product, with `K` the matrix of `A` on nodal values.
fn dense_solve(
    op: &IntegralOp<f64>,
    y: &GridFn<f64>,
    mu: f64,
    alpha: f64,
    xi: &GridFn<f64>,
) -> Vec<f64> {
    let n = op.domain().len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] = op.kernel(i, j) * op.domain().weights()[j];
        }
    }
    let wm = DMatrix::from_diagonal(&DVector::from_column_slice(op.domain().weights()));
    let lhs = k.transpose() * &wm * &k + &wm * (2.0 * mu * alpha);
    let rhs = k.transpose() * &wm * DVector::from_column_slice(y.values())
        + &wm * DVector::from_column_slice(xi.values()) * alpha;
    lhs.cholesky().expect("SPD").solve(&rhs).as_slice().to_vec()
}

fn c4_inner_oracle() -> Verdict {
    let t = Instant::now();
    let mut cfg = example51("quadratic");
    cfg.problem.n = 200;
    let p = make_problem(&cfg.problem, Path::new(".")).unwrap();
    let op = IntegralOp::new(200, 2.0).unwrap();
    let yd = add_noise(&p.y_exact, cfg.noise.delta, cfg.noise.seed).unwrap();
    let mu = 1.0;
    let theta = Penalty::quadratic(mu).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let tight = InnerSettings {
        grad_tol_rel: 1e-12,
        ..InnerSettings::default()
    };
    let (mut worst, mut worst_default) = (0.0f64, 0.0f64);
    let mut converged = true;
    for alpha in (1..=16).map(|n| 0.5f64.powi(n)) {
        let x_prev = random_fn(op.domain(), Variance::Primal, &mut rng)
            .scale(0.2)
            .unwrap();
        let xi_prev = theta
            .gradient(&x_prev)
            .unwrap()
            .axpy(0.1, &random_fn(op.domain(), Variance::Dual, &mut rng))
            .unwrap();
        let problem = InnerProblem {
            op: &op,
            ydelta: &yd,
            theta: &theta,
            alpha,
            x_prev: &x_prev,
            xi_prev: &xi_prev,
            r: 2.0,
        };
        let want = dense_solve(&op, &yd, mu, alpha, &xi_prev);
        let den: f64 = want.iter().map(|b| b * b).sum::<f64>().sqrt();
        let rel = |x: &GridFn<f64>| {
            x.values()
                .iter()
                .zip(&want)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
                / den
        };
        let (x, stats) = minimize(&problem, &tight, &x_prev).unwrap();
        converged &= stats.converged;
        worst = worst.max(rel(&x));
        let (x, _) = minimize(&problem, &InnerSettings::default(), &x_prev).unwrap();
        worst_default = worst_default.max(rel(&x));
    }
    let el = t.elapsed();
    verdict(
        converged && worst <= 1e-6 && el < Duration::from_secs(10),
        format!(
            "max rel. difference {worst:.1e} at grad_tol_rel 1e-12 over alpha = 2^-1..2^-16, N = 200 \
             (default 1e-8 tolerance: {worst_default:.1e}), {:.2} s",
            secs(el)
        ),
    )
}

fn monotone(report: &RunReport<f64>, theta: &Penalty<f64>, x_dagger: &GridFn<f64>) -> (f64, f64) {
    let res = report.residuals();
    let res_rise = res
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let d = diagnostics_bregman(report, theta, x_dagger).unwrap().values;
    // D_n for n < n_delta
    let d_rise = d[..report.n_delta]
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    (res_rise, d_rise)
}

fn c5_monotonicity(runs: &Runs) -> Verdict {
    let mut res_rise = f64::NEG_INFINITY;
    let mut d_rise = f64::NEG_INFINITY;
    let mut count = 0;
    let mut check = |report: &RunReport<f64>, theta: &Penalty<f64>, x: &GridFn<f64>| {
        let (a, b) = monotone(report, theta, x);
        res_rise = res_rise.max(a);
        d_rise = d_rise.max(b);
        count += 1;
    };
    for (o, _) in &runs.ex51 {
        check(&o.report, &o.config.penalty().unwrap(), &o.x_dagger);
    }
    for seed in [11, 12, 13] {
        for pen in ["quadratic", "l2_l1"] {
            let mut cfg = example51(pen);
            cfg.noise.seed = seed;
            let o = run_experiment(&cfg, Path::new(".")).unwrap();
            check(&o.report, &cfg.penalty().unwrap(), &o.x_dagger);
        }
    }
    verdict(
        res_rise <= 1e-8 && d_rise <= 1e-8,
        format!(
            "{count} runs; max residual increase {res_rise:.1e}, max Bregman increase {d_rise:.1e}"
        ),
    )
}

fn c6_termination(runs: &Runs) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (list, limit) in [(&runs.ex51, 60.0), (&runs.ex52, 600.0)] {
        let total: f64 = list.iter().map(|(_, d)| secs(*d)).sum();
        ok &= total < limit;
        for (o, _) in list.iter() {
            let s = o.summary().unwrap();
            let pass = s.terminated_by == "discrepancy"
                && s.n_delta <= 40
                && s.final_residual <= s.target_residual;
            ok &= pass;
            parts.push(format!("{} n_delta={}", o.config.name, s.n_delta));
        }
        parts.push(format!("{total:.1} s"));
    }
    verdict(ok, parts.join(", "))
}

fn c7_trend() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for pen in ["quadratic", "l2_l1"] {
        let mut cfg = example51(pen);
        cfg.study = Some(StudyConfig {
            deltas: vec![4e-3, 2e-3, 1e-3, 5e-4],
        });
        let rows = run_study(&cfg, Path::new(".")).unwrap();
        let errs: Vec<f64> = rows.iter().map(|r| r.error.unwrap()).collect();
        let ns: Vec<usize> = rows.iter().map(|r| r.n_delta.unwrap()).collect();
        ok &= errs.windows(2).all(|w| w[1] <= 1.1 * w[0]);
        ok &= ns.windows(2).all(|w| w[1] >= w[0]);
        let e: Vec<String> = errs.iter().map(|e| format!("{e:.3}")).collect();
        parts.push(format!("{pen}: errors [{}] n_delta {ns:?}", e.join(", ")));
    }
    verdict(ok, parts.join("; "))
}

fn c8_qualitative(runs: &Runs) -> Verdict {
    let e51: Vec<f64> = runs.ex51.iter().map(|(o, _)| o.l2_error).collect();
    let e52: Vec<f64> = runs.ex52.iter().map(|(o, _)| o.l2_error).collect();
    verdict(
        e51[1] < e51[0] && e52[1] < e52[0] && e52[2] < e52[0],
        format!(
            "integral: l2_l1 {:.4} vs quadratic {:.4}; elliptic: tv(mu=0.01) {:.4}, tv(mu=1) {:.4} vs quadratic {:.4}",
            e51[1], e51[0], e52[1], e52[2], e52[0]
        ),
    )
}

fn c9_rule41() -> Verdict {
    let mut ok = true;
    let mut strict = 0;
    for seed in 0..10 {
        let mut cfg = example51("quadratic");
        cfg.noise.seed = 1000 + seed;
        let a = run_experiment(&cfg, Path::new(".")).unwrap();
        cfg.stopping.kind = "rule41".into();
        let b = run_experiment(&cfg, Path::new(".")).unwrap();
        let target = cfg.stopping.tau * cfg.noise.delta;
        // strictness: the discrepancy principle stops strictly inside the ball
        if a.report.final_state().residual < target {
            strict += 1;
            ok &= b.report.terminated_by == Termination::Rule41
                && b.report.n_delta + 1 == a.report.n_delta
                && b.report.x_out.values() == a.report.states[a.report.n_delta - 1].x.values();
        }
    }
    ok &= strict > 0;
    verdict(
        ok,
        format!("{strict}/10 strict runs, variant-rule n_delta = discrepancy n_delta - 1 in each"),
    )
}

fn c10_reproducible() -> Verdict {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut cfg = example51("l2_l1");
    cfg.problem.n = 200;
    let mut files = Vec::new();
    for d in &dirs {
        let o = run_experiment(&cfg, Path::new(".")).unwrap();
        let written = o.write(d.path()).unwrap();
        files.push(written);
    }
    let mut same = 0;
    let mut total = 0;
    for (a, b) in files[0].iter().zip(&files[1]) {
        if a.extension().is_some_and(|e| e == "csv") {
            total += 1;
            if std::fs::read(a).unwrap() == std::fs::read(b).unwrap() {
                same += 1;
            }
        }
    }
    verdict(
        same == total && total == 2,
        format!("{same}/{total} CSV files byte-identical"),
    )
}

fn main() {
    let runs = Runs::new();
    let results: Vec<(usize, &str, Verdict)> = vec![
        (1, "duality map and Bregman identities", c1_identities()),
        (2, "adjoint consistency", c2_adjoints()),
        (3, "derivative order", c3_taylor()),
        (4, "inner solver vs dense solve", c4_inner_oracle()),
        (5, "monotonicity", c5_monotonicity(&runs)),
        (6, "termination", c6_termination(&runs)),
        (7, "noise-level trend", c7_trend()),
        (8, "penalty comparison", c8_qualitative(&runs)),
        (9, "variant rule vs discrepancy", c9_rule41()),
        (10, "reproducibility", c10_reproducible()),
    ];

    let mut failed = 0;
    for (k, name, v) in &results {
        println!(
            "criterion {k:>2} {}: {name}: {}",
            if v.passed { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.passed);
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
