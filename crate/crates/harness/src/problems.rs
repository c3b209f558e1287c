//! Synthetic test problems: operators, exact solutions, exact and noisy data.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{ExactKind, ProblemConfig, ProblemKind};
use crate::error::{HarnessError, Result};
use itreg::{EllipticOp, ForwardOp, GridFn, GridSpace, IntegralOp, Variance};

pub struct Problem {
    pub op: Box<dyn ForwardOp<f64>>,
    pub x_dagger: GridFn<f64>,
    pub y_exact: GridFn<f64>,
}

const TOL: f64 = 1e-12;

fn within(t: f64, lo: f64, hi: f64) -> bool {
    t >= lo - TOL && t <= hi + TOL
}

/// Three narrow spikes on `[0, 1]`.
pub fn spikes_1d(space: &Arc<GridSpace<f64>>) -> Result<GridFn<f64>> {
    Ok(GridFn::from_fn(space.clone(), Variance::Primal, |c| {
        let t = c[0];
        if within(t, 0.292, 0.300) {
            0.5
        } else if within(t, 0.500, 0.508) {
            1.0
        } else if within(t, 0.700, 0.708) {
            0.7
        } else {
            0.0
        }
    })?)
}

/// A disc of height 1 and a rectangle of height 0.5 in the unit square.
pub fn two_inclusions_2d(space: &Arc<GridSpace<f64>>) -> Result<GridFn<f64>> {
    Ok(GridFn::from_fn(space.clone(), Variance::Primal, |c| {
        let (x, y) = (c[0], c[1]);
        if (x - 0.3).powi(2) + (y - 0.7).powi(2) <= 0.2f64.powi(2) + TOL {
            1.0
        } else if within(x, 0.6, 0.8) && within(y, 0.2, 0.5) {
            0.5
        } else {
            0.0
        }
    })?)
}

fn load_exact(path: &Path, space: &Arc<GridSpace<f64>>) -> Result<GridFn<f64>> {
    let file = std::fs::File::open(path).map_err(|source| HarnessError::ConfigFile {
        path: path.display().to_string(),
        source,
    })?;
    let f: GridFn<f64> = itreg::spaces::read_csv(std::io::BufReader::new(file))?;
    if f.values().len() != space.len() || f.space().dims() != space.dims() {
        return Err(HarnessError::Config(format!(
            "problem.exact_file: grid {:?} does not match the configured grid {:?}",
            f.space().dims(),
            space.dims()
        )));
    }
    Ok(GridFn::primal(space.clone(), f.into_values())?)
}

fn exact_solution(
    cfg: &ProblemConfig,
    space: &Arc<GridSpace<f64>>,
    base_dir: &Path,
) -> Result<GridFn<f64>> {
    match cfg.exact {
        ExactKind::Spikes1d => spikes_1d(space),
        ExactKind::TwoInclusions2d => two_inclusions_2d(space),
        ExactKind::Zero => Ok(GridFn::zeros(space.clone(), Variance::Primal)),
        ExactKind::File => {
            let rel = cfg.exact_file.as_deref().unwrap_or_default();
            load_exact(&base_dir.join(rel), space)
        }
    }
}

/// Builds the operator, the exact solution on its grid and `y = F(x_dagger)`.
///
/// For the elliptic problem the source is `f = c_dagger (x + y)` and the
/// boundary data `g = x + y`, so the discrete state at `c_dagger` is exactly
/// `x + y` (the 5-point Laplacian annihilates linear functions). Data and model
/// share the discretization.
pub fn make_problem(cfg: &ProblemConfig, base_dir: &Path) -> Result<Problem> {
    match cfg.kind {
        ProblemKind::Integral1d => {
            let op = IntegralOp::new(cfg.n, 2.0)?;
            let x_dagger = exact_solution(cfg, op.domain(), base_dir)?;
            let y_exact = op.apply(&x_dagger)?;
            Ok(Problem {
                op: Box::new(op),
                x_dagger,
                y_exact,
            })
        }
        ProblemKind::Elliptic2d => {
            let space = GridSpace::unit_square(cfg.nx, cfg.ny, 2.0)?;
            let c_dagger = exact_solution(cfg, &space, base_dir)?;
            let state = GridFn::from_fn(space.clone(), Variance::Primal, |c| c[0] + c[1])?;
            let source = c_dagger.hadamard(&state)?;
            let op = EllipticOp::new(space, &source, &state)?;
            let y_exact = op.apply(&c_dagger)?;
            Ok(Problem {
                op: Box::new(op),
                x_dagger: c_dagger,
                y_exact,
            })
        }
    }
}

/// `y + delta e / ||e||` with `e` seeded standard Gaussian noise, so that
/// `||y^delta - y|| = delta`.
pub fn add_noise(y: &GridFn<f64>, delta: f64, seed: u64) -> Result<GridFn<f64>> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(HarnessError::Config(
            "noise.delta: must be nonnegative".into(),
        ));
    }
    if delta == 0.0 {
        return Ok(y.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = loop {
        let v: Vec<f64> = (0..y.len())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let e = GridFn::new(y.space().clone(), v, y.variance())?;
        if e.norm() > 0.0 {
            break e;
        }
    };
    let unit = e.scale(1.0 / e.norm())?;
    // Rounding in y + s e shifts the realized noise norm by a few ulps of |y|;
    // a handful of multiplicative corrections pull it back onto delta.
    let mut s = delta;
    let mut best: Option<(f64, GridFn<f64>)> = None;
    for _ in 0..12 {
        let yd = y.axpy(s, &unit)?;
        let realized = yd.sub(y)?.norm();
        let err = (realized - delta).abs();
        if best.as_ref().is_none_or(|(b, _)| err < *b) {
            best = Some((err, yd));
        }
        if err <= 1e-15 * delta {
            break;
        }
        s *= delta / realized;
    }
    let yd = best.expect("at least one candidate").1;
    if y.space().exponent() != 2.0 {
        return Ok(yd);
    }
    Ok(GridFn::new(
        y.space().clone(),
        polish(y, yd.into_values(), delta),
        y.variance(),
    )?)
}

/// When `delta` is small against `|y|`, the scale alone cannot place the noise
/// norm closer than about `ulp(y) / (sqrt(N) delta)`. This nudges single
/// components (each nudge chosen to bring the linearized norm closest to
/// `delta`) until the weighted `L^2` norm of `yd - y` is within `2e-15`
/// relative.
fn polish(y: &GridFn<f64>, mut yd: Vec<f64>, delta: f64) -> Vec<f64> {
    let w = y.space().weights();
    let yv = y.values();
    let norm_of = |yd: &[f64]| -> f64 {
        yd.iter()
            .zip(yv)
            .zip(w)
            .map(|((a, b), wi)| wi * (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    for _ in 0..64 {
        let norm = norm_of(&yd);
        let err = norm - delta;
        if err.abs() <= 2e-15 * delta {
            break;
        }
        // d norm / d n_k = w_k n_k / norm
        let mut pick: Option<(usize, f64, f64)> = None;
        for k in 0..yd.len() {
            let n = yd[k] - yv[k];
            let rate = w[k] * n / norm;
            if rate == 0.0 {
                continue;
            }
            let candidate = yd[k] - err / rate;
            let moved = candidate - yd[k];
            if moved == 0.0 {
                continue;
            }
            let predicted = (err + rate * moved).abs();
            if pick.is_none_or(|(_, _, p)| predicted < p) {
                pick = Some((k, candidate, predicted));
            }
        }
        let Some((k, value, predicted)) = pick else {
            break;
        };
        if predicted >= err.abs() {
            break;
        }
        yd[k] = value;
    }
    yd
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integral_cfg(exact: ExactKind) -> ProblemConfig {
        ProblemConfig {
            kind: ProblemKind::Integral1d,
            n: 400,
            nx: 40,
            ny: 40,
            exact,
            exact_file: None,
        }
    }

    #[test]
    fn spikes_support() {
        let p = make_problem(&integral_cfg(ExactKind::Spikes1d), Path::new(".")).unwrap();
        let x = p.x_dagger.values();
        for (k, &v) in x.iter().enumerate() {
            let want = match k {
                117..=120 => 0.5,
                200..=203 => 1.0,
                280..=283 => 0.7,
                _ => 0.0,
            };
            assert_eq!(v, want, "node {k}");
        }
    }

    #[test]
    fn zero_solution_gives_zero_data() {
        let p = make_problem(&integral_cfg(ExactKind::Zero), Path::new(".")).unwrap();
        assert!(p.y_exact.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn elliptic_data_is_linear_state() {
        let cfg = ProblemConfig {
            kind: ProblemKind::Elliptic2d,
            n: 400,
            nx: 40,
            ny: 40,
            exact: ExactKind::TwoInclusions2d,
            exact_file: None,
        };
        let p = make_problem(&cfg, Path::new(".")).unwrap();
        let sp = p.y_exact.space().clone();
        for k in 0..sp.len() {
            let c = sp.coords(k);
            assert!((p.y_exact.values()[k] - (c[0] + c[1])).abs() <= 1e-10);
        }
        let cd = p.x_dagger.values();
        assert_eq!(cd[sp.index(12, 28)], 1.0);
        assert_eq!(cd[sp.index(28, 14)], 0.5);
        assert_eq!(cd[sp.index(20, 20)], 0.0);
    }

    #[test]
    fn noise_has_exact_level() {
        let p = make_problem(&integral_cfg(ExactKind::Spikes1d), Path::new(".")).unwrap();
        for (i, delta) in [5e-4, 1e-3, 3.7e-2].into_iter().enumerate() {
            let yd = add_noise(&p.y_exact, delta, 100 + i as u64).unwrap();
            let got = yd.sub(&p.y_exact).unwrap().norm();
            assert!((got / delta - 1.0).abs() <= 1e-14, "{got} vs {delta}");
        }
        let same = add_noise(&p.y_exact, 0.0, 1).unwrap();
        assert_eq!(same.values(), p.y_exact.values());
        let a = add_noise(&p.y_exact, 1e-3, 7).unwrap();
        let b = add_noise(&p.y_exact, 1e-3, 7).unwrap();
        assert_eq!(a.values(), b.values());
    }
}
