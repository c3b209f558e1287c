//! Inner minimization of the per-step Tikhonov functional
//! `Phi(x) = (1/r) ||F(x) - y||^r + alpha D_{xi_prev} Theta(x, x_prev)`.
//!
//! The minimizer is a modified Fletcher-Reeves conjugate gradient method: the
//! search direction `d_k = -theta_k g_k + beta_k d_{k-1}` with the FR ratio
//! `beta_k = |g_k|^2 / |g_{k-1}|^2` and `theta_k = <d_{k-1}, g_k - g_{k-1}> / |g_{k-1}|^2`
//! satisfies `<g_k, d_k> = -|g_k|^2` for every step length, so each direction
//! is a descent direction independent of the line search. Steps come from an
//! Armijo backtracking search seeded with a secant step on the directional
//! derivative, which makes the line search exact on quadratics. All inner products are the
//! quadrature-weighted ones of the domain grid.
//!
//! Objectives may supply a symmetric positive definite preconditioner `M`;
//! the same recursion then runs with `z_k = M^{-1} g_k` in place of `g_k` and
//! `<g_k, z_k>` in place of `|g_k|^2`, which keeps `<g_k, d_k> = -<g_k, z_k>`.
//! The preconditioner is rebuilt (with a restart) every `precond_refresh`
//! iterations.

use crate::error::{param, Result};
use crate::operators::{BandedCholesky, ForwardOp};
use crate::penalties::Penalty;
use crate::scalar::{lit, Scalar};
use crate::spaces::{duality_map, pairing, GridFn, Variance};

/// A differentiable functional on a grid space.
pub trait Objective<T: Scalar> {
    fn value(&self, x: &GridFn<T>) -> Result<T>;

    /// Value and gradient (dual representation).
    fn value_and_gradient(&self, x: &GridFn<T>) -> Result<(T, GridFn<T>)>;

    /// Magnitude that bounds the rounding error of `value(x)`, which can
    /// exceed `|value|` when terms cancel. Defaults to `|value|`.
    fn value_scale(&self, _x: &GridFn<T>, value: T) -> Result<T> {
        Ok(value.abs())
    }

    /// Preconditioner built at `x`; `None` means plain gradients.
    fn preconditioner(&self, _x: &GridFn<T>) -> Result<Option<Preconditioner<T>>> {
        Ok(None)
    }
}

/// `M^{-1}` for a band matrix `M` in coefficient form: maps a dual gradient
/// `g` to the primal `z` solving `M z = W g`, `W` the quadrature weights.
#[derive(Debug, Clone)]
pub struct Preconditioner<T> {
    chol: BandedCholesky<T>,
}

impl<T: Scalar> Preconditioner<T> {
    pub fn new(chol: BandedCholesky<T>) -> Self {
        Preconditioner { chol }
    }

    pub fn apply(&self, g: &GridFn<T>) -> Result<GridFn<T>> {
        if g.len() != self.chol.dim() {
            return Err(crate::Error::DimensionMismatch {
                expected: self.chol.dim(),
                found: g.len(),
            });
        }
        let w = g.space().weights();
        let mut z: Vec<T> = g.values().iter().zip(w).map(|(&gi, &wi)| gi * wi).collect();
        self.chol.solve_in_place(&mut z);
        GridFn::primal(g.space().clone(), z)
    }
}

/// One step of the outer iteration seen as an optimization problem.
pub struct InnerProblem<'a, T: Scalar> {
    pub op: &'a dyn ForwardOp<T>,
    pub ydelta: &'a GridFn<T>,
    pub theta: &'a Penalty<T>,
    pub alpha: T,
    pub x_prev: &'a GridFn<T>,
    pub xi_prev: &'a GridFn<T>,
    pub r: T,
}

impl<'a, T: Scalar> InnerProblem<'a, T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > T::zero()) || !self.alpha.is_finite() {
            return Err(param(
                "alpha",
                format!("must be positive, got {}", self.alpha),
            ));
        }
        if !(self.r > T::one()) || !self.r.is_finite() {
            return Err(param("r", format!("need 1 < r < inf, got {}", self.r)));
        }
        if self.xi_prev.variance() != Variance::Dual {
            return Err(param("xi_prev", "must be a dual element"));
        }
        if !self.x_prev.same_space(self.xi_prev) || self.x_prev.len() != self.op.domain().len() {
            return Err(param("x_prev", "must live on the operator's domain grid"));
        }
        if self.ydelta.len() != self.op.range().len() {
            return Err(param("ydelta", "must live on the operator's range grid"));
        }
        Ok(())
    }

    /// `(1/r) ||F(x) - y||^r`.
    pub fn data_term(&self, x: &GridFn<T>) -> Result<T> {
        let res = self.op.apply(x)?.sub(self.ydelta)?;
        Ok(res.norm().powf(self.r) / self.r)
    }

    /// `alpha D_{xi_prev} Theta(x, x_prev)`.
    pub fn penalty_term(&self, x: &GridFn<T>) -> Result<T> {
        Ok(self.alpha * self.theta.bregman(x, self.x_prev, self.xi_prev)?)
    }
}

impl<'a, T: Scalar> Objective<T> for InnerProblem<'a, T> {
    fn value(&self, x: &GridFn<T>) -> Result<T> {
        Ok(self.data_term(x)? + self.penalty_term(x)?)
    }

    /// `F'(x)* J_r(F(x) - y) + alpha (grad Theta(x) - xi_prev)`.
    fn value_and_gradient(&self, x: &GridFn<T>) -> Result<(T, GridFn<T>)> {
        let res = self.op.apply(x)?.sub(self.ydelta)?;
        let data = res.norm().powf(self.r) / self.r;
        let value = data + self.penalty_term(x)?;
        let fit = self.op.adjoint(x, &duality_map(&res, self.r)?)?;
        let grad = self
            .theta
            .gradient(x)?
            .sub(self.xi_prev)?
            .scale(self.alpha)?
            .add(&fit)?;
        Ok((value, grad))
    }

    /// `|Phi| + alpha (Theta(x) + Theta(x_prev) + |<xi_prev, x - x_prev>|)`.
    fn value_scale(&self, x: &GridFn<T>, value: T) -> Result<T> {
        let lin = pairing(self.xi_prev, &x.sub(self.x_prev)?)?.abs();
        let theta = self.theta.value(x)? + self.theta.value(self.x_prev)?;
        Ok(value.abs() + self.alpha * (theta + lin))
    }

    /// `alpha` times the lagged curvature of `Theta` plus `gamma W`, where
    /// `gamma` is the data-term curvature along the constant function. Only
    /// built when the penalty has a TV part.
    fn preconditioner(&self, x: &GridFn<T>) -> Result<Option<Preconditioner<T>>> {
        if self.theta.b() == T::zero() {
            return Ok(None);
        }
        let one = GridFn::from_fn(x.space().clone(), Variance::Primal, |_| T::one())?;
        let d1 = self.op.deriv(x, &one)?.l2_norm();
        let mut gamma = d1 * d1 / x.space().measure();
        if self.r != lit(2.0) {
            let res = self.op.apply(x)?.sub(self.ydelta)?.norm();
            let f = (self.r - T::one()) * res.powf(self.r - lit(2.0));
            if f.is_finite() && f > T::zero() {
                gamma *= f;
            }
        }
        let mut m = self.theta.lagged_curvature(x)?;
        m.scale(self.alpha);
        let w: Vec<T> = x.space().weights().iter().map(|&wi| gamma * wi).collect();
        m.add_diagonal(&w);
        Ok(m.cholesky().ok().map(Preconditioner::new))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSettings {
    /// Stop once `|grad| <= grad_tol_rel * max(1, |grad(x_start)|)`.
    pub grad_tol_rel: f64,
    pub max_iters: usize,
    /// Restart with steepest descent every this many iterations; `None` uses
    /// the problem dimension.
    pub restart_period: Option<usize>,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Route linear operators with a quadratic penalty and `r = 2` to linear CG
    /// on the normal equations.
    pub linear_route: bool,
    /// Use the objective's preconditioner when it offers one.
    pub precondition: bool,
    /// Rebuild the preconditioner (and restart) this often.
    pub precond_refresh: usize,
}

impl Default for InnerSettings {
    fn default() -> Self {
        InnerSettings {
            grad_tol_rel: 1e-8,
            max_iters: 2000,
            restart_period: None,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 50,
            linear_route: false,
            precondition: true,
            precond_refresh: 20,
        }
    }
}

impl InnerSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol_rel > 0.0) {
            return Err(param("grad_tol_rel", "must be positive"));
        }
        if self.max_iters == 0 || self.max_backtracks == 0 {
            return Err(param("max_iters", "iteration caps must be positive"));
        }
        if self.restart_period == Some(0) || self.precond_refresh == 0 {
            return Err(param("restart_period", "must be positive"));
        }
        if !(self.armijo > 0.0 && self.armijo < 0.5) {
            return Err(param("armijo", "must lie in (0, 1/2)"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(param("backtrack", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Per-iteration record of the inner solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord<T> {
    pub value: T,
    /// `<grad, d>` of the direction searched from this point.
    pub slope: T,
    pub step: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerStats<T> {
    pub iterations: usize,
    pub evaluations: usize,
    pub backtracks: usize,
    pub restarts: usize,
    pub initial_value: T,
    pub final_value: T,
    pub initial_grad_norm: T,
    pub final_grad_norm: T,
    pub converged: bool,
    pub hit_max_iters: bool,
    pub line_search_failed: bool,
    pub trace: Vec<IterRecord<T>>,
}

impl<T: Scalar> InnerStats<T> {
    pub fn warning(&self) -> bool {
        self.hit_max_iters || self.line_search_failed
    }
}

struct Point<T> {
    x: GridFn<T>,
    f: T,
    g: GridFn<T>,
}

/// Minimizes `obj` from `x_start` with the modified Fletcher-Reeves method.
///
/// Always returns the best iterate found; non-convergence is reported through
/// the flags in [`InnerStats`].
pub fn minimize<T: Scalar, O: Objective<T> + ?Sized>(
    obj: &O,
    settings: &InnerSettings,
    x_start: &GridFn<T>,
) -> Result<(GridFn<T>, InnerStats<T>)> {
    settings.validate()?;
    let (f0, g0) = obj.value_and_gradient(x_start)?;
    let gnorm0 = g0.l2_norm();
    let tol = lit::<T>(settings.grad_tol_rel) * gnorm0.max(T::one());
    let restart_period = settings.restart_period.unwrap_or(x_start.len()).max(1);
    let c1: T = lit(settings.armijo);
    let shrink: T = lit(settings.backtrack);

    let mut stats = InnerStats {
        iterations: 0,
        evaluations: 1,
        backtracks: 0,
        restarts: 0,
        initial_value: f0,
        final_value: f0,
        initial_grad_norm: gnorm0,
        final_grad_norm: gnorm0,
        converged: gnorm0 <= tol,
        hit_max_iters: false,
        line_search_failed: false,
        trace: Vec::new(),
    };
    if stats.converged {
        return Ok((x_start.clone(), stats));
    }

    let precond_at = |x: &GridFn<T>| -> Result<Option<Preconditioner<T>>> {
        if settings.precondition {
            obj.preconditioner(x)
        } else {
            Ok(None)
        }
    };
    let direction = |pc: &Option<Preconditioner<T>>, g: &GridFn<T>| -> Result<GridFn<T>> {
        match pc {
            Some(m) => m.apply(g),
            None => Ok(g.clone().with_variance(Variance::Primal)),
        }
    };

    let mut cur = Point {
        x: x_start.clone(),
        f: f0,
        g: g0,
    };
    let mut pc = precond_at(&cur.x)?;
    let z0 = direction(&pc, &cur.g)?;
    let mut gz = cur.g.inner(&z0)?;
    let mut d = z0.scale(-T::one())?;
    let mut slope = -gz;
    let mut prev: Option<(T, T)> = None; // (step, slope) of the last search
    let mut since_restart = 0usize;
    let mut since_refresh = 0usize;

    loop {
        if stats.iterations >= settings.max_iters {
            stats.hit_max_iters = true;
            break;
        }
        if !(slope < T::zero()) {
            // unreachable in exact arithmetic; also guards a non-positive <g, z>
            pc = None;
            let z = direction(&pc, &cur.g)?;
            gz = cur.g.inner(&z)?;
            d = z.scale(-T::one())?;
            slope = -gz;
            stats.restarts += 1;
            since_restart = 0;
        }

        let s0 = match prev {
            Some((s, sl)) => s * sl / slope,
            None => T::one() / d.l2_norm(),
        };

        let noise = lit::<T>(ROUNDOFF_ULPS) * T::epsilon() * obj.value_scale(&cur.x, cur.f)?;
        let Some((step, next)) = line_search(
            obj, &cur, &d, slope, s0, noise, c1, shrink, settings, &mut stats,
        )?
        else {
            stats.line_search_failed = true;
            break;
        };
        stats.trace.push(IterRecord {
            value: cur.f,
            slope,
            step,
        });
        stats.iterations += 1;
        since_restart += 1;
        since_refresh += 1;

        let y = next.g.sub(&cur.g)?;
        prev = Some((step, slope));
        cur = next;

        if cur.g.l2_norm() <= tol {
            stats.converged = true;
            break;
        }

        let refresh = pc.is_some() && since_refresh >= settings.precond_refresh;
        if refresh {
            pc = precond_at(&cur.x)?;
            since_refresh = 0;
        }
        let z_new = direction(&pc, &cur.g)?;
        let gz_new = cur.g.inner(&z_new)?;
        if refresh || since_restart >= restart_period {
            d = z_new.scale(-T::one())?;
            stats.restarts += 1;
            since_restart = 0;
        } else {
            let theta = d.inner(&y)? / gz;
            let beta = gz_new / gz;
            d = GridFn::lincomb(&[beta, -theta], &[&d, &z_new])?;
        }
        gz = gz_new;
        slope = cur.g.inner(&d)?;
    }

    stats.final_value = cur.f;
    stats.final_grad_norm = cur.g.l2_norm();
    Ok((cur.x, stats))
}

/// Rise of `f` tolerated by the derivative test, in ulps of
/// [`Objective::value_scale`]. Near the minimizer the true decrease drops
/// below the rounding of `f` itself.
const ROUNDOFF_ULPS: f64 = 16.0;

/// Finds a step along `d` from `cur`.
///
/// The trial step `s0` is evaluated with its gradient; the secant of the
/// directional derivative then gives the candidate `s0 * slope / (slope - slope(s0))`,
/// the exact minimizer on quadratics and, unlike interpolation of function
/// values, still accurate when the decrease is at the rounding level of `f`.
/// A point is accepted under the Armijo condition, or when `f` has not
/// increased beyond its rounding level `noise` and the
/// directional derivative satisfies the derivative form of that condition,
/// `slope(s) <= (1 - 2 c1) |slope|`. Otherwise the step is halved (by
/// `backtrack`) from the smaller of the two.
#[allow(clippy::too_many_arguments)]
fn line_search<T: Scalar, O: Objective<T> + ?Sized>(
    obj: &O,
    cur: &Point<T>,
    d: &GridFn<T>,
    slope: T,
    s0: T,
    noise: T,
    c1: T,
    shrink: T,
    settings: &InnerSettings,
    stats: &mut InnerStats<T>,
) -> Result<Option<(T, Point<T>)>> {
    let f0 = cur.f;
    let flat = (T::one() - c1 - c1) * slope.abs();
    let accept = |p: &Point<T>, s: T| -> Result<bool> {
        if p.f <= f0 + c1 * s * slope {
            return Ok(true);
        }
        Ok(p.f <= f0 + noise && p.g.inner(d)? <= flat)
    };
    let eval = |s: T, stats: &mut InnerStats<T>| -> Result<Option<Point<T>>> {
        stats.evaluations += 1;
        let x = cur.x.axpy(s, d)?;
        // points outside the operator's domain count as +inf
        match obj.value_and_gradient(&x) {
            Ok((f, g)) if f.is_finite() => Ok(Some(Point { x, f, g })),
            _ => Ok(None),
        }
    };

    let s0 = if s0.is_finite() && s0 > T::zero() {
        s0
    } else {
        T::one()
    };
    let mut upper = s0;
    if let Some(p) = eval(s0, stats)? {
        let ok0 = accept(&p, s0)?;
        let slope1 = p.g.inner(d)?;
        let candidate = s0 * slope / (slope - slope1);
        let usable = slope1 > slope && candidate.is_finite() && candidate > T::zero();
        if usable && (candidate - s0).abs() > lit::<T>(1e-12) * s0 {
            if let Some(q) = eval(candidate, stats)? {
                if accept(&q, candidate)? {
                    return Ok(Some((candidate, q)));
                }
            }
            upper = candidate.min(s0);
        }
        if ok0 {
            return Ok(Some((s0, p)));
        }
    }

    let mut s = upper;
    for _ in 0..settings.max_backtracks {
        s *= shrink;
        stats.backtracks += 1;
        if let Some(p) = eval(s, stats)? {
            if accept(&p, s)? {
                return Ok(Some((s, p)));
            }
        }
    }
    Ok(None)
}

/// Linear conjugate gradients on `(A*A + 2 mu alpha) x = A* y + alpha xi_prev`,
/// valid for linear `F`, `Theta = mu |x|^2` and `r = 2`.
pub fn minimize_linear<T: Scalar>(
    p: &InnerProblem<'_, T>,
    settings: &InnerSettings,
    x_start: &GridFn<T>,
) -> Result<(GridFn<T>, InnerStats<T>)> {
    use crate::penalties::PenaltyKind;
    if !p.op.is_linear() || p.theta.kind() != PenaltyKind::Quadratic || p.r != lit(2.0) {
        return Err(param(
            "linear_route",
            "needs a linear operator, quadratic penalty and r = 2",
        ));
    }
    settings.validate()?;
    let shift = lit::<T>(2.0) * p.theta.mu() * p.alpha;
    let normal = |v: &GridFn<T>| -> Result<GridFn<T>> {
        let av = p.op.apply(v)?;
        let aav = p.op.adjoint(v, &av.with_variance(Variance::Dual))?;
        aav.with_variance(Variance::Primal).axpy(shift, v)
    };

    let (f0, g0) = p.value_and_gradient(x_start)?;
    let gnorm0 = g0.l2_norm();
    let tol = lit::<T>(settings.grad_tol_rel) * gnorm0.max(T::one());
    let mut x = x_start.clone();
    // residual of the normal equations equals minus the gradient
    let mut res = g0.scale(-T::one())?.with_variance(Variance::Primal);
    let mut dir = res.clone();
    let mut rr = res.inner(&res)?;
    let mut iterations = 0;
    let mut evaluations = 1;
    let mut trace = Vec::new();
    let mut f = f0;
    while rr.sqrt() > tol && iterations < settings.max_iters {
        let q = normal(&dir)?;
        evaluations += 1;
        let step = rr / dir.inner(&q)?;
        trace.push(IterRecord {
            value: f,
            slope: -rr,
            step,
        });
        x = x.axpy(step, &dir)?;
        res = res.axpy(-step, &q)?;
        let rr_new = res.inner(&res)?;
        dir = res.axpy(rr_new / rr, &dir)?;
        rr = rr_new;
        iterations += 1;
        f = p.value(&x)?;
    }
    let (fx, gx) = p.value_and_gradient(&x)?;
    let gn = gx.l2_norm();
    Ok((
        x,
        InnerStats {
            iterations,
            evaluations: evaluations + 1,
            backtracks: 0,
            restarts: 0,
            initial_value: f0,
            final_value: fx,
            initial_grad_norm: gnorm0,
            final_grad_norm: gn,
            converged: gn <= tol || rr.sqrt() <= tol,
            hit_max_iters: iterations >= settings.max_iters && rr.sqrt() > tol,
            line_search_failed: false,
            trace,
        },
    ))
}

/// Dispatches to [`minimize_linear`] when enabled and applicable, otherwise
/// to [`minimize`].
pub fn solve_inner<T: Scalar>(
    p: &InnerProblem<'_, T>,
    settings: &InnerSettings,
    x_start: &GridFn<T>,
) -> Result<(GridFn<T>, InnerStats<T>)> {
    use crate::penalties::PenaltyKind;
    p.validate()?;
    if settings.linear_route
        && p.op.is_linear()
        && p.theta.kind() == PenaltyKind::Quadratic
        && p.r == lit(2.0)
    {
        minimize_linear(p, settings, x_start)
    } else {
        minimize(p, settings, x_start)
    }
}
