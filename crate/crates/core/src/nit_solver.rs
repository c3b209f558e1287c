//! Outer nonstationary iterated Tikhonov loop.
//!
//! Each step minimizes `(1/r)||F(x) - y||^r + alpha_n D_{xi_{n-1}} Theta(x, x_{n-1})`
//! (warm-started at `x_{n-1}`) and then updates the dual variable by
//! `xi_n = xi_{n-1} - (1/alpha_n) F'(x_n)* J_r(F(x_n) - y)`. The iteration is
//! stopped by the discrepancy principle or by its variant that returns the
//! last iterate whose residual is still at least `tau * delta`.

use log::{debug, warn};

use crate::error::{param, Result};
use crate::inner_cg::{solve_inner, InnerProblem, InnerSettings, InnerStats};
use crate::operators::ForwardOp;
use crate::penalties::Penalty;
use crate::scalar::{from_usize, lit, Scalar};
use crate::spaces::{duality_map, GridFn, Variance};

/// Regularization parameters `alpha_n`, `n >= 1`. Every variant has
/// `sum 1/alpha_n = inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaSchedule<T> {
    /// `alpha_n = alpha1 * q^(n-1)` with `0 < q <= 1`.
    Geometric {
        alpha1: T,
        q: T,
    },
    Constant {
        alpha: T,
    },
    /// `alpha_n = alpha1 / n`.
    Harmonic {
        alpha1: T,
    },
}

impl<T: Scalar> AlphaSchedule<T> {
    pub fn geometric(alpha1: T, q: T) -> Result<Self> {
        let s = AlphaSchedule::Geometric { alpha1, q };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let (a, q) = match *self {
            AlphaSchedule::Geometric { alpha1, q } => (alpha1, q),
            AlphaSchedule::Constant { alpha } => (alpha, T::one()),
            AlphaSchedule::Harmonic { alpha1 } => (alpha1, T::one()),
        };
        if !(a > T::zero()) || !a.is_finite() {
            return Err(param("alpha1", "must be positive"));
        }
        if !(q > T::zero() && q <= T::one()) {
            return Err(param("q", "geometric ratio must lie in (0, 1]"));
        }
        Ok(())
    }

    /// `alpha_n` for `n >= 1`.
    pub fn alpha(&self, n: usize) -> T {
        assert!(n >= 1, "alpha_n is indexed from 1");
        match *self {
            AlphaSchedule::Geometric { alpha1, q } => alpha1 * q.powi((n - 1) as i32),
            AlphaSchedule::Constant { alpha } => alpha,
            AlphaSchedule::Harmonic { alpha1 } => alpha1 / from_usize(n),
        }
    }

    /// Smallest `c0` with `alpha_n <= c0 alpha_{n+1}` at index `n`.
    pub fn ratio_bound(&self, n: usize) -> T {
        match *self {
            AlphaSchedule::Geometric { q, .. } => T::one() / q,
            AlphaSchedule::Constant { .. } => T::one(),
            AlphaSchedule::Harmonic { .. } => from_usize::<T>(n + 1) / from_usize(n),
        }
    }

    /// `sup_n alpha_n / alpha_{n+1}`.
    pub fn c0(&self) -> T {
        match *self {
            AlphaSchedule::Harmonic { .. } => lit(2.0),
            _ => self.ratio_bound(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StopKind {
    /// First `n` with `||F(x_n) - y|| <= tau delta`.
    Discrepancy,
    /// Last `n` with `||F(x_n) - y|| >= tau delta`.
    Rule41,
}

impl StopKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StopKind::Discrepancy => "discrepancy",
            StopKind::Rule41 => "rule41",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule<T> {
    pub kind: StopKind,
    pub tau: T,
    pub max_outer: usize,
    /// Residual target used when `delta = 0`.
    pub atol_zero: T,
}

impl<T: Scalar> StoppingRule<T> {
    pub fn new(kind: StopKind, tau: T) -> Result<Self> {
        let s = StoppingRule {
            kind,
            tau,
            max_outer: 200,
            atol_zero: lit(1e-10),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > T::one()) || !self.tau.is_finite() {
            return Err(param("tau", format!("must exceed 1, got {}", self.tau)));
        }
        if self.max_outer == 0 {
            return Err(param("max_outer", "must be positive"));
        }
        if !(self.atol_zero >= T::zero()) {
            return Err(param("atol_zero", "must be nonnegative"));
        }
        Ok(())
    }

    /// Smallest admissible `tau` for a tangential cone constant `eta < 1`.
    pub fn tau_threshold(eta: T) -> T {
        (T::one() + eta) / (T::one() - eta)
    }
}

/// One outer iterate.
#[derive(Debug, Clone)]
pub struct NitState<T> {
    pub n: usize,
    pub x: GridFn<T>,
    pub xi: GridFn<T>,
    /// `||F(x_n) - y^delta||`.
    pub residual: T,
    /// `alpha_n`; zero for the initial state.
    pub alpha: T,
    pub inner: Option<InnerStats<T>>,
    pub theta_value: T,
    /// `||xi_n - grad Theta(x_n)||_*`; vanishes at exact inner optimality.
    pub dual_gap: T,
    pub bregman_to_ref: Option<T>,
}

impl<T: Scalar> NitState<T> {
    pub fn inner_warning(&self) -> bool {
        self.inner.as_ref().is_some_and(|s| s.warning())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Termination {
    Discrepancy,
    Rule41,
    MaxOuter,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Discrepancy => "discrepancy",
            Termination::Rule41 => "rule41",
            Termination::MaxOuter => "max_outer",
        }
    }
}

/// Parameters a run was started with.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEcho<T> {
    pub delta: T,
    pub r: T,
    pub schedule: AlphaSchedule<T>,
    pub stop: StoppingRule<T>,
    pub penalty: Penalty<T>,
    pub inner: InnerSettings,
}

#[derive(Debug, Clone)]
pub struct RunReport<T> {
    pub states: Vec<NitState<T>>,
    pub n_delta: usize,
    pub terminated_by: Termination,
    pub x_out: GridFn<T>,
    pub echo: RunEcho<T>,
}

impl<T: Scalar> RunReport<T> {
    pub fn final_state(&self) -> &NitState<T> {
        &self.states[self.n_delta]
    }

    pub fn residuals(&self) -> Vec<T> {
        self.states.iter().map(|s| s.residual).collect()
    }
}

/// Operator, penalty and parameters of a regularization run.
pub struct NitSolver<'a, T: Scalar> {
    pub op: &'a dyn ForwardOp<T>,
    pub theta: Penalty<T>,
    pub r: T,
    pub schedule: AlphaSchedule<T>,
    pub stop: StoppingRule<T>,
    pub inner: InnerSettings,
    /// Reference solution for the Bregman diagnostic recorded in each state.
    pub reference: Option<GridFn<T>>,
}

fn residual<T: Scalar>(op: &dyn ForwardOp<T>, x: &GridFn<T>, y: &GridFn<T>) -> Result<GridFn<T>> {
    op.apply(x)?.sub(y)
}

/// `F'(x)* J_r(F(x) - y)` and `||F(x) - y||`.
pub fn data_gradient<T: Scalar>(
    op: &dyn ForwardOp<T>,
    x: &GridFn<T>,
    ydelta: &GridFn<T>,
    r: T,
) -> Result<(GridFn<T>, T)> {
    let res = residual(op, x, ydelta)?;
    let g = op.adjoint(x, &duality_map(&res, r)?)?;
    Ok((g, res.norm()))
}

/// One outer step from `prev` with parameter `alpha`.
pub fn step<T: Scalar>(
    op: &dyn ForwardOp<T>,
    theta: &Penalty<T>,
    ydelta: &GridFn<T>,
    r: T,
    alpha: T,
    prev: &NitState<T>,
    settings: &InnerSettings,
) -> Result<NitState<T>> {
    let problem = InnerProblem {
        op,
        ydelta,
        theta,
        alpha,
        x_prev: &prev.x,
        xi_prev: &prev.xi,
        r,
    };
    let (x, stats) = solve_inner(&problem, settings, &prev.x)?;
    if stats.warning() {
        warn!(
            "step {}: inner solver stopped early (iters {}, |grad| {:e}, line search failed: {})",
            prev.n + 1,
            stats.iterations,
            stats.final_grad_norm,
            stats.line_search_failed
        );
    }
    let (g, res) = data_gradient(op, &x, ydelta, r)?;
    let xi = prev.xi.axpy(-T::one() / alpha, &g)?;
    let dual_gap = theta.gradient(&x)?.sub(&xi)?.norm();
    Ok(NitState {
        n: prev.n + 1,
        theta_value: theta.value(&x)?,
        x,
        xi,
        residual: res,
        alpha,
        inner: Some(stats),
        dual_gap,
        bregman_to_ref: None,
    })
}

impl<'a, T: Scalar> NitSolver<'a, T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > T::one()) || !self.r.is_finite() {
            return Err(param("r", "need 1 < r < inf"));
        }
        self.schedule.validate()?;
        self.stop.validate()?;
        self.inner.validate()
    }

    fn annotate(&self, mut s: NitState<T>) -> Result<NitState<T>> {
        if let Some(x_ref) = &self.reference {
            s.bregman_to_ref = Some(self.theta.bregman(x_ref, &s.x, &s.xi)?);
        }
        Ok(s)
    }

    /// Initial state `(x0, xi0)` with its residual.
    pub fn initial_state(
        &self,
        ydelta: &GridFn<T>,
        x0: GridFn<T>,
        xi0: GridFn<T>,
    ) -> Result<NitState<T>> {
        if xi0.variance() != Variance::Dual || x0.variance() != Variance::Primal {
            return Err(param("x0/xi0", "x0 must be primal and xi0 dual"));
        }
        let res = residual(self.op, &x0, ydelta)?.norm();
        let dual_gap = self.theta.gradient(&x0)?.sub(&xi0)?.norm();
        self.annotate(NitState {
            n: 0,
            theta_value: self.theta.value(&x0)?,
            x: x0,
            xi: xi0,
            residual: res,
            alpha: T::zero(),
            inner: None,
            dual_gap,
            bregman_to_ref: None,
        })
    }

    /// Runs from `x0 = 0`, `xi0 = 0`.
    pub fn run_from_zero(&self, ydelta: &GridFn<T>, delta: T) -> Result<RunReport<T>> {
        let dom = self.op.domain().clone();
        self.run(
            ydelta,
            delta,
            GridFn::zeros(dom.clone(), Variance::Primal),
            GridFn::zeros(dom, Variance::Dual),
        )
    }

    pub fn run(
        &self,
        ydelta: &GridFn<T>,
        delta: T,
        x0: GridFn<T>,
        xi0: GridFn<T>,
    ) -> Result<RunReport<T>> {
        self.validate()?;
        if !(delta >= T::zero()) || !delta.is_finite() {
            return Err(param("delta", "must be finite and nonnegative"));
        }
        let threshold = if delta > T::zero() {
            self.stop.tau * delta
        } else {
            self.stop.atol_zero
        };
        let echo = RunEcho {
            delta,
            r: self.r,
            schedule: self.schedule,
            stop: self.stop,
            penalty: self.theta,
            inner: self.inner,
        };

        let s0 = self.initial_state(ydelta, x0, xi0)?;
        debug!("n=0 residual={:e} target={:e}", s0.residual, threshold);
        if s0.residual <= threshold {
            let terminated_by = match self.stop.kind {
                StopKind::Discrepancy => Termination::Discrepancy,
                StopKind::Rule41 => Termination::Rule41,
            };
            return Ok(RunReport {
                x_out: s0.x.clone(),
                states: vec![s0],
                n_delta: 0,
                terminated_by,
                echo,
            });
        }

        let mut states = vec![s0];
        for n in 1..=self.stop.max_outer {
            let alpha = self.schedule.alpha(n);
            let prev = states.last().expect("initial state present");
            let s = step(
                self.op,
                &self.theta,
                ydelta,
                self.r,
                alpha,
                prev,
                &self.inner,
            )?;
            let s = self.annotate(s)?;
            debug!(
                "n={n} alpha={alpha:e} residual={:e} inner_iters={} dual_gap={:e}",
                s.residual,
                s.inner.as_ref().map_or(0, |i| i.iterations),
                s.dual_gap
            );
            let res = s.residual;
            states.push(s);
            match self.stop.kind {
                StopKind::Discrepancy if res <= threshold => {
                    return Ok(RunReport {
                        x_out: states[n].x.clone(),
                        states,
                        n_delta: n,
                        terminated_by: Termination::Discrepancy,
                        echo,
                    });
                }
                StopKind::Rule41 if res < threshold => {
                    return Ok(RunReport {
                        x_out: states[n - 1].x.clone(),
                        states,
                        n_delta: n - 1,
                        terminated_by: Termination::Rule41,
                        echo,
                    });
                }
                _ => {}
            }
        }

        warn!(
            "no stop after {} outer steps; returning the smallest-residual iterate",
            self.stop.max_outer
        );
        let best = states
            .iter()
            .enumerate()
            .min_by(|a, b| {
                a.1.residual
                    .partial_cmp(&b.1.residual)
                    .expect("finite residuals")
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        Ok(RunReport {
            x_out: states[best].x.clone(),
            states,
            n_delta: best,
            terminated_by: Termination::MaxOuter,
            echo,
        })
    }
}

/// `D_{xi_n} Theta(x_ref, x_n)` along a run, for `n = 0..=n_delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct BregmanSeries<T> {
    pub values: Vec<T>,
    /// Largest increase `D_n - D_{n-1}` over `1 <= n < n_delta` (zero if none).
    pub max_increase: T,
}

impl<T: Scalar> BregmanSeries<T> {
    /// `D(n_delta) - D(n_delta - 1)`, if `n_delta >= 1`.
    pub fn final_increase(&self) -> Option<T> {
        let k = self.values.len();
        (k >= 2).then(|| self.values[k - 1] - self.values[k - 2])
    }
}

pub fn diagnostics_bregman<T: Scalar>(
    report: &RunReport<T>,
    theta: &Penalty<T>,
    x_ref: &GridFn<T>,
) -> Result<BregmanSeries<T>> {
    let values = report.states[..=report.n_delta]
        .iter()
        .map(|s| theta.bregman(x_ref, &s.x, &s.xi))
        .collect::<Result<Vec<T>>>()?;
    let max_increase = values
        .windows(2)
        .take(report.n_delta.saturating_sub(1))
        .map(|w| w[1] - w[0])
        .fold(T::zero(), |m, v| m.max(v));
    Ok(BregmanSeries {
        values,
        max_increase,
    })
}

/// Admissible last-step increase `(1 + eta) tau^{r-1} delta^r / alpha_{n_delta}`.
pub fn final_step_allowance<T: Scalar>(report: &RunReport<T>, eta: T) -> Option<T> {
    let n = report.n_delta;
    if n == 0 {
        return None;
    }
    let e = &report.echo;
    Some(
        (T::one() + eta) * e.stop.tau.powf(e.r - T::one()) * e.delta.powf(e.r)
            / e.schedule.alpha(n),
    )
}

/// Largest relative deviation between `xi_n - xi_0` and the telescoped sum
/// `-sum_{k<=n} (1/alpha_k) F'(x_k)* J_r(F(x_k) - y)` recomputed from the stored
/// iterates.
pub fn dual_bookkeeping_error<T: Scalar>(
    report: &RunReport<T>,
    op: &dyn ForwardOp<T>,
    ydelta: &GridFn<T>,
) -> Result<T> {
    let r = report.echo.r;
    let xi0 = &report.states[0].xi;
    let mut acc = GridFn::zeros(xi0.space().clone(), Variance::Dual);
    let mut worst = T::zero();
    for s in &report.states[1..] {
        let (g, _) = data_gradient(op, &s.x, ydelta, r)?;
        acc = acc.axpy(-T::one() / s.alpha, &g)?;
        let actual = s.xi.sub(xi0)?;
        let err = actual.sub(&acc)?.norm() / acc.norm().max(T::min_positive_value());
        worst = worst.max(err);
    }
    Ok(worst)
}

/// One row of a noise-level sweep.
#[derive(Debug, Clone)]
pub struct StudyRow<T> {
    pub delta: T,
    pub n_delta: Option<usize>,
    pub residual: Option<T>,
    pub error: Option<T>,
    pub theta_value: Option<T>,
    pub bregman: Option<T>,
    pub terminated_by: Option<Termination>,
    pub failure: Option<String>,
}

/// Runs `run_at(delta)` for every noise level and tabulates the quality of the
/// returned iterate against `x_dagger`. Failures are recorded per row. Rows are
/// sorted by decreasing `delta`.
pub fn convergence_study<T: Scalar>(
    deltas: &[T],
    theta: &Penalty<T>,
    x_dagger: &GridFn<T>,
    mut run_at: impl FnMut(T) -> Result<RunReport<T>>,
) -> Vec<StudyRow<T>> {
    let mut sorted = deltas.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sorted
        .into_iter()
        .map(|delta| {
            let outcome = run_at(delta).and_then(|rep| {
                let s = rep.final_state();
                let err = rep.x_out.sub(x_dagger)?.norm();
                let breg = theta.bregman(x_dagger, &s.x, &s.xi)?;
                Ok((
                    rep.n_delta,
                    s.residual,
                    err,
                    s.theta_value,
                    breg,
                    rep.terminated_by,
                ))
            });
            match outcome {
                Ok((n, res, err, th, br, term)) => StudyRow {
                    delta,
                    n_delta: Some(n),
                    residual: Some(res),
                    error: Some(err),
                    theta_value: Some(th),
                    bregman: Some(br),
                    terminated_by: Some(term),
                    failure: None,
                },
                Err(e) => StudyRow {
                    delta,
                    n_delta: None,
                    residual: None,
                    error: None,
                    theta_value: None,
                    bregman: None,
                    terminated_by: None,
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect()
}
