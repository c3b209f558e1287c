//! Uniformly convex penalty functionals
//! `Theta(x) = mu ||x||_2^2 + a int sqrt(x^2 + eps) + b int sqrt(|Dx|^2 + eps)`.
//!
//! The non-smooth `L^1` and total-variation terms are always evaluated through
//! their `eps`-smoothed surrogates. Total variation uses forward differences on
//! the grid cells: each cell contributes `area * sqrt(|D x|^2 + eps)` with the
//! difference quotients anchored at the cell's lower corner, so no ghost nodes
//! are needed at the boundary.

use crate::error::{param, Error, Result};
use crate::operators::SymBand;
use crate::scalar::{lit, Scalar};
use crate::spaces::{GridFn, GridSpace, Variance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PenaltyKind {
    Quadratic,
    L2L1,
    L2Tv,
}

impl PenaltyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PenaltyKind::Quadratic => "quadratic",
            PenaltyKind::L2L1 => "l2_l1",
            PenaltyKind::L2Tv => "l2_tv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty<T> {
    kind: PenaltyKind,
    mu: T,
    a: T,
    b: T,
    eps: T,
}

impl<T: Scalar> Penalty<T> {
    pub fn new(kind: PenaltyKind, mu: T, a: T, b: T, eps: T) -> Result<Self> {
        if !(mu > T::zero()) || !mu.is_finite() {
            return Err(param("mu", format!("must be positive, got {mu}")));
        }
        if !(a >= T::zero()) || !(b >= T::zero()) || !a.is_finite() || !b.is_finite() {
            return Err(param("a/b", "coefficients must be nonnegative"));
        }
        match kind {
            PenaltyKind::Quadratic if a != T::zero() || b != T::zero() => {
                return Err(param("kind", "quadratic penalty requires a = b = 0"))
            }
            PenaltyKind::L2L1 if b != T::zero() => {
                return Err(param("kind", "l2_l1 penalty requires b = 0"))
            }
            PenaltyKind::L2Tv if a != T::zero() => {
                return Err(param("kind", "l2_tv penalty requires a = 0"))
            }
            _ => {}
        }
        if (a > T::zero() || b > T::zero()) && !(eps > T::zero()) {
            return Err(param(
                "eps",
                "smoothing must be positive for non-smooth terms",
            ));
        }
        if !(eps >= T::zero()) || !eps.is_finite() {
            return Err(param("eps", "must be finite and nonnegative"));
        }
        Ok(Penalty {
            kind,
            mu,
            a,
            b,
            eps,
        })
    }

    /// `mu ||x||^2`.
    pub fn quadratic(mu: T) -> Result<Self> {
        Self::new(PenaltyKind::Quadratic, mu, T::zero(), T::zero(), T::zero())
    }

    /// `mu ||x||^2 + a int sqrt(x^2 + eps)`.
    pub fn l2_l1(mu: T, a: T, eps: T) -> Result<Self> {
        Self::new(PenaltyKind::L2L1, mu, a, T::zero(), eps)
    }

    /// `mu ||x||^2 + b int sqrt(|Dx|^2 + eps)`.
    pub fn l2_tv(mu: T, b: T, eps: T) -> Result<Self> {
        Self::new(PenaltyKind::L2Tv, mu, T::zero(), b, eps)
    }

    pub fn kind(&self) -> PenaltyKind {
        self.kind
    }
    pub fn mu(&self) -> T {
        self.mu
    }
    pub fn a(&self) -> T {
        self.a
    }
    pub fn b(&self) -> T {
        self.b
    }
    pub fn eps(&self) -> T {
        self.eps
    }

    /// Value of the smoothed functional.
    pub fn value(&self, x: &GridFn<T>) -> Result<T> {
        expect_primal(x)?;
        let w = x.space().weights();
        let mut quad = T::zero();
        let mut l1 = T::zero();
        for (&wi, &xi) in w.iter().zip(x.values()) {
            quad += wi * xi * xi;
            if self.a > T::zero() {
                l1 += wi * (xi * xi + self.eps).sqrt();
            }
        }
        let mut v = self.mu * quad + self.a * l1;
        if self.b > T::zero() {
            let mut tv = T::zero();
            for_each_cell(x.space(), x.values(), |_, area, d| {
                tv += area * (norm_sq(&d) + self.eps).sqrt();
            });
            v += self.b * tv;
        }
        Ok(v)
    }

    /// Gradient of the smoothed functional in the dual representation, so that
    /// `<gradient(x), h>` is the directional derivative of [`Penalty::value`].
    pub fn gradient(&self, x: &GridFn<T>) -> Result<GridFn<T>> {
        expect_primal(x)?;
        let two_mu = self.mu + self.mu;
        let mut g: Vec<T> = x
            .values()
            .iter()
            .map(|&xi| {
                let mut gi = two_mu * xi;
                if self.a > T::zero() {
                    gi += self.a * xi / (xi * xi + self.eps).sqrt();
                }
                gi
            })
            .collect();
        if self.b > T::zero() {
            let space = x.space();
            let w = space.weights();
            let mut partial = vec![T::zero(); x.len()];
            let steps = space.steps();
            for_each_cell(space, x.values(), |nodes, area, d| {
                let s = (norm_sq(&d) + self.eps).sqrt();
                for (axis, &h) in steps.iter().enumerate() {
                    let c = area * d[axis] / (s * h);
                    partial[nodes[0]] -= c;
                    partial[nodes[axis + 1]] += c;
                }
            });
            for ((gi, &pi), &wi) in g.iter_mut().zip(&partial).zip(w) {
                *gi += self.b * pi / wi;
            }
        }
        GridFn::dual(x.space().clone(), g)
    }

    /// `D_{grad(x)} Theta(xbar, x)` evaluated term by term without cancellation.
    pub fn bregman_at_gradient(&self, xbar: &GridFn<T>, x: &GridFn<T>) -> Result<T> {
        expect_primal(xbar)?;
        expect_primal(x)?;
        if !xbar.same_space(x) {
            return Err(Error::SpaceMismatch);
        }
        let w = x.space().weights();
        let mut quad = T::zero();
        let mut l1 = T::zero();
        for ((&wi, &u), &v) in w.iter().zip(xbar.values()).zip(x.values()) {
            let e = u - v;
            quad += wi * e * e;
            if self.a > T::zero() {
                // sqrt(u^2+eps) - sqrt(v^2+eps) - v (u-v) / sqrt(v^2+eps)
                let su = (u * u + self.eps).sqrt();
                let sv = (v * v + self.eps).sqrt();
                l1 += wi * e * e * self.eps
                    / (sv * sqrt_pair_sum(su, sv, u * v, T::zero(), u * u + v * v, self.eps));
            }
        }
        let mut d = self.mu * quad + self.a * l1;
        if self.b > T::zero() {
            let mut cells_bar = Vec::new();
            for_each_cell(xbar.space(), xbar.values(), |_, _, db| cells_bar.push(db));
            let mut tv = T::zero();
            let mut idx = 0;
            for_each_cell(x.space(), x.values(), |_, area, dv| {
                let du = cells_bar[idx];
                idx += 1;
                let su = (norm_sq(&du) + self.eps).sqrt();
                let sv = (norm_sq(&dv) + self.eps).sqrt();
                let diff = [du[0] - dv[0], du[1] - dv[1]];
                let cross = du[0] * dv[1] - du[1] * dv[0];
                let dot = du[0] * dv[0] + du[1] * dv[1];
                let num = cross * cross + self.eps * norm_sq(&diff);
                let both = norm_sq(&du) + norm_sq(&dv);
                tv += area * num / (sv * sqrt_pair_sum(su, sv, dot, cross, both, self.eps));
            });
            d += self.b * tv;
        }
        Ok(d)
    }

    /// Lagged-diffusivity curvature at `x` in coefficient form: the matrix of
    /// the quadratic model `sum_k c_k |D_k h|^2 / 2` obtained by freezing the
    /// smoothing denominators at `x`. Symmetric positive definite when
    /// `mu > 0`; band width 0 without TV, 1 in 1-D, `nx` in 2-D.
    pub fn lagged_curvature(&self, x: &GridFn<T>) -> Result<SymBand<T>> {
        expect_primal(x)?;
        let space = x.space();
        let bw = if self.b > T::zero() {
            if space.ndim() == 1 {
                1
            } else {
                space.dims()[0]
            }
        } else {
            0
        };
        let mut m = SymBand::zeros(x.len(), bw);
        let two_mu = self.mu + self.mu;
        let diag: Vec<T> = space
            .weights()
            .iter()
            .zip(x.values())
            .map(|(&w, &xi)| {
                let mut c = two_mu;
                if self.a > T::zero() {
                    c += self.a / (xi * xi + self.eps).sqrt();
                }
                w * c
            })
            .collect();
        m.add_diagonal(&diag);
        if self.b > T::zero() {
            let steps = space.steps();
            for_each_cell(space, x.values(), |nodes, area, d| {
                let s = (norm_sq(&d) + self.eps).sqrt();
                for (axis, &h) in steps.iter().enumerate() {
                    let c = self.b * area / (s * h * h);
                    let (k, l) = (nodes[0], nodes[axis + 1]);
                    m.add(k, k, c);
                    m.add(l, l, c);
                    m.add(l, k, -c);
                }
            });
        }
        Ok(m)
    }

    /// `D_xi Theta(xbar, x) = Theta(xbar) - Theta(x) - <xi, xbar - x>`.
    ///
    /// Evaluated as the cancellation-free distance at `grad(x)` plus the
    /// correction `<grad(x) - xi, xbar - x>`.
    pub fn bregman(&self, xbar: &GridFn<T>, x: &GridFn<T>, xi: &GridFn<T>) -> Result<T> {
        let base = self.bregman_at_gradient(xbar, x)?;
        let gap = self.gradient(x)?.sub(xi)?;
        Ok(base + gap.inner(&xbar.sub(x)?)?)
    }

    /// `|D_xi(x2, x) - D_xi(x1, x) - D_xi1(x2, x1) - <xi1 - xi, x2 - x1>|`.
    pub fn three_point(
        &self,
        x2: &GridFn<T>,
        x1: &GridFn<T>,
        x: &GridFn<T>,
        xi1: &GridFn<T>,
        xi: &GridFn<T>,
    ) -> Result<T> {
        let lhs = self.bregman(x2, x, xi)? - self.bregman(x1, x, xi)?;
        let rhs = self.bregman(x2, x1, xi1)? + xi1.sub(xi)?.inner(&x2.sub(x1)?)?;
        Ok((lhs - rhs).abs())
    }
}

fn expect_primal<T: Scalar>(x: &GridFn<T>) -> Result<()> {
    if x.variance() != Variance::Primal {
        return Err(Error::VarianceMismatch {
            expected: "primal",
            found: x.variance().as_str(),
        });
    }
    Ok(())
}

#[inline]
/// `su sv + dot + eps` for `su = sqrt(|u|^2 + eps)`, `sv = sqrt(|v|^2 + eps)`,
/// rationalized when `dot < 0` so that antiparallel `u`, `v` do not cancel.
/// `both = |u|^2 + |v|^2`.
fn sqrt_pair_sum<T: Scalar>(su: T, sv: T, dot: T, cross: T, both: T, eps: T) -> T {
    let p = su * sv + eps;
    if dot >= T::zero() {
        return p + dot;
    }
    // (p + dot)(p - dot) = cross^2 + eps (both + 2 su sv + 2 eps)
    let two: T = lit(2.0);
    (cross * cross + eps * (both + two * su * sv + two * eps)) / (p - dot)
}

fn norm_sq<T: Scalar>(d: &[T; 2]) -> T {
    d[0] * d[0] + d[1] * d[1]
}

/// Visits every grid cell with `(nodes, area, forward differences)`; `nodes[0]`
/// is the anchor, `nodes[1 + axis]` its neighbour along `axis`. In 1-D the
/// second difference component is zero.
fn for_each_cell<T: Scalar>(
    space: &GridSpace<T>,
    values: &[T],
    mut f: impl FnMut([usize; 3], T, [T; 2]),
) {
    let steps = space.steps();
    match *space.dims() {
        [n] => {
            let h = steps[0];
            for i in 0..n - 1 {
                let d = (values[i + 1] - values[i]) / h;
                f([i, i + 1, i + 1], h, [d, T::zero()]);
            }
        }
        [nx, ny] => {
            let (hx, hy) = (steps[0], steps[1]);
            let area = hx * hy;
            for j in 0..ny - 1 {
                for i in 0..nx - 1 {
                    let k = i + nx * j;
                    let dx = (values[k + 1] - values[k]) / hx;
                    let dy = (values[k + nx] - values[k]) / hy;
                    f([k, k + 1, k + nx], area, [dx, dy]);
                }
            }
        }
        _ => unreachable!(),
    }
}
