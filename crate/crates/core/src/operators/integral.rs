use std::sync::Arc;

use super::{check_arg, ForwardOp};
use crate::error::{param, Result};
use crate::scalar::{lit, Scalar};
use crate::spaces::{GridFn, GridSpace, Variance};

/// `(Ax)(s) = int_0^1 K(s, t) x(t) dt` with `K(s, t) = 40 s (1 - t)` for
/// `s <= t` and `40 t (1 - s)` otherwise, discretized by the trapezoidal rule.
///
/// `K` is forty times the Green's function of `-d^2/ds^2` with homogeneous
/// Dirichlet conditions, so `-(Ax)'' = 40 x`.
#[derive(Debug, Clone)]
pub struct IntegralOp<T> {
    space: Arc<GridSpace<T>>,
    /// Row-major `K(s_i, t_j)`, unweighted.
    kernel: Vec<T>,
}

impl<T: Scalar> IntegralOp<T> {
    /// Operator on `L^p[0, 1]` discretized with `n` subintervals.
    pub fn new(n: usize, exponent: T) -> Result<Self> {
        let space = GridSpace::interval(n, exponent)?;
        Self::on_space(space)
    }

    pub fn on_space(space: Arc<GridSpace<T>>) -> Result<Self> {
        if space.ndim() != 1 {
            return Err(param("space", "integral operator needs a 1-D grid"));
        }
        let m = space.len();
        let nodes: Vec<T> = (0..m).map(|k| space.coords(k)[0]).collect();
        let forty: T = lit(40.0);
        let mut kernel = Vec::with_capacity(m * m);
        for &s in &nodes {
            for &t in &nodes {
                let v = if s <= t {
                    forty * s * (T::one() - t)
                } else {
                    forty * t * (T::one() - s)
                };
                kernel.push(v);
            }
        }
        Ok(IntegralOp { space, kernel })
    }

    pub fn kernel(&self, i: usize, j: usize) -> T {
        self.kernel[i * self.space.len() + j]
    }

    fn weighted_matvec(&self, v: &[T]) -> Vec<T> {
        let m = self.space.len();
        let wv: Vec<T> = self
            .space
            .weights()
            .iter()
            .zip(v)
            .map(|(&w, &x)| w * x)
            .collect();
        self.kernel
            .chunks_exact(m)
            .map(|row| {
                row.iter()
                    .zip(&wv)
                    .fold(T::zero(), |acc, (&k, &x)| acc + k * x)
            })
            .collect()
    }
}

impl<T: Scalar> ForwardOp<T> for IntegralOp<T> {
    fn domain(&self) -> &Arc<GridSpace<T>> {
        &self.space
    }

    fn range(&self) -> &Arc<GridSpace<T>> {
        &self.space
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn apply(&self, x: &GridFn<T>) -> Result<GridFn<T>> {
        check_arg(x, &self.space, Variance::Primal)?;
        GridFn::primal(self.space.clone(), self.weighted_matvec(x.values()))
    }

    fn deriv(&self, x: &GridFn<T>, h: &GridFn<T>) -> Result<GridFn<T>> {
        check_arg(x, &self.space, Variance::Primal)?;
        self.apply(h)
    }

    fn adjoint(&self, x: &GridFn<T>, w: &GridFn<T>) -> Result<GridFn<T>> {
        check_arg(x, &self.space, Variance::Primal)?;
        check_arg(w, &self.space, Variance::Dual)?;
        // (A* w)_j = sum_i K(s_i, t_j) w_i W_i; K is symmetric on this grid.
        GridFn::dual(self.space.clone(), self.weighted_matvec(w.values()))
    }
}
