use std::sync::{Arc, Mutex};

use super::{check_arg, BandedCholesky, ForwardOp};
use crate::error::{param, Error, Result};
use crate::scalar::{lit, Scalar};
use crate::spaces::{GridFn, GridSpace, Variance};

/// Parameter-to-state map `c -> u(c)` of `-Δu + c u = f` in the box with
/// `u = g` on its boundary, discretized by the 5-point stencil.
///
/// The state is returned on the full grid (boundary nodes carry `g`). The
/// parameter lives on the same grid; its boundary values do not enter the
/// discrete equations.
pub struct EllipticOp<T> {
    space: Arc<GridSpace<T>>,
    source: Vec<T>,
    boundary: Vec<T>,
    cache: Mutex<Option<Arc<Solved<T>>>>,
}

struct Solved<T> {
    c: Vec<T>,
    factor: BandedCholesky<T>,
    state: Vec<T>,
}

impl<T: Scalar> std::fmt::Debug for EllipticOp<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EllipticOp")
            .field("dims", &self.space.dims())
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> EllipticOp<T> {
    /// `source` is read at interior nodes, `boundary` at boundary nodes.
    pub fn new(space: Arc<GridSpace<T>>, source: &GridFn<T>, boundary: &GridFn<T>) -> Result<Self> {
        if space.ndim() != 2 {
            return Err(param("space", "elliptic operator needs a 2-D grid"));
        }
        if space.dims().iter().any(|&d| d < 3) {
            return Err(param("space", "need at least one interior node per axis"));
        }
        check_arg(source, &space, Variance::Primal)?;
        check_arg(boundary, &space, Variance::Primal)?;
        Ok(EllipticOp {
            source: source.values().to_vec(),
            boundary: boundary.values().to_vec(),
            space,
            cache: Mutex::new(None),
        })
    }

    fn interior_dims(&self) -> (usize, usize) {
        let d = self.space.dims();
        (d[0] - 2, d[1] - 2)
    }

    fn node(&self, k: usize) -> usize {
        let (mi, _) = self.interior_dims();
        let (i, j) = (k % mi + 1, k / mi + 1);
        self.space.index(i, j)
    }

    fn inv_h2(&self) -> (T, T) {
        let s = self.space.steps();
        (T::one() / (s[0] * s[0]), T::one() / (s[1] * s[1]))
    }

    fn factor(&self, c: &[T]) -> Result<BandedCholesky<T>> {
        let (mi, mj) = self.interior_dims();
        let (ax, ay) = self.inv_h2();
        let diag = lit::<T>(2.0) * (ax + ay);
        BandedCholesky::factor(mi * mj, mi, |k, j| {
            if k == j {
                diag + c[self.node(k)]
            } else if j + 1 == k && k % mi != 0 {
                -ax
            } else if j + mi == k {
                -ay
            } else {
                T::zero()
            }
        })
        .map_err(|e| {
            let (lo, hi) = c
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    let v = v.to_f64().unwrap_or(f64::NAN);
                    (lo.min(v), hi.max(v))
                });
            Error::OperatorEvaluation {
                reason: format!("A(c) is not positive definite: {e}"),
                min: lo,
                max: hi,
            }
        })
    }

    fn solve(&self, c: &GridFn<T>) -> Result<Arc<Solved<T>>> {
        check_arg(c, &self.space, Variance::Primal)?;
        let mut guard = self.cache.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(s) = guard.as_ref() {
            if s.c.as_slice() == c.values() {
                return Ok(s.clone());
            }
        }
        let factor = self.factor(c.values())?;
        let (mi, mj) = self.interior_dims();
        let (ax, ay) = self.inv_h2();
        let nx = self.space.dims()[0];
        let g = &self.boundary;
        let mut rhs: Vec<T> = (0..mi * mj)
            .map(|k| {
                let (i, j) = (k % mi + 1, k / mi + 1);
                let node = self.space.index(i, j);
                let mut b = self.source[node];
                if i == 1 {
                    b += ax * g[node - 1];
                }
                if i == mi {
                    b += ax * g[node + 1];
                }
                if j == 1 {
                    b += ay * g[node - nx];
                }
                if j == mj {
                    b += ay * g[node + nx];
                }
                b
            })
            .collect();
        factor.solve_in_place(&mut rhs);
        let mut state = g.clone();
        for (k, v) in rhs.into_iter().enumerate() {
            state[self.node(k)] = v;
        }
        let solved = Arc::new(Solved {
            c: c.values().to_vec(),
            factor,
            state,
        });
        *guard = Some(solved.clone());
        Ok(solved)
    }

    /// Solves `A(c) z = r` with homogeneous boundary values; `r` is read at
    /// interior nodes and the result is zero on the boundary.
    fn solve_homogeneous(&self, solved: &Solved<T>, r: impl Fn(usize) -> T) -> Vec<T> {
        let (mi, mj) = self.interior_dims();
        let mut rhs: Vec<T> = (0..mi * mj).map(|k| r(self.node(k))).collect();
        solved.factor.solve_in_place(&mut rhs);
        let mut out = vec![T::zero(); self.space.len()];
        for (k, v) in rhs.into_iter().enumerate() {
            out[self.node(k)] = v;
        }
        out
    }
}

impl<T: Scalar> ForwardOp<T> for EllipticOp<T> {
    fn domain(&self) -> &Arc<GridSpace<T>> {
        &self.space
    }

    fn range(&self) -> &Arc<GridSpace<T>> {
        &self.space
    }

    fn is_linear(&self) -> bool {
        false
    }

    fn apply(&self, c: &GridFn<T>) -> Result<GridFn<T>> {
        let solved = self.solve(c)?;
        GridFn::primal(self.space.clone(), solved.state.clone())
    }

    /// `F'(c) h = -A(c)^{-1} (h u(c))`.
    fn deriv(&self, c: &GridFn<T>, h: &GridFn<T>) -> Result<GridFn<T>> {
        check_arg(h, &self.space, Variance::Primal)?;
        let solved = self.solve(c)?;
        let hv = h.values();
        let v = self.solve_homogeneous(&solved, |n| -hv[n] * solved.state[n]);
        GridFn::primal(self.space.clone(), v)
    }

    /// `F'(c)* w = -u(c) A(c)^{-1} w`.
    fn adjoint(&self, c: &GridFn<T>, w: &GridFn<T>) -> Result<GridFn<T>> {
        check_arg(w, &self.space, Variance::Dual)?;
        let solved = self.solve(c)?;
        let wv = w.values();
        let mut z = self.solve_homogeneous(&solved, |n| wv[n]);
        for (zi, &u) in z.iter_mut().zip(&solved.state) {
            *zi = -u * *zi;
        }
        GridFn::dual(self.space.clone(), z)
    }
}
