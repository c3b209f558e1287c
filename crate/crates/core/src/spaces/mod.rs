//! Discretized `L^p` spaces on uniform grids.
//!
//! A [`GridSpace`] carries the grid geometry, trapezoidal quadrature weights and
//! the exponent `p`. Elements of the space and of its dual are both stored as
//! [`GridFn`] values; the dual pairing is the quadrature-weighted bilinear form
//! `<xi, x> = sum_i w_i xi_i x_i`, so the dual of the weighted `l^p` norm is the
//! weighted `l^{p*}` norm with `p* = p / (p - 1)`.

mod csv;

use std::sync::Arc;

use crate::error::{param, Error, Result};
use crate::scalar::{from_usize, lit, Scalar};

pub use self::csv::{read_csv, write_csv};

/// Whether a grid function is an element of `X` or of `X*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variance {
    Primal,
    Dual,
}

impl Variance {
    pub fn as_str(self) -> &'static str {
        match self {
            Variance::Primal => "primal",
            Variance::Dual => "dual",
        }
    }
}

/// A uniform 1-D or 2-D grid with trapezoidal weights and an `L^p` exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpace<T> {
    /// Node counts per axis (subdivisions + 1).
    dims: Vec<usize>,
    lower: Vec<T>,
    upper: Vec<T>,
    weights: Vec<T>,
    exponent: T,
}

impl<T: Scalar> GridSpace<T> {
    /// `[0, 1]` split into `subintervals` equal pieces.
    pub fn interval(subintervals: usize, exponent: T) -> Result<Arc<Self>> {
        Self::uniform(&[subintervals], &[T::zero()], &[T::one()], exponent)
    }

    /// `[0, 1]^2` split into `nx * ny` equal squares.
    pub fn unit_square(nx: usize, ny: usize, exponent: T) -> Result<Arc<Self>> {
        Self::uniform(
            &[nx, ny],
            &[T::zero(), T::zero()],
            &[T::one(), T::one()],
            exponent,
        )
    }

    /// Tensor grid over the box `lower..upper` with the given subdivisions per axis.
    pub fn uniform(
        subdivisions: &[usize],
        lower: &[T],
        upper: &[T],
        exponent: T,
    ) -> Result<Arc<Self>> {
        if subdivisions.is_empty() || subdivisions.len() > 2 {
            return Err(param(
                "subdivisions",
                "only 1-D and 2-D grids are supported",
            ));
        }
        if lower.len() != subdivisions.len() || upper.len() != subdivisions.len() {
            return Err(Error::DimensionMismatch {
                expected: subdivisions.len(),
                found: lower.len().min(upper.len()),
            });
        }
        if subdivisions.contains(&0) {
            return Err(param("subdivisions", "every axis needs at least one cell"));
        }
        if !(exponent > T::one()) || !exponent.is_finite() {
            return Err(param(
                "exponent",
                format!("need 1 < p < inf, got {exponent}"),
            ));
        }
        for (lo, hi) in lower.iter().zip(upper) {
            if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
                return Err(param("domain", "upper bound must exceed lower bound"));
            }
        }

        let axis_weights: Vec<Vec<T>> = subdivisions
            .iter()
            .zip(lower.iter().zip(upper))
            .map(|(&n, (&lo, &hi))| {
                let h = (hi - lo) / from_usize(n);
                let half = h * lit(0.5);
                (0..=n)
                    .map(|i| if i == 0 || i == n { half } else { h })
                    .collect()
            })
            .collect();

        let weights = match axis_weights.as_slice() {
            [wx] => wx.clone(),
            [wx, wy] => wy
                .iter()
                .flat_map(|&b| wx.iter().map(move |&a| a * b))
                .collect(),
            _ => unreachable!(),
        };

        Ok(Arc::new(GridSpace {
            dims: subdivisions.iter().map(|n| n + 1).collect(),
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            weights,
            exponent,
        }))
    }

    /// Same grid with a different exponent.
    pub fn with_exponent(&self, exponent: T) -> Result<Arc<Self>> {
        let subdivisions: Vec<usize> = self.dims.iter().map(|d| d - 1).collect();
        Self::uniform(&subdivisions, &self.lower, &self.upper, exponent)
    }

    /// Node counts per axis.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn exponent(&self) -> T {
        self.exponent
    }

    /// `p / (p - 1)`.
    pub fn conjugate_exponent(&self) -> T {
        self.exponent / (self.exponent - T::one())
    }

    /// Mesh width per axis.
    pub fn steps(&self) -> Vec<T> {
        self.dims
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&d, (&lo, &hi))| (hi - lo) / from_usize(d - 1))
            .collect()
    }

    /// Domain measure, i.e. the sum of the quadrature weights.
    pub fn measure(&self) -> T {
        self.lower
            .iter()
            .zip(&self.upper)
            .fold(T::one(), |acc, (&lo, &hi)| acc * (hi - lo))
    }

    /// Flat index of the node with multi-index `(i, j)`; `i` runs fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.dims[0] * j
    }

    /// Coordinates of the node with flat index `k`.
    pub fn coords(&self, k: usize) -> Vec<T> {
        let steps = self.steps();
        match self.dims.as_slice() {
            [_] => vec![self.lower[0] + steps[0] * from_usize(k)],
            [nx, _] => {
                let (i, j) = (k % nx, k / nx);
                vec![
                    self.lower[0] + steps[0] * from_usize(i),
                    self.lower[1] + steps[1] * from_usize(j),
                ]
            }
            _ => unreachable!(),
        }
    }

    /// True if the node `k` lies on the boundary of the box.
    pub fn is_boundary(&self, k: usize) -> bool {
        match self.dims.as_slice() {
            [n] => k == 0 || k + 1 == *n,
            [nx, ny] => {
                let (i, j) = (k % nx, k / nx);
                i == 0 || j == 0 || i + 1 == *nx || j + 1 == *ny
            }
            _ => unreachable!(),
        }
    }
}

fn weighted_norm<T: Scalar>(weights: &[T], values: &[T], p: T) -> T {
    if p == lit(2.0) {
        return weights
            .iter()
            .zip(values)
            .fold(T::zero(), |acc, (&w, &v)| acc + w * v * v)
            .sqrt();
    }
    // Scale by the max modulus so large exponents do not overflow.
    let vmax = values.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if vmax == T::zero() {
        return T::zero();
    }
    let s = weights.iter().zip(values).fold(T::zero(), |acc, (&w, &v)| {
        acc + w * (v.abs() / vmax).powf(p)
    });
    vmax * s.powf(T::one() / p)
}

/// A real function sampled on the nodes of a [`GridSpace`].
#[derive(Debug, Clone)]
pub struct GridFn<T> {
    space: Arc<GridSpace<T>>,
    values: Vec<T>,
    variance: Variance,
}

impl<T: Scalar> GridFn<T> {
    pub fn new(space: Arc<GridSpace<T>>, values: Vec<T>, variance: Variance) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::DimensionMismatch {
                expected: space.len(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue {
                what: "grid function",
            });
        }
        Ok(GridFn {
            space,
            values,
            variance,
        })
    }

    pub fn primal(space: Arc<GridSpace<T>>, values: Vec<T>) -> Result<Self> {
        Self::new(space, values, Variance::Primal)
    }

    pub fn dual(space: Arc<GridSpace<T>>, values: Vec<T>) -> Result<Self> {
        Self::new(space, values, Variance::Dual)
    }

    pub fn zeros(space: Arc<GridSpace<T>>, variance: Variance) -> Self {
        let values = vec![T::zero(); space.len()];
        GridFn {
            space,
            values,
            variance,
        }
    }

    /// Samples `f` at every node.
    pub fn from_fn(
        space: Arc<GridSpace<T>>,
        variance: Variance,
        f: impl Fn(&[T]) -> T,
    ) -> Result<Self> {
        let values = (0..space.len()).map(|k| f(&space.coords(k))).collect();
        Self::new(space, values, variance)
    }

    pub fn space(&self) -> &Arc<GridSpace<T>> {
        &self.space
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn variance(&self) -> Variance {
        self.variance
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same values under the other tag. On `p = 2` grids this is the Riesz map
    /// of the weighted inner product.
    pub fn with_variance(mut self, variance: Variance) -> Self {
        self.variance = variance;
        self
    }

    pub fn same_space(&self, other: &GridFn<T>) -> bool {
        Arc::ptr_eq(&self.space, &other.space) || *self.space == *other.space
    }

    fn check_compatible(&self, other: &GridFn<T>) -> Result<()> {
        if !self.same_space(other) {
            if self.len() != other.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.len(),
                    found: other.len(),
                });
            }
            return Err(Error::SpaceMismatch);
        }
        if self.variance != other.variance {
            return Err(Error::VarianceMismatch {
                expected: self.variance.as_str(),
                found: other.variance.as_str(),
            });
        }
        Ok(())
    }

    fn expect_variance(&self, v: Variance) -> Result<()> {
        if self.variance != v {
            return Err(Error::VarianceMismatch {
                expected: v.as_str(),
                found: self.variance.as_str(),
            });
        }
        Ok(())
    }

    fn checked(space: Arc<GridSpace<T>>, values: Vec<T>, variance: Variance) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue {
                what: "arithmetic result",
            });
        }
        Ok(GridFn {
            space,
            values,
            variance,
        })
    }

    /// `L^p` norm for primal elements, `L^{p*}` norm for dual ones.
    pub fn norm(&self) -> T {
        let p = match self.variance {
            Variance::Primal => self.space.exponent(),
            Variance::Dual => self.space.conjugate_exponent(),
        };
        weighted_norm(self.space.weights(), &self.values, p)
    }

    /// Weighted `L^2` norm regardless of the space exponent.
    pub fn l2_norm(&self) -> T {
        weighted_norm(self.space.weights(), &self.values, lit(2.0))
    }

    /// Weighted inner product `sum_i w_i f_i g_i`, ignoring variance tags.
    pub fn inner(&self, other: &GridFn<T>) -> Result<T> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        if !self.same_space(other) {
            return Err(Error::SpaceMismatch);
        }
        Ok(self
            .space
            .weights()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .fold(T::zero(), |acc, (&w, (&a, &b))| acc + w * a * b))
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: T, other: &GridFn<T>) -> Result<Self> {
        self.check_compatible(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&x, &y)| x + a * y)
            .collect();
        Self::checked(self.space.clone(), values, self.variance)
    }

    pub fn sub(&self, other: &GridFn<T>) -> Result<Self> {
        self.axpy(-T::one(), other)
    }

    pub fn add(&self, other: &GridFn<T>) -> Result<Self> {
        self.axpy(T::one(), other)
    }

    pub fn scale(&self, a: T) -> Result<Self> {
        let values = self.values.iter().map(|&x| a * x).collect();
        Self::checked(self.space.clone(), values, self.variance)
    }

    /// Pointwise product, keeping the tag of `self`.
    pub fn hadamard(&self, other: &GridFn<T>) -> Result<Self> {
        if !self.same_space(other) {
            return Err(Error::SpaceMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&x, &y)| x * y)
            .collect();
        Self::checked(self.space.clone(), values, self.variance)
    }

    /// `sum_k coeffs[k] * fns[k]`; all terms must share space and tag.
    pub fn lincomb(coeffs: &[T], fns: &[&GridFn<T>]) -> Result<Self> {
        if coeffs.len() != fns.len() {
            return Err(Error::DimensionMismatch {
                expected: fns.len(),
                found: coeffs.len(),
            });
        }
        let first = fns
            .first()
            .ok_or_else(|| param("fns", "need at least one term"))?;
        let mut values = vec![T::zero(); first.len()];
        for (&c, f) in coeffs.iter().zip(fns) {
            first.check_compatible(f)?;
            for (v, &x) in values.iter_mut().zip(&f.values) {
                *v += c * x;
            }
        }
        Self::checked(first.space.clone(), values, first.variance)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// Duality pairing `<xi, x>`.
pub fn pairing<T: Scalar>(xi: &GridFn<T>, x: &GridFn<T>) -> Result<T> {
    xi.expect_variance(Variance::Dual)?;
    x.expect_variance(Variance::Primal)?;
    xi.inner(x)
}

/// Duality mapping `J_r` with gauge `t -> t^{r-1}`.
///
/// `J_r(f) = ||f||_p^{r-p} |f|^{p-1} sign(f)`; the zero function maps to zero.
pub fn duality_map<T: Scalar>(f: &GridFn<T>, r: T) -> Result<GridFn<T>> {
    f.expect_variance(Variance::Primal)?;
    if !(r > T::one()) || !r.is_finite() {
        return Err(param("r", format!("need 1 < r < inf, got {r}")));
    }
    let p = f.space.exponent();
    let nrm = f.norm();
    if nrm == T::zero() {
        return Ok(GridFn::zeros(f.space.clone(), Variance::Dual));
    }
    let values: Vec<T> = if p == lit(2.0) {
        let c = nrm.powf(r - p);
        f.values.iter().map(|&v| c * v).collect()
    } else {
        // |f|^{p-1} ||f||^{r-p} = ||f||^{r-1} (|f| / ||f||)^{p-1}
        let c = nrm.powf(r - T::one());
        f.values
            .iter()
            .map(|&v| c * (v.abs() / nrm).powf(p - T::one()) * v.signum())
            .map(|v| if v.is_nan() { T::zero() } else { v })
            .collect()
    };
    GridFn::checked(f.space.clone(), values, Variance::Dual)
}

/// Bregman distance of `||.||^r / r`:
/// `||fbar||^r/r - ||f||^r/r - <J_r(f), fbar - f>`.
pub fn bregman_norm<T: Scalar>(fbar: &GridFn<T>, f: &GridFn<T>, r: T) -> Result<T> {
    fbar.check_compatible(f)?;
    let j = duality_map(f, r)?;
    let diff = fbar.sub(f)?;
    let d = fbar.norm().powf(r) / r - f.norm().powf(r) / r - pairing(&j, &diff)?;
    Ok(d.max(T::zero()))
}
