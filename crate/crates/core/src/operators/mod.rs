//! Forward operators `F: X -> Y` with Fréchet derivative and adjoint.
//!
//! Adjoints are taken with respect to the quadrature-weighted pairings of the
//! domain and range spaces, so `<F'(x) h, w>_Y = <h, F'(x)* w>_X` holds exactly
//! (up to rounding) on the discrete level.

mod banded;
mod elliptic;
mod integral;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{param, Error, Result};
use crate::scalar::{lit, Scalar};
use crate::spaces::{GridFn, GridSpace, Variance};

pub use self::banded::{BandedCholesky, SymBand};
pub use self::elliptic::EllipticOp;
pub use self::integral::IntegralOp;

pub trait ForwardOp<T: Scalar>: Send + Sync {
    fn domain(&self) -> &Arc<GridSpace<T>>;

    fn range(&self) -> &Arc<GridSpace<T>>;

    fn is_linear(&self) -> bool;

    /// `F(x)`.
    fn apply(&self, x: &GridFn<T>) -> Result<GridFn<T>>;

    /// `F'(x) h`.
    fn deriv(&self, x: &GridFn<T>, h: &GridFn<T>) -> Result<GridFn<T>>;

    /// `F'(x)* w` for a dual element `w` of `Y*`; returns an element of `X*`.
    fn adjoint(&self, x: &GridFn<T>, w: &GridFn<T>) -> Result<GridFn<T>>;
}

/// Sampled estimate of the tangential cone constant
/// `||F(xb) - F(x) - F'(x)(xb - x)|| / ||F(xb) - F(x)||` over random pairs in
/// the ball of the given radius around `x0`. Linear operators return zero.
pub fn estimate_eta<T: Scalar>(
    op: &dyn ForwardOp<T>,
    x0: &GridFn<T>,
    radius: T,
    samples: usize,
    seed: u64,
) -> Result<T> {
    if samples == 0 {
        return Err(param("samples", "need at least one sample"));
    }
    if op.is_linear() {
        return Ok(T::zero());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new(0.0f64, 1.0).expect("valid range");
    let point = |rng: &mut ChaCha8Rng| -> Result<GridFn<T>> {
        let dir: Vec<T> = (0..x0.len())
            .map(|_| lit::<T>(StandardNormal.sample(rng)))
            .collect();
        let dir = GridFn::new(x0.space().clone(), dir, Variance::Primal)?;
        let len = radius * lit(unit.sample(rng));
        x0.axpy(len / dir.norm(), &dir)
    };

    let mut eta = T::zero();
    for _ in 0..samples {
        let xb = point(&mut rng)?;
        let x = point(&mut rng)?;
        let fb = op.apply(&xb)?;
        let fx = op.apply(&x)?;
        let df = fb.sub(&fx)?;
        let denom = df.norm();
        if denom <= T::epsilon() * (T::one() + fx.norm()) {
            continue;
        }
        let lin = op.deriv(&x, &xb.sub(&x)?)?;
        let num = df.sub(&lin)?.norm();
        eta = eta.max(num / denom);
    }
    Ok(eta)
}

pub(crate) fn check_arg<T: Scalar>(
    x: &GridFn<T>,
    space: &Arc<GridSpace<T>>,
    variance: Variance,
) -> Result<()> {
    if x.len() != space.len() {
        return Err(Error::DimensionMismatch {
            expected: space.len(),
            found: x.len(),
        });
    }
    if !(Arc::ptr_eq(x.space(), space) || **x.space() == **space) {
        return Err(Error::SpaceMismatch);
    }
    if x.variance() != variance {
        return Err(Error::VarianceMismatch {
            expected: variance.as_str(),
            found: x.variance().as_str(),
        });
    }
    Ok(())
}
