//! Plain-text grid function files.
//!
//! ```text
//! # dims=401
//! # lower=0
//! # upper=1
//! # exponent=2
//! # variance=primal
//! value
//! 0
//! 0.0125
//! ...
//! ```

use std::io::{BufRead, Write};
use std::sync::Arc;

use super::{GridFn, GridSpace, Variance};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn join<T: Scalar>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Writes `f` with its grid header, one value per line.
pub fn write_csv<T: Scalar, W: Write>(f: &GridFn<T>, mut out: W) -> Result<()> {
    let space = f.space();
    let dims: Vec<String> = space.dims().iter().map(|d| d.to_string()).collect();
    writeln!(out, "# dims={}", dims.join(","))?;
    writeln!(out, "# lower={}", join(space.lower()))?;
    writeln!(out, "# upper={}", join(space.upper()))?;
    writeln!(out, "# exponent={}", space.exponent())?;
    writeln!(out, "# variance={}", f.variance().as_str())?;
    writeln!(out, "value")?;
    for v in f.values() {
        writeln!(out, "{v}")?;
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr>(s: &str, key: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<T>()
                .map_err(|_| Error::Parse(format!("bad `{key}` entry `{t}`")))
        })
        .collect()
}

/// Reads a file produced by [`write_csv`].
pub fn read_csv<T: Scalar + std::str::FromStr, R: BufRead>(input: R) -> Result<GridFn<T>> {
    let mut dims: Option<Vec<usize>> = None;
    let mut lower: Option<Vec<T>> = None;
    let mut upper: Option<Vec<T>> = None;
    let mut exponent: Option<T> = None;
    let mut variance = Variance::Primal;
    let mut values = Vec::new();
    let mut seen_header = false;

    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let (key, val) = meta
                .trim()
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: malformed header", lineno + 1)))?;
            match key.trim() {
                "dims" => dims = Some(parse_list(val, "dims")?),
                "lower" => lower = Some(parse_list(val, "lower")?),
                "upper" => upper = Some(parse_list(val, "upper")?),
                "exponent" => exponent = parse_list(val, "exponent")?.into_iter().next(),
                "variance" => {
                    variance = match val.trim() {
                        "primal" => Variance::Primal,
                        "dual" => Variance::Dual,
                        other => return Err(Error::Parse(format!("unknown variance `{other}`"))),
                    }
                }
                other => return Err(Error::Parse(format!("unknown header key `{other}`"))),
            }
            continue;
        }
        if !seen_header && line == "value" {
            seen_header = true;
            continue;
        }
        let v = line
            .parse::<T>()
            .map_err(|_| Error::Parse(format!("line {}: bad value `{line}`", lineno + 1)))?;
        values.push(v);
    }

    let dims = dims.ok_or_else(|| Error::Parse("missing `dims` header".into()))?;
    let n = dims.len();
    let lower = lower.unwrap_or_else(|| vec![T::zero(); n]);
    let upper = upper.unwrap_or_else(|| vec![T::one(); n]);
    let exponent = exponent.unwrap_or_else(|| T::one() + T::one());
    let subdivisions: Vec<usize> = dims
        .iter()
        .map(|&d| {
            d.checked_sub(1)
                .ok_or_else(|| Error::Parse("dims entries must be positive".into()))
        })
        .collect::<Result<_>>()?;
    let space: Arc<GridSpace<T>> = GridSpace::uniform(&subdivisions, &lower, &upper, exponent)?;
    GridFn::new(space, values, variance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip_is_exact(vals in proptest::collection::vec(-1e6f64..1e6, 6 * 4)) {
            let space = GridSpace::<f64>::unit_square(5, 3, 2.0).unwrap();
            let f = GridFn::dual(space, vals).unwrap();
            let mut buf = Vec::new();
            write_csv(&f, &mut buf).unwrap();
            let g: GridFn<f64> = read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(g.values(), f.values());
            prop_assert_eq!(g.variance(), Variance::Dual);
            prop_assert!(g.same_space(&f));
        }
    }

    #[test]
    fn rejects_wrong_length() {
        let text = "# dims=3\nvalue\n1\n2\n";
        assert!(read_csv::<f64, _>(text.as_bytes()).is_err());
    }
}
