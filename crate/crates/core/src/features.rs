//! Derived covariate columns: harmonic seasonal terms and unpenalised
//! regression B-splines.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns sin(2 pi k d / 365), cos(2 pi k d / 365) for each frequency k,
/// in that order.
pub fn harmonic_features(d: &[f64], frequencies: &[f64]) -> Result<DMatrix<f64>> {
    if frequencies.is_empty() {
        return Err(Error::InvalidArgument("empty frequency list".into()));
    }
    Ok(DMatrix::from_fn(d.len(), 2 * frequencies.len(), |i, c| {
        let w = 2.0 * PI * frequencies[c / 2] * d[i] / 365.0;
        if c % 2 == 0 {
            w.sin()
        } else {
            w.cos()
        }
    }))
}

pub fn harmonic_names(name: &str, frequencies: &[f64]) -> Vec<String> {
    frequencies
        .iter()
        .flat_map(|k| [format!("{name}_sin{k}"), format!("{name}_cos{k}")])
        .collect()
}

/// B-spline basis with boundary knots at the range of the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    pub degree: usize,
    /// Full knot sequence including repeated boundary knots.
    pub knots: Vec<f64>,
}

impl SplineBasis {
    pub fn new(x: &[f64], interior: &[f64], degree: usize) -> Result<Self> {
        let mut distinct: Vec<f64> = x.to_vec();
        if distinct.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("spline covariate has non-finite values"));
        }
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() < degree + 1 {
            return Err(Error::InvalidArgument(format!(
                "degree {degree} splines need at least {} distinct values, found {}",
                degree + 1,
                distinct.len()
            )));
        }
        let (lo, hi) = (distinct[0], distinct[distinct.len() - 1]);
        let mut inner = interior.to_vec();
        inner.sort_by(f64::total_cmp);
        if inner.iter().any(|k| !(*k > lo && *k < hi)) {
            return Err(Error::InvalidArgument(format!(
                "interior knots must lie strictly inside ({lo}, {hi})"
            )));
        }
        if inner.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("interior knots must be distinct".into()));
        }
        let mut knots = vec![lo; degree + 1];
        knots.extend(inner);
        knots.extend(std::iter::repeat(hi).take(degree + 1));
        Ok(SplineBasis { degree, knots })
    }

    pub fn dim(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Basis values at `v`; values outside the boundary knots are an error.
    pub fn eval(&self, v: f64) -> Result<Vec<f64>> {
        let (lo, hi) = (self.knots[0], self.knots[self.knots.len() - 1]);
        if !(v >= lo && v <= hi) {
            return Err(Error::OutsideSupport {
                value: v,
                lower: lo,
                upper: hi,
            });
        }
        let t = &self.knots;
        let m = t.len() - 1;
        // degree-0 indicators; the right boundary belongs to the last interval
        let mut b: Vec<f64> = (0..m)
            .map(|i| {
                let inside = t[i] <= v && v < t[i + 1];
                let last = v == hi && t[i] < t[i + 1] && t[i + 1] == hi;
                (inside || last) as u8 as f64
            })
            .collect();
        for p in 1..=self.degree {
            b = (0..m - p)
                .map(|i| {
                    let mut s = 0.0;
                    let d1 = t[i + p] - t[i];
                    if d1 > 0.0 {
                        s += (v - t[i]) / d1 * b[i];
                    }
                    let d2 = t[i + p + 1] - t[i + 1];
                    if d2 > 0.0 {
                        s += (t[i + p + 1] - v) / d2 * b[i + 1];
                    }
                    s
                })
                .collect();
        }
        Ok(b)
    }

    pub fn design(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(x.len(), self.dim());
        for (i, v) in x.iter().enumerate() {
            for (c, b) in self.eval(*v)?.into_iter().enumerate() {
                out[(i, c)] = b;
            }
        }
        Ok(out)
    }
}

/// B-spline design of `x` with interior `knots`; rows sum to one.
pub fn spline_features(x: &[f64], knots: &[f64], degree: usize) -> Result<DMatrix<f64>> {
    SplineBasis::new(x, knots, degree)?.design(x)
}

pub fn spline_names(name: &str, dim: usize) -> Vec<String> {
    (1..=dim).map(|k| format!("{name}_bs{k}")).collect()
}
