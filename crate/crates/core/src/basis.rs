//! Basis functions for the transformation function h(y | theta) = a(y)' theta.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Response, ResponseDatum};
use crate::error::{Error, Result};

/// Relative slack when checking that a value lies in the Bernstein support.
const SUPPORT_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisKind {
    /// Polynomial in Bernstein form of degree `order` on `support`.
    Bernstein { order: usize, support: [f64; 2] },
    /// h(t) = theta_1 + theta_2 log(t); Weibull-type models.
    LogLinear,
    /// K ordered categories, coded 1..=K; K - 1 thresholds.
    Ordinal { levels: usize },
    /// One threshold per unique response value except the largest.
    NonParametric { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    #[serde(flatten)]
    pub kind: BasisKind,
    /// Evaluate at floor(y); used for count responses.
    #[serde(default)]
    pub count_floor: bool,
    /// Response is declared positive: values <= 0 map to h = -inf.
    #[serde(default)]
    pub positive: bool,
}

/// Value of the basis at an interval endpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum Endpoint {
    NegInf,
    PosInf,
    Finite(Vec<f64>),
}

/// Linear inequality constraints `rows * theta >= margin`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraints {
    pub rows: DMatrix<f64>,
}

/// Identified form of the coefficients: h(y) = h_bar(y | theta_bar) - beta0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteredCoefficients {
    pub theta_bar: Vec<f64>,
    pub beta0: f64,
}

impl BasisSpec {
    pub fn bernstein(order: usize, lower: f64, upper: f64) -> Self {
        BasisSpec {
            kind: BasisKind::Bernstein {
                order,
                support: [lower, upper],
            },
            count_floor: false,
            positive: false,
        }
    }

    pub fn log_linear() -> Self {
        BasisSpec {
            kind: BasisKind::LogLinear,
            count_floor: false,
            positive: true,
        }
    }

    pub fn ordinal(levels: usize) -> Self {
        BasisSpec {
            kind: BasisKind::Ordinal { levels },
            count_floor: false,
            positive: false,
        }
    }

    pub fn non_parametric(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        values.dedup();
        BasisSpec {
            kind: BasisKind::NonParametric { values },
            count_floor: false,
            positive: false,
        }
    }

    /// Non-parametric basis on the finite response endpoints. When some
    /// observation lies above the largest of them (right-censored there),
    /// `f64::MAX` is added as the top value so that the largest observed
    /// value keeps a finite threshold.
    pub fn non_parametric_for(responses: &[ResponseDatum]) -> Self {
        let mut values = Vec::new();
        for r in responses {
            match r.value {
                Response::Exact(y) => values.push(y),
                Response::Interval { lower, upper } => {
                    values.extend([lower, upper].into_iter().filter(|v| v.is_finite()))
                }
            }
        }
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let open_top = responses.iter().any(|r| match r.value {
            Response::Interval { lower, upper } => lower == max && upper > max,
            Response::Exact(_) => false,
        });
        if open_top && max < f64::MAX {
            values.push(f64::MAX);
        }
        BasisSpec::non_parametric(values)
    }

    pub fn with_count_floor(mut self) -> Self {
        self.count_floor = true;
        self
    }

    pub fn with_positive(mut self) -> Self {
        self.positive = true;
        self
    }

    /// Bernstein basis on the range of the finite response endpoints.
    pub fn bernstein_for(responses: &[ResponseDatum], order: usize) -> Result<Self> {
        let (lo, hi) =
            finite_range(responses).ok_or_else(|| Error::data("no finite response values to derive a support"))?;
        if !(hi > lo) {
            return Err(Error::NonIdentifiable("all finite response values coincide".into()));
        }
        Ok(BasisSpec::bernstein(order, lo, hi))
    }

    /// Number of coefficients P.
    pub fn dim(&self) -> usize {
        match &self.kind {
            BasisKind::Bernstein { order, .. } => order + 1,
            BasisKind::LogLinear => 2,
            BasisKind::Ordinal { levels } => levels.saturating_sub(1),
            BasisKind::NonParametric { values } => values.len().saturating_sub(1),
        }
    }

    /// Whether h has a derivative in y, so exact observations have a density.
    pub fn is_continuous(&self) -> bool {
        !self.count_floor && matches!(self.kind, BasisKind::Bernstein { .. } | BasisKind::LogLinear)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            BasisKind::Bernstein { order, support } => {
                if *order < 1 {
                    return Err(Error::InvalidSpec("Bernstein order must be >= 1".into()));
                }
                if !(support[0].is_finite() && support[1].is_finite() && support[0] < support[1]) {
                    return Err(Error::InvalidSpec(format!(
                        "Bernstein support [{}, {}] must be finite with lower < upper",
                        support[0], support[1]
                    )));
                }
                if self.positive && support[0] < 0.0 {
                    return Err(Error::InvalidSpec(
                        "positive response declared but support extends below zero".into(),
                    ));
                }
            }
            BasisKind::LogLinear => {}
            BasisKind::Ordinal { levels } => {
                if *levels < 2 {
                    return Err(Error::InvalidSpec("ordinal basis needs K >= 2 levels".into()));
                }
            }
            BasisKind::NonParametric { values } => {
                if values.len() < 2 {
                    return Err(Error::InvalidSpec(
                        "non-parametric basis needs at least two unique values".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn floor_if_count(&self, y: f64) -> f64 {
        if self.count_floor {
            y.floor()
        } else {
            y
        }
    }

    /// Basis vector a(y) in R^P.
    pub fn eval(&self, y: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(y, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, y: f64, out: &mut [f64]) -> Result<()> {
        let y = self.floor_if_count(y);
        match &self.kind {
            BasisKind::Bernstein { order, support } => {
                let u = unit(y, support)?;
                bernstein_values(*order, u, out);
            }
            BasisKind::LogLinear => {
                if !(y > 0.0) {
                    return Err(Error::OutsideSupport {
                        value: y,
                        lower: 0.0,
                        upper: f64::INFINITY,
                    });
                }
                out[0] = 1.0;
                out[1] = y.ln();
            }
            BasisKind::Ordinal { levels } => {
                let k = category(y, *levels)?;
                if k == *levels {
                    return Err(Error::InvalidArgument(
                        "top category maps to h = +inf and has no basis vector".into(),
                    ));
                }
                out.iter_mut().for_each(|v| *v = 0.0);
                out[k - 1] = 1.0;
            }
            BasisKind::NonParametric { values } => {
                let k = rank_of(values, y);
                if k == 0 || k >= values.len() {
                    return Err(Error::OutsideSupport {
                        value: y,
                        lower: values[0],
                        upper: values[values.len() - 2],
                    });
                }
                out.iter_mut().for_each(|v| *v = 0.0);
                out[k - 1] = 1.0;
            }
        }
        Ok(())
    }

    /// Derivative a'(y); only defined for continuous bases.
    pub fn eval_deriv(&self, y: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.eval_deriv_into(y, &mut out)?;
        Ok(out)
    }

    pub fn eval_deriv_into(&self, y: f64, out: &mut [f64]) -> Result<()> {
        if !self.is_continuous() {
            return Err(Error::DiscreteDerivative);
        }
        match &self.kind {
            BasisKind::Bernstein { order, support } => {
                let u = unit(y, support)?;
                let m = *order;
                let scale = m as f64 / (support[1] - support[0]);
                let mut lower = vec![0.0; m];
                bernstein_values(m - 1, u, &mut lower);
                for (p, o) in out.iter_mut().enumerate() {
                    let left = if p >= 1 { lower[p - 1] } else { 0.0 };
                    let right = if p < m { lower[p] } else { 0.0 };
                    *o = scale * (left - right);
                }
            }
            BasisKind::LogLinear => {
                if !(y > 0.0) {
                    return Err(Error::OutsideSupport {
                        value: y,
                        lower: 0.0,
                        upper: f64::INFINITY,
                    });
                }
                out[0] = 0.0;
                out[1] = 1.0 / y;
            }
            _ => unreachable!("continuity checked above"),
        }
        Ok(())
    }

    /// Basis value at an interval endpoint, honouring the conventions
    /// h(-inf) = -inf, h(+inf) = +inf, h(y) = -inf below the response domain,
    /// and h(y_K) = +inf for the top ordinal category.
    pub fn endpoint(&self, v: f64) -> Result<Endpoint> {
        if v == f64::NEG_INFINITY {
            return Ok(Endpoint::NegInf);
        }
        if v == f64::INFINITY {
            return Ok(Endpoint::PosInf);
        }
        let v = self.floor_if_count(v);
        match &self.kind {
            BasisKind::Bernstein { support, .. } => {
                if (self.positive && v <= 0.0) || (self.count_floor && v < 0.0) {
                    return Ok(Endpoint::NegInf);
                }
                if self.count_floor && v < support[0] {
                    return Ok(Endpoint::NegInf);
                }
                self.eval(v).map(Endpoint::Finite)
            }
            BasisKind::LogLinear => {
                if v <= 0.0 {
                    Ok(Endpoint::NegInf)
                } else {
                    self.eval(v).map(Endpoint::Finite)
                }
            }
            BasisKind::Ordinal { levels } => {
                if v < 1.0 - 1e-9 {
                    return Ok(Endpoint::NegInf);
                }
                let k = category(v, *levels)?;
                if k == *levels {
                    Ok(Endpoint::PosInf)
                } else {
                    self.eval(v).map(Endpoint::Finite)
                }
            }
            BasisKind::NonParametric { values } => {
                let k = rank_of(values, v);
                if k == 0 {
                    Ok(Endpoint::NegInf)
                } else if k >= values.len() {
                    Ok(Endpoint::PosInf)
                } else {
                    self.eval(v).map(Endpoint::Finite)
                }
            }
        }
    }

    /// Whether y is a point at which the basis can be evaluated.
    pub fn contains(&self, y: f64) -> bool {
        self.endpoint(y).is_ok()
    }

    /// Monotonicity constraints on theta as a difference matrix.
    pub fn monotone_constraints(&self) -> Constraints {
        let p = self.dim();
        match self.kind {
            BasisKind::LogLinear => {
                let mut rows = DMatrix::zeros(1, 2);
                rows[(0, 1)] = 1.0;
                Constraints { rows }
            }
            _ => {
                let n = p.saturating_sub(1);
                let mut rows = DMatrix::zeros(n, p);
                for r in 0..n {
                    rows[(r, r)] = -1.0;
                    rows[(r, r + 1)] = 1.0;
                }
                Constraints { rows }
            }
        }
    }

    fn supports_centering(&self) -> Result<()> {
        match self.kind {
            BasisKind::Bernstein { .. } | BasisKind::Ordinal { .. } | BasisKind::NonParametric { .. } => Ok(()),
            BasisKind::LogLinear => Err(Error::InvalidSpec(
                "centered parameterization needs a Bernstein or discrete basis".into(),
            )),
        }
    }

    fn is_discrete(&self) -> bool {
        matches!(self.kind, BasisKind::Ordinal { .. } | BasisKind::NonParametric { .. })
    }

    /// Split theta into the identified part and the intercept beta0.
    pub fn center(&self, theta: &[f64]) -> Result<CenteredCoefficients> {
        self.supports_centering()?;
        if theta.len() != self.dim() {
            return Err(Error::InvalidArgument("coefficient length mismatch".into()));
        }
        if self.is_discrete() {
            let first = theta[0];
            return Ok(CenteredCoefficients {
                theta_bar: theta[1..].iter().map(|t| t - first).collect(),
                beta0: -first,
            });
        }
        let m = theta.iter().sum::<f64>() / theta.len() as f64;
        Ok(CenteredCoefficients {
            theta_bar: theta[..theta.len() - 1].iter().map(|t| t - m).collect(),
            beta0: -m,
        })
    }

    /// Inverse of [`BasisSpec::center`].
    pub fn uncenter(&self, centered: &CenteredCoefficients) -> Result<Vec<f64>> {
        self.supports_centering()?;
        let shift = -centered.beta0;
        let mut full = self.expand_centered(&centered.theta_bar)?;
        full.iter_mut().for_each(|t| *t += shift);
        Ok(full)
    }

    /// Coefficients of h_bar in the original basis: a(y)' expand(theta_bar) = h_bar(y).
    pub fn expand_centered(&self, theta_bar: &[f64]) -> Result<Vec<f64>> {
        self.supports_centering()?;
        if theta_bar.len() + 1 != self.dim() {
            return Err(Error::InvalidArgument("centered coefficient length mismatch".into()));
        }
        let mut full = Vec::with_capacity(self.dim());
        if self.is_discrete() {
            full.push(0.0);
            full.extend_from_slice(theta_bar);
        } else {
            full.extend_from_slice(theta_bar);
            full.push(-theta_bar.iter().sum::<f64>());
        }
        Ok(full)
    }

    /// The centered basis a_bar(y): (a_p - a_P) for Bernstein, a_{2..P} for
    /// discrete bases.
    pub fn eval_centered(&self, y: f64) -> Result<Vec<f64>> {
        let map = self.coefficient_map(true)?;
        let a = self.eval(y)?;
        Ok((0..map.ncols())
            .map(|c| (0..a.len()).map(|r| a[r] * map[(r, c)]).sum())
            .collect())
    }

    /// Linear map M from working coefficients to basis coefficients.
    /// Identity unless `centered`, in which case M has P - 1 columns.
    pub fn coefficient_map(&self, centered: bool) -> Result<DMatrix<f64>> {
        let p = self.dim();
        if !centered {
            return Ok(DMatrix::identity(p, p));
        }
        self.supports_centering()?;
        let mut m = DMatrix::zeros(p, p - 1);
        for c in 0..p - 1 {
            let e: Vec<f64> = (0..p - 1).map(|i| if i == c { 1.0 } else { 0.0 }).collect();
            let col = self.expand_centered(&e)?;
            for r in 0..p {
                m[(r, c)] = col[r];
            }
        }
        Ok(m)
    }

    /// Range of response values the basis covers.
    pub fn support(&self) -> (f64, f64) {
        match &self.kind {
            BasisKind::Bernstein { support, .. } => (support[0], support[1]),
            BasisKind::LogLinear => (0.0, f64::INFINITY),
            BasisKind::Ordinal { levels } => (1.0, *levels as f64),
            BasisKind::NonParametric { values } => (values[0], values[values.len() - 1]),
        }
    }
}

fn finite_range(responses: &[ResponseDatum]) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut push = |v: f64| {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    };
    for r in responses {
        match r.value {
            Response::Exact(y) => push(y),
            Response::Interval { lower, upper } => {
                push(lower);
                push(upper);
            }
        }
    }
    (lo <= hi).then_some((lo, hi))
}

fn unit(y: f64, support: &[f64; 2]) -> Result<f64> {
    let width = support[1] - support[0];
    let u = (y - support[0]) / width;
    if !(-SUPPORT_SLACK..=1.0 + SUPPORT_SLACK).contains(&u) || u.is_nan() {
        return Err(Error::OutsideSupport {
            value: y,
            lower: support[0],
            upper: support[1],
        });
    }
    Ok(u.clamp(0.0, 1.0))
}

/// B_{k,m}(u), k = 0..=m, written into `out`.
fn bernstein_values(m: usize, u: f64, out: &mut [f64]) {
    // de Casteljau style triangle: stable for all u in [0, 1]
    out[..=m].iter_mut().for_each(|v| *v = 0.0);
    out[0] = 1.0;
    let v = 1.0 - u;
    for j in 1..=m {
        let mut saved = 0.0;
        for k in 0..j {
            let tmp = out[k];
            out[k] = saved + v * tmp;
            saved = u * tmp;
        }
        out[j] = saved;
    }
}

fn category(y: f64, levels: usize) -> Result<usize> {
    let k = y.round();
    if (y - k).abs() > 1e-9 || k < 1.0 || k > levels as f64 {
        return Err(Error::OutsideSupport {
            value: y,
            lower: 1.0,
            upper: levels as f64,
        });
    }
    Ok(k as usize)
}

/// Number of unique values <= y (with a small tolerance).
fn rank_of(values: &[f64], y: f64) -> usize {
    let tol = 1e-12 * (1.0 + y.abs());
    values.partition_point(|v| *v <= y + tol)
}
