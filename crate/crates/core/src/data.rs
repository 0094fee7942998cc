//! Responses, covariates, and datasets.
//!
//! Every observation is either an exact value or a half-open interval
//! (lower, upper]. Ordinal, count, and censored observations are stored in
//! interval form; the original kind is kept as a [`ResponseTag`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisKind, BasisSpec};
use crate::error::{Error, Result};
use crate::likelihood::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Response {
    Exact(f64),
    /// The half-open interval (lower, upper].
    Interval {
        lower: f64,
        upper: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResponseTag {
    Exact,
    Left,
    Right,
    Interval,
    Ordinal { k: usize, levels: usize },
    Count { n: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseDatum {
    pub value: Response,
    pub tag: ResponseTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseKind {
    Exact,
    Left,
    Right,
    Interval,
    Ordinal,
    Count,
}

impl std::str::FromStr for ResponseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(ResponseKind::Exact),
            "left" => Ok(ResponseKind::Left),
            "right" => Ok(ResponseKind::Right),
            "interval" => Ok(ResponseKind::Interval),
            "ordinal" => Ok(ResponseKind::Ordinal),
            "count" => Ok(ResponseKind::Count),
            other => Err(Error::Config(format!("unknown response kind `{other}`"))),
        }
    }
}

/// Raw input for [`encode_response`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RawResponse<'a> {
    Value(f64),
    Bounds(f64, f64),
    Level(&'a str),
}

impl ResponseDatum {
    pub fn exact(y: f64) -> Result<Self> {
        if !y.is_finite() {
            return Err(Error::InvalidResponse(format!("exact value {y} is not finite")));
        }
        Ok(ResponseDatum {
            value: Response::Exact(y),
            tag: ResponseTag::Exact,
        })
    }

    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        Self::tagged_interval(lower, upper, ResponseTag::Interval)
    }

    fn tagged_interval(lower: f64, upper: f64, tag: ResponseTag) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() {
            return Err(Error::InvalidResponse("interval bound is NaN".into()));
        }
        if lower == f64::INFINITY || upper == f64::NEG_INFINITY {
            return Err(Error::InvalidResponse(format!(
                "interval ({lower}, {upper}] has an unusable infinite bound"
            )));
        }
        if !(lower < upper) {
            return Err(Error::InvalidResponse(format!(
                "interval ({lower}, {upper}] is empty: lower must be < upper"
            )));
        }
        Ok(ResponseDatum {
            value: Response::Interval { lower, upper },
            tag,
        })
    }

    pub fn right_censored(t: f64) -> Result<Self> {
        Self::tagged_interval(t, f64::INFINITY, ResponseTag::Right)
    }

    /// Left-censored at t: (0, t] for positive responses, (-inf, t] otherwise.
    pub fn left_censored(t: f64, positive: bool) -> Result<Self> {
        let lower = if positive { 0.0 } else { f64::NEG_INFINITY };
        Self::tagged_interval(lower, t, ResponseTag::Left)
    }

    /// Category k (1-based) of K maps to (k - 1, k] with k - 1 = 0 read as -inf.
    pub fn ordinal(k: usize, levels: usize) -> Result<Self> {
        if k < 1 || k > levels {
            return Err(Error::InvalidResponse(format!(
                "ordinal category {k} outside 1..={levels}"
            )));
        }
        let lower = if k == 1 { f64::NEG_INFINITY } else { (k - 1) as f64 };
        Self::tagged_interval(lower, k as f64, ResponseTag::Ordinal { k, levels })
    }

    /// Count n maps to (n - 1, n].
    pub fn count(n: i64) -> Result<Self> {
        if n < 0 {
            return Err(Error::InvalidResponse(format!("negative count {n}")));
        }
        Self::tagged_interval((n - 1) as f64, n as f64, ResponseTag::Count { n: n as u64 })
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.value, Response::Exact(_))
    }

    /// A representative point: the exact value or the interval midpoint
    /// (finite bound when the other is infinite).
    pub fn midpoint(&self) -> f64 {
        match self.value {
            Response::Exact(y) => y,
            Response::Interval { lower, upper } => match (lower.is_finite(), upper.is_finite()) {
                (true, true) => 0.5 * (lower + upper),
                (true, false) => lower,
                (false, true) => upper,
                (false, false) => 0.0,
            },
        }
    }
}

/// Encode one observation according to `kind`.
pub fn encode_response(
    kind: ResponseKind,
    raw: RawResponse<'_>,
    levels: Option<&[String]>,
    positive: bool,
) -> Result<ResponseDatum> {
    match (kind, raw) {
        (ResponseKind::Exact, RawResponse::Value(y)) => ResponseDatum::exact(y),
        (ResponseKind::Right, RawResponse::Value(t)) => ResponseDatum::right_censored(t),
        (ResponseKind::Left, RawResponse::Value(t)) => ResponseDatum::left_censored(t, positive),
        (ResponseKind::Interval, RawResponse::Bounds(l, u)) => ResponseDatum::interval(l, u),
        (ResponseKind::Interval, RawResponse::Value(y)) => ResponseDatum::exact(y),
        (ResponseKind::Count, RawResponse::Value(n)) => {
            if n.fract() != 0.0 || !n.is_finite() {
                return Err(Error::InvalidResponse(format!("count {n} is not an integer")));
            }
            ResponseDatum::count(n as i64)
        }
        (ResponseKind::Ordinal, RawResponse::Level(level)) => {
            let levels = levels.ok_or_else(|| Error::Config("ordinal responses need an ordered level list".into()))?;
            let k = levels
                .iter()
                .position(|l| l == level)
                .ok_or_else(|| Error::UnknownLevel {
                    level: level.to_string(),
                })?;
            ResponseDatum::ordinal(k + 1, levels.len())
        }
        (ResponseKind::Ordinal, RawResponse::Value(k)) => {
            let levels = levels.ok_or_else(|| Error::Config("ordinal responses need an ordered level list".into()))?;
            if k.fract() != 0.0 || k < 1.0 {
                return Err(Error::UnknownLevel { level: k.to_string() });
            }
            ResponseDatum::ordinal(k as usize, levels.len())
        }
        (kind, raw) => Err(Error::InvalidResponse(format!(
            "cannot encode {raw:?} as a {kind:?} response"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum VariableKind {
    Numeric {
        column: usize,
    },
    /// Treatment contrasts against the first level; `codes` index `levels`.
    Categorical {
        levels: Vec<String>,
        ordered: bool,
        codes: Vec<usize>,
        columns: Vec<usize>,
    },
}

/// An original covariate before contrast expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VariableKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strata {
    pub name: String,
    pub levels: Vec<String>,
    pub codes: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub responses: Vec<ResponseDatum>,
    /// N x J design columns (categoricals already expanded).
    pub x: DMatrix<f64>,
    pub columns: Vec<String>,
    pub variables: Vec<Variable>,
    pub strata: Option<Strata>,
    pub weights: Vec<f64>,
}

impl Dataset {
    /// Dataset with numeric covariates given row by row.
    pub fn new(responses: Vec<ResponseDatum>, rows: &[Vec<f64>], columns: Vec<String>) -> Result<Self> {
        let n = responses.len();
        if n == 0 {
            return Err(Error::data("dataset has no observations"));
        }
        if rows.len() != n {
            return Err(Error::data(format!(
                "{} covariate rows for {} responses",
                rows.len(),
                n
            )));
        }
        let j = columns.len();
        let mut x = DMatrix::zeros(n, j);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != j {
                return Err(Error::Data {
                    row: Some(i),
                    column: None,
                    message: format!("expected {j} covariates, found {}", row.len()),
                });
            }
            for (c, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Data {
                        row: Some(i),
                        column: Some(columns[c].clone()),
                        message: "missing or non-finite covariate value".into(),
                    });
                }
                x[(i, c)] = *v;
            }
        }
        let variables = columns
            .iter()
            .enumerate()
            .map(|(c, name)| Variable {
                name: name.clone(),
                kind: VariableKind::Numeric { column: c },
            })
            .collect();
        Ok(Dataset {
            responses,
            x,
            columns,
            variables,
            strata: None,
            weights: vec![1.0; n],
        })
    }

    /// Dataset without covariates.
    pub fn from_responses(responses: Vec<ResponseDatum>) -> Result<Self> {
        let rows = vec![Vec::new(); responses.len()];
        Dataset::new(responses, &rows, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::data("weight vector length differs from N"));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Data {
                row: Some(i),
                column: None,
                message: "case weights must be finite and nonnegative".into(),
            });
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn with_strata(mut self, name: &str, labels: &[String]) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::data("stratum vector length differs from N"));
        }
        let mut levels: Vec<String> = Vec::new();
        let codes = labels
            .iter()
            .map(|l| match levels.iter().position(|x| x == l) {
                Some(k) => k,
                None => {
                    levels.push(l.clone());
                    levels.len() - 1
                }
            })
            .collect();
        self.strata = Some(Strata {
            name: name.to_string(),
            levels,
            codes,
        });
        Ok(self)
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| Error::Data {
            row: None,
            column: Some(name.to_string()),
            message: "no such covariate column".into(),
        })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.column_index(name)?;
        Ok(self.x.column(c).iter().copied().collect())
    }

    /// Test design of variable `name`: the numeric column itself, or level
    /// indicators of a categorical variable.
    pub fn variable_design(&self, name: &str) -> Result<DMatrix<f64>> {
        match self.variables.iter().find(|v| v.name == name).map(|v| &v.kind) {
            Some(VariableKind::Numeric { column }) => Ok(self.x.columns(*column, 1).into_owned()),
            Some(VariableKind::Categorical { levels, codes, .. }) => {
                Ok(DMatrix::from_fn(self.len(), levels.len(), |i, k| {
                    (codes[i] == k) as u8 as f64
                }))
            }
            None => {
                let c = self.column_index(name)?;
                Ok(self.x.columns(c, 1).into_owned())
            }
        }
    }

    /// Append a derived numeric column.
    pub fn push_column(&mut self, name: &str, values: &[f64]) -> Result<usize> {
        if values.len() != self.len() {
            return Err(Error::data(format!("column `{name}` has the wrong length")));
        }
        if self.columns.iter().any(|c| c == name) {
            return Err(Error::data(format!("duplicate column `{name}`")));
        }
        let j = self.ncols();
        self.x = self.x.clone().insert_column(j, 0.0);
        for (i, v) in values.iter().enumerate() {
            self.x[(i, j)] = *v;
        }
        self.columns.push(name.to_string());
        Ok(j)
    }

    /// Append a categorical covariate expanded to treatment contrasts.
    pub fn push_categorical(
        &mut self,
        name: &str,
        labels: &[String],
        levels: Option<Vec<String>>,
        ordered: bool,
    ) -> Result<()> {
        if labels.len() != self.len() {
            return Err(Error::data(format!("column `{name}` has the wrong length")));
        }
        let levels = match levels {
            Some(l) => l,
            None => {
                let mut l: Vec<String> = labels.to_vec();
                l.sort();
                l.dedup();
                l
            }
        };
        let codes = labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                levels.iter().position(|x| x == l).ok_or_else(|| Error::Data {
                    row: Some(i),
                    column: Some(name.to_string()),
                    message: format!("unknown level `{l}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut columns = Vec::new();
        for (k, level) in levels.iter().enumerate().skip(1) {
            let values: Vec<f64> = codes.iter().map(|&c| (c == k) as u8 as f64).collect();
            columns.push(self.push_column(&format!("{name}{level}"), &values)?);
        }
        self.variables.push(Variable {
            name: name.to_string(),
            kind: VariableKind::Categorical {
                levels,
                ordered,
                codes,
                columns,
            },
        });
        Ok(())
    }

    /// Register a numeric column as a tree-splitting variable.
    pub fn push_numeric_variable(&mut self, name: &str, values: &[f64]) -> Result<()> {
        let column = self.push_column(name, values)?;
        self.variables.push(Variable {
            name: name.to_string(),
            kind: VariableKind::Numeric { column },
        });
        Ok(())
    }

    /// The rows `idx` as a new dataset, preserving column metadata.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let x = DMatrix::from_fn(idx.len(), self.ncols(), |r, c| self.x[(idx[r], c)]);
        let variables = self
            .variables
            .iter()
            .map(|v| match &v.kind {
                VariableKind::Numeric { .. } => v.clone(),
                VariableKind::Categorical {
                    levels,
                    ordered,
                    codes,
                    columns,
                } => Variable {
                    name: v.name.clone(),
                    kind: VariableKind::Categorical {
                        levels: levels.clone(),
                        ordered: *ordered,
                        codes: idx.iter().map(|&i| codes[i]).collect(),
                        columns: columns.clone(),
                    },
                },
            })
            .collect();
        Dataset {
            responses: idx.iter().map(|&i| self.responses[i]).collect(),
            x,
            columns: self.columns.clone(),
            variables,
            strata: self.strata.as_ref().map(|s| Strata {
                name: s.name.clone(),
                levels: s.levels.clone(),
                codes: idx.iter().map(|&i| s.codes[i]).collect(),
            }),
            weights: idx.iter().map(|&i| self.weights[i]).collect(),
        }
    }

    /// Replace exact observations by (previous unique value, y] so the data
    /// can be fitted with a non-parametric basis on the unique values.
    pub fn discretized(&self) -> Result<(Dataset, BasisSpec)> {
        let basis = BasisSpec::non_parametric_for(&self.responses);
        let BasisKind::NonParametric { values } = &basis.kind else {
            unreachable!()
        };
        let mut out = self.clone();
        for r in out.responses.iter_mut() {
            if let Response::Exact(y) = r.value {
                let k = values.partition_point(|v| *v < y);
                let lower = if k == 0 { f64::NEG_INFINITY } else { values[k - 1] };
                *r = ResponseDatum::interval(lower, y)?;
            }
        }
        Ok((out, basis))
    }
}

/// One row failing validation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub rows: Vec<Diagnostic>,
}

impl Diagnostics {
    pub fn is_ok(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Check every response against the basis of `spec` and the referenced
/// design columns. Structural mismatches are errors; row-level problems are
/// reported as diagnostics.
pub fn validate_dataset(data: &Dataset, spec: &ModelSpec) -> Result<Diagnostics> {
    spec.basis.validate()?;
    for name in spec.location.iter().chain(&spec.scale) {
        data.column_index(name)?;
    }
    if spec.stratified && data.strata.is_none() {
        return Err(Error::InvalidSpec("stratified model but dataset has no strata".into()));
    }
    let mut diag = Diagnostics::default();
    for (i, r) in data.responses.iter().enumerate() {
        if let (ResponseTag::Ordinal { levels, .. }, BasisKind::Ordinal { levels: k }) = (r.tag, &spec.basis.kind) {
            if levels != *k {
                return Err(Error::InvalidSpec(format!(
                    "response has {levels} ordinal levels but the basis has {k}"
                )));
            }
        }
        let problem = match r.value {
            Response::Exact(y) => {
                if !spec.basis.is_continuous() {
                    Some("exact observation under a discrete basis".to_string())
                } else {
                    spec.basis.eval(y).err().map(|_| format!("value {y} outside support"))
                }
            }
            Response::Interval { lower, upper } => [lower, upper]
                .iter()
                .find(|v| spec.basis.endpoint(**v).is_err())
                .map(|v| format!("interval bound {v} outside support")),
        };
        if let Some(message) = problem {
            diag.rows.push(Diagnostic { row: i, message });
        }
    }
    Ok(diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::Link;
    use proptest::prelude::*;

    #[test]
    fn encoding_examples() {
        let c = encode_response(ResponseKind::Count, RawResponse::Value(3.0), None, false).unwrap();
        assert_eq!(c.value, Response::Interval { lower: 2.0, upper: 3.0 });
        assert_eq!(c.tag, ResponseTag::Count { n: 3 });
        let r = encode_response(ResponseKind::Right, RawResponse::Value(5.0), None, true).unwrap();
        assert_eq!(
            r.value,
            Response::Interval {
                lower: 5.0,
                upper: f64::INFINITY
            }
        );
        let e = encode_response(ResponseKind::Exact, RawResponse::Value(2.3), None, false).unwrap();
        assert_eq!(e.value, Response::Exact(2.3));
    }

    #[test]
    fn left_censoring_depends_on_domain() {
        let pos = ResponseDatum::left_censored(4.0, true).unwrap();
        assert_eq!(pos.value, Response::Interval { lower: 0.0, upper: 4.0 });
        let real = ResponseDatum::left_censored(4.0, false).unwrap();
        assert_eq!(
            real.value,
            Response::Interval {
                lower: f64::NEG_INFINITY,
                upper: 4.0
            }
        );
    }

    #[test]
    fn ordinal_encoding() {
        let levels: Vec<String> = ["never", "rarely", "sometimes", "often", "always"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let first = encode_response(ResponseKind::Ordinal, RawResponse::Level("never"), Some(&levels), false).unwrap();
        assert_eq!(
            first.value,
            Response::Interval {
                lower: f64::NEG_INFINITY,
                upper: 1.0
            }
        );
        let top = encode_response(
            ResponseKind::Ordinal,
            RawResponse::Level("always"),
            Some(&levels),
            false,
        )
        .unwrap();
        assert_eq!(top.tag, ResponseTag::Ordinal { k: 5, levels: 5 });
        assert!(matches!(
            encode_response(ResponseKind::Ordinal, RawResponse::Level("daily"), Some(&levels), false),
            Err(Error::UnknownLevel { .. })
        ));
    }

    #[test]
    fn encoding_errors() {
        assert!(ResponseDatum::interval(3.0, 3.0).is_err());
        assert!(ResponseDatum::interval(4.0, 3.0).is_err());
        assert!(ResponseDatum::count(-1).is_err());
        assert!(encode_response(ResponseKind::Count, RawResponse::Value(1.5), None, false).is_err());
    }

    #[test]
    fn validation_flags_rows_outside_support() {
        let responses = vec![ResponseDatum::exact(1.0).unwrap(), ResponseDatum::exact(12.0).unwrap()];
        let data = Dataset::from_responses(responses).unwrap();
        let spec = ModelSpec::new(BasisSpec::bernstein(3, 0.0, 10.0), Link::Probit);
        let diag = validate_dataset(&data, &spec).unwrap();
        assert_eq!(diag.rows.len(), 1);
        assert_eq!(diag.rows[0].row, 1);
        assert!(diag.rows[0].message.contains("outside support"));
    }

    #[test]
    fn validation_of_ordinal_levels() {
        let data = Dataset::from_responses(vec![ResponseDatum::ordinal(5, 5).unwrap()]).unwrap();
        let ok = ModelSpec::new(BasisSpec::ordinal(5), Link::Logit);
        assert!(validate_dataset(&data, &ok).unwrap().is_ok());
        let bad = ModelSpec::new(BasisSpec::ordinal(4), Link::Logit);
        assert!(validate_dataset(&data, &bad).is_err());
    }

    #[test]
    fn categorical_expansion_uses_first_level_baseline() {
        let responses = (0..4).map(|i| ResponseDatum::exact(i as f64).unwrap()).collect();
        let mut data = Dataset::from_responses(responses).unwrap();
        let labels: Vec<String> = ["average", "poor", "excellent", "poor"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let levels = vec!["average".into(), "poor".into(), "excellent".into()];
        data.push_categorical("health", &labels, Some(levels), false).unwrap();
        assert_eq!(data.columns, vec!["healthpoor", "healthexcellent"]);
        assert_eq!(data.column("healthpoor").unwrap(), vec![0.0, 1.0, 0.0, 1.0]);
        let sub = data.subset(&[1, 2]);
        assert_eq!(sub.len(), 2);
        assert_eq!(sub.column("healthexcellent").unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn missing_values_rejected() {
        let r = vec![ResponseDatum::exact(1.0).unwrap()];
        assert!(Dataset::new(r, &[vec![f64::NAN]], vec!["x".into()]).is_err());
    }

    proptest! {
        #[test]
        fn interval_encoding_is_idempotent(a in -100.0f64..100.0, w in 0.001f64..50.0) {
            let once = encode_response(ResponseKind::Interval, RawResponse::Bounds(a, a + w), None, false).unwrap();
            let Response::Interval { lower, upper } = once.value else { unreachable!() };
            let twice = encode_response(ResponseKind::Interval, RawResponse::Bounds(lower, upper), None, false).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn consecutive_counts_share_one_endpoint(n in 1i64..10_000) {
            let a = ResponseDatum::count(n).unwrap();
            let b = ResponseDatum::count(n + 1).unwrap();
            let (Response::Interval { upper: ua, lower: la }, Response::Interval { lower: lb, upper: ub }) = (a.value, b.value) else { unreachable!() };
            prop_assert_eq!(ua, lb);
            prop_assert!(la < ua && lb < ub);
        }
    }
}
