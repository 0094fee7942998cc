//! Log-likelihood contributions, the analytic score, and score residuals.
//!
//! The model is P(Y <= y | x) = F_Z(s(x) h(y) - mu(x)) with
//! s(x) = 1 / sigma(x) = sqrt(exp(x'gamma)) and mu(x) = x'beta, plus an
//! explicit intercept beta0 in the centered parameterization, where h is
//! replaced by h_bar and beta0 is not multiplied by the scale term.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, Endpoint};
use crate::data::{Dataset, Response, ResponseDatum};
use crate::error::{Error, Result};
use crate::link::Link;

/// Rows per reduction block. Partial sums are formed per block and then
/// added in block order, so results do not depend on the thread count.
const BLOCK: usize = 256;
const PAR_THRESHOLD: usize = 4 * BLOCK;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub basis: BasisSpec,
    pub link: Link,
    /// Covariate columns of the location term mu(x).
    #[serde(default)]
    pub location: Vec<String>,
    /// Covariate columns of the scale term, sigma(x)^-1 = sqrt(exp(x'gamma)).
    #[serde(default)]
    pub scale: Vec<String>,
    /// Separate transformation function per dataset stratum.
    #[serde(default)]
    pub stratified: bool,
    /// Identified parameterization with explicit intercept beta0.
    #[serde(default)]
    pub centered: bool,
}

impl ModelSpec {
    pub fn new(basis: BasisSpec, link: Link) -> Self {
        ModelSpec {
            basis,
            link,
            location: Vec::new(),
            scale: Vec::new(),
            stratified: false,
            centered: false,
        }
    }

    pub fn with_location<S: AsRef<str>>(mut self, names: &[S]) -> Self {
        self.location = names.iter().map(|s| s.as_ref().to_string()).collect();
        self
    }

    pub fn with_scale<S: AsRef<str>>(mut self, names: &[S]) -> Self {
        self.scale = names.iter().map(|s| s.as_ref().to_string()).collect();
        self
    }

    pub fn with_centered(mut self, centered: bool) -> Self {
        self.centered = centered;
        self
    }

    pub fn with_stratified(mut self, stratified: bool) -> Self {
        self.stratified = stratified;
        self
    }

    /// Same basis and link with beta = gamma = 0 fixed.
    pub fn unconditional(&self) -> Self {
        ModelSpec {
            basis: self.basis.clone(),
            link: self.link,
            location: Vec::new(),
            scale: Vec::new(),
            stratified: self.stratified,
            centered: false,
        }
    }

    /// Number of working transformation coefficients per stratum.
    pub fn n_theta(&self) -> usize {
        if self.centered {
            self.basis.dim() - 1
        } else {
            self.basis.dim()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.basis.validate()?;
        if self.centered {
            self.basis.coefficient_map(true)?;
        }
        for (term, names) in [("location", &self.location), ("scale", &self.scale)] {
            for (i, a) in names.iter().enumerate() {
                if names[..i].contains(a) {
                    return Err(Error::InvalidSpec(format!(
                        "column `{a}` appears twice in the {term} term"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Parameters (theta, beta0, beta, gamma). `theta` holds the working
/// transformation coefficients, one vector per stratum; in the centered
/// parameterization these are theta_bar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub theta: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta0: Option<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub gamma: Vec<f64>,
}

impl ModelParams {
    /// Zero parameters of the right shape for `spec` and `n_strata`.
    pub fn zeros(spec: &ModelSpec, n_strata: usize) -> Self {
        ModelParams {
            theta: vec![vec![0.0; spec.n_theta()]; n_strata],
            beta0: spec.centered.then_some(0.0),
            beta: vec![0.0; spec.location.len()],
            gamma: vec![0.0; spec.scale.len()],
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.theta.iter().flatten().copied().collect();
        v.extend(self.beta0);
        v.extend_from_slice(&self.beta);
        v.extend_from_slice(&self.gamma);
        v
    }

    pub(crate) fn from_vec(layout: &Layout, v: &[f64]) -> Self {
        ModelParams {
            theta: (0..layout.n_strata)
                .map(|s| v[s * layout.n_theta..(s + 1) * layout.n_theta].to_vec())
                .collect(),
            beta0: layout.has_beta0.then(|| v[layout.beta0_offset()]),
            beta: v[layout.beta_offset()..layout.gamma_offset()].to_vec(),
            gamma: v[layout.gamma_offset()..layout.len()].to_vec(),
        }
    }

    /// Basis coefficients of the transformation function in stratum `s`
    /// (of h_bar in the centered parameterization).
    pub fn coefficients(&self, spec: &ModelSpec, stratum: usize) -> Result<Vec<f64>> {
        let t = &self.theta[stratum];
        if spec.centered {
            spec.basis.expand_centered(t)
        } else {
            Ok(t.clone())
        }
    }

    /// Copy matching coefficients into the shape of `target`; covariates not
    /// present in `source` start at zero.
    pub fn transfer(&self, source: &ModelSpec, target: &ModelSpec) -> Result<ModelParams> {
        let theta = if source.centered == target.centered {
            self.theta.clone()
        } else {
            self.theta
                .iter()
                .map(|t| {
                    if source.centered {
                        let full = source.basis.expand_centered(t)?;
                        let shift = -self.beta0.unwrap_or(0.0);
                        Ok(full.iter().map(|v| v + shift).collect())
                    } else {
                        Ok(target.basis.center(t)?.theta_bar)
                    }
                })
                .collect::<Result<Vec<_>>>()?
        };
        let beta0 = match (source.centered, target.centered) {
            (true, true) => self.beta0,
            (false, true) => Some(
                self.theta
                    .first()
                    .map(|t| target.basis.center(t).map(|c| c.beta0))
                    .transpose()?
                    .unwrap_or(0.0),
            ),
            _ => None,
        };
        let pick = |names: &[String], src_names: &[String], src: &[f64]| -> Vec<f64> {
            names
                .iter()
                .map(|n| src_names.iter().position(|m| m == n).map_or(0.0, |k| src[k]))
                .collect()
        };
        Ok(ModelParams {
            theta,
            beta0,
            beta: pick(&target.location, &source.location, &self.beta),
            gamma: pick(&target.scale, &source.scale, &self.gamma),
        })
    }
}

/// Positions of the parameter blocks in the flattened vector
/// [theta (per stratum), beta0?, beta, gamma].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layout {
    pub n_theta: usize,
    pub n_strata: usize,
    pub has_beta0: bool,
    pub n_loc: usize,
    pub n_sc: usize,
}

impl Layout {
    pub fn theta_len(&self) -> usize {
        self.n_theta * self.n_strata
    }
    pub fn beta0_offset(&self) -> usize {
        self.theta_len()
    }
    pub fn beta_offset(&self) -> usize {
        self.theta_len() + self.has_beta0 as usize
    }
    pub fn gamma_offset(&self) -> usize {
        self.beta_offset() + self.n_loc
    }
    pub fn len(&self) -> usize {
        self.gamma_offset() + self.n_sc
    }
}

/// Location and inverse-scale of one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Predictor {
    pub mu: f64,
    /// s = sigma^-1
    pub inv_scale: f64,
}

impl Predictor {
    pub const NULL: Predictor = Predictor {
        mu: 0.0,
        inv_scale: 1.0,
    };
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact contribution log f(s h(y) - mu) + log s + log h'(y) for
/// basis coefficients `coef`.
pub fn loglik_exact(y: f64, basis: &BasisSpec, link: Link, coef: &[f64], pred: Predictor) -> Result<f64> {
    let a = basis.eval(y)?;
    let da = basis.eval_deriv(y)?;
    let h = dot(&a, coef);
    let dh = dot(&da, coef);
    if !(dh > 0.0) {
        return Err(Error::ConstraintViolation { row: 0 });
    }
    let z = pred.inv_scale * h - pred.mu;
    Ok(link.log_density(z) + pred.inv_scale.ln() + dh.ln())
}

fn endpoint_h(basis: &BasisSpec, v: f64, coef: &[f64]) -> Result<f64> {
    Ok(match basis.endpoint(v)? {
        Endpoint::NegInf => f64::NEG_INFINITY,
        Endpoint::PosInf => f64::INFINITY,
        Endpoint::Finite(a) => dot(&a, coef),
    })
}

fn z_of(h: f64, pred: Predictor) -> f64 {
    if h.is_infinite() {
        h
    } else {
        pred.inv_scale * h - pred.mu
    }
}

/// log P(lower < Y <= upper).
pub fn loglik_interval(
    lower: f64,
    upper: f64,
    basis: &BasisSpec,
    link: Link,
    coef: &[f64],
    pred: Predictor,
) -> Result<f64> {
    let zl = z_of(endpoint_h(basis, lower, coef)?, pred);
    let zu = z_of(endpoint_h(basis, upper, coef)?, pred);
    let ll = link.log_interval_prob(zl, zu);
    if ll.is_nan() || ll == f64::NEG_INFINITY {
        return Err(Error::Underflow { row: 0 });
    }
    Ok(ll)
}

/// Contribution of one datum under basis coefficients `coef`.
pub fn loglik_datum(
    datum: &ResponseDatum,
    basis: &BasisSpec,
    link: Link,
    coef: &[f64],
    pred: Predictor,
) -> Result<f64> {
    match datum.value {
        Response::Exact(y) => loglik_exact(y, basis, link, coef, pred),
        Response::Interval { lower, upper } => loglik_interval(lower, upper, basis, link, coef, pred),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Bound {
    NegInf,
    PosInf,
    Finite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RowKind {
    Exact,
    Interval { lo: Bound, hi: Bound },
}

/// Per-row derivative pieces. d ll / d theta = c_lo * a_lo + c_hi * a_hi,
/// d ll / d mu = d_mu, d ll / d eta = d_eta with s = exp(eta / 2).
#[derive(Debug, Clone, Copy)]
struct RowEval {
    ll: f64,
    c_lo: f64,
    c_hi: f64,
    d_mu: f64,
    d_eta: f64,
}

/// Per-observation offsets added to mu and to x'gamma.
#[derive(Debug, Clone, Default)]
pub(crate) struct Offsets {
    pub location: Vec<f64>,
    pub log_scale: Vec<f64>,
}

/// A dataset and model specification prepared for repeated evaluation:
/// basis vectors are computed once and mapped to the working coefficients.
pub(crate) struct Problem {
    pub layout: Layout,
    pub link: Link,
    pub n: usize,
    kinds: Vec<RowKind>,
    a_lo: Vec<f64>,
    a_hi: Vec<f64>,
    x_loc: Vec<f64>,
    x_sc: Vec<f64>,
    strata: Vec<usize>,
    weights: Vec<f64>,
    offsets: Option<Offsets>,
}

impl Problem {
    pub fn new(data: &Dataset, spec: &ModelSpec) -> Result<Self> {
        Self::with_offsets(data, spec, None)
    }

    pub fn with_offsets(data: &Dataset, spec: &ModelSpec, offsets: Option<Offsets>) -> Result<Self> {
        spec.validate()?;
        let n = data.len();
        if let Some(o) = &offsets {
            if o.location.len() != n || o.log_scale.len() != n {
                return Err(Error::InvalidArgument("offset length differs from N".into()));
            }
            if o.location.iter().chain(&o.log_scale).any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("offsets must be finite".into()));
            }
        }
        let map = spec.basis.coefficient_map(spec.centered)?;
        let nt = map.ncols();
        let p = spec.basis.dim();
        let loc_idx = spec
            .location
            .iter()
            .map(|c| data.column_index(c))
            .collect::<Result<Vec<_>>>()?;
        let sc_idx = spec
            .scale
            .iter()
            .map(|c| data.column_index(c))
            .collect::<Result<Vec<_>>>()?;
        let (strata, n_strata) = if spec.stratified {
            let s = data
                .strata
                .as_ref()
                .ok_or_else(|| Error::InvalidSpec("stratified model but dataset has no strata".into()))?;
            (s.codes.clone(), s.levels.len())
        } else {
            (vec![0; n], 1)
        };
        let mapped = |a: &[f64], out: &mut [f64]| {
            for c in 0..nt {
                out[c] = (0..p).map(|r| a[r] * map[(r, c)]).sum();
            }
        };
        let mut kinds = Vec::with_capacity(n);
        let mut a_lo = vec![0.0; n * nt];
        let mut a_hi = vec![0.0; n * nt];
        let mut buf = vec![0.0; p];
        let bound = |v: f64, out: &mut [f64], row: usize| -> Result<Bound> {
            match spec.basis.endpoint(v).map_err(|e| row_error(e, row))? {
                Endpoint::NegInf => Ok(Bound::NegInf),
                Endpoint::PosInf => Ok(Bound::PosInf),
                Endpoint::Finite(a) => {
                    mapped(&a, out);
                    Ok(Bound::Finite)
                }
            }
        };
        for (i, r) in data.responses.iter().enumerate() {
            let lo = &mut a_lo[i * nt..(i + 1) * nt];
            let hi = &mut a_hi[i * nt..(i + 1) * nt];
            match r.value {
                Response::Exact(y) => {
                    spec.basis.eval_into(y, &mut buf).map_err(|e| row_error(e, i))?;
                    mapped(&buf, lo);
                    spec.basis.eval_deriv_into(y, &mut buf).map_err(|e| row_error(e, i))?;
                    mapped(&buf, hi);
                    kinds.push(RowKind::Exact);
                }
                Response::Interval { lower, upper } => {
                    let lo_b = bound(lower, lo, i)?;
                    let hi_b = bound(upper, hi, i)?;
                    kinds.push(RowKind::Interval { lo: lo_b, hi: hi_b });
                }
            }
        }
        let gather = |idx: &[usize]| -> Vec<f64> {
            let mut out = Vec::with_capacity(n * idx.len());
            for i in 0..n {
                out.extend(idx.iter().map(|&c| data.x[(i, c)]));
            }
            out
        };
        Ok(Problem {
            layout: Layout {
                n_theta: nt,
                n_strata,
                has_beta0: spec.centered,
                n_loc: loc_idx.len(),
                n_sc: sc_idx.len(),
            },
            link: spec.link,
            n,
            kinds,
            a_lo,
            a_hi,
            x_loc: gather(&loc_idx),
            x_sc: gather(&sc_idx),
            strata,
            weights: data.weights.clone(),
            offsets,
        })
    }

    fn predictor(&self, i: usize, v: &[f64]) -> (f64, f64) {
        let l = &self.layout;
        let mut mu = if l.has_beta0 { v[l.beta0_offset()] } else { 0.0 };
        let beta = &v[l.beta_offset()..l.gamma_offset()];
        mu += dot(&self.x_loc[i * l.n_loc..(i + 1) * l.n_loc], beta);
        let gamma = &v[l.gamma_offset()..l.len()];
        let mut eta = dot(&self.x_sc[i * l.n_sc..(i + 1) * l.n_sc], gamma);
        if let Some(o) = &self.offsets {
            mu += o.location[i];
            eta += o.log_scale[i];
        }
        (mu, eta)
    }

    fn theta<'a>(&self, i: usize, v: &'a [f64]) -> &'a [f64] {
        let nt = self.layout.n_theta;
        let s = self.strata[i];
        &v[s * nt..(s + 1) * nt]
    }

    fn row(&self, i: usize, v: &[f64]) -> Result<RowEval> {
        let nt = self.layout.n_theta;
        let theta = self.theta(i, v);
        let (mu, eta) = self.predictor(i, v);
        let s = (0.5 * eta).exp();
        if !s.is_finite() || s <= 0.0 {
            return Err(Error::Underflow { row: i });
        }
        let a_lo = &self.a_lo[i * nt..(i + 1) * nt];
        let a_hi = &self.a_hi[i * nt..(i + 1) * nt];
        let link = self.link;
        match self.kinds[i] {
            RowKind::Exact => {
                let h = dot(a_lo, theta);
                let dh = dot(a_hi, theta);
                if !(dh > 0.0) {
                    return Err(Error::ConstraintViolation { row: i });
                }
                let z = s * h - mu;
                let dlf = link.log_density_deriv(z);
                let ll = link.log_density(z) + 0.5 * eta + dh.ln();
                if !ll.is_finite() {
                    return Err(Error::Underflow { row: i });
                }
                Ok(RowEval {
                    ll,
                    c_lo: dlf * s,
                    c_hi: 1.0 / dh,
                    d_mu: -dlf,
                    d_eta: 0.5 * (dlf * s * h + 1.0),
                })
            }
            RowKind::Interval { lo, hi } => {
                let h_of = |b: Bound, a: &[f64]| match b {
                    Bound::NegInf => f64::NEG_INFINITY,
                    Bound::PosInf => f64::INFINITY,
                    Bound::Finite => dot(a, theta),
                };
                let hl = h_of(lo, a_lo);
                let hu = h_of(hi, a_hi);
                let zl = if hl.is_finite() { s * hl - mu } else { hl };
                let zu = if hu.is_finite() { s * hu - mu } else { hu };
                let ll = link.log_interval_prob(zl, zu);
                if !ll.is_finite() {
                    return Err(Error::Underflow { row: i });
                }
                let wl = if zl.is_finite() {
                    (link.log_density(zl) - ll).exp()
                } else {
                    0.0
                };
                let wu = if zu.is_finite() {
                    (link.log_density(zu) - ll).exp()
                } else {
                    0.0
                };
                let hl_term = if zl.is_finite() { wl * s * hl } else { 0.0 };
                let hu_term = if zu.is_finite() { wu * s * hu } else { 0.0 };
                Ok(RowEval {
                    ll,
                    c_lo: -s * wl,
                    c_hi: s * wu,
                    d_mu: wl - wu,
                    d_eta: 0.5 * (hu_term - hl_term),
                })
            }
        }
    }

    fn accumulate(&self, i: usize, r: &RowEval, w: f64, grad: &mut [f64]) {
        let l = &self.layout;
        let nt = l.n_theta;
        let s = self.strata[i];
        let g = &mut grad[s * nt..(s + 1) * nt];
        let a_lo = &self.a_lo[i * nt..(i + 1) * nt];
        let a_hi = &self.a_hi[i * nt..(i + 1) * nt];
        let (clo, chi) = (w * r.c_lo, w * r.c_hi);
        if clo != 0.0 {
            for (gk, ak) in g.iter_mut().zip(a_lo) {
                *gk += clo * ak;
            }
        }
        if chi != 0.0 {
            for (gk, ak) in g.iter_mut().zip(a_hi) {
                *gk += chi * ak;
            }
        }
        let dmu = w * r.d_mu;
        if l.has_beta0 {
            grad[l.beta0_offset()] += dmu;
        }
        let bo = l.beta_offset();
        for (k, x) in self.x_loc[i * l.n_loc..(i + 1) * l.n_loc].iter().enumerate() {
            grad[bo + k] += dmu * x;
        }
        let deta = w * r.d_eta;
        let go = l.gamma_offset();
        for (k, x) in self.x_sc[i * l.n_sc..(i + 1) * l.n_sc].iter().enumerate() {
            grad[go + k] += deta * x;
        }
    }

    fn block(&self, range: std::ops::Range<usize>, v: &[f64], with_grad: bool) -> Result<(f64, Vec<f64>)> {
        let mut ll = 0.0;
        let mut grad = if with_grad { vec![0.0; v.len()] } else { Vec::new() };
        for i in range {
            let w = self.weights[i];
            if w == 0.0 {
                continue;
            }
            let r = self.row(i, v)?;
            ll += w * r.ll;
            if with_grad {
                self.accumulate(i, &r, w, &mut grad);
            }
        }
        Ok((ll, grad))
    }

    fn reduce(&self, v: &[f64], with_grad: bool) -> Result<(f64, Vec<f64>)> {
        let ranges: Vec<_> = (0..self.n)
            .step_by(BLOCK)
            .map(|start| start..(start + BLOCK).min(self.n))
            .collect();
        let parts: Vec<Result<(f64, Vec<f64>)>> = if self.n >= PAR_THRESHOLD {
            ranges.into_par_iter().map(|r| self.block(r, v, with_grad)).collect()
        } else {
            ranges.into_iter().map(|r| self.block(r, v, with_grad)).collect()
        };
        let mut ll = 0.0;
        let mut grad = if with_grad { vec![0.0; v.len()] } else { Vec::new() };
        for part in parts {
            let (l, g) = part?;
            ll += l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        Ok((ll, grad))
    }

    pub fn loglik(&self, v: &[f64]) -> Result<f64> {
        self.reduce(v, false).map(|(l, _)| l)
    }

    pub fn loglik_grad(&self, v: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.reduce(v, true)
    }

    /// Per-row derivatives with respect to a location offset and a log-scale
    /// offset (the gamma direction of an intercept scale column).
    pub fn residuals(&self, v: &[f64]) -> Result<ScoreResiduals> {
        let mut location = Vec::with_capacity(self.n);
        let mut scale = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let r = self.row(i, v)?;
            location.push(r.d_mu);
            scale.push(r.d_eta);
        }
        Ok(ScoreResiduals { location, scale })
    }

    pub fn stratum(&self, i: usize) -> usize {
        self.strata[i]
    }
}

fn row_error(e: Error, row: usize) -> Error {
    match e {
        Error::OutsideSupport { value, lower, upper } => Error::Data {
            row: Some(row),
            column: None,
            message: format!("response {value} outside basis support [{lower}, {upper}]"),
        },
        Error::DiscreteDerivative => Error::Data {
            row: Some(row),
            column: None,
            message: "exact response under a discrete basis".into(),
        },
        other => other,
    }
}

/// N x 2 matrix of per-observation scores (d/d mu, d/d gamma) where the
/// scale enters as sqrt(exp(gamma)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResiduals {
    pub location: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ScoreResiduals {
    pub fn len(&self) -> usize {
        self.location.len()
    }

    pub fn is_empty(&self) -> bool {
        self.location.is_empty()
    }

    pub fn row(&self, i: usize) -> [f64; 2] {
        [self.location[i], self.scale[i]]
    }

    pub fn subset(&self, idx: &[usize]) -> ScoreResiduals {
        ScoreResiduals {
            location: idx.iter().map(|&i| self.location[i]).collect(),
            scale: idx.iter().map(|&i| self.scale[i]).collect(),
        }
    }
}

fn n_strata(data: &Dataset, spec: &ModelSpec) -> usize {
    if spec.stratified {
        data.strata.as_ref().map_or(1, |s| s.levels.len())
    } else {
        1
    }
}

fn check_shape(data: &Dataset, spec: &ModelSpec, params: &ModelParams) -> Result<()> {
    let ok = params.theta.len() == n_strata(data, spec)
        && params.theta.iter().all(|t| t.len() == spec.n_theta())
        && params.beta0.is_some() == spec.centered
        && params.beta.len() == spec.location.len()
        && params.gamma.len() == spec.scale.len();
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(
            "parameter shape does not match the model specification".into(),
        ))
    }
}

/// Weighted log-likelihood of the whole dataset.
pub fn total_loglik(data: &Dataset, spec: &ModelSpec, params: &ModelParams) -> Result<f64> {
    check_shape(data, spec, params)?;
    Problem::new(data, spec)?.loglik(&params.to_vec())
}

/// Unweighted contribution of row `i`.
pub fn contribution(data: &Dataset, spec: &ModelSpec, params: &ModelParams, i: usize) -> Result<f64> {
    check_shape(data, spec, params)?;
    if i >= data.len() {
        return Err(Error::InvalidArgument(format!("row {i} out of range")));
    }
    let sub = data.subset(&[i]).with_weights(vec![1.0])?;
    Problem::new(&sub, spec)?.loglik(&params.to_vec())
}

/// Analytic gradient of [`total_loglik`] in the order of
/// [`ModelParams::to_vec`].
pub fn score(data: &Dataset, spec: &ModelSpec, params: &ModelParams) -> Result<Vec<f64>> {
    check_shape(data, spec, params)?;
    Problem::new(data, spec)?.loglik_grad(&params.to_vec()).map(|(_, g)| g)
}

/// Per-observation location and scale scores evaluated at `params`
/// (usually an unconditional fit, so at beta = gamma = 0).
pub fn score_residuals(data: &Dataset, spec: &ModelSpec, params: &ModelParams) -> Result<ScoreResiduals> {
    check_shape(data, spec, params)?;
    Problem::new(data, spec)?.residuals(&params.to_vec())
}

/// Names of the flattened parameters.
pub fn parameter_names(spec: &ModelSpec, strata: Option<&[String]>) -> Vec<String> {
    let mut names = Vec::new();
    let nt = spec.n_theta();
    match strata {
        Some(levels) if spec.stratified => {
            for l in levels {
                names.extend((1..=nt).map(|k| format!("theta[{l}][{k}]")));
            }
        }
        _ => names.extend((1..=nt).map(|k| format!("theta[{k}]"))),
    }
    if spec.centered {
        names.push("(Intercept)".to_string());
    }
    names.extend(spec.location.iter().map(|c| format!("loc:{c}")));
    names.extend(spec.scale.iter().map(|c| format!("scale:{c}")));
    names
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_log_linear() -> (BasisSpec, Vec<f64>) {
        // on the exp scale log-linear h(t) = log t is the identity in log t;
        // with y = exp(u) the Jacobian is 1 / y, so use Bernstein instead:
        // h(y) = y on [-1, 1] is theta = (-1, 1) for order 1.
        (BasisSpec::bernstein(1, -1.0, 1.0), vec![-1.0, 1.0])
    }

    #[test]
    fn exact_standard_normal() {
        let (b, coef) = identity_log_linear();
        let ll = loglik_exact(0.0, &b, Link::Probit, &coef, Predictor::NULL).unwrap();
        assert!((ll - (-0.918_938_5)).abs() < 1e-7);
        let scaled = Predictor {
            mu: 0.0,
            inv_scale: 2.0,
        };
        let ll2 = loglik_exact(0.0, &b, Link::Probit, &coef, scaled).unwrap();
        assert!((ll2 - (-0.918_938_533_204_672_8 + 2f64.ln())).abs() < 1e-12);
        assert!((ll2 - (-0.2258)).abs() < 1e-4);
    }

    #[test]
    fn interval_examples() {
        let (b, coef) = identity_log_linear();
        let ll = loglik_interval(0.0, f64::INFINITY, &b, Link::Logit, &coef, Predictor::NULL).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-15);
        let ord = BasisSpec::ordinal(2);
        let ll = loglik_interval(f64::NEG_INFINITY, 1.0, &ord, Link::Probit, &[0.0], Predictor::NULL).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn decreasing_h_is_rejected() {
        let b = BasisSpec::bernstein(1, -1.0, 1.0);
        assert!(matches!(
            loglik_exact(0.0, &b, Link::Logit, &[1.0, -1.0], Predictor::NULL),
            Err(Error::ConstraintViolation { .. })
        ));
    }

    #[test]
    fn zero_weight_row_contributes_nothing() {
        let b = BasisSpec::bernstein(3, 0.0, 4.0);
        let spec = ModelSpec::new(b, Link::Logit);
        let r: Vec<_> = [0.5, 1.0, 2.0, 3.5]
            .iter()
            .map(|&y| ResponseDatum::exact(y).unwrap())
            .collect();
        let full = Dataset::from_responses(r.clone()).unwrap();
        let weighted = full.clone().with_weights(vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        let dropped = Dataset::from_responses(vec![r[0], r[2], r[3]]).unwrap();
        let params = ModelParams {
            theta: vec![vec![-2.0, -0.5, 0.5, 2.0]],
            beta0: None,
            beta: vec![],
            gamma: vec![],
        };
        let a = total_loglik(&weighted, &spec, &params).unwrap();
        let b = total_loglik(&dropped, &spec, &params).unwrap();
        assert_eq!(a, b);
        let ga = score(&weighted, &spec, &params).unwrap();
        let gb = score(&dropped, &spec, &params).unwrap();
        assert_eq!(ga, gb);
    }

    #[test]
    fn weight_two_equals_duplicate_row() {
        let spec = ModelSpec::new(BasisSpec::bernstein(3, 0.0, 4.0), Link::Cloglog);
        let r: Vec<_> = [0.5, 2.0, 3.5]
            .iter()
            .map(|&y| ResponseDatum::exact(y).unwrap())
            .collect();
        let params = ModelParams {
            theta: vec![vec![-2.0, -0.5, 0.5, 1.0]],
            beta0: None,
            beta: vec![],
            gamma: vec![],
        };
        let w = Dataset::from_responses(r.clone())
            .unwrap()
            .with_weights(vec![1.0, 2.0, 1.0])
            .unwrap();
        let dup = Dataset::from_responses(vec![r[0], r[1], r[1], r[2]]).unwrap();
        let a = total_loglik(&w, &spec, &params).unwrap();
        let b = total_loglik(&dup, &spec, &params).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn singleton_equals_contribution() {
        let spec = ModelSpec::new(BasisSpec::bernstein(2, 0.0, 1.0), Link::Loglog);
        let params = ModelParams {
            theta: vec![vec![-1.0, 0.0, 1.5]],
            beta0: None,
            beta: vec![],
            gamma: vec![],
        };
        let d = Dataset::from_responses(vec![ResponseDatum::interval(0.2, 0.6).unwrap()]).unwrap();
        let total = total_loglik(&d, &spec, &params).unwrap();
        let direct = loglik_interval(0.2, 0.6, &spec.basis, spec.link, &params.theta[0], Predictor::NULL).unwrap();
        assert_eq!(total, direct);
        assert_eq!(contribution(&d, &spec, &params, 0).unwrap(), direct);
    }

    #[test]
    fn count_probabilities_sum_to_one() {
        let basis = BasisSpec::bernstein(4, 0.0, 20.0).with_count_floor();
        let coef = [-2.0, -0.3, 0.4, 1.1, 2.5];
        for pred in [
            Predictor::NULL,
            Predictor {
                mu: 0.7,
                inv_scale: 1.4,
            },
        ] {
            for link in Link::ALL {
                let mut total = 0.0;
                for n in 0..=20 {
                    let d = ResponseDatum::count(n).unwrap();
                    let Response::Interval { lower, upper } = d.value else {
                        unreachable!()
                    };
                    total += loglik_interval(lower, upper, &basis, link, &coef, pred).unwrap().exp();
                }
                total += loglik_interval(20.0, f64::INFINITY, &basis, link, &coef, pred)
                    .unwrap()
                    .exp();
                assert!((total - 1.0).abs() < 1e-12, "{link}: {total}");
            }
        }
    }

    #[test]
    fn parameter_name_order() {
        let spec = ModelSpec::new(BasisSpec::bernstein(2, 0.0, 1.0), Link::Logit)
            .with_location(&["x1"])
            .with_scale(&["x2"])
            .with_centered(true);
        assert_eq!(
            parameter_names(&spec, None),
            vec!["theta[1]", "theta[2]", "(Intercept)", "loc:x1", "scale:x2"]
        );
    }
}
