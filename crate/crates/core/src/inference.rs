//! Model-based quantities: distribution curves, the probabilistic index,
//! ROC curves and simultaneous intervals for linear contrasts.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisKind, Endpoint};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::likelihood::{ModelParams, Predictor};
use crate::link::Link;
use crate::numeric::{correlation, equicoordinate_quantile, integrate};

/// Named covariate values for one prediction.
pub trait Covariates {
    fn value(&self, name: &str) -> Option<f64>;
}

impl Covariates for [(&str, f64)] {
    fn value(&self, name: &str) -> Option<f64> {
        self.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

impl<const N: usize> Covariates for [(&str, f64); N] {
    fn value(&self, name: &str) -> Option<f64> {
        self.as_slice().value(name)
    }
}

impl Covariates for HashMap<String, f64> {
    fn value(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

/// Row `i` of a dataset.
pub struct DataRow<'a>(pub &'a Dataset, pub usize);

impl Covariates for DataRow<'_> {
    fn value(&self, name: &str) -> Option<f64> {
        let c = self.0.columns.iter().position(|n| n == name)?;
        Some(self.0.x[(self.1, c)])
    }
}

fn lookup(x: &(impl Covariates + ?Sized), name: &str) -> Result<f64> {
    x.value(name)
        .ok_or_else(|| Error::InvalidArgument(format!("no value for covariate `{name}`")))
}

fn predictor_with(fit: &FitResult, params: &ModelParams, x: &(impl Covariates + ?Sized)) -> Result<Predictor> {
    let spec = &fit.spec;
    let mut mu = params.beta0.unwrap_or(0.0);
    for (name, b) in spec.location.iter().zip(&params.beta) {
        mu += b * lookup(x, name)?;
    }
    let mut eta = 0.0;
    for (name, g) in spec.scale.iter().zip(&params.gamma) {
        eta += g * lookup(x, name)?;
    }
    Ok(Predictor {
        mu,
        inv_scale: (0.5 * eta).exp(),
    })
}

/// Location mu(x) and inverse scale sigma(x)^-1 of the fitted model.
pub fn predictor(fit: &FitResult, x: &(impl Covariates + ?Sized)) -> Result<Predictor> {
    predictor_with(fit, &fit.params, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Cdf,
    Density,
    Survivor,
    Hazard,
    Cumhazard,
    Odds,
    Quantile,
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cdf" | "distribution" => Target::Cdf,
            "density" => Target::Density,
            "survivor" => Target::Survivor,
            "hazard" => Target::Hazard,
            "cumhazard" => Target::Cumhazard,
            "odds" => Target::Odds,
            "quantile" => Target::Quantile,
            other => return Err(Error::Config(format!("unknown prediction target `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRequest {
    pub target: Target,
    /// Response values, or probabilities when `target` is `Quantile`.
    pub grid: Vec<f64>,
    #[serde(default)]
    pub stratum: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveFlag {
    /// A quantile fell outside the basis support and was clamped.
    QuantileClamped,
    /// Hazard of a discrete response: P(Y = y) / P(Y >= y).
    DiscreteHazard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub flags: Vec<CurveFlag>,
}

struct Evaluator<'a> {
    fit: &'a FitResult,
    coef: Vec<f64>,
    pred: Predictor,
}

impl Evaluator<'_> {
    fn h(&self, y: f64) -> Result<f64> {
        Ok(match self.fit.spec.basis.endpoint(y)? {
            Endpoint::NegInf => f64::NEG_INFINITY,
            Endpoint::PosInf => f64::INFINITY,
            Endpoint::Finite(a) => a.iter().zip(&self.coef).map(|(a, t)| a * t).sum(),
        })
    }

    fn z(&self, y: f64) -> Result<f64> {
        let h = self.h(y)?;
        Ok(if h.is_finite() {
            self.pred.inv_scale * h - self.pred.mu
        } else {
            h
        })
    }

    fn link(&self) -> Link {
        self.fit.spec.link
    }

    fn density(&self, y: f64) -> Result<f64> {
        let basis = &self.fit.spec.basis;
        let da = basis.eval_deriv(y)?;
        let dh: f64 = da.iter().zip(&self.coef).map(|(a, t)| a * t).sum();
        Ok(self.link().density(self.z(y)?) * self.pred.inv_scale * dh)
    }

    /// Largest support point strictly below y for discrete bases.
    fn previous_point(&self, y: f64) -> Option<f64> {
        match &self.fit.spec.basis.kind {
            BasisKind::Ordinal { .. } => (y.ceil() - 1.0 >= 1.0).then(|| y.ceil() - 1.0),
            BasisKind::NonParametric { values } => values.iter().rev().find(|v| **v < y).copied(),
            _ => {
                let f = y.floor();
                let p = if f == y { f - 1.0 } else { f };
                (p >= 0.0).then_some(p)
            }
        }
    }

    fn quantile(&self, p: f64, flags: &mut Vec<CurveFlag>) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidArgument(format!("probability {p} outside (0, 1)")));
        }
        let basis = &self.fit.spec.basis;
        let link = self.link();
        let target_z = link.quantile(p)?;
        let (lo, hi) = basis.support();
        match &basis.kind {
            BasisKind::Ordinal { levels } => {
                for k in 1..=*levels {
                    if link.cdf(self.z(k as f64)?) >= p {
                        return Ok(k as f64);
                    }
                }
                Ok(*levels as f64)
            }
            BasisKind::NonParametric { values } => {
                for v in values {
                    if link.cdf(self.z(*v)?) >= p {
                        return Ok(*v);
                    }
                }
                Ok(values[values.len() - 1])
            }
            _ => {
                let hi = if hi.is_finite() {
                    hi
                } else {
                    self.bracket_upper(target_z)?
                };
                let lo = if basis.positive || matches!(basis.kind, BasisKind::LogLinear) {
                    self.bracket_lower(target_z, lo)?
                } else {
                    lo
                };
                if self.z(lo)? >= target_z {
                    flags.push(CurveFlag::QuantileClamped);
                    return Ok(lo);
                }
                if self.z(hi)? < target_z {
                    flags.push(CurveFlag::QuantileClamped);
                    return Ok(hi);
                }
                let (mut a, mut b) = (lo, hi);
                let tol = 1e-10 * (hi - lo).abs().max(1e-300);
                while b - a > tol {
                    let m = 0.5 * (a + b);
                    if self.z(m)? < target_z {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                let y = 0.5 * (a + b);
                Ok(if basis.count_floor { y.ceil() } else { y })
            }
        }
    }

    fn bracket_upper(&self, target: f64) -> Result<f64> {
        let mut hi = 1.0;
        for _ in 0..2000 {
            if self.z(hi)? >= target {
                return Ok(hi);
            }
            hi *= 2.0;
        }
        Ok(hi)
    }

    fn bracket_lower(&self, target: f64, lo: f64) -> Result<f64> {
        let mut v = 1.0;
        for _ in 0..2000 {
            if self.z(v)? <= target {
                return Ok(v);
            }
            v *= 0.5;
        }
        Ok(lo.max(v))
    }
}

fn evaluator<'a>(fit: &'a FitResult, x: &(impl Covariates + ?Sized), stratum: usize) -> Result<Evaluator<'a>> {
    if stratum >= fit.params.theta.len() {
        return Err(Error::InvalidArgument(format!("stratum {stratum} out of range")));
    }
    Ok(Evaluator {
        fit,
        coef: fit.params.coefficients(&fit.spec, stratum)?,
        pred: predictor(fit, x)?,
    })
}

/// Evaluate a distribution curve of the fitted model at covariates `x`.
pub fn predict_curve(fit: &FitResult, x: &(impl Covariates + ?Sized), req: &CurveRequest) -> Result<Curve> {
    let ev = evaluator(fit, x, req.stratum)?;
    let link = fit.spec.link;
    let discrete = !fit.spec.basis.is_continuous();
    let mut flags = Vec::new();
    let mut values = Vec::with_capacity(req.grid.len());
    for &y in &req.grid {
        let v = match req.target {
            Target::Quantile => ev.quantile(y, &mut flags)?,
            Target::Cdf => link.cdf(ev.z(y)?),
            Target::Survivor => link.sf(ev.z(y)?),
            Target::Cumhazard => -link.log_sf(ev.z(y)?),
            Target::Odds => (link.log_cdf(ev.z(y)?) - link.log_sf(ev.z(y)?)).exp(),
            Target::Density => {
                if discrete {
                    return Err(Error::DiscreteDerivative);
                }
                ev.density(y)?
            }
            Target::Hazard => {
                if discrete {
                    let prev = ev.previous_point(y);
                    let z_prev = match prev {
                        Some(p) => ev.z(p)?,
                        None => f64::NEG_INFINITY,
                    };
                    let mass = link.log_interval_prob(z_prev, ev.z(y)?);
                    mass.exp() / link.sf(z_prev)
                } else {
                    ev.density(y)? / link.sf(ev.z(y)?)
                }
            }
        };
        values.push(v);
    }
    if discrete && req.target == Target::Hazard {
        flags.push(CurveFlag::DiscreteHazard);
    }
    flags.dedup();
    Ok(Curve {
        grid: req.grid.clone(),
        values,
        flags,
    })
}

/// P(Y <= Y~) for independent Y | x and Y~ | x~ given location and inverse
/// scale of both.
pub fn probabilistic_index_of(link: Link, a: Predictor, b: Predictor) -> f64 {
    let (sigma, sigma_t) = (1.0 / a.inv_scale, 1.0 / b.inv_scale);
    if link == Link::Probit {
        let d = (sigma_t * b.mu - sigma * a.mu) / (sigma * sigma + sigma_t * sigma_t).sqrt();
        return link.cdf(d);
    }
    // h(Y~) = sigma~ (W + mu~) with W ~ F_Z
    let lo = link.quantile(1e-15).expect("interior probability");
    let hi = link.quantile_upper(1e-15).expect("interior probability");
    let ratio = sigma_t / sigma;
    let v = integrate(|w| link.cdf(ratio * (w + b.mu) - a.mu) * link.density(w), lo, hi, 32);
    v.clamp(0.0, 1.0)
}

/// Probabilistic index P(Y <= Y~ | x, x~) of the fitted model.
pub fn probabilistic_index(
    fit: &FitResult,
    x: &(impl Covariates + ?Sized),
    x_tilde: &(impl Covariates + ?Sized),
) -> Result<f64> {
    Ok(probabilistic_index_of(
        fit.spec.link,
        predictor(fit, x)?,
        predictor(fit, x_tilde)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Delta-method interval for the probabilistic index on the logit scale,
/// with the transformation coefficients treated as fixed.
pub fn pi_confint(
    fit: &FitResult,
    x: &(impl Covariates + ?Sized),
    x_tilde: &(impl Covariates + ?Sized),
    level: f64,
) -> Result<Interval> {
    let v = fit
        .vcov_matrix()
        .ok_or_else(|| Error::InvalidArgument("fit has no covariance matrix".into()))?;
    let est = probabilistic_index(fit, x, x_tilde)?;
    let flat = fit.params.to_vec();
    let n_theta: usize = fit.params.theta.iter().map(|t| t.len()).sum();
    let logit = |p: f64| (p / (1.0 - p)).ln();
    let pi_at = |vals: &[f64]| -> Result<f64> {
        let mut full = flat.clone();
        full[n_theta..].copy_from_slice(vals);
        let p = params_from_flat(fit, &full);
        Ok(probabilistic_index_of(
            fit.spec.link,
            predictor_with(fit, &p, x)?,
            predictor_with(fit, &p, x_tilde)?,
        ))
    };
    let free = &flat[n_theta..];
    let mut grad = vec![0.0; free.len()];
    for k in 0..free.len() {
        let h = 1e-5 * (1.0 + free[k].abs());
        let mut up = free.to_vec();
        up[k] += h;
        let mut dn = free.to_vec();
        dn[k] -= h;
        grad[k] = (logit(pi_at(&up)?) - logit(pi_at(&dn)?)) / (2.0 * h);
    }
    let m = free.len();
    let sub = v.view((n_theta, n_theta), (m, m)).into_owned();
    let g = DVector::from_vec(grad);
    let se = g.dot(&(sub * &g)).max(0.0).sqrt();
    let z = Link::Probit.quantile_upper(0.5 * (1.0 - level))?;
    let expit = |t: f64| 1.0 / (1.0 + (-t).exp());
    let l = logit(est);
    Ok(Interval {
        estimate: est,
        lower: expit(l - z * se),
        upper: expit(l + z * se),
    })
}

fn params_from_flat(fit: &FitResult, v: &[f64]) -> ModelParams {
    let mut k = 0;
    let mut take = |n: usize| {
        let out = v[k..k + n].to_vec();
        k += n;
        out
    };
    let theta = fit.params.theta.iter().map(|t| take(t.len())).collect();
    let beta0 = fit.params.beta0.map(|_| take(1)[0]);
    let beta = take(fit.params.beta.len());
    let gamma = take(fit.params.gamma.len());
    ModelParams {
        theta,
        beta0,
        beta,
        gamma,
    }
}

/// ROC(t) = 1 - F_Z(sigma_1^-1 sigma_0 (F_Z^-1(1 - t) + mu_0) - mu_1) for
/// a non-diseased group with covariates `x0` and a diseased group `x1`.
pub fn roc_curve(
    fit: &FitResult,
    x0: &(impl Covariates + ?Sized),
    x1: &(impl Covariates + ?Sized),
    t: &[f64],
) -> Result<Vec<f64>> {
    let p0 = predictor(fit, x0)?;
    let p1 = predictor(fit, x1)?;
    roc_of(fit.spec.link, p0, p1, t)
}

pub fn roc_of(link: Link, p0: Predictor, p1: Predictor, t: &[f64]) -> Result<Vec<f64>> {
    t.iter()
        .map(|&t| {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidArgument(format!("t = {t} outside (0, 1)")));
            }
            let c = (link.quantile_upper(t)? + p0.mu) / p0.inv_scale;
            Ok(link.sf(p1.inv_scale * c - p1.mu))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimultaneousIntervals {
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub critical_value: f64,
    pub level: f64,
    pub seed: u64,
}

impl SimultaneousIntervals {
    /// Intervals on the exp scale (e.g. hazard ratios).
    pub fn exp(&self) -> Vec<Interval> {
        (0..self.estimates.len())
            .map(|k| Interval {
                estimate: self.estimates[k].exp(),
                lower: self.lower[k].exp(),
                upper: self.upper[k].exp(),
            })
            .collect()
    }
}

const SIMULTANEOUS_DRAWS: usize = 200_000;

/// Single-step max-type intervals for the rows of `contrasts` applied to the
/// flattened parameter vector.
pub fn simultaneous_ci(
    fit: &FitResult,
    contrasts: &DMatrix<f64>,
    level: f64,
    seed: u64,
) -> Result<SimultaneousIntervals> {
    let v = fit
        .vcov_matrix()
        .ok_or_else(|| Error::InvalidArgument("fit has no covariance matrix".into()))?;
    if contrasts.ncols() != v.ncols() {
        return Err(Error::InvalidArgument(format!(
            "contrast matrix has {} columns, model has {} parameters",
            contrasts.ncols(),
            v.ncols()
        )));
    }
    let theta = DVector::from_vec(fit.params.to_vec());
    let est = contrasts * theta;
    let cov = contrasts * v * contrasts.transpose();
    let se: Vec<f64> = (0..cov.nrows()).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    // collapse exact duplicates so the equicoordinate problem stays regular
    let corr_full = correlation(&cov);
    let mut keep: Vec<usize> = Vec::new();
    for i in 0..corr_full.nrows() {
        if !keep.iter().any(|&j| (corr_full[(i, j)] - 1.0).abs() < 1e-12) {
            keep.push(i);
        }
    }
    let corr = DMatrix::from_fn(keep.len(), keep.len(), |a, b| corr_full[(keep[a], keep[b])]);
    let c = equicoordinate_quantile(&corr, level, SIMULTANEOUS_DRAWS, seed)?;
    Ok(SimultaneousIntervals {
        estimates: est.iter().copied().collect(),
        lower: (0..se.len()).map(|k| est[k] - c * se[k]).collect(),
        upper: (0..se.len()).map(|k| est[k] + c * se[k]).collect(),
        std_errors: se,
        critical_value: c,
        level,
        seed,
    })
}

/// Contrast matrix selecting named parameters with given weights, one row
/// per entry of `rows`.
pub fn contrast_matrix(fit: &FitResult, rows: &[Vec<(&str, f64)>]) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(rows.len(), fit.n_params());
    for (r, row) in rows.iter().enumerate() {
        for (name, w) in row {
            let k = fit
                .index_of(name)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter `{name}`")))?;
            m[(r, k)] += w;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(mu: f64, sigma: f64) -> Predictor {
        Predictor {
            mu,
            inv_scale: 1.0 / sigma,
        }
    }

    #[test]
    fn probit_closed_form() {
        let v = probabilistic_index_of(Link::Probit, p(0.0, 1.0), p(1.0, 1.0));
        assert!((v - 0.760_249).abs() < 1e-6);
        assert!((probabilistic_index_of(Link::Logit, p(0.3, 2.0), p(0.3, 2.0)) - 0.5).abs() < 1e-10);
    }

    #[test]
    fn quadrature_matches_probit_closed_form() {
        // run the quadrature branch by hand for the normal
        let link = Link::Probit;
        for (a, b) in [(p(0.2, 1.3), p(-0.5, 0.7)), (p(1.0, 0.5), p(2.0, 2.0))] {
            let closed = probabilistic_index_of(link, a, b);
            let ratio = (1.0 / b.inv_scale) / (1.0 / a.inv_scale);
            let lo = link.quantile(1e-15).unwrap();
            let quad = integrate(|w| link.cdf(ratio * (w + b.mu) - a.mu) * link.density(w), lo, -lo, 32);
            assert!((closed - quad).abs() < 1e-8, "{closed} {quad}");
        }
    }

    #[test]
    fn antisymmetry() {
        for link in Link::ALL {
            let a = p(0.4, 1.5);
            let b = p(-0.3, 0.8);
            let s = probabilistic_index_of(link, a, b) + probabilistic_index_of(link, b, a);
            assert!((s - 1.0).abs() < 1e-8, "{link}: {s}");
        }
    }

    #[test]
    fn roc_identity_and_binormal() {
        let t = [0.1, 0.3, 0.5, 0.9];
        let same = roc_of(Link::Logit, p(0.5, 2.0), p(0.5, 2.0), &t).unwrap();
        for (a, b) in same.iter().zip(&t) {
            assert!((a - b).abs() < 1e-12);
        }
        let shift = roc_of(Link::Probit, p(0.0, 1.0), p(1.0, 1.0), &t).unwrap();
        for (r, t) in shift.iter().zip(&t) {
            let expect = Link::Probit.cdf(1.0 + Link::Probit.quantile(*t).unwrap());
            assert!((r - expect).abs() < 1e-12);
        }
        assert!(roc_of(Link::Probit, p(0.0, 1.0), p(1.0, 1.0), &[1.0]).is_err());
    }
}
