//! Permutation score tests: linear statistics T = sum_i g_i (x) r_i of
//! influence values r and a design g, standardised by their conditional
//! moments under random permutation of the rows.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fit::{fit_unconditional, FitOptions};
use crate::likelihood::{score_residuals, ModelSpec};
use crate::numeric::{chisq_sf, correlation, max_abs_normal_cdf, pinv_sym};

/// Draws for Monte-Carlo evaluation of multivariate normal maxima.
const MVN_DRAWS: usize = 100_000;
/// Largest N for which exhaustive enumeration is attempted.
const EXHAUSTIVE_MAX_N: usize = 10;

/// Conditional expectation and covariance of a linear statistic.
#[derive(Debug, Clone)]
pub struct Moments {
    pub statistic: DVector<f64>,
    pub expectation: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Linear statistic and its permutation moments for influence matrix `r`
/// (N x R) and design `g` (N x Q); components are ordered (q, r) with r
/// running fastest.
pub fn moments(r: &DMatrix<f64>, g: &DMatrix<f64>) -> Moments {
    let n = r.nrows();
    let nf = n as f64;
    let (qd, rd) = (g.ncols(), r.ncols());
    let statistic = kron_sum(g, r);
    let sum_g: DVector<f64> = g.row_sum().transpose();
    let mean_r: DVector<f64> = r.row_sum().transpose() / nf;
    let mut expectation = DVector::zeros(qd * rd);
    for q in 0..qd {
        for k in 0..rd {
            expectation[q * rd + k] = sum_g[q] * mean_r[k];
        }
    }
    let mut vh = DMatrix::zeros(rd, rd);
    for i in 0..n {
        let d = r.row(i).transpose() - &mean_r;
        vh += &d * d.transpose();
    }
    vh /= nf;
    let ggt = g.transpose() * g;
    let a = if n > 1 {
        ggt * (nf / (nf - 1.0)) - (&sum_g * sum_g.transpose()) / (nf - 1.0)
    } else {
        DMatrix::zeros(qd, qd)
    };
    let covariance = a.kronecker(&vh);
    Moments {
        statistic,
        expectation,
        covariance,
    }
}

fn kron_sum(g: &DMatrix<f64>, r: &DMatrix<f64>) -> DVector<f64> {
    let prod = g.transpose() * r;
    let (qd, rd) = prod.shape();
    DVector::from_fn(qd * rd, |k, _| prod[(k / rd, k % rd)])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Maximum,
    Quadratic,
}

/// Standardised statistics of a linear statistic given its moments.
struct Standardiser {
    expectation: DVector<f64>,
    sd: Vec<f64>,
    pinv: DMatrix<f64>,
    rank: usize,
}

impl Standardiser {
    fn new(m: &Moments) -> Self {
        let (pinv, rank) = pinv_sym(&m.covariance);
        let max_var = (0..m.covariance.nrows()).fold(0.0f64, |a, i| a.max(m.covariance[(i, i)]));
        let sd = (0..m.covariance.nrows())
            .map(|i| {
                let v = m.covariance[(i, i)];
                if v > 1e-12 * max_var.max(f64::MIN_POSITIVE) {
                    v.sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        Standardiser {
            expectation: m.expectation.clone(),
            sd,
            pinv,
            rank,
        }
    }

    fn maximum(&self, t: &DVector<f64>) -> f64 {
        (0..t.len())
            .filter(|&k| self.sd[k] > 0.0)
            .map(|k| ((t[k] - self.expectation[k]) / self.sd[k]).abs())
            .fold(0.0, f64::max)
    }

    fn quadratic(&self, t: &DVector<f64>) -> f64 {
        let d = t - &self.expectation;
        d.dot(&(&self.pinv * &d)).max(0.0)
    }

    fn both(&self, t: &DVector<f64>) -> (f64, f64) {
        (self.maximum(t), self.quadratic(t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Resampling {
    /// Asymptotic p-values only.
    Asymptotic,
    /// B random permutations from streams of `seed`.
    MonteCarlo { b: usize, seed: u64 },
    /// All N! permutations (N <= 10).
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTestResult {
    /// Linear statistic, Q rows of (location, scale) pairs.
    pub statistic: Vec<Vec<f64>>,
    pub expectation: Vec<Vec<f64>>,
    pub covariance: Vec<Vec<f64>>,
    pub max_statistic: f64,
    pub quadratic_statistic: f64,
    pub rank: usize,
    pub p_max_asymptotic: f64,
    pub p_quadratic_asymptotic: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_max_permutation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_quadratic_permutation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub b: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    pub exhaustive: bool,
    /// Constant influence values or design: nothing to test, p = 1.
    pub degenerate: bool,
}

impl ScoreTestResult {
    /// The p-value reported as authoritative: permutation if available.
    pub fn p_value(&self, stat: Statistic) -> f64 {
        match stat {
            Statistic::Maximum => self.p_max_permutation.unwrap_or(self.p_max_asymptotic),
            Statistic::Quadratic => self.p_quadratic_permutation.unwrap_or(self.p_quadratic_asymptotic),
        }
    }
}

fn to_rows(v: &DVector<f64>, cols: usize) -> Vec<Vec<f64>> {
    v.as_slice().chunks(cols).map(|c| c.to_vec()).collect()
}

fn factorial(n: usize) -> Option<usize> {
    (1..=n).try_fold(1usize, |a, k| a.checked_mul(k))
}

/// Visit every permutation of 0..n (Heap's algorithm).
fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    let mut p: Vec<usize> = (0..n).collect();
    let mut c = vec![0; n];
    f(&p);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                p.swap(0, i);
            } else {
                p.swap(c[i], i);
            }
            f(&p);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

fn permuted_statistic(r: &DMatrix<f64>, g: &DMatrix<f64>, perm: &[usize]) -> DVector<f64> {
    let (qd, rd) = (g.ncols(), r.ncols());
    let mut t = DVector::zeros(qd * rd);
    for (i, &pi) in perm.iter().enumerate() {
        for q in 0..qd {
            let gq = g[(i, q)];
            if gq == 0.0 {
                continue;
            }
            for k in 0..rd {
                t[q * rd + k] += gq * r[(pi, k)];
            }
        }
    }
    t
}

/// Whether a resampled statistic is at least as extreme as the observed one,
/// allowing for rounding in the permuted sums.
fn at_least(s: f64, observed: f64) -> bool {
    s >= observed - 1e-9 * observed.abs().max(1e-12)
}

/// Score test of the columns of `g` against influence values `r`.
pub fn score_test_residuals(r: &DMatrix<f64>, g: &DMatrix<f64>, resampling: &Resampling) -> Result<ScoreTestResult> {
    let n = r.nrows();
    if g.nrows() != n {
        return Err(Error::InvalidArgument(format!(
            "design has {} rows, residuals {}",
            g.nrows(),
            n
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("score test needs at least two rows".into()));
    }
    let m = moments(r, g);
    let st = Standardiser::new(&m);
    let rd = r.ncols();
    let degenerate = st.rank == 0;
    let (max_obs, quad_obs) = st.both(&m.statistic);
    let (p_max_asym, p_quad_asym) = if degenerate {
        (1.0, 1.0)
    } else {
        let keep: Vec<usize> = (0..st.sd.len()).filter(|&k| st.sd[k] > 0.0).collect();
        let corr_full = correlation(&m.covariance);
        let corr = DMatrix::from_fn(keep.len(), keep.len(), |a, b| corr_full[(keep[a], keep[b])]);
        let p_max = 1.0 - max_abs_normal_cdf(&corr, max_obs, MVN_DRAWS, 0);
        (p_max.clamp(0.0, 1.0), chisq_sf(quad_obs, st.rank as f64))
    };
    let mut out = ScoreTestResult {
        statistic: to_rows(&m.statistic, rd),
        expectation: to_rows(&m.expectation, rd),
        covariance: (0..m.covariance.nrows())
            .map(|i| m.covariance.row(i).iter().copied().collect())
            .collect(),
        max_statistic: max_obs,
        quadratic_statistic: quad_obs,
        rank: st.rank,
        p_max_asymptotic: p_max_asym,
        p_quadratic_asymptotic: p_quad_asym,
        p_max_permutation: None,
        p_quadratic_permutation: None,
        b: None,
        seed: None,
        exhaustive: false,
        degenerate,
    };
    let exhaustive = match resampling {
        Resampling::Asymptotic => return Ok(out),
        Resampling::Exhaustive => true,
        Resampling::MonteCarlo { b, .. } => n <= EXHAUSTIVE_MAX_N && factorial(n).is_some_and(|f| *b >= f),
    };
    if degenerate {
        out.p_max_permutation = Some(1.0);
        out.p_quadratic_permutation = Some(1.0);
    } else if exhaustive {
        if n > EXHAUSTIVE_MAX_N {
            return Err(Error::InvalidArgument(format!(
                "exhaustive enumeration limited to N <= {EXHAUSTIVE_MAX_N}"
            )));
        }
        let (mut hits_max, mut hits_quad, mut total) = (0usize, 0usize, 0usize);
        for_each_permutation(n, |perm| {
            let (a, b) = st.both(&permuted_statistic(r, g, perm));
            hits_max += at_least(a, max_obs) as usize;
            hits_quad += at_least(b, quad_obs) as usize;
            total += 1;
        });
        out.p_max_permutation = Some(hits_max as f64 / total as f64);
        out.p_quadratic_permutation = Some(hits_quad as f64 / total as f64);
        out.exhaustive = true;
    } else if let Resampling::MonteCarlo { b, seed } = resampling {
        let b = *b;
        if b == 0 {
            return Err(Error::InvalidArgument("B must be positive".into()));
        }
        let hits: Vec<(bool, bool)> = (0..b)
            .into_par_iter()
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(k as u64);
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng);
                let (a, q) = st.both(&permuted_statistic(r, g, &perm));
                (at_least(a, max_obs), at_least(q, quad_obs))
            })
            .collect();
        let hm = hits.iter().filter(|h| h.0).count();
        let hq = hits.iter().filter(|h| h.1).count();
        out.p_max_permutation = Some((1 + hm) as f64 / (b + 1) as f64);
        out.p_quadratic_permutation = Some((1 + hq) as f64 / (b + 1) as f64);
        out.b = Some(b);
        out.seed = Some(*seed);
    }
    Ok(out)
}

/// Influence matrix (N x 2) of location and scale scores from an
/// unconditional fit.
pub fn residual_matrix(data: &Dataset, spec: &ModelSpec, opts: &FitOptions) -> Result<DMatrix<f64>> {
    let uncond = fit_unconditional(
        data,
        spec,
        &FitOptions {
            compute_vcov: false,
            ..opts.clone()
        },
    )?;
    let res = score_residuals(data, &uncond.spec, &uncond.params)?;
    Ok(DMatrix::from_fn(res.len(), 2, |i, k| res.row(i)[k]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateScoreTest {
    /// Test on both location and scale scores.
    pub bivariate: ScoreTestResult,
    /// Location scores alone (the log-rank test under the cloglog link).
    pub location: ScoreTestResult,
}

/// Bivariate permutation score test of beta = gamma = 0 for the columns of
/// `g`, from the unconditional fit of `spec`.
pub fn score_test(
    data: &Dataset,
    spec: &ModelSpec,
    g: &DMatrix<f64>,
    resampling: &Resampling,
    opts: &FitOptions,
) -> Result<BivariateScoreTest> {
    if data.weights.iter().any(|w| *w != 1.0) {
        return Err(Error::InvalidArgument(
            "permutation score tests require unit case weights".into(),
        ));
    }
    let r = residual_matrix(data, spec, opts)?;
    let bivariate = score_test_residuals(&r, g, resampling)?;
    let loc = r.columns(0, 1).into_owned();
    let location = score_test_residuals(&loc, g, resampling)?;
    Ok(BivariateScoreTest { bivariate, location })
}
