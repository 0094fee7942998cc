//! Constrained maximum-likelihood estimation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::BasisKind;
#[cfg(test)]
use crate::basis::BasisSpec;
use crate::data::{Dataset, Response};
use crate::error::{Error, Result};
use crate::likelihood::{parameter_names, Layout, ModelParams, ModelSpec, Offsets, Problem};
use crate::numeric::{chisq_sf, pinv_sym};
use crate::optim::{augmented_lagrangian, bfgs, polish, MinState, Objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Augmented Lagrangian on the linear monotonicity constraints.
    #[default]
    AugmentedLagrangian,
    /// Unconstrained BFGS in theta = A (eps + exp(eta)).
    Reparameterized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Convergence tolerance on the projected gradient (sup norm).
    pub gtol: f64,
    /// Minimal increment of consecutive coefficients.
    pub epsilon: f64,
    pub optimizer: Optimizer,
    pub compute_vcov: bool,
    #[serde(skip)]
    pub start: Option<ModelParams>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 1000,
            gtol: 1e-6,
            epsilon: 1e-8,
            optimizer: Optimizer::default(),
            compute_vcov: true,
            start: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    NotConverged,
    SingularInformation,
    ScaleDivergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub params: ModelParams,
    pub parameter_names: Vec<String>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Indices of the monotonicity constraints holding with equality.
    pub active_constraints: Vec<usize>,
    /// Covariance of all parameters, computed on the subspace left free by
    /// the active constraints.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub vcov: Option<Vec<Vec<f64>>>,
    pub flags: Vec<FitFlag>,
    pub n_obs: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub strata_levels: Option<Vec<String>>,
}

impl FitResult {
    pub fn n_params(&self) -> usize {
        self.parameter_names.len()
    }

    pub fn vcov_matrix(&self) -> Option<DMatrix<f64>> {
        let v = self.vcov.as_ref()?;
        let n = v.len();
        Some(DMatrix::from_fn(n, n, |i, j| v[i][j]))
    }

    pub fn std_errors(&self) -> Option<Vec<f64>> {
        let v = self.vcov.as_ref()?;
        Some((0..v.len()).map(|i| v[i][i].max(0.0).sqrt()).collect())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.parameter_names.iter().position(|n| n == name)
    }

    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.params.to_vec()[i])
    }

    /// Location coefficient of column `name`.
    pub fn beta(&self, name: &str) -> Option<f64> {
        self.spec
            .location
            .iter()
            .position(|c| c == name)
            .map(|k| self.params.beta[k])
    }

    /// Scale coefficient of column `name`.
    pub fn gamma(&self, name: &str) -> Option<f64> {
        self.spec
            .scale
            .iter()
            .position(|c| c == name)
            .map(|k| self.params.gamma[k])
    }

    pub fn aic(&self) -> f64 {
        -2.0 * self.loglik + 2.0 * self.n_params() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

fn check_identifiable(data: &Dataset, spec: &ModelSpec, problem: &Problem) -> Result<()> {
    let rows: Vec<usize> = (0..data.len()).filter(|&i| data.weights[i] > 0.0).collect();
    if rows.is_empty() {
        return Err(Error::data("all observation weights are zero"));
    }
    let n_strata = problem.layout.n_strata;
    for s in 0..n_strata {
        let in_s: Vec<usize> = rows.iter().copied().filter(|&i| problem.stratum(i) == s).collect();
        if spec.stratified && in_s.len() < 2 {
            return Err(Error::NonIdentifiable(format!(
                "stratum {s} has fewer than two observations"
            )));
        }
        let first = in_s.first().map(|&i| data.responses[i].value);
        if in_s.len() > 1 && in_s.iter().all(|&i| Some(data.responses[i].value) == first) {
            return Err(Error::NonIdentifiable(
                "all responses in a stratum are identical".into(),
            ));
        }
    }
    for name in spec.location.iter().chain(&spec.scale) {
        let c = data.column_index(name)?;
        let v0 = data.x[(rows[0], c)];
        if rows.iter().all(|&i| data.x[(i, c)] == v0) {
            return Err(Error::NonIdentifiable(format!("covariate `{name}` is constant")));
        }
    }
    Ok(())
}

/// Pool-adjacent-violators fit of a non-decreasing sequence.
fn pava(v: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(v.len());
    for &x in v {
        blocks.push((x, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a <= b {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().expect("two blocks");
            *last = ((a * na as f64 + b * nb as f64) / (na + nb) as f64, na + nb);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, n)| std::iter::repeat(m).take(n))
        .collect()
}

/// Enforce increments of at least `gap` while keeping the mean.
fn spread(v: &mut [f64], gap: f64) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for k in 1..v.len() {
        if v[k] < v[k - 1] + gap {
            v[k] = v[k - 1] + gap;
        }
    }
    let shift = mean - v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x += shift);
}

fn representative(value: Response) -> Option<f64> {
    match value {
        Response::Exact(y) => Some(y),
        Response::Interval { lower, upper } => match (lower.is_finite(), upper.is_finite()) {
            (true, true) => Some(0.5 * (lower + upper)),
            (true, false) => Some(lower),
            (false, true) => Some(upper),
            _ => None,
        },
    }
}

/// Rank-based normal scores p = (rank - 1/2) / n with averaged ties.
fn ecdf_scores(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut p = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            p[k] = (r - 0.5) / n as f64;
        }
        i = j + 1;
    }
    p
}

/// Starting coefficients (on the basis scale) for one stratum.
fn start_coefficients(data: &Dataset, spec: &ModelSpec, rows: &[usize]) -> Result<Vec<f64>> {
    let basis = &spec.basis;
    let link = spec.link;
    let p = basis.dim();
    let q = |u: f64| link.quantile(u.clamp(1e-4, 1.0 - 1e-4));
    let reps: Vec<f64> = rows
        .iter()
        .filter_map(|&i| representative(data.responses[i].value))
        .collect();
    let mut theta = match &basis.kind {
        BasisKind::Bernstein { support, .. } => {
            let pts: Vec<f64> = reps.iter().map(|y| y.clamp(support[0], support[1])).collect();
            let scores = ecdf_scores(&pts);
            let mut ata = DMatrix::<f64>::identity(p, p) * 1e-6;
            let mut atb = nalgebra::DVector::<f64>::zeros(p);
            for (y, u) in pts.iter().zip(&scores) {
                let a = nalgebra::DVector::from_vec(basis.eval(*y)?);
                let t = q(*u)?;
                ata += &a * a.transpose();
                atb += &a * t;
            }
            let sol = ata
                .cholesky()
                .map(|c| c.solve(&atb))
                .ok_or_else(|| Error::Convergence("singular start-value system".into()))?;
            pava(sol.as_slice())
        }
        BasisKind::LogLinear => {
            let logs: Vec<f64> = reps.iter().filter(|y| **y > 0.0).map(|y| y.ln()).collect();
            let scores = ecdf_scores(&logs);
            let t: Vec<f64> = scores.iter().map(|u| q(*u)).collect::<Result<_>>()?;
            let n = logs.len().max(1) as f64;
            let (mx, mt) = (logs.iter().sum::<f64>() / n, t.iter().sum::<f64>() / n);
            let sxx: f64 = logs.iter().map(|x| (x - mx).powi(2)).sum();
            let sxt: f64 = logs.iter().zip(&t).map(|(x, t)| (x - mx) * (t - mt)).sum();
            let slope = if sxx > 0.0 { (sxt / sxx).max(0.1) } else { 1.0 };
            vec![mt - slope * mx, slope]
        }
        BasisKind::Ordinal { .. } | BasisKind::NonParametric { .. } => {
            let cuts: Vec<f64> = match &basis.kind {
                BasisKind::Ordinal { levels } => (1..*levels).map(|k| k as f64).collect(),
                BasisKind::NonParametric { values } => values[..values.len() - 1].to_vec(),
                _ => unreachable!(),
            };
            let uppers: Vec<f64> = rows
                .iter()
                .map(|&i| match data.responses[i].value {
                    Response::Exact(y) => y,
                    Response::Interval { lower, upper } => {
                        if upper.is_finite() {
                            upper
                        } else {
                            lower
                        }
                    }
                })
                .collect();
            let n = uppers.len() as f64;
            let v = cuts
                .iter()
                .map(|c| {
                    let below = uppers.iter().filter(|u| **u <= *c).count() as f64;
                    q((below + 0.5) / (n + 1.0))
                })
                .collect::<Result<Vec<_>>>()?;
            pava(&v)
        }
    };
    if !matches!(basis.kind, BasisKind::LogLinear) && p > 1 {
        let range = theta[p - 1] - theta[0];
        let gap = (1e-3 * range / p as f64).max(1e-3);
        spread(&mut theta, gap);
    }
    Ok(theta)
}

fn stratum_rows(data: &Dataset, problem: &Problem, s: usize) -> Vec<usize> {
    (0..data.len())
        .filter(|&i| data.weights[i] > 0.0 && problem.stratum(i) == s)
        .collect()
}

fn default_start(data: &Dataset, spec: &ModelSpec, problem: &Problem) -> Result<Vec<f64>> {
    let l = problem.layout;
    let mut theta = Vec::with_capacity(l.n_strata);
    let mut beta0 = None;
    for s in 0..l.n_strata {
        let full = start_coefficients(data, spec, &stratum_rows(data, problem, s))?;
        if spec.centered {
            let c = spec.basis.center(&full)?;
            if beta0.is_none() {
                beta0 = Some(c.beta0);
            }
            theta.push(c.theta_bar);
        } else {
            theta.push(full);
        }
    }
    Ok(ModelParams {
        theta,
        beta0,
        beta: vec![0.0; l.n_loc],
        gamma: vec![0.0; l.n_sc],
    }
    .to_vec())
}

/// Monotonicity constraints on the working vector: block-diagonal D M.
fn working_constraints(spec: &ModelSpec, layout: &Layout) -> Result<DMatrix<f64>> {
    let d = spec.basis.monotone_constraints().rows;
    let m = spec.basis.coefficient_map(spec.centered)?;
    let block = &d * &m;
    let (r, c) = block.shape();
    let mut out = DMatrix::zeros(r * layout.n_strata, layout.len());
    for s in 0..layout.n_strata {
        out.view_mut((s * r, s * c), (r, c)).copy_from(&block);
    }
    Ok(out)
}

fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().fold(0.0f64, |a, v| a.max(*v));
    sv.iter().filter(|v| **v > 1e-10 * max.max(1.0)).count()
}

/// theta = A w with w_k = eta_k for free rows and eps + exp(eta_k) for
/// constrained rows; A inverts the constraint rows augmented by unit rows.
struct Reparam {
    layout: Layout,
    a: DMatrix<f64>,
    rows: DMatrix<f64>,
    free: Vec<bool>,
    eps: f64,
}

impl Reparam {
    fn new(spec: &ModelSpec, layout: Layout, eps: f64) -> Result<Self> {
        let d = spec.basis.monotone_constraints().rows;
        let block = &d * spec.basis.coefficient_map(spec.centered)?;
        let nt = layout.n_theta;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut free = Vec::new();
        let mut current = DMatrix::<f64>::zeros(0, nt);
        for k in 0..nt {
            if rows.len() + block.nrows() >= nt {
                break;
            }
            let mut cand = current.clone().insert_row(current.nrows(), 0.0);
            let last = cand.nrows() - 1;
            cand[(last, k)] = 1.0;
            let with_block = stack(&cand, &block);
            if rank(&with_block) > rank(&stack(&current, &block)) {
                let mut e = vec![0.0; nt];
                e[k] = 1.0;
                rows.push(e);
                free.push(true);
                current = cand;
            }
        }
        for r in 0..block.nrows() {
            rows.push(block.row(r).iter().copied().collect());
            free.push(false);
        }
        let aug = DMatrix::from_fn(nt, nt, |i, j| rows[i][j]);
        let a = aug
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidSpec("constraint system is not invertible".into()))?;
        Ok(Reparam {
            layout,
            a,
            rows: aug,
            free,
            eps,
        })
    }

    fn forward(&self, eta: &[f64]) -> Vec<f64> {
        let nt = self.layout.n_theta;
        let mut v = eta.to_vec();
        for s in 0..self.layout.n_strata {
            let w: Vec<f64> = (0..nt)
                .map(|k| {
                    let e = eta[s * nt + k];
                    if self.free[k] {
                        e
                    } else {
                        self.eps + e.exp()
                    }
                })
                .collect();
            for i in 0..nt {
                v[s * nt + i] = (0..nt).map(|k| self.a[(i, k)] * w[k]).sum();
            }
        }
        v
    }

    fn pullback(&self, eta: &[f64], g: &[f64]) -> Vec<f64> {
        let nt = self.layout.n_theta;
        let mut out = g.to_vec();
        for s in 0..self.layout.n_strata {
            for k in 0..nt {
                let gw: f64 = (0..nt).map(|i| self.a[(i, k)] * g[s * nt + i]).sum();
                let dw = if self.free[k] { 1.0 } else { eta[s * nt + k].exp() };
                out[s * nt + k] = gw * dw;
            }
        }
        out
    }

    fn inverse(&self, v: &[f64]) -> Vec<f64> {
        let nt = self.layout.n_theta;
        let mut eta = v.to_vec();
        for s in 0..self.layout.n_strata {
            for k in 0..nt {
                let w: f64 = (0..nt).map(|i| self.rows[(k, i)] * v[s * nt + i]).sum();
                eta[s * nt + k] = if self.free[k] {
                    w
                } else {
                    (w - self.eps).max(1e-300).ln().max(-40.0)
                };
            }
        }
        eta
    }
}

fn stack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    out
}

const SCALE_DIVERGENCE: f64 = 25.0;

fn run(data: &Dataset, spec: &ModelSpec, problem: Problem, opts: &FitOptions) -> Result<FitResult> {
    let layout = problem.layout;
    let neg = |v: &[f64]| -> Option<(f64, Vec<f64>)> {
        let (ll, g) = problem.loglik_grad(v).ok()?;
        Some((-ll, g.into_iter().map(|x| -x).collect()))
    };
    let c = working_constraints(spec, &layout)?;
    let b = vec![opts.epsilon; c.nrows()];
    let mut v0 = match &opts.start {
        Some(p) => {
            let v = p.to_vec();
            if v.len() != layout.len() {
                return Err(Error::InvalidArgument("start values have the wrong shape".into()));
            }
            v
        }
        None => default_start(data, spec, &problem)?,
    };
    if neg(&v0).is_none() {
        if opts.start.is_some() {
            v0 = default_start(data, spec, &problem)?;
        }
        if let Err(e) = problem.loglik(&v0) {
            return Err(e);
        }
    }
    let state = match opts.optimizer {
        Optimizer::AugmentedLagrangian => augmented_lagrangian(&neg, &c, &b, &v0, opts.max_iter, opts.gtol),
        Optimizer::Reparameterized => {
            let rp = Reparam::new(spec, layout, opts.epsilon)?;
            let obj = |eta: &[f64]| -> Option<(f64, Vec<f64>)> {
                let v = rp.forward(eta);
                let (f, g) = neg(&v)?;
                Some((f, rp.pullback(eta, &g)))
            };
            let eta0 = rp.inverse(&v0);
            let start = if obj(&eta0).is_some() {
                eta0
            } else {
                rp.inverse(&default_start(data, spec, &problem)?)
            };
            bfgs(&obj as &Objective, &start, opts.max_iter, opts.gtol.max(1e-4)).and_then(|s| {
                let v = rp.forward(&s.x);
                let (f, g) = neg(&v)?;
                Some(MinState {
                    x: v,
                    f,
                    g,
                    iterations: s.iterations,
                    converged: s.converged,
                })
            })
        }
    }
    .ok_or_else(|| Error::Convergence("objective could not be evaluated at the start values".into()))?;
    let polished = polish(&neg, &c, &b, state, opts.gtol, opts.compute_vcov);
    let st = polished.state;
    let mut flags = Vec::new();
    if !st.converged {
        flags.push(FitFlag::NotConverged);
    }
    let vcov = match &polished.hessian {
        Some(h) if h.nrows() > 0 => {
            let inv = match h.clone().cholesky() {
                Some(ch) => ch.inverse(),
                None => {
                    flags.push(FitFlag::SingularInformation);
                    pinv_sym(h).0
                }
            };
            let full = &polished.z * inv * polished.z.transpose();
            Some(
                (0..full.nrows())
                    .map(|i| full.row(i).iter().copied().collect())
                    .collect(),
            )
        }
        Some(_) => Some(vec![vec![0.0; layout.len()]; layout.len()]),
        None => None,
    };
    let params = ModelParams::from_vec(&layout, &st.x);
    if params.gamma.iter().any(|g| g.abs() > SCALE_DIVERGENCE) {
        flags.push(FitFlag::ScaleDivergence);
    }
    let a = DMatrix::from_fn(polished.active.len(), layout.len(), |i, k| c[(polished.active[i], k)]);
    let z = crate::optim::null_space(&a, layout.len());
    let gr = z.transpose() * nalgebra::DVector::from_column_slice(&st.g);
    let strata_levels = if spec.stratified {
        data.strata.as_ref().map(|s| s.levels.clone())
    } else {
        None
    };
    Ok(FitResult {
        spec: spec.clone(),
        parameter_names: parameter_names(spec, strata_levels.as_deref()),
        params,
        loglik: -st.f,
        converged: st.converged,
        iterations: st.iterations,
        gradient_norm: gr.amax(),
        active_constraints: polished.active,
        vcov,
        flags,
        n_obs: data.len(),
        strata_levels,
    })
}

/// Maximum-likelihood fit of the model `spec`.
pub fn fit(data: &Dataset, spec: &ModelSpec, opts: &FitOptions) -> Result<FitResult> {
    let problem = Problem::new(data, spec)?;
    check_identifiable(data, spec, &problem)?;
    run(data, spec, problem, opts)
}

/// Fit with beta = gamma = 0, the null model of score tests.
pub fn fit_unconditional(data: &Dataset, spec: &ModelSpec, opts: &FitOptions) -> Result<FitResult> {
    fit(data, &spec.unconditional(), opts)
}

/// Fit with one transformation function per level of the dataset strata.
pub fn fit_stratified(data: &Dataset, spec: &ModelSpec, opts: &FitOptions) -> Result<FitResult> {
    if data.strata.is_none() {
        return Err(Error::InvalidSpec("dataset has no strata".into()));
    }
    fit(data, &spec.clone().with_stratified(true), opts)
}

/// Maximise over theta with per-observation location `mu` and scale
/// `sigma` held fixed.
pub fn profile_fit(
    data: &Dataset,
    spec: &ModelSpec,
    mu: &[f64],
    sigma: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    if sigma.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidArgument("sigma must be positive".into()));
    }
    let uncond = spec.unconditional();
    let offsets = Offsets {
        location: mu.to_vec(),
        log_scale: sigma.iter().map(|s| -2.0 * s.ln()).collect(),
    };
    let problem = Problem::with_offsets(data, &uncond, Some(offsets))?;
    check_identifiable(data, &uncond, &problem)?;
    run(data, &uncond, problem, opts)
}

/// Likelihood-ratio test of nested fits on the same data.
pub fn lr_test(full: &FitResult, null: &FitResult) -> Result<TestResult> {
    if full.n_obs != null.n_obs {
        return Err(Error::InvalidArgument("fits use different data".into()));
    }
    let df = full
        .n_params()
        .checked_sub(null.n_params())
        .ok_or_else(|| Error::InvalidArgument("null model is larger than the full model".into()))?;
    let statistic = (2.0 * (full.loglik - null.loglik)).max(0.0);
    let p_value = if df == 0 { 1.0 } else { chisq_sf(statistic, df as f64) };
    Ok(TestResult { statistic, df, p_value })
}

/// Wald test that the named parameters are zero.
pub fn wald_test<S: AsRef<str>>(fit: &FitResult, names: &[S]) -> Result<TestResult> {
    let v = fit
        .vcov_matrix()
        .ok_or_else(|| Error::InvalidArgument("fit has no covariance matrix".into()))?;
    let idx = names
        .iter()
        .map(|n| {
            fit.index_of(n.as_ref())
                .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter `{}`", n.as_ref())))
        })
        .collect::<Result<Vec<_>>>()?;
    let est = fit.params.to_vec();
    let k = idx.len();
    let sub = DMatrix::from_fn(k, k, |i, j| v[(idx[i], idx[j])]);
    let b = nalgebra::DVector::from_iterator(k, idx.iter().map(|&i| est[i]));
    let (inv, r) = pinv_sym(&sub);
    let statistic = b.dot(&(inv * &b));
    Ok(TestResult {
        statistic,
        df: r,
        p_value: chisq_sf(statistic, r as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pava_pools_violators() {
        assert_eq!(pava(&[1.0, 3.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(pava(&[3.0, 2.0, 1.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn spread_keeps_mean() {
        let mut v = vec![0.0, 0.0, 0.0];
        spread(&mut v, 1.0);
        assert_eq!(v, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn ecdf_ties_are_averaged() {
        let p = ecdf_scores(&[2.0, 1.0, 2.0]);
        assert_eq!(p, vec![(2.5 - 0.5) / 3.0, 0.5 / 3.0, 2.0 / 3.0]);
    }

    #[test]
    fn reparam_round_trip() {
        for centered in [false, true] {
            for basis in [BasisSpec::bernstein(4, 0.0, 1.0), BasisSpec::ordinal(5)] {
                let spec = ModelSpec::new(basis, crate::Link::Logit).with_centered(centered);
                let layout = Layout {
                    n_theta: spec.n_theta(),
                    n_strata: 2,
                    has_beta0: centered,
                    n_loc: 1,
                    n_sc: 0,
                };
                let rp = Reparam::new(&spec, layout, 1e-8).unwrap();
                let eta: Vec<f64> = (0..layout.len()).map(|k| 0.3 * k as f64 - 0.7).collect();
                let v = rp.forward(&eta);
                let back = rp.inverse(&v);
                for (a, b) in eta.iter().zip(&back) {
                    assert!((a - b).abs() < 1e-9, "{centered} {a} {b}");
                }
                let c = working_constraints(&spec, &layout).unwrap();
                let s = &c * nalgebra::DVector::from_column_slice(&v);
                assert!(s.iter().all(|x| *x > 1e-8));
            }
        }
    }
}
