//! L0 best subset selection over the location and scale coefficients by
//! splicing, tuned by the high-dimensional information criterion (SIC).
//!
//! Parameter indices 0..J refer to location coefficients of the candidate
//! covariates, J..2J to their scale coefficients.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fit::{fit, FitOptions, FitResult};
use crate::likelihood::{score_residuals, ModelParams, ModelSpec};

/// SIC = -loglik + support (log 2J)(log log N).
pub fn sic(loglik: f64, support: usize, j: usize, n: usize) -> Result<f64> {
    let nf = n as f64;
    if !(nf.ln() > 1.0) {
        return Err(Error::InvalidArgument(format!("SIC needs log log N > 0, got N = {n}")));
    }
    if j == 0 {
        return Err(Error::InvalidArgument("SIC needs J >= 1".into()));
    }
    Ok(-loglik + support as f64 * (2.0 * j as f64).ln() * nf.ln().ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectOptions {
    /// Largest support size; defaults to all selectable indices.
    pub s_max: Option<usize>,
    /// Largest number of indices exchanged in one splice.
    pub k_max: usize,
    /// Splicing thresholds per support size s = 1..s_max; default
    /// 0.01 s (log 2J)(log log N).
    pub tau: Option<Vec<f64>>,
    /// Indices in 0..2J that are always included and never penalised.
    pub mandatory: Vec<usize>,
    /// Initial active sets by support size, replacing the correlation
    /// ranking.
    pub initial: BTreeMap<usize, Vec<usize>>,
    pub fit: FitOptions,
}

impl Default for SelectOptions {
    fn default() -> Self {
        SelectOptions {
            s_max: None,
            k_max: 2,
            tau: None,
            mandatory: Vec::new(),
            initial: BTreeMap::new(),
            fit: FitOptions {
                compute_vcov: false,
                ..FitOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub s: usize,
    /// Selected (non-mandatory) indices.
    pub active: Vec<usize>,
    pub active_names: Vec<String>,
    /// Length-J location coefficients; zero outside the support.
    pub beta: Vec<f64>,
    /// Length-J scale coefficients; zero outside the support.
    pub gamma: Vec<f64>,
    pub beta0: f64,
    pub theta: Vec<Vec<f64>>,
    pub loglik: f64,
    pub sic: f64,
    pub converged: bool,
    /// Number of splicing sweeps run.
    pub sweeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetPath {
    pub covariates: Vec<String>,
    pub mandatory: Vec<usize>,
    pub n_obs: usize,
    pub entries: Vec<PathEntry>,
    /// Support size minimising SIC.
    pub selected: usize,
    /// Support sizes whose fits failed.
    pub failed: Vec<usize>,
}

impl SubsetPath {
    pub fn best(&self) -> &PathEntry {
        self.entries
            .iter()
            .find(|e| e.s == self.selected)
            .expect("selected support size is on the path")
    }
}

/// Name of index `k` for candidate covariates `cov`.
pub fn index_name(cov: &[String], k: usize) -> String {
    let j = cov.len();
    if k < j {
        format!("loc:{}", cov[k])
    } else {
        format!("scale:{}", cov[k - j])
    }
}

fn pearson_abs(x: &[f64], r: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, mr) = (x.iter().sum::<f64>() / n, r.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(r) {
        sxy += (a - mx) * (b - mr);
        sxx += (a - mx).powi(2);
        syy += (b - mr).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        0.0
    } else {
        (sxy / (sxx * syy).sqrt()).abs()
    }
}

struct Selector<'a> {
    data: &'a Dataset,
    base: ModelSpec,
    cov: Vec<String>,
    mandatory: Vec<usize>,
    opts: FitOptions,
    cache: Mutex<HashMap<Vec<usize>, Option<(f64, FitResult)>>>,
}

impl Selector<'_> {
    fn spec_for(&self, active: &[usize]) -> ModelSpec {
        let j = self.cov.len();
        let all: BTreeSet<usize> = active.iter().chain(&self.mandatory).copied().collect();
        let location: Vec<&str> = all.iter().filter(|&&k| k < j).map(|&k| self.cov[k].as_str()).collect();
        let scale: Vec<&str> = all
            .iter()
            .filter(|&&k| k >= j)
            .map(|&k| self.cov[k - j].as_str())
            .collect();
        self.base.clone().with_location(&location).with_scale(&scale)
    }

    /// Restricted refit on `active` (sorted), warm-started from `from`.
    fn refit(&self, active: &[usize], from: Option<&FitResult>) -> Option<(f64, FitResult)> {
        let key = active.to_vec();
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return hit.clone();
        }
        let spec = self.spec_for(active);
        let mut opts = self.opts.clone();
        opts.start = from.and_then(|f| f.params.transfer(&f.spec, &spec).ok());
        let res = fit(self.data, &spec, &opts).ok().map(|f| (f.loglik, f));
        self.cache.lock().expect("cache lock").insert(key, res.clone());
        res
    }

    fn entry(&self, s: usize, active: &[usize], f: &FitResult, sweeps: usize) -> Result<PathEntry> {
        let j = self.cov.len();
        let mut beta = vec![0.0; j];
        let mut gamma = vec![0.0; j];
        for (name, b) in f.spec.location.iter().zip(&f.params.beta) {
            beta[self.cov.iter().position(|c| c == name).expect("candidate")] = *b;
        }
        for (name, g) in f.spec.scale.iter().zip(&f.params.gamma) {
            gamma[self.cov.iter().position(|c| c == name).expect("candidate")] = *g;
        }
        Ok(PathEntry {
            s,
            active: active.to_vec(),
            active_names: active.iter().map(|&k| index_name(&self.cov, k)).collect(),
            beta,
            gamma,
            beta0: f.params.beta0.unwrap_or(0.0),
            theta: f.params.theta.clone(),
            loglik: f.loglik,
            sic: sic(f.loglik, s, j, self.data.len())?,
            converged: f.converged,
            sweeps,
        })
    }
}

/// Initial active set of size `s`: the selectable indices whose covariate
/// has the largest absolute correlation with the matching score residual.
pub fn init_active_set(cor_loc: &[f64], cor_sc: &[f64], selectable: &[usize], s: usize) -> Vec<usize> {
    let j = cor_loc.len();
    let score = |k: usize| if k < j { cor_loc[k] } else { cor_sc[k - j] };
    let mut ranked = selectable.to_vec();
    ranked.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
    let mut out: Vec<usize> = ranked.into_iter().take(s).collect();
    out.sort_unstable();
    out
}

/// Absolute correlations of each candidate with the location and scale
/// score residuals of the mandatory-only fit.
fn residual_correlations(sel: &Selector, base_fit: &FitResult) -> Result<(Vec<f64>, Vec<f64>)> {
    let res = score_residuals(sel.data, &base_fit.spec, &base_fit.params)?;
    let mut cl = Vec::new();
    let mut cs = Vec::new();
    for name in &sel.cov {
        let x = sel.data.column(name)?;
        cl.push(pearson_abs(&x, &res.location));
        cs.push(pearson_abs(&x, &res.scale));
    }
    Ok((cl, cs))
}

/// One splicing sweep: exchange the k actives with the smallest sacrifice
/// for the k inactives with the largest gain, keeping the best k if it
/// improves the log-likelihood by more than `tau`. If no ranked exchange
/// qualifies, the best single swap is tried instead.
fn splice(
    sel: &Selector,
    active: &[usize],
    inactive: &[usize],
    current: &(f64, FitResult),
    k_max: usize,
    tau: f64,
) -> Option<(Vec<usize>, (f64, FitResult))> {
    let (ll, f) = current;
    let mut sacrifice: Vec<(usize, f64)> = active
        .par_iter()
        .map(|&a| {
            let rest: Vec<usize> = active.iter().copied().filter(|&b| b != a).collect();
            let l = sel.refit(&rest, Some(f)).map_or(f64::NEG_INFINITY, |r| r.0);
            (a, ll - l)
        })
        .collect();
    let mut gain: Vec<(usize, f64)> = inactive
        .par_iter()
        .map(|&i| {
            let mut more = active.to_vec();
            more.push(i);
            more.sort_unstable();
            let l = sel.refit(&more, Some(f)).map_or(f64::NEG_INFINITY, |r| r.0);
            (i, l - ll)
        })
        .collect();
    sacrifice.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    gain.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let k_max = k_max.min(active.len()).min(inactive.len());
    let mut best: Option<(Vec<usize>, (f64, FitResult))> = None;
    for k in 1..=k_max {
        let out: HashSet<usize> = sacrifice[..k].iter().map(|p| p.0).collect();
        let mut cand: Vec<usize> = active.iter().copied().filter(|a| !out.contains(a)).collect();
        cand.extend(gain[..k].iter().map(|p| p.0));
        cand.sort_unstable();
        if let Some(r) = sel.refit(&cand, Some(f)) {
            if best.as_ref().map_or(true, |b| r.0 > b.1 .0) {
                best = Some((cand, r));
            }
        }
    }
    if let Some(b) = best.filter(|b| b.1 .0 - ll > tau) {
        return Some(b);
    }
    // ranked exchanges can stall when two indices substitute for each
    // other; fall back to every single swap
    let pairs: Vec<Vec<usize>> = active
        .iter()
        .flat_map(|&a| {
            inactive.iter().map(move |&i| {
                let mut c: Vec<usize> = active.iter().copied().filter(|&b| b != a).collect();
                c.push(i);
                c.sort_unstable();
                c
            })
        })
        .collect();
    let fits: Vec<Option<(f64, FitResult)>> = pairs.par_iter().map(|c| sel.refit(c, Some(f))).collect();
    let mut best: Option<(Vec<usize>, (f64, FitResult))> = None;
    for (cand, r) in pairs.into_iter().zip(fits) {
        if let Some(r) = r {
            if best.as_ref().map_or(true, |b| r.0 > b.1 .0) {
                best = Some((cand, r));
            }
        }
    }
    best.filter(|b| b.1 .0 - ll > tau)
}

/// Best subset selection path over support sizes 0..=s_max for the
/// candidate covariates `covariates`, in the centered parameterization.
pub fn select<S: AsRef<str>>(
    data: &Dataset,
    spec: &ModelSpec,
    covariates: &[S],
    opts: &SelectOptions,
) -> Result<SubsetPath> {
    let cov: Vec<String> = covariates.iter().map(|c| c.as_ref().to_string()).collect();
    let j = cov.len();
    if j == 0 {
        return Err(Error::InvalidArgument("no candidate covariates".into()));
    }
    for c in &cov {
        data.column_index(c)?;
    }
    let mut mandatory = opts.mandatory.clone();
    mandatory.sort_unstable();
    mandatory.dedup();
    if mandatory.iter().any(|&k| k >= 2 * j) {
        return Err(Error::InvalidArgument("mandatory index out of range".into()));
    }
    let selectable: Vec<usize> = (0..2 * j).filter(|k| !mandatory.contains(k)).collect();
    let s_max = opts.s_max.unwrap_or(selectable.len());
    if s_max > selectable.len() {
        return Err(Error::InvalidArgument(format!(
            "s_max = {s_max} exceeds the {} selectable indices",
            selectable.len()
        )));
    }
    if opts.k_max == 0 {
        return Err(Error::InvalidArgument("k_max must be positive".into()));
    }
    let n = data.len();
    let penalty = (2.0 * j as f64).ln() * (n as f64).ln().ln();
    let taus: Vec<f64> = match &opts.tau {
        Some(t) if t.len() < s_max => {
            return Err(Error::InvalidArgument("one threshold per support size required".into()))
        }
        Some(t) => t.clone(),
        None => (1..=s_max).map(|s| 0.01 * s as f64 * penalty).collect(),
    };
    let mut base = spec.unconditional().with_centered(true);
    base.location.clear();
    base.scale.clear();
    let sel = Selector {
        data,
        base,
        cov: cov.clone(),
        mandatory: mandatory.clone(),
        opts: FitOptions {
            start: None,
            ..opts.fit.clone()
        },
        cache: Mutex::new(HashMap::new()),
    };
    let base_fit = sel
        .refit(&[], None)
        .ok_or_else(|| Error::Convergence("mandatory-only model could not be fitted".into()))?;
    let (cor_loc, cor_sc) = residual_correlations(&sel, &base_fit.1)?;
    let mut entries = vec![sel.entry(0, &[], &base_fit.1, 0)?];
    let mut failed = Vec::new();
    for s in 1..=s_max {
        let mut active = match opts.initial.get(&s) {
            Some(a) => {
                let mut a = a.clone();
                a.sort_unstable();
                a.dedup();
                if a.len() != s || a.iter().any(|k| !selectable.contains(k)) {
                    return Err(Error::InvalidArgument(format!(
                        "initial set for s = {s} must hold {s} distinct selectable indices"
                    )));
                }
                a
            }
            None => init_active_set(&cor_loc, &cor_sc, &selectable, s),
        };
        let Some(mut current) = sel.refit(&active, Some(&base_fit.1)) else {
            failed.push(s);
            continue;
        };
        let mut visited: HashSet<Vec<usize>> = HashSet::new();
        visited.insert(active.clone());
        let mut sweeps = 0;
        loop {
            sweeps += 1;
            let inactive: Vec<usize> = selectable.iter().copied().filter(|k| !active.contains(k)).collect();
            match splice(&sel, &active, &inactive, &current, opts.k_max, taus[s - 1]) {
                Some((next, fit)) if visited.insert(next.clone()) => {
                    active = next;
                    current = fit;
                }
                _ => break,
            }
        }
        entries.push(sel.entry(s, &active, &current.1, sweeps)?);
    }
    let selected = entries
        .iter()
        .min_by(|a, b| a.sic.total_cmp(&b.sic).then(a.s.cmp(&b.s)))
        .map(|e| e.s)
        .expect("path has the s = 0 entry");
    Ok(SubsetPath {
        covariates: cov,
        mandatory,
        n_obs: n,
        entries,
        selected,
        failed,
    })
}

/// Model parameters of a path entry in the shape of the full model with
/// all candidates in both terms.
pub fn entry_params(entry: &PathEntry) -> ModelParams {
    ModelParams {
        theta: entry.theta.clone(),
        beta0: Some(entry.beta0),
        beta: entry.beta.clone(),
        gamma: entry.gamma.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sic_arithmetic() {
        let v = sic(-120.0, 2, 5, 100).unwrap();
        assert!((v - 127.0329).abs() < 1e-4, "{v}");
        assert_eq!(sic(-120.0, 0, 5, 100).unwrap(), 120.0);
        assert!(sic(-1.0, 1, 5, 2).is_err());
        assert!(sic(-1.0, 3, 5, 50).unwrap() > sic(-1.0, 2, 5, 50).unwrap());
    }

    #[test]
    fn init_ranks_and_breaks_ties_low() {
        let cl = [0.1, 0.5, 0.5];
        let cs = [0.2, 0.05, 0.3];
        let all: Vec<usize> = (0..6).collect();
        assert_eq!(init_active_set(&cl, &cs, &all, 1), vec![1]);
        assert_eq!(init_active_set(&cl, &cs, &all, 2), vec![1, 2]);
        assert_eq!(init_active_set(&cl, &cs, &all, 3), vec![1, 2, 5]);
        assert_eq!(init_active_set(&cl, &cs, &all, 6), all);
        let masked = [0, 2, 3, 4, 5];
        assert_eq!(init_active_set(&cl, &cs, &masked, 2), vec![2, 5]);
    }

    #[test]
    fn constant_column_has_zero_correlation() {
        assert_eq!(pearson_abs(&[1.0, 1.0, 1.0], &[0.2, 0.5, 0.1]), 0.0);
        assert!((pearson_abs(&[1.0, 2.0, 3.0], &[-2.0, -4.0, -6.0]) - 1.0).abs() < 1e-15);
    }
}
