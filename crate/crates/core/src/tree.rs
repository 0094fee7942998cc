//! Location-scale transformation trees: recursive partitioning by
//! permutation tests of the bivariate (location, scale) score residuals of
//! an unconditional node model.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, VariableKind};
use crate::error::{Error, Result};
use crate::fit::{fit_unconditional, FitOptions, FitResult};
use crate::inference::{predict_curve, Curve, CurveRequest};
use crate::likelihood::{score_residuals, ModelSpec};
use crate::numeric::pinv_sym;
use crate::permutation::{score_test_residuals, Resampling, Statistic};

/// Exhaustive level partitions up to this many levels.
const MAX_EXHAUSTIVE_LEVELS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeOptions {
    pub alpha: f64,
    /// Smallest admissible child; raised to 2 P when smaller.
    pub min_node_size: usize,
    pub max_depth: Option<usize>,
    /// Permutations per variable test; asymptotic p-values when absent.
    pub b: Option<usize>,
    pub seed: u64,
    /// Candidate split variables; all dataset variables when absent.
    pub variables: Option<Vec<String>>,
    pub fit: FitOptions,
}

impl Default for TreeOptions {
    fn default() -> Self {
        TreeOptions {
            alpha: 0.05,
            min_node_size: 20,
            max_depth: None,
            b: None,
            seed: 0,
            variables: None,
            fit: FitOptions {
                compute_vcov: false,
                ..FitOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Split {
    /// Left child: x <= cutpoint.
    Numeric { variable: String, cutpoint: f64 },
    /// Left child: level in `left`.
    Categorical { variable: String, left: Vec<String> },
}

impl Split {
    pub fn variable(&self) -> &str {
        match self {
            Split::Numeric { variable, .. } | Split::Categorical { variable, .. } => variable,
        }
    }

    fn goes_left(&self, v: &SplitValue) -> Result<bool> {
        match (self, v) {
            (Split::Numeric { cutpoint, .. }, SplitValue::Number(x)) => Ok(x <= cutpoint),
            (Split::Categorical { left, .. }, SplitValue::Level(l)) => Ok(left.contains(l)),
            _ => Err(Error::InvalidArgument(format!(
                "value of `{}` does not match the split type",
                self.variable()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableTest {
    pub variable: String,
    pub statistic: f64,
    pub p_value: f64,
    /// Bonferroni-adjusted p-value.
    pub p_adjusted: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafReason {
    NotSignificant,
    MaxDepth,
    TooSmall,
    NoAdmissibleSplit,
    FitFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: u64,
    pub depth: usize,
    pub n: usize,
    /// Unconditional node model; absent when the fit failed.
    pub model: Option<FitResult>,
    pub tests: Vec<VariableTest>,
    pub split: Option<Split>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub leaf_reason: Option<LeafReason>,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn leaves(&self) -> Vec<&TreeNode> {
        if self.is_leaf() {
            vec![self]
        } else {
            self.children.iter().flat_map(|c| c.leaves()).collect()
        }
    }

    pub fn find(&self, id: u64) -> Option<&TreeNode> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(id))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub options: TreeOptions,
    pub min_node_size: usize,
    pub root: TreeNode,
}

/// Value of a split variable for routing.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitValue {
    Number(f64),
    Level(String),
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG seed of the test of variable `j` in node `id`.
fn test_seed(seed: u64, id: u64, j: usize) -> u64 {
    splitmix(splitmix(seed ^ splitmix(id)) ^ j as u64)
}

struct Candidate {
    name: String,
    kind: CandidateKind,
}

enum CandidateKind {
    Numeric(usize),
    Categorical {
        levels: Vec<String>,
        ordered: bool,
        codes: Vec<usize>,
    },
}

fn candidates(data: &Dataset, names: Option<&[String]>) -> Result<Vec<Candidate>> {
    let pick = |name: &str| names.map_or(true, |n| n.iter().any(|m| m == name));
    if let Some(n) = names {
        for name in n {
            if !data.variables.iter().any(|v| &v.name == name) {
                return Err(Error::Data {
                    row: None,
                    column: Some(name.clone()),
                    message: "no such split variable".into(),
                });
            }
        }
    }
    Ok(data
        .variables
        .iter()
        .filter(|v| pick(&v.name))
        .map(|v| Candidate {
            name: v.name.clone(),
            kind: match &v.kind {
                VariableKind::Numeric { column } => CandidateKind::Numeric(*column),
                VariableKind::Categorical {
                    levels, ordered, codes, ..
                } => CandidateKind::Categorical {
                    levels: levels.clone(),
                    ordered: *ordered,
                    codes: codes.clone(),
                },
            },
        })
        .collect())
}

fn design(data: &Dataset, c: &Candidate) -> DMatrix<f64> {
    match &c.kind {
        CandidateKind::Numeric(col) => data.x.columns(*col, 1).into_owned(),
        CandidateKind::Categorical { levels, codes, .. } => {
            DMatrix::from_fn(data.len(), levels.len(), |i, k| (codes[i] == k) as u8 as f64)
        }
    }
}

/// Per-variable score tests of a node with residual matrix `r` (N x 2).
pub fn node_test(data: &Dataset, r: &DMatrix<f64>, opts: &TreeOptions, id: u64) -> Result<Vec<VariableTest>> {
    let cands = candidates(data, opts.variables.as_deref())?;
    let m = cands.len();
    cands
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let g = design(data, c);
            let resampling = match opts.b {
                Some(b) => Resampling::MonteCarlo {
                    b,
                    seed: test_seed(opts.seed, id, j),
                },
                None => Resampling::Asymptotic,
            };
            let t = score_test_residuals(r, &g, &resampling)?;
            let p = t.p_value(Statistic::Quadratic);
            Ok(VariableTest {
                variable: c.name.clone(),
                statistic: t.quadratic_statistic,
                p_value: p,
                p_adjusted: (p * m as f64).min(1.0),
            })
        })
        .collect()
}

/// Standardised two-sample statistic of left groups with sums `t` of
/// `nl` rows out of `n`.
struct TwoSample {
    n: f64,
    mean: DVector<f64>,
    vinv: DMatrix<f64>,
}

impl TwoSample {
    fn new(r: &DMatrix<f64>) -> Self {
        let n = r.nrows() as f64;
        let mean: DVector<f64> = r.row_sum().transpose() / n;
        let mut v = DMatrix::zeros(r.ncols(), r.ncols());
        for i in 0..r.nrows() {
            let d = r.row(i).transpose() - &mean;
            v += &d * d.transpose();
        }
        v /= n;
        TwoSample {
            n,
            mean,
            vinv: pinv_sym(&v).0,
        }
    }

    fn statistic(&self, t: &DVector<f64>, nl: f64) -> f64 {
        let f = nl * (self.n - nl) / (self.n - 1.0);
        if f <= 0.0 {
            return 0.0;
        }
        let d = t - &self.mean * nl;
        d.dot(&(&self.vinv * &d)) / f
    }
}

fn level_sums(r: &DMatrix<f64>, codes: &[usize], levels: usize) -> (Vec<DVector<f64>>, Vec<usize>) {
    let mut sums = vec![DVector::zeros(r.ncols()); levels];
    let mut counts = vec![0; levels];
    for (i, &c) in codes.iter().enumerate() {
        sums[c] += r.row(i).transpose();
        counts[c] += 1;
    }
    (sums, counts)
}

/// Best binary split of the selected variable, or None if no split leaves
/// `min_size` rows on both sides.
pub fn best_split(data: &Dataset, variable: &str, r: &DMatrix<f64>, min_size: usize) -> Result<Option<Split>> {
    let cands = candidates(data, Some(&[variable.to_string()]))?;
    let c = &cands[0];
    let n = data.len();
    let ts = TwoSample::new(r);
    match &c.kind {
        CandidateKind::Numeric(col) => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| data.x[(a, *col)].total_cmp(&data.x[(b, *col)]));
            let mut t = DVector::zeros(r.ncols());
            let mut best: Option<(f64, f64)> = None;
            for (k, &i) in order.iter().enumerate().take(n.saturating_sub(1)) {
                t += r.row(i).transpose();
                let nl = k + 1;
                let (x, next) = (data.x[(i, *col)], data.x[(order[k + 1], *col)]);
                if x == next || nl < min_size || n - nl < min_size {
                    continue;
                }
                let s = ts.statistic(&t, nl as f64);
                if best.map_or(true, |b| s > b.0) {
                    best = Some((s, 0.5 * (x + next)));
                }
            }
            Ok(best.map(|(_, cut)| Split::Numeric {
                variable: c.name.clone(),
                cutpoint: cut,
            }))
        }
        CandidateKind::Categorical { levels, ordered, codes } => {
            let (sums, counts) = level_sums(r, codes, levels.len());
            let present: Vec<usize> = (0..levels.len()).filter(|&k| counts[k] > 0).collect();
            if present.len() < 2 {
                return Ok(None);
            }
            let partitions: Vec<Vec<usize>> = if *ordered {
                (1..present.len()).map(|k| present[..k].to_vec()).collect()
            } else if present.len() <= MAX_EXHAUSTIVE_LEVELS {
                // subsets containing the first present level, excluding all
                let rest = present.len() - 1;
                (0..(1u32 << rest) - 1)
                    .map(|mask| {
                        std::iter::once(present[0])
                            .chain((0..rest).filter(|b| mask >> b & 1 == 1).map(|b| present[b + 1]))
                            .collect()
                    })
                    .collect()
            } else {
                // order levels by mean location score, then cut in order
                let mut by_mean = present.clone();
                by_mean.sort_by(|&a, &b| {
                    (sums[a][0] / counts[a] as f64)
                        .total_cmp(&(sums[b][0] / counts[b] as f64))
                        .then(a.cmp(&b))
                });
                (1..by_mean.len()).map(|k| by_mean[..k].to_vec()).collect()
            };
            let mut best: Option<(f64, &Vec<usize>)> = None;
            for part in &partitions {
                let nl: usize = part.iter().map(|&k| counts[k]).sum();
                if nl < min_size || n - nl < min_size {
                    continue;
                }
                let t = part.iter().fold(DVector::zeros(r.ncols()), |a, &k| a + &sums[k]);
                let s = ts.statistic(&t, nl as f64);
                if best.map_or(true, |b| s > b.0) {
                    best = Some((s, part));
                }
            }
            Ok(best.map(|(_, part)| {
                let mut left: Vec<usize> = part.clone();
                left.sort_unstable();
                Split::Categorical {
                    variable: c.name.clone(),
                    left: left.into_iter().map(|k| levels[k].clone()).collect(),
                }
            }))
        }
    }
}

fn row_value(data: &Dataset, variable: &str, i: usize) -> Result<SplitValue> {
    let v = data
        .variables
        .iter()
        .find(|v| v.name == variable)
        .ok_or_else(|| Error::data(format!("no such split variable `{variable}`")))?;
    Ok(match &v.kind {
        VariableKind::Numeric { column } => SplitValue::Number(data.x[(i, *column)]),
        VariableKind::Categorical { levels, codes, .. } => SplitValue::Level(levels[codes[i]].clone()),
    })
}

fn residuals(data: &Dataset, fit: &FitResult) -> Result<DMatrix<f64>> {
    let res = score_residuals(data, &fit.spec, &fit.params)?;
    Ok(DMatrix::from_fn(res.len(), 2, |i, k| res.row(i)[k]))
}

struct Grower<'a> {
    spec: &'a ModelSpec,
    opts: &'a TreeOptions,
    min_size: usize,
}

impl Grower<'_> {
    fn leaf(
        &self,
        id: u64,
        depth: usize,
        n: usize,
        model: Option<FitResult>,
        tests: Vec<VariableTest>,
        why: LeafReason,
    ) -> TreeNode {
        TreeNode {
            id,
            depth,
            n,
            model,
            tests,
            split: None,
            leaf_reason: Some(why),
            children: Vec::new(),
        }
    }

    fn grow(&self, data: &Dataset, id: u64, depth: usize) -> Result<TreeNode> {
        let n = data.len();
        let model = match fit_unconditional(data, self.spec, &self.opts.fit) {
            Ok(f) => f,
            Err(_) => return Ok(self.leaf(id, depth, n, None, Vec::new(), LeafReason::FitFailed)),
        };
        if self.opts.max_depth.is_some_and(|d| depth >= d) {
            return Ok(self.leaf(id, depth, n, Some(model), Vec::new(), LeafReason::MaxDepth));
        }
        if n < 2 * self.min_size {
            return Ok(self.leaf(id, depth, n, Some(model), Vec::new(), LeafReason::TooSmall));
        }
        let r = residuals(data, &model)?;
        let tests = node_test(data, &r, self.opts, id)?;
        let best = tests
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.p_value.total_cmp(&b.1.p_value).then(a.0.cmp(&b.0)))
            .map(|(k, t)| (k, t.p_adjusted));
        let Some((k, p)) = best else {
            return Ok(self.leaf(id, depth, n, Some(model), tests, LeafReason::NotSignificant));
        };
        if !(p <= self.opts.alpha) {
            return Ok(self.leaf(id, depth, n, Some(model), tests, LeafReason::NotSignificant));
        }
        let variable = tests[k].variable.clone();
        let Some(split) = best_split(data, &variable, &r, self.min_size)? else {
            return Ok(self.leaf(id, depth, n, Some(model), tests, LeafReason::NoAdmissibleSplit));
        };
        let mut left = Vec::new();
        let mut right = Vec::new();
        for i in 0..n {
            if split.goes_left(&row_value(data, &variable, i)?)? {
                left.push(i);
            } else {
                right.push(i);
            }
        }
        let (dl, dr) = (data.subset(&left), data.subset(&right));
        let (l, r) = rayon::join(
            || self.grow(&dl, 2 * id, depth + 1),
            || self.grow(&dr, 2 * id + 1, depth + 1),
        );
        Ok(TreeNode {
            id,
            depth,
            n,
            model: Some(model),
            tests,
            split: Some(split),
            leaf_reason: None,
            children: vec![l?, r?],
        })
    }
}

/// Grow a tree of unconditional models of `spec` (its location and scale
/// terms are ignored).
pub fn grow(data: &Dataset, spec: &ModelSpec, opts: &TreeOptions) -> Result<Tree> {
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::InvalidArgument("alpha must lie in (0, 1)".into()));
    }
    if opts.b == Some(0) {
        return Err(Error::InvalidArgument("B must be positive".into()));
    }
    if data.weights.iter().any(|w| *w != 1.0) {
        return Err(Error::InvalidArgument("trees require unit case weights".into()));
    }
    candidates(data, opts.variables.as_deref())?;
    let spec = spec.unconditional();
    let min_node_size = opts.min_node_size.max(2 * spec.n_theta()).max(1);
    let g = Grower {
        spec: &spec,
        opts,
        min_size: min_node_size,
    };
    Ok(Tree {
        options: opts.clone(),
        min_node_size,
        root: g.grow(data, 1, 0)?,
    })
}

impl Tree {
    /// Leaf reached by the split-variable values `x`.
    pub fn route(&self, x: &HashMap<String, SplitValue>) -> Result<&TreeNode> {
        let mut node = &self.root;
        while let Some(split) = &node.split {
            let v = x
                .get(split.variable())
                .ok_or_else(|| Error::InvalidArgument(format!("missing value of `{}`", split.variable())))?;
            node = &node.children[if split.goes_left(v)? { 0 } else { 1 }];
        }
        Ok(node)
    }

    /// Leaf of row `i` of `data`.
    pub fn route_row(&self, data: &Dataset, i: usize) -> Result<&TreeNode> {
        let mut node = &self.root;
        while let Some(split) = &node.split {
            let v = row_value(data, split.variable(), i)?;
            node = &node.children[if split.goes_left(&v)? { 0 } else { 1 }];
        }
        Ok(node)
    }

    /// Indented text rendering.
    pub fn render(&self) -> String {
        let mut out = String::new();
        render_node(&self.root, &mut out);
        out
    }
}

fn render_node(node: &TreeNode, out: &mut String) {
    let pad = "  ".repeat(node.depth);
    let minp = node.tests.iter().map(|t| t.p_adjusted).fold(f64::INFINITY, f64::min);
    let _ = write!(out, "{pad}[{}] n = {}", node.id, node.n);
    if minp.is_finite() {
        let _ = write!(out, ", min adjusted p = {minp:.4}");
    }
    match &node.split {
        Some(Split::Numeric { variable, cutpoint }) => {
            let _ = writeln!(out, ", split {variable} <= {cutpoint}");
        }
        Some(Split::Categorical { variable, left }) => {
            let _ = writeln!(out, ", split {variable} in {{{}}}", left.join(", "));
        }
        None => {
            let _ = writeln!(out, ", leaf");
        }
    }
    for c in &node.children {
        render_node(c, out);
    }
}

/// Curve of the leaf model reached by `x`.
pub fn predict_tree(tree: &Tree, x: &HashMap<String, SplitValue>, req: &CurveRequest) -> Result<Curve> {
    let leaf = tree.route(x)?;
    let model = leaf
        .model
        .as_ref()
        .ok_or_else(|| Error::Convergence(format!("node {} has no fitted model", leaf.id)))?;
    predict_curve(model, &[] as &[(&str, f64)], req)
}
