//! Run configuration, accepted as JSON or TOML.
//!
//! ```toml
//! link = "logit"
//!
//! [basis]
//! kind = "bernstein"      # bernstein | log_linear | ordinal | non_parametric
//! order = 6
//!
//! [columns.response]
//! kind = "exact"
//!
//! [location]
//! terms = ["x1", "x2"]
//!
//! [scale]
//! terms = ["x2"]
//! features = [{ type = "harmonic", column = "day", frequencies = [1, 2] }]
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::basis::{BasisKind, BasisSpec};
use crate::data::{Dataset, ResponseKind, VariableKind};
use crate::error::{Error, Result};
use crate::features::{harmonic_features, harmonic_names, spline_names, SplineBasis};
use crate::fit::FitOptions;
use crate::io::{open_data, read_csv, ColumnRoles};
use crate::likelihood::ModelSpec;
use crate::link::Link;
use crate::select::SelectOptions;
use crate::tree::TreeOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisChoice {
    Bernstein,
    LogLinear,
    Ordinal,
    NonParametric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    pub kind: BasisChoice,
    pub order: usize,
    /// Bernstein support; the range of the finite response values when absent.
    pub support: Option<[f64; 2]>,
    pub count_floor: bool,
    pub positive: bool,
}

impl Default for BasisConfig {
    fn default() -> Self {
        BasisConfig {
            kind: BasisChoice::Bernstein,
            order: 6,
            support: None,
            count_floor: false,
            positive: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Feature {
    Harmonic {
        column: String,
        frequencies: Vec<f64>,
    },
    Spline {
        column: String,
        knots: Vec<f64>,
        #[serde(default = "cubic")]
        degree: usize,
    },
}

fn cubic() -> usize {
    3
}

impl Feature {
    fn column(&self) -> &str {
        match self {
            Feature::Harmonic { column, .. } | Feature::Spline { column, .. } => column,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TermConfig {
    /// Column or variable names; a categorical variable contributes all of
    /// its contrast columns.
    pub terms: Vec<String>,
    pub features: Vec<Feature>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectConfig {
    /// Candidate columns; the location columns when empty.
    pub candidates: Vec<String>,
    /// Always-included parameters, as `loc:<column>` or `scale:<column>`.
    pub mandatory: Vec<String>,
    pub s_max: Option<usize>,
    pub k_max: Option<usize>,
    pub tau: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeConfig {
    pub alpha: f64,
    pub min_node_size: usize,
    pub max_depth: Option<usize>,
    pub variables: Option<Vec<String>>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            alpha: 0.05,
            min_node_size: 20,
            max_depth: None,
            variables: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreTestConfig {
    /// Variable tested against the bivariate score residuals.
    pub variable: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    /// Response grid; a regular grid over the basis support when empty.
    pub grid: Vec<f64>,
    pub grid_points: Option<usize>,
    /// Covariate values for one prediction row when no new data is given.
    pub at: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub link: Link,
    pub basis: BasisConfig,
    pub columns: ColumnRoles,
    pub location: TermConfig,
    pub scale: TermConfig,
    pub centered: bool,
    pub stratified: bool,
    pub fit: FitOptions,
    pub select: SelectConfig,
    pub tree: TreeConfig,
    pub scoretest: ScoreTestConfig,
    pub predict: PredictConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            link: Link::Logit,
            basis: BasisConfig::default(),
            columns: ColumnRoles::default(),
            location: TermConfig::default(),
            scale: TermConfig::default(),
            centered: false,
            stratified: false,
            fit: FitOptions::default(),
            select: SelectConfig::default(),
            tree: TreeConfig::default(),
            scoretest: ScoreTestConfig::default(),
            predict: PredictConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parse JSON (text starting with `{`) or TOML.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn check(&self) -> Result<()> {
        if self.basis.kind == BasisChoice::Bernstein && self.basis.order < 1 {
            return Err(Error::Config("Bernstein order must be >= 1".into()));
        }
        if let Some([a, b]) = self.basis.support {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::Config(format!("invalid support [{a}, {b}]")));
            }
        }
        if self.columns.response.kind == ResponseKind::Ordinal && self.columns.response.levels.is_none() {
            return Err(Error::Config("ordinal responses need `levels`".into()));
        }
        if !(self.tree.alpha > 0.0 && self.tree.alpha < 1.0) {
            return Err(Error::Config("tree alpha must lie in (0, 1)".into()));
        }
        if self.stratified && self.columns.stratum.is_none() {
            return Err(Error::Config("stratified models need a stratum column".into()));
        }
        if self.fit.gtol <= 0.0 || self.fit.max_iter == 0 {
            return Err(Error::Config("fit tolerances must be positive".into()));
        }
        for f in self.location.features.iter().chain(&self.scale.features) {
            match f {
                Feature::Harmonic { frequencies, .. } if frequencies.is_empty() => {
                    return Err(Error::Config("harmonic feature with no frequencies".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Response basis for `data`.
    pub fn basis_for(&self, data: &Dataset) -> Result<BasisSpec> {
        let b = &self.basis;
        let mut basis = match b.kind {
            BasisChoice::Bernstein => match b.support {
                Some([lo, hi]) => BasisSpec::bernstein(b.order, lo, hi),
                None => BasisSpec::bernstein_for(&data.responses, b.order)?,
            },
            BasisChoice::LogLinear => BasisSpec::log_linear(),
            BasisChoice::Ordinal => {
                let levels = self
                    .columns
                    .response
                    .levels
                    .as_ref()
                    .map(|l| l.len())
                    .ok_or_else(|| Error::Config("ordinal basis needs response levels".into()))?;
                BasisSpec::ordinal(levels)
            }
            BasisChoice::NonParametric => BasisSpec::non_parametric_for(&data.responses),
        };
        if b.count_floor {
            basis = basis.with_count_floor();
        }
        if b.positive || self.columns.response.positive {
            basis = basis.with_positive();
        }
        if let BasisKind::NonParametric { values } = &basis.kind {
            if values.len() < 2 {
                return Err(Error::Config("non-parametric basis needs two distinct values".into()));
            }
        }
        basis.validate()?;
        Ok(basis)
    }

    /// Add feature columns to `data` and return the expanded column names
    /// of the location and scale terms.
    pub fn apply_terms(&self, data: &mut Dataset) -> Result<(Vec<String>, Vec<String>)> {
        let loc = expand_terms(data, &self.location)?;
        let sc = expand_terms(data, &self.scale)?;
        Ok((loc, sc))
    }

    /// Read data, add features, and build the model specification.
    pub fn prepare(&self, csv: impl std::io::Read) -> Result<(Dataset, ModelSpec)> {
        let mut data = read_csv(csv, &self.columns)?;
        let (loc, sc) = self.apply_terms(&mut data)?;
        let basis = self.basis_for(&data)?;
        let spec = ModelSpec::new(basis, self.link)
            .with_location(&loc)
            .with_scale(&sc)
            .with_centered(self.centered)
            .with_stratified(self.stratified);
        spec.validate()?;
        Ok((data, spec))
    }

    /// Candidate columns and selection options for `spec`.
    pub fn select_options(&self, spec: &ModelSpec) -> Result<(Vec<String>, SelectOptions)> {
        let cand = if self.select.candidates.is_empty() {
            spec.location.clone()
        } else {
            self.select.candidates.clone()
        };
        let j = cand.len();
        let mut mandatory = Vec::new();
        for m in &self.select.mandatory {
            let (part, col) = m.split_once(':').ok_or_else(|| {
                Error::Config(format!(
                    "mandatory entry `{m}` is not `loc:<column>` or `scale:<column>`"
                ))
            })?;
            let k = cand
                .iter()
                .position(|c| c == col)
                .ok_or_else(|| Error::Config(format!("mandatory column `{col}` is not a candidate")))?;
            mandatory.push(match part {
                "loc" => k,
                "scale" => j + k,
                _ => {
                    return Err(Error::Config(format!(
                        "mandatory entry `{m}` has unknown part `{part}`"
                    )))
                }
            });
        }
        let mut opts = SelectOptions {
            s_max: self.select.s_max,
            tau: self.select.tau.clone(),
            mandatory,
            fit: FitOptions {
                compute_vcov: false,
                ..self.fit.clone()
            },
            ..SelectOptions::default()
        };
        if let Some(k) = self.select.k_max {
            opts.k_max = k;
        }
        Ok((cand, opts))
    }

    pub fn tree_options(&self, seed: u64, b: Option<usize>) -> TreeOptions {
        TreeOptions {
            alpha: self.tree.alpha,
            min_node_size: self.tree.min_node_size,
            max_depth: self.tree.max_depth,
            b,
            seed,
            variables: self.tree.variables.clone(),
            fit: FitOptions {
                compute_vcov: false,
                ..self.fit.clone()
            },
        }
    }

    /// Model covariate values for one new row of raw cells, with features
    /// evaluated as for the training data `train`.
    pub fn covariate_row(&self, train: &Dataset, raw: &BTreeMap<String, String>) -> Result<BTreeMap<String, f64>> {
        let cell = |name: &str| -> Result<&str> {
            raw.get(name).map(|s| s.trim()).ok_or_else(|| Error::Data {
                row: None,
                column: Some(name.to_string()),
                message: "missing in prediction data".into(),
            })
        };
        let number = |name: &str| -> Result<f64> {
            let c = cell(name)?;
            c.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Data {
                    row: None,
                    column: Some(name.to_string()),
                    message: format!("`{c}` is not a finite number"),
                })
        };
        let mut out = BTreeMap::new();
        for term in [&self.location, &self.scale] {
            for t in &term.terms {
                match train.variables.iter().find(|v| &v.name == t).map(|v| &v.kind) {
                    Some(VariableKind::Categorical { levels, .. }) => {
                        let label = cell(t)?;
                        if !levels.iter().any(|l| l == label) {
                            return Err(Error::UnknownLevel {
                                level: label.to_string(),
                            });
                        }
                        for l in levels.iter().skip(1) {
                            out.insert(format!("{t}{l}"), (l == label) as u8 as f64);
                        }
                    }
                    _ => {
                        out.insert(t.clone(), number(t)?);
                    }
                }
            }
            for f in &term.features {
                let x = number(f.column())?;
                match f {
                    Feature::Harmonic { column, frequencies } => {
                        let m = harmonic_features(&[x], frequencies)?;
                        for (k, name) in harmonic_names(column, frequencies).into_iter().enumerate() {
                            out.insert(name, m[(0, k)]);
                        }
                    }
                    Feature::Spline { column, knots, degree } => {
                        let b = SplineBasis::new(&train.column(column)?, knots, *degree)?;
                        for (k, v) in b.eval(x)?.into_iter().enumerate() {
                            out.insert(format!("{column}_bs{}", k + 1), v);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn prepare_path(&self, path: &Path) -> Result<(Dataset, ModelSpec)> {
        self.prepare(open_data(path)?)
    }
}

/// Columns of a term; feature columns are added to `data` once.
fn expand_terms(data: &mut Dataset, term: &TermConfig) -> Result<Vec<String>> {
    let mut out: Vec<String> = Vec::new();
    let push = |name: String, out: &mut Vec<String>| {
        if !out.contains(&name) {
            out.push(name);
        }
    };
    for t in &term.terms {
        if let Some(v) = data.variables.iter().find(|v| &v.name == t) {
            if let VariableKind::Categorical { columns, .. } = &v.kind {
                for &c in columns {
                    push(data.columns[c].clone(), &mut out);
                }
                continue;
            }
        }
        data.column_index(t)?;
        push(t.clone(), &mut out);
    }
    for f in &term.features {
        let x = data.column(f.column())?;
        let (names, m) = match f {
            Feature::Harmonic { column, frequencies } => {
                (harmonic_names(column, frequencies), harmonic_features(&x, frequencies)?)
            }
            Feature::Spline { column, knots, degree } => {
                let b = SplineBasis::new(&x, knots, *degree)?;
                (spline_names(column, b.dim()), b.design(&x)?)
            }
        };
        // B-splines sum to one: drop the first so the term carries no intercept
        let skip = matches!(f, Feature::Spline { .. }) as usize;
        for (k, name) in names.into_iter().enumerate().skip(skip) {
            if data.column_index(&name).is_err() {
                let col: Vec<f64> = m.column(k).iter().copied().collect();
                data.push_column(&name, &col)?;
            }
            push(name, &mut out);
        }
    }
    Ok(out)
}
