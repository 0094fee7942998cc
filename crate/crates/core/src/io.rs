//! CSV ingestion: comma-separated, header row required, UTF-8.
//!
//! The response is read from `y` (exact, count, ordinal, censored) or from
//! `y_left`/`y_right` (interval; an empty cell or `-Inf`/`Inf` is
//! unbounded). Remaining numeric columns become covariates; string columns
//! are expanded to treatment contrasts.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::data::{encode_response, Dataset, RawResponse, ResponseDatum, ResponseKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResponseConfig {
    pub kind: ResponseKind,
    pub column: String,
    pub left: String,
    pub right: String,
    /// Event indicator (1 = observed, 0 = right-censored) for exact kinds.
    pub event: Option<String>,
    /// Ordered levels of an ordinal response.
    pub levels: Option<Vec<String>>,
    /// Declared positive support: left-censoring starts at 0.
    pub positive: bool,
}

impl Default for ResponseConfig {
    fn default() -> Self {
        ResponseConfig {
            kind: ResponseKind::Exact,
            column: "y".into(),
            left: "y_left".into(),
            right: "y_right".into(),
            event: None,
            levels: None,
            positive: false,
        }
    }
}

/// Which columns play which role.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnRoles {
    pub response: ResponseConfig,
    pub stratum: Option<String>,
    pub weights: Option<String>,
    /// Columns read as categorical even when numeric.
    pub categorical: Vec<String>,
    /// Ordered categorical columns with their level order.
    pub ordered: BTreeMap<String, Vec<String>>,
}

/// Interval bound from a CSV cell: empty means unbounded on that side.
pub fn parse_bound(cell: &str, upper: bool) -> std::result::Result<f64, String> {
    let s = cell.trim();
    if s.is_empty() {
        return Ok(if upper { f64::INFINITY } else { f64::NEG_INFINITY });
    }
    match s.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => return Ok(f64::INFINITY),
        "-inf" | "-infinity" => return Ok(f64::NEG_INFINITY),
        _ => {}
    }
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_nan() {
        return Err("NaN bound".into());
    }
    Ok(v)
}

fn parse_number(cell: &str) -> Option<f64> {
    let s = cell.trim();
    if s.is_empty() {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn data_err(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Data {
        row: Some(row + 1),
        column: Some(column.to_string()),
        message: message.into(),
    }
}

/// Raw table: header plus string cells.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(input: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(input);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.iter().all(|h| h.is_empty()) {
            return Err(Error::data("missing header row"));
        }
        for (k, h) in header.iter().enumerate() {
            if h.is_empty() {
                return Err(Error::data(format!("header cell {} is empty", k + 1)));
            }
            if header[..k].contains(h) {
                return Err(Error::data(format!("duplicate column `{h}`")));
            }
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::Data {
                    row: Some(i + 1),
                    column: None,
                    message: format!("expected {} fields, found {}", header.len(), rec.len()),
                });
            }
            rows.push(rec.iter().map(str::to_string).collect());
        }
        if rows.is_empty() {
            return Err(Error::data("no data rows"));
        }
        Ok(Table { header, rows })
    }

    fn col(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn need(&self, name: &str) -> Result<usize> {
        self.col(name).ok_or_else(|| Error::Data {
            row: None,
            column: Some(name.to_string()),
            message: "column not found".into(),
        })
    }
}

fn read_responses(t: &Table, r: &ResponseConfig) -> Result<(Vec<ResponseDatum>, Vec<usize>)> {
    let interval = t.col(&r.left).is_some() && t.col(&r.right).is_some() && t.col(&r.column).is_none();
    let mut used = Vec::new();
    let out = if interval {
        if !matches!(r.kind, ResponseKind::Interval | ResponseKind::Exact) {
            return Err(Error::Config(format!(
                "columns `{}`/`{}` need response kind interval",
                r.left, r.right
            )));
        }
        let (l, u) = (t.need(&r.left)?, t.need(&r.right)?);
        used.extend([l, u]);
        t.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let lo = parse_bound(&row[l], false).map_err(|m| data_err(i, &r.left, m))?;
                let hi = parse_bound(&row[u], true).map_err(|m| data_err(i, &r.right, m))?;
                let raw = if lo == hi {
                    RawResponse::Value(lo)
                } else {
                    RawResponse::Bounds(lo, hi)
                };
                encode_response(ResponseKind::Interval, raw, None, r.positive)
                    .map_err(|e| data_err(i, &r.left, e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        let c = t.need(&r.column)?;
        used.push(c);
        let event = match &r.event {
            Some(e) => {
                let k = t.need(e)?;
                used.push(k);
                Some(k)
            }
            None => None,
        };
        t.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let cell = row[c].trim();
                let raw = match r.kind {
                    ResponseKind::Ordinal => match parse_number(cell) {
                        Some(v) if r.levels.as_ref().is_some_and(|l| !l.iter().any(|x| x == cell)) => {
                            RawResponse::Value(v)
                        }
                        _ => RawResponse::Level(cell),
                    },
                    _ => RawResponse::Value(
                        parse_number(cell)
                            .ok_or_else(|| data_err(i, &r.column, format!("`{cell}` is not a finite number")))?,
                    ),
                };
                let kind = match (r.kind, event) {
                    (ResponseKind::Exact, Some(k)) => match row[k].trim() {
                        "1" | "1.0" | "true" | "TRUE" => ResponseKind::Exact,
                        "0" | "0.0" | "false" | "FALSE" => ResponseKind::Right,
                        other => {
                            return Err(data_err(
                                i,
                                &t.header[k],
                                format!("event indicator `{other}` is not 0/1"),
                            ))
                        }
                    },
                    (k, _) => k,
                };
                encode_response(kind, raw, r.levels.as_deref(), r.positive)
                    .map_err(|e| data_err(i, &r.column, e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?
    };
    Ok((out, used))
}

/// Read a dataset from CSV text.
pub fn read_csv(input: impl Read, roles: &ColumnRoles) -> Result<Dataset> {
    let t = Table::read(input)?;
    let (responses, mut used) = read_responses(&t, &roles.response)?;
    let n = responses.len();
    let stratum = match &roles.stratum {
        Some(s) => {
            let k = t.need(s)?;
            used.push(k);
            Some((
                s.clone(),
                t.rows.iter().map(|r| r[k].trim().to_string()).collect::<Vec<_>>(),
            ))
        }
        None => None,
    };
    let weights = match &roles.weights {
        Some(w) => {
            let k = t.need(w)?;
            used.push(k);
            Some(
                t.rows
                    .iter()
                    .enumerate()
                    .map(|(i, r)| parse_number(&r[k]).ok_or_else(|| data_err(i, w, "weight is not a finite number")))
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        None => None,
    };
    for name in roles.categorical.iter().chain(roles.ordered.keys()) {
        t.need(name)?;
    }
    let mut numeric: Vec<usize> = Vec::new();
    let mut strings: Vec<usize> = Vec::new();
    for k in 0..t.header.len() {
        if used.contains(&k) {
            continue;
        }
        let name = &t.header[k];
        for (i, row) in t.rows.iter().enumerate() {
            if row[k].trim().is_empty() {
                return Err(data_err(i, name, "missing value"));
            }
        }
        let forced = roles.categorical.contains(name) || roles.ordered.contains_key(name);
        let bad = t.rows.iter().position(|r| parse_number(&r[k]).is_none());
        match bad {
            _ if forced => strings.push(k),
            None => numeric.push(k),
            // mixed columns are more likely typos than labels
            Some(i) if t.rows.iter().any(|r| parse_number(&r[k]).is_some()) => {
                return Err(data_err(
                    i,
                    name,
                    format!(
                        "`{}` is not a number (declare the column categorical to read labels)",
                        t.rows[i][k].trim()
                    ),
                ))
            }
            Some(_) => strings.push(k),
        }
    }
    let rows: Vec<Vec<f64>> = t
        .rows
        .iter()
        .map(|r| {
            numeric
                .iter()
                .map(|&k| parse_number(&r[k]).expect("checked numeric"))
                .collect()
        })
        .collect();
    let names = numeric.iter().map(|&k| t.header[k].clone()).collect();
    let mut data = Dataset::new(responses, &rows, names)?;
    for &k in &strings {
        let name = &t.header[k];
        let labels: Vec<String> = t.rows.iter().map(|r| r[k].trim().to_string()).collect();
        let (levels, ordered) = match roles.ordered.get(name) {
            Some(l) => (Some(l.clone()), true),
            None => (None, false),
        };
        data.push_categorical(name, &labels, levels, ordered)?;
    }
    if let Some((name, labels)) = stratum {
        data = data.with_strata(&name, &labels)?;
    }
    if let Some(w) = weights {
        data = data.with_weights(w)?;
    }
    debug_assert_eq!(data.len(), n);
    Ok(data)
}

/// Rows of a CSV file as column name to cell maps, for prediction data.
pub fn read_raw_rows(input: impl Read) -> Result<Vec<BTreeMap<String, String>>> {
    let t = Table::read(input)?;
    Ok(t.rows
        .iter()
        .map(|r| t.header.iter().cloned().zip(r.iter().cloned()).collect())
        .collect())
}

/// Open a data file; failures name the path.
pub fn open_data(path: &std::path::Path) -> Result<std::io::BufReader<std::fs::File>> {
    std::fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

pub fn read_csv_path(path: &std::path::Path, roles: &ColumnRoles) -> Result<Dataset> {
    let f = open_data(path)?;
    read_csv(f, roles)
}
