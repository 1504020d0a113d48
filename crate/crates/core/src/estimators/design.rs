//! Design matrices and the covariate encoder kept with every fit.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::FitError;
use crate::study::{ColumnType, PatientTable};

pub const INTERCEPT_LABEL: &str = "(Intercept)";

/// How one covariate becomes design columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Term {
    /// `(x - mean) / sd`. Ordered columns carry their level labels so new rows
    /// may give either a number or a label.
    Numeric {
        name: String,
        mean: f64,
        sd: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        levels: Option<Vec<String>>,
    },
    /// 0/1 indicator, not rescaled.
    Indicator { name: String },
    /// One column per non-reference level.
    OneHot {
        name: String,
        levels: Vec<String>,
        reference: usize,
    },
}

impl Term {
    fn name(&self) -> &str {
        match self {
            Term::Numeric { name, .. } | Term::Indicator { name } | Term::OneHot { name, .. } => name,
        }
    }

    fn labels(&self) -> Vec<String> {
        match self {
            Term::Numeric { name, .. } | Term::Indicator { name } => vec![name.clone()],
            Term::OneHot { name, levels, reference } => levels
                .iter()
                .enumerate()
                .filter(|(i, _)| i != reference)
                .map(|(_, l)| format!("{name}={l}"))
                .collect(),
        }
    }
}

/// Raw covariate value for prediction on new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovariateValue {
    Number(f64),
    Bool(bool),
    Level(String),
}

pub type CovariateRow = BTreeMap<String, CovariateValue>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EncodeOptions {
    /// Reference level per categorical column (default: first declared).
    pub references: BTreeMap<String, String>,
    /// One-hot encode ordered columns instead of coercing them to numbers.
    pub ordered_as_factor: bool,
}

/// Maps covariates to design columns, with the standardization and level
/// maps fixed at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub intercept: bool,
    pub terms: Vec<Term>,
}

impl Encoder {
    /// Identity encoding for already-numeric columns.
    pub fn raw(names: &[&str], intercept: bool) -> Encoder {
        Encoder {
            intercept,
            terms: names
                .iter()
                .map(|n| Term::Numeric {
                    name: n.to_string(),
                    mean: 0.0,
                    sd: 1.0,
                    levels: None,
                })
                .collect(),
        }
    }

    /// Learns standardization and level maps from the rows of `table`.
    pub fn fit(table: &PatientTable, covariates: &[&str], opts: &EncodeOptions) -> Result<Encoder, FitError> {
        let mut terms = Vec::with_capacity(covariates.len());
        for &name in covariates {
            let spec = table
                .schema()
                .column(name)
                .ok_or_else(|| FitError::UnknownColumn(name.to_string()))?;
            let term = match spec.kind {
                ColumnType::Id => return Err(FitError::UnknownColumn(format!("{name} (identifier column)"))),
                ColumnType::Binary => Term::Indicator { name: name.to_string() },
                ColumnType::Categorical => one_hot(name, &spec.levels, opts)?,
                ColumnType::Ordered if opts.ordered_as_factor => one_hot(name, &spec.levels, opts)?,
                ColumnType::Ordered | ColumnType::Real => {
                    let values: Vec<f64> = (0..table.n_rows())
                        .map(|r| {
                            table
                                .numeric(name, r)
                                .ok_or_else(|| FitError::MissingValue { column: name.to_string(), row: r })
                        })
                        .collect::<Result<_, _>>()?;
                    let (mean, sd) = mean_sd(&values);
                    Term::Numeric {
                        name: name.to_string(),
                        mean,
                        // constant columns (e.g. inside a stratum) encode as zeros
                        sd: if sd > 0.0 { sd } else { 1.0 },
                        levels: (spec.kind == ColumnType::Ordered).then(|| spec.levels.clone()),
                    }
                }
            };
            terms.push(term);
        }
        Ok(Encoder { intercept: true, terms })
    }

    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.intercept {
            out.push(INTERCEPT_LABEL.to_string());
        }
        out.extend(self.terms.iter().flat_map(Term::labels));
        out
    }

    pub fn width(&self) -> usize {
        self.labels().len()
    }

    pub fn covariates(&self) -> Vec<&str> {
        self.terms.iter().map(Term::name).collect()
    }

    /// Encodes every row of `table`; missing cells are an error.
    pub fn encode_table(&self, table: &PatientTable) -> Result<DMatrix<f64>, FitError> {
        let width = self.width();
        let mut x = DMatrix::zeros(table.n_rows(), width);
        for r in 0..table.n_rows() {
            let mut c = 0;
            if self.intercept {
                x[(r, 0)] = 1.0;
                c = 1;
            }
            for term in &self.terms {
                let missing = || FitError::MissingValue { column: term.name().to_string(), row: r };
                match term {
                    Term::Numeric { name, mean, sd, .. } => {
                        let v = table.numeric(name, r).ok_or_else(missing)?;
                        x[(r, c)] = (v - mean) / sd;
                        c += 1;
                    }
                    Term::Indicator { name } => {
                        x[(r, c)] = table.numeric(name, r).ok_or_else(missing)?;
                        c += 1;
                    }
                    Term::OneHot { name, levels, reference } => {
                        let spec = table
                            .schema()
                            .column(name)
                            .ok_or_else(|| FitError::UnknownColumn(name.clone()))?;
                        let l = table.level(name, r).ok_or_else(missing)?;
                        let label = &spec.levels[l as usize];
                        let pos = levels.iter().position(|x| x == label).ok_or_else(|| FitError::UnseenLevel {
                            column: name.clone(),
                            level: label.clone(),
                        })?;
                        let mut k = c;
                        for i in 0..levels.len() {
                            if i == *reference {
                                continue;
                            }
                            x[(r, k)] = if i == pos { 1.0 } else { 0.0 };
                            k += 1;
                        }
                        c = k;
                    }
                }
            }
        }
        Ok(x)
    }

    /// Encodes one new row given raw covariate values.
    pub fn encode_row(&self, row: &CovariateRow) -> Result<Vec<f64>, FitError> {
        let mut out = Vec::with_capacity(self.width());
        if self.intercept {
            out.push(1.0);
        }
        for term in &self.terms {
            let value = row
                .get(term.name())
                .ok_or_else(|| FitError::MissingValue { column: term.name().to_string(), row: 0 })?;
            let bad = || FitError::UnseenLevel {
                column: term.name().to_string(),
                level: format!("{value:?}"),
            };
            match term {
                Term::Numeric { mean, sd, levels, .. } => {
                    let v = match (value, levels) {
                        (CovariateValue::Number(v), _) => *v,
                        (CovariateValue::Level(l), Some(levels)) => {
                            let i = levels.iter().position(|x| x == l).ok_or_else(bad)?;
                            levels[i].parse::<f64>().unwrap_or((i + 1) as f64)
                        }
                        _ => return Err(bad()),
                    };
                    out.push((v - mean) / sd);
                }
                Term::Indicator { .. } => out.push(match value {
                    CovariateValue::Bool(b) => f64::from(u8::from(*b)),
                    CovariateValue::Number(v) if *v == 0.0 || *v == 1.0 => *v,
                    _ => return Err(bad()),
                }),
                Term::OneHot { levels, reference, .. } => {
                    let label = match value {
                        CovariateValue::Level(l) => l.clone(),
                        CovariateValue::Number(v) => format!("{v}"),
                        CovariateValue::Bool(_) => return Err(bad()),
                    };
                    let pos = levels.iter().position(|x| *x == label).ok_or_else(|| FitError::UnseenLevel {
                        column: term.name().to_string(),
                        level: label.clone(),
                    })?;
                    out.extend(
                        (0..levels.len())
                            .filter(|i| i != reference)
                            .map(|i| if i == pos { 1.0 } else { 0.0 }),
                    );
                }
            }
        }
        Ok(out)
    }
}

fn one_hot(name: &str, levels: &[String], opts: &EncodeOptions) -> Result<Term, FitError> {
    let reference = match opts.references.get(name) {
        Some(r) => levels.iter().position(|l| l == r).ok_or_else(|| FitError::UnseenLevel {
            column: name.to_string(),
            level: r.clone(),
        })?,
        None => 0,
    };
    Ok(Term::OneHot {
        name: name.to_string(),
        levels: levels.to_vec(),
        reference,
    })
}

pub(crate) fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Encoded covariates with column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
    labels: Vec<String>,
    encoder: Encoder,
    full_rank: bool,
}

impl DesignMatrix {
    /// Encodes `covariates` of `table` (intercept first). Rows must be complete.
    pub fn from_table(table: &PatientTable, covariates: &[&str], opts: &EncodeOptions) -> Result<Self, FitError> {
        let encoder = Encoder::fit(table, covariates, opts)?;
        let x = encoder.encode_table(table)?;
        Ok(Self::assemble(x, encoder))
    }

    /// Uses numeric rows as given; prepends an intercept column when asked.
    pub fn from_rows(rows: &[Vec<f64>], names: &[&str], intercept: bool) -> Result<Self, FitError> {
        let width = names.len();
        if let Some(r) = rows.iter().position(|r| r.len() != width) {
            return Err(FitError::DimensionMismatch(format!(
                "row {r} has {} values, expected {width}",
                rows[r].len()
            )));
        }
        let offset = usize::from(intercept);
        let x = DMatrix::from_fn(rows.len(), width + offset, |r, c| {
            if intercept && c == 0 {
                1.0
            } else {
                rows[r][c - offset]
            }
        });
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FitError::NonFinite("design matrix".into()));
        }
        Ok(Self::assemble(x, Encoder::raw(names, intercept)))
    }

    /// Wraps an already-encoded matrix produced by `encoder`.
    pub fn from_encoded(x: DMatrix<f64>, encoder: Encoder) -> Result<Self, FitError> {
        if x.ncols() != encoder.width() {
            return Err(FitError::DimensionMismatch(format!(
                "{} columns for a {}-column encoder",
                x.ncols(),
                encoder.width()
            )));
        }
        Ok(Self::assemble(x, encoder))
    }

    fn assemble(x: DMatrix<f64>, encoder: Encoder) -> Self {
        let labels = encoder.labels();
        let full_rank = x.nrows() >= x.ncols() && (x.ncols() == 0 || x.clone().svd(false, false).rank(1e-9 * x.norm().max(1.0)) == x.ncols());
        DesignMatrix {
            x,
            labels,
            encoder,
            full_rank,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn has_intercept(&self) -> bool {
        self.encoder.intercept
    }

    pub fn is_full_rank(&self) -> bool {
        self.full_rank
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }
}
