//! Typed patient tables: schema declarations, CSV ingestion and export.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("invalid schema JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid column name `{0}`")]
    InvalidName(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("schema needs exactly one `id` column, found {0}")]
    IdColumns(usize),
    #[error("column `{column}`: {message}")]
    Column { column: String, message: String },
    #[error("more than one column tagged `{0}`")]
    DuplicateRole(Role),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("header mismatch: missing {missing:?}, unexpected {unexpected:?}")]
    HeaderMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("line {line}, column `{column}`: cannot parse `{value}` as {expected}")]
    Unparseable {
        line: u64,
        column: String,
        value: String,
        expected: &'static str,
    },
    #[error("line {line}: duplicate patient identifier `{id}`")]
    DuplicateId { line: u64, id: String },
    #[error("line {line}: missing patient identifier")]
    MissingId { line: u64 },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    /// Patient identifier; mandatory and unique.
    Id,
    Binary,
    Ordered,
    Categorical,
    Real,
}

impl ColumnType {
    fn describe(self) -> &'static str {
        match self {
            ColumnType::Id => "identifier",
            ColumnType::Binary => "binary",
            ColumnType::Ordered => "ordered level",
            ColumnType::Categorical => "categorical level",
            ColumnType::Real => "real",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Treatment,
    Outcome,
    Centre,
    Covariate,
    Scan,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Role::Treatment => "treatment",
            Role::Outcome => "outcome",
            Role::Centre => "centre",
            Role::Covariate => "covariate",
            Role::Scan => "scan",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: ColumnType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    /// Declared levels, in order, for ordered and categorical columns.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
    /// Levels coded as an unfavourable (1) binary outcome.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unfavourable: Vec<String>,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnType) -> Self {
        ColumnSpec {
            name: name.into(),
            kind,
            role: None,
            levels: Vec::new(),
            unfavourable: Vec::new(),
        }
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = Some(role);
        self
    }

    pub fn with_levels<I, S>(mut self, levels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.levels = levels.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_unfavourable<I, S>(mut self, levels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.unfavourable = levels.into_iter().map(Into::into).collect();
        self
    }

    pub fn level_index(&self, label: &str) -> Option<u32> {
        self.levels.iter().position(|l| l == label).map(|i| i as u32)
    }

    /// Numeric value of a level: the label itself when numeric, else its
    /// 1-based position.
    pub fn level_value(&self, idx: u32) -> f64 {
        let label = &self.levels[idx as usize];
        label.parse::<f64>().unwrap_or(f64::from(idx + 1))
    }

    /// Whether this column can be read as a binary indicator.
    pub fn is_binary_like(&self) -> bool {
        self.kind == ColumnType::Binary || !self.unfavourable.is_empty()
    }
}

/// Column declarations for a patient table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct Schema {
    columns: Vec<ColumnSpec>,
}

#[derive(Serialize, Deserialize)]
struct RawSchema {
    columns: Vec<ColumnSpec>,
}

impl TryFrom<RawSchema> for Schema {
    type Error = SchemaError;
    fn try_from(raw: RawSchema) -> Result<Self, SchemaError> {
        Schema::new(raw.columns)
    }
}

impl From<Schema> for RawSchema {
    fn from(s: Schema) -> RawSchema {
        RawSchema { columns: s.columns }
    }
}

pub(crate) fn is_column_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {
            chars.all(|c| c.is_alphanumeric() || c == '_' || c == '-') && !s.contains("->")
        }
        _ => false,
    }
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self, SchemaError> {
        let mut names = HashSet::new();
        let mut roles = HashSet::new();
        for c in &columns {
            if !is_column_name(&c.name) {
                return Err(SchemaError::InvalidName(c.name.clone()));
            }
            if !names.insert(c.name.as_str()) {
                return Err(SchemaError::DuplicateColumn(c.name.clone()));
            }
            let err = |message: &str| SchemaError::Column {
                column: c.name.clone(),
                message: message.to_string(),
            };
            match c.kind {
                ColumnType::Ordered | ColumnType::Categorical => {
                    if c.levels.is_empty() {
                        return Err(err("levels must be declared"));
                    }
                    let unique: HashSet<_> = c.levels.iter().collect();
                    if unique.len() != c.levels.len() {
                        return Err(err("duplicate level"));
                    }
                    if c.levels.iter().any(String::is_empty) {
                        return Err(err("empty level label"));
                    }
                    if let Some(u) = c.unfavourable.iter().find(|u| !c.levels.contains(u)) {
                        return Err(err(&format!("unfavourable level `{u}` not declared")));
                    }
                }
                _ => {
                    if !c.levels.is_empty() || !c.unfavourable.is_empty() {
                        return Err(err("levels are only allowed on ordered/categorical columns"));
                    }
                }
            }
            if let Some(role) = c.role {
                if matches!(role, Role::Treatment | Role::Outcome | Role::Centre) && !roles.insert(role) {
                    return Err(SchemaError::DuplicateRole(role));
                }
                match role {
                    Role::Treatment if c.kind != ColumnType::Binary => {
                        return Err(err("treatment column must be binary"))
                    }
                    Role::Outcome if !c.is_binary_like() => {
                        return Err(err(
                            "outcome column must be binary or declare its unfavourable levels",
                        ))
                    }
                    Role::Centre if c.kind != ColumnType::Categorical => {
                        return Err(err("centre column must be categorical"))
                    }
                    _ if c.kind == ColumnType::Id => return Err(err("id column cannot carry a role")),
                    _ => {}
                }
            }
        }
        let ids = columns.iter().filter(|c| c.kind == ColumnType::Id).count();
        if ids != 1 {
            return Err(SchemaError::IdColumns(ids));
        }
        Ok(Schema { columns })
    }

    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn id_column(&self) -> &ColumnSpec {
        self.columns
            .iter()
            .find(|c| c.kind == ColumnType::Id)
            .expect("validated schema has an id column")
    }

    pub fn with_role(&self, role: Role) -> Vec<&ColumnSpec> {
        self.columns.iter().filter(|c| c.role == Some(role)).collect()
    }

    /// The single column carrying `role`, if any.
    pub fn role_column(&self, role: Role) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.role == Some(role))
    }
}

/// Column values; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Id(Vec<String>),
    Binary(Vec<Option<bool>>),
    Level(Vec<Option<u32>>),
    Real(Vec<Option<f64>>),
}

impl ColumnData {
    fn empty(kind: ColumnType) -> Self {
        match kind {
            ColumnType::Id => ColumnData::Id(Vec::new()),
            ColumnType::Binary => ColumnData::Binary(Vec::new()),
            ColumnType::Ordered | ColumnType::Categorical => ColumnData::Level(Vec::new()),
            ColumnType::Real => ColumnData::Real(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnData::Id(v) => v.len(),
            ColumnData::Binary(v) => v.len(),
            ColumnData::Level(v) => v.len(),
            ColumnData::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            ColumnData::Id(_) => false,
            ColumnData::Binary(v) => v[row].is_none(),
            ColumnData::Level(v) => v[row].is_none(),
            ColumnData::Real(v) => v[row].is_none(),
        }
    }

    fn select(&self, rows: &[usize]) -> Self {
        match self {
            ColumnData::Id(v) => ColumnData::Id(rows.iter().map(|&r| v[r].clone()).collect()),
            ColumnData::Binary(v) => ColumnData::Binary(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Level(v) => ColumnData::Level(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Real(v) => ColumnData::Real(rows.iter().map(|&r| v[r]).collect()),
        }
    }

    fn matches_kind(&self, kind: ColumnType) -> bool {
        matches!(
            (self, kind),
            (ColumnData::Id(_), ColumnType::Id)
                | (ColumnData::Binary(_), ColumnType::Binary)
                | (ColumnData::Level(_), ColumnType::Ordered | ColumnType::Categorical)
                | (ColumnData::Real(_), ColumnType::Real)
        )
    }
}

/// Rows dropped by a complete-case or stratum selection.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub input_rows: usize,
    pub kept_rows: usize,
    pub excluded_missing: usize,
    /// Per referenced column, the number of excluded rows missing it.
    pub missing_by_column: BTreeMap<String, usize>,
    pub excluded_ids: Vec<String>,
}

/// Row count and per-column missingness after ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub rows: usize,
    pub missing: BTreeMap<String, usize>,
}

/// Immutable patient-level table.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientTable {
    schema: Schema,
    columns: Vec<ColumnData>,
    rows: usize,
}

impl PatientTable {
    /// Assembles a table from columns matching `schema` one-to-one.
    pub fn from_columns(schema: Schema, columns: Vec<ColumnData>) -> Result<Self, IngestError> {
        if columns.len() != schema.columns.len() {
            return Err(IngestError::Invalid(format!(
                "{} columns for a {}-column schema",
                columns.len(),
                schema.columns.len()
            )));
        }
        let rows = columns.first().map(ColumnData::len).unwrap_or(0);
        for (spec, data) in schema.columns.iter().zip(&columns) {
            if data.len() != rows {
                return Err(IngestError::Invalid(format!("column `{}` has {} rows, expected {rows}", spec.name, data.len())));
            }
            if !data.matches_kind(spec.kind) {
                return Err(IngestError::Invalid(format!("column `{}` holds the wrong value type", spec.name)));
            }
            if let ColumnData::Level(v) = data {
                if v.iter().flatten().any(|&l| l as usize >= spec.levels.len()) {
                    return Err(IngestError::Invalid(format!("column `{}` has an undeclared level", spec.name)));
                }
            }
            if let ColumnData::Id(ids) = data {
                let mut seen = HashSet::new();
                for (i, id) in ids.iter().enumerate() {
                    if id.is_empty() {
                        return Err(IngestError::MissingId { line: i as u64 + 2 });
                    }
                    if !seen.insert(id) {
                        return Err(IngestError::DuplicateId { line: i as u64 + 2, id: id.clone() });
                    }
                }
            }
        }
        Ok(PatientTable { schema, columns, rows })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn data(&self, name: &str) -> Option<&ColumnData> {
        self.schema.position(name).map(|i| &self.columns[i])
    }

    pub fn ids(&self) -> &[String] {
        let i = self
            .schema
            .columns
            .iter()
            .position(|c| c.kind == ColumnType::Id)
            .expect("validated schema has an id column");
        match &self.columns[i] {
            ColumnData::Id(v) => v,
            _ => unreachable!("id column holds identifiers"),
        }
    }

    pub fn row_of_id(&self, id: &str) -> Option<usize> {
        self.ids().iter().position(|x| x == id)
    }

    pub fn missing_count(&self, name: &str) -> Option<usize> {
        self.data(name)
            .map(|d| (0..self.rows).filter(|&r| d.is_missing(r)).count())
    }

    pub fn summary(&self) -> IngestSummary {
        IngestSummary {
            rows: self.rows,
            missing: self
                .schema
                .columns
                .iter()
                .map(|c| (c.name.clone(), self.missing_count(&c.name).unwrap_or(0)))
                .collect(),
        }
    }

    pub fn is_missing(&self, name: &str, row: usize) -> bool {
        self.data(name).map(|d| d.is_missing(row)).unwrap_or(true)
    }

    /// Numeric reading of a cell: binary as 0/1, levels via
    /// [`ColumnSpec::level_value`], reals as-is.
    pub fn numeric(&self, name: &str, row: usize) -> Option<f64> {
        let spec = self.schema.column(name)?;
        match self.data(name)? {
            ColumnData::Binary(v) => v[row].map(|b| if b { 1.0 } else { 0.0 }),
            ColumnData::Level(v) => v[row].map(|l| spec.level_value(l)),
            ColumnData::Real(v) => v[row],
            ColumnData::Id(_) => None,
        }
    }

    /// Binary reading of a cell; dichotomized columns map their unfavourable
    /// levels to `true`.
    pub fn binary(&self, name: &str, row: usize) -> Option<bool> {
        let spec = self.schema.column(name)?;
        match self.data(name)? {
            ColumnData::Binary(v) => v[row],
            ColumnData::Level(v) if !spec.unfavourable.is_empty() => {
                v[row].map(|l| spec.unfavourable.contains(&spec.levels[l as usize]))
            }
            _ => None,
        }
    }

    pub fn level(&self, name: &str, row: usize) -> Option<u32> {
        match self.data(name)? {
            ColumnData::Level(v) => v[row],
            _ => None,
        }
    }

    /// Textual form of a cell as written to CSV (empty when missing).
    pub fn cell_text(&self, col: usize, row: usize) -> String {
        let spec = &self.schema.columns[col];
        match &self.columns[col] {
            ColumnData::Id(v) => v[row].clone(),
            ColumnData::Binary(v) => v[row].map(|b| if b { "1" } else { "0" }.to_string()).unwrap_or_default(),
            ColumnData::Level(v) => v[row].map(|l| spec.levels[l as usize].clone()).unwrap_or_default(),
            ColumnData::Real(v) => v[row].map(|x| format!("{x}")).unwrap_or_default(),
        }
    }

    /// Row subset, preserving schema and row order of `rows`.
    pub fn select_rows(&self, rows: &[usize]) -> PatientTable {
        PatientTable {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            rows: rows.len(),
        }
    }

    /// Drops rows missing any of `columns`.
    pub fn complete_case(&self, columns: &[&str]) -> Result<(PatientTable, ExclusionReport), IngestError> {
        let data: Vec<(&str, &ColumnData)> = columns
            .iter()
            .map(|&c| {
                self.data(c)
                    .map(|d| (c, d))
                    .ok_or_else(|| IngestError::Invalid(format!("unknown column `{c}`")))
            })
            .collect::<Result<_, _>>()?;
        let mut keep = Vec::with_capacity(self.rows);
        let mut report = ExclusionReport {
            input_rows: self.rows,
            ..Default::default()
        };
        for r in 0..self.rows {
            let missing: Vec<&str> = data.iter().filter(|(_, d)| d.is_missing(r)).map(|(c, _)| *c).collect();
            if missing.is_empty() {
                keep.push(r);
            } else {
                report.excluded_missing += 1;
                report.excluded_ids.push(self.ids()[r].clone());
                for c in missing {
                    *report.missing_by_column.entry(c.to_string()).or_default() += 1;
                }
            }
        }
        report.kept_rows = keep.len();
        Ok((self.select_rows(&keep), report))
    }

    /// Writes the table as CSV with a header row in schema order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.schema.columns.iter().map(|c| c.name.as_str()))?;
        for r in 0..self.rows {
            w.write_record((0..self.columns.len()).map(|c| self.cell_text(c, r)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }
}

fn parse_binary(s: &str) -> Option<bool> {
    match s {
        "1" | "true" | "TRUE" => Some(true),
        "0" | "false" | "FALSE" => Some(false),
        _ => None,
    }
}

/// Reads a CSV stream against `schema`. Empty cells are recorded as missing.
pub fn ingest_csv<R: Read>(source: R, schema: &Schema) -> Result<PatientTable, IngestError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let declared: BTreeSet<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
    let found: BTreeSet<&str> = header.iter().map(String::as_str).collect();
    if declared != found || header.len() != schema.columns.len() {
        return Err(IngestError::HeaderMismatch {
            missing: declared.difference(&found).map(|s| s.to_string()).collect(),
            unexpected: found.difference(&declared).map(|s| s.to_string()).collect(),
        });
    }
    // position of each schema column in the file
    let order: Vec<usize> = schema
        .columns
        .iter()
        .map(|c| header.iter().position(|h| *h == c.name).unwrap())
        .collect();
    let mut columns: Vec<ColumnData> = schema.columns.iter().map(|c| ColumnData::empty(c.kind)).collect();
    let mut ids = HashSet::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        for ((spec, &pos), data) in schema.columns.iter().zip(&order).zip(columns.iter_mut()) {
            let raw = record.get(pos).unwrap_or("");
            let cell = raw.trim();
            let bad = || IngestError::Unparseable {
                line,
                column: spec.name.clone(),
                value: raw.to_string(),
                expected: spec.kind.describe(),
            };
            match data {
                ColumnData::Id(v) => {
                    if cell.is_empty() {
                        return Err(IngestError::MissingId { line });
                    }
                    if !ids.insert(cell.to_string()) {
                        return Err(IngestError::DuplicateId { line, id: cell.to_string() });
                    }
                    v.push(cell.to_string());
                }
                ColumnData::Binary(v) => v.push(if cell.is_empty() {
                    None
                } else {
                    Some(parse_binary(cell).ok_or_else(bad)?)
                }),
                ColumnData::Level(v) => v.push(if cell.is_empty() {
                    None
                } else {
                    Some(spec.level_index(cell).ok_or_else(bad)?)
                }),
                ColumnData::Real(v) => v.push(if cell.is_empty() {
                    None
                } else {
                    let x: f64 = cell.parse().map_err(|_| bad())?;
                    if !x.is_finite() {
                        return Err(bad());
                    }
                    Some(x)
                }),
            }
        }
    }
    let rows = columns.first().map(ColumnData::len).unwrap_or(0);
    Ok(PatientTable {
        schema: schema.clone(),
        columns,
        rows,
    })
}
