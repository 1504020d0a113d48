//! Stratum filter expressions.
//!
//! Grammar:
//!
//! ```text
//! expr    := or
//! or      := and ( ("or" | "||") and )*
//! and     := unary ( ("and" | "&&") unary )*
//! unary   := ("not" | "!") unary | primary
//! primary := "(" expr ")" | "true" | "false"
//!          | column op literal
//!          | column "in" "{" literal ("," literal)* "}"
//! op      := "==" | "=" | "!=" | "≠" | "<" | "<=" | "≤" | ">" | ">=" | "≥"
//! literal := number | "quoted text" | bare-word | true | false
//! ```

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::table::{ColumnSpec, ColumnType, ExclusionReport, PatientTable, Schema};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum FilterError {
    #[error("syntax error at column {column}: {message}")]
    Syntax { column: usize, message: String },
    #[error("unknown column `{name}` at column {column}")]
    UnknownColumn { name: String, column: usize },
    #[error("type mismatch on `{name}`: {message}")]
    TypeMismatch { name: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn holds<T: PartialOrd>(self, a: T, b: T) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }

    fn is_equality(self) -> bool {
        matches!(self, CmpOp::Eq | CmpOp::Ne)
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Literal {
    Number { value: f64, text: String },
    Text(String),
    Bool(bool),
}

impl Literal {
    fn text(&self) -> String {
        match self {
            Literal::Number { text, .. } => text.clone(),
            Literal::Text(t) => t.clone(),
            Literal::Bool(b) => b.to_string(),
        }
    }
}

/// Untyped syntax tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Const(bool),
    Compare {
        column: String,
        pos: usize,
        op: CmpOp,
        value: Literal,
    },
    In {
        column: String,
        pos: usize,
        values: Vec<Literal>,
    },
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
}

impl Expr {
    /// Column names referenced anywhere in the expression.
    pub fn columns(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_columns(&mut out);
        out
    }

    fn collect_columns(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Compare { column, .. } | Expr::In { column, .. } => {
                out.insert(column.clone());
            }
            Expr::Not(e) => e.collect_columns(out),
            Expr::And(a, b) | Expr::Or(a, b) => {
                a.collect_columns(out);
                b.collect_columns(out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64, String),
    Str(String),
    Op(CmpOp),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    And,
    Or,
    Not,
    In,
    True,
    False,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, FilterError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |column: usize, message: String| FilterError::Syntax { column, message };
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        let next = chars.get(i + 1).copied();
        let (tok, width) = match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '(' => (Tok::LParen, 1),
            ')' => (Tok::RParen, 1),
            '{' => (Tok::LBrace, 1),
            '}' => (Tok::RBrace, 1),
            ',' => (Tok::Comma, 1),
            '≠' => (Tok::Op(CmpOp::Ne), 1),
            '≤' => (Tok::Op(CmpOp::Le), 1),
            '≥' => (Tok::Op(CmpOp::Ge), 1),
            '=' if next == Some('=') => (Tok::Op(CmpOp::Eq), 2),
            '=' => (Tok::Op(CmpOp::Eq), 1),
            '!' if next == Some('=') => (Tok::Op(CmpOp::Ne), 2),
            '!' => (Tok::Not, 1),
            '<' if next == Some('=') => (Tok::Op(CmpOp::Le), 2),
            '<' => (Tok::Op(CmpOp::Lt), 1),
            '>' if next == Some('=') => (Tok::Op(CmpOp::Ge), 2),
            '>' => (Tok::Op(CmpOp::Gt), 1),
            '&' if next == Some('&') => (Tok::And, 2),
            '|' if next == Some('|') => (Tok::Or, 2),
            '"' | '\'' => {
                let end = chars[i + 1..]
                    .iter()
                    .position(|&d| d == c)
                    .ok_or_else(|| err(col, "unterminated string".into()))?;
                let s: String = chars[i + 1..i + 1 + end].iter().collect();
                (Tok::Str(s), end + 2)
            }
            c if c.is_ascii_digit() || c == '.' || (c == '-' && next.is_some_and(|d| d.is_ascii_digit() || d == '.')) => {
                let mut j = i + 1;
                while j < chars.len()
                    && (chars[j].is_ascii_digit()
                        || chars[j] == '.'
                        || chars[j] == 'e'
                        || chars[j] == 'E'
                        || ((chars[j] == '-' || chars[j] == '+') && matches!(chars[j - 1], 'e' | 'E')))
                {
                    j += 1;
                }
                let s: String = chars[i..j].iter().collect();
                let v: f64 = s.parse().map_err(|_| err(col, format!("invalid number `{s}`")))?;
                (Tok::Number(v, s), j - i)
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut j = i + 1;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_' || chars[j] == '-') {
                    j += 1;
                }
                let s: String = chars[i..j].iter().collect();
                let tok = match s.as_str() {
                    "and" | "AND" => Tok::And,
                    "or" | "OR" => Tok::Or,
                    "not" | "NOT" => Tok::Not,
                    "in" | "IN" => Tok::In,
                    "true" | "TRUE" => Tok::True,
                    "false" | "FALSE" => Tok::False,
                    _ => Tok::Ident(s),
                };
                (tok, j - i)
            }
            other => return Err(err(col, format!("unexpected character `{other}`"))),
        };
        out.push((tok, col));
        i += width;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|&(_, c)| c).unwrap_or(self.end)
    }

    fn error(&self, message: &str) -> FilterError {
        FilterError::Syntax {
            column: self.col(),
            message: message.to_string(),
        }
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), FilterError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected {what}")))
        }
    }

    fn or(&mut self) -> Result<Expr, FilterError> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            lhs = Expr::Or(Box::new(lhs), Box::new(self.and()?));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, FilterError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            lhs = Expr::And(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, FilterError> {
        if self.peek() == Some(&Tok::Not) {
            self.pos += 1;
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn literal(&mut self) -> Result<Literal, FilterError> {
        match self.bump() {
            Some(Tok::Number(value, text)) => Ok(Literal::Number { value, text }),
            Some(Tok::Str(s)) | Some(Tok::Ident(s)) => Ok(Literal::Text(s)),
            Some(Tok::True) => Ok(Literal::Bool(true)),
            Some(Tok::False) => Ok(Literal::Bool(false)),
            _ => {
                self.pos -= 1;
                Err(self.error("expected a value"))
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, FilterError> {
        let pos = self.col();
        match self.bump() {
            Some(Tok::LParen) => {
                let e = self.or()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::True) => Ok(Expr::Const(true)),
            Some(Tok::False) => Ok(Expr::Const(false)),
            Some(Tok::Ident(column)) => match self.bump() {
                Some(Tok::Op(op)) => Ok(Expr::Compare {
                    column,
                    pos,
                    op,
                    value: self.literal()?,
                }),
                Some(Tok::In) => {
                    self.expect(Tok::LBrace, "`{`")?;
                    let mut values = vec![self.literal()?];
                    while self.peek() == Some(&Tok::Comma) {
                        self.pos += 1;
                        values.push(self.literal()?);
                    }
                    self.expect(Tok::RBrace, "`}`")?;
                    Ok(Expr::In { column, pos, values })
                }
                _ => {
                    self.pos -= 1;
                    Err(self.error("expected a comparison operator or `in`"))
                }
            },
            _ => {
                self.pos -= 1;
                Err(self.error("expected a comparison, `(`, `not`, `true` or `false`"))
            }
        }
    }
}

/// Parses filter syntax without resolving columns.
pub fn parse_filter_expr(text: &str) -> Result<Expr, FilterError> {
    let toks = lex(text)?;
    let end = text.chars().count() + 1;
    if toks.is_empty() {
        return Err(FilterError::Syntax {
            column: end,
            message: "empty filter".into(),
        });
    }
    let mut p = Parser { toks, pos: 0, end };
    let e = p.or()?;
    if p.pos < p.toks.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

/// Type-checked predicate over table cells.
#[derive(Debug, Clone, PartialEq)]
enum Pred {
    Const(bool),
    Binary { column: String, op: CmpOp, value: bool },
    BinaryIn { column: String, set: Vec<bool> },
    Level { column: String, op: CmpOp, level: u32 },
    LevelIn { column: String, set: Vec<u32> },
    Real { column: String, op: CmpOp, value: f64 },
    RealIn { column: String, set: Vec<f64> },
    Id { column: String, op: CmpOp, value: String },
    IdIn { column: String, set: Vec<String> },
    Not(Box<Pred>),
    And(Box<Pred>, Box<Pred>),
    Or(Box<Pred>, Box<Pred>),
}

/// A filter checked against a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumFilter {
    text: String,
    expr: Expr,
    pred: Pred,
}

fn mismatch(spec: &ColumnSpec, message: String) -> FilterError {
    FilterError::TypeMismatch {
        name: spec.name.clone(),
        message,
    }
}

fn binary_literal(spec: &ColumnSpec, lit: &Literal) -> Result<bool, FilterError> {
    match lit {
        Literal::Bool(b) => Ok(*b),
        Literal::Number { value, .. } if *value == 0.0 => Ok(false),
        Literal::Number { value, .. } if *value == 1.0 => Ok(true),
        other => Err(mismatch(spec, format!("`{}` is not a binary value", other.text()))),
    }
}

fn level_literal(spec: &ColumnSpec, lit: &Literal) -> Result<u32, FilterError> {
    let text = lit.text();
    if let Some(i) = spec.level_index(&text) {
        return Ok(i);
    }
    if let Literal::Number { value, .. } = lit {
        if let Some(i) = spec.levels.iter().position(|l| l.parse::<f64>().ok() == Some(*value)) {
            return Ok(i as u32);
        }
    }
    Err(mismatch(spec, format!("`{text}` is not a declared level")))
}

fn real_literal(spec: &ColumnSpec, lit: &Literal) -> Result<f64, FilterError> {
    match lit {
        Literal::Number { value, .. } => Ok(*value),
        other => Err(mismatch(spec, format!("`{}` is not a number", other.text()))),
    }
}

fn check(expr: &Expr, schema: &Schema) -> Result<Pred, FilterError> {
    let resolve = |column: &str, pos: usize| {
        schema.column(column).ok_or_else(|| FilterError::UnknownColumn {
            name: column.to_string(),
            column: pos,
        })
    };
    Ok(match expr {
        Expr::Const(b) => Pred::Const(*b),
        Expr::Not(e) => Pred::Not(Box::new(check(e, schema)?)),
        Expr::And(a, b) => Pred::And(Box::new(check(a, schema)?), Box::new(check(b, schema)?)),
        Expr::Or(a, b) => Pred::Or(Box::new(check(a, schema)?), Box::new(check(b, schema)?)),
        Expr::Compare { column, pos, op, value } => {
            let spec = resolve(column, *pos)?;
            let column = column.clone();
            let op = *op;
            let equality_only = |kind: &str| {
                if op.is_equality() {
                    Ok(())
                } else {
                    Err(mismatch(spec, format!("`{op}` is not defined for {kind} columns")))
                }
            };
            match spec.kind {
                ColumnType::Binary => {
                    equality_only("binary")?;
                    Pred::Binary { column, op, value: binary_literal(spec, value)? }
                }
                ColumnType::Categorical => {
                    equality_only("categorical")?;
                    Pred::Level { column, op, level: level_literal(spec, value)? }
                }
                ColumnType::Ordered => Pred::Level { column, op, level: level_literal(spec, value)? },
                ColumnType::Real => Pred::Real { column, op, value: real_literal(spec, value)? },
                ColumnType::Id => {
                    equality_only("identifier")?;
                    Pred::Id { column, op, value: value.text() }
                }
            }
        }
        Expr::In { column, pos, values } => {
            let spec = resolve(column, *pos)?;
            let column = column.clone();
            match spec.kind {
                ColumnType::Binary => Pred::BinaryIn {
                    column,
                    set: values.iter().map(|v| binary_literal(spec, v)).collect::<Result<_, _>>()?,
                },
                ColumnType::Ordered | ColumnType::Categorical => Pred::LevelIn {
                    column,
                    set: values.iter().map(|v| level_literal(spec, v)).collect::<Result<_, _>>()?,
                },
                ColumnType::Real => Pred::RealIn {
                    column,
                    set: values.iter().map(|v| real_literal(spec, v)).collect::<Result<_, _>>()?,
                },
                ColumnType::Id => Pred::IdIn {
                    column,
                    set: values.iter().map(Literal::text).collect(),
                },
            }
        }
    })
}

impl Pred {
    fn eval(&self, t: &PatientTable, row: usize) -> bool {
        match self {
            Pred::Const(b) => *b,
            Pred::Binary { column, op, value } => op.holds(t.binary(column, row).unwrap_or(false), *value),
            Pred::BinaryIn { column, set } => t.binary(column, row).is_some_and(|b| set.contains(&b)),
            Pred::Level { column, op, level } => t.level(column, row).is_some_and(|l| op.holds(l, *level)),
            Pred::LevelIn { column, set } => t.level(column, row).is_some_and(|l| set.contains(&l)),
            Pred::Real { column, op, value } => t.numeric(column, row).is_some_and(|x| op.holds(x, *value)),
            Pred::RealIn { column, set } => t.numeric(column, row).is_some_and(|x| set.contains(&x)),
            Pred::Id { column: _, op, value } => op.holds(&t.ids()[row], value),
            Pred::IdIn { column: _, set } => set.contains(&t.ids()[row]),
            Pred::Not(p) => !p.eval(t, row),
            Pred::And(a, b) => a.eval(t, row) && b.eval(t, row),
            Pred::Or(a, b) => a.eval(t, row) || b.eval(t, row),
        }
    }
}

/// Parses and type-checks a filter against `schema`.
pub fn parse_filter(text: &str, schema: &Schema) -> Result<StratumFilter, FilterError> {
    let expr = parse_filter_expr(text)?;
    let pred = check(&expr, schema)?;
    Ok(StratumFilter {
        text: text.to_string(),
        expr,
        pred,
    })
}

impl StratumFilter {
    /// The filter that keeps every row.
    pub fn all() -> Self {
        StratumFilter {
            text: "true".into(),
            expr: Expr::Const(true),
            pred: Pred::Const(true),
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn columns(&self) -> BTreeSet<String> {
        self.expr.columns()
    }

    /// Conjunction of two filters.
    pub fn and(&self, other: &StratumFilter) -> StratumFilter {
        StratumFilter {
            text: format!("({}) and ({})", self.text, other.text),
            expr: Expr::And(Box::new(self.expr.clone()), Box::new(other.expr.clone())),
            pred: Pred::And(Box::new(self.pred.clone()), Box::new(other.pred.clone())),
        }
    }

    /// `None` when any referenced column is missing in `row`.
    pub fn eval(&self, t: &PatientTable, row: usize) -> Option<bool> {
        if self.columns().iter().any(|c| t.is_missing(c, row)) {
            return None;
        }
        Some(self.pred.eval(t, row))
    }
}

/// Row accounting for a stratum selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumReport {
    pub filter: String,
    pub matched: usize,
    pub non_matching: usize,
    pub exclusions: ExclusionReport,
}

/// Keeps rows satisfying `f`; rows missing any referenced column are
/// excluded and reported.
pub fn apply_stratum(
    t: &PatientTable,
    f: &StratumFilter,
) -> Result<(PatientTable, StratumReport), FilterError> {
    // re-check in case the filter was built against another schema
    check(&f.expr, t.schema())?;
    let columns = f.columns();
    let mut keep = Vec::new();
    let mut report = StratumReport {
        filter: f.text.clone(),
        matched: 0,
        non_matching: 0,
        exclusions: ExclusionReport {
            input_rows: t.n_rows(),
            ..Default::default()
        },
    };
    for row in 0..t.n_rows() {
        match f.eval(t, row) {
            Some(true) => keep.push(row),
            Some(false) => report.non_matching += 1,
            None => {
                let ex = &mut report.exclusions;
                ex.excluded_missing += 1;
                ex.excluded_ids.push(t.ids()[row].clone());
                for c in columns.iter().filter(|c| t.is_missing(c, row)) {
                    *ex.missing_by_column.entry(c.clone()).or_default() += 1;
                }
            }
        }
    }
    report.matched = keep.len();
    report.exclusions.kept_rows = keep.len();
    Ok((t.select_rows(&keep), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::study::table::{ingest_csv, Role};

    fn schema() -> Schema {
        Schema::new(vec![
            ColumnSpec::new("id", ColumnType::Id),
            ColumnSpec::new("wfns", ColumnType::Ordered).with_levels(["1", "2", "3", "4", "5", "6"]),
            ColumnSpec::new("rebleed", ColumnType::Binary),
            ColumnSpec::new("ab", ColumnType::Real).with_role(Role::Scan),
            ColumnSpec::new("centre", ColumnType::Categorical)
                .with_levels(["C1", "C2", "C3"])
                .with_role(Role::Centre),
        ])
        .unwrap()
    }

    fn table() -> PatientTable {
        let csv = "id,wfns,rebleed,ab,centre\n\
                   a,1,0,0.2,C1\n\
                   b,1,1,0.3,C2\n\
                   c,2,0,0.15,C3\n\
                   d,1,0,0.05,C1\n\
                   e,1,0,,C2\n\
                   f,1,,0.4,C3\n";
        ingest_csv(csv.as_bytes(), &schema()).unwrap()
    }

    #[test]
    fn stratum_filters_parse() {
        let s = schema();
        assert!(parse_filter("wfns == 1 and rebleed == 0 and ab > 0.12", &s).is_ok());
        assert!(parse_filter("ab > 0.1 and ab <= 0.5", &s).is_ok());
        assert!(parse_filter("centre in {C1, 'C2'} or not (wfns ≥ 4)", &s).is_ok());
        assert!(parse_filter("rebleed == true && ab ≠ 0.3 || wfns < 3", &s).is_ok());
    }

    #[test]
    fn unknown_column_is_rejected() {
        match parse_filter("unknown_col > 1", &schema()) {
            Err(FilterError::UnknownColumn { name, column }) => {
                assert_eq!(name, "unknown_col");
                assert_eq!(column, 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_and_type_errors() {
        let s = schema();
        assert!(matches!(parse_filter("ab >", &s), Err(FilterError::Syntax { column: 5, .. })));
        assert!(matches!(parse_filter("(ab > 1", &s), Err(FilterError::Syntax { .. })));
        assert!(matches!(parse_filter("ab > 1 ab", &s), Err(FilterError::Syntax { .. })));
        assert!(matches!(parse_filter("", &s), Err(FilterError::Syntax { .. })));
        assert!(matches!(parse_filter("ab $ 1", &s), Err(FilterError::Syntax { column: 4, .. })));
        assert!(matches!(parse_filter("centre > C1", &s), Err(FilterError::TypeMismatch { .. })));
        assert!(matches!(parse_filter("rebleed == 2", &s), Err(FilterError::TypeMismatch { .. })));
        assert!(matches!(parse_filter("wfns == 7", &s), Err(FilterError::TypeMismatch { .. })));
        assert!(matches!(parse_filter("ab == high", &s), Err(FilterError::TypeMismatch { .. })));
    }

    #[test]
    fn applies_with_exclusion_report() {
        let t = table();
        let f = parse_filter("wfns == 1 and rebleed == 0 and ab > 0.12", t.schema()).unwrap();
        let (sub, report) = apply_stratum(&t, &f).unwrap();
        assert_eq!(sub.ids(), ["a"]);
        assert_eq!(report.exclusions.excluded_missing, 2);
        assert_eq!(report.exclusions.missing_by_column["ab"], 1);
        assert_eq!(report.exclusions.missing_by_column["rebleed"], 1);
        assert_eq!(report.matched + report.non_matching + report.exclusions.excluded_missing, t.n_rows());
    }

    #[test]
    fn true_filter_is_identity_and_false_empties() {
        let t = table();
        let (all, _) = apply_stratum(&t, &parse_filter("true", t.schema()).unwrap()).unwrap();
        assert_eq!(all, t);
        let (none, r) = apply_stratum(&t, &parse_filter("ab < 0", t.schema()).unwrap()).unwrap();
        assert_eq!(none.n_rows(), 0);
        assert_eq!(r.matched, 0);
    }

    #[test]
    fn ordered_comparisons_follow_level_order() {
        let t = table();
        let (sub, _) = apply_stratum(&t, &parse_filter("wfns >= 2", t.schema()).unwrap()).unwrap();
        assert_eq!(sub.ids(), ["c"]);
        let (sub, _) = apply_stratum(&t, &parse_filter("centre in {C3} and id != f", t.schema()).unwrap()).unwrap();
        assert_eq!(sub.ids(), ["c"]);
    }

    #[test]
    fn negative_and_scientific_numbers() {
        let e = parse_filter_expr("ab > -1.5e-2").unwrap();
        match e {
            Expr::Compare { value: Literal::Number { value, .. }, .. } => assert_eq!(value, -0.015),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            parse_filter_expr("a == 1 or b in {x}").unwrap().columns(),
            ["a", "b"].iter().map(|s| s.to_string()).collect()
        );
    }
}
