//! Table-modality toolkit: parse delimited files, filter, join on keys, and
//! compute descriptive statistics. Tables are immutable after registration;
//! every operation derives a new asset and records lineage.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::asset::{AssetDescriptor, GeoExtent, Modality, TimePoint};
use crate::util::fmt_num;
use crate::workspace::{Payload, Workspace, WorkspaceError};
use crate::Guid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnType {
    Text,
    Number,
    Timestamp,
    Boolean,
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ColumnType::Text => "text",
            ColumnType::Number => "number",
            ColumnType::Timestamp => "timestamp",
            ColumnType::Boolean => "boolean",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Number(f64),
    Timestamp(TimePoint),
    Bool(bool),
    Null,
}

impl Cell {
    pub fn is_null(&self) -> bool {
        matches!(self, Cell::Null)
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Cell::Number(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Rendering used for CSV output and observation previews. Numbers use
    /// the shortest round-trip form so materialized tables reload losslessly.
    pub fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Number(n) => {
                if *n == n.trunc() && n.abs() < 1e15 {
                    format!("{}", *n as i64)
                } else {
                    format!("{n}")
                }
            }
            Cell::Timestamp(t) => t.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Null => String::new(),
        }
    }

    /// Total order within one column type; Null sorts first.
    fn sort_key(&self) -> (u8, String) {
        match self {
            Cell::Null => (0, String::new()),
            Cell::Number(n) => (1, format!("{:024.6}", n + 1e15)),
            Cell::Timestamp(t) => {
                let (y, m, d) = t.lower_bound();
                (2, format!("{y:06}-{m:02}-{d:02}"))
            }
            Cell::Bool(b) => (3, b.to_string()),
            Cell::Text(s) => (4, s.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<(String, ColumnType)>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("row at line {line} has {found} fields, expected {expected}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("operator '{op}' is not compatible with column '{column}'")]
    TypeMismatch { column: String, op: String },
    #[error("duplicate column name '{0}'")]
    DuplicateColumn(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
}

impl Table {
    pub fn new(columns: Vec<(String, ColumnType)>, rows: Vec<Vec<Cell>>) -> Result<Self, TableError> {
        let mut seen = std::collections::HashSet::new();
        for (name, _) in &columns {
            if !seen.insert(name.clone()) {
                return Err(TableError::DuplicateColumn(name.clone()));
            }
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != columns.len() {
                return Err(TableError::RaggedRow {
                    line: i + 2,
                    expected: columns.len(),
                    found: r.len(),
                });
            }
        }
        Ok(Table { columns, rows })
    }

    pub fn column_index(&self, name: &str) -> Result<usize, TableError> {
        self.columns
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| TableError::UnknownColumn(name.to_string()))
    }

    pub fn column_type(&self, name: &str) -> Result<ColumnType, TableError> {
        Ok(self.columns[self.column_index(name)?].1)
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|(n, _)| n.clone()).collect()
    }

    /// Non-null f64 values of a numeric column.
    pub fn numeric_values(&self, name: &str) -> Result<Vec<f64>, TableError> {
        let idx = self.column_index(name)?;
        if self.columns[idx].1 != ColumnType::Number {
            return Err(TableError::TypeMismatch {
                column: name.to_string(),
                op: "numeric".into(),
            });
        }
        Ok(self
            .rows
            .iter()
            .filter_map(|r| r[idx].as_number())
            .collect())
    }

    pub fn schema_summary(&self) -> String {
        let cols: Vec<String> = self
            .columns
            .iter()
            .map(|(n, t)| format!("{n}:{t}"))
            .collect();
        let mut s = format!("columns=[{}]; rows={}", cols.join(","), self.rows.len());
        if s.chars().count() > crate::asset::SCHEMA_SUMMARY_MAX {
            s.truncate(crate::asset::SCHEMA_SUMMARY_MAX - 3);
            s.push_str("...");
        }
        s
    }

    /// First few rows rendered as compact csv-ish lines for observations.
    pub fn preview(&self, max_rows: usize) -> String {
        let mut out = String::new();
        out.push_str(&self.column_names().join(","));
        for row in self.rows.iter().take(max_rows) {
            out.push('\n');
            let cells: Vec<String> = row.iter().map(|c| c.render()).collect();
            out.push_str(&cells.join(","));
        }
        if self.rows.len() > max_rows {
            out.push_str(&format!("\n... ({} more rows)", self.rows.len() - max_rows));
        }
        out
    }
}

/// Extract column names back out of a table asset's schema summary.
pub fn columns_from_summary(summary: &str) -> Vec<String> {
    let Some(start) = summary.find("columns=[") else {
        return Vec::new();
    };
    let rest = &summary[start + "columns=[".len()..];
    let Some(end) = rest.find(']') else {
        return Vec::new();
    };
    rest[..end]
        .split(',')
        .filter_map(|pair| pair.split(':').next())
        .map(|s| s.to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

// ---------------------------------------------------------------------------
// CSV parsing (RFC 4180 subset: double-quote escaping, no embedded newlines)
// ---------------------------------------------------------------------------

fn split_csv_line(line: &str, lineno: usize) -> Result<Vec<String>, TableError> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut chars = line.chars().peekable();
    let mut in_quotes = false;
    while let Some(c) = chars.next() {
        if in_quotes {
            if c == '"' {
                if chars.peek() == Some(&'"') {
                    cur.push('"');
                    chars.next();
                } else {
                    in_quotes = false;
                }
            } else {
                cur.push(c);
            }
        } else {
            match c {
                '"' => {
                    if cur.is_empty() {
                        in_quotes = true;
                    } else {
                        return Err(TableError::ParseError {
                            line: lineno,
                            message: "quote inside unquoted field".into(),
                        });
                    }
                }
                ',' => {
                    fields.push(std::mem::take(&mut cur));
                }
                _ => cur.push(c),
            }
        }
    }
    if in_quotes {
        return Err(TableError::ParseError {
            line: lineno,
            message: "unterminated quoted field".into(),
        });
    }
    fields.push(cur);
    Ok(fields)
}

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn parse_timestamp(s: &str) -> Option<TimePoint> {
    let s = s.trim();
    if s.len() == 4 {
        if let Ok(y) = s.parse::<i32>() {
            if (1800..=2199).contains(&y) {
                return Some(TimePoint::year(y));
            }
        }
        return None;
    }
    // ISO-8601 calendar date YYYY-MM-DD.
    let parts: Vec<&str> = s.split('-').collect();
    if parts.len() == 3 && parts[0].len() == 4 {
        let y = parts[0].parse::<i32>().ok()?;
        let m = parts[1].parse::<u32>().ok()?;
        let d = parts[2].parse::<u32>().ok()?;
        if (1..=12).contains(&m) && (1..=31).contains(&d) {
            return Some(TimePoint::date(y, m, d));
        }
    }
    None
}

/// Infer a column type by scanning its raw values. Timestamp patterns are
/// checked first so bare-year columns classify as Timestamp, then Number,
/// then Text. Empty cells are Null and do not vote.
fn infer_type(values: &[&str]) -> ColumnType {
    let nonempty: Vec<&&str> = values.iter().filter(|v| !v.trim().is_empty()).collect();
    if nonempty.is_empty() {
        return ColumnType::Text;
    }
    if nonempty.iter().all(|v| parse_timestamp(v).is_some()) {
        return ColumnType::Timestamp;
    }
    if nonempty.iter().all(|v| v.trim().parse::<f64>().is_ok()) {
        return ColumnType::Number;
    }
    ColumnType::Text
}

fn typed_cell(raw: &str, ty: ColumnType) -> Cell {
    let raw = raw.trim();
    if raw.is_empty() {
        return Cell::Null;
    }
    match ty {
        ColumnType::Number => raw
            .parse::<f64>()
            .map(Cell::Number)
            .unwrap_or_else(|_| Cell::Text(raw.to_string())),
        ColumnType::Timestamp => parse_timestamp(raw)
            .map(Cell::Timestamp)
            .unwrap_or_else(|| Cell::Text(raw.to_string())),
        ColumnType::Boolean => match raw {
            "true" | "True" => Cell::Bool(true),
            "false" | "False" => Cell::Bool(false),
            _ => Cell::Text(raw.to_string()),
        },
        ColumnType::Text => Cell::Text(raw.to_string()),
    }
}

/// Parse a header-rowed CSV file into a typed [`Table`].
pub fn parse_csv(content: &str) -> Result<Table, TableError> {
    let mut lines = content.lines().enumerate();
    let (_, header) = lines.next().ok_or(TableError::ParseError {
        line: 1,
        message: "empty file".into(),
    })?;
    let names = split_csv_line(header, 1)?;
    let ncols = names.len();
    let mut raw_rows: Vec<(usize, Vec<String>)> = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_csv_line(line, idx + 1)?;
        if fields.len() != ncols {
            return Err(TableError::RaggedRow {
                line: idx + 1,
                expected: ncols,
                found: fields.len(),
            });
        }
        raw_rows.push((idx + 1, fields));
    }
    let mut types = Vec::with_capacity(ncols);
    for c in 0..ncols {
        let col_values: Vec<&str> = raw_rows.iter().map(|(_, r)| r[c].as_str()).collect();
        types.push(infer_type(&col_values));
    }
    let columns: Vec<(String, ColumnType)> = names.into_iter().zip(types.iter().copied()).collect();
    let rows = raw_rows
        .into_iter()
        .map(|(_, fields)| {
            fields
                .iter()
                .enumerate()
                .map(|(c, raw)| typed_cell(raw, types[c]))
                .collect()
        })
        .collect();
    Table::new(columns, rows)
}

/// Serialize a table back to the CSV interchange form.
pub fn write_csv(table: &Table, path: &Path) -> Result<(), TableError> {
    let mut out = String::new();
    let header: Vec<String> = table.columns.iter().map(|(n, _)| csv_escape(n)).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|c| csv_escape(&c.render())).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum FilterOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Contains,
    InYearRange,
}

impl FilterOp {
    pub fn parse(s: &str) -> Option<FilterOp> {
        Some(match s {
            "==" | "eq" => FilterOp::Eq,
            "!=" | "ne" => FilterOp::Ne,
            "<" | "lt" => FilterOp::Lt,
            "<=" | "le" => FilterOp::Le,
            ">" | "gt" => FilterOp::Gt,
            ">=" | "ge" => FilterOp::Ge,
            "contains" => FilterOp::Contains,
            "in_year_range" => FilterOp::InYearRange,
            _ => return None,
        })
    }
}

impl fmt::Display for FilterOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FilterOp::Eq => "==",
            FilterOp::Ne => "!=",
            FilterOp::Lt => "<",
            FilterOp::Le => "<=",
            FilterOp::Gt => ">",
            FilterOp::Ge => ">=",
            FilterOp::Contains => "contains",
            FilterOp::InYearRange => "in_year_range",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Number(f64),
    Text(String),
    Bool(bool),
    YearRange(i32, i32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub column: String,
    pub op: FilterOp,
    pub literal: Literal,
}

/// Conjunction of atomic predicates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterSpec {
    pub predicates: Vec<Predicate>,
}

impl FilterSpec {
    pub fn single(column: &str, op: FilterOp, literal: Literal) -> Self {
        FilterSpec {
            predicates: vec![Predicate {
                column: column.to_string(),
                op,
                literal,
            }],
        }
    }

    pub fn and(mut self, column: &str, op: FilterOp, literal: Literal) -> Self {
        self.predicates.push(Predicate {
            column: column.to_string(),
            op,
            literal,
        });
        self
    }
}

fn eval_predicate(cell: &Cell, pred: &Predicate, col_ty: ColumnType) -> Result<bool, TableError> {
    let mismatch = || TableError::TypeMismatch {
        column: pred.column.clone(),
        op: pred.op.to_string(),
    };
    if cell.is_null() {
        // Null never satisfies a predicate except !=.
        return Ok(pred.op == FilterOp::Ne);
    }
    match pred.op {
        FilterOp::Eq | FilterOp::Ne => {
            let eq = match (&pred.literal, cell) {
                (Literal::Number(l), Cell::Number(v)) => v == l,
                (Literal::Number(l), Cell::Timestamp(t)) => {
                    *t == TimePoint::year(*l as i32) && l.fract() == 0.0
                }
                (Literal::Text(l), Cell::Text(v)) => v == l,
                (Literal::Text(l), Cell::Timestamp(t)) => {
                    parse_timestamp(l).map(|p| p == *t).unwrap_or(false)
                }
                (Literal::Bool(l), Cell::Bool(v)) => v == l,
                _ => return Err(mismatch()),
            };
            Ok(if pred.op == FilterOp::Eq { eq } else { !eq })
        }
        FilterOp::Lt | FilterOp::Le | FilterOp::Gt | FilterOp::Ge => {
            let ord = match (&pred.literal, cell) {
                (Literal::Number(l), Cell::Number(v)) => v.partial_cmp(l),
                (Literal::Number(l), Cell::Timestamp(t)) if col_ty == ColumnType::Timestamp => {
                    t.lower_bound().partial_cmp(&(*l as i32, 1, 1))
                }
                (Literal::Text(l), Cell::Timestamp(t)) => {
                    parse_timestamp(l).and_then(|p| t.lower_bound().partial_cmp(&p.lower_bound()))
                }
                _ => return Err(mismatch()),
            };
            let ord = ord.ok_or_else(mismatch)?;
            Ok(match pred.op {
                FilterOp::Lt => ord == std::cmp::Ordering::Less,
                FilterOp::Le => ord != std::cmp::Ordering::Greater,
                FilterOp::Gt => ord == std::cmp::Ordering::Greater,
                FilterOp::Ge => ord != std::cmp::Ordering::Less,
                _ => unreachable!(),
            })
        }
        FilterOp::Contains => match (&pred.literal, cell) {
            (Literal::Text(l), Cell::Text(v)) => Ok(v.contains(l.as_str())),
            _ => Err(mismatch()),
        },
        FilterOp::InYearRange => match (&pred.literal, cell) {
            (Literal::YearRange(a, b), Cell::Timestamp(t)) => Ok(t.year >= *a && t.year <= *b),
            _ => Err(mismatch()),
        },
    }
}

/// Apply a filter spec to an in-memory table, preserving row order.
pub fn apply_filter(table: &Table, spec: &FilterSpec) -> Result<Table, TableError> {
    // Validate all predicates up front so errors surface even on empty tables.
    let mut idx = Vec::with_capacity(spec.predicates.len());
    for p in &spec.predicates {
        idx.push((table.column_index(&p.column)?, table.column_type(&p.column)?));
    }
    let mut rows = Vec::new();
    'rows: for row in &table.rows {
        for (p, (ci, ty)) in spec.predicates.iter().zip(&idx) {
            if !eval_predicate(&row[*ci], p, *ty)? {
                continue 'rows;
            }
        }
        rows.push(row.clone());
    }
    Table::new(table.columns.clone(), rows)
}

// ---------------------------------------------------------------------------
// Registered operations (asset in, derived asset out)
// ---------------------------------------------------------------------------

fn register_root_table(
    ws: &Workspace,
    table: Table,
    uri: &str,
    time_tag: Option<TimePoint>,
) -> Result<Guid, TableError> {
    let mut desc = AssetDescriptor::new(Modality::Table, uri, table.schema_summary());
    // Derive a geographic extent when lon/lat columns are present.
    if let (Ok(lons), Ok(lats)) = (table.numeric_values("lon"), table.numeric_values("lat")) {
        if !lons.is_empty() && !lats.is_empty() {
            let ext = GeoExtent::new(
                lons.iter().cloned().fold(f64::INFINITY, f64::min),
                lats.iter().cloned().fold(f64::INFINITY, f64::min),
                lons.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                lats.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            );
            if let Ok(ext) = ext {
                desc = desc.with_extent(ext);
            }
        }
    }
    let tag = time_tag.or_else(|| uniform_year_tag(&table));
    if let Some(t) = tag {
        desc = desc.with_time(t);
    }
    let guid = ws.registry.register_asset(desc).map_err(WorkspaceError::Asset)?;
    ws.insert_payload(guid, Payload::Table(Arc::new(table)));
    Ok(guid)
}

/// When the first timestamp column holds a single year for every row, the
/// whole table is tagged with that year.
fn uniform_year_tag(table: &Table) -> Option<TimePoint> {
    let idx = table
        .columns
        .iter()
        .position(|(_, t)| *t == ColumnType::Timestamp)?;
    let mut year: Option<i32> = None;
    for row in &table.rows {
        match &row[idx] {
            Cell::Timestamp(t) => match year {
                Some(y) if y != t.year => return None,
                _ => year = Some(t.year),
            },
            Cell::Null => {}
            _ => return None,
        }
    }
    year.map(TimePoint::year)
}

/// Register a derived table: materialize under the run dir as `<guid>.csv`,
/// register the asset, link lineage to every parent.
pub fn register_derived_table(
    ws: &Workspace,
    table: Table,
    parents: &[Guid],
    relation: &str,
) -> Result<Guid, TableError> {
    let guid = Guid::new_random();
    let path = ws.run_path(guid, "csv");
    write_csv(&table, &path)?;
    let desc = AssetDescriptor::new(Modality::Table, path.to_string_lossy(), table.schema_summary());
    ws.registry
        .register_with_guid(guid, desc)
        .map_err(WorkspaceError::Asset)?;
    ws.insert_payload(guid, Payload::Table(Arc::new(table)));
    for p in parents {
        ws.registry
            .link_assets(*p, guid, relation)
            .map_err(WorkspaceError::Asset)?;
    }
    Ok(guid)
}

/// Read a CSV file from disk, infer column types, and register it as a root
/// Table asset.
pub fn read_table(ws: &Workspace, path: &Path) -> Result<Guid, TableError> {
    read_table_tagged(ws, path, None)
}

pub fn read_table_tagged(
    ws: &Workspace,
    path: &Path,
    time_tag: Option<TimePoint>,
) -> Result<Guid, TableError> {
    let content = std::fs::read_to_string(path)?;
    let table = parse_csv(&content)?;
    register_root_table(ws, table, &path.to_string_lossy(), time_tag)
}

/// Filter rows by a conjunction of predicates; the derived asset records a
/// "filter" lineage edge to its input.
pub fn filter_rows(ws: &Workspace, table: Guid, spec: &FilterSpec) -> Result<Guid, TableError> {
    let input = ws.table(table)?;
    let out = apply_filter(&input, spec)?;
    register_derived_table(ws, out, &[table], "filter")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinKind {
    Inner,
    Left,
}

/// Nested-loop key join; duplicate right-side column names get an `_r`
/// suffix, duplicate keys multiply (cartesian within each key group).
pub fn join_tables(
    ws: &Workspace,
    left: Guid,
    right: Guid,
    key: &str,
    kind: JoinKind,
) -> Result<Guid, TableError> {
    let lt = ws.table(left)?;
    let rt = ws.table(right)?;
    let out = join_in_memory(&lt, &rt, key, kind)?;
    register_derived_table(ws, out, &[left, right], "join")
}

pub fn join_in_memory(
    lt: &Table,
    rt: &Table,
    key: &str,
    kind: JoinKind,
) -> Result<Table, TableError> {
    let lk = lt.column_index(key)?;
    let rk = rt.column_index(key)?;
    // An empty side has no cells to compare, and its inferred column types
    // are vacuous, so the compatibility check only applies when both sides
    // carry rows.
    if !lt.rows.is_empty() && !rt.rows.is_empty() && lt.columns[lk].1 != rt.columns[rk].1 {
        return Err(TableError::TypeMismatch {
            column: key.to_string(),
            op: "join".into(),
        });
    }
    let mut taken: std::collections::HashSet<String> =
        lt.columns.iter().map(|(n, _)| n.clone()).collect();
    let mut columns = lt.columns.clone();
    for (n, t) in &rt.columns {
        let mut name = n.clone();
        while taken.contains(&name) {
            name.push_str("_r");
        }
        taken.insert(name.clone());
        columns.push((name, *t));
    }
    let mut rows = Vec::new();
    for lrow in &lt.rows {
        let mut matched = false;
        for rrow in &rt.rows {
            if !lrow[lk].is_null() && lrow[lk] == rrow[rk] {
                matched = true;
                let mut row = lrow.clone();
                row.extend(rrow.iter().cloned());
                rows.push(row);
            }
        }
        if !matched && kind == JoinKind::Left {
            let mut row = lrow.clone();
            row.extend(std::iter::repeat_n(Cell::Null, rt.columns.len()));
            rows.push(row);
        }
    }
    Table::new(columns, rows)
}

/// Descriptive statistics for a single column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub column: String,
    pub count: usize,
    pub nulls: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
    /// Population standard deviation.
    pub std: Option<f64>,
    pub distinct: Option<usize>,
}

impl ColumnStats {
    pub fn render(&self) -> String {
        let mut parts = vec![
            format!("column={}", self.column),
            format!("count={}", self.count),
            format!("nulls={}", self.nulls),
        ];
        if let Some(v) = self.min {
            parts.push(format!("min={}", fmt_num(v)));
        }
        if let Some(v) = self.max {
            parts.push(format!("max={}", fmt_num(v)));
        }
        if let Some(v) = self.mean {
            parts.push(format!("mean={}", fmt_num(v)));
        }
        if let Some(v) = self.std {
            parts.push(format!("std={}", fmt_num(v)));
        }
        if let Some(v) = self.distinct {
            parts.push(format!("distinct={v}"));
        }
        if self.count == 0 && self.min.is_none() {
            parts.push("aggregates=undefined".into());
        }
        parts.join(" ")
    }
}

/// Nulls are excluded from numeric aggregates; an all-null numeric column
/// yields count 0 with undefined aggregates.
pub fn describe(ws: &Workspace, table: Guid, column: &str) -> Result<ColumnStats, TableError> {
    let t = ws.table(table)?;
    describe_in_memory(&t, column)
}

pub fn describe_in_memory(t: &Table, column: &str) -> Result<ColumnStats, TableError> {
    let idx = t.column_index(column)?;
    let ty = t.columns[idx].1;
    let nulls = t.rows.iter().filter(|r| r[idx].is_null()).count();
    if ty == ColumnType::Number {
        let vals: Vec<f64> = t.rows.iter().filter_map(|r| r[idx].as_number()).collect();
        if vals.is_empty() {
            return Ok(ColumnStats {
                column: column.to_string(),
                count: 0,
                nulls,
                min: None,
                max: None,
                mean: None,
                std: None,
                distinct: None,
            });
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Ok(ColumnStats {
            column: column.to_string(),
            count: vals.len(),
            nulls,
            min: vals.iter().cloned().reduce(f64::min),
            max: vals.iter().cloned().reduce(f64::max),
            mean: Some(mean),
            std: Some(var.sqrt()),
            distinct: None,
        })
    } else {
        let mut distinct = std::collections::BTreeSet::new();
        let mut count = 0usize;
        for r in &t.rows {
            if !r[idx].is_null() {
                count += 1;
                distinct.insert(r[idx].render());
            }
        }
        Ok(ColumnStats {
            column: column.to_string(),
            count,
            nulls,
            min: None,
            max: None,
            mean: None,
            std: None,
            distinct: Some(distinct.len()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregate {
    Count,
    Sum,
    Mean,
}

impl Aggregate {
    pub fn parse(s: &str) -> Option<Aggregate> {
        Some(match s {
            "count" => Aggregate::Count,
            "sum" => Aggregate::Sum,
            "mean" => Aggregate::Mean,
            _ => return None,
        })
    }
}

/// One output row per distinct group key, sorted ascending by key.
pub fn group_aggregate(
    ws: &Workspace,
    table: Guid,
    group_key: &str,
    value: &str,
    agg: Aggregate,
) -> Result<Guid, TableError> {
    let t = ws.table(table)?;
    let out = group_aggregate_in_memory(&t, group_key, value, agg)?;
    register_derived_table(ws, out, &[table], "aggregate")
}

pub fn group_aggregate_in_memory(
    t: &Table,
    group_key: &str,
    value: &str,
    agg: Aggregate,
) -> Result<Table, TableError> {
    let ki = t.column_index(group_key)?;
    let vi = t.column_index(value)?;
    if agg != Aggregate::Count && t.columns[vi].1 != ColumnType::Number {
        return Err(TableError::TypeMismatch {
            column: value.to_string(),
            op: "aggregate".into(),
        });
    }
    let mut groups: std::collections::BTreeMap<(u8, String), (Cell, Vec<f64>, usize)> =
        std::collections::BTreeMap::new();
    for row in &t.rows {
        let key = &row[ki];
        let entry = groups
            .entry(key.sort_key())
            .or_insert_with(|| (key.clone(), Vec::new(), 0));
        entry.2 += 1;
        if let Some(v) = row[vi].as_number() {
            entry.1.push(v);
        }
    }
    let (out_name, out_ty) = match agg {
        Aggregate::Count => ("count".to_string(), ColumnType::Number),
        Aggregate::Sum => (format!("sum_{value}"), ColumnType::Number),
        Aggregate::Mean => (format!("mean_{value}"), ColumnType::Number),
    };
    let key_ty = t.columns[ki].1;
    let mut rows = Vec::new();
    for (_, (key, vals, rowcount)) in groups {
        let out_cell = match agg {
            Aggregate::Count => Cell::Number(rowcount as f64),
            Aggregate::Sum => Cell::Number(vals.iter().sum()),
            Aggregate::Mean => {
                if vals.is_empty() {
                    Cell::Null
                } else {
                    Cell::Number(vals.iter().sum::<f64>() / vals.len() as f64)
                }
            }
        };
        rows.push(vec![key, out_cell]);
    }
    Table::new(
        vec![(group_key.to_string(), key_ty), (out_name, out_ty)],
        rows,
    )
}
