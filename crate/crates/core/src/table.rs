//! Table data model and the structural operators used by every pipeline stage.
//!
//! A [`Table`] is an immutable rectangular grid of text cells with a single
//! header row. Parsing accepts markdown, CSV, TSV and a small JSON object form;
//! rendering always produces canonical markdown.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TableError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot transpose a table with no rows")]
    Transpose,
    #[error("{axis} index {index} out of bounds (len {len})")]
    Index {
        axis: &'static str,
        index: usize,
        len: usize,
    },
    #[error("table invariant violated: {0}")]
    Invalid(String),
}

impl TableError {
    fn parse(line: usize, message: impl Into<String>) -> Self {
        TableError::Parse {
            line,
            message: message.into(),
        }
    }
}

/// Input formats understood by [`parse_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableFormat {
    Markdown,
    Csv,
    Tsv,
    JsonlTable,
}

impl TableFormat {
    /// Guess a format from a file extension.
    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "md" | "markdown" => Some(Self::Markdown),
            "csv" => Some(Self::Csv),
            "tsv" | "tab" => Some(Self::Tsv),
            "json" | "jsonl" => Some(Self::JsonlTable),
            _ => None,
        }
    }
}

impl FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            "tsv" => Ok(Self::Tsv),
            "jsonl-table" | "jsonl" | "json" => Ok(Self::JsonlTable),
            other => Err(format!("unknown table format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
}

impl Table {
    pub fn new(headers: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self, TableError> {
        if headers.is_empty() {
            return Err(TableError::Invalid("header row is empty".into()));
        }
        if let Some((i, row)) = rows
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != headers.len())
        {
            return Err(TableError::Invalid(format!(
                "row {i} has {} cells, expected {}",
                row.len(),
                headers.len()
            )));
        }
        Ok(Self {
            headers,
            rows,
            name: None,
        })
    }

    /// Convenience constructor for literals; panics on a non-rectangular grid.
    pub fn from_rows<H, R, C>(headers: H, rows: R) -> Self
    where
        H: IntoIterator,
        H::Item: Into<String>,
        R: IntoIterator<Item = C>,
        C: IntoIterator,
        C::Item: Into<String>,
    {
        let headers = headers.into_iter().map(Into::into).collect();
        let rows = rows
            .into_iter()
            .map(|r| r.into_iter().map(Into::into).collect())
            .collect();
        Self::new(headers, rows).expect("rectangular table literal")
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn column_count(&self) -> usize {
        self.headers.len()
    }

    pub fn area(&self) -> usize {
        self.row_count() * self.column_count()
    }

    pub fn cell(&self, row: usize, column: usize) -> Option<&str> {
        self.rows.get(row)?.get(column).map(String::as_str)
    }

    pub fn column(&self, index: usize) -> impl Iterator<Item = &str> + '_ {
        self.rows.iter().map(move |r| r[index].as_str())
    }

    pub fn column_index(&self, header: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == header)
    }

    /// Renames blank headers to `column_N` and repeated ones to `name (2)`, `name (3)`...
    pub fn with_unique_headers(&self) -> Table {
        let mut seen: Vec<String> = Vec::with_capacity(self.headers.len());
        for (j, h) in self.headers.iter().enumerate() {
            let base = if h.trim().is_empty() {
                format!("column_{}", j + 1)
            } else {
                h.clone()
            };
            let mut name = base.clone();
            let mut n = 2;
            while seen.contains(&name) {
                name = format!("{base} ({n})");
                n += 1;
            }
            seen.push(name);
        }
        Table {
            headers: seen,
            rows: self.rows.clone(),
            name: self.name.clone(),
        }
    }

    /// Rebuilds the table with every cell passed through `f(column, cell)`.
    pub fn map_cells(&self, mut f: impl FnMut(usize, &str) -> String) -> Table {
        let rows = self
            .rows
            .iter()
            .map(|r| r.iter().enumerate().map(|(j, c)| f(j, c)).collect())
            .collect();
        Table {
            headers: self.headers.clone(),
            rows,
            name: self.name.clone(),
        }
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_markdown(self, false))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeMetrics {
    pub row_count: usize,
    pub column_count: usize,
    pub area: usize,
    pub token_estimate: usize,
}

/// Ordered, de-duplicated row and column index sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSelection {
    row_indices: Vec<usize>,
    column_indices: Vec<usize>,
}

impl CellSelection {
    pub fn new(
        rows: impl IntoIterator<Item = usize>,
        columns: impl IntoIterator<Item = usize>,
    ) -> Self {
        let mut row_indices: Vec<usize> = rows.into_iter().collect();
        row_indices.sort_unstable();
        row_indices.dedup();
        let mut column_indices: Vec<usize> = columns.into_iter().collect();
        column_indices.sort_unstable();
        column_indices.dedup();
        Self {
            row_indices,
            column_indices,
        }
    }

    pub fn all(table: &Table) -> Self {
        Self::new(0..table.row_count(), 0..table.column_count())
    }

    pub fn row_indices(&self) -> &[usize] {
        &self.row_indices
    }

    pub fn column_indices(&self) -> &[usize] {
        &self.column_indices
    }
}

/// Counts tokens in rendered text.
pub trait Tokenizer {
    fn count(&self, text: &str) -> usize;
}

impl<F: Fn(&str) -> usize> Tokenizer for F {
    fn count(&self, text: &str) -> usize {
        self(text)
    }
}

/// `ceil(chars / 4)`; a stand-in for a real BPE vocabulary.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharHeuristic;

impl Tokenizer for CharHeuristic {
    fn count(&self, text: &str) -> usize {
        text.chars().count().div_ceil(4)
    }
}

pub fn parse_table(text: &str, format: TableFormat, strict: bool) -> Result<Table, TableError> {
    if text.trim().is_empty() {
        return Err(TableError::parse(0, "input is empty"));
    }
    let (headers, rows) = match format {
        TableFormat::Markdown => parse_markdown(text)?,
        TableFormat::Csv => parse_delimited(text, b',')?,
        TableFormat::Tsv => parse_delimited(text, b'\t')?,
        TableFormat::JsonlTable => return parse_json_table(text, strict),
    };
    rectangularize(headers, rows, strict)
}

fn rectangularize(
    headers: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
    strict: bool,
) -> Result<Table, TableError> {
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(TableError::parse(1, "empty header row"));
    }
    let width = headers.len();
    let mut out = Vec::with_capacity(rows.len());
    for (line, mut row) in rows {
        if row.len() != width {
            if strict {
                return Err(TableError::parse(
                    line,
                    format!("row has {} cells, header has {width}", row.len()),
                ));
            }
            row.resize(width, String::new());
        }
        out.push(row);
    }
    Table::new(headers, out)
}

fn parse_markdown(text: &str) -> Result<(Vec<String>, Vec<(usize, Vec<String>)>), TableError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (header_line, header) = lines
        .next()
        .ok_or_else(|| TableError::parse(0, "no header line"))?;
    if !header.contains('|') {
        return Err(TableError::parse(header_line, "header line has no `|` delimiter"));
    }
    let headers = split_markdown_row(header);

    let mut rows = Vec::new();
    let mut seen_separator = false;
    for (line_no, line) in lines {
        if !line.contains('|') {
            return Err(TableError::parse(line_no, "row has no `|` delimiter"));
        }
        let cells = split_markdown_row(line);
        if !seen_separator && rows.is_empty() && is_separator_row(&cells) {
            seen_separator = true;
            continue;
        }
        rows.push((line_no, cells));
    }
    Ok((headers, rows))
}

fn is_separator_row(cells: &[String]) -> bool {
    !cells.is_empty()
        && cells.iter().all(|c| {
            let c = c.trim();
            !c.is_empty() && c.contains('-') && c.chars().all(|ch| matches!(ch, '-' | ':'))
        })
}

fn split_markdown_row(line: &str) -> Vec<String> {
    let line = line.strip_prefix('|').unwrap_or(line);
    let line = match line.strip_suffix('|') {
        Some(rest) if !rest.ends_with('\\') => rest,
        _ => line,
    };
    let mut cells = Vec::new();
    let mut current = String::new();
    let mut chars = line.chars().peekable();
    while let Some(ch) = chars.next() {
        match ch {
            '\\' if chars.peek() == Some(&'|') => {
                current.push('|');
                chars.next();
            }
            '|' => cells.push(std::mem::take(&mut current).trim().to_string()),
            _ => current.push(ch),
        }
    }
    cells.push(current.trim().to_string());
    cells
}

fn parse_delimited(
    text: &str,
    delimiter: u8,
) -> Result<(Vec<String>, Vec<(usize, Vec<String>)>), TableError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delimiter)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let headers: Vec<String> = match records.next() {
        Some(Ok(rec)) => rec.iter().map(|c| c.trim().to_string()).collect(),
        Some(Err(e)) => return Err(TableError::parse(1, e.to_string())),
        None => return Err(TableError::parse(0, "no header record")),
    };
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            TableError::parse(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        rows.push((line, rec.iter().map(|c| c.trim().to_string()).collect()));
    }
    Ok((headers, rows))
}

#[derive(Deserialize)]
struct JsonTable {
    header: Vec<serde_json::Value>,
    #[serde(default)]
    rows: Vec<Vec<serde_json::Value>>,
    #[serde(default)]
    name: Option<String>,
}

pub(crate) fn json_cell(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::Null => String::new(),
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn parse_json_table(text: &str, strict: bool) -> Result<Table, TableError> {
    let raw: JsonTable = serde_json::from_str(text.trim())
        .map_err(|e| TableError::parse(e.line(), e.to_string()))?;
    table_from_json_parts(raw, strict)
}

/// Builds a table from an already-decoded `{"header": [...], "rows": [[...]]}` value.
pub fn table_from_json(value: &serde_json::Value, strict: bool) -> Result<Table, TableError> {
    let raw: JsonTable = serde_json::from_value(value.clone())
        .map_err(|e| TableError::parse(0, e.to_string()))?;
    table_from_json_parts(raw, strict)
}

fn table_from_json_parts(raw: JsonTable, strict: bool) -> Result<Table, TableError> {
    let headers = raw.header.iter().map(json_cell).collect();
    let rows = raw
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| (i + 1, r.iter().map(json_cell).collect()))
        .collect();
    let table = rectangularize(headers, rows, strict)?;
    Ok(match raw.name {
        Some(name) => table.with_name(name),
        None => table,
    })
}

fn escape_markdown_cell(cell: &str) -> String {
    cell.replace('|', "\\|").replace(['\r', '\n'], " ")
}

pub fn render_markdown(table: &Table, with_addresses: bool) -> String {
    let mut out = String::new();
    let push_row = |out: &mut String, cells: &mut dyn Iterator<Item = String>| {
        out.push('|');
        for c in cells {
            out.push(' ');
            out.push_str(&c);
            out.push_str(" |");
        }
    };

    let address = with_addresses.then(|| "#".to_string());
    push_row(
        &mut out,
        &mut address
            .clone()
            .into_iter()
            .chain(table.headers.iter().map(|h| escape_markdown_cell(h))),
    );
    out.push('\n');
    let width = table.column_count() + usize::from(with_addresses);
    push_row(&mut out, &mut std::iter::repeat_n("---".to_string(), width));
    for (i, row) in table.rows.iter().enumerate() {
        out.push('\n');
        let addr = with_addresses.then(|| (i + 1).to_string());
        push_row(
            &mut out,
            &mut addr
                .into_iter()
                .chain(row.iter().map(|c| escape_markdown_cell(c))),
        );
    }
    out
}

/// Canonical CSV (RFC 4180 quoting), header first.
pub fn render_csv(table: &Table) -> String {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer
        .write_record(&table.headers)
        .and_then(|_| table.rows.iter().try_for_each(|r| writer.write_record(r)))
        .expect("writing csv to memory");
    String::from_utf8(writer.into_inner().expect("flush in-memory csv")).expect("utf-8 input")
}

/// Grid transpose: the first column becomes the header row and the header row
/// becomes the first column.
pub fn transpose(table: &Table) -> Result<Table, TableError> {
    if table.rows.is_empty() {
        return Err(TableError::Transpose);
    }
    let headers = std::iter::once(table.headers[0].clone())
        .chain(table.rows.iter().map(|r| r[0].clone()))
        .collect();
    let rows = (1..table.column_count())
        .map(|j| {
            std::iter::once(table.headers[j].clone())
                .chain(table.rows.iter().map(|r| r[j].clone()))
                .collect()
        })
        .collect();
    Ok(Table {
        headers,
        rows,
        name: table.name.clone(),
    })
}

/// First `k` data rows; the header row is never counted.
pub fn peek(table: &Table, k: usize) -> Table {
    Table {
        headers: table.headers.clone(),
        rows: table.rows.iter().take(k).cloned().collect(),
        name: table.name.clone(),
    }
}

pub fn project(table: &Table, selection: &CellSelection) -> Result<Table, TableError> {
    if let Some(&i) = selection
        .row_indices
        .iter()
        .find(|&&i| i >= table.row_count())
    {
        return Err(TableError::Index {
            axis: "row",
            index: i,
            len: table.row_count(),
        });
    }
    if let Some(&j) = selection
        .column_indices
        .iter()
        .find(|&&j| j >= table.column_count())
    {
        return Err(TableError::Index {
            axis: "column",
            index: j,
            len: table.column_count(),
        });
    }
    if selection.column_indices.is_empty() {
        return Err(TableError::Invalid("projection selects no columns".into()));
    }
    let headers = selection
        .column_indices
        .iter()
        .map(|&j| table.headers[j].clone())
        .collect();
    let rows = selection
        .row_indices
        .iter()
        .map(|&i| {
            selection
                .column_indices
                .iter()
                .map(|&j| table.rows[i][j].clone())
                .collect()
        })
        .collect();
    Ok(Table {
        headers,
        rows,
        name: table.name.clone(),
    })
}

/// Size metrics; tokens are counted on the address-free markdown rendering.
pub fn measure(table: &Table, tokenizer: &dyn Tokenizer) -> SizeMetrics {
    SizeMetrics {
        row_count: table.row_count(),
        column_count: table.column_count(),
        area: table.area(),
        token_estimate: tokenizer.count(&render_markdown(table, false)),
    }
}
