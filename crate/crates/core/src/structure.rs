//! Structure understanding: key column, column ranking and lookup, SQL row
//! lookup, and construction of the initial table-of-focus.
//!
//! Every model reply is repaired rather than rejected, so each function here
//! always returns a usable value and records what it had to fix in the trace.

use serde::{Deserialize, Serialize};

use crate::gateway::{
    bindings, digest, extract_code_block, parse_choice, parse_delimited_list, Choice, Gateway,
    ReplyError, TemplateId,
};
use crate::normalize::NormalizedTable;
use crate::sql::{RowEngine, RowSet};
use crate::table::{peek, project, render_markdown, CellSelection, Table, TableError};
use crate::trace::{Fallback, ReasoningTrace};

pub const DEFAULT_PEEK_SIZE: usize = 25;
pub const DEFAULT_B_MAX: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureInfo {
    pub headers: Vec<String>,
    pub key_column: String,
    pub peek_used: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedColumns {
    pub order: Vec<String>,
}

impl RankedColumns {
    pub fn identity(headers: &[String]) -> Self {
        Self {
            order: headers.to_vec(),
        }
    }
}

/// Result of column lookup: `C⁰` plus the model's own selection size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSelection {
    pub columns: Vec<String>,
    /// Number of valid columns the model asked for, before capping.
    pub requested: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableOfFocus {
    pub table: Table,
    pub selected_rows: RowSet,
    /// Current selection `C`, starting with `C⁰` followed by added columns.
    pub selected_columns: Vec<String>,
    pub initial_columns: Vec<String>,
    pub reconstruction_count: usize,
    /// Sufficiency checks run while building this focus.
    pub estimations: usize,
    pub condensation_ratio: f64,
}

impl TableOfFocus {
    pub fn hash(&self) -> String {
        focus_hash(&self.table)
    }
}

pub fn focus_hash(table: &Table) -> String {
    digest(&render_markdown(table, false))
}

fn join_headers(headers: &[String]) -> String {
    headers.join(", ")
}

fn peek_markdown(table: &NormalizedTable, k: usize) -> (String, usize) {
    let p = peek(&table.table, k);
    (render_markdown(&p, false), p.row_count())
}

fn clean_name(s: &str) -> &str {
    s.trim()
        .trim_matches(|c: char| matches!(c, '"' | '\'' | '`' | '*' | '[' | ']' | '.'))
        .trim()
}

fn parse_key_column(reply: &str, headers: &[String]) -> Option<String> {
    for line in reply.lines() {
        let lowered = line.to_lowercase();
        if let Some(pos) = lowered.find("key column") {
            let rest = &line[pos + "key column".len()..];
            let rest = rest.split_once(':').map_or(rest, |(_, r)| r);
            let name = clean_name(rest);
            if let Some(h) = headers.iter().find(|h| h.eq_ignore_ascii_case(name)) {
                return Some(h.clone());
            }
        }
    }
    let choices: Vec<Choice> = headers.iter().map(Choice::new).collect();
    parse_choice(reply, &choices).ok().map(|c| c.label.clone())
}

pub fn extract_structure(
    table: &NormalizedTable,
    k: usize,
    gateway: &Gateway,
    trace: &mut ReasoningTrace,
) -> StructureInfo {
    let headers = table.table.headers().to_vec();
    let (rendered, peek_used) = peek_markdown(table, k.max(1));
    let reply = gateway.call(
        TemplateId::StructureExtraction,
        bindings([("table", rendered), ("headers", join_headers(&headers))]),
        trace,
    );
    let key_column = match reply {
        Ok(text) => match parse_key_column(&text, &headers) {
            Some(k) => k,
            None => {
                trace.warn(
                    "structure",
                    format!("reply names no existing header; key column set to `{}`", headers[0]),
                );
                headers[0].clone()
            }
        },
        Err(e) => {
            trace.warn("structure", format!("{e}; key column set to `{}`", headers[0]));
            headers[0].clone()
        }
    };
    StructureInfo {
        headers,
        key_column,
        peek_used,
    }
}

/// Deduplicates `items` and appends any missing headers in original order.
fn repair_permutation(items: Vec<String>, headers: &[String]) -> Vec<String> {
    let mut order: Vec<String> = Vec::with_capacity(headers.len());
    for item in items.into_iter().chain(headers.iter().cloned()) {
        if !order.contains(&item) {
            order.push(item);
        }
    }
    order
}

pub fn rank_columns(
    table: &NormalizedTable,
    question: &str,
    k: usize,
    gateway: &Gateway,
    trace: &mut ReasoningTrace,
) -> RankedColumns {
    let headers = table.table.headers();
    let (rendered, _) = peek_markdown(table, k.max(1));
    let reply = gateway.call(
        TemplateId::ColumnRanking,
        bindings([
            ("table", rendered),
            ("headers", join_headers(headers)),
            ("question", question.to_string()),
            ("max_columns", headers.len().to_string()),
        ]),
        trace,
    );
    let parsed = reply
        .map_err(|e| e.to_string())
        .and_then(|text| parse_delimited_list(&text, Some(headers)).map_err(|e| e.to_string()));
    match parsed {
        Ok(list) => {
            if !list.dropped.is_empty() {
                trace.warn("ranking", format!("ignored unknown columns {:?}", list.dropped));
            }
            RankedColumns {
                order: repair_permutation(list.items, headers),
            }
        }
        Err(e) => {
            trace.warn("ranking", format!("{e}; using original column order"));
            RankedColumns::identity(headers)
        }
    }
}

pub fn column_lookup(
    table: &NormalizedTable,
    ranked: &RankedColumns,
    question: &str,
    k: usize,
    b_max: usize,
    key_column: &str,
    gateway: &Gateway,
    trace: &mut ReasoningTrace,
) -> ColumnSelection {
    let b_max = b_max.max(1);
    let (rendered, _) = peek_markdown(table, k.max(1));
    let reply = gateway.call(
        TemplateId::ColumnLookup,
        bindings([
            ("table", rendered),
            ("headers", join_headers(&ranked.order)),
            ("question", question.to_string()),
            ("max_columns", b_max.to_string()),
        ]),
        trace,
    );
    let parsed = match reply {
        Ok(text) => parse_delimited_list(&text, Some(table.table.headers())).map_err(|e| match e {
            ReplyError::EmptyList { .. } => "reply selected no known columns".to_string(),
            other => other.to_string(),
        }),
        Err(e) => Err(e.to_string()),
    };
    let (mut columns, requested) = match parsed {
        Ok(list) => {
            if !list.dropped.is_empty() {
                trace.warn("column_lookup", format!("ignored unknown columns {:?}", list.dropped));
            }
            let mut unique: Vec<String> = Vec::new();
            for item in list.items {
                if !unique.contains(&item) {
                    unique.push(item);
                }
            }
            let requested = unique.len();
            if requested > b_max {
                trace.warn(
                    "column_lookup",
                    format!("model selected {requested} columns; keeping the first {b_max}"),
                );
                unique.truncate(b_max);
            }
            (unique, requested)
        }
        Err(e) => {
            trace.warn("column_lookup", format!("{e}; keeping the top-ranked column"));
            (vec![ranked.order[0].clone()], 0)
        }
    };
    if !columns.iter().any(|c| c == key_column) {
        columns.push(key_column.to_string());
    }
    ColumnSelection { columns, requested }
}

pub fn row_lookup(
    table: &NormalizedTable,
    question: &str,
    k: usize,
    gateway: &Gateway,
    engine: &RowEngine,
    trace: &mut ReasoningTrace,
) -> RowSet {
    let m = table.table.row_count();
    let peeked = peek(&table.table, k.max(1));
    let reply = gateway.call(
        TemplateId::RowLookupSql,
        bindings([
            ("table", render_markdown(&peeked, false)),
            ("schema", engine.schema().describe()),
            ("question", question.to_string()),
        ]),
        trace,
    );
    let sql = match reply {
        Ok(text) => extract_code_block(&text),
        Err(e) => {
            let reason = format!("row lookup unavailable: {e}");
            trace.warn("row_lookup", reason.clone());
            trace.fallback(Fallback::AllRows, reason.clone());
            return RowSet::all(m, "", reason);
        }
    };
    match engine.execute(&sql) {
        Ok(rows) if rows.aggregate => {
            trace.warn(
                "row_lookup",
                "aggregate query; only its WHERE clause was used to select rows",
            );
            RowSet {
                empty_reason: Some("aggregate query; WHERE clause applied".into()),
                ..rows
            }
        }
        Ok(rows) => rows,
        Err(e) => {
            let reason = format!("SQL failed: {e}");
            trace.warn("row_lookup", reason.clone());
            trace.fallback(Fallback::AllRows, reason.clone());
            RowSet::all(m, sql, reason)
        }
    }
}

pub fn construct_focus(
    table: &NormalizedTable,
    rows: &RowSet,
    columns: &[String],
) -> Result<TableOfFocus, TableError> {
    if columns.is_empty() {
        return Err(TableError::Invalid("table-of-focus needs at least one column".into()));
    }
    let mut indices = Vec::with_capacity(columns.len());
    for name in columns {
        let j = table
            .table
            .column_index(name)
            .ok_or_else(|| TableError::Invalid(format!("unknown column `{name}`")))?;
        indices.push(j);
    }
    let focus = project(
        &table.table,
        &CellSelection::new(rows.indices.iter().copied(), indices),
    )?;
    let full_area = table.table.area();
    let condensation_ratio = if full_area == 0 {
        1.0
    } else {
        focus.area() as f64 / full_area as f64
    };
    Ok(TableOfFocus {
        table: focus,
        selected_rows: rows.clone(),
        selected_columns: columns.to_vec(),
        initial_columns: columns.to_vec(),
        reconstruction_count: 0,
        estimations: 0,
        condensation_ratio,
    })
}
