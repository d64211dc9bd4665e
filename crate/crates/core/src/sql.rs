//! Row lookup over a single in-memory relation.
//!
//! A normalized table is loaded into an embedded SQLite database as table `t`
//! with sanitized column names and a synthetic row-id column. Model-written
//! SELECT statements pass a policy check, are rewritten to return row ids
//! only, and run under a wall-clock deadline. See `docs/sql-dialect.md` for
//! the accepted grammar.

use std::collections::BTreeSet;
use std::sync::mpsc;
use std::time::Duration;

use rusqlite::types::Value;
use rusqlite::Connection;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalize::{numeric_value, parse_date, parse_number, Kind, NormalizedTable};

pub const TABLE_NAME: &str = "t";
pub const ROW_ID: &str = "_row_id";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SqlError {
    #[error("syntax error{}: {message}", fmt_pos(*.position))]
    Syntax { message: String, position: Option<usize> },
    #[error("semantic error{}: {message}", fmt_pos(*.position))]
    Semantic { message: String, position: Option<usize> },
    #[error("statement rejected: {0}")]
    Policy(String),
    #[error("statement exceeded {0:?}")]
    Timeout(Duration),
    #[error("engine error: {0}")]
    Engine(String),
}

fn fmt_pos(p: Option<usize>) -> String {
    p.map(|p| format!(" at byte {p}")).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlColumn {
    pub original_header: String,
    pub sanitized_name: String,
    pub kind: Kind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlSchema {
    pub table_name: String,
    pub columns: Vec<SqlColumn>,
    pub row_id_column: String,
}

impl SqlSchema {
    fn affinity(kind: Kind) -> &'static str {
        match kind {
            Kind::Integer => "INTEGER",
            Kind::Decimal => "REAL",
            Kind::Date | Kind::Text | Kind::Mixed => "TEXT",
        }
    }

    /// One line per column, as shown to the model.
    pub fn describe(&self) -> String {
        let mut out = format!("CREATE TABLE {} (\n", self.table_name);
        for c in &self.columns {
            let note = if c.original_header != c.sanitized_name {
                format!(" -- header: {}", c.original_header)
            } else {
                String::new()
            };
            out.push_str(&format!(
                "  {} {},{}\n",
                c.sanitized_name,
                Self::affinity(c.kind),
                note
            ));
        }
        out.push(')');
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowSet {
    pub indices: Vec<usize>,
    /// The statement as supplied.
    pub sql: String,
    /// The statement actually run, after rewriting to row ids.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub executed: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empty_reason: Option<String>,
    /// The statement aggregated, so only its WHERE clause was applied.
    #[serde(default)]
    pub aggregate: bool,
}

impl RowSet {
    /// Every row of an `m`-row table.
    pub fn all(row_count: usize, sql: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            indices: (0..row_count).collect(),
            sql: sql.into(),
            executed: String::new(),
            empty_reason: Some(reason.into()),
            aggregate: false,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

const RESERVED: &[&str] = &[
    "all", "and", "as", "asc", "between", "by", "case", "check", "collate", "create", "default",
    "delete", "desc", "distinct", "drop", "else", "end", "escape", "except", "exists", "from",
    "glob", "group", "having", "in", "index", "insert", "intersect", "into", "is", "isnull",
    "join", "limit", "like", "not", "notnull", "null", "offset", "on", "or", "order", "primary",
    "references", "select", "set", "table", "then", "to", "union", "unique", "update", "using",
    "values", "when", "where",
];

/// Lowercases, maps non-alphanumerics to `_`, collapses and trims runs, prefixes a
/// leading digit with `c_`, and suffixes `_2`, `_3`, ... on collision.
pub fn sanitize_identifier(header: &str, taken: &BTreeSet<String>) -> String {
    let mut base = String::new();
    for ch in header.trim().chars() {
        let ch = ch.to_ascii_lowercase();
        if ch.is_ascii_alphanumeric() {
            base.push(ch);
        } else if !base.ends_with('_') {
            base.push('_');
        }
    }
    let mut base = base.trim_matches('_').to_string();
    if base.is_empty() {
        base = "col".into();
    }
    if base.starts_with(|c: char| c.is_ascii_digit()) {
        base.insert_str(0, "c_");
    }
    if RESERVED.contains(&base.as_str()) {
        base.push_str("_col");
    }
    if !taken.contains(&base) {
        return base;
    }
    (2..)
        .map(|i| format!("{base}_{i}"))
        .find(|c| !taken.contains(c))
        .expect("unbounded suffix search")
}

pub fn build_schema(table: &NormalizedTable) -> SqlSchema {
    let mut taken = BTreeSet::new();
    let columns: Vec<SqlColumn> = table
        .table
        .headers()
        .iter()
        .enumerate()
        .map(|(j, h)| {
            let name = sanitize_identifier(h, &taken);
            taken.insert(name.clone());
            SqlColumn {
                original_header: h.clone(),
                sanitized_name: name,
                kind: table.kind_of(j),
            }
        })
        .collect();
    let mut row_id = ROW_ID.to_string();
    while taken.contains(&row_id) {
        row_id.push_str("_x");
    }
    SqlSchema {
        table_name: TABLE_NAME.into(),
        columns,
        row_id_column: row_id,
    }
}

fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

fn bind_value(kind: Kind, cell: &str) -> Value {
    match kind {
        Kind::Integer => match parse_number(cell) {
            Some(n) => n
                .canonical
                .parse::<i64>()
                .map(Value::Integer)
                .unwrap_or_else(|_| numeric_value(cell).map_or(Value::Null, Value::Real)),
            None => Value::Null,
        },
        Kind::Decimal => numeric_value(cell).map_or(Value::Null, Value::Real),
        Kind::Date => parse_date(cell).map_or(Value::Null, |d| Value::Text(d.format("%Y-%m-%d").to_string())),
        Kind::Text | Kind::Mixed => Value::Text(cell.to_string()),
    }
}

// ---------------------------------------------------------------------------
// Lexing and policy

#[derive(Debug, Clone, PartialEq, Eq)]
enum TokKind {
    Word,
    QuotedIdent,
    Str,
    Num,
    Punct,
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    text: String,
    start: usize,
    end: usize,
}

impl Token {
    fn is_kw(&self, kw: &str) -> bool {
        self.kind == TokKind::Word && self.text.eq_ignore_ascii_case(kw)
    }
}

fn lex(sql: &str) -> Result<Vec<Token>, SqlError> {
    let bytes = sql.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    let syntax = |message: &str, position: usize| SqlError::Syntax {
        message: message.into(),
        position: Some(position),
    };
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if sql[i..].starts_with("--") {
            i = sql[i..].find('\n').map_or(bytes.len(), |n| i + n);
        } else if sql[i..].starts_with("/*") {
            i = sql[i + 2..]
                .find("*/")
                .map(|n| i + 2 + n + 2)
                .ok_or_else(|| syntax("unterminated comment", i))?;
        } else if c == b'\'' || c == b'"' || c == b'`' || c == b'[' {
            let close = if c == b'[' { b']' } else { c };
            let mut j = i + 1;
            loop {
                match bytes.get(j) {
                    None => return Err(syntax("unterminated quoted token", i)),
                    Some(&b) if b == close => {
                        if close != b']' && bytes.get(j + 1) == Some(&close) {
                            j += 2;
                            continue;
                        }
                        break;
                    }
                    Some(_) => j += 1,
                }
            }
            tokens.push(Token {
                kind: if c == b'\'' { TokKind::Str } else { TokKind::QuotedIdent },
                text: sql[i..=j].to_string(),
                start: i,
                end: j + 1,
            });
            i = j + 1;
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let j = i + sql[i..]
                .find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '.'))
                .unwrap_or(bytes.len() - i);
            tokens.push(Token { kind: TokKind::Num, text: sql[i..j].into(), start: i, end: j });
            i = j;
        } else if c.is_ascii_alphabetic() || c == b'_' || c >= 0x80 {
            let j = i + sql[i..]
                .find(|ch: char| !(ch.is_alphanumeric() || ch == '_' || ch == '$'))
                .unwrap_or(bytes.len() - i);
            tokens.push(Token { kind: TokKind::Word, text: sql[i..j].into(), start: i, end: j });
            i = j;
        } else {
            let two = sql.get(i..i + 2).unwrap_or("");
            let len = if matches!(two, "<=" | ">=" | "<>" | "!=" | "==" | "||") { 2 } else { 1 };
            tokens.push(Token {
                kind: TokKind::Punct,
                text: sql[i..i + len].into(),
                start: i,
                end: i + len,
            });
            i += len;
        }
    }
    Ok(tokens)
}

const FORBIDDEN_STATEMENTS: &[&str] = &[
    "insert", "update", "delete", "replace", "upsert", "create", "drop", "alter", "attach",
    "detach", "pragma", "vacuum", "reindex", "analyze", "begin", "commit", "rollback", "savepoint",
    "release", "explain",
];
const AGGREGATES: &[&str] = &["count", "sum", "avg", "min", "max", "total", "group_concat"];
const CLAUSE_END: &[&str] = &["group", "having", "order", "limit", "window"];

/// Top-level layout of an accepted SELECT.
#[derive(Debug)]
struct SelectShape {
    /// Byte offset of the top-level FROM keyword.
    from_start: usize,
    /// End of the WHERE clause (or FROM clause when there is none).
    filter_end: usize,
    /// End of the statement without trailing semicolons.
    stmt_end: usize,
    aggregate: bool,
}

fn check_policy(sql: &str) -> Result<SelectShape, SqlError> {
    let tokens = lex(sql)?;
    let mut stmt_tokens: &[Token] = &tokens;
    while stmt_tokens.last().is_some_and(|t| t.text == ";") {
        stmt_tokens = &stmt_tokens[..stmt_tokens.len() - 1];
    }
    let first = stmt_tokens.first().ok_or_else(|| SqlError::Syntax {
        message: "empty statement".into(),
        position: Some(0),
    })?;
    if let Some(t) = stmt_tokens.iter().find(|t| t.text == ";") {
        return Err(SqlError::Policy(format!("multiple statements (`;` at byte {})", t.start)));
    }
    if FORBIDDEN_STATEMENTS.iter().any(|k| first.is_kw(k)) {
        return Err(SqlError::Policy(format!("{} statements are not allowed", first.text.to_uppercase())));
    }
    if first.is_kw("with") || first.is_kw("values") {
        return Err(SqlError::Policy(format!("{} is outside the supported dialect", first.text.to_uppercase())));
    }
    if !first.is_kw("select") {
        return Err(SqlError::Syntax {
            message: format!("expected SELECT, found `{}`", first.text),
            position: Some(first.start),
        });
    }

    let mut depth = 0i32;
    let mut from_idx = None;
    let mut where_idx = None;
    let mut end_idx = None;
    let mut group_or_having = false;
    let mut aggregate_in_list = false;
    for (i, t) in stmt_tokens.iter().enumerate() {
        match t.text.as_str() {
            "(" => depth += 1,
            ")" => depth -= 1,
            _ => {}
        }
        if from_idx.is_none()
            && t.kind == TokKind::Word
            && AGGREGATES.iter().any(|a| t.is_kw(a))
            && stmt_tokens.get(i + 1).is_some_and(|n| n.text == "(")
        {
            aggregate_in_list = true;
        }
        if depth != 0 || t.kind != TokKind::Word {
            continue;
        }
        if ["union", "intersect", "except"].iter().any(|k| t.is_kw(k)) {
            return Err(SqlError::Policy("compound SELECT is outside the supported dialect".into()));
        }
        if t.is_kw("from") && from_idx.is_none() {
            from_idx = Some(i);
        } else if t.is_kw("where") && from_idx.is_some() && where_idx.is_none() && end_idx.is_none() {
            where_idx = Some(i);
        } else if from_idx.is_some() && end_idx.is_none() && CLAUSE_END.iter().any(|k| t.is_kw(k)) {
            end_idx = Some(i);
            group_or_having |= t.is_kw("group") || t.is_kw("having");
        } else if t.is_kw("group") || t.is_kw("having") {
            group_or_having = true;
        }
    }
    if depth != 0 {
        return Err(SqlError::Syntax {
            message: "unbalanced parentheses".into(),
            position: None,
        });
    }
    let from_idx = from_idx.ok_or_else(|| SqlError::Semantic {
        message: format!("SELECT must read FROM {TABLE_NAME}"),
        position: None,
    })?;
    let stmt_end = stmt_tokens.last().map_or(sql.len(), |t| t.end);
    let filter_end = end_idx.map_or(stmt_end, |i| stmt_tokens[i].start);
    let _ = where_idx;
    Ok(SelectShape {
        from_start: stmt_tokens[from_idx].start,
        filter_end: filter_end.max(stmt_tokens[from_idx].end),
        stmt_end,
        aggregate: aggregate_in_list || group_or_having,
    })
}

fn map_sqlite_error(err: rusqlite::Error, timeout: Duration) -> SqlError {
    let (message, position) = match &err {
        rusqlite::Error::SqlInputError { msg, offset, .. } => (msg.clone(), usize::try_from(*offset).ok()),
        other => (other.to_string(), None),
    };
    if let rusqlite::Error::SqliteFailure(e, _) | rusqlite::Error::SqlInputError { error: e, .. } = &err {
        if e.code == rusqlite::ErrorCode::OperationInterrupted {
            return SqlError::Timeout(timeout);
        }
    }
    let lowered = message.to_lowercase();
    if lowered.contains("syntax error") || lowered.contains("incomplete input") || lowered.contains("unrecognized token") {
        SqlError::Syntax { message, position }
    } else if lowered.contains("interrupted") {
        SqlError::Timeout(timeout)
    } else if lowered.contains("no such")
        || lowered.contains("ambiguous")
        || lowered.contains("misuse")
        || lowered.contains("wrong number of arguments")
    {
        SqlError::Semantic { message, position }
    } else {
        SqlError::Engine(message)
    }
}

// ---------------------------------------------------------------------------
// Engine

/// One loaded copy of a table. Independent per pipeline run.
pub struct RowEngine {
    conn: Connection,
    schema: SqlSchema,
    row_count: usize,
    timeout: Duration,
}

impl RowEngine {
    pub fn new(table: &NormalizedTable) -> Result<Self, SqlError> {
        let schema = build_schema(table);
        let conn = Connection::open_in_memory().map_err(|e| SqlError::Engine(e.to_string()))?;
        let engine_err = |e: rusqlite::Error| SqlError::Engine(e.to_string());

        let sanitized: BTreeSet<String> = schema.columns.iter().map(|c| c.sanitized_name.clone()).collect();
        let mut aliases: BTreeSet<String> = BTreeSet::new();
        let mut defs = vec![format!("{} INTEGER PRIMARY KEY", quote_ident(&schema.row_id_column))];
        for c in &schema.columns {
            defs.push(format!("{} {}", quote_ident(&c.sanitized_name), SqlSchema::affinity(c.kind)));
        }
        // Original headers stay addressable as quoted identifiers.
        for c in &schema.columns {
            let lowered = c.original_header.to_lowercase();
            if c.original_header.trim().is_empty()
                || sanitized.contains(&lowered)
                || lowered == schema.row_id_column
                || !aliases.insert(lowered)
            {
                continue;
            }
            defs.push(format!(
                "{} GENERATED ALWAYS AS ({}) VIRTUAL",
                quote_ident(&c.original_header),
                quote_ident(&c.sanitized_name)
            ));
        }
        conn.execute_batch(&format!("CREATE TABLE {TABLE_NAME} ({});", defs.join(", ")))
            .map_err(engine_err)?;

        let placeholders = vec!["?"; schema.columns.len() + 1].join(", ");
        let column_list = std::iter::once(&schema.row_id_column)
            .chain(schema.columns.iter().map(|c| &c.sanitized_name))
            .map(|n| quote_ident(n))
            .collect::<Vec<_>>()
            .join(", ");
        {
            let tx = conn.unchecked_transaction().map_err(engine_err)?;
            {
                let mut insert = tx
                    .prepare(&format!("INSERT INTO {TABLE_NAME} ({column_list}) VALUES ({placeholders})"))
                    .map_err(engine_err)?;
                for (i, row) in table.table.rows().iter().enumerate() {
                    let mut values = vec![Value::Integer(i as i64)];
                    values.extend(
                        row.iter()
                            .zip(&schema.columns)
                            .map(|(cell, c)| bind_value(c.kind, cell)),
                    );
                    insert
                        .execute(rusqlite::params_from_iter(values))
                        .map_err(engine_err)?;
                }
            }
            tx.commit().map_err(engine_err)?;
        }
        conn.execute_batch("PRAGMA query_only = ON;").map_err(engine_err)?;
        Ok(Self {
            conn,
            schema,
            row_count: table.table.row_count(),
            timeout: DEFAULT_TIMEOUT,
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn schema(&self) -> &SqlSchema {
        &self.schema
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    /// Runs `sql` and returns the indices of the rows it selects.
    pub fn execute(&self, sql: &str) -> Result<RowSet, SqlError> {
        let shape = check_policy(sql)?;
        let original = &sql[..shape.stmt_end];

        // Validate the statement as written so error offsets refer to it.
        {
            let stmt = self
                .conn
                .prepare(original)
                .map_err(|e| map_sqlite_error(e, self.timeout))?;
            if !stmt.readonly() {
                return Err(SqlError::Policy("statement is not read-only".into()));
            }
        }

        let row_id = quote_ident(&self.schema.row_id_column);
        let executed = if shape.aggregate {
            format!("SELECT {row_id} {}", &sql[shape.from_start..shape.filter_end].trim_end())
        } else {
            format!("SELECT {row_id} {}", &sql[shape.from_start..shape.stmt_end])
        };

        let ids = self.run_with_deadline(&executed)?;
        let mut indices: Vec<usize> = ids
            .into_iter()
            .filter_map(|id| usize::try_from(id).ok())
            .filter(|&i| i < self.row_count)
            .collect();
        indices.sort_unstable();
        indices.dedup();
        let empty_reason = indices.is_empty().then(|| "no rows matched".to_string());
        Ok(RowSet {
            indices,
            sql: sql.to_string(),
            executed,
            empty_reason,
            aggregate: shape.aggregate,
        })
    }

    fn run_with_deadline(&self, sql: &str) -> Result<Vec<i64>, SqlError> {
        let interrupt = self.conn.get_interrupt_handle();
        let (done_tx, done_rx) = mpsc::channel::<()>();
        let timeout = self.timeout;
        let watchdog = std::thread::spawn(move || {
            if let Err(mpsc::RecvTimeoutError::Timeout) = done_rx.recv_timeout(timeout) {
                interrupt.interrupt();
            }
        });
        let result = (|| {
            let mut stmt = self.conn.prepare(sql)?;
            let rows = stmt.query_map([], |r| r.get::<_, Option<i64>>(0))?;
            rows.filter_map(|r| r.transpose()).collect::<Result<Vec<i64>, _>>()
        })();
        let _ = done_tx.send(());
        let _ = watchdog.join();
        result.map_err(|e| map_sqlite_error(e, timeout))
    }
}

pub fn execute_row_lookup(table: &NormalizedTable, sql: &str) -> Result<RowSet, SqlError> {
    RowEngine::new(table)?.execute(sql)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalize::normalize;
    use crate::table::Table;

    fn riders() -> NormalizedTable {
        normalize(&Table::from_rows(
            ["Rider", "Country", "Wins (total)"],
            [
                ["Tom Boonen", "Belgium", "3"],
                ["Fabian Cancellara", "Switzerland", "2"],
                ["Philippe Gilbert", "Belgium", "4"],
                ["Peter Sagan", "Slovakia", "1,001"],
                ["Greg Van Avermaet", "Belgium", "n/a"],
            ],
        ))
    }

    #[test]
    fn sanitizes_headers() {
        let none = BTreeSet::new();
        assert_eq!(sanitize_identifier("Wins (total)", &none), "wins_total");
        assert_eq!(sanitize_identifier("2020", &none), "c_2020");
        assert_eq!(sanitize_identifier("  ", &none), "col");
        assert_eq!(sanitize_identifier("Order", &none), "order_col");
        let taken: BTreeSet<String> = ["a".to_string()].into();
        assert_eq!(sanitize_identifier("a", &taken), "a_2");
        let taken: BTreeSet<String> = ["a".to_string(), "a_2".to_string()].into();
        assert_eq!(sanitize_identifier("A", &taken), "a_3");
    }

    #[test]
    fn schema_cases() {
        let s = build_schema(&riders());
        let names: Vec<_> = s.columns.iter().map(|c| c.sanitized_name.as_str()).collect();
        assert_eq!(names, ["rider", "country", "wins_total"]);
        assert_eq!(s.row_id_column, "_row_id");

        let dup = NormalizedTable::passthrough(Table::from_rows(["a", "a"], [["1", "2"]]));
        let names: Vec<_> = build_schema(&dup).columns.into_iter().map(|c| c.sanitized_name).collect();
        assert_eq!(names, ["a", "a_2"]);

        // Leading underscores are trimmed, so a header cannot take the row id name.
        let clash = NormalizedTable::passthrough(Table::from_rows(["_row_id", "x"], Vec::<Vec<String>>::new()));
        let s = build_schema(&clash);
        assert_eq!(s.columns[0].sanitized_name, "row_id");
        assert_eq!(s.row_id_column, "_row_id");
        let engine = RowEngine::new(&clash).unwrap();
        assert!(engine.execute("SELECT * FROM t").unwrap().is_empty());
    }

    #[test]
    fn filters_rows() {
        let t = riders();
        let rs = execute_row_lookup(&t, "SELECT * FROM t WHERE country = 'Belgium'").unwrap();
        assert_eq!(rs.indices, [0, 2, 4]);
        let rs = execute_row_lookup(&t, "select rider from t where wins_total > 2;").unwrap();
        assert_eq!(rs.indices, [0, 2, 3]);
        // unparseable numeric cell is NULL, so neither > nor <= matches it
        let rs = execute_row_lookup(&t, "SELECT * FROM t WHERE wins_total <= 2").unwrap();
        assert_eq!(rs.indices, [1]);
        let rs = execute_row_lookup(&t, "SELECT * FROM t ORDER BY wins_total DESC LIMIT 1").unwrap();
        assert_eq!(rs.indices, [3]);
        let rs = execute_row_lookup(&t, r#"SELECT "Wins (total)" FROM t WHERE "Wins (total)" = 4"#).unwrap();
        assert_eq!(rs.indices, [2]);
        let rs = execute_row_lookup(&t, "SELECT * FROM t WHERE country = 'Narnia'").unwrap();
        assert!(rs.is_empty());
        assert_eq!(rs.empty_reason.as_deref(), Some("no rows matched"));
    }

    #[test]
    fn aggregates_keep_their_filter() {
        let t = riders();
        let rs = execute_row_lookup(&t, "SELECT SUM(wins_total) FROM t WHERE country = 'Belgium'").unwrap();
        assert!(rs.aggregate);
        assert_eq!(rs.indices, [0, 2, 4]);
        let rs = execute_row_lookup(&t, "SELECT COUNT(*) FROM t").unwrap();
        assert!(rs.aggregate);
        assert_eq!(rs.indices, [0, 1, 2, 3, 4]);
        let rs = execute_row_lookup(&t, "SELECT country, COUNT(*) FROM t GROUP BY country").unwrap();
        assert_eq!(rs.indices.len(), 5);
    }

    #[test]
    fn rejects_bad_statements() {
        let t = riders();
        assert!(matches!(execute_row_lookup(&t, "SELEC *"), Err(SqlError::Syntax { .. })));
        assert!(matches!(execute_row_lookup(&t, "DROP TABLE t"), Err(SqlError::Policy(_))));
        assert!(matches!(
            execute_row_lookup(&t, "SELECT * FROM t; DELETE FROM t"),
            Err(SqlError::Policy(_))
        ));
        assert!(matches!(
            execute_row_lookup(&t, "SELECT * FROM t WHERE horse = 1"),
            Err(SqlError::Semantic { .. })
        ));
        assert!(matches!(execute_row_lookup(&t, "SELECT * FROM other"), Err(SqlError::Semantic { .. })));
        match execute_row_lookup(&t, "SELECT * FROM t WHERE wins_total >") {
            Err(SqlError::Syntax { .. }) => {}
            other => panic!("{other:?}"),
        }
        match execute_row_lookup(&t, "SELECT * FROM t WHERE country = 'x") {
            Err(SqlError::Syntax { position: Some(32), .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            execute_row_lookup(&t, "SELECT * FROM t UNION SELECT * FROM t"),
            Err(SqlError::Policy(_))
        ));
    }

    #[test]
    fn runaway_query_times_out() {
        let t = riders();
        let engine = RowEngine::new(&t).unwrap().with_timeout(Duration::from_millis(200));
        let sql = "SELECT * FROM t WHERE (SELECT count(*) FROM t a, t b, t c, t d, t e, t f, t g, t h, t i, t j, t k, t l) > 0";
        let started = std::time::Instant::now();
        assert!(matches!(engine.execute(sql), Err(SqlError::Timeout(_))));
        assert!(started.elapsed() < Duration::from_secs(3));
    }
}
