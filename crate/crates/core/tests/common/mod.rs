//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use proptest::prelude::*;
use serde::Deserialize;
use tablemaster::content::reconstruct_focus;
use tablemaster::gateway::{
    Cassette, CassetteBackend, CassetteMode, Gateway, ScriptedBackend, TemplateId, TemplateRegistry,
};
use tablemaster::normalize::{Kind, NormalizedTable};
use tablemaster::pipeline::{Pipeline, PipelineConfig};
use tablemaster::reasoning::TaskKind;
use tablemaster::sql::{execute_row_lookup, RowSet};
use tablemaster::structure::RankedColumns;
use tablemaster::table::{table_from_json, Table};
use tablemaster::trace::ReasoningTrace;

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn goldens_dir() -> PathBuf {
    manifest_dir().join("tests/fixtures/goldens")
}

pub fn cassette_dir() -> PathBuf {
    manifest_dir().join("tests/fixtures/cassette")
}

#[derive(Debug, Clone, Deserialize)]
pub struct Expect {
    pub strategy: Option<String>,
    pub rows: usize,
    pub reconstruction_count: usize,
    pub fallbacks: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Golden {
    pub id: String,
    pub task: String,
    pub question: String,
    pub table: serde_json::Value,
    pub answers: Vec<String>,
    pub replies: BTreeMap<String, Vec<String>>,
    pub expect: Expect,
}

impl Golden {
    pub fn table(&self) -> Table {
        table_from_json(&self.table, true).expect("golden table")
    }

    pub fn task_kind(&self) -> TaskKind {
        self.task.parse().expect("golden task")
    }

    pub fn scripted(&self) -> ScriptedBackend {
        self.replies.iter().fold(ScriptedBackend::new(), |b, (id, texts)| {
            let id: TemplateId = id.parse().expect("template id in golden");
            b.replies(id, texts.iter().cloned())
        })
    }
}

pub fn load_goldens() -> Vec<Golden> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(goldens_dir())
        .expect("goldens dir")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| serde_json::from_str(&std::fs::read_to_string(p).unwrap()).expect("golden json"))
        .collect()
}

/// Configuration shared by recording and replay. The cassette path is
/// relative to the crate root so traces do not depend on the checkout location.
pub fn golden_config(mode: CassetteMode) -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.backend_mode = mode;
    c.cassette = Some(PathBuf::from("tests/fixtures/cassette"));
    c.normalize = true;
    c
}

pub fn replay_pipeline() -> Pipeline {
    let config = golden_config(CassetteMode::Replay);
    let backend = CassetteBackend::replay(Cassette::open(cassette_dir()));
    Pipeline::new(config, Gateway::new(TemplateRegistry::default(), Arc::new(backend))).unwrap()
}

pub fn recording_pipeline(golden: &Golden, dir: &Path) -> Pipeline {
    let config = golden_config(CassetteMode::Record);
    let backend = CassetteBackend::new(
        Cassette::open(dir),
        CassetteMode::Record,
        Some(Arc::new(golden.scripted())),
    )
    .unwrap();
    Pipeline::new(config, Gateway::new(TemplateRegistry::default(), Arc::new(backend))).unwrap()
}

pub fn scripted_pipeline(backend: ScriptedBackend, config: PipelineConfig) -> Pipeline {
    Pipeline::new(config, Gateway::new(TemplateRegistry::default(), Arc::new(backend))).unwrap()
}

/// A config that validates without a cassette, for scripted backends.
pub fn scripted_config() -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.backend_mode = CassetteMode::Passthrough;
    c
}

// ---------------------------------------------------------------------------
// Reconstruction oracle: the published pseudocode, line for line.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReconOutcome {
    pub columns: Vec<String>,
    pub e: usize,
    pub estimations: usize,
}

pub fn algorithm1(c0: &[String], ranked: &[String], verdicts: &[bool]) -> ReconOutcome {
    let mut candidate: Vec<String> = ranked.iter().filter(|c| !c0.contains(c)).cloned().collect();
    let mut c = c0.to_vec();
    let mut calls = 0;
    loop {
        // extractTable then estimateInformation; the last scripted verdict repeats.
        let e = verdicts[calls.min(verdicts.len() - 1)];
        calls += 1;
        if e || candidate.is_empty() {
            break;
        }
        let next = candidate.remove(0);
        if !c.contains(&next) {
            c.push(next);
        }
    }
    ReconOutcome {
        e: c.len() - c0.len(),
        columns: c,
        estimations: calls,
    }
}

// ---------------------------------------------------------------------------
// Cost oracle: the closed form evaluated in exact half units.

pub fn cost_oracle_half_units(k: u64, n: u64, e: u64, a: u64, b: u64) -> u128 {
    let (k, n, e, a, b) = (k as u128, n as u128, e as u128, a as u128, b as u128);
    // (2k + 1) * n + (e + 2.5) * (a * b), doubled.
    (2 * k + 1) * n * 2 + (2 * e + 5) * (a * b)
}

// ---------------------------------------------------------------------------
// SQL oracle: a tiny evaluator for the generated predicate language.

#[derive(Debug, Clone, PartialEq)]
pub enum Val {
    Null,
    Num(f64),
    Text(String),
}

#[derive(Debug, Clone)]
pub enum Operand {
    Col(usize),
    Num(f64),
    Text(String),
}

#[derive(Debug, Clone)]
pub enum Pred {
    Cmp(Operand, &'static str, Operand),
    And(Box<Pred>, Box<Pred>),
    Or(Box<Pred>, Box<Pred>),
    Not(Box<Pred>),
    Between(usize, f64, f64, bool),
    In(usize, Vec<Operand>, bool),
    Like(usize, String, bool),
    IsNull(usize, bool),
}

/// Column layout of the generated tables: unique integer id, nullable
/// integer score, text name, nullable quarter-valued decimal price.
pub const ORACLE_HEADERS: [&str; 4] = ["ID", "Score", "Name", "Price ($)"];
pub const ORACLE_IDENTS: [&str; 4] = ["id", "score", "name", "\"Price ($)\""];

pub fn cell_value(column: usize, cell: &str) -> Val {
    match column {
        2 => Val::Text(cell.to_string()),
        _ if cell.is_empty() => Val::Null,
        _ => Val::Num(cell.parse().expect("numeric oracle cell")),
    }
}

fn sql_literal(o: &Operand) -> String {
    match o {
        Operand::Col(c) => ORACLE_IDENTS[*c].to_string(),
        Operand::Num(n) => format!("{n}"),
        Operand::Text(s) => format!("'{}'", s.replace('\'', "''")),
    }
}

impl Pred {
    pub fn to_sql(&self) -> String {
        match self {
            Pred::Cmp(a, op, b) => format!("{} {op} {}", sql_literal(a), sql_literal(b)),
            Pred::And(a, b) => format!("({} AND {})", a.to_sql(), b.to_sql()),
            Pred::Or(a, b) => format!("({} OR {})", a.to_sql(), b.to_sql()),
            Pred::Not(a) => format!("NOT ({})", a.to_sql()),
            Pred::Between(c, lo, hi, neg) => format!(
                "{} {}BETWEEN {lo} AND {hi}",
                ORACLE_IDENTS[*c],
                if *neg { "NOT " } else { "" }
            ),
            Pred::In(c, items, neg) => format!(
                "{} {}IN ({})",
                ORACLE_IDENTS[*c],
                if *neg { "NOT " } else { "" },
                items.iter().map(sql_literal).collect::<Vec<_>>().join(", ")
            ),
            Pred::Like(c, pat, neg) => format!(
                "{} {}LIKE '{pat}'",
                ORACLE_IDENTS[*c],
                if *neg { "NOT " } else { "" }
            ),
            Pred::IsNull(c, neg) => {
                format!("{} IS {}NULL", ORACLE_IDENTS[*c], if *neg { "NOT " } else { "" })
            }
        }
    }

    /// Three-valued evaluation; `None` is SQL unknown.
    pub fn eval(&self, row: &[Val]) -> Option<bool> {
        let get = |o: &Operand| match o {
            Operand::Col(c) => row[*c].clone(),
            Operand::Num(n) => Val::Num(*n),
            Operand::Text(s) => Val::Text(s.clone()),
        };
        match self {
            Pred::Cmp(a, op, b) => {
                let ord = compare(&get(a), &get(b))?;
                Some(match *op {
                    "=" => ord.is_eq(),
                    "!=" | "<>" => ord.is_ne(),
                    "<" => ord.is_lt(),
                    "<=" => ord.is_le(),
                    ">" => ord.is_gt(),
                    ">=" => ord.is_ge(),
                    other => panic!("operator {other}"),
                })
            }
            Pred::And(a, b) => match (a.eval(row), b.eval(row)) {
                (Some(false), _) | (_, Some(false)) => Some(false),
                (Some(true), Some(true)) => Some(true),
                _ => None,
            },
            Pred::Or(a, b) => match (a.eval(row), b.eval(row)) {
                (Some(true), _) | (_, Some(true)) => Some(true),
                (Some(false), Some(false)) => Some(false),
                _ => None,
            },
            Pred::Not(a) => a.eval(row).map(|v| !v),
            Pred::Between(c, lo, hi, neg) => {
                let v = &row[*c];
                let ge = compare(v, &Val::Num(*lo))?.is_ge();
                let le = compare(v, &Val::Num(*hi))?.is_le();
                Some((ge && le) != *neg)
            }
            Pred::In(c, items, neg) => {
                let v = &row[*c];
                if *v == Val::Null {
                    return None;
                }
                let hit = items.iter().any(|i| compare(v, &get(i)).is_some_and(|o| o.is_eq()));
                Some(hit != *neg)
            }
            Pred::Like(c, pat, neg) => match &row[*c] {
                Val::Null => None,
                Val::Num(n) => Some(like(pat, &format!("{n}")) != *neg),
                Val::Text(s) => Some(like(pat, s) != *neg),
            },
            Pred::IsNull(c, neg) => Some((row[*c] == Val::Null) != *neg),
        }
    }
}

/// SQLite ordering for the value mix the generator produces: numbers sort
/// before text, text compares bytewise.
fn compare(a: &Val, b: &Val) -> Option<std::cmp::Ordering> {
    use std::cmp::Ordering::*;
    match (a, b) {
        (Val::Null, _) | (_, Val::Null) => None,
        (Val::Num(x), Val::Num(y)) => x.partial_cmp(y),
        (Val::Num(_), Val::Text(_)) => Some(Less),
        (Val::Text(_), Val::Num(_)) => Some(Greater),
        (Val::Text(x), Val::Text(y)) => Some(x.as_bytes().cmp(y.as_bytes())),
    }
}

/// ASCII case-insensitive LIKE with `%` and `_`.
pub fn like(pattern: &str, text: &str) -> bool {
    fn go(p: &[u8], t: &[u8]) -> bool {
        match p.split_first() {
            None => t.is_empty(),
            Some((b'%', rest)) => (0..=t.len()).any(|i| go(rest, &t[i..])),
            Some((b'_', rest)) => !t.is_empty() && go(rest, &t[1..]),
            Some((c, rest)) => {
                !t.is_empty() && c.eq_ignore_ascii_case(&t[0]) && go(rest, &t[1..])
            }
        }
    }
    go(pattern.as_bytes(), text.as_bytes())
}

/// The tail of a generated statement after WHERE.
#[derive(Debug, Clone)]
pub enum Tail {
    None,
    /// ORDER BY a nullable column, no limit: only the row set matters.
    OrderBy(usize, bool),
    /// ORDER BY the unique id with LIMIT and optional OFFSET.
    Limit { desc: bool, limit: usize, offset: usize },
}

#[derive(Debug, Clone)]
pub struct Query {
    pub select: &'static str,
    pub pred: Option<Pred>,
    pub tail: Tail,
}

impl Query {
    pub fn is_aggregate(&self) -> bool {
        self.select.contains('(')
    }

    pub fn to_sql(&self) -> String {
        let mut s = format!("SELECT {} FROM t", self.select);
        if let Some(p) = &self.pred {
            s.push_str(" WHERE ");
            s.push_str(&p.to_sql());
        }
        match &self.tail {
            Tail::None => {}
            Tail::OrderBy(c, desc) => {
                s.push_str(&format!(" ORDER BY {}{}", ORACLE_IDENTS[*c], if *desc { " DESC" } else { "" }))
            }
            Tail::Limit { desc, limit, offset } => {
                s.push_str(&format!(" ORDER BY id{} LIMIT {limit}", if *desc { " DESC" } else { "" }));
                if *offset > 0 {
                    s.push_str(&format!(" OFFSET {offset}"));
                }
            }
        }
        s
    }

    /// Brute-force row filtering; returns sorted row indices.
    pub fn oracle(&self, rows: &[Vec<String>]) -> Vec<usize> {
        let values: Vec<Vec<Val>> = rows
            .iter()
            .map(|r| r.iter().enumerate().map(|(j, c)| cell_value(j, c)).collect())
            .collect();
        let mut kept: Vec<usize> = (0..rows.len())
            .filter(|&i| self.pred.as_ref().is_none_or(|p| p.eval(&values[i]) == Some(true)))
            .collect();
        if let (Tail::Limit { desc, limit, offset }, false) = (&self.tail, self.is_aggregate()) {
            let id = |i: usize| match values[i][0] {
                Val::Num(n) => n,
                _ => unreachable!("id is never null"),
            };
            kept.sort_by(|&a, &b| id(a).total_cmp(&id(b)));
            if *desc {
                kept.reverse();
            }
            kept = kept.into_iter().skip(*offset).take(*limit).collect();
            kept.sort_unstable();
        }
        kept
    }
}

// ---------------------------------------------------------------------------
// Generators and checks shared by the property suite and the acceptance target.

/// `(ranked header order, C⁰, verdict script)` over headers `h0..h{n-1}`.
pub fn recon_case() -> impl Strategy<Value = (Vec<String>, Vec<String>, Vec<bool>)> {
    (1usize..=10)
        .prop_flat_map(|h| {
            let names: Vec<String> = (0..h).map(|i| format!("h{i}")).collect();
            (
                Just(names.clone()).prop_shuffle(),
                proptest::sample::subsequence(names, 1..=h).prop_shuffle(),
                proptest::collection::vec(any::<bool>(), 1..=12),
            )
        })
}

pub fn check_recon(ranked: &[String], c0: &[String], verdicts: &[bool]) -> Result<(), String> {
    let mut headers = ranked.to_vec();
    headers.sort();
    let row: Vec<String> = headers.iter().map(|h| format!("{h}-value")).collect();
    let table = NormalizedTable::passthrough(Table::new(headers, vec![row.clone(), row]).unwrap());
    let replies: Vec<&str> = verdicts.iter().map(|&v| if v { "Yes" } else { "No" }).collect();
    let backend = ScriptedBackend::new().replies(TemplateId::InformationEstimation, replies);
    let gateway = Gateway::new(TemplateRegistry::default(), Arc::new(backend));
    let rows = RowSet::all(2, "", "");
    let mut trace = ReasoningTrace::default();
    let focus = reconstruct_focus(
        &table,
        "q",
        &rows,
        c0,
        &RankedColumns { order: ranked.to_vec() },
        &gateway,
        &mut trace,
    )
    .map_err(|e| e.to_string())?;
    let want = algorithm1(c0, ranked, verdicts);
    let got = ReconOutcome {
        columns: focus.selected_columns.clone(),
        e: focus.reconstruction_count,
        estimations: focus.estimations,
    };
    if got != want {
        return Err(format!("ranked {ranked:?} c0 {c0:?} verdicts {verdicts:?}: got {got:?}, want {want:?}"));
    }
    if trace.calls_to(TemplateId::InformationEstimation) != want.estimations {
        return Err("estimation calls in trace differ from the estimation count".into());
    }
    // The focus keeps the table's column order; C is a set.
    let mut shown = focus.table.headers().to_vec();
    let mut chosen = want.columns.clone();
    shown.sort();
    chosen.sort();
    if shown != chosen {
        return Err(format!("focus headers {:?} differ from C {:?}", focus.table.headers(), want.columns));
    }
    Ok(())
}

pub fn cost_case() -> impl Strategy<Value = (u64, u64, u64, u64, u64)> {
    (0u64..=1000, 0u64..=1000, 0u64..=1000, 0u64..=10_000, 0u64..=1000)
}

pub fn check_cost(k: u64, n: u64, e: u64, a: u64, b: u64) -> Result<(), String> {
    use tablemaster::eval::{predicted_cost, predicted_cost_half_units, CostObservation, CostTally};
    let oracle = cost_oracle_half_units(k, n, e, a, b);
    let half = predicted_cost_half_units(k, n, e, a, b) as u128;
    let float = predicted_cost(k as f64, n as f64, e as f64, a as f64, b as f64);
    let tally = CostTally::from_observation(CostObservation { k, n, e, a, b });
    if half != oracle {
        return Err(format!("half units {half} != oracle {oracle} for {:?}", (k, n, e, a, b)));
    }
    if float * 2.0 != oracle as f64 {
        return Err(format!("predicted {float} != oracle {}/2 for {:?}", oracle, (k, n, e, a, b)));
    }
    if tally.total_half_units().map(u128::from) != Some(oracle) {
        return Err(format!("tally {} != oracle {}/2 for {:?}", tally.total(), oracle, (k, n, e, a, b)));
    }
    Ok(())
}

const NAMES: &[&str] = &["apple", "Apple", "apricot", "banana", "Banana split", "cherry", "kiwi", "grape", ""];
const LIKE_PATTERNS: &[&str] = &["ap%", "%an%", "_iwi", "APPLE", "%", "b%t", "%e", "c_erry", "x%"];
const OPS: &[&str] = &["=", "!=", "<>", "<", "<=", ">", ">="];

fn quarter() -> impl Strategy<Value = f64> {
    (-200i32..200).prop_map(|n| {
        let n = if n % 4 == 0 { n + 1 } else { n };
        f64::from(n) / 4.0
    })
}

pub fn oracle_table() -> impl Strategy<Value = Vec<Vec<String>>> {
    (0usize..15).prop_flat_map(|m| {
        let row = (
            proptest::option::weighted(0.8, -50i64..50),
            proptest::sample::select(NAMES),
            proptest::option::weighted(0.8, quarter()),
        );
        (
            Just((0..m).collect::<Vec<usize>>()).prop_shuffle(),
            proptest::collection::vec(row, m),
            -50i64..50,
            quarter(),
        )
            .prop_map(|(ids, cells, first_score, first_price)| {
                cells
                    .into_iter()
                    .zip(ids)
                    .enumerate()
                    .map(|(i, ((score, name, price), id))| {
                        // Row 0 is never blank so every column keeps its type.
                        let score = if i == 0 { Some(first_score) } else { score };
                        let price = if i == 0 { Some(first_price) } else { price };
                        vec![
                            (id * 3).to_string(),
                            score.map_or(String::new(), |s| s.to_string()),
                            name.to_string(),
                            price.map_or(String::new(), |p| p.to_string()),
                        ]
                    })
                    .collect()
            })
    })
}

fn num_literal() -> impl Strategy<Value = f64> {
    prop_oneof![(-60i32..60).prop_map(f64::from), quarter()]
}

fn text_literal() -> impl Strategy<Value = Operand> {
    prop_oneof![
        proptest::sample::select(NAMES).prop_map(|s| Operand::Text(s.to_string())),
        Just(Operand::Text("b".into())),
        Just(Operand::Text("it's".into())),
    ]
}

const NUMERIC_COLUMNS: [usize; 3] = [0, 1, 3];

fn leaf() -> impl Strategy<Value = Pred> {
    let num_col = proptest::sample::select(&NUMERIC_COLUMNS[..]);
    let op = proptest::sample::select(OPS);
    prop_oneof![
        (num_col.clone(), op.clone(), num_literal())
            .prop_map(|(c, op, v)| Pred::Cmp(Operand::Col(c), op, Operand::Num(v))),
        (num_literal(), op.clone(), num_col.clone())
            .prop_map(|(v, op, c)| Pred::Cmp(Operand::Num(v), op, Operand::Col(c))),
        (num_col.clone(), op.clone(), num_col.clone())
            .prop_map(|(a, op, b)| Pred::Cmp(Operand::Col(a), op, Operand::Col(b))),
        (op, text_literal()).prop_map(|(op, v)| Pred::Cmp(Operand::Col(2), op, v)),
        (num_col.clone(), num_literal(), num_literal(), any::<bool>())
            .prop_map(|(c, lo, hi, neg)| Pred::Between(c, lo, hi, neg)),
        (num_col.clone(), proptest::collection::vec(num_literal().prop_map(Operand::Num), 1..4), any::<bool>())
            .prop_map(|(c, items, neg)| Pred::In(c, items, neg)),
        (proptest::collection::vec(text_literal(), 1..4), any::<bool>())
            .prop_map(|(items, neg)| Pred::In(2, items, neg)),
        (proptest::sample::select(LIKE_PATTERNS), any::<bool>())
            .prop_map(|(p, neg)| Pred::Like(2, p.to_string(), neg)),
        (0usize..4, any::<bool>()).prop_map(|(c, neg)| Pred::IsNull(c, neg)),
    ]
}

pub fn predicate() -> impl Strategy<Value = Pred> {
    leaf().prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Pred::And(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Pred::Or(Box::new(a), Box::new(b))),
            inner.prop_map(|a| Pred::Not(Box::new(a))),
        ]
    })
}

pub fn query() -> impl Strategy<Value = Query> {
    let select = proptest::sample::select(&["*", "*", "name", "id, score", "COUNT(*)", "SUM(score)", "MAX(\"Price ($)\")"][..]);
    let tail = prop_oneof![
        Just(Tail::None),
        (proptest::sample::select(&NUMERIC_COLUMNS[..]), any::<bool>()).prop_map(|(c, d)| Tail::OrderBy(c, d)),
        (any::<bool>(), 0usize..6, 0usize..4).prop_map(|(desc, limit, offset)| Tail::Limit { desc, limit, offset }),
    ];
    (select, proptest::option::weighted(0.9, predicate()), tail).prop_map(|(select, pred, tail)| Query { select, pred, tail })
}

pub fn check_sql(rows: &[Vec<String>], query: &Query) -> Result<(), String> {
    let table = Table::new(ORACLE_HEADERS.iter().map(|h| h.to_string()).collect(), rows.to_vec())
        .map_err(|e| e.to_string())?;
    let normalized = NormalizedTable::passthrough(table);
    if !rows.is_empty() {
        let kinds: Vec<Kind> = (0..4).map(|j| normalized.kind_of(j)).collect();
        if kinds != [Kind::Integer, Kind::Integer, Kind::Text, Kind::Decimal] {
            return Err(format!("unexpected column kinds {kinds:?}"));
        }
    }
    let sql = query.to_sql();
    let got = execute_row_lookup(&normalized, &sql).map_err(|e| format!("{sql}: {e}"))?;
    let want = query.oracle(rows);
    if got.indices != want {
        return Err(format!("{sql}\nrows {rows:?}\ngot {:?}, want {want:?}", got.indices));
    }
    if got.aggregate != query.is_aggregate() {
        return Err(format!("{sql}: aggregate flag {}", got.aggregate));
    }
    Ok(())
}

/// Tables whose cells mix numbers, dates, words and blanks.
pub fn messy_table(min_cols: usize, min_rows: usize) -> impl Strategy<Value = Table> {
    let cell = prop_oneof![
        3 => "[a-zA-Z ]{0,8}",
        2 => (-100_000i64..100_000).prop_map(|n| n.to_string()),
        1 => (1_000i64..10_000_000).prop_map(|n| {
            let s = n.to_string();
            let mut out = String::new();
            for (i, ch) in s.chars().enumerate() {
                if i > 0 && (s.len() - i) % 3 == 0 {
                    out.push(',');
                }
                out.push(ch);
            }
            out
        }),
        1 => (-1000i64..1000, 0u32..100).prop_map(|(a, b)| format!("{a}.{b:02}")),
        1 => (1900i32..2030, 1u32..=12, 1u32..=28).prop_map(|(y, m, d)| format!("{y}-{m:02}-{d:02}")),
        1 => (1900i32..2030, 0usize..12, 1u32..=28).prop_map(|(y, m, d)| {
            const MONTHS: [&str; 12] = ["January", "February", "March", "April", "May", "June", "July", "August", "September", "October", "November", "December"];
            format!("{} {d}, {y}", MONTHS[m])
        }),
        1 => Just(String::new()),
        1 => "\\$[0-9]{1,4}",
    ];
    (min_cols..=6, min_rows..=8).prop_flat_map(move |(n, m)| {
        (
            proptest::collection::vec("[A-Za-z][A-Za-z0-9 ]{0,6}", n),
            proptest::collection::vec(proptest::collection::vec(cell.clone(), n), m),
        )
            .prop_map(|(headers, rows)| Table::new(headers, rows).unwrap())
    })
}
