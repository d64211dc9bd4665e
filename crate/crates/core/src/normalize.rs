//! Wild-table normalization: orientation detection, column typing and
//! canonicalization of numeric and date cells.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::table::{transpose, Table};

/// Minimum parse ratio for a column to be typed.
pub const KIND_THRESHOLD: f64 = 0.8;
/// Minimum parse ratio for a column to count as mixed rather than text.
pub const MIXED_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Integer,
    Decimal,
    Date,
    Text,
    Mixed,
}

impl Kind {
    pub fn is_numeric(self) -> bool {
        matches!(self, Kind::Integer | Kind::Decimal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnKind {
    pub kind: Kind,
    pub parse_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationValue {
    RowMajor,
    ColumnMajor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Orientation {
    pub value: OrientationValue,
    pub confidence: f64,
}

/// What normalization did to one output column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnProvenance {
    pub column: String,
    pub kind: Kind,
    /// Cells rewritten into canonical form.
    pub canonicalized: usize,
    /// Row indices of non-empty cells left verbatim in a typed column.
    pub unparsed_rows: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedTable {
    pub table: Table,
    pub column_kinds: Vec<ColumnKind>,
    pub transposed: bool,
    pub provenance: Vec<ColumnProvenance>,
}

impl NormalizedTable {
    /// Types the columns of `table` without rewriting anything.
    pub fn passthrough(table: Table) -> Self {
        let table = table.with_unique_headers();
        let column_kinds = column_kinds(&table);
        let provenance = table
            .headers()
            .iter()
            .zip(&column_kinds)
            .map(|(h, k)| ColumnProvenance {
                column: h.clone(),
                kind: k.kind,
                canonicalized: 0,
                unparsed_rows: Vec::new(),
                notes: vec!["normalization bypassed".into()],
            })
            .collect();
        Self {
            table,
            column_kinds,
            transposed: false,
            provenance,
        }
    }

    pub fn kind_of(&self, column: usize) -> Kind {
        self.column_kinds[column].kind
    }
}

fn column_kinds(table: &Table) -> Vec<ColumnKind> {
    (0..table.column_count())
        .map(|j| {
            let cells: Vec<&str> = table.column(j).collect();
            infer_column_kind(&cells)
        })
        .collect()
}

/// A number in canonical form: no separators or currency, `.` as the decimal point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedNumber {
    pub canonical: String,
    pub is_integer: bool,
}

const CURRENCY: &[char] = &['$', '€', '£', '¥', '₹'];

pub fn parse_number(cell: &str) -> Option<ParsedNumber> {
    let mut s = cell.trim();
    let mut negative = false;
    let mut take_sign = |s: &mut &str| {
        if let Some(rest) = s.strip_prefix('-') {
            negative = !negative;
            *s = rest.trim_start();
        } else if let Some(rest) = s.strip_prefix('+') {
            *s = rest.trim_start();
        }
    };
    take_sign(&mut s);
    if let Some(rest) = s.strip_prefix(CURRENCY) {
        s = rest.trim_start();
        take_sign(&mut s);
    } else if let Some(rest) = s.strip_suffix(CURRENCY) {
        s = rest.trim_end();
    }
    if s.is_empty() {
        return None;
    }

    let (int_part, frac_part) = match s.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (s, None),
    };
    let int_digits = if int_part.contains(',') {
        let groups: Vec<&str> = int_part.split(',').collect();
        let first_ok = (1..=3).contains(&groups[0].len());
        let rest_ok = groups[1..].iter().all(|g| g.len() == 3);
        if !first_ok || !rest_ok {
            return None;
        }
        groups.concat()
    } else {
        int_part.to_string()
    };
    if !int_digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let frac = match frac_part {
        Some(f) if !f.chars().all(|c| c.is_ascii_digit()) => return None,
        Some(f) => f,
        None => "",
    };
    if int_digits.is_empty() && frac.is_empty() {
        return None;
    }

    let mut canonical = String::new();
    let is_zero = int_digits.chars().chain(frac.chars()).all(|c| c == '0');
    if negative && !is_zero {
        canonical.push('-');
    }
    canonical.push_str(if int_digits.is_empty() { "0" } else { &int_digits });
    if !frac.is_empty() {
        canonical.push('.');
        canonical.push_str(frac);
    }
    Some(ParsedNumber {
        canonical,
        is_integer: frac.is_empty(),
    })
}

/// Numeric value of a cell, if it parses as a number.
pub fn numeric_value(cell: &str) -> Option<f64> {
    parse_number(cell).and_then(|n| n.canonical.parse().ok())
}

fn month_from_name(word: &str) -> Option<u32> {
    let w = word.trim_end_matches('.').to_ascii_lowercase();
    const MONTHS: [&str; 12] = [
        "january",
        "february",
        "march",
        "april",
        "may",
        "june",
        "july",
        "august",
        "september",
        "october",
        "november",
        "december",
    ];
    if w.len() < 3 {
        return None;
    }
    if w == "sept" {
        return Some(9);
    }
    MONTHS
        .iter()
        .position(|m| *m == w || (w.len() == 3 && m.starts_with(&w)))
        .map(|i| i as u32 + 1)
}

fn ymd(year: &str, month: u32, day: &str) -> Option<NaiveDate> {
    if year.len() != 4 || !(1..=2).contains(&day.len()) {
        return None;
    }
    NaiveDate::from_ymd_opt(year.parse().ok()?, month, day.parse().ok()?)
}

/// Whether a numeric `a/b/yyyy` date was read as month-first despite both
/// readings being valid.
fn numeric_date_ambiguous(cell: &str) -> bool {
    let parts: Vec<&str> = cell.trim().split(['/', '-', '.']).collect();
    if parts.len() != 3 || parts[0].len() > 2 {
        return false;
    }
    match (parts[0].parse::<u32>(), parts[1].parse::<u32>()) {
        (Ok(a), Ok(b)) => a != b && a <= 12 && b <= 12,
        _ => false,
    }
}

/// Parses month-name, `Y-M-D` and `M/D/Y` (or `D/M/Y` when the first field
/// exceeds 12) dates.
pub fn parse_date(cell: &str) -> Option<NaiveDate> {
    let s = cell.trim();
    if s.is_empty() {
        return None;
    }

    let numeric: Vec<&str> = s.split(['/', '-', '.']).collect();
    if numeric.len() == 3 && numeric.iter().all(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_digit())) {
        if numeric[0].len() == 4 {
            let month: u32 = numeric[1].parse().ok()?;
            if numeric[1].len() > 2 {
                return None;
            }
            return ymd(numeric[0], month, numeric[2]);
        }
        if numeric[0].len() <= 2 && numeric[1].len() <= 2 {
            let a: u32 = numeric[0].parse().ok()?;
            let b: u32 = numeric[1].parse().ok()?;
            let (month, day) = if a > 12 { (b, numeric[0]) } else { (a, numeric[1]) };
            return ymd(numeric[2], month, day);
        }
        return None;
    }

    let words: Vec<&str> = s
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|w| !w.is_empty())
        .collect();
    if words.len() != 3 {
        return None;
    }
    let day_of = |w: &str| -> String {
        let w = w.to_ascii_lowercase();
        ["st", "nd", "rd", "th"]
            .iter()
            .find_map(|suf| w.strip_suffix(suf).map(str::to_string))
            .unwrap_or(w)
    };
    if let Some(month) = month_from_name(words[0]) {
        return ymd(words[2], month, &day_of(words[1]));
    }
    if let Some(month) = month_from_name(words[1]) {
        return ymd(words[2], month, &day_of(words[0]));
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CellClass {
    Number,
    Date,
    Text,
}

fn classify(cell: &str) -> Option<CellClass> {
    if cell.trim().is_empty() {
        None
    } else if parse_number(cell).is_some() {
        Some(CellClass::Number)
    } else if parse_date(cell).is_some() {
        Some(CellClass::Date)
    } else {
        Some(CellClass::Text)
    }
}

/// Whether the non-empty cells (at least two) share one class.
fn homogeneous<'a>(cells: impl Iterator<Item = &'a str>) -> bool {
    let classes: Vec<CellClass> = cells.filter_map(classify).collect();
    classes.len() >= 2 && classes.iter().all(|c| *c == classes[0])
}

/// Compares the body (data cells minus the first column) read by columns
/// against the same body read by rows. Headers and the first column are left
/// out, so transposing swaps the two scores exactly and a second pass never
/// flips the table back.
pub fn detect_orientation(table: &Table) -> Orientation {
    let default = Orientation {
        value: OrientationValue::RowMajor,
        confidence: 0.5,
    };
    let (m, n) = (table.row_count(), table.column_count());
    if m < 1 || n < 2 {
        return default;
    }
    let by_columns = (1..n).filter(|&j| homogeneous(table.column(j))).count() as f64 / (n - 1) as f64;
    let by_rows = table
        .rows()
        .iter()
        .filter(|r| homogeneous(r[1..].iter().map(String::as_str)))
        .count() as f64
        / m as f64;
    Orientation {
        value: if by_rows > by_columns {
            OrientationValue::ColumnMajor
        } else {
            OrientationValue::RowMajor
        },
        confidence: 0.5 + (by_columns - by_rows).abs() / 2.0,
    }
}

/// Blank cells carry no type evidence and are left out of the ratio.
pub fn infer_column_kind(cells: &[&str]) -> ColumnKind {
    let cells: Vec<&str> = cells.iter().copied().filter(|c| !c.trim().is_empty()).collect();
    if cells.is_empty() {
        return ColumnKind {
            kind: Kind::Text,
            parse_ratio: 0.0,
        };
    }
    let total = cells.len() as f64;
    let mut integer = 0usize;
    let mut decimal = 0usize;
    let mut date = 0usize;
    for &cell in &cells {
        if let Some(n) = parse_number(cell) {
            decimal += 1;
            if n.is_integer {
                integer += 1;
            }
        } else if parse_date(cell).is_some() {
            date += 1;
        }
    }
    // Ties resolve in this order.
    let ranked = [
        (Kind::Integer, integer),
        (Kind::Decimal, decimal),
        (Kind::Date, date),
    ];
    let (best_kind, best_count) = ranked
        .iter()
        .copied()
        .fold((Kind::Integer, 0usize), |best, cur| if cur.1 > best.1 { cur } else { best });
    let parse_ratio = best_count as f64 / total;
    let kind = if parse_ratio >= KIND_THRESHOLD {
        best_kind
    } else if parse_ratio >= MIXED_THRESHOLD {
        Kind::Mixed
    } else {
        Kind::Text
    };
    ColumnKind { kind, parse_ratio }
}

pub fn normalize(table: &Table) -> NormalizedTable {
    let orientation = detect_orientation(table);
    let (oriented, transposed) = match orientation.value {
        OrientationValue::ColumnMajor => match transpose(table) {
            Ok(t) => (t, true),
            Err(_) => (table.clone(), false),
        },
        OrientationValue::RowMajor => (table.clone(), false),
    };
    let oriented = oriented.with_unique_headers();

    let kinds = column_kinds(&oriented);
    let mut provenance: Vec<ColumnProvenance> = oriented
        .headers()
        .iter()
        .zip(&kinds)
        .map(|(h, k)| ColumnProvenance {
            column: h.clone(),
            kind: k.kind,
            canonicalized: 0,
            unparsed_rows: Vec::new(),
            notes: Vec::new(),
        })
        .collect();
    if transposed {
        for p in &mut provenance {
            p.notes.push(format!(
                "table transposed from column-major (confidence {:.2})",
                orientation.confidence
            ));
        }
    }

    let mut ambiguous = vec![false; kinds.len()];
    let rows = oriented
        .rows()
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, cell)| {
                    let rewritten = match kinds[j].kind {
                        Kind::Integer | Kind::Decimal => parse_number(cell).map(|n| n.canonical),
                        Kind::Date => parse_date(cell).map(|d| {
                            ambiguous[j] |= numeric_date_ambiguous(cell);
                            d.format("%Y-%m-%d").to_string()
                        }),
                        Kind::Text | Kind::Mixed => return cell.clone(),
                    };
                    match rewritten {
                        Some(v) => {
                            if v != *cell {
                                provenance[j].canonicalized += 1;
                            }
                            v
                        }
                        None => {
                            if !cell.trim().is_empty() {
                                provenance[j].unparsed_rows.push(i);
                            }
                            cell.clone()
                        }
                    }
                })
                .collect()
        })
        .collect();
    for (p, amb) in provenance.iter_mut().zip(ambiguous) {
        if amb {
            p.notes.push("ambiguous numeric dates read as month/day/year".into());
        }
    }

    let mut table_out = Table::new(oriented.headers().to_vec(), rows)
        .expect("canonicalization preserves shape");
    if let Some(name) = oriented.name() {
        table_out = table_out.with_name(name);
    }
    NormalizedTable {
        table: table_out,
        column_kinds: kinds,
        transposed,
        provenance,
    }
}
