//! Content understanding: sufficiency checks, iterative focus reconstruction,
//! and verbalization of the final focus.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::gateway::{bindings, parse_bool, Gateway, TemplateId};
use crate::normalize::NormalizedTable;
use crate::sql::RowSet;
use crate::structure::{construct_focus, focus_hash, RankedColumns, TableOfFocus};
use crate::table::{render_markdown, Table, TableError};
use crate::trace::ReasoningTrace;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SufficiencyVerdict {
    pub sufficient: bool,
    pub raw_reply: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerbalizedTable {
    pub text: String,
    pub source_focus_hash: String,
    /// True when the text was generated mechanically instead of by the model.
    #[serde(default)]
    pub mechanical: bool,
}

/// Asks whether `focus` holds enough to answer `question`.
///
/// Unusable replies count as sufficient so reconstruction stops rather than
/// growing the focus on noise.
pub fn estimate_information(
    focus: &Table,
    question: &str,
    gateway: &Gateway,
    trace: &mut ReasoningTrace,
) -> SufficiencyVerdict {
    let reply = gateway.call(
        TemplateId::InformationEstimation,
        bindings([
            ("table", render_markdown(focus, false)),
            ("question", question.to_string()),
        ]),
        trace,
    );
    match reply {
        Ok(text) => match parse_bool(&text) {
            Ok(sufficient) => SufficiencyVerdict {
                sufficient,
                raw_reply: text,
            },
            Err(_) => {
                trace.warn("estimation", "unparseable sufficiency reply; treated as sufficient");
                SufficiencyVerdict {
                    sufficient: true,
                    raw_reply: text,
                }
            }
        },
        Err(e) => {
            trace.warn("estimation", format!("{e}; treated as sufficient"));
            SufficiencyVerdict {
                sufficient: true,
                raw_reply: String::new(),
            }
        }
    }
}

/// Grows the column selection from `initial` one ranked candidate at a time
/// until the model judges the focus sufficient or candidates run out.
pub fn reconstruct_focus(
    table: &NormalizedTable,
    question: &str,
    rows: &RowSet,
    initial: &[String],
    ranked: &RankedColumns,
    gateway: &Gateway,
    trace: &mut ReasoningTrace,
) -> Result<TableOfFocus, TableError> {
    let mut selected = initial.to_vec();
    let mut candidates: VecDeque<&String> = ranked
        .order
        .iter()
        .filter(|c| !initial.contains(c))
        .collect();
    let mut estimations = 0;
    loop {
        let mut focus = construct_focus(table, rows, &selected)?;
        let verdict = estimate_information(&focus.table, question, gateway, trace);
        estimations += 1;
        if verdict.sufficient || candidates.is_empty() {
            focus.initial_columns = initial.to_vec();
            focus.reconstruction_count = selected.len() - initial.len();
            focus.estimations = estimations;
            return Ok(focus);
        }
        let next = candidates.pop_front().expect("checked non-empty");
        selected.push(next.clone());
    }
}

/// Plain-text rendering used when the model gives nothing usable.
pub fn mechanical_verbalization(table: &Table) -> String {
    if table.row_count() == 0 {
        return format!(
            "The table has columns {} and no rows.",
            table.headers().join(", ")
        );
    }
    table
        .rows()
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let cells: Vec<String> = table
                .headers()
                .iter()
                .zip(row)
                .map(|(h, c)| format!("{h}={c}"))
                .collect();
            format!("Row {}: {}.", i + 1, cells.join("; "))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn verbalize(focus: &TableOfFocus, gateway: &Gateway, trace: &mut ReasoningTrace) -> VerbalizedTable {
    let source_focus_hash = focus_hash(&focus.table);
    let reply = gateway.call(
        TemplateId::Verbalization,
        bindings([("table", render_markdown(&focus.table, false))]),
        trace,
    );
    match reply {
        Ok(text) if !text.trim().is_empty() => VerbalizedTable {
            text: text.trim().to_string(),
            source_focus_hash,
            mechanical: false,
        },
        other => {
            let why = match other {
                Err(e) => e.to_string(),
                Ok(_) => "empty reply".to_string(),
            };
            trace.warn("verbalization", format!("{why}; using mechanical description"));
            VerbalizedTable {
                text: mechanical_verbalization(&focus.table),
                source_focus_hash,
                mechanical: true,
            }
        }
    }
}
