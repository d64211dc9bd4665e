use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::reasoning::TaskKind;
use crate::table::{json_cell, parse_table, table_from_json, Table, TableFormat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalInstance {
    pub id: String,
    pub table: Table,
    pub question: String,
    pub gold_answers: Vec<String>,
    pub task_kind: TaskKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// One JSON object per line: `id`, `table` (`header`/`rows`), `question`,
    /// `answers`, and optionally `task`.
    Jsonl,
    /// WikiTableQuestions `data/*.tsv` with `id`, `utterance`, `context`, `targetValue`.
    WikitqTsv,
    /// TabFact statement file mapping table ids to `[statements, labels, caption]`.
    TabfactJson,
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(Self::Jsonl),
            "wikitq-tsv" => Ok(Self::WikitqTsv),
            "tabfact-json" => Ok(Self::TabfactJson),
            other => Err(format!("unknown dataset format `{other}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("dataset format error: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub instances: Vec<EvalInstance>,
    /// Malformed records left out.
    pub skipped: usize,
}

fn read(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|e| DatasetError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<LoadedDataset, DatasetError> {
    let text = read(path)?;
    let (instances, skipped) = match format {
        DatasetFormat::Jsonl => load_jsonl(&text),
        DatasetFormat::WikitqTsv => load_wikitq(&text, path),
        DatasetFormat::TabfactJson => load_tabfact(&text, path)?,
    };
    if instances.is_empty() {
        return Err(DatasetError::Format(format!(
            "no instances loaded from {} ({skipped} malformed records)",
            path.display()
        )));
    }
    Ok(LoadedDataset { instances, skipped })
}

fn instance_from_json(v: &Value) -> Option<EvalInstance> {
    let id = v.get("id").map(json_cell)?;
    let question = v.get("question")?.as_str()?.to_string();
    let table = table_from_json(v.get("table")?, true).ok()?;
    let gold_answers: Vec<String> = v.get("answers")?.as_array()?.iter().map(json_cell).collect();
    let task_kind = match v.get("task").and_then(Value::as_str) {
        Some(t) => t.parse().ok()?,
        None => TaskKind::Qa,
    };
    if id.is_empty() || gold_answers.is_empty() {
        return None;
    }
    if task_kind == TaskKind::FactVerification
        && !gold_answers.iter().all(|g| g == "True" || g == "False")
    {
        return None;
    }
    Some(EvalInstance {
        id,
        table,
        question,
        gold_answers,
        task_kind,
    })
}

fn load_jsonl(text: &str) -> (Vec<EvalInstance>, usize) {
    let mut instances = Vec::new();
    let mut skipped = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str::<Value>(line).ok().as_ref().and_then(instance_from_json) {
            Some(i) => instances.push(i),
            None => skipped += 1,
        }
    }
    (instances, skipped)
}

/// Finds `relative` next to the dataset file or one directory up.
fn resolve(dataset: &Path, relative: &str) -> Option<PathBuf> {
    let dir = dataset.parent()?;
    [dir.join(relative), dir.parent()?.join(relative)]
        .into_iter()
        .find(|p| p.is_file())
}

fn load_wikitq(text: &str, path: &Path) -> (Vec<EvalInstance>, usize) {
    let mut instances = Vec::new();
    let mut skipped = 0;
    let mut lines = text.lines();
    let Some(header) = lines.next() else {
        return (instances, 0);
    };
    let cols: Vec<&str> = header.split('\t').collect();
    let find = |name: &str| cols.iter().position(|c| *c == name);
    let (Some(id_i), Some(q_i), Some(ctx_i), Some(a_i)) =
        (find("id"), find("utterance"), find("context"), find("targetValue"))
    else {
        return (instances, text.lines().count().saturating_sub(1));
    };
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split('\t').collect();
        let get = |i: usize| fields.get(i).copied();
        let parsed = (|| {
            let table_path = resolve(path, get(ctx_i)?)?;
            let table = parse_table(&fs::read_to_string(table_path).ok()?, TableFormat::Csv, true).ok()?;
            let answer = get(a_i)?.to_string();
            if answer.is_empty() {
                return None;
            }
            Some(EvalInstance {
                id: get(id_i)?.to_string(),
                table,
                question: get(q_i)?.to_string(),
                gold_answers: vec![answer],
                task_kind: TaskKind::Qa,
            })
        })();
        match parsed {
            Some(i) => instances.push(i),
            None => skipped += 1,
        }
    }
    (instances, skipped)
}

fn read_hash_table(path: &Path) -> Option<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'#')
        .has_headers(false)
        .flexible(false)
        .from_path(path)
        .ok()?;
    let mut records = reader.records();
    let headers: Vec<String> = records.next()?.ok()?.iter().map(str::to_string).collect();
    let rows = records
        .map(|r| r.ok().map(|r| r.iter().map(str::to_string).collect()))
        .collect::<Option<Vec<Vec<String>>>>()?;
    Table::new(headers, rows).ok()
}

fn load_tabfact(text: &str, path: &Path) -> Result<(Vec<EvalInstance>, usize), DatasetError> {
    let root: Value = serde_json::from_str(text).map_err(|e| DatasetError::Format(e.to_string()))?;
    let Some(map) = root.as_object() else {
        return Err(DatasetError::Format("expected an object keyed by table id".into()));
    };
    let mut instances = Vec::new();
    let mut skipped = 0;
    for (table_id, entry) in map {
        let statements = entry.get(0).and_then(Value::as_array);
        let labels = entry.get(1).and_then(Value::as_array);
        let table = resolve(path, &format!("all_csv/{table_id}")).and_then(|p| read_hash_table(&p));
        let (Some(statements), Some(labels), Some(table)) = (statements, labels, table) else {
            skipped += entry.get(0).and_then(Value::as_array).map_or(1, Vec::len).max(1);
            continue;
        };
        for (i, statement) in statements.iter().enumerate() {
            let label = labels.get(i).and_then(Value::as_i64);
            match (statement.as_str(), label) {
                (Some(s), Some(l @ (0 | 1))) => instances.push(EvalInstance {
                    id: format!("{table_id}#{i}"),
                    table: table.clone(),
                    question: s.to_string(),
                    gold_answers: vec![if l == 1 { "True" } else { "False" }.to_string()],
                    task_kind: TaskKind::FactVerification,
                }),
                _ => skipped += 1,
            }
        }
    }
    Ok((instances, skipped))
}
