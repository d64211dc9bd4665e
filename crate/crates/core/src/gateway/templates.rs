use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("missing binding `{0}`")]
    MissingBinding(String),
    #[error("unknown binding `{0}`")]
    UnknownBinding(String),
    #[error("template `{id}` uses placeholder `{name}`, which this stage never binds")]
    UnsupportedPlaceholder { id: TemplateId, name: String },
    #[error("unterminated placeholder in template body at byte {0}")]
    Unterminated(usize),
    #[error("reading template `{path}`: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    StructureExtraction,
    ColumnRanking,
    ColumnLookup,
    RowLookupSql,
    Verbalization,
    InformationEstimation,
    StrategyAssessment,
    TextualReasoning,
    TextualGuidance,
    SymbolicReasoning,
    AnswerFormatting,
}

impl TemplateId {
    pub const ALL: [TemplateId; 11] = [
        TemplateId::StructureExtraction,
        TemplateId::ColumnRanking,
        TemplateId::ColumnLookup,
        TemplateId::RowLookupSql,
        TemplateId::Verbalization,
        TemplateId::InformationEstimation,
        TemplateId::StrategyAssessment,
        TemplateId::TextualReasoning,
        TemplateId::TextualGuidance,
        TemplateId::SymbolicReasoning,
        TemplateId::AnswerFormatting,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::StructureExtraction => "structure_extraction",
            TemplateId::ColumnRanking => "column_ranking",
            TemplateId::ColumnLookup => "column_lookup",
            TemplateId::RowLookupSql => "row_lookup_sql",
            TemplateId::Verbalization => "verbalization",
            TemplateId::InformationEstimation => "information_estimation",
            TemplateId::StrategyAssessment => "strategy_assessment",
            TemplateId::TextualReasoning => "textual_reasoning",
            TemplateId::TextualGuidance => "textual_guidance",
            TemplateId::SymbolicReasoning => "symbolic_reasoning",
            TemplateId::AnswerFormatting => "answer_formatting",
        }
    }

    /// Names the pipeline supplies when calling this template. A template body
    /// may use any subset of them.
    pub fn available_bindings(self) -> &'static [&'static str] {
        match self {
            TemplateId::StructureExtraction => &["table", "headers"],
            TemplateId::ColumnRanking | TemplateId::ColumnLookup => {
                &["table", "headers", "question", "max_columns"]
            }
            TemplateId::RowLookupSql => &["table", "schema", "question"],
            TemplateId::Verbalization => &["table"],
            TemplateId::InformationEstimation => &["table", "question"],
            TemplateId::StrategyAssessment | TemplateId::TextualGuidance => {
                &["table", "verbalized", "question"]
            }
            TemplateId::TextualReasoning => &["table", "verbalized", "question", "task_instruction"],
            TemplateId::SymbolicReasoning => &["table", "verbalized", "question", "guidance"],
            TemplateId::AnswerFormatting => &["table", "question", "reasoning", "task_instruction"],
        }
    }

    fn default_body(self) -> &'static str {
        match self {
            TemplateId::StructureExtraction => include_str!("../../templates/structure_extraction.txt"),
            TemplateId::ColumnRanking => include_str!("../../templates/column_ranking.txt"),
            TemplateId::ColumnLookup => include_str!("../../templates/column_lookup.txt"),
            TemplateId::RowLookupSql => include_str!("../../templates/row_lookup_sql.txt"),
            TemplateId::Verbalization => include_str!("../../templates/verbalization.txt"),
            TemplateId::InformationEstimation => {
                include_str!("../../templates/information_estimation.txt")
            }
            TemplateId::StrategyAssessment => include_str!("../../templates/strategy_assessment.txt"),
            TemplateId::TextualReasoning => include_str!("../../templates/textual_reasoning.txt"),
            TemplateId::TextualGuidance => include_str!("../../templates/textual_guidance.txt"),
            TemplateId::SymbolicReasoning => include_str!("../../templates/symbolic_reasoning.txt"),
            TemplateId::AnswerFormatting => include_str!("../../templates/answer_formatting.txt"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| format!("unknown template id `{s}`"))
    }
}

pub type Bindings = BTreeMap<String, String>;

/// Builds a binding map from `(name, value)` pairs.
pub fn bindings<K: Into<String>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> Bindings {
    pairs
        .into_iter()
        .map(|(k, v)| (k.into(), v.into()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Placeholder(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    id: TemplateId,
    body: String,
    segments: Vec<Segment>,
    required_bindings: BTreeSet<String>,
}

fn is_placeholder_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl PromptTemplate {
    /// Parses `{{name}}` placeholders out of `body`. Braces that do not form a
    /// valid placeholder name are kept literally.
    pub fn new(id: TemplateId, body: impl Into<String>) -> Result<Self, TemplateError> {
        let body = body.into();
        let mut segments = Vec::new();
        let mut literal = String::new();
        let mut rest = body.as_str();
        let mut offset = 0;
        while let Some(start) = rest.find("{{") {
            let after = &rest[start + 2..];
            let end = after
                .find("}}")
                .ok_or(TemplateError::Unterminated(offset + start))?;
            let name = after[..end].trim();
            literal.push_str(&rest[..start]);
            if is_placeholder_name(name) {
                if !literal.is_empty() {
                    segments.push(Segment::Literal(std::mem::take(&mut literal)));
                }
                segments.push(Segment::Placeholder(name.to_string()));
            } else {
                literal.push_str(&rest[start..start + 4 + end]);
            }
            offset += start + 4 + end;
            rest = &after[end + 2..];
        }
        literal.push_str(rest);
        if !literal.is_empty() {
            segments.push(Segment::Literal(literal));
        }
        let required_bindings = segments
            .iter()
            .filter_map(|s| match s {
                Segment::Placeholder(n) => Some(n.clone()),
                Segment::Literal(_) => None,
            })
            .collect();
        Ok(Self {
            id,
            body,
            segments,
            required_bindings,
        })
    }

    pub fn id(&self) -> TemplateId {
        self.id
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn required_bindings(&self) -> &BTreeSet<String> {
        &self.required_bindings
    }
}

pub fn render_prompt(template: &PromptTemplate, bindings: &Bindings) -> Result<String, TemplateError> {
    if let Some(missing) = template
        .required_bindings
        .iter()
        .find(|n| !bindings.contains_key(*n))
    {
        return Err(TemplateError::MissingBinding(missing.clone()));
    }
    if let Some(extra) = bindings
        .keys()
        .find(|k| !template.required_bindings.contains(*k))
    {
        return Err(TemplateError::UnknownBinding(extra.clone()));
    }
    let mut out = String::with_capacity(template.body.len());
    for seg in &template.segments {
        match seg {
            Segment::Literal(s) => out.push_str(s),
            Segment::Placeholder(n) => out.push_str(&bindings[n]),
        }
    }
    Ok(out)
}

/// One template per [`TemplateId`]; defaults ship with the crate.
#[derive(Debug, Clone)]
pub struct TemplateRegistry {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        let templates = TemplateId::ALL
            .into_iter()
            .map(|id| {
                let t = PromptTemplate::new(id, id.default_body()).expect("bundled template parses");
                (id, t)
            })
            .collect();
        Self { templates }
    }
}

impl TemplateRegistry {
    /// Defaults overridden by any `<id>.txt` files present in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut registry = Self::default();
        for id in TemplateId::ALL {
            let path = dir.join(format!("{}.txt", id.as_str()));
            if !path.exists() {
                continue;
            }
            let body = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            registry.insert(PromptTemplate::new(id, body)?)?;
        }
        Ok(registry)
    }

    pub fn insert(&mut self, template: PromptTemplate) -> Result<(), TemplateError> {
        let id = template.id();
        if let Some(name) = template
            .required_bindings
            .iter()
            .find(|n| !id.available_bindings().contains(&n.as_str()))
        {
            return Err(TemplateError::UnsupportedPlaceholder {
                id,
                name: name.clone(),
            });
        }
        self.templates.insert(id, template);
        Ok(())
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }
}
