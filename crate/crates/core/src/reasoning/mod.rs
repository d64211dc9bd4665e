//! Answering over the table-of-focus: strategy choice, textual or
//! program-based reasoning, answer formatting, and the fallback ladder.

mod executor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use executor::{
    execute_program, ExecError, ExecutionResult, Executor, ExecutorProfile, GRACE, QUESTION_VAR,
    TABLE_FILE, TABLE_PATH_VAR,
};

use crate::content::VerbalizedTable;
use crate::gateway::{bindings, extract_code_block, parse_choice, Choice, Gateway, LmError, TemplateId};
use crate::normalize::NormalizedTable;
use crate::structure::{focus_hash, TableOfFocus};
use crate::table::{render_markdown, Table};
use crate::trace::{Fallback, ReasoningTrace};

pub const DEFAULT_GUIDANCE: &str = "Answer step by step.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Textual,
    Symbolic,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Textual => "textual",
            Strategy::Symbolic => "symbolic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[default]
    Qa,
    FactVerification,
}

impl TaskKind {
    pub fn instruction(self) -> &'static str {
        match self {
            TaskKind::Qa => "Answer the question using only the table.",
            TaskKind::FactVerification => {
                "The question is a statement about the table. Decide whether it is True or False; the answer must be True or False."
            }
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "qa" => Ok(TaskKind::Qa),
            "fact_verification" | "fact-verification" | "fv" => Ok(TaskKind::FactVerification),
            other => Err(format!("unknown task kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guidance(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub value: String,
    pub task_kind: TaskKind,
    pub abstained: bool,
}

impl Answer {
    pub fn abstain(task_kind: TaskKind) -> Self {
        Self {
            value: String::new(),
            task_kind,
            abstained: true,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnswerError {
    #[error("formatted answer is empty")]
    EmptyAnswer,
}

/// Which table the reasoning prompts see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasoningTable {
    #[default]
    Focus,
    Full,
}

impl std::str::FromStr for ReasoningTable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "focus" => Ok(Self::Focus),
            "full" => Ok(Self::Full),
            other => Err(format!("unknown reasoning table `{other}`")),
        }
    }
}

fn strategy_choices() -> [Choice; 2] {
    [
        Choice::new("textual").with_synonyms([
            "text",
            "direct information retrieval",
            "chain of thought",
            "chain-of-thought",
        ]),
        Choice::new("symbolic").with_synonyms([
            "complex calculation",
            "program",
            "python",
            "code",
            "sql",
        ]),
    ]
}

fn reasoning_bindings(table: &Table, verbal: &VerbalizedTable, question: &str) -> Vec<(&'static str, String)> {
    vec![
        ("table", render_markdown(table, false)),
        ("verbalized", verbal.text.clone()),
        ("question", question.to_string()),
    ]
}

pub fn assess_strategy(
    table: &Table,
    verbal: &VerbalizedTable,
    question: &str,
    gateway: &Gateway,
    trace: &mut ReasoningTrace,
) -> Strategy {
    let reply = gateway.call(
        TemplateId::StrategyAssessment,
        bindings(reasoning_bindings(table, verbal, question)),
        trace,
    );
    let choices = strategy_choices();
    let parsed = match &reply {
        Ok(text) => parse_choice(text, &choices).ok(),
        Err(_) => None,
    };
    match parsed {
        Some(c) if c.label == "symbolic" => Strategy::Symbolic,
        Some(_) => Strategy::Textual,
        None => {
            let why = match reply {
                Err(e) => e.to_string(),
                Ok(_) => "unparseable strategy reply".into(),
            };
            trace.warn("strategy", format!("{why}; defaulting to textual"));
            Strategy::Textual
        }
    }
}

pub fn textual_reasoning(
    table: &Table,
    verbal: &VerbalizedTable,
    question: &str,
    task_kind: TaskKind,
    gateway: &Gateway,
    trace: &mut ReasoningTrace,
) -> Result<String, LmError> {
    let mut b = reasoning_bindings(table, verbal, question);
    b.push(("task_instruction", task_kind.instruction().to_string()));
    gateway.call(TemplateId::TextualReasoning, bindings(b), trace)
}

pub fn generate_guidance(
    table: &Table,
    verbal: &VerbalizedTable,
    question: &str,
    gateway: &Gateway,
    trace: &mut ReasoningTrace,
) -> Guidance {
    let reply = gateway.call(
        TemplateId::TextualGuidance,
        bindings(reasoning_bindings(table, verbal, question)),
        trace,
    );
    match reply {
        Ok(text) if !text.trim().is_empty() => Guidance(text.trim().to_string()),
        other => {
            let why = match other {
                Err(e) => e.to_string(),
                Ok(_) => "empty guidance".into(),
            };
            trace.warn("guidance", format!("{why}; using default guidance"));
            Guidance(DEFAULT_GUIDANCE.into())
        }
    }
}

pub fn symbolic_reasoning(
    table: &Table,
    verbal: &VerbalizedTable,
    question: &str,
    guidance: &Guidance,
    gateway: &Gateway,
    trace: &mut ReasoningTrace,
) -> Result<String, LmError> {
    let mut b = reasoning_bindings(table, verbal, question);
    b.push(("guidance", guidance.0.clone()));
    gateway
        .call(TemplateId::SymbolicReasoning, bindings(b), trace)
        .map(|reply| extract_code_block(&reply))
}

const ABSTENTIONS: &[&str] = &[
    "cannot answer",
    "can't answer",
    "cannot be answered",
    "cannot be determined",
    "can't be determined",
    "unable to answer",
    "unable to determine",
    "not in the table",
    "not contain",
    "doesn't contain",
    "not enough information",
    "insufficient information",
    "no answer",
    "not available",
    "not provided",
    "not mentioned",
];

pub fn is_abstention(text: &str) -> bool {
    let lowered = text.to_lowercase();
    ABSTENTIONS.iter().any(|p| lowered.contains(p))
}

/// Pulls the answer out of a reply: the text after the last `Answer:` marker
/// if there is one, otherwise the first non-empty line.
fn extract_answer_text(reply: &str) -> String {
    let lowered = reply.to_lowercase();
    let tail = match lowered.rfind("answer:") {
        Some(pos) => &reply[pos + "answer:".len()..],
        None => reply,
    };
    tail.lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("")
        .trim_matches(|c: char| c == '*' || c == '`')
        .trim()
        .to_string()
}

fn verdict_choices() -> [Choice; 2] {
    [
        Choice::new("True").with_synonyms(["yes", "correct", "holds", "supported", "entailed", "right"]),
        Choice::new("False").with_synonyms([
            "no",
            "incorrect",
            "not hold",
            "does not hold",
            "refuted",
            "wrong",
            "not supported",
        ]),
    ]
}

pub fn format_answer(
    table: &Table,
    question: &str,
    raw: &str,
    task_kind: TaskKind,
    gateway: &Gateway,
    trace: &mut ReasoningTrace,
) -> Result<Answer, AnswerError> {
    let reply = gateway.call(
        TemplateId::AnswerFormatting,
        bindings([
            ("table", render_markdown(table, false)),
            ("question", question.to_string()),
            ("reasoning", raw.to_string()),
            ("task_instruction", task_kind.instruction().to_string()),
        ]),
        trace,
    );
    let formatted = match reply {
        Ok(text) if !text.trim().is_empty() => extract_answer_text(&text),
        other => {
            let why = match other {
                Err(e) => e.to_string(),
                Ok(_) => "empty formatting reply".into(),
            };
            trace.warn("formatting", format!("{why}; extracting the answer from the raw reasoning"));
            extract_answer_text(raw)
        }
    };
    if formatted.is_empty() {
        return Err(AnswerError::EmptyAnswer);
    }
    if is_abstention(&formatted) {
        return Ok(Answer::abstain(task_kind));
    }
    let value = match task_kind {
        TaskKind::Qa => formatted,
        TaskKind::FactVerification => {
            let choices = verdict_choices();
            match parse_choice(&formatted, &choices).or_else(|_| parse_choice(raw, &choices)) {
                Ok(c) => c.label.clone(),
                Err(_) => {
                    trace.warn("formatting", format!("`{formatted}` is not a verdict"));
                    return Ok(Answer::abstain(task_kind));
                }
            }
        }
    };
    Ok(Answer {
        value,
        task_kind,
        abstained: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningOptions {
    pub full_table_fallback: bool,
    pub reasoning_table: ReasoningTable,
}

impl Default for ReasoningOptions {
    fn default() -> Self {
        Self {
            full_table_fallback: true,
            reasoning_table: ReasoningTable::Focus,
        }
    }
}

fn textual_answer(
    table: &Table,
    verbal: &VerbalizedTable,
    question: &str,
    task_kind: TaskKind,
    gateway: &Gateway,
    trace: &mut ReasoningTrace,
) -> Answer {
    let raw = match textual_reasoning(table, verbal, question, task_kind, gateway, trace) {
        Ok(raw) if !raw.trim().is_empty() => raw,
        Ok(_) => {
            trace.warn("reasoning", "empty reasoning reply");
            return Answer::abstain(task_kind);
        }
        Err(e) => {
            trace.warn("reasoning", e.to_string());
            return Answer::abstain(task_kind);
        }
    };
    format_answer(table, question, &raw, task_kind, gateway, trace).unwrap_or_else(|e| {
        trace.warn("formatting", e.to_string());
        Answer::abstain(task_kind)
    })
}

/// Runs the program path. `Err` carries the reason for falling back.
fn symbolic_answer(
    table: &Table,
    verbal: &VerbalizedTable,
    question: &str,
    task_kind: TaskKind,
    gateway: &Gateway,
    executor: &Executor,
    trace: &mut ReasoningTrace,
) -> Result<Answer, String> {
    let guidance = generate_guidance(table, verbal, question, gateway, trace);
    trace.guidance = Some(guidance.0.clone());
    let program = symbolic_reasoning(table, verbal, question, &guidance, gateway, trace)
        .map_err(|e| format!("program generation failed: {e}"))?;
    if program.trim().is_empty() {
        return Err("program generation returned nothing".into());
    }
    trace.program = Some(program.clone());
    let outcome = executor.run(&program, table, question);
    trace.execution = match &outcome {
        Ok(r) => Some(r.clone()),
        Err(e) => e.result().cloned(),
    };
    let result = outcome.map_err(|e| e.to_string())?;
    let line = result.answer_line().expect("checked by executor").to_string();
    format_answer(table, question, &line, task_kind, gateway, trace).map_err(|e| e.to_string())
}

/// Full reasoning stage with its fallbacks.
///
/// Program failures fall back to textual reasoning on the same inputs. An
/// abstention, or a focus with no rows, triggers one textual retry over the
/// full normalized table with the verbalized focus as extra context.
pub fn answer_adaptive(
    table: &NormalizedTable,
    focus: &TableOfFocus,
    verbal: &VerbalizedTable,
    question: &str,
    task_kind: TaskKind,
    options: ReasoningOptions,
    gateway: &Gateway,
    executor: &Executor,
    trace: &mut ReasoningTrace,
) -> Answer {
    if verbal.source_focus_hash != focus_hash(&focus.table) {
        trace.warn("reasoning", "verbalization was produced from a different focus");
    }
    let reasoning_table = match options.reasoning_table {
        ReasoningTable::Focus => &focus.table,
        ReasoningTable::Full => &table.table,
    };
    let empty_focus = focus.table.row_count() == 0;

    let answer = if empty_focus && options.full_table_fallback {
        None
    } else {
        let strategy = assess_strategy(reasoning_table, verbal, question, gateway, trace);
        trace.strategy = Some(strategy);
        let answer = match strategy {
            Strategy::Textual => textual_answer(reasoning_table, verbal, question, task_kind, gateway, trace),
            Strategy::Symbolic => {
                match symbolic_answer(reasoning_table, verbal, question, task_kind, gateway, executor, trace) {
                    Ok(a) => a,
                    Err(reason) => {
                        trace.fallback(Fallback::Textual, reason);
                        textual_answer(reasoning_table, verbal, question, task_kind, gateway, trace)
                    }
                }
            }
        };
        Some(answer)
    };

    match answer {
        Some(a) if !a.abstained || !options.full_table_fallback => a,
        other => {
            let reason = if other.is_none() {
                "table-of-focus has no rows"
            } else {
                "answer over the table-of-focus abstained"
            };
            trace.fallback(Fallback::FullTableRetry, reason);
            textual_answer(&table.table, verbal, question, task_kind, gateway, trace)
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gateway::{ScriptedBackend, TemplateRegistry};
    use crate::sql::RowSet;
    use crate::structure::construct_focus;

    fn gw(backend: ScriptedBackend) -> Gateway {
        Gateway::new(TemplateRegistry::default(), Arc::new(backend))
    }

    fn verbal(focus: &TableOfFocus) -> VerbalizedTable {
        VerbalizedTable {
            text: "desc".into(),
            source_focus_hash: focus.hash(),
            mechanical: false,
        }
    }

    fn riders() -> (NormalizedTable, TableOfFocus) {
        let t = NormalizedTable::passthrough(Table::from_rows(
            ["Rider", "Country", "Wins"],
            [
                ["Tom Boonen", "Belgium", "3"],
                ["Fabian Cancellara", "Switzerland", "2"],
                ["Philippe Gilbert", "Belgium", "4"],
            ],
        ));
        let rows = RowSet::all(3, "", "");
        let f = construct_focus(&t, &rows, t.table.headers()).unwrap();
        (t, f)
    }

    #[test]
    fn strategy_parsing() {
        let (_, f) = riders();
        let v = verbal(&f);
        let mut trace = ReasoningTrace::default();
        for (reply, want) in [
            ("complex calculation over many rows", Strategy::Symbolic),
            ("direct information retrieval", Strategy::Textual),
            ("Symbolic.", Strategy::Symbolic),
            ("qwerty", Strategy::Textual),
        ] {
            let g = gw(ScriptedBackend::new().reply(TemplateId::StrategyAssessment, reply));
            assert_eq!(assess_strategy(&f.table, &v, "q", &g, &mut trace), want, "{reply}");
        }
    }

    #[test]
    fn guidance_and_program() {
        let (_, f) = riders();
        let v = verbal(&f);
        let backend = ScriptedBackend::new()
            .reply(TemplateId::TextualGuidance, "1) filter Belgium 2) sum wins")
            .reply(TemplateId::SymbolicReasoning, "Here:\n```python\nprint(7)\n```\nDone.");
        let g = gw(backend.clone());
        let mut trace = ReasoningTrace::default();
        let guidance = generate_guidance(&f.table, &v, "q", &g, &mut trace);
        assert_eq!(guidance.0, "1) filter Belgium 2) sum wins");
        let program = symbolic_reasoning(&f.table, &v, "q", &guidance, &g, &mut trace).unwrap();
        assert_eq!(program, "print(7)");
        let calls = backend.calls();
        assert!(calls[1].rendered.contains("1) filter Belgium 2) sum wins"));

        let g = gw(ScriptedBackend::new().reply(TemplateId::TextualGuidance, ""));
        assert_eq!(generate_guidance(&f.table, &v, "q", &g, &mut trace).0, DEFAULT_GUIDANCE);
        assert!(trace.warnings().any(|(s, _)| s == "guidance"));
    }

    #[test]
    fn textual_prompt_never_binds_guidance() {
        let (_, f) = riders();
        let backend = ScriptedBackend::new().reply(TemplateId::TextualReasoning, "Answer: 7");
        let g = gw(backend.clone());
        let mut trace = ReasoningTrace::default();
        trace.guidance = Some("SECRET-GUIDANCE".into());
        textual_reasoning(&f.table, &verbal(&f), "q", TaskKind::Qa, &g, &mut trace).unwrap();
        assert!(!backend.calls()[0].rendered.contains("SECRET-GUIDANCE"));
        assert!(!backend.calls()[0].bindings.contains_key("guidance"));
    }

    #[test]
    fn formatting_rules() {
        let t = Table::from_rows(["a"], [["1"]]);
        let mut trace = ReasoningTrace::default();
        let g = gw(ScriptedBackend::new().reply(TemplateId::AnswerFormatting, "7"));
        let a = format_answer(&t, "q", "...so the answer is 7.", TaskKind::Qa, &g, &mut trace).unwrap();
        assert_eq!(a.value, "7");

        let g = gw(ScriptedBackend::new().reply(TemplateId::AnswerFormatting, "the claim holds"));
        let a = format_answer(&t, "q", "the claim holds", TaskKind::FactVerification, &g, &mut trace).unwrap();
        assert_eq!(a.value, "True");

        let g = gw(ScriptedBackend::new().reply(TemplateId::AnswerFormatting, "the table does not contain this"));
        let a = format_answer(&t, "q", "the table does not contain this", TaskKind::Qa, &g, &mut trace).unwrap();
        assert!(a.abstained);

        let g = gw(ScriptedBackend::new().reply(TemplateId::AnswerFormatting, "Answer:   "));
        assert_eq!(
            format_answer(&t, "q", "x", TaskKind::Qa, &g, &mut trace),
            Err(AnswerError::EmptyAnswer)
        );
    }

    fn python_or_skip() -> bool {
        std::process::Command::new("python3").arg("-c").arg("0").status().is_ok_and(|s| s.success())
    }

    #[test]
    fn symbolic_path_without_fallbacks() {
        if !python_or_skip() {
            return;
        }
        let (t, f) = riders();
        let g = gw(ScriptedBackend::new()
            .reply(TemplateId::StrategyAssessment, "symbolic")
            .reply(TemplateId::TextualGuidance, "filter then sum")
            .reply(
                TemplateId::SymbolicReasoning,
                "```python\nimport csv, os\nrows = list(csv.DictReader(open(os.environ['TM_TABLE_PATH'])))\nprint(sum(int(r['Wins']) for r in rows if r['Country'] == 'Belgium'))\n```",
            )
            .reply(TemplateId::AnswerFormatting, "7"));
        let mut trace = ReasoningTrace::default();
        let a = answer_adaptive(&t, &f, &verbal(&f), "q", TaskKind::Qa, ReasoningOptions::default(), &g, &Executor::default(), &mut trace);
        assert_eq!(a.value, "7");
        assert!(trace.fallbacks.is_empty());
        assert_eq!(trace.strategy, Some(Strategy::Symbolic));
        assert_eq!(trace.execution.as_ref().unwrap().answer_line(), Some("7"));
    }

    #[test]
    fn executor_timeout_falls_back_to_textual() {
        if !python_or_skip() {
            return;
        }
        let (t, f) = riders();
        let g = gw(ScriptedBackend::new()
            .reply(TemplateId::StrategyAssessment, "symbolic")
            .reply(TemplateId::TextualGuidance, "loop")
            .reply(TemplateId::SymbolicReasoning, "```python\nwhile True: pass\n```")
            .reply(TemplateId::TextualReasoning, "Belgium has 3 + 4. Answer: 7")
            .reply(TemplateId::AnswerFormatting, "7"));
        let exec = Executor::new(ExecutorProfile {
            timeout_ms: 300,
            ..ExecutorProfile::default()
        });
        let mut trace = ReasoningTrace::default();
        let a = answer_adaptive(&t, &f, &verbal(&f), "q", TaskKind::Qa, ReasoningOptions::default(), &g, &exec, &mut trace);
        assert_eq!(a.value, "7");
        assert_eq!(trace.fallbacks, [Fallback::Textual]);
        assert!(trace.execution.as_ref().unwrap().timed_out);
    }

    #[test]
    fn abstention_retries_on_full_table_once() {
        let (t, f) = riders();
        let backend = ScriptedBackend::new()
            .reply(TemplateId::StrategyAssessment, "textual")
            .replies(TemplateId::TextualReasoning, ["Answer: cannot answer", "Answer: 7"])
            .replies(TemplateId::AnswerFormatting, ["cannot answer", "7"]);
        let g = gw(backend.clone());
        let mut trace = ReasoningTrace::default();
        let a = answer_adaptive(&t, &f, &verbal(&f), "q", TaskKind::Qa, ReasoningOptions::default(), &g, &Executor::default(), &mut trace);
        assert_eq!(a.value, "7");
        assert_eq!(trace.fallbacks, [Fallback::FullTableRetry]);
        assert_eq!(trace.calls_to(TemplateId::TextualReasoning), 2);

        // A second abstention is accepted rather than retried again.
        let g = gw(ScriptedBackend::new()
            .reply(TemplateId::StrategyAssessment, "textual")
            .reply(TemplateId::TextualReasoning, "Answer: cannot answer")
            .reply(TemplateId::AnswerFormatting, "cannot answer"));
        let mut trace = ReasoningTrace::default();
        let a = answer_adaptive(&t, &f, &verbal(&f), "q", TaskKind::Qa, ReasoningOptions::default(), &g, &Executor::default(), &mut trace);
        assert!(a.abstained);
        assert_eq!(a.value, "");
        assert_eq!(trace.calls_to(TemplateId::TextualReasoning), 2);
    }

    #[test]
    fn terminal_failure_yields_abstention() {
        let (t, f) = riders();
        let g = gw(ScriptedBackend::new());
        let mut trace = ReasoningTrace::default();
        let a = answer_adaptive(&t, &f, &verbal(&f), "q", TaskKind::FactVerification, ReasoningOptions::default(), &g, &Executor::default(), &mut trace);
        assert!(a.abstained);
        assert!(trace.has_fallback(Fallback::FullTableRetry));
        assert!(trace.lm_errors() > 0);
    }
}
