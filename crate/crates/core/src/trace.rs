//! Append-only record of one pipeline run.

use serde::{Deserialize, Serialize};

use crate::eval::CostTally;
use crate::gateway::{digest, LmError, LmResponse, TemplateId};
use crate::reasoning::{ExecutionResult, Strategy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LmCallRecord {
    pub template_id: TemplateId,
    pub request_key: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reply_digest: Option<String>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub misconfigured: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Row lookup failed; every row was kept.
    AllRows,
    /// The generated program failed; answered with textual reasoning instead.
    Textual,
    /// The focused answer abstained; reasoning re-ran over the full table.
    FullTableRetry,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    LmCall(LmCallRecord),
    Warning { stage: String, message: String },
    Fallback { fallback: Fallback, reason: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub events: Vec<TraceEvent>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guidance: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub program: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub execution: Option<ExecutionResult>,
    pub fallbacks: Vec<Fallback>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostTally>,
}

impl ReasoningTrace {
    pub fn record_call(
        &mut self,
        template_id: TemplateId,
        request_key: String,
        result: Result<&LmResponse, &LmError>,
    ) {
        let record = match result {
            Ok(r) => LmCallRecord {
                template_id,
                request_key,
                reply_digest: Some(digest(&r.text)),
                prompt_tokens: r.prompt_tokens,
                completion_tokens: r.completion_tokens,
                error: None,
                misconfigured: false,
            },
            Err(e) => LmCallRecord {
                template_id,
                request_key,
                reply_digest: None,
                prompt_tokens: 0,
                completion_tokens: 0,
                error: Some(e.to_string()),
                misconfigured: e.is_misconfiguration(),
            },
        };
        self.events.push(TraceEvent::LmCall(record));
    }

    pub fn warn(&mut self, stage: &str, message: impl Into<String>) {
        self.events.push(TraceEvent::Warning {
            stage: stage.to_string(),
            message: message.into(),
        });
    }

    pub fn fallback(&mut self, fallback: Fallback, reason: impl Into<String>) {
        self.fallbacks.push(fallback);
        self.events.push(TraceEvent::Fallback {
            fallback,
            reason: reason.into(),
        });
    }

    pub fn lm_calls(&self) -> impl Iterator<Item = &LmCallRecord> {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::LmCall(c) => Some(c),
            _ => None,
        })
    }

    pub fn warnings(&self) -> impl Iterator<Item = (&str, &str)> {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::Warning { stage, message } => Some((stage.as_str(), message.as_str())),
            _ => None,
        })
    }

    pub fn calls_to(&self, id: TemplateId) -> usize {
        self.lm_calls().filter(|c| c.template_id == id).count()
    }

    pub fn has_fallback(&self, fallback: Fallback) -> bool {
        self.fallbacks.contains(&fallback)
    }

    pub fn misconfiguration(&self) -> Option<&str> {
        self.lm_calls()
            .find(|c| c.misconfigured)
            .and_then(|c| c.error.as_deref())
    }

    pub fn lm_errors(&self) -> usize {
        self.lm_calls().filter(|c| c.error.is_some()).count()
    }
}
