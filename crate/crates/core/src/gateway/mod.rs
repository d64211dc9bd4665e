//! The single seam between the pipeline and language models.
//!
//! Every prompt is rendered from a [`TemplateRegistry`] entry and sent through
//! an [`LmBackend`]. Backends are an HTTP provider, a record/replay
//! [`CassetteBackend`], and a [`ScriptedBackend`] for tests.

mod cassette;
mod http;
pub mod parse;
mod scripted;
pub mod templates;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cassette::{Cassette, CassetteBackend, CassetteEntry, CassetteMode};
pub use http::{HttpBackend, HttpConfig};
pub use parse::{
    extract_code_block, parse_bool, parse_choice, parse_delimited_list, Choice, DelimitedList,
    ReplyError,
};
pub use scripted::ScriptedBackend;
pub use templates::{bindings, render_prompt, Bindings, PromptTemplate, TemplateError, TemplateId, TemplateRegistry};

use crate::trace::ReasoningTrace;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LmError {
    #[error("cassette has no entry {key} for template {template_id}")]
    CassetteMiss { key: String, template_id: TemplateId },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned HTTP {status}: {body}")]
    Provider { status: u16, body: String },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("backend misconfigured: {0}")]
    Config(String),
    #[error("scripted backend has no reply for template {0}")]
    Script(TemplateId),
    #[error("cassette i/o: {0}")]
    Io(String),
}

impl LmError {
    /// Errors that no amount of per-instance degradation can work around.
    pub fn is_misconfiguration(&self) -> bool {
        matches!(self, LmError::Config(_) | LmError::Template(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmRequest {
    pub template_id: TemplateId,
    pub bindings: Bindings,
    pub rendered: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

/// Stable 256-bit key over the template id and rendered prompt.
pub fn request_key(template_id: TemplateId, rendered: &str) -> String {
    let mut h = Sha256::new();
    h.update(template_id.as_str().as_bytes());
    h.update([0u8]);
    h.update(rendered.as_bytes());
    hex::encode(h.finalize())
}

pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl LmRequest {
    pub fn new(template: &PromptTemplate, bindings: Bindings) -> Result<Self, TemplateError> {
        let rendered = render_prompt(template, &bindings)?;
        Ok(Self {
            template_id: template.id(),
            bindings,
            rendered,
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        })
    }

    pub fn key(&self) -> String {
        request_key(self.template_id, &self.rendered)
    }
}

pub const DEFAULT_MAX_TOKENS: u32 = 2048;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LmResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub backend_id: String,
}

pub trait LmBackend: Send + Sync {
    fn id(&self) -> String;
    fn complete(&self, request: &LmRequest) -> Result<LmResponse, LmError>;
}

pub fn complete(request: &LmRequest, backend: &dyn LmBackend) -> Result<LmResponse, LmError> {
    backend.complete(request)
}

/// Templates plus a backend plus generation parameters.
#[derive(Clone)]
pub struct Gateway {
    templates: TemplateRegistry,
    backend: Arc<dyn LmBackend>,
    temperature: f64,
    max_tokens: u32,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.id())
            .field("temperature", &self.temperature)
            .finish()
    }
}

impl Gateway {
    pub fn new(templates: TemplateRegistry, backend: Arc<dyn LmBackend>) -> Self {
        Self {
            templates,
            backend,
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn templates(&self) -> &TemplateRegistry {
        &self.templates
    }

    pub fn backend(&self) -> &Arc<dyn LmBackend> {
        &self.backend
    }

    /// Renders `id` with the subset of `bindings` its template uses, sends it,
    /// and records the call in `trace` whether or not it succeeds.
    pub fn call(
        &self,
        id: TemplateId,
        mut bindings: Bindings,
        trace: &mut ReasoningTrace,
    ) -> Result<String, LmError> {
        let template = self.templates.get(id);
        bindings.retain(|k, _| template.required_bindings().contains(k));
        let mut request = match LmRequest::new(template, bindings) {
            Ok(r) => r,
            Err(e) => {
                let err = LmError::from(e);
                trace.record_call(id, String::new(), Err(&err));
                return Err(err);
            }
        };
        request.temperature = self.temperature;
        request.max_tokens = self.max_tokens;
        let result = self.backend.complete(&request);
        trace.record_call(id, request.key(), result.as_ref());
        result.map(|r| r.text)
    }
}
