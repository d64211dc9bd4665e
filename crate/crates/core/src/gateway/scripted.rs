use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Mutex};

use super::{LmBackend, LmError, LmRequest, LmResponse, TemplateId};
use crate::table::{CharHeuristic, Tokenizer};

type Responder = Arc<dyn Fn(&LmRequest) -> Option<String> + Send + Sync>;

/// Deterministic backend answering from per-template reply queues.
///
/// Queued replies are consumed in order; once a queue is down to its last
/// reply, that reply repeats. A responder function, when set, is consulted
/// before the queues.
#[derive(Clone, Default)]
pub struct ScriptedBackend {
    queues: Arc<Mutex<BTreeMap<TemplateId, VecDeque<String>>>>,
    responder: Option<Responder>,
    calls: Arc<Mutex<Vec<LmRequest>>>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reply(self, id: TemplateId, text: impl Into<String>) -> Self {
        self.queues
            .lock()
            .expect("script lock")
            .entry(id)
            .or_default()
            .push_back(text.into());
        self
    }

    pub fn replies<S: Into<String>>(self, id: TemplateId, texts: impl IntoIterator<Item = S>) -> Self {
        texts.into_iter().fold(self, |b, t| b.reply(id, t))
    }

    pub fn responder(
        mut self,
        f: impl Fn(&LmRequest) -> Option<String> + Send + Sync + 'static,
    ) -> Self {
        self.responder = Some(Arc::new(f));
        self
    }

    /// Every request received so far, in arrival order.
    pub fn calls(&self) -> Vec<LmRequest> {
        self.calls.lock().expect("calls lock").clone()
    }

    pub fn call_count(&self, id: TemplateId) -> usize {
        self.calls
            .lock()
            .expect("calls lock")
            .iter()
            .filter(|r| r.template_id == id)
            .count()
    }
}

impl LmBackend for ScriptedBackend {
    fn id(&self) -> String {
        "scripted".into()
    }

    fn complete(&self, request: &LmRequest) -> Result<LmResponse, LmError> {
        self.calls.lock().expect("calls lock").push(request.clone());
        let from_responder = self.responder.as_ref().and_then(|f| f(request));
        let text = match from_responder {
            Some(t) => t,
            None => {
                let mut queues = self.queues.lock().expect("script lock");
                let queue = queues
                    .get_mut(&request.template_id)
                    .filter(|q| !q.is_empty())
                    .ok_or(LmError::Script(request.template_id))?;
                if queue.len() > 1 {
                    queue.pop_front().expect("non-empty")
                } else {
                    queue[0].clone()
                }
            }
        };
        Ok(LmResponse {
            prompt_tokens: CharHeuristic.count(&request.rendered) as u64,
            completion_tokens: CharHeuristic.count(&text) as u64,
            text,
            backend_id: self.id(),
        })
    }
}
