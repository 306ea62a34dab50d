//! Replays responses from a recorded transcript, matched by fingerprint in
//! recording order.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use super::{read_transcript, ChatBackend, ChatRequest, LlmError, TranscriptEntry};

#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    queues: BTreeMap<String, VecDeque<Result<String, String>>>,
}

impl ReplayBackend {
    pub fn new(entries: &[TranscriptEntry]) -> Self {
        let mut queues: BTreeMap<String, VecDeque<Result<String, String>>> = BTreeMap::new();
        for e in entries {
            let outcome = match (&e.response, &e.error) {
                (Some(r), _) => Ok(r.clone()),
                (None, Some(err)) => Err(err.clone()),
                (None, None) => Err("recorded entry has neither response nor error".into()),
            };
            queues
                .entry(e.fingerprint.clone())
                .or_default()
                .push_back(outcome);
        }
        Self { queues }
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        Ok(Self::new(&read_transcript(path)?))
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&mut self, req: &ChatRequest) -> Result<String, LlmError> {
        let fp = req.fingerprint();
        match self.queues.get_mut(&fp).and_then(VecDeque::pop_front) {
            Some(Ok(text)) => Ok(text),
            Some(Err(msg)) => Err(LlmError::Replayed(msg)),
            None => Err(LlmError::ReplayExhausted {
                role: req.role,
                fingerprint: fp,
            }),
        }
    }
}
