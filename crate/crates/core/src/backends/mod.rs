//! Model backends for the three tasks.
//!
//! A [`Backend`] labels punctuation, tags entities and streams translations
//! for text that already fits its context window. The helpers in this module
//! add windowing, IOB2 repair and multi-chunk translation on top, so every
//! backend behaves the same to callers.

pub mod reference;
pub mod remote;
pub mod window;

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use async_trait::async_trait;
use futures::stream::{BoxStream, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entities::{repair_iob2, TagSeq};
use crate::punctuation::PunctLabelSeq;
use crate::translation::{JobState, LanguageTag, StreamDelta, TranslationError, TranslationJob};

pub use reference::ReferenceBackend;
pub use remote::RemoteBackend;
pub use window::{run_windowed, run_windowed_async, WindowMismatch, WindowPlan};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("invalid backend response: {0}")]
    InvalidResponse(String),
    #[error("backend `{backend}` does not support {capability:?}")]
    Unsupported { backend: String, capability: Capability },
    #[error("translation stream ended without a final delta")]
    StreamTruncated,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl From<WindowMismatch> for BackendError {
    fn from(e: WindowMismatch) -> Self {
        BackendError::InvalidResponse(e.to_string())
    }
}

impl From<TranslationError> for BackendError {
    fn from(e: TranslationError) -> Self {
        match e {
            TranslationError::StreamTruncated => BackendError::StreamTruncated,
            other => BackendError::InvalidInput(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Capability {
    Punctuate,
    Ner,
    Translate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Reference,
    Remote,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DescriptorError {
    #[error("backend `{0}` declares no capabilities")]
    NoCapabilities(String),
    #[error("remote backend `{0}` has no endpoint")]
    MissingEndpoint(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub kind: BackendKind,
    pub capabilities: Vec<Capability>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

impl BackendDescriptor {
    pub fn validate(&self) -> Result<(), DescriptorError> {
        if self.capabilities.is_empty() {
            return Err(DescriptorError::NoCapabilities(self.name.clone()));
        }
        if self.kind == BackendKind::Remote && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(DescriptorError::MissingEndpoint(self.name.clone()));
        }
        Ok(())
    }

    pub fn supports(&self, capability: Capability) -> bool {
        self.capabilities.contains(&capability)
    }

    pub fn reference(name: impl Into<String>) -> Self {
        BackendDescriptor {
            name: name.into(),
            kind: BackendKind::Reference,
            capabilities: vec![Capability::Punctuate, Capability::Ner, Capability::Translate],
            endpoint: None,
        }
    }
}

/// Stream of translated text fragments for one chunk.
pub type FragmentStream = BoxStream<'static, Result<String, BackendError>>;

#[async_trait]
pub trait Backend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    /// One label per character of a punctuation-free text that fits the
    /// backend's context.
    async fn label_punctuation(&self, text: &str) -> Result<PunctLabelSeq, BackendError>;

    async fn tag_entities(&self, text: &str) -> Result<TagSeq, BackendError>;

    /// Starts translating one chunk. Connection failures surface here,
    /// before any fragment is produced.
    async fn translate_chunk(&self, text: &str, target: LanguageTag) -> Result<FragmentStream, BackendError>;
}

fn require(backend: &dyn Backend, capability: Capability) -> Result<(), BackendError> {
    let d = backend.descriptor();
    if d.supports(capability) {
        Ok(())
    } else {
        Err(BackendError::Unsupported {
            backend: d.name.clone(),
            capability,
        })
    }
}

/// Punctuation labels for a text of any length.
pub async fn label_punctuation(backend: &dyn Backend, text: &str, plan: &WindowPlan) -> Result<PunctLabelSeq, BackendError> {
    require(backend, Capability::Punctuate)?;
    let labels = run_windowed_async(text, plan, |w| async move { backend.label_punctuation(&w).await.map(|s| s.0) }).await?;
    Ok(PunctLabelSeq(labels))
}

/// Well-formed IOB2 tags for a text of any length.
pub async fn tag_entities(backend: &dyn Backend, text: &str, plan: &WindowPlan) -> Result<TagSeq, BackendError> {
    require(backend, Capability::Ner)?;
    let tags = run_windowed_async(text, plan, |w| async move { backend.tag_entities(&w).await }).await?;
    // window seams can leave an I- tag without its B-
    Ok(repair_iob2(&tags))
}

struct JobStream {
    backend: Arc<dyn Backend>,
    job: TranslationJob,
    pending: VecDeque<String>,
    current: Option<FragmentStream>,
    first_chunk: bool,
}

/// Streams the translation of every chunk of `job`, separating chunk
/// translations with a newline and ending with a `done` delta. Dropping the
/// stream cancels the job.
pub fn translate_stream(
    backend: Arc<dyn Backend>,
    job: TranslationJob,
) -> BoxStream<'static, Result<StreamDelta, BackendError>> {
    let pending = job.chunks.iter().map(|c| c.text.clone()).collect();
    let state = JobStream {
        backend,
        job,
        pending,
        current: None,
        first_chunk: true,
    };
    futures::stream::unfold(Some(state), |state| async move {
        let mut s = state?;
        if s.job.state() == JobState::Pending {
            if let Err(e) = require(s.backend.as_ref(), Capability::Translate) {
                let _ = s.job.advance(JobState::Failed);
                return Some((Err(e), None));
            }
        }
        loop {
            if let Some(current) = s.current.as_mut() {
                match current.next().await {
                    Some(Ok(fragment)) => return Some((Ok(StreamDelta::part(fragment)), Some(s))),
                    Some(Err(e)) => {
                        let _ = s.job.advance(JobState::Failed);
                        return Some((Err(e), None));
                    }
                    None => s.current = None,
                }
            }
            let Some(next) = s.pending.pop_front() else {
                let _ = s.job.advance(JobState::Done);
                return Some((Ok(StreamDelta::finished()), None));
            };
            match s.backend.translate_chunk(&next, s.job.target).await {
                Ok(stream) => {
                    if s.job.state() == JobState::Pending {
                        let _ = s.job.advance(JobState::Streaming);
                    }
                    s.current = Some(stream);
                    if !s.first_chunk {
                        return Some((Ok(StreamDelta::part("\n")), Some(s)));
                    }
                    s.first_chunk = false;
                }
                Err(e) => {
                    let _ = s.job.advance(JobState::Failed);
                    return Some((Err(e), None));
                }
            }
        }
    })
    .boxed()
}

/// Named backends plus the default used when a request names none.
#[derive(Clone)]
pub struct BackendSet {
    backends: BTreeMap<String, Arc<dyn Backend>>,
    default: String,
}

impl BackendSet {
    pub fn new(default: impl Into<String>) -> Self {
        BackendSet {
            backends: BTreeMap::new(),
            default: default.into(),
        }
    }

    pub fn insert(&mut self, backend: Arc<dyn Backend>) {
        self.backends.insert(backend.descriptor().name.clone(), backend);
    }

    pub fn get(&self, name: Option<&str>) -> Option<Arc<dyn Backend>> {
        self.backends.get(name.unwrap_or(&self.default)).cloned()
    }

    pub fn default_name(&self) -> &str {
        &self.default
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.backends.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::translation::assemble_stream;
    use std::num::NonZeroUsize;

    #[test]
    fn descriptor_validation() {
        let mut d = BackendDescriptor::reference("ref");
        assert!(d.validate().is_ok());
        d.kind = BackendKind::Remote;
        assert_eq!(d.validate(), Err(DescriptorError::MissingEndpoint("ref".into())));
        d.endpoint = Some("http://127.0.0.1:9/".into());
        assert!(d.validate().is_ok());
        d.capabilities.clear();
        assert_eq!(d.validate(), Err(DescriptorError::NoCapabilities("ref".into())));
    }

    #[test]
    fn descriptor_wire_names() {
        let d: BackendDescriptor = serde_json::from_str(
            r#"{"name":"m","kind":"remote","capabilities":["punctuate","ner"],"endpoint":"http://x"}"#,
        )
        .unwrap();
        assert_eq!(d.capabilities, vec![Capability::Punctuate, Capability::Ner]);
    }

    #[tokio::test]
    async fn multi_chunk_translation_joins_with_newlines() {
        let backend: Arc<dyn Backend> = Arc::new(ReferenceBackend::bundled());
        let job = TranslationJob::new("子曰學", LanguageTag::Korean, NonZeroUsize::new(2).unwrap(), None).unwrap();
        let deltas: Vec<StreamDelta> = translate_stream(backend, job)
            .map(|d| d.unwrap())
            .collect()
            .await;
        assert!(deltas.last().unwrap().done);
        assert_eq!(assemble_stream(&deltas).unwrap(), "자 왈\n학");
    }

    #[tokio::test]
    async fn missing_capability_fails_before_any_delta() {
        let mut backend = ReferenceBackend::bundled();
        backend.descriptor.capabilities = vec![Capability::Punctuate];
        let backend: Arc<dyn Backend> = Arc::new(backend);
        let job = TranslationJob::new("子", LanguageTag::Korean, NonZeroUsize::new(2).unwrap(), None).unwrap();
        let first = translate_stream(backend.clone(), job).next().await.unwrap();
        assert!(matches!(first, Err(BackendError::Unsupported { .. })));
        assert!(matches!(
            tag_entities(backend.as_ref(), "子", &WindowPlan::default()).await,
            Err(BackendError::Unsupported { .. })
        ));
    }

    #[tokio::test]
    async fn windowed_tags_are_repaired_at_seams() {
        let backend = ReferenceBackend::bundled();
        // 李舜臣 straddles the seam of [0,4) and [2,6); the merge takes
        // chars 0..=2 from the first window and the rest from the second
        let plan = WindowPlan::new(4, 2).unwrap();
        let tags = tag_entities(&backend, "甲乙李舜臣丙", &plan).await.unwrap();
        let spans = crate::entities::decode_iob2(&tags);
        assert_eq!(repair_iob2(&tags), tags);
        assert!(!spans.is_empty());
    }
}
