//! Task entry points shared by the HTTP gateway and the batch runner.

use std::sync::Arc;

use futures::stream::BoxStream;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{self, Backend, BackendError};
use crate::config::Platform;
use crate::entities::{decode_iob2, EntitySpan, TagSeq};
use crate::glossary::GlossaryEntry;
use crate::punctuation::{is_punctuation_glyph, PunctError, PunctLabelSeq, RenderMode};
use crate::text;
use crate::translation::{LanguageTag, StreamDelta, TranslationError, TranslationJob};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipelineError {
    #[error("text is empty")]
    EmptyText,
    #[error("text has {actual} characters; the limit is {limit}")]
    InputTooLarge { limit: usize, actual: usize },
    #[error("no backend named `{0}`")]
    UnknownBackend(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Punctuation(#[from] PunctError),
    #[error(transparent)]
    Translation(#[from] TranslationError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PunctuateOutput {
    /// The punctuation-free text the labels apply to.
    pub text: String,
    pub labels: PunctLabelSeq,
    pub rendered: String,
    pub offsets: Vec<usize>,
    /// Set when the input already contained punctuation, which was removed
    /// before labelling.
    pub stripped: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NerOutput {
    pub tags: TagSeq,
    pub spans: Vec<EntitySpan>,
}

impl Platform {
    /// Rejects empty or over-long input.
    pub fn check_input(&self, text: &str) -> Result<(), PipelineError> {
        if text.is_empty() {
            return Err(PipelineError::EmptyText);
        }
        self.check_size(text)
    }

    pub fn check_size(&self, text: &str) -> Result<(), PipelineError> {
        let actual = text::char_count(text);
        if actual > self.max_input_chars {
            return Err(PipelineError::InputTooLarge {
                limit: self.max_input_chars,
                actual,
            });
        }
        Ok(())
    }

    pub fn backend(&self, name: Option<&str>) -> Result<Arc<dyn Backend>, PipelineError> {
        self.backends
            .get(name)
            .ok_or_else(|| PipelineError::UnknownBackend(name.unwrap_or(self.backends.default_name()).to_string()))
    }

    pub async fn punctuate(&self, text: &str, mode: RenderMode, backend: Option<&str>) -> Result<PunctuateOutput, PipelineError> {
        self.check_input(text)?;
        let backend = self.backend(backend)?;
        let stripped = text.chars().any(is_punctuation_glyph);
        let raw: String = if stripped {
            text.chars().filter(|c| !is_punctuation_glyph(*c)).collect()
        } else {
            text.to_string()
        };
        if raw.is_empty() {
            return Err(PipelineError::EmptyText);
        }
        let labels = backends::label_punctuation(backend.as_ref(), &raw, &self.window).await?;
        let rendered = self.registry.apply_labels(&raw, &labels, mode)?;
        let offsets = self.registry.align_offsets(&raw, &labels, mode)?;
        Ok(PunctuateOutput {
            text: raw,
            labels,
            rendered,
            offsets,
            stripped,
        })
    }

    pub async fn ner(&self, text: &str, backend: Option<&str>) -> Result<NerOutput, PipelineError> {
        self.check_input(text)?;
        let backend = self.backend(backend)?;
        let tags = backends::tag_entities(backend.as_ref(), text, &self.window).await?;
        let spans = decode_iob2(&tags);
        Ok(NerOutput { tags, spans })
    }

    pub fn glossary(&self, text: &str) -> Result<Vec<GlossaryEntry>, PipelineError> {
        self.check_size(text)?;
        Ok(self.glossary.annotate(text))
    }

    /// Validates the request and returns the delta stream. Nothing is sent to
    /// the backend until the stream is polled.
    pub fn translate(
        &self,
        text: &str,
        target: LanguageTag,
        backend: Option<&str>,
    ) -> Result<BoxStream<'static, Result<StreamDelta, BackendError>>, PipelineError> {
        self.check_input(text)?;
        let backend = self.backend(backend)?;
        let job = TranslationJob::new(text, target, self.chunk_chars, None)?;
        Ok(backends::translate_stream(backend, job))
    }

    /// Runs a translation to completion.
    pub async fn translate_text(&self, text: &str, target: LanguageTag, backend: Option<&str>) -> Result<String, PipelineError> {
        use futures::StreamExt;
        let mut stream = self.translate(text, target, backend)?;
        let mut assembler = crate::translation::StreamAssembler::default();
        while let Some(delta) = stream.next().await {
            assembler.push(&delta?)?;
        }
        Ok(assembler.finish()?)
    }
}
