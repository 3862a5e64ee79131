//! Translation orchestration: prompt construction, context-window chunking
//! and assembly of streamed output.

use std::fmt;
use std::num::NonZeroUsize;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::punctuation::LabelRegistry;
use crate::text;

/// Default window size, in characters, for translation chunks.
pub const DEFAULT_CHUNK_CHARS: usize = 384;

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum TranslationError {
    #[error("cannot translate from {from} into {to}")]
    UnsupportedDirection { from: LanguageTag, to: LanguageTag },
    #[error("text is empty")]
    EmptyText,
    #[error("stream ended without a final delta")]
    StreamTruncated,
    #[error("delta received after the final delta")]
    DeltaAfterDone,
    #[error("job cannot move from {from:?} to {to:?}")]
    InvalidTransition { from: JobState, to: JobState },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LanguageTag {
    Hanja,
    Korean,
    English,
}

impl LanguageTag {
    pub fn name(self) -> &'static str {
        match self {
            LanguageTag::Hanja => "Hanja",
            LanguageTag::Korean => "Korean",
            LanguageTag::English => "English",
        }
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LanguageTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hanja" => Ok(LanguageTag::Hanja),
            "korean" | "ko" => Ok(LanguageTag::Korean),
            "english" | "en" => Ok(LanguageTag::English),
            _ => Err(format!("unknown language `{s}`")),
        }
    }
}

fn check_direction(source: LanguageTag, target: LanguageTag) -> Result<(), TranslationError> {
    match (source, target) {
        (LanguageTag::Hanja, LanguageTag::Korean | LanguageTag::English) => Ok(()),
        _ => Err(TranslationError::UnsupportedDirection {
            from: source,
            to: target,
        }),
    }
}

/// Instantiates the three-line translation prompt.
pub fn build_prompt(source: LanguageTag, target: LanguageTag, text: &str) -> Result<String, TranslationError> {
    check_direction(source, target)?;
    if text.is_empty() {
        return Err(TranslationError::EmptyText);
    }
    Ok(format!(
        "Translate the following text from {source} into {target}.\n{source}: {text}\n{target}:"
    ))
}

/// A contiguous slice of the source text, in characters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// Positions where a chunk may end: right after a sentence-final label.
#[derive(Debug, Clone, Default)]
pub struct SentenceBreaks(Vec<bool>);

impl SentenceBreaks {
    pub fn from_labels(registry: &LabelRegistry, labels: &[String]) -> Self {
        SentenceBreaks(labels.iter().map(|id| registry.is_sentence_final(id)).collect())
    }

    fn after(&self, index: usize) -> bool {
        self.0.get(index).copied().unwrap_or(false)
    }
}

/// Splits `text` into windows of at most `max_units` characters. With
/// `breaks`, each window ends after the last sentence-final label that fits,
/// falling back to a hard split.
pub fn chunk(text: &str, max_units: NonZeroUsize, breaks: Option<&SentenceBreaks>) -> Vec<Chunk> {
    let chars = text::chars(text);
    let max = max_units.get();
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let hard = (start + max).min(chars.len());
        let end = if hard == chars.len() {
            hard
        } else {
            breaks
                .and_then(|b| (start + 1..=hard).rev().find(|&end| b.after(end - 1)))
                .unwrap_or(hard)
        };
        chunks.push(Chunk {
            start,
            end,
            text: chars[start..end].concat(),
        });
        start = end;
    }
    chunks
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamDelta {
    #[serde(rename = "delta")]
    pub text: String,
    pub done: bool,
}

impl StreamDelta {
    pub fn part(text: impl Into<String>) -> Self {
        StreamDelta {
            text: text.into(),
            done: false,
        }
    }

    pub fn finished() -> Self {
        StreamDelta {
            text: String::new(),
            done: true,
        }
    }
}

/// Incremental form of [`assemble_stream`].
#[derive(Debug, Default, Clone)]
pub struct StreamAssembler {
    buffer: String,
    done: bool,
}

impl StreamAssembler {
    pub fn push(&mut self, delta: &StreamDelta) -> Result<(), TranslationError> {
        if self.done {
            return Err(TranslationError::DeltaAfterDone);
        }
        self.buffer.push_str(&delta.text);
        self.done = delta.done;
        Ok(())
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn text(&self) -> &str {
        &self.buffer
    }

    pub fn finish(self) -> Result<String, TranslationError> {
        if self.done {
            Ok(self.buffer)
        } else {
            Err(TranslationError::StreamTruncated)
        }
    }
}

pub fn assemble_stream<'a, I>(deltas: I) -> Result<String, TranslationError>
where
    I: IntoIterator<Item = &'a StreamDelta>,
{
    let mut assembler = StreamAssembler::default();
    for delta in deltas {
        assembler.push(delta)?;
    }
    assembler.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum JobState {
    Pending,
    Streaming,
    Done,
    Failed,
}

/// A translation request split into model-sized chunks.
#[derive(Debug, Clone)]
pub struct TranslationJob {
    pub source_text: String,
    pub target: LanguageTag,
    pub chunks: Vec<Chunk>,
    state: JobState,
}

impl TranslationJob {
    pub fn new(
        source_text: impl Into<String>,
        target: LanguageTag,
        max_units: NonZeroUsize,
        breaks: Option<&SentenceBreaks>,
    ) -> Result<Self, TranslationError> {
        let source_text = source_text.into();
        check_direction(LanguageTag::Hanja, target)?;
        if source_text.is_empty() {
            return Err(TranslationError::EmptyText);
        }
        let chunks = chunk(&source_text, max_units, breaks);
        Ok(TranslationJob {
            source_text,
            target,
            chunks,
            state: JobState::Pending,
        })
    }

    pub fn state(&self) -> JobState {
        self.state
    }

    /// Moves the job forward. Terminal states are final.
    pub fn advance(&mut self, to: JobState) -> Result<(), TranslationError> {
        let allowed = matches!(
            (self.state, to),
            (JobState::Pending, JobState::Streaming)
                | (JobState::Pending, JobState::Failed)
                | (JobState::Streaming, JobState::Done)
                | (JobState::Streaming, JobState::Failed)
        );
        if !allowed {
            return Err(TranslationError::InvalidTransition { from: self.state, to });
        }
        self.state = to;
        Ok(())
    }

    /// Prompts for each chunk, in order.
    pub fn prompts(&self) -> Vec<String> {
        self.chunks
            .iter()
            .map(|c| build_prompt(LanguageTag::Hanja, self.target, &c.text).expect("validated at construction"))
            .collect()
    }
}

/// Joins per-chunk translations into the job's final output.
pub fn join_chunk_translations<S: AsRef<str>>(parts: &[S]) -> String {
    parts.iter().map(AsRef::as_ref).collect::<Vec<_>>().join("\n")
}
