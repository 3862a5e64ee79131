//! Punctuation label algebra.
//!
//! A punctuated document is modelled as raw text plus one label per
//! character. A label's glyphs are inserted immediately after the character
//! that carries it, so opening quotes belong to the label of the character
//! *before* the quote. Three renderings exist: the full glyph sequence, a
//! simple comma/period/question projection, and the simple projection
//! followed by a space.

use std::collections::HashMap;
use std::fmt;
use std::ops::Deref;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

/// Number of non-`None` labels a registry must define.
pub const LABEL_COUNT: usize = 23;

/// Identifier of the empty label.
pub const NONE_LABEL: &str = "None";

/// Every glyph a label may insert.
pub const PUNCTUATION_ALPHABET: [char; 13] = [
    '，', '、', '。', '？', '！', '：', '；', '「', '」', '『', '』', '（', '）',
];

const DEFAULT_REGISTRY: &str = include_str!("../data/labels.tsv");

pub fn is_punctuation_glyph(c: char) -> bool {
    PUNCTUATION_ALPHABET.contains(&c)
}

fn is_punctuation_grapheme(g: &str) -> bool {
    let mut it = g.chars();
    matches!((it.next(), it.next()), (Some(c), None) if is_punctuation_glyph(c))
}

/// Drops every punctuation glyph from `text`, keeping everything else.
pub fn remove_punctuation(text: &str) -> String {
    text.chars().filter(|c| !is_punctuation_glyph(*c)).collect()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PunctError {
    #[error("label sequence has {actual} entries but text has {expected} characters")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("unknown punctuation label `{0}`")]
    UnknownLabel(String),
    #[error("punctuation run `{run}` at character {position} matches no registered label")]
    UnrecognizedGlyphRun { run: String, position: usize },
    #[error("text begins with a punctuation glyph")]
    LeadingPunctuation,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("label id `{0}` is defined twice")]
    DuplicateId(String),
    #[error("labels `{first}` and `{second}` share the glyph sequence `{glyphs}`")]
    DuplicateGlyphs {
        first: String,
        second: String,
        glyphs: String,
    },
    #[error("label `{id}` uses `{glyph}`, which is not a punctuation glyph")]
    ForeignGlyph { id: String, glyph: char },
    #[error("label `{0}` has no glyphs")]
    EmptyGlyphs(String),
    #[error("the None label must not carry glyphs")]
    NoneWithGlyphs,
    #[error("expected {LABEL_COUNT} labels besides None, found {0}")]
    WrongCount(usize),
    #[error("cannot read registry: {0}")]
    Io(#[from] std::io::Error),
}

/// The comma/period/question mark a label collapses to in simple modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SimpleMark {
    None,
    Comma,
    Period,
    Question,
}

impl SimpleMark {
    pub fn glyph(self) -> Option<char> {
        match self {
            SimpleMark::None => None,
            SimpleMark::Comma => Some('，'),
            SimpleMark::Period => Some('。'),
            SimpleMark::Question => Some('？'),
        }
    }
}

impl FromStr for SimpleMark {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "None" => Ok(SimpleMark::None),
            "Comma" => Ok(SimpleMark::Comma),
            "Period" => Ok(SimpleMark::Period),
            "Question" => Ok(SimpleMark::Question),
            other => Err(format!("unknown simple projection `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PunctLabel {
    pub id: String,
    pub glyphs: String,
    pub simple: SimpleMark,
}

impl PunctLabel {
    pub fn is_none(&self) -> bool {
        self.id == NONE_LABEL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum RenderMode {
    #[default]
    Comprehensive,
    Simple,
    SimpleWithSpace,
}

impl FromStr for RenderMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
            "comprehensive" => Ok(RenderMode::Comprehensive),
            "simple" => Ok(RenderMode::Simple),
            "simplewithspace" | "simplewspace" => Ok(RenderMode::SimpleWithSpace),
            _ => Err(format!("unknown render mode `{s}`")),
        }
    }
}

impl fmt::Display for RenderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            RenderMode::Comprehensive => "Comprehensive",
            RenderMode::Simple => "Simple",
            RenderMode::SimpleWithSpace => "SimpleWithSpace",
        };
        f.write_str(name)
    }
}

/// One label id per character of the raw text.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PunctLabelSeq(pub Vec<String>);

impl PunctLabelSeq {
    pub fn none(len: usize) -> Self {
        PunctLabelSeq(vec![NONE_LABEL.to_string(); len])
    }
}

impl Deref for PunctLabelSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl<S: Into<String>> FromIterator<S> for PunctLabelSeq {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        PunctLabelSeq(iter.into_iter().map(Into::into).collect())
    }
}

/// The set of labels a punctuation model may predict.
#[derive(Debug, Clone)]
pub struct LabelRegistry {
    labels: Vec<PunctLabel>,
    by_id: HashMap<String, usize>,
    by_glyphs: HashMap<String, usize>,
}

impl Default for LabelRegistry {
    fn default() -> Self {
        LabelRegistry::from_tsv(DEFAULT_REGISTRY).expect("bundled registry is valid")
    }
}

impl LabelRegistry {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        LabelRegistry::from_tsv(&std::fs::read_to_string(path)?)
    }

    /// Parses `id<TAB>glyphs<TAB>simple_projection` rows. `#` starts a comment.
    /// A `None` row is added implicitly when the file omits it.
    pub fn from_tsv(source: &str) -> Result<Self, RegistryError> {
        let mut labels = Vec::new();
        for (idx, line) in source.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(RegistryError::Malformed {
                    line: line_no,
                    reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            let id = fields[0].trim();
            if id.is_empty() {
                return Err(RegistryError::Malformed {
                    line: line_no,
                    reason: "empty label id".into(),
                });
            }
            let simple = fields[2]
                .trim()
                .parse()
                .map_err(|reason| RegistryError::Malformed { line: line_no, reason })?;
            labels.push(PunctLabel {
                id: id.to_string(),
                glyphs: fields[1].to_string(),
                simple,
            });
        }
        if !labels.iter().any(PunctLabel::is_none) {
            labels.insert(
                0,
                PunctLabel {
                    id: NONE_LABEL.into(),
                    glyphs: String::new(),
                    simple: SimpleMark::None,
                },
            );
        }
        LabelRegistry::new(labels)
    }

    pub fn new(labels: Vec<PunctLabel>) -> Result<Self, RegistryError> {
        let mut by_id = HashMap::new();
        let mut by_glyphs: HashMap<String, usize> = HashMap::new();
        for (i, label) in labels.iter().enumerate() {
            if by_id.insert(label.id.clone(), i).is_some() {
                return Err(RegistryError::DuplicateId(label.id.clone()));
            }
            if label.is_none() {
                if !label.glyphs.is_empty() || label.simple != SimpleMark::None {
                    return Err(RegistryError::NoneWithGlyphs);
                }
                continue;
            }
            if label.glyphs.is_empty() {
                return Err(RegistryError::EmptyGlyphs(label.id.clone()));
            }
            if let Some(glyph) = label.glyphs.chars().find(|c| !is_punctuation_glyph(*c)) {
                return Err(RegistryError::ForeignGlyph {
                    id: label.id.clone(),
                    glyph,
                });
            }
            if let Some(&first) = by_glyphs.get(&label.glyphs) {
                return Err(RegistryError::DuplicateGlyphs {
                    first: labels[first].id.clone(),
                    second: label.id.clone(),
                    glyphs: label.glyphs.clone(),
                });
            }
            by_glyphs.insert(label.glyphs.clone(), i);
        }
        let count = labels.iter().filter(|l| !l.is_none()).count();
        if count != LABEL_COUNT {
            return Err(RegistryError::WrongCount(count));
        }
        Ok(LabelRegistry {
            labels,
            by_id,
            by_glyphs,
        })
    }

    pub fn get(&self, id: &str) -> Option<&PunctLabel> {
        self.by_id.get(id).map(|&i| &self.labels[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    /// All labels, `None` included, in file order.
    pub fn labels(&self) -> &[PunctLabel] {
        &self.labels
    }

    pub fn by_glyphs(&self, glyphs: &str) -> Option<&PunctLabel> {
        self.by_glyphs.get(glyphs).map(|&i| &self.labels[i])
    }

    /// Whether a label ends a sentence (projects to a period or question mark).
    pub fn is_sentence_final(&self, id: &str) -> bool {
        self.get(id)
            .is_some_and(|l| matches!(l.simple, SimpleMark::Period | SimpleMark::Question))
    }

    fn resolve<'a>(&'a self, text: &'a str, labels: &[String]) -> Result<Vec<(&'a str, &'a PunctLabel)>, PunctError> {
        let chars: Vec<&str> = text.graphemes(true).collect();
        if chars.len() != labels.len() {
            return Err(PunctError::LengthMismatch {
                expected: chars.len(),
                actual: labels.len(),
            });
        }
        chars
            .into_iter()
            .zip(labels)
            .map(|(c, id)| {
                self.get(id)
                    .map(|l| (c, l))
                    .ok_or_else(|| PunctError::UnknownLabel(id.clone()))
            })
            .collect()
    }

    fn render(&self, text: &str, labels: &[String], mode: RenderMode) -> Result<(String, Vec<usize>), PunctError> {
        let resolved = self.resolve(text, labels)?;
        let last = resolved.len().saturating_sub(1);
        let mut out = String::with_capacity(text.len() * 2);
        let mut offsets = Vec::with_capacity(resolved.len());
        let mut pos = 0;
        for (i, (c, label)) in resolved.into_iter().enumerate() {
            offsets.push(pos);
            out.push_str(c);
            pos += 1;
            match mode {
                RenderMode::Comprehensive => {
                    out.push_str(&label.glyphs);
                    pos += label.glyphs.chars().count();
                }
                RenderMode::Simple | RenderMode::SimpleWithSpace => {
                    if let Some(g) = label.simple.glyph() {
                        out.push(g);
                        pos += 1;
                        if mode == RenderMode::SimpleWithSpace && i != last {
                            out.push(' ');
                            pos += 1;
                        }
                    }
                }
            }
        }
        Ok((out, offsets))
    }

    /// Renders `text` with `labels` inserted after their carrier characters.
    pub fn apply_labels(&self, text: &str, labels: &[String], mode: RenderMode) -> Result<String, PunctError> {
        self.render(text, labels, mode).map(|(s, _)| s)
    }

    /// Maps each raw character index to its character index in the rendering.
    pub fn align_offsets(&self, text: &str, labels: &[String], mode: RenderMode) -> Result<Vec<usize>, PunctError> {
        self.render(text, labels, mode).map(|(_, o)| o)
    }

    /// Inverse of [`apply_labels`](Self::apply_labels) in comprehensive mode.
    pub fn strip_punctuation(&self, punctuated: &str) -> Result<(String, PunctLabelSeq), PunctError> {
        let mut raw = String::with_capacity(punctuated.len());
        let mut labels: Vec<String> = Vec::new();
        let mut run = String::new();

        let close_run = |run: &mut String, labels: &mut Vec<String>| -> Result<(), PunctError> {
            if run.is_empty() {
                return Ok(());
            }
            let label = self.by_glyphs(run).ok_or_else(|| PunctError::UnrecognizedGlyphRun {
                run: run.clone(),
                position: labels.len() - 1,
            })?;
            *labels.last_mut().expect("run follows a character") = label.id.clone();
            run.clear();
            Ok(())
        };

        for g in punctuated.graphemes(true) {
            if is_punctuation_grapheme(g) {
                if labels.is_empty() {
                    return Err(PunctError::LeadingPunctuation);
                }
                run.push_str(g);
            } else {
                close_run(&mut run, &mut labels)?;
                raw.push_str(g);
                labels.push(NONE_LABEL.to_string());
            }
        }
        close_run(&mut run, &mut labels)?;
        Ok((raw, PunctLabelSeq(labels)))
    }
}
