//! Deterministic rule-based backend.
//!
//! Punctuation comes from a trigger-character table, entities from
//! longest-match gazetteer lookup, and "translations" from glossary
//! readings or first English glosses. It needs no model weights, which makes
//! the whole platform runnable and testable on any machine.

use std::collections::HashMap;
use std::sync::Arc;

use async_trait::async_trait;
use thiserror::Error;

use super::{Backend, BackendDescriptor, BackendError, FragmentStream};
use crate::entities::{EntityType, Tag, TagSeq};
use crate::glossary::Glossary;
use crate::punctuation::{is_punctuation_glyph, LabelRegistry, PunctLabelSeq, NONE_LABEL};
use crate::text;
use crate::translation::LanguageTag;

const DEFAULT_RULES: &str = include_str!("../../data/punct_rules.tsv");
const DEFAULT_GAZETTEER: &str = include_str!("../../data/gazetteer.tsv");

/// Stand-in for a character without a reading or gloss.
pub const PLACEHOLDER: &str = "…";

/// Characters per streamed fragment.
pub const FRAGMENT_CHARS: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RuleError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

fn data_lines(source: &str) -> impl Iterator<Item = (usize, &str)> {
    source
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn two_fields(line_no: usize, line: &str) -> Result<(&str, &str), RuleError> {
    line.split_once('\t')
        .map(|(a, b)| (a.trim(), b.trim()))
        .filter(|(a, b)| !a.is_empty() && !b.is_empty())
        .ok_or_else(|| RuleError::Malformed {
            line: line_no,
            reason: "expected two tab-separated fields".into(),
        })
}

/// Trigger character to the label placed after it.
#[derive(Debug, Clone, Default)]
pub struct PunctRules(HashMap<String, String>);

impl PunctRules {
    pub fn parse(source: &str, registry: &LabelRegistry) -> Result<Self, RuleError> {
        let mut rules = HashMap::new();
        for (line_no, line) in data_lines(source) {
            let (ch, label) = two_fields(line_no, line)?;
            if text::char_count(ch) != 1 {
                return Err(RuleError::Malformed {
                    line: line_no,
                    reason: format!("`{ch}` is not a single character"),
                });
            }
            if !registry.contains(label) {
                return Err(RuleError::Malformed {
                    line: line_no,
                    reason: format!("unknown label `{label}`"),
                });
            }
            rules.insert(ch.to_string(), label.to_string());
        }
        Ok(PunctRules(rules))
    }

    pub fn label(&self, text: &str) -> PunctLabelSeq {
        text::chars(text)
            .into_iter()
            .map(|c| self.0.get(c).map_or(NONE_LABEL, String::as_str))
            .collect()
    }
}

/// Surface strings to entity types, matched longest first.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: HashMap<String, EntityType>,
    longest: usize,
}

impl Gazetteer {
    pub fn parse(source: &str) -> Result<Self, RuleError> {
        let mut gazetteer = Gazetteer::default();
        for (line_no, line) in data_lines(source) {
            let (surface, code) = two_fields(line_no, line)?;
            let etype = EntityType::from_code(code).ok_or_else(|| RuleError::Malformed {
                line: line_no,
                reason: format!("unknown entity type `{code}`"),
            })?;
            gazetteer.insert(surface, etype);
        }
        Ok(gazetteer)
    }

    pub fn insert(&mut self, surface: &str, etype: EntityType) {
        self.longest = self.longest.max(text::char_count(surface));
        self.entries.insert(surface.to_string(), etype);
    }

    /// Left-to-right, longest-match-first, non-overlapping tagging.
    pub fn tag(&self, text: &str) -> TagSeq {
        let chars = text::chars(text);
        let mut tags = vec![Tag::Outside; chars.len()];
        let mut i = 0;
        while i < chars.len() {
            let max = self.longest.min(chars.len() - i);
            let hit = (1..=max)
                .rev()
                .find_map(|len| self.entries.get(&chars[i..i + len].concat()).map(|t| (len, *t)));
            match hit {
                Some((len, etype)) => {
                    tags[i] = Tag::Begin(etype);
                    for tag in &mut tags[i + 1..i + len] {
                        *tag = Tag::Inside(etype);
                    }
                    i += len;
                }
                None => i += 1,
            }
        }
        tags
    }
}

pub struct ReferenceBackend {
    pub descriptor: BackendDescriptor,
    rules: PunctRules,
    gazetteer: Gazetteer,
    glossary: Arc<Glossary>,
}

impl ReferenceBackend {
    pub fn new(descriptor: BackendDescriptor, rules: PunctRules, gazetteer: Gazetteer, glossary: Arc<Glossary>) -> Self {
        ReferenceBackend {
            descriptor,
            rules,
            gazetteer,
            glossary,
        }
    }

    /// Reference backend over the bundled rule tables and glossary.
    pub fn bundled() -> Self {
        let registry = LabelRegistry::default();
        ReferenceBackend::new(
            BackendDescriptor::reference("reference"),
            PunctRules::parse(DEFAULT_RULES, &registry).expect("bundled rules are valid"),
            Gazetteer::parse(DEFAULT_GAZETTEER).expect("bundled gazetteer is valid"),
            Arc::new(Glossary::bundled()),
        )
    }

    pub fn default_rules(registry: &LabelRegistry) -> Result<PunctRules, RuleError> {
        PunctRules::parse(DEFAULT_RULES, registry)
    }

    pub fn default_gazetteer() -> Gazetteer {
        Gazetteer::parse(DEFAULT_GAZETTEER).expect("bundled gazetteer is valid")
    }

    /// Space-joined per-character readings (Korean) or first glosses (English).
    pub fn gloss_translation(&self, text: &str, target: LanguageTag) -> String {
        text::chars(text)
            .into_iter()
            .filter(|c| !c.chars().all(|ch| ch.is_whitespace() || is_punctuation_glyph(ch)))
            .map(|c| {
                let word = match target {
                    LanguageTag::Korean => self.glossary.readings.get(c),
                    _ => self.glossary.cedict.definitions(c).first().map(String::as_str),
                };
                word.unwrap_or(PLACEHOLDER)
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[async_trait]
impl Backend for ReferenceBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    async fn label_punctuation(&self, text: &str) -> Result<PunctLabelSeq, BackendError> {
        Ok(self.rules.label(text))
    }

    async fn tag_entities(&self, text: &str) -> Result<TagSeq, BackendError> {
        Ok(self.gazetteer.tag(text))
    }

    async fn translate_chunk(&self, text: &str, target: LanguageTag) -> Result<FragmentStream, BackendError> {
        let output = text::chars(&self.gloss_translation(text, target))
            .chunks(FRAGMENT_CHARS)
            .map(|piece| Ok(piece.concat()))
            .collect::<Vec<_>>();
        Ok(Box::pin(futures::stream::iter(output)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entities::parse_tags;
    use futures::StreamExt;

    fn labels(ids: &[&str]) -> PunctLabelSeq {
        ids.iter().copied().collect()
    }

    #[tokio::test]
    async fn punctuation_rules() {
        let b = ReferenceBackend::bundled();
        assert_eq!(
            b.label_punctuation("子曰學").await.unwrap(),
            labels(&["None", "ColonOpenQuote", "None"])
        );
        assert_eq!(b.label_punctuation("甲乙丙").await.unwrap(), labels(&["None", "None", "None"]));
        assert_eq!(
            b.label_punctuation("王者也").await.unwrap(),
            labels(&["None", "Comma", "Period"])
        );
    }

    #[test]
    fn rules_reject_unknown_labels() {
        let registry = LabelRegistry::default();
        assert!(PunctRules::parse("也\tFullStop\n", &registry).is_err());
        assert!(PunctRules::parse("也也\tPeriod\n", &registry).is_err());
        assert!(PunctRules::parse("也 Period\n", &registry).is_err());
    }

    #[tokio::test]
    async fn gazetteer_tagging() {
        let b = ReferenceBackend::bundled();
        assert_eq!(
            b.tag_entities("李舜臣到漢城").await.unwrap(),
            parse_tags(&["B-PER", "I-PER", "I-PER", "O", "B-LOC", "I-LOC"]).unwrap()
        );
        assert_eq!(b.tag_entities("甲乙").await.unwrap(), parse_tags(&["O", "O"]).unwrap());
    }

    #[test]
    fn longest_match_wins() {
        let g = Gazetteer::parse("漢\tLOC\n漢城\tLOC\n").unwrap();
        assert_eq!(g.tag("漢城"), parse_tags(&["B-LOC", "I-LOC"]).unwrap());
        assert_eq!(g.tag("漢江"), parse_tags(&["B-LOC", "O"]).unwrap());
        assert!(Gazetteer::parse("漢城\tCITY\n").is_err());
    }

    #[tokio::test]
    async fn translation_streams_glossary_words() {
        let readings = [("子", "자"), ("曰", "왈")]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let glossary = Glossary {
            readings,
            ..Glossary::default()
        };
        let b = ReferenceBackend::new(
            BackendDescriptor::reference("r"),
            PunctRules::default(),
            Gazetteer::default(),
            Arc::new(glossary),
        );
        let parts: Vec<String> = b
            .translate_chunk("子曰", LanguageTag::Korean)
            .await
            .unwrap()
            .map(Result::unwrap)
            .collect()
            .await;
        assert_eq!(parts.concat(), "자 왈");
        assert_eq!(b.gloss_translation("子", LanguageTag::English), PLACEHOLDER);
    }

    #[test]
    fn english_uses_first_gloss_and_skips_punctuation() {
        let b = ReferenceBackend::bundled();
        assert_eq!(b.gloss_translation("學，㐀", LanguageTag::English), "to learn …");
    }

    #[tokio::test]
    async fn fragments_are_bounded() {
        let b = ReferenceBackend::bundled();
        let parts: Vec<String> = b
            .translate_chunk("子曰學而時習之", LanguageTag::Korean)
            .await
            .unwrap()
            .map(Result::unwrap)
            .collect()
            .await;
        assert!(parts.len() > 1);
        assert!(parts.iter().all(|p| text::char_count(p) <= FRAGMENT_CHARS));
        assert_eq!(parts.concat(), "자 왈 학 이 시 습 지");
    }
}
