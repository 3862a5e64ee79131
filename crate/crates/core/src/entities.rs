//! IOB2 tag codec and span editing for named entities.
//!
//! Spans are half-open character ranges over the raw (unpunctuated) text.
//! A span list is always kept sorted by start and pairwise disjoint.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityType {
    Person,
    Location,
    Organization,
    Misc,
}

impl EntityType {
    pub const ALL: [EntityType; 4] = [
        EntityType::Person,
        EntityType::Location,
        EntityType::Organization,
        EntityType::Misc,
    ];

    /// Short code used in tags (`PER`, `LOC`, `ORG`, `MISC`).
    pub fn code(self) -> &'static str {
        match self {
            EntityType::Person => "PER",
            EntityType::Location => "LOC",
            EntityType::Organization => "ORG",
            EntityType::Misc => "MISC",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        EntityType::ALL.into_iter().find(|t| t.code() == code)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    Outside,
    Begin(EntityType),
    Inside(EntityType),
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str("O"),
            Tag::Begin(t) => write!(f, "B-{}", t.code()),
            Tag::Inside(t) => write!(f, "I-{}", t.code()),
        }
    }
}

impl FromStr for Tag {
    type Err = EntityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(Tag::Outside);
        }
        let unknown = || EntityError::UnknownTag(s.to_string());
        let (prefix, code) = s.split_once('-').ok_or_else(unknown)?;
        let etype = EntityType::from_code(code).ok_or_else(unknown)?;
        match prefix {
            "B" => Ok(Tag::Begin(etype)),
            "I" => Ok(Tag::Inside(etype)),
            _ => Err(unknown()),
        }
    }
}

impl Serialize for Tag {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub type TagSeq = Vec<Tag>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub etype: EntityType,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, etype: EntityType) -> Self {
        EntitySpan { start, end, etype }
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.start <= pos && pos < self.end
    }

    pub fn overlaps(&self, other: &EntitySpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    fn check(&self, length: usize) -> Result<(), EntityError> {
        if self.start < self.end && self.end <= length {
            Ok(())
        } else {
            Err(EntityError::SpanOutOfRange {
                start: self.start,
                end: self.end,
                length,
            })
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EntityError {
    #[error("unknown tag `{0}`")]
    UnknownTag(String),
    #[error("span [{start}, {end}) is empty or outside a text of length {length}")]
    SpanOutOfRange { start: usize, end: usize, length: usize },
    #[error("spans overlap")]
    OverlappingSpans,
}

/// Parses wire-format tags such as `B-PER`.
pub fn parse_tags<S: AsRef<str>>(tags: &[S]) -> Result<TagSeq, EntityError> {
    tags.iter().map(|t| t.as_ref().parse()).collect()
}

/// Decodes tags into maximal entity spans. An `I-t` that does not continue a
/// span of type `t` opens a new span, as though it were `B-t`.
pub fn decode_iob2(tags: &[Tag]) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut open: Option<EntitySpan> = None;
    for (i, tag) in tags.iter().enumerate() {
        match *tag {
            Tag::Inside(t) if open.is_some_and(|s| s.etype == t) => {
                if let Some(span) = open.as_mut() {
                    span.end = i + 1;
                }
            }
            Tag::Begin(t) | Tag::Inside(t) => {
                spans.extend(open.take());
                open = Some(EntitySpan::new(i, i + 1, t));
            }
            Tag::Outside => spans.extend(open.take()),
        }
    }
    spans.extend(open);
    spans
}

/// Repairs a tag sequence into well-formed IOB2 without changing its spans.
pub fn repair_iob2(tags: &[Tag]) -> TagSeq {
    let spans = decode_iob2(tags);
    encode_iob2(&spans, tags.len()).expect("decoded spans are valid")
}

pub fn encode_iob2(spans: &[EntitySpan], length: usize) -> Result<TagSeq, EntityError> {
    let mut tags = vec![Tag::Outside; length];
    for span in spans {
        span.check(length)?;
        if tags[span.start..span.end].iter().any(|t| *t != Tag::Outside) {
            return Err(EntityError::OverlappingSpans);
        }
        tags[span.start] = Tag::Begin(span.etype);
        for tag in &mut tags[span.start + 1..span.end] {
            *tag = Tag::Inside(span.etype);
        }
    }
    Ok(tags)
}

/// Inserts `new`, dropping every existing span it overlaps.
pub fn add_span(spans: &[EntitySpan], new: EntitySpan, length: usize) -> Result<Vec<EntitySpan>, EntityError> {
    new.check(length)?;
    let mut out: Vec<EntitySpan> = spans.iter().copied().filter(|s| !s.overlaps(&new)).collect();
    let at = out.partition_point(|s| s.start < new.start);
    out.insert(at, new);
    Ok(out)
}

/// Removes the span covering `pos`, if any.
pub fn remove_span_at(spans: &[EntitySpan], pos: usize) -> Vec<EntitySpan> {
    spans.iter().copied().filter(|s| !s.contains(pos)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use EntityType::*;

    fn tags(s: &str) -> TagSeq {
        parse_tags(&s.split_whitespace().collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn decode_examples() {
        assert_eq!(
            decode_iob2(&tags("B-PER I-PER I-PER O B-LOC I-LOC")),
            vec![EntitySpan::new(0, 3, Person), EntitySpan::new(4, 6, Location)]
        );
        assert_eq!(decode_iob2(&tags("O O O")), vec![]);
        assert_eq!(decode_iob2(&tags("I-PER O")), vec![EntitySpan::new(0, 1, Person)]);
    }

    #[test]
    fn decode_splits_on_type_change_and_repeated_begin() {
        assert_eq!(
            decode_iob2(&tags("B-PER I-LOC B-PER B-PER")),
            vec![
                EntitySpan::new(0, 1, Person),
                EntitySpan::new(1, 2, Location),
                EntitySpan::new(2, 3, Person),
                EntitySpan::new(3, 4, Person),
            ]
        );
    }

    #[test]
    fn unknown_tags_rejected() {
        assert_eq!("B-ORG".parse::<Tag>(), Ok(Tag::Begin(Organization)));
        assert_eq!("B-XYZ".parse::<Tag>(), Err(EntityError::UnknownTag("B-XYZ".into())));
        assert!("E-PER".parse::<Tag>().is_err());
        assert!("".parse::<Tag>().is_err());
    }

    #[test]
    fn encode_examples() {
        assert_eq!(encode_iob2(&[EntitySpan::new(0, 2, Person)], 3).unwrap(), tags("B-PER I-PER O"));
        assert_eq!(encode_iob2(&[], 4).unwrap(), tags("O O O O"));
        assert_eq!(
            encode_iob2(&[EntitySpan::new(0, 3, Person), EntitySpan::new(4, 6, Location)], 6).unwrap(),
            tags("B-PER I-PER I-PER O B-LOC I-LOC")
        );
    }

    #[test]
    fn encode_errors() {
        assert!(matches!(
            encode_iob2(&[EntitySpan::new(2, 5, Person)], 4),
            Err(EntityError::SpanOutOfRange { .. })
        ));
        assert!(matches!(
            encode_iob2(&[EntitySpan::new(1, 1, Person)], 4),
            Err(EntityError::SpanOutOfRange { .. })
        ));
        assert_eq!(
            encode_iob2(&[EntitySpan::new(0, 2, Person), EntitySpan::new(1, 3, Misc)], 4),
            Err(EntityError::OverlappingSpans)
        );
    }

    #[test]
    fn add_span_examples() {
        assert_eq!(
            add_span(&[], EntitySpan::new(0, 2, Person), 10).unwrap(),
            vec![EntitySpan::new(0, 2, Person)]
        );
        assert_eq!(
            add_span(&[EntitySpan::new(0, 3, Person)], EntitySpan::new(2, 5, Location), 10).unwrap(),
            vec![EntitySpan::new(2, 5, Location)]
        );
        assert_eq!(
            add_span(
                &[EntitySpan::new(0, 2, Person), EntitySpan::new(5, 7, Misc)],
                EntitySpan::new(2, 5, Location),
                10
            )
            .unwrap(),
            vec![
                EntitySpan::new(0, 2, Person),
                EntitySpan::new(2, 5, Location),
                EntitySpan::new(5, 7, Misc)
            ]
        );
        assert!(add_span(&[], EntitySpan::new(3, 11, Person), 10).is_err());
    }

    #[test]
    fn remove_span_examples() {
        let one = [EntitySpan::new(0, 3, Person)];
        assert_eq!(remove_span_at(&one, 1), vec![]);
        assert_eq!(remove_span_at(&one, 3), one.to_vec());
        assert_eq!(
            remove_span_at(&[EntitySpan::new(0, 2, Person), EntitySpan::new(4, 6, Location)], 5),
            vec![EntitySpan::new(0, 2, Person)]
        );
    }

    #[test]
    fn tags_serialize_to_wire_strings() {
        let json = serde_json::to_string(&tags("B-MISC I-MISC O")).unwrap();
        assert_eq!(json, r#"["B-MISC","I-MISC","O"]"#);
        let back: TagSeq = serde_json::from_str(&json).unwrap();
        assert_eq!(back, tags("B-MISC I-MISC O"));
        assert!(serde_json::from_str::<TagSeq>(r#"["B-FOO"]"#).is_err());
    }

    #[test]
    fn repair_promotes_orphan_inside() {
        assert_eq!(repair_iob2(&tags("O I-LOC I-LOC B-PER I-MISC")), tags("O B-LOC I-LOC B-PER B-MISC"));
    }
}
