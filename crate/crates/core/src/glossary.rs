//! Character glossary: CC-CEDICT definitions, Hangul readings and links to
//! an external dictionary, produced one entry per character.

use std::collections::HashMap;
use std::io::BufRead;

use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text;

const DEFAULT_CEDICT: &str = include_str!("../data/cedict_sample.u8");
const DEFAULT_READINGS: &str = include_str!("../data/readings.tsv");

pub const DEFAULT_URL_TEMPLATE: &str = "https://hanja.dict.naver.com/#/search?query={q}";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GlossaryError {
    #[error("expected a single character, got `{0}`")]
    NotSingleCharacter(String),
    #[error("URL template `{0}` has no {{q}} placeholder")]
    MissingPlaceholder(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CedictEntry {
    pub traditional: String,
    pub simplified: String,
    pub pinyin: String,
    pub definitions: Vec<String>,
}

impl CedictEntry {
    /// Parses one `TRAD SIMP [pinyin] /def1/def2/` line.
    pub fn parse_line(line: &str) -> Option<CedictEntry> {
        let line = line.trim();
        let (traditional, rest) = line.split_once(' ')?;
        let (simplified, rest) = rest.trim_start().split_once(' ')?;
        let rest = rest.trim_start().strip_prefix('[')?;
        let (pinyin, rest) = rest.split_once(']')?;
        let defs = rest.trim().strip_prefix('/')?.strip_suffix('/')?;
        let definitions: Vec<String> = defs
            .split('/')
            .filter(|d| !d.trim().is_empty())
            .map(str::to_string)
            .collect();
        if traditional.is_empty() || simplified.is_empty() || definitions.is_empty() {
            return None;
        }
        Some(CedictEntry {
            traditional: traditional.to_string(),
            simplified: simplified.to_string(),
            pinyin: pinyin.trim().to_string(),
            definitions,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CedictParse {
    pub entries: Vec<CedictEntry>,
    /// Non-blank, non-comment lines that were not valid entries.
    pub skipped: usize,
}

pub fn parse_cedict(source: &str) -> CedictParse {
    let mut parse = CedictParse::default();
    for line in source.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match CedictEntry::parse_line(trimmed) {
            Some(entry) => parse.entries.push(entry),
            None => parse.skipped += 1,
        }
    }
    parse
}

/// Same as [`parse_cedict`] over a reader. Lines that are not valid UTF-8
/// count as skipped.
pub fn parse_cedict_reader<R: BufRead>(mut reader: R) -> std::io::Result<CedictParse> {
    let mut parse = CedictParse::default();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        match std::str::from_utf8(&buf) {
            Ok(line) => {
                let one = parse_cedict(line);
                parse.entries.extend(one.entries);
                parse.skipped += one.skipped;
            }
            Err(_) => parse.skipped += 1,
        }
    }
    Ok(parse)
}

/// Definitions keyed by traditional headword.
#[derive(Debug, Clone, Default)]
pub struct CedictIndex {
    chars: HashMap<String, Vec<String>>,
    words: HashMap<String, Vec<String>>,
}

impl CedictIndex {
    pub fn new(entries: &[CedictEntry]) -> Self {
        let mut index = CedictIndex::default();
        for entry in entries {
            let target = if text::char_count(&entry.traditional) == 1 {
                &mut index.chars
            } else {
                &mut index.words
            };
            let defs = target.entry(entry.traditional.clone()).or_default();
            for d in &entry.definitions {
                if !defs.contains(d) {
                    defs.push(d.clone());
                }
            }
        }
        index
    }

    /// Definitions of a single character; multi-character words never match.
    pub fn definitions(&self, ch: &str) -> &[String] {
        self.chars.get(ch).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Definitions of a multi-character word.
    pub fn lookup_word(&self, word: &str) -> Option<&[String]> {
        self.words.get(word).map(Vec::as_slice)
    }

    pub fn char_count(&self) -> usize {
        self.chars.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedLine {
    pub line: usize,
    pub content: String,
}

/// Single character to Hangul reading.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReadingTable {
    readings: HashMap<String, String>,
}

fn is_hangul(c: char) -> bool {
    matches!(c, '\u{AC00}'..='\u{D7A3}' | '\u{1100}'..='\u{11FF}' | '\u{3130}'..='\u{318F}')
}

impl ReadingTable {
    /// Loads `char<TAB>reading` lines. Later duplicates overwrite earlier
    /// ones; bad lines are returned alongside the table.
    pub fn parse(source: &str) -> (ReadingTable, Vec<MalformedLine>) {
        let mut table = ReadingTable::default();
        let mut malformed = Vec::new();
        for (idx, line) in source.lines().enumerate() {
            let trimmed = line.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let valid = trimmed.split_once('\t').and_then(|(ch, reading)| {
                let reading = reading.trim();
                let ok = text::char_count(ch) == 1 && !reading.is_empty() && reading.chars().all(is_hangul);
                ok.then(|| (ch.to_string(), reading.to_string()))
            });
            match valid {
                Some((ch, reading)) => {
                    table.readings.insert(ch, reading);
                }
                None => malformed.push(MalformedLine {
                    line: idx + 1,
                    content: trimmed.to_string(),
                }),
            }
        }
        (table, malformed)
    }

    pub fn get(&self, ch: &str) -> Option<&str> {
        self.readings.get(ch).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.readings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }
}

impl FromIterator<(String, String)> for ReadingTable {
    fn from_iter<I: IntoIterator<Item = (String, String)>>(iter: I) -> Self {
        ReadingTable {
            readings: iter.into_iter().collect(),
        }
    }
}

/// External dictionary URL template containing a `{q}` placeholder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UrlTemplate(String);

impl UrlTemplate {
    pub fn new(template: impl Into<String>) -> Result<Self, GlossaryError> {
        let template = template.into();
        if !template.contains("{q}") {
            return Err(GlossaryError::MissingPlaceholder(template));
        }
        Ok(UrlTemplate(template))
    }

    pub fn link(&self, ch: &str) -> Result<String, GlossaryError> {
        if text::char_count(ch) != 1 {
            return Err(GlossaryError::NotSingleCharacter(ch.to_string()));
        }
        let q = utf8_percent_encode(ch, NON_ALPHANUMERIC).to_string();
        Ok(self.0.replace("{q}", &q))
    }
}

impl Default for UrlTemplate {
    fn default() -> Self {
        UrlTemplate(DEFAULT_URL_TEMPLATE.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlossaryEntry {
    #[serde(rename = "char")]
    pub ch: String,
    pub reading: Option<String>,
    pub definitions: Vec<String>,
    pub link: String,
}

#[derive(Debug, Clone, Default)]
pub struct Glossary {
    pub readings: ReadingTable,
    pub cedict: CedictIndex,
    pub template: UrlTemplate,
}

impl Glossary {
    pub fn new(readings: ReadingTable, cedict: CedictIndex, template: UrlTemplate) -> Self {
        Glossary {
            readings,
            cedict,
            template,
        }
    }

    /// Glossary built from the bundled sample dictionary and reading table.
    pub fn bundled() -> Self {
        let (readings, _) = ReadingTable::parse(DEFAULT_READINGS);
        let cedict = CedictIndex::new(&parse_cedict(DEFAULT_CEDICT).entries);
        Glossary::new(readings, cedict, UrlTemplate::default())
    }

    pub fn annotate(&self, text: &str) -> Vec<GlossaryEntry> {
        text::chars(text)
            .into_iter()
            .map(|ch| GlossaryEntry {
                ch: ch.to_string(),
                reading: self.readings.get(ch).map(str::to_string),
                definitions: self.cedict.definitions(ch).to_vec(),
                link: self.template.link(ch).expect("single character"),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_cedict_line() {
        let parse = parse_cedict("中國 中国 [Zhong1 guo2] /China/");
        assert_eq!(parse.skipped, 0);
        assert_eq!(
            parse.entries,
            vec![CedictEntry {
                traditional: "中國".into(),
                simplified: "中国".into(),
                pinyin: "Zhong1 guo2".into(),
                definitions: vec!["China".into()],
            }]
        );
    }

    #[test]
    fn comments_and_garbage() {
        assert_eq!(parse_cedict("# CC-CEDICT"), CedictParse::default());
        let garbage = parse_cedict("garbage line");
        assert!(garbage.entries.is_empty());
        assert_eq!(garbage.skipped, 1);
        assert_eq!(parse_cedict("中 中 [zhong1] //").skipped, 1);
        assert_eq!(parse_cedict("\n   \n").skipped, 0);
    }

    #[test]
    fn reader_counts_invalid_utf8_as_skipped() {
        let bytes: &[u8] = b"\xff\xfe bad\n\xe5\xad\xb8 \xe5\xad\xa6 [xue2] /to learn/\n";
        let parse = parse_cedict_reader(bytes).unwrap();
        assert_eq!(parse.skipped, 1);
        assert_eq!(parse.entries.len(), 1);
    }

    #[test]
    fn readings_last_wins_and_reports_bad_lines() {
        let (t, bad) = ReadingTable::parse("學\t학");
        assert_eq!(t.get("學"), Some("학"));
        assert!(bad.is_empty());

        let (t, _) = ReadingTable::parse("");
        assert!(t.is_empty());

        let (t, _) = ReadingTable::parse("學\t학\n學\t교");
        assert_eq!(t.get("學"), Some("교"));
        assert_eq!(t.len(), 1);

        let (t, bad) = ReadingTable::parse("學學\t학\n子\tja\n曰\n子\t자");
        assert_eq!(t.len(), 1);
        assert_eq!(bad.iter().map(|m| m.line).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn link_percent_encodes() {
        let t = UrlTemplate::new("https://example-dict/{q}").unwrap();
        assert_eq!(t.link("學").unwrap(), "https://example-dict/%E5%AD%B8");
        assert_eq!(
            t.link("學而"),
            Err(GlossaryError::NotSingleCharacter("學而".into()))
        );
        assert!(matches!(
            UrlTemplate::new("https://example-dict/"),
            Err(GlossaryError::MissingPlaceholder(_))
        ));
    }

    #[test]
    fn index_keeps_words_out_of_character_lookup() {
        let parse = parse_cedict("中 中 [zhong1] /middle/\n中國 中国 [Zhong1 guo2] /China/\n");
        let index = CedictIndex::new(&parse.entries);
        assert_eq!(index.definitions("中"), ["middle"]);
        assert!(index.definitions("中國").is_empty());
        assert_eq!(index.lookup_word("中國").unwrap(), ["China"]);
    }

    #[test]
    fn index_merges_homograph_entries() {
        let parse = parse_cedict("樂 乐 [le4] /happy/\n樂 乐 [yue4] /music/\n");
        let index = CedictIndex::new(&parse.entries);
        assert_eq!(index.definitions("樂"), ["happy", "music"]);
    }

    #[test]
    fn annotate_bundled() {
        let g = Glossary::bundled();
        let out = g.annotate("學");
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].reading.as_deref(), Some("학"));
        assert_eq!(out[0].definitions[..2], ["to learn", "to study"]);
        assert!(out[0].link.ends_with("%E5%AD%B8"));

        assert!(g.annotate("").is_empty());

        let unknown = g.annotate("㐀");
        assert_eq!(unknown[0].reading, None);
        assert!(unknown[0].definitions.is_empty());
        assert!(unknown[0].link.contains("%E3%90%80"));
    }
}
