//! Offline batch processing: one JSON result per input file plus a summary.
//!
//! Output is a pure function of the inputs and configuration (no
//! timestamps, sorted keys and file order), so two runs over the same
//! corpus produce byte-identical directories.

use std::collections::BTreeMap;
use std::fs;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Platform;
use crate::entities::{EntitySpan, TagSeq};
use crate::punctuation::{PunctLabelSeq, RenderMode};
use crate::translation::LanguageTag;

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no input files")]
    NoInputs,
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BatchError + '_ {
    move |source| BatchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchTask {
    Punctuate,
    Ner,
    Translate,
}

impl FromStr for BatchTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "punctuate" => Ok(BatchTask::Punctuate),
            "ner" => Ok(BatchTask::Ner),
            "translate" => Ok(BatchTask::Translate),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub tasks: Vec<BatchTask>,
    pub targets: Vec<LanguageTag>,
    pub mode: RenderMode,
    pub backend: Option<String>,
    pub jobs: NonZeroUsize,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            tasks: vec![BatchTask::Punctuate, BatchTask::Ner, BatchTask::Translate],
            targets: vec![LanguageTag::Korean],
            mode: RenderMode::Comprehensive,
            backend: None,
            jobs: std::thread::available_parallelism().unwrap_or(NonZeroUsize::MIN),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PunctuationResult {
    pub labels: PunctLabelSeq,
    pub rendered: String,
    pub offsets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityResult {
    pub tags: TagSeq,
    pub spans: Vec<EntitySpan>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentResult {
    pub source: String,
    /// Input with surrounding whitespace trimmed and punctuation removed.
    pub text: String,
    pub punctuation: Option<PunctuationResult>,
    pub entities: Option<EntityResult>,
    pub translations: BTreeMap<String, String>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub source: String,
    pub output: String,
    pub ok: bool,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub files: Vec<SummaryEntry>,
}

/// Expands directories into their `.txt` files (not recursive) and sorts.
pub fn collect_inputs(paths: &[PathBuf]) -> Result<Vec<PathBuf>, BatchError> {
    let mut out = Vec::new();
    for path in paths {
        if path.is_dir() {
            for entry in fs::read_dir(path).map_err(io_err(path))? {
                let p = entry.map_err(io_err(path))?.path();
                if p.is_file() && p.extension().is_some_and(|e| e == "txt") {
                    out.push(p);
                }
            }
        } else {
            out.push(path.clone());
        }
    }
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(BatchError::NoInputs);
    }
    Ok(out)
}

/// Output file names: `<file name>.json`, with `.2`, `.3`, ... inserted on
/// collisions in input order.
fn output_names(inputs: &[PathBuf]) -> Vec<String> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    inputs
        .iter()
        .map(|p| {
            let base = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "input".into());
            let n = seen.entry(base.clone()).or_insert(0);
            *n += 1;
            if *n == 1 {
                format!("{base}.json")
            } else {
                format!("{base}.{n}.json")
            }
        })
        .collect()
}

pub async fn process_document(platform: &Platform, source: String, raw: &str, options: &BatchOptions) -> DocumentResult {
    let mut doc = DocumentResult {
        source,
        text: crate::punctuation::remove_punctuation(raw.trim()),
        punctuation: None,
        entities: None,
        translations: BTreeMap::new(),
        errors: Vec::new(),
    };
    let backend = options.backend.as_deref();
    for task in &options.tasks {
        match task {
            BatchTask::Punctuate => match platform.punctuate(&doc.text, options.mode, backend).await {
                Ok(out) => {
                    doc.punctuation = Some(PunctuationResult {
                        labels: out.labels,
                        rendered: out.rendered,
                        offsets: out.offsets,
                    })
                }
                Err(e) => doc.errors.push(format!("punctuate: {e}")),
            },
            BatchTask::Ner => match platform.ner(&doc.text, backend).await {
                Ok(out) => {
                    doc.entities = Some(EntityResult {
                        tags: out.tags,
                        spans: out.spans,
                    })
                }
                Err(e) => doc.errors.push(format!("ner: {e}")),
            },
            BatchTask::Translate => {
                for target in &options.targets {
                    match platform.translate_text(&doc.text, *target, backend).await {
                        Ok(t) => {
                            doc.translations.insert(target.to_string(), t);
                        }
                        Err(e) => doc.errors.push(format!("translate ({target}): {e}")),
                    }
                }
            }
        }
    }
    doc
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("results serialize");
    bytes.push(b'\n');
    bytes
}

/// Processes every input with at most `options.jobs` documents in flight
/// and writes results into `out_dir`.
pub async fn run_batch(platform: &Platform, inputs: &[PathBuf], out_dir: &Path, options: &BatchOptions) -> Result<Summary, BatchError> {
    if inputs.is_empty() {
        return Err(BatchError::NoInputs);
    }
    if options.tasks.is_empty() {
        return Err(BatchError::Invalid("no tasks selected".into()));
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let names = output_names(inputs);

    let mut entries: Vec<(usize, SummaryEntry)> = stream::iter(inputs.iter().zip(&names).enumerate())
        .map(|(i, (path, name))| async move {
            let source = path.to_string_lossy().into_owned();
            let doc = match fs::read(path) {
                Ok(bytes) => match String::from_utf8(bytes) {
                    Ok(raw) => process_document(platform, source.clone(), &raw, options).await,
                    Err(_) => failed_doc(source.clone(), "input is not valid UTF-8".into()),
                },
                Err(e) => failed_doc(source.clone(), format!("cannot read input: {e}")),
            };
            let out_path = out_dir.join(name);
            fs::write(&out_path, to_json(&doc)).map_err(io_err(&out_path))?;
            Ok::<_, BatchError>((
                i,
                SummaryEntry {
                    source,
                    output: name.clone(),
                    ok: doc.errors.is_empty(),
                    errors: doc.errors,
                },
            ))
        })
        .buffer_unordered(options.jobs.get())
        .collect::<Vec<_>>()
        .await
        .into_iter()
        .collect::<Result<_, _>>()?;
    entries.sort_by_key(|(i, _)| *i);

    let files: Vec<SummaryEntry> = entries.into_iter().map(|(_, e)| e).collect();
    let succeeded = files.iter().filter(|e| e.ok).count();
    let summary = Summary {
        total: files.len(),
        succeeded,
        failed: files.len() - succeeded,
        files,
    };
    let path = out_dir.join(SUMMARY_FILE);
    fs::write(&path, to_json(&summary)).map_err(io_err(&path))?;
    Ok(summary)
}

fn failed_doc(source: String, error: String) -> DocumentResult {
    DocumentResult {
        source,
        text: String::new(),
        punctuation: None,
        entities: None,
        translations: BTreeMap::new(),
        errors: vec![error],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collisions_get_suffixes() {
        let inputs = vec![PathBuf::from("a/x.txt"), PathBuf::from("b/x.txt"), PathBuf::from("b/y.txt")];
        assert_eq!(output_names(&inputs), ["x.txt.json", "x.txt.2.json", "y.txt.json"]);
    }

    #[tokio::test]
    async fn empty_document_fails_every_task() {
        let p = Platform::bundled();
        let doc = process_document(&p, "e.txt".into(), "  \n", &BatchOptions::default()).await;
        assert_eq!(doc.errors.len(), 3);
        assert!(doc.punctuation.is_none());
    }

    #[tokio::test]
    async fn document_results() {
        let p = Platform::bundled();
        let doc = process_document(&p, "d.txt".into(), "子曰學\n", &BatchOptions::default()).await;
        assert!(doc.errors.is_empty());
        assert_eq!(doc.punctuation.unwrap().rendered, "子曰：「學");
        assert_eq!(doc.translations["Korean"], "자 왈 학");
    }
}
