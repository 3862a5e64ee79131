//! HTTP client for remotely served models.
//!
//! Sequence labeling: `POST {v:1, task:"punct"|"ner", text}` answered by
//! `{v:1, labels:[...]}`. Translation: `POST {v:1, prompt}` answered by
//! newline-delimited `{delta, done}` objects ending with `done: true`.

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use futures::StreamExt;
use serde::{Deserialize, Serialize};
use tokio::sync::{OwnedSemaphorePermit, Semaphore};

use super::{Backend, BackendDescriptor, BackendError, FragmentStream};
use crate::entities::{parse_tags, TagSeq};
use crate::punctuation::{LabelRegistry, PunctLabelSeq};
use crate::text;
use crate::translation::{build_prompt, LanguageTag};

pub const WIRE_VERSION: u32 = 1;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 32;

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct LabelRequest {
    pub v: u32,
    pub task: String,
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct LabelResponse {
    pub v: u32,
    pub labels: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct TranslateRequest {
    pub v: u32,
    pub prompt: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct WireDelta {
    #[serde(default)]
    pub delta: String,
    pub done: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct RemoteBackend {
    descriptor: BackendDescriptor,
    endpoint: String,
    client: reqwest::Client,
    permits: Arc<Semaphore>,
    registry: Arc<LabelRegistry>,
}

fn unavailable(e: impl std::fmt::Display) -> BackendError {
    BackendError::Unavailable(e.to_string())
}

fn invalid(e: impl std::fmt::Display) -> BackendError {
    BackendError::InvalidResponse(e.to_string())
}

impl RemoteBackend {
    pub fn new(descriptor: BackendDescriptor, registry: Arc<LabelRegistry>, max_in_flight: usize) -> Result<Self, BackendError> {
        descriptor.validate().map_err(|e| BackendError::InvalidInput(e.to_string()))?;
        let endpoint = descriptor.endpoint.clone().unwrap_or_default();
        let client = reqwest::Client::builder()
            .connect_timeout(Duration::from_secs(5))
            .build()
            .map_err(unavailable)?;
        Ok(RemoteBackend {
            descriptor,
            endpoint,
            client,
            permits: Arc::new(Semaphore::new(max_in_flight.max(1))),
            registry,
        })
    }

    async fn permit(&self) -> Result<OwnedSemaphorePermit, BackendError> {
        self.permits.clone().acquire_owned().await.map_err(unavailable)
    }

    async fn post<T: Serialize>(&self, body: &T) -> Result<reqwest::Response, BackendError> {
        let response = self.client.post(&self.endpoint).json(body).send().await.map_err(unavailable)?;
        let status = response.status();
        if status.is_server_error() {
            return Err(unavailable(format!("{} answered {status}", self.endpoint)));
        }
        if !status.is_success() {
            return Err(invalid(format!("{} answered {status}", self.endpoint)));
        }
        Ok(response)
    }

    async fn labels(&self, task: &str, text: &str) -> Result<Vec<String>, BackendError> {
        let _permit = self.permit().await?;
        let request = LabelRequest {
            v: WIRE_VERSION,
            task: task.into(),
            text: text.into(),
        };
        let body: LabelResponse = self.post(&request).await?.json().await.map_err(invalid)?;
        if body.v != WIRE_VERSION {
            return Err(invalid(format!("unsupported response version {}", body.v)));
        }
        let expected = text::char_count(text);
        if body.labels.len() != expected {
            return Err(invalid(format!(
                "{} labels for {expected} characters",
                body.labels.len()
            )));
        }
        Ok(body.labels)
    }
}

struct DeltaReader {
    body: futures::stream::BoxStream<'static, reqwest::Result<bytes::Bytes>>,
    buffer: Vec<u8>,
    finished: bool,
    _permit: OwnedSemaphorePermit,
}

impl DeltaReader {
    fn take_line(&mut self) -> Option<Vec<u8>> {
        let pos = self.buffer.iter().position(|b| *b == b'\n')?;
        let mut line: Vec<u8> = self.buffer.drain(..=pos).collect();
        line.pop();
        Some(line)
    }

    /// Next non-empty line, or `None` at end of body. A final line without a
    /// trailing newline is still returned.
    async fn next_line(&mut self) -> Result<Option<Vec<u8>>, BackendError> {
        loop {
            if let Some(line) = self.take_line() {
                if line.iter().all(u8::is_ascii_whitespace) {
                    continue;
                }
                return Ok(Some(line));
            }
            match self.body.next().await {
                Some(chunk) => self.buffer.extend_from_slice(&chunk.map_err(unavailable)?),
                None if self.buffer.iter().all(u8::is_ascii_whitespace) => return Ok(None),
                None => return Ok(Some(std::mem::take(&mut self.buffer))),
            }
        }
    }
}

/// Parses one line of a translation stream.
pub fn parse_delta_line(line: &[u8]) -> Result<WireDelta, BackendError> {
    let delta: WireDelta = serde_json::from_slice(line).map_err(invalid)?;
    if let Some(error) = delta.error {
        return Err(BackendError::Unavailable(error));
    }
    Ok(delta)
}

#[async_trait]
impl Backend for RemoteBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    async fn label_punctuation(&self, text: &str) -> Result<PunctLabelSeq, BackendError> {
        let labels = self.labels("punct", text).await?;
        if let Some(bad) = labels.iter().find(|l| !self.registry.contains(l)) {
            return Err(invalid(format!("unknown punctuation label `{bad}`")));
        }
        Ok(PunctLabelSeq(labels))
    }

    async fn tag_entities(&self, text: &str) -> Result<TagSeq, BackendError> {
        let labels = self.labels("ner", text).await?;
        parse_tags(&labels).map_err(invalid)
    }

    async fn translate_chunk(&self, text: &str, target: LanguageTag) -> Result<FragmentStream, BackendError> {
        let prompt = build_prompt(LanguageTag::Hanja, target, text)?;
        let permit = self.permit().await?;
        let response = self
            .post(&TranslateRequest {
                v: WIRE_VERSION,
                prompt,
            })
            .await?;
        let reader = DeltaReader {
            body: response.bytes_stream().boxed(),
            buffer: Vec::new(),
            finished: false,
            _permit: permit,
        };
        let stream = futures::stream::unfold(reader, |mut reader| async move {
            if reader.finished {
                return None;
            }
            loop {
                let line = match reader.next_line().await {
                    Ok(Some(line)) => line,
                    Ok(None) => {
                        reader.finished = true;
                        return Some((Err(BackendError::StreamTruncated), reader));
                    }
                    Err(e) => {
                        reader.finished = true;
                        return Some((Err(e), reader));
                    }
                };
                match parse_delta_line(&line) {
                    Ok(delta) if delta.done => {
                        reader.finished = true;
                        // nothing may follow the final delta
                        match reader.next_line().await {
                            Ok(None) => {}
                            Ok(Some(_)) => return Some((Err(invalid("delta after done")), reader)),
                            Err(e) => return Some((Err(e), reader)),
                        }
                        if delta.delta.is_empty() {
                            return None;
                        }
                        return Some((Ok(delta.delta), reader));
                    }
                    Ok(delta) => {
                        if delta.delta.is_empty() {
                            continue;
                        }
                        return Some((Ok(delta.delta), reader));
                    }
                    Err(e) => {
                        reader.finished = true;
                        return Some((Err(e), reader));
                    }
                }
            }
        });
        Ok(Box::pin(stream))
    }
}
