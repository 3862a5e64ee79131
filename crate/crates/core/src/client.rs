//! Client for a running gateway, used by the CLI's `--server` mode.

use futures::stream::BoxStream;
use futures::StreamExt;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::gateway::ApiError;
use crate::glossary::GlossaryEntry;
use crate::pipeline::{NerOutput, PunctuateOutput};
use crate::punctuation::RenderMode;
use crate::translation::{LanguageTag, StreamDelta};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot reach {url}: {message}")]
    Transport { url: String, message: String },
    #[error("{} ({:?}): {}", status, .error.code, .error.message)]
    Api { status: u16, error: ApiError },
    #[error("unexpected response: {0}")]
    Protocol(String),
}

pub struct GatewayClient {
    base: String,
    token: Option<String>,
    http: reqwest::Client,
}

impl GatewayClient {
    pub fn new(base: &str, token: Option<String>) -> Self {
        GatewayClient {
            base: base.trim_end_matches('/').to_string(),
            token,
            http: reqwest::Client::new(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn send(&self, request: reqwest::RequestBuilder, url: &str) -> Result<reqwest::Response, ClientError> {
        let request = match &self.token {
            Some(token) => request.bearer_auth(token),
            None => request,
        };
        let response = request.send().await.map_err(|e| ClientError::Transport {
            url: url.to_string(),
            message: e.to_string(),
        })?;
        let status = response.status();
        if status.is_success() {
            return Ok(response);
        }
        let body = response.bytes().await.unwrap_or_default();
        match serde_json::from_slice::<ApiError>(&body) {
            Ok(error) => Err(ClientError::Api {
                status: status.as_u16(),
                error,
            }),
            Err(_) => Err(ClientError::Protocol(format!("{status}: {}", String::from_utf8_lossy(&body)))),
        }
    }

    async fn post_json<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        let url = self.url(path);
        let response = self.send(self.http.post(&url).json(body), &url).await?;
        response.json().await.map_err(|e| ClientError::Protocol(e.to_string()))
    }

    /// Logs in and keeps the session token for later calls.
    pub async fn login(&mut self, email: &str, password: &str) -> Result<String, ClientError> {
        let session: serde_json::Value = self
            .post_json("/api/auth/login", &json!({"email": email, "password": password}))
            .await?;
        let token = session["token"]
            .as_str()
            .ok_or_else(|| ClientError::Protocol("login response has no token".into()))?
            .to_string();
        self.token = Some(token.clone());
        Ok(token)
    }

    pub async fn punctuate(&self, text: &str, mode: RenderMode, backend: Option<&str>) -> Result<PunctuateOutput, ClientError> {
        self.post_json("/api/punctuate", &json!({"text": text, "mode": mode.to_string(), "backend": backend}))
            .await
    }

    pub async fn ner(&self, text: &str, backend: Option<&str>) -> Result<NerOutput, ClientError> {
        self.post_json("/api/ner", &json!({"text": text, "backend": backend})).await
    }

    pub async fn glossary(&self, text: &str) -> Result<Vec<GlossaryEntry>, ClientError> {
        let url = self.url("/api/glossary");
        let query: String = percent_encoding::utf8_percent_encode(text, percent_encoding::NON_ALPHANUMERIC).to_string();
        let response = self.send(self.http.get(format!("{url}?text={query}")), &url).await?;
        response.json().await.map_err(|e| ClientError::Protocol(e.to_string()))
    }

    /// Streams translation deltas. A terminal error line becomes an `Err`.
    pub async fn translate(
        &self,
        text: &str,
        target: LanguageTag,
        backend: Option<&str>,
    ) -> Result<BoxStream<'static, Result<StreamDelta, ClientError>>, ClientError> {
        let url = self.url("/api/translate");
        let body = json!({"text": text, "target": target.name(), "backend": backend});
        let response = self.send(self.http.post(&url).json(&body), &url).await?;
        let bytes = response.bytes_stream();
        let lines = futures::stream::unfold((bytes, Vec::<u8>::new(), false), |(mut bytes, mut buf, ended)| async move {
            if ended {
                return None;
            }
            loop {
                if let Some(pos) = buf.iter().position(|b| *b == b'\n') {
                    let line: Vec<u8> = buf.drain(..=pos).collect();
                    if line.iter().all(u8::is_ascii_whitespace) {
                        continue;
                    }
                    return Some((parse_line(&line), (bytes, buf, false)));
                }
                match bytes.next().await {
                    Some(Ok(chunk)) => buf.extend_from_slice(&chunk),
                    Some(Err(e)) => return Some((Err(ClientError::Protocol(e.to_string())), (bytes, buf, true))),
                    None if buf.iter().all(u8::is_ascii_whitespace) => return None,
                    None => {
                        let line = std::mem::take(&mut buf);
                        return Some((parse_line(&line), (bytes, buf, true)));
                    }
                }
            }
        });
        Ok(lines.boxed())
    }
}

fn parse_line(line: &[u8]) -> Result<StreamDelta, ClientError> {
    let value: serde_json::Value = serde_json::from_slice(line).map_err(|e| ClientError::Protocol(e.to_string()))?;
    if let Some(error) = value.get("error") {
        let error: ApiError = serde_json::from_value(error.clone()).map_err(|e| ClientError::Protocol(e.to_string()))?;
        return Err(ClientError::Api { status: 200, error });
    }
    serde_json::from_value(value).map_err(|e| ClientError::Protocol(e.to_string()))
}
