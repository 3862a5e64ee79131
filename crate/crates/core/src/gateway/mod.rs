//! HTTP API in front of the task pipeline and the annotation store.
//!
//! Task endpoints and annotation endpoints need a bearer session token.
//! The glossary lookup and the render/span helpers are public since they
//! never touch a backend or the store.

mod error;

use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, StreamExt};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

pub use error::{ApiError, ErrorCode};

use crate::config::Platform;
use crate::entities::{add_span, encode_iob2, remove_span_at, EntitySpan, TagSeq};
use crate::glossary::GlossaryEntry;
use crate::persistence::{AnnotationRecord, ExportFormat, Store, Task, TaskOutput, TaskParams, User};
use crate::pipeline::{NerOutput, PunctuateOutput};
use crate::punctuation::{PunctLabelSeq, RenderMode};
use crate::translation::{LanguageTag, StreamDelta};

pub const NDJSON: &str = "application/x-ndjson";

#[derive(Clone)]
pub struct AppState {
    pub platform: Arc<Platform>,
    pub store: Arc<Store>,
}

impl AppState {
    pub fn new(platform: Platform, store: Store) -> Self {
        AppState {
            platform: Arc::new(platform),
            store: Arc::new(store),
        }
    }
}

pub fn router(state: AppState) -> Router {
    // generous for the character limit even at 4 bytes per character
    let body_limit = state.platform.max_input_chars.saturating_mul(4).saturating_add(64 * 1024);
    Router::new()
        .route("/api/health", get(health))
        .route("/api/auth/register", post(register))
        .route("/api/auth/login", post(login))
        .route("/api/auth/logout", post(logout))
        .route("/api/me", get(me))
        .route("/api/punctuate", post(punctuate))
        .route("/api/render", post(render))
        .route("/api/ner", post(ner))
        .route("/api/ner/spans/add", post(spans_add))
        .route("/api/ner/spans/remove", post(spans_remove))
        .route("/api/translate", post(translate))
        .route("/api/glossary", get(glossary))
        .route("/api/annotations", post(create_annotation).get(list_annotations))
        .route("/api/annotations/export", get(export_annotations))
        .route("/api/annotations/{id}", get(get_annotation).patch(edit_annotation))
        .fallback(|| async { ApiError::new(ErrorCode::NotFound, "no such endpoint") })
        .layer(DefaultBodyLimit::max(body_limit))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// JSON body extractor whose rejections use the API error shape.
pub struct ApiJson<T>(pub T);

impl<S, T> FromRequest<S> for ApiJson<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(ApiJson(v)),
            Err(rejection) => Err(json_rejection(rejection)),
        }
    }
}

fn json_rejection(rejection: JsonRejection) -> ApiError {
    if rejection.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::new(ErrorCode::InputTooLarge, "request body is too large")
    } else {
        ApiError::new(ErrorCode::InvalidRequest, rejection.body_text())
    }
}

/// The user behind the request's bearer token.
pub struct AuthUser(pub User);

impl FromRequestParts<AppState> for AuthUser {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, ApiError> {
        let token = bearer_token(&parts.headers).ok_or_else(|| ApiError::new(ErrorCode::Unauthenticated, "missing bearer token"))?;
        let store = state.store.clone();
        let user = blocking(move || store.authenticate(&token)).await?;
        Ok(AuthUser(user))
    }
}

fn bearer_token(headers: &HeaderMap) -> Option<String> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
}

async fn blocking<T, E>(f: impl FnOnce() -> Result<T, E> + Send + 'static) -> Result<T, ApiError>
where
    T: Send + 'static,
    E: Into<ApiError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(Into::into),
        Err(e) => Err(ApiError::new(ErrorCode::Internal, e.to_string())),
    }
}

fn parse_field<T: std::str::FromStr<Err = String>>(value: Option<&str>) -> Result<Option<T>, ApiError> {
    value
        .map(|v| v.parse().map_err(|e: String| ApiError::new(ErrorCode::InvalidRequest, e)))
        .transpose()
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

#[derive(Deserialize)]
struct RegisterRequest {
    email: String,
    password: String,
    #[serde(default)]
    display_name: Option<String>,
}

async fn register(State(state): State<AppState>, ApiJson(req): ApiJson<RegisterRequest>) -> Result<impl IntoResponse, ApiError> {
    let store = state.store.clone();
    let user = blocking(move || {
        let name = req.display_name.unwrap_or_else(|| req.email.clone());
        store.register(&req.email, &req.password, &name)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(user)))
}

#[derive(Deserialize)]
struct LoginRequest {
    email: String,
    password: String,
}

async fn login(State(state): State<AppState>, ApiJson(req): ApiJson<LoginRequest>) -> Result<impl IntoResponse, ApiError> {
    let store = state.store.clone();
    let session = blocking(move || store.login(&req.email, &req.password)).await?;
    Ok(Json(session))
}

async fn logout(State(state): State<AppState>, _user: AuthUser, headers: HeaderMap) -> Result<StatusCode, ApiError> {
    let token = bearer_token(&headers).unwrap_or_default();
    let store = state.store.clone();
    blocking(move || store.logout(&token)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn me(AuthUser(user): AuthUser) -> Json<User> {
    Json(user)
}

#[derive(Deserialize)]
struct PunctuateRequest {
    text: String,
    #[serde(default)]
    mode: Option<String>,
    #[serde(default)]
    backend: Option<String>,
}

async fn punctuate(
    State(state): State<AppState>,
    _user: AuthUser,
    ApiJson(req): ApiJson<PunctuateRequest>,
) -> Result<Json<PunctuateOutput>, ApiError> {
    let mode = parse_field::<RenderMode>(req.mode.as_deref())?.unwrap_or_default();
    Ok(Json(state.platform.punctuate(&req.text, mode, req.backend.as_deref()).await?))
}

#[derive(Deserialize)]
struct RenderRequest {
    text: String,
    labels: PunctLabelSeq,
    #[serde(default)]
    mode: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RenderOutput {
    pub rendered: String,
    pub offsets: Vec<usize>,
}

/// Re-renders edited labels without calling a backend.
async fn render(State(state): State<AppState>, ApiJson(req): ApiJson<RenderRequest>) -> Result<Json<RenderOutput>, ApiError> {
    let mode = parse_field::<RenderMode>(req.mode.as_deref())?.unwrap_or_default();
    state.platform.check_size(&req.text)?;
    let registry = &state.platform.registry;
    let invalid = |e: crate::punctuation::PunctError| ApiError::new(ErrorCode::InvalidRequest, e.to_string());
    let rendered = registry.apply_labels(&req.text, &req.labels, mode).map_err(invalid)?;
    let offsets = registry.align_offsets(&req.text, &req.labels, mode).map_err(invalid)?;
    Ok(Json(RenderOutput { rendered, offsets }))
}

#[derive(Deserialize)]
struct NerRequest {
    text: String,
    #[serde(default)]
    backend: Option<String>,
}

async fn ner(State(state): State<AppState>, _user: AuthUser, ApiJson(req): ApiJson<NerRequest>) -> Result<Json<NerOutput>, ApiError> {
    Ok(Json(state.platform.ner(&req.text, req.backend.as_deref()).await?))
}

#[derive(Deserialize)]
struct SpanAddRequest {
    spans: Vec<EntitySpan>,
    span: EntitySpan,
    length: usize,
}

#[derive(Deserialize)]
struct SpanRemoveRequest {
    spans: Vec<EntitySpan>,
    position: usize,
    length: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SpanEditOutput {
    pub spans: Vec<EntitySpan>,
    pub tags: TagSeq,
}

fn span_output(spans: Vec<EntitySpan>, length: usize) -> Result<Json<SpanEditOutput>, ApiError> {
    let tags = encode_iob2(&spans, length).map_err(|e| ApiError::new(ErrorCode::InvalidRequest, e.to_string()))?;
    Ok(Json(SpanEditOutput { spans, tags }))
}

async fn spans_add(ApiJson(req): ApiJson<SpanAddRequest>) -> Result<Json<SpanEditOutput>, ApiError> {
    let spans = add_span(&req.spans, req.span, req.length).map_err(|e| ApiError::new(ErrorCode::InvalidRequest, e.to_string()))?;
    span_output(spans, req.length)
}

async fn spans_remove(ApiJson(req): ApiJson<SpanRemoveRequest>) -> Result<Json<SpanEditOutput>, ApiError> {
    let spans = remove_span_at(&req.spans, req.position);
    span_output(spans, req.length)
}

#[derive(Deserialize)]
struct TranslateRequest {
    text: String,
    target: String,
    #[serde(default)]
    backend: Option<String>,
}

fn ndjson_line<T: Serialize>(value: &T) -> Bytes {
    let mut line = serde_json::to_vec(value).expect("delta serializes");
    line.push(b'\n');
    Bytes::from(line)
}

#[derive(Serialize)]
struct StreamFailure {
    error: ApiError,
    done: bool,
}

/// Streams `{"delta", "done"}` lines. Failures before the first delta are
/// ordinary error responses; later failures end the stream with one
/// `{"error", "done": true}` line. Dropping the response cancels the job.
async fn translate(
    State(state): State<AppState>,
    _user: AuthUser,
    ApiJson(req): ApiJson<TranslateRequest>,
) -> Result<Response, ApiError> {
    let target: LanguageTag = req
        .target
        .parse()
        .map_err(|e: String| ApiError::new(ErrorCode::InvalidRequest, e))?;
    let mut deltas = state.platform.translate(&req.text, target, req.backend.as_deref())?;
    let first: StreamDelta = match deltas.next().await {
        Some(Ok(d)) => d,
        Some(Err(e)) => return Err(e.into()),
        None => return Err(ApiError::new(ErrorCode::BackendUnavailable, "backend produced no output")),
    };
    let rest = deltas.scan(false, |failed, item| {
        let out = if *failed {
            None
        } else {
            match item {
                Ok(d) => Some(ndjson_line(&d)),
                Err(e) => {
                    *failed = true;
                    Some(ndjson_line(&StreamFailure {
                        error: e.into(),
                        done: true,
                    }))
                }
            }
        };
        futures::future::ready(out)
    });
    let body = stream::once(futures::future::ready(ndjson_line(&first)))
        .chain(rest)
        .map(Ok::<_, std::convert::Infallible>);
    Ok(([(header::CONTENT_TYPE, NDJSON)], Body::from_stream(body)).into_response())
}

#[derive(Deserialize)]
struct GlossaryQuery {
    #[serde(default)]
    text: String,
}

async fn glossary(State(state): State<AppState>, Query(q): Query<GlossaryQuery>) -> Result<Json<Vec<GlossaryEntry>>, ApiError> {
    Ok(Json(state.platform.glossary(&q.text)?))
}

#[derive(Deserialize)]
struct CreateAnnotation {
    task: Task,
    input_text: String,
    model_output: TaskOutput,
    #[serde(default)]
    params: TaskParams,
}

async fn create_annotation(
    State(state): State<AppState>,
    AuthUser(user): AuthUser,
    ApiJson(req): ApiJson<CreateAnnotation>,
) -> Result<impl IntoResponse, ApiError> {
    state.platform.check_size(&req.input_text)?;
    let store = state.store.clone();
    let record = blocking(move || store.create_record(&user.id, req.task, &req.input_text, req.model_output, req.params)).await?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn list_annotations(State(state): State<AppState>, AuthUser(user): AuthUser) -> Result<Json<Vec<AnnotationRecord>>, ApiError> {
    let store = state.store.clone();
    Ok(Json(blocking(move || store.list_records(&user.id)).await?))
}

async fn get_annotation(
    State(state): State<AppState>,
    AuthUser(user): AuthUser,
    Path(id): Path<String>,
) -> Result<Json<AnnotationRecord>, ApiError> {
    let store = state.store.clone();
    Ok(Json(blocking(move || store.get_record(&id, &user.id)).await?))
}

#[derive(Deserialize)]
struct EditAnnotation {
    edited_output: TaskOutput,
}

async fn edit_annotation(
    State(state): State<AppState>,
    AuthUser(user): AuthUser,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<EditAnnotation>,
) -> Result<Json<AnnotationRecord>, ApiError> {
    let store = state.store.clone();
    Ok(Json(blocking(move || store.update_edit(&id, &user.id, req.edited_output)).await?))
}

#[derive(Deserialize)]
struct ExportQuery {
    #[serde(default)]
    format: Option<String>,
}

async fn export_annotations(
    State(state): State<AppState>,
    AuthUser(user): AuthUser,
    Query(q): Query<ExportQuery>,
) -> Result<Response, ApiError> {
    let format = parse_field::<ExportFormat>(q.format.as_deref())?.unwrap_or(ExportFormat::Json);
    let store = state.store.clone();
    let bytes = blocking(move || store.export(&user.id, format)).await?;
    let (content_type, file) = match format {
        ExportFormat::Json => ("application/json", "annotations.json"),
        ExportFormat::Csv { .. } => ("text/csv; charset=utf-8", "annotations.csv"),
    };
    Ok((
        [
            (header::CONTENT_TYPE, content_type.to_string()),
            (header::CONTENT_DISPOSITION, format!("attachment; filename=\"{file}\"")),
        ],
        bytes,
    )
        .into_response())
}
