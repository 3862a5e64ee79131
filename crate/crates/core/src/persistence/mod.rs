//! Users, sessions and annotation history in an embedded SQLite database.
//!
//! Schema:
//!
//! ```sql
//! users(id PK, email UNIQUE, password_hash, display_name, created_at)
//! sessions(token PK, user_id -> users.id, expires_at)
//! annotations(id PK, user_id -> users.id, task, input_text, model_output,
//!             edited_output, params, created_at, updated_at)
//! ```
//!
//! Timestamps are stored as RFC 3339 strings with nanosecond precision, so
//! they sort lexicographically. Payload columns hold JSON.

pub mod auth;
pub mod export;

use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, Duration, Utc};
use rusqlite::{params, Connection, OptionalExtension, Row};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::entities::TagSeq;
use crate::punctuation::{PunctLabelSeq, RenderMode};
use crate::translation::LanguageTag;

pub use export::{export_records, parse_json_export, ExportFormat};

pub const DEFAULT_SESSION_DAYS: i64 = 30;
const MIN_PASSWORD_CHARS: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PersistenceError {
    #[error("record not found")]
    NotFound,
    #[error("record belongs to another user")]
    Forbidden,
    #[error("payload does not match task {0}")]
    ShapeMismatch(Task),
    #[error("email already registered")]
    EmailTaken,
    #[error("invalid email or password")]
    InvalidCredentials,
    #[error("session token is missing, unknown or expired")]
    Unauthenticated,
    #[error("{0}")]
    InvalidInput(String),
    #[error("storage failure: {0}")]
    Storage(String),
}

impl From<rusqlite::Error> for PersistenceError {
    fn from(e: rusqlite::Error) -> Self {
        PersistenceError::Storage(e.to_string())
    }
}

impl From<serde_json::Error> for PersistenceError {
    fn from(e: serde_json::Error) -> Self {
        PersistenceError::Storage(e.to_string())
    }
}

pub type Result<T, E = PersistenceError> = std::result::Result<T, E>;

/// RFC 3339 with a fixed nanosecond field.
pub mod rfc3339 {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn format(t: &DateTime<Utc>) -> String {
        t.to_rfc3339_opts(SecondsFormat::Nanos, true)
    }

    pub fn parse(s: &str) -> Result<DateTime<Utc>, chrono::ParseError> {
        DateTime::parse_from_rfc3339(s).map(|t| t.with_timezone(&Utc))
    }

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Punctuate,
    Ner,
    Translate,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Punctuate => "punctuate",
            Task::Ner => "ner",
            Task::Translate => "translate",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "punctuate" => Ok(Task::Punctuate),
            "ner" => Ok(Task::Ner),
            "translate" => Ok(Task::Translate),
            _ => Err(format!("unknown task `{s}`")),
        }
    }
}

/// Task-specific model output, or its expert-edited counterpart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskOutput {
    Labels { labels: PunctLabelSeq },
    Tags { tags: TagSeq },
    Translation { translation: String },
}

impl TaskOutput {
    pub fn task(&self) -> Task {
        match self {
            TaskOutput::Labels { .. } => Task::Punctuate,
            TaskOutput::Tags { .. } => Task::Ner,
            TaskOutput::Translation { .. } => Task::Translate,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<RenderMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<LanguageTag>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: String,
    pub user_id: String,
    pub task: Task,
    pub input_text: String,
    pub model_output: TaskOutput,
    pub edited_output: TaskOutput,
    pub params: TaskParams,
    #[serde(with = "rfc3339")]
    pub created_at: DateTime<Utc>,
    #[serde(with = "rfc3339")]
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub id: String,
    pub email: String,
    #[serde(skip_serializing)]
    pub password_hash: String,
    pub display_name: String,
    #[serde(with = "rfc3339")]
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub user_id: String,
    #[serde(with = "rfc3339")]
    pub expires_at: DateTime<Utc>,
}

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS users (
    id TEXT PRIMARY KEY,
    email TEXT NOT NULL UNIQUE,
    password_hash TEXT NOT NULL,
    display_name TEXT NOT NULL,
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS sessions (
    token TEXT PRIMARY KEY,
    user_id TEXT NOT NULL REFERENCES users(id),
    expires_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS annotations (
    id TEXT PRIMARY KEY,
    user_id TEXT NOT NULL REFERENCES users(id),
    task TEXT NOT NULL,
    input_text TEXT NOT NULL,
    model_output TEXT NOT NULL,
    edited_output TEXT NOT NULL,
    params TEXT NOT NULL,
    created_at TEXT NOT NULL,
    updated_at TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS annotations_by_user ON annotations(user_id, created_at, id);
";

struct Inner {
    conn: Connection,
    last_stamp: DateTime<Utc>,
}

impl Inner {
    /// Wall-clock time, never earlier than any stamp handed out before.
    fn now(&mut self) -> DateTime<Utc> {
        let now = Utc::now().max(self.last_stamp);
        self.last_stamp = now;
        now
    }
}

/// Transactional store. Writes are serialized through one connection.
pub struct Store {
    inner: Mutex<Inner>,
    session_lifetime: Duration,
}

fn parse_time(s: String) -> rusqlite::Result<DateTime<Utc>> {
    rfc3339::parse(&s).map_err(|e| rusqlite::Error::FromSqlConversionFailure(0, rusqlite::types::Type::Text, Box::new(e)))
}

fn parse_json<T: for<'de> Deserialize<'de>>(s: String) -> rusqlite::Result<T> {
    serde_json::from_str(&s).map_err(|e| rusqlite::Error::FromSqlConversionFailure(0, rusqlite::types::Type::Text, Box::new(e)))
}

fn record_from_row(row: &Row<'_>) -> rusqlite::Result<AnnotationRecord> {
    let task: String = row.get("task")?;
    Ok(AnnotationRecord {
        id: row.get("id")?,
        user_id: row.get("user_id")?,
        task: task
            .parse()
            .map_err(|e: String| rusqlite::Error::FromSqlConversionFailure(0, rusqlite::types::Type::Text, e.into()))?,
        input_text: row.get("input_text")?,
        model_output: parse_json(row.get("model_output")?)?,
        edited_output: parse_json(row.get("edited_output")?)?,
        params: parse_json(row.get("params")?)?,
        created_at: parse_time(row.get("created_at")?)?,
        updated_at: parse_time(row.get("updated_at")?)?,
    })
}

fn user_from_row(row: &Row<'_>) -> rusqlite::Result<User> {
    Ok(User {
        id: row.get("id")?,
        email: row.get("email")?,
        password_hash: row.get("password_hash")?,
        display_name: row.get("display_name")?,
        created_at: parse_time(row.get("created_at")?)?,
    })
}

fn check_shape(task: Task, output: &TaskOutput) -> Result<()> {
    if output.task() == task {
        Ok(())
    } else {
        Err(PersistenceError::ShapeMismatch(task))
    }
}

impl Store {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Store::with_connection(Connection::open(path)?)
    }

    pub fn open_in_memory() -> Result<Self> {
        Store::with_connection(Connection::open_in_memory()?)
    }

    fn with_connection(conn: Connection) -> Result<Self> {
        conn.pragma_update(None, "foreign_keys", true)?;
        conn.busy_timeout(std::time::Duration::from_secs(5))?;
        conn.execute_batch(SCHEMA)?;
        Ok(Store {
            inner: Mutex::new(Inner {
                conn,
                last_stamp: DateTime::<Utc>::MIN_UTC,
            }),
            session_lifetime: Duration::days(DEFAULT_SESSION_DAYS),
        })
    }

    pub fn with_session_lifetime(mut self, lifetime: Duration) -> Self {
        self.session_lifetime = lifetime;
        self
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    pub fn register(&self, email: &str, password: &str, display_name: &str) -> Result<User> {
        let email = email.trim().to_lowercase();
        if !email.contains('@') {
            return Err(PersistenceError::InvalidInput("email address is malformed".into()));
        }
        if password.chars().count() < MIN_PASSWORD_CHARS {
            return Err(PersistenceError::InvalidInput(format!(
                "password must have at least {MIN_PASSWORD_CHARS} characters"
            )));
        }
        // hash outside the lock; it is the slow part
        let password_hash = auth::hash_password(password).map_err(PersistenceError::Storage)?;
        let mut inner = self.lock();
        let user = User {
            id: Uuid::new_v4().to_string(),
            email,
            password_hash,
            display_name: display_name.to_string(),
            created_at: inner.now(),
        };
        let inserted = inner.conn.execute(
            "INSERT INTO users (id, email, password_hash, display_name, created_at) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![user.id, user.email, user.password_hash, user.display_name, rfc3339::format(&user.created_at)],
        );
        match inserted {
            Ok(_) => Ok(user),
            Err(rusqlite::Error::SqliteFailure(e, _)) if e.code == rusqlite::ErrorCode::ConstraintViolation => {
                Err(PersistenceError::EmailTaken)
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn login(&self, email: &str, password: &str) -> Result<Session> {
        let email = email.trim().to_lowercase();
        let user = {
            let inner = self.lock();
            inner
                .conn
                .query_row("SELECT * FROM users WHERE email = ?1", [&email], user_from_row)
                .optional()?
        };
        let user = user.ok_or(PersistenceError::InvalidCredentials)?;
        if !auth::verify_password(password, &user.password_hash) {
            return Err(PersistenceError::InvalidCredentials);
        }
        let mut inner = self.lock();
        let session = Session {
            token: auth::new_session_token(),
            user_id: user.id,
            expires_at: inner.now() + self.session_lifetime,
        };
        inner.conn.execute(
            "INSERT INTO sessions (token, user_id, expires_at) VALUES (?1, ?2, ?3)",
            params![session.token, session.user_id, rfc3339::format(&session.expires_at)],
        )?;
        Ok(session)
    }

    /// Resolves a session token to its user and extends the session.
    pub fn authenticate(&self, token: &str) -> Result<User> {
        let mut inner = self.lock();
        let now = inner.now();
        let tx = inner.conn.transaction()?;
        let found: Option<(String, String)> = tx
            .query_row("SELECT user_id, expires_at FROM sessions WHERE token = ?1", [token], |r| {
                Ok((r.get(0)?, r.get(1)?))
            })
            .optional()?;
        let (user_id, expires_at) = found.ok_or(PersistenceError::Unauthenticated)?;
        let expires_at = parse_time(expires_at)?;
        if expires_at <= now {
            tx.execute("DELETE FROM sessions WHERE token = ?1", [token])?;
            tx.commit()?;
            return Err(PersistenceError::Unauthenticated);
        }
        tx.execute(
            "UPDATE sessions SET expires_at = ?1 WHERE token = ?2",
            params![rfc3339::format(&(now + self.session_lifetime)), token],
        )?;
        let user = tx.query_row("SELECT * FROM users WHERE id = ?1", [&user_id], user_from_row)?;
        tx.commit()?;
        Ok(user)
    }

    pub fn logout(&self, token: &str) -> Result<()> {
        self.lock().conn.execute("DELETE FROM sessions WHERE token = ?1", [token])?;
        Ok(())
    }

    pub fn create_record(
        &self,
        user_id: &str,
        task: Task,
        input_text: &str,
        model_output: TaskOutput,
        params: TaskParams,
    ) -> Result<AnnotationRecord> {
        check_shape(task, &model_output)?;
        let mut inner = self.lock();
        let now = inner.now();
        let record = AnnotationRecord {
            id: Uuid::new_v4().to_string(),
            user_id: user_id.to_string(),
            task,
            input_text: input_text.to_string(),
            edited_output: model_output.clone(),
            model_output,
            params,
            created_at: now,
            updated_at: now,
        };
        inner.conn.execute(
            "INSERT INTO annotations (id, user_id, task, input_text, model_output, edited_output, params, created_at, updated_at)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9)",
            params![
                record.id,
                record.user_id,
                record.task.as_str(),
                record.input_text,
                serde_json::to_string(&record.model_output)?,
                serde_json::to_string(&record.edited_output)?,
                serde_json::to_string(&record.params)?,
                rfc3339::format(&record.created_at),
                rfc3339::format(&record.updated_at),
            ],
        )?;
        Ok(record)
    }

    pub fn get_record(&self, record_id: &str, user_id: &str) -> Result<AnnotationRecord> {
        let inner = self.lock();
        let record = inner
            .conn
            .query_row("SELECT * FROM annotations WHERE id = ?1", [record_id], record_from_row)
            .optional()?
            .ok_or(PersistenceError::NotFound)?;
        if record.user_id != user_id {
            return Err(PersistenceError::Forbidden);
        }
        Ok(record)
    }

    /// Replaces the edited output. The model output never changes.
    pub fn update_edit(&self, record_id: &str, user_id: &str, edited_output: TaskOutput) -> Result<AnnotationRecord> {
        let mut inner = self.lock();
        let now = inner.now();
        let tx = inner.conn.transaction()?;
        let mut record = tx
            .query_row("SELECT * FROM annotations WHERE id = ?1", [record_id], record_from_row)
            .optional()?
            .ok_or(PersistenceError::NotFound)?;
        if record.user_id != user_id {
            return Err(PersistenceError::Forbidden);
        }
        check_shape(record.task, &edited_output)?;
        record.edited_output = edited_output;
        record.updated_at = now.max(record.updated_at + Duration::nanoseconds(1));
        tx.execute(
            "UPDATE annotations SET edited_output = ?1, updated_at = ?2 WHERE id = ?3",
            params![
                serde_json::to_string(&record.edited_output)?,
                rfc3339::format(&record.updated_at),
                record.id
            ],
        )?;
        tx.commit()?;
        drop(inner);
        Ok(record)
    }

    /// The user's records, oldest first, ties broken by id.
    pub fn list_records(&self, user_id: &str) -> Result<Vec<AnnotationRecord>> {
        let inner = self.lock();
        let mut stmt = inner
            .conn
            .prepare_cached("SELECT * FROM annotations WHERE user_id = ?1 ORDER BY created_at, id")?;
        let rows = stmt.query_map([user_id], record_from_row)?;
        Ok(rows.collect::<rusqlite::Result<Vec<_>>>()?)
    }

    pub fn export(&self, user_id: &str, format: ExportFormat) -> Result<Vec<u8>> {
        export_records(&self.list_records(user_id)?, format)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entities::parse_tags;

    fn labels() -> TaskOutput {
        TaskOutput::Labels {
            labels: ["None", "ColonOpenQuote"].into_iter().collect(),
        }
    }

    fn store_with_user() -> (Store, User) {
        let store = Store::open_in_memory().unwrap();
        let user = store.register("a@example.org", "password1", "A").unwrap();
        (store, user)
    }

    #[test]
    fn create_initializes_edited_output() {
        let (store, user) = store_with_user();
        let params = TaskParams {
            mode: Some(RenderMode::Comprehensive),
            target: None,
        };
        let r = store.create_record(&user.id, Task::Punctuate, "子曰", labels(), params).unwrap();
        assert_eq!(r.edited_output, r.model_output);
        assert_eq!(r.created_at, r.updated_at);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let (store, user) = store_with_user();
        let tags = TaskOutput::Tags {
            tags: parse_tags(&["O", "O"]).unwrap(),
        };
        assert_eq!(
            store.create_record(&user.id, Task::Punctuate, "子曰", tags.clone(), TaskParams::default()),
            Err(PersistenceError::ShapeMismatch(Task::Punctuate))
        );
        let r = store
            .create_record(&user.id, Task::Punctuate, "子曰", labels(), TaskParams::default())
            .unwrap();
        assert_eq!(
            store.update_edit(&r.id, &user.id, tags),
            Err(PersistenceError::ShapeMismatch(Task::Punctuate))
        );
    }

    #[test]
    fn rapid_creates_are_distinct_and_ordered() {
        let (store, user) = store_with_user();
        let a = store.create_record(&user.id, Task::Punctuate, "子", labels(), TaskParams::default()).unwrap();
        let b = store.create_record(&user.id, Task::Punctuate, "子", labels(), TaskParams::default()).unwrap();
        assert_ne!(a.id, b.id);
        assert!(a.created_at <= b.created_at);
    }

    #[test]
    fn edits_are_owner_only_and_keep_model_output() {
        let (store, user) = store_with_user();
        let other = store.register("b@example.org", "password2", "B").unwrap();
        let r = store.create_record(&user.id, Task::Punctuate, "子曰", labels(), TaskParams::default()).unwrap();
        let edited = TaskOutput::Labels {
            labels: ["Comma", "None"].into_iter().collect(),
        };
        let mut last = r.clone();
        for _ in 0..100 {
            let next = store.update_edit(&r.id, &user.id, edited.clone()).unwrap();
            assert!(next.updated_at > last.updated_at);
            assert_eq!(next.model_output, r.model_output);
            last = next;
        }
        assert_eq!(last.edited_output, edited);
        assert_eq!(store.get_record(&r.id, &user.id).unwrap(), last);
        assert_eq!(store.update_edit(&r.id, &other.id, edited.clone()), Err(PersistenceError::Forbidden));
        assert_eq!(store.get_record(&r.id, &other.id), Err(PersistenceError::Forbidden));
        assert_eq!(store.update_edit("nope", &user.id, edited), Err(PersistenceError::NotFound));
        assert!(store.list_records(&other.id).unwrap().is_empty());
    }

    #[test]
    fn register_and_login() {
        let (store, user) = store_with_user();
        assert_eq!(
            store.register("A@example.org", "password1", "dup").unwrap_err(),
            PersistenceError::EmailTaken
        );
        assert!(matches!(store.register("x@y", "short", "x"), Err(PersistenceError::InvalidInput(_))));
        assert_eq!(store.login("a@example.org", "wrong-pass"), Err(PersistenceError::InvalidCredentials));
        assert_eq!(store.login("nobody@example.org", "password1"), Err(PersistenceError::InvalidCredentials));
        let session = store.login("a@example.org", "password1").unwrap();
        assert_eq!(store.authenticate(&session.token).unwrap().id, user.id);
        assert_eq!(store.authenticate("bogus"), Err(PersistenceError::Unauthenticated));
        store.logout(&session.token).unwrap();
        assert_eq!(store.authenticate(&session.token), Err(PersistenceError::Unauthenticated));
    }

    #[test]
    fn expired_sessions_never_authenticate() {
        let store = Store::open_in_memory().unwrap().with_session_lifetime(Duration::milliseconds(-1));
        store.register("a@example.org", "password1", "A").unwrap();
        let session = store.login("a@example.org", "password1").unwrap();
        assert_eq!(store.authenticate(&session.token), Err(PersistenceError::Unauthenticated));
    }

    #[test]
    fn records_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.db");
        let (user, record) = {
            let store = Store::open(&path).unwrap();
            let user = store.register("a@example.org", "password1", "A").unwrap();
            let record = store
                .create_record(&user.id, Task::Translate, "子曰", TaskOutput::Translation {
                    translation: "자 왈".into(),
                }, TaskParams {
                    mode: None,
                    target: Some(LanguageTag::Korean),
                })
                .unwrap();
            (user, record)
        };
        let store = Store::open(&path).unwrap();
        assert_eq!(store.list_records(&user.id).unwrap(), vec![record]);
        assert!(store.login("a@example.org", "password1").is_ok());
    }
}
