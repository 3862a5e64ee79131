//! Machine-readable (JSON) and spreadsheet-friendly (CSV) exports.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{rfc3339, AnnotationRecord, PersistenceError};

pub const COLUMNS: [&str; 9] = [
    "id",
    "user_id",
    "task",
    "input_text",
    "model_output",
    "edited_output",
    "params",
    "created_at",
    "updated_at",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Json,
    Csv {
        /// Prefix a UTF-8 byte order mark so spreadsheet software picks the
        /// right encoding.
        bom: bool,
    },
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv { bom: false }),
            "csv-bom" => Ok(ExportFormat::Csv { bom: true }),
            _ => Err(format!("unknown export format `{s}`")),
        }
    }
}

/// Serializes records in the order given.
pub fn export_records(records: &[AnnotationRecord], format: ExportFormat) -> Result<Vec<u8>, PersistenceError> {
    match format {
        ExportFormat::Json => Ok(serde_json::to_vec(records)?),
        ExportFormat::Csv { bom } => {
            let mut out = Vec::new();
            if bom {
                out.extend_from_slice("\u{feff}".as_bytes());
            }
            let mut writer = csv::Writer::from_writer(&mut out);
            let csv_err = |e: csv::Error| PersistenceError::Storage(e.to_string());
            writer.write_record(COLUMNS).map_err(csv_err)?;
            for r in records {
                writer
                    .write_record([
                        r.id.clone(),
                        r.user_id.clone(),
                        r.task.to_string(),
                        r.input_text.clone(),
                        serde_json::to_string(&r.model_output)?,
                        serde_json::to_string(&r.edited_output)?,
                        serde_json::to_string(&r.params)?,
                        rfc3339::format(&r.created_at),
                        rfc3339::format(&r.updated_at),
                    ])
                    .map_err(csv_err)?;
            }
            writer.flush().map_err(|e| PersistenceError::Storage(e.to_string()))?;
            drop(writer);
            Ok(out)
        }
    }
}

/// Reads back a JSON export.
pub fn parse_json_export(bytes: &[u8]) -> Result<Vec<AnnotationRecord>, PersistenceError> {
    serde_json::from_slice(bytes).map_err(|e| PersistenceError::InvalidInput(e.to_string()))
}
