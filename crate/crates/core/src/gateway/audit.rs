use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{CompletionResult, CompletionStatus, GatewayError};

/// One line of the append-only completion log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub persona_id: String,
    pub template_id: u8,
    pub status: CompletionStatus,
    pub raw_text: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    #[serde(default)]
    pub attempt_count: u32,
    #[serde(default)]
    pub model_id: String,
}

impl AuditRecord {
    pub fn to_result(&self) -> CompletionResult {
        CompletionResult {
            persona_id: self.persona_id.clone(),
            template_id: self.template_id,
            raw_text: self.raw_text.clone(),
            status: self.status,
            attempt_count: self.attempt_count,
        }
    }
}

/// Newline-delimited JSON log, safe to share between batch workers.
#[derive(Debug)]
pub struct AuditLog {
    file: Mutex<File>,
    model_id: String,
}

impl AuditLog {
    pub fn open_append(path: &Path, model_id: &str) -> Result<Self, GatewayError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| GatewayError::Audit(format!("{}: {e}", path.display())))?;
        Ok(Self {
            file: Mutex::new(file),
            model_id: model_id.to_string(),
        })
    }

    pub fn append(&self, result: &CompletionResult) -> Result<(), GatewayError> {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        let record = AuditRecord {
            persona_id: result.persona_id.clone(),
            template_id: result.template_id,
            status: result.status,
            raw_text: result.raw_text.clone(),
            timestamp,
            attempt_count: result.attempt_count,
            model_id: self.model_id.clone(),
        };
        let mut line = serde_json::to_string(&record).map_err(|e| GatewayError::Audit(e.to_string()))?;
        line.push('\n');
        let mut file = self.file.lock().expect("audit lock");
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| GatewayError::Audit(e.to_string()))
    }
}

/// Reads a log, keeping the last record for each `(persona, template)` key in
/// first-seen order. A missing file reads as empty.
pub fn read_audit_log(path: &Path) -> Result<Vec<AuditRecord>, GatewayError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(GatewayError::Audit(e.to_string())),
    };
    let mut order: Vec<(String, u8)> = Vec::new();
    let mut latest: HashMap<(String, u8), AuditRecord> = HashMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| GatewayError::Audit(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AuditRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                // a torn final line from an interrupted run is skipped
                log::warn!("audit log line {} unreadable: {e}", lineno + 1);
                continue;
            }
        };
        let key = (rec.persona_id.clone(), rec.template_id);
        if !latest.contains_key(&key) {
            order.push(key.clone());
        }
        latest.insert(key, rec);
    }
    Ok(order
        .into_iter()
        .map(|k| latest.remove(&k).expect("key present"))
        .collect())
}
