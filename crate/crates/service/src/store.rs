//! Case records: an in-memory index rebuilt from an append-only JSON-lines
//! event log.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, TimeDelta, Utc};
use decode_core::data::{Cohort, CovidTest, SurveyRecord};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assess::AssessmentResult;
use crate::submission::QuestionnaireSubmission;

pub const EVENT_LOG: &str = "cases.jsonl";
const TOKEN_BYTES: usize = 16;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("no such case")]
    NotFound,
    #[error("case expired")]
    Expired,
    #[error("event log: {0}")]
    Io(#[from] std::io::Error),
    #[error("event log line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("random source: {0}")]
    Random(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcrResult {
    Positive,
    Negative,
}

impl From<PcrResult> for CovidTest {
    fn from(r: PcrResult) -> Self {
        match r {
            PcrResult::Positive => CovidTest::Positive,
            PcrResult::Negative => CovidTest::Negative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub submitted_at: DateTime<Utc>,
    pub submission: QuestionnaireSubmission,
    pub assessment: AssessmentResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcrAudit {
    pub recorded_at: DateTime<Utc>,
    pub result: PcrResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub token: String,
    pub created_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
    /// Append-only.
    pub history: Vec<HistoryEntry>,
    pub latest: AssessmentResult,
    pub pcr_result: Option<PcrResult>,
    /// Every PCR report, including overwritten ones.
    pub pcr_audit: Vec<PcrAudit>,
}

impl CaseRecord {
    pub fn is_expired(&self, now: DateTime<Utc>) -> bool {
        now >= self.expires_at
    }

    /// The case as a labelled record for the training corpus, once a PCR
    /// result is known.
    pub fn export_record(&self) -> Option<SurveyRecord> {
        let pcr = self.pcr_result?;
        let answers = self.history.last()?.submission.answers.clone();
        Some(SurveyRecord {
            symptomatic: answers.any_symptom(),
            answers,
            covid_test: pcr.into(),
            holdout_flag: false,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    Created {
        token: String,
        created_at: DateTime<Utc>,
        expires_at: DateTime<Utc>,
        entry: HistoryEntry,
    },
    Updated {
        token: String,
        entry: HistoryEntry,
    },
    Pcr {
        token: String,
        audit: PcrAudit,
    },
}

/// Fresh 128-bit token, hex encoded.
pub fn new_token() -> Result<String, StoreError> {
    let mut bytes = [0u8; TOKEN_BYTES];
    getrandom::fill(&mut bytes).map_err(|e| StoreError::Random(e.to_string()))?;
    Ok(hex::encode(bytes))
}

pub fn is_token(s: &str) -> bool {
    s.len() == 2 * TOKEN_BYTES && s.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

/// Cases keyed by token. Writes to one case are serialized by its mutex; the
/// map lock is only held to look up or insert.
#[derive(Debug, Default)]
pub struct CaseStore {
    cases: RwLock<HashMap<String, Arc<Mutex<CaseRecord>>>>,
    log: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl CaseStore {
    pub fn in_memory() -> Self {
        CaseStore::default()
    }

    /// Opens (or creates) the event log in `dir` and replays it.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(EVENT_LOG);
        let mut cases: HashMap<String, CaseRecord> = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let event: Event = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                    line: i + 1,
                    message: e.to_string(),
                })?;
                apply(&mut cases, event).map_err(|message| StoreError::Corrupt { line: i + 1, message })?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(CaseStore {
            cases: RwLock::new(cases.into_iter().map(|(k, v)| (k, Arc::new(Mutex::new(v)))).collect()),
            log: Some(Mutex::new(file)),
            path: Some(path),
        })
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.cases.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn append(&self, event: &Event) -> Result<(), StoreError> {
        if let Some(log) = &self.log {
            let mut line = serde_json::to_string(event).expect("events serialize");
            line.push('\n');
            let mut f = log.lock().unwrap();
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        Ok(())
    }

    fn handle(&self, token: &str) -> Result<Arc<Mutex<CaseRecord>>, StoreError> {
        self.cases
            .read()
            .unwrap()
            .get(token)
            .cloned()
            .ok_or(StoreError::NotFound)
    }

    pub fn create(
        &self,
        now: DateTime<Utc>,
        ttl: TimeDelta,
        submission: QuestionnaireSubmission,
        assessment: AssessmentResult,
    ) -> Result<CaseRecord, StoreError> {
        let token = loop {
            let t = new_token()?;
            if !self.cases.read().unwrap().contains_key(&t) {
                break t;
            }
        };
        let entry = HistoryEntry {
            submitted_at: now,
            submission,
            assessment,
        };
        let event = Event::Created {
            token: token.clone(),
            created_at: now,
            expires_at: now + ttl,
            entry: entry.clone(),
        };
        self.append(&event)?;
        let record = CaseRecord {
            token: token.clone(),
            created_at: now,
            expires_at: now + ttl,
            latest: entry.assessment.clone(),
            history: vec![entry],
            pcr_result: None,
            pcr_audit: Vec::new(),
        };
        self.cases
            .write()
            .unwrap()
            .insert(token, Arc::new(Mutex::new(record.clone())));
        Ok(record)
    }

    /// Returns the case if it exists and has not expired at `now`.
    pub fn get(&self, token: &str, now: DateTime<Utc>) -> Result<CaseRecord, StoreError> {
        let case = self.handle(token)?;
        let c = case.lock().unwrap();
        if c.is_expired(now) {
            return Err(StoreError::Expired);
        }
        Ok(c.clone())
    }

    /// Runs `assess` under the case lock (after the expiry check) and appends
    /// its result. Nothing is stored when `assess` fails.
    pub fn update<E: From<StoreError>>(
        &self,
        token: &str,
        now: DateTime<Utc>,
        submission: QuestionnaireSubmission,
        assess: impl FnOnce(&QuestionnaireSubmission) -> Result<AssessmentResult, E>,
    ) -> Result<CaseRecord, E> {
        let case = self.handle(token)?;
        let mut c = case.lock().unwrap();
        if c.is_expired(now) {
            return Err(StoreError::Expired.into());
        }
        let assessment = assess(&submission)?;
        let entry = HistoryEntry {
            submitted_at: now,
            submission,
            assessment,
        };
        self.append(&Event::Updated {
            token: token.to_string(),
            entry: entry.clone(),
        })?;
        c.latest = entry.assessment.clone();
        c.history.push(entry);
        Ok(c.clone())
    }

    /// Stores a PCR result; a repeated report overwrites the result and both
    /// reports stay in the audit trail.
    pub fn record_pcr(&self, token: &str, now: DateTime<Utc>, result: PcrResult) -> Result<CaseRecord, StoreError> {
        let case = self.handle(token)?;
        let mut c = case.lock().unwrap();
        if c.is_expired(now) {
            return Err(StoreError::Expired);
        }
        let audit = PcrAudit {
            recorded_at: now,
            result,
        };
        self.append(&Event::Pcr {
            token: token.to_string(),
            audit,
        })?;
        c.pcr_result = Some(result);
        c.pcr_audit.push(audit);
        Ok(c.clone())
    }

    /// All cases with a PCR result, as a labelled cohort (token order).
    pub fn export_cohort(&self) -> Cohort {
        let map = self.cases.read().unwrap();
        let mut tokens: Vec<&String> = map.keys().collect();
        tokens.sort();
        let records = tokens
            .into_iter()
            .filter_map(|t| map[t].lock().unwrap().export_record())
            .collect();
        Cohort::new(records, "service export")
    }
}

fn apply(cases: &mut HashMap<String, CaseRecord>, event: Event) -> Result<(), String> {
    match event {
        Event::Created {
            token,
            created_at,
            expires_at,
            entry,
        } => {
            let record = CaseRecord {
                token: token.clone(),
                created_at,
                expires_at,
                latest: entry.assessment.clone(),
                history: vec![entry],
                pcr_result: None,
                pcr_audit: Vec::new(),
            };
            if cases.insert(token.clone(), record).is_some() {
                return Err(format!("case {token} created twice"));
            }
        }
        Event::Updated { token, entry } => {
            let c = cases
                .get_mut(&token)
                .ok_or_else(|| format!("update of unknown case {token}"))?;
            c.latest = entry.assessment.clone();
            c.history.push(entry);
        }
        Event::Pcr { token, audit } => {
            let c = cases
                .get_mut(&token)
                .ok_or_else(|| format!("pcr for unknown case {token}"))?;
            c.pcr_result = Some(audit.result);
            c.pcr_audit.push(audit);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_are_128_bit_hex() {
        let a = new_token().unwrap();
        let b = new_token().unwrap();
        assert_eq!(a.len(), 32);
        assert!(is_token(&a));
        assert_ne!(a, b);
        assert!(!is_token("xyz"));
        assert!(!is_token(&a.to_uppercase()));
    }
}
