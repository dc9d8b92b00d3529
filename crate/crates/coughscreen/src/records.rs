//! Anonymous, spatio-temporally tagged screening records in an append-only
//! JSON-lines log.
//!
//! Every append is flushed and synced before it returns. A sidecar index of
//! `(byte offset, timestamp)` checkpoints is rewritten every
//! `index_every` records so range queries can skip old history; the log
//! itself stays the source of truth and the index is rebuilt if missing.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use coughscreen_core::classifiers::DetectionLabel;
use coughscreen_core::mediator::{AppResult, ClassifierOutputs};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{ModelVersions, Screening};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("record store unavailable: {0}")]
    Unavailable(#[from] std::io::Error),
    #[error("record encoding: {0}")]
    Encoding(#[from] serde_json::Error),
}

/// Latitude and longitude rounded to 0.1 degree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarseLocation {
    pub lat: f64,
    pub lon: f64,
}

impl CoarseLocation {
    /// Rounds to one decimal; `None` for out-of-range or non-finite input.
    pub fn new(lat: f64, lon: f64) -> Option<Self> {
        let ok = lat.is_finite() && lon.is_finite() && lat.abs() <= 90.0 && lon.abs() <= 180.0;
        ok.then(|| Self { lat: round_tenth(lat), lon: round_tenth(lon) })
    }
}

fn round_tenth(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

/// What is kept about one screening. There are deliberately no identity or
/// audio fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreeningRecord {
    pub record_id: String,
    pub timestamp: DateTime<Utc>,
    pub coarse_location: Option<CoarseLocation>,
    pub detection: DetectionLabel,
    pub classifiers: ClassifierOutputs,
    pub result: AppResult,
    pub model_versions: ModelVersions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
}

impl ScreeningRecord {
    /// A record for a diagnosed clip; `None` when the detector rejected it.
    pub fn from_screening(
        screening: &Screening,
        versions: &ModelVersions,
        location: Option<CoarseLocation>,
        session_id: Option<String>,
    ) -> Option<Self> {
        Some(Self {
            record_id: uuid::Uuid::new_v4().simple().to_string(),
            timestamp: Utc::now(),
            coarse_location: location,
            detection: screening.detection,
            classifiers: screening.classifiers?,
            result: screening.result,
            model_versions: versions.clone(),
            session_id,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecordQuery {
    pub from: Option<DateTime<Utc>>,
    pub to: Option<DateTime<Utc>>,
    pub page: usize,
    pub per_page: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordPage {
    pub records: Vec<ScreeningRecord>,
    pub page: usize,
    pub per_page: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreStatus {
    pub ok: bool,
    pub records: usize,
    pub path: String,
}

/// Persistence boundary for screening records.
pub trait RecordStore: Send + Sync {
    fn append(&self, record: &ScreeningRecord) -> Result<(), StoreError>;
    /// Records inside the time range, newest first.
    fn list(&self, query: &RecordQuery) -> Result<RecordPage, StoreError>;
    fn status(&self) -> StoreStatus;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    offset: u64,
    timestamp: DateTime<Utc>,
}

struct LogState {
    file: File,
    len: u64,
    count: usize,
    checkpoints: Vec<Checkpoint>,
}

pub struct JsonlStore {
    log_path: PathBuf,
    index_path: PathBuf,
    index_every: usize,
    state: Mutex<LogState>,
}

pub const LOG_NAME: &str = "records.jsonl";
pub const INDEX_NAME: &str = "records.idx.json";

impl JsonlStore {
    /// Opens (or creates) the store in `dir`, scanning the existing log.
    pub fn open(dir: &Path, index_every: usize) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir)?;
        let log_path = dir.join(LOG_NAME);
        let index_path = dir.join(INDEX_NAME);
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(&log_path)?;
        let mut count = 0usize;
        let mut checkpoints = Vec::new();
        let index_every = index_every.max(1);
        file.seek(SeekFrom::Start(0))?;
        let mut reader = BufReader::new(&file);
        let mut offset = 0u64;
        let mut line = String::new();
        loop {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 {
                break;
            }
            if let Ok(rec) = serde_json::from_str::<ScreeningRecord>(line.trim_end()) {
                if count.is_multiple_of(index_every) {
                    checkpoints.push(Checkpoint { offset, timestamp: rec.timestamp });
                }
                count += 1;
            }
            offset += n as u64;
        }
        let len = file.seek(SeekFrom::End(0))?;
        let store =
            Self { log_path, index_path, index_every, state: Mutex::new(LogState { file, len, count, checkpoints }) };
        store.write_index(&store.state.lock().expect("store lock"))?;
        Ok(store)
    }

    pub fn log_path(&self) -> &Path {
        &self.log_path
    }

    fn write_index(&self, state: &LogState) -> Result<(), StoreError> {
        let tmp = self.index_path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(&state.checkpoints)?)?;
        std::fs::rename(&tmp, &self.index_path)?;
        Ok(())
    }
}

impl RecordStore for JsonlStore {
    fn append(&self, record: &ScreeningRecord) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        let mut state = self.state.lock().expect("store lock");
        let offset = state.len;
        state.file.write_all(&line)?;
        state.file.flush()?;
        state.file.sync_data()?;
        state.len += line.len() as u64;
        if state.count.is_multiple_of(self.index_every) {
            state.checkpoints.push(Checkpoint { offset, timestamp: record.timestamp });
            self.write_index(&state)?;
        }
        state.count += 1;
        Ok(())
    }

    fn list(&self, query: &RecordQuery) -> Result<RecordPage, StoreError> {
        let state = self.state.lock().expect("store lock");
        // skip whole checkpoints that end before `from`
        let start = match query.from {
            Some(from) => {
                let later =
                    state.checkpoints.iter().position(|c| c.timestamp >= from).unwrap_or(state.checkpoints.len());
                later.checked_sub(1).map_or(0, |i| state.checkpoints[i].offset)
            }
            None => 0,
        };
        let mut file = File::open(&self.log_path)?;
        file.seek(SeekFrom::Start(start))?;
        let mut matched = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            let Ok(rec) = serde_json::from_str::<ScreeningRecord>(&line) else { continue };
            let after = query.from.is_none_or(|f| rec.timestamp >= f);
            let before = query.to.is_none_or(|t| rec.timestamp <= t);
            if after && before {
                matched.push(rec);
            }
        }
        drop(state);
        matched.reverse();
        let per_page = if query.per_page == 0 { 50 } else { query.per_page };
        let total = matched.len();
        let records = matched.into_iter().skip(query.page * per_page).take(per_page).collect();
        Ok(RecordPage { records, page: query.page, per_page, total })
    }

    fn status(&self) -> StoreStatus {
        let state = self.state.lock().expect("store lock");
        StoreStatus { ok: self.log_path.exists(), records: state.count, path: self.log_path.display().to_string() }
    }
}
