use super::embed::{embed_text, EmbeddingVector};
use crate::canonical;
use crate::selector::cosine_similarity;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("memory I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("unknown record {0}")]
    UnknownRecord(u64),
    #[error("invalid rating {0}: expected -1, 0 or +1")]
    InvalidRating(i64),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Feedback {
    pub rating: i8,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryRecord {
    pub record_id: u64,
    pub query_text: String,
    /// The serialized plan.
    pub plan: Value,
    pub result_summary: String,
    pub metrics: BTreeMap<String, f64>,
    pub embedding: EmbeddingVector,
    pub feedback: Option<Feedback>,
}

/// Fields supplied by the caller; id and embedding are assigned on store.
#[derive(Debug, Clone, Default)]
pub struct NewRecord {
    pub query_text: String,
    pub plan: Value,
    pub result_summary: String,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Local,
    Shared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved<'a> {
    pub record: &'a MemoryRecord,
    pub score: f64,
    pub origin: Origin,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackPatch {
    record_id: u64,
    feedback: Feedback,
}

/// Experience archive backed by an append-only JSON-Lines file.
///
/// Record lines hold a canonical [`MemoryRecord`]; feedback is appended as
/// `{"feedback": {...}, "record_id": n}` patch lines and folded in on load.
/// An optional shared archive is merged read-only into retrieval.
#[derive(Debug, Default)]
pub struct Archive {
    path: Option<PathBuf>,
    records: Vec<MemoryRecord>,
    shared: Vec<MemoryRecord>,
}

impl Archive {
    /// Archive that never touches disk.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or prepares to create) the local archive at `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, MemoryError> {
        let path = path.as_ref().to_path_buf();
        let records = if path.exists() { read_archive(&path)? } else { Vec::new() };
        Ok(Archive { path: Some(path), records, shared: Vec::new() })
    }

    /// Merges a shared archive for retrieval; it is never written.
    pub fn with_shared(mut self, path: impl AsRef<Path>) -> Result<Self, MemoryError> {
        self.shared = read_archive(path.as_ref())?;
        Ok(self)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn records(&self) -> &[MemoryRecord] {
        &self.records
    }

    pub fn shared_records(&self) -> &[MemoryRecord] {
        &self.shared
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, record_id: u64) -> Option<&MemoryRecord> {
        self.records.get(record_id as usize)
    }

    pub fn store_record(&mut self, new: NewRecord) -> Result<u64, MemoryError> {
        if let Some((k, v)) = new.metrics.iter().find(|(_, v)| !v.is_finite()) {
            return Err(MemoryError::InvalidRecord(format!("metric `{k}` is not finite ({v})")));
        }
        let record = MemoryRecord {
            record_id: self.records.len() as u64,
            embedding: embed_text(&new.query_text),
            query_text: new.query_text,
            plan: new.plan,
            result_summary: new.result_summary,
            metrics: new.metrics,
            feedback: None,
        };
        self.append_line(&record)?;
        let id = record.record_id;
        self.records.push(record);
        Ok(id)
    }

    pub fn record_feedback(&mut self, record_id: u64, rating: i64, note: &str) -> Result<&MemoryRecord, MemoryError> {
        if !(-1..=1).contains(&rating) {
            return Err(MemoryError::InvalidRating(rating));
        }
        if self.get(record_id).is_none() {
            return Err(MemoryError::UnknownRecord(record_id));
        }
        let feedback = Feedback { rating: rating as i8, note: note.to_string() };
        self.append_line(&FeedbackPatch { record_id, feedback: feedback.clone() })?;
        let rec = &mut self.records[record_id as usize];
        rec.feedback = Some(feedback);
        Ok(rec)
    }

    /// Top-`k` records by cosine similarity to `query_text`; ties go to the
    /// newer record, then to the local archive.
    pub fn retrieve(&self, query_text: &str, k: usize) -> Vec<Retrieved<'_>> {
        let q = embed_text(query_text);
        let mut hits: Vec<Retrieved<'_>> = self
            .records
            .iter()
            .map(|r| (r, Origin::Local))
            .chain(self.shared.iter().map(|r| (r, Origin::Shared)))
            .map(|(record, origin)| Retrieved {
                record,
                score: cosine_similarity(q.as_slice(), record.embedding.as_slice())
                    .expect("embeddings share a dimension"),
                origin,
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(b.record.record_id.cmp(&a.record.record_id))
                .then(a.origin.cmp(&b.origin))
        });
        hits.truncate(k);
        hits
    }

    /// Rewrites the local file with feedback folded into the records.
    pub fn compact(&self) -> Result<(), MemoryError> {
        let Some(path) = &self.path else { return Ok(()) };
        let tmp = path.with_extension("compact.tmp");
        {
            let mut f = File::create(&tmp)?;
            for r in &self.records {
                f.write_all(&canonical::to_vec(r).map_err(io_from_json)?)?;
                f.write_all(b"\n")?;
            }
            f.sync_all()?;
        }
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    /// Canonical serialization of the in-memory index, one record per line.
    pub fn canonical_index(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for r in &self.records {
            out.extend(canonical::to_vec(r).expect("records serialize"));
            out.push(b'\n');
        }
        out
    }

    fn append_line<T: Serialize>(&self, value: &T) -> Result<(), MemoryError> {
        let Some(path) = &self.path else { return Ok(()) };
        let mut line = canonical::to_vec(value).map_err(io_from_json)?;
        line.push(b'\n');
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        f.write_all(&line)?;
        Ok(())
    }
}

fn io_from_json(e: serde_json::Error) -> MemoryError {
    MemoryError::InvalidRecord(e.to_string())
}

fn read_archive(path: &Path) -> Result<Vec<MemoryRecord>, MemoryError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records: Vec<MemoryRecord> = Vec::new();
    let parse_err = |line: usize, message: String| MemoryError::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        if value.get("query_text").is_some() {
            let rec: MemoryRecord =
                serde_json::from_value(value).map_err(|e| parse_err(lineno, e.to_string()))?;
            if rec.record_id != records.len() as u64 {
                return Err(parse_err(
                    lineno,
                    format!("record id {} out of sequence (expected {})", rec.record_id, records.len()),
                ));
            }
            records.push(rec);
        } else {
            let patch: FeedbackPatch =
                serde_json::from_value(value).map_err(|e| parse_err(lineno, e.to_string()))?;
            let rec = records
                .get_mut(patch.record_id as usize)
                .ok_or_else(|| parse_err(lineno, format!("feedback for unknown record {}", patch.record_id)))?;
            rec.feedback = Some(patch.feedback);
        }
    }
    Ok(records)
}
