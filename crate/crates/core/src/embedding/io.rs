//! JSON Lines reading and writing for artwork records.

use super::{normalize_for_ingest, ArtworkRecord, Dataset, NormalizationError, Source};
use serde::Deserialize;
use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: expected embedding width {expected}, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: empty id")]
    EmptyId { line: usize },
    #[error("line {line}: {field}: {source}")]
    Normalization {
        line: usize,
        field: &'static str,
        source: NormalizationError,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl IngestError {
    /// 1-based line number of the offending record, when there is one.
    pub fn line(&self) -> Option<usize> {
        match self {
            IngestError::Malformed { line, .. }
            | IngestError::DimensionMismatch { line, .. }
            | IngestError::DuplicateId { line, .. }
            | IngestError::EmptyId { line }
            | IngestError::Normalization { line, .. } => Some(*line),
            IngestError::Io(_) => None,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireRecord {
    id: String,
    #[serde(default)]
    artist_id: String,
    source: Source,
    #[serde(default)]
    prompt: String,
    image_embedding: Vec<f64>,
    text_embedding: Vec<f64>,
}

pub fn load_dataset(path: &Path, expected_dim: Option<usize>) -> Result<Dataset, IngestError> {
    let file = std::fs::File::open(path)?;
    parse_dataset(file, expected_dim)
}

/// Parses JSON Lines from any reader. Blank lines are skipped but still counted.
pub fn parse_dataset<R: Read>(reader: R, expected_dim: Option<usize>) -> Result<Dataset, IngestError> {
    let mut dim = expected_dim;
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireRecord = serde_json::from_str(&line).map_err(|e| IngestError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if wire.id.is_empty() {
            return Err(IngestError::EmptyId { line: line_no });
        }
        let expected = *dim.get_or_insert(wire.image_embedding.len());
        for found in [wire.image_embedding.len(), wire.text_embedding.len()] {
            if found != expected {
                return Err(IngestError::DimensionMismatch { line: line_no, expected, found });
            }
        }
        if expected == 0 {
            return Err(IngestError::Malformed {
                line: line_no,
                message: "embeddings must be nonempty".into(),
            });
        }
        let image_embedding = normalize_for_ingest(&wire.image_embedding).map_err(|source| {
            IngestError::Normalization { line: line_no, field: "image_embedding", source }
        })?;
        let text_embedding = normalize_for_ingest(&wire.text_embedding).map_err(|source| {
            IngestError::Normalization { line: line_no, field: "text_embedding", source }
        })?;
        if !ids.insert(wire.id.clone()) {
            return Err(IngestError::DuplicateId { line: line_no, id: wire.id });
        }
        records.push(ArtworkRecord {
            id: wire.id,
            artist_id: wire.artist_id,
            source: wire.source,
            prompt: wire.prompt,
            image_embedding,
            text_embedding,
        });
    }
    let dim = if records.is_empty() { expected_dim.unwrap_or(0) } else { dim.unwrap_or(0) };
    Ok(Dataset::from_validated(records, dim))
}

fn push_f64_array(out: &mut String, values: &[f64]) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        // 17 significant digits: always parses back to the same bits.
        let _ = write!(out, "{v:.16e}");
    }
    out.push(']');
}

/// Serializes one record as a single JSON line (no trailing newline).
pub fn record_to_json_line(record: &ArtworkRecord) -> String {
    let quote = |s: &str| serde_json::to_string(s).expect("strings always serialize");
    let mut out = String::with_capacity(64 + 50 * record.dim());
    let _ = write!(
        out,
        "{{\"id\":{},\"artist_id\":{},\"source\":\"{}\",\"prompt\":{},\"image_embedding\":",
        quote(&record.id),
        quote(&record.artist_id),
        record.source.as_str(),
        quote(&record.prompt)
    );
    push_f64_array(&mut out, &record.image_embedding);
    out.push_str(",\"text_embedding\":");
    push_f64_array(&mut out, &record.text_embedding);
    out.push('}');
    out
}

pub fn write_dataset<W: Write>(mut writer: W, records: &[ArtworkRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(writer, "{}", record_to_json_line(r))?;
    }
    writer.flush()
}

impl Dataset {
    pub(crate) fn from_validated(records: Vec<ArtworkRecord>, dim: usize) -> Self {
        Dataset { records, dim }
    }
}
