//! Artwork records, datasets and the ingestion boundary.
//!
//! Embeddings are produced by external encoders and arrive here as JSON Lines.
//! Everything downstream assumes unit-norm vectors of a single shared width.

mod augment;
mod io;

pub use augment::{augment_prompts, Augmentation, EntityLexicon, LexiconError};
pub use io::{load_dataset, parse_dataset, record_to_json_line, write_dataset, IngestError};

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

/// Vectors whose norm falls below this are rejected at ingestion.
pub const MIN_INGEST_NORM: f64 = 1e-9;

/// A vector already this close to unit length is returned untouched by
/// [`normalize`], which makes normalization exactly idempotent.
const UNIT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormalizationError {
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("vector norm {0:e} is below the ingestion floor")]
    BelowFloor(f64),
    #[error("vector contains a non-finite component")]
    NonFinite,
}

/// Whether a work was made by a human artist or by a generative model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Human,
    Ai,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Human => "human",
            Source::Ai => "ai",
        }
    }
}

/// Which encoder produced an embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Text,
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Modality::Image => "image",
            Modality::Text => "text",
        })
    }
}

impl std::str::FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "image" => Ok(Modality::Image),
            "text" => Ok(Modality::Text),
            other => Err(format!("unknown modality `{other}` (expected image|text)")),
        }
    }
}

/// One artwork with its paired image and text embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtworkRecord {
    pub id: String,
    /// Ground-truth style label when known, empty otherwise.
    #[serde(default)]
    pub artist_id: String,
    pub source: Source,
    /// May be empty for human works; such records only take part in
    /// image-side training terms.
    #[serde(default)]
    pub prompt: String,
    pub image_embedding: Vec<f64>,
    pub text_embedding: Vec<f64>,
}

impl ArtworkRecord {
    pub fn dim(&self) -> usize {
        self.image_embedding.len()
    }

    pub fn has_text(&self) -> bool {
        !self.prompt.is_empty()
    }

    pub fn embedding(&self, modality: Modality) -> &[f64] {
        match modality {
            Modality::Image => &self.image_embedding,
            Modality::Text => &self.text_embedding,
        }
    }
}

/// Encoder provenance. The encoders themselves live outside this crate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub name: String,
    pub dim: usize,
    pub modality: Modality,
}

impl EncoderSpec {
    /// Checks that every embedding of this encoder's modality has the declared width.
    pub fn check(&self, dataset: &Dataset) -> Result<(), String> {
        if self.dim == 0 {
            return Err(format!("encoder `{}` declares zero width", self.name));
        }
        for r in dataset.records() {
            let got = r.embedding(self.modality).len();
            if got != self.dim {
                return Err(format!(
                    "record `{}` has {} embedding of width {got}, encoder `{}` declares {}",
                    r.id, self.modality, self.name, self.dim
                ));
            }
        }
        Ok(())
    }
}

/// An ordered, validated collection of records sharing one embedding width.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    records: Vec<ArtworkRecord>,
    dim: usize,
}

impl Dataset {
    /// Builds a dataset from already-normalized records, checking the shared
    /// invariants (nonempty unique ids, one width, unit norms).
    pub fn new(records: Vec<ArtworkRecord>) -> Result<Self, String> {
        let dim = records.first().map(ArtworkRecord::dim).unwrap_or(0);
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if r.id.is_empty() {
                return Err("record with empty id".into());
            }
            if !seen.insert(r.id.as_str()) {
                return Err(format!("duplicate id `{}`", r.id));
            }
            if r.image_embedding.len() != dim || r.text_embedding.len() != dim {
                return Err(format!("record `{}` does not have width {dim}", r.id));
            }
            for v in [&r.image_embedding, &r.text_embedding] {
                let n = l2_norm(v);
                if (n - 1.0).abs() > 1e-6 {
                    return Err(format!("record `{}` has a non-unit embedding (norm {n})", r.id));
                }
            }
        }
        Ok(Dataset { records, dim })
    }

    pub fn records(&self) -> &[ArtworkRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<ArtworkRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_human(&self) -> usize {
        self.records.iter().filter(|r| r.source == Source::Human).count()
    }

    pub fn num_ai(&self) -> usize {
        self.records.iter().filter(|r| r.source == Source::Ai).count()
    }

    pub fn get(&self, id: &str) -> Option<&ArtworkRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Distinct nonempty artist ids in first-seen order.
    pub fn artist_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .map(|r| r.artist_id.as_str())
            .filter(|a| !a.is_empty() && seen.insert(*a))
            .collect()
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_euclidean(a, b).sqrt()
}

pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Scales `v` to unit Euclidean norm.
///
/// Vectors already within 1e-12 of unit length come back bit-identical, so
/// re-ingesting a normalized file never perturbs it.
pub fn normalize(v: &[f64]) -> Result<Vec<f64>, NormalizationError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(NormalizationError::NonFinite);
    }
    let n = l2_norm(v);
    if n == 0.0 {
        return Err(NormalizationError::ZeroVector);
    }
    if (n - 1.0).abs() <= UNIT_TOLERANCE {
        return Ok(v.to_vec());
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Ingestion-side normalization: like [`normalize`] but refuses near-zero vectors.
pub fn normalize_for_ingest(v: &[f64]) -> Result<Vec<f64>, NormalizationError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(NormalizationError::NonFinite);
    }
    let n = l2_norm(v);
    if n == 0.0 {
        return Err(NormalizationError::ZeroVector);
    }
    if n < MIN_INGEST_NORM {
        return Err(NormalizationError::BelowFloor(n));
    }
    normalize(v)
}

/// Normalized arithmetic mean of a set of vectors.
pub fn normalized_mean<'a, I>(vectors: I, dim: usize) -> Result<Vec<f64>, NormalizationError>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut sum = vec![0.0; dim];
    let mut count = 0usize;
    for v in vectors {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
        count += 1;
    }
    if count == 0 {
        return Err(NormalizationError::ZeroVector);
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    normalize_for_ingest(&mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_three_four_five() {
        let v = normalize(&[3.0, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15);
        assert!((v[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn normalize_unit_is_identity() {
        assert_eq!(normalize(&[1.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn normalize_zero_fails() {
        assert_eq!(normalize(&[0.0, 0.0]), Err(NormalizationError::ZeroVector));
    }

    #[test]
    fn ingest_rejects_tiny_vectors() {
        assert!(matches!(
            normalize_for_ingest(&[1e-10, 0.0]),
            Err(NormalizationError::BelowFloor(_))
        ));
        assert!(normalize_for_ingest(&[1e-8, 0.0]).is_ok());
    }

    #[test]
    fn antipodal_mean_is_degenerate() {
        let a = [1.0, 0.0];
        let b = [-1.0, 0.0];
        assert!(normalized_mean([&a[..], &b[..]], 2).is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_unit_and_idempotent(v in prop::collection::vec(-100.0f64..100.0, 1..40)) {
            prop_assume!(l2_norm(&v) > 1e-6);
            let once = normalize(&v).unwrap();
            prop_assert!((l2_norm(&once) - 1.0).abs() < 1e-12);
            let twice = normalize(&once).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
