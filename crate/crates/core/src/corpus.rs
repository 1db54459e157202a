//! Persistent registry of reference style clusters.
//!
//! A store is one directory:
//!
//! - `manifest.json` holds cluster metadata, member metadata and the name of
//!   the current embedding matrix.
//! - `embeddings-v{N}.bin` holds one row per member, `[image | text]`, as
//!   little-endian `f64`. Row order equals manifest member order.
//!
//! Every mutation writes a fresh matrix file and then swaps the manifest by
//! rename, so a reader that loads the manifest always finds the matrix it
//! names. The matrix of the previous version is kept; older ones are pruned.

use crate::embedding::{normalized_mean, ArtworkRecord, Source};
use crate::judgment::{select_medoid, Outcome, Verdict};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const STORE_SCHEMA: &str = "styleguard-corpus";
pub const STORE_SCHEMA_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const LOCK: &str = ".lock";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no corpus store at {0}")]
    StoreNotFound(PathBuf),
    #[error("a corpus store already exists at {0}")]
    StoreExists(PathBuf),
    #[error("store has dim {found}, expected {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("member {0} already belongs to a cluster")]
    DuplicateMember(String),
    #[error("member embeddings average to zero; centroid undefined")]
    CentroidDegenerate,
    #[error("cannot add an empty cluster")]
    EmptyCluster,
    #[error("verdict outcome {0:?} is not promotable")]
    PromotionRefused(Outcome),
    #[error("records do not match the verdict's candidate ids")]
    CandidateMismatch,
    #[error("unknown cluster {0}")]
    UnknownCluster(String),
    #[error("store is locked by another writer ({0})")]
    Locked(PathBuf),
    #[error("store changed on disk (version {found}, expected {expected})")]
    Stale { expected: u64, found: u64 },
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OwnerKind {
    Human,
    ValidatedAi,
}

impl std::str::FromStr for OwnerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "human" => Ok(OwnerKind::Human),
            "validated_ai" => Ok(OwnerKind::ValidatedAi),
            other => Err(format!("unknown owner kind {other:?} (expected human or validated_ai)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleCluster {
    pub cluster_id: String,
    pub owner_kind: OwnerKind,
    pub artist_id: String,
    pub member_ids: Vec<String>,
    /// Normalized mean of member image embeddings.
    pub centroid: Vec<f64>,
    pub medoid_id: String,
    /// Unix seconds.
    pub created_at: u64,
    pub provenance_note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MemberEntry {
    id: String,
    artist_id: String,
    source: Source,
    prompt: String,
    cluster_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    schema: String,
    schema_version: u32,
    dim: usize,
    version: u64,
    next_seq: u64,
    matrix: String,
    clusters: Vec<StyleCluster>,
    members: Vec<MemberEntry>,
}

/// Which clusters [`CorpusStore::query`] returns. Unset fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClusterFilter {
    pub owner_kind: Option<OwnerKind>,
    pub cluster_id: Option<String>,
    pub artist_id: Option<String>,
}

impl ClusterFilter {
    fn matches(&self, c: &StyleCluster) -> bool {
        self.owner_kind.is_none_or(|k| k == c.owner_kind)
            && self.cluster_id.as_ref().is_none_or(|id| *id == c.cluster_id)
            && self.artist_id.as_ref().is_none_or(|a| *a == c.artist_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSummary {
    pub cluster_id: String,
    pub owner_kind: OwnerKind,
    pub artist_id: String,
    pub members: usize,
    pub medoid_id: String,
    pub created_at: u64,
    pub provenance_note: String,
}

/// Artist dominance of one cluster, as reported by [`CorpusStore::screen`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreenRow {
    pub cluster_id: String,
    pub dominant_artist: String,
    pub share: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStore {
    root: PathBuf,
    dim: usize,
    version: u64,
    next_seq: u64,
    matrix_name: String,
    clusters: BTreeMap<String, StyleCluster>,
    members: Vec<MemberEntry>,
    /// `members.len()` rows of width `2 * dim`.
    matrix: Vec<f64>,
}

struct LockGuard(PathBuf);

impl LockGuard {
    fn acquire(root: &Path) -> Result<Self, CorpusError> {
        let path = root.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(LockGuard(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CorpusError::Locked(path)),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn matrix_name(version: u64) -> String {
    format!("embeddings-v{version}.bin")
}

/// `SOURCE_DATE_EPOCH` when set, else the wall clock.
pub fn timestamp_now() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or_else(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        })
}

fn encode_matrix(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn decode_matrix(bytes: &[u8]) -> Result<Vec<f64>, CorpusError> {
    if !bytes.len().is_multiple_of(8) {
        return Err(CorpusError::Corrupt("matrix length is not a multiple of 8".into()));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

impl CorpusStore {
    /// Initializes an empty store at version 0.
    pub fn create(root: &Path, dim: usize) -> Result<Self, CorpusError> {
        if dim == 0 {
            return Err(CorpusError::Corrupt("dim must be positive".into()));
        }
        if root.join(MANIFEST).exists() {
            return Err(CorpusError::StoreExists(root.to_path_buf()));
        }
        fs::create_dir_all(root)?;
        let store = CorpusStore {
            root: root.to_path_buf(),
            dim,
            version: 0,
            next_seq: 1,
            matrix_name: matrix_name(0),
            clusters: BTreeMap::new(),
            members: Vec::new(),
            matrix: Vec::new(),
        };
        let _lock = LockGuard::acquire(root)?;
        store.persist()?;
        Ok(store)
    }

    pub fn open(root: &Path, expected_dim: Option<usize>) -> Result<Self, CorpusError> {
        let manifest_path = root.join(MANIFEST);
        if !manifest_path.is_file() {
            return Err(CorpusError::StoreNotFound(root.to_path_buf()));
        }
        let manifest: Manifest = serde_json::from_slice(&fs::read(&manifest_path)?)?;
        if manifest.schema != STORE_SCHEMA || manifest.schema_version != STORE_SCHEMA_VERSION {
            return Err(CorpusError::Corrupt(format!(
                "unsupported manifest {} v{}",
                manifest.schema, manifest.schema_version
            )));
        }
        if let Some(expected) = expected_dim {
            if expected != manifest.dim {
                return Err(CorpusError::DimMismatch { expected, found: manifest.dim });
            }
        }
        let matrix = decode_matrix(&fs::read(root.join(&manifest.matrix))?)?;
        if matrix.len() != manifest.members.len() * 2 * manifest.dim {
            return Err(CorpusError::Corrupt("matrix size does not match member count".into()));
        }
        let mut clusters = BTreeMap::new();
        for c in manifest.clusters {
            if c.centroid.len() != manifest.dim {
                return Err(CorpusError::Corrupt(format!("centroid of {} has wrong width", c.cluster_id)));
            }
            clusters.insert(c.cluster_id.clone(), c);
        }
        Ok(CorpusStore {
            root: root.to_path_buf(),
            dim: manifest.dim,
            version: manifest.version,
            next_seq: manifest.next_seq,
            matrix_name: manifest.matrix,
            clusters,
            members: manifest.members,
            matrix,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    /// Clusters in ascending id order.
    pub fn clusters(&self) -> impl Iterator<Item = &StyleCluster> {
        self.clusters.values()
    }

    pub fn cluster(&self, id: &str) -> Option<&StyleCluster> {
        self.clusters.get(id)
    }

    fn row(&self, index: usize) -> (&[f64], &[f64]) {
        let w = 2 * self.dim;
        let row = &self.matrix[index * w..(index + 1) * w];
        row.split_at(self.dim)
    }

    fn member_record(&self, index: usize) -> ArtworkRecord {
        let m = &self.members[index];
        let (image, text) = self.row(index);
        ArtworkRecord {
            id: m.id.clone(),
            artist_id: m.artist_id.clone(),
            source: m.source,
            prompt: m.prompt.clone(),
            image_embedding: image.to_vec(),
            text_embedding: text.to_vec(),
        }
    }

    /// Member records of one cluster, in insertion order.
    pub fn cluster_records(&self, id: &str) -> Result<Vec<ArtworkRecord>, CorpusError> {
        if !self.clusters.contains_key(id) {
            return Err(CorpusError::UnknownCluster(id.to_string()));
        }
        Ok((0..self.members.len())
            .filter(|&i| self.members[i].cluster_id == id)
            .map(|i| self.member_record(i))
            .collect())
    }

    /// Image embeddings of every member, grouped by cluster id.
    pub fn member_image_embeddings(&self) -> HashMap<&str, Vec<(&str, &[f64])>> {
        let mut out: HashMap<&str, Vec<(&str, &[f64])>> = HashMap::new();
        for (i, m) in self.members.iter().enumerate() {
            out.entry(m.cluster_id.as_str()).or_default().push((m.id.as_str(), self.row(i).0));
        }
        out
    }

    pub fn query(&self, filter: &ClusterFilter) -> Vec<ClusterSummary> {
        self.clusters
            .values()
            .filter(|c| filter.matches(c))
            .map(|c| ClusterSummary {
                cluster_id: c.cluster_id.clone(),
                owner_kind: c.owner_kind,
                artist_id: c.artist_id.clone(),
                members: c.member_ids.len(),
                medoid_id: c.medoid_id.clone(),
                created_at: c.created_at,
                provenance_note: c.provenance_note.clone(),
            })
            .collect()
    }

    /// Adds a cluster, computing its centroid and medoid, and persists the
    /// store. Returns the new cluster id.
    pub fn add_cluster(
        &mut self,
        records: &[ArtworkRecord],
        owner_kind: OwnerKind,
        artist_id: &str,
        note: &str,
    ) -> Result<String, CorpusError> {
        if records.is_empty() {
            return Err(CorpusError::EmptyCluster);
        }
        let existing: HashSet<&str> = self.members.iter().map(|m| m.id.as_str()).collect();
        let mut seen = HashSet::new();
        for r in records {
            if r.dim() != self.dim || r.text_embedding.len() != self.dim {
                return Err(CorpusError::DimMismatch { expected: self.dim, found: r.dim() });
            }
            if existing.contains(r.id.as_str()) || !seen.insert(r.id.as_str()) {
                return Err(CorpusError::DuplicateMember(r.id.clone()));
            }
        }
        let images: Vec<&[f64]> = records.iter().map(|r| r.image_embedding.as_slice()).collect();
        let centroid =
            normalized_mean(images.iter().copied(), self.dim).map_err(|_| CorpusError::CentroidDegenerate)?;
        let medoid = select_medoid(&images);

        let lock = LockGuard::acquire(&self.root)?;
        self.check_fresh()?;

        let prefix = match owner_kind {
            OwnerKind::Human => "human",
            OwnerKind::ValidatedAi => "ai",
        };
        let cluster_id = format!("{prefix}-{:04}", self.next_seq);
        let mut next = self.clone();
        next.next_seq += 1;
        next.version += 1;
        next.matrix_name = matrix_name(next.version);
        for r in records {
            next.members.push(MemberEntry {
                id: r.id.clone(),
                artist_id: r.artist_id.clone(),
                source: r.source,
                prompt: r.prompt.clone(),
                cluster_id: cluster_id.clone(),
            });
            next.matrix.extend_from_slice(&r.image_embedding);
            next.matrix.extend_from_slice(&r.text_embedding);
        }
        next.clusters.insert(
            cluster_id.clone(),
            StyleCluster {
                cluster_id: cluster_id.clone(),
                owner_kind,
                artist_id: artist_id.to_string(),
                member_ids: records.iter().map(|r| r.id.clone()).collect(),
                centroid,
                medoid_id: records[medoid].id.clone(),
                created_at: timestamp_now(),
                provenance_note: note.to_string(),
            },
        );
        next.persist()?;
        next.prune(self.version);
        drop(lock);
        *self = next;
        Ok(cluster_id)
    }

    /// Registers a protected candidate set as a validated AI style.
    pub fn promote_verdict(&mut self, verdict: &Verdict, records: &[ArtworkRecord]) -> Result<String, CorpusError> {
        if verdict.outcome != Outcome::Protected {
            return Err(CorpusError::PromotionRefused(verdict.outcome));
        }
        let mut given: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
        let mut expected: Vec<&str> = verdict.candidate_ids.iter().map(String::as_str).collect();
        given.sort_unstable();
        expected.sort_unstable();
        if given != expected {
            return Err(CorpusError::CandidateMismatch);
        }
        let artist = records.first().map(|r| r.artist_id.as_str()).unwrap_or("");
        let note = format!("promoted from verdict {} ({})", verdict.verdict_id, verdict.candidate_cluster_id);
        self.add_cluster(records, OwnerKind::ValidatedAi, artist, &note)
    }

    /// Share of each cluster held by its most frequent member artist. A
    /// cluster is kept when that share exceeds `dominance`. Ties between
    /// artists resolve to the lexicographically smallest id.
    pub fn screen(&self, dominance: f64) -> Vec<ScreenRow> {
        self.clusters
            .values()
            .map(|c| {
                let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                for m in self.members.iter().filter(|m| m.cluster_id == c.cluster_id) {
                    *counts.entry(m.artist_id.as_str()).or_default() += 1;
                }
                let total: usize = counts.values().sum();
                let (artist, top) = counts
                    .iter()
                    .fold(("", 0usize), |best, (&a, &n)| if n > best.1 { (a, n) } else { best });
                let share = if total == 0 { 0.0 } else { top as f64 / total as f64 };
                ScreenRow {
                    cluster_id: c.cluster_id.clone(),
                    dominant_artist: artist.to_string(),
                    share,
                    kept: share > dominance,
                }
            })
            .collect()
    }

    fn check_fresh(&self) -> Result<(), CorpusError> {
        let on_disk: Manifest = serde_json::from_slice(&fs::read(self.root.join(MANIFEST))?)?;
        if on_disk.version != self.version {
            return Err(CorpusError::Stale { expected: self.version, found: on_disk.version });
        }
        Ok(())
    }

    fn persist(&self) -> Result<(), CorpusError> {
        write_atomic(&self.root.join(&self.matrix_name), &encode_matrix(&self.matrix))?;
        let manifest = Manifest {
            schema: STORE_SCHEMA.into(),
            schema_version: STORE_SCHEMA_VERSION,
            dim: self.dim,
            version: self.version,
            next_seq: self.next_seq,
            matrix: self.matrix_name.clone(),
            clusters: self.clusters.values().cloned().collect(),
            members: self.members.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        write_atomic(&self.root.join(MANIFEST), text.as_bytes())?;
        Ok(())
    }

    /// Removes matrix files older than `keep_from`.
    fn prune(&self, keep_from: u64) {
        for v in 0..keep_from {
            let _ = fs::remove_file(self.root.join(matrix_name(v)));
        }
    }
}
