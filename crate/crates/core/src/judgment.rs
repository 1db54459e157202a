//! Three-criterion verdict for a candidate set of AI-generated works.
//!
//! Consistency bounds the mean pairwise squared distance of the candidates'
//! image embeddings. Uniqueness bounds from below the smallest distance from
//! any candidate to any corpus member. Accuracy requires the image and text
//! heads of a trained model to agree (by AMI) on candidates plus context.

use crate::corpus::{CorpusStore, OwnerKind, StyleCluster};
use crate::dgc::{forward_assign, DgcModel};
use crate::embedding::{euclidean, normalized_mean, squared_euclidean, ArtworkRecord, Modality, Source};
use crate::metrics::ami;
use crate::partition::Partition;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashSet;
use thiserror::Error;

pub const VERDICT_SCHEMA: &str = "styleguard-verdict";
pub const VERDICT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JudgmentError {
    #[error("need at least 2 candidate works, got {found}")]
    InsufficientSamples { found: usize },
    #[error("candidate {id} has an empty prompt")]
    MissingPrompt { id: String },
    #[error("candidate {id} is not AI-generated")]
    NotAi { id: String },
    #[error("reference corpus has no clusters to compare against")]
    EmptyCorpus,
    #[error("embedding width {found} does not match {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgmentThresholds {
    pub consistency: f64,
    pub differentiation: f64,
    pub alignment: f64,
}

impl Default for JudgmentThresholds {
    fn default() -> Self {
        JudgmentThresholds { consistency: 0.60, differentiation: 0.25, alignment: 0.50 }
    }
}

impl JudgmentThresholds {
    pub fn validate(&self) -> Result<(), JudgmentError> {
        let in_range = |x: f64, hi: f64| x > 0.0 && x <= hi;
        if !in_range(self.consistency, 2.0) || !in_range(self.differentiation, 2.0) {
            return Err(JudgmentError::InvalidThresholds("consistency and differentiation must lie in (0, 2]".into()));
        }
        if !in_range(self.alignment, 1.0) {
            return Err(JudgmentError::InvalidThresholds("alignment must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Consistency,
    Differentiation,
    Alignment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    Consistency {
        samples: usize,
    },
    Differentiation {
        candidate_id: String,
        member_id: String,
        cluster_id: String,
    },
    Alignment {
        records: usize,
        context_clusters: Vec<String>,
        image_clusters_used: usize,
        text_clusters_used: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub criterion: Criterion,
    pub measured: f64,
    /// The configured threshold.
    pub threshold: f64,
    /// The value `measured` is compared against. Equals `threshold` except
    /// for consistency, where it is the threshold squared.
    pub bound: f64,
    pub passed: bool,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Protected,
    FailConsistency,
    FailUniqueness,
    FailAccuracy,
}

impl Outcome {
    /// First failing criterion in the order consistency, uniqueness, accuracy.
    pub fn from_results(consistency: bool, differentiation: bool, alignment: bool) -> Outcome {
        match (consistency, differentiation, alignment) {
            (false, _, _) => Outcome::FailConsistency,
            (true, false, _) => Outcome::FailUniqueness,
            (true, true, false) => Outcome::FailAccuracy,
            (true, true, true) => Outcome::Protected,
        }
    }

    /// Process exit status used by the `judge` command.
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Protected => 0,
            Outcome::FailConsistency => 2,
            Outcome::FailUniqueness => 3,
            Outcome::FailAccuracy => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Outcome::Protected => "Protected",
            Outcome::FailConsistency => "FailConsistency",
            Outcome::FailUniqueness => "FailUniqueness",
            Outcome::FailAccuracy => "FailAccuracy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearestCluster {
    pub cluster_id: String,
    pub artist_id: String,
    pub owner_kind: OwnerKind,
    pub centroid_distance: f64,
    /// Smallest distance from any candidate to any member of the cluster.
    pub min_member_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub schema: String,
    pub schema_version: u32,
    /// Hex digest prefix over every other field.
    pub verdict_id: String,
    pub outcome: Outcome,
    /// Consistency, differentiation, alignment, in that order.
    pub results: Vec<CriterionResult>,
    pub candidate_cluster_id: String,
    pub candidate_ids: Vec<String>,
    pub medoid_id: String,
    pub nearest_human_clusters: Vec<NearestCluster>,
}

impl Verdict {
    pub fn result(&self, criterion: Criterion) -> &CriterionResult {
        self.results.iter().find(|r| r.criterion == criterion).expect("verdict holds all three results")
    }

    fn content_id(&self) -> String {
        let mut unsigned = self.clone();
        unsigned.verdict_id.clear();
        let bytes = serde_json::to_vec(&unsigned).expect("verdict serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }

    /// Whether `verdict_id` matches the content.
    pub fn verify_id(&self) -> bool {
        self.verdict_id == self.content_id()
    }
}

/// Mean pairwise squared distance, compared against `eps_c` squared.
pub fn consistency_check(embeddings: &[&[f64]], eps_c: f64) -> Result<CriterionResult, JudgmentError> {
    let n = embeddings.len();
    if n < 2 {
        return Err(JudgmentError::InsufficientSamples { found: n });
    }
    let mut sum = 0.0;
    for a in embeddings {
        for b in embeddings {
            sum += squared_euclidean(a, b);
        }
    }
    let measured = sum / (n * n) as f64;
    let bound = eps_c * eps_c;
    Ok(CriterionResult {
        criterion: Criterion::Consistency,
        measured,
        threshold: eps_c,
        bound,
        passed: measured <= bound,
        evidence: Evidence::Consistency { samples: n },
    })
}

/// An embedding tagged with its record id.
pub type Labeled<'a> = (&'a str, &'a [f64]);

/// A reference cluster's members.
#[derive(Debug, Clone)]
pub struct ReferenceGroup<'a> {
    pub cluster_id: &'a str,
    pub members: Vec<Labeled<'a>>,
}

/// Smallest candidate-to-member distance, compared against `eps_d`. Ties keep
/// the first pair in candidate, group, member order.
pub fn differentiation_check(
    candidates: &[Labeled<'_>],
    reference: &[ReferenceGroup<'_>],
    eps_d: f64,
) -> Result<CriterionResult, JudgmentError> {
    if candidates.is_empty() {
        return Err(JudgmentError::InsufficientSamples { found: 0 });
    }
    let mut best: Option<(f64, &str, &str, &str)> = None;
    for &(cid, cv) in candidates {
        for group in reference {
            for &(mid, mv) in &group.members {
                let d = euclidean(cv, mv);
                if best.is_none_or(|b| d < b.0) {
                    best = Some((d, cid, mid, group.cluster_id));
                }
            }
        }
    }
    let (measured, cid, mid, cluster) = best.ok_or(JudgmentError::EmptyCorpus)?;
    Ok(CriterionResult {
        criterion: Criterion::Differentiation,
        measured,
        threshold: eps_d,
        bound: eps_d,
        passed: measured >= eps_d,
        evidence: Evidence::Differentiation {
            candidate_id: cid.to_string(),
            member_id: mid.to_string(),
            cluster_id: cluster.to_string(),
        },
    })
}

fn head_labels(model: &DgcModel, records: &[&ArtworkRecord], head: Modality) -> Result<Partition, JudgmentError> {
    let labels = records
        .iter()
        .map(|r| {
            forward_assign(model, r.embedding(head), head)
                .map(|p| p.argmax())
                .map_err(|_| JudgmentError::DimMismatch { expected: model.dim(), found: r.dim() })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Partition::new(labels, model.clusters()).expect("argmax below K"))
}

fn clusters_used(p: &Partition) -> usize {
    p.sizes().iter().filter(|&&s| s > 0).count()
}

/// AMI between the image-head and text-head partitions of candidates plus
/// context, compared against `eps_a`. Context records without a prompt, or
/// sharing an id with a candidate, are skipped.
pub fn alignment_check(
    candidates: &[ArtworkRecord],
    model: &DgcModel,
    eps_a: f64,
    context: &[ArtworkRecord],
    context_clusters: &[String],
) -> Result<CriterionResult, JudgmentError> {
    if let Some(r) = candidates.iter().find(|r| !r.has_text()) {
        return Err(JudgmentError::MissingPrompt { id: r.id.clone() });
    }
    let ids: HashSet<&str> = candidates.iter().map(|r| r.id.as_str()).collect();
    let pool: Vec<&ArtworkRecord> = candidates
        .iter()
        .chain(context.iter().filter(|r| r.has_text() && !ids.contains(r.id.as_str())))
        .collect();
    let image = head_labels(model, &pool, Modality::Image)?;
    let text = head_labels(model, &pool, Modality::Text)?;
    let measured = ami(&image, &text);
    Ok(CriterionResult {
        criterion: Criterion::Alignment,
        measured,
        threshold: eps_a,
        bound: eps_a,
        passed: measured >= eps_a,
        evidence: Evidence::Alignment {
            records: pool.len(),
            context_clusters: context_clusters.to_vec(),
            image_clusters_used: clusters_used(&image),
            text_clusters_used: clusters_used(&text),
        },
    })
}

/// Index minimizing the summed distance to all members; lowest index on ties.
///
/// # Panics
/// If `embeddings` is empty.
pub fn select_medoid(embeddings: &[&[f64]]) -> usize {
    assert!(!embeddings.is_empty(), "medoid of an empty set");
    let mut best = (0, f64::INFINITY);
    for (i, a) in embeddings.iter().enumerate() {
        let total: f64 = embeddings.iter().map(|b| euclidean(a, b)).sum();
        if total < best.1 {
            best = (i, total);
        }
    }
    best.0
}

/// Up to `m` clusters accepted by `keep`, by ascending centroid distance to
/// `centroid`, ties by cluster id. `candidates` feed `min_member_distance`.
pub fn nearest_clusters(
    centroid: &[f64],
    candidates: &[&[f64]],
    corpus: &CorpusStore,
    m: usize,
    keep: impl Fn(&StyleCluster) -> bool,
) -> Vec<NearestCluster> {
    let members = corpus.member_image_embeddings();
    let mut ranked: Vec<NearestCluster> = corpus
        .clusters()
        .filter(|c| keep(c))
        .map(|c| {
            let min_member_distance = members
                .get(c.cluster_id.as_str())
                .into_iter()
                .flatten()
                .flat_map(|(_, mv)| candidates.iter().map(move |cv| euclidean(cv, mv)))
                .fold(f64::INFINITY, f64::min);
            NearestCluster {
                cluster_id: c.cluster_id.clone(),
                artist_id: c.artist_id.clone(),
                owner_kind: c.owner_kind,
                centroid_distance: euclidean(centroid, &c.centroid),
                min_member_distance,
            }
        })
        .collect();
    ranked.sort_by(|a, b| {
        a.centroid_distance.total_cmp(&b.centroid_distance).then_with(|| a.cluster_id.cmp(&b.cluster_id))
    });
    ranked.truncate(m);
    ranked
}

#[derive(Debug, Clone, PartialEq)]
pub struct JudgeOptions {
    pub thresholds: JudgmentThresholds,
    /// Human clusters whose members form the alignment context.
    pub context_clusters: usize,
    /// Length of the nearest-human-cluster list in the verdict.
    pub nearest: usize,
    /// Cluster ids ignored entirely, e.g. the candidates' own cluster when
    /// re-judging a promoted style.
    pub exclude: Vec<String>,
}

impl Default for JudgeOptions {
    fn default() -> Self {
        JudgeOptions { thresholds: JudgmentThresholds::default(), context_clusters: 5, nearest: 5, exclude: Vec::new() }
    }
}

/// Stable id for a candidate set, independent of record order.
pub fn candidate_cluster_id(ids: &[String]) -> String {
    let mut sorted: Vec<&str> = ids.iter().map(String::as_str).collect();
    sorted.sort_unstable();
    let digest = Sha256::digest(sorted.join("\n").as_bytes());
    format!("candidate-{}", hex::encode(&digest[..6]))
}

/// Runs all three checks and composes the verdict.
pub fn judge(
    candidates: &[ArtworkRecord],
    corpus: &CorpusStore,
    model: &DgcModel,
    options: &JudgeOptions,
) -> Result<Verdict, JudgmentError> {
    let t = &options.thresholds;
    t.validate()?;
    if let Some(r) = candidates.iter().find(|r| r.source != Source::Ai) {
        return Err(JudgmentError::NotAi { id: r.id.clone() });
    }
    for r in candidates {
        if r.dim() != corpus.dim() {
            return Err(JudgmentError::DimMismatch { expected: corpus.dim(), found: r.dim() });
        }
    }
    let excluded: HashSet<&str> = options.exclude.iter().map(String::as_str).collect();
    let usable = |c: &StyleCluster| !excluded.contains(c.cluster_id.as_str());
    if !corpus.clusters().any(usable) {
        return Err(JudgmentError::EmptyCorpus);
    }

    let images: Vec<&[f64]> = candidates.iter().map(|r| r.image_embedding.as_slice()).collect();
    let consistency = consistency_check(&images, t.consistency)?;

    let members = corpus.member_image_embeddings();
    let reference: Vec<ReferenceGroup> = corpus
        .clusters()
        .filter(|c| usable(c))
        .map(|c| ReferenceGroup {
            cluster_id: c.cluster_id.as_str(),
            members: members.get(c.cluster_id.as_str()).cloned().unwrap_or_default(),
        })
        .collect();
    let labeled: Vec<Labeled> = candidates.iter().map(|r| (r.id.as_str(), r.image_embedding.as_slice())).collect();
    let differentiation = differentiation_check(&labeled, &reference, t.differentiation)?;

    let medoid = select_medoid(&images);
    let centroid = normalized_mean(images.iter().copied(), corpus.dim()).unwrap_or_else(|_| images[medoid].to_vec());
    let is_human = |c: &StyleCluster| usable(c) && c.owner_kind == OwnerKind::Human;
    let context_ranked = nearest_clusters(&centroid, &images, corpus, options.context_clusters, is_human);
    let mut context = Vec::new();
    for c in &context_ranked {
        context.extend(corpus.cluster_records(&c.cluster_id).expect("ranked ids exist"));
    }
    let context_ids: Vec<String> = context_ranked.iter().map(|c| c.cluster_id.clone()).collect();
    let alignment = alignment_check(candidates, model, t.alignment, &context, &context_ids)?;

    let outcome = Outcome::from_results(consistency.passed, differentiation.passed, alignment.passed);
    let candidate_ids: Vec<String> = candidates.iter().map(|r| r.id.clone()).collect();
    let mut verdict = Verdict {
        schema: VERDICT_SCHEMA.into(),
        schema_version: VERDICT_SCHEMA_VERSION,
        verdict_id: String::new(),
        outcome,
        results: vec![consistency, differentiation, alignment],
        candidate_cluster_id: candidate_cluster_id(&candidate_ids),
        candidate_ids,
        medoid_id: candidates[medoid].id.clone(),
        nearest_human_clusters: nearest_clusters(&centroid, &images, corpus, options.nearest, is_human),
    };
    verdict.verdict_id = verdict.content_id();
    Ok(verdict)
}
