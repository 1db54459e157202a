//! Human-readable verdict reports.
//!
//! [`build_report_context`] gathers every number a report may print.
//! [`render_template_report`] turns it into deterministic text; [`mllm`]
//! optionally asks a remote model to rewrite it.

pub mod mllm;

pub use mllm::{
    mllm_report, HttpTransport, MllmClientConfig, MllmError, ReportOutput, StubTransport, Transport, TransportMode,
    DEFAULT_PROMPT_TEMPLATE,
};

use crate::corpus::CorpusStore;
use crate::embedding::ArtworkRecord;
use crate::judgment::{Criterion, CriterionResult, Evidence, Outcome, Verdict};
use serde::{Deserialize, Serialize};
use std::fmt::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    /// Hex digest of the configuration in effect.
    pub config_hash: String,
    /// Unix seconds.
    pub timestamp: u64,
    /// Name of the generator that produced the candidates, if known.
    pub generator_model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub count: usize,
    pub generator_model: String,
    pub prompts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearestRow {
    pub cluster_id: String,
    pub artist_id: String,
    pub centroid_distance: f64,
    pub min_member_distance: f64,
    pub members: usize,
    pub medoid_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub criterion: Criterion,
    pub threshold: f64,
    pub bound: f64,
    pub measured: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportContext {
    pub verdict: Verdict,
    pub candidates: CandidateSummary,
    /// Ascending by centroid distance.
    pub nearest: Vec<NearestRow>,
    pub thresholds: Vec<ThresholdRow>,
    pub run: RunMetadata,
}

pub fn build_report_context(
    verdict: &Verdict,
    candidates: &[ArtworkRecord],
    corpus: &CorpusStore,
    run: RunMetadata,
) -> ReportContext {
    let mut nearest: Vec<NearestRow> = verdict
        .nearest_human_clusters
        .iter()
        .map(|n| {
            let stored = corpus.cluster(&n.cluster_id);
            NearestRow {
                cluster_id: n.cluster_id.clone(),
                artist_id: n.artist_id.clone(),
                centroid_distance: n.centroid_distance,
                min_member_distance: n.min_member_distance,
                members: stored.map_or(0, |c| c.member_ids.len()),
                medoid_id: stored.map_or_else(String::new, |c| c.medoid_id.clone()),
            }
        })
        .collect();
    nearest.sort_by(|a, b| {
        a.centroid_distance.total_cmp(&b.centroid_distance).then_with(|| a.cluster_id.cmp(&b.cluster_id))
    });
    ReportContext {
        verdict: verdict.clone(),
        candidates: CandidateSummary {
            count: candidates.len(),
            generator_model: run.generator_model.clone(),
            prompts: candidates.iter().map(|r| r.prompt.clone()).collect(),
        },
        nearest,
        thresholds: verdict
            .results
            .iter()
            .map(|r| ThresholdRow {
                criterion: r.criterion,
                threshold: r.threshold,
                bound: r.bound,
                measured: r.measured,
                passed: r.passed,
            })
            .collect(),
        run,
    }
}

fn status(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

fn headline(outcome: Outcome) -> &'static str {
    match outcome {
        Outcome::Protected => "Protected: a consistent, unique and prompt-aligned style",
        Outcome::FailConsistency => "Not protected: the works do not share a consistent style",
        Outcome::FailUniqueness => "Not protected: the style is too close to an existing style",
        Outcome::FailAccuracy => "Not protected: the images do not follow their prompts",
    }
}

fn criterion_section(out: &mut String, title: &str, r: &CriterionResult, rule: &str) {
    let _ = writeln!(out, "## {title}\n");
    let _ = writeln!(out, "Status: {}", status(r.passed));
    let _ = writeln!(out, "Measured: {:.6}", r.measured);
    let _ = writeln!(out, "Threshold: {}", r.threshold);
    let _ = writeln!(out, "Rule: {rule} {:.6}", r.bound);
    match &r.evidence {
        Evidence::Consistency { samples } => {
            let _ = writeln!(out, "Works compared: {samples}");
        }
        Evidence::Differentiation { candidate_id, member_id, cluster_id } => {
            let _ = writeln!(out, "Closest pair: candidate {candidate_id} and {member_id} of cluster {cluster_id}");
        }
        Evidence::Alignment { records, context_clusters, image_clusters_used, text_clusters_used } => {
            let _ = writeln!(out, "Records partitioned: {records}");
            let _ = writeln!(out, "Context clusters: {}", if context_clusters.is_empty() { "none".to_string() } else { context_clusters.join(", ") });
            let _ = writeln!(out, "Clusters used: image {image_clusters_used}, text {text_clusters_used}");
        }
    }
    out.push('\n');
}

/// Deterministic plain-text report. Equal contexts give equal bytes.
pub fn render_template_report(ctx: &ReportContext) -> String {
    let v = &ctx.verdict;
    let mut out = String::new();
    let _ = writeln!(out, "# Style protection report\n");
    let _ = writeln!(out, "## Summary\n");
    let _ = writeln!(out, "Outcome: {}", v.outcome.label());
    let _ = writeln!(out, "{}", headline(v.outcome));
    let _ = writeln!(out, "Verdict id: {}", v.verdict_id);
    let _ = writeln!(out, "Candidate cluster: {}", v.candidate_cluster_id);
    let _ = writeln!(out, "Candidate works: {}", ctx.candidates.count);
    let _ = writeln!(out, "Representative work: {}", v.medoid_id);
    if !ctx.candidates.generator_model.is_empty() {
        let _ = writeln!(out, "Generator: {}", ctx.candidates.generator_model);
    }
    let _ = writeln!(out, "Seed: {}", ctx.run.seed);
    let _ = writeln!(out, "Config hash: {}", ctx.run.config_hash);
    let _ = writeln!(out, "Timestamp: {}", ctx.run.timestamp);
    out.push('\n');

    criterion_section(&mut out, "Consistency", v.result(Criterion::Consistency), "mean pairwise squared distance <=");
    criterion_section(&mut out, "Uniqueness", v.result(Criterion::Differentiation), "minimum distance to any corpus work >=");
    criterion_section(&mut out, "Accuracy", v.result(Criterion::Alignment), "image/text partition AMI >=");

    let _ = writeln!(out, "## Nearest Human Styles\n");
    if ctx.nearest.is_empty() {
        let _ = writeln!(out, "No human clusters in the corpus.");
    } else {
        let _ = writeln!(out, "| rank | cluster | artist | centroid distance | closest work distance | members | medoid |");
        let _ = writeln!(out, "|---|---|---|---|---|---|---|");
        for (i, n) in ctx.nearest.iter().enumerate() {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {:.6} | {:.6} | {} | {} |",
                i + 1,
                n.cluster_id,
                n.artist_id,
                n.centroid_distance,
                n.min_member_distance,
                n.members,
                n.medoid_id
            );
        }
    }
    out.push('\n');

    let _ = writeln!(out, "## Recommendation\n");
    match v.outcome {
        Outcome::Protected => {
            let _ = writeln!(out, "Register the works as a validated style:");
            let _ = writeln!(
                out,
                "    styleguard --store <STORE> corpus promote --verdict <VERDICT.json> --candidates <CANDIDATES.jsonl>"
            );
        }
        Outcome::FailConsistency => {
            let _ = writeln!(out, "Curate a tighter set of works that share one visual style, then resubmit.");
        }
        Outcome::FailUniqueness => {
            let (cluster, member) = match &v.result(Criterion::Differentiation).evidence {
                Evidence::Differentiation { cluster_id, member_id, .. } => (cluster_id.as_str(), member_id.as_str()),
                _ => ("", ""),
            };
            let _ = writeln!(
                out,
                "The style overlaps cluster {cluster} (closest work {member}). Review for possible imitation before any claim."
            );
        }
        Outcome::FailAccuracy => {
            let _ = writeln!(out, "Revise prompts so they describe what the images show, regenerate, then resubmit.");
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::corpus::OwnerKind;
    use crate::judgment::{candidate_cluster_id, NearestCluster, VERDICT_SCHEMA, VERDICT_SCHEMA_VERSION};

    fn result(criterion: Criterion, measured: f64, threshold: f64, passed: bool, evidence: Evidence) -> CriterionResult {
        let bound = if criterion == Criterion::Consistency { threshold * threshold } else { threshold };
        CriterionResult { criterion, measured, threshold, bound, passed, evidence }
    }

    pub(crate) fn verdict(outcome: Outcome) -> Verdict {
        let ok = |c| !matches!((outcome, c), (Outcome::FailConsistency, Criterion::Consistency) | (Outcome::FailUniqueness, Criterion::Differentiation) | (Outcome::FailAccuracy, Criterion::Alignment));
        let ids = vec!["a1".to_string(), "a2".to_string()];
        Verdict {
            schema: VERDICT_SCHEMA.into(),
            schema_version: VERDICT_SCHEMA_VERSION,
            verdict_id: "0123456789abcdef".into(),
            outcome,
            results: vec![
                result(Criterion::Consistency, 0.1, 0.6, ok(Criterion::Consistency), Evidence::Consistency { samples: 2 }),
                result(
                    Criterion::Differentiation,
                    0.7,
                    0.25,
                    ok(Criterion::Differentiation),
                    Evidence::Differentiation { candidate_id: "a1".into(), member_id: "h7".into(), cluster_id: "human-0002".into() },
                ),
                result(
                    Criterion::Alignment,
                    0.9,
                    0.5,
                    ok(Criterion::Alignment),
                    Evidence::Alignment { records: 2, context_clusters: vec![], image_clusters_used: 1, text_clusters_used: 1 },
                ),
            ],
            candidate_cluster_id: candidate_cluster_id(&ids),
            candidate_ids: ids,
            medoid_id: "a1".into(),
            nearest_human_clusters: vec![
                NearestCluster {
                    cluster_id: "human-0003".into(),
                    artist_id: "far".into(),
                    owner_kind: OwnerKind::Human,
                    centroid_distance: 1.2,
                    min_member_distance: 1.0,
                },
                NearestCluster {
                    cluster_id: "human-0002".into(),
                    artist_id: "near".into(),
                    owner_kind: OwnerKind::Human,
                    centroid_distance: 0.8,
                    min_member_distance: 0.7,
                },
            ],
        }
    }

    pub(crate) fn ctx(outcome: Outcome) -> ReportContext {
        let dir = tempfile::tempdir().unwrap();
        let corpus = CorpusStore::create(dir.path(), 2).unwrap();
        let run = RunMetadata { seed: 1, config_hash: "cafe".into(), timestamp: 0, generator_model: "gen-x".into() };
        build_report_context(&verdict(outcome), &[], &corpus, run)
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::ctx;
    use super::*;

    #[test]
    fn nearest_rows_are_sorted() {
        let c = ctx(Outcome::Protected);
        assert_eq!(c.nearest[0].cluster_id, "human-0002");
        assert_eq!(c.thresholds.len(), 3);
        assert!(c.thresholds.iter().all(|t| t.passed));
    }

    #[test]
    fn failed_consistency_is_flagged() {
        let c = ctx(Outcome::FailConsistency);
        assert!(!c.thresholds[0].passed);
        assert!(c.thresholds[1].passed);
    }

    #[test]
    fn rendering_is_byte_stable_and_has_all_sections() {
        let c = ctx(Outcome::Protected);
        let a = render_template_report(&c);
        assert_eq!(a, render_template_report(&c));
        let mut last = 0;
        for section in ["Summary", "Consistency", "Uniqueness", "Accuracy", "Nearest Human Styles", "Recommendation"] {
            let at = a.find(&format!("## {section}")).unwrap_or_else(|| panic!("missing {section}"));
            assert!(at > last);
            last = at;
        }
        assert!(a.contains("corpus promote"));
    }

    #[test]
    fn failed_uniqueness_names_the_cluster() {
        let text = render_template_report(&ctx(Outcome::FailUniqueness));
        let rec = &text[text.find("## Recommendation").unwrap()..];
        assert!(rec.contains("human-0002"));
        assert!(!rec.contains("corpus promote"));
    }

    #[test]
    fn printed_thresholds_equal_configured_values() {
        let text = render_template_report(&ctx(Outcome::Protected));
        for t in ["Threshold: 0.6\n", "Threshold: 0.25\n", "Threshold: 0.5\n"] {
            assert!(text.contains(t), "{t}");
        }
    }
}
