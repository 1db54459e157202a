//! Description-guided clustering.
//!
//! Two linear clustering heads, one over frozen image embeddings and one over
//! frozen text embeddings, are trained jointly with three objectives:
//! cross-modal neighbor distillation, image/text assignment confidence, and
//! marginal cluster entropy (to keep clusters balanced).

mod checkpoint;
mod graph;
mod kmeans;
mod loss;
mod optim;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointError};
pub use graph::{knn_graph, NeighborGraph, NeighborGraphs};
pub use kmeans::kmeans_baseline;
pub use loss::{
    grad_total, loss_and_grad_with_teachers, loss_confidence, loss_distillation, loss_entropy, loss_total,
    teacher_targets, Gradients, LossBreakdown, Teachers,
};
pub use optim::{cosine_annealing, AdamW};
pub use train::{marginal_assignment, train, write_history_csv, HistoryRow, TrainHistory};

use crate::embedding::{Dataset, Modality};
use crate::partition::Partition;
use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DgcError {
    #[error("shape mismatch: expected width {expected}, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("cannot build neighbor graph: {0}")]
    Graph(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    TrainingDiverged { epoch: usize, batch: usize },
    #[error("dataset is empty")]
    EmptyDataset,
}

/// A point on the probability simplex over `K` clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment(Vec<f64>);

impl SoftAssignment {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Builds an assignment from arbitrary probabilities (validated loosely).
    pub fn from_probs(probs: Vec<f64>) -> Result<Self, String> {
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9 {
            return Err(format!("not a probability vector (sum {sum})"));
        }
        Ok(SoftAssignment(probs))
    }

    /// Largest component, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = k;
        }
    }
    best
}

pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + z.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub(crate) fn log_softmax(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|x| x - lse).collect()
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Temperature-sharpened target: softmax of the probability vector divided by `tau`.
///
/// The re-softmax is applied to the probabilities themselves, not to logits.
pub fn sharpen(p: &SoftAssignment, tau: f64) -> SoftAssignment {
    assert!(tau > 0.0, "temperature must be positive");
    let scaled: Vec<f64> = p.0.iter().map(|x| x / tau).collect();
    SoftAssignment(softmax(&scaled))
}

/// The two clustering heads: `K x d` weight matrices for image and text.
#[derive(Debug, Clone, PartialEq)]
pub struct DgcModel {
    pub(crate) w_img: Array2<f64>,
    pub(crate) w_txt: Array2<f64>,
}

impl DgcModel {
    pub fn new(w_img: Array2<f64>, w_txt: Array2<f64>) -> Result<Self, DgcError> {
        if w_img.dim() != w_txt.dim() {
            return Err(DgcError::InvalidConfig(format!(
                "head shapes differ: {:?} vs {:?}",
                w_img.dim(),
                w_txt.dim()
            )));
        }
        if w_img.nrows() < 2 {
            return Err(DgcError::InvalidConfig("at least two clusters are required".into()));
        }
        if w_img.iter().chain(w_txt.iter()).any(|w| !w.is_finite()) {
            return Err(DgcError::InvalidConfig("non-finite weight".into()));
        }
        Ok(DgcModel { w_img, w_txt })
    }

    pub fn zeros(clusters: usize, dim: usize) -> Self {
        DgcModel {
            w_img: Array2::zeros((clusters, dim)),
            w_txt: Array2::zeros((clusters, dim)),
        }
    }

    /// Both heads drawn uniformly from `(-1/sqrt(d), 1/sqrt(d))`, image head first.
    pub fn init_uniform(clusters: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        let mut draw = || Array2::from_shape_simple_fn((clusters, dim), || rng.random_range(-bound..bound));
        let w_img = draw();
        let w_txt = draw();
        DgcModel { w_img, w_txt }
    }

    pub fn seeded(clusters: usize, dim: usize, seed: u64) -> Self {
        Self::init_uniform(clusters, dim, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn clusters(&self) -> usize {
        self.w_img.nrows()
    }

    pub fn dim(&self) -> usize {
        self.w_img.ncols()
    }

    pub fn head(&self, modality: Modality) -> &Array2<f64> {
        match modality {
            Modality::Image => &self.w_img,
            Modality::Text => &self.w_txt,
        }
    }

    pub fn head_mut(&mut self, modality: Modality) -> &mut Array2<f64> {
        match modality {
            Modality::Image => &mut self.w_img,
            Modality::Text => &mut self.w_txt,
        }
    }

    pub(crate) fn logits(&self, modality: Modality, embedding: &[f64]) -> Vec<f64> {
        self.head(modality).dot(&ArrayView1::from(embedding)).to_vec()
    }

    /// Returns a copy with cluster rows of both heads reordered: row `k` of
    /// the result is row `perm[k]` of `self`.
    pub fn permute_clusters(&self, perm: &[usize]) -> DgcModel {
        let pick = |w: &Array2<f64>| w.select(ndarray::Axis(0), perm);
        DgcModel { w_img: pick(&self.w_img), w_txt: pick(&self.w_txt) }
    }
}

/// Soft assignment of one embedding by the chosen head.
pub fn forward_assign(model: &DgcModel, embedding: &[f64], head: Modality) -> Result<SoftAssignment, DgcError> {
    if embedding.len() != model.dim() {
        return Err(DgcError::Shape { expected: model.dim(), found: embedding.len() });
    }
    Ok(SoftAssignment(softmax(&model.logits(head, embedding))))
}

/// Hard labels from the chosen head, argmax with lowest-index tie-break.
pub fn predict_partition(model: &DgcModel, dataset: &Dataset, modality: Modality) -> Result<Partition, DgcError> {
    if !dataset.is_empty() && dataset.dim() != model.dim() {
        return Err(DgcError::Shape { expected: model.dim(), found: dataset.dim() });
    }
    let labels = dataset
        .records()
        .iter()
        .map(|r| argmax(&model.logits(modality, r.embedding(modality))))
        .collect();
    Ok(Partition::new(labels, model.clusters()).expect("argmax is always in range"))
}

/// Hyperparameters for [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Number of clusters. `None` uses the number of distinct artist ids.
    pub clusters: Option<usize>,
    pub neighbors: usize,
    pub alpha: f64,
    pub tau: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            clusters: None,
            neighbors: 10,
            alpha: 3.0,
            tau: 0.1,
            epochs: 10,
            learning_rate: 1e-4,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 256,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DgcError> {
        let bad = |m: &str| Err(DgcError::InvalidConfig(m.to_string()));
        if matches!(self.clusters, Some(k) if k < 2) {
            return bad("clusters must be at least 2");
        }
        if self.neighbors == 0 || self.epochs == 0 || self.batch_size == 0 {
            return bad("neighbors, epochs and batch_size must be positive");
        }
        let positive = |x: f64| x.is_finite() && x > 0.0;
        let non_negative = |x: f64| x.is_finite() && x >= 0.0;
        if !positive(self.tau) {
            return bad("tau must be positive");
        }
        if !non_negative(self.alpha) {
            return bad("alpha must be non-negative");
        }
        if !positive(self.learning_rate) || !non_negative(self.weight_decay) || !positive(self.eps) {
            return bad("learning_rate and eps must be positive, weight_decay non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        Ok(())
    }

    /// Explicit cluster count, or the number of distinct artist ids (at least 2).
    pub fn resolve_clusters(&self, dataset: &Dataset) -> usize {
        self.clusters.unwrap_or_else(|| dataset.artist_ids().len().max(2))
    }
}
