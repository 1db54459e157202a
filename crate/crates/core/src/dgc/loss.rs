//! The three clustering objectives and their exact gradients.
//!
//! For a batch `B`, with `p_i` the image-head and `q_i` the text-head
//! assignment of record `i`:
//!
//! - distillation: `sum_i [ sum_{j in Nv(i)} H(sharp(p_j), q_i) + sum_{j in Nt(i)} H(sharp(q_j), p_i) ]`
//! - confidence:   `-sum_i ln(p_i . q_i)`
//! - entropy:      `H(mean_i p_i) + H(mean_i q_i)`
//! - total:        `distillation + confidence - alpha * entropy`
//!
//! where `H(a, b) = -sum_k a_k ln b_k`. Sharpened neighbor targets are
//! constants for differentiation. Records without a prompt take part in the
//! image marginal and serve as image-side teachers, but contribute no term
//! that needs their text assignment.

use super::{log_softmax, log_sum_exp, sharpen, DgcModel, NeighborGraphs, SoftAssignment, TrainConfig};
use crate::embedding::{Dataset, Modality};
use ndarray::Array2;
use std::collections::HashMap;

/// Per-term loss values for one batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub distillation: f64,
    pub confidence: f64,
    pub entropy: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub(crate) fn accumulate(&mut self, other: &LossBreakdown) {
        self.distillation += other.distillation;
        self.confidence += other.confidence;
        self.entropy += other.entropy;
        self.total += other.total;
    }

    pub fn is_finite(&self) -> bool {
        self.distillation.is_finite() && self.confidence.is_finite() && self.entropy.is_finite() && self.total.is_finite()
    }
}

/// Gradients with the same shapes as the two heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub image: Array2<f64>,
    pub text: Array2<f64>,
}

/// Sharpened neighbor assignments, frozen for one optimization step.
#[derive(Debug, Clone, Default)]
pub struct Teachers {
    image: HashMap<usize, Vec<f64>>,
    text: HashMap<usize, Vec<f64>>,
}

/// Computes the sharpened targets every neighbor of `batch` will supply.
pub fn teacher_targets(
    batch: &[usize],
    model: &DgcModel,
    dataset: &Dataset,
    graphs: &NeighborGraphs,
    tau: f64,
) -> Teachers {
    let records = dataset.records();
    let mut teachers = Teachers::default();
    for &i in batch {
        if records[i].has_text() {
            for &j in graphs.image.neighbors(i) {
                teachers.image.entry(j).or_insert_with(|| {
                    let p = super::softmax(&model.logits(Modality::Image, &records[j].image_embedding));
                    sharpen(&SoftAssignment(p), tau).into_inner()
                });
            }
        }
        for &j in graphs.text.neighbors(i) {
            teachers.text.entry(j).or_insert_with(|| {
                let q = super::softmax(&model.logits(Modality::Text, &records[j].text_embedding));
                sharpen(&SoftAssignment(q), tau).into_inner()
            });
        }
    }
    teachers
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

/// `H(target, softmax)` given the student's log-probabilities.
fn cross_entropy(target: &[f64], log_student: &[f64]) -> f64 {
    -target.iter().zip(log_student).map(|(a, l)| a * l).sum::<f64>()
}

/// Accumulates `d(loss)/d(logits) * embedding^T` into a head gradient.
fn add_outer(grad: &mut Array2<f64>, dz: &[f64], x: &[f64]) {
    for (k, &g) in dz.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let mut row = grad.row_mut(k);
        for (w, &xj) in row.iter_mut().zip(x) {
            *w += g * xj;
        }
    }
}

struct HeadState {
    log_p: Vec<f64>,
    p: Vec<f64>,
}

impl HeadState {
    fn new(model: &DgcModel, modality: Modality, x: &[f64]) -> Self {
        let log_p = log_softmax(&model.logits(modality, x));
        let p = log_p.iter().map(|l| l.exp()).collect();
        HeadState { log_p, p }
    }
}

/// Loss terms (and optionally gradients) for a batch with teachers held fixed.
///
/// Batch members are visited in the order given; all sums are accumulated
/// sequentially, so results are reproducible bit for bit.
pub fn loss_and_grad_with_teachers(
    batch: &[usize],
    model: &DgcModel,
    dataset: &Dataset,
    graphs: &NeighborGraphs,
    teachers: &Teachers,
    alpha: f64,
    with_grad: bool,
) -> (LossBreakdown, Option<Gradients>) {
    let records = dataset.records();
    let k = model.clusters();
    let mut out = LossBreakdown::default();

    let image: Vec<HeadState> = batch
        .iter()
        .map(|&i| HeadState::new(model, Modality::Image, &records[i].image_embedding))
        .collect();
    let text: Vec<Option<HeadState>> = batch
        .iter()
        .map(|&i| records[i].has_text().then(|| HeadState::new(model, Modality::Text, &records[i].text_embedding)))
        .collect();

    let mut dz_img = vec![vec![0.0; k]; batch.len()];
    let mut dz_txt = vec![vec![0.0; k]; batch.len()];

    for (b, &i) in batch.iter().enumerate() {
        let p = &image[b];
        let Some(q) = &text[b] else { continue };

        // Image neighbors teach the text head.
        for j in graphs.image.neighbors(i) {
            let target = &teachers.image[j];
            out.distillation += cross_entropy(target, &q.log_p);
            let mass: f64 = target.iter().sum();
            for c in 0..k {
                dz_txt[b][c] += q.p[c] * mass - target[c];
            }
        }
        // Text neighbors teach the image head.
        for j in graphs.text.neighbors(i) {
            let target = &teachers.text[j];
            out.distillation += cross_entropy(target, &p.log_p);
            let mass: f64 = target.iter().sum();
            for c in 0..k {
                dz_img[b][c] += p.p[c] * mass - target[c];
            }
        }

        // Confidence: -ln(p . q), evaluated in log space.
        let joint: Vec<f64> = p.log_p.iter().zip(&q.log_p).map(|(a, b)| a + b).collect();
        let log_agree = log_sum_exp(&joint);
        out.confidence -= log_agree;
        for c in 0..k {
            // p_c q_c / (p . q)
            let share = (joint[c] - log_agree).exp();
            dz_img[b][c] += p.p[c] - share;
            dz_txt[b][c] += q.p[c] - share;
        }
    }

    // Marginal entropy of each head over the batch members it covers.
    let marginal_term = |states: Vec<&HeadState>, slots: Vec<usize>, dz: &mut Vec<Vec<f64>>| -> f64 {
        if states.is_empty() {
            return 0.0;
        }
        let n = states.len() as f64;
        let mut mean = vec![0.0; k];
        for s in &states {
            for (m, &p) in mean.iter_mut().zip(&s.p) {
                *m += p;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let log_mean: Vec<f64> = mean.iter().map(|&m| if m > 0.0 { m.ln() } else { 0.0 }).collect();
        // d(-alpha H(mean))/dz_ic = (alpha/n) p_ic (ln mean_c - sum_m p_im ln mean_m)
        for (s, &b) in states.iter().zip(&slots) {
            let centered: f64 = s.p.iter().zip(&log_mean).map(|(p, l)| p * l).sum();
            for c in 0..k {
                dz[b][c] += alpha / n * s.p[c] * (log_mean[c] - centered);
            }
        }
        entropy(&mean)
    };
    let img_states: Vec<&HeadState> = image.iter().collect();
    let img_slots: Vec<usize> = (0..batch.len()).collect();
    let ent_img = marginal_term(img_states, img_slots, &mut dz_img);
    let (txt_slots, txt_states): (Vec<usize>, Vec<&HeadState>) =
        text.iter().enumerate().filter_map(|(b, s)| s.as_ref().map(|s| (b, s))).unzip();
    let ent_txt = marginal_term(txt_states, txt_slots, &mut dz_txt);
    out.entropy = ent_img + ent_txt;
    out.total = out.distillation + out.confidence - alpha * out.entropy;

    if !with_grad {
        return (out, None);
    }
    let mut grads = Gradients {
        image: Array2::zeros((k, model.dim())),
        text: Array2::zeros((k, model.dim())),
    };
    for (b, &i) in batch.iter().enumerate() {
        add_outer(&mut grads.image, &dz_img[b], &records[i].image_embedding);
        if text[b].is_some() {
            add_outer(&mut grads.text, &dz_txt[b], &records[i].text_embedding);
        }
    }
    (out, Some(grads))
}

fn breakdown(batch: &[usize], model: &DgcModel, dataset: &Dataset, graphs: &NeighborGraphs, tau: f64, alpha: f64) -> LossBreakdown {
    let teachers = teacher_targets(batch, model, dataset, graphs, tau);
    loss_and_grad_with_teachers(batch, model, dataset, graphs, &teachers, alpha, false).0
}

/// Cross-modal neighbor distillation term.
pub fn loss_distillation(batch: &[usize], model: &DgcModel, dataset: &Dataset, graphs: &NeighborGraphs, tau: f64) -> f64 {
    breakdown(batch, model, dataset, graphs, tau, 0.0).distillation
}

/// Confidence term `-sum ln(p_i . q_i)` over batch records that have a prompt.
pub fn loss_confidence(batch: &[usize], model: &DgcModel, dataset: &Dataset) -> f64 {
    let empty = empty_graphs(dataset);
    breakdown(batch, model, dataset, &empty, 1.0, 0.0).confidence
}

/// Marginal entropy term `H(p_bar) + H(q_bar)`.
pub fn loss_entropy(batch: &[usize], model: &DgcModel, dataset: &Dataset) -> f64 {
    let empty = empty_graphs(dataset);
    breakdown(batch, model, dataset, &empty, 1.0, 0.0).entropy
}

pub fn loss_total(batch: &[usize], model: &DgcModel, dataset: &Dataset, graphs: &NeighborGraphs, config: &TrainConfig) -> LossBreakdown {
    breakdown(batch, model, dataset, graphs, config.tau, config.alpha)
}

/// Exact gradient of the total loss, with sharpened targets held constant.
pub fn grad_total(batch: &[usize], model: &DgcModel, dataset: &Dataset, graphs: &NeighborGraphs, config: &TrainConfig) -> Gradients {
    let teachers = teacher_targets(batch, model, dataset, graphs, config.tau);
    loss_and_grad_with_teachers(batch, model, dataset, graphs, &teachers, config.alpha, true)
        .1
        .expect("gradient requested")
}

fn empty_graphs(dataset: &Dataset) -> NeighborGraphs {
    use super::NeighborGraph;
    let n = dataset.len();
    NeighborGraphs {
        image: NeighborGraph::from_lists(vec![Vec::new(); n], Modality::Image),
        text: NeighborGraph::from_lists(vec![Vec::new(); n], Modality::Text),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgc::{knn_graph, DgcModel};
    use crate::embedding::{normalize, ArtworkRecord, Source};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut unit = || normalize(&(0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>()).unwrap();
        let records = (0..n)
            .map(|i| ArtworkRecord {
                id: format!("r{i}"),
                artist_id: String::new(),
                source: Source::Ai,
                prompt: "p".into(),
                image_embedding: unit(),
                text_embedding: unit(),
            })
            .collect();
        Dataset::new(records).unwrap()
    }

    fn all(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn uniform_state_closed_forms() {
        let (n, k, nn) = (12, 10, 10);
        let ds = random_dataset(n, 6, 1);
        let graphs = NeighborGraphs::build(&ds, nn).unwrap();
        let model = DgcModel::zeros(k, 6);
        let ln_k = (k as f64).ln();
        let dis = loss_distillation(&all(n), &model, &ds, &graphs, 0.1);
        assert!((dis - n as f64 * 2.0 * nn as f64 * ln_k).abs() < 1e-9);
        assert!((loss_confidence(&all(n), &model, &ds) - n as f64 * ln_k).abs() < 1e-9);
        assert!((loss_entropy(&all(n), &model, &ds) - 2.0 * ln_k).abs() < 1e-9);
        assert!((2.0 * 10f64.ln() - 4.60517).abs() < 1e-5);
    }

    #[test]
    fn uniform_total_composes() {
        let ds = random_dataset(11, 4, 2);
        let graphs = NeighborGraphs::build(&ds, 10).unwrap();
        let model = DgcModel::zeros(10, 4);
        let batch = [0, 3, 5, 9];
        let cfg = TrainConfig { alpha: 3.0, ..TrainConfig::default() };
        let l = loss_total(&batch, &model, &ds, &graphs, &cfg);
        let ln10 = 10f64.ln();
        let expected = 4.0 * 2.0 * 10.0 * ln10 + 4.0 * ln10 - 3.0 * 2.0 * ln10;
        assert!((l.total - expected).abs() < 1e-9, "{} vs {expected}", l.total);
    }

    #[test]
    fn one_hot_agreement_has_zero_confidence_loss() {
        let ds = random_dataset(3, 2, 3);
        // Huge logits toward cluster 0 for every input direction.
        let w = ndarray::array![[0.0, 0.0], [-1e4, 0.0]];
        let mut records = ds.into_records();
        for r in &mut records {
            r.image_embedding = vec![1.0, 0.0];
            r.text_embedding = vec![1.0, 0.0];
        }
        let ds = Dataset::new(records).unwrap();
        let model = DgcModel::new(w.clone(), w).unwrap();
        assert_eq!(loss_confidence(&all(3), &model, &ds), 0.0);
        assert!(loss_entropy(&all(3), &model, &ds).abs() < 1e-12);
    }

    #[test]
    fn direct_oracles_on_random_state() {
        let ds = random_dataset(7, 5, 4);
        let graphs = NeighborGraphs::build(&ds, 2).unwrap();
        let model = DgcModel::seeded(3, 5, 9);
        let tau = 0.1;
        let batch = [6, 1, 2, 4];
        let recs = ds.records();
        let p = |i: usize| super::super::softmax(&model.logits(Modality::Image, &recs[i].image_embedding));
        let q = |i: usize| super::super::softmax(&model.logits(Modality::Text, &recs[i].text_embedding));
        let sharp = |v: Vec<f64>| super::super::softmax(&v.iter().map(|x| x / tau).collect::<Vec<_>>());
        let h = |a: &[f64], b: &[f64]| -a.iter().zip(b).map(|(x, y)| x * y.ln()).sum::<f64>();

        let mut dis = 0.0;
        let mut con = 0.0;
        for &i in &batch {
            for &j in graphs.image.neighbors(i) {
                dis += h(&sharp(p(j)), &q(i));
            }
            for &j in graphs.text.neighbors(i) {
                dis += h(&sharp(q(j)), &p(i));
            }
            con -= p(i).iter().zip(q(i)).map(|(a, b)| a * b).sum::<f64>().ln();
        }
        let mut pbar = [0.0; 3];
        let mut qbar = vec![0.0; 3];
        for &i in &batch {
            for c in 0..3 {
                pbar[c] += p(i)[c] / 4.0;
                qbar[c] += q(i)[c] / 4.0;
            }
        }
        let ent = -pbar.iter().chain(&qbar).map(|x| x * x.ln()).sum::<f64>();

        assert!((loss_distillation(&batch, &model, &ds, &graphs, tau) - dis).abs() < 1e-12);
        assert!((loss_confidence(&batch, &model, &ds) - con).abs() < 1e-12);
        assert!((loss_entropy(&batch, &model, &ds) - ent).abs() < 1e-12);
        let cfg = TrainConfig { alpha: 3.0, tau, ..TrainConfig::default() };
        let total = loss_total(&batch, &model, &ds, &graphs, &cfg);
        assert!((total.total - (dis + con - 3.0 * ent)).abs() < 1e-11);
    }

    #[test]
    fn infinite_temperature_gives_uniform_targets() {
        let ds = random_dataset(6, 4, 5);
        let graphs = NeighborGraphs::build(&ds, 2).unwrap();
        let model = DgcModel::seeded(4, 4, 1);
        let recs = ds.records();
        // Limit oracle: every target is uniform, so each term is H(u, student) = -mean(ln student).
        let mut expected = 0.0;
        for i in 0..6 {
            let lq = log_softmax(&model.logits(Modality::Text, &recs[i].text_embedding));
            let lp = log_softmax(&model.logits(Modality::Image, &recs[i].image_embedding));
            expected += 2.0 * -lq.iter().sum::<f64>() / 4.0;
            expected += 2.0 * -lp.iter().sum::<f64>() / 4.0;
        }
        let got = loss_distillation(&all(6), &model, &ds, &graphs, 1e12);
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn zero_model_entropy_gradient_vanishes() {
        let ds = random_dataset(5, 3, 6);
        let graphs = NeighborGraphs::build(&ds, 2).unwrap();
        let model = DgcModel::zeros(3, 3);
        let teachers = teacher_targets(&all(5), &model, &ds, &graphs, 0.1);
        let (_, g0) = loss_and_grad_with_teachers(&all(5), &model, &ds, &graphs, &teachers, 0.0, true);
        let (_, g3) = loss_and_grad_with_teachers(&all(5), &model, &ds, &graphs, &teachers, 3.0, true);
        let (g0, g3) = (g0.unwrap(), g3.unwrap());
        assert!((&g3.image - &g0.image).iter().all(|x| x.abs() < 1e-15));
        assert!((&g3.text - &g0.text).iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn gradient_is_linear_in_alpha() {
        let ds = random_dataset(8, 6, 7);
        let graphs = NeighborGraphs::build(&ds, 2).unwrap();
        let model = DgcModel::seeded(3, 6, 2);
        let g = |alpha: f64| grad_total(&all(8), &model, &ds, &graphs, &TrainConfig { alpha, ..TrainConfig::default() });
        let (g0, g3, g6) = (g(0.0), g(3.0), g(6.0));
        for (a, (b, c)) in g6.image.iter().zip(g3.image.iter().zip(g0.image.iter())) {
            assert!((a - c - 2.0 * (b - c)).abs() < 1e-12);
        }
        for (a, (b, c)) in g6.text.iter().zip(g3.text.iter().zip(g0.text.iter())) {
            assert!((a - c - 2.0 * (b - c)).abs() < 1e-12);
        }
    }

    #[test]
    fn records_without_prompts_only_feed_image_marginal() {
        let mut records = random_dataset(6, 4, 8).into_records();
        records[2].prompt.clear();
        let ds = Dataset::new(records).unwrap();
        let graphs = NeighborGraphs::build(&ds, 2).unwrap();
        assert!(knn_graph(&ds, Modality::Text, 2).unwrap().neighbors(2).is_empty());
        let model = DgcModel::seeded(3, 4, 4);
        let g = grad_total(&[2], &model, &ds, &graphs, &TrainConfig::default());
        // Only the image marginal sees record 2; a lone record's marginal
        // equals its own assignment, so the text head gets no gradient.
        assert!(g.text.iter().all(|&x| x == 0.0));
        assert_eq!(loss_confidence(&[2], &model, &ds), 0.0);
    }

    #[test]
    fn losses_are_nonnegative_and_entropy_bounded() {
        for seed in 0..20 {
            let ds = random_dataset(9, 5, 100 + seed);
            let graphs = NeighborGraphs::build(&ds, 3).unwrap();
            let model = DgcModel::seeded(4, 5, seed);
            let l = loss_total(&all(9), &model, &ds, &graphs, &TrainConfig::default());
            assert!(l.distillation >= 0.0 && l.confidence >= 0.0 && l.entropy >= 0.0);
            assert!(l.entropy <= 2.0 * 4f64.ln() + 1e-12);
        }
    }

    #[test]
    fn permuting_clusters_preserves_losses() {
        let ds = random_dataset(10, 5, 11);
        let graphs = NeighborGraphs::build(&ds, 3).unwrap();
        let model = DgcModel::seeded(4, 5, 12);
        let permuted = model.permute_clusters(&[3, 1, 0, 2]);
        let cfg = TrainConfig::default();
        let a = loss_total(&all(10), &model, &ds, &graphs, &cfg);
        let b = loss_total(&all(10), &permuted, &ds, &graphs, &cfg);
        assert!((a.distillation - b.distillation).abs() < 1e-10);
        assert!((a.confidence - b.confidence).abs() < 1e-10);
        assert!((a.entropy - b.entropy).abs() < 1e-12);
    }
}
