use super::loss::{loss_and_grad_with_teachers, teacher_targets, LossBreakdown};
use super::optim::{cosine_annealing, AdamW};
use super::{softmax, DgcError, DgcModel, NeighborGraphs, TrainConfig};
use crate::embedding::{Dataset, Modality};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Loss values after an epoch. Epoch 0 is the untrained model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub l_dis: f64,
    pub l_con: f64,
    pub l_ent: f64,
    pub l_total: f64,
    /// Learning rate of the epoch's last step (the base rate for epoch 0).
    pub lr: f64,
}

pub type TrainHistory = Vec<HistoryRow>;

/// Full-dataset loss, summed over fixed index-order batches so that epochs
/// are comparable regardless of shuffling.
fn evaluate(model: &DgcModel, dataset: &Dataset, graphs: &NeighborGraphs, config: &TrainConfig) -> LossBreakdown {
    let order: Vec<usize> = (0..dataset.len()).collect();
    let mut total = LossBreakdown::default();
    for batch in order.chunks(config.batch_size) {
        let teachers = teacher_targets(batch, model, dataset, graphs, config.tau);
        let (l, _) = loss_and_grad_with_teachers(batch, model, dataset, graphs, &teachers, config.alpha, false);
        total.accumulate(&l);
    }
    total
}

fn row(epoch: usize, l: &LossBreakdown, lr: f64) -> HistoryRow {
    HistoryRow {
        epoch,
        l_dis: l.distillation,
        l_con: l.confidence,
        l_ent: l.entropy,
        l_total: l.total,
        lr,
    }
}

/// Trains both heads from a seeded uniform initialization.
///
/// Neighbor graphs are built once from the frozen embeddings. Each epoch
/// shuffles the record order with the seeded generator and takes one AdamW
/// step per batch; the learning rate follows a cosine schedule to zero over
/// all steps.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<(DgcModel, TrainHistory), DgcError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(DgcError::EmptyDataset);
    }
    let clusters = config.resolve_clusters(dataset);
    let graphs = NeighborGraphs::build(dataset, config.neighbors)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = DgcModel::init_uniform(clusters, dataset.dim(), &mut rng);

    let shape = (clusters, dataset.dim());
    let new_opt = || AdamW::new(shape, config.beta1, config.beta2, config.eps, config.weight_decay);
    let (mut opt_img, mut opt_txt) = (new_opt(), new_opt());

    let n = dataset.len();
    let batches_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = batches_per_epoch * config.epochs;

    let mut history = vec![row(0, &evaluate(&model, dataset, &graphs, config), config.learning_rate)];
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut lr = config.learning_rate;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let teachers = teacher_targets(batch, &model, dataset, &graphs, config.tau);
            let (loss, grads) =
                loss_and_grad_with_teachers(batch, &model, dataset, &graphs, &teachers, config.alpha, true);
            if !loss.is_finite() {
                return Err(DgcError::TrainingDiverged { epoch, batch: b });
            }
            let grads = grads.expect("gradient requested");
            lr = cosine_annealing(config.learning_rate, step, total_steps);
            opt_img.step(&mut model.w_img, &grads.image, lr);
            opt_txt.step(&mut model.w_txt, &grads.text, lr);
            step += 1;
        }
        let l = evaluate(&model, dataset, &graphs, config);
        if !l.is_finite() {
            return Err(DgcError::TrainingDiverged { epoch, batch: batches_per_epoch });
        }
        history.push(row(epoch, &l, lr));
    }
    Ok((model, history))
}

/// Mean soft assignment of one head over the whole dataset.
pub fn marginal_assignment(model: &DgcModel, dataset: &Dataset, modality: Modality) -> Vec<f64> {
    let mut mean = vec![0.0; model.clusters()];
    let mut count = 0usize;
    for r in dataset.records() {
        if modality == Modality::Text && !r.has_text() {
            continue;
        }
        for (m, p) in mean.iter_mut().zip(softmax(&model.logits(modality, r.embedding(modality)))) {
            *m += p;
        }
        count += 1;
    }
    if count > 0 {
        mean.iter_mut().for_each(|m| *m /= count as f64);
    }
    mean
}

/// `epoch,l_dis,l_con,l_ent,l_total,lr`
pub fn write_history_csv<W: Write>(mut w: W, history: &[HistoryRow]) -> std::io::Result<()> {
    writeln!(w, "epoch,l_dis,l_con,l_ent,l_total,lr")?;
    for r in history {
        writeln!(w, "{},{},{},{},{},{}", r.epoch, r.l_dis, r.l_con, r.l_ent, r.l_total, r.lr)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{normalize, ArtworkRecord, Source};
    use rand::Rng;

    fn blobs(per: usize, styles: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut unit = |scale: f64, base: Option<&[f64]>| {
            let v: Vec<f64> = (0..d)
                .map(|j| base.map_or(0.0, |b| b[j]) + scale * rng.random_range(-1.0..1.0))
                .collect();
            normalize(&v).unwrap()
        };
        let centers: Vec<Vec<f64>> = (0..styles).map(|_| unit(1.0, None)).collect();
        let text_centers: Vec<Vec<f64>> = (0..styles).map(|_| unit(1.0, None)).collect();
        let mut records = Vec::new();
        for s in 0..styles {
            for i in 0..per {
                records.push(ArtworkRecord {
                    id: format!("s{s}-{i}"),
                    artist_id: format!("artist{s}"),
                    source: Source::Ai,
                    prompt: "x".into(),
                    image_embedding: unit(0.1, Some(&centers[s])),
                    text_embedding: unit(0.1, Some(&text_centers[s])),
                });
            }
        }
        Dataset::new(records).unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig { neighbors: 3, epochs: 3, batch_size: 8, learning_rate: 1e-2, seed: 4, ..TrainConfig::default() }
    }

    #[test]
    fn same_seed_gives_identical_history_and_weights() {
        let ds = blobs(10, 3, 6, 1);
        let (m1, h1) = train(&ds, &small_config()).unwrap();
        let (m2, h2) = train(&ds, &small_config()).unwrap();
        assert_eq!(h1.len(), 4);
        let bits = |h: &TrainHistory| h.iter().map(|r| (r.l_total.to_bits(), r.lr.to_bits())).collect::<Vec<_>>();
        assert_eq!(bits(&h1), bits(&h2));
        assert_eq!(m1, m2);
    }

    #[test]
    fn loss_decreases_on_blobs() {
        let ds = blobs(15, 3, 8, 2);
        let (_, h) = train(&ds, &small_config()).unwrap();
        assert!(h.last().unwrap().l_total < h[0].l_total, "{h:?}");
    }

    #[test]
    fn clusters_default_to_artist_count() {
        let ds = blobs(4, 3, 4, 3);
        let (m, _) = train(&ds, &TrainConfig { epochs: 1, neighbors: 2, ..TrainConfig::default() }).unwrap();
        assert_eq!(m.clusters(), 3);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(matches!(train(&Dataset::default(), &TrainConfig::default()), Err(DgcError::EmptyDataset)));
    }

    #[test]
    fn history_csv_header() {
        let mut buf = Vec::new();
        write_history_csv(&mut buf, &[HistoryRow { epoch: 0, l_dis: 1.0, l_con: 2.0, l_ent: 0.5, l_total: 1.5, lr: 1e-4 }])
            .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,l_dis,l_con,l_ent,l_total,lr\n0,1,2,0.5,1.5,0.0001\n");
    }
}
