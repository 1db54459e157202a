//! Hand-built corpus, model and candidate sets with known verdicts.
#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use styleguard::corpus::{CorpusStore, OwnerKind};
use styleguard::dgc::DgcModel;
use styleguard::embedding::{normalize, ArtworkRecord, Source};

pub const DIM: usize = 8;

pub fn axis(k: usize) -> Vec<f64> {
    let mut v = vec![0.0; DIM];
    v[k] = 1.0;
    v
}

pub fn jittered(rng: &mut ChaCha8Rng, center: &[f64], sigma: f64) -> Vec<f64> {
    let v: Vec<f64> = center.iter().map(|c| c + sigma * rng.random_range(-1.0..1.0)).collect();
    normalize(&v).unwrap()
}

pub fn record(id: &str, artist: &str, source: Source, image: Vec<f64>, text: Vec<f64>) -> ArtworkRecord {
    ArtworkRecord {
        id: id.into(),
        artist_id: artist.into(),
        source,
        prompt: format!("work {id} in the manner of {artist}"),
        image_embedding: image,
        text_embedding: text,
    }
}

/// Three human artists, four works each, near axes 0, 1 and 2.
pub fn human_records() -> Vec<Vec<ArtworkRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    (0..3)
        .map(|k| {
            (0..4)
                .map(|i| {
                    let img = jittered(&mut rng, &axis(k), 0.05);
                    let txt = jittered(&mut rng, &axis(k), 0.05);
                    record(&format!("h{k}-{i}"), &format!("artist-{k}"), Source::Human, img, txt)
                })
                .collect()
        })
        .collect()
}

pub fn build_corpus(dir: &Path) -> CorpusStore {
    let mut store = CorpusStore::create(dir, DIM).unwrap();
    for (k, recs) in human_records().iter().enumerate() {
        store.add_cluster(recs, OwnerKind::Human, &format!("artist-{k}"), "fixture").unwrap();
    }
    store
}

/// Both heads pick the largest coordinate: cluster k owns axis k.
pub fn axis_model() -> DgcModel {
    let w = Array2::from_diag(&ndarray::Array1::from_elem(DIM, 10.0));
    DgcModel::new(w.clone(), w).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    Protected,
    FailConsistency,
    FailUniqueness,
    FailAccuracy,
}

pub fn candidates(case: Case) -> Vec<ArtworkRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let ai = |i: usize, img: Vec<f64>, txt: Vec<f64>| record(&format!("a{i}"), "novel", Source::Ai, img, txt);
    match case {
        Case::Protected => (0..6)
            .map(|i| {
                let img = jittered(&mut rng, &axis(5), 0.05);
                let txt = jittered(&mut rng, &axis(5), 0.05);
                ai(i, img, txt)
            })
            .collect(),
        Case::FailConsistency => (4..8).map(|k| ai(k, axis(k), axis(k))).collect(),
        Case::FailUniqueness => (0..5)
            .map(|i| {
                let img = jittered(&mut rng, &axis(0), 0.02);
                let txt = jittered(&mut rng, &axis(0), 0.02);
                ai(i, img, txt)
            })
            .collect(),
        // Images agree on one novel style; prompts scatter over the human styles.
        Case::FailAccuracy => (0..12)
            .map(|i| {
                let img = jittered(&mut rng, &axis(5), 0.05);
                let txt = jittered(&mut rng, &axis(i % 3), 0.05);
                ai(i, img, txt)
            })
            .collect(),
    }
}
