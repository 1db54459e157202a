//! Versioned JSON checkpoints for trained heads.

use super::{DgcModel, TrainConfig};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_FORMAT: &str = "styleguard-dgc";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint {format} v{version}")]
    Unsupported { format: String, version: u32 },
    #[error("inconsistent checkpoint: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub clusters: usize,
    pub seed: u64,
    pub config: TrainConfig,
    pub w_img: Vec<Vec<f64>>,
    pub w_txt: Vec<Vec<f64>>,
}

fn rows(w: &Array2<f64>) -> Vec<Vec<f64>> {
    w.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matrix(rows: &[Vec<f64>], dim: usize) -> Result<Array2<f64>, CheckpointError> {
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(CheckpointError::Invalid("row width differs from dim".into()));
    }
    Array2::from_shape_vec((rows.len(), dim), flat).map_err(|e| CheckpointError::Invalid(e.to_string()))
}

impl Checkpoint {
    pub fn from_model(model: &DgcModel, config: &TrainConfig) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            dim: model.dim(),
            clusters: model.clusters(),
            seed: config.seed,
            config: config.clone(),
            w_img: rows(&model.w_img),
            w_txt: rows(&model.w_txt),
        }
    }

    pub fn model(&self) -> Result<DgcModel, CheckpointError> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Unsupported { format: self.format.clone(), version: self.version });
        }
        if self.w_img.len() != self.clusters || self.w_txt.len() != self.clusters {
            return Err(CheckpointError::Invalid("row count differs from clusters".into()));
        }
        DgcModel::new(matrix(&self.w_img, self.dim)?, matrix(&self.w_txt, self.dim)?)
            .map_err(|e| CheckpointError::Invalid(e.to_string()))
    }
}

pub fn write_checkpoint(path: &Path, model: &DgcModel, config: &TrainConfig) -> Result<(), CheckpointError> {
    let text = serde_json::to_string_pretty(&Checkpoint::from_model(model, config))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(DgcModel, TrainConfig), CheckpointError> {
    let ckpt: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Ok((ckpt.model()?, ckpt.config))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = DgcModel::seeded(5, 7, 99);
        let cfg = TrainConfig { seed: 99, clusters: Some(5), ..TrainConfig::default() };
        write_checkpoint(&path, &model, &cfg).unwrap();
        let (back, back_cfg) = read_checkpoint(&path).unwrap();
        let bits = |m: &DgcModel| m.w_img.iter().chain(m.w_txt.iter()).map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&model), bits(&back));
        assert_eq!(cfg, back_cfg);
    }

    #[test]
    fn rejects_wrong_version() {
        let model = DgcModel::seeded(2, 2, 1);
        let mut ckpt = Checkpoint::from_model(&model, &TrainConfig::default());
        ckpt.version = 9;
        assert!(matches!(ckpt.model(), Err(CheckpointError::Unsupported { .. })));
    }
}
