use super::DgcError;
use crate::embedding::{dot, Dataset, Modality};

/// Per-record nearest neighbors in one modality's frozen embedding space.
///
/// Text graphs only connect records that carry a prompt; records without one
/// get an empty neighbor list and never appear as text neighbors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    neighbors: Vec<Vec<usize>>,
    modality: Modality,
}

impl NeighborGraph {
    pub(crate) fn from_lists(neighbors: Vec<Vec<usize>>, modality: Modality) -> Self {
        NeighborGraph { neighbors, modality }
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

/// The image and text graphs over one dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraphs {
    pub image: NeighborGraph,
    pub text: NeighborGraph,
}

impl NeighborGraphs {
    pub fn build(dataset: &Dataset, k: usize) -> Result<Self, DgcError> {
        Ok(NeighborGraphs {
            image: knn_graph(dataset, Modality::Image, k)?,
            text: knn_graph(dataset, Modality::Text, k)?,
        })
    }
}

/// Exhaustive inner-product k-NN. Self is excluded and ties go to the lower index.
pub fn knn_graph(dataset: &Dataset, modality: Modality, k: usize) -> Result<NeighborGraph, DgcError> {
    let n = dataset.len();
    if n < 2 {
        return Err(DgcError::Graph(format!("need at least 2 records, have {n}")));
    }
    let records = dataset.records();
    let eligible: Vec<usize> = match modality {
        Modality::Image => (0..n).collect(),
        Modality::Text => (0..n).filter(|&i| records[i].has_text()).collect(),
    };
    let mut neighbors = vec![Vec::new(); n];
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(eligible.len());
    for &i in &eligible {
        let query = records[i].embedding(modality);
        scored.clear();
        scored.extend(
            eligible
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (dot(query, records[j].embedding(modality)), j)),
        );
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        neighbors[i] = scored.iter().take(k).map(|&(_, j)| j).collect();
    }
    Ok(NeighborGraph { neighbors, modality })
}
