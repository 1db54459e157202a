use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::hash::Hash;

/// A hard cluster labeling: one label in `0..num_clusters` per record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<usize>,
    num_clusters: usize,
}

impl Partition {
    /// Fails if any label is out of range.
    pub fn new(labels: Vec<usize>, num_clusters: usize) -> Result<Self, String> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_clusters) {
            return Err(format!("label {bad} outside 0..{num_clusters}"));
        }
        Ok(Partition { labels, num_clusters })
    }

    /// Uses `max(label) + 1` clusters.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let num_clusters = labels.iter().max().map_or(0, |m| m + 1);
        Partition { labels, num_clusters }
    }

    /// Maps arbitrary hashable keys to dense labels in first-seen order.
    pub fn from_keys<K: Hash + Eq, I: IntoIterator<Item = K>>(keys: I) -> Self {
        let mut index = HashMap::new();
        let labels = keys
            .into_iter()
            .map(|k| {
                let next = index.len();
                *index.entry(k).or_insert(next)
            })
            .collect();
        Partition { labels, num_clusters: index.len() }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of records per label.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clusters];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Same labeling up to a bijective renaming of the nonempty clusters.
    pub fn equivalent(&self, other: &Partition) -> bool {
        if self.len() != other.len() {
            return false;
        }
        let mut fwd = HashMap::new();
        let mut back = HashMap::new();
        self.labels.iter().zip(&other.labels).all(|(a, b)| {
            *fwd.entry(*a).or_insert(*b) == *b && *back.entry(*b).or_insert(*a) == *a
        })
    }

    pub fn subset(&self, indices: &[usize]) -> Partition {
        Partition {
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_clusters: self.num_clusters,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_are_dense_in_first_seen_order() {
        let p = Partition::from_keys(["b", "a", "b", "c"]);
        assert_eq!(p.labels(), &[0, 1, 0, 2]);
        assert_eq!(p.num_clusters(), 3);
    }

    #[test]
    fn equivalence_is_bijective() {
        let a = Partition::from_labels(vec![0, 0, 1, 2]);
        assert!(a.equivalent(&Partition::from_labels(vec![2, 2, 0, 1])));
        assert!(!a.equivalent(&Partition::from_labels(vec![0, 0, 1, 1])));
        assert!(!Partition::from_labels(vec![0, 0, 1, 1]).equivalent(&a));
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(Partition::new(vec![0, 3], 3).is_err());
    }
}
