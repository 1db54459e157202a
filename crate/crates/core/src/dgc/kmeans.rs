//! Lloyd's k-means, used as the single-modality baseline.

use crate::embedding::squared_euclidean;
use crate::partition::Partition;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = squared_euclidean(point, center);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Greedy farthest-point seeding from a random start, then Lloyd iterations
/// until assignments stop changing or `max_iter` is reached.
///
/// A cluster that empties keeps its previous center.
///
/// # Panics
/// If `k` is zero or exceeds the number of points.
pub fn kmeans_baseline(points: &[&[f64]], k: usize, seed: u64, max_iter: usize) -> Partition {
    let n = points.len();
    assert!(k >= 1 && k <= n, "need 1 <= k <= n (k = {k}, n = {n})");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].to_vec()];
    let mut min_dist: Vec<f64> = points.iter().map(|p| squared_euclidean(p, &centers[0])).collect();
    while centers.len() < k {
        let mut far = 0;
        for i in 1..n {
            if min_dist[i] > min_dist[far] {
                far = i;
            }
        }
        let center = points[far].to_vec();
        for (d, p) in min_dist.iter_mut().zip(points) {
            *d = d.min(squared_euclidean(p, &center));
        }
        centers.push(center);
    }

    let dim = points[0].len();
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..max_iter {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(*p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    Partition::new(labels, k).expect("labels are below k")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_equals_n_isolates_every_point() {
        let pts = [vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 5.0], vec![3.0, 3.0]];
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let p = kmeans_baseline(&refs, 4, 7, 300);
        let mut labels = p.labels().to_vec();
        labels.sort();
        assert_eq!(labels, vec![0, 1, 2, 3]);
    }

    #[test]
    fn separated_pairs_are_grouped() {
        let pts = [vec![0.0, 0.0], vec![10.0, 10.0], vec![0.1, 0.0], vec![10.0, 10.1]];
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        for seed in 0..10 {
            let p = kmeans_baseline(&refs, 2, seed, 300);
            assert_eq!(p.labels()[0], p.labels()[2]);
            assert_eq!(p.labels()[1], p.labels()[3]);
            assert_ne!(p.labels()[0], p.labels()[1]);
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let pts: Vec<Vec<f64>> = (0..30).map(|i| vec![(i * 7 % 11) as f64, (i * 3 % 5) as f64]).collect();
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        assert_eq!(kmeans_baseline(&refs, 3, 1, 300), kmeans_baseline(&refs, 3, 1, 300));
    }
}
