//! Partition agreement metrics: NMI, ARI, AMI and Hungarian-matched accuracy.
//!
//! All information quantities use natural logarithms. NMI and AMI share one
//! normalizer, the arithmetic mean of the two partition entropies.

mod hungarian;

pub use hungarian::{hungarian, hungarian_cost};

use crate::partition::Partition;

/// Joint label counts of two partitions over the same records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    rows: usize,
    cols: usize,
    counts: Vec<usize>,
    row_sums: Vec<usize>,
    col_sums: Vec<usize>,
    total: usize,
}

impl ContingencyTable {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> usize {
        self.counts[i * self.cols + j]
    }

    pub fn row_sums(&self) -> &[usize] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[usize] {
        &self.col_sums
    }

    pub fn total(&self) -> usize {
        self.total
    }

    fn cells(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.rows).flat_map(move |i| (0..self.cols).map(move |j| (i, j, self.get(i, j))))
    }
}

/// # Panics
/// If the partitions cover different numbers of records.
pub fn contingency(pa: &Partition, pb: &Partition) -> ContingencyTable {
    assert_eq!(pa.len(), pb.len(), "partitions must label the same records");
    let (rows, cols) = (pa.num_clusters(), pb.num_clusters());
    let mut counts = vec![0usize; rows * cols];
    for (&a, &b) in pa.labels().iter().zip(pb.labels()) {
        counts[a * cols + b] += 1;
    }
    ContingencyTable {
        rows,
        cols,
        counts,
        row_sums: pa.sizes(),
        col_sums: pb.sizes(),
        total: pa.len(),
    }
}

fn entropy_of_counts(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Shannon entropy (nats) of a partition's cluster sizes.
pub fn partition_entropy(p: &Partition) -> f64 {
    entropy_of_counts(&p.sizes(), p.len())
}

pub fn mutual_information(table: &ContingencyTable) -> f64 {
    if table.total == 0 {
        return 0.0;
    }
    let n = table.total as f64;
    let mi: f64 = table
        .cells()
        .filter(|&(_, _, c)| c > 0)
        .map(|(i, j, c)| {
            let c = c as f64;
            let (a, b) = (table.row_sums[i] as f64, table.col_sums[j] as f64);
            c / n * (n * c / (a * b)).ln()
        })
        .sum();
    mi.max(0.0)
}

/// The one place the NMI/AMI normalizer is chosen.
fn normalizer(ha: f64, hb: f64) -> f64 {
    0.5 * (ha + hb)
}

const DEGENERATE: f64 = 1e-12;

fn degenerate_value(pa: &Partition, pb: &Partition) -> f64 {
    if pa.equivalent(pb) {
        1.0
    } else {
        0.0
    }
}

pub fn nmi(pa: &Partition, pb: &Partition) -> f64 {
    let table = contingency(pa, pb);
    let norm = normalizer(entropy_of_counts(&table.row_sums, table.total), entropy_of_counts(&table.col_sums, table.total));
    if norm <= DEGENERATE {
        return degenerate_value(pa, pb);
    }
    (mutual_information(&table) / norm).min(1.0)
}

fn choose2(k: usize) -> f64 {
    let k = k as f64;
    k * (k - 1.0) / 2.0
}

pub fn ari(pa: &Partition, pb: &Partition) -> f64 {
    let table = contingency(pa, pb);
    let index: f64 = table.counts.iter().map(|&c| choose2(c)).sum();
    let sum_a: f64 = table.row_sums.iter().map(|&c| choose2(c)).sum();
    let sum_b: f64 = table.col_sums.iter().map(|&c| choose2(c)).sum();
    let pairs = choose2(table.total);
    if pairs == 0.0 {
        return 1.0;
    }
    let expected = sum_a * sum_b / pairs;
    let max = 0.5 * (sum_a + sum_b);
    let denom = max - expected;
    if denom.abs() <= f64::EPSILON * pairs {
        return 1.0;
    }
    (index - expected) / denom
}

/// `ln(k!)` for k in `0..=n`.
fn log_factorials(n: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(n + 1);
    table.push(0.0);
    let mut acc = 0.0;
    for k in 1..=n {
        acc += (k as f64).ln();
        table.push(acc);
    }
    table
}

/// Expected mutual information of two labelings under random permutation
/// with both marginals held fixed (hypergeometric cell model), summed exactly
/// over every feasible cell count.
pub fn expected_mutual_information(table: &ContingencyTable) -> f64 {
    let n = table.total;
    if n == 0 {
        return 0.0;
    }
    let lf = log_factorials(n);
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in table.row_sums.iter().filter(|&&a| a > 0) {
        for &b in table.col_sums.iter().filter(|&&b| b > 0) {
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            let fixed = lf[a] + lf[b] + lf[n - a] + lf[n - b] - lf[n];
            for nij in lo..=hi {
                let x = nij as f64;
                let log_p = fixed - lf[nij] - lf[a - nij] - lf[b - nij] - lf[n + nij - a - b];
                emi += x / nf * (nf * x / (a as f64 * b as f64)).ln() * log_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information, `(MI - EMI) / (mean(H_a, H_b) - EMI)`.
pub fn ami(pa: &Partition, pb: &Partition) -> f64 {
    let table = contingency(pa, pb);
    let ha = entropy_of_counts(&table.row_sums, table.total);
    let hb = entropy_of_counts(&table.col_sums, table.total);
    let mi = mutual_information(&table);
    let emi = expected_mutual_information(&table);
    let denom = normalizer(ha, hb) - emi;
    if denom.abs() <= DEGENERATE {
        return degenerate_value(pa, pb);
    }
    ((mi - emi) / denom).min(1.0)
}

/// Best matched fraction over one-to-one label mappings.
pub fn clustering_accuracy(pred: &Partition, truth: &Partition) -> f64 {
    if pred.is_empty() {
        return 1.0;
    }
    let table = contingency(pred, truth);
    let size = table.rows.max(table.cols);
    let cost: Vec<Vec<f64>> = (0..size)
        .map(|i| {
            (0..size)
                .map(|j| if i < table.rows && j < table.cols { -(table.get(i, j) as f64) } else { 0.0 })
                .collect()
        })
        .collect();
    let perm = hungarian(&cost);
    let matched: usize = perm
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < table.rows && j < table.cols)
        .map(|(i, &j)| table.get(i, j))
        .sum();
    matched as f64 / pred.len() as f64
}
