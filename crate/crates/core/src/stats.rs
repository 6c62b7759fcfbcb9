//! Analysis layer: pairwise distances, average-linkage clustering, flat
//! cluster extraction, Gaussian KDE, min-max normalization and the
//! per-augmentation aggregate table.
//!
//! The distance and clustering conventions follow SciPy's: condensed
//! vectors are in `(0,1), (0,2), ..., (n-2,n-1)` order, linkage rows are
//! `(cluster_a, cluster_b, distance, size)` with merged clusters numbered
//! from `n`, and flat cluster labels are 1-based.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::AugmentationId;
use crate::metrics::{cosine_similarity, Embedding, Metric, MetricError, MetricRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least 2 observations, got {0}")]
    TooFewObservations(usize),
    #[error("observation {index} has dimension {found}, expected {expected}")]
    DimMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("condensed vector of length {0} does not correspond to any n")]
    BadCondensedLength(usize),
    #[error("distance {value} at position {index} is negative or non-finite")]
    InvalidDistance { index: usize, value: f64 },
    #[error("matrix is not square")]
    NotSquare,
    #[error("matrix is not symmetric at ({i}, {j})")]
    NotSymmetric { i: usize, j: usize },
    #[error("diagonal entry {0} is nonzero")]
    NonzeroDiagonal(usize),
    #[error("invalid linkage matrix: {0}")]
    InvalidLinkage(String),
    #[error("samples have zero variance")]
    DegenerateSamples,
    #[error("no input values")]
    EmptyInput,
    #[error("missing data for {augmentation}: {detail}")]
    MissingAugmentationData {
        augmentation: AugmentationId,
        detail: String,
    },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub type Result<T> = std::result::Result<T, StatsError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    Euclidean,
    /// `1 - cosine_similarity`.
    Cosine,
}

/// Upper triangle of a distance matrix in row-major pair order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensedDistances {
    n: usize,
    values: Vec<f64>,
}

/// Number of observations whose condensed vector has `len` entries.
pub fn observations_for_len(len: usize) -> Option<usize> {
    let n = ((1.0 + (1.0 + 8.0 * len as f64).sqrt()) / 2.0).round() as usize;
    (n >= 2 && n * (n - 1) / 2 == len).then_some(n)
}

impl CondensedDistances {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let n = observations_for_len(values.len()).ok_or(StatsError::BadCondensedLength(values.len()))?;
        if let Some(index) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(StatsError::InvalidDistance {
                index,
                value: values[index],
            });
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        debug_assert!(i != j && j < self.n);
        self.n * i - i * (i + 1) / 2 + j - i - 1
    }

    /// Distance between observations `i` and `j` (zero when equal).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.values[self.index(i, j)]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareDistanceMatrix {
    n: usize,
    /// Row-major `n x n`.
    data: Vec<f64>,
}

impl SquareDistanceMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(StatsError::NotSquare);
        }
        Ok(Self {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n.max(1)).map(<[f64]>::to_vec).collect()
    }
}

pub fn pairwise_distances(observations: &[Vec<f64>], metric: DistanceMetric) -> Result<CondensedDistances> {
    let n = observations.len();
    if n < 2 {
        return Err(StatsError::TooFewObservations(n));
    }
    let dim = observations[0].len();
    if let Some((index, o)) = observations.iter().enumerate().find(|(_, o)| o.len() != dim) {
        return Err(StatsError::DimMismatch {
            index,
            expected: dim,
            found: o.len(),
        });
    }
    let embeddings = match metric {
        DistanceMetric::Cosine => observations
            .iter()
            .map(|o| Embedding::new(o.clone()))
            .collect::<std::result::Result<Vec<_>, _>>()?,
        DistanceMetric::Euclidean => Vec::new(),
    };
    let mut values = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d = match metric {
                DistanceMetric::Euclidean => observations[i]
                    .iter()
                    .zip(&observations[j])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt(),
                // Rounding can leave 1 - cos a hair below zero.
                DistanceMetric::Cosine => (1.0 - cosine_similarity(&embeddings[i], &embeddings[j])?).max(0.0),
            };
            values.push(d);
        }
    }
    CondensedDistances::new(values)
}

pub fn condensed_to_square(d: &CondensedDistances) -> SquareDistanceMatrix {
    let n = d.n;
    let mut data = vec![0.0; n * n];
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            data[i * n + j] = d.values[k];
            data[j * n + i] = d.values[k];
            k += 1;
        }
    }
    SquareDistanceMatrix { n, data }
}

/// Inverse of [`condensed_to_square`]; symmetry and the zero diagonal are
/// checked exactly.
pub fn square_to_condensed(m: &SquareDistanceMatrix) -> Result<CondensedDistances> {
    let n = m.n;
    if n < 2 {
        return Err(StatsError::TooFewObservations(n));
    }
    for i in 0..n {
        if m.get(i, i) != 0.0 {
            return Err(StatsError::NonzeroDiagonal(i));
        }
        for j in i + 1..n {
            if m.get(i, j) != m.get(j, i) {
                return Err(StatsError::NotSymmetric { i, j });
            }
        }
    }
    let mut values = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            values.push(m.get(i, j));
        }
    }
    CondensedDistances::new(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkageRow {
    pub cluster_a: usize,
    pub cluster_b: usize,
    pub distance: f64,
    pub size: usize,
}

/// Merge history: row `i` creates cluster `n + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkageMatrix {
    pub n: usize,
    pub rows: Vec<LinkageRow>,
}

impl LinkageMatrix {
    /// Validates ids, sizes and heights.
    pub fn new(n: usize, rows: Vec<LinkageRow>) -> Result<Self> {
        let bad = |msg: String| Err(StatsError::InvalidLinkage(msg));
        if n < 2 {
            return Err(StatsError::TooFewObservations(n));
        }
        if rows.len() != n - 1 {
            return bad(format!("{} rows for {n} observations", rows.len()));
        }
        let mut sizes = vec![1usize; n];
        let mut used = vec![false; 2 * n - 1];
        for (i, row) in rows.iter().enumerate() {
            let limit = n + i;
            for id in [row.cluster_a, row.cluster_b] {
                if id >= limit {
                    return bad(format!("row {i} references cluster {id} before it exists"));
                }
                if used[id] {
                    return bad(format!("cluster {id} merged twice"));
                }
                used[id] = true;
            }
            if row.cluster_a == row.cluster_b {
                return bad(format!("row {i} merges cluster {} with itself", row.cluster_a));
            }
            if !row.distance.is_finite() || row.distance < 0.0 {
                return bad(format!("row {i} has height {}", row.distance));
            }
            let size = sizes[row.cluster_a] + sizes[row.cluster_b];
            if size != row.size {
                return bad(format!("row {i} has size {} but members sum to {size}", row.size));
            }
            sizes.push(size);
        }
        Ok(Self { n, rows })
    }

    pub fn heights(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.distance).collect()
    }

    /// Leaves of cluster `id` in dendrogram order (`cluster_a` subtree first).
    pub fn leaves(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(c) = stack.pop() {
            if c < self.n {
                out.push(c);
            } else {
                let row = &self.rows[c - self.n];
                stack.push(row.cluster_b);
                stack.push(row.cluster_a);
            }
        }
        out
    }
}

/// UPGMA. The closest pair of active clusters is merged each step; ties
/// go to the smallest `(cluster_a, cluster_b)` id pair.
pub fn average_linkage(d: &CondensedDistances) -> Result<LinkageMatrix> {
    let n = d.n;
    if n < 2 {
        return Err(StatsError::TooFewObservations(n));
    }
    // Working matrix indexed by slot; a merged cluster reuses its first slot.
    let mut dist = condensed_to_square(d).data;
    let mut ids: Vec<usize> = (0..n).collect();
    let mut sizes = vec![1usize; n];
    let mut active: Vec<usize> = (0..n).collect();
    let mut rows = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for (ai, &s) in active.iter().enumerate() {
            for &t in &active[ai + 1..] {
                let h = dist[s * n + t];
                let (a, b) = (ids[s].min(ids[t]), ids[s].max(ids[t]));
                let better = match best {
                    None => true,
                    Some((bh, ba, bb, _, _)) => h < bh || (h == bh && (a, b) < (ba, bb)),
                };
                if better {
                    best = Some((h, a, b, s, t));
                }
            }
        }
        let (h, a, b, s, t) = best.expect("at least two active clusters");
        let (ns, nt) = (sizes[s] as f64, sizes[t] as f64);
        for &k in &active {
            if k != s && k != t {
                let merged = (ns * dist[s * n + k] + nt * dist[t * n + k]) / (ns + nt);
                dist[s * n + k] = merged;
                dist[k * n + s] = merged;
            }
        }
        sizes[s] += sizes[t];
        ids[s] = n + step;
        active.retain(|&k| k != t);
        rows.push(LinkageRow {
            cluster_a: a,
            cluster_b: b,
            distance: h,
            size: sizes[s],
        });
    }
    LinkageMatrix::new(n, rows)
}

/// Flat clusters for a distance threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatClusters {
    pub threshold: f64,
    /// 1-based, numbered in order of first appearance by observation index.
    pub labels: Vec<usize>,
}

impl FlatClusters {
    pub fn cluster_count(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0)
    }
}

/// Cuts the dendrogram at `threshold`: a merge is admitted when every
/// height in its subtree is `<= threshold`.
pub fn flat_clusters(z: &LinkageMatrix, threshold: f64) -> FlatClusters {
    let n = z.n;
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut subtree_max = vec![0.0f64; 2 * n - 1];
    for (i, row) in z.rows.iter().enumerate() {
        let node = n + i;
        subtree_max[node] = row
            .distance
            .max(subtree_max[row.cluster_a])
            .max(subtree_max[row.cluster_b]);
        if subtree_max[node] <= threshold {
            for child in [row.cluster_a, row.cluster_b] {
                let root = find(&mut parent, child);
                parent[root] = node;
            }
        }
    }
    let mut label_of_root = BTreeMap::new();
    let labels = (0..n)
        .map(|obs| {
            let root = find(&mut parent, obs);
            let next = label_of_root.len() + 1;
            *label_of_root.entry(root).or_insert(next)
        })
        .collect();
    FlatClusters { threshold, labels }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityEstimate {
    pub fn trapezoid_integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
            .sum()
    }
}

fn sample_std(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Scott's rule: `sample_std * n^(-1/5)`.
pub fn scott_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(StatsError::TooFewObservations(samples.len()));
    }
    let std = sample_std(samples);
    if std.is_nan() || std <= 0.0 {
        return Err(StatsError::DegenerateSamples);
    }
    Ok(std * (samples.len() as f64).powf(-0.2))
}

pub fn kde_gaussian(samples: &[f64], grid: &[f64]) -> Result<DensityEstimate> {
    let h = scott_bandwidth(samples)?;
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let density = grid
        .iter()
        .map(|&x| {
            norm * samples
                .iter()
                .map(|&s| {
                    let z = (x - s) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
        })
        .collect();
    Ok(DensityEstimate {
        grid: grid.to_vec(),
        density,
        bandwidth: h,
    })
}

/// KDE on `points` evenly spaced values spanning `[min - 4h, max + 4h]`.
pub fn kde_on_span(samples: &[f64], points: usize) -> Result<DensityEstimate> {
    let h = scott_bandwidth(samples)?;
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 4.0 * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * h;
    let points = points.max(2);
    let step = (hi - lo) / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    kde_gaussian(samples, &grid)
}

/// `(v - min) / (max - min)`; a constant input maps to 0.5 everywhere.
pub fn minmax_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
}

/// [`minmax_normalize`] over the defined entries only; `None` stays `None`.
pub fn minmax_normalize_partial(values: &[Option<f64>]) -> Vec<Option<f64>> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    let mut normalized = minmax_normalize(&defined).into_iter();
    values.iter().map(|v| v.and_then(|_| normalized.next())).collect()
}

/// One value per metric.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet<T> {
    pub cosine_sim: T,
    pub l2_dist: T,
    pub attn_sim: T,
    pub patch_sim: T,
    pub edge_sim: T,
    pub detail_sim: T,
}

impl<T> MetricSet<T> {
    pub fn get(&self, metric: Metric) -> &T {
        match metric {
            Metric::CosineSim => &self.cosine_sim,
            Metric::L2Dist => &self.l2_dist,
            Metric::AttnSim => &self.attn_sim,
            Metric::PatchSim => &self.patch_sim,
            Metric::EdgeSim => &self.edge_sim,
            Metric::DetailSim => &self.detail_sim,
        }
    }

    pub fn get_mut(&mut self, metric: Metric) -> &mut T {
        match metric {
            Metric::CosineSim => &mut self.cosine_sim,
            Metric::L2Dist => &mut self.l2_dist,
            Metric::AttnSim => &mut self.attn_sim,
            Metric::PatchSim => &mut self.patch_sim,
            Metric::EdgeSim => &mut self.edge_sim,
            Metric::DetailSim => &mut self.detail_sim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSummary {
    pub augmentation: AugmentationId,
    pub records: usize,
    /// Number of defined values behind each mean.
    pub counts: MetricSet<usize>,
    pub mean: MetricSet<Option<f64>>,
    /// Means min-max normalized across augmentations; L2 is inverted so
    /// that 1 is always best.
    pub normalized: MetricSet<Option<f64>>,
    pub average_performance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateTable {
    /// In augmentation declaration order.
    pub rows: Vec<AugmentationSummary>,
    /// Best first.
    pub ranking: Vec<AugmentationId>,
}

impl AggregateTable {
    pub fn row(&self, id: AugmentationId) -> Option<&AugmentationSummary> {
        self.rows.iter().find(|r| r.augmentation == id)
    }

    /// Rows in ranking order.
    pub fn ranked_rows(&self) -> Vec<&AugmentationSummary> {
        self.ranking.iter().filter_map(|&id| self.row(id)).collect()
    }
}

pub fn aggregate_records(records: &[MetricRecord]) -> Result<AggregateTable> {
    if records.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut grouped: BTreeMap<AugmentationId, Vec<&MetricRecord>> = BTreeMap::new();
    for r in records {
        grouped.entry(r.augmentation).or_default().push(r);
    }
    let mut rows: Vec<AugmentationSummary> = grouped
        .iter()
        .map(|(&augmentation, recs)| {
            let mut counts = MetricSet::default();
            let mut mean = MetricSet::default();
            for metric in Metric::ALL {
                let values: Vec<f64> = recs.iter().filter_map(|r| r.get(metric)).collect();
                *counts.get_mut(metric) = values.len();
                *mean.get_mut(metric) = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
            }
            AugmentationSummary {
                augmentation,
                records: recs.len(),
                counts,
                mean,
                normalized: MetricSet::default(),
                average_performance: None,
            }
        })
        .collect();

    for metric in Metric::ALL {
        let column: Vec<Option<f64>> = rows.iter().map(|r| *r.mean.get(metric)).collect();
        let normalized = minmax_normalize_partial(&column);
        for (row, v) in rows.iter_mut().zip(normalized) {
            let v = if metric.higher_is_better() {
                v
            } else {
                v.map(|x| 1.0 - x)
            };
            *row.normalized.get_mut(metric) = v;
        }
    }
    for row in &mut rows {
        let defined: Vec<f64> = Metric::ALL.iter().filter_map(|&m| *row.normalized.get(m)).collect();
        row.average_performance = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    }

    let mut ranking: Vec<(AugmentationId, Option<f64>)> =
        rows.iter().map(|r| (r.augmentation, r.average_performance)).collect();
    ranking.sort_by(|(ia, pa), (ib, pb)| match (pa, pb) {
        (Some(a), Some(b)) => b.total_cmp(a).then_with(|| ia.name().cmp(ib.name())),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => ia.name().cmp(ib.name()),
    });
    Ok(AggregateTable {
        rows,
        ranking: ranking.into_iter().map(|(id, _)| id).collect(),
    })
}

/// Per-augmentation profile of L2 embedding distances over the shared image
/// set, images in sorted key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVectors {
    pub image_keys: Vec<String>,
    pub augmentations: Vec<AugmentationId>,
    pub vectors: Vec<Vec<f64>>,
}

pub fn augmentation_feature_vectors(records: &[MetricRecord]) -> Result<FeatureVectors> {
    if records.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut per_aug: BTreeMap<AugmentationId, BTreeMap<&str, f64>> = BTreeMap::new();
    for r in records {
        let missing = |detail: String| StatsError::MissingAugmentationData {
            augmentation: r.augmentation,
            detail,
        };
        let d = r
            .l2_dist
            .ok_or_else(|| missing(format!("no embedding distance for image '{}'", r.image_key)))?;
        if per_aug
            .entry(r.augmentation)
            .or_default()
            .insert(&r.image_key, d)
            .is_some()
        {
            return Err(missing(format!("duplicate record for image '{}'", r.image_key)));
        }
    }
    let reference: BTreeSet<&str> = per_aug
        .values()
        .next()
        .map(|m| m.keys().copied().collect())
        .unwrap_or_default();
    for (&augmentation, dists) in &per_aug {
        let keys: BTreeSet<&str> = dists.keys().copied().collect();
        if keys != reference {
            let diff: Vec<&str> = reference.symmetric_difference(&keys).copied().collect();
            return Err(StatsError::MissingAugmentationData {
                augmentation,
                detail: format!("image set differs on {diff:?}"),
            });
        }
    }
    Ok(FeatureVectors {
        image_keys: reference.iter().map(|k| k.to_string()).collect(),
        augmentations: per_aug.keys().copied().collect(),
        vectors: per_aug.values().map(|m| m.values().copied().collect()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn condensed(v: &[f64]) -> CondensedDistances {
        CondensedDistances::new(v.to_vec()).unwrap()
    }

    fn record(key: &str, aug: AugmentationId, l2: f64) -> MetricRecord {
        MetricRecord {
            l2_dist: Some(l2),
            ..MetricRecord::empty(key, aug)
        }
    }

    #[test]
    fn pdist_hand_values() {
        let pts = vec![vec![0.0], vec![3.0], vec![4.0]];
        assert_eq!(
            pairwise_distances(&pts, DistanceMetric::Euclidean).unwrap().values(),
            &[3.0, 4.0, 1.0]
        );
        let same = vec![vec![1.0, 2.0], vec![1.0, 2.0]];
        assert_eq!(
            pairwise_distances(&same, DistanceMetric::Euclidean).unwrap().values(),
            &[0.0]
        );
        let orth = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(
            pairwise_distances(&orth, DistanceMetric::Cosine).unwrap().values(),
            &[1.0]
        );
    }

    #[test]
    fn pdist_errors() {
        assert_eq!(
            pairwise_distances(&[vec![1.0]], DistanceMetric::Euclidean),
            Err(StatsError::TooFewObservations(1))
        );
        assert!(matches!(
            pairwise_distances(&[vec![1.0], vec![1.0, 2.0]], DistanceMetric::Euclidean),
            Err(StatsError::DimMismatch { index: 1, .. })
        ));
        assert!(matches!(
            pairwise_distances(&[vec![0.0], vec![1.0]], DistanceMetric::Cosine),
            Err(StatsError::Metric(MetricError::ZeroVector))
        ));
    }

    #[test]
    fn squareform_hand_values() {
        let sq = condensed_to_square(&condensed(&[3.0, 4.0, 1.0]));
        assert_eq!(
            sq.rows(),
            vec![vec![0.0, 3.0, 4.0], vec![3.0, 0.0, 1.0], vec![4.0, 1.0, 0.0]]
        );
        let two = condensed_to_square(&condensed(&[2.5]));
        assert_eq!(two.rows(), vec![vec![0.0, 2.5], vec![2.5, 0.0]]);
        assert_eq!(square_to_condensed(&two).unwrap().values(), &[2.5]);
    }

    #[test]
    fn squareform_rejects_invalid() {
        let asym = SquareDistanceMatrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(square_to_condensed(&asym), Err(StatsError::NotSymmetric { i: 0, j: 1 }));
        let diag = SquareDistanceMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.5]]).unwrap();
        assert_eq!(square_to_condensed(&diag), Err(StatsError::NonzeroDiagonal(1)));
        assert!(SquareDistanceMatrix::from_rows(&[vec![0.0], vec![1.0, 0.0]]).is_err());
        assert!(CondensedDistances::new(vec![1.0, 2.0]).is_err());
        assert!(CondensedDistances::new(vec![-1.0]).is_err());
    }

    #[test]
    fn linkage_two_points() {
        let z = average_linkage(&condensed(&[4.2])).unwrap();
        assert_eq!(
            z.rows,
            vec![LinkageRow {
                cluster_a: 0,
                cluster_b: 1,
                distance: 4.2,
                size: 2
            }]
        );
    }

    #[test]
    fn linkage_line_example() {
        let d = pairwise_distances(&[vec![0.0], vec![1.0], vec![10.0]], DistanceMetric::Euclidean).unwrap();
        let z = average_linkage(&d).unwrap();
        assert_eq!(
            (z.rows[0].cluster_a, z.rows[0].cluster_b, z.rows[0].distance),
            (0, 1, 1.0)
        );
        assert_eq!(
            (
                z.rows[1].cluster_a,
                z.rows[1].cluster_b,
                z.rows[1].distance,
                z.rows[1].size
            ),
            (2, 3, 9.5, 3)
        );
        assert_eq!(flat_clusters(&z, 5.0).labels, vec![1, 1, 2]);
        assert_eq!(flat_clusters(&z, 0.5).labels, vec![1, 2, 3]);
        assert_eq!(flat_clusters(&z, 9.5).labels, vec![1, 1, 1]);
        assert_eq!(z.leaves(4), vec![2, 0, 1]);
    }

    #[test]
    fn linkage_tie_break_prefers_smallest_pair() {
        // Four points where every distance is 1: merges pair (0,1) first,
        // then (2,3), then the two pairs.
        let z = average_linkage(&condensed(&[1.0; 6])).unwrap();
        let pairs: Vec<(usize, usize)> = z.rows.iter().map(|r| (r.cluster_a, r.cluster_b)).collect();
        assert_eq!(pairs, vec![(0, 1), (2, 3), (4, 5)]);
    }

    #[test]
    fn linkage_validation() {
        let row = |a, b, d, s| LinkageRow {
            cluster_a: a,
            cluster_b: b,
            distance: d,
            size: s,
        };
        assert!(LinkageMatrix::new(3, vec![row(0, 1, 1.0, 2), row(2, 3, 2.0, 3)]).is_ok());
        assert!(LinkageMatrix::new(3, vec![row(0, 1, 1.0, 2), row(1, 3, 2.0, 3)]).is_err());
        assert!(LinkageMatrix::new(3, vec![row(0, 4, 1.0, 2), row(2, 3, 2.0, 3)]).is_err());
        assert!(LinkageMatrix::new(3, vec![row(0, 1, 1.0, 2), row(2, 3, 2.0, 4)]).is_err());
        assert!(LinkageMatrix::new(3, vec![row(0, 1, 1.0, 2)]).is_err());
    }

    #[test]
    fn kde_rejects_degenerate() {
        assert_eq!(
            kde_gaussian(&[1.0, 1.0, 1.0], &[0.0]),
            Err(StatsError::DegenerateSamples)
        );
        assert_eq!(kde_gaussian(&[1.0], &[0.0]), Err(StatsError::TooFewObservations(1)));
    }

    #[test]
    fn kde_symmetric_and_normalized() {
        let samples = [-2.0, -0.5, 0.5, 2.0];
        let grid: Vec<f64> = (-50..=50).map(|i| f64::from(i) * 0.1).collect();
        let est = kde_gaussian(&samples, &grid).unwrap();
        for i in 0..grid.len() {
            assert!((est.density[i] - est.density[grid.len() - 1 - i]).abs() < 1e-12);
        }
        let wide = kde_on_span(&samples, 2001).unwrap();
        assert!((wide.trapezoid_integral() - 1.0).abs() < 1e-2);
    }

    #[test]
    fn kde_bandwidth_is_scott() {
        let samples = [1.0, 2.0, 3.0, 4.0, 5.0];
        let std = (2.5f64).sqrt();
        assert!((scott_bandwidth(&samples).unwrap() - std * 5f64.powf(-0.2)).abs() < 1e-12);
    }

    #[test]
    fn minmax_hand_values() {
        assert_eq!(minmax_normalize(&[1.0, 2.0, 3.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(minmax_normalize(&[4.0, 4.0]), vec![0.5, 0.5]);
        assert_eq!(
            minmax_normalize_partial(&[Some(2.0), None, Some(4.0)]),
            vec![Some(0.0), None, Some(1.0)]
        );
    }

    #[test]
    fn aggregate_single_records() {
        let recs = vec![
            MetricRecord {
                cosine_sim: Some(0.9),
                patch_sim: Some(0.7),
                ..record("a", AugmentationId::GaussNoise, 0.0)
            },
            MetricRecord {
                cosine_sim: Some(0.8),
                patch_sim: Some(0.6),
                ..record("a", AugmentationId::HorizontalFlip, 1.0)
            },
            MetricRecord {
                cosine_sim: Some(0.7),
                patch_sim: Some(0.5),
                ..record("a", AugmentationId::Perspective, 2.0)
            },
        ];
        let table = aggregate_records(&recs).unwrap();
        let l2: Vec<Option<f64>> = table.rows.iter().map(|r| r.normalized.l2_dist).collect();
        assert_eq!(l2, vec![Some(1.0), Some(0.5), Some(0.0)]);
        assert_eq!(table.rows[0].mean.cosine_sim, Some(0.9));
        assert_eq!(table.rows[0].mean.attn_sim, None);
        assert_eq!(table.rows[0].counts.attn_sim, 0);
        assert_eq!(
            table.ranking,
            vec![
                AugmentationId::GaussNoise,
                AugmentationId::HorizontalFlip,
                AugmentationId::Perspective
            ]
        );
        assert_eq!(table.rows[0].average_performance, Some(1.0));
    }

    #[test]
    fn aggregate_ties_rank_by_name() {
        let recs: Vec<MetricRecord> = AugmentationId::ALL
            .iter()
            .map(|&id| MetricRecord {
                cosine_sim: Some(0.5),
                ..record("x", id, 1.0)
            })
            .collect();
        let table = aggregate_records(&recs).unwrap();
        assert!(table.rows.iter().all(|r| r.average_performance == Some(0.5)));
        let mut names: Vec<&str> = AugmentationId::ALL.iter().map(|a| a.name()).collect();
        names.sort_unstable();
        let ranked: Vec<&str> = table.ranking.iter().map(|a| a.name()).collect();
        assert_eq!(ranked, names);
        assert_eq!(aggregate_records(&[]), Err(StatsError::EmptyInput));
    }

    #[test]
    fn aggregate_skips_undefined_cells() {
        let recs = vec![
            MetricRecord {
                detail_sim: Some(0.4),
                ..record("a", AugmentationId::GaussNoise, 1.0)
            },
            record("b", AugmentationId::GaussNoise, 3.0),
        ];
        let table = aggregate_records(&recs).unwrap();
        assert_eq!(table.rows[0].mean.detail_sim, Some(0.4));
        assert_eq!(table.rows[0].counts.detail_sim, 1);
        assert_eq!(table.rows[0].mean.l2_dist, Some(2.0));
    }

    #[test]
    fn feature_vectors_follow_sorted_keys() {
        let recs = vec![
            record("b", AugmentationId::GaussNoise, 2.0),
            record("a", AugmentationId::GaussNoise, 1.0),
            record("a", AugmentationId::GaussianBlur, 0.1),
            record("b", AugmentationId::GaussianBlur, 0.2),
        ];
        let fv = augmentation_feature_vectors(&recs).unwrap();
        assert_eq!(fv.image_keys, vec!["a", "b"]);
        assert_eq!(
            fv.augmentations,
            vec![AugmentationId::GaussNoise, AugmentationId::GaussianBlur]
        );
        assert_eq!(fv.vectors, vec![vec![1.0, 2.0], vec![0.1, 0.2]]);
    }

    #[test]
    fn feature_vectors_need_matching_images() {
        let recs = vec![
            record("a", AugmentationId::GaussNoise, 2.0),
            record("b", AugmentationId::GaussianBlur, 0.2),
        ];
        assert!(matches!(
            augmentation_feature_vectors(&recs),
            Err(StatsError::MissingAugmentationData { .. })
        ));
        let no_l2 = vec![MetricRecord::empty("a", AugmentationId::GaussNoise)];
        assert!(augmentation_feature_vectors(&no_l2).is_err());
    }

    #[test]
    fn identical_profiles_merge_first() {
        let recs: Vec<MetricRecord> = [
            (AugmentationId::GaussNoise, [9.0, 7.0]),
            (AugmentationId::HorizontalFlip, [1.0, 2.0]),
            (AugmentationId::ColorJitter, [1.0, 2.0]),
            (AugmentationId::Perspective, [3.0, 1.0]),
        ]
        .iter()
        .flat_map(|&(id, d)| [record("a", id, d[0]), record("b", id, d[1])])
        .collect();
        let fv = augmentation_feature_vectors(&recs).unwrap();
        let z = average_linkage(&pairwise_distances(&fv.vectors, DistanceMetric::Euclidean).unwrap()).unwrap();
        let first: Vec<AugmentationId> = [z.rows[0].cluster_a, z.rows[0].cluster_b]
            .iter()
            .map(|&i| fv.augmentations[i])
            .collect();
        assert_eq!(first, vec![AugmentationId::ColorJitter, AugmentationId::HorizontalFlip]);
        assert_eq!(z.rows[0].distance, 0.0);
    }

    proptest! {
        #[test]
        fn squareform_round_trip(n in 2usize..10, seed in prop::collection::vec(0.0f64..100.0, 45)) {
            let c = condensed(&seed[..n * (n - 1) / 2]);
            let back = square_to_condensed(&condensed_to_square(&c)).unwrap();
            prop_assert_eq!(back, c);
        }

        #[test]
        fn linkage_heights_nondecreasing(pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..12)) {
            let z = average_linkage(&pairwise_distances(&pts, DistanceMetric::Euclidean).unwrap()).unwrap();
            prop_assert_eq!(z.rows.last().unwrap().size, pts.len());
            for w in z.heights().windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-12);
            }
        }

        #[test]
        fn cluster_count_nonincreasing_in_threshold(pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 2..10), t1 in 0.0f64..10.0, dt in 0.0f64..10.0) {
            let z = average_linkage(&pairwise_distances(&pts, DistanceMetric::Euclidean).unwrap()).unwrap();
            let a = flat_clusters(&z, t1).cluster_count();
            let b = flat_clusters(&z, t1 + dt).cluster_count();
            prop_assert!(b <= a);
        }

        #[test]
        fn minmax_output_in_unit_range(v in prop::collection::vec(-1e6f64..1e6, 1..20)) {
            prop_assert!(minmax_normalize(&v).iter().all(|x| (0.0..=1.0).contains(x)));
        }

        #[test]
        fn kde_nonnegative(samples in prop::collection::vec(-10.0f64..10.0, 2..30)) {
            prop_assume!(sample_std(&samples) > 1e-6);
            let est = kde_on_span(&samples, 256).unwrap();
            prop_assert!(est.density.iter().all(|d| *d >= 0.0));
        }
    }
}
