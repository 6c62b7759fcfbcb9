//! Similarity metrics between an original and an augmented sample.
//!
//! Embedding metrics (cosine similarity, L2 distance) compare encoder
//! outputs. The remaining four compare attention maps or pixels: attention
//! similarity, patch similarity, edge similarity and detail similarity.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::AugmentationId;
use crate::imagecore::{edge_map, extract_patch_grid, to_grayscale, ImageError, ImageU8};

/// Default grid for patch and detail similarity (4x4 = 16 patches).
pub const DEFAULT_PATCH_GRID: usize = 4;

/// Patches with a standard deviation below this (8-bit units) are uniform.
pub const UNIFORM_PATCH_STD: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),
    #[error("invalid attention map: {0}")]
    InvalidAttention(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

pub type Result<T> = std::result::Result<T, MetricError>;

/// Dense, finite, non-empty feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(MetricError::InvalidEmbedding("empty vector".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(MetricError::InvalidEmbedding(format!("non-finite value at index {i}")));
        }
        Ok(Self(values))
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Non-negative `rows x cols` grid of attention weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl AttentionMap {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(MetricError::InvalidAttention(format!("empty shape {rows}x{cols}")));
        }
        if values.len() != rows * cols {
            return Err(MetricError::InvalidAttention(format!(
                "{} values for shape {rows}x{cols}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(MetricError::InvalidAttention(format!(
                "value {} at index {i} is negative or non-finite",
                values[i]
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn check_dims(u: &Embedding, v: &Embedding) -> Result<()> {
    if u.dim() != v.dim() {
        return Err(MetricError::DimMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    Ok(())
}

fn check_image_shapes(a: &ImageU8, b: &ImageU8) -> Result<()> {
    let (sa, sb) = ((a.height(), a.width()), (b.height(), b.width()));
    if sa != sb {
        return Err(MetricError::ShapeMismatch { left: sa, right: sb });
    }
    Ok(())
}

pub fn cosine_similarity(u: &Embedding, v: &Embedding) -> Result<f64> {
    check_dims(u, v)?;
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    let dot: f64 = u.0.iter().zip(&v.0).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

pub fn l2_distance(u: &Embedding, v: &Embedding) -> Result<f64> {
    check_dims(u, v)?;
    Ok(u.0.iter().zip(&v.0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
}

/// `1 / (1 + MSE)` over corresponding cells.
pub fn attention_similarity(a: &AttentionMap, b: &AttentionMap) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(MetricError::ShapeMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mse = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / a.values.len() as f64;
    Ok(1.0 / (1.0 + mse))
}

/// Mean over a `grid x grid` patch grid of `1 / (1 + MSE_k / 255^2)`, with
/// `MSE_k` taken over raw 8-bit values of every pixel and channel.
pub fn patch_similarity(a: &ImageU8, b: &ImageU8, grid: usize) -> Result<f64> {
    check_image_shapes(a, b)?;
    let pa = extract_patch_grid(a, grid)?;
    let pb = extract_patch_grid(b, grid)?;
    let total: f64 = pa
        .patches
        .iter()
        .zip(&pb.patches)
        .map(|(x, y)| 1.0 / (1.0 + x.mse(y) / (255.0 * 255.0)))
        .sum();
    Ok(total / pa.patches.len() as f64)
}

/// `1 -` mean absolute difference of the normalized edge maps.
pub fn edge_similarity(a: &ImageU8, b: &ImageU8) -> Result<f64> {
    check_image_shapes(a, b)?;
    let ea = edge_map(&to_grayscale(&a.to_float()))?;
    let eb = edge_map(&to_grayscale(&b.to_float()))?;
    Ok(edge_maps_similarity(ea.data(), eb.data()))
}

/// `1 -` mean absolute difference between two edge maps of equal length.
pub fn edge_maps_similarity(ea: &[f64], eb: &[f64]) -> f64 {
    debug_assert_eq!(ea.len(), eb.len());
    let mad = ea.iter().zip(eb).map(|(x, y)| (x - y).abs()).sum::<f64>() / ea.len() as f64;
    (1.0 - mad).clamp(0.0, 1.0)
}

/// Mean of `exp(-|ln(sigma'_k / sigma_k)|)` over patch pairs where neither
/// patch is uniform. `None` when every pair contains a uniform patch.
pub fn detail_similarity(a: &ImageU8, b: &ImageU8, grid: usize) -> Result<Option<f64>> {
    check_image_shapes(a, b)?;
    let pa = extract_patch_grid(a, grid)?;
    let pb = extract_patch_grid(b, grid)?;
    let terms: Vec<f64> = pa
        .patches
        .iter()
        .zip(&pb.patches)
        .filter_map(|(x, y)| {
            let (sx, sy) = (x.std_dev(), y.std_dev());
            (sx >= UNIFORM_PATCH_STD && sy >= UNIFORM_PATCH_STD).then(|| (-(sy / sx).ln().abs()).exp())
        })
        .collect();
    if terms.is_empty() {
        return Ok(None);
    }
    Ok(Some(terms.iter().sum::<f64>() / terms.len() as f64))
}

/// Inputs for one side of a comparison. Embedding and attention are optional.
#[derive(Debug, Clone)]
pub struct SampleBundle {
    pub image: ImageU8,
    pub embedding: Option<Embedding>,
    pub attention: Option<AttentionMap>,
}

impl SampleBundle {
    pub fn image_only(image: ImageU8) -> Self {
        Self {
            image,
            embedding: None,
            attention: None,
        }
    }
}

/// All six metrics for one (image, augmentation) pair; `None` marks a value
/// that was not computed or is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub image_key: String,
    pub augmentation: AugmentationId,
    pub cosine_sim: Option<f64>,
    pub l2_dist: Option<f64>,
    pub attn_sim: Option<f64>,
    pub patch_sim: Option<f64>,
    pub edge_sim: Option<f64>,
    pub detail_sim: Option<f64>,
}

impl MetricRecord {
    pub fn empty(image_key: &str, augmentation: AugmentationId) -> Self {
        Self {
            image_key: image_key.to_string(),
            augmentation,
            cosine_sim: None,
            l2_dist: None,
            attn_sim: None,
            patch_sim: None,
            edge_sim: None,
            detail_sim: None,
        }
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::CosineSim => self.cosine_sim,
            Metric::L2Dist => self.l2_dist,
            Metric::AttnSim => self.attn_sim,
            Metric::PatchSim => self.patch_sim,
            Metric::EdgeSim => self.edge_sim,
            Metric::DetailSim => self.detail_sim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    CosineSim,
    L2Dist,
    AttnSim,
    PatchSim,
    EdgeSim,
    DetailSim,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Self::CosineSim,
        Self::L2Dist,
        Self::AttnSim,
        Self::PatchSim,
        Self::EdgeSim,
        Self::DetailSim,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::CosineSim => "cosine_sim",
            Self::L2Dist => "l2_dist",
            Self::AttnSim => "attn_sim",
            Self::PatchSim => "patch_sim",
            Self::EdgeSim => "edge_sim",
            Self::DetailSim => "detail_sim",
        }
    }

    /// Whether a larger value means the augmentation preserved more.
    pub fn higher_is_better(self) -> bool {
        !matches!(self, Self::L2Dist)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{image_key}/{augmentation}: {source}")]
pub struct RecordError {
    pub image_key: String,
    pub augmentation: AugmentationId,
    #[source]
    pub source: MetricError,
}

/// Which metric groups [`compute_record`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordOptions {
    pub grid: usize,
    /// Cosine similarity and L2 distance (when both embeddings exist).
    pub embedding_metrics: bool,
    /// Attention, patch, edge and detail similarity.
    pub custom_metrics: bool,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self {
            grid: DEFAULT_PATCH_GRID,
            embedding_metrics: true,
            custom_metrics: true,
        }
    }
}

pub fn compute_record(
    image_key: &str,
    augmentation: AugmentationId,
    original: &SampleBundle,
    augmented: &SampleBundle,
    options: &RecordOptions,
) -> std::result::Result<MetricRecord, RecordError> {
    let wrap = |source| RecordError {
        image_key: image_key.to_string(),
        augmentation,
        source,
    };
    let mut record = MetricRecord::empty(image_key, augmentation);
    if options.embedding_metrics {
        if let (Some(u), Some(v)) = (&original.embedding, &augmented.embedding) {
            record.l2_dist = Some(l2_distance(u, v).map_err(wrap)?);
            record.cosine_sim = Some(cosine_similarity(u, v).map_err(wrap)?);
        }
    }
    if options.custom_metrics {
        if let (Some(a), Some(b)) = (&original.attention, &augmented.attention) {
            record.attn_sim = Some(attention_similarity(a, b).map_err(wrap)?);
        }
        let (a, b) = (&original.image, &augmented.image);
        record.patch_sim = Some(patch_similarity(a, b, options.grid).map_err(wrap)?);
        record.edge_sim = Some(edge_similarity(a, b).map_err(wrap)?);
        record.detail_sim = detail_similarity(a, b, options.grid).map_err(wrap)?;
    }
    Ok(record)
}
