//! `shiftlens analyze`: metric records, aggregates, densities and the
//! augmentation clustering for a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use shiftlens_core::augment::{decode_image, task_seed, AugmentationId};
use shiftlens_core::metrics::{
    compute_record, AttentionMap, Embedding, MetricRecord, RecordOptions, SampleBundle, DEFAULT_PATCH_GRID,
};
use shiftlens_core::stats::{
    aggregate_records, augmentation_feature_vectors, average_linkage, kde_on_span, pairwise_distances, AggregateTable,
    DensityEstimate, DistanceMetric, FlatClusters, LinkageMatrix, MetricSet, StatsError,
};
use shiftlens_core::tensorio::{decode_tensor, load_manifest, manifest_dir, resolve_path, ImageEntry, RunManifest};

use crate::commands::cluster::cut;
use crate::config::{validate_grid, validate_threshold, validate_workers, with_pool};
use crate::embed::{synthetic_embedding, EmbedderKind};
use crate::error::{CliError, Result};
use crate::tables::{write_json, write_records_csv};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const KDE_POINTS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub image_key: String,
    /// `None` when the original image itself could not be used.
    pub augmentation: Option<AugmentationId>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySection {
    pub augmentation: AugmentationId,
    pub samples: usize,
    pub estimate: Option<DensityEstimate>,
    pub absent_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringSection {
    pub augmentations: Vec<AugmentationId>,
    /// Length of each per-image distance profile.
    pub profile_length: usize,
    /// Condensed Euclidean distances between the profiles.
    pub distances: Vec<f64>,
    pub linkage: LinkageMatrix,
    pub flat: Option<FlatClusters>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub augmentation: AugmentationId,
    pub normalized: MetricSet<Option<f64>>,
    pub average_performance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub global_seed: u64,
    pub embedder: String,
    pub grid: usize,
    pub metrics_subsample: Option<usize>,
    pub image_count: usize,
    pub custom_metric_images: usize,
    pub augmentations: Vec<AugmentationId>,
    pub records: Vec<MetricRecord>,
    pub failures: Vec<FailureEntry>,
    pub aggregates: AggregateTable,
    pub l2_density: Vec<DensitySection>,
    pub cosine_density: Vec<DensitySection>,
    pub clustering: Option<ClusteringSection>,
    pub clustering_absent_reason: Option<String>,
    /// Aggregate rows in ranking order.
    pub heatmap: Vec<HeatmapRow>,
}

impl AnalysisReport {
    /// Image keys in record order, without repeats.
    pub fn image_keys(&self) -> Vec<&str> {
        let mut keys: Vec<&str> = Vec::new();
        for r in &self.records {
            if keys.last() != Some(&r.image_key.as_str()) {
                keys.push(&r.image_key);
            }
        }
        keys
    }
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub embedder: EmbedderKind,
    pub metrics_subsample: Option<usize>,
    pub grid: usize,
    pub threshold: Option<f64>,
    pub workers: Option<usize>,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            embedder: EmbedderKind::Manifest,
            metrics_subsample: None,
            grid: DEFAULT_PATCH_GRID,
            threshold: None,
            workers: None,
        }
    }
}

/// Sorted indices of the images that receive custom metrics.
pub fn subsample_indices(global_seed: u64, count: usize, subsample: Option<usize>) -> Vec<usize> {
    match subsample {
        Some(n) if n < count => {
            let mut rng = ChaCha8Rng::seed_from_u64(task_seed(global_seed, "", "metrics-subsample"));
            let mut picked = rand::seq::index::sample(&mut rng, count, n).into_vec();
            picked.sort_unstable();
            picked
        }
        _ => (0..count).collect(),
    }
}

fn read_image(base: &Path, rel: &str) -> std::result::Result<shiftlens_core::imagecore::ImageU8, String> {
    let bytes = fs::read(resolve_path(base, rel)).map_err(|e| format!("{rel}: {e}"))?;
    decode_image(&bytes, rel).map_err(|e| e.to_string())
}

fn read_embedding(base: &Path, rel: &str) -> std::result::Result<Embedding, String> {
    let bytes = fs::read(resolve_path(base, rel)).map_err(|e| format!("{rel}: {e}"))?;
    let t = decode_tensor(&bytes).map_err(|e| format!("{rel}: {e}"))?;
    if t.dims.len() != 1 {
        return Err(format!("{rel}: embedding must be 1-D, got dims {:?}", t.dims));
    }
    Embedding::from_f32(&t.values).map_err(|e| format!("{rel}: {e}"))
}

fn read_attention(base: &Path, rel: &str) -> std::result::Result<AttentionMap, String> {
    let bytes = fs::read(resolve_path(base, rel)).map_err(|e| format!("{rel}: {e}"))?;
    let t = decode_tensor(&bytes).map_err(|e| format!("{rel}: {e}"))?;
    if t.dims.len() != 2 {
        return Err(format!("{rel}: attention map must be 2-D, got dims {:?}", t.dims));
    }
    let values = t.values.iter().map(|&v| f64::from(v)).collect();
    AttentionMap::new(t.dims[0] as usize, t.dims[1] as usize, values).map_err(|e| format!("{rel}: {e}"))
}

fn load_bundle(
    base: &Path,
    image_path: &str,
    embedding_path: Option<&str>,
    attention_path: Option<&str>,
    embedder: EmbedderKind,
) -> std::result::Result<SampleBundle, String> {
    let image = read_image(base, image_path)?;
    let embedding = match embedder {
        EmbedderKind::Synthetic => Some(synthetic_embedding(&image).map_err(|e| format!("{image_path}: {e}"))?),
        EmbedderKind::Manifest => embedding_path.map(|p| read_embedding(base, p)).transpose()?,
    };
    let attention = attention_path.map(|p| read_attention(base, p)).transpose()?;
    Ok(SampleBundle {
        image,
        embedding,
        attention,
    })
}

fn analyze_entry(
    entry: &ImageEntry,
    base: &Path,
    options: &AnalyzeOptions,
    custom: bool,
) -> (Vec<MetricRecord>, Vec<FailureEntry>) {
    let key = entry.image_key.as_str();
    let mut failures = Vec::new();
    let original = load_bundle(
        base,
        &entry.original_image_path,
        entry.original.embedding_path.as_deref(),
        entry.original.attention_path.as_deref(),
        options.embedder,
    );
    let original = match original {
        Ok(b) => b,
        Err(message) => {
            failures.push(FailureEntry {
                image_key: key.to_string(),
                augmentation: None,
                message,
            });
            let records = entry
                .augmentations
                .keys()
                .map(|&a| MetricRecord::empty(key, a))
                .collect();
            return (records, failures);
        }
    };
    let mut records = Vec::with_capacity(entry.augmentations.len());
    for (&aug, refs) in &entry.augmentations {
        let mut record = MetricRecord::empty(key, aug);
        let mut fail = |message: String| {
            failures.push(FailureEntry {
                image_key: key.to_string(),
                augmentation: Some(aug),
                message,
            })
        };
        let augmented = load_bundle(
            base,
            &refs.image_path,
            refs.embedding_path.as_deref(),
            refs.attention_path.as_deref(),
            options.embedder,
        );
        match augmented {
            Err(message) => fail(message),
            Ok(augmented) => {
                // Embedding and custom metrics are computed separately so a
                // failure in one group keeps the other.
                let groups = [
                    RecordOptions {
                        grid: options.grid,
                        embedding_metrics: true,
                        custom_metrics: false,
                    },
                    RecordOptions {
                        grid: options.grid,
                        embedding_metrics: false,
                        custom_metrics: custom,
                    },
                ];
                for group in groups {
                    match compute_record(key, aug, &original, &augmented, &group) {
                        Ok(r) => {
                            record.cosine_sim = record.cosine_sim.or(r.cosine_sim);
                            record.l2_dist = record.l2_dist.or(r.l2_dist);
                            record.attn_sim = record.attn_sim.or(r.attn_sim);
                            record.patch_sim = record.patch_sim.or(r.patch_sim);
                            record.edge_sim = record.edge_sim.or(r.edge_sim);
                            record.detail_sim = record.detail_sim.or(r.detail_sim);
                        }
                        Err(e) => fail(e.source.to_string()),
                    }
                }
            }
        }
        records.push(record);
    }
    (records, failures)
}

fn density_sections(
    records: &[MetricRecord],
    augmentations: &[AugmentationId],
    value: impl Fn(&MetricRecord) -> Option<f64>,
) -> Vec<DensitySection> {
    augmentations
        .iter()
        .map(|&aug| {
            let samples: Vec<f64> = records
                .iter()
                .filter(|r| r.augmentation == aug)
                .filter_map(&value)
                .collect();
            let (estimate, absent_reason) = if samples.len() < 2 {
                (
                    None,
                    Some(format!("{} defined values, at least 2 needed", samples.len())),
                )
            } else {
                match kde_on_span(&samples, KDE_POINTS) {
                    Ok(est) => (Some(est), None),
                    Err(StatsError::DegenerateSamples) => {
                        (None, Some(format!("zero variance, every value is {}", samples[0])))
                    }
                    Err(e) => (None, Some(e.to_string())),
                }
            };
            DensitySection {
                augmentation: aug,
                samples: samples.len(),
                estimate,
                absent_reason,
            }
        })
        .collect()
}

/// Average-linkage clustering of the augmentations' per-image L2 profiles.
pub fn cluster_records(
    records: &[MetricRecord],
    threshold: Option<f64>,
) -> std::result::Result<ClusteringSection, StatsError> {
    let features = augmentation_feature_vectors(records)?;
    let distances = pairwise_distances(&features.vectors, DistanceMetric::Euclidean)?;
    let linkage = average_linkage(&distances)?;
    let flat = threshold.map(|t| cut(&linkage, t));
    Ok(ClusteringSection {
        augmentations: features.augmentations,
        profile_length: features.image_keys.len(),
        distances: distances.values().to_vec(),
        linkage,
        flat,
    })
}

/// Computes the full report for an already loaded manifest.
pub fn analyze_manifest(manifest: &RunManifest, base: &Path, options: &AnalyzeOptions) -> Result<AnalysisReport> {
    validate_grid(options.grid)?;
    validate_workers(options.workers)?;
    if let Some(t) = options.threshold {
        validate_threshold(t)?;
    }
    if manifest.images.is_empty() {
        return Err(CliError::Stats(StatsError::EmptyInput));
    }
    let augmentations = manifest.augmentations();
    let selected = subsample_indices(manifest.global_seed, manifest.images.len(), options.metrics_subsample);
    let mut custom = vec![false; manifest.images.len()];
    for &i in &selected {
        custom[i] = true;
    }
    let results: Vec<(Vec<MetricRecord>, Vec<FailureEntry>)> = with_pool(options.workers, || {
        manifest
            .images
            .par_iter()
            .zip(custom.par_iter())
            .map(|(entry, &c)| analyze_entry(entry, base, options, c))
            .collect()
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (r, f) in results {
        records.extend(r);
        failures.extend(f);
    }
    for f in &failures {
        let aug = f.augmentation.map(|a| a.name()).unwrap_or("original");
        warn!("{}/{aug}: {}", f.image_key, f.message);
    }

    let aggregates = aggregate_records(&records)?;
    let l2_density = density_sections(&records, &augmentations, |r| r.l2_dist);
    let cosine_density = density_sections(&records, &augmentations, |r| r.cosine_sim);
    let (clustering, clustering_absent_reason) = match cluster_records(&records, options.threshold) {
        Ok(c) => (Some(c), None),
        Err(e) => {
            info!("clustering skipped: {e}");
            (None, Some(e.to_string()))
        }
    };
    let heatmap = aggregates
        .ranked_rows()
        .into_iter()
        .map(|row| HeatmapRow {
            augmentation: row.augmentation,
            normalized: row.normalized.clone(),
            average_performance: row.average_performance,
        })
        .collect();

    Ok(AnalysisReport {
        schema_version: REPORT_SCHEMA_VERSION,
        global_seed: manifest.global_seed,
        embedder: options.embedder.name().to_string(),
        grid: options.grid,
        metrics_subsample: options.metrics_subsample,
        image_count: manifest.images.len(),
        custom_metric_images: selected.len(),
        augmentations,
        records,
        failures,
        aggregates,
        l2_density,
        cosine_density,
        clustering,
        clustering_absent_reason,
        heatmap,
    })
}

/// `R.json` -> `R.records.csv`.
pub fn records_csv_path(report_path: &Path) -> PathBuf {
    report_path.with_extension("records.csv")
}

pub fn cmd_analyze(manifest_path: &Path, out: &Path, options: &AnalyzeOptions) -> Result<AnalysisReport> {
    let manifest = load_manifest(manifest_path)?;
    let report = analyze_manifest(&manifest, &manifest_dir(manifest_path), options)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    write_json(out, &report)?;
    write_records_csv(&records_csv_path(out), &report.records)?;
    info!(
        "{} records, {} failures written to {}",
        report.records.len(),
        report.failures.len(),
        out.display()
    );
    Ok(report)
}

pub fn read_report(path: &Path) -> Result<AnalysisReport> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let report: AnalysisReport = serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.display().to_string(),
        source,
    })?;
    if report.schema_version != REPORT_SCHEMA_VERSION {
        return Err(CliError::InvalidReport(format!(
            "unsupported schema_version {}",
            report.schema_version
        )));
    }
    if let Some(c) = &report.clustering {
        LinkageMatrix::new(c.linkage.n, c.linkage.rows.clone())?;
        if c.augmentations.len() != c.linkage.n {
            return Err(CliError::InvalidReport(format!(
                "{} clustered augmentations but linkage has {} leaves",
                c.augmentations.len(),
                c.linkage.n
            )));
        }
    }
    Ok(report)
}
