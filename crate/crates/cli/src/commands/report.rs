//! `shiftlens report`: tables, radar values and SVG plots from a report.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use shiftlens_core::augment::{task_seed, AugmentationId};
use shiftlens_core::metrics::Metric;

use crate::commands::analyze::{read_report, AnalysisReport};
use crate::commands::cluster::{cluster_listing, dendrogram_layout, section_labels};
use crate::config::ReportFormat;
use crate::error::{CliError, Result};
use crate::plots::{dendrogram_svg, density_svg, heatmap_svg, l2_bar_svg};
use crate::tables::{opt_num, write_json, CsvTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarSeries {
    pub augmentation: AugmentationId,
    /// Min-max normalized per axis, L2 inverted; `None` when undefined.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarData {
    pub axes: Vec<Metric>,
    pub series: Vec<RadarSeries>,
}

pub fn radar_data(report: &AnalysisReport) -> RadarData {
    RadarData {
        axes: Metric::ALL.to_vec(),
        series: report
            .aggregates
            .rows
            .iter()
            .map(|row| RadarSeries {
                augmentation: row.augmentation,
                values: Metric::ALL.iter().map(|&m| *row.normalized.get(m)).collect(),
            })
            .collect(),
    }
}

/// Indices of `min(rows, count)` images, seeded by the report's global seed,
/// in their original order.
pub fn sample_rows(global_seed: u64, count: usize, rows: usize) -> Vec<usize> {
    if rows >= count {
        return (0..count).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(task_seed(global_seed, "", "cosine-samples"));
    let mut picked = rand::seq::index::sample(&mut rng, count, rows).into_vec();
    picked.sort_unstable();
    picked
}

fn write_aggregates(path: &Path, report: &AnalysisReport) -> Result<()> {
    let mut t = CsvTable::create(path)?;
    let mut header = vec!["augmentation".to_string(), "records".to_string()];
    header.extend(Metric::ALL.iter().map(|m| format!("mean_{}", m.name())));
    header.extend(Metric::ALL.iter().map(|m| format!("count_{}", m.name())));
    header.extend(Metric::ALL.iter().map(|m| format!("norm_{}", m.name())));
    header.push("average_performance".into());
    header.push("rank".into());
    t.row(&header)?;
    for row in &report.aggregates.rows {
        let rank = report
            .aggregates
            .ranking
            .iter()
            .position(|&a| a == row.augmentation)
            .map_or(0, |p| p + 1);
        let mut fields = vec![row.augmentation.name().to_string(), row.records.to_string()];
        fields.extend(Metric::ALL.iter().map(|&m| opt_num(*row.mean.get(m))));
        fields.extend(Metric::ALL.iter().map(|&m| row.counts.get(m).to_string()));
        fields.extend(Metric::ALL.iter().map(|&m| opt_num(*row.normalized.get(m))));
        fields.push(opt_num(row.average_performance));
        fields.push(rank.to_string());
        t.row(&fields)?;
    }
    t.finish()
}

fn write_ranking(path: &Path, report: &AnalysisReport) -> Result<()> {
    let mut t = CsvTable::create(path)?;
    t.row(["rank", "augmentation", "average_performance"])?;
    for (i, row) in report.aggregates.ranked_rows().iter().enumerate() {
        t.row([
            (i + 1).to_string(),
            row.augmentation.name().to_string(),
            opt_num(row.average_performance),
        ])?;
    }
    t.finish()
}

fn write_heatmap(path: &Path, report: &AnalysisReport) -> Result<()> {
    let mut t = CsvTable::create(path)?;
    let header = ["augmentation"]
        .into_iter()
        .chain(Metric::ALL.iter().map(|m| m.name()))
        .chain(["average_performance"]);
    t.row(header)?;
    for row in &report.heatmap {
        let fields = [row.augmentation.name().to_string()]
            .into_iter()
            .chain(Metric::ALL.iter().map(|&m| opt_num(*row.normalized.get(m))))
            .chain([opt_num(row.average_performance)]);
        t.row(fields)?;
    }
    t.finish()
}

fn write_cosine_samples(path: &Path, report: &AnalysisReport, rows: usize) -> Result<()> {
    let keys = report.image_keys();
    let mut cosine: BTreeMap<(&str, AugmentationId), Option<f64>> = BTreeMap::new();
    for r in &report.records {
        cosine.insert((r.image_key.as_str(), r.augmentation), r.cosine_sim);
    }
    let mut t = CsvTable::create(path)?;
    let header = ["image_key"]
        .into_iter()
        .chain(report.augmentations.iter().map(|a| a.name()));
    t.row(header)?;
    for i in sample_rows(report.global_seed, keys.len(), rows) {
        let key = keys[i];
        let fields = [key.to_string()].into_iter().chain(
            report
                .augmentations
                .iter()
                .map(|&a| opt_num(cosine.get(&(key, a)).copied().flatten())),
        );
        t.row(fields)?;
    }
    t.finish()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub formats: Vec<ReportFormat>,
    /// Rows of the per-sample cosine table.
    pub sample_rows: usize,
    /// Threshold drawn on the dendrogram and used for the cluster listing.
    pub threshold: Option<f64>,
}

/// Writes the requested files into `out_dir` and returns their paths in
/// the order written.
pub fn write_report_files(report: &AnalysisReport, out_dir: &Path, options: &ReportOptions) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut out = |name: &str| {
        let p = out_dir.join(name);
        written.push(p.clone());
        p
    };
    let threshold = options.threshold.or_else(|| {
        report
            .clustering
            .as_ref()
            .and_then(|c| c.flat.as_ref())
            .map(|f| f.threshold)
    });
    let layout = report
        .clustering
        .as_ref()
        .map(|c| dendrogram_layout(&c.linkage, &section_labels(c)));
    if layout.is_none() {
        info!(
            "no clustering data, dendrogram skipped: {}",
            report.clustering_absent_reason.as_deref().unwrap_or("unknown reason")
        );
    }

    for format in &options.formats {
        match format {
            ReportFormat::Csv => {
                write_aggregates(&out("aggregates.csv"), report)?;
                write_ranking(&out("ranking.csv"), report)?;
                write_heatmap(&out("heatmap.csv"), report)?;
                write_cosine_samples(&out("cosine_samples.csv"), report, options.sample_rows)?;
                let mut t = CsvTable::create(&out("l2_means.csv"))?;
                t.row(["augmentation", "mean_l2_dist"])?;
                for row in &report.aggregates.rows {
                    t.row([row.augmentation.name().to_string(), opt_num(row.mean.l2_dist)])?;
                }
                t.finish()?;
            }
            ReportFormat::Json => {
                write_json(&out("radar.json"), &radar_data(report))?;
                if let (Some(layout), Some(c)) = (&layout, &report.clustering) {
                    write_json(&out("dendrogram.json"), layout)?;
                    if let Some(t) = threshold {
                        write_json(&out("clusters.json"), &cluster_listing(c, t))?;
                    }
                }
            }
            ReportFormat::Svg => {
                write_text(&out("heatmap.svg"), &heatmap_svg(&report.heatmap))?;
                write_text(
                    &out("kde_l2.svg"),
                    &density_svg(&report.l2_density, "Kernel density of L2 distance", "L2 distance"),
                )?;
                write_text(
                    &out("kde_cosine.svg"),
                    &density_svg(
                        &report.cosine_density,
                        "Kernel density of cosine similarity",
                        "cosine similarity",
                    ),
                )?;
                write_text(&out("l2_bar.svg"), &l2_bar_svg(&report.aggregates))?;
                if let Some(layout) = &layout {
                    write_text(&out("dendrogram.svg"), &dendrogram_svg(layout, threshold))?;
                }
            }
        }
    }
    Ok(written)
}

pub fn cmd_report(report_path: &Path, out_dir: &Path, options: &ReportOptions) -> Result<Vec<PathBuf>> {
    if let Some(t) = options.threshold {
        crate::config::validate_threshold(t)?;
    }
    let report = read_report(report_path)?;
    let written = write_report_files(&report, out_dir, options)?;
    info!("wrote {} files to {}", written.len(), out_dir.display());
    Ok(written)
}
