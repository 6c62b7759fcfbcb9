//! `shiftlens cluster`: flat clusters at a threshold plus a dendrogram layout.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shiftlens_core::augment::AugmentationId;
use shiftlens_core::stats::{flat_clusters, FlatClusters, LinkageMatrix, LinkageRow, StatsError};

use crate::commands::analyze::{read_report, AnalysisReport, ClusteringSection};
use crate::config::validate_threshold;
use crate::error::{CliError, Result};
use crate::tables::write_json;

/// One U-shaped link, SciPy style: x runs over leaf slots (`5 + 10k`),
/// y over merge heights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DendrogramLink {
    pub node: usize,
    pub icoord: [f64; 4],
    pub dcoord: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DendrogramLayout {
    /// Observation ids left to right.
    pub leaves: Vec<usize>,
    /// Labels in leaf order.
    pub labels: Vec<String>,
    pub links: Vec<DendrogramLink>,
    pub max_height: f64,
}

pub fn dendrogram_layout(z: &LinkageMatrix, labels: &[String]) -> DendrogramLayout {
    let n = z.n;
    let root = 2 * n - 2;
    let leaves = z.leaves(root);
    let mut x = vec![0.0; 2 * n - 1];
    let mut h = vec![0.0; 2 * n - 1];
    for (k, &leaf) in leaves.iter().enumerate() {
        x[leaf] = 5.0 + 10.0 * k as f64;
    }
    let mut links = Vec::with_capacity(z.rows.len());
    for (i, row) in z.rows.iter().enumerate() {
        let node = n + i;
        let (a, b) = (row.cluster_a, row.cluster_b);
        x[node] = (x[a] + x[b]) / 2.0;
        h[node] = row.distance;
        links.push(DendrogramLink {
            node,
            icoord: [x[a], x[a], x[b], x[b]],
            dcoord: [h[a], row.distance, row.distance, h[b]],
        });
    }
    DendrogramLayout {
        labels: leaves.iter().map(|&l| labels[l].clone()).collect(),
        leaves,
        links,
        max_height: z.rows.last().map_or(0.0, |r| r.distance),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterGroup {
    pub label: usize,
    pub members: Vec<AugmentationId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterListing {
    /// `None` stands for an unbounded threshold.
    pub threshold: Option<f64>,
    pub cluster_count: usize,
    pub clusters: Vec<ClusterGroup>,
    pub linkage: Vec<LinkageRow>,
}

/// Flat clusters with an infinite threshold mapped to `f64::MAX`, which
/// admits every finite merge.
pub fn cut(z: &LinkageMatrix, threshold: f64) -> FlatClusters {
    let t = if threshold.is_infinite() { f64::MAX } else { threshold };
    flat_clusters(z, t)
}

pub fn cluster_listing(section: &ClusteringSection, threshold: f64) -> ClusterListing {
    let flat = cut(&section.linkage, threshold);
    let clusters = (1..=flat.cluster_count())
        .map(|label| ClusterGroup {
            label,
            members: section
                .augmentations
                .iter()
                .zip(&flat.labels)
                .filter(|(_, &l)| l == label)
                .map(|(&a, _)| a)
                .collect(),
        })
        .collect();
    ClusterListing {
        threshold: threshold.is_finite().then_some(threshold),
        cluster_count: flat.cluster_count(),
        clusters,
        linkage: section.linkage.rows.clone(),
    }
}

pub fn clustering_of(report: &AnalysisReport) -> Result<&ClusteringSection> {
    report.clustering.as_ref().ok_or_else(|| {
        let reason = report.clustering_absent_reason.clone().unwrap_or_default();
        match report.augmentations.len() {
            n if n < 2 => CliError::Stats(StatsError::TooFewObservations(n)),
            _ => CliError::InvalidReport(format!("report has no clustering data: {reason}")),
        }
    })
}

pub fn section_labels(section: &ClusteringSection) -> Vec<String> {
    section.augmentations.iter().map(|a| a.name().to_string()).collect()
}

#[derive(Debug, Clone)]
pub struct ClusterOutput {
    pub listing: ClusterListing,
    pub listing_path: PathBuf,
    pub dendrogram_path: PathBuf,
}

/// `R.json` -> `R.clusters.json` and `R.dendrogram.json`, or the same names
/// inside `out_dir`.
pub fn cmd_cluster(report_path: &Path, threshold: f64, out_dir: Option<&Path>) -> Result<ClusterOutput> {
    validate_threshold(threshold)?;
    let report = read_report(report_path)?;
    let section = clustering_of(&report)?;
    let listing = cluster_listing(section, threshold);
    let layout = dendrogram_layout(&section.linkage, &section_labels(section));

    let stem = report_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    let dir = match out_dir {
        Some(d) => {
            std::fs::create_dir_all(d).map_err(|e| CliError::io(d, e))?;
            d.to_path_buf()
        }
        None => report_path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let listing_path = dir.join(format!("{stem}.clusters.json"));
    let dendrogram_path = dir.join(format!("{stem}.dendrogram.json"));
    write_json(&listing_path, &listing)?;
    write_json(&dendrogram_path, &layout)?;
    // A closed stdout (e.g. piped into `head`) is not an error.
    let mut out = std::io::stdout().lock();
    for group in &listing.clusters {
        let names: Vec<&str> = group.members.iter().map(|a| a.name()).collect();
        let _ = writeln!(out, "cluster {}: {}", group.label, names.join(", "));
    }
    Ok(ClusterOutput {
        listing,
        listing_path,
        dendrogram_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use shiftlens_core::stats::{average_linkage, CondensedDistances};

    fn line_tree() -> LinkageMatrix {
        // Points 0, 1, 10 on a line.
        average_linkage(&CondensedDistances::new(vec![1.0, 10.0, 9.0]).unwrap()).unwrap()
    }

    #[test]
    fn layout_matches_scipy_convention() {
        let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let layout = dendrogram_layout(&line_tree(), &labels);
        assert_eq!(layout.leaves, vec![2, 0, 1]);
        assert_eq!(layout.labels, vec!["c", "a", "b"]);
        assert_eq!(layout.links[0].icoord, [15.0, 15.0, 25.0, 25.0]);
        assert_eq!(layout.links[0].dcoord, [0.0, 1.0, 1.0, 0.0]);
        assert_eq!(layout.links[1].icoord, [5.0, 5.0, 20.0, 20.0]);
        assert_eq!(layout.links[1].dcoord, [0.0, 9.5, 9.5, 1.0]);
        assert_eq!(layout.max_height, 9.5);
    }

    #[test]
    fn infinite_threshold_is_one_cluster() {
        let z = line_tree();
        assert_eq!(cut(&z, f64::INFINITY).labels, vec![1, 1, 1]);
        assert_eq!(cut(&z, 0.0).labels, vec![1, 2, 3]);
        assert_eq!(cut(&z, 5.0).labels, vec![1, 1, 2]);
    }
}
