use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use shiftlens_core::augment::{AugmentationId, DEFAULT_IMAGE_SIZE};
use shiftlens_core::metrics::DEFAULT_PATCH_GRID;

use crate::error::{CliError, Result};

pub const MIN_IMAGE_SIZE: usize = 32;
pub const DEFAULT_SAMPLE_ROWS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "svg" => Ok(Self::Svg),
            other => Err(format!("unknown report format '{other}' (expected csv, json or svg)")),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Json => "json",
            Self::Svg => "svg",
        })
    }
}

/// Parses a comma-separated list; duplicates are dropped and order is fixed.
pub fn parse_formats(list: &str) -> Result<Vec<ReportFormat>> {
    let mut out = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse().map_err(CliError::Usage))
        .collect::<Result<Vec<ReportFormat>>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(CliError::Usage("--formats needs at least one format".into()));
    }
    Ok(out)
}

/// Parses a comma-separated list of augmentation names into canonical order.
pub fn parse_augmentations(list: &str) -> Result<Vec<AugmentationId>> {
    let mut out = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|e: shiftlens_core::augment::UnknownAugmentation| CliError::Usage(e.to_string()))
        })
        .collect::<Result<Vec<AugmentationId>>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(CliError::Usage("--augmentations needs at least one name".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input_dir: PathBuf,
    pub output_dir: PathBuf,
    pub global_seed: u64,
    pub image_size: usize,
    pub augmentations: Vec<AugmentationId>,
    pub grid: usize,
    pub threshold: Option<f64>,
    pub formats: Vec<ReportFormat>,
    /// `None` uses rayon's default pool size.
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn new(input_dir: PathBuf, output_dir: PathBuf, global_seed: u64) -> Self {
        Self {
            input_dir,
            output_dir,
            global_seed,
            image_size: DEFAULT_IMAGE_SIZE,
            augmentations: AugmentationId::ALL.to_vec(),
            grid: DEFAULT_PATCH_GRID,
            threshold: None,
            formats: vec![ReportFormat::Csv, ReportFormat::Json, ReportFormat::Svg],
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size < MIN_IMAGE_SIZE {
            return Err(CliError::Usage(format!(
                "--size must be at least {MIN_IMAGE_SIZE}, got {}",
                self.image_size
            )));
        }
        validate_grid(self.grid)?;
        if let Some(t) = self.threshold {
            validate_threshold(t)?;
        }
        validate_workers(self.workers)?;
        if self.augmentations.is_empty() {
            return Err(CliError::Usage("at least one augmentation is required".into()));
        }
        Ok(())
    }
}

pub fn validate_grid(grid: usize) -> Result<()> {
    if grid == 0 {
        return Err(CliError::Usage("--grid must be at least 1".into()));
    }
    Ok(())
}

pub fn validate_threshold(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return Err(CliError::Usage(format!("--threshold must be >= 0, got {t}")));
    }
    Ok(())
}

pub fn validate_workers(workers: Option<usize>) -> Result<()> {
    if workers == Some(0) {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    Ok(())
}

/// Runs `f` inside a pool of `workers` threads, or the global pool.
pub fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}
