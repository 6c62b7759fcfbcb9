//! `shiftlens augment`: resize every image under a directory, apply the
//! augmentations and write PNGs plus a manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use shiftlens_core::augment::{augment_image_set, decode_image, encode_png, AugmentConfig};
use shiftlens_core::tensorio::{save_manifest, AugmentedRef, ImageEntry, RunManifest, TensorRefs};
use walkdir::WalkDir;

use crate::config::{with_pool, RunConfig};
use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ORIGINAL_DIR: &str = "original";

const EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceImage {
    pub path: PathBuf,
    /// Path relative to the input directory with `/` separators.
    pub relative: String,
    pub key: String,
}

#[derive(Debug, Clone)]
pub struct AugmentSummary {
    pub manifest_path: PathBuf,
    pub images: usize,
    pub skipped: Vec<(String, String)>,
}

fn has_image_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Key for a relative path: the extension is dropped, directory separators
/// become `__` and other unsafe characters `_`.
pub fn base_key(relative: &str) -> String {
    let stem = match relative.rsplit_once('.') {
        Some((stem, _)) if !stem.is_empty() && !stem.ends_with('/') => stem,
        _ => relative,
    };
    stem.split('/').map(sanitize).collect::<Vec<_>>().join("__")
}

/// Assigns unique keys in input order. A collision first appends the
/// lowercased extension, then a counter.
pub fn assign_keys(relatives: &[String]) -> Vec<String> {
    let mut used = BTreeSet::new();
    relatives
        .iter()
        .map(|rel| {
            let base = base_key(rel);
            let ext = rel
                .rsplit_once('.')
                .map(|(_, e)| e.to_ascii_lowercase())
                .unwrap_or_default();
            let mut key = base.clone();
            if used.contains(&key) {
                key = format!("{base}_{ext}");
            }
            let mut n = 2;
            while used.contains(&key) {
                key = format!("{base}_{ext}_{n}");
                n += 1;
            }
            used.insert(key.clone());
            key
        })
        .collect()
}

/// Image files under `input_dir`, recursively, sorted by relative path.
/// Anything inside `exclude` is skipped.
pub fn collect_images(input_dir: &Path, exclude: Option<&Path>) -> Result<Vec<SourceImage>> {
    let exclude = exclude.and_then(|p| fs::canonicalize(p).ok());
    let mut found = Vec::new();
    let walker = WalkDir::new(input_dir).follow_links(true).sort_by_file_name();
    let walker = walker.into_iter().filter_entry(|e| {
        exclude
            .as_ref()
            .is_none_or(|ex| fs::canonicalize(e.path()).map_or(true, |p| !p.starts_with(ex)))
    });
    for entry in walker {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(input_dir).to_path_buf();
            CliError::io(&path, e.into())
        })?;
        if !entry.file_type().is_file() || !has_image_extension(entry.path()) {
            continue;
        }
        let rel = entry.path().strip_prefix(input_dir).unwrap_or(entry.path());
        let relative = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        found.push((relative, entry.path().to_path_buf()));
    }
    found.sort();
    let keys = assign_keys(&found.iter().map(|(r, _)| r.clone()).collect::<Vec<_>>());
    Ok(found
        .into_iter()
        .zip(keys)
        .map(|((relative, path), key)| SourceImage { path, relative, key })
        .collect())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn process_one(src: &SourceImage, config: &AugmentConfig, output_dir: &Path) -> Result<ImageEntry> {
    let bytes = fs::read(&src.path).map_err(|e| CliError::io(&src.path, e))?;
    let img = decode_image(&bytes, &src.relative)?;
    let set = augment_image_set(&img, &src.key, config)?;
    let file = format!("{}.png", src.key);
    let mut augmentations = BTreeMap::new();
    for (dir, image) in set.entries() {
        write_file(&output_dir.join(dir).join(&file), &encode_png(image))?;
    }
    for (id, _) in &set.augmented {
        augmentations.insert(
            *id,
            AugmentedRef {
                image_path: format!("{}/{file}", id.name()),
                embedding_path: None,
                attention_path: None,
            },
        );
    }
    Ok(ImageEntry {
        image_key: src.key.clone(),
        source_path: Some(src.relative.clone()),
        original_image_path: format!("{ORIGINAL_DIR}/{file}"),
        original: TensorRefs::default(),
        augmentations,
    })
}

pub fn cmd_augment(config: &RunConfig) -> Result<AugmentSummary> {
    config.validate()?;
    if !config.input_dir.is_dir() {
        return Err(CliError::io(
            &config.input_dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "input directory not found"),
        ));
    }
    let sources = collect_images(&config.input_dir, Some(&config.output_dir))?;
    if sources.is_empty() {
        return Err(CliError::NoImagesFound(config.input_dir.display().to_string()));
    }
    info!("found {} candidate images", sources.len());

    let out = &config.output_dir;
    for dir in std::iter::once(ORIGINAL_DIR).chain(config.augmentations.iter().map(|a| a.name())) {
        let path = out.join(dir);
        fs::create_dir_all(&path).map_err(|e| CliError::io(&path, e))?;
    }
    let aug_config = AugmentConfig {
        global_seed: config.global_seed,
        size: (config.image_size, config.image_size),
        augmentations: config.augmentations.clone(),
    };
    let results: Vec<Result<ImageEntry>> = with_pool(config.workers, || {
        sources
            .par_iter()
            .map(|src| process_one(src, &aug_config, out))
            .collect()
    });

    let mut images = Vec::new();
    let mut skipped = Vec::new();
    for (src, result) in sources.iter().zip(results) {
        match result {
            Ok(entry) => images.push(entry),
            Err(e) => {
                warn!("skipping {}: {e}", src.relative);
                skipped.push((src.relative.clone(), e.to_string()));
            }
        }
    }
    if images.is_empty() {
        return Err(CliError::AllImagesFailed(sources.len()));
    }
    let _ = writeln!(std::io::stdout(), "Dataset size: {}", images.len());

    let manifest_path = out.join(MANIFEST_FILE);
    save_manifest(&manifest_path, &RunManifest::new(config.global_seed, images))?;
    let count = sources.len() - skipped.len();
    Ok(AugmentSummary {
        manifest_path,
        images: count,
        skipped,
    })
}
