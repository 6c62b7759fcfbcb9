//! Binary tensor files and the JSON run manifest.
//!
//! # Tensor file layout
//!
//! All integers are little-endian.
//!
//! | offset | size      | field                                   |
//! |--------|-----------|-----------------------------------------|
//! | 0      | 4         | magic `b"STNS"`                         |
//! | 4      | 2         | version `u16` = 1                       |
//! | 6      | 1         | dtype `u8` (1 = `f32` IEEE-754)         |
//! | 7      | 1         | ndim `u8`, 1 or 2                       |
//! | 8      | 4 * ndim  | dims, `u32` each                        |
//! | ...    | 4 * numel | payload, row-major `f32`                |
//!
//! The header is `8 + 4 * ndim` bytes, so a 512-d embedding file is 2060
//! bytes and a 7x7 attention map 212 bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::AugmentationId;

pub const MAGIC: [u8; 4] = *b"STNS";
pub const FORMAT_VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 1;
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TensorIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {0:?}, expected \"STNS\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("unsupported rank {0}, expected 1 or 2")]
    UnsupportedRank(u8),
    #[error("file truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("{extra} unexpected bytes after the payload")]
    TrailingBytes { extra: usize },
    #[error("dims {dims:?} describe {expected} values but {found} were given")]
    ShapeMismatch {
        dims: Vec<u32>,
        expected: usize,
        found: usize,
    },
}

/// A decoded tensor file.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorData {
    pub dims: Vec<u32>,
    pub values: Vec<f32>,
    /// Count of NaN or infinite values; they are kept but logged.
    pub non_finite: usize,
}

fn numel(dims: &[u32]) -> usize {
    dims.iter().map(|&d| d as usize).product()
}

pub fn encode_tensor(values: &[f32], dims: &[u32]) -> Result<Vec<u8>, TensorIoError> {
    if !(1..=2).contains(&dims.len()) {
        return Err(TensorIoError::UnsupportedRank(dims.len().min(255) as u8));
    }
    if numel(dims) != values.len() {
        return Err(TensorIoError::ShapeMismatch {
            dims: dims.to_vec(),
            expected: numel(dims),
            found: values.len(),
        });
    }
    let mut out = Vec::with_capacity(8 + 4 * dims.len() + 4 * values.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(DTYPE_F32);
    out.push(dims.len() as u8);
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<TensorData, TensorIoError> {
    let truncated = |expected: usize| TensorIoError::TruncatedPayload {
        expected,
        found: bytes.len(),
    };
    if bytes.len() < 8 {
        return Err(truncated(8));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("4-byte slice");
    if magic != MAGIC {
        return Err(TensorIoError::BadMagic(magic));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(TensorIoError::UnsupportedVersion(version));
    }
    if bytes[6] != DTYPE_F32 {
        return Err(TensorIoError::UnsupportedDtype(bytes[6]));
    }
    let ndim = bytes[7];
    if !(1..=2).contains(&ndim) {
        return Err(TensorIoError::UnsupportedRank(ndim));
    }
    let header = 8 + 4 * ndim as usize;
    if bytes.len() < header {
        return Err(truncated(header));
    }
    let dims: Vec<u32> = bytes[8..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    let expected = header + 4 * numel(&dims);
    if bytes.len() < expected {
        return Err(truncated(expected));
    }
    if bytes.len() > expected {
        return Err(TensorIoError::TrailingBytes {
            extra: bytes.len() - expected,
        });
    }
    let values: Vec<f32> = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    let non_finite = values.iter().filter(|v| !v.is_finite()).count();
    Ok(TensorData {
        dims,
        values,
        non_finite,
    })
}

pub fn write_tensor(path: &Path, values: &[f32], dims: &[u32]) -> Result<(), TensorIoError> {
    let bytes = encode_tensor(values, dims)?;
    fs::write(path, bytes).map_err(|source| TensorIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_tensor(path: &Path) -> Result<TensorData, TensorIoError> {
    let bytes = fs::read(path).map_err(|source| TensorIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let data = decode_tensor(&bytes)?;
    if data.non_finite > 0 {
        log::warn!("{}: {} non-finite values", path.display(), data.non_finite);
    }
    Ok(data)
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("manifest references missing files: {}", .paths.join(", "))]
    MissingFile { paths: Vec<String> },
}

impl ManifestError {
    fn schema(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Schema {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}

/// Optional tensors attached to the original image.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorRefs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedRef {
    pub image_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub image_key: String,
    /// Input file the entry was produced from, informational only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_path: Option<String>,
    pub original_image_path: String,
    #[serde(default)]
    pub original: TensorRefs,
    pub augmentations: BTreeMap<AugmentationId, AugmentedRef>,
}

impl ImageEntry {
    fn paths(&self) -> impl Iterator<Item = &str> {
        let original = [
            Some(self.original_image_path.as_str()),
            self.original.embedding_path.as_deref(),
            self.original.attention_path.as_deref(),
        ];
        let augmented = self.augmentations.values().flat_map(|a| {
            [
                Some(a.image_path.as_str()),
                a.embedding_path.as_deref(),
                a.attention_path.as_deref(),
            ]
        });
        original.into_iter().chain(augmented).flatten()
    }
}

/// Relative paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub global_seed: u64,
    pub images: Vec<ImageEntry>,
}

impl RunManifest {
    pub fn new(global_seed: u64, images: Vec<ImageEntry>) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            global_seed,
            images,
        }
    }

    /// Augmentations shared by every entry.
    pub fn augmentations(&self) -> Vec<AugmentationId> {
        self.images
            .first()
            .map(|e| e.augmentations.keys().copied().collect())
            .unwrap_or_default()
    }

    /// Checks version, key uniqueness and augmentation-set consistency.
    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(ManifestError::schema(
                "/schema_version",
                format!("unsupported version {}", self.schema_version),
            ));
        }
        let mut keys = BTreeSet::new();
        let mut reference: Option<BTreeSet<AugmentationId>> = None;
        for (i, entry) in self.images.iter().enumerate() {
            if entry.image_key.is_empty() {
                return Err(ManifestError::schema(
                    format!("/images/{i}/image_key"),
                    "empty image key",
                ));
            }
            if !keys.insert(entry.image_key.as_str()) {
                return Err(ManifestError::schema(
                    format!("/images/{i}/image_key"),
                    format!("duplicate image key '{}'", entry.image_key),
                ));
            }
            let set: BTreeSet<AugmentationId> = entry.augmentations.keys().copied().collect();
            match &reference {
                None => reference = Some(set),
                Some(r) if *r != set => {
                    return Err(ManifestError::schema(
                        format!("/images/{i}/augmentations"),
                        format!(
                            "augmentation set {:?} differs from the first entry's {:?}",
                            set.iter().map(|a| a.name()).collect::<Vec<_>>(),
                            r.iter().map(|a| a.name()).collect::<Vec<_>>()
                        ),
                    ));
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Every referenced path that does not exist under `base_dir`.
    pub fn missing_files(&self, base_dir: &Path) -> Vec<String> {
        self.images
            .iter()
            .flat_map(ImageEntry::paths)
            .filter(|p| !resolve_path(base_dir, p).exists())
            .map(str::to_string)
            .collect()
    }
}

pub fn resolve_path(base_dir: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        // An unparseable map key leaves an unknown segment; the pointer then
        // names the enclosing map.
        let part = match seg {
            Segment::Seq { index } => index.to_string(),
            Segment::Map { key } => key.replace('~', "~0").replace('/', "~1"),
            Segment::Enum { variant } => variant.clone(),
            Segment::Unknown => continue,
        };
        out.push('/');
        out.push_str(&part);
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

/// Parses and validates manifest text without touching the filesystem.
pub fn parse_manifest(text: &str) -> Result<RunManifest, ManifestError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let manifest: RunManifest = serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = json_pointer(e.path());
        ManifestError::schema(pointer, e.into_inner().to_string())
    })?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn manifest_to_string(manifest: &RunManifest) -> String {
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    text
}

/// Parses, validates and checks that every referenced file exists.
pub fn load_manifest(path: &Path) -> Result<RunManifest, ManifestError> {
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let manifest = parse_manifest(&text)?;
    let missing = manifest.missing_files(&manifest_dir(path));
    if !missing.is_empty() {
        return Err(ManifestError::MissingFile { paths: missing });
    }
    Ok(manifest)
}

pub fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Writes through a temporary sibling file and renames it into place.
pub fn save_manifest(path: &Path, manifest: &RunManifest) -> Result<(), ManifestError> {
    manifest.validate()?;
    let io_err = |source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut tmp_name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let mut file = fs::File::create(&tmp).map_err(io_err)?;
    file.write_all(manifest_to_string(manifest).as_bytes())
        .map_err(io_err)?;
    file.sync_all().map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(key: &str, augs: &[AugmentationId]) -> ImageEntry {
        ImageEntry {
            image_key: key.to_string(),
            source_path: None,
            original_image_path: format!("original/{key}.png"),
            original: TensorRefs::default(),
            augmentations: augs
                .iter()
                .map(|&a| {
                    (
                        a,
                        AugmentedRef {
                            image_path: format!("{a}/{key}.png"),
                            embedding_path: None,
                            attention_path: None,
                        },
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn header_sizes() {
        assert_eq!(encode_tensor(&[1.0], &[1]).unwrap().len(), 16);
        assert_eq!(encode_tensor(&[0.0; 49], &[7, 7]).unwrap().len(), 212);
        assert_eq!(encode_tensor(&[0.0; 512], &[512]).unwrap().len(), 2060);
    }

    #[test]
    fn exact_bytes() {
        let bytes = encode_tensor(&[1.0, -2.5], &[2]).unwrap();
        let mut expected = b"STNS".to_vec();
        expected.extend_from_slice(&[1, 0, 1, 1, 2, 0, 0, 0]);
        expected.extend_from_slice(&[0x00, 0x00, 0x80, 0x3f]);
        expected.extend_from_slice(&[0x00, 0x00, 0x20, 0xc0]);
        assert_eq!(bytes, expected);
    }

    #[test]
    fn header_validation() {
        let good = encode_tensor(&[1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let mut bad = good.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_tensor(&bad), Err(TensorIoError::BadMagic(m)) if &m == b"XXXX"));
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(decode_tensor(&bad), Err(TensorIoError::UnsupportedVersion(2))));
        let mut bad = good.clone();
        bad[6] = 7;
        assert!(matches!(decode_tensor(&bad), Err(TensorIoError::UnsupportedDtype(7))));
        let mut bad = good.clone();
        bad[7] = 3;
        assert!(matches!(decode_tensor(&bad), Err(TensorIoError::UnsupportedRank(3))));
        assert!(matches!(
            decode_tensor(&good[..good.len() - 1]),
            Err(TensorIoError::TruncatedPayload {
                expected: 32,
                found: 31
            })
        ));
        assert!(matches!(
            decode_tensor(&good[..5]),
            Err(TensorIoError::TruncatedPayload { .. })
        ));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(
            decode_tensor(&long),
            Err(TensorIoError::TrailingBytes { extra: 1 })
        ));
    }

    #[test]
    fn write_rejects_inconsistent_dims() {
        assert!(matches!(
            encode_tensor(&[1.0; 3], &[2, 2]),
            Err(TensorIoError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            encode_tensor(&[1.0; 8], &[2, 2, 2]),
            Err(TensorIoError::UnsupportedRank(3))
        ));
    }

    #[test]
    fn non_finite_values_are_counted() {
        let data = decode_tensor(&encode_tensor(&[f32::NAN, 1.0, f32::INFINITY], &[3]).unwrap()).unwrap();
        assert_eq!(data.non_finite, 2);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        write_tensor(&path, &[0.5; 49], &[7, 7]).unwrap();
        let data = read_tensor(&path).unwrap();
        assert_eq!(data.dims, vec![7, 7]);
        assert_eq!(data.values, vec![0.5; 49]);
        assert!(matches!(
            read_tensor(&dir.path().join("nope")),
            Err(TensorIoError::Io { .. })
        ));
    }

    #[test]
    fn manifest_without_tensors_is_valid() {
        let m = RunManifest::new(1, vec![entry("a", &AugmentationId::ALL)]);
        let text = manifest_to_string(&m);
        assert!(!text.contains("embedding_path"));
        assert_eq!(parse_manifest(&text).unwrap(), m);
    }

    #[test]
    fn manifest_rejects_inconsistent_sets() {
        let m = RunManifest::new(
            1,
            vec![entry("a", &AugmentationId::ALL), entry("b", &AugmentationId::ALL[..8])],
        );
        match parse_manifest(&manifest_to_string(&m)) {
            Err(ManifestError::Schema { pointer, .. }) => assert_eq!(pointer, "/images/1/augmentations"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn manifest_rejects_duplicate_keys() {
        let m = RunManifest::new(1, vec![entry("a", &[]), entry("a", &[])]);
        assert!(matches!(
            parse_manifest(&manifest_to_string(&m)),
            Err(ManifestError::Schema { .. })
        ));
    }

    #[test]
    fn schema_errors_carry_pointer() {
        let text = r#"{"schema_version": 1, "global_seed": 3, "images": [
            {"image_key": "a", "original_image_path": "o.png",
             "augmentations": {"Sepia": {"image_path": "x.png"}}}]}"#;
        match parse_manifest(text) {
            Err(ManifestError::Schema { pointer, .. }) => {
                assert_eq!(pointer, "/images/0/augmentations")
            }
            other => panic!("{other:?}"),
        }
        let text = r#"{"schema_version": 1, "global_seed": "x", "images": []}"#;
        match parse_manifest(text) {
            Err(ManifestError::Schema { pointer, .. }) => assert_eq!(pointer, "/global_seed"),
            other => panic!("{other:?}"),
        }
        let text = r#"{"schema_version": 9, "global_seed": 1, "images": []}"#;
        assert!(matches!(parse_manifest(text), Err(ManifestError::Schema { .. })));
    }

    #[test]
    fn save_load_round_trip_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new(42, vec![entry("a", &[AugmentationId::HorizontalFlip])]);
        m.images[0].original.embedding_path = Some("original/a.emb".into());
        let path = dir.path().join("manifest.json");
        save_manifest(&path, &m).unwrap();
        match load_manifest(&path) {
            Err(ManifestError::MissingFile { paths }) => assert_eq!(paths.len(), 3),
            other => panic!("{other:?}"),
        }
        for p in ["original/a.png", "original/a.emb", "HorizontalFlip/a.png"] {
            let full = dir.path().join(p);
            fs::create_dir_all(full.parent().unwrap()).unwrap();
            fs::write(full, b"").unwrap();
        }
        assert_eq!(load_manifest(&path).unwrap(), m);
        assert!(!dir.path().join("manifest.json.tmp").exists());
    }

    proptest! {
        #[test]
        fn tensor_round_trip(values in prop::collection::vec(any::<f32>(), 1..64), split in 1usize..8) {
            let dims: Vec<u32> = if values.len() % split == 0 {
                vec![split as u32, (values.len() / split) as u32]
            } else {
                vec![values.len() as u32]
            };
            let back = decode_tensor(&encode_tensor(&values, &dims).unwrap()).unwrap();
            prop_assert_eq!(back.dims, dims);
            let bits: Vec<u32> = values.iter().map(|v| v.to_bits()).collect();
            let back_bits: Vec<u32> = back.values.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(back_bits, bits);
        }
    }
}
