//! Embedding sources for `analyze`.
//!
//! The synthetic provider is a stand-in for a vision model so the pipeline
//! runs without external dependencies: grayscale, box-average to 8x8, flatten
//! to 64 values and L2-normalize. It is not a CLIP embedding.

use shiftlens_core::imagecore::{to_grayscale, ImageU8};
use shiftlens_core::metrics::{Embedding, MetricError};

pub const SYNTHETIC_SIDE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedderKind {
    /// Tensors referenced by the manifest, when present.
    Manifest,
    Synthetic,
}

impl EmbedderKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Manifest => "manifest",
            Self::Synthetic => "synthetic",
        }
    }
}

impl std::str::FromStr for EmbedderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "manifest" => Ok(Self::Manifest),
            "synthetic" => Ok(Self::Synthetic),
            other => Err(format!("unknown embedder '{other}' (expected manifest or synthetic)")),
        }
    }
}

/// Box-averaged 8x8 grayscale thumbnail, L2-normalized. Cell `(i, j)` covers
/// rows `[i*h/8, (i+1)*h/8)` and the matching columns. An all-black image
/// yields the zero vector.
pub fn synthetic_embedding(img: &ImageU8) -> Result<Embedding, MetricError> {
    let (h, w) = (img.height(), img.width());
    if h < SYNTHETIC_SIDE || w < SYNTHETIC_SIDE {
        return Err(MetricError::InvalidEmbedding(format!(
            "synthetic embedder needs at least {SYNTHETIC_SIDE}x{SYNTHETIC_SIDE} pixels, got {h}x{w}"
        )));
    }
    let gray = to_grayscale(&img.to_float());
    let mut values = Vec::with_capacity(SYNTHETIC_SIDE * SYNTHETIC_SIDE);
    for i in 0..SYNTHETIC_SIDE {
        let (r0, r1) = (i * h / SYNTHETIC_SIDE, (i + 1) * h / SYNTHETIC_SIDE);
        for j in 0..SYNTHETIC_SIDE {
            let (c0, c1) = (j * w / SYNTHETIC_SIDE, (j + 1) * w / SYNTHETIC_SIDE);
            let mut sum = 0.0;
            for r in r0..r1 {
                for c in c0..c1 {
                    sum += gray.get(r, c);
                }
            }
            values.push(sum / ((r1 - r0) * (c1 - c0)) as f64);
        }
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut values {
            *v /= norm;
        }
    }
    Embedding::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_gives_uniform_unit_vector() {
        let img = ImageU8::filled(32, 40, [200, 200, 200]).unwrap();
        let e = synthetic_embedding(&img).unwrap();
        assert_eq!(e.dim(), 64);
        assert!((e.norm() - 1.0).abs() < 1e-12);
        for v in e.values() {
            assert!((v - 0.125).abs() < 1e-12);
        }
    }

    #[test]
    fn cells_are_box_averages() {
        // Left half white, right half black.
        let img = ImageU8::from_fn(16, 16, |_, c| if c < 8 { [255; 3] } else { [0; 3] }).unwrap();
        let e = synthetic_embedding(&img).unwrap();
        let expected = 1.0 / 32f64.sqrt();
        for i in 0..8 {
            for j in 0..8 {
                let want = if j < 4 { expected } else { 0.0 };
                assert!((e.values()[i * 8 + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn black_image_is_zero_and_tiny_images_fail() {
        let e = synthetic_embedding(&ImageU8::filled(8, 8, [0; 3]).unwrap()).unwrap();
        assert!(e.values().iter().all(|&v| v == 0.0));
        assert!(synthetic_embedding(&ImageU8::filled(7, 8, [1; 3]).unwrap()).is_err());
    }
}
