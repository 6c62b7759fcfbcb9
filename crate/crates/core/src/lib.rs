//! Measures how image augmentations shift a vision encoder's representations.
//!
//! - [`imagecore`]: image containers, grayscale, gradients, edge maps, patch
//!   grids and bilinear resize.
//! - [`augment`]: the nine seeded augmentations.
//! - [`metrics`]: cosine similarity, L2 distance and the attention, patch,
//!   edge and detail similarities.
//! - [`stats`]: pairwise distances, average linkage, flat clusters, KDE and
//!   the aggregate table.
//! - [`tensorio`]: the binary tensor format and the run manifest.

pub mod augment;
pub mod imagecore;
pub mod metrics;
pub mod stats;
pub mod tensorio;

pub use augment::{AugParams, AugmentationId};
pub use imagecore::{GrayImage, ImageF, ImageU8};
pub use metrics::{AttentionMap, Embedding, Metric, MetricRecord};
