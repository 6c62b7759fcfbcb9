//! The nine augmentations, their parameter ranges and seeded sampling.
//!
//! Every augmentation is split into two pure steps: [`sample_params`] draws
//! the random parameters from a per-task seed, and [`apply_augmentation`]
//! applies them. Pixel-level randomness (noise values, the elastic
//! displacement field, dropout fill) is driven by a secondary seed carried
//! inside [`AugParams`], so `apply_augmentation` is a deterministic function
//! of its inputs.
//!
//! # Seeding
//!
//! A task seed is the first eight bytes (little-endian) of
//! `SHA-256(global_seed_le || len(key)_le || key || len(name)_le || name)`,
//! where lengths are `u64`. It seeds a `ChaCha8Rng` via `seed_from_u64`.
//! Because the seed depends only on the triple, results do not depend on
//! scheduling or on how many workers process the images.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::imagecore::{resize_bilinear, to_grayscale, ImageError, ImageF, ImageU8};

pub const NOISE_STD_RANGE: (f64, f64) = (0.44, 0.88);
pub const BLUR_KERNELS: [usize; 3] = [3, 5, 7];
pub const JITTER_LIMIT: f64 = 0.2;
pub const SHIFT_LIMIT: f64 = 0.0625;
pub const SCALE_LIMIT: f64 = 0.1;
pub const ROTATE_LIMIT_DEG: f64 = 15.0;
pub const ELASTIC_ALPHA: f64 = 30.0;
pub const ELASTIC_SIGMA: f64 = 60.0;
pub const PERSPECTIVE_SCALE_RANGE: (f64, f64) = (0.05, 0.1);
pub const BRIGHTNESS_CONTRAST_LIMIT: f64 = 0.2;
pub const DROPOUT_HOLES: (usize, usize) = (6, 8);
pub const DROPOUT_HOLE_SIZE: usize = 16;
pub const DEFAULT_IMAGE_SIZE: usize = 224;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("{height}x{width} image cannot hold a {hole}x{hole} dropout hole")]
    ImageTooSmall { height: usize, width: usize, hole: usize },
    #[error("parameters for {found} passed to {expected}")]
    ParamMismatch {
        expected: AugmentationId,
        found: AugmentationId,
    },
    #[error("perspective corners are degenerate for a {height}x{width} image")]
    DegenerateHomography { height: usize, width: usize },
    #[error("cannot decode {path}: {message}")]
    Decode { path: String, message: String },
    #[error(transparent)]
    Image(#[from] ImageError),
}

pub type Result<T> = std::result::Result<T, AugmentError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AugmentationId {
    GaussNoise,
    GaussianBlur,
    ColorJitter,
    ShiftScaleRotate,
    HorizontalFlip,
    ElasticTransform,
    Perspective,
    RandomBrightnessContrast,
    CoarseDropout,
}

impl AugmentationId {
    pub const ALL: [AugmentationId; 9] = [
        Self::GaussNoise,
        Self::GaussianBlur,
        Self::ColorJitter,
        Self::ShiftScaleRotate,
        Self::HorizontalFlip,
        Self::ElasticTransform,
        Self::Perspective,
        Self::RandomBrightnessContrast,
        Self::CoarseDropout,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::GaussNoise => "GaussNoise",
            Self::GaussianBlur => "GaussianBlur",
            Self::ColorJitter => "ColorJitter",
            Self::ShiftScaleRotate => "ShiftScaleRotate",
            Self::HorizontalFlip => "HorizontalFlip",
            Self::ElasticTransform => "ElasticTransform",
            Self::Perspective => "Perspective",
            Self::RandomBrightnessContrast => "RandomBrightnessContrast",
            Self::CoarseDropout => "CoarseDropout",
        }
    }
}

impl fmt::Display for AugmentationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown augmentation '{0}'")]
pub struct UnknownAugmentation(pub String);

impl FromStr for AugmentationId {
    type Err = UnknownAugmentation;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| UnknownAugmentation(s.to_string()))
    }
}

/// Sampled parameters, one variant per augmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AugParams {
    GaussNoise {
        std: f64,
        noise_seed: u64,
    },
    GaussianBlur {
        kernel: usize,
    },
    /// Brightness, contrast and saturation are multiplicative factors; hue is
    /// a shift in turns of the hue circle.
    ColorJitter {
        brightness: f64,
        contrast: f64,
        saturation: f64,
        hue: f64,
    },
    /// Shifts are fractions of width/height, angle in degrees
    /// (counter-clockwise as displayed).
    ShiftScaleRotate {
        shift_x: f64,
        shift_y: f64,
        scale: f64,
        angle: f64,
    },
    HorizontalFlip,
    ElasticTransform {
        alpha: f64,
        sigma: f64,
        field_seed: u64,
    },
    /// `offsets[k] = (dx, dy)` in pixels for corners top-left, top-right,
    /// bottom-right, bottom-left.
    Perspective {
        corner_scale: f64,
        offsets: [(f64, f64); 4],
    },
    RandomBrightnessContrast {
        brightness_delta: f64,
        contrast_delta: f64,
    },
    /// Top-left `(row, col)` corners of square holes.
    CoarseDropout {
        hole_size: usize,
        holes: Vec<(usize, usize)>,
        fill_seed: u64,
    },
}

impl AugParams {
    pub fn id(&self) -> AugmentationId {
        match self {
            Self::GaussNoise { .. } => AugmentationId::GaussNoise,
            Self::GaussianBlur { .. } => AugmentationId::GaussianBlur,
            Self::ColorJitter { .. } => AugmentationId::ColorJitter,
            Self::ShiftScaleRotate { .. } => AugmentationId::ShiftScaleRotate,
            Self::HorizontalFlip => AugmentationId::HorizontalFlip,
            Self::ElasticTransform { .. } => AugmentationId::ElasticTransform,
            Self::Perspective { .. } => AugmentationId::Perspective,
            Self::RandomBrightnessContrast { .. } => AugmentationId::RandomBrightnessContrast,
            Self::CoarseDropout { .. } => AugmentationId::CoarseDropout,
        }
    }
}

/// Per-task seed for `(global_seed, image_key, augmentation_name)`.
pub fn task_seed(global_seed: u64, image_key: &str, augmentation_name: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global_seed.to_le_bytes());
    hasher.update((image_key.len() as u64).to_le_bytes());
    hasher.update(image_key.as_bytes());
    hasher.update((augmentation_name.len() as u64).to_le_bytes());
    hasher.update(augmentation_name.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn task_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn symmetric(rng: &mut ChaCha8Rng, limit: f64) -> f64 {
    rng.random_range(-limit..=limit)
}

/// Draws the parameters of `id` for an image of `height x width`.
pub fn sample_params(id: AugmentationId, seed: u64, height: usize, width: usize) -> Result<AugParams> {
    let mut rng = task_rng(seed);
    let params = match id {
        AugmentationId::GaussNoise => AugParams::GaussNoise {
            std: rng.random_range(NOISE_STD_RANGE.0..=NOISE_STD_RANGE.1),
            noise_seed: rng.random(),
        },
        AugmentationId::GaussianBlur => AugParams::GaussianBlur {
            kernel: BLUR_KERNELS[rng.random_range(0..BLUR_KERNELS.len())],
        },
        AugmentationId::ColorJitter => AugParams::ColorJitter {
            brightness: 1.0 + symmetric(&mut rng, JITTER_LIMIT),
            contrast: 1.0 + symmetric(&mut rng, JITTER_LIMIT),
            saturation: 1.0 + symmetric(&mut rng, JITTER_LIMIT),
            hue: symmetric(&mut rng, JITTER_LIMIT),
        },
        AugmentationId::ShiftScaleRotate => AugParams::ShiftScaleRotate {
            shift_x: symmetric(&mut rng, SHIFT_LIMIT),
            shift_y: symmetric(&mut rng, SHIFT_LIMIT),
            scale: 1.0 + symmetric(&mut rng, SCALE_LIMIT),
            angle: symmetric(&mut rng, ROTATE_LIMIT_DEG),
        },
        AugmentationId::HorizontalFlip => AugParams::HorizontalFlip,
        AugmentationId::ElasticTransform => AugParams::ElasticTransform {
            alpha: ELASTIC_ALPHA,
            sigma: ELASTIC_SIGMA,
            field_seed: rng.random(),
        },
        AugmentationId::Perspective => {
            let s = rng.random_range(PERSPECTIVE_SCALE_RANGE.0..=PERSPECTIVE_SCALE_RANGE.1);
            let mut offsets = [(0.0, 0.0); 4];
            for o in &mut offsets {
                let dx = symmetric(&mut rng, s) * width as f64;
                let dy = symmetric(&mut rng, s) * height as f64;
                *o = (dx, dy);
            }
            AugParams::Perspective {
                corner_scale: s,
                offsets,
            }
        }
        AugmentationId::RandomBrightnessContrast => AugParams::RandomBrightnessContrast {
            brightness_delta: symmetric(&mut rng, BRIGHTNESS_CONTRAST_LIMIT),
            contrast_delta: symmetric(&mut rng, BRIGHTNESS_CONTRAST_LIMIT),
        },
        AugmentationId::CoarseDropout => {
            let hole = DROPOUT_HOLE_SIZE;
            if height < hole || width < hole {
                return Err(AugmentError::ImageTooSmall { height, width, hole });
            }
            let count = rng.random_range(DROPOUT_HOLES.0..=DROPOUT_HOLES.1);
            let holes = (0..count)
                .map(|_| (rng.random_range(0..=height - hole), rng.random_range(0..=width - hole)))
                .collect();
            AugParams::CoarseDropout {
                hole_size: hole,
                holes,
                fill_seed: rng.random(),
            }
        }
    };
    Ok(params)
}

pub fn apply_augmentation(id: AugmentationId, img: &ImageF, params: &AugParams) -> Result<ImageF> {
    if params.id() != id {
        return Err(AugmentError::ParamMismatch {
            expected: id,
            found: params.id(),
        });
    }
    let out = match *params {
        AugParams::GaussNoise { std, noise_seed } => gauss_noise(img, std, noise_seed),
        AugParams::GaussianBlur { kernel } => gaussian_blur(img, kernel),
        AugParams::ColorJitter {
            brightness,
            contrast,
            saturation,
            hue,
        } => color_jitter(img, brightness, contrast, saturation, hue),
        AugParams::ShiftScaleRotate {
            shift_x,
            shift_y,
            scale,
            angle,
        } => shift_scale_rotate(img, shift_x, shift_y, scale, angle),
        AugParams::HorizontalFlip => horizontal_flip(img),
        AugParams::ElasticTransform {
            alpha,
            sigma,
            field_seed,
        } => elastic_transform(img, alpha, sigma, field_seed),
        AugParams::Perspective { offsets, .. } => perspective(img, &offsets)?,
        AugParams::RandomBrightnessContrast {
            brightness_delta,
            contrast_delta,
        } => brightness_contrast(img, brightness_delta, contrast_delta),
        AugParams::CoarseDropout {
            hole_size,
            ref holes,
            fill_seed,
        } => coarse_dropout(img, hole_size, holes, fill_seed)?,
    };
    Ok(out)
}

fn gauss_noise(img: &ImageF, std: f64, noise_seed: u64) -> ImageF {
    let mut rng = task_rng(noise_seed);
    let data = img
        .data()
        .iter()
        .map(|&v| {
            let z: f64 = rng.sample(StandardNormal);
            v + std * z
        })
        .collect();
    ImageF::from_clamped(img.height(), img.width(), data)
}

/// Reflect-101 border: `dcb|abcd|cba`.
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Normalized Gaussian taps for offsets `-radius..=radius`.
pub(crate) fn gaussian_kernel(radius: usize, sigma: f64) -> Vec<f64> {
    let r = radius as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable convolution of an interleaved raster with reflect-101 borders.
pub(crate) fn convolve_separable(
    data: &[f64],
    height: usize,
    width: usize,
    channels: usize,
    kernel: &[f64],
) -> Vec<f64> {
    let radius = (kernel.len() / 2) as isize;
    let mut horizontal = vec![0.0; data.len()];
    for row in 0..height {
        for col in 0..width {
            for c in 0..channels {
                let mut acc = 0.0;
                for (k, w) in kernel.iter().enumerate() {
                    let src = reflect_index(col as isize + k as isize - radius, width);
                    acc += w * data[(row * width + src) * channels + c];
                }
                horizontal[(row * width + col) * channels + c] = acc;
            }
        }
    }
    let mut out = vec![0.0; data.len()];
    for row in 0..height {
        for col in 0..width {
            for c in 0..channels {
                let mut acc = 0.0;
                for (k, w) in kernel.iter().enumerate() {
                    let src = reflect_index(row as isize + k as isize - radius, height);
                    acc += w * horizontal[(src * width + col) * channels + c];
                }
                out[(row * width + col) * channels + c] = acc;
            }
        }
    }
    out
}

pub fn blur_sigma(kernel: usize) -> f64 {
    0.3 * ((kernel as f64 - 1.0) * 0.5 - 1.0) + 0.8
}

fn gaussian_blur(img: &ImageF, kernel: usize) -> ImageF {
    let taps = gaussian_kernel(kernel / 2, blur_sigma(kernel));
    let mut data = convolve_separable(img.data(), img.height(), img.width(), 3, &taps);
    // Rounding can push a convex combination an ulp outside the channel's
    // input range.
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for px in img.data().chunks_exact(3) {
        for c in 0..3 {
            lo[c] = lo[c].min(px[c]);
            hi[c] = hi[c].max(px[c]);
        }
    }
    for px in data.chunks_exact_mut(3) {
        for c in 0..3 {
            px[c] = px[c].clamp(lo[c], hi[c]);
        }
    }
    ImageF::from_clamped(img.height(), img.width(), data)
}

fn color_jitter(img: &ImageF, brightness: f64, contrast: f64, saturation: f64, hue: f64) -> ImageF {
    let (h, w) = (img.height(), img.width());
    let mut cur = img.clone();
    for v in cur.data_mut() {
        *v = (*v * brightness).clamp(0.0, 1.0);
    }

    let gray = to_grayscale(&cur);
    let mean = gray.as_plane().data().iter().sum::<f64>() / (h * w) as f64;
    for v in cur.data_mut() {
        *v = (mean + contrast * (*v - mean)).clamp(0.0, 1.0);
    }

    let gray = to_grayscale(&cur);
    for (px, g) in cur.data_mut().chunks_exact_mut(3).zip(gray.as_plane().data()) {
        for v in px {
            *v = (g + saturation * (*v - g)).clamp(0.0, 1.0);
        }
    }

    for px in cur.data_mut().chunks_exact_mut(3) {
        let (hh, s, v) = rgb_to_hsv(px[0], px[1], px[2]);
        let (r, g, b) = hsv_to_rgb((hh + hue).rem_euclid(1.0), s, v);
        px[0] = r.clamp(0.0, 1.0);
        px[1] = g.clamp(0.0, 1.0);
        px[2] = b.clamp(0.0, 1.0);
    }
    cur
}

/// Hue in turns `[0, 1)`.
fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let hue = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let sat = if max == 0.0 { 0.0 } else { delta / max };
    (hue, sat, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = (h * 6.0).rem_euclid(6.0);
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as u8 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Bilinear sample at `(y, x)` with reflect-101 extension.
fn sample_bilinear(img: &ImageF, y: f64, x: f64) -> [f64; 3] {
    let (h, w) = (img.height(), img.width());
    let (y, x) = (finite_or(y, 0.0), finite_or(x, 0.0));
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let (y0, x0) = (y0 as isize, x0 as isize);
    let r0 = reflect_index(y0, h);
    let r1 = reflect_index(y0.saturating_add(1), h);
    let c0 = reflect_index(x0, w);
    let c1 = reflect_index(x0.saturating_add(1), w);
    let p00 = img.pixel(r0, c0);
    let p01 = img.pixel(r0, c1);
    let p10 = img.pixel(r1, c0);
    let p11 = img.pixel(r1, c1);
    let mut out = [0.0; 3];
    for c in 0..3 {
        // Lerp form keeps constant neighbourhoods exactly constant.
        let top = p00[c] + fx * (p01[c] - p00[c]);
        let bottom = p10[c] + fx * (p11[c] - p10[c]);
        out[c] = top + fy * (bottom - top);
    }
    out
}

fn finite_or(v: f64, fallback: f64) -> f64 {
    if v.is_finite() {
        v.clamp(-1e9, 1e9)
    } else {
        fallback
    }
}

/// Resamples `img`: output pixel `(row, col)` takes the value at the source
/// position returned by `map(row, col) -> (y, x)`.
fn remap(img: &ImageF, map: impl Fn(usize, usize) -> (f64, f64)) -> ImageF {
    let (h, w) = (img.height(), img.width());
    let mut data = Vec::with_capacity(h * w * 3);
    for row in 0..h {
        for col in 0..w {
            let (y, x) = map(row, col);
            data.extend_from_slice(&sample_bilinear(img, y, x));
        }
    }
    ImageF::from_clamped(h, w, data)
}

fn shift_scale_rotate(img: &ImageF, shift_x: f64, shift_y: f64, scale: f64, angle: f64) -> ImageF {
    let (h, w) = (img.height() as f64, img.width() as f64);
    let (cx, cy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
    let (tx, ty) = (shift_x * w, shift_y * h);
    let (sin, cos) = angle.to_radians().sin_cos();
    remap(img, |row, col| {
        let qx = col as f64 - cx - tx;
        let qy = row as f64 - cy - ty;
        let x = (cos * qx - sin * qy) / scale + cx;
        let y = (sin * qx + cos * qy) / scale + cy;
        (y, x)
    })
}

pub(crate) fn horizontal_flip(img: &ImageF) -> ImageF {
    let (h, w) = (img.height(), img.width());
    let mut data = Vec::with_capacity(h * w * 3);
    for row in 0..h {
        for col in (0..w).rev() {
            data.extend_from_slice(&img.pixel(row, col));
        }
    }
    ImageF::from_clamped(h, w, data)
}

fn elastic_transform(img: &ImageF, alpha: f64, sigma: f64, field_seed: u64) -> ImageF {
    let (h, w) = (img.height(), img.width());
    let mut rng = task_rng(field_seed);
    let mut field = || -> Vec<f64> { (0..h * w).map(|_| rng.random_range(-1.0..=1.0)).collect() };
    let raw_dx = field();
    let raw_dy = field();
    let taps = gaussian_kernel((3.0 * sigma).ceil() as usize, sigma);
    let dx = convolve_separable(&raw_dx, h, w, 1, &taps);
    let dy = convolve_separable(&raw_dy, h, w, 1, &taps);
    remap(img, |row, col| {
        let i = row * w + col;
        (row as f64 + alpha * dy[i], col as f64 + alpha * dx[i])
    })
}

/// Homography `H` (row-major, `h33 = 1`) with `H(src[k]) = dst[k]`.
pub(crate) fn homography(src: &[(f64, f64); 4], dst: &[(f64, f64); 4]) -> Option<[f64; 9]> {
    let mut a = [[0.0f64; 9]; 8];
    for k in 0..4 {
        let (x, y) = src[k];
        let (u, v) = dst[k];
        a[2 * k] = [x, y, 1.0, 0.0, 0.0, 0.0, -x * u, -y * u, u];
        a[2 * k + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -x * v, -y * v, v];
    }
    // Gauss-Jordan with partial pivoting on the augmented 8x9 system.
    for col in 0..8 {
        let pivot = (col..8).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        let p = a[col][col];
        for v in &mut a[col] {
            *v /= p;
        }
        for row in 0..8 {
            if row != col {
                let factor = a[row][col];
                if factor != 0.0 {
                    let pivot = a[col];
                    for (x, p) in a[row][col..].iter_mut().zip(&pivot[col..]) {
                        *x -= factor * p;
                    }
                }
            }
        }
    }
    let mut h = [0.0; 9];
    for (i, row) in a.iter().enumerate() {
        h[i] = row[8];
    }
    h[8] = 1.0;
    Some(h)
}

/// The source quadrilateral `corner_k + offset_k` is stretched onto the
/// full output frame.
fn perspective(img: &ImageF, offsets: &[(f64, f64); 4]) -> Result<ImageF> {
    let (h, w) = (img.height(), img.width());
    let (xm, ym) = ((w - 1) as f64, (h - 1) as f64);
    let corners = [(0.0, 0.0), (xm, 0.0), (xm, ym), (0.0, ym)];
    let mut targets = corners;
    for (t, (dx, dy)) in targets.iter_mut().zip(offsets) {
        t.0 += dx;
        t.1 += dy;
    }
    let m = homography(&corners, &targets).ok_or(AugmentError::DegenerateHomography { height: h, width: w })?;
    Ok(remap(img, |row, col| {
        let (x, y) = (col as f64, row as f64);
        let z = m[6] * x + m[7] * y + m[8];
        let sx = (m[0] * x + m[1] * y + m[2]) / z;
        let sy = (m[3] * x + m[4] * y + m[5]) / z;
        (sy, sx)
    }))
}

fn brightness_contrast(img: &ImageF, brightness_delta: f64, contrast_delta: f64) -> ImageF {
    let data = img
        .data()
        .iter()
        .map(|&v| (v - 0.5) * (1.0 + contrast_delta) + 0.5 + brightness_delta)
        .collect();
    ImageF::from_clamped(img.height(), img.width(), data)
}

fn coarse_dropout(img: &ImageF, hole: usize, holes: &[(usize, usize)], fill_seed: u64) -> Result<ImageF> {
    let (h, w) = (img.height(), img.width());
    if h < hole || w < hole {
        return Err(AugmentError::ImageTooSmall {
            height: h,
            width: w,
            hole,
        });
    }
    let mut out = img.clone();
    let mut rng = task_rng(fill_seed);
    let data = out.data_mut();
    for &(top, left) in holes {
        let top = top.min(h - hole);
        let left = left.min(w - hole);
        for row in top..top + hole {
            for col in left..left + hole {
                let i = (row * w + col) * 3;
                for v in &mut data[i..i + 3] {
                    *v = rng.random::<f64>();
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct AugmentConfig {
    pub global_seed: u64,
    /// Target `(height, width)` of the base resize.
    pub size: (usize, usize),
    pub augmentations: Vec<AugmentationId>,
}

impl AugmentConfig {
    pub fn new(global_seed: u64) -> Self {
        Self {
            global_seed,
            size: (DEFAULT_IMAGE_SIZE, DEFAULT_IMAGE_SIZE),
            augmentations: AugmentationId::ALL.to_vec(),
        }
    }
}

/// The resized original plus one output per configured augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSet {
    pub original: ImageU8,
    pub augmented: Vec<(AugmentationId, ImageU8)>,
}

impl AugmentedSet {
    pub fn len(&self) -> usize {
        1 + self.augmented.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `("original", image)` followed by each augmentation in order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &ImageU8)> {
        std::iter::once(("original", &self.original)).chain(self.augmented.iter().map(|(id, img)| (id.name(), img)))
    }
}

pub fn augment_image_set(img: &ImageU8, image_key: &str, config: &AugmentConfig) -> Result<AugmentedSet> {
    let (th, tw) = config.size;
    let original = resize_bilinear(img, th, tw)?;
    let base = original.to_float();
    let augmented = config
        .augmentations
        .iter()
        .map(|&id| {
            let seed = task_seed(config.global_seed, image_key, id.name());
            let params = sample_params(id, seed, th, tw)?;
            Ok((id, apply_augmentation(id, &base, &params)?.to_u8()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AugmentedSet { original, augmented })
}

pub fn decode_image(bytes: &[u8], label: &str) -> Result<ImageU8> {
    let decoded = image::load_from_memory(bytes).map_err(|e| AugmentError::Decode {
        path: label.to_string(),
        message: e.to_string(),
    })?;
    let rgb = decoded.to_rgb8();
    let (w, h) = rgb.dimensions();
    Ok(ImageU8::new(h as usize, w as usize, rgb.into_raw())?)
}

pub fn load_image(path: &std::path::Path) -> Result<ImageU8> {
    let bytes = std::fs::read(path).map_err(|e| AugmentError::Decode {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    decode_image(&bytes, &path.display().to_string())
}

pub fn encode_png(img: &ImageU8) -> Vec<u8> {
    let mut out = std::io::Cursor::new(Vec::new());
    image::write_buffer_with_format(
        &mut out,
        img.data(),
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::Rgb8,
        image::ImageFormat::Png,
    )
    .expect("PNG encoding into memory cannot fail for a valid RGB buffer");
    out.into_inner()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn textured(h: usize, w: usize) -> ImageF {
        ImageU8::from_fn(h, w, |r, c| {
            [
                ((r * 37 + c * 11) % 256) as u8,
                ((r * r + 3 * c) % 256) as u8,
                ((c * c + 7 * r) % 256) as u8,
            ]
        })
        .unwrap()
        .to_float()
    }

    #[test]
    fn names_round_trip() {
        for id in AugmentationId::ALL {
            assert_eq!(id.name().parse::<AugmentationId>().unwrap(), id);
        }
        assert!("Sepia".parse::<AugmentationId>().is_err());
    }

    #[test]
    fn sampled_ranges() {
        for seed in 0..200u64 {
            match sample_params(AugmentationId::GaussNoise, seed, 64, 64).unwrap() {
                AugParams::GaussNoise { std, .. } => assert!((0.44..=0.88).contains(&std)),
                p => panic!("{p:?}"),
            }
            match sample_params(AugmentationId::GaussianBlur, seed, 64, 64).unwrap() {
                AugParams::GaussianBlur { kernel } => assert!(BLUR_KERNELS.contains(&kernel)),
                p => panic!("{p:?}"),
            }
            match sample_params(AugmentationId::ColorJitter, seed, 64, 64).unwrap() {
                AugParams::ColorJitter {
                    brightness,
                    contrast,
                    saturation,
                    hue,
                } => {
                    for f in [brightness, contrast, saturation] {
                        assert!((0.8..=1.2).contains(&f));
                    }
                    assert!((-0.2..=0.2).contains(&hue));
                }
                p => panic!("{p:?}"),
            }
            match sample_params(AugmentationId::ShiftScaleRotate, seed, 64, 64).unwrap() {
                AugParams::ShiftScaleRotate {
                    shift_x,
                    shift_y,
                    scale,
                    angle,
                } => {
                    assert!(shift_x.abs() <= 0.0625 && shift_y.abs() <= 0.0625);
                    assert!((0.9..=1.1).contains(&scale));
                    assert!(angle.abs() <= 15.0);
                }
                p => panic!("{p:?}"),
            }
            match sample_params(AugmentationId::Perspective, seed, 50, 80).unwrap() {
                AugParams::Perspective { corner_scale, offsets } => {
                    assert!((0.05..=0.1).contains(&corner_scale));
                    for (dx, dy) in offsets {
                        assert!(dx.abs() <= corner_scale * 80.0 + 1e-12);
                        assert!(dy.abs() <= corner_scale * 50.0 + 1e-12);
                    }
                }
                p => panic!("{p:?}"),
            }
            match sample_params(AugmentationId::RandomBrightnessContrast, seed, 64, 64).unwrap() {
                AugParams::RandomBrightnessContrast {
                    brightness_delta,
                    contrast_delta,
                } => assert!(brightness_delta.abs() <= 0.2 && contrast_delta.abs() <= 0.2),
                p => panic!("{p:?}"),
            }
            match sample_params(AugmentationId::CoarseDropout, seed, 40, 30).unwrap() {
                AugParams::CoarseDropout { hole_size, holes, .. } => {
                    assert_eq!(hole_size, 16);
                    assert!((6..=8).contains(&holes.len()));
                    for (r, c) in holes {
                        assert!(r + 16 <= 40 && c + 16 <= 30);
                    }
                }
                p => panic!("{p:?}"),
            }
        }
    }

    #[test]
    fn every_blur_kernel_is_reachable() {
        let mut seen: Vec<usize> = (0..100u64)
            .filter_map(
                |s| match sample_params(AugmentationId::GaussianBlur, s, 8, 8).unwrap() {
                    AugParams::GaussianBlur { kernel } => Some(kernel),
                    _ => None,
                },
            )
            .collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen, vec![3, 5, 7]);
    }

    #[test]
    fn sampling_is_deterministic() {
        for id in AugmentationId::ALL {
            assert_eq!(
                sample_params(id, 99, 64, 64).unwrap(),
                sample_params(id, 99, 64, 64).unwrap()
            );
        }
    }

    #[test]
    fn task_seed_depends_on_every_component() {
        let base = task_seed(7, "img", "GaussNoise");
        assert_eq!(base, task_seed(7, "img", "GaussNoise"));
        assert_ne!(base, task_seed(8, "img", "GaussNoise"));
        assert_ne!(base, task_seed(7, "img2", "GaussNoise"));
        assert_ne!(base, task_seed(7, "img", "GaussianBlur"));
        // Length prefixes keep the key/name boundary unambiguous.
        assert_ne!(task_seed(7, "ab", "c"), task_seed(7, "a", "bc"));
    }

    #[test]
    fn dropout_needs_room_for_a_hole() {
        assert!(matches!(
            sample_params(AugmentationId::CoarseDropout, 1, 15, 100),
            Err(AugmentError::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn mismatched_params_rejected() {
        let img = textured(8, 8);
        let err = apply_augmentation(AugmentationId::GaussNoise, &img, &AugParams::HorizontalFlip).unwrap_err();
        assert!(matches!(
            err,
            AugmentError::ParamMismatch {
                expected: AugmentationId::GaussNoise,
                found: AugmentationId::HorizontalFlip
            }
        ));
    }

    #[test]
    fn flip_is_an_involution() {
        let img = textured(9, 13);
        let once = apply_augmentation(AugmentationId::HorizontalFlip, &img, &AugParams::HorizontalFlip).unwrap();
        assert_ne!(once, img);
        let twice = apply_augmentation(AugmentationId::HorizontalFlip, &once, &AugParams::HorizontalFlip).unwrap();
        assert_eq!(twice, img);
    }

    #[test]
    fn flip_preserves_symmetric_image() {
        let img = ImageU8::from_fn(5, 6, |r, c| {
            let m = c.min(5 - c);
            [(r * 40 + m * 10) as u8, (m * 50) as u8, 3]
        })
        .unwrap()
        .to_float();
        assert_eq!(horizontal_flip(&img), img);
    }

    #[test]
    fn blur_keeps_constants_and_range() {
        let flat = ImageF::filled(12, 10, [0.3, 0.6, 0.9]).unwrap();
        for k in BLUR_KERNELS {
            let out = gaussian_blur(&flat, k);
            assert_eq!(out, flat);
        }
        let img = textured(12, 10);
        let lo = img.data().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = img.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let out = gaussian_blur(&img, 7);
        assert!(out.data().iter().all(|v| (lo..=hi).contains(v)));
    }

    #[test]
    fn blur_sigma_convention() {
        assert!((blur_sigma(3) - 0.8).abs() < 1e-12);
        assert!((blur_sigma(5) - 1.1).abs() < 1e-12);
        assert!((blur_sigma(7) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn reflect_101() {
        let idx: Vec<usize> = (-3..8).map(|i| reflect_index(i, 5)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
        assert_eq!(reflect_index(-7, 1), 0);
    }

    #[test]
    fn geometric_transforms_fix_constant_images() {
        let flat = ImageF::filled(32, 24, [0.25, 0.5, 0.75]).unwrap();
        for id in [
            AugmentationId::ElasticTransform,
            AugmentationId::Perspective,
            AugmentationId::ShiftScaleRotate,
        ] {
            for seed in 0..5 {
                let p = sample_params(id, seed, 32, 24).unwrap();
                assert_eq!(apply_augmentation(id, &flat, &p).unwrap(), flat, "{id}");
            }
        }
    }

    #[test]
    fn identity_perspective_is_identity() {
        let img = textured(10, 14);
        let out = perspective(&img, &[(0.0, 0.0); 4]).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn homography_maps_corners() {
        let src = [(0.0, 0.0), (9.0, 0.0), (9.0, 5.0), (0.0, 5.0)];
        let dst = [(0.5, -0.3), (9.4, 0.2), (8.7, 5.6), (-0.2, 4.9)];
        let m = homography(&src, &dst).unwrap();
        for ((x, y), (u, v)) in src.iter().zip(&dst) {
            let z = m[6] * x + m[7] * y + m[8];
            assert!(((m[0] * x + m[1] * y + m[2]) / z - u).abs() < 1e-9);
            assert!(((m[3] * x + m[4] * y + m[5]) / z - v).abs() < 1e-9);
        }
        assert!(homography(&[(0.0, 0.0); 4], &dst).is_none());
    }

    #[test]
    fn ssr_identity_params_is_identity() {
        let img = textured(11, 11);
        let out = shift_scale_rotate(&img, 0.0, 0.0, 1.0, 0.0);
        assert_eq!(out, img);
    }

    #[test]
    fn brightness_contrast_formula() {
        let img = ImageF::new(1, 1, vec![0.0, 0.5, 0.9]).unwrap();
        let out = brightness_contrast(&img, 0.1, -0.2);
        let expected = [(0.0 - 0.5) * 0.8 + 0.6, 0.6, ((0.9 - 0.5) * 0.8 + 0.6f64).min(1.0)];
        for (a, b) in out.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn color_jitter_neutral_params_keep_image() {
        let img = textured(6, 6);
        let out = color_jitter(&img, 1.0, 1.0, 1.0, 0.0);
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn hue_shift_of_full_turn_is_identity() {
        for &(r, g, b) in &[(0.9, 0.2, 0.1), (0.1, 0.8, 0.3), (0.2, 0.3, 0.7), (0.5, 0.5, 0.5)] {
            let (h, s, v) = rgb_to_hsv(r, g, b);
            let (r2, g2, b2) = hsv_to_rgb((h + 1.0).rem_euclid(1.0), s, v);
            assert!((r - r2).abs() < 1e-12 && (g - g2).abs() < 1e-12 && (b - b2).abs() < 1e-12);
        }
        // Red shifted by a third of a turn becomes green.
        let (h, s, v) = rgb_to_hsv(1.0, 0.0, 0.0);
        let (r, g, b) = hsv_to_rgb(h + 1.0 / 3.0, s, v);
        assert!(r.abs() < 1e-12 && (g - 1.0).abs() < 1e-12 && b.abs() < 1e-12);
    }

    #[test]
    fn dropout_only_touches_holes() {
        let img = textured(64, 48);
        for seed in 0..20 {
            let params = sample_params(AugmentationId::CoarseDropout, seed, 64, 48).unwrap();
            let AugParams::CoarseDropout { ref holes, .. } = params else {
                unreachable!()
            };
            let out = apply_augmentation(AugmentationId::CoarseDropout, &img, &params).unwrap();
            let mut changed = 0;
            for r in 0..64 {
                for c in 0..48 {
                    if out.pixel(r, c) != img.pixel(r, c) {
                        changed += 1;
                        assert!(holes
                            .iter()
                            .any(|&(hr, hc)| (hr..hr + 16).contains(&r) && (hc..hc + 16).contains(&c)));
                    }
                }
            }
            assert!(changed <= holes.len() * 256);
        }
    }

    #[test]
    fn augment_set_has_ten_entries() {
        let img = ImageU8::from_fn(40, 50, |r, c| [(r * 5) as u8, (c * 5) as u8, 128]).unwrap();
        let mut config = AugmentConfig::new(3);
        config.size = (32, 32);
        let set = augment_image_set(&img, "k", &config).unwrap();
        assert_eq!(set.len(), 10);
        let names: Vec<&str> = set.entries().map(|(n, _)| n).collect();
        assert_eq!(names[0], "original");
        assert!(set.entries().all(|(_, i)| i.height() == 32 && i.width() == 32));
        assert_eq!(set, augment_image_set(&img, "k", &config).unwrap());
        assert_ne!(set, augment_image_set(&img, "other", &config).unwrap());
    }

    #[test]
    fn png_round_trip() {
        let img = ImageU8::from_fn(7, 5, |r, c| [r as u8 * 30, c as u8 * 40, 255]).unwrap();
        let bytes = encode_png(&img);
        assert_eq!(decode_image(&bytes, "mem").unwrap(), img);
        assert!(matches!(
            decode_image(b"not an image", "junk"),
            Err(AugmentError::Decode { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn outputs_stay_in_unit_range(seed in any::<u64>(), idx in 0usize..9) {
            let id = AugmentationId::ALL[idx];
            let img = textured(20, 18);
            let params = sample_params(id, seed, 20, 18).unwrap();
            let out = apply_augmentation(id, &img, &params).unwrap();
            prop_assert_eq!((out.height(), out.width()), (20, 18));
            prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
