//! Image containers and the low-level raster operations shared by the
//! augmentations and the pixel-domain metrics.
//!
//! Three image types are used throughout the crate:
//!
//! - [`ImageU8`]: interleaved 8-bit RGB, the on-disk and patch-MSE domain.
//! - [`ImageF`]: interleaved RGB in `[0, 1]`, the working domain of every
//!   augmentation.
//! - [`GrayImage`]: single channel in `[0, 1]`, used for edge maps.
//!
//! Single-channel values that are not intensities (gradients, edge maps) are
//! carried by [`Plane`].

use thiserror::Error;

/// Luma weights applied to (R, G, B).
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1, got {height}x{width}")]
    EmptyImage { height: usize, width: usize },
    #[error("data length {actual} does not match {height}x{width}x{channels}")]
    DataLength {
        height: usize,
        width: usize,
        channels: usize,
        actual: usize,
    },
    #[error("value {value} at index {index} is outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f64 },
    #[error("operation needs at least 2x2 pixels, got {height}x{width}")]
    DimensionTooSmall { height: usize, width: usize },
    #[error("a {grid}x{grid} grid is too fine for a {height}x{width} image")]
    GridTooFine { height: usize, width: usize, grid: usize },
}

pub type Result<T> = std::result::Result<T, ImageError>;

fn check_shape(height: usize, width: usize, channels: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(ImageError::EmptyImage { height, width });
    }
    if len != height * width * channels {
        return Err(ImageError::DataLength {
            height,
            width,
            channels,
            actual: len,
        });
    }
    Ok(())
}

fn check_unit_range(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(index) => Err(ImageError::ValueOutOfRange {
            index,
            value: data[index],
        }),
        None => Ok(()),
    }
}

/// Read access shared by every raster type, used by patch extraction.
pub trait Raster {
    fn height(&self) -> usize;
    fn width(&self) -> usize;
    fn channels(&self) -> usize;
    /// Value at `(row, col, channel)` as `f64`, in the raster's native scale.
    fn sample(&self, row: usize, col: usize, channel: usize) -> f64;
}

/// 8-bit RGB image, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageU8 {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl ImageU8 {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        check_shape(height, width, 3, data.len())?;
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb.iter().copied().cycle().take(height * width * 3).collect();
        Self::new(height, width, data)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * 3);
        for row in 0..height {
            for col in 0..width {
                data.extend_from_slice(&f(row, col));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Divides every value by 255.
    pub fn to_float(&self) -> ImageF {
        ImageF {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f64::from(v) / 255.0).collect(),
        }
    }
}

impl Raster for ImageU8 {
    fn height(&self) -> usize {
        self.height
    }
    fn width(&self) -> usize {
        self.width
    }
    fn channels(&self) -> usize {
        3
    }
    fn sample(&self, row: usize, col: usize, channel: usize) -> f64 {
        f64::from(self.data[(row * self.width + col) * 3 + channel])
    }
}

/// RGB image with values in `[0, 1]`, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageF {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_shape(height, width, 3, data.len())?;
        check_unit_range(&data)?;
        Ok(Self { height, width, data })
    }

    /// Builds an image from values that are known to lie in `[0, 1]` up to
    /// rounding; values are clamped.
    pub(crate) fn from_clamped(height: usize, width: usize, mut data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width * 3);
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Self { height, width, data }
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Result<Self> {
        let data = rgb.iter().copied().cycle().take(height * width * 3).collect();
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Multiplies by 255, rounds half-up and clamps to `[0, 255]`.
    pub fn to_u8(&self) -> ImageU8 {
        ImageU8 {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| unit_to_u8(v)).collect(),
        }
    }
}

impl Raster for ImageF {
    fn height(&self) -> usize {
        self.height
    }
    fn width(&self) -> usize {
        self.width
    }
    fn channels(&self) -> usize {
        3
    }
    fn sample(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * 3 + channel]
    }
}

pub(crate) fn unit_to_u8(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Single-channel float raster with arbitrary values.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_shape(height, width, 1, data.len())?;
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Raster for Plane {
    fn height(&self) -> usize {
        self.height
    }
    fn width(&self) -> usize {
        self.width
    }
    fn channels(&self) -> usize {
        1
    }
    fn sample(&self, row: usize, col: usize, _channel: usize) -> f64 {
        self.get(row, col)
    }
}

/// Grayscale intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage(Plane);

impl GrayImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_unit_range(&data)?;
        Plane::new(height, width, data).map(Self)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0.get(row, col)
    }

    pub fn as_plane(&self) -> &Plane {
        &self.0
    }
}

impl Raster for GrayImage {
    fn height(&self) -> usize {
        self.0.height
    }
    fn width(&self) -> usize {
        self.0.width
    }
    fn channels(&self) -> usize {
        1
    }
    fn sample(&self, row: usize, col: usize, _channel: usize) -> f64 {
        self.0.get(row, col)
    }
}

/// Horizontal and vertical forward differences of a grayscale image.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub gx: Plane,
    pub gy: Plane,
}

pub fn to_grayscale(img: &ImageF) -> GrayImage {
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| (wr * p[0] + wg * p[1] + wb * p[2]).clamp(0.0, 1.0))
        .collect();
    GrayImage(Plane {
        height: img.height,
        width: img.width,
        data,
    })
}

/// Forward differences; the last column of `gx` and the last row of `gy`
/// are zero.
pub fn gradient_maps(gray: &GrayImage) -> Result<GradientPair> {
    let (h, w) = (gray.height(), gray.width());
    if h < 2 || w < 2 {
        return Err(ImageError::DimensionTooSmall { height: h, width: w });
    }
    let mut gx = Plane::zeros(h, w);
    let mut gy = Plane::zeros(h, w);
    for row in 0..h {
        for col in 0..w {
            let here = gray.get(row, col);
            if col + 1 < w {
                gx.data[row * w + col] = gray.get(row, col + 1) - here;
            }
            if row + 1 < h {
                gy.data[row * w + col] = gray.get(row + 1, col) - here;
            }
        }
    }
    Ok(GradientPair { gx, gy })
}

/// `(|gx| + |gy|) / max`, or all zeros when the image has no variation.
pub fn edge_map(gray: &GrayImage) -> Result<Plane> {
    let GradientPair { gx, gy } = gradient_maps(gray)?;
    let mut magnitude: Vec<f64> = gx.data.iter().zip(&gy.data).map(|(x, y)| x.abs() + y.abs()).collect();
    let max = magnitude.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        for v in &mut magnitude {
            *v /= max;
        }
    }
    Ok(Plane {
        height: gx.height,
        width: gx.width,
        data: magnitude,
    })
}

/// A rectangular block of a raster, values in the source's native scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Patch {
    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Population standard deviation over every pixel and channel.
    pub fn std_dev(&self) -> f64 {
        let mean = self.mean();
        let var = self.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / self.data.len() as f64;
        var.sqrt()
    }

    /// Mean squared difference against a patch of the same shape.
    pub fn mse(&self, other: &Patch) -> f64 {
        debug_assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / self.data.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub grid_size: usize,
    pub patch_height: usize,
    pub patch_width: usize,
    /// Row-major over the grid: patch `(r, c)` is at index `r * grid_size + c`.
    pub patches: Vec<Patch>,
}

/// Splits a raster into `grid x grid` equal patches of
/// `floor(h / grid) x floor(w / grid)`; trailing rows and columns are dropped.
pub fn extract_patch_grid<R: Raster + ?Sized>(img: &R, grid: usize) -> Result<PatchGrid> {
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let (ph, pw) = (h.checked_div(grid).unwrap_or(0), w.checked_div(grid).unwrap_or(0));
    if ph == 0 || pw == 0 {
        return Err(ImageError::GridTooFine {
            height: h,
            width: w,
            grid,
        });
    }
    let mut patches = Vec::with_capacity(grid * grid);
    for gr in 0..grid {
        for gc in 0..grid {
            let mut data = Vec::with_capacity(ph * pw * ch);
            for row in gr * ph..(gr + 1) * ph {
                for col in gc * pw..(gc + 1) * pw {
                    for c in 0..ch {
                        data.push(img.sample(row, col, c));
                    }
                }
            }
            patches.push(Patch {
                height: ph,
                width: pw,
                channels: ch,
                data,
            });
        }
    }
    Ok(PatchGrid {
        grid_size: grid,
        patch_height: ph,
        patch_width: pw,
        patches,
    })
}

/// Bilinear resize with half-pixel centres: the source coordinate of output
/// index `d` is `(d + 0.5) * scale - 0.5`, clamped to the image.
pub fn resize_bilinear(img: &ImageU8, out_h: usize, out_w: usize) -> Result<ImageU8> {
    if out_h == 0 || out_w == 0 {
        return Err(ImageError::EmptyImage {
            height: out_h,
            width: out_w,
        });
    }
    if out_h == img.height && out_w == img.width {
        return Ok(img.clone());
    }
    let rows = axis_taps(img.height, out_h);
    let cols = axis_taps(img.width, out_w);
    let mut data = Vec::with_capacity(out_h * out_w * 3);
    for &(r0, r1, fy) in &rows {
        for &(c0, c1, fx) in &cols {
            for c in 0..3 {
                let p00 = img.sample(r0, c0, c);
                let p01 = img.sample(r0, c1, c);
                let p10 = img.sample(r1, c0, c);
                let p11 = img.sample(r1, c1, c);
                let top = p00 + fx * (p01 - p00);
                let bottom = p10 + fx * (p11 - p10);
                let v = top + fy * (bottom - top);
                data.push((v + 0.5).floor().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageU8::new(out_h, out_w, data)
}

/// Per output index: the two source indices and the weight of the second.
fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    let last = (src - 1) as f64;
    (0..dst)
        .map(|d| {
            let x = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(src - 1);
            (x0, x1, x - x0 as f64)
        })
        .collect()
}
