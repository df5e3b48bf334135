//! Row-major raster containers for scans, probability maps and masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shared surface of [`GrayImage`] and [`BinaryMask`], enough to pad and crop
/// either kind generically.
pub trait Raster: Sized {
    type Pixel: Copy + Default + PartialEq;

    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn data(&self) -> &[Self::Pixel];
    fn from_parts(width: usize, height: usize, data: Vec<Self::Pixel>) -> Result<Self>;

    fn dims(&self) -> (usize, usize) {
        (self.height(), self.width())
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter(format!(
            "raster dimensions must be positive, got {width}x{height}"
        )));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::DimensionMismatch(format!(
            "{width}x{height} raster needs {} pixels, got {len}",
            width.saturating_mul(height)
        )));
    }
    Ok(())
}

/// 8-bit single channel image. Row 0 is the top of the image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        check_dims(width, height, pixels.len())?;
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width.saturating_mul(height)])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.pixels[row * self.width + col] = value;
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }
}

impl Raster for GrayImage {
    type Pixel = u8;

    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn data(&self) -> &[u8] {
        &self.pixels
    }
    fn from_parts(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        Self::new(width, height, data)
    }
}

/// Binary segmentation mask, row-major, `true` = foreground.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(width, height, bits.len())?;
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width.saturating_mul(height)])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    /// Bounds-checked read on signed coordinates; off-raster is background.
    #[inline]
    pub fn get_signed(&self, row: isize, col: isize) -> bool {
        row >= 0
            && col >= 0
            && (row as usize) < self.height
            && (col as usize) < self.width
            && self.bits[row as usize * self.width + col as usize]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// `true` when every foreground pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// 0/255 rendering used by the interchange format.
    pub fn to_gray(&self) -> GrayImage {
        let pixels = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        GrayImage {
            width: self.width,
            height: self.height,
            pixels,
        }
    }
}

impl Raster for BinaryMask {
    type Pixel = bool;

    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn data(&self) -> &[bool] {
        &self.bits
    }
    fn from_parts(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        Self::new(width, height, data)
    }
}

/// Thresholds an 8-bit probability map (`intensity / 255`). A bit is set iff
/// its probability is strictly greater than `threshold`.
pub fn binarize(prob: &GrayImage, threshold: f64) -> Result<BinaryMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "binarization threshold {threshold} must lie in (0, 1)"
        )));
    }
    let bits = prob
        .pixels
        .iter()
        .map(|&v| f64::from(v) / 255.0 > threshold)
        .collect();
    BinaryMask::new(prob.width, prob.height, bits)
}

/// Placement of an original raster inside its zero-padded square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PadInfo {
    pub row_offset: usize,
    pub col_offset: usize,
    pub original_height: usize,
    pub original_width: usize,
}

/// Default side of the padded square fed to the segmentation network.
pub const PAD_TARGET: usize = 1024;

/// Embeds `img` at the top-left of a `target` x `target` zero raster.
pub fn zero_pad<R: Raster>(img: &R, target: usize) -> Result<(R, PadInfo)> {
    let (h, w) = img.dims();
    if h > target || w > target {
        return Err(Error::InvalidParameter(format!(
            "{h}x{w} raster does not fit in a {target}x{target} pad"
        )));
    }
    let info = PadInfo {
        row_offset: 0,
        col_offset: 0,
        original_height: h,
        original_width: w,
    };
    let mut data = vec![R::Pixel::default(); target * target];
    for (r, src) in img.data().chunks_exact(w).enumerate() {
        let start = (r + info.row_offset) * target + info.col_offset;
        data[start..start + w].copy_from_slice(src);
    }
    Ok((R::from_parts(target, target, data)?, info))
}

/// Recovers the original raster from a padded one.
pub fn crop<R: Raster>(padded: &R, info: &PadInfo) -> Result<R> {
    let (h, w) = padded.dims();
    if info.row_offset + info.original_height > h || info.col_offset + info.original_width > w {
        return Err(Error::DimensionMismatch(format!(
            "pad record ({}+{} rows, {}+{} cols) exceeds the {h}x{w} raster",
            info.row_offset, info.original_height, info.col_offset, info.original_width
        )));
    }
    let mut data = Vec::with_capacity(info.original_height * info.original_width);
    for r in 0..info.original_height {
        let start = (r + info.row_offset) * w + info.col_offset;
        data.extend_from_slice(&padded.data()[start..start + info.original_width]);
    }
    R::from_parts(info.original_width, info.original_height, data)
}
