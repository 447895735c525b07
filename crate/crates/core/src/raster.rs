//! Normalized single-channel image grid, loading and local statistics.
//!
//! Intensities live in `[0, 1]` on a dyadic grid of step `2^-32`. On that grid
//! `1 - x` is exact, so complementing twice returns the original raster
//! bit-for-bit and dark/bright mirrored scenes grow identically.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Resolution of stored intensities.
pub const INTENSITY_QUANTUM: f64 = 1.0 / 4_294_967_296.0;

/// Default side of the window used for the local background median.
pub const DEFAULT_POLARITY_WINDOW: usize = 21;

#[inline]
fn quantize(v: f64) -> f64 {
    (v / INTENSITY_QUANTUM).round() * INTENSITY_QUANTUM
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn bits(self) -> u32 {
        match self {
            BitDepth::Eight => 8,
            BitDepth::Sixteen => 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PixelCoord {
    pub x: usize,
    pub y: usize,
}

impl PixelCoord {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

impl From<(usize, usize)> for PixelCoord {
    fn from((x, y): (usize, usize)) -> Self {
        Self { x, y }
    }
}

/// Row-major intensity grid in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<f64>,
    bit_depth_origin: BitDepth,
}

impl Raster {
    /// Builds a raster from intensities already in `[0, 1]`.
    pub fn new(width: usize, height: usize, data: Vec<f64>, bit_depth_origin: BitDepth) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroSize);
        }
        if data.len() != width * height {
            return Err(Error::Contract(format!(
                "raster data has {} values, expected {}",
                data.len(),
                width * height
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Contract(format!("intensity {bad} outside [0, 1]")));
        }
        let data = data.into_iter().map(quantize).collect();
        Ok(Self {
            width,
            height,
            data,
            bit_depth_origin,
        })
    }

    /// Like [`Raster::new`] but clamps every value into `[0, 1]` first.
    pub fn from_clamped(width: usize, height: usize, data: Vec<f64>, bit_depth_origin: BitDepth) -> Result<Self> {
        let data = data
            .into_iter()
            .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
            .collect();
        Self::new(width, height, data, bit_depth_origin)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::from_clamped(width, height, data, BitDepth::Sixteen)
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], BitDepth::Eight)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn bit_depth_origin(&self) -> BitDepth {
        self.bit_depth_origin
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn at(&self, p: PixelCoord) -> f64 {
        self.get(p.x, p.y)
    }

    pub fn contains(&self, p: PixelCoord) -> bool {
        p.x < self.width && p.y < self.height
    }

    pub fn check_bounds(&self, p: PixelCoord) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::OutOfBounds {
                x: p.x as i64,
                y: p.y as i64,
                width: self.width,
                height: self.height,
            })
        }
    }

    /// Elementwise `1 - I`.
    pub fn complement(&self) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| 1.0 - v).collect(),
            bit_depth_origin: self.bit_depth_origin,
        }
    }

    /// Values inside the window of side `window` centered at `p`, clipped to the image.
    pub fn window_values(&self, p: PixelCoord, window: usize) -> Vec<f64> {
        let half = window / 2;
        let x0 = p.x.saturating_sub(half);
        let y0 = p.y.saturating_sub(half);
        let x1 = (p.x + half).min(self.width - 1);
        let y1 = (p.y + half).min(self.height - 1);
        let mut out = Vec::with_capacity((x1 - x0 + 1) * (y1 - y0 + 1));
        for y in y0..=y1 {
            out.extend_from_slice(&self.data[y * self.width + x0..=y * self.width + x1]);
        }
        out
    }
}

/// Raw decoded samples before normalization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceImage {
    pub width: usize,
    pub height: usize,
    pub bit_depth: BitDepth,
    pub samples: Vec<u16>,
}

impl SourceImage {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// Decodes an 8- or 16-bit single-channel PNG or PGM.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let format = image::guess_format(bytes)?;
        if !matches!(format, ImageFormat::Png | ImageFormat::Pnm) {
            return Err(Error::UnsupportedFormat(format!("{format:?}")));
        }
        let img = image::load_from_memory_with_format(bytes, format)?;
        let (width, height) = (img.width() as usize, img.height() as usize);
        if width == 0 || height == 0 {
            return Err(Error::ZeroSize);
        }
        let (bit_depth, samples) = match img {
            DynamicImage::ImageLuma8(buf) => (BitDepth::Eight, buf.into_raw().into_iter().map(u16::from).collect()),
            DynamicImage::ImageLuma16(buf) => (BitDepth::Sixteen, buf.into_raw()),
            other => return Err(Error::MultiChannel(format!("{:?}", other.color()))),
        };
        Ok(Self {
            width,
            height,
            bit_depth,
            samples,
        })
    }

    /// Re-encodes the samples as a grayscale PNG at the source bit depth.
    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let img = match self.bit_depth {
            BitDepth::Eight => DynamicImage::ImageLuma8(
                image::GrayImage::from_raw(
                    self.width as u32,
                    self.height as u32,
                    self.samples.iter().map(|&v| v as u8).collect(),
                )
                .ok_or_else(|| Error::Contract("sample buffer size".into()))?,
            ),
            BitDepth::Sixteen => DynamicImage::ImageLuma16(
                image::ImageBuffer::from_raw(self.width as u32, self.height as u32, self.samples.clone())
                    .ok_or_else(|| Error::Contract("sample buffer size".into()))?,
            ),
        };
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    /// Crops to the rectangle, clipped to the image. Returns `None` when the
    /// clipped rectangle is empty.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Option<SourceImage> {
        if x >= self.width || y >= self.height || w == 0 || h == 0 {
            return None;
        }
        let x1 = (x + w).min(self.width);
        let y1 = (y + h).min(self.height);
        let mut samples = Vec::with_capacity((x1 - x) * (y1 - y));
        for row in y..y1 {
            samples.extend_from_slice(&self.samples[row * self.width + x..row * self.width + x1]);
        }
        Some(SourceImage {
            width: x1 - x,
            height: y1 - y,
            bit_depth: self.bit_depth,
            samples,
        })
    }

    pub fn normalize(&self, normalization: Normalization) -> Result<Raster> {
        let (lo, hi) = match normalization {
            Normalization::MinMax => {
                let lo = *self.samples.iter().min().ok_or(Error::ZeroSize)? as f64;
                let hi = *self.samples.iter().max().ok_or(Error::ZeroSize)? as f64;
                (lo, hi)
            }
            Normalization::Percentile { lo, hi } => {
                if !(0.0..=100.0).contains(&lo) || !(0.0..=100.0).contains(&hi) || lo >= hi {
                    return Err(Error::InvalidConfig(format!(
                        "percentile bounds must satisfy 0 <= lo < hi <= 100, got ({lo}, {hi})"
                    )));
                }
                let hist = histogram(&self.samples);
                (
                    histogram_percentile(&hist, self.samples.len(), lo),
                    histogram_percentile(&hist, self.samples.len(), hi),
                )
            }
        };
        let range = hi - lo;
        let data = if range <= 0.0 {
            vec![0.0; self.samples.len()]
        } else {
            self.samples
                .iter()
                .map(|&v| ((v as f64 - lo) / range).clamp(0.0, 1.0))
                .collect()
        };
        Raster::new(self.width, self.height, data, self.bit_depth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Normalization {
    #[default]
    MinMax,
    /// Clip to the `lo`/`hi` percentiles (0..=100, linear interpolation between ranks), then map to `[0, 1]`.
    Percentile { lo: f64, hi: f64 },
}

fn histogram(samples: &[u16]) -> Vec<usize> {
    let mut hist = vec![0usize; 1 << 16];
    for &s in samples {
        hist[s as usize] += 1;
    }
    hist
}

/// k-th smallest sample (0-based) from a histogram.
fn histogram_rank(hist: &[usize], k: usize) -> f64 {
    let mut seen = 0usize;
    for (value, &count) in hist.iter().enumerate() {
        seen += count;
        if seen > k {
            return value as f64;
        }
    }
    unreachable!("rank {k} beyond histogram total {seen}")
}

fn histogram_percentile(hist: &[usize], total: usize, q: f64) -> f64 {
    let pos = q / 100.0 * (total - 1) as f64;
    let lower = pos.floor() as usize;
    let frac = pos - lower as f64;
    let a = histogram_rank(hist, lower);
    if frac == 0.0 || lower + 1 >= total {
        return a;
    }
    let b = histogram_rank(hist, lower + 1);
    a + frac * (b - a)
}

pub fn load_raster(path: impl AsRef<Path>, normalization: Normalization) -> Result<Raster> {
    SourceImage::read(path)?.normalize(normalization)
}

/// Median of the clipped `window`x`window` neighbourhood of `p`, `p` included.
/// An even pixel count averages the two middle values.
pub fn local_background_median(img: &Raster, p: PixelCoord, window: usize) -> Result<f64> {
    img.check_bounds(p)?;
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!("median window must be odd and >= 3, got {window}")));
    }
    let mut values = img.window_values(p, window);
    let mid = values.len() / 2;
    let (_, &mut upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    if values.len() % 2 == 1 {
        return Ok(upper);
    }
    let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((lower + upper) / 2.0)
}

/// Inverts the raster when the seed is darker than its local background median.
pub fn unify_polarity(img: &Raster, seed: PixelCoord, window: usize) -> Result<(Raster, bool)> {
    let median = local_background_median(img, seed, window)?;
    if img.at(seed) < median {
        Ok((img.complement(), true))
    } else {
        Ok((img.clone(), false))
    }
}
