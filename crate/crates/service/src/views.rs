//! Display views of a source frame: raw, CLAHE and pseudo-color.

use image::ImageFormat;
use pamg_core::raster::{BitDepth, SourceImage};

pub const CLAHE_TILES: usize = 8;
pub const CLAHE_CLIP: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    Raw,
    Clahe,
    Pseudocolor,
}

impl std::str::FromStr for View {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "raw" => Ok(View::Raw),
            "clahe" => Ok(View::Clahe),
            "pseudocolor" => Ok(View::Pseudocolor),
            other => Err(format!("unknown view {other:?}, expected raw, clahe or pseudocolor")),
        }
    }
}

/// `x,y,w,h` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Crop {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl std::str::FromStr for Crop {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| format!("crop must be four non-negative integers x,y,w,h, got {s:?}"))?;
        match parts[..] {
            [x, y, w, h] if w > 0 && h > 0 => Ok(Crop { x, y, w, h }),
            _ => Err(format!("crop must be x,y,w,h with w, h > 0, got {s:?}")),
        }
    }
}

/// 8-bit display samples; 16-bit frames are min-max stretched.
pub fn to_gray8(src: &SourceImage) -> Vec<u8> {
    match src.bit_depth {
        BitDepth::Eight => src.samples.iter().map(|&s| s as u8).collect(),
        BitDepth::Sixteen => {
            let lo = src.samples.iter().copied().min().unwrap_or(0) as f64;
            let hi = src.samples.iter().copied().max().unwrap_or(0) as f64;
            let span = hi - lo;
            src.samples
                .iter()
                .map(|&s| if span > 0.0 { ((s as f64 - lo) / span * 255.0).round() as u8 } else { 0 })
                .collect()
        }
    }
}

fn tile_lut(gray: &[u8], width: usize, x0: usize, x1: usize, y0: usize, y1: usize, clip: f64) -> [u8; 256] {
    let mut hist = [0usize; 256];
    for y in y0..y1 {
        for &v in &gray[y * width + x0..y * width + x1] {
            hist[v as usize] += 1;
        }
    }
    let area = (x1 - x0) * (y1 - y0);
    let limit = ((clip * area as f64 / 256.0) as usize).max(1);
    let mut excess = 0;
    for h in hist.iter_mut() {
        if *h > limit {
            excess += *h - limit;
            *h = limit;
        }
    }
    let (each, rest) = (excess / 256, excess % 256);
    for (i, h) in hist.iter_mut().enumerate() {
        *h += each + usize::from(i < rest);
    }
    let mut lut = [0u8; 256];
    let mut cdf = 0;
    for (i, h) in hist.iter().enumerate() {
        cdf += h;
        lut[i] = ((cdf as f64 * 255.0 / area as f64).round()).min(255.0) as u8;
    }
    lut
}

/// Contrast-limited adaptive histogram equalization with bilinear blending
/// between tile mappings. `clip` is relative to the mean bin count.
pub fn clahe(gray: &[u8], width: usize, height: usize, tiles: usize, clip: f64) -> Vec<u8> {
    let (tx, ty) = (tiles.min(width).max(1), tiles.min(height).max(1));
    let (tw, th) = (width.div_ceil(tx), height.div_ceil(ty));
    // the last row/column of tiles may be narrower or absent after ceil
    let (tx, ty) = (width.div_ceil(tw), height.div_ceil(th));
    let luts: Vec<[u8; 256]> = (0..ty)
        .flat_map(|j| (0..tx).map(move |i| (i, j)))
        .map(|(i, j)| {
            tile_lut(gray, width, i * tw, ((i + 1) * tw).min(width), j * th, ((j + 1) * th).min(height), clip)
        })
        .collect();
    let axis = |p: usize, size: usize, n: usize| {
        let g = ((p as f64 + 0.5) / size as f64 - 0.5).clamp(0.0, (n - 1) as f64);
        let a = g.floor() as usize;
        (a, (a + 1).min(n - 1), g - a as f64)
    };
    let mut out = vec![0u8; gray.len()];
    for y in 0..height {
        let (j0, j1, wy) = axis(y, th, ty);
        for x in 0..width {
            let (i0, i1, wx) = axis(x, tw, tx);
            let v = gray[y * width + x] as usize;
            let f = |i: usize, j: usize| luts[j * tx + i][v] as f64;
            let top = f(i0, j0) * (1.0 - wx) + f(i1, j0) * wx;
            let bottom = f(i0, j1) * (1.0 - wx) + f(i1, j1) * wx;
            out[y * width + x] = (top * (1.0 - wy) + bottom * wy).round() as u8;
        }
    }
    out
}

/// Inferno colormap over the 8-bit display samples.
pub fn pseudocolor(gray: &[u8]) -> Vec<u8> {
    gray.iter()
        .flat_map(|&v| {
            let c = colorous::INFERNO.eval_rational(v as usize, 256);
            [c.r, c.g, c.b]
        })
        .collect()
}

fn crop_buf(buf: &[u8], width: usize, channels: usize, c: Crop) -> Vec<u8> {
    let mut out = Vec::with_capacity(c.w * c.h * channels);
    for y in c.y..c.y + c.h {
        let row = (y * width + c.x) * channels;
        out.extend_from_slice(&buf[row..row + c.w * channels]);
    }
    out
}

/// Clips a crop to the frame; `None` if nothing is left.
pub fn clip_crop(c: Crop, width: usize, height: usize) -> Option<Crop> {
    if c.x >= width || c.y >= height {
        return None;
    }
    Some(Crop {
        x: c.x,
        y: c.y,
        w: c.w.min(width - c.x),
        h: c.h.min(height - c.y),
    })
}

fn encode_png(buf: &[u8], w: usize, h: usize, color: image::ExtendedColorType) -> Vec<u8> {
    let mut out = Vec::new();
    image::write_buffer_with_format(&mut std::io::Cursor::new(&mut out), buf, w as u32, h as u32, color, ImageFormat::Png)
        .expect("in-memory png encoding");
    out
}

/// Renders `view` of `src`, then crops. Enhancement sees the full frame so a
/// crop shows the same pixels as the whole view.
pub fn render(src: &SourceImage, view: View, crop: Option<Crop>) -> pamg_core::Result<Vec<u8>> {
    let full = Crop {
        x: 0,
        y: 0,
        w: src.width,
        h: src.height,
    };
    let c = crop.unwrap_or(full);
    match view {
        View::Raw => src.crop(c.x, c.y, c.w, c.h).expect("crop already clipped").to_png_bytes(),
        View::Clahe => {
            let g = clahe(&to_gray8(src), src.width, src.height, CLAHE_TILES, CLAHE_CLIP);
            Ok(encode_png(&crop_buf(&g, src.width, 1, c), c.w, c.h, image::ExtendedColorType::L8))
        }
        View::Pseudocolor => {
            let rgb = pseudocolor(&to_gray8(src));
            Ok(encode_png(&crop_buf(&rgb, src.width, 3, c), c.w, c.h, image::ExtendedColorType::Rgb8))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin_variance(g: &[u8]) -> f64 {
        let mut hist = [0f64; 256];
        for &v in g {
            hist[v as usize] += 1.0;
        }
        let mean = hist.iter().sum::<f64>() / 256.0;
        hist.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / 256.0
    }

    #[test]
    fn clahe_flattens_a_low_contrast_histogram() {
        let (w, h) = (64, 48);
        let g: Vec<u8> = (0..w * h).map(|i| 100 + ((i % w) / 8 + (i / w) / 12) as u8 + (i % 3) as u8).collect();
        let out = clahe(&g, w, h, CLAHE_TILES, CLAHE_CLIP);
        assert!(bin_variance(&out) < bin_variance(&g));
    }

    #[test]
    fn clahe_handles_frames_smaller_than_the_tile_grid() {
        for (w, h) in [(1, 1), (3, 2), (9, 17)] {
            let g: Vec<u8> = (0..w * h).map(|i| (i * 37 % 256) as u8).collect();
            assert_eq!(clahe(&g, w, h, 8, 2.0).len(), w * h);
        }
    }

    #[test]
    fn crop_parsing_and_clipping() {
        assert_eq!("1,2,3,4".parse::<Crop>(), Ok(Crop { x: 1, y: 2, w: 3, h: 4 }));
        assert!("1,2,3".parse::<Crop>().is_err());
        assert!("1,2,0,4".parse::<Crop>().is_err());
        assert!("a,2,3,4".parse::<Crop>().is_err());
        let c = clip_crop(Crop { x: 6, y: 1, w: 10, h: 2 }, 8, 8).unwrap();
        assert_eq!((c.w, c.h), (2, 2));
        assert_eq!(clip_crop(Crop { x: 8, y: 0, w: 1, h: 1 }, 8, 8), None);
    }

    #[test]
    fn pseudocolor_ends_match_the_colormap() {
        let rgb = pseudocolor(&[0, 255]);
        assert_eq!(&rgb[..3], &[0, 0, 4]);
        assert_eq!(rgb.len(), 6);
    }
}
