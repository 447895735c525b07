//! Binary masks stored as canonical row-major runs, plus the geometric
//! supervision derived from them (centroid, area, equivalent radius).
//!
//! Wire form: `{"w":W,"h":H,"runs":[[start,len],...]}` with `start = y*W + x`.
//! Runs are sorted, non-empty, and never touch each other, so every mask has
//! exactly one encoding. Runs may wrap across row ends.

use std::collections::VecDeque;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::PixelCoord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    pub fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];
        const EIGHT: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }

    /// In-bounds neighbours of `(x, y)` in row-major order.
    pub fn neighbors(self, x: usize, y: usize, width: usize, height: usize) -> impl Iterator<Item = (usize, usize)> {
        self.offsets().iter().filter_map(move |&(dx, dy)| {
            let nx = x.checked_add_signed(dx)?;
            let ny = y.checked_add_signed(dy)?;
            (nx < width && ny < height).then_some((nx, ny))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Run {
    pub start: usize,
    pub len: usize,
}

impl Run {
    fn end(&self) -> usize {
        self.start + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RleJson", into = "RleJson")]
pub struct Mask {
    width: usize,
    height: usize,
    runs: Vec<Run>,
}

#[derive(Serialize, Deserialize)]
struct RleJson {
    w: usize,
    h: usize,
    runs: Vec<[usize; 2]>,
}

impl From<Mask> for RleJson {
    fn from(m: Mask) -> Self {
        RleJson {
            w: m.width,
            h: m.height,
            runs: m.runs.iter().map(|r| [r.start, r.len]).collect(),
        }
    }
}

impl TryFrom<RleJson> for Mask {
    type Error = Error;

    fn try_from(j: RleJson) -> Result<Self> {
        Mask::from_runs(j.w, j.h, j.runs.iter().map(|&[start, len]| Run { start, len }))
    }
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            runs: Vec::new(),
        }
    }

    /// Validates runs and merges touching ones into canonical form.
    pub fn from_runs(width: usize, height: usize, runs: impl IntoIterator<Item = Run>) -> Result<Self> {
        let total = width * height;
        let mut out: Vec<Run> = Vec::new();
        for run in runs {
            if run.len == 0 {
                return Err(Error::MalformedRle(format!("zero-length run at {}", run.start)));
            }
            if run.end() > total {
                return Err(Error::MalformedRle(format!(
                    "run [{}, {}] exceeds {} pixels",
                    run.start, run.len, total
                )));
            }
            match out.last_mut() {
                Some(prev) if run.start < prev.end() => {
                    return Err(Error::MalformedRle(format!(
                        "run starting at {} overlaps or precedes previous run",
                        run.start
                    )))
                }
                Some(prev) if run.start == prev.end() => prev.len += run.len,
                _ => out.push(run),
            }
        }
        Ok(Self { width, height, runs: out })
    }

    /// Builds a mask from linear indices in any order; duplicates are ignored.
    pub fn from_indices(width: usize, height: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut idx: Vec<usize> = indices.into_iter().collect();
        idx.sort_unstable();
        idx.dedup();
        if let Some(&last) = idx.last() {
            if last >= width * height {
                return Err(Error::OutOfBounds {
                    x: (last % width.max(1)) as i64,
                    y: (last / width.max(1)) as i64,
                    width,
                    height,
                });
            }
        }
        let mut runs: Vec<Run> = Vec::new();
        for i in idx {
            match runs.last_mut() {
                Some(r) if r.end() == i => r.len += 1,
                _ => runs.push(Run { start: i, len: 1 }),
            }
        }
        Ok(Self { width, height, runs })
    }

    pub fn from_pixels(width: usize, height: usize, pixels: impl IntoIterator<Item = PixelCoord>) -> Result<Self> {
        let mut idx = Vec::new();
        for p in pixels {
            if p.x >= width || p.y >= height {
                return Err(Error::OutOfBounds {
                    x: p.x as i64,
                    y: p.y as i64,
                    width,
                    height,
                });
            }
            idx.push(p.y * width + p.x);
        }
        Self::from_indices(width, height, idx)
    }

    pub fn from_bitmap(width: usize, height: usize, bits: &[bool]) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Contract(format!(
                "bitmap has {} entries, expected {}",
                bits.len(),
                width * height
            )));
        }
        Self::from_indices(width, height, bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    pub fn area(&self) -> usize {
        self.runs.iter().map(|r| r.len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn same_shape(&self, other: &Mask) -> Result<()> {
        if self.width == other.width && self.height == other.height {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(self.width, self.height, other.width, other.height))
        }
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.runs.iter().flat_map(|r| r.start..r.end())
    }

    pub fn pixels(&self) -> impl Iterator<Item = PixelCoord> + '_ {
        let w = self.width;
        self.indices().map(move |i| PixelCoord::new(i % w, i / w))
    }

    pub fn contains_index(&self, i: usize) -> bool {
        let pos = self.runs.partition_point(|r| r.end() <= i);
        self.runs.get(pos).is_some_and(|r| r.start <= i)
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height && self.contains_index(y * self.width + x)
    }

    pub fn to_bitmap(&self) -> Vec<bool> {
        let mut bits = vec![false; self.width * self.height];
        for i in self.indices() {
            bits[i] = true;
        }
        bits
    }

    /// Number of pixels in both masks.
    pub fn intersection_area(&self, other: &Mask) -> usize {
        let (mut i, mut j, mut total) = (0, 0, 0);
        while i < self.runs.len() && j < other.runs.len() {
            let (a, b) = (self.runs[i], other.runs[j]);
            let lo = a.start.max(b.start);
            let hi = a.end().min(b.end());
            if hi > lo {
                total += hi - lo;
            }
            if a.end() < b.end() {
                i += 1;
            } else {
                j += 1;
            }
        }
        total
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.same_shape(other)?;
        Mask::from_indices(self.width, self.height, self.indices().chain(other.indices()))
    }

    pub fn difference(&self, other: &Mask) -> Result<Mask> {
        self.same_shape(other)?;
        Mask::from_indices(self.width, self.height, self.indices().filter(|&i| !other.contains_index(i)))
    }

    /// Shifts every pixel; fails if any lands outside the frame.
    pub fn translate(&self, dx: isize, dy: isize) -> Result<Mask> {
        let pixels: Result<Vec<PixelCoord>> = self
            .pixels()
            .map(|p| {
                let x = p.x as isize + dx;
                let y = p.y as isize + dy;
                if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
                    Err(Error::OutOfBounds {
                        x: x as i64,
                        y: y as i64,
                        width: self.width,
                        height: self.height,
                    })
                } else {
                    Ok(PixelCoord::new(x as usize, y as usize))
                }
            })
            .collect();
        Mask::from_pixels(self.width, self.height, pixels?)
    }

    /// Square (Chebyshev) dilation by `radius`, clipped to the frame.
    pub fn dilate(&self, radius: usize) -> Mask {
        let (w, h) = (self.width, self.height);
        let mut bits = vec![false; w * h];
        for p in self.pixels() {
            let (x0, x1) = (p.x.saturating_sub(radius), (p.x + radius).min(w - 1));
            let (y0, y1) = (p.y.saturating_sub(radius), (p.y + radius).min(h - 1));
            for y in y0..=y1 {
                bits[y * w + x0..=y * w + x1].fill(true);
            }
        }
        Mask::from_bitmap(w, h, &bits).expect("bitmap sized from mask")
    }

    /// Mask pixels having at least one 4-neighbour outside the mask (or the frame edge).
    pub fn contour(&self) -> Mask {
        let (w, h) = (self.width, self.height);
        let inner: Vec<usize> = self
            .pixels()
            .filter(|p| {
                let on_edge = p.x == 0 || p.y == 0 || p.x + 1 == w || p.y + 1 == h;
                on_edge
                    || Connectivity::Four
                        .neighbors(p.x, p.y, w, h)
                        .any(|(nx, ny)| !self.contains(nx, ny))
            })
            .map(|p| p.y * w + p.x)
            .collect();
        Mask::from_indices(w, h, inner).expect("subset of mask")
    }

    /// Connected components in row-major order of their first pixel.
    pub fn components(&self, connectivity: Connectivity) -> Vec<Mask> {
        let (w, h) = (self.width, self.height);
        let bits = self.to_bitmap();
        let mut seen = vec![false; w * h];
        let mut out = Vec::new();
        let mut queue = VecDeque::new();
        for start in self.indices() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            queue.push_back(start);
            let mut members = Vec::new();
            while let Some(i) = queue.pop_front() {
                members.push(i);
                for (nx, ny) in connectivity.neighbors(i % w, i / w, w, h) {
                    let j = ny * w + nx;
                    if bits[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
            out.push(Mask::from_indices(w, h, members).expect("indices from mask"));
        }
        out
    }

    pub fn bounding_box(&self) -> Option<(PixelCoord, PixelCoord)> {
        let mut it = self.pixels();
        let first = it.next()?;
        let (mut x0, mut y0, mut x1, mut y1) = (first.x, first.y, first.x, first.y);
        for p in it {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
        }
        Some((PixelCoord::new(x0, y0), PixelCoord::new(x1, y1)))
    }

    pub fn geometry(&self) -> Result<GeomSupervision> {
        mask_geometry(self)
    }

    pub fn encode_rle(&self) -> String {
        serde_json::to_string(self).expect("mask serializes")
    }

    pub fn decode_rle(s: &str) -> Result<Mask> {
        serde_json::from_str::<RleJson>(s)
            .map_err(|e| Error::MalformedRle(e.to_string()))?
            .try_into()
    }

    /// 8-bit grayscale PNG, foreground 255, background 0.
    pub fn to_png_bytes(&self) -> Vec<u8> {
        let mut img = GrayImage::new(self.width as u32, self.height as u32);
        let raw: &mut [u8] = &mut img;
        for i in self.indices() {
            raw[i] = 255;
        }
        let mut out = Cursor::new(Vec::new());
        DynamicImage::ImageLuma8(img)
            .write_to(&mut out, ImageFormat::Png)
            .expect("png encoding to memory");
        out.into_inner()
    }

    pub fn from_png_bytes(bytes: &[u8]) -> Result<Mask> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        if w == 0 || h == 0 {
            return Err(Error::ZeroSize);
        }
        let (samples, full): (Vec<u16>, u16) = match img {
            DynamicImage::ImageLuma8(buf) => (buf.into_raw().into_iter().map(u16::from).collect(), 255),
            DynamicImage::ImageLuma16(buf) => (buf.into_raw(), u16::MAX),
            other => return Err(Error::MultiChannel(format!("{:?}", other.color()))),
        };
        if let Some(&bad) = samples.iter().find(|&&v| v != 0 && v != full) {
            return Err(Error::NonBinaryMask(bad));
        }
        Mask::from_indices(w, h, samples.iter().enumerate().filter(|(_, &v)| v == full).map(|(i, _)| i))
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_png_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_png(path: impl AsRef<Path>) -> Result<Mask> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Mask::from_png_bytes(&bytes)
    }
}

/// Point/radius supervision extracted from a mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeomSupervision {
    pub centroid: [f64; 2],
    pub area: usize,
    pub equiv_radius: f64,
}

pub fn equivalent_radius(area: usize) -> f64 {
    (area as f64 / std::f64::consts::PI).sqrt()
}

/// Unweighted centroid of pixel centers (pixel `(x, y)` is centered at `(x, y)`).
pub fn mask_geometry(m: &Mask) -> Result<GeomSupervision> {
    let area = m.area();
    if area == 0 {
        return Err(Error::EmptyMask);
    }
    let (mut sx, mut sy) = (0u64, 0u64);
    for p in m.pixels() {
        sx += p.x as u64;
        sy += p.y as u64;
    }
    Ok(GeomSupervision {
        centroid: [sx as f64 / area as f64, sy as f64 / area as f64],
        area,
        equiv_radius: equivalent_radius(area),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_pixel_geometry() {
        let m = Mask::from_pixels(10, 10, [PixelCoord::new(5, 7)]).unwrap();
        let g = m.geometry().unwrap();
        assert_eq!(g.centroid, [5.0, 7.0]);
        assert_eq!(g.area, 1);
        assert!((g.equiv_radius - 0.5641895835477563).abs() < 1e-12);
    }

    #[test]
    fn block_geometry() {
        let m = Mask::from_pixels(4, 4, [(0, 0), (1, 0), (0, 1), (1, 1)].map(PixelCoord::from)).unwrap();
        let g = m.geometry().unwrap();
        assert_eq!(g.centroid, [0.5, 0.5]);
        assert_eq!(g.area, 4);
        assert!((g.equiv_radius - 2.0 / std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_geometry_errors() {
        assert!(matches!(Mask::empty(3, 3).geometry(), Err(Error::EmptyMask)));
    }

    #[test]
    fn rle_fixtures() {
        assert_eq!(Mask::empty(4, 2).encode_rle(), r#"{"w":4,"h":2,"runs":[]}"#);
        let row = Mask::from_pixels(10, 3, (0..10).map(|x| PixelCoord::new(x, 1))).unwrap();
        assert_eq!(row.runs(), &[Run { start: 10, len: 10 }]);
        assert_eq!(row.encode_rle(), r#"{"w":10,"h":3,"runs":[[10,10]]}"#);
    }

    #[test]
    fn rle_rejects_bad_runs() {
        for bad in [
            r#"{"w":4,"h":2,"runs":[[0,0]]}"#,
            r#"{"w":4,"h":2,"runs":[[6,3]]}"#,
            r#"{"w":4,"h":2,"runs":[[3,2],[1,1]]}"#,
            r#"{"w":4,"h":2,"runs":[[0,3],[2,2]]}"#,
            r#"{"w":4,"h":2}"#,
            "garbage",
        ] {
            assert!(matches!(Mask::decode_rle(bad), Err(Error::MalformedRle(_))), "{bad}");
        }
    }

    #[test]
    fn rle_merges_touching_runs() {
        let m = Mask::decode_rle(r#"{"w":4,"h":2,"runs":[[0,2],[2,1]]}"#).unwrap();
        assert_eq!(m.encode_rle(), r#"{"w":4,"h":2,"runs":[[0,3]]}"#);
    }

    #[test]
    fn png_rejects_gray_values() {
        let mut img = GrayImage::new(2, 2);
        img.put_pixel(1, 1, image::Luma([128]));
        let mut out = Cursor::new(Vec::new());
        DynamicImage::ImageLuma8(img).write_to(&mut out, ImageFormat::Png).unwrap();
        assert!(matches!(Mask::from_png_bytes(out.get_ref()), Err(Error::NonBinaryMask(128))));
    }

    #[test]
    fn components_and_contour() {
        let m = Mask::from_pixels(
            6,
            6,
            [(0, 0), (1, 1), (4, 4), (4, 5), (5, 4), (5, 5)].map(PixelCoord::from),
        )
        .unwrap();
        assert_eq!(m.components(Connectivity::Eight).len(), 2);
        assert_eq!(m.components(Connectivity::Four).len(), 3);

        let block = Mask::from_pixels(7, 7, (1..6).flat_map(|y| (1..6).map(move |x| PixelCoord::new(x, y)))).unwrap();
        assert_eq!(block.contour().area(), 16);
    }

    fn arb_mask() -> impl Strategy<Value = Mask> {
        (1usize..24, 1usize..24)
            .prop_flat_map(|(w, h)| (Just(w), Just(h), proptest::collection::vec(any::<bool>(), w * h)))
            .prop_map(|(w, h, bits)| Mask::from_bitmap(w, h, &bits).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn rle_and_png_roundtrip(m in arb_mask()) {
            let text = m.encode_rle();
            let back = Mask::decode_rle(&text).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(back.encode_rle(), text);
            let png = Mask::from_png_bytes(&m.to_png_bytes()).unwrap();
            prop_assert_eq!(png, m);
        }

        #[test]
        fn geometry_matches_naive_loop_and_translates(m in arb_mask(), dx in -3isize..4, dy in -3isize..4) {
            prop_assume!(!m.is_empty());
            let bits = m.to_bitmap();
            let (mut n, mut sx, mut sy) = (0usize, 0.0f64, 0.0f64);
            for y in 0..m.height() {
                for x in 0..m.width() {
                    if bits[y * m.width() + x] {
                        n += 1;
                        sx += x as f64;
                        sy += y as f64;
                    }
                }
            }
            let g = m.geometry().unwrap();
            prop_assert_eq!(g.area, n);
            prop_assert!((g.centroid[0] - sx / n as f64).abs() < 1e-12);
            prop_assert!((g.centroid[1] - sy / n as f64).abs() < 1e-12);
            let (lo, hi) = m.bounding_box().unwrap();
            prop_assert!(g.centroid[0] >= lo.x as f64 && g.centroid[0] <= hi.x as f64);
            prop_assert!(g.centroid[1] >= lo.y as f64 && g.centroid[1] <= hi.y as f64);

            if let Ok(shifted) = m.translate(dx, dy) {
                let gs = shifted.geometry().unwrap();
                prop_assert_eq!(gs.area, g.area);
                prop_assert_eq!(gs.equiv_radius, g.equiv_radius);
                prop_assert!((gs.centroid[0] - g.centroid[0] - dx as f64).abs() < 1e-9);
                prop_assert!((gs.centroid[1] - g.centroid[1] - dy as f64).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn equivalent_radius_is_monotone() {
        let radii: Vec<f64> = (1..500).map(equivalent_radius).collect();
        assert!(radii.windows(2).all(|w| w[0] < w[1]));
    }
}
