//! Physics-driven adaptive mask generation.
//!
//! A region is grown greedily from the seed by always absorbing the brightest
//! frontier pixel. After every step the posterior energy
//!
//! ```text
//! E(S_n) = ln(ln n) + ln((mu_in - mu_out) / (sigma_in + eps)) - d_max^2 / (2 R_s^2)
//! ```
//!
//! is recorded, and the final mask is the growth prefix with the largest
//! energy. Nothing stops growth early except the frontier running dry or the
//! growth budget (`ceil(pi R_s^2)` by default) being reached.
//!
//! `mu_out` is the mean of the background ring `dilate(S_n, ring_width) \ S_n`
//! (square structuring element, clipped to the frame).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{Connectivity, Mask};
use crate::raster::{unify_polarity, PixelCoord, Raster, DEFAULT_POLARITY_WINDOW};

pub const DEFAULT_R_S: f64 = 20.0;
pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_WARMUP: usize = 5;
pub const DEFAULT_RING_WIDTH: usize = 3;
pub const DEFAULT_GUIDED_K: f64 = 5.0;

/// Which energy terms take part in the total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    NoSizePrior,
    /// Data term becomes `-ln(sigma_in + eps)`.
    NoSaliency,
    /// Data term becomes `ln(mu_in - mu_out)`.
    NoHomogeneity,
    /// Geometric penalty dropped; the growth budget still applies.
    NoGeometricPrior,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoSizePrior,
        Variant::NoSaliency,
        Variant::NoHomogeneity,
        Variant::NoGeometricPrior,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoSizePrior => "no_size_prior",
            Variant::NoSaliency => "no_saliency",
            Variant::NoHomogeneity => "no_homogeneity",
            Variant::NoGeometricPrior => "no_geometric_prior",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PamgConfig {
    /// Spatial support `R_s` in pixels.
    pub r_s: f64,
    pub connectivity: Connectivity,
    /// Added to `sigma_in` in the data term.
    pub epsilon: f64,
    /// Steps with `n <= warmup` record the sentinel.
    pub warmup: usize,
    /// Maximum region size; `None` means `ceil(pi R_s^2)`.
    pub growth_budget: Option<usize>,
    pub variant: Variant,
    /// Dilation width of the background ring used for `mu_out`.
    pub ring_width: usize,
    /// Window side for the polarity median.
    pub polarity_window: usize,
}

impl Default for PamgConfig {
    fn default() -> Self {
        Self {
            r_s: DEFAULT_R_S,
            connectivity: Connectivity::Eight,
            epsilon: DEFAULT_EPSILON,
            warmup: DEFAULT_WARMUP,
            growth_budget: None,
            variant: Variant::Full,
            ring_width: DEFAULT_RING_WIDTH,
            polarity_window: DEFAULT_POLARITY_WINDOW,
        }
    }
}

impl PamgConfig {
    pub fn with_r_s(mut self, r_s: f64) -> Self {
        self.r_s = r_s;
        self
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.r_s > 0.0 && self.r_s.is_finite()) {
            return bad(format!("r_s must be positive, got {}", self.r_s));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.warmup < 1 {
            return bad("warmup must be at least 1".into());
        }
        if self.ring_width < 1 {
            return bad("ring_width must be at least 1".into());
        }
        if self.polarity_window < 3 || self.polarity_window.is_multiple_of(2) {
            return bad(format!("polarity_window must be odd and >= 3, got {}", self.polarity_window));
        }
        if let Some(b) = self.growth_budget {
            if b < self.warmup + 1 {
                return bad(format!("growth_budget {b} must be at least warmup + 1 = {}", self.warmup + 1));
            }
        }
        Ok(())
    }

    /// Effective budget for an image with `area` pixels.
    pub fn budget(&self, area: usize) -> usize {
        let default = || {
            let disc = (std::f64::consts::PI * self.r_s * self.r_s).ceil() as usize;
            disc.max(self.warmup + 1)
        };
        self.growth_budget.unwrap_or_else(default).min(area)
    }
}

/// Region statistics after a growth step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub n: usize,
    pub mu_in: f64,
    /// Population standard deviation.
    pub sigma_in: f64,
    /// Largest Euclidean distance from a region pixel to the seed.
    pub d_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyTerms {
    pub size: f64,
    pub saliency_contrast: f64,
    pub data: f64,
    pub geo: f64,
    pub total: f64,
}

/// Evaluates the energy terms. `Ok(None)` is the sentinel returned when the
/// region is not brighter than its background.
pub fn energy(stats: &RegionStats, mu_out: f64, cfg: &PamgConfig) -> Result<Option<EnergyTerms>> {
    if stats.n < 2 {
        return Err(Error::Contract(format!("energy needs n >= 2, got {}", stats.n)));
    }
    let contrast = stats.mu_in - mu_out;
    if !(contrast > 0.0) {
        return Ok(None);
    }
    let size = (stats.n as f64).ln().ln();
    let spread = stats.sigma_in + cfg.epsilon;
    let data = (contrast / spread).ln();
    let geo = -(stats.d_max * stats.d_max) / (2.0 * cfg.r_s * cfg.r_s);
    let total = match cfg.variant {
        Variant::Full => size + data + geo,
        Variant::NoSizePrior => data + geo,
        Variant::NoSaliency => size - spread.ln() + geo,
        Variant::NoHomogeneity => size + contrast.ln() + geo,
        Variant::NoGeometricPrior => size + data,
    };
    Ok(Some(EnergyTerms {
        size,
        saliency_contrast: contrast,
        data,
        geo,
        total,
    }))
}

/// Everything recorded by one growth run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthTrace {
    pub width: usize,
    pub height: usize,
    /// `path[0]` is the seed.
    pub path: Vec<PixelCoord>,
    /// `None` is the sentinel (warm-up or non-positive contrast).
    pub energies: Vec<Option<f64>>,
    pub stats_per_step: Vec<RegionStats>,
    /// Background ring mean per step; `None` once the ring is empty.
    pub mu_out: Vec<Option<f64>>,
    pub k_star: Option<usize>,
    pub inverted: bool,
}

impl GrowthTrace {
    pub fn len(&self) -> usize {
        self.path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.path.is_empty()
    }

    /// Mask of `path[0..=k]`.
    pub fn prefix_mask(&self, k: usize) -> Mask {
        Mask::from_pixels(self.width, self.height, self.path[..=k].iter().copied())
            .expect("path pixels are in bounds")
    }
}

/// First index holding the largest finite energy.
pub fn select_k_star(energies: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in energies.iter().enumerate() {
        if let Some(e) = *e {
            if best.is_none_or(|(_, b)| e > b) {
                best = Some((i, e));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Welford accumulator, population variance.
#[derive(Debug, Clone, Copy, Default)]
struct Running {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Running {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn std(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2.max(0.0) / self.n as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Frontier {
    value: f64,
    seq: u64,
    index: usize,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    // max-heap: brighter first, then earlier insertion
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Incrementally maintained `dilate(S, w) \ S`.
struct Ring {
    width: usize,
    height: usize,
    radius: usize,
    cover: Vec<u32>,
    sum: f64,
    count: usize,
}

impl Ring {
    fn new(width: usize, height: usize, radius: usize) -> Self {
        Self {
            width,
            height,
            radius,
            cover: vec![0; width * height],
            sum: 0.0,
            count: 0,
        }
    }

    fn absorb(&mut self, img: &[f64], in_region: &[bool], x: usize, y: usize) {
        let w = self.width;
        let idx = y * w + x;
        if self.cover[idx] > 0 {
            self.sum -= img[idx];
            self.count -= 1;
        }
        let (x0, x1) = (x.saturating_sub(self.radius), (x + self.radius).min(w - 1));
        let (y0, y1) = (y.saturating_sub(self.radius), (y + self.radius).min(self.height - 1));
        for yy in y0..=y1 {
            for xx in x0..=x1 {
                let j = yy * w + xx;
                if self.cover[j] == 0 && !in_region[j] {
                    self.sum += img[j];
                    self.count += 1;
                }
                self.cover[j] += 1;
            }
        }
    }

    fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

/// Runs the greedy growth and records the full trace.
pub fn grow(img: &Raster, seed: PixelCoord, cfg: &PamgConfig) -> Result<GrowthTrace> {
    cfg.validate()?;
    img.check_bounds(seed)?;
    let (img, inverted) = unify_polarity(img, seed, cfg.polarity_window)?;
    let (w, h) = (img.width(), img.height());
    let data = img.data();
    let budget = cfg.budget(w * h);
    let seed_sq = |x: usize, y: usize| {
        let dx = x as i64 - seed.x as i64;
        let dy = y as i64 - seed.y as i64;
        (dx * dx + dy * dy) as u64
    };

    let mut visited = vec![false; w * h];
    let mut in_region = vec![false; w * h];
    let mut ring = Ring::new(w, h, cfg.ring_width);
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut running = Running::default();
    let mut d_max_sq = 0u64;

    let mut trace = GrowthTrace {
        width: w,
        height: h,
        path: Vec::with_capacity(budget),
        energies: Vec::with_capacity(budget),
        stats_per_step: Vec::with_capacity(budget),
        mu_out: Vec::with_capacity(budget),
        k_star: None,
        inverted,
    };

    let mut current = Some(seed);
    while let Some(p) = current {
        let idx = p.y * w + p.x;
        visited[idx] = true;
        in_region[idx] = true;
        ring.absorb(data, &in_region, p.x, p.y);
        running.push(data[idx]);
        d_max_sq = d_max_sq.max(seed_sq(p.x, p.y));

        let stats = RegionStats {
            n: running.n,
            mu_in: running.mean,
            sigma_in: running.std(),
            d_max: (d_max_sq as f64).sqrt(),
        };
        let mu_out = ring.mean();
        let e = match mu_out {
            Some(mu_out) if stats.n > cfg.warmup => energy(&stats, mu_out, cfg)?.map(|t| t.total),
            _ => None,
        };
        trace.path.push(p);
        trace.energies.push(e);
        trace.stats_per_step.push(stats);
        trace.mu_out.push(mu_out);

        for (nx, ny) in cfg.connectivity.neighbors(p.x, p.y, w, h) {
            let j = ny * w + nx;
            if !visited[j] {
                visited[j] = true;
                heap.push(Frontier {
                    value: data[j],
                    seq,
                    index: j,
                });
                seq += 1;
            }
        }

        current = if running.n >= budget {
            None
        } else {
            heap.pop().map(|f| PixelCoord::new(f.index % w, f.index / w))
        };
    }

    trace.k_star = select_k_star(&trace.energies);
    Ok(trace)
}

/// Mask of the seed through the energy peak.
pub fn backtrack_mask(trace: &GrowthTrace) -> Result<Mask> {
    let k = select_k_star(&trace.energies).ok_or(Error::NoEnergyPeak)?;
    Ok(trace.prefix_mask(k))
}

pub fn generate_mask(img: &Raster, seed: PixelCoord, cfg: &PamgConfig) -> Result<(Mask, GrowthTrace)> {
    let trace = grow(img, seed, cfg)?;
    let mask = backtrack_mask(&trace)?;
    Ok((mask, trace))
}

/// Guided mode: `R_s = k * radius`, budget recomputed from the new `R_s`.
pub fn guided_mask(
    img: &Raster,
    center: PixelCoord,
    radius: f64,
    k: f64,
    cfg: &PamgConfig,
) -> Result<(Mask, GrowthTrace)> {
    if !(radius > 0.0) {
        return Err(Error::InvalidConfig(format!("radius must be positive, got {radius}")));
    }
    if !(k > 1.0) {
        return Err(Error::InvalidConfig(format!("scale factor k must exceed 1, got {k}")));
    }
    let cfg = PamgConfig {
        r_s: k * radius,
        growth_budget: None,
        ..*cfg
    };
    generate_mask(img, center, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(n: usize, mu_in: f64, sigma_in: f64, d_max: f64) -> RegionStats {
        RegionStats { n, mu_in, sigma_in, d_max }
    }

    #[test]
    fn zero_contrast_is_sentinel() {
        let cfg = PamgConfig::default();
        assert_eq!(energy(&stats(10, 0.5, 0.1, 2.0), 0.5, &cfg).unwrap(), None);
        assert_eq!(energy(&stats(10, 0.4, 0.1, 2.0), 0.5, &cfg).unwrap(), None);
    }

    #[test]
    fn energy_rejects_single_pixel() {
        assert!(matches!(
            energy(&stats(1, 0.5, 0.0, 0.0), 0.1, &PamgConfig::default()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn energy_reference_values() {
        // direct scalar evaluation of each variant
        let s = stats(10, 0.8, 0.05, 3.0);
        let cfg = PamgConfig::default();
        let size = 10f64.ln().ln();
        let data = (0.6f64 / 0.050001).ln();
        let geo = -9.0 / 800.0;
        let full = energy(&s, 0.2, &cfg).unwrap().unwrap();
        assert!((full.total - (size + data + geo)).abs() < 1e-12);
        assert!((full.total - 3.307669095235953).abs() < 1e-12);
        assert!((full.total - (full.size + full.data + full.geo)).abs() < 1e-12);

        let total = |v: Variant| energy(&s, 0.2, &cfg.with_variant(v)).unwrap().unwrap().total;
        assert!((total(Variant::NoGeometricPrior) - (full.total + 9.0 / 800.0)).abs() < 1e-12);
        assert!((total(Variant::NoSizePrior) - (data + geo)).abs() < 1e-12);
        assert!((total(Variant::NoSaliency) - (size - 0.050001f64.ln() + geo)).abs() < 1e-12);
        assert!((total(Variant::NoHomogeneity) - (size + 0.6f64.ln() + geo)).abs() < 1e-12);
    }

    #[test]
    fn k_star_picks_first_maximum() {
        let s = |v: &[Option<f64>]| select_k_star(v);
        let neg = None;
        assert_eq!(s(&[neg, neg, neg, neg, neg, Some(1.0), Some(2.0), Some(1.5)]), Some(6));
        assert_eq!(s(&[neg, neg, neg, neg, neg, Some(2.0), Some(2.0)]), Some(5));
        assert_eq!(s(&[neg, neg]), None);
    }

    #[test]
    fn backtrack_takes_prefix_through_peak() {
        let path: Vec<PixelCoord> = (0..8).map(|x| PixelCoord::new(x, 0)).collect();
        let trace = GrowthTrace {
            width: 8,
            height: 1,
            path,
            energies: vec![None, None, None, None, None, Some(1.0), Some(2.0), Some(1.5)],
            stats_per_step: vec![],
            mu_out: vec![],
            k_star: Some(6),
            inverted: false,
        };
        assert_eq!(backtrack_mask(&trace).unwrap().area(), 7);
        let flat = GrowthTrace {
            energies: vec![None; 8],
            ..trace
        };
        assert!(matches!(backtrack_mask(&flat), Err(Error::NoEnergyPeak)));
    }

    #[test]
    fn constant_image_has_no_peak() {
        let img = Raster::constant(32, 32, 0.3).unwrap();
        let trace = grow(&img, PixelCoord::new(16, 16), &PamgConfig::default()).unwrap();
        assert!(trace.energies.iter().all(Option::is_none));
        assert_eq!(trace.k_star, None);
        assert!(matches!(
            generate_mask(&img, PixelCoord::new(16, 16), &PamgConfig::default()),
            Err(Error::NoEnergyPeak)
        ));
    }

    #[test]
    fn config_validation() {
        let ok = PamgConfig::default();
        assert!(ok.validate().is_ok());
        assert!(PamgConfig { r_s: 0.0, ..ok }.validate().is_err());
        assert!(PamgConfig { epsilon: 0.0, ..ok }.validate().is_err());
        assert!(PamgConfig { warmup: 0, ..ok }.validate().is_err());
        assert!(PamgConfig { ring_width: 0, ..ok }.validate().is_err());
        assert!(PamgConfig { growth_budget: Some(5), ..ok }.validate().is_err());
        assert!(PamgConfig { growth_budget: Some(6), ..ok }.validate().is_ok());
        assert_eq!(ok.budget(1 << 20), 1257);
        assert_eq!(ok.budget(100), 100);
        assert_eq!(ok.with_r_s(1.0).budget(1000), 6);
    }

    #[test]
    fn seed_out_of_bounds() {
        let img = Raster::constant(8, 8, 0.3).unwrap();
        assert!(matches!(
            grow(&img, PixelCoord::new(8, 0), &PamgConfig::default()),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn guided_mode_preconditions() {
        let img = Raster::constant(8, 8, 0.3).unwrap();
        let c = PixelCoord::new(4, 4);
        let cfg = PamgConfig::default();
        assert!(guided_mask(&img, c, 0.0, 5.0, &cfg).is_err());
        assert!(matches!(guided_mask(&img, c, 2.0, 1.0, &cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("nope".parse::<Variant>().is_err());
    }
}
