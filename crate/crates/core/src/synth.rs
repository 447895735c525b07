//! Synthetic infrared scenes: isotropic Gaussian targets over noise,
//! smoothed clutter and optional bright edge segments, with exact ground truth.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{GeomSupervision, Mask};
use crate::par::{self, Execution};
use crate::raster::{BitDepth, Raster, SourceImage};

pub const DEFAULT_GT_TAU: f64 = 0.2;
const MIN_ANNULUS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    /// Sub-pixel center `(x, y)`.
    pub center: [f64; 2],
    pub sigma_t: f64,
    /// Peak amplitude; negative for dark targets.
    pub amplitude: f64,
}

impl TargetSpec {
    #[inline]
    pub fn weight(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        (-(dx * dx + dy * dy) / (2.0 * self.sigma_t * self.sigma_t)).exp()
    }
}

/// Bright line with a Gaussian cross-section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeSegment {
    pub from: [f64; 2],
    pub to: [f64; 2],
    pub amplitude: f64,
    pub width: f64,
}

impl EdgeSegment {
    fn distance(&self, x: f64, y: f64) -> f64 {
        let (ax, ay) = (self.from[0], self.from[1]);
        let (bx, by) = (self.to[0] - ax, self.to[1] - ay);
        let len2 = bx * bx + by * by;
        let t = if len2 > 0.0 {
            (((x - ax) * bx + (y - ay) * by) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        ((x - ax - t * bx).powi(2) + (y - ay - t * by).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    pub base: f64,
    /// Standard deviation of the white noise component.
    pub noise_sigma: f64,
    /// Standard deviation of the smoothed clutter component.
    pub structure_gain: f64,
    /// Half-width of the box filter that correlates the clutter field.
    pub structure_corr_len: usize,
    pub edges: Vec<EdgeSegment>,
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        Self {
            base: 0.2,
            noise_sigma: 0.02,
            structure_gain: 0.0,
            structure_corr_len: 3,
            edges: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub width: usize,
    pub height: usize,
    pub targets: Vec<TargetSpec>,
    pub background: BackgroundSpec,
    pub rng_seed: u64,
    /// GT threshold as a fraction of peak amplitude.
    pub gt_tau: f64,
}

/// Contrast statistics of one target against its background annulus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScrGamma {
    /// `(mu_T - mu_B) / sigma_B`.
    pub scr: f64,
    /// `sigma_B / sigma_T`; infinite when the target is flat.
    pub gamma: f64,
    /// GT pixel count.
    pub n: usize,
}

/// Truth manifest record for one target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetTruth {
    pub index: usize,
    pub spec: TargetSpec,
    pub measured: Option<ScrGamma>,
    pub geometry: Option<GeomSupervision>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneTruth {
    pub raster: Raster,
    pub gt_masks: Vec<Mask>,
    pub targets: Vec<TargetTruth>,
}

impl SceneTruth {
    /// Exact dark/bright mirror: complemented raster, same truth.
    pub fn mirrored(&self) -> SceneTruth {
        SceneTruth {
            raster: self.raster.complement(),
            gt_masks: self.gt_masks.clone(),
            targets: self.targets.clone(),
        }
    }

    /// Writes `{name}.png` (16-bit), `{name}_gt{i}.json` RLE files and
    /// appends one truth line per target to `truth`.
    pub fn export(&self, dir: &Path, name: &str, truth: &mut impl Write) -> Result<()> {
        let png = raster_to_source(&self.raster).to_png_bytes()?;
        let path = dir.join(format!("{name}.png"));
        std::fs::write(&path, png).map_err(|e| Error::io(&path, e))?;
        for (i, m) in self.gt_masks.iter().enumerate() {
            let path = dir.join(format!("{name}_gt{i}.json"));
            std::fs::write(&path, m.encode_rle()).map_err(|e| Error::io(&path, e))?;
            let t = &self.targets[i];
            let record = serde_json::json!({
                "scene": name,
                "target": i,
                "scr": t.measured.map(|m| m.scr),
                "gamma": t.measured.map(|m| m.gamma),
                "n": m.area(),
                "centroid": t.geometry.map(|g| g.centroid),
                "radius": t.geometry.map(|g| g.equiv_radius),
            });
            writeln!(truth, "{record}").map_err(|e| Error::io(dir, e))?;
        }
        Ok(())
    }
}

/// 16-bit samples of a raster, `round(v * 65535)`.
pub fn raster_to_source(r: &Raster) -> SourceImage {
    SourceImage {
        width: r.width(),
        height: r.height(),
        bit_depth: BitDepth::Sixteen,
        samples: r.data().iter().map(|v| (v * 65535.0).round() as u16).collect(),
    }
}

fn check_spec(spec: &SyntheticSpec) -> Result<()> {
    if spec.width == 0 || spec.height == 0 {
        return Err(Error::ZeroSize);
    }
    if !(spec.gt_tau > 0.0 && spec.gt_tau <= 1.0) {
        return Err(Error::InvalidScene(format!("gt_tau must be in (0, 1], got {}", spec.gt_tau)));
    }
    if spec.background.noise_sigma < 0.0 || spec.background.structure_gain < 0.0 {
        return Err(Error::InvalidScene("noise levels must be non-negative".into()));
    }
    for (i, t) in spec.targets.iter().enumerate() {
        if !(t.sigma_t > 0.0) {
            return Err(Error::InvalidScene(format!("target {i}: sigma_t must be positive")));
        }
        let m = 3.0 * t.sigma_t;
        let [cx, cy] = t.center;
        if cx - m < 0.0 || cy - m < 0.0 || cx + m > (spec.width - 1) as f64 || cy + m > (spec.height - 1) as f64 {
            return Err(Error::InvalidScene(format!(
                "target {i} at ({cx}, {cy}) does not fit with a 3-sigma margin"
            )));
        }
    }
    Ok(())
}

fn noise_field(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Unit-variance box-smoothed field (clipped windows rescaled by `sqrt(count)`).
fn smooth_field(raw: &[f64], width: usize, height: usize, radius: usize) -> Vec<f64> {
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let (x0, x1) = (x.saturating_sub(radius), (x + radius).min(width - 1));
            let (y0, y1) = (y.saturating_sub(radius), (y + radius).min(height - 1));
            let mut sum = 0.0;
            for yy in y0..=y1 {
                sum += raw[yy * width + x0..=yy * width + x1].iter().sum::<f64>();
            }
            let count = ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64;
            out[y * width + x] = sum / count.sqrt();
        }
    }
    out
}

/// GT mask of a target: pixels whose own contribution reaches `tau * |A|`.
pub fn target_gt_mask(t: &TargetSpec, width: usize, height: usize, tau: f64) -> Mask {
    if t.amplitude == 0.0 {
        return Mask::empty(width, height);
    }
    let reach = t.sigma_t * (2.0 * (1.0 / tau).ln()).sqrt();
    let x0 = (t.center[0] - reach).floor().max(0.0) as usize;
    let y0 = (t.center[1] - reach).floor().max(0.0) as usize;
    let x1 = ((t.center[0] + reach).ceil() as usize).min(width - 1);
    let y1 = ((t.center[1] + reach).ceil() as usize).min(height - 1);
    let mut idx = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            if t.weight(x as f64, y as f64) >= tau {
                idx.push(y * width + x);
            }
        }
    }
    Mask::from_indices(width, height, idx).expect("indices within frame")
}

pub fn render(spec: &SyntheticSpec) -> Result<SceneTruth> {
    check_spec(spec)?;
    let (w, h) = (spec.width, spec.height);
    let bg = &spec.background;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let white = noise_field(&mut rng, w * h);
    let structure = smooth_field(&noise_field(&mut rng, w * h), w, h, bg.structure_corr_len);

    let gt_masks: Vec<Mask> = spec.targets.iter().map(|t| target_gt_mask(t, w, h, spec.gt_tau)).collect();
    for i in 0..gt_masks.len() {
        for j in i + 1..gt_masks.len() {
            if gt_masks[i].intersection_area(&gt_masks[j]) > 0 {
                return Err(Error::InvalidScene(format!("GT masks of targets {i} and {j} overlap")));
            }
        }
    }

    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (fx, fy) = (x as f64, y as f64);
            let mut v = bg.base + bg.noise_sigma * white[i] + bg.structure_gain * structure[i];
            for e in &bg.edges {
                let d = e.distance(fx, fy);
                v += e.amplitude * (-(d * d) / (2.0 * e.width * e.width)).exp();
            }
            for t in &spec.targets {
                v += t.amplitude * t.weight(fx, fy);
            }
            data.push(v);
        }
    }
    let raster = Raster::from_clamped(w, h, data, BitDepth::Sixteen)?;

    let targets = (0..spec.targets.len())
        .map(|i| TargetTruth {
            index: i,
            spec: spec.targets[i],
            measured: measure_in(&raster, &gt_masks, i).ok(),
            geometry: gt_masks[i].geometry().ok(),
        })
        .collect();
    Ok(SceneTruth {
        raster,
        gt_masks,
        targets,
    })
}

fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let v: Vec<f64> = values.collect();
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var.sqrt(), n)
}

/// SCR and uniformity ratio of `target` against the annulus
/// `dilate(target, 5) \ dilate(target, 2)`, excluding other GT regions.
pub fn measure_region(raster: &Raster, target: &Mask, others: &[&Mask]) -> Result<ScrGamma> {
    if target.is_empty() {
        return Err(Error::EmptyMask);
    }
    let inner = target.dilate(2);
    let mut annulus = target.dilate(5).difference(&inner)?;
    for o in others {
        annulus = annulus.difference(&o.dilate(2))?;
    }
    if annulus.area() < MIN_ANNULUS {
        return Err(Error::AnnulusTooSmall(annulus.area(), MIN_ANNULUS));
    }
    let (mu_t, sigma_t, n) = mean_std(target.indices().map(|i| raster.data()[i]));
    let (mu_b, sigma_b, _) = mean_std(annulus.indices().map(|i| raster.data()[i]));
    let delta = mu_t - mu_b;
    let scr = if sigma_b > 0.0 {
        delta / sigma_b
    } else if delta == 0.0 {
        0.0
    } else {
        delta.signum() * f64::INFINITY
    };
    let gamma = if sigma_t > 0.0 { sigma_b / sigma_t } else { f64::INFINITY };
    Ok(ScrGamma { scr, gamma, n })
}

fn measure_in(raster: &Raster, masks: &[Mask], index: usize) -> Result<ScrGamma> {
    let others: Vec<&Mask> = masks.iter().enumerate().filter(|(j, _)| *j != index).map(|(_, m)| m).collect();
    measure_region(raster, &masks[index], &others)
}

pub fn measure_scr_gamma(scene: &SceneTruth, target_index: usize) -> Result<ScrGamma> {
    if target_index >= scene.gt_masks.len() {
        return Err(Error::InvalidScene(format!("no target {target_index}")));
    }
    measure_in(&scene.raster, &scene.gt_masks, target_index)
}

/// Grid-driven generator parameters shared by the experiment harnesses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteParams {
    pub width: usize,
    pub height: usize,
    /// Nominal SCR used to set the amplitude.
    pub scr_grid: Vec<f64>,
    pub sigma_t_grid: Vec<f64>,
    /// Clutter strength: smoothed-structure std as a multiple of `noise_sigma`.
    pub clutter_grid: Vec<f64>,
    pub base: f64,
    pub noise_sigma: f64,
    pub structure_corr_len: usize,
    /// Adds a bright edge segment passing near each target.
    pub edges: bool,
    /// Edge amplitude as a multiple of the target amplitude.
    pub edge_gain: f64,
    /// Distance range (pixels, edge center line to target center).
    pub edge_distance: [f64; 2],
    pub gt_tau: f64,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self {
            width: 48,
            height: 48,
            scr_grid: vec![5.0, 8.0, 12.0],
            sigma_t_grid: vec![1.0, 1.4, 1.8],
            clutter_grid: vec![0.0, 0.5],
            base: 0.2,
            noise_sigma: 0.02,
            structure_corr_len: 3,
            edges: false,
            edge_gain: 0.8,
            edge_distance: [5.0, 8.0],
            gt_tau: DEFAULT_GT_TAU,
        }
    }
}

/// One point of the parameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub scr: f64,
    pub sigma_t: f64,
    pub clutter: f64,
}

impl SuiteParams {
    /// Cartesian product in `scr`-major order.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &scr in &self.scr_grid {
            for &sigma_t in &self.sigma_t_grid {
                for &clutter in &self.clutter_grid {
                    out.push(GridPoint { scr, sigma_t, clutter });
                }
            }
        }
        out
    }

    /// Single-target scene spec for grid point `g`, randomized by `rng`.
    pub fn scene_spec(&self, g: GridPoint, rng: &mut ChaCha8Rng) -> SyntheticSpec {
        let margin = (3.0 * g.sigma_t).ceil() + 6.0;
        let cx = rng.random_range(margin..(self.width as f64 - 1.0 - margin));
        let cy = rng.random_range(margin..(self.height as f64 - 1.0 - margin));
        let probe = TargetSpec {
            center: [cx, cy],
            sigma_t: g.sigma_t,
            amplitude: 1.0,
        };
        let gt = target_gt_mask(&probe, self.width, self.height, self.gt_tau);
        let mean_w = gt.pixels().map(|p| probe.weight(p.x as f64, p.y as f64)).sum::<f64>() / gt.area().max(1) as f64;
        let sigma_bg = self.noise_sigma * (1.0 + g.clutter * g.clutter).sqrt();
        let amplitude = g.scr * sigma_bg / mean_w;

        let mut edges = Vec::new();
        if self.edges {
            let angle = rng.random_range(0.0..std::f64::consts::PI);
            let dist = rng.random_range(self.edge_distance[0]..=self.edge_distance[1]);
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let (nx, ny) = (angle.cos(), angle.sin());
            let (ox, oy) = (cx + side * dist * nx, cy + side * dist * ny);
            let half = 2.0 * self.width as f64;
            edges.push(EdgeSegment {
                from: [ox - half * ny, oy + half * nx],
                to: [ox + half * ny, oy - half * nx],
                amplitude: self.edge_gain * amplitude,
                width: 1.0,
            });
        }
        SyntheticSpec {
            width: self.width,
            height: self.height,
            targets: vec![TargetSpec {
                center: [cx, cy],
                sigma_t: g.sigma_t,
                amplitude,
            }],
            background: BackgroundSpec {
                base: self.base,
                noise_sigma: self.noise_sigma,
                structure_gain: self.noise_sigma * g.clutter,
                structure_corr_len: self.structure_corr_len,
                edges,
            },
            rng_seed: rng.random(),
            gt_tau: self.gt_tau,
        }
    }
}

/// Per-member seed, independent of generation order.
pub fn member_seed(rng_seed: u64, index: usize) -> u64 {
    let mut z = rng_seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Member `i` uses grid point `i mod |grid|`.
pub fn suite_specs(params: &SuiteParams, count: usize, rng_seed: u64) -> Result<Vec<(GridPoint, SyntheticSpec)>> {
    let grid = params.grid();
    if count > 0 && grid.is_empty() {
        return Err(Error::InvalidConfig("suite grid is empty".into()));
    }
    Ok((0..count)
        .map(|i| {
            let g = grid[i % grid.len()];
            let mut rng = ChaCha8Rng::seed_from_u64(member_seed(rng_seed, i));
            (g, params.scene_spec(g, &mut rng))
        })
        .collect())
}

pub fn suite(params: &SuiteParams, count: usize, rng_seed: u64) -> Result<Vec<SceneTruth>> {
    suite_with(params, count, rng_seed, Execution::default())
}

pub fn suite_with(params: &SuiteParams, count: usize, rng_seed: u64, exec: Execution) -> Result<Vec<SceneTruth>> {
    let specs = suite_specs(params, count, rng_seed)?;
    par::map(exec, &specs, |(_, s)| render(s)).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(amplitude: f64, noise: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            width: 32,
            height: 32,
            targets: vec![TargetSpec {
                center: [15.3, 16.1],
                sigma_t: 1.5,
                amplitude,
            }],
            background: BackgroundSpec {
                noise_sigma: noise,
                ..Default::default()
            },
            rng_seed: seed,
            gt_tau: DEFAULT_GT_TAU,
        }
    }

    #[test]
    fn zero_amplitude_is_background_only() {
        let s = render(&single(0.0, 0.02, 3)).unwrap();
        assert!(s.gt_masks[0].is_empty());
        let bg = render(&SyntheticSpec {
            targets: vec![],
            ..single(0.0, 0.02, 3)
        })
        .unwrap();
        assert_eq!(s.raster, bg.raster);
    }

    #[test]
    fn noise_free_gt_matches_disc_scan() {
        let spec = single(0.5, 0.0, 1);
        let s = render(&spec).unwrap();
        let t = spec.targets[0];
        let mut expected = 0;
        for y in 0..32 {
            for x in 0..32 {
                let r2 = (x as f64 - t.center[0]).powi(2) + (y as f64 - t.center[1]).powi(2);
                if (-r2 / (2.0 * 1.5 * 1.5)).exp() >= 0.2 {
                    expected += 1;
                }
            }
        }
        assert_eq!(s.gt_masks[0].area(), expected);
    }

    #[test]
    fn deterministic_under_seed() {
        let a = render(&single(0.4, 0.03, 77)).unwrap();
        let b = render(&single(0.4, 0.03, 77)).unwrap();
        assert_eq!(a, b);
        let c = render(&single(0.4, 0.03, 78)).unwrap();
        assert_ne!(a.raster, c.raster);
    }

    #[test]
    fn gt_area_non_increasing_in_tau() {
        let t = TargetSpec {
            center: [20.4, 19.7],
            sigma_t: 2.1,
            amplitude: 0.3,
        };
        let areas: Vec<usize> = (1..20).map(|k| target_gt_mask(&t, 40, 40, k as f64 * 0.05).area()).collect();
        assert!(areas.windows(2).all(|w| w[0] >= w[1]), "{areas:?}");
    }

    #[test]
    fn rejects_off_canvas_and_overlap() {
        let mut spec = single(0.5, 0.0, 1);
        spec.targets[0].center = [2.0, 16.0];
        assert!(matches!(render(&spec), Err(Error::InvalidScene(_))));
        let mut spec = single(0.5, 0.0, 1);
        spec.targets.push(TargetSpec {
            center: [16.3, 16.1],
            ..spec.targets[0]
        });
        assert!(matches!(render(&spec), Err(Error::InvalidScene(_))));
    }

    #[test]
    fn scr_of_null_target_is_near_zero() {
        let s = render(&single(0.0, 0.02, 9)).unwrap();
        let probe = target_gt_mask(
            &TargetSpec {
                center: [15.3, 16.1],
                sigma_t: 1.5,
                amplitude: 1.0,
            },
            32,
            32,
            0.2,
        );
        let m = measure_region(&s.raster, &probe, &[]).unwrap();
        assert!(m.scr.abs() < 1.5, "scr {}", m.scr);
    }

    #[test]
    fn flat_target_has_infinite_gamma() {
        let r = Raster::from_fn(24, 24, |x, y| {
            if (10..13).contains(&x) && (10..13).contains(&y) {
                0.9
            } else {
                0.1 + 0.01 * ((x * 7 + y * 3) % 5) as f64
            }
        })
        .unwrap();
        let m = Mask::from_pixels(24, 24, (10..13).flat_map(|y| (10..13).map(move |x| (x, y).into()))).unwrap();
        let g = measure_region(&r, &m, &[]).unwrap();
        assert!(g.gamma.is_infinite());
        assert!(g.scr > 0.0);
        let tiny = Mask::from_pixels(3, 3, [(1, 1).into()]).unwrap();
        let r = Raster::constant(3, 3, 0.5).unwrap();
        assert!(matches!(measure_region(&r, &tiny, &[]), Err(Error::AnnulusTooSmall(..))));
    }

    #[test]
    fn measured_scr_tracks_analytic_expectation() {
        for seed in 0..10 {
            let (a, sb) = (0.3, 0.02);
            let s = render(&single(a, sb, seed)).unwrap();
            let t = s.targets[0].spec;
            let gt = &s.gt_masks[0];
            let mean_w = gt.pixels().map(|p| t.weight(p.x as f64, p.y as f64)).sum::<f64>() / gt.area() as f64;
            let expected = a * mean_w / sb;
            let got = measure_scr_gamma(&s, 0).unwrap().scr;
            assert!((got - expected).abs() <= 0.15 * expected, "seed {seed}: {got} vs {expected}");
        }
    }

    #[test]
    fn suite_grid_and_reproducibility() {
        let p = SuiteParams::default();
        assert!(suite(&p, 0, 1).unwrap().is_empty());
        let n = p.scr_grid.len() * p.sigma_t_grid.len() * p.clutter_grid.len();
        assert_eq!(p.grid().len(), n);
        let specs = suite_specs(&p, 2 * n, 5).unwrap();
        for g in p.grid() {
            assert_eq!(specs.iter().filter(|(gp, _)| *gp == g).count(), 2);
        }
        let a = suite_with(&p, 6, 11, Execution::Sequential).unwrap();
        let b = suite_with(&p, 6, 11, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
