//! Synthetic-suite experiment harnesses: seed placement sensitivity, support
//! radius and guided scale sweeps, energy ablation and boundary validation.
//!
//! Each target is scored against its own GT mask. A run that finds no energy
//! peak scores IoU 0 and contributes no geometry errors.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boundary::{bucketed_validation, BoundaryReport, TargetRecord};
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::metrics::{geometry_errors, iou, GeometryErrors};
use crate::pamg::{generate_mask, PamgConfig, Variant};
use crate::par::{self, Execution};
use crate::raster::{PixelCoord, Raster};
use crate::synth::{measure_scr_gamma, member_seed, SceneTruth, SuiteParams};

pub const DEFAULT_RNG_SEED: u64 = 3407;
pub const SEEDS_PER_TARGET: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub iou: f64,
    pub geometry: Option<GeometryErrors>,
}

pub fn run_seed(raster: &Raster, gt: &Mask, seed: PixelCoord, cfg: &PamgConfig) -> Result<Outcome> {
    match generate_mask(raster, seed, cfg) {
        Ok((mask, _)) => Ok(Outcome {
            iou: iou(&mask, gt)?,
            geometry: Some(geometry_errors(&mask, gt)?),
        }),
        Err(Error::NoEnergyPeak) => Ok(Outcome { iou: 0.0, geometry: None }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub samples: usize,
    pub failures: usize,
    pub miou: f64,
    pub mean_area_ratio: Option<f64>,
    pub mean_centroid_error: Option<f64>,
    pub mean_radius_error: Option<f64>,
}

impl Summary {
    pub fn of(outcomes: &[Outcome]) -> Self {
        let geo: Vec<GeometryErrors> = outcomes.iter().filter_map(|o| o.geometry).collect();
        let mean = |f: fn(&GeometryErrors) -> f64| (!geo.is_empty()).then(|| geo.iter().map(f).sum::<f64>() / geo.len() as f64);
        Self {
            samples: outcomes.len(),
            failures: outcomes.len() - geo.len(),
            miou: if outcomes.is_empty() {
                0.0
            } else {
                outcomes.iter().map(|o| o.iou).sum::<f64>() / outcomes.len() as f64
            },
            mean_area_ratio: mean(|g| g.area_ratio),
            mean_centroid_error: mean(|g| g.centroid_error),
            mean_radius_error: mean(|g| g.radius_error),
        }
    }
}

/// A target addressed inside a scene list, with its GT mask non-empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetRef {
    pub scene: usize,
    pub target: usize,
}

pub fn targets(scenes: &[SceneTruth]) -> Vec<TargetRef> {
    scenes
        .iter()
        .enumerate()
        .flat_map(|(s, scene)| {
            scene
                .gt_masks
                .iter()
                .enumerate()
                .filter(|(_, m)| !m.is_empty())
                .map(move |(t, _)| TargetRef { scene: s, target: t })
        })
        .collect()
}

/// Pixel nearest the rendered target center.
pub fn center_seed(scene: &SceneTruth, target: usize) -> PixelCoord {
    let [cx, cy] = scene.targets[target].spec.center;
    let w = scene.raster.width() as f64 - 1.0;
    let h = scene.raster.height() as f64 - 1.0;
    PixelCoord::new(cx.round().clamp(0.0, w) as usize, cy.round().clamp(0.0, h) as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedMode {
    Center,
    RandomInterior,
    Boundary,
}

impl SeedMode {
    pub const ALL: [SeedMode; 3] = [SeedMode::Center, SeedMode::RandomInterior, SeedMode::Boundary];

    pub fn name(self) -> &'static str {
        match self {
            SeedMode::Center => "center",
            SeedMode::RandomInterior => "random_interior",
            SeedMode::Boundary => "boundary",
        }
    }
}

/// Seeds for one target: the center pixel, or up to three distinct pixels
/// drawn uniformly from the GT mask or from its 4-connected contour.
pub fn seeds_for(scene: &SceneTruth, target: usize, mode: SeedMode, rng_seed: u64, index: usize) -> Vec<PixelCoord> {
    let pool: Vec<PixelCoord> = match mode {
        SeedMode::Center => return vec![center_seed(scene, target)],
        SeedMode::RandomInterior => scene.gt_masks[target].pixels().collect(),
        SeedMode::Boundary => scene.gt_masks[target].contour().pixels().collect(),
    };
    let stream = match mode {
        SeedMode::RandomInterior => 1,
        _ => 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(member_seed(rng_seed ^ stream, index));
    sample(&mut rng, pool.len(), SEEDS_PER_TARGET.min(pool.len()))
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRow {
    pub mode: SeedMode,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSensitivity {
    pub v: u32,
    pub targets: usize,
    pub rows: Vec<ModeRow>,
}

impl SeedSensitivity {
    pub fn row(&self, mode: SeedMode) -> Option<&Summary> {
        self.rows.iter().find(|r| r.mode == mode).map(|r| &r.summary)
    }
}

fn collect<T>(results: Vec<Result<Vec<T>>>) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

pub fn seed_sensitivity(scenes: &[SceneTruth], cfg: &PamgConfig, rng_seed: u64, exec: Execution) -> Result<SeedSensitivity> {
    cfg.validate()?;
    let refs = targets(scenes);
    let mut rows = Vec::new();
    for mode in SeedMode::ALL {
        let outcomes = collect(par::map_range(exec, refs.len(), |i| {
            let t = refs[i];
            let scene = &scenes[t.scene];
            seeds_for(scene, t.target, mode, rng_seed, i)
                .into_iter()
                .map(|s| run_seed(&scene.raster, &scene.gt_masks[t.target], s, cfg))
                .collect()
        }))?;
        rows.push(ModeRow {
            mode,
            summary: Summary::of(&outcomes),
        });
    }
    Ok(SeedSensitivity {
        v: 1,
        targets: refs.len(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub v: u32,
    /// `r_s` for a fixed-support sweep, `k` for a guided sweep.
    pub parameter: String,
    pub targets: usize,
    pub rows: Vec<SweepRow>,
}

impl Sweep {
    pub fn miou_at(&self, value: f64) -> Option<f64> {
        self.rows.iter().find(|r| r.value == value).map(|r| r.summary.miou)
    }

    /// Max minus min mIoU over the given values.
    pub fn spread(&self, values: &[f64]) -> Option<f64> {
        let v: Option<Vec<f64>> = values.iter().map(|&x| self.miou_at(x)).collect();
        let v = v?;
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        Some(hi - lo)
    }
}

fn sweep_with(
    scenes: &[SceneTruth],
    grid: &[f64],
    parameter: &str,
    exec: Execution,
    cfg_for: impl Fn(f64, &SceneTruth, usize) -> PamgConfig + Sync + Send,
) -> Result<Sweep> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig(format!("{parameter} grid is empty")));
    }
    let refs = targets(scenes);
    let mut rows = Vec::new();
    for &value in grid {
        let outcomes = par::map(exec, &refs, |t| {
            let scene = &scenes[t.scene];
            let cfg = cfg_for(value, scene, t.target);
            cfg.validate()?;
            run_seed(&scene.raster, &scene.gt_masks[t.target], center_seed(scene, t.target), &cfg)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        rows.push(SweepRow {
            value,
            summary: Summary::of(&outcomes),
        });
    }
    Ok(Sweep {
        v: 1,
        parameter: parameter.into(),
        targets: refs.len(),
        rows,
    })
}

/// Fixed-support sweep from center seeds.
pub fn sweep_rs(scenes: &[SceneTruth], rs_grid: &[f64], cfg: &PamgConfig, exec: Execution) -> Result<Sweep> {
    sweep_with(scenes, rs_grid, "r_s", exec, |rs, _, _| cfg.with_r_s(rs))
}

/// Guided sweep: `R_s = k * r_gt` with `r_gt` the GT equivalent radius.
/// Unlike [`crate::pamg::guided_mask`], `k = 1` is allowed here.
pub fn sweep_k(scenes: &[SceneTruth], k_grid: &[f64], cfg: &PamgConfig, exec: Execution) -> Result<Sweep> {
    sweep_with(scenes, k_grid, "k", exec, |k, scene, t| {
        let r = scene.gt_masks[t].geometry().map(|g| g.equiv_radius).unwrap_or(1.0);
        let mut c = cfg.with_r_s(k * r);
        c.growth_budget = None;
        c
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRow {
    pub variant: Variant,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ablation {
    pub v: u32,
    pub targets: usize,
    pub rows: Vec<VariantRow>,
}

impl Ablation {
    pub fn row(&self, variant: Variant) -> Option<&Summary> {
        self.rows.iter().find(|r| r.variant == variant).map(|r| &r.summary)
    }
}

pub fn ablate(scenes: &[SceneTruth], variants: &[Variant], cfg: &PamgConfig, exec: Execution) -> Result<Ablation> {
    let sweep = sweep_with(scenes, &(0..variants.len()).map(|i| i as f64).collect::<Vec<_>>(), "variant", exec, |i, _, _| {
        cfg.with_variant(variants[i as usize])
    })?;
    Ok(Ablation {
        v: 1,
        targets: sweep.targets,
        rows: sweep
            .rows
            .into_iter()
            .zip(variants)
            .map(|(r, &variant)| VariantRow {
                variant,
                summary: r.summary,
            })
            .collect(),
    })
}

/// Scores every target from its center seed and buckets the results by
/// `rho = |SCR| / B(n, gamma, R_s)` using the measured statistics.
pub fn boundary_validation(scenes: &[SceneTruth], cfg: &PamgConfig, edges: &[f64], exec: Execution) -> Result<BoundaryReport> {
    cfg.validate()?;
    let refs = targets(scenes);
    let records = par::map(exec, &refs, |t| {
        let scene = &scenes[t.scene];
        let m = measure_scr_gamma(scene, t.target)?;
        let out = run_seed(&scene.raster, &scene.gt_masks[t.target], center_seed(scene, t.target), cfg)?;
        TargetRecord::new(m.scr, m.gamma, m.n.max(2), cfg.r_s, out.iou)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    bucketed_validation(records, edges)
}

/// Desk-scale suite shared by the seed, support and scale experiments:
/// few-pixel Gaussian spots whose GT is the bright core (`tau = 0.7`).
pub fn desk_suite() -> SuiteParams {
    SuiteParams {
        width: 48,
        height: 48,
        scr_grid: vec![5.0, 8.0, 12.0, 20.0],
        sigma_t_grid: vec![1.5, 2.0],
        clutter_grid: vec![0.0, 0.5],
        gt_tau: 0.7,
        ..SuiteParams::default()
    }
}

/// Desk suite with a bright edge segment near every target.
pub fn cluttered_suite() -> SuiteParams {
    SuiteParams {
        edges: true,
        ..desk_suite()
    }
}

/// Desk suite with the SCR grid extended downwards so `rho` spans the
/// default buckets.
pub fn boundary_suite() -> SuiteParams {
    SuiteParams {
        scr_grid: vec![0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0],
        ..desk_suite()
    }
}

pub const DEFAULT_RS_GRID: [f64; 7] = [2.0, 4.0, 8.0, 12.0, 16.0, 20.0, 24.0];
pub const DEFAULT_K_GRID: [f64; 8] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];

/// Settings shared by the experiment commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub rng_seed: u64,
    pub count: usize,
    pub suite: SuiteParams,
    pub pamg: PamgConfig,
    pub rs_grid: Vec<f64>,
    pub k_grid: Vec<f64>,
    pub variants: Vec<Variant>,
    pub rho_edges: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            rng_seed: DEFAULT_RNG_SEED,
            count: 200,
            suite: desk_suite(),
            pamg: PamgConfig::default(),
            rs_grid: DEFAULT_RS_GRID.to_vec(),
            k_grid: DEFAULT_K_GRID.to_vec(),
            variants: Variant::ALL.to_vec(),
            rho_edges: crate::boundary::DEFAULT_RHO_EDGES.to_vec(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.pamg.validate()?;
        let empty = [
            ("rs_grid", self.rs_grid.is_empty()),
            ("k_grid", self.k_grid.is_empty()),
            ("variants", self.variants.is_empty()),
            ("rho_edges", self.rho_edges.len() < 2),
            ("scr_grid", self.suite.scr_grid.is_empty()),
            ("sigma_t_grid", self.suite.sigma_t_grid.is_empty()),
            ("clutter_grid", self.suite.clutter_grid.is_empty()),
        ];
        match empty.iter().find(|(_, e)| *e) {
            Some((name, _)) => Err(Error::InvalidConfig(format!("{name} must not be empty"))),
            None => Ok(()),
        }
    }
}
