//! Command implementations behind the `pamg` binary. Each command writes a
//! JSON result (the source of truth) plus CSV/SVG views into its output
//! directory, alongside the effective config.

pub mod config;
pub mod plot;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pamg_core::api::{run_grow, ErrorBody, GrowRequest, GrowResponse, KRadius, SCHEMA_VERSION};
use pamg_core::boundary::{proposition1_scan, BoundaryReport, Proposition1};
use pamg_core::dataset::{read_mask, Manifest};
use pamg_core::experiments::{
    ablate, boundary_suite, boundary_validation, center_seed, cluttered_suite, desk_suite, seed_sensitivity, sweep_k,
    sweep_rs, Ablation, SeedSensitivity, Sweep,
};
use pamg_core::metrics::{iou, MetricsReport};
use pamg_core::synth::{suite_with, SceneTruth, SuiteParams};
use pamg_core::{load_raster, par, Connectivity, Error, GeomSupervision, Mask, Variant};

pub use config::RunConfig;

#[derive(Debug, PartialEq)]
pub enum CliError {
    Usage(String),
    Data(ErrorBody),
    Algorithm(ErrorBody),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Algorithm(_) => 4,
        }
    }

    pub fn body(&self) -> ErrorBody {
        match self {
            CliError::Usage(m) => ErrorBody {
                v: SCHEMA_VERSION,
                error: "usage".into(),
                message: m.clone(),
            },
            CliError::Data(b) | CliError::Algorithm(b) => b.clone(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(m) => CliError::Usage(m),
            Error::NoEnergyPeak | Error::NoSignChange(_) => CliError::Algorithm(ErrorBody::of(&e)),
            other => CliError::Data(ErrorBody::of(&other)),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e).into())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::Json)?;
    text.push('\n');
    write(path, text.as_bytes())
}

pub fn parse_seed(s: &str) -> Result<[i64; 2], String> {
    match s.split(',').map(|p| p.trim().parse::<i64>()).collect::<Result<Vec<_>, _>>() {
        Ok(v) if v.len() == 2 => Ok([v[0], v[1]]),
        _ => Err(format!("expected x,y integers, got {s:?}")),
    }
}

#[derive(Debug, Clone, Default)]
pub struct GrowArgs {
    pub image: PathBuf,
    pub seed: [i64; 2],
    pub r_s: Option<f64>,
    pub radius: Option<f64>,
    pub k: Option<f64>,
    pub variant: Option<Variant>,
    pub connectivity: Option<Connectivity>,
    pub out: PathBuf,
    pub rle: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

#[derive(Serialize)]
struct TraceFile<'a> {
    v: u32,
    #[serde(flatten)]
    trace: &'a pamg_core::GrowthTrace,
}

/// Writes the mask PNG, its RLE (default: `out` with a `.json` extension)
/// and optionally the full trace.
pub fn cmd_grow(args: &GrowArgs, cfg: &RunConfig) -> CliResult<GrowResponse> {
    let req = GrowRequest {
        seed: args.seed,
        r_s: args.r_s,
        k_radius: args.radius.map(|radius| KRadius {
            k: args.k.unwrap_or(cfg.guided_k),
            radius,
        }),
        connectivity: args.connectivity,
        variant: args.variant,
    };
    if args.k.is_some() && args.radius.is_none() {
        return Err(CliError::Usage("--k needs --radius".into()));
    }
    let raster = load_raster(&args.image, cfg.normalization)?;
    let out = run_grow(&raster, &req, &cfg.pamg)?;
    write(&args.out, &out.mask.to_png_bytes())?;
    let rle = args.rle.clone().unwrap_or_else(|| args.out.with_extension("json"));
    write(&rle, out.mask.encode_rle().as_bytes())?;
    if let Some(t) = &args.trace {
        write_json(
            t,
            &TraceFile {
                v: SCHEMA_VERSION,
                trace: &out.trace,
            },
        )?;
    }
    Ok(out.response)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub image_id: String,
    pub target: usize,
    pub seed: [i64; 2],
    pub r_s: f64,
    pub mask: Option<Mask>,
    pub geometry: Option<GeomSupervision>,
    pub k_star: Option<usize>,
    /// Against the target's GT mask when the manifest has one.
    pub iou: Option<f64>,
    pub error: Option<ErrorBody>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub v: u32,
    pub images: usize,
    pub targets: usize,
    pub failures: usize,
    pub miou: Option<f64>,
    pub records: Vec<BatchRecord>,
}

struct ImageResult {
    id: String,
    width: usize,
    height: usize,
    records: Vec<BatchRecord>,
}

fn batch_image(rec: &pamg_core::dataset::ManifestRecord, cfg: &RunConfig, guided: bool) -> CliResult<ImageResult> {
    let id = rec.id()?;
    let raster = load_raster(&rec.image, cfg.normalization)?;
    let mut records = Vec::new();
    for (t, target) in rec.targets.iter().enumerate() {
        let gt = target.gt.as_deref().map(read_mask).transpose()?;
        let gt_geom = gt.as_ref().map(|m| m.geometry()).transpose()?;
        let seed = match (target.point, gt_geom) {
            (Some(p), _) => p,
            (None, Some(g)) => [g.centroid[0].round() as i64, g.centroid[1].round() as i64],
            (None, None) => unreachable!("manifest parsing requires a point or a gt"),
        };
        let mut req = GrowRequest::at(seed[0], seed[1]);
        if guided {
            let g = gt_geom.ok_or_else(|| CliError::Usage(format!("{id} target {t}: --guided needs a gt mask")))?;
            req.k_radius = Some(KRadius {
                k: cfg.guided_k,
                radius: g.equiv_radius,
            });
        }
        let r_s = req.resolve(&cfg.pamg)?.r_s;
        let mut record = BatchRecord {
            image_id: id.clone(),
            target: t,
            seed,
            r_s,
            mask: None,
            geometry: None,
            k_star: None,
            iou: None,
            error: None,
        };
        match run_grow(&raster, &req, &cfg.pamg) {
            Ok(out) => {
                record.iou = gt.as_ref().map(|g| iou(&out.mask, g)).transpose()?;
                record.geometry = Some(out.response.geometry);
                record.k_star = Some(out.response.k_star);
                record.mask = Some(out.mask);
            }
            Err(e @ (Error::NoEnergyPeak | Error::OutOfBounds { .. })) => {
                record.iou = gt.as_ref().map(|_| 0.0);
                record.error = Some(ErrorBody::of(&e));
            }
            Err(e) => return Err(e.into()),
        }
        records.push(record);
    }
    Ok(ImageResult {
        id,
        width: raster.width(),
        height: raster.height(),
        records,
    })
}

/// Pseudo-labels for every annotated target: `masks/{id}_{t}.png`, per-image
/// unions in `labels/{id}.png`, and `summary.json`. Output bytes do not
/// depend on `jobs`.
pub fn cmd_batch(manifest: &Path, out: &Path, guided: bool, cfg: &RunConfig) -> CliResult<BatchSummary> {
    let m = Manifest::read(manifest)?;
    let results = par::with_threads(cfg.jobs, || {
        par::map(cfg.execution(), &m.records, |r| batch_image(r, cfg, guided))
    });
    let mut records = Vec::new();
    let mut images = 0;
    for res in results {
        let res = res?;
        images += 1;
        let mut label = Mask::empty(res.width, res.height);
        for r in &res.records {
            if let Some(mask) = &r.mask {
                write(&out.join("masks").join(format!("{}_{}.png", r.image_id, r.target)), &mask.to_png_bytes())?;
                label = label.union(mask)?;
            }
        }
        write(&out.join("labels").join(format!("{}.png", res.id)), &label.to_png_bytes())?;
        records.extend(res.records);
    }
    let scored: Vec<f64> = records.iter().filter_map(|r| r.iou).collect();
    let summary = BatchSummary {
        v: SCHEMA_VERSION,
        images,
        targets: records.len(),
        failures: records.iter().filter(|r| r.error.is_some()).count(),
        miou: (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64),
        records,
    };
    write_json(&out.join("summary.json"), &summary)?;
    cfg.dump(out)?;
    Ok(summary)
}

fn masks_by_stem(dir: &Path) -> CliResult<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !p.is_file() || !matches!(ext.as_deref(), Some("png" | "json")) {
            continue;
        }
        let stem = pamg_core::dataset::image_id(&p)?;
        if let Some(prev) = out.insert(stem.clone(), p.clone()) {
            return Err(Error::Manifest(format!(
                "{} and {} share the name {stem:?}",
                prev.display(),
                p.display()
            ))
            .into());
        }
    }
    Ok(out)
}

/// Pairs masks by file stem; a GT without a prediction scores as missed.
pub fn cmd_eval(pred_dir: &Path, gt_dir: &Path, out: &Path, cfg: &RunConfig) -> CliResult<MetricsReport> {
    let gts = masks_by_stem(gt_dir)?;
    let preds = masks_by_stem(pred_dir)?;
    let mut pairs = Vec::new();
    for (stem, gp) in &gts {
        let gt = read_mask(gp)?;
        let pred = match preds.get(stem) {
            Some(pp) => read_mask(pp)?,
            None => Mask::empty(gt.width(), gt.height()),
        };
        pairs.push((stem.clone(), pred, gt));
    }
    let report = MetricsReport::evaluate(pairs.iter().map(|(s, p, g)| (s.as_str(), p, g)), cfg.match_radius)?;
    write_json(&out.join("metrics.json"), &report)?;
    write(&out.join("metrics.csv"), report.to_csv().as_bytes())?;
    cfg.dump(out)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Cluttered,
    Boundary,
    /// `[suite]` from the config.
    Config,
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "desk" => Ok(Preset::Desk),
            "cluttered" => Ok(Preset::Cluttered),
            "boundary" => Ok(Preset::Boundary),
            "config" => Ok(Preset::Config),
            _ => Err(format!("unknown preset {s:?}, expected desk, cluttered, boundary or config")),
        }
    }
}

/// Resolves the preset into `cfg.suite` so the dumped config shows what ran.
pub fn with_preset(cfg: &RunConfig, preset: Preset) -> RunConfig {
    let suite = match preset {
        Preset::Desk => desk_suite(),
        Preset::Cluttered => cluttered_suite(),
        Preset::Boundary => boundary_suite(),
        Preset::Config => cfg.suite.clone(),
    };
    RunConfig { suite, ..cfg.clone() }
}

pub fn scenes(cfg: &RunConfig) -> CliResult<Vec<SceneTruth>> {
    Ok(par::with_threads(cfg.jobs, || {
        suite_with(&cfg.suite, cfg.count, cfg.rng_seed, cfg.execution())
    })?)
}

fn f(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

pub fn cmd_sweep_seed(out: &Path, cfg: &RunConfig) -> CliResult<SeedSensitivity> {
    let sc = scenes(cfg)?;
    let r = par::with_threads(cfg.jobs, || seed_sensitivity(&sc, &cfg.pamg, cfg.rng_seed, cfg.execution()))?;
    let mut csv = String::from("mode,samples,failures,miou,area_ratio,centroid_error,radius_error\n");
    for row in &r.rows {
        let s = &row.summary;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.mode.name(),
            s.samples,
            s.failures,
            s.miou,
            f(s.mean_area_ratio),
            f(s.mean_centroid_error),
            f(s.mean_radius_error)
        ));
    }
    write_json(&out.join("seed_sensitivity.json"), &r)?;
    write(&out.join("seed_sensitivity.csv"), csv.as_bytes())?;
    cfg.dump(out)?;
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepGrid {
    Rs,
    K,
    Both,
}

fn sweep_csv(s: &Sweep) -> String {
    let mut csv = format!("{},samples,failures,miou,area_ratio\n", s.parameter);
    for row in &s.rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.value,
            row.summary.samples,
            row.summary.failures,
            row.summary.miou,
            f(row.summary.mean_area_ratio)
        ));
    }
    csv
}

pub fn cmd_sweep_rs(out: &Path, grid: SweepGrid, cfg: &RunConfig) -> CliResult<Vec<Sweep>> {
    let sc = scenes(cfg)?;
    let mut done = Vec::new();
    if matches!(grid, SweepGrid::Rs | SweepGrid::Both) {
        let s = par::with_threads(cfg.jobs, || sweep_rs(&sc, &cfg.rs_grid, &cfg.pamg, cfg.execution()))?;
        write_json(&out.join("sweep_rs.json"), &s)?;
        write(&out.join("sweep_rs.csv"), sweep_csv(&s).as_bytes())?;
        done.push(s);
    }
    if matches!(grid, SweepGrid::K | SweepGrid::Both) {
        let s = par::with_threads(cfg.jobs, || sweep_k(&sc, &cfg.k_grid, &cfg.pamg, cfg.execution()))?;
        write_json(&out.join("sweep_k.json"), &s)?;
        write(&out.join("sweep_k.csv"), sweep_csv(&s).as_bytes())?;
        done.push(s);
    }
    cfg.dump(out)?;
    Ok(done)
}

pub fn cmd_ablate(out: &Path, cfg: &RunConfig) -> CliResult<Ablation> {
    let sc = scenes(cfg)?;
    let a = par::with_threads(cfg.jobs, || ablate(&sc, &cfg.variants, &cfg.pamg, cfg.execution()))?;
    let mut csv = String::from("variant,samples,failures,miou,area_ratio,centroid_error,radius_error\n");
    for row in &a.rows {
        let s = &row.summary;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.variant.name(),
            s.samples,
            s.failures,
            s.miou,
            f(s.mean_area_ratio),
            f(s.mean_centroid_error),
            f(s.mean_radius_error)
        ));
    }
    write_json(&out.join("ablation.json"), &a)?;
    write(&out.join("ablation.csv"), csv.as_bytes())?;
    cfg.dump(out)?;
    Ok(a)
}

/// Parameter grid for the model-level scan: 5 contrasts x 4 target
/// deviations x 5 supports.
pub fn proposition1_grid() -> Vec<(f64, f64, f64)> {
    let mut g = Vec::new();
    for &dmu in &[0.01, 0.05, 0.1, 0.3, 1.0] {
        for &sig in &[0.05, 0.2, 0.5, 1.0] {
            for &rs in &[3.0, 8.0, 12.0, 20.0, 40.0] {
                g.push((dmu, sig, rs));
            }
        }
    }
    g
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanPoint {
    pub delta_mu: f64,
    pub sigma_t: f64,
    pub r_s: f64,
    pub result: Proposition1,
}

pub const SCAN_N_MAX: usize = 4000;

pub fn proposition1_points() -> CliResult<Vec<ScanPoint>> {
    proposition1_grid()
        .into_iter()
        .map(|(delta_mu, sigma_t, r_s)| {
            Ok(ScanPoint {
                delta_mu,
                sigma_t,
                r_s,
                result: proposition1_scan(delta_mu, sigma_t, r_s, SCAN_N_MAX)?,
            })
        })
        .collect()
}

pub fn cmd_boundary(out: &Path, cfg: &RunConfig) -> CliResult<(BoundaryReport, Vec<ScanPoint>)> {
    let sc = scenes(cfg)?;
    let r = par::with_threads(cfg.jobs, || boundary_validation(&sc, &cfg.pamg, &cfg.rho_edges, cfg.execution()))?;
    let scan = proposition1_points()?;
    write_json(&out.join("boundary.json"), &r)?;
    write(&out.join("boundary_records.csv"), r.records_csv().as_bytes())?;
    write(&out.join("boundary_buckets.csv"), r.buckets_csv().as_bytes())?;
    write(&out.join("boundary.svg"), plot::boundary_svg(&r).as_bytes())?;
    write_json(&out.join("proposition1.json"), &scan)?;
    cfg.dump(out)?;
    Ok((r, scan))
}

#[derive(Debug, Serialize)]
struct ManifestLine {
    image: String,
    targets: Vec<serde_json::Value>,
}

/// Renders the configured suite: `s####.png` frames, per-target RLE GT
/// files, per-frame GT unions under `gt/`, `truth.jsonl` and a
/// `manifest.jsonl` with center-seed points.
pub fn cmd_synth(out: &Path, cfg: &RunConfig) -> CliResult<usize> {
    let sc = scenes(cfg)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut truth = Vec::new();
    let mut manifest = String::new();
    for (i, s) in sc.iter().enumerate() {
        let name = format!("s{i:04}");
        s.export(out, &name, &mut truth)?;
        let mut union = Mask::empty(s.raster.width(), s.raster.height());
        let mut targets = Vec::new();
        for (t, m) in s.gt_masks.iter().enumerate() {
            union = union.union(m)?;
            if m.is_empty() {
                continue;
            }
            let c = center_seed(s, t);
            targets.push(serde_json::json!({"point": [c.x, c.y], "gt": format!("{name}_gt{t}.json")}));
        }
        write(&out.join("gt").join(format!("{name}.png")), &union.to_png_bytes())?;
        let line = ManifestLine {
            image: format!("{name}.png"),
            targets,
        };
        manifest.push_str(&serde_json::to_string(&line).map_err(Error::Json)?);
        manifest.push('\n');
    }
    write(&out.join("truth.jsonl"), &truth)?;
    write(&out.join("manifest.jsonl"), manifest.as_bytes())?;
    cfg.dump(out)?;
    Ok(sc.len())
}

pub fn suite_summary(s: &SuiteParams) -> String {
    format!(
        "{}x{} scr {:?} sigma_t {:?} clutter {:?} edges {} tau {}",
        s.width, s.height, s.scr_grid, s.sigma_t_grid, s.clutter_grid, s.edges, s.gt_tau
    )
}
