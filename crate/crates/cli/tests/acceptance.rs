//! Acceptance run: one PASS/FAIL line per criterion with the measured numbers.
//! Report only by default so a failing criterion does not stop the rest of
//! `cargo test --workspace`; set `PAMG_ACCEPTANCE_STRICT=1` to exit nonzero on any FAIL.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use pamg_cli::proposition1_points;
use pamg_core::experiments::{
    ablate, boundary_suite, boundary_validation, center_seed, cluttered_suite, desk_suite, seed_sensitivity, sweep_k, sweep_rs,
    targets, SeedMode, DEFAULT_RNG_SEED,
};
use pamg_core::boundary::DEFAULT_RHO_EDGES;
use pamg_core::pamg::{generate_mask, grow, PamgConfig, Variant};
use pamg_core::par::Execution;
use pamg_core::raster::PixelCoord;
use pamg_core::synth::{suite, SceneTruth, SuiteParams};
use pamg_testkit::{check_trace, mask_roundtrip, metric_fixture_failures, pd_fa_perturbation, random_config, random_raster};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Report {
    failed: usize,
}

impl Report {
    fn run(&mut self, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) {
        let t = Instant::now();
        let out = f();
        let took = t.elapsed();
        let (ok, detail) = match out {
            Ok(d) if took <= limit => (true, d),
            Ok(d) => (false, format!("{d}; over the time limit")),
            Err(d) => (false, d),
        };
        if !ok {
            self.failed += 1;
        }
        println!(
            "{} {name}: {detail} [{:.1}s / {}s]",
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
}

fn mins(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

fn scenes(params: &SuiteParams, count: usize) -> Vec<SceneTruth> {
    suite(params, count, DEFAULT_RNG_SEED).expect("suite renders")
}

fn pts(x: f64) -> f64 {
    100.0 * x
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut steps = 0usize;
    let runs = 1000;
    for run in 0..runs {
        let img = random_raster(&mut rng, 64, 64);
        let cfg = random_config(&mut rng, 7.0);
        let seed = PixelCoord::new(rng.random_range(0..64), rng.random_range(0..64));
        let trace = grow(&img, seed, &cfg).map_err(|e| format!("run {run}: {e}"))?;
        steps += trace.len();
        check_trace(&img, seed, &cfg, &trace, 1).map_err(|e| format!("run {run}: {e}"))?;
    }
    Ok(format!("{runs} runs, {steps} steps checked against prefix recomputation within 1e-9, k* exact"))
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_owned()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_owned(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn pamg(args: &[&str]) -> Result<(), String> {
    let o = Command::new(common::pamg_bin()).args(args).output().map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("pamg {args:?}: {}", String::from_utf8_lossy(&o.stderr)))
    }
}

fn determinism() -> Outcome {
    let cfg = PamgConfig::default();
    let sc = scenes(&desk_suite(), 200);

    // repeated runs
    for s in &sc[..50] {
        let seed = center_seed(s, 0);
        let a = generate_mask(&s.raster, seed, &cfg).map(|r| r.0.encode_rle());
        let b = generate_mask(&s.raster, seed, &cfg).map(|r| r.0.encode_rle());
        if format!("{a:?}") != format!("{b:?}") {
            return Err("repeated run differs".into());
        }
    }

    // dark/bright mirror
    let mut compared = 0;
    for (i, s) in sc.iter().enumerate() {
        let m = s.mirrored();
        for t in 0..s.gt_masks.len() {
            let seed = center_seed(s, t);
            let a = generate_mask(&s.raster, seed, &cfg).map(|r| r.0);
            let b = generate_mask(&m.raster, seed, &cfg).map(|r| r.0);
            match (a, b) {
                (Ok(a), Ok(b)) if a == b => compared += 1,
                (Err(a), Err(b)) if a.kind() == b.kind() => compared += 1,
                _ => return Err(format!("scene {i} target {t}: mirrored mask differs")),
            }
        }
    }

    // sequential vs rayon inside the library
    let seq = seed_sensitivity(&sc[..60], &cfg, DEFAULT_RNG_SEED, Execution::Sequential).map_err(|e| e.to_string())?;
    let par = seed_sensitivity(&sc[..60], &cfg, DEFAULT_RNG_SEED, Execution::Parallel).map_err(|e| e.to_string())?;
    if serde_json::to_vec(&seq).unwrap() != serde_json::to_vec(&par).unwrap() {
        return Err("sequential and parallel seed sweeps differ".into());
    }

    // CLI batch across worker counts
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let syn = dir.path().join("syn");
    pamg(&["--set", "count=40", "synth", "--out", syn.to_str().unwrap()])?;
    let manifest = syn.join("manifest.jsonl");
    let mut trees = Vec::new();
    for jobs in ["1", "2", "8"] {
        let out = dir.path().join(format!("b{jobs}"));
        pamg(&["--jobs", jobs, "batch", manifest.to_str().unwrap(), "--out", out.to_str().unwrap()])?;
        trees.push(tree(&out));
    }
    if trees.iter().any(|t| t != &trees[0]) {
        return Err("batch outputs differ across --jobs 1/2/8".into());
    }
    Ok(format!(
        "50 repeated runs identical; {compared}/200 mirrored targets exact set equality; seq == rayon sweep JSON; batch of 40 images byte-identical for jobs 1/2/8 ({} files)",
        trees[0].len()
    ))
}

fn seed_robustness() -> Outcome {
    let sc = scenes(&desk_suite(), 200);
    let n = targets(&sc).len();
    let r = seed_sensitivity(&sc, &PamgConfig::default(), DEFAULT_RNG_SEED, Execution::Parallel).map_err(|e| e.to_string())?;
    let row = |m| *r.row(m).expect("mode row");
    let (c, i, b) = (row(SeedMode::Center), row(SeedMode::RandomInterior), row(SeedMode::Boundary));
    let gap = pts((c.miou - b.miou).abs());
    let dist = |s: pamg_core::experiments::Summary| s.mean_area_ratio.map(|a| (a - 1.0).abs()).unwrap_or(f64::INFINITY);
    let closest = dist(c) <= dist(i) && dist(c) <= dist(b);
    let detail = format!(
        "{n} targets; mIoU center {:.2} interior {:.2} boundary {:.2} (gap {gap:.2} pts, need <= 3); AR center {:.3} interior {:.3} boundary {:.3} (center closest to 1: {closest})",
        pts(c.miou),
        pts(i.miou),
        pts(b.miou),
        c.mean_area_ratio.unwrap_or(f64::NAN),
        i.mean_area_ratio.unwrap_or(f64::NAN),
        b.mean_area_ratio.unwrap_or(f64::NAN),
    );
    verdict(n >= 200 && gap <= 3.0 && closest, detail)
}

fn rs_sensitivity() -> Outcome {
    let sc = scenes(&desk_suite(), 200);
    let cfg = PamgConfig::default();
    let rs = sweep_rs(&sc, &[2.0, 16.0, 20.0, 24.0], &cfg, Execution::Parallel).map_err(|e| e.to_string())?;
    let k = sweep_k(&sc, &[4.0, 5.0, 6.0, 7.0, 8.0], &cfg, Execution::Parallel).map_err(|e| e.to_string())?;
    let (m2, m20) = (rs.miou_at(2.0).unwrap(), rs.miou_at(20.0).unwrap());
    let spread = pts(rs.spread(&[16.0, 20.0, 24.0]).unwrap());
    let kspread = pts(k.spread(&[4.0, 5.0, 6.0, 7.0, 8.0]).unwrap());
    let ks: Vec<String> = k.rows.iter().map(|r| format!("{:.2}", pts(r.summary.miou))).collect();
    let detail = format!(
        "mIoU R_s=2 {:.2} vs 0.5 x R_s=20 {:.2}; R_s 16/20/24 = {:.2}/{:.2}/{:.2} (spread {spread:.2} pts); k 4..8 = {} (spread {kspread:.2} pts)",
        pts(m2),
        pts(0.5 * m20),
        pts(rs.miou_at(16.0).unwrap()),
        pts(m20),
        pts(rs.miou_at(24.0).unwrap()),
        ks.join("/"),
    );
    verdict(m2 <= 0.5 * m20 && spread <= 2.0 && kspread <= 2.0, detail)
}

fn ablation() -> Outcome {
    let sc = scenes(&cluttered_suite(), 200);
    let a = ablate(&sc, &Variant::ALL, &PamgConfig::default(), Execution::Parallel).map_err(|e| e.to_string())?;
    let row = |v| *a.row(v).expect("variant row");
    let full = row(Variant::Full).miou;
    let best = a.rows.iter().map(|r| r.summary.miou).fold(f64::NEG_INFINITY, f64::max);
    let geo = row(Variant::NoGeometricPrior).mean_area_ratio.unwrap_or(f64::NAN);
    let size = row(Variant::NoSizePrior).mean_area_ratio.unwrap_or(f64::NAN);
    let rows: Vec<String> = a
        .rows
        .iter()
        .map(|r| {
            format!(
                "{} {:.2}/{:.2}",
                r.variant.name(),
                pts(r.summary.miou),
                r.summary.mean_area_ratio.unwrap_or(f64::NAN)
            )
        })
        .collect();
    let detail = format!(
        "{} targets, mIoU/AR: {}; full best: {}; no_geometric_prior AR {geo:.2} (need >= 3); no_size_prior AR {size:.2} (need < 1)",
        a.targets,
        rows.join(", "),
        full >= best
    );
    verdict(full >= best && geo >= 3.0 && size < 1.0, detail)
}

fn boundary() -> Outcome {
    let sc = scenes(&boundary_suite(), 540);
    let r = boundary_validation(&sc, &PamgConfig::default(), &DEFAULT_RHO_EDGES, Execution::Parallel).map_err(|e| e.to_string())?;
    let lo = r.records.iter().map(|x| x.rho).fold(f64::INFINITY, f64::min);
    let hi = r.records.iter().map(|x| x.rho).filter(|x| x.is_finite()).fold(0.0, f64::max);
    let buckets: Vec<String> = r
        .buckets
        .iter()
        .map(|b| format!("{}:{}", b.count, b.success_rate.map(|s| format!("{s:.2}")).unwrap_or("-".into())))
        .collect();
    let top = r.buckets.last().and_then(|b| b.success_rate).unwrap_or(0.0);
    let monotone = r.success_non_decreasing();
    let scan = proposition1_points().map_err(|e| format!("{e:?}"))?;
    let violations = scan.iter().filter(|p| !p.result.holds).count();
    let detail = format!(
        "{} targets, rho {lo:.2}..{hi:.2}; buckets count:success {} (non-decreasing: {monotone}); rho>2 success {top:.3} (need >= 0.9); scan {} points, {violations} violations",
        r.records.len(),
        buckets.join(" "),
        scan.len()
    );
    verdict(
        r.records.len() >= 500 && lo <= 0.3 && hi >= 5.0 && monotone && top >= 0.9 && scan.len() == 100 && violations == 0,
        detail,
    )
}

fn metrics() -> Outcome {
    let failures = metric_fixture_failures();
    if !failures.is_empty() {
        return Err(format!("fixtures failed: {}", failures.join(", ")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(999);
    for i in 0..1000 {
        pd_fa_perturbation(&mut rng, 3.0).map_err(|e| format!("perturbation {i}: {e}"))?;
    }
    Ok("hand fixtures exact; pd/fa monotone over 1000 perturbations".into())
}

fn roundtrips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for i in 0..1000 {
        mask_roundtrip(&mut rng).map_err(|e| format!("mask {i}: {e}"))?;
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let sc = scenes(&desk_suite(), 4);
    for (i, s) in sc.iter().enumerate() {
        let mut truth = Vec::new();
        s.export(dir.path(), &format!("s{i}"), &mut truth).map_err(|e| e.to_string())?;
    }
    let mut seeds = 0;
    for (i, s) in sc.iter().enumerate() {
        let c = center_seed(s, 0);
        let (x, y) = (c.x as i64, c.y as i64);
        let list = [[x, y], [x + 2, y - 1], [x - 4, y + 3], [0, 0], [47, 47], [48, 5]];
        seeds += common::cli_service_parity(dir.path(), &format!("s{i}"), &list, None)?;
    }
    Ok(format!("1000 random masks RLE/PNG lossless; {seeds} CLI vs service grows byte-identical (RLE, PNG, response)"))
}

fn main() {
    let mut r = Report { failed: 0 };
    r.run("oracle equivalence", mins(2), oracle);
    r.run("determinism and polarity", mins(5), determinism);
    r.run("seed robustness", mins(3), seed_robustness);
    r.run("support radius sensitivity", mins(5), rs_sensitivity);
    r.run("ablation ordering", mins(5), ablation);
    r.run("boundary validation", mins(5), boundary);
    r.run("metrics fixtures", mins(2), metrics);
    r.run("interface round trips", mins(2), roundtrips);
    println!("{} of 8 criteria FAILED", r.failed);
    if r.failed > 0 && std::env::var_os("PAMG_ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
