//! Non-incremental reference computations for growth traces.
//!
//! Everything here is recomputed from the path prefix alone, with none of
//! the engine's running state.

use pamg_core::boundary::{boundary_b, increment_terms, IncrementModel};
use pamg_core::mask::{Connectivity, Mask};
use pamg_core::metrics::{geometry_errors, iou, match_image, miou, pd_fa};
use pamg_core::pamg::{GrowthTrace, PamgConfig, Variant};
use pamg_core::raster::{PixelCoord, Raster};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOL: f64 = 1e-9;

/// Median of the clipped window by full sort.
pub fn median_by_sort(img: &Raster, p: PixelCoord, window: usize) -> f64 {
    let r = (window / 2) as i64;
    let mut v = Vec::new();
    for y in p.y as i64 - r..=p.y as i64 + r {
        for x in p.x as i64 - r..=p.x as i64 + r {
            if x >= 0 && y >= 0 && (x as usize) < img.width() && (y as usize) < img.height() {
                v.push(img.get(x as usize, y as usize));
            }
        }
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn unified(img: &Raster, seed: PixelCoord, window: usize) -> (Raster, bool) {
    if img.at(seed) < median_by_sort(img, seed, window) {
        (img.complement(), true)
    } else {
        (img.clone(), false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrefixStats {
    pub n: usize,
    pub mu_in: f64,
    pub sigma_in: f64,
    pub d_max: f64,
    pub mu_out: Option<f64>,
}

/// Two-pass statistics of `path[..n]` plus the ring mean over
/// `dilate(S, ring_width) \ S`.
pub fn prefix_stats(img: &Raster, path: &[PixelCoord], n: usize, ring_width: usize) -> PrefixStats {
    let prefix = &path[..n];
    let vals: Vec<f64> = prefix.iter().map(|p| img.at(*p)).collect();
    let mu_in = vals.iter().sum::<f64>() / n as f64;
    let var = vals.iter().map(|v| (v - mu_in) * (v - mu_in)).sum::<f64>() / n as f64;
    let seed = path[0];
    let d_max = prefix
        .iter()
        .map(|p| ((p.x as f64 - seed.x as f64).powi(2) + (p.y as f64 - seed.y as f64).powi(2)).sqrt())
        .fold(0.0, f64::max);

    let (w, h) = (img.width(), img.height());
    let mut in_s = vec![false; w * h];
    for p in prefix {
        in_s[p.y * w + p.x] = true;
    }
    let r = ring_width as i64;
    let mut near = vec![false; w * h];
    for p in prefix {
        for y in (p.y as i64 - r).max(0)..=(p.y as i64 + r).min(h as i64 - 1) {
            for x in (p.x as i64 - r).max(0)..=(p.x as i64 + r).min(w as i64 - 1) {
                near[y as usize * w + x as usize] = true;
            }
        }
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for j in 0..w * h {
        if near[j] && !in_s[j] {
            sum += img.data()[j];
            count += 1;
        }
    }
    PrefixStats {
        n,
        mu_in,
        sigma_in: var.sqrt(),
        d_max,
        mu_out: (count > 0).then(|| sum / count as f64),
    }
}

/// Energy written out term by term from the formula.
pub fn energy_by_formula(s: &PrefixStats, cfg: &PamgConfig) -> Option<f64> {
    let mu_out = s.mu_out?;
    if s.n <= cfg.warmup || s.mu_in - mu_out <= 0.0 {
        return None;
    }
    let size = (s.n as f64).ln().ln();
    let contrast = s.mu_in - mu_out;
    let geo = -s.d_max * s.d_max / (2.0 * cfg.r_s * cfg.r_s);
    Some(match cfg.variant {
        Variant::Full => size + (contrast / (s.sigma_in + cfg.epsilon)).ln() + geo,
        Variant::NoSizePrior => (contrast / (s.sigma_in + cfg.epsilon)).ln() + geo,
        Variant::NoSaliency => size - (s.sigma_in + cfg.epsilon).ln() + geo,
        Variant::NoHomogeneity => size + contrast.ln() + geo,
        Variant::NoGeometricPrior => size + (contrast / (s.sigma_in + cfg.epsilon)).ln(),
    })
}

/// Linear scan: first index of the strictly largest finite value.
pub fn brute_k_star(energies: &[Option<f64>]) -> Option<usize> {
    let mut k = None;
    for i in 0..energies.len() {
        if let Some(e) = energies[i] {
            match k {
                None => k = Some(i),
                Some(j) => {
                    if e > energies[j].unwrap() {
                        k = Some(i)
                    }
                }
            }
        }
    }
    k
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL
}

/// Checks every step of `trace` (every `stride`-th step plus the last) against
/// the from-scratch oracle. Returns a description of the first mismatch.
pub fn check_trace(img: &Raster, seed: PixelCoord, cfg: &PamgConfig, trace: &GrowthTrace, stride: usize) -> Result<(), String> {
    let (u, inverted) = unified(img, seed, cfg.polarity_window);
    if inverted != trace.inverted {
        return Err(format!("polarity flag {} vs oracle {}", trace.inverted, inverted));
    }
    let n = trace.path.len();
    if trace.energies.len() != n || trace.stats_per_step.len() != n || trace.mu_out.len() != n {
        return Err("trace vectors differ in length".into());
    }
    if trace.path[0] != seed {
        return Err("path does not start at the seed".into());
    }
    let mut seen = std::collections::HashSet::new();
    if !trace.path.iter().all(|p| seen.insert(*p)) {
        return Err("pixel repeated in path".into());
    }
    if n > cfg.budget(img.len()) {
        return Err(format!("path length {n} exceeds budget"));
    }
    for i in (0..n).filter(|&i| i % stride == 0 || i + 1 == n) {
        let o = prefix_stats(&u, &trace.path, i + 1, cfg.ring_width);
        let s = &trace.stats_per_step[i];
        let ok_mu_out = match (o.mu_out, trace.mu_out[i]) {
            (Some(a), Some(b)) => close(a, b),
            (None, None) => true,
            _ => false,
        };
        if s.n != i + 1 || !close(s.mu_in, o.mu_in) || !close(s.sigma_in, o.sigma_in) || !close(s.d_max, o.d_max) || !ok_mu_out {
            return Err(format!("step {i}: engine {s:?} mu_out {:?} vs oracle {o:?}", trace.mu_out[i]));
        }
        let e = energy_by_formula(&o, cfg);
        let ok_e = match (e, trace.energies[i]) {
            (Some(a), Some(b)) => close(a, b),
            (None, None) => true,
            // contrast within rounding of zero may land on either side
            (a, b) => (o.mu_in - o.mu_out.unwrap_or(f64::NAN)).abs() < TOL && a.or(b).is_some(),
        };
        if !ok_e {
            return Err(format!("step {i}: energy {:?} vs oracle {e:?}", trace.energies[i]));
        }
    }
    if trace.k_star != brute_k_star(&trace.energies) {
        return Err(format!("k_star {:?} vs brute {:?}", trace.k_star, brute_k_star(&trace.energies)));
    }
    Ok(())
}

/// Random raster mixing a smooth field, a few Gaussian blobs of either
/// polarity and white noise; about one in eight is coarsely quantized to
/// force intensity ties.
pub fn random_raster(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Raster {
    let base: f64 = rng.random_range(0.2..0.8);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..rng.random_range(1..4))
        .map(|_| {
            (
                rng.random_range(0.0..w as f64),
                rng.random_range(0.0..h as f64),
                rng.random_range(0.6..3.0),
                rng.random_range(-0.4..0.4),
            )
        })
        .collect();
    let (fx, fy, phase): (f64, f64, f64) = (rng.random_range(0.0..0.3), rng.random_range(0.0..0.3), rng.random());
    let noise: f64 = rng.random_range(0.0..0.05);
    let levels = if rng.random_bool(0.125) { Some(rng.random_range(4..16) as f64) } else { None };
    let mut noise_rng = ChaCha8Rng::seed_from_u64(rng.random());
    Raster::from_fn(w, h, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let mut v = base + 0.05 * (fx * xf + fy * yf + std::f64::consts::TAU * phase).sin();
        for &(cx, cy, s, a) in &blobs {
            v += a * (-((xf - cx).powi(2) + (yf - cy).powi(2)) / (2.0 * s * s)).exp();
        }
        v += noise * (noise_rng.random::<f64>() - 0.5) * 2.0;
        match levels {
            Some(l) => (v.clamp(0.0, 1.0) * l).round() / l,
            None => v,
        }
    })
    .expect("non-empty")
}

/// Random engine configuration with small support so full-prefix checks stay cheap.
pub fn random_config(rng: &mut ChaCha8Rng, max_r_s: f64) -> PamgConfig {
    let variants = Variant::ALL;
    let mut cfg = PamgConfig::default()
        .with_r_s(rng.random_range(1.0..max_r_s))
        .with_variant(variants[rng.random_range(0..variants.len())]);
    if rng.random_bool(0.3) {
        cfg.connectivity = pamg_core::Connectivity::Four;
    }
    cfg.warmup = rng.random_range(1..8);
    cfg.ring_width = rng.random_range(1..4);
    cfg
}

fn random_blob(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Vec<PixelCoord> {
    let cx = rng.random_range(0..w) as isize;
    let cy = rng.random_range(0..h) as isize;
    let r = rng.random_range(0..3) as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let (x, y) = (cx + dx, cy + dy);
            if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && rng.random_bool(0.8) {
                out.push(PixelCoord::new(x as usize, y as usize));
            }
        }
    }
    if out.is_empty() {
        out.push(PixelCoord::new(cx as usize, cy as usize));
    }
    out
}

/// Union of a few random blobs, possibly empty.
pub fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize, max_blobs: usize) -> Mask {
    let mut px = Vec::new();
    for _ in 0..rng.random_range(0..=max_blobs) {
        px.extend(random_blob(rng, w, h));
    }
    Mask::from_pixels(w, h, px).expect("in bounds")
}

/// One pd/fa perturbation round on a random 48x48 frame: adds either a
/// fresh prediction equal to a GT component or a fresh isolated false
/// pixel, and checks pd resp. fa did not drop. Fresh components never touch
/// existing predictions so no merge can change the matching.
pub fn pd_fa_perturbation(rng: &mut ChaCha8Rng, radius: f64) -> Result<(), String> {
    let (w, h) = (48, 48);
    let gt = random_mask(rng, w, h, 4);
    let pred = random_mask(rng, w, h, 4);
    let before = match_image(&pred, &gt, radius).map_err(|e| e.to_string())?;
    let halo = pred.dilate(1);
    if rng.random_bool(0.5) {
        let comps = gt.components(Connectivity::Eight);
        let free: Vec<&Mask> = comps.iter().filter(|c| c.intersection_area(&halo) == 0).collect();
        if free.is_empty() {
            return Ok(());
        }
        let add = free[rng.random_range(0..free.len())];
        let after_pred = pred.union(add).map_err(|e| e.to_string())?;
        let after = match_image(&after_pred, &gt, radius).map_err(|e| e.to_string())?;
        if after.tally.pd() < before.tally.pd() {
            return Err(format!("pd dropped {} -> {}", before.tally.pd(), after.tally.pd()));
        }
    } else {
        let centroids: Vec<[f64; 2]> = gt
            .components(Connectivity::Eight)
            .iter()
            .map(|c| c.geometry().expect("non-empty").centroid)
            .collect();
        let blocked = gt.dilate(1).union(&halo).map_err(|e| e.to_string())?;
        let spots: Vec<PixelCoord> = (0..w * h)
            .map(|i| PixelCoord::new(i % w, i / w))
            .filter(|p| !blocked.contains(p.x, p.y))
            .filter(|p| centroids.iter().all(|c| (c[0] - p.x as f64).hypot(c[1] - p.y as f64) > radius))
            .collect();
        if spots.is_empty() {
            return Ok(());
        }
        let p = spots[rng.random_range(0..spots.len())];
        let after_pred = pred
            .union(&Mask::from_pixels(w, h, [p]).expect("in bounds"))
            .map_err(|e| e.to_string())?;
        let after = match_image(&after_pred, &gt, radius).map_err(|e| e.to_string())?;
        if after.tally.fa() < before.tally.fa() {
            return Err(format!("fa dropped {} -> {}", before.tally.fa(), after.tally.fa()));
        }
        if after.tally.n_fp_pixels != before.tally.n_fp_pixels + 1 {
            return Err("isolated pixel not counted as false alarm".into());
        }
    }
    Ok(())
}

/// RLE and PNG round trip of one random mask of random shape.
pub fn mask_roundtrip(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let w = rng.random_range(1..80);
    let h = rng.random_range(1..80);
    let m = if rng.random_bool(0.1) {
        let fill = rng.random_bool(0.5);
        Mask::from_bitmap(w, h, &vec![fill; w * h]).expect("sized")
    } else {
        random_mask(rng, w, h, 6)
    };
    let rle = m.encode_rle();
    let back = Mask::decode_rle(&rle).map_err(|e| e.to_string())?;
    if back != m {
        return Err(format!("rle round trip changed a {w}x{h} mask"));
    }
    let png = Mask::from_png_bytes(&m.to_png_bytes()).map_err(|e| e.to_string())?;
    if png != m || png.encode_rle() != rle {
        return Err(format!("png round trip changed a {w}x{h} mask"));
    }
    Ok(())
}

/// Grid checks of the boundary model: B non-increasing in gamma and in n
/// (where n ln n >= e), and `scr > B <=> total < 0` away from exact ties.
pub fn boundary_grid_violations() -> Vec<String> {
    let mut out = Vec::new();
    let gammas = [0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
    let rss = [2.0, 5.0, 10.0, 20.0, 40.0];
    let ns: Vec<usize> = (2..=600).collect();
    for &r_s in &rss {
        for &n in &ns {
            let bs: Vec<f64> = gammas.iter().map(|&g| boundary_b(n, g, r_s).expect("valid")).collect();
            if bs.windows(2).any(|p| p[1] > p[0]) {
                out.push(format!("B increases in gamma at n={n}, r_s={r_s}"));
            }
        }
        for &g in &gammas {
            for w in ns.windows(2) {
                let nf = w[0] as f64;
                if nf * nf.ln() < std::f64::consts::E {
                    continue;
                }
                let (b0, b1) = (boundary_b(w[0], g, r_s).expect("valid"), boundary_b(w[1], g, r_s).expect("valid"));
                if b1 > b0 * (1.0 + 1e-12) {
                    out.push(format!("B increases in n at n={}, gamma={g}, r_s={r_s}", w[0]));
                }
            }
            for &n in ns.iter().step_by(7) {
                let b = boundary_b(n, g, r_s).expect("valid");
                for scr in [0.05, 0.2, 0.5, 0.9, 1.0, 1.1, 2.0, 3.5, 6.0, 12.0] {
                    if (scr - b).abs() <= 1e-9 * (1.0 + b) {
                        continue;
                    }
                    // sigma_B = 1, so delta_mu = scr and sigma_T = 1/gamma
                    let t = increment_terms(&IncrementModel {
                        n,
                        delta_mu: scr,
                        sigma_t_region: 1.0 / g,
                        r_s,
                    })
                    .expect("valid");
                    if (scr > b) != (t.total < 0.0) {
                        out.push(format!("sign mismatch n={n} gamma={g} r_s={r_s} scr={scr}: B={b}, total={}", t.total));
                    }
                }
            }
        }
    }
    out
}

fn fixture_mask(w: usize, h: usize, px: &[(usize, usize)]) -> Mask {
    Mask::from_pixels(w, h, px.iter().map(|&p| PixelCoord::from(p))).expect("in bounds")
}

fn block(x0: usize, y0: usize, bw: usize, bh: usize) -> Vec<(usize, usize)> {
    (y0..y0 + bh).flat_map(|y| (x0..x0 + bw).map(move |x| (x, y))).collect()
}

/// Hand-computed IoU, Pd/Fa and geometry-error fixtures. Returns the ones that fail.
pub fn metric_fixture_failures() -> Vec<String> {
    let mut out = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            out.push(name.to_owned());
        }
    };

    let a = fixture_mask(5, 5, &[(1, 1), (2, 1)]);
    let b = fixture_mask(5, 5, &[(2, 1), (3, 1)]);
    check("iou self", iou(&a, &a).ok() == Some(1.0));
    check("iou disjoint", iou(&a, &fixture_mask(5, 5, &[(4, 4)])).ok() == Some(0.0));
    check("iou 1/3", iou(&a, &b).is_ok_and(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    check("iou empty/empty", iou(&Mask::empty(5, 5), &Mask::empty(5, 5)).ok() == Some(1.0));
    check("iou shape mismatch", iou(&a, &Mask::empty(4, 5)).is_err());
    let one = fixture_mask(5, 5, &[(1, 1)]);
    check("miou missing pred", miou(&[(Some(&one), &one), (None, &one)]).ok() == Some(0.5));

    // three GT blobs of 40 px, two hit (one by centroid distance only), one 5 px stray
    let (w, h) = (640, 512);
    let mut gt_px = block(100, 100, 4, 4);
    gt_px.extend(block(300, 200, 4, 4));
    gt_px.extend(block(500, 400, 4, 2));
    let gt = fixture_mask(w, h, &gt_px);
    let mut pred_px = block(101, 101, 3, 3);
    pred_px.extend(block(304, 202, 1, 1));
    pred_px.extend(block(20, 20, 5, 1));
    let pred = fixture_mask(w, h, &pred_px);
    match pd_fa(&[pred], std::slice::from_ref(&gt), 3.0) {
        Ok((t, pd, fa)) => {
            check("pd_fa tallies", (t.n_tp, t.n_total, t.n_fp_pixels) == (2, 3, 5));
            check("pd 2/3", (pd - 2.0 / 3.0).abs() < 1e-15);
            check("fa 5/(HW-40)", (fa - 5.0 / (640.0 * 512.0 - 40.0)).abs() < 1e-18);
        }
        Err(e) => check(&format!("pd_fa errored: {e}"), false),
    }
    check(
        "pd_fa empty prediction",
        pd_fa(&[Mask::empty(w, h)], &[gt], 3.0).is_ok_and(|(t, pd, fa)| (pd, fa, t.n_total) == (0.0, 0.0, 3)),
    );
    let m = match_image(&fixture_mask(20, 20, &[(6, 5)]), &fixture_mask(20, 20, &[(5, 5), (7, 5)]), 3.0);
    check("one match per prediction", m.is_ok_and(|m| m.tally.n_tp == 1));

    let sq = fixture_mask(20, 20, &[(5, 5), (6, 5), (5, 6), (6, 6)]);
    check("geometry self", geometry_errors(&sq, &sq).is_ok_and(|e| (e.area_ratio, e.centroid_error, e.radius_error) == (1.0, 0.0, 0.0)));
    check(
        "geometry shift 3,4",
        geometry_errors(&sq.translate(3, 4).expect("fits"), &sq)
            .is_ok_and(|e| e.area_ratio == 1.0 && (e.centroid_error - 5.0).abs() < 1e-12 && e.radius_error == 0.0),
    );
    let sp = std::f64::consts::PI.sqrt();
    check(
        "geometry 4 px vs 1 px",
        geometry_errors(&sq, &fixture_mask(20, 20, &[(5, 5)])).is_ok_and(|e| {
            e.area_ratio == 4.0 && (e.centroid_error - 0.5f64.sqrt()).abs() < 1e-12 && (e.radius_error - 1.0 / sp).abs() < 1e-12
        }),
    );
    check("geometry empty pred", geometry_errors(&Mask::empty(20, 20), &sq).is_err());
    out
}
