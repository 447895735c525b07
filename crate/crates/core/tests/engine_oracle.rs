use pamg_core::pamg::{grow, PamgConfig};
use pamg_core::raster::PixelCoord;
use pamg_core::synth::{render, target_gt_mask, BackgroundSpec, SyntheticSpec, TargetSpec};
use pamg_testkit::{check_trace, random_config, random_raster};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn random_runs_match_prefix_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for run in 0..300 {
        let img = random_raster(&mut rng, 64, 64);
        let cfg = random_config(&mut rng, 7.0);
        let seed = PixelCoord::new(rng.random_range(0..64), rng.random_range(0..64));
        let trace = grow(&img, seed, &cfg).unwrap();
        if let Err(e) = check_trace(&img, seed, &cfg, &trace, 1) {
            panic!("run {run} ({cfg:?}, seed {seed:?}): {e}");
        }
    }
}

#[test]
fn wide_support_runs_match_on_strided_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for run in 0..6 {
        let img = random_raster(&mut rng, 64, 64);
        let cfg = PamgConfig::default();
        let seed = PixelCoord::new(rng.random_range(0..64), rng.random_range(0..64));
        let trace = grow(&img, seed, &cfg).unwrap();
        assert_eq!(trace.len(), 1257);
        if let Err(e) = check_trace(&img, seed, &cfg, &trace, 41) {
            panic!("run {run}: {e}");
        }
    }
}

#[test]
fn gaussian_scene_matches_oracle_at_every_step() {
    let probe = TargetSpec {
        center: [15.6, 16.2],
        sigma_t: 1.5,
        amplitude: 1.0,
    };
    let gt = target_gt_mask(&probe, 32, 32, 0.2);
    let mean_w = gt.pixels().map(|p| probe.weight(p.x as f64, p.y as f64)).sum::<f64>() / gt.area() as f64;
    let spec = SyntheticSpec {
        width: 32,
        height: 32,
        targets: vec![TargetSpec {
            amplitude: 10.0 * 0.02 / mean_w,
            ..probe
        }],
        background: BackgroundSpec::default(),
        rng_seed: 5,
        gt_tau: 0.2,
    };
    let scene = render(&spec).unwrap();
    let cfg = PamgConfig::default();
    let seed = PixelCoord::new(16, 16);
    let trace = grow(&scene.raster, seed, &cfg).unwrap();
    // budget ceil(400 pi) exceeds the frame, so growth covers it
    assert_eq!(trace.len(), 32 * 32);
    check_trace(&scene.raster, seed, &cfg, &trace, 1).unwrap();
}
