use pamg_core::boundary::{bucketed_validation, proposition1_scan, TargetRecord, DEFAULT_RHO_EDGES};
use pamg_testkit::boundary_grid_violations;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn boundary_grid_is_consistent() {
    let v = boundary_grid_violations();
    assert!(v.is_empty(), "{} violations, first: {:?}", v.len(), v.first());
}

#[test]
fn proposition1_holds_on_parameter_grid() {
    let mut checked = 0;
    for &dmu in &[0.01, 0.05, 0.1, 0.3, 1.0] {
        for &sig in &[0.05, 0.2, 0.5, 1.0] {
            for &rs in &[3.0, 8.0, 12.0, 20.0, 40.0] {
                let p = proposition1_scan(dmu, sig, rs, 4000).unwrap();
                assert!(p.holds, "dmu={dmu} sig={sig} rs={rs}: {p:?}");
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 100);
}

proptest! {
    #[test]
    fn buckets_ignore_record_order(s in any::<u64>(), n in 1usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let records: Vec<TargetRecord> = (0..n)
            .map(|i| {
                let scr = (i as f64 * 0.37) % 9.0 - 1.0;
                let gamma = if i % 11 == 0 { f64::INFINITY } else { 0.2 + (i % 7) as f64 * 0.3 };
                TargetRecord::new(scr, gamma, 4 + i % 30, 20.0, (i as f64 * 0.13) % 1.0).unwrap()
            })
            .collect();
        let a = bucketed_validation(records.clone(), &DEFAULT_RHO_EDGES).unwrap();
        let mut shuffled = records;
        shuffled.shuffle(&mut rng);
        let b = bucketed_validation(shuffled, &DEFAULT_RHO_EDGES).unwrap();
        for (x, y) in a.buckets.iter().zip(&b.buckets) {
            prop_assert_eq!(x.count, y.count);
            prop_assert_eq!(x.success_rate, y.success_rate);
            match (x.mean_iou, y.mean_iou) {
                (Some(p), Some(q)) => prop_assert!((p - q).abs() <= 1e-12),
                (p, q) => prop_assert_eq!(p, q),
            }
        }
    }
}
