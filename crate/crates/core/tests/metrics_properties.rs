use pamg_core::metrics::{geometry_errors, iou, DEFAULT_MATCH_RADIUS};
use pamg_testkit::{pd_fa_perturbation, random_mask};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn hand_fixtures_hold() {
    assert_eq!(pamg_testkit::metric_fixture_failures(), Vec::<String>::new());
}

#[test]
fn pd_fa_monotone_over_thousand_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..1000 {
        if let Err(e) = pd_fa_perturbation(&mut rng, DEFAULT_MATCH_RADIUS) {
            panic!("perturbation {i}: {e}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn iou_is_symmetric(s in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let a = random_mask(&mut rng, 32, 24, 5);
        let b = random_mask(&mut rng, 32, 24, 5);
        prop_assert_eq!(iou(&a, &b).unwrap(), iou(&b, &a).unwrap());
        if !a.is_empty() {
            prop_assert_eq!(iou(&a, &a).unwrap(), 1.0);
        }
    }

    #[test]
    fn self_geometry_errors_are_exact(s in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let m = random_mask(&mut rng, 40, 40, 5);
        prop_assume!(!m.is_empty());
        let e = geometry_errors(&m, &m).unwrap();
        prop_assert_eq!((e.area_ratio, e.centroid_error, e.radius_error), (1.0, 0.0, 0.0));
    }
}
