mod common;

use common::*;
use histoconv::augment::{augment_image, hflip, AugmentConfig};
use histoconv::{Rng, Tensor};
use proptest::prelude::*;

fn image(h: usize, w: usize, seed: u64) -> Tensor<f32> {
    let mut rng = Rng::new(seed);
    Tensor::from_fn(&[h, w, 3], |_| rng.uniform() as f32)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn hflip_is_an_involution(h in 1usize..30, w in 1usize..30, seed in any::<u64>()) {
        let img = image(h, w, seed);
        prop_assert_eq!(hflip(&hflip(&img).unwrap()).unwrap(), img);
    }

    #[test]
    fn disabled_config_is_identity(h in 1usize..30, w in 1usize..30, seed in any::<u64>()) {
        let img = image(h, w, seed);
        let out = augment_image(&img, &AugmentConfig::disabled(), &mut Rng::new(seed)).unwrap();
        prop_assert_eq!(out, img);
    }

    #[test]
    fn augmentation_preserves_shape_and_range(h in 2usize..24, w in 2usize..24, seed in any::<u64>()) {
        let img = image(h, w, seed);
        let out = augment_image(&img, &AugmentConfig::default(), &mut Rng::new(seed)).unwrap();
        prop_assert_eq!(out.shape(), img.shape());
        let (lo, hi) = img.data().iter().fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        prop_assert!(out.data().iter().all(|&v| v >= lo && v <= hi));
    }

    #[test]
    fn small_rotations_round_trip(deg in -45.0f64..45.0) {
        let img = gradient_image(48, 48, 1.3, 0.7);
        prop_assert!(rotation_round_trip_agreement(&img, deg) >= 0.99);
    }
}

#[test]
fn augmentation_criteria() {
    criterion_augment().unwrap();
}
