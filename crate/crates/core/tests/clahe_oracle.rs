mod common;

use common::clahe_ref::clahe_reference;
use common::{random_image, smooth_image};
use leafvit_core::preprocess::{clahe, clahe_tile_mappings, ImageBuffer};
use leafvit_core::rng::SplitMix64;
use proptest::prelude::*;

#[test]
fn matches_reference_on_random_images() {
    let mut rng = SplitMix64::new(2024);
    for i in 0..100 {
        let (h, w) = (32 + rng.below(225) as usize, 32 + rng.below(225) as usize);
        let img = if i % 2 == 0 {
            random_image(&mut rng, h, w)
        } else {
            smooth_image(&mut rng, h, w)
        };
        let got = clahe(&img, 2.0, 8).unwrap();
        let want = clahe_reference(&img, 2.0, 8);
        assert_eq!(got, want, "image {i} ({h}x{w}) differs from the reference");
    }
}

#[test]
fn matches_reference_across_settings() {
    let mut rng = SplitMix64::new(7);
    for &(clip, grid) in &[(1.0, 4), (3.0, 8), (4.0, 2), (40.0, 8), (2.0, 1)] {
        let img = smooth_image(&mut rng, 97, 130);
        assert_eq!(clahe(&img, clip, grid).unwrap(), clahe_reference(&img, clip, grid));
    }
}

#[test]
fn constant_image_maps_within_one_level() {
    for v in [0u8, 17, 128, 255] {
        let img = ImageBuffer::filled(64, 48, [v, v, v]).unwrap();
        let out = clahe(&img, 2.0, 8).unwrap();
        let first = out.pixels()[0];
        assert!(out.pixels().iter().all(|&p| p == first), "constant input {v} lost uniformity");
        assert_eq!(out, clahe_reference(&img, 2.0, 8));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tile_maps_are_monotone(seed in any::<u64>(), h in 16usize..96, w in 16usize..96, clip in 1.0f64..6.0) {
        let mut rng = SplitMix64::new(seed);
        let img = random_image(&mut rng, h, w);
        let maps = clahe_tile_mappings(&img, clip, 8).unwrap();
        for ty in 0..maps.grid {
            for tx in 0..maps.grid {
                let m = maps.map(ty, tx);
                prop_assert!(m.windows(2).all(|p| p[0] <= p[1]));
            }
        }
    }

    #[test]
    fn gray_input_stays_gray(seed in any::<u64>(), h in 16usize..80, w in 16usize..80) {
        let mut rng = SplitMix64::new(seed);
        let img = ImageBuffer::from_fn(h, w, |_, _| { let v = rng.below(256) as u8; [v, v, v] }).unwrap();
        let out = clahe(&img, 2.0, 8).unwrap();
        for p in out.pixels().chunks(3) {
            prop_assert!(p[0].abs_diff(p[1]) <= 1 && p[1].abs_diff(p[2]) <= 1);
        }
    }
}
