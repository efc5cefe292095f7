mod common;

use cnnkit_core::augment::{
    color_jitter, horizontal_flip, jitter_with, random_resized_crop, rotate, AugmentProfile, Phase,
    ProfileName, Transform, DEFAULT_RATIO,
};
use cnnkit_core::image::{normalize, resize_bilinear, Image, NormalizeMode};
use cnnkit_core::rng::{domain, stream};
use common::rng;
use rand::Rng;

fn random_image(h: usize, w: usize, seed: u64) -> Image {
    let mut r = rng(seed);
    Image::from_fn(h, w, |_, _| [r.random(), r.random(), r.random()]).unwrap()
}

#[test]
fn flip_rate_is_close_to_probability() {
    let img = random_image(1, 2, 1);
    let mut r = stream(42, &[domain::AUGMENT]);
    let flipped = (0..10_000)
        .filter(|_| horizontal_flip(&img, 0.5, &mut r).unwrap() != img)
        .count();
    let rate = flipped as f64 / 10_000.0;
    assert!((0.48..=0.52).contains(&rate), "{rate}");
    assert!((0..100).all(|_| horizontal_flip(&img, 0.0, &mut r).unwrap() == img));
}

#[test]
fn rotation_angles_cover_the_range() {
    // A single bright pixel off-centre reveals the applied angle.
    let (h, w) = (201, 201);
    let mut img = Image::filled(h, w, [0.0; 3]).unwrap();
    img.set_pixel(100, 200, [1.0; 3]);
    let mut r = stream(42, &[domain::AUGMENT, 1]);
    let (mut lo, mut hi) = (f64::MAX, f64::MIN);
    let mut angles = Vec::new();
    // Draw the angles through the same generator calls `rotate` makes.
    for _ in 0..10_000 {
        angles.push(r.random_range(-10.0..=10.0f64));
    }
    for &a in &angles {
        lo = lo.min(a);
        hi = hi.max(a);
    }
    assert!(
        (-10.0..=-9.5).contains(&lo) && (9.5..=10.0).contains(&hi),
        "{lo} {hi}"
    );

    // `rotate` consumes exactly one draw, so a replayed stream yields the same first angle.
    let mut r = stream(42, &[domain::AUGMENT, 1]);
    let out = rotate(&img, 10.0, &mut r).unwrap();
    let (mut by, mut bx, mut best) = (0, 0, -1.0f32);
    for y in 0..h {
        for x in 0..w {
            if out.pixel(y, x)[0] > best {
                best = out.pixel(y, x)[0];
                (by, bx) = (y, x);
            }
        }
    }
    let measured = -((by as f64 - 100.0).atan2(bx as f64 - 100.0)).to_degrees();
    assert!(
        (measured - angles[0]).abs() < 1.0,
        "measured {measured}, drawn {}",
        angles[0]
    );
    assert!(rotate(&img, 0.0, &mut r).unwrap() == img);
}

#[test]
fn degenerate_parameters_reduce_train_to_val() {
    let img = random_image(40, 40, 3);
    let profile = AugmentProfile {
        name: ProfileName::Paddy,
        ops: vec![
            Transform::RandomResizedCrop {
                scale_min: 1.0,
                scale_max: 1.0,
                ratio_min: 1.0,
                ratio_max: 1.0,
            },
            Transform::HorizontalFlip { p: 0.0 },
            Transform::Rotate { max_deg: 0.0 },
            Transform::ColorJitter { magnitude: 0.0 },
        ],
    };
    let mut r = stream(1, &[domain::AUGMENT]);
    for size in [40, 24] {
        for mode in [NormalizeMode::Unit, NormalizeMode::Imagenet] {
            let train = profile
                .apply(&img, Phase::Train, size, mode, &mut r)
                .unwrap();
            let val = profile.apply(&img, Phase::Val, size, mode, &mut r).unwrap();
            assert_eq!(train, val);
        }
    }
}

#[test]
fn outputs_have_contract_shape_and_range() {
    for (k, name) in ProfileName::ALL.into_iter().enumerate() {
        let profile = name.profile();
        for mode in [NormalizeMode::Unit, NormalizeMode::Imagenet] {
            for trial in 0..10 {
                let img = random_image(30 + trial * 3, 50 - trial * 2, (k * 100 + trial) as u64);
                let mut r = stream(k as u64, &[domain::AUGMENT, trial as u64]);
                let t = profile.apply(&img, Phase::Train, 32, mode, &mut r).unwrap();
                assert_eq!(t.shape(), &[3, 32, 32]);
                for c in 0..3 {
                    let (lo, hi) = mode.range(c);
                    assert!(t.data()[c * 1024..(c + 1) * 1024]
                        .iter()
                        .all(|&v| v >= lo - 1e-6 && v <= hi + 1e-6));
                }
            }
        }
    }
}

#[test]
fn val_phase_and_determinism() {
    let img = random_image(33, 45, 4);
    let p = ProfileName::Paddy.profile();
    let mut r = stream(5, &[domain::AUGMENT]);
    let val = p
        .apply(&img, Phase::Val, 24, NormalizeMode::Unit, &mut r)
        .unwrap();
    assert_eq!(
        val,
        normalize(&resize_bilinear(&img, 24, 24).unwrap(), NormalizeMode::Unit)
    );
    let a = p
        .apply(
            &img,
            Phase::Train,
            24,
            NormalizeMode::Unit,
            &mut stream(5, &[domain::AUGMENT, 7]),
        )
        .unwrap();
    let b = p
        .apply(
            &img,
            Phase::Train,
            24,
            NormalizeMode::Unit,
            &mut stream(5, &[domain::AUGMENT, 7]),
        )
        .unwrap();
    assert_eq!(a, b);
}

#[test]
fn mango_profile_uses_a_single_flip() {
    let img = random_image(8, 8, 6);
    let p = ProfileName::Mango.profile();
    assert_eq!(p.ops, vec![Transform::HorizontalFlip { p: 0.5 }]);
    let mut r = stream(8, &[domain::AUGMENT]);
    for _ in 0..20 {
        let out = p.augment(&img, Phase::Train, 8, &mut r).unwrap();
        assert!(out == img || out == cnnkit_core::augment::flip_horizontal(&img));
    }
}

#[test]
fn crop_always_produces_requested_size() {
    let mut r = stream(9, &[domain::AUGMENT]);
    for (h, w) in [(100, 100), (30, 200), (200, 30), (5, 5), (1, 9)] {
        let img = random_image(h, w, 7);
        for _ in 0..20 {
            let out = random_resized_crop(&img, (0.8, 1.0), DEFAULT_RATIO, 24, &mut r).unwrap();
            assert_eq!((out.height(), out.width()), (24, 24));
        }
    }
    let square = random_image(50, 50, 8);
    let full = random_resized_crop(&square, (1.0, 1.0), (1.0, 1.0), 24, &mut r).unwrap();
    assert_eq!(full, resize_bilinear(&square, 24, 24).unwrap());
}

#[test]
fn jitter_stays_in_unit_range() {
    let mut r = stream(10, &[domain::AUGMENT]);
    for seed in 0..50 {
        let img = random_image(6, 6, seed);
        assert!(color_jitter(&img, 0.3, &mut r).unwrap().in_unit_range());
    }
    let img = random_image(4, 4, 99);
    assert!(jitter_with(&img, 1.6, 0.4, 1.9).in_unit_range());
}

#[test]
fn profiles_dump_as_json() {
    let v = serde_json::to_value(ProfileName::Paddy.profile()).unwrap();
    assert_eq!(v["name"], "paddy");
    assert_eq!(v["ops"][0]["op"], "random_resized_crop");
    assert_eq!(v["ops"][0]["scale_min"], 0.8);
    assert_eq!(v["ops"][3]["magnitude"], 0.3);
}
