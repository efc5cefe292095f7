mod common;

use cnnkit_core::analyze::count_parameters;
use cnnkit_core::nn::{build_custom_cnn, init_parameters, Model, HEAD};
use cnnkit_core::optim::{Adam, AdamConfig};
use cnnkit_core::train::{eval_batch, train_step};
use cnnkit_core::Tensor;
use common::rng;
use rand::Rng;

/// Batch of `n` images whose class decides the dominant colour channel.
fn colour_batch(n: usize, side: usize, classes: usize, seed: u64) -> (Tensor<f32>, Vec<usize>) {
    let mut r = rng(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut data = Vec::with_capacity(n * 3 * side * side);
    for &l in &labels {
        for c in 0..3 {
            for _ in 0..side * side {
                let base = if c == l % 3 { 0.7 } else { 0.2 };
                data.push(base + r.random_range(-0.15f32..0.15));
            }
        }
    }
    (Tensor::from_vec(&[n, 3, side, side], data).unwrap(), labels)
}

fn model(classes: usize, seed: u64) -> Model<f32> {
    let mut m = build_custom_cnn(classes).unwrap();
    init_parameters(&mut m, seed);
    m
}

#[test]
fn overfits_a_single_batch() {
    let mut m = model(3, 1);
    let mut adam = Adam::new(&m, AdamConfig::default()).unwrap();
    let (x, y) = colour_batch(12, 32, 3, 2);
    let mut losses = Vec::new();
    for _ in 0..300 {
        let out = train_step(&mut m, &mut adam, x.clone(), &y).unwrap();
        losses.push(out.loss);
        if out.loss < 0.05 && losses.len() > 10 {
            break;
        }
    }
    for w in losses[..10].windows(2) {
        assert!(
            w[1] < w[0],
            "loss not strictly decreasing over the first steps: {:?}",
            &losses[..10]
        );
    }
    let last = *losses.last().unwrap();
    assert!(
        last < 0.05,
        "cross-entropy {last} after {} steps",
        losses.len()
    );
}

#[test]
fn frozen_model_gives_identical_epochs() {
    let mut m = model(3, 3);
    m.set_all_trainable(false);
    let before = m.fingerprint();
    let mut adam = Adam::new(&m, AdamConfig::default()).unwrap();
    assert_eq!(adam.param_names().count(), 0);
    let (x, y) = colour_batch(8, 16, 3, 4);
    let run = |m: &mut Model<f32>, adam: &mut Adam<f32>| -> Vec<u64> {
        (0..3)
            .map(|_| train_step(m, adam, x.clone(), &y).unwrap().loss.to_bits())
            .collect()
    };
    let a = run(&mut m, &mut adam);
    let b = run(&mut m, &mut adam);
    assert_eq!(a, b);
    assert_eq!(m.fingerprint(), before);
}

#[test]
fn frozen_backbone_is_bit_identical_after_training() {
    let mut m = model(2, 5);
    m.set_all_trainable(false);
    m.set_trainable(&[HEAD], true).unwrap();
    let snapshot: Vec<(String, Vec<u32>)> = m
        .state_entries()
        .filter(|(name, ..)| !name.starts_with("head."))
        .map(|(name, _, t)| {
            (
                name.to_string(),
                t.data().iter().map(|v| v.to_bits()).collect(),
            )
        })
        .collect();
    let head_before = m.param("head.weight").unwrap().value.clone();
    let mut adam = Adam::new(&m, AdamConfig::default()).unwrap();
    assert_eq!(
        adam.param_names().collect::<Vec<_>>(),
        ["head.weight", "head.bias"]
    );
    assert_eq!(count_parameters(&m).trainable, 2 * 256 + 2);
    let (x, y) = colour_batch(6, 16, 2, 6);
    for _ in 0..5 {
        train_step(&mut m, &mut adam, x.clone(), &y).unwrap();
    }
    for (name, bits) in snapshot {
        let now = m.state_entries().find(|(n, ..)| *n == name).unwrap().2;
        assert!(
            now.data().iter().map(|v| v.to_bits()).eq(bits),
            "{name} changed"
        );
    }
    assert_ne!(m.param("head.weight").unwrap().value, head_before);
}

#[test]
fn evaluation_is_pure_and_normalized() {
    let mut m = model(3, 7);
    let mut adam = Adam::new(&m, AdamConfig::default()).unwrap();
    let (x, y) = colour_batch(6, 16, 3, 8);
    train_step(&mut m, &mut adam, x.clone(), &y).unwrap();
    let before = m.fingerprint();
    let a = eval_batch(&m, x.clone(), &y).unwrap();
    let b = eval_batch(&m, x, &y).unwrap();
    assert_eq!(m.fingerprint(), before);
    assert_eq!(a, b);
    for row in a.probabilities.data().chunks(3) {
        assert!((row.iter().map(|&p| f64::from(p)).sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn untrained_network_is_at_chance() {
    let m = model(2, 9);
    let mut correct = 0;
    for chunk in 0..10 {
        let mut r = rng(100 + chunk);
        let n = 50;
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let data = (0..n * 3 * 16 * 16).map(|_| r.random::<f32>()).collect();
        let x = Tensor::from_vec(&[n, 3, 16, 16], data).unwrap();
        correct += eval_batch(&m, x, &labels).unwrap().correct;
    }
    let acc = correct as f64 / 500.0;
    assert!((acc - 0.5).abs() <= 0.1, "{acc}");
}

#[test]
fn mismatched_batch_is_rejected() {
    let mut m = model(2, 1);
    let mut adam = Adam::new(&m, AdamConfig::default()).unwrap();
    let (x, _) = colour_batch(4, 16, 2, 1);
    assert!(train_step(&mut m, &mut adam, x.clone(), &[0, 1, 0]).is_err());
    assert!(eval_batch(&m, x, &[0, 1, 0, 5]).is_err());
}
