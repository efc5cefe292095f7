mod common;

use std::collections::HashSet;

use cnnkit_core::split::{deterministic_split, val_count, Split};
use common::rng;
use rand::Rng;

fn classes(sizes: &[usize]) -> Vec<(String, Vec<String>)> {
    sizes
        .iter()
        .enumerate()
        .map(|(c, &n)| {
            (
                format!("c{c}"),
                (0..n).map(|i| format!("c{c}/img_{i:04}.ppm")).collect(),
            )
        })
        .collect()
}

#[test]
fn fuzzed_class_sizes_satisfy_split_invariants() {
    let mut r = rng(5);
    for case in 0..1000 {
        let k = r.random_range(1..8);
        let sizes: Vec<usize> = (0..k).map(|_| r.random_range(0..40)).collect();
        if sizes.iter().all(|&n| n == 0) {
            continue;
        }
        let fraction = r.random_range(0.01..0.99);
        let seed = r.random::<u64>();
        let input = classes(&sizes);
        let out = deterministic_split(&input, fraction, seed).unwrap();
        let m = &out.manifest;
        assert_eq!(
            out.dropped.len(),
            sizes.iter().filter(|&&n| n == 0).count(),
            "case {case}"
        );

        // Union is the full sample set, and the two splits are disjoint.
        let all: HashSet<&str> = input
            .iter()
            .flat_map(|(_, p)| p.iter().map(String::as_str))
            .collect();
        let train: HashSet<&str> = m.split(Split::Train).map(|s| s.path.as_str()).collect();
        let val: HashSet<&str> = m.split(Split::Val).map(|s| s.path.as_str()).collect();
        assert!(train.is_disjoint(&val));
        assert_eq!(&train | &val, all);
        assert_eq!(m.samples.len(), all.len());

        let kept: Vec<usize> = sizes.iter().copied().filter(|&n| n > 0).collect();
        for (c, &n) in kept.iter().enumerate() {
            let v = m
                .samples
                .iter()
                .filter(|s| s.class_index == c && s.split == Split::Val)
                .count();
            let expected = if n == 1 {
                0
            } else {
                ((fraction * n as f64).round() as usize).clamp(1, n - 1)
            };
            assert_eq!(
                v, expected,
                "case {case} class {c} n {n} fraction {fraction}"
            );
            assert_eq!(v, val_count(n, fraction));
            if n >= 2 {
                // Within one sample of the exact proportion, except where clamping forces a side non-empty.
                let exact = fraction * n as f64;
                assert!((v as f64 - exact).abs() <= 1.0 || v == 1 || v == n - 1);
            }
        }

        let again = deterministic_split(&input, fraction, seed).unwrap();
        assert_eq!(serde_json_like(&again.manifest), serde_json_like(m));
    }
}

fn serde_json_like(m: &cnnkit_core::split::DatasetManifest) -> String {
    format!("{m:?}")
}

#[test]
fn eighty_twenty_proportions() {
    let out = deterministic_split(&classes(&[10, 10]), 0.2, 42).unwrap();
    assert_eq!(out.manifest.count(Split::Val), 4);
    assert_eq!(out.manifest.count(Split::Train), 16);
    let out = deterministic_split(&classes(&[7]), 0.2, 42).unwrap();
    assert_eq!(out.manifest.count(Split::Val), 1);
    let out = deterministic_split(&classes(&[1, 5]), 0.2, 42).unwrap();
    assert!(out
        .manifest
        .samples
        .iter()
        .filter(|s| s.class_index == 0)
        .all(|s| s.split == Split::Train));
}
