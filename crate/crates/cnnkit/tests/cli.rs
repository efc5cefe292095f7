use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cnnkit::synth;

fn cnnkit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cnnkit"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn text(o: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    )
}

/// Small synthetic dataset with its manifest.
fn small_dataset(dir: &Path) {
    synth::generate(&dir.join("data"), 8, 32, 5).unwrap();
    let o = cnnkit(&["split", "--data", "data", "--out", "manifest.json"], dir);
    assert_eq!(code(&o), 0, "{}", text(&o));
}

#[test]
fn prepare_missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = cnnkit(
        &["prepare", "--input", "nowhere", "--output", "out"],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("nowhere"));
}

#[test]
fn prepare_class_tree_sanitizes_every_class() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    for i in 0..15 {
        let class = raw.join(format!("Variety {i}"));
        fs::create_dir_all(&class).unwrap();
        fs::write(class.join("a.ppm"), b"P6\n1 1\n255\n\x01\x02\x03").unwrap();
    }
    let o = cnnkit(
        &[
            "prepare",
            "--input",
            "raw",
            "--layout",
            "classtree",
            "--output",
            "tree",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", text(&o));
    let mut names: Vec<String> = fs::read_dir(dir.path().join("tree"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 15);
    assert!(names.contains(&"variety_14".to_string()));
}

#[test]
fn prepare_yolo_builds_binary_tree() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    fs::create_dir_all(raw.join("images")).unwrap();
    fs::create_dir_all(raw.join("labels")).unwrap();
    for stem in ["a", "b", "c"] {
        fs::write(
            raw.join("images").join(format!("{stem}.ppm")),
            b"P6\n1 1\n255\n\0\0\0",
        )
        .unwrap();
    }
    fs::write(raw.join("labels/a.txt"), "0 0.5 0.5 0.2 0.3\n").unwrap();
    fs::write(raw.join("labels/b.txt"), "3 0.5 0.5 0.2 0.3\n").unwrap();

    let o = cnnkit(
        &[
            "prepare", "--input", "raw", "--layout", "yolo", "--output", "tree",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 2, "positive ids are required");

    let o = cnnkit(
        &[
            "prepare",
            "--input",
            "raw",
            "--layout",
            "yolo",
            "--positive-ids",
            "0",
            "--output",
            "tree",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(dir.path().join("tree/auto_rickshaw/a.ppm").exists());
    assert!(dir.path().join("tree/non_autorickshaw/b.ppm").exists());
    assert!(dir.path().join("tree/non_autorickshaw/c.ppm").exists());
}

#[test]
fn split_validation_and_repeatability() {
    let dir = tempfile::tempdir().unwrap();
    synth::generate(&dir.path().join("data"), 5, 8, 1).unwrap();
    let o = cnnkit(
        &[
            "split",
            "--data",
            "data",
            "--val-fraction",
            "0",
            "--out",
            "m.json",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    for out in ["m1.json", "m2.json"] {
        assert_eq!(
            code(&cnnkit(
                &["split", "--data", "data", "--out", out],
                dir.path()
            )),
            0
        );
    }
    assert_eq!(
        fs::read(dir.path().join("m1.json")).unwrap(),
        fs::read(dir.path().join("m2.json")).unwrap()
    );
}

#[test]
fn analyze_reports_sizes_and_rejects_unknown_arch() {
    let dir = tempfile::tempdir().unwrap();
    let o = cnnkit(
        &["analyze", "--arch", "vgg16", "--num-classes", "1000"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    assert!(text(&o).contains("527.79"), "{}", text(&o));

    let o = cnnkit(
        &[
            "analyze",
            "--arch",
            "custom",
            "--num-classes",
            "2",
            "--csv",
            "c.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let out = text(&o);
    assert!(
        out.contains("trainable parameters: 850338") && out.contains("0.85"),
        "{out}"
    );
    let csv = fs::read_to_string(dir.path().join("c.csv")).unwrap();
    assert!(csv.lines().all(|l| l.split(',').count() == 6));
    assert!(csv
        .lines()
        .last()
        .unwrap()
        .starts_with("total,,,850338,2432,"));

    let o = cnnkit(
        &["analyze", "--arch", "alexnet", "--num-classes", "2"],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    let out = text(&o);
    assert!(
        out.contains("custom") && out.contains("resnet18") && out.contains("vgg16"),
        "{out}"
    );
}

#[test]
fn profiles_dump_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = cnnkit(&["profiles", "--name", "mango"], dir.path());
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["ops"].as_array().unwrap().len(), 1);
    assert_eq!(v[0]["ops"][0]["op"], "horizontal_flip");
}

#[test]
fn train_contracts() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let o = cnnkit(
        &[
            "train",
            "--manifest",
            "manifest.json",
            "--mode",
            "transfer",
            "--out",
            "run",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("--weights"));

    let o = cnnkit(
        &[
            "train",
            "--manifest",
            "manifest.json",
            "--batch-size",
            "0",
            "--out",
            "run",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 2);

    let o = cnnkit(
        &["train", "--manifest", "missing.json", "--out", "run"],
        dir.path(),
    );
    assert_eq!(code(&o), 3);
}

#[test]
fn train_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let args = [
        "train",
        "--manifest",
        "manifest.json",
        "--epochs",
        "2",
        "--batch-size",
        "8",
        "--image-size",
        "32",
    ];
    let o = cnnkit(
        &[&args[..], &["--profile", "paddy", "--out", "run"]].concat(),
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", text(&o));
    let run = dir.path().join("run");
    for f in [
        "config.json",
        "curves.csv",
        "best.ckpt",
        "final.ckpt",
        "run.json",
    ] {
        assert!(run.join(f).exists(), "{f}");
    }
    assert_eq!(
        fs::read_to_string(run.join("curves.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 2 * 2
    );

    for out in ["r1", "r2"] {
        let o = cnnkit(
            &[
                "evaluate",
                "--checkpoint",
                "run/final.ckpt",
                "--manifest",
                "manifest.json",
                "--out",
                out,
            ],
            dir.path(),
        );
        assert_eq!(code(&o), 0, "{}", text(&o));
    }
    for f in [
        "confusion.csv",
        "metrics.json",
        "predictions.jsonl",
        "failures.jsonl",
    ] {
        let a = fs::read(dir.path().join("r1").join(f)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("r2").join(f)).unwrap(), "{f}");
    }
    let metrics: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("r1/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["weighted"]["recall"], metrics["accuracy"]);

    // A checkpoint trained on three classes cannot score a two-class manifest.
    fs::remove_dir_all(dir.path().join("data/red_disc")).unwrap();
    assert_eq!(
        code(&cnnkit(
            &["split", "--data", "data", "--out", "two.json"],
            dir.path()
        )),
        0
    );
    let o = cnnkit(
        &[
            "evaluate",
            "--checkpoint",
            "run/final.ckpt",
            "--manifest",
            "two.json",
            "--out",
            "r3",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 3, "{}", text(&o));
}

#[test]
fn undecodable_images_exit_with_format_error() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    fs::write(dir.path().join("data/red_disc/zz.jpg"), b"\xff\xd8\xff\xe0").unwrap();
    assert_eq!(
        code(&cnnkit(
            &["split", "--data", "data", "--out", "manifest.json"],
            dir.path()
        )),
        0
    );
    let o = cnnkit(
        &[
            "train",
            "--manifest",
            "manifest.json",
            "--epochs",
            "1",
            "--image-size",
            "16",
            "--out",
            "run",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 3, "{}", text(&o));
    assert!(text(&o).contains("zz.jpg"));
}

#[test]
fn diverging_training_exits_with_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let o = cnnkit(
        &[
            "train",
            "--manifest",
            "manifest.json",
            "--epochs",
            "3",
            "--image-size",
            "16",
            "--lr",
            "1e38",
            "--out",
            "run",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 4, "{}", text(&o));
    assert!(text(&o).contains("epoch"), "{}", text(&o));
    assert!(dir.path().join("run/config.json").exists());
}
