//! The digit-classification bandit on small generated IDX files.

use std::sync::Arc;

use knn_ucb::config::{parse_config, Command};
use knn_ucb::dataset::{serialize_idx_images, serialize_idx_labels, IdxImages, LabeledImageSet};
use knn_ucb::experiment::Scenario;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Ten well-separated 4x4 class prototypes plus pixel noise.
fn synthetic_digits(n: usize, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::with_capacity(n * 16);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c: u8 = rng.random_range(0..10);
        for p in 0..16u8 {
            let on = (p + c) % 10 < 3;
            let base: i32 = if on { 220 } else { 20 };
            pixels.push((base + rng.random_range(-20..=20)).clamp(0, 255) as u8);
        }
        labels.push(c);
    }
    let images = IdxImages { count: n, rows: 4, cols: 4, pixels };
    (serialize_idx_images(&images), serialize_idx_labels(&labels))
}

fn run(policy: &str, set: &Arc<LabeledImageSet>, horizon: usize) -> f64 {
    let text = format!(
        "run.T = {horizon}\nrun.trials = 4\nrun.seed = 5\npolicy.kind = {policy}\n\
         data.images = unused\ndata.labels = unused\n"
    );
    let cfg = parse_config(&text, Command::Mnist).unwrap();
    let sc = Scenario::with_data(&cfg, Some(set.clone())).unwrap();
    assert_eq!(sc.config().env.dim, 16);
    sc.run(1).unwrap().aggregate.final_mean()
}

#[test]
fn random_play_misses_nine_in_ten() {
    let (img, lab) = synthetic_digits(500, 1);
    let set = Arc::new(LabeledImageSet::from_bytes(&img, &lab).unwrap());
    let regret = run("random", &set, 1000);
    assert!((regret - 900.0).abs() < 40.0, "regret {regret}");
}

#[test]
fn nearest_neighbor_learns_the_classes() {
    let (img, lab) = synthetic_digits(500, 2);
    let set = Arc::new(LabeledImageSet::from_bytes(&img, &lab).unwrap());
    let knn = run("adaptive_knn", &set, 1000);
    assert!(knn < 600.0, "regret {knn}");
}

#[test]
fn mnist_command_reads_files() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = synthetic_digits(50, 3);
    std::fs::write(dir.path().join("img.idx"), img).unwrap();
    std::fs::write(dir.path().join("lab.idx"), lab).unwrap();
    let cfg = dir.path().join("m.cfg");
    std::fs::write(
        &cfg,
        format!(
            "run.T = 120\nrun.trials = 2\nrun.seed = 1\nenv.kind = mnist\npolicy.kind = oracle\n\
             data.images = {}\ndata.labels = {}\n",
            dir.path().join("img.idx").display(),
            dir.path().join("lab.idx").display()
        ),
    )
    .unwrap();
    let out = dir.path().join("m.csv");
    let o = std::process::Command::new(env!("CARGO_BIN_EXE_knn-ucb"))
        .args(["mnist", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().last().unwrap().starts_with("120,0,"));
}
