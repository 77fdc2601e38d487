//! End-to-end tests of the `trug` binary: exit codes, checkpoint
//! semantics, run determinism, and statistical correctness of sampling.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use trug_core::checkpoint;
use trug_core::data;
use trug_core::mat::Mat;
use trug_core::rbm::{stream_rng, RbmModel};
use trug_core::truncnorm::TruncationInterval;
use trug_core::trug::TrugParams;

fn trug_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trug"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = trug_bin().args(args).output().expect("spawn trug");
    assert!(
        out.status.success(),
        "command {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Write a rank-3 unsigned-byte IDX image file.
fn write_idx(path: &Path, images: &[Vec<f64>], height: usize, width: usize) {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
    bytes.extend_from_slice(&(images.len() as u32).to_be_bytes());
    bytes.extend_from_slice(&(height as u32).to_be_bytes());
    bytes.extend_from_slice(&(width as u32).to_be_bytes());
    for image in images {
        assert_eq!(image.len(), height * width);
        bytes.extend(image.iter().map(|&v| if v > 0.5 { 255u8 } else { 0u8 }));
    }
    std::fs::write(path, bytes).unwrap();
}

/// Synthetic 2x3 binary images with correlated, biased pixels so a tiny
/// model has structure to learn.
fn tiny_images(count: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::Rng;
    let mut rng = stream_rng(seed, 9000);
    (0..count)
        .map(|_| {
            let on = rng.random_bool(0.7);
            (0..6)
                .map(|j| {
                    let p = if on { 0.85 } else { 0.15 };
                    let p = if j % 2 == 0 { p } else { 1.0 - p };
                    f64::from(rng.random_bool(p))
                })
                .collect()
        })
        .collect()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn rbm_config(dir: &Path, data_path: &Path, seed: u64, epochs: usize, extra: &str) -> PathBuf {
    write_config(
        dir,
        &format!(
            r#"
model = "rbm"
seed = {seed}
epochs = {epochs}
output_dir = "{out}"

[dataset]
kind = "idx"
path = "{data}"

[network]
hidden = 4
learn-lower = true
learn-upper = true

[training]
batch-size = 10
{extra}
"#,
            out = dir.join("run").display(),
            data = data_path.display(),
        ),
    )
}

fn default_trug(units: usize) -> TrugParams {
    let iv = TruncationInterval::new(0.0, 1.0).unwrap();
    TrugParams::shared(iv, units).with_trainable(true, true)
}

/// Zero-coupling model whose visible marginal is exactly uniform.
fn uniform_rbm(n: usize, m: usize) -> RbmModel {
    RbmModel {
        w: Mat::zeros(n, m),
        b: vec![0.0; n],
        c: vec![0.0; m],
        d: vec![1.0; m],
        trug: default_trug(m).with_trainable(false, false),
    }
}

#[test]
fn zero_epochs_checkpoint_equals_init() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = dir.path().join("images.idx");
    write_idx(&data_path, &tiny_images(40, 1), 2, 3);
    let config = rbm_config(dir.path(), &data_path, 7, 0, "");
    run_ok(&["train", "--config", config.to_str().unwrap()]);

    let saved = checkpoint::load_rbm(&dir.path().join("run/checkpoint.bin")).unwrap();
    let mut rng = stream_rng(7, 0);
    let expected = RbmModel::init(6, 4, default_trug(4), &mut rng).unwrap();
    assert_eq!(saved, expected, "zero-epoch checkpoint must be the untouched init");
}

#[test]
fn identical_runs_give_bit_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = dir.path().join("images.idx");
    write_idx(&data_path, &tiny_images(40, 2), 2, 3);
    let config = rbm_config(dir.path(), &data_path, 11, 3, "");

    let mut blobs = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        run_ok(&[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--output-dir",
            out_dir.to_str().unwrap(),
        ]);
        blobs.push(std::fs::read(out_dir.join("checkpoint.bin")).unwrap());
    }
    assert_eq!(blobs[0], blobs[1], "same config + seed must reproduce the checkpoint bit-for-bit");
}

#[test]
fn training_improves_exact_log_likelihood() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = dir.path().join("images.idx");
    let images = tiny_images(60, 3);
    write_idx(&data_path, &images, 2, 3);
    // 60 examples / batch 10 * 35 epochs = 210 gradient steps.
    let config = rbm_config(dir.path(), &data_path, 5, 35, "");
    run_ok(&["train", "--config", config.to_str().unwrap()]);

    let trained = checkpoint::load_rbm(&dir.path().join("run/checkpoint.bin")).unwrap();
    let mut rng = stream_rng(5, 0);
    let init = RbmModel::init(6, 4, default_trug(4), &mut rng).unwrap();

    let mean_ll = |model: &RbmModel| -> f64 {
        images.iter().map(|x| model.exact_log_prob(x).unwrap()).sum::<f64>() / images.len() as f64
    };
    let before = mean_ll(&init);
    let after = mean_ll(&trained);
    assert!(
        after > before + 0.05,
        "training should raise the exact train log-likelihood: {before:.4} -> {after:.4}"
    );
}

#[test]
fn eval_of_uniform_model_recovers_log_half_per_pixel() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = dir.path().join("images.idx");
    let images: Vec<Vec<f64>> = tiny_images(12, 4).iter().map(|x| x[..3].to_vec()).collect();
    write_idx(&data_path, &images, 1, 3);
    let ckpt = dir.path().join("uniform.bin");
    checkpoint::save_rbm(&ckpt, &uniform_rbm(3, 2)).unwrap();

    let config = write_config(
        dir.path(),
        &format!(
            r#"
model = "rbm"
seed = 13
output_dir = "{out}"

[dataset]
kind = "idx"
path = "{data}"
test-count = 8

[network]
hidden = 2

[ais]
n-temps = 200
n-chains = 40
"#,
            out = dir.path().join("run").display(),
            data = data_path.display(),
        ),
    );
    let out = run_ok(&[
        "eval",
        "--config",
        config.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let log_prob = report["test_log_prob"].as_f64().unwrap();
    // With zero couplings every tempered intermediate equals the base
    // model, so the estimate is exact: 3 pixels * ln(1/2).
    let expected = -3.0 * std::f64::consts::LN_2;
    assert!(
        (log_prob - expected).abs() < 1e-6,
        "uniform model test log-prob {log_prob} != {expected}"
    );
    assert!(report["ais_log_z"].as_f64().unwrap().is_finite());
}

#[test]
fn sampling_is_deterministic_and_supports_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("model.bin");
    let mut rng = stream_rng(21, 0);
    let model = RbmModel::init(4, 3, default_trug(3).with_trainable(false, false), &mut rng).unwrap();
    checkpoint::save_rbm(&ckpt, &model).unwrap();
    let config = write_config(
        dir.path(),
        &format!(
            r#"
model = "rbm"
seed = 21
output_dir = "{out}"

[dataset]
kind = "idx"
path = "unused.idx"

[network]
hidden = 3
"#,
            out = dir.path().join("run").display(),
        ),
    );

    let mut blobs = Vec::new();
    for name in ["s1.bin", "s2.bin"] {
        let output = dir.path().join(name);
        run_ok(&[
            "sample",
            "--config",
            config.to_str().unwrap(),
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--output",
            output.to_str().unwrap(),
            "--count",
            "8",
            "--steps",
            "20",
        ]);
        blobs.push((
            std::fs::read(&output).unwrap(),
            std::fs::read(output.with_extension("txt")).unwrap(),
        ));
    }
    assert_eq!(blobs[0], blobs[1], "sampling with a fixed seed must be byte-identical");

    // count = 0 still writes a valid, empty container.
    let empty = dir.path().join("empty.bin");
    run_ok(&[
        "sample",
        "--config",
        config.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--output",
        empty.to_str().unwrap(),
        "--count",
        "0",
    ]);
    let (seqs, _) = data::read_sequences(&empty).unwrap();
    assert!(seqs.is_empty());
}

#[test]
fn sample_histogram_matches_exact_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("model.bin");
    let mut rng = stream_rng(33, 0);
    let model = RbmModel::init(3, 2, default_trug(2).with_trainable(false, false), &mut rng).unwrap();
    checkpoint::save_rbm(&ckpt, &model).unwrap();
    let config = write_config(
        dir.path(),
        &format!(
            r#"
model = "rbm"
seed = 33
output_dir = "{out}"

[dataset]
kind = "idx"
path = "unused.idx"

[network]
hidden = 2
"#,
            out = dir.path().join("run").display(),
        ),
    );
    let output = dir.path().join("draws.bin");
    let n_draws = 4000usize;
    run_ok(&[
        "sample",
        "--config",
        config.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
        "--count",
        &n_draws.to_string(),
        "--steps",
        "50",
    ]);
    let (seqs, _) = data::read_sequences(&output).unwrap();
    assert_eq!(seqs.len(), n_draws);

    let mut counts = [0usize; 8];
    for seq in &seqs {
        let x = &seq[0];
        let idx: usize = x.iter().enumerate().map(|(i, &v)| (v as usize) << i).sum();
        counts[idx] += 1;
    }
    let mut chi2 = 0.0;
    for (state, &count) in counts.iter().enumerate() {
        let x: Vec<f64> = (0..3).map(|i| f64::from((state >> i) & 1 == 1)).collect();
        let expected = model.exact_log_prob(&x).unwrap().exp() * n_draws as f64;
        chi2 += (count as f64 - expected).powi(2) / expected;
    }
    // 0.1% critical value of chi-squared with 7 degrees of freedom.
    assert!(chi2 < 24.32, "sample histogram chi2 = {chi2:.2} exceeds 24.32");
}

#[test]
fn invalid_config_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    // Model/dataset mismatch plus a zero batch size: both are config errors.
    let config = write_config(
        dir.path(),
        &format!(
            r#"
model = "rbm"
seed = 1
output_dir = "{out}"

[dataset]
kind = "csv"
path = "whatever.csv"

[training]
batch-size = 0
"#,
            out = dir.path().join("run").display(),
        ),
    );
    let out = trug_bin()
        .args(["train", "--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("configuration error"), "stderr: {stderr}");

    // Sampling the conditional regression model is also a usage error.
    let out = trug_bin()
        .args(["sample", "--config", "/nonexistent.toml", "--checkpoint", "x", "--output", "y"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn data_dir_env_var_resolves_relative_paths() {
    let data_dir = tempfile::tempdir().unwrap();
    let run_dir = tempfile::tempdir().unwrap();
    write_idx(&data_dir.path().join("images.idx"), &tiny_images(20, 6), 2, 3);
    let config = rbm_config(run_dir.path(), Path::new("images.idx"), 3, 1, "");
    let out = trug_bin()
        .args(["train", "--config", config.to_str().unwrap()])
        .env("TRUG_DATA_DIR", data_dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(run_dir.path().join("run/checkpoint.bin").exists());
}

#[test]
fn trbm_and_tggm_train_and_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();

    // Temporal model on a tiny synthetic bouncing-ball set.
    let trbm_config = write_config(
        dir.path(),
        &format!(
            r#"
model = "trbm"
seed = 2
epochs = 1
output_dir = "{out}"

[dataset]
kind = "bouncing-balls"
n-sequences = 6
n-balls = 1
frame-size = 6
n-frames = 5
test-count = 2

[network]
hidden = 4

[training]
batch-size = 2
"#,
            out = dir.path().join("trbm").display(),
        ),
    );
    run_ok(&["train", "--config", trbm_config.to_str().unwrap()]);
    let ckpt = dir.path().join("trbm/checkpoint.bin");
    let out = run_ok(&[
        "eval",
        "--config",
        trbm_config.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["prediction_error"].as_f64().unwrap().is_finite());

    // Generated sequences have the requested shape.
    let samples = dir.path().join("gen.bin");
    run_ok(&[
        "sample",
        "--config",
        trbm_config.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--output",
        samples.to_str().unwrap(),
        "--count",
        "2",
        "--frames",
        "3",
        "--steps",
        "5",
    ]);
    let (seqs, (w, h)) = data::read_sequences(&samples).unwrap();
    assert_eq!((seqs.len(), seqs[0].len(), w, h), (2, 3, 6, 6));

    // Regression model on a small planted linear table.
    let csv_path = dir.path().join("table.csv");
    let mut csv = String::new();
    let mut rng = stream_rng(40, 0);
    for i in 0..80 {
        use rand::Rng;
        let x1 = f64::from(i % 9) / 4.0 - 1.0;
        let x2: f64 = rng.random_range(-1.0..1.0);
        let y = 2.0 * x1 - x2 + 0.05 * rng.random_range(-1.0..1.0);
        csv.push_str(&format!("{x1},{x2},{y}\n"));
    }
    std::fs::write(&csv_path, csv).unwrap();
    let tggm_config = write_config(
        dir.path(),
        &format!(
            r#"
model = "tggm"
seed = 4
epochs = 5
output_dir = "{out}"

[dataset]
kind = "csv"
path = "{csv}"
target-columns = [2]

[network]
hidden = 4

[training]
batch-size = 16
vb-cycles = 5
"#,
            out = dir.path().join("tggm").display(),
            csv = csv_path.display(),
        ),
    );
    run_ok(&["train", "--config", tggm_config.to_str().unwrap()]);
    let ckpt = dir.path().join("tggm/checkpoint.bin");
    let out = run_ok(&[
        "eval",
        "--config",
        tggm_config.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["rmse"].as_f64().unwrap().is_finite());

    // The regression model has no unconditional sampler: usage error.
    let out = trug_bin()
        .args([
            "sample",
            "--config",
            tggm_config.to_str().unwrap(),
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--output",
            dir.path().join("nope.bin").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Metrics stream is well-formed JSONL.
    let metrics = std::fs::read_to_string(dir.path().join("tggm/metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 5);
    for line in metrics.lines() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(record["step"].as_u64().is_some());
        assert!(record["metrics"]["train_rmse"].is_number() || record["metrics"]["train_rmse"].is_null());
    }
}
