use std::path::Path;
use std::process::{Command, Output};

use svdrnd::data_io::{read_dataset, synth_generate, write_dataset, write_labels, DatasetManifest, Dtype, SynthKind};
use svdrnd::degradations::svd_blur;
use svdrnd::effective_rank::select_k;
use svdrnd::evaluation::EvalReport;
use svdrnd::Shape;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svdrnd"))
        .args(args)
        .current_dir(dir)
        .env_remove("SVDRND_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().unwrap()
}

fn synth(dir: &Path, kind: &str, n: usize, seed: u64, role: &str, file: &str) {
    ok(dir, &["synth", "--kind", kind, "--n", &n.to_string(), "--seed", &seed.to_string(), "--shape", "3,8,8", "--role", role, "--out", file]);
}

fn experiment(dir: &Path) {
    synth(dir, "smooth_textures", 64, 1, "train", "train.rndt");
    synth(dir, "smooth_textures", 32, 2, "test_in", "test_in.rndt");
    synth(dir, "highfreq_noise", 32, 3, "test_ood", "ood.rndt");
}

const CONFIG: &str = "[data]\ntrain = \"train.toml\"\ntest_in = \"test_in.toml\"\ntest_ood = [\"ood.toml\"]\n\n[train]\n";

#[test]
fn synth_writes_container_manifest_and_stamp() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "blobs", 5, 4, "test_ood", "blobs.rndt");
    let data = read_dataset(&d.join("blobs.rndt")).unwrap();
    let (expected, _) = synth_generate(SynthKind::Blobs, 5, Shape::new(3, 8, 8), 4).unwrap();
    assert_eq!(data, expected);
    let manifest = DatasetManifest::read(&d.join("blobs.toml")).unwrap();
    assert_eq!(manifest.count, 5);
    assert!(manifest.mean_ler.unwrap() > 0.0);
    let stamp: toml::Value = toml::from_str(&std::fs::read_to_string(d.join("blobs.rndt.stamp.toml")).unwrap()).unwrap();
    let bytes = std::fs::read(d.join("blobs.rndt")).unwrap();
    use sha2::Digest;
    assert_eq!(stamp["output_sha256"].as_str().unwrap(), hex::encode(sha2::Sha256::digest(&bytes)));
    assert_eq!(stamp["seeds"].as_array().unwrap()[0].as_integer(), Some(4));
}

#[test]
fn select_k_report_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = synth_generate(SynthKind::SmoothTextures, 6, Shape::new(3, 8, 8), 9).unwrap();
    write_dataset(&dir.path().join("x.rndt"), &data, Dtype::F64).unwrap();
    let text = ok(dir.path(), &["select-k", "--in", "x.rndt", "--b", "2", "--out", "k.toml"]);
    let report: toml::Value = toml::from_str(&text).unwrap();
    let lib = select_k(&data, 2).unwrap();
    let chosen: Vec<usize> = report["chosen_k"].as_array().unwrap().iter().map(|v| v.as_integer().unwrap() as usize).collect();
    assert_eq!(chosen, lib.chosen_k);
    assert_eq!(report["train_ler"].as_float().unwrap(), lib.train_ler);
    assert_eq!(std::fs::read_to_string(dir.path().join("k.toml")).unwrap(), text);
}

#[test]
fn eval_perfect_separation_gives_ones() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("in.csv"), "sample_index,score\n0,0.1\n1,0.2\n2,0.3\n").unwrap();
    std::fs::write(d.join("ood.csv"), "sample_index,score\n0,0.7\n1,0.8\n2,0.9\n").unwrap();
    ok(d, &["eval", "--in-scores", "in.csv", "--ood-scores", "ood.csv", "--out", "r.txt"]);
    let text = std::fs::read_to_string(d.join("r.txt")).unwrap();
    let r = EvalReport::from_text(&text).unwrap();
    for m in [r.auroc, r.aupr_in, r.aupr_out, r.detection_accuracy, r.tnr_at_95tpr] {
        assert_eq!(m, 1.0);
    }
    ok(d, &["eval", "--in-scores", "in.csv", "--ood-scores", "ood.csv", "--out", "row.txt", "--table-row", "X"]);
    assert_eq!(
        std::fs::read_to_string(d.join("row.txt")).unwrap(),
        "X & 1.000 & 1.000 & 1.000 & 1.000 & 1.000 \\\\\n"
    );
}

#[test]
fn exit_codes_separate_bad_input_from_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &["score", "--model", "missing.ckpt", "--data", "x.rndt", "--out", "s.csv"]), 2);
    std::fs::write(d.join("bad.toml"), "data = 3\n").unwrap();
    assert_eq!(code(d, &["train", "--config", "bad.toml", "--out", "m.ckpt"]), 2);
    std::fs::write(d.join("in.csv"), "sample_index,score\n0,0.1\n").unwrap();
    std::fs::write(d.join("nan.csv"), "sample_index,score\n0,NaN\n").unwrap();
    assert_eq!(code(d, &["eval", "--in-scores", "in.csv", "--ood-scores", "nan.csv", "--out", "r.txt"]), 3);
    let out = run(d, &["eval", "--in-scores", "in.csv", "--ood-scores", "nan.csv", "--out", "r.txt"]);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: ") && err.trim_end().lines().count() == 1, "{err}");
    assert!(!d.join("r.txt").exists());
}

#[test]
fn blur_applies_each_method() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (data, _) = synth_generate(SynthKind::SmoothTextures, 3, Shape::new(3, 8, 8), 5).unwrap();
    write_dataset(&d.join("x.rndt"), &data, Dtype::F64).unwrap();
    assert_eq!(code(d, &["blur", "--method", "svd", "--param", "3", "--in", "x.rndt", "--out", "y.rndt"]), 2);
    ok(d, &["blur", "--method", "svd", "--param", "3", "--off-grid", "--in", "x.rndt", "--out", "y.rndt", "--dtype", "f64"]);
    let y = read_dataset(&d.join("y.rndt")).unwrap();
    for (a, b) in data.images.iter().zip(&y.images) {
        assert_eq!(&svd_blur(a, 3).unwrap(), b);
    }
    ok(d, &["blur", "--method", "gauss", "--param", "3,5", "--in", "x.rndt", "--out", "g.rndt"]);
    assert_eq!(read_dataset(&d.join("g.rndt")).unwrap().len(), 3);
    ok(d, &["blur", "--method", "geom", "--param", "rotate", "--in", "x.rndt", "--out", "r.rndt"]);
    assert_eq!(read_dataset(&d.join("r.rndt")).unwrap().len(), 9);
    ok(d, &["blur", "--method", "dct", "--param", "12", "--in", "x.rndt", "--out", "c.rndt"]);
    assert_eq!(code(d, &["blur", "--method", "geom", "--param", "shear_h", "--in", "x.rndt", "--out", "s.rndt"]), 2);
}

#[test]
fn output_directory_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let elsewhere = d.join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_svdrnd"))
        .args(["synth", "--kind", "checker", "--n", "2", "--shape", "1,8,8", "--out", "c.rndt"])
        .current_dir(d)
        .env("SVDRND_OUTPUT_DIR", &elsewhere)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(elsewhere.join("c.rndt").is_file() && elsewhere.join("c.toml").is_file());
    assert!(!d.join("c.rndt").exists());
}

#[test]
fn train_score_probe_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    experiment(d);
    std::fs::write(d.join("exp.toml"), format!("{CONFIG}b_train = 0\nepochs = 2\nbatch_size = 16\n")).unwrap();
    ok(d, &["train", "--config", "exp.toml", "--out", "m.ckpt", "--log", "log.csv"]);
    let log = std::fs::read_to_string(d.join("log.csv")).unwrap();
    assert!(log.starts_with("step,dataset_index,loss,lr\n"));
    assert_eq!(log.lines().count(), 1 + 2 * 4);
    assert!(d.join("m.ckpt.stamp.toml").is_file());

    ok(d, &["score", "--model", "m.ckpt", "--data", "test_in.toml", "--scorer", "typicality", "--out", "t.csv"]);
    let scores = svdrnd::detection::parse_scores(&std::fs::read_to_string(d.join("t.csv")).unwrap()).unwrap();
    assert_eq!(scores.len(), 32);
    assert!(scores.iter().all(|s| *s >= 0.0));

    let labels: Vec<u32> = (0..32).map(|i| i % 2).collect();
    write_labels(&d.join("labels.rndt"), &labels).unwrap();
    let probe: toml::Value = toml::from_str(&ok(d, &["probe", "--model", "m.ckpt", "--data", "test_in.toml", "--labels", "labels.rndt", "--epochs", "5"])).unwrap();
    let acc = probe["accuracy"].as_float().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    let table = ok(d, &["orthogonal-probe", "--model", "m.ckpt", "--data", "test_in.toml", "--seeds", "2", "--blur-k", "2"]);
    assert_eq!(table.lines().count(), 1 + 2 + 4);
    assert_eq!(code(d, &["orthogonal-probe", "--model", "m.ckpt", "--data", "test_in.toml", "--seeds", "2"]), 2);

    std::fs::write(d.join("sweep.toml"), format!("{CONFIG}b_train = 0\nepochs = 1\nbatch_size = 16\n")).unwrap();
    let report: toml::Value = toml::from_str(&ok(d, &["sweep-k", "--config", "sweep.toml", "--grid", "3,2", "--off-grid", "--out", "sweep.out"])).unwrap();
    let cands = report["candidates"].as_array().unwrap();
    assert_eq!(cands.len(), 2);
    assert_eq!(cands[0]["k"].as_integer(), Some(2));
    let best = cands
        .iter()
        .max_by(|a, b| a["score"].as_float().unwrap().total_cmp(&b["score"].as_float().unwrap()).then(b["k"].as_integer().cmp(&a["k"].as_integer())))
        .unwrap();
    assert_eq!(report["chosen_k"].as_integer(), best["k"].as_integer());
    assert!(d.join("sweep.out.stamp.toml").is_file());
    assert_eq!(code(d, &["sweep-k", "--config", "sweep.toml", "--grid", "3"]), 2);
}
