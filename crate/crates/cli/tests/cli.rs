use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use arche_core::eval::{psnr, read_ppm_file, write_ppm_file, Image};
use arche_core::model::{init_weights, Checkpoint, ModelConfig};
use arche_core::training::{synthetic_corpus, synthetic_image};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn arche(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arche")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

fn write_checkpoint(dir: &Path, name: &str, lambda: f64, seed: u64) -> PathBuf {
    let cfg = ModelConfig { lambda, ..ModelConfig::desk() };
    let path = dir.join(name);
    Checkpoint { weights: init_weights(&cfg, seed).unwrap(), optimizer: None }.save(&path).unwrap();
    path
}

fn write_corpus(dir: &Path) -> PathBuf {
    let corpus = dir.join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    for (i, img) in synthetic_corpus(3, 32, 7).iter().enumerate() {
        write_ppm_file(&corpus.join(format!("img{i}.ppm")), img).unwrap();
    }
    corpus
}

#[test]
fn encode_decode_round_trip_matches_eval() {
    let dir = TempDir::new().unwrap();
    let ckpt = write_checkpoint(dir.path(), "m.arcw", 0.01, 1);
    let corpus = write_corpus(dir.path());
    let img_path = corpus.join("img1.ppm");
    let bits = dir.path().join("img1.arc");
    let rec = dir.path().join("rec.ppm");

    let enc = arche(&["encode", "--weights", s(&ckpt), "--in", s(&img_path), "--out", s(&bits)]);
    assert!(enc.status.success(), "{}", String::from_utf8_lossy(&enc.stderr));
    let bytes = std::fs::metadata(&bits).unwrap().len();
    let bpp: f64 = stdout(&enc).parse().unwrap();
    assert!((bpp - bytes as f64 * 8.0 / (32.0 * 32.0)).abs() <= 5e-7);

    let dec = arche(&["decode", "--weights", s(&ckpt), "--in", s(&bits), "--out", s(&rec)]);
    assert!(dec.status.success(), "{}", String::from_utf8_lossy(&dec.stderr));
    let original = read_ppm_file(&img_path).unwrap();
    let decoded = read_ppm_file(&rec).unwrap();
    let round_trip = psnr(&original, &decoded).unwrap().db();

    let csv = dir.path().join("eval.csv");
    let ev = arche(&["eval", "--weights", s(&ckpt), "--corpus", s(&corpus), "--out", s(&csv)]);
    assert!(ev.status.success(), "{}", String::from_utf8_lossy(&ev.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let row = text.lines().find(|l| l.starts_with("img1.ppm,")).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[2], format!("{round_trip:.6}"));
    assert_eq!(fields[1], format!("{bpp:.6}"));
}

#[test]
fn odd_extents_survive_padding() {
    let dir = TempDir::new().unwrap();
    let ckpt = write_checkpoint(dir.path(), "m.arcw", 0.01, 2);
    let img = synthetic_image(21, 35, &mut ChaCha8Rng::seed_from_u64(3));
    let input = dir.path().join("odd.ppm");
    write_ppm_file(&input, &img).unwrap();
    let (bits, rec) = (dir.path().join("odd.arc"), dir.path().join("odd_rec.ppm"));
    for variant in ["raster", "none"] {
        let enc = arche(&["encode", "--weights", s(&ckpt), "--in", s(&input), "--out", s(&bits), "--variant", variant]);
        assert!(enc.status.success(), "{}", String::from_utf8_lossy(&enc.stderr));
        let dec = arche(&["decode", "--weights", s(&ckpt), "--in", s(&bits), "--out", s(&rec)]);
        assert!(dec.status.success(), "{}", String::from_utf8_lossy(&dec.stderr));
        let out: Image = read_ppm_file(&rec).unwrap();
        assert_eq!((out.width, out.height), (35, 21));
    }
}

#[test]
fn eval_is_byte_identical_across_runs_and_threads() {
    let dir = TempDir::new().unwrap();
    let ckpt = write_checkpoint(dir.path(), "m.arcw", 0.01, 3);
    let corpus = write_corpus(dir.path());
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "1", "3"].iter().enumerate() {
        let csv = dir.path().join(format!("e{i}.csv"));
        let o = arche(&["eval", "--weights", s(&ckpt), "--corpus", s(&corpus), "--out", s(&csv), "--threads", threads]);
        assert!(o.status.success());
        outputs.push(std::fs::read(&csv).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "file,bpp,psnr_db,msssim");
    assert_eq!(lines.len(), 1 + 3 + 1);
    assert!(lines[4].starts_with("mean,"));
}

#[test]
fn bdrate_of_a_curve_against_itself_is_zero() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("curve.csv");
    std::fs::write(
        &csv,
        "lambda,bpp,psnr_db,msssim\n0.001,0.1,26.0,0.80\n0.003,0.2,28.5,0.86\n0.01,0.4,31.0,0.91\n0.03,0.8,33.8,0.95\n",
    )
    .unwrap();
    for axis in ["psnr", "msssim"] {
        let o = arche(&["bdrate", "--anchor", s(&csv), "--test", s(&csv), "--axis", axis]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(stdout(&o), "0.00%");
    }
}

#[test]
fn rdcurve_emits_one_point_per_checkpoint() {
    let dir = TempDir::new().unwrap();
    let a = write_checkpoint(dir.path(), "a.arcw", 0.1, 4);
    let b = write_checkpoint(dir.path(), "b.arcw", 0.001, 5);
    let corpus = write_corpus(dir.path());
    let csv = dir.path().join("rd.csv");
    let list = format!("{},{}", s(&a), s(&b));
    let o = arche(&["rdcurve", "--weights", &list, "--corpus", s(&corpus), "--out", s(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0.001,"));
    assert!(lines[2].starts_with("0.1,"));
}

#[test]
fn train_writes_checkpoint_and_trace() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("train.toml");
    std::fs::write(&cfg, "lambda = 0.01\nsteps = 3\ncrop_size = 32\nsynthetic_images = 2\nsynthetic_size = 48\n").unwrap();
    let out = dir.path().join("run");
    let o = arche(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(Checkpoint::load(&out.join("final.arcw")).unwrap().optimizer.is_some());
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 3);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let ckpt = write_checkpoint(dir.path(), "m.arcw", 0.01, 6);
    let missing = dir.path().join("missing.ppm");
    let out = dir.path().join("x");
    let garbage = dir.path().join("garbage.arc");
    std::fs::write(&garbage, b"not a bitstream").unwrap();

    assert_eq!(arche(&["encode", "--bogus"]).status.code(), Some(2));
    assert_eq!(arche(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(arche(&["encode", "--weights", s(&ckpt), "--in", s(&missing), "--out", s(&out)]).status.code(), Some(3));
    assert_eq!(arche(&["decode", "--weights", s(&ckpt), "--in", s(&garbage), "--out", s(&out)]).status.code(), Some(3));
    assert_eq!(arche(&["decode", "--weights", s(&garbage), "--in", s(&garbage), "--out", s(&out)]).status.code(), Some(3));
    let corpus = write_corpus(dir.path());
    let img = corpus.join("img0.ppm");
    assert_eq!(
        arche(&["encode", "--weights", s(&ckpt), "--in", s(&img), "--out", s(&out), "--variant", "zigzag"]).status.code(),
        Some(2)
    );
    assert_eq!(
        arche(&["encode", "--weights", s(&ckpt), "--in", s(&img), "--out", s(&out), "--variant", "checkerboard"])
            .status
            .code(),
        Some(3)
    );
    let bad_cfg = dir.path().join("bad.toml");
    std::fs::write(&bad_cfg, "lambda = -1\nsteps = 1\n").unwrap();
    assert_eq!(arche(&["train", "--config", s(&bad_cfg), "--out", s(&out)]).status.code(), Some(3));
    assert_eq!(arche(&["--help"]).status.code(), Some(0));
}
