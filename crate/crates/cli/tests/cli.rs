use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qahm::eval::read_pgm;
use qahm::{checkpoint_load, Embedding, HardwareGraph, IsingModel};

const BAS: &str = r#"seed = 4

[model]
hidden = [4, 2]

[train]
epochs_phase1 = 6
epochs_phase2 = 4
lr_start = 0.03
lr_end = 0.01
sleep_samples = 50
batch_size = 2
checkpoint_every = 5

[data]
kind = "bars-and-stripes"
rows = 2
cols = 2

[output]
samples = 12
grid_cols = 4
"#;

fn qahm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qahm"))
        .args(args)
        .env_remove("QAHM_OUT")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn trained(dir: &Path) -> PathBuf {
    let cfg = write_config(dir, "bas.conf", BAS);
    let out = dir.join("run");
    let o = qahm(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn train_writes_the_output_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let out = trained(tmp.path());
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 11);
    assert!(metrics.starts_with("epoch,lr,"));
    for name in ["epoch_000005.qahm", "epoch_000010.qahm", "final.qahm"] {
        assert!(out.join("checkpoints").join(name).is_file(), "{name}");
    }
    assert_eq!(checkpoint_load(out.join("checkpoints/final.qahm")).unwrap().epoch, 10);
    let img = read_pgm(out.join("samples/samples.pgm")).unwrap();
    assert_eq!((img.width, img.height), (4 * 2 + 3, 3 * 2 + 2));
    assert!(out.join("reports/summary.json").is_file());
    assert_eq!(
        fs::read_to_string(out.join("reports/neighbors.csv"))
            .unwrap()
            .lines()
            .count(),
        13
    );
    assert!(!out.join("FAILED").exists());
}

#[test]
fn echoed_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let first = trained(tmp.path());
    let again = tmp.path().join("again");
    let o = qahm(&["train", "--config", s(&first.join("config.toml")), "--out", s(&again)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "samples/samples.pgm",
        "reports/neighbors.csv",
        "reports/summary.json",
        "config.toml",
    ] {
        assert_eq!(
            fs::read(first.join(f)).unwrap(),
            fs::read(again.join(f)).unwrap(),
            "{f}"
        );
    }
    // Checkpoints carry wall-clock timings, which are the only thing allowed to differ.
    let load = |dir: &Path| {
        let mut s = checkpoint_load(dir.join("checkpoints/final.qahm")).unwrap();
        s.metrics.iter_mut().for_each(|m| m.seconds = 0.0);
        s
    };
    assert_eq!(load(&first), load(&again));
}

#[test]
fn missing_dataset_leaves_no_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "digits.conf",
        "[model]\nhidden = [8]\n[data]\nkind = \"usps16\"\npath = \"nope.txt\"\n",
    );
    let out = tmp.path().join("run");
    let o = qahm(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not exist"));
    assert!(!out.exists());
}

#[test]
fn unknown_config_keys_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.conf", &BAS.replace("[train]", "[train]\nepochs = 3"));
    let o = qahm(&["train", "--config", s(&cfg), "--out", s(&tmp.path().join("run"))]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("epochs"));
}

#[test]
fn failures_after_start_are_flagged() {
    let tmp = tempfile::tempdir().unwrap();
    let text = BAS.replace("[train]", "[prior]\nbackend = \"exact\"\ngamma = 0.5\n\n[train]");
    let cfg = write_config(tmp.path(), "q.conf", &text);
    let out = tmp.path().join("run");
    let o = qahm(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert!(!o.status.success());
    assert!(fs::read_to_string(out.join("FAILED")).unwrap().contains("transverse"));
}

#[test]
fn backend_and_seed_flags_override_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bas.conf", BAS);
    let out = tmp.path().join("run");
    let o = qahm(&[
        "train",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--backend",
        "mcmc",
        "--seed",
        "9",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let echo = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(echo.contains("backend = \"mcmc\"") && echo.starts_with("seed = 9"));
    assert!(!checkpoint_load(out.join("checkpoints/final.qahm"))
        .unwrap()
        .sampler_chains
        .is_empty());
}

#[test]
fn output_root_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_qahm"))
        .args(["encode-gauss", "0", "1", "1,1"])
        .env("QAHM_OUT", tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(tmp.path().join("encode-gauss/reports/gaussian_encoding.txt").is_file());
}

#[test]
fn sample_grid_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let run = trained(tmp.path());
    let ckpt = run.join("checkpoints/final.qahm");
    let draw = |name: &str, n: &str| {
        let out = tmp.path().join(name);
        let o = qahm(&[
            "sample",
            "--checkpoint",
            s(&ckpt),
            "-n",
            n,
            "--seed",
            "3",
            "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = draw("a", "36");
    let b = draw("b", "36");
    let bytes = fs::read(a.join("samples/samples.pgm")).unwrap();
    assert_eq!(bytes, fs::read(b.join("samples/samples.pgm")).unwrap());
    let img = read_pgm(a.join("samples/samples.pgm")).unwrap();
    assert_eq!((img.width, img.height), (6 * 2 + 5, 6 * 2 + 5));
    let empty = draw("empty", "0");
    assert!(!empty.join("samples/samples.pgm").exists());
    assert!(!empty.join("FAILED").exists());
}

#[test]
fn sample_rejects_corrupt_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let run = trained(tmp.path());
    let ckpt = run.join("checkpoints/final.qahm");
    let mut bytes = fs::read(&ckpt).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x55;
    let bad = tmp.path().join("bad.qahm");
    fs::write(&bad, bytes).unwrap();
    let o = qahm(&["sample", "--checkpoint", s(&bad), "--out", s(&tmp.path().join("x"))]);
    assert!(!o.status.success());
}

#[test]
fn eval_reports_kl_for_small_models() {
    let tmp = tempfile::tempdir().unwrap();
    let run = trained(tmp.path());
    let out = tmp.path().join("eval");
    let o = qahm(&[
        "eval",
        "--checkpoint",
        s(&run.join("checkpoints/final.qahm")),
        "--config",
        s(&run.join("config.toml")),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("reports/summary.json")).unwrap();
    assert!(summary.contains("\"exact_kl\":") && !summary.contains("\"exact_kl\":null"));
    assert!(!summary.contains("\"bound\":null"));
}

#[test]
fn encode_gauss_writes_coefficients() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qahm(&["encode-gauss", "0", "1", "1,1", "--out", s(tmp.path())]);
    assert!(o.status.success());
    let report = fs::read_to_string(tmp.path().join("reports/gaussian_encoding.txt")).unwrap();
    assert!(report.lines().any(|l| l == "J 0 1 0.5"));
    let model =
        IsingModel::from_text(&fs::read_to_string(tmp.path().join("reports/gaussian_model.txt")).unwrap()).unwrap();
    assert_eq!(model.coupling(0, 1), 1.0);
    let o = qahm(&[
        "encode-gauss",
        "-0.5",
        "2",
        "1,-2,0",
        "--out",
        s(&tmp.path().join("neg")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(qahm(&["encode-gauss", "0", "0", "1"]).status.code() != Some(0));
}

#[test]
fn verify_jensen_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qahm(&[
        "verify-jensen",
        "--trials",
        "100",
        "--max-n",
        "4",
        "--out",
        s(tmp.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(tmp.path().join("reports/jensen.csv")).unwrap();
    assert!(csv.lines().count() > 100);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",1")));
    assert!(!qahm(&["verify-jensen", "--gamma-max", "0"]).status.success());
}

#[test]
fn embed_writes_a_valid_embedding() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qahm(&["embed", "8", "--chimera", "2,2,4", "--out", s(tmp.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(tmp.path().join("reports/embedding.txt")).unwrap();
    let e = Embedding::from_text(&text, HardwareGraph::chimera(2, 2, 4).unwrap()).unwrap();
    assert_eq!(e.logical_count(), 8);
    let summary = fs::read_to_string(tmp.path().join("reports/embedding_summary.txt")).unwrap();
    assert!(summary.contains(&format!("qubits {}", e.physical_count())));
    assert!(!qahm(&["embed", "50", "--chimera", "1,1,2", "--restarts", "2"])
        .status
        .success());
}

#[test]
fn help_lists_subcommands() {
    let o = qahm(&["--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in ["train", "sample", "eval", "embed", "verify-jensen", "encode-gauss"] {
        assert!(text.contains(cmd), "{cmd}");
    }
    assert!(!qahm(&["frobnicate"]).status.success());
}
