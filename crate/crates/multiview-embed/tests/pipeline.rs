//! Command-line pipeline tests against the built binary.

use std::path::Path;
use std::process::{Command, Output};

fn mvembed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvembed"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_arg(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn synth_train_eval_pipeline_completes() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    let run = root.path().join("run");

    let out = mvembed(&[
        "synth",
        "--out",
        &path_arg(&data),
        "--nodes",
        "200",
        "--communities",
        "4",
        "--seed",
        "9",
        "--labeled",
        "20",
        "--labeled-pairs",
        "40",
    ]);
    assert!(out.status.success(), "synth failed: {}", String::from_utf8_lossy(&out.stderr));
    for name in [
        "view0.txt",
        "view1.txt",
        "labels.txt",
        "heldout_pairs.txt",
        "attn_labels.txt",
        "attn_pairs.txt",
        "eval_pairs.txt",
    ] {
        assert!(data.join(name).exists(), "missing {name}");
    }

    let view0 = format!("sbm={}", data.join("view0.txt").display());
    let view1 = format!("noise={}", data.join("view1.txt").display());
    let out = mvembed(&[
        "train",
        "--view",
        &view0,
        "--view",
        &view1,
        "--labels",
        &path_arg(&data.join("attn_labels.txt")),
        "--dim",
        "16",
        "--samples",
        "100000",
        "--iterations",
        "2",
        "--seed",
        "3",
        "--out",
        &path_arg(&run),
    ]);
    assert!(out.status.success(), "train failed: {}", String::from_utf8_lossy(&out.stderr));
    for name in ["vocab.txt", "robust.emb", "view0.emb", "view1.emb", "weights.txt"] {
        assert!(run.join(name).exists(), "missing {name}");
    }

    let out = mvembed(&[
        "eval-classify",
        "--embeddings",
        &path_arg(&run.join("robust.emb")),
        "--labels",
        &path_arg(&data.join("labels.txt")),
        "--exclude",
        &path_arg(&data.join("attn_labels.txt")),
        "--train-frac",
        "0.1",
        "--seed",
        "2",
        "--buckets",
        "3",
        "--view",
        &view0,
        "--view",
        &view1,
    ]);
    assert!(out.status.success(), "eval-classify failed: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("macro_f1="), "no metrics in: {stdout}");
    assert!(stdout.contains("micro_f1="));
    assert!(stdout.contains("bucket0_micro_f1="), "no bucket metrics in: {stdout}");
    assert!(stdout.contains("bucket2_micro_f1="));

    let out = mvembed(&[
        "eval-link",
        "--embeddings",
        &path_arg(&run.join("robust.emb")),
        "--pairs",
        &path_arg(&data.join("eval_pairs.txt")),
        "--view",
        &view0,
        "--view",
        &view1,
        "--seed",
        "2",
    ]);
    assert!(out.status.success(), "eval-link failed: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("auc="), "no auc in: {stdout}");
}

#[test]
fn dump_commands_write_only_their_tables() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    assert!(mvembed(&[
        "synth",
        "--out",
        &path_arg(&data),
        "--nodes",
        "60",
        "--communities",
        "3",
        "--seed",
        "2",
    ])
    .status
    .success());

    let view0 = format!("a={}", data.join("view0.txt").display());
    let view1 = format!("b={}", data.join("view1.txt").display());
    let base = [
        "--view",
        view0.as_str(),
        "--view",
        view1.as_str(),
        "--dim",
        "8",
        "--samples",
        "5000",
        "--iterations",
        "1",
        "--seed",
        "4",
    ];

    let weights_dir = root.path().join("weights-only");
    let weights_out = path_arg(&weights_dir);
    let mut args = vec!["dump-weights"];
    args.extend_from_slice(&base);
    args.extend_from_slice(&["--out", &weights_out]);
    let out = mvembed(&args);
    assert!(out.status.success());
    assert!(weights_dir.join("weights.txt").exists());
    assert!(!weights_dir.join("robust.emb").exists());

    let emb_dir = root.path().join("embeddings-only");
    let emb_out = path_arg(&emb_dir);
    let mut args = vec!["dump-embeddings"];
    args.extend_from_slice(&base);
    args.extend_from_slice(&["--out", &emb_out]);
    let out = mvembed(&args);
    assert!(out.status.success());
    assert!(emb_dir.join("robust.emb").exists());
    assert!(emb_dir.join("view0.emb").exists());
    assert!(!emb_dir.join("weights.txt").exists());
}

#[test]
fn config_file_drives_training_and_flags_override() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    assert!(mvembed(&[
        "synth",
        "--out",
        &path_arg(&data),
        "--nodes",
        "60",
        "--communities",
        "3",
        "--seed",
        "8",
    ])
    .status
    .success());

    let cfg_path = root.path().join("train.cfg");
    let out_dir = root.path().join("run");
    std::fs::write(
        &cfg_path,
        format!(
            "dim=8\nsamples=5000\niterations=1\nseed=5\nno_attention=true\n\
             view=a={}\nview=b={}\nout={}\n",
            data.join("view0.txt").display(),
            data.join("view1.txt").display(),
            out_dir.display(),
        ),
    )
    .unwrap();

    let out = mvembed(&["train", "--config", &path_arg(&cfg_path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let header = std::fs::read_to_string(out_dir.join("robust.emb")).unwrap();
    assert!(header.starts_with("60 8\n"), "unexpected header: {}", &header[..12]);

    // --dim overrides the config file value.
    let out = mvembed(&["train", "--config", &path_arg(&cfg_path), "--dim", "4"]);
    assert!(out.status.success());
    let header = std::fs::read_to_string(out_dir.join("robust.emb")).unwrap();
    assert!(header.starts_with("60 4\n"));
}

#[test]
fn usage_and_runtime_errors_have_distinct_exit_codes() {
    // Missing required argument: usage error.
    let out = mvembed(&["eval-link"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    // No views given to train: usage error.
    let out = mvembed(&["train", "--out", "/tmp/nowhere-mvembed"]);
    assert_eq!(out.status.code(), Some(1));

    // Nonexistent view file: runtime failure.
    let out = mvembed(&[
        "train",
        "--view",
        "x=/definitely/not/a/file.txt",
        "--out",
        "/tmp/nowhere-mvembed",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    // Invalid configuration value: usage error.
    let out = mvembed(&[
        "train",
        "--view",
        "x=/definitely/not/a/file.txt",
        "--dim",
        "0",
        "--out",
        "/tmp/nowhere-mvembed",
    ]);
    assert_eq!(out.status.code(), Some(1));
}
