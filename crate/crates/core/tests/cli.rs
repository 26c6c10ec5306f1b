use std::path::Path;
use std::process::{Command, Output};

fn nextloc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nextloc"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn small_synth(dir: &Path) {
    std::fs::write(
        dir.join("small.toml"),
        "[synth]\nn_users = 12\nn_locations = 40\nrecords_per_user = 60\n\n[train]\nd = 6\nn_hidden = 8\nhead_hidden = 8\n",
    )
    .unwrap();
    ok(&nextloc(
        &[
            "synth",
            "--config",
            "small.toml",
            "--seed",
            "7",
            "--out",
            "d",
        ],
        dir,
    ));
}

fn dir_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn synth_train_eval_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    small_synth(root);
    let before = dir_snapshot(&root.join("d"));

    ok(&nextloc(
        &[
            "train",
            "--config",
            "small.toml",
            "--data",
            "d",
            "--threshold",
            "5",
            "--strategy",
            "I",
            "--epochs",
            "2",
            "--out",
            "t",
        ],
        root,
    ));
    for f in [
        "config.toml",
        "run.json",
        "train_log.jsonl",
        "checkpoint/manifest.json",
        "checkpoint/params.bin",
        "checkpoint/model.json",
    ] {
        assert!(root.join("t").join(f).exists(), "missing {f}");
    }
    assert_eq!(
        std::fs::read_to_string(root.join("t/train_log.jsonl"))
            .unwrap()
            .lines()
            .count(),
        2
    );
    let run: serde_json::Value =
        serde_json::from_slice(&std::fs::read(root.join("t/run.json")).unwrap()).unwrap();
    assert_eq!(run["seed"], 7);
    assert_eq!(run["provenance"]["train.anchor_threshold"], "flag");
    assert_eq!(run["provenance"]["train.d"], "file");
    assert_eq!(run["provenance"]["train.batch_size"], "default");
    assert!(run["git_describe"].is_string());

    for out in ["e1", "e2"] {
        ok(&nextloc(
            &[
                "eval",
                "--checkpoint",
                "t/checkpoint",
                "--data",
                "d",
                "--out",
                out,
                "--k",
                "1,5,10",
            ],
            root,
        ));
    }
    for f in ["metrics.csv", "category_recall.csv"] {
        let a = std::fs::read(root.join("e1").join(f)).unwrap();
        assert_eq!(
            a,
            std::fs::read(root.join("e2").join(f)).unwrap(),
            "{f} differs"
        );
    }
    assert_eq!(
        dir_snapshot(&root.join("d")),
        before,
        "dataset directory was modified"
    );
}

#[test]
fn archived_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    small_synth(root);
    ok(&nextloc(
        &[
            "train",
            "--config",
            "small.toml",
            "--data",
            "d",
            "--epochs",
            "2",
            "--lr",
            "0.01",
            "--out",
            "a",
        ],
        root,
    ));
    ok(&nextloc(
        &[
            "train",
            "--config",
            "a/config.toml",
            "--data",
            "d",
            "--out",
            "b",
        ],
        root,
    ));
    assert_eq!(
        std::fs::read(root.join("a/checkpoint/params.bin")).unwrap(),
        std::fs::read(root.join("b/checkpoint/params.bin")).unwrap()
    );
}

#[test]
fn stats_and_gain_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    small_synth(root);
    ok(&nextloc(
        &["stratify-stats", "--data", "d", "--out", "s"],
        root,
    ));
    let stats = std::fs::read_to_string(root.join("s/stratum_stats.csv")).unwrap();
    assert_eq!(stats.lines().count(), 7);
    ok(&nextloc(
        &[
            "analyze-prevloc",
            "--data",
            "d",
            "--out",
            "g",
            "--per-user",
            "--measure",
            "likelihood",
        ],
        root,
    ));
    assert!(std::fs::read_to_string(root.join("g/prevloc_gain.csv"))
        .unwrap()
        .starts_with("category,hour,"));
    let cfg = std::fs::read_to_string(root.join("g/config.toml")).unwrap();
    assert!(cfg.contains("measure = \"likelihood\""));
}

#[test]
fn sweep_writes_one_row_per_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    small_synth(root);
    ok(&nextloc(
        &[
            "sweep",
            "--config",
            "small.toml",
            "--data",
            "d",
            "--grid",
            "0,5,10,15,20,25",
            "--epochs",
            "1",
            "--out",
            "w",
        ],
        root,
    ));
    let csv = std::fs::read_to_string(root.join("w/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv
        .lines()
        .next()
        .unwrap()
        .starts_with("threshold,best_epoch,n_test,recall@1"));
}

#[test]
fn ablate_writes_four_variants() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    small_synth(root);
    ok(&nextloc(
        &[
            "ablate",
            "--config",
            "small.toml",
            "--data",
            "d",
            "--epochs",
            "1",
            "--out",
            "a",
        ],
        root,
    ));
    let csv = std::fs::read_to_string(root.join("a/ablation.csv")).unwrap();
    let variants: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(variants, ["full", "no_link1", "no_link2", "no_both"]);
}

#[test]
fn ingest_from_tsv() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let mut tsv = String::new();
    for user in ["a", "b"] {
        for t in 0..5u32 {
            for (i, v) in ["home", "shop", "work", "home", "park"].iter().enumerate() {
                let ts = chrono::NaiveDate::from_ymd_opt(2012, 4, 1 + 4 * t)
                    .and_then(|d| d.and_hms_opt(9 + i as u32, 0, 0))
                    .unwrap()
                    .format("%a %b %d %H:%M:%S +0000 %Y");
                tsv.push_str(&format!("{user}\t{v}\tcid\tFood\t0\t0\t540\t{ts}\n"));
            }
        }
    }
    std::fs::write(root.join("in.tsv"), tsv).unwrap();
    ok(&nextloc(
        &[
            "ingest",
            "--input",
            "in.tsv",
            "--gap-hours",
            "48",
            "--out",
            "d",
        ],
        root,
    ));
    for f in [
        "records.bin",
        "users.tsv",
        "locations.tsv",
        "categories.tsv",
        "splits.json",
        "ingest_stats.json",
    ] {
        assert!(root.join("d").join(f).exists(), "missing {f}");
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    assert_eq!(nextloc(&["frobnicate"], root).status.code(), Some(1));
    assert_eq!(
        nextloc(&["train", "--no-such-flag"], root).status.code(),
        Some(1)
    );
    assert_eq!(
        nextloc(&["train", "--strategy", "IV", "--data", "x"], root)
            .status
            .code(),
        Some(1)
    );
    assert_eq!(nextloc(&["train"], root).status.code(), Some(1));
    assert_eq!(nextloc(&["--help"], root).status.code(), Some(0));
    assert_eq!(
        nextloc(&["train", "--data", "missing", "--out", "o"], root)
            .status
            .code(),
        Some(2)
    );
    std::fs::write(root.join("bad.toml"), "[train]\nwarp = 9\n").unwrap();
    assert_eq!(
        nextloc(
            &["train", "--config", "bad.toml", "--data", "missing"],
            root
        )
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn divergence_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    small_synth(root);
    // Finite as f64 but overflows the f32 update, so the weights go non-finite.
    let o = nextloc(
        &[
            "train",
            "--config",
            "small.toml",
            "--data",
            "d",
            "--lr",
            "1e39",
            "--epochs",
            "3",
            "--out",
            "x",
        ],
        root,
    );
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}
