//! Command-line front end.
//!
//! Every subcommand writes its resolved configuration (`config.toml`) and a
//! `run.json` with the seed, `git describe` string and value provenance into
//! its output directory, next to the reports it emits.

mod config;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use crate::data::{ingest, read_dataset, synth_generate, write_dataset, Dataset, Split};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, predict_logits, rank_of_target, run_ablation, sweep_threshold, write_ablation_csv,
    write_sweep_csv,
};
use crate::model::{Model, Strategy};
use crate::stratify::{csv_err, prev_location_gain, stratum_stats, write_stratum_stats_csv};
use crate::train::{in_split, samples_for, train};

pub use config::{ConfigBuilder, EvalConfig, RunConfig, Source};

pub const CONFIG_ARCHIVE: &str = "config.toml";
pub const RUN_FILE: &str = "run.json";
pub const CHECKPOINT_DIR: &str = "checkpoint";

#[derive(Debug, Parser)]
#[command(
    name = "nextloc",
    version,
    about = "Stratified causal next-location prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Check-in TSV to a dataset directory.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Synthetic corpus to a dataset directory.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Anchor and stratum counts per threshold.
    StratifyStats {
        #[command(flatten)]
        common: Common,
    },
    /// Gain from knowing the previous location, per category and hour.
    AnalyzePrevloc {
        /// Fit one predictor per user instead of one for the population.
        #[arg(long)]
        per_user: bool,
        /// `top1` or `likelihood`.
        #[arg(long)]
        measure: Option<String>,
        #[arg(long)]
        min_support: Option<usize>,
        /// Split scored against the train-split predictors.
        #[arg(long, default_value = "test")]
        split: String,
        #[command(flatten)]
        common: Common,
    },
    /// Trains a model and writes a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Scores a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Also write every sample's logits.
        #[arg(long)]
        dump_logits: bool,
        #[command(flatten)]
        common: Common,
    },
    /// One training run per anchor threshold.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Full model and the cut-link variants.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory; a timestamped one under `runs/` when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML file with `[ingest]`, `[synth]`, `[train]`, `[eval]`, `[gain]` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for synthesis and training.
    #[arg(long)]
    seed: Option<u64>,
    /// Anchor visit-count threshold for training.
    #[arg(long)]
    threshold: Option<u32>,
    /// Threshold that tags evaluation strata.
    #[arg(long)]
    eval_threshold: Option<u32>,
    /// Counterfactual strategy: I, II or III.
    #[arg(long)]
    strategy: Option<Strategy>,
    /// Drop the history state from the output head.
    #[arg(long)]
    no_link1: bool,
    /// Drop the direct previous-location input to the output head.
    #[arg(long)]
    no_link2: bool,
    /// Train without the counterfactual branch.
    #[arg(long)]
    baseline: bool,
    /// Trajectory segmentation gap.
    #[arg(long)]
    gap_hours: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Comma-separated cutoffs.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Comma-separated thresholds.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<u32>>,
}

fn int(v: impl TryInto<i64>) -> Result<toml::Value> {
    v.try_into()
        .map(toml::Value::Integer)
        .map_err(|_| Error::Usage("integer flag out of range".into()))
}

impl Common {
    fn builder(&self) -> Result<ConfigBuilder> {
        let mut b = ConfigBuilder::new()?;
        if let Some(p) = &self.config {
            b = b.file(p)?;
        }
        if let Some(s) = self.seed {
            b.flag("train", "seed", int(s)?);
            b.flag("synth", "seed", int(s)?);
        }
        if let Some(t) = self.threshold {
            b.flag("train", "anchor_threshold", int(t)?);
        }
        if let Some(t) = self.eval_threshold {
            b.flag("eval", "eval_threshold", int(t)?);
        }
        if let Some(s) = self.strategy {
            b.flag("train", "strategy", s.to_string());
        }
        if self.no_link1 {
            b.flag("train", "link1", false);
        }
        if self.no_link2 {
            b.flag("train", "link2", false);
        }
        if self.baseline {
            b.flag("train", "causal", false);
        }
        if let Some(g) = self.gap_hours {
            b.flag("ingest", "gap_hours", g);
        }
        if let Some(e) = self.epochs {
            b.flag("train", "epochs", int(e)?);
        }
        if let Some(n) = self.batch {
            b.flag("train", "batch_size", int(n)?);
        }
        if let Some(lr) = self.lr {
            b.flag("train", "lr", lr);
        }
        if let Some(k) = &self.k {
            let ks = k.iter().map(|&x| int(x)).collect::<Result<Vec<_>>>()?;
            b.flag("eval", "ks", ks);
        }
        if let Some(g) = &self.grid {
            let grid = g.iter().map(|&x| int(x)).collect::<Result<Vec<_>>>()?;
            b.flag("eval", "grid", grid);
        }
        Ok(b)
    }

    fn data_dir(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| Error::Usage("--data <DIR> is required".into()))
    }
}

#[derive(Serialize)]
struct RunRecord<'a> {
    command: &'a str,
    seed: u64,
    git_describe: String,
    version: &'static str,
    started: String,
    data: Option<&'a Path>,
    provenance: &'a std::collections::BTreeMap<String, Source>,
}

fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

struct Run {
    dir: PathBuf,
    cfg: RunConfig,
}

impl Run {
    fn start(command: &str, common: &Common) -> Result<Self> {
        Self::with_builder(command, common, common.builder()?)
    }

    fn with_builder(command: &str, common: &Common, builder: ConfigBuilder) -> Result<Self> {
        let cfg = builder.resolve()?;
        let dir = match &common.out {
            Some(p) => p.clone(),
            None => PathBuf::from("runs").join(format!(
                "{command}-{}",
                chrono::Local::now().format("%Y%m%d-%H%M%S%.3f")
            )),
        };
        if let Some(data) = &common.data {
            if dir.exists()
                && data.exists()
                && fs::canonicalize(&dir).ok() == fs::canonicalize(data).ok()
            {
                return Err(Error::Usage("--out must differ from --data".into()));
            }
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_text(&dir.join(CONFIG_ARCHIVE), &cfg.to_toml()?)?;
        let record = RunRecord {
            command,
            seed: if command == "synth" {
                cfg.synth.seed
            } else {
                cfg.train.seed
            },
            git_describe: git_describe(),
            version: env!("CARGO_PKG_VERSION"),
            started: chrono::Local::now().to_rfc3339(),
            data: common.data.as_deref(),
            provenance: builder.provenance(),
        };
        write_text(&dir.join(RUN_FILE), &serde_json::to_string_pretty(&record)?)?;
        info!("{command}: writing to {}", dir.display());
        Ok(Self { dir, cfg })
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| Error::io(&path, e))
    }

    fn json(&self, name: &str, value: &impl Serialize) -> Result<()> {
        write_text(&self.dir.join(name), &serde_json::to_string_pretty(value)?)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "valid" => Ok(Split::Valid),
        "test" => Ok(Split::Test),
        _ => Err(Error::Usage(format!(
            "unknown split {s:?}; expected train, valid or test"
        ))),
    }
}

fn load(common: &Common) -> Result<Dataset> {
    read_dataset(common.data_dir()?)
}

impl Cmd {
    fn common(&self) -> &Common {
        match self {
            Cmd::Ingest { common, .. }
            | Cmd::Synth { common }
            | Cmd::StratifyStats { common }
            | Cmd::AnalyzePrevloc { common, .. }
            | Cmd::Train { common }
            | Cmd::Eval { common, .. }
            | Cmd::Sweep { common }
            | Cmd::Ablate { common } => common,
        }
    }
}

fn run(cmd: Cmd) -> Result<()> {
    // Config errors take precedence over data errors.
    cmd.common().builder()?.resolve()?;
    match cmd {
        Cmd::Ingest { input, common } => {
            let r = Run::start("ingest", &common)?;
            let (ds, stats) = ingest(&input, &r.cfg.ingest)?;
            write_dataset(&r.dir, &ds)?;
            r.json("ingest_stats.json", &stats)?;
            println!(
                "{} users, {} locations, {} trajectories -> {}",
                ds.n_users(),
                ds.n_locations(),
                ds.trajectories.len(),
                r.dir.display()
            );
        }
        Cmd::Synth { common } => {
            let r = Run::start("synth", &common)?;
            let corpus = synth_generate(&r.cfg.synth)?;
            write_dataset(&r.dir, &corpus.dataset)?;
            println!(
                "{} records, {} trajectories -> {}",
                corpus.dataset.n_records(),
                corpus.dataset.trajectories.len(),
                r.dir.display()
            );
        }
        Cmd::StratifyStats { common } => {
            let ds = load(&common)?;
            let r = Run::start("stratify-stats", &common)?;
            let stats = stratum_stats(&ds, &r.cfg.eval.grid);
            write_stratum_stats_csv(r.create("stratum_stats.csv")?, &stats)?;
        }
        Cmd::AnalyzePrevloc {
            per_user,
            measure,
            min_support,
            split,
            common,
        } => {
            let ds = load(&common)?;
            let eval_split = parse_split(&split)?;
            let mut b = common.builder()?;
            if per_user {
                b.flag("gain", "per_user", true);
            }
            if let Some(m) = measure {
                if !matches!(m.as_str(), "top1" | "likelihood") {
                    return Err(Error::Usage(format!(
                        "unknown measure {m:?}; expected top1 or likelihood"
                    )));
                }
                b.flag("gain", "measure", m);
            }
            if let Some(s) = min_support {
                b.flag("gain", "min_support", int(s)?);
            }
            let r = Run::with_builder("analyze-prevloc", &common, b)?;
            let report = prev_location_gain(&ds, Split::Train, eval_split, &r.cfg.gain)?;
            report.write_csv(r.create("prevloc_gain.csv")?)?;
        }
        Cmd::Train { common } => {
            let ds = load(&common)?;
            let r = Run::start("train", &common)?;
            let mut log = r.create("train_log.jsonl")?;
            let outcome = train(&ds, &r.cfg.train, Some(&mut log))?;
            log.flush().map_err(|e| Error::io(&r.dir, e))?;
            outcome.model.save(&r.dir.join(CHECKPOINT_DIR))?;
            println!(
                "best epoch {} (valid Recall@5 {:.4}) -> {}",
                outcome.best_epoch,
                outcome.log[outcome.best_epoch].valid_recall5,
                r.dir.join(CHECKPOINT_DIR).display()
            );
        }
        Cmd::Eval {
            checkpoint,
            split,
            dump_logits,
            common,
        } => {
            let ds = load(&common)?;
            let split = parse_split(&split)?;
            let model = Model::<f32>::load(&checkpoint)?;
            let r = Run::start("eval", &common)?;
            let threshold = r
                .cfg
                .eval
                .eval_threshold
                .unwrap_or(r.cfg.train.anchor_threshold);
            let samples = samples_for(&ds, threshold);
            let subset = in_split(&samples, split);
            let report = evaluate(&model, &ds, &subset, &r.cfg.eval.ks)?;
            report.write_csv(r.create("metrics.csv")?)?;
            report.write_category_csv(r.create("category_recall.csv")?)?;
            r.json("metrics.json", &report)?;
            if dump_logits {
                let logits = predict_logits(&model, &subset)?;
                let mut w = csv::Writer::from_writer(r.create("logits.csv")?);
                let mut header = vec![
                    "user".to_string(),
                    "target".to_string(),
                    "stratum".to_string(),
                    "rank".to_string(),
                ];
                header.extend((0..ds.n_locations()).map(|i| format!("l{i}")));
                w.write_record(&header).map_err(csv_err)?;
                for (s, y) in subset.iter().zip(&logits) {
                    let mut row = vec![
                        s.user.to_string(),
                        s.target.to_string(),
                        s.stratum.name().to_string(),
                        rank_of_target(y, s.target as usize).to_string(),
                    ];
                    row.extend(y.iter().map(|v| v.to_string()));
                    w.write_record(&row).map_err(csv_err)?;
                }
                w.flush().map_err(|e| Error::io(&r.dir, e))?;
            }
            for s in std::iter::once(&report.overall).chain(&report.strata) {
                let cells: Vec<String> = s
                    .metrics
                    .iter()
                    .map(|m| format!("R@{} {:.4}", m.k, m.recall))
                    .collect();
                println!("{:<8} n={:<6} {}", s.scope, s.count, cells.join("  "));
            }
        }
        Cmd::Sweep { common } => {
            let ds = load(&common)?;
            let r = Run::start("sweep", &common)?;
            let result = sweep_threshold(
                &ds,
                &r.cfg.eval.grid,
                &r.cfg.train,
                r.cfg.eval.eval_threshold,
                &r.cfg.eval.ks,
            )?;
            write_sweep_csv(r.create("sweep.csv")?, &result)?;
            r.json("sweep.json", &result)?;
        }
        Cmd::Ablate { common } => {
            let ds = load(&common)?;
            let r = Run::start("ablate", &common)?;
            let result =
                run_ablation(&ds, &r.cfg.train, r.cfg.eval.eval_threshold, &r.cfg.eval.ks)?;
            write_ablation_csv(r.create("ablation.csv")?, &result)?;
            r.json("ablation.json", &result)?;
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn dispatch<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
