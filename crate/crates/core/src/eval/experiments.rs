use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{evaluate, MetricsReport};
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::stratify::{csv_err, Stratum};
use crate::train::{in_split, samples_for, train, TrainConfig, TrainOutcome};

/// Link settings of the ablation table: `(name, link1, link2)`.
pub const ABLATIONS: [(&str, bool, bool); 4] = [
    ("full", true, true),
    ("no_link1", false, true),
    ("no_link2", true, false),
    ("no_both", false, false),
];

/// Trains with `cfg`, then scores the test split with strata taken from
/// `eval_threshold` (the training threshold when `None`).
pub fn train_and_test(
    ds: &Dataset,
    cfg: &TrainConfig,
    eval_threshold: Option<u32>,
    ks: &[usize],
) -> Result<(TrainOutcome, MetricsReport)> {
    let outcome = train(ds, cfg, None)?;
    let samples = samples_for(ds, eval_threshold.unwrap_or(cfg.anchor_threshold));
    let report = evaluate(&outcome.model, ds, &in_split(&samples, Split::Test), ks)?;
    Ok((outcome, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: u32,
    pub best_epoch: usize,
    pub report: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

/// One full train and test run per threshold, all with `base.seed`.
pub fn sweep_threshold(
    ds: &Dataset,
    grid: &[u32],
    base: &TrainConfig,
    eval_threshold: Option<u32>,
    ks: &[usize],
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::Config("threshold grid is empty".into()));
    }
    let rows = grid
        .iter()
        .map(|&threshold| {
            let cfg = TrainConfig {
                anchor_threshold: threshold,
                ..base.clone()
            };
            let (outcome, report) =
                train_and_test(ds, &cfg, eval_threshold.or(Some(threshold)), ks)?;
            Ok(SweepRow {
                threshold,
                best_epoch: outcome.best_epoch,
                report,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepResult { rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub link1: bool,
    pub link2: bool,
    pub best_epoch: usize,
    pub report: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub rows: Vec<AblationRow>,
}

/// Full model and the three cut-link variants, sharing `base.seed`.
pub fn run_ablation(
    ds: &Dataset,
    base: &TrainConfig,
    eval_threshold: Option<u32>,
    ks: &[usize],
) -> Result<AblationResult> {
    let rows = ABLATIONS
        .iter()
        .map(|&(variant, link1, link2)| {
            let cfg = TrainConfig {
                link1,
                link2,
                ..base.clone()
            };
            let (outcome, report) = train_and_test(ds, &cfg, eval_threshold, ks)?;
            Ok(AblationRow {
                variant: variant.to_string(),
                link1,
                link2,
                best_epoch: outcome.best_epoch,
                report,
            })
        })
        .collect::<Result<_>>()?;
    Ok(AblationResult { rows })
}

fn metric_header(ks: &[usize]) -> Vec<String> {
    let mut h = vec!["n_test".to_string()];
    for k in ks {
        h.extend([
            format!("recall@{k}"),
            format!("mrr@{k}"),
            format!("ndcg@{k}"),
        ]);
    }
    for k in ks {
        h.extend([format!("t1_recall@{k}"), format!("t2_recall@{k}")]);
    }
    h
}

fn metric_cells(r: &MetricsReport) -> Vec<String> {
    let mut row = vec![r.overall.count.to_string()];
    for m in &r.overall.metrics {
        row.extend([
            format!("{:.6}", m.recall),
            format!("{:.6}", m.mrr),
            format!("{:.6}", m.ndcg),
        ]);
    }
    let cell = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
    for &k in &r.ks {
        row.push(cell(r.recall(Some(Stratum::T1), k)));
        row.push(cell(r.recall(Some(Stratum::T2), k)));
    }
    row
}

pub fn write_sweep_csv<W: Write>(out: W, result: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let ks = result
        .rows
        .first()
        .map(|r| r.report.ks.clone())
        .unwrap_or_default();
    let mut header = vec!["threshold".to_string(), "best_epoch".to_string()];
    header.extend(metric_header(&ks));
    w.write_record(&header).map_err(csv_err)?;
    for r in &result.rows {
        let mut row = vec![r.threshold.to_string(), r.best_epoch.to_string()];
        row.extend(metric_cells(&r.report));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_ablation_csv<W: Write>(out: W, result: &AblationResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let ks = result
        .rows
        .first()
        .map(|r| r.report.ks.clone())
        .unwrap_or_default();
    let mut header = vec![
        "variant".to_string(),
        "link1".to_string(),
        "link2".to_string(),
        "best_epoch".to_string(),
    ];
    header.extend(metric_header(&ks));
    w.write_record(&header).map_err(csv_err)?;
    for r in &result.rows {
        let mut row = vec![
            r.variant.clone(),
            r.link1.to_string(),
            r.link2.to_string(),
            r.best_epoch.to_string(),
        ];
        row.extend(metric_cells(&r.report));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
