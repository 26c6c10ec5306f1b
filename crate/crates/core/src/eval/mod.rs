//! Ranking metrics, per-stratum and per-category breakdowns, and the
//! threshold-sweep and link-ablation experiments.

mod experiments;
mod metrics;

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{Model, SeqBatch};
use crate::nn::Scalar;
use crate::stratify::{csv_err, PredictionSample, Stratum};

pub use experiments::{
    run_ablation, sweep_threshold, train_and_test, write_ablation_csv, write_sweep_csv,
    AblationResult, AblationRow, SweepResult, SweepRow, ABLATIONS,
};
pub use metrics::{hit_scores, metrics_at_k, rank_of_target, Metrics, DEFAULT_KS};

pub const EVAL_BATCH: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScopeMetrics {
    pub scope: String,
    pub count: usize,
    pub metrics: Vec<Metrics>,
}

impl ScopeMetrics {
    fn from_ranks(scope: String, ranks: &[usize], ks: &[usize]) -> Result<Self> {
        Ok(Self {
            scope,
            count: ranks.len(),
            metrics: ks
                .iter()
                .map(|&k| metrics_at_k(ranks, k))
                .collect::<Result<_>>()?,
        })
    }

    pub fn at(&self, k: usize) -> Option<&Metrics> {
        self.metrics.iter().find(|m| m.k == k)
    }
}

/// Micro-averaged metrics. Scopes without samples are left out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ks: Vec<usize>,
    pub overall: ScopeMetrics,
    pub strata: Vec<ScopeMetrics>,
    pub categories: Vec<ScopeMetrics>,
}

impl MetricsReport {
    pub fn from_ranks(
        ks: &[usize],
        ranks: &[usize],
        strata: &[Stratum],
        categories: &[String],
    ) -> Result<Self> {
        if ks.is_empty() || ks.contains(&0) {
            return Err(Error::Config(format!(
                "cutoffs {ks:?} must be non-empty and positive"
            )));
        }
        let overall = ScopeMetrics::from_ranks("overall".into(), ranks, ks)?;
        let mut by_stratum: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        let mut by_category: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, &r) in ranks.iter().enumerate() {
            by_stratum.entry(strata[i].name()).or_default().push(r);
            by_category
                .entry(categories[i].as_str())
                .or_default()
                .push(r);
        }
        let collect = |m: BTreeMap<&str, Vec<usize>>| -> Result<Vec<ScopeMetrics>> {
            m.into_iter()
                .map(|(name, r)| ScopeMetrics::from_ranks(name.to_string(), &r, ks))
                .collect()
        };
        Ok(Self {
            ks: ks.to_vec(),
            overall,
            strata: collect(by_stratum)?,
            categories: collect(by_category)?,
        })
    }

    pub fn stratum(&self, s: Stratum) -> Option<&ScopeMetrics> {
        self.strata.iter().find(|m| m.scope == s.name())
    }

    pub fn recall(&self, stratum: Option<Stratum>, k: usize) -> Option<f64> {
        let scope = match stratum {
            None => Some(&self.overall),
            Some(s) => self.stratum(s),
        };
        scope.and_then(|s| s.at(k)).map(|m| m.recall)
    }

    /// One row per scope and cutoff.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scope", "k", "recall", "mrr", "ndcg", "count"])
            .map_err(csv_err)?;
        let scopes = std::iter::once(("", &self.overall))
            .chain(self.strata.iter().map(|s| ("stratum:", s)))
            .chain(self.categories.iter().map(|s| ("category:", s)));
        for (prefix, s) in scopes {
            for m in &s.metrics {
                w.write_record(&[
                    format!("{prefix}{}", s.scope),
                    m.k.to_string(),
                    format!("{:.6}", m.recall),
                    format!("{:.6}", m.mrr),
                    format!("{:.6}", m.ndcg),
                    s.count.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Category-by-cutoff recall table.
    pub fn write_category_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["category".to_string(), "count".to_string()];
        header.extend(self.ks.iter().map(|k| format!("recall@{k}")));
        w.write_record(&header).map_err(csv_err)?;
        for c in &self.categories {
            let mut row = vec![c.scope.clone(), c.count.to_string()];
            row.extend(c.metrics.iter().map(|m| format!("{:.6}", m.recall)));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

pub fn check_compatible<T: Scalar>(model: &Model<T>, ds: &Dataset) -> Result<()> {
    let c = &model.config;
    if c.n_users != ds.n_users() || c.n_locations != ds.n_locations() {
        return Err(Error::Compatibility(format!(
            "model vocabulary ({} users, {} locations) does not match dataset ({} users, {} locations)",
            c.n_users,
            c.n_locations,
            ds.n_users(),
            ds.n_locations()
        )));
    }
    Ok(())
}

/// Eval-mode logits for each sample, in order.
pub fn predict_logits<T: Scalar>(
    model: &Model<T>,
    samples: &[&PredictionSample],
) -> Result<Vec<Vec<T>>> {
    let chunks: Vec<Vec<Vec<T>>> = samples
        .par_chunks(EVAL_BATCH)
        .map(|chunk| {
            let y = model.predict(&SeqBatch::from_samples(chunk))?;
            Ok((0..y.rows()).map(|r| y.row(r).to_vec()).collect())
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Target ranks for each sample, in order.
pub fn rank_samples<T: Scalar>(
    model: &Model<T>,
    samples: &[&PredictionSample],
) -> Result<Vec<usize>> {
    let chunks: Vec<Vec<usize>> = samples
        .par_chunks(EVAL_BATCH)
        .map(|chunk| {
            let y = model.predict(&SeqBatch::from_samples(chunk))?;
            Ok(chunk
                .iter()
                .enumerate()
                .map(|(r, s)| rank_of_target(y.row(r), s.target as usize))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Strata are taken from the samples' own tags.
pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    ds: &Dataset,
    samples: &[&PredictionSample],
    ks: &[usize],
) -> Result<MetricsReport> {
    check_compatible(model, ds)?;
    let ranks = rank_samples(model, samples)?;
    let strata: Vec<Stratum> = samples.iter().map(|s| s.stratum).collect();
    let categories: Vec<String> = samples
        .iter()
        .map(|s| ds.category_name(s.target_category).to_string())
        .collect();
    MetricsReport::from_ranks(ks, &ranks, &strata, &categories)
}
