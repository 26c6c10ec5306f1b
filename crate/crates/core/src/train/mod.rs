//! Stratified multi-task training.
//!
//! Anchor-targeted rows are fitted on `y_pred`; nonanchor-targeted rows on
//! `y_pred − y_causal`. Per-batch losses are sums over rows.

mod batcher;
mod loss;

use std::io::Write;
use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::eval::metrics_at_k;
use crate::eval::rank_samples;
use crate::model::{Mode, Model, ModelConfig, SeqBatch, Strategy, TieSpace};
use crate::nn::{clip_grad_norm, AdamConfig, AdamState, Tape, Tensor};
use crate::stratify::{
    anchor_index_from_counts, make_samples, train_visit_counts, PredictionSample,
};

pub use batcher::{batcher, derive_seed, Stream};
pub use loss::{multi_task_loss, LossBreakdown};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub anchor_threshold: u32,
    /// Off: every row is fitted on `y_pred` and no counterfactual is drawn.
    pub causal: bool,
    pub strategy: Strategy,
    pub link1: bool,
    pub link2: bool,
    pub tie_space: TieSpace,
    pub patience: usize,
    pub clip_norm: f64,
    pub d: usize,
    pub n_hidden: usize,
    pub head_hidden: usize,
    /// Sort batches by length before chunking.
    pub bucket: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            lr: 1e-3,
            seed: 7,
            anchor_threshold: 10,
            causal: true,
            strategy: Strategy::I,
            link1: true,
            link2: true,
            tie_space: TieSpace::Logit,
            patience: 5,
            clip_norm: 5.0,
            d: 128,
            n_hidden: 256,
            head_hidden: 256,
            bucket: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "lr must be finite and >= 0, got {}",
                self.lr
            )));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config(format!(
                "clip_norm must be positive, got {}",
                self.clip_norm
            )));
        }
        if self.causal && !cfg!(feature = "counterfactual") {
            return Err(Error::Config(
                "causal training requested but the counterfactual feature is disabled".into(),
            ));
        }
        Ok(())
    }

    pub fn model_config(&self, n_users: usize, n_locations: usize) -> ModelConfig {
        ModelConfig {
            d: self.d,
            n_hidden: self.n_hidden,
            head_hidden: self.head_hidden,
            link1: self.link1,
            link2: self.link2,
            strategy: self.strategy,
            tie_space: self.tie_space,
            ..ModelConfig::new(n_users, n_locations)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-row losses over the epoch.
    pub loss_total: f64,
    pub loss_anchor: f64,
    pub loss_nonanchor: f64,
    pub n_anchor: usize,
    pub n_nonanchor: usize,
    pub valid_recall5: f64,
    pub valid_mrr5: f64,
    pub valid_ndcg5: f64,
    pub grad_norm: f64,
    pub wall_secs: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation Recall@5.
    pub model: Model<f32>,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Samples tagged against `threshold`, filtered to `split`.
pub fn samples_for(ds: &Dataset, threshold: u32) -> Vec<PredictionSample> {
    let counts = train_visit_counts(ds);
    make_samples(ds, &anchor_index_from_counts(&counts, threshold))
}

pub fn in_split(samples: &[PredictionSample], split: Split) -> Vec<&PredictionSample> {
    samples.iter().filter(|s| s.split == split).collect()
}

/// Recall, MRR and NDCG at 5 on `samples`.
fn valid_scores(model: &Model<f32>, samples: &[&PredictionSample]) -> Result<(f64, f64, f64)> {
    if samples.is_empty() {
        return Ok((0.0, 0.0, 0.0));
    }
    let ranks = rank_samples(model, samples)?;
    let m = metrics_at_k(&ranks, 5)?;
    Ok((m.recall, m.mrr, m.ndcg))
}

/// One optimisation step. Returns the loss breakdown and pre-clip
/// gradient norm.
pub fn train_step(
    model: &mut Model<f32>,
    adam: &mut AdamState<f32>,
    batch: &SeqBatch,
    cfg: &TrainConfig,
    counterfactual_seed: u64,
) -> Result<(LossBreakdown, f64)> {
    let (breakdown, mut grads) = {
        let mut tape = Tape::new();
        let net = model.bind(&mut tape);
        let mode = Mode::Train {
            counterfactual: cfg.causal.then_some(counterfactual_seed),
        };
        let out = net.forward(&mut tape, batch, mode)?;
        let (loss, breakdown) = multi_task_loss(&mut tape, &net, &out, batch, cfg.causal)?;
        if !tape.value(loss).item().is_finite() {
            return Ok((breakdown, f64::NAN));
        }
        let g = tape.backward(loss)?;
        let grads: Vec<Tensor<f32>> = tape
            .parameters()
            .iter()
            .map(|(_, v)| g.wrt(&tape, *v))
            .collect();
        (breakdown, grads)
    };
    let norm = clip_grad_norm(&mut grads, cfg.clip_norm);
    adam.step(model.params.tensors_mut(), &grads)?;
    Ok((breakdown, norm))
}

/// Trains on the train split and keeps the parameters with the best
/// validation Recall@5. Each epoch is also written as a JSON line to `log`.
pub fn train(
    ds: &Dataset,
    cfg: &TrainConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let samples = samples_for(ds, cfg.anchor_threshold);
    let train_set = in_split(&samples, Split::Train);
    let valid_set = in_split(&samples, Split::Valid);
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("no training samples".into()));
    }
    let init_seed = derive_seed(cfg.seed, Stream::Init, 0, 0);
    let mut model = Model::<f32>::new(cfg.model_config(ds.n_users(), ds.n_locations()), init_seed)?;
    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        model.params.tensors(),
    );
    info!(
        "training on {} samples ({} valid), threshold {}, causal {}, strategy {}",
        train_set.len(),
        valid_set.len(),
        cfg.anchor_threshold,
        cfg.causal,
        cfg.strategy
    );

    let mut best = (f64::NEG_INFINITY, 0usize, model.params.clone());
    let mut stale = 0;
    let mut history = Vec::new();
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let plan = batcher(&train_set, cfg.batch_size, cfg.seed, epoch, cfg.bucket);
        let mut sum = LossBreakdown::default();
        let mut norm_sum = 0.0;
        for (bi, idx) in plan.iter().enumerate() {
            let rows: Vec<&PredictionSample> = idx.iter().map(|&i| train_set[i]).collect();
            let batch = SeqBatch::from_samples(&rows);
            let cf_seed = derive_seed(cfg.seed, Stream::Counterfactual, epoch, bi);
            let (b, norm) = train_step(&mut model, &mut adam, &batch, cfg, cf_seed)?;
            if !b.total.is_finite() || !norm.is_finite() || !model.params.all_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: bi,
                    loss: b.total,
                });
            }
            sum.accumulate(&b);
            norm_sum += norm;
        }
        let (r5, m5, n5) = valid_scores(&model, &valid_set)?;
        let n = (sum.n_anchor + sum.n_nonanchor).max(1) as f64;
        let entry = EpochLog {
            epoch,
            loss_total: sum.total / n,
            loss_anchor: sum.ce_anchor / sum.n_anchor.max(1) as f64,
            loss_nonanchor: sum.ce_nonanchor / sum.n_nonanchor.max(1) as f64,
            n_anchor: sum.n_anchor,
            n_nonanchor: sum.n_nonanchor,
            valid_recall5: r5,
            valid_mrr5: m5,
            valid_ndcg5: n5,
            grad_norm: norm_sum / plan.len().max(1) as f64,
            wall_secs: start.elapsed().as_secs_f64(),
        };
        debug!("{}", serde_json::to_string(&entry)?);
        if let Some(w) = log.as_deref_mut() {
            writeln!(w, "{}", serde_json::to_string(&entry)?)
                .map_err(|e| Error::io("<train log>", e))?;
        }
        history.push(entry);

        if r5 > best.0 {
            best = (r5, epoch, model.params.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                info!("early stop after epoch {epoch}, best epoch {}", best.1);
                break;
            }
        }
    }
    model.params = best.2;
    Ok(TrainOutcome {
        model,
        log: history,
        best_epoch: best.1,
    })
}
