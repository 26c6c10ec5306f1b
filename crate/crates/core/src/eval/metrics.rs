use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Scalar;

pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];

/// 1 + number of logits strictly above the target's, plus the number of
/// smaller indices that tie with it.
pub fn rank_of_target<T: Scalar>(logits: &[T], target: usize) -> usize {
    let x = logits[target];
    let mut rank = 1;
    for (i, &v) in logits.iter().enumerate() {
        if v > x || (v == x && i < target) {
            rank += 1;
        }
    }
    rank
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub k: usize,
    pub recall: f64,
    pub mrr: f64,
    pub ndcg: f64,
}

/// Per-sample contribution at cutoff `k`.
pub fn hit_scores(rank: usize, k: usize) -> (f64, f64, f64) {
    if rank <= k {
        (1.0, 1.0 / rank as f64, 1.0 / (rank as f64 + 1.0).log2())
    } else {
        (0.0, 0.0, 0.0)
    }
}

pub fn metrics_at_k(ranks: &[usize], k: usize) -> Result<Metrics> {
    if ranks.is_empty() {
        return Err(Error::UndefinedMetrics("no ranks to average".into()));
    }
    if let Some(&r) = ranks.iter().find(|&&r| r == 0) {
        return Err(Error::Contract(format!("rank {r} is not >= 1")));
    }
    let (mut recall, mut mrr, mut ndcg) = (0.0, 0.0, 0.0);
    for &r in ranks {
        let (a, b, c) = hit_scores(r, k);
        recall += a;
        mrr += b;
        ndcg += c;
    }
    let n = ranks.len() as f64;
    Ok(Metrics {
        k,
        recall: recall / n,
        mrr: mrr / n,
        ndcg: ndcg / n,
    })
}
