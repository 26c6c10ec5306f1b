use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Bound, ForwardOutput, SeqBatch};
use crate::nn::{Scalar, Tape, Var};
use crate::stratify::Stratum;

/// Row-summed cross-entropy per stratum, in float64 for reporting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub ce_anchor: f64,
    pub ce_nonanchor: f64,
    pub n_anchor: usize,
    pub n_nonanchor: usize,
}

impl LossBreakdown {
    pub fn accumulate(&mut self, other: &LossBreakdown) {
        self.total += other.total;
        self.ce_anchor += other.ce_anchor;
        self.ce_nonanchor += other.ce_nonanchor;
        self.n_anchor += other.n_anchor;
        self.n_nonanchor += other.n_nonanchor;
    }

    /// Total divided by the number of rows.
    pub fn mean(&self) -> f64 {
        self.total / (self.n_anchor + self.n_nonanchor).max(1) as f64
    }
}

fn row_sum<T: Scalar>(tape: &Tape<'_, T>, v: Var, rows: impl Iterator<Item = usize>) -> f64 {
    let d = tape.value(v).data();
    rows.map(|r| d[r].f64()).sum()
}

/// Sum over T1 rows of CE(y_pred) plus sum over T2 rows of
/// CE(y_pred − y_causal).
///
/// With `causal` off, or when the batch has no T2 rows, this is the plain
/// summed cross-entropy of `y_pred` over every row.
pub fn multi_task_loss<T: Scalar>(
    tape: &mut Tape<'_, T>,
    net: &Bound,
    out: &ForwardOutput<T>,
    batch: &SeqBatch,
    causal: bool,
) -> Result<(Var, LossBreakdown)> {
    let t1 = batch.rows_in(Stratum::T1);
    let t2 = batch.rows_in(Stratum::T2);

    if !causal || t2.is_empty() {
        let ce = tape.softmax_cross_entropy(out.y_pred, &batch.targets)?;
        let loss = tape.sum(ce);
        let ce_anchor = row_sum(tape, ce, t1.iter().copied());
        let ce_nonanchor = row_sum(tape, ce, t2.iter().copied());
        return Ok((
            loss,
            LossBreakdown {
                total: ce_anchor + ce_nonanchor,
                ce_anchor,
                ce_nonanchor,
                n_anchor: t1.len(),
                n_nonanchor: t2.len(),
            },
        ));
    }

    let branch = out.causal.as_ref().ok_or_else(|| {
        Error::Contract(format!("{} T2 rows but no counterfactual output", t2.len()))
    })?;
    if branch.rows != t2 {
        return Err(Error::Contract(format!(
            "counterfactual rows {:?} do not match T2 rows {:?}",
            branch.rows, t2
        )));
    }
    let pick = |rows: &[usize]| rows.iter().map(|&r| batch.targets[r]).collect::<Vec<_>>();

    let pred2 = tape.gather_rows(out.y_pred, &t2)?;
    let tie = net.tie(tape, pred2, branch.y_causal)?;
    let ce2 = tape.softmax_cross_entropy(tie, &pick(&t2))?;
    let ce_nonanchor = row_sum(tape, ce2, 0..t2.len());
    let mut loss = tape.sum(ce2);
    let mut ce_anchor = 0.0;
    if !t1.is_empty() {
        let pred1 = tape.gather_rows(out.y_pred, &t1)?;
        let ce1 = tape.softmax_cross_entropy(pred1, &pick(&t1))?;
        ce_anchor = row_sum(tape, ce1, 0..t1.len());
        let s1 = tape.sum(ce1);
        loss = tape.add(s1, loss)?;
    }
    Ok((
        loss,
        LossBreakdown {
            total: ce_anchor + ce_nonanchor,
            ce_anchor,
            ce_nonanchor,
            n_anchor: t1.len(),
            n_nonanchor: t2.len(),
        },
    ))
}
