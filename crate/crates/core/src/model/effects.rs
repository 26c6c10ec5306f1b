use super::{make_counterfactual, CounterfactualBatch, Mode, Model, SeqBatch, Strategy};
use crate::error::{Error, Result};
use crate::nn::{Scalar, Tape, Tensor};

/// Source of the counterfactual reference for [`decompose_effects`].
#[derive(Clone, Debug)]
pub enum Intervention<T> {
    Draw {
        strategy: Strategy,
        seed: u64,
    },
    /// Must cover every batch row, in order.
    Given(CounterfactualBatch<T>),
}

/// Logit-difference vectors for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct CausalEffectReport<T> {
    /// `Y(h, g, l) − Y(h*, g*, l*)`
    pub te: Vec<T>,
    /// `Y(h, g*, l) − Y(h*, g*, l*)`
    pub nde: Vec<T>,
    /// `te − nde`
    pub tie: Vec<T>,
}

fn last_rows<T: Scalar>(seq: &[Tensor<T>], lengths: &[usize]) -> Result<Tensor<T>> {
    let d = seq[0].cols();
    let mut data = Vec::with_capacity(lengths.len() * d);
    for (r, &n) in lengths.iter().enumerate() {
        data.extend_from_slice(seq[n - 1].row(r));
    }
    Tensor::new(vec![lengths.len(), d], data)
}

fn rows_of<T: Scalar>(t: &Tensor<T>) -> Vec<Vec<T>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

/// Total, natural direct and total indirect effect per batch row, all from
/// one shared counterfactual draw.
pub fn decompose_effects<T: Scalar>(
    model: &Model<T>,
    batch: &SeqBatch,
    intervention: Intervention<T>,
) -> Result<Vec<CausalEffectReport<T>>> {
    let mut tape = Tape::new();
    let net = model.bind(&mut tape);
    let out = net.forward(&mut tape, batch, Mode::Eval)?;
    let all_rows: Vec<usize> = (0..batch.rows()).collect();
    let cf = match intervention {
        Intervention::Draw { strategy, seed } => {
            let l_values: Vec<&Tensor<T>> = out.l_seq.iter().map(|&v| tape.value(v)).collect();
            make_counterfactual(&l_values, &batch.mask, &all_rows, strategy, seed)?
        }
        Intervention::Given(cf) => {
            if cf.rows != all_rows
                || cf.h_star.len() != batch.steps()
                || cf.l_star.len() != batch.steps()
            {
                return Err(Error::dim(
                    "decompose_effects",
                    &[cf.rows.len(), cf.h_star.len()],
                    &[batch.rows(), batch.steps()],
                ));
            }
            cf
        }
    };
    let g_star = net.intervened_state(&mut tape, &cf, &batch.mask)?;
    let y_g_star = net.head(&mut tape, out.h_tau, g_star, out.l_tau)?;
    let h_star_tau = tape.constant(last_rows(&cf.h_star, &batch.lengths)?);
    let l_star_tau = tape.constant(last_rows(&cf.l_star, &batch.lengths)?);
    let y_ref = net.head(&mut tape, h_star_tau, g_star, l_star_tau)?;

    let y = rows_of(tape.value(out.y_pred));
    let y_g = rows_of(tape.value(y_g_star));
    let y_r = rows_of(tape.value(y_ref));
    Ok((0..batch.rows())
        .map(|r| {
            let te: Vec<T> = y[r].iter().zip(&y_r[r]).map(|(&a, &b)| a - b).collect();
            let nde: Vec<T> = y_g[r].iter().zip(&y_r[r]).map(|(&a, &b)| a - b).collect();
            let tie = te.iter().zip(&nde).map(|(&a, &b)| a - b).collect();
            CausalEffectReport { te, nde, tie }
        })
        .collect())
}

/// `head(h, g, e(l_i)) − head(h, g, e(l_j))` per batch row, with `h` and
/// `g` from the factual pass.
pub fn causal_effect<T: Scalar>(
    model: &Model<T>,
    batch: &SeqBatch,
    l_i: usize,
    l_j: usize,
) -> Result<Vec<Vec<T>>> {
    let mut tape = Tape::new();
    let net = model.bind(&mut tape);
    let out = net.forward(&mut tape, batch, Mode::Eval)?;
    let ei = tape.gather_rows(net.emb_loc, &vec![l_i; batch.rows()])?;
    let ej = tape.gather_rows(net.emb_loc, &vec![l_j; batch.rows()])?;
    let yi = net.head(&mut tape, out.h_tau, out.g_tau, ei)?;
    let yj = net.head(&mut tape, out.h_tau, out.g_tau, ej)?;
    let diff = tape.sub(yi, yj)?;
    Ok(rows_of(tape.value(diff)))
}
