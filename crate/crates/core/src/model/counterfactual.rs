use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Strategy;
use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor};

/// Reference inputs for the intervened recurrence, one `[rows, d]` tensor
/// per step. Padded positions hold zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct CounterfactualBatch<T> {
    /// Batch rows the values belong to.
    pub rows: Vec<usize>,
    pub h_star: Vec<Tensor<T>>,
    pub l_star: Vec<Tensor<T>>,
    /// Strategy actually applied to `l_star` (III may fall back to II).
    pub strategy: Strategy,
    pub seed: u64,
}

fn uniform01<T: Scalar>(rng: &mut ChaCha8Rng) -> T {
    let x = T::of(rng.gen::<f64>());
    // rounding to a narrower type can land on 1
    if x >= T::one() {
        T::one() - T::epsilon() / T::of(2.0)
    } else {
        x
    }
}

/// Draws `h*` (always uniform) and `l*` (per `strategy`) for `rows`.
///
/// `l_values[k]` is the `[B, d]` factual location embedding at step `k`.
/// Values are drawn step by step, row by row, `h*` before `l*`, and only
/// at valid positions, so padding never consumes randomness. Strategy III
/// averages over every valid position of the whole batch except the
/// position itself.
pub fn make_counterfactual<T: Scalar>(
    l_values: &[&Tensor<T>],
    mask: &[Vec<bool>],
    rows: &[usize],
    strategy: Strategy,
    seed: u64,
) -> Result<CounterfactualBatch<T>> {
    if l_values.len() != mask.len() || l_values.is_empty() {
        return Err(Error::dim(
            "make_counterfactual",
            &[l_values.len()],
            &[mask.len()],
        ));
    }
    let d = l_values[0].cols();
    let b = mask[0].len();
    if let Some(&r) = rows.iter().find(|&&r| r >= b) {
        return Err(Error::Lookup { index: r, size: b });
    }

    let mut applied = strategy;
    let mut total = vec![0.0f64; d];
    let mut n = 0usize;
    if strategy == Strategy::III {
        for (k, m) in mask.iter().enumerate() {
            for (r, _) in m.iter().enumerate().filter(|(_, &v)| v) {
                for (acc, v) in total.iter_mut().zip(l_values[k].row(r)) {
                    *acc += v.f64();
                }
                n += 1;
            }
        }
        if n < 2 {
            warn!("strategy III needs at least two observations in the batch, got {n}; using strategy II");
            applied = Strategy::II;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h_star = Vec::with_capacity(mask.len());
    let mut l_star = Vec::with_capacity(mask.len());
    for (k, m) in mask.iter().enumerate() {
        let mut h = Tensor::zeros(&[rows.len(), d]);
        let mut l = Tensor::zeros(&[rows.len(), d]);
        for (i, &r) in rows.iter().enumerate() {
            if !m[r] {
                continue;
            }
            for v in &mut h.data_mut()[i * d..(i + 1) * d] {
                *v = uniform01(&mut rng);
            }
            let out = &mut l.data_mut()[i * d..(i + 1) * d];
            match applied {
                Strategy::I => out.iter_mut().for_each(|v| *v = uniform01(&mut rng)),
                Strategy::II => {}
                Strategy::III => {
                    let own = l_values[k].row(r);
                    for j in 0..d {
                        out[j] = T::of((total[j] - own[j].f64()) / (n - 1) as f64);
                    }
                }
            }
        }
        h_star.push(h);
        l_star.push(l);
    }
    Ok(CounterfactualBatch {
        rows: rows.to_vec(),
        h_star,
        l_star,
        strategy: applied,
        seed,
    })
}
