//! Two-stage recurrent next-location predictor with a counterfactual branch.
//!
//! ```text
//! h_k = tanh([u ⊕ t_k]·W_h + b_h)             location-independent state
//! g_k = GRU(h_k ⊕ l_k, g_{k-1}), g_0 = 0       recurrent state
//! y   = W₂·tanh(W₁·(h_τ ⊕ g_τ ⊕ l_τ) + b₁) + b₂
//! ```
//! `h_τ` is dropped from the head input when link 1 is cut and `l_τ` when
//! link 2 is cut. In training, nonanchor-targeted rows also run the
//! recurrence on counterfactual inputs `(h*, l*)` to get `g*_τ`, and
//! `y_causal = head(h_τ, g*_τ, l_τ)`.

mod batch;
mod counterfactual;
mod effects;

use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::HOURS;
use crate::error::{Error, Result};
use crate::nn::params::{init_uniform, init_weight};
use crate::nn::{checkpoint, gru_cell, GruWeights, ParamStore, Scalar, Tape, Tensor, Var};

pub use batch::SeqBatch;
pub use counterfactual::{make_counterfactual, CounterfactualBatch};
pub use effects::{causal_effect, decompose_effects, CausalEffectReport, Intervention};

pub const CONFIG_FILE: &str = "model.json";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Uniform `[0, 1)` noise.
    #[default]
    I,
    /// All zeros.
    II,
    /// Mean of the other location embeddings in the batch.
    III,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "1" => Ok(Strategy::I),
            "II" | "2" => Ok(Strategy::II),
            "III" | "3" => Ok(Strategy::III),
            _ => Err(Error::Usage(format!(
                "unknown strategy {s:?}, expected I, II or III"
            ))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::I => "I",
            Strategy::II => "II",
            Strategy::III => "III",
        })
    }
}

/// Where `y_pred − y_causal` is taken.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieSpace {
    #[default]
    Logit,
    /// Difference of softmax outputs, then fed to the loss as scores.
    Probability,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d: usize,
    pub n_hidden: usize,
    pub head_hidden: usize,
    pub n_users: usize,
    pub n_locations: usize,
    pub n_hours: usize,
    pub link1: bool,
    pub link2: bool,
    pub strategy: Strategy,
    #[serde(default)]
    pub tie_space: TieSpace,
}

impl ModelConfig {
    pub fn new(n_users: usize, n_locations: usize) -> Self {
        Self {
            d: 128,
            n_hidden: 256,
            head_hidden: 256,
            n_users,
            n_locations,
            n_hours: HOURS,
            link1: true,
            link2: true,
            strategy: Strategy::I,
            tie_space: TieSpace::Logit,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n_hidden == 0 || self.head_hidden == 0 {
            return Err(Error::Config(
                "d, n_hidden and head_hidden must be positive".into(),
            ));
        }
        if self.n_hours != HOURS {
            return Err(Error::Config(format!(
                "n_hours must be {HOURS}, got {}",
                self.n_hours
            )));
        }
        if self.n_users == 0 || self.n_locations < 2 {
            return Err(Error::Config(format!(
                "need at least one user and two locations, got {} and {}",
                self.n_users, self.n_locations
            )));
        }
        Ok(())
    }

    pub fn head_input(&self) -> usize {
        self.n_hidden + usize::from(self.link1) * self.d + usize::from(self.link2) * self.d
    }
}

const N_PARAMS: usize = 18;

fn param_names() -> Vec<String> {
    let mut names: Vec<String> = ["emb_user", "emb_loc", "emb_time", "fh_w", "fh_b"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend(GruWeights::NAMES.iter().map(|n| format!("gru_{n}")));
    names.extend(
        ["head_w1", "head_b1", "head_w2", "head_b2"]
            .iter()
            .map(|s| s.to_string()),
    );
    names
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
}

impl<T: Scalar> Model<T> {
    /// Weights uniform in ±1/√fan_in, embeddings in ±0.1, biases zero.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors: Vec<Tensor<T>> = vec![
            init_uniform(&mut rng, &[c.n_users, c.d], 0.1),
            init_uniform(&mut rng, &[c.n_locations, c.d], 0.1),
            init_uniform(&mut rng, &[c.n_hours, c.d], 0.1),
            init_weight(&mut rng, 2 * c.d, c.d),
            Tensor::zeros(&[c.d]),
        ];
        for _ in 0..3 {
            tensors.push(init_weight(&mut rng, 2 * c.d, c.n_hidden));
            tensors.push(init_weight(&mut rng, c.n_hidden, c.n_hidden));
            tensors.push(Tensor::zeros(&[c.n_hidden]));
        }
        tensors.push(init_weight(&mut rng, c.head_input(), c.head_hidden));
        tensors.push(Tensor::zeros(&[c.head_hidden]));
        tensors.push(init_weight(&mut rng, c.head_hidden, c.n_locations));
        tensors.push(Tensor::zeros(&[c.n_locations]));
        let mut params = ParamStore::new();
        for (name, t) in param_names().into_iter().zip(tensors) {
            params.push(name, t);
        }
        Ok(Self { config, params })
    }

    /// Same layout as [`Model::new`], all zeros.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let mut m = Self::new(config, 0)?;
        for t in m.params.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
        Ok(m)
    }

    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        let template = Self::zeros(config.clone())?;
        template.params.check_layout(&params)?;
        Ok(Self { config, params })
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    /// Registers every parameter on the tape, borrowing the weights.
    pub fn bind<'p>(&'p self, tape: &mut Tape<'p, T>) -> Bound {
        let vars: Vec<Var> = self
            .params
            .iter()
            .map(|(name, t)| tape.param(name, t))
            .collect();
        Bound::from_vars(self.config.clone(), &vars)
    }

    pub fn forward<'p>(
        &'p self,
        tape: &mut Tape<'p, T>,
        batch: &SeqBatch,
        mode: Mode,
    ) -> Result<ForwardOutput<T>> {
        let net = self.bind(tape);
        net.forward(tape, batch, mode)
    }

    /// Eval-mode logits `[B, |L|]`.
    pub fn predict(&self, batch: &SeqBatch) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, batch, Mode::Eval)?;
        Ok(tape.value(out.y_pred).clone())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        checkpoint::save(dir, &self.params)?;
        let path = dir.join(CONFIG_FILE);
        let text = serde_json::to_string_pretty(&self.config)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(CONFIG_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let config: ModelConfig = serde_json::from_str(&text)?;
        config.validate()?;
        let params = checkpoint::load(dir)?;
        Self::from_params(config, params).map_err(|e| Error::Compatibility(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// `Some(seed)` runs the counterfactual branch on T2 rows.
    Train {
        counterfactual: Option<u64>,
    },
}

#[derive(Clone, Debug)]
pub struct ForwardOutput<T> {
    pub h_seq: Vec<Var>,
    pub l_seq: Vec<Var>,
    pub h_tau: Var,
    pub g_tau: Var,
    pub l_tau: Var,
    pub y_pred: Var,
    pub causal: Option<CausalBranch<T>>,
}

impl<T> ForwardOutput<T> {
    pub fn y_causal(&self) -> Option<Var> {
        self.causal.as_ref().map(|c| c.y_causal)
    }
}

#[derive(Clone, Debug)]
pub struct CausalBranch<T> {
    /// Batch rows the branch ran for, in order.
    pub rows: Vec<usize>,
    pub g_star_tau: Var,
    pub y_causal: Var,
    pub counterfactual: CounterfactualBatch<T>,
}

/// Parameters registered on a tape.
#[derive(Clone, Debug)]
pub struct Bound {
    pub config: ModelConfig,
    pub emb_user: Var,
    pub emb_loc: Var,
    pub emb_time: Var,
    pub fh_w: Var,
    pub fh_b: Var,
    pub gru: GruWeights,
    pub head_w1: Var,
    pub head_b1: Var,
    pub head_w2: Var,
    pub head_b2: Var,
}

impl Bound {
    /// `vars` in parameter-store order.
    pub fn from_vars(config: ModelConfig, vars: &[Var]) -> Self {
        assert_eq!(
            vars.len(),
            N_PARAMS,
            "model has {N_PARAMS} parameter tensors"
        );
        Self {
            config,
            emb_user: vars[0],
            emb_loc: vars[1],
            emb_time: vars[2],
            fh_w: vars[3],
            fh_b: vars[4],
            gru: GruWeights::from_slice(&vars[5..14]),
            head_w1: vars[14],
            head_b1: vars[15],
            head_w2: vars[16],
            head_b2: vars[17],
        }
    }
}

fn all(mask: &[bool], v: bool) -> bool {
    mask.iter().all(|&m| m == v)
}

impl Bound {
    /// Per-step `[B, d]` user, location and hour embeddings. The user rows
    /// are gathered once and shared by every step.
    pub fn embed<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        batch: &SeqBatch,
    ) -> Result<(Vec<Var>, Vec<Var>, Vec<Var>)> {
        let u = tape.gather_rows(self.emb_user, &batch.users)?;
        let mut us = Vec::with_capacity(batch.steps());
        let mut ls = Vec::with_capacity(batch.steps());
        let mut ts = Vec::with_capacity(batch.steps());
        for k in 0..batch.steps() {
            us.push(u);
            ls.push(tape.gather_rows(self.emb_loc, &batch.locations[k])?);
            ts.push(tape.gather_rows(self.emb_time, &batch.hours[k])?);
        }
        Ok((us, ls, ts))
    }

    pub fn f_h<T: Scalar>(&self, tape: &mut Tape<'_, T>, u: &[Var], t: &[Var]) -> Result<Vec<Var>> {
        if u.len() != t.len() {
            return Err(Error::dim("f_h", &[u.len()], &[t.len()]));
        }
        u.iter()
            .zip(t)
            .map(|(&u, &t)| {
                let x = tape.concat(&[u, t])?;
                let xw = tape.matmul(x, self.fh_w)?;
                let a = tape.add(xw, self.fh_b)?;
                Ok(tape.tanh(a))
            })
            .collect()
    }

    /// Final recurrent state; masked steps carry the previous state through.
    pub fn f_g<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        h: &[Var],
        l: &[Var],
        mask: &[Vec<bool>],
    ) -> Result<Var> {
        if h.len() != l.len() || h.len() != mask.len() || h.is_empty() {
            return Err(Error::dim("f_g", &[h.len(), l.len()], &[mask.len()]));
        }
        let rows = tape.shape(h[0])[0];
        let mut g = tape.constant(Tensor::zeros(&[rows, self.config.n_hidden]));
        for k in 0..h.len() {
            if all(&mask[k], false) {
                continue;
            }
            let x = tape.concat(&[h[k], l[k]])?;
            let next = gru_cell(tape, x, g, &self.gru)?;
            g = if all(&mask[k], true) {
                next
            } else {
                tape.select_rows(&mask[k], next, g)?
            };
        }
        Ok(g)
    }

    /// Value of `seq` at each row's last valid step.
    pub fn last_valid<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        seq: &[Var],
        mask: &[Vec<bool>],
    ) -> Result<Var> {
        let mut cur = seq[0];
        for k in 1..seq.len() {
            if all(&mask[k], false) {
                continue;
            }
            cur = if all(&mask[k], true) {
                seq[k]
            } else {
                tape.select_rows(&mask[k], seq[k], cur)?
            };
        }
        Ok(cur)
    }

    /// Logits from the final states; the link flags decide which of `h_tau`
    /// and `l_tau` enter.
    pub fn head<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        h_tau: Var,
        g_tau: Var,
        l_tau: Var,
    ) -> Result<Var> {
        let mut parts = Vec::with_capacity(3);
        if self.config.link1 {
            parts.push(h_tau);
        }
        parts.push(g_tau);
        if self.config.link2 {
            parts.push(l_tau);
        }
        let x = if parts.len() == 1 {
            g_tau
        } else {
            tape.concat(&parts)?
        };
        let width = tape.shape(x)[1];
        let expected = tape.shape(self.head_w1)[0];
        if width != expected {
            return Err(Error::Config(format!(
                "head input width {width} (link1={}, link2={}) does not match weights built for {expected}",
                self.config.link1, self.config.link2
            )));
        }
        let a = tape.matmul(x, self.head_w1)?;
        let a = tape.add(a, self.head_b1)?;
        let a = tape.tanh(a);
        let y = tape.matmul(a, self.head_w2)?;
        tape.add(y, self.head_b2)
    }

    /// `y_pred − y_causal` in the configured space.
    pub fn tie<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        y_pred: Var,
        y_causal: Var,
    ) -> Result<Var> {
        match self.config.tie_space {
            TieSpace::Logit => tape.sub(y_pred, y_causal),
            TieSpace::Probability => {
                let p = tape.softmax(y_pred);
                let q = tape.softmax(y_causal);
                tape.sub(p, q)
            }
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        batch: &SeqBatch,
        mode: Mode,
    ) -> Result<ForwardOutput<T>> {
        if batch.rows() == 0 || batch.steps() == 0 {
            return Err(Error::Usage("forward on an empty batch".into()));
        }
        let (u, l_seq, t) = self.embed(tape, batch)?;
        let h_seq = self.f_h(tape, &u, &t)?;
        let g_tau = self.f_g(tape, &h_seq, &l_seq, &batch.mask)?;
        let h_tau = self.last_valid(tape, &h_seq, &batch.mask)?;
        let l_tau = tape.gather_rows(self.emb_loc, &batch.last_locations())?;
        let y_pred = self.head(tape, h_tau, g_tau, l_tau)?;

        let mut causal = None;
        if let Mode::Train {
            counterfactual: Some(seed),
        } = mode
        {
            let rows = batch.rows_in(crate::stratify::Stratum::T2);
            if !rows.is_empty() {
                causal = Some(self.causal_branch(tape, batch, rows, &l_seq, h_tau, l_tau, seed)?);
            }
        }
        Ok(ForwardOutput {
            h_seq,
            l_seq,
            h_tau,
            g_tau,
            l_tau,
            y_pred,
            causal,
        })
    }

    #[cfg(feature = "counterfactual")]
    #[allow(clippy::too_many_arguments)]
    fn causal_branch<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        batch: &SeqBatch,
        rows: Vec<usize>,
        l_seq: &[Var],
        h_tau: Var,
        l_tau: Var,
        seed: u64,
    ) -> Result<CausalBranch<T>> {
        let l_values: Vec<&Tensor<T>> = l_seq.iter().map(|&v| tape.value(v)).collect();
        let cf = make_counterfactual(&l_values, &batch.mask, &rows, self.config.strategy, seed)?;
        let g_star_tau = self.intervened_state(tape, &cf, &batch.mask)?;
        let h_sub = tape.gather_rows(h_tau, &rows)?;
        let l_sub = tape.gather_rows(l_tau, &rows)?;
        let y_causal = self.head(tape, h_sub, g_star_tau, l_sub)?;
        Ok(CausalBranch {
            rows,
            g_star_tau,
            y_causal,
            counterfactual: cf,
        })
    }

    #[cfg(not(feature = "counterfactual"))]
    #[allow(clippy::too_many_arguments)]
    fn causal_branch<T: Scalar>(
        &self,
        _tape: &mut Tape<'_, T>,
        _batch: &SeqBatch,
        _rows: Vec<usize>,
        _l_seq: &[Var],
        _h_tau: Var,
        _l_tau: Var,
        _seed: u64,
    ) -> Result<CausalBranch<T>> {
        Err(Error::Config(
            "built without the counterfactual feature".into(),
        ))
    }

    /// `g*_τ = f_g(h*, l*)` over the rows of `cf`, with detached inputs.
    pub fn intervened_state<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        cf: &CounterfactualBatch<T>,
        mask: &[Vec<bool>],
    ) -> Result<Var> {
        let sub_mask: Vec<Vec<bool>> = mask
            .iter()
            .map(|m| cf.rows.iter().map(|&r| m[r]).collect())
            .collect();
        let h: Vec<Var> = cf.h_star.iter().map(|t| tape.constant(t.clone())).collect();
        let l: Vec<Var> = cf.l_star.iter().map(|t| tape.constant(t.clone())).collect();
        self.f_g(tape, &h, &l, &sub_mask)
    }
}
