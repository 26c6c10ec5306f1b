//! Gated recurrent unit cell built from tape primitives.
//!
//! ```text
//! z  = σ(x·W_z + h·U_z + b_z)
//! r  = σ(x·W_r + h·U_r + b_r)
//! ĥ  = tanh(x·W_h + (r ⊙ h)·U_h + b_h)
//! h' = (1 − z) ⊙ h + z ⊙ ĥ
//! ```
//! Inputs are row-batched: `x: [B, i]`, `h: [B, n]`, `W_*: [i, n]`,
//! `U_*: [n, n]`, `b_*: [n]`.

use super::tape::{Tape, Var};
use super::tensor::Scalar;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct GruWeights {
    pub w_z: Var,
    pub u_z: Var,
    pub b_z: Var,
    pub w_r: Var,
    pub u_r: Var,
    pub b_r: Var,
    pub w_h: Var,
    pub u_h: Var,
    pub b_h: Var,
}

impl GruWeights {
    pub const NAMES: [&'static str; 9] = [
        "w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h",
    ];

    pub fn from_slice(v: &[Var]) -> Self {
        Self {
            w_z: v[0],
            u_z: v[1],
            b_z: v[2],
            w_r: v[3],
            u_r: v[4],
            b_r: v[5],
            w_h: v[6],
            u_h: v[7],
            b_h: v[8],
        }
    }

    fn check<T: Scalar>(&self, tape: &Tape<'_, T>, input: usize, hidden: usize) -> Result<()> {
        for (w, u, b) in [
            (self.w_z, self.u_z, self.b_z),
            (self.w_r, self.u_r, self.b_r),
            (self.w_h, self.u_h, self.b_h),
        ] {
            if tape.shape(w) != [input, hidden] {
                return Err(Error::dim("gru_cell W", tape.shape(w), &[input, hidden]));
            }
            if tape.shape(u) != [hidden, hidden] {
                return Err(Error::dim("gru_cell U", tape.shape(u), &[hidden, hidden]));
            }
            if tape.shape(b) != [hidden] {
                return Err(Error::dim("gru_cell b", tape.shape(b), &[hidden]));
            }
        }
        Ok(())
    }
}

fn gate<T: Scalar>(tape: &mut Tape<'_, T>, x: Var, h: Var, w: Var, u: Var, b: Var) -> Result<Var> {
    let xw = tape.matmul(x, w)?;
    let hu = tape.matmul(h, u)?;
    let s = tape.add(xw, hu)?;
    tape.add(s, b)
}

pub fn gru_cell<T: Scalar>(tape: &mut Tape<'_, T>, x: Var, h: Var, w: &GruWeights) -> Result<Var> {
    let (xs, hs) = (tape.shape(x).to_vec(), tape.shape(h).to_vec());
    if xs.len() != 2 || hs.len() != 2 || xs[0] != hs[0] {
        return Err(Error::dim("gru_cell", &xs, &hs));
    }
    w.check(tape, xs[1], hs[1])?;

    let z_pre = gate(tape, x, h, w.w_z, w.u_z, w.b_z)?;
    let z = tape.sigmoid(z_pre);
    let r_pre = gate(tape, x, h, w.w_r, w.u_r, w.b_r)?;
    let r = tape.sigmoid(r_pre);
    let rh = tape.mul(r, h)?;
    let c_pre = gate(tape, x, rh, w.w_h, w.u_h, w.b_h)?;
    let cand = tape.tanh(c_pre);
    // (1 − z)⊙h + z⊙ĥ  ==  h + z⊙(ĥ − h)
    let delta = tape.sub(cand, h)?;
    let step = tape.mul(z, delta)?;
    tape.add(h, step)
}
