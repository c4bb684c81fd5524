//! Single recurrent steps, recorded on a tape.
//!
//! All gated cells share the memory update
//!
//! ```text
//! c_t = f (.) c_{t-1} + i (.) c~
//! h_t = o (.) tanh(c_t)
//! ```
//!
//! and differ only in how the four gate pre-activations are produced from
//! `v_t = [h_{t-1}, x_t]`.

use crate::error::Result;
use crate::quantum::VqcConfig;
use crate::tape::{Tape, Var};

pub const LAYERNORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct AffineVars {
    pub w: Var,
    pub b: Var,
}

impl AffineVars {
    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        tape.affine(x, self.w, self.b)
    }
}

/// `(d+H) -> n` compression, circuit, `n -> H` expansion.
#[derive(Debug, Clone, Copy)]
pub struct QuantumBlockVars {
    pub pre: AffineVars,
    pub vqc: Var,
    pub post: AffineVars,
}

/// Linear, LayerNorm, GELU, Linear.
#[derive(Debug, Clone, Copy)]
pub struct MlpGateVars {
    pub first: AffineVars,
    pub gain: Var,
    pub bias: Var,
    pub second: AffineVars,
}

#[derive(Debug, Clone, Copy)]
pub struct CellState {
    pub h: Var,
    pub c: Var,
}

/// Gate order used throughout: forget, input, candidate, output.
pub const GATES: [&str; 4] = ["f", "i", "c", "o"];

fn memory_update(tape: &mut Tape, pre: [Var; 4], c_prev: Var) -> Result<CellState> {
    let f = tape.sigmoid(pre[0])?;
    let i = tape.sigmoid(pre[1])?;
    let cand = tape.tanh(pre[2])?;
    let o = tape.sigmoid(pre[3])?;
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, cand)?;
    let c = tape.add(keep, write)?;
    let squashed = tape.tanh(c)?;
    let h = tape.mul(o, squashed)?;
    Ok(CellState { h, c })
}

/// One pass through a quantum block: affine compression, circuit, affine
/// expansion.
pub fn quantum_block(tape: &mut Tape, vqc: &VqcConfig, block: &QuantumBlockVars, input: Var) -> Result<Var> {
    let angles_in = block.pre.apply(tape, input)?;
    let z = tape.quantum_node(vqc, block.vqc, angles_in)?;
    block.post.apply(tape, z)
}

pub fn qlstm_step(
    tape: &mut Tape,
    vqc: &VqcConfig,
    gates: &[QuantumBlockVars; 4],
    x: Var,
    state: CellState,
) -> Result<CellState> {
    let v = tape.concat(&[state.h, x])?;
    let mut pre = [v; 4];
    for (slot, gate) in pre.iter_mut().zip(gates) {
        *slot = quantum_block(tape, vqc, gate, v)?;
    }
    memory_update(tape, pre, state.c)
}

pub fn lstm_step(tape: &mut Tape, gates: &[AffineVars; 4], x: Var, state: CellState) -> Result<CellState> {
    let v = tape.concat(&[state.h, x])?;
    let mut pre = [v; 4];
    for (slot, gate) in pre.iter_mut().zip(gates) {
        *slot = gate.apply(tape, v)?;
    }
    memory_update(tape, pre, state.c)
}

#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub update: AffineVars,
    pub reset: AffineVars,
    pub candidate: AffineVars,
}

/// `h' = (1 - z) h + z h~` with `h~ = tanh(W_h [r h, x] + b_h)`.
pub fn gru_step(tape: &mut Tape, gru: &GruVars, x: Var, h: Var) -> Result<Var> {
    let v = tape.concat(&[h, x])?;
    let z_pre = gru.update.apply(tape, v)?;
    let z = tape.sigmoid(z_pre)?;
    let r_pre = gru.reset.apply(tape, v)?;
    let r = tape.sigmoid(r_pre)?;
    let rh = tape.mul(r, h)?;
    let v_reset = tape.concat(&[rh, x])?;
    let cand_pre = gru.candidate.apply(tape, v_reset)?;
    let cand = tape.tanh(cand_pre)?;
    let one_minus_z = tape.one_minus(z)?;
    let keep = tape.mul(one_minus_z, h)?;
    let write = tape.mul(z, cand)?;
    tape.add(keep, write)
}

pub fn ng_gate(tape: &mut Tape, gate: &MlpGateVars, v: Var) -> Result<Var> {
    let a = gate.first.apply(tape, v)?;
    let n = tape.layernorm(a, gate.gain, gate.bias, LAYERNORM_EPS)?;
    let g = tape.gelu(n)?;
    gate.second.apply(tape, g)
}

pub fn ng_lstm_step(tape: &mut Tape, gates: &[MlpGateVars; 4], x: Var, state: CellState) -> Result<CellState> {
    let v = tape.concat(&[state.h, x])?;
    let mut pre = [v; 4];
    for (slot, gate) in pre.iter_mut().zip(gates) {
        *slot = ng_gate(tape, gate, v)?;
    }
    memory_update(tape, pre, state.c)
}

/// Quantum feature embedding of the raw input, ahead of a classical cell.
pub fn qe_embed(tape: &mut Tape, vqc: &VqcConfig, block: &QuantumBlockVars, x: Var) -> Result<Var> {
    quantum_block(tape, vqc, block, x)
}
