//! Recurrent sequence-to-scalar regressors: classical LSTM/GRU baselines, the
//! circuit-gated QLSTM, and the QE-LSTM / NG-LSTM ablations.

pub mod cells;
pub mod checkpoint;
pub mod params;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::VqcConfig;
use crate::tape::{Tape, Tensor, Var};
use cells::{AffineVars, CellState, GruVars, MlpGateVars, QuantumBlockVars, GATES};
pub use checkpoint::Checkpoint;
use params::Init;
pub use params::{ParamBlock, ParamStore};

/// Variational angles start uniform in `+-VQC_INIT_RANGE`.
pub const VQC_INIT_RANGE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "LSTM")]
    Lstm,
    #[serde(rename = "GRU")]
    Gru,
    #[serde(rename = "QLSTM")]
    Qlstm,
    #[serde(rename = "QE_LSTM")]
    QeLstm,
    #[serde(rename = "NG_LSTM")]
    NgLstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Lstm,
        ModelKind::Gru,
        ModelKind::Qlstm,
        ModelKind::QeLstm,
        ModelKind::NgLstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lstm => "LSTM",
            ModelKind::Gru => "GRU",
            ModelKind::Qlstm => "QLSTM",
            ModelKind::QeLstm => "QE_LSTM",
            ModelKind::NgLstm => "NG_LSTM",
        }
    }

    pub fn uses_circuit(self) -> bool {
        matches!(self, ModelKind::Qlstm | ModelKind::QeLstm)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::Parse(format!("unknown model kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Circuit shared in design by every quantum block (QLSTM, QE-LSTM).
    pub vqc: VqcConfig,
    /// Inner width of the NG-LSTM gate MLP.
    pub ng_inner_dim: usize,
    /// Output width of the QE-LSTM embedding.
    pub embed_dim: usize,
    pub dropout: f64,
}

impl ModelSpec {
    /// Spec with the declared defaults: NG inner width `H`, QE embedding width `d`.
    pub fn new(kind: ModelKind, input_dim: usize, hidden_dim: usize, vqc: VqcConfig) -> Result<Self> {
        let spec = Self {
            kind,
            input_dim,
            hidden_dim,
            vqc,
            ng_inner_dim: hidden_dim,
            embed_dim: input_dim,
            dropout: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_dropout(mut self, rate: f64) -> Result<Self> {
        self.dropout = rate;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("input and hidden widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        match self.kind {
            ModelKind::Qlstm => {
                self.vqc.validate()?;
                if self.vqc.n_qubits > self.input_dim + self.hidden_dim {
                    return Err(Error::Config(format!(
                        "{} qubits exceed the gate input width {}",
                        self.vqc.n_qubits,
                        self.input_dim + self.hidden_dim
                    )));
                }
            }
            ModelKind::QeLstm => {
                self.vqc.validate()?;
                if self.vqc.n_qubits > self.input_dim || self.embed_dim == 0 {
                    return Err(Error::Config(format!(
                        "{} qubits exceed the embedded input width {}",
                        self.vqc.n_qubits, self.input_dim
                    )));
                }
            }
            ModelKind::NgLstm if self.ng_inner_dim < 2 => {
                return Err(Error::Config("NG-LSTM inner width must be at least 2".into()));
            }
            _ => {}
        }
        Ok(())
    }
}

enum CellVars {
    Lstm([AffineVars; 4]),
    Gru(GruVars),
    Qlstm([QuantumBlockVars; 4]),
    NgLstm([MlpGateVars; 4]),
    QeLstm { embed: QuantumBlockVars, gates: [AffineVars; 4] },
}

/// Model parameters registered on one tape.
pub struct BoundModel {
    cell: CellVars,
    head: AffineVars,
    params: Vec<Var>,
}

impl BoundModel {
    /// Tape handles of every parameter block, in store order.
    pub fn params(&self) -> &[Var] {
        &self.params
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: ParamStore,
}

fn add_affine<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, out: usize, inp: usize, rng: &mut R) {
    store.add(format!("{name}.w"), vec![out, inp], Init::Glorot, rng);
    store.add(format!("{name}.b"), vec![out], Init::Zeros, rng);
}

fn add_quantum_block<R: Rng + ?Sized>(
    store: &mut ParamStore,
    name: &str,
    vqc: &VqcConfig,
    inp: usize,
    out: usize,
    rng: &mut R,
) {
    add_affine(store, &format!("{name}.pre"), vqc.n_qubits, inp, rng);
    store.add(format!("{name}.vqc"), vec![vqc.n_params()], Init::Uniform(VQC_INIT_RANGE), rng);
    add_affine(store, &format!("{name}.post"), out, vqc.n_qubits, rng);
}

impl Model {
    pub fn init<R: Rng + ?Sized>(spec: ModelSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let (d, h) = (spec.input_dim, spec.hidden_dim);
        let mut store = ParamStore::default();
        match spec.kind {
            ModelKind::Lstm => {
                for g in GATES {
                    add_affine(&mut store, g, h, d + h, rng);
                }
            }
            ModelKind::Gru => {
                for g in ["z", "r", "h"] {
                    add_affine(&mut store, g, h, d + h, rng);
                }
            }
            ModelKind::Qlstm => {
                for g in GATES {
                    add_quantum_block(&mut store, g, &spec.vqc, d + h, h, rng);
                }
            }
            ModelKind::NgLstm => {
                let inner = spec.ng_inner_dim;
                for g in GATES {
                    add_affine(&mut store, &format!("{g}.l1"), inner, d + h, rng);
                    store.add(format!("{g}.ln.gain"), vec![inner], Init::Ones, rng);
                    store.add(format!("{g}.ln.bias"), vec![inner], Init::Zeros, rng);
                    add_affine(&mut store, &format!("{g}.l2"), h, inner, rng);
                }
            }
            ModelKind::QeLstm => {
                add_quantum_block(&mut store, "qe", &spec.vqc, d, spec.embed_dim, rng);
                for g in GATES {
                    add_affine(&mut store, g, h, spec.embed_dim + h, rng);
                }
            }
        }
        add_affine(&mut store, "head", 1, h, rng);
        Ok(Self { spec, params: store })
    }

    /// Registers every block as a trainable leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> Result<BoundModel> {
        let mut params = Vec::with_capacity(self.params.blocks().len());
        for b in self.params.blocks() {
            params.push(tape.param(Tensor::new(b.shape.clone(), b.values.clone())?));
        }
        let var = |name: String| -> Result<Var> {
            self.params
                .index_of(&name)
                .map(|i| params[i])
                .ok_or_else(|| Error::Shape(format!("missing parameter block '{name}'")))
        };
        let affine = |name: &str| -> Result<AffineVars> {
            Ok(AffineVars {
                w: var(format!("{name}.w"))?,
                b: var(format!("{name}.b"))?,
            })
        };
        let quantum = |name: &str| -> Result<QuantumBlockVars> {
            Ok(QuantumBlockVars {
                pre: affine(&format!("{name}.pre"))?,
                vqc: var(format!("{name}.vqc"))?,
                post: affine(&format!("{name}.post"))?,
            })
        };
        let four = |f: &dyn Fn(&str) -> Result<AffineVars>| -> Result<[AffineVars; 4]> {
            Ok([f(GATES[0])?, f(GATES[1])?, f(GATES[2])?, f(GATES[3])?])
        };
        let cell = match self.spec.kind {
            ModelKind::Lstm => CellVars::Lstm(four(&affine)?),
            ModelKind::Gru => CellVars::Gru(GruVars {
                update: affine("z")?,
                reset: affine("r")?,
                candidate: affine("h")?,
            }),
            ModelKind::Qlstm => {
                CellVars::Qlstm([quantum("f")?, quantum("i")?, quantum("c")?, quantum("o")?])
            }
            ModelKind::NgLstm => {
                let mlp = |g: &str| -> Result<MlpGateVars> {
                    Ok(MlpGateVars {
                        first: affine(&format!("{g}.l1"))?,
                        gain: var(format!("{g}.ln.gain"))?,
                        bias: var(format!("{g}.ln.bias"))?,
                        second: affine(&format!("{g}.l2"))?,
                    })
                };
                CellVars::NgLstm([mlp("f")?, mlp("i")?, mlp("c")?, mlp("o")?])
            }
            ModelKind::QeLstm => CellVars::QeLstm {
                embed: quantum("qe")?,
                gates: four(&affine)?,
            },
        };
        let head = affine("head")?;
        Ok(BoundModel { cell, head, params })
    }

    pub fn initial_state(&self, tape: &mut Tape) -> CellState {
        let h = tape.constant(Tensor::zeros(&[self.spec.hidden_dim]));
        let c = tape.constant(Tensor::zeros(&[self.spec.hidden_dim]));
        CellState { h, c }
    }

    /// One recurrent step. GRU carries its state in `h` only.
    pub fn step(&self, tape: &mut Tape, bound: &BoundModel, x: Var, state: CellState) -> Result<CellState> {
        match &bound.cell {
            CellVars::Lstm(g) => cells::lstm_step(tape, g, x, state),
            CellVars::Gru(g) => Ok(CellState {
                h: cells::gru_step(tape, g, x, state.h)?,
                c: state.c,
            }),
            CellVars::Qlstm(g) => cells::qlstm_step(tape, &self.spec.vqc, g, x, state),
            CellVars::NgLstm(g) => cells::ng_lstm_step(tape, g, x, state),
            CellVars::QeLstm { embed, gates } => {
                let e = cells::qe_embed(tape, &self.spec.vqc, embed, x)?;
                cells::lstm_step(tape, gates, e, state)
            }
        }
    }

    /// Runs a `k x d` window left to right from a zero state and returns the
    /// scalar regression output. `dropout_mask`, when given, multiplies the
    /// final hidden state before the head.
    pub fn forward_window(
        &self,
        tape: &mut Tape,
        bound: &BoundModel,
        window: &[Vec<f64>],
        dropout_mask: Option<Vec<f64>>,
    ) -> Result<Var> {
        if window.is_empty() {
            return Err(Error::Validation("empty input window".into()));
        }
        let mut state = self.initial_state(tape);
        for row in window {
            if row.len() != self.spec.input_dim {
                return Err(Error::Shape(format!(
                    "window row of width {} for input width {}",
                    row.len(),
                    self.spec.input_dim
                )));
            }
            let x = tape.constant(Tensor::vector(row.clone()));
            state = self.step(tape, bound, x, state)?;
        }
        let h = match dropout_mask {
            Some(mask) => tape.mask(state.h, mask)?,
            None => state.h,
        };
        bound.head.apply(tape, h)
    }

    /// Evaluation-mode prediction (no dropout).
    pub fn predict(&self, window: &[Vec<f64>]) -> Result<f64> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape)?;
        let y = self.forward_window(&mut tape, &bound, window, None)?;
        Ok(tape.value(y).data()[0])
    }

    /// Scalar count of the circuit angles in one quantum block.
    pub fn quantum_block_params(&self, block: &str) -> Option<usize> {
        self.params.get(&format!("{block}.vqc")).map(|b| b.values.len())
    }
}
