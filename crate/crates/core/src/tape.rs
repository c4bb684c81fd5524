//! Reverse-mode automatic differentiation over small dense tensors.
//!
//! Operations are recorded on a [`Tape`] in evaluation order; [`Tape::backward`]
//! walks the records in reverse and accumulates vector-Jacobian products.
//! Circuit evaluations enter the graph through [`Tape::quantum_node`], whose
//! backward pass is the parameter-shift gradient rather than an adjoint.

use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::quantum::vqc::{encode_for, vqc_forward, vqc_grad, VqcConfig, VqcParams};

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::vector(vec![value])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Gelu,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Affine { x: Var, w: Var, b: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    OneMinus(Var),
    Scale(Var, f64),
    Mask(Var, Vec<f64>),
    Pointwise(Var, Activation),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, inv_std: f64 },
    Concat(Vec<Var>),
    Quantum { config: VqcConfig, params: Var, input: Var },
    Mse { pred: Var, target: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Append-only record of a computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Gelu => x * std_normal_cdf(x),
        }
    }

    /// Derivative given the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Gelu => std_normal_cdf(x) + x * std_normal_pdf(x),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if value.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{op:?}").chars().take(40).collect()));
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A trainable leaf; gradients are reported for it.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn data(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value.data
    }

    fn vec_len(&self, v: Var, what: &str) -> Result<usize> {
        let t = self.value(v);
        if t.shape.len() != 1 {
            return Err(Error::Shape(format!("{what} must be a vector, got shape {:?}", t.shape)));
        }
        Ok(t.shape[0])
    }

    /// `w x + b` with `w` shaped `[out, in]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let n_in = self.vec_len(x, "affine input")?;
        let n_out = self.vec_len(b, "affine bias")?;
        if self.value(w).shape != [n_out, n_in] {
            return Err(Error::Shape(format!(
                "affine weight {:?} for input {n_in} and bias {n_out}",
                self.value(w).shape
            )));
        }
        let (xd, wd, bd) = (self.data(x), self.data(w), self.data(b));
        let out: Vec<f64> = (0..n_out)
            .map(|r| {
                let row = &wd[r * n_in..(r + 1) * n_in];
                row.iter().zip(xd).fold(bd[r], |acc, (a, b)| acc + a * b)
            })
            .collect();
        self.push(Tensor::vector(out), Op::Affine { x, w, b }, &[x, w, b])
    }

    fn same_shape(&self, a: Var, b: Var) -> Result<()> {
        if self.value(a).shape != self.value(b).shape {
            return Err(Error::Shape(format!(
                "elementwise operands {:?} and {:?}",
                self.value(a).shape,
                self.value(b).shape
            )));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        Tensor {
            shape: self.value(a).shape.clone(),
            data: self.data(a).iter().zip(self.data(b)).map(|(x, y)| f(*x, *y)).collect(),
        }
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.value(a).shape.clone(),
            data: self.data(a).iter().map(|x| f(*x)).collect(),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let v = self.zip_with(a, b, |x, y| x + y);
        self.push(v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let v = self.zip_with(a, b, |x, y| x - y);
        self.push(v, Op::Sub(a, b), &[a, b])
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let v = self.zip_with(a, b, |x, y| x * y);
        self.push(v, Op::Mul(a, b), &[a, b])
    }

    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        let v = self.map(a, |x| 1.0 - x);
        self.push(v, Op::OneMinus(a), &[a])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let v = self.map(a, |x| x * factor);
        self.push(v, Op::Scale(a, factor), &[a])
    }

    /// Multiplies by a fixed, non-differentiable mask (dropout).
    pub fn mask(&mut self, a: Var, mask: Vec<f64>) -> Result<Var> {
        if mask.len() != self.value(a).len() {
            return Err(Error::Shape(format!(
                "mask of length {} on {} values",
                mask.len(),
                self.value(a).len()
            )));
        }
        let data = self.data(a).iter().zip(&mask).map(|(x, m)| x * m).collect();
        let v = Tensor {
            shape: self.value(a).shape.clone(),
            data,
        };
        self.push(v, Op::Mask(a, mask), &[a])
    }

    pub fn pointwise(&mut self, a: Var, act: Activation) -> Result<Var> {
        let v = self.map(a, |x| act.apply(x));
        self.push(v, Op::Pointwise(a, act), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.pointwise(a, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.pointwise(a, Activation::Tanh)
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        self.pointwise(a, Activation::Gelu)
    }

    /// Layer normalization with population variance.
    pub fn layernorm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let d = self.vec_len(x, "layernorm input")?;
        if d < 2 {
            return Err(Error::Validation(format!("layernorm over {d} < 2 features")));
        }
        self.same_shape(x, gain)?;
        self.same_shape(x, bias)?;
        let xd = self.data(x);
        let mean = xd.iter().sum::<f64>() / d as f64;
        let var = xd.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let inv_std = 1.0 / (var + eps).sqrt();
        let xhat: Vec<f64> = xd.iter().map(|v| (v - mean) * inv_std).collect();
        let out = xhat
            .iter()
            .zip(self.data(gain).iter().zip(self.data(bias)))
            .map(|(h, (g, b))| h * g + b)
            .collect();
        self.push(
            Tensor::vector(out),
            Op::LayerNorm { x, gain, bias, xhat, inv_std },
            &[x, gain, bias],
        )
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        for &p in parts {
            self.vec_len(p, "concat operand")?;
            data.extend_from_slice(self.data(p));
        }
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()), parts)
    }

    /// Circuit evaluation on the angle-encoded `input`, differentiable in both
    /// `params` and `input`.
    pub fn quantum_node(&mut self, config: &VqcConfig, params: Var, input: Var) -> Result<Var> {
        let vqc_params = VqcParams::from_vec(config, self.data(params).to_vec())?;
        let enc = encode_for(config, self.data(input))?;
        let out = vqc_forward(config, &vqc_params, &enc)?;
        self.push(
            Tensor::vector(out),
            Op::Quantum { config: *config, params, input },
            &[params, input],
        )
    }

    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape(pred, target)?;
        let n = self.value(pred).len();
        if n == 0 {
            return Err(Error::Validation("mean squared error over zero samples".into()));
        }
        let sum: f64 = self.data(pred).iter().zip(self.data(target)).map(|(p, t)| (p - t).powi(2)).sum();
        self.push(Tensor::scalar(sum / n as f64), Op::Mse { pred, target }, &[pred, target])
    }

    /// Gradients of a scalar `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        self.backward_seeded(root, 1.0)
    }

    /// As [`Tape::backward`] with the upstream gradient of `root` set to `seed`.
    pub fn backward_seeded(&self, root: Var, seed: f64) -> Result<Gradients> {
        if self.value(root).len() != 1 {
            return Err(Error::Validation(format!(
                "backward from a non-scalar root of shape {:?}",
                self.value(root).shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![seed]);
        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if node.needs_grad {
                self.propagate(node, &g, &mut grads)?;
            }
            grads[id] = Some(g);
        }
        grads.resize(self.nodes.len(), None);
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let send = |grads: &mut [Option<Vec<f64>>], to: Var, contrib: Vec<f64>| {
            if !self.nodes[to.0].needs_grad {
                return;
            }
            match &mut grads[to.0] {
                Some(acc) => acc.iter_mut().zip(contrib).for_each(|(a, c)| *a += c),
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let (xd, wd) = (self.data(*x), self.data(*w));
                let n_in = xd.len();
                let mut dx = vec![0.0; n_in];
                let mut dw = vec![0.0; wd.len()];
                for (r, gr) in g.iter().enumerate() {
                    let row = &wd[r * n_in..(r + 1) * n_in];
                    for c in 0..n_in {
                        dx[c] += row[c] * gr;
                        dw[r * n_in + c] = gr * xd[c];
                    }
                }
                send(grads, *x, dx);
                send(grads, *w, dw);
                send(grads, *b, g.to_vec());
            }
            Op::Add(a, b) => {
                send(grads, *a, g.to_vec());
                send(grads, *b, g.to_vec());
            }
            Op::Sub(a, b) => {
                send(grads, *a, g.to_vec());
                send(grads, *b, g.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let da = g.iter().zip(self.data(*b)).map(|(g, y)| g * y).collect();
                let db = g.iter().zip(self.data(*a)).map(|(g, x)| g * x).collect();
                send(grads, *a, da);
                send(grads, *b, db);
            }
            Op::OneMinus(a) => send(grads, *a, g.iter().map(|v| -v).collect()),
            Op::Scale(a, f) => send(grads, *a, g.iter().map(|v| v * f).collect()),
            Op::Mask(a, m) => send(grads, *a, g.iter().zip(m).map(|(g, m)| g * m).collect()),
            Op::Pointwise(a, act) => {
                let d = g
                    .iter()
                    .zip(self.data(*a).iter().zip(&node.value.data))
                    .map(|(g, (x, y))| g * act.derivative(*x, *y))
                    .collect();
                send(grads, *a, d);
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let gd = self.data(*gain);
                let d = xhat.len() as f64;
                let dxhat: Vec<f64> = g.iter().zip(gd).map(|(g, w)| g * w).collect();
                let sum: f64 = dxhat.iter().sum();
                let dot: f64 = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum();
                let dx = dxhat
                    .iter()
                    .zip(xhat)
                    .map(|(dh, h)| inv_std / d * (d * dh - sum - h * dot))
                    .collect();
                send(grads, *x, dx);
                send(grads, *gain, g.iter().zip(xhat).map(|(g, h)| g * h).collect());
                send(grads, *bias, g.to_vec());
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = self.value(*p).len();
                    send(grads, *p, g[offset..offset + n].to_vec());
                    offset += n;
                }
            }
            Op::Quantum { config, params, input } => {
                if g.iter().all(|v| *v == 0.0) {
                    return Ok(());
                }
                let v = self.data(*input);
                let vqc_params = VqcParams::from_vec(config, self.data(*params).to_vec())?;
                let enc = encode_for(config, v)?;
                let grad = vqc_grad(config, &vqc_params, &enc, g)?;
                let dv = grad.chain_to_input(v);
                send(grads, *params, grad.params);
                send(grads, *input, dv);
            }
            Op::Mse { pred, target } => {
                let n = node_len(self, *pred) as f64;
                let d: Vec<f64> = self
                    .data(*pred)
                    .iter()
                    .zip(self.data(*target))
                    .map(|(p, t)| 2.0 * (p - t) / n * g[0])
                    .collect();
                send(grads, *target, d.iter().map(|v| -v).collect());
                send(grads, *pred, d);
            }
        }
        Ok(())
    }
}

fn node_len(tape: &Tape, v: Var) -> usize {
    tape.value(v).len()
}

/// Result of a backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when `v` is not on any path to the root.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `v`, zero-filled to `len` when untouched.
    pub fn or_zeros(&self, v: Var, len: usize) -> Vec<f64> {
        self.get(v).map_or_else(|| vec![0.0; len], <[f64]>::to_vec)
    }
}
