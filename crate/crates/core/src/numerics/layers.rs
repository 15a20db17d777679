//! Layer primitives with hand-derived backward rules.

use serde::{Deserialize, Serialize};

use super::{ParamSet, SeededRng, Tensor};
use crate::error::{Error, Result};

/// Lower/upper clamp applied to sigmoid outputs so logarithms stay finite.
pub const SIGMOID_CLAMP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Softplus,
    Log1p,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn clamped_sigmoid(x: f64) -> f64 {
    sigmoid(x).clamp(SIGMOID_CLAMP, 1.0 - SIGMOID_CLAMP)
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for positive `y`.
pub fn softplus_inverse(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

fn sigmoid_is_clamped(pre: f64) -> bool {
    let s = sigmoid(pre);
    !(SIGMOID_CLAMP..=1.0 - SIGMOID_CLAMP).contains(&s)
}

/// `out = x·W + b`, with `b` broadcast over rows.
pub fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if x.shape().len() != 2
        || w.shape().len() != 2
        || x.shape()[1] != w.shape()[0]
        || b.shape() != [w.shape()[1]]
    {
        return Err(Error::Dimension {
            op: "affine",
            left: x.shape().to_vec(),
            right: [w.shape(), b.shape()].concat(),
        });
    }
    let mut out = x.matmul(w)?;
    let n = w.shape()[1];
    for row in out.data_mut().chunks_exact_mut(n) {
        for (o, bv) in row.iter_mut().zip(b.data()) {
            *o += bv;
        }
    }
    out.ensure_finite("affine")?;
    Ok(out)
}

/// Gradients of [`affine`] for upstream gradient `g`: `(dx, dW, db)`.
pub fn affine_backward(x: &Tensor, w: &Tensor, g: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let dx = g.matmul_nt(w)?;
    let dw = x.matmul_tn(g)?;
    let db = g.sum_rows();
    Ok((dx, dw, db))
}

pub fn activate(x: &Tensor, kind: Activation) -> Result<Tensor> {
    let out = match kind {
        Activation::Identity => x.clone(),
        Activation::Relu => x.map(|v| v.max(0.0)),
        Activation::Sigmoid => x.map(clamped_sigmoid),
        Activation::Softplus => x.map(softplus),
        Activation::Log1p => {
            if let Some(bad) = x.data().iter().find(|&&v| v <= -1.0) {
                return Err(Error::Domain(format!(
                    "log1p requires inputs > -1, got {bad}"
                )));
            }
            x.map(f64::ln_1p)
        }
    };
    out.ensure_finite("activate")?;
    Ok(out)
}

/// Gradient through an activation given its input `pre` and upstream `g`.
pub fn activate_backward(pre: &Tensor, g: &Tensor, kind: Activation) -> Result<Tensor> {
    match kind {
        Activation::Identity => Ok(g.clone()),
        Activation::Relu => pre.zip_map(g, |p, g| if p > 0.0 { g } else { 0.0 }),
        Activation::Sigmoid => pre.zip_map(g, |p, g| {
            if sigmoid_is_clamped(p) {
                0.0
            } else {
                let s = sigmoid(p);
                g * s * (1.0 - s)
            }
        }),
        Activation::Softplus => pre.zip_map(g, |p, g| g * sigmoid(p)),
        Activation::Log1p => pre.zip_map(g, |p, g| g / (1.0 + p)),
    }
}

/// Uniform Glorot initialisation in `±√(6 / (fan_in + fan_out))`.
pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut SeededRng) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.uniform_range(-a, a))
        .collect();
    Tensor::from_parts(vec![fan_in, fan_out], data)
}

/// Fully connected stack: hidden layers share one activation, the last layer
/// has its own.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub prefix: String,
    /// Layer widths including input and output, e.g. `[d, h, h, out]`.
    pub widths: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
    /// Initial value of every output-layer bias.
    #[serde(default)]
    pub output_bias: f64,
}

/// Intermediate values of one forward pass, consumed by [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct MlpTrace {
    inputs: Vec<Tensor>,
    pre: Vec<Tensor>,
    pub output: Tensor,
}

impl Mlp {
    pub fn new(prefix: &str, widths: Vec<usize>, hidden: Activation, output: Activation) -> Self {
        Mlp {
            prefix: prefix.to_string(),
            widths,
            hidden,
            output,
            output_bias: 0.0,
        }
    }

    pub fn with_output_bias(mut self, b: f64) -> Self {
        self.output_bias = b;
        self
    }

    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("widths")
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}.{layer}.weight", self.prefix)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}.{layer}.bias", self.prefix)
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.depth() {
            self.output
        } else {
            self.hidden
        }
    }

    /// Registers freshly initialised weights under this network's prefix.
    pub fn init(&self, params: &mut ParamSet, rng: &mut SeededRng) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(Error::Config(format!(
                "network {} needs at least two positive widths, got {:?}",
                self.prefix, self.widths
            )));
        }
        for l in 0..self.depth() {
            let (i, o) = (self.widths[l], self.widths[l + 1]);
            params.insert(self.weight_name(l), glorot(i, o, rng))?;
            let b = if l + 1 == self.depth() {
                self.output_bias
            } else {
                0.0
            };
            params.insert(self.bias_name(l), Tensor::filled(&[o], b))?;
        }
        Ok(())
    }

    pub fn forward(&self, params: &ParamSet, x: &Tensor) -> Result<MlpTrace> {
        let mut inputs = Vec::with_capacity(self.depth());
        let mut pre = Vec::with_capacity(self.depth());
        let mut h = x.clone();
        for l in 0..self.depth() {
            let z = affine(
                &h,
                params.get(&self.weight_name(l)),
                params.get(&self.bias_name(l)),
            )?;
            let a = activate(&z, self.activation(l))?;
            inputs.push(h);
            pre.push(z);
            h = a;
        }
        Ok(MlpTrace {
            inputs,
            pre,
            output: h,
        })
    }

    pub fn predict(&self, params: &ParamSet, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(params, x)?.output)
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the input.
    pub fn backward(
        &self,
        params: &mut ParamSet,
        trace: &MlpTrace,
        g_out: &Tensor,
    ) -> Result<Tensor> {
        let mut g = g_out.clone();
        for l in (0..self.depth()).rev() {
            let g_pre = activate_backward(&trace.pre[l], &g, self.activation(l))?;
            let w_name = self.weight_name(l);
            let (dx, dw, db) = affine_backward(&trace.inputs[l], params.get(&w_name), &g_pre)?;
            params.accumulate(&w_name, &dw)?;
            params.accumulate(&self.bias_name(l), &db)?;
            g = dx;
        }
        Ok(g)
    }
}
