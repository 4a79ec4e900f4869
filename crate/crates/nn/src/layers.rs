use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{ParamTree, Tensor};

pub const LAYERNORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    /// `x·sigmoid(x)`
    Swish,
    Tanh,
    Identity,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Swish => x * sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative at input `x` with output `y = apply(x)`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Swish => {
                let s = sigmoid(x);
                s + y * (1.0 - s)
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        input: usize,
        output: usize,
        activation: Activation,
    },
    /// `[x ‖ act(layernorm(W x + b))]`, width `input + growth`.
    DensenetBlock {
        input: usize,
        growth: usize,
        activation: Activation,
    },
    Layernorm {
        width: usize,
    },
    Activation {
        width: usize,
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn input_width(&self) -> usize {
        match *self {
            LayerSpec::Dense { input, .. } | LayerSpec::DensenetBlock { input, .. } => input,
            LayerSpec::Layernorm { width } | LayerSpec::Activation { width, .. } => width,
        }
    }

    pub fn output_width(&self) -> usize {
        match *self {
            LayerSpec::Dense { output, .. } => output,
            LayerSpec::DensenetBlock { input, growth, .. } => input + growth,
            LayerSpec::Layernorm { width } | LayerSpec::Activation { width, .. } => width,
        }
    }
}

/// Checks that consecutive layers agree on widths.
pub fn check_stack(specs: &[LayerSpec]) -> Result<()> {
    for w in specs.windows(2) {
        if w[0].output_width() != w[1].input_width() {
            return Err(shape(format!(
                "layer outputs {} but the next expects {}",
                w[0].output_width(),
                w[1].input_width()
            )));
        }
    }
    Ok(())
}

/// Stack of dense layers `widths[0] → … → widths[n]` with `hidden` on every
/// layer but the last, which uses `last`.
pub fn mlp(widths: &[usize], hidden: Activation, last: Activation) -> Vec<LayerSpec> {
    let n = widths.len().saturating_sub(1);
    (0..n)
        .map(|i| LayerSpec::Dense {
            input: widths[i],
            output: widths[i + 1],
            activation: if i + 1 == n { last } else { hidden },
        })
        .collect()
}

/// `blocks` densenet blocks of width `growth` on top of `input`.
pub fn densenet(input: usize, blocks: usize, growth: usize, activation: Activation) -> Vec<LayerSpec> {
    (0..blocks).map(|i| LayerSpec::DensenetBlock { input: input + i * growth, growth, activation }).collect()
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
}

/// Adds parameters for `specs` under `prefix/layer{i}/…`. Weights are
/// `fan_in × fan_out` with uniform `±√(6/(fan_in+fan_out))` entries; biases
/// start at zero, layernorm gains at one. With `zero_last`, the final dense
/// layer starts at zero.
pub fn init_params<R: Rng + ?Sized>(
    specs: &[LayerSpec],
    prefix: &str,
    rng: &mut R,
    zero_last: bool,
    tree: &mut ParamTree,
) -> Result<()> {
    check_stack(specs)?;
    let last_dense = specs.iter().rposition(|s| matches!(s, LayerSpec::Dense { .. }));
    for (i, spec) in specs.iter().enumerate() {
        let p = format!("{prefix}/layer{i}");
        match *spec {
            LayerSpec::Dense { input, output, .. } => {
                let w = if zero_last && Some(i) == last_dense {
                    vec![0.0; input * output]
                } else {
                    uniform(rng, input * output, (6.0 / (input + output) as f64).sqrt())
                };
                tree.insert(format!("{p}/weight"), Tensor::new(vec![input, output], w)?)?;
                tree.insert(format!("{p}/bias"), Tensor::zeros(vec![output]))?;
            }
            LayerSpec::DensenetBlock { input, growth, .. } => {
                let w = uniform(rng, input * growth, (6.0 / (input + growth) as f64).sqrt());
                tree.insert(format!("{p}/weight"), Tensor::new(vec![input, growth], w)?)?;
                tree.insert(format!("{p}/bias"), Tensor::zeros(vec![growth]))?;
                tree.insert(format!("{p}/gain"), Tensor::new(vec![growth], vec![1.0; growth])?)?;
                tree.insert(format!("{p}/shift"), Tensor::zeros(vec![growth]))?;
            }
            LayerSpec::Layernorm { width } => {
                tree.insert(format!("{p}/gain"), Tensor::new(vec![width], vec![1.0; width])?)?;
                tree.insert(format!("{p}/shift"), Tensor::zeros(vec![width]))?;
            }
            LayerSpec::Activation { .. } => {}
        }
    }
    Ok(())
}

/// Runs `input` (batch × width) through the stack, reading parameters of
/// `tree` recorded under `label`.
pub fn forward(
    specs: &[LayerSpec],
    label: &str,
    tree: &ParamTree,
    prefix: &str,
    input: Var,
    tape: &mut Tape,
) -> Result<Var> {
    let mut x = input;
    for (i, spec) in specs.iter().enumerate() {
        let width = tape.dims(x).1;
        if width != spec.input_width() {
            return Err(shape(format!("layer {i} of {prefix} expects width {}, got {width}", spec.input_width())));
        }
        let p = format!("{prefix}/layer{i}");
        x = match *spec {
            LayerSpec::Dense { activation, .. } => {
                let w = tape.param(label, tree, &format!("{p}/weight"))?;
                let b = tape.param(label, tree, &format!("{p}/bias"))?;
                let h = tape.matmul(x, w)?;
                let h = tape.add_row(h, b)?;
                tape.activation(h, activation)
            }
            LayerSpec::DensenetBlock { activation, .. } => {
                let w = tape.param(label, tree, &format!("{p}/weight"))?;
                let b = tape.param(label, tree, &format!("{p}/bias"))?;
                let g = tape.param(label, tree, &format!("{p}/gain"))?;
                let s = tape.param(label, tree, &format!("{p}/shift"))?;
                let h = tape.matmul(x, w)?;
                let h = tape.add_row(h, b)?;
                let h = tape.layernorm(h, g, s, LAYERNORM_EPS)?;
                let h = tape.activation(h, activation);
                tape.concat(x, h)?
            }
            LayerSpec::Layernorm { .. } => {
                let g = tape.param(label, tree, &format!("{p}/gain"))?;
                let s = tape.param(label, tree, &format!("{p}/shift"))?;
                tape.layernorm(x, g, s, LAYERNORM_EPS)?
            }
            LayerSpec::Activation { activation, .. } => tape.activation(x, activation),
        };
    }
    Ok(x)
}
