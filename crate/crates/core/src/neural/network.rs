use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative given the pre-activation `x` and output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
            Activation::Sigmoid => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            0 => Activation::Identity,
            1 => Activation::Relu,
            2 => Activation::Tanh,
            3 => Activation::Sigmoid,
            _ => return None,
        })
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Fully connected layer computing `act(x·W + b)` with `W` of shape `in×out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let w = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            weight: Tensor::from_parts(inputs, outputs, w),
            bias: Tensor::zeros(1, outputs),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }
}

/// Output and tapped hidden representation of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct NetOutput {
    pub output: NodeId,
    pub features: NodeId,
}

/// Multilayer perceptron whose parameters are named `<name>.<layer>.w` and
/// `<name>.<layer>.b` when bound into a [`Graph`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    name: String,
    layers: Vec<Dense>,
    feature_tap: usize,
}

impl Network {
    pub fn new(name: impl Into<String>, layers: Vec<Dense>, feature_tap: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Dimension {
                    expected: pair[0].outputs(),
                    actual: pair[1].inputs(),
                });
            }
        }
        for l in &layers {
            if l.bias.rows() != 1 || l.bias.cols() != l.outputs() {
                return Err(Error::Dimension {
                    expected: l.outputs(),
                    actual: l.bias.len(),
                });
            }
        }
        if feature_tap >= layers.len() {
            return Err(Error::Config(format!(
                "feature tap {feature_tap} out of range for {} layers",
                layers.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            layers,
            feature_tap,
        })
    }

    /// Builds an MLP `widths[0] → … → widths[last]` with `hidden` activation on
    /// every layer but the last. The feature tap is the last hidden layer.
    pub fn mlp<R: Rng + ?Sized>(
        name: impl Into<String>,
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("invalid layer widths {widths:?}")));
        }
        let count = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 1 == count { output } else { hidden };
                Dense::init(w[0], w[1], act, rng)
            })
            .collect();
        Self::new(name, layers, count.saturating_sub(2))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn feature_tap(&self) -> usize {
        self.feature_tap
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn feature_dim(&self) -> usize {
        self.layers[self.feature_tap].outputs()
    }

    fn param_names(&self, layer: usize) -> (String, String) {
        (
            format!("{}.{layer}.w", self.name),
            format!("{}.{layer}.b", self.name),
        )
    }

    pub fn parameters(&self) -> impl Iterator<Item = (String, &Tensor)> {
        self.layers.iter().enumerate().flat_map(move |(i, l)| {
            let (w, b) = self.param_names(i);
            [(w, &l.weight), (b, &l.bias)]
        })
    }

    pub fn parameter_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let rest = name.strip_prefix(&self.name)?.strip_prefix('.')?;
        let (idx, kind) = rest.split_once('.')?;
        let layer = self.layers.get_mut(idx.parse::<usize>().ok()?)?;
        match kind {
            "w" => Some(&mut layer.weight),
            "b" => Some(&mut layer.bias),
            _ => None,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Records a forward pass of `input` (an `n×in` node) in `graph`.
    pub fn forward(&self, graph: &mut Graph, input: NodeId) -> Result<NetOutput> {
        let cols = graph.value(input).cols();
        if cols != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: cols,
            });
        }
        let mut x = input;
        let mut features = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let (wn, bn) = self.param_names(i);
            let w = graph.param(&wn, &layer.weight);
            let b = graph.param(&bn, &layer.bias);
            let z = graph.matmul(x, w)?;
            let z = graph.add_row(z, b)?;
            x = match layer.activation {
                Activation::Identity => z,
                act => graph.activate(z, act)?,
            };
            if i == self.feature_tap {
                features = Some(x);
            }
        }
        Ok(NetOutput {
            output: x,
            features: features.expect("feature tap is validated on construction"),
        })
    }

    /// Evaluates the network without recording gradients.
    pub fn predict(&self, batch: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let x = g.constant(batch.clone());
        let out = self.forward(&mut g, x)?;
        Ok((g.value(out.output).clone(), g.value(out.features).clone()))
    }
}
