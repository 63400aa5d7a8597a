use std::collections::HashMap;

use super::graph::Gradients;
use super::network::Network;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// `param ← param − lr·grad` for every gradient entry.
///
/// The whole step is rejected before any parameter changes if a gradient
/// is non-finite or names a parameter the network does not have.
pub fn sgd_step(net: &mut Network, grads: &Gradients, lr: f64) -> Result<()> {
    validate(net, grads)?;
    for (name, g) in grads.iter() {
        let p = net.parameter_mut(name).expect("validated above");
        for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
            *w -= lr * d;
        }
    }
    Ok(())
}

fn validate(net: &mut Network, grads: &Gradients) -> Result<()> {
    for (name, g) in grads.iter() {
        let p = net
            .parameter_mut(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_owned()))?;
        if !p.same_shape(g) {
            return Err(Error::Shape {
                op: "sgd_step",
                detail: format!("{name}: {:?} vs {:?}", p.shape(), g.shape()),
            });
        }
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient(name.to_owned()));
        }
    }
    Ok(())
}

/// SGD with optional heavy-ball momentum: `v ← μv + g; p ← p − lr·v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    lr: f64,
    momentum: f64,
    velocity: HashMap<String, Tensor>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be > 0, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {momentum}")));
        }
        Ok(Self {
            lr,
            momentum,
            velocity: HashMap::new(),
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        if self.momentum == 0.0 {
            return sgd_step(net, grads, self.lr);
        }
        validate(net, grads)?;
        for (name, g) in grads.iter() {
            let v = self
                .velocity
                .entry(name.to_owned())
                .or_insert_with(|| Tensor::zeros(g.rows(), g.cols()));
            for (vi, gi) in v.data_mut().iter_mut().zip(g.data()) {
                *vi = self.momentum * *vi + gi;
            }
            let p = net.parameter_mut(name).expect("validated above");
            for (w, vi) in p.data_mut().iter_mut().zip(v.data()) {
                *w -= self.lr * vi;
            }
        }
        Ok(())
    }
}
