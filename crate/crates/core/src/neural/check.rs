//! Central finite-difference gradients, the reference the analytic
//! gradients are checked against.

use std::collections::BTreeMap;

use super::graph::Gradients;
use super::network::Network;
use super::tensor::Tensor;
use crate::error::Result;

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Magnitudes below this floor are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-6;

/// Something holding named, perturbable tensors.
pub trait ParamStore {
    fn param_names(&self) -> Vec<String>;
    fn param_mut(&mut self, name: &str) -> Option<&mut Tensor>;
}

impl ParamStore for Network {
    fn param_names(&self) -> Vec<String> {
        self.parameters().map(|(n, _)| n).collect()
    }

    fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.parameter_mut(name)
    }
}

/// Free-standing named tensors, handy for checking single operations.
#[derive(Debug, Clone, Default)]
pub struct ParamMap(pub BTreeMap<String, Tensor>);

impl ParamStore for ParamMap {
    fn param_names(&self) -> Vec<String> {
        self.0.keys().cloned().collect()
    }

    fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.0.get_mut(name)
    }
}

/// Numerical gradient of `f` with respect to every parameter in `store`.
///
/// Each entry is perturbed by `±step` in turn and restored afterwards.
pub fn numeric_gradients<S, F>(store: &mut S, step: f64, f: F) -> Result<Gradients>
where
    S: ParamStore,
    F: FnMut(&S) -> Result<f64>,
{
    numeric_gradients_with(store, step, Stencil::Central2, f)
}

/// Central-difference stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(x+h) − f(x−h)) / 2h`, error O(h²).
    Central2,
    /// `(8[f(x+h) − f(x−h)] − [f(x+2h) − f(x−2h)]) / 12h`, error O(h⁴).
    /// Needed where the objective is sharply curved, e.g. a correlation
    /// penalty over nearly constant feature rows.
    Central4,
}

pub fn numeric_gradients_with<S, F>(store: &mut S, step: f64, stencil: Stencil, mut f: F) -> Result<Gradients>
where
    S: ParamStore,
    F: FnMut(&S) -> Result<f64>,
{
    let mut out = Gradients::default();
    for name in store.param_names() {
        let len = store.param_mut(&name).map_or(0, |t| t.len());
        let mut g = Vec::with_capacity(len);
        for i in 0..len {
            let original = store.param_mut(&name).expect("name listed").data()[i];
            let mut diff = |h: f64| -> Result<f64> {
                set(store, &name, i, original + h);
                let plus = f(store)?;
                set(store, &name, i, original - h);
                let minus = f(store)?;
                set(store, &name, i, original);
                Ok(plus - minus)
            };
            g.push(match stencil {
                Stencil::Central2 => diff(step)? / (2.0 * step),
                Stencil::Central4 => (8.0 * diff(step)? - diff(2.0 * step)?) / (12.0 * step),
            });
        }
        let shape = store.param_mut(&name).expect("name listed").shape().to_vec();
        out.insert(name, Tensor::new(&shape, g)?);
    }
    Ok(out)
}

fn set<S: ParamStore>(store: &mut S, name: &str, i: usize, v: f64) {
    store.param_mut(name).expect("name listed").data_mut()[i] = v;
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Largest entry-wise relative error over the parameters present in `numeric`.
/// A parameter missing from `analytic` counts as a zero gradient.
pub fn max_relative_error(analytic: &Gradients, numeric: &Gradients) -> f64 {
    let mut worst: f64 = 0.0;
    for (name, n) in numeric.iter() {
        match analytic.get(name) {
            Some(a) => {
                for (&x, &y) in a.data().iter().zip(n.data()) {
                    worst = worst.max(relative_error(x, y));
                }
            }
            None => {
                for &y in n.data() {
                    worst = worst.max(relative_error(0.0, y));
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourth_order_stencil_is_sharper() {
        let mut p = ParamMap::default();
        p.0.insert("x".into(), Tensor::scalar(1.0));
        let f = |p: &ParamMap| Ok(p.0["x"].data()[0].powi(5));
        let err = |s| (numeric_gradients_with(&mut p.clone(), 1e-2, s, f).unwrap().get("x").unwrap().data()[0] - 5.0f64).abs();
        let (e2, e4) = (err(Stencil::Central2), err(Stencil::Central4));
        assert!(e2 > 1e-3 && e4 < 1e-6, "{e2} {e4}");
    }
}
