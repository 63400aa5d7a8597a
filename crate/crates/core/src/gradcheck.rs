//! Finite-difference verification of the training gradients.
//!
//! For each loss variant a tiny generator (2→16→8→2) and discriminator
//! (2→16→8→1) are built, tracker history is pre-seeded so the moving-average
//! blend is exercised, and both the generator and discriminator gradients
//! are compared with fourth-order central differences at the standard step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{sample_batch, DatasetHandle, DatasetKind};
use crate::error::Result;
use crate::kernel::KernelSpec;
use crate::loss::{self, LossConfig};
use crate::neural::check::{max_relative_error, numeric_gradients_with, Stencil, FD_STEP};
use crate::neural::{Activation, Network, Tensor};
use crate::trainer::{discriminator_objective, generator_objective, History, LatentSampler};

/// Pass threshold on the maximum relative error.
pub const TOLERANCE: f64 = 1e-4;

const BATCH: usize = 8;
const FEATURE_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub loss: LossConfig,
}

/// The standard suite: plain and every kernel without the correlation
/// penalty, then plain, rbf and exp with it.
pub fn default_variants(alpha: f64, beta: f64) -> Vec<Variant> {
    let gamma = 1.0 / FEATURE_DIM as f64;
    let kernels: [(&str, Option<KernelSpec>); 5] = [
        ("plain", None),
        ("linear", Some(KernelSpec::Linear)),
        ("rbf", Some(KernelSpec::Rbf { gamma })),
        ("exp", Some(KernelSpec::Exp { gamma })),
        ("poly", Some(KernelSpec::Polynomial { degree: 2, coef0: 1.0 })),
    ];
    let mut out = Vec::new();
    for with_rg in [false, true] {
        for (name, kernel) in &kernels {
            if with_rg && !matches!(*name, "plain" | "rbf" | "exp") {
                continue;
            }
            out.push(Variant {
                name: if with_rg { format!("{name}+rg") } else { (*name).to_owned() },
                loss: LossConfig {
                    alpha,
                    beta: if with_rg { beta } else { 0.0 },
                    kernel: *kernel,
                    ..LossConfig::default()
                },
            });
        }
    }
    out
}

/// Narrows the suite. `kernel` is a kernel name or "none"/"plain"; a zero
/// `beta` keeps only variants without the penalty, a positive one only those
/// with it.
pub fn select_variants(kernel: Option<&str>, alpha: Option<f64>, beta: Option<f64>) -> Vec<Variant> {
    let wanted_beta = beta.filter(|b| *b > 0.0).unwrap_or(1.0);
    default_variants(alpha.unwrap_or(1.0), wanted_beta)
        .into_iter()
        .filter(|v| match kernel {
            None => true,
            Some("none") | Some("plain") => v.loss.kernel.is_none(),
            Some(k) => v.loss.kernel.is_some_and(|spec| spec.name() == k),
        })
        .filter(|v| match beta {
            None => true,
            Some(b) if b > 0.0 => v.loss.beta > 0.0,
            Some(_) => v.loss.beta == 0.0,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantResult {
    pub name: String,
    pub generator_error: f64,
    pub discriminator_error: f64,
}

impl VariantResult {
    pub fn max_error(&self) -> f64 {
        self.generator_error.max(self.discriminator_error)
    }

    pub fn passed(&self) -> bool {
        self.max_error() < TOLERANCE
    }
}

struct Fixture {
    g: Network,
    d: Network,
    y: Tensor,
    z: Tensor,
}

fn fixture(seed: u64) -> Result<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Network::mlp("g", &[2, 16, FEATURE_DIM, 2], Activation::Tanh, Activation::Identity, &mut rng)?;
    let d = Network::mlp("d", &[2, 16, FEATURE_DIM, 1], Activation::Tanh, Activation::Sigmoid, &mut rng)?;
    let y = sample_batch(&DatasetHandle::new(DatasetKind::Ring8), BATCH, &mut rng)?;
    let z = LatentSampler { dim: 2 }.sample(BATCH, &mut rng)?;
    Ok(Fixture { g, d, y, z })
}

/// Checks one variant. With `fault` the analytic generator gradient is
/// deliberately corrupted, which must make the check fail.
pub fn check_variant(v: &Variant, seed: u64, fault: bool) -> Result<VariantResult> {
    let Fixture { mut g, mut d, y, z } = fixture(seed)?;
    let cfg = &v.loss;

    // History from an unrelated earlier batch.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let y_old = sample_batch(&DatasetHandle::new(DatasetKind::Ring8), BATCH, &mut rng)?;
    let z_old = LatentSampler { dim: 2 }.sample(BATCH, &mut rng)?;
    let hist_real = loss::batch_manifold(cfg, &d.predict(&y_old)?.1)?;
    let hist_fake = loss::batch_manifold(cfg, &d.predict(&g.predict(&z_old)?.0)?.1)?;
    let hist = History {
        real: Some(&hist_real),
        fake: Some(&hist_fake),
    };

    let feat_real = d.predict(&y)?.1;
    let obj = generator_objective(cfg, false, &g, &d, &z, &feat_real, hist)?;
    let mut analytic = obj.graph.backward(obj.objective)?;
    analytic.retain_prefix("g.");
    if fault {
        if let Some(t) = analytic.get_mut("g.0.w") {
            t.data_mut()[0] += 1e-2;
        }
    }
    let numeric = numeric_gradients_with(&mut g, FD_STEP, Stencil::Central4, |g| {
        let o = generator_objective(cfg, false, g, &d, &z, &feat_real, hist)?;
        Ok(o.graph.scalar(o.objective))
    })?;
    let generator_error = max_relative_error(&analytic, &numeric);

    let x = g.predict(&z)?.0;
    let obj = discriminator_objective(cfg, false, &d, &y, &x, hist)?;
    let analytic = obj.graph.backward(obj.objective)?;
    let numeric = numeric_gradients_with(&mut d, FD_STEP, Stencil::Central4, |d| {
        let o = discriminator_objective(cfg, false, d, &y, &x, hist)?;
        Ok(o.graph.scalar(o.objective))
    })?;
    let discriminator_error = max_relative_error(&analytic, &numeric);

    Ok(VariantResult {
        name: v.name.clone(),
        generator_error,
        discriminator_error,
    })
}

pub fn run_suite(variants: &[Variant], seed: u64, fault: bool) -> Result<Vec<VariantResult>> {
    variants.iter().map(|v| check_variant(v, seed, fault)).collect()
}
