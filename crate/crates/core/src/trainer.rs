//! The training loop.
//!
//! Each step draws a real batch `Y` and a latent batch `Z`, forms `X = G(Z)`,
//! then
//!
//! 1. updates D on `BCE − L_G^final` (or plain BCE in baseline mode),
//! 2. recomputes representations with the updated D and advances the four
//!    moving averages (real/fake centroid and radius),
//! 3. updates G on `L_G^final` (or `−log D(G(z))` in baseline mode).
//!
//! In step 3 the blended statistics carry gradient only through the live
//! fake mini-batch; their values equal the freshly updated trackers.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{sample_batch, DatasetHandle, DatasetKind};
use crate::error::{Error, Result};
use crate::loss::{self, LossConfig, LossReport, TermNodes};
use crate::manifold::{ManifoldTracker, SphereManifold};
use crate::metrics::{self, CoverageThresholds, MetricsRow};
use crate::neural::{Activation, Graph, Network, NodeId, Sgd, Tensor};
use crate::regularizer;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub latent_dim: usize,
    pub lr_d: f64,
    pub lr_g: f64,
    /// Heavy-ball momentum shared by both optimizers; 0 gives plain SGD.
    pub momentum: f64,
    pub seed: u64,
    pub loss: LossConfig,
    /// Vanilla non-saturating GAN instead of manifold matching.
    pub baseline_mode: bool,
    pub d_steps_per_g: usize,
    pub g_hidden: Vec<usize>,
    /// Hidden widths of D; the last one is the representation size.
    pub d_hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            batch_size: 64,
            latent_dim: 4,
            lr_d: 0.05,
            lr_g: 0.05,
            momentum: 0.5,
            seed: 0,
            loss: LossConfig::default(),
            baseline_mode: false,
            d_steps_per_g: 1,
            g_hidden: vec![32, 32],
            d_hidden: vec![32, 32],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch size must be >= 2, got {}", self.batch_size)));
        }
        if self.latent_dim == 0 {
            return Err(Error::Config("latent dimension must be positive".into()));
        }
        for (name, lr) in [("lr_d", self.lr_d), ("lr_g", self.lr_g)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0, got {lr}")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.d_steps_per_g == 0 {
            return Err(Error::Config("d_steps_per_g must be positive".into()));
        }
        if self.g_hidden.contains(&0) || self.d_hidden.is_empty() || self.d_hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive and D needs a hidden layer".into()));
        }
        if !self.baseline_mode && self.d_hidden[self.d_hidden.len() - 1] < 2 {
            return Err(Error::Config("representation size must be >= 2".into()));
        }
        self.loss.validate()
    }

    /// Fresh generator for samples of dimension `dim`.
    pub fn build_generator<R: Rng + ?Sized>(&self, dim: usize, output: Activation, rng: &mut R) -> Result<Network> {
        let mut widths = vec![self.latent_dim];
        widths.extend(&self.g_hidden);
        widths.push(dim);
        Network::mlp("g", &widths, Activation::Relu, output, rng)
    }

    /// Fresh discriminator; its representation is the last hidden layer.
    pub fn build_discriminator<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Result<Network> {
        let mut widths = vec![dim];
        widths.extend(&self.d_hidden);
        widths.push(1);
        Network::mlp("d", &widths, Activation::Tanh, Activation::Sigmoid, rng)
    }
}

/// Generator output activation: unbounded for 2-D mixtures, `tanh` for images.
pub fn output_activation(kind: DatasetKind) -> Activation {
    if kind.is_synthetic() {
        Activation::Identity
    } else {
        Activation::Tanh
    }
}

/// Standard normal prior over latents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentSampler {
    pub dim: usize,
}

impl LatentSampler {
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Tensor> {
        let data = (0..n * self.dim).map(|_| rng.sample(StandardNormal)).collect();
        Tensor::new(&[n, self.dim], data)
    }
}

/// Hooks into the training loop, called in step order.
pub trait TrainObserver {
    fn on_d_step(&mut self, _step: usize) {}
    fn on_tracker_update(&mut self, _step: usize, _real: &SphereManifold, _fake: &SphereManifold) {}
    fn on_g_step(&mut self, _step: usize) {}
    /// Called after each completed step; an error stops training.
    fn on_step_end(&mut self, _step: usize, _report: &LossReport, _g: &Network, _d: &Network) -> Result<()> {
        Ok(())
    }
}

struct NoObserver;
impl TrainObserver for NoObserver {}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub generator: Network,
    pub discriminator: Network,
    pub history: Vec<LossReport>,
}

pub fn train(cfg: &TrainConfig, data: &DatasetHandle) -> Result<TrainOutput> {
    train_with_observer(cfg, data, &mut NoObserver)
}

fn abort_on_non_finite(step: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(term) | Error::NonFiniteGradient(term) => Error::NumericalAbort { step, term },
        other => other,
    }
}

pub fn train_with_observer(cfg: &TrainConfig, data: &DatasetHandle, obs: &mut dyn TrainObserver) -> Result<TrainOutput> {
    cfg.validate()?;
    let dim = data.dim();
    if dim == 0 {
        return Err(Error::NotLoaded);
    }
    let mut init_rng = rng::stream(cfg.seed, Stream::Init);
    let mut data_rng = rng::stream(cfg.seed, Stream::Data);
    let mut latent_rng = rng::stream(cfg.seed, Stream::Latent);
    let mut g = cfg.build_generator(dim, output_activation(data.kind()), &mut init_rng)?;
    let mut d = cfg.build_discriminator(dim, &mut init_rng)?;
    let mut opt_g = Sgd::new(cfg.lr_g, cfg.momentum)?;
    let mut opt_d = Sgd::new(cfg.lr_d, cfg.momentum)?;
    let mut real_tracker = ManifoldTracker::new(cfg.loss.delta)?;
    let mut fake_tracker = ManifoldTracker::new(cfg.loss.delta)?;
    let latent = LatentSampler { dim: cfg.latent_dim };
    let mut history = Vec::with_capacity(cfg.steps);

    for step in 1..=cfg.steps {
        let y = sample_batch(data, cfg.batch_size, &mut data_rng)?;
        let z = latent.sample(cfg.batch_size, &mut latent_rng)?;
        let real_hist = real_tracker.current().cloned();
        let fake_hist = fake_tracker.current().cloned();
        let hist = History {
            real: real_hist.as_ref(),
            fake: fake_hist.as_ref(),
        };
        let abort = abort_on_non_finite(step);
        let (x, _) = g.predict(&z).map_err(&abort)?;

        let mut d_loss = 0.0;
        let mut l_orig = 0.0;
        for _ in 0..cfg.d_steps_per_g {
            let obj = discriminator_objective(&cfg.loss, cfg.baseline_mode, &d, &y, &x, hist).map_err(&abort)?;
            let grads = obj.graph.backward(obj.objective).map_err(&abort)?;
            opt_d.step(&mut d, &grads).map_err(&abort)?;
            d_loss = obj.graph.scalar(obj.objective);
            l_orig = obj.graph.scalar(obj.l_orig);
            obs.on_d_step(step);
        }

        // representations under the updated D
        let (_, feat_real) = d.predict(&y).map_err(&abort)?;
        let (_, feat_fake) = d.predict(&x).map_err(&abort)?;
        if !cfg.baseline_mode {
            let m_real = loss::batch_manifold(&cfg.loss, &feat_real).map_err(&abort)?;
            let m_fake = loss::batch_manifold(&cfg.loss, &feat_fake).map_err(&abort)?;
            let r = real_tracker.update(&m_real)?.clone();
            let f = fake_tracker.update(&m_fake)?;
            obs.on_tracker_update(step, &r, f);
        }

        let obj = generator_objective(&cfg.loss, cfg.baseline_mode, &g, &d, &z, &feat_real, hist).map_err(&abort)?;
        let mut grads = obj.graph.backward(obj.objective).map_err(&abort)?;
        grads.retain_prefix("g.");
        opt_g.step(&mut g, &grads).map_err(&abort)?;
        obs.on_g_step(step);

        let terms = match obj.terms {
            Some(t) => loss::GeneratorTerms {
                manifold_term: obj.graph.scalar(t.manifold_term),
                radius_term: obj.graph.scalar(t.radius_term),
                r_g: obj.graph.scalar(t.r_g),
            },
            None => loss::generator_terms(&cfg.loss, &feat_real, &feat_fake).map_err(&abort)?,
        };
        let report = LossReport {
            step,
            l_g_final: obj.graph.scalar(obj.objective),
            l_d_final: d_loss,
            l_orig,
            manifold_term: terms.manifold_term,
            radius_term: terms.radius_term,
            r_g: terms.r_g,
        };
        if let Some(term) = report.first_non_finite() {
            return Err(Error::NumericalAbort {
                step,
                term: term.to_owned(),
            });
        }
        obs.on_step_end(step, &report, &g, &d)?;
        history.push(report);
    }
    Ok(TrainOutput {
        generator: g,
        discriminator: d,
        history,
    })
}

/// Tracker states from before the current step's update.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct History<'a> {
    pub real: Option<&'a SphereManifold>,
    pub fake: Option<&'a SphereManifold>,
}

pub(crate) struct DObjective {
    pub graph: Graph,
    pub objective: NodeId,
    pub l_orig: NodeId,
}

/// Discriminator objective on real `y` and (constant) fake `x`.
pub(crate) fn discriminator_objective(
    cfg: &LossConfig,
    baseline: bool,
    d: &Network,
    y: &Tensor,
    x: &Tensor,
    hist: History<'_>,
) -> Result<DObjective> {
    let mut gr = Graph::new();
    let yn = gr.constant(y.clone());
    let xn = gr.constant(x.clone());
    let real = d.forward(&mut gr, yn)?;
    let fake = d.forward(&mut gr, xn)?;
    let l_orig = loss::l_orig_node(&mut gr, real.output, fake.output)?;
    let objective = if baseline {
        gr.scale(l_orig, -1.0)?
    } else {
        let terms = loss::generator_term_nodes(&mut gr, cfg, real.features, fake.features, hist.real, hist.fake)?;
        loss::l_d_final_node(&mut gr, cfg, l_orig, &terms)?
    };
    Ok(DObjective {
        graph: gr,
        objective,
        l_orig,
    })
}

pub(crate) struct GObjective {
    pub graph: Graph,
    pub objective: NodeId,
    pub terms: Option<TermNodes>,
}

/// Generator objective for latents `z`; real representations are constant.
pub(crate) fn generator_objective(
    cfg: &LossConfig,
    baseline: bool,
    g: &Network,
    d: &Network,
    z: &Tensor,
    feat_real: &Tensor,
    hist: History<'_>,
) -> Result<GObjective> {
    let mut gr = Graph::new();
    let zn = gr.constant(z.clone());
    let x = g.forward(&mut gr, zn)?.output;
    let fake = d.forward(&mut gr, x)?;
    if baseline {
        let objective = loss::non_saturating_node(&mut gr, fake.output)?;
        return Ok(GObjective {
            graph: gr,
            objective,
            terms: None,
        });
    }
    let real = gr.constant(feat_real.clone());
    let t = loss::generator_term_nodes(&mut gr, cfg, real, fake.features, hist.real, hist.fake)?;
    Ok(GObjective {
        graph: gr,
        objective: t.l_g_final,
        terms: Some(t),
    })
}

/// A generator evaluation plus the samples it was computed from.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub row: MetricsRow,
    pub samples: Tensor,
}

/// Draws `n_samples` from `g` and scores them against `data`.
///
/// Manifold gaps and `R_G` are measured in D's representation space when a
/// discriminator is given, otherwise directly on samples.
pub fn evaluate<R: Rng + ?Sized>(
    g: &Network,
    d: Option<&Network>,
    n_samples: usize,
    data: &DatasetHandle,
    rng: &mut R,
) -> Result<MetricsRow> {
    Ok(evaluate_with(g, d, n_samples, data, rng, CoverageThresholds::default())?.row)
}

pub fn evaluate_with<R: Rng + ?Sized>(
    g: &Network,
    d: Option<&Network>,
    n_samples: usize,
    data: &DatasetHandle,
    rng: &mut R,
    thresholds: CoverageThresholds,
) -> Result<Evaluation> {
    if n_samples == 0 {
        return Err(Error::EmptyEvaluation);
    }
    if g.output_dim() != data.dim() {
        return Err(Error::Dimension {
            expected: data.dim(),
            actual: g.output_dim(),
        });
    }
    let z = LatentSampler { dim: g.input_dim() }.sample(n_samples, rng)?;
    let (samples, _) = g.predict(&z)?;
    let real = sample_batch(data, n_samples, rng)?;
    let coverage = metrics::mode_coverage(&samples, data.modes(), data.mode_sigma(), thresholds);
    let (real_reps, fake_reps) = match d {
        Some(d) => (d.predict(&real)?.1, d.predict(&samples)?.1),
        None => (real, samples.clone()),
    };
    let gap = metrics::manifold_gap(&SphereManifold::fit(&real_reps)?, &SphereManifold::fit(&fake_reps)?)?;
    let r_g_value = if n_samples >= 2 && fake_reps.cols() >= 2 {
        regularizer::r_g(&fake_reps)?
    } else {
        0.0
    };
    Ok(Evaluation {
        row: MetricsRow::new(0, coverage, data.modes().len(), gap, r_g_value),
        samples,
    })
}
