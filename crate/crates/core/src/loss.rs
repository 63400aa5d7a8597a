//! Training objectives.
//!
//! * `l_orig`: the GAN value `mean log D(y) + mean log(1 − D(x))`.
//! * plain manifold loss: `‖c_Y − c_X‖₂ + |ℓ_Y − ℓ_X|`.
//! * kernel manifold loss: `‖φ(c_Y) − φ(c_X)‖² + α·|ℓ_K,Y − ℓ_K,X|`.
//! * generator: manifold loss `+ β·R_G`; discriminator: `BCE − generator loss`.
//!
//! Every loss exists twice: as plain numbers for diagnostics and tests, and as
//! graph nodes for training. The graph form also blends each mini-batch
//! statistic with its tracked history, `δ·history + (1 − δ)·mini`, where the
//! history carries no gradient.

use crate::error::{Error, Result};
use crate::kernel::{self, KernelSpec};
use crate::manifold::{self, SphereManifold, DEFAULT_DELTA};
use crate::neural::{Graph, NodeId, Tensor};
use crate::regularizer;

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// Weight of the kernel radius term.
    pub alpha: f64,
    /// Weight of the correlation penalty.
    pub beta: f64,
    /// Moving-average weight on tracked history.
    pub delta: f64,
    /// `None` selects the plain (non-kernel) manifold loss.
    pub kernel: Option<KernelSpec>,
    /// Whether the discriminator's adversarial term includes `β·R_G`.
    pub d_includes_rg: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            delta: DEFAULT_DELTA,
            kernel: None,
            d_includes_rg: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::Config(format!("delta must be in [0, 1), got {}", self.delta)));
        }
        if let Some(k) = &self.kernel {
            k.validate()?;
        }
        Ok(())
    }

    /// Weight applied to the radius term: `α` with a kernel, 1 without.
    pub fn radius_weight(&self) -> f64 {
        if self.kernel.is_some() {
            self.alpha
        } else {
            1.0
        }
    }
}

/// Per-step diagnostic decomposition of the losses.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub step: usize,
    pub l_g_final: f64,
    pub l_d_final: f64,
    pub l_orig: f64,
    pub manifold_term: f64,
    pub radius_term: f64,
    pub r_g: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        self.first_non_finite().is_none()
    }

    /// Name of the first non-finite field, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        [
            ("l_g_final", self.l_g_final),
            ("l_d_final", self.l_d_final),
            ("l_orig", self.l_orig),
            ("manifold_term", self.manifold_term),
            ("radius_term", self.radius_term),
            ("r_g", self.r_g),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(name, _)| name)
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// GAN value `mean log D(y) + mean log(1 − D(x))` with clamped probabilities.
pub fn l_orig(d_real: &[f64], d_fake: &[f64]) -> Result<f64> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::EmptySet);
    }
    let real = d_real.iter().map(|&p| clamp_prob(p).ln()).sum::<f64>() / d_real.len() as f64;
    let fake = d_fake.iter().map(|&p| (1.0 - clamp_prob(p)).ln()).sum::<f64>() / d_fake.len() as f64;
    Ok(real + fake)
}

/// `‖c_Y − c_X‖₂ + |ℓ_Y − ℓ_X|`.
pub fn l_g_plain(m_real: &SphereManifold, m_fake: &SphereManifold) -> Result<f64> {
    if m_real.dim() != m_fake.dim() {
        return Err(Error::Dimension {
            expected: m_real.dim(),
            actual: m_fake.dim(),
        });
    }
    Ok(manifold::euclidean(m_real.centroid(), m_fake.centroid()) + (m_real.radius() - m_fake.radius()).abs())
}

/// Kernel manifold loss with the radius of each set measured around the
/// given centroid.
pub fn l_g_kernel(
    k: &KernelSpec,
    alpha: f64,
    reps_real: &Tensor,
    reps_fake: &Tensor,
    c_real: &[f64],
    c_fake: &[f64],
) -> Result<f64> {
    let centroid_term = kernel::feature_sq_dist(k, c_real, c_fake)?;
    let l_real = kernel::kernel_radius(k, reps_real, c_real)?;
    let l_fake = kernel::kernel_radius(k, reps_fake, c_fake)?;
    Ok(centroid_term + alpha * (l_real - l_fake).abs())
}

/// Sphere manifold of one mini-batch. With a kernel the radius is the mean
/// squared feature-space distance to the centroid; without, the mean distance.
pub fn batch_manifold(cfg: &LossConfig, reps: &Tensor) -> Result<SphereManifold> {
    let c = manifold::centroid(reps)?;
    let r = match &cfg.kernel {
        Some(k) => kernel::kernel_radius(k, reps, &c)?,
        None => manifold::radius(reps, &c)?,
    };
    SphereManifold::new(c, r)
}

/// The three ingredients of the generator loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorTerms {
    pub manifold_term: f64,
    pub radius_term: f64,
    pub r_g: f64,
}

impl GeneratorTerms {
    pub fn l_g_final(&self, cfg: &LossConfig) -> f64 {
        self.manifold_term + cfg.radius_weight() * self.radius_term + cfg.beta * self.r_g
    }
}

/// Generator loss terms from raw mini-batch statistics (no history).
pub fn generator_terms(cfg: &LossConfig, reps_real: &Tensor, reps_fake: &Tensor) -> Result<GeneratorTerms> {
    let m_real = batch_manifold(cfg, reps_real)?;
    let m_fake = batch_manifold(cfg, reps_fake)?;
    terms_from_manifolds(cfg, &m_real, &m_fake, reps_fake)
}

/// Generator loss terms for given (possibly tracked) manifolds. The radius
/// convention of the manifolds must match `cfg.kernel`.
pub fn terms_from_manifolds(
    cfg: &LossConfig,
    m_real: &SphereManifold,
    m_fake: &SphereManifold,
    reps_fake: &Tensor,
) -> Result<GeneratorTerms> {
    if m_real.dim() != m_fake.dim() {
        return Err(Error::Dimension {
            expected: m_real.dim(),
            actual: m_fake.dim(),
        });
    }
    let manifold_term = match &cfg.kernel {
        Some(k) => kernel::feature_sq_dist(k, m_real.centroid(), m_fake.centroid())?,
        None => manifold::euclidean(m_real.centroid(), m_fake.centroid()),
    };
    Ok(GeneratorTerms {
        manifold_term,
        radius_term: (m_real.radius() - m_fake.radius()).abs(),
        r_g: regularizer::r_g(reps_fake)?,
    })
}

pub fn l_g_final(cfg: &LossConfig, reps_real: &Tensor, reps_fake: &Tensor) -> Result<f64> {
    Ok(generator_terms(cfg, reps_real, reps_fake)?.l_g_final(cfg))
}

/// Discriminator loss `BCE_D − L_G^final`, minimized by the discriminator.
pub fn l_d_final(
    cfg: &LossConfig,
    d_real: &[f64],
    d_fake: &[f64],
    reps_real: &Tensor,
    reps_fake: &Tensor,
) -> Result<f64> {
    let terms = generator_terms(cfg, reps_real, reps_fake)?;
    Ok(-l_orig(d_real, d_fake)? - adversarial_part(cfg, &terms))
}

fn adversarial_part(cfg: &LossConfig, terms: &GeneratorTerms) -> f64 {
    let full = terms.l_g_final(cfg);
    if cfg.d_includes_rg {
        full
    } else {
        full - cfg.beta * terms.r_g
    }
}

/// Graph nodes of the generator loss and its parts.
#[derive(Debug, Clone, Copy)]
pub struct TermNodes {
    pub manifold_term: NodeId,
    pub radius_term: NodeId,
    pub r_g: NodeId,
    /// `manifold + w·radius + β·R_G`.
    pub l_g_final: NodeId,
    /// `manifold + w·radius`.
    pub l_g_no_rg: NodeId,
}

/// Differentiable centroid and radius of one mini-batch of representations.
pub fn batch_manifold_nodes(g: &mut Graph, cfg: &LossConfig, reps: NodeId) -> Result<(NodeId, NodeId)> {
    let c = manifold::centroid_node(g, reps)?;
    let r = match cfg.kernel {
        None => manifold::radius_node(g, reps, c)?,
        Some(k) => {
            // (1/n) Σ K(c,c) − 2K(c,sᵢ) + K(sᵢ,sᵢ)
            let kcc = g.kernel(c, c, k)?;
            let kcs = g.kernel(reps, c, k)?;
            let kcs = g.mean(kcs)?;
            let kss = g.kernel_diag(reps, k)?;
            let kss = g.mean(kss)?;
            let two_kcs = g.scale(kcs, 2.0)?;
            let a = g.sub(kcc, two_kcs)?;
            g.add(a, kss)?
        }
    };
    Ok((c, r))
}

/// Builds the generator loss from real and fake representation nodes.
///
/// `history_real`/`history_fake` are the tracked manifolds before this
/// step's update; when present each mini-batch statistic `m` is replaced by
/// `δ·history + (1 − δ)·m` with the history constant.
pub fn generator_term_nodes(
    g: &mut Graph,
    cfg: &LossConfig,
    reps_real: NodeId,
    reps_fake: NodeId,
    history_real: Option<&SphereManifold>,
    history_fake: Option<&SphereManifold>,
) -> Result<TermNodes> {
    let (c_real, r_real) = batch_manifold_nodes(g, cfg, reps_real)?;
    let (c_fake, r_fake) = batch_manifold_nodes(g, cfg, reps_fake)?;
    let delta = cfg.delta;
    let hr = history_real.map(|m| [m.radius()]);
    let hf = history_fake.map(|m| [m.radius()]);
    let c_real = manifold::blend_node(g, history_real.map(|m| m.centroid()), c_real, delta)?;
    let r_real = manifold::blend_node(g, hr.as_ref().map(|r| &r[..]), r_real, delta)?;
    let c_fake = manifold::blend_node(g, history_fake.map(|m| m.centroid()), c_fake, delta)?;
    let r_fake = manifold::blend_node(g, hf.as_ref().map(|r| &r[..]), r_fake, delta)?;

    let manifold_term = match cfg.kernel {
        None => {
            let diff = g.sub(c_real, c_fake)?;
            let sq = g.square(diff)?;
            let s = g.sum(sq)?;
            g.sqrt(s)?
        }
        Some(k) => {
            let kyy = g.kernel(c_real, c_real, k)?;
            let kyx = g.kernel(c_real, c_fake, k)?;
            let kxx = g.kernel(c_fake, c_fake, k)?;
            let two = g.scale(kyx, 2.0)?;
            let a = g.sub(kyy, two)?;
            g.add(a, kxx)?
        }
    };
    let gap = g.sub(r_real, r_fake)?;
    let radius_term = g.abs(gap)?;
    let r_g = regularizer::r_g_node(g, reps_fake)?;

    let weighted_radius = g.scale(radius_term, cfg.radius_weight())?;
    let l_g_no_rg = g.add(manifold_term, weighted_radius)?;
    let l_g_final = if cfg.beta > 0.0 {
        let w = g.scale(r_g, cfg.beta)?;
        g.add(l_g_no_rg, w)?
    } else {
        l_g_no_rg
    };
    Ok(TermNodes {
        manifold_term,
        radius_term,
        r_g,
        l_g_final,
        l_g_no_rg,
    })
}

fn log_clamped(g: &mut Graph, p: NodeId) -> Result<NodeId> {
    let c = g.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP)?;
    g.log(c)
}

fn log_one_minus_clamped(g: &mut Graph, p: NodeId) -> Result<NodeId> {
    let c = g.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP)?;
    let neg = g.scale(c, -1.0)?;
    let q = g.offset(neg, 1.0)?;
    g.log(q)
}

/// Differentiable GAN value `mean log D(y) + mean log(1 − D(x))`.
pub fn l_orig_node(g: &mut Graph, p_real: NodeId, p_fake: NodeId) -> Result<NodeId> {
    let lr = log_clamped(g, p_real)?;
    let lr = g.mean(lr)?;
    let lf = log_one_minus_clamped(g, p_fake)?;
    let lf = g.mean(lf)?;
    g.add(lr, lf)
}

/// Non-saturating generator loss `−mean log D(G(z))` used by the baseline.
pub fn non_saturating_node(g: &mut Graph, p_fake: NodeId) -> Result<NodeId> {
    let l = log_clamped(g, p_fake)?;
    let m = g.mean(l)?;
    g.scale(m, -1.0)
}

/// Discriminator objective `−l_orig − adversarial`, where the adversarial
/// term is the generator loss with or without `β·R_G` per the config.
pub fn l_d_final_node(g: &mut Graph, cfg: &LossConfig, l_orig: NodeId, terms: &TermNodes) -> Result<NodeId> {
    let adversarial = if cfg.d_includes_rg {
        terms.l_g_final
    } else {
        terms.l_g_no_rg
    };
    let bce = g.scale(l_orig, -1.0)?;
    g.sub(bce, adversarial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut impl Rng, n: usize, d: usize) -> Tensor {
        let data = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::new(&[n, d], data).unwrap()
    }

    #[test]
    fn l_orig_examples() {
        let v = l_orig(&[0.5], &[0.5]).unwrap();
        assert!((v + 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((v + 1.3863).abs() < 1e-4);
        let perfect = l_orig(&[1.0, 1.0], &[0.0]).unwrap();
        assert!(perfect < 0.0 && perfect > -1e-6);
        let v = l_orig(&[0.9, 0.6], &[0.2, 0.7]).unwrap();
        let expected = (0.9f64.ln() + 0.6f64.ln()) / 2.0 + (0.8f64.ln() + 0.3f64.ln()) / 2.0;
        assert!((v - expected).abs() < 1e-12);
        // clamping keeps extreme inputs finite
        assert!(l_orig(&[0.0], &[1.0]).unwrap().is_finite());
    }

    #[test]
    fn plain_loss_examples() {
        let a = SphereManifold::new(vec![1.0, 2.0], 0.5).unwrap();
        assert_eq!(l_g_plain(&a, &a).unwrap(), 0.0);
        let y = SphereManifold::new(vec![3.0, 4.0], 1.0).unwrap();
        let x = SphereManifold::new(vec![0.0, 0.0], 3.0).unwrap();
        assert_eq!(l_g_plain(&y, &x).unwrap(), 7.0);
        let z = SphereManifold::new(vec![0.0], 3.0).unwrap();
        assert!(l_g_plain(&y, &z).is_err());
    }

    #[test]
    fn kernel_loss_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let reps = random(&mut rng, 6, 3);
        let c = manifold::centroid(&reps).unwrap();
        let rbf = KernelSpec::Rbf { gamma: 0.5 };
        assert_eq!(l_g_kernel(&rbf, 1.0, &reps, &reps, &c, &c).unwrap(), 0.0);

        let other = random(&mut rng, 6, 3);
        let c2 = manifold::centroid(&other).unwrap();
        let lin = l_g_kernel(&KernelSpec::Linear, 0.0, &reps, &other, &c, &c2).unwrap();
        let explicit: f64 = c.iter().zip(&c2).map(|(a, b)| (a - b).powi(2)).sum();
        assert!((lin - explicit).abs() < 1e-10);

        let centroid_only = kernel::feature_sq_dist(&rbf, &c, &c2).unwrap();
        assert_eq!(l_g_kernel(&rbf, 0.0, &reps, &other, &c, &c2).unwrap(), centroid_only);
    }

    #[test]
    fn linear_kernel_centroid_term_is_square_of_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (a, b) = (random(&mut rng, 5, 4), random(&mut rng, 5, 4));
        let lin = LossConfig {
            alpha: 0.0,
            beta: 0.0,
            kernel: Some(KernelSpec::Linear),
            ..LossConfig::default()
        };
        let plain = LossConfig {
            beta: 0.0,
            ..LossConfig::default()
        };
        let tk = generator_terms(&lin, &a, &b).unwrap();
        let tp = generator_terms(&plain, &a, &b).unwrap();
        assert!((tk.l_g_final(&lin) - tp.manifold_term.powi(2)).abs() < 1e-10);
    }

    #[test]
    fn final_loss_compositions() {
        let reps = Tensor::from_rows(&[[0.2, -0.4, 1.0], [0.2, -0.4, 1.0]]).unwrap();
        let no_rg = LossConfig {
            beta: 0.0,
            ..LossConfig::default()
        };
        assert_eq!(l_g_final(&no_rg, &reps, &reps).unwrap(), 0.0);
        let with_rg = LossConfig::default();
        // a_12 = 1 for the duplicated pair
        assert!((l_g_final(&with_rg, &reps, &reps).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn discriminator_loss_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let reps = random(&mut rng, 4, 3);
        let cfg = LossConfig {
            beta: 0.0,
            ..LossConfig::default()
        };
        let (dr, df) = ([0.7, 0.8, 0.6, 0.9], [0.3, 0.1, 0.2, 0.4]);
        let bce = -l_orig(&dr, &df).unwrap();
        assert!((l_d_final(&cfg, &dr, &df, &reps, &reps).unwrap() - bce).abs() < 1e-15);

        let shifted = |s: f64| reps.map(|v| v + s);
        let near = l_d_final(&cfg, &dr, &df, &reps, &shifted(0.1)).unwrap();
        let far = l_d_final(&cfg, &dr, &df, &reps, &shifted(0.5)).unwrap();
        assert!(far < near);

        let full = LossConfig::default();
        let other = random(&mut rng, 4, 3);
        let terms = generator_terms(&full, &reps, &other).unwrap();
        let expected = bce - (terms.manifold_term + terms.radius_term + terms.r_g);
        assert!((l_d_final(&full, &dr, &df, &reps, &other).unwrap() - expected).abs() < 1e-12);
        let excl = LossConfig {
            d_includes_rg: false,
            ..full
        };
        let expected = bce - (terms.manifold_term + terms.radius_term);
        assert!((l_d_final(&excl, &dr, &df, &reps, &other).unwrap() - expected).abs() < 1e-12);
    }

    fn configs() -> Vec<LossConfig> {
        let base = LossConfig {
            alpha: 0.7,
            beta: 0.4,
            ..LossConfig::default()
        };
        let mut out = vec![base.clone()];
        for k in [
            KernelSpec::Linear,
            KernelSpec::Rbf { gamma: 0.5 },
            KernelSpec::Exp { gamma: 0.5 },
            KernelSpec::Polynomial { degree: 2, coef0: 1.0 },
        ] {
            out.push(LossConfig {
                kernel: Some(k),
                ..base.clone()
            });
        }
        out
    }

    #[test]
    fn graph_terms_agree_with_value_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (a, b) = (random(&mut rng, 6, 4), random(&mut rng, 6, 4));
        for cfg in configs() {
            let mut g = Graph::new();
            let (na, nb) = (g.constant(a.clone()), g.constant(b.clone()));
            let t = generator_term_nodes(&mut g, &cfg, na, nb, None, None).unwrap();
            let v = generator_terms(&cfg, &a, &b).unwrap();
            assert!((g.scalar(t.manifold_term) - v.manifold_term).abs() < 1e-12);
            assert!((g.scalar(t.radius_term) - v.radius_term).abs() < 1e-12);
            assert!((g.scalar(t.r_g) - v.r_g).abs() < 1e-6);
            let recomposed = g.scalar(t.manifold_term)
                + cfg.radius_weight() * g.scalar(t.radius_term)
                + cfg.beta * g.scalar(t.r_g);
            assert!((g.scalar(t.l_g_final) - recomposed).abs() < 1e-10);
            if let Some(k) = &cfg.kernel {
                let ca = manifold::centroid(&a).unwrap();
                let cb = manifold::centroid(&b).unwrap();
                let direct = l_g_kernel(k, cfg.alpha, &a, &b, &ca, &cb).unwrap();
                assert!((g.scalar(t.l_g_no_rg) - direct).abs() < 1e-12, "{k}");
            }
        }
    }

    #[test]
    fn blended_terms_use_tracked_history() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (a, b) = (random(&mut rng, 5, 3), random(&mut rng, 5, 3));
        let cfg = LossConfig::default();
        let hist_a = SphereManifold::new(vec![0.5, 0.1, -0.2], 0.8).unwrap();
        let hist_b = SphereManifold::new(vec![-0.3, 0.0, 0.4], 0.2).unwrap();
        let mut g = Graph::new();
        let (na, nb) = (g.constant(a.clone()), g.constant(b.clone()));
        let t = generator_term_nodes(&mut g, &cfg, na, nb, Some(&hist_a), Some(&hist_b)).unwrap();

        let mut ta = manifold::ManifoldTracker::new(cfg.delta).unwrap();
        ta.update(&hist_a).unwrap();
        let ma = ta.update(&batch_manifold(&cfg, &a).unwrap()).unwrap().clone();
        let mut tb = manifold::ManifoldTracker::new(cfg.delta).unwrap();
        tb.update(&hist_b).unwrap();
        let mb = tb.update(&batch_manifold(&cfg, &b).unwrap()).unwrap().clone();
        let v = terms_from_manifolds(&cfg, &ma, &mb, &b).unwrap();
        assert!((g.scalar(t.manifold_term) - v.manifold_term).abs() < 1e-12);
        assert!((g.scalar(t.radius_term) - v.radius_term).abs() < 1e-12);
    }

    #[test]
    fn report_flags_non_finite_terms() {
        let mut r = LossReport::default();
        assert!(r.is_finite());
        r.radius_term = f64::NAN;
        assert_eq!(r.first_non_finite(), Some("radius_term"));
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        for bad in [
            LossConfig { alpha: -1.0, ..LossConfig::default() },
            LossConfig { beta: f64::NAN, ..LossConfig::default() },
            LossConfig { delta: 1.0, ..LossConfig::default() },
            LossConfig { kernel: Some(KernelSpec::Rbf { gamma: 0.0 }), ..LossConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    proptest::proptest! {
        #[test]
        fn generator_loss_is_non_negative(seed in 0u64..5000, which in 0usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b) = (random(&mut rng, 4, 3), random(&mut rng, 4, 3));
            let cfg = configs()[which].clone();
            let t = generator_terms(&cfg, &a, &b).unwrap();
            let total = t.l_g_final(&cfg);
            proptest::prop_assert!(total >= 0.0);
            proptest::prop_assert!(total >= t.manifold_term && total >= cfg.radius_weight() * t.radius_term);
        }
    }
}
