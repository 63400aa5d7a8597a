//! Run configuration: defaults, `key = value` files, and overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mmgan_core::data::DatasetKind;
use mmgan_core::kernel::KernelSpec;
use mmgan_core::loss::LossConfig;
use mmgan_core::metrics::CoverageThresholds;
use mmgan_core::trainer::TrainConfig;

use crate::error::CliError;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "MMGAN_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelChoice {
    None,
    Linear,
    Rbf,
    Exp,
    Poly,
}

impl KernelChoice {
    pub fn name(self) -> &'static str {
        match self {
            KernelChoice::None => "none",
            KernelChoice::Linear => "linear",
            KernelChoice::Rbf => "rbf",
            KernelChoice::Exp => "exp",
            KernelChoice::Poly => "poly",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "none" => KernelChoice::None,
            "linear" => KernelChoice::Linear,
            "rbf" => KernelChoice::Rbf,
            "exp" => KernelChoice::Exp,
            "poly" => KernelChoice::Poly,
            _ => return None,
        })
    }
}

/// Everything a run needs. Every field has a default; see [`RunConfig::KEYS`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    pub kernel: KernelChoice,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    /// `None` means `1 / representation size`.
    pub gamma: Option<f64>,
    pub degree: u32,
    pub coef0: f64,
    pub steps: usize,
    pub batch: usize,
    pub latent_dim: usize,
    pub lr_d: f64,
    pub lr_g: f64,
    pub momentum: f64,
    pub seed: u64,
    pub baseline: bool,
    pub d_includes_rg: bool,
    pub d_steps_per_g: usize,
    pub g_hidden: Vec<usize>,
    pub d_hidden: Vec<usize>,
    pub eval_every: usize,
    pub eval_samples: usize,
    pub hq_sigmas: f64,
    pub coverage_divisor: f64,
    pub write_samples: bool,
    pub write_svg: bool,
    /// Run directory; `None` derives one under the output root.
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let c = CoverageThresholds::default();
        Self {
            dataset: DatasetKind::Ring8,
            idx_images: None,
            idx_labels: None,
            kernel: KernelChoice::Rbf,
            alpha: t.loss.alpha,
            beta: t.loss.beta,
            delta: t.loss.delta,
            gamma: None,
            degree: 2,
            coef0: 1.0,
            steps: t.steps,
            batch: t.batch_size,
            latent_dim: t.latent_dim,
            lr_d: t.lr_d,
            lr_g: t.lr_g,
            momentum: t.momentum,
            seed: t.seed,
            baseline: t.baseline_mode,
            d_includes_rg: t.loss.d_includes_rg,
            d_steps_per_g: t.d_steps_per_g,
            g_hidden: t.g_hidden,
            d_hidden: t.d_hidden,
            eval_every: 1000,
            eval_samples: 2000,
            hq_sigmas: c.hq_sigmas,
            coverage_divisor: c.floor_divisor,
            write_samples: true,
            write_svg: true,
            out: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Config(format!("{key}: expected true or false, got '{v}'"))),
    }
}

fn parse_widths(key: &str, v: &str) -> Result<Vec<usize>, CliError> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|w| parse_num(key, w.trim())).collect()
}

fn join_widths(w: &[usize]) -> String {
    w.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn path_str(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Recognized keys, in manifest order.
    pub const KEYS: &'static [&'static str] = &[
        "dataset",
        "idx_images",
        "idx_labels",
        "kernel",
        "alpha",
        "beta",
        "delta",
        "gamma",
        "degree",
        "coef0",
        "steps",
        "batch",
        "latent_dim",
        "lr_d",
        "lr_g",
        "momentum",
        "seed",
        "baseline",
        "d_includes_rg",
        "d_steps_per_g",
        "g_hidden",
        "d_hidden",
        "eval_every",
        "eval_samples",
        "hq_sigmas",
        "coverage_divisor",
        "write_samples",
        "write_svg",
        "out",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        let opt_path = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "dataset" => self.dataset = v.parse().map_err(|e: mmgan_core::Error| CliError::Config(e.to_string()))?,
            "idx_images" => self.idx_images = opt_path(v),
            "idx_labels" => self.idx_labels = opt_path(v),
            "kernel" => {
                self.kernel = KernelChoice::parse(v)
                    .ok_or_else(|| CliError::Config(format!("unknown kernel '{v}'")))?
            }
            "alpha" => self.alpha = parse_num(key, v)?,
            "beta" => self.beta = parse_num(key, v)?,
            "delta" => self.delta = parse_num(key, v)?,
            "gamma" => self.gamma = if v == "auto" || v.is_empty() { None } else { Some(parse_num(key, v)?) },
            "degree" => self.degree = parse_num(key, v)?,
            "coef0" => self.coef0 = parse_num(key, v)?,
            "steps" => self.steps = parse_num(key, v)?,
            "batch" => self.batch = parse_num(key, v)?,
            "latent_dim" => self.latent_dim = parse_num(key, v)?,
            "lr_d" => self.lr_d = parse_num(key, v)?,
            "lr_g" => self.lr_g = parse_num(key, v)?,
            "momentum" => self.momentum = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "baseline" => self.baseline = parse_bool(key, v)?,
            "d_includes_rg" => self.d_includes_rg = parse_bool(key, v)?,
            "d_steps_per_g" => self.d_steps_per_g = parse_num(key, v)?,
            "g_hidden" => self.g_hidden = parse_widths(key, v)?,
            "d_hidden" => self.d_hidden = parse_widths(key, v)?,
            "eval_every" => self.eval_every = parse_num(key, v)?,
            "eval_samples" => self.eval_samples = parse_num(key, v)?,
            "hq_sigmas" => self.hq_sigmas = parse_num(key, v)?,
            "coverage_divisor" => self.coverage_divisor = parse_num(key, v)?,
            "write_samples" => self.write_samples = parse_bool(key, v)?,
            "write_svg" => self.write_svg = parse_bool(key, v)?,
            "out" => self.out = opt_path(v),
            other => return Err(CliError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "dataset" => self.dataset.name().to_owned(),
            "idx_images" => path_str(&self.idx_images),
            "idx_labels" => path_str(&self.idx_labels),
            "kernel" => self.kernel.name().to_owned(),
            "alpha" => self.alpha.to_string(),
            "beta" => self.beta.to_string(),
            "delta" => self.delta.to_string(),
            "gamma" => self.gamma.map_or_else(|| "auto".to_owned(), |g| g.to_string()),
            "degree" => self.degree.to_string(),
            "coef0" => self.coef0.to_string(),
            "steps" => self.steps.to_string(),
            "batch" => self.batch.to_string(),
            "latent_dim" => self.latent_dim.to_string(),
            "lr_d" => self.lr_d.to_string(),
            "lr_g" => self.lr_g.to_string(),
            "momentum" => self.momentum.to_string(),
            "seed" => self.seed.to_string(),
            "baseline" => self.baseline.to_string(),
            "d_includes_rg" => self.d_includes_rg.to_string(),
            "d_steps_per_g" => self.d_steps_per_g.to_string(),
            "g_hidden" => join_widths(&self.g_hidden),
            "d_hidden" => join_widths(&self.d_hidden),
            "eval_every" => self.eval_every.to_string(),
            "eval_samples" => self.eval_samples.to_string(),
            "hq_sigmas" => self.hq_sigmas.to_string(),
            "coverage_divisor" => self.coverage_divisor.to_string(),
            "write_samples" => self.write_samples.to_string(),
            "write_svg" => self.write_svg.to_string(),
            "out" => path_str(&self.out),
            _ => return None,
        })
    }

    /// `(key, value)` pairs for every key.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        Self::KEYS
            .iter()
            .map(|&k| (k, self.get(k).expect("every listed key is readable")))
            .collect()
    }

    /// Applies a flat `key = value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", no + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Applies the `config` object of a run manifest.
    pub fn apply_manifest(&mut self, json: &str) -> Result<(), CliError> {
        let value: serde_json::Value =
            serde_json::from_str(json).map_err(|e| CliError::Config(format!("manifest: {e}")))?;
        let obj = value
            .get("config")
            .and_then(|c| c.as_object())
            .ok_or_else(|| CliError::Config("manifest has no config object".into()))?;
        for (k, v) in obj {
            let s = match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            self.set(k, &s)?;
        }
        Ok(())
    }

    /// Reads a config file; `.json` files are treated as run manifests.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            self.apply_manifest(&text)
        } else {
            self.apply_text(&text)
        }
    }

    /// Flat text form that [`RunConfig::apply_text`] reads back.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn representation_dim(&self) -> usize {
        self.d_hidden.last().copied().unwrap_or(0)
    }

    pub fn kernel_spec(&self) -> Option<KernelSpec> {
        let gamma = self
            .gamma
            .unwrap_or_else(|| mmgan_core::kernel::default_gamma(self.representation_dim().max(1)));
        match self.kernel {
            KernelChoice::None => None,
            KernelChoice::Linear => Some(KernelSpec::Linear),
            KernelChoice::Rbf => Some(KernelSpec::Rbf { gamma }),
            KernelChoice::Exp => Some(KernelSpec::Exp { gamma }),
            KernelChoice::Poly => Some(KernelSpec::Polynomial {
                degree: self.degree,
                coef0: self.coef0,
            }),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            batch_size: self.batch,
            latent_dim: self.latent_dim,
            lr_d: self.lr_d,
            lr_g: self.lr_g,
            momentum: self.momentum,
            seed: self.seed,
            loss: LossConfig {
                alpha: self.alpha,
                beta: self.beta,
                delta: self.delta,
                kernel: self.kernel_spec(),
                d_includes_rg: self.d_includes_rg,
            },
            baseline_mode: self.baseline,
            d_steps_per_g: self.d_steps_per_g,
            g_hidden: self.g_hidden.clone(),
            d_hidden: self.d_hidden.clone(),
        }
    }

    pub fn thresholds(&self) -> CoverageThresholds {
        CoverageThresholds {
            hq_sigmas: self.hq_sigmas,
            floor_divisor: self.coverage_divisor,
        }
    }

    /// Checks everything that can be checked without touching the disk.
    pub fn validate(&self) -> Result<(), CliError> {
        self.train_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.steps == 0 {
            return Err(CliError::Config("steps must be positive".into()));
        }
        if self.eval_every == 0 {
            return Err(CliError::Config("eval_every must be positive".into()));
        }
        if self.eval_samples == 0 {
            return Err(CliError::Config("empty evaluation".into()));
        }
        if !(self.hq_sigmas > 0.0 && self.coverage_divisor > 0.0) {
            return Err(CliError::Config("coverage thresholds must be positive".into()));
        }
        if self.dataset == DatasetKind::IdxImages && self.idx_images.is_none() {
            return Err(CliError::Config("dataset idx needs idx_images".into()));
        }
        Ok(())
    }

    /// Run directory: `out` if set, else a name derived from the config
    /// under `$MMGAN_OUT` (or `runs`).
    pub fn run_dir(&self) -> PathBuf {
        if let Some(out) = &self.out {
            return out.clone();
        }
        let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
        let method = if self.baseline { "baseline" } else { self.kernel.name() };
        root.join(format!("{}_{}_seed{}", self.dataset.name(), method, self.seed))
    }
}
