//! Command-line front end: configuration, run artifacts and subcommands.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod params;

use config::RunConfig;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "mmgan", version, about = "Manifold-matching GAN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a generator/discriminator pair and write a run directory.
    Train(RunArgs),
    /// Evaluate the parameters saved in a run directory.
    Eval(EvalArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradArgs),
}

/// Overrides applied on top of defaults and any config file.
#[derive(Debug, Args)]
struct RunArgs {
    /// `key = value` file, or a run.json manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    idx_images: Option<PathBuf>,
    #[arg(long)]
    idx_labels: Option<PathBuf>,
    /// none, linear, rbf, exp or poly.
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Kernel bandwidth, or "auto".
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Train with the non-saturating GAN loss only.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    d_includes_rg: Option<bool>,
    #[arg(long)]
    d_steps_per_g: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    /// Any other config key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Run directory to evaluate; defaults to the one the config names.
    #[arg(long)]
    run: Option<PathBuf>,
    /// Number of generated samples.
    #[arg(long)]
    samples: Option<usize>,
    #[command(flatten)]
    overrides: RunArgs,
}

#[derive(Debug, Args)]
struct GradArgs {
    /// Only variants with this kernel ("none" for the plain loss).
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// 0 selects variants without the correlation penalty.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Corrupt the analytic gradient; the check must then fail.
    #[arg(long)]
    inject_fault: bool,
}

impl RunArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if let Some(p) = &self.config {
            cfg.apply_file(p)?;
        }
        let path = |p: &PathBuf| p.display().to_string();
        let pairs: [(&str, Option<String>); 16] = [
            ("dataset", self.dataset.clone()),
            ("idx_images", self.idx_images.as_ref().map(path)),
            ("idx_labels", self.idx_labels.as_ref().map(path)),
            ("kernel", self.kernel.clone()),
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("beta", self.beta.map(|v| v.to_string())),
            ("delta", self.delta.map(|v| v.to_string())),
            ("gamma", self.gamma.clone()),
            ("steps", self.steps.map(|v| v.to_string())),
            ("batch", self.batch.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("out", self.out.as_ref().map(path)),
            ("baseline", self.baseline.then(|| "true".to_owned())),
            ("d_includes_rg", self.d_includes_rg.map(|v| v.to_string())),
            ("d_steps_per_g", self.d_steps_per_g.map(|v| v.to_string())),
            ("eval_every", self.eval_every.map(|v| v.to_string())),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            cfg.set(k.trim(), v)?;
        }
        Ok(())
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train(args) => {
            let mut cfg = RunConfig::default();
            args.apply(&mut cfg)?;
            let dir = cfg.run_dir();
            let manifest = commands::train(&cfg)?;
            println!("{} ({} files, {})", dir.display(), manifest.artifacts.len(), manifest.status);
        }
        Command::Eval(args) => {
            let mut cfg = RunConfig::default();
            let dir = match &args.run {
                Some(d) => d.clone(),
                None => {
                    let mut probe = RunConfig::default();
                    args.overrides.apply(&mut probe)?;
                    probe.run_dir()
                }
            };
            let manifest = dir.join(output::MANIFEST);
            if manifest.exists() {
                cfg.apply_file(&manifest)?;
            }
            args.overrides.apply(&mut cfg)?;
            if let Some(n) = args.samples {
                cfg.eval_samples = n;
            }
            let (header, row) = commands::eval(&cfg, &dir)?;
            println!("{header}\n{row}");
        }
        Command::Gradcheck(args) => {
            let (results, table) =
                commands::gradcheck(args.kernel.as_deref(), args.alpha, args.beta, args.seed, args.inject_fault)?;
            print!("{table}");
            let failed: Vec<_> = results.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
            if !failed.is_empty() {
                return Err(CliError::Gradcheck(failed.join(", ")));
            }
        }
    }
    Ok(())
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
