//! The `train`, `eval` and `gradcheck` subcommands.

use std::path::Path;

use mmgan_core::data::{self, DatasetHandle, DatasetKind};
use mmgan_core::gradcheck::{self, VariantResult};
use mmgan_core::loss::LossReport;
use mmgan_core::metrics::MetricsRow;
use mmgan_core::neural::Network;
use mmgan_core::rng::{self, Stream, StreamRng};
use mmgan_core::trainer::{self, TrainObserver};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{self, Manifest, RunWriter};
use crate::params;

pub const GENERATOR_FILE: &str = "generator.bin";
pub const DISCRIMINATOR_FILE: &str = "discriminator.bin";

pub fn load_dataset(cfg: &RunConfig) -> Result<DatasetHandle, CliError> {
    if cfg.dataset != DatasetKind::IdxImages {
        return Ok(DatasetHandle::new(cfg.dataset));
    }
    let images = cfg
        .idx_images
        .as_deref()
        .ok_or_else(|| CliError::Config("dataset idx needs idx_images".into()))?;
    Ok(data::load_idx(images, cfg.idx_labels.as_deref())?)
}

/// Writes an evaluation row (and optional samples/plots) every interval.
struct EvalWriter<'a> {
    writer: &'a mut RunWriter,
    cfg: &'a RunConfig,
    data: &'a DatasetHandle,
    rng: StreamRng,
}

fn to_core(e: CliError) -> mmgan_core::Error {
    mmgan_core::Error::Io(std::io::Error::other(e.to_string()))
}

impl EvalWriter<'_> {
    fn write(&mut self, report: &LossReport, g: &Network, d: &Network) -> Result<(), CliError> {
        let ev = trainer::evaluate_with(g, Some(d), self.cfg.eval_samples, self.data, &mut self.rng, self.cfg.thresholds())?;
        let row = MetricsRow { step: report.step, ..ev.row };
        self.writer.metrics_line(&output::metrics_line(report, &row))?;
        if self.cfg.write_samples {
            let name = format!("samples_{}.csv", report.step);
            self.writer.write_file(&name, output::samples_csv(&ev.samples).as_bytes())?;
        }
        if self.cfg.write_svg && self.data.dim() == 2 {
            let real = data::sample_batch(self.data, ev.samples.rows().min(1000), &mut self.rng)?;
            let name = format!("scatter_{}.svg", report.step);
            self.writer.write_file(&name, output::scatter_svg(&real, &ev.samples).as_bytes())?;
        }
        Ok(())
    }
}

impl TrainObserver for EvalWriter<'_> {
    fn on_step_end(&mut self, step: usize, report: &LossReport, g: &Network, d: &Network) -> mmgan_core::Result<()> {
        if step.is_multiple_of(self.cfg.eval_every) {
            self.write(report, g, d).map_err(to_core)?;
        }
        Ok(())
    }
}

/// Trains and writes all artifacts into the run directory.
pub fn train(cfg: &RunConfig) -> Result<Manifest, CliError> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let dir = cfg.run_dir();
    let mut writer = RunWriter::create(&dir, cfg)?;
    let result = {
        let mut obs = EvalWriter {
            writer: &mut writer,
            cfg,
            data: &data,
            rng: rng::stream(cfg.seed, Stream::Eval),
        };
        trainer::train_with_observer(&cfg.train_config(), &data, &mut obs)
    };
    match result {
        Ok(out) => {
            writer.write_file(GENERATOR_FILE, &params::encode(&out.generator))?;
            writer.write_file(DISCRIMINATOR_FILE, &params::encode(&out.discriminator))?;
            let manifest = writer.finish("completed", None)?;
            output::verify_manifest(&dir)?;
            Ok(manifest)
        }
        Err(mmgan_core::Error::NumericalAbort { step, term }) => {
            writer.finish("aborted", Some(step))?;
            Err(CliError::Abort { step, term })
        }
        Err(mmgan_core::Error::Io(e)) => Err(CliError::Io(e.to_string())),
        Err(e) => Err(e.into()),
    }
}

/// Evaluates a saved run, returning the CSV header and row.
pub fn eval(cfg: &RunConfig, dir: &Path) -> Result<(String, String), CliError> {
    if cfg.eval_samples == 0 {
        return Err(CliError::Config("empty evaluation".into()));
    }
    let g = params::load("g", &dir.join(GENERATOR_FILE))?;
    let d_path = dir.join(DISCRIMINATOR_FILE);
    let d = if d_path.exists() {
        Some(params::load("d", &d_path)?)
    } else {
        None
    };
    let data = load_dataset(cfg)?;
    let mut rng = rng::stream(cfg.seed, Stream::Eval);
    let ev = trainer::evaluate_with(&g, d.as_ref(), cfg.eval_samples, &data, &mut rng, cfg.thresholds())?;
    let row = MetricsRow { step: cfg.steps, ..ev.row };
    Ok((MetricsRow::CSV_HEADER.to_owned(), row.to_csv()))
}

/// Runs the finite-difference suite and renders its table.
pub fn gradcheck(
    kernel: Option<&str>,
    alpha: Option<f64>,
    beta: Option<f64>,
    seed: u64,
    fault: bool,
) -> Result<(Vec<VariantResult>, String), CliError> {
    let variants = gradcheck::select_variants(kernel, alpha, beta);
    if variants.is_empty() {
        return Err(CliError::Config("no gradient-check variant matches the filter".into()));
    }
    let results = gradcheck::run_suite(&variants, seed, fault)?;
    let mut table = format!("{:<10} {:>14} {:>14}  status\n", "variant", "max_err_g", "max_err_d");
    for r in &results {
        table.push_str(&format!(
            "{:<10} {:>14.3e} {:>14.3e}  {}\n",
            r.name,
            r.generator_error,
            r.discriminator_error,
            if r.passed() { "pass" } else { "FAIL" }
        ));
    }
    Ok((results, table))
}
