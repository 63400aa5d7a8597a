//! Run artifacts: metrics CSV, sample CSVs, SVG scatter plots, manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mmgan_core::loss::LossReport;
use mmgan_core::metrics::MetricsRow;
use mmgan_core::neural::Tensor;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

pub const METRICS_HEADER: &str =
    "step,loss_g,loss_d,l_orig,manifold_term,radius_term,r_g,modes_covered,hq_fraction,centroid_gap,radius_gap";
pub const MANIFEST: &str = "run.json";

/// One `metrics.csv` line from a step's losses and its evaluation.
pub fn metrics_line(report: &LossReport, row: &MetricsRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        report.step,
        report.l_g_final,
        report.l_d_final,
        report.l_orig,
        report.manifold_term,
        report.radius_term,
        report.r_g,
        row.modes_covered,
        row.hq_fraction,
        row.centroid_gap,
        row.radius_gap
    )
}

/// Samples as CSV with header `x0,x1,…`.
pub fn samples_csv(samples: &Tensor) -> String {
    let mut s = (0..samples.cols()).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
    s.push('\n');
    for row in samples.iter_rows() {
        let line = row.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        s.push_str(&line);
        s.push('\n');
    }
    s
}

const SVG_SIZE: f64 = 800.0;

/// Scatter plot of 2-D real (grey) and generated (colored) points, scaled to
/// the joint data extent plus a 10% margin.
pub fn scatter_svg(real: &Tensor, fake: &Tensor) -> String {
    let points = || real.iter_rows().chain(fake.iter_rows()).filter(|p| p.len() >= 2);
    let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points() {
        lo_x = lo_x.min(p[0]);
        hi_x = hi_x.max(p[0]);
        lo_y = lo_y.min(p[1]);
        hi_y = hi_y.max(p[1]);
    }
    if !lo_x.is_finite() {
        (lo_x, hi_x, lo_y, hi_y) = (-1.0, 1.0, -1.0, 1.0);
    }
    let pad = |lo: f64, hi: f64| {
        let span = (hi - lo).max(1e-9);
        (lo - 0.1 * span, hi + 0.1 * span)
    };
    let (lo_x, hi_x) = pad(lo_x, hi_x);
    let (lo_y, hi_y) = pad(lo_y, hi_y);
    let sx = |x: f64| (x - lo_x) / (hi_x - lo_x) * SVG_SIZE;
    let sy = |y: f64| SVG_SIZE - (y - lo_y) / (hi_y - lo_y) * SVG_SIZE;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}" viewBox="0 0 {SVG_SIZE} {SVG_SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (set, fill, class) in [(real, "#999999", "real"), (fake, "#d62728", "generated")] {
        let _ = writeln!(s, r#"<g class="{class}" fill="{fill}" fill-opacity="0.6">"#);
        for p in set.iter_rows().filter(|p| p.len() >= 2) {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2"/>"#, sx(p[0]), sy(p[1]));
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}

/// Record of a run: resolved configuration and every file written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub artifacts: Vec<String>,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted_at_step: Option<usize>,
}

impl Manifest {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            seed: cfg.seed,
            config: cfg.entries().into_iter().map(|(k, v)| (k.to_owned(), v)).collect(),
            artifacts: Vec::new(),
            status: "running".into(),
            aborted_at_step: None,
        }
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(path.display(), e))?;
        serde_json::from_str(&text).map_err(|e| CliError::io(path.display(), e))
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::io(path.display(), e))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(path.display(), e))
    }
}

/// Confirms the manifest lists exactly the files in `dir` besides itself.
pub fn verify_manifest(dir: &Path) -> Result<(), CliError> {
    let manifest = Manifest::read(dir)?;
    let listed: BTreeSet<&str> = manifest.artifacts.iter().map(String::as_str).collect();
    let mut present = BTreeSet::new();
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir.display(), e))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir.display(), e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name != MANIFEST {
            present.insert(name);
        }
    }
    let present: BTreeSet<&str> = present.iter().map(String::as_str).collect();
    if listed != present {
        let missing: Vec<_> = listed.difference(&present).collect();
        let unlisted: Vec<_> = present.difference(&listed).collect();
        return Err(CliError::Io(format!(
            "manifest mismatch in {}: missing {missing:?}, unlisted {unlisted:?}",
            dir.display()
        )));
    }
    Ok(())
}

/// Writes files into a run directory and remembers their names.
pub struct RunWriter {
    dir: PathBuf,
    pub manifest: Manifest,
    metrics: Option<BufWriter<File>>,
}

impl RunWriter {
    pub fn create(dir: &Path, cfg: &RunConfig) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}", dir.display()), e))?;
        let w = Self {
            dir: dir.to_path_buf(),
            manifest: Manifest::new(cfg),
            metrics: None,
        };
        // Probe writability up front so a bad directory fails before training.
        w.manifest.write(dir)?;
        Ok(w)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn record(&mut self, name: &str) {
        if !self.manifest.artifacts.iter().any(|a| a == name) {
            self.manifest.artifacts.push(name.to_owned());
        }
    }

    pub fn write_file(&mut self, name: &str, contents: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::io(path.display(), e))?;
        self.record(name);
        Ok(())
    }

    pub fn metrics_line(&mut self, line: &str) -> Result<(), CliError> {
        let path = self.dir.join("metrics.csv");
        if self.metrics.is_none() {
            let f = File::create(&path).map_err(|e| CliError::io(path.display(), e))?;
            let mut f = BufWriter::new(f);
            writeln!(f, "{METRICS_HEADER}").map_err(|e| CliError::io(path.display(), e))?;
            self.metrics = Some(f);
            self.record("metrics.csv");
        }
        let f = self.metrics.as_mut().expect("opened above");
        writeln!(f, "{line}").map_err(|e| CliError::io(path.display(), e))?;
        f.flush().map_err(|e| CliError::io(path.display(), e))
    }

    pub fn finish(mut self, status: &str, aborted_at_step: Option<usize>) -> Result<Manifest, CliError> {
        if let Some(mut f) = self.metrics.take() {
            f.flush().map_err(|e| CliError::io(self.dir.display(), e))?;
        }
        self.manifest.status = status.to_owned();
        self.manifest.aborted_at_step = aborted_at_step;
        self.manifest.write(&self.dir)?;
        Ok(self.manifest)
    }
}
