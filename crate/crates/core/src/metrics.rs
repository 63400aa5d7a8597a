//! Quality and diversity statistics for generated samples.

use crate::data::Mode;
use crate::error::{Error, Result};
use crate::manifold::{self, SphereManifold};
use crate::neural::Tensor;

/// Thresholds for counting high-quality samples and covered modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageThresholds {
    /// A sample is high quality within this many σ of its nearest mode.
    pub hq_sigmas: f64,
    /// A mode is covered by at least `max(1, n / (divisor · #modes))` samples.
    pub floor_divisor: f64,
}

impl Default for CoverageThresholds {
    fn default() -> Self {
        Self {
            hq_sigmas: 3.0,
            floor_divisor: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    pub modes_covered: usize,
    pub hq_fraction: f64,
}

/// Counts covered modes and the high-quality fraction of `samples`.
///
/// Samples are assigned to their nearest mode; ties go to the earlier mode.
pub fn mode_coverage(samples: &Tensor, modes: &[Mode], sigma: f64, thresholds: CoverageThresholds) -> Coverage {
    let n = samples.rows();
    if n == 0 || modes.is_empty() {
        return Coverage {
            modes_covered: 0,
            hq_fraction: 0.0,
        };
    }
    let mut hits = vec![0usize; modes.len()];
    let mut hq = 0usize;
    for x in samples.iter_rows() {
        let (best, dist) = modes
            .iter()
            .enumerate()
            .map(|(i, m)| (i, m.distance(x)))
            .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
        if dist <= thresholds.hq_sigmas * sigma {
            hq += 1;
            hits[best] += 1;
        }
    }
    let floor = (n as f64 / (thresholds.floor_divisor * modes.len() as f64)).max(1.0);
    Coverage {
        modes_covered: hits.iter().filter(|&&h| h as f64 >= floor).count(),
        hq_fraction: hq as f64 / n as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldGap {
    pub centroid_gap: f64,
    pub radius_gap: f64,
}

/// `(‖c_real − c_fake‖₂, |ℓ_real − ℓ_fake|)`.
pub fn manifold_gap(m_real: &SphereManifold, m_fake: &SphereManifold) -> Result<ManifoldGap> {
    if m_real.dim() != m_fake.dim() {
        return Err(Error::Dimension {
            expected: m_real.dim(),
            actual: m_fake.dim(),
        });
    }
    Ok(ManifoldGap {
        centroid_gap: manifold::euclidean(m_real.centroid(), m_fake.centroid()),
        radius_gap: (m_real.radius() - m_fake.radius()).abs(),
    })
}

/// One evaluation of a generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub modes_covered: usize,
    pub coverage_fraction: f64,
    pub hq_fraction: f64,
    pub centroid_gap: f64,
    pub radius_gap: f64,
    pub r_g_value: f64,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str =
        "step,modes_covered,coverage_fraction,hq_fraction,centroid_gap,radius_gap,r_g_value";

    pub fn new(step: usize, coverage: Coverage, total_modes: usize, gap: ManifoldGap, r_g_value: f64) -> Self {
        let coverage_fraction = if total_modes == 0 {
            0.0
        } else {
            coverage.modes_covered as f64 / total_modes as f64
        };
        Self {
            step,
            modes_covered: coverage.modes_covered,
            coverage_fraction,
            hq_fraction: coverage.hq_fraction,
            centroid_gap: gap.centroid_gap,
            radius_gap: gap.radius_gap,
            r_g_value,
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.step,
            self.modes_covered,
            self.coverage_fraction,
            self.hq_fraction,
            self.centroid_gap,
            self.radius_gap,
            self.r_g_value
        )
    }
}
