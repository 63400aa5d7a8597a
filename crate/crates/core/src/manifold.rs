//! Sphere manifolds over feature vectors and their moving-average trackers.
//!
//! A point cloud `S = {s₁ … sₙ}` is summarized by the sphere whose center is
//! the centroid `c = (1/n) Σ sᵢ` and whose radius is the mean distance
//! `ℓ = (1/n) Σ ‖c − sᵢ‖₂`. The centroid minimizes `Σ ‖c − sᵢ‖²` and, for a
//! fixed center, the mean distance minimizes `Σ (ℓ − ‖c − sᵢ‖)²`.

use crate::error::{Error, Result};
use crate::neural::{Graph, NodeId, Tensor};

/// Moving-average weight used when none is configured.
pub const DEFAULT_DELTA: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct SphereManifold {
    centroid: Vec<f64>,
    radius: f64,
}

impl SphereManifold {
    pub fn new(centroid: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::Config(format!("radius must be finite and >= 0, got {radius}")));
        }
        if centroid.is_empty() {
            return Err(Error::EmptySet);
        }
        if centroid.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("centroid".into()));
        }
        Ok(Self { centroid, radius })
    }

    /// Centroid and mean-distance radius of the rows of `points`.
    pub fn fit(points: &Tensor) -> Result<Self> {
        let c = centroid(points)?;
        let r = radius(points, &c)?;
        Ok(Self {
            centroid: c,
            radius: r,
        })
    }

    pub fn centroid(&self) -> &[f64] {
        &self.centroid
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.centroid.len()
    }
}

pub fn centroid(points: &Tensor) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::EmptySet);
    }
    let n = points.rows() as f64;
    let mut c = vec![0.0; points.cols()];
    for row in points.iter_rows() {
        for (acc, &v) in c.iter_mut().zip(row) {
            *acc += v;
        }
    }
    c.iter_mut().for_each(|v| *v /= n);
    Ok(c)
}

/// Mean Euclidean distance from `c` to the rows of `points`.
pub fn radius(points: &Tensor, c: &[f64]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptySet);
    }
    if points.cols() != c.len() {
        return Err(Error::Dimension {
            expected: points.cols(),
            actual: c.len(),
        });
    }
    let total: f64 = points.iter_rows().map(|s| euclidean(c, s)).sum();
    Ok(total / points.rows() as f64)
}

/// Matching condition with tolerance: both the centroid distance and the
/// radius gap are at most `tol` (inclusive).
pub fn matches(a: &SphereManifold, b: &SphereManifold, tol: f64) -> Result<bool> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(euclidean(&a.centroid, &b.centroid) <= tol && (a.radius - b.radius).abs() <= tol)
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Exponentially weighted moving average of sphere manifolds.
///
/// The first update adopts the mini-batch manifold as is; later updates
/// blend `current ← δ·current + (1 − δ)·mini` for both centroid and radius.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldTracker {
    current: Option<SphereManifold>,
    delta: f64,
}

impl Default for ManifoldTracker {
    fn default() -> Self {
        Self {
            current: None,
            delta: DEFAULT_DELTA,
        }
    }
}

impl ManifoldTracker {
    pub fn new(delta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::Config(format!("delta must be in [0, 1), got {delta}")));
        }
        Ok(Self {
            current: None,
            delta,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn is_initialized(&self) -> bool {
        self.current.is_some()
    }

    pub fn current(&self) -> Option<&SphereManifold> {
        self.current.as_ref()
    }

    pub fn update(&mut self, mini: &SphereManifold) -> Result<&SphereManifold> {
        let delta = self.delta;
        match &mut self.current {
            None => {
                self.current = Some(mini.clone());
            }
            Some(cur) => {
                if cur.dim() != mini.dim() {
                    return Err(Error::Dimension {
                        expected: cur.dim(),
                        actual: mini.dim(),
                    });
                }
                for (c, &m) in cur.centroid.iter_mut().zip(&mini.centroid) {
                    *c = delta * *c + (1.0 - delta) * m;
                }
                cur.radius = delta * cur.radius + (1.0 - delta) * mini.radius;
            }
        }
        Ok(self.current.as_ref().expect("set above"))
    }
}

/// Differentiable centroid of the rows of `points` (`1×d`).
pub fn centroid_node(g: &mut Graph, points: NodeId) -> Result<NodeId> {
    g.mean_rows(points)
}

/// Differentiable mean distance from the `1×d` node `c` to the rows of `points`.
pub fn radius_node(g: &mut Graph, points: NodeId, c: NodeId) -> Result<NodeId> {
    let diff = g.sub_row(points, c)?;
    let sq = g.square(diff)?;
    let dist2 = g.sum_cols(sq)?;
    let dist = g.sqrt(dist2)?;
    g.mean(dist)
}

/// `δ·history + (1 − δ)·live` with the history held constant. Without
/// history the live statistic passes through unchanged.
pub fn blend_node(g: &mut Graph, history: Option<&[f64]>, live: NodeId, delta: f64) -> Result<NodeId> {
    let Some(h) = history else { return Ok(live) };
    let v = g.value(live);
    if v.len() != h.len() {
        return Err(Error::Dimension {
            expected: v.len(),
            actual: h.len(),
        });
    }
    let (rows, cols) = (v.rows(), v.cols());
    let hist = Tensor::new(&[rows, cols], h.iter().map(|x| delta * x).collect())?;
    let hist = g.constant(hist);
    let scaled = g.scale(live, 1.0 - delta)?;
    g.add(scaled, hist)
}
