//! Training distributions.
//!
//! Three synthetic 2-D mixtures where mode collapse is easy to count, and a
//! reader for IDX image files (the MNIST container format).

use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use flate2::read::GzDecoder;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::neural::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    Ring8,
    Grid25,
    Rings2,
    IdxImages,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Ring8 => "ring8",
            DatasetKind::Grid25 => "grid25",
            DatasetKind::Rings2 => "rings2",
            DatasetKind::IdxImages => "idx",
        }
    }

    pub fn is_synthetic(self) -> bool {
        self != DatasetKind::IdxImages
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring8" => Ok(DatasetKind::Ring8),
            "grid25" => Ok(DatasetKind::Grid25),
            "rings2" => Ok(DatasetKind::Rings2),
            "idx" | "idx_images" => Ok(DatasetKind::IdxImages),
            other => Err(Error::Config(format!("unknown dataset '{other}'"))),
        }
    }
}

/// One mixture component: a point, or a circle about the origin.
#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    Point(Vec<f64>),
    Ring { radius: f64 },
}

impl Mode {
    /// Euclidean distance from `x` to the mode.
    pub fn distance(&self, x: &[f64]) -> f64 {
        match self {
            Mode::Point(c) => c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
            Mode::Ring { radius } => (x.iter().map(|v| v * v).sum::<f64>().sqrt() - radius).abs(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetHandle {
    kind: DatasetKind,
    dim: usize,
    modes: Vec<Mode>,
    sigma: f64,
    images: Option<Arc<Tensor>>,
    labels: Option<Arc<Vec<u8>>>,
}

impl DatasetHandle {
    /// Handle for `kind`. The image kind starts empty; use [`load_idx`].
    pub fn new(kind: DatasetKind) -> Self {
        let (modes, sigma) = match kind {
            DatasetKind::Ring8 => {
                let modes = (0..8)
                    .map(|i| {
                        let t = i as f64 * std::f64::consts::TAU / 8.0;
                        Mode::Point(vec![2.0 * t.cos(), 2.0 * t.sin()])
                    })
                    .collect();
                (modes, 0.02)
            }
            DatasetKind::Grid25 => {
                let mut modes = Vec::with_capacity(25);
                for i in 0..5 {
                    for j in 0..5 {
                        modes.push(Mode::Point(vec![-2.0 + i as f64, -2.0 + j as f64]));
                    }
                }
                (modes, 0.05)
            }
            DatasetKind::Rings2 => (vec![Mode::Ring { radius: 1.0 }, Mode::Ring { radius: 2.0 }], 0.02),
            DatasetKind::IdxImages => (Vec::new(), 1.0),
        };
        Self {
            kind,
            dim: if kind.is_synthetic() { 2 } else { 0 },
            modes,
            sigma,
            images: None,
            labels: None,
        }
    }

    pub fn kind(&self) -> DatasetKind {
        self.kind
    }

    /// Sample dimension; 0 for an unloaded image set.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// Centers of the point modes.
    pub fn mode_centers(&self) -> Vec<&[f64]> {
        self.modes
            .iter()
            .filter_map(|m| match m {
                Mode::Point(c) => Some(c.as_slice()),
                Mode::Ring { .. } => None,
            })
            .collect()
    }

    pub fn mode_sigma(&self) -> f64 {
        self.sigma
    }

    pub fn images(&self) -> Option<&Tensor> {
        self.images.as_deref()
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref().map(Vec::as_slice)
    }

    /// Draws `n` samples; also returns the mode (or image row) of each.
    pub fn sample_labeled<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(Tensor, Vec<usize>)> {
        if n == 0 {
            return Err(Error::EmptySet);
        }
        let mut data = Vec::with_capacity(n * self.dim.max(1));
        let mut which = Vec::with_capacity(n);
        match self.kind {
            DatasetKind::IdxImages => {
                let images = self.images.as_ref().ok_or(Error::NotLoaded)?;
                for _ in 0..n {
                    let i = rng.random_range(0..images.rows());
                    data.extend_from_slice(images.row(i));
                    which.push(i);
                }
            }
            _ => {
                for _ in 0..n {
                    let m = rng.random_range(0..self.modes.len());
                    let base = match &self.modes[m] {
                        Mode::Point(c) => [c[0], c[1]],
                        Mode::Ring { radius } => {
                            let t = rng.random_range(0.0..std::f64::consts::TAU);
                            [radius * t.cos(), radius * t.sin()]
                        }
                    };
                    for b in base {
                        let z: f64 = rng.sample(StandardNormal);
                        data.push(b + self.sigma * z);
                    }
                    which.push(m);
                }
            }
        }
        Ok((Tensor::new(&[n, self.dim], data)?, which))
    }
}

/// Draws `n` samples from the dataset as an `n×dim` matrix.
pub fn sample_batch<R: Rng + ?Sized>(h: &DatasetHandle, n: usize, rng: &mut R) -> Result<Tensor> {
    Ok(h.sample_labeled(n, rng)?.0)
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut file = File::open(path)?;
    let mut bytes = Vec::new();
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(file).read_to_end(&mut bytes)?;
    } else {
        file.read_to_end(&mut bytes)?;
    }
    Ok(bytes)
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            needed: at + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn body<'a>(bytes: &'a [u8], start: usize, len: usize, path: &Path) -> Result<&'a [u8]> {
    bytes.get(start..start + len).ok_or_else(|| Error::Truncated {
        path: path.to_path_buf(),
        needed: start + len,
        found: bytes.len(),
    })
}

/// Parses an IDX image file into a `count × rows·cols` matrix in `[−1, 1]`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Tensor> {
    check_magic(bytes, IDX_IMAGES_MAGIC, path)?;
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let dim = rows * cols;
    if count == 0 || dim == 0 {
        return Err(Error::EmptySet);
    }
    let pixels = body(bytes, 16, count * dim, path)?;
    let data = pixels.iter().map(|&p| p as f64 / 127.5 - 1.0).collect();
    Tensor::new(&[count, dim], data)
}

/// Parses an IDX label file.
pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    check_magic(bytes, IDX_LABELS_MAGIC, path)?;
    let count = be_u32(bytes, 4, path)? as usize;
    Ok(body(bytes, 8, count, path)?.to_vec())
}

/// Loads IDX images (and optionally labels); `.gz` files are decompressed.
pub fn load_idx(images_path: &Path, labels_path: Option<&Path>) -> Result<DatasetHandle> {
    let images = parse_idx_images(&read_all(images_path)?, images_path)?;
    let labels = match labels_path {
        Some(p) => {
            let labels = parse_idx_labels(&read_all(p)?, p)?;
            if labels.len() != images.rows() {
                return Err(Error::CountMismatch {
                    images: images.rows(),
                    labels: labels.len(),
                });
            }
            Some(Arc::new(labels))
        }
        None => None,
    };
    let mut h = DatasetHandle::new(DatasetKind::IdxImages);
    h.dim = images.cols();
    h.images = Some(Arc::new(images));
    h.labels = labels;
    Ok(h)
}

/// Encodes images (row-major bytes) as an IDX image file.
pub fn encode_idx_images(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, count, rows, cols] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

/// Encodes labels as an IDX label file.
pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ring8_samples_stay_near_a_mode() {
        let h = DatasetHandle::new(DatasetKind::Ring8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = sample_batch(&h, 10_000, &mut rng).unwrap();
        for x in batch.iter_rows() {
            let nearest = h.modes().iter().map(|m| m.distance(x)).fold(f64::INFINITY, f64::min);
            assert!(nearest <= 6.0 * h.mode_sigma());
        }
    }

    #[test]
    fn grid_corners_and_separation() {
        let h = DatasetHandle::new(DatasetKind::Grid25);
        let centers = h.mode_centers();
        assert_eq!(centers.len(), 25);
        assert!(centers.contains(&&[-2.0, -2.0][..]));
        assert!(centers.contains(&&[2.0, 2.0][..]));
        for kind in [DatasetKind::Ring8, DatasetKind::Grid25] {
            let h = DatasetHandle::new(kind);
            let c = h.mode_centers();
            for i in 0..c.len() {
                for j in i + 1..c.len() {
                    assert!(Mode::Point(c[i].to_vec()).distance(c[j]) >= 20.0 * h.mode_sigma());
                }
            }
        }
    }

    #[test]
    fn rings_are_hit_uniformly_in_angle() {
        let h = DatasetHandle::new(DatasetKind::Rings2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (batch, which) = h.sample_labeled(4000, &mut rng).unwrap();
        let mut quadrants = [0usize; 4];
        for (x, &m) in batch.iter_rows().zip(&which) {
            assert!(h.modes()[m].distance(x) < 6.0 * h.mode_sigma());
            let q = (x[0] < 0.0) as usize * 2 + (x[1] < 0.0) as usize;
            quadrants[q] += 1;
        }
        for q in quadrants {
            assert!((q as f64 - 1000.0).abs() < 5.0 * 1000f64.sqrt());
        }
    }

    #[test]
    fn fixed_stream_gives_identical_batch() {
        let h = DatasetHandle::new(DatasetKind::Grid25);
        let a = sample_batch(&h, 32, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_batch(&h, 32, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn image_kind_needs_loading() {
        let h = DatasetHandle::new(DatasetKind::IdxImages);
        let err = sample_batch(&h, 1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, Error::NotLoaded));
        assert!(sample_batch(&DatasetHandle::new(DatasetKind::Ring8), 0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn idx_parsing() {
        let p = Path::new("fixture");
        let bytes = encode_idx_images(2, 2, 2, &[0, 255, 51, 204, 1, 2, 3, 4]);
        let m = parse_idx_images(&bytes, p).unwrap();
        assert_eq!(m.shape(), &[2, 4]);
        assert_eq!(m.get(0, 0), -1.0);
        assert_eq!(m.get(0, 1), 1.0);
        assert!((m.get(0, 2) + 0.6).abs() < 1e-12);

        let mut wrong = bytes.clone();
        wrong[3] = 0x01;
        assert!(matches!(parse_idx_images(&wrong, p), Err(Error::BadMagic { found: 0x801, .. })));
        assert!(matches!(parse_idx_images(&bytes[..20], p), Err(Error::Truncated { .. })));
        assert!(matches!(parse_idx_images(&bytes[..10], p), Err(Error::Truncated { .. })));

        let labels = encode_idx_labels(&[3, 7]);
        assert_eq!(parse_idx_labels(&labels, p).unwrap(), vec![3, 7]);
        assert!(parse_idx_labels(&bytes, p).is_err());
    }

    #[test]
    fn parse_names() {
        for k in [DatasetKind::Ring8, DatasetKind::Grid25, DatasetKind::Rings2, DatasetKind::IdxImages] {
            assert_eq!(k.name().parse::<DatasetKind>().unwrap(), k);
        }
        assert!("mnist".parse::<DatasetKind>().is_err());
    }
}
