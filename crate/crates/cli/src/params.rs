//! Binary parameter files.
//!
//! Little-endian. A 16-byte header (`MMGN`, u16 version, u16 reserved,
//! u32 layer count, u32 feature tap) is followed, per layer, by the
//! activation code (u32), the weight shape (u64 rows, u64 cols) and values,
//! then the bias length (u64) and values. All values are f64.

use std::path::Path;

use mmgan_core::neural::{Activation, Dense, Network, Tensor};

use crate::error::CliError;

pub const MAGIC: [u8; 4] = *b"MMGN";
pub const VERSION: u16 = 1;

pub fn encode(net: &Network) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + net.parameter_count() * 8 + net.layers().len() * 28);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    out.extend_from_slice(&(net.feature_tap() as u32).to_le_bytes());
    for layer in net.layers() {
        out.extend_from_slice(&layer.activation.code().to_le_bytes());
        out.extend_from_slice(&(layer.weight.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(layer.weight.cols() as u64).to_le_bytes());
        for v in layer.weight.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(layer.bias.len() as u64).to_le_bytes());
        for v in layer.bias.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {} (need {n} more)", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("length 2")))
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("length 4")))
    }

    fn u64(&mut self) -> Result<usize, String> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("length 8"));
        usize::try_from(v).map_err(|_| format!("size {v} too large"))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, String> {
        let bytes = self.take(n.checked_mul(8).ok_or("size overflow")?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("length 8")))
            .collect())
    }
}

pub fn decode(name: &str, bytes: &[u8]) -> Result<Network, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err("not a parameter file (bad magic)".into());
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    r.u16()?;
    let count = r.u32()? as usize;
    let tap = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let code = r.u32()?;
        let activation = Activation::from_code(code).ok_or_else(|| format!("layer {i}: unknown activation {code}"))?;
        let rows = r.u64()?;
        let cols = r.u64()?;
        let w = r.f64s(rows.checked_mul(cols).ok_or("size overflow")?)?;
        let blen = r.u64()?;
        let b = r.f64s(blen)?;
        let weight = Tensor::new(&[rows, cols], w).map_err(|e| format!("layer {i}: {e}"))?;
        let bias = Tensor::new(&[1, blen], b).map_err(|e| format!("layer {i}: {e}"))?;
        layers.push(Dense {
            weight,
            bias,
            activation,
        });
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Network::new(name, layers, tap).map_err(|e| e.to_string())
}

pub fn save(net: &Network, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, encode(net)).map_err(|e| CliError::io(path.display(), e))
}

pub fn load(name: &str, path: &Path) -> Result<Network, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path.display(), e))?;
    decode(name, &bytes).map_err(|e| CliError::io(path.display(), e))
}
