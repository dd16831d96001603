//! Versioned binary container for a trained model and its frequency state.
//!
//! Layout: magic `PHAT`, format version (u32), the extractor network, the
//! head networks, the projection, and the frequency state, all little-endian
//! with f64 parameters. Loading a saved model reproduces forward outputs
//! bit-exactly.

use crate::{HarnessError, Result};
use num_complex::Complex64;
use phaseat_core::freq::FrequencyState;
use phaseat_core::net::{Activation, DenseLayer, ParameterSet};
use phaseat_core::phase::{HeadPair, PhaseModel, ProjectionSpec};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"PHAT";
const VERSION: u32 = 1;

struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> Result<()> {
        self.inner.write_all(&[v])?;
        Ok(())
    }

    fn u32(&mut self, v: u32) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    fn f64(&mut self, v: f64) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    fn f64s(&mut self, vs: &[f64]) -> Result<()> {
        for &v in vs {
            self.f64(v)?;
        }
        Ok(())
    }

    fn params(&mut self, p: &ParameterSet) -> Result<()> {
        self.u32(p.layers().len() as u32)?;
        for layer in p.layers() {
            self.u32(layer.input_dim as u32)?;
            self.u32(layer.output_dim as u32)?;
            self.u8(match layer.activation {
                Activation::Relu => 0,
                Activation::Tanh => 1,
                Activation::Identity => 2,
            })?;
            self.f64s(&layer.weight)?;
            self.f64s(&layer.bias)?;
        }
        Ok(())
    }
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| HarnessError::Format(format!("truncated container: {e}")))?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn params(&mut self) -> Result<ParameterSet> {
        let layer_count = self.u32()? as usize;
        if layer_count == 0 || layer_count > 1024 {
            return Err(HarnessError::Format(format!(
                "implausible layer count {layer_count}"
            )));
        }
        let mut layers = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let input_dim = self.u32()? as usize;
            let output_dim = self.u32()? as usize;
            let activation = match self.u8()? {
                0 => Activation::Relu,
                1 => Activation::Tanh,
                2 => Activation::Identity,
                tag => {
                    return Err(HarnessError::Format(format!(
                        "unknown activation tag {tag}"
                    )))
                }
            };
            let weight = self.f64s(input_dim * output_dim)?;
            let bias = self.f64s(output_dim)?;
            layers.push(
                DenseLayer::new(input_dim, output_dim, weight, bias, activation)
                    .map_err(|e| HarnessError::Format(e.to_string()))?,
            );
        }
        ParameterSet::new(layers).map_err(|e| HarnessError::Format(e.to_string()))
    }
}

pub fn save_model(path: &Path, model: &PhaseModel, state: &FrequencyState) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let file = std::fs::File::create(path)?;
    let mut w = Writer {
        inner: std::io::BufWriter::new(file),
    };
    w.inner.write_all(MAGIC)?;
    w.u32(VERSION)?;
    w.params(model.extractor())?;
    w.u32(model.head_count() as u32)?;
    for head in model.heads() {
        w.params(&head.re)?;
        w.params(&head.im)?;
    }
    let projection = model.projection();
    w.u32(projection.dim() as u32)?;
    w.f64s(projection.direction())?;
    w.f64(projection.scale())?;
    // frequency state
    w.u32(state.k_max() as u32)?;
    w.f64(state.decay())?;
    w.u32(state.classes() as u32)?;
    w.u8(u8::from(state.initialized()))?;
    for table in [state.ema_clean(), state.ema_adv()] {
        for row in table {
            for c in row {
                w.f64(c.re)?;
                w.f64(c.im)?;
            }
        }
    }
    w.f64s(state.discrepancy())?;
    w.inner.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(PhaseModel, FrequencyState)> {
    let file = std::fs::File::open(path)?;
    let mut r = Reader {
        inner: std::io::BufReader::new(file),
    };
    let magic = r.bytes(4)?;
    if magic != MAGIC {
        return Err(HarnessError::Format(format!(
            "bad magic {:?}, not a model container",
            magic
        )));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(HarnessError::Format(format!(
            "unsupported container version {version} (expected {VERSION})"
        )));
    }
    let extractor = r.params()?;
    let head_count = r.u32()? as usize;
    if head_count == 0 || head_count > 4096 {
        return Err(HarnessError::Format(format!(
            "implausible head count {head_count}"
        )));
    }
    let mut heads = Vec::with_capacity(head_count);
    for _ in 0..head_count {
        let re = r.params()?;
        let im = r.params()?;
        heads.push(HeadPair { re, im });
    }
    let dim = r.u32()? as usize;
    let direction = r.f64s(dim)?;
    let scale = r.f64()?;
    let projection =
        ProjectionSpec::new(direction, scale).map_err(|e| HarnessError::Format(e.to_string()))?;
    let model = PhaseModel::new(extractor, heads, projection)
        .map_err(|e| HarnessError::Format(e.to_string()))?;

    let k_max = r.u32()? as usize;
    let decay = r.f64()?;
    let classes = r.u32()? as usize;
    let initialized = r.u8()? != 0;
    let mut tables = Vec::with_capacity(2);
    for _ in 0..2 {
        let mut table = Vec::with_capacity(k_max);
        for _ in 0..k_max {
            let mut row = Vec::with_capacity(classes);
            for _ in 0..classes {
                let re = r.f64()?;
                let im = r.f64()?;
                row.push(Complex64::new(re, im));
            }
            table.push(row);
        }
        tables.push(table);
    }
    let ema_adv = tables.pop().unwrap();
    let ema_clean = tables.pop().unwrap();
    let discrepancy = r.f64s(k_max)?;
    let state = FrequencyState::from_parts(
        k_max,
        decay,
        classes,
        ema_clean,
        ema_adv,
        discrepancy,
        initialized,
    )
    .map_err(|e| HarnessError::Format(e.to_string()))?;

    let mut trailing = [0u8; 1];
    match r.inner.read(&mut trailing) {
        Ok(0) => Ok((model, state)),
        Ok(_) => Err(HarnessError::Format("trailing bytes after container".into())),
        Err(e) => Err(HarnessError::Io(e)),
    }
}
