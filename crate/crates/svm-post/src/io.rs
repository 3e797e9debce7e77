//! SVM model persistence: "IBSV" binary container, little-endian.
//!
//! ```text
//! magic        4 bytes "IBSV"
//! version      u16 (1)
//! kernel       u8 (0 rbf, 1 linear)
//! gamma        f64 (0 for linear)
//! penalty      f64
//! dim          u32
//! class_count  u16, then class ids as u16
//! machine_count u16, per machine:
//!   class_a u16, class_b u16, bias f64, sv_count u32,
//!   coefficients sv_count x f64, vectors sv_count x dim x f64
//! ```

use crate::kernel::Kernel;
use crate::multiclass::{PairMachine, SvmModel};
use crate::smo::BinarySvm;
use crate::SvmError;
use std::fs;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"IBSV";
pub const FORMAT_VERSION: u16 = 1;

pub fn encode_model(model: &SvmModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    match model.kernel {
        Kernel::Rbf { gamma } => {
            out.push(0);
            out.extend_from_slice(&gamma.to_le_bytes());
        }
        Kernel::Linear => {
            out.push(1);
            out.extend_from_slice(&0.0f64.to_le_bytes());
        }
    }
    out.extend_from_slice(&model.penalty.to_le_bytes());
    out.extend_from_slice(&(model.dim as u32).to_le_bytes());
    out.extend_from_slice(&(model.class_labels.len() as u16).to_le_bytes());
    for &c in &model.class_labels {
        out.extend_from_slice(&(c as u16).to_le_bytes());
    }
    out.extend_from_slice(&(model.machines.len() as u16).to_le_bytes());
    for m in &model.machines {
        out.extend_from_slice(&(m.class_a as u16).to_le_bytes());
        out.extend_from_slice(&(m.class_b as u16).to_le_bytes());
        out.extend_from_slice(&m.svm.bias.to_le_bytes());
        out.extend_from_slice(&(m.svm.support_vectors.len() as u32).to_le_bytes());
        for c in &m.svm.coefficients {
            out.extend_from_slice(&c.to_le_bytes());
        }
        for sv in &m.svm.support_vectors {
            for v in sv {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], SvmError> {
        if self.offset + n > self.bytes.len() {
            return Err(SvmError::Format {
                offset: self.offset as u64,
                message: format!("truncated model file while reading {what}"),
            });
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, SvmError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, SvmError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32, SvmError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64(&mut self, what: &str) -> Result<f64, SvmError> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<SvmModel, SvmError> {
    let mut c = Cursor { bytes, offset: 0 };
    let magic = c.take(4, "magic")?;
    if magic != MAGIC {
        return Err(SvmError::Format {
            offset: 0,
            message: format!("bad magic {magic:?}, expected {MAGIC:?}"),
        });
    }
    let version = c.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(SvmError::Format {
            offset: 4,
            message: format!("unsupported model version {version}"),
        });
    }
    let kernel_kind = c.u8("kernel kind")?;
    let gamma = c.f64("gamma")?;
    let kernel = match kernel_kind {
        0 => Kernel::Rbf { gamma },
        1 => Kernel::Linear,
        k => {
            return Err(SvmError::Format {
                offset: 6,
                message: format!("unknown kernel kind {k}"),
            })
        }
    };
    let penalty = c.f64("penalty")?;
    let dim = c.u32("dimension")? as usize;
    let class_count = c.u16("class count")? as usize;
    let mut class_labels = Vec::with_capacity(class_count);
    for _ in 0..class_count {
        class_labels.push(c.u16("class id")? as usize);
    }
    let machine_count = c.u16("machine count")? as usize;
    let mut machines = Vec::with_capacity(machine_count);
    for _ in 0..machine_count {
        let class_a = c.u16("pair class a")? as usize;
        let class_b = c.u16("pair class b")? as usize;
        let bias = c.f64("bias")?;
        let sv_count = c.u32("support vector count")? as usize;
        let mut coefficients = Vec::with_capacity(sv_count);
        for _ in 0..sv_count {
            coefficients.push(c.f64("coefficient")?);
        }
        let mut support_vectors = Vec::with_capacity(sv_count);
        for _ in 0..sv_count {
            let mut sv = Vec::with_capacity(dim);
            for _ in 0..dim {
                sv.push(c.f64("support vector")?);
            }
            support_vectors.push(sv);
        }
        machines.push(PairMachine {
            class_a,
            class_b,
            svm: BinarySvm { support_vectors, coefficients, bias, kernel },
        });
    }
    Ok(SvmModel { class_labels, machines, kernel, penalty, dim })
}

pub fn save_model(model: &SvmModel, path: &Path) -> Result<(), SvmError> {
    fs::write(path, encode_model(model)).map_err(SvmError::Io)
}

pub fn load_model(path: &Path) -> Result<SvmModel, SvmError> {
    let bytes = fs::read(path).map_err(SvmError::Io)?;
    decode_model(&bytes)
}
