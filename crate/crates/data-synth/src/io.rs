//! Dataset persistence.
//!
//! Binary "IBDS" container, little-endian throughout:
//!
//! ```text
//! magic           4 bytes  "IBDS"
//! version         u16      currently 1
//! class_count     u16
//! window_count    u32
//! seed            u64
//! antennas        u8
//! scenario_count  u8       interned scenario tags
//!   per scenario: u16 length + UTF-8 bytes
//!   per class:    u16 length + UTF-8 bytes
//! window records  window_count times:
//!   label         u16
//!   antenna       u8
//!   scenario      u8       index into the scenario table
//!   values        3072 x f32
//! split table     window_count x u8 (0 train, 1 val, 2 test)
//! ```
//!
//! A CSV import path is also provided: one row per window with columns
//! `label, antenna, v0..v3071`, rows in event-major order (antenna column
//! cycling 0..A-1).

use crate::window::{DataError, Dataset, DopplerWindow, Result, Split};
use std::fs;
use std::io::Write;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"IBDS";
pub const FORMAT_VERSION: u16 = 1;

/// Fixed bytes per window record besides the sample values.
pub const RECORD_HEADER_BYTES: usize = 4;

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn need(&self, n: usize, what: &str) -> Result<()> {
        if self.offset + n > self.bytes.len() {
            Err(DataError::Format {
                offset: self.offset as u64,
                message: format!(
                    "truncated payload: need {n} bytes for {what}, {} remain",
                    self.bytes.len() - self.offset
                ),
            })
        } else {
            Ok(())
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        self.need(n, what)?;
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u16(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| DataError::Format {
            offset: (self.offset - len) as u64,
            message: format!("{what} is not valid UTF-8"),
        })
    }
}

fn push_string(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn encode_dataset(dataset: &Dataset) -> Result<Vec<u8>> {
    dataset.validate()?;
    let mut scenarios: Vec<&str> = Vec::new();
    let mut scenario_idx = Vec::with_capacity(dataset.windows.len());
    for w in &dataset.windows {
        let idx = match scenarios.iter().position(|s| *s == w.scenario) {
            Some(i) => i,
            None => {
                scenarios.push(&w.scenario);
                scenarios.len() - 1
            }
        };
        if idx > u8::MAX as usize {
            return Err(DataError::Input("more than 256 distinct scenario tags".into()));
        }
        scenario_idx.push(idx as u8);
    }

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(dataset.class_count() as u16).to_le_bytes());
    out.extend_from_slice(&(dataset.windows.len() as u32).to_le_bytes());
    out.extend_from_slice(&dataset.seed.to_le_bytes());
    out.push(dataset.antennas as u8);
    out.push(scenarios.len() as u8);
    for s in &scenarios {
        push_string(&mut out, s);
    }
    for name in &dataset.class_names {
        push_string(&mut out, name);
    }
    for (w, &sc) in dataset.windows.iter().zip(&scenario_idx) {
        out.extend_from_slice(&(w.label as u16).to_le_bytes());
        out.push(w.antenna as u8);
        out.push(sc);
        for v in &w.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for s in &dataset.splits {
        out.push(s.code());
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut c = Cursor { bytes, offset: 0 };
    let magic = c.take(4, "magic")?;
    if magic != MAGIC {
        return Err(DataError::Format {
            offset: 0,
            message: format!("bad magic {magic:?}, expected {MAGIC:?}"),
        });
    }
    let version = c.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(DataError::Format {
            offset: 4,
            message: format!("unsupported format version {version}"),
        });
    }
    let class_count = c.u16("class count")? as usize;
    let window_count = c.u32("window count")? as usize;
    let seed = c.u64("seed")?;
    let antennas = c.u8("antenna count")? as usize;
    let scenario_count = c.u8("scenario count")? as usize;
    let mut scenarios = Vec::with_capacity(scenario_count);
    for _ in 0..scenario_count {
        scenarios.push(c.string("scenario tag")?);
    }
    let mut class_names = Vec::with_capacity(class_count);
    for _ in 0..class_count {
        class_names.push(c.string("class name")?);
    }
    let mut windows = Vec::with_capacity(window_count);
    for i in 0..window_count {
        let label = c.u16("window label")? as usize;
        let antenna = c.u8("window antenna")? as usize;
        let sc = c.u8("window scenario")? as usize;
        let scenario = scenarios.get(sc).cloned().ok_or_else(|| DataError::Format {
            offset: (c.offset - 1) as u64,
            message: format!("window {i} references unknown scenario {sc}"),
        })?;
        let raw = c.take(DopplerWindow::VOLUME * 4, "window values")?;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        windows.push(DopplerWindow { values, label, antenna, scenario });
    }
    let mut splits = Vec::with_capacity(window_count);
    for i in 0..window_count {
        let code = c.u8("split table")?;
        let split = Split::from_code(code).ok_or_else(|| DataError::Format {
            offset: (c.offset - 1) as u64,
            message: format!("window {i} has invalid split code {code}"),
        })?;
        splits.push(split);
    }
    let dataset = Dataset { windows, class_names, splits, seed, antennas };
    dataset.validate()?;
    Ok(dataset)
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let bytes = encode_dataset(dataset)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    decode_dataset(&bytes)
}

/// Imports windows from CSV: `label, antenna, v0..v3071` per row, rows in
/// event-major order. All windows start in the train split.
pub fn import_csv(path: &Path, class_names: &[String]) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let mut windows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label: usize = parse_field(fields.next(), lineno, "label")?;
        let antenna: usize = parse_field(fields.next(), lineno, "antenna")?;
        let mut values = Vec::with_capacity(DopplerWindow::VOLUME);
        for field in fields {
            let v: f32 = field.trim().parse().map_err(|_| {
                DataError::Input(format!("line {}: bad float {field:?}", lineno + 1))
            })?;
            values.push(v);
        }
        if values.len() != DopplerWindow::VOLUME {
            return Err(DataError::Input(format!(
                "line {}: {} values, expected {}",
                lineno + 1,
                values.len(),
                DopplerWindow::VOLUME
            )));
        }
        windows.push(DopplerWindow {
            values,
            label,
            antenna,
            scenario: "imported".to_string(),
        });
    }
    if windows.is_empty() {
        return Err(DataError::Input("CSV contains no windows".into()));
    }
    let antennas = windows.iter().map(|w| w.antenna).max().unwrap() + 1;
    if windows.len() % antennas != 0 {
        return Err(DataError::Input(format!(
            "{} rows do not form whole events of {antennas} antennas",
            windows.len()
        )));
    }
    for (i, w) in windows.iter().enumerate() {
        if w.antenna != i % antennas {
            return Err(DataError::Input(format!(
                "row {i}: antenna {} breaks event-major ordering",
                w.antenna
            )));
        }
    }
    let splits = vec![Split::Train; windows.len()];
    let dataset = Dataset {
        windows,
        class_names: class_names.to_vec(),
        splits,
        seed: 0,
        antennas,
    };
    dataset.validate()?;
    Ok(dataset)
}

fn parse_field(field: Option<&str>, lineno: usize, what: &str) -> Result<usize> {
    field
        .and_then(|f| f.trim().parse().ok())
        .ok_or_else(|| DataError::Input(format!("line {}: missing or bad {what}", lineno + 1)))
}
