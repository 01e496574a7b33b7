use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Leading bytes of the binary trace format.
pub const TRACE_MAGIC: [u8; 4] = *b"RSPR";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("sample rate must be positive, got {0}")]
    SampleRate(f64),
    #[error("left has {left} samples, right has {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("not a trace file (bad magic)")]
    BadMagic,
    #[error("unsupported trace version {0}")]
    Version(u32),
    #[error("CSV trace: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Left and right nasal pressure, sampled together. Negative values are
/// inhalation.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureTrace {
    sample_rate: f64,
    left: Vec<f64>,
    right: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    t: f64,
    left: f64,
    right: f64,
}

impl PressureTrace {
    pub fn new(sample_rate: f64, left: Vec<f64>, right: Vec<f64>) -> Result<Self, TraceError> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(TraceError::SampleRate(sample_rate));
        }
        if left.len() != right.len() {
            return Err(TraceError::LengthMismatch {
                left: left.len(),
                right: right.len(),
            });
        }
        Ok(PressureTrace {
            sample_rate,
            left,
            right,
        })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn left(&self) -> &[f64] {
        &self.left
    }

    pub fn right(&self) -> &[f64] {
        &self.right
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.len().saturating_sub(1) as f64 / self.sample_rate
    }

    /// Both channels added sample by sample.
    pub fn summed(&self) -> Vec<f64> {
        self.left
            .iter()
            .zip(&self.right)
            .map(|(l, r)| l + r)
            .collect()
    }

    /// Every sample multiplied by `k`.
    pub fn scaled(&self, k: f64) -> PressureTrace {
        PressureTrace {
            sample_rate: self.sample_rate,
            left: self.left.iter().map(|x| x * k).collect(),
            right: self.right.iter().map(|x| x * k).collect(),
        }
    }

    /// Writes `t,left,right` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TraceError> {
        let mut w = csv::Writer::from_writer(out);
        for i in 0..self.len() {
            w.serialize(CsvRow {
                t: self.time(i),
                left: self.left[i],
                right: self.right[i],
            })
            .map_err(|e| TraceError::Csv(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `t,left,right` rows. The sample rate comes from the time
    /// column, which must be evenly spaced.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, TraceError> {
        let mut r = csv::Reader::from_reader(input);
        let mut t = Vec::new();
        let mut left = Vec::new();
        let mut right = Vec::new();
        for row in r.deserialize::<CsvRow>() {
            let row = row.map_err(|e| TraceError::Csv(e.to_string()))?;
            t.push(row.t);
            left.push(row.left);
            right.push(row.right);
        }
        if t.len() < 2 {
            return Err(TraceError::Csv(
                "need at least two samples to infer the rate".into(),
            ));
        }
        let span = t[t.len() - 1] - t[0];
        let mut rate = (t.len() - 1) as f64 / span;
        if (rate - rate.round()).abs() < 1e-6 * rate.max(1.0) {
            rate = rate.round();
        }
        for (i, &ti) in t.iter().enumerate() {
            if (ti - t[0] - i as f64 / rate).abs() > 0.01 / rate {
                return Err(TraceError::Csv(format!(
                    "row {i}: t = {ti} breaks the sampling grid"
                )));
            }
        }
        PressureTrace::new(rate, left, right)
    }

    /// Binary layout, all little-endian: 4-byte magic `RSPR`, u32 version,
    /// f64 sample rate, u64 sample count `n`, then `n` f64 left samples
    /// followed by `n` f64 right samples.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<(), TraceError> {
        out.write_all(&TRACE_MAGIC)?;
        out.write_all(&TRACE_VERSION.to_le_bytes())?;
        out.write_all(&self.sample_rate.to_le_bytes())?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        for x in self.left.iter().chain(&self.right) {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self, TraceError> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if magic != TRACE_MAGIC {
            return Err(TraceError::BadMagic);
        }
        let mut b4 = [0u8; 4];
        input.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != TRACE_VERSION {
            return Err(TraceError::Version(version));
        }
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b8)?;
        let rate = f64::from_le_bytes(b8);
        input.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        let mut read_channel = |input: &mut R| -> Result<Vec<f64>, TraceError> {
            let mut v = Vec::with_capacity(n.min(1 << 24));
            for _ in 0..n {
                input.read_exact(&mut b8)?;
                v.push(f64::from_le_bytes(b8));
            }
            Ok(v)
        };
        let left = read_channel(&mut input)?;
        let right = read_channel(&mut input)?;
        PressureTrace::new(rate, left, right)
    }
}
