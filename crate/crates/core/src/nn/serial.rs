//! Versioned little-endian network container.
//!
//! ```text
//! "WCNN" | version u32 | record count u32 | records...
//! record: kind u8 | n_ints u32 | n_ints x u32 | n_params u32 | n_params x f64
//! ```

use std::io::{Read, Write};

use super::conv::ConvSpec;
use super::layers::{Conv2d, Dense};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"WCNN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Conv(Conv2d),
    Dense(Dense),
    MaxPool,
    Relu,
    /// An ordered point set, e.g. canonical landmark positions.
    Points(Vec<[f64; 2]>),
    /// Tags the records that follow with a section id.
    Section(u32),
    /// Free-form scalars (thresholds, flags).
    Values(Vec<f64>),
}

impl Record {
    fn kind(&self) -> u8 {
        match self {
            Record::Conv(_) => 1,
            Record::Dense(_) => 2,
            Record::MaxPool => 3,
            Record::Relu => 4,
            Record::Points(_) => 5,
            Record::Section(_) => 6,
            Record::Values(_) => 7,
        }
    }

    fn ints(&self) -> Vec<u32> {
        match self {
            Record::Conv(c) => {
                let s = c.spec;
                [s.in_channels, s.out_channels, s.kernel, s.stride, s.padding]
                    .iter()
                    .map(|&v| v as u32)
                    .collect()
            }
            Record::Dense(d) => vec![d.n_in as u32, d.n_out as u32],
            Record::MaxPool | Record::Relu => Vec::new(),
            Record::Points(p) => vec![p.len() as u32],
            Record::Section(id) => vec![*id],
            Record::Values(v) => vec![v.len() as u32],
        }
    }

    fn params(&self) -> Vec<f64> {
        match self {
            Record::Conv(c) => c.weight.data().iter().chain(&c.bias).copied().collect(),
            Record::Dense(d) => d.weight.iter().chain(&d.bias).copied().collect(),
            Record::Points(p) => p.iter().flatten().copied().collect(),
            Record::Values(v) => v.clone(),
            _ => Vec::new(),
        }
    }

    fn decode(kind: u8, ints: &[u32], params: Vec<f64>) -> Result<Record> {
        let want_ints = |n: usize| -> Result<()> {
            if ints.len() != n {
                return Err(Error::Format(format!("record kind {kind} needs {n} integers, got {}", ints.len())));
            }
            Ok(())
        };
        let want_params = |n: usize| -> Result<()> {
            if params.len() != n {
                return Err(Error::Format(format!("record kind {kind} needs {n} parameters, got {}", params.len())));
            }
            Ok(())
        };
        Ok(match kind {
            1 => {
                want_ints(5)?;
                let u = |i: usize| ints[i] as usize;
                let spec = ConvSpec::new(u(0), u(1), u(2), u(3), u(4)).map_err(|e| Error::Format(e.to_string()))?;
                let nw = spec.out_channels * spec.patch_len();
                want_params(nw + spec.out_channels)?;
                let weight = Tensor::from_vec(&spec.filter_shape(), params[..nw].to_vec())?;
                Record::Conv(Conv2d { spec, weight, bias: params[nw..].to_vec() })
            }
            2 => {
                want_ints(2)?;
                let (n_in, n_out) = (ints[0] as usize, ints[1] as usize);
                want_params(n_in * n_out + n_out)?;
                Record::Dense(Dense {
                    n_in,
                    n_out,
                    weight: params[..n_in * n_out].to_vec(),
                    bias: params[n_in * n_out..].to_vec(),
                })
            }
            3 | 4 => {
                want_ints(0)?;
                want_params(0)?;
                if kind == 3 {
                    Record::MaxPool
                } else {
                    Record::Relu
                }
            }
            5 => {
                want_ints(1)?;
                want_params(2 * ints[0] as usize)?;
                Record::Points(params.chunks(2).map(|c| [c[0], c[1]]).collect())
            }
            6 => {
                want_ints(1)?;
                want_params(0)?;
                Record::Section(ints[0])
            }
            7 => {
                want_ints(1)?;
                want_params(ints[0] as usize)?;
                Record::Values(params)
            }
            other => return Err(Error::Format(format!("unknown record kind {other}"))),
        })
    }
}

pub fn write_records<W: Write>(w: &mut W, records: &[Record]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(records.len() as u32).to_le_bytes())?;
    for rec in records {
        w.write_all(&[rec.kind()])?;
        let ints = rec.ints();
        w.write_all(&(ints.len() as u32).to_le_bytes())?;
        for v in ints {
            w.write_all(&v.to_le_bytes())?;
        }
        let params = rec.params();
        w.write_all(&(params.len() as u32).to_le_bytes())?;
        for v in params {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_records<R: Read>(r: &mut R) -> Result<Vec<Record>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected WCNN")));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported WCNN version {version}")));
    }
    let count = read_u32(r)?;
    let mut records = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)?;
        let n_ints = read_u32(r)?;
        let ints = (0..n_ints).map(|_| read_u32(r)).collect::<Result<Vec<_>>>()?;
        let n_params = read_u32(r)?;
        let params = (0..n_params).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
        records.push(Record::decode(kind[0], &ints, params)?);
    }
    Ok(records)
}
