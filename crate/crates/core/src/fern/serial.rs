//! Little-endian cascade container.
//!
//! ```text
//! "WFRN" | fern count u32 | patch size u32 | ferns...
//! fern: 8 x (x1 u16, y1 u16, x2 u16, y2 u16, theta i16) | 256 x f64 scores | stage threshold f64
//! ```

use std::io::{Read, Write};

use super::{CascadeModel, Fern, Split, PARTITIONS, SPLITS_PER_FERN};
use crate::error::{Error, Result};
use crate::nn::serial::{read_f64, read_u32};

pub const MAGIC: &[u8; 4] = b"WFRN";

pub fn write_cascade<W: Write>(w: &mut W, model: &CascadeModel) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(model.len() as u32).to_le_bytes())?;
    w.write_all(&(model.patch_size() as u32).to_le_bytes())?;
    for (f, t) in model.ferns().iter().zip(model.stage_thresholds()) {
        for s in &f.splits {
            for c in [s.x1, s.y1, s.x2, s.y2] {
                w.write_all(&c.to_le_bytes())?;
            }
            w.write_all(&s.theta.to_le_bytes())?;
        }
        for v in f.scores.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&t.to_le_bytes())?;
    }
    Ok(())
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

pub fn read_cascade<R: Read>(r: &mut R) -> Result<CascadeModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected WFRN")));
    }
    let count = read_u32(r)? as usize;
    let patch_size = read_u32(r)? as usize;
    let mut ferns = Vec::with_capacity(count.min(1 << 16));
    let mut thresholds = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let mut splits = [Split { x1: 0, y1: 0, x2: 0, y2: 0, theta: 0 }; SPLITS_PER_FERN];
        for s in &mut splits {
            s.x1 = read_u16(r)?;
            s.y1 = read_u16(r)?;
            s.x2 = read_u16(r)?;
            s.y2 = read_u16(r)?;
            s.theta = read_u16(r)? as i16;
        }
        let mut scores = Box::new([0.0; PARTITIONS]);
        for v in scores.iter_mut() {
            *v = read_f64(r)?;
        }
        ferns.push(Fern { splits, scores });
        thresholds.push(read_f64(r)?);
    }
    CascadeModel::new(ferns, thresholds, patch_size).map_err(|e| Error::Format(e.to_string()))
}
