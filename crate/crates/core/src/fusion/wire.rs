//! Byte format of a density exchanged between consensus nodes.
//!
//! A message is a little-endian `u64` count `N` followed by `N` little-endian
//! `f64` values:
//!
//! ```text
//! r, d, C, (class_id, γ) × C,
//! for each class in ascending id: class_id, M, (mode_id, β) × M,
//! S, for each slot in ascending (class, mode):
//!     class_id, mode_id, J,
//!     for each component: weight, mean[d], covariance upper triangle[d(d+1)/2] (row-major)
//! ```
//!
//! `d` is the state dimension, so a 4-dim component costs 15 values.
//! Integers (ids, counts, dimension) are stored exactly as `f64`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::density::{AugmentedBernoulli, ClassId, ClassModePmf, GaussianComponent, GaussianMixture, ModeId};
use crate::error::{Error, Result};

pub fn encode(d: &AugmentedBernoulli) -> Vec<u8> {
    let values = flatten(d);
    let mut out = Vec::with_capacity(8 + 8 * values.len());
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Size in bytes of the encoded message.
pub fn encoded_len(d: &AugmentedBernoulli) -> usize {
    8 + 8 * flatten(d).len()
}

fn flatten(d: &AugmentedBernoulli) -> Vec<f64> {
    let dim = d.state_dim().unwrap_or(0);
    let mut v = vec![d.r, dim as f64, d.pmf.class.len() as f64];
    for (c, &p) in &d.pmf.class {
        v.extend([c.0 as f64, p]);
    }
    for (c, modes) in &d.pmf.mode {
        v.extend([c.0 as f64, modes.len() as f64]);
        for (m, &p) in modes {
            v.extend([m.0 as f64, p]);
        }
    }
    v.push(d.spdf.len() as f64);
    for (&(c, m), gm) in &d.spdf {
        v.extend([c.0 as f64, m.0 as f64, gm.len() as f64]);
        for comp in gm.iter() {
            v.push(comp.weight);
            v.extend(comp.mean.iter());
            for i in 0..dim {
                for j in i..dim {
                    v.push(comp.cov[(i, j)]);
                }
            }
        }
    }
    v
}

struct Reader<'a> {
    values: &'a [u8],
    pos: usize,
    end: usize,
}

impl Reader<'_> {
    fn next(&mut self) -> Result<f64> {
        if self.pos >= self.end {
            return Err(Error::Decode("message shorter than its declared length".into()));
        }
        let start = 8 + 8 * self.pos;
        let bytes: [u8; 8] = self.values[start..start + 8].try_into().expect("8-byte slice");
        self.pos += 1;
        Ok(f64::from_le_bytes(bytes))
    }

    fn count(&mut self) -> Result<usize> {
        let v = self.next()?;
        if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
            return Err(Error::Decode(format!("invalid count {v}")));
        }
        Ok(v as usize)
    }

    fn id(&mut self) -> Result<u32> {
        self.count().map(|v| v as u32)
    }
}

pub fn decode(bytes: &[u8]) -> Result<AugmentedBernoulli> {
    if bytes.len() < 8 {
        return Err(Error::Decode("missing length prefix".into()));
    }
    let n = u64::from_le_bytes(bytes[..8].try_into().expect("8-byte slice")) as usize;
    if bytes.len() != 8 + 8 * n {
        return Err(Error::Decode(format!("declared {n} values but found {} bytes", bytes.len() - 8)));
    }
    let mut rd = Reader { values: bytes, pos: 0, end: n };

    let r = rd.next()?;
    let dim = rd.count()?;
    let mut pmf = ClassModePmf::default();
    let classes = rd.count()?;
    for _ in 0..classes {
        let c = ClassId(rd.id()?);
        pmf.class.insert(c, rd.next()?);
    }
    for _ in 0..classes {
        let c = ClassId(rd.id()?);
        let modes = rd.count()?;
        let mut entry = BTreeMap::new();
        for _ in 0..modes {
            let m = ModeId(rd.id()?);
            entry.insert(m, rd.next()?);
        }
        pmf.mode.insert(c, entry);
    }
    let slots = rd.count()?;
    let mut spdf = BTreeMap::new();
    for _ in 0..slots {
        let c = ClassId(rd.id()?);
        let m = ModeId(rd.id()?);
        let count = rd.count()?;
        let mut comps = Vec::with_capacity(count);
        for _ in 0..count {
            let weight = rd.next()?;
            let mean = DVector::from_iterator(dim, (0..dim).map(|_| rd.next()).collect::<Result<Vec<_>>>()?);
            let mut cov = DMatrix::zeros(dim, dim);
            for i in 0..dim {
                for j in i..dim {
                    let v = rd.next()?;
                    cov[(i, j)] = v;
                    cov[(j, i)] = v;
                }
            }
            comps.push(GaussianComponent::new(weight, mean, cov));
        }
        spdf.insert((c, m), GaussianMixture::new(comps));
    }
    if rd.pos != n {
        return Err(Error::Decode(format!("{} trailing values", n - rd.pos)));
    }
    Ok(AugmentedBernoulli { r, pmf, spdf })
}
