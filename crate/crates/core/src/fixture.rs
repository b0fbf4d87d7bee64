//! Binary fixtures for batches, factors and chains.
//!
//! All integers are little-endian. Layout codes: 0 batch-size-first,
//! 1 batch-size-last. Scalar codes: 0 FP32, 1 FP64.
//!
//! ```text
//! batch:  "KSMB" u32 version u32 batch u32 features u8 layout u8 scalar values…
//! factor: "KSFA" u32 version u32 a u32 b u32 c u32 d u8 scalar values…
//! chain:  "KSCH" u32 version u32 L, then L factor records (outermost first)
//! ```

use std::path::Path;

use crate::batch::{BatchMatrix, Layout};
use crate::error::{KsError, Result};
use crate::factor::KsFactor;
use crate::pattern::KsPattern;
use crate::scalar::{Scalar, ScalarKind};

pub const VERSION: u32 = 1;
const BATCH_MAGIC: &[u8; 4] = b"KSMB";
const FACTOR_MAGIC: &[u8; 4] = b"KSFA";
const CHAIN_MAGIC: &[u8; 4] = b"KSCH";

fn put_u32(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v)
        .map_err(|_| KsError::Format(format!("{what} = {v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| KsError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != magic {
            return Err(KsError::Format(format!(
                "expected magic {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(got)
            )));
        }
        let version = self.u32()? as u32;
        if version != VERSION {
            return Err(KsError::Format(format!("unsupported version {version}")));
        }
        Ok(())
    }

    fn scalar<T: Scalar>(&mut self) -> Result<()> {
        let code = self.u8()?;
        let kind = ScalarKind::from_code(code)
            .ok_or_else(|| KsError::Format(format!("unknown scalar code {code}")))?;
        if kind != T::KIND {
            return Err(KsError::Format(format!(
                "fixture holds {kind}, requested {}",
                T::KIND
            )));
        }
        Ok(())
    }

    fn values<T: Scalar>(&mut self, count: usize) -> Result<Vec<T>> {
        let width = T::KIND.width_bytes();
        let len = count
            .checked_mul(width)
            .ok_or_else(|| KsError::Format(format!("{count} values overflow")))?;
        Ok(self
            .take(len)?
            .chunks_exact(width)
            .map(T::read_le)
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(KsError::Format(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn encode_batch<T: Scalar>(m: &BatchMatrix<T>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(18 + m.data().len() * T::KIND.width_bytes());
    out.extend_from_slice(BATCH_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut out, m.batch(), "batch")?;
    put_u32(&mut out, m.features(), "features")?;
    out.push(m.layout().code());
    out.push(T::KIND.code());
    for &v in m.data() {
        v.write_le(&mut out);
    }
    Ok(out)
}

pub fn decode_batch<T: Scalar>(bytes: &[u8]) -> Result<BatchMatrix<T>> {
    let mut r = Reader { bytes, pos: 0 };
    r.header(BATCH_MAGIC)?;
    let batch = r.u32()?;
    let features = r.u32()?;
    let code = r.u8()?;
    let layout = Layout::from_code(code)
        .ok_or_else(|| KsError::Format(format!("unknown layout code {code}")))?;
    r.scalar::<T>()?;
    let count = batch
        .checked_mul(features)
        .ok_or_else(|| KsError::Format("batch size overflows".into()))?;
    let data = r.values(count)?;
    r.finish()?;
    BatchMatrix::from_vec(batch, features, layout, data)
}

fn write_factor_record<T: Scalar>(out: &mut Vec<u8>, k: &KsFactor<T>) -> Result<()> {
    out.extend_from_slice(FACTOR_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let (a, b, c, d) = k.pattern().tuple();
    for (v, what) in [(a, "a"), (b, "b"), (c, "c"), (d, "d")] {
        put_u32(out, v, what)?;
    }
    out.push(T::KIND.code());
    for &v in k.values() {
        v.write_le(out);
    }
    Ok(())
}

fn read_factor_record<T: Scalar>(r: &mut Reader<'_>) -> Result<KsFactor<T>> {
    r.header(FACTOR_MAGIC)?;
    let (a, b, c, d) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    let pattern = KsPattern::new(a, b, c, d)?;
    r.scalar::<T>()?;
    let values = r.values(pattern.nnz())?;
    KsFactor::new(pattern, values)
}

pub fn encode_factor<T: Scalar>(k: &KsFactor<T>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(25 + k.values().len() * T::KIND.width_bytes());
    write_factor_record(&mut out, k)?;
    Ok(out)
}

pub fn decode_factor<T: Scalar>(bytes: &[u8]) -> Result<KsFactor<T>> {
    let mut r = Reader { bytes, pos: 0 };
    let k = read_factor_record(&mut r)?;
    r.finish()?;
    Ok(k)
}

pub fn encode_chain<T: Scalar>(factors: &[KsFactor<T>]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHAIN_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut out, factors.len(), "chain length")?;
    for k in factors {
        write_factor_record(&mut out, k)?;
    }
    Ok(out)
}

pub fn decode_chain<T: Scalar>(bytes: &[u8]) -> Result<Vec<KsFactor<T>>> {
    let mut r = Reader { bytes, pos: 0 };
    r.header(CHAIN_MAGIC)?;
    let len = r.u32()?;
    let factors = (0..len)
        .map(|_| read_factor_record(&mut r))
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(factors)
}

pub fn save_batch<T: Scalar>(path: &Path, m: &BatchMatrix<T>) -> Result<()> {
    Ok(std::fs::write(path, encode_batch(m)?)?)
}

pub fn load_batch<T: Scalar>(path: &Path) -> Result<BatchMatrix<T>> {
    decode_batch(&std::fs::read(path)?)
}

pub fn save_factor<T: Scalar>(path: &Path, k: &KsFactor<T>) -> Result<()> {
    Ok(std::fs::write(path, encode_factor(k)?)?)
}

pub fn load_factor<T: Scalar>(path: &Path) -> Result<KsFactor<T>> {
    decode_factor(&std::fs::read(path)?)
}

pub fn save_chain<T: Scalar>(path: &Path, factors: &[KsFactor<T>]) -> Result<()> {
    Ok(std::fs::write(path, encode_chain(factors)?)?)
}

pub fn load_chain<T: Scalar>(path: &Path) -> Result<Vec<KsFactor<T>>> {
    decode_chain(&std::fs::read(path)?)
}
