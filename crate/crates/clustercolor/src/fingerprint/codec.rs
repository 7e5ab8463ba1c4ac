//! Bit-exact wire format: LEB128 baseline `k`, then per coordinate a sign bit and the
//! deviation magnitude in unary (`1^m 0`).

use super::FingerprintVector;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EncodedFingerprint {
    pub baseline: u64,
    bytes: Vec<u8>,
    len: usize,
}

impl EncodedFingerprint {
    /// Exact length of the stream in bits.
    pub fn bit_len(&self) -> usize {
        self.len
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Wraps a raw stream of `len` bits.
    pub fn from_raw(bytes: Vec<u8>, len: usize) -> Result<Self> {
        if len > bytes.len() * 8 {
            return Err(Error::Decode(format!("{len} bits declared, {} available", bytes.len() * 8)));
        }
        let mut e = Self { baseline: 0, bytes, len };
        e.baseline = BitReader::new(&e).varint()?;
        Ok(e)
    }
}

#[derive(Default)]
struct BitWriter {
    bytes: Vec<u8>,
    len: usize,
}

impl BitWriter {
    fn push(&mut self, bit: bool) {
        if self.len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            self.bytes[self.len / 8] |= 1 << (self.len % 8);
        }
        self.len += 1;
    }

    fn varint(&mut self, mut k: u64) {
        loop {
            let group = (k & 0x7f) as u8;
            k >>= 7;
            for i in 0..7 {
                self.push(group >> i & 1 == 1);
            }
            self.push(k != 0);
            if k == 0 {
                break;
            }
        }
    }
}

struct BitReader<'a> {
    e: &'a EncodedFingerprint,
    pos: usize,
}

impl<'a> BitReader<'a> {
    fn new(e: &'a EncodedFingerprint) -> Self {
        Self { e, pos: 0 }
    }

    fn done(&self) -> bool {
        self.pos >= self.e.len
    }

    fn bit(&mut self) -> Result<bool> {
        if self.done() {
            return Err(Error::Decode(format!("stream ends at bit {}", self.pos)));
        }
        let b = self.e.bytes[self.pos / 8] >> (self.pos % 8) & 1 == 1;
        self.pos += 1;
        Ok(b)
    }

    fn varint(&mut self) -> Result<u64> {
        let mut k = 0u64;
        for shift in (0..64).step_by(7) {
            let mut group = 0u64;
            for i in 0..7 {
                group |= u64::from(self.bit()?) << i;
            }
            k |= group << shift;
            if !self.bit()? {
                return Ok(k);
            }
        }
        Err(Error::Decode("baseline varint longer than 64 bits".into()))
    }
}

fn varint_len(k: u64) -> usize {
    let groups = if k == 0 { 1 } else { (64 - k.leading_zeros() as usize).div_ceil(7) };
    groups * 8
}

/// Encoded length for a given baseline, without building the stream.
fn len_with(v: &FingerprintVector, k: i64) -> usize {
    varint_len(k as u64) + v.values().iter().map(|&y| 2 + (i64::from(y) - k).unsigned_abs() as usize).sum::<usize>()
}

fn best_baseline(v: &FingerprintVector) -> i64 {
    let hi = v.values().iter().copied().max().unwrap_or(0).max(0);
    // Scan every candidate baseline over a value histogram.
    let mut hist = [0usize; 130];
    for &y in v.values() {
        hist[(i64::from(y) + 1) as usize] += 1;
    }
    let t = v.len();
    let mut best = (usize::MAX, 0i64);
    for k in 0..=i64::from(hi) {
        let mut dev = 0usize;
        for (slot, &c) in hist.iter().enumerate() {
            if c > 0 {
                dev += c * ((slot as i64 - 1) - k).unsigned_abs() as usize;
            }
        }
        let len = varint_len(k as u64) + 2 * t + dev;
        if len < best.0 {
            best = (len, k);
        }
    }
    best.1
}

/// Length in bits of [`encode`]'s output.
pub fn encoded_len(v: &FingerprintVector) -> usize {
    len_with(v, best_baseline(v))
}

pub fn encode(v: &FingerprintVector) -> EncodedFingerprint {
    let k = best_baseline(v);
    let mut w = BitWriter::default();
    w.varint(k as u64);
    for &y in v.values() {
        let dev = i64::from(y) - k;
        w.push(dev < 0);
        for _ in 0..dev.unsigned_abs() {
            w.push(true);
        }
        w.push(false);
    }
    debug_assert_eq!(w.len, len_with(v, k));
    EncodedFingerprint { baseline: k as u64, bytes: w.bytes, len: w.len }
}

pub fn decode(e: &EncodedFingerprint) -> Result<FingerprintVector> {
    let mut r = BitReader::new(e);
    let k = r.varint()?;
    if k > 127 {
        return Err(Error::Decode(format!("baseline {k} exceeds the value range")));
    }
    let mut out = Vec::new();
    while !r.done() {
        let negative = r.bit()?;
        let mut m = 0i64;
        while r.bit()? {
            m += 1;
            if m > 256 {
                return Err(Error::Decode("unary run too long".into()));
            }
        }
        let y = if negative { k as i64 - m } else { k as i64 + m };
        if negative && m == 0 {
            return Err(Error::Decode("negative zero deviation".into()));
        }
        if !(-1..=127).contains(&y) {
            return Err(Error::Decode(format!("coordinate value {y} out of range")));
        }
        out.push(y as i8);
    }
    Ok(FingerprintVector::from_values(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[i8]) -> FingerprintVector {
        FingerprintVector::from_values(v.to_vec())
    }

    #[test]
    fn constant_vector() {
        let v = fv(&[3, 3, 3]);
        let e = encode(&v);
        assert_eq!(e.baseline, 3);
        assert_eq!(e.bit_len(), 8 + 3 * 2);
        assert_eq!(decode(&e).unwrap(), v);
    }

    #[test]
    fn spread_vector() {
        let v = fv(&[2, 4]);
        let e = encode(&v);
        // Baselines 2, 3 and 4 all cost 2·2 + 2 deviation bits; the smallest wins.
        assert_eq!(e.baseline, 2);
        assert_eq!(e.bit_len(), 8 + 4 + 2);
        assert_eq!(decode(&e).unwrap(), v);
        assert_eq!(len_with(&v, 3), 8 + 4 + 2);
    }

    #[test]
    fn empty_entries_roundtrip() {
        let v = fv(&[-1, -1, 0, 5]);
        assert_eq!(decode(&encode(&v)).unwrap(), v);
        assert_eq!(encoded_len(&v), encode(&v).bit_len());
    }

    #[test]
    fn malformed_streams() {
        assert!(EncodedFingerprint::from_raw(vec![0x80], 8).is_err());
        assert!(EncodedFingerprint::from_raw(vec![], 3).is_err());
        // k = 0, then a sign bit and an unterminated unary run.
        let e = EncodedFingerprint::from_raw(vec![0x00, 0b0000_0110], 11).unwrap();
        assert!(decode(&e).is_err());
        // k = 0, negative deviation of 2 gives -2.
        let e = EncodedFingerprint::from_raw(vec![0x00, 0b0000_0111], 12).unwrap();
        assert!(decode(&e).is_err());
    }
}
