//! Boolean decision vectors.
//!
//! Vectors are stored packed and serialized as strings of `0`/`1`
//! characters. Long vectors may optionally be run-length encoded for the
//! wire (`r<first-bit>:<run>,<run>,...`), which the decoder accepts
//! transparently.

use std::fmt;

use bitvec::prelude::*;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A packed Boolean vector `X`.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Bits(BitVec<u64, Lsb0>);

impl Bits {
    pub fn zeros(len: usize) -> Self {
        Bits(bitvec![u64, Lsb0; 0; len])
    }

    pub fn ones(len: usize) -> Self {
        Bits(bitvec![u64, Lsb0; 1; len])
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Bits(iter.into_iter().collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, index: usize) -> bool {
        self.0[index]
    }

    #[inline]
    pub fn set(&mut self, index: usize, value: bool) {
        self.0.set(index, value);
    }

    pub fn count_ones(&self) -> usize {
        self.0.count_ones()
    }

    pub fn count_ones_in(&self, range: std::ops::Range<usize>) -> usize {
        self.0[range].count_ones()
    }

    /// Indices of the set positions, ascending.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter_ones()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().by_vals()
    }

    pub fn hamming(&self, other: &Bits) -> usize {
        self.iter().zip(other.iter()).filter(|(a, b)| a != b).count()
    }

    /// Plain `0`/`1` rendering.
    pub fn to_bit_string(&self) -> String {
        self.iter().map(|b| if b { '1' } else { '0' }).collect()
    }

    /// Run-length rendering: `r<first>:<len>,<len>,...` with alternating
    /// runs starting at bit value `<first>`.
    pub fn to_rle_string(&self) -> String {
        let mut out = String::new();
        let first = self.len() > 0 && self.get(0);
        out.push('r');
        out.push(if first { '1' } else { '0' });
        out.push(':');
        let mut current = first;
        let mut run = 0usize;
        let mut runs = Vec::new();
        for b in self.iter() {
            if b == current {
                run += 1;
            } else {
                runs.push(run);
                current = b;
                run = 1;
            }
        }
        if run > 0 {
            runs.push(run);
        }
        let joined: Vec<String> = runs.iter().map(|r| r.to_string()).collect();
        out.push_str(&joined.join(","));
        out
    }

    /// Parses either encoding.
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix('r') {
            return Self::parse_rle(rest);
        }
        let mut bits = BitVec::with_capacity(s.len());
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => bits.push(false),
                '1' => bits.push(true),
                other => {
                    return Err(Error::invalid(format!(
                        "bit string has `{other}` at position {i}"
                    )))
                }
            }
        }
        Ok(Bits(bits))
    }

    fn parse_rle(rest: &str) -> Result<Self> {
        let (first, runs) = rest
            .split_once(':')
            .ok_or_else(|| Error::invalid("run-length bit string lacks `:`"))?;
        let mut value = match first {
            "0" => false,
            "1" => true,
            _ => return Err(Error::invalid("run-length bit string has bad leading bit")),
        };
        let mut bits = BitVec::new();
        if !runs.is_empty() {
            for run in runs.split(',') {
                let n: usize = run
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad run length `{run}`")))?;
                bits.extend(std::iter::repeat(value).take(n));
                value = !value;
            }
        }
        Ok(Bits(bits))
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bits({})", self.to_bit_string())
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bit_string())
    }
}

impl From<&[u8]> for Bits {
    fn from(v: &[u8]) -> Self {
        Bits::from_bools(v.iter().map(|&b| b != 0))
    }
}

impl Serialize for Bits {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_bit_string())
    }
}

impl<'de> Deserialize<'de> for Bits {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Bits::parse(&s).map_err(de::Error::custom)
    }
}
