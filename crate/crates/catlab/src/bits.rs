//! Fixed-width and growable bitstrings.
//!
//! Index 0 is the **leftmost** character of the displayed string everywhere in
//! this crate. When a bitstring is read as an integer, index 0 is the most
//! significant bit. Hex renderings are MSB-first nibbles of the displayed
//! string; a final partial nibble is padded with zeros on the right.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BitsError {
    #[error("bitstring length {0} exceeds the packed limit of 128")]
    TooLong(usize),
    #[error("expected {expected} bits, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid character {0:?} in bitstring")]
    BadChar(char),
    #[error("invalid hex character {0:?}")]
    BadHex(char),
    #[error("bit index {index} out of range for length {len}")]
    IndexRange { index: usize, len: usize },
}

/// A packed bitstring of length ≤ 128. `Copy`, cheap to hash and compare.
///
/// Logical bit `i` (0 = leftmost) is stored at bit position `i` of `raw`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bits {
    raw: u128,
    len: u8,
}

impl Bits {
    pub const MAX_LEN: usize = 128;

    /// All-zero string of the given length.
    pub fn zeros(len: usize) -> Self {
        assert!(len <= Self::MAX_LEN, "bit length {len} exceeds 128");
        Bits { raw: 0, len: len as u8 }
    }

    /// All-one string of the given length.
    pub fn ones(len: usize) -> Self {
        let mut b = Self::zeros(len);
        for i in 0..len {
            b.set(i, 1);
        }
        b
    }

    /// Builds from an integer value, index 0 = most significant of `len` bits.
    pub fn from_int(value: u128, len: usize) -> Self {
        assert!(len <= Self::MAX_LEN);
        assert!(len == 128 || value < (1u128 << len).max(1), "value does not fit in {len} bits");
        let mut b = Self::zeros(len);
        for i in 0..len {
            b.set(i, ((value >> (len - 1 - i)) & 1) as u8);
        }
        b
    }

    /// Reads the string as an integer, index 0 = most significant bit.
    pub fn to_int(self) -> u128 {
        let mut v = 0u128;
        for i in 0..self.len() {
            v = (v << 1) | self.get(i) as u128;
        }
        v
    }

    pub fn len(self) -> usize {
        self.len as usize
    }

    pub fn is_empty(self) -> bool {
        self.len == 0
    }

    pub fn get(self, i: usize) -> u8 {
        assert!(i < self.len(), "bit index {i} out of range for length {}", self.len);
        ((self.raw >> i) & 1) as u8
    }

    pub fn set(&mut self, i: usize, bit: u8) {
        assert!(i < self.len(), "bit index {i} out of range for length {}", self.len);
        debug_assert!(bit <= 1);
        if bit == 1 {
            self.raw |= 1u128 << i;
        } else {
            self.raw &= !(1u128 << i);
        }
    }

    pub fn with(mut self, i: usize, bit: u8) -> Self {
        self.set(i, bit);
        self
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len());
        self.raw ^= 1u128 << i;
    }

    /// Bitwise XOR; lengths must match.
    pub fn xor(self, other: Bits) -> Bits {
        assert_eq!(self.len, other.len, "xor length mismatch");
        Bits { raw: self.raw ^ other.raw, len: self.len }
    }

    pub fn count_ones(self) -> u32 {
        self.raw.count_ones()
    }

    /// Number of positions at which the two strings differ.
    pub fn hamming(self, other: Bits) -> Result<u32, BitsError> {
        if self.len != other.len {
            return Err(BitsError::LengthMismatch { expected: self.len(), got: other.len() });
        }
        Ok((self.raw ^ other.raw).count_ones())
    }

    /// Concatenation: `self` first (leftmost), then `other`.
    pub fn concat(self, other: Bits) -> Bits {
        let len = self.len() + other.len();
        assert!(len <= Self::MAX_LEN, "concatenation exceeds 128 bits");
        Bits { raw: self.raw | (other.raw << self.len()), len: len as u8 }
    }

    /// The `len`-bit substring starting at index `start`.
    pub fn slice(self, start: usize, len: usize) -> Bits {
        assert!(start + len <= self.len(), "slice out of range");
        let mask = if len == 128 { u128::MAX } else { (1u128 << len) - 1 };
        Bits { raw: (self.raw >> start) & mask, len: len as u8 }
    }

    pub fn iter(self) -> impl Iterator<Item = u8> {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// All bitstrings of the given length in ascending `to_int` order.
    pub fn all(len: usize) -> impl Iterator<Item = Bits> {
        assert!(len < 64, "exhaustive enumeration capped below 2^64");
        (0..(1u128 << len)).map(move |v| Bits::from_int(v, len))
    }

    /// Parses from a string of ASCII '0'/'1'.
    pub fn parse_binary(s: &str) -> Result<Self, BitsError> {
        if s.len() > Self::MAX_LEN {
            return Err(BitsError::TooLong(s.len()));
        }
        let mut b = Self::zeros(s.len());
        for (i, ch) in s.chars().enumerate() {
            match ch {
                '0' => {}
                '1' => b.set(i, 1),
                other => return Err(BitsError::BadChar(other)),
            }
        }
        Ok(b)
    }

    /// Hex rendering: nibbles left to right, final partial nibble zero-padded
    /// on the right. `len` is not part of the rendering and must be carried
    /// separately.
    pub fn to_hex(self) -> String {
        bits_to_hex(&self.iter().collect::<Vec<_>>())
    }

    /// Parses `len` bits from a hex string (which must supply ≥ len bits).
    pub fn from_hex(s: &str, len: usize) -> Result<Self, BitsError> {
        let bits = hex_to_bits(s)?;
        if bits.len() < len || len > Self::MAX_LEN {
            return Err(BitsError::LengthMismatch { expected: len, got: bits.len() });
        }
        let mut b = Self::zeros(len);
        for (i, &bit) in bits[..len].iter().enumerate() {
            b.set(i, bit);
        }
        Ok(b)
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len() {
            write!(f, "{}", self.get(i))?;
        }
        Ok(())
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bits({self})")
    }
}

impl FromStr for Bits {
    type Err = BitsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_binary(s)
    }
}

impl PartialOrd for Bits {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Lexicographic order on the displayed string (character by character).
impl Ord for Bits {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let common = self.len().min(other.len());
        for i in 0..common {
            match self.get(i).cmp(&other.get(i)) {
                std::cmp::Ordering::Equal => {}
                ord => return ord,
            }
        }
        self.len().cmp(&other.len())
    }
}

/// A growable bitstring for layouts longer than 128 bits (structured tapes,
/// long concatenated tapes). Same index-0-leftmost convention as [`Bits`].
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitBuf {
    bits: Vec<u8>,
}

impl BitBuf {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn zeros(len: usize) -> Self {
        BitBuf { bits: vec![0; len] }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> u8 {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, bit: u8) {
        debug_assert!(bit <= 1);
        self.bits[i] = bit;
    }

    pub fn push(&mut self, bit: u8) {
        debug_assert!(bit <= 1);
        self.bits.push(bit);
    }

    pub fn push_bits(&mut self, b: Bits) {
        for bit in b.iter() {
            self.bits.push(bit);
        }
    }

    pub fn extend(&mut self, other: &BitBuf) {
        self.bits.extend_from_slice(&other.bits);
    }

    /// Reads a packed [`Bits`] out of the range `[start, start+len)`.
    pub fn read_bits(&self, start: usize, len: usize) -> Bits {
        assert!(start + len <= self.len(), "read out of range");
        let mut b = Bits::zeros(len);
        for i in 0..len {
            b.set(i, self.bits[start + i]);
        }
        b
    }

    /// Writes a packed [`Bits`] into the range starting at `start`.
    pub fn write_bits(&mut self, start: usize, b: Bits) {
        assert!(start + b.len() <= self.len(), "write out of range");
        for i in 0..b.len() {
            self.bits[start + i] = b.get(i);
        }
    }

    pub fn slice(&self, start: usize, len: usize) -> BitBuf {
        assert!(start + len <= self.len(), "slice out of range");
        BitBuf { bits: self.bits[start..start + len].to_vec() }
    }

    pub fn to_hex(&self) -> String {
        bits_to_hex(&self.bits)
    }

    pub fn from_hex(s: &str, len: usize) -> Result<Self, BitsError> {
        let bits = hex_to_bits(s)?;
        if bits.len() < len {
            return Err(BitsError::LengthMismatch { expected: len, got: bits.len() });
        }
        Ok(BitBuf { bits: bits[..len].to_vec() })
    }

    pub fn parse_binary(s: &str) -> Result<Self, BitsError> {
        let mut bits = Vec::with_capacity(s.len());
        for ch in s.chars() {
            match ch {
                '0' => bits.push(0),
                '1' => bits.push(1),
                other => return Err(BitsError::BadChar(other)),
            }
        }
        Ok(BitBuf { bits })
    }
}

impl fmt::Display for BitBuf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitBuf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitBuf({self})")
    }
}

fn bits_to_hex(bits: &[u8]) -> String {
    let mut out = String::with_capacity(bits.len().div_ceil(4));
    for chunk in bits.chunks(4) {
        let mut nibble = 0u8;
        for (j, &b) in chunk.iter().enumerate() {
            nibble |= b << (3 - j);
        }
        out.push(char::from_digit(nibble as u32, 16).unwrap());
    }
    out
}

fn hex_to_bits(s: &str) -> Result<Vec<u8>, BitsError> {
    let mut bits = Vec::with_capacity(s.len() * 4);
    for ch in s.chars() {
        let nibble = ch.to_digit(16).ok_or(BitsError::BadHex(ch))? as u8;
        for j in 0..4 {
            bits.push((nibble >> (3 - j)) & 1);
        }
    }
    Ok(bits)
}

/// Number of bits needed to address a domain of `domain` values (≥ 0 for a
/// domain of 1). This is the field width used by canonical serialization.
pub fn width_for(domain: usize) -> usize {
    if domain <= 1 {
        0
    } else {
        (usize::BITS - (domain - 1).leading_zeros()) as usize
    }
}
