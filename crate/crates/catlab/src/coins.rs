//! Coin streams: explicit finite bitstrings and a seeded generator.
//!
//! The CLI accepts either a hex-encoded bitstring (each hex digit supplies
//! four coins, MSB first) or `seeded:<64-bit integer>`. The seeded stream is
//! a splitmix64 expansion, fixed here for bit-reproducibility:
//!
//! ```text
//! state := seed
//! next_u64():
//!     state += 0x9E3779B97F4A7C15          (wrapping)
//!     z := state
//!     z := (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9   (wrapping)
//!     z := (z ^ (z >> 27)) * 0x94D049BB133111EB   (wrapping)
//!     return z ^ (z >> 31)
//! ```
//!
//! Coins are consumed from each successive `next_u64()` value MSB first
//! (bit 63 down to bit 0).

use std::str::FromStr;

use thiserror::Error;

use crate::bits::{BitBuf, BitsError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CoinError {
    #[error("finite coin stream exhausted after {0} coins")]
    Exhausted(usize),
    #[error("malformed coin spec {0:?}: expected hex digits or seeded:<u64>")]
    BadSpec(String),
    #[error(transparent)]
    Bits(#[from] BitsError),
}

/// Deterministic splitmix64 sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform value in `[0, bound)` by rejection from the top 64-bit range.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % bound;
            }
        }
    }
}

/// A supplier of coin bits for a run.
#[derive(Debug, Clone)]
pub enum CoinSource {
    /// A finite, explicit stream; running out is an error, never silence.
    Finite { bits: BitBuf, pos: usize },
    /// Seeded splitmix64 expansion; inexhaustible.
    Seeded { rng: SplitMix64, word: u64, bits_left: u8 },
}

impl CoinSource {
    pub fn from_bits(bits: BitBuf) -> Self {
        CoinSource::Finite { bits, pos: 0 }
    }

    /// An empty stream for deterministic runs; drawing from it is an error.
    pub fn empty() -> Self {
        Self::from_bits(BitBuf::zeros(0))
    }

    pub fn from_seed(seed: u64) -> Self {
        CoinSource::Seeded { rng: SplitMix64::new(seed), word: 0, bits_left: 0 }
    }

    /// Parses a CLI-style spec: hex digits or `seeded:<u64>`.
    pub fn parse(spec: &str) -> Result<Self, CoinError> {
        if let Some(seed) = spec.strip_prefix("seeded:") {
            let seed = u64::from_str(seed).map_err(|_| CoinError::BadSpec(spec.to_string()))?;
            return Ok(Self::from_seed(seed));
        }
        if spec.is_empty() || !spec.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(CoinError::BadSpec(spec.to_string()));
        }
        let bits = BitBuf::from_hex(spec, spec.len() * 4)?;
        Ok(Self::from_bits(bits))
    }

    pub fn next_coin(&mut self) -> Result<u8, CoinError> {
        match self {
            CoinSource::Finite { bits, pos } => {
                if *pos >= bits.len() {
                    return Err(CoinError::Exhausted(bits.len()));
                }
                let b = bits.get(*pos);
                *pos += 1;
                Ok(b)
            }
            CoinSource::Seeded { rng, word, bits_left } => {
                if *bits_left == 0 {
                    *word = rng.next_u64();
                    *bits_left = 64;
                }
                *bits_left -= 1;
                Ok(((*word >> *bits_left) & 1) as u8)
            }
        }
    }

    pub fn consumed(&self) -> Option<usize> {
        match self {
            CoinSource::Finite { pos, .. } => Some(*pos),
            CoinSource::Seeded { .. } => None,
        }
    }
}
