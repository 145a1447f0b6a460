//! catlab — a simulator and algorithm laboratory for catalytic Turing machines
//! with lossy tape-resetting semantics.
//!
//! A catalytic machine owns four tapes: a read-only input, a write-only output
//! (modeled as the halt kind), an `s`-bit work tape, and a `c`-bit catalytic
//! tape whose initial contents must be restored on halt — exactly, or with a
//! bounded number of bit errors in the lossy regimes. Everything here is built
//! to be verifiable by exhaustive enumeration at desk scale:
//!
//! - [`machine`] — machine specs, configurations, single-step semantics;
//! - [`simulator`] — runs, class-semantics verifiers with exact rationals;
//! - [`transforms`] — machine-to-machine constructions (majority boosting,
//!   error halving/squaring, deliberate high-error machines, coin-XOR);
//! - [`confgraph`] — configuration graphs, reversible pre-order traversal,
//!   layered graphs, selection trees and their walks;
//! - [`oracle`] — exact reach probabilities by dynamic programming; ground
//!   truth for every derived quantity;
//! - [`hashprg`] — affine hash family over GF(2^m), the hash-chain generator,
//!   independence/goodness audits and the bad-hash bound;
//! - [`ecc`] — BCH encode/decode and the encode-run-decode lossless wrapper;
//! - [`compressor`] — the structured-tape engine: four reversible compression
//!   schemes, the compress-or-decide driver, and the decision procedures
//!   built on top of it;
//! - [`cliops`] — report formatting shared by the command-line front end;
//! - [`acceptance`] — the acceptance battery, one pass/fail line per check.
//!
//! No floating point appears in any verdict: probabilities are exact
//! `BigRational`s throughout.

pub mod acceptance;
pub mod bits;
pub mod cliops;
pub mod coins;
pub mod compressor;
pub mod confgraph;
pub mod ecc;
pub mod gf2m;
pub mod hashprg;
pub mod machine;
pub mod machines;
pub mod oracle;
pub mod par;
pub mod params;
pub mod simulator;
pub mod tape;
pub mod transforms;

pub use bits::{BitBuf, Bits};
pub use machine::{Configuration, HaltKind, MachineSpec};

use num::BigRational;

/// Shorthand for an exact rational from an integer pair.
pub fn rat(num: i64, den: i64) -> BigRational {
    BigRational::new(num.into(), den.into())
}

/// Exact rational `1/2^k`.
pub fn pow2_inv(k: u32) -> BigRational {
    BigRational::new(1.into(), num::BigInt::from(1u8) << k)
}

/// Exact rational `2^k`.
pub fn pow2(k: u32) -> BigRational {
    BigRational::new(num::BigInt::from(1u8) << k, 1.into())
}
