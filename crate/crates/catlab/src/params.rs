//! Run parameters for the compression/decision engine: desk-scale defaults,
//! symbolic "full-scale" presets (kept for diagnostics; always infeasible on
//! real hardware and rejected loudly), and the correctness thresholds derived
//! from a machine's (δ, ε) error pair.

use num::{BigRational, One, Zero};
use thiserror::Error;

use crate::{pow2_inv, rat};

#[derive(Debug, Error)]
pub enum ParamsError {
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("threshold formulas require 0 ≤ delta < 2·eps and eps > 0 (got delta={delta}, eps={eps})")]
    BadErrorPair { delta: BigRational, eps: BigRational },
}

/// Scalar parameters of the compress-or-decide engine.
#[derive(Debug, Clone)]
pub struct Params {
    /// Seed width of the hash family / PRG.
    pub m: u32,
    /// Number of chained hash functions (walk length of the final PRG).
    pub l: usize,
    /// Upper threshold: a walk tree larger than this triggers timestamp
    /// compression.
    pub h_bound: u64,
    /// Lower threshold: a frequently-hit layer set at least this large
    /// triggers index compression.
    pub t_bound: u64,
    /// Independence slack for the goodness test of a hash function.
    pub alpha: BigRational,
    /// Seed-fraction threshold for membership in the frequently-hit sets.
    pub s_threshold: BigRational,
    /// Seed-fraction threshold of the always-reset (tag 11) variant.
    pub slprime_threshold: BigRational,
    /// Minimum size of the tag-11 layer set required to compress.
    pub slprime_min: u64,
    /// Trailing tar bits freed by the bad-hash scheme (tag 10).
    pub badhash_tail: usize,
}

impl Params {
    /// Desk-scale defaults: every sweep they induce is exhaustively
    /// enumerable in seconds, which is the point.
    pub fn desk() -> Self {
        let l = 8usize;
        Params {
            m: 6,
            l,
            h_bound: 1 << 12,
            t_bound: 64,
            alpha: rat(1, (2 * (l * l)) as i64),
            s_threshold: rat(1, 8),
            slprime_threshold: rat(1, 4),
            slprime_min: 2,
            badhash_tail: 1,
        }
    }

    /// The α = 1/(2l²) rule evaluated at this configuration's l.
    pub fn alpha_for(l: usize) -> BigRational {
        rat(1, (2 * l * l) as i64)
    }

    /// Worst-case error of the full PRG chain when every link is good:
    /// l·(2α + threshold).
    pub fn gamma_bound(&self) -> BigRational {
        rat(self.l as i64, 1) * (rat(2, 1) * &self.alpha + &self.s_threshold)
    }
}

/// The full-scale preset, kept symbolically (field = log2 where the value
/// itself does not fit in machine words). `s` is the work-tape width the
/// formulas are driven by.
#[derive(Debug, Clone)]
pub struct FullScalePreset {
    pub s: u64,
    /// m = 500·s
    pub m: u64,
    /// l = 2^(20·s)
    pub l_log2: u64,
    /// H = 2^(3·m)
    pub h_log2: u64,
    /// T = 2^(100·s)
    pub t_log2: u64,
    /// α = 2^-(40·s + 1)
    pub alpha_neg_log2: u64,
    /// threshold = 2^-(30·s)
    pub threshold_neg_log2: u64,
}

impl FullScalePreset {
    pub fn new(s: u64) -> Self {
        let m = 500 * s;
        FullScalePreset {
            s,
            m,
            l_log2: 20 * s,
            h_log2: 3 * m,
            t_log2: 100 * s,
            alpha_neg_log2: 40 * s + 1,
            threshold_neg_log2: 30 * s,
        }
    }

    /// Full-scale values never fit desk budgets; the diagnostic names every
    /// violated limit so the caller can see exactly why.
    pub fn realize(&self) -> Result<Params, ParamsError> {
        let mut why = Vec::new();
        if self.m > crate::gf2m::MAX_M as u64 {
            why.push(format!(
                "seed width m = 500·s = {} exceeds the widest supported field (m ≤ {})",
                self.m,
                crate::gf2m::MAX_M
            ));
        }
        if self.l_log2 > 4 {
            why.push(format!(
                "chain length l = 2^{} exceeds any enumerable walk budget",
                self.l_log2
            ));
        }
        if self.t_log2 > 16 {
            why.push(format!(
                "lower threshold T = 2^{} exceeds any enumerable layer set",
                self.t_log2
            ));
        }
        if why.is_empty() {
            // Unreachable for s ≥ 3, but keep the conversion total.
            return Ok(Params {
                m: self.m as u32,
                l: 1usize << self.l_log2,
                h_bound: 1u64 << self.h_log2.min(63),
                t_bound: 1u64 << self.t_log2.min(63),
                alpha: pow2_inv(self.alpha_neg_log2 as u32),
                s_threshold: pow2_inv(self.threshold_neg_log2 as u32),
                slprime_threshold: rat(1, 4),
                slprime_min: 1u64 << (9 * self.s).min(63),
                badhash_tail: 1,
            });
        }
        Err(ParamsError::Infeasible(why.join("; ")))
    }
}

/// Correctness thresholds derived from a machine's reset-failure bound δ and
/// advantage ε (requires δ < 2ε).
#[derive(Debug, Clone)]
pub struct Thresholds {
    pub beta: BigRational,
    pub zeta: BigRational,
    pub eta: BigRational,
}

pub fn thresholds(delta: &BigRational, eps: &BigRational) -> Result<Thresholds, ParamsError> {
    let two_eps = rat(2, 1) * eps;
    if *eps <= BigRational::zero() || *delta < BigRational::zero() || *delta >= two_eps {
        return Err(ParamsError::BadErrorPair { delta: delta.clone(), eps: eps.clone() });
    }
    let ratio = delta / &two_eps; // δ/(2ε) < 1
    let beta = rat(1, 4) * (BigRational::one() - &ratio);
    let zeta = rat(2, 1) * delta / (BigRational::one() + &ratio);
    let eta = rat(2, 1) * delta / (rat(3, 2) + delta / (rat(4, 1) * eps));
    Ok(Thresholds { beta, zeta, eta })
}
