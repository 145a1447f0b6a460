//! Error-correcting armor for the catalytic tape.
//!
//! A machine that damages a bounded number of tape positions can be wrapped
//! so the tape always comes back exactly: encode the tape's content
//! systematically into spare work cells before the run, let the inner machine
//! do its damage, then decode and repair afterwards. The code used is a
//! shortened binary BCH code over GF(2^μ): `c` data bits (the catalytic tape)
//! followed by `r₀` genuine parity bits and zero padding up to the declared
//! redundancy budget `(2e+1)·⌈log₂(c+e)⌉`, which the genuine parity must fit
//! inside for the parameters to be admissible.
//!
//! [`enc_bch`] / [`dec_bch`] operate on plain bit vectors; [`dec_bch`]
//! corrects up to `e` flipped positions anywhere in the codeword via
//! syndromes, a Berlekamp–Massey locator, and an exhaustive root search.
//! [`brute_force_decode`] is the independent nearest-codeword oracle used to
//! cross-check it. [`lossless_wrapper`] turns the whole scheme into a single
//! product machine whose catalytic tape survives every run exactly whenever
//! the inner machine's damage stays within the corrected radius.

use std::collections::BTreeMap;

use num::{BigRational, One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::bits::{width_for, Bits};
use crate::gf2m::{gf_inv, gf_mul, gf_pow};
use crate::machine::{HaltKind, MachineSpec, Move, StateId};
use crate::simulator::{halt_distribution, SimError};
use crate::transforms::{build_product, moved, Micro, Next, TransformError};

/// Everything that can go wrong while encoding, decoding, or wrapping.
#[derive(Debug, Error)]
pub enum EccError {
    /// The genuine parity needed by the smallest workable field exceeds the
    /// declared redundancy budget, or no field up to GF(2^16) fits.
    #[error("code for {c} data bits correcting {e} needs {needed} parity bits, budget {budget}")]
    InadmissibleParams { c: usize, e: u64, needed: usize, budget: usize },
    /// Codewords are capped at 128 bits by the dense bit-vector type.
    #[error("codeword would be {len} bits long (limit 128)")]
    WordTooLong { len: usize },
    /// A message or word of the wrong width was passed in.
    #[error("expected a {want}-bit value, got {got} bits")]
    LengthMismatch { want: usize, got: usize },
    /// More errors than the code can locate: the word is not within distance
    /// `e` of any codeword consistent with its syndromes.
    #[error("received word is not decodable within the design radius")]
    DecodeFailure,
    /// An exhaustive operation would enumerate more cases than allowed.
    #[error("exhaustive scan needs {needed} cases, budget {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },
    /// The per-run damage budget must be a probability-like value in (0, 1].
    #[error("damage budget must satisfy 0 < delta <= 1")]
    BadDelta,
    /// The wrapper tracks all syndromes in its control state; the packed
    /// width must fit a machine word.
    #[error("wrapper would need {bits} syndrome bits in control (limit 64)")]
    WrapperTooWide { bits: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

// ---------------------------------------------------------------------------
// Polynomials over GF(2), packed into u64 (bit i = coefficient of x^i).
// ---------------------------------------------------------------------------

fn p_deg(p: u64) -> usize {
    debug_assert!(p != 0);
    63 - p.leading_zeros() as usize
}

fn p_mul(a: u64, b: u64) -> u64 {
    let mut out: u64 = 0;
    let mut a = a;
    let mut shift = 0;
    while a != 0 {
        if a & 1 == 1 {
            out ^= b << shift;
        }
        a >>= 1;
        shift += 1;
    }
    out
}

// ---------------------------------------------------------------------------
// Field setup: primitive element, minimal polynomials, generator polynomial.
// ---------------------------------------------------------------------------

/// Smallest element of GF(2^μ) whose powers enumerate every nonzero element.
fn find_primitive(mu: u32) -> u32 {
    let n = (1u64 << mu) - 1;
    let mut prime_factors: Vec<u64> = Vec::new();
    let mut rest = n;
    let mut d = 2u64;
    while d * d <= rest {
        if rest % d == 0 {
            prime_factors.push(d);
            while rest % d == 0 {
                rest /= d;
            }
        }
        d += 1;
    }
    if rest > 1 {
        prime_factors.push(rest);
    }
    'candidates: for g in 2..(1u32 << mu) {
        for &p in &prime_factors {
            if gf_pow(mu, g, n / p) == 1 {
                continue 'candidates;
            }
        }
        return g;
    }
    unreachable!("every binary field has a primitive element");
}

/// Exponents in the conjugacy orbit of α^i under squaring, smallest first.
fn coset(n: u64, i: u64) -> Vec<u64> {
    let mut members = vec![i % n];
    let mut j = (i * 2) % n;
    while j != i % n {
        members.push(j);
        j = (j * 2) % n;
    }
    members.sort_unstable();
    members
}

/// Minimal polynomial of α^i over GF(2), as a packed GF(2) polynomial.
fn min_poly(mu: u32, alpha: u32, i: u64) -> u64 {
    let n = (1u64 << mu) - 1;
    // Product of (x − α^j) over the conjugacy orbit, computed in GF(2^μ)[x].
    let mut coeffs: Vec<u32> = vec![1];
    for &j in &coset(n, i) {
        let root = gf_pow(mu, alpha, j);
        let mut next = vec![0u32; coeffs.len() + 1];
        for (k, &ck) in coeffs.iter().enumerate() {
            next[k + 1] ^= ck;
            next[k] ^= gf_mul(mu, ck, root);
        }
        coeffs = next;
    }
    let mut packed: u64 = 0;
    for (k, &ck) in coeffs.iter().enumerate() {
        debug_assert!(ck <= 1, "minimal polynomial must have binary coefficients");
        packed |= (ck as u64) << k;
    }
    packed
}

/// Least common multiple of the minimal polynomials of α^1 … α^{2e}: the
/// generator of the cyclic code with designed distance 2e+1.
fn generator_poly(mu: u32, alpha: u32, e: u64) -> u64 {
    let n = (1u64 << mu) - 1;
    let mut seen_reps: Vec<u64> = Vec::new();
    let mut g: u64 = 1;
    for i in 1..=(2 * e) {
        let rep = coset(n, i)[0];
        if !seen_reps.contains(&rep) {
            seen_reps.push(rep);
            g = p_mul(g, min_poly(mu, alpha, i));
        }
    }
    g
}

// ---------------------------------------------------------------------------
// Code parameters.
// ---------------------------------------------------------------------------

/// A shortened binary BCH code protecting `c` data bits against up to `e`
/// flips, padded out to the declared redundancy budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BchParams {
    /// Number of data bits (the catalytic tape width being protected).
    pub c: usize,
    /// Number of correctable flips.
    pub e: u64,
    /// Field degree: arithmetic happens in GF(2^μ). Zero when `e = 0`.
    pub mu: u32,
    /// Parent cyclic code length 2^μ − 1.
    pub n: u64,
    /// Genuine parity bits: the degree of the generator polynomial.
    pub r0: usize,
    /// Generator polynomial over GF(2), bit i = coefficient of x^i.
    pub generator: u64,
    /// The primitive element whose powers index code roots.
    pub alpha: u32,
    /// Total codeword length: `c` data bits plus the full redundancy budget.
    pub len: usize,
    /// Declared redundancy budget `(2e+1)·⌈log₂(c+e)⌉`; parity that the
    /// construction does not use is padded with constant zeros.
    pub parity_budget: usize,
}

impl BchParams {
    /// Picks the smallest field whose shortened code carries `c` data bits,
    /// and checks its genuine parity fits the declared redundancy budget.
    pub fn new(c: usize, e: u64) -> Result<BchParams, EccError> {
        if c == 0 {
            return Err(EccError::LengthMismatch { want: 1, got: 0 });
        }
        let parity_budget = (2 * e as usize + 1) * width_for(c + e as usize);
        let len = c + parity_budget;
        if len > 128 {
            return Err(EccError::WordTooLong { len });
        }
        if e == 0 {
            return Ok(BchParams {
                c,
                e,
                mu: 0,
                n: c as u64,
                r0: 0,
                generator: 1,
                alpha: 0,
                len,
                parity_budget,
            });
        }
        for mu in 2..=16u32 {
            let n = (1u64 << mu) - 1;
            if 2 * e + 1 > n {
                continue;
            }
            let alpha = find_primitive(mu);
            let g = generator_poly(mu, alpha, e);
            let r0 = p_deg(g);
            if n - r0 as u64 >= c as u64 {
                if r0 > parity_budget {
                    return Err(EccError::InadmissibleParams {
                        c,
                        e,
                        needed: r0,
                        budget: parity_budget,
                    });
                }
                return Ok(BchParams {
                    c,
                    e,
                    mu,
                    n,
                    r0,
                    generator: g,
                    alpha,
                    len,
                    parity_budget,
                });
            }
        }
        Err(EccError::InadmissibleParams { c, e, needed: usize::MAX, budget: parity_budget })
    }

    /// Polynomial exponent carried by codeword bit `i` (data bits take the
    /// high powers so streaming them first matches long division order).
    fn exponent(&self, i: usize) -> Option<u64> {
        if i < self.c {
            Some((self.r0 + (self.c - 1 - i)) as u64)
        } else if i < self.c + self.r0 {
            Some((self.r0 - 1 - (i - self.c)) as u64)
        } else {
            None // constant-zero padding carries no exponent
        }
    }

    /// One long-division step of the systematic encoder: absorb `bit` into
    /// the running remainder (`r0` low bits).
    fn lfsr_step(&self, rem: u64, bit: u8) -> u64 {
        if self.r0 == 0 {
            return 0;
        }
        let top = (rem >> (self.r0 - 1)) & 1;
        let fb = top ^ bit as u64;
        let mask = (1u64 << self.r0) - 1;
        ((rem << 1) ^ if fb == 1 { self.generator } else { 0 }) & mask
    }

    /// Parity bit `j` (stored at codeword position c+j) of a finished
    /// remainder.
    fn parity_bit(&self, rem: u64, j: usize) -> u8 {
        ((rem >> (self.r0 - 1 - j)) & 1) as u8
    }
}

/// Systematic encoding: the message verbatim, then genuine parity, then
/// constant-zero padding up to the redundancy budget.
pub fn enc_bch(params: &BchParams, message: Bits) -> Result<Bits, EccError> {
    if message.len() != params.c {
        return Err(EccError::LengthMismatch { want: params.c, got: message.len() });
    }
    let mut rem: u64 = 0;
    for i in 0..params.c {
        rem = params.lfsr_step(rem, message.get(i));
    }
    let mut word = Bits::zeros(params.len);
    for i in 0..params.c {
        word = word.with(i, message.get(i));
    }
    for j in 0..params.r0 {
        word = word.with(params.c + j, params.parity_bit(rem, j));
    }
    Ok(word)
}

/// Syndromes S_1 … S_{2e}: the received word evaluated at α^1 … α^{2e}.
fn syndromes(params: &BchParams, word: Bits) -> Vec<u32> {
    let mut out = vec![0u32; 2 * params.e as usize];
    for (k, slot) in out.iter_mut().enumerate() {
        let power = (k + 1) as u64;
        let mut acc = 0u32;
        for i in 0..word.len() {
            if word.get(i) == 1 {
                if let Some(exp) = params.exponent(i) {
                    acc ^= gf_pow(params.mu, params.alpha, (power * exp) % params.n);
                }
            }
        }
        *slot = acc;
    }
    out
}

/// Berlekamp–Massey over GF(2^μ): the minimal LFSR generating the syndrome
/// sequence, returned as locator coefficients Λ_0=1, Λ_1, …
fn berlekamp_massey(mu: u32, syn: &[u32]) -> Vec<u32> {
    let mut cur: Vec<u32> = vec![1];
    let mut prev: Vec<u32> = vec![1];
    let mut l: usize = 0;
    let mut m: usize = 1;
    let mut b: u32 = 1;
    for n_i in 0..syn.len() {
        let mut d = syn[n_i];
        for i in 1..=l.min(cur.len() - 1) {
            d ^= gf_mul(mu, cur[i], syn[n_i - i]);
        }
        if d == 0 {
            m += 1;
            continue;
        }
        let coef = gf_mul(mu, d, gf_inv(mu, b));
        let shifted_len = prev.len() + m;
        if 2 * l <= n_i {
            let keep = cur.clone();
            if cur.len() < shifted_len {
                cur.resize(shifted_len, 0);
            }
            for (j, &pj) in prev.iter().enumerate() {
                cur[j + m] ^= gf_mul(mu, coef, pj);
            }
            l = n_i + 1 - l;
            prev = keep;
            b = d;
            m = 1;
        } else {
            if cur.len() < shifted_len {
                cur.resize(shifted_len, 0);
            }
            for (j, &pj) in prev.iter().enumerate() {
                cur[j + m] ^= gf_mul(mu, coef, pj);
            }
            m += 1;
        }
    }
    while cur.len() > 1 && *cur.last().unwrap() == 0 {
        cur.pop();
    }
    cur
}

/// Decodes a received word back to its `c` data bits, correcting up to `e`
/// flipped positions. Outside that promise the call returns
/// [`EccError::DecodeFailure`] or a wrong message — never a panic — and a
/// final syndrome re-check keeps silent miscorrections to genuinely ambiguous
/// words.
pub fn dec_bch(params: &BchParams, word: Bits) -> Result<Bits, EccError> {
    if word.len() != params.len {
        return Err(EccError::LengthMismatch { want: params.len, got: word.len() });
    }
    let extract = |w: Bits| w.slice(0, params.c);
    if params.e == 0 {
        return Ok(extract(word));
    }
    let syn = syndromes(params, word);
    if syn.iter().all(|&s| s == 0) {
        return Ok(extract(word));
    }
    let lambda = berlekamp_massey(params.mu, &syn);
    let degree = lambda.len() - 1;
    if degree == 0 || degree as u64 > params.e {
        return Err(EccError::DecodeFailure);
    }
    // Exhaustive root search: position exponent p is in error iff Λ(α^{−p})=0.
    let mut fixed = word;
    let mut roots = 0usize;
    for p in 0..params.n {
        let x = gf_pow(params.mu, params.alpha, params.n - p);
        let mut acc = 0u32;
        let mut xp = 1u32;
        for &lj in &lambda {
            acc ^= gf_mul(params.mu, lj, xp);
            xp = gf_mul(params.mu, xp, x);
        }
        if acc != 0 {
            continue;
        }
        roots += 1;
        let p = p as usize;
        let bit_index = if p < params.r0 {
            params.c + (params.r0 - 1 - p) // parity region
        } else if p < params.r0 + params.c {
            params.r0 + params.c - 1 - p // data region
        } else {
            return Err(EccError::DecodeFailure); // shortened, always-zero region
        };
        fixed = fixed.with(bit_index, fixed.get(bit_index) ^ 1);
    }
    if roots != degree {
        return Err(EccError::DecodeFailure);
    }
    if syndromes(params, fixed).iter().any(|&s| s != 0) {
        return Err(EccError::DecodeFailure);
    }
    Ok(extract(fixed))
}

/// What the exhaustive nearest-codeword search found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BruteDecode {
    /// The message whose codeword lies nearest the received word (first in
    /// left-to-right bit order among ties).
    pub message: Bits,
    /// Hamming distance from the received word to that codeword.
    pub distance: u32,
    /// Whether a different message tied for the same distance.
    pub tie: bool,
}

/// True iff `a` precedes `b` when both are read left to right, bit 0 first.
fn lex_before(a: Bits, b: Bits) -> bool {
    for i in 0..a.len() {
        if a.get(i) != b.get(i) {
            return a.get(i) < b.get(i);
        }
    }
    false
}

/// Independent decoding oracle: encode every possible message and keep the
/// nearest codeword. Exponential in `c`, so a case budget is enforced.
pub fn brute_force_decode(
    params: &BchParams,
    word: Bits,
    budget: u128,
) -> Result<BruteDecode, EccError> {
    if word.len() != params.len {
        return Err(EccError::LengthMismatch { want: params.len, got: word.len() });
    }
    let needed = 1u128 << params.c;
    if needed > budget {
        return Err(EccError::BudgetExceeded { needed, budget });
    }
    let mut best: Option<BruteDecode> = None;
    for message in Bits::all(params.c) {
        let codeword = enc_bch(params, message)?;
        let distance = codeword.hamming(word).expect("equal lengths");
        best = Some(match best {
            None => BruteDecode { message, distance, tie: false },
            Some(cur) => {
                if distance < cur.distance {
                    BruteDecode { message, distance, tie: false }
                } else if distance == cur.distance {
                    let keep =
                        if lex_before(message, cur.message) { message } else { cur.message };
                    BruteDecode { message: keep, distance, tie: true }
                } else {
                    cur
                }
            }
        });
    }
    Ok(best.expect("at least one message exists"))
}

/// Exhaustive minimum pairwise Hamming distance between distinct codewords.
pub fn min_distance_exhaustive(params: &BchParams, budget: u128) -> Result<u32, EccError> {
    let count = 1u128 << params.c;
    let needed = count * count;
    if needed > budget {
        return Err(EccError::BudgetExceeded { needed, budget });
    }
    let words: Vec<Bits> =
        Bits::all(params.c).map(|m| enc_bch(params, m).expect("valid length")).collect();
    let mut best = u32::MAX;
    for i in 0..words.len() {
        for j in (i + 1)..words.len() {
            best = best.min(words[i].hamming(words[j]).expect("equal lengths"));
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// The lossless wrapper machine.
// ---------------------------------------------------------------------------

/// A wrapped machine plus the accounting that justifies it.
#[derive(Debug, Clone)]
pub struct LosslessWrapped {
    /// The product machine: encode, run the inner machine, decode, repair.
    pub machine: MachineSpec,
    /// The code the wrapper uses.
    pub params: BchParams,
    /// Worst-case (over initial tapes) expected number of damaged positions
    /// per run of the inner machine, measured exactly.
    pub expected_damage: BigRational,
    /// Flips corrected per run: ⌈expected_damage / delta⌉.
    pub e_corrected: u64,
    /// Extra work cells holding parity: the full redundancy budget.
    pub parity_overhead_bits: usize,
    /// Work growth beyond the parity region (always zero: the wrapper keeps
    /// everything else in its control state).
    pub extra_work_bits: usize,
}

/// Control states of the encode–run–decode product.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum WrapK {
    /// Streaming the catalytic tape through the encoder's long division.
    EncRead { pos: u16, rem: u64 },
    /// Walking the catalytic head back home after reading.
    EncCatHome { pos: u16, rem: u64 },
    /// Walking the work head out, writing parity bits into the spare region.
    ParityOut { pos: u16, rem: u64 },
    /// Walking the work head back home before the inner run.
    ParityHome { pos: u16 },
    /// The inner machine running unmodified, head positions tracked.
    Run { q: StateId, wh: u16, ch: u16 },
    /// Inner verdict in hand: park the work head at the parity region and
    /// bring the catalytic head home for the syndrome pass.
    SeekHome { kind: HaltKind, wh: u16, ch: u16 },
    /// Reading the (possibly damaged) catalytic tape into the syndromes.
    SynCat { kind: HaltKind, pos: u16, syn: u64 },
    /// Reading the pristine parity cells into the syndromes.
    SynParity { kind: HaltKind, pos: u16, syn: u64 },
    /// Walking left over the catalytic tape, flipping the located errors.
    FlipWalk { kind: HaltKind, pos: u16, mask: u32 },
}

/// Packed contribution of a set bit at polynomial exponent `exp` to the odd
/// syndromes S_1, S_3, …, S_{2e−1} (field elements stacked μ bits apart).
/// Even-indexed syndromes are squares of earlier ones, so tracking the odd
/// ones pins the whole syndrome vector.
fn packed_contribution(params: &BchParams, exp: u64) -> u64 {
    let mut out = 0u64;
    for t in 0..params.e {
        let power = 2 * t + 1;
        let val = gf_pow(params.mu, params.alpha, (power * exp) % params.n);
        out |= (val as u64) << (t * params.mu as u64);
    }
    out
}

/// Wraps a machine so its catalytic tape is restored exactly on every run
/// whose damage stays within the corrected radius. The radius is chosen from
/// measured behavior: the worst-case expected damage of the inner machine on
/// `input` (exact, over all tapes and coin flips), divided by the caller's
/// per-run budget `delta` and rounded up.
pub fn lossless_wrapper(
    inner: &MachineSpec,
    input: &Bits,
    delta: &BigRational,
) -> Result<LosslessWrapped, EccError> {
    if delta.is_negative() || delta.is_zero() || *delta > BigRational::one() {
        return Err(EccError::BadDelta);
    }
    let c = inner.c;
    let s_in = inner.s;

    // Measure the inner machine: worst-case expected damage over all tapes.
    let horizon = inner.config_space_size(input.len()).saturating_mul(4).min(1 << 22) as u64;
    let mut e_prime = BigRational::zero();
    for tau in Bits::all(c) {
        let dist = halt_distribution(inner, input, tau, horizon)?;
        let damage = dist.expected_errors(tau);
        if damage > e_prime {
            e_prime = damage;
        }
    }
    let e_corrected = if e_prime.is_zero() {
        0
    } else {
        (&e_prime / delta).ceil().to_integer().to_u64().expect("tiny damage bound")
    };

    let params = BchParams::new(c, e_corrected)?;
    let r0 = params.r0;
    let budget = params.parity_budget;
    let s = s_in + budget;
    let syn_bits = params.e as usize * params.mu as usize;
    if syn_bits > 64 {
        return Err(EccError::WrapperTooWide { bits: syn_bits });
    }

    // Per-position syndrome contributions, and the finished-syndrome → flip
    // set table. Damage is confined to the catalytic region (parity lives in
    // private work cells), so only data-position flip sets are enumerated;
    // distinct sets of weight ≤ e collide only across codewords, never here.
    let data_contrib: Vec<u64> = (0..c)
        .map(|i| packed_contribution(&params, params.exponent(i).expect("data position")))
        .collect();
    let parity_contrib: Vec<u64> = (0..r0)
        .map(|j| packed_contribution(&params, params.exponent(c + j).expect("parity position")))
        .collect();
    let mut flip_table: BTreeMap<u64, u32> = BTreeMap::new();
    for mask in 0u32..(1u32 << c) {
        if mask.count_ones() as u64 > e_corrected {
            continue;
        }
        let mut syn = 0u64;
        for (i, contrib) in data_contrib.iter().enumerate() {
            if (mask >> i) & 1 == 1 {
                syn ^= contrib;
            }
        }
        let previous = flip_table.insert(syn, mask);
        debug_assert!(previous.is_none(), "flip sets within the radius have distinct syndromes");
    }

    let start = if r0 == 0 {
        WrapK::Run { q: inner.start, wh: 0, ch: 0 }
    } else {
        WrapK::EncRead { pos: 0, rem: 0 }
    };
    let machine = build_product(s, c, start, |state, inbit, workbit, catbit, coin| {
        let write_back = |next: Next<WrapK>, mv_work: Move, mv_cat: Move| Micro {
            next,
            write_work: workbit,
            write_cat: catbit,
            mv_input: Move::S,
            mv_work,
            mv_cat,
        };
        match state {
            WrapK::EncRead { pos, rem } => {
                let rem2 = params.lfsr_step(*rem, catbit);
                if (*pos as usize) + 1 < c {
                    write_back(Next::State(WrapK::EncRead { pos: pos + 1, rem: rem2 }), Move::S, Move::R)
                } else if c == 1 {
                    write_back(Next::State(WrapK::ParityOut { pos: 0, rem: rem2 }), Move::S, Move::S)
                } else {
                    write_back(
                        Next::State(WrapK::EncCatHome { pos: pos - 1, rem: rem2 }),
                        Move::S,
                        Move::L,
                    )
                }
            }
            WrapK::EncCatHome { pos, rem } => {
                if *pos == 0 {
                    write_back(Next::State(WrapK::ParityOut { pos: 0, rem: *rem }), Move::S, Move::S)
                } else {
                    write_back(
                        Next::State(WrapK::EncCatHome { pos: pos - 1, rem: *rem }),
                        Move::S,
                        Move::L,
                    )
                }
            }
            WrapK::ParityOut { pos, rem } => {
                let p = *pos as usize;
                if p < s_in {
                    write_back(Next::State(WrapK::ParityOut { pos: pos + 1, rem: *rem }), Move::R, Move::S)
                } else {
                    let j = p - s_in;
                    let next = if j + 1 < r0 {
                        Next::State(WrapK::ParityOut { pos: pos + 1, rem: *rem })
                    } else {
                        Next::State(WrapK::ParityHome { pos: pos - 1 })
                    };
                    Micro {
                        next,
                        write_work: params.parity_bit(*rem, j),
                        write_cat: catbit,
                        mv_input: Move::S,
                        mv_work: if j + 1 < r0 { Move::R } else { Move::L },
                        mv_cat: Move::S,
                    }
                }
            }
            WrapK::ParityHome { pos } => {
                let next = if *pos == 1 {
                    Next::State(WrapK::Run { q: inner.start, wh: 0, ch: 0 })
                } else {
                    Next::State(WrapK::ParityHome { pos: pos - 1 })
                };
                write_back(next, Move::L, Move::S)
            }
            WrapK::Run { q, wh, ch } => {
                let Some(t) = inner.transition(*q, inbit, workbit, catbit, coin) else {
                    return Micro::refuse(workbit, catbit);
                };
                let (Some(wh2), Some(ch2)) = (moved(*wh, t.mv_work, s_in), moved(*ch, t.mv_cat, c))
                else {
                    return Micro::refuse(workbit, catbit);
                };
                let next = match inner.halt_kind_of(t.next) {
                    Some(kind) if r0 == 0 => Next::Halt(kind),
                    Some(kind) => Next::State(WrapK::SeekHome { kind, wh: wh2, ch: ch2 }),
                    None => Next::State(WrapK::Run { q: t.next, wh: wh2, ch: ch2 }),
                };
                Micro {
                    next,
                    write_work: t.write_work,
                    write_cat: t.write_cat,
                    mv_input: t.mv_input,
                    mv_work: t.mv_work,
                    mv_cat: t.mv_cat,
                }
            }
            WrapK::SeekHome { kind, wh, ch } => {
                let wh2 = if (*wh as usize) < s_in { wh + 1 } else { *wh };
                let ch2 = ch.saturating_sub(1);
                let next = if wh2 as usize == s_in && ch2 == 0 {
                    Next::State(WrapK::SynCat { kind: *kind, pos: 0, syn: 0 })
                } else {
                    Next::State(WrapK::SeekHome { kind: *kind, wh: wh2, ch: ch2 })
                };
                write_back(
                    next,
                    if (*wh as usize) < s_in { Move::R } else { Move::S },
                    if *ch > 0 { Move::L } else { Move::S },
                )
            }
            WrapK::SynCat { kind, pos, syn } => {
                let syn2 = if catbit == 1 { syn ^ data_contrib[*pos as usize] } else { *syn };
                if (*pos as usize) + 1 < c {
                    write_back(
                        Next::State(WrapK::SynCat { kind: *kind, pos: pos + 1, syn: syn2 }),
                        Move::S,
                        Move::R,
                    )
                } else {
                    write_back(
                        Next::State(WrapK::SynParity { kind: *kind, pos: s_in as u16, syn: syn2 }),
                        Move::S,
                        Move::S,
                    )
                }
            }
            WrapK::SynParity { kind, pos, syn } => {
                let j = (*pos as usize) - s_in;
                let syn2 = if workbit == 1 { syn ^ parity_contrib[j] } else { *syn };
                if j + 1 < r0 {
                    write_back(
                        Next::State(WrapK::SynParity { kind: *kind, pos: pos + 1, syn: syn2 }),
                        Move::R,
                        Move::S,
                    )
                } else {
                    // Decode happens here, at build time: the finished
                    // syndrome names its flip set, or nothing if the damage
                    // exceeded the radius (leave the tape as it stands).
                    match flip_table.get(&syn2).copied() {
                        Some(mask) if mask != 0 => write_back(
                            Next::State(WrapK::FlipWalk {
                                kind: *kind,
                                pos: (c - 1) as u16,
                                mask,
                            }),
                            Move::S,
                            Move::S,
                        ),
                        _ => write_back(Next::Halt(*kind), Move::S, Move::S),
                    }
                }
            }
            WrapK::FlipWalk { kind, pos, mask } => {
                let flip = ((mask >> pos) & 1) as u8;
                let below = mask & ((1u32 << pos) - 1);
                let next = if below == 0 {
                    Next::Halt(*kind)
                } else {
                    Next::State(WrapK::FlipWalk { kind: *kind, pos: pos - 1, mask: *mask })
                };
                Micro {
                    next,
                    write_work: workbit,
                    write_cat: catbit ^ flip,
                    mv_input: Move::S,
                    mv_work: Move::S,
                    mv_cat: if below == 0 { Move::S } else { Move::L },
                }
            }
        }
    })?;

    Ok(LosslessWrapped {
        machine,
        params,
        expected_damage: e_prime,
        e_corrected,
        parity_overhead_bits: budget,
        extra_work_bits: s - s_in - budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coins::CoinSource;
    use crate::machines::bundled;
    use crate::rat;
    use crate::simulator::run;

    const HORIZON: u64 = 100_000;

    fn all_flip_masks(len: usize, weight: usize) -> Vec<Vec<usize>> {
        fn rec(len: usize, weight: usize, from: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            out.push(cur.clone());
            if cur.len() == weight {
                return;
            }
            for i in from..len {
                cur.push(i);
                rec(len, weight, i + 1, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(len, weight, 0, &mut Vec::new(), &mut out);
        out
    }

    fn apply_flips(word: Bits, flips: &[usize]) -> Bits {
        let mut w = word;
        for &i in flips {
            w = w.with(i, w.get(i) ^ 1);
        }
        w
    }

    #[test]
    fn desk_parameter_sets_have_the_pinned_codeword_lengths() {
        for (c, e, len, r0) in [(4usize, 1u64, 13usize, 3usize), (6, 1, 15, 4), (4, 2, 19, 8), (6, 2, 21, 8)] {
            let p = BchParams::new(c, e).unwrap();
            assert_eq!(p.len, len, "length for ({c},{e})");
            assert_eq!(p.r0, r0, "genuine parity for ({c},{e})");
            assert_eq!(p.len, c + (2 * e as usize + 1) * width_for(c + e as usize));
        }
    }

    #[test]
    fn zero_correction_is_identity_with_zero_padding() {
        let p = BchParams::new(5, 0).unwrap();
        assert_eq!(p.len, 5 + 3);
        for m in Bits::all(5) {
            let w = enc_bch(&p, m).unwrap();
            assert_eq!(w.slice(0, 5), m);
            assert_eq!(w.slice(5, 3), Bits::zeros(3));
            assert_eq!(dec_bch(&p, w).unwrap(), m);
        }
    }

    #[test]
    fn every_codeword_evaluates_to_zero_at_the_designed_roots() {
        for (c, e) in [(4usize, 1u64), (6, 1), (4, 2), (6, 2)] {
            let p = BchParams::new(c, e).unwrap();
            for m in Bits::all(c) {
                let w = enc_bch(&p, m).unwrap();
                assert!(syndromes(&p, w).iter().all(|&s| s == 0), "({c},{e}) message {m}");
            }
        }
    }

    #[test]
    fn all_flip_patterns_within_the_radius_decode_back() {
        for (c, e) in [(4usize, 1u64), (6, 1), (4, 2), (6, 2)] {
            let p = BchParams::new(c, e).unwrap();
            for m in Bits::all(c) {
                let w = enc_bch(&p, m).unwrap();
                for flips in all_flip_masks(p.len, e as usize) {
                    let got = dec_bch(&p, apply_flips(w, &flips)).unwrap();
                    assert_eq!(got, m, "({c},{e}) message {m} flips {flips:?}");
                }
            }
        }
    }

    #[test]
    fn minimum_pairwise_distance_clears_the_design_floor() {
        for (c, e) in [(4usize, 1u64), (6, 1), (4, 2), (6, 2)] {
            let p = BchParams::new(c, e).unwrap();
            let d = min_distance_exhaustive(&p, 1 << 20).unwrap();
            assert!(d >= 2 * e as u32 + 1, "({c},{e}) distance {d}");
        }
    }

    #[test]
    fn decoding_agrees_with_brute_force_on_the_promise_region() {
        for (c, e) in [(6usize, 1u64), (4, 2)] {
            let p = BchParams::new(c, e).unwrap();
            for m in Bits::all(c) {
                let w = enc_bch(&p, m).unwrap();
                for flips in all_flip_masks(p.len, e as usize) {
                    let received = apply_flips(w, &flips);
                    let fast = dec_bch(&p, received).unwrap();
                    let slow = brute_force_decode(&p, received, 1 << 10).unwrap();
                    assert_eq!(fast, slow.message);
                    assert_eq!(slow.distance as usize, flips.len());
                    assert!(!slow.tie, "promise-region decodes are unique");
                }
            }
        }
    }

    #[test]
    fn overloaded_flips_fail_loudly_or_wrongly_but_never_crash() {
        // One radius past the promise: every call must return cleanly. The
        // single-error code's live region is perfect, so it silently
        // miscorrects; the double-error code has room between its decoding
        // spheres, so some patterns must be detectably undecodable.
        let mut failures = 0;
        for (c, e) in [(4usize, 1u64), (4, 2)] {
            let p = BchParams::new(c, e).unwrap();
            for m in Bits::all(c) {
                let w = enc_bch(&p, m).unwrap();
                for flips in all_flip_masks(p.len, e as usize + 1) {
                    if flips.len() != e as usize + 1 {
                        continue;
                    }
                    match dec_bch(&p, apply_flips(w, &flips)) {
                        Ok(_) => {}
                        Err(EccError::DecodeFailure) => {
                            if e == 2 {
                                failures += 1;
                            }
                        }
                        Err(other) => panic!("unexpected error class: {other}"),
                    }
                }
            }
        }
        assert!(failures > 0, "some triple flips must be detectably undecodable");
    }

    #[test]
    fn brute_force_budget_is_enforced() {
        let p = BchParams::new(6, 1).unwrap();
        let w = enc_bch(&p, Bits::zeros(6)).unwrap();
        assert!(matches!(
            brute_force_decode(&p, w, 32),
            Err(EccError::BudgetExceeded { needed: 64, budget: 32 })
        ));
        assert!(brute_force_decode(&p, w, 64).is_ok());
    }

    #[test]
    fn oversized_codewords_are_rejected_up_front() {
        assert!(matches!(BchParams::new(120, 1), Err(EccError::WordTooLong { len: 141 })));
        assert!(matches!(BchParams::new(0, 1), Err(EccError::LengthMismatch { .. })));
    }

    #[test]
    fn wrapped_one_flip_machine_resets_perfectly_everywhere() {
        let inner = bundled("oneflip").unwrap();
        for (delta, want_ec) in [(rat(1, 1), 1u64), (rat(1, 2), 2)] {
            let wrapped = lossless_wrapper(&inner, &Bits::from_int(1, 1), &delta).unwrap();
            assert_eq!(wrapped.e_corrected, want_ec);
            assert_eq!(wrapped.expected_damage, rat(1, 1));
            for input in [Bits::from_int(0, 1), Bits::from_int(1, 1)] {
                for tau in Bits::all(inner.c) {
                    let got =
                        run(&wrapped.machine, &input, tau, &mut CoinSource::empty(), HORIZON)
                            .unwrap();
                    let want = run(&inner, &input, tau, &mut CoinSource::empty(), HORIZON).unwrap();
                    assert_eq!(got.halt, want.halt, "verdict preserved");
                    assert_eq!(got.final_cat, tau, "tape restored exactly");
                }
            }
        }
    }

    #[test]
    fn wrapped_coin_flipper_resets_on_every_coin_path() {
        let inner = bundled("coinflip").unwrap();
        let wrapped = lossless_wrapper(&inner, &Bits::from_int(0, 1), &rat(1, 2)).unwrap();
        assert_eq!(wrapped.e_corrected, 1);
        assert_eq!(wrapped.expected_damage, rat(1, 2));
        let input = Bits::from_int(0, 1);
        for tau in Bits::all(inner.c) {
            for coin in 0..2u64 {
                let mut coins = CoinSource::parse(&format!("{coin:x}")).unwrap();
                let got = run(&wrapped.machine, &input, tau, &mut coins, HORIZON).unwrap();
                let mut inner_coins = CoinSource::parse(&format!("{coin:x}")).unwrap();
                let want = run(&inner, &input, tau, &mut inner_coins, HORIZON).unwrap();
                assert_eq!(got.halt, want.halt);
                assert_eq!(got.final_cat, tau);
                assert_eq!(got.coins_consumed, 1);
            }
            let dist =
                halt_distribution(&wrapped.machine, &input, tau, HORIZON).unwrap();
            assert_eq!(dist.reset_probability(tau), rat(1, 1));
            assert_eq!(dist.prob_kind(HaltKind::Accept), rat(1, 2));
        }
    }

    #[test]
    fn wrapping_a_lossless_machine_changes_nothing_but_width() {
        for name in ["one_step", "longchain"] {
            let inner = bundled(name).unwrap();
            let wrapped = lossless_wrapper(&inner, &Bits::from_int(1, 1), &rat(1, 1)).unwrap();
            assert_eq!(wrapped.e_corrected, 0, "{name} is lossless");
            assert!(wrapped.expected_damage.is_zero());
            for tau in Bits::all(inner.c) {
                let got = run(&wrapped.machine, &Bits::from_int(1, 1), tau, &mut CoinSource::empty(), HORIZON)
                    .unwrap();
                let want = run(&inner, &Bits::from_int(1, 1), tau, &mut CoinSource::empty(), HORIZON)
                    .unwrap();
                assert_eq!(got.halt, want.halt);
                assert_eq!(got.final_cat, want.final_cat);
                assert_eq!(got.steps, want.steps, "{name}: no extra steps at radius zero");
            }
        }
    }

    #[test]
    fn wrapper_overhead_matches_the_width_formula() {
        let inner = bundled("oneflip").unwrap();
        let wrapped = lossless_wrapper(&inner, &Bits::from_int(1, 1), &rat(1, 1)).unwrap();
        let ec = wrapped.e_corrected as usize;
        assert_eq!(wrapped.parity_overhead_bits, (2 * ec + 1) * width_for(inner.c + ec));
        assert_eq!(wrapped.extra_work_bits, 0);
        assert_eq!(wrapped.machine.s, inner.s + wrapped.parity_overhead_bits);
    }

    #[test]
    fn bad_damage_budgets_are_rejected() {
        let inner = bundled("oneflip").unwrap();
        let input = Bits::from_int(1, 1);
        assert!(matches!(lossless_wrapper(&inner, &input, &rat(0, 1)), Err(EccError::BadDelta)));
        assert!(matches!(lossless_wrapper(&inner, &input, &rat(3, 2)), Err(EccError::BadDelta)));
        assert!(matches!(lossless_wrapper(&inner, &input, &rat(-1, 2)), Err(EccError::BadDelta)));
    }
}
