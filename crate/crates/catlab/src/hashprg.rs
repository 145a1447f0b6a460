//! Pairwise-independent affine hash family over GF(2^m), the hash-chain
//! pseudorandom generator built from it, and the independence/goodness
//! machinery with its closed-form bad-hash bounds.
//!
//! The family is h(x) = a·x ⊕ b with a, b ranging over GF(2^m): exactly
//! 2^{2m} functions, each encodable in 2m bits (a first, then b). The PRG
//! chains l hashes; its i-bit output for a seed is the concatenation of the
//! *first* (most significant) output bits of h_i, h_{i−1}, …, h_1 — so each
//! longer output extends the shorter one by one leading bit, and level j of
//! a layered walk is driven by h_j.

use num::BigRational;
use thiserror::Error;

use crate::bits::Bits;
use crate::gf2m::{gf_mul, MAX_M};
use crate::machine::{Configuration, MachineSpec};
use crate::{pow2, rat};

#[derive(Debug, Error)]
pub enum HashError {
    #[error("input width {got} does not match field width {want}")]
    WidthMismatch { got: usize, want: usize },
    #[error("index {i} outside 0..={max}")]
    IndexRange { i: usize, max: usize },
}

/// One member of the affine family over GF(2^m).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HashFn {
    pub m: u32,
    pub a: u32,
    pub b: u32,
}

impl HashFn {
    pub fn new(m: u32, a: u32, b: u32) -> Self {
        assert!((1..=MAX_M).contains(&m));
        assert!(a >> m == 0 && b >> m == 0, "coefficients wider than the field");
        HashFn { m, a, b }
    }

    /// h(x) = a·x ⊕ b.
    pub fn eval(&self, x: u32) -> u32 {
        gf_mul(self.m, self.a, x) ^ self.b
    }

    /// Most significant bit of the m-bit output: the bit each PRG level
    /// contributes.
    pub fn first_bit(&self, x: u32) -> u8 {
        (self.eval(x) >> (self.m - 1)) as u8 & 1
    }

    /// 2m-bit encoding, a's bits first (leftmost), then b's.
    pub fn encode(&self) -> Bits {
        let a = Bits::from_int(self.a as u128, self.m as usize);
        let b = Bits::from_int(self.b as u128, self.m as usize);
        a.concat(b)
    }

    /// Inverse of [`HashFn::encode`].
    pub fn decode(m: u32, bits: Bits) -> Result<Self, HashError> {
        if bits.len() != 2 * m as usize {
            return Err(HashError::WidthMismatch { got: bits.len(), want: 2 * m as usize });
        }
        let a = bits.slice(0, m as usize).to_int() as u32;
        let b = bits.slice(m as usize, m as usize).to_int() as u32;
        Ok(HashFn::new(m, a, b))
    }
}

/// Evaluate a hash on an m-bit string, width-checked.
pub fn hash_eval(h: &HashFn, x: Bits) -> Result<Bits, HashError> {
    if x.len() != h.m as usize {
        return Err(HashError::WidthMismatch { got: x.len(), want: h.m as usize });
    }
    Ok(Bits::from_int(h.eval(x.to_int() as u32) as u128, h.m as usize))
}

/// The full family for width m: all (a, b), a-major.
pub fn full_family(m: u32) -> Vec<HashFn> {
    let n = 1u32 << m;
    let mut fam = Vec::with_capacity((n as usize) * (n as usize));
    for a in 0..n {
        for b in 0..n {
            fam.push(HashFn::new(m, a, b));
        }
    }
    fam
}

/// A chain of hashes h_1 … h_l over a common width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrgSpec {
    pub m: u32,
    /// hashes[k] is h_{k+1}; h_1 drives the bottom layer of a walk.
    pub hashes: Vec<HashFn>,
}

impl PrgSpec {
    pub fn new(m: u32, hashes: Vec<HashFn>) -> Self {
        assert!(hashes.iter().all(|h| h.m == m), "mixed hash widths");
        PrgSpec { m, hashes }
    }

    /// Builds from tape order (h_l first, h_1 last).
    pub fn from_tape_order(m: u32, mut hashes: Vec<HashFn>) -> Self {
        hashes.reverse();
        PrgSpec::new(m, hashes)
    }

    pub fn l(&self) -> usize {
        self.hashes.len()
    }

    /// h_j, 1-indexed.
    pub fn hash(&self, j: usize) -> &HashFn {
        &self.hashes[j - 1]
    }

    /// Concatenated 2m-bit encodings in tape order: h_l leftmost.
    pub fn encode_tape_order(&self) -> Bits {
        let mut out = Bits::zeros(0);
        for h in self.hashes.iter().rev() {
            out = out.concat(h.encode());
        }
        out
    }

    /// Inverse of [`PrgSpec::encode_tape_order`].
    pub fn decode_tape_order(m: u32, l: usize, bits: Bits) -> Result<Self, HashError> {
        let w = 2 * m as usize;
        if bits.len() != w * l {
            return Err(HashError::WidthMismatch { got: bits.len(), want: w * l });
        }
        let mut tape = Vec::with_capacity(l);
        for k in 0..l {
            tape.push(HashFn::decode(m, bits.slice(k * w, w))?);
        }
        Ok(PrgSpec::from_tape_order(m, tape))
    }
}

/// The i-bit PRG output for a seed: bit j from the left is the first bit of
/// h_{i−j+1}(seed), so the leftmost bit comes from h_i and each output
/// extends the (i−1)-bit one by one leading bit.
pub fn prg_eval(prg: &PrgSpec, i: usize, seed: u32) -> Result<Bits, HashError> {
    if i > prg.l() {
        return Err(HashError::IndexRange { i, max: prg.l() });
    }
    let mut out = Bits::zeros(i);
    for j in 1..=i {
        out = out.with(j - 1, prg.hash(i - j + 1).first_bit(seed));
    }
    Ok(out)
}

// ── seed sets, B-descriptors, independence ──────────────────────────────────

/// A subset of the 2^m seeds, with exact density.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedSet {
    pub m: u32,
    mask: Vec<bool>,
}

impl SeedSet {
    pub fn empty(m: u32) -> Self {
        SeedSet { m, mask: vec![false; 1 << m] }
    }

    pub fn from_members(m: u32, members: impl IntoIterator<Item = u32>) -> Self {
        let mut s = SeedSet::empty(m);
        for x in members {
            s.mask[x as usize] = true;
        }
        s
    }

    pub fn insert(&mut self, x: u32) {
        self.mask[x as usize] = true;
    }

    pub fn contains(&self, x: u32) -> bool {
        self.mask[x as usize]
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Exact density |A| / 2^m.
    pub fn rho(&self) -> BigRational {
        rat(self.len() as i64, 1) / pow2(self.m)
    }
}

/// The target set of a goodness constraint: which hash *outputs* land on the
/// kept edge labels between a layer-(i+1) node and its layer-i neighbor.
/// Always one of four shapes, so its density is 0, 1/2, or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BDescriptor {
    Empty,
    FirstBit0,
    FirstBit1,
    All,
}

impl BDescriptor {
    pub fn rho(&self) -> BigRational {
        match self {
            BDescriptor::Empty => rat(0, 1),
            BDescriptor::FirstBit0 | BDescriptor::FirstBit1 => rat(1, 2),
            BDescriptor::All => rat(1, 1),
        }
    }

    pub fn contains(&self, value: u32, m: u32) -> bool {
        let first = value >> (m - 1) & 1;
        match self {
            BDescriptor::Empty => false,
            BDescriptor::FirstBit0 => first == 0,
            BDescriptor::FirstBit1 => first == 1,
            BDescriptor::All => true,
        }
    }

    /// Combines the labels under which an edge exists into a descriptor.
    pub fn from_labels(zero: bool, one: bool) -> Self {
        match (zero, one) {
            (false, false) => BDescriptor::Empty,
            (true, false) => BDescriptor::FirstBit0,
            (false, true) => BDescriptor::FirstBit1,
            (true, true) => BDescriptor::All,
        }
    }
}

/// The B-descriptor for the layered edge(s) from configuration `z` (one
/// layer up) down to `v`: halting configurations self-descend under both
/// labels; otherwise each coin is checked by a forward step.
pub fn compute_b(
    machine: &MachineSpec,
    input: &Bits,
    v: &Configuration,
    z: &Configuration,
) -> BDescriptor {
    if machine.is_halting(z) {
        return BDescriptor::from_labels(v == z, v == z);
    }
    let hits = |coin: u8| -> bool {
        crate::machine::step(machine, input, z, coin)
            .map(|t| t == *v)
            .unwrap_or(false)
    };
    BDescriptor::from_labels(hits(0), hits(1))
}

/// Exact deviation |Pr_x[x ∈ A ∧ h(x) ∈ B] − ρ(A)ρ(B)|, by exhaustive x.
pub fn independence_deviation(h: &HashFn, a: &SeedSet, b: BDescriptor) -> BigRational {
    assert_eq!(h.m, a.m, "seed set width differs from hash width");
    let total = 1u32 << h.m;
    let mut joint = 0i64;
    for x in 0..total {
        if a.contains(x) && b.contains(h.eval(x), h.m) {
            joint += 1;
        }
    }
    let p_joint = rat(joint, 1) / pow2(h.m);
    let expected = a.rho() * b.rho();
    let d = p_joint - expected;
    if d < rat(0, 1) {
        -d
    } else {
        d
    }
}

/// (A,B,α)-independence: deviation ≤ α.
pub fn is_independent(h: &HashFn, a: &SeedSet, b: BDescriptor, alpha: &BigRational) -> bool {
    independence_deviation(h, a, b) <= *alpha
}

/// All constraints a hash must satisfy to be good: for each surviving
/// layer-i node, its acc- and rej-seed-sets paired against the B-descriptor
/// of every layer-(i+1) neighbor.
#[derive(Debug, Clone, Default)]
pub struct GoodContext {
    pub pairs: Vec<(SeedSet, BDescriptor)>,
}

impl GoodContext {
    pub fn push(&mut self, a: SeedSet, b: BDescriptor) {
        self.pairs.push((a, b));
    }
}

/// A hash is good when it is (A,B,α)-independent for every constraint pair.
pub fn is_good(h: &HashFn, context: &GoodContext, alpha: &BigRational) -> bool {
    context.pairs.iter().all(|(a, b)| is_independent(h, a, *b, alpha))
}

/// Closed-form bound on the family fraction that fails one (A,B,α)
/// constraint: ρ(A)ρ(B)(1−ρ(B)) / (2^m α²).
pub fn nisan_bad_bound(
    rho_a: &BigRational,
    rho_b: &BigRational,
    m: u32,
    alpha: &BigRational,
) -> BigRational {
    assert!(*alpha > rat(0, 1), "alpha must be positive");
    rho_a * rho_b * (rat(1, 1) - rho_b) / (pow2(m) * alpha * alpha)
}

/// Union bound over a whole goodness context: 2·d_M·S / (2^m α²). Values
/// above 1 are vacuous but still reported.
pub fn aggregate_bad_bound(s_size: u64, d_m: u64, m: u32, alpha: &BigRational) -> BigRational {
    assert!(*alpha > rat(0, 1), "alpha must be positive");
    rat(2 * d_m as i64 * s_size as i64, 1) / (pow2(m) * alpha * alpha)
}

/// Exhaustive pairwise-independence audit of a family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditReport {
    pub m: u32,
    pub family_size: usize,
    pub constraints_checked: u64,
    pub violations: u64,
}

impl AuditReport {
    pub fn ok(&self) -> bool {
        self.violations == 0
    }
}

/// Checks Pr_h[h(x)=u ∧ h(y)=v] = |family|/2^{2m} · 2^{−2m}-normalized —
/// i.e. for the full family, exactly one member per (x≠y, u, v). Works on
/// any supplied family so degenerate families can serve as negative
/// controls. Exhaustive; callers keep m ≤ 4.
pub fn pairwise_independence_audit(m: u32, family: &[HashFn]) -> AuditReport {
    assert!(family.iter().all(|h| h.m == m));
    let n = 1u32 << m;
    let mut checked = 0u64;
    let mut violations = 0u64;
    // Pairwise independence at density 2^{−2m} means each (x≠y,u,v) cell
    // is hit by exactly |family|/2^{2m} of the family (1 for the full one).
    let expect_num = family.len() as u64; // numerator of count·2^{2m}/|family| == 1 check
    for x in 0..n {
        for y in 0..n {
            if x == y {
                continue;
            }
            for u in 0..n {
                for v in 0..n {
                    let count = family
                        .iter()
                        .filter(|h| h.eval(x) == u && h.eval(y) == v)
                        .count() as u64;
                    checked += 1;
                    // count / |family| must equal 2^{−2m}:
                    if count * (1u64 << (2 * m)) != expect_num {
                        violations += 1;
                    }
                }
            }
        }
    }
    AuditReport { m, family_size: family.len(), constraints_checked: checked, violations }
}
