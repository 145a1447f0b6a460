//! Machine-to-machine constructions.
//!
//! Every transform returns an explicit product machine — a fresh transition
//! table, not a simulation wrapper — so the result can be validated, run,
//! graphed and measured like any hand-written machine. Products are built by
//! a worklist walk over a typed description of the product's control states;
//! only constructible states are materialized, so a machine that never moves
//! a head never pays for position tracking.
//!
//! The constructions:
//!
//! - [`boost_majority`] — run the inner machine `k` times on the same tapes
//!   and output the majority verdict. Between runs the inner work region is
//!   wiped and all heads walk home. Tapes have no end markers, so head
//!   positions are carried in the control state (the input head up to
//!   [`INPUT_TRACK`]); the run counter and the verdict tally are also written
//!   to extra work cells.
//! - [`halve_transform`] — flip one fair coin; reject outright on 0, run the
//!   inner machine on 1. Halves both the acceptance probability and the
//!   damage probability of a machine that never errs toward acceptance.
//! - [`square_transform`] — run the inner machine twice, unconditionally, and
//!   accept if either run accepted. Sends acceptance probability ε to
//!   2ε − ε² and damage probability δ to 2δ − δ².
//! - [`high_error_machine`] — with dyadic probability α = p/2^q, deliberately
//!   zero the catalytic tape and run a deterministic decider in the freed
//!   space; otherwise answer a fair coin. Success lands at exactly 1/2 + α/2
//!   while the tape is damaged with probability at most α.
//! - [`xor_randomness_transform`] — draw `c` coins `r`, run a deterministic
//!   always-resetting machine on `τ ⊕ r`, then un-XOR the tape before
//!   halting. For every fixed τ the acceptance probability over `r` equals
//!   the inner machine's acceptance fraction over its tape contents, and the
//!   final tape is always τ.

use std::collections::BTreeMap;
use std::collections::VecDeque;

use thiserror::Error;

use crate::machine::{HaltKind, MachineError, MachineSpec, Move, StateId, Transition};

/// Highest input-head position a multi-run product tracks. Runs that push the
/// input head further resolve to DontKnow instead of silently misbehaving.
pub const INPUT_TRACK: u16 = 32;

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("majority width must be odd, got {0}")]
    EvenMajority(usize),
    #[error("dyadic numerator {p} exceeds denominator 2^{q}")]
    AlphaRange { p: u64, q: u32 },
    #[error("inner machine must be deterministic")]
    NotDeterministic,
    #[error("product would need {0} control states (limit 65532)")]
    TooManyStates(usize),
    #[error("product work tape would need {0} bits (limit 64)")]
    WorkTooWide(usize),
    #[error(transparent)]
    Machine(#[from] MachineError),
}

/// Where one product transition lands: another product control state, or one
/// of the product's halting states.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Next<K> {
    State(K),
    Halt(HaltKind),
}

/// One product transition before state ids are assigned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Micro<K> {
    pub(crate) next: Next<K>,
    pub(crate) write_work: u8,
    pub(crate) write_cat: u8,
    pub(crate) mv_input: Move,
    pub(crate) mv_work: Move,
    pub(crate) mv_cat: Move,
}

impl<K> Micro<K> {
    /// A transition that rewrites what it read and stays put: the safe filler
    /// for control states that should never be entered with these tape bits.
    pub(crate) fn refuse(workbit: u8, catbit: u8) -> Self {
        Micro {
            next: Next::Halt(HaltKind::DontKnow),
            write_work: workbit,
            write_cat: catbit,
            mv_input: Move::S,
            mv_work: Move::S,
            mv_cat: Move::S,
        }
    }
}

/// Builds a [`MachineSpec`] from a typed product-state space by breadth-first
/// worklist expansion, starting from `start`. `expand` answers, for a control
/// state and the three tape bits plus a coin, what the product does. Rows
/// whose two coin branches agree are stored coin-independent, so coin
/// consumption matches the construction, and the `randomized` header is
/// computed, never assumed.
pub(crate) fn build_product<K, F>(s: usize, c: usize, start: K, expand: F) -> Result<MachineSpec, TransformError>
where
    K: Ord + Clone,
    F: Fn(&K, u8, u8, u8, u8) -> Micro<K>,
{
    if s > 64 {
        return Err(TransformError::WorkTooWide(s));
    }
    let mut ids: BTreeMap<K, StateId> = BTreeMap::new();
    let mut order: Vec<K> = Vec::new();
    let mut queue: VecDeque<K> = VecDeque::new();
    ids.insert(start.clone(), 0);
    order.push(start.clone());
    queue.push_back(start);

    // (state id, inbit, workbit, catbit) → the two coin branches.
    let mut rows: Vec<(StateId, u8, u8, u8, [Micro<K>; 2])> = Vec::new();
    while let Some(k) = queue.pop_front() {
        let id = ids[&k];
        for inbit in 0..2u8 {
            for workbit in 0..2u8 {
                for catbit in 0..2u8 {
                    let pair =
                        [expand(&k, inbit, workbit, catbit, 0), expand(&k, inbit, workbit, catbit, 1)];
                    for micro in &pair {
                        if let Next::State(target) = &micro.next {
                            if !ids.contains_key(target) {
                                let next_id = ids.len();
                                if next_id > (StateId::MAX as usize) - 3 {
                                    return Err(TransformError::TooManyStates(next_id));
                                }
                                ids.insert(target.clone(), next_id as StateId);
                                order.push(target.clone());
                                queue.push_back(target.clone());
                            }
                        }
                    }
                    rows.push((id, inbit, workbit, catbit, pair));
                }
            }
        }
    }

    let control = order.len();
    let mut names: Vec<String> = (0..control).map(|i| format!("P{i}")).collect();
    names.push("ACC".into());
    names.push("REJ".into());
    names.push("DK".into());
    let acc = control as StateId;
    let rej = acc + 1;
    let dk = acc + 2;
    let resolve = |next: &Next<K>| -> StateId {
        match next {
            Next::State(k) => ids[k],
            Next::Halt(HaltKind::Accept) => acc,
            Next::Halt(HaltKind::Reject) => rej,
            Next::Halt(HaltKind::DontKnow) => dk,
        }
    };

    let mut table: Vec<(StateId, u8, u8, u8, Option<u8>, Transition)> = Vec::new();
    let mut randomized = false;
    for (id, inbit, workbit, catbit, [m0, m1]) in &rows {
        let t0 = Transition {
            next: resolve(&m0.next),
            write_work: m0.write_work,
            write_cat: m0.write_cat,
            mv_input: m0.mv_input,
            mv_work: m0.mv_work,
            mv_cat: m0.mv_cat,
        };
        let t1 = Transition {
            next: resolve(&m1.next),
            write_work: m1.write_work,
            write_cat: m1.write_cat,
            mv_input: m1.mv_input,
            mv_work: m1.mv_work,
            mv_cat: m1.mv_cat,
        };
        if t0 == t1 {
            table.push((*id, *inbit, *workbit, *catbit, None, t0));
        } else {
            randomized = true;
            table.push((*id, *inbit, *workbit, *catbit, Some(0), t0));
            table.push((*id, *inbit, *workbit, *catbit, Some(1), t1));
        }
    }

    let mut machine =
        MachineSpec::new(names, "P0", "ACC", "REJ", Some("DK"), s, c, randomized)?;
    for (state, inbit, workbit, catbit, coin, t) in table {
        machine.add_row(state, inbit, workbit, catbit, coin, t)?;
    }
    Ok(machine)
}

/// Applies a head move inside `[0, len)`, or `None` if it would leave the tape.
pub(crate) fn moved(pos: u16, mv: Move, len: usize) -> Option<u16> {
    let next = pos as i64 + mv.delta();
    if next < 0 || next >= len as i64 {
        None
    } else {
        Some(next as u16)
    }
}

/// Applies an input-head move inside the tracked window `[0, INPUT_TRACK]`.
fn moved_input(pos: u16, mv: Move) -> Option<u16> {
    let next = pos as i64 + mv.delta();
    if next < 0 || next > INPUT_TRACK as i64 {
        None
    } else {
        Some(next as u16)
    }
}

/// How a serial multi-run product turns its verdict tally into an answer.
#[derive(Debug, Clone, Copy)]
enum VoteRule {
    /// Strict majority of accepts wins; strict majority of rejects loses;
    /// anything else (possible only with DontKnow votes) stays undecided.
    Majority,
    /// Accept if any run accepted; otherwise DontKnow if any run was
    /// undecided; otherwise reject.
    AcceptIfAny,
}

impl VoteRule {
    fn decide(self, k: usize, acc: u8, rej: u8, dk: u8) -> HaltKind {
        match self {
            VoteRule::Majority => {
                if (acc as usize) > k / 2 {
                    HaltKind::Accept
                } else if (rej as usize) > k / 2 {
                    HaltKind::Reject
                } else {
                    HaltKind::DontKnow
                }
            }
            VoteRule::AcceptIfAny => {
                if acc >= 1 {
                    HaltKind::Accept
                } else if dk >= 1 {
                    HaltKind::DontKnow
                } else {
                    HaltKind::Reject
                }
            }
        }
    }
}

/// Control states of the serial `k`-run product.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum SerK {
    /// Inner machine mid-run, with all three head positions tracked and the
    /// verdict tally so far.
    Run { q: StateId, ih: u16, wh: u16, ch: u16, acc: u8, rej: u8, dk: u8 },
    /// Between runs: sweeping the work head right, zeroing the inner region
    /// and recording the run counter and tally on the extra cells.
    WipeR { pos: u16, ih: u16, ch: u16, acc: u8, rej: u8, dk: u8 },
    /// Between runs: sweeping the work head back to cell 0.
    WipeL { pos: u16, ih: u16, ch: u16, acc: u8, rej: u8, dk: u8 },
    /// Between runs: walking the catalytic head home.
    CatHome { pos: u16, ih: u16, acc: u8, rej: u8, dk: u8 },
    /// Between runs: walking the input head home.
    InHome { pos: u16, acc: u8, rej: u8, dk: u8 },
}

/// Runs `inner` serially `k` times on the same tapes and answers by `rule`.
fn serial_product(inner: &MachineSpec, k: usize, rule: VoteRule) -> Result<MachineSpec, TransformError> {
    let s_in = inner.s;
    let c = inner.c;
    // Extra work cells: the run counter (values 0..=k) and the accept/reject
    // tally, each written during the between-run sweep. A single run needs
    // neither, which keeps the k = 1 product extensionally identical.
    let ctr_w = if k <= 1 { 0 } else { crate::bits::width_for(k + 1) };
    let half_w = if k <= 1 { 0 } else { crate::bits::width_for(k + 1) };
    let s = s_in + ctr_w + 2 * half_w;
    if s > 64 {
        return Err(TransformError::WorkTooWide(s));
    }

    let pattern_bit = |offset: usize, acc: u8, rej: u8, dk: u8| -> u8 {
        let runs_done = (acc + rej + dk) as usize;
        if offset < ctr_w {
            ((runs_done >> offset) & 1) as u8
        } else if offset < ctr_w + half_w {
            ((acc as usize >> (offset - ctr_w)) & 1) as u8
        } else {
            ((rej as usize >> (offset - ctr_w - half_w)) & 1) as u8
        }
    };

    let start = SerK::Run { q: inner.start, ih: 0, wh: 0, ch: 0, acc: 0, rej: 0, dk: 0 };
    let machine = build_product(s, c, start, |state, inbit, workbit, catbit, coin| {
        match state {
            SerK::Run { q, ih, wh, ch, acc, rej, dk } => {
                let Some(t) = inner.transition(*q, inbit, workbit, catbit, coin) else {
                    return Micro::refuse(workbit, catbit);
                };
                let (Some(ih2), Some(wh2), Some(ch2)) = (
                    moved_input(*ih, t.mv_input),
                    moved(*wh, t.mv_work, s_in),
                    moved(*ch, t.mv_cat, c),
                ) else {
                    return Micro::refuse(workbit, catbit);
                };
                let next = match inner.halt_kind_of(t.next) {
                    None => Next::State(SerK::Run {
                        q: t.next,
                        ih: ih2,
                        wh: wh2,
                        ch: ch2,
                        acc: *acc,
                        rej: *rej,
                        dk: *dk,
                    }),
                    Some(kind) => {
                        let (mut acc2, mut rej2, mut dk2) = (*acc, *rej, *dk);
                        match kind {
                            HaltKind::Accept => acc2 += 1,
                            HaltKind::Reject => rej2 += 1,
                            HaltKind::DontKnow => dk2 += 1,
                        }
                        if (acc2 + rej2 + dk2) as usize == k {
                            Next::Halt(rule.decide(k, acc2, rej2, dk2))
                        } else {
                            Next::State(SerK::WipeR {
                                pos: wh2,
                                ih: ih2,
                                ch: ch2,
                                acc: acc2,
                                rej: rej2,
                                dk: dk2,
                            })
                        }
                    }
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
            SerK::WipeR { pos, ih, ch, acc, rej, dk } => {
                let write = if (*pos as usize) < s_in {
                    0
                } else {
                    pattern_bit(*pos as usize - s_in, *acc, *rej, *dk)
                };
                let (next, mv_work) = if (*pos as usize) + 1 < s {
                    (
                        SerK::WipeR { pos: pos + 1, ih: *ih, ch: *ch, acc: *acc, rej: *rej, dk: *dk },
                        Move::R,
                    )
                } else {
                    (
                        SerK::WipeL { pos: pos - 1, ih: *ih, ch: *ch, acc: *acc, rej: *rej, dk: *dk },
                        Move::L,
                    )
                };
                Micro {
                    next: Next::State(next),
                    write_work: write,
                    write_cat: catbit,
                    mv_input: Move::S,
                    mv_work,
                    mv_cat: Move::S,
                }
            }
            SerK::WipeL { pos, ih, ch, acc, rej, dk } => {
                let write = if (*pos as usize) < s_in {
                    0
                } else {
                    pattern_bit(*pos as usize - s_in, *acc, *rej, *dk)
                };
                if *pos > 0 {
                    Micro {
                        next: Next::State(SerK::WipeL {
                            pos: pos - 1,
                            ih: *ih,
                            ch: *ch,
                            acc: *acc,
                            rej: *rej,
                            dk: *dk,
                        }),
                        write_work: write,
                        write_cat: catbit,
                        mv_input: Move::S,
                        mv_work: Move::L,
                        mv_cat: Move::S,
                    }
                } else {
                    let next = if *ch > 0 {
                        SerK::CatHome { pos: *ch, ih: *ih, acc: *acc, rej: *rej, dk: *dk }
                    } else if *ih > 0 {
                        SerK::InHome { pos: *ih, acc: *acc, rej: *rej, dk: *dk }
                    } else {
                        SerK::Run { q: inner.start, ih: 0, wh: 0, ch: 0, acc: *acc, rej: *rej, dk: *dk }
                    };
                    Micro {
                        next: Next::State(next),
                        write_work: write,
                        write_cat: catbit,
                        mv_input: Move::S,
                        mv_work: Move::S,
                        mv_cat: Move::S,
                    }
                }
            }
            SerK::CatHome { pos, ih, acc, rej, dk } => {
                let next = if *pos > 1 {
                    SerK::CatHome { pos: pos - 1, ih: *ih, acc: *acc, rej: *rej, dk: *dk }
                } else if *ih > 0 {
                    SerK::InHome { pos: *ih, acc: *acc, rej: *rej, dk: *dk }
                } else {
                    SerK::Run { q: inner.start, ih: 0, wh: 0, ch: 0, acc: *acc, rej: *rej, dk: *dk }
                };
                Micro {
                    next: Next::State(next),
                    write_work: workbit,
                    write_cat: catbit,
                    mv_input: Move::S,
                    mv_work: Move::S,
                    mv_cat: Move::L,
                }
            }
            SerK::InHome { pos, acc, rej, dk } => {
                let next = if *pos > 1 {
                    SerK::InHome { pos: pos - 1, acc: *acc, rej: *rej, dk: *dk }
                } else {
                    SerK::Run { q: inner.start, ih: 0, wh: 0, ch: 0, acc: *acc, rej: *rej, dk: *dk }
                };
                Micro {
                    next: Next::State(next),
                    write_work: workbit,
                    write_cat: catbit,
                    mv_input: Move::L,
                    mv_work: Move::S,
                    mv_cat: Move::S,
                }
            }
        }
    })?;
    Ok(machine)
}

/// Product machine that runs `inner` `k` times (k odd) on the same tapes and
/// outputs the majority verdict. For `k = 1` the product reproduces the inner
/// machine's run outcome exactly — same halt, final tape, step count and coin
/// count — on every tape and coin stream.
pub fn boost_majority(inner: &MachineSpec, k: usize) -> Result<MachineSpec, TransformError> {
    if k == 0 || k % 2 == 0 {
        return Err(TransformError::EvenMajority(k));
    }
    serial_product(inner, k, VoteRule::Majority)
}

/// Product machine that runs `inner` twice, unconditionally, and accepts if
/// either run accepted. Acceptance probability ε becomes 2ε − ε² and damage
/// probability δ becomes 2δ − δ² for machines whose damage, once done, is
/// never accidentally reverted by a second run.
pub fn square_transform(inner: &MachineSpec) -> Result<MachineSpec, TransformError> {
    serial_product(inner, 2, VoteRule::AcceptIfAny)
}

/// Control states of the coin-gated product.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum HalveK {
    Flip,
    Emb { q: StateId },
}

/// Product machine that flips one fair coin: on 0 it rejects immediately with
/// the tape untouched, on 1 it runs `inner` to completion. Both the
/// acceptance probability and the damage probability are halved exactly.
pub fn halve_transform(inner: &MachineSpec) -> Result<MachineSpec, TransformError> {
    build_product(inner.s, inner.c, HalveK::Flip, |state, _inbit, workbit, catbit, coin| {
        match state {
            HalveK::Flip => {
                let next = if coin == 0 {
                    Next::Halt(HaltKind::Reject)
                } else {
                    Next::State(HalveK::Emb { q: inner.start })
                };
                Micro {
                    next,
                    write_work: workbit,
                    write_cat: catbit,
                    mv_input: Move::S,
                    mv_work: Move::S,
                    mv_cat: Move::S,
                }
            }
            HalveK::Emb { q } => embed_step(inner, *q, _inbit, workbit, catbit, coin),
        }
    })
}

/// One verbatim step of an embedded machine whose halts coincide with the
/// product's halts.
fn embed_step(inner: &MachineSpec, q: StateId, inbit: u8, workbit: u8, catbit: u8, coin: u8) -> Micro<HalveK> {
    let Some(t) = inner.transition(q, inbit, workbit, catbit, coin) else {
        return Micro::refuse(workbit, catbit);
    };
    let next = match inner.halt_kind_of(t.next) {
        Some(kind) => Next::Halt(kind),
        None => Next::State(HalveK::Emb { q: t.next }),
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

/// Control states of the deliberate-damage product.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum HighK {
    /// Streaming most-significant-bit-first comparison of the coin prefix
    /// against the numerator p: `bit` coins consumed, all equal to p so far.
    Cmp { bit: u32 },
    /// The coin prefix fell outside the damage region: answer a fair coin.
    CoinAns,
    /// Damage branch: zeroing the catalytic tape left to right.
    Zero { pos: u16 },
    /// Damage branch: walking the catalytic head back home.
    Back { pos: u16 },
    /// Damage branch: the decider running in the freed catalytic space.
    Dec { q: StateId },
}

/// Product machine that, with probability α = p/2^q (decided by streaming q
/// coins against p most-significant-bit first), zeroes the catalytic tape and
/// runs `decider` in the freed space; otherwise it answers one fair coin with
/// the tape untouched. Over an always-correct decider the success probability
/// is exactly 1/2 + α/2 and the tape is damaged with probability at most α.
pub fn high_error_machine(decider: &MachineSpec, p: u64, q: u32) -> Result<MachineSpec, TransformError> {
    if q >= 64 || p > 1u64 << q {
        return Err(TransformError::AlphaRange { p, q });
    }
    if !decider.is_deterministic() {
        return Err(TransformError::NotDeterministic);
    }
    let c = decider.c;
    let start = if p == 0 {
        HighK::CoinAns
    } else if p == 1u64 << q {
        HighK::Zero { pos: 0 }
    } else {
        HighK::Cmp { bit: 0 }
    };
    build_product(decider.s, c, start, |state, inbit, workbit, catbit, coin| match state {
        HighK::Cmp { bit } => {
            let p_bit = ((p >> (q - 1 - bit)) & 1) as u8;
            let next = if coin < p_bit {
                Next::State(HighK::Zero { pos: 0 })
            } else if coin > p_bit {
                Next::State(HighK::CoinAns)
            } else if bit + 1 == q {
                // Coin prefix equals p exactly: not below p, so no damage.
                Next::State(HighK::CoinAns)
            } else {
                Next::State(HighK::Cmp { bit: bit + 1 })
            };
            Micro {
                next,
                write_work: workbit,
                write_cat: catbit,
                mv_input: Move::S,
                mv_work: Move::S,
                mv_cat: Move::S,
            }
        }
        HighK::CoinAns => Micro {
            next: Next::Halt(if coin == 1 { HaltKind::Accept } else { HaltKind::Reject }),
            write_work: workbit,
            write_cat: catbit,
            mv_input: Move::S,
            mv_work: Move::S,
            mv_cat: Move::S,
        },
        HighK::Zero { pos } => {
            let (next, mv_cat) = if (*pos as usize) + 1 < c {
                (HighK::Zero { pos: pos + 1 }, Move::R)
            } else {
                (HighK::Back { pos: *pos }, Move::S)
            };
            Micro {
                next: Next::State(next),
                write_work: workbit,
                write_cat: 0,
                mv_input: Move::S,
                mv_work: Move::S,
                mv_cat,
            }
        }
        HighK::Back { pos } => {
            let (next, mv_cat) = if *pos > 0 {
                (Next::State(HighK::Back { pos: pos - 1 }), Move::L)
            } else {
                (Next::State(HighK::Dec { q: decider.start }), Move::S)
            };
            Micro {
                next,
                write_work: workbit,
                write_cat: catbit,
                mv_input: Move::S,
                mv_work: Move::S,
                mv_cat,
            }
        }
        HighK::Dec { q } => {
            let Some(t) = decider.transition(*q, inbit, workbit, catbit, coin) else {
                return Micro::refuse(workbit, catbit);
            };
            let next = match decider.halt_kind_of(t.next) {
                Some(kind) => Next::Halt(kind),
                None => Next::State(HighK::Dec { q: t.next }),
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
    })
}

/// Control states of the coin-XOR product.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum XorK {
    /// Walking the work head out to the coin-record region.
    Grow { pos: u16 },
    /// Drawing coin r_i: record it at work cell s+i and flip cat cell i by it.
    Draw { i: u16 },
    /// Walking the work and catalytic heads home together.
    HomeBoth { w: u16, ch: u16 },
    /// The inner machine running on τ ⊕ r, with work and catalytic head
    /// positions tracked for the un-XOR phase.
    Run { q: StateId, wh: u16, ch: u16 },
    /// Inner verdict in hand: walk the work head to the coin record and the
    /// catalytic head home.
    Seek { kind: HaltKind, wh: u16, ch: u16 },
    /// Un-XOR the tape cell by cell, then halt with the inner verdict.
    UnXor { kind: HaltKind, i: u16 },
}

/// Product machine that draws `c` coins `r`, runs a deterministic
/// always-resetting machine on `τ ⊕ r` (recording `r` on `c` extra work
/// cells), and XORs `r` back into the tape before halting with the inner
/// verdict. The final tape is always τ, and for every fixed τ the acceptance
/// probability over `r` equals the inner machine's acceptance fraction over
/// its 2^c possible tape contents.
pub fn xor_randomness_transform(inner: &MachineSpec) -> Result<MachineSpec, TransformError> {
    if !inner.is_deterministic() {
        return Err(TransformError::NotDeterministic);
    }
    let s_in = inner.s;
    let c = inner.c;
    let s = s_in + c;
    if s > 64 {
        return Err(TransformError::WorkTooWide(s));
    }
    build_product(s, c, XorK::Grow { pos: 0 }, |state, _inbit, workbit, catbit, coin| {
        match state {
            XorK::Grow { pos } => {
                let next = if (*pos as usize) + 1 == s_in { XorK::Draw { i: 0 } } else { XorK::Grow { pos: pos + 1 } };
                Micro {
                    next: Next::State(next),
                    write_work: workbit,
                    write_cat: catbit,
                    mv_input: Move::S,
                    mv_work: Move::R,
                    mv_cat: Move::S,
                }
            }
            XorK::Draw { i } => {
                let last = (*i as usize) + 1 == c;
                let next = if last {
                    XorK::HomeBoth { w: (s_in + c - 1) as u16, ch: (c - 1) as u16 }
                } else {
                    XorK::Draw { i: i + 1 }
                };
                let mv = if last { Move::S } else { Move::R };
                Micro {
                    next: Next::State(next),
                    write_work: coin,
                    write_cat: catbit ^ coin,
                    mv_input: Move::S,
                    mv_work: mv,
                    mv_cat: mv,
                }
            }
            XorK::HomeBoth { w, ch } => {
                let w2 = w.saturating_sub(1);
                let ch2 = ch.saturating_sub(1);
                let next = if w2 == 0 && ch2 == 0 {
                    XorK::Run { q: inner.start, wh: 0, ch: 0 }
                } else {
                    XorK::HomeBoth { w: w2, ch: ch2 }
                };
                Micro {
                    next: Next::State(next),
                    write_work: workbit,
                    write_cat: catbit,
                    mv_input: Move::S,
                    mv_work: if *w > 0 { Move::L } else { Move::S },
                    mv_cat: if *ch > 0 { Move::L } else { Move::S },
                }
            }
            XorK::Run { q, wh, ch } => {
                let Some(t) = inner.transition(*q, _inbit, workbit, catbit, coin) else {
                    return Micro::refuse(workbit, catbit);
                };
                let (Some(wh2), Some(ch2)) = (moved(*wh, t.mv_work, s_in), moved(*ch, t.mv_cat, c))
                else {
                    return Micro::refuse(workbit, catbit);
                };
                let next = match inner.halt_kind_of(t.next) {
                    Some(kind) => XorK::Seek { kind, wh: wh2, ch: ch2 },
                    None => XorK::Run { q: t.next, wh: wh2, ch: ch2 },
                };
                Micro {
                    next: Next::State(next),
                    write_work: t.write_work,
                    write_cat: t.write_cat,
                    mv_input: t.mv_input,
                    mv_work: t.mv_work,
                    mv_cat: t.mv_cat,
                }
            }
            XorK::Seek { kind, wh, ch } => {
                let wh2 = if (*wh as usize) < s_in { wh + 1 } else { *wh };
                let ch2 = ch.saturating_sub(1);
                let next = if wh2 as usize == s_in && ch2 == 0 {
                    XorK::UnXor { kind: *kind, i: 0 }
                } else {
                    XorK::Seek { kind: *kind, wh: wh2, ch: ch2 }
                };
                Micro {
                    next: Next::State(next),
                    write_work: workbit,
                    write_cat: catbit,
                    mv_input: Move::S,
                    mv_work: if (*wh as usize) < s_in { Move::R } else { Move::S },
                    mv_cat: if *ch > 0 { Move::L } else { Move::S },
                }
            }
            XorK::UnXor { kind, i } => {
                let last = (*i as usize) + 1 == c;
                let next = if last {
                    Next::Halt(*kind)
                } else {
                    Next::State(XorK::UnXor { kind: *kind, i: i + 1 })
                };
                let mv = if last { Move::S } else { Move::R };
                Micro {
                    next,
                    write_work: workbit,
                    write_cat: catbit ^ workbit,
                    mv_input: Move::S,
                    mv_work: mv,
                    mv_cat: mv,
                }
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::{BitBuf, Bits};
    use crate::coins::CoinSource;
    use crate::machine::{parse_machine_text, validate};
    use crate::machines;
    use crate::simulator::{halt_distribution, run};
    use crate::{pow2_inv, rat};
    use num::rational::BigRational;
    use num::{One, Zero};

    const HORIZON: u64 = 100_000;

    fn coin_src(bits: Bits) -> CoinSource {
        let mut buf = BitBuf::new();
        for b in bits.iter() {
            buf.push(b);
        }
        CoinSource::from_bits(buf)
    }

    /// Deterministic, always-resetting: accepts iff cat bit 0 is 1.
    fn cat_reader() -> crate::machine::MachineSpec {
        parse_machine_text(
            "states=START,ACC,REJ\n\
             start=START\n\
             accept=ACC\n\
             reject=REJ\n\
             dontknow=-\n\
             s=3\n\
             c=2\n\
             randomized=false\n\
             START 0 0 0 * -> REJ 0 0 S S S\n\
             START 1 0 0 * -> REJ 0 0 S S S\n\
             START 0 1 0 * -> REJ 1 0 S S S\n\
             START 1 1 0 * -> REJ 1 0 S S S\n\
             START 0 0 1 * -> ACC 0 1 S S S\n\
             START 1 0 1 * -> ACC 0 1 S S S\n\
             START 0 1 1 * -> ACC 1 1 S S S\n\
             START 1 1 1 * -> ACC 1 1 S S S\n",
        )
        .unwrap()
    }

    #[test]
    fn boost_with_k_one_is_extensionally_identical() {
        let input = Bits::parse_binary("10").unwrap();
        for inner in [machines::bpeps(), machines::rhalf(), machines::oneflip()] {
            let product = boost_majority(&inner, 1).unwrap();
            assert_eq!(product.s, inner.s, "k=1 must not widen the work tape");
            for tau in Bits::all(inner.c) {
                for coins in Bits::all(4) {
                    let a = run(&inner, &input, tau, &mut coin_src(coins), HORIZON).unwrap();
                    let b = run(&product, &input, tau, &mut coin_src(coins), HORIZON).unwrap();
                    assert_eq!(a, b, "tau={tau} coins={coins}");
                }
            }
        }
    }

    #[test]
    fn boost_three_clears_the_majority_bound() {
        let product = boost_majority(&machines::bpeps(), 3).unwrap();
        let yes = Bits::parse_binary("1").unwrap();
        let no = Bits::parse_binary("0").unwrap();
        // Each run accepts a yes-instance with probability 3/4; the majority
        // of three accepts with 27/32.
        let want = rat(27, 32);
        let bound = rat(20, 27);
        for tau in Bits::all(product.c) {
            let d = halt_distribution(&product, &yes, tau, HORIZON).unwrap();
            assert_eq!(d.prob_kind(crate::machine::HaltKind::Accept), want);
            assert!(d.prob_kind(crate::machine::HaltKind::Accept) >= bound);
            let d = halt_distribution(&product, &no, tau, HORIZON).unwrap();
            assert_eq!(d.prob_kind(crate::machine::HaltKind::Reject), want);
        }
    }

    #[test]
    fn boost_expected_errors_stay_within_k_times_inner() {
        let inner = machines::coinflip();
        let product = boost_majority(&inner, 3).unwrap();
        let input = Bits::parse_binary("0").unwrap();
        for tau in Bits::all(inner.c) {
            let inner_errs =
                halt_distribution(&inner, &input, tau, HORIZON).unwrap().expected_errors(tau);
            assert_eq!(inner_errs, rat(1, 2));
            let boosted =
                halt_distribution(&product, &input, tau, HORIZON).unwrap().expected_errors(tau);
            // The flipped bit is flipped back by a second flip: the exact
            // damage is Pr[odd number of accepting runs] = 1/2, within 3×.
            assert_eq!(boosted, rat(1, 2));
            assert!(boosted <= rat(3, 1) * inner_errs);
        }
    }

    #[test]
    fn boost_rejects_even_widths() {
        assert!(matches!(
            boost_majority(&machines::bpeps(), 2),
            Err(TransformError::EvenMajority(2))
        ));
        assert!(matches!(
            boost_majority(&machines::bpeps(), 0),
            Err(TransformError::EvenMajority(0))
        ));
    }

    #[test]
    fn square_hits_the_exact_closed_form() {
        // Inner: accepts yes-instances with probability 1/2, stamping cat bit
        // zero to 1 on accept; never errs toward acceptance on no-instances.
        let product = square_transform(&machines::rhalf()).unwrap();
        let yes = Bits::parse_binary("1").unwrap();
        let no = Bits::parse_binary("0").unwrap();
        for tau in Bits::all(product.c) {
            let d = halt_distribution(&product, &yes, tau, HORIZON).unwrap();
            // ε' = 2ε − ε² = 3/4 for every τ.
            assert_eq!(d.prob_kind(HaltKind::Accept), rat(3, 4), "tau={tau}");
            let reset = d.reset_probability(tau);
            if tau.get(0) == 0 {
                // δ' = 2δ − δ² = 3/4 on the tapes the stamp damages.
                assert_eq!(reset, rat(1, 4), "tau={tau}");
            } else {
                assert_eq!(reset, BigRational::one(), "tau={tau}");
            }
            // One-sidedness survives: no-instances always reject, tape intact.
            let d = halt_distribution(&product, &no, tau, HORIZON).unwrap();
            assert_eq!(d.prob_kind(HaltKind::Reject), BigRational::one());
            assert_eq!(d.reset_probability(tau), BigRational::one());
        }
    }

    #[test]
    fn square_runs_twice_even_when_the_first_run_accepts() {
        let inner = machines::rhalf();
        let product = square_transform(&inner).unwrap();
        let yes = Bits::parse_binary("1").unwrap();
        let tau = Bits::zeros(inner.c);
        // First run accepts (and stamps the tape); the product must still run
        // again rather than halting early.
        let accept_first = Bits::parse_binary("11").unwrap();
        let out = run(&product, &yes, tau, &mut coin_src(accept_first), HORIZON).unwrap();
        assert_eq!(out.halt, HaltKind::Accept);
        assert!(out.steps > 2, "the second run and the between-run sweep must happen");
        // First run rejects, second accepts: the second run's coin decides,
        // so both coins are genuinely consumed.
        let accept_second = Bits::parse_binary("01").unwrap();
        let out = run(&product, &yes, tau, &mut coin_src(accept_second), HORIZON).unwrap();
        assert_eq!(out.halt, HaltKind::Accept);
        assert_eq!(out.coins_consumed, 2);
        assert_eq!(out.final_cat, tau.with(0, 1), "the accepting run stamps the tape");
    }

    #[test]
    fn halve_halves_both_probabilities() {
        let product = halve_transform(&machines::rhalf()).unwrap();
        let yes = Bits::parse_binary("1").unwrap();
        let no = Bits::parse_binary("0").unwrap();
        for tau in Bits::all(product.c) {
            let d = halt_distribution(&product, &yes, tau, HORIZON).unwrap();
            assert_eq!(d.prob_kind(HaltKind::Accept), rat(1, 4), "tau={tau}");
            let reset = d.reset_probability(tau);
            if tau.get(0) == 0 {
                assert_eq!(reset, rat(3, 4), "tau={tau}");
            } else {
                assert_eq!(reset, BigRational::one(), "tau={tau}");
            }
            let d = halt_distribution(&product, &no, tau, HORIZON).unwrap();
            assert_eq!(d.prob_kind(HaltKind::Reject), BigRational::one());
            assert_eq!(d.reset_probability(tau), BigRational::one());
        }
    }

    #[test]
    fn halve_preserves_zero_damage() {
        let product = halve_transform(&machines::bpeps()).unwrap();
        let yes = Bits::parse_binary("1").unwrap();
        for tau in Bits::all(product.c) {
            let d = halt_distribution(&product, &yes, tau, HORIZON).unwrap();
            assert_eq!(d.reset_probability(tau), BigRational::one(), "tau={tau}");
            // Success halves: 1/2 · 3/4 = 3/8.
            assert_eq!(d.prob_kind(HaltKind::Accept), rat(3, 8));
        }
    }

    #[test]
    fn high_error_quarter_is_five_eighths_and_quarter_exactly() {
        let product = high_error_machine(&machines::oneflip(), 1, 2).unwrap();
        let yes = Bits::parse_binary("1").unwrap();
        let no = Bits::parse_binary("0").unwrap();
        // The damage branch leaves the decider's scratch: 0^c with bit 0
        // flipped. Only that tape is ever "reset" by accident.
        let scratch_end = Bits::zeros(product.c).with(0, 1);
        let mut worst_damage = BigRational::zero();
        for tau in Bits::all(product.c) {
            let d = halt_distribution(&product, &yes, tau, HORIZON).unwrap();
            assert_eq!(d.prob_kind(HaltKind::Accept), rat(5, 8), "tau={tau}");
            let damage = BigRational::one() - d.reset_probability(tau);
            if tau == scratch_end {
                assert_eq!(damage, BigRational::zero());
            } else {
                assert_eq!(damage, rat(1, 4), "tau={tau}");
            }
            if damage > worst_damage {
                worst_damage = damage;
            }
            let d = halt_distribution(&product, &no, tau, HORIZON).unwrap();
            assert_eq!(d.prob_kind(HaltKind::Reject), rat(5, 8), "tau={tau}");
        }
        assert_eq!(worst_damage, rat(1, 4));
    }

    #[test]
    fn high_error_extremes_behave() {
        let yes = Bits::parse_binary("1").unwrap();
        // α = 0: never damages, success exactly 1/2.
        let never = high_error_machine(&machines::oneflip(), 0, 0).unwrap();
        for tau in Bits::all(never.c) {
            let d = halt_distribution(&never, &yes, tau, HORIZON).unwrap();
            assert_eq!(d.prob_kind(HaltKind::Accept), pow2_inv(1));
            assert_eq!(d.reset_probability(tau), BigRational::one());
        }
        // α = 1: always decides, success exactly 1, fully deterministic.
        let always = high_error_machine(&machines::oneflip(), 1, 0).unwrap();
        assert!(always.is_deterministic());
        for tau in Bits::all(always.c) {
            let d = halt_distribution(&always, &yes, tau, HORIZON).unwrap();
            assert_eq!(d.prob_kind(HaltKind::Accept), BigRational::one());
        }
        assert!(matches!(
            high_error_machine(&machines::oneflip(), 5, 2),
            Err(TransformError::AlphaRange { p: 5, q: 2 })
        ));
        assert!(matches!(
            high_error_machine(&machines::rhalf(), 1, 2),
            Err(TransformError::NotDeterministic)
        ));
    }

    #[test]
    fn xor_transform_matches_the_acceptance_fraction_for_every_tau() {
        let inner = cat_reader();
        let product = xor_randomness_transform(&inner).unwrap();
        let input = Bits::parse_binary("0").unwrap();
        // The inner machine accepts exactly half of the 2^c tape contents, so
        // the product accepts with probability exactly 1/2 for every fixed τ.
        for tau in Bits::all(product.c) {
            let d = halt_distribution(&product, &input, tau, HORIZON).unwrap();
            assert_eq!(d.prob_kind(HaltKind::Accept), pow2_inv(1), "tau={tau}");
            assert_eq!(d.reset_probability(tau), BigRational::one(), "tau={tau}");
        }
    }

    #[test]
    fn xor_transform_restores_tau_on_every_coin_path() {
        let inner = cat_reader();
        let product = xor_randomness_transform(&inner).unwrap();
        let input = Bits::parse_binary("1").unwrap();
        for tau in Bits::all(product.c) {
            for coins in Bits::all(product.c) {
                let out = run(&product, &input, tau, &mut coin_src(coins), HORIZON).unwrap();
                assert_eq!(out.final_cat, tau, "tau={tau} coins={coins}");
                assert_eq!(out.coins_consumed, product.c as u64);
                // The verdict tracks the XORed tape the inner machine saw.
                let want = if tau.get(0) ^ coins.get(0) == 1 {
                    HaltKind::Accept
                } else {
                    HaltKind::Reject
                };
                assert_eq!(out.halt, want);
            }
        }
    }

    #[test]
    fn xor_transform_of_an_always_acceptor_always_accepts() {
        let product = xor_randomness_transform(&machines::one_step()).unwrap();
        let input = Bits::parse_binary("0").unwrap();
        for tau in Bits::all(product.c) {
            let d = halt_distribution(&product, &input, tau, HORIZON).unwrap();
            assert_eq!(d.prob_kind(HaltKind::Accept), BigRational::one());
            assert_eq!(d.reset_probability(tau), BigRational::one());
        }
        assert!(matches!(
            xor_randomness_transform(&machines::rhalf()),
            Err(TransformError::NotDeterministic)
        ));
    }

    #[test]
    fn products_validate_as_total_machines() {
        let input = Bits::parse_binary("10").unwrap();
        let products = vec![
            ("boost3", boost_majority(&machines::bpeps(), 3).unwrap()),
            ("square", square_transform(&machines::rhalf()).unwrap()),
            ("halve", halve_transform(&machines::rhalf()).unwrap()),
            ("high", high_error_machine(&machines::oneflip(), 1, 2).unwrap()),
            ("xor", xor_randomness_transform(&cat_reader()).unwrap()),
        ];
        for (name, m) in products {
            // Budget 1 skips the exhaustive degree sweep (product configuration
            // spaces run to millions) while keeping the totality checks.
            let rep = validate(&m, &input, 1);
            assert!(rep.ok, "{name} failed validation:\n{}", rep.summary());
        }
    }
}
