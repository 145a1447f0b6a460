//! Execution and exact class-semantics verification.
//!
//! [`run`] executes a machine on explicit randomness. [`halt_distribution`]
//! computes the exact halting distribution (halt kind × final catalytic
//! contents) by sparse dynamic programming over configurations with
//! `BigRational` masses — no floating point anywhere in a verdict. The
//! `verify_*` operations sweep every catalytic tape exhaustively and report
//! worst-case witnesses.

use std::collections::{BTreeMap, HashMap};

use num::rational::BigRational;
use num::{One, Signed, Zero};
use thiserror::Error;

use crate::bits::{Bits, BitsError};
use crate::coins::{CoinError, CoinSource};
use crate::machine::{step, successors, Configuration, HaltKind, MachineError, MachineSpec};
use crate::par::Parallelism;
use crate::{pow2_inv, rat};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error(transparent)]
    Coins(#[from] CoinError),
    #[error(transparent)]
    Bits(#[from] BitsError),
    #[error("run exceeded horizon of {horizon} steps without halting")]
    HorizonExceeded { horizon: u64 },
    #[error("probability mass {unabsorbed} still unabsorbed after {horizon} steps")]
    NotHalting { horizon: u64, unabsorbed: BigRational },
    #[error("operation requires a deterministic machine")]
    NotDeterministic,
}

/// Where a completed run ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub halt: HaltKind,
    pub final_cat: Bits,
    pub steps: u64,
    pub coins_consumed: u64,
}

/// Number of differing positions between two equal-length bitstrings.
pub fn hamming(a: Bits, b: Bits) -> Result<u32, BitsError> {
    a.hamming(b)
}

fn coin_needed(machine: &MachineSpec, input: &Bits, conf: &Configuration) -> bool {
    let n = input.len();
    let inbit = if (conf.input_head as usize) < n { input.get(conf.input_head as usize) } else { 0 };
    let workbit = conf.work.get(conf.work_head as usize);
    let catbit = conf.cat.get(conf.cat_head as usize);
    machine.transition(conf.state, inbit, workbit, catbit, 0)
        != machine.transition(conf.state, inbit, workbit, catbit, 1)
}

/// Runs from the start configuration on `tau` until a halt, drawing one coin
/// per step whose two branches differ (deterministic steps draw none).
/// Exceeding `horizon` is an error, never a silent truncation.
pub fn run(
    machine: &MachineSpec,
    input: &Bits,
    tau: Bits,
    coins: &mut CoinSource,
    horizon: u64,
) -> Result<RunOutcome, SimError> {
    let (outcome, _) = run_trace(machine, input, tau, coins, horizon, false)?;
    Ok(outcome)
}

/// Like [`run`], optionally collecting the visited configurations (the trace
/// starts at the start configuration and ends at the halt).
pub fn run_trace(
    machine: &MachineSpec,
    input: &Bits,
    tau: Bits,
    coins: &mut CoinSource,
    horizon: u64,
    keep_trace: bool,
) -> Result<(RunOutcome, Vec<Configuration>), SimError> {
    let mut conf = machine.start_configuration(tau);
    let mut trace = Vec::new();
    if keep_trace {
        trace.push(conf);
    }
    let mut steps = 0u64;
    let mut coins_consumed = 0u64;
    loop {
        if let Some(kind) = machine.halt_kind_of(conf.state) {
            return Ok((RunOutcome { halt: kind, final_cat: conf.cat, steps, coins_consumed }, trace));
        }
        if steps >= horizon {
            return Err(SimError::HorizonExceeded { horizon });
        }
        let coin = if coin_needed(machine, input, &conf) {
            coins_consumed += 1;
            coins.next_coin()?
        } else {
            0
        };
        conf = step(machine, input, &conf, coin)?;
        steps += 1;
        if keep_trace {
            trace.push(conf);
        }
    }
}

/// Exact halting distribution: probability mass per (halt kind, final cat).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HaltDist {
    pub masses: BTreeMap<(HaltKind, Bits), BigRational>,
}

impl HaltDist {
    pub fn total(&self) -> BigRational {
        self.masses.values().sum()
    }

    pub fn prob_kind(&self, kind: HaltKind) -> BigRational {
        self.masses
            .iter()
            .filter(|((k, _), _)| *k == kind)
            .map(|(_, m)| m.clone())
            .sum()
    }

    /// Probability the final catalytic tape equals `tau` (any halt kind).
    pub fn reset_probability(&self, tau: Bits) -> BigRational {
        self.masses
            .iter()
            .filter(|((_, cat), _)| *cat == tau)
            .map(|(_, m)| m.clone())
            .sum()
    }

    /// Probability of answering `expected` (1 = accept, 0 = reject);
    /// don't-know halts count for neither answer.
    pub fn prob_output(&self, expected: u8) -> BigRational {
        self.prob_kind(if expected == 1 { HaltKind::Accept } else { HaltKind::Reject })
    }

    /// Exact expected Hamming distance between the final tape and `tau`.
    pub fn expected_errors(&self, tau: Bits) -> BigRational {
        self.masses
            .iter()
            .map(|((_, cat), m)| {
                m * BigRational::from_integer(cat.hamming(tau).expect("equal lengths").into())
            })
            .sum()
    }

    /// The halt kind carrying the most mass, if one strictly dominates.
    pub fn dominant_kind(&self) -> Option<HaltKind> {
        let kinds = [HaltKind::Accept, HaltKind::Reject, HaltKind::DontKnow];
        let probs: Vec<BigRational> = kinds.iter().map(|&k| self.prob_kind(k)).collect();
        let best = probs.iter().max().cloned()?;
        let winners: Vec<HaltKind> = kinds
            .iter()
            .zip(&probs)
            .filter(|(_, p)| **p == best)
            .map(|(&k, _)| k)
            .collect();
        if winners.len() == 1 {
            Some(winners[0])
        } else {
            None
        }
    }
}

/// Sparse forward DP from the start configuration on `tau`: configuration
/// masses split in half per coin each step until all mass is absorbed in
/// halts. Mass still live after `horizon` steps is a [`SimError::NotHalting`]
/// error carrying the unabsorbed amount.
pub fn halt_distribution(
    machine: &MachineSpec,
    input: &Bits,
    tau: Bits,
    horizon: u64,
) -> Result<HaltDist, SimError> {
    let mut frontier: HashMap<Configuration, BigRational> = HashMap::new();
    let mut absorbed: BTreeMap<(HaltKind, Bits), BigRational> = BTreeMap::new();
    let start = machine.start_configuration(tau);
    if let Some(kind) = machine.halt_kind_of(start.state) {
        absorbed.insert((kind, start.cat), BigRational::one());
        return Ok(HaltDist { masses: absorbed });
    }
    frontier.insert(start, BigRational::one());
    let half = pow2_inv(1);
    for _ in 0..horizon {
        if frontier.is_empty() {
            break;
        }
        let mut next: HashMap<Configuration, BigRational> = HashMap::new();
        for (conf, mass) in frontier {
            let share = &mass * &half;
            for (_, target) in successors(machine, input, &conf)? {
                match machine.halt_kind_of(target.state) {
                    Some(kind) => {
                        *absorbed.entry((kind, target.cat)).or_insert_with(BigRational::zero) +=
                            share.clone();
                    }
                    None => {
                        *next.entry(target).or_insert_with(BigRational::zero) += share.clone();
                    }
                }
            }
        }
        frontier = next;
    }
    if !frontier.is_empty() {
        let unabsorbed: BigRational = frontier.values().sum();
        return Err(SimError::NotHalting { horizon, unabsorbed });
    }
    Ok(HaltDist { masses: absorbed })
}

/// Exact verdict for one class check, with worst-case witnesses.
#[derive(Debug, Clone)]
pub struct ClassReport {
    pub success_probability: BigRational,
    pub reset_probability: BigRational,
    pub expected_errors: BigRational,
    pub satisfied: bool,
    pub witnesses: Vec<String>,
}

impl ClassReport {
    pub fn summary(&self) -> String {
        let mut out = format!(
            "success={} reset={} expected-errors={} satisfied={}",
            self.success_probability, self.reset_probability, self.expected_errors, self.satisfied
        );
        for w in &self.witnesses {
            out.push_str(&format!("\n  worst-case: {w}"));
        }
        out
    }
}

/// Bounded-error check: over EVERY τ exhaustively, the machine must answer
/// `expected` with probability ≥ 1/2 + eps and end with the tape reset to τ
/// with probability ≥ 1 − delta. Reports the minima and their witnesses.
pub fn verify_bp_delta_eps(
    machine: &MachineSpec,
    input: &Bits,
    expected: u8,
    delta: &BigRational,
    eps: &BigRational,
    horizon: u64,
    par: Parallelism,
) -> Result<ClassReport, SimError> {
    let per_tau = sweep_taus(machine, input, horizon, par)?;
    let mut min_success: Option<(BigRational, Bits)> = None;
    let mut min_reset: Option<(BigRational, Bits)> = None;
    let mut max_errors = BigRational::zero();
    for (tau, dist) in &per_tau {
        let succ = dist.prob_output(expected);
        let reset = dist.reset_probability(*tau);
        let errs = dist.expected_errors(*tau);
        if min_success.as_ref().is_none_or(|(s, _)| succ < *s) {
            min_success = Some((succ, *tau));
        }
        if min_reset.as_ref().is_none_or(|(r, _)| reset < *r) {
            min_reset = Some((reset, *tau));
        }
        if errs > max_errors {
            max_errors = errs;
        }
    }
    let (success, succ_tau) = min_success.expect("c ≥ 1 gives at least one tau");
    let (reset, reset_tau) = min_reset.expect("c ≥ 1 gives at least one tau");
    let satisfied =
        success >= rat(1, 2) + eps && reset >= BigRational::one() - delta;
    Ok(ClassReport {
        witnesses: vec![
            format!("min-success tau={succ_tau} ({success})"),
            format!("min-reset tau={reset_tau} ({reset})"),
        ],
        success_probability: success,
        reset_probability: reset,
        expected_errors: max_errors,
        satisfied,
    })
}

/// Expected-errors-over-randomness check: for every τ the exact expected
/// Hamming damage must stay ≤ e, and the machine must answer correctly with
/// probability ≥ 2/3. With `expected: None` the dominant answer must be
/// unanimous across τ and is checked in its place.
pub fn verify_avg_r(
    machine: &MachineSpec,
    input: &Bits,
    expected: Option<u8>,
    e: &BigRational,
    horizon: u64,
    par: Parallelism,
) -> Result<ClassReport, SimError> {
    let per_tau = sweep_taus(machine, input, horizon, par)?;
    let expected = match expected {
        Some(b) => Some(b),
        None => {
            let mut kinds = per_tau.iter().map(|(_, d)| d.dominant_kind());
            let first = kinds.next().flatten();
            if first.is_some() && kinds.all(|k| k == first) {
                first.map(|k| u8::from(k == HaltKind::Accept))
            } else {
                None
            }
        }
    };
    let mut min_success: Option<(BigRational, Bits)> = None;
    let mut max_errors: Option<(BigRational, Bits)> = None;
    let mut total_reset = BigRational::zero();
    for (tau, dist) in &per_tau {
        let succ = match expected {
            Some(b) => dist.prob_output(b),
            None => BigRational::zero(),
        };
        let errs = dist.expected_errors(*tau);
        total_reset += dist.reset_probability(*tau);
        if min_success.as_ref().is_none_or(|(s, _)| succ < *s) {
            min_success = Some((succ, *tau));
        }
        if max_errors.as_ref().is_none_or(|(m, _)| errs > *m) {
            max_errors = Some((errs, *tau));
        }
    }
    let (success, succ_tau) = min_success.expect("c ≥ 1");
    let (errors, err_tau) = max_errors.expect("c ≥ 1");
    let satisfied = expected.is_some() && success >= rat(2, 3) && errors <= *e;
    Ok(ClassReport {
        witnesses: vec![
            format!("min-success tau={succ_tau} ({success})"),
            format!("max-expected-errors tau={err_tau} ({errors})"),
        ],
        success_probability: success,
        reset_probability: total_reset / pow2_rat(machine.c as u32),
        expected_errors: errors,
        satisfied,
    })
}

/// Expected-errors-over-τ check for deterministic machines: the average over
/// uniform τ of the final tape's Hamming distance from τ must stay ≤ e, and
/// the answer must match `expected` on every τ (or be unanimous when `None`).
pub fn verify_avg_tau(
    machine: &MachineSpec,
    input: &Bits,
    expected: Option<u8>,
    e: &BigRational,
    horizon: u64,
    par: Parallelism,
) -> Result<ClassReport, SimError> {
    if !machine.is_deterministic() {
        return Err(SimError::NotDeterministic);
    }
    let outcomes: Vec<Result<(Bits, RunOutcome), SimError>> =
        par.map_range(1usize << machine.c, |i| {
            let tau = Bits::from_int(i as u128, machine.c);
            let mut coins = CoinSource::empty();
            run(machine, input, tau, &mut coins, horizon).map(|o| (tau, o))
        });
    let mut total_errors = BigRational::zero();
    let mut reset_count = 0u64;
    let mut answers: Vec<(Bits, HaltKind)> = Vec::new();
    for res in outcomes {
        let (tau, out) = res?;
        total_errors += BigRational::from_integer(out.final_cat.hamming(tau)?.into());
        if out.final_cat == tau {
            reset_count += 1;
        }
        answers.push((tau, out.halt));
    }
    let denom = pow2_rat(machine.c as u32);
    let avg_errors = total_errors / &denom;
    let expected_kind = match expected {
        Some(1) => Some(HaltKind::Accept),
        Some(_) => Some(HaltKind::Reject),
        None => {
            let first = answers.first().map(|(_, k)| *k);
            if answers.iter().all(|(_, k)| Some(*k) == first) {
                first
            } else {
                None
            }
        }
    };
    let correct = answers
        .iter()
        .filter(|(_, k)| Some(*k) == expected_kind)
        .count();
    let success = BigRational::from_integer(correct.into()) / &denom;
    let all_correct = expected_kind.is_some() && correct == answers.len();
    let satisfied = all_correct && avg_errors <= *e;
    let worst = answers
        .iter()
        .find(|(_, k)| Some(*k) != expected_kind)
        .map(|(t, k)| format!("mismatched answer tau={t} ({k})"))
        .unwrap_or_else(|| "all answers agree".into());
    Ok(ClassReport {
        success_probability: success,
        reset_probability: BigRational::from_integer(reset_count.into()) / &denom,
        expected_errors: avg_errors,
        satisfied,
        witnesses: vec![worst],
    })
}

fn pow2_rat(k: u32) -> BigRational {
    crate::pow2(k)
}

fn sweep_taus(
    machine: &MachineSpec,
    input: &Bits,
    horizon: u64,
    par: Parallelism,
) -> Result<Vec<(Bits, HaltDist)>, SimError> {
    let results: Vec<Result<(Bits, HaltDist), SimError>> =
        par.map_range(1usize << machine.c, |i| {
            let tau = Bits::from_int(i as u128, machine.c);
            halt_distribution(machine, input, tau, horizon).map(|d| (tau, d))
        });
    results.into_iter().collect()
}

/// Sanity guard used by tests: a distribution must sum to exactly one.
pub fn assert_total_mass(dist: &HaltDist) {
    assert!(dist.total().is_one(), "distribution mass {} ≠ 1", dist.total());
    assert!(dist.masses.values().all(|m| !m.is_negative()));
}
