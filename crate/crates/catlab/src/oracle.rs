//! Exact ground truth: reach-probability tables by dynamic programming,
//! τ^β-node classification and τ^β-graphs with exact exit probabilities,
//! seed-sweep measurements of PRG-driven walk trees (V_i/S_i sets, γ error
//! bounds, halt fractions), and the random-walk acceptance decider.
//!
//! Everything here is computed with exact rationals and exhaustive sweeps —
//! this module is the reference the fast paths are tested against, so it
//! favors directness over cleverness and never shares logic with the graph
//! traversal code it certifies.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use num::{BigRational, One, Zero};
use thiserror::Error;

use crate::bits::Bits;
use crate::coins::SplitMix64;
use crate::hashprg::{prg_eval, HashError, PrgSpec, SeedSet};
use crate::machine::{step, successors_lenient, Configuration, HaltKind, MachineError, MachineSpec, SerializeContext};
use crate::par::Parallelism;
use crate::{pow2, pow2_inv, rat};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error(transparent)]
    Hash(#[from] HashError),
    #[error("configuration space {size} exceeds budget {budget}")]
    BudgetExceeded { size: u128, budget: u128 },
    #[error("graph is empty (start is not a qualifying node)")]
    EmptyGraph,
    #[error("configuration is not in the table domain")]
    UnknownConfiguration,
}

fn check_budget(machine: &MachineSpec, input: &Bits, budget: u128) -> Result<(), OracleError> {
    let size = machine.config_space_size(input.len());
    if size > budget {
        return Err(OracleError::BudgetExceeded { size, budget });
    }
    Ok(())
}

/// Probabilities of halting with catalytic contents τ within a step budget:
/// `[acc, rej, other]` where `other` is any halt that is not acc_τ/rej_τ.
/// The residual 1 − (acc+rej+other) is the not-yet-halted mass.
pub type ReachRow = [BigRational; 3];

/// Per-level exact reach probabilities for every live configuration.
pub struct ReachTable {
    pub tau: Bits,
    pub horizon: usize,
    vertices: Vec<Configuration>,
    index: HashMap<Configuration, usize>,
    /// levels[l][v] — built until the horizon or an exact fixpoint.
    levels: Vec<Vec<ReachRow>>,
    /// First level whose table equals the previous one, if reached.
    pub fixpoint_at: Option<usize>,
}

impl ReachTable {
    pub fn vertices(&self) -> &[Configuration] {
        &self.vertices
    }

    fn clamp_level(&self, level: usize) -> usize {
        level.min(self.levels.len() - 1)
    }

    /// Row for a configuration at a level (levels past the fixpoint, or the
    /// horizon, repeat the last built table).
    pub fn row(&self, conf: &Configuration, level: usize) -> Result<&ReachRow, OracleError> {
        let i = self.index.get(conf).ok_or(OracleError::UnknownConfiguration)?;
        Ok(&self.levels[self.clamp_level(level)][*i])
    }

    /// acc_τ + rej_τ mass at a level: the τ-reset halt probability.
    pub fn tau_reach(&self, conf: &Configuration, level: usize) -> Result<BigRational, OracleError> {
        let row = self.row(conf, level)?;
        Ok(&row[0] + &row[1])
    }

    /// CSV-like export: serialized-conf, level, acc, rej, other (num/den).
    pub fn to_csv(&self, machine: &MachineSpec, n: usize) -> String {
        let ctx = SerializeContext::new(machine, n);
        let mut out = String::from("conf\tlevel\tacc\trej\tother\n");
        for (l, table) in self.levels.iter().enumerate() {
            for (i, row) in table.iter().enumerate() {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\n",
                    ctx.serialize(&self.vertices[i]),
                    l,
                    row[0],
                    row[1],
                    row[2]
                ));
            }
        }
        out
    }
}

/// Builds the reach table for τ by backward DP over the layered graph:
/// level 0 is an indicator at canonical halts; level i averages the two coin
/// branches of level i−1, with halts absorbing. A branch that steps out of
/// bounds contributes zero (that walk never halts).
pub fn reach_probabilities(
    machine: &MachineSpec,
    input: &Bits,
    tau: Bits,
    horizon: usize,
    budget: u128,
) -> Result<ReachTable, OracleError> {
    assert!(horizon >= 1, "horizon must be at least 1");
    check_budget(machine, input, budget)?;
    let vertices: Vec<Configuration> = machine.live_configurations(input.len()).collect();
    let index: HashMap<Configuration, usize> =
        vertices.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let zero_row = || [BigRational::zero(), BigRational::zero(), BigRational::zero()];

    let mut level0 = vec![zero_row(); vertices.len()];
    for (i, v) in vertices.iter().enumerate() {
        if machine.is_halting(v) {
            let kind = machine.halt_kind_of(v.state).expect("halting state");
            level0[i] = match (kind, v.cat == tau) {
                (HaltKind::Accept, true) => [BigRational::one(), BigRational::zero(), BigRational::zero()],
                (HaltKind::Reject, true) => [BigRational::zero(), BigRational::one(), BigRational::zero()],
                _ => [BigRational::zero(), BigRational::zero(), BigRational::one()],
            };
        }
    }

    let mut levels = vec![level0];
    let mut fixpoint_at = None;
    let half = pow2_inv(1);
    for l in 1..=horizon {
        let prev = &levels[l - 1];
        let mut cur = vec![zero_row(); vertices.len()];
        for (i, v) in vertices.iter().enumerate() {
            if machine.is_halting(v) {
                cur[i] = prev[i].clone();
                continue;
            }
            let mut acc = [BigRational::zero(), BigRational::zero(), BigRational::zero()];
            for coin in 0..2u8 {
                if let Ok(t) = step(machine, input, v, coin) {
                    let j = index[&t];
                    for k in 0..3 {
                        acc[k] += &prev[j][k] * &half;
                    }
                }
            }
            cur[i] = acc;
        }
        let fixed = cur == *prev;
        levels.push(cur);
        if fixed {
            fixpoint_at = Some(l);
            break;
        }
    }

    Ok(ReachTable { tau, horizon, vertices, index, levels, fixpoint_at })
}

/// Configurations whose probability of halting with τ within the horizon is
/// at least β.
pub fn tau_beta_nodes(
    machine: &MachineSpec,
    input: &Bits,
    tau: Bits,
    beta: &BigRational,
    horizon: usize,
    budget: u128,
) -> Result<BTreeSet<Configuration>, OracleError> {
    assert!(*beta > BigRational::zero(), "beta must be positive");
    let table = reach_probabilities(machine, input, tau, horizon, budget)?;
    let mut out = BTreeSet::new();
    for v in table.vertices() {
        if table.tau_reach(v, horizon)? >= *beta {
            out.insert(*v);
        }
    }
    Ok(out)
}

/// Edge target within a τ^β-graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbTarget {
    Node(usize),
    /// Rerouted: the true target is not a qualifying node (or the step
    /// leaves the tape), so the walk is absorbed at ⊥.
    Bot,
}

/// The τ^β-graph: qualifying nodes reachable from start via qualifying
/// nodes, with non-qualifying targets rerouted to a single ⊥ sink.
pub struct TauBetaGraph {
    pub tau: Bits,
    pub beta: BigRational,
    pub horizon: usize,
    pub nodes: Vec<Configuration>,
    index: HashMap<Configuration, usize>,
    /// Per node: `None` for halting sinks, otherwise both labeled targets.
    pub edges: Vec<Option<[TbTarget; 2]>>,
    pub start_index: Option<usize>,
}

impl TauBetaGraph {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, conf: &Configuration) -> Option<usize> {
        self.index.get(conf).copied()
    }

    pub fn contains_halt(&self, machine: &MachineSpec, kind: HaltKind) -> bool {
        self.nodes
            .iter()
            .any(|v| machine.is_halting(v) && machine.halt_kind_of(v.state) == Some(kind))
    }
}

pub fn tau_beta_graph(
    machine: &MachineSpec,
    input: &Bits,
    tau: Bits,
    beta: &BigRational,
    horizon: usize,
    budget: u128,
) -> Result<TauBetaGraph, OracleError> {
    let members = tau_beta_nodes(machine, input, tau, beta, horizon, budget)?;
    let start = machine.start_configuration(tau);
    let mut graph = TauBetaGraph {
        tau,
        beta: beta.clone(),
        horizon,
        nodes: Vec::new(),
        index: HashMap::new(),
        edges: Vec::new(),
        start_index: None,
    };
    if !members.contains(&start) {
        return Ok(graph);
    }
    let mut queue = VecDeque::new();
    let push = |graph: &mut TauBetaGraph, queue: &mut VecDeque<usize>, v: Configuration| -> usize {
        if let Some(&i) = graph.index.get(&v) {
            return i;
        }
        let i = graph.nodes.len();
        graph.nodes.push(v);
        graph.index.insert(v, i);
        graph.edges.push(None);
        queue.push_back(i);
        i
    };
    let s = push(&mut graph, &mut queue, start);
    graph.start_index = Some(s);
    while let Some(i) = queue.pop_front() {
        let v = graph.nodes[i];
        if machine.is_halting(&v) {
            continue;
        }
        let mut pair = [TbTarget::Bot, TbTarget::Bot];
        for coin in 0..2u8 {
            if let Ok(t) = step(machine, input, &v, coin) {
                if members.contains(&t) {
                    let j = push(&mut graph, &mut queue, t);
                    pair[coin as usize] = TbTarget::Node(j);
                }
            }
        }
        graph.edges[i] = Some(pair);
    }
    Ok(graph)
}

/// Exact probability that the uniform-coin walk from start absorbs at ⊥,
/// solving the absorbing-chain linear system over the rationals.
pub fn exit_probability(machine: &MachineSpec, graph: &TauBetaGraph) -> Result<BigRational, OracleError> {
    let Some(start) = graph.start_index else {
        return Err(OracleError::EmptyGraph);
    };
    // Unknowns: non-halting nodes.
    let unknowns: Vec<usize> = (0..graph.nodes.len())
        .filter(|&i| !machine.is_halting(&graph.nodes[i]))
        .collect();
    if unknowns.is_empty() {
        return Ok(BigRational::zero()); // start is itself a halt
    }
    let col: HashMap<usize, usize> = unknowns.iter().enumerate().map(|(c, &i)| (i, c)).collect();
    let n = unknowns.len();
    let mut a = vec![vec![BigRational::zero(); n]; n];
    let mut b = vec![BigRational::zero(); n];
    let half = pow2_inv(1);
    for (r, &i) in unknowns.iter().enumerate() {
        a[r][r] = BigRational::one();
        let pair = graph.edges[i].as_ref().expect("non-halting node has edges");
        for t in pair {
            match t {
                TbTarget::Bot => b[r] += &half,
                TbTarget::Node(j) => {
                    if let Some(&c) = col.get(j) {
                        a[r][c] -= &half;
                    }
                    // Halting target: absorbs with exit probability 0.
                }
            }
        }
    }
    // Gaussian elimination with exact pivoting.
    for p in 0..n {
        let pivot = (p..n)
            .find(|&r| !a[r][p].is_zero())
            .expect("absorbing chain matrix is invertible");
        a.swap(p, pivot);
        b.swap(p, pivot);
        let inv = a[p][p].clone();
        for c in p..n {
            a[p][c] = &a[p][c] / &inv;
        }
        b[p] = &b[p] / &inv;
        for r in 0..n {
            if r != p && !a[r][p].is_zero() {
                let f = a[r][p].clone();
                for c in p..n {
                    a[r][c] = &a[r][c] - &f * &a[p][c];
                }
                b[r] = &b[r] - &f * &b[p];
            }
        }
    }
    let row = col.get(&start);
    match row {
        Some(&c) => Ok(b[c].clone()),
        None => Ok(BigRational::zero()), // start is a halt: never exits
    }
}

/// For every configuration appearing as a τ^β-node for at least one τ, the
/// number of such τ.
pub fn tau_multiplicity(
    machine: &MachineSpec,
    input: &Bits,
    beta: &BigRational,
    horizon: usize,
    budget: u128,
    par: Parallelism,
) -> Result<BTreeMap<Configuration, usize>, OracleError> {
    let c = machine.c;
    let sets = par.map_range(1usize << c, |t| {
        let tau = Bits::from_int(t as u128, c);
        tau_beta_nodes(machine, input, tau, beta, horizon, budget)
    });
    let mut counts: BTreeMap<Configuration, usize> = BTreeMap::new();
    for set in sets {
        for v in set? {
            *counts.entry(v).or_insert(0) += 1;
        }
    }
    Ok(counts)
}

/// Average (over τ) vertex count of the τ^β-graphs.
pub fn avg_tau_beta_size(
    machine: &MachineSpec,
    input: &Bits,
    beta: &BigRational,
    horizon: usize,
    budget: u128,
    par: Parallelism,
) -> Result<BigRational, OracleError> {
    let c = machine.c;
    let sizes = par.map_range(1usize << c, |t| {
        let tau = Bits::from_int(t as u128, c);
        tau_beta_graph(machine, input, tau, beta, horizon, budget).map(|g| g.nodes.len())
    });
    let mut total = BigRational::zero();
    for s in sizes {
        total += rat(s? as i64, 1);
    }
    Ok(total / pow2(c as u32))
}

// ── PRG-driven walk measurements ────────────────────────────────────────────

/// Runs `from` for at most |coins| steps under the fixed coin word (halts
/// absorb; an out-of-bounds branch just stops the walk). Returns the final
/// configuration.
pub fn truncated_run(
    machine: &MachineSpec,
    input: &Bits,
    from: &Configuration,
    coins: Bits,
) -> Configuration {
    let mut cur = *from;
    for t in 0..coins.len() {
        if machine.is_halting(&cur) {
            break;
        }
        match step(machine, input, &cur, coins.get(t)) {
            Ok(next) => cur = next,
            Err(_) => break,
        }
    }
    cur
}

/// Per-configuration counts of seeds whose PRG_i-driven walk ends at acc_τ
/// (`.0`) or rej_τ (`.1`) within i steps.
fn seed_visit_counts(
    machine: &MachineSpec,
    input: &Bits,
    tau: Bits,
    prg: &PrgSpec,
    i: usize,
    budget: u128,
) -> Result<(Vec<Configuration>, Vec<u64>, Vec<u64>), OracleError> {
    check_budget(machine, input, budget)?;
    let vertices: Vec<Configuration> = machine.live_configurations(input.len()).collect();
    let acc = machine.canonical_halt(HaltKind::Accept, tau);
    let rej = machine.canonical_halt(HaltKind::Reject, tau);
    let mut acc_counts = vec![0u64; vertices.len()];
    let mut rej_counts = vec![0u64; vertices.len()];
    for seed in 0..(1u32 << prg.m) {
        let y = prg_eval(prg, i, seed)?;
        for (k, v) in vertices.iter().enumerate() {
            let end = truncated_run(machine, input, v, y);
            if end == acc {
                acc_counts[k] += 1;
            } else if end == rej {
                rej_counts[k] += 1;
            }
        }
    }
    Ok((vertices, acc_counts, rej_counts))
}

/// V_i: configurations visited at layer i by the walk tree of acc_τ or
/// rej_τ for at least one seed.
pub fn compute_vi(
    machine: &MachineSpec,
    input: &Bits,
    tau: Bits,
    prg: &PrgSpec,
    i: usize,
    budget: u128,
) -> Result<BTreeSet<Configuration>, OracleError> {
    let (vertices, acc, rej) = seed_visit_counts(machine, input, tau, prg, i, budget)?;
    Ok(vertices
        .into_iter()
        .zip(acc.iter().zip(rej.iter()))
        .filter(|(_, (a, r))| **a + **r > 0)
        .map(|(v, _)| v)
        .collect())
}

/// S_i: configurations visited by at least a `threshold` fraction of seeds.
pub fn compute_si(
    machine: &MachineSpec,
    input: &Bits,
    tau: Bits,
    prg: &PrgSpec,
    i: usize,
    threshold: &BigRational,
    budget: u128,
) -> Result<BTreeSet<Configuration>, OracleError> {
    let (vertices, acc, rej) = seed_visit_counts(machine, input, tau, prg, i, budget)?;
    let total = pow2(prg.m);
    Ok(vertices
        .into_iter()
        .enumerate()
        .filter(|(k, _)| {
            let seen = rat((acc[*k] + rej[*k]) as i64, 1);
            seen >= threshold * &total
        })
        .map(|(_, v)| v)
        .collect())
}

/// Seeds whose PRG_i-driven walk from `node` reaches the given τ-halt.
pub fn compute_a(
    machine: &MachineSpec,
    input: &Bits,
    tau: Bits,
    prg: &PrgSpec,
    i: usize,
    node: &Configuration,
    kind: HaltKind,
) -> Result<SeedSet, OracleError> {
    let target = machine.canonical_halt(kind, tau);
    let mut set = SeedSet::empty(prg.m);
    for seed in 0..(1u32 << prg.m) {
        let y = prg_eval(prg, i, seed)?;
        if truncated_run(machine, input, node, y) == target {
            set.insert(seed);
        }
    }
    Ok(set)
}

/// Maximum deviation at layer i between a configuration's true i-step reach
/// probability and the fraction of seeds whose walk realizes it, for acc
/// and rej separately.
pub fn prg_error_gamma(
    machine: &MachineSpec,
    input: &Bits,
    tau: Bits,
    prg: &PrgSpec,
    i: usize,
    budget: u128,
) -> Result<(BigRational, BigRational), OracleError> {
    let (vertices, acc_counts, rej_counts) =
        seed_visit_counts(machine, input, tau, prg, i, budget)?;
    let total = pow2(prg.m);
    if i == 0 {
        return Ok((BigRational::zero(), BigRational::zero()));
    }
    let table = reach_probabilities(machine, input, tau, i, budget)?;
    let mut gamma_acc = BigRational::zero();
    let mut gamma_rej = BigRational::zero();
    for (k, v) in vertices.iter().enumerate() {
        let row = table.row(v, i)?;
        let frac_acc = rat(acc_counts[k] as i64, 1) / &total;
        let frac_rej = rat(rej_counts[k] as i64, 1) / &total;
        let da = if row[0] >= frac_acc { &row[0] - &frac_acc } else { &frac_acc - &row[0] };
        let dr = if row[1] >= frac_rej { &row[1] - &frac_rej } else { &frac_rej - &row[1] };
        gamma_acc = gamma_acc.max(da);
        gamma_rej = gamma_rej.max(dr);
    }
    Ok((gamma_acc, gamma_rej))
}

/// Fractions of seeds whose PRG_l-driven walk from start_τ ends at acc_τ /
/// rej_τ.
pub fn estimate_fractions(
    machine: &MachineSpec,
    input: &Bits,
    tau: Bits,
    prg: &PrgSpec,
    l: usize,
) -> Result<(BigRational, BigRational), OracleError> {
    let start = machine.start_configuration(tau);
    let acc = machine.canonical_halt(HaltKind::Accept, tau);
    let rej = machine.canonical_halt(HaltKind::Reject, tau);
    let total = pow2(prg.m);
    let (mut n_acc, mut n_rej) = (0i64, 0i64);
    for seed in 0..(1u32 << prg.m) {
        let y = prg_eval(prg, l, seed)?;
        let end = truncated_run(machine, input, &start, y);
        if end == acc {
            n_acc += 1;
        } else if end == rej {
            n_rej += 1;
        }
    }
    Ok((rat(n_acc, 1) / &total, rat(n_rej, 1) / &total))
}

/// How the random-walk decider evaluates its probability.
#[derive(Debug, Clone, Copy)]
pub enum WalkMode {
    /// Exact DP averaged over all τ.
    Exact,
    /// Monte-Carlo with a seeded generator.
    Sample { trials: u64, seed: u64 },
}

/// Probability (over uniform τ and coins) that a bounded walk from start_τ
/// halts at acc_τ. The walk length is `t_const · length`.
pub fn random_walk_decider(
    machine: &MachineSpec,
    input: &Bits,
    t_const: u64,
    length: u64,
    mode: WalkMode,
    budget: u128,
    par: Parallelism,
) -> Result<BigRational, OracleError> {
    let walk_len = t_const.saturating_mul(length).max(1) as usize;
    let c = machine.c;
    match mode {
        WalkMode::Exact => {
            let probs = par.map_range(1usize << c, |t| {
                let tau = Bits::from_int(t as u128, c);
                let table = reach_probabilities(machine, input, tau, walk_len, budget)?;
                let row = table.row(&machine.start_configuration(tau), walk_len)?;
                Ok::<BigRational, OracleError>(row[0].clone())
            });
            let mut total = BigRational::zero();
            for p in probs {
                total += p?;
            }
            Ok(total / pow2(c as u32))
        }
        WalkMode::Sample { trials, seed } => {
            let mut rng = SplitMix64::new(seed);
            let mut hits = 0i64;
            for _ in 0..trials {
                let tau = Bits::from_int(rng.next_u64() as u128 & ((1u128 << c) - 1), c);
                let acc = machine.canonical_halt(HaltKind::Accept, tau);
                let mut cur = machine.start_configuration(tau);
                let mut word = rng.next_u64();
                let mut avail = 64u32;
                for _ in 0..walk_len {
                    if machine.is_halting(&cur) {
                        break;
                    }
                    if avail == 0 {
                        word = rng.next_u64();
                        avail = 64;
                    }
                    let coin = (word >> 63) as u8;
                    word <<= 1;
                    avail -= 1;
                    match step(machine, input, &cur, coin) {
                        Ok(next) => cur = next,
                        Err(_) => break,
                    }
                }
                if cur == acc {
                    hits += 1;
                }
            }
            Ok(rat(hits, 1) / rat(trials as i64, 1))
        }
    }
}

/// Reachable-from-start vertex count per τ (used to cross-check τ^β-graph
/// sizes for lossless machines).
pub fn reachable_size(
    machine: &MachineSpec,
    input: &Bits,
    tau: Bits,
    budget: u128,
) -> Result<usize, OracleError> {
    check_budget(machine, input, budget)?;
    let start = machine.start_configuration(tau);
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for (_, t) in successors_lenient(machine, input, &v) {
            if seen.insert(t) {
                queue.push_back(t);
            }
        }
    }
    Ok(seen.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashprg::HashFn;
    use crate::machine::{Move, Transition};
    use crate::machines;

    const BUDGET: u128 = 1 << 22;

    fn input0() -> Bits {
        Bits::parse_binary("0").unwrap()
    }

    /// Lossless fair coin: coin 1 → accept, coin 0 → reject, tape intact.
    fn fair_acc() -> MachineSpec {
        let mut m = MachineSpec::new(
            vec!["F".into(), "ACC".into(), "REJ".into()],
            "F",
            "ACC",
            "REJ",
            None,
            3,
            1,
            true,
        )
        .unwrap();
        for i in 0..2 {
            for w in 0..2 {
                for cb in 0..2 {
                    for (coin, next) in [(0u8, 2u16), (1, 1)] {
                        m.add_row(
                            0,
                            i,
                            w,
                            cb,
                            Some(coin),
                            Transition {
                                next,
                                write_work: w,
                                write_cat: cb,
                                mv_input: Move::S,
                                mv_work: Move::S,
                                mv_cat: Move::S,
                            },
                        )
                        .unwrap();
                    }
                }
            }
        }
        m
    }

    #[test]
    fn reach_table_basics() {
        let m = machines::one_step();
        let input = input0();
        for t in 0..4u128 {
            let tau = Bits::from_int(t, 2);
            let table = reach_probabilities(&m, &input, tau, 3, BUDGET).unwrap();
            let start = m.start_configuration(tau);
            // Level 0: not yet halted.
            assert_eq!(table.row(&start, 0).unwrap()[0], rat(0, 1));
            // Level ≥ 1: accepts with τ intact, with certainty.
            for level in 1..=3 {
                assert_eq!(table.row(&start, level).unwrap()[0], rat(1, 1));
            }
            // Halt rows are level-independent indicators.
            let acc = m.canonical_halt(HaltKind::Accept, tau);
            for level in 0..=3 {
                let row = table.row(&acc, level).unwrap();
                assert_eq!((row[0].clone(), row[1].clone(), row[2].clone()),
                           (rat(1, 1), rat(0, 1), rat(0, 1)));
            }
            assert_eq!(table.fixpoint_at, Some(2));
        }
    }

    #[test]
    fn coinflip_reach_splits_mass() {
        let m = machines::coinflip();
        let input = input0();
        let tau = Bits::parse_binary("10").unwrap();
        let table = reach_probabilities(&m, &input, tau, 2, BUDGET).unwrap();
        let start = m.start_configuration(tau);
        let row = table.row(&start, 2).unwrap();
        // coin 0 rejects with τ intact; coin 1 accepts with a flipped bit.
        assert_eq!(row[0], rat(0, 1));
        assert_eq!(row[1], rat(1, 2));
        assert_eq!(row[2], rat(1, 2));
        assert_eq!(table.tau_reach(&start, 2).unwrap(), rat(1, 2));
    }

    #[test]
    fn reach_rows_are_monotone_and_bounded() {
        let m = machines::bpeps();
        let input = Bits::parse_binary("1").unwrap();
        let tau = Bits::zeros(2);
        let table = reach_probabilities(&m, &input, tau, 6, BUDGET).unwrap();
        for v in table.vertices() {
            let mut prev_sum = rat(0, 1);
            for level in 0..=6 {
                let row = table.row(v, level).unwrap();
                let sum = &row[0] + &row[1] + &row[2];
                assert!(sum <= rat(1, 1));
                assert!(sum >= prev_sum, "mass shrank at level {level}");
                prev_sum = sum;
            }
        }
    }

    #[test]
    fn lossless_chain_reaches_fixpoint() {
        let m = machines::longchain();
        let input = input0();
        let tau = Bits::ones(1);
        let table = reach_probabilities(&m, &input, tau, 40, BUDGET).unwrap();
        assert!(table.fixpoint_at.is_some());
        assert!(table.fixpoint_at.unwrap() <= 20);
        assert_eq!(
            table.tau_reach(&m.start_configuration(tau), 40).unwrap(),
            rat(1, 1)
        );
    }

    #[test]
    fn tau_beta_membership_thresholds() {
        let m = machines::coinflip();
        let input = input0();
        let tau = Bits::parse_binary("01").unwrap();
        let start = m.start_configuration(tau);
        let at = |beta: BigRational| {
            tau_beta_nodes(&m, &input, tau, &beta, 4, BUDGET).unwrap()
        };
        assert!(!at(rat(3, 4)).contains(&start));
        assert!(at(rat(1, 2)).contains(&start));
        // The lossless chain keeps every reachable configuration a 1-node.
        let chain = machines::longchain();
        let nodes = tau_beta_nodes(&chain, &input, Bits::zeros(1), &rat(1, 1), 40, BUDGET).unwrap();
        let start = chain.start_configuration(Bits::zeros(1));
        let mut cur = start;
        loop {
            assert!(nodes.contains(&cur), "chain config dropped");
            if chain.is_halting(&cur) {
                break;
            }
            cur = step(&chain, &input, &cur, 0).unwrap();
        }
    }

    #[test]
    fn tau_beta_graph_shapes() {
        let input = input0();
        // Lossless chain: graph = the reachable graph, no ⊥ anywhere.
        let chain = machines::longchain();
        let tau = Bits::zeros(1);
        let g = tau_beta_graph(&chain, &input, tau, &rat(1, 1), 40, BUDGET).unwrap();
        assert_eq!(g.nodes.len(), reachable_size(&chain, &input, tau, BUDGET).unwrap());
        for edges in g.edges.iter().flatten() {
            for t in edges {
                assert!(matches!(t, TbTarget::Node(_)), "lossless graph has ⊥");
            }
        }
        assert_eq!(exit_probability(&chain, &g).unwrap(), rat(0, 1));
        assert!(g.contains_halt(&chain, HaltKind::Accept));

        // Coin flipper at β=3/4: start is excluded → empty graph.
        let flip = machines::coinflip();
        let tau2 = Bits::parse_binary("11").unwrap();
        let empty = tau_beta_graph(&flip, &input, tau2, &rat(3, 4), 4, BUDGET).unwrap();
        assert!(empty.is_empty());
        assert!(matches!(exit_probability(&flip, &empty), Err(OracleError::EmptyGraph)));

        // At β=1/4 the flipped-accept branch is rerouted to ⊥: exit = 1/2,
        // within δ/(1−β) = (1/2)/(3/4) = 2/3.
        let g2 = tau_beta_graph(&flip, &input, tau2, &rat(1, 4), 4, BUDGET).unwrap();
        assert!(!g2.is_empty());
        assert!(g2.contains_halt(&flip, HaltKind::Reject));
        let exit = exit_probability(&flip, &g2).unwrap();
        assert_eq!(exit, rat(1, 2));
        assert!(exit <= rat(2, 3));
        // No foreign-τ halts in the graph.
        for v in &g2.nodes {
            if flip.is_halting(v) {
                assert_eq!(v.cat, tau2);
            }
        }
    }

    #[test]
    fn multiplicity_bounds() {
        let input = input0();
        // β=1: any configuration qualifies for at most one τ.
        let m = machines::one_step();
        let counts = tau_multiplicity(&m, &input, &rat(1, 1), 4, BUDGET, Parallelism::Sequential)
            .unwrap();
        assert!(counts.values().all(|&k| k <= 1));

        // β=1/2 on the coin flipper: never more than 2 = floor(1/β).
        let flip = machines::coinflip();
        let counts = tau_multiplicity(&flip, &input, &rat(1, 2), 4, BUDGET, Parallelism::Sequential)
            .unwrap();
        assert!(counts.values().all(|&k| k <= 2));

        // Lossless chain at β=3/4: every configuration on a start's walk is
        // a node for exactly one τ.
        let chain = machines::longchain();
        let counts = tau_multiplicity(&chain, &input, &rat(3, 4), 40, BUDGET, Parallelism::Sequential)
            .unwrap();
        for t in 0..2u128 {
            let tau = Bits::from_int(t, 1);
            let mut cur = chain.start_configuration(tau);
            loop {
                assert_eq!(counts.get(&cur), Some(&1), "multiplicity ≠ 1 on walk");
                if chain.is_halting(&cur) {
                    break;
                }
                cur = step(&chain, &input, &cur, 0).unwrap();
            }
        }
    }

    #[test]
    fn average_graph_size_lossless() {
        let input = input0();
        let chain = machines::longchain();
        let avg = avg_tau_beta_size(&chain, &input, &rat(1, 1), 40, BUDGET, Parallelism::Sequential)
            .unwrap();
        assert_eq!(avg, rat(17, 1)); // 16 chain states + the halt, per τ
        // Intermediate bound s²·2^{3s}/β.
        let s = chain.s as i64;
        let bound = rat(s * s, 1) * pow2(3 * chain.s as u32) / rat(1, 1);
        assert!(avg <= bound);
    }

    #[test]
    fn vi_si_shapes() {
        let m = machines::coinflip();
        let input = input0();
        let tau = Bits::parse_binary("01").unwrap();
        let prg = PrgSpec::new(3, vec![HashFn::new(3, 3, 1), HashFn::new(3, 5, 2), HashFn::new(3, 1, 6)]);
        // V_0 is exactly the two halts (both exist as live configs).
        let v0 = compute_vi(&m, &input, tau, &prg, 0, BUDGET).unwrap();
        let acc = m.canonical_halt(HaltKind::Accept, tau);
        let rej = m.canonical_halt(HaltKind::Reject, tau);
        assert_eq!(v0, BTreeSet::from([acc, rej]));
        for i in 0..=3usize {
            let vi = compute_vi(&m, &input, tau, &prg, i, BUDGET).unwrap();
            let si = compute_si(&m, &input, tau, &prg, i, &rat(1, 8), BUDGET).unwrap();
            assert!(si.is_subset(&vi), "S_{i} ⊄ V_{i}");
        }
    }

    #[test]
    fn vi_matches_ancestry_for_deterministic_machine() {
        // Identity hashes on a deterministic machine: V_i is exactly the set
        // of configurations within i steps of either halt, per explicit BFS.
        let m = machines::longchain();
        let input = input0();
        let tau = Bits::zeros(1);
        let prg = PrgSpec::new(3, vec![HashFn::new(3, 1, 0); 4]);
        let g = crate::confgraph::build_explicit_graph(&m, &input, BUDGET).unwrap();
        for i in 0..=4usize {
            let vi = compute_vi(&m, &input, tau, &prg, i, BUDGET).unwrap();
            // Explicit: BFS up i levels from the τ halts.
            let mut expect = BTreeSet::new();
            for kind in [HaltKind::Accept, HaltKind::Reject] {
                let halt = m.canonical_halt(kind, tau);
                let Some(h) = g.index_of(&halt) else { continue };
                let mut frontier = vec![h];
                expect.insert(halt);
                for _ in 0..i {
                    let mut next = Vec::new();
                    for &v in &frontier {
                        for &(_, u) in &g.incoming[v] {
                            next.push(u);
                        }
                        // halts absorb: they stay within range
                        if m.is_halting(&g.vertices[v]) {
                            next.push(v);
                        }
                    }
                    next.sort_unstable();
                    next.dedup();
                    for &u in &next {
                        expect.insert(g.vertices[u]);
                    }
                    frontier = next;
                }
            }
            assert_eq!(vi, expect, "layer {i}");
        }
    }

    #[test]
    fn gamma_zero_cases() {
        let input = input0();
        // Level 0 is always exact.
        let m = machines::coinflip();
        let prg = PrgSpec::new(3, vec![HashFn::new(3, 2, 7); 3]);
        let g0 = prg_error_gamma(&m, &input, Bits::zeros(2), &prg, 0, BUDGET).unwrap();
        assert_eq!(g0, (rat(0, 1), rat(0, 1)));
        // Deterministic machines ignore the coins: fraction equals
        // probability at every node, so γ vanishes at every layer.
        let chain = machines::longchain();
        let prg2 = PrgSpec::new(3, vec![HashFn::new(3, 6, 3), HashFn::new(3, 2, 0), HashFn::new(3, 7, 5), HashFn::new(3, 1, 1)]);
        for i in 0..=4usize {
            let (ga, gr) = prg_error_gamma(&chain, &input, Bits::ones(1), &prg2, i, BUDGET).unwrap();
            assert_eq!(ga, rat(0, 1), "layer {i}");
            assert_eq!(gr, rat(0, 1), "layer {i}");
        }
    }

    #[test]
    fn fraction_estimates() {
        let input = input0();
        // The chain never rejects; with l ≥ its walk length every seed's
        // walk reaches the accept halt.
        let chain = machines::longchain();
        let prg = PrgSpec::new(3, vec![HashFn::new(3, 1, 0); 16]);
        let (fa, fr) = estimate_fractions(&chain, &input, Bits::zeros(1), &prg, 16).unwrap();
        assert_eq!(fa, rat(1, 1));
        assert_eq!(fr, rat(0, 1));
        // Short walks reach nothing.
        let (fa, fr) = estimate_fractions(&chain, &input, Bits::zeros(1), &prg, 3).unwrap();
        assert_eq!(fa + fr, rat(0, 1));
        // Disjointness on the fair coin machine: halves split exactly.
        let fair = fair_acc();
        let prg1 = PrgSpec::new(3, vec![HashFn::new(3, 1, 0)]);
        let (fa, fr) = estimate_fractions(&fair, &input, Bits::zeros(1), &prg1, 1).unwrap();
        assert_eq!(fa, rat(1, 2));
        assert_eq!(fr, rat(1, 2));
    }

    #[test]
    fn walk_decider_probabilities() {
        let input = input0();
        // Always-accepting one-step machine → 1.
        let m = machines::one_step();
        let p = random_walk_decider(&m, &input, 1, 2, WalkMode::Exact, BUDGET, Parallelism::Sequential)
            .unwrap();
        assert_eq!(p, rat(1, 1));
        // Accept iff the first coin is 1, losslessly → exactly 1/2.
        let fair = fair_acc();
        let p = random_walk_decider(&fair, &input, 1, 4, WalkMode::Exact, BUDGET, Parallelism::Sequential)
            .unwrap();
        assert_eq!(p, rat(1, 2));
        // The flipping accepter never halts on its own τ.
        let flip = machines::coinflip();
        let p = random_walk_decider(&flip, &input, 1, 4, WalkMode::Exact, BUDGET, Parallelism::Sequential)
            .unwrap();
        assert_eq!(p, rat(0, 1));
        // Sampling mode lands near the exact value with a fixed seed.
        let sampled = random_walk_decider(
            &fair,
            &input,
            1,
            4,
            WalkMode::Sample { trials: 400, seed: 7 },
            BUDGET,
            Parallelism::Sequential,
        )
        .unwrap();
        assert!(sampled >= rat(1, 4) && sampled <= rat(3, 4), "sampled {sampled}");
    }

    #[test]
    fn csv_export_shape() {
        let m = machines::one_step();
        let input = input0();
        let table = reach_probabilities(&m, &input, Bits::zeros(2), 2, BUDGET).unwrap();
        let csv = table.to_csv(&m, input.len());
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "conf\tlevel\tacc\trej\tother");
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len() % table.vertices().len(), 0);
        assert!(rows.iter().all(|r| r.split('\t').count() == 5));
    }

    #[test]
    fn budget_propagates() {
        let m = machines::one_step();
        let input = input0();
        assert!(matches!(
            reach_probabilities(&m, &input, Bits::zeros(2), 2, 5),
            Err(OracleError::BudgetExceeded { .. })
        ));
    }
}
