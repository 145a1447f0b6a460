//! The structured-tape engine: four reversible compression schemes with tag
//! dispatch, the layer-indexing subroutines behind them, the
//! compress-or-decide driver, and the decision procedures built on top.
//!
//! # Compressed-record layout
//!
//! Every record starts with a 2-bit tag at tar offset 0 and ends with at
//! least one freed (zero) trailing bit. Field widths derive from ceil-log of
//! the configured ranges: `w_l = width_for(l+1)` for level/layer fields,
//! `b_u` = serialized-configuration width minus c for the machine part, and
//! the index widths named below. With `r` the record width, the two
//! layer-set schemes consume a prefix of `K = max(prefix, r + 1)` tar bits —
//! the indexed prefix plus a spill region `tar[prefix..K)` that must be zero
//! for the scheme to apply (checked; the driver falls through when it is
//! not) — and relocate the untouched tail `tar[K..3m)` right behind the
//! record, so `K − r ≥ 1` trailing bits are freed:
//!
//! | tag  | record (left to right)                | consumed        | freed      |
//! |------|---------------------------------------|-----------------|------------|
//! | `00` | `00 q(m) u(b_u) k(w_l) i(w_l)`        | all 3m bits     | `3m − r`   |
//! | `01` | `01 idx(b_idx) i(w_l) u(b_u)`         | `K`, prefix w_T | `K − r`    |
//! | `10` | tar head `10 i(w_l)`; hash slot holds `idx(b_bad) ∘ old-head(2+w_l) ∘ old-tail(t_w)` | hash slot + tar ends | `t_w` |
//! | `11` | `11 idx(2) u(b_u)`                    | `K`, prefix w_P | `K − r`    |
//!
//! where `w_T = log2(T)`, `w_P = log2(min layer-set size)`, `b_idx =
//! width_for(floor(1/threshold))`, `t_w` the configured bad-hash tail width,
//! and `b_bad = 2m − (2 + w_l) − t_w`. Tag `00` spends the whole tar (its
//! value is the timestamp); tag `10` leaves τ untouched and moves the
//! displaced tar head and tail into the freed hash slot.
//!
//! Every compressor re-runs its own decompressor before returning and
//! refuses loudly if the round trip is not exact — in particular when the
//! τ→π rewrite would destabilize the seed classes the record indexes into.

use std::collections::{BTreeMap, HashMap};

use num::{BigRational, One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::bits::{width_for, Bits};
use crate::confgraph::{
    build_explicit_graph, count_size, next_step, step_back, y_dfs_next, y_dfs_size, y_level_bit,
    ExplicitGraph, GraphError, LayeredNode, SizeCheck,
};
use crate::hashprg::{
    aggregate_bad_bound, compute_b, full_family, is_good, prg_eval, GoodContext, HashError,
    HashFn, PrgSpec, SeedSet,
};
use crate::machine::{
    predecessors, Configuration, HaltKind, MachineError, MachineSpec, SerializeContext,
};
use crate::oracle::{compute_a, estimate_fractions, truncated_run, OracleError};
use crate::params::{thresholds, Params, ParamsError};
use crate::simulator::{halt_distribution, SimError};
use crate::tape::{StructuredTape, TapeError};
use crate::{pow2, rat};

/// Vertex budget for materializing a configuration graph during layer scans.
pub const GRAPH_BUDGET: u128 = 1 << 22;

/// Step horizon for exact ground-truth distributions in the chunked decider.
const TRUTH_HORIZON: u64 = 1 << 16;

/// Widest catalytic tape the exhaustive-τ deciders will enumerate.
const MAX_ENUM_C: usize = 20;

/// Widest seed the bad-hash scheme will enumerate a full family for.
const MAX_FAMILY_M: u32 = 8;

#[derive(Debug, Error)]
pub enum CompressError {
    #[error("{scope} size {size} exceeds the configured bound {bound}")]
    SizeBoundViolated { scope: String, size: u128, bound: u128 },
    #[error("walk tree is not big: size {size} ≤ threshold {bound}")]
    PreconditionNotBig { size: u64, bound: u64 },
    #[error("frequently-hit layer set has {found} members, need at least {need}")]
    PreconditionSmallS { found: u64, need: u64 },
    #[error("the family has {bad} bad functions but the index field holds only {capacity}")]
    IndexOverflow { bad: u64, capacity: u64 },
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("record layout infeasible: {0}")]
    ParamsInfeasible(String),
    #[error("no valid compression record: {0}")]
    UnknownTag(String),
    #[error("all chunks returned don't-know in general mode")]
    AllChunksUndecidedInGeneralMode,
    #[error("this decider requires a deterministic machine")]
    NotDeterministic,
    #[error("internal consistency violated: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Hash(#[from] HashError),
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// A decisive-or-unknown answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject,
    DontKnow,
}

/// What one driver invocation did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DriverOutcome {
    Accept,
    Reject,
    DontKnow,
    Compressed(StructuredTape),
}

/// Which correctness regime the driver runs under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriverMode {
    /// May answer don't-know at the final layer.
    General,
    /// Poly-step machines or δ = 0: decides at the relaxed threshold and
    /// otherwise compresses against the always-reset layer set.
    PolytimeOrDelta0,
}

// ── field widths ────────────────────────────────────────────────────────────

/// Per-(machine, tape) field widths shared by all four record layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordLayout {
    pub m: u32,
    pub l: usize,
    pub c: usize,
    /// 3m, the full tar width.
    pub tar_w: usize,
    /// Serialized configuration width minus c: the machine part `u`.
    pub b_u: usize,
    /// Level / layer-count field width: `width_for(l + 1)`.
    pub w_l: usize,
}

impl RecordLayout {
    pub fn new(machine: &MachineSpec, n: usize, tape: &StructuredTape) -> Result<Self, CompressError> {
        if machine.c != tape.c() {
            return Err(CompressError::ParamsInfeasible(format!(
                "machine catalytic width {} differs from the tape's τ region {}",
                machine.c,
                tape.c()
            )));
        }
        let ctx = SerializeContext::new(machine, n);
        Ok(RecordLayout {
            m: tape.m(),
            l: tape.l(),
            c: tape.c(),
            tar_w: 3 * tape.m() as usize,
            b_u: ctx.width() - tape.c(),
            w_l: width_for(tape.l() + 1),
        })
    }

    /// Record width of the timestamp scheme: tag, seed, machine part, level,
    /// tree index.
    pub fn timestamp_width(&self) -> usize {
        2 + self.m as usize + self.b_u + 2 * self.w_l
    }

    /// Record width of a layer-set scheme with an idx field of `b_idx` bits;
    /// `with_level` adds the layer field (present for tag 01, absent for 11).
    pub fn index_width(&self, b_idx: usize, with_level: bool) -> usize {
        2 + b_idx + if with_level { self.w_l } else { 0 } + self.b_u
    }

    /// Consumed tar prefix of a layer-set scheme: the indexed prefix plus
    /// enough spill to free one bit past the record.
    pub fn consumed(&self, prefix_w: usize, record_w: usize) -> usize {
        prefix_w.max(record_w + 1)
    }
}

fn log2_exact(x: u64) -> Option<u32> {
    (x > 0 && x.is_power_of_two()).then(|| x.trailing_zeros())
}

/// floor(1/threshold) for a positive rational threshold.
fn floor_inverse(threshold: &BigRational) -> Result<u64, CompressError> {
    if *threshold <= BigRational::zero() {
        return Err(CompressError::ParamsInfeasible(
            "layer-set membership threshold must be positive".into(),
        ));
    }
    (BigRational::one() / threshold)
        .floor()
        .to_integer()
        .to_u64()
        .ok_or_else(|| CompressError::ParamsInfeasible("threshold reciprocal overflows".into()))
}

fn machine_part(ctx: &SerializeContext, conf: &Configuration, c: usize) -> Bits {
    let full = ctx.serialize(conf);
    full.slice(0, full.len() - c)
}

fn parse_machine_part(
    ctx: &SerializeContext,
    u: Bits,
    cat: Bits,
) -> Result<Configuration, CompressError> {
    ctx.parse(u.concat(cat))
        .map_err(|e| CompressError::UnknownTag(format!("machine part does not parse: {e}")))
}

fn is_all_zero(b: Bits) -> bool {
    b.count_ones() == 0
}

// ── layer scans ─────────────────────────────────────────────────────────────

/// Lexicographic witness of a layer vertex: the first (halt-kind bit, seed,
/// pre-order step count) whose walk tree contains it, with b = 0 the
/// reject-rooted tree and b = 1 the accept-rooted one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Witness {
    pub b: u8,
    pub seed: u32,
    pub steps: u64,
}

/// One layer-i vertex found by a scan.
#[derive(Debug, Clone)]
pub struct LayerMember {
    pub conf: Configuration,
    pub witness: Witness,
    /// Distinct seeds whose walk tree (either root) contains the vertex.
    pub seed_count: u64,
    /// Whether seed_count meets the scan's membership threshold.
    pub passes: bool,
}

/// Outcome of one exhaustive layer scan.
#[derive(Debug, Clone)]
pub struct LayerScan {
    pub i: usize,
    pub tree_bound: u64,
    /// First (b, seed) in lexicographic order whose tree exceeds the bound.
    pub oversize: Option<(u8, u32)>,
    /// Layer-i vertices in witness order (the canonical indexing order).
    pub members: Vec<LayerMember>,
}

impl LayerScan {
    /// Members passing the threshold, in witness order.
    pub fn passing(&self) -> impl Iterator<Item = &LayerMember> {
        self.members.iter().filter(|m| m.passes)
    }

    pub fn s_count(&self) -> u64 {
        self.members.iter().filter(|m| m.passes).count() as u64
    }

    pub fn v_count(&self) -> u64 {
        self.members.len() as u64
    }
}

struct CachedTree {
    nodes: Vec<LayeredNode>,
    exceeded: bool,
}

/// Pre-order of the y-tree rooted at `root`, stopping once the node count
/// exceeds `cap` (`exceeded` set). Child order matches the local walk:
/// in-neighbors under the level's y bit plus the halting self-descent,
/// sorted by serialization key.
fn bounded_preorder(
    graph: &ExplicitGraph,
    machine: &MachineSpec,
    root: usize,
    y: &Bits,
    cap: u64,
) -> Result<CachedTree, GraphError> {
    let mut nodes: Vec<LayeredNode> = Vec::new();
    let mut stack = vec![(root, 0usize)];
    let mut exceeded = false;
    while let Some((idx, level)) = stack.pop() {
        nodes.push(LayeredNode { conf: graph.vertices[idx], level });
        if nodes.len() as u64 > cap {
            exceeded = true;
            break;
        }
        if level + 1 > y.len() {
            continue;
        }
        let bit = y_level_bit(y, level + 1)?;
        let mut kids: Vec<usize> = graph.incoming[idx]
            .iter()
            .filter(|(label, _)| *label == bit)
            .map(|(_, j)| *j)
            .collect();
        if machine.is_halting(&graph.vertices[idx]) {
            kids.push(idx);
        }
        kids.sort_by_key(|&j| graph.keys[j]);
        kids.dedup();
        for &k in kids.iter().rev() {
            stack.push((k, level + 1));
        }
    }
    Ok(CachedTree { nodes, exceeded })
}

/// Reusable layer-scan context: the materialized configuration graph of one
/// (machine, input) pair. Building the graph dominates every scan, so sweeps
/// that drive many tapes through the same machine should build one scanner
/// and reuse it across calls.
pub struct LayerScanner<'a> {
    machine: &'a MachineSpec,
    input: &'a Bits,
    graph: ExplicitGraph,
}

impl<'a> LayerScanner<'a> {
    pub fn new(
        machine: &'a MachineSpec,
        input: &'a Bits,
        graph_budget: u128,
    ) -> Result<Self, CompressError> {
        let graph = build_explicit_graph(machine, input, graph_budget).map_err(|e| match e {
            GraphError::BudgetExceeded { size, budget } => CompressError::SizeBoundViolated {
                scope: "configuration graph".into(),
                size,
                bound: budget,
            },
            other => CompressError::Graph(other),
        })?;
        Ok(LayerScanner { machine, input, graph })
    }

    pub fn machine(&self) -> &MachineSpec {
        self.machine
    }

    pub fn input(&self) -> &Bits {
        self.input
    }

    /// Exhaustive enumeration of the layer-i vertices of the two halt-rooted
    /// walk-forests under PRG_i, with the (b, seed, steps) witness of each
    /// and its distinct-seed membership count. Per-distinct-y trees are
    /// cached; the witness order is the required lexicographic one because
    /// seeds are enumerated in ascending order under ascending b, and each
    /// tree is walked in pre-order.
    pub fn scan(
        &self,
        tau: Bits,
        prg: &PrgSpec,
        i: usize,
        threshold: &BigRational,
        tree_bound: u64,
    ) -> Result<LayerScan, CompressError> {
        let machine = self.machine;
        if i > prg.l() {
            return Err(CompressError::PreconditionFailed(format!(
                "layer {i} exceeds the chain length {}",
                prg.l()
            )));
        }
        let graph = &self.graph;
        let mut roots = [0usize; 2];
        for (b, kind) in [(0usize, HaltKind::Reject), (1usize, HaltKind::Accept)] {
            let halt = machine.canonical_halt(kind, tau);
            roots[b] = graph.index_of(&halt).ok_or_else(|| {
                CompressError::Inconsistent("canonical halt missing from graph".into())
            })?;
        }
        let seed_total = 1u32 << prg.m;
        let need = threshold * pow2(prg.m);
        let mut cache: HashMap<(u8, u128), CachedTree> = HashMap::new();
        let mut oversize: Option<(u8, u32)> = None;
        let mut index_of_conf: HashMap<Configuration, usize> = HashMap::new();
        let mut members: Vec<(Witness, Configuration, SeedSet)> = Vec::new();
        for b in 0..2u8 {
            for seed in 0..seed_total {
                let y = prg_eval(prg, i, seed)?;
                let key = (b, y.to_int());
                let tree = match cache.entry(key) {
                    std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                    std::collections::hash_map::Entry::Vacant(v) => v.insert(bounded_preorder(
                        graph,
                        machine,
                        roots[b as usize],
                        &y,
                        tree_bound,
                    )?),
                };
                if tree.exceeded && oversize.is_none() {
                    oversize = Some((b, seed));
                }
                for (t, node) in tree.nodes.iter().enumerate() {
                    if node.level != i {
                        continue;
                    }
                    let slot = *index_of_conf.entry(node.conf).or_insert_with(|| {
                        members.push((
                            Witness { b, seed, steps: t as u64 },
                            node.conf,
                            SeedSet::empty(prg.m),
                        ));
                        members.len() - 1
                    });
                    members[slot].2.insert(seed);
                }
            }
        }
        let members = members
            .into_iter()
            .map(|(witness, conf, seeds)| {
                let seed_count = seeds.len() as u64;
                let passes = rat(seed_count as i64, 1) >= need;
                LayerMember { conf, witness, seed_count, passes }
            })
            .collect();
        Ok(LayerScan { i, tree_bound, oversize, members })
    }

    fn scan_tape(
        &self,
        tape: &StructuredTape,
        i: usize,
        threshold: &BigRational,
        tree_bound: u64,
    ) -> Result<LayerScan, CompressError> {
        self.scan(tape.tau, &tape.prg(), i, threshold, tree_bound)
    }
}

/// One-shot layer scan: builds the configuration graph and discards it.
pub fn scan_layer(
    machine: &MachineSpec,
    input: &Bits,
    tau: Bits,
    prg: &PrgSpec,
    i: usize,
    threshold: &BigRational,
    tree_bound: u64,
    graph_budget: u128,
) -> Result<LayerScan, CompressError> {
    LayerScanner::new(machine, input, graph_budget)?.scan(tau, prg, i, threshold, tree_bound)
}

fn scan_for_tape(
    machine: &MachineSpec,
    input: &Bits,
    tape: &StructuredTape,
    i: usize,
    threshold: &BigRational,
    tree_bound: u64,
    graph_budget: u128,
) -> Result<LayerScan, CompressError> {
    scan_layer(machine, input, tape.tau, &tape.prg(), i, threshold, tree_bound, graph_budget)
}

fn require_small_trees(scan: &LayerScan) -> Result<(), CompressError> {
    if let Some((b, seed)) = scan.oversize {
        return Err(CompressError::SizeBoundViolated {
            scope: format!("walk tree (b={b}, seed={seed}, layer {})", scan.i),
            size: scan.tree_bound as u128 + 1,
            bound: scan.tree_bound as u128,
        });
    }
    Ok(())
}

/// |V_i|: distinct layer-i vertices of the two walk forests.
pub fn count_v(
    machine: &MachineSpec,
    input: &Bits,
    tape: &StructuredTape,
    i: usize,
    tree_bound: u64,
) -> Result<u64, CompressError> {
    let scan = scan_for_tape(machine, input, tape, i, &BigRational::zero(), tree_bound, GRAPH_BUDGET)?;
    require_small_trees(&scan)?;
    Ok(scan.v_count())
}

/// The j-th layer-i vertex in witness order, with its witness triple.
pub fn index_v(
    machine: &MachineSpec,
    input: &Bits,
    tape: &StructuredTape,
    i: usize,
    j: u64,
    tree_bound: u64,
) -> Result<(Witness, Configuration), CompressError> {
    let scan = scan_for_tape(machine, input, tape, i, &BigRational::zero(), tree_bound, GRAPH_BUDGET)?;
    require_small_trees(&scan)?;
    scan.members
        .get(j as usize)
        .map(|m| (m.witness, m.conf))
        .ok_or_else(|| {
            CompressError::PreconditionFailed(format!("index {j} ≥ |V_{i}| = {}", scan.v_count()))
        })
}

/// |S_i|: layer-i vertices hit by at least a `threshold` fraction of seeds.
pub fn count_s(
    machine: &MachineSpec,
    input: &Bits,
    tape: &StructuredTape,
    i: usize,
    threshold: &BigRational,
    tree_bound: u64,
) -> Result<u64, CompressError> {
    let scan = scan_for_tape(machine, input, tape, i, threshold, tree_bound, GRAPH_BUDGET)?;
    require_small_trees(&scan)?;
    Ok(scan.s_count())
}

/// The j-th threshold-passing layer-i vertex in witness order.
pub fn index_s(
    machine: &MachineSpec,
    input: &Bits,
    tape: &StructuredTape,
    i: usize,
    threshold: &BigRational,
    j: u64,
    tree_bound: u64,
) -> Result<(Witness, Configuration), CompressError> {
    let scan = scan_for_tape(machine, input, tape, i, threshold, tree_bound, GRAPH_BUDGET)?;
    require_small_trees(&scan)?;
    let found = scan.passing().nth(j as usize).map(|m| (m.witness, m.conf));
    found.ok_or_else(|| {
        CompressError::PreconditionFailed(format!("index {j} ≥ |S_{i}| = {}", scan.s_count()))
    })
}

// ── seed landing classes (TAU) ──────────────────────────────────────────────

/// One catalytic setting reached by walks from a member, with its seed count
/// and the first seed that reaches it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LandingClass {
    pub cat: Bits,
    pub seeds: u64,
    pub first_seed: u32,
}

/// Groups seeds by the halt setting their PRG_level walk from `from` lands
/// in (accept or reject halts only), ordered by first seed. A seed whose
/// walk ends anywhere else contributes to no class.
pub fn landing_classes(
    machine: &MachineSpec,
    input: &Bits,
    from: &Configuration,
    prg: &PrgSpec,
    level: usize,
) -> Result<Vec<LandingClass>, CompressError> {
    let mut by_cat: BTreeMap<Bits, (u64, u32)> = BTreeMap::new();
    for seed in 0..(1u32 << prg.m) {
        let y = prg_eval(prg, level, seed)?;
        let end = truncated_run(machine, input, from, y);
        if !machine.is_canonical_halt(&end) {
            continue;
        }
        match machine.halt_kind_of(end.state) {
            Some(HaltKind::Accept) | Some(HaltKind::Reject) => {
                let entry = by_cat.entry(end.cat).or_insert((0, seed));
                entry.0 += 1;
            }
            _ => {}
        }
    }
    let mut classes: Vec<LandingClass> = by_cat
        .into_iter()
        .map(|(cat, (seeds, first_seed))| LandingClass { cat, seeds, first_seed })
        .collect();
    classes.sort_by_key(|c| c.first_seed);
    Ok(classes)
}

/// The settings reached by at least a `threshold` fraction of seeds, in
/// first-seed order. Its size never exceeds floor(1/threshold).
pub fn tau_set(
    classes: &[LandingClass],
    threshold: &BigRational,
    m: u32,
) -> Result<Vec<Bits>, CompressError> {
    let need = threshold * pow2(m);
    let set: Vec<Bits> = classes
        .iter()
        .filter(|c| rat(c.seeds as i64, 1) >= need)
        .map(|c| c.cat)
        .collect();
    let cap = floor_inverse(threshold)?;
    if set.len() as u64 > cap {
        return Err(CompressError::Inconsistent(format!(
            "{} landing classes pass a threshold allowing at most {cap}",
            set.len()
        )));
    }
    Ok(set)
}

// ── tag 00: timestamp ───────────────────────────────────────────────────────

/// Which oversized tree the timestamp scheme walks into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimestampWitness {
    pub seed: u32,
    pub kind: HaltKind,
    pub i: usize,
}

/// Spends the whole tar as a step count into an oversized walk tree: walks
/// val(tar) pre-order steps from the τ-halt root, then records the landing
/// node instead of the count. Frees `3m − (2 + m + b_u + 2·w_l)` bits.
pub fn timestamp_compress(
    machine: &MachineSpec,
    input: &Bits,
    tape: &StructuredTape,
    witness: TimestampWitness,
    h_bound: u64,
) -> Result<StructuredTape, CompressError> {
    let layout = RecordLayout::new(machine, input.len(), tape)?;
    let record_w = layout.timestamp_width();
    if record_w + 1 > layout.tar_w {
        return Err(CompressError::ParamsInfeasible(format!(
            "timestamp record needs {record_w} bits + 1 freed but tar has {}",
            layout.tar_w
        )));
    }
    if !matches!(witness.kind, HaltKind::Accept | HaltKind::Reject) {
        return Err(CompressError::PreconditionFailed(
            "timestamp walks are rooted at accept/reject halts only".into(),
        ));
    }
    if witness.i > tape.l() {
        return Err(CompressError::PreconditionFailed(format!(
            "witness layer {} exceeds the chain length {}",
            witness.i,
            tape.l()
        )));
    }
    let prg = tape.prg();
    let y = prg_eval(&prg, witness.i, witness.seed)?;
    let root = LayeredNode { conf: machine.canonical_halt(witness.kind, tape.tau), level: 0 };
    match y_dfs_size(machine, input, &root, &y, h_bound)? {
        SizeCheck::AtMost(size) => {
            return Err(CompressError::PreconditionNotBig { size, bound: h_bound })
        }
        SizeCheck::Exceeds => {}
    }
    let val = tape.tar.to_int();
    let mut node = root;
    for _ in 0..val {
        node = y_dfs_next(machine, input, &node, &y)?;
        if node.level == 0 {
            return Err(CompressError::PreconditionFailed(format!(
                "timestamp value {val} exceeds the walked tree's capacity"
            )));
        }
    }
    let ctx = SerializeContext::new(machine, input.len());
    let record = Bits::from_int(0b00, 2)
        .concat(Bits::from_int(witness.seed as u128, layout.m as usize))
        .concat(machine_part(&ctx, &node.conf, layout.c))
        .concat(Bits::from_int(node.level as u128, layout.w_l))
        .concat(Bits::from_int(witness.i as u128, layout.w_l))
        .concat(Bits::zeros(layout.tar_w - record_w));
    let compressed =
        StructuredTape::new(layout.c, layout.m, layout.l, node.conf.cat, chain_of(tape), record)?;
    let back = timestamp_decompress(machine, input, &compressed)?;
    if back != *tape {
        return Err(CompressError::Inconsistent(
            "timestamp round-trip self-check failed".into(),
        ));
    }
    Ok(compressed)
}

/// Inverse of [`timestamp_compress`]: reverse-walks from the recorded node
/// to the tree's root, counting steps; the count is the original tar and the
/// root's setting the original τ.
pub fn timestamp_decompress(
    machine: &MachineSpec,
    input: &Bits,
    tape: &StructuredTape,
) -> Result<StructuredTape, CompressError> {
    let layout = RecordLayout::new(machine, input.len(), tape)?;
    let record_w = layout.timestamp_width();
    if record_w + 1 > layout.tar_w {
        return Err(CompressError::ParamsInfeasible(format!(
            "timestamp record needs {record_w} bits + 1 freed but tar has {}",
            layout.tar_w
        )));
    }
    let tar = tape.tar;
    if tar.slice(0, 2).to_int() != 0b00 {
        return Err(CompressError::UnknownTag("tag bits are not 00".into()));
    }
    let mut at = 2;
    let seed = tar.slice(at, layout.m as usize).to_int() as u32;
    at += layout.m as usize;
    let u = tar.slice(at, layout.b_u);
    at += layout.b_u;
    let k = tar.slice(at, layout.w_l).to_int() as usize;
    at += layout.w_l;
    let i = tar.slice(at, layout.w_l).to_int() as usize;
    at += layout.w_l;
    if !is_all_zero(tar.slice(at, layout.tar_w - at)) {
        return Err(CompressError::UnknownTag("timestamp padding is not zero".into()));
    }
    if i > tape.l() || k > i {
        return Err(CompressError::UnknownTag(format!(
            "timestamp fields out of range: level {k}, layer {i}, chain length {}",
            tape.l()
        )));
    }
    let ctx = SerializeContext::new(machine, input.len());
    let conf = parse_machine_part(&ctx, u, tape.tau)?;
    let prg = tape.prg();
    let y = prg_eval(&prg, i, seed)?;
    let mut node = LayeredNode { conf, level: k };
    let mut val: u128 = 0;
    let cap: u128 = 1 << layout.tar_w;
    while node.level != 0 {
        node = crate::confgraph::y_dfs_prev(machine, input, &node, &y)
            .map_err(|e| CompressError::UnknownTag(format!("reverse walk failed: {e}")))?;
        val += 1;
        if val >= cap {
            return Err(CompressError::UnknownTag(
                "reverse walk does not reach a root within the tar range".into(),
            ));
        }
    }
    if !machine.is_canonical_halt(&node.conf)
        || !matches!(
            machine.halt_kind_of(node.conf.state),
            Some(HaltKind::Accept) | Some(HaltKind::Reject)
        )
    {
        return Err(CompressError::UnknownTag(
            "reverse walk ends at a non-halt root".into(),
        ));
    }
    StructuredTape::new(
        layout.c,
        layout.m,
        layout.l,
        node.conf.cat,
        chain_of(tape),
        Bits::from_int(val, layout.tar_w),
    )
    .map_err(CompressError::Tape)
}

fn chain_of(tape: &StructuredTape) -> Vec<HashFn> {
    (1..=tape.l()).map(|j| *tape.hash(j)).collect()
}

// ── tags 01 and 11: layer-set index ─────────────────────────────────────────

struct IndexScheme {
    tag: u8,
    /// Layer the members live at.
    level: usize,
    /// Whether the record carries the layer field (tag 01 yes, tag 11 no).
    with_level: bool,
    threshold: BigRational,
    min_members: u64,
    prefix_w: usize,
    b_idx: usize,
    tree_bound: u64,
}

impl IndexScheme {
    fn si(machine: &MachineSpec, params: &Params, i: usize) -> Result<Self, CompressError> {
        let _ = machine;
        let prefix_w = log2_exact(params.t_bound).ok_or_else(|| {
            CompressError::ParamsInfeasible(format!(
                "lower threshold T = {} must be a power of two (it is a tar-prefix width)",
                params.t_bound
            ))
        })? as usize;
        let b_idx = width_for(floor_inverse(&params.s_threshold)? as usize);
        Ok(IndexScheme {
            tag: 0b01,
            level: i,
            with_level: true,
            threshold: params.s_threshold.clone(),
            min_members: params.t_bound,
            prefix_w,
            b_idx,
            tree_bound: params.h_bound,
        })
    }

    fn slprime(machine: &MachineSpec, params: &Params, l: usize) -> Result<Self, CompressError> {
        let prefix_w = log2_exact(params.slprime_min).ok_or_else(|| {
            CompressError::ParamsInfeasible(format!(
                "always-reset layer-set minimum {} must be a power of two",
                params.slprime_min
            ))
        })? as usize;
        if floor_inverse(&params.slprime_threshold)? > 4 {
            return Err(CompressError::ParamsInfeasible(
                "the always-reset scheme fixes a 2-bit idx, so its threshold must be ≥ 1/4".into(),
            ));
        }
        let degree = if machine.is_deterministic() { 1 } else { 2 };
        Ok(IndexScheme {
            tag: 0b11,
            level: l,
            with_level: false,
            threshold: params.slprime_threshold.clone(),
            min_members: params.slprime_min,
            prefix_w,
            b_idx: 2,
            tree_bound: degree * params.h_bound,
        })
    }
}

fn index_compress_engine(
    machine: &MachineSpec,
    input: &Bits,
    tape: &StructuredTape,
    scheme: &IndexScheme,
) -> Result<StructuredTape, CompressError> {
    let layout = RecordLayout::new(machine, input.len(), tape)?;
    let record_w = layout.index_width(scheme.b_idx, scheme.with_level);
    let consumed = layout.consumed(scheme.prefix_w, record_w);
    if consumed > layout.tar_w {
        return Err(CompressError::ParamsInfeasible(format!(
            "record of {record_w} bits + freed bit needs {consumed} tar bits, tar has {}",
            layout.tar_w
        )));
    }
    let scan = scan_for_tape(
        machine,
        input,
        tape,
        scheme.level,
        &scheme.threshold,
        scheme.tree_bound,
        GRAPH_BUDGET,
    )?;
    require_small_trees(&scan)?;
    let passing: Vec<&LayerMember> = scan.passing().collect();
    if (passing.len() as u64) < scheme.min_members {
        return Err(CompressError::PreconditionSmallS {
            found: passing.len() as u64,
            need: scheme.min_members,
        });
    }
    let val = tape.tar.slice(0, scheme.prefix_w).to_int() as usize;
    if val >= passing.len() {
        return Err(CompressError::Inconsistent(format!(
            "prefix value {val} indexes past the layer set of {}",
            passing.len()
        )));
    }
    let spill = tape.tar.slice(scheme.prefix_w, consumed - scheme.prefix_w);
    if !is_all_zero(spill) {
        return Err(CompressError::PreconditionFailed(format!(
            "spill region tar[{}..{}) must be zero for this record layout",
            scheme.prefix_w, consumed
        )));
    }
    let member = passing[val].conf;
    let prg = tape.prg();
    let classes = landing_classes(machine, input, &member, &prg, scheme.level)?;
    let tau_list = tau_set(&classes, &scheme.threshold, layout.m)?;
    let idx = tau_list.iter().position(|t| *t == tape.tau).ok_or_else(|| {
        CompressError::Inconsistent(
            "the current τ is not among the member's frequent landing settings".into(),
        )
    })?;
    if idx >= 1usize << scheme.b_idx {
        return Err(CompressError::Inconsistent(format!(
            "landing-class index {idx} does not fit {} bits",
            scheme.b_idx
        )));
    }
    let ctx = SerializeContext::new(machine, input.len());
    let mut record = Bits::from_int(scheme.tag as u128, 2)
        .concat(Bits::from_int(idx as u128, scheme.b_idx));
    if scheme.with_level {
        record = record.concat(Bits::from_int(scheme.level as u128, layout.w_l));
    }
    record = record.concat(machine_part(&ctx, &member, layout.c));
    debug_assert_eq!(record.len(), record_w);
    let new_tar = record
        .concat(tape.tar.slice(consumed, layout.tar_w - consumed))
        .concat(Bits::zeros(consumed - record_w));
    let compressed =
        StructuredTape::new(layout.c, layout.m, layout.l, member.cat, chain_of(tape), new_tar)?;
    let back = index_decompress_engine(machine, input, &compressed, scheme)?;
    if back != *tape {
        return Err(CompressError::PreconditionFailed(
            "the τ→π rewrite destabilizes the seed landing classes; refusing to compress".into(),
        ));
    }
    Ok(compressed)
}

fn index_decompress_engine(
    machine: &MachineSpec,
    input: &Bits,
    tape: &StructuredTape,
    scheme: &IndexScheme,
) -> Result<StructuredTape, CompressError> {
    let layout = RecordLayout::new(machine, input.len(), tape)?;
    let record_w = layout.index_width(scheme.b_idx, scheme.with_level);
    let consumed = layout.consumed(scheme.prefix_w, record_w);
    if consumed > layout.tar_w {
        return Err(CompressError::ParamsInfeasible(format!(
            "record of {record_w} bits + freed bit needs {consumed} tar bits, tar has {}",
            layout.tar_w
        )));
    }
    let tar = tape.tar;
    if tar.slice(0, 2).to_int() != scheme.tag as u128 {
        return Err(CompressError::UnknownTag(format!(
            "tag bits are not {:02b}",
            scheme.tag
        )));
    }
    let mut at = 2;
    let idx = tar.slice(at, scheme.b_idx).to_int() as usize;
    at += scheme.b_idx;
    let level = if scheme.with_level {
        let lv = tar.slice(at, layout.w_l).to_int() as usize;
        at += layout.w_l;
        lv
    } else {
        scheme.level
    };
    if level > tape.l() {
        return Err(CompressError::UnknownTag(format!(
            "layer field {level} exceeds the chain length {}",
            tape.l()
        )));
    }
    let u = tar.slice(at, layout.b_u);
    at += layout.b_u;
    debug_assert_eq!(at, record_w);
    let freed = consumed - record_w;
    if !is_all_zero(tar.slice(layout.tar_w - freed, freed)) {
        return Err(CompressError::UnknownTag("freed trailing bits are not zero".into()));
    }
    let tail = tar.slice(record_w, layout.tar_w - consumed);
    let ctx = SerializeContext::new(machine, input.len());
    let member = parse_machine_part(&ctx, u, tape.tau)?;
    let prg = tape.prg();
    let classes = landing_classes(machine, input, &member, &prg, level)?;
    let tau_list = tau_set(&classes, &scheme.threshold, layout.m)?;
    let tau = *tau_list.get(idx).ok_or_else(|| {
        CompressError::UnknownTag(format!(
            "landing-class index {idx} ≥ the member's class count {}",
            tau_list.len()
        ))
    })?;
    let scheme_at_level = IndexScheme { level, ..clone_scheme(scheme) };
    let scan = scan_layer(
        machine,
        input,
        tau,
        &prg,
        level,
        &scheme_at_level.threshold,
        scheme_at_level.tree_bound,
        GRAPH_BUDGET,
    )?;
    require_small_trees(&scan)?;
    let rank = scan
        .passing()
        .position(|mem| mem.conf == member)
        .ok_or_else(|| {
            CompressError::UnknownTag(
                "recorded member is not in the layer set under the recovered τ".into(),
            )
        })?;
    if rank >= 1usize << scheme.prefix_w {
        return Err(CompressError::UnknownTag(format!(
            "member rank {rank} does not fit the {}-bit tar prefix",
            scheme.prefix_w
        )));
    }
    let restored_tar = Bits::from_int(rank as u128, scheme.prefix_w)
        .concat(Bits::zeros(consumed - scheme.prefix_w))
        .concat(tail);
    StructuredTape::new(layout.c, layout.m, layout.l, tau, chain_of(tape), restored_tar)
        .map_err(CompressError::Tape)
}

fn clone_scheme(s: &IndexScheme) -> IndexScheme {
    IndexScheme {
        tag: s.tag,
        level: s.level,
        with_level: s.with_level,
        threshold: s.threshold.clone(),
        min_members: s.min_members,
        prefix_w: s.prefix_w,
        b_idx: s.b_idx,
        tree_bound: s.tree_bound,
    }
}

/// Rewrites τ to the layer-i member selected by the tar prefix, recording
/// which landing class the old τ belongs to. Requires |S_i| ≥ T and all walk
/// trees within bound.
pub fn si_index_compress(
    machine: &MachineSpec,
    input: &Bits,
    tape: &StructuredTape,
    i: usize,
    params: &Params,
) -> Result<StructuredTape, CompressError> {
    let scheme = IndexScheme::si(machine, params, i)?;
    index_compress_engine(machine, input, tape, &scheme)
}

/// Inverse of [`si_index_compress`].
pub fn si_index_decompress(
    machine: &MachineSpec,
    input: &Bits,
    tape: &StructuredTape,
    params: &Params,
) -> Result<StructuredTape, CompressError> {
    let scheme = IndexScheme::si(machine, params, 0)?;
    index_decompress_engine(machine, input, tape, &scheme)
}

/// The always-reset (δ = 0) variant of the layer-set index at layer l, with
/// a fixed 2-bit class index and the machine-degree-scaled tree budget.
pub fn slprime_compress(
    machine: &MachineSpec,
    input: &Bits,
    tape: &StructuredTape,
    params: &Params,
) -> Result<StructuredTape, CompressError> {
    let scheme = IndexScheme::slprime(machine, params, tape.l())?;
    index_compress_engine(machine, input, tape, &scheme).map_err(|e| match e {
        CompressError::PreconditionSmallS { found, need } => CompressError::PreconditionFailed(
            format!("always-reset layer set has {found} members, need at least {need}"),
        ),
        other => other,
    })
}

/// Inverse of [`slprime_compress`].
pub fn slprime_decompress(
    machine: &MachineSpec,
    input: &Bits,
    tape: &StructuredTape,
    params: &Params,
) -> Result<StructuredTape, CompressError> {
    let scheme = IndexScheme::slprime(machine, params, tape.l())?;
    index_decompress_engine(machine, input, tape, &scheme)
}

// ── tag 10: bad hash ────────────────────────────────────────────────────────

fn badhash_widths(
    tape: &StructuredTape,
    params: &Params,
) -> Result<(usize, usize, usize), CompressError> {
    let m = tape.m();
    if m > MAX_FAMILY_M {
        return Err(CompressError::ParamsInfeasible(format!(
            "bad-hash enumeration sweeps 2^{} functions; m is capped at {MAX_FAMILY_M}",
            2 * m
        )));
    }
    let w_l = width_for(tape.l() + 1);
    let tail_w = params.badhash_tail;
    if tail_w == 0 {
        return Err(CompressError::ParamsInfeasible(
            "the bad-hash scheme must free at least one tail bit".into(),
        ));
    }
    let head_w = 2 + w_l;
    let slot_w = 2 * m as usize;
    if head_w + tail_w >= slot_w {
        return Err(CompressError::ParamsInfeasible(format!(
            "hash slot of {slot_w} bits cannot hold the displaced {head_w}+{tail_w} tar bits plus an index"
        )));
    }
    let b_bad = slot_w - head_w - tail_w;
    if head_w + tail_w > 3 * m as usize {
        return Err(CompressError::ParamsInfeasible(
            "tar is too narrow for the displaced head and tail".into(),
        ));
    }
    Ok((b_bad, head_w, tail_w))
}

/// Replaces a bad h_{i+1} by its rank among the bad functions (in family
/// order), storing the displaced tar head and tail in the freed hash slot
/// and stamping `10 ∘ i` into tar's head. τ is untouched; `tail_w` trailing
/// tar bits are freed.
pub fn badhash_compress(
    tape: &StructuredTape,
    i: usize,
    bad: &dyn Fn(&HashFn) -> bool,
    params: &Params,
) -> Result<StructuredTape, CompressError> {
    let (b_bad, head_w, tail_w) = badhash_widths(tape, params)?;
    if i + 1 > tape.l() {
        return Err(CompressError::PreconditionFailed(format!(
            "hash index {} exceeds the chain length {}",
            i + 1,
            tape.l()
        )));
    }
    let target = tape.hash(i + 1);
    if !bad(target) {
        return Err(CompressError::PreconditionFailed(format!(
            "h_{} is not bad under the supplied predicate",
            i + 1
        )));
    }
    let capacity = 1u64 << b_bad;
    let mut idx: Option<u64> = None;
    let mut bad_count: u64 = 0;
    for h in full_family(tape.m()) {
        if bad(&h) {
            if h == *target {
                idx = Some(bad_count);
            }
            bad_count += 1;
        }
    }
    if bad_count > capacity {
        return Err(CompressError::IndexOverflow { bad: bad_count, capacity });
    }
    let idx = idx.ok_or_else(|| {
        CompressError::Inconsistent("bad h_{i+1} not found in the full family".into())
    })?;
    let tar = tape.tar;
    let tar_w = 3 * tape.m() as usize;
    let slot = Bits::from_int(idx as u128, b_bad)
        .concat(tar.slice(0, head_w))
        .concat(tar.slice(tar_w - tail_w, tail_w));
    let new_hash = HashFn::decode(tape.m(), slot)?;
    let new_tar = Bits::from_int(0b10, 2)
        .concat(Bits::from_int(i as u128, head_w - 2))
        .concat(tar.slice(head_w, tar_w - tail_w - head_w))
        .concat(Bits::zeros(tail_w));
    let mut compressed = tape.clone();
    compressed.set_hash(i + 1, new_hash)?;
    compressed.tar = new_tar;
    let back = badhash_decompress(&compressed, bad, params)?;
    if back != *tape {
        return Err(CompressError::Inconsistent(
            "bad-hash round-trip self-check failed".into(),
        ));
    }
    Ok(compressed)
}

/// Inverse of [`badhash_compress`] under the same predicate.
pub fn badhash_decompress(
    tape: &StructuredTape,
    bad: &dyn Fn(&HashFn) -> bool,
    params: &Params,
) -> Result<StructuredTape, CompressError> {
    let (b_bad, head_w, tail_w) = badhash_widths(tape, params)?;
    let tar = tape.tar;
    let tar_w = 3 * tape.m() as usize;
    if tar.slice(0, 2).to_int() != 0b10 {
        return Err(CompressError::UnknownTag("tag bits are not 10".into()));
    }
    let i = tar.slice(2, head_w - 2).to_int() as usize;
    if i + 1 > tape.l() {
        return Err(CompressError::UnknownTag(format!(
            "hash index {} exceeds the chain length {}",
            i + 1,
            tape.l()
        )));
    }
    if !is_all_zero(tar.slice(tar_w - tail_w, tail_w)) {
        return Err(CompressError::UnknownTag("freed trailing bits are not zero".into()));
    }
    let slot = tape.hash(i + 1).encode();
    let idx = slot.slice(0, b_bad).to_int() as u64;
    let head_orig = slot.slice(b_bad, head_w);
    let tail_orig = slot.slice(b_bad + head_w, tail_w);
    let mut seen: u64 = 0;
    let mut recovered: Option<HashFn> = None;
    for h in full_family(tape.m()) {
        if bad(&h) {
            if seen == idx {
                recovered = Some(h);
                break;
            }
            seen += 1;
        }
    }
    let recovered = recovered.ok_or_else(|| {
        CompressError::UnknownTag(format!(
            "bad-function rank {idx} exceeds the family's bad count"
        ))
    })?;
    let restored_tar = head_orig
        .concat(tar.slice(head_w, tar_w - tail_w - head_w))
        .concat(tail_orig);
    let mut restored = tape.clone();
    restored.set_hash(i + 1, recovered)?;
    restored.tar = restored_tar;
    Ok(restored)
}

// ── goodness context ────────────────────────────────────────────────────────

/// Assembles the independence constraints a good h_{i+1} must satisfy: for
/// every threshold-passing layer-i vertex, its accept- and reject-walk seed
/// sets paired with the edge descriptor of every in-neighbor (plus the
/// halting self-descent). Returns the context and whether any dual-label
/// edge forced a full-seed-set descriptor.
pub fn build_good_context(
    machine: &MachineSpec,
    input: &Bits,
    tau: Bits,
    prg: &PrgSpec,
    i: usize,
    scan: &LayerScan,
) -> Result<(GoodContext, bool), CompressError> {
    let mut ctx = GoodContext::default();
    let mut dual = false;
    for member in scan.passing() {
        let mut neighbors: Vec<Configuration> =
            predecessors(machine, input, &member.conf)?.into_iter().map(|(_, z)| z).collect();
        if machine.is_halting(&member.conf) {
            neighbors.push(member.conf);
        }
        neighbors.sort();
        neighbors.dedup();
        for kind in [HaltKind::Accept, HaltKind::Reject] {
            let a: SeedSet = compute_a(machine, input, tau, prg, i, &member.conf, kind)?;
            for z in &neighbors {
                let b = compute_b(machine, input, &member.conf, z);
                if matches!(b, crate::hashprg::BDescriptor::All) && *z != member.conf {
                    dual = true;
                }
                ctx.push(a.clone(), b);
            }
        }
    }
    Ok((ctx, dual))
}

// ── the compress-or-decide driver ───────────────────────────────────────────

/// One driver invocation with its decision trail.
#[derive(Debug)]
pub struct DriverRun {
    pub outcome: DriverOutcome,
    pub trace: Vec<String>,
}

/// The compress-or-decide subroutine: scans layers 0…l, compressing at the
/// first opportunity (oversized tree → timestamp; large layer set → index;
/// bad next hash → bad-hash) and otherwise deciding from the final-layer
/// seed fractions. Decisive and don't-know returns leave the tape untouched
/// (the tape is taken by reference and never mutated).
pub fn f_subroutine(
    machine: &MachineSpec,
    input: &Bits,
    tape: &StructuredTape,
    params: &Params,
    mode: DriverMode,
    delta: &BigRational,
    eps: &BigRational,
) -> Result<DriverOutcome, CompressError> {
    f_subroutine_traced(machine, input, tape, params, mode, delta, eps).map(|run| run.outcome)
}

/// [`f_subroutine`] with the per-layer decision trail attached.
pub fn f_subroutine_traced(
    machine: &MachineSpec,
    input: &Bits,
    tape: &StructuredTape,
    params: &Params,
    mode: DriverMode,
    delta: &BigRational,
    eps: &BigRational,
) -> Result<DriverRun, CompressError> {
    let scanner = LayerScanner::new(machine, input, GRAPH_BUDGET)?;
    f_subroutine_scanned(&scanner, tape, params, mode, delta, eps)
}

/// The driver against a prebuilt [`LayerScanner`], for sweeps that run many
/// tapes through one (machine, input) pair.
pub fn f_subroutine_scanned(
    scanner: &LayerScanner,
    tape: &StructuredTape,
    params: &Params,
    mode: DriverMode,
    delta: &BigRational,
    eps: &BigRational,
) -> Result<DriverRun, CompressError> {
    let machine = scanner.machine();
    let input = scanner.input();
    if tape.m() != params.m || tape.l() != params.l {
        return Err(CompressError::ParamsInfeasible(format!(
            "tape shape (m={}, l={}) differs from the configured (m={}, l={})",
            tape.m(),
            tape.l(),
            params.m,
            params.l
        )));
    }
    let thr = thresholds(delta, eps)?;
    let mut trace = Vec::new();
    let prg = tape.prg();
    let l = tape.l();
    for i in 0..=l {
        let scan = scanner.scan_tape(tape, i, &params.s_threshold, params.h_bound)?;
        if let Some((b, seed)) = scan.oversize {
            let kind = if b == 0 { HaltKind::Reject } else { HaltKind::Accept };
            trace.push(format!(
                "layer {i}: oversized walk tree at (b={b}, seed={seed}); timestamp compression"
            ));
            match timestamp_compress(
                machine,
                input,
                tape,
                TimestampWitness { seed, kind, i },
                params.h_bound,
            ) {
                Ok(t2) => return Ok(DriverRun { outcome: DriverOutcome::Compressed(t2), trace }),
                Err(CompressError::PreconditionFailed(msg)) => {
                    trace.push(format!(
                        "layer {i}: timestamp inapplicable ({msg}); giving up on this tape"
                    ));
                    return Ok(DriverRun { outcome: DriverOutcome::DontKnow, trace });
                }
                Err(e) => return Err(e),
            }
        }
        if i < l {
            if scan.s_count() >= params.t_bound {
                trace.push(format!(
                    "layer {i}: layer set has {} ≥ {} members; index compression",
                    scan.s_count(),
                    params.t_bound
                ));
                match si_index_compress(machine, input, tape, i, params) {
                    Ok(t2) => {
                        return Ok(DriverRun { outcome: DriverOutcome::Compressed(t2), trace })
                    }
                    Err(CompressError::PreconditionFailed(msg)) => {
                        trace.push(format!("layer {i}: index compression fell through ({msg})"));
                    }
                    Err(e) => return Err(e),
                }
            }
            let (ctx, dual) = build_good_context(machine, input, tape.tau, &prg, i, &scan)?;
            if dual {
                trace.push(format!(
                    "layer {i}: a dual-label edge fixed its descriptor to the full seed set"
                ));
            }
            let next = tape.hash(i + 1);
            if !is_good(next, &ctx, &params.alpha) {
                trace.push(format!("layer {i}: h_{} is bad; bad-hash compression", i + 1));
                let predicate = |h: &HashFn| !is_good(h, &ctx, &params.alpha);
                match badhash_compress(tape, i, &predicate, params) {
                    Ok(t2) => {
                        return Ok(DriverRun { outcome: DriverOutcome::Compressed(t2), trace })
                    }
                    Err(CompressError::IndexOverflow { bad, capacity }) => {
                        let degree: u64 = if machine.is_deterministic() { 1 } else { 2 };
                        let bound = aggregate_bad_bound(
                            scan.s_count(),
                            degree,
                            tape.m(),
                            &params.alpha,
                        );
                        trace.push(format!(
                            "layer {i}: {bad} bad functions exceed the {capacity}-value index \
                             (pairwise-independence bound on the bad fraction: {bound}); giving up"
                        ));
                        return Ok(DriverRun { outcome: DriverOutcome::DontKnow, trace });
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    let (f_acc, f_rej) = estimate_fractions(machine, input, tape.tau, &prg, l)?;
    let strict = rat(1, 2) + eps - &thr.zeta;
    trace.push(format!("layer {l}: fractions f_acc = {f_acc}, f_rej = {f_rej}"));
    if f_acc >= strict {
        return Ok(DriverRun { outcome: DriverOutcome::Accept, trace });
    }
    if f_rej >= strict {
        return Ok(DriverRun { outcome: DriverOutcome::Reject, trace });
    }
    match mode {
        DriverMode::General => Ok(DriverRun { outcome: DriverOutcome::DontKnow, trace }),
        DriverMode::PolytimeOrDelta0 => {
            let relaxed = rat(1, 2) + eps / rat(2, 1);
            if f_acc >= relaxed {
                return Ok(DriverRun { outcome: DriverOutcome::Accept, trace });
            }
            if f_rej >= relaxed {
                return Ok(DriverRun { outcome: DriverOutcome::Reject, trace });
            }
            trace.push("no fraction reaches the relaxed threshold; always-reset compression".into());
            match slprime_compress(machine, input, tape, params) {
                Ok(t2) => Ok(DriverRun { outcome: DriverOutcome::Compressed(t2), trace }),
                Err(CompressError::PreconditionFailed(msg)) => {
                    trace.push(format!("always-reset compression fell through ({msg})"));
                    Ok(DriverRun { outcome: DriverOutcome::DontKnow, trace })
                }
                Err(e) => Err(e),
            }
        }
    }
}

/// Tag-dispatched decompression: the exact inverse of whichever scheme
/// [`f_subroutine`] applied.
pub fn r_subroutine(
    machine: &MachineSpec,
    input: &Bits,
    tape: &StructuredTape,
    params: &Params,
) -> Result<StructuredTape, CompressError> {
    let tag = tape.tar.slice(0, 2).to_int();
    match tag {
        0b00 => timestamp_decompress(machine, input, tape),
        0b01 => si_index_decompress(machine, input, tape, params),
        0b10 => {
            let w_l = width_for(tape.l() + 1);
            let i = tape.tar.slice(2, w_l).to_int() as usize;
            if i + 1 > tape.l() {
                return Err(CompressError::UnknownTag(format!(
                    "hash index {} exceeds the chain length {}",
                    i + 1,
                    tape.l()
                )));
            }
            let prg = tape.prg();
            let scan = scan_for_tape(
                machine,
                input,
                tape,
                i,
                &params.s_threshold,
                params.h_bound,
                GRAPH_BUDGET,
            )?;
            if scan.oversize.is_some() {
                return Err(CompressError::UnknownTag(
                    "bad-hash record but the layer scan exceeds its tree bound".into(),
                ));
            }
            let (ctx, _) = build_good_context(machine, input, tape.tau, &prg, i, &scan)?;
            let predicate = |h: &HashFn| !is_good(h, &ctx, &params.alpha);
            badhash_decompress(tape, &predicate, params)
        }
        0b11 => slprime_decompress(machine, input, tape, params),
        _ => unreachable!("a 2-bit tag has four values"),
    }
}

/// Freed trailing zero bits of a compressed tape, per the layout table.
pub fn freed_trailing_bits(
    machine: &MachineSpec,
    input: &Bits,
    tape: &StructuredTape,
    params: &Params,
) -> Result<usize, CompressError> {
    let layout = RecordLayout::new(machine, input.len(), tape)?;
    let tag = tape.tar.slice(0, 2).to_int();
    let freed = match tag {
        0b00 => layout.tar_w - layout.timestamp_width(),
        0b01 => {
            let scheme = IndexScheme::si(machine, params, 0)?;
            let record_w = layout.index_width(scheme.b_idx, true);
            layout.consumed(scheme.prefix_w, record_w) - record_w
        }
        0b10 => params.badhash_tail,
        0b11 => {
            let scheme = IndexScheme::slprime(machine, params, tape.l())?;
            let record_w = layout.index_width(scheme.b_idx, false);
            layout.consumed(scheme.prefix_w, record_w) - record_w
        }
        _ => unreachable!(),
    };
    Ok(freed)
}

// ── decision procedures ─────────────────────────────────────────────────────

/// Outcome of a chunked run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkedReport {
    /// 1 = accept, 0 = reject.
    pub answer: u8,
    /// Which chunk decided, if one did.
    pub decisive_chunk: Option<usize>,
    pub compressed_chunks: usize,
    pub dontknow_chunks: usize,
    /// Σ of freed trailing bits over the compressed chunks.
    pub freed_bits_total: usize,
    /// Whether the all-compressed brute-force path produced the answer.
    pub brute_forced: bool,
}

/// Runs the driver per chunk until one decides; if every chunk compresses,
/// brute-forces the answer (exact halting distribution) in ordinary memory
/// while the freed-bit ledger is enforced, then decompresses everything.
/// The chunk vector is always restored bit-for-bit before returning.
pub fn chunked_decider(
    machine: &MachineSpec,
    input: &Bits,
    chunks: &mut Vec<StructuredTape>,
    params: &Params,
    mode: DriverMode,
    delta: &BigRational,
    eps: &BigRational,
) -> Result<ChunkedReport, CompressError> {
    if chunks.is_empty() {
        return Err(CompressError::ParamsInfeasible("no chunks supplied".into()));
    }
    let scanner = LayerScanner::new(machine, input, GRAPH_BUDGET)?;
    let initial = chunks.clone();
    let mut compressed: Vec<usize> = Vec::new();
    let mut dontknow = 0usize;
    let mut freed_total = 0usize;
    let mut verdict: Option<(u8, Option<usize>, bool)> = None;
    for k in 0..chunks.len() {
        match f_subroutine_scanned(&scanner, &chunks[k], params, mode, delta, eps)?.outcome {
            DriverOutcome::Accept => {
                verdict = Some((1, Some(k), false));
                break;
            }
            DriverOutcome::Reject => {
                verdict = Some((0, Some(k), false));
                break;
            }
            DriverOutcome::DontKnow => {
                dontknow += 1;
            }
            DriverOutcome::Compressed(t2) => {
                let freed = freed_trailing_bits(machine, input, &t2, params)?;
                if freed == 0 {
                    return Err(CompressError::Inconsistent(
                        "a compressed chunk freed no trailing bit".into(),
                    ));
                }
                freed_total += freed;
                chunks[k] = t2;
                compressed.push(k);
            }
        }
    }
    let verdict = match verdict {
        Some(v) => Some(v),
        None if dontknow == 0 => {
            // Every chunk compressed: decide by exhaustive evaluation in the
            // freed space (ordinary memory at this scale; the ledger above
            // guarantees ≥ 1 freed bit per chunk).
            let dist = halt_distribution(machine, input, initial[0].tau, TRUTH_HORIZON)?;
            let p_acc = dist.prob_kind(HaltKind::Accept);
            let p_rej = dist.prob_kind(HaltKind::Reject);
            if p_acc == p_rej {
                return Err(CompressError::Inconsistent(
                    "no majority answer to brute-force".into(),
                ));
            }
            Some((u8::from(p_acc > p_rej), None, true))
        }
        None => None,
    };
    // Restore every compressed chunk, decisive or not.
    for &k in compressed.iter().rev() {
        chunks[k] = r_subroutine(machine, input, &chunks[k], params)?;
    }
    if *chunks != initial {
        return Err(CompressError::Inconsistent(
            "chunk restoration is not bit-for-bit".into(),
        ));
    }
    match verdict {
        Some((answer, decisive_chunk, brute_forced)) => Ok(ChunkedReport {
            answer,
            decisive_chunk,
            compressed_chunks: compressed.len(),
            dontknow_chunks: dontknow,
            freed_bits_total: freed_total,
            brute_forced,
        }),
        None => Err(CompressError::AllChunksUndecidedInGeneralMode),
    }
}

/// Decides a lossy deterministic machine's answer by hunting, over all error
/// vectors of bounded weight, for the start configuration inside the
/// halt-rooted component trees. Never wrong: a deterministic start
/// configuration lies in exactly one halt's tree.
pub fn error_vector_decider(
    machine: &MachineSpec,
    input: &Bits,
    tau: Bits,
    e: &BigRational,
) -> Result<Decision, CompressError> {
    if !machine.is_deterministic() {
        return Err(CompressError::NotDeterministic);
    }
    let c = machine.c;
    if c > MAX_ENUM_C {
        return Err(CompressError::ParamsInfeasible(format!(
            "error-vector enumeration needs c ≤ {MAX_ENUM_C}, machine has {c}"
        )));
    }
    if e.is_negative() {
        return Err(CompressError::ParamsInfeasible("expected-error bound is negative".into()));
    }
    let ball = (rat(10, 1) * e)
        .floor()
        .to_integer()
        .to_u64()
        .unwrap_or(u64::MAX)
        .min(c as u64) as u32;
    let mut vectors: Vec<u128> = (0..(1u128 << c))
        .filter(|z| z.count_ones() <= ball)
        .collect();
    vectors.sort_by_key(|z| (z.count_ones(), *z));
    let target = machine.start_configuration(tau);
    let space = machine.config_space_size(input.len());
    let mut found: Option<Decision> = None;
    for z in vectors {
        let shifted = tau.xor(Bits::from_int(z, c));
        for (kind, verdict) in
            [(HaltKind::Accept, Decision::Accept), (HaltKind::Reject, Decision::Reject)]
        {
            let root = machine.canonical_halt(kind, shifted);
            let mut cur = root;
            let mut hit = false;
            let mut steps: u128 = 0;
            loop {
                cur = next_step(machine, input, &cur)?;
                if cur == target {
                    hit = true;
                }
                if cur == root {
                    break;
                }
                steps += 1;
                if steps > space {
                    return Err(CompressError::Inconsistent(
                        "component walk exceeded the configuration space".into(),
                    ));
                }
            }
            if hit {
                match found {
                    None => found = Some(verdict),
                    Some(prev) if prev == verdict => {}
                    Some(_) => {
                        return Err(CompressError::Inconsistent(
                            "start configuration found in both halt trees".into(),
                        ))
                    }
                }
            }
        }
    }
    Ok(found.unwrap_or(Decision::DontKnow))
}

/// Zero-error decision by tree-size gate: if the start configuration's
/// component tree is within `size_bound`, walk it to the halt and walk back
/// home; otherwise answer don't-know. Never wrong.
pub fn polytime_zptau(
    machine: &MachineSpec,
    input: &Bits,
    tau: Bits,
    size_bound: u64,
) -> Result<Decision, CompressError> {
    if !machine.is_deterministic() {
        return Err(CompressError::NotDeterministic);
    }
    let start = machine.start_configuration(tau);
    let size = match count_size(machine, input, &start, size_bound)? {
        SizeCheck::Exceeds => return Ok(Decision::DontKnow),
        SizeCheck::AtMost(size) => size,
    };
    let mut cur = start;
    let mut steps = 0u64;
    let mut verdict: Option<HaltKind> = None;
    for _ in 0..size {
        cur = next_step(machine, input, &cur)?;
        steps += 1;
        if let Some(kind) = machine.halt_kind_of(cur.state) {
            verdict = Some(kind);
            break;
        }
        if cur == start {
            break;
        }
    }
    let Some(kind) = verdict else {
        return Ok(Decision::DontKnow);
    };
    for _ in 0..steps {
        cur = step_back(machine, input, &cur)?;
    }
    if cur != start {
        return Err(CompressError::Inconsistent(
            "walk-back did not return to the start configuration".into(),
        ));
    }
    Ok(match kind {
        HaltKind::Accept => Decision::Accept,
        HaltKind::Reject => Decision::Reject,
        HaltKind::DontKnow => Decision::DontKnow,
    })
}

/// Outcome of the retry-over-segments decider.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkRetryReport {
    /// 1 = accept, 0 = reject; None when no setting anywhere decides.
    pub answer: Option<u8>,
    /// Segments consumed before deciding (= iterations on the fallback path).
    pub used_iterations: usize,
    /// Whether the erase-and-search fallback ran.
    pub fallback: bool,
    /// Exact probability that all `iterations` independent uniform segments
    /// are don't-know settings: (⊥-fraction)^iterations.
    pub erasure_probability: BigRational,
}

/// Retries the zero-error decider across segments; if every segment is a
/// don't-know setting, erases the first segment and searches for a decisive
/// setting, leaving it in place. Later segments are never touched.
pub fn chunk_retry_decider(
    machine: &MachineSpec,
    input: &Bits,
    segments: &mut [Bits],
    iterations: usize,
    size_bound: u64,
) -> Result<ChunkRetryReport, CompressError> {
    if !machine.is_deterministic() {
        return Err(CompressError::NotDeterministic);
    }
    let c = machine.c;
    if c > MAX_ENUM_C {
        return Err(CompressError::ParamsInfeasible(format!(
            "exhaustive ⊥-fraction needs c ≤ {MAX_ENUM_C}, machine has {c}"
        )));
    }
    if iterations == 0 || iterations > segments.len() {
        return Err(CompressError::ParamsInfeasible(format!(
            "need 1 ≤ iterations ≤ segments ({} supplied, {} segments)",
            iterations,
            segments.len()
        )));
    }
    for seg in segments.iter() {
        if seg.len() != c {
            return Err(CompressError::ParamsInfeasible(format!(
                "segment width {} differs from the catalytic width {c}",
                seg.len()
            )));
        }
    }
    // Exact ⊥ fraction over all settings.
    let mut bot: u64 = 0;
    for v in 0..(1u128 << c) {
        if polytime_zptau(machine, input, Bits::from_int(v, c), size_bound)? == Decision::DontKnow {
            bot += 1;
        }
    }
    let p_bot = rat(bot as i64, 1) / pow2(c as u32);
    let mut erasure = BigRational::one();
    for _ in 0..iterations {
        erasure *= &p_bot;
    }
    for (k, seg) in segments.iter().take(iterations).enumerate() {
        match polytime_zptau(machine, input, *seg, size_bound)? {
            Decision::Accept => {
                return Ok(ChunkRetryReport {
                    answer: Some(1),
                    used_iterations: k + 1,
                    fallback: false,
                    erasure_probability: erasure,
                })
            }
            Decision::Reject => {
                return Ok(ChunkRetryReport {
                    answer: Some(0),
                    used_iterations: k + 1,
                    fallback: false,
                    erasure_probability: erasure,
                })
            }
            Decision::DontKnow => {}
        }
    }
    // Erase the first segment and brute-force a decisive setting into it.
    segments[0] = Bits::zeros(c);
    for v in 0..(1u128 << c) {
        let candidate = Bits::from_int(v, c);
        match polytime_zptau(machine, input, candidate, size_bound)? {
            Decision::Accept => {
                segments[0] = candidate;
                return Ok(ChunkRetryReport {
                    answer: Some(1),
                    used_iterations: iterations,
                    fallback: true,
                    erasure_probability: erasure,
                });
            }
            Decision::Reject => {
                segments[0] = candidate;
                return Ok(ChunkRetryReport {
                    answer: Some(0),
                    used_iterations: iterations,
                    fallback: true,
                    erasure_probability: erasure,
                });
            }
            Decision::DontKnow => {}
        }
    }
    Ok(ChunkRetryReport {
        answer: None,
        used_iterations: iterations,
        fallback: true,
        erasure_probability: erasure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::{Move, Transition};
    use crate::machines;

    fn bits(val: u128, len: usize) -> Bits {
        Bits::from_int(val, len)
    }

    fn params_for(m: u32, l: usize, h_bound: u64, t_bound: u64) -> Params {
        Params {
            m,
            l,
            h_bound,
            t_bound,
            alpha: rat(1, 128),
            s_threshold: rat(1, 8),
            slprime_threshold: rat(1, 4),
            slprime_min: 2,
            badhash_tail: 1,
        }
    }

    /// Randomized two-step fork: R0 --1--> R1 --1--> ACC, either coin 0
    /// rejects. No writes, no moves; c = 1.
    fn fork_machine() -> MachineSpec {
        let mut m = MachineSpec::new(
            vec!["R0".into(), "R1".into(), "ACC".into(), "REJ".into()],
            "R0",
            "ACC",
            "REJ",
            None,
            3,
            1,
            true,
        )
        .unwrap();
        for state in [0u16, 1] {
            for i in 0..2 {
                for w in 0..2 {
                    for cb in 0..2 {
                        for coin in 0..2u8 {
                            let next = match (state, coin) {
                                (_, 0) => 3,
                                (0, _) => 1,
                                (_, _) => 2,
                            };
                            m.add_row(
                                state,
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
        }
        m
    }

    /// Deterministic gate over c = 2: accepts when the scanned cat bit is 1,
    /// otherwise halts don't-know. Tape untouched.
    fn gate_machine() -> MachineSpec {
        let mut m = MachineSpec::new(
            vec!["G".into(), "ACC".into(), "REJ".into(), "DK".into()],
            "G",
            "ACC",
            "REJ",
            Some("DK"),
            3,
            2,
            false,
        )
        .unwrap();
        for i in 0..2 {
            for w in 0..2 {
                for cb in 0..2 {
                    m.add_row(
                        0,
                        i,
                        w,
                        cb,
                        None,
                        Transition {
                            next: if cb == 1 { 1 } else { 3 },
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
        m
    }

    fn varied_fork_tape() -> StructuredTape {
        let mut tape = StructuredTape::zeroed(1, 3, 4).unwrap();
        tape.set_hash(1, HashFn::new(3, 1, 0)).unwrap();
        tape.set_hash(2, HashFn::new(3, 1, 1)).unwrap();
        tape.set_hash(3, HashFn::new(3, 2, 3)).unwrap();
        tape.set_hash(4, HashFn::new(3, 3, 5)).unwrap();
        tape
    }

    #[test]
    fn layer_scan_matches_forward_run_oracles() {
        let machine = fork_machine();
        let input = bits(0, 1);
        let tape = varied_fork_tape();
        let prg = tape.prg();
        let threshold = rat(1, 4);
        let scan =
            scan_layer(&machine, &input, tape.tau, &prg, 2, &threshold, 4096, GRAPH_BUDGET)
                .unwrap();
        assert!(scan.oversize.is_none());

        let got: std::collections::BTreeSet<Configuration> =
            scan.members.iter().map(|m| m.conf).collect();
        let want = crate::oracle::compute_vi(&machine, &input, tape.tau, &prg, 2, GRAPH_BUDGET)
            .unwrap();
        assert_eq!(got, want, "layer-2 vertex sets disagree with the forward-run oracle");

        let got_s: std::collections::BTreeSet<Configuration> =
            scan.passing().map(|m| m.conf).collect();
        let want_s = crate::oracle::compute_si(
            &machine, &input, tape.tau, &prg, 2, &threshold, GRAPH_BUDGET,
        )
        .unwrap();
        assert_eq!(got_s, want_s, "threshold-passing sets disagree with the forward-run oracle");

        // Every witness replays: walking its step count through the seed's
        // depth-first order lands exactly on the member at its layer.
        for member in &scan.members {
            let w = member.witness;
            let y = prg_eval(&prg, 2, w.seed).unwrap();
            let kind = if w.b == 0 { HaltKind::Reject } else { HaltKind::Accept };
            let mut node =
                LayeredNode { conf: machine.canonical_halt(kind, tape.tau), level: 0 };
            for _ in 0..w.steps {
                node = y_dfs_next(&machine, &input, &node, &y).unwrap();
            }
            assert_eq!(node, LayeredNode { conf: member.conf, level: 2 });
        }
    }

    #[test]
    fn layer_zero_has_exactly_the_two_roots() {
        let machine = fork_machine();
        let input = bits(0, 1);
        let tape = varied_fork_tape();
        let scan = scan_layer(
            &machine,
            &input,
            tape.tau,
            &tape.prg(),
            0,
            &rat(1, 8),
            4096,
            GRAPH_BUDGET,
        )
        .unwrap();
        assert_eq!(scan.v_count(), 2);
        assert_eq!(scan.s_count(), 2);
        let rej = machine.canonical_halt(HaltKind::Reject, tape.tau);
        let acc = machine.canonical_halt(HaltKind::Accept, tape.tau);
        assert_eq!(scan.members[0].conf, rej);
        assert_eq!(scan.members[0].witness, Witness { b: 0, seed: 0, steps: 0 });
        assert_eq!(scan.members[1].conf, acc);
        assert_eq!(scan.members[1].witness, Witness { b: 1, seed: 0, steps: 0 });
        assert_eq!(scan.members[0].seed_count, 8);
        assert_eq!(scan.members[1].seed_count, 8);
    }

    #[test]
    fn scan_wrappers_index_in_witness_order_and_bound_check() {
        let machine = fork_machine();
        let input = bits(0, 1);
        let tape = varied_fork_tape();
        let n = count_v(&machine, &input, &tape, 2, 4096).unwrap();
        assert!(n >= 2);
        // The reject root has 96 level-1 predecessor configurations and a
        // halting self-copy; the first layer-2 vertex appears right after
        // them in the first tree's depth-first order.
        let (w0, c0) = index_v(&machine, &input, &tape, 2, 0, 4096).unwrap();
        assert_eq!((w0.b, w0.seed, w0.steps), (0, 0, 98));
        assert_eq!(c0.state, machine.state_id("R0").unwrap());
        assert!(matches!(
            index_v(&machine, &input, &tape, 2, n, 4096),
            Err(CompressError::PreconditionFailed(_))
        ));
        let thr = rat(1, 4);
        let s = count_s(&machine, &input, &tape, 2, &thr, 4096).unwrap();
        assert!(s <= n);
        assert!(matches!(
            index_s(&machine, &input, &tape, 2, &thr, s, 4096),
            Err(CompressError::PreconditionFailed(_))
        ));
    }

    #[test]
    fn timestamp_round_trips_across_step_counts() {
        let machine = machines::longchain();
        let input = bits(0, 1);
        let base = StructuredTape::zeroed(1, 11, 8).unwrap();
        let prg = base.prg();
        let y = prg_eval(&prg, 8, 0).unwrap();
        let root =
            LayeredNode { conf: machine.canonical_halt(HaltKind::Accept, base.tau), level: 0 };
        match y_dfs_size(&machine, &input, &root, &y, 1 << 12).unwrap() {
            SizeCheck::AtMost(sz) => assert_eq!(sz, 1737),
            SizeCheck::Exceeds => panic!("tree should fit in 4096"),
        }
        let witness = TimestampWitness { seed: 0, kind: HaltKind::Accept, i: 8 };
        let params = params_for(11, 8, 8, 8);
        for val in [0u128, 1, 7, 44, 45] {
            let mut tape = base.clone();
            tape.tar = bits(val, 33);
            let packed = timestamp_compress(&machine, &input, &tape, witness, 8).unwrap();
            assert_eq!(packed.tar.slice(0, 2).to_int(), 0b00);
            assert_eq!(packed.tar.slice(32, 1).to_int(), 0, "one freed trailing zero bit");
            assert_ne!(packed, tape);
            assert_eq!(packed.to_bits().len(), tape.to_bits().len());
            assert_eq!(freed_trailing_bits(&machine, &input, &packed, &params).unwrap(), 1);
            let back = timestamp_decompress(&machine, &input, &packed).unwrap();
            assert_eq!(back, tape);
            let dispatched = r_subroutine(&machine, &input, &packed, &params).unwrap();
            assert_eq!(dispatched, tape);
        }
    }

    #[test]
    fn timestamp_rejects_wrapping_and_small_trees() {
        let machine = machines::longchain();
        let input = bits(0, 1);
        let base = StructuredTape::zeroed(1, 11, 8).unwrap();
        let witness = TimestampWitness { seed: 0, kind: HaltKind::Accept, i: 8 };
        for val in [1737u128, 1_000_000] {
            let mut tape = base.clone();
            tape.tar = bits(val, 33);
            assert!(
                matches!(
                    timestamp_compress(&machine, &input, &tape, witness, 8),
                    Err(CompressError::PreconditionFailed(_))
                ),
                "step count {val} exceeds the walked tree"
            );
        }
        assert!(matches!(
            timestamp_compress(&machine, &input, &base, witness, 4096),
            Err(CompressError::PreconditionNotBig { size: 1737, bound: 4096 })
        ));
        let dk = TimestampWitness { seed: 0, kind: HaltKind::DontKnow, i: 8 };
        assert!(matches!(
            timestamp_compress(&machine, &input, &base, dk, 8),
            Err(CompressError::PreconditionFailed(_))
        ));
        let deep = TimestampWitness { seed: 0, kind: HaltKind::Accept, i: 9 };
        assert!(matches!(
            timestamp_compress(&machine, &input, &base, deep, 8),
            Err(CompressError::PreconditionFailed(_))
        ));
    }

    #[test]
    fn timestamp_decompress_rejects_malformed_records() {
        let machine = machines::longchain();
        let input = bits(0, 1);
        // All-zero tar parses structurally but walks back to the start
        // state, which is no halt.
        let tape = StructuredTape::zeroed(1, 11, 8).unwrap();
        assert!(matches!(
            timestamp_decompress(&machine, &input, &tape),
            Err(CompressError::UnknownTag(_))
        ));
        // Nonzero padding in the freed zone.
        let mut padded = tape.clone();
        padded.tar = bits(1, 33);
        assert!(matches!(
            timestamp_decompress(&machine, &input, &padded),
            Err(CompressError::UnknownTag(_))
        ));
    }

    fn zeroer_params() -> Params {
        let mut p = params_for(7, 8, 4096, 8);
        p.s_threshold = rat(1, 2);
        p
    }

    #[test]
    fn layer_index_round_trips_with_tau_rewrite() {
        let machine = machines::zeroer();
        let input = bits(0, 1);
        let base = StructuredTape::zeroed(4, 7, 8).unwrap();
        let params = zeroer_params();
        for val in 0..8u128 {
            for tail in [0u128, 1, 3] {
                let mut tape = base.clone();
                tape.tar = bits(val, 3).concat(Bits::zeros(16)).concat(bits(tail, 2));
                let packed = si_index_compress(&machine, &input, &tape, 1, &params).unwrap();
                assert_eq!(packed.tar.slice(0, 2).to_int(), 0b01);
                assert_eq!(packed.tar.slice(2, 1).to_int(), 0, "deterministic landing class");
                assert_eq!(packed.tar.slice(3, 4).to_int(), 1, "layer field");
                assert_eq!(packed.tar.slice(18, 2).to_int(), tail, "relocated tail");
                assert_eq!(packed.tar.slice(20, 1).to_int(), 0, "freed trailing zero");
                assert_eq!(
                    freed_trailing_bits(&machine, &input, &packed, &params).unwrap(),
                    1
                );
                let back = si_index_decompress(&machine, &input, &packed, &params).unwrap();
                assert_eq!(back, tape);
                let dispatched = r_subroutine(&machine, &input, &packed, &params).unwrap();
                assert_eq!(dispatched, tape);
            }
        }
        // Index 0 selects the reject root (τ unchanged); later indexes reach
        // cat-flipped members, rewriting τ.
        let mut tape = base.clone();
        tape.tar = bits(0, 21);
        let packed = si_index_compress(&machine, &input, &tape, 1, &params).unwrap();
        assert_eq!(packed.tau, bits(0, 4));
        let mut tape2 = base.clone();
        tape2.tar = bits(2, 3).concat(Bits::zeros(18));
        let packed2 = si_index_compress(&machine, &input, &tape2, 1, &params).unwrap();
        assert_eq!(packed2.tau, bits(0b1000, 4), "third member carries a set cat bit");
    }

    #[test]
    fn layer_index_requires_zero_spill_and_enough_members() {
        let machine = machines::zeroer();
        let input = bits(0, 1);
        let base = StructuredTape::zeroed(4, 7, 8).unwrap();
        let params = zeroer_params();
        // Bit 10 lies in the spill region tar[3..19).
        let mut spilled = base.clone();
        spilled.tar = bits(1 << 10, 21);
        assert!(matches!(
            si_index_compress(&machine, &input, &spilled, 1, &params),
            Err(CompressError::PreconditionFailed(_))
        ));
        // Layer 0 holds only the two roots.
        assert!(matches!(
            si_index_compress(&machine, &input, &base, 0, &params),
            Err(CompressError::PreconditionSmallS { found: 2, need: 8 })
        ));
    }

    #[test]
    fn bad_hash_relocation_round_trips_exactly() {
        let base = StructuredTape::zeroed(1, 4, 8).unwrap();
        let params = params_for(4, 8, 4096, 8);
        let mut tape = base.clone();
        tape.tar = bits(0b1011_0111_0101, 12);
        let target = HashFn::new(4, 0, 0);
        let other = HashFn::new(4, 1, 1);
        let bad = move |h: &HashFn| *h == target || *h == other;
        let packed = badhash_compress(&tape, 2, &bad, &params).unwrap();
        assert_eq!(packed.tau, tape.tau, "the bad-hash scheme never touches τ");
        assert_eq!(packed.tar.slice(0, 2).to_int(), 0b10);
        assert_eq!(packed.tar.slice(2, 4).to_int(), 2, "which hash was replaced");
        // Displaced head (6 bits) and tail (1 bit) live in the freed slot
        // behind the 1-bit bad-function rank.
        let slot = packed.hash(3).encode();
        assert_eq!(slot.slice(0, 1).to_int(), 0, "h_3 is the first bad function");
        assert_eq!(slot.slice(1, 6), tape.tar.slice(0, 6));
        assert_eq!(slot.slice(7, 1), tape.tar.slice(11, 1));
        assert_eq!(packed.tar.slice(6, 5), tape.tar.slice(6, 5), "middle stays in place");
        assert_eq!(packed.tar.slice(11, 1).to_int(), 0, "freed trailing zero");
        let back = badhash_decompress(&packed, &bad, &params).unwrap();
        assert_eq!(back, tape);
    }

    #[test]
    fn bad_hash_rejects_overflow_and_good_targets() {
        let base = StructuredTape::zeroed(1, 4, 8).unwrap();
        let params = params_for(4, 8, 4096, 8);
        let h0 = HashFn::new(4, 0, 0);
        let h1 = HashFn::new(4, 1, 1);
        let h2 = HashFn::new(4, 2, 2);
        let three_bad = move |h: &HashFn| *h == h0 || *h == h1 || *h == h2;
        assert!(matches!(
            badhash_compress(&base, 2, &three_bad, &params),
            Err(CompressError::IndexOverflow { bad: 3, capacity: 2 })
        ));
        let not_mine = move |h: &HashFn| *h == h1;
        assert!(matches!(
            badhash_compress(&base, 2, &not_mine, &params),
            Err(CompressError::PreconditionFailed(_))
        ));
        let any = move |_: &HashFn| true;
        assert!(matches!(
            badhash_compress(&base, 8, &any, &params),
            Err(CompressError::PreconditionFailed(_))
        ));
    }

    fn longchain_params() -> Params {
        params_for(6, 8, 4096, 512)
    }

    #[test]
    fn always_reset_index_round_trips_at_final_layer() {
        let machine = machines::longchain();
        let input = bits(0, 1);
        let base = StructuredTape::zeroed(1, 6, 8).unwrap();
        let params = longchain_params();
        for (val, tail) in [(0u128, 0u128), (0, 3), (1, 1)] {
            let mut tape = base.clone();
            tape.tar = bits(val, 1).concat(Bits::zeros(15)).concat(bits(tail, 2));
            let packed = slprime_compress(&machine, &input, &tape, &params).unwrap();
            assert_eq!(packed.tar.slice(0, 2).to_int(), 0b11);
            assert_eq!(packed.tar.slice(2, 2).to_int(), 0, "deterministic landing class");
            assert_eq!(packed.tar.slice(15, 2).to_int(), tail, "relocated tail");
            assert_eq!(packed.tar.slice(17, 1).to_int(), 0, "freed trailing zero");
            assert_eq!(freed_trailing_bits(&machine, &input, &packed, &params).unwrap(), 1);
            let back = slprime_decompress(&machine, &input, &packed, &params).unwrap();
            assert_eq!(back, tape);
            let dispatched = r_subroutine(&machine, &input, &packed, &params).unwrap();
            assert_eq!(dispatched, tape);
        }
        // Index 0 is the reject root.
        let packed = slprime_compress(&machine, &input, &base, &params).unwrap();
        let ctx = SerializeContext::new(&machine, 1);
        let u = packed.tar.slice(4, 11);
        let conf = ctx.parse(u.concat(packed.tau)).unwrap();
        assert_eq!(conf, machine.canonical_halt(HaltKind::Reject, base.tau));
    }

    #[test]
    fn always_reset_requires_minimum_membership() {
        let machine = machines::longchain();
        let input = bits(0, 1);
        let base = StructuredTape::zeroed(1, 6, 8).unwrap();
        // Spill violation: bit 8 sits inside tar[1..16).
        let mut spilled = base.clone();
        spilled.tar = bits(1 << 9, 18);
        let params = longchain_params();
        assert!(matches!(
            slprime_compress(&machine, &input, &spilled, &params),
            Err(CompressError::PreconditionFailed(_))
        ));
        // Raising the minimum past the layer's population falls through.
        let mut strict = longchain_params();
        strict.slprime_min = 512;
        match slprime_compress(&machine, &input, &base, &strict) {
            Err(CompressError::PreconditionFailed(msg)) => {
                assert!(msg.contains("386"), "population should surface in the message: {msg}")
            }
            other => panic!("expected a fall-through, got {other:?}"),
        }
    }

    #[test]
    fn driver_accepts_when_fractions_clear_threshold() {
        let machine = machines::one_step();
        let input = bits(0, 1);
        let tape = StructuredTape::zeroed(2, 4, 2).unwrap();
        let params = params_for(4, 2, 4096, 512);
        let run = f_subroutine_traced(
            &machine,
            &input,
            &tape,
            &params,
            DriverMode::General,
            &BigRational::zero(),
            &rat(1, 2),
        )
        .unwrap();
        assert_eq!(run.outcome, DriverOutcome::Accept);
        assert!(run.trace.last().unwrap().contains("fractions"));
    }

    fn fork_tape(l: usize) -> StructuredTape {
        let mut tape = StructuredTape::zeroed(1, 6, l).unwrap();
        tape.set_hash(1, HashFn::new(6, 1, 0)).unwrap();
        tape.set_hash(2, HashFn::new(6, 1, 0)).unwrap();
        tape
    }

    #[test]
    fn driver_compresses_bad_hash_with_canonical_predicate_and_restores() {
        let machine = fork_machine();
        let input = bits(0, 1);
        let tape = fork_tape(2);
        // Layer 1 holds 98 well-supported vertices, so the index threshold
        // must sit above that for the run to reach the hash-goodness check.
        let mut params = params_for(6, 2, 4096, 512);
        params.alpha = rat(3, 16);
        let run = f_subroutine_traced(
            &machine,
            &input,
            &tape,
            &params,
            DriverMode::General,
            &BigRational::zero(),
            &rat(1, 4),
        )
        .unwrap();
        let DriverOutcome::Compressed(packed) = run.outcome else {
            panic!("expected a bad-hash compression, trace: {:?}", run.trace);
        };
        assert!(run.trace.iter().any(|t| t.contains("bad-hash")));
        assert_eq!(packed.tar.slice(0, 2).to_int(), 0b10);
        assert_eq!(packed.tar.slice(2, 2).to_int(), 1, "h_2 was replaced");
        // The bad set holds the 64 constant functions followed by the 64
        // identity-coefficient ones, so h_2 = (a=1, b=0) has rank 64 =
        // 0b1000000; with an all-zeros tar the seven-bit rank is the only
        // nonzero content of the replacement slot, and its leading bit
        // lands on the top coefficient bit.
        assert_eq!(*packed.hash(2), HashFn::new(6, 32, 0));
        assert_eq!(packed.hash(1), tape.hash(1), "h_1 is untouched");
        assert_eq!(packed.tau, tape.tau);
        let restored = r_subroutine(&machine, &input, &packed, &params).unwrap();
        assert_eq!(restored, tape);
    }

    #[test]
    fn driver_reports_dont_know_when_bad_functions_overflow_the_index() {
        let machine = fork_machine();
        let input = bits(0, 1);
        let tape = fork_tape(8);
        let mut params = params_for(6, 8, 4096, 512);
        params.alpha = rat(3, 16);
        let run = f_subroutine_traced(
            &machine,
            &input,
            &tape,
            &params,
            DriverMode::General,
            &BigRational::zero(),
            &rat(1, 4),
        )
        .unwrap();
        assert_eq!(run.outcome, DriverOutcome::DontKnow);
        assert!(
            run.trace
                .iter()
                .any(|t| t.contains("128 bad functions") && t.contains("32-value index")),
            "trace should carry the overflow arithmetic: {:?}",
            run.trace
        );
    }

    #[test]
    fn driver_falls_back_to_always_reset_in_delta_zero_mode() {
        let machine = machines::longchain();
        let input = bits(0, 1);
        let tape = StructuredTape::zeroed(1, 6, 8).unwrap();
        let params = longchain_params();
        let zero = BigRational::zero();
        let eps = rat(1, 4);
        let general = f_subroutine(
            &machine,
            &input,
            &tape,
            &params,
            DriverMode::General,
            &zero,
            &eps,
        )
        .unwrap();
        assert_eq!(general, DriverOutcome::DontKnow, "the chain outruns the walk length");
        let run = f_subroutine_traced(
            &machine,
            &input,
            &tape,
            &params,
            DriverMode::PolytimeOrDelta0,
            &zero,
            &eps,
        )
        .unwrap();
        let DriverOutcome::Compressed(packed) = run.outcome else {
            panic!("expected an always-reset compression, trace: {:?}", run.trace);
        };
        assert!(run.trace.iter().any(|t| t.contains("always-reset")));
        assert_eq!(packed.tar.slice(0, 2).to_int(), 0b11);
        let restored = r_subroutine(&machine, &input, &packed, &params).unwrap();
        assert_eq!(restored, tape);
    }

    #[test]
    fn dispatcher_rejects_all_ones_and_all_zeros_tars() {
        let machine = machines::longchain();
        let input = bits(0, 1);
        let params = longchain_params();
        let mut ones = StructuredTape::zeroed(1, 6, 8).unwrap();
        ones.tar = Bits::ones(18);
        assert!(matches!(
            r_subroutine(&machine, &input, &ones, &params),
            Err(CompressError::UnknownTag(_))
        ));
        // With m = 6 the timestamp record does not fit in the 18-bit tar,
        // so an all-zeros tar fails the layout check before any decoding.
        let zeros = StructuredTape::zeroed(1, 6, 8).unwrap();
        assert!(matches!(
            r_subroutine(&machine, &input, &zeros, &params),
            Err(CompressError::ParamsInfeasible(_))
        ));
        // At m = 11 the layout is feasible; the all-zeros tar claims a
        // zero-step timestamp whose reverse walk never reaches a canonical
        // halt, which unmasks it as a forgery.
        let wide_zeros = StructuredTape::zeroed(1, 11, 8).unwrap();
        let wide_params = params_for(11, 8, 4096, 512);
        assert!(matches!(
            r_subroutine(&machine, &input, &wide_zeros, &wide_params),
            Err(CompressError::UnknownTag(_))
        ));
    }

    #[test]
    fn chunked_decider_stops_at_first_decisive_chunk() {
        let machine = machines::one_step();
        let input = bits(0, 1);
        let mut chunks = vec![
            StructuredTape::zeroed(2, 4, 2).unwrap(),
            StructuredTape::zeroed(2, 4, 2).unwrap(),
            StructuredTape::zeroed(2, 4, 2).unwrap(),
        ];
        let before = chunks.clone();
        let params = params_for(4, 2, 4096, 512);
        let report = chunked_decider(
            &machine,
            &input,
            &mut chunks,
            &params,
            DriverMode::General,
            &BigRational::zero(),
            &rat(1, 2),
        )
        .unwrap();
        assert_eq!(report.answer, 1);
        assert_eq!(report.decisive_chunk, Some(0));
        assert_eq!(report.compressed_chunks, 0);
        assert_eq!(report.dontknow_chunks, 0);
        assert_eq!(report.freed_bits_total, 0);
        assert!(!report.brute_forced);
        assert_eq!(chunks, before);
    }

    #[test]
    fn chunked_decider_brute_forces_when_all_chunks_compress() {
        let machine = machines::longchain();
        let input = bits(0, 1);
        let mut chunks = vec![
            StructuredTape::zeroed(1, 6, 8).unwrap(),
            StructuredTape::zeroed(1, 6, 8).unwrap(),
        ];
        let before = chunks.clone();
        let params = longchain_params();
        let report = chunked_decider(
            &machine,
            &input,
            &mut chunks,
            &params,
            DriverMode::PolytimeOrDelta0,
            &BigRational::zero(),
            &rat(1, 4),
        )
        .unwrap();
        assert_eq!(report.answer, 1, "the chain accepts its input");
        assert_eq!(report.decisive_chunk, None);
        assert_eq!(report.compressed_chunks, 2);
        assert_eq!(report.freed_bits_total, 2);
        assert!(report.brute_forced);
        assert_eq!(chunks, before, "restoration must be bit-for-bit");
    }

    #[test]
    fn chunked_decider_errors_when_nothing_decides_in_general_mode() {
        let machine = machines::longchain();
        let input = bits(0, 1);
        let mut chunks = vec![StructuredTape::zeroed(1, 6, 8).unwrap()];
        let before = chunks.clone();
        let params = longchain_params();
        let err = chunked_decider(
            &machine,
            &input,
            &mut chunks,
            &params,
            DriverMode::General,
            &BigRational::zero(),
            &rat(1, 4),
        )
        .unwrap_err();
        assert!(matches!(err, CompressError::AllChunksUndecidedInGeneralMode));
        assert_eq!(chunks, before);
    }

    #[test]
    fn error_vector_decider_finds_answers_within_the_error_ball() {
        let longchain = machines::longchain();
        let input0 = bits(0, 1);
        // Zero expected damage: the answer is found with a zero-width ball.
        assert_eq!(
            error_vector_decider(&longchain, &input0, bits(1, 1), &BigRational::zero()).unwrap(),
            Decision::Accept
        );
        let oneflip = machines::oneflip();
        let yes = bits(1, 1);
        let no = bits(0, 1);
        let tau = bits(0b01, 2);
        // One surviving flip: invisible at e = 0, found at e = 1/10.
        assert_eq!(
            error_vector_decider(&oneflip, &yes, tau, &BigRational::zero()).unwrap(),
            Decision::DontKnow
        );
        assert_eq!(
            error_vector_decider(&oneflip, &yes, tau, &rat(1, 10)).unwrap(),
            Decision::Accept
        );
        assert_eq!(
            error_vector_decider(&oneflip, &no, tau, &rat(1, 10)).unwrap(),
            Decision::Reject
        );
        assert!(matches!(
            error_vector_decider(&machines::coinflip(), &no, tau, &rat(1, 10)),
            Err(CompressError::NotDeterministic)
        ));
    }

    #[test]
    fn tree_size_gated_decider_walks_home() {
        let machine = machines::longchain();
        let input = bits(0, 1);
        assert_eq!(polytime_zptau(&machine, &input, bits(0, 1), 4096).unwrap(), Decision::Accept);
        assert_eq!(
            polytime_zptau(&machine, &input, bits(0, 1), 16).unwrap(),
            Decision::DontKnow,
            "a 16-node budget cannot hold the component"
        );
        let gate = gate_machine();
        assert_eq!(
            polytime_zptau(&gate, &input, bits(0b00, 2), 4096).unwrap(),
            Decision::DontKnow,
            "the gate machine halts don't-know on a zero scanned bit"
        );
        assert_eq!(polytime_zptau(&gate, &input, bits(0b10, 2), 4096).unwrap(), Decision::Accept);
        assert!(matches!(
            polytime_zptau(&machines::coinflip(), &input, bits(0b00, 2), 4096),
            Err(CompressError::NotDeterministic)
        ));
    }

    #[test]
    fn segment_retry_reports_exact_erasure_probability() {
        let gate = gate_machine();
        let input = bits(0, 1);
        // Decisive first segment: no fallback, one iteration used.
        let mut segments = vec![bits(0b10, 2), bits(0b00, 2)];
        let report = chunk_retry_decider(&gate, &input, &mut segments, 2, 4096).unwrap();
        assert_eq!(report.answer, Some(1));
        assert_eq!(report.used_iterations, 1);
        assert!(!report.fallback);
        assert_eq!(report.erasure_probability, rat(1, 4), "⊥ fraction 1/2, two draws");
        assert_eq!(segments, vec![bits(0b10, 2), bits(0b00, 2)]);
        // Both segments ⊥: the first is erased and rewritten decisively.
        let mut stuck = vec![bits(0b01, 2), bits(0b00, 2)];
        let report = chunk_retry_decider(&gate, &input, &mut stuck, 2, 4096).unwrap();
        assert_eq!(report.answer, Some(1));
        assert_eq!(report.used_iterations, 2);
        assert!(report.fallback);
        assert_eq!(report.erasure_probability, rat(1, 4));
        assert_eq!(stuck[0], bits(0b10, 2), "first decisive setting is left in place");
        assert_eq!(stuck[1], bits(0b00, 2), "later segments are never touched");
        // Bad argument shapes.
        assert!(matches!(
            chunk_retry_decider(&gate, &input, &mut stuck, 0, 4096),
            Err(CompressError::ParamsInfeasible(_))
        ));
        assert!(matches!(
            chunk_retry_decider(&gate, &input, &mut stuck, 3, 4096),
            Err(CompressError::ParamsInfeasible(_))
        ));
    }
}
