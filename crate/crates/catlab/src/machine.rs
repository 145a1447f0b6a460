//! Catalytic Turing machines: specs, configurations, single-step semantics.
//!
//! A machine owns four tapes: read-only binary input (the head may rest on a
//! virtual end-marker cell, which reads as 0), write-only output (modeled by
//! the halt kind), an `s`-bit work tape and a `c`-bit catalytic tape. Each
//! step consumes one coin bit when the machine is randomized; deterministic
//! machines consume none and must have identical transitions for both coins.
//!
//! Halting is canonical: the step that enters a halting state also moves all
//! heads to position 0 and stamps the work tape with a fixed per-kind pattern
//! (`111 0…`, `110 0…`, `10 0…`), so the accepting/rejecting/don't-know halt
//! configurations are uniquely determined by the catalytic contents.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::bits::{width_for, Bits};

pub type StateId = u16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MachineError {
    #[error("step applied to a halting configuration")]
    StepOnHalted,
    #[error("{tape} head moved out of bounds (to {to}, valid 0..={max})")]
    HeadOutOfBounds { tape: &'static str, to: i64, max: usize },
    #[error("no transition for state {state} on reads (in={inbit}, work={workbit}, cat={catbit}, coin={coin})")]
    MissingTransition { state: String, inbit: u8, workbit: u8, catbit: u8, coin: u8 },
    #[error("serialized configuration malformed: {0}")]
    Parse(String),
    #[error("machine text malformed at line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("configuration-space budget exceeded: {size} > {budget}")]
    BudgetExceeded { size: u128, budget: u128 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HaltKind {
    Accept,
    Reject,
    DontKnow,
}

impl fmt::Display for HaltKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HaltKind::Accept => write!(f, "accept"),
            HaltKind::Reject => write!(f, "reject"),
            HaltKind::DontKnow => write!(f, "dont-know"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Move {
    L,
    S,
    R,
}

impl Move {
    pub fn delta(self) -> i64 {
        match self {
            Move::L => -1,
            Move::S => 0,
            Move::R => 1,
        }
    }

    pub fn parse(tok: &str) -> Option<Move> {
        match tok {
            "L" => Some(Move::L),
            "S" => Some(Move::S),
            "R" => Some(Move::R),
            _ => None,
        }
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Move::L => write!(f, "L"),
            Move::S => write!(f, "S"),
            Move::R => write!(f, "R"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Transition {
    pub next: StateId,
    pub write_work: u8,
    pub write_cat: u8,
    pub mv_input: Move,
    pub mv_work: Move,
    pub mv_cat: Move,
}

/// Full machine snapshot: control state, three head positions, both tapes.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    pub state: StateId,
    pub input_head: u16,
    pub work_head: u16,
    pub cat_head: u16,
    pub work: Bits,
    pub cat: Bits,
}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "⟨q{} i{} w{} c{} work={} cat={}⟩",
            self.state, self.input_head, self.work_head, self.cat_head, self.work, self.cat
        )
    }
}

/// Finite control plus transition relation of a catalytic machine.
#[derive(Clone, PartialEq, Eq)]
pub struct MachineSpec {
    pub state_names: Vec<String>,
    pub start: StateId,
    pub accept: StateId,
    pub reject: StateId,
    pub dontknow: Option<StateId>,
    pub s: usize,
    pub c: usize,
    pub randomized: bool,
    /// Indexed by `row_index(state, inbit, workbit, catbit, coin)`.
    table: Vec<Option<Transition>>,
}

fn row_index(state: StateId, inbit: u8, workbit: u8, catbit: u8, coin: u8) -> usize {
    ((((state as usize * 2) + inbit as usize) * 2 + workbit as usize) * 2 + catbit as usize) * 2
        + coin as usize
}

impl MachineSpec {
    /// Creates an empty machine (no transition rows yet).
    pub fn new(
        state_names: Vec<String>,
        start: &str,
        accept: &str,
        reject: &str,
        dontknow: Option<&str>,
        s: usize,
        c: usize,
        randomized: bool,
    ) -> Result<Self, MachineError> {
        let fmt_err = |msg: String| MachineError::Format { line: 0, msg };
        if state_names.len() > StateId::MAX as usize {
            return Err(fmt_err(format!("too many states ({})", state_names.len())));
        }
        if s < 3 {
            return Err(fmt_err(format!("work tape must have s ≥ 3 (halt patterns need 3 bits), got {s}")));
        }
        if s > 64 || c > 64 || c == 0 {
            return Err(fmt_err(format!("tape lengths out of range: s={s}, c={c} (need 3 ≤ s ≤ 64, 1 ≤ c ≤ 64)")));
        }
        let mut seen = BTreeMap::new();
        for (i, n) in state_names.iter().enumerate() {
            if seen.insert(n.clone(), i).is_some() {
                return Err(fmt_err(format!("duplicate state name {n:?}")));
            }
        }
        let find = |name: &str| -> Result<StateId, MachineError> {
            seen.get(name)
                .map(|&i| i as StateId)
                .ok_or_else(|| fmt_err(format!("unknown state {name:?}")))
        };
        let start = find(start)?;
        let accept = find(accept)?;
        let reject = find(reject)?;
        let dontknow = dontknow.map(find).transpose()?;
        if accept == reject || Some(accept) == dontknow || Some(reject) == dontknow {
            return Err(fmt_err("accept/reject/dontknow states must be distinct".into()));
        }
        if start == accept || start == reject || Some(start) == dontknow {
            return Err(fmt_err("start state must be non-halting".into()));
        }
        let table = vec![None; state_names.len() * 16];
        Ok(MachineSpec { state_names, start, accept, reject, dontknow, s, c, randomized, table })
    }

    pub fn state_count(&self) -> usize {
        self.state_names.len()
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.state_names.iter().position(|n| n == name).map(|i| i as StateId)
    }

    pub fn state_name(&self, id: StateId) -> &str {
        &self.state_names[id as usize]
    }

    pub fn is_halting_state(&self, state: StateId) -> bool {
        state == self.accept || state == self.reject || Some(state) == self.dontknow
    }

    pub fn halt_kind_of(&self, state: StateId) -> Option<HaltKind> {
        if state == self.accept {
            Some(HaltKind::Accept)
        } else if state == self.reject {
            Some(HaltKind::Reject)
        } else if Some(state) == self.dontknow {
            Some(HaltKind::DontKnow)
        } else {
            None
        }
    }

    pub fn halt_state_of(&self, kind: HaltKind) -> Option<StateId> {
        match kind {
            HaltKind::Accept => Some(self.accept),
            HaltKind::Reject => Some(self.reject),
            HaltKind::DontKnow => self.dontknow,
        }
    }

    /// Adds a transition row. `coin: None` means both coins (identical row).
    pub fn add_row(
        &mut self,
        state: StateId,
        inbit: u8,
        workbit: u8,
        catbit: u8,
        coin: Option<u8>,
        t: Transition,
    ) -> Result<(), MachineError> {
        let fmt_err = |msg: String| MachineError::Format { line: 0, msg };
        if self.is_halting_state(state) {
            return Err(fmt_err(format!(
                "halting state {} cannot have outgoing transitions",
                self.state_name(state)
            )));
        }
        if t.next as usize >= self.state_count() {
            return Err(fmt_err("transition targets unknown state".into()));
        }
        let coins: &[u8] = match coin {
            Some(b) => std::slice::from_ref(match b {
                0 => &0,
                1 => &1,
                _ => return Err(fmt_err("coin must be 0, 1 or *".into())),
            }),
            None => &[0, 1],
        };
        for &cn in coins {
            let idx = row_index(state, inbit, workbit, catbit, cn);
            if self.table[idx].is_some() {
                return Err(fmt_err(format!(
                    "duplicate transition row for ({}, in={inbit}, work={workbit}, cat={catbit}, coin={cn})",
                    self.state_name(state)
                )));
            }
            self.table[idx] = Some(t);
        }
        Ok(())
    }

    pub fn transition(
        &self,
        state: StateId,
        inbit: u8,
        workbit: u8,
        catbit: u8,
        coin: u8,
    ) -> Option<&Transition> {
        self.table[row_index(state, inbit, workbit, catbit, coin)].as_ref()
    }

    /// The work-tape pattern stamped on each halt kind.
    pub fn halt_pattern(&self, kind: HaltKind) -> Bits {
        let mut w = Bits::zeros(self.s);
        match kind {
            HaltKind::Accept => {
                w.set(0, 1);
                w.set(1, 1);
                w.set(2, 1);
            }
            HaltKind::Reject => {
                w.set(0, 1);
                w.set(1, 1);
            }
            HaltKind::DontKnow => {
                w.set(0, 1);
            }
        }
        w
    }

    /// The canonical halting configuration for a halt kind and cat contents.
    pub fn canonical_halt(&self, kind: HaltKind, cat: Bits) -> Configuration {
        assert_eq!(cat.len(), self.c);
        Configuration {
            state: self.halt_state_of(kind).expect("machine lacks this halt kind"),
            input_head: 0,
            work_head: 0,
            cat_head: 0,
            work: self.halt_pattern(kind),
            cat,
        }
    }

    /// The start configuration on catalytic contents `tau`.
    pub fn start_configuration(&self, tau: Bits) -> Configuration {
        assert_eq!(tau.len(), self.c, "tau length must equal c");
        Configuration {
            state: self.start,
            input_head: 0,
            work_head: 0,
            cat_head: 0,
            work: Bits::zeros(self.s),
            cat: tau,
        }
    }

    pub fn is_halting(&self, conf: &Configuration) -> bool {
        self.is_halting_state(conf.state)
    }

    /// Whether `conf` satisfies the canonical-halt predicate.
    pub fn is_canonical_halt(&self, conf: &Configuration) -> bool {
        match self.halt_kind_of(conf.state) {
            None => false,
            Some(kind) => {
                conf.input_head == 0
                    && conf.work_head == 0
                    && conf.cat_head == 0
                    && conf.work == self.halt_pattern(kind)
            }
        }
    }

    /// Effective determinism: both coin branches identical everywhere.
    pub fn is_deterministic(&self) -> bool {
        for state in 0..self.state_count() as StateId {
            for inbit in 0..2 {
                for workbit in 0..2 {
                    for catbit in 0..2 {
                        if self.table[row_index(state, inbit, workbit, catbit, 0)]
                            != self.table[row_index(state, inbit, workbit, catbit, 1)]
                        {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// Total number of configurations for input length `n`.
    pub fn config_space_size(&self, n: usize) -> u128 {
        self.state_count() as u128
            * (n as u128 + 1)
            * self.s as u128
            * self.c as u128
            * (1u128 << self.s)
            * (1u128 << self.c)
    }

    /// Enumerates every configuration (budget-checked by the caller).
    pub fn all_configurations<'a>(&'a self, n: usize) -> impl Iterator<Item = Configuration> + 'a {
        let states = self.state_count() as StateId;
        let (s, c) = (self.s, self.c);
        (0..states).flat_map(move |state| {
            (0..=n as u16).flat_map(move |input_head| {
                (0..s as u16).flat_map(move |work_head| {
                    (0..c as u16).flat_map(move |cat_head| {
                        (0..(1u128 << s)).flat_map(move |w| {
                            (0..(1u128 << c)).map(move |cv| Configuration {
                                state,
                                input_head,
                                work_head,
                                cat_head,
                                work: Bits::from_int(w, s),
                                cat: Bits::from_int(cv, c),
                            })
                        })
                    })
                })
            })
        })
    }

    /// Enumerates the configurations that can actually occur: every
    /// non-halting combination, plus halting states only in canonical form
    /// (the step function stamps work and homes heads atomically, so no
    /// other halting configuration is real).
    pub fn live_configurations<'a>(
        &'a self,
        n: usize,
    ) -> impl Iterator<Item = Configuration> + 'a {
        self.all_configurations(n)
            .filter(|v| !self.is_halting(v) || self.is_canonical_halt(v))
    }
}

impl fmt::Debug for MachineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "MachineSpec({} states, s={}, c={}, randomized={})",
            self.state_count(),
            self.s,
            self.c,
            self.randomized
        )
    }
}

/// Executes one step. Reads the input bit under the head (the end-marker cell
/// at position `n` reads 0), applies the matching transition's writes and
/// moves, and — if the next state halts — normalizes to the canonical halt.
pub fn step(
    machine: &MachineSpec,
    input: &Bits,
    conf: &Configuration,
    coin: u8,
) -> Result<Configuration, MachineError> {
    if machine.is_halting(conf) {
        return Err(MachineError::StepOnHalted);
    }
    let n = input.len();
    let inbit = if (conf.input_head as usize) < n { input.get(conf.input_head as usize) } else { 0 };
    let workbit = conf.work.get(conf.work_head as usize);
    let catbit = conf.cat.get(conf.cat_head as usize);
    let t = machine
        .transition(conf.state, inbit, workbit, catbit, coin)
        .ok_or_else(|| MachineError::MissingTransition {
            state: machine.state_name(conf.state).to_string(),
            inbit,
            workbit,
            catbit,
            coin,
        })?;

    let moved = |tape: &'static str, pos: u16, mv: Move, max: usize| -> Result<u16, MachineError> {
        let to = pos as i64 + mv.delta();
        if to < 0 || to > max as i64 {
            return Err(MachineError::HeadOutOfBounds { tape, to, max });
        }
        Ok(to as u16)
    };

    let work = conf.work.with(conf.work_head as usize, t.write_work);
    let cat = conf.cat.with(conf.cat_head as usize, t.write_cat);
    let input_head = moved("input", conf.input_head, t.mv_input, n)?;
    let work_head = moved("work", conf.work_head, t.mv_work, machine.s - 1)?;
    let cat_head = moved("cat", conf.cat_head, t.mv_cat, machine.c - 1)?;

    if let Some(kind) = machine.halt_kind_of(t.next) {
        // Canonical halting normalization: heads home, work tape stamped.
        return Ok(machine.canonical_halt(kind, cat));
    }
    Ok(Configuration { state: t.next, input_head, work_head, cat_head, work, cat })
}

/// All outgoing labeled edges. Halting configurations have none; every other
/// configuration has exactly two entries (labels 0 and 1), whose targets
/// coincide for deterministic machines.
pub fn successors(
    machine: &MachineSpec,
    input: &Bits,
    conf: &Configuration,
) -> Result<Vec<(u8, Configuration)>, MachineError> {
    if machine.is_halting(conf) {
        return Ok(Vec::new());
    }
    Ok(vec![(0, step(machine, input, conf, 0)?), (1, step(machine, input, conf, 1)?)])
}

/// Outgoing labeled edges that step legally. Configurations whose step would
/// move a head out of bounds (possible only for state/head combinations that
/// no run from a start configuration ever reaches) are treated as dead: the
/// offending branch is simply absent. Branches with missing transition rows
/// are likewise dropped; totality is `validate`'s concern.
pub fn successors_lenient(
    machine: &MachineSpec,
    input: &Bits,
    conf: &Configuration,
) -> Vec<(u8, Configuration)> {
    if machine.is_halting(conf) {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(2);
    for coin in 0..2 {
        if let Ok(next) = step(machine, input, conf, coin) {
            out.push((coin, next));
        }
    }
    out
}

/// All incoming labeled edges, by bounded local inversion: enumerate candidate
/// prior states, head positions, overwritten bits and coins, and keep the
/// candidates whose forward step reproduces `conf` exactly. For halting
/// targets the normalization erased head positions and the work tape, so those
/// coordinates are enumerated in full.
pub fn predecessors(
    machine: &MachineSpec,
    input: &Bits,
    conf: &Configuration,
) -> Result<Vec<(u8, Configuration)>, MachineError> {
    let n = input.len();
    let mut found: Vec<(u8, Configuration)> = Vec::new();
    let try_candidate = |cand: Configuration, coin: u8, out: &mut Vec<(u8, Configuration)>| {
        if let Ok(next) = step(machine, input, &cand, coin) {
            if next == *conf {
                out.push((coin, cand));
            }
        }
    };

    if machine.is_halting(conf) {
        // Normalization hides prior heads and work tape: enumerate them all.
        for state in 0..machine.state_count() as StateId {
            if machine.is_halting_state(state) {
                continue;
            }
            for input_head in 0..=n as u16 {
                for work_head in 0..machine.s as u16 {
                    for cat_head in 0..machine.c as u16 {
                        for w in 0..(1u128 << machine.s) {
                            for old_cat in 0..2u8 {
                                let cand = Configuration {
                                    state,
                                    input_head,
                                    work_head,
                                    cat_head,
                                    work: Bits::from_int(w, machine.s),
                                    cat: conf.cat.with(cat_head as usize, old_cat),
                                };
                                for coin in 0..2 {
                                    try_candidate(cand, coin, &mut found);
                                }
                            }
                        }
                    }
                }
            }
        }
    } else {
        // Heads moved by at most one; tapes differ only at the prior head
        // positions, where the overwritten bit is free.
        for state in 0..machine.state_count() as StateId {
            if machine.is_halting_state(state) {
                continue;
            }
            for dih in -1i64..=1 {
                let ih = conf.input_head as i64 - dih;
                if ih < 0 || ih > n as i64 {
                    continue;
                }
                for dwh in -1i64..=1 {
                    let wh = conf.work_head as i64 - dwh;
                    if wh < 0 || wh >= machine.s as i64 {
                        continue;
                    }
                    for dch in -1i64..=1 {
                        let ch = conf.cat_head as i64 - dch;
                        if ch < 0 || ch >= machine.c as i64 {
                            continue;
                        }
                        for old_work in 0..2u8 {
                            for old_cat in 0..2u8 {
                                let cand = Configuration {
                                    state,
                                    input_head: ih as u16,
                                    work_head: wh as u16,
                                    cat_head: ch as u16,
                                    work: conf.work.with(wh as usize, old_work),
                                    cat: conf.cat.with(ch as usize, old_cat),
                                };
                                for coin in 0..2 {
                                    try_candidate(cand, coin, &mut found);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    let ctx = SerializeContext::new(machine, n);
    found.sort_by_key(|(label, cand)| (ctx.serialize(cand), *label));
    found.dedup();
    Ok(found)
}

/// Field widths for canonical serialization on a given input length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SerializeContext {
    pub n: usize,
    pub s: usize,
    pub c: usize,
    pub states: usize,
    pub w_state: usize,
    pub w_input: usize,
    pub w_work_head: usize,
    pub w_cat_head: usize,
}

impl SerializeContext {
    pub fn new(machine: &MachineSpec, n: usize) -> Self {
        SerializeContext {
            n,
            s: machine.s,
            c: machine.c,
            states: machine.state_count(),
            w_state: width_for(machine.state_count()),
            w_input: width_for(n + 1),
            w_work_head: width_for(machine.s),
            w_cat_head: width_for(machine.c),
        }
    }

    /// Total serialized width: state, heads, then both tapes.
    pub fn width(&self) -> usize {
        self.w_state + self.w_input + self.w_work_head + self.w_cat_head + self.s + self.c
    }

    /// Injective fixed-width encoding: state | input-head | work-head |
    /// cat-head | work | cat, each field big-endian.
    pub fn serialize(&self, conf: &Configuration) -> Bits {
        assert!(self.width() <= Bits::MAX_LEN, "serialized configuration exceeds 128 bits");
        let mut out = Bits::from_int(conf.state as u128, self.w_state);
        out = out.concat(Bits::from_int(conf.input_head as u128, self.w_input));
        out = out.concat(Bits::from_int(conf.work_head as u128, self.w_work_head));
        out = out.concat(Bits::from_int(conf.cat_head as u128, self.w_cat_head));
        out = out.concat(conf.work);
        out.concat(conf.cat)
    }

    pub fn parse(&self, bits: Bits) -> Result<Configuration, MachineError> {
        if bits.len() != self.width() {
            return Err(MachineError::Parse(format!(
                "expected {} bits, got {}",
                self.width(),
                bits.len()
            )));
        }
        let mut at = 0;
        let mut take = |w: usize| {
            let part = bits.slice(at, w);
            at += w;
            part
        };
        let state = take(self.w_state).to_int() as usize;
        let input_head = take(self.w_input).to_int() as u16;
        let work_head = take(self.w_work_head).to_int() as u16;
        let cat_head = take(self.w_cat_head).to_int() as u16;
        let work = take(self.s);
        let cat = take(self.c);
        if state >= self.states
            || input_head as usize > self.n
            || work_head as usize >= self.s
            || cat_head as usize >= self.c
        {
            return Err(MachineError::Parse("field out of range".into()));
        }
        Ok(Configuration {
            state: state as StateId,
            input_head,
            work_head,
            cat_head,
            work,
            cat,
        })
    }
}

// ── validation ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub totality_violations: Vec<String>,
    pub deterministic: bool,
    /// Rows whose two coin branches differ although randomized=false.
    pub coin_mismatches: Vec<String>,
    /// Max incident edges over the full configuration space (distinct
    /// neighbors; a both-labels edge counts once), when within budget.
    pub d_m: Option<usize>,
    pub config_space: u128,
    pub ok: bool,
}

impl ValidationReport {
    pub fn summary(&self) -> String {
        let mut lines = Vec::new();
        lines.push(format!("deterministic={}", self.deterministic));
        lines.push(format!("config-space={}", self.config_space));
        match self.d_m {
            Some(d) => lines.push(format!("d_M={d}")),
            None => lines.push("d_M=(config space over budget)".into()),
        }
        if self.totality_violations.is_empty() {
            lines.push("totality=ok".into());
        } else {
            for v in &self.totality_violations {
                lines.push(format!("totality-violation: {v}"));
            }
        }
        for v in &self.coin_mismatches {
            lines.push(format!("coin-mismatch: {v}"));
        }
        lines.push(format!("ok={}", self.ok));
        lines.join("\n")
    }
}

/// Structural validation plus an exhaustive degree sweep (when the
/// configuration space fits the budget) on the given input.
pub fn validate(machine: &MachineSpec, input: &Bits, budget: u128) -> ValidationReport {
    let mut totality_violations = Vec::new();
    let mut coin_mismatches = Vec::new();
    for state in 0..machine.state_count() as StateId {
        if machine.is_halting_state(state) {
            continue;
        }
        for inbit in 0..2u8 {
            for workbit in 0..2u8 {
                for catbit in 0..2u8 {
                    let r0 = machine.transition(state, inbit, workbit, catbit, 0);
                    let r1 = machine.transition(state, inbit, workbit, catbit, 1);
                    for (coin, row) in [(0, r0), (1, r1)] {
                        if row.is_none() {
                            totality_violations.push(format!(
                                "({}, in={inbit}, work={workbit}, cat={catbit}, coin={coin})",
                                machine.state_name(state)
                            ));
                        }
                    }
                    if !machine.randomized && r0 != r1 {
                        coin_mismatches.push(format!(
                            "({}, in={inbit}, work={workbit}, cat={catbit})",
                            machine.state_name(state)
                        ));
                    }
                }
            }
        }
    }

    let deterministic = machine.is_deterministic();
    let config_space = machine.config_space_size(input.len());
    let d_m = if totality_violations.is_empty() && config_space <= budget {
        Some(exhaustive_max_degree(machine, input))
    } else {
        None
    };

    let ok = totality_violations.is_empty() && coin_mismatches.is_empty();
    ValidationReport { totality_violations, deterministic, coin_mismatches, d_m, config_space, ok }
}

/// Max over all configurations of (#distinct successor targets + #distinct
/// predecessor sources); an edge labeled with both coins counts once.
fn exhaustive_max_degree(machine: &MachineSpec, input: &Bits) -> usize {
    use std::collections::HashMap;
    let mut indeg: HashMap<Configuration, std::collections::BTreeSet<Configuration>> =
        HashMap::new();
    let mut outdeg: HashMap<Configuration, usize> = HashMap::new();
    for conf in machine.all_configurations(input.len()) {
        let succ = successors_lenient(machine, input, &conf);
        let mut targets: Vec<Configuration> = succ.iter().map(|(_, t)| *t).collect();
        targets.sort_by_key(|t| SerializeContext::new(machine, input.len()).serialize(t));
        targets.dedup();
        outdeg.insert(conf, targets.len());
        for t in targets {
            indeg.entry(t).or_default().insert(conf);
        }
    }
    let mut best = 0;
    for conf in machine.all_configurations(input.len()) {
        let din = indeg.get(&conf).map_or(0, |s| s.len());
        let dout = outdeg.get(&conf).copied().unwrap_or(0);
        best = best.max(din + dout);
    }
    best
}

// ── machine text format ─────────────────────────────────────────────────────
//
// Line-oriented UTF-8. `#` starts a comment; blank lines are ignored.
// Header lines (order free, all before the first transition):
//   states=NAME,NAME,...   start=NAME   accept=NAME   reject=NAME
//   dontknow=NAME|-        s=INT        c=INT         randomized=true|false
// Transition lines:
//   state inbit workbit catbit coin -> state w c moveI moveW moveC
// with coin ∈ {0,1,*} (`*` = both coins share the row) and moves ∈ {L,S,R}.

pub fn parse_machine_text(text: &str) -> Result<MachineSpec, MachineError> {
    let mut headers: BTreeMap<String, String> = BTreeMap::new();
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.contains("->") {
            rows.push((lineno + 1, line.split_whitespace().map(str::to_string).collect()));
        } else if let Some((k, v)) = line.split_once('=') {
            if headers.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(MachineError::Format {
                    line: lineno + 1,
                    msg: format!("duplicate header {:?}", k.trim()),
                });
            }
        } else {
            return Err(MachineError::Format {
                line: lineno + 1,
                msg: format!("unrecognized line {line:?}"),
            });
        }
    }

    let req = |key: &str| -> Result<String, MachineError> {
        headers
            .get(key)
            .cloned()
            .ok_or_else(|| MachineError::Format { line: 0, msg: format!("missing header {key}=") })
    };
    let states: Vec<String> = req("states")?
        .split(',')
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .collect();
    let dontknow_raw = headers.get("dontknow").cloned().unwrap_or_else(|| "-".to_string());
    let dontknow = if dontknow_raw == "-" || dontknow_raw.is_empty() {
        None
    } else {
        Some(dontknow_raw)
    };
    let parse_usize = |key: &str, v: &str| -> Result<usize, MachineError> {
        v.parse().map_err(|_| MachineError::Format {
            line: 0,
            msg: format!("header {key}= expects an integer, got {v:?}"),
        })
    };
    let s = parse_usize("s", &req("s")?)?;
    let c = parse_usize("c", &req("c")?)?;
    let randomized = match req("randomized")?.as_str() {
        "true" => true,
        "false" => false,
        other => {
            return Err(MachineError::Format {
                line: 0,
                msg: format!("randomized= expects true or false, got {other:?}"),
            })
        }
    };

    let mut machine = MachineSpec::new(
        states,
        &req("start")?,
        &req("accept")?,
        &req("reject")?,
        dontknow.as_deref(),
        s,
        c,
        randomized,
    )?;

    for (line, toks) in rows {
        let err = |msg: String| MachineError::Format { line, msg };
        if toks.len() != 12 || toks[5] != "->" {
            return Err(err(
                "expected: state inbit workbit catbit coin -> state w c moveI moveW moveC".into(),
            ));
        }
        let state = machine
            .state_id(&toks[0])
            .ok_or_else(|| err(format!("unknown state {:?}", toks[0])))?;
        let bit = |tok: &str, what: &str| -> Result<u8, MachineError> {
            match tok {
                "0" => Ok(0),
                "1" => Ok(1),
                _ => Err(err(format!("{what} must be 0 or 1, got {tok:?}"))),
            }
        };
        let inbit = bit(&toks[1], "inbit")?;
        let workbit = bit(&toks[2], "workbit")?;
        let catbit = bit(&toks[3], "catbit")?;
        let coin = match toks[4].as_str() {
            "*" => None,
            "0" => Some(0),
            "1" => Some(1),
            other => return Err(err(format!("coin must be 0, 1 or *, got {other:?}"))),
        };
        let next = machine
            .state_id(&toks[6])
            .ok_or_else(|| err(format!("unknown state {:?}", toks[6])))?;
        let write_work = bit(&toks[7], "work write")?;
        let write_cat = bit(&toks[8], "cat write")?;
        let mv = |tok: &str, what: &str| -> Result<Move, MachineError> {
            Move::parse(tok).ok_or_else(|| err(format!("{what} must be L, S or R, got {tok:?}")))
        };
        let t = Transition {
            next,
            write_work,
            write_cat,
            mv_input: mv(&toks[9], "input move")?,
            mv_work: mv(&toks[10], "work move")?,
            mv_cat: mv(&toks[11], "cat move")?,
        };
        machine.add_row(state, inbit, workbit, catbit, coin, t).map_err(|e| match e {
            MachineError::Format { msg, .. } => MachineError::Format { line, msg },
            other => other,
        })?;
    }

    Ok(machine)
}

pub fn render_machine_text(machine: &MachineSpec) -> String {
    let mut out = String::new();
    out.push_str(&format!("states={}\n", machine.state_names.join(",")));
    out.push_str(&format!("start={}\n", machine.state_name(machine.start)));
    out.push_str(&format!("accept={}\n", machine.state_name(machine.accept)));
    out.push_str(&format!("reject={}\n", machine.state_name(machine.reject)));
    out.push_str(&format!(
        "dontknow={}\n",
        machine.dontknow.map_or("-".to_string(), |d| machine.state_name(d).to_string())
    ));
    out.push_str(&format!("s={}\n", machine.s));
    out.push_str(&format!("c={}\n", machine.c));
    out.push_str(&format!("randomized={}\n", machine.randomized));
    for state in 0..machine.state_count() as StateId {
        for inbit in 0..2u8 {
            for workbit in 0..2u8 {
                for catbit in 0..2u8 {
                    let r0 = machine.transition(state, inbit, workbit, catbit, 0);
                    let r1 = machine.transition(state, inbit, workbit, catbit, 1);
                    let mut emit = |coin: &str, t: &Transition| {
                        out.push_str(&format!(
                            "{} {} {} {} {} -> {} {} {} {} {} {}\n",
                            machine.state_name(state),
                            inbit,
                            workbit,
                            catbit,
                            coin,
                            machine.state_name(t.next),
                            t.write_work,
                            t.write_cat,
                            t.mv_input,
                            t.mv_work,
                            t.mv_cat
                        ));
                    };
                    match (r0, r1) {
                        (Some(a), Some(b)) if a == b => emit("*", a),
                        _ => {
                            if let Some(a) = r0 {
                                emit("0", a);
                            }
                            if let Some(b) = r1 {
                                emit("1", b);
                            }
                        }
                    }
                }
            }
        }
    }
    out
}
