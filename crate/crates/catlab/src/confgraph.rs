//! Configuration graphs: local tree traversal, layered graphs, y-trees.
//!
//! For a deterministic machine every undirected component of the
//! configuration graph that contains a halt is an in-tree whose unique sink
//! is that canonical halting configuration (each vertex has exactly one
//! outgoing edge, so components partition around their attractors). The
//! traversal subroutines here — [`next_step`], [`step_back`], [`count_size`]
//! — walk such a tree in cyclic pre-order using only local successor and
//! predecessor computations, never a materialized graph. Child order at a
//! vertex is fixed (predecessor vertices sorted by their canonical
//! serialization) so traversals are deterministic and testable.
//!
//! The layered graph replicates every configuration across levels `0..=L`
//! with edges descending one level per step; halting configurations carry a
//! both-labels self-descent edge. Fixing a bit string `y` keeps, at level
//! `i`, only the edges labeled with the i-th bit of `y` counted from the
//! end; the surviving components are trees ("y-trees") rooted at their
//! unique level-0 node, traversed by [`y_dfs_next`]/[`y_dfs_prev`].
//!
//! [`build_explicit_graph`] materializes the whole graph for desk-scale
//! machines; it is the independent reference the traversal code is tested
//! against, built purely from forward steps.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::bits::Bits;
use crate::machine::{
    predecessors, step, successors_lenient, Configuration, MachineError, MachineSpec,
    SerializeContext,
};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error("operation requires a deterministic machine")]
    NotDeterministic,
    #[error("walk exceeded the configuration-space bound; component is not a tree")]
    CycleDetected,
    #[error("layered node is already at level zero")]
    LevelZero,
    #[error("y-bit access failed: {0}")]
    YBits(String),
    #[error("configuration space {size} exceeds budget {budget}")]
    BudgetExceeded { size: u128, budget: u128 },
    #[error("graph structure inconsistent: {0}")]
    Inconsistent(String),
}

/// Result of a bounded size count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeCheck {
    AtMost(u64),
    Exceeds,
}

/// A configuration replicated at a layer of the layered graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LayeredNode {
    pub conf: Configuration,
    pub level: usize,
}

/// Bit-access callback for `y`: bits are addressed 1-indexed from the start,
/// so PRG-generated strings need never be materialized.
pub trait YBits {
    fn len(&self) -> usize;
    fn y_bit(&self, j: usize) -> Result<u8, String>;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl YBits for Bits {
    fn len(&self) -> usize {
        Bits::len(*self)
    }
    fn y_bit(&self, j: usize) -> Result<u8, String> {
        if j == 0 || j > Bits::len(*self) {
            return Err(format!("y index {j} out of range 1..={}", Bits::len(*self)));
        }
        Ok(self.get(j - 1))
    }
}

/// Adapter exposing a closure as a [`YBits`] supplier.
pub struct FnY<F> {
    pub len: usize,
    pub f: F,
}

impl<F: Fn(usize) -> Result<u8, String>> YBits for FnY<F> {
    fn len(&self) -> usize {
        self.len
    }
    fn y_bit(&self, j: usize) -> Result<u8, String> {
        if j == 0 || j > self.len {
            return Err(format!("y index {j} out of range 1..={}", self.len));
        }
        (self.f)(j)
    }
}

fn climb_budget(machine: &MachineSpec, input: &Bits) -> u64 {
    machine
        .config_space_size(input.len())
        .saturating_mul(2)
        .saturating_add(16)
        .min(u64::MAX as u128) as u64
}

/// Children of `v` in its component tree: predecessor vertices, sorted by
/// canonical serialization (a predecessor reached under both labels is one
/// child).
fn tree_children(
    machine: &MachineSpec,
    input: &Bits,
    v: &Configuration,
) -> Result<Vec<Configuration>, GraphError> {
    let preds = predecessors(machine, input, v)?;
    let mut kids: Vec<Configuration> = preds.into_iter().map(|(_, u)| u).collect();
    // predecessors() sorts by (serialization, label), so vertex duplicates
    // from both-label edges are adjacent.
    kids.dedup();
    Ok(kids)
}

/// Parent of `v` (its unique successor); `None` iff `v` halts (tree root).
fn tree_parent(
    machine: &MachineSpec,
    input: &Bits,
    v: &Configuration,
) -> Result<Option<Configuration>, GraphError> {
    if machine.is_halting(v) {
        return Ok(None);
    }
    Ok(Some(step(machine, input, v, 0)?))
}

/// Successor of `conf` in the cyclic pre-order traversal of its component
/// tree (root = the halting sink; pre-order descends first children, then
/// next siblings, wrapping from the last vertex back to the root). Uses only
/// local steps and bounded predecessor inversion.
pub fn next_step(
    machine: &MachineSpec,
    input: &Bits,
    conf: &Configuration,
) -> Result<Configuration, GraphError> {
    if !machine.is_deterministic() {
        return Err(GraphError::NotDeterministic);
    }
    let kids = tree_children(machine, input, conf)?;
    if let Some(first) = kids.first() {
        return Ok(*first);
    }
    let mut u = *conf;
    let mut guard = climb_budget(machine, input);
    loop {
        let Some(p) = tree_parent(machine, input, &u)? else {
            return Ok(u); // u is the root: wrap around the cycle.
        };
        let sibs = tree_children(machine, input, &p)?;
        let i = sibs
            .iter()
            .position(|s| *s == u)
            .ok_or_else(|| GraphError::Inconsistent("vertex missing from its parent's child list".into()))?;
        if i + 1 < sibs.len() {
            return Ok(sibs[i + 1]);
        }
        u = p;
        guard = guard.checked_sub(1).ok_or(GraphError::CycleDetected)?;
        if guard == 0 {
            return Err(GraphError::CycleDetected);
        }
    }
}

fn descend_last(
    machine: &MachineSpec,
    input: &Bits,
    mut u: Configuration,
) -> Result<Configuration, GraphError> {
    let mut guard = climb_budget(machine, input);
    loop {
        let kids = tree_children(machine, input, &u)?;
        match kids.last() {
            None => return Ok(u),
            Some(k) => u = *k,
        }
        guard = guard.checked_sub(1).ok_or(GraphError::CycleDetected)?;
        if guard == 0 {
            return Err(GraphError::CycleDetected);
        }
    }
}

/// Exact inverse of [`next_step`].
pub fn step_back(
    machine: &MachineSpec,
    input: &Bits,
    conf: &Configuration,
) -> Result<Configuration, GraphError> {
    if !machine.is_deterministic() {
        return Err(GraphError::NotDeterministic);
    }
    match tree_parent(machine, input, conf)? {
        None => descend_last(machine, input, *conf), // root: wrap to the last vertex
        Some(p) => {
            let sibs = tree_children(machine, input, &p)?;
            let i = sibs
                .iter()
                .position(|s| *s == *conf)
                .ok_or_else(|| GraphError::Inconsistent("vertex missing from its parent's child list".into()))?;
            if i == 0 {
                Ok(p)
            } else {
                descend_last(machine, input, sibs[i - 1])
            }
        }
    }
}

/// Counts the vertices of `conf`'s component tree by walking one full
/// pre-order lap. Returns `Exceeds` as soon as more than `s_bound` vertices
/// are seen. The walk is purely functional, so `conf` is untouched.
pub fn count_size(
    machine: &MachineSpec,
    input: &Bits,
    conf: &Configuration,
    s_bound: u64,
) -> Result<SizeCheck, GraphError> {
    if s_bound == 0 {
        return Ok(SizeCheck::Exceeds);
    }
    let mut w = next_step(machine, input, conf)?;
    let mut size: u64 = 1;
    while w != *conf {
        if size >= s_bound {
            return Ok(SizeCheck::Exceeds);
        }
        w = next_step(machine, input, &w)?;
        size += 1;
    }
    Ok(SizeCheck::AtMost(size))
}

// ── layered graph ───────────────────────────────────────────────────────────

/// Descends one level: halting configurations self-descend under either
/// label, others follow `step` with the given coin.
pub fn layered_successor(
    machine: &MachineSpec,
    input: &Bits,
    node: &LayeredNode,
    bit: u8,
) -> Result<LayeredNode, GraphError> {
    if node.level == 0 {
        return Err(GraphError::LevelZero);
    }
    let conf = if machine.is_halting(&node.conf) {
        node.conf
    } else {
        step(machine, input, &node.conf, bit)?
    };
    Ok(LayeredNode { conf, level: node.level - 1 })
}

/// The bit of `y` labeling the edges that leave `level`: the level-i edges
/// use the i-th bit of y counted from the end (level |y| consumes the first
/// bit, level 1 the last).
pub fn y_level_bit(y: &dyn YBits, level: usize) -> Result<u8, GraphError> {
    let j = y
        .len()
        .checked_add(1)
        .and_then(|v| v.checked_sub(level))
        .filter(|j| (1..=y.len()).contains(j))
        .ok_or_else(|| GraphError::YBits(format!("level {level} outside 1..={}", y.len())))?;
    y.y_bit(j).map_err(GraphError::YBits)
}

/// Down-edge target within the y-tree; `None` at level 0 or above |y|
/// (where nodes are isolated).
fn y_parent(
    machine: &MachineSpec,
    input: &Bits,
    y: &dyn YBits,
    node: &LayeredNode,
) -> Result<Option<LayeredNode>, GraphError> {
    if node.level == 0 || node.level > y.len() {
        return Ok(None);
    }
    let bit = y_level_bit(y, node.level)?;
    layered_successor(machine, input, node, bit).map(Some)
}

/// Children of `node` in the y-tree: level-(i+1) nodes whose kept edge lands
/// on it — predecessors under the level-(i+1) bit, plus the self-descent copy
/// when `node.conf` halts — sorted by canonical serialization.
fn y_children(
    machine: &MachineSpec,
    input: &Bits,
    y: &dyn YBits,
    node: &LayeredNode,
) -> Result<Vec<LayeredNode>, GraphError> {
    let up = node.level + 1;
    if up > y.len() {
        return Ok(Vec::new());
    }
    let b = y_level_bit(y, up)?;
    let mut kids: Vec<Configuration> = predecessors(machine, input, &node.conf)?
        .into_iter()
        .filter(|(label, _)| *label == b)
        .map(|(_, u)| u)
        .collect();
    if machine.is_halting(&node.conf) {
        kids.push(node.conf);
    }
    let ctx = SerializeContext::new(machine, input.len());
    kids.sort_by_key(|k| ctx.serialize(k));
    kids.dedup();
    Ok(kids.into_iter().map(|conf| LayeredNode { conf, level: up }).collect())
}

/// Successor in the cyclic pre-order traversal of the y-tree containing
/// `node` (root = its unique level-0 node). Nodes above |y| are isolated and
/// map to themselves.
pub fn y_dfs_next(
    machine: &MachineSpec,
    input: &Bits,
    node: &LayeredNode,
    y: &dyn YBits,
) -> Result<LayeredNode, GraphError> {
    if node.level > y.len() {
        return Ok(*node);
    }
    let kids = y_children(machine, input, y, node)?;
    if let Some(first) = kids.first() {
        return Ok(*first);
    }
    let mut u = *node;
    loop {
        let Some(p) = y_parent(machine, input, y, &u)? else {
            return Ok(u); // level-0 root: wrap.
        };
        let sibs = y_children(machine, input, y, &p)?;
        let i = sibs
            .iter()
            .position(|s| *s == u)
            .ok_or_else(|| GraphError::Inconsistent("y-node missing from its parent's child list".into()))?;
        if i + 1 < sibs.len() {
            return Ok(sibs[i + 1]);
        }
        u = p;
    }
}

/// Exact inverse of [`y_dfs_next`].
pub fn y_dfs_prev(
    machine: &MachineSpec,
    input: &Bits,
    node: &LayeredNode,
    y: &dyn YBits,
) -> Result<LayeredNode, GraphError> {
    if node.level > y.len() {
        return Ok(*node);
    }
    let descend = |mut u: LayeredNode| -> Result<LayeredNode, GraphError> {
        loop {
            let kids = y_children(machine, input, y, &u)?;
            match kids.last() {
                None => return Ok(u),
                Some(k) => u = *k,
            }
        }
    };
    match y_parent(machine, input, y, node)? {
        None => descend(*node),
        Some(p) => {
            let sibs = y_children(machine, input, y, &p)?;
            let i = sibs
                .iter()
                .position(|s| *s == *node)
                .ok_or_else(|| GraphError::Inconsistent("y-node missing from its parent's child list".into()))?;
            if i == 0 {
                Ok(p)
            } else {
                descend(sibs[i - 1])
            }
        }
    }
}

/// Size of the y-tree containing `node`, counted by one pre-order lap with
/// an `Exceeds` cutoff past `bound`.
pub fn y_dfs_size(
    machine: &MachineSpec,
    input: &Bits,
    node: &LayeredNode,
    y: &dyn YBits,
    bound: u64,
) -> Result<SizeCheck, GraphError> {
    if bound == 0 {
        return Ok(SizeCheck::Exceeds);
    }
    let mut w = y_dfs_next(machine, input, node, y)?;
    let mut size: u64 = 1;
    while w != *node {
        if size >= bound {
            return Ok(SizeCheck::Exceeds);
        }
        w = y_dfs_next(machine, input, &w, y)?;
        size += 1;
    }
    Ok(SizeCheck::AtMost(size))
}

// ── explicit materialization (oracle substrate) ─────────────────────────────

/// Fully materialized configuration graph, built from forward steps only.
pub struct ExplicitGraph {
    pub vertices: Vec<Configuration>,
    index: HashMap<Configuration, usize>,
    /// Serialization key per vertex, fixing all orderings.
    pub keys: Vec<Bits>,
    /// Outgoing labeled edges per vertex.
    pub out: Vec<Vec<(u8, usize)>>,
    /// Incoming labeled edges per vertex.
    pub incoming: Vec<Vec<(u8, usize)>>,
}

impl ExplicitGraph {
    fn from_vertices(
        machine: &MachineSpec,
        input: &Bits,
        vertices: Vec<Configuration>,
    ) -> Self {
        let ctx = SerializeContext::new(machine, input.len());
        let index: HashMap<Configuration, usize> =
            vertices.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let keys: Vec<Bits> = vertices.iter().map(|v| ctx.serialize(v)).collect();
        let mut out = vec![Vec::new(); vertices.len()];
        let mut incoming = vec![Vec::new(); vertices.len()];
        for (i, v) in vertices.iter().enumerate() {
            for (label, t) in successors_lenient(machine, input, v) {
                if let Some(&j) = index.get(&t) {
                    out[i].push((label, j));
                    incoming[j].push((label, i));
                }
            }
        }
        ExplicitGraph { vertices, index, keys, out, incoming }
    }

    pub fn index_of(&self, conf: &Configuration) -> Option<usize> {
        self.index.get(conf).copied()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Vertices with no outgoing edge.
    pub fn sinks(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.out[i].is_empty()).collect()
    }

    /// Number of edges, counting a both-labels pair between the same two
    /// vertices once.
    pub fn merged_edge_count(&self) -> usize {
        self.out
            .iter()
            .map(|es| {
                let mut ts: Vec<usize> = es.iter().map(|(_, t)| *t).collect();
                ts.sort_unstable();
                ts.dedup();
                ts.len()
            })
            .sum()
    }

    /// Undirected connected component of `conf`, as sorted vertex indices.
    pub fn component_of(&self, conf: &Configuration) -> Option<Vec<usize>> {
        let start = self.index_of(conf)?;
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut members = Vec::new();
        while let Some(i) = queue.pop_front() {
            members.push(i);
            for &(_, j) in self.out[i].iter().chain(self.incoming[i].iter()) {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        members.sort_unstable();
        Some(members)
    }

    /// All undirected components, each a sorted index list.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.len()];
        let mut out = Vec::new();
        for start in 0..self.len() {
            if seen[start] {
                continue;
            }
            let comp = self.component_of(&self.vertices[start]).expect("vertex present");
            for &i in &comp {
                seen[i] = true;
            }
            out.push(comp);
        }
        out
    }

    /// Children used by reference traversals: in-neighbor vertices of `i`,
    /// deduplicated and sorted by serialization key.
    pub fn children_sorted(&self, i: usize) -> Vec<usize> {
        let mut kids: Vec<usize> = self.incoming[i].iter().map(|(_, j)| *j).collect();
        kids.sort_by_key(|&j| self.keys[j]);
        kids.dedup();
        kids
    }

    /// Reference pre-order of the in-tree rooted at `root` (iterative; child
    /// order identical to the local traversal's).
    pub fn pre_order_from(&self, root: usize) -> Vec<Configuration> {
        let mut order = Vec::new();
        let mut stack = vec![root];
        while let Some(i) = stack.pop() {
            order.push(self.vertices[i]);
            let kids = self.children_sorted(i);
            for &k in kids.iter().rev() {
                stack.push(k);
            }
        }
        order
    }

    /// Summary counters for reports.
    pub fn stats(&self, machine: &MachineSpec) -> GraphStats {
        let sinks = self.sinks();
        let canonical_sinks = sinks
            .iter()
            .filter(|&&i| machine.is_canonical_halt(&self.vertices[i]))
            .count();
        let comps = self.components();
        let mut max_degree = 0;
        for i in 0..self.len() {
            let mut targets: Vec<usize> = self.out[i].iter().map(|(_, t)| *t).collect();
            targets.sort_unstable();
            targets.dedup();
            let mut sources: Vec<usize> = self.incoming[i].iter().map(|(_, s)| *s).collect();
            sources.sort_unstable();
            sources.dedup();
            max_degree = max_degree.max(targets.len() + sources.len());
        }
        GraphStats {
            vertices: self.len(),
            merged_edges: self.merged_edge_count(),
            sinks: sinks.len(),
            canonical_sinks,
            max_degree,
            components: comps.len(),
            largest_component: comps.iter().map(Vec::len).max().unwrap_or(0),
        }
    }

    /// Text edge list: `conf -(labels)-> conf` with both-label edges merged.
    pub fn render_edge_list(&self) -> String {
        let mut out = String::new();
        for i in 0..self.len() {
            let mut by_target: HashMap<usize, Vec<u8>> = HashMap::new();
            for &(label, t) in &self.out[i] {
                by_target.entry(t).or_default().push(label);
            }
            let mut targets: Vec<usize> = by_target.keys().copied().collect();
            targets.sort_by_key(|&t| self.keys[t]);
            for t in targets {
                let mut labels = by_target[&t].clone();
                labels.sort_unstable();
                let labels: String = labels.iter().map(|b| char::from(b'0' + b)).collect();
                out.push_str(&format!("{} -({labels})-> {}\n", self.keys[i], self.keys[t]));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphStats {
    pub vertices: usize,
    pub merged_edges: usize,
    pub sinks: usize,
    pub canonical_sinks: usize,
    pub max_degree: usize,
    pub components: usize,
    pub largest_component: usize,
}

impl fmt::Display for GraphStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "vertices={} edges={} sinks={} canonical-sinks={} max-degree={} components={} largest-component={}",
            self.vertices,
            self.merged_edges,
            self.sinks,
            self.canonical_sinks,
            self.max_degree,
            self.components,
            self.largest_component
        )
    }
}

/// Materializes the full configuration graph. Vertices are the live
/// configurations: all non-halting ones plus canonical halts (halting states
/// never occur in any other shape).
pub fn build_explicit_graph(
    machine: &MachineSpec,
    input: &Bits,
    budget: u128,
) -> Result<ExplicitGraph, GraphError> {
    let size = machine.config_space_size(input.len());
    if size > budget {
        return Err(GraphError::BudgetExceeded { size, budget });
    }
    let vertices: Vec<Configuration> = machine.live_configurations(input.len()).collect();
    Ok(ExplicitGraph::from_vertices(machine, input, vertices))
}

/// Materializes only the forward closure of `roots`.
pub fn build_reachable_graph(
    machine: &MachineSpec,
    input: &Bits,
    roots: &[Configuration],
    budget: u128,
) -> Result<ExplicitGraph, GraphError> {
    let mut seen: HashMap<Configuration, ()> = HashMap::new();
    let mut order: Vec<Configuration> = Vec::new();
    let mut queue: VecDeque<Configuration> = roots.iter().copied().collect();
    for r in roots {
        if seen.insert(*r, ()).is_none() {
            order.push(*r);
        }
    }
    while let Some(v) = queue.pop_front() {
        for (_, t) in successors_lenient(machine, input, &v) {
            if seen.insert(t, ()).is_none() {
                if order.len() as u128 >= budget {
                    return Err(GraphError::BudgetExceeded { size: budget + 1, budget });
                }
                order.push(t);
                queue.push_back(t);
            }
        }
    }
    Ok(ExplicitGraph::from_vertices(machine, input, order))
}

/// Reference y-tree: the vertex set of the tree containing `node`, computed
/// from the explicit graph's edges (never from local inversion). `None` when
/// `node.conf` is not a vertex of `graph`.
pub fn explicit_y_tree(
    graph: &ExplicitGraph,
    machine: &MachineSpec,
    node: &LayeredNode,
    y: &dyn YBits,
) -> Result<Option<Vec<LayeredNode>>, GraphError> {
    let Some(start_idx) = graph.index_of(&node.conf) else {
        return Ok(None);
    };
    if node.level > y.len() {
        return Ok(Some(vec![*node]));
    }
    // Descend to the level-0 root along kept edges.
    let mut cur = (start_idx, node.level);
    while cur.1 > 0 {
        let (i, level) = cur;
        let v = &graph.vertices[i];
        let next = if machine.is_halting(v) {
            i
        } else {
            let b = y_level_bit(y, level)?;
            match graph.out[i].iter().find(|(label, _)| *label == b) {
                Some(&(_, t)) => t,
                None => {
                    // Dead branch: the node's down-path leaves the graph, so
                    // its "tree" is whatever is connected above it only.
                    break;
                }
            }
        };
        cur = (next, level - 1);
    }
    let (root_idx, root_level) = cur;
    // Collect upward by BFS over kept in-edges (+ halting self-descent).
    let mut members = vec![LayeredNode { conf: graph.vertices[root_idx], level: root_level }];
    let mut frontier = vec![root_idx];
    let mut level = root_level;
    while level < y.len() {
        let b = y_level_bit(y, level + 1)?;
        let mut next_frontier = Vec::new();
        for &i in &frontier {
            let mut ups: Vec<usize> = graph.incoming[i]
                .iter()
                .filter(|(label, _)| *label == b)
                .map(|(_, j)| *j)
                .collect();
            if machine.is_halting(&graph.vertices[i]) {
                ups.push(i);
            }
            ups.sort_unstable();
            ups.dedup();
            next_frontier.extend(ups);
        }
        level += 1;
        for &j in &next_frontier {
            members.push(LayeredNode { conf: graph.vertices[j], level });
        }
        frontier = next_frontier;
    }
    members.sort();
    members.dedup();
    Ok(Some(members))
}

/// Reference pre-order of the y-tree rooted at a level-0 `root`, using the
/// explicit graph's edges with the same child ordering as the local walk.
pub fn explicit_y_tree_preorder(
    graph: &ExplicitGraph,
    machine: &MachineSpec,
    root: &LayeredNode,
    y: &dyn YBits,
) -> Result<Vec<LayeredNode>, GraphError> {
    if root.level != 0 {
        return Err(GraphError::Inconsistent("pre-order reference requires a level-0 root".into()));
    }
    let root_idx = graph
        .index_of(&root.conf)
        .ok_or_else(|| GraphError::Inconsistent("root not in graph".into()))?;
    let mut order = Vec::new();
    let mut stack = vec![(root_idx, 0usize)];
    while let Some((i, level)) = stack.pop() {
        order.push(LayeredNode { conf: graph.vertices[i], level });
        if level + 1 > y.len() {
            continue;
        }
        let b = y_level_bit(y, level + 1)?;
        let mut kids: Vec<usize> = graph.incoming[i]
            .iter()
            .filter(|(label, _)| *label == b)
            .map(|(_, j)| *j)
            .collect();
        if machine.is_halting(&graph.vertices[i]) {
            kids.push(i);
        }
        kids.sort_by_key(|&j| graph.keys[j]);
        kids.dedup();
        for &k in kids.iter().rev() {
            stack.push((k, level + 1));
        }
    }
    Ok(order)
}
