//! Arena-backed lookahead tree shared by every trial-based planner.
//!
//! Node `k` places `queue[k]`; a node at depth `queue.len()` is a horizon
//! leaf and is scored by the critic. A node whose parcel has no feasible
//! placement is a full-bin terminal worth zero. Every trial walks from the
//! root to one of those two kinds of terminal, expanding nodes on the way,
//! and backs the shaped path value up every edge it crossed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::actions::capped_actions;
use crate::error::{Error, Result};
use crate::geometry::{volume_reward, BinState, ParcelDims, Placement};

use super::{shift_aware_prior, PriorMode, SearchContext, SelectionRule};

pub(crate) type NodeId = usize;

#[derive(Clone, Debug)]
pub(crate) struct Edge {
    pub action: Placement,
    /// Prior from the prior model, before any shift-aware mixing.
    pub raw_prior: f64,
    /// Prior used by the selection rule.
    pub prior: f64,
    /// Shaped one-step reward `R_vol - lambda * R_p`.
    pub reward: f64,
    pub visits: u64,
    pub total: f64,
    pub child: Option<NodeId>,
}

impl Edge {
    pub fn q(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.total / self.visits as f64
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Expansion {
    Pending,
    Full,
    Children(Vec<Edge>),
}

#[derive(Clone, Debug)]
pub(crate) struct Node {
    pub bin: BinState,
    pub depth: usize,
    /// Completed backups through this node (plus one at the root).
    pub visits: u64,
    pub expansion: Expansion,
    pub alpha: Option<f64>,
    pub leaf_value: Option<f64>,
}

impl Node {
    fn new(bin: BinState, depth: usize) -> Self {
        Self {
            bin,
            depth,
            visits: 0,
            expansion: Expansion::Pending,
            alpha: None,
            leaf_value: None,
        }
    }

    pub fn edges(&self) -> &[Edge] {
        match &self.expansion {
            Expansion::Children(e) => e,
            _ => &[],
        }
    }
}

/// Per-root-action statistics reported after a search.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeStats {
    pub action: Placement,
    pub visits: u64,
    pub q: f64,
    pub prior: f64,
}

/// Counters accumulated over the lifetime of a tree.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TreeCounters {
    pub trials: usize,
    pub expansions: usize,
    pub critic_calls: usize,
    /// Largest number of expansions performed by a single trial.
    pub max_expansions_per_trial: usize,
    pub alphas: Vec<f64>,
}

/// Search tree over a fixed lookahead queue.
#[derive(Clone, Debug)]
pub struct SearchTree {
    queue: Vec<ParcelDims>,
    nodes: Vec<Node>,
    counters: TreeCounters,
    best_value: f64,
    best_path: Vec<Placement>,
}

/// Outcome of one root-to-terminal trial.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub actions: Vec<Placement>,
    pub value: f64,
}

impl SearchTree {
    pub fn new(bin: BinState, queue: Vec<ParcelDims>) -> Self {
        let mut root = Node::new(bin, 0);
        root.visits = 1;
        Self {
            queue,
            nodes: vec![root],
            counters: TreeCounters::default(),
            best_value: f64::NEG_INFINITY,
            best_path: Vec::new(),
        }
    }

    pub fn queue(&self) -> &[ParcelDims] {
        &self.queue
    }

    pub fn root_bin(&self) -> &BinState {
        &self.nodes[0].bin
    }

    pub fn counters(&self) -> &TreeCounters {
        &self.counters
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Best shaped path value seen so far and its action sequence.
    pub fn best_path(&self) -> (f64, &[Placement]) {
        (self.best_value, &self.best_path)
    }

    #[cfg(test)]
    pub(crate) fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    #[cfg(test)]
    pub(crate) fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root_alpha(&self) -> Option<f64> {
        self.nodes[0].alpha
    }

    pub fn root_stats(&self) -> Vec<EdgeStats> {
        edge_stats(&self.nodes[0])
    }

    /// Statistics of the child reached from the root by `action`, if it exists.
    pub fn child_stats(&self, action: Placement) -> Option<Vec<EdgeStats>> {
        let edge = self.nodes[0].edges().iter().find(|e| e.action == action)?;
        edge.child.map(|c| edge_stats(&self.nodes[c]))
    }

    /// Whether the root has been expanded and has no feasible action.
    pub fn root_is_full(&self) -> bool {
        matches!(self.nodes[0].expansion, Expansion::Full)
    }

    /// Robust child: most visits, then highest mean value, then canonical order.
    pub fn best_action(&self) -> Option<Placement> {
        robust_child(self.nodes[0].edges())
    }

    /// Runs one trial and backs up its value.
    pub fn run_trial(&mut self, ctx: &SearchContext<'_>, rng: &mut ChaCha8Rng) -> Result<Trial> {
        let mut current = 0;
        let mut path: Vec<(NodeId, usize)> = Vec::with_capacity(self.queue.len());
        let mut reward = 0.0;
        let mut expansions = 0;
        let terminal_value = loop {
            let node = &self.nodes[current];
            if node.depth == self.queue.len() {
                break self.leaf_value(current, ctx);
            }
            if matches!(node.expansion, Expansion::Pending) {
                self.expand(current, ctx)?;
                expansions += 1;
            }
            let edges = match &self.nodes[current].expansion {
                Expansion::Children(edges) => edges,
                Expansion::Full => break 0.0,
                Expansion::Pending => unreachable!("expanded above"),
            };
            let i = select_edge(edges, self.nodes[current].visits, ctx.rule, ctx.cfg.exploration, rng);
            reward += edges[i].reward;
            path.push((current, i));
            current = self.child(current, i)?;
        };
        let value = reward + terminal_value;

        self.nodes[0].visits += 1;
        for &(id, i) in &path {
            let child = {
                let Expansion::Children(edges) = &mut self.nodes[id].expansion else {
                    unreachable!("path nodes are expanded")
                };
                let e = &mut edges[i];
                e.visits += 1;
                e.total += value;
                e.child.expect("traversed edges have children")
            };
            self.nodes[child].visits += 1;
        }

        let actions: Vec<Placement> = path.iter().map(|&(id, i)| self.nodes[id].edges()[i].action).collect();
        if value > self.best_value {
            self.best_value = value;
            self.best_path = actions.clone();
        }
        self.counters.trials += 1;
        self.counters.max_expansions_per_trial = self.counters.max_expansions_per_trial.max(expansions);
        Ok(Trial { actions, value })
    }

    fn leaf_value(&mut self, id: NodeId, ctx: &SearchContext<'_>) -> f64 {
        if let Some(v) = self.nodes[id].leaf_value {
            return v;
        }
        let v = ctx.critic.value(&self.nodes[id].bin);
        self.counters.critic_calls += 1;
        self.nodes[id].leaf_value = Some(v);
        v
    }

    fn child(&mut self, parent: NodeId, edge: usize) -> Result<NodeId> {
        if let Some(c) = self.nodes[parent].edges()[edge].child {
            return Ok(c);
        }
        let node = &self.nodes[parent];
        let action = node.edges()[edge].action;
        let depth = node.depth;
        let bin = node.bin.place(self.queue[depth], action)?;
        let id = self.nodes.len();
        self.nodes.push(Node::new(bin, depth + 1));
        if let Expansion::Children(edges) = &mut self.nodes[parent].expansion {
            edges[edge].child = Some(id);
        }
        Ok(id)
    }

    /// Creates the edges of a pending node, or marks it full.
    pub(crate) fn expand(&mut self, id: NodeId, ctx: &SearchContext<'_>) -> Result<()> {
        let node = &self.nodes[id];
        if !matches!(node.expansion, Expansion::Pending) {
            return Err(Error::AlreadyExpanded);
        }
        let dims = self.queue[node.depth];
        let actions = capped_actions(&node.bin, dims, ctx.cfg.max_actions);
        self.counters.expansions += 1;
        if actions.is_empty() {
            self.nodes[id].expansion = Expansion::Full;
            return Ok(());
        }
        let raw = ctx.prior.prior(&node.bin, dims, &actions)?;
        let alpha = ctx.familiarity(&self.queue[node.depth..]);
        let mixed = mix(&raw, alpha, ctx.prior_mode);
        let spec = *node.bin.spec();
        let edges = actions
            .iter()
            .zip(raw.iter().zip(&mixed))
            .map(|(&action, (&raw_prior, &prior))| Edge {
                action,
                raw_prior,
                prior,
                reward: volume_reward(dims, &spec) - ctx.cfg.lambda * node.bin.wasted_space_penalty(dims, action),
                visits: 0,
                total: 0.0,
                child: None,
            })
            .collect();
        self.counters.alphas.push(alpha);
        let node = &mut self.nodes[id];
        node.alpha = Some(alpha);
        node.expansion = Expansion::Children(edges);
        Ok(())
    }

    /// Makes the subtree under the executed root action the new root and
    /// appends `new_parcel` (if any) to the lookahead queue.
    ///
    /// Visit counts and values are kept as they are. Expanded nodes whose
    /// familiarity window now reaches the appended parcel get their alpha
    /// and mixed priors recomputed.
    pub fn reuse_subtree(
        &self,
        executed: Placement,
        new_parcel: Option<ParcelDims>,
        ctx: &SearchContext<'_>,
    ) -> Result<SearchTree> {
        let root = &self.nodes[0];
        let edge = root
            .edges()
            .iter()
            .find(|e| e.action == executed)
            .ok_or_else(|| Error::NotARootChild(format!("{executed:?}")))?;
        let mut queue = self.queue[1..].to_vec();
        queue.extend(new_parcel);

        let Some(child) = edge.child else {
            let bin = root.bin.place(self.queue[0], executed)?;
            return Ok(SearchTree::new(bin, queue));
        };

        // Copy the subtree into a fresh arena in DFS order.
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut order = vec![child];
        let mut nodes = Vec::new();
        while let Some(old) = order.pop() {
            remap[old] = nodes.len();
            let mut n = self.nodes[old].clone();
            n.depth -= 1;
            nodes.push(n);
            for e in self.nodes[old].edges().iter().rev() {
                if let Some(c) = e.child {
                    order.push(c);
                }
            }
        }
        for n in &mut nodes {
            if let Expansion::Children(edges) = &mut n.expansion {
                for e in edges {
                    e.child = e.child.map(|c| remap[c]);
                }
            }
        }
        nodes[0].visits += 1;

        let horizon = queue.len();
        if new_parcel.is_some() {
            let window = ctx.cfg.window.max(1);
            let first_touched = horizon.saturating_sub(window);
            for n in &mut nodes {
                if n.depth < horizon {
                    n.leaf_value = None;
                }
                if n.depth < first_touched {
                    continue;
                }
                if let Expansion::Children(edges) = &mut n.expansion {
                    let alpha = ctx.familiarity(&queue[n.depth..]);
                    let raw: Vec<f64> = edges.iter().map(|e| e.raw_prior).collect();
                    for (e, p) in edges.iter_mut().zip(mix(&raw, alpha, ctx.prior_mode)) {
                        e.prior = p;
                    }
                    n.alpha = Some(alpha);
                }
            }
        }

        Ok(SearchTree {
            queue,
            nodes,
            counters: TreeCounters::default(),
            best_value: f64::NEG_INFINITY,
            best_path: Vec::new(),
        })
    }
}

fn mix(raw: &[f64], alpha: f64, mode: PriorMode) -> Vec<f64> {
    match mode {
        PriorMode::ShiftAware => shift_aware_prior(raw, alpha),
        PriorMode::Raw => raw.to_vec(),
    }
}

fn edge_stats(node: &Node) -> Vec<EdgeStats> {
    node.edges()
        .iter()
        .map(|e| EdgeStats {
            action: e.action,
            visits: e.visits,
            q: e.q(),
            prior: e.prior,
        })
        .collect()
}

pub(crate) fn robust_child(edges: &[Edge]) -> Option<Placement> {
    let mut best: Option<&Edge> = None;
    for e in edges {
        let better = match best {
            None => true,
            Some(b) => e.visits > b.visits || (e.visits == b.visits && e.q() > b.q()),
        };
        if better {
            best = Some(e);
        }
    }
    best.map(|e| e.action)
}

/// PUCT score `Q + c * P * sqrt(N(s)) / (1 + N(s, a))`.
pub fn puct_score(q: f64, prior: f64, parent_visits: u64, visits: u64, c: f64) -> f64 {
    q + c * prior * (parent_visits as f64).sqrt() / (1.0 + visits as f64)
}

/// Index of the PUCT argmax. Ties go to the higher prior, then the earlier edge.
pub(crate) fn select_puct(edges: &[Edge], parent_visits: u64, c: f64) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, e) in edges.iter().enumerate() {
        let s = puct_score(e.q(), e.prior, parent_visits, e.visits, c);
        if s > best_score || (s == best_score && e.prior > edges[best].prior) {
            best = i;
            best_score = s;
        }
    }
    best
}

fn select_edge(edges: &[Edge], parent_visits: u64, rule: SelectionRule, c: f64, rng: &mut ChaCha8Rng) -> usize {
    match rule {
        SelectionRule::Puct => select_puct(edges, parent_visits, c),
        SelectionRule::Uniform => rng.gen_range(0..edges.len()),
        SelectionRule::EpsilonGreedy(eps) => {
            let explore = eps >= 1.0 || (eps > 0.0 && rng.gen::<f64>() < eps);
            if explore {
                rng.gen_range(0..edges.len())
            } else {
                let mut best = 0;
                for (i, e) in edges.iter().enumerate().skip(1) {
                    if e.q() > edges[best].q() {
                        best = i;
                    }
                }
                best
            }
        }
    }
}
