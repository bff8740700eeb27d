//! Receding-horizon planning over the lookahead queue.
//!
//! Every trial-based planner shares [`SearchTree`]; they differ only in how a
//! child is picked during descent and how the final root action is chosen:
//!
//! | planner          | selection                         | final action      |
//! |------------------|-----------------------------------|-------------------|
//! | `plan`           | PUCT with the shift-aware prior   | most visits       |
//! | `vanilla`        | PUCT with the raw prior           | most visits       |
//! | `random_plan`    | uniform                           | best path found   |
//! | `rtdp_plan`      | epsilon-greedy on edge means      | most visits       |
//!
//! [`bfs_plan`] enumerates every root-to-terminal path instead.

mod bfs;
mod tree;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actions::capped_actions;
use crate::critic::{Critic, PriorModel, UniformPrior};
use crate::distribution::{FamiliarityMode, FrequencyTable};
use crate::error::{Error, Result};
use crate::geometry::{volume_reward, BinState, ParcelDims, Placement};

pub use bfs::{bfs_action_values, bfs_plan, BfsOutcome};
pub use tree::{puct_score, EdgeStats, SearchTree, TreeCounters, Trial};

/// Search hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Lookahead horizon `N`: how many known parcels the planner sees.
    pub horizon: usize,
    /// Trial budget `n`.
    pub trials: usize,
    /// Exploration coefficient `c`.
    pub exploration: f64,
    /// Wasted-space penalty weight `lambda`.
    pub lambda: f64,
    /// Familiarity window `w`.
    pub window: usize,
    pub familiarity: FamiliarityMode,
    /// When set, trials run until this much wall-clock time has passed.
    pub time_budget: Option<Duration>,
    /// Keep only the first `k` candidates of each node.
    pub max_actions: Option<usize>,
    /// Exploration probability of the epsilon-greedy planner.
    pub epsilon: f64,
    /// Node limit for exhaustive enumeration.
    pub node_cap: usize,
    /// Reuse the executed child's subtree at the next decision.
    pub reuse_tree: bool,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            horizon: 4,
            trials: 100,
            exploration: 1.25,
            lambda: 0.5,
            window: 3,
            familiarity: FamiliarityMode::Raw,
            time_budget: None,
            max_actions: None,
            epsilon: 0.1,
            node_cap: 2_000_000,
            reuse_tree: true,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("lookahead horizon must be at least 1".into()));
        }
        if self.trials == 0 && self.time_budget.is_none() {
            return Err(Error::Config("trial budget must be at least 1".into()));
        }
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(Error::Config("lambda must be nonnegative".into()));
        }
        if self.exploration.is_nan() || self.exploration <= 0.0 {
            return Err(Error::Config("exploration coefficient must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config("epsilon must lie in [0, 1]".into()));
        }
        if self.max_actions == Some(0) {
            return Err(Error::Config("max-actions must be at least 1".into()));
        }
        Ok(())
    }
}

/// How the prior used during selection is derived from the prior model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorMode {
    /// Mix toward uniform by the familiarity of the local window.
    ShiftAware,
    /// Use the prior model's output unchanged.
    Raw,
}

/// Child selection during descent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SelectionRule {
    Puct,
    Uniform,
    EpsilonGreedy(f64),
}

/// Everything a tree needs besides its own state.
#[derive(Clone, Copy)]
pub struct SearchContext<'a> {
    pub cfg: &'a SearchConfig,
    pub critic: &'a dyn Critic,
    pub prior: &'a dyn PriorModel,
    pub table: &'a FrequencyTable,
    pub prior_mode: PriorMode,
    pub rule: SelectionRule,
}

impl SearchContext<'_> {
    /// Familiarity of the window starting at the head of `queue`.
    pub fn familiarity(&self, queue: &[ParcelDims]) -> f64 {
        self.table.familiarity(queue, self.cfg.window, self.cfg.familiarity)
    }
}

/// `P_SA = alpha * P + (1 - alpha) / |A|`, renormalized against rounding.
pub fn shift_aware_prior(prior: &[f64], alpha: f64) -> Vec<f64> {
    let n = prior.len() as f64;
    let alpha = alpha.clamp(0.0, 1.0);
    let mixed: Vec<f64> = prior.iter().map(|p| alpha * p + (1.0 - alpha) / n).collect();
    let total: f64 = mixed.iter().sum();
    if (total - 1.0).abs() > 1e-15 {
        mixed.into_iter().map(|p| p / total).collect()
    } else {
        mixed
    }
}

/// Shaped step reward `R_vol - lambda * R_p`.
pub fn shaped_reward(bin: &BinState, dims: ParcelDims, p: Placement, lambda: f64) -> f64 {
    volume_reward(dims, bin.spec()) - lambda * bin.wasted_space_penalty(dims, p)
}

/// Shaped value of executing `actions` for the leading `items`.
///
/// The path must end at a terminal: either every item is placed (the critic
/// scores the final state) or the next item has no feasible placement
/// (worth zero).
pub fn path_value(
    start: &BinState,
    items: &[ParcelDims],
    actions: &[Placement],
    lambda: f64,
    critic: &dyn Critic,
) -> Result<f64> {
    if actions.len() > items.len() {
        return Err(Error::Config("path has more actions than parcels".into()));
    }
    let mut bin = start.clone();
    let mut total = 0.0;
    for (&dims, &p) in items.iter().zip(actions) {
        total += shaped_reward(&bin, dims, p, lambda);
        bin = bin.place(dims, p)?;
    }
    if actions.len() == items.len() {
        return Ok(total + critic.value(&bin));
    }
    if !capped_actions(&bin, items[actions.len()], None).is_empty() {
        return Err(Error::Config("path stops before a terminal state".into()));
    }
    Ok(total)
}

/// What a planner returns for one decision.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanDiagnostics {
    pub root_edges: Vec<EdgeStats>,
    pub root_alpha: Option<f64>,
    pub counters: TreeCounters,
    pub best_path_value: f64,
    pub best_path: Vec<Placement>,
}

#[derive(Clone, Debug)]
pub struct PlanOutcome {
    pub action: Placement,
    pub diagnostics: PlanDiagnostics,
    pub elapsed: Duration,
}

/// How the final root action is picked from a searched tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum FinalRule {
    RobustChild,
    BestPath,
}

/// Runs trials on `tree` until the budget is spent.
pub fn search(tree: &mut SearchTree, ctx: &SearchContext<'_>) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let start = Instant::now();
    match ctx.cfg.time_budget {
        None => {
            for _ in 0..ctx.cfg.trials {
                tree.run_trial(ctx, &mut rng)?;
                if tree.root_is_full() {
                    break;
                }
            }
        }
        Some(budget) => loop {
            tree.run_trial(ctx, &mut rng)?;
            if tree.root_is_full() || start.elapsed() >= budget {
                break;
            }
        },
    }
    Ok(())
}

fn finish(tree: &SearchTree, rule: FinalRule, start: Instant) -> Result<PlanOutcome> {
    if tree.root_is_full() {
        return Err(Error::BinFull);
    }
    let (best_path_value, best_path) = tree.best_path();
    let action = match rule {
        FinalRule::RobustChild => tree.best_action(),
        FinalRule::BestPath => best_path.first().copied(),
    }
    .ok_or(Error::BinFull)?;
    Ok(PlanOutcome {
        action,
        diagnostics: PlanDiagnostics {
            root_edges: tree.root_stats(),
            root_alpha: tree.root_alpha(),
            counters: tree.counters().clone(),
            best_path_value,
            best_path: best_path.to_vec(),
        },
        elapsed: start.elapsed(),
    })
}

fn run_planner(bin: &BinState, queue: &[ParcelDims], ctx: &SearchContext<'_>, rule: FinalRule) -> Result<PlanOutcome> {
    let start = Instant::now();
    let mut tree = SearchTree::new(bin.clone(), queue.to_vec());
    search(&mut tree, ctx)?;
    finish(&tree, rule, start)
}

fn check_root(queue: &[ParcelDims], cfg: &SearchConfig) -> Result<()> {
    if queue.is_empty() {
        return Err(Error::Config("lookahead queue is empty".into()));
    }
    cfg.validate()
}

/// Shift-aware PUCT search with the shaped backup.
pub fn plan(
    bin: &BinState,
    queue: &[ParcelDims],
    cfg: &SearchConfig,
    critic: &dyn Critic,
    prior: &dyn PriorModel,
    table: &FrequencyTable,
) -> Result<PlanOutcome> {
    check_root(queue, cfg)?;
    let ctx = SearchContext {
        cfg,
        critic,
        prior,
        table,
        prior_mode: PriorMode::ShiftAware,
        rule: SelectionRule::Puct,
    };
    run_planner(bin, queue, &ctx, FinalRule::RobustChild)
}

/// PUCT with the raw prior: no familiarity mixing.
pub fn vanilla_mcts_plan(
    bin: &BinState,
    queue: &[ParcelDims],
    cfg: &SearchConfig,
    critic: &dyn Critic,
    prior: &dyn PriorModel,
    table: &FrequencyTable,
) -> Result<PlanOutcome> {
    check_root(queue, cfg)?;
    let ctx = SearchContext {
        cfg,
        critic,
        prior,
        table,
        prior_mode: PriorMode::Raw,
        rule: SelectionRule::Puct,
    };
    run_planner(bin, queue, &ctx, FinalRule::RobustChild)
}

/// Uniform random root-to-terminal walks; returns the first action of the best walk.
pub fn random_plan(
    bin: &BinState,
    queue: &[ParcelDims],
    cfg: &SearchConfig,
    critic: &dyn Critic,
    table: &FrequencyTable,
) -> Result<PlanOutcome> {
    check_root(queue, cfg)?;
    let ctx = SearchContext {
        cfg,
        critic,
        prior: &UniformPrior,
        table,
        prior_mode: PriorMode::Raw,
        rule: SelectionRule::Uniform,
    };
    run_planner(bin, queue, &ctx, FinalRule::BestPath)
}

/// Trial-based real-time dynamic programming with epsilon-greedy descent.
pub fn rtdp_plan(
    bin: &BinState,
    queue: &[ParcelDims],
    cfg: &SearchConfig,
    critic: &dyn Critic,
    table: &FrequencyTable,
) -> Result<PlanOutcome> {
    check_root(queue, cfg)?;
    let ctx = SearchContext {
        cfg,
        critic,
        prior: &UniformPrior,
        table,
        prior_mode: PriorMode::Raw,
        rule: SelectionRule::EpsilonGreedy(cfg.epsilon),
    };
    run_planner(bin, queue, &ctx, FinalRule::RobustChild)
}

/// Named search planners.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlannerKind {
    /// Shift-aware PUCT with the wasted-space penalty.
    Mpc,
    /// As `Mpc` with `lambda = 0` in the backup.
    MpcNoWsp,
    /// As `Mpc` with the raw prior.
    MpcNoSapuct,
    Bfs,
    Random,
    Rtdp,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 6] = [
        PlannerKind::Mpc,
        PlannerKind::MpcNoWsp,
        PlannerKind::MpcNoSapuct,
        PlannerKind::Bfs,
        PlannerKind::Random,
        PlannerKind::Rtdp,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PlannerKind::Mpc => "mpc",
            PlannerKind::MpcNoWsp => "mpc-no-wsp",
            PlannerKind::MpcNoSapuct => "mpc-no-sapuct",
            PlannerKind::Bfs => "bfs",
            PlannerKind::Random => "random",
            PlannerKind::Rtdp => "rtdp",
        }
    }

    /// Selection and prior handling, when the planner is trial based.
    fn trial_setup(&self, cfg: &SearchConfig) -> Option<(PriorMode, SelectionRule, FinalRule)> {
        match self {
            PlannerKind::Mpc | PlannerKind::MpcNoWsp => {
                Some((PriorMode::ShiftAware, SelectionRule::Puct, FinalRule::RobustChild))
            }
            PlannerKind::MpcNoSapuct => Some((PriorMode::Raw, SelectionRule::Puct, FinalRule::RobustChild)),
            PlannerKind::Random => Some((PriorMode::Raw, SelectionRule::Uniform, FinalRule::BestPath)),
            PlannerKind::Rtdp => Some((
                PriorMode::Raw,
                SelectionRule::EpsilonGreedy(cfg.epsilon),
                FinalRule::RobustChild,
            )),
            PlannerKind::Bfs => None,
        }
    }

    /// The configuration this planner actually runs with.
    pub fn effective_config(&self, cfg: &SearchConfig) -> SearchConfig {
        let mut cfg = cfg.clone();
        if *self == PlannerKind::MpcNoWsp {
            cfg.lambda = 0.0;
        }
        cfg
    }

    fn uses_prior(&self) -> bool {
        matches!(
            self,
            PlannerKind::Mpc | PlannerKind::MpcNoWsp | PlannerKind::MpcNoSapuct
        )
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlannerKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownName {
                kind: "planner",
                name: s.into(),
            })
    }
}

/// A stateful planner that keeps its tree between consecutive decisions.
pub struct RecedingPlanner<'a> {
    kind: PlannerKind,
    cfg: SearchConfig,
    critic: &'a dyn Critic,
    prior: &'a dyn PriorModel,
    table: &'a FrequencyTable,
    cached: Option<(SearchTree, Placement)>,
}

impl<'a> RecedingPlanner<'a> {
    pub fn new(
        kind: PlannerKind,
        cfg: &SearchConfig,
        critic: &'a dyn Critic,
        prior: &'a dyn PriorModel,
        table: &'a FrequencyTable,
    ) -> Self {
        Self {
            kind,
            cfg: kind.effective_config(cfg),
            critic,
            prior,
            table,
            cached: None,
        }
    }

    pub fn kind(&self) -> PlannerKind {
        self.kind
    }

    /// Picks the placement for `queue[0]`.
    pub fn decide(&mut self, bin: &BinState, queue: &[ParcelDims]) -> Result<PlanOutcome> {
        check_root(queue, &self.cfg)?;
        let queue = &queue[..queue.len().min(self.cfg.horizon)];
        if self.kind == PlannerKind::Bfs {
            let start = Instant::now();
            let out = bfs_plan(bin, queue, &self.cfg, self.critic)?;
            return Ok(PlanOutcome {
                action: out.action,
                diagnostics: PlanDiagnostics {
                    root_edges: Vec::new(),
                    root_alpha: None,
                    counters: TreeCounters::default(),
                    best_path_value: out.value,
                    best_path: out.path,
                },
                elapsed: start.elapsed(),
            });
        }
        let (prior_mode, rule, final_rule) = self.kind.trial_setup(&self.cfg).expect("trial-based planner");
        let start = Instant::now();
        let cfg = self.cfg.clone();
        let ctx = SearchContext {
            cfg: &cfg,
            critic: self.critic,
            prior: if self.kind.uses_prior() {
                self.prior
            } else {
                &UniformPrior
            },
            table: self.table,
            prior_mode,
            rule,
        };
        let cached = self.cached.take().filter(|_| cfg.reuse_tree);
        let mut tree = starting_tree(cached, bin, queue, &ctx)?;
        search(&mut tree, &ctx)?;
        let outcome = finish(&tree, final_rule, start)?;
        if cfg.reuse_tree {
            self.cached = Some((tree, outcome.action));
        }
        Ok(outcome)
    }
}

/// Tree for a decision, reusing the previous subtree when it matches.
fn starting_tree(
    cached: Option<(SearchTree, Placement)>,
    bin: &BinState,
    queue: &[ParcelDims],
    ctx: &SearchContext<'_>,
) -> Result<SearchTree> {
    if let Some((tree, executed)) = cached {
        let shifted = &tree.queue()[1..];
        let matches_queue =
            queue.len() >= shifted.len() && queue.len() <= shifted.len() + 1 && &queue[..shifted.len()] == shifted;
        if matches_queue {
            let appended = queue.get(shifted.len()).copied();
            let reused = tree.reuse_subtree(executed, appended, ctx)?;
            if reused.root_bin() == bin {
                return Ok(reused);
            }
        }
    }
    Ok(SearchTree::new(bin.clone(), queue.to_vec()))
}
