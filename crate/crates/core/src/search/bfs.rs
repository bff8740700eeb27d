//! Exhaustive enumeration of every root-to-terminal path.

use crate::actions::capped_actions;
use crate::critic::Critic;
use crate::error::{Error, Result};
use crate::geometry::{BinState, ParcelDims, Placement};

use super::{shaped_reward, SearchConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct BfsOutcome {
    pub action: Placement,
    pub value: f64,
    pub path: Vec<Placement>,
    pub nodes: usize,
}

struct Enumerator<'a> {
    queue: &'a [ParcelDims],
    cfg: &'a SearchConfig,
    critic: &'a dyn Critic,
    nodes: usize,
}

impl Enumerator<'_> {
    /// Best value below `bin` at `depth` and the action sequence achieving it.
    /// Ties keep the lexicographically first sequence in canonical action order.
    fn best(&mut self, bin: &BinState, depth: usize) -> Result<(f64, Vec<Placement>)> {
        self.nodes += 1;
        if self.nodes > self.cfg.node_cap {
            return Err(Error::Budget(format!(
                "exhaustive search exceeded {} nodes",
                self.cfg.node_cap
            )));
        }
        if depth == self.queue.len() {
            return Ok((self.critic.value(bin), Vec::new()));
        }
        let dims = self.queue[depth];
        let actions = capped_actions(bin, dims, self.cfg.max_actions);
        let mut best: Option<(f64, Vec<Placement>)> = None;
        for a in actions {
            let r = shaped_reward(bin, dims, a, self.cfg.lambda);
            let next = bin.place(dims, a)?;
            let (v, mut rest) = self.best(&next, depth + 1)?;
            let total = r + v;
            if best.as_ref().is_none_or(|(b, _)| total > *b) {
                rest.insert(0, a);
                best = Some((total, rest));
            }
        }
        Ok(best.unwrap_or((0.0, Vec::new())))
    }
}

/// Best continuation value for every root action, in canonical order.
pub fn bfs_action_values(
    bin: &BinState,
    queue: &[ParcelDims],
    cfg: &SearchConfig,
    critic: &dyn Critic,
) -> Result<Vec<(Placement, f64)>> {
    let Some(&dims) = queue.first() else {
        return Err(Error::Config("lookahead queue is empty".into()));
    };
    let mut e = Enumerator {
        queue,
        cfg,
        critic,
        nodes: 1,
    };
    capped_actions(bin, dims, cfg.max_actions)
        .into_iter()
        .map(|a| {
            let r = shaped_reward(bin, dims, a, cfg.lambda);
            let next = bin.place(dims, a)?;
            let (v, _) = e.best(&next, 1)?;
            Ok((a, r + v))
        })
        .collect()
}

/// Exhaustive planner: the first action of the best path.
pub fn bfs_plan(bin: &BinState, queue: &[ParcelDims], cfg: &SearchConfig, critic: &dyn Critic) -> Result<BfsOutcome> {
    if queue.is_empty() {
        return Err(Error::Config("lookahead queue is empty".into()));
    }
    let mut e = Enumerator {
        queue,
        cfg,
        critic,
        nodes: 0,
    };
    let (value, path) = e.best(bin, 0)?;
    let action = *path.first().ok_or(Error::BinFull)?;
    Ok(BfsOutcome {
        action,
        value,
        path,
        nodes: e.nodes,
    })
}
