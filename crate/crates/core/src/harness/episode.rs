use std::collections::VecDeque;
use std::time::Instant;

use crate::critic::{Critic, PriorModel};
use crate::distribution::FrequencyTable;
use crate::error::{Error, Result};
use crate::geometry::{BinState, ParcelDims, PlacedBox};
use crate::search::RecedingPlanner;

use super::{EvalConfig, Policy};

/// One packed bin.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub policy: String,
    pub seed: u64,
    /// Index of the first stream parcel of this episode.
    pub start: usize,
    /// Number of stream parcels offered to the episode.
    pub len: usize,
    pub items: usize,
    pub utilization: f64,
    pub packed_volume: u64,
    /// Wall-clock seconds spent inside each policy call.
    pub decision_times: Vec<f64>,
    /// Root familiarity of each planner decision.
    pub alphas: Vec<f64>,
    pub placements: Vec<PlacedBox>,
}

impl EpisodeResult {
    pub fn mean_time(&self) -> f64 {
        if self.decision_times.is_empty() {
            0.0
        } else {
            self.decision_times.iter().sum::<f64>() / self.decision_times.len() as f64
        }
    }

    pub fn max_time(&self) -> f64 {
        self.decision_times.iter().copied().fold(0.0, f64::max)
    }
}

/// Packs `stream` into a single bin until a parcel does not fit or the
/// stream runs out.
///
/// Planners see up to `cfg.search.horizon` parcels; heuristics see only the
/// head of the queue. `start` only labels the result.
pub fn run_episode(
    policy: Policy,
    stream: &[ParcelDims],
    start: usize,
    cfg: &EvalConfig,
    table: &FrequencyTable,
    seed: u64,
) -> Result<EpisodeResult> {
    let critic = cfg.make_critic(table, seed);
    let prior = cfg.make_prior();
    let mut search = cfg.search.clone();
    search.seed = seed;
    let mut planner = match policy {
        Policy::Planner(kind) => Some(RecedingPlanner::new(
            kind,
            &search,
            critic.as_ref() as &dyn Critic,
            prior.as_ref() as &dyn PriorModel,
            table,
        )),
        Policy::Heuristic(_) => None,
    };

    let horizon = search.horizon.max(1);
    let mut bin = BinState::with_rules(cfg.spec, cfg.rules);
    let mut queue: VecDeque<ParcelDims> = stream.iter().take(horizon).copied().collect();
    let mut next = queue.len();
    let mut decision_times = Vec::new();
    let mut alphas = Vec::new();

    while let Some(&dims) = queue.front() {
        let clock = Instant::now();
        let choice = match (&mut planner, policy) {
            (Some(p), _) => {
                let view: Vec<ParcelDims> = queue.iter().copied().collect();
                match p.decide(&bin, &view) {
                    Ok(out) => {
                        if let Some(a) = out.diagnostics.root_alpha {
                            alphas.push(a);
                        }
                        Some(out.action)
                    }
                    Err(Error::BinFull) => None,
                    Err(e) => return Err(e),
                }
            }
            (None, Policy::Heuristic(h)) => h.select(&bin, dims),
            (None, Policy::Planner(_)) => unreachable!("planner policies build a planner"),
        };
        decision_times.push(clock.elapsed().as_secs_f64());
        let Some(action) = choice else { break };
        bin = bin.place(dims, action)?;
        queue.pop_front();
        if let Some(&p) = stream.get(next) {
            queue.push_back(p);
            next += 1;
        }
    }

    Ok(EpisodeResult {
        policy: policy.name().to_string(),
        seed,
        start,
        len: stream.len(),
        items: bin.placed().len(),
        utilization: bin.utilization(),
        packed_volume: bin.packed_volume(),
        decision_times,
        alphas,
        placements: bin.placed().to_vec(),
    })
}
