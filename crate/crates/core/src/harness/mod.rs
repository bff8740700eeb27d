//! Episodes, sliding-window evaluation, paired comparison, timing sweeps and
//! the toy-MDP check of the distribution-shift gap bound.

mod bench;
mod episode;
mod eval;
mod theory;

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::critic::{
    Critic, CriticKind, EmsCritic, HeuristicPrior, ItemSampler, PriorKind, PriorModel, RolloutCritic, UniformPrior,
};
use crate::distribution::FrequencyTable;
use crate::error::{Error, Result};
use crate::geometry::{BinSpec, PlacementRules};
use crate::heuristics::Heuristic;
use crate::search::{PlannerKind, SearchConfig};

pub use bench::{bench_states, bench_sweep, linear_fit, BenchPoint, BenchReport, LinearFit, SweepAxis};
pub use episode::{run_episode, EpisodeResult};
pub use eval::{
    classify_shift, compare, label_distribution, sign_test, sliding_window_eval, window_starts, Aggregate,
    CompareReport, EvalReport, PairedStat, ShiftFlag, WindowRow,
};
pub use theory::{finite_horizon_gap, verify_gap_bound, GapReport, ToyMdp};

/// A packing policy: a one-step heuristic or a lookahead planner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Policy {
    Heuristic(Heuristic),
    Planner(PlannerKind),
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Heuristic(h) => h.name(),
            Policy::Planner(p) => p.name(),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(p) = s.parse::<PlannerKind>() {
            return Ok(Policy::Planner(p));
        }
        if let Ok(h) = s.parse::<Heuristic>() {
            return Ok(Policy::Heuristic(h));
        }
        Err(Error::UnknownName {
            kind: "policy",
            name: s.into(),
        })
    }
}

/// Everything an evaluation run needs besides the policy and the stream.
#[derive(Clone, Debug)]
pub struct EvalConfig {
    pub spec: BinSpec,
    pub rules: PlacementRules,
    pub search: SearchConfig,
    pub critic: CriticKind,
    pub prior: PriorKind,
    /// Rollouts averaged by the rollout critic.
    pub rollout_samples: usize,
    /// Step cap of each rollout.
    pub rollout_steps: usize,
    /// Episode length in parcels.
    pub window: usize,
    pub stride: usize,
    pub shift_threshold: f64,
    /// Evaluate windows on the rayon pool.
    pub parallel: bool,
}

impl EvalConfig {
    pub fn new(spec: BinSpec) -> Self {
        Self {
            spec,
            rules: PlacementRules::default(),
            search: SearchConfig::default(),
            critic: CriticKind::Rollout,
            prior: PriorKind::Heuristic,
            rollout_samples: 4,
            rollout_steps: 64,
            window: 100,
            stride: 1,
            shift_threshold: 0.3,
            parallel: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.search.validate()?;
        if self.window == 0 || self.stride == 0 {
            return Err(Error::Config("window and stride must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.shift_threshold) {
            return Err(Error::Config("shift threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Terminal critic for one episode. Rollouts draw from the table's
    /// distribution: the critic only knows the data it was built from.
    pub fn make_critic(&self, table: &FrequencyTable, seed: u64) -> Box<dyn Critic> {
        match self.critic {
            CriticKind::Ems => Box::new(EmsCritic::default()),
            CriticKind::Rollout => {
                let mut c = RolloutCritic::new(ItemSampler::from_table(table), seed);
                c.samples = self.rollout_samples;
                c.max_steps = self.rollout_steps;
                Box::new(c)
            }
        }
    }

    pub fn make_prior(&self) -> Box<dyn PriorModel> {
        match self.prior {
            PriorKind::Heuristic => Box::new(HeuristicPrior {
                lambda: self.search.lambda,
                ..HeuristicPrior::default()
            }),
            PriorKind::Uniform => Box::new(UniformPrior),
        }
    }

    pub(crate) fn echo(&self) -> ConfigEcho {
        let s = &self.search;
        ConfigEcho {
            bin: [self.spec.length, self.spec.width, self.spec.height],
            min_support: self.rules.min_support,
            wall_margin: self.rules.wall_margin,
            lookahead: s.horizon,
            trials: s.trials,
            exploration: s.exploration,
            lambda: s.lambda,
            window_w: s.window,
            familiarity: format!("{:?}", s.familiarity).to_lowercase(),
            time_budget_ms: s.time_budget.map(|d| d.as_millis() as u64),
            max_actions: s.max_actions,
            epsilon: s.epsilon,
            reuse_tree: s.reuse_tree,
            seed: s.seed,
            critic: self.critic.to_string(),
            prior: self.prior.to_string(),
            rollout_samples: self.rollout_samples,
            rollout_steps: self.rollout_steps,
            window: self.window,
            stride: self.stride,
            shift_threshold: self.shift_threshold,
        }
    }
}

/// Flat record of the settings a report was produced with.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub bin: [u32; 3],
    pub min_support: f64,
    pub wall_margin: u32,
    pub lookahead: usize,
    pub trials: usize,
    pub exploration: f64,
    pub lambda: f64,
    pub window_w: usize,
    pub familiarity: String,
    pub time_budget_ms: Option<u64>,
    pub max_actions: Option<usize>,
    pub epsilon: f64,
    pub reuse_tree: bool,
    pub seed: u64,
    pub critic: String,
    pub prior: String,
    pub rollout_samples: usize,
    pub rollout_steps: usize,
    pub window: usize,
    pub stride: usize,
    pub shift_threshold: f64,
}

/// Seed of the episode starting at stream index `start`.
pub fn window_seed(seed: u64, start: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(start as u64);
    rng.next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_names_round_trip() {
        for name in [
            "mpc",
            "mpc-no-wsp",
            "mpc-no-sapuct",
            "bfs",
            "random",
            "rtdp",
            "lsah",
            "onlinebph",
            "macs",
            "dbl",
        ] {
            let p: Policy = name.parse().unwrap();
            assert_eq!(p.name(), name);
        }
        assert!(matches!(
            "pct".parse::<Policy>(),
            Err(Error::UnknownName { kind: "policy", .. })
        ));
    }

    #[test]
    fn window_seeds_differ_and_repeat() {
        assert_eq!(window_seed(3, 10), window_seed(3, 10));
        assert_ne!(window_seed(3, 10), window_seed(3, 11));
        assert_ne!(window_seed(3, 10), window_seed(4, 10));
    }
}
