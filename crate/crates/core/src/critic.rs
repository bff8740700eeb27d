//! Terminal value estimates and policy priors consumed by the search.
//!
//! Both are traits so that a learned model can be dropped in later. The
//! implementations here are cheap surrogates: a free-volume critic, a
//! heuristic-rollout critic, and a softmax prior over a shaped one-step score.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::distribution::{FrequencyTable, ItemType};
use crate::error::{Error, Result};
use crate::geometry::{volume_reward, BinState, ParcelDims, Placement};
use crate::heuristics::Heuristic;
use crate::stream::StreamModel;

/// Value of a bin state in normalized-volume units.
///
/// Implementations must be pure functions of the state and their own
/// configuration so that searches are reproducible.
pub trait Critic: Send + Sync {
    fn value(&self, bin: &BinState) -> f64;
}

/// Always zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroCritic;

impl Critic for ZeroCritic {
    fn value(&self, _bin: &BinState) -> f64 {
        0.0
    }
}

/// `beta` times the volume still reachable from above, over bin volume.
///
/// Every column below the lid is covered by some empty maximal space
/// touching its top, so the reachable volume is the cell-wise sum of
/// `H - height`.
#[derive(Clone, Copy, Debug)]
pub struct EmsCritic {
    pub beta: f64,
}

impl Default for EmsCritic {
    fn default() -> Self {
        Self { beta: 0.8 }
    }
}

impl Critic for EmsCritic {
    fn value(&self, bin: &BinState) -> f64 {
        self.beta * bin.open_volume() as f64 / bin.spec().volume() as f64
    }
}

/// Where rollout parcels come from.
#[derive(Clone, Debug)]
pub enum ItemSampler {
    Table {
        types: Vec<ItemType>,
        index: WeightedIndex<f64>,
    },
    Mixture(StreamModel),
}

impl ItemSampler {
    pub fn from_table(table: &FrequencyTable) -> Self {
        let (types, weights): (Vec<ItemType>, Vec<f64>) = table.counts().iter().map(|(t, &c)| (*t, c as f64)).unzip();
        let index = WeightedIndex::new(weights).expect("frequency table is nonempty");
        ItemSampler::Table { types, index }
    }

    pub fn from_model(model: StreamModel) -> Self {
        ItemSampler::Mixture(model)
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> ParcelDims {
        match self {
            ItemSampler::Table { types, index } => types[index.sample(rng)].dims(),
            ItemSampler::Mixture(model) => model.sample_mixture(rng),
        }
    }
}

/// Mean extra volume packed by a heuristic on i.i.d. sampled parcels.
#[derive(Clone, Debug)]
pub struct RolloutCritic {
    pub policy: Heuristic,
    pub sampler: ItemSampler,
    pub samples: usize,
    pub max_steps: usize,
    pub seed: u64,
}

impl RolloutCritic {
    pub fn new(sampler: ItemSampler, seed: u64) -> Self {
        Self {
            policy: Heuristic::Dbl,
            sampler,
            samples: 4,
            max_steps: 64,
            seed,
        }
    }

    fn rollout(&self, bin: &BinState, rng: &mut ChaCha8Rng) -> u64 {
        let mut current = bin.clone();
        let start = current.packed_volume();
        for _ in 0..self.max_steps {
            let dims = self.sampler.sample(rng);
            let Some(p) = self.policy.select(&current, dims) else {
                break;
            };
            current = current.place(dims, p).expect("heuristics return feasible placements");
        }
        current.packed_volume() - start
    }
}

/// Stable hash of a bin state, used to derive per-state rollout seeds.
pub fn state_hash(bin: &BinState) -> u64 {
    let mut h = DefaultHasher::new();
    bin.heightmap().hash(&mut h);
    bin.placed().hash(&mut h);
    h.finish()
}

impl Critic for RolloutCritic {
    fn value(&self, bin: &BinState) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ state_hash(bin));
        let k = self.samples.max(1);
        let added: u64 = (0..k).map(|_| self.rollout(bin, &mut rng)).sum();
        added as f64 / (k as f64 * bin.spec().volume() as f64)
    }
}

/// Probabilities over an action list, index-aligned with it.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyPrior {
    pub actions: Vec<Placement>,
    pub probs: Vec<f64>,
}

/// Prior `P_pi(s, a)` over the candidate actions of a state.
pub trait PriorModel: Send + Sync {
    /// Returns one probability per action, summing to one. Errors on an empty action list.
    fn prior(&self, bin: &BinState, dims: ParcelDims, actions: &[Placement]) -> Result<Vec<f64>>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct UniformPrior;

impl PriorModel for UniformPrior {
    fn prior(&self, _bin: &BinState, _dims: ParcelDims, actions: &[Placement]) -> Result<Vec<f64>> {
        if actions.is_empty() {
            return Err(Error::EmptyActionSet);
        }
        Ok(vec![1.0 / actions.len() as f64; actions.len()])
    }
}

/// Softmax over `volume_reward - lambda * waste - eta * z / H` at temperature `tau`.
#[derive(Clone, Copy, Debug)]
pub struct HeuristicPrior {
    pub lambda: f64,
    pub eta: f64,
    pub tau: f64,
}

impl Default for HeuristicPrior {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            eta: 0.1,
            tau: 0.1,
        }
    }
}

impl HeuristicPrior {
    pub fn score(&self, bin: &BinState, dims: ParcelDims, p: Placement) -> f64 {
        let spec = bin.spec();
        volume_reward(dims, spec)
            - self.lambda * bin.wasted_space_penalty(dims, p)
            - self.eta * p.z as f64 / spec.height as f64
    }
}

/// Numerically stable softmax of `scores / tau`.
pub fn softmax(scores: &[f64], tau: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| ((s - max) / tau).exp()).collect();
    let z: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / z).collect()
}

impl PriorModel for HeuristicPrior {
    fn prior(&self, bin: &BinState, dims: ParcelDims, actions: &[Placement]) -> Result<Vec<f64>> {
        if actions.is_empty() {
            return Err(Error::EmptyActionSet);
        }
        let scores: Vec<f64> = actions.iter().map(|p| self.score(bin, dims, *p)).collect();
        Ok(softmax(&scores, self.tau))
    }
}

/// Convenience wrapper returning a [`PolicyPrior`] for the heuristic prior.
pub fn heuristic_policy_prior(
    bin: &BinState,
    dims: ParcelDims,
    actions: &[Placement],
    params: HeuristicPrior,
) -> Result<PolicyPrior> {
    Ok(PolicyPrior {
        actions: actions.to_vec(),
        probs: params.prior(bin, dims, actions)?,
    })
}

/// Critic choice by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CriticKind {
    Ems,
    Rollout,
}

impl FromStr for CriticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ems" => Ok(CriticKind::Ems),
            "rollout" => Ok(CriticKind::Rollout),
            _ => Err(Error::UnknownName {
                kind: "critic",
                name: s.into(),
            }),
        }
    }
}

impl fmt::Display for CriticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CriticKind::Ems => "ems",
            CriticKind::Rollout => "rollout",
        })
    }
}

/// Prior choice by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorKind {
    Heuristic,
    Uniform,
}

impl FromStr for PriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heuristic" => Ok(PriorKind::Heuristic),
            "uniform" => Ok(PriorKind::Uniform),
            _ => Err(Error::UnknownName {
                kind: "prior",
                name: s.into(),
            }),
        }
    }
}

impl fmt::Display for PriorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PriorKind::Heuristic => "heuristic",
            PriorKind::Uniform => "uniform",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::candidate_actions;
    use crate::geometry::{BinSpec, Orientation};

    fn d(l: u32, w: u32, h: u32) -> ParcelDims {
        ParcelDims::new(l, w, h).unwrap()
    }

    fn up(x: u32, y: u32, z: u32) -> Placement {
        Placement::new(x, y, z, Orientation::Upright)
    }

    #[test]
    fn ems_critic_examples() {
        let spec = BinSpec::new(4, 4, 10).unwrap();
        let empty = BinState::empty(spec);
        assert!((EmsCritic::default().value(&empty) - 0.8).abs() < 1e-15);

        let one = empty.place(d(2, 2, 3), up(0, 0, 0)).unwrap();
        let free_oracle: u32 = (0..4)
            .flat_map(|x| (0..4).map(move |y| (x, y)))
            .map(|(x, y)| 10 - one.heightmap().get(x, y))
            .sum();
        assert_eq!(free_oracle, 148);
        assert_eq!(EmsCritic { beta: 1.0 }.value(&one), 148.0 / 160.0);

        let two = one.place(d(2, 2, 3), up(0, 0, 3)).unwrap();
        assert_eq!(EmsCritic { beta: 1.0 }.value(&two), 136.0 / 160.0);

        let full = BinState::empty(BinSpec::new(2, 2, 2).unwrap())
            .place(d(2, 2, 2), up(0, 0, 0))
            .unwrap();
        assert_eq!(EmsCritic::default().value(&full), 0.0);
    }

    fn unit_table() -> FrequencyTable {
        FrequencyTable::build(&[d(1, 1, 1)], 1).unwrap()
    }

    #[test]
    fn rollout_critic_examples() {
        let spec = BinSpec::new(2, 1, 1).unwrap();
        let one_gap = BinState::empty(spec).place(d(1, 1, 1), up(0, 0, 0)).unwrap();
        let critic = RolloutCritic::new(ItemSampler::from_table(&unit_table()), 9);
        assert_eq!(critic.value(&one_gap), 1.0 / 2.0);

        let full = one_gap.place(d(1, 1, 1), up(1, 0, 0)).unwrap();
        for k in [1, 3, 8] {
            let c = RolloutCritic {
                samples: k,
                ..critic.clone()
            };
            assert_eq!(c.value(&full), 0.0);
        }
    }

    #[test]
    fn rollout_critic_is_deterministic() {
        let table = FrequencyTable::build(&[d(1, 2, 1), d(2, 2, 1), d(3, 1, 2)], 1).unwrap();
        let critic = RolloutCritic {
            samples: 1,
            ..RolloutCritic::new(ItemSampler::from_table(&table), 4)
        };
        let bin = BinState::empty(BinSpec::new(5, 5, 5).unwrap());
        let v = critic.value(&bin);
        assert!(v > 0.0 && v <= 1.0);
        assert_eq!(v, critic.value(&bin));
    }

    #[test]
    fn prior_examples() {
        let bin = BinState::empty(BinSpec::new(3, 3, 3).unwrap());
        let single = heuristic_policy_prior(&bin, d(3, 3, 1), &[up(0, 0, 0)], HeuristicPrior::default()).unwrap();
        assert_eq!(single.probs, vec![1.0]);

        let bin = BinState::empty(BinSpec::new(4, 2, 3).unwrap());
        let two = [up(0, 0, 0), up(2, 0, 0)];
        let probs = HeuristicPrior::default().prior(&bin, d(2, 2, 1), &two).unwrap();
        assert_eq!(probs, vec![0.5, 0.5]);

        assert!(matches!(
            HeuristicPrior::default().prior(&bin, d(2, 2, 1), &[]),
            Err(Error::EmptyActionSet)
        ));
        assert!(UniformPrior.prior(&bin, d(2, 2, 1), &[]).is_err());
    }

    #[test]
    fn prior_sharpens_to_argmax() {
        let bin = BinState::empty(BinSpec::new(4, 2, 6).unwrap())
            .place(d(2, 2, 2), up(0, 0, 0))
            .unwrap();
        let dims = d(2, 2, 1);
        let actions = candidate_actions(&bin, dims);
        assert_eq!(actions.len(), 2);
        let cold = HeuristicPrior {
            tau: 1e-6,
            ..HeuristicPrior::default()
        };
        let scores: Vec<f64> = actions.iter().map(|p| cold.score(&bin, dims, *p)).collect();
        let argmax = if scores[0] >= scores[1] { 0 } else { 1 };
        let probs = cold.prior(&bin, dims, &actions).unwrap();
        assert!((probs[argmax] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn names_parse() {
        assert_eq!("ems".parse::<CriticKind>().unwrap(), CriticKind::Ems);
        assert_eq!("uniform".parse::<PriorKind>().unwrap(), PriorKind::Uniform);
        assert!("neural".parse::<CriticKind>().is_err());
    }
}
