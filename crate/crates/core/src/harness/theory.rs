//! One-dimensional packing MDP used to check the distribution-shift gap
//! bound by exact dynamic programming.
//!
//! A state is `(free capacity, current item type)`. The agent either packs
//! the item (if it fits), earning `size / capacity`, or skips it. The next
//! item type is drawn i.i.d. from an item distribution, which is the only
//! thing that changes between the training and the shifted environment.

use rand::Rng;
use serde::Serialize;

use crate::distribution::tv_distance;
use crate::error::{Error, Result};

const TOLERANCE: f64 = 1e-12;
const MAX_SWEEPS: usize = 100_000;
/// Slack for floating-point error when comparing against the bounds.
const SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ToyMdp {
    pub capacity: u32,
    /// Size of each item type.
    pub sizes: Vec<u32>,
    /// Training item distribution `D`.
    pub train: Vec<f64>,
    /// Shifted item distribution `D_x`.
    pub shifted: Vec<f64>,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapReport {
    pub states: usize,
    pub tv: f64,
    pub r_max: f64,
    /// `max_s V*_{D_x}(s) - V^pi_{D_x}(s)` for the policy `pi` optimal under `D`.
    pub max_gap: f64,
    pub constant: f64,
    pub bound: f64,
    /// `max_s |V^pi_D(s) - V^pi_{D_x}(s)|`.
    pub max_policy_shift: f64,
    pub policy_shift_bound: f64,
    pub pass: bool,
}

fn to_map(p: &[f64]) -> std::collections::BTreeMap<usize, f64> {
    p.iter().copied().enumerate().collect()
}

fn normalized(weights: Vec<f64>) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

impl ToyMdp {
    /// Capacity 6..=12, 3..=5 item types, independent random distributions.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, gamma: f64) -> Self {
        let capacity = rng.gen_range(6..=12);
        let k = rng.gen_range(3..=5);
        let sizes = (0..k).map(|_| rng.gen_range(1..=capacity / 2 + 1)).collect();
        let train = normalized((0..k).map(|_| rng.gen_range(0.05..1.0)).collect());
        let shifted = normalized((0..k).map(|_| rng.gen_range(0.05..1.0)).collect());
        Self {
            capacity,
            sizes,
            train,
            shifted,
            gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.sizes.len();
        if k == 0 || self.train.len() != k || self.shifted.len() != k {
            return Err(Error::Config(
                "item sizes and distributions must have the same nonzero length".into(),
            ));
        }
        if self.capacity == 0 || self.sizes.contains(&0) {
            return Err(Error::Config("capacity and item sizes must be positive".into()));
        }
        if self.states() > 10_000 {
            return Err(Error::Config("toy MDP has more than 10^4 states".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config("discount must lie in (0, 1]".into()));
        }
        tv_distance(&to_map(&self.train), &to_map(&self.shifted))?;
        Ok(())
    }

    pub fn states(&self) -> usize {
        (self.capacity as usize + 1) * self.sizes.len()
    }

    fn index(&self, free: u32, item: usize) -> usize {
        free as usize * self.sizes.len() + item
    }

    pub fn r_max(&self) -> f64 {
        self.sizes
            .iter()
            .filter(|&&s| s <= self.capacity)
            .map(|&s| self.reward(s))
            .fold(0.0, f64::max)
    }

    fn reward(&self, size: u32) -> f64 {
        f64::from(size) / f64::from(self.capacity)
    }

    pub fn tv(&self) -> f64 {
        tv_distance(&to_map(&self.train), &to_map(&self.shifted)).expect("validated distributions")
    }

    /// Expected next-state value for each free capacity: `sum_j D(j) V(c, j)`.
    fn expected(&self, v: &[f64], dist: &[f64]) -> Vec<f64> {
        (0..=self.capacity)
            .map(|c| dist.iter().enumerate().map(|(j, p)| p * v[self.index(c, j)]).sum())
            .collect()
    }

    /// Action values `(skip, pack)`; `pack` is `None` when the item does not fit.
    fn q(&self, free: u32, item: usize, next: &[f64]) -> (f64, Option<f64>) {
        let skip = self.gamma * next[free as usize];
        let size = self.sizes[item];
        let pack = (size <= free).then(|| self.reward(size) + self.gamma * next[(free - size) as usize]);
        (skip, pack)
    }

    fn greedy(&self, next: &[f64]) -> (Vec<f64>, Vec<bool>) {
        let mut v = vec![0.0; self.states()];
        let mut pack = vec![false; self.states()];
        for c in 0..=self.capacity {
            for i in 0..self.sizes.len() {
                let s = self.index(c, i);
                let (skip, p) = self.q(c, i, next);
                match p {
                    Some(p) if p >= skip => {
                        v[s] = p;
                        pack[s] = true;
                    }
                    _ => v[s] = skip,
                }
            }
        }
        (v, pack)
    }

    /// Optimal values and a greedy optimal policy under `dist` (discounted).
    pub fn value_iteration(&self, dist: &[f64]) -> Result<(Vec<f64>, Vec<bool>)> {
        let mut v = vec![0.0; self.states()];
        for _ in 0..MAX_SWEEPS {
            let (next_v, _) = self.greedy(&self.expected(&v, dist));
            let residual = max_abs_diff(&v, &next_v);
            v = next_v;
            if residual < TOLERANCE {
                let (_, policy) = self.greedy(&self.expected(&v, dist));
                return Ok((v, policy));
            }
        }
        let (next_v, _) = self.greedy(&self.expected(&v, dist));
        Err(Error::NoConvergence {
            iterations: MAX_SWEEPS,
            residual: max_abs_diff(&v, &next_v),
        })
    }

    fn apply(&self, policy: &[bool], next: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.states()];
        for c in 0..=self.capacity {
            for i in 0..self.sizes.len() {
                let s = self.index(c, i);
                let (skip, pack) = self.q(c, i, next);
                v[s] = match pack {
                    Some(p) if policy[s] => p,
                    _ => skip,
                };
            }
        }
        v
    }

    /// Values of a fixed policy under `dist` (discounted).
    pub fn evaluate(&self, policy: &[bool], dist: &[f64]) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.states()];
        for _ in 0..MAX_SWEEPS {
            let next_v = self.apply(policy, &self.expected(&v, dist));
            let residual = max_abs_diff(&v, &next_v);
            v = next_v;
            if residual < TOLERANCE {
                return Ok(v);
            }
        }
        Err(Error::NoConvergence {
            iterations: MAX_SWEEPS,
            residual: max_abs_diff(&v, &self.apply(policy, &self.expected(&v, dist))),
        })
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn report(mdp: &ToyMdp, star_x: &[f64], pi_x: &[f64], pi_d: &[f64], constant: f64, shift_constant: f64) -> GapReport {
    let tv = mdp.tv();
    let max_gap = star_x.iter().zip(pi_x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let max_policy_shift = max_abs_diff(pi_d, pi_x);
    let bound = constant * tv;
    let policy_shift_bound = shift_constant * tv;
    GapReport {
        states: mdp.states(),
        tv,
        r_max: mdp.r_max(),
        max_gap,
        constant,
        bound,
        max_policy_shift,
        policy_shift_bound,
        pass: max_gap <= bound + SLACK && max_policy_shift <= policy_shift_bound + SLACK,
    }
}

/// Checks `Gap(s) <= 4 gamma R_max / (1 - gamma)^2 * TV(D, D_x)` on every
/// state, and the policy-degradation bound with constant
/// `2 gamma R_max / (1 - gamma)^2`.
pub fn verify_gap_bound(mdp: &ToyMdp) -> Result<GapReport> {
    mdp.validate()?;
    if mdp.gamma >= 1.0 {
        return Err(Error::Config("the discounted check needs gamma < 1".into()));
    }
    let (_, policy) = mdp.value_iteration(&mdp.train)?;
    let (star_x, _) = mdp.value_iteration(&mdp.shifted)?;
    let pi_x = mdp.evaluate(&policy, &mdp.shifted)?;
    let pi_d = mdp.evaluate(&policy, &mdp.train)?;
    let g = mdp.gamma;
    let base = g * mdp.r_max() / ((1.0 - g) * (1.0 - g));
    Ok(report(mdp, &star_x, &pi_x, &pi_d, 4.0 * base, 2.0 * base))
}

/// Undiscounted `horizon`-step version of [`verify_gap_bound`] with
/// constants `4 T R_max` and `2 T R_max`. `mdp.gamma` is ignored.
pub fn finite_horizon_gap(mdp: &ToyMdp, horizon: usize) -> Result<GapReport> {
    let mut m = mdp.clone();
    m.gamma = 1.0;
    m.validate()?;
    // Backward induction; the policy is time-dependent.
    let mut policy = Vec::with_capacity(horizon);
    let mut v = vec![0.0; m.states()];
    for _ in 0..horizon {
        let (next_v, pack) = m.greedy(&m.expected(&v, &m.train));
        policy.push(pack);
        v = next_v;
    }
    policy.reverse();
    let run = |dist: &[f64]| {
        let mut v = vec![0.0; m.states()];
        for step in policy.iter().rev() {
            v = m.apply(step, &m.expected(&v, dist));
        }
        v
    };
    let mut star_x = vec![0.0; m.states()];
    for _ in 0..horizon {
        star_x = m.greedy(&m.expected(&star_x, &m.shifted)).0;
    }
    let t = horizon as f64;
    let r = m.r_max();
    Ok(report(
        &m,
        &star_x,
        &run(&m.shifted),
        &run(&m.train),
        4.0 * t * r,
        2.0 * t * r,
    ))
}
