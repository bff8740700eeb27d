use std::fmt;
use std::time::Instant;

use serde::Serialize;

use crate::distribution::FrequencyTable;
use crate::error::{Error, Result};
use crate::geometry::{BinState, ParcelDims};
use crate::heuristics::dbl_select;
use crate::search::plan;

use super::EvalConfig;

/// Parameter varied by a timing sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Trial budget `n`.
    Trials,
    /// Lookahead horizon `N`.
    Horizon,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Trials => "trials",
            SweepAxis::Horizon => "horizon",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares `y = slope * x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    let n = xs.len().min(ys.len()) as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    LinearFit { slope, intercept, r2 }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchPoint {
    pub value: usize,
    /// Median over repeats of the mean seconds per decision.
    pub median_seconds: f64,
    pub mean_expansions: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub axis: SweepAxis,
    pub points: Vec<BenchPoint>,
    pub fit: LinearFit,
}

impl BenchReport {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            let row = serde_json::json!({
                "axis": self.axis,
                "value": p.value,
                "median_seconds": p.median_seconds,
                "mean_expansions": p.mean_expansions,
            });
            out.push_str(&row.to_string());
            out.push('\n');
        }
        out
    }
}

/// Decision states met by the deepest-bottom-left policy on `stream`:
/// `count` evenly spaced snapshots, each with the next `lookahead` parcels.
pub fn bench_states(
    cfg: &EvalConfig,
    stream: &[ParcelDims],
    count: usize,
    lookahead: usize,
) -> Vec<(BinState, Vec<ParcelDims>)> {
    let mut bin = BinState::with_rules(cfg.spec, cfg.rules);
    let mut all = Vec::new();
    for (i, &dims) in stream.iter().enumerate() {
        let queue: Vec<ParcelDims> = stream[i..].iter().take(lookahead).copied().collect();
        if queue.len() < lookahead {
            break;
        }
        let Some(a) = dbl_select(&bin, dims) else { break };
        all.push((bin.clone(), queue));
        bin = bin.place(dims, a).expect("heuristic placements are feasible");
    }
    if all.len() <= count {
        return all;
    }
    let step = all.len() as f64 / count as f64;
    (0..count).map(|k| all[(k as f64 * step) as usize].clone()).collect()
}

/// Times `plan` on every state for each value of the swept parameter.
pub fn bench_sweep(
    axis: SweepAxis,
    values: &[usize],
    states: &[(BinState, Vec<ParcelDims>)],
    cfg: &EvalConfig,
    table: &FrequencyTable,
    repeats: usize,
) -> Result<BenchReport> {
    if values.len() < 2 || states.is_empty() || repeats == 0 {
        return Err(Error::Config(
            "a sweep needs two values, one state and one repeat".into(),
        ));
    }
    let prior = cfg.make_prior();
    let mut points = Vec::with_capacity(values.len());
    for &value in values {
        let mut search = cfg.search.clone();
        search.time_budget = None;
        search.reuse_tree = false;
        match axis {
            SweepAxis::Trials => search.trials = value,
            SweepAxis::Horizon => search.horizon = value,
        }
        search.validate()?;
        let mut samples = Vec::with_capacity(repeats);
        let mut expansions = 0usize;
        let mut decisions = 0usize;
        for r in 0..repeats {
            let mut total = 0.0;
            for (k, (bin, queue)) in states.iter().enumerate() {
                if queue.len() < search.horizon {
                    return Err(Error::Config("bench state queue is shorter than the horizon".into()));
                }
                let critic = cfg.make_critic(table, k as u64);
                let q = &queue[..search.horizon];
                let clock = Instant::now();
                let out = match plan(bin, q, &search, critic.as_ref(), prior.as_ref(), table) {
                    Ok(out) => out,
                    Err(Error::BinFull) => continue,
                    Err(e) => return Err(e),
                };
                total += clock.elapsed().as_secs_f64();
                if r == 0 {
                    expansions += out.diagnostics.counters.expansions;
                    decisions += 1;
                }
            }
            samples.push(total / states.len() as f64);
        }
        samples.sort_by(f64::total_cmp);
        points.push(BenchPoint {
            value,
            median_seconds: samples[samples.len() / 2],
            mean_expansions: expansions as f64 / decisions.max(1) as f64,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.value as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.median_seconds).collect();
    Ok(BenchReport {
        axis,
        fit: linear_fit(&xs, &ys),
        points,
    })
}
