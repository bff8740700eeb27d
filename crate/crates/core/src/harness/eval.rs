use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::distribution::{empirical_distribution, tv_distance, FrequencyTable};
use crate::error::{Error, Result};
use crate::stream::LabeledStream;

use super::episode::{run_episode, EpisodeResult};
use super::{window_seed, ConfigEcho, EvalConfig, Policy};

/// Start indices of every full window.
pub fn window_starts(len: usize, window: usize, stride: usize) -> Vec<usize> {
    if window == 0 || stride == 0 || len < window {
        return Vec::new();
    }
    (0..=len - window).step_by(stride).collect()
}

/// Shift classification of one window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ShiftFlag {
    /// TV distance between the window's type histogram and the table.
    pub tv: f64,
    pub shift: bool,
    /// TV distance between the window's label histogram and the reference labels.
    pub label_tv: Option<f64>,
    pub label_shift: Option<bool>,
}

/// Relative frequency of each batch label.
pub fn label_distribution(labels: &[Option<u32>]) -> BTreeMap<u32, f64> {
    let known: Vec<u32> = labels.iter().flatten().copied().collect();
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for l in &known {
        *counts.entry(*l).or_default() += 1.0;
    }
    let n = known.len() as f64;
    counts.values_mut().for_each(|c| *c /= n);
    counts
}

/// Flags each window `[start, start + window)` of `stream` as Shift when its
/// type histogram is at least `threshold` away from the table in TV distance.
///
/// With `reference_labels` and a labelled stream, the same rule is also
/// applied to batch-label histograms.
pub fn classify_shift(
    stream: &LabeledStream,
    starts: &[usize],
    window: usize,
    table: &FrequencyTable,
    threshold: f64,
    reference_labels: Option<&BTreeMap<u32, f64>>,
) -> Result<Vec<ShiftFlag>> {
    let reference = table.distribution();
    starts
        .iter()
        .map(|&s| {
            let end = (s + window).min(stream.len());
            let slice = &stream.items[s..end];
            let tv = tv_distance(&empirical_distribution(slice, table.bucket()), &reference)?;
            let label_tv = match reference_labels {
                Some(r) if stream.has_labels() => Some(tv_distance(&label_distribution(&stream.labels[s..end]), r)?),
                _ => None,
            };
            Ok(ShiftFlag {
                tv,
                shift: tv >= threshold,
                label_tv,
                label_shift: label_tv.map(|t| t >= threshold),
            })
        })
        .collect()
}

/// Means over a set of windows.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Aggregate {
    pub windows: usize,
    pub mean_utilization: f64,
    pub mean_items: f64,
    pub mean_time: f64,
    pub max_time: f64,
}

impl Aggregate {
    pub fn of<'a>(episodes: impl IntoIterator<Item = &'a EpisodeResult>) -> Self {
        let mut a = Aggregate::default();
        let mut decisions = 0usize;
        let mut time = 0.0;
        for e in episodes {
            a.windows += 1;
            a.mean_utilization += e.utilization;
            a.mean_items += e.items as f64;
            decisions += e.decision_times.len();
            time += e.decision_times.iter().sum::<f64>();
            a.max_time = a.max_time.max(e.max_time());
        }
        if a.windows > 0 {
            a.mean_utilization /= a.windows as f64;
            a.mean_items /= a.windows as f64;
        }
        if decisions > 0 {
            a.mean_time = time / decisions as f64;
        }
        a
    }
}

/// One report record. Timings are kept out so that records are reproducible.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowRow {
    pub start: usize,
    pub policy: String,
    pub seed: u64,
    pub items: usize,
    pub utilization: f64,
    pub packed_volume: u64,
    pub tv: f64,
    pub shift: bool,
    pub label_tv: Option<f64>,
    pub label_shift: Option<bool>,
    pub mean_alpha: Option<f64>,
}

#[derive(Serialize)]
struct TimingRow<'a> {
    start: usize,
    policy: &'a str,
    decisions: usize,
    mean_time: f64,
    max_time: f64,
}

/// Results of one policy over every window of a stream.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub policy: String,
    pub episodes: Vec<EpisodeResult>,
    pub flags: Vec<ShiftFlag>,
    pub overall: Aggregate,
    pub shift: Aggregate,
    pub config: ConfigEcho,
}

impl EvalReport {
    fn new(policy: Policy, episodes: Vec<EpisodeResult>, flags: Vec<ShiftFlag>, cfg: &EvalConfig) -> Self {
        let overall = Aggregate::of(&episodes);
        let shift = Aggregate::of(episodes.iter().zip(&flags).filter(|(_, f)| f.shift).map(|(e, _)| e));
        Self {
            policy: policy.name().to_string(),
            episodes,
            flags,
            overall,
            shift,
            config: cfg.echo(),
        }
    }

    pub fn rows(&self) -> Vec<WindowRow> {
        self.episodes
            .iter()
            .zip(&self.flags)
            .map(|(e, f)| WindowRow {
                start: e.start,
                policy: e.policy.clone(),
                seed: e.seed,
                items: e.items,
                utilization: e.utilization,
                packed_volume: e.packed_volume,
                tv: f.tv,
                shift: f.shift,
                label_tv: f.label_tv,
                label_shift: f.label_shift,
                mean_alpha: (!e.alphas.is_empty()).then(|| e.alphas.iter().sum::<f64>() / e.alphas.len() as f64),
            })
            .collect()
    }

    /// Line-delimited JSON, one record per window.
    pub fn rows_jsonl(&self) -> String {
        let mut out = String::new();
        for r in self.rows() {
            out.push_str(&serde_json::to_string(&r).expect("rows serialize"));
            out.push('\n');
        }
        out
    }

    pub fn timings_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.episodes {
            let row = TimingRow {
                start: e.start,
                policy: &e.policy,
                decisions: e.decision_times.len(),
                mean_time: e.mean_time(),
                max_time: e.max_time(),
            };
            out.push_str(&serde_json::to_string(&row).expect("rows serialize"));
            out.push('\n');
        }
        out
    }

    /// Human-readable aggregates without timings.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "policy {}", self.policy);
        let _ = writeln!(
            s,
            "config {}",
            serde_json::to_string(&self.config).expect("config serializes")
        );
        for (name, a) in [("overall", &self.overall), ("shift", &self.shift)] {
            let _ = writeln!(
                s,
                "{name:<8} windows {:>6}  space_uti {:.6}  items {:.4}",
                a.windows, a.mean_utilization, a.mean_items
            );
        }
        s
    }

    pub fn timing_summary(&self) -> String {
        let mut s = String::new();
        for (name, a) in [("overall", &self.overall), ("shift", &self.shift)] {
            let _ = writeln!(
                s,
                "{} {name:<8} mean_time_s {:.6e}  max_time_s {:.6e}",
                self.policy, a.mean_time, a.max_time
            );
        }
        s
    }

    /// Writes `<policy>.windows.jsonl`, `<policy>.summary.txt` and
    /// `<policy>.timings.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("windows.jsonl", self.rows_jsonl()),
            ("summary.txt", self.summary()),
            ("timings.jsonl", self.timings_jsonl()),
        ];
        for (suffix, text) in files {
            let path = dir.join(format!("{}.{suffix}", self.policy));
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Runs one episode per window and aggregates over all windows and over the
/// Shift-flagged ones.
pub fn sliding_window_eval(
    policy: Policy,
    stream: &LabeledStream,
    cfg: &EvalConfig,
    table: &FrequencyTable,
    reference_labels: Option<&BTreeMap<u32, f64>>,
) -> Result<EvalReport> {
    cfg.validate()?;
    if stream.len() < cfg.window {
        return Err(Error::Config(format!(
            "stream has {} parcels, fewer than the window of {}",
            stream.len(),
            cfg.window
        )));
    }
    let starts = window_starts(stream.len(), cfg.window, cfg.stride);
    let run = |&s: &usize| {
        run_episode(
            policy,
            &stream.items[s..s + cfg.window],
            s,
            cfg,
            table,
            window_seed(cfg.search.seed, s),
        )
    };
    let episodes: Vec<EpisodeResult> = if cfg.parallel {
        starts.par_iter().map(run).collect::<Result<_>>()?
    } else {
        starts.iter().map(run).collect::<Result<_>>()?
    };
    let flags = classify_shift(
        stream,
        &starts,
        cfg.window,
        table,
        cfg.shift_threshold,
        reference_labels,
    )?;
    Ok(EvalReport::new(policy, episodes, flags, cfg))
}

/// One-sided sign test: probability of at least `wins` successes in
/// `wins + losses` fair coin flips.
pub fn sign_test(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 || wins == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, n as u64).expect("valid binomial");
    b.sf(wins as u64 - 1)
}

/// Paired statistics of `policy` against `baseline` over a window subset.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairedStat {
    pub policy: String,
    pub baseline: String,
    pub subset: String,
    pub windows: usize,
    pub mean_policy: f64,
    pub mean_baseline: f64,
    pub mean_diff: f64,
    /// `mean_diff / mean_baseline`.
    pub relative: f64,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    pub p_value: f64,
}

impl PairedStat {
    fn compute(a: &EvalReport, b: &EvalReport, subset: &str, keep: &[bool]) -> Self {
        let pairs: Vec<(f64, f64)> = a
            .episodes
            .iter()
            .zip(&b.episodes)
            .zip(keep)
            .filter(|(_, &k)| k)
            .map(|((x, y), _)| (x.utilization, y.utilization))
            .collect();
        let n = pairs.len();
        let mean = |f: fn(&(f64, f64)) -> f64| {
            if n == 0 {
                0.0
            } else {
                pairs.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let mean_policy = mean(|p| p.0);
        let mean_baseline = mean(|p| p.1);
        let wins = pairs.iter().filter(|(x, y)| x > y).count();
        let losses = pairs.iter().filter(|(x, y)| x < y).count();
        PairedStat {
            policy: a.policy.clone(),
            baseline: b.policy.clone(),
            subset: subset.to_string(),
            windows: n,
            mean_policy,
            mean_baseline,
            mean_diff: mean_policy - mean_baseline,
            relative: if mean_baseline > 0.0 {
                (mean_policy - mean_baseline) / mean_baseline
            } else {
                0.0
            },
            wins,
            losses,
            ties: n - wins - losses,
            p_value: sign_test(wins, losses),
        }
    }
}

/// Several policies on identical windows and seeds.
#[derive(Clone, Debug)]
pub struct CompareReport {
    pub reports: Vec<EvalReport>,
    /// Every policy against the first one, over all and over Shift windows.
    pub paired: Vec<PairedStat>,
}

impl CompareReport {
    pub fn report(&self, name: &str) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.policy == name)
    }

    /// Paired statistics of `policy` against `baseline`.
    pub fn pair(&self, policy: &str, baseline: &str, shift_only: bool) -> Option<PairedStat> {
        let a = self.report(policy)?;
        let b = self.report(baseline)?;
        let keep: Vec<bool> = a.flags.iter().map(|f| !shift_only || f.shift).collect();
        Some(PairedStat::compute(
            a,
            b,
            if shift_only { "shift" } else { "overall" },
            &keep,
        ))
    }

    pub fn paired_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.paired {
            out.push_str(&serde_json::to_string(p).expect("stats serialize"));
            out.push('\n');
        }
        out
    }

    /// Writes every policy's report plus `paired.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for r in &self.reports {
            r.write(dir)?;
        }
        let path = dir.join("paired.jsonl");
        fs::write(&path, self.paired_jsonl()).map_err(|e| Error::io(&path, e))
    }
}

/// Evaluates every policy on the same windows; the first policy is the baseline.
pub fn compare(
    policies: &[Policy],
    stream: &LabeledStream,
    cfg: &EvalConfig,
    table: &FrequencyTable,
    reference_labels: Option<&BTreeMap<u32, f64>>,
) -> Result<CompareReport> {
    if policies.is_empty() {
        return Err(Error::Config("no policies to compare".into()));
    }
    let reports = policies
        .iter()
        .map(|&p| sliding_window_eval(p, stream, cfg, table, reference_labels))
        .collect::<Result<Vec<_>>>()?;
    let mut out = CompareReport {
        reports,
        paired: Vec::new(),
    };
    let baseline = policies[0].name();
    for p in &policies[1..] {
        for shift_only in [false, true] {
            let stat = out.pair(p.name(), baseline, shift_only).expect("both reports exist");
            out.paired.push(stat);
        }
    }
    Ok(out)
}
