use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use binplan::critic::{CriticKind, PriorKind};
use binplan::distribution::{FamiliarityMode, FrequencyTable};
use binplan::geometry::{BinSpec, PlacementRules};
use binplan::harness::{
    bench_states, bench_sweep, compare, finite_horizon_gap, label_distribution, sliding_window_eval, verify_gap_bound,
    EvalConfig, Policy, SweepAxis, ToyMdp,
};
use binplan::stream::{LabeledStream, StreamModel};
use binplan::Error;
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(
    name = "binplan",
    version,
    about = "Lookahead planning and evaluation for online 3D bin packing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one policy over every window of a stream.
    Eval {
        #[arg(long, default_value = "mpc")]
        policy: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate several policies on identical windows and seeds.
    Compare {
        /// Comma-separated policy names; the first is the baseline.
        #[arg(long, value_delimiter = ',', default_value = "dbl,mpc")]
        policies: Vec<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Generate a labelled stream from a stream model file.
    GenStream {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        length: usize,
        /// Overrides the seed in the model file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build an item-type frequency table from a stream file.
    BuildTable {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 4)]
        bucket: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the distribution-shift gap bound on random toy MDPs.
    VerifyTheory {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        /// Horizon of the undiscounted check.
        #[arg(long, default_value_t = 20)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time the planner while sweeping the trial budget and the lookahead.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_delimiter = ',', default_value = "25,50,100,200")]
        trials_sweep: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        lookahead_sweep: Vec<usize>,
        /// Decision states timed per point.
        #[arg(long, default_value_t = 8)]
        states: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Stream file: `id,l,w,h[,label]` per line.
    #[arg(long)]
    stream: PathBuf,
    /// Frequency table file.
    #[arg(long)]
    table: PathBuf,
    /// Bin dimensions `L,W,H`.
    #[arg(long, value_delimiter = ',', default_value = "10,10,10")]
    bin: Vec<u32>,
    #[arg(long, default_value_t = 0.6)]
    min_support: f64,
    #[arg(long, default_value_t = 0)]
    wall_margin: u32,
    #[arg(long, default_value = "rollout")]
    critic: String,
    #[arg(long, default_value = "heuristic")]
    prior: String,
    #[arg(long, default_value_t = 4)]
    lookahead: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, default_value_t = 3)]
    window_w: usize,
    #[arg(long, default_value_t = 1.25)]
    c: f64,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Divide the familiarity product by `p_max^w`.
    #[arg(long)]
    rescaled_familiarity: bool,
    #[arg(long)]
    time_budget_ms: Option<u64>,
    #[arg(long)]
    max_actions: Option<usize>,
    #[arg(long)]
    no_reuse: bool,
    #[arg(long, default_value_t = 4)]
    rollout_samples: usize,
    #[arg(long, default_value_t = 64)]
    rollout_steps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 100)]
    window: usize,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 0.3)]
    shift_threshold: f64,
    /// Labelled training stream whose batch-label histogram is the
    /// reference for label-based shift flags.
    #[arg(long)]
    reference_labels: Option<PathBuf>,
    /// Evaluate windows concurrently.
    #[arg(long)]
    parallel: bool,
}

struct Loaded {
    cfg: EvalConfig,
    stream: LabeledStream,
    table: FrequencyTable,
}

fn load_common(a: &CommonArgs) -> Result<Loaded, Error> {
    let [l, w, h] = a.bin[..] else {
        return Err(Error::Config("--bin takes three values L,W,H".into()));
    };
    let mut cfg = EvalConfig::new(BinSpec::new(l, w, h)?);
    cfg.rules = PlacementRules {
        min_support: a.min_support,
        wall_margin: a.wall_margin,
    };
    cfg.critic = a.critic.parse::<CriticKind>()?;
    cfg.prior = a.prior.parse::<PriorKind>()?;
    cfg.rollout_samples = a.rollout_samples;
    cfg.rollout_steps = a.rollout_steps;
    let s = &mut cfg.search;
    s.horizon = a.lookahead;
    s.trials = a.trials;
    s.lambda = a.lambda;
    s.window = a.window_w;
    s.exploration = a.c;
    s.epsilon = a.epsilon;
    s.seed = a.seed;
    s.familiarity = if a.rescaled_familiarity {
        FamiliarityMode::Rescaled
    } else {
        FamiliarityMode::Raw
    };
    s.time_budget = a.time_budget_ms.map(Duration::from_millis);
    s.max_actions = a.max_actions;
    s.reuse_tree = !a.no_reuse;
    Ok(Loaded {
        cfg,
        stream: LabeledStream::load(&a.stream)?,
        table: FrequencyTable::load(&a.table)?,
    })
}

fn load_run(r: &RunArgs) -> Result<(Loaded, Option<std::collections::BTreeMap<u32, f64>>), Error> {
    let mut loaded = load_common(&r.common)?;
    loaded.cfg.window = r.window;
    loaded.cfg.stride = r.stride;
    loaded.cfg.shift_threshold = r.shift_threshold;
    loaded.cfg.parallel = r.parallel;
    loaded.cfg.validate()?;
    let reference = match &r.reference_labels {
        Some(p) => Some(label_distribution(&LabeledStream::load(p)?.labels)),
        None => None,
    };
    Ok((loaded, reference))
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.into(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Eval { policy, run } => {
            let policy: Policy = policy.parse()?;
            let (l, reference) = load_run(&run)?;
            let report = sliding_window_eval(policy, &l.stream, &l.cfg, &l.table, reference.as_ref())?;
            report.write(&run.common.out)?;
            print!("{}{}", report.summary(), report.timing_summary());
        }
        Command::Compare { policies, run } => {
            let policies = policies.iter().map(|p| p.parse()).collect::<Result<Vec<Policy>, _>>()?;
            let (l, reference) = load_run(&run)?;
            let report = compare(&policies, &l.stream, &l.cfg, &l.table, reference.as_ref())?;
            report.write(&run.common.out)?;
            for r in &report.reports {
                print!("{}", r.summary());
            }
            print!("{}", report.paired_jsonl());
        }
        Command::GenStream {
            model,
            length,
            seed,
            out,
        } => {
            let mut m = StreamModel::load(&model)?;
            if let Some(s) = seed {
                m.seed = s;
            }
            m.generate(length).save(&out)?;
        }
        Command::BuildTable { dataset, bucket, out } => {
            let stream = LabeledStream::load(&dataset)?;
            let table = FrequencyTable::build(&stream.items, bucket)?;
            table.save(&out)?;
            println!(
                "{} types from {} parcels (bucket {})",
                table.vocabulary(),
                table.sample_count(),
                table.bucket()
            );
        }
        Command::VerifyTheory {
            instances,
            gamma,
            horizon,
            seed,
            out,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut lines = String::new();
            let mut failures = 0;
            for _ in 0..instances {
                let mdp = ToyMdp::random(&mut rng, gamma);
                let discounted = verify_gap_bound(&mdp)?;
                let finite = finite_horizon_gap(&mdp, horizon)?;
                failures += usize::from(!discounted.pass) + usize::from(!finite.pass);
                let row = serde_json::json!({ "mdp": mdp, "discounted": discounted, "finite_horizon": finite });
                lines.push_str(&row.to_string());
                lines.push('\n');
            }
            if let Some(out) = out {
                write(&out, &lines)?;
            }
            println!("{instances} instances, {failures} bound violations");
            if failures > 0 {
                return Err(Error::Budget(format!("{failures} gap-bound violations")));
            }
        }
        Command::Bench {
            common,
            trials_sweep,
            lookahead_sweep,
            states,
            repeats,
        } => {
            let l = load_common(&common)?;
            let deepest = lookahead_sweep
                .iter()
                .copied()
                .max()
                .unwrap_or(1)
                .max(l.cfg.search.horizon);
            let snapshots = bench_states(&l.cfg, &l.stream.items, states, deepest);
            let mut text = String::new();
            for (axis, values) in [
                (SweepAxis::Trials, &trials_sweep),
                (SweepAxis::Horizon, &lookahead_sweep),
            ] {
                let r = bench_sweep(axis, values, &snapshots, &l.cfg, &l.table, repeats)?;
                text.push_str(&r.to_jsonl());
                println!(
                    "{axis}: slope {:.3e} s/unit, intercept {:.3e} s, r2 {:.4}",
                    r.fit.slope, r.fit.intercept, r.fit.r2
                );
            }
            write(&common.out.join("bench.jsonl"), &text)?;
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } => 3,
        Error::Io { .. } => 4,
        Error::UnknownName { .. } => 5,
        Error::Budget(_) => 6,
        Error::Config(_) | Error::InvalidDims(_) | Error::Unnormalized(_) | Error::EmptyDataset => 7,
        Error::NoConvergence { .. } => 8,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
