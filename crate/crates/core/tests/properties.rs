mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use binplan::actions::candidate_actions;
use binplan::critic::{softmax, Critic, EmsCritic, HeuristicPrior, ItemSampler, RolloutCritic};
use binplan::distribution::{discretize, tv_distance, FamiliarityMode, FrequencyTable};
use binplan::geometry::{BinSpec, BinState};
use binplan::search::{plan, shift_aware_prior, SearchConfig};
use binplan::stream::{BatchType, DimSampler, LabeledStream, Span, StreamModel};
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spec6() -> BinSpec {
    BinSpec::new(6, 6, 6).unwrap()
}

fn distribution(weights: &[f64]) -> BTreeMap<usize, f64> {
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).enumerate().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ems_equals_maximal_empty_boxes(seed in any::<u64>(), steps in 1usize..14) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bin = random_state(&mut rng, spec6(), steps, 4);
        let got: BTreeSet<_> = bin.ems().iter().map(|e| (e.min, e.max)).collect();
        prop_assert_eq!(got.len(), bin.ems().len(), "duplicate spaces");
        prop_assert_eq!(got, brute_force_ems(bin.spec(), bin.placed()));
    }

    #[test]
    fn heightmap_and_volume_follow_the_boxes(seed in any::<u64>(), steps in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bin = random_state(&mut rng, BinSpec::new(8, 6, 7).unwrap(), steps, 4);
        prop_assert_eq!(bin.heightmap().cells(), &rebuilt_heights(bin.spec(), bin.placed())[..]);
        let occupied = voxels(bin.spec(), bin.placed()).iter().filter(|&&v| v).count() as u64;
        prop_assert_eq!(bin.packed_volume(), occupied);
        prop_assert!(bin.utilization() >= 0.0 && bin.utilization() <= 1.0);
        prop_assert!(bin.open_volume() + bin.packed_volume() <= bin.spec().volume());
    }

    #[test]
    fn candidates_are_feasible_unique_and_ordered(seed in any::<u64>(), steps in 0usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bin = random_state(&mut rng, spec6(), steps, 3);
        let d = random_dims(&mut rng, 4);
        let actions = candidate_actions(&bin, d);
        let unique: HashSet<_> = actions.iter().collect();
        prop_assert_eq!(unique.len(), actions.len());
        prop_assert!(actions.windows(2).all(|w| w[0].dbl_key() <= w[1].dbl_key()));
        for a in &actions {
            prop_assert!(bin.feasible(d, *a));
            let next = bin.place(d, *a).unwrap();
            prop_assert_eq!(next.packed_volume(), bin.packed_volume() + d.volume());
            let waste = bin.wasted_space_penalty(d, *a);
            prop_assert!((0.0..=1.0).contains(&waste));
        }
    }

    #[test]
    fn critic_values_stay_within_the_free_volume(seed in any::<u64>(), steps in 0usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bin = random_state(&mut rng, spec6(), steps, 3);
        let free = 1.0 - bin.utilization() + 1e-9;
        let v = EmsCritic::default().value(&bin);
        prop_assert!(v >= 0.0 && v <= free);
        let table = FrequencyTable::build(&[dims(1, 2, 1), dims(2, 2, 2), dims(3, 1, 2)], 1).unwrap();
        let rollout = RolloutCritic::new(ItemSampler::from_table(&table), seed);
        let r = rollout.value(&bin);
        prop_assert!(r >= 0.0 && r <= free);
        prop_assert_eq!(r, rollout.value(&bin));
    }

    #[test]
    fn tv_is_a_metric(
        a in prop::collection::vec(0.01f64..1.0, 5),
        b in prop::collection::vec(0.01f64..1.0, 5),
        c in prop::collection::vec(0.01f64..1.0, 5),
    ) {
        let (p, q, r) = (distribution(&a), distribution(&b), distribution(&c));
        let pq = tv_distance(&p, &q).unwrap();
        prop_assert!((pq - tv_distance(&q, &p).unwrap()).abs() < 1e-15);
        prop_assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        prop_assert!((0.0..=1.0).contains(&pq));
        if a != b {
            prop_assert!(pq > 0.0);
        }
        let via = tv_distance(&p, &r).unwrap() + tv_distance(&r, &q).unwrap();
        prop_assert!(pq <= via + 1e-12);
    }

    #[test]
    fn shift_aware_prior_is_a_distribution(
        raw in prop::collection::vec(0.0f64..1.0, 1..20),
        alpha in 0.0f64..=1.0,
    ) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 0.0);
        let prior: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let mixed = shift_aware_prior(&prior, alpha);
        prop_assert!((mixed.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let floor = (1.0 - alpha) / prior.len() as f64;
        prop_assert!(mixed.iter().all(|&p| p >= floor - 1e-12));
    }

    #[test]
    fn softmax_is_shift_invariant(
        scores in prop::collection::vec(-5.0f64..5.0, 1..12),
        shift in -100.0f64..100.0,
        tau in 0.05f64..2.0,
    ) {
        let p = softmax(&scores, tau);
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        let q = softmax(&shifted, tau);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (x, y) in p.iter().zip(&q) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn familiarity_is_monotone(
        counts in prop::collection::vec(1u64..50, 4),
        window in prop::collection::vec(0usize..5, 1..6),
        w in 1usize..5,
        drop in 0usize..4,
    ) {
        let types: Vec<_> = (0..4).map(|i| discretize(dims(4 * (i + 1), 4, 4), 4)).collect();
        let table = |c: &[u64]| {
            FrequencyTable::from_counts(4, types.iter().copied().zip(c.iter().copied()).collect()).unwrap()
        };
        // Index 4 is a type the table has never seen.
        let items: Vec<_> = window.iter().map(|&i| dims(4 * (i as u32 + 1), 4, 4)).collect();
        let base = table(&counts);
        let alpha = base.familiarity(&items, w, FamiliarityMode::Raw);
        prop_assert!((0.0..=1.0).contains(&alpha));

        // Lowering one type's probability (more mass elsewhere) cannot raise
        // alpha for a window made only of that type.
        let only: Vec<_> = vec![types[drop].dims(); w];
        let mut boosted = counts.clone();
        for (i, c) in boosted.iter_mut().enumerate() {
            if i != drop {
                *c += 10;
            }
        }
        let before = base.familiarity(&only, w, FamiliarityMode::Raw);
        let after = table(&boosted).familiarity(&only, w, FamiliarityMode::Raw);
        prop_assert!(after <= before);
    }

    #[test]
    fn discretize_is_idempotent(l in 1u32..60, w in 1u32..60, h in 1u32..60, q in 1u32..9) {
        let t = discretize(dims(l, w, h), q);
        prop_assert!([t.l, t.w, t.h].iter().all(|v| v.is_multiple_of(q)));
        prop_assert!(t.l >= q && t.w >= q && t.h >= q);
        prop_assert_eq!(discretize(t.dims(), q), t);
    }

    #[test]
    fn stream_files_round_trip(seed in any::<u64>(), n in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let items: Vec<_> = (0..n).map(|_| random_dims(&mut rng, 9)).collect();
        let s = LabeledStream { labels: (0..n).map(|i| Some((i % 3) as u32)).collect(), items };
        let back = LabeledStream::parse(&s.to_text(), "mem".as_ref()).unwrap();
        prop_assert_eq!(&back, &s);
        let table = FrequencyTable::build(&s.items, 2).unwrap();
        prop_assert_eq!(FrequencyTable::parse(&table.to_text(), "mem".as_ref()).unwrap(), table);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn planner_returns_a_feasible_candidate(seed in any::<u64>(), horizon in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (bin, queue) = random_instance(&mut rng, spec6(), 4, horizon);
        let table = FrequencyTable::build(&queue, 1).unwrap();
        let cfg = SearchConfig { horizon, trials: 50, seed, ..SearchConfig::default() };
        match plan(&bin, &queue, &cfg, &EmsCritic::default(), &HeuristicPrior::default(), &table) {
            Ok(out) => {
                prop_assert!(candidate_actions(&bin, queue[0]).contains(&out.action));
                let visits: u64 = out.diagnostics.root_edges.iter().map(|e| e.visits).sum();
                prop_assert_eq!(visits, 50);
                prop_assert!(out.diagnostics.counters.max_expansions_per_trial <= horizon);
            }
            Err(binplan::Error::BinFull) => prop_assert!(candidate_actions(&bin, queue[0]).is_empty()),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }
}

#[test]
fn long_run_histogram_matches_the_mixture() {
    let model = StreamModel {
        seed: 5,
        batch_length: Span::new(1, 40),
        batches: vec![
            BatchType {
                name: "small".into(),
                weight: 0.3,
                sampler: DimSampler::Uniform {
                    l: Span::new(1, 2),
                    w: Span::new(1, 2),
                    h: Span::new(1, 1),
                },
            },
            BatchType {
                name: "large".into(),
                weight: 0.7,
                sampler: DimSampler::Uniform {
                    l: Span::new(2, 3),
                    w: Span::new(2, 2),
                    h: Span::new(1, 2),
                },
            },
        ],
    };
    let stream = model.generate(100_000);
    let mut counts: BTreeMap<_, f64> = BTreeMap::new();
    for d in &stream.items {
        *counts.entry(*d).or_default() += 1.0;
    }
    let empirical: BTreeMap<_, f64> = counts.into_iter().map(|(d, c)| (d, c / 100_000.0)).collect();
    // Batch lengths do not depend on the type, so item frequencies follow the batch weights.
    let exact: BTreeMap<_, f64> = model.mixture_support().into_iter().collect();
    let tv = tv_distance(&empirical, &exact).unwrap();
    assert!(tv < 0.03, "TV between the long-run histogram and the mixture is {tv}");
}

#[test]
fn ems_of_a_fresh_bin_and_reconstruction() {
    let spec = spec6();
    let bin = BinState::empty(spec);
    assert_eq!(brute_force_ems(&spec, &[]).len(), 1);
    assert_eq!(bin.ems().len(), 1);
}
