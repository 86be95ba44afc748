//! Property tests for the cross-module invariants: overhead closed forms,
//! tuner sign structure and scale invariance, gradients, SGD and simulator
//! determinism.

use fedtune::data::{generate_synthetic, SyntheticSpec};
use fedtune::model::{init_params, loss, loss_and_gradient, train_local, MlpSpec, SgdOptions};
use fedtune::overhead::{round_overhead, trace_overhead, RoundParticipation};
use fedtune::sim::{run_training, AggregatorKind, RunConfig, TunerSetup};
use fedtune::tuner::{Decision, FedTune, TunerConfig};
use fedtune::{CostConstants, HyperParams, LocalPasses, OverheadVector, Preferences};
use proptest::prelude::*;

const TABLE_SIGNS: [(i8, i8); 4] = [(1, -1), (1, 1), (-1, -1), (-1, 1)];

fn pure(i: usize) -> Preferences {
    let mut w = [0.0; 4];
    w[i] = 1.0;
    Preferences::from_array(w).unwrap()
}

fn any_prefs() -> impl Strategy<Value = Preferences> {
    prop::array::uniform4(0.0f64..1.0).prop_filter("nonzero", |w| w.iter().sum::<f64>() > 1e-3).prop_map(|w| {
        let s: f64 = w.iter().sum();
        Preferences::from_array(w.map(|x| x / s)).unwrap()
    })
}

fn participation() -> impl Strategy<Value = Vec<(Vec<usize>, u32)>> {
    prop::collection::vec((prop::collection::vec(1usize..1000, 1..20), 1u32..16), 1..50)
}

/// Interval overheads between activations; every round activates.
fn intervals() -> impl Strategy<Value = Vec<[f64; 4]>> {
    prop::collection::vec(prop::array::uniform4(1.0f64..1e6), 4..40)
}

fn feed(tuner: &mut FedTune, stream: &[[f64; 4]], scale: f64) -> Vec<Decision> {
    let mut cumulative = OverheadVector::ZERO;
    stream
        .iter()
        .enumerate()
        .map(|(r, step)| {
            cumulative = cumulative + OverheadVector::from_array(*step).scale(scale);
            let acc = (r + 1) as f64 * 0.02;
            tuner.observe_round(acc.min(1.0), cumulative).unwrap().expect("every round activates")
        })
        .collect()
}

fn tuner(prefs: Preferences) -> FedTune {
    let cfg = TunerConfig { epsilon: 0.015, ..TunerConfig::for_population(100) };
    FedTune::new(cfg, prefs, HyperParams::new(20, 20).unwrap()).unwrap()
}

fn moves(ds: &[Decision]) -> Vec<(HyperParams, i8, i8, bool)> {
    ds.iter().map(|d| (d.next, d.delta_m_sign, d.delta_e_sign, d.penalized)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn loop_totals_equal_closed_forms(rounds in participation(), c in prop::array::uniform4(1u64..10_000)) {
        let costs = CostConstants::new(c[0] as f64, c[1] as f64, c[2] as f64, c[3] as f64).unwrap();
        let trace: Vec<RoundParticipation> =
            rounds.iter().enumerate().map(|(r, (s, e))| RoundParticipation::new(r, s.clone(), *e)).collect();
        let totals = trace_overhead(&trace, &costs).unwrap();
        let sum_max: u64 = rounds.iter().map(|(s, e)| *e as u64 * *s.iter().max().unwrap() as u64).sum();
        let sum_all: u64 = rounds.iter().map(|(s, e)| *e as u64 * s.iter().sum::<usize>() as u64).sum();
        let sum_m: u64 = rounds.iter().map(|(s, _)| s.len() as u64).sum();
        prop_assert_eq!(totals.comp_time.to_bits(), ((c[0] * sum_max) as f64).to_bits());
        prop_assert_eq!(totals.trans_time.to_bits(), ((c[1] * rounds.len() as u64) as f64).to_bits());
        prop_assert_eq!(totals.comp_load.to_bits(), ((c[2] * sum_all) as f64).to_bits());
        prop_assert_eq!(totals.trans_load.to_bits(), ((c[3] * sum_m) as f64).to_bits());
    }

    #[test]
    fn constant_m_trans_load_is_c4_r_m(m in 1usize..30, r in 1usize..60, c4 in 1.0f64..1e4) {
        let costs = CostConstants::new(1.0, 1.0, 1.0, c4).unwrap();
        let trace: Vec<_> = (0..r).map(|i| RoundParticipation::new(i, vec![3; m], 1)).collect();
        let per_round = round_overhead(&trace[0], &costs).unwrap().trans_load;
        prop_assert_eq!(per_round, c4 * m as f64);
        let total = trace_overhead(&trace, &costs).unwrap().trans_load;
        prop_assert!((total - c4 * (r * m) as f64).abs() <= 1e-9 * total);
    }

    #[test]
    fn pure_preferences_follow_the_sign_table(stream in intervals(), which in 0usize..4) {
        let mut t = tuner(pure(which));
        let decisions = feed(&mut t, &stream, 1.0);
        let (sm, se) = TABLE_SIGNS[which];
        let mut last = HyperParams::new(20, 20).unwrap();
        for d in decisions.iter().filter(|d| !d.warm_up) {
            prop_assert_eq!((d.delta_m_sign, d.delta_e_sign), (sm, se));
            prop_assert!((d.next.m as i64 - last.m as i64) * sm as i64 >= 0);
            prop_assert!((d.next.e as i64 - last.e as i64) * se as i64 >= 0);
            last = d.next;
        }
        prop_assert!(t.state.eta.iter().chain(&t.state.zeta).all(|r| *r >= 0.0));
    }

    #[test]
    fn long_pure_streams_absorb_at_the_corner(which in 0usize..4, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let stream: Vec<[f64; 4]> = (0..48).map(|_| std::array::from_fn(|_| rng.random_range(1.0..1e6))).collect();
        let mut t = tuner(pure(which));
        feed(&mut t, &stream, 1.0);
        let (sm, se) = TABLE_SIGNS[which];
        // 46 decisions from (20, 20): M reaches 1 or 66, E reaches 1 or the cap 64
        let end = t.current();
        prop_assert_eq!(end.m, if sm > 0 { 66 } else { 1 });
        prop_assert_eq!(end.e, if se > 0 { 64 } else { 1 });
    }

    #[test]
    fn common_scaling_leaves_decisions_unchanged(
        stream in intervals(),
        prefs in any_prefs(),
        exponent in -20i32..20,
        which in 0usize..4,
        factor in 1e-3f64..1e3,
    ) {
        let (mut a, mut b) = (tuner(prefs), tuner(prefs));
        prop_assert_eq!(moves(&feed(&mut a, &stream, 1.0)), moves(&feed(&mut b, &stream, 2f64.powi(exponent))));
        let (mut a, mut b) = (tuner(pure(which)), tuner(pure(which)));
        prop_assert_eq!(moves(&feed(&mut a, &stream, 1.0)), moves(&feed(&mut b, &stream, factor)));
    }

    #[test]
    fn analytic_gradients_match_finite_differences(seed in any::<u64>(), rows in prop::collection::vec((prop::array::uniform4(-2.0f64..2.0), 0usize..3), 8)) {
        let spec = MlpSpec::new(4, 5, 3).unwrap();
        let params = init_params(spec, seed);
        let features: Vec<f64> = rows.iter().flat_map(|(x, _)| *x).collect();
        let labels: Vec<usize> = rows.iter().map(|(_, l)| *l).collect();
        let (_, g) = loss_and_gradient(&params, &features, &labels);
        let h = 1e-6;
        let mut diff = 0.0;
        let mut norm = 0.0;
        for (i, gi) in g.iter().enumerate() {
            let mut p = params.clone();
            p.values[i] += h;
            let up = loss(&p, &features, &labels);
            p.values[i] -= 2.0 * h;
            let num = (up - loss(&p, &features, &labels)) / (2.0 * h);
            diff += (gi - num).powi(2);
            norm += gi.powi(2) + num.powi(2);
        }
        prop_assert!(diff.sqrt() <= 1e-4 * norm.sqrt().max(1e-8));
    }

    #[test]
    fn plain_sgd_step_is_params_minus_lr_gradient(seed in any::<u64>(), lr in 1e-4f64..0.5, n in 1usize..10) {
        let d = generate_synthetic(&SyntheticSpec { k_clients: 1, input_dim: 10, mean_shard_size: n, size_skew: 0.0, test_size: 1, ..SyntheticSpec::default() }, seed).unwrap();
        let shard = &d.shards[0];
        let params = init_params(MlpSpec::new(10, 3, 10).unwrap(), seed);
        let opts = SgdOptions { batch_size: n, lr, momentum: 0.0 };
        let (trained, steps) = train_local(&params, shard, LocalPasses::Whole(1), &opts, seed).unwrap();
        prop_assert_eq!(steps, 1);
        let (_, g) = loss_and_gradient(&params, &shard.features, &shard.labels);
        for ((w, t), gi) in params.values.iter().zip(&trained.values).zip(&g) {
            prop_assert!((w - lr * gi - t).abs() <= 1e-12 * (1.0 + w.abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn simulator_is_deterministic_and_books_exactly(
        seed in 0u64..1000,
        m in 1usize..8,
        e in 1u32..4,
        kind in 0usize..3,
        tuned in any::<bool>(),
    ) {
        let data = generate_synthetic(&SyntheticSpec { k_clients: 10, mean_shard_size: 12, test_size: 100, ..SyntheticSpec::default() }, seed).unwrap();
        let aggregator = [AggregatorKind::FedAvg, AggregatorKind::FedNova, AggregatorKind::fedadagrad_default()][kind];
        let cfg = RunConfig {
            hidden_dim: 4,
            initial_m: m,
            initial_e: LocalPasses::Whole(e),
            aggregator,
            max_rounds: 15,
            target_accuracy: 0.99,
            tuner: tuned.then(|| TunerSetup {
                config: TunerConfig { epsilon: 0.005, ..TunerConfig::for_population(10) },
                prefs: Preferences::equal(),
            }),
            seed,
            ..RunConfig::default()
        };
        let a = run_training(&cfg, &data).unwrap();
        let b = run_training(&RunConfig { parallel: false, ..cfg.clone() }, &data).unwrap();
        prop_assert_eq!(&a, &b);
        let mut cumulative = OverheadVector::ZERO;
        for (rec, p) in a.records.iter().zip(a.participation()) {
            cumulative = cumulative + round_overhead(&p, &a.summary.costs).unwrap();
            prop_assert_eq!(rec.cumulative, cumulative);
        }
        prop_assert_eq!(trace_overhead(&a.participation(), &a.summary.costs).unwrap(), a.summary.totals);
    }
}
