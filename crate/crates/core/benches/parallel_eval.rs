//! Monte-Carlo policy evaluation: sequential loop vs. the rayon path.
//!
//! Both variants run the same seeded episodes and must agree exactly; only
//! the scheduling differs.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use defensim_core::decision::{run_episode, EpisodeSpec, Strategy};
use defensim_core::usecase::flow::{build_flow_pomdp, threshold_strategy, FlowPomdpConfig};
use defensim_core::usecase::recovery::{build_recovery_pomdp, RecoveryConfig};
use defensim_core::{par, seed};

fn returns(spec: &EpisodeSpec<'_>, episodes: usize, parallel: bool) -> Vec<f64> {
    let one = |i: usize| {
        let mut rng = seed::rng(seed::derive(17, &[i as u64]));
        run_episode(spec, &mut rng).expect("episode").discounted_return
    };
    if parallel {
        #[cfg(feature = "parallel")]
        return par::map_indices_parallel(episodes, one);
    }
    par::map_indices_sequential(episodes, one)
}

fn bench_mc(c: &mut Criterion) {
    let flow = build_flow_pomdp(&FlowPomdpConfig::default()).expect("flow model");
    let flow_def = threshold_strategy(0.75, 3).expect("threshold");
    let flow_att = Strategy::uniform(flow.n_states(), 1);
    let recovery = build_recovery_pomdp(&RecoveryConfig::default()).expect("recovery model");
    let rec_def = Strategy::uniform(recovery.n_states(), recovery.n_defender_actions());
    let rec_att = Strategy::uniform(recovery.n_states(), recovery.n_attacker_actions());
    let cases = [
        ("flow-pomdp", EpisodeSpec { kernel: &flow, defender: &flow_def, attacker: &flow_att, horizon: 1000 }),
        ("recovery-pomdp", EpisodeSpec { kernel: &recovery, defender: &rec_def, attacker: &rec_att, horizon: 100 }),
    ];

    let mut group = c.benchmark_group("monte_carlo_eval");
    group.sample_size(10);
    for (name, spec) in &cases {
        let episodes = 2000;
        assert_eq!(returns(spec, 64, false), returns(spec, 64, true));
        group.bench_with_input(BenchmarkId::new("sequential", name), &episodes, |b, &n| {
            b.iter(|| black_box(returns(spec, n, false)))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", name), &episodes, |b, &n| {
            b.iter(|| black_box(returns(spec, n, true)))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_mc);
criterion_main!(benches);
