mod common;

use common::{dense_policy_value, matrix_game, random_kernel, random_strategy};
use defensim_core::decision::{best_response, Player, Strategy, VALUE_TOLERANCE};
use defensim_core::learning::fictitious::{fictitious_play, FpParams, ResponderKind};
use defensim_core::learning::rollout::{rollout_policy_exact, RolloutContext};
use defensim_core::learning::spsa::{spsa_optimize, SpsaParams};
use defensim_core::seed;
use proptest::prelude::*;
use rand_distr::{Distribution, Normal};

fn argmax(row: &[f64]) -> usize {
    (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b })
}

#[test]
fn spsa_finds_the_peak_of_a_noisy_quadratic() {
    for s in 0..5 {
        let params = SpsaParams { c: 0.1, a: 0.5, big_a: 10.0, iterations: 400, seed: s, ..SpsaParams::default() };
        let objective = |theta: &[f64], eval_seed: u64| {
            let noise = Normal::new(0.0, 0.01).unwrap().sample(&mut seed::rng(eval_seed));
            Ok(-(theta[0] - 0.3).powi(2) + noise)
        };
        let res = spsa_optimize(objective, &[0.9], (0.0, 1.0), &params).unwrap();
        assert!((res.theta[0] - 0.3).abs() < 0.05, "seed {s}: {}", res.theta[0]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_rollout_never_hurts(s in any::<u64>(), ns in 2usize..7, nd in 2usize..4, gamma in 0.0f64..0.95, lookahead in 1usize..3) {
        let k = random_kernel(s, ns, nd, 1, gamma);
        let base = random_strategy(s ^ 11, ns, nd);
        let att = Strategy::uniform(ns, 1);
        let improved = rollout_policy_exact(&RolloutContext { kernel: &k, base: &base, attacker: &att }, lookahead).unwrap();
        let before = dense_policy_value(&k, &base, &att);
        let after = dense_policy_value(&k, &improved, &att);
        for (b, a) in before.iter().zip(&after) {
            prop_assert!(a >= &(b - 1e-8), "{a} < {b}");
        }
    }

    #[test]
    fn rollout_of_an_optimal_base_is_the_base(s in any::<u64>(), ns in 2usize..7, gamma in 0.0f64..0.95) {
        let k = random_kernel(s, ns, 3, 1, gamma);
        let att = Strategy::uniform(ns, 1);
        let opt = best_response(&k, &att, Player::Defender, 1e-12).unwrap();
        let rolled = rollout_policy_exact(&RolloutContext { kernel: &k, base: &opt.strategy, attacker: &att }, 1).unwrap();
        for st in 0..ns {
            let a = argmax(&opt.strategy.at_state(st, ns).unwrap());
            let b = argmax(&rolled.at_state(st, ns).unwrap());
            prop_assert_eq!(a, b, "state {}", st);
        }
    }

    #[test]
    fn fictitious_play_averages_are_distributions(s in any::<u64>(), ns in 1usize..4, gamma in 0.0f64..0.9) {
        let k = random_kernel(s, ns, 2, 3, gamma);
        let res = fictitious_play(&k, &FpParams { rounds: 25, responder: ResponderKind::Exact, eval_every: 5, seed: s, ..FpParams::default() }).unwrap();
        for strat in [&res.defender, &res.attacker] {
            for row in strat.state_table(ns).unwrap() {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(row.iter().all(|p| *p >= 0.0));
            }
        }
        prop_assert!(res.curve.iter().all(|p| p.exploitability >= -1e-9));
    }
}

#[test]
fn fictitious_play_reaches_a_pure_saddle_point() {
    // Row 1 / column 1 is a saddle point with value 2.
    let k = matrix_game(&[vec![3.0, 1.0], vec![4.0, 2.0]]);
    let res = fictitious_play(&k, &FpParams { rounds: 1000, responder: ResponderKind::Exact, eval_every: 100, ..FpParams::default() }).unwrap();
    let d = res.defender.at_state(0, 1).unwrap();
    let a = res.attacker.at_state(0, 1).unwrap();
    assert!(d[1] > 0.99 && a[1] > 0.99, "{d:?} {a:?}");
    let last = res.curve.last().unwrap();
    assert!((last.value - 2.0).abs() < 0.01, "{}", last.value);
    assert!(last.exploitability < 0.01);
    let br = best_response(&k, &res.attacker, Player::Defender, VALUE_TOLERANCE).unwrap();
    assert!((br.values[0] - 2.0).abs() < 0.01);
}
