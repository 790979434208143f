use defensim_core::seed;
use defensim_core::sysid::{
    discretize_mixture, fit_empirical, fit_gmm, ingest_traces, parse_csv, parse_json_lines, Categorical, Channel, Component,
    MixtureModel, SysidError, TraceFormat,
};
use proptest::prelude::*;
use rand::Rng;

fn sample_mixture(m: &MixtureModel, n: usize, s: u64) -> Vec<f64> {
    let mut rng = seed::rng(s);
    (0..n).map(|_| m.sample(&mut rng)).collect()
}

fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn em_never_decreases_the_likelihood(s in any::<u64>(), k in 1usize..4, n in 60usize..400) {
        let mut rng = seed::rng(s);
        let comps: Vec<Component> = (0..3)
            .map(|_| Component { weight: 1.0 / 3.0, mean: rng.random_range(-50.0..50.0), stddev: rng.random_range(0.5..10.0) })
            .collect();
        let xs = sample_mixture(&MixtureModel { components: comps, support: (-100, 100) }, n, s ^ 9);
        let fit = fit_gmm(&xs, k, s, 200, 1e-10).unwrap();
        for w in fit.log_likelihood.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-7 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn discretization_is_a_distribution(mean in -50.0f64..150.0, sd in 0.1f64..80.0, lo in -20i64..20, width in 0i64..200) {
        let m = MixtureModel::single(mean, sd, (lo, lo + width));
        let p = discretize_mixture(&m).unwrap();
        prop_assert_eq!(p.len() as i64, width + 1);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
    }
}

#[test]
fn empirical_fit_tightens_with_more_data() {
    let m = MixtureModel {
        components: vec![Component { weight: 0.6, mean: 30.0, stddev: 5.0 }, Component { weight: 0.4, mean: 70.0, stddev: 8.0 }],
        support: (0, 120),
    };
    let truth = discretize_mixture(&m).unwrap();
    let mut means = Vec::new();
    for size in [100usize, 1000, 21000] {
        let mut total = 0.0;
        for rep in 0..5u64 {
            let values: Vec<u64> =
                sample_mixture(&m, size, seed::derive(5, &[rep, size as u64])).iter().map(|x| x.round().clamp(0.0, 120.0) as u64).collect();
            total += tv(&Categorical::from_values(&values).dense(120), &truth);
        }
        means.push(total / 5.0);
    }
    assert!(means[0] > means[1] && means[1] > means[2], "{means:?}");
}

#[test]
fn single_component_fit_is_the_sample_moments() {
    let xs = sample_mixture(&MixtureModel::single(12.0, 3.0, (0, 30)), 500, 4);
    let fit = fit_gmm(&xs, 1, 0, 100, 1e-12).unwrap();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let c = fit.model.components[0];
    assert!((c.weight - 1.0).abs() < 1e-12);
    assert!((c.mean - mean).abs() < 1e-9);
    assert!((c.stddev - sd).abs() < 1e-9);
}

#[test]
fn two_separated_components_are_recovered() {
    let truth = MixtureModel {
        components: vec![Component { weight: 0.3, mean: 0.0, stddev: 1.0 }, Component { weight: 0.7, mean: 20.0, stddev: 2.0 }],
        support: (-10, 40),
    };
    let xs = sample_mixture(&truth, 5000, 8);
    let fit = fit_gmm(&xs, 2, 1, 500, 1e-10).unwrap();
    let mut got = fit.model.components.clone();
    got.sort_by(|a, b| a.mean.total_cmp(&b.mean));
    for (g, t) in got.iter().zip(&truth.components) {
        assert!((g.weight - t.weight).abs() < 0.03, "{got:?}");
        assert!((g.mean - t.mean).abs() < 0.2, "{got:?}");
        assert!((g.stddev - t.stddev).abs() < 0.15, "{got:?}");
    }
}

#[test]
fn too_few_samples_are_rejected() {
    assert_eq!(fit_gmm(&[1.0; 15], 2, 0, 10, 1e-6).unwrap_err(), SysidError::TooFewSamples { needed: 20, got: 15 });
}

#[test]
fn ingest_examples() {
    let jl = parse_json_lines("{\"t\":1,\"severe\":1,\"warning\":9,\"logins\":4,\"label\":1}\n\n{\"t\":2,\"severe\":0,\"warning\":3,\"logins\":0,\"label\":0}\n").unwrap();
    assert_eq!(jl.len(), 2);
    assert_eq!(jl.records[0].warning, 9);
    assert_eq!(jl.channel_values(Channel::Severe, 1), vec![1]);

    let csv = parse_csv("t,severe,warning,logins,label\n1,1,9,4,1\n2,0,3,0,0\n").unwrap();
    assert_eq!(csv, jl);

    let err = parse_json_lines("{\"t\":1,\"severe\":-1,\"warning\":0,\"logins\":0,\"label\":0}").unwrap_err();
    assert_eq!(err, SysidError::NegativeCount { line: 1, field: "severe" });
    assert!(matches!(parse_csv("t,severe\n1,2\n"), Err(SysidError::FileFormat { line: 1, .. })));
    assert!(matches!(parse_json_lines("{\"t\":1,\"severe\":0,\"warning\":0,\"logins\":0,\"label\":2}"), Err(SysidError::FileFormat { .. })));

    assert_eq!(fit_empirical(&jl, Channel::Warning, 0).unwrap().prob(3), 1.0);
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("t.csv");
    std::fs::write(&path, "t,severe,warning,logins,label\n1,1,9,4,1\n2,0,3,0,0\n").unwrap();
    assert_eq!(ingest_traces(&path, TraceFormat::from_path(&path)).unwrap(), jl);
    assert!(matches!(ingest_traces(&tmp.path().join("none.jsonl"), TraceFormat::JsonLines), Err(SysidError::Io { .. })));
}
