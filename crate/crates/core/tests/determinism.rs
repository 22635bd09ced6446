//! Reproducibility and seed-to-seed spread of the estimators.

use suppressor_lab::empirical::{self, EstimatorConfig, ValueFunction};
use suppressor_lab::harness::{run_sweep, SweepGrid};
use suppressor_lab::model::{sample_dataset, Feature, GenParams};

fn setting() -> GenParams {
    GenParams::base(0.8, 0.8, 0.5).unwrap()
}

#[test]
fn datasets_depend_only_on_seed_and_index() {
    let p = setting();
    let long = sample_dataset(&p, 10_000, 3).unwrap();
    let short = sample_dataset(&p, 5_000, 3).unwrap();
    assert_eq!(&long.records[..5_000], &short.records[..]);
    assert_ne!(long.records, sample_dataset(&p, 10_000, 4).unwrap().records);
}

#[test]
fn estimators_are_bit_identical_per_seed() {
    let p = setting();
    let cfg = EstimatorConfig::quick().with_seed(21);
    assert_eq!(empirical::est_pattern(&p, &cfg).unwrap(), empirical::est_pattern(&p, &cfg).unwrap());
    assert_eq!(empirical::est_firm(&p, &cfg).unwrap(), empirical::est_firm(&p, &cfg).unwrap());
    let x = Some([1.0, 0.0]);
    assert_eq!(
        empirical::est_shapley(&p, &cfg, ValueFunction::Conditional, x).unwrap(),
        empirical::est_shapley(&p, &cfg, ValueFunction::Conditional, x).unwrap()
    );
}

#[test]
fn sweep_reports_are_identical() {
    let grid = SweepGrid {
        random_instances: 2,
        ..SweepGrid::single(-0.4, 0.5, 0.9)
    };
    let cfg = EstimatorConfig::quick().with_seed(5);
    let a = run_sweep(&grid, &cfg).unwrap().to_json().unwrap();
    let b = run_sweep(&grid, &cfg).unwrap().to_json().unwrap();
    assert_eq!(a, b);
}

/// Spread over ten seeds stays within eight reported standard errors.
fn check_spread(name: &str, draws: Vec<(f64, f64)>) {
    let (min, max) = draws.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| (lo.min(*v), hi.max(*v)));
    let se = draws.iter().map(|(_, s)| *s).sum::<f64>() / draws.len() as f64;
    assert!(max - min < 8.0 * se, "{name}: spread {} vs 8 SE {}", max - min, 8.0 * se);
}

#[test]
fn seed_spread_matches_standard_errors() {
    let p = setting();
    let seeds = 0..10u64;
    let cfg = |s| EstimatorConfig::quick().with_seed(100 + s);
    check_spread(
        "pattern e1",
        seeds.clone().map(|s| {
            let e = empirical::est_pattern(&p, &cfg(s)).unwrap();
            (e.e1(), e.std_error[0])
        }).collect(),
    );
    check_spread(
        "pfi e2",
        seeds.clone().map(|s| {
            let e = empirical::est_pfi(&p, &cfg(s)).unwrap();
            (e.e2(), e.std_error[1])
        }).collect(),
    );
    check_spread(
        "pd x2",
        seeds.clone().map(|s| {
            let e = empirical::est_pd(&p, &cfg(s), Feature::X2, 1.0).unwrap();
            (e.value, e.std_error)
        }).collect(),
    );
    check_spread(
        "mplot x1",
        seeds.map(|s| {
            let e = empirical::est_mplot(&p, &cfg(s), Feature::X1, 1.0).unwrap();
            (e.value, e.std_error)
        }).collect(),
    );
}
