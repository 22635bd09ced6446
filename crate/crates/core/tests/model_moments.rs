//! Sample moments of the generative model against its definition.

use suppressor_lab::model::{
    bayes_rule, class_conditional_density, joint_density, mahalanobis_classify, sample_dataset, GenParams, Label,
};

const N: usize = 1_000_000;

struct Moments {
    mean: [f64; 2],
    var: [f64; 2],
    cov: f64,
    cov_y: [f64; 2],
    positive: f64,
}

fn moments(p: &GenParams, seed: u64) -> Moments {
    let data = sample_dataset(p, N, seed).unwrap();
    let n = data.len() as f64;
    let mut mean = [0.0; 2];
    let mut ybar = 0.0;
    for r in data.iter() {
        mean[0] += r.x[0] / n;
        mean[1] += r.x[1] / n;
        ybar += r.y.value() / n;
    }
    let (mut var, mut cov, mut cov_y) = ([0.0; 2], 0.0, [0.0; 2]);
    for r in data.iter() {
        let d = [r.x[0] - mean[0], r.x[1] - mean[1]];
        var[0] += d[0] * d[0] / n;
        var[1] += d[1] * d[1] / n;
        cov += d[0] * d[1] / n;
        cov_y[0] += d[0] * (r.y.value() - ybar) / n;
        cov_y[1] += d[1] * (r.y.value() - ybar) / n;
    }
    let positive = data.iter().filter(|r| r.y == Label::Positive).count() as f64 / n;
    Moments {
        mean,
        var,
        cov,
        cov_y,
        positive,
    }
}

#[test]
fn first_and_second_moments() {
    let p = GenParams::base(0.8, 0.8, 0.5).unwrap();
    let m = moments(&p, 17);
    assert!((m.positive - 0.5).abs() < 0.003);
    assert!(m.mean[0].abs() < 0.005 && m.mean[1].abs() < 0.005);
    assert!((m.var[0] - 1.8).abs() < 0.01, "{}", m.var[0]);
    assert!((m.var[1] - 0.5).abs() < 0.005);
    assert!((m.cov - 0.8 * (0.8f64 * 0.5).sqrt()).abs() < 0.005);
    assert!((m.cov_y[0] - 1.0).abs() < 0.005);
    assert!(m.cov_y[1].abs() < 0.005);
    let corr = m.cov / (m.var[0] * m.var[1]).sqrt();
    assert!((corr - 0.5333).abs() < 0.005, "{corr}");
}

#[test]
fn leakage_moves_the_second_feature() {
    let p = GenParams::from_variances(0.0, 0.8, 0.5, 0.3).unwrap();
    let m = moments(&p, 4);
    assert!((m.cov_y[1] - 0.3).abs() < 0.005);
    assert!((m.var[1] - (0.5 + 0.09)).abs() < 0.005);
}

#[test]
fn perfectly_correlated_noise_can_be_sampled() {
    let p = GenParams::base(1.0, 0.5, 0.5).unwrap();
    let data = sample_dataset(&p, 1000, 1).unwrap();
    for r in data.iter() {
        let eta1 = r.x[0] - r.y.value();
        assert!((r.x[1] - eta1).abs() < 1e-12);
    }
}

#[test]
fn bayes_rule_agrees_with_mahalanobis_classifier() {
    let p = GenParams::base(-0.4, 0.5, 0.9).unwrap();
    let rule = bayes_rule(&p).unwrap();
    let data = sample_dataset(&p, 20_000, 8).unwrap();
    for r in data.iter() {
        assert_eq!(rule.classify(r.x), mahalanobis_classify(&p, r.x).unwrap());
    }
}

#[test]
fn density_is_a_mixture_of_class_conditionals() {
    let p = GenParams::base(0.8, 0.8, 0.5).unwrap();
    let pos = class_conditional_density(&p, [0.0, 0.0], Label::Positive).unwrap();
    assert!((pos - 0.073_901_866_974_845_58).abs() < 1e-12);
    let neg = class_conditional_density(&p, [0.3, -0.2], Label::Negative).unwrap();
    let pos = class_conditional_density(&p, [0.3, -0.2], Label::Positive).unwrap();
    assert!((joint_density(&p, [0.3, -0.2]).unwrap() - 0.5 * (pos + neg)).abs() < 1e-15);
}
