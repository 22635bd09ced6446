//! Covariance and squared-loss estimators.

use rand::seq::SliceRandom;

use super::{mean_se, Estimate, EstimatorConfig, ScalarEstimate};
use crate::analytic::{Attribution, Method, Source};
use crate::error::Result;
use crate::model::{bayes_rule, derive_seed, sample_dataset, stream_rng, GenParams, LabeledDataset, Model, Point};

const PERMUTE_TAG: u64 = 0x7065_726d;

/// Sample covariance of `a` and `b` with the standard error of the mean of
/// the centered products.
fn covariance_se(a: &[f64], b: &[f64]) -> ScalarEstimate {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let products: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    let mut est = mean_se(&products);
    if a.len() > 1 {
        est.value *= n / (n - 1.0);
    }
    est
}

fn column(data: &LabeledDataset, slot: usize) -> Vec<f64> {
    data.iter().map(|r| r.x[slot]).collect()
}

/// Activation pattern `Cov(x_j, f(x))` from a sampled dataset.
pub fn est_pattern(params: &GenParams, cfg: &EstimatorConfig) -> Result<Estimate> {
    cfg.validate()?;
    let rule = bayes_rule(params)?;
    let data = sample_dataset(params, cfg.n_samples, cfg.seed)?;
    let f: Vec<f64> = data.iter().map(|r| rule.predict(r.x)).collect();
    let c1 = covariance_se(&column(&data, 0), &f);
    let c2 = covariance_se(&column(&data, 1), &f);
    Ok(Estimate::new(
        Attribution::new(Method::Pattern, [c1.value, c2.value], None, Source::Empirical),
        [c1.std_error, c2.std_error],
        cfg,
    ))
}

/// PatternAttribution `w (.) a` with `a = Cov(x, y) / Var(y)` estimated
/// from samples.
pub fn est_pattern_attribution(params: &GenParams, cfg: &EstimatorConfig) -> Result<Estimate> {
    cfg.validate()?;
    let rule = bayes_rule(params)?;
    let data = sample_dataset(params, cfg.n_samples, cfg.seed)?;
    let y: Vec<f64> = data.iter().map(|r| r.y.value()).collect();
    let var_y = covariance_se(&y, &y).value;
    let w = rule.weights();
    let mut scores = [0.0; 2];
    let mut se = [0.0; 2];
    for slot in 0..2 {
        let cov = covariance_se(&column(&data, slot), &y);
        scores[slot] = w[slot] * cov.value / var_y;
        se[slot] = (w[slot] * cov.std_error / var_y).abs();
    }
    Ok(Estimate::new(
        Attribution::new(Method::PatternAttribution, scores, None, Source::Empirical),
        se,
        cfg,
    ))
}

/// Loss increase `E[(Y - f_masked)^2] - E[(Y - f)^2]` when the weights
/// flagged in `zero_mask` are set to zero.
pub fn est_masked_loss_difference(
    params: &GenParams,
    cfg: &EstimatorConfig,
    zero_mask: [bool; 2],
) -> Result<ScalarEstimate> {
    cfg.validate()?;
    let rule = bayes_rule(params)?;
    let masked = rule.masked(zero_mask[0], zero_mask[1]);
    let data = sample_dataset(params, cfg.n_loss_samples, cfg.seed)?;
    Ok(masked_difference(&data, &rule, &masked))
}

fn masked_difference(data: &LabeledDataset, full: &impl Model, masked: &impl Model) -> ScalarEstimate {
    let diffs: Vec<f64> = data
        .iter()
        .map(|r| {
            let y = r.y.value();
            (y - masked.predict(r.x)).powi(2) - (y - full.predict(r.x)).powi(2)
        })
        .collect();
    mean_se(&diffs)
}

/// Pixel flipping by zeroing each weight of the rule in turn.
pub fn est_pixel_flip(params: &GenParams, cfg: &EstimatorConfig) -> Result<Estimate> {
    cfg.validate()?;
    let rule = bayes_rule(params)?;
    let data = sample_dataset(params, cfg.n_loss_samples, cfg.seed)?;
    let e1 = masked_difference(&data, &rule, &rule.masked(true, false));
    let e2 = masked_difference(&data, &rule, &rule.masked(false, true));
    Ok(Estimate::new(
        Attribution::new(Method::PixelFlip, [e1.value, e2.value], None, Source::Empirical),
        [e1.std_error, e2.std_error],
        cfg,
    ))
}

/// Copies the inputs and shuffles each flagged column independently.
fn permuted_inputs(data: &LabeledDataset, permuted: [bool; 2], seed: u64) -> Vec<Point> {
    let mut xs: Vec<Point> = data.iter().map(|r| r.x).collect();
    for slot in 0..2 {
        if !permuted[slot] {
            continue;
        }
        let mut col: Vec<f64> = xs.iter().map(|x| x[slot]).collect();
        let mut rng = stream_rng(derive_seed(seed, &[PERMUTE_TAG]), slot as u64);
        col.shuffle(&mut rng);
        for (x, v) in xs.iter_mut().zip(col) {
            x[slot] = v;
        }
    }
    xs
}

fn permutation_difference(data: &LabeledDataset, rule: &impl Model, permuted: [bool; 2], seed: u64) -> ScalarEstimate {
    let shuffled = permuted_inputs(data, permuted, seed);
    let diffs: Vec<f64> = data
        .iter()
        .zip(&shuffled)
        .map(|(r, xp)| {
            let y = r.y.value();
            (y - rule.predict(*xp)).powi(2) - (y - rule.predict(r.x)).powi(2)
        })
        .collect();
    mean_se(&diffs)
}

/// Mean squared error `E[(Y - f(x~))^2]` after independently shuffling the
/// flagged columns of a sampled dataset.
pub fn est_permuted_loss(params: &GenParams, cfg: &EstimatorConfig, permuted: [bool; 2]) -> Result<ScalarEstimate> {
    cfg.validate()?;
    let rule = bayes_rule(params)?;
    let data = sample_dataset(params, cfg.n_loss_samples, cfg.seed)?;
    let shuffled = permuted_inputs(&data, permuted, cfg.seed);
    let losses: Vec<f64> = data
        .iter()
        .zip(&shuffled)
        .map(|(r, xp)| (r.y.value() - rule.predict(*xp)).powi(2))
        .collect();
    Ok(mean_se(&losses))
}

/// Permutation feature importance with a Fisher–Yates shuffle of the column
/// under test.
pub fn est_pfi(params: &GenParams, cfg: &EstimatorConfig) -> Result<Estimate> {
    cfg.validate()?;
    let rule = bayes_rule(params)?;
    let data = sample_dataset(params, cfg.n_loss_samples, cfg.seed)?;
    let e1 = permutation_difference(&data, &rule, [true, false], cfg.seed);
    let e2 = permutation_difference(&data, &rule, [false, true], cfg.seed);
    Ok(Estimate::new(
        Attribution::new(Method::Pfi, [e1.value, e2.value], None, Source::Empirical),
        [e1.std_error, e2.std_error],
        cfg,
    ))
}

/// Central finite-difference gradient of a black-box model at `x`.
pub fn est_gradient(model: &impl Model, x: Point, cfg: &EstimatorConfig) -> Estimate {
    let h = 1e-5;
    let mut g = [0.0; 2];
    for slot in 0..2 {
        let mut hi = x;
        let mut lo = x;
        hi[slot] += h;
        lo[slot] -= h;
        g[slot] = (model.predict(hi) - model.predict(lo)) / (2.0 * h);
    }
    Estimate::new(
        Attribution::new(Method::Gradient, g, None, Source::Empirical),
        [0.0, 0.0],
        cfg,
    )
}
