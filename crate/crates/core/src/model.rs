//! Generative suppressor model, its densities and the Bayes-optimal rule.
//!
//! A record is drawn as `z ~ Rademacher(1/2)`, `eta ~ N(0, Sigma)` and
//! `x = (z + eta1, eps*z + eta2)`, `y = z`, where
//! `Sigma = [[s1^2, c s1 s2], [c s1 s2, s2^2]]`. With `eps = 0` the second
//! feature is independent of the label and acts as a pure suppressor.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// A point in the two-dimensional feature space.
pub type Point = [f64; 2];

/// Records are generated in chunks; each chunk owns an independent ChaCha
/// stream so that record `i` depends only on `(seed, i)`.
const SAMPLE_CHUNK: usize = 4096;

/// Parameters `(c, s1, s2, eps)` of the generative model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    /// Noise correlation, `|c| <= 1`.
    pub c: f64,
    /// Noise standard deviation of feature 1.
    pub s1: f64,
    /// Noise standard deviation of feature 2.
    pub s2: f64,
    /// Signal leakage into feature 2 (0 for the base model).
    pub epsilon: f64,
}

impl GenParams {
    pub fn new(c: f64, s1: f64, s2: f64, epsilon: f64) -> Result<Self> {
        if !c.is_finite() || c.abs() > 1.0 {
            return Err(LabError::ParameterDomain(format!(
                "correlation c must lie in [-1, 1] (got {c})"
            )));
        }
        for (name, s) in [("s1", s1), ("s2", s2)] {
            if !s.is_finite() || s <= 0.0 {
                return Err(LabError::ParameterDomain(format!(
                    "{name} must be a positive finite standard deviation (got {s})"
                )));
            }
        }
        if !epsilon.is_finite() {
            return Err(LabError::ParameterDomain(format!(
                "epsilon must be finite (got {epsilon})"
            )));
        }
        Ok(Self { c, s1, s2, epsilon })
    }

    /// Builds parameters from noise variances, the parameterization used by
    /// the figure settings (`s1^2 = 0.8`, `s2^2 = 0.5`, ...).
    pub fn from_variances(c: f64, s1sq: f64, s2sq: f64, epsilon: f64) -> Result<Self> {
        for (name, v) in [("s1sq", s1sq), ("s2sq", s2sq)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(LabError::ParameterDomain(format!(
                    "{name} must be a positive finite variance (got {v})"
                )));
            }
        }
        Self::new(c, s1sq.sqrt(), s2sq.sqrt(), epsilon)
    }

    /// Base model (`eps = 0`) from variances.
    pub fn base(c: f64, s1sq: f64, s2sq: f64) -> Result<Self> {
        Self::from_variances(c, s1sq, s2sq, 0.0)
    }

    pub fn s1sq(&self) -> f64 {
        self.s1 * self.s1
    }

    pub fn s2sq(&self) -> f64 {
        self.s2 * self.s2
    }

    /// `k = c s1 / s2`, the suppressor-to-signal weight ratio (up to sign).
    pub fn k(&self) -> f64 {
        self.c * self.s1 / self.s2
    }

    /// `alpha = (1 + k^2)^(-1/2)`.
    pub fn alpha(&self) -> f64 {
        let k = self.k();
        (1.0 + k * k).sqrt().recip()
    }

    /// `beta = (1 + k^2)^(-1) = alpha^2`.
    pub fn beta(&self) -> f64 {
        let k = self.k();
        (1.0 + k * k).recip()
    }

    pub fn covariance(&self) -> [[f64; 2]; 2] {
        let off = self.c * self.s1 * self.s2;
        [[self.s1sq(), off], [off, self.s2sq()]]
    }

    /// Closed-form inverse of the noise covariance; fails for `|c| = 1`.
    pub fn precision(&self) -> Result<[[f64; 2]; 2]> {
        self.require_invertible()?;
        let det = self.s1sq() * self.s2sq() * (1.0 - self.c * self.c);
        let off = -self.c * self.s1 * self.s2;
        Ok([
            [self.s2sq() / det, off / det],
            [off / det, self.s1sq() / det],
        ])
    }

    /// Class mean `mu_y = (y, eps)`.
    pub fn class_mean(&self, y: Label) -> Point {
        [y.value(), self.epsilon]
    }

    pub fn is_base_model(&self) -> bool {
        self.epsilon == 0.0
    }

    pub fn require_base_model(&self) -> Result<()> {
        if self.is_base_model() {
            Ok(())
        } else {
            Err(LabError::RequiresBaseModel {
                epsilon: self.epsilon,
            })
        }
    }

    pub fn require_invertible(&self) -> Result<()> {
        if self.c.abs() < 1.0 {
            Ok(())
        } else {
            Err(LabError::SingularCovariance { c: self.c })
        }
    }
}

/// Class label `y in {-1, +1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "1")]
    Positive,
    #[serde(rename = "-1")]
    Negative,
}

impl Label {
    pub fn value(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }
}

/// Feature index; the external numbering is 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Feature {
    #[serde(rename = "1")]
    X1,
    #[serde(rename = "2")]
    X2,
}

impl Feature {
    pub const BOTH: [Feature; 2] = [Feature::X1, Feature::X2];

    pub fn from_index(index: usize) -> Result<Self> {
        match index {
            1 => Ok(Feature::X1),
            2 => Ok(Feature::X2),
            other => Err(LabError::InvalidFeature(other)),
        }
    }

    /// 1-based index.
    pub fn index(self) -> usize {
        match self {
            Feature::X1 => 1,
            Feature::X2 => 2,
        }
    }

    /// 0-based position in a [`Point`].
    pub fn slot(self) -> usize {
        self.index() - 1
    }

    pub fn other(self) -> Feature {
        match self {
            Feature::X1 => Feature::X2,
            Feature::X2 => Feature::X1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub x: Point,
    pub y: Label,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub records: Vec<Record>,
    pub seed: u64,
    pub params: GenParams,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Record> {
        self.records.iter()
    }

    /// Writes the dataset as CSV with header `x1,x2,y`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["x1", "x2", "y"])?;
        for r in &self.records {
            writer.write_record([
                r.x[0].to_string(),
                r.x[1].to_string(),
                r.y.as_i8().to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Mixes a base seed with a list of tags into a new 64-bit seed
/// (splitmix64 finalizer applied per tag).
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    tags.iter().fold(mix(seed), |acc, &t| {
        mix(acc.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(mix(t)))
    })
}

/// Seeded ChaCha generator for an independent stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `n` labeled records from the generative model.
pub fn sample_dataset(params: &GenParams, n: usize, seed: u64) -> Result<LabeledDataset> {
    let params = GenParams::new(params.c, params.s1, params.s2, params.epsilon)?;
    if n == 0 {
        return Err(LabError::EmptyRequest);
    }
    let chunks = n.div_ceil(SAMPLE_CHUNK);
    let rho = (1.0 - params.c * params.c).max(0.0).sqrt();
    let records = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|chunk| {
            let len = SAMPLE_CHUNK.min(n - chunk * SAMPLE_CHUNK);
            let mut rng = stream_rng(seed, chunk as u64);
            (0..len)
                .map(move |_| {
                    let y = if rng.gen::<bool>() {
                        Label::Positive
                    } else {
                        Label::Negative
                    };
                    let n1: f64 = rng.sample(StandardNormal);
                    let n2: f64 = rng.sample(StandardNormal);
                    let eta1 = params.s1 * n1;
                    let eta2 = params.s2 * (params.c * n1 + rho * n2);
                    let z = y.value();
                    Record {
                        x: [z + eta1, params.epsilon * z + eta2],
                        y,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(LabeledDataset {
        records,
        seed,
        params,
    })
}

/// Density of `N(mu_y, Sigma)` at `x`.
pub fn class_conditional_density(params: &GenParams, x: Point, y: Label) -> Result<f64> {
    let p = params.precision()?;
    let mu = params.class_mean(y);
    let d = [x[0] - mu[0], x[1] - mu[1]];
    let quad = d[0] * (p[0][0] * d[0] + p[0][1] * d[1]) + d[1] * (p[1][0] * d[0] + p[1][1] * d[1]);
    let det = params.s1sq() * params.s2sq() * (1.0 - params.c * params.c);
    Ok((-0.5 * quad).exp() / (2.0 * std::f64::consts::PI * det.sqrt()))
}

/// Mixture density `p(x) = 1/2 p(x | +1) + 1/2 p(x | -1)`.
pub fn joint_density(params: &GenParams, x: Point) -> Result<f64> {
    Ok(0.5 * class_conditional_density(params, x, Label::Positive)?
        + 0.5 * class_conditional_density(params, x, Label::Negative)?)
}

/// A differentiable scalar model `f: R^2 -> R`, the interface black-box
/// estimators work against.
pub trait Model: Sync {
    fn predict(&self, x: Point) -> f64;

    /// Gradient of `f`; defaults to central finite differences.
    fn gradient(&self, x: Point) -> Point {
        let h = 1e-6;
        let mut g = [0.0; 2];
        for j in 0..2 {
            let mut hi = x;
            let mut lo = x;
            hi[j] += h;
            lo[j] -= h;
            g[j] = (self.predict(hi) - self.predict(lo)) / (2.0 * h);
        }
        g
    }
}

impl<F: Fn(Point) -> f64 + Sync> Model for F {
    fn predict(&self, x: Point) -> f64 {
        self(x)
    }
}

/// Bayes-optimal linear decision rule `f(x) = w.x + b` with `|w| = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesLinearRule {
    pub w1: f64,
    pub w2: f64,
    pub b: f64,
    pub alpha: f64,
}

impl BayesLinearRule {
    pub fn weights(&self) -> Point {
        [self.w1, self.w2]
    }

    pub fn decision(&self, x: Point) -> f64 {
        self.w1 * x[0] + self.w2 * x[1] + self.b
    }

    /// `+1` when `f(x) >= 0`, matching the Mahalanobis tie-break.
    pub fn classify(&self, x: Point) -> Label {
        if self.decision(x) >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    /// Decision function with selected weights zeroed.
    pub fn masked(&self, zero_x1: bool, zero_x2: bool) -> BayesLinearRule {
        BayesLinearRule {
            w1: if zero_x1 { 0.0 } else { self.w1 },
            w2: if zero_x2 { 0.0 } else { self.w2 },
            ..*self
        }
    }
}

impl Model for BayesLinearRule {
    fn predict(&self, x: Point) -> f64 {
        self.decision(x)
    }

    fn gradient(&self, _x: Point) -> Point {
        self.weights()
    }
}

/// `w1 = alpha`, `w2 = -alpha c s1/s2`, `b = eps alpha c s1/s2`.
pub fn bayes_rule(params: &GenParams) -> Result<BayesLinearRule> {
    params.require_invertible()?;
    let alpha = params.alpha();
    let k = params.k();
    Ok(BayesLinearRule {
        w1: alpha,
        w2: -alpha * k,
        b: params.epsilon * alpha * k,
        alpha,
    })
}

/// Squared Mahalanobis distance `(x - mu_y)' Sigma^-1 (x - mu_y)`.
pub fn mahalanobis_sq(params: &GenParams, x: Point, y: Label) -> Result<f64> {
    let p = params.precision()?;
    let mu = params.class_mean(y);
    let d = [x[0] - mu[0], x[1] - mu[1]];
    Ok(d[0] * (p[0][0] * d[0] + p[0][1] * d[1]) + d[1] * (p[1][0] * d[0] + p[1][1] * d[1]))
}

/// Nearest class mean in Mahalanobis distance; ties go to `+1`.
pub fn mahalanobis_classify(params: &GenParams, x: Point) -> Result<Label> {
    let pos = mahalanobis_sq(params, x, Label::Positive)?;
    let neg = mahalanobis_sq(params, x, Label::Negative)?;
    Ok(if pos <= neg {
        Label::Positive
    } else {
        Label::Negative
    })
}

/// Logistic sigmoid `1 / (1 + exp(-t))`, stable for large `|t|`.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `P(Y = +1 | X1 = x1) = sigmoid(2 x1 / s1^2)`.
pub fn posterior_y_given_x1(params: &GenParams, x1: f64) -> Result<f64> {
    params.require_base_model()?;
    Ok(sigmoid(2.0 * x1 / params.s1sq()))
}

/// `h(x1) = (x1 - 1) P(+1 | x1) + (x1 + 1) P(-1 | x1)`, the posterior-weighted
/// noise offset in feature 1.
///
/// Evaluated as `x1 - tanh(x1 / s1^2)`, which is the same expression and is
/// exactly odd in floating point.
pub fn h_function(params: &GenParams, x1: f64) -> f64 {
    x1 - (x1 / params.s1sq()).tanh()
}

/// `E[X1 | X2 = v] = (c s1/s2) v` and `E[X2 | X1 = v] = (c s2/s1) h(v)`.
pub fn cond_expectation(params: &GenParams, known: Feature, value: f64) -> Result<f64> {
    params.require_base_model()?;
    Ok(match known {
        Feature::X2 => params.c * params.s1 / params.s2 * value,
        Feature::X1 => params.c * params.s2 / params.s1 * h_function(params, value),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2(c: f64) -> GenParams {
        GenParams::base(c, 0.8, 0.5).unwrap()
    }

    #[test]
    fn rejects_out_of_domain_parameters() {
        assert!(matches!(
            GenParams::base(1.5, 0.8, 0.5),
            Err(LabError::ParameterDomain(_))
        ));
        assert!(GenParams::new(0.0, 0.0, 1.0, 0.0).is_err());
        assert!(GenParams::new(0.0, 1.0, -1.0, 0.0).is_err());
        assert!(GenParams::new(f64::NAN, 1.0, 1.0, 0.0).is_err());
        assert!(GenParams::new(1.0, 1.0, 1.0, 0.0).is_ok());
    }

    #[test]
    fn derived_quantities() {
        let p = fig2(0.8);
        assert!((p.alpha() * p.alpha() - p.beta()).abs() < 1e-15);
        assert!((p.alpha() - 0.702_901_946_394_416_6).abs() < 1e-12);
        assert!(p.alpha() > 0.0 && p.alpha() <= 1.0);
        assert_eq!(fig2(0.0).alpha(), 1.0);
    }

    #[test]
    fn empty_request_is_rejected() {
        assert!(matches!(
            sample_dataset(&fig2(0.8), 0, 1),
            Err(LabError::EmptyRequest)
        ));
    }

    #[test]
    fn sampling_is_deterministic_and_prefix_stable() {
        let a = sample_dataset(&fig2(0.8), 10_000, 7).unwrap();
        let b = sample_dataset(&fig2(0.8), 10_000, 7).unwrap();
        assert_eq!(a, b);
        let short = sample_dataset(&fig2(0.8), 5_000, 7).unwrap();
        assert_eq!(&a.records[..5_000], &short.records[..]);
        let other = sample_dataset(&fig2(0.8), 10_000, 8).unwrap();
        assert_ne!(a.records, other.records);
    }

    #[test]
    fn near_noise_free_signal_channel() {
        let p = GenParams::new(0.0, 1e-6, 1.0, 0.0).unwrap();
        let d = sample_dataset(&p, 1000, 3).unwrap();
        assert!(d.iter().all(|r| (r.x[0] - r.y.value()).abs() < 1e-4));
    }

    #[test]
    fn degenerate_correlation_still_samples() {
        let p = GenParams::base(1.0, 0.8, 0.5).unwrap();
        let d = sample_dataset(&p, 1000, 3).unwrap();
        // eta2 = (s2/s1) eta1 exactly when c = 1.
        let ratio = p.s2 / p.s1;
        assert!(d
            .iter()
            .all(|r| ((r.x[1]) - ratio * (r.x[0] - r.y.value())).abs() < 1e-12));
    }

    #[test]
    fn standard_normal_at_mean() {
        let p = GenParams::base(0.0, 1.0, 1.0).unwrap();
        let v = class_conditional_density(&p, [1.0, 0.0], Label::Positive).unwrap();
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
        let mix = joint_density(&p, [1.0, 0.0]).unwrap();
        let neg = class_conditional_density(&p, [1.0, 0.0], Label::Negative).unwrap();
        assert!((mix - 0.5 * (v + neg)).abs() < 1e-15);
    }

    #[test]
    fn singular_covariance_is_rejected() {
        let p = GenParams::base(1.0, 0.8, 0.5).unwrap();
        assert!(matches!(
            bayes_rule(&p),
            Err(LabError::SingularCovariance { .. })
        ));
        assert!(class_conditional_density(&p, [0.0, 0.0], Label::Positive).is_err());
        assert!(mahalanobis_classify(&p, [0.0, 0.0]).is_err());
    }

    #[test]
    fn bayes_rule_examples() {
        let r = bayes_rule(&GenParams::base(0.0, 0.8, 0.5).unwrap()).unwrap();
        assert_eq!((r.w1, r.w2, r.b), (1.0, 0.0, 0.0));

        let r = bayes_rule(&GenParams::base(-0.8, 1.0, 0.15).unwrap()).unwrap();
        assert!((r.w2 - 0.90).abs() < 0.01);
        assert!(r.w2.abs() > 2.0 * r.w1.abs());

        let r = bayes_rule(&fig2(0.8)).unwrap();
        assert!((r.alpha - 0.70290).abs() < 1e-4);
        assert!((r.w2 + 0.71129).abs() < 1e-4);
    }

    #[test]
    fn leakage_offset() {
        let p = GenParams::from_variances(0.8, 0.8, 0.5, 0.1).unwrap();
        let r = bayes_rule(&p).unwrap();
        assert!((r.b - 0.1 * r.alpha * p.k()).abs() < 1e-15);
        assert!(r.b > 0.0);
    }

    #[test]
    fn mahalanobis_examples() {
        let p = GenParams::base(0.0, 1.0, 1.0).unwrap();
        assert_eq!(mahalanobis_classify(&p, [0.5, 7.0]).unwrap(), Label::Positive);
        // Points on the boundary w.x = 0 go to +1.
        let p = fig2(0.8);
        let r = bayes_rule(&p).unwrap();
        let on_boundary = [-r.w2 * 3.0, r.w1 * 3.0];
        assert!(r.decision(on_boundary).abs() < 1e-12);
        assert_eq!(mahalanobis_classify(&p, [0.0, 0.0]).unwrap(), Label::Positive);
    }

    #[test]
    fn posterior_examples() {
        let p = fig2(0.8);
        assert_eq!(posterior_y_given_x1(&p, 0.0).unwrap(), 0.5);
        let v = posterior_y_given_x1(&p, 1.0).unwrap();
        assert!((v - 0.924_141_819_978_756_6).abs() < 1e-12);
        assert!((posterior_y_given_x1(&p, 1e4).unwrap() - 1.0).abs() < 1e-15);
        let leaky = GenParams::from_variances(0.8, 0.8, 0.5, 0.1).unwrap();
        assert!(matches!(
            posterior_y_given_x1(&leaky, 1.0),
            Err(LabError::RequiresBaseModel { .. })
        ));
    }

    #[test]
    fn h_function_examples() {
        let p = fig2(0.8);
        assert_eq!(h_function(&p, 0.0), 0.0);
        assert!((h_function(&p, 1.0) - 0.151_716_360_042_486_9).abs() < 1e-12);
        assert!((h_function(&p, 10.0) - 9.0).abs() < 1e-6);
    }

    #[test]
    fn h_matches_posterior_weighted_form() {
        let p = GenParams::base(0.4, 0.3, 0.9).unwrap();
        for i in -40..=40 {
            let x = i as f64 * 0.1;
            let t = sigmoid(2.0 * x / p.s1sq());
            let literal = (x - 1.0) * t + (x + 1.0) * (1.0 - t);
            assert!((h_function(&p, x) - literal).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn conditional_expectations() {
        let p = fig2(0.8);
        let v = cond_expectation(&p, Feature::X2, 1.0).unwrap();
        assert!((v - 0.8 * (0.8f64 / 0.5).sqrt()).abs() < 1e-12);
        assert_eq!(cond_expectation(&p, Feature::X1, 0.0).unwrap(), 0.0);
        let indep = fig2(0.0);
        assert_eq!(cond_expectation(&indep, Feature::X1, 2.0).unwrap(), 0.0);
        assert_eq!(cond_expectation(&indep, Feature::X2, 2.0).unwrap(), 0.0);
        assert!(matches!(Feature::from_index(3), Err(LabError::InvalidFeature(3))));
    }

    #[test]
    fn csv_header_and_rows() {
        let d = sample_dataset(&fig2(0.8), 3, 1).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "x1,x2,y");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].ends_with(",1") || lines[1].ends_with(",-1"));
    }

    #[test]
    fn derive_seed_separates_tags() {
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_eq!(derive_seed(5, &[2, 3]), derive_seed(5, &[2, 3]));
    }
}
