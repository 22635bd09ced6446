//! Marginal and conditional expectation estimators: PD, M-plots, Shapley
//! coalition games and FIRM.

use serde::{Deserialize, Serialize};

use super::{mean_se, Estimate, EstimatorConfig, ScalarEstimate};
use crate::analytic::{Attribution, Method, Source};
use crate::error::{LabError, Result};
use crate::model::{bayes_rule, sample_dataset, Feature, GenParams, LabeledDataset, Model, Point};

/// Fewest samples a conditioning band may hold before it is widened.
pub const MIN_BAND_COUNT: usize = 50;

/// Number of times a sparse band is doubled before giving up.
const MAX_WIDENINGS: usize = 3;

/// Averages a model over the empirical marginal of the complementary
/// feature.
pub struct MarginalSampler {
    xs: Vec<Point>,
}

impl MarginalSampler {
    pub fn new(data: &LabeledDataset) -> Self {
        Self {
            xs: data.iter().map(|r| r.x).collect(),
        }
    }

    /// `E_{x_C}[f(x_S = value, x_C)]`.
    pub fn partial_dependence(&self, model: &impl Model, feature: Feature, value: f64) -> ScalarEstimate {
        let slot = feature.slot();
        let vals: Vec<f64> = self
            .xs
            .iter()
            .map(|x| {
                let mut z = *x;
                z[slot] = value;
                model.predict(z)
            })
            .collect();
        mean_se(&vals)
    }

    /// Per-sample interventional SHAP contributions `t_i` for the point `x`.
    fn marginal_shap_terms(&self, model: &impl Model, x: Point) -> [Vec<f64>; 2] {
        let fx = model.predict(x);
        let mut terms = [Vec::with_capacity(self.xs.len()), Vec::with_capacity(self.xs.len())];
        for z in &self.xs {
            let base = model.predict(*z);
            let with1 = model.predict([x[0], z[1]]);
            let with2 = model.predict([z[0], x[1]]);
            terms[0].push(0.5 * ((with1 - base) + (fx - with2)));
            terms[1].push(0.5 * ((with2 - base) + (fx - with1)));
        }
        terms
    }
}

/// Mean of a model inside a conditioning band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandEstimate {
    pub value: f64,
    pub std_error: f64,
    pub count: usize,
    pub half_width: f64,
}

/// Intercept at `at` of a least-squares line through `(keys, values)` and
/// its standard error.
fn local_linear(keys: &[f64], values: &[f64], at: f64) -> (f64, f64) {
    let n = keys.len() as f64;
    let (sd, sdd, sy, sdy) = keys.iter().zip(values).fold((0.0, 0.0, 0.0, 0.0), |acc, (k, y)| {
        let d = k - at;
        (acc.0 + d, acc.1 + d * d, acc.2 + y, acc.3 + d * y)
    });
    let det = n * sdd - sd * sd;
    if det <= f64::EPSILON * n * sdd.max(f64::MIN_POSITIVE) || keys.len() < 3 {
        let est = mean_se(values);
        return (est.value, est.std_error);
    }
    let intercept = (sdd * sy - sd * sdy) / det;
    let slope = (n * sdy - sd * sy) / det;
    let rss: f64 = keys
        .iter()
        .zip(values)
        .map(|(k, y)| (y - intercept - slope * (k - at)).powi(2))
        .sum();
    let sigma_sq = rss / (n - 2.0);
    (intercept, (sigma_sq * sdd / det).sqrt())
}

/// Model outputs sorted by one feature, answering `E[f | X_S = v]` from the
/// samples with `|x_S - v| <= bin_width / 2` by a local-linear fit.
pub struct ConditionalSampler {
    keys: Vec<f64>,
    values: Vec<f64>,
    bin_width: f64,
}

impl ConditionalSampler {
    pub fn new(data: &LabeledDataset, model: &impl Model, feature: Feature, bin_width: f64) -> Self {
        let slot = feature.slot();
        let mut pairs: Vec<(f64, f64)> = data.iter().map(|r| (r.x[slot], model.predict(r.x))).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (keys, values) = pairs.into_iter().unzip();
        Self {
            keys,
            values,
            bin_width,
        }
    }

    pub fn band(&self, value: f64) -> Result<BandEstimate> {
        let mut half = 0.5 * self.bin_width;
        for _ in 0..=MAX_WIDENINGS {
            let lo = self.keys.partition_point(|k| *k < value - half);
            let hi = self.keys.partition_point(|k| *k <= value + half);
            if hi - lo >= MIN_BAND_COUNT {
                let (value, std_error) = local_linear(&self.keys[lo..hi], &self.values[lo..hi], value);
                return Ok(BandEstimate {
                    value,
                    std_error,
                    count: hi - lo,
                    half_width: half,
                });
            }
            half *= 2.0;
        }
        Err(LabError::InsufficientSamples(format!(
            "fewer than {MIN_BAND_COUNT} samples within {:.3} of {value}; increase n_samples or bin_width",
            half / 2.0
        )))
    }

    /// Mass-weighted variance of fixed-width bin means, debiased for the
    /// within-bin sampling noise. Returns `(variance, std_error)`.
    fn between_bin_variance(&self) -> (f64, f64) {
        let n = self.keys.len() as f64;
        let mut bins: Vec<(usize, f64, f64)> = Vec::new();
        let mut current = None;
        for (k, v) in self.keys.iter().zip(&self.values) {
            let idx = (k / self.bin_width).floor() as i64;
            if current != Some(idx) {
                current = Some(idx);
                bins.push((0, 0.0, 0.0));
            }
            let b = bins.last_mut().expect("bin pushed");
            b.0 += 1;
            b.1 += v;
            b.2 += v * v;
        }
        let grand = self.values.iter().sum::<f64>() / n;
        let pooled = {
            let (ss, dof) = bins.iter().fold((0.0, 0.0), |(ss, dof), &(m, s, q)| {
                if m < 2 {
                    (ss, dof)
                } else {
                    (ss + q - s * s / m as f64, dof + (m - 1) as f64)
                }
            });
            if dof > 0.0 {
                ss / dof
            } else {
                0.0
            }
        };
        let mut between = 0.0;
        let mut noise = 0.0;
        for &(m, s, q) in &bins {
            let mf = m as f64;
            let mean = s / mf;
            let p = mf / n;
            between += p * (mean - grand).powi(2);
            let within = if m >= 2 { (q - s * s / mf) / (mf - 1.0) } else { pooled };
            noise += (1.0 - p) * within;
        }
        let variance = (between - noise / n).max(0.0);
        // Delta-method SE of the variance of the conditional mean g(X_S),
        // approximated by the spread of (g - grand)^2.
        let mut fourth = 0.0;
        for &(m, s, _) in &bins {
            let p = m as f64 / n;
            fourth += p * (s / m as f64 - grand).powi(4);
        }
        let se = ((fourth - between * between).max(0.0) / n).sqrt();
        (variance, se)
    }
}

/// Marginal and conditional expectations of one model over one dataset,
/// built once and queried at many instance points.
pub struct ExpectationCache<M: Model> {
    model: M,
    marginal: MarginalSampler,
    given: [ConditionalSampler; 2],
    mean: ScalarEstimate,
}

impl<M: Model> ExpectationCache<M> {
    pub fn new(data: &LabeledDataset, model: M, bin_width: f64) -> Self {
        let f: Vec<f64> = data.iter().map(|r| model.predict(r.x)).collect();
        Self {
            marginal: MarginalSampler::new(data),
            given: [
                ConditionalSampler::new(data, &model, Feature::X1, bin_width),
                ConditionalSampler::new(data, &model, Feature::X2, bin_width),
            ],
            mean: mean_se(&f),
            model,
        }
    }

    pub fn pd(&self, feature: Feature, value: f64) -> ScalarEstimate {
        self.marginal.partial_dependence(&self.model, feature, value)
    }

    pub fn mplot(&self, feature: Feature, value: f64) -> Result<BandEstimate> {
        self.given[feature.slot()].band(value)
    }

    /// Interventional SHAP values at `x` with their standard errors.
    pub fn shap_marginal(&self, x: Point) -> ([f64; 2], [f64; 2]) {
        let terms = self.marginal.marginal_shap_terms(&self.model, x);
        let t1 = mean_se(&terms[0]);
        let t2 = mean_se(&terms[1]);
        ([t1.value, t2.value], [t1.std_error, t2.std_error])
    }

    /// Observational SHAP values at `x` by enumerating the four coalitions.
    pub fn shap_conditional(&self, x: Point) -> Result<([f64; 2], [f64; 2])> {
        let given1 = self.mplot(Feature::X1, x[0])?;
        let given2 = self.mplot(Feature::X2, x[1])?;
        let full = self.model.predict(x);
        let e = shapley_enumerate(2, |s| match s {
            0 => self.mean.value,
            1 => given1.value,
            2 => given2.value,
            _ => full,
        });
        let se = 0.5 * (given1.std_error.powi(2) + given2.std_error.powi(2)).sqrt();
        Ok(([e[0], e[1]], [se, se]))
    }
}

/// Empirical partial dependence at `x_S = value`.
pub fn est_pd(params: &GenParams, cfg: &EstimatorConfig, feature: Feature, value: f64) -> Result<ScalarEstimate> {
    cfg.validate()?;
    let rule = bayes_rule(params)?;
    let data = sample_dataset(params, cfg.n_samples, cfg.seed)?;
    Ok(MarginalSampler::new(&data).partial_dependence(&rule, feature, value))
}

/// Conditional mean `E[f | X_S = value]` from the band
/// `value +- bin_width / 2`.
pub fn est_mplot(params: &GenParams, cfg: &EstimatorConfig, feature: Feature, value: f64) -> Result<ScalarEstimate> {
    cfg.validate()?;
    let rule = bayes_rule(params)?;
    let data = sample_dataset(params, cfg.n_samples, cfg.seed)?;
    let band = ConditionalSampler::new(&data, &rule, feature, cfg.bin_width).band(value)?;
    Ok(ScalarEstimate {
        value: band.value,
        std_error: band.std_error,
        samples: band.count,
    })
}

/// Value function of the two-player coalition game.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueFunction {
    /// `R^2` shares with separately optimal univariate models.
    R2ThreeModel,
    /// `R^2` shares of the bivariate rule only.
    R2Single,
    /// Interventional expectation over the product of marginals.
    Marginal,
    /// Observational conditional expectation.
    Conditional,
}

impl ValueFunction {
    fn method(self) -> Method {
        match self {
            Self::R2ThreeModel => Method::ShapleyR2ThreeModel,
            Self::R2Single => Method::ShapleyR2SingleModel,
            Self::Marginal => Method::ShapMarginal,
            Self::Conditional => Method::ShapConditional,
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Exact Shapley values of a `d`-player game by enumerating every
/// coalition. `v` receives the coalition as a bitmask.
pub fn shapley_enumerate(d: usize, v: impl Fn(u32) -> f64) -> Vec<f64> {
    let total = factorial(d);
    let values: Vec<f64> = (0..1u32 << d).map(&v).collect();
    (0..d)
        .map(|j| {
            let bit = 1u32 << j;
            (0..1u32 << d)
                .filter(|s| s & bit == 0)
                .map(|s| {
                    let size = s.count_ones() as usize;
                    let gamma = factorial(size) * factorial(d - size - 1) / total;
                    gamma * (values[(s | bit) as usize] - values[s as usize])
                })
                .sum()
        })
        .collect()
}

/// Marginal Pearson correlations of each feature with `Y`.
fn target_correlations(params: &GenParams) -> Point {
    [(params.s1sq() + 1.0).sqrt().recip(), 0.0]
}

/// Shapley values of the chosen game by explicit coalition enumeration.
/// Local value functions need `x`.
pub fn est_shapley(
    params: &GenParams,
    cfg: &EstimatorConfig,
    vf: ValueFunction,
    x: Option<Point>,
) -> Result<Estimate> {
    cfg.validate()?;
    params.require_base_model()?;
    let rule = bayes_rule(params)?;
    let rho = target_correlations(params);
    let w = rule.weights();
    let need_x = || {
        x.ok_or_else(|| LabError::ParameterDomain(format!("{} needs an instance point", vf.method())))
    };
    let (scores, se, instance) = match vf {
        ValueFunction::R2Single => {
            let e = shapley_enumerate(2, |s| {
                (0..2).filter(|j| s >> j & 1 == 1).map(|j| w[j] * rho[j]).sum()
            });
            ([e[0], e[1]], [0.0; 2], None)
        }
        ValueFunction::R2ThreeModel => {
            let univariate = [1.0, 0.0];
            let e = shapley_enumerate(2, |s| match s {
                0 => 0.0,
                1 => univariate[0] * rho[0],
                2 => univariate[1] * rho[1],
                _ => w[0] * rho[0] + w[1] * rho[1],
            });
            ([e[0], e[1]], [0.0; 2], None)
        }
        ValueFunction::Marginal | ValueFunction::Conditional => {
            let x = need_x()?;
            let data = sample_dataset(params, cfg.n_samples, cfg.seed)?;
            let cache = ExpectationCache::new(&data, rule, cfg.bin_width);
            let (scores, se) = if vf == ValueFunction::Marginal {
                cache.shap_marginal(x)
            } else {
                cache.shap_conditional(x)?
            };
            (scores, se, Some(x))
        }
    };
    Ok(Estimate::new(
        Attribution::new(vf.method(), scores, instance, Source::Empirical),
        se,
        cfg,
    ))
}

/// FIRM: standard deviation of the binned conditional mean of `f` per
/// feature.
pub fn est_firm(params: &GenParams, cfg: &EstimatorConfig) -> Result<Estimate> {
    cfg.validate()?;
    let rule = bayes_rule(params)?;
    let data = sample_dataset(params, cfg.n_samples, cfg.seed)?;
    let mut scores = [0.0; 2];
    let mut se = [0.0; 2];
    for feature in Feature::BOTH {
        let (var, var_se) = ConditionalSampler::new(&data, &rule, feature, cfg.bin_width).between_bin_variance();
        let sd = var.sqrt();
        scores[feature.slot()] = sd;
        se[feature.slot()] = if sd > 0.0 { var_se / (2.0 * sd) } else { var_se.sqrt() };
    }
    Ok(Estimate::new(
        Attribution::new(Method::Firm, scores, None, Source::Empirical),
        se,
        cfg,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic;

    fn grid_point() -> GenParams {
        GenParams::base(0.8, 0.8, 0.5).unwrap()
    }

    fn cfg() -> EstimatorConfig {
        EstimatorConfig::default().with_seed(5)
    }

    #[test]
    fn pd_matches_closed_form() {
        let p = grid_point();
        let v = est_pd(&p, &cfg(), Feature::X2, 1.0).unwrap();
        let a = analytic::pd_function(&p, Feature::X2, 1.0).unwrap();
        assert!((v.value - a).abs() < 0.01);
        let zero = est_pd(&p, &cfg(), Feature::X1, 0.0).unwrap();
        assert!(zero.value.abs() < 0.01);
        let indep = GenParams::base(0.0, 0.8, 0.5).unwrap();
        assert!(est_pd(&indep, &cfg(), Feature::X2, 1.0).unwrap().value.abs() < 0.01);
    }

    #[test]
    fn mplot_matches_closed_form() {
        let p = grid_point();
        assert!(est_mplot(&p, &cfg(), Feature::X2, 1.0).unwrap().value.abs() < 0.02);
        assert!(est_mplot(&p, &cfg(), Feature::X1, 0.0).unwrap().value.abs() < 0.02);
        let v = est_mplot(&p, &cfg(), Feature::X1, 1.0).unwrap();
        let a = analytic::mplot_function(&p, Feature::X1, 1.0).unwrap();
        assert!((v.value - a).abs() < 0.02, "{} vs {a}", v.value);
    }

    #[test]
    fn sparse_band_is_reported() {
        let p = grid_point();
        let small = EstimatorConfig {
            n_samples: 200,
            ..cfg()
        };
        let err = est_mplot(&p, &small, Feature::X1, 9.0).unwrap_err();
        assert!(matches!(err, LabError::InsufficientSamples(_)));
    }

    #[test]
    fn enumeration_weights() {
        let e = shapley_enumerate(3, |s| s.count_ones() as f64);
        assert!(e.iter().all(|v| (v - 1.0).abs() < 1e-15));
        let e = shapley_enumerate(2, |s| if s == 3 { 1.0 } else { 0.0 });
        assert_eq!(e, vec![0.5, 0.5]);
    }

    #[test]
    fn shapley_games() {
        let p = grid_point();
        let single = est_shapley(&p, &cfg(), ValueFunction::R2Single, None).unwrap();
        assert!(single.e2().abs() < 1e-12);
        let a = analytic::shapley_r2_single_model(&p).unwrap();
        assert!((single.e1() - a.e1()).abs() < 1e-12);
        let three = est_shapley(&p, &cfg(), ValueFunction::R2ThreeModel, None).unwrap();
        let a = analytic::shapley_r2_three_model(&p).unwrap();
        assert!((three.e1() - a.e1()).abs() < 1e-12 && (three.e2() - a.e2()).abs() < 1e-12);

        let m = est_shapley(&p, &cfg(), ValueFunction::Marginal, Some([0.0, 0.0])).unwrap();
        assert!(m.e1().abs() < 0.02 && m.e2().abs() < 0.02);

        let x = [1.0, 0.0];
        let c = est_shapley(&p, &cfg(), ValueFunction::Conditional, Some(x)).unwrap();
        let a = analytic::shap_conditional(&p, x).unwrap();
        assert!((c.e1() - a.e1()).abs() < 0.03 && (c.e2() - a.e2()).abs() < 0.03);

        assert!(est_shapley(&p, &cfg(), ValueFunction::Marginal, None).is_err());
    }

    #[test]
    fn firm_matches_quadrature() {
        let p = grid_point();
        let e = est_firm(&p, &cfg()).unwrap();
        assert!(e.e2().abs() < 0.02, "e2 {}", e.e2());
        let a = analytic::firm_attrib(&p).unwrap();
        assert!((e.e1() - a.e1()).abs() < 0.02, "{} vs {}", e.e1(), a.e1());
        assert!(e.e1() >= analytic::firm_lower_bound(&p).unwrap() - 0.02);

        let indep = GenParams::base(0.0, 0.8, 0.5).unwrap();
        let e = est_firm(&indep, &cfg()).unwrap();
        assert!((e.e1() - 1.8f64.sqrt()).abs() < 0.02);
    }
}
