//! Closed-form importance of each attribution method for the Bayes rule of
//! the suppressor model.
//!
//! Every function here is an exact expression in the model parameters (and
//! the instance, for local methods). The only numerical step is the FIRM
//! variance, which is integrated against the known `X1` marginal.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::model::{h_function, sigmoid, BayesLinearRule, Feature, GenParams, Point};
use crate::quadrature::{self, QuadratureResult};

/// Absolute tolerance of the FIRM variance integral.
pub const FIRM_QUADRATURE_TOL: f64 = 1e-8;
/// Half-width of each mixture component's integration range, in units of `s1`.
pub const FIRM_RANGE_SIGMAS: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gradient,
    Pattern,
    PixelFlip,
    Pfi,
    Pd,
    Mplot,
    ShapleyR2ThreeModel,
    ShapleyR2SingleModel,
    ShapMarginal,
    ShapConditional,
    Counterfactual,
    Firm,
    IntegratedGradients,
    Lime,
    PatternAttribution,
}

impl Method {
    pub const ALL: [Method; 15] = [
        Method::Gradient,
        Method::Pattern,
        Method::PixelFlip,
        Method::Pfi,
        Method::Pd,
        Method::Mplot,
        Method::ShapleyR2ThreeModel,
        Method::ShapleyR2SingleModel,
        Method::ShapMarginal,
        Method::ShapConditional,
        Method::Counterfactual,
        Method::Firm,
        Method::IntegratedGradients,
        Method::Lime,
        Method::PatternAttribution,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::Gradient => "gradient",
            Method::Pattern => "pattern",
            Method::PixelFlip => "pixel_flip",
            Method::Pfi => "pfi",
            Method::Pd => "pd",
            Method::Mplot => "mplot",
            Method::ShapleyR2ThreeModel => "shapley_r2_three_model",
            Method::ShapleyR2SingleModel => "shapley_r2_single_model",
            Method::ShapMarginal => "shap_marginal",
            Method::ShapConditional => "shap_conditional",
            Method::Counterfactual => "counterfactual",
            Method::Firm => "firm",
            Method::IntegratedGradients => "integrated_gradients",
            Method::Lime => "lime",
            Method::PatternAttribution => "pattern_attribution",
        }
    }

    pub fn scope(self) -> Scope {
        match self {
            Method::Pd
            | Method::Mplot
            | Method::ShapMarginal
            | Method::ShapConditional
            | Method::Counterfactual
            | Method::IntegratedGradients
            | Method::Lime => Scope::Local,
            _ => Scope::Global,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| LabError::UnknownMethod(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Global,
    Local,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Analytic,
    Empirical,
}

/// Per-feature importance `(e1, e2)` produced by one method.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub method: Method,
    pub feature_scores: [f64; 2],
    pub scope: Scope,
    /// Instance the explanation refers to; present iff the method is local.
    pub instance: Option<Point>,
    pub source: Source,
}

impl Attribution {
    pub fn new(method: Method, feature_scores: [f64; 2], instance: Option<Point>, source: Source) -> Self {
        let scope = method.scope();
        debug_assert_eq!(scope == Scope::Local, instance.is_some());
        Self {
            method,
            feature_scores,
            scope,
            instance,
            source,
        }
    }

    fn analytic(method: Method, feature_scores: [f64; 2], instance: Option<Point>) -> Self {
        Self::new(method, feature_scores, instance, Source::Analytic)
    }

    pub fn e1(&self) -> f64 {
        self.feature_scores[0]
    }

    pub fn e2(&self) -> f64 {
        self.feature_scores[1]
    }

    pub fn score(&self, feature: Feature) -> f64 {
        self.feature_scores[feature.slot()]
    }
}

/// Closest point on the decision boundary to an instance `xi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResult {
    pub x_star: Point,
    /// Euclidean distance `|xi - x*|`.
    pub distance: f64,
    /// Displacement `xi - x*`.
    pub delta: Point,
}

/// Bayes weights of the base model, defined for every `|c| <= 1`.
fn weights(params: &GenParams) -> Point {
    let alpha = params.alpha();
    [alpha, -alpha * params.k()]
}

pub fn gradient_attrib(rule: &BayesLinearRule) -> Attribution {
    Attribution::analytic(Method::Gradient, rule.weights(), None)
}

/// Linear activation pattern as printed in closed form:
/// `e1 = alpha s1^2 (1 - c^2)`, `e2 = 0`.
///
/// This constant equals `Sigma w`, i.e. the pattern computed with the noise
/// covariance; [`pattern_covariance_form`] gives `Cov(x) w`.
pub fn pattern_attrib(params: &GenParams) -> Result<Attribution> {
    params.require_base_model()?;
    let alpha = params.alpha();
    let c = params.c;
    Ok(Attribution::analytic(
        Method::Pattern,
        [alpha * params.s1sq() * (1.0 - c * c), 0.0],
        None,
    ))
}

/// `Cov(x, x) w` with `Cov(x, x) = a a' + Sigma`, `a = (1, 0)`, reduced
/// symbolically: `e1 = alpha (1 + s1^2 (1 - c^2))`, and the two terms of `e2`
/// (`alpha c s1 s2` and `-alpha c s1 s2`) cancel exactly.
///
/// This is what a sample estimate of `Cov(x_j, f(x))` converges to.
pub fn pattern_covariance_form(params: &GenParams) -> Result<Attribution> {
    params.require_base_model()?;
    let alpha = params.alpha();
    let c = params.c;
    Ok(Attribution::analytic(
        Method::Pattern,
        [alpha * (1.0 + params.s1sq() * (1.0 - c * c)), 0.0],
        None,
    ))
}

/// `E[(Y - f(x))^2]` for `f(x) = w'.x` where `w'` is `w` with the masked
/// entries zeroed.
pub fn expected_squared_error(params: &GenParams, w: Point, zero_mask: [bool; 2]) -> Result<f64> {
    params.require_base_model()?;
    let w1 = if zero_mask[0] { 0.0 } else { w[0] };
    let w2 = if zero_mask[1] { 0.0 } else { w[1] };
    let (s1, s2, c) = (params.s1, params.s2, params.c);
    Ok(1.0 - 2.0 * w1 + w1 * w1 * (s1 * s1 + 1.0) + w2 * w2 * s2 * s2 + 2.0 * w1 * w2 * c * s1 * s2)
}

/// `E[(Y - f(x~))^2]` where the columns flagged in `permuted` are replaced by
/// independent copies, breaking their association with `Y` and with the
/// other column.
pub fn expected_permuted_loss(params: &GenParams, w: Point, permuted: [bool; 2]) -> Result<f64> {
    params.require_base_model()?;
    let (s1, s2, c) = (params.s1, params.s2, params.c);
    let signal = if permuted[0] { 0.0 } else { w[0] };
    let cross = if permuted[0] || permuted[1] {
        0.0
    } else {
        2.0 * w[0] * w[1] * c * s1 * s2
    };
    Ok(1.0 - 2.0 * signal + w[0] * w[0] * (s1 * s1 + 1.0) + w[1] * w[1] * s2 * s2 + cross)
}

/// Pixel flipping: loss increase when a weight is set to zero.
pub fn pixel_flip_attrib(params: &GenParams) -> Result<Attribution> {
    let w = weights(params);
    let full = expected_squared_error(params, w, [false, false])?;
    let e1 = expected_squared_error(params, w, [true, false])? - full;
    let e2 = expected_squared_error(params, w, [false, true])? - full;
    Ok(Attribution::analytic(Method::PixelFlip, [e1, e2], None))
}

/// Permutation feature importance: loss increase when a column is permuted.
pub fn pfi_attrib(params: &GenParams) -> Result<Attribution> {
    let w = weights(params);
    let full = expected_permuted_loss(params, w, [false, false])?;
    let e1 = expected_permuted_loss(params, w, [true, false])? - full;
    let e2 = expected_permuted_loss(params, w, [false, true])? - full;
    Ok(Attribution::analytic(Method::Pfi, [e1, e2], None))
}

/// Partial dependence `E_{x_C}[f(x_S, x_C)]` at `x_S = value`.
pub fn pd_function(params: &GenParams, feature: Feature, value: f64) -> Result<f64> {
    params.require_base_model()?;
    Ok(weights(params)[feature.slot()] * value)
}

/// M-plot `E[f(x) | X_S = value]`.
pub fn mplot_function(params: &GenParams, feature: Feature, value: f64) -> Result<f64> {
    params.require_base_model()?;
    Ok(match feature {
        Feature::X1 => {
            let alpha = params.alpha();
            alpha * value - alpha * params.c * params.c * h_function(params, value)
        }
        Feature::X2 => 0.0,
    })
}

/// Marginal correlation of `X1` with `Y`, `(s1^2 + 1)^(-1/2)`.
fn rho_x1(params: &GenParams) -> f64 {
    (params.s1sq() + 1.0).sqrt().recip()
}

/// Shapley values of the R^2 game with separately optimal univariate models.
pub fn shapley_r2_three_model(params: &GenParams) -> Result<Attribution> {
    params.require_base_model()?;
    let alpha = params.alpha();
    let norm = 2.0 * (params.s1sq() + 1.0).sqrt();
    Ok(Attribution::analytic(
        Method::ShapleyR2ThreeModel,
        [(alpha + 1.0) / norm, (alpha - 1.0) / norm],
        None,
    ))
}

/// Shapley values of the R^2 game using only the bivariate Bayes rule.
pub fn shapley_r2_single_model(params: &GenParams) -> Result<Attribution> {
    params.require_base_model()?;
    Ok(Attribution::analytic(
        Method::ShapleyR2SingleModel,
        [params.alpha() * rho_x1(params), 0.0],
        None,
    ))
}

/// SHAP with the marginal-expectation value function.
pub fn shap_marginal(params: &GenParams, x: Point) -> Result<Attribution> {
    params.require_base_model()?;
    let w = weights(params);
    Ok(Attribution::analytic(
        Method::ShapMarginal,
        [w[0] * x[0], w[1] * x[1]],
        Some(x),
    ))
}

/// SHAP with the conditional-expectation value function.
pub fn shap_conditional(params: &GenParams, x: Point) -> Result<Attribution> {
    params.require_base_model()?;
    let alpha = params.alpha();
    let c = params.c;
    let shared = 0.5 * alpha * c * c * h_function(params, x[0]);
    let suppressor = 0.5 * alpha * params.k() * x[1];
    Ok(Attribution::analytic(
        Method::ShapConditional,
        [alpha * x[0] - shared - suppressor, shared - suppressor],
        Some(x),
    ))
}

/// Orthogonal projection of `xi` onto the hyperplane `w.x + b = 0`
/// (`|w| = 1`).
pub fn counterfactual_closest(rule: &BayesLinearRule, xi: Point) -> CounterfactualResult {
    let w = rule.weights();
    let norm_sq = w[0] * w[0] + w[1] * w[1];
    let t = rule.decision(xi) / norm_sq;
    let delta = [t * w[0], t * w[1]];
    CounterfactualResult {
        x_star: [xi[0] - delta[0], xi[1] - delta[1]],
        distance: t.abs() * norm_sq.sqrt(),
        delta,
    }
}

/// The printed closed form `x1* = beta (xi1 - k xi2)`,
/// `x2* = beta k (k xi2 + xi1)`. Kept for documentation; it does not land on
/// the decision boundary in general.
pub fn counterfactual_printed_form(params: &GenParams, xi: Point) -> Point {
    let beta = params.beta();
    let k = params.k();
    [beta * (xi[0] - xi[1] * k), beta * k * (xi[1] * k + xi[0])]
}

/// `Var(X1 - c^2 h(X1))` by adaptive quadrature over the two-component
/// Gaussian mixture marginal of `X1`.
pub fn firm_variance(params: &GenParams) -> Result<QuadratureResult> {
    params.require_base_model()?;
    let c2 = params.c * params.c;
    let s1 = params.s1;
    let g = |x: f64| x - c2 * h_function(params, x);
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let component = |mean: f64, power: i32, shift: f64| -> Result<QuadratureResult> {
        quadrature::integrate(
            |x| 0.5 * (g(x) - shift).powi(power) * phi((x - mean) / s1) / s1,
            mean - FIRM_RANGE_SIGMAS * s1,
            mean + FIRM_RANGE_SIGMAS * s1,
            FIRM_QUADRATURE_TOL / 4.0,
            4000,
        )
    };
    let m_pos = component(1.0, 1, 0.0)?;
    let m_neg = component(-1.0, 1, 0.0)?;
    let mean = m_pos.value + m_neg.value;
    let v_pos = component(1.0, 2, mean)?;
    let v_neg = component(-1.0, 2, mean)?;
    Ok(QuadratureResult {
        value: v_pos.value + v_neg.value,
        error_estimate: v_pos.error_estimate + v_neg.error_estimate,
        evaluations: m_pos.evaluations + m_neg.evaluations + v_pos.evaluations + v_neg.evaluations,
        intervals: v_pos.intervals + v_neg.intervals,
    })
}

/// `(alpha / 2) (2 sigmoid(2 / s1^2) - 1)`, a lower bound on FIRM `e1`.
pub fn firm_lower_bound(params: &GenParams) -> Result<f64> {
    params.require_base_model()?;
    Ok(0.5 * params.alpha() * (2.0 * sigmoid(2.0 / params.s1sq()) - 1.0))
}

/// FIRM: standard deviation of `E[f | X_S]`. `E[f | X2]` is identically
/// zero, so `e2 = 0`.
pub fn firm_attrib(params: &GenParams) -> Result<Attribution> {
    let var = firm_variance(params)?;
    let e1 = params.alpha() * var.value.max(0.0).sqrt();
    let bound = firm_lower_bound(params)?;
    if e1 + 1e-12 < bound {
        return Err(LabError::Numerical(format!(
            "FIRM e1 = {e1} fell below its lower bound {bound} (quadrature error {:e})",
            var.error_estimate
        )));
    }
    Ok(Attribution::analytic(Method::Firm, [e1, 0.0], None))
}

/// Integrated gradients of the linear rule along the straight path from
/// `baseline` to `x`: `e_j = w_j (x_j - x'_j)`.
pub fn integrated_gradients_linear(rule: &BayesLinearRule, x: Point, baseline: Point) -> Result<Attribution> {
    if x == baseline {
        return Err(LabError::DegeneratePath);
    }
    let w = rule.weights();
    Ok(Attribution::analytic(
        Method::IntegratedGradients,
        [w[0] * (x[0] - baseline[0]), w[1] * (x[1] - baseline[1])],
        Some(x),
    ))
}

/// The printed quadratic form `e1 = alpha/2 (x1^2 - x1'^2)`,
/// `e2 = -(alpha c s1 / 2 s2)(x2^2 - x2'^2)`, reported next to the exact
/// path integral.
pub fn integrated_gradients_printed_form(params: &GenParams, x: Point, baseline: Point) -> Point {
    let alpha = params.alpha();
    [
        0.5 * alpha * (x[0] * x[0] - baseline[0] * baseline[0]),
        -0.5 * alpha * params.k() * (x[1] * x[1] - baseline[1] * baseline[1]),
    ]
}

/// PatternAttribution `w (.) a` with `a = Cov(x, y) / Var(y) = (1, eps)`.
pub fn pattern_attribution_dtd(params: &GenParams, rule: &BayesLinearRule) -> Attribution {
    let a = [1.0, params.epsilon];
    Attribution::analytic(
        Method::PatternAttribution,
        [rule.w1 * a[0], rule.w2 * a[1]],
        None,
    )
}

/// Direction LIME surrogate weights must be proportional to.
pub fn lime_reference_direction(rule: &BayesLinearRule) -> Point {
    rule.weights()
}

/// Evaluates any method analytically. Local methods need `instance`;
/// integrated gradients also uses `baseline`.
pub fn evaluate(
    method: Method,
    params: &GenParams,
    instance: Option<Point>,
    baseline: Point,
) -> Result<Attribution> {
    let need_instance = || {
        instance.ok_or_else(|| {
            LabError::ParameterDomain(format!("method {method} needs an instance point (x1, x2)"))
        })
    };
    let rule = || crate::model::bayes_rule(params);
    match method {
        Method::Gradient => Ok(gradient_attrib(&rule()?)),
        Method::Pattern => pattern_attrib(params),
        Method::PixelFlip => pixel_flip_attrib(params),
        Method::Pfi => pfi_attrib(params),
        Method::Pd => {
            let x = need_instance()?;
            Ok(Attribution::analytic(
                Method::Pd,
                [
                    pd_function(params, Feature::X1, x[0])?,
                    pd_function(params, Feature::X2, x[1])?,
                ],
                Some(x),
            ))
        }
        Method::Mplot => {
            let x = need_instance()?;
            Ok(Attribution::analytic(
                Method::Mplot,
                [
                    mplot_function(params, Feature::X1, x[0])?,
                    mplot_function(params, Feature::X2, x[1])?,
                ],
                Some(x),
            ))
        }
        Method::ShapleyR2ThreeModel => shapley_r2_three_model(params),
        Method::ShapleyR2SingleModel => shapley_r2_single_model(params),
        Method::ShapMarginal => shap_marginal(params, need_instance()?),
        Method::ShapConditional => shap_conditional(params, need_instance()?),
        Method::Counterfactual => {
            params.require_base_model()?;
            let x = need_instance()?;
            let cf = counterfactual_closest(&rule()?, x);
            Ok(Attribution::analytic(Method::Counterfactual, cf.delta, Some(x)))
        }
        Method::Firm => firm_attrib(params),
        Method::IntegratedGradients => integrated_gradients_linear(&rule()?, need_instance()?, baseline),
        Method::Lime => {
            let x = need_instance()?;
            Ok(Attribution::analytic(
                Method::Lime,
                lime_reference_direction(&rule()?),
                Some(x),
            ))
        }
        Method::PatternAttribution => Ok(pattern_attribution_dtd(params, &rule()?)),
    }
}
