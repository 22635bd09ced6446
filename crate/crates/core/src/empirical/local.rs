//! Instance-level estimators: path integration, counterfactual search and
//! LIME surrogates.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Estimate, EstimatorConfig};
use crate::analytic::{Attribution, CounterfactualResult, Method, Source};
use crate::error::{LabError, Result};
use crate::model::{stream_rng, Model, Point};

/// Integrated gradients by the trapezoid rule on `cfg.quadrature_nodes`
/// nodes along the straight path from `baseline` to `x`.
pub fn est_integrated_gradients(
    model: &impl Model,
    x: Point,
    baseline: Point,
    cfg: &EstimatorConfig,
) -> Result<Estimate> {
    cfg.validate()?;
    if x == baseline {
        return Err(LabError::DegeneratePath);
    }
    let nodes = cfg.quadrature_nodes;
    let step = 1.0 / (nodes - 1) as f64;
    let delta = [x[0] - baseline[0], x[1] - baseline[1]];
    let mut integral = [0.0; 2];
    for i in 0..nodes {
        let t = i as f64 * step;
        let g = model.gradient([baseline[0] + t * delta[0], baseline[1] + t * delta[1]]);
        let weight = if i == 0 || i == nodes - 1 { 0.5 } else { 1.0 };
        integral[0] += weight * g[0];
        integral[1] += weight * g[1];
    }
    let scores = [
        delta[0] * integral[0] * step,
        delta[1] * integral[1] * step,
    ];
    Ok(Estimate::new(
        Attribution::new(Method::IntegratedGradients, scores, Some(x), Source::Empirical),
        [0.0; 2],
        cfg,
    ))
}

const LAMBDA_START: f64 = 1.0;
const LAMBDA_MAX: f64 = 1e8;
const BOUNDARY_TOL: f64 = 1e-8;
const INNER_STEPS: usize = 50;

/// Closest point with `f(x) = 0` by minimizing `|x - xi|^2 + lambda f(x)^2`
/// for `lambda = 1, 10, ..., 1e8`, warm-starting each solve.
pub fn est_counterfactual(model: &impl Model, xi: Point, cfg: &EstimatorConfig) -> Result<CounterfactualResult> {
    cfg.validate()?;
    let mut x = xi;
    let mut lambda = LAMBDA_START;
    loop {
        for _ in 0..INNER_STEPS {
            let f = model.predict(x);
            let g = model.gradient(x);
            // Gauss-Newton step for the penalized objective: H = 2I + 2 lambda g g'.
            let r = [2.0 * (x[0] - xi[0]) + 2.0 * lambda * f * g[0], 2.0 * (x[1] - xi[1]) + 2.0 * lambda * f * g[1]];
            let gg = g[0] * g[0] + g[1] * g[1];
            let gr = g[0] * r[0] + g[1] * r[1];
            let coef = lambda / (1.0 + lambda * gg);
            let step = [0.5 * (r[0] - coef * g[0] * gr), 0.5 * (r[1] - coef * g[1] * gr)];
            x = [x[0] - step[0], x[1] - step[1]];
            if step[0].abs().max(step[1].abs()) < 1e-15 {
                break;
            }
        }
        if model.predict(x).abs() < BOUNDARY_TOL || lambda >= LAMBDA_MAX {
            break;
        }
        lambda *= 10.0;
    }
    let residual = model.predict(x);
    if residual.abs() >= BOUNDARY_TOL {
        let g = model.gradient(x);
        let gg = g[0] * g[0] + g[1] * g[1];
        if gg == 0.0 {
            return Err(LabError::Numerical(format!(
                "counterfactual search stalled at f = {residual:e} with zero gradient"
            )));
        }
        // Newton polish onto the boundary.
        x = [x[0] - residual * g[0] / gg, x[1] - residual * g[1] / gg];
    }
    let delta = [xi[0] - x[0], xi[1] - x[1]];
    Ok(CounterfactualResult {
        x_star: x,
        distance: (delta[0] * delta[0] + delta[1] * delta[1]).sqrt(),
        delta,
    })
}

/// Weighted least-squares fit of `f(z) ~ a + b.(z - xi)` on `lime_n` draws
/// from `N(xi, I)` with kernel `exp(-|z - xi|^2 / width^2)`. Returns the
/// slope `b` and its standard error.
pub fn fit_local_surrogate(model: &impl Model, xi: Point, cfg: &EstimatorConfig) -> Result<(Point, Point)> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, 0);
    let width_sq = cfg.lime_kernel_width * cfg.lime_kernel_width;
    let mut rows = Vec::with_capacity(cfg.lime_n);
    let mut xtwx = Matrix3::<f64>::zeros();
    let mut xtwy = Vector3::<f64>::zeros();
    for _ in 0..cfg.lime_n {
        let d: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let y = model.predict([xi[0] + d[0], xi[1] + d[1]]);
        let w = (-(d[0] * d[0] + d[1] * d[1]) / width_sq).exp();
        let v = Vector3::new(1.0, d[0], d[1]);
        xtwx += w * v * v.transpose();
        xtwy += w * y * v;
        rows.push((v, y, w));
    }
    let inv = xtwx
        .try_inverse()
        .ok_or_else(|| LabError::Numerical("LIME design matrix is singular; increase lime_n".into()))?;
    let beta = inv * xtwy;
    let (rss, wsum, w2sum) = rows.iter().fold((0.0, 0.0, 0.0), |(rss, ws, w2), (v, y, w)| {
        (rss + w * (y - beta.dot(v)).powi(2), ws + w, w2 + w * w)
    });
    let eff_n = wsum * wsum / w2sum;
    let sigma_sq = if eff_n > 3.0 { rss / wsum * eff_n / (eff_n - 3.0) } else { 0.0 };
    let scale = sigma_sq * w2sum / wsum;
    let se = [(scale * inv[(1, 1)]).max(0.0).sqrt(), (scale * inv[(2, 2)]).max(0.0).sqrt()];
    Ok(([beta[1], beta[2]], se))
}

/// LIME surrogate coefficients at `xi`.
pub fn est_lime(model: &impl Model, xi: Point, cfg: &EstimatorConfig) -> Result<Estimate> {
    let (coef, se) = fit_local_surrogate(model, xi, cfg)?;
    Ok(Estimate::new(
        Attribution::new(Method::Lime, coef, Some(xi), Source::Empirical),
        se,
        cfg,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic;
    use crate::model::{bayes_rule, GenParams};

    fn cfg() -> EstimatorConfig {
        EstimatorConfig::default().with_seed(3)
    }

    #[test]
    fn trapezoid_ig_matches_exact() {
        let rule = bayes_rule(&GenParams::base(0.8, 0.8, 0.5).unwrap()).unwrap();
        let x = [1.0, -0.5];
        let e = est_integrated_gradients(&rule, x, [0.0, 0.0], &cfg()).unwrap();
        let a = analytic::integrated_gradients_linear(&rule, x, [0.0, 0.0]).unwrap();
        assert!((e.e1() - a.e1()).abs() < 1e-10 && (e.e2() - a.e2()).abs() < 1e-10);
        assert!(matches!(
            est_integrated_gradients(&rule, x, x, &cfg()),
            Err(LabError::DegeneratePath)
        ));
    }

    #[test]
    fn trapezoid_ig_on_nonlinear_model() {
        let f = |x: Point| x[0] * x[0] + 3.0 * x[1];
        let e = est_integrated_gradients(&f, [1.0, 1.0], [0.0, 0.0], &cfg()).unwrap();
        assert!((e.e1() - 1.0).abs() < 1e-6 && (e.e2() - 3.0).abs() < 1e-6);
    }

    #[test]
    fn counterfactual_search() {
        let indep = bayes_rule(&GenParams::base(0.0, 0.8, 0.5).unwrap()).unwrap();
        let r = est_counterfactual(&indep, [1.0, 1.0], &cfg()).unwrap();
        assert!((r.x_star[0]).abs() < 1e-4 && (r.x_star[1] - 1.0).abs() < 1e-4);

        let rule = bayes_rule(&GenParams::base(0.8, 0.8, 0.5).unwrap()).unwrap();
        let r = est_counterfactual(&rule, [1.0, 0.0], &cfg()).unwrap();
        let exact = analytic::counterfactual_closest(&rule, [1.0, 0.0]);
        assert!((r.x_star[0] - exact.x_star[0]).abs() < 1e-4);
        assert!((r.x_star[1] - exact.x_star[1]).abs() < 1e-4);

        let on = exact.x_star;
        let r = est_counterfactual(&rule, on, &cfg()).unwrap();
        assert!((r.x_star[0] - on[0]).abs() < 1e-6 && (r.x_star[1] - on[1]).abs() < 1e-6);
    }

    #[test]
    fn lime_direction() {
        let indep = bayes_rule(&GenParams::base(0.0, 0.8, 0.5).unwrap()).unwrap();
        let e = est_lime(&indep, [0.3, -1.0], &cfg()).unwrap();
        assert!(e.e2().abs() < 0.02);

        let rule = bayes_rule(&GenParams::base(0.8, 0.8, 0.5).unwrap()).unwrap();
        let e = est_lime(&rule, [1.0, 0.0], &cfg()).unwrap();
        let w = rule.weights();
        let cos = (e.e1() * w[0] + e.e2() * w[1]) / (e.e1().hypot(e.e2()) * w[0].hypot(w[1]));
        assert!(cos >= 0.99);

        let zero = |_: Point| 0.0;
        let (coef, _) = fit_local_surrogate(&zero, [1.0, 2.0], &cfg()).unwrap();
        assert!(coef[0].abs() < 1e-10 && coef[1].abs() < 1e-10);
    }
}
