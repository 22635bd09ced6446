//! Parameter sweeps, analytic-vs-empirical comparison, suppressor verdicts
//! and figure data.

pub mod acceptance;
pub mod figures;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{self, Attribution, Method, Scope};
use crate::empirical::{self, Estimate, EstimatorConfig, ExpectationCache};
use crate::error::{LabError, Result};
use crate::model::{bayes_rule, derive_seed, sample_dataset, BayesLinearRule, Feature, GenParams, Point};

pub use acceptance::{run_acceptance, AcceptanceReport, CriterionResult, Mode};
pub use figures::{emit_figure_data, FigureData, FigureId, FigureOptions};

/// Threshold on `|e2|` separating exact zeros from genuine attributions.
pub const NULL_THRESHOLD: f64 = 1e-10;

/// Instance points shared by every grid point.
pub const FIXED_PANEL: [Point; 6] = [
    [1.0, 1.0],
    [1.0, -1.0],
    [-1.0, 1.0],
    [-1.0, -1.0],
    [1.0, 0.0],
    [0.0, 1.0],
];

const PANEL_TAG: u64 = 0x70616e;
const CACHE_TAG: u64 = 0x6361636865;

/// Cartesian grid of generative parameters plus the instance panel for
/// local methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub c_values: Vec<f64>,
    pub s1sq_values: Vec<f64>,
    pub s2sq_values: Vec<f64>,
    pub epsilon: f64,
    pub instance_points: Vec<Point>,
    /// Extra instances drawn from the model at each grid point.
    pub random_instances: usize,
    pub baseline: Point,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            c_values: vec![-0.8, -0.4, 0.0, 0.4, 0.8],
            s1sq_values: vec![0.1, 0.5, 0.8, 1.0],
            s2sq_values: vec![0.1, 0.5, 0.9],
            epsilon: 0.0,
            instance_points: FIXED_PANEL.to_vec(),
            random_instances: 10,
            baseline: [0.0, 0.0],
        }
    }
}

/// One point of a sweep grid, keeping the variances exactly as requested.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub c: f64,
    pub s1sq: f64,
    pub s2sq: f64,
    pub epsilon: f64,
}

impl GridPoint {
    pub fn params(&self) -> Result<GenParams> {
        GenParams::from_variances(self.c, self.s1sq, self.s2sq, self.epsilon)
    }
}

impl SweepGrid {
    pub fn single(c: f64, s1sq: f64, s2sq: f64) -> Self {
        Self {
            c_values: vec![c],
            s1sq_values: vec![s1sq],
            s2sq_values: vec![s2sq],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_values.is_empty() || self.s1sq_values.is_empty() || self.s2sq_values.is_empty() {
            return Err(LabError::ParameterDomain("sweep grid axes must be non-empty".into()));
        }
        for p in self.points() {
            p.params()?;
        }
        if self.instance_points.iter().chain([&self.baseline]).any(|x| !(x[0].is_finite() && x[1].is_finite())) {
            return Err(LabError::ParameterDomain("instance points must be finite".into()));
        }
        Ok(())
    }

    /// Grid points in `c`-major order.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &c in &self.c_values {
            for &s1sq in &self.s1sq_values {
                for &s2sq in &self.s2sq_values {
                    out.push(GridPoint {
                        c,
                        s1sq,
                        s2sq,
                        epsilon: self.epsilon,
                    });
                }
            }
        }
        out
    }

    /// Fixed panel followed by `random_instances` points sampled from the
    /// model at grid point `index`.
    pub fn panel(&self, params: &GenParams, index: usize, seed: u64) -> Result<Vec<Point>> {
        let mut panel = self.instance_points.clone();
        if self.random_instances > 0 {
            let data = sample_dataset(params, self.random_instances, derive_seed(seed, &[PANEL_TAG, index as u64]))?;
            panel.extend(data.iter().map(|r| r.x));
        }
        Ok(panel)
    }
}

/// One feature of one method at one grid point (and instance, for local
/// methods).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub grid_index: usize,
    pub params: GridPoint,
    pub method: Method,
    pub feature: usize,
    pub instance: Option<Point>,
    pub analytic_value: Option<f64>,
    pub empirical_value: Option<f64>,
    pub std_error: Option<f64>,
    pub tolerance: Option<f64>,
    /// `|analytic - empirical|` in units of `tolerance / 3`.
    pub z: Option<f64>,
    pub pass: bool,
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictKind {
    SuppressorAttributing,
    SuppressorNullifying,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub verdict: VerdictKind,
    /// Largest analytic `|e2|` over grid points with `c != 0`.
    pub max_abs_e2: f64,
}

/// A closed form whose printed expression differs from the implemented one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub method: Method,
    pub params: GridPoint,
    pub instance: Option<Point>,
    pub printed: Point,
    pub implemented: Point,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepMeta {
    pub seed: u64,
    pub version: String,
    pub config: EstimatorConfig,
    pub grid: SweepGrid,
    pub n_rows: usize,
    pub n_passed: usize,
    pub n_errors: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub meta: SweepMeta,
    pub rows: Vec<SweepRow>,
    pub verdicts: BTreeMap<Method, Verdict>,
    pub discrepancies: Vec<Discrepancy>,
}

impl SweepReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Methods judged suppressor-nullifying, ordered by id.
    pub fn nullifying_methods(&self) -> Vec<Method> {
        let mut out: Vec<Method> = self
            .verdicts
            .iter()
            .filter(|(_, v)| v.verdict == VerdictKind::SuppressorNullifying)
            .map(|(m, _)| *m)
            .collect();
        out.sort_by_key(|m| m.id());
        out
    }

    /// Fraction of rows passing at the configured tolerance.
    pub fn pass_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.meta.n_passed as f64 / self.rows.len() as f64
    }

    /// Largest `z` over all rows; rows that errored count as infinite.
    pub fn max_z(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.z.unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }
}

/// Methods in report order.
pub fn methods_by_id() -> Vec<Method> {
    let mut methods = Method::ALL.to_vec();
    methods.sort_by_key(|m| m.id());
    methods
}

fn method_tag(method: Method) -> u64 {
    Method::ALL.iter().position(|m| *m == method).expect("method listed") as u64
}

/// Compares one analytic attribution with its empirical counterpart.
fn compare(
    index: usize,
    point: GridPoint,
    analytic: &Attribution,
    empirical: Result<Estimate>,
    cfg: &EstimatorConfig,
) -> [SweepRow; 2] {
    Feature::BOTH.map(|feature| {
        let slot = feature.slot();
        let a = analytic.feature_scores[slot];
        let mut row = SweepRow {
            grid_index: index,
            params: point,
            method: analytic.method,
            feature: feature.index(),
            instance: analytic.instance,
            analytic_value: Some(a),
            empirical_value: None,
            std_error: None,
            tolerance: None,
            z: None,
            pass: false,
            error: None,
        };
        match &empirical {
            Ok(est) => {
                let e = est.attribution.feature_scores[slot];
                let se = est.std_error[slot];
                let tol = (3.0 * se).max(cfg.abs_tolerance(analytic.method));
                let diff = (a - e).abs();
                row.empirical_value = Some(e);
                row.std_error = Some(se);
                row.tolerance = Some(tol);
                row.z = Some(3.0 * diff / tol);
                row.pass = diff <= tol;
            }
            Err(err) => row.error = Some(err.to_string()),
        }
        row
    })
}

fn failed_rows(index: usize, point: GridPoint, method: Method, instance: Option<Point>, err: &LabError) -> [SweepRow; 2] {
    Feature::BOTH.map(|feature| SweepRow {
        grid_index: index,
        params: point,
        method,
        feature: feature.index(),
        instance,
        analytic_value: None,
        empirical_value: None,
        std_error: None,
        tolerance: None,
        z: None,
        pass: false,
        error: Some(err.to_string()),
    })
}

fn scalar_pair(
    method: Method,
    x: Point,
    pair: Result<([f64; 2], [f64; 2])>,
    cfg: &EstimatorConfig,
) -> Result<Estimate> {
    let (scores, se) = pair?;
    Ok(Estimate::new(
        Attribution::new(method, scores, Some(x), analytic::Source::Empirical),
        se,
        cfg,
    ))
}

fn global_rows(
    index: usize,
    point: GridPoint,
    params: &GenParams,
    rule: &BayesLinearRule,
    method: Method,
    cfg: &EstimatorConfig,
) -> Vec<SweepRow> {
    let reference = match method {
        Method::Pattern => analytic::pattern_covariance_form(params),
        _ => analytic::evaluate(method, params, None, [0.0, 0.0]),
    };
    let reference = match reference {
        Ok(a) => a,
        Err(e) => return failed_rows(index, point, method, None, &e).to_vec(),
    };
    let est = match method {
        Method::Gradient => Ok(empirical::est_gradient(rule, [0.0, 0.0], cfg)),
        Method::Pattern => empirical::est_pattern(params, cfg),
        Method::PixelFlip => empirical::est_pixel_flip(params, cfg),
        Method::Pfi => empirical::est_pfi(params, cfg),
        Method::ShapleyR2ThreeModel => {
            empirical::est_shapley(params, cfg, empirical::ValueFunction::R2ThreeModel, None)
        }
        Method::ShapleyR2SingleModel => empirical::est_shapley(params, cfg, empirical::ValueFunction::R2Single, None),
        Method::Firm => empirical::est_firm(params, cfg),
        Method::PatternAttribution => empirical::est_pattern_attribution(params, cfg),
        other => unreachable!("{other} is local"),
    };
    compare(index, point, &reference, est, cfg).to_vec()
}

fn local_rows(
    index: usize,
    point: GridPoint,
    params: &GenParams,
    rule: &BayesLinearRule,
    method: Method,
    panel: &[Point],
    baseline: Point,
    cache: &ExpectationCache<BayesLinearRule>,
    cfg: &EstimatorConfig,
) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for (i, &x) in panel.iter().enumerate() {
        let reference = match analytic::evaluate(method, params, Some(x), baseline) {
            Ok(a) => a,
            Err(e) => {
                rows.extend(failed_rows(index, point, method, Some(x), &e));
                continue;
            }
        };
        let local_cfg = cfg.with_seed(derive_seed(cfg.seed, &[i as u64]));
        let est = match method {
            Method::Pd => {
                let pd = Feature::BOTH.map(|f| cache.pd(f, x[f.slot()]));
                scalar_pair(
                    method,
                    x,
                    Ok(([pd[0].value, pd[1].value], [pd[0].std_error, pd[1].std_error])),
                    cfg,
                )
            }
            Method::Mplot => {
                let pair = cache
                    .mplot(Feature::X1, x[0])
                    .and_then(|a| cache.mplot(Feature::X2, x[1]).map(|b| ([a.value, b.value], [a.std_error, b.std_error])));
                scalar_pair(method, x, pair, cfg)
            }
            Method::ShapMarginal => scalar_pair(method, x, Ok(cache.shap_marginal(x)), cfg),
            Method::ShapConditional => scalar_pair(method, x, cache.shap_conditional(x), cfg),
            Method::Counterfactual => empirical::est_counterfactual(rule, x, cfg).map(|cf| {
                Estimate::new(
                    Attribution::new(method, cf.delta, Some(x), analytic::Source::Empirical),
                    [0.0; 2],
                    cfg,
                )
            }),
            Method::IntegratedGradients => empirical::est_integrated_gradients(rule, x, baseline, cfg),
            Method::Lime => empirical::est_lime(rule, x, &local_cfg),
            other => unreachable!("{other} is global"),
        };
        rows.extend(compare(index, point, &reference, est, cfg));
    }
    rows
}

fn grid_point_rows(grid: &SweepGrid, index: usize, point: GridPoint, cfg: &EstimatorConfig) -> Vec<SweepRow> {
    let setup = point.params().and_then(|p| {
        let rule = bayes_rule(&p)?;
        let panel = grid.panel(&p, index, cfg.seed)?;
        Ok((p, rule, panel))
    });
    let (params, rule, panel) = match setup {
        Ok(s) => s,
        Err(e) => {
            return methods_by_id()
                .into_iter()
                .flat_map(|m| failed_rows(index, point, m, None, &e))
                .collect()
        }
    };
    let cache_data = sample_dataset(&params, cfg.n_samples, derive_seed(cfg.seed, &[CACHE_TAG, index as u64]));
    let cache = cache_data.map(|d| ExpectationCache::new(&d, rule, cfg.bin_width));
    let mut rows = Vec::new();
    for method in methods_by_id() {
        let method_cfg = cfg.with_seed(derive_seed(cfg.seed, &[index as u64, method_tag(method)]));
        match method.scope() {
            Scope::Global => rows.extend(global_rows(index, point, &params, &rule, method, &method_cfg)),
            Scope::Local => match &cache {
                Ok(cache) => rows.extend(local_rows(
                    index,
                    point,
                    &params,
                    &rule,
                    method,
                    &panel,
                    grid.baseline,
                    cache,
                    &method_cfg,
                )),
                Err(e) => rows.extend(failed_rows(index, point, method, None, e)),
            },
        }
    }
    rows
}

/// Largest analytic `|e2|` per method over correlated grid points. Local
/// methods are taken over the row instances.
fn verdicts(rows: &[SweepRow]) -> BTreeMap<Method, Verdict> {
    let mut max_e2: BTreeMap<Method, f64> = methods_by_id().into_iter().map(|m| (m, 0.0)).collect();
    for row in rows.iter().filter(|r| r.feature == 2 && r.params.c != 0.0) {
        let v = row.analytic_value.map_or(f64::INFINITY, f64::abs);
        let entry = max_e2.get_mut(&row.method).expect("method listed");
        *entry = entry.max(v);
    }
    max_e2
        .into_iter()
        .map(|(m, v)| {
            let verdict = if v < NULL_THRESHOLD {
                VerdictKind::SuppressorNullifying
            } else {
                VerdictKind::SuppressorAttributing
            };
            (m, Verdict { verdict, max_abs_e2: v })
        })
        .collect()
}

fn discrepancies(point: GridPoint, grid: &SweepGrid) -> Result<Vec<Discrepancy>> {
    let params = point.params()?;
    let rule = bayes_rule(&params)?;
    let printed = analytic::pattern_attrib(&params)?;
    let data_form = analytic::pattern_covariance_form(&params)?;
    let xi = [1.0, 0.0];
    let cf = analytic::counterfactual_closest(&rule, xi);
    let ig_x = [1.0, 1.0];
    let ig = analytic::integrated_gradients_linear(&rule, ig_x, grid.baseline)?;
    let candidates = [
        Discrepancy {
            method: Method::Pattern,
            params: point,
            instance: None,
            printed: printed.feature_scores,
            implemented: data_form.feature_scores,
            note: "printed constant is Sigma w; sample Cov(x, f) converges to Cov(x) w".into(),
        },
        Discrepancy {
            method: Method::Counterfactual,
            params: point,
            instance: Some(xi),
            printed: analytic::counterfactual_printed_form(&params, xi),
            implemented: cf.x_star,
            note: "printed x* is off the decision boundary; orthogonal projection used".into(),
        },
        Discrepancy {
            method: Method::IntegratedGradients,
            params: point,
            instance: Some(ig_x),
            printed: analytic::integrated_gradients_printed_form(&params, ig_x, grid.baseline),
            implemented: ig.feature_scores,
            note: "printed form is quadratic in x; exact path integral of a linear model is w (x - x')".into(),
        },
    ];
    Ok(candidates
        .into_iter()
        .filter(|d| (0..2).any(|j| (d.printed[j] - d.implemented[j]).abs() > 1e-12))
        .collect())
}

/// Evaluates every method analytically and empirically at every grid point.
pub fn run_sweep(grid: &SweepGrid, cfg: &EstimatorConfig) -> Result<SweepReport> {
    grid.validate()?;
    cfg.validate()?;
    let points = grid.points();
    let rows: Vec<SweepRow> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| grid_point_rows(grid, i, *p, cfg))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let mut discrepancy_list = Vec::new();
    for p in points.iter().filter(|p| p.epsilon == 0.0) {
        discrepancy_list.extend(discrepancies(*p, grid)?);
    }
    let n_passed = rows.iter().filter(|r| r.pass).count();
    let n_errors = rows.iter().filter(|r| r.error.is_some()).count();
    Ok(SweepReport {
        meta: SweepMeta {
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").into(),
            config: *cfg,
            grid: grid.clone(),
            n_rows: rows.len(),
            n_passed,
            n_errors,
        },
        verdicts: verdicts(&rows),
        rows,
        discrepancies: discrepancy_list,
    })
}

/// Weight-ranking check for the setting where the suppressor weight
/// dominates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub params: GridPoint,
    pub w1: f64,
    pub w2: f64,
    /// `|w2| / |w1|`.
    pub ratio: f64,
    /// `|w2| > 2 |w1|`.
    pub suppressor_dominates: bool,
}

pub const RANKING_SETTING: GridPoint = GridPoint {
    c: -0.8,
    s1sq: 1.0,
    s2sq: 0.15,
    epsilon: 0.0,
};

pub fn ranking_check(point: GridPoint) -> Result<RankingRow> {
    let rule = bayes_rule(&point.params()?)?;
    let ratio = rule.w2.abs() / rule.w1.abs();
    Ok(RankingRow {
        params: point,
        w1: rule.w1,
        w2: rule.w2,
        ratio,
        suppressor_dominates: rule.w2.abs() > 2.0 * rule.w1.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> EstimatorConfig {
        EstimatorConfig::quick().with_seed(9)
    }

    #[test]
    fn default_grid_shape() {
        let g = SweepGrid::default();
        assert_eq!(g.points().len(), 60);
        let p = g.points()[0].params().unwrap();
        assert_eq!(g.panel(&p, 0, 1).unwrap().len(), 16);
        assert_eq!(g.panel(&p, 0, 1).unwrap(), g.panel(&p, 0, 1).unwrap());
    }

    #[test]
    fn invalid_grid_rejected() {
        let mut g = SweepGrid::default();
        g.c_values.clear();
        assert!(g.validate().is_err());
        let g = SweepGrid::single(1.5, 0.8, 0.5);
        assert!(matches!(g.validate(), Err(LabError::ParameterDomain(_))));
    }

    #[test]
    fn single_point_sweep() {
        let grid = SweepGrid {
            random_instances: 2,
            ..SweepGrid::single(0.8, 0.8, 0.5)
        };
        let report = run_sweep(&grid, &tiny_cfg()).unwrap();
        let locals = Method::ALL.iter().filter(|m| m.scope() == Scope::Local).count();
        let globals = Method::ALL.len() - locals;
        assert_eq!(report.rows.len(), 2 * (globals + locals * 8));
        assert_eq!(report.meta.n_errors, 0);
        let failing: Vec<_> = report.rows.iter().filter(|r| !r.pass).collect();
        assert!(failing.is_empty(), "{failing:#?}");
        assert_eq!(
            report.nullifying_methods(),
            {
                let mut v = vec![
                    Method::Firm,
                    Method::Mplot,
                    Method::Pattern,
                    Method::PatternAttribution,
                    Method::ShapleyR2SingleModel,
                ];
                v.sort_by_key(|m| m.id());
                v
            }
        );
        let again = run_sweep(&grid, &tiny_cfg()).unwrap();
        assert_eq!(report.to_json().unwrap(), again.to_json().unwrap());
    }

    #[test]
    fn uncorrelated_grid_has_zero_suppressor_scores() {
        let grid = SweepGrid {
            random_instances: 0,
            ..SweepGrid::single(0.0, 0.5, 0.5)
        };
        let report = run_sweep(&grid, &tiny_cfg()).unwrap();
        for row in report.rows.iter().filter(|r| r.feature == 2) {
            assert!(row.analytic_value.unwrap().abs() < NULL_THRESHOLD, "{row:?}");
            assert!(row.pass, "{row:?}");
        }
    }

    #[test]
    fn ranking_setting() {
        let r = ranking_check(RANKING_SETTING).unwrap();
        assert!((r.ratio - 2.0656).abs() < 1e-3 && r.suppressor_dominates);
        let r = ranking_check(GridPoint { c: 0.0, ..RANKING_SETTING }).unwrap();
        assert_eq!(r.ratio, 0.0);
        let r = ranking_check(GridPoint { s2sq: 1.0, ..RANKING_SETTING }).unwrap();
        assert!((r.ratio - 0.8).abs() < 1e-12 && !r.suppressor_dominates);
    }
}
