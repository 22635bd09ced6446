//! The self-verification suite behind `verify`.
//!
//! Each criterion returns a [`CriterionResult`] whose text is independent of
//! wall-clock time, so two runs with the same seed render byte-identical
//! reports. Runtime budgets are checked but not printed.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::figures::{emit_figure_data, FigureData, FigureId, FigureOptions, SCATTER_SETTINGS};
use super::{ranking_check, run_sweep, GridPoint, SweepGrid, SweepReport, NULL_THRESHOLD, RANKING_SETTING};
use crate::analytic::{self, Method};
use crate::empirical::{self, EstimatorConfig};
use crate::error::Result;
use crate::model::{bayes_rule, stream_rng, Feature, GenParams, Model, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Full,
    Quick,
}

impl Mode {
    pub fn config(self, seed: u64) -> EstimatorConfig {
        match self {
            Mode::Full => EstimatorConfig::default(),
            Mode::Quick => EstimatorConfig::quick(),
        }
        .with_seed(seed)
    }

    fn sweep_budget(self) -> Duration {
        match self {
            Mode::Full => Duration::from_secs(600),
            Mode::Quick => Duration::from_secs(60),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CriterionResult {
    fn new(id: u8, name: &str, pass: bool, detail: String) -> Self {
        Self {
            id,
            name: name.into(),
            pass,
            detail,
        }
    }

    /// `PASS`/`FAIL` line for terminal output.
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {} {}: {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub seed: u64,
    pub mode: Mode,
    pub criteria: Vec<CriterionResult>,
}

impl AcceptanceReport {
    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed {:#x}, mode {:?}", self.seed, self.mode);
        for c in &self.criteria {
            let _ = writeln!(out, "{}", c.line());
        }
        let passed = self.criteria.iter().filter(|c| c.pass).count();
        let _ = writeln!(out, "{passed}/{} criteria passed", self.criteria.len());
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Weight ranking at the setting where the suppressor weight is largest.
pub fn bayes_weights() -> CriterionResult {
    let start = Instant::now();
    let row = ranking_check(RANKING_SETTING);
    let elapsed = start.elapsed();
    match row {
        Ok(r) => {
            let w2_ok = (0.88..=0.92).contains(&r.w2.abs());
            let w1_ok = (0.41..=0.45).contains(&r.w1.abs());
            let fast = elapsed < Duration::from_millis(1);
            CriterionResult::new(
                1,
                "bayes-weights",
                w2_ok && w1_ok && r.suppressor_dominates && fast,
                format!(
                    "w1 = {:.6}, w2 = {:.6}, |w2|/|w1| = {:.4}{}",
                    r.w1,
                    r.w2,
                    r.ratio,
                    if fast { "" } else { ", over 1 ms budget" }
                ),
            )
        }
        Err(e) => CriterionResult::new(1, "bayes-weights", false, e.to_string()),
    }
}

fn grid_params(grid: &SweepGrid) -> Result<Vec<(GridPoint, GenParams)>> {
    grid.points().into_iter().map(|p| Ok((p, p.params()?))).collect()
}

fn panel_for(grid: &SweepGrid, params: &GenParams, index: usize, seed: u64) -> Result<Vec<Point>> {
    grid.panel(params, index, seed)
}

/// Methods whose suppressor attribution vanishes exactly.
pub fn zero_attribution_set(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let grid = SweepGrid::default();
    let check = || -> Result<(f64, usize)> {
        let mut worst: f64 = 0.0;
        let mut count = 0;
        for (i, (_, p)) in grid_params(&grid)?.iter().enumerate() {
            let rule = bayes_rule(p)?;
            let mut e2s = vec![
                analytic::pattern_attrib(p)?.e2(),
                analytic::pattern_covariance_form(p)?.e2(),
                analytic::shapley_r2_single_model(p)?.e2(),
                analytic::firm_attrib(p)?.e2(),
                analytic::pattern_attribution_dtd(p, &rule).e2(),
            ];
            for x in panel_for(&grid, p, i, seed)? {
                e2s.push(analytic::mplot_function(p, Feature::X2, x[1])?);
            }
            count += e2s.len();
            worst = e2s.into_iter().fold(worst, |w, v| w.max(v.abs()));
        }
        Ok((worst, count))
    };
    let result = check();
    let fast = start.elapsed() < Duration::from_secs(1);
    match result {
        Ok((worst, count)) => CriterionResult::new(
            2,
            "zero-attribution-set",
            worst < NULL_THRESHOLD && fast,
            format!(
                "pattern, mplot, shapley_r2_single_model, firm, pattern_attribution: max |e2| = {worst:.3e} over {count} evaluations{}",
                if fast { "" } else { ", over 1 s budget" }
            ),
        ),
        Err(e) => CriterionResult::new(2, "zero-attribution-set", false, e.to_string()),
    }
}

/// Smallest analytic `|e2|` of each attributing method over grid points
/// with `|c| >= 0.4`.
pub fn nonzero_attribution_set() -> CriterionResult {
    const FLOOR: f64 = 1e-3;
    let start = Instant::now();
    let grid = SweepGrid::default();
    let check = || -> Result<Vec<(Method, &'static str, f64, GridPoint, usize)>> {
        let mut out: Vec<(Method, &'static str, f64, GridPoint, usize)> = Vec::new();
        for (point, p) in grid_params(&grid)?.into_iter().filter(|(g, _)| g.c.abs() >= 0.4) {
            let rule = bayes_rule(&p)?;
            let values = [
                (Method::Gradient, "", analytic::gradient_attrib(&rule).e2()),
                (Method::PixelFlip, "", analytic::pixel_flip_attrib(&p)?.e2()),
                (Method::Pfi, "", analytic::pfi_attrib(&p)?.e2()),
                (Method::Pd, " at x2=1", analytic::pd_function(&p, Feature::X2, 1.0)?),
                (Method::ShapMarginal, " at x=(1,1)", analytic::shap_marginal(&p, [1.0, 1.0])?.e2()),
                (Method::ShapConditional, " at x=(1,0)", analytic::shap_conditional(&p, [1.0, 0.0])?.e2()),
                (
                    Method::IntegratedGradients,
                    " at x=(1,1)",
                    analytic::integrated_gradients_linear(&rule, [1.0, 1.0], [0.0, 0.0])?.e2(),
                ),
                (
                    Method::Counterfactual,
                    " at xi=(1,0)",
                    analytic::counterfactual_closest(&rule, [1.0, 0.0]).delta[1],
                ),
                (Method::Lime, "", analytic::lime_reference_direction(&rule)[1]),
            ];
            for (m, at, v) in values {
                match out.iter_mut().find(|e| e.0 == m) {
                    Some(e) => {
                        e.4 += usize::from(v.abs() < FLOOR);
                        if v.abs() < e.2 {
                            e.2 = v.abs();
                            e.3 = point;
                        }
                    }
                    None => out.push((m, at, v.abs(), point, usize::from(v.abs() < FLOOR))),
                }
            }
        }
        Ok(out)
    };
    let result = check();
    let fast = start.elapsed() < Duration::from_secs(1);
    match result {
        Ok(mins) => {
            let failing: Vec<_> = mins.iter().filter(|m| m.4 > 0).collect();
            let mut detail = String::new();
            if failing.is_empty() {
                let worst = mins.iter().min_by(|a, b| a.2.total_cmp(&b.2)).expect("methods checked");
                let _ = write!(detail, "all 9 methods have |e2| > 1e-3; smallest {:.3e} ({})", worst.2, worst.0);
            } else {
                let parts: Vec<String> = failing
                    .iter()
                    .map(|(m, at, v, p, n)| {
                        format!(
                            "{m}{at} below 1e-3 at {n} grid points (min |e2| = {v:.3e} at c={}, s1sq={}, s2sq={})",
                            p.c, p.s1sq, p.s2sq
                        )
                    })
                    .collect();
                detail = parts.join("; ");
            }
            if !fast {
                detail.push_str(", over 1 s budget");
            }
            CriterionResult::new(3, "nonzero-attribution-set", failing.is_empty() && fast, detail)
        }
        Err(e) => CriterionResult::new(3, "nonzero-attribution-set", false, e.to_string()),
    }
}

/// Empirical estimators against closed forms over the default grid.
pub fn differential_verification(cfg: &EstimatorConfig, mode: Mode) -> (CriterionResult, Option<SweepReport>) {
    let start = Instant::now();
    let report = run_sweep(&SweepGrid::default(), cfg);
    let elapsed = start.elapsed();
    log::info!("sweep finished in {:.1} s", elapsed.as_secs_f64());
    match report {
        Ok(r) => {
            let frac = r.pass_fraction();
            let max_z = r.max_z();
            let in_budget = elapsed < mode.sweep_budget();
            let mut worst = r.rows.iter().filter(|row| !row.pass).collect::<Vec<_>>();
            worst.sort_by(|a, b| b.z.unwrap_or(f64::INFINITY).total_cmp(&a.z.unwrap_or(f64::INFINITY)));
            let mut detail = format!(
                "{}/{} rows within 3 sigma ({:.2}%), max z = {:.2}, {} errors",
                r.meta.n_passed,
                r.rows.len(),
                100.0 * frac,
                max_z,
                r.meta.n_errors
            );
            if let Some(w) = worst.first() {
                let _ = write!(
                    detail,
                    "; worst {} e{} at c={}, s1sq={}, s2sq={}",
                    w.method, w.feature, w.params.c, w.params.s1sq, w.params.s2sq
                );
            }
            if !in_budget {
                detail.push_str(", over runtime budget");
            }
            (
                CriterionResult::new(4, "differential-verification", frac >= 0.95 && max_z <= 4.0 && in_budget, detail),
                Some(r),
            )
        }
        Err(e) => (CriterionResult::new(4, "differential-verification", false, e.to_string()), None),
    }
}

fn random_params(rng: &mut impl Rng) -> Result<GenParams> {
    GenParams::base(
        rng.gen_range(-0.95..0.95),
        rng.gen_range(0.05..2.0),
        rng.gen_range(0.05..2.0),
    )
}

/// Efficiency, completeness, loss identities and the FIRM bound.
pub fn axiomatic_checks(seed: u64) -> CriterionResult {
    let check = || -> Result<(f64, f64, f64, f64, usize)> {
        let mut rng = stream_rng(seed, 5);
        let mut shap_err: f64 = 0.0;
        let mut ig_err: f64 = 0.0;
        for _ in 0..1000 {
            let p = random_params(&mut rng)?;
            let rule = bayes_rule(&p)?;
            let x = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let baseline = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let fx = rule.predict(x);
            for attr in [analytic::shap_marginal(&p, x)?, analytic::shap_conditional(&p, x)?] {
                shap_err = shap_err.max((attr.e1() + attr.e2() - fx).abs());
            }
            let ig = analytic::integrated_gradients_linear(&rule, x, baseline)?;
            let emp = empirical::est_integrated_gradients(&rule, x, baseline, &EstimatorConfig::default())?;
            let target = fx - rule.predict(baseline);
            ig_err = ig_err
                .max((ig.e1() + ig.e2() - target).abs())
                .max((emp.e1() + emp.e2() - target).abs());
        }
        let mut identity_err: f64 = 0.0;
        let mut firm_margin = f64::INFINITY;
        let mut firm_points = 0;
        for (_, p) in grid_params(&SweepGrid::default())? {
            let pf = analytic::pixel_flip_attrib(&p)?;
            let pfi = analytic::pfi_attrib(&p)?;
            identity_err = identity_err
                .max((pfi.e2() - 2.0 * pf.e2()).abs())
                .max((pfi.e1() - pfi.e2() - 2.0 * p.alpha()).abs());
            firm_margin = firm_margin.min(analytic::firm_attrib(&p)?.e1() - analytic::firm_lower_bound(&p)?);
            firm_points += 1;
        }
        Ok((shap_err, ig_err, identity_err, firm_margin, firm_points))
    };
    match check() {
        Ok((shap, ig, ident, firm, n)) => CriterionResult::new(
            5,
            "axiomatic-checks",
            shap <= 1e-10 && ig <= 1e-10 && ident <= 1e-12 && firm >= 0.0,
            format!(
                "SHAP efficiency max err {shap:.2e}, IG completeness max err {ig:.2e}, PFI/pixel-flip identity max err {ident:.2e}, FIRM minus bound >= {firm:.4} on {n} grid points"
            ),
        ),
        Err(e) => CriterionResult::new(5, "axiomatic-checks", false, e.to_string()),
    }
}

/// Boundary, direction, optimizer agreement and suppressor displacement of
/// counterfactuals over the default grid and panel.
pub fn counterfactual_checks(seed: u64, cfg: &EstimatorConfig) -> CriterionResult {
    let grid = SweepGrid::default();
    let check = || -> Result<(f64, f64, f64, f64, usize)> {
        let mut boundary: f64 = 0.0;
        let mut parallel: f64 = 0.0;
        let mut agreement: f64 = 0.0;
        let mut min_suppressor = f64::INFINITY;
        let mut cases = 0;
        for (i, (point, p)) in grid_params(&grid)?.iter().enumerate() {
            let rule = bayes_rule(p)?;
            let w = rule.weights();
            for xi in panel_for(&grid, p, i, seed)? {
                let cf = analytic::counterfactual_closest(&rule, xi);
                let num = empirical::est_counterfactual(&rule, xi, cfg)?;
                boundary = boundary.max(rule.predict(cf.x_star).abs());
                parallel = parallel.max((cf.delta[0] * w[1] - cf.delta[1] * w[0]).abs());
                agreement = agreement
                    .max((num.x_star[0] - cf.x_star[0]).abs())
                    .max((num.x_star[1] - cf.x_star[1]).abs());
                if point.c.abs() >= 0.4 {
                    min_suppressor = min_suppressor.min(cf.delta[1].abs());
                }
                cases += 1;
            }
        }
        Ok((boundary, parallel, agreement, min_suppressor, cases))
    };
    match check() {
        Ok((boundary, parallel, agreement, supp, n)) => CriterionResult::new(
            6,
            "counterfactual",
            boundary <= 1e-10 && parallel <= 1e-10 && agreement <= 1e-4 && supp > NULL_THRESHOLD,
            format!(
                "{n} instances: max |f(x*)| = {boundary:.2e}, max |delta x w| = {parallel:.2e}, optimizer gap {agreement:.2e}, min suppressor displacement (|c| >= 0.4) {supp:.3e}"
            ),
        ),
        Err(e) => CriterionResult::new(6, "counterfactual", false, e.to_string()),
    }
}

/// Shape claims of the correlation-sweep curves and the scatter boundary.
pub fn figure_reproduction(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let opts = FigureOptions {
        seed,
        ..Default::default()
    };
    let check = || -> Result<(f64, f64, f64, f64, usize)> {
        let mut asym: f64 = 0.0;
        let mut at_zero: f64 = 0.0;
        let mut margin = f64::INFINITY;
        let mut rows = 0;
        for fig in [FigureId::Fig3, FigureId::FigA6, FigureId::FigA7] {
            let FigureData::Curves(curves) = emit_figure_data(fig, &opts)? else {
                unreachable!("curve figures emit curve rows");
            };
            rows += curves.len();
            let value = |m: Method, f: usize, c: f64, s1sq: f64| {
                curves
                    .iter()
                    .find(|r| r.method == m && r.feature == f && r.c == c && r.s1sq == s1sq)
                    .map(|r| r.value)
            };
            for r in &curves {
                let e2 = value(r.method, 2, r.c, r.s1sq).expect("e2 row present");
                if r.feature == 2 {
                    let mirror = value(r.method, 2, -r.c, r.s1sq).expect("mirrored row present");
                    asym = asym.max((r.value - mirror).abs());
                    if r.c == 0.0 {
                        at_zero = at_zero.max(r.value.abs());
                    }
                } else {
                    margin = margin.min(r.value - e2);
                }
            }
        }
        let FigureData::Scatter(scatter) = emit_figure_data(FigureId::Fig2, &opts)? else {
            unreachable!("fig2 emits scatter rows");
        };
        let mut coef_err: f64 = 0.0;
        for p in SCATTER_SETTINGS {
            let alpha = (1.0 + p.c * p.c * p.s1sq / p.s2sq).powf(-0.5);
            let expected = [("w1", alpha), ("w2", -alpha * p.c * (p.s1sq / p.s2sq).sqrt()), ("b", 0.0)];
            for (kind, v) in expected {
                let row = scatter
                    .iter()
                    .find(|r| r.kind == kind && r.c == p.c)
                    .expect("coefficient row present");
                coef_err = coef_err.max((row.value - v).abs());
            }
        }
        Ok((asym, at_zero, margin, coef_err, rows))
    };
    let result = check();
    let fast = start.elapsed() < Duration::from_secs(30);
    match result {
        Ok((asym, zero, margin, coef, n)) => CriterionResult::new(
            7,
            "figure-reproduction",
            asym <= 1e-12 && zero <= 1e-12 && margin > 0.0 && coef <= 1e-12 && fast,
            format!(
                "{n} curve rows: e2 asymmetry {asym:.2e}, max |e2| at c=0 {zero:.2e}, min e1 - e2 {margin:.4}; boundary coefficient err {coef:.2e}{}",
                if fast { "" } else { ", over 30 s budget" }
            ),
        ),
        Err(e) => CriterionResult::new(7, "figure-reproduction", false, e.to_string()),
    }
}

/// Reruns a reduced pipeline and compares serialized outputs byte for byte.
pub fn determinism(seed: u64) -> CriterionResult {
    let run = || -> Result<String> {
        let grid = SweepGrid {
            random_instances: 3,
            ..SweepGrid::single(0.8, 0.8, 0.5)
        };
        let cfg = EstimatorConfig::quick().with_seed(seed);
        let mut out = run_sweep(&grid, &cfg)?.to_json()?;
        let opts = FigureOptions {
            seed,
            ..Default::default()
        };
        for fig in FigureId::ALL {
            out.push_str(&emit_figure_data(fig, &opts)?.to_csv_string()?);
        }
        Ok(out)
    };
    match (run(), run()) {
        (Ok(a), Ok(b)) => CriterionResult::new(
            8,
            "determinism",
            a == b,
            format!(
                "sweep JSON and figure CSVs {} across two runs ({} bytes)",
                if a == b { "identical" } else { "differ" },
                a.len()
            ),
        ),
        (Err(e), _) | (_, Err(e)) => CriterionResult::new(8, "determinism", false, e.to_string()),
    }
}

/// Runs every criterion.
pub fn run_acceptance(seed: u64, mode: Mode) -> AcceptanceReport {
    let cfg = mode.config(seed);
    let mut criteria = vec![bayes_weights(), zero_attribution_set(seed), nonzero_attribution_set()];
    criteria.push(differential_verification(&cfg, mode).0);
    criteria.push(axiomatic_checks(seed));
    criteria.push(counterfactual_checks(seed, &cfg));
    criteria.push(figure_reproduction(seed));
    criteria.push(determinism(seed));
    AcceptanceReport { seed, mode, criteria }
}
