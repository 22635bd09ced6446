//! Long-format tables behind each figure.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use super::{GridPoint, FIXED_PANEL};
use crate::analytic::{self, Method};
use crate::error::{LabError, Result};
use crate::model::{bayes_rule, derive_seed, sample_dataset, Feature, Model, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FigureId {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    FigA6,
    FigA7,
}

impl FigureId {
    pub const ALL: [FigureId; 6] = [
        FigureId::Fig2,
        FigureId::Fig3,
        FigureId::Fig4,
        FigureId::Fig5,
        FigureId::FigA6,
        FigureId::FigA7,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Self::Fig2 => "fig2",
            Self::Fig3 => "fig3",
            Self::Fig4 => "fig4",
            Self::Fig5 => "fig5",
            Self::FigA6 => "figA6",
            Self::FigA7 => "figA7",
        }
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Self::Fig2 => &["c", "s1sq", "s2sq", "kind", "x1", "x2", "value"],
            Self::Fig3 | Self::FigA6 | Self::FigA7 => &["c", "s1sq", "s2sq", "method", "feature", "value"],
            Self::Fig4 => &["c", "s1sq", "s2sq", "series", "feature", "x", "value"],
            Self::Fig5 => &["c", "s1sq", "s2sq", "quantity", "x1", "x2"],
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for FigureId {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.id().eq_ignore_ascii_case(s))
            .ok_or_else(|| LabError::UnknownFigure(s.to_string()))
    }
}

/// Knobs for figure emission.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FigureOptions {
    pub seed: u64,
    /// Sampled points per setting for scatter layers.
    pub n_points: usize,
    /// `s1^2` values of the curve family in the correlation-sweep figures.
    pub s1sq_family: Vec<f64>,
    /// Number of steps from `c = -1` to `c = 1`.
    pub c_steps: usize,
    /// Instances for the counterfactual figure.
    pub instances: Vec<Point>,
}

impl Default for FigureOptions {
    fn default() -> Self {
        Self {
            seed: crate::cli::DEFAULT_SEED,
            n_points: 500,
            s1sq_family: vec![0.1, 0.3, 0.5, 0.8, 0.9],
            c_steps: 40,
            instances: FIXED_PANEL.to_vec(),
        }
    }
}

/// Settings shared by the scatter and dependence figures.
pub const SCATTER_SETTINGS: [GridPoint; 3] = [
    GridPoint {
        c: 0.8,
        s1sq: 0.8,
        s2sq: 0.5,
        epsilon: 0.0,
    },
    GridPoint {
        c: 0.0,
        s1sq: 0.8,
        s2sq: 0.5,
        epsilon: 0.0,
    },
    GridPoint {
        c: -0.8,
        s1sq: 0.8,
        s2sq: 0.5,
        epsilon: 0.0,
    },
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScatterRow {
    pub c: f64,
    pub s1sq: f64,
    pub s2sq: f64,
    /// `sample` rows carry the label in `value`; `w1`, `w2`, `b` rows carry
    /// the decision boundary coefficients.
    pub kind: String,
    pub x1: Option<f64>,
    pub x2: Option<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRow {
    pub c: f64,
    pub s1sq: f64,
    pub s2sq: f64,
    pub method: Method,
    pub feature: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DependenceRow {
    pub c: f64,
    pub s1sq: f64,
    pub s2sq: f64,
    /// `pd`, `mplot` or `scatter`.
    pub series: String,
    pub feature: usize,
    pub x: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CounterfactualRow {
    pub c: f64,
    pub s1sq: f64,
    pub s2sq: f64,
    /// `xi`, `x_star` or `displacement`, in consecutive triples per instance.
    pub quantity: String,
    pub x1: f64,
    pub x2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FigureData {
    Scatter(Vec<ScatterRow>),
    Curves(Vec<CurveRow>),
    Dependence(Vec<DependenceRow>),
    Counterfactual(Vec<CounterfactualRow>),
}

impl FigureData {
    pub fn len(&self) -> usize {
        match self {
            Self::Scatter(r) => r.len(),
            Self::Curves(r) => r.len(),
            Self::Dependence(r) => r.len(),
            Self::Counterfactual(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        match self {
            Self::Scatter(rows) => rows.iter().try_for_each(|r| w.serialize(r))?,
            Self::Curves(rows) => rows.iter().try_for_each(|r| w.serialize(r))?,
            Self::Dependence(rows) => rows.iter().try_for_each(|r| w.serialize(r))?,
            Self::Counterfactual(rows) => rows.iter().try_for_each(|r| w.serialize(r))?,
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }
}

fn scatter(opts: &FigureOptions) -> Result<FigureData> {
    let mut rows = Vec::new();
    for (i, p) in SCATTER_SETTINGS.iter().enumerate() {
        let params = p.params()?;
        let rule = bayes_rule(&params)?;
        for (kind, value) in [("w1", rule.w1), ("w2", rule.w2), ("b", rule.b)] {
            rows.push(ScatterRow {
                c: p.c,
                s1sq: p.s1sq,
                s2sq: p.s2sq,
                kind: kind.into(),
                x1: None,
                x2: None,
                value,
            });
        }
        let data = sample_dataset(&params, opts.n_points, derive_seed(opts.seed, &[2, i as u64]))?;
        rows.extend(data.iter().map(|r| ScatterRow {
            c: p.c,
            s1sq: p.s1sq,
            s2sq: p.s2sq,
            kind: "sample".into(),
            x1: Some(r.x[0]),
            x2: Some(r.x[1]),
            value: r.y.value(),
        }));
    }
    Ok(FigureData::Scatter(rows))
}

fn c_grid(steps: usize) -> Vec<f64> {
    let half = steps as f64 / 2.0;
    (0..=steps).map(|i| (i as f64 - half) / half).collect()
}

fn curves(opts: &FigureOptions, s2sq: f64) -> Result<FigureData> {
    if opts.c_steps < 2 || opts.c_steps % 2 != 0 {
        return Err(LabError::ParameterDomain(format!(
            "c_steps must be a positive even number (got {})",
            opts.c_steps
        )));
    }
    let mut rows = Vec::new();
    for &s1sq in &opts.s1sq_family {
        for c in c_grid(opts.c_steps) {
            let params = GridPoint {
                c,
                s1sq,
                s2sq,
                epsilon: 0.0,
            }
            .params()?;
            for attr in [analytic::pixel_flip_attrib(&params)?, analytic::pfi_attrib(&params)?] {
                for feature in Feature::BOTH {
                    rows.push(CurveRow {
                        c,
                        s1sq,
                        s2sq,
                        method: attr.method,
                        feature: feature.index(),
                        value: attr.score(feature),
                    });
                }
            }
        }
    }
    Ok(FigureData::Curves(rows))
}

fn dependence(opts: &FigureOptions) -> Result<FigureData> {
    let xs: Vec<f64> = (0..=60).map(|i| (i as f64 - 30.0) / 10.0).collect();
    let mut rows = Vec::new();
    for (i, p) in SCATTER_SETTINGS.iter().enumerate() {
        let params = p.params()?;
        let rule = bayes_rule(&params)?;
        let row = |series: &str, feature: Feature, x: f64, value: f64| DependenceRow {
            c: p.c,
            s1sq: p.s1sq,
            s2sq: p.s2sq,
            series: series.into(),
            feature: feature.index(),
            x,
            value,
        };
        for feature in Feature::BOTH {
            for &x in &xs {
                rows.push(row("pd", feature, x, analytic::pd_function(&params, feature, x)?));
            }
            for &x in &xs {
                rows.push(row("mplot", feature, x, analytic::mplot_function(&params, feature, x)?));
            }
        }
        let data = sample_dataset(&params, opts.n_points, derive_seed(opts.seed, &[4, i as u64]))?;
        for feature in Feature::BOTH {
            for r in data.iter() {
                rows.push(row("scatter", feature, r.x[feature.slot()], rule.predict(r.x)));
            }
        }
    }
    Ok(FigureData::Dependence(rows))
}

fn counterfactuals(opts: &FigureOptions) -> Result<FigureData> {
    let p = SCATTER_SETTINGS[0];
    let rule = bayes_rule(&p.params()?)?;
    let mut rows = Vec::new();
    for &xi in &opts.instances {
        let cf = analytic::counterfactual_closest(&rule, xi);
        for (quantity, v) in [("xi", xi), ("x_star", cf.x_star), ("displacement", cf.delta)] {
            rows.push(CounterfactualRow {
                c: p.c,
                s1sq: p.s1sq,
                s2sq: p.s2sq,
                quantity: quantity.into(),
                x1: v[0],
                x2: v[1],
            });
        }
    }
    Ok(FigureData::Counterfactual(rows))
}

/// Builds the table for one figure.
pub fn emit_figure_data(figure: FigureId, opts: &FigureOptions) -> Result<FigureData> {
    if opts.n_points == 0 {
        return Err(LabError::EmptyRequest);
    }
    match figure {
        FigureId::Fig2 => scatter(opts),
        FigureId::Fig3 => curves(opts, 0.5),
        FigureId::FigA6 => curves(opts, 0.1),
        FigureId::FigA7 => curves(opts, 0.9),
        FigureId::Fig4 => dependence(opts),
        FigureId::Fig5 => counterfactuals(opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for f in FigureId::ALL {
            assert_eq!(f.id().parse::<FigureId>().unwrap(), f);
        }
        assert!(matches!("fig9".parse::<FigureId>(), Err(LabError::UnknownFigure(_))));
    }

    #[test]
    fn csv_headers_follow_column_contract() {
        let opts = FigureOptions {
            n_points: 3,
            ..Default::default()
        };
        for f in FigureId::ALL {
            let csv = emit_figure_data(f, &opts).unwrap().to_csv_string().unwrap();
            let header = csv.lines().next().unwrap();
            assert_eq!(header, f.columns().join(","), "{f}");
        }
    }

    #[test]
    fn pfi_is_two_at_zero_correlation() {
        let FigureData::Curves(rows) = emit_figure_data(FigureId::Fig3, &FigureOptions::default()).unwrap() else {
            panic!("curve table expected");
        };
        for r in rows.iter().filter(|r| r.c == 0.0 && r.method == Method::Pfi && r.feature == 1) {
            assert!((r.value - 2.0).abs() < 1e-12);
        }
        let c = c_grid(40);
        assert_eq!(c.len(), 41);
        assert!(c.iter().zip(c.iter().rev()).all(|(a, b)| *a == -*b));
    }

    #[test]
    fn counterfactual_moves_the_suppressor() {
        let FigureData::Counterfactual(rows) = emit_figure_data(FigureId::Fig5, &FigureOptions {
            instances: vec![[1.0, 0.0]],
            ..Default::default()
        })
        .unwrap() else {
            panic!("counterfactual table expected");
        };
        assert_eq!(rows.len(), 3);
        assert!(rows[2].x2.abs() > 0.1);
    }

    #[test]
    fn deterministic_output() {
        let opts = FigureOptions::default();
        let a = emit_figure_data(FigureId::Fig2, &opts).unwrap().to_csv_string().unwrap();
        let b = emit_figure_data(FigureId::Fig2, &opts).unwrap().to_csv_string().unwrap();
        assert_eq!(a, b);
    }
}
