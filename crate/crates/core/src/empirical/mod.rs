//! Black-box estimators of each attribution method.
//!
//! These run the methods the way they would be run in practice against a
//! fitted model: sampling, permuting, binning, enumerating coalitions and
//! fitting surrogates. They only touch the model through [`Model`] and the
//! data through [`sample_dataset`], so they serve as independent oracles for
//! the closed forms in [`crate::analytic`].
//!
//! [`Model`]: crate::model::Model
//! [`sample_dataset`]: crate::model::sample_dataset

mod conditional;
mod local;
mod moments;

pub use conditional::{
    est_firm, est_mplot, est_pd, est_shapley, shapley_enumerate, BandEstimate, ConditionalSampler, ExpectationCache,
    MarginalSampler, ValueFunction, MIN_BAND_COUNT,
};
pub use local::{est_counterfactual, est_integrated_gradients, est_lime, fit_local_surrogate};
pub use moments::{
    est_gradient, est_masked_loss_difference, est_pattern, est_pattern_attribution, est_permuted_loss,
    est_pfi, est_pixel_flip,
};

use serde::{Deserialize, Serialize};

use crate::analytic::{Attribution, Method};
use crate::error::{LabError, Result};

/// Sample sizes, seeds and smoothing knobs shared by all estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Samples for moment-type estimators (covariances, conditional means).
    pub n_samples: usize,
    /// Samples for squared-loss estimators (pixel flipping, PFI).
    pub n_loss_samples: usize,
    pub seed: u64,
    /// Width of the conditioning band / FIRM bins.
    pub bin_width: f64,
    pub lime_kernel_width: f64,
    pub lime_n: usize,
    /// Nodes of the trapezoid rule along the integrated-gradients path.
    pub quadrature_nodes: usize,
    /// Multiplier applied to the Monte-Carlo absolute tolerances.
    pub tolerance_scale: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            n_samples: 1_000_000,
            n_loss_samples: 100_000,
            seed: crate::cli::DEFAULT_SEED,
            bin_width: 0.05,
            lime_kernel_width: 1.0,
            lime_n: 10_000,
            quadrature_nodes: 1000,
            tolerance_scale: 1.0,
        }
    }
}

impl EstimatorConfig {
    /// Ten times fewer samples, tolerances widened by `sqrt(10)`.
    pub fn quick() -> Self {
        let full = Self::default();
        Self {
            n_samples: full.n_samples / 10,
            n_loss_samples: full.n_loss_samples / 10,
            lime_n: full.lime_n / 10,
            tolerance_scale: 10f64.sqrt(),
            ..full
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_samples", self.n_samples),
            ("n_loss_samples", self.n_loss_samples),
            ("lime_n", self.lime_n),
        ];
        for (name, n) in counts {
            if n == 0 {
                return Err(LabError::ParameterDomain(format!("{name} must be at least 1")));
            }
        }
        if self.quadrature_nodes < 2 {
            return Err(LabError::ParameterDomain(
                "quadrature_nodes must be at least 2".into(),
            ));
        }
        for (name, v) in [
            ("bin_width", self.bin_width),
            ("lime_kernel_width", self.lime_kernel_width),
            ("tolerance_scale", self.tolerance_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(LabError::ParameterDomain(format!("{name} must be positive (got {v})")));
            }
        }
        Ok(())
    }

    /// Absolute agreement tolerance between an estimator and its closed form.
    pub fn abs_tolerance(&self, method: Method) -> f64 {
        let mc = |t: f64| t * self.tolerance_scale;
        match method {
            Method::Gradient => 1e-6,
            Method::Pattern | Method::Pd | Method::PatternAttribution => mc(0.01),
            Method::PixelFlip
            | Method::Mplot
            | Method::ShapMarginal
            | Method::Firm
            | Method::Lime => mc(0.02),
            Method::Pfi | Method::ShapConditional => mc(0.03),
            Method::ShapleyR2ThreeModel | Method::ShapleyR2SingleModel => 1e-10,
            Method::IntegratedGradients => 1e-10,
            Method::Counterfactual => 1e-4,
        }
    }
}

/// An empirical attribution with per-feature Monte-Carlo standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub attribution: Attribution,
    pub std_error: [f64; 2],
    /// Set when `3 * std_error` exceeds the method's absolute tolerance.
    pub warning: Option<String>,
}

impl Estimate {
    pub(crate) fn new(attribution: Attribution, std_error: [f64; 2], cfg: &EstimatorConfig) -> Self {
        let tol = cfg.abs_tolerance(attribution.method);
        let worst = std_error[0].max(std_error[1]);
        let warning = (3.0 * worst > tol).then(|| {
            format!(
                "standard error {worst:.3e} is too large for tolerance {tol:.3e}; increase the sample count"
            )
        });
        Self {
            attribution,
            std_error,
            warning,
        }
    }

    pub fn e1(&self) -> f64 {
        self.attribution.e1()
    }

    pub fn e2(&self) -> f64 {
        self.attribution.e2()
    }
}

/// A scalar Monte-Carlo estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Mean and standard error of the mean (two-pass).
pub(crate) fn mean_se(values: &[f64]) -> ScalarEstimate {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    ScalarEstimate {
        value: mean,
        std_error: (var / n as f64).sqrt(),
        samples: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_config_scales() {
        let q = EstimatorConfig::quick();
        let d = EstimatorConfig::default();
        assert_eq!(q.n_samples * 10, d.n_samples);
        assert!((q.abs_tolerance(Method::Pfi) - 0.03 * 10f64.sqrt()).abs() < 1e-15);
        assert_eq!(q.abs_tolerance(Method::Counterfactual), 1e-4);
    }

    #[test]
    fn config_validation() {
        assert!(EstimatorConfig::default().validate().is_ok());
        let bad = EstimatorConfig {
            bin_width: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = EstimatorConfig {
            lime_n: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mean_se_basic() {
        let s = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.value, 2.5);
        assert!((s.std_error - (5.0f64 / 12.0).sqrt()).abs() < 1e-12);
    }
}
