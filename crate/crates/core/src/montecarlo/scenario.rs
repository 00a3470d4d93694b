//! Simulation scenario: data-generating process, fit settings and claim thresholds.

use serde::{Deserialize, Serialize};

use super::population::{Design, ErrorLaw};
use crate::error::{Error, Result};
use crate::estimators::FitConfig;
use crate::model::{exp_model, linear_model, location_model, RegressionModel};
use crate::rho::{RhoFunction, DEFAULT_K0, DEFAULT_K1};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Location,
    Linear,
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    Normal,
    ShiftedExponential,
    ContaminatedNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Claim {
    Consistency,
    Expansion,
    Normality,
    Contamination,
}

impl Claim {
    pub fn name(self) -> &'static str {
        match self {
            Claim::Consistency => "consistency",
            Claim::Expansion => "expansion",
            Claim::Normality => "normality",
            Claim::Contamination => "contamination",
        }
    }
}

fn d_k0() -> f64 {
    DEFAULT_K0
}
fn d_k1() -> f64 {
    DEFAULT_K1
}
fn d_half() -> f64 {
    0.5
}
fn d_one() -> f64 {
    1.0
}
fn d_x_high() -> f64 {
    2.0
}
fn d_subsamples() -> usize {
    500
}
fn d_refine() -> usize {
    2
}
fn d_best() -> usize {
    5
}
fn d_irwls_tol() -> f64 {
    1e-10
}
fn d_irwls_iter() -> usize {
    200
}
fn d_mixture() -> f64 {
    0.1
}
fn d_outlier_loc() -> f64 {
    10.0
}
fn d_ratio_min() -> f64 {
    0.35
}
fn d_ratio_max() -> f64 {
    0.72
}
fn d_failures() -> f64 {
    0.01
}
fn d_expansion() -> f64 {
    0.2
}
fn d_var_tol() -> f64 {
    0.15
}
fn d_qq() -> f64 {
    0.99
}
fn d_eff_tol() -> f64 {
    0.05
}
fn d_fractions() -> Vec<f64> {
    vec![0.1, 0.2, 0.3, 0.4]
}
fn d_magnitudes() -> Vec<f64> {
    vec![1e2, 1e4, 1e6]
}
fn d_se_multiple() -> f64 {
    100.0
}
fn d_growth() -> f64 {
    1.1
}
fn d_growth_from() -> f64 {
    1e4
}

/// A scenario, read from a flat key-value file.
///
/// Every threshold a claim is judged against is a field here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimScenario {
    pub name: String,
    pub claims: Vec<Claim>,

    pub model: ModelKind,
    /// Number of covariates of the linear model.
    #[serde(default)]
    pub p: usize,
    /// True slope vector `β₀`.
    #[serde(default)]
    pub beta0: Vec<f64>,
    /// Covariate range of the exponential model.
    #[serde(default)]
    pub x_low: f64,
    #[serde(default = "d_x_high")]
    pub x_high: f64,

    pub error: ErrorKind,
    #[serde(default)]
    pub error_location: f64,
    #[serde(default = "d_one")]
    pub error_scale: f64,
    #[serde(default = "d_one")]
    pub error_rate: f64,
    #[serde(default)]
    pub error_shift: f64,
    #[serde(default = "d_mixture")]
    pub mixture_fraction: f64,
    #[serde(default = "d_outlier_loc")]
    pub outlier_location: f64,
    #[serde(default = "d_one")]
    pub outlier_scale: f64,

    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub seed: u64,

    #[serde(default = "d_k0")]
    pub k0: f64,
    #[serde(default = "d_k1")]
    pub k1: f64,
    #[serde(default = "d_half")]
    pub delta: f64,
    #[serde(default = "d_subsamples")]
    pub n_subsamples: usize,
    #[serde(default = "d_refine")]
    pub refine_steps: usize,
    #[serde(default = "d_best")]
    pub n_best: usize,
    #[serde(default = "d_irwls_tol")]
    pub irwls_tol: f64,
    #[serde(default = "d_irwls_iter")]
    pub irwls_max_iter: usize,

    /// Fraction of failed fits tolerated per sample size.
    #[serde(default = "d_failures")]
    pub max_failure_fraction: f64,
    /// Accepted range for the ratio of median errors per quadrupling of `n`.
    #[serde(default = "d_ratio_min")]
    pub consistency_ratio_min: f64,
    #[serde(default = "d_ratio_max")]
    pub consistency_ratio_max: f64,
    /// Upper bound on median remainder over median leading term at the largest `n`.
    #[serde(default = "d_expansion")]
    pub expansion_ratio_max: f64,
    /// Relative tolerance on diagonal variances.
    #[serde(default = "d_var_tol")]
    pub variance_rel_tol: f64,
    /// Minimum normal QQ correlation of each standardized coordinate.
    #[serde(default = "d_qq")]
    pub qq_correlation_min: f64,
    /// Expected MM over LS efficiency; omitted to skip the check.
    #[serde(default)]
    pub efficiency_target: Option<f64>,
    #[serde(default = "d_eff_tol")]
    pub efficiency_tol: f64,

    #[serde(default = "d_fractions")]
    pub contamination_fractions: Vec<f64>,
    #[serde(default = "d_magnitudes")]
    pub contamination_magnitudes: Vec<f64>,
    /// If set, contaminated rows also get this value in every covariate.
    #[serde(default)]
    pub contamination_leverage: Option<f64>,
    /// Deviation bound in units of the clean-data standard error.
    #[serde(default = "d_se_multiple")]
    pub deviation_se_multiple: f64,
    /// Allowed deviation growth between consecutive magnitudes from `magnitude_growth_from` on.
    #[serde(default = "d_growth")]
    pub magnitude_growth_max: f64,
    #[serde(default = "d_growth_from")]
    pub magnitude_growth_from: f64,
}

fn cfg_err<T>(key: &str, message: impl Into<String>) -> Result<T> {
    Err(Error::Config {
        key: key.into(),
        message: message.into(),
    })
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        if self.claims.is_empty() {
            return cfg_err("claims", "at least one claim is required");
        }
        if self.replications == 0 {
            return cfg_err("replications", "must be at least 1");
        }
        if self.sample_sizes.is_empty() {
            return cfg_err("sample_sizes", "must not be empty");
        }
        if self.sample_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return cfg_err("sample_sizes", "must be strictly increasing");
        }
        let q = self.q();
        if self.sample_sizes[0] < q + 3 {
            return cfg_err(
                "sample_sizes",
                format!("need at least {} observations", q + 3),
            );
        }
        if self.claims.contains(&Claim::Consistency) && self.sample_sizes.len() < 3 {
            return cfg_err("sample_sizes", "consistency needs at least 3 sample sizes");
        }
        match self.model {
            ModelKind::Location => {
                if self.p != 0 || !self.beta0.is_empty() {
                    return cfg_err("beta0", "location model has no slopes");
                }
            }
            ModelKind::Linear => {
                if self.p == 0 {
                    return cfg_err("p", "must be positive for the linear model");
                }
                if self.beta0.len() != self.p {
                    return cfg_err("beta0", format!("expected {} entries", self.p));
                }
            }
            ModelKind::Exp => {
                if self.beta0.len() != 2 {
                    return cfg_err("beta0", "expected 2 entries");
                }
                if !(self.x_low < self.x_high)
                    || !self.x_low.is_finite()
                    || !self.x_high.is_finite()
                {
                    return cfg_err("x_high", "must exceed x_low");
                }
                let model = exp_model();
                let bounds = model.bounds().expect("exp model has bounds");
                for (i, (b, (lo, hi))) in self.beta0.iter().zip(bounds).enumerate() {
                    if !(b > lo && b < hi) {
                        return cfg_err(
                            "beta0",
                            format!("entry {i} outside the search box [{lo}, {hi}]"),
                        );
                    }
                }
            }
        }
        if self.beta0.iter().any(|b| !b.is_finite()) {
            return cfg_err("beta0", "must be finite");
        }
        self.error_law().validate()?;
        self.fit_config()?.validate()?;
        for (key, v) in [
            ("max_failure_fraction", self.max_failure_fraction),
            ("consistency_ratio_min", self.consistency_ratio_min),
            ("consistency_ratio_max", self.consistency_ratio_max),
            ("expansion_ratio_max", self.expansion_ratio_max),
            ("variance_rel_tol", self.variance_rel_tol),
            ("qq_correlation_min", self.qq_correlation_min),
            ("efficiency_tol", self.efficiency_tol),
            ("deviation_se_multiple", self.deviation_se_multiple),
            ("magnitude_growth_max", self.magnitude_growth_max),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return cfg_err(key, "must be a finite non-negative number");
            }
        }
        if self.consistency_ratio_min > self.consistency_ratio_max {
            return cfg_err("consistency_ratio_min", "exceeds consistency_ratio_max");
        }
        if self.claims.contains(&Claim::Contamination) {
            let limit = self.delta.min(1.0 - self.delta);
            if self.contamination_fractions.is_empty() {
                return cfg_err("contamination_fractions", "must not be empty");
            }
            if self
                .contamination_fractions
                .iter()
                .any(|e| !(*e >= 0.0 && *e < limit))
            {
                return cfg_err(
                    "contamination_fractions",
                    format!("each fraction must lie in [0, {limit})"),
                );
            }
            if self.contamination_magnitudes.is_empty()
                || self
                    .contamination_magnitudes
                    .iter()
                    .any(|m| !(m.is_finite() && *m > 0.0))
            {
                return cfg_err("contamination_magnitudes", "must be positive and finite");
            }
            if self
                .contamination_magnitudes
                .windows(2)
                .any(|w| w[0] >= w[1])
            {
                return cfg_err("contamination_magnitudes", "must be strictly increasing");
            }
            if self.contamination_leverage.is_some_and(|v| !v.is_finite()) {
                return cfg_err("contamination_leverage", "must be finite");
            }
        }
        Ok(())
    }

    pub fn q(&self) -> usize {
        match self.model {
            ModelKind::Location => 0,
            ModelKind::Linear => self.p,
            ModelKind::Exp => 2,
        }
    }

    pub fn error_law(&self) -> ErrorLaw {
        match self.error {
            ErrorKind::Normal => ErrorLaw::Normal {
                mean: self.error_location,
                sd: self.error_scale,
            },
            ErrorKind::ShiftedExponential => ErrorLaw::ShiftedExponential {
                rate: self.error_rate,
                shift: self.error_shift,
            },
            ErrorKind::ContaminatedNormal => ErrorLaw::ContaminatedNormal {
                mean: self.error_location,
                sd: self.error_scale,
                epsilon: self.mixture_fraction,
                outlier_mean: self.outlier_location,
                outlier_sd: self.outlier_scale,
            },
        }
    }

    pub fn design(&self) -> Design {
        match self.model {
            ModelKind::Location => Design::Location,
            ModelKind::Linear => Design::StandardNormal { p: self.p },
            ModelKind::Exp => Design::Uniform {
                low: self.x_low,
                high: self.x_high,
            },
        }
    }

    pub fn regression_model(&self) -> Result<RegressionModel> {
        match self.model {
            ModelKind::Location => Ok(location_model()),
            ModelKind::Linear => linear_model(self.p),
            ModelKind::Exp => Ok(exp_model()),
        }
    }

    pub fn fit_config(&self) -> Result<FitConfig> {
        let rho = |key: &str, k: f64| {
            RhoFunction::bisquare(k).map_err(|e| Error::Config {
                key: key.into(),
                message: e.to_string(),
            })
        };
        Ok(FitConfig {
            delta: self.delta,
            rho0: rho("k0", self.k0)?,
            rho1: rho("k1", self.k1)?,
            n_subsamples: self.n_subsamples,
            refine_steps: self.refine_steps,
            n_best: self.n_best,
            irwls_tol: self.irwls_tol,
            irwls_max_iter: self.irwls_max_iter,
            seed: self.seed,
        })
    }
}
