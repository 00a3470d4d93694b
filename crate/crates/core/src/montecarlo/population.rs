//! Error laws, designs and the population parameter `θ₀` of a scenario.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Uniform};
use serde::Serialize;

use super::quadrature::integrate_pieces;
use crate::error::{Error, Result};
use crate::inference::{ser_matrix, InferenceConstants};
use crate::rho::RhoFunction;

const QUAD_TOL: f64 = 1e-14;
/// Tolerance on `σ₀`, `α₀₀`, `α₀₁`.
pub const ROOT_TOL: f64 = 1e-10;
const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Distribution of the regression error `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum ErrorLaw {
    Normal {
        mean: f64,
        sd: f64,
    },
    /// `shift + Exp(rate)`.
    ShiftedExponential {
        rate: f64,
        shift: f64,
    },
    /// `(1 − ε) N(mean, sd) + ε N(outlier_mean, outlier_sd)`; bimodal in general.
    ContaminatedNormal {
        mean: f64,
        sd: f64,
        epsilon: f64,
        outlier_mean: f64,
        outlier_sd: f64,
    },
}

fn normal_pdf(u: f64, mean: f64, sd: f64) -> f64 {
    let z = (u - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

impl ErrorLaw {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(Error::Config {
                key: key.into(),
                message: message.into(),
            })
        };
        match *self {
            ErrorLaw::Normal { mean, sd } => {
                if !(sd > 0.0 && sd.is_finite()) {
                    return bad("error_scale", "must be positive");
                }
                if !mean.is_finite() {
                    return bad("error_location", "must be finite");
                }
            }
            ErrorLaw::ShiftedExponential { rate, shift } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return bad("error_rate", "must be positive");
                }
                if !shift.is_finite() {
                    return bad("error_shift", "must be finite");
                }
            }
            ErrorLaw::ContaminatedNormal {
                mean,
                sd,
                epsilon,
                outlier_mean,
                outlier_sd,
            } => {
                ErrorLaw::Normal { mean, sd }.validate()?;
                if !(0.0..1.0).contains(&epsilon) {
                    return bad("mixture_fraction", "must lie in [0,1)");
                }
                if !(outlier_sd > 0.0 && outlier_sd.is_finite()) {
                    return bad("outlier_scale", "must be positive");
                }
                if !outlier_mean.is_finite() {
                    return bad("outlier_location", "must be finite");
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ErrorLaw::Normal { mean, sd } => Normal::new(mean, sd).expect("validated").sample(rng),
            ErrorLaw::ShiftedExponential { rate, shift } => {
                shift + Exp::new(rate).expect("validated").sample(rng)
            }
            ErrorLaw::ContaminatedNormal {
                mean,
                sd,
                epsilon,
                outlier_mean,
                outlier_sd,
            } => {
                let pick: f64 = rng.random();
                if pick < epsilon {
                    Normal::new(outlier_mean, outlier_sd)
                        .expect("validated")
                        .sample(rng)
                } else {
                    Normal::new(mean, sd).expect("validated").sample(rng)
                }
            }
        }
    }

    pub fn pdf(&self, u: f64) -> f64 {
        match *self {
            ErrorLaw::Normal { mean, sd } => normal_pdf(u, mean, sd),
            ErrorLaw::ShiftedExponential { rate, shift } => {
                if u < shift {
                    0.0
                } else {
                    rate * (-rate * (u - shift)).exp()
                }
            }
            ErrorLaw::ContaminatedNormal {
                mean,
                sd,
                epsilon,
                outlier_mean,
                outlier_sd,
            } => {
                (1.0 - epsilon) * normal_pdf(u, mean, sd)
                    + epsilon * normal_pdf(u, outlier_mean, outlier_sd)
            }
        }
    }

    /// Interval carrying all but a negligible amount of mass, plus kinks of the density.
    fn support(&self) -> (f64, f64, Vec<f64>) {
        const W: f64 = 14.0;
        match *self {
            ErrorLaw::Normal { mean, sd } => (mean - W * sd, mean + W * sd, vec![]),
            ErrorLaw::ShiftedExponential { rate, shift } => (shift, shift + 50.0 / rate, vec![]),
            ErrorLaw::ContaminatedNormal {
                mean,
                sd,
                outlier_mean,
                outlier_sd,
                ..
            } => {
                let lo = (mean - W * sd).min(outlier_mean - W * outlier_sd);
                let hi = (mean + W * sd).max(outlier_mean + W * outlier_sd);
                (lo, hi, vec![mean, outlier_mean])
            }
        }
    }

    /// `E h(u)`; `breaks` are points where `h` may be non-smooth.
    pub fn expect<F: Fn(f64) -> f64>(&self, h: F, breaks: &[f64]) -> f64 {
        let (lo, hi, mut pts) = self.support();
        pts.extend_from_slice(breaks);
        integrate_pieces(|u| h(u) * self.pdf(u), lo, hi, &pts, QUAD_TOL)
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ErrorLaw::Normal { mean, .. } => mean,
            ErrorLaw::ShiftedExponential { rate, shift } => shift + 1.0 / rate,
            ErrorLaw::ContaminatedNormal {
                mean,
                epsilon,
                outlier_mean,
                ..
            } => (1.0 - epsilon) * mean + epsilon * outlier_mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            ErrorLaw::Normal { sd, .. } => sd * sd,
            ErrorLaw::ShiftedExponential { rate, .. } => 1.0 / (rate * rate),
            ErrorLaw::ContaminatedNormal {
                mean,
                sd,
                epsilon,
                outlier_mean,
                outlier_sd,
            } => {
                let m = self.mean();
                (1.0 - epsilon) * (sd * sd + (mean - m).powi(2))
                    + epsilon * (outlier_sd * outlier_sd + (outlier_mean - m).powi(2))
            }
        }
    }

    /// Centre of symmetry, if the law is symmetric.
    pub fn symmetry_centre(&self) -> Option<f64> {
        match *self {
            ErrorLaw::Normal { mean, .. } => Some(mean),
            ErrorLaw::ShiftedExponential { .. } => None,
            ErrorLaw::ContaminatedNormal { mean, epsilon, .. } if epsilon == 0.0 => Some(mean),
            ErrorLaw::ContaminatedNormal { .. } => None,
        }
    }

    /// Log-concave laws; the mixture is reported as violating the hypotheses.
    pub fn is_strongly_unimodal(&self) -> bool {
        !matches!(self, ErrorLaw::ContaminatedNormal { epsilon, .. } if *epsilon > 0.0)
    }

    /// Location and spread used to start the population searches.
    fn guess(&self) -> (f64, f64) {
        match *self {
            ErrorLaw::Normal { mean, sd } => (mean, sd),
            ErrorLaw::ShiftedExponential { rate, shift } => {
                (shift + std::f64::consts::LN_2 / rate, 1.0 / rate)
            }
            ErrorLaw::ContaminatedNormal { mean, sd, .. } => (mean, sd),
        }
    }
}

/// Distribution of the covariates.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "design", rename_all = "kebab-case")]
pub enum Design {
    Location,
    /// `x ~ N(0, I_p)`.
    StandardNormal {
        p: usize,
    },
    /// `x ~ U(low, high)`, scalar.
    Uniform {
        low: f64,
        high: f64,
    },
}

impl Design {
    pub fn p(&self) -> usize {
        match self {
            Design::Location => 0,
            Design::StandardNormal { p } => *p,
            Design::Uniform { .. } => 1,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match *self {
            Design::Location => vec![],
            Design::StandardNormal { p } => (0..p)
                .map(|_| rand_distr::StandardNormal.sample(rng))
                .collect(),
            Design::Uniform { low, high } => {
                vec![Uniform::new(low, high).expect("validated").sample(rng)]
            }
        }
    }

    /// `b₀ = E ġ` and `A₀ = Cov ġ` for gradient map `grad`.
    pub fn gradient_moments<G>(&self, q: usize, grad: G) -> (DVector<f64>, DMatrix<f64>)
    where
        G: Fn(&[f64]) -> DVector<f64>,
    {
        match *self {
            Design::Location => (DVector::zeros(0), DMatrix::zeros(0, 0)),
            Design::StandardNormal { p } => (DVector::zeros(p), DMatrix::identity(p, p)),
            Design::Uniform { low, high } => {
                let w = 1.0 / (high - low);
                let e = |h: &dyn Fn(&DVector<f64>) -> f64| {
                    integrate_pieces(|x| h(&grad(&[x])) * w, low, high, &[], QUAD_TOL)
                };
                let b0 = DVector::from_fn(q, |i, _| e(&|g| g[i]));
                let a0 = DMatrix::from_fn(q, q, |i, j| e(&|g| (g[i] - b0[i]) * (g[j] - b0[j])));
                (b0, a0)
            }
        }
    }
}

/// Population quantities of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Population {
    pub sigma0: f64,
    pub alpha00: f64,
    pub alpha01: f64,
    pub constants: InferenceConstants,
    /// `E ψ₁²(t_MM)`
    pub psi1_sq: f64,
    /// Asymptotic covariance of `√n(ξ̂_MM − ξ₀)`.
    #[serde(serialize_with = "ser_matrix", rename = "V")]
    pub v: DMatrix<f64>,
    /// `σ₀² E ψ₁² / (E ψ₁')² C₀⁻¹`, exact for symmetric laws.
    #[serde(serialize_with = "ser_matrix", rename = "V_sym")]
    pub v_sym: DMatrix<f64>,
    /// Least-squares over MM asymptotic variance, symmetric laws only.
    pub ls_efficiency: Option<f64>,
}

/// Kinks of `ρ((u − t)/s)` as a function of `u`.
fn kinks(t: f64, s: f64, k: f64) -> [f64; 3] {
    [t - k * s, t, t + k * s]
}

/// `E ρ₀((u − t)/s)`.
fn mean_rho(law: &ErrorLaw, rho: &RhoFunction, t: f64, s: f64) -> f64 {
    law.expect(|u| rho.rho((u - t) / s), &kinks(t, s, rho.k()))
}

fn mean_psi(law: &ErrorLaw, rho: &RhoFunction, t: f64, s: f64) -> f64 {
    law.expect(|u| rho.psi((u - t) / s), &kinks(t, s, rho.k()))
}

/// Population M-scale of `u − t`: the `s` with `E ρ₀((u − t)/s) = δ`.
pub fn population_scale(law: &ErrorLaw, rho0: &RhoFunction, delta: f64, t: f64) -> Result<f64> {
    let (_, spread) = law.guess();
    let f = |s: f64| mean_rho(law, rho0, t, s) - delta;
    let (mut lo, mut hi) = (spread, spread);
    let mut guard = 0;
    while f(lo) <= 0.0 {
        lo *= 0.5;
        guard += 1;
        if guard > 200 {
            return Err(Error::Fit("population scale bracket failed".into()));
        }
    }
    while f(hi) >= 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::Fit("population scale bracket failed".into()));
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-3 * ROOT_TOL * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Root of a function decreasing through zero near `t`, by bisection.
fn bisect_decreasing<F: Fn(f64) -> f64>(g: F, t: f64, width: f64) -> Result<f64> {
    let mut w = width;
    let (mut lo, mut hi);
    loop {
        lo = t - w;
        hi = t + w;
        if g(lo) >= 0.0 && g(hi) <= 0.0 {
            break;
        }
        w *= 2.0;
        if w > 1e3 * width.max(1.0) {
            return Err(Error::Fit("population location bracket failed".into()));
        }
    }
    for _ in 0..200 {
        if hi - lo <= ROOT_TOL * 1e-2 * (1.0 + t.abs()) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let v = g(mid);
        if v == 0.0 {
            return Ok(mid);
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `α₀₀ = argmin_t S(u − t)` and `σ₀ = S(u − α₀₀)`.
pub fn population_s(law: &ErrorLaw, rho0: &RhoFunction, delta: f64) -> Result<(f64, f64)> {
    let (centre, spread) = law.guess();
    let scale_at = |t: f64| population_scale(law, rho0, delta, t).unwrap_or(f64::INFINITY);
    let t0 = golden_min(
        scale_at,
        centre - 2.0 * spread,
        centre + 2.0 * spread,
        1e-4 * spread,
    );
    // first-order condition: E ψ₀((u − t)/S(t)) = 0
    let g = |t: f64| mean_psi(law, rho0, t, scale_at(t));
    let alpha = bisect_decreasing(g, t0, 1e-3 * spread)?;
    Ok((alpha, population_scale(law, rho0, delta, alpha)?))
}

/// `α₀₁ = argmin_t E ρ₁((u − t)/σ₀)`, searched near `start`.
pub fn population_mm(law: &ErrorLaw, rho1: &RhoFunction, sigma0: f64, start: f64) -> Result<f64> {
    let obj = |t: f64| mean_rho(law, rho1, t, sigma0);
    let t0 = golden_min(
        obj,
        start - 2.0 * sigma0,
        start + 2.0 * sigma0,
        1e-4 * sigma0,
    );
    bisect_decreasing(|t| mean_psi(law, rho1, t, sigma0), t0, 1e-3 * sigma0)
}

impl Population {
    /// Solves the population equations and integrates the constants.
    pub fn compute<G>(
        law: &ErrorLaw,
        design: &Design,
        q: usize,
        grad: G,
        rho0: &RhoFunction,
        rho1: &RhoFunction,
        delta: f64,
    ) -> Result<Self>
    where
        G: Fn(&[f64]) -> DVector<f64>,
    {
        let (alpha00, sigma0) = population_s(law, rho0, delta)?;
        let alpha01 = population_mm(law, rho1, sigma0, alpha00)?;
        let ks = kinks(alpha00, sigma0, rho0.k());
        let km = kinks(alpha01, sigma0, rho1.k());
        let mut both = ks.to_vec();
        both.extend_from_slice(&km);
        let ts = |u: f64| (u - alpha00) / sigma0;
        let tm = |u: f64| (u - alpha01) / sigma0;

        let a00 = law.expect(|u| rho0.psi_prime(ts(u)), &ks);
        let e00 = law.expect(|u| ts(u) * rho0.psi_prime(ts(u)), &ks);
        let d0 = law.expect(|u| ts(u) * rho0.psi(ts(u)), &ks);
        let a01 = law.expect(|u| rho1.psi_prime(tm(u)), &km);
        let e01 = law.expect(|u| tm(u) * rho1.psi_prime(tm(u)), &km);
        let psi1_sq = law.expect(|u| rho1.psi(tm(u)).powi(2), &km);
        let rho_var = law.expect(|u| (rho0.rho(ts(u)) - delta).powi(2), &ks);
        let cross = law.expect(|u| rho1.psi(tm(u)) * (rho0.rho(ts(u)) - delta), &both);

        let (b0, a0) = design.gradient_moments(q, grad);
        let constants =
            InferenceConstants::new(a00, a01, e00, e01, d0, b0, a0, sigma0, alpha00, alpha01)?;
        constants.check_nondegenerate()?;
        let c0_inv = constants.c0_inverse()?;
        let s2 = sigma0 * sigma0;
        let v_sym = &c0_inv * (s2 * psi1_sq / (a01 * a01));
        let b = e01 / (a01 * d0);
        let extra = s2 * (b * b * rho_var - 2.0 * e01 / (a01 * a01 * d0) * cross);
        let mut v = v_sym.clone();
        v[(q, q)] += extra;
        let ls_efficiency = law
            .symmetry_centre()
            .map(|_| law.variance() * a01 * a01 / (s2 * psi1_sq));
        Ok(Self {
            sigma0,
            alpha00,
            alpha01,
            constants,
            psi1_sq,
            v,
            v_sym,
            ls_efficiency,
        })
    }
}
