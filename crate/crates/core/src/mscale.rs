//! M-scale of a residual vector: the σ solving `mean ρ₀(rᵢ/σ) = δ`.

use crate::error::{check_finite, Error, Result};
use crate::rho::RhoFunction;

/// Settings for the M-scale root finder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MScaleConfig {
    pub delta: f64,
    /// Relative width of the final bracket on σ.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MScaleConfig {
    fn default() -> Self {
        Self {
            delta: 0.5,
            tol: 1e-15,
            max_iter: 400,
        }
    }
}

impl MScaleConfig {
    pub fn with_delta(delta: f64) -> Self {
        Self {
            delta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Argument(format!(
                "delta must lie in (0,1), got {}",
                self.delta
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Argument(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Argument("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Solution of the M-scale equation together with the final bracket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MScaleSolution {
    pub sigma: f64,
    /// `objective(lo) ≥ δ ≥ objective(hi)`; both zero on the exact-fit path.
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
}

/// `mean ρ₀(rᵢ/σ)`.
pub fn mscale_objective(residuals: &[f64], rho0: &RhoFunction, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Argument(format!(
            "sigma must be positive and finite, got {sigma}"
        )));
    }
    if residuals.is_empty() {
        return Err(Error::Argument("empty residual vector".into()));
    }
    Ok(objective(residuals, rho0, sigma))
}

#[inline]
fn objective(residuals: &[f64], rho0: &RhoFunction, sigma: f64) -> f64 {
    let inv = 1.0 / sigma;
    let sum: f64 = residuals
        .iter()
        .map(|&r| if r == 0.0 { 0.0 } else { rho0.rho(r * inv) })
        .sum();
    sum / residuals.len() as f64
}

/// Solves `mean ρ₀(rᵢ/σ) = δ` for `σ ≥ 0`.
///
/// Returns 0 when at least a fraction `1 − δ` of the residuals are exactly
/// zero, since the equation then has no positive root.
pub fn mscale(residuals: &[f64], rho0: &RhoFunction, cfg: &MScaleConfig) -> Result<f64> {
    mscale_solve(residuals, rho0, cfg).map(|s| s.sigma)
}

/// [`mscale`] returning the final bracket as well.
pub fn mscale_solve(
    residuals: &[f64],
    rho0: &RhoFunction,
    cfg: &MScaleConfig,
) -> Result<MScaleSolution> {
    cfg.validate()?;
    if residuals.is_empty() {
        return Err(Error::Argument("empty residual vector".into()));
    }
    for (i, &r) in residuals.iter().enumerate() {
        check_finite(r, &format!("residual {i}"))?;
    }
    let n = residuals.len() as f64;
    let delta = cfg.delta;
    let nonzero = residuals.iter().filter(|&&r| r != 0.0).count() as f64;
    if nonzero <= delta * n * (1.0 + 1e-12) {
        return Ok(MScaleSolution {
            sigma: 0.0,
            lo: 0.0,
            hi: 0.0,
            iterations: 0,
        });
    }

    // Work on residuals normalized by max|r| so the result is scale equivariant
    // to rounding, then map back.
    let scale = residuals.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    let abs: Vec<f64> = residuals.iter().map(|r| r.abs() / scale).collect();
    let k = rho0.k();
    let f = |s: f64| objective(&abs, rho0, s) - delta;

    let mut sorted = abs.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let med = sorted[sorted.len() / 2];
    let min_pos = sorted.iter().copied().find(|&v| v > 0.0).unwrap_or(1.0);
    let mut lo = if med > 0.0 { med / k } else { min_pos / k };
    let mut hi = 10.0 * k;
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    let mut iterations = 0;
    while f_lo < 0.0 {
        hi = lo;
        f_hi = f_lo;
        lo *= 0.5;
        f_lo = f(lo);
        iterations += 1;
        if iterations > cfg.max_iter || lo < f64::MIN_POSITIVE {
            return Err(Error::ScaleConvergence {
                iterations,
                lo: lo * scale,
                hi: hi * scale,
            });
        }
    }
    while f_hi > 0.0 {
        lo = hi;
        f_lo = f_hi;
        hi *= 2.0;
        f_hi = f(hi);
        iterations += 1;
        if iterations > cfg.max_iter {
            return Err(Error::ScaleConvergence {
                iterations,
                lo: lo * scale,
                hi: hi * scale,
            });
        }
    }

    // Illinois-modified regula falsi, bisection when the secant step stalls.
    let mut side = 0i8;
    let (mut flo_w, mut fhi_w) = (f_lo, f_hi);
    while hi - lo > cfg.tol * hi {
        iterations += 1;
        if iterations > cfg.max_iter {
            return Err(Error::ScaleConvergence {
                iterations,
                lo: lo * scale,
                hi: hi * scale,
            });
        }
        let mut mid = if flo_w != fhi_w {
            hi - fhi_w * (hi - lo) / (fhi_w - flo_w)
        } else {
            0.5 * (lo + hi)
        };
        if !(mid > lo && mid < hi) {
            mid = 0.5 * (lo + hi);
        }
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            lo = mid;
            hi = mid;
            f_lo = 0.0;
            f_hi = 0.0;
            break;
        }
        if fm > 0.0 {
            lo = mid;
            f_lo = fm;
            flo_w = fm;
            if side == 1 {
                fhi_w *= 0.5;
            }
            side = 1;
        } else {
            hi = mid;
            f_hi = fm;
            fhi_w = fm;
            if side == -1 {
                flo_w *= 0.5;
            }
            side = -1;
        }
    }
    let sigma = if f_lo.abs() <= f_hi.abs() { lo } else { hi };
    Ok(MScaleSolution {
        sigma: sigma * scale,
        lo: lo * scale,
        hi: hi * scale,
        iterations,
    })
}
