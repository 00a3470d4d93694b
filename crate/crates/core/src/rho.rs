//! Bounded ρ-functions.
//!
//! A bounded ρ-function is even, nondecreasing in `|t|`, satisfies `ρ(0) = 0`
//! and reaches 1 exactly at `|t| = k`. The bisquare family is built in;
//! user supplied `(ρ, ψ, ψ')` triples are accepted once they pass
//! [`verify_r1`].

use std::fmt;
use std::sync::Arc;

use crate::error::{check_finite, Error, Result};

/// Tuning constant of ρ₀ paired with `δ = 0.5`: solves `E ρ_k(Z) = 0.5` for `Z ~ N(0,1)`.
pub const DEFAULT_K0: f64 = 1.547_645;

/// Tuning constant of ρ₁ giving 95% Gaussian efficiency.
pub const DEFAULT_K1: f64 = 4.685;

type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;

/// The family a [`RhoFunction`] belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoKind {
    Bisquare,
    Custom,
}

#[derive(Clone)]
enum Family {
    Bisquare,
    Custom {
        name: String,
        rho: Arc<ScalarFn>,
        psi: Arc<ScalarFn>,
        psi_prime: Arc<ScalarFn>,
    },
}

/// A bounded, twice continuously differentiable ρ-function with tuning constant `k`.
#[derive(Clone)]
pub struct RhoFunction {
    family: Family,
    k: f64,
}

impl fmt::Debug for RhoFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            Family::Bisquare => write!(f, "Bisquare(k={})", self.k),
            Family::Custom { name, .. } => write!(f, "Custom({name}, k={})", self.k),
        }
    }
}

impl PartialEq for RhoFunction {
    fn eq(&self, other: &Self) -> bool {
        match (&self.family, &other.family) {
            (Family::Bisquare, Family::Bisquare) => self.k == other.k,
            (Family::Custom { rho: a, .. }, Family::Custom { rho: b, .. }) => {
                Arc::ptr_eq(a, b) && self.k == other.k
            }
            _ => false,
        }
    }
}

impl RhoFunction {
    /// Tukey bisquare: `ρ(t) = 1 − (1 − (t/k)²)³` for `|t| ≤ k`, 1 otherwise.
    pub fn bisquare(k: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::Argument(format!(
                "tuning constant must be positive, got {k}"
            )));
        }
        Ok(Self {
            family: Family::Bisquare,
            k,
        })
    }

    /// Builds a ρ-function from user code. `k` is the smallest `|t|` with `ρ(t) = 1`.
    ///
    /// The triple is checked with [`verify_r1`] on a 1001-point grid; a
    /// function failing the check is rejected.
    pub fn custom<R, P, Q>(name: &str, k: f64, rho: R, psi: P, psi_prime: Q) -> Result<Self>
    where
        R: Fn(f64) -> f64 + Send + Sync + 'static,
        P: Fn(f64) -> f64 + Send + Sync + 'static,
        Q: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::Argument(format!(
                "tuning constant must be positive, got {k}"
            )));
        }
        let f = Self {
            family: Family::Custom {
                name: name.to_string(),
                rho: Arc::new(rho),
                psi: Arc::new(psi),
                psi_prime: Arc::new(psi_prime),
            },
            k,
        };
        if !verify_r1(&f, 1001) {
            return Err(Error::Argument(format!(
                "ρ-function `{name}` fails the log-concavity / boundedness check"
            )));
        }
        Ok(f)
    }

    /// Builds a family by name, as used by configuration files.
    pub fn from_name(family: &str, k: f64) -> Result<Self> {
        match family.to_ascii_lowercase().as_str() {
            "bisquare" | "tukey" => Self::bisquare(k),
            other => Err(Error::Argument(format!("unknown ρ family `{other}`"))),
        }
    }

    pub fn kind(&self) -> RhoKind {
        match self.family {
            Family::Bisquare => RhoKind::Bisquare,
            Family::Custom { .. } => RhoKind::Custom,
        }
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    #[inline]
    pub fn rho(&self, t: f64) -> f64 {
        match &self.family {
            Family::Bisquare => {
                let u = t / self.k;
                let u2 = u * u;
                if u2 >= 1.0 {
                    1.0
                } else {
                    let v = 1.0 - u2;
                    1.0 - v * v * v
                }
            }
            Family::Custom { rho, .. } => rho(t),
        }
    }

    #[inline]
    pub fn psi(&self, t: f64) -> f64 {
        match &self.family {
            Family::Bisquare => {
                let u = t / self.k;
                let u2 = u * u;
                if u2 >= 1.0 {
                    0.0
                } else {
                    let v = 1.0 - u2;
                    6.0 * t / (self.k * self.k) * v * v
                }
            }
            Family::Custom { psi, .. } => psi(t),
        }
    }

    #[inline]
    pub fn psi_prime(&self, t: f64) -> f64 {
        match &self.family {
            Family::Bisquare => {
                let u = t / self.k;
                let u2 = u * u;
                if u2 >= 1.0 {
                    0.0
                } else {
                    6.0 / (self.k * self.k) * (1.0 - u2) * (1.0 - 5.0 * u2)
                }
            }
            Family::Custom { psi_prime, .. } => psi_prime(t),
        }
    }

    /// IRWLS weight `ψ(t)/t`, with the limit `ψ'(0)` at the origin.
    #[inline]
    pub fn weight(&self, t: f64) -> f64 {
        match &self.family {
            Family::Bisquare => {
                let u = t / self.k;
                let u2 = u * u;
                if u2 >= 1.0 {
                    0.0
                } else {
                    let v = 1.0 - u2;
                    6.0 / (self.k * self.k) * v * v
                }
            }
            Family::Custom { psi, psi_prime, .. } => {
                if t == 0.0 {
                    psi_prime(0.0)
                } else {
                    psi(t) / t
                }
            }
        }
    }

    /// True when `self(t) ≤ other(t)` on a grid covering `[0, 2·max(k)]`.
    pub fn is_majorized_by(&self, other: &RhoFunction) -> bool {
        let upper = 2.0 * self.k.max(other.k);
        let n = 2000;
        (0..=n).all(|i| {
            let t = upper * i as f64 / n as f64;
            self.rho(t) <= other.rho(t) + 1e-14
        })
    }
}

/// `ρ(t)`, rejecting non-finite input.
pub fn rho_eval(f: &RhoFunction, t: f64) -> Result<f64> {
    check_finite(t, "argument of ρ")?;
    Ok(f.rho(t))
}

/// `ψ(t) = ρ'(t)`, rejecting non-finite input.
pub fn psi_eval(f: &RhoFunction, t: f64) -> Result<f64> {
    check_finite(t, "argument of ψ")?;
    Ok(f.psi(t))
}

/// `ψ'(t) = ρ''(t)`, rejecting non-finite input.
pub fn psi_prime_eval(f: &RhoFunction, t: f64) -> Result<f64> {
    check_finite(t, "argument of ψ'")?;
    Ok(f.psi_prime(t))
}

/// `w(t) = ψ(t)/t`, rejecting non-finite input.
pub fn weight_eval(f: &RhoFunction, t: f64) -> Result<f64> {
    check_finite(t, "argument of w")?;
    Ok(f.weight(t))
}

/// Outcome of a numerical bounded-ρ / log-concavity check.
#[derive(Debug, Clone, PartialEq)]
pub struct R1Report {
    /// Largest second difference of `log(1 − ρ)` over the interior grid.
    pub max_second_difference: f64,
    /// Largest `|ρ(t) − 1|` over the sampled `|t| ≥ k`.
    pub max_outside_deviation: f64,
    /// `ρ(0) = 0`, `0 ≤ ρ ≤ 1`, evenness and monotonicity in `|t|` on the grid.
    pub shape_ok: bool,
    pub holds: bool,
}

const R1_CONCAVITY_TOL: f64 = 1e-12;
const R1_OUTSIDE_TOL: f64 = 1e-15;

/// Numerical check that `log(1 − ρ)` is concave on `(−k, k)` and `ρ = 1` off it.
pub fn verify_r1(f: &RhoFunction, grid_size: usize) -> bool {
    verify_r1_with(|t| f.rho(t), f.k(), grid_size).holds
}

/// [`verify_r1`] for an arbitrary callable (tables, closures under test).
pub fn verify_r1_with<F: Fn(f64) -> f64>(rho: F, k: f64, grid_size: usize) -> R1Report {
    let grid_size = grid_size.max(3);
    let step = 2.0 * k / (grid_size + 1) as f64;
    let interior: Vec<f64> = (1..=grid_size).map(|i| -k + step * i as f64).collect();
    let values: Vec<f64> = interior.iter().map(|&t| rho(t)).collect();

    let mut shape_ok = rho(0.0) == 0.0;
    for (&t, &v) in interior.iter().zip(&values) {
        if !(0.0..=1.0).contains(&v) || v >= 1.0 || (rho(-t) - v).abs() > 8.0 * f64::EPSILON {
            shape_ok = false;
        }
    }
    // nondecreasing in |t| on the right half
    let right: Vec<f64> = interior
        .iter()
        .filter(|t| **t >= 0.0)
        .map(|&t| rho(t))
        .collect();
    if right.windows(2).any(|w| w[1] < w[0]) {
        shape_ok = false;
    }

    let logs: Vec<f64> = values.iter().map(|v| (1.0 - v).ln()).collect();
    let mut max_second_difference = f64::NEG_INFINITY;
    for (w, v) in logs.windows(3).zip(values.windows(3)) {
        // rounding of ρ near 1 is amplified by 1/(1 − ρ) in the log
        let noise: f64 = v.iter().map(|v| 4.0 * f64::EPSILON / (1.0 - v)).sum();
        let d2 = w[0] - 2.0 * w[1] + w[2] - noise;
        let d2 = if d2.is_nan() { f64::INFINITY } else { d2 };
        max_second_difference = max_second_difference.max(d2);
    }

    let mut max_outside_deviation: f64 = 0.0;
    for i in 0..=grid_size {
        let t = k + 2.0 * k * i as f64 / grid_size as f64;
        for s in [t, -t] {
            let d = (rho(s) - 1.0).abs();
            max_outside_deviation =
                max_outside_deviation.max(if d.is_nan() { f64::INFINITY } else { d });
        }
    }

    let holds = shape_ok
        && max_second_difference <= R1_CONCAVITY_TOL
        && max_outside_deviation <= R1_OUTSIDE_TOL;
    R1Report {
        max_second_difference,
        max_outside_deviation,
        shape_ok,
        holds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
        (f(t + h) - f(t - h)) / (2.0 * h)
    }

    #[test]
    fn bisquare_values() {
        let f = RhoFunction::bisquare(1.547).unwrap();
        assert_eq!(rho_eval(&f, 0.0).unwrap(), 0.0);
        assert_eq!(rho_eval(&f, 1.547).unwrap(), 1.0);
        assert!((rho_eval(&f, 0.7735).unwrap() - 0.578125).abs() < 1e-15);
        assert_eq!(rho_eval(&f, -10.0).unwrap(), 1.0);
    }

    #[test]
    fn psi_values() {
        let f = RhoFunction::bisquare(1.547).unwrap();
        assert_eq!(psi_eval(&f, 0.0).unwrap(), 0.0);
        assert_eq!(psi_eval(&f, 1.547).unwrap(), 0.0);
        assert_eq!(psi_eval(&f, -1.547).unwrap(), 0.0);
        let numeric = fd(|t| f.rho(t), 0.5, 1e-6);
        assert!((f.psi(0.5) - numeric).abs() < 1e-8);
    }

    #[test]
    fn psi_prime_values() {
        let k: f64 = 1.547;
        let f = RhoFunction::bisquare(k).unwrap();
        assert!((psi_prime_eval(&f, 0.0).unwrap() - 6.0 / (k * k)).abs() < 1e-15);
        assert!((6.0 / (k * k) - 2.5071).abs() < 1e-3);
        assert_eq!(psi_prime_eval(&f, 2.0).unwrap(), 0.0);
        let numeric = fd(|t| f.psi(t), 0.9, 1e-6);
        assert!((f.psi_prime(0.9) - numeric).abs() < 1e-6);
    }

    #[test]
    fn weights() {
        let k: f64 = 1.547;
        let f = RhoFunction::bisquare(k).unwrap();
        assert!((weight_eval(&f, 0.0).unwrap() - 6.0 / (k * k)).abs() < 1e-15);
        assert_eq!(weight_eval(&f, k).unwrap(), 0.0);
        assert_eq!(weight_eval(&f, 3.0).unwrap(), 0.0);
        assert!((f.weight(0.3) - f.psi(0.3) / 0.3).abs() < 1e-15);
    }

    #[test]
    fn non_finite_is_domain_error() {
        let f = RhoFunction::bisquare(1.0).unwrap();
        assert!(matches!(rho_eval(&f, f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(psi_eval(&f, f64::INFINITY), Err(Error::Domain(_))));
        assert!(matches!(
            psi_prime_eval(&f, f64::NEG_INFINITY),
            Err(Error::Domain(_))
        ));
        assert!(matches!(weight_eval(&f, f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn invalid_k_rejected() {
        assert!(RhoFunction::bisquare(0.0).is_err());
        assert!(RhoFunction::bisquare(-1.0).is_err());
        assert!(RhoFunction::bisquare(f64::NAN).is_err());
        assert!(RhoFunction::from_name("huber", 1.0).is_err());
    }

    #[test]
    fn r1_holds_for_bisquare() {
        for k in [1.547, 4.685, DEFAULT_K0, 0.3, 10.0] {
            let f = RhoFunction::bisquare(k).unwrap();
            assert!(verify_r1(&f, 1001), "k = {k}");
        }
    }

    #[test]
    fn r1_rejects_flat_spot_with_jump() {
        let k = 1.547;
        let base = RhoFunction::bisquare(k).unwrap();
        let corrupted = move |t: f64| {
            let a = t.abs();
            if a < 0.5 {
                base.rho(t)
            } else if a < 1.0 {
                base.rho(0.5)
            } else {
                base.rho(t).max(base.rho(0.5) + 0.2).min(1.0)
            }
        };
        let report = verify_r1_with(corrupted, k, 1001);
        assert!(!report.holds);
        assert!(report.max_second_difference > 1e-12);
    }

    #[test]
    fn custom_family_is_checked() {
        let b = RhoFunction::bisquare(2.0).unwrap();
        let (b1, b2, b3) = (b.clone(), b.clone(), b.clone());
        let f = RhoFunction::custom(
            "copy",
            2.0,
            move |t| b1.rho(t),
            move |t| b2.psi(t),
            move |t| b3.psi_prime(t),
        )
        .unwrap();
        assert_eq!(f.kind(), RhoKind::Custom);
        assert_eq!(f.rho(1.0), b.rho(1.0));
        assert_eq!(f.weight(0.0), b.psi_prime(0.0));

        // not bounded: ρ(t) = t²
        let bad = RhoFunction::custom("square", 2.0, |t| t * t, |t| 2.0 * t, |_| 2.0);
        assert!(bad.is_err());
    }

    #[test]
    fn majorization_by_tuning_constant() {
        let r0 = RhoFunction::bisquare(1.547).unwrap();
        let r1 = RhoFunction::bisquare(4.685).unwrap();
        assert!(r1.is_majorized_by(&r0));
        assert!(!r0.is_majorized_by(&r1));
    }
}
