//! Influence functions and asymptotic covariance of the joint S / MM fit.
//!
//! The joint parameter is `θ = (ξ_S, ξ_MM, σ)` of dimension `2q + 3` and
//! solves `mean Ψ(zᵢ, θ) = 0` with
//!
//! ```text
//! Ψ(z, θ) = [ ψ₀(t_S) ġ(x, ξ_S) ;  ψ₁(t_MM) ġ(x, ξ_MM) ;  ρ₀(t_S) − δ ]
//! ```
//!
//! where `ġ = (∂g/∂β, 1)` and `t = (y − g(x, β) − α)/σ`. The influence
//! function is `−D₀⁻¹ Ψ(z, θ₀)` with `D₀ = E Ψ̇(z, θ₀)`. For empirical
//! measures the derivative may be taken inside the mean, so
//! [`d0_matrix`] is exactly the Jacobian of the averaged equations.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{FitConfig, FitResult};
use crate::model::{augmented_grad, augmented_hess, AugmentedParam, Dataset, RegressionModel};
use crate::rho::RhoFunction;

/// Below this magnitude `a₀₀`, `a₀₁` or `d₀` are treated as zero.
const DEGENERATE_TOL: f64 = 1e-10;

/// `θ = (ξ_S, ξ_MM, σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointParam {
    pub xi_s: AugmentedParam,
    pub xi_mm: AugmentedParam,
    pub sigma: f64,
}

impl JointParam {
    pub fn from_fit(fit: &FitResult) -> Self {
        Self {
            xi_s: fit.xi_s.clone(),
            xi_mm: fit.xi_mm.clone(),
            sigma: fit.sigma,
        }
    }

    pub fn q(&self) -> usize {
        self.xi_s.beta.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.q() + 3
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let m = self.q() + 1;
        let mut v = DVector::zeros(2 * m + 1);
        v.rows_mut(0, m).copy_from(&self.xi_s.to_vector());
        v.rows_mut(m, m).copy_from(&self.xi_mm.to_vector());
        v[2 * m] = self.sigma;
        v
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        let m = (v.len() - 1) / 2;
        Self {
            xi_s: AugmentedParam::from_vector(&v.rows(0, m).into_owned()),
            xi_mm: AugmentedParam::from_vector(&v.rows(m, m).into_owned()),
            sigma: v[2 * m],
        }
    }
}

/// Model and loss functions defining `Ψ`.
#[derive(Debug, Clone)]
pub struct EstimatingSystem {
    pub model: RegressionModel,
    pub rho0: RhoFunction,
    pub rho1: RhoFunction,
    pub delta: f64,
}

impl EstimatingSystem {
    pub fn new(model: RegressionModel, cfg: &FitConfig) -> Self {
        Self {
            model,
            rho0: cfg.rho0.clone(),
            rho1: cfg.rho1.clone(),
            delta: cfg.delta,
        }
    }

    fn standardized(&self, x: &[f64], y: f64, xi: &AugmentedParam, sigma: f64) -> Result<f64> {
        let t = (y - self.model.eval(x, xi.beta.as_slice()) - xi.alpha) / sigma;
        if t.is_finite() {
            Ok(t)
        } else {
            Err(Error::Domain("standardized residual is not finite".into()))
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("σ must be positive, got {sigma}")))
    }
}

/// `Ψ(z, θ)`, length `2q + 3`.
pub fn psi_stack(
    sys: &EstimatingSystem,
    x: &[f64],
    y: f64,
    theta: &JointParam,
) -> Result<DVector<f64>> {
    check_sigma(theta.sigma)?;
    let m = theta.q() + 1;
    let ts = sys.standardized(x, y, &theta.xi_s, theta.sigma)?;
    let tmm = sys.standardized(x, y, &theta.xi_mm, theta.sigma)?;
    let gs = augmented_grad(&sys.model, x, &theta.xi_s)?;
    let gmm = augmented_grad(&sys.model, x, &theta.xi_mm)?;
    let mut out = DVector::zeros(2 * m + 1);
    out.rows_mut(0, m).copy_from(&(gs * sys.rho0.psi(ts)));
    out.rows_mut(m, m).copy_from(&(gmm * sys.rho1.psi(tmm)));
    out[2 * m] = sys.rho0.rho(ts) - sys.delta;
    Ok(out)
}

/// `∂Ψ/∂θ'`, a `(2q+3) × (2q+3)` matrix with zero blocks (1,2), (2,1), (3,2).
pub fn psi_jacobian(
    sys: &EstimatingSystem,
    x: &[f64],
    y: f64,
    theta: &JointParam,
) -> Result<DMatrix<f64>> {
    check_sigma(theta.sigma)?;
    let m = theta.q() + 1;
    let sigma = theta.sigma;
    let ts = sys.standardized(x, y, &theta.xi_s, sigma)?;
    let tmm = sys.standardized(x, y, &theta.xi_mm, sigma)?;
    let gs = augmented_grad(&sys.model, x, &theta.xi_s)?;
    let gmm = augmented_grad(&sys.model, x, &theta.xi_mm)?;
    let hs = augmented_hess(&sys.model, x, &theta.xi_s)?;
    let hmm = augmented_hess(&sys.model, x, &theta.xi_mm)?;
    let (p0, pp0) = (sys.rho0.psi(ts), sys.rho0.psi_prime(ts));
    let (p1, pp1) = (sys.rho1.psi(tmm), sys.rho1.psi_prime(tmm));

    let mut j = DMatrix::zeros(2 * m + 1, 2 * m + 1);
    let b11 = &gs * gs.transpose() * (-pp0 / sigma) + hs * p0;
    let b22 = &gmm * gmm.transpose() * (-pp1 / sigma) + hmm * p1;
    j.view_mut((0, 0), (m, m)).copy_from(&b11);
    j.view_mut((m, m), (m, m)).copy_from(&b22);
    j.view_mut((0, 2 * m), (m, 1))
        .copy_from(&(&gs * (-pp0 * ts / sigma)));
    j.view_mut((m, 2 * m), (m, 1))
        .copy_from(&(&gmm * (-pp1 * tmm / sigma)));
    j.view_mut((2 * m, 0), (1, m))
        .copy_from(&(gs.transpose() * (-p0 / sigma)));
    j[(2 * m, 2 * m)] = -p0 * ts / sigma;
    Ok(j)
}

/// Constants entering the closed-form `D₀` and influence functions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceConstants {
    /// `E ψ₀'(t_S)`
    pub a00: f64,
    /// `E ψ₁'(t_MM)`
    pub a01: f64,
    /// `E t_S ψ₀'(t_S)`
    pub e00: f64,
    /// `E t_MM ψ₁'(t_MM)`
    pub e01: f64,
    /// `E t_S ψ₀(t_S)`
    pub d0: f64,
    /// `E ġ(x, β₀)`
    #[serde(serialize_with = "ser_vector")]
    pub b0: DVector<f64>,
    /// `E (ġ − b₀)(ġ − b₀)'`
    #[serde(serialize_with = "ser_matrix", rename = "A0")]
    pub a0: DMatrix<f64>,
    /// `[[A₀ + b₀b₀', b₀], [b₀', 1]]`
    #[serde(serialize_with = "ser_matrix", rename = "C0")]
    pub c0: DMatrix<f64>,
    pub sigma0: f64,
    pub alpha00: f64,
    pub alpha01: f64,
}

pub(crate) fn ser_vector<S: serde::Serializer>(
    v: &DVector<f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

pub(crate) fn ser_matrix<S: serde::Serializer>(
    m: &DMatrix<f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect();
    s.collect_seq(rows)
}

impl InferenceConstants {
    /// Assembles `C₀` from `b₀` and `A₀`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a00: f64,
        a01: f64,
        e00: f64,
        e01: f64,
        d0: f64,
        b0: DVector<f64>,
        a0: DMatrix<f64>,
        sigma0: f64,
        alpha00: f64,
        alpha01: f64,
    ) -> Result<Self> {
        let q = b0.len();
        if a0.nrows() != q || a0.ncols() != q {
            return Err(Error::Argument(format!("A0 must be {q}×{q}")));
        }
        check_sigma(sigma0)?;
        let mut c0 = DMatrix::zeros(q + 1, q + 1);
        c0.view_mut((0, 0), (q, q))
            .copy_from(&(&a0 + &b0 * b0.transpose()));
        c0.view_mut((0, q), (q, 1)).copy_from(&b0);
        c0.view_mut((q, 0), (1, q)).copy_from(&b0.transpose());
        c0[(q, q)] = 1.0;
        Ok(Self {
            a00,
            a01,
            e00,
            e01,
            d0,
            b0,
            a0,
            c0,
            sigma0,
            alpha00,
            alpha01,
        })
    }

    /// Plug-in estimates from a fit: empirical means over the observations at θ̂.
    pub fn plug_in(d: &Dataset, fit: &FitResult, sys: &EstimatingSystem) -> Result<Self> {
        let theta = JointParam::from_fit(fit);
        check_sigma(theta.sigma)?;
        let (n, q) = (d.n(), theta.q());
        let nf = n as f64;
        let (mut a00, mut a01, mut e00, mut e01, mut d0) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut grads = Vec::with_capacity(n);
        for i in 0..n {
            let x = d.row(i);
            let y = d.y()[i];
            let ts = sys.standardized(&x, y, &theta.xi_s, theta.sigma)?;
            let tmm = sys.standardized(&x, y, &theta.xi_mm, theta.sigma)?;
            let pp0 = sys.rho0.psi_prime(ts);
            let pp1 = sys.rho1.psi_prime(tmm);
            a00 += pp0;
            a01 += pp1;
            e00 += ts * pp0;
            e01 += tmm * pp1;
            d0 += ts * sys.rho0.psi(ts);
            grads.push(sys.model.grad(&x, theta.xi_mm.beta.as_slice()));
        }
        let b0 = grads.iter().fold(DVector::zeros(q), |acc, g| acc + g) / nf;
        let a0 = grads.iter().fold(DMatrix::zeros(q, q), |acc, g| {
            let c = g - &b0;
            acc + &c * c.transpose()
        }) / nf;
        Self::new(
            a00 / nf,
            a01 / nf,
            e00 / nf,
            e01 / nf,
            d0 / nf,
            b0,
            a0,
            theta.sigma,
            theta.xi_s.alpha,
            theta.xi_mm.alpha,
        )
    }

    pub fn q(&self) -> usize {
        self.b0.len()
    }

    /// Errors if `a₀₀`, `a₀₁` or `d₀` vanish, or `A₀` is singular.
    pub fn check_nondegenerate(&self) -> Result<()> {
        for (name, v) in [("a00", self.a00), ("a01", self.a01), ("d0", self.d0)] {
            if !(v.abs() > DEGENERATE_TOL) {
                return Err(Error::DegenerateConstants(format!("{name} = {v:e}")));
            }
        }
        self.a0_cholesky()?;
        Ok(())
    }

    fn a0_cholesky(&self) -> Result<Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>> {
        if self.q() == 0 {
            return Ok(None);
        }
        let scale = (0..self.q()).fold(0.0_f64, |m, i| m.max(self.a0[(i, i)]));
        let chol = self
            .a0
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular("A0 is not positive definite".into()))?;
        let l = chol.l();
        let min_pivot = (0..self.q()).fold(f64::INFINITY, |m, i| m.min(l[(i, i)] * l[(i, i)]));
        if !(min_pivot > 1e-12 * scale) {
            return Err(Error::Singular("A0 is numerically singular".into()));
        }
        Ok(Some(chol))
    }

    /// `C₀⁻¹ [ġ; 1] = [A₀⁻¹(ġ − b₀); 1 + b₀'A₀⁻¹(b₀ − ġ)]`.
    pub fn c0_inv_times_grad(&self, grad: &DVector<f64>) -> Result<DVector<f64>> {
        let q = self.q();
        let mut out = DVector::zeros(q + 1);
        out[q] = 1.0;
        if let Some(chol) = self.a0_cholesky()? {
            let sol = chol.solve(&(grad - &self.b0));
            out[q] -= self.b0.dot(&sol);
            out.rows_mut(0, q).copy_from(&sol);
        }
        Ok(out)
    }

    /// `C₀⁻¹` from the block formula `[[A₀⁻¹, −A₀⁻¹b₀], [−(A₀⁻¹b₀)', 1 + b₀'A₀⁻¹b₀]]`.
    pub fn c0_inverse(&self) -> Result<DMatrix<f64>> {
        let q = self.q();
        let mut out = DMatrix::zeros(q + 1, q + 1);
        out[(q, q)] = 1.0;
        if let Some(chol) = self.a0_cholesky()? {
            let a_inv = chol.inverse();
            let ab = &a_inv * &self.b0;
            out.view_mut((0, 0), (q, q)).copy_from(&a_inv);
            out.view_mut((0, q), (q, 1)).copy_from(&(-&ab));
            out.view_mut((q, 0), (1, q)).copy_from(&(-ab.transpose()));
            out[(q, q)] = 1.0 + self.b0.dot(&ab);
        }
        Ok(out)
    }

    /// `b₀* = (b₀', 1)'`.
    pub fn b0_star(&self) -> DVector<f64> {
        let q = self.q();
        DVector::from_fn(q + 1, |i, _| if i < q { self.b0[i] } else { 1.0 })
    }

    /// `D₀ = −(1/σ₀) [[a₀₀C₀, 0, e₀₀b₀*], [0, a₀₁C₀, e₀₁b₀*], [0, 0, d₀]]`.
    pub fn closed_form_d0(&self) -> DMatrix<f64> {
        let m = self.q() + 1;
        let bs = self.b0_star();
        let mut d = DMatrix::zeros(2 * m + 1, 2 * m + 1);
        d.view_mut((0, 0), (m, m)).copy_from(&(&self.c0 * self.a00));
        d.view_mut((m, m), (m, m)).copy_from(&(&self.c0 * self.a01));
        d.view_mut((0, 2 * m), (m, 1)).copy_from(&(&bs * self.e00));
        d.view_mut((m, 2 * m), (m, 1)).copy_from(&(&bs * self.e01));
        d[(2 * m, 2 * m)] = self.d0;
        d * (-1.0 / self.sigma0)
    }

    /// `D₀⁻¹ = −σ₀ [[C₀⁻¹/a₀₀, 0, −e₀₀C₀⁻¹b₀*/(a₀₀d₀)], [0, C₀⁻¹/a₀₁, −e₀₁C₀⁻¹b₀*/(a₀₁d₀)], [0, 0, 1/d₀]]`.
    pub fn closed_form_d0_inverse(&self) -> Result<DMatrix<f64>> {
        self.check_nondegenerate()?;
        let m = self.q() + 1;
        let ci = self.c0_inverse()?;
        let cib = &ci * self.b0_star();
        let mut d = DMatrix::zeros(2 * m + 1, 2 * m + 1);
        d.view_mut((0, 0), (m, m)).copy_from(&(&ci / self.a00));
        d.view_mut((m, m), (m, m)).copy_from(&(&ci / self.a01));
        d.view_mut((0, 2 * m), (m, 1))
            .copy_from(&(&cib * (-self.e00 / (self.a00 * self.d0))));
        d.view_mut((m, 2 * m), (m, 1))
            .copy_from(&(&cib * (-self.e01 / (self.a01 * self.d0))));
        d[(2 * m, 2 * m)] = 1.0 / self.d0;
        Ok(d * (-self.sigma0))
    }

    /// `|D₀| = (−1/σ₀)^{2q+3} a₀₀^{q+1} a₀₁^{q+1} d₀ |C₀|²`.
    pub fn closed_form_d0_determinant(&self) -> f64 {
        let m = self.q() + 1;
        let c0_det = self.c0.determinant();
        (-1.0 / self.sigma0).powi(2 * m as i32 + 1)
            * (self.a00 * self.a01).powi(m as i32)
            * self.d0
            * c0_det
            * c0_det
    }
}

/// Empirical `mean Ψ̇(zᵢ, θ̂)`.
pub fn d0_matrix(d: &Dataset, fit: &FitResult, sys: &EstimatingSystem) -> Result<DMatrix<f64>> {
    let theta = JointParam::from_fit(fit);
    check_sigma(theta.sigma)?;
    let dim = theta.dim();
    let mut acc = DMatrix::zeros(dim, dim);
    for i in 0..d.n() {
        acc += psi_jacobian(sys, &d.row(i), d.y()[i], &theta)?;
    }
    Ok(acc / d.n() as f64)
}

/// Terms shared by the closed-form influence blocks.
struct Scores {
    ts: f64,
    psi0: f64,
    psi1: f64,
    rho0_centered: f64,
}

fn scores(sys: &EstimatingSystem, x: &[f64], y: f64, theta: &JointParam) -> Result<Scores> {
    check_sigma(theta.sigma)?;
    let ts = sys.standardized(x, y, &theta.xi_s, theta.sigma)?;
    let tmm = sys.standardized(x, y, &theta.xi_mm, theta.sigma)?;
    Ok(Scores {
        ts,
        psi0: sys.rho0.psi(ts),
        psi1: sys.rho1.psi(tmm),
        rho0_centered: sys.rho0.rho(ts) - sys.delta,
    })
}

/// Influence of `z = (x, y)` on the MM block `(β, α)`.
///
/// `(σ₀/a₀₁) ψ₁(t_MM) C₀⁻¹ġ(x, ξ_MM) − (σ₀e₀₁/(a₀₁d₀)) (ρ₀(t_S) − δ) e_α`.
pub fn influence_mm(
    sys: &EstimatingSystem,
    x: &[f64],
    y: f64,
    theta: &JointParam,
    c: &InferenceConstants,
) -> Result<DVector<f64>> {
    c.check_nondegenerate()?;
    let s = scores(sys, x, y, theta)?;
    let grad = sys.model.grad(x, theta.xi_mm.beta.as_slice());
    let mut out = c.c0_inv_times_grad(&grad)? * (theta.sigma * s.psi1 / c.a01);
    let q = c.q();
    out[q] -= theta.sigma * c.e01 / (c.a01 * c.d0) * s.rho0_centered;
    Ok(out)
}

/// Influence on the S block: [`influence_mm`] with `a₀₀`, `e₀₀`, `ψ₀` at `ξ_S`.
pub fn influence_s(
    sys: &EstimatingSystem,
    x: &[f64],
    y: f64,
    theta: &JointParam,
    c: &InferenceConstants,
) -> Result<DVector<f64>> {
    c.check_nondegenerate()?;
    let s = scores(sys, x, y, theta)?;
    let grad = sys.model.grad(x, theta.xi_s.beta.as_slice());
    let mut out = c.c0_inv_times_grad(&grad)? * (theta.sigma * s.psi0 / c.a00);
    let q = c.q();
    out[q] -= theta.sigma * c.e00 / (c.a00 * c.d0) * s.rho0_centered;
    Ok(out)
}

/// Full influence vector `(I_S, I_MM, I_σ)` of length `2q + 3`.
pub fn influence_joint(
    sys: &EstimatingSystem,
    x: &[f64],
    y: f64,
    theta: &JointParam,
    c: &InferenceConstants,
) -> Result<DVector<f64>> {
    let m = c.q() + 1;
    let is = influence_s(sys, x, y, theta, c)?;
    let imm = influence_mm(sys, x, y, theta, c)?;
    let s = scores(sys, x, y, theta)?;
    let mut out = DVector::zeros(2 * m + 1);
    out.rows_mut(0, m).copy_from(&is);
    out.rows_mut(m, m).copy_from(&imm);
    out[2 * m] = theta.sigma / c.d0 * s.rho0_centered;
    debug_assert!(s.ts.is_finite());
    Ok(out)
}

/// `−D⁻¹ Ψ(z, θ)` by generic numeric inversion of `D`.
pub fn influence_generic(
    sys: &EstimatingSystem,
    x: &[f64],
    y: f64,
    theta: &JointParam,
    d0: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let psi = psi_stack(sys, x, y, theta)?;
    let lu = d0.clone().lu();
    let sol = lu.solve(&psi).ok_or_else(|| Error::Singular("D0".into()))?;
    Ok(-sol)
}

/// Location-model influence of `y` on the MM estimate:
/// `(σ₀/a₀₁)ψ₁((y − α₀₁)/σ₀) − (e₀₁σ₀/(a₀₁d₀))(ρ₀((y − α₀₀)/σ₀) − δ)`.
pub fn influence_location(sys: &EstimatingSystem, y: f64, c: &InferenceConstants) -> Result<f64> {
    if c.q() != 0 {
        return Err(Error::Argument(
            "influence_location needs location constants (q = 0)".into(),
        ));
    }
    c.check_nondegenerate()?;
    let s0 = c.sigma0;
    let t1 = (y - c.alpha01) / s0;
    let t0 = (y - c.alpha00) / s0;
    if !(t0.is_finite() && t1.is_finite()) {
        return Err(Error::Domain("standardized residual is not finite".into()));
    }
    Ok(
        s0 / c.a01 * sys.rho1.psi(t1)
            - c.e01 * s0 / (c.a01 * c.d0) * (sys.rho0.rho(t0) - sys.delta),
    )
}

/// Comparison of the general covariance with the symmetric-error shortcut
/// `σ₀² mean ψ₁² / (mean ψ₁')² C₀⁻¹`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetricCheck {
    #[serde(serialize_with = "ser_matrix", rename = "V")]
    pub v: DMatrix<f64>,
    /// `‖V − V_sym‖_F / ‖V_sym‖_F`.
    pub relative_discrepancy: f64,
}

/// Plug-in inference for a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceReport {
    pub constants: InferenceConstants,
    /// Closed-form `D₀` from the plug-in constants.
    pub d0: DMatrix<f64>,
    /// `mean Ψ̇(zᵢ, θ̂)`.
    pub d0_empirical: DMatrix<f64>,
    /// Covariance of the MM block, `(q+1) × (q+1)`.
    pub v: DMatrix<f64>,
    /// Covariance of the full `θ`, `(2q+3) × (2q+3)`.
    pub v_full: DMatrix<f64>,
    /// `sqrt(diag(V)/n)` for the MM block.
    pub std_errors: DVector<f64>,
    /// Row `i` is the influence vector of observation `i`.
    pub influence: DMatrix<f64>,
    pub symmetric: Option<SymmetricCheck>,
}

/// Sandwich covariance `V = mean I(zᵢ) I(zᵢ)'` with `I = −D₀⁻¹Ψ(z, θ̂)`.
///
/// With `symmetric = true` the shortcut for symmetric errors is computed too
/// and compared against the general route.
pub fn asymptotic_cov(
    d: &Dataset,
    fit: &FitResult,
    sys: &EstimatingSystem,
    symmetric: bool,
) -> Result<InferenceReport> {
    if fit.exact_fit || !(fit.sigma > 0.0) {
        return Err(Error::Argument("inference needs a fit with σ̂ > 0".into()));
    }
    let constants = InferenceConstants::plug_in(d, fit, sys)?;
    constants.check_nondegenerate()?;
    let theta = JointParam::from_fit(fit);
    let (n, dim, m) = (d.n(), theta.dim(), theta.q() + 1);

    let mut influence = DMatrix::zeros(n, dim);
    for i in 0..n {
        let row = influence_joint(sys, &d.row(i), d.y()[i], &theta, &constants)?;
        influence.row_mut(i).copy_from(&row.transpose());
    }
    let v_full = influence.transpose() * &influence / n as f64;
    let v_full = (&v_full + v_full.transpose()) * 0.5;
    let v = v_full.view((m, m), (m, m)).into_owned();
    let std_errors = DVector::from_fn(m, |j, _| (v[(j, j)] / n as f64).sqrt());

    let symmetric = if symmetric {
        let mut psi_sq = 0.0;
        for i in 0..n {
            let t = sys.standardized(&d.row(i), d.y()[i], &theta.xi_mm, theta.sigma)?;
            psi_sq += sys.rho1.psi(t).powi(2);
        }
        let factor = theta.sigma.powi(2) * (psi_sq / n as f64) / constants.a01.powi(2);
        let v_sym = constants.c0_inverse()? * factor;
        let relative_discrepancy = (&v - &v_sym).norm() / v_sym.norm();
        Some(SymmetricCheck {
            v: v_sym,
            relative_discrepancy,
        })
    } else {
        None
    };

    Ok(InferenceReport {
        d0: constants.closed_form_d0(),
        d0_empirical: d0_matrix(d, fit, sys)?,
        constants,
        v,
        v_full,
        std_errors,
        influence,
        symmetric,
    })
}
