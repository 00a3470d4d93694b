//! S and MM estimation.
//!
//! The S-estimate minimizes the M-scale of the residuals. Starting points
//! come from elemental subsamples (linear and location models) or from
//! random draws inside the parameter box (nonlinear models); each is refined
//! with a few scale-reweighted least-squares steps, and the best few are
//! iterated to convergence. The MM-estimate then minimizes
//! `mean ρ₁(rᵢ/σ̂)` at the S-scale by IRWLS started from the S-estimate.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{check_dims, location_model, AugmentedParam, Dataset, RegressionModel};
use crate::mscale::{mscale, MScaleConfig};
use crate::rho::{RhoFunction, DEFAULT_K0, DEFAULT_K1};

/// Maximum number of step halvings per IRWLS iteration.
const MAX_HALVINGS: usize = 30;
/// Newton iterations applied after IRWLS convergence.
const NEWTON_POLISH_STEPS: usize = 8;
/// σ̂ below this multiple of `max|y|` is treated as an exact fit.
const EXACT_FIT_RTOL: f64 = 1e-10;
/// Tolerance on the estimating equations recorded as satisfied.
pub const EQUATION_TOL: f64 = 1e-6;

/// Settings for [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub delta: f64,
    pub rho0: RhoFunction,
    pub rho1: RhoFunction,
    pub n_subsamples: usize,
    /// Refinement steps applied to every candidate.
    pub refine_steps: usize,
    /// Number of best candidates iterated to convergence.
    pub n_best: usize,
    pub irwls_tol: f64,
    pub irwls_max_iter: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            delta: 0.5,
            rho0: RhoFunction::bisquare(DEFAULT_K0).expect("valid constant"),
            rho1: RhoFunction::bisquare(DEFAULT_K1).expect("valid constant"),
            n_subsamples: 500,
            refine_steps: 2,
            n_best: 5,
            irwls_tol: 1e-10,
            irwls_max_iter: 200,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |key: &str, message: String| {
            Err(Error::Config {
                key: key.into(),
                message,
            })
        };
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return cfg_err("delta", format!("must lie in (0,1), got {}", self.delta));
        }
        if !self.rho1.is_majorized_by(&self.rho0) {
            return cfg_err("rho1", "ρ₁ must satisfy ρ₁ ≤ ρ₀ pointwise".into());
        }
        if self.n_subsamples == 0 {
            return cfg_err("n_subsamples", "must be positive".into());
        }
        if self.n_best == 0 {
            return cfg_err("n_best", "must be positive".into());
        }
        if !(self.irwls_tol > 0.0) {
            return cfg_err("irwls_tol", "must be positive".into());
        }
        if self.irwls_max_iter == 0 {
            return cfg_err("irwls_max_iter", "must be positive".into());
        }
        Ok(())
    }

    pub fn mscale_config(&self) -> MScaleConfig {
        MScaleConfig::with_delta(self.delta)
    }
}

/// Per-stage booleans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StageFlags {
    pub s: bool,
    pub mm: bool,
}

/// Per-stage iteration counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StageCounts {
    pub s: usize,
    pub mm: usize,
}

/// Sup-norms of the three blocks of the stacked estimating equations at θ̂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquationResiduals {
    /// `‖mean ψ₁(t_MM) ġ(x, ξ_MM)‖∞`
    pub mm: f64,
    /// `‖mean ψ₀(t_S) ġ(x, ξ_S)‖∞`
    pub s: f64,
    /// `|mean ρ₀(t_S) − δ|`
    pub scale: f64,
}

impl EquationResiduals {
    pub fn max(&self) -> f64 {
        self.mm.max(self.s).max(self.scale)
    }
}

/// Joint solution `θ̂ = (ξ̂_S, ξ̂_MM, σ̂)` with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub xi_s: AugmentedParam,
    pub xi_mm: AugmentedParam,
    pub sigma: f64,
    /// Final S-scale (equal to `sigma`).
    pub objective_s: f64,
    /// `mean ρ₁(rᵢ(ξ̂_MM)/σ̂)`.
    pub objective_mm: f64,
    pub converged: StageFlags,
    pub iterations: StageCounts,
    pub candidates_evaluated: usize,
    /// σ̂ = 0: the MM stage was skipped and `xi_mm = xi_s`.
    pub exact_fit: bool,
    /// `None` on the exact-fit path.
    pub equations: Option<EquationResiduals>,
    pub delta: f64,
}

impl FitResult {
    pub fn equations_satisfied(&self) -> bool {
        self.equations.is_some_and(|e| e.max() <= EQUATION_TOL)
    }
}

/// Output of the S stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SFit {
    pub xi: AugmentedParam,
    pub sigma: f64,
    pub exact_fit: bool,
    pub converged: bool,
    pub iterations: usize,
    pub candidates_evaluated: usize,
}

/// Output of the MM stage.
#[derive(Debug, Clone, PartialEq)]
pub struct MmFit {
    pub xi: AugmentedParam,
    pub objective: f64,
    pub iterations: usize,
    /// Objective after each accepted iteration, starting with the start value.
    pub trace: Vec<f64>,
}

/// Row-major view of a dataset bound to a model.
pub(crate) struct Problem<'a> {
    rows: Vec<Vec<f64>>,
    y: &'a [f64],
    model: &'a RegressionModel,
    q: usize,
}

impl<'a> Problem<'a> {
    pub(crate) fn new(d: &'a Dataset, model: &'a RegressionModel) -> Self {
        Self {
            rows: d.rows(),
            y: d.y().as_slice(),
            model,
            q: model.q(),
        }
    }

    fn n(&self) -> usize {
        self.y.len()
    }

    /// Residuals at `xi = (β, α)`; `false` if any is not finite.
    pub(crate) fn residuals(&self, xi: &[f64], out: &mut [f64]) -> bool {
        let (beta, alpha) = (&xi[..self.q], xi[self.q]);
        let mut ok = true;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.y[i] - self.model.eval(&self.rows[i], beta) - alpha;
            ok &= o.is_finite();
        }
        ok
    }

    pub(crate) fn jacobian_row(&self, i: usize, xi: &[f64], out: &mut [f64]) {
        self.model
            .grad_into(&self.rows[i], &xi[..self.q], &mut out[..self.q]);
        out[self.q] = 1.0;
    }

    /// Weighted Gauss–Newton step: solves `(J'WJ) Δ = J'W r`.
    fn wls_step(&self, xi: &[f64], r: &[f64], w: &[f64]) -> Option<Vec<f64>> {
        let m = self.q + 1;
        let mut normal = DMatrix::<f64>::zeros(m, m);
        let mut rhs = DVector::<f64>::zeros(m);
        let mut row = vec![0.0; m];
        for i in 0..self.n() {
            if w[i] == 0.0 {
                continue;
            }
            self.jacobian_row(i, xi, &mut row);
            for a in 0..m {
                let wa = w[i] * row[a];
                rhs[a] += wa * r[i];
                for b in 0..=a {
                    normal[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..m {
            for b in 0..a {
                normal[(b, a)] = normal[(a, b)];
            }
        }
        let diag_max = (0..m).fold(0.0_f64, |acc, a| acc.max(normal[(a, a)]));
        if !(diag_max > 0.0) {
            return None;
        }
        let chol = normal.clone().cholesky()?;
        let l = chol.l();
        let min_pivot = (0..m).fold(f64::INFINITY, |acc, a| acc.min(l[(a, a)] * l[(a, a)]));
        if min_pivot < 1e-13 * diag_max {
            return None;
        }
        let step = chol.solve(&rhs);
        step.iter()
            .all(|v| v.is_finite())
            .then(|| step.as_slice().to_vec())
    }

    /// `‖mean ψ(rᵢ/σ) ġᵢ‖∞` at `xi`, given residuals `r` at `xi`.
    fn score_norm(&self, xi: &[f64], r: &[f64], rho: &RhoFunction, sigma: f64) -> f64 {
        let m = self.q + 1;
        let mut sum = vec![0.0; m];
        let mut row = vec![0.0; m];
        for i in 0..self.n() {
            let ps = rho.psi(r[i] / sigma);
            if ps == 0.0 {
                continue;
            }
            self.jacobian_row(i, xi, &mut row);
            sum.iter_mut().zip(&row).for_each(|(s, g)| *s += ps * g);
        }
        sum.iter().fold(0.0_f64, |a, b| a.max(b.abs())) / self.n() as f64
    }

    /// Newton step for `min mean ρ(rᵢ/σ)` at fixed σ; `None` unless the
    /// Hessian is positive definite.
    fn newton_step(
        &self,
        xi: &[f64],
        r: &[f64],
        rho: &RhoFunction,
        sigma: f64,
    ) -> Option<Vec<f64>> {
        let m = self.q + 1;
        let mut hess = DMatrix::<f64>::zeros(m, m);
        let mut rhs = DVector::<f64>::zeros(m);
        let mut row = vec![0.0; m];
        for i in 0..self.n() {
            let t = r[i] / sigma;
            let (ps, pp) = (rho.psi(t), rho.psi_prime(t));
            if ps == 0.0 && pp == 0.0 {
                continue;
            }
            self.jacobian_row(i, xi, &mut row);
            for a in 0..m {
                rhs[a] += sigma * ps * row[a];
                for b in 0..m {
                    hess[(a, b)] += pp * row[a] * row[b];
                }
            }
            if !self.model.is_linear() && ps != 0.0 {
                let h = self.model.hess(&self.rows[i], &xi[..self.q]);
                for a in 0..self.q {
                    for b in 0..self.q {
                        hess[(a, b)] -= sigma * ps * h[(a, b)];
                    }
                }
            }
        }
        let step = hess.cholesky()?.solve(&rhs);
        step.iter()
            .all(|v| v.is_finite())
            .then(|| step.as_slice().to_vec())
    }

    fn apply(&self, xi: &[f64], step: &[f64], factor: f64) -> Vec<f64> {
        let mut out: Vec<f64> = xi.iter().zip(step).map(|(a, b)| a + factor * b).collect();
        self.model.project(&mut out[..self.q]);
        out
    }

    fn scale_at(
        &self,
        xi: &[f64],
        r: &mut [f64],
        rho0: &RhoFunction,
        mcfg: &MScaleConfig,
    ) -> Option<f64> {
        if !self.residuals(xi, r) {
            return None;
        }
        mscale(r, rho0, mcfg).ok()
    }

    fn rho_objective(
        &self,
        xi: &[f64],
        r: &mut [f64],
        rho: &RhoFunction,
        sigma: f64,
    ) -> Option<f64> {
        if !self.residuals(xi, r) {
            return None;
        }
        Some(r.iter().map(|&v| rho.rho(v / sigma)).sum::<f64>() / r.len() as f64)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Starting points, generated before any evaluation so the result does not
/// depend on evaluation order.
fn generate_candidates(p: &Problem<'_>, cfg: &FitConfig) -> Result<Vec<Option<Vec<f64>>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, q) = (p.n(), p.q);
    let m = q + 1;
    if p.model.is_linear() {
        let mut out = Vec::with_capacity(cfg.n_subsamples);
        for _ in 0..cfg.n_subsamples {
            let idx = sample(&mut rng, n, m).into_vec();
            let mut a = DMatrix::<f64>::zeros(m, m);
            let mut b = DVector::<f64>::zeros(m);
            for (row, &i) in idx.iter().enumerate() {
                for j in 0..q {
                    a[(row, j)] = p.rows[i][j];
                }
                a[(row, q)] = 1.0;
                b[row] = p.y[i];
            }
            out.push(solve_square(a, &b));
        }
        Ok(out)
    } else {
        let bounds = p
            .model
            .bounds()
            .ok_or_else(|| {
                Error::Argument(
                    "nonlinear models need a parameter box for candidate generation".into(),
                )
            })?
            .to_vec();
        let mut out = Vec::with_capacity(cfg.n_subsamples);
        let mut r = vec![0.0; n];
        for _ in 0..cfg.n_subsamples {
            let mut xi: Vec<f64> = bounds
                .iter()
                .map(|(lo, hi)| rng.random_range(*lo..*hi))
                .collect();
            xi.push(0.0);
            if !p.residuals(&xi, &mut r) {
                out.push(None);
                continue;
            }
            xi[q] = median(&mut r.clone());
            out.push(Some(xi));
        }
        Ok(out)
    }
}

fn solve_square(a: DMatrix<f64>, b: &DVector<f64>) -> Option<Vec<f64>> {
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let lu = a.lu();
    let det = lu.determinant();
    let m = b.len() as i32;
    if !(det.abs() > 1e-12 * scale.powi(m)) {
        return None;
    }
    let x = lu.solve(b)?;
    x.iter()
        .all(|v| v.is_finite())
        .then(|| x.as_slice().to_vec())
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct Refined {
    xi: Vec<f64>,
    sigma: f64,
    iterations: usize,
    converged: bool,
}

/// Scale-reweighted least squares on `xi`. With `full = false` runs exactly
/// `steps` undamped steps; otherwise iterates with step halving until the
/// relative step falls below `tol`.
fn refine_s(
    p: &Problem<'_>,
    start: Vec<f64>,
    cfg: &FitConfig,
    mcfg: &MScaleConfig,
    steps: usize,
    full: bool,
) -> Option<Refined> {
    let n = p.n();
    let mut r = vec![0.0; n];
    let mut r_try = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut xi = start;
    let mut sigma = p.scale_at(&xi, &mut r, &cfg.rho0, mcfg)?;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < steps {
        if sigma == 0.0 {
            converged = true;
            break;
        }
        iterations += 1;
        for i in 0..n {
            w[i] = cfg.rho0.weight(r[i] / sigma);
        }
        let Some(step) = p.wls_step(&xi, &r, &w) else {
            break;
        };
        if !full {
            xi = p.apply(&xi, &step, 1.0);
            sigma = p.scale_at(&xi, &mut r, &cfg.rho0, mcfg)?;
            continue;
        }
        let mut factor = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = p.apply(&xi, &step, factor);
            if let Some(s) = p.scale_at(&cand, &mut r_try, &cfg.rho0, mcfg) {
                if s <= sigma {
                    accepted = Some((cand, s));
                    break;
                }
            }
            factor *= 0.5;
        }
        let Some((cand, s)) = accepted else {
            converged = true;
            break;
        };
        let moved: Vec<f64> = cand.iter().zip(&xi).map(|(a, b)| a - b).collect();
        xi = cand;
        sigma = s;
        std::mem::swap(&mut r, &mut r_try);
        if norm(&moved) <= cfg.irwls_tol * (norm(&xi) + sigma) {
            converged = true;
            break;
        }
    }
    if !full {
        converged = true;
    } else if sigma > 0.0 {
        // IRWLS converges linearly; finish with Newton steps on the score.
        let mut score = p.score_norm(&xi, &r, &cfg.rho0, sigma);
        for _ in 0..NEWTON_POLISH_STEPS {
            let Some(step) = p.newton_step(&xi, &r, &cfg.rho0, sigma) else {
                break;
            };
            let cand = p.apply(&xi, &step, 1.0);
            let Some(s) = p.scale_at(&cand, &mut r_try, &cfg.rho0, mcfg) else {
                break;
            };
            if s == 0.0 || s > sigma * (1.0 + 1e-12) {
                break;
            }
            let cand_score = p.score_norm(&cand, &r_try, &cfg.rho0, s);
            if cand_score >= score {
                break;
            }
            xi = cand;
            sigma = s;
            score = cand_score;
            std::mem::swap(&mut r, &mut r_try);
        }
        // a capped IRWLS run still counts once the first-order conditions hold
        converged = converged || score <= EQUATION_TOL;
    }
    Some(Refined {
        xi,
        sigma,
        iterations,
        converged,
    })
}

fn better(a: &Refined, ia: usize, b: &Refined, ib: usize) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    let tie = (a.sigma - b.sigma).abs() <= 1e-12 * a.sigma.max(b.sigma);
    if !tie {
        return a.sigma.total_cmp(&b.sigma);
    }
    match norm(&a.xi).total_cmp(&norm(&b.xi)) {
        Ordering::Equal => ia.cmp(&ib),
        o => o,
    }
}

/// S-estimate and its scale.
pub fn fit_s(d: &Dataset, m: &RegressionModel, cfg: &FitConfig) -> Result<SFit> {
    cfg.validate()?;
    check_dims(d, m, &AugmentedParam::zeros(m.q()))?;
    let q = m.q();
    if d.n() < q + 2 {
        return Err(Error::Argument(format!(
            "need n ≥ q + 2 = {} observations, got {}",
            q + 2,
            d.n()
        )));
    }
    let problem = Problem::new(d, m);
    let mcfg = cfg.mscale_config();
    let candidates = generate_candidates(&problem, cfg)?;
    let candidates_evaluated = candidates.len();

    let refined: Vec<Option<Refined>> = candidates
        .into_par_iter()
        .map(|c| c.and_then(|xi| refine_s(&problem, xi, cfg, &mcfg, cfg.refine_steps, false)))
        .collect();
    let mut ranked: Vec<(usize, Refined)> = refined
        .into_iter()
        .enumerate()
        .filter_map(|(i, r)| r.map(|r| (i, r)))
        .collect();
    if ranked.is_empty() {
        return Err(Error::Fit(
            "every elemental subsample was singular or non-finite".into(),
        ));
    }
    ranked.sort_by(|(ia, a), (ib, b)| better(a, *ia, b, *ib));
    ranked.truncate(cfg.n_best);

    let finals: Vec<(usize, Refined)> = ranked
        .into_par_iter()
        .filter_map(|(i, r)| {
            refine_s(&problem, r.xi, cfg, &mcfg, cfg.irwls_max_iter, true).map(|r| (i, r))
        })
        .collect();
    let (_, best) = finals
        .into_iter()
        .min_by(|(ia, a), (ib, b)| better(a, *ia, b, *ib))
        .ok_or_else(|| Error::Fit("refinement failed for every candidate".into()))?;

    let y_scale = d.y().iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let exact_fit = best.sigma <= EXACT_FIT_RTOL * y_scale;
    let xi = AugmentedParam::from_vector(&DVector::from_vec(best.xi));
    Ok(SFit {
        xi,
        sigma: if exact_fit { 0.0 } else { best.sigma },
        exact_fit,
        converged: best.converged,
        iterations: best.iterations,
        candidates_evaluated,
    })
}

/// MM-estimate at fixed scale `sigma`, started from `start`.
pub fn fit_mm(
    d: &Dataset,
    m: &RegressionModel,
    cfg: &FitConfig,
    sigma: f64,
    start: &AugmentedParam,
) -> Result<MmFit> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Argument(format!(
            "MM stage needs a positive scale, got {sigma}"
        )));
    }
    check_dims(d, m, start)?;
    let problem = Problem::new(d, m);
    let n = d.n();
    let mut r = vec![0.0; n];
    let mut r_try = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut xi = start.to_vector().as_slice().to_vec();
    let mut obj = problem
        .rho_objective(&xi, &mut r, &cfg.rho1, sigma)
        .ok_or_else(|| Error::Domain("residuals at the MM start are not finite".into()))?;
    let mut trace = vec![obj];
    let mut iterations = 0;
    let mut capped = false;
    loop {
        if iterations >= cfg.irwls_max_iter {
            capped = true;
            break;
        }
        iterations += 1;
        for i in 0..n {
            w[i] = cfg.rho1.weight(r[i] / sigma);
        }
        let Some(step) = problem.wls_step(&xi, &r, &w) else {
            break;
        };
        let mut factor = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = problem.apply(&xi, &step, factor);
            if let Some(o) = problem.rho_objective(&cand, &mut r_try, &cfg.rho1, sigma) {
                if o <= obj {
                    accepted = Some((cand, o));
                    break;
                }
            }
            factor *= 0.5;
        }
        let Some((cand, o)) = accepted else {
            break;
        };
        let moved = norm(&cand.iter().zip(&xi).map(|(a, b)| a - b).collect::<Vec<_>>());
        xi = cand;
        obj = o;
        std::mem::swap(&mut r, &mut r_try);
        trace.push(obj);
        if moved <= cfg.irwls_tol * (norm(&xi) + sigma) {
            break;
        }
    }
    let mut score = problem.score_norm(&xi, &r, &cfg.rho1, sigma);
    for _ in 0..NEWTON_POLISH_STEPS {
        let Some(step) = problem.newton_step(&xi, &r, &cfg.rho1, sigma) else {
            break;
        };
        let cand = problem.apply(&xi, &step, 1.0);
        let Some(o) = problem.rho_objective(&cand, &mut r_try, &cfg.rho1, sigma) else {
            break;
        };
        let cand_score = problem.score_norm(&cand, &r_try, &cfg.rho1, sigma);
        if o > obj || cand_score >= score {
            break;
        }
        xi = cand;
        obj = o;
        score = cand_score;
        std::mem::swap(&mut r, &mut r_try);
        trace.push(obj);
    }
    if capped && score > EQUATION_TOL {
        return Err(Error::IterationCap {
            stage: "MM",
            iterations,
            last: xi,
        });
    }
    Ok(MmFit {
        xi: AugmentedParam::from_vector(&DVector::from_vec(xi)),
        objective: obj,
        iterations,
        trace,
    })
}

/// Sup-norms of the estimating equations at `(ξ_S, ξ_MM, σ)`.
pub fn equation_residuals(
    d: &Dataset,
    m: &RegressionModel,
    cfg: &FitConfig,
    xi_s: &AugmentedParam,
    xi_mm: &AugmentedParam,
    sigma: f64,
) -> Result<EquationResiduals> {
    let problem = Problem::new(d, m);
    let n = d.n();
    let q1 = m.q() + 1;
    let (vs, vmm) = (xi_s.to_vector(), xi_mm.to_vector());
    let (vs, vmm) = (vs.as_slice(), vmm.as_slice());
    let mut rs = vec![0.0; n];
    let mut rmm = vec![0.0; n];
    if !problem.residuals(vs, &mut rs) || !problem.residuals(vmm, &mut rmm) {
        return Err(Error::Domain("non-finite residuals at θ̂".into()));
    }
    let mut sum_s = vec![0.0; q1];
    let mut sum_mm = vec![0.0; q1];
    let mut sum_rho = 0.0;
    let mut row = vec![0.0; q1];
    for i in 0..n {
        let ts = rs[i] / sigma;
        let tmm = rmm[i] / sigma;
        problem.jacobian_row(i, vs, &mut row);
        let ps = cfg.rho0.psi(ts);
        sum_s.iter_mut().zip(&row).for_each(|(s, g)| *s += ps * g);
        problem.jacobian_row(i, vmm, &mut row);
        let pm = cfg.rho1.psi(tmm);
        sum_mm.iter_mut().zip(&row).for_each(|(s, g)| *s += pm * g);
        sum_rho += cfg.rho0.rho(ts);
    }
    let inf = |v: &[f64]| v.iter().fold(0.0_f64, |a, b| a.max((b / n as f64).abs()));
    Ok(EquationResiduals {
        mm: inf(&sum_mm),
        s: inf(&sum_s),
        scale: (sum_rho / n as f64 - cfg.delta).abs(),
    })
}

/// Joint S / MM fit.
pub fn fit(d: &Dataset, m: &RegressionModel, cfg: &FitConfig) -> Result<FitResult> {
    let s = fit_s(d, m, cfg)?;
    if s.exact_fit {
        let r = crate::model::residuals(d, m, &s.xi)?;
        let y_scale = d.y().iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let off = r
            .iter()
            .filter(|v| v.abs() > EXACT_FIT_RTOL * y_scale)
            .count();
        return Ok(FitResult {
            xi_mm: s.xi.clone(),
            xi_s: s.xi,
            sigma: 0.0,
            objective_s: 0.0,
            objective_mm: off as f64 / d.n() as f64,
            converged: StageFlags {
                s: s.converged,
                mm: true,
            },
            iterations: StageCounts {
                s: s.iterations,
                mm: 0,
            },
            candidates_evaluated: s.candidates_evaluated,
            exact_fit: true,
            equations: None,
            delta: cfg.delta,
        });
    }
    let mm = fit_mm(d, m, cfg, s.sigma, &s.xi)?;
    let equations = equation_residuals(d, m, cfg, &s.xi, &mm.xi, s.sigma)?;
    Ok(FitResult {
        xi_s: s.xi,
        xi_mm: mm.xi,
        sigma: s.sigma,
        objective_s: s.sigma,
        objective_mm: mm.objective,
        converged: StageFlags {
            s: s.converged,
            mm: true,
        },
        iterations: StageCounts {
            s: s.iterations,
            mm: mm.iterations,
        },
        candidates_evaluated: s.candidates_evaluated,
        exact_fit: false,
        equations: Some(equations),
        delta: cfg.delta,
    })
}

/// Location-only fit (`p = q = 0`, `ξ = α`).
pub fn fit_location(y: &[f64], cfg: &FitConfig) -> Result<FitResult> {
    if y.len() < 2 {
        return Err(Error::Argument(
            "location fit needs at least two observations".into(),
        ));
    }
    let d = Dataset::location(y)?;
    fit(&d, &location_model(), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{exp_model, linear_model, residuals};
    use crate::mscale::mscale_objective;
    use rand_distr::{Distribution, Normal};

    fn linear_data(n: usize, p: usize, seed: u64) -> (Dataset, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let beta: Vec<f64> = (0..p).map(|j| 1.0 + j as f64).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|x| {
                x.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + 0.5 + normal.sample(&mut rng)
            })
            .collect();
        (Dataset::from_rows(&rows, &y).unwrap(), beta)
    }

    #[test]
    fn exact_fit_recovers_parameters() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 * 0.5 - 2.0]).collect();
        let y: Vec<f64> = rows.iter().map(|x| 3.0 * x[0] - 1.0).collect();
        let d = Dataset::from_rows(&rows, &y).unwrap();
        let res = fit(&d, &linear_model(1).unwrap(), &FitConfig::default()).unwrap();
        assert!(res.exact_fit);
        assert_eq!(res.sigma, 0.0);
        assert!((res.xi_s.beta[0] - 3.0).abs() < 1e-10);
        assert!((res.xi_s.alpha + 1.0).abs() < 1e-10);
        assert_eq!(res.xi_mm, res.xi_s);
    }

    #[test]
    fn s_scale_below_truth() {
        let (d, beta) = linear_data(50, 1, 7);
        let m = linear_model(1).unwrap();
        let cfg = FitConfig::default();
        let s = fit_s(&d, &m, &cfg).unwrap();
        let r0 = residuals(&d, &m, &AugmentedParam::new(beta, 0.5)).unwrap();
        let s0 = mscale(r0.as_slice(), &cfg.rho0, &cfg.mscale_config()).unwrap();
        assert!(s.sigma <= s0 + 1e-12);
        let rs = residuals(&d, &m, &s.xi).unwrap();
        let direct = mscale(rs.as_slice(), &cfg.rho0, &cfg.mscale_config()).unwrap();
        assert!((direct - s.sigma).abs() <= 1e-12 * s.sigma);
    }

    #[test]
    fn objective_chain_and_certificate() {
        for seed in 0..5 {
            let (d, _) = linear_data(60, 2, seed);
            let m = linear_model(2).unwrap();
            let cfg = FitConfig {
                seed,
                ..FitConfig::default()
            };
            let res = fit(&d, &m, &cfg).unwrap();
            let rs = residuals(&d, &m, &res.xi_s).unwrap();
            let at_s = rs.iter().map(|r| cfg.rho1.rho(r / res.sigma)).sum::<f64>() / d.n() as f64;
            let scale_eq = mscale_objective(rs.as_slice(), &cfg.rho0, res.sigma).unwrap();
            assert!(res.objective_mm <= at_s + 1e-15);
            assert!(at_s <= scale_eq + 1e-15);
            assert!((scale_eq - cfg.delta).abs() < 1e-8);
            assert!(res.equations_satisfied(), "{:?}", res.equations);
        }
    }

    #[test]
    fn mm_descent_trace() {
        let (mut d, _) = linear_data(80, 2, 3);
        let mut y = d.y().clone();
        for i in 0..10 {
            y[i] += 25.0;
        }
        d = d.with_y(y).unwrap();
        let m = linear_model(2).unwrap();
        let cfg = FitConfig::default();
        let s = fit_s(&d, &m, &cfg).unwrap();
        let start = AugmentedParam::new(vec![0.0, 0.0], 0.0);
        let mm = fit_mm(&d, &m, &cfg, s.sigma, &start).unwrap();
        assert!(mm.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn mm_fixed_point_start() {
        let y = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        let d = Dataset::location(&y).unwrap();
        let cfg = FitConfig::default();
        let mm = fit_mm(
            &d,
            &location_model(),
            &cfg,
            1.0,
            &AugmentedParam::new(vec![], 0.0),
        )
        .unwrap();
        assert!(mm.iterations <= 1);
        assert!(mm.xi.alpha.abs() < 1e-14);
    }

    #[test]
    fn mm_rejects_bad_scale() {
        let d = Dataset::location(&[1.0, 2.0, 3.0]).unwrap();
        let cfg = FitConfig::default();
        let start = AugmentedParam::new(vec![], 0.0);
        assert!(matches!(
            fit_mm(&d, &location_model(), &cfg, 0.0, &start),
            Err(Error::Argument(_))
        ));
        assert!(fit_mm(&d, &location_model(), &cfg, -1.0, &start).is_err());
    }

    #[test]
    fn location_symmetric_and_constant() {
        let half = [0.1, 0.4, 0.45, 0.9, 1.3, 2.2, 0.05];
        let mut y: Vec<f64> = half.iter().map(|v| 3.0 + v).collect();
        y.extend(half.iter().map(|v| 3.0 - v));
        let res = fit_location(&y, &FitConfig::default()).unwrap();
        assert!((res.xi_s.alpha - 3.0).abs() < 1e-8);
        assert!((res.xi_mm.alpha - 3.0).abs() < 1e-8);

        let res = fit_location(&[4.5; 9], &FitConfig::default()).unwrap();
        assert!(res.exact_fit);
        assert_eq!(res.xi_mm.alpha, 4.5);
        assert!(fit_location(&[1.0], &FitConfig::default()).is_err());
    }

    #[test]
    fn mirrored_location_centres_at_zero() {
        let half = [0.3, 0.8, 1.1, 0.05, 2.0, 0.6];
        let y: Vec<f64> = half.iter().flat_map(|v| [*v, -*v]).collect();
        let res = fit_location(&y, &FitConfig::default()).unwrap();
        assert!(res.xi_s.alpha.abs() < 1e-9);
        assert!(res.xi_mm.alpha.abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        let mut cfg = FitConfig {
            delta: 1.0,
            ..FitConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
        cfg.delta = 0.5;
        cfg.rho1 = RhoFunction::bisquare(1.0).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config { ref key, .. }) if key == "rho1"));
    }

    #[test]
    fn too_few_observations() {
        let d = Dataset::from_rows(&[vec![1.0], vec![2.0]], &[1.0, 2.0]).unwrap();
        assert!(fit(&d, &linear_model(1).unwrap(), &FitConfig::default()).is_err());
    }

    #[test]
    fn exp_model_clean_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random_range(0.0..2.0)]).collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|x| 2.0 * (0.5 * x[0]).exp() + noise.sample(&mut rng))
            .collect();
        let d = Dataset::from_rows(&rows, &y).unwrap();
        let res = fit(&d, &exp_model(), &FitConfig::default()).unwrap();
        assert!((res.xi_mm.beta[0] - 2.0).abs() < 0.2, "{:?}", res.xi_mm);
        assert!((res.xi_mm.beta[1] - 0.5).abs() < 0.2, "{:?}", res.xi_mm);
        assert!(res.equations_satisfied(), "{:?}", res.equations);
    }
}
