//! Monte Carlo checks of the large-sample behaviour of the estimators.
//!
//! A [`SimScenario`] fixes the data-generating process, the fit settings and
//! the thresholds each claim is judged against. Replications draw from
//! per-replication ChaCha streams and write into slots indexed by replication,
//! so reports are identical for any thread count.

pub mod population;
pub mod quadrature;
pub mod scenario;

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

pub use population::{Design, ErrorLaw, Population};
pub use scenario::{Claim, ErrorKind, ModelKind, SimScenario};

use crate::error::{Error, Result};
use crate::estimators::{fit, FitConfig, FitResult};
use crate::inference::{asymptotic_cov, influence_joint, EstimatingSystem, JointParam};
use crate::model::{AugmentedParam, Dataset, RegressionModel};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Stream offset separating contamination draws from the other claims.
const CONTAMINATION_STREAM: u64 = 1 << 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClaimStatus {
    Pass,
    Fail,
    /// Too few successful replications to judge.
    Insufficient,
}

/// Summary of one claim at one sample size.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SampleSummary {
    pub n: usize,
    pub successes: usize,
    pub failures: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_error: Option<f64>,
    /// Ratio of median errors to the previous sample size, rescaled to a quadrupling of `n`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_remainder: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_leading: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub remainder_ratio: Option<f64>,
    /// Empirical covariance of `√n(ξ̂_MM − ξ₀)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empirical_cov: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_rel_errors: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qq_correlations: Option<Vec<f64>>,
    /// Trace of the LS covariance over trace of the MM covariance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empirical_efficiency: Option<f64>,
}

/// Contamination sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub epsilon: f64,
    pub magnitude: f64,
    pub failures: usize,
    pub median_deviation: f64,
    pub max_deviation: f64,
    /// Largest deviation in units of the clean-data standard error.
    pub max_se_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClaimReport {
    pub claim: Claim,
    pub status: ClaimStatus,
    pub reason: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub per_n: Vec<SampleSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepCell>,
}

/// One row of the per-replication CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub kind: &'static str,
    pub n: usize,
    pub replication: usize,
    pub epsilon: Option<f64>,
    pub magnitude: Option<f64>,
    pub sigma: Option<f64>,
    pub xi_s: Vec<f64>,
    pub xi_mm: Vec<f64>,
    pub remainder_norm: Option<f64>,
    pub leading_norm: Option<f64>,
    pub deviation: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub replications: usize,
    pub error_law: ErrorLaw,
    pub design: Design,
    /// The error law is not strongly unimodal.
    pub hypotheses_violated: bool,
    pub population: Population,
    pub claims: Vec<ClaimReport>,
    #[serde(skip)]
    pub records: Vec<ReplicationRecord>,
}

impl SimReport {
    /// No claim failed. Insufficient claims do not count as failures.
    pub fn passed(&self) -> bool {
        self.claims.iter().all(|c| c.status != ClaimStatus::Fail)
    }

    pub fn claim(&self, c: Claim) -> Option<&ClaimReport> {
        self.claims.iter().find(|r| r.claim == c)
    }

    /// Writes the per-replication records as comma-separated values.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let width = self
            .records
            .iter()
            .map(|r| r.xi_mm.len().max(r.xi_s.len()))
            .max()
            .unwrap_or(0);
        let mut header = vec![
            "kind".to_string(),
            "n".into(),
            "replication".into(),
            "epsilon".into(),
            "magnitude".into(),
        ];
        header.push("sigma".into());
        header.extend((0..width).map(|j| format!("xi_s_{j}")));
        header.extend((0..width).map(|j| format!("xi_mm_{j}")));
        header.extend(["remainder_norm", "leading_norm", "deviation", "error"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            let mut cells = vec![
                r.kind.to_string(),
                r.n.to_string(),
                r.replication.to_string(),
                opt(r.epsilon),
                opt(r.magnitude),
                opt(r.sigma),
            ];
            for v in [&r.xi_s, &r.xi_mm] {
                cells.extend(
                    (0..width).map(|j| v.get(j).map(|x| x.to_string()).unwrap_or_default()),
                );
            }
            cells.push(opt(r.remainder_norm));
            cells.push(opt(r.leading_norm));
            cells.push(opt(r.deviation));
            cells.push(
                r.error
                    .as_deref()
                    .map(|e| e.replace([',', '\n'], ";"))
                    .unwrap_or_default(),
            );
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// A successful replication.
#[derive(Debug, Clone)]
struct RepFit {
    theta_hat: DVector<f64>,
    sigma: f64,
    xi_s: AugmentedParam,
    xi_mm: AugmentedParam,
    /// `√n mean I(zᵢ)` at the population parameter.
    leading: DVector<f64>,
    ls: Option<DVector<f64>>,
}

type RepOutcome = std::result::Result<RepFit, String>;

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Least squares on `[x, 1]`.
fn least_squares(d: &Dataset) -> Option<DVector<f64>> {
    let (n, p) = (d.n(), d.p());
    let mut z = DMatrix::from_element(n, p + 1, 1.0);
    z.view_mut((0, 0), (n, p)).copy_from(d.x());
    let chol = (z.transpose() * &z).cholesky()?;
    Some(chol.solve(&(z.transpose() * d.y())))
}

fn covariance(rows: &[DVector<f64>]) -> DMatrix<f64> {
    let m = rows[0].len();
    let r = rows.len() as f64;
    let mean = rows.iter().fold(DVector::zeros(m), |a, v| a + v) / r;
    rows.iter().fold(DMatrix::zeros(m, m), |a, v| {
        let c = v - &mean;
        a + &c * c.transpose()
    }) / (r - 1.0)
}

/// Correlation between sorted values and Blom normal scores.
fn qq_correlation(values: &[f64]) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    let normal = Normal::standard();
    let q: Vec<f64> = (0..s.len())
        .map(|i| normal.inverse_cdf((i as f64 + 1.0 - 0.375) / (n + 0.25)))
        .collect();
    let ms = s.iter().sum::<f64>() / n;
    let mq = q.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in s.iter().zip(&q) {
        sxy += (a - ms) * (b - mq);
        sxx += (a - ms) * (a - ms);
        syy += (b - mq) * (b - mq);
    }
    sxy / (sxx * syy).sqrt()
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Scenario together with its population parameter and cached replications.
pub struct Simulation {
    scenario: SimScenario,
    law: ErrorLaw,
    design: Design,
    model: RegressionModel,
    cfg: FitConfig,
    sys: EstimatingSystem,
    population: Population,
    theta0: JointParam,
    cache: BTreeMap<usize, Vec<RepOutcome>>,
    records: Vec<ReplicationRecord>,
}

impl Simulation {
    pub fn new(scenario: &SimScenario) -> Result<Self> {
        scenario.validate()?;
        let law = scenario.error_law();
        let design = scenario.design();
        let model = scenario.regression_model()?;
        let cfg = scenario.fit_config()?;
        let beta0 = scenario.beta0.clone();
        let gm = model.clone();
        let population = Population::compute(
            &law,
            &design,
            model.q(),
            move |x| gm.grad(x, &beta0),
            &cfg.rho0,
            &cfg.rho1,
            cfg.delta,
        )?;
        let theta0 = JointParam {
            xi_s: AugmentedParam::new(scenario.beta0.clone(), population.alpha00),
            xi_mm: AugmentedParam::new(scenario.beta0.clone(), population.alpha01),
            sigma: population.sigma0,
        };
        let sys = EstimatingSystem::new(model.clone(), &cfg);
        Ok(Self {
            scenario: scenario.clone(),
            law,
            design,
            model,
            cfg,
            sys,
            population,
            theta0,
            cache: BTreeMap::new(),
            records: Vec::new(),
        })
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.scenario.seed);
        rng.set_stream(stream);
        rng
    }

    /// Draws a sample of size `n`; returns it with the seed for the fit's subsampling.
    fn sample(&self, n: usize, stream: u64) -> Result<(Dataset, u64)> {
        let mut rng = self.rng(stream);
        let beta0 = &self.scenario.beta0;
        let mut rows = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let x = self.design.sample(&mut rng);
            let u = self.law.sample(&mut rng);
            y.push(self.model.eval(&x, beta0) + u);
            rows.push(x);
        }
        let d = if self.design.p() == 0 {
            Dataset::location(&y)?
        } else {
            Dataset::from_rows(&rows, &y)?
        };
        Ok((d, rng.next_u64()))
    }

    fn fit_with_seed(&self, d: &Dataset, seed: u64) -> Result<FitResult> {
        let cfg = FitConfig {
            seed,
            ..self.cfg.clone()
        };
        let f = fit(d, &self.model, &cfg)?;
        if f.exact_fit {
            return Err(Error::Fit("exact fit".into()));
        }
        if !(f.converged.s && f.converged.mm) {
            return Err(Error::Fit("not converged".into()));
        }
        Ok(f)
    }

    fn replicate(&self, n: usize, r: usize) -> RepOutcome {
        let run = || -> Result<RepFit> {
            let (d, seed) = self.sample(n, ((n as u64) << 32) | r as u64)?;
            let f = self.fit_with_seed(&d, seed)?;
            let mut sum = DVector::zeros(self.theta0.dim());
            for i in 0..n {
                sum += influence_joint(
                    &self.sys,
                    &d.row(i),
                    d.y()[i],
                    &self.theta0,
                    &self.population.constants,
                )?;
            }
            let theta_hat = JointParam::from_fit(&f).to_vector();
            let ls = if self.model.is_linear() {
                least_squares(&d)
            } else {
                None
            };
            Ok(RepFit {
                theta_hat,
                sigma: f.sigma,
                xi_s: f.xi_s,
                xi_mm: f.xi_mm,
                leading: sum / (n as f64).sqrt(),
                ls,
            })
        };
        run().map_err(|e| e.to_string())
    }

    fn ensure(&mut self, n: usize) {
        if self.cache.contains_key(&n) {
            return;
        }
        let reps: Vec<RepOutcome> = (0..self.scenario.replications)
            .into_par_iter()
            .map(|r| self.replicate(n, r))
            .collect();
        let theta0 = self.theta0.to_vector();
        for (r, out) in reps.iter().enumerate() {
            let rec = match out {
                Ok(f) => {
                    let scaled = (&f.theta_hat - &theta0) * (n as f64).sqrt();
                    ReplicationRecord {
                        kind: "fit",
                        n,
                        replication: r,
                        epsilon: None,
                        magnitude: None,
                        sigma: Some(f.sigma),
                        xi_s: f.xi_s.to_vector().iter().copied().collect(),
                        xi_mm: f.xi_mm.to_vector().iter().copied().collect(),
                        remainder_norm: Some((&scaled - &f.leading).norm()),
                        leading_norm: Some(scaled.norm()),
                        deviation: None,
                        error: None,
                    }
                }
                Err(e) => ReplicationRecord {
                    kind: "fit",
                    n,
                    replication: r,
                    epsilon: None,
                    magnitude: None,
                    sigma: None,
                    xi_s: vec![],
                    xi_mm: vec![],
                    remainder_norm: None,
                    leading_norm: None,
                    deviation: None,
                    error: Some(e.clone()),
                },
            };
            self.records.push(rec);
        }
        self.cache.insert(n, reps);
    }

    fn successes(&self, n: usize) -> (Vec<&RepFit>, usize) {
        let reps = &self.cache[&n];
        let ok: Vec<&RepFit> = reps.iter().filter_map(|r| r.as_ref().ok()).collect();
        let failures = reps.len() - ok.len();
        (ok, failures)
    }

    fn too_many_failures(&self, failures: usize) -> bool {
        failures as f64 > self.scenario.max_failure_fraction * self.scenario.replications as f64
    }

    /// Slopes of the MM block, or the location for the location model.
    fn target_error(&self, f: &RepFit) -> f64 {
        let q = self.theta0.q();
        if q == 0 {
            (f.xi_mm.alpha - self.theta0.xi_mm.alpha).abs()
        } else {
            (&f.xi_mm.beta - &self.theta0.xi_mm.beta).norm()
        }
    }

    pub fn consistency(&mut self) -> ClaimReport {
        let sizes = self.scenario.sample_sizes.clone();
        let mut per_n = Vec::new();
        let mut problems = Vec::new();
        let mut insufficient = false;
        let mut prev: Option<(usize, f64)> = None;
        for &n in &sizes {
            self.ensure(n);
            let (ok, failures) = self.successes(n);
            let mut s = SampleSummary {
                n,
                successes: ok.len(),
                failures,
                ..Default::default()
            };
            if self.too_many_failures(failures) {
                problems.push(format!("n={n}: {failures} failed fits"));
            }
            if ok.len() < 2 {
                insufficient = true;
            } else {
                let errs: Vec<f64> = ok.iter().map(|f| self.target_error(f)).collect();
                let med = median(&errs);
                s.median_error = Some(med);
                if let Some((pn, pmed)) = prev {
                    let raw = med / pmed;
                    let ratio = raw.powf(4f64.ln() / (n as f64 / pn as f64).ln());
                    s.error_ratio = Some(ratio);
                    if !(ratio >= self.scenario.consistency_ratio_min
                        && ratio <= self.scenario.consistency_ratio_max)
                    {
                        problems.push(format!("n={pn}→{n}: ratio {ratio:.4} outside range"));
                    }
                }
                prev = Some((n, med));
            }
            per_n.push(s);
        }
        finish(Claim::Consistency, per_n, vec![], problems, insufficient)
    }

    pub fn expansion(&mut self) -> ClaimReport {
        let sizes = self.scenario.sample_sizes.clone();
        let theta0 = self.theta0.to_vector();
        let mut per_n = Vec::new();
        let mut problems = Vec::new();
        let insufficient = self.scenario.replications < 2;
        let mut prev: Option<f64> = None;
        for &n in &sizes {
            self.ensure(n);
            let (ok, failures) = self.successes(n);
            let mut s = SampleSummary {
                n,
                successes: ok.len(),
                failures,
                ..Default::default()
            };
            if self.too_many_failures(failures) {
                problems.push(format!("n={n}: {failures} failed fits"));
            }
            if !ok.is_empty() {
                let rn = (n as f64).sqrt();
                let (rem, lead): (Vec<f64>, Vec<f64>) = ok
                    .iter()
                    .map(|f| {
                        let scaled = (&f.theta_hat - &theta0) * rn;
                        ((&scaled - &f.leading).norm(), scaled.norm())
                    })
                    .unzip();
                let (mr, ml) = (median(&rem), median(&lead));
                s.median_remainder = Some(mr);
                s.median_leading = Some(ml);
                s.remainder_ratio = Some(mr / ml);
                if let Some(p) = prev {
                    if !(mr < p) {
                        problems.push(format!("n={n}: median remainder {mr:.4e} did not decrease"));
                    }
                }
                prev = Some(mr);
            }
            per_n.push(s);
        }
        if let Some(ratio) = per_n.last().and_then(|s| s.remainder_ratio) {
            if !(ratio < self.scenario.expansion_ratio_max) {
                problems.push(format!("remainder ratio {ratio:.4} at the largest n"));
            }
        }
        finish(Claim::Expansion, per_n, vec![], problems, insufficient)
    }

    pub fn normality(&mut self) -> ClaimReport {
        let sizes = self.scenario.sample_sizes.clone();
        let q = self.theta0.q();
        let xi0 = self.theta0.xi_mm.to_vector();
        let v = self.population.v.clone();
        let mut per_n = Vec::new();
        let mut problems = Vec::new();
        let mut insufficient = false;
        for &n in &sizes {
            self.ensure(n);
            let (ok, failures) = self.successes(n);
            let mut s = SampleSummary {
                n,
                successes: ok.len(),
                failures,
                ..Default::default()
            };
            if self.too_many_failures(failures) {
                problems.push(format!("n={n}: {failures} failed fits"));
            }
            if ok.len() < 3 {
                insufficient = true;
                per_n.push(s);
                continue;
            }
            let rn = (n as f64).sqrt();
            let z: Vec<DVector<f64>> = ok
                .iter()
                .map(|f| (f.xi_mm.to_vector() - &xi0) * rn)
                .collect();
            let cov = covariance(&z);
            let rel: Vec<f64> = (0..=q)
                .map(|j| (cov[(j, j)] - v[(j, j)]).abs() / v[(j, j)])
                .collect();
            for (j, r) in rel.iter().enumerate() {
                if !(*r <= self.scenario.variance_rel_tol) {
                    problems.push(format!(
                        "n={n}: variance of coordinate {j} off by {:.1}%",
                        100.0 * r
                    ));
                }
            }
            let qq: Vec<f64> = (0..=q)
                .map(|j| qq_correlation(&z.iter().map(|v| v[j]).collect::<Vec<_>>()))
                .collect();
            for (j, c) in qq.iter().enumerate() {
                if !(*c >= self.scenario.qq_correlation_min) {
                    problems.push(format!("n={n}: QQ correlation {c:.4} for coordinate {j}"));
                }
            }
            if let Some(target) = self.scenario.efficiency_target {
                let ls: Vec<DVector<f64>> = ok
                    .iter()
                    .filter_map(|f| f.ls.as_ref().map(|b| (b - &xi0) * rn))
                    .collect();
                if ls.len() == ok.len() {
                    let eff = covariance(&ls).trace() / cov.trace();
                    s.empirical_efficiency = Some(eff);
                    if !((eff - target).abs() <= self.scenario.efficiency_tol) {
                        problems.push(format!("n={n}: empirical efficiency {eff:.4}"));
                    }
                } else {
                    problems.push("efficiency needs a linear model".into());
                }
                match self.population.ls_efficiency {
                    Some(e) if (e - target).abs() <= self.scenario.efficiency_tol => {}
                    Some(e) => problems.push(format!("population efficiency {e:.4}")),
                    None => problems.push("efficiency target needs a symmetric error law".into()),
                }
            }
            s.empirical_cov = Some(matrix_rows(&cov));
            s.variance_rel_errors = Some(rel);
            s.qq_correlations = Some(qq);
            per_n.push(s);
        }
        finish(Claim::Normality, per_n, vec![], problems, insufficient)
    }

    pub fn contamination(&mut self) -> ClaimReport {
        let sc = self.scenario.clone();
        let n = sc.sample_sizes[0];
        let q = self.theta0.q();
        let cells: Vec<(f64, f64)> = sc
            .contamination_fractions
            .iter()
            .flat_map(|&e| sc.contamination_magnitudes.iter().map(move |&m| (e, m)))
            .collect();

        let target = |xi: &AugmentedParam| -> DVector<f64> {
            if q == 0 {
                DVector::from_element(1, xi.alpha)
            } else {
                xi.beta.clone()
            }
        };
        type Cell = std::result::Result<(f64, f64, Vec<f64>), String>;
        let run = |r: usize| -> std::result::Result<Vec<Cell>, String> {
            let (clean, seed) = self
                .sample(n, CONTAMINATION_STREAM | ((n as u64) << 32) | r as u64)
                .map_err(|e| e.to_string())?;
            let f = self
                .fit_with_seed(&clean, seed)
                .map_err(|e| e.to_string())?;
            let inf = asymptotic_cov(&clean, &f, &self.sys, false).map_err(|e| e.to_string())?;
            let se = if q == 0 {
                inf.std_errors[0]
            } else {
                inf.std_errors.rows(0, q).norm()
            };
            let base = target(&f.xi_mm);
            let out = cells
                .iter()
                .map(|&(eps, mag)| {
                    let k = (eps * n as f64).floor() as usize;
                    let mut x = clean.x().clone();
                    let mut y = clean.y().clone();
                    for i in 0..k {
                        y[i] = mag;
                        if let Some(lev) = sc.contamination_leverage {
                            x.row_mut(i).fill(lev);
                        }
                    }
                    let d = Dataset::new(x, y).map_err(|e| e.to_string())?;
                    let g = self.fit_with_seed(&d, seed).map_err(|e| e.to_string())?;
                    let dev = (target(&g.xi_mm) - &base).norm();
                    Ok((dev, dev / se, g.xi_mm.to_vector().iter().copied().collect()))
                })
                .collect();
            Ok(out)
        };
        let results: Vec<std::result::Result<Vec<Cell>, String>> =
            (0..sc.replications).into_par_iter().map(run).collect();

        let mut problems = Vec::new();
        let mut clean_failures = 0;
        let mut sweep = Vec::new();
        for (c, &(eps, mag)) in cells.iter().enumerate() {
            let mut devs = Vec::new();
            let mut ratios = Vec::new();
            let mut failures = 0;
            for (r, res) in results.iter().enumerate() {
                let rec =
                    |dev: Option<f64>, xi: Vec<f64>, error: Option<String>| ReplicationRecord {
                        kind: "contamination",
                        n,
                        replication: r,
                        epsilon: Some(eps),
                        magnitude: Some(mag),
                        sigma: None,
                        xi_s: vec![],
                        xi_mm: xi,
                        remainder_norm: None,
                        leading_norm: None,
                        deviation: dev,
                        error,
                    };
                match res {
                    Ok(v) => match &v[c] {
                        Ok((dev, ratio, xi)) => {
                            devs.push(*dev);
                            ratios.push(*ratio);
                            self.records.push(rec(Some(*dev), xi.clone(), None));
                        }
                        Err(e) => {
                            failures += 1;
                            self.records.push(rec(None, vec![], Some(e.clone())));
                        }
                    },
                    Err(e) => {
                        if c == 0 {
                            clean_failures += 1;
                        }
                        self.records
                            .push(rec(None, vec![], Some(format!("clean fit: {e}"))));
                    }
                }
            }
            let cell = SweepCell {
                epsilon: eps,
                magnitude: mag,
                failures,
                median_deviation: if devs.is_empty() {
                    f64::NAN
                } else {
                    median(&devs)
                },
                max_deviation: devs.iter().copied().fold(0.0, f64::max),
                max_se_ratio: ratios.iter().copied().fold(0.0, f64::max),
            };
            if self.too_many_failures(failures + clean_failures) {
                problems.push(format!(
                    "ε={eps}, magnitude {mag:e}: {} failed fits",
                    failures + clean_failures
                ));
            }
            if !(cell.max_se_ratio <= sc.deviation_se_multiple) {
                problems.push(format!(
                    "ε={eps}, magnitude {mag:e}: deviation {:.3} standard errors",
                    cell.max_se_ratio
                ));
            }
            if eps == 0.0 && cell.max_deviation != 0.0 {
                problems.push("ε=0 changed the estimate".into());
            }
            sweep.push(cell);
        }
        for eps in &sc.contamination_fractions {
            let row: Vec<&SweepCell> = sweep.iter().filter(|c| c.epsilon == *eps).collect();
            for w in row.windows(2) {
                if w[0].magnitude >= sc.magnitude_growth_from
                    && !(w[1].max_deviation <= sc.magnitude_growth_max * w[0].max_deviation)
                {
                    problems.push(format!(
                        "ε={eps}: deviation grew from {:.4e} to {:.4e} between magnitudes {:e} and {:e}",
                        w[0].max_deviation, w[1].max_deviation, w[0].magnitude, w[1].magnitude
                    ));
                }
            }
        }
        let insufficient = results.iter().all(|r| r.is_err());
        finish(Claim::Contamination, vec![], sweep, problems, insufficient)
    }

    pub fn run(&mut self, claim: Claim) -> ClaimReport {
        match claim {
            Claim::Consistency => self.consistency(),
            Claim::Expansion => self.expansion(),
            Claim::Normality => self.normality(),
            Claim::Contamination => self.contamination(),
        }
    }

    pub fn into_report(self, claims: Vec<ClaimReport>) -> SimReport {
        let mut records = self.records;
        records.sort_by(|a, b| {
            (a.kind, a.n, a.replication)
                .cmp(&(b.kind, b.n, b.replication))
                .then(
                    a.epsilon
                        .unwrap_or(0.0)
                        .total_cmp(&b.epsilon.unwrap_or(0.0)),
                )
                .then(
                    a.magnitude
                        .unwrap_or(0.0)
                        .total_cmp(&b.magnitude.unwrap_or(0.0)),
                )
        });
        SimReport {
            schema_version: REPORT_SCHEMA_VERSION,
            scenario: self.scenario.name.clone(),
            seed: self.scenario.seed,
            replications: self.scenario.replications,
            error_law: self.law,
            design: self.design,
            hypotheses_violated: !self.law.is_strongly_unimodal(),
            population: self.population,
            claims,
            records,
        }
    }
}

fn finish(
    claim: Claim,
    per_n: Vec<SampleSummary>,
    sweep: Vec<SweepCell>,
    problems: Vec<String>,
    insufficient: bool,
) -> ClaimReport {
    let (status, reason) = if insufficient {
        (
            ClaimStatus::Insufficient,
            "too few successful replications".to_string(),
        )
    } else if problems.is_empty() {
        (ClaimStatus::Pass, "ok".to_string())
    } else {
        (ClaimStatus::Fail, problems.join("; "))
    };
    ClaimReport {
        claim,
        status,
        reason,
        per_n,
        sweep,
    }
}

/// Runs every claim listed in the scenario.
pub fn run_scenario(s: &SimScenario) -> Result<SimReport> {
    let mut sim = Simulation::new(s)?;
    let mut claims = s.claims.clone();
    claims.sort();
    claims.dedup();
    let reports = claims.into_iter().map(|c| sim.run(c)).collect();
    Ok(sim.into_report(reports))
}

fn run_single(s: &SimScenario, claim: Claim) -> Result<SimReport> {
    let mut s = s.clone();
    s.claims = vec![claim];
    run_scenario(&s)
}

/// Median error of the MM slopes shrinks like `n^{-1/2}`.
pub fn run_consistency(s: &SimScenario) -> Result<SimReport> {
    run_single(s, Claim::Consistency)
}

/// `√n(θ̂ − θ₀) − √n mean I(zᵢ)` is small next to `√n(θ̂ − θ₀)` and shrinks with `n`.
pub fn run_expansion_check(s: &SimScenario) -> Result<SimReport> {
    run_single(s, Claim::Expansion)
}

/// Empirical covariance of `√n(ξ̂_MM − ξ₀)` matches the population `V`.
pub fn run_normality(s: &SimScenario) -> Result<SimReport> {
    run_single(s, Claim::Normality)
}

/// MM slopes stay bounded under a sweep of outlier fractions and magnitudes.
pub fn run_contamination(s: &SimScenario) -> Result<SimReport> {
    run_single(s, Claim::Contamination)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians_and_qq() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let normal = Normal::standard();
        let v: Vec<f64> = (0..500)
            .map(|i| normal.inverse_cdf((i as f64 + 0.5) / 500.0))
            .collect();
        assert!(qq_correlation(&v) > 0.999);
        let skewed: Vec<f64> = (0..500).map(|i| ((i as f64 + 0.5) / 500.0).ln()).collect();
        assert!(qq_correlation(&skewed) < 0.95);
    }
}
