//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, Normal, StandardNormal};

use robustmm::inference::{
    influence_generic, influence_joint, influence_location, psi_stack, EstimatingSystem,
    InferenceConstants, JointParam,
};
use robustmm::montecarlo::{run_scenario, Claim, ClaimStatus, SimScenario};
use robustmm::rho::verify_r1;
use robustmm::{
    exp_model, fit, linear_model, location_model, mscale, Dataset, FitConfig, MScaleConfig,
    RegressionModel, RhoFunction,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

// 1 ---------------------------------------------------------------------------

fn mscale_certificate() -> Outcome {
    let rho0 = RhoFunction::bisquare(1.547).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_cert, mut worst_equiv, mut positive) = (0.0_f64, 0.0_f64, 0);
    for case in 0..1000 {
        let n = rng.random_range(5..=500);
        let delta = if case % 2 == 0 {
            0.5
        } else {
            rng.random_range(0.1..0.9)
        };
        let spread = 10f64.powf(rng.random_range(-3.0..3.0));
        let zero_frac = if case % 5 == 0 {
            rng.random_range(0.0..0.8)
        } else {
            0.0
        };
        let r: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random::<f64>() < zero_frac {
                    0.0
                } else if case % 3 == 0 {
                    spread * Cauchy::new(0.0, 1.0).unwrap().sample(&mut rng)
                } else {
                    spread * rng.sample::<f64, _>(StandardNormal)
                }
            })
            .collect();
        let cfg = MScaleConfig::with_delta(delta);
        let s = mscale(&r, &rho0, &cfg).map_err(|e| format!("case {case}: {e}"))?;
        if s > 0.0 {
            positive += 1;
            let m = r.iter().map(|v| rho0.rho(v / s)).sum::<f64>() / n as f64;
            worst_cert = worst_cert.max((m - delta).abs());
        } else {
            let nonzero = r.iter().filter(|v| **v != 0.0).count();
            ensure(nonzero as f64 <= delta * n as f64 + 1e-9, || {
                format!("case {case}: σ̂ = 0 with {nonzero} nonzero")
            })?;
        }
        let c = if case % 2 == 0 {
            rng.random_range(0.01..100.0)
        } else {
            -rng.random_range(0.01..100.0)
        };
        let scaled: Vec<f64> = r.iter().map(|v| c * v).collect();
        let sc = mscale(&scaled, &rho0, &cfg).map_err(|e| e.to_string())?;
        if s > 0.0 {
            worst_equiv = worst_equiv.max(rel(sc, c.abs() * s));
        } else {
            ensure(sc == 0.0, || format!("case {case}: scaled σ̂ = {sc}"))?;
        }
    }
    ensure(worst_cert <= 1e-10, || {
        format!("certificate {worst_cert:e}")
    })?;
    ensure(worst_equiv <= 1e-12, || {
        format!("equivariance {worst_equiv:e}")
    })?;
    Ok(format!("{positive} positive scales, max |mean ρ − δ| = {worst_cert:.2e}, max equivariance error = {worst_equiv:.2e}"))
}

// 2 ---------------------------------------------------------------------------

fn derivative_chain() -> Outcome {
    let mut worst = (0.0_f64, 0.0_f64);
    for k in [1.547, 4.685] {
        let f = RhoFunction::bisquare(k).unwrap();
        ensure(verify_r1(&f, 10_001), || format!("R1 fails for k = {k}"))?;
        let m = 10_000;
        for i in 0..m {
            let t = -2.0 * k + 4.0 * k * (i as f64 + 0.5) / m as f64;
            let h = 1e-6;
            let d_rho = (f.rho(t + h) - f.rho(t - h)) / (2.0 * h);
            let d_psi = (f.psi(t + h) - f.psi(t - h)) / (2.0 * h);
            worst.0 = worst.0.max((f.psi(t) - d_rho).abs());
            worst.1 = worst.1.max((f.psi_prime(t) - d_psi).abs());
        }
    }
    ensure(worst.0 <= 1e-7, || format!("ψ vs FD(ρ): {:e}", worst.0))?;
    ensure(worst.1 <= 1e-6, || format!("ψ' vs FD(ψ): {:e}", worst.1))?;
    Ok(format!(
        "max |ψ − FD ρ| = {:.2e}, max |ψ' − FD ψ| = {:.2e}, R1 holds for both k",
        worst.0, worst.1
    ))
}

// 3 ---------------------------------------------------------------------------

fn random_linear(rng: &mut ChaCha8Rng, n: usize, p: usize, outliers: f64) -> Dataset {
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
    let alpha = rng.random_range(-2.0..2.0);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let mut v = alpha
            + x.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>()
            + rng.sample::<f64, _>(StandardNormal);
        if rng.random::<f64>() < outliers {
            v += rng.random_range(10.0..50.0);
        }
        rows.push(x);
        y.push(v);
    }
    Dataset::from_rows(&rows, &y).unwrap()
}

fn equation_certificate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut converged, mut worst) = (0, 0.0_f64);
    for inst in 0..100 {
        let n = rng.random_range(20..=200);
        let p = rng.random_range(1..=4);
        let d = random_linear(&mut rng, n, p, if inst % 2 == 0 { 0.0 } else { 0.2 });
        let model = linear_model(p).unwrap();
        let cfg = FitConfig {
            seed: inst,
            ..FitConfig::default()
        };
        let Ok(f) = fit(&d, &model, &cfg) else {
            continue;
        };
        if !(f.converged.s && f.converged.mm) || f.exact_fit {
            continue;
        }
        converged += 1;
        let sys = EstimatingSystem::new(model, &cfg);
        let theta = JointParam::from_fit(&f);
        let mut mean = DVector::zeros(theta.dim());
        for i in 0..n {
            mean += psi_stack(&sys, &d.row(i), d.y()[i], &theta).map_err(|e| e.to_string())?;
        }
        mean /= n as f64;
        let sup = mean.amax();
        ensure(sup <= 1e-6, || {
            format!("instance {inst}: ‖mean Ψ‖∞ = {sup:e}")
        })?;
        worst = worst.max(sup);
    }
    ensure(converged > 0, || "no converged fits".into())?;
    Ok(format!(
        "{converged}/100 converged fits, max ‖mean Ψ‖∞ = {worst:.2e}"
    ))
}

// 4 ---------------------------------------------------------------------------

fn synthetic_constants(rng: &mut ChaCha8Rng, q: usize) -> InferenceConstants {
    let b0 = DVector::from_fn(q, |_, _| rng.random_range(-2.0..2.0));
    let l = DMatrix::from_fn(q, q, |_, _| rng.random_range(-1.0..1.0));
    let a0 = &l * l.transpose() + DMatrix::identity(q, q) * 0.2;
    let sign = |rng: &mut ChaCha8Rng| if rng.random::<bool>() { 1.0 } else { -1.0 };
    let a00 = sign(rng) * rng.random_range(0.2..2.0);
    let a01 = sign(rng) * rng.random_range(0.2..2.0);
    InferenceConstants::new(
        a00,
        a01,
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(0.1..2.0),
        b0,
        a0,
        rng.random_range(0.2..5.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    )
    .unwrap()
}

fn closed_form_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = [0.0_f64; 3];
    for set in 0..50 {
        let q = set % 6;
        let c = synthetic_constants(&mut rng, q);
        let m = q + 1;
        let d0 = c.closed_form_d0();
        let det = d0.determinant();
        // |D₀| = (−1/σ₀)^{2q+3} a₀₀^{q+1} a₀₁^{q+1} d₀ |C₀|²
        let c0_det = c.c0.determinant();
        let formula = (-1.0 / c.sigma0).powi(2 * m as i32 + 1)
            * (c.a00 * c.a01).powi(m as i32)
            * c.d0
            * c0_det
            * c0_det;
        worst[0] = worst[0]
            .max(rel(formula, det))
            .max(rel(c.closed_form_d0_determinant(), det));
        let inv = d0.clone().try_inverse().ok_or("D0 not invertible")?;
        let closed = c.closed_form_d0_inverse().map_err(|e| e.to_string())?;
        worst[1] = worst[1].max((&closed - &inv).norm() / inv.norm());
        let c_inv = c.c0.clone().try_inverse().ok_or("C0 not invertible")?;
        worst[2] = worst[2]
            .max((c.c0_inverse().map_err(|e| e.to_string())? - &c_inv).norm() / c_inv.norm());
        let a_det = if q == 0 { 1.0 } else { c.a0.determinant() };
        ensure(rel(c0_det, a_det) <= 1e-8, || {
            format!("set {set}: |C0| ≠ |A0|")
        })?;
    }
    ensure(worst.iter().all(|w| *w <= 1e-8), || {
        format!("relative errors {worst:?}")
    })?;
    Ok(format!(
        "|D0| {:.1e}, D0⁻¹ {:.1e}, C0⁻¹ {:.1e} (max relative error)",
        worst[0], worst[1], worst[2]
    ))
}

// 5 ---------------------------------------------------------------------------

fn fitted_system(
    d: &Dataset,
    model: RegressionModel,
) -> (EstimatingSystem, JointParam, InferenceConstants) {
    let cfg = FitConfig::default();
    let f = fit(d, &model, &cfg).unwrap();
    let sys = EstimatingSystem::new(model, &cfg);
    let c = InferenceConstants::plug_in(d, &f, &sys).unwrap();
    (sys, JointParam::from_fit(&f), c)
}

fn influence_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0_f64;
    let mut count = 0;

    let lin = random_linear(&mut rng, 150, 3, 0.1);
    let exp_rows: Vec<Vec<f64>> = (0..150).map(|_| vec![rng.random_range(0.0..2.0)]).collect();
    let exp_y: Vec<f64> = exp_rows
        .iter()
        .map(|x| 2.0 * (0.5 * x[0]).exp() + 0.3 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let exp_d = Dataset::from_rows(&exp_rows, &exp_y).unwrap();
    for (d, model) in [(lin, linear_model(3).unwrap()), (exp_d, exp_model())] {
        let (sys, theta, c) = fitted_system(&d, model);
        let d0 = c.closed_form_d0();
        let p = d.p();
        for _ in 0..400 {
            let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..2.0)).collect();
            let y = sys.model.eval(&x, theta.xi_mm.beta.as_slice())
                + theta.xi_mm.alpha
                + 3.0 * rng.sample::<f64, _>(StandardNormal);
            let a = influence_joint(&sys, &x, y, &theta, &c).map_err(|e| e.to_string())?;
            let b = influence_generic(&sys, &x, y, &theta, &d0).map_err(|e| e.to_string())?;
            worst = worst.max((&a - &b).amax() / (1.0 + b.amax()));
            count += 1;
        }
    }

    let y: Vec<f64> = (0..100)
        .map(|_| Normal::new(3.0, 2.0).unwrap().sample(&mut rng))
        .collect();
    let (sys, theta, c) = fitted_system(&Dataset::location(&y).unwrap(), location_model());
    let d0 = c.closed_form_d0();
    for _ in 0..200 {
        let y = rng.random_range(-10.0..16.0);
        let a = influence_location(&sys, y, &c).map_err(|e| e.to_string())?;
        let b = influence_generic(&sys, &[], y, &theta, &d0).map_err(|e| e.to_string())?;
        worst = worst.max((a - b[1]).abs() / (1.0 + b[1].abs()));
        count += 1;
    }
    ensure(worst <= 1e-8, || format!("max discrepancy {worst:e}"))?;
    Ok(format!(
        "{count} observations (linear, exp, location), max discrepancy {worst:.2e}"
    ))
}

// 6 ---------------------------------------------------------------------------

/// Independent M-scale by bisection on log σ.
fn oracle_scale(r: &[f64], rho: &RhoFunction, delta: f64) -> f64 {
    let n = r.len() as f64;
    let f = |s: f64| r.iter().map(|v| rho.rho(v / s)).sum::<f64>() / n - delta;
    let top = r.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if top == 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = ((top * 1e-12).ln(), (top * 1e3).ln());
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f(mid.exp()) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Multi-resolution grid minimum of `obj(β, α)`.
fn grid_minimum(obj: &dyn Fn(f64, f64) -> f64, centre: (f64, f64)) -> ((f64, f64), f64) {
    let (half, step) = (6.0, 0.02);
    let m = (2.0 * half / step) as usize;
    let mut coarse = Vec::with_capacity((m + 1) * (m + 1));
    for i in 0..=m {
        for j in 0..=m {
            let b = centre.0 - half + step * i as f64;
            let a = centre.1 - half + step * j as f64;
            coarse.push((obj(b, a), b, a));
        }
    }
    coarse.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut seeds: Vec<(f64, f64)> = Vec::new();
    for &(_, b, a) in &coarse {
        if seeds
            .iter()
            .all(|s| (s.0 - b).abs() > 0.1 || (s.1 - a).abs() > 0.1)
        {
            seeds.push((b, a));
        }
        if seeds.len() == 6 {
            break;
        }
    }
    let mut best = ((0.0, 0.0), f64::INFINITY);
    for seed in seeds {
        let mut c = seed;
        for (half, step) in [(0.03_f64, 0.001_f64), (0.002, 0.0001), (0.0002, 0.00001)] {
            let m = (2.0 * half / step).round() as usize;
            let mut local = (c, f64::INFINITY);
            for i in 0..=m {
                for j in 0..=m {
                    let b = c.0 - half + step * i as f64;
                    let a = c.1 - half + step * j as f64;
                    let v = obj(b, a);
                    if v < local.1 {
                        local = ((b, a), v);
                    }
                }
            }
            c = local.0;
            if local.1 < best.1 {
                best = local;
            }
        }
    }
    best
}

fn grid_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = FitConfig::default();
    let model = linear_model(1).unwrap();
    let (mut worst_s, mut worst_mm) = (0.0_f64, 0.0_f64);
    for inst in 0..10 {
        let x: Vec<f64> = (0..8).map(|_| rng.sample(StandardNormal)).collect();
        let mut y: Vec<f64> = x
            .iter()
            .map(|v| 1.0 + 2.0 * v + 0.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        if inst % 2 == 1 {
            y[0] += 15.0;
        }
        let rows: Vec<Vec<f64>> = x.iter().map(|v| vec![*v]).collect();
        let d = Dataset::from_rows(&rows, &y).unwrap();
        let f = fit(
            &d,
            &model,
            &FitConfig {
                seed: inst,
                ..cfg.clone()
            },
        )
        .map_err(|e| e.to_string())?;
        let resid = |b: f64, a: f64| -> Vec<f64> {
            x.iter().zip(&y).map(|(xi, yi)| yi - b * xi - a).collect()
        };

        let s_obj = |b: f64, a: f64| oracle_scale(&resid(b, a), &cfg.rho0, cfg.delta);
        let ((gb, ga), gs) = grid_minimum(&s_obj, (0.0, 0.0));
        let fit_scale = oracle_scale(&resid(f.xi_s.beta[0], f.xi_s.alpha), &cfg.rho0, cfg.delta);
        ensure(fit_scale <= gs * (1.0 + 1e-9), || {
            format!("instance {inst}: fit scale {fit_scale} > grid {gs}")
        })?;
        let ds = (f.xi_s.beta[0] - gb).abs().max((f.xi_s.alpha - ga).abs());
        ensure(ds <= 1e-3, || {
            format!("instance {inst}: S differs from grid by {ds:e}")
        })?;
        worst_s = worst_s.max(ds);

        let sigma = f.sigma;
        let mm_obj = |b: f64, a: f64| {
            resid(b, a)
                .iter()
                .map(|r| cfg.rho1.rho(r / sigma))
                .sum::<f64>()
                / 8.0
        };
        let ((gb, ga), _) = grid_minimum(&mm_obj, (0.0, 0.0));
        let dm = (f.xi_mm.beta[0] - gb).abs().max((f.xi_mm.alpha - ga).abs());
        ensure(dm <= 1e-3, || {
            format!("instance {inst}: MM differs from grid by {dm:e}")
        })?;
        worst_mm = worst_mm.max(dm);
    }
    Ok(format!(
        "10 instances, max distance to grid minimizer: S {worst_s:.1e}, MM {worst_mm:.1e}"
    ))
}

// 7–10 -------------------------------------------------------------------------

fn scenario(text: &str) -> SimScenario {
    toml::from_str(text).expect("bundled scenario parses")
}

fn run_claims(texts: &[&str], claim: Claim) -> Result<Vec<String>, String> {
    let mut lines = Vec::new();
    for t in texts {
        let s = scenario(t);
        let report = run_scenario(&s).map_err(|e| format!("{}: {e}", s.name))?;
        let c = report.claim(claim).ok_or("claim missing")?;
        ensure(c.status == ClaimStatus::Pass, || {
            format!("{}: {:?} ({})", s.name, c.status, c.reason)
        })?;
        let detail = match claim {
            Claim::Consistency => c
                .per_n
                .iter()
                .filter_map(|p| p.error_ratio.map(|r| format!("{r:.3}")))
                .collect::<Vec<_>>()
                .join("/"),
            Claim::Expansion => c
                .per_n
                .iter()
                .filter_map(|p| p.remainder_ratio.map(|r| format!("{r:.3}")))
                .collect::<Vec<_>>()
                .join("/"),
            Claim::Normality => {
                let p = &c.per_n[0];
                format!(
                    "var err {:?}, efficiency {:.3} (population {:.3})",
                    p.variance_rel_errors
                        .as_ref()
                        .map(|v| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>()),
                    p.empirical_efficiency.unwrap_or(f64::NAN),
                    report.population.ls_efficiency.unwrap_or(f64::NAN)
                )
            }
            Claim::Contamination => {
                let worst = c.sweep.iter().map(|s| s.max_se_ratio).fold(0.0, f64::max);
                format!("max deviation {worst:.2} SE")
            }
        };
        lines.push(format!("{}: {detail}", s.name));
    }
    Ok(lines)
}

fn consistency_shadow() -> Outcome {
    run_claims(
        &[
            include_str!("../scenarios/consistency-linear-normal.toml"),
            include_str!("../scenarios/consistency-linear-exponential.toml"),
        ],
        Claim::Consistency,
    )
    .map(|l| format!("error ratios per quadrupling: {}", l.join("; ")))
}

fn normality_shadow() -> Outcome {
    run_claims(
        &[
            include_str!("../scenarios/normality-location.toml"),
            include_str!("../scenarios/normality-linear.toml"),
        ],
        Claim::Normality,
    )
    .map(|l| l.join("; "))
}

fn expansion_shadow() -> Outcome {
    run_claims(
        &[
            include_str!("../scenarios/expansion-location.toml"),
            include_str!("../scenarios/expansion-linear.toml"),
        ],
        Claim::Expansion,
    )
    .map(|l| format!("remainder ratios: {}", l.join("; ")))
}

fn robustness_shadow() -> Outcome {
    run_claims(
        &[include_str!("../scenarios/contamination-linear.toml")],
        Claim::Contamination,
    )
    .map(|l| l.join("; "))
}

// 11 --------------------------------------------------------------------------

fn strip_metadata(text: &str) -> String {
    let mut v: serde_json::Value = serde_json::from_str(text).expect("valid JSON");
    v.as_object_mut().map(|o| o.remove("metadata"));
    serde_json::to_string(&v).unwrap()
}

fn run_cli(args: &[&str], threads: &str) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_robustmm"))
        .args(args)
        .env("ROBUSTMM_THREADS", threads)
        .output()
        .map_err(|e| e.to_string())?;
    // simulate exits 1 when a claim fails; determinism is judged on the bytes regardless
    if out.status.code() != Some(0) && out.status.code() != Some(1) {
        return Err(format!(
            "{args:?} exited {:?}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    String::from_utf8(out.stdout).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let csv = dir.path().join("data.csv");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut text = String::from("x1,x2,y\n");
    for _ in 0..300 {
        let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        let mut y = 1.0 + 2.0 * a - b + rng.sample::<f64, _>(StandardNormal);
        if rng.random::<f64>() < 0.1 {
            y += 30.0;
        }
        text.push_str(&format!("{a},{b},{y}\n"));
    }
    std::fs::write(&csv, text).map_err(|e| e.to_string())?;
    let csv = csv.to_str().unwrap();
    let fit_args = [
        "fit",
        "--input",
        csv,
        "--y-col",
        "y",
        "--x-cols",
        "x1,x2",
        "--seed",
        "9",
        "--metadata",
    ];
    let sim_args = ["simulate", "--scenario", "location-normal", "--metadata"];
    let mut checked = 0;
    for args in [&fit_args[..], &sim_args[..]] {
        let runs = [
            run_cli(args, "1")?,
            run_cli(args, "1")?,
            run_cli(args, "4")?,
            run_cli(args, "0")?,
        ];
        let first = strip_metadata(&runs[0]);
        for (i, r) in runs.iter().enumerate().skip(1) {
            ensure(strip_metadata(r) == first, || {
                format!("{} run {i} differs", args[0])
            })?;
        }
        checked += runs.len();
    }
    // without the metadata block the raw bytes agree
    let a = run_cli(&fit_args[..fit_args.len() - 1], "1")?;
    let b = run_cli(&fit_args[..fit_args.len() - 1], "4")?;
    ensure(a == b, || "raw fit output differs".into())?;
    Ok(format!(
        "{} runs (fit, simulate; 1, 4 and auto threads) byte-identical",
        checked + 2
    ))
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome, Duration)> = vec![
        (
            "M-scale certificate",
            mscale_certificate,
            Duration::from_secs(5),
        ),
        ("Derivative chain", derivative_chain, Duration::from_secs(2)),
        (
            "Estimating-equation certificate",
            equation_certificate,
            Duration::from_secs(30),
        ),
        (
            "Closed-form algebra",
            closed_form_algebra,
            Duration::from_secs(5),
        ),
        (
            "Influence equivalence",
            influence_equivalence,
            Duration::from_secs(5),
        ),
        (
            "Grid-oracle equivalence",
            grid_oracle,
            Duration::from_secs(60),
        ),
        (
            "Consistency shadow",
            consistency_shadow,
            Duration::from_secs(600),
        ),
        (
            "Normality/variance shadow",
            normality_shadow,
            Duration::from_secs(600),
        ),
        (
            "Expansion shadow",
            expansion_shadow,
            Duration::from_secs(600),
        ),
        (
            "Robustness shadow",
            robustness_shadow,
            Duration::from_secs(300),
        ),
        ("Determinism", determinism, Duration::from_secs(60)),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(d) if took > *budget => Err(format!("{d}; took {took:.1?}, budget {budget:?}")),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail} [{took:.1?}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id:>2} {name}: {detail} [{took:.1?}]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
