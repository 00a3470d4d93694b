//! `robustmm`: fit S/MM regressions from CSV files, run simulation scenarios
//! and check ρ-functions.

mod json;
mod scenarios;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use robustmm::estimators::{EquationResiduals, StageCounts, StageFlags};
use robustmm::inference::{asymptotic_cov, EstimatingSystem, InferenceConstants, SymmetricCheck};
use robustmm::model::{check_identifiability, parse_csv};
use robustmm::montecarlo::{run_scenario, SimReport, SimScenario};
use robustmm::rho::{verify_r1_with, R1Report, DEFAULT_K0, DEFAULT_K1};
use robustmm::{
    exp_model, fit, linear_model, location_model, Dataset, Error, FitConfig, RhoFunction,
};

const FIT_SCHEMA_VERSION: u32 = 1;
const THREADS_ENV: &str = "ROBUSTMM_THREADS";

const EXIT_CLAIM_FAILED: u8 = 1;
const EXIT_FIT: u8 = 2;
const EXIT_INPUT: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "robustmm", version, about = "Robust S and MM regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model to a CSV file and print a JSON report.
    Fit(FitArgs),
    /// Run a simulation scenario (a TOML file or the name of a bundled scenario).
    Simulate(SimulateArgs),
    /// Check that a ρ-function is bounded with log(1 − ρ) concave.
    CheckRho(CheckRhoArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Linear,
    Exp,
    Location,
}

#[derive(clap::Args, Debug)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    /// Response column, by header name or zero-based index.
    #[arg(long)]
    y_col: String,
    /// Comma-separated covariate columns.
    #[arg(long, value_delimiter = ',')]
    x_cols: Vec<String>,
    #[arg(long, value_enum, default_value = "linear")]
    model: ModelArg,
    #[arg(long, default_value_t = DEFAULT_K0)]
    k0: f64,
    #[arg(long, default_value_t = DEFAULT_K1)]
    k1: f64,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    subsamples: usize,
    /// Also report the covariance shortcut for symmetric errors.
    #[arg(long)]
    symmetric: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Add a metadata block (version, timestamp, threads).
    #[arg(long)]
    metadata: bool,
}

#[derive(clap::Args, Debug)]
struct SimulateArgs {
    #[arg(long, required_unless_present = "list")]
    scenario: Option<String>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON report path; the per-replication CSV goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    metadata: bool,
    /// List the bundled scenarios.
    #[arg(long)]
    list: bool,
}

#[derive(clap::Args, Debug)]
struct CheckRhoArgs {
    #[arg(long, default_value = "bisquare")]
    family: String,
    #[arg(long, default_value_t = DEFAULT_K0)]
    k: f64,
    /// CSV of `t,rho` pairs to check instead of a built-in family.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, default_value_t = 1001)]
    grid: usize,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Fit(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => EXIT_INPUT,
            Failure::Fit(_) => EXIT_FIT,
        }
    }
}

fn input<E: ToString>(e: E) -> Failure {
    Failure::Input(e.to_string())
}

fn one_line(s: &str) -> String {
    s.split('\n')
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" | ")
}

#[derive(Serialize)]
struct Metadata {
    version: &'static str,
    created_unix: u64,
    threads: usize,
}

fn metadata() -> Metadata {
    let created_unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Metadata {
        version: env!("CARGO_PKG_VERSION"),
        created_unix,
        threads: rayon::current_num_threads(),
    }
}

#[derive(Serialize)]
struct Param {
    beta: Vec<f64>,
    alpha: f64,
}

#[derive(Serialize)]
struct Convergence {
    converged: StageFlags,
    iterations: StageCounts,
    candidates_evaluated: usize,
    objective_s: f64,
    objective_mm: f64,
    exact_fit: bool,
    equations: Option<EquationResiduals>,
    equations_satisfied: bool,
}

#[derive(Serialize)]
struct Identifiability {
    rank: usize,
    columns: usize,
    constant_columns: Vec<usize>,
    max_identical_row_fraction: f64,
    at_risk: bool,
}

#[derive(Serialize)]
struct Settings {
    model: String,
    k0: f64,
    k1: f64,
    delta: f64,
    seed: u64,
    subsamples: usize,
}

#[derive(Serialize)]
struct FitReport {
    schema_version: u32,
    settings: Settings,
    n: usize,
    p: usize,
    sigma: f64,
    xi_s: Param,
    xi_mm: Param,
    beta_mm: Vec<f64>,
    alpha_mm: f64,
    /// Ordered as `(β₁, …, β_q, α)`.
    std_errors: Option<Vec<f64>>,
    #[serde(rename = "V")]
    v: Option<Vec<Vec<f64>>>,
    constants: Option<InferenceConstants>,
    #[serde(skip_serializing_if = "Option::is_none")]
    symmetric: Option<SymmetricCheck>,
    convergence: Convergence,
    identifiability: Identifiability,
    warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metadata: Option<Metadata>,
}

fn rho_arg(name: &str, k: f64) -> Result<RhoFunction, Failure> {
    RhoFunction::bisquare(k).map_err(|e| Failure::Input(format!("--{name}: {e}")))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Input(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_fit(a: &FitArgs) -> Result<u8, Failure> {
    let text = fs::read_to_string(&a.input)
        .map_err(|e| Failure::Input(format!("{}: {e}", a.input.display())))?;
    let model = match a.model {
        ModelArg::Linear => linear_model(a.x_cols.len()).map_err(|_| {
            Failure::Input("--x-cols: linear model needs at least one covariate".into())
        })?,
        ModelArg::Exp => {
            if a.x_cols.len() != 1 {
                return Err(Failure::Input(
                    "--x-cols: exp model needs exactly one covariate".into(),
                ));
            }
            exp_model()
        }
        ModelArg::Location => {
            if !a.x_cols.is_empty() {
                return Err(Failure::Input(
                    "--x-cols: location model takes no covariates".into(),
                ));
            }
            location_model()
        }
    };
    let data = parse_csv(&text, &a.y_col, &a.x_cols).map_err(input)?;
    let cfg = FitConfig {
        delta: a.delta,
        rho0: rho_arg("k0", a.k0)?,
        rho1: rho_arg("k1", a.k1)?,
        n_subsamples: a.subsamples,
        seed: a.seed,
        ..FitConfig::default()
    };
    cfg.validate().map_err(input)?;

    let ident = check_identifiability(&data);
    let mut warnings = ident.warnings.clone();
    let full_p = data.p();
    // constant covariates are dropped from a linear fit and reported with β = 0
    let keep: Vec<usize> = (0..full_p)
        .filter(|j| !ident.constant_columns.contains(j))
        .collect();
    let (data, model) = if a.model == ModelArg::Linear && keep.len() < full_p {
        warnings.push(format!(
            "constant columns {:?} dropped from the fit; their coefficients are reported as 0",
            ident.constant_columns
        ));
        if keep.is_empty() {
            let y: Vec<f64> = data.y().iter().copied().collect();
            (Dataset::location(&y).map_err(input)?, location_model())
        } else {
            let x = data.x().select_columns(&keep);
            (
                Dataset::new(x, data.y().clone()).map_err(input)?,
                linear_model(keep.len()).map_err(input)?,
            )
        }
    } else {
        (data, model)
    };
    // position of each reported parameter (β₁, …, β_p, α) in the fitted vector
    let slots: Vec<Option<usize>> = if a.model == ModelArg::Linear && keep.len() < full_p {
        (0..full_p)
            .map(|j| keep.iter().position(|k| *k == j))
            .chain([Some(keep.len())])
            .collect()
    } else {
        (0..=data.p()).map(Some).collect()
    };
    let pick = |v: &[f64]| -> Vec<f64> { slots.iter().map(|s| s.map_or(0.0, |k| v[k])).collect() };
    let expand = |beta: &[f64]| -> Vec<f64> {
        let mut v = pick(&[beta, &[0.0]].concat());
        v.pop();
        v
    };
    let f = fit(&data, &model, &cfg).map_err(|e| match e {
        Error::Argument(_) | Error::Config { .. } => input(e),
        other => Failure::Fit(other.to_string()),
    })?;
    if !f.equations_satisfied() && !f.exact_fit {
        warnings.push("estimating equations are not satisfied to tolerance".into());
    }
    let sys = EstimatingSystem::new(model.clone(), &cfg);
    let inference = if f.exact_fit {
        warnings.push("exact fit (σ̂ = 0): no covariance available".into());
        None
    } else {
        match asymptotic_cov(&data, &f, &sys, a.symmetric) {
            Ok(r) => Some(r),
            Err(e) => {
                warnings.push(format!("inference unavailable: {e}"));
                None
            }
        }
    };
    let param = |x: &robustmm::AugmentedParam| Param {
        beta: expand(x.beta.as_slice()),
        alpha: x.alpha,
    };
    let report = FitReport {
        schema_version: FIT_SCHEMA_VERSION,
        settings: Settings {
            model: model.name().to_string(),
            k0: a.k0,
            k1: a.k1,
            delta: a.delta,
            seed: a.seed,
            subsamples: a.subsamples,
        },
        n: data.n(),
        p: data.p(),
        sigma: f.sigma,
        xi_s: param(&f.xi_s),
        xi_mm: param(&f.xi_mm),
        beta_mm: expand(f.xi_mm.beta.as_slice()),
        alpha_mm: f.xi_mm.alpha,
        std_errors: inference.as_ref().map(|r| pick(r.std_errors.as_slice())),
        v: inference.as_ref().map(|r| {
            slots
                .iter()
                .map(|s| match s {
                    Some(i) => pick(&r.v.row(*i).iter().copied().collect::<Vec<_>>()),
                    None => vec![0.0; slots.len()],
                })
                .collect()
        }),
        constants: inference.as_ref().map(|r| r.constants.clone()),
        symmetric: inference.as_ref().and_then(|r| r.symmetric.clone()),
        convergence: Convergence {
            converged: f.converged,
            iterations: f.iterations,
            candidates_evaluated: f.candidates_evaluated,
            objective_s: f.objective_s,
            objective_mm: f.objective_mm,
            exact_fit: f.exact_fit,
            equations: f.equations,
            equations_satisfied: f.equations_satisfied(),
        },
        identifiability: Identifiability {
            rank: ident.rank,
            columns: ident.columns,
            constant_columns: ident.constant_columns,
            max_identical_row_fraction: ident.max_identical_row_fraction,
            at_risk: ident.at_risk,
        },
        warnings,
        metadata: a.metadata.then(metadata),
    };
    write_output(a.out.as_deref(), &json::to_string(&report))?;
    Ok(0)
}

fn load_scenario(arg: &str) -> Result<SimScenario, Failure> {
    let text = match scenarios::bundled(arg) {
        Some(t) => t.to_string(),
        None => fs::read_to_string(arg).map_err(|e| {
            Failure::Input(format!(
                "scenario `{arg}` is neither bundled nor readable: {e}"
            ))
        })?,
    };
    let s: SimScenario = toml::from_str(&text)
        .map_err(|e| Failure::Input(format!("scenario: {}", one_line(&e.to_string()))))?;
    s.validate()
        .map_err(|e| Failure::Input(format!("scenario: {e}")))?;
    Ok(s)
}

#[derive(Serialize)]
struct SimOutput<'a> {
    #[serde(flatten)]
    report: &'a SimReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    metadata: Option<Metadata>,
}

fn cmd_simulate(a: &SimulateArgs, verbose: bool) -> Result<u8, Failure> {
    if a.list {
        for (name, _) in scenarios::BUNDLED {
            println!("{name}");
        }
        return Ok(0);
    }
    let mut s = load_scenario(a.scenario.as_deref().expect("required by clap"))?;
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    if verbose {
        eprintln!(
            "running scenario `{}` with {} replications",
            s.name, s.replications
        );
    }
    let report = run_scenario(&s).map_err(|e| match e {
        Error::Config { .. } | Error::Argument(_) => input(e),
        other => Failure::Fit(other.to_string()),
    })?;
    let text = json::to_string(&SimOutput {
        report: &report,
        metadata: a.metadata.then(metadata),
    });
    write_output(a.out.as_deref(), &text)?;
    if let Some(out) = &a.out {
        let csv_path = out.with_extension("csv");
        let file = fs::File::create(&csv_path)
            .map_err(|e| Failure::Input(format!("{}: {e}", csv_path.display())))?;
        report
            .write_csv(std::io::BufWriter::new(file))
            .map_err(|e| Failure::Input(format!("{}: {e}", csv_path.display())))?;
    }
    for c in &report.claims {
        eprintln!(
            "{}: {} ({})",
            c.claim.name(),
            serde_json::to_value(c.status)
                .unwrap_or_default()
                .as_str()
                .unwrap_or("?"),
            c.reason
        );
    }
    if report.hypotheses_violated {
        eprintln!("note: the error law is not strongly unimodal; hypotheses violated");
    }
    Ok(if report.passed() {
        0
    } else {
        EXIT_CLAIM_FAILED
    })
}

/// Linear interpolation of `log(1 − ρ)` between table points. On a segment
/// ending at `ρ = 1`, `1 − ρ` decays as `(1 − w)^m`, with `m` large enough to
/// keep the log-slope decreasing. Constant beyond the table.
fn table_rho(points: Vec<(f64, f64)>) -> impl Fn(f64) -> f64 {
    move |t: f64| {
        let first = points[0];
        let last = points[points.len() - 1];
        if t <= first.0 {
            return first.1;
        }
        if t >= last.0 {
            return last.1;
        }
        let j = points.partition_point(|p| p.0 <= t);
        let (t0, r0) = points[j - 1];
        let (t1, r1) = points[j];
        let w = (t - t0) / (t1 - t0);
        if r0 < 1.0 && r1 < 1.0 {
            1.0 - ((1.0 - w) * (1.0 - r0).ln() + w * (1.0 - r1).ln()).exp()
        } else if r0 < 1.0 {
            let m = match j.checked_sub(2).map(|i| points[i]) {
                Some((tp, rp)) if rp < 1.0 => {
                    let slope = ((1.0 - r0).ln() - (1.0 - rp).ln()) / (t0 - tp);
                    (-slope * (t1 - t0)).max(1.0)
                }
                _ => 1.0,
            };
            1.0 - (1.0 - r0) * (1.0 - w).powf(m)
        } else if r1 < 1.0 {
            let m = match points.get(j + 1) {
                Some(&(tn, rn)) if rn < 1.0 => {
                    let slope = ((1.0 - rn).ln() - (1.0 - r1).ln()) / (tn - t1);
                    (slope * (t1 - t0)).max(1.0)
                }
                _ => 1.0,
            };
            1.0 - (1.0 - r1) * w.powf(m)
        } else {
            (1.0 - w) * r0 + w * r1
        }
    }
}

fn read_table(path: &Path) -> Result<Vec<(f64, f64)>, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.parse().ok()).collect();
        match parsed {
            Some(v) if v.len() == 2 && v.iter().all(|x| x.is_finite()) => points.push((v[0], v[1])),
            None if i == 0 => continue,
            _ => {
                return Err(Failure::Input(format!(
                    "{}: line {}: expected two finite numbers `t,rho`",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    if points.len() < 3 {
        return Err(Failure::Input(format!(
            "{}: need at least 3 rows",
            path.display()
        )));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    if points.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Failure::Input(format!(
            "{}: duplicate t values",
            path.display()
        )));
    }
    Ok(points)
}

fn print_r1(label: &str, k: f64, r: &R1Report) {
    println!("rho: {label}");
    println!("k: {k}");
    println!("shape_ok: {}", r.shape_ok);
    println!("max_second_difference: {:e}", r.max_second_difference);
    println!("max_outside_deviation: {:e}", r.max_outside_deviation);
    println!("R1: {}", if r.holds { "holds" } else { "fails" });
}

fn cmd_check_rho(a: &CheckRhoArgs) -> Result<u8, Failure> {
    if !(a.k > 0.0 && a.k.is_finite()) {
        return Err(Failure::Input(format!(
            "--k: must be positive, got {}",
            a.k
        )));
    }
    let report = match &a.table {
        Some(path) => {
            let rho = table_rho(read_table(path)?);
            let r = verify_r1_with(rho, a.k, a.grid);
            print_r1(&format!("table {}", path.display()), a.k, &r);
            r
        }
        None => {
            let f = RhoFunction::from_name(&a.family, a.k).map_err(input)?;
            let r = verify_r1_with(|t| f.rho(t), a.k, a.grid);
            print_r1(&a.family, a.k, &r);
            r
        }
    };
    Ok(if report.holds { 0 } else { EXIT_CLAIM_FAILED })
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Failure::Input(format!("{THREADS_ENV}: expected a count, got `{v}`")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(input)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|_| match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a, cli.verbose),
        Command::CheckRho(a) => cmd_check_rho(a),
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let (kind, msg) = match &f {
                Failure::Input(m) => ("input", m),
                Failure::Fit(m) => ("fit", m),
            };
            eprintln!("robustmm: error[{kind}]: {}", one_line(msg));
            ExitCode::from(f.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_interpolation_keeps_bisquare_r1() {
        let f = RhoFunction::bisquare(1.547).unwrap();
        let pts: Vec<(f64, f64)> = (0..=400)
            .map(|i| 1.547 * (-2.0 + 4.0 * i as f64 / 400.0))
            .map(|t| (t, f.rho(t)))
            .collect();
        let rho = table_rho(pts);
        let r = verify_r1_with(&rho, 1.547, 1001);
        assert!(r.holds, "{r:?}");
    }

    #[test]
    fn single_line_messages() {
        assert_eq!(one_line("a\n  b\n\nc"), "a | b | c");
    }
}
