//! Regression functions `g(x, β)`, the intercept-augmented `g(x, β) + α`,
//! and datasets.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A response function `g(x, β)` with analytic derivatives in `β`.
pub trait ResponseFunction: Send + Sync {
    /// Number of regressors per observation.
    fn p(&self) -> usize;
    /// Dimension of `β`.
    fn q(&self) -> usize;
    fn eval(&self, x: &[f64], beta: &[f64]) -> f64;
    /// Writes `∂g/∂β` into `out` (length `q`).
    fn grad(&self, x: &[f64], beta: &[f64], out: &mut [f64]);
    /// Writes `∂²g/∂β∂β'` into `out` (`q × q`).
    fn hess(&self, x: &[f64], beta: &[f64], out: &mut DMatrix<f64>);
    /// `g` is linear in `β` with `ġ = x`.
    fn is_linear(&self) -> bool {
        false
    }
    fn name(&self) -> &str;
}

struct Linear {
    p: usize,
}

impl ResponseFunction for Linear {
    fn p(&self) -> usize {
        self.p
    }
    fn q(&self) -> usize {
        self.p
    }
    fn eval(&self, x: &[f64], beta: &[f64]) -> f64 {
        x.iter().zip(beta).map(|(a, b)| a * b).sum()
    }
    fn grad(&self, x: &[f64], _beta: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }
    fn hess(&self, _x: &[f64], _beta: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
    }
    fn is_linear(&self) -> bool {
        true
    }
    fn name(&self) -> &str {
        "linear"
    }
}

/// `g(x, β) = β₁ exp(β₂ x)` with scalar `x`.
struct Exponential;

impl ResponseFunction for Exponential {
    fn p(&self) -> usize {
        1
    }
    fn q(&self) -> usize {
        2
    }
    fn eval(&self, x: &[f64], beta: &[f64]) -> f64 {
        beta[0] * (beta[1] * x[0]).exp()
    }
    fn grad(&self, x: &[f64], beta: &[f64], out: &mut [f64]) {
        let e = (beta[1] * x[0]).exp();
        out[0] = e;
        out[1] = beta[0] * x[0] * e;
    }
    fn hess(&self, x: &[f64], beta: &[f64], out: &mut DMatrix<f64>) {
        let e = (beta[1] * x[0]).exp();
        out[(0, 0)] = 0.0;
        out[(0, 1)] = x[0] * e;
        out[(1, 0)] = x[0] * e;
        out[(1, 1)] = beta[0] * x[0] * x[0] * e;
    }
    fn name(&self) -> &str {
        "exp"
    }
}

/// Derivatives by central differences. Not certified for inference.
struct FiniteDifference<F> {
    p: usize,
    q: usize,
    eval: F,
    name: String,
}

const FD_STEP: f64 = 1e-5;

impl<F> ResponseFunction for FiniteDifference<F>
where
    F: Fn(&[f64], &[f64]) -> f64 + Send + Sync,
{
    fn p(&self) -> usize {
        self.p
    }
    fn q(&self) -> usize {
        self.q
    }
    fn eval(&self, x: &[f64], beta: &[f64]) -> f64 {
        (self.eval)(x, beta)
    }
    fn grad(&self, x: &[f64], beta: &[f64], out: &mut [f64]) {
        let mut b = beta.to_vec();
        for j in 0..self.q {
            let h = FD_STEP * (1.0 + beta[j].abs());
            b[j] = beta[j] + h;
            let up = (self.eval)(x, &b);
            b[j] = beta[j] - h;
            let down = (self.eval)(x, &b);
            b[j] = beta[j];
            out[j] = (up - down) / (2.0 * h);
        }
    }
    fn hess(&self, x: &[f64], beta: &[f64], out: &mut DMatrix<f64>) {
        let mut b = beta.to_vec();
        let mut gu = vec![0.0; self.q];
        let mut gd = vec![0.0; self.q];
        for j in 0..self.q {
            let h = FD_STEP * (1.0 + beta[j].abs());
            b[j] = beta[j] + h;
            self.grad(x, &b, &mut gu);
            b[j] = beta[j] - h;
            self.grad(x, &b, &mut gd);
            b[j] = beta[j];
            for i in 0..self.q {
                out[(i, j)] = (gu[i] - gd[i]) / (2.0 * h);
            }
        }
        let sym = (&*out + out.transpose()) * 0.5;
        out.copy_from(&sym);
    }
    fn name(&self) -> &str {
        &self.name
    }
}

/// A regression model: response function, optional parameter box, and
/// whether its derivatives are analytic.
#[derive(Clone)]
pub struct RegressionModel {
    inner: Arc<dyn ResponseFunction>,
    bounds: Option<Vec<(f64, f64)>>,
    certified: bool,
}

impl fmt::Debug for RegressionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegressionModel")
            .field("name", &self.inner.name())
            .field("p", &self.p())
            .field("q", &self.q())
            .field("bounds", &self.bounds)
            .field("certified", &self.certified)
            .finish()
    }
}

/// `g(x, β) = β'x`.
pub fn linear_model(p: usize) -> Result<RegressionModel> {
    if p < 1 {
        return Err(Error::Argument("linear model needs p ≥ 1".into()));
    }
    Ok(RegressionModel {
        inner: Arc::new(Linear { p }),
        bounds: None,
        certified: true,
    })
}

/// Location model: no regressors, `g ≡ 0`, so only `α` is estimated.
pub fn location_model() -> RegressionModel {
    RegressionModel {
        inner: Arc::new(Linear { p: 0 }),
        bounds: None,
        certified: true,
    }
}

/// `g(x, β) = β₁ exp(β₂ x)`, with default box `[-10, 10] × [-3, 3]`.
pub fn exp_model() -> RegressionModel {
    RegressionModel {
        inner: Arc::new(Exponential),
        bounds: Some(vec![(-10.0, 10.0), (-3.0, 3.0)]),
        certified: true,
    }
}

impl RegressionModel {
    /// Wraps a user response function with analytic derivatives.
    pub fn new(f: Arc<dyn ResponseFunction>, bounds: Option<Vec<(f64, f64)>>) -> Result<Self> {
        let m = Self {
            inner: f,
            bounds: None,
            certified: true,
        };
        m.with_bounds(bounds)
    }

    /// Model with derivatives from central differences; marked non-certified.
    pub fn finite_difference<F>(
        name: &str,
        p: usize,
        q: usize,
        eval: F,
        bounds: Option<Vec<(f64, f64)>>,
    ) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        let inner = FiniteDifference {
            p,
            q,
            eval,
            name: name.to_string(),
        };
        let m = Self {
            inner: Arc::new(inner),
            bounds: None,
            certified: false,
        };
        m.with_bounds(bounds)
    }

    pub fn with_bounds(mut self, bounds: Option<Vec<(f64, f64)>>) -> Result<Self> {
        if let Some(b) = &bounds {
            if b.len() != self.q() {
                return Err(Error::Argument(format!(
                    "bounds have {} entries, model has q = {}",
                    b.len(),
                    self.q()
                )));
            }
            if b.iter()
                .any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi))
            {
                return Err(Error::Argument(
                    "each bound must be a finite interval lo < hi".into(),
                ));
            }
        }
        self.bounds = bounds;
        Ok(self)
    }

    pub fn p(&self) -> usize {
        self.inner.p()
    }
    pub fn q(&self) -> usize {
        self.inner.q()
    }
    pub fn is_linear(&self) -> bool {
        self.inner.is_linear()
    }
    pub fn is_certified(&self) -> bool {
        self.certified
    }
    pub fn bounds(&self) -> Option<&[(f64, f64)]> {
        self.bounds.as_deref()
    }
    pub fn name(&self) -> &str {
        self.inner.name()
    }

    pub fn eval(&self, x: &[f64], beta: &[f64]) -> f64 {
        self.inner.eval(x, beta)
    }

    pub fn grad(&self, x: &[f64], beta: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.q());
        self.inner.grad(x, beta, out.as_mut_slice());
        out
    }

    pub fn hess(&self, x: &[f64], beta: &[f64]) -> DMatrix<f64> {
        let q = self.q();
        let mut out = DMatrix::zeros(q, q);
        self.inner.hess(x, beta, &mut out);
        out
    }

    pub(crate) fn grad_into(&self, x: &[f64], beta: &[f64], out: &mut [f64]) {
        self.inner.grad(x, beta, out);
    }

    /// Clamps `beta` into the parameter box, if any.
    pub(crate) fn project(&self, beta: &mut [f64]) {
        if let Some(b) = &self.bounds {
            for (v, (lo, hi)) in beta.iter_mut().zip(b) {
                *v = v.clamp(*lo, *hi);
            }
        }
    }
}

/// `ξ = (β, α)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedParam {
    pub beta: DVector<f64>,
    pub alpha: f64,
}

impl AugmentedParam {
    pub fn new(beta: Vec<f64>, alpha: f64) -> Self {
        Self {
            beta: DVector::from_vec(beta),
            alpha,
        }
    }

    pub fn zeros(q: usize) -> Self {
        Self {
            beta: DVector::zeros(q),
            alpha: 0.0,
        }
    }

    /// Stacked `(β', α)'`.
    pub fn to_vector(&self) -> DVector<f64> {
        let q = self.beta.len();
        DVector::from_fn(q + 1, |i, _| if i < q { self.beta[i] } else { self.alpha })
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        let q = v.len() - 1;
        Self {
            beta: v.rows(0, q).into_owned(),
            alpha: v[q],
        }
    }

    pub fn dim(&self) -> usize {
        self.beta.len() + 1
    }
}

/// `n` observations `(xᵢ, yᵢ)`, `xᵢ ∈ Rᵖ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Argument(format!(
                "x has {} rows but y has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if y.is_empty() {
            return Err(Error::Argument("dataset is empty".into()));
        }
        for i in 0..x.nrows() {
            if !y[i].is_finite() {
                return Err(Error::Domain(format!("row {i}: y is not finite")));
            }
            for j in 0..x.ncols() {
                if !x[(i, j)].is_finite() {
                    return Err(Error::Domain(format!(
                        "row {i}, column {j}: x is not finite"
                    )));
                }
            }
        }
        Ok(Self { x, y })
    }

    /// Response-only data for the location model.
    pub fn location(y: &[f64]) -> Result<Self> {
        Self::new(DMatrix::zeros(y.len(), 0), DVector::from_column_slice(y))
    }

    /// Builds from row-major `x` rows.
    pub fn from_rows(rows: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Argument("ragged x rows".into()));
        }
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::new(x, DVector::from_column_slice(y))
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
    pub fn p(&self) -> usize {
        self.x.ncols()
    }
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Row `i` of `x` as an owned vector.
    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.p()).map(|j| self.x[(i, j)]).collect()
    }

    /// Copy with the response replaced.
    pub fn with_y(&self, y: DVector<f64>) -> Result<Self> {
        Self::new(self.x.clone(), y)
    }

    /// Row-major copy of `x`; cheap row access for hot loops.
    pub(crate) fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| self.row(i)).collect()
    }
}

/// `rᵢ = yᵢ − g(xᵢ, β) − α`.
pub fn residuals(d: &Dataset, m: &RegressionModel, xi: &AugmentedParam) -> Result<DVector<f64>> {
    check_dims(d, m, xi)?;
    let beta = xi.beta.as_slice();
    let mut out = DVector::zeros(d.n());
    let mut row = vec![0.0; d.p()];
    for i in 0..d.n() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = d.x[(i, j)];
        }
        let g = m.eval(&row, beta);
        let r = d.y[i] - g - xi.alpha;
        if !r.is_finite() {
            return Err(Error::Domain(format!(
                "row {i}: model evaluation is not finite"
            )));
        }
        out[i] = r;
    }
    Ok(out)
}

pub(crate) fn check_dims(d: &Dataset, m: &RegressionModel, xi: &AugmentedParam) -> Result<()> {
    if d.p() != m.p() {
        return Err(Error::Argument(format!(
            "dataset has p = {}, model expects {}",
            d.p(),
            m.p()
        )));
    }
    if xi.beta.len() != m.q() {
        return Err(Error::Argument(format!(
            "β has length {}, model has q = {}",
            xi.beta.len(),
            m.q()
        )));
    }
    Ok(())
}

/// `(ġ(x, β)', 1)'`.
pub fn augmented_grad(m: &RegressionModel, x: &[f64], xi: &AugmentedParam) -> Result<DVector<f64>> {
    if x.len() != m.p() || xi.beta.len() != m.q() {
        return Err(Error::Argument(
            "dimension mismatch in augmented_grad".into(),
        ));
    }
    let q = m.q();
    let mut out = DVector::zeros(q + 1);
    m.grad_into(x, xi.beta.as_slice(), &mut out.as_mut_slice()[..q]);
    out[q] = 1.0;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("model gradient is not finite".into()));
    }
    Ok(out)
}

/// `g̈(x, β)` in the β-block, zeros in the α row and column.
pub fn augmented_hess(m: &RegressionModel, x: &[f64], xi: &AugmentedParam) -> Result<DMatrix<f64>> {
    if x.len() != m.p() || xi.beta.len() != m.q() {
        return Err(Error::Argument(
            "dimension mismatch in augmented_hess".into(),
        ));
    }
    let q = m.q();
    let mut out = DMatrix::zeros(q + 1, q + 1);
    if !m.is_linear() {
        let h = m.hess(x, xi.beta.as_slice());
        out.view_mut((0, 0), (q, q)).copy_from(&h);
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("model Hessian is not finite".into()));
    }
    Ok(out)
}

/// Necessary-condition diagnostics for identifiability of a linear fit.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiabilityReport {
    /// Rank of `[X, 1]`.
    pub rank: usize,
    pub columns: usize,
    /// Indices of columns of `X` that are constant (collinear with the intercept).
    pub constant_columns: Vec<usize>,
    /// Largest fraction of rows of `X` that coincide.
    pub max_identical_row_fraction: f64,
    pub at_risk: bool,
    pub warnings: Vec<String>,
}

/// Rank and concentration checks on `[X, 1]`.
pub fn check_identifiability(d: &Dataset) -> IdentifiabilityReport {
    let (n, p) = (d.n(), d.p());
    let mut design = DMatrix::from_element(n, p + 1, 1.0);
    design.view_mut((0, 0), (n, p)).copy_from(&d.x);
    let sv = design.clone().svd(false, false).singular_values;
    let smax = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    let tol = smax * (n.max(p + 1) as f64) * f64::EPSILON * 16.0;
    let rank = sv.iter().filter(|&&s| s > tol).count();

    let constant_columns: Vec<usize> = (0..p)
        .filter(|&j| {
            let c = d.x.column(j);
            c.iter().all(|&v| v == c[0])
        })
        .collect();

    let mut rows = d.rows();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut best = 0usize;
    let mut run = 0usize;
    for i in 0..rows.len() {
        if i > 0 && rows[i] == rows[i - 1] {
            run += 1;
        } else {
            run = 1;
        }
        best = best.max(run);
    }
    let max_identical_row_fraction = if n == 0 { 0.0 } else { best as f64 / n as f64 };

    let mut warnings = Vec::new();
    if rank < p + 1 {
        warnings.push(format!("design with intercept has rank {rank} < {}", p + 1));
    }
    for j in &constant_columns {
        warnings.push(format!(
            "column {j} is constant and collinear with the intercept"
        ));
    }
    if p > 0 && max_identical_row_fraction >= 0.5 {
        warnings.push(format!(
            "{:.1}% of the rows coincide; the design is concentrated on a point",
            100.0 * max_identical_row_fraction
        ));
    }
    IdentifiabilityReport {
        rank,
        columns: p + 1,
        at_risk: !warnings.is_empty(),
        constant_columns,
        max_identical_row_fraction,
        warnings,
    }
}

/// Reads a comma-separated table with an optional header row.
///
/// Columns are selected by zero-based index or, when a header is present,
/// by name. Quoted fields are rejected.
pub fn parse_csv(text: &str, y_col: &str, x_cols: &[String]) -> Result<Dataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();
    let first = lines
        .peek()
        .map(|(_, l)| *l)
        .ok_or_else(|| Error::Argument("CSV input is empty".into()))?;
    if text.contains('"') {
        return Err(Error::Argument(
            "quoted CSV fields are not supported".into(),
        ));
    }
    let first_fields: Vec<&str> = first.split(',').map(str::trim).collect();
    let has_header = first_fields
        .iter()
        .any(|f| f.parse::<f64>().is_err() && !is_nonfinite_literal(f));
    let header: Option<Vec<String>> = if has_header {
        lines.next();
        Some(first_fields.iter().map(|s| s.to_string()).collect())
    } else {
        None
    };
    let width = first_fields.len();
    let resolve = |spec: &str| -> Result<usize> {
        if let Ok(i) = spec.parse::<usize>() {
            if i < width {
                return Ok(i);
            }
            return Err(Error::Argument(format!(
                "column index {i} out of range (0..{width})"
            )));
        }
        header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == spec))
            .ok_or_else(|| Error::Argument(format!("unknown column `{spec}`")))
    };
    let yi = resolve(y_col)?;
    let xi: Vec<usize> = x_cols.iter().map(|c| resolve(c)).collect::<Result<_>>()?;
    let col_name = |j: usize| header.as_ref().map_or(j.to_string(), |h| h[j].clone());

    let mut rows = Vec::new();
    let mut ys = Vec::new();
    for (lineno, line) in lines {
        let row_no = lineno + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != width {
            return Err(Error::Argument(format!(
                "row {row_no}: expected {width} fields, found {}",
                fields.len()
            )));
        }
        let get = |j: usize| -> Result<f64> {
            let v: f64 = fields[j].parse().map_err(|_| {
                Error::Argument(format!(
                    "row {row_no}, column {}: cannot parse `{}`",
                    col_name(j),
                    fields[j]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Domain(format!(
                    "row {row_no}, column {}: value is not finite",
                    col_name(j)
                )));
            }
            Ok(v)
        };
        ys.push(get(yi)?);
        rows.push(xi.iter().map(|&j| get(j)).collect::<Result<Vec<_>>>()?);
    }
    if rows.is_empty() {
        return Err(Error::Argument("CSV has no data rows".into()));
    }
    let x = DMatrix::from_fn(rows.len(), xi.len(), |i, j| rows[i][j]);
    Dataset::new(x, DVector::from_vec(ys))
}

fn is_nonfinite_literal(s: &str) -> bool {
    matches!(
        s.to_ascii_lowercase().as_str(),
        "nan" | "inf" | "-inf" | "+inf" | "infinity" | "-infinity"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_model_basics() {
        let m = linear_model(2).unwrap();
        assert_eq!(m.eval(&[1.0, 2.0], &[3.0, 4.0]), 11.0);
        assert_eq!(m.grad(&[1.0, 2.0], &[3.0, 4.0]).as_slice(), &[1.0, 2.0]);
        assert_eq!(m.hess(&[1.0, 2.0], &[3.0, 4.0]), DMatrix::zeros(2, 2));
        assert!(linear_model(0).is_err());
    }

    #[test]
    fn exp_model_basics() {
        let m = exp_model();
        assert_eq!(m.eval(&[0.7], &[1.0, 0.0]), 1.0);
        assert_eq!(m.eval(&[0.0], &[2.0, 0.5]), 2.0);
        assert_eq!(m.grad(&[0.0], &[2.0, 0.5]).as_slice(), &[1.0, 0.0]);
        let h = m.hess(&[0.3], &[2.0, 0.5]);
        assert_eq!(h[(0, 1)], h[(1, 0)]);
    }

    #[test]
    fn residual_alpha_shift() {
        let d = Dataset::from_rows(&[vec![1.0], vec![2.0], vec![-1.0]], &[1.0, 5.0, 2.0]).unwrap();
        let m = linear_model(1).unwrap();
        let xi = AugmentedParam::new(vec![2.0], 0.5);
        let r = residuals(&d, &m, &xi).unwrap();
        assert_eq!(r.as_slice(), &[-1.5, 0.5, 3.5]);
        let shifted = residuals(&d, &m, &AugmentedParam::new(vec![2.0], 1.5)).unwrap();
        for i in 0..3 {
            assert_eq!(shifted[i], r[i] - 1.0);
        }
    }

    #[test]
    fn residual_non_finite_names_row() {
        let d = Dataset::from_rows(&[vec![1.0], vec![1000.0]], &[1.0, 1.0]).unwrap();
        let m = exp_model().with_bounds(None).unwrap();
        let err = residuals(&d, &m, &AugmentedParam::new(vec![1.0, 2.0], 0.0)).unwrap_err();
        assert!(
            matches!(err, Error::Domain(ref s) if s.contains("row 1")),
            "{err}"
        );
    }

    #[test]
    fn augmented_linear() {
        let m = linear_model(2).unwrap();
        let xi = AugmentedParam::new(vec![0.3, -1.0], 2.0);
        let g = augmented_grad(&m, &[4.0, 5.0], &xi).unwrap();
        assert_eq!(g.as_slice(), &[4.0, 5.0, 1.0]);
        assert_eq!(
            augmented_hess(&m, &[4.0, 5.0], &xi).unwrap(),
            DMatrix::zeros(3, 3)
        );
    }

    #[test]
    fn identifiability_flags() {
        let d = Dataset::from_rows(
            &[
                vec![1.0, 3.0],
                vec![2.0, 3.0],
                vec![0.5, 3.0],
                vec![-1.0, 3.0],
            ],
            &[1.0; 4],
        )
        .unwrap();
        let r = check_identifiability(&d);
        assert!(r.at_risk);
        assert_eq!(r.constant_columns, vec![1]);

        let d = Dataset::from_rows(&vec![vec![0.2, 0.7]; 6], &[1.0; 6]).unwrap();
        let r = check_identifiability(&d);
        assert!(r.at_risk);
        assert_eq!(r.max_identical_row_fraction, 1.0);

        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![(i as f64).sin(), (i as f64 * 1.7).cos()])
            .collect();
        let d = Dataset::from_rows(&rows, &[0.0; 10]).unwrap();
        let r = check_identifiability(&d);
        assert!(!r.at_risk, "{:?}", r.warnings);
        assert_eq!(r.rank, 3);
    }

    #[test]
    fn csv_parsing() {
        let text = "y,a,b\n1.0,2,3\n4,5,6\n";
        let d = parse_csv(text, "y", &["b".into(), "a".into()]).unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.row(1), vec![6.0, 5.0]);

        let d = parse_csv("1,2\n3,4\n", "1", &["0".into()]).unwrap();
        assert_eq!(d.y().as_slice(), &[2.0, 4.0]);

        let err = parse_csv("y,x\n1,2\n3,NaN\n", "y", &["x".into()]).unwrap_err();
        assert!(
            matches!(err, Error::Domain(ref s) if s.contains("row 3") && s.contains("column x")),
            "{err}"
        );
        assert!(parse_csv("y,x\n\"1\",2\n", "y", &["x".into()]).is_err());
        assert!(parse_csv("y,x\n1,2\n", "z", &["x".into()]).is_err());
    }
}
