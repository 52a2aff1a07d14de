//! Designs, the Gaussian correlation function, and kriging.

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::nelder_mead_box;

/// Nugget added to the correlation diagonal before the first factorization attempt.
pub const NUGGET_START: f64 = 1e-8;
/// Largest nugget tried before giving up.
pub const NUGGET_MAX: f64 = 1e-4;
/// Fitted models must reproduce training responses to this fraction of `max(1, |y|)`.
const INTERP_TOL: f64 = 1e-6;

/// What a design column represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Control,
    NoiseExt,
    NoiseInt,
}

impl Role {
    pub fn is_noise_ext(self) -> bool {
        self == Role::NoiseExt
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Control => "control",
            Role::NoiseExt => "noise_ext",
            Role::NoiseInt => "noise_int",
        }
    }
}

/// How a noise column was produced from its unit-interval levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    None,
    Tr,
    Dt(f64),
    Hybrid,
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::None => write!(f, "none"),
            Transform::Tr => write!(f, "tr"),
            Transform::Dt(a) => write!(f, "dt:{a:?}"),
            Transform::Hybrid => write!(f, "hybrid"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub name: String,
    pub role: Role,
    pub transform: Transform,
}

impl FactorSpec {
    pub fn new(name: impl Into<String>, role: Role) -> Self {
        Self {
            name: name.into(),
            role,
            transform: Transform::None,
        }
    }
}

/// An `n × (p + q)` experimental design with per-column metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    rows: Vec<Vec<f64>>,
    factors: Vec<FactorSpec>,
}

impl Design {
    /// Validates shape, control-column range and row distinctness.
    pub fn new(rows: Vec<Vec<f64>>, factors: Vec<FactorSpec>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidDesign("design needs at least one run".into()));
        }
        let d = factors.len();
        if d == 0 {
            return Err(Error::InvalidDesign("design needs at least one factor".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: r.len(),
                });
            }
            for (j, v) in r.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::InvalidDesign(format!("row {i} column {j} is not finite")));
                }
                if factors[j].role == Role::Control && !(0.0..=1.0).contains(v) {
                    return Err(Error::InvalidDesign(format!(
                        "control column {} has value {v} outside [0, 1]",
                        factors[j].name
                    )));
                }
            }
        }
        for i in 0..rows.len() {
            for j in 0..i {
                if rows[i] == rows[j] {
                    return Err(Error::InvalidDesign(format!("rows {j} and {i} coincide")));
                }
            }
        }
        Ok(Self { rows, factors })
    }

    /// Design with `p` control columns `x1..xp` followed by `q` external noise columns `z1..zq`.
    pub fn with_roles(rows: Vec<Vec<f64>>, p: usize, q: usize) -> Result<Self> {
        Self::new(rows, default_factors(p, q))
    }

    /// Same runs with every column relabeled as an external noise factor `z1..zq`.
    pub fn as_noise(&self) -> Self {
        Self {
            rows: self.rows.clone(),
            factors: default_factors(0, self.n_factors()),
        }
    }

    /// Same runs with new column metadata.
    pub fn with_factors(&self, factors: Vec<FactorSpec>) -> Result<Self> {
        Self::new(self.rows.clone(), factors)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn factors(&self) -> &[FactorSpec] {
        &self.factors
    }

    pub fn n_runs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Indices of the external-noise columns.
    pub fn noise_columns(&self) -> Vec<usize> {
        (0..self.n_factors())
            .filter(|&j| self.factors[j].role.is_noise_ext())
            .collect()
    }

    /// Indices of columns integrated uniformly over `[0, 1]` (control and internal noise).
    pub fn control_columns(&self) -> Vec<usize> {
        (0..self.n_factors())
            .filter(|&j| !self.factors[j].role.is_noise_ext())
            .collect()
    }

    /// Replaces column `j`, re-running validation.
    pub fn with_column(&self, j: usize, values: &[f64], transform: Transform) -> Result<Self> {
        if values.len() != self.n_runs() {
            return Err(Error::Dimension {
                expected: self.n_runs(),
                got: values.len(),
            });
        }
        let mut rows = self.rows.clone();
        for (r, v) in rows.iter_mut().zip(values) {
            r[j] = *v;
        }
        let mut factors = self.factors.clone();
        factors[j].transform = transform;
        Self::new(rows, factors)
    }

    /// Rows reordered by `perm` (`perm[i]` is the source row of output row `i`).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let rows = perm.iter().map(|&i| self.rows[i].clone()).collect();
        Self::new(rows, self.factors.clone())
    }

    /// Smallest Euclidean distance between two runs.
    pub fn min_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.rows.len() {
            for j in 0..i {
                best = best.min(sq_dist(&self.rows[i], &self.rows[j]).sqrt());
            }
        }
        best
    }
}

pub(crate) fn default_factors(p: usize, q: usize) -> Vec<FactorSpec> {
    (0..p)
        .map(|i| FactorSpec::new(format!("x{}", i + 1), Role::Control))
        .chain((0..q).map(|i| FactorSpec::new(format!("z{}", i + 1), Role::NoiseExt)))
        .collect()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Gaussian correlation scales, one per design column in column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationParams {
    theta: Vec<f64>,
}

impl CorrelationParams {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::domain(format!(
                "correlation parameters must be finite and nonnegative: {theta:?}"
            )));
        }
        Ok(Self { theta })
    }

    /// Concatenates control scales `θˣ` and noise scales `θᶻ`.
    pub fn from_parts(theta_x: &[f64], theta_z: &[f64]) -> Result<Self> {
        Self::new(theta_x.iter().chain(theta_z).copied().collect())
    }

    /// The same scale in every one of `dim` coordinates.
    pub fn isotropic(dim: usize, theta: f64) -> Result<Self> {
        Self::new(vec![theta; dim])
    }

    pub fn values(&self) -> &[f64] {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// The scales restricted to the given columns.
    pub fn select(&self, cols: &[usize]) -> Self {
        Self {
            theta: cols.iter().map(|&j| self.theta[j]).collect(),
        }
    }
}

impl fmt::Display for CorrelationParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.theta.iter().map(|t| format!("{t}")).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// `exp{-Σ θ_l (u_l - v_l)²}`.
pub fn gauss_corr(u: &[f64], v: &[f64], theta: &CorrelationParams) -> Result<f64> {
    if u.len() != v.len() || u.len() != theta.dim() {
        return Err(Error::Dimension {
            expected: theta.dim(),
            got: if u.len() != theta.dim() { u.len() } else { v.len() },
        });
    }
    Ok(corr_unchecked(u, v, &theta.theta))
}

#[inline]
pub(crate) fn corr_unchecked(u: &[f64], v: &[f64], theta: &[f64]) -> f64 {
    let mut s = 0.0;
    for l in 0..theta.len() {
        let d = u[l] - v[l];
        s += theta[l] * d * d;
    }
    (-s).exp()
}

/// Correlation matrix of the design runs, without nugget.
pub fn corr_matrix(design: &Design, theta: &CorrelationParams) -> Result<DMatrix<f64>> {
    check_theta(design.n_factors(), theta)?;
    Ok(corr_matrix_of(design.rows(), theta.values()))
}

pub(crate) fn corr_matrix_of(points: &[Vec<f64>], theta: &[f64]) -> DMatrix<f64> {
    let n = points.len();
    let mut r = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..i {
            let c = corr_unchecked(&points[i], &points[j], theta);
            r[(i, j)] = c;
            r[(j, i)] = c;
        }
    }
    r
}

fn check_theta(dim: usize, theta: &CorrelationParams) -> Result<()> {
    if theta.dim() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: theta.dim(),
        });
    }
    Ok(())
}

/// Cholesky factorization with nugget escalation.
pub(crate) fn factorize(r: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut nugget = NUGGET_START;
    loop {
        let mut m = r.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += nugget;
        }
        if let Some(c) = Cholesky::new(m) {
            return Ok((c, nugget));
        }
        nugget *= 10.0;
        if nugget > NUGGET_MAX * (1.0 + 1e-9) {
            return Err(Error::Conditioning { nugget: nugget / 10.0 });
        }
    }
}

/// Factorized correlation structure of a design for fixed `θ`.
///
/// Everything here depends only on the run locations and `θ`, not on responses,
/// so it is what the design criteria work with.
#[derive(Debug, Clone)]
pub struct CorrelationFactor {
    points: Vec<Vec<f64>>,
    theta: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    nugget: f64,
}

impl CorrelationFactor {
    pub fn new(design: &Design, theta: &CorrelationParams) -> Result<Self> {
        check_theta(design.n_factors(), theta)?;
        Self::from_points(design.rows().to_vec(), theta.values().to_vec())
    }

    pub(crate) fn from_points(points: Vec<Vec<f64>>, theta: Vec<f64>) -> Result<Self> {
        let r = corr_matrix_of(&points, &theta);
        let (chol, nugget) = factorize(&r)?;
        Ok(Self {
            points,
            theta,
            chol,
            nugget,
        })
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    #[cfg(test)]
    pub(crate) fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    pub fn corr_vector(&self, point: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.points.len(),
            self.points.iter().map(|p| corr_unchecked(point, p, &self.theta)),
        )
    }

    /// `r'R⁻¹r`, the explained fraction of prior variance at `point`.
    ///
    /// The inverse is taken as `R̃⁻¹ + δR̃⁻²`, the first-order correction for the
    /// nugget `δ` in `R̃ = R + δI`. This keeps the variance at design runs of order `δ²`.
    pub fn quad_form(&self, point: &[f64]) -> f64 {
        let mut v = self.corr_vector(point);
        let l = self.chol.l_dirty();
        l.solve_lower_triangular_mut(&mut v);
        let q = v.norm_squared();
        l.tr_solve_lower_triangular_mut(&mut v);
        q + self.nugget * v.norm_squared()
    }

    /// Normalized posterior variance `1 - r'R⁻¹r`, clamped to `[0, 1]`.
    pub fn mse(&self, point: &[f64]) -> f64 {
        (1.0 - self.quad_form(point)).clamp(0.0, 1.0)
    }

    /// `mse` at many points, solving all right-hand sides at once.
    pub fn mse_many(&self, points: &[Vec<f64>]) -> Vec<f64> {
        self.quad_forms(points)
            .into_iter()
            .map(|q| (1.0 - q).clamp(0.0, 1.0))
            .collect()
    }

    pub(crate) fn quad_forms(&self, points: &[Vec<f64>]) -> Vec<f64> {
        const BATCH: usize = 256;
        let n = self.n();
        let mut out = Vec::with_capacity(points.len());
        let l = self.chol.l_dirty();
        for chunk in points.chunks(BATCH) {
            let mut rhs = DMatrix::<f64>::zeros(n, chunk.len());
            for (c, p) in chunk.iter().enumerate() {
                for i in 0..n {
                    rhs[(i, c)] = corr_unchecked(p, &self.points[i], &self.theta);
                }
            }
            l.solve_lower_triangular_mut(&mut rhs);
            let q: Vec<f64> = rhs.column_iter().map(|c| c.norm_squared()).collect();
            l.tr_solve_lower_triangular_mut(&mut rhs);
            for (c, q) in q.into_iter().enumerate() {
                out.push(q + self.nugget * rhs.column(c).norm_squared());
            }
        }
        out
    }

    /// `tr(R⁻¹M)` for the nugget-free `R`, from the series `Σ_k δ^k R̃^{-(k+1)}`.
    ///
    /// Terms shrink geometrically in every eigendirection of `R`; once their ratio
    /// settles the remaining tail is added in closed form. Summation stops early when
    /// the terms stop decreasing, which happens once they reach rounding noise.
    pub(crate) fn trace_refined(&self, m: &DMatrix<f64>) -> f64 {
        const MAX_TERMS: usize = 10_000;
        let mut x = self.chol.solve(m);
        let mut total = x.trace();
        let mut prev = total;
        let mut prev_ratio = f64::NAN;
        for _ in 0..MAX_TERMS {
            x = self.chol.solve(&x) * self.nugget;
            let t = x.trace();
            let ratio = t / prev;
            if !(ratio > 0.0 && ratio < 1.0) {
                break;
            }
            total += t;
            if t <= 1e-17 * total.abs() {
                break;
            }
            if (ratio - prev_ratio).abs() <= 1e-10 * ratio {
                total += t * ratio / (1.0 - ratio);
                break;
            }
            prev = t;
            prev_ratio = ratio;
        }
        total
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn ln_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// 2-norm condition number of the (nugget-augmented) correlation matrix.
    pub fn condition_number(&self) -> f64 {
        let mut r = corr_matrix_of(&self.points, &self.theta);
        for i in 0..r.nrows() {
            r[(i, i)] += self.nugget;
        }
        let ev = r.symmetric_eigenvalues();
        let max = ev.iter().cloned().fold(f64::MIN, f64::max);
        let min = ev.iter().cloned().fold(f64::MAX, f64::min);
        max / min
    }

    /// Condition number above `1e8` is treated as numerically singular.
    pub fn is_ill_conditioned(&self) -> bool {
        self.condition_number() > 1e8
    }
}

/// Normalized posterior variance `MSE(u; D, θ)` at a single point.
pub fn predict_mse(design: &Design, theta: &CorrelationParams, point: &[f64]) -> Result<f64> {
    if point.len() != design.n_factors() {
        return Err(Error::Dimension {
            expected: design.n_factors(),
            got: point.len(),
        });
    }
    Ok(CorrelationFactor::new(design, theta)?.mse(point))
}

/// Search box and multistart settings for maximum-likelihood fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Bounds on each `θ` coordinate, applied to every column.
    pub theta_bounds: (f64, f64),
    pub starts: usize,
    pub seed: u64,
    pub max_evals: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            theta_bounds: (1e-2, 1e3),
            starts: 8,
            seed: 0,
            max_evals: 600,
        }
    }
}

/// A fitted ordinary-kriging model.
#[derive(Debug, Clone)]
pub struct KrigingModel {
    design: Design,
    y: Vec<f64>,
    mu: f64,
    tau2: f64,
    theta: CorrelationParams,
    factor: CorrelationFactor,
    weights: DVector<f64>,
    constant: bool,
}

impl KrigingModel {
    /// Builds the model for fixed `θ`, profiling `μ` and `τ²` in closed form.
    pub fn with_theta(design: &Design, y: &[f64], theta: CorrelationParams) -> Result<Self> {
        check_y(design, y)?;
        let factor = CorrelationFactor::new(design, &theta)?;
        let prof = profile(&factor, y);
        let resid = DVector::from_iterator(y.len(), y.iter().map(|v| v - prof.mu));
        let weights = factor.solve(&resid);
        Ok(Self {
            design: design.clone(),
            y: y.to_vec(),
            mu: prof.mu,
            tau2: prof.tau2,
            theta,
            factor,
            weights,
            constant: false,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn tau2(&self) -> f64 {
        self.tau2
    }

    pub fn theta(&self) -> &CorrelationParams {
        &self.theta
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Set when the responses had zero variance and the model is the constant `μ`.
    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn factor(&self) -> &CorrelationFactor {
        &self.factor
    }

    /// Posterior mean `μ + r'R⁻¹(y - μ1)`.
    pub fn predict_mean(&self, point: &[f64]) -> f64 {
        if self.constant {
            return self.mu;
        }
        self.mu + self.factor.corr_vector(point).dot(&self.weights)
    }

    /// `τ² · MSE`.
    pub fn predict_variance(&self, point: &[f64]) -> f64 {
        self.tau2 * self.factor.mse(point)
    }

    pub(crate) fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// Profile negative log-likelihood (up to constants) at the fitted `θ`.
    pub fn neg_log_likelihood(&self) -> f64 {
        nll(&self.factor, &self.y)
    }
}

/// Posterior mean at one point.
pub fn predict_mean(model: &KrigingModel, point: &[f64]) -> f64 {
    model.predict_mean(point)
}

fn check_y(design: &Design, y: &[f64]) -> Result<()> {
    if y.len() != design.n_runs() {
        return Err(Error::Dimension {
            expected: design.n_runs(),
            got: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("responses must be finite"));
    }
    Ok(())
}

struct Profile {
    mu: f64,
    tau2: f64,
}

fn profile(factor: &CorrelationFactor, y: &[f64]) -> Profile {
    let n = y.len();
    let ones = DVector::from_element(n, 1.0);
    let yv = DVector::from_column_slice(y);
    let ri1 = factor.solve(&ones);
    let mu = ri1.dot(&yv) / ri1.dot(&ones);
    let resid = yv.map(|v| v - mu);
    let tau2 = (factor.solve(&resid).dot(&resid) / n as f64).max(0.0);
    Profile { mu, tau2 }
}

/// Largest training-point misfit `δ·|R̃⁻¹(y - μ1)|` caused by the nugget.
fn interpolation_residual(factor: &CorrelationFactor, y: &[f64]) -> f64 {
    let p = profile(factor, y);
    let resid = DVector::from_iterator(y.len(), y.iter().map(|v| v - p.mu));
    factor.nugget() * factor.solve(&resid).amax()
}

fn nll(factor: &CorrelationFactor, y: &[f64]) -> f64 {
    let p = profile(factor, y);
    if !(p.tau2 > 0.0) {
        return f64::INFINITY;
    }
    y.len() as f64 * p.tau2.ln() + factor.ln_det()
}

/// Maximum-likelihood kriging fit over `θ` with seeded multistart Nelder-Mead in log scale.
pub fn fit_kriging(design: &Design, y: &[f64], opts: &FitOptions) -> Result<KrigingModel> {
    check_y(design, y)?;
    let d = design.n_factors();
    let n = design.n_runs();
    if n < (d + 1).max(3) {
        return Err(Error::domain(format!(
            "fitting needs at least max(p+q+1, 3) = {} runs, got {n}",
            (d + 1).max(3)
        )));
    }
    let (tlo, thi) = opts.theta_bounds;
    if !(tlo > 0.0 && thi >= tlo && thi.is_finite()) {
        return Err(Error::domain("theta bounds must satisfy 0 < lo <= hi < inf"));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var <= 1e-28 * mean.abs().max(1.0).powi(2) {
        let theta = CorrelationParams::isotropic(d, thi)?;
        let factor = CorrelationFactor::new(design, &theta)?;
        return Ok(KrigingModel {
            design: design.clone(),
            y: y.to_vec(),
            mu: mean,
            tau2: 0.0,
            theta,
            weights: DVector::zeros(n),
            factor,
            constant: true,
        });
    }

    let (llo, lhi) = (tlo.ln(), thi.ln());
    let lo = vec![llo; d];
    let hi = vec![lhi; d];
    let points = design.rows().to_vec();
    let ymax = y.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let objective = |logt: &[f64]| -> f64 {
        let theta: Vec<f64> = logt.iter().map(|v| v.exp()).collect();
        match CorrelationFactor::from_points(points.clone(), theta) {
            Ok(f) if interpolation_residual(&f, y) <= INTERP_TOL * ymax => nll(&f, y),
            _ => f64::INFINITY,
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts: Vec<Vec<f64>> = (0..opts.starts.max(1))
        .map(|_| (0..d).map(|_| rng.random_range(llo..=lhi)).collect())
        .collect();
    let results: Vec<_> = starts
        .par_iter()
        .map(|s| nelder_mead_box(objective, s, &lo, &hi, 0.1, opts.max_evals, 1e-10))
        .collect();
    let best = results
        .iter()
        .enumerate()
        .filter(|(_, m)| m.f.is_finite())
        .min_by(|a, b| a.1.f.total_cmp(&b.1.f).then(a.0.cmp(&b.0)))
        .map(|(_, m)| m.x.clone());
    let logt = match best {
        Some(x) => x,
        None => return Err(Error::Conditioning { nugget: NUGGET_MAX }),
    };
    let theta = CorrelationParams::new(logt.iter().map(|v| v.exp()).collect())?;
    KrigingModel::with_theta(design, y, theta)
}
