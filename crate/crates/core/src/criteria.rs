//! Weighted design criteria.
//!
//! All criteria integrate the normalized kriging variance `MSE(x, z)` over the
//! control region (uniform weight) and the noise distribution (weight built from
//! the noise density `f`). Integrals reduce in a fixed order so that results are
//! bitwise reproducible regardless of the thread count.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{std_norm_cdf, NoiseModel};
use crate::error::{Error, Result};
use crate::gp::{CorrelationFactor, CorrelationParams, Design, Role};
use crate::quadrature::{Axis, GaussLegendre, PointSet, QuadratureSpec, Rule1d};

/// Monte Carlo size used when no rule is given and there are three or more dimensions.
pub const DEFAULT_MC_POINTS: usize = 1 << 14;

/// Settings shared by the integrated criteria.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionConfig {
    /// Power `k` in `IRMSE_k`.
    pub k: f64,
    /// `None` picks a tensor rule for up to two dimensions and Monte Carlo beyond.
    pub quadrature: Option<QuadratureSpec>,
    /// Candidate correlation parameters for max-min efficiency.
    pub thetas: Vec<CorrelationParams>,
}

impl Default for CriterionConfig {
    fn default() -> Self {
        Self {
            k: 2.0,
            quadrature: None,
            thetas: Vec::new(),
        }
    }
}

impl CriterionConfig {
    pub fn with_k(k: f64) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn with_quadrature(mut self, spec: QuadratureSpec) -> Self {
        self.quadrature = Some(spec);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::domain(format!("criterion power k must be positive, got {}", self.k)));
        }
        if let Some(q) = &self.quadrature {
            q.validate()?;
        }
        Ok(())
    }

    /// The rule actually used for a `dims`-dimensional integral.
    pub fn quadrature_for(&self, dims: usize) -> QuadratureSpec {
        match self.quadrature {
            Some(q) => q,
            None if dims <= 2 => QuadratureSpec::default(),
            None => QuadratureSpec::MonteCarlo {
                points: DEFAULT_MC_POINTS,
                seed: 0,
            },
        }
    }
}

fn noise_density(design: &Design, model: &NoiseModel, point: &[f64]) -> f64 {
    design
        .factors()
        .iter()
        .zip(point)
        .filter(|(f, _)| f.role == Role::NoiseExt)
        .map(|(_, &z)| model.pdf(z))
        .product()
}

fn check_point(design: &Design, point: &[f64]) -> Result<()> {
    if point.len() != design.n_factors() {
        return Err(Error::Dimension {
            expected: design.n_factors(),
            got: point.len(),
        });
    }
    Ok(())
}

/// Weighted root mean squared error `√MSE · f(z)` at one point.
pub fn wrmse(design: &Design, theta: &CorrelationParams, point: &[f64], model: &NoiseModel) -> Result<f64> {
    check_point(design, point)?;
    let factor = CorrelationFactor::new(design, theta)?;
    Ok(factor.mse(point).sqrt() * noise_density(design, model, point))
}

/// WRMSE at many points, sharing one factorization.
pub fn wrmse_many(
    design: &Design,
    theta: &CorrelationParams,
    points: &[Vec<f64>],
    model: &NoiseModel,
) -> Result<Vec<f64>> {
    for p in points {
        check_point(design, p)?;
    }
    let factor = CorrelationFactor::new(design, theta)?;
    Ok(factor
        .mse_many(points)
        .into_iter()
        .zip(points)
        .map(|(m, p)| m.sqrt() * noise_density(design, model, p))
        .collect())
}

/// Integration axes for a design: uniform for control columns, `f^k / C_k` for noise columns.
fn axes(design: &Design, model: &NoiseModel, k: f64) -> Result<Vec<Axis>> {
    let weighted = model.power_weight(k)?;
    Ok(design
        .factors()
        .iter()
        .map(|f| match f.role {
            Role::NoiseExt => Axis::Weighted(weighted.clone()),
            _ => Axis::Unit,
        })
        .collect())
}

/// `∫ g(MSE) dW` over a point set, reduced in point order.
fn integrate_mse(factor: &CorrelationFactor, set: &PointSet, g: impl Fn(f64) -> f64 + Sync) -> f64 {
    const CHUNK: usize = 1024;
    let partial: Vec<f64> = set
        .points
        .par_chunks(CHUNK)
        .zip(set.weights.par_chunks(CHUNK))
        .map(|(pts, ws)| {
            factor
                .mse_many(pts)
                .into_iter()
                .zip(ws)
                .map(|(m, w)| w * g(m))
                .sum::<f64>()
        })
        .collect();
    partial.iter().sum()
}

fn power_integral(design: &Design, theta: &CorrelationParams, model: &NoiseModel, cfg: &CriterionConfig) -> Result<f64> {
    cfg.validate()?;
    model.validate()?;
    let factor = CorrelationFactor::new(design, theta)?;
    let ax = axes(design, model, cfg.k)?;
    let set = PointSet::new(&ax, cfg.quadrature_for(ax.len()))?;
    let half = 0.5 * cfg.k;
    Ok(integrate_mse(&factor, &set, |m| m.powf(half)))
}

/// Integrated root mean squared error `∫∫ √MSE · f(z) dz dx`.
pub fn irmse(design: &Design, theta: &CorrelationParams, model: &NoiseModel, cfg: &CriterionConfig) -> Result<f64> {
    let cfg = CriterionConfig { k: 1.0, ..cfg.clone() };
    power_integral(design, theta, model, &cfg)
}

/// `[∫∫ (√MSE · f)^k / C_k]^{1/k}`.
pub fn irmse_k(design: &Design, theta: &CorrelationParams, model: &NoiseModel, cfg: &CriterionConfig) -> Result<f64> {
    if cfg.k == 2.0 {
        return Ok(imse(design, theta, model, cfg)?.sqrt());
    }
    Ok(power_integral(design, theta, model, cfg)?.powf(1.0 / cfg.k))
}

/// `∫ exp{-θ[(t-a)² + (t-b)²]} w(t) dt` for one axis.
enum AxisKernel {
    Unit,
    Normal { mean: f64, sd: f64 },
    Rule(Rule1d),
}

impl AxisKernel {
    fn new(axis: &Axis, spec: QuadratureSpec) -> Result<Self> {
        Ok(match axis {
            Axis::Unit => AxisKernel::Unit,
            Axis::Weighted(NoiseModel::Normal { mean, sd }) => AxisKernel::Normal { mean: *mean, sd: *sd },
            Axis::Weighted(_) => {
                let spec = match spec {
                    QuadratureSpec::MonteCarlo { .. } => QuadratureSpec::default(),
                    s => s,
                };
                AxisKernel::Rule(Rule1d::new(axis, spec)?)
            }
        })
    }

    fn eval(&self, theta: f64, a: f64, b: f64) -> f64 {
        let c = 0.5 * (a + b);
        let cross = (-0.5 * theta * (a - b) * (a - b)).exp();
        match self {
            AxisKernel::Unit => {
                let s = 2.0 * theta.sqrt();
                let mass = std_norm_cdf(s * (1.0 - c)) - std_norm_cdf(-s * c);
                (std::f64::consts::PI / (2.0 * theta)).sqrt() * mass * cross
            }
            AxisKernel::Normal { mean, sd } => {
                let v = 1.0 + 4.0 * theta * sd * sd;
                (-2.0 * theta * (c - mean) * (c - mean) / v).exp() / v.sqrt() * cross
            }
            AxisKernel::Rule(rule) => rule.integrate(|t| (-2.0 * theta * (t - c) * (t - c)).exp()) * cross,
        }
    }
}

/// `M_ij = ∫ r_i(u) r_j(u) dW(u)` for a product weight.
fn kernel_matrix(points: &[Vec<f64>], theta: &[f64], kernels: &[AxisKernel]) -> DMatrix<f64> {
    let n = points.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v: f64 = kernels
                .iter()
                .enumerate()
                .map(|(l, k)| k.eval(theta[l], points[i][l], points[j][l]))
                .product();
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Integrated MSE with weight `f²/C₂` on noise columns.
///
/// The integrand separates across dimensions, so this is `1 - tr(R⁻¹M)` with `M`
/// built from one-dimensional integrals (closed form for uniform and normal weights).
pub fn imse(design: &Design, theta: &CorrelationParams, model: &NoiseModel, cfg: &CriterionConfig) -> Result<f64> {
    cfg.validate()?;
    model.validate()?;
    let factor = CorrelationFactor::new(design, theta)?;
    let ax = axes(design, model, 2.0)?;
    let spec = cfg.quadrature.unwrap_or_default();
    let kernels = ax
        .iter()
        .map(|a| AxisKernel::new(a, spec))
        .collect::<Result<Vec<_>>>()?;
    let m = kernel_matrix(design.rows(), theta.values(), &kernels);
    Ok(1.0 - factor.trace_refined(&m))
}

/// Best-known criterion values per `θ`, used as efficiency denominators.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimaCache {
    entries: Vec<(CorrelationParams, f64)>,
}

impl OptimaCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, theta: &CorrelationParams) -> Option<f64> {
        self.entries.iter().find(|(t, _)| t == theta).map(|(_, v)| *v)
    }

    /// Records `value` for `θ` if it beats the stored one. Returns whether it did.
    pub fn offer(&mut self, theta: &CorrelationParams, value: f64) -> bool {
        match self.entries.iter_mut().find(|(t, _)| t == theta) {
            Some((_, v)) if value < *v => {
                *v = value;
                true
            }
            Some(_) => false,
            None => {
                self.entries.push((theta.clone(), value));
                true
            }
        }
    }

    pub fn entries(&self) -> &[(CorrelationParams, f64)] {
        &self.entries
    }
}

/// Criterion value `IRMSE_k` used for efficiencies (`k = 1` gives plain IRMSE).
pub fn criterion_value(
    design: &Design,
    theta: &CorrelationParams,
    model: &NoiseModel,
    cfg: &CriterionConfig,
) -> Result<f64> {
    irmse_k(design, theta, model, cfg)
}

/// Efficiencies `IRMSE(D*(θ), θ) / IRMSE(D, θ)` for each `θ` in `cfg.thetas`.
///
/// A design that beats the cached optimum replaces it, so efficiencies never exceed 1.
pub fn efficiencies(
    design: &Design,
    model: &NoiseModel,
    cfg: &CriterionConfig,
    optima: &mut OptimaCache,
) -> Result<Vec<f64>> {
    if cfg.thetas.is_empty() {
        return Err(Error::domain("the set of correlation parameters is empty"));
    }
    cfg.thetas
        .iter()
        .map(|t| {
            if optima.get(t).is_none() {
                return Err(Error::MissingTheta(t.to_string()));
            }
            let v = criterion_value(design, t, model, cfg)?;
            optima.offer(t, v);
            Ok(optima.get(t).unwrap_or(v) / v)
        })
        .collect()
}

/// Minimum efficiency of `design` over `cfg.thetas`.
pub fn min_efficiency(
    design: &Design,
    model: &NoiseModel,
    cfg: &CriterionConfig,
    optima: &mut OptimaCache,
) -> Result<f64> {
    Ok(efficiencies(design, model, cfg, optima)?
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

fn sorted_points(points: &[f64]) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::InvalidDesign("design has no runs".into()));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDesign("design has non-finite entries".into()));
    }
    let mut d = points.to_vec();
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Integrates `g(z, nearest design point)` against `f` on cells between midpoints.
fn integrate_cells(d: &[f64], model: &NoiseModel, g: impl Fn(f64, f64) -> f64) -> Result<f64> {
    const CELL_NODES: usize = 24;
    let gl = GaussLegendre::new(CELL_NODES)?;
    let (lo, hi) = model.effective_support();
    let mut cuts = vec![lo];
    for w in d.windows(2) {
        let m = 0.5 * (w[0] + w[1]);
        if m > lo && m < hi {
            cuts.push(m);
        }
    }
    cuts.push(hi);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let q = nearest(d, mid);
        // split each cell at its design point, where |z - Q| has a kink
        let pieces: &[(f64, f64)] = if q > w[0] && q < w[1] {
            &[(w[0], q), (q, w[1])]
        } else {
            &[(w[0], w[1])]
        };
        for &(a, b) in pieces {
            total += gl.integrate(a, b, |z| g(z, q) * model.pdf(z));
        }
    }
    Ok(total)
}

fn nearest(d: &[f64], z: f64) -> f64 {
    let i = d.partition_point(|&v| v < z);
    match (i.checked_sub(1).map(|j| d[j]), d.get(i)) {
        (Some(a), Some(&b)) => {
            if z - a <= b - z {
                a
            } else {
                b
            }
        }
        (Some(a), None) => a,
        (None, Some(&b)) => b,
        (None, None) => z,
    }
}

/// `∫ √(1 - R²(z - Q(z))) f(z) dz`, an upper bound on the one-dimensional IRMSE.
pub fn irmse_upper_bound(points: &[f64], theta: f64, model: &NoiseModel) -> Result<f64> {
    check_scale(theta)?;
    let d = sorted_points(points)?;
    integrate_cells(&d, model, |z, q| {
        let h = z - q;
        (1.0 - (-2.0 * theta * h * h).exp()).max(0.0).sqrt()
    })
}

/// Large-`n` form of the bound: `√(2θ) ∫ |z - Q(z)| f(z) dz`.
pub fn irmse_bound_asymptotic(points: &[f64], theta: f64, model: &NoiseModel) -> Result<f64> {
    check_scale(theta)?;
    let d = sorted_points(points)?;
    Ok((2.0 * theta).sqrt() * integrate_cells(&d, model, |z, q| (z - q).abs())?)
}

fn check_scale(theta: f64) -> Result<()> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::domain(format!("correlation parameter must be positive, got {theta}")));
    }
    Ok(())
}

/// Gauss-Legendre nodes per cell of the design-adapted one-dimensional rule.
const CELL_GL: usize = 8;

/// Nodes and `f`-weights on cells split at the design points, so that the kinks of
/// `√MSE` fall on cell boundaries. Long cells are cut into panels of one twentieth of
/// the effective support width at most.
pub(crate) fn adapted_rule(points: &[f64], model: &NoiseModel) -> Result<(Vec<f64>, Vec<f64>)> {
    let gl = GaussLegendre::new(CELL_GL)?;
    let (lo, hi) = model.effective_support();
    let max_len = (hi - lo) / 20.0;
    let mut cuts = vec![lo];
    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    cuts.extend(sorted.into_iter().filter(|&v| v > lo && v < hi));
    if let NoiseModel::Empirical(t) = model {
        cuts.extend_from_slice(t.knots());
        cuts.sort_by(f64::total_cmp);
    }
    cuts.push(hi);
    cuts.dedup();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for w in cuts.windows(2) {
        let pieces = ((w[1] - w[0]) / max_len).ceil().max(1.0) as usize;
        for k in 0..pieces {
            let a = w[0] + (w[1] - w[0]) * k as f64 / pieces as f64;
            let b = w[0] + (w[1] - w[0]) * (k + 1) as f64 / pieces as f64;
            let (x, wt) = gl.on_interval(a, b);
            for (x, wt) in x.into_iter().zip(wt) {
                let f = model.pdf(x);
                if f > 0.0 {
                    nodes.push(x);
                    weights.push(wt * f);
                }
            }
        }
    }
    Ok((nodes, weights))
}

/// One-dimensional noise-only IRMSE `∫ √MSE(z) f(z) dz` on a design-adapted rule.
pub fn irmse_1d(points: &[f64], theta: f64, model: &NoiseModel) -> Result<f64> {
    check_scale(theta)?;
    model.validate()?;
    let d = sorted_points(points)?;
    let factor = internal_factor(&d, theta)?;
    let (nodes, weights) = adapted_rule(&d, model)?;
    let pts: Vec<Vec<f64>> = nodes.iter().map(|&z| vec![z]).collect();
    Ok(factor
        .mse_many(&pts)
        .into_iter()
        .zip(&weights)
        .map(|(m, w)| w * m.sqrt())
        .sum())
}

/// Internal noise `e ~ N(0, σ_e)` on a factor with Gaussian correlation scale `θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InternalNoiseSpec {
    pub sigma_e: f64,
    pub theta: f64,
}

impl InternalNoiseSpec {
    pub fn new(sigma_e: f64, theta: f64) -> Result<Self> {
        let s = Self { sigma_e, theta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_e.is_finite() && self.sigma_e > 0.0) {
            return Err(Error::domain(format!("sigma_e must be positive, got {}", self.sigma_e)));
        }
        check_scale(self.theta)
    }

    fn spread(&self) -> f64 {
        1.0 + 2.0 * self.theta * self.sigma_e * self.sigma_e
    }
}

/// `A(x)`: expected products `r_i(x+e) r_j(x+e)` under the weight `φ²(e)/C₂`.
pub fn a_matrix(x: f64, points: &[f64], spec: &InternalNoiseSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let n = points.len();
    let s = spec.spread();
    let th = spec.theta;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let (a, b) = (points[i], points[j]);
        let c = x - 0.5 * (a + b);
        (-2.0 * th / s * c * c - 0.5 * th * (a - b) * (a - b)).exp() / s.sqrt()
    }))
}

/// `Ā = ∫₀¹ A(x) dx` in closed form.
pub fn a_bar_matrix(points: &[f64], spec: &InternalNoiseSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let n = points.len();
    let th = spec.theta;
    let root_s = spec.spread().sqrt();
    let front = (std::f64::consts::PI / (2.0 * th)).sqrt();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let (a, b) = if i <= j {
            (points[i], points[j])
        } else {
            (points[j], points[i])
        };
        let hi = th.sqrt() * (2.0 - a - b) / root_s;
        let lo = -th.sqrt() * (a + b) / root_s;
        front * (std_norm_cdf(hi) - std_norm_cdf(lo)) * (-0.5 * th * (a - b) * (a - b)).exp()
    }))
}

/// IMSE of a one-dimensional design for a factor with internal noise.
///
/// With the weight `φ²/C₂` the leading constant is exactly one, leaving `1 - tr(R⁻¹Ā)`.
pub fn imse_internal(points: &[f64], spec: &InternalNoiseSpec) -> Result<f64> {
    spec.validate()?;
    if points.is_empty() {
        return Err(Error::InvalidDesign("design has no runs".into()));
    }
    if let Some(v) = points.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidDesign(format!("internal-noise level {v} outside [0, 1]")));
    }
    let factor = internal_factor(points, spec.theta)?;
    let abar = a_bar_matrix(points, spec)?;
    Ok(1.0 - factor.trace_refined(&abar))
}

pub(crate) fn internal_factor(points: &[f64], theta: f64) -> Result<CorrelationFactor> {
    CorrelationFactor::from_points(points.iter().map(|&v| vec![v]).collect(), vec![theta])
}


#[cfg(test)]
mod tests {
    use super::*;

    fn corr_1d(a: f64, b: f64, theta: f64) -> f64 {
        crate::gp::corr_unchecked(&[a], &[b], &[theta])
    }
    use crate::gp::Design;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn coded() -> NoiseModel {
        NoiseModel::coded_normal()
    }

    fn noise_design(z: &[f64]) -> Design {
        Design::with_roles(z.iter().map(|&v| vec![v]).collect(), 0, 1).unwrap()
    }

    /// Brute-force IMSE by tensor Gauss-Legendre on the raw integrand.
    fn imse_oracle(design: &Design, theta: &CorrelationParams, model: &NoiseModel) -> f64 {
        let c2 = model.ck(2.0).unwrap();
        let (lo, hi) = model.effective_support();
        let gl = GaussLegendre::new(10).unwrap();
        let axis_rule = |noise: bool| {
            let (a, b) = if noise { (lo, hi) } else { (0.0, 1.0) };
            let panels = 60;
            let mut nodes = Vec::new();
            let mut wts = Vec::new();
            for k in 0..panels {
                let (x, w) = gl.on_interval(
                    a + (b - a) * k as f64 / panels as f64,
                    a + (b - a) * (k + 1) as f64 / panels as f64,
                );
                for (x, w) in x.into_iter().zip(w) {
                    let wt = if noise { w * model.pdf(x).powi(2) / c2 } else { w };
                    nodes.push(x);
                    wts.push(wt);
                }
            }
            Rule1d { nodes, weights: wts }
        };
        let rules: Vec<Rule1d> = design
            .factors()
            .iter()
            .map(|f| axis_rule(f.role == Role::NoiseExt))
            .collect();
        let set = PointSet::tensor(&rules);
        let factor = CorrelationFactor::new(design, theta).unwrap();
        set.points
            .iter()
            .zip(&set.weights)
            .map(|(p, w)| w * (1.0 - factor.quad_form(p)))
            .sum()
    }

    #[test]
    fn wrmse_vanishes_at_design_rows_and_outside_support() {
        let d = noise_design(&[0.2, 0.5, 0.7]);
        let th = CorrelationParams::isotropic(1, 10.0).unwrap();
        for z in [0.2, 0.5, 0.7] {
            assert!(wrmse(&d, &th, &[z], &coded()).unwrap() < 1e-6);
        }
        let trunc = NoiseModel::truncated_normal(0.5, 1.0 / 6.0, 0.0, 1.0).unwrap();
        assert_eq!(wrmse(&d, &th, &[1.2], &trunc).unwrap(), 0.0);
    }

    #[test]
    fn imse_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..4 {
            let rows: Vec<Vec<f64>> = (0..6)
                .map(|_| vec![rng.random::<f64>(), 0.5 + 0.3 * (rng.random::<f64>() - 0.5) * 4.0])
                .collect();
            let d = Design::with_roles(rows, 1, 1).unwrap();
            let th = CorrelationParams::new(vec![rng.random_range(1.0..20.0), rng.random_range(1.0..20.0)]).unwrap();
            let fast = imse(&d, &th, &coded(), &CriterionConfig::default()).unwrap();
            let slow = imse_oracle(&d, &th, &coded());
            assert_relative_eq!(fast, slow, epsilon = 1e-9);
        }
    }

    #[test]
    fn imse_general_axis_uses_quadrature() {
        let d = noise_design(&[0.3, 0.6]);
        let th = CorrelationParams::isotropic(1, 5.0).unwrap();
        let m = NoiseModel::truncated_normal(0.5, 0.2, 0.0, 1.0).unwrap();
        let fast = imse(&d, &th, &m, &CriterionConfig::default()).unwrap();
        assert_relative_eq!(fast, imse_oracle(&d, &th, &m), epsilon = 1e-9);
    }

    #[test]
    fn irmse_k_two_squared_is_imse() {
        let d = noise_design(&[0.1, 0.45, 0.8]);
        let th = CorrelationParams::isotropic(1, 8.0).unwrap();
        let cfg = CriterionConfig::default();
        let a = irmse_k(&d, &th, &coded(), &cfg).unwrap();
        let b = imse(&d, &th, &coded(), &cfg).unwrap();
        assert!((a * a - b).abs() < 1e-10);
    }

    #[test]
    fn irmse_k_one_equals_irmse() {
        let d = noise_design(&[0.1, 0.45, 0.8]);
        let th = CorrelationParams::isotropic(1, 8.0).unwrap();
        let cfg = CriterionConfig::with_k(1.0);
        let a = irmse_k(&d, &th, &coded(), &cfg).unwrap();
        let b = irmse(&d, &th, &coded(), &cfg).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn single_point_with_large_theta_is_near_one() {
        let d = Design::with_roles(vec![vec![0.5, 0.5]], 1, 1).unwrap();
        let th = CorrelationParams::isotropic(2, 1e4).unwrap();
        let cfg = CriterionConfig::with_k(1.0);
        assert!((irmse(&d, &th, &coded(), &cfg).unwrap() - 1.0).abs() < 1e-3);
        assert!((imse(&d, &th, &coded(), &cfg).unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn uniform_noise_imse_equals_unweighted() {
        let rows = vec![vec![0.2], vec![0.9]];
        let u = NoiseModel::uniform(0.0, 1.0).unwrap();
        let th = CorrelationParams::isotropic(1, 3.0).unwrap();
        let as_noise = imse(&Design::with_roles(rows.clone(), 0, 1).unwrap(), &th, &u, &CriterionConfig::default());
        let as_control = imse(&Design::with_roles(rows, 1, 0).unwrap(), &th, &u, &CriterionConfig::default());
        assert_relative_eq!(as_noise.unwrap(), as_control.unwrap(), epsilon = 1e-14);
    }

    #[test]
    fn imse_decreases_when_a_point_is_added() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let th = CorrelationParams::new(vec![4.0, 7.0]).unwrap();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut last = f64::INFINITY;
        for _ in 0..10 {
            rows.push(vec![rng.random(), rng.random_range(0.0..1.0)]);
            let d = Design::with_roles(rows.clone(), 1, 1).unwrap();
            let v = imse(&d, &th, &coded(), &CriterionConfig::default()).unwrap();
            assert!(v <= last + 1e-6, "{v} > {last}");
            last = v;
        }
    }

    #[test]
    fn criteria_ignore_row_order() {
        let rows = vec![vec![0.1, 0.3], vec![0.5, 0.7], vec![0.9, 0.45], vec![0.3, 0.6]];
        let d = Design::with_roles(rows, 1, 1).unwrap();
        let p = d.permuted(&[2, 0, 3, 1]).unwrap();
        let th = CorrelationParams::new(vec![3.0, 9.0]).unwrap();
        let cfg = CriterionConfig::with_k(1.5);
        for f in [irmse, irmse_k, imse] {
            assert_relative_eq!(
                f(&d, &th, &coded(), &cfg).unwrap(),
                f(&p, &th, &coded(), &cfg).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn irmse_k_invariant_to_rescaled_density() {
        // a tabulated density known only up to a constant gives the same criterion
        let knots: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
        let shape = |z: f64| 1.0 + z * (1.0 - z);
        let cdf_of = |scale: f64| {
            let mut acc = vec![0.0];
            for w in knots.windows(2) {
                let prev = *acc.last().unwrap();
                let mid = 0.5 * (w[0] + w[1]);
                acc.push(prev + scale * shape(mid) * (w[1] - w[0]));
            }
            let tot = *acc.last().unwrap();
            acc.iter().map(|v| v / tot).collect::<Vec<_>>()
        };
        let a = NoiseModel::Empirical(crate::dist::EmpiricalCdf::new(knots.clone(), cdf_of(1.0)).unwrap());
        let b = NoiseModel::Empirical(crate::dist::EmpiricalCdf::new(knots.clone(), cdf_of(7.5)).unwrap());
        let d = noise_design(&[0.2, 0.55, 0.9]);
        let th = CorrelationParams::isotropic(1, 12.0).unwrap();
        let cfg = CriterionConfig::with_k(3.0);
        assert_relative_eq!(
            irmse_k(&d, &th, &a, &cfg).unwrap(),
            irmse_k(&d, &th, &b, &cfg).unwrap(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn cross_array_identity() {
        let dx = Design::with_roles(vec![vec![0.1, 0.8], vec![0.6, 0.2], vec![0.9, 0.9]], 2, 0).unwrap();
        let dz = Design::with_roles(vec![vec![0.3], vec![0.5], vec![0.75], vec![0.62]], 0, 1).unwrap();
        let mut rows = Vec::new();
        for a in dx.rows() {
            for b in dz.rows() {
                rows.push([a.clone(), b.clone()].concat());
            }
        }
        let d = Design::with_roles(rows, 2, 1).unwrap();
        let thx = [4.0, 2.5];
        let thz = [11.0];
        let cfg = CriterionConfig::default();
        let full = imse(&d, &CorrelationParams::from_parts(&thx, &thz).unwrap(), &coded(), &cfg).unwrap();
        let ix = imse(&dx, &CorrelationParams::new(thx.to_vec()).unwrap(), &coded(), &cfg).unwrap();
        let iz = imse(&dz, &CorrelationParams::new(thz.to_vec()).unwrap(), &coded(), &cfg).unwrap();
        assert!((full - (1.0 - (1.0 - ix) * (1.0 - iz))).abs() < 1e-8);
    }

    #[test]
    fn efficiency_of_optimum_is_one_and_cache_updates() {
        let d = noise_design(&[0.3, 0.5, 0.7]);
        let th = CorrelationParams::isotropic(1, 10.0).unwrap();
        let cfg = CriterionConfig {
            k: 1.0,
            quadrature: None,
            thetas: vec![th.clone()],
        };
        let mut cache = OptimaCache::new();
        let v = criterion_value(&d, &th, &coded(), &cfg).unwrap();
        cache.offer(&th, v);
        assert_eq!(min_efficiency(&d, &coded(), &cfg, &mut cache).unwrap(), 1.0);

        // a worse design keeps efficiency below one; a better one takes over the cache
        let worse = noise_design(&[0.45, 0.5, 0.55]);
        assert!(min_efficiency(&worse, &coded(), &cfg, &mut cache).unwrap() < 1.0);
        let mut stale = OptimaCache::new();
        stale.offer(&th, 10.0);
        assert_eq!(min_efficiency(&worse, &coded(), &cfg, &mut stale).unwrap(), 1.0);
        assert!(stale.get(&th).unwrap() < 10.0);

        let other = CorrelationParams::isotropic(1, 20.0).unwrap();
        let cfg2 = CriterionConfig {
            thetas: vec![other],
            ..cfg
        };
        assert!(matches!(
            min_efficiency(&d, &coded(), &cfg2, &mut cache),
            Err(Error::MissingTheta(_))
        ));
    }

    #[test]
    fn upper_bound_dominates_irmse() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cfg = CriterionConfig::with_k(1.0).with_quadrature(QuadratureSpec::Composite { nodes: 2000 });
        for i in 0..50 {
            let n = rng.random_range(2..12);
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let theta = if i % 2 == 0 { 5.0 } else { 30.0 };
            let d = noise_design(&z);
            let th = CorrelationParams::isotropic(1, theta).unwrap();
            let exact = irmse(&d, &th, &coded(), &cfg).unwrap();
            let bound = irmse_upper_bound(&z, theta, &coded()).unwrap();
            assert!(bound >= exact - 1e-9, "{bound} < {exact}");
        }
    }

    #[test]
    fn upper_bound_matches_asymptotic_form_for_dense_design() {
        let z: Vec<f64> = (0..200).map(|i| (i as f64 + 0.5) / 200.0).collect();
        let b = irmse_upper_bound(&z, 10.0, &coded()).unwrap();
        let a = irmse_bound_asymptotic(&z, 10.0, &coded()).unwrap();
        assert!((b - a).abs() <= 0.15 * a, "{b} vs {a}");
    }

    #[test]
    fn irmse_1d_matches_general_irmse() {
        let z = [0.12, 0.4, 0.47, 0.66, 0.9];
        let cfg = CriterionConfig::with_k(1.0).with_quadrature(QuadratureSpec::Composite { nodes: 4000 });
        for theta in [2.0, 10.0, 60.0] {
            let th = CorrelationParams::isotropic(1, theta).unwrap();
            let a = irmse_1d(&z, theta, &coded()).unwrap();
            let b = irmse(&noise_design(&z), &th, &coded(), &cfg).unwrap();
            // sqrt(MSE) has kinks at the design points, which the composite rule does not split on
            assert_relative_eq!(a, b, max_relative = 1e-5);
        }
    }

    #[test]
    fn a_matrix_limits() {
        let pts = [0.1, 0.35, 0.8];
        let tiny = InternalNoiseSpec::new(1e-12, 50.0).unwrap();
        let x = 0.3;
        let a = a_matrix(x, &pts, &tiny).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = corr_1d(x, pts[i], 50.0) * corr_1d(x, pts[j], 50.0);
                assert!((a[(i, j)] - want).abs() < 1e-8);
            }
        }
        let spec = InternalNoiseSpec::new(1.0 / 12.0, 50.0).unwrap();
        let a = a_matrix(pts[1], &pts, &spec).unwrap();
        assert_relative_eq!(a[(1, 1)], 1.0 / (1.0 + 2.0 * 50.0 / 144.0_f64).sqrt(), epsilon = 1e-15);
        let abar = a_bar_matrix(&pts, &spec).unwrap();
        assert!((&abar - abar.transpose()).amax() <= 1e-12);
    }

    #[test]
    fn a_matrix_matches_monte_carlo() {
        let spec = InternalNoiseSpec::new(1.0 / 12.0, 50.0).unwrap();
        let pts = [0.2, 0.3];
        let x = 0.27;
        let a = a_matrix(x, &pts, &spec).unwrap();
        // φ²(e)/C₂ is the N(0, σ_e/√2) density
        let sd = spec.sigma_e / 2f64.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let normal = rand_distr::Normal::new(0.0, sd).unwrap();
        let m = 100_000;
        let mut acc = 0.0;
        for _ in 0..m {
            let e: f64 = rng.sample(normal);
            acc += corr_1d(x + e, pts[0], 50.0) * corr_1d(x + e, pts[1], 50.0);
        }
        let mc = acc / m as f64;
        assert!((mc - a[(0, 1)]).abs() <= 0.01 * a[(0, 1)], "{mc} vs {}", a[(0, 1)]);
    }

    #[test]
    fn a_bar_is_integral_of_a() {
        let spec = InternalNoiseSpec::new(1.0 / 12.0, 50.0).unwrap();
        let pts = [0.05, 0.4, 0.93];
        let gl = GaussLegendre::new(200).unwrap();
        let abar = a_bar_matrix(&pts, &spec).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let q = gl.integrate(0.0, 1.0, |x| a_matrix(x, &pts, &spec).unwrap()[(i, j)]);
                assert_relative_eq!(q, abar[(i, j)], max_relative = 1e-12);
            }
        }
    }
}
