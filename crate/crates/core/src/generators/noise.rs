//! Noise arrays: transformed, double transformed, and hybrid constructions.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{adapted_rule, irmse_1d, OptimaCache};
use crate::dist::{double_transform, inverse_transform, BetaWarp, NoiseModel};
use crate::error::{Error, Result};
use crate::generators::lhd::uniform_design;
use crate::gp::{factorize, CorrelationParams, Design, Transform};
use crate::optim::lbfgs;

fn noise_models<'a>(design: &Design, models: &'a [NoiseModel]) -> Result<Vec<(usize, &'a NoiseModel)>> {
    let cols = design.noise_columns();
    match models.len() {
        1 => Ok(cols.into_iter().map(|j| (j, &models[0])).collect()),
        m if m == cols.len() => Ok(cols.into_iter().zip(models).collect()),
        m => Err(Error::Dimension {
            expected: cols.len(),
            got: m,
        }),
    }
}

/// Maps every external noise column through the quantile function of its distribution.
///
/// `models` holds one distribution per noise column, or a single one shared by all.
pub fn transformed_noise(design: &Design, models: &[NoiseModel]) -> Result<Design> {
    let mut out = design.clone();
    for (j, m) in noise_models(design, models)? {
        let z = inverse_transform(&design.column(j), m)?;
        out = out.with_column(j, &z, Transform::Tr)?;
    }
    Ok(out)
}

/// Beta warp `B_α⁻¹` followed by the quantile function on every external noise column.
pub fn double_transformed_noise(design: &Design, models: &[NoiseModel], alpha: f64) -> Result<Design> {
    let warp = BetaWarp::new(alpha)?;
    let mut out = design.clone();
    for (j, m) in noise_models(design, models)? {
        let z = double_transform(&design.column(j), m, &warp)?;
        out = out.with_column(j, &z, Transform::Dt(alpha))?;
    }
    Ok(out)
}

/// Monotone piecewise-linear map from uniform levels `u_i* = (i - 0.5)/n` to noise levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transformation1D {
    u: Vec<f64>,
    z: Vec<f64>,
}

impl Transformation1D {
    /// Tabulates `z` (sorted into increasing order) against the midpoint levels.
    pub fn new(mut z: Vec<f64>) -> Result<Self> {
        if z.len() < 2 {
            return Err(Error::InvalidDesign("a transformation needs at least two levels".into()));
        }
        z.sort_by(f64::total_cmp);
        if z.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidDesign("transformation levels must be distinct".into()));
        }
        let u = uniform_design(z.len())?;
        Ok(Self { u, z })
    }

    pub fn u_levels(&self) -> &[f64] {
        &self.u
    }

    pub fn z_levels(&self) -> &[f64] {
        &self.z
    }

    /// Interpolates, extending the end segments linearly outside the tabulated range.
    pub fn apply(&self, u: f64) -> f64 {
        let n = self.u.len();
        let i = self.u.partition_point(|&v| v <= u).clamp(1, n - 1);
        let (u0, u1, z0, z1) = (self.u[i - 1], self.u[i], self.z[i - 1], self.z[i]);
        z0 + (u - u0) * (z1 - z0) / (u1 - u0)
    }

    /// Exact tabulated level for `u`, if `u` is one of the `u_i*`.
    pub fn level(&self, u: f64) -> Option<f64> {
        let tol = 1e-9 / self.u.len() as f64;
        let i = self.u.partition_point(|&v| v < u - tol);
        (i < self.u.len() && (self.u[i] - u).abs() <= tol).then(|| self.z[i])
    }
}

/// Replaces every external noise column of `u_design` by its tabulated noise levels.
pub fn hybrid_noise_design(u_design: &Design, t: &Transformation1D) -> Result<Design> {
    let mut out = u_design.clone();
    for j in u_design.noise_columns() {
        let z = u_design
            .column(j)
            .into_iter()
            .map(|u| {
                t.level(u).ok_or_else(|| {
                    Error::InvalidDesign(format!(
                        "noise column {} has level {u} that is not one of the {} tabulated levels",
                        u_design.factors()[j].name,
                        t.u.len()
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out = out.with_column(j, &z, Transform::Hybrid)?;
    }
    Ok(out)
}

/// Settings for the one-dimensional IRMSE-optimal design search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustOptions {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for RobustOptions {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_iter: 300,
        }
    }
}

/// Best design found for one correlation scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaOptimum {
    pub theta: f64,
    /// Sorted design points.
    pub points: Vec<f64>,
    pub irmse: f64,
    /// False when no restart met the gradient tolerance.
    pub converged: bool,
}

/// IRMSE and its gradient in the design points, on the rule adapted to the current points.
fn objective_and_gradient(d: &[f64], theta: f64, model: &NoiseModel, grad: &mut [f64]) -> f64 {
    let n = d.len();
    grad.iter_mut().for_each(|g| *g = 0.0);
    if d.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let Ok((nodes, weights)) = adapted_rule(d, model) else {
        return f64::INFINITY;
    };
    let r = DMatrix::from_fn(n, n, |i, j| (-theta * (d[i] - d[j]).powi(2)).exp());
    let Ok((chol, _)) = factorize(&r) else {
        return f64::INFINITY;
    };
    let m = nodes.len();
    let rz = DMatrix::from_fn(n, m, |i, k| (-theta * (nodes[k] - d[i]).powi(2)).exp());
    let a = chol.solve(&rz);
    let ra = &r * &a;
    let da = DMatrix::from_fn(n, m, |i, k| d[i] * a[(i, k)]);
    let rda = &r * &da;
    let mut value = 0.0;
    for k in 0..m {
        let s: f64 = rz.column(k).dot(&a.column(k));
        let mse = (1.0 - s).max(0.0);
        let root = mse.sqrt();
        value += weights[k] * root;
        if mse < 1e-12 {
            continue;
        }
        let scale = -weights[k] * 4.0 * theta / (2.0 * root);
        for i in 0..n {
            let b = d[i] * ra[(i, k)] - rda[(i, k)];
            grad[i] += scale * a[(i, k)] * ((nodes[k] - d[i]) * rz[(i, k)] + b);
        }
    }
    value
}

fn starting_points(n: usize, model: &NoiseModel, seed: u64, restart: usize) -> Result<Vec<f64>> {
    let base = uniform_design(n)?;
    match restart {
        0 => inverse_transform(&base, model),
        1 => double_transform(&base, model, &BetaWarp::new(BetaWarp::TWO_THIRDS)?),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(restart as u64);
            let warp = BetaWarp::new(rng.random_range(0.45..1.0))?;
            let h = 0.45 / n as f64;
            let mut u: Vec<f64> = base.iter().map(|v| v + rng.random_range(-h..h)).collect();
            u.sort_by(f64::total_cmp);
            double_transform(&u, model, &warp)
        }
    }
}

/// IRMSE-optimal `n`-point design for the noise distribution at correlation scale `θ`.
pub fn optimal_1d_design(n: usize, theta: f64, model: &NoiseModel, seed: u64, opts: &RobustOptions) -> Result<ThetaOptimum> {
    if n < 2 {
        return Err(Error::InvalidDesign(format!("a one-dimensional optimal design needs n >= 2, got {n}")));
    }
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::domain(format!("correlation parameter must be positive, got {theta}")));
    }
    if opts.restarts == 0 {
        return Err(Error::domain("at least one restart is required"));
    }
    model.validate()?;
    let (lo, hi) = model.support();
    let runs: Vec<Result<(Vec<f64>, f64, bool)>> = (0..opts.restarts)
        .into_par_iter()
        .map(|k| {
            let x0 = starting_points(n, model, seed, k)?;
            let fg = |x: &[f64], g: &mut [f64]| objective_and_gradient(x, theta, model, g);
            let m = lbfgs(fg, &x0, opts.max_iter, 1e-9);
            let mut pts: Vec<f64> = m.x.iter().map(|v| v.clamp(lo, hi)).collect();
            pts.sort_by(f64::total_cmp);
            let v = irmse_1d(&pts, theta, model)?;
            Ok((pts, v, m.converged))
        })
        .collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut converged = false;
    for run in runs {
        let (pts, v, conv) = run?;
        converged |= conv;
        let distinct = pts.windows(2).all(|w| w[1] - w[0] > 1e-6);
        if distinct && best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((pts, v));
        }
    }
    let (points, irmse) = best.ok_or(Error::Conditioning { nugget: crate::gp::NUGGET_MAX })?;
    Ok(ThetaOptimum {
        theta,
        points,
        irmse,
        converged,
    })
}

/// Outcome of the max-min efficiency selection over a set of correlation scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustDesign {
    /// One optimized design per scale, in the order given.
    pub candidates: Vec<ThetaOptimum>,
    /// `efficiency[a][b]`: efficiency of candidate `a` at scale `b`.
    pub efficiency: Vec<Vec<f64>>,
    pub min_efficiency: Vec<f64>,
    pub selected: usize,
    pub optima: OptimaCache,
    pub transformation: Transformation1D,
}

/// Optimizes a design for every `θ` in `thetas` and keeps the one with the best worst-case efficiency.
pub fn robust_1d_noise_design(
    n: usize,
    thetas: &[f64],
    model: &NoiseModel,
    seed: u64,
    opts: &RobustOptions,
) -> Result<RobustDesign> {
    if thetas.is_empty() {
        return Err(Error::domain("the set of correlation parameters is empty"));
    }
    let candidates = thetas
        .iter()
        .map(|&t| optimal_1d_design(n, t, model, seed, opts))
        .collect::<Result<Vec<_>>>()?;
    let table = candidates
        .iter()
        .map(|c| {
            thetas
                .iter()
                .map(|&t| irmse_1d(&c.points, t, model))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut optima = OptimaCache::new();
    for row in &table {
        for (b, &t) in thetas.iter().enumerate() {
            optima.offer(&CorrelationParams::isotropic(1, t)?, row[b]);
        }
    }
    let best: Vec<f64> = thetas
        .iter()
        .map(|&t| Ok(optima.get(&CorrelationParams::isotropic(1, t)?).unwrap_or(f64::NAN)))
        .collect::<Result<_>>()?;
    let efficiency: Vec<Vec<f64>> = table
        .iter()
        .map(|row| row.iter().zip(&best).map(|(v, o)| o / v).collect())
        .collect();
    let min_efficiency: Vec<f64> = efficiency
        .iter()
        .map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min))
        .collect();
    let selected = (0..candidates.len())
        .max_by(|&a, &b| min_efficiency[a].total_cmp(&min_efficiency[b]).then(b.cmp(&a)))
        .unwrap_or(0);
    let transformation = Transformation1D::new(candidates[selected].points.clone())?;
    Ok(RobustDesign {
        candidates,
        efficiency,
        min_efficiency,
        selected,
        optima,
        transformation,
    })
}
