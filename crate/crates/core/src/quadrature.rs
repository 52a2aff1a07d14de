//! Gauss-Legendre and Gauss-Hermite rules, and the weighted rules used by the criteria.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::NoiseModel;
use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("Gauss-Legendre rule needs at least one node"));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        (
            self.nodes.iter().map(|x| c + h * x).collect(),
            self.weights.iter().map(|w| h * w).collect(),
        )
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        let s: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(c + h * x))
            .sum();
        h * s
    }
}

/// Legendre polynomial P_n(x) and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Hermite rule for the standard normal measure (weights sum to one).
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::domain("Gauss-Hermite rule needs at least one node"));
    }
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // symmetrize against eigen-solver noise
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-x, w);
        pairs[j] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Ok((
        pairs.iter().map(|p| p.0).collect(),
        pairs.iter().map(|p| p.1 / total).collect(),
    ))
}

/// How integrals over the design region are approximated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum QuadratureSpec {
    /// Gauss-Legendre on bounded axes, Gauss-Hermite on normal axes.
    Tensor { nodes: usize },
    /// Gauss-Legendre panels of ten nodes across the (effective) support.
    Composite { nodes: usize },
    /// Seeded Monte Carlo with inverse-transform sampling.
    MonteCarlo { points: usize, seed: u64 },
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec::Tensor { nodes: 64 }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            QuadratureSpec::Tensor { nodes } | QuadratureSpec::Composite { nodes } if nodes < 8 => {
                Err(Error::domain(format!("quadrature needs at least 8 nodes per dimension, got {nodes}")))
            }
            QuadratureSpec::MonteCarlo { points: 0, .. } => {
                Err(Error::domain("Monte Carlo quadrature needs at least one point"))
            }
            _ => Ok(()),
        }
    }
}

/// One integration axis, described by the probability distribution it integrates against.
#[derive(Debug, Clone, PartialEq)]
pub enum Axis {
    /// Uniform on `[0, 1]`.
    Unit,
    Weighted(NoiseModel),
}

impl Axis {
    fn distribution(&self) -> NoiseModel {
        match self {
            Axis::Unit => NoiseModel::Uniform { lo: 0.0, hi: 1.0 },
            Axis::Weighted(m) => m.clone(),
        }
    }
}

/// Nodes and weights for a single axis; weights integrate the axis distribution.
#[derive(Debug, Clone)]
pub struct Rule1d {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1d {
    pub fn new(axis: &Axis, spec: QuadratureSpec) -> Result<Self> {
        let dist = axis.distribution();
        match spec {
            QuadratureSpec::Tensor { nodes } => match dist {
                NoiseModel::Normal { mean, sd } => {
                    let (x, w) = gauss_hermite(nodes)?;
                    Ok(Self {
                        nodes: x.iter().map(|x| mean + sd * x).collect(),
                        weights: w,
                    })
                }
                NoiseModel::Empirical(ref t) => {
                    let gl = GaussLegendre::new(nodes)?;
                    Ok(Self::on_cuts(&gl, t.knots(), &dist))
                }
                _ => {
                    let (lo, hi) = dist.support();
                    let gl = GaussLegendre::new(nodes)?;
                    Ok(Self::on_cuts(&gl, &[lo, hi], &dist))
                }
            },
            QuadratureSpec::Composite { nodes } => {
                let gl = GaussLegendre::new(10)?;
                let panels = nodes.div_ceil(10).max(1);
                let cuts = match dist {
                    NoiseModel::Empirical(ref t) => {
                        let k = t.knots();
                        let per = panels.div_ceil(k.len() - 1).max(1);
                        let mut c = vec![k[0]];
                        for w in k.windows(2) {
                            for j in 1..=per {
                                c.push(w[0] + (w[1] - w[0]) * j as f64 / per as f64);
                            }
                        }
                        c
                    }
                    _ => {
                        let (lo, hi) = dist.effective_support();
                        (0..=panels)
                            .map(|j| lo + (hi - lo) * j as f64 / panels as f64)
                            .collect()
                    }
                };
                Ok(Self::on_cuts(&gl, &cuts, &dist))
            }
            QuadratureSpec::MonteCarlo { .. } => Err(Error::domain(
                "Monte Carlo quadrature has no one-dimensional rule",
            )),
        }
    }

    fn on_cuts(gl: &GaussLegendre, cuts: &[f64], dist: &NoiseModel) -> Self {
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for w in cuts.windows(2) {
            let (x, wt) = gl.on_interval(w[0], w[1]);
            for (x, wt) in x.into_iter().zip(wt) {
                nodes.push(x);
                weights.push(wt * dist.pdf(x));
            }
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Points and weights on the product of several axes.
#[derive(Debug, Clone)]
pub struct PointSet {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl PointSet {
    pub fn new(axes: &[Axis], spec: QuadratureSpec) -> Result<Self> {
        spec.validate()?;
        match spec {
            QuadratureSpec::MonteCarlo { points, seed } => {
                let dists: Vec<NoiseModel> = axes.iter().map(Axis::distribution).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let w = 1.0 / points as f64;
                let mut pts = Vec::with_capacity(points);
                for _ in 0..points {
                    let row = dists
                        .iter()
                        .map(|d| {
                            let u: f64 = rng.random_range(f64::EPSILON..1.0);
                            d.quantile(u)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    pts.push(row);
                }
                Ok(Self {
                    weights: vec![w; points],
                    points: pts,
                })
            }
            _ => {
                let rules = axes
                    .iter()
                    .map(|a| Rule1d::new(a, spec))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Self::tensor(&rules))
            }
        }
    }

    pub fn tensor(rules: &[Rule1d]) -> Self {
        let mut points = vec![Vec::with_capacity(rules.len())];
        let mut weights = vec![1.0];
        for rule in rules {
            let mut np = Vec::with_capacity(points.len() * rule.nodes.len());
            let mut nw = Vec::with_capacity(np.capacity());
            for (p, w) in points.iter().zip(&weights) {
                for (x, wx) in rule.nodes.iter().zip(&rule.weights) {
                    let mut q = p.clone();
                    q.push(*x);
                    np.push(q);
                    nw.push(w * wx);
                }
            }
            points = np;
            weights = nw;
        }
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
