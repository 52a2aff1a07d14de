//! Robust-setting search and the simulated comparison study.
//!
//! In the study every noise factor is standard normal. Design columns hold the coded
//! value `c = 0.5 + z/6`, which is `N(0.5, 1/6)`, so control and noise columns share
//! one scale for fitting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dist::NoiseModel;
use crate::error::{Error, Result};
use crate::generators::{
    double_transformed_noise, jittered_cross_array, maximin_lhd, maxpro_lhd, transformed_noise, uniform_design,
};
use crate::gp::{fit_kriging, Design, FitOptions, KrigingModel, Role};
use crate::optim::nelder_mead_box;
use crate::quadrature::{Axis, QuadratureSpec, Rule1d};

/// Quality loss applied to the response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Loss {
    /// `Var_z[y]`.
    Variance,
    /// `E_z[(y - target)²]`.
    Quadratic { target: f64 },
}

impl Loss {
    fn loss_of(self, mean: f64, second: f64) -> f64 {
        match self {
            Loss::Variance => second - mean * mean,
            Loss::Quadratic { target } => second - 2.0 * target * mean + target * target,
        }
    }
}

/// Search settings for [`robust_setting`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustSearch {
    /// Grid points per control dimension when there are at most two control columns.
    pub grid_points: usize,
    /// Gauss-Hermite (or Legendre) nodes per noise dimension.
    pub noise_nodes: usize,
}

impl Default for RobustSearch {
    fn default() -> Self {
        Self {
            grid_points: 501,
            noise_nodes: 8,
        }
    }
}

/// Minimizer of the expected loss over the control region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustSetting {
    pub x: Vec<f64>,
    pub objective: f64,
    /// The objective did not vary over the search region.
    pub flat: bool,
}

fn noise_rule(model: &NoiseModel, q: usize, nodes: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let rule = Rule1d::new(&Axis::Weighted(model.clone()), QuadratureSpec::Tensor { nodes })?;
    let mut pts = vec![vec![]];
    let mut wts = vec![1.0];
    for _ in 0..q {
        let mut np = Vec::with_capacity(pts.len() * nodes);
        let mut nw = Vec::with_capacity(pts.len() * nodes);
        for (p, w) in pts.iter().zip(&wts) {
            for (z, wz) in rule.nodes.iter().zip(&rule.weights) {
                let mut v: Vec<f64> = p.clone();
                v.push(*z);
                np.push(v);
                nw.push(w * wz);
            }
        }
        pts = np;
        wts = nw;
    }
    Ok((pts, wts))
}

/// Minimizes `objective` over `[0, 1]^p`: a full grid for `p ≤ 2`, multistart Nelder-Mead beyond.
///
/// Grid ties go to the lexicographically smallest point.
fn minimize_over_controls(p: usize, grid_points: usize, objective: impl Fn(&[f64]) -> f64 + Sync) -> Result<RobustSetting> {
    if p == 0 {
        return Err(Error::InvalidDesign("robust setting needs at least one control column".into()));
    }
    if p <= 2 {
        if grid_points < 101 {
            return Err(Error::domain(format!("robust-setting grid needs at least 101 points, got {grid_points}")));
        }
        let axis: Vec<f64> = (0..grid_points).map(|i| i as f64 / (grid_points - 1) as f64).collect();
        let points: Vec<Vec<f64>> = if p == 1 {
            axis.iter().map(|&a| vec![a]).collect()
        } else {
            axis.iter().flat_map(|&a| axis.iter().map(move |&b| vec![a, b])).collect()
        };
        let values: Vec<f64> = points.par_iter().map(|x| objective(x)).collect();
        let mut best = 0;
        for (i, v) in values.iter().enumerate() {
            if *v < values[best] {
                best = i;
            }
        }
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = values[best];
        return Ok(RobustSetting {
            x: points[best].clone(),
            objective: lo,
            flat: hi - lo <= 1e-12 * (1.0 + hi.abs()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let lo = vec![0.0; p];
    let hi = vec![1.0; p];
    let mut starts = vec![vec![0.5; p]];
    for _ in 0..8 {
        starts.push((0..p).map(|_| rng.random::<f64>()).collect());
    }
    let mut best: Option<RobustSetting> = None;
    for s in starts {
        let m = nelder_mead_box(&objective, &s, &lo, &hi, 0.1, 400 * p, 1e-12);
        if best.as_ref().is_none_or(|b| m.f < b.objective) {
            best = Some(RobustSetting {
                x: m.x,
                objective: m.f,
                flat: false,
            });
        }
    }
    Ok(best.expect("at least one start"))
}

/// Plug-in robust setting for any response surface `g(x, z)`.
pub fn robust_setting_fn(
    g: impl Fn(&[f64], &[f64]) -> f64 + Sync,
    p: usize,
    q: usize,
    noise: &NoiseModel,
    loss: Loss,
    search: &RobustSearch,
) -> Result<RobustSetting> {
    let (zs, ws) = noise_rule(noise, q, search.noise_nodes)?;
    minimize_over_controls(p, search.grid_points, |x| {
        let (mut m1, mut m2) = (0.0, 0.0);
        for (z, w) in zs.iter().zip(&ws) {
            let y = g(x, z);
            m1 += w * y;
            m2 += w * y * y;
        }
        loss.loss_of(m1, m2)
    })
}

/// Plug-in robust setting for a fitted model whose columns are control factors followed by noise factors.
pub fn robust_setting(model: &KrigingModel, loss: Loss, noise: &NoiseModel, search: &RobustSearch) -> Result<RobustSetting> {
    let design = model.design();
    let noise_cols: Vec<usize> = design.noise_columns();
    let ctrl_cols: Vec<usize> = (0..design.n_factors())
        .filter(|j| design.factors()[*j].role != Role::NoiseExt)
        .collect();
    let (p, q) = (ctrl_cols.len(), noise_cols.len());
    if model.is_constant() {
        return minimize_over_controls(p, search.grid_points, |_| loss.loss_of(model.mu(), model.mu() * model.mu()));
    }
    let (zs, ws) = noise_rule(noise, q, search.noise_nodes)?;
    let theta = model.theta().values();
    let rows = design.rows();
    let n = rows.len();
    let w = model.weights();
    // the correlation factorizes into a control part and a noise part
    let noise_part: Vec<Vec<f64>> = zs
        .iter()
        .map(|z| {
            (0..n)
                .map(|i| {
                    let s: f64 = noise_cols
                        .iter()
                        .zip(z)
                        .map(|(&j, &zj)| theta[j] * (zj - rows[i][j]).powi(2))
                        .sum();
                    w[i] * (-s).exp()
                })
                .collect()
        })
        .collect();
    let mu = model.mu();
    minimize_over_controls(p, search.grid_points, |x| {
        let rx: Vec<f64> = (0..n)
            .map(|i| {
                let s: f64 = ctrl_cols
                    .iter()
                    .zip(x)
                    .map(|(&j, &xj)| theta[j] * (xj - rows[i][j]).powi(2))
                    .sum();
                (-s).exp()
            })
            .collect();
        let (mut m1, mut m2) = (0.0, 0.0);
        for (np, wk) in noise_part.iter().zip(&ws) {
            let y = mu + rx.iter().zip(np).map(|(a, b)| a * b).sum::<f64>();
            m1 += wk * y;
            m2 += wk * y * y;
        }
        loss.loss_of(m1, m2)
    })
}

/// The four design recipes compared in the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Recipe {
    TrMaxProLHD,
    DTMaxProLHD,
    TrJCA,
    DTJCA,
}

impl Recipe {
    pub const ALL: [Recipe; 4] = [Recipe::TrMaxProLHD, Recipe::DTMaxProLHD, Recipe::TrJCA, Recipe::DTJCA];

    pub fn name(self) -> &'static str {
        match self {
            Recipe::TrMaxProLHD => "TrMaxProLHD",
            Recipe::DTMaxProLHD => "DTMaxProLHD",
            Recipe::TrJCA => "TrJCA",
            Recipe::DTJCA => "DTJCA",
        }
    }
}

/// Settings of the simulated study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub designs: Vec<Recipe>,
    /// Equally spaced control levels in the jittered cross arrays.
    pub n1: usize,
    /// Runs of the noise Latin hypercube in the jittered cross arrays.
    pub n2: usize,
    /// Number of standard normal noise factors.
    pub noise_factors: usize,
    pub replications: usize,
    pub test_points: usize,
    /// Seed for design construction, coefficient draws, and test points.
    pub seed: u64,
    /// Beta warp shape for the double transformed designs.
    pub alpha: f64,
    pub loss: Loss,
    pub search: RobustSearch,
    pub fit: FitOptions,
    pub lhd_iters: usize,
    pub jca_restarts: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            designs: Recipe::ALL.to_vec(),
            n1: 6,
            n2: 9,
            noise_factors: 4,
            replications: 20,
            test_points: 100,
            seed: 2024,
            alpha: 2.0 / 3.0,
            loss: Loss::Variance,
            search: RobustSearch::default(),
            fit: FitOptions::default(),
            lhd_iters: crate::generators::DEFAULT_ITERS,
            jca_restarts: crate::generators::DEFAULT_RESTARTS,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.designs.is_empty() {
            return Err(Error::Config("no designs requested".into()));
        }
        if self.noise_factors != 4 {
            return Err(Error::Config("the test function uses exactly four noise factors".into()));
        }
        if self.n1 < 2 || self.n2 < 2 {
            return Err(Error::Config("n1 and n2 must be at least 2".into()));
        }
        if self.test_points == 0 || self.test_points > 1 << 16 {
            return Err(Error::Config("test_points must lie in 1..=65536".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Coefficients `β₁..β₄` and `γ₁..γ₅` of one test function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub beta: [f64; 4],
    pub gamma: [f64; 5],
}

impl TestFunction {
    pub fn draw(rng: &mut impl Rng) -> Self {
        Self {
            beta: std::array::from_fn(|_| rng.random()),
            gamma: std::array::from_fn(|_| rng.random()),
        }
    }

    /// `y = Σ βᵢ (x - γᵢ) zᵢ² exp{-(x - γ₅)²}` with `z` on the natural scale.
    pub fn eval(&self, x: f64, z: &[f64]) -> f64 {
        let s: f64 = (0..4).map(|i| self.beta[i] * (x - self.gamma[i]) * z[i] * z[i]).sum();
        s * (-(x - self.gamma[4]).powi(2)).exp()
    }

    /// Same function with coded noise `c = 0.5 + z/6`.
    pub fn eval_coded(&self, x: f64, c: &[f64]) -> f64 {
        let z: Vec<f64> = c.iter().map(|v| 6.0 * (v - 0.5)).collect();
        self.eval(x, &z)
    }

    /// Loss-optimal control setting for standard normal noise.
    ///
    /// With `E z² = 1` and `Var z² = 2`, the moments are available exactly.
    pub fn true_optimum(&self, loss: Loss) -> f64 {
        let obj = |x: f64| {
            let e = (-(x - self.gamma[4]).powi(2)).exp();
            let mean = e * (0..4).map(|i| self.beta[i] * (x - self.gamma[i])).sum::<f64>();
            let var = 2.0 * e * e * (0..4).map(|i| (self.beta[i] * (x - self.gamma[i])).powi(2)).sum::<f64>();
            loss.loss_of(mean, var + mean * mean)
        };
        let m = 20_000;
        let mut best = 0.0;
        let mut best_v = obj(0.0);
        for i in 1..=m {
            let x = i as f64 / m as f64;
            let v = obj(x);
            if v < best_v {
                best = x;
                best_v = v;
            }
        }
        // golden-section polish inside the bracketing grid cell pair
        let (mut a, mut b) = ((best - 1.0 / m as f64).max(0.0), (best + 1.0 / m as f64).min(1.0));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if obj(c) <= obj(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let x = 0.5 * (a + b);
        if obj(x) < best_v {
            x
        } else {
            best
        }
    }
}

/// Builds the design for a recipe, with noise columns on the coded scale.
pub fn build_design(recipe: Recipe, cfg: &StudyConfig) -> Result<Design> {
    let coded = NoiseModel::coded_normal();
    let q = cfg.noise_factors;
    let n = cfg.n1 * cfg.n2;
    let unit = match recipe {
        Recipe::TrMaxProLHD | Recipe::DTMaxProLHD => {
            let lhd = maxpro_lhd(n, 1 + q, cfg.seed, cfg.lhd_iters)?;
            lhd.with_factors(crate::gp::default_factors(1, q))?
        }
        Recipe::TrJCA | Recipe::DTJCA => {
            let control = Design::with_roles(uniform_design(cfg.n1)?.into_iter().map(|v| vec![v]).collect(), 1, 0)?;
            let noise = maximin_lhd(cfg.n2, q, cfg.seed, cfg.lhd_iters)?.as_noise();
            jittered_cross_array(&control, &noise, cfg.seed, cfg.jca_restarts)?.design
        }
    };
    match recipe {
        Recipe::TrMaxProLHD | Recipe::TrJCA => transformed_noise(&unit, &[coded]),
        Recipe::DTMaxProLHD | Recipe::DTJCA => double_transformed_noise(&unit, &[coded], cfg.alpha),
    }
}

/// Scrambled Sobol test points `(x, c)` with noise columns on the coded scale.
pub fn test_points(cfg: &StudyConfig) -> Result<Vec<Vec<f64>>> {
    let coded = NoiseModel::coded_normal();
    let seed = (cfg.seed & 0xffff_ffff) as u32;
    (0..cfg.test_points as u32)
        .map(|i| {
            (0..1 + cfg.noise_factors as u32)
                .map(|d| {
                    let u = (sobol_burley::sample(i, d, seed) as f64).clamp(1e-6, 1.0 - 1e-6);
                    if d == 0 {
                        Ok(u)
                    } else {
                        coded.quantile(u)
                    }
                })
                .collect()
        })
        .collect()
}

/// Outcome of one (replication, design) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication: usize,
    pub design: Recipe,
    pub function: TestFunction,
    pub x_true: f64,
    /// `None` when fitting failed.
    pub x_hat: Option<f64>,
    pub error: Option<f64>,
    pub rmspe: Option<f64>,
    pub flat: bool,
    pub failure: Option<String>,
}

/// Per-design aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub design: Recipe,
    pub attempted: usize,
    pub completed: usize,
    pub median_rmspe: f64,
    pub median_abs_error: f64,
    pub mean_rmspe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub version: String,
    pub config_hash: String,
    pub config: StudyConfig,
    pub results: Vec<ReplicationResult>,
    pub summaries: Vec<DesignSummary>,
}

impl StudyReport {
    /// SHA-256 of the canonical JSON form of the whole report.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("report serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn summary(&self, design: Recipe) -> Option<&DesignSummary> {
        self.summaries.iter().find(|s| s.design == design)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn run_one(
    design: &Design,
    recipe: Recipe,
    rep: usize,
    f: &TestFunction,
    x_true: f64,
    tests: &[Vec<f64>],
    cfg: &StudyConfig,
) -> ReplicationResult {
    let y: Vec<f64> = design.rows().iter().map(|r| f.eval_coded(r[0], &r[1..])).collect();
    let base = ReplicationResult {
        replication: rep,
        design: recipe,
        function: *f,
        x_true,
        x_hat: None,
        error: None,
        rmspe: None,
        flat: false,
        failure: None,
    };
    let fit = FitOptions {
        seed: cfg.fit.seed.wrapping_add(rep as u64),
        ..cfg.fit.clone()
    };
    let outcome = fit_kriging(design, &y, &fit).and_then(|model| {
        let setting = robust_setting(&model, cfg.loss, &NoiseModel::coded_normal(), &cfg.search)?;
        let sse: f64 = tests
            .iter()
            .map(|t| (model.predict_mean(t) - f.eval_coded(t[0], &t[1..])).powi(2))
            .sum();
        Ok((setting, (sse / tests.len() as f64).sqrt()))
    });
    match outcome {
        Ok((s, rmspe)) => ReplicationResult {
            x_hat: Some(s.x[0]),
            error: Some(s.x[0] - x_true),
            rmspe: Some(rmspe),
            flat: s.flat,
            ..base
        },
        Err(e) => ReplicationResult {
            failure: Some(e.to_string()),
            ..base
        },
    }
}

/// Runs the simulated comparison study.
pub fn run_simulated_example(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let designs = cfg
        .designs
        .iter()
        .map(|&r| Ok((r, build_design(r, cfg)?)))
        .collect::<Result<Vec<_>>>()?;
    let tests = test_points(cfg)?;
    let functions: Vec<TestFunction> = (0..cfg.replications)
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(rep as u64 + 1);
            TestFunction::draw(&mut rng)
        })
        .collect();
    let tasks: Vec<(usize, usize)> = (0..cfg.replications)
        .flat_map(|rep| (0..designs.len()).map(move |d| (rep, d)))
        .collect();
    let results: Vec<ReplicationResult> = tasks
        .par_iter()
        .map(|&(rep, d)| {
            let f = &functions[rep];
            let (recipe, design) = &designs[d];
            run_one(design, *recipe, rep, f, f.true_optimum(cfg.loss), &tests, cfg)
        })
        .collect();
    let summaries = designs
        .iter()
        .map(|(recipe, _)| {
            let rows: Vec<&ReplicationResult> = results.iter().filter(|r| r.design == *recipe).collect();
            let ok: Vec<&&ReplicationResult> = rows.iter().filter(|r| r.failure.is_none()).collect();
            let rmspe: Vec<f64> = ok.iter().filter_map(|r| r.rmspe).collect();
            DesignSummary {
                design: *recipe,
                attempted: rows.len(),
                completed: ok.len(),
                median_rmspe: median(rmspe.clone()),
                median_abs_error: median(ok.iter().filter_map(|r| r.error.map(f64::abs)).collect()),
                mean_rmspe: if rmspe.is_empty() {
                    f64::NAN
                } else {
                    rmspe.iter().sum::<f64>() / rmspe.len() as f64
                },
            }
        })
        .collect();
    Ok(StudyReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.hash(),
        config: cfg.clone(),
        results,
        summaries,
    })
}
