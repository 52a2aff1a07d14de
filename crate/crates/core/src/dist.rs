//! Noise distributions and the column transforms built on them.
//!
//! Design columns live in `(0, 1)` before transformation. A noise column is
//! mapped through the quantile function of its distribution (`inverse_transform`)
//! or through a symmetric Beta warp followed by the quantile function
//! (`double_transform`). The warp pushes points outward from the center, which
//! counteracts the pull of the inverse transform toward high-density regions.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use libm::{erfc, lgamma as ln_gamma};

use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub(crate) fn std_norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub(crate) fn std_norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal quantile, `p` strictly inside (0, 1).
///
/// Acklam's rational approximation refined by two Halley steps.
pub(crate) fn std_norm_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut z = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    };
    for _ in 0..2 {
        let pdf = std_norm_pdf(z);
        if !(pdf > 0.0) {
            break;
        }
        // upper tail in complement form to keep relative accuracy
        let e = if z > 0.0 {
            (1.0 - p) - 0.5 * erfc(z / SQRT_2)
        } else {
            std_norm_cdf(z) - p
        };
        let u = e / pdf;
        z -= u / (1.0 + 0.5 * z * u);
    }
    z
}

fn check_sd(sd: f64) -> Result<()> {
    if !(sd.is_finite() && sd > 0.0) {
        return Err(Error::domain(format!("standard deviation must be positive, got {sd}")));
    }
    Ok(())
}

/// Normal distribution function.
pub fn norm_cdf(x: f64, mean: f64, sd: f64) -> Result<f64> {
    check_sd(sd)?;
    if x.is_nan() || !mean.is_finite() {
        return Err(Error::domain("norm_cdf: non-finite argument"));
    }
    Ok(std_norm_cdf((x - mean) / sd))
}

/// Normal quantile function; `p` must lie strictly inside (0, 1).
pub fn norm_quantile(p: f64, mean: f64, sd: f64) -> Result<f64> {
    check_sd(sd)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("norm_quantile: p = {p} outside (0, 1)")));
    }
    Ok(mean + sd * std_norm_quantile(p))
}

/// Continued fraction for the regularized incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub(crate) fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Symmetric Beta(α, α) warp of the unit interval.
///
/// `α = 1` is the identity; smaller values push mass toward both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaWarp {
    alpha: f64,
}

impl BetaWarp {
    /// The shape recommended for normally distributed noise.
    pub const TWO_THIRDS: f64 = 2.0 / 3.0;

    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::domain(format!("beta warp shape must lie in (0, 1], got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn is_identity(&self) -> bool {
        self.alpha == 1.0
    }

    pub fn pdf(&self, u: f64) -> f64 {
        if !(0.0..=1.0).contains(&u) {
            return 0.0;
        }
        if self.is_identity() {
            return 1.0;
        }
        let a = self.alpha;
        let ln_norm = ln_gamma(2.0 * a) - 2.0 * ln_gamma(a);
        (ln_norm + (a - 1.0) * (u.ln() + (1.0 - u).ln())).exp()
    }

    /// Distribution function `B_α(u)`.
    pub fn cdf(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::domain(format!("beta_cdf: u = {u} outside [0, 1]")));
        }
        if self.is_identity() {
            return Ok(u);
        }
        Ok(incomplete_beta(self.alpha, self.alpha, u))
    }

    /// Quantile `B_α⁻¹(p)` by safeguarded Newton iteration on `[0, 1/2]`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("beta_quantile: p = {p} outside [0, 1]")));
        }
        if self.is_identity() || p == 0.0 || p == 1.0 || p == 0.5 {
            return Ok(p);
        }
        if p > 0.5 {
            return Ok(1.0 - self.lower_quantile(1.0 - p));
        }
        Ok(self.lower_quantile(p))
    }

    fn lower_quantile(&self, p: f64) -> f64 {
        let a = self.alpha;
        let (mut lo, mut hi) = (0.0_f64, 0.5_f64);
        // small-u expansion B(u) ≈ u^a / (a B(a, a))
        let ln_b = 2.0 * ln_gamma(a) - ln_gamma(2.0 * a);
        let mut u = ((p.ln() + a.ln() + ln_b) / a).exp().clamp(1e-300, 0.5);
        for _ in 0..200 {
            let f = incomplete_beta(a, a, u) - p;
            if f > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            let d = self.pdf(u);
            let mut next = if d > 0.0 && d.is_finite() { u - f / d } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - u).abs() <= 1e-15 * u.max(1e-300) || hi - lo <= 1e-16 * hi {
                return next;
            }
            u = next;
        }
        u
    }
}

/// Piecewise-linear distribution function through tabulated `(z, F)` knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    knots: Vec<f64>,
    probs: Vec<f64>,
}

impl EmpiricalCdf {
    /// `knots` strictly increasing, `probs` nondecreasing from 0 to 1.
    pub fn new(knots: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != probs.len() {
            return Err(Error::domain("empirical table needs at least two matching knots"));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) || knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::domain("empirical knots must be finite and strictly increasing"));
        }
        if probs.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::domain("empirical probabilities must be nondecreasing"));
        }
        if probs[0] != 0.0 || *probs.last().unwrap() != 1.0 {
            return Err(Error::domain("empirical probabilities must run from 0 to 1"));
        }
        Ok(Self { knots, probs })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn segment_density(&self, i: usize) -> f64 {
        (self.probs[i + 1] - self.probs[i]) / (self.knots[i + 1] - self.knots[i])
    }

    fn segment_of(&self, z: f64) -> Option<usize> {
        let n = self.knots.len();
        if z < self.knots[0] || z > self.knots[n - 1] {
            return None;
        }
        let i = self.knots.partition_point(|&k| k <= z);
        Some(i.saturating_sub(1).min(n - 2))
    }

    fn pdf(&self, z: f64) -> f64 {
        self.segment_of(z).map_or(0.0, |i| self.segment_density(i))
    }

    fn cdf(&self, z: f64) -> f64 {
        let n = self.knots.len();
        if z <= self.knots[0] {
            return 0.0;
        }
        if z >= self.knots[n - 1] {
            return 1.0;
        }
        let i = self.segment_of(z).unwrap();
        let t = (z - self.knots[i]) / (self.knots[i + 1] - self.knots[i]);
        self.probs[i] + t * (self.probs[i + 1] - self.probs[i])
    }

    fn quantile(&self, p: f64) -> f64 {
        let n = self.knots.len();
        if p <= 0.0 {
            return self.knots[0];
        }
        if p >= 1.0 {
            return self.knots[n - 1];
        }
        // first segment whose upper probability reaches p
        let i = self.probs.partition_point(|&q| q < p).clamp(1, n - 1) - 1;
        let dp = self.probs[i + 1] - self.probs[i];
        let t = if dp > 0.0 { (p - self.probs[i]) / dp } else { 0.0 };
        self.knots[i] + t * (self.knots[i + 1] - self.knots[i])
    }

    /// Table whose density is proportional to this density raised to `k`.
    fn powered(&self, k: f64) -> (Self, f64) {
        let n = self.knots.len();
        let mut mass = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let w = self.knots[i + 1] - self.knots[i];
            mass.push(w * self.segment_density(i).powf(k));
        }
        let ck: f64 = mass.iter().sum();
        let mut probs = vec![0.0; n];
        let mut acc = 0.0;
        for i in 0..n - 1 {
            acc += mass[i];
            probs[i + 1] = acc / ck;
        }
        probs[n - 1] = 1.0;
        (
            Self {
                knots: self.knots.clone(),
                probs,
            },
            ck,
        )
    }
}

/// Distribution of one noise factor, in coded units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    Normal { mean: f64, sd: f64 },
    /// Normal renormalized on `[lo, hi]`.
    TruncatedNormal { mean: f64, sd: f64, lo: f64, hi: f64 },
    Uniform { lo: f64, hi: f64 },
    Empirical(EmpiricalCdf),
}

impl NoiseModel {
    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        let m = NoiseModel::Normal { mean, sd };
        m.validate()?;
        Ok(m)
    }

    pub fn truncated_normal(mean: f64, sd: f64, lo: f64, hi: f64) -> Result<Self> {
        let m = NoiseModel::TruncatedNormal { mean, sd, lo, hi };
        m.validate()?;
        Ok(m)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let m = NoiseModel::Uniform { lo, hi };
        m.validate()?;
        Ok(m)
    }

    /// N(0.5, 1/6): ±3σ coincides with the unit interval.
    pub fn coded_normal() -> Self {
        NoiseModel::Normal {
            mean: 0.5,
            sd: 1.0 / 6.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Normal { mean, sd } => {
                check_sd(sd)?;
                if !mean.is_finite() {
                    return Err(Error::domain("normal mean must be finite"));
                }
            }
            NoiseModel::TruncatedNormal { mean, sd, lo, hi } => {
                check_sd(sd)?;
                if !(mean.is_finite() && lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::domain("truncated normal needs finite mean and lo < hi"));
                }
                let mass = std_norm_cdf((hi - mean) / sd) - std_norm_cdf((lo - mean) / sd);
                if mass <= 0.0 {
                    return Err(Error::domain("truncation interval carries no probability"));
                }
            }
            NoiseModel::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::domain("uniform needs finite lo < hi"));
                }
            }
            NoiseModel::Empirical(ref t) => {
                EmpiricalCdf::new(t.knots.clone(), t.probs.clone())?;
            }
        }
        Ok(())
    }

    /// Closed support `(lo, hi)`; infinite ends for the normal.
    pub fn support(&self) -> (f64, f64) {
        match self {
            NoiseModel::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            NoiseModel::TruncatedNormal { lo, hi, .. } | NoiseModel::Uniform { lo, hi } => (*lo, *hi),
            NoiseModel::Empirical(t) => (t.knots[0], *t.knots.last().unwrap()),
        }
    }

    /// Finite interval holding all but a negligible amount of mass.
    pub fn effective_support(&self) -> (f64, f64) {
        match *self {
            NoiseModel::Normal { mean, sd } => (mean - 10.0 * sd, mean + 10.0 * sd),
            _ => self.support(),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            NoiseModel::Normal { mean, .. } => *mean,
            NoiseModel::TruncatedNormal { mean, sd, lo, hi } => {
                let (a, b) = ((lo - mean) / sd, (hi - mean) / sd);
                let z = std_norm_cdf(b) - std_norm_cdf(a);
                mean + sd * (std_norm_pdf(a) - std_norm_pdf(b)) / z
            }
            NoiseModel::Uniform { lo, hi } => 0.5 * (lo + hi),
            NoiseModel::Empirical(t) => {
                let mut m = 0.0;
                for i in 0..t.knots.len() - 1 {
                    let dp = t.probs[i + 1] - t.probs[i];
                    m += dp * 0.5 * (t.knots[i] + t.knots[i + 1]);
                }
                m
            }
        }
    }

    pub fn pdf(&self, z: f64) -> f64 {
        match self {
            NoiseModel::Normal { mean, sd } => std_norm_pdf((z - mean) / sd) / sd,
            NoiseModel::TruncatedNormal { mean, sd, lo, hi } => {
                if z < *lo || z > *hi {
                    return 0.0;
                }
                let mass = std_norm_cdf((hi - mean) / sd) - std_norm_cdf((lo - mean) / sd);
                std_norm_pdf((z - mean) / sd) / (sd * mass)
            }
            NoiseModel::Uniform { lo, hi } => {
                if z < *lo || z > *hi {
                    0.0
                } else {
                    1.0 / (hi - lo)
                }
            }
            NoiseModel::Empirical(t) => t.pdf(z),
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        match self {
            NoiseModel::Normal { mean, sd } => std_norm_cdf((z - mean) / sd),
            NoiseModel::TruncatedNormal { mean, sd, lo, hi } => {
                if z <= *lo {
                    return 0.0;
                }
                if z >= *hi {
                    return 1.0;
                }
                let fa = std_norm_cdf((lo - mean) / sd);
                let fb = std_norm_cdf((hi - mean) / sd);
                (std_norm_cdf((z - mean) / sd) - fa) / (fb - fa)
            }
            NoiseModel::Uniform { lo, hi } => ((z - lo) / (hi - lo)).clamp(0.0, 1.0),
            NoiseModel::Empirical(t) => t.cdf(z),
        }
    }

    /// Quantile function. `p` in `[0, 1]`; the ends are only allowed for bounded supports.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("quantile: p = {p} outside [0, 1]")));
        }
        let (lo, hi) = self.support();
        if (p == 0.0 && lo.is_infinite()) || (p == 1.0 && hi.is_infinite()) {
            return Err(Error::domain(format!(
                "quantile: p = {p} maps to an infinite end of the support"
            )));
        }
        Ok(match self {
            NoiseModel::Normal { mean, sd } => mean + sd * std_norm_quantile(p),
            NoiseModel::TruncatedNormal { mean, sd, lo, hi } => {
                if p == 0.0 {
                    return Ok(*lo);
                }
                if p == 1.0 {
                    return Ok(*hi);
                }
                let fa = std_norm_cdf((lo - mean) / sd);
                let fb = std_norm_cdf((hi - mean) / sd);
                let q = fa + p * (fb - fa);
                (mean + sd * std_norm_quantile(q)).clamp(*lo, *hi)
            }
            NoiseModel::Uniform { lo, hi } => lo + p * (hi - lo),
            NoiseModel::Empirical(t) => t.quantile(p),
        })
    }

    /// Normalizer `C_k = ∫ f^k(z) dz`.
    pub fn ck(&self, k: f64) -> Result<f64> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::domain(format!("criterion power k must be positive, got {k}")));
        }
        let c = match *self {
            NoiseModel::Normal { sd, .. } => normal_ck(sd, k),
            NoiseModel::TruncatedNormal { mean, sd, lo, hi } => {
                let mass = std_norm_cdf((hi - mean) / sd) - std_norm_cdf((lo - mean) / sd);
                let sk = sd / k.sqrt();
                let mass_k = std_norm_cdf((hi - mean) / sk) - std_norm_cdf((lo - mean) / sk);
                normal_ck(sd, k) * mass_k / mass.powf(k)
            }
            NoiseModel::Uniform { lo, hi } => (hi - lo).powf(1.0 - k),
            NoiseModel::Empirical(ref t) => t.powered(k).1,
        };
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::domain(format!("normalizer C_k is not finite for k = {k}")));
        }
        Ok(c)
    }

    /// The probability distribution with density `f^k / C_k`.
    pub fn power_weight(&self, k: f64) -> Result<NoiseModel> {
        self.ck(k)?;
        Ok(match *self {
            NoiseModel::Normal { mean, sd } => NoiseModel::Normal {
                mean,
                sd: sd / k.sqrt(),
            },
            NoiseModel::TruncatedNormal { mean, sd, lo, hi } => NoiseModel::TruncatedNormal {
                mean,
                sd: sd / k.sqrt(),
                lo,
                hi,
            },
            NoiseModel::Uniform { lo, hi } => NoiseModel::Uniform { lo, hi },
            NoiseModel::Empirical(ref t) => NoiseModel::Empirical(t.powered(k).0),
        })
    }
}

fn normal_ck(sd: f64, k: f64) -> f64 {
    (2.0 * std::f64::consts::PI * sd * sd).powf(0.5 * (1.0 - k)) / k.sqrt()
}

/// Elementwise quantile transform of a design column.
pub fn inverse_transform(column: &[f64], model: &NoiseModel) -> Result<Vec<f64>> {
    column
        .iter()
        .map(|&u| {
            if !(0.0..=1.0).contains(&u) {
                return Err(Error::domain(format!("inverse_transform: entry {u} outside [0, 1]")));
            }
            model.quantile(u)
        })
        .collect()
}

/// Beta warp followed by the quantile transform.
pub fn double_transform(column: &[f64], model: &NoiseModel, warp: &BetaWarp) -> Result<Vec<f64>> {
    let warped = column
        .iter()
        .map(|&u| warp.quantile(u))
        .collect::<Result<Vec<_>>>()?;
    inverse_transform(&warped, model)
}

/// Symmetric square root of a symmetric positive definite matrix.
pub fn sym_sqrt(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let q = cov.nrows();
    if q == 0 || cov.ncols() != q {
        return Err(Error::Matrix("covariance must be square and nonempty".into()));
    }
    let scale = cov.amax().max(f64::MIN_POSITIVE);
    if (cov - cov.transpose()).amax() > 1e-12 * scale {
        return Err(Error::Matrix("covariance is not symmetric".into()));
    }
    let eig = SymmetricEigen::new(cov.clone());
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Matrix("covariance is not positive definite".into()));
    }
    let root = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(&eig.eigenvectors * root * eig.eigenvectors.transpose())
}

/// Maps each row `u` of a unit-cube design to `Σ^{1/2} Φ⁻¹(u)`.
pub fn correlate_mvn(rows: &[Vec<f64>], cov: &DMatrix<f64>) -> Result<Vec<Vec<f64>>> {
    let root = sym_sqrt(cov)?;
    let q = cov.nrows();
    rows.iter()
        .map(|row| {
            if row.len() != q {
                return Err(Error::Dimension {
                    expected: q,
                    got: row.len(),
                });
            }
            let z = row
                .iter()
                .map(|&u| {
                    if !(u > 0.0 && u < 1.0) {
                        return Err(Error::domain(format!("correlate_mvn: entry {u} outside (0, 1)")));
                    }
                    Ok(std_norm_quantile(u))
                })
                .collect::<Result<Vec<_>>>()?;
            let v = &root * nalgebra::DVector::from_vec(z);
            Ok(v.iter().copied().collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// erf by its Maclaurin series, independent of the erfc implementation.
    fn erf_series(x: f64, terms: usize) -> f64 {
        let mut sum = 0.0;
        let mut pow = x;
        let mut fact = 1.0;
        for n in 0..terms {
            if n > 0 {
                fact *= n as f64;
                pow *= x * x;
            }
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * pow / (fact * (2 * n + 1) as f64);
        }
        2.0 / std::f64::consts::PI.sqrt() * sum
    }

    fn series_cdf(x: f64, m: f64, s: f64) -> f64 {
        0.5 * (1.0 + erf_series((x - m) / (s * SQRT_2), 30))
    }

    fn bisect(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Composite Gauss-Legendre integral of the Beta(a, a) density on [0, u]
    /// after the substitution t = s^(1/a), which removes the endpoint singularity.
    fn beta_cdf_oracle(u: f64, a: f64) -> f64 {
        // ∫_0^u t^(a-1) (1-t)^(a-1) dt with t = s^(1/a): (1/a) ∫_0^{u^a} (1 - s^(1/a))^(a-1) ds
        // valid for u <= 1/2, where (1 - t) stays away from zero.
        let rule = crate::quadrature::GaussLegendre::new(10).unwrap();
        let upper = u.powf(a);
        let panels = 1000;
        let h = upper / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let (lo, hi) = (p as f64 * h, (p + 1) as f64 * h);
            total += rule.integrate(lo, hi, |s| (1.0 - s.powf(1.0 / a)).powf(a - 1.0));
        }
        let ln_b = 2.0 * ln_gamma(a) - ln_gamma(2.0 * a);
        total / a / ln_b.exp()
    }

    #[test]
    fn norm_cdf_examples() {
        let s = 1.0 / 6.0;
        assert_eq!(norm_cdf(0.5, 0.5, s).unwrap(), 0.5);
        let expected = series_cdf(0.5 + s, 0.5, s);
        assert_abs_diff_eq!(expected, 0.841345, epsilon = 1e-6);
        assert_abs_diff_eq!(norm_cdf(0.5 + s, 0.5, s).unwrap(), expected, epsilon = 1e-12);
        assert_eq!(norm_cdf(-1e9, 0.5, s).unwrap(), 0.0);
        assert!(norm_cdf(f64::NAN, 0.5, s).is_err());
        assert!(norm_cdf(0.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn norm_quantile_examples() {
        let s = 1.0 / 6.0;
        assert_eq!(norm_quantile(0.5, 0.5, s).unwrap(), 0.5);
        let q = bisect(|x| series_cdf(x, 0.5, s), 0.841345, -1.0, 2.0);
        assert_abs_diff_eq!(norm_quantile(0.841345, 0.5, s).unwrap(), q, epsilon = 1e-9);
        assert_abs_diff_eq!(q, 0.5 + s, epsilon = 1e-5);
        let q = bisect(|x| series_cdf(x, 0.5, s), 0.995, -1.0, 2.0);
        assert_abs_diff_eq!(norm_quantile(0.995, 0.5, s).unwrap(), q, epsilon = 1e-9);
        assert_abs_diff_eq!(q, 0.5 + 2.5758 * s, epsilon = 1e-4);
        assert!(norm_quantile(0.0, 0.5, s).is_err());
        assert!(norm_quantile(1.0, 0.5, s).is_err());
    }

    #[test]
    fn beta_cdf_examples() {
        let w = BetaWarp::new(2.0 / 3.0).unwrap();
        assert_abs_diff_eq!(w.cdf(0.5).unwrap(), 0.5, epsilon = 1e-14);
        assert_eq!(w.cdf(0.0).unwrap(), 0.0);
        assert_eq!(w.cdf(1.0).unwrap(), 1.0);
        let oracle = beta_cdf_oracle(0.25, 2.0 / 3.0);
        let got = w.cdf(0.25).unwrap();
        assert!(((got - oracle) / oracle).abs() <= 1e-8, "{got} vs {oracle}");
        assert!(w.cdf(1.5).is_err());
    }

    #[test]
    fn beta_quantile_examples() {
        let w = BetaWarp::new(2.0 / 3.0).unwrap();
        assert_eq!(w.quantile(0.5).unwrap(), 0.5);
        let id = BetaWarp::new(1.0).unwrap();
        for p in [0.0, 0.013, 0.5, 0.77, 1.0] {
            assert_eq!(id.quantile(p).unwrap(), p);
        }
        // upper quantile via symmetry against the quadrature oracle on the lower half
        let lower = bisect(|u| beta_cdf_oracle(u, 2.0 / 3.0), 0.005, 0.0, 0.5);
        assert_abs_diff_eq!(w.quantile(0.995).unwrap(), 1.0 - lower, epsilon = 1e-9);
    }

    #[test]
    fn beta_warp_symmetry_on_grid() {
        for a in [0.5, 0.607, 2.0 / 3.0, 0.738, 1.0] {
            let w = BetaWarp::new(a).unwrap();
            for i in 0..=1000 {
                let u = i as f64 / 1000.0;
                let s = w.cdf(u).unwrap() + w.cdf(1.0 - u).unwrap();
                assert_abs_diff_eq!(s, 1.0, epsilon = 1e-10);
                let p = u;
                let q = w.quantile(p).unwrap() + w.quantile(1.0 - p).unwrap();
                assert_abs_diff_eq!(q, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn beta_quantile_inverts_cdf() {
        for a in [0.476, 0.5, 2.0 / 3.0, 0.9] {
            let w = BetaWarp::new(a).unwrap();
            for i in 1..1000 {
                let p = i as f64 / 1000.0;
                let u = w.quantile(p).unwrap();
                assert_abs_diff_eq!(w.cdf(u).unwrap(), p, epsilon = 1e-9);
            }
        }
    }

    fn models() -> Vec<NoiseModel> {
        vec![
            NoiseModel::coded_normal(),
            NoiseModel::truncated_normal(0.5, 1.0 / 6.0, 0.0, 1.0).unwrap(),
            NoiseModel::truncated_normal(0.2, 0.3, 0.0, 1.0).unwrap(),
            NoiseModel::uniform(-1.0, 2.0).unwrap(),
            NoiseModel::Empirical(
                EmpiricalCdf::new(vec![0.0, 0.2, 0.5, 0.6, 1.0], vec![0.0, 0.1, 0.5, 0.9, 1.0]).unwrap(),
            ),
        ]
    }

    #[test]
    fn cdf_quantile_round_trip() {
        for m in models() {
            for i in 1..1000 {
                let p = i as f64 / 1000.0;
                let z = m.quantile(p).unwrap();
                assert!((m.cdf(z) - p).abs() <= 1e-9, "{m:?} p={p}");
            }
        }
    }

    #[test]
    fn quantile_of_cdf_is_identity_on_support() {
        for m in models() {
            let (lo, hi) = m.effective_support();
            // beyond ~4.8σ the cdf no longer resolves 1e-10 in z
            let (lo, hi) = (lo.max(-0.3), hi.min(1.3));
            for i in 1..100 {
                let z = lo + (hi - lo) * i as f64 / 100.0;
                if m.pdf(z) == 0.0 {
                    continue;
                }
                assert_abs_diff_eq!(m.quantile(m.cdf(z)).unwrap(), z, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        let rule = crate::quadrature::GaussLegendre::new(40).unwrap();
        for m in models() {
            let (lo, hi) = m.effective_support();
            // split at empirical knots so each panel is smooth
            let mut cuts: Vec<f64> = (0..=200).map(|i| lo + (hi - lo) * i as f64 / 200.0).collect();
            if let NoiseModel::Empirical(t) = &m {
                cuts = t.knots().to_vec();
            }
            let total: f64 = cuts.windows(2).map(|w| rule.integrate(w[0], w[1], |z| m.pdf(z))).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn ck_matches_quadrature() {
        let rule = crate::quadrature::GaussLegendre::new(40).unwrap();
        let m = NoiseModel::coded_normal();
        let c2 = m.ck(2.0).unwrap();
        assert_abs_diff_eq!(c2, 3.0 / std::f64::consts::PI.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(c2, 1.692568750643269, epsilon = 1e-9);
        for m in models() {
            for k in [0.5, 1.0, 2.0, 3.0] {
                let (lo, hi) = m.effective_support();
                let mut cuts: Vec<f64> = (0..=200).map(|i| lo + (hi - lo) * i as f64 / 200.0).collect();
                if let NoiseModel::Empirical(t) = &m {
                    cuts = t.knots().to_vec();
                }
                let q: f64 = cuts
                    .windows(2)
                    .map(|w| rule.integrate(w[0], w[1], |z| m.pdf(z).powf(k)))
                    .sum();
                let c = m.ck(k).unwrap();
                assert!(((c - q) / q).abs() < 1e-8, "{m:?} k={k}: {c} vs {q}");
            }
        }
        assert!(m.ck(0.0).is_err());
    }

    #[test]
    fn inverse_transform_examples() {
        let col: Vec<f64> = (0..10).map(|i| (i as f64 + 0.5) / 10.0).collect();
        let m = NoiseModel::coded_normal();
        let z = inverse_transform(&col, &m).unwrap();
        for i in 0..10 {
            assert_abs_diff_eq!(z[i] + z[9 - i], 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(z[0], 0.5 - 1.6449 / 6.0, epsilon = 1e-3);
        assert!(z.windows(2).all(|w| w[0] < w[1]));

        let u = NoiseModel::uniform(0.0, 1.0).unwrap();
        assert_eq!(inverse_transform(&col, &u).unwrap(), col);

        assert!(inverse_transform(&[0.0, 0.5], &m).is_err());
        assert!(inverse_transform(&[0.5, 1.0], &m).is_err());
        assert!(inverse_transform(&[0.0, 1.0], &u).is_ok());
    }

    #[test]
    fn double_transform_examples() {
        let s = 1.0 / 6.0;
        let m = NoiseModel::coded_normal();
        let d0: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let z = double_transform(&d0, &m, &BetaWarp::new(2.0 / 3.0).unwrap()).unwrap();
        assert_abs_diff_eq!((0.5 - z[0]) / s, 3.25, epsilon = 0.05);
        assert_abs_diff_eq!((z[99] - 0.5) / s, 3.25, epsilon = 0.05);
        let z = double_transform(&d0, &m, &BetaWarp::new(0.476).unwrap()).unwrap();
        assert_abs_diff_eq!((0.5 - z[0]) / s, 3.95, epsilon = 0.05);

        let plain = inverse_transform(&d0, &m).unwrap();
        let ident = double_transform(&d0, &m, &BetaWarp::new(1.0).unwrap()).unwrap();
        assert_eq!(plain, ident);

        for model in models() {
            let c = double_transform(&[0.5], &model, &BetaWarp::new(0.6).unwrap()).unwrap();
            assert_abs_diff_eq!(c[0], model.quantile(0.5).unwrap(), epsilon = 1e-15);
        }
        let c = double_transform(&[0.5], &m, &BetaWarp::new(0.6).unwrap()).unwrap();
        assert_eq!(c[0], 0.5);
    }

    #[test]
    fn correlate_mvn_examples() {
        use rand::{Rng, SeedableRng};
        let eye = DMatrix::<f64>::identity(2, 2);
        let rows = vec![vec![0.1, 0.7], vec![0.5, 0.5]];
        let out = correlate_mvn(&rows, &eye).unwrap();
        assert_abs_diff_eq!(out[0][0], std_norm_quantile(0.1), epsilon = 1e-14);
        assert_abs_diff_eq!(out[0][1], std_norm_quantile(0.7), epsilon = 1e-14);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        let out = correlate_mvn(&[vec![0.5, 0.5]], &cov).unwrap();
        assert_eq!(out[0], vec![0.0, 0.0]);

        let root = sym_sqrt(&cov).unwrap();
        assert!((&root * &root - &cov).amax() < 1e-10);

        // Monte Carlo oracle: a random LHD pushed through the transform
        let n = 10_000;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut perm: Vec<Vec<usize>> = vec![(0..n).collect(), (0..n).collect()];
        for p in perm.iter_mut() {
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                p.swap(i, j);
            }
        }
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![(perm[0][i] as f64 + 0.5) / n as f64, (perm[1][i] as f64 + 0.5) / n as f64])
            .collect();
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let out = correlate_mvn(&rows, &cov).unwrap();
        let mean = |j: usize| out.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let (m0, m1) = (mean(0), mean(1));
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for r in &out {
            sxy += (r[0] - m0) * (r[1] - m1);
            sxx += (r[0] - m0).powi(2);
            syy += (r[1] - m1).powi(2);
        }
        let corr = sxy / (sxx * syy).sqrt();
        assert!((corr - 0.5).abs() < 0.05, "sample correlation {corr}");

        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(correlate_mvn(&rows[..1], &bad), Err(Error::Matrix(_))));
    }

    #[test]
    fn power_weight_is_normalized_density() {
        for m in models() {
            let k = 2.0;
            let w = m.power_weight(k).unwrap();
            let c = m.ck(k).unwrap();
            for z in [0.1, 0.3, 0.55, 0.9] {
                if m.pdf(z) > 0.0 {
                    let expected = m.pdf(z).powf(k) / c;
                    assert!((w.pdf(z) - expected).abs() < 1e-9 * expected.max(1.0), "{m:?}");
                }
            }
        }
    }
}
