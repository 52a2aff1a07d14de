//! Levels for factors with internal noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::criteria::{imse_internal, InternalNoiseSpec};
use crate::error::{Error, Result};
use crate::generators::lhd::uniform_design;

/// Result of the internal-noise design search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InternalDesign {
    /// Sorted levels in `[0, 1]`.
    pub points: Vec<f64>,
    pub imse: f64,
    /// False when the search stopped on its evaluation budget.
    pub converged: bool,
}

const RANDOM_STARTS: usize = 4;
const MAX_EVALS: usize = 40_000;

fn objective(x: &[f64], spec: &InternalNoiseSpec) -> f64 {
    imse_internal(x, spec).unwrap_or(f64::INFINITY)
}

/// Compass search on `[0, 1]^n` with step halving.
fn compass(x0: Vec<f64>, spec: &InternalNoiseSpec) -> (Vec<f64>, f64, bool) {
    let mut x = x0;
    let mut f = objective(&x, spec);
    let mut step = 0.05;
    let mut evals = 1;
    while step > 1e-8 {
        if evals >= MAX_EVALS {
            return (x, f, false);
        }
        let mut improved = false;
        for i in 0..x.len() {
            for sign in [-1.0, 1.0] {
                let mut y = x.clone();
                y[i] = (y[i] + sign * step).clamp(0.0, 1.0);
                if y[i] == x[i] {
                    continue;
                }
                let fy = objective(&y, spec);
                evals += 1;
                if fy < f {
                    x = y;
                    f = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, f, true)
}

/// `n` levels minimizing the closed-form internal-noise IMSE.
///
/// Starts include the midpoint design and the endpoint grid `{i/(n-1)}`, so the result
/// is never worse than either.
pub fn optimal_internal_design(n: usize, spec: &InternalNoiseSpec, seed: u64) -> Result<InternalDesign> {
    if n < 2 {
        return Err(Error::InvalidDesign(format!("an internal-noise design needs n >= 2, got {n}")));
    }
    spec.validate()?;
    let mut starts = vec![
        uniform_design(n)?,
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect::<Vec<_>>(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RANDOM_STARTS {
        let mut u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        u.sort_by(f64::total_cmp);
        starts.push(u);
    }
    let mut best: Option<InternalDesign> = None;
    for s in starts {
        let (mut x, f, converged) = compass(s, spec);
        if !f.is_finite() {
            continue;
        }
        x.sort_by(f64::total_cmp);
        if best.as_ref().is_none_or(|b| f < b.imse) {
            best = Some(InternalDesign {
                points: x,
                imse: f,
                converged,
            });
        }
    }
    best.ok_or(Error::Conditioning {
        nugget: crate::gp::NUGGET_MAX,
    })
}
