//! Cross arrays, fill distance, and jittered cross arrays.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generators::lhd::{maxpro_criterion, maxpro_product, uniform_design};
use crate::gp::{sq_dist, Design, Role};
use crate::optim::nelder_mead_box;

/// Largest distance from any point of the unit cube to its nearest design run.
#[derive(Debug, Clone, PartialEq)]
pub struct FillDistance {
    pub value: f64,
    /// A point of the cube at which `value` is attained.
    pub point: Vec<f64>,
}

fn nearest_sq(rows: &[Vec<f64>], u: &[f64]) -> f64 {
    rows.iter().map(|r| sq_dist(r, u)).fold(f64::INFINITY, f64::min)
}

fn check_unit(rows: &[Vec<f64>]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidDesign("design has no runs".into()));
    }
    if rows.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidDesign("fill distance needs every column inside [0, 1]".into()));
    }
    Ok(())
}

/// Fill distance (covering radius) of a design whose columns all lie in `[0, 1]`.
pub fn fill_distance(design: &Design) -> Result<FillDistance> {
    check_unit(design.rows())?;
    Ok(fill_distance_of(design.rows()))
}

pub(crate) fn fill_distance_of(rows: &[Vec<f64>]) -> FillDistance {
    match rows[0].len() {
        1 => fill_1d(rows),
        2 => fill_2d(rows),
        _ => fill_multistart(rows),
    }
}

fn fill_1d(rows: &[Vec<f64>]) -> FillDistance {
    let mut x: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    x.sort_by(f64::total_cmp);
    let mut best = FillDistance {
        value: x[0],
        point: vec![0.0],
    };
    let last = x[x.len() - 1];
    if 1.0 - last > best.value {
        best = FillDistance {
            value: 1.0 - last,
            point: vec![1.0],
        };
    }
    for w in x.windows(2) {
        let half = 0.5 * (w[1] - w[0]);
        if half > best.value {
            best = FillDistance {
                value: half,
                point: vec![w[0] + half],
            };
        }
    }
    best
}

/// Exact in the square: the maximum sits at a Voronoi vertex, where a Voronoi edge meets
/// the boundary, or at a corner.
fn fill_2d(rows: &[Vec<f64>]) -> FillDistance {
    let mut cands: Vec<[f64; 2]> = vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
    let n = rows.len();
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (&rows[i], &rows[j]);
            // bisector: (b - a)·u = (|b|² - |a|²) / 2
            let (nx, ny) = (b[0] - a[0], b[1] - a[1]);
            let c = 0.5 * (b[0] * b[0] + b[1] * b[1] - a[0] * a[0] - a[1] * a[1]);
            for edge in [0.0, 1.0] {
                if ny != 0.0 {
                    let y = (c - nx * edge) / ny;
                    if (0.0..=1.0).contains(&y) {
                        cands.push([edge, y]);
                    }
                }
                if nx != 0.0 {
                    let x = (c - ny * edge) / nx;
                    if (0.0..=1.0).contains(&x) {
                        cands.push([x, edge]);
                    }
                }
            }
            for k in 0..j {
                if let Some(u) = circumcenter(a, b, &rows[k]) {
                    cands.push(u);
                }
            }
        }
    }
    let mut best = FillDistance {
        value: -1.0,
        point: vec![],
    };
    for u in cands {
        let v = nearest_sq(rows, &u).sqrt();
        if v > best.value {
            best = FillDistance {
                value: v,
                point: u.to_vec(),
            };
        }
    }
    best
}

fn circumcenter(a: &[f64], b: &[f64], c: &[f64]) -> Option<[f64; 2]> {
    let d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
    if d.abs() < 1e-14 {
        return None;
    }
    let (a2, b2, c2) = (
        a[0] * a[0] + a[1] * a[1],
        b[0] * b[0] + b[1] * b[1],
        c[0] * c[0] + c[1] * c[1],
    );
    let x = (a2 * (b[1] - c[1]) + b2 * (c[1] - a[1]) + c2 * (a[1] - b[1])) / d;
    let y = (a2 * (c[0] - b[0]) + b2 * (a[0] - c[0]) + c2 * (b[0] - a[0])) / d;
    ((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y)).then_some([x, y])
}

/// Corners plus a fixed random sample, then local maximization from the best candidates.
fn fill_multistart(rows: &[Vec<f64>]) -> FillDistance {
    const SAMPLES: usize = 4096;
    const POLISH: usize = 12;
    let d = rows[0].len();
    let mut cands: Vec<Vec<f64>> = Vec::new();
    if d <= 10 {
        for mask in 0..(1usize << d) {
            cands.push((0..d).map(|l| ((mask >> l) & 1) as f64).collect());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..SAMPLES {
        cands.push((0..d).map(|_| rng.random::<f64>()).collect());
    }
    let mut scored: Vec<(f64, Vec<f64>)> = cands.into_iter().map(|u| (nearest_sq(rows, &u), u)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let lo = vec![0.0; d];
    let hi = vec![1.0; d];
    let mut best = FillDistance {
        value: -1.0,
        point: vec![],
    };
    for (_, u) in scored.into_iter().take(POLISH) {
        let m = nelder_mead_box(|v| -nearest_sq(rows, v), &u, &lo, &hi, 0.05, 400 * d, 1e-12);
        let v = (-m.f).sqrt();
        if v > best.value {
            best = FillDistance { value: v, point: m.x };
        }
    }
    best
}

/// How a crossed design was assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossArrayStructure {
    pub control: Design,
    pub noise: Design,
    /// `(control run, noise run)` for every crossed row.
    pub clusters: Vec<(usize, usize)>,
    /// `√(r_x² + r_z²)`; present when both arrays lie in the unit cube.
    pub fill_distance: Option<f64>,
}

impl CrossArrayStructure {
    pub fn n1(&self) -> usize {
        self.control.n_runs()
    }

    pub fn n2(&self) -> usize {
        self.noise.n_runs()
    }

    pub fn dim(&self) -> usize {
        self.control.n_factors() + self.noise.n_factors()
    }

    /// Half-width `r / √(p + q)` of the cube inscribed in the radius-`r` ball.
    pub fn half_width(&self) -> Option<f64> {
        self.fill_distance.map(|r| r / (self.dim() as f64).sqrt())
    }
}

/// Every control run paired with every noise run, control-major.
pub fn cross_array(control: &Design, noise: &Design) -> Result<(Design, CrossArrayStructure)> {
    if control.factors().iter().any(|f| f.role == Role::NoiseExt) {
        return Err(Error::InvalidDesign("control array contains an external noise column".into()));
    }
    if noise.factors().iter().any(|f| f.role != Role::NoiseExt) {
        return Err(Error::InvalidDesign("noise array contains a non-noise column".into()));
    }
    let mut factors = control.factors().to_vec();
    factors.extend(noise.factors().iter().cloned());
    for (i, f) in factors.iter().enumerate() {
        if factors[..i].iter().any(|g| g.name == f.name) {
            return Err(Error::InvalidDesign(format!("factor name {} appears twice", f.name)));
        }
    }
    let mut rows = Vec::with_capacity(control.n_runs() * noise.n_runs());
    let mut clusters = Vec::with_capacity(rows.capacity());
    for (i, a) in control.rows().iter().enumerate() {
        for (j, b) in noise.rows().iter().enumerate() {
            rows.push([a.as_slice(), b.as_slice()].concat());
            clusters.push((i, j));
        }
    }
    let fill = match (check_unit(control.rows()), check_unit(noise.rows())) {
        (Ok(()), Ok(())) => {
            let rx = fill_distance_of(control.rows()).value;
            let rz = fill_distance_of(noise.rows()).value;
            Some((rx * rx + rz * rz).sqrt())
        }
        _ => None,
    };
    let design = Design::new(rows, factors)?;
    Ok((
        design,
        CrossArrayStructure {
            control: control.clone(),
            noise: noise.clone(),
            clusters,
            fill_distance: fill,
        },
    ))
}

/// Default number of randomized visiting orders.
pub const DEFAULT_RESTARTS: usize = 16;
const REFINE_SAMPLES: usize = 50;

/// A jittered cross array together with what is needed to audit it.
#[derive(Debug, Clone)]
pub struct JitteredCrossArray {
    /// Final design, rows in visiting order, columns snapped to equally spaced levels.
    pub design: Design,
    /// `(control run, noise run)` of the cube each row was drawn from.
    pub clusters: Vec<(usize, usize)>,
    /// Row coordinates before snapping.
    pub pre_snap: Vec<Vec<f64>>,
    /// Cube centers (the crossed runs), aligned with `design` rows.
    pub centers: Vec<Vec<f64>>,
    pub half_width: f64,
    /// MaxPro criterion of the pre-snap points, see [`maxpro_criterion`](crate::generators::maxpro_criterion).
    pub objective: f64,
    /// Index of the winning restart.
    pub restart: usize,
}

impl JitteredCrossArray {
    /// Whether pre-snap row `i` lies in its cube (with rounding slack).
    pub fn in_cube(&self, i: usize) -> bool {
        let tol = 1e-12;
        self.pre_snap[i]
            .iter()
            .zip(&self.centers[i])
            .all(|(u, c)| (u - c).abs() <= self.half_width + tol)
    }
}

fn sequential_objective(prev: &[Vec<f64>], u: &[f64]) -> f64 {
    prev.iter().map(|p| 1.0 / maxpro_product(u, p)).sum()
}

/// Greedy choice of one point in `[lo, hi]`: lattice, random samples, then a compass polish.
fn place(prev: &[Vec<f64>], lo: &[f64], hi: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = lo.len();
    let mut best = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect::<Vec<_>>();
    let mut best_f = sequential_objective(prev, &best);
    let consider = |u: Vec<f64>, best: &mut Vec<f64>, best_f: &mut f64| {
        let f = sequential_objective(prev, &u);
        if f < *best_f {
            *best_f = f;
            *best = u;
        }
    };
    let total = 3usize.pow(d as u32);
    for code in 0..total {
        let mut c = code;
        let u = (0..d)
            .map(|l| {
                let t = (c % 3) as f64 * 0.5;
                c /= 3;
                lo[l] + t * (hi[l] - lo[l])
            })
            .collect();
        consider(u, &mut best, &mut best_f);
    }
    for _ in 0..REFINE_SAMPLES {
        let u = (0..d).map(|l| lo[l] + rng.random::<f64>() * (hi[l] - lo[l])).collect();
        consider(u, &mut best, &mut best_f);
    }
    let mut step: Vec<f64> = (0..d).map(|l| 0.25 * (hi[l] - lo[l])).collect();
    for _ in 0..12 {
        let mut improved = true;
        while improved {
            improved = false;
            for l in 0..d {
                for sign in [-1.0, 1.0] {
                    let mut u = best.clone();
                    u[l] = (u[l] + sign * step[l]).clamp(lo[l], hi[l]);
                    let f = sequential_objective(prev, &u);
                    if f < best_f {
                        best_f = f;
                        best = u;
                        improved = true;
                    }
                }
            }
        }
        for s in step.iter_mut() {
            *s *= 0.5;
        }
    }
    best
}

struct Pass {
    order: Vec<usize>,
    points: Vec<Vec<f64>>,
    objective: f64,
}

fn one_pass(centers: &[Vec<f64>], h: f64, first: usize, seed: u64, restart: usize) -> Pass {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    let mut rest: Vec<usize> = (0..centers.len()).filter(|&i| i != first).collect();
    rest.shuffle(&mut rng);
    let mut order = vec![first];
    order.extend(rest);
    let d = centers[0].len();
    let bounds = |i: usize| {
        let lo: Vec<f64> = centers[i].iter().map(|c| (c - h).max(0.0)).collect();
        let hi: Vec<f64> = centers[i].iter().map(|c| (c + h).min(1.0)).collect();
        (lo, hi)
    };
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(order.len());
    let (lo, hi) = bounds(first);
    points.push((0..d).map(|l| 0.5_f64.clamp(lo[l], hi[l])).collect());
    for &i in &order[1..] {
        let (lo, hi) = bounds(i);
        let u = place(&points, &lo, &hi, &mut rng);
        points.push(u);
    }
    let mut objective = 0.0;
    for i in 0..points.len() {
        objective += sequential_objective(&points[..i], &points[i]);
    }
    Pass {
        order,
        points,
        objective,
    }
}

/// Replaces each column by the equally spaced levels in the same rank order.
pub(crate) fn snap_by_rank(points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = points.len();
    let levels = uniform_design(n)?;
    let mut out = vec![vec![0.0; points[0].len()]; n];
    for l in 0..points[0].len() {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| points[a][l].total_cmp(&points[b][l]).then(a.cmp(&b)));
        for (rank, &i) in idx.iter().enumerate() {
            out[i][l] = levels[rank];
        }
    }
    Ok(out)
}

/// Jittered cross array by sequential MaxPro placement inside the cubes around crossed runs.
///
/// Both arrays must lie in the unit cube. The noise array's columns keep their
/// external-noise role.
pub fn jittered_cross_array(control: &Design, noise: &Design, seed: u64, restarts: usize) -> Result<JitteredCrossArray> {
    if restarts == 0 {
        return Err(Error::domain("jittered cross array needs at least one restart"));
    }
    let (crossed, structure) = cross_array(control, noise)?;
    let half = structure
        .half_width()
        .ok_or_else(|| Error::InvalidDesign("jittering needs both arrays inside the unit cube".into()))?;
    if !(half > 0.0) {
        return Err(Error::InvalidDesign("cross array has zero fill distance".into()));
    }
    let centers = crossed.rows().to_vec();
    let mid = vec![0.5; crossed.n_factors()];
    let first = (0..centers.len())
        .min_by(|&a, &b| sq_dist(&centers[a], &mid).total_cmp(&sq_dist(&centers[b], &mid)))
        .unwrap_or(0);
    let passes: Vec<Pass> = (0..restarts)
        .into_par_iter()
        .map(|k| one_pass(&centers, half, first, seed, k))
        .collect();
    let (restart, best) = passes
        .into_iter()
        .enumerate()
        .min_by(|a, b| a.1.objective.total_cmp(&b.1.objective).then(a.0.cmp(&b.0)))
        .expect("at least one restart");
    let snapped = snap_by_rank(&best.points)?;
    let objective = maxpro_criterion(&best.points);
    let design = Design::new(snapped, crossed.factors().to_vec())?;
    Ok(JitteredCrossArray {
        design,
        clusters: best.order.iter().map(|&i| structure.clusters[i]).collect(),
        centers: best.order.iter().map(|&i| centers[i].clone()).collect(),
        pre_snap: best.points,
        half_width: half,
        objective,
        restart,
    })
}
