//! Latin hypercube searches by simulated annealing over within-column swaps.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gp::Design;

/// Default annealing length.
pub const DEFAULT_ITERS: usize = 20_000;

const PHI_POWER: f64 = 15.0;

/// Midpoint levels `(i - 0.5) / n`.
pub fn uniform_design(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidDesign("a design needs at least one run".into()));
    }
    Ok((0..n).map(|i| (i as f64 + 0.5) / n as f64).collect())
}

#[derive(Clone, Copy)]
enum Criterion {
    /// Morris-Mitchell `φ_p`, a smooth surrogate for the minimum distance.
    Maximin,
    /// `Σ 1 / Π_l (Δ_l)²`.
    MaxPro,
}

impl Criterion {
    /// Pair term from the per-column rank differences.
    fn pair(self, stat: f64) -> f64 {
        match self {
            Criterion::Maximin => stat.powf(-0.5 * PHI_POWER),
            Criterion::MaxPro => (-stat).exp(),
        }
    }

    /// Contribution of one coordinate difference to the pair statistic.
    fn coord(self, diff: f64) -> f64 {
        match self {
            Criterion::Maximin => diff * diff,
            Criterion::MaxPro => (diff * diff).ln(),
        }
    }
}

/// Annealing state on integer ranks; all arithmetic is in rank units.
struct State {
    ranks: Vec<Vec<u32>>,
    stat: Vec<f64>,
    total: f64,
    crit: Criterion,
    n: usize,
}

impl State {
    fn new(ranks: Vec<Vec<u32>>, crit: Criterion) -> Self {
        let n = ranks[0].len();
        let mut s = Self {
            ranks,
            stat: vec![0.0; n * n],
            total: 0.0,
            crit,
            n,
        };
        s.recompute();
        s
    }

    fn recompute(&mut self) {
        let n = self.n;
        self.total = 0.0;
        for i in 0..n {
            for j in 0..i {
                let v: f64 = self
                    .ranks
                    .iter()
                    .map(|col| self.crit.coord(col[i] as f64 - col[j] as f64))
                    .sum();
                self.stat[i * n + j] = v;
                self.stat[j * n + i] = v;
                self.total += self.crit.pair(v);
            }
        }
    }

    /// Objective change from swapping rows `a` and `b` in column `c`, with the new pair statistics.
    fn swap_delta(&self, c: usize, a: usize, b: usize, scratch: &mut Vec<(usize, f64, f64)>) -> f64 {
        scratch.clear();
        let col = &self.ranks[c];
        let (ra, rb) = (col[a] as f64, col[b] as f64);
        let mut delta = 0.0;
        for k in 0..self.n {
            if k == a || k == b {
                continue;
            }
            let rk = col[k] as f64;
            let da = self.crit.coord(rb - rk) - self.crit.coord(ra - rk);
            let sa = self.stat[a * self.n + k] + da;
            let sb = self.stat[b * self.n + k] - da;
            delta += self.crit.pair(sa) - self.crit.pair(self.stat[a * self.n + k]);
            delta += self.crit.pair(sb) - self.crit.pair(self.stat[b * self.n + k]);
            scratch.push((k, sa, sb));
        }
        delta
    }

    fn apply(&mut self, c: usize, a: usize, b: usize, scratch: &[(usize, f64, f64)], delta: f64) {
        self.ranks[c].swap(a, b);
        let n = self.n;
        for &(k, sa, sb) in scratch {
            self.stat[a * n + k] = sa;
            self.stat[k * n + a] = sa;
            self.stat[b * n + k] = sb;
            self.stat[k * n + b] = sb;
        }
        self.total += delta;
    }
}

fn anneal(n: usize, d: usize, seed: u64, iters: usize, crit: Criterion) -> Result<Design> {
    if n < 2 {
        return Err(Error::InvalidDesign(format!("a Latin hypercube needs at least 2 runs, got {n}")));
    }
    if d == 0 {
        return Err(Error::InvalidDesign("a Latin hypercube needs at least one column".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranks: Vec<Vec<u32>> = (0..d)
        .map(|_| {
            let mut p: Vec<u32> = (0..n as u32).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    let mut state = State::new(ranks, crit);
    let mut best = state.ranks.clone();
    let mut best_val = state.total;
    let mut scratch = Vec::with_capacity(n);
    // temperatures act on relative changes of the objective
    let (t0, t1) = (0.1_f64, 1e-4_f64);
    let cool = (t1 / t0).powf(1.0 / iters.max(1) as f64);
    let mut temp = t0;
    for it in 0..iters {
        let c = rng.random_range(0..d);
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let delta = state.swap_delta(c, a, b, &mut scratch);
        let rel = delta / state.total.max(f64::MIN_POSITIVE);
        if rel <= 0.0 || rng.random::<f64>() < (-rel / temp).exp() {
            state.apply(c, a, b, &scratch, delta);
            if state.total < best_val {
                best_val = state.total;
                best.clone_from(&state.ranks);
            }
        }
        if it % 1000 == 999 {
            state.recompute();
        }
        temp *= cool;
    }
    let rows = (0..n)
        .map(|i| best.iter().map(|col| (col[i] as f64 + 0.5) / n as f64).collect())
        .collect();
    Design::with_roles(rows, d, 0)
}

/// Maximin Latin hypercube in `d` columns, all marked as control factors.
pub fn maximin_lhd(n: usize, d: usize, seed: u64, iters: usize) -> Result<Design> {
    anneal(n, d, seed, iters, Criterion::Maximin)
}

/// Maximum projection Latin hypercube in `d` columns, all marked as control factors.
pub fn maxpro_lhd(n: usize, d: usize, seed: u64, iters: usize) -> Result<Design> {
    anneal(n, d, seed, iters, Criterion::MaxPro)
}

/// MaxPro criterion `[Σ_{i<j} 1/Π_l (u_il - u_jl)^2 / C(n, 2)]^{1/d}`.
pub fn maxpro_criterion(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    if n < 2 {
        return 0.0;
    }
    let d = rows[0].len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..i {
            s += 1.0 / maxpro_product(&rows[i], &rows[j]);
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    (s / pairs).powf(1.0 / d as f64)
}

pub(crate) fn maxpro_product(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn is_lhd(d: &Design) -> bool {
        let n = d.n_runs();
        let levels = uniform_design(n).unwrap();
        (0..d.n_factors()).all(|j| {
            let mut c = d.column(j);
            c.sort_by(f64::total_cmp);
            c.iter().zip(&levels).all(|(a, b)| (a - b).abs() < 1e-15)
        })
    }

    fn random_lhd(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let cols: Vec<Vec<usize>> = (0..d)
            .map(|_| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(rng);
                p
            })
            .collect();
        (0..n)
            .map(|i| cols.iter().map(|c| (c[i] as f64 + 0.5) / n as f64).collect())
            .collect()
    }

    #[test]
    fn uniform_design_examples() {
        let d = uniform_design(10).unwrap();
        assert!((d[0] - 0.05).abs() < 1e-15 && (d[9] - 0.95).abs() < 1e-15);
        assert!(d.windows(2).all(|w| (w[1] - w[0] - 0.1).abs() < 1e-12));
        assert_eq!(uniform_design(1).unwrap(), vec![0.5]);
        assert!(uniform_design(0).is_err());
    }

    #[test]
    fn two_run_lhd_is_unique() {
        for f in [maximin_lhd, maxpro_lhd] {
            let d = f(2, 1, 0, 100).unwrap();
            let mut c = d.column(0);
            c.sort_by(f64::total_cmp);
            assert_eq!(c, vec![0.25, 0.75]);
        }
    }

    #[test]
    fn maximin_reaches_exhaustive_optimum_for_four_runs() {
        // column 1 fixed to identity; enumerate all permutations of column 2
        let mut best = 0.0_f64;
        let mut perm = [0usize, 1, 2, 3];
        let mut heap = permutations(&mut perm);
        while let Some(p) = heap.pop() {
            let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![(i as f64 + 0.5) / 4.0, (p[i] as f64 + 0.5) / 4.0]).collect();
            best = best.max(Design::with_roles(rows, 2, 0).unwrap().min_distance());
        }
        let d = maximin_lhd(4, 2, 7, 2000).unwrap();
        assert!(is_lhd(&d));
        assert!(d.min_distance() >= 0.95 * best);
    }

    fn permutations(p: &mut [usize; 4]) -> Vec<[usize; 4]> {
        let mut out = Vec::new();
        fn rec(k: usize, p: &mut [usize; 4], out: &mut Vec<[usize; 4]>) {
            if k == p.len() {
                out.push(*p);
                return;
            }
            for i in k..p.len() {
                p.swap(k, i);
                rec(k + 1, p, out);
                p.swap(k, i);
            }
        }
        rec(0, p, &mut out);
        out
    }

    #[test]
    fn maximin_beats_random_median() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut base: Vec<f64> = (0..20)
            .map(|_| Design::with_roles(random_lhd(12, 3, &mut rng), 3, 0).unwrap().min_distance())
            .collect();
        base.sort_by(f64::total_cmp);
        let d = maximin_lhd(12, 3, 5, DEFAULT_ITERS).unwrap();
        assert!(is_lhd(&d));
        assert!(d.min_distance() >= base[10]);
    }

    #[test]
    fn maxpro_beats_all_random_designs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = maxpro_lhd(8, 3, 11, DEFAULT_ITERS).unwrap();
        assert!(is_lhd(&d));
        let v = maxpro_criterion(d.rows());
        for _ in 0..50 {
            assert!(v <= maxpro_criterion(&random_lhd(8, 3, &mut rng)));
        }
        for j in 0..3 {
            let mut c = d.column(j);
            c.dedup();
            assert_eq!(c.len(), 8);
        }
    }

    #[test]
    fn annealing_is_deterministic_per_seed() {
        assert_eq!(maxpro_lhd(9, 4, 3, 3000).unwrap(), maxpro_lhd(9, 4, 3, 3000).unwrap());
        assert_ne!(maxpro_lhd(9, 4, 3, 3000).unwrap(), maxpro_lhd(9, 4, 4, 3000).unwrap());
    }
}
