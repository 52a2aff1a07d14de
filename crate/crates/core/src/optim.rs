//! Small local optimizers shared by the fitting and design-search code.

/// Outcome of a local search.
#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub converged: bool,
}

/// Nelder-Mead on a box; trial points are clamped into `[lo, hi]`.
pub(crate) fn nelder_mead_box(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    step: f64,
    max_evals: usize,
    ftol: f64,
) -> Minimum {
    let d = x0.len();
    let clamp = |x: &mut Vec<f64>| {
        for i in 0..d {
            x[i] = x[i].clamp(lo[i], hi[i]);
        }
    };
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    let mut start = x0.to_vec();
    clamp(&mut start);
    simplex.push(start.clone());
    for i in 0..d {
        let mut v = start.clone();
        let span = (hi[i] - lo[i]) * step;
        v[i] += if v[i] + span <= hi[i] { span } else { -span };
        clamp(&mut v);
        simplex.push(v);
    }
    let mut fv: Vec<f64> = simplex.iter().map(|x| f(x)).collect();
    let mut evals = d + 1;
    let mut converged = false;
    while evals < max_evals {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        fv = order.iter().map(|&i| fv[i]).collect();
        let spread = (fv[d] - fv[0]).abs();
        if spread <= ftol * (1.0 + fv[0].abs()) && fv[d].is_finite() {
            converged = true;
            break;
        }
        let mut centroid = vec![0.0; d];
        for x in &simplex[..d] {
            for i in 0..d {
                centroid[i] += x[i] / d as f64;
            }
        }
        let along = |t: f64| {
            let mut v: Vec<f64> = (0..d).map(|i| centroid[i] + t * (simplex[d][i] - centroid[i])).collect();
            clamp(&mut v);
            v
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < fv[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                simplex[d] = xe;
                fv[d] = fe;
            } else {
                simplex[d] = xr;
                fv[d] = fr;
            }
        } else if fr < fv[d - 1] {
            simplex[d] = xr;
            fv[d] = fr;
        } else {
            let (xc, fc) = if fr < fv[d] {
                let x = along(-0.5);
                let v = f(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = f(&x);
                (x, v)
            };
            evals += 1;
            if fc < fv[d].min(fr) {
                simplex[d] = xc;
                fv[d] = fc;
            } else {
                for j in 1..=d {
                    let v: Vec<f64> = (0..d)
                        .map(|i| simplex[0][i] + 0.5 * (simplex[j][i] - simplex[0][i]))
                        .collect();
                    fv[j] = f(&v);
                    simplex[j] = v;
                }
                evals += d;
            }
        }
    }
    let best = (0..=d).min_by(|&a, &b| fv[a].total_cmp(&fv[b])).unwrap();
    Minimum {
        x: simplex[best].clone(),
        f: fv[best],
        converged,
    }
}

/// Limited-memory BFGS with a backtracking Armijo line search.
///
/// `fg` returns the objective and writes the gradient.
pub(crate) fn lbfgs(
    fg: impl Fn(&[f64], &mut [f64]) -> f64,
    x0: &[f64],
    max_iter: usize,
    gtol: f64,
) -> Minimum {
    const M: usize = 8;
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = fg(&x, &mut g);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(a, b)| a * b).sum::<f64>();
    let mut converged = false;
    if !f.is_finite() {
        return Minimum { x, f, converged };
    }
    for _ in 0..max_iter {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm <= gtol {
            converged = true;
            break;
        }
        // two-loop recursion
        let mut q = g.clone();
        let k = s_hist.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            alpha[i] = rho * dot(&s_hist[i], &q);
            for j in 0..n {
                q[j] -= alpha[i] * y_hist[i][j];
            }
        }
        let gamma = if k > 0 {
            dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1])
        } else {
            1.0 / gnorm.max(1e-300)
        };
        for v in q.iter_mut() {
            *v *= gamma;
        }
        for i in 0..k {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            let b = rho * dot(&y_hist[i], &q);
            for j in 0..n {
                q[j] += s_hist[i][j] * (alpha[i] - b);
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            dir = g.iter().map(|v| -v / gnorm.max(1e-300)).collect();
            slope = dot(&dir, &g);
            s_hist.clear();
            y_hist.clear();
        }
        let mut t = 1.0;
        let mut xn = vec![0.0; n];
        let mut gn = vec![0.0; n];
        let mut fnew = f64::INFINITY;
        let mut accepted = false;
        for _ in 0..40 {
            for j in 0..n {
                xn[j] = x[j] + t * dir[j];
            }
            fnew = fg(&xn, &mut gn);
            if fnew.is_finite() && fnew <= f + 1e-4 * t * slope {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        let s: Vec<f64> = (0..n).map(|j| xn[j] - x[j]).collect();
        let y: Vec<f64> = (0..n).map(|j| gn[j] - g[j]).collect();
        let rel = (f - fnew).abs() / f.abs().max(1e-300);
        x.copy_from_slice(&xn);
        g.copy_from_slice(&gn);
        f = fnew;
        if dot(&s, &y) > 1e-300 {
            if s_hist.len() == M {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
        }
        if rel < 1e-13 {
            converged = true;
            break;
        }
    }
    Minimum { x, f, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_finds_box_minimum() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + 10.0 * (x[1] + 2.0).powi(2);
        let m = nelder_mead_box(f, &[0.0, 0.0], &[-1.0, -1.0], &[1.0, 1.0], 0.2, 2000, 1e-14);
        assert!((m.x[0] - 0.3).abs() < 1e-4);
        assert!((m.x[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn lbfgs_rosenbrock() {
        let fg = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let m = lbfgs(fg, &[-1.2, 1.0], 500, 1e-10);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }
}
