//! Numeric kernels shared by the solvers: a fixed-step RK4 stepper and a
//! damped multistart Newton method with periodic-aware deduplication.

use crate::chart::Chart;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// One classical RK4 step of dy/dt = f(t, y).
pub fn rk4_step<F: Fn(f64, &[f64]) -> Vec<f64>>(f: &F, t: f64, y: &[f64], h: f64) -> Vec<f64> {
    let k1 = f(t, y);
    let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
    let k2 = f(t + 0.5 * h, &y2);
    let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
    let k3 = f(t + 0.5 * h, &y3);
    let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
    let k4 = f(t + h, &y4);
    y.iter()
        .enumerate()
        .map(|(i, a)| a + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Integrate from t0 to t1 with a fixed step (the last step is shortened).
pub fn rk4_integrate<F: Fn(f64, &[f64]) -> Vec<f64>>(
    f: &F,
    t0: f64,
    t1: f64,
    y0: &[f64],
    step: f64,
) -> Vec<f64> {
    let mut t = t0;
    let mut y = y0.to_vec();
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let h = step.abs() * dir;
    while (t1 - t) * dir > 1e-15 {
        let hh = if ((t1 - t) * dir) < h.abs() { t1 - t } else { h };
        y = rk4_step(f, t, &y, hh);
        t += hh;
    }
    y
}

#[derive(Clone, Debug)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub fd_step: f64,
    /// Reject steps that grow the residual; halve up to this many times.
    pub max_halvings: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tol: 1e-10,
            max_iter: 40,
            fd_step: 1e-6,
            max_halvings: 8,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped Newton on a square system residual(x) = 0 with finite-difference
/// Jacobian. Returns the solution, its residual norm and the iteration count.
pub fn newton_solve<F: Fn(&[f64]) -> Vec<f64>>(
    residual: &F,
    seed: &[f64],
    cfg: &NewtonConfig,
) -> Result<(Vec<f64>, f64, usize)> {
    let n = seed.len();
    let mut x = seed.to_vec();
    let mut r = residual(&x);
    if r.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: r.len(),
        });
    }
    let mut rn = norm(&r);
    for it in 0..cfg.max_iter {
        if rn <= cfg.tol {
            return Ok((x, rn, it));
        }
        // finite-difference Jacobian
        let mut jac = DMatrix::zeros(n, n);
        let mut xq = x.clone();
        for j in 0..n {
            xq[j] = x[j] + cfg.fd_step;
            let rp = residual(&xq);
            xq[j] = x[j] - cfg.fd_step;
            let rm = residual(&xq);
            xq[j] = x[j];
            for i in 0..n {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * cfg.fd_step);
            }
        }
        // truncated-SVD pseudo-inverse step: behaves like Gauss-Newton near
        // solution manifolds, where the Jacobian is rank-deficient
        let rv = DVector::from_column_slice(&r);
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
        let step = svd
            .solve(&rv, (1e-10 * smax).max(1e-300))
            .map_err(|_| Error::NewtonFailed {
                residual: rn,
                iters: it,
            })?;
        // damped update
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=cfg.max_halvings {
            let cand: Vec<f64> = (0..n).map(|i| x[i] - alpha * step[i]).collect();
            let rc = residual(&cand);
            let rcn = norm(&rc);
            if rcn < rn || rcn <= cfg.tol {
                x = cand;
                r = rc;
                rn = rcn;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonFailed {
                residual: rn,
                iters: it,
            });
        }
    }
    if rn <= cfg.tol {
        return Ok((x, rn, cfg.max_iter));
    }
    Err(Error::NewtonFailed {
        residual: rn,
        iters: cfg.max_iter,
    })
}

/// Grid-plus-jitter seeds over a box; periodic coordinates cover [0,1).
pub fn grid_seeds(
    chart: &Chart,
    lo: &[f64],
    hi: &[f64],
    per_dim: usize,
    jitter: f64,
    rng: &mut impl rand::Rng,
) -> Vec<Vec<f64>> {
    let dim = chart.dim();
    let mut seeds = vec![vec![]];
    for i in 0..dim {
        let (a, b) = if chart.is_periodic(i) {
            (0.0, 1.0)
        } else {
            (lo[i], hi[i])
        };
        let mut next = Vec::new();
        for s in &seeds {
            for k in 0..per_dim {
                let frac = (k as f64 + 0.5) / per_dim as f64;
                let mut v = s.clone();
                v.push(a + frac * (b - a));
                next.push(v);
            }
        }
        seeds = next;
    }
    for s in &mut seeds {
        for (i, v) in s.iter_mut().enumerate() {
            let (a, b) = if chart.is_periodic(i) {
                (0.0, 1.0)
            } else {
                (lo[i], hi[i])
            };
            *v += jitter * (b - a) * (rng.gen::<f64>() - 0.5) / per_dim as f64;
        }
    }
    seeds
}

/// Solutions of a multistart search, deduplicated and deterministically
/// ordered.
pub struct MultistartOutcome {
    pub solutions: Vec<(Vec<f64>, f64)>,
    pub converged_seeds: usize,
    pub total_seeds: usize,
}

/// Run Newton from every seed in parallel, keep converged solutions, sort
/// lexicographically and deduplicate by periodic-aware radius.
pub fn multistart<F>(
    residual: F,
    chart: &Arc<Chart>,
    seeds: Vec<Vec<f64>>,
    cfg: &NewtonConfig,
    dedup_radius: f64,
) -> MultistartOutcome
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    use rayon::prelude::*;
    let total = seeds.len();
    let mut found: Vec<(Vec<f64>, f64)> = seeds
        .par_iter()
        .filter_map(|s| {
            newton_solve(&residual, s, cfg)
                .ok()
                .map(|(x, rn, _)| (chart.reduce(&x), rn))
        })
        .collect();
    let converged = found.len();
    found.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut out: Vec<(Vec<f64>, f64)> = Vec::new();
    for (x, rn) in found {
        if out.iter().all(|(y, _)| chart.distance(&x, y) > dedup_radius) {
            out.push((x, rn));
        }
    }
    MultistartOutcome {
        solutions: out,
        converged_seeds: converged,
        total_seeds: total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_exponential() {
        let f = |_t: f64, y: &[f64]| vec![y[0]];
        let y = rk4_integrate(&f, 0.0, 1.0, &[1.0], 1e-3);
        assert!((y[0] - std::f64::consts::E).abs() < 1e-10);
    }

    #[test]
    fn newton_finds_circle_intersection() {
        let r = |p: &[f64]| vec![p[0] * p[0] + p[1] * p[1] - 1.0, p[1] - p[0]];
        let (x, rn, _) = newton_solve(&r, &[1.0, 0.3], &NewtonConfig::default()).unwrap();
        assert!(rn < 1e-10);
        assert!((x[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn multistart_dedups_periodic() {
        let chart = Chart::new(&["t"], &[true]);
        let r = |p: &[f64]| vec![(std::f64::consts::TAU * p[0]).cos()];
        let mut rng = rand::thread_rng();
        let seeds = grid_seeds(&chart, &[0.0], &[1.0], 8, 0.1, &mut rng);
        let out = multistart(r, &chart, seeds, &NewtonConfig::default(), 1e-4);
        assert_eq!(out.solutions.len(), 2);
    }
}
