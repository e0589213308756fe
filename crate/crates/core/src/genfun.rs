//! Generating functions quadratic at infinity over twisted cotangent
//! bundles: twisted graphs, fibre-critical sets and wavefronts, transition
//! functions of C1-small contactomorphisms, sharp composition, the
//! isotopy-to-GFQI chain, difference functions and the graph Lagrangian
//! Gamma_phi.

use crate::chart::Chart;
use crate::contact::JetIsotopy;
use crate::dynamics::{HamiltonianIsotopy, LcsMap, SupportBox, TimeScalar};
use crate::error::{Error, Result};
use crate::field::{KForm, ScalarField};
use crate::lcs::{ModelSpace, Tau, Untwist};
use crate::newton::{grid_seeds, multistart, newton_solve, NewtonConfig};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// GFQI
// ---------------------------------------------------------------------------

type GfqiEval = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// A generating function quadratic at infinity in special normal form:
/// F(q, zeta) = zeta^T Q zeta outside the declared base support box.
#[derive(Clone)]
pub struct Gfqi {
    pub base: Arc<Chart>,
    pub fibre_dim: usize,
    /// Symmetric matrix of the fibre quadratic form.
    pub q_matrix: DMatrix<f64>,
    eval: GfqiEval,
    /// Base box outside which F is the pure quadratic.
    pub support: SupportBox,
    /// C0 bound on F - F_infinity.
    pub bound: f64,
    pub fd_step: f64,
}

impl Gfqi {
    pub fn new<F>(
        base: Arc<Chart>,
        q_matrix: DMatrix<f64>,
        support: SupportBox,
        bound: f64,
        eval: F,
    ) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        let fibre_dim = q_matrix.nrows();
        Gfqi {
            base,
            fibre_dim,
            q_matrix,
            eval: Arc::new(eval),
            support,
            bound,
            fd_step: 1e-6,
        }
    }

    /// N = 0: a function of the base alone.
    pub fn from_base_function(f: ScalarField, support: SupportBox, bound: f64) -> Self {
        let base = f.chart.clone();
        Gfqi::new(base, DMatrix::zeros(0, 0), support, bound, move |q, _| {
            f.eval(q)
        })
    }

    pub fn quadratic_part(&self, zeta: &[f64]) -> f64 {
        let n = self.fibre_dim;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += zeta[i] * self.q_matrix[(i, j)] * zeta[j];
            }
        }
        acc
    }

    pub fn value(&self, q: &[f64], zeta: &[f64]) -> f64 {
        (self.eval)(q, zeta)
    }

    /// Perturbation P = F - F_infinity.
    pub fn perturbation(&self, q: &[f64], zeta: &[f64]) -> f64 {
        self.value(q, zeta) - self.quadratic_part(zeta)
    }

    /// Gradient (dF/dq, dF/dzeta) by central differences.
    pub fn gradient(&self, q: &[f64], zeta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let h = self.fd_step;
        let mut gq = Vec::with_capacity(q.len());
        let mut qq = q.to_vec();
        for i in 0..q.len() {
            qq[i] = q[i] + h;
            let fp = self.value(&qq, zeta);
            qq[i] = q[i] - h;
            let fm = self.value(&qq, zeta);
            qq[i] = q[i];
            gq.push((fp - fm) / (2.0 * h));
        }
        let mut gz = Vec::with_capacity(zeta.len());
        let mut zz = zeta.to_vec();
        for i in 0..zeta.len() {
            zz[i] = zeta[i] + h;
            let fp = self.value(q, &zz);
            zz[i] = zeta[i] - h;
            let fm = self.value(q, &zz);
            zz[i] = zeta[i];
            gz.push((fp - fm) / (2.0 * h));
        }
        (gq, gz)
    }

    /// Eigen-decomposition of Q: (eigenvalues, eigenvectors as columns).
    pub fn q_eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        if self.fibre_dim == 0 {
            return (vec![], DMatrix::zeros(0, 0));
        }
        let se = nalgebra::SymmetricEigen::new(self.q_matrix.clone());
        (
            se.eigenvalues.iter().cloned().collect(),
            se.eigenvectors,
        )
    }

    /// Index of the quadratic form (number of negative eigenvalues).
    pub fn q_index(&self) -> usize {
        self.q_eigen().0.iter().filter(|&&l| l < 0.0).count()
    }

    /// Fibre truncation box in eigen-coordinates: |lambda_j| R_j^2 = 3 bound + 3,
    /// so that the floor level -bound - 1 is attained near the negative
    /// boundary and all critical values stay well inside.
    pub fn fibre_radii(&self) -> Vec<f64> {
        let (vals, _) = self.q_eigen();
        vals.iter()
            .map(|l| ((3.0 * self.bound + 3.0) / l.abs().max(1e-8)).sqrt())
            .collect()
    }

    /// Stabilization by a nondegenerate quadratic form on extra variables.
    pub fn stabilize(&self, extra: DMatrix<f64>) -> Gfqi {
        let n0 = self.fibre_dim;
        let n1 = extra.nrows();
        let mut q = DMatrix::zeros(n0 + n1, n0 + n1);
        q.view_mut((0, 0), (n0, n0)).copy_from(&self.q_matrix);
        q.view_mut((n0, n0), (n1, n1)).copy_from(&extra);
        let me = self.clone();
        let extra2 = extra.clone();
        Gfqi::new(
            self.base.clone(),
            q,
            self.support.clone(),
            self.bound,
            move |qpt, zeta| {
                let (z0, z1) = zeta.split_at(n0);
                let mut tail = 0.0;
                for i in 0..n1 {
                    for j in 0..n1 {
                        tail += z1[i] * extra2[(i, j)] * z1[j];
                    }
                }
                me.value(qpt, z0) + tail
            },
        )
    }

    /// Composition with a fibre-preserving reparametrization
    /// (q, zeta) -> (q, A(q) zeta + c(q)).
    pub fn reparametrize_fibre<A>(&self, map: A) -> Gfqi
    where
        A: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        let me = self.clone();
        Gfqi::new(
            self.base.clone(),
            self.q_matrix.clone(),
            self.support.clone(),
            self.bound,
            move |q, zeta| {
                let z = map(q, zeta);
                me.value(q, &z)
            },
        )
    }

    /// Serialization header: base, N, Q entries, support box, bound.
    pub fn header_json(&self) -> serde_json::Value {
        serde_json::json!({
            "base_labels": self.base.labels(),
            "base_periodic": self.base.periodic_mask(),
            "fibre_dim": self.fibre_dim,
            "q_matrix": (0..self.fibre_dim).map(|i| {
                (0..self.fibre_dim).map(|j| self.q_matrix[(i, j)]).collect::<Vec<_>>()
            }).collect::<Vec<_>>(),
            "support_lo": self.support.lo,
            "support_hi": self.support.hi,
            "perturbation_bound": self.bound,
        })
    }
}

// ---------------------------------------------------------------------------
// Twisted graphs
// ---------------------------------------------------------------------------

/// The twisted graph section q -> (q, df(q) - f(q) beta(q)) of T*_beta B,
/// with action f.
pub struct TwistedGraph {
    pub f: ScalarField,
    pub beta: KForm,
}

impl TwistedGraph {
    pub fn new(f: ScalarField, beta: KForm) -> Self {
        assert_eq!(beta.degree, 1);
        TwistedGraph { f, beta }
    }

    /// Full point (q, p) of T*B.
    pub fn point(&self, q: &[f64]) -> Vec<f64> {
        let df = self.f.gradient(q);
        let b = self.beta.coeffs(q);
        let fv = self.f.eval(q);
        let mut out = q.to_vec();
        out.extend(df.iter().zip(&b).map(|(d, bi)| d - fv * bi));
        out
    }

    /// Action of the section at q.
    pub fn action(&self, q: &[f64]) -> f64 {
        self.f.eval(q)
    }
}

// ---------------------------------------------------------------------------
// Fibre-critical points and wavefronts
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct FibreCriticalPoint {
    pub q: Vec<f64>,
    pub zeta: Vec<f64>,
    pub value: f64,
    /// i_{F,beta}(e) components dF/dq - F beta.
    pub covector: Vec<f64>,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct GfqiSearchConfig {
    pub base_grid: usize,
    pub fibre_grid: usize,
    pub newton_tol: f64,
    pub max_iter: usize,
    pub dedup_radius: f64,
    pub sv_threshold: f64,
    pub family_count: usize,
    pub seed: u64,
}

impl Default for GfqiSearchConfig {
    fn default() -> Self {
        GfqiSearchConfig {
            base_grid: 6,
            fibre_grid: 3,
            newton_tol: 1e-10,
            max_iter: 25,
            dedup_radius: 1e-4,
            sv_threshold: 1e-6,
            family_count: 24,
            seed: 0,
        }
    }
}

/// Fibre-critical points over sampled base points: Newton on dF/dzeta = 0.
pub fn fibre_critical_points(
    f: &Gfqi,
    beta: &KForm,
    cfg: &GfqiSearchConfig,
) -> Vec<FibreCriticalPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base_seeds = grid_seeds(
        &f.base,
        &f.support.lo,
        &f.support.hi,
        cfg.base_grid,
        0.0,
        &mut rng,
    );
    let radii = f.fibre_radii();
    let (_, vecs) = f.q_eigen();
    let ncfg = NewtonConfig {
        tol: cfg.newton_tol,
        max_iter: cfg.max_iter,
        fd_step: 1e-6,
        max_halvings: 4,
    };
    let mut out = Vec::new();
    for q in base_seeds {
        if f.fibre_dim == 0 {
            // every base point is fibre-critical
            let value = f.value(&q, &[]);
            let (gq, _) = f.gradient(&q, &[]);
            let b = beta.coeffs(&q);
            let covector: Vec<f64> = gq.iter().zip(&b).map(|(g, bi)| g - value * bi).collect();
            out.push(FibreCriticalPoint {
                q,
                zeta: vec![],
                value,
                covector,
                residual: 0.0,
            });
            continue;
        }
        // seeds in eigen-coordinates
        let mut fibre_seeds: Vec<Vec<f64>> = vec![vec![0.0; f.fibre_dim]];
        if cfg.fibre_grid > 1 {
            for j in 0..f.fibre_dim {
                for sgn in [-0.5, 0.5] {
                    let mut s = vec![0.0; f.fibre_dim];
                    s[j] = sgn * radii[j];
                    fibre_seeds.push(s);
                }
            }
        }
        for fs in fibre_seeds {
            let zeta0: Vec<f64> = {
                let v = &vecs * DVector::from_column_slice(&fs);
                v.iter().cloned().collect()
            };
            let res = |z: &[f64]| f.gradient(&q, z).1;
            if let Ok((zeta, rn, _)) = newton_solve(&res, &zeta0, &ncfg) {
                if out.iter().any(|e: &FibreCriticalPoint| {
                    f.base.distance(&e.q, &q) < 1e-12
                        && e.zeta
                            .iter()
                            .zip(&zeta)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt()
                            < cfg.dedup_radius
                }) {
                    continue;
                }
                let value = f.value(&q, &zeta);
                let (gq, _) = f.gradient(&q, &zeta);
                let b = beta.coeffs(&q);
                let covector: Vec<f64> =
                    gq.iter().zip(&b).map(|(g, bi)| g - value * bi).collect();
                out.push(FibreCriticalPoint {
                    q: q.clone(),
                    zeta,
                    value,
                    covector,
                    residual: rn,
                });
            }
        }
    }
    out
}

/// The wavefront covector i_{F,beta}(e)(X) = d_beta F(X^) at a fibre-critical
/// point: components dF/dq_i - F beta_i.
pub fn wavefront_map(f: &Gfqi, beta: &KForm, q: &[f64], zeta: &[f64]) -> Result<Vec<f64>> {
    let (gq, gz) = f.gradient(q, zeta);
    let rn = gz.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rn > 1e-8 {
        return Err(Error::NotFibreCritical { residual: rn });
    }
    let value = f.value(q, zeta);
    let b = beta.coeffs(q);
    Ok(gq.iter().zip(&b).map(|(g, bi)| g - value * bi).collect())
}

/// A critical point of the full GFQI.
#[derive(Clone, Debug, Serialize)]
pub struct GfqiCriticalPoint {
    pub q: Vec<f64>,
    pub zeta: Vec<f64>,
    pub value: f64,
    pub nondegenerate: bool,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GfqiCriticalSearch {
    pub points: Vec<GfqiCriticalPoint>,
    pub degenerate_family: bool,
}

/// Multistart Newton on the full gradient of F.
pub fn critical_points(f: &Gfqi, cfg: &GfqiSearchConfig) -> GfqiCriticalSearch {
    let bdim = f.base.dim();
    let n = f.fibre_dim;
    let radii = f.fibre_radii();
    let (_, vecs) = f.q_eigen();

    // full chart: base coords then fibre eigen-coordinates
    let mut labels: Vec<String> = f.base.labels().to_vec();
    labels.extend((0..n).map(|j| format!("zeta{j}")));
    let mut periodic = f.base.periodic_mask().to_vec();
    periodic.extend(std::iter::repeat(false).take(n));
    let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
    let chart = Chart::new(&refs, &periodic);

    let mut lo = f.support.lo.clone();
    let mut hi = f.support.hi.clone();
    for r in &radii {
        lo.push(-r * 0.3);
        hi.push(r * 0.3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // base-resolution grid, coarse in the fibre
    let mut seeds = Vec::new();
    let base_seeds = grid_seeds(&f.base, &f.support.lo, &f.support.hi, cfg.base_grid, 0.1, &mut rng);
    for b in base_seeds {
        let mut s = b.clone();
        s.extend(std::iter::repeat(0.0).take(n));
        seeds.push(s);
    }

    let ncfg = NewtonConfig {
        tol: cfg.newton_tol,
        max_iter: cfg.max_iter,
        fd_step: 1e-6,
        max_halvings: 4,
    };
    let vecs2 = vecs.clone();
    let residual = move |pt: &[f64]| -> Vec<f64> {
        let (q, zeig) = pt.split_at(bdim);
        let zeta: Vec<f64> = if n == 0 {
            vec![]
        } else {
            let v = &vecs2 * DVector::from_column_slice(zeig);
            v.iter().cloned().collect()
        };
        let (gq, gz) = f.gradient(q, &zeta);
        let mut r = gq;
        if n > 0 {
            // back to eigen-coordinates
            let gzv = DVector::from_column_slice(&gz);
            let ge = vecs2.transpose() * gzv;
            r.extend(ge.iter().cloned());
        }
        r
    };
    let outcome = multistart(residual, &chart, seeds, &ncfg, cfg.dedup_radius);

    // cluster by critical value like the chord solver
    let mut with_value: Vec<(Vec<f64>, f64, f64)> = outcome
        .solutions
        .into_iter()
        .map(|(pt, rn)| {
            let (q, zeig) = pt.split_at(bdim);
            let zeta: Vec<f64> = if n == 0 {
                vec![]
            } else {
                let v = &vecs * DVector::from_column_slice(zeig);
                v.iter().cloned().collect()
            };
            let value = f.value(q, &zeta);
            (pt, rn, value)
        })
        .collect();
    with_value.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap());
    let mut degenerate_family = false;
    let mut keep: Vec<(Vec<f64>, f64, f64)> = Vec::new();
    let mut i = 0;
    while i < with_value.len() {
        let mut j = i + 1;
        while j < with_value.len() && (with_value[j].2 - with_value[i].2).abs() < 1e-5 {
            j += 1;
        }
        if j - i >= cfg.family_count {
            degenerate_family = true;
            keep.push(with_value[i].clone());
        } else {
            keep.extend(with_value[i..j].iter().cloned());
        }
        i = j;
    }

    let points = keep
        .into_iter()
        .map(|(pt, rn, value)| {
            let (q, zeig) = pt.split_at(bdim);
            let zeta: Vec<f64> = if n == 0 {
                vec![]
            } else {
                let v = &vecs * DVector::from_column_slice(zeig);
                v.iter().cloned().collect()
            };
            let nondegenerate = hessian_nondegenerate(f, q, &zeta, cfg.sv_threshold);
            GfqiCriticalPoint {
                q: f.base.reduce(q),
                zeta,
                value,
                nondegenerate,
                residual: rn,
            }
        })
        .collect();
    GfqiCriticalSearch {
        points,
        degenerate_family,
    }
}

fn hessian_nondegenerate(f: &Gfqi, q: &[f64], zeta: &[f64], threshold: f64) -> bool {
    let bdim = q.len();
    let n = zeta.len();
    let dim = bdim + n;
    let h = 1e-4;
    let grad = |pt: &[f64]| -> Vec<f64> {
        let (gq, gz) = f.gradient(&pt[..bdim], &pt[bdim..]);
        let mut g = gq;
        g.extend(gz);
        g
    };
    let mut pt = q.to_vec();
    pt.extend_from_slice(zeta);
    let mut m = DMatrix::zeros(dim, dim);
    let mut qq = pt.clone();
    for j in 0..dim {
        qq[j] = pt[j] + h;
        let gp = grad(&qq);
        qq[j] = pt[j] - h;
        let gm = grad(&qq);
        qq[j] = pt[j];
        for i in 0..dim {
            m[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    let svd = m.svd(false, false);
    svd.singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        >= threshold
}

/// Deduplicated critical values.
pub fn critical_values(f: &Gfqi, cfg: &GfqiSearchConfig) -> (Vec<f64>, bool) {
    let search = critical_points(f, cfg);
    let mut values: Vec<f64> = search.points.iter().map(|p| p.value).collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup_by(|a, b| (*a - *b).abs() < 1e-5);
    (values, search.degenerate_family)
}

/// Difference function (q, z1, z2) -> F1(q, z1) - F2(q, z2) with quadratic
/// part Q1 (+) (-Q2).
pub fn difference_function(f1: &Gfqi, f2: &Gfqi) -> Result<Gfqi> {
    if !f1.base.same_shape(&f2.base) {
        return Err(Error::ModelMismatch);
    }
    let n1 = f1.fibre_dim;
    let n2 = f2.fibre_dim;
    let mut q = DMatrix::zeros(n1 + n2, n1 + n2);
    q.view_mut((0, 0), (n1, n1)).copy_from(&f1.q_matrix);
    q.view_mut((n1, n1), (n2, n2))
        .copy_from(&(-f2.q_matrix.clone()));
    let a = f1.clone();
    let b = f2.clone();
    let support = SupportBox::new(
        f1.support
            .lo
            .iter()
            .zip(&f2.support.lo)
            .map(|(x, y)| x.min(*y))
            .collect(),
        f1.support
            .hi
            .iter()
            .zip(&f2.support.hi)
            .map(|(x, y)| x.max(*y))
            .collect(),
    );
    Ok(Gfqi::new(
        f1.base.clone(),
        q,
        support,
        f1.bound + f2.bound,
        move |qpt, zeta| {
            let (z1, z2) = zeta.split_at(n1);
            a.value(qpt, z1) - b.value(qpt, z2)
        },
    ))
}

// ---------------------------------------------------------------------------
// Transition functions
// ---------------------------------------------------------------------------

/// The transition function of a C1-small contactomorphism of J^1 R^m given
/// as a jet-flow segment: G(q, p, z) = g_{p,z}(q) - f_{p,z}(q) with
/// f_{p,z}(q) = z + p.q and im(j^1 g_{p,z}) = phi(im(j^1 f_{p,z})).
#[derive(Clone)]
pub struct TransitionFn {
    pub jet: JetIsotopy,
    pub t0: f64,
    pub t1: f64,
    pub newton_iters: usize,
}

impl TransitionFn {
    pub fn new(jet: JetIsotopy, t0: f64, t1: f64) -> Self {
        TransitionFn {
            jet,
            t0,
            t1,
            newton_iters: 20,
        }
    }

    /// Push the affine section through the flow and read the z-offset over
    /// the base point q. Errors when the image fails to be a graph there.
    pub fn eval(&self, q: &[f64], p: &[f64], z: f64) -> Result<f64> {
        let m = self.jet.base.dim();
        let section = |q0: &[f64]| -> Vec<f64> {
            let mut pt = q0.to_vec();
            pt.extend_from_slice(p);
            let pq: f64 = p.iter().zip(q0).map(|(a, b)| a * b).sum();
            pt.push(z + pq);
            pt
        };
        let residual = |q0: &[f64]| -> Vec<f64> {
            match self.jet.flow_between(self.t0, self.t1, &section(q0)) {
                Ok(img) => self.jet.base.diff(&img[..m], q),
                Err(_) => vec![f64::NAN; m],
            }
        };
        let ncfg = NewtonConfig {
            tol: 1e-10,
            max_iter: self.newton_iters,
            fd_step: 1e-6,
            max_halvings: 4,
        };
        let (q0, _, _) = newton_solve(&residual, q, &ncfg).map_err(|_| Error::NotC1Small)?;
        let img = self.jet.flow_between(self.t0, self.t1, &section(&q0))?;
        let pq: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
        Ok(img[2 * m] - (z + pq))
    }
}

/// Sharp composition: (G # F)(q; p, q', zeta) =
/// G(q, p, F(q + q', zeta) - p.(q + q')) + F(q + q', zeta) - p.q'.
/// The new quadratic part is Q (+) the -p.q' block.
pub fn sharp_compose(g: &TransitionFn, f: &Gfqi) -> Gfqi {
    let m = f.base.dim();
    let n = f.fibre_dim;
    let new_n = n + 2 * m;
    let mut q_new = DMatrix::zeros(new_n, new_n);
    q_new.view_mut((0, 0), (n, n)).copy_from(&f.q_matrix);
    for i in 0..m {
        // -p.q' as a quadratic form on (p, q')
        q_new[(n + i, n + m + i)] = -0.5;
        q_new[(n + m + i, n + i)] = -0.5;
    }
    let f2 = f.clone();
    let g2 = g.clone();
    Gfqi::new(
        f.base.clone(),
        q_new,
        f.support.clone(),
        f.bound, // refreshed by callers via estimate_bound when needed
        move |qpt, zeta| {
            let (z0, pq) = zeta.split_at(n);
            let (p, qs) = pq.split_at(m);
            let shifted: Vec<f64> = qpt.iter().zip(qs).map(|(a, b)| a + b).collect();
            let fval = f2.value(&shifted, z0);
            let p_dot_shifted: f64 = p.iter().zip(&shifted).map(|(a, b)| a * b).sum();
            let p_dot_qs: f64 = p.iter().zip(qs).map(|(a, b)| a * b).sum();
            match g2.eval(qpt, p, fval - p_dot_shifted) {
                Ok(gv) => gv + fval - p_dot_qs,
                Err(_) => f64::NAN,
            }
        },
    )
}

/// Estimate the perturbation bound by sampling |F - F_infinity| over the
/// support box and small fibre values.
pub fn estimate_bound(f: &Gfqi, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = f.base.dim();
    let radii = f.fibre_radii();
    let (_, vecs) = f.q_eigen();
    let mut bound = 0.0f64;
    for _ in 0..samples {
        let q: Vec<f64> = (0..dim)
            .map(|i| {
                if f.base.is_periodic(i) {
                    rand::Rng::gen_range(&mut rng, 0.0..1.0)
                } else {
                    rand::Rng::gen_range(&mut rng, f.support.lo[i]..f.support.hi[i])
                }
            })
            .collect();
        let ze: Vec<f64> = radii
            .iter()
            .map(|r| rand::Rng::gen_range(&mut rng, -0.3 * r..0.3 * r))
            .collect();
        let zeta: Vec<f64> = if f.fibre_dim == 0 {
            vec![]
        } else {
            let v = &vecs * DVector::from_column_slice(&ze);
            v.iter().cloned().collect()
        };
        bound = bound.max(f.perturbation(&q, &zeta).abs());
    }
    bound
}

// ---------------------------------------------------------------------------
// The isotopy -> GFQI chain
// ---------------------------------------------------------------------------

/// The conjugated contact Hamiltonian on J^1(S^1 x R^{2n+1}) driving the
/// generating-function chain: K^(q, p, z) = (0 [+] H_t)(tau^{-1}(U^{-1}(...))),
/// which evaluates to (1 - p_z') H_t([Theta], X, Y, Z) on the tau image and
/// extends by 0 outside it.
pub fn conjugated_jet_hamiltonian(iso: &HamiltonianIsotopy) -> Result<JetIsotopy> {
    let n = match &iso.model {
        ModelSpace::LcsEuclidean { n } | ModelSpace::LcsTorus { n } => *n,
        _ => return Err(Error::ModelMismatch),
    };
    let base = iso.model.chart(); // S^1 x R^{2n+1} (z wrapped on the torus model)
    let h = iso.h.clone();
    let m = base.dim();
    let jet_chart = JetIsotopy::new(base.clone(), TimeScalar::zero(Chart::euclidean(2 * m + 1))).chart();
    let k = TimeScalar::new(jet_chart, move |t, pt| {
        let (q, rest) = pt.split_at(m);
        let (p, z) = rest.split_at(m);
        let z = z[0];
        // untwist inverse: sigma - z beta, beta = -dtheta
        let mut pp = p.to_vec();
        pp[0] += z;
        // tau inverse needs p_z' < 1
        if pp[m - 1] >= 1.0 - 1e-9 {
            return 0.0;
        }
        let mut tpt = q.to_vec();
        tpt.extend_from_slice(&pp);
        match Tau::new(n).apply_inverse(&tpt) {
            Ok(prod) => {
                // second factor ([Theta], X, Y, Z) and the conformal weight
                let scale = 1.0 - pp[m - 1]; // e^{Theta - theta}
                let mut second = Vec::with_capacity(m);
                second.push(prod[2 + 2 * n]); // Theta (reduced mod 1 on eval)
                second.extend_from_slice(&prod[3 + 2 * n..3 + 4 * n]);
                second.push(prod[3 + 4 * n]);
                scale * h.eval(t, &second)
            }
            Err(_) => 0.0,
        }
    });
    let mut jet = JetIsotopy::new(base, k);
    jet.cfg.step = 2e-2;
    Ok(jet)
}

/// Chain the sharp composition over K C1-small steps of the conjugated
/// isotopy, starting from the zero-section generating function F = 0.
/// Doubles K until every step passes the operational C1-smallness test,
/// up to the cap.
pub fn isotopy_to_gfqi(iso: &HamiltonianIsotopy, steps: usize, cap: usize) -> Result<Gfqi> {
    let jet = conjugated_jet_hamiltonian(iso)?;
    let base = iso.model.chart();
    let support = match &iso.support {
        Some(b) => b.clone(),
        None => SupportBox::new(vec![-1.5; base.dim()], vec![1.5; base.dim()]),
    };
    let mut k = steps.max(1);
    'outer: loop {
        if k > cap {
            return Err(Error::ChainCapExceeded { cap });
        }
        // operational C1-smallness: the transition evaluation converges on a
        // probe set of each segment
        let mut transitions = Vec::with_capacity(k);
        for seg in 0..k {
            let t0 = seg as f64 / k as f64;
            let t1 = (seg + 1) as f64 / k as f64;
            let g = TransitionFn::new(jet.clone(), t0, t1);
            let m = base.dim();
            let probes: Vec<(Vec<f64>, Vec<f64>, f64)> = vec![
                (vec![0.0; m], vec![0.0; m], 0.0),
                (vec![0.2; m], vec![0.05; m], 0.1),
                (support.lo.clone(), vec![0.0; m], 0.0),
            ];
            for (q, p, z) in &probes {
                if g.eval(q, p, *z).is_err() {
                    k *= 2;
                    continue 'outer;
                }
            }
            transitions.push(g);
        }
        // F0 = 0 over the base (zero section)
        let mut f = Gfqi::from_base_function(
            ScalarField::zero(base.clone()),
            support.clone(),
            0.0,
        );
        for g in transitions {
            f = sharp_compose(&g, &f);
        }
        f.bound = estimate_bound(&f, 200, 7).max(1e-6);
        return Ok(f);
    }
}

// ---------------------------------------------------------------------------
// Gamma_phi
// ---------------------------------------------------------------------------

/// The graph Lagrangian embedding Gamma_phi into T*_{-dtheta}(S^1 x R^{2n+1}):
/// the displayed eight-component formula evaluated from the time-one map.
pub fn gamma_phi(map: &LcsMap, n: usize, p: &[f64]) -> Vec<f64> {
    let (phi, g, _) = map.eval(p);
    gamma_from_parts(n, p, &phi, g)
}

pub fn gamma_from_parts(n: usize, p: &[f64], phi: &[f64], g: f64) -> Vec<f64> {
    let e = (-0.5 * g).exp();
    let theta = p[0];
    let x = &p[1..1 + n];
    let y = &p[1 + n..1 + 2 * n];
    let z = p[1 + 2 * n];
    let px = &phi[1..1 + n];
    let py = &phi[1 + n..1 + 2 * n];
    let pz = phi[1 + 2 * n];
    let mut out = Vec::with_capacity(4 * n + 4);
    out.push(theta.rem_euclid(1.0));
    for j in 0..n {
        out.push((x[j] + e * px[j]) / 2.0);
    }
    for j in 0..n {
        out.push((y[j] + e * py[j]) / 2.0);
    }
    out.push(pz);
    let cross: f64 = (0..n).map(|j| y[j] * px[j] - x[j] * py[j]).sum();
    out.push(pz - z + e * cross / 2.0);
    for j in 0..n {
        out.push(y[j] - e * py[j]);
    }
    for j in 0..n {
        out.push(e * px[j] - x[j]);
    }
    out.push(1.0 - (-g).exp());
    out
}

/// The action of the graph Lagrangian at p:
/// S_Gamma = phi_z - z + e^{-g/2}(y phi_x - x phi_y)/2 - S_phi.
pub fn gamma_action(map: &LcsMap, n: usize, p: &[f64]) -> f64 {
    let (phi, g, s) = map.eval(p);
    let e = (-0.5 * g).exp();
    let x = &p[1..1 + n];
    let y = &p[1 + n..1 + 2 * n];
    let z = p[1 + 2 * n];
    let px = &phi[1..1 + n];
    let py = &phi[1 + n..1 + 2 * n];
    let pz = phi[1 + 2 * n];
    let cross: f64 = (0..n).map(|j| y[j] * px[j] - x[j] * py[j]).sum();
    pz - z + e * cross / 2.0 - s
}

/// The untwisting map for the canonical beta = -dtheta over a model chart.
pub fn canonical_untwist(model: &ModelSpace) -> Untwist {
    let base = model.chart();
    let beta = KForm::d_coord(base.clone(), 0).scale(-1.0);
    Untwist::new(base, beta)
}

// ---------------------------------------------------------------------------
// Section extraction (N = 0 generating functions of C1-small maps)
// ---------------------------------------------------------------------------

/// When Gamma_phi is a section over the base, its N = 0 generating function
/// is F(qbar) = S_Gamma at the preimage; the preimage is found by Newton on
/// the base projection. Fails with NotC1Small when the projection is not
/// invertible at the query.
pub struct SectionGf {
    pub map: LcsMap,
    pub n: usize,
    pub newton_iters: usize,
}

impl SectionGf {
    pub fn new(map: LcsMap, n: usize) -> Self {
        SectionGf {
            map,
            n,
            newton_iters: 25,
        }
    }

    /// Solve base(Gamma_phi(theta, x, y, z)) = qbar; theta = qbar_theta is
    /// exact, so the solve runs over (x, y, z).
    pub fn preimage(&self, qbar: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let theta = qbar[0];
        let residual = |xyz: &[f64]| -> Vec<f64> {
            let mut p = Vec::with_capacity(2 * n + 2);
            p.push(theta);
            p.extend_from_slice(xyz);
            let gp = gamma_phi(&self.map, n, &p);
            if gp.iter().any(|v| !v.is_finite()) {
                return vec![f64::NAN; 2 * n + 1];
            }
            (1..2 * n + 2).map(|i| gp[i] - qbar[i]).collect()
        };
        let seed: Vec<f64> = qbar[1..].to_vec();
        let ncfg = NewtonConfig {
            tol: 1e-10,
            max_iter: self.newton_iters,
            fd_step: 1e-6,
            max_halvings: 4,
        };
        let (xyz, _, _) = newton_solve(&residual, &seed, &ncfg).map_err(|_| Error::NotC1Small)?;
        let mut p = Vec::with_capacity(2 * n + 2);
        p.push(theta);
        p.extend_from_slice(&xyz);
        Ok(p)
    }

    pub fn value(&self, qbar: &[f64]) -> Result<f64> {
        let p = self.preimage(qbar)?;
        Ok(gamma_action(&self.map, self.n, &p))
    }
}
