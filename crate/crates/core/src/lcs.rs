//! Lcs triples, gauge transformations, Lee and Liouville vector fields, the
//! built-in model spaces and their structure maps (untwisting map, tau).

use crate::calculus::{lichnerowicz_derivative, ChartMap};
use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::{index_position, KForm, ScalarField, ScalarRepr};
use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;
use std::sync::Arc;

/// Nondegeneracy threshold for pointwise omega matrices.
pub const DET_THRESHOLD: f64 = 1e-10;

/// A representative (eta, omega, lambda) of a Liouville lcs structure on a
/// coordinate model space.
#[derive(Clone)]
pub struct LcsTriple {
    pub chart: Arc<Chart>,
    pub eta: KForm,
    pub omega: KForm,
    pub lambda: Option<KForm>,
}

impl LcsTriple {
    pub fn new(chart: Arc<Chart>, eta: KForm, omega: KForm, lambda: Option<KForm>) -> Self {
        assert_eq!(eta.degree, 1);
        assert_eq!(omega.degree, 2);
        LcsTriple {
            chart,
            eta,
            omega,
            lambda,
        }
    }

    /// From a Liouville form: omega = d_eta lambda.
    pub fn from_liouville(chart: Arc<Chart>, eta: KForm, lambda: KForm) -> Result<Self> {
        let omega = lichnerowicz_derivative(&lambda, &eta)?;
        Ok(LcsTriple::new(chart, eta, omega, Some(lambda)))
    }

    /// Pointwise matrix of omega: M[i][j] = omega(e_i, e_j).
    pub fn omega_matrix(&self, p: &[f64]) -> DMatrix<f64> {
        let dim = self.chart.dim();
        let coeffs = self.omega.coeffs(p);
        let mut m = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in i + 1..dim {
                let c = coeffs[index_position(dim, &[i, j])];
                m[(i, j)] = c;
                m[(j, i)] = -c;
            }
        }
        m
    }

    /// Solve omega(v, .) = rhs pointwise, i.e. M^T v = rhs.
    pub fn solve_omega(&self, p: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
        let m = self.omega_matrix(p).transpose();
        let lu = m.lu();
        let det = lu.determinant();
        if det.abs() < DET_THRESHOLD {
            return Err(Error::DegenerateForm { det });
        }
        let sol = lu
            .solve(&DMatrix::from_column_slice(rhs.len(), 1, rhs))
            .ok_or(Error::DegenerateForm { det })?;
        Ok(sol.column(0).iter().cloned().collect())
    }

    /// Lee vector field at a point: omega(R, .) = eta.
    pub fn lee_vector_field(&self, p: &[f64]) -> Result<Vec<f64>> {
        let eta = self.eta.coeffs(p);
        self.solve_omega(p, &eta)
    }

    /// Liouville vector field at a point: omega(Z, .) = lambda.
    pub fn liouville_vector_field(&self, p: &[f64]) -> Result<Vec<f64>> {
        let lambda = self.lambda.as_ref().ok_or(Error::NotLiouville)?;
        let l = lambda.coeffs(p);
        self.solve_omega(p, &l)
    }

    /// Gauge transform: (eta, omega, lambda) -> (eta + df, e^f omega, e^f lambda).
    /// Stays in the exact expression class when f is linear.
    pub fn gauge_transform(&self, f: &ScalarField) -> Result<LcsTriple> {
        let df = crate::calculus::exterior_derivative(&KForm::from_scalar(f))?;
        let eta = self.eta.add(&df);
        let (omega, lambda) = match linear_exp(f) {
            Some(ef) => {
                let scale_form = |form: &KForm| -> KForm {
                    match &form.repr {
                        crate::field::FormRepr::Expr(es) => KForm::from_exprs(
                            form.chart.clone(),
                            form.degree,
                            es.iter().map(|e| e.mul(&ef)).collect(),
                        ),
                        _ => scale_by_scalar(form, f),
                    }
                };
                (
                    scale_form(&self.omega),
                    self.lambda.as_ref().map(scale_form),
                )
            }
            None => (
                scale_by_scalar(&self.omega, f),
                self.lambda.as_ref().map(|l| scale_by_scalar(l, f)),
            ),
        };
        Ok(LcsTriple::new(self.chart.clone(), eta, omega, lambda))
    }
}

/// e^f as an expression when f is (constant + linear), else None.
fn linear_exp(f: &ScalarField) -> Option<Expr> {
    let ScalarRepr::Expr(e) = &f.repr else {
        return None;
    };
    let mut c0 = 0.0;
    let mut lin: Vec<(usize, f64)> = vec![];
    for t in &e.terms {
        if !t.trigs.is_empty() || !t.lin.is_empty() {
            return None;
        }
        match t.powers.as_slice() {
            [] => c0 += t.coef,
            [(i, 1)] => match lin.iter_mut().find(|(j, _)| j == i) {
                Some(entry) => entry.1 += t.coef,
                None => lin.push((*i, t.coef)),
            },
            _ => return None,
        }
    }
    lin.sort_by_key(|&(i, _)| i);
    Some(Expr::exp_linear(&lin).scale(c0.exp()))
}

/// e^f * form via closures (general f).
fn scale_by_scalar(form: &KForm, f: &ScalarField) -> KForm {
    let form_c = form.clone();
    let f_c = f.clone();
    let h = form.fd_step();
    KForm::from_fn(form.chart.clone(), form.degree, move |p| {
        let s = f_c.eval(p).exp();
        form_c.coeffs(p).into_iter().map(|c| s * c).collect()
    })
    .with_step(h)
}

/// Residual report of [`verify_lcs_triple`].
#[derive(Clone, Debug, Serialize)]
pub struct TripleReport {
    pub max_d_eta: f64,
    pub max_d_eta_omega: f64,
    pub max_liouville_residual: Option<f64>,
    pub min_abs_det: f64,
    pub samples: usize,
}

impl TripleReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_d_eta <= tol
            && self.max_d_eta_omega <= tol
            && self.max_liouville_residual.map_or(true, |r| r <= tol)
            && self.min_abs_det >= DET_THRESHOLD
    }
}

/// Check d(eta) = 0, d_eta(omega) = 0, omega = d_eta(lambda) and pointwise
/// nondegeneracy on sampled points of the given box.
pub fn verify_lcs_triple<R: Rng>(
    triple: &LcsTriple,
    samples: usize,
    rng: &mut R,
    bounds: f64,
) -> TripleReport {
    let dim = triple.chart.dim();
    let mut max_d_eta = 0.0f64;
    let mut max_d_eta_omega = 0.0f64;
    let mut max_liouville: Option<f64> = triple.lambda.as_ref().map(|_| 0.0);
    let mut min_det = f64::INFINITY;

    let d_eta = crate::calculus::exterior_derivative(&triple.eta).ok();
    let d_eta_omega = lichnerowicz_derivative(&triple.omega, &triple.eta).ok();
    let liouville_residual = triple
        .lambda
        .as_ref()
        .and_then(|l| lichnerowicz_derivative(l, &triple.eta).ok())
        .map(|dl| dl.sub(&triple.omega));

    for _ in 0..samples {
        let p: Vec<f64> = (0..dim)
            .map(|i| {
                if triple.chart.is_periodic(i) {
                    rng.gen_range(0.0..1.0)
                } else {
                    rng.gen_range(-bounds..bounds)
                }
            })
            .collect();
        if let Some(de) = &d_eta {
            max_d_eta = max_d_eta.max(de.coeffs(&p).iter().fold(0.0f64, |m, c| m.max(c.abs())));
        }
        if let Some(dw) = &d_eta_omega {
            max_d_eta_omega =
                max_d_eta_omega.max(dw.coeffs(&p).iter().fold(0.0f64, |m, c| m.max(c.abs())));
        }
        if let (Some(res), Some(acc)) = (&liouville_residual, &mut max_liouville) {
            *acc = acc.max(res.coeffs(&p).iter().fold(0.0f64, |m, c| m.max(c.abs())));
        }
        let det = triple.omega_matrix(&p).determinant().abs();
        min_det = min_det.min(det);
    }

    TripleReport {
        max_d_eta,
        max_d_eta_omega,
        max_liouville_residual: max_liouville,
        min_abs_det: min_det,
        samples,
    }
}

// ---------------------------------------------------------------------------
// Model spaces
// ---------------------------------------------------------------------------

/// The contact form alpha0 = sum (x_j dy_j - y_j dx_j)/2 - dz on a chart with
/// coordinates ordered (..prefix.., x_1..x_n, y_1..y_n, z).
fn alpha0_coeffs(chart: &Arc<Chart>, offset: usize, n: usize) -> Vec<Expr> {
    let dim = chart.dim();
    let mut coeffs = vec![Expr::zero(); dim];
    for j in 0..n {
        let xj = offset + j;
        let yj = offset + n + j;
        coeffs[xj] = Expr::coord(yj).scale(-0.5);
        coeffs[yj] = Expr::coord(xj).scale(0.5);
    }
    coeffs[offset + 2 * n] = Expr::constant(-1.0);
    coeffs
}

/// Built-in model spaces. `n` is the symplectic half-dimension parameter.
#[derive(Clone)]
pub enum ModelSpace {
    /// (R^{2n+1}, alpha0), coordinates (x.., y.., z).
    ContactEuclidean { n: usize },
    /// (R^{2n} x S^1, alpha0), z periodic.
    ContactTorus { n: usize },
    /// S^1 x R^{2n+1}, coordinates (theta, x.., y.., z), theta periodic.
    LcsEuclidean { n: usize },
    /// S^1 x R^{2n} x S^1: theta and z periodic.
    LcsTorus { n: usize },
    /// Twisted cotangent bundle over a base chart with closed 1-form beta.
    TwistedCotangent { base: Arc<Chart>, beta: KForm },
}

impl ModelSpace {
    /// Model by config name: "r3_contact", "s1xr3", "s1xr2xs1".
    pub fn from_name(name: &str, n: usize) -> Result<ModelSpace> {
        match name {
            "r3_contact" => Ok(ModelSpace::ContactEuclidean { n }),
            "r2xs1_contact" => Ok(ModelSpace::ContactTorus { n }),
            "s1xr3" => Ok(ModelSpace::LcsEuclidean { n }),
            "s1xr2xs1" => Ok(ModelSpace::LcsTorus { n }),
            other => Err(Error::Config(format!("unknown model space '{other}'"))),
        }
    }

    /// The twisted cotangent bundle of this model's underlying chart with
    /// beta = -dtheta (only for the lcs symplectization models).
    pub fn twisted_cotangent_over(&self) -> Result<ModelSpace> {
        match self {
            ModelSpace::LcsEuclidean { .. } | ModelSpace::LcsTorus { .. } => {
                let base = self.chart();
                let beta = KForm::d_coord(base.clone(), 0).scale(-1.0);
                Ok(ModelSpace::TwistedCotangent { base, beta })
            }
            _ => Err(Error::Config(
                "twisted cotangent construction expects a symplectization model".into(),
            )),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            ModelSpace::ContactEuclidean { n }
            | ModelSpace::ContactTorus { n }
            | ModelSpace::LcsEuclidean { n }
            | ModelSpace::LcsTorus { n } => *n,
            ModelSpace::TwistedCotangent { base, .. } => base.dim() / 2,
        }
    }

    pub fn chart(&self) -> Arc<Chart> {
        match self {
            ModelSpace::ContactEuclidean { n } | ModelSpace::ContactTorus { n } => {
                let mut labels: Vec<String> = (0..*n).map(|j| format!("x{j}")).collect();
                labels.extend((0..*n).map(|j| format!("y{j}")));
                labels.push("z".into());
                let mut periodic = vec![false; 2 * n + 1];
                if matches!(self, ModelSpace::ContactTorus { .. }) {
                    periodic[2 * n] = true;
                }
                let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
                Chart::new(&refs, &periodic)
            }
            ModelSpace::LcsEuclidean { n } | ModelSpace::LcsTorus { n } => {
                let mut labels: Vec<String> = vec!["theta".into()];
                labels.extend((0..*n).map(|j| format!("x{j}")));
                labels.extend((0..*n).map(|j| format!("y{j}")));
                labels.push("z".into());
                let mut periodic = vec![false; 2 * n + 2];
                periodic[0] = true;
                if matches!(self, ModelSpace::LcsTorus { .. }) {
                    periodic[2 * n + 1] = true;
                }
                let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
                Chart::new(&refs, &periodic)
            }
            ModelSpace::TwistedCotangent { base, .. } => {
                let mut labels: Vec<String> = base.labels().to_vec();
                labels.extend(base.labels().iter().map(|l| format!("p_{l}")));
                let mut periodic = base.periodic_mask().to_vec();
                periodic.extend(std::iter::repeat(false).take(base.dim()));
                let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
                Chart::new(&refs, &periodic)
            }
        }
    }

    /// The contact form alpha0 for the contact models (pulled back to the
    /// symplectization chart for the lcs models, where it is the Liouville
    /// form).
    pub fn contact_form(&self) -> KForm {
        let chart = self.chart();
        match self {
            ModelSpace::ContactEuclidean { n } | ModelSpace::ContactTorus { n } => {
                let coeffs = alpha0_coeffs(&chart, 0, *n);
                KForm::from_exprs(chart, 1, coeffs)
            }
            ModelSpace::LcsEuclidean { n } | ModelSpace::LcsTorus { n } => {
                let coeffs = alpha0_coeffs(&chart, 1, *n);
                KForm::from_exprs(chart, 1, coeffs)
            }
            ModelSpace::TwistedCotangent { .. } => panic!("no contact form on a cotangent model"),
        }
    }

    /// The canonical Liouville lcs triple: (-dtheta, d_{-dtheta} alpha0,
    /// alpha0) for the symplectizations, (pi* beta, d_{pi* beta} lambda,
    /// lambda) for twisted cotangent bundles.
    pub fn triple(&self) -> Result<LcsTriple> {
        let chart = self.chart();
        match self {
            ModelSpace::LcsEuclidean { .. } | ModelSpace::LcsTorus { .. } => {
                let eta = KForm::d_coord(chart.clone(), 0).scale(-1.0);
                let lambda = self.contact_form();
                LcsTriple::from_liouville(chart, eta, lambda)
            }
            ModelSpace::TwistedCotangent { base, beta } => {
                let nb = base.dim();
                // pi* beta: base coefficients, zero on fibre directions
                let mut eta_coeffs = match &beta.repr {
                    crate::field::FormRepr::Expr(es) => es.clone(),
                    _ => {
                        return Err(Error::Config(
                            "twisted cotangent beta must be expression-backed".into(),
                        ))
                    }
                };
                eta_coeffs.extend(std::iter::repeat(Expr::zero()).take(nb));
                let eta = KForm::from_exprs(chart.clone(), 1, eta_coeffs);
                // tautological lambda = sum p_i dq_i
                let mut lam = vec![Expr::zero(); 2 * nb];
                for i in 0..nb {
                    lam[i] = Expr::coord(nb + i);
                }
                let lambda = KForm::from_exprs(chart.clone(), 1, lam);
                LcsTriple::from_liouville(chart, eta, lambda)
            }
            _ => Err(Error::Config(
                "contact models carry a contact form, not an lcs triple".into(),
            )),
        }
    }

    pub fn is_torus_model(&self) -> bool {
        matches!(self, ModelSpace::LcsTorus { .. })
    }
}

// ---------------------------------------------------------------------------
// Untwisting map
// ---------------------------------------------------------------------------

/// The untwisting contactomorphism from the twisted 1-jet bundle of (B, beta)
/// to the standard one: (sigma_q, z) -> (sigma_q + z beta(q), z).
/// Points are [q.., p.., z].
pub struct Untwist {
    pub base: Arc<Chart>,
    pub beta: KForm,
}

impl Untwist {
    pub fn new(base: Arc<Chart>, beta: KForm) -> Self {
        assert_eq!(beta.degree, 1);
        Untwist { base, beta }
    }

    pub fn apply(&self, pt: &[f64]) -> Vec<f64> {
        let nb = self.base.dim();
        let (q, rest) = pt.split_at(nb);
        let (p, z) = rest.split_at(nb);
        let z = z[0];
        let b = self.beta.coeffs(q);
        let mut out = q.to_vec();
        out.extend(p.iter().zip(&b).map(|(&pi, &bi)| pi + z * bi));
        out.push(z);
        out
    }

    pub fn apply_inverse(&self, pt: &[f64]) -> Vec<f64> {
        let nb = self.base.dim();
        let (q, rest) = pt.split_at(nb);
        let (p, z) = rest.split_at(nb);
        let z = z[0];
        let b = self.beta.coeffs(q);
        let mut out = q.to_vec();
        out.extend(p.iter().zip(&b).map(|(&pi, &bi)| pi - z * bi));
        out.push(z);
        out
    }
}

// ---------------------------------------------------------------------------
// The tau identification
// ---------------------------------------------------------------------------

/// The strict lcs identification of the lcs product of S^1 x R^{2n+1} with
/// the twisted cotangent bundle T*_{-dtheta}(S^1 x R^{2n+1}).
///
/// Product points are stored as (theta, x.., y.., z, Theta, X.., Y.., Z) with
/// theta in [0,1) and Theta a real lift carrying the offset Theta - theta.
/// Target points are (theta, qx.., qy.., qz, p_theta, px.., py.., pz).
pub struct Tau {
    pub n: usize,
}

impl Tau {
    pub fn new(n: usize) -> Self {
        Tau { n }
    }

    pub fn dim(&self) -> usize {
        4 * self.n + 4
    }

    /// Chart of the product domain (theta periodic, Theta a real lift).
    pub fn domain_chart(&self) -> Arc<Chart> {
        let n = self.n;
        let mut labels = vec!["theta".to_string()];
        labels.extend((0..n).map(|j| format!("x{j}")));
        labels.extend((0..n).map(|j| format!("y{j}")));
        labels.push("z".into());
        labels.push("Theta".into());
        labels.extend((0..n).map(|j| format!("X{j}")));
        labels.extend((0..n).map(|j| format!("Y{j}")));
        labels.push("Z".into());
        let mut periodic = vec![false; 4 * n + 4];
        periodic[0] = true;
        let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
        Chart::new(&refs, &periodic)
    }

    pub fn target_model(&self) -> ModelSpace {
        ModelSpace::LcsEuclidean { n: self.n }
            .twisted_cotangent_over()
            .expect("symplectization model")
    }

    fn split<'a>(&self, pt: &'a [f64]) -> (f64, &'a [f64], &'a [f64], f64, f64, &'a [f64], &'a [f64], f64) {
        let n = self.n;
        (
            pt[0],
            &pt[1..1 + n],
            &pt[1 + n..1 + 2 * n],
            pt[1 + 2 * n],
            pt[2 + 2 * n],
            &pt[3 + 2 * n..3 + 3 * n],
            &pt[3 + 3 * n..3 + 4 * n],
            pt[3 + 4 * n],
        )
    }

    pub fn apply(&self, pt: &[f64]) -> Vec<f64> {
        let n = self.n;
        let (theta, x, y, z, big_theta, xx, yy, zz) = self.split(pt);
        let s = ((big_theta - theta) / 2.0).exp();
        let mut out = Vec::with_capacity(self.dim());
        out.push(theta.rem_euclid(1.0));
        for j in 0..n {
            out.push((x[j] + s * xx[j]) / 2.0);
        }
        for j in 0..n {
            out.push((y[j] + s * yy[j]) / 2.0);
        }
        out.push(zz);
        let cross: f64 = (0..n).map(|j| y[j] * xx[j] - x[j] * yy[j]).sum();
        out.push(zz - z + s * cross / 2.0);
        for j in 0..n {
            out.push(y[j] - s * yy[j]);
        }
        for j in 0..n {
            out.push(s * xx[j] - x[j]);
        }
        out.push(1.0 - s * s);
        out
    }

    /// Closed-form inverse; the last fibre coordinate must satisfy p_z < 1.
    pub fn apply_inverse(&self, pt: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let theta = pt[0];
        let qx = &pt[1..1 + n];
        let qy = &pt[1 + n..1 + 2 * n];
        let qz = pt[1 + 2 * n];
        let p_theta = pt[2 + 2 * n];
        let px = &pt[3 + 2 * n..3 + 3 * n];
        let py = &pt[3 + 3 * n..3 + 4 * n];
        let pz = pt[3 + 4 * n];
        if pz >= 1.0 {
            return Err(Error::OutsideTauImage { value: pz });
        }
        let s = (1.0 - pz).sqrt();
        let big_theta = theta + (1.0 - pz).ln();
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut xx = Vec::with_capacity(n);
        let mut yy = Vec::with_capacity(n);
        for j in 0..n {
            x.push(qx[j] - py[j] / 2.0);
            xx.push((qx[j] + py[j] / 2.0) / s);
            y.push(qy[j] + px[j] / 2.0);
            yy.push((qy[j] - px[j] / 2.0) / s);
        }
        let zz = qz;
        let cross: f64 = (0..n).map(|j| y[j] * xx[j] - x[j] * yy[j]).sum();
        let z = zz - p_theta + s * cross / 2.0;
        let mut out = Vec::with_capacity(self.dim());
        out.push(theta.rem_euclid(1.0));
        out.extend(x);
        out.extend(y);
        out.push(z);
        out.push(big_theta);
        out.extend(xx);
        out.extend(yy);
        out.push(zz);
        Ok(out)
    }

    /// Analytic Jacobian of `apply`.
    pub fn jacobian(&self, pt: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let d = self.dim();
        let (theta, x, y, z, big_theta, xx, yy, _zz) = self.split(pt);
        let _ = (theta, z);
        let s = ((big_theta - theta) / 2.0).exp();
        let i_theta = 0usize;
        let ix = |j: usize| 1 + j;
        let iy = |j: usize| 1 + n + j;
        let iz = 1 + 2 * n;
        let i_big = 2 + 2 * n;
        let ixx = |j: usize| 3 + 2 * n + j;
        let iyy = |j: usize| 3 + 3 * n + j;
        let izz = 3 + 4 * n;

        let mut m = DMatrix::zeros(d, d);
        // row 0: theta
        m[(0, i_theta)] = 1.0;
        // rows 1..: qx_j = (x_j + s X_j)/2
        for j in 0..n {
            let r = 1 + j;
            m[(r, ix(j))] = 0.5;
            m[(r, ixx(j))] = s / 2.0;
            m[(r, i_big)] = s * xx[j] / 4.0;
            m[(r, i_theta)] = -s * xx[j] / 4.0;
        }
        // qy_j
        for j in 0..n {
            let r = 1 + n + j;
            m[(r, iy(j))] = 0.5;
            m[(r, iyy(j))] = s / 2.0;
            m[(r, i_big)] = s * yy[j] / 4.0;
            m[(r, i_theta)] = -s * yy[j] / 4.0;
        }
        // qz = Z
        m[(1 + 2 * n, izz)] = 1.0;
        // p_theta = Z - z + s * cross/2,  cross = sum(y X - x Y)
        let r = 2 + 2 * n;
        let cross: f64 = (0..n).map(|j| y[j] * xx[j] - x[j] * yy[j]).sum();
        m[(r, izz)] = 1.0;
        m[(r, iz)] = -1.0;
        for j in 0..n {
            m[(r, iy(j))] = s * xx[j] / 2.0;
            m[(r, ixx(j))] = s * y[j] / 2.0;
            m[(r, ix(j))] = -s * yy[j] / 2.0;
            m[(r, iyy(j))] = -s * x[j] / 2.0;
        }
        m[(r, i_big)] = s * cross / 4.0;
        m[(r, i_theta)] = -s * cross / 4.0;
        // px_j = y_j - s Y_j
        for j in 0..n {
            let r = 3 + 2 * n + j;
            m[(r, iy(j))] = 1.0;
            m[(r, iyy(j))] = -s;
            m[(r, i_big)] = -s * yy[j] / 2.0;
            m[(r, i_theta)] = s * yy[j] / 2.0;
        }
        // py_j = s X_j - x_j
        for j in 0..n {
            let r = 3 + 3 * n + j;
            m[(r, ix(j))] = -1.0;
            m[(r, ixx(j))] = s;
            m[(r, i_big)] = s * xx[j] / 2.0;
            m[(r, i_theta)] = -s * xx[j] / 2.0;
        }
        // pz = 1 - s^2
        let r = 3 + 4 * n;
        m[(r, i_big)] = -s * s;
        m[(r, i_theta)] = s * s;
        m
    }

    pub fn as_chart_map(&self) -> ChartMap {
        let n = self.n;
        let src = self.domain_chart();
        let dst = self.target_model().chart();
        let tau = Tau { n };
        let tau2 = Tau { n };
        ChartMap::new(src, dst, move |p| tau.apply(p)).with_jacobian(move |p| tau2.jacobian(p))
    }

    /// The product Liouville form alpha0 [x] alpha0
    /// = -pr1* alpha0 + e^(Theta - theta) pr2* alpha0, as exact expressions.
    pub fn product_liouville(&self) -> KForm {
        let n = self.n;
        let chart = self.domain_chart();
        let dim = self.dim();
        let i_theta = 0usize;
        let i_big = 2 + 2 * n;
        let ef = Expr::exp_linear(&[(i_theta, -1.0), (i_big, 1.0)]);
        let mut coeffs = vec![Expr::zero(); dim];
        // -alpha0 on the first factor
        for j in 0..n {
            coeffs[1 + j] = Expr::coord(1 + n + j).scale(0.5); // +y/2 dx
            coeffs[1 + n + j] = Expr::coord(1 + j).scale(-0.5); // -x/2 dy
        }
        coeffs[1 + 2 * n] = Expr::constant(1.0); // +dz
        // + e^(Theta-theta) alpha0 on the second factor
        for j in 0..n {
            coeffs[3 + 2 * n + j] = Expr::coord(3 + 3 * n + j).scale(-0.5).mul(&ef);
            coeffs[3 + 3 * n + j] = Expr::coord(3 + 2 * n + j).scale(0.5).mul(&ef);
        }
        coeffs[3 + 4 * n] = ef.scale(-1.0);
        KForm::from_exprs(chart, 1, coeffs)
    }

    /// The product Lee form eta [x] eta = -dtheta (first factor).
    pub fn product_lee_form(&self) -> KForm {
        KForm::d_coord(self.domain_chart(), 0).scale(-1.0)
    }

    /// The exact action of tau:
    /// S_tau = z - Z + e^((Theta-theta)/2) (xY - yX)/2.
    pub fn action(&self) -> ScalarField {
        let n = self.n;
        let chart = self.domain_chart();
        let i_theta = 0usize;
        let i_big = 2 + 2 * n;
        let ef = Expr::exp_linear(&[(i_theta, -0.5), (i_big, 0.5)]);
        let mut e = Expr::coord(1 + 2 * n).sub(&Expr::coord(3 + 4 * n));
        for j in 0..n {
            let xj = Expr::coord(1 + j);
            let yj = Expr::coord(1 + n + j);
            let xxj = Expr::coord(3 + 2 * n + j);
            let yyj = Expr::coord(3 + 3 * n + j);
            e = e.add(&xj.mul(&yyj).sub(&yj.mul(&xxj)).scale(0.5).mul(&ef));
        }
        ScalarField::from_expr(chart, e)
    }
}
