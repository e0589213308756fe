//! Pointwise exterior calculus: d, the Lichnerowicz-de Rham differential
//! d_eta = d - eta ^ ., wedge products, interior products and pullbacks.

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::{
    index_position, multi_indices, sort_with_sign, FormRepr, KForm, VectorField, VectorRepr,
};
use nalgebra::DMatrix;
use std::sync::Arc;

/// Exterior derivative. Uses the analytic oracle when the form carries one,
/// else central finite differences at the form's step.
pub fn exterior_derivative(sigma: &KForm) -> Result<KForm> {
    let dim = sigma.chart.dim();
    let k = sigma.degree;
    if k >= dim {
        return Err(Error::TopDegreeForm);
    }
    let in_idx = multi_indices(dim, k);
    let out_idx = multi_indices(dim, k + 1);

    match &sigma.repr {
        FormRepr::Expr(coeffs) => {
            let mut out = Vec::with_capacity(out_idx.len());
            for j in &out_idx {
                let mut e = Expr::zero();
                for (a, &ja) in j.iter().enumerate() {
                    let mut rest: Vec<usize> = j.clone();
                    rest.remove(a);
                    let pos = index_position(dim, &rest);
                    let sign = if a % 2 == 0 { 1.0 } else { -1.0 };
                    e = e.add(&coeffs[pos].partial(ja).scale(sign));
                }
                out.push(e);
            }
            Ok(KForm::from_exprs(sigma.chart.clone(), k + 1, out))
        }
        FormRepr::Closure { .. } => {
            let _ = in_idx;
            let sig = sigma.clone();
            let chart = sigma.chart.clone();
            let h = sigma.fd_step();
            let out_idx2 = out_idx;
            Ok(KForm::from_fn(chart, k + 1, move |p| {
                let jac = sig.coeff_jacobian(p); // [coeff][dir]
                let dim = sig.chart.dim();
                out_idx2
                    .iter()
                    .map(|j| {
                        let mut v = 0.0;
                        for (a, &ja) in j.iter().enumerate() {
                            let mut rest: Vec<usize> = j.clone();
                            rest.remove(a);
                            let pos = index_position(dim, &rest);
                            let sign = if a % 2 == 0 { 1.0 } else { -1.0 };
                            v += sign * jac[pos][ja];
                        }
                        v
                    })
                    .collect()
            })
            .with_step(h))
        }
    }
}

/// Wedge product with the standard sign conventions.
pub fn wedge(sigma: &KForm, rho: &KForm) -> Result<KForm> {
    let dim = sigma.chart.dim();
    let (k, l) = (sigma.degree, rho.degree);
    if k + l > dim {
        return Err(Error::TopDegreeForm);
    }
    let out_idx = multi_indices(dim, k + l);

    // Precompute the split table: for each output index J, the list of
    // (pos_sigma, pos_rho, sign) over k-subsets I of J.
    let mut table: Vec<Vec<(usize, usize, f64)>> = Vec::with_capacity(out_idx.len());
    for j in &out_idx {
        let mut entries = Vec::new();
        for sel in multi_indices(k + l, k) {
            let i1: Vec<usize> = sel.iter().map(|&s| j[s]).collect();
            let i2: Vec<usize> = (0..k + l).filter(|s| !sel.contains(s)).map(|s| j[s]).collect();
            // sign of the shuffle (i1, i2) relative to sorted J
            let mut perm: Vec<usize> = i1.iter().chain(i2.iter()).cloned().collect();
            let sign = sort_with_sign(&mut perm).expect("indices distinct");
            entries.push((index_position(dim, &i1), index_position(dim, &i2), sign));
        }
        table.push(entries);
    }

    match (&sigma.repr, &rho.repr) {
        (FormRepr::Expr(a), FormRepr::Expr(b)) => {
            let mut out = Vec::with_capacity(out_idx.len());
            for entries in &table {
                let mut e = Expr::zero();
                for &(p1, p2, sign) in entries {
                    e = e.add(&a[p1].mul(&b[p2]).scale(sign));
                }
                out.push(e);
            }
            Ok(KForm::from_exprs(sigma.chart.clone(), k + l, out))
        }
        _ => {
            let a = sigma.clone();
            let b = rho.clone();
            let h = sigma.fd_step().min(rho.fd_step());
            Ok(KForm::from_fn(sigma.chart.clone(), k + l, move |p| {
                let ca = a.coeffs(p);
                let cb = b.coeffs(p);
                table
                    .iter()
                    .map(|entries| {
                        entries
                            .iter()
                            .map(|&(p1, p2, sign)| sign * ca[p1] * cb[p2])
                            .sum()
                    })
                    .collect()
            })
            .with_step(h))
        }
    }
}

/// Lichnerowicz-de Rham differential d_eta sigma = d sigma - eta ^ sigma.
pub fn lichnerowicz_derivative(sigma: &KForm, eta: &KForm) -> Result<KForm> {
    if eta.degree != 1 {
        return Err(Error::DegreeMismatch {
            expected: 1,
            got: eta.degree,
        });
    }
    let d = exterior_derivative(sigma)?;
    let tw = wedge(eta, sigma)?;
    Ok(d.sub(&tw))
}

/// Interior product: degree k-1 contraction with a vector field.
pub fn interior_product(x: &VectorField, sigma: &KForm) -> Result<KForm> {
    let dim = sigma.chart.dim();
    let k = sigma.degree;
    if k == 0 {
        return Err(Error::InteriorOfScalar);
    }
    let out_idx = multi_indices(dim, k - 1);

    // (iota_X sigma)(e_I) = sum_j X^j sigma(e_j, e_I), with the sign from
    // sorting j into I.
    let mut table: Vec<Vec<(usize, usize, f64)>> = Vec::with_capacity(out_idx.len());
    for i in &out_idx {
        let mut entries = Vec::new();
        for j in 0..dim {
            if i.contains(&j) {
                continue;
            }
            let below = i.iter().filter(|&&v| v < j).count();
            let sign = if below % 2 == 0 { 1.0 } else { -1.0 };
            let mut full = i.clone();
            full.push(j);
            full.sort_unstable();
            entries.push((j, index_position(dim, &full), sign));
        }
        table.push(entries);
    }

    match (&x.repr, &sigma.repr) {
        (VectorRepr::Expr(xs), FormRepr::Expr(cs)) => {
            let mut out = Vec::with_capacity(out_idx.len());
            for entries in &table {
                let mut e = Expr::zero();
                for &(j, pos, sign) in entries {
                    e = e.add(&xs[j].mul(&cs[pos]).scale(sign));
                }
                out.push(e);
            }
            Ok(KForm::from_exprs(sigma.chart.clone(), k - 1, out))
        }
        _ => {
            let x = x.clone();
            let s = sigma.clone();
            let h = sigma.fd_step();
            Ok(KForm::from_fn(sigma.chart.clone(), k - 1, move |p| {
                let xv = x.eval(p);
                let cs = s.coeffs(p);
                table
                    .iter()
                    .map(|entries| entries.iter().map(|&(j, pos, sign)| sign * xv[j] * cs[pos]).sum())
                    .collect()
            })
            .with_step(h))
        }
    }
}

// ---------------------------------------------------------------------------
// Chart maps and pullbacks
// ---------------------------------------------------------------------------

type MapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type JacFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// A smooth map between charts with a Jacobian oracle.
#[derive(Clone)]
pub struct ChartMap {
    pub src: Arc<Chart>,
    pub dst: Arc<Chart>,
    map: MapFn,
    jacobian: Option<JacFn>,
    h: f64,
}

impl ChartMap {
    pub fn new<F>(src: Arc<Chart>, dst: Arc<Chart>, map: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        ChartMap {
            src,
            dst,
            map: Arc::new(map),
            jacobian: None,
            h: crate::field::DEFAULT_FD_STEP,
        }
    }

    pub fn with_jacobian<J>(mut self, j: J) -> Self
    where
        J: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(j));
        self
    }

    pub fn identity(chart: Arc<Chart>) -> Self {
        let dim = chart.dim();
        ChartMap::new(chart.clone(), chart, move |p| p.to_vec())
            .with_jacobian(move |_| DMatrix::identity(dim, dim))
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let p = self.src.reduce(p);
        self.dst.reduce(&(self.map)(&p))
    }

    /// Raw (unreduced) image, for maps into covers.
    pub fn apply_raw(&self, p: &[f64]) -> Vec<f64> {
        (self.map)(&self.src.reduce(p))
    }

    /// Jacobian D(map) at p: dst.dim x src.dim.
    pub fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let p = self.src.reduce(p);
        if let Some(j) = &self.jacobian {
            return j(&p);
        }
        let n = self.src.dim();
        let m = self.dst.dim();
        let mut out = DMatrix::zeros(m, n);
        let mut q = p.clone();
        for i in 0..n {
            q[i] = p[i] + self.h;
            let fp = (self.map)(&q);
            q[i] = p[i] - self.h;
            let fm = (self.map)(&q);
            q[i] = p[i];
            for r in 0..m {
                // unreduced difference is fine for smooth maps evaluated at
                // nearby arguments; reduction is deferred to callers
                out[(r, i)] = (fp[r] - fm[r]) / (2.0 * self.h);
            }
        }
        out
    }
}

/// Pullback of a k-form along a chart map, via Jacobian minor contraction.
pub fn pullback(map: &ChartMap, sigma: &KForm) -> Result<KForm> {
    if !Arc::ptr_eq(&map.dst, &sigma.chart) && !map.dst.same_shape(&sigma.chart) {
        return Err(Error::DimensionMismatch {
            expected: sigma.chart.dim(),
            got: map.dst.dim(),
        });
    }
    let k = sigma.degree;
    let src_dim = map.src.dim();
    let dst_dim = map.dst.dim();
    if k > src_dim {
        return Err(Error::TopDegreeForm);
    }
    let out_idx = multi_indices(src_dim, k);
    let in_idx = multi_indices(dst_dim, k);
    let m = map.clone();
    let s = sigma.clone();
    let h = sigma.fd_step();
    Ok(KForm::from_fn(map.src.clone(), k, move |p| {
        let jac = m.jacobian(p);
        let image = m.apply_raw(p);
        let coeffs = s.coeffs(&image);
        out_idx
            .iter()
            .map(|i_cols| {
                let mut v = 0.0;
                for (pos, j_rows) in in_idx.iter().enumerate() {
                    if coeffs[pos] == 0.0 {
                        continue;
                    }
                    let minor = DMatrix::from_fn(k, k, |r, c| jac[(j_rows[r], i_cols[c])]);
                    let det = if k == 0 { 1.0 } else { minor.determinant() };
                    v += coeffs[pos] * det;
                }
                v
            })
            .collect()
    })
    .with_step(h))
}
