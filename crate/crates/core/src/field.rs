//! Scalar fields, vector fields and k-forms on a chart.
//!
//! Forms store one coefficient per strictly increasing multi-index, in
//! lexicographic order. Coefficients come either from the exact expression
//! class ([`crate::expr::Expr`]) or from closures; derivative oracles are
//! exact in the first case and central finite differences in the second.

use crate::chart::Chart;
use crate::expr::Expr;
use std::sync::Arc;

pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Strictly increasing multi-indices of length `k` in `0..dim`, lexicographic.
pub fn multi_indices(dim: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > dim {
        return out;
    }
    if k == 0 {
        out.push(vec![]);
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        // advance
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + dim - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Position of a sorted multi-index in the lexicographic enumeration.
pub fn index_position(dim: usize, idx: &[usize]) -> usize {
    let k = idx.len();
    let mut pos = 0usize;
    let mut prev: isize = -1;
    for (slot, &v) in idx.iter().enumerate() {
        for cand in (prev + 1) as usize..v {
            pos += binomial(dim - cand - 1, k - slot - 1);
        }
        prev = v as isize;
    }
    pos
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut num = 1usize;
    let mut den = 1usize;
    for i in 0..k {
        num *= n - i;
        den *= i + 1;
    }
    num / den
}

/// Sort `idx`; returns `None` on a repeated index, else the permutation sign.
pub fn sort_with_sign(idx: &mut [usize]) -> Option<f64> {
    let mut sign = 1.0;
    // insertion sort, counting transpositions
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 && idx[j - 1] > idx[j] {
            idx.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    for w in idx.windows(2) {
        if w[0] == w[1] {
            return None;
        }
    }
    Some(sign)
}

// ---------------------------------------------------------------------------
// Scalar fields
// ---------------------------------------------------------------------------

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub enum ScalarRepr {
    Expr(Expr),
    Closure {
        eval: ScalarFn,
        grad: Option<GradFn>,
        h: f64,
    },
}

/// A scalar field on a chart with a gradient oracle.
#[derive(Clone)]
pub struct ScalarField {
    pub chart: Arc<Chart>,
    pub repr: ScalarRepr,
}

impl ScalarField {
    pub fn from_expr(chart: Arc<Chart>, e: Expr) -> Self {
        ScalarField {
            chart,
            repr: ScalarRepr::Expr(e),
        }
    }

    pub fn from_fn<F>(chart: Arc<Chart>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        ScalarField {
            chart,
            repr: ScalarRepr::Closure {
                eval: Arc::new(f),
                grad: None,
                h: DEFAULT_FD_STEP,
            },
        }
    }

    pub fn with_grad<G>(mut self, g: G) -> Self
    where
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        if let ScalarRepr::Closure { grad, .. } = &mut self.repr {
            *grad = Some(Arc::new(g));
        }
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        if let ScalarRepr::Closure { h, .. } = &mut self.repr {
            *h = step;
        }
        self
    }

    pub fn zero(chart: Arc<Chart>) -> Self {
        ScalarField::from_expr(chart, Expr::zero())
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        let p = self.chart.reduce(p);
        match &self.repr {
            ScalarRepr::Expr(e) => e.eval(&p),
            ScalarRepr::Closure { eval, .. } => eval(&p),
        }
    }

    pub fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let p = self.chart.reduce(p);
        match &self.repr {
            ScalarRepr::Expr(e) => (0..self.chart.dim()).map(|i| e.partial(i).eval(&p)).collect(),
            ScalarRepr::Closure { eval, grad, h } => {
                if let Some(g) = grad {
                    return g(&p);
                }
                central_gradient(|q| eval(q), &p, *h)
            }
        }
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self.repr, ScalarRepr::Expr(_))
            || matches!(&self.repr, ScalarRepr::Closure { grad: Some(_), .. })
    }

    /// Compactly supported bump amp * exp(1 - 1/(1 - s2)) with
    /// s2 = sum_i w_i (p_i - c_i)^2 / r^2, with analytic gradient. Weight 0
    /// makes the bump independent of that coordinate.
    pub fn bump(
        chart: Arc<Chart>,
        center: Vec<f64>,
        weights: Vec<f64>,
        radius: f64,
        amp: f64,
    ) -> Self {
        let dim = chart.dim();
        assert_eq!(center.len(), dim);
        assert_eq!(weights.len(), dim);
        let c = center.clone();
        let w = weights.clone();
        let r2 = radius * radius;
        let eval = move |p: &[f64]| -> f64 {
            let s2: f64 = (0..dim)
                .map(|i| w[i] * (p[i] - c[i]) * (p[i] - c[i]))
                .sum::<f64>()
                / r2;
            if s2 >= 1.0 {
                0.0
            } else {
                amp * (1.0 - 1.0 / (1.0 - s2)).exp()
            }
        };
        let c2 = center;
        let w2 = weights;
        let grad = move |p: &[f64]| -> Vec<f64> {
            let s2: f64 = (0..dim)
                .map(|i| w2[i] * (p[i] - c2[i]) * (p[i] - c2[i]))
                .sum::<f64>()
                / r2;
            if s2 >= 1.0 {
                return vec![0.0; dim];
            }
            let d = 1.0 - s2;
            let val = amp * (1.0 - 1.0 / d).exp();
            let dds2 = -val / (d * d);
            (0..dim)
                .map(|i| dds2 * 2.0 * w2[i] * (p[i] - c2[i]) / r2)
                .collect()
        };
        ScalarField::from_fn(chart, eval).with_grad(grad)
    }

    /// Pointwise product with product-rule gradients.
    pub fn product(a: &ScalarField, b: &ScalarField) -> ScalarField {
        let (a1, b1) = (a.clone(), b.clone());
        let (a2, b2) = (a.clone(), b.clone());
        ScalarField::from_fn(a.chart.clone(), move |p| a1.eval(p) * b1.eval(p)).with_grad(
            move |p| {
                let av = a2.eval(p);
                let bv = b2.eval(p);
                let ag = a2.gradient(p);
                let bg = b2.gradient(p);
                (0..p.len()).map(|i| ag[i] * bv + av * bg[i]).collect()
            },
        )
    }

    /// Pointwise sum.
    pub fn sum(a: &ScalarField, b: &ScalarField) -> ScalarField {
        let (a1, b1) = (a.clone(), b.clone());
        let (a2, b2) = (a.clone(), b.clone());
        ScalarField::from_fn(a.chart.clone(), move |p| a1.eval(p) + b1.eval(p)).with_grad(
            move |p| {
                let ag = a2.gradient(p);
                let bg = b2.gradient(p);
                (0..p.len()).map(|i| ag[i] + bg[i]).collect()
            },
        )
    }
}

pub fn central_gradient<F: Fn(&[f64]) -> f64>(f: F, p: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(p.len());
    let mut q = p.to_vec();
    for i in 0..p.len() {
        q[i] = p[i] + h;
        let fp = f(&q);
        q[i] = p[i] - h;
        let fm = f(&q);
        q[i] = p[i];
        out.push((fp - fm) / (2.0 * h));
    }
    out
}

// ---------------------------------------------------------------------------
// Vector fields
// ---------------------------------------------------------------------------

type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub enum VectorRepr {
    Expr(Vec<Expr>),
    Closure(VectorFn),
}

#[derive(Clone)]
pub struct VectorField {
    pub chart: Arc<Chart>,
    pub repr: VectorRepr,
}

impl VectorField {
    pub fn from_exprs(chart: Arc<Chart>, comps: Vec<Expr>) -> Self {
        assert_eq!(comps.len(), chart.dim());
        VectorField {
            chart,
            repr: VectorRepr::Expr(comps),
        }
    }

    pub fn constant(chart: Arc<Chart>, v: &[f64]) -> Self {
        let comps = v.iter().map(|&c| Expr::constant(c)).collect();
        VectorField::from_exprs(chart, comps)
    }

    pub fn from_fn<F>(chart: Arc<Chart>, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        VectorField {
            chart,
            repr: VectorRepr::Closure(Arc::new(f)),
        }
    }

    pub fn eval(&self, p: &[f64]) -> Vec<f64> {
        let p = self.chart.reduce(p);
        match &self.repr {
            VectorRepr::Expr(comps) => comps.iter().map(|e| e.eval(&p)).collect(),
            VectorRepr::Closure(f) => f(&p),
        }
    }
}

// ---------------------------------------------------------------------------
// K-forms
// ---------------------------------------------------------------------------

type CoeffFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub enum FormRepr {
    /// One exact expression per increasing multi-index.
    Expr(Vec<Expr>),
    /// Coefficient evaluator with finite-difference derivative oracle.
    Closure { eval: CoeffFn, h: f64 },
}

#[derive(Clone)]
pub struct KForm {
    pub chart: Arc<Chart>,
    pub degree: usize,
    pub repr: FormRepr,
}

impl KForm {
    pub fn from_exprs(chart: Arc<Chart>, degree: usize, coeffs: Vec<Expr>) -> Self {
        assert_eq!(coeffs.len(), binomial(chart.dim(), degree));
        KForm {
            chart,
            degree,
            repr: FormRepr::Expr(coeffs),
        }
    }

    pub fn from_fn<F>(chart: Arc<Chart>, degree: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        KForm {
            chart,
            degree,
            repr: FormRepr::Closure {
                eval: Arc::new(f),
                h: DEFAULT_FD_STEP,
            },
        }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        if let FormRepr::Closure { h, .. } = &mut self.repr {
            *h = step;
        }
        self
    }

    pub fn zero(chart: Arc<Chart>, degree: usize) -> Self {
        let n = binomial(chart.dim(), degree);
        KForm::from_exprs(chart, degree, vec![Expr::zero(); n])
    }

    /// Constant 1-form dx_i.
    pub fn d_coord(chart: Arc<Chart>, i: usize) -> Self {
        let mut coeffs = vec![Expr::zero(); chart.dim()];
        coeffs[i] = Expr::constant(1.0);
        KForm::from_exprs(chart, 1, coeffs)
    }

    /// Scalar field as a 0-form (expression-backed fields only).
    pub fn from_scalar(f: &ScalarField) -> Self {
        match &f.repr {
            ScalarRepr::Expr(e) => KForm::from_exprs(f.chart.clone(), 0, vec![e.clone()]),
            ScalarRepr::Closure { eval, h, .. } => {
                let eval = eval.clone();
                KForm {
                    chart: f.chart.clone(),
                    degree: 0,
                    repr: FormRepr::Closure {
                        eval: Arc::new(move |p| vec![eval(p)]),
                        h: *h,
                    },
                }
            }
        }
    }

    pub fn n_coeffs(&self) -> usize {
        binomial(self.chart.dim(), self.degree)
    }

    pub fn is_expr(&self) -> bool {
        matches!(self.repr, FormRepr::Expr(_))
    }

    /// Coefficients on increasing multi-indices at `p`.
    pub fn coeffs(&self, p: &[f64]) -> Vec<f64> {
        let p = self.chart.reduce(p);
        match &self.repr {
            FormRepr::Expr(es) => es.iter().map(|e| e.eval(&p)).collect(),
            FormRepr::Closure { eval, .. } => eval(&p),
        }
    }

    /// Jacobian of the coefficient vector: out[c][i] = d coeff_c / d x_i.
    pub fn coeff_jacobian(&self, p: &[f64]) -> Vec<Vec<f64>> {
        let p = self.chart.reduce(p);
        let dim = self.chart.dim();
        match &self.repr {
            FormRepr::Expr(es) => es
                .iter()
                .map(|e| (0..dim).map(|i| e.partial(i).eval(&p)).collect())
                .collect(),
            FormRepr::Closure { eval, h } => {
                let n = self.n_coeffs();
                let mut out = vec![vec![0.0; dim]; n];
                let mut q = p.clone();
                for i in 0..dim {
                    q[i] = p[i] + h;
                    let cp = eval(&q);
                    q[i] = p[i] - h;
                    let cm = eval(&q);
                    q[i] = p[i];
                    for c in 0..n {
                        out[c][i] = (cp[c] - cm[c]) / (2.0 * h);
                    }
                }
                out
            }
        }
    }

    /// Scale by a constant, staying in the same representation.
    pub fn scale(&self, c: f64) -> Self {
        match &self.repr {
            FormRepr::Expr(es) => KForm::from_exprs(
                self.chart.clone(),
                self.degree,
                es.iter().map(|e| e.scale(c)).collect(),
            ),
            FormRepr::Closure { eval, h } => {
                let eval = eval.clone();
                KForm {
                    chart: self.chart.clone(),
                    degree: self.degree,
                    repr: FormRepr::Closure {
                        eval: Arc::new(move |p| eval(p).into_iter().map(|v| c * v).collect()),
                        h: *h,
                    },
                }
            }
        }
    }

    pub fn add(&self, other: &KForm) -> Self {
        assert_eq!(self.degree, other.degree);
        match (&self.repr, &other.repr) {
            (FormRepr::Expr(a), FormRepr::Expr(b)) => KForm::from_exprs(
                self.chart.clone(),
                self.degree,
                a.iter().zip(b).map(|(x, y)| x.add(y)).collect(),
            ),
            _ => {
                let a = self.clone();
                let b = other.clone();
                let h = self.fd_step().min(other.fd_step());
                KForm {
                    chart: self.chart.clone(),
                    degree: self.degree,
                    repr: FormRepr::Closure {
                        eval: Arc::new(move |p| {
                            a.coeffs(p)
                                .into_iter()
                                .zip(b.coeffs(p))
                                .map(|(x, y)| x + y)
                                .collect()
                        }),
                        h,
                    },
                }
            }
        }
    }

    pub fn sub(&self, other: &KForm) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn fd_step(&self) -> f64 {
        match &self.repr {
            FormRepr::Expr(_) => DEFAULT_FD_STEP,
            FormRepr::Closure { h, .. } => *h,
        }
    }

    /// Sup of |coefficients| over the given sample points.
    pub fn sup_norm_on(&self, pts: &[Vec<f64>]) -> f64 {
        pts.iter()
            .flat_map(|p| self.coeffs(p))
            .fold(0.0f64, |m, c| m.max(c.abs()))
    }
}
