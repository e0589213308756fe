//! Lcs Hamiltonian vector fields and flows.
//!
//! Sign convention used throughout the crate: the Hamiltonian vector field of
//! H satisfies iota_X omega = +d_eta H, so H = -1 generates the Lee flow and
//! nonnegative Hamiltonians produce nonnegative time-shifts. The coupled flow
//! state is (x, g, S) with g' = eta(X) along the flow and
//! S' = e^{-g} (-H - lambda(X)) along the flow, so lifted contact isotopies
//! have action exactly zero.

use crate::chart::Chart;
use crate::contact::ContactIsotopy;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::lcs::{LcsTriple, ModelSpace};
use crate::newton::rk4_step;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Time-dependent scalar fields and support cutoffs
// ---------------------------------------------------------------------------

type TimeEval = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
type TimeGrad = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

/// A time-dependent scalar field H_t with a spatial gradient oracle.
#[derive(Clone)]
pub struct TimeScalar {
    pub chart: Arc<Chart>,
    eval: TimeEval,
    grad: Option<TimeGrad>,
    pub fd_step: f64,
}

impl TimeScalar {
    pub fn new<F>(chart: Arc<Chart>, f: F) -> Self
    where
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        TimeScalar {
            chart,
            eval: Arc::new(f),
            grad: None,
            fd_step: 1e-6,
        }
    }

    pub fn with_grad<G>(mut self, g: G) -> Self
    where
        G: Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.grad = Some(Arc::new(g));
        self
    }

    pub fn autonomous(f: ScalarField) -> Self {
        let chart = f.chart.clone();
        let f2 = f.clone();
        TimeScalar::new(chart, move |_t, p| f.eval(p)).with_grad(move |_t, p| f2.gradient(p))
    }

    pub fn constant(chart: Arc<Chart>, c: f64) -> Self {
        let dim = chart.dim();
        TimeScalar::new(chart, move |_t, _p| c).with_grad(move |_t, _p| vec![0.0; dim])
    }

    pub fn zero(chart: Arc<Chart>) -> Self {
        TimeScalar::constant(chart, 0.0)
    }

    pub fn eval(&self, t: f64, p: &[f64]) -> f64 {
        (self.eval)(t, &self.chart.reduce(p))
    }

    pub fn gradient(&self, t: f64, p: &[f64]) -> Vec<f64> {
        let p = self.chart.reduce(p);
        if let Some(g) = &self.grad {
            return g(t, &p);
        }
        let h = self.fd_step;
        let mut out = Vec::with_capacity(p.len());
        let mut q = p.clone();
        for i in 0..p.len() {
            q[i] = p[i] + h;
            let fp = (self.eval)(t, &q);
            q[i] = p[i] - h;
            let fm = (self.eval)(t, &q);
            q[i] = p[i];
            out.push((fp - fm) / (2.0 * h));
        }
        out
    }
}

/// The standard C-infinity profile: 1 for s <= 0, exp(1 - 1/(1-s^2)) on (0,1),
/// 0 for s >= 1.
pub fn bump_profile(s: f64) -> f64 {
    if s <= 0.0 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

pub fn bump_profile_deriv(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        let d = 1.0 - s * s;
        bump_profile(s) * (-2.0 * s / (d * d))
    }
}

/// Declared compact support: a box in the non-periodic coordinates with a
/// smooth transition band. The cutoff is 1 on the inner fraction of each
/// half-width and 0 outside the box.
#[derive(Clone, Debug)]
pub struct SupportBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Fraction of each half-width where the cutoff is identically 1.
    pub inner: f64,
}

impl SupportBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        SupportBox { lo, hi, inner: 0.7 }
    }

    fn coord_s(&self, chart: &Chart, i: usize, v: f64) -> f64 {
        if chart.is_periodic(i) {
            return 0.0;
        }
        let mid = 0.5 * (self.lo[i] + self.hi[i]);
        let half = 0.5 * (self.hi[i] - self.lo[i]);
        ((v - mid).abs() / half - self.inner) / (1.0 - self.inner)
    }

    pub fn cutoff(&self, chart: &Chart, p: &[f64]) -> f64 {
        (0..chart.dim())
            .map(|i| bump_profile(self.coord_s(chart, i, p[i])))
            .product()
    }

    pub fn cutoff_gradient(&self, chart: &Chart, p: &[f64]) -> Vec<f64> {
        let vals: Vec<f64> = (0..chart.dim())
            .map(|i| bump_profile(self.coord_s(chart, i, p[i])))
            .collect();
        let total: f64 = vals.iter().product();
        (0..chart.dim())
            .map(|i| {
                if chart.is_periodic(i) || vals[i] == 0.0 {
                    return 0.0;
                }
                let mid = 0.5 * (self.lo[i] + self.hi[i]);
                let half = 0.5 * (self.hi[i] - self.lo[i]);
                let s = self.coord_s(chart, i, p[i]);
                let dsdv = (p[i] - mid).signum() / (half * (1.0 - self.inner));
                (total / vals[i]) * bump_profile_deriv(s) * dsdv
            })
            .collect()
    }

    pub fn contains(&self, chart: &Chart, p: &[f64]) -> bool {
        (0..chart.dim()).all(|i| chart.is_periodic(i) || (self.lo[i] <= p[i] && p[i] <= self.hi[i]))
    }
}

// ---------------------------------------------------------------------------
// Hamiltonian isotopies
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct IsotopyConfig {
    /// Fixed RK4 step.
    pub step: f64,
    /// Coordinate bound beyond which the trajectory is declared to have left
    /// the chart.
    pub bounds: f64,
}

impl Default for IsotopyConfig {
    fn default() -> Self {
        IsotopyConfig {
            step: 1e-3,
            bounds: 1e3,
        }
    }
}

/// A time-dependent lcs Hamiltonian isotopy on a model space.
#[derive(Clone)]
pub struct HamiltonianIsotopy {
    pub model: ModelSpace,
    pub triple: Arc<LcsTriple>,
    pub h: TimeScalar,
    pub support: Option<SupportBox>,
    pub cfg: IsotopyConfig,
}

impl HamiltonianIsotopy {
    /// A new isotopy; when a support box is declared the Hamiltonian is
    /// multiplied by the smooth cutoff at that box.
    pub fn new(model: ModelSpace, h: TimeScalar, support: Option<SupportBox>) -> Result<Self> {
        let triple = Arc::new(model.triple()?);
        Self::from_triple(model, triple, h, support)
    }

    /// Isotopy with respect to an explicit structure representative (for
    /// gauge-transformed triples).
    pub fn from_triple(
        model: ModelSpace,
        triple: Arc<LcsTriple>,
        h: TimeScalar,
        support: Option<SupportBox>,
    ) -> Result<Self> {
        let h = match &support {
            Some(b) => {
                let b1 = b.clone();
                let b2 = b.clone();
                let chart1 = triple.chart.clone();
                let chart2 = triple.chart.clone();
                let inner1 = h.clone();
                let inner2 = h;
                TimeScalar::new(triple.chart.clone(), move |t, p| {
                    let chi = b1.cutoff(&chart1, p);
                    if chi == 0.0 {
                        0.0
                    } else {
                        chi * inner1.eval(t, p)
                    }
                })
                .with_grad(move |t, p| {
                    let chi = b2.cutoff(&chart2, p);
                    let dchi = b2.cutoff_gradient(&chart2, p);
                    let hv = inner2.eval(t, p);
                    let gh = inner2.gradient(t, p);
                    (0..p.len()).map(|i| chi * gh[i] + hv * dchi[i]).collect()
                })
            }
            None => h,
        };
        Ok(HamiltonianIsotopy {
            model,
            triple,
            h,
            support,
            cfg: IsotopyConfig::default(),
        })
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.cfg.step = step;
        self
    }

    /// The zero isotopy (identity flow).
    pub fn identity(model: ModelSpace) -> Result<Self> {
        let chart = model.chart();
        HamiltonianIsotopy::new(model, TimeScalar::zero(chart), None)
    }

    /// The Lee flow, i.e. the Hamiltonian isotopy of H = -1 in this crate's
    /// sign convention.
    pub fn lee_flow(model: ModelSpace) -> Result<Self> {
        let chart = model.chart();
        HamiltonianIsotopy::new(model, TimeScalar::constant(chart, -1.0), None)
    }

    /// The Hamiltonian vector field: solves omega(X, .) = dH - H eta.
    pub fn vector_field(&self, t: f64, p: &[f64]) -> Result<Vec<f64>> {
        let grad = self.h.gradient(t, p);
        let hv = self.h.eval(t, p);
        let eta = self.triple.eta.coeffs(p);
        let rhs: Vec<f64> = grad.iter().zip(&eta).map(|(&g, &e)| g - hv * e).collect();
        self.triple.solve_omega(p, &rhs)
    }

    /// The coupled (point, g, S) vector field at time t.
    fn state_field(&self, t: f64, state: &[f64]) -> Vec<f64> {
        let dim = self.triple.chart.dim();
        let p = &state[..dim];
        let g = state[dim];
        let x = match self.vector_field(t, p) {
            Ok(x) => x,
            Err(_) => vec![f64::NAN; dim],
        };
        let eta = self.triple.eta.coeffs(p);
        let gdot: f64 = eta.iter().zip(&x).map(|(a, b)| a * b).sum();
        let sdot = match &self.triple.lambda {
            Some(lam) => {
                let lv = lam.coeffs(p);
                let lx: f64 = lv.iter().zip(&x).map(|(a, b)| a * b).sum();
                (-g).exp() * (-self.h.eval(t, p) - lx)
            }
            None => 0.0,
        };
        let mut out = x;
        out.push(gdot);
        out.push(sdot);
        out
    }

    /// Integrate the coupled flow from `seed` over [0, t1]. Coordinates are
    /// kept on the cover (periodic directions are not reduced), which is what
    /// the canonical-lift time-shift bookkeeping needs.
    pub fn integrate(&self, seed: &[f64], t1: f64) -> Result<Trajectory> {
        self.integrate_with_step(seed, t1, self.cfg.step, false)
    }

    pub fn integrate_with_step(
        &self,
        seed: &[f64],
        t1: f64,
        step: f64,
        richardson: bool,
    ) -> Result<Trajectory> {
        let dim = self.triple.chart.dim();
        let mut state = seed.to_vec();
        state.push(0.0); // g
        state.push(0.0); // S
        let mut t = 0.0;
        let dir = if t1 >= 0.0 { 1.0 } else { -1.0 };
        let h = step * dir;
        let mut states = vec![FlowState::from_state(&state, t, dim, 0.0)];
        let f = |t: f64, y: &[f64]| self.state_field(t, y);
        while (t1 - t) * dir > 1e-14 {
            let hh = if ((t1 - t) * dir) < h.abs() { t1 - t } else { h };
            let next = rk4_step(&f, t, &state, hh);
            let err = if richardson {
                let half = rk4_step(&f, t, &state, hh / 2.0);
                let half2 = rk4_step(&f, t + hh / 2.0, &half, hh / 2.0);
                next.iter()
                    .zip(&half2)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max)
                    / 15.0
            } else {
                0.0
            };
            state = next;
            t += hh;
            if state[..dim]
                .iter()
                .enumerate()
                .any(|(i, v)| !self.triple.chart.is_periodic(i) && v.abs() > self.cfg.bounds)
                || state.iter().any(|v| !v.is_finite())
            {
                return Err(Error::ChartExit { t });
            }
            states.push(FlowState::from_state(&state, t, dim, err));
        }
        Ok(Trajectory { states, dim })
    }

    /// Time-t map with conformal factor and action: (phi_t(p), g_t(p), S_t(p)).
    pub fn map_at(&self, t: f64, p: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
        let traj = self.integrate(p, t)?;
        let last = traj.states.last().unwrap();
        Ok((last.point.clone(), last.g, last.s))
    }

    /// Inverse time-t map by reverse-time integration of the vector field.
    pub fn inverse_map_at(&self, t: f64, p: &[f64]) -> Result<Vec<f64>> {
        let dim = self.triple.chart.dim();
        let f = |s: f64, y: &[f64]| match self.vector_field(t - s, y) {
            Ok(x) => x.into_iter().map(|v| -v).collect(),
            Err(_) => vec![f64::NAN; dim],
        };
        let y = crate::newton::rk4_integrate(&f, 0.0, t, p, self.cfg.step);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::ChartExit { t });
        }
        Ok(y)
    }

    /// Inverse isotopy: Hamiltonian -e^{-g_t} (H_t o phi_t).
    pub fn invert(&self) -> Result<HamiltonianIsotopy> {
        let me = self.clone();
        let chart = self.triple.chart.clone();
        let h = TimeScalar::new(chart, move |t, p| match me.map_at(t, p) {
            Ok((q, g, _)) => -(-g).exp() * me.h.eval(t, &q),
            Err(_) => f64::NAN,
        });
        let mut out = HamiltonianIsotopy::from_triple(self.model.clone(), self.triple.clone(), h, None)?;
        out.cfg = self.cfg.clone();
        Ok(out)
    }

    /// Composition law: the flow t -> phi_t^(1) o phi_t^(2) has Hamiltonian
    /// H^(1) + e^{g^(1) o inv} H^(2) o inv with inv = (phi_t^(1))^{-1}.
    pub fn compose(&self, other: &HamiltonianIsotopy) -> Result<HamiltonianIsotopy> {
        if !self.triple.chart.same_shape(&other.triple.chart) {
            return Err(Error::ModelMismatch);
        }
        let a = self.clone();
        let b = other.clone();
        let chart = self.triple.chart.clone();
        let h = TimeScalar::new(chart, move |t, p| {
            let y = match a.inverse_map_at(t, p) {
                Ok(y) => y,
                Err(_) => return f64::NAN,
            };
            let (_, g, _) = match a.map_at(t, &y) {
                Ok(v) => v,
                Err(_) => return f64::NAN,
            };
            a.h.eval(t, p) + g.exp() * b.h.eval(t, &y)
        });
        let mut out = HamiltonianIsotopy::from_triple(self.model.clone(), self.triple.clone(), h, None)?;
        out.cfg = self.cfg.clone();
        Ok(out)
    }

    /// Conjugation: {psi^{-1} o phi_t o psi} has Hamiltonian e^{-f}(H_t o psi),
    /// with f the conformal factor of psi.
    pub fn conjugate(&self, psi: &LcsMap) -> Result<HamiltonianIsotopy> {
        let a = self.clone();
        let psi = psi.clone();
        let chart = self.triple.chart.clone();
        let h = TimeScalar::new(chart, move |t, p| {
            let q = psi.apply(p);
            let f = psi.conformal(p);
            (-f).exp() * a.h.eval(t, &q)
        });
        let mut out = HamiltonianIsotopy::from_triple(self.model.clone(), self.triple.clone(), h, None)?;
        out.cfg = self.cfg.clone();
        Ok(out)
    }

    /// True when the Hamiltonian is independent of the first (theta)
    /// coordinate on the given probe points.
    pub fn theta_independent(&self, probe: &[Vec<f64>]) -> bool {
        probe.iter().all(|p| {
            let mut q = p.clone();
            let h0 = self.h.eval(0.5, p);
            for shift in [0.25, 0.5, 0.75] {
                q[0] = p[0] + shift;
                if (self.h.eval(0.5, &q) - h0).abs() > 1e-11 {
                    return false;
                }
            }
            true
        })
    }
}

/// Lift of a contact isotopy to the locally conformal symplectization:
/// H~(theta, p) = H(p) on S^1 x Y.
pub fn lift_contact_isotopy(c: &ContactIsotopy) -> Result<HamiltonianIsotopy> {
    let lcs_model = match &c.model {
        ModelSpace::ContactEuclidean { n } => ModelSpace::LcsEuclidean { n: *n },
        ModelSpace::ContactTorus { n } => ModelSpace::LcsTorus { n: *n },
        _ => return Err(Error::ModelMismatch),
    };
    let ch = c.h.clone();
    let chart = lcs_model.chart();
    let h = TimeScalar::new(chart, move |t, p| ch.eval(t, &p[1..])).with_grad({
        let ch = c.h.clone();
        move |t, p| {
            let mut g = vec![0.0];
            g.extend(ch.gradient(t, &p[1..]));
            g
        }
    });
    let mut out = HamiltonianIsotopy::new(lcs_model, h, None)?;
    out.cfg = c.cfg.clone();
    Ok(out)
}

// ---------------------------------------------------------------------------
// Flow states and trajectories
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct FlowState {
    pub point: Vec<f64>,
    pub g: f64,
    pub s: f64,
    pub t: f64,
    pub step_error: f64,
}

impl FlowState {
    fn from_state(state: &[f64], t: f64, dim: usize, err: f64) -> Self {
        FlowState {
            point: state[..dim].to_vec(),
            g: state[dim],
            s: state[dim + 1],
            t,
            step_error: err,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<FlowState>,
    pub dim: usize,
}

impl Trajectory {
    pub fn endpoint(&self) -> &FlowState {
        self.states.last().unwrap()
    }
}

// ---------------------------------------------------------------------------
// Maps with conformal factor and action data
// ---------------------------------------------------------------------------

type MapEval = Arc<dyn Fn(&[f64]) -> (Vec<f64>, f64, f64) + Send + Sync>;

/// An lcs diffeomorphism given pointwise together with its conformal factor
/// and action, evaluated jointly: eval(p) = (phi(p), g(p), S(p)).
/// Compositions follow g_{a o b} = g_a o b + g_b and
/// S_{a o b} = S_b + e^{-g_b} S_a o b.
#[derive(Clone)]
pub struct LcsMap {
    pub chart: Arc<Chart>,
    eval: MapEval,
}

impl LcsMap {
    pub fn identity(chart: Arc<Chart>) -> Self {
        LcsMap {
            chart,
            eval: Arc::new(|p| (p.to_vec(), 0.0, 0.0)),
        }
    }

    pub fn from_eval<F>(chart: Arc<Chart>, f: F) -> Self
    where
        F: Fn(&[f64]) -> (Vec<f64>, f64, f64) + Send + Sync + 'static,
    {
        LcsMap {
            chart,
            eval: Arc::new(f),
        }
    }

    /// Time-one map of an isotopy (each call integrates the flow once).
    pub fn time_one(iso: &HamiltonianIsotopy) -> Self {
        let a = iso.clone();
        LcsMap {
            chart: iso.triple.chart.clone(),
            eval: Arc::new(move |p| {
                a.map_at(1.0, p)
                    .unwrap_or_else(|_| (vec![f64::NAN; p.len()], f64::NAN, f64::NAN))
            }),
        }
    }

    /// Inverse of the time-one map: one reverse integration for the point,
    /// one forward integration for the data. g_inv = -g o inv and
    /// S_inv = -e^{g o inv} S o inv.
    pub fn time_one_inverse(iso: &HamiltonianIsotopy) -> Self {
        let a = iso.clone();
        LcsMap {
            chart: iso.triple.chart.clone(),
            eval: Arc::new(move |p| {
                let bad = (vec![f64::NAN; p.len()], f64::NAN, f64::NAN);
                let Ok(y) = a.inverse_map_at(1.0, p) else {
                    return bad;
                };
                match a.map_at(1.0, &y) {
                    Ok((_, g, s)) => {
                        let gi = -g;
                        let si = -(g.exp()) * s;
                        (y, gi, si)
                    }
                    Err(_) => bad,
                }
            }),
        }
    }

    /// Composition self o other (apply `other` first).
    pub fn compose(&self, other: &LcsMap) -> LcsMap {
        let f = self.clone();
        let g = other.clone();
        LcsMap {
            chart: self.chart.clone(),
            eval: Arc::new(move |p| {
                let (y, gb, sb) = g.eval(p);
                if y.iter().any(|v| !v.is_finite()) {
                    return (y, f64::NAN, f64::NAN);
                }
                let (x, ga, sa) = f.eval(&y);
                (x, ga + gb, sb + (-gb).exp() * sa)
            }),
        }
    }

    /// Joint evaluation (phi(p), conformal factor, action).
    pub fn eval(&self, p: &[f64]) -> (Vec<f64>, f64, f64) {
        (self.eval)(p)
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        self.eval(p).0
    }

    pub fn conformal(&self, p: &[f64]) -> f64 {
        self.eval(p).1
    }

    pub fn action(&self, p: &[f64]) -> f64 {
        self.eval(p).2
    }
}

/// Closed-form Lee flow time-T map on the symplectization models:
/// (theta, x, y, z) -> (theta, x, y, z - T).
pub fn lee_flow_map(model: &ModelSpace, t: f64, p: &[f64]) -> Vec<f64> {
    match model {
        ModelSpace::LcsEuclidean { .. } | ModelSpace::LcsTorus { .. } => {
            let mut q = p.to_vec();
            let last = q.len() - 1;
            q[last] -= t;
            q
        }
        _ => panic!("lee_flow_map expects a symplectization model"),
    }
}
