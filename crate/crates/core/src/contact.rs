//! Contact Hamiltonian flows on the model contact manifolds.
//!
//! With the crate's sign convention the generating field of K satisfies
//! alpha(X) = -K. On (R^{2n+1}, alpha0) with alpha0 = sum (x dy - y dx)/2 - dz
//! this reads
//!   x_j' = K_z x_j / 2 + K_{y_j}
//!   y_j' = K_z y_j / 2 - K_{x_j}
//!   z'   = sum (x_j y_j' - y_j x_j') / 2 + K,
//! and on a 1-jet bundle J^1 R^m with form lambda - dz
//!   q' = -K_p,  p' = K_q + p K_z,  z' = -p . K_p + K,
//! so K = c generates the shift z -> z + ct in both pictures.

use crate::chart::Chart;
use crate::dynamics::{IsotopyConfig, TimeScalar};
use crate::error::{Error, Result};
use crate::lcs::ModelSpace;
use crate::newton::rk4_step;
use std::sync::Arc;

/// A contact isotopy on one of the contact model spaces, with compact
/// support handled exactly as in [`crate::dynamics::HamiltonianIsotopy`].
#[derive(Clone)]
pub struct ContactIsotopy {
    pub model: ModelSpace,
    pub h: TimeScalar,
    pub cfg: IsotopyConfig,
}

impl ContactIsotopy {
    pub fn new(model: ModelSpace, h: TimeScalar) -> Result<Self> {
        match model {
            ModelSpace::ContactEuclidean { .. } | ModelSpace::ContactTorus { .. } => {
                Ok(ContactIsotopy {
                    model,
                    h,
                    cfg: IsotopyConfig::default(),
                })
            }
            _ => Err(Error::ModelMismatch),
        }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.cfg.step = step;
        self
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }

    /// Contact vector field of the Hamiltonian at time t.
    pub fn vector_field(&self, t: f64, p: &[f64]) -> Vec<f64> {
        let n = self.n();
        let grad = self.h.gradient(t, p);
        let k = self.h.eval(t, p);
        let kz = grad[2 * n];
        let mut out = vec![0.0; 2 * n + 1];
        let mut cross = 0.0;
        for j in 0..n {
            let a = kz * p[j] / 2.0 + grad[n + j];
            let b = kz * p[n + j] / 2.0 - grad[j];
            out[j] = a;
            out[n + j] = b;
            cross += p[j] * b - p[n + j] * a;
        }
        out[2 * n] = cross / 2.0 + k;
        out
    }

    /// Conformal-rate h_t = dK/dz along the flow (L_X alpha = h alpha).
    fn conformal_rate(&self, t: f64, p: &[f64]) -> f64 {
        let n = self.n();
        self.h.gradient(t, p)[2 * n]
    }

    /// Integrate (point, g) from `seed` to time t1; periodic coordinates stay
    /// on the cover.
    pub fn integrate(&self, seed: &[f64], t1: f64) -> Result<(Vec<f64>, f64)> {
        let dim = seed.len();
        let mut state = seed.to_vec();
        state.push(0.0);
        let f = |t: f64, y: &[f64]| {
            let mut v = self.vector_field(t, &y[..dim]);
            v.push(self.conformal_rate(t, &y[..dim]));
            v
        };
        let mut t = 0.0;
        let dir = if t1 >= 0.0 { 1.0 } else { -1.0 };
        let h = self.cfg.step * dir;
        while (t1 - t) * dir > 1e-14 {
            let hh = if ((t1 - t) * dir) < h.abs() { t1 - t } else { h };
            state = rk4_step(&f, t, &state, hh);
            t += hh;
            if state.iter().any(|v| !v.is_finite()) {
                return Err(Error::ChartExit { t });
            }
        }
        let g = state.pop().unwrap();
        Ok((state, g))
    }

    /// Time-t map and conformal factor.
    pub fn map_at(&self, t: f64, p: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.integrate(p, t)
    }
}

// ---------------------------------------------------------------------------
// 1-jet bundle flows (used by the transition-function machinery)
// ---------------------------------------------------------------------------

/// A contact isotopy on J^1 of a base chart (coordinates [q.., p.., z]),
/// generated by a contact Hamiltonian K(t, q, p, z) with respect to
/// lambda - dz.
#[derive(Clone)]
pub struct JetIsotopy {
    pub base: Arc<Chart>,
    pub k: TimeScalar,
    pub cfg: IsotopyConfig,
}

impl JetIsotopy {
    pub fn new(base: Arc<Chart>, k: TimeScalar) -> Self {
        JetIsotopy {
            base,
            k,
            cfg: IsotopyConfig::default(),
        }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.cfg.step = step;
        self
    }

    /// The jet chart [q.., p.., z] with q inheriting the base periodicity.
    pub fn chart(&self) -> Arc<Chart> {
        let m = self.base.dim();
        let mut labels: Vec<String> = self.base.labels().to_vec();
        labels.extend(self.base.labels().iter().map(|l| format!("p_{l}")));
        labels.push("z".into());
        let mut periodic = self.base.periodic_mask().to_vec();
        periodic.extend(std::iter::repeat(false).take(m + 1));
        let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
        Chart::new(&refs, &periodic)
    }

    pub fn vector_field(&self, t: f64, pt: &[f64]) -> Vec<f64> {
        let m = self.base.dim();
        let grad = self.k.gradient(t, pt);
        let k = self.k.eval(t, pt);
        let kz = grad[2 * m];
        let mut out = vec![0.0; 2 * m + 1];
        let mut pkp = 0.0;
        for j in 0..m {
            out[j] = -grad[m + j];
            out[m + j] = grad[j] + pt[m + j] * kz;
            pkp += pt[m + j] * grad[m + j];
        }
        out[2 * m] = -pkp + k;
        out
    }

    /// Flow from t0 to t1 (the transition-function chain needs segment maps).
    pub fn flow_between(&self, t0: f64, t1: f64, pt: &[f64]) -> Result<Vec<f64>> {
        let f = |t: f64, y: &[f64]| self.vector_field(t, y);
        let y = crate::newton::rk4_integrate(&f, t0, t1, pt, self.cfg.step);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::ChartExit { t: t1 });
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;

    #[test]
    fn constant_contact_hamiltonian_shifts_z() {
        // K = c shifts z by +c t
        let model = ModelSpace::ContactEuclidean { n: 1 };
        let chart = model.chart();
        let iso = ContactIsotopy::new(model, TimeScalar::constant(chart, 0.4))
            .unwrap()
            .with_step(1e-2);
        let (q, g) = iso.map_at(1.0, &[0.3, -0.2, 0.1]).unwrap();
        assert!((q[0] - 0.3).abs() < 1e-10);
        assert!((q[1] + 0.2).abs() < 1e-10);
        assert!((q[2] - 0.5).abs() < 1e-10);
        assert!(g.abs() < 1e-12);
    }

    #[test]
    fn radial_hamiltonian_rotates_and_advances_z() {
        // K = h(u), u = pi(x^2+y^2): w -> e^{-2 pi i h'} w, z advances by h - u h'
        let model = ModelSpace::ContactEuclidean { n: 1 };
        let chart = model.chart();
        let cc = 0.3f64;
        let h = ScalarField::from_fn(chart, move |p| {
            let u = std::f64::consts::PI * (p[0] * p[0] + p[1] * p[1]);
            cc * u
        });
        let iso = ContactIsotopy::new(model, TimeScalar::autonomous(h))
            .unwrap()
            .with_step(1e-3);
        let p0 = [0.5, 0.0, 0.0];
        let (q, g) = iso.map_at(1.0, &p0).unwrap();
        let ang = -std::f64::consts::TAU * cc;
        assert!((q[0] - 0.5 * ang.cos()).abs() < 1e-8);
        assert!((q[1] - 0.5 * ang.sin()).abs() < 1e-8);
        // z advance: h - u h' = c u - u c = 0 for linear profile
        assert!(q[2].abs() < 1e-8);
        assert!(g.abs() < 1e-10);
    }

    #[test]
    fn jet_flow_constant_shifts_z() {
        let base = Chart::euclidean(1);
        let iso = JetIsotopy::new(base.clone(), TimeScalar::constant(
            JetIsotopy::new(base, TimeScalar::zero(Chart::euclidean(3))).chart(),
            0.25,
        ))
        .with_step(1e-2);
        let out = iso.flow_between(0.0, 1.0, &[0.7, -0.3, 0.1]).unwrap();
        assert!((out[0] - 0.7).abs() < 1e-10);
        assert!((out[1] + 0.3).abs() < 1e-10);
        assert!((out[2] - 0.35).abs() < 1e-10);
    }
}
