//! A small closed class of smooth expressions with exact derivatives.
//!
//! Terms are c * prod x_i^{p_i} * prod cos(2 pi k_j x_j + phi_j) * exp(sum a_i x_i).
//! The class is closed under sums, products and partial differentiation, which
//! is what the analytic derivative oracles of the model forms need. Periodic
//! coordinates should only carry trig factors with integer frequency.

use rand::Rng;

const TAU: f64 = std::f64::consts::TAU;

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coef: f64,
    /// (coordinate, power), sorted by coordinate, powers >= 1.
    pub powers: Vec<(usize, u32)>,
    /// cos(2 pi freq x + phase) factors.
    pub trigs: Vec<(usize, i32, f64)>,
    /// exp(sum a_i x_i), sparse.
    pub lin: Vec<(usize, f64)>,
}

impl Term {
    fn eval(&self, p: &[f64]) -> f64 {
        let mut v = self.coef;
        for &(i, pw) in &self.powers {
            v *= p[i].powi(pw as i32);
        }
        for &(i, k, ph) in &self.trigs {
            v *= (TAU * k as f64 * p[i] + ph).cos();
        }
        if !self.lin.is_empty() {
            let e: f64 = self.lin.iter().map(|&(i, a)| a * p[i]).sum();
            v *= e.exp();
        }
        v
    }
}

/// Sum of [`Term`]s.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Expr {
    pub terms: Vec<Term>,
}

impl Expr {
    pub fn zero() -> Self {
        Expr { terms: vec![] }
    }

    pub fn constant(c: f64) -> Self {
        if c == 0.0 {
            return Expr::zero();
        }
        Expr {
            terms: vec![Term {
                coef: c,
                powers: vec![],
                trigs: vec![],
                lin: vec![],
            }],
        }
    }

    /// The coordinate function x_i.
    pub fn coord(i: usize) -> Self {
        Expr {
            terms: vec![Term {
                coef: 1.0,
                powers: vec![(i, 1)],
                trigs: vec![],
                lin: vec![],
            }],
        }
    }

    /// cos(2 pi k x_i + phase).
    pub fn cos(i: usize, k: i32, phase: f64) -> Self {
        Expr {
            terms: vec![Term {
                coef: 1.0,
                powers: vec![],
                trigs: vec![(i, k, phase)],
                lin: vec![],
            }],
        }
    }

    /// sin(2 pi k x_i) = cos(2 pi k x_i - pi/2).
    pub fn sin(i: usize, k: i32) -> Self {
        Expr::cos(i, k, -std::f64::consts::FRAC_PI_2)
    }

    /// exp(sum a_i x_i).
    pub fn exp_linear(lin: &[(usize, f64)]) -> Self {
        Expr {
            terms: vec![Term {
                coef: 1.0,
                powers: vec![],
                trigs: vec![],
                lin: lin.to_vec(),
            }],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(p)).sum()
    }

    pub fn scale(&self, c: f64) -> Self {
        if c == 0.0 {
            return Expr::zero();
        }
        Expr {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coef: c * t.coef,
                    ..t.clone()
                })
                .collect(),
        }
    }

    pub fn add(&self, other: &Expr) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Expr { terms }
    }

    pub fn sub(&self, other: &Expr) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Expr) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let mut powers = a.powers.clone();
                for &(i, pw) in &b.powers {
                    match powers.iter_mut().find(|(j, _)| *j == i) {
                        Some(entry) => entry.1 += pw,
                        None => powers.push((i, pw)),
                    }
                }
                powers.sort_by_key(|&(i, _)| i);
                let mut trigs = a.trigs.clone();
                trigs.extend(b.trigs.iter().cloned());
                let mut lin = a.lin.clone();
                for &(i, c) in &b.lin {
                    match lin.iter_mut().find(|(j, _)| *j == i) {
                        Some(entry) => entry.1 += c,
                        None => lin.push((i, c)),
                    }
                }
                lin.retain(|&(_, c)| c != 0.0);
                lin.sort_by_key(|&(i, _)| i);
                terms.push(Term {
                    coef: a.coef * b.coef,
                    powers,
                    trigs,
                    lin,
                });
            }
        }
        Expr { terms }
    }

    /// Exact partial derivative with respect to x_i.
    pub fn partial(&self, i: usize) -> Self {
        let mut out = Vec::new();
        for t in &self.terms {
            // power factor
            if let Some(pos) = t.powers.iter().position(|&(j, _)| j == i) {
                let (_, pw) = t.powers[pos];
                let mut powers = t.powers.clone();
                if pw == 1 {
                    powers.remove(pos);
                } else {
                    powers[pos].1 -= 1;
                }
                out.push(Term {
                    coef: t.coef * pw as f64,
                    powers,
                    trigs: t.trigs.clone(),
                    lin: t.lin.clone(),
                });
            }
            // trig factors: d/dx cos(2 pi k x + ph) = 2 pi k cos(2 pi k x + ph + pi/2)
            for (pos, &(j, k, ph)) in t.trigs.iter().enumerate() {
                if j == i {
                    let mut trigs = t.trigs.clone();
                    trigs[pos] = (j, k, ph + std::f64::consts::FRAC_PI_2);
                    out.push(Term {
                        coef: t.coef * TAU * k as f64,
                        powers: t.powers.clone(),
                        trigs,
                        lin: t.lin.clone(),
                    });
                }
            }
            // exp factor
            if let Some(&(_, a)) = t.lin.iter().find(|&&(j, _)| j == i) {
                out.push(Term {
                    coef: t.coef * a,
                    ..t.clone()
                });
            }
        }
        Expr { terms: out }
    }

    /// Random smooth expression for tests: trig factors on periodic
    /// coordinates, low-order polynomials on the others.
    pub fn random<R: Rng>(rng: &mut R, periodic: &[bool]) -> Self {
        let dim = periodic.len();
        let nterms = rng.gen_range(1..=3);
        let mut terms = Vec::new();
        for _ in 0..nterms {
            let coef: f64 = rng.gen_range(-1.0..1.0);
            let mut powers = Vec::new();
            let mut trigs = Vec::new();
            for i in 0..dim {
                if !rng.gen_bool(0.6) {
                    continue;
                }
                if periodic[i] {
                    let k = rng.gen_range(1..=2);
                    let ph: f64 = rng.gen_range(0.0..TAU);
                    trigs.push((i, k, ph));
                } else if rng.gen_bool(0.7) {
                    powers.push((i, rng.gen_range(1..=2)));
                } else {
                    let k = rng.gen_range(1..=2);
                    let ph: f64 = rng.gen_range(0.0..TAU);
                    trigs.push((i, k, ph));
                }
            }
            terms.push(Term {
                coef,
                powers,
                trigs,
                lin: vec![],
            });
        }
        Expr { terms }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_of_monomial() {
        // f = x^2 y on coords (x, y): df = (2xy, x^2)
        let f = Expr::coord(0).mul(&Expr::coord(0)).mul(&Expr::coord(1));
        let p = [1.0, 2.0];
        assert!((f.partial(0).eval(&p) - 4.0).abs() < 1e-14);
        assert!((f.partial(1).eval(&p) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn partial_of_trig_and_exp() {
        let f = Expr::cos(0, 1, 0.0).mul(&Expr::exp_linear(&[(1, 2.0)]));
        let p = [0.3, 0.1];
        let h = 1e-6;
        let fd = (f.eval(&[0.3 + h, 0.1]) - f.eval(&[0.3 - h, 0.1])) / (2.0 * h);
        assert!((f.partial(0).eval(&p) - fd).abs() < 1e-7);
        let fd = (f.eval(&[0.3, 0.1 + h]) - f.eval(&[0.3, 0.1 - h])) / (2.0 * h);
        assert!((f.partial(1).eval(&p) - fd).abs() < 1e-6);
    }

    #[test]
    fn second_partials_commute() {
        let mut rng = rand::thread_rng();
        let f = Expr::random(&mut rng, &[true, false, false]);
        let p = [0.2, 0.7, -0.4];
        let fxy = f.partial(0).partial(1).eval(&p);
        let fyx = f.partial(1).partial(0).eval(&p);
        assert!((fxy - fyx).abs() < 1e-10);
    }
}
