//! Flow-level checks: closed-form Lee flows, lifted contact isotopies, the
//! isotopy algebra, and the conformal-factor / exactness identities.

use lcskit::calculus::{lichnerowicz_derivative, pullback, ChartMap};
use lcskit::contact::ContactIsotopy;
use lcskit::dynamics::{
    lift_contact_isotopy, HamiltonianIsotopy, LcsMap, SupportBox, TimeScalar,
};
use lcskit::field::{KForm, ScalarField};
use lcskit::lcs::ModelSpace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn xy_bump(model: &ModelSpace, amp: f64, cx: f64, cy: f64, r: f64) -> ScalarField {
    // z-independent contact bump on (x, y) with maximum amp at (cx, cy)
    let chart = model.chart();
    ScalarField::from_fn(chart, move |p| {
        let dx = (p[0] - cx) / r;
        let dy = (p[1] - cy) / r;
        let s2 = dx * dx + dy * dy;
        if s2 >= 1.0 {
            0.0
        } else {
            amp * (1.0 - 1.0 / (1.0 - s2)).exp()
        }
    })
}

fn lifted_bump(amp: f64) -> HamiltonianIsotopy {
    let cmodel = ModelSpace::ContactEuclidean { n: 1 };
    let c = ContactIsotopy::new(
        cmodel.clone(),
        TimeScalar::autonomous(xy_bump(&cmodel, amp, 0.0, 0.0, 0.8)),
    )
    .unwrap();
    lift_contact_isotopy(&c).unwrap().with_step(5e-3)
}

#[test]
fn zero_hamiltonian_is_identity_flow() {
    let iso = HamiltonianIsotopy::identity(ModelSpace::LcsEuclidean { n: 1 }).unwrap();
    let traj = iso
        .integrate_with_step(&[0.2, 0.5, -0.7, 1.1], 1.0, 1e-2, false)
        .unwrap();
    let end = traj.endpoint();
    for (a, b) in end.point.iter().zip([0.2, 0.5, -0.7, 1.1]) {
        assert!((a - b).abs() < 1e-13);
    }
    assert!(end.g.abs() < 1e-13 && end.s.abs() < 1e-13);
}

#[test]
fn minus_one_hamiltonian_is_lee_flow() {
    // In this crate's convention H = -1 generates the Lee field; on
    // S^1 x R^3 that is (0, 0, 0, -1).
    let iso = HamiltonianIsotopy::lee_flow(ModelSpace::LcsEuclidean { n: 1 }).unwrap();
    let triple = iso.triple.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let p: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = iso.vector_field(0.3, &p).unwrap();
        let r = triple.lee_vector_field(&p).unwrap();
        for (a, b) in x.iter().zip(&r) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn lee_flow_on_twisted_cotangent_translates_fibres() {
    // phi_t(sigma_q) = sigma_q + t beta(q), beta = -dtheta
    let tc = ModelSpace::LcsEuclidean { n: 1 }
        .twisted_cotangent_over()
        .unwrap();
    let iso = HamiltonianIsotopy::lee_flow(tc).unwrap().with_step(1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let p: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t = rng.gen_range(0.2..1.0);
        let traj = iso.integrate(&p, t).unwrap();
        let end = &traj.endpoint().point;
        for i in 0..8 {
            let expect = if i == 4 { p[i] - t } else { p[i] };
            assert!(
                (end[i] - expect).abs() < 1e-6,
                "lee flow endpoint {end:?} vs start {p:?}"
            );
        }
    }
}

#[test]
fn lifted_bump_moves_critical_point_by_its_value() {
    // At a critical point of the z-independent bump the field is -H R_omega,
    // so the time-1 map advances z by +A with g = 0 and S = 0.
    let amp = 0.35;
    let iso = lifted_bump(amp);
    let seed = [0.4, 0.0, 0.0, 0.25];
    let traj = iso.integrate(&seed, 1.0).unwrap();
    let end = traj.endpoint();
    assert!((end.point[3] - (seed[3] + amp)).abs() < 1e-9, "{end:?}");
    assert!((end.point[0] - seed[0]).abs() < 1e-9);
    assert!((end.point[1] - seed[1]).abs() < 1e-9);
    assert!((end.point[2] - seed[2]).abs() < 1e-9);
    assert!(end.g.abs() < 1e-9);
    assert!(end.s.abs() < 1e-9);
}

#[test]
fn lifted_field_splits_into_contact_part_and_theta_drift() {
    // X~ = (-h_t, X_c) with h_t the contact conformal rate; checked against
    // the contact flow equations at random points.
    let cmodel = ModelSpace::ContactEuclidean { n: 1 };
    let chart = cmodel.chart();
    // z-dependent Hamiltonian so that h_t is nonzero
    let h = ScalarField::from_fn(chart, |p| {
        0.3 * (p[0] * p[0] + 0.5 * p[1] + 0.2 * p[2] * p[2])
    });
    let c = ContactIsotopy::new(cmodel, TimeScalar::autonomous(h)).unwrap();
    let lifted = lift_contact_isotopy(&c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let p: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let x_lcs = lifted.vector_field(0.0, &p).unwrap();
        let x_c = c.vector_field(0.0, &p[1..]);
        for j in 0..3 {
            assert!(
                (x_lcs[1 + j] - x_c[j]).abs() < 1e-7,
                "contact part mismatch {x_lcs:?} vs {x_c:?}"
            );
        }
        // theta component = -h with L_X alpha = h alpha, h = dK/dz here
        let mut grad = c.h.gradient(0.0, &p[1..]);
        let h_rate = grad.pop().unwrap();
        assert!((x_lcs[0] + h_rate).abs() < 1e-7);
    }
}

#[test]
fn lifted_isotopy_has_zero_action_and_contact_conformal_factor() {
    let cmodel = ModelSpace::ContactEuclidean { n: 1 };
    let chart = cmodel.chart();
    let h = ScalarField::from_fn(chart, |p| {
        let s2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        if s2 >= 1.0 {
            0.0
        } else {
            0.4 * (1.0 - 1.0 / (1.0 - s2)).exp() * (0.5 + 0.3 * p[2])
        }
    });
    let c = ContactIsotopy::new(cmodel, TimeScalar::autonomous(h))
        .unwrap()
        .with_step(5e-3);
    let lifted = lift_contact_isotopy(&c).unwrap().with_step(5e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let p: Vec<f64> = vec![
            rng.gen_range(0.0..1.0),
            rng.gen_range(-0.7..0.7),
            rng.gen_range(-0.7..0.7),
            rng.gen_range(-0.7..0.7),
        ];
        let traj = lifted.integrate(&p, 1.0).unwrap();
        let end = traj.endpoint();
        assert!(end.s.abs() < 1e-5, "lifted action {}", end.s);
        let (qc, gc) = c.map_at(1.0, &p[1..]).unwrap();
        assert!((end.g - gc).abs() < 1e-6);
        // flow is (theta - g(p), phi_c(p))
        for j in 0..3 {
            assert!((end.point[1 + j] - qc[j]).abs() < 1e-6);
        }
        let dtheta = end.point[0] - p[0];
        assert!((dtheta + gc).abs() < 1e-6);
    }
}

#[test]
fn conformal_factor_matches_flow_pullback() {
    // phi_t* omega = e^{g_t} omega along trajectories
    let iso = lifted_bump(0.3);
    let triple = iso.triple.clone();
    let chart = triple.chart.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..6 {
        let p: Vec<f64> = vec![
            rng.gen_range(0.0..1.0),
            rng.gen_range(-0.6..0.6),
            rng.gen_range(-0.6..0.6),
            rng.gen_range(-0.6..0.6),
        ];
        let t = rng.gen_range(0.3..1.0);
        let iso2 = iso.clone();
        let flow = ChartMap::new(chart.clone(), chart.clone(), move |q| {
            iso2.map_at(t, q).map(|(x, _, _)| x).unwrap()
        });
        let pulled = pullback(&flow, &triple.omega).unwrap();
        let (_, g, _) = iso.map_at(t, &p).unwrap();
        let a = pulled.coeffs(&p);
        let b = triple.omega.coeffs(&p);
        for (x, y) in a.iter().zip(&b) {
            assert!(
                (x - g.exp() * y).abs() < 1e-4,
                "pullback {x} vs e^g omega {}",
                g.exp() * y
            );
        }
    }
}

#[test]
fn hamiltonian_fields_are_divergence_free() {
    // d_eta(iota_X omega) = 0
    let iso = lifted_bump(0.3);
    let triple = iso.triple.clone();
    let chart = triple.chart.clone();
    let t = 0.4;
    let iso2 = iso.clone();
    let triple2 = triple.clone();
    let ix_omega = KForm::from_fn(chart, 1, move |p| {
        let x = iso2.vector_field(t, p).unwrap();
        let m = triple2.omega_matrix(p);
        (0..4)
            .map(|j| (0..4).map(|i| x[i] * m[(i, j)]).sum())
            .collect()
    });
    let d = lichnerowicz_derivative(&ix_omega, &triple.eta).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..30 {
        let p: Vec<f64> = vec![
            rng.gen_range(0.0..1.0),
            rng.gen_range(-0.6..0.6),
            rng.gen_range(-0.6..0.6),
            rng.gen_range(-0.6..0.6),
        ];
        for c in d.coeffs(&p) {
            assert!(c.abs() < 1e-4, "divergence residual {c}");
        }
    }
}

#[test]
fn action_field_satisfies_exactness_identity() {
    // lambda - e^{-g_t} phi_t* lambda = d_eta S_t
    let iso = lifted_bump(0.25);
    let triple = iso.triple.clone();
    let chart = triple.chart.clone();
    let t = 0.8;
    let iso_map = iso.clone();
    let flow = ChartMap::new(chart.clone(), chart.clone(), move |q| {
        iso_map.map_at(t, q).map(|(x, _, _)| x).unwrap()
    });
    let pulled = pullback(&flow, triple.lambda.as_ref().unwrap()).unwrap();
    let iso_s = iso.clone();
    let s_field = ScalarField::from_fn(chart.clone(), move |p| {
        iso_s.map_at(t, p).map(|(_, _, s)| s).unwrap()
    })
    .with_step(1e-4);
    let d_eta_s = lichnerowicz_derivative(&KForm::from_scalar(&s_field), &triple.eta).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..5 {
        let p: Vec<f64> = vec![
            rng.gen_range(0.0..1.0),
            rng.gen_range(-0.4..0.4),
            rng.gen_range(-0.4..0.4),
            rng.gen_range(-0.4..0.4),
        ];
        let (_, g, _) = iso.map_at(t, &p).unwrap();
        let lam = triple.lambda.as_ref().unwrap().coeffs(&p);
        let pl = pulled.coeffs(&p);
        let ds = d_eta_s.coeffs(&p);
        for i in 0..4 {
            let lhs = lam[i] - (-g).exp() * pl[i];
            assert!(
                (lhs - ds[i]).abs() < 1e-3,
                "exactness residual {} vs {}",
                lhs,
                ds[i]
            );
        }
    }
}

#[test]
fn isotopy_algebra_group_identities() {
    let a = lifted_bump(0.3);
    let model = ModelSpace::LcsEuclidean { n: 1 };
    let chart = model.chart();
    // a theta-dependent second isotopy
    let hb = ScalarField::from_fn(chart.clone(), |p| {
        let s2 = p[1] * p[1] + p[2] * p[2] + (p[3] - 0.2) * (p[3] - 0.2);
        if s2 >= 0.81 {
            0.0
        } else {
            0.2 * (1.0 - 1.0 / (1.0 - s2 / 0.81)).exp()
                * (1.0 + 0.4 * (std::f64::consts::TAU * p[0]).cos())
        }
    });
    let b = HamiltonianIsotopy::new(model.clone(), TimeScalar::autonomous(hb), None)
        .unwrap()
        .with_step(2e-2);
    let a = a.with_step(2e-2);

    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let seeds: Vec<Vec<f64>> = (0..6)
        .map(|_| {
            vec![
                rng.gen_range(0.0..1.0),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            ]
        })
        .collect();

    // compose with zero isotopy leaves the flow unchanged
    let zero = HamiltonianIsotopy::identity(model.clone()).unwrap().with_step(2e-2);
    let a_zero = a.compose(&zero).unwrap();
    for s in &seeds {
        let (x, _, _) = a.map_at(1.0, s).unwrap();
        let (y, _, _) = a_zero.map_at(1.0, s).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-5);
        }
    }

    // composed flow equals pointwise composition
    let ab = a.compose(&b).unwrap();
    for s in &seeds {
        let (bp, _, _) = b.map_at(1.0, s).unwrap();
        let (expect, _, _) = a.map_at(1.0, &bp).unwrap();
        let (got, _, _) = ab.map_at(1.0, s).unwrap();
        for (u, v) in got.iter().zip(&expect) {
            assert!((u - v).abs() < 1e-4, "compose mismatch {got:?} vs {expect:?}");
        }
    }

    // inverse: a o a^{ -1 } = id and double inversion restores H
    let a_inv = a.invert().unwrap();
    let a_id = a.compose(&a_inv).unwrap();
    for s in &seeds {
        let (got, _, _) = a_id.map_at(1.0, s).unwrap();
        for (u, v) in got.iter().zip(s) {
            assert!((u - v).abs() < 1e-4, "a o a^-1 not id: {got:?} vs {s:?}");
        }
        let h0 = a_id.h.eval(0.5, s);
        assert!(h0.abs() < 1e-4, "composed Hamiltonian not ~0: {h0}");
    }
    let a_back = a_inv.invert().unwrap();
    for s in &seeds {
        let h1 = a.h.eval(0.37, s);
        let h2 = a_back.h.eval(0.37, s);
        assert!((h1 - h2).abs() < 1e-6, "double inversion {h1} vs {h2}");
    }

    // inverse of the zero isotopy is zero
    let zero_inv = zero.invert().unwrap();
    for s in &seeds {
        assert!(zero_inv.h.eval(0.5, s).abs() < 1e-12);
    }

    // conjugation by the identity is the identity operation
    let id_map = LcsMap::identity(a.triple.chart.clone());
    let a_conj = a.conjugate(&id_map).unwrap();
    for s in &seeds {
        assert!((a_conj.h.eval(0.5, s) - a.h.eval(0.5, s)).abs() < 1e-12);
    }

    // conjugated flow equals psi^{-1} o phi_t o psi pointwise
    let psi = LcsMap::time_one(&b);
    let psi_inv = LcsMap::time_one_inverse(&b);
    let conj = a.conjugate(&psi).unwrap();
    for s in &seeds[..3] {
        let through = psi_inv.apply(&a.map_at(1.0, &psi.apply(s)).unwrap().0);
        let (got, _, _) = conj.map_at(1.0, s).unwrap();
        for (u, v) in got.iter().zip(&through) {
            assert!((u - v).abs() < 1e-4, "conjugation mismatch {got:?} vs {through:?}");
        }
    }
}

#[test]
fn gauge_covariance_of_flows() {
    // Flow of H with respect to (eta, omega) equals flow of e^f H with
    // respect to (eta + df, e^f omega).
    let model = ModelSpace::LcsEuclidean { n: 1 };
    let base = lifted_bump(0.3).with_step(5e-3);
    let triple = base.triple.clone();
    let chart = triple.chart.clone();
    let f = ScalarField::from_expr(
        chart.clone(),
        lcskit::expr::Expr::coord(1)
            .scale(0.4)
            .add(&lcskit::expr::Expr::constant(0.1)),
    );
    let gauged_triple = std::sync::Arc::new(triple.gauge_transform(&f).unwrap());
    let f2 = f.clone();
    let h0 = base.h.clone();
    let h_gauged = TimeScalar::new(chart.clone(), move |t, p| f2.eval(p).exp() * h0.eval(t, p));
    let gauged =
        HamiltonianIsotopy::from_triple(model, gauged_triple, h_gauged, None)
            .unwrap()
            .with_step(5e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..6 {
        let p: Vec<f64> = vec![
            rng.gen_range(0.0..1.0),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
        ];
        let (x1, _, _) = base.map_at(1.0, &p).unwrap();
        let (x2, _, _) = gauged.map_at(1.0, &p).unwrap();
        for (u, v) in x1.iter().zip(&x2) {
            assert!((u - v).abs() < 1e-4, "gauge covariance {x1:?} vs {x2:?}");
        }
    }
}

#[test]
fn support_cutoff_enforces_compact_support() {
    let model = ModelSpace::LcsEuclidean { n: 1 };
    let chart = model.chart();
    // constant Hamiltonian, support box forces vanishing outside
    let h = TimeScalar::constant(chart.clone(), 1.0);
    let support = SupportBox::new(vec![0.0, -1.0, -1.0, -1.0], vec![1.0, 1.0, 1.0, 1.0]);
    let iso = HamiltonianIsotopy::new(model, h, Some(support)).unwrap();
    assert!(iso.h.eval(0.0, &[0.1, 2.0, 0.0, 0.0]).abs() < 1e-15);
    assert!((iso.h.eval(0.0, &[0.1, 0.0, 0.0, 0.0]) - 1.0).abs() < 1e-12);
    // trajectory outside the support is constant
    let traj = iso
        .integrate_with_step(&[0.0, 3.0, 0.0, 0.0], 1.0, 1e-2, false)
        .unwrap();
    assert!((traj.endpoint().point[1] - 3.0).abs() < 1e-12);
}

#[test]
fn richardson_error_estimate_is_small() {
    let iso = lifted_bump(0.3);
    let traj = iso
        .integrate_with_step(&[0.2, 0.1, -0.2, 0.0], 1.0, 1e-2, true)
        .unwrap();
    let max_err = traj
        .states
        .iter()
        .map(|s| s.step_error)
        .fold(0.0f64, f64::max);
    assert!(max_err > 0.0 && max_err < 1e-8, "step error {max_err}");
}
