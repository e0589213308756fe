//! Translated-point and Lee-chord solver checks against closed forms and
//! the contact correspondence.

use lcskit::chords::{
    action_spectrum, contact_translated_points, find_translated_points, lee_chords_twisted,
    torus_chart, ChordSearchConfig,
};
use lcskit::contact::ContactIsotopy;
use lcskit::dynamics::{lift_contact_isotopy, HamiltonianIsotopy, TimeScalar};
use lcskit::expr::Expr;
use lcskit::field::{KForm, ScalarField};
use lcskit::lcs::ModelSpace;

fn xy_bump_field(model: &ModelSpace, amp: f64) -> ScalarField {
    // z-independent contact bump on (x, y)
    let chart = model.chart();
    ScalarField::bump(chart, vec![0.0; 3], vec![1.0, 1.0, 0.0], 0.8, amp)
}

fn cfg() -> ChordSearchConfig {
    ChordSearchConfig::default()
}

#[test]
fn identity_reports_degenerate_family() {
    let iso = HamiltonianIsotopy::identity(ModelSpace::LcsEuclidean { n: 1 }).unwrap();
    let search = find_translated_points(&iso, &cfg()).unwrap();
    assert!(search.degenerate_family);
    assert_eq!(search.points.len(), 1);
    let rep = &search.points[0];
    assert!(rep.time_shift.abs() < 1e-8);
    assert!(rep.essential);
    assert!(!rep.nondegenerate);

    let spec = action_spectrum(&iso, &cfg()).unwrap();
    assert!(spec.degenerate_family);
    assert_eq!(spec.values.len(), 1);
    assert!(spec.values[0].abs() < 1e-8);
}

#[test]
fn lifted_bump_translated_points_carry_max_value() {
    // z-independent bump: the translated set is the (theta, z)-family over
    // the maximum, every chord essential with T = max H.
    let amp = 0.3;
    let cmodel = ModelSpace::ContactEuclidean { n: 1 };
    let c = ContactIsotopy::new(cmodel, TimeScalar::autonomous(xy_bump_field(
        &ModelSpace::ContactEuclidean { n: 1 },
        amp,
    )))
    .unwrap();
    let iso = lift_contact_isotopy(&c).unwrap();
    let search = find_translated_points(&iso, &cfg()).unwrap();
    assert!(search.degenerate_family, "theta/z family expected");
    let rep = &search.points[0];
    assert!(
        (rep.time_shift - amp).abs() < 1e-4,
        "T = {} vs max H = {amp}",
        rep.time_shift
    );
    assert!(rep.essential);
    assert!((rep.point[1].hypot(rep.point[2])) < 1e-3, "at the maximum");
    assert!(rep.residual < 1e-8);
    assert!(rep.conformal.abs() < 1e-8);
}

#[test]
fn small_bump_has_isolated_nondegenerate_point() {
    // A C1-small Hamiltonian depending on all coordinates has isolated
    // translated points near the critical points of H; the one at the
    // maximum is nondegenerate exactly because the 4-dimensional Hessian of
    // H there is nonsingular (the analytic-rank oracle for the verdict).
    let model = ModelSpace::LcsEuclidean { n: 1 };
    let chart = model.chart();
    let amp = 0.06;
    let envelope = ScalarField::bump(
        chart.clone(),
        vec![0.0; 4],
        vec![0.0, 1.0, 1.0, 1.0],
        0.8,
        amp,
    );
    let modulation = ScalarField::from_expr(
        chart,
        Expr::constant(1.0).add(&Expr::cos(0, 1, 0.0).scale(0.5)),
    );
    let h = ScalarField::product(&envelope, &modulation);
    // analytic Hessian rank oracle at the maximum (theta = 0, origin):
    // d^2/dtheta^2 = -amp 1.5... != 0 times envelope curvature in x, y, z
    let hess_rank_full = {
        let f = |p: &[f64]| {
            let env = {
                let s2 = (p[1] * p[1] + p[2] * p[2] + p[3] * p[3]) / 0.64;
                if s2 >= 1.0 {
                    0.0
                } else {
                    amp * (1.0 - 1.0 / (1.0 - s2)).exp()
                }
            };
            env * (1.0 + 0.5 * (std::f64::consts::TAU * p[0]).cos())
        };
        let p0 = [0.0; 4];
        let hstep = 1e-3;
        let mut rank = 0;
        for i in 0..4 {
            let mut pp = p0;
            pp[i] += hstep;
            let fp = f(&pp);
            pp[i] -= 2.0 * hstep;
            let fm = f(&pp);
            let dii = (fp - 2.0 * f(&p0) + fm) / (hstep * hstep);
            if dii.abs() > 1e-6 {
                rank += 1;
            }
        }
        rank
    };
    assert_eq!(hess_rank_full, 4, "oracle: full-rank Hessian at the maximum");

    let iso = HamiltonianIsotopy::new(model, TimeScalar::autonomous(h), None)
        .unwrap()
        .with_step(2e-2);
    let search = find_translated_points(&iso, &cfg()).unwrap();
    assert!(!search.degenerate_family);
    assert!(!search.points.is_empty());
    for tp in &search.points {
        assert!(tp.residual < 1e-8);
        assert!(tp.conformal.abs() < 1e-8);
    }
    // the top essential point sits near the maximum with T close to max H
    let top = search
        .points
        .iter()
        .filter(|tp| tp.essential)
        .max_by(|a, b| a.time_shift.partial_cmp(&b.time_shift).unwrap())
        .unwrap();
    let maxh = amp * 1.5;
    assert!(
        (top.time_shift - maxh).abs() < 0.35 * maxh,
        "T = {} vs max H = {maxh}",
        top.time_shift
    );
    assert!(
        top.point[1].hypot(top.point[2]) < 0.15,
        "near the maximum: {:?}",
        top.point
    );
    assert!(top.nondegenerate, "bump maximum should be nondegenerate");
}

#[test]
fn plateau_hamiltonian_yields_degenerate_points() {
    // constant on an open set: translated points inside the plateau are
    // degenerate
    let model = ModelSpace::LcsEuclidean { n: 1 };
    let chart = model.chart();
    let h = ScalarField::from_fn(chart, |p| {
        let r = (p[1] * p[1] + p[2] * p[2] + p[3] * p[3]).sqrt();
        // plateau of value 0.2 for r < 0.3, smooth decay to 0 at r = 0.8
        if r <= 0.3 {
            0.2
        } else if r >= 0.8 {
            0.0
        } else {
            let s = (r - 0.3) / 0.5;
            0.2 * (1.0 - 1.0 / (1.0 - s * s)).exp()
        }
    });
    let iso = HamiltonianIsotopy::new(model, TimeScalar::autonomous(h), None)
        .unwrap()
        .with_step(2e-2);
    let search = find_translated_points(&iso, &cfg()).unwrap();
    // plateau points form families; whether flagged or listed, every point
    // in the plateau must classify degenerate
    for tp in &search.points {
        let r = (tp.point[1].powi(2) + tp.point[2].powi(2) + tp.point[3].powi(2)).sqrt();
        if r < 0.28 {
            assert!(!tp.nondegenerate, "plateau point must be degenerate");
        }
    }
}

#[test]
fn lift_correspondence_with_contact_solver() {
    // z-dependent contact bump: translated points of the lift project onto
    // the contact translated points.
    let cmodel = ModelSpace::ContactEuclidean { n: 1 };
    let chart = cmodel.chart();
    let envelope = ScalarField::bump(chart.clone(), vec![0.0; 3], vec![1.0; 3], 0.9, 0.2);
    let tilt = ScalarField::from_expr(
        chart,
        Expr::constant(1.0).add(&Expr::coord(2).scale(0.4)),
    );
    let h = ScalarField::product(&envelope, &tilt);
    let c = ContactIsotopy::new(cmodel, TimeScalar::autonomous(h))
        .unwrap()
        .with_step(2e-2);
    let lifted = lift_contact_isotopy(&c).unwrap();

    let contact_pts = contact_translated_points(&c, &cfg()).unwrap();
    assert!(!contact_pts.is_empty());

    let search = find_translated_points(&lifted, &cfg()).unwrap();
    assert!(!search.points.is_empty());

    // project lcs points to Y = (x, y, z) and compare as sets
    let mut lcs_proj: Vec<Vec<f64>> = search.points.iter().map(|tp| tp.point[1..].to_vec()).collect();
    lcs_proj.sort_by(|a, b| a.partial_cmp(b).unwrap());
    lcs_proj.dedup_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
            < 1e-3
    });
    for cp in &contact_pts {
        let found = lcs_proj.iter().any(|q| {
            q.iter()
                .zip(&cp.point)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
                < 1e-3
        });
        assert!(found, "contact point {:?} missing upstairs", cp.point);
    }
    for q in &lcs_proj {
        let found = contact_pts.iter().any(|cp| {
            q.iter()
                .zip(&cp.point)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
                < 1e-3
        });
        assert!(found, "lcs point {q:?} has no contact counterpart");
    }
}

#[test]
fn torus_morse_function_chords() {
    // f = a cos 2pi q1 + b cos 2pi q2 on T^2 with beta = dq1:
    // 4 transverse chords with actions {a+b, a-b, -a+b, -a-b}
    let (a, b) = (1.0, 0.7);
    let chart = torus_chart(2);
    let f = ScalarField::from_expr(
        chart.clone(),
        Expr::cos(0, 1, 0.0).scale(a).add(&Expr::cos(1, 1, 0.0).scale(b)),
    );
    let beta = KForm::d_coord(chart, 0);
    let search = lee_chords_twisted(&f, &beta, &ChordSearchConfig::default()).unwrap();
    assert!(!search.degenerate_family);
    assert_eq!(search.chords.len(), 4);
    let mut values: Vec<f64> = search.chords.iter().map(|c| c.total_action).collect();
    values.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let expect = [-a - b, -a + b, a - b, a + b];
    for (v, e) in values.iter().zip(expect) {
        assert!((v - e).abs() < 1e-8, "actions {values:?}");
    }
    for c in &search.chords {
        assert!(c.transverse);
        assert!(c.essential);
        assert!((c.total_action - c.time_shift).abs() < 1e-12);
        assert!(c.lee_action.abs() < 1e-12);
    }
    // counts: cup-length(T^2) = 2 and Betti sum = 4 (all transverse)
    assert!(search.chords.len() >= 2);
    assert!(search.chords.len() >= 4);
}

#[test]
fn constant_function_reports_chord_family() {
    let chart = torus_chart(2);
    let f = ScalarField::from_expr(chart.clone(), Expr::constant(0.37));
    let beta = KForm::d_coord(chart, 0);
    let search = lee_chords_twisted(&f, &beta, &ChordSearchConfig::default()).unwrap();
    assert!(search.degenerate_family);
    assert_eq!(search.chords.len(), 1);
    assert!((search.chords[0].time_shift - 0.37).abs() < 1e-10);
    assert!(!search.chords[0].transverse);
}

#[test]
fn spectrum_of_inverse_is_negated() {
    let model = ModelSpace::LcsEuclidean { n: 1 };
    let chart = model.chart();
    let envelope = ScalarField::bump(
        chart.clone(),
        vec![0.0; 4],
        vec![0.0, 1.0, 1.0, 1.0],
        0.8,
        0.3,
    );
    let modulation = ScalarField::from_expr(
        chart,
        Expr::constant(1.0).add(&Expr::sin(0, 1).scale(0.3)),
    );
    let h = ScalarField::product(&envelope, &modulation);
    let iso = HamiltonianIsotopy::new(model, TimeScalar::autonomous(h), None)
        .unwrap()
        .with_step(2e-2);
    let inv = iso.invert().unwrap();
    let mut c = cfg();
    c.grid_per_dim = 4;
    let spec = action_spectrum(&iso, &c).unwrap();
    let spec_inv = action_spectrum(&inv, &c).unwrap();
    assert!(!spec.values.is_empty());
    // every forward action has a negated counterpart
    for v in &spec.values {
        let found = spec_inv.values.iter().any(|w| (w + v).abs() < 1e-3);
        assert!(found, "{v} not negated in {:?}", spec_inv.values);
    }
}
