//! Solvers for translated points, Lee chords, their actions, essentiality
//! and nondegeneracy.
//!
//! On the symplectization models the conformal factor of a Hamiltonian
//! diffeomorphism equals minus its theta-displacement, so the naive system
//! (theta(phi p) - theta(p), x - ..., y - ..., g) is rank-deficient and its
//! solutions form curves. The solver therefore targets the essential
//! translated points, which are the isolated ones: it solves
//! (g(p), x(phi p) - x(p), y(phi p) - y(p), S(p)) = 0, with
//! theta(phi p) = theta(p) implied by g(p) = 0. The z-component is free and
//! carries the time-shift T = z(phi p) - z(p), computed on the canonical
//! lift (flows never reduce periodic coordinates).

use crate::chart::Chart;
use crate::contact::ContactIsotopy;
use crate::dynamics::{lee_flow_map, HamiltonianIsotopy, LcsMap};
use crate::error::{Error, Result};
use crate::field::{central_gradient, KForm, ScalarField};
use crate::lcs::ModelSpace;
use crate::newton::{grid_seeds, multistart, NewtonConfig};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::sync::Arc;

#[derive(Clone, Debug)]
pub struct ChordSearchConfig {
    /// Grid resolution per coordinate for multistart seeding.
    pub grid_per_dim: usize,
    /// Box half-width for non-periodic directions (the support box is used
    /// when declared).
    pub box_halfwidth: f64,
    pub newton_tol: f64,
    pub max_newton_iter: usize,
    pub dedup_radius: f64,
    /// Smallest singular value threshold for nondegeneracy.
    pub sv_threshold: f64,
    /// Essentiality tolerance on |total action - T|.
    pub essential_tol: f64,
    /// Deduplicated solution count beyond which a degenerate family is
    /// reported instead of a list.
    pub family_count: usize,
    pub seed: u64,
    /// RK4 step used for flow evaluations inside the solver.
    pub flow_step: f64,
}

impl Default for ChordSearchConfig {
    fn default() -> Self {
        ChordSearchConfig {
            grid_per_dim: 4,
            box_halfwidth: 1.0,
            newton_tol: 1e-10,
            max_newton_iter: 14,
            dedup_radius: 1e-4,
            sv_threshold: 1e-6,
            essential_tol: 1e-5,
            family_count: 16,
            seed: 0,
            flow_step: 2.5e-2,
        }
    }
}

/// A solved translated-point record.
#[derive(Clone, Debug, Serialize)]
pub struct TranslatedPoint {
    pub point: Vec<f64>,
    pub time_shift: f64,
    pub hamiltonian_action: f64,
    pub lee_action: f64,
    pub total_action: f64,
    pub essential: bool,
    pub nondegenerate: bool,
    pub residual: f64,
    pub conformal: f64,
}

/// Search outcome: either isolated points or a degenerate family
/// (identity-like regions) reported through a flag plus representatives.
///
/// Solutions in the untouched region (where the Hamiltonian vanishes
/// identically, so the map is the identity) are collapsed into
/// `trivial_zone`; `degenerate_family` flags a continuum of genuine
/// solutions (or an identity-like isotopy with no genuine ones).
#[derive(Clone, Debug, Serialize)]
pub struct TranslatedPointSearch {
    pub points: Vec<TranslatedPoint>,
    pub degenerate_family: bool,
    pub trivial_zone: bool,
    pub converged_seeds: usize,
    pub total_seeds: usize,
}

fn map_residual(map: &LcsMap, n: usize, p: &[f64]) -> Vec<f64> {
    let (q, g, s) = map.eval(p);
    if q.iter().any(|v| !v.is_finite()) || !g.is_finite() || !s.is_finite() {
        return vec![f64::NAN; 2 * n + 2];
    }
    let mut r = Vec::with_capacity(2 * n + 2);
    r.push(g);
    for i in 1..=2 * n {
        r.push(q[i] - p[i]);
    }
    r.push(s);
    r
}

/// Full translated-point conditions including the (implied) theta match,
/// for re-verification of returned records.
pub fn full_residual(map: &LcsMap, p: &[f64]) -> f64 {
    let (q, g, _) = map.eval(p);
    let mut dt = (q[0] - p[0]).rem_euclid(1.0);
    if dt > 0.5 {
        dt -= 1.0;
    }
    let mut acc = dt * dt + g * g;
    for i in 1..q.len() - 1 {
        acc += (q[i] - p[i]) * (q[i] - p[i]);
    }
    acc.sqrt()
}

/// Multistart Newton search for translated points of the time-1 map.
pub fn find_translated_points(
    iso: &HamiltonianIsotopy,
    cfg: &ChordSearchConfig,
) -> Result<TranslatedPointSearch> {
    let mut iso = iso.clone();
    iso.cfg.step = cfg.flow_step;
    let map = LcsMap::time_one(&iso);
    let untouched = {
        let iso = iso.clone();
        move |p: &[f64]| hamiltonian_vanishes_at(&iso, p)
    };
    find_translated_points_of_map(&map, &iso.model, untouched, iso.support.as_ref(), cfg)
}

/// The same search for an arbitrary lcs map with conformal/action data.
/// `untouched` must identify the region where the map is the identity
/// because its generating Hamiltonian vanishes there.
pub fn find_translated_points_of_map<U>(
    map: &LcsMap,
    model: &ModelSpace,
    untouched: U,
    support: Option<&crate::dynamics::SupportBox>,
    cfg: &ChordSearchConfig,
) -> Result<TranslatedPointSearch>
where
    U: Fn(&[f64]) -> bool + Sync,
{
    let n = match model {
        ModelSpace::LcsEuclidean { n } | ModelSpace::LcsTorus { n } => *n,
        _ => return Err(Error::ModelMismatch),
    };
    let chart = map.chart.clone();
    let dim = chart.dim();
    let (lo, hi) = match support {
        Some(b) => (b.lo.clone(), b.hi.clone()),
        None => (
            vec![-cfg.box_halfwidth; dim],
            vec![cfg.box_halfwidth; dim],
        ),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeds = grid_seeds(&chart, &lo, &hi, cfg.grid_per_dim, 0.1, &mut rng);
    let ncfg = NewtonConfig {
        tol: cfg.newton_tol,
        max_iter: cfg.max_newton_iter,
        fd_step: 1e-6,
        max_halvings: 4,
    };
    let outcome = multistart(
        |p: &[f64]| map_residual(map, n, p),
        &chart,
        seeds,
        &ncfg,
        cfg.dedup_radius,
    );

    // Partition into the untouched region (H = 0 near the point, map = id)
    // and genuine solutions.
    let mut trivial: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut genuine: Vec<(Vec<f64>, f64)> = Vec::new();
    for (p, rn) in outcome.solutions {
        if untouched(&p) {
            trivial.push((p, rn));
        } else {
            genuine.push((p, rn));
        }
    }
    let trivial_zone = !trivial.is_empty();

    // Cluster genuine solutions by time-shift; a cluster at family size is a
    // degenerate family and keeps one representative.
    let mut with_shift: Vec<(Vec<f64>, f64, f64)> = Vec::new();
    for (p, rn) in genuine {
        let (q, _, _) = map.eval(&p);
        let t = q[dim - 1] - p[dim - 1];
        with_shift.push((p, rn, t));
    }
    with_shift.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap());
    let mut degenerate_family = false;
    let mut keep: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut i = 0;
    while i < with_shift.len() {
        let mut j = i + 1;
        while j < with_shift.len() && (with_shift[j].2 - with_shift[i].2).abs() < 1e-4 {
            j += 1;
        }
        let cluster = &with_shift[i..j];
        if cluster.len() >= cfg.family_count {
            degenerate_family = true;
            keep.push((cluster[0].0.clone(), cluster[0].1));
        } else {
            for (p, rn, _) in cluster {
                keep.push((p.clone(), *rn));
            }
        }
        i = j;
    }

    // An isotopy with no genuine solutions but a trivial zone (the identity,
    // or plateaus of zero) reports the family flag with one representative.
    if keep.is_empty() && trivial_zone {
        degenerate_family = true;
        keep.push(trivial[0].clone());
    }

    let mut points = Vec::new();
    for (p, rn) in &keep {
        points.push(make_translated_point(map, model, p, *rn, cfg)?);
    }
    points.sort_by(|a, b| a.point.partial_cmp(&b.point).unwrap());
    Ok(TranslatedPointSearch {
        points,
        degenerate_family,
        trivial_zone,
        converged_seeds: outcome.converged_seeds,
        total_seeds: outcome.total_seeds,
    })
}

/// H vanishes identically near p (untouched region of a compactly supported
/// isotopy).
fn hamiltonian_vanishes_at(iso: &HamiltonianIsotopy, p: &[f64]) -> bool {
    for t in [0.0, 0.37, 0.71, 1.0] {
        if iso.h.eval(t, p).abs() > 1e-11 {
            return false;
        }
        let g = iso.h.gradient(t, p);
        if g.iter().any(|v| v.abs() > 1e-9) {
            return false;
        }
    }
    true
}

fn make_translated_point(
    map: &LcsMap,
    model: &ModelSpace,
    p: &[f64],
    residual: f64,
    cfg: &ChordSearchConfig,
) -> Result<TranslatedPoint> {
    let (q, g, s_phi) = map.eval(p);
    let dim = p.len();
    // canonical-lift time shift: z on the cover
    let t = q[dim - 1] - p[dim - 1];
    let hamiltonian_action = -s_phi;
    // lambda(R_omega) = 1 on the symplectization models, so the Lee action
    // of the chord equals its time-shift
    let lee_action = t;
    let total = hamiltonian_action + lee_action;
    let essential = (total - t).abs() <= cfg.essential_tol;
    let nondegenerate = classify_nondegenerate_at(map, model, p, t, cfg)?;
    Ok(TranslatedPoint {
        point: map.chart.reduce(p),
        time_shift: t,
        hamiltonian_action,
        lee_action,
        total_action: total,
        essential,
        nondegenerate,
        residual,
        conformal: g,
    })
}

/// Nondegeneracy of a translated point: no nonzero Y with
/// (phi_T^omega o phi)_* Y = Y and dg(Y) = 0; decided by the smallest
/// singular value of the stacked matrix [D(phi_T o phi) - I; dg].
pub fn classify_nondegenerate_at(
    map: &LcsMap,
    model: &ModelSpace,
    p: &[f64],
    t_shift: f64,
    cfg: &ChordSearchConfig,
) -> Result<bool> {
    let dim = p.len();
    let h = 1e-5;
    let mut m = DMatrix::zeros(dim + 1, dim);
    let mut q = p.to_vec();
    for j in 0..dim {
        q[j] = p[j] + h;
        let (xp, gp, _) = map.eval(&q);
        let fp = lee_flow_map(model, t_shift, &xp);
        q[j] = p[j] - h;
        let (xm, gm, _) = map.eval(&q);
        let fm = lee_flow_map(model, t_shift, &xm);
        q[j] = p[j];
        if fp.iter().chain(fm.iter()).any(|v| !v.is_finite()) {
            return Err(Error::ChartExit { t: 1.0 });
        }
        for i in 0..dim {
            m[(i, j)] = (fp[i] - fm[i]) / (2.0 * h) - if i == j { 1.0 } else { 0.0 };
        }
        m[(dim, j)] = (gp - gm) / (2.0 * h);
    }
    let svd = m.svd(false, false);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(smin >= cfg.sv_threshold)
}

/// Essential actions (= time-shifts) of the translated points, deduplicated.
/// Completeness is grid-limited; the resolution used is reported.
#[derive(Clone, Debug, Serialize)]
pub struct ActionSpectrum {
    pub values: Vec<f64>,
    pub degenerate_family: bool,
    pub grid_per_dim: usize,
}

pub fn action_spectrum(iso: &HamiltonianIsotopy, cfg: &ChordSearchConfig) -> Result<ActionSpectrum> {
    let search = find_translated_points(iso, cfg)?;
    let mut values: Vec<f64> = search
        .points
        .iter()
        .filter(|tp| tp.essential)
        .map(|tp| tp.time_shift)
        .collect();
    if search.trivial_zone {
        // the untouched region contributes essential translated points of
        // action zero
        values.push(0.0);
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup_by(|a, b| (*a - *b).abs() <= 1e-6);
    Ok(ActionSpectrum {
        values,
        degenerate_family: search.degenerate_family,
        grid_per_dim: cfg.grid_per_dim,
    })
}

// ---------------------------------------------------------------------------
// Lee chords from twisted graphs to the zero section
// ---------------------------------------------------------------------------

/// A Lee chord record between Lagrangians of a twisted cotangent bundle.
#[derive(Clone, Debug, Serialize)]
pub struct LeeChord {
    /// Critical point of the generating function on the base.
    pub base_point: Vec<f64>,
    /// Start point on L_{f,beta} (fibre coordinates).
    pub start_fibre: Vec<f64>,
    pub time_shift: f64,
    pub hamiltonian_action: f64,
    pub lee_action: f64,
    pub total_action: f64,
    pub essential: bool,
    pub transverse: bool,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LeeChordSearch {
    pub chords: Vec<LeeChord>,
    pub degenerate_family: bool,
}

/// Essential Lee chords from the twisted graph L_{f,beta} to the zero
/// section: one per critical point of f, with action (= time-shift) the
/// critical value, transverse exactly at nondegenerate critical points.
pub fn lee_chords_twisted(
    f: &ScalarField,
    beta: &KForm,
    cfg: &ChordSearchConfig,
) -> Result<LeeChordSearch> {
    let chart = f.chart.clone();
    let dim = chart.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lo = vec![-cfg.box_halfwidth; dim];
    let hi = vec![cfg.box_halfwidth; dim];
    let seeds = grid_seeds(&chart, &lo, &hi, cfg.grid_per_dim.max(6), 0.1, &mut rng);
    let ncfg = NewtonConfig {
        tol: cfg.newton_tol,
        max_iter: cfg.max_newton_iter,
        fd_step: 1e-6,
        max_halvings: 8,
    };
    let outcome = multistart(
        |q: &[f64]| f.gradient(q),
        &chart,
        seeds,
        &ncfg,
        cfg.dedup_radius,
    );
    let degenerate_family = outcome.solutions.len() >= cfg.family_count;
    let keep = if degenerate_family {
        &outcome.solutions[..1]
    } else {
        &outcome.solutions[..]
    };
    let mut chords = Vec::new();
    for (q, rn) in keep {
        let value = f.eval(q);
        let b = beta.coeffs(q);
        // start point: d_beta f(q) = df(q) - f(q) beta(q) = -f(q) beta(q)
        let start_fibre: Vec<f64> = b.iter().map(|&bi| -value * bi).collect();
        let transverse = hessian_nondegenerate(f, q, cfg.sv_threshold);
        chords.push(LeeChord {
            base_point: chart.reduce(q),
            start_fibre,
            time_shift: value,
            hamiltonian_action: value,
            lee_action: 0.0,
            total_action: value,
            essential: true,
            transverse,
            residual: *rn,
        });
    }
    Ok(LeeChordSearch {
        chords,
        degenerate_family,
    })
}

fn hessian_nondegenerate(f: &ScalarField, q: &[f64], threshold: f64) -> bool {
    let dim = q.len();
    let h = 1e-4;
    let mut m = DMatrix::zeros(dim, dim);
    let mut qq = q.to_vec();
    for j in 0..dim {
        qq[j] = q[j] + h;
        let gp = f.gradient(&qq);
        qq[j] = q[j] - h;
        let gm = f.gradient(&qq);
        qq[j] = q[j];
        for i in 0..dim {
            m[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    let svd = m.svd(false, false);
    let smin = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    smin >= threshold
}

// ---------------------------------------------------------------------------
// Contact translated points (for the lift correspondence)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct ContactTranslatedPoint {
    pub point: Vec<f64>,
    pub time_shift: f64,
    pub conformal: f64,
    pub residual: f64,
}

/// Translated points of the time-1 map of a contact isotopy on the contact
/// models: residual (x(phi p) - x(p), y(phi p) - y(p), g(p)).
pub fn contact_translated_points(
    iso: &ContactIsotopy,
    cfg: &ChordSearchConfig,
) -> Result<Vec<ContactTranslatedPoint>> {
    let n = iso.n();
    let chart = iso.model.chart();
    let dim = chart.dim();
    let lo = vec![-cfg.box_halfwidth; dim];
    let hi = vec![cfg.box_halfwidth; dim];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeds = grid_seeds(&chart, &lo, &hi, cfg.grid_per_dim, 0.1, &mut rng);
    let ncfg = NewtonConfig {
        tol: cfg.newton_tol,
        max_iter: cfg.max_newton_iter,
        fd_step: 1e-6,
        max_halvings: 8,
    };
    let residual = |p: &[f64]| -> Vec<f64> {
        match iso.map_at(1.0, p) {
            Ok((q, g)) => {
                let mut r = Vec::with_capacity(2 * n + 1);
                for i in 0..2 * n {
                    r.push(q[i] - p[i]);
                }
                r.push(g);
                r
            }
            Err(_) => vec![f64::NAN; 2 * n + 1],
        }
    };
    let outcome = multistart(residual, &chart, seeds, &ncfg, cfg.dedup_radius);
    let mut out = Vec::new();
    for (p, rn) in &outcome.solutions {
        let untouched = [0.0, 0.37, 0.71, 1.0].iter().all(|&t| {
            iso.h.eval(t, p).abs() <= 1e-11
                && iso.h.gradient(t, p).iter().all(|v| v.abs() <= 1e-9)
        });
        if untouched {
            continue;
        }
        let (q, g) = iso.map_at(1.0, p)?;
        out.push(ContactTranslatedPoint {
            point: chart.reduce(p),
            time_shift: q[2 * n] - p[2 * n],
            conformal: g,
            residual: *rn,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Helpers shared with other modules
// ---------------------------------------------------------------------------

/// The residual of a candidate translated point, for re-verification.
pub fn translated_point_residual(iso: &HamiltonianIsotopy, p: &[f64], step: f64) -> Result<f64> {
    let mut iso = iso.clone();
    iso.cfg.step = step;
    let map = LcsMap::time_one(&iso);
    Ok(full_residual(&map, p))
}

/// Gradient of a scalar closure, re-exported for solver tests.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, p: &[f64], h: f64) -> Vec<f64> {
    central_gradient(f, p, h)
}

/// Shared chart for torus bases T^m.
pub fn torus_chart(m: usize) -> Arc<Chart> {
    let labels: Vec<String> = (0..m).map(|i| format!("q{i}")).collect();
    let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
    Chart::new(&refs, &vec![true; m])
}
