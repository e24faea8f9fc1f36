//! Acceptance suite: the quantitative exit criteria of the library, one
//! test per criterion, each printing a pass/fail line. Tolerances are
//! pinned here and match the theorem-level targets (1/720, k/6, -4, -6, 4,
//! t^2/2, -t^3/6) plus the solver identity budgets.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use contact_kappa::curve::HorizontalCurve;
use contact_kappa::distance::{
    direct_method_oracle, shoot_distance, DirectOpts, ShootOpts,
};
use contact_kappa::expansion::{
    deviation_limit_check, epsilon_sweep, fit_expansion, radial_asymptotics, theta_profile,
};
use contact_kappa::expr::{Chart, ScalarField};
use contact_kappa::flow::{conjugate_time, exp_map, hamiltonian_rhs};
use contact_kappa::geometry::{bracket_fd, ContactStructure, StructureRef};
use contact_kappa::linalg::norm3;

fn law(src: &str) -> ScalarField {
    ScalarField::parse(src, &Chart::time()).unwrap()
}

fn chi_structure() -> StructureRef {
    ContactStructure::gauthier("0", "x^2 - y^2", 0.6).unwrap()
}

fn report(criterion: &str, value: f64, threshold: f64) {
    let pass = value.abs() <= threshold;
    println!(
        "[{}] {criterion}: {value:.6e} (threshold {threshold:.3e})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion}: {value:.6e} exceeds {threshold:.3e}");
}

fn eps_grid() -> Vec<f64> {
    (0..8).map(|k| 0.4 * 0.8_f64.powi(k)).collect()
}

/// Criterion 1: fitted sixth-order coefficient within 5% of k^2/720 = 0.05
/// on the Heisenberg curve theta(t) = 3 t^2.
#[test]
fn criterion_1_expansion_coefficient() {
    let h = ContactStructure::heisenberg();
    let c = HorizontalCurve::steered(&h, [0.0; 3], law("3*t^2"), (-0.45, 0.45), 1e-13).unwrap();
    let samples =
        epsilon_sweep(&h, &c, 0.0, &eps_grid(), &ShootOpts::expansion_grade()).unwrap();
    let k = c.geodesic_curvature(0.0).unwrap();
    assert!((k - 6.0).abs() < 1e-12);
    let rep = fit_expansion(&samples, k, "steered(3 t^2)", 0.0).unwrap();
    assert!((rep.predicted_c - 0.05).abs() < 1e-15);
    report(
        "criterion 1: |C - 0.05|/0.05 (Heisenberg, theta = 3t^2)",
        rep.relative_error,
        0.05,
    );
}

/// Criterion 2: the geodesic null case has |d - |eps|| < 1e-10 on the
/// whole grid and a fitted coefficient below the reported noise floor.
#[test]
fn criterion_2_geodesic_null_case() {
    let h = ContactStructure::heisenberg();
    let c = HorizontalCurve::geodesic(&h, [0.0; 3], 0.0, 1.0, (-0.45, 0.45), 1e-13).unwrap();
    let samples =
        epsilon_sweep(&h, &c, 0.0, &eps_grid(), &ShootOpts::expansion_grade()).unwrap();
    let max_err = samples
        .iter()
        .map(|s| (s.d - s.eps.abs()).abs())
        .fold(0.0, f64::max);
    report("criterion 2: max |d - |eps|| on a geodesic", max_err, 1e-10);
    let rep = fit_expansion(&samples, 0.0, "geodesic(h0 = 1)", 0.0).unwrap();
    report(
        "criterion 2: |fitted C| below the noise floor",
        rep.fitted_c,
        rep.noise_floor,
    );
}

/// Criterion 3: theta''(0) within 5% of k/6 = 1, theta and theta/eps
/// monotonically decreasing in |eps|.
#[test]
fn criterion_3_theta_regularity() {
    let h = ContactStructure::heisenberg();
    let c = HorizontalCurve::steered(&h, [0.0; 3], law("3*t^2"), (-0.45, 0.45), 1e-13).unwrap();
    let prof = theta_profile(&h, &c, 0.0, &eps_grid(), &ShootOpts::expansion_grade()).unwrap();
    assert!((prof.predicted_theta_pp - 1.0).abs() < 1e-12);
    report(
        "criterion 3: |theta''(0) - 1|/1",
        prof.relative_error,
        0.05,
    );
    report(
        "criterion 3: theta monotone in |eps|",
        if prof.theta_monotone { 0.0 } else { 1.0 },
        0.5,
    );
    report(
        "criterion 3: theta/eps monotone in |eps|",
        if prof.theta_over_eps_monotone { 0.0 } else { 1.0 },
        0.5,
    );
}

/// Criterion 4: bracket asymptotics -4, -6, 4 within 3% at the smallest
/// well-conditioned time, transversal column bounded, on Heisenberg and on
/// a chi != 0 structure.
#[test]
fn criterion_4_bracket_asymptotics() {
    let grid: Vec<f64> = (1..=10).rev().map(|k| 0.05 * k as f64).collect();
    for (name, s, phi, h0) in [
        ("Heisenberg", ContactStructure::heisenberg(), 0.0, 1.0),
        ("chi != 0 gauthier", chi_structure(), 0.3, 1.0),
    ] {
        let rep = radial_asymptotics(&s, [0.0; 3], phi, h0, &grid, 1e-12).unwrap();
        let ok: Vec<_> = rep.rows.iter().filter(|r| !r.ill_conditioned).collect();
        let r = ok[0];
        report(
            &format!("criterion 4: delta c -> -4 ({name})"),
            (r.delta_c + 4.0) / 4.0,
            0.03,
        );
        report(
            &format!("criterion 4: delta^2 c -> -6 ({name})"),
            (r.delta2_c + 6.0) / 6.0,
            0.03,
        );
        report(
            &format!("criterion 4: delta^2 Hc -> 4 ({name})"),
            (r.delta2_hc - 4.0) / 4.0,
            0.03,
        );
        // boundedness: the transversal column must not blow up as t -> 0
        let vals: Vec<f64> = ok.iter().map(|r| r.delta2_jgc.abs()).collect();
        let mx = vals.iter().cloned().fold(f64::MIN, f64::max);
        let mn = vals.iter().cloned().fold(f64::MAX, f64::min);
        let bounded = mx / mn.max(1e-300) < 10.0 || vals[0] <= vals[vals.len() - 1] + 1e-9;
        report(
            &format!("criterion 4: delta^2 JGc bounded ({name})"),
            if bounded { 0.0 } else { 1.0 },
            0.5,
        );
    }
}

/// Criterion 5: sigma_perp / t^2 -> 1/2 and sigma_0 / t^3 -> -1/6 within
/// 1% at t = 0.05.
#[test]
fn criterion_5_sigma_scalings() {
    for (name, s, phi, h0) in [
        ("Heisenberg", ContactStructure::heisenberg(), 0.4, 1.0),
        ("chi != 0 gauthier", chi_structure(), 1.1, 0.7),
    ] {
        let rep = radial_asymptotics(&s, [0.0; 3], phi, h0, &[0.05, 0.1], 1e-12).unwrap();
        let r = &rep.rows[0];
        assert!((r.t - 0.05).abs() < 1e-12);
        report(
            &format!("criterion 5: sigma_perp/t^2 at t=0.05 ({name})"),
            (r.sigma_perp_scaled - 0.5) / 0.5,
            0.01,
        );
        report(
            &format!("criterion 5: sigma_0/t^3 at t=0.05 ({name})"),
            (r.sigma0_scaled + 1.0 / 6.0) / (1.0 / 6.0),
            0.01,
        );
    }
}

/// Criterion 6: first conjugate times on the Heisenberg group: 2 pi for
/// h0 = 1 and pi for h0 = 2, each within 1e-6.
#[test]
fn criterion_6_conjugate_times() {
    let h = ContactStructure::heisenberg();
    let t1 = conjugate_time(&h, [0.0; 3], 0.0, 1.0, 10.0, 1e-12)
        .unwrap()
        .expect("conjugate time for h0 = 1");
    report("criterion 6: conjugate time h0=1 vs 2 pi", t1 - TAU, 1e-6);
    let t2 = conjugate_time(&h, [0.0; 3], 1.2, 2.0, 10.0, 1e-12)
        .unwrap()
        .expect("conjugate time for h0 = 2");
    report("criterion 6: conjugate time h0=2 vs pi", t2 - PI, 1e-6);
}

/// Criterion 7: shooting vs the direct trajectory-optimization oracle on
/// random targets. 1e-6 on 20 Heisenberg targets, 1e-5 on 10 targets of
/// the chi != 0 structure; the oracle must stay an upper bound.
#[test]
fn criterion_7_oracle_equivalence() {
    let h = ContactStructure::heisenberg();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut heis_targets = Vec::new();
    while heis_targets.len() < 20 {
        let q = [
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
        ];
        let n = norm3(q);
        if n <= 0.5 && n >= 0.05 {
            heis_targets.push(q);
        }
    }
    let worst_h = heis_targets
        .par_iter()
        .map(|q| {
            let shot = shoot_distance(&h, [0.0; 3], *q, &ShootOpts::default()).unwrap();
            let oracle =
                direct_method_oracle(&h, [0.0; 3], *q, &DirectOpts::default()).unwrap();
            assert!(oracle >= shot.d - 1e-9, "oracle below shooting at {q:?}");
            (oracle - shot.d).abs()
        })
        .reduce(|| 0.0, f64::max);
    report("criterion 7: |oracle - shooting| on 20 Heisenberg targets", worst_h, 1e-6);

    let g = chi_structure();
    let mut chi_targets = Vec::new();
    while chi_targets.len() < 10 {
        let q = [
            rng.gen_range(-0.3..0.3),
            rng.gen_range(-0.3..0.3),
            rng.gen_range(-0.3..0.3),
        ];
        let n = norm3(q);
        if n <= 0.3 && n >= 0.05 {
            chi_targets.push(q);
        }
    }
    let worst_g = chi_targets
        .par_iter()
        .map(|q| {
            let shot = shoot_distance(&g, [0.0; 3], *q, &ShootOpts::default()).unwrap();
            let oracle =
                direct_method_oracle(&g, [0.0; 3], *q, &DirectOpts::default()).unwrap();
            assert!(oracle >= shot.d - 1e-9, "oracle below shooting at {q:?}");
            (oracle - shot.d).abs()
        })
        .reduce(|| 0.0, f64::max);
    report("criterion 7: |oracle - shooting| on 10 chi != 0 targets", worst_g, 1e-5);
}

/// Criterion 8: the invariant suites.
#[test]
fn criterion_8_invariant_suites() {
    let h = ContactStructure::heisenberg();
    let g = chi_structure();
    let mut rng = ChaCha8Rng::seed_from_u64(99);

    // Hamiltonian conservation: 100 random initial conditions per structure;
    // spans up to 2 on the group chart, chart-limited on the bounded one
    let mut max_drift = 0.0_f64;
    for (s, t_max) in [(&h, 2.0), (&g, 0.5)] {
        for _ in 0..100 {
            let phi = rng.gen_range(0.0..TAU);
            let h0 = rng.gen_range(-2.0..2.0);
            let t = rng.gen_range(0.1..t_max);
            let p = [
                rng.gen_range(-0.05..0.05),
                rng.gen_range(-0.05..0.05),
                rng.gen_range(-0.05..0.05),
            ];
            let end = exp_map(s, p, phi, h0, t, 1e-13).unwrap();
            max_drift = max_drift.max((end.energy() - 0.5).abs());
        }
    }
    report("criterion 8: Hamiltonian conservation", max_drift, 1e-10);

    // eta/iota rotation law and theta-independence of eta^2 + iota^2
    let mut max_rot = 0.0_f64;
    for _ in 0..50 {
        let p = [
            rng.gen_range(-0.3..0.3),
            rng.gen_range(-0.3..0.3),
            rng.gen_range(-0.3..0.3),
        ];
        let t = g.torsion_invariants(p).unwrap();
        for _ in 0..8 {
            let th = rng.gen_range(0.0..TAU);
            let e = t.directional_eta(th);
            let i = t.directional_iota(th);
            max_rot = max_rot.max((e * e + i * i - t.chi * t.chi).abs() / (1.0 + t.chi * t.chi));
        }
    }
    report("criterion 8: rotation law / chi^2 invariance", max_rot, 1e-9);

    // normalization identities
    let mut max_norm = 0.0_f64;
    for s in [&h, &g] {
        for _ in 0..40 {
            let w = s.box_half_width() * 0.5;
            let p = [
                rng.gen_range(-w..w),
                rng.gen_range(-w..w),
                rng.gen_range(-w..w),
            ];
            let fd = s.frame_data(p).unwrap();
            max_norm = max_norm
                .max((fd.c[1][2][0] - 1.0).abs())
                .max(fd.c[1][0][0].abs())
                .max(fd.c[2][0][0].abs());
        }
    }
    report("criterion 8: c12^0 = 1 and c_i0^0 = 0", max_norm, 1e-9);

    // jets against finite differences for structure constants
    let mut max_fd = 0.0_f64;
    let (x1f, x2f) = g.frame_fields();
    for _ in 0..20 {
        let p = [
            rng.gen_range(-0.25..0.25),
            rng.gen_range(-0.25..0.25),
            rng.gen_range(-0.25..0.25),
        ];
        let fd = g.frame_data(p).unwrap();
        let br = bracket_fd(x1f, x2f, p, 1e-5).unwrap();
        let dec = fd.decompose(br).unwrap();
        for (k, v) in [dec.a0, dec.a1, dec.a2].into_iter().enumerate() {
            max_fd = max_fd.max((v - fd.c[1][2][k]).abs() / (1.0 + fd.c[1][2][k].abs()));
        }
    }
    report("criterion 8: jet vs finite-difference brackets", max_fd, 1e-6);

    // uniqueness round trip for prescribed deviation curves
    let mk = |tol: f64| {
        HorizontalCurve::prescribed_deviation(
            &g,
            [0.05, 0.0, 0.0],
            0.4,
            law("cos(3*t)"),
            (0.0, 0.5),
            tol,
        )
        .unwrap()
    };
    let (ca, cb) = (mk(1e-10), mk(1e-13));
    let mut max_gap = 0.0_f64;
    for k in 1..=10 {
        let t = 0.05 * k as f64;
        let qa = ca.point(t).unwrap();
        let qb = cb.point(t).unwrap();
        max_gap = max_gap.max(norm3([qa[0] - qb[0], qa[1] - qb[1], qa[2] - qb[2]]));
    }
    report("criterion 8: uniqueness under step-control change", max_gap, 1e-8);

    // dh0/dt = eta along flows
    let mut max_h0eta = 0.0_f64;
    for _ in 0..25 {
        let phi = rng.gen_range(0.0..TAU);
        let h0 = rng.gen_range(-1.5..1.5);
        let t = rng.gen_range(0.05..0.4);
        let end = exp_map(&g, [0.0; 3], phi, h0, t, 1e-12).unwrap();
        let f = hamiltonian_rhs(&g, &end.to_array()).unwrap();
        let eta = g.directional_eta(end.q, end.h2.atan2(end.h1)).unwrap();
        max_h0eta = max_h0eta.max((f[5] - eta).abs());
    }
    report("criterion 8: dh0/dt = eta", max_h0eta, 1e-8);

    // normal-coordinate limit reproduces h(0) on both normal charts
    let grid: Vec<f64> = (0..9).map(|k| 0.2 * 0.8_f64.powi(k)).collect();
    let c = HorizontalCurve::prescribed_deviation(&h, [0.0; 3], 0.0, law("1"), (0.0, 0.25), 1e-13)
        .unwrap();
    let lim_h = c.normal_coordinate_limit(&grid).unwrap();
    report("criterion 8: normal-coordinate limit (Heisenberg)", lim_h - 1.0, 1e-3);
    let gt = ContactStructure::gauthier("x^2 + y^2", "0", 0.6).unwrap();
    let c = HorizontalCurve::prescribed_deviation(&gt, [0.0; 3], 0.7, law("2"), (0.0, 0.25), 1e-13)
        .unwrap();
    let lim_g = c.normal_coordinate_limit(&grid).unwrap();
    report("criterion 8: normal-coordinate limit (gauthier)", lim_g - 2.0, 1e-3);
}

/// Criterion 9: the isoperimetric lift of the unit circle under the flat
/// area form has characteristic deviation identically 1.
#[test]
fn criterion_9_isoperimetric_lift() {
    let y1 = ["1".to_string(), "0".into()];
    let y2 = ["0".to_string(), "1".into()];
    let a = ["-y/2".to_string(), "x/2".into()];
    let (_s, curve) = contact_kappa::curve::isoperimetric_lift(
        "flat-area",
        &y1,
        &y2,
        &a,
        [0.0, 0.0],
        law("t"),
        (0.0, TAU),
        1e-12,
        2.5,
    )
    .unwrap();
    let mut worst = 0.0_f64;
    for k in 0..=20 {
        let t = TAU * (k as f64) / 20.0;
        worst = worst.max((curve.characteristic_deviation(t).unwrap() - 1.0).abs());
    }
    report("criterion 9: circle lift deviation = 1", worst, 1e-8);
}
