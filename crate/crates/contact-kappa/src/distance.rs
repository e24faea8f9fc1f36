//! Sub-Riemannian distance between nearby points.
//!
//! Primary route: multi-start Newton shooting on the exponential map in the
//! `(phi, h0, t)` parametrization, using the variational Jacobian. Verified
//! against an independent direct method that discretizes the steering law
//! and minimizes length under an endpoint constraint. The radial field,
//! radial deviation and the angle `theta` between a velocity and the radial
//! direction are read off the minimizer's endpoint.

use rayon::prelude::*;
use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::flow::{conjugate_time, hamiltonian_rhs, rhs_with_variations, HamiltonianState};
use crate::geometry::{ContactStructure, StructureRef};
use crate::linalg::{mat6_apply, norm3, solve3, sub3, wrap_angle, M3, V3};
use crate::ode::{integrate, OdeOptions};

/// Shooting solver options. The multi-start grid covers `n_phi` directions
/// and `2 n_h + 1` vertical momenta up to `h_max_scale / |q - p|`.
#[derive(Clone, Debug)]
pub struct ShootOpts {
    pub integrator_tol: f64,
    pub scan_tol: f64,
    pub newton_tol: f64,
    pub scan_newton_tol: f64,
    pub max_iter: usize,
    pub n_phi: usize,
    pub n_h: usize,
    pub h_max_scale: f64,
    pub compute_conjugate_margin: bool,
    /// Extra start, e.g. the solution of a neighbouring query in a sweep.
    pub seed_hint: Option<ShotParams>,
    /// Run the full multi-start grid. Sweeps over closely spaced targets
    /// may disable it after the first (thorough) solve and rely on the
    /// warm-start hint; single queries should leave it on.
    pub use_grid: bool,
}

impl Default for ShootOpts {
    fn default() -> Self {
        ShootOpts {
            integrator_tol: 1e-10,
            scan_tol: 1e-7,
            newton_tol: 1e-12,
            scan_newton_tol: 1e-6,
            max_iter: 50,
            n_phi: 8,
            n_h: 6,
            h_max_scale: 4.0,
            compute_conjugate_margin: false,
            seed_hint: None,
            use_grid: true,
        }
    }
}

impl ShootOpts {
    /// Tolerances tight enough for the sixth-order distance expansion.
    pub fn expansion_grade() -> Self {
        ShootOpts { integrator_tol: 1e-13, ..Default::default() }
    }
}

/// One converged shooting solution.
#[derive(Clone, Copy, Debug)]
pub struct ShotParams {
    pub phi: f64,
    pub h0: f64,
    pub t: f64,
}

/// Distance query result. `t = d` by arc-length parametrization.
#[derive(Clone, Debug)]
pub struct DistanceResult {
    pub d: f64,
    pub phi: f64,
    pub h0: f64,
    pub t: f64,
    pub residual: f64,
    pub n_solutions_found: usize,
    /// First conjugate time minus `t`, when requested and found below the
    /// search cap; `None` when not computed or no conjugate time exists in
    /// the searched window (treated as a positive margin).
    pub conjugate_margin: Option<f64>,
    /// Two distinct solutions tie in `t` within 1e-9 (near the cut locus).
    pub ambiguous: bool,
    /// Lifted state at the endpoint of the minimizer.
    pub endpoint: HamiltonianState,
}

/// Radial data at a smooth point `q` of the distance from `p`.
#[derive(Clone, Copy, Debug)]
pub struct RadialData {
    /// Angle of `Gamma(q)` in the declared frame at `q`.
    pub gamma_angle: f64,
    /// Radial deviation: the `h0` momentum at the minimizer's endpoint.
    pub varrho: f64,
    /// Signed angle from `Gamma(q)` to the supplied velocity direction,
    /// when one was supplied.
    pub theta: Option<f64>,
}

/// Closed-form Heisenberg-chart inverse of the exponential map, used as the
/// distinguished start of the multi-start grid. Exact on the Heisenberg
/// structure, a heuristic elsewhere.
fn chart_seed(delta: V3) -> Option<ShotParams> {
    let (x, y, z) = (delta[0], delta[1], delta[2]);
    let rho = x.hypot(y);
    if rho < 1e-14 && z.abs() < 1e-14 {
        return None;
    }
    if z.abs() < 1e-12 * (1.0 + rho) {
        return Some(ShotParams { phi: y.atan2(x), h0: 0.0, t: rho.max(1e-6) });
    }
    if rho < 1e-9 {
        // essentially vertical: circle closing on the center axis
        let h0 = (PI / z.abs()).sqrt().copysign(z);
        return Some(ShotParams { phi: 0.0, h0, t: (4.0 * PI * z.abs()).sqrt() });
    }
    // solve (nu - sin nu) / (8 sin^2(nu/2)) = z / rho^2 by bisection
    let target = z / (rho * rho);
    let mu = |nu: f64| (nu - nu.sin()) / (8.0 * (nu / 2.0).sin().powi(2));
    let (mut lo, mut hi) = if target >= 0.0 { (1e-9, TAU - 1e-9) } else { (-TAU + 1e-9, -1e-9) };
    if target >= 0.0 && mu(hi) < target {
        return Some(ShotParams {
            phi: y.atan2(x) - PI,
            h0: (PI / z.abs()).sqrt().copysign(z),
            t: (4.0 * PI * z.abs()).sqrt(),
        });
    }
    if target < 0.0 && mu(lo) > target {
        return Some(ShotParams {
            phi: y.atan2(x) + PI,
            h0: (PI / z.abs()).sqrt().copysign(z),
            t: (4.0 * PI * z.abs()).sqrt(),
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mu(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let nu = 0.5 * (lo + hi);
    let h0 = 2.0 * (nu / 2.0).sin() / rho;
    if h0.abs() < 1e-12 {
        return Some(ShotParams { phi: y.atan2(x), h0: 0.0, t: rho });
    }
    let t = nu / h0;
    Some(ShotParams { phi: y.atan2(x) - nu / 2.0, h0, t })
}

struct ShotOutcome {
    params: ShotParams,
    residual: f64,
    endpoint: [f64; 6],
}

/// Scan-phase quasi-Newton: endpoint residuals from the cheap 6-dim flow,
/// the Jacobian from forward differences once, then Broyden updates. Starts
/// that wander into the basin of an already-found solution abort early.
#[allow(clippy::too_many_arguments)]
fn broyden_scan(
    structure: &StructureRef,
    p: V3,
    target: V3,
    start: ShotParams,
    int_tol: f64,
    newton_tol: f64,
    max_iter: usize,
    t_cap: f64,
    h0_cap: f64,
    known: &[ShotParams],
) -> Option<ShotOutcome> {
    // minimizers do not complete a full winding; scanning past ~1.1 loops
    // only burns time on oscillatory arcs
    let winding_cap = 1.1 * TAU;
    let max_iter = max_iter.min(20);
    let newton_tol = newton_tol.max(10.0 * int_tol);
    let opts = OdeOptions { rtol: int_tol, atol: int_tol, max_steps: 20_000, ..Default::default() };
    let admissible = |s: &ShotParams| {
        s.t.is_finite()
            && s.t > 0.0
            && s.t <= t_cap
            && s.h0.abs() <= h0_cap
            && s.h0.abs() * s.t <= winding_cap
    };
    // endpoint state and residual vector from the 6-dim flow
    let eval = |s: &ShotParams| -> Option<([f64; 6], V3)> {
        let y0 = HamiltonianState::initial(p, s.phi, s.h0).to_array();
        let sol = integrate(
            |_, y: &[f64; 6]| hamiltonian_rhs(structure, y),
            0.0,
            y0,
            s.t,
            &opts,
            false,
        )
        .ok()?;
        let y = sol.y_end;
        Some((y, sub3([y[0], y[1], y[2]], target)))
    };
    let fd_jacobian = |s: &ShotParams, f0: &V3, y_end: &[f64; 6]| -> Option<M3> {
        let d = 1e-6;
        let (_, fp) = eval(&ShotParams { phi: s.phi + d, ..*s })?;
        let (_, fh) = eval(&ShotParams { h0: s.h0 + d, ..*s })?;
        let qdot = hamiltonian_rhs(structure, y_end).ok()?;
        let mut j = [[0.0; 3]; 3];
        for r in 0..3 {
            j[r][0] = (fp[r] - f0[r]) / d;
            j[r][1] = (fh[r] - f0[r]) / d;
            j[r][2] = qdot[r];
        }
        Some(j)
    };

    let mut cur = start;
    if !admissible(&cur) {
        return None;
    }
    let (mut y_end, mut f_vec) = eval(&cur)?;
    let mut res = norm3(f_vec);
    let mut jac = fd_jacobian(&cur, &f_vec, &y_end)?;
    let mut refreshes = 0;
    let mut slow_streak = 0;
    for _ in 0..max_iter {
        if res < newton_tol {
            return Some(ShotOutcome { params: cur, residual: res, endpoint: y_end });
        }
        // bail out if an earlier batch already owns this basin
        if res < 1e-2
            && known.iter().any(|s| {
                (s.t - cur.t).abs() < 2e-4
                    && (s.h0 - cur.h0).abs() < 2e-4 * (1.0 + s.h0.abs())
                    && wrap_angle(s.phi - cur.phi).abs() < 2e-4
            })
        {
            return None;
        }
        let step = match solve3(&jac, [-f_vec[0], -f_vec[1], -f_vec[2]]) {
            Some(s) if norm3(s) < 1e6 => s,
            _ => lm_step(&jac, f_vec)?,
        };
        let mut lambda = 1.0;
        let mut next: Option<(ShotParams, [f64; 6], V3, f64)> = None;
        for _ in 0..5 {
            let trial = ShotParams {
                phi: cur.phi + lambda * step[0],
                h0: cur.h0 + lambda * step[1],
                t: (cur.t + lambda * step[2]).max(1e-9),
            };
            if admissible(&trial) {
                if let Some((ty, tf)) = eval(&trial) {
                    let tres = norm3(tf);
                    if tres < res * (1.0 - 1e-4 * lambda) || tres < newton_tol {
                        next = Some((trial, ty, tf, tres));
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        match next {
            Some((trial, ty, tf, tres)) => {
                // Broyden rank-1 update: J += (dF - J dx) dx^T / |dx|^2
                let dx = [trial.phi - cur.phi, trial.h0 - cur.h0, trial.t - cur.t];
                let dx2 = dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2];
                if dx2 > 1e-30 {
                    for r in 0..3 {
                        let jdx =
                            jac[r][0] * dx[0] + jac[r][1] * dx[1] + jac[r][2] * dx[2];
                        let corr = (tf[r] - f_vec[r] - jdx) / dx2;
                        for c in 0..3 {
                            jac[r][c] += corr * dx[c];
                        }
                    }
                }
                let slow = tres > 0.7 * res && tres > 1e-6;
                cur = trial;
                y_end = ty;
                f_vec = tf;
                res = tres;
                if slow {
                    slow_streak += 1;
                    if slow_streak >= 4 {
                        return None;
                    }
                } else {
                    slow_streak = 0;
                }
            }
            None => {
                if refreshes >= 1 {
                    return None;
                }
                refreshes += 1;
                jac = fd_jacobian(&cur, &f_vec, &y_end)?;
            }
        }
    }
    None
}

/// Newton iteration on `pi(exp(p, phi, h0, t)) = target` with backtracking;
/// the singular direction near conjugate endpoints is kept bounded by a
/// small Levenberg-Marquardt fallback.
#[allow(clippy::too_many_arguments)]
fn newton_shoot(
    structure: &StructureRef,
    p: V3,
    target: V3,
    start: ShotParams,
    int_tol: f64,
    jacobian_tol: f64,
    newton_tol: f64,
    max_iter: usize,
    t_cap: f64,
    h0_cap: f64,
) -> Option<ShotOutcome> {
    // a minimizing arc never winds much more than one loop; rejecting
    // heavily wound iterates keeps wild grid starts cheap
    let winding_cap = 4.0 * TAU;
    // endpoint accuracy is bounded by the integrator tolerance
    let newton_tol = newton_tol.max(10.0 * int_tol);
    let opts = OdeOptions {
        rtol: int_tol,
        atol: int_tol,
        max_steps: 20_000,
        ..Default::default()
    };
    // the Jacobian may be integrated more coarsely than the residual:
    // inexact Newton still converges on the exact residual
    let opts_j = OdeOptions {
        rtol: jacobian_tol.max(int_tol),
        atol: jacobian_tol.max(int_tol),
        max_steps: 20_000,
        ..Default::default()
    };
    let endpoint6 = |s: &ShotParams| -> Option<[f64; 6]> {
        let y0 = HamiltonianState::initial(p, s.phi, s.h0).to_array();
        integrate(
            |_, y: &[f64; 6]| hamiltonian_rhs(structure, y),
            0.0,
            y0,
            s.t,
            &opts,
            false,
        )
        .ok()
        .map(|sol| sol.y_end)
    };
    let mut cur = start;
    let mut y_end = endpoint6(&cur)?;
    let mut f_vec = sub3([y_end[0], y_end[1], y_end[2]], target);
    let mut res = norm3(f_vec);
    for _ in 0..max_iter {
        if !cur.t.is_finite()
            || cur.t <= 0.0
            || cur.t > t_cap
            || cur.h0.abs() > h0_cap
            || cur.h0.abs() * cur.t > winding_cap
        {
            return None;
        }
        if res < newton_tol {
            return Some(ShotOutcome { params: cur, residual: res, endpoint: y_end });
        }
        // variational integration for the Jacobian
        let mut y0 = [0.0; 42];
        y0[0..6].copy_from_slice(&HamiltonianState::initial(p, cur.phi, cur.h0).to_array());
        for i in 0..6 {
            y0[6 + i * 6 + i] = 1.0;
        }
        let sol = integrate(
            |_, y: &[f64; 42]| rhs_with_variations(structure, y),
            0.0,
            y0,
            cur.t,
            &opts_j,
            false,
        )
        .ok()?;
        let y = sol.y_end;
        let mut phi_t = [0.0; 36];
        phi_t.copy_from_slice(&y[6..42]);
        let col_phi =
            mat6_apply(&phi_t, &[0.0, 0.0, 0.0, -cur.phi.sin(), cur.phi.cos(), 0.0]);
        let col_h0 = mat6_apply(&phi_t, &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let mut state6 = [0.0; 6];
        state6.copy_from_slice(&y[0..6]);
        let qdot = hamiltonian_rhs(structure, &state6).ok()?;
        let jac: M3 = [
            [col_phi[0], col_h0[0], qdot[0]],
            [col_phi[1], col_h0[1], qdot[1]],
            [col_phi[2], col_h0[2], qdot[2]],
        ];
        let step = match solve3(&jac, [-f_vec[0], -f_vec[1], -f_vec[2]]) {
            Some(s) if norm3(s) < 1e6 => s,
            _ => lm_step(&jac, f_vec)?,
        };
        // backtracking on the (fine) endpoint residual
        let mut improved = false;
        let mut lambda = 1.0;
        for _ in 0..10 {
            let trial = ShotParams {
                phi: cur.phi + lambda * step[0],
                h0: cur.h0 + lambda * step[1],
                t: (cur.t + lambda * step[2]).max(1e-9),
            };
            if trial.h0.abs() > h0_cap || trial.t > t_cap || trial.h0.abs() * trial.t > winding_cap
            {
                lambda *= 0.5;
                continue;
            }
            if let Some(ty) = endpoint6(&trial) {
                let tf = sub3([ty[0], ty[1], ty[2]], target);
                let tres = norm3(tf);
                if tres < res * (1.0 - 1e-4 * lambda) || tres < newton_tol {
                    cur = trial;
                    y_end = ty;
                    f_vec = tf;
                    res = tres;
                    improved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !improved {
            return None;
        }
    }
    if res < newton_tol {
        return Some(ShotOutcome { params: cur, residual: res, endpoint: y_end });
    }
    None
}

/// Damped least-squares step for (nearly) singular shooting Jacobians.
fn lm_step(jac: &M3, f_vec: V3) -> Option<V3> {
    let mut jtj = [[0.0; 3]; 3];
    let mut jtf = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                jtj[i][j] += jac[k][i] * jac[k][j];
            }
        }
        for k in 0..3 {
            jtf[i] += jac[k][i] * f_vec[k];
        }
    }
    let trace = jtj[0][0] + jtj[1][1] + jtj[2][2];
    let nu = 1e-12 * (1.0 + trace);
    for (i, row) in jtj.iter_mut().enumerate() {
        row[i] += nu;
    }
    solve3(&jtj, [-jtf[0], -jtf[1], -jtf[2]])
}

fn canonical_phi(phi: f64) -> f64 {
    let mut r = phi % TAU;
    if r < 0.0 {
        r += TAU;
    }
    r
}

fn same_solution(a: &ShotParams, b: &ShotParams) -> bool {
    (a.t - b.t).abs() < 1e-8
        && (a.h0 - b.h0).abs() < 1e-8 * (1.0 + a.h0.abs())
        && wrap_angle(a.phi - b.phi).abs() < 1e-8
}

/// Sub-Riemannian distance from `p` to `q` by multi-start shooting.
pub fn shoot_distance(
    structure: &StructureRef,
    p: V3,
    q: V3,
    opts: &ShootOpts,
) -> Result<DistanceResult> {
    if !structure.in_box(p, 1.0) || !structure.in_box(q, 1.0) {
        return Err(Error::OutsideChartBox {
            point: if structure.in_box(p, 1.0) { q } else { p },
        });
    }
    let delta = sub3(q, p);
    let dist0 = norm3(delta);
    if dist0 == 0.0 {
        return Ok(DistanceResult {
            d: 0.0,
            phi: 0.0,
            h0: 0.0,
            t: 0.0,
            residual: 0.0,
            n_solutions_found: 1,
            conjugate_margin: None,
            ambiguous: false,
            endpoint: HamiltonianState::initial(p, 0.0, 0.0),
        });
    }

    let h_max = (opts.h_max_scale / dist0).min(200.0);
    let seed = chart_seed(delta);
    let t0_default = seed.map(|s| s.t).unwrap_or(dist0).max(1e-4);
    let mut starts: Vec<ShotParams> = Vec::new();
    if let Some(hint) = opts.seed_hint {
        starts.push(hint);
    }
    if let Some(s) = seed {
        starts.push(s);
        // near the center axis the minimizer's direction is weakly
        // determined; seed the whole circle so a tie is actually found
        let rho = delta[0].hypot(delta[1]);
        if s.h0 != 0.0 && rho < 0.2 * s.t {
            for k in 1..4 {
                starts.push(ShotParams {
                    phi: s.phi + (k as f64) * std::f64::consts::FRAC_PI_2,
                    ..s
                });
            }
        }
    }
    for kp in 0..(if opts.use_grid { opts.n_phi } else { 0 }) {
        let phi = TAU * (kp as f64) / (opts.n_phi as f64);
        for jh in -(opts.n_h as i64)..=(opts.n_h as i64) {
            let h0 = h_max * (jh as f64) / (opts.n_h as f64);
            // large-deviation minimizers are short arcs of tight circles:
            // start them near one winding instead of the chord length
            let t0 = t0_default.min(0.9 * TAU / (h0.abs() + 1e-9)).max(1e-4);
            starts.push(ShotParams { phi, h0, t: t0 });
        }
    }

    let t_cap = (6.0 * t0_default).max(1.0).min(4.0);
    let h0_cap = 3.0 * h_max;
    // fixed-order batches: parallel inside a batch, with basin knowledge
    // snapshotted between batches, so results do not depend on scheduling
    let mut found: Vec<ShotOutcome> = Vec::new();
    let mut known: Vec<ShotParams> = Vec::new();
    let mut best_residual = f64::INFINITY;
    for batch in starts.chunks(8) {
        let snapshot = known.clone();
        let scan: Vec<Option<ShotOutcome>> = batch
            .par_iter()
            .map(|s| {
                broyden_scan(
                    structure,
                    p,
                    q,
                    *s,
                    opts.scan_tol,
                    opts.scan_newton_tol,
                    opts.max_iter,
                    t_cap,
                    h0_cap,
                    &snapshot,
                )
            })
            .collect();
        for out in scan.into_iter().flatten() {
            best_residual = best_residual.min(out.residual);
            let mut params = out.params;
            params.phi = canonical_phi(params.phi);
            let out = ShotOutcome { params, ..out };
            known.push(out.params);
            if !found.iter().any(|f| same_solution(&f.params, &out.params)) {
                found.push(out);
            }
        }
    }
    if found.is_empty() {
        return Err(Error::ShootingFailed { target: q, best_residual });
    }
    found.sort_by(|a, b| a.params.t.total_cmp(&b.params.t));
    let t_min_scan = found[0].params.t;

    // polish every candidate that could still win, at full tolerance
    let polish: Vec<ShotOutcome> = found
        .par_iter()
        .filter(|f| f.params.t <= t_min_scan + 1e-4)
        .filter_map(|f| {
            newton_shoot(
                structure,
                p,
                q,
                f.params,
                opts.integrator_tol,
                opts.scan_tol,
                opts.newton_tol,
                opts.max_iter,
                t_cap,
                h0_cap,
            )
        })
        .collect();
    let mut polished: Vec<ShotOutcome> = Vec::new();
    for out in polish {
        let mut params = out.params;
        params.phi = canonical_phi(params.phi);
        let out = ShotOutcome { params, ..out };
        if !polished.iter().any(|f| same_solution(&f.params, &out.params)) {
            polished.push(out);
        }
    }
    if polished.is_empty() {
        return Err(Error::ShootingFailed { target: q, best_residual });
    }
    // deterministic winner: lexicographically smallest (t, |h0|, phi)
    polished.sort_by(|a, b| {
        (a.params.t, a.params.h0.abs(), a.params.phi).partial_cmp(&(
            b.params.t,
            b.params.h0.abs(),
            b.params.phi,
        ))
        .unwrap()
    });
    let winner = &polished[0];
    let ambiguous = polished[1..]
        .iter()
        .any(|s| (s.params.t - winner.params.t).abs() < 1e-9);

    let conjugate_margin = if opts.compute_conjugate_margin {
        conjugate_time(
            structure,
            p,
            winner.params.phi,
            winner.params.h0,
            1.5 * winner.params.t,
            opts.integrator_tol.max(1e-12),
        )?
        .map(|tc| tc - winner.params.t)
    } else {
        None
    };

    Ok(DistanceResult {
        d: winner.params.t,
        phi: winner.params.phi,
        h0: winner.params.h0,
        t: winner.params.t,
        residual: winner.residual,
        n_solutions_found: found.len(),
        conjugate_margin,
        ambiguous,
        endpoint: HamiltonianState::from_array(&winner.endpoint),
    })
}

/// Options for the direct trajectory-optimization oracle.
#[derive(Clone, Debug)]
pub struct DirectOpts {
    pub n_segments: usize,
    pub substeps: usize,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub mismatch_tol: f64,
}

impl Default for DirectOpts {
    fn default() -> Self {
        DirectOpts {
            n_segments: 24,
            substeps: 5,
            outer_iters: 16,
            inner_iters: 90,
            mismatch_tol: 1e-9,
        }
    }
}

/// Integrate the horizontal ODE for a piecewise-linear steering profile
/// over rescaled time `s in [0,1]` with total duration `total_t`.
fn rollout(
    structure: &ContactStructure,
    p: V3,
    thetas: &[f64],
    total_t: f64,
    substeps: usize,
) -> Result<V3> {
    let n = thetas.len() - 1;
    let mut q = p;
    let ds = 1.0 / (n * substeps) as f64;
    let theta_at = |s: f64| -> f64 {
        let x = (s * n as f64).clamp(0.0, n as f64 - 1e-12);
        let k = x as usize;
        let frac = x - k as f64;
        thetas[k] * (1.0 - frac) + thetas[k + 1] * frac
    };
    let vel = |s: f64, q: &V3| -> Result<V3> {
        let (x1, x2) = structure.frame_values(*q)?;
        let (sn, cs) = theta_at(s).sin_cos();
        Ok([
            total_t * (cs * x1[0] + sn * x2[0]),
            total_t * (cs * x1[1] + sn * x2[1]),
            total_t * (cs * x1[2] + sn * x2[2]),
        ])
    };
    let mut s = 0.0;
    for _ in 0..(n * substeps) {
        let k1 = vel(s, &q)?;
        let q2 = [q[0] + 0.5 * ds * k1[0], q[1] + 0.5 * ds * k1[1], q[2] + 0.5 * ds * k1[2]];
        let k2 = vel(s + 0.5 * ds, &q2)?;
        let q3 = [q[0] + 0.5 * ds * k2[0], q[1] + 0.5 * ds * k2[1], q[2] + 0.5 * ds * k2[2]];
        let k3 = vel(s + 0.5 * ds, &q3)?;
        let q4 = [q[0] + ds * k3[0], q[1] + ds * k3[1], q[2] + ds * k3[2]];
        let k4 = vel(s + ds, &q4)?;
        for i in 0..3 {
            q[i] += ds / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        s += ds;
    }
    Ok(q)
}

fn fd_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], fx_scale: f64) -> Vec<f64> {
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut xp = x.to_vec();
    for i in 0..n {
        let h = 3e-7 * (1.0 + x[i].abs()) * (1.0 + fx_scale * 0.0);
        let orig = xp[i];
        xp[i] = orig + h;
        let fp = f(&xp);
        xp[i] = orig - h;
        let fm = f(&xp);
        xp[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Dense BFGS with Armijo backtracking and finite-difference gradients.
fn bfgs_minimize<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: Vec<f64>,
    max_iter: usize,
    gtol: f64,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut x = x0;
    let mut fx = f(&x);
    let mut h_inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut g = fd_gradient(f, &x, fx);
    let mut stall = 0;
    for _ in 0..max_iter {
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < gtol {
            break;
        }
        let mut d: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| h_inv[i][j] * g[j]).sum::<f64>())
            .collect();
        let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            // reset to steepest descent
            for (i, di) in d.iter_mut().enumerate() {
                *di = -g[i];
            }
            slope = -g.iter().map(|v| v * v).sum::<f64>();
            for (i, row) in h_inv.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let ft = f(&xt);
            if ft <= fx + 1e-4 * alpha * slope {
                let gt = fd_gradient(f, &xt, ft);
                // BFGS update on the inverse Hessian
                let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
                let yv: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
                let snorm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
                let ynorm = yv.iter().map(|v| v * v).sum::<f64>().sqrt();
                if sy > 1e-12 * snorm * ynorm {
                    let rho = 1.0 / sy;
                    // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
                    let mut hy = vec![0.0; n];
                    for i in 0..n {
                        hy[i] = (0..n).map(|j| h_inv[i][j] * yv[j]).sum();
                    }
                    let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
                    for i in 0..n {
                        for j in 0..n {
                            h_inv[i][j] += -rho * (s[i] * hy[j] + hy[i] * s[j])
                                + rho * rho * yhy * s[i] * s[j]
                                + rho * s[i] * s[j];
                        }
                    }
                }
                if (fx - ft).abs() < 1e-16 * (1.0 + fx.abs()) {
                    stall += 1;
                } else {
                    stall = 0;
                }
                x = xt;
                fx = ft;
                g = gt;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted || stall >= 3 {
            break;
        }
    }
    (x, fx)
}

/// Upper bound on the distance by direct trajectory optimization: piecewise
/// linear steering, endpoint constraint enforced by an augmented Lagrangian.
/// Fully independent of the shooting route.
pub fn direct_method_oracle(
    structure: &StructureRef,
    p: V3,
    q: V3,
    opts: &DirectOpts,
) -> Result<f64> {
    if opts.n_segments < 16 {
        return Err(Error::invalid("direct method needs at least 16 segments"));
    }
    let delta = sub3(q, p);
    let dist0 = norm3(delta);
    if dist0 == 0.0 {
        return Ok(0.0);
    }
    let n = opts.n_segments;

    // initial profiles: constant pointing angle, and the chart-seed arc
    let mut inits: Vec<Vec<f64>> = Vec::new();
    {
        let fd = structure.frame_data(p).map_err(|e| e)?;
        let dec = fd.decompose(delta)?;
        let point_angle = dec.a2.atan2(dec.a1);
        let mut x = vec![point_angle; n + 1];
        x.push(1.2 * dist0);
        inits.push(x);
    }
    if let Some(seed) = chart_seed(delta) {
        let mut x: Vec<f64> = (0..=n)
            .map(|k| seed.phi + seed.h0 * seed.t * (k as f64) / (n as f64))
            .collect();
        x.push(seed.t);
        inits.push(x);
    }

    // fixed-step rollouts must resolve the whole arc: scale the substep
    // count with the expected duration and winding of the seeded profile
    let substeps = {
        let guess = inits.last().unwrap();
        let winding = (guess[n] - guess[0]).abs();
        let t_est = guess[n + 1];
        let total_steps = (300.0 * t_est * (1.0 + winding / 3.0)).ceil() as usize;
        (total_steps / n).clamp(opts.substeps, 50)
    };

    let mut best: Option<f64> = None;
    for x0 in inits {
        let mut x = x0;
        let mut lambda = [0.0_f64; 3];
        let mut mu = 1e4_f64;
        let mut prev_g = f64::INFINITY;
        for _outer in 0..opts.outer_iters {
            let objective = |xs: &[f64]| -> f64 {
                let total_t = xs[n + 1];
                if !(1e-6..=10.0).contains(&total_t) {
                    return 1e9 + total_t.abs();
                }
                match rollout(structure, p, &xs[0..=n], total_t, substeps) {
                    Ok(end) => {
                        let g = sub3(end, q);
                        let gn2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
                        total_t
                            + lambda[0] * g[0]
                            + lambda[1] * g[1]
                            + lambda[2] * g[2]
                            + 0.5 * mu * gn2
                    }
                    Err(_) => 1e9,
                }
            };
            let (xn, _) = bfgs_minimize(&objective, x.clone(), opts.inner_iters, 1e-9);
            x = xn;
            let end = rollout(structure, p, &x[0..=n], x[n + 1], substeps)?;
            let g = sub3(end, q);
            let gn = norm3(g);
            // a residual mismatch lets the length undershoot the distance by
            // roughly |multiplier| * |mismatch|; push well below the
            // feasibility threshold before stopping
            let lam = (lambda[0] * lambda[0] + lambda[1] * lambda[1] + lambda[2] * lambda[2])
                .sqrt()
                .max(1.0);
            if gn * lam < 0.05 * opts.mismatch_tol && prev_g < opts.mismatch_tol {
                break;
            }
            for i in 0..3 {
                lambda[i] += mu * g[i];
            }
            if gn > 0.3 * prev_g {
                mu = (mu * 10.0).min(1e12);
            }
            prev_g = gn;
        }
        let end = rollout(structure, p, &x[0..=n], x[n + 1], substeps)?;
        let gn = norm3(sub3(end, q));
        if gn < opts.mismatch_tol {
            best = Some(best.map_or(x[n + 1], |b: f64| b.min(x[n + 1])));
        }
    }
    best.ok_or(Error::Infeasible { mismatch: f64::NAN })
}

/// Radial field direction, radial deviation and the angle from the radial
/// direction to a supplied velocity direction at `q`, from the minimizer
/// found by shooting. Errors when `q` is not certifiably a smooth point.
pub fn radial_data(
    structure: &StructureRef,
    p: V3,
    q: V3,
    velocity_angle: Option<f64>,
    opts: &ShootOpts,
) -> Result<(RadialData, DistanceResult)> {
    let mut o = opts.clone();
    o.compute_conjugate_margin = true;
    let res = shoot_distance(structure, p, q, &o)?;
    if res.d == 0.0 {
        return Err(Error::NotSmoothPoint {
            detail: "base point itself lies in its cut locus".into(),
        });
    }
    if res.ambiguous {
        return Err(Error::NotSmoothPoint {
            detail: "two minimizers tie within 1e-9 (near the cut locus)".into(),
        });
    }
    if let Some(m) = res.conjugate_margin {
        if m <= 0.0 {
            return Err(Error::NotSmoothPoint {
                detail: format!("conjugate margin {m:.3e} is not positive"),
            });
        }
    }
    let gamma_angle = res.endpoint.h2.atan2(res.endpoint.h1);
    let data = RadialData {
        gamma_angle,
        varrho: res.endpoint.h0,
        theta: velocity_angle.map(|a| wrap_angle(a - gamma_angle)),
    };
    Ok((data, res))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ContactStructure;
    use approx::assert_relative_eq;

    #[test]
    fn chart_seed_recovers_heisenberg_shots() {
        // endpoint of (phi, h0, t) = (0.4, 1.3, 0.8)
        let (phi, h0, t) = (0.4_f64, 1.3_f64, 0.8_f64);
        let nu = h0 * t;
        let x = ((nu + phi).sin() - phi.sin()) / h0;
        let y = (phi.cos() - (nu + phi).cos()) / h0;
        let z = (nu - nu.sin()) / (2.0 * h0 * h0);
        let s = chart_seed([x, y, z]).unwrap();
        assert_relative_eq!(s.h0, h0, epsilon = 1e-6);
        assert_relative_eq!(s.t, t, epsilon = 1e-6);
        assert_relative_eq!(wrap_angle(s.phi - phi), 0.0, epsilon = 1e-6);
    }

    #[test]
    fn straight_segment_distance() {
        let h = ContactStructure::heisenberg();
        let r = shoot_distance(&h, [0.0; 3], [0.3, 0.0, 0.0], &ShootOpts::expansion_grade())
            .unwrap();
        assert_relative_eq!(r.d, 0.3, epsilon = 1e-10);
        assert_relative_eq!(r.h0, 0.0, epsilon = 1e-8);
        assert!(r.residual < 1e-11 * (1.0 + 0.3));
        assert_relative_eq!(wrap_angle(r.phi), 0.0, epsilon = 1e-8);
    }

    #[test]
    fn coincident_points_short_circuit() {
        let h = ContactStructure::heisenberg();
        let r = shoot_distance(&h, [0.1, 0.2, 0.0], [0.1, 0.2, 0.0], &ShootOpts::default())
            .unwrap();
        assert_eq!(r.d, 0.0);
    }

    #[test]
    fn vertical_target_distance_and_ambiguity() {
        // d(0, (0,0,c)) = sqrt(4 pi c); the center axis is in the cut locus,
        // so the solver must flag the minimizer family as ambiguous.
        let h = ContactStructure::heisenberg();
        let c = 0.02;
        let r = shoot_distance(&h, [0.0; 3], [0.0, 0.0, c], &ShootOpts::default()).unwrap();
        assert_relative_eq!(r.d, (4.0 * PI * c).sqrt(), epsilon = 1e-7);
        assert!(r.ambiguous, "vertical target should be ambiguous");
        assert!(radial_data(&h, [0.0; 3], [0.0, 0.0, c], None, &ShootOpts::default()).is_err());
    }

    #[test]
    fn symmetry_on_random_pairs() {
        let h = ContactStructure::heisenberg();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..3 {
            let p = [
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-0.1..0.1),
            ];
            let q = [
                p[0] + rng.gen_range(-0.25..0.25),
                p[1] + rng.gen_range(-0.25..0.25),
                p[2] + rng.gen_range(-0.1..0.1),
            ];
            let a = shoot_distance(&h, p, q, &ShootOpts::default()).unwrap();
            let b = shoot_distance(&h, q, p, &ShootOpts::default()).unwrap();
            assert_relative_eq!(a.d, b.d, epsilon = 1e-9);
        }
    }

    #[test]
    fn direct_oracle_straight_segment() {
        let h = ContactStructure::heisenberg();
        let d = direct_method_oracle(&h, [0.0; 3], [0.3, 0.0, 0.0], &DirectOpts::default())
            .unwrap();
        assert_relative_eq!(d, 0.3, epsilon = 1e-6);
    }

    #[test]
    fn oracle_agrees_with_shooting() {
        let h = ContactStructure::heisenberg();
        let targets = [[0.25, 0.1, 0.02], [-0.1, 0.2, -0.03]];
        for q in targets {
            let shot = shoot_distance(&h, [0.0; 3], q, &ShootOpts::default()).unwrap();
            let oracle = direct_method_oracle(&h, [0.0; 3], q, &DirectOpts::default()).unwrap();
            assert!(oracle >= shot.d - 1e-9, "oracle below shooting: {oracle} vs {}", shot.d);
            assert!((oracle - shot.d).abs() < 1e-6, "disagreement {}", oracle - shot.d);
        }
    }

    #[test]
    fn triangle_inequality_spot_check() {
        let h = ContactStructure::heisenberg();
        let p = [0.0; 3];
        let m = [0.15, 0.1, 0.01];
        let q = [0.3, -0.1, 0.02];
        let o = ShootOpts::default();
        let dpq = shoot_distance(&h, p, q, &o).unwrap().d;
        let dpm = shoot_distance(&h, p, m, &o).unwrap().d;
        let dmq = shoot_distance(&h, m, q, &o).unwrap().d;
        assert!(dpq <= dpm + dmq + 1e-10);
    }

    #[test]
    fn radial_data_on_axis_segment() {
        let h = ContactStructure::heisenberg();
        let (rd, res) = radial_data(
            &h,
            [0.0; 3],
            [0.3, 0.0, 0.0],
            Some(0.0),
            &ShootOpts::default(),
        )
        .unwrap();
        assert_relative_eq!(rd.theta.unwrap(), 0.0, epsilon = 1e-7);
        assert_relative_eq!(rd.varrho, 0.0, epsilon = 1e-8);
        // Lemma-style endpoint pairing: momentum against velocity is 2H = 1
        let e = res.endpoint;
        assert_relative_eq!(e.h1 * e.h1 + e.h2 * e.h2, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn radial_gradient_property() {
        // directional derivative of the distance along Gamma is 1
        let h = ContactStructure::heisenberg();
        let q = [0.25, 0.12, 0.02];
        let (rd, _res) = radial_data(&h, [0.0; 3], q, None, &ShootOpts::default()).unwrap();
        let fd = h.frame_data(q).unwrap();
        let gamma = fd.horizontal_velocity(rd.gamma_angle);
        let s = 1e-5;
        let o = ShootOpts::default();
        let dp = shoot_distance(&h, [0.0; 3], [q[0] + s * gamma[0], q[1] + s * gamma[1], q[2] + s * gamma[2]], &o)
            .unwrap()
            .d;
        let dm = shoot_distance(&h, [0.0; 3], [q[0] - s * gamma[0], q[1] - s * gamma[1], q[2] - s * gamma[2]], &o)
            .unwrap()
            .d;
        assert_relative_eq!((dp - dm) / (2.0 * s), 1.0, epsilon = 1e-4);
    }

    #[test]
    fn outside_box_rejected() {
        let h = ContactStructure::heisenberg();
        assert!(matches!(
            shoot_distance(&h, [0.0; 3], [1.5, 0.0, 0.0], &ShootOpts::default()),
            Err(Error::OutsideChartBox { .. })
        ));
    }
}
