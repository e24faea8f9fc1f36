//! Hamiltonian geodesic flow and its variational (Jacobi) data.
//!
//! The flow lives on the chart `(q, h1, h2, h0)` of the cotangent bundle,
//! where `h_i` are the momenta paired with the frame `(X1, X2, X0)`:
//!
//! ```text
//! q'   = h1 X1(q) + h2 X2(q)
//! h_j' = sum_{i in {1,2}} sum_k c_{ij}^k(q) h_i h_k
//! ```
//!
//! The momentum equations are the Poisson brackets `h_j' = sum_i h_i h_{[X_i,X_j]}`;
//! the signs are pinned by the closed-form Heisenberg geodesics in the tests.
//! Arc-length geodesics live on `H = (h1^2 + h2^2)/2 = 1/2`.
//!
//! `integrate_with_variations` carries the 6x6 fundamental matrix of the
//! linearized flow alongside the state; the two distinguished Jacobi fields
//! are obtained by pushing the initial vertical vectors through it.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{ContactStructure, FrameData, StructureRef};
use crate::linalg::{det3, mat6_apply, V3};
use crate::ode::{integrate, integrate_checkpoints, OdeOptions, Solution};

/// Chart point of the lifted flow.
#[derive(Clone, Copy, Debug)]
pub struct HamiltonianState {
    pub q: V3,
    pub h1: f64,
    pub h2: f64,
    pub h0: f64,
}

impl HamiltonianState {
    pub fn from_array(y: &[f64; 6]) -> Self {
        HamiltonianState { q: [y[0], y[1], y[2]], h1: y[3], h2: y[4], h0: y[5] }
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.q[0], self.q[1], self.q[2], self.h1, self.h2, self.h0]
    }

    /// Initial covector of the arc-length geodesic with direction angle
    /// `phi` and vertical momentum `h0`.
    pub fn initial(p: V3, phi: f64, h0: f64) -> Self {
        HamiltonianState { q: p, h1: phi.cos(), h2: phi.sin(), h0 }
    }

    /// The sub-Riemannian Hamiltonian `(h1^2 + h2^2)/2`.
    pub fn energy(&self) -> f64 {
        0.5 * (self.h1 * self.h1 + self.h2 * self.h2)
    }
}

/// Flow right-hand side given per-point frame data.
pub fn hamiltonian_rhs_fd(fd: &FrameData, y: &[f64; 6]) -> [f64; 6] {
    let (h1, h2, h0) = (y[3], y[4], y[5]);
    let h = [h0, h1, h2];
    let mut out = [0.0; 6];
    for a in 0..3 {
        out[a] = h1 * fd.x1[a].v + h2 * fd.x2[a].v;
    }
    // h1' = sum_k c_{21}^k h2 h_k = -sum_k c12[k] h2 h_k
    // h2' = sum_k c_{12}^k h1 h_k
    let mut s12 = 0.0;
    for k in 0..3 {
        s12 += fd.c12[k].v * h[k];
    }
    out[3] = -h2 * s12;
    out[4] = h1 * s12;
    out[5] = fd.h0_rate(h1, h2, h0);
    out
}

/// Flow right-hand side, evaluating the structure at `q`.
pub fn hamiltonian_rhs(structure: &ContactStructure, y: &[f64; 6]) -> Result<[f64; 6]> {
    let fd = structure.frame_data([y[0], y[1], y[2]])?;
    Ok(hamiltonian_rhs_fd(&fd, y))
}

/// Step used for the one finite-difference row of the variational Jacobian
/// (the `dc_{i0}^k` entries need one more jet order than the frame carries).
const FD_JACOBIAN_STEP: f64 = 1e-7;

/// Jacobian of the flow right-hand side at a state.
pub fn variational_matrix(
    structure: &ContactStructure,
    fd: &FrameData,
    y: &[f64; 6],
) -> Result<[[f64; 6]; 6]> {
    let (h1, h2, h0) = (y[3], y[4], y[5]);
    let h = [h0, h1, h2];
    let dx1 = FrameData::jacobian(&fd.x1);
    let dx2 = FrameData::jacobian(&fd.x2);
    let mut a = [[0.0; 6]; 6];
    for row in 0..3 {
        for col in 0..3 {
            a[row][col] = h1 * dx1[row][col] + h2 * dx2[row][col];
        }
        a[row][3] = fd.x1[row].v;
        a[row][4] = fd.x2[row].v;
    }
    let mut s12 = 0.0;
    let mut ds12 = [0.0; 3];
    for k in 0..3 {
        s12 += fd.c12[k].v * h[k];
        for b in 0..3 {
            ds12[b] += fd.c12[k].g[b] * h[k];
        }
    }
    for b in 0..3 {
        a[3][b] = -h2 * ds12[b];
        a[4][b] = h1 * ds12[b];
    }
    a[3][3] = -h2 * fd.c12[1].v;
    a[3][4] = -s12 - h2 * fd.c12[2].v;
    a[3][5] = -h2 * fd.c12[0].v;
    a[4][3] = s12 + h1 * fd.c12[1].v;
    a[4][4] = h1 * fd.c12[2].v;
    a[4][5] = h1 * fd.c12[0].v;

    // dh0'/dq: analytic when the c_{i0} gradients are available (Reeb
    // override), otherwise central differences of the c_{i0} sum
    if fd.ci0_grads {
        for b in 0..3 {
            let mut s = 0.0;
            for (i, &hi) in [h1, h2].iter().enumerate() {
                for k in 0..3 {
                    s += fd.ci0[i][k].g[b] * hi * h[k];
                }
            }
            a[5][b] = s;
        }
    } else {
        for b in 0..3 {
            let mut qp = fd.point;
            let mut qm = fd.point;
            qp[b] += FD_JACOBIAN_STEP;
            qm[b] -= FD_JACOBIAN_STEP;
            let rp = structure.frame_data(qp)?.h0_rate(h1, h2, h0);
            let rm = structure.frame_data(qm)?.h0_rate(h1, h2, h0);
            a[5][b] = (rp - rm) / (2.0 * FD_JACOBIAN_STEP);
        }
    }
    // dh0'/dh analytically from the structure constants
    let c10 = &fd.c[1][0];
    let c20 = &fd.c[2][0];
    a[5][3] = c10[0] * h0 + c10[1] * h1 + c10[2] * h2 + c10[1] * h1 + c20[1] * h2;
    a[5][4] = c20[0] * h0 + c20[1] * h1 + c20[2] * h2 + c10[2] * h1 + c20[2] * h2;
    a[5][5] = c10[0] * h1 + c20[0] * h2;
    Ok(a)
}

/// Right-hand side of the state plus fundamental-matrix system.
/// Layout: `y[0..6]` state, `y[6..42]` row-major 6x6 matrix.
pub fn rhs_with_variations(structure: &ContactStructure, y: &[f64; 42]) -> Result<[f64; 42]> {
    let mut state = [0.0; 6];
    state.copy_from_slice(&y[0..6]);
    let fd = structure.frame_data([y[0], y[1], y[2]])?;
    let f = hamiltonian_rhs_fd(&fd, &state);
    let a = variational_matrix(structure, &fd, &state)?;
    let mut out = [0.0; 42];
    out[0..6].copy_from_slice(&f);
    for i in 0..6 {
        for j in 0..6 {
            let mut s = 0.0;
            for k in 0..6 {
                s += a[i][k] * y[6 + k * 6 + j];
            }
            out[6 + i * 6 + j] = s;
        }
    }
    Ok(out)
}

fn initial_42(p: V3, phi: f64, h0: f64) -> [f64; 42] {
    let mut y = [0.0; 42];
    y[0..6].copy_from_slice(&HamiltonianState::initial(p, phi, h0).to_array());
    for i in 0..6 {
        y[6 + i * 6 + i] = 1.0;
    }
    y
}

/// Endpoint of the geodesic with initial direction `phi` and initial
/// vertical momentum `h0_init`, flowed for time `t` (either sign).
pub fn exp_map(
    structure: &ContactStructure,
    p: V3,
    phi: f64,
    h0_init: f64,
    t: f64,
    tol: f64,
) -> Result<HamiltonianState> {
    let y0 = HamiltonianState::initial(p, phi, h0_init).to_array();
    let sol = integrate(
        |_, y: &[f64; 6]| hamiltonian_rhs(structure, y),
        0.0,
        y0,
        t,
        &OdeOptions::with_tol(tol),
        false,
    )?;
    Ok(HamiltonianState::from_array(&sol.y_end))
}

/// An arc-length geodesic lift with its 6x6 variational fundamental matrix.
#[derive(Clone, Debug)]
pub struct GeodesicTrajectory {
    pub structure: StructureRef,
    pub p0: V3,
    pub phi: f64,
    pub h0_init: f64,
    pub sol: Solution<42>,
    pub tol: f64,
}

/// Components of one distinguished Jacobi field at a time along the lift:
/// the projection decomposed on `(X0, X1, X2)` gives `(sigma, alpha, beta)`,
/// the fiber part gives `(j1, j2, j0)`, and the flow derivatives of `sigma`
/// are carried for the bracket asymptotics.
#[derive(Clone, Copy, Debug)]
pub struct JacobiComponents {
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub j1: f64,
    pub j2: f64,
    pub j0: f64,
    /// `vec(H) sigma = h2 alpha - h1 beta`
    pub hsigma: f64,
    /// `vec(H)^2 sigma`, from differentiating `h2 alpha - h1 beta`
    /// through the flow right-hand sides.
    pub h2sigma: f64,
    /// `d/dt sigma` recomputed from the frame-component derivatives;
    /// equals `hsigma` up to integration error (checked by tests).
    pub sigma_dot_check: f64,
}

/// Samples of the two distinguished Jacobi fields at one time.
#[derive(Clone, Copy, Debug)]
pub struct JacobiSample {
    pub t: f64,
    pub state: HamiltonianState,
    /// Field with initial value `h2 d/dh1 - h1 d/dh2` (rotation of the
    /// momentum circle).
    pub perp: JacobiComponents,
    /// Field with initial value `d/dh0`.
    pub vert: JacobiComponents,
}

impl GeodesicTrajectory {
    pub fn span(&self) -> (f64, f64) {
        (self.sol.t_start, self.sol.t_end)
    }

    pub fn state(&self, t: f64) -> Result<HamiltonianState> {
        let y = self.sol.eval(t)?;
        let mut s = [0.0; 6];
        s.copy_from_slice(&y[0..6]);
        Ok(HamiltonianState::from_array(&s))
    }

    pub fn fundamental_matrix(&self, t: f64) -> Result<[f64; 36]> {
        let y = self.sol.eval(t)?;
        let mut m = [0.0; 36];
        m.copy_from_slice(&y[6..42]);
        Ok(m)
    }

    /// Initial tangent vector of the `phi`-family of geodesics.
    pub fn phi_direction(&self) -> [f64; 6] {
        [0.0, 0.0, 0.0, -self.phi.sin(), self.phi.cos(), 0.0]
    }

    fn jacobi_from_y(&self, t: f64, y: &[f64; 42]) -> Result<JacobiSample> {
        let mut state6 = [0.0; 6];
        state6.copy_from_slice(&y[0..6]);
        let state = HamiltonianState::from_array(&state6);
        let fd = self.structure.frame_data(state.q)?;
        let a = variational_matrix(&self.structure, &fd, &state6)?;
        let f = hamiltonian_rhs_fd(&fd, &state6);
        let mut phi_t = [0.0; 36];
        phi_t.copy_from_slice(&y[6..42]);

        let w0_perp = [0.0, 0.0, 0.0, self.phi.sin(), -self.phi.cos(), 0.0];
        let w0_vert = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0];

        let make = |w0: [f64; 6]| -> Result<JacobiComponents> {
            let w = mat6_apply(&phi_t, &w0);
            let dec = fd.decompose([w[0], w[1], w[2]])?;
            let (sigma, alpha, beta) = (dec.a0, dec.a1, dec.a2);
            let hsigma = state.h2 * alpha - state.h1 * beta;

            // velocity of the projected Jacobi field from the variational rhs
            let mut wdot = [0.0; 3];
            for row in 0..3 {
                let mut s = 0.0;
                for col in 0..6 {
                    s += a[row][col] * w[col];
                }
                wdot[row] = s;
            }
            // subtract the frame variation along the base trajectory
            let qdot = [f[0], f[1], f[2]];
            let dx1 = FrameData::jacobian(&fd.x1);
            let dx2 = FrameData::jacobian(&fd.x2);
            let dx0 = FrameData::jacobian(&fd.x0);
            let mut m = [0.0; 3];
            for row in 0..3 {
                let mut s = wdot[row];
                for col in 0..3 {
                    s -= alpha * dx1[row][col] * qdot[col]
                        + beta * dx2[row][col] * qdot[col]
                        + sigma * dx0[row][col] * qdot[col];
                }
                m[row] = s;
            }
            let ddec = fd.decompose(m)?;
            let (sigma_dot, alpha_dot, beta_dot) = (ddec.a0, ddec.a1, ddec.a2);
            let (h1dot, h2dot) = (f[3], f[4]);
            let h2sigma = h2dot * alpha + state.h2 * alpha_dot
                - h1dot * beta
                - state.h1 * beta_dot;
            Ok(JacobiComponents {
                alpha,
                beta,
                sigma,
                j1: w[3],
                j2: w[4],
                j0: w[5],
                hsigma,
                h2sigma,
                sigma_dot_check: sigma_dot,
            })
        };

        Ok(JacobiSample { t, state, perp: make(w0_perp)?, vert: make(w0_vert)? })
    }

    /// Jacobi data at one time (dense evaluation).
    pub fn jacobi_sample(&self, t: f64) -> Result<JacobiSample> {
        let y = self.sol.eval(t)?;
        self.jacobi_from_y(t, &y)
    }
}

/// Integrate the lifted geodesic together with its variational system.
/// When `checkpoints` is given the integration lands on those times exactly
/// and the returned samples are taken there.
pub fn integrate_with_variations(
    structure: &StructureRef,
    p: V3,
    phi: f64,
    h0_init: f64,
    t_end: f64,
    tol: f64,
    h_max: f64,
) -> Result<GeodesicTrajectory> {
    let opts = OdeOptions { rtol: tol, atol: tol, h_max, ..Default::default() };
    let sol = integrate(
        |_, y: &[f64; 42]| rhs_with_variations(structure, y),
        0.0,
        initial_42(p, phi, h0_init),
        t_end,
        &opts,
        true,
    )?;
    Ok(GeodesicTrajectory {
        structure: Arc::clone(structure),
        p0: p,
        phi,
        h0_init,
        sol,
        tol,
    })
}

/// Jacobi samples at exact checkpoint times (fresh integration, no dense
/// interpolation at the sample times).
pub fn jacobi_fields_at(
    structure: &StructureRef,
    p: V3,
    phi: f64,
    h0_init: f64,
    grid: &[f64],
    tol: f64,
) -> Result<Vec<JacobiSample>> {
    if grid.is_empty() {
        return Err(Error::invalid("empty Jacobi sample grid"));
    }
    let (_, states) = integrate_checkpoints(
        |_, y: &[f64; 42]| rhs_with_variations(structure, y),
        0.0,
        initial_42(p, phi, h0_init),
        grid,
        &OdeOptions::with_tol(tol),
        false,
    )?;
    let traj = GeodesicTrajectory {
        structure: Arc::clone(structure),
        p0: p,
        phi,
        h0_init,
        sol: Solution {
            t_start: 0.0,
            t_end: *grid.last().unwrap(),
            y_end: *states.last().unwrap(),
            steps: Vec::new(),
            n_accepted: 0,
            n_rejected: 0,
        },
        tol,
    };
    grid.iter()
        .zip(states.iter())
        .map(|(&t, y)| traj.jacobi_from_y(t, y))
        .collect()
}

/// Determinant of the exponential-map Jacobian in the `(phi, h0, t)`
/// parametrization at a point of the lifted flow.
fn conjugate_det(traj_phi: f64, fd: &FrameData, y: &[f64; 42]) -> f64 {
    let mut phi_t = [0.0; 36];
    phi_t.copy_from_slice(&y[6..42]);
    let w_phi = mat6_apply(&phi_t, &[0.0, 0.0, 0.0, -traj_phi.sin(), traj_phi.cos(), 0.0]);
    let w_h0 = mat6_apply(&phi_t, &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    let mut state6 = [0.0; 6];
    state6.copy_from_slice(&y[0..6]);
    let f = hamiltonian_rhs_fd(fd, &state6);
    det3(&[
        [w_phi[0], w_h0[0], f[0]],
        [w_phi[1], w_h0[1], f[1]],
        [w_phi[2], w_h0[2], f[2]],
    ])
}

/// First conjugate time in `(0, t_max]`, detected as a sign change of the
/// vertical-to-horizontal determinant, refined by bisection to 1e-10.
/// `None` when the determinant keeps its sign.
pub fn conjugate_time(
    structure: &StructureRef,
    p: V3,
    phi: f64,
    h0_init: f64,
    t_max: f64,
    tol: f64,
) -> Result<Option<f64>> {
    // heuristic period bound: conjugate points of nearby model flows sit
    // near 2 pi / |h0|, so looking past two periods is wasted work
    let t_cap = if h0_init != 0.0 { (2.0 * std::f64::consts::TAU / h0_init.abs()).min(t_max) } else { t_max };
    let h_max = (t_cap / 40.0).min(0.1);
    let opts = OdeOptions { rtol: tol, atol: tol, h_max, ..Default::default() };
    let sol = integrate(
        |_, y: &[f64; 42]| rhs_with_variations(structure, y),
        0.0,
        initial_42(p, phi, h0_init),
        t_cap,
        &opts,
        true,
    )?;

    let det_at = |y: &[f64; 42]| -> Result<f64> {
        let fd = structure.frame_data([y[0], y[1], y[2]])?;
        Ok(conjugate_det(phi, &fd, y))
    };

    // skip the degenerate zero at t = 0: start once the determinant has
    // grown out of the roundoff floor
    let mut nodes: Vec<(f64, [f64; 42])> =
        sol.steps.iter().map(|s| (s.t0, s.y_start())).collect();
    nodes.push((sol.t_end, sol.y_end));
    let mut prev: Option<(f64, f64, [f64; 42])> = None;
    for (t, y) in nodes {
        if t <= 0.0 {
            continue;
        }
        let d = det_at(&y)?;
        if d.abs() < 1e-13 * (1.0 + t.powi(4)) {
            continue;
        }
        if let Some((tp, dp, yp)) = prev {
            if dp.signum() != d.signum() {
                // bisect by re-integration from the bracketing node
                let mut lo = tp;
                let mut hi = t;
                let mut dlo = dp;
                let y_lo = yp;
                while hi - lo > 1e-10 {
                    let mid = 0.5 * (lo + hi);
                    let seg = integrate(
                        |_, y: &[f64; 42]| rhs_with_variations(structure, y),
                        tp,
                        y_lo,
                        mid,
                        &OdeOptions::with_tol(tol),
                        false,
                    )?;
                    let dm = det_at(&seg.y_end)?;
                    if dm.signum() == dlo.signum() {
                        lo = mid;
                        dlo = dm;
                    } else {
                        hi = mid;
                    }
                }
                return Ok(Some(0.5 * (lo + hi)));
            }
        }
        prev = Some((t, d, y));
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ContactStructure;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::{PI, TAU};

    #[test]
    fn heisenberg_rhs_momentum_signs() {
        let h = ContactStructure::heisenberg();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let y = [
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-2.0..2.0),
            ];
            let f = hamiltonian_rhs(&h, &y).unwrap();
            assert_relative_eq!(f[3], -y[4] * y[5], epsilon = 1e-13);
            assert_relative_eq!(f[4], y[3] * y[5], epsilon = 1e-13);
            assert_relative_eq!(f[5], 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn zero_horizontal_momentum_is_stationary() {
        let h = ContactStructure::heisenberg();
        let f = hamiltonian_rhs(&h, &[0.1, 0.2, 0.3, 0.0, 0.0, 1.7]).unwrap();
        for c in f {
            assert_relative_eq!(c, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn exp_map_heisenberg_closed_forms() {
        let h = ContactStructure::heisenberg();
        // straight line
        let s = exp_map(&h, [0.0; 3], 0.0, 0.0, 1.0, 1e-12).unwrap();
        assert_relative_eq!(s.q[0], 1.0, epsilon = 1e-11);
        assert_relative_eq!(s.q[1], 0.0, epsilon = 1e-11);
        assert_relative_eq!(s.q[2], 0.0, epsilon = 1e-11);
        // full unit circle lift: q = (0, 0, pi)
        let s = exp_map(&h, [0.0; 3], 0.0, 1.0, TAU, 1e-12).unwrap();
        assert_relative_eq!(s.q[0], 0.0, epsilon = 1e-9);
        assert_relative_eq!(s.q[1], 0.0, epsilon = 1e-9);
        assert_relative_eq!(s.q[2], PI, epsilon = 1e-9);
        // energy stays on the 1/2 level
        assert_relative_eq!(s.energy(), 0.5, epsilon = 1e-11);
    }

    #[test]
    fn energy_conserved_on_random_flows() {
        let structures =
            [ContactStructure::heisenberg(), ContactStructure::gauthier("0", "x^2 - y^2", 0.6).unwrap()];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for s in &structures {
            for _ in 0..10 {
                let phi = rng.gen_range(0.0..TAU);
                let h0 = rng.gen_range(-2.0..2.0);
                let t = rng.gen_range(0.1..0.5);
                let end = exp_map(s, [0.0; 3], phi, h0, t, 1e-12).unwrap();
                assert!((end.energy() - 0.5).abs() < 1e-10, "H drift {}", end.energy() - 0.5);
            }
        }
    }

    #[test]
    fn h0_drift_equals_eta_along_flow() {
        let s = ContactStructure::gauthier("0", "x^2 - y^2", 0.6).unwrap();
        let traj = integrate_with_variations(&s, [0.05, -0.1, 0.0], 0.7, 0.4, 0.4, 1e-12, f64::INFINITY)
            .unwrap();
        for &t in &[0.05, 0.15, 0.3] {
            let st = traj.state(t).unwrap();
            let f = hamiltonian_rhs(&s, &st.to_array()).unwrap();
            let theta = st.h2.atan2(st.h1);
            let eta = s.directional_eta(st.q, theta).unwrap();
            assert_relative_eq!(f[5], eta, epsilon = 1e-8);
        }
    }

    #[test]
    fn fundamental_matrix_matches_finite_differences() {
        let s = ContactStructure::gauthier("x^2 + y^2", "z*(x^2 + y^2)", 0.6).unwrap();
        let p = [0.05, 0.1, 0.0];
        let (phi, h0, t) = (0.4, 0.8, 0.35);
        let traj = integrate_with_variations(&s, p, phi, h0, t, 1e-12, f64::INFINITY).unwrap();
        let m = traj.fundamental_matrix(t).unwrap();
        let delta = 1e-4;
        // column for d/dphi
        let ep = exp_map(&s, p, phi + delta, h0, t, 1e-12).unwrap().to_array();
        let em = exp_map(&s, p, phi - delta, h0, t, 1e-12).unwrap().to_array();
        let dir = [0.0, 0.0, 0.0, -phi.sin(), phi.cos(), 0.0];
        let col = mat6_apply(&m, &dir);
        for i in 0..6 {
            let fd = (ep[i] - em[i]) / (2.0 * delta);
            assert_relative_eq!(col[i], fd, epsilon = 1e-5, max_relative = 1e-4);
        }
        // column for d/dh0
        let ep = exp_map(&s, p, phi, h0 + delta, t, 1e-12).unwrap().to_array();
        let em = exp_map(&s, p, phi, h0 - delta, t, 1e-12).unwrap().to_array();
        let col = mat6_apply(&m, &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        for i in 0..6 {
            let fd = (ep[i] - em[i]) / (2.0 * delta);
            assert_relative_eq!(col[i], fd, epsilon = 1e-5, max_relative = 1e-4);
        }
    }

    #[test]
    fn sigma_closed_forms_on_heisenberg() {
        let h = ContactStructure::heisenberg();
        // straight line (h0 = 0): sigma_perp = t^2/2 and sigma_0 = -t^3/6, exactly
        let grid = [0.1, 0.3, 0.6, 1.0];
        let samples = jacobi_fields_at(&h, [0.0; 3], 0.0, 0.0, &grid, 1e-12).unwrap();
        for s in &samples {
            assert_relative_eq!(s.perp.sigma, s.t * s.t / 2.0, epsilon = 1e-10);
            assert_relative_eq!(s.vert.sigma, -s.t.powi(3) / 6.0, epsilon = 1e-10);
        }
        // circle (h0 = 1): sigma_perp = 1 - cos t, sigma_0 = sin t - t
        let samples = jacobi_fields_at(&h, [0.0; 3], 0.3, 1.0, &grid, 1e-12).unwrap();
        for s in &samples {
            assert_relative_eq!(s.perp.sigma, 1.0 - s.t.cos(), epsilon = 1e-9);
            assert_relative_eq!(s.vert.sigma, s.t.sin() - s.t, epsilon = 1e-9);
            // vec(H) sigma identities against the closed forms
            assert_relative_eq!(s.perp.hsigma, s.t.sin(), epsilon = 1e-9);
            assert_relative_eq!(s.vert.hsigma, s.t.cos() - 1.0, epsilon = 1e-9);
            assert_relative_eq!(s.perp.h2sigma, s.t.cos(), epsilon = 1e-8);
            assert_relative_eq!(s.vert.h2sigma, -s.t.sin(), epsilon = 1e-8);
        }
    }

    #[test]
    fn hsigma_identity_two_routes() {
        // h2 alpha - h1 beta must agree with d(sigma)/dt computed from the
        // frame-component derivatives, on a chi != 0 structure
        let s = ContactStructure::gauthier("0", "x^2 - y^2", 0.6).unwrap();
        let grid = [0.1, 0.2, 0.35, 0.5];
        let samples = jacobi_fields_at(&s, [0.0; 3], 1.1, 0.7, &grid, 1e-12).unwrap();
        for smp in &samples {
            assert_relative_eq!(smp.perp.hsigma, smp.perp.sigma_dot_check, epsilon = 1e-9);
            assert_relative_eq!(smp.vert.hsigma, smp.vert.sigma_dot_check, epsilon = 1e-9);
        }
    }

    #[test]
    fn jacobi_fields_annihilate_distance_differential() {
        // The lift's covector is d(delta) along a minimizing arc, so the
        // pairing h1 alpha + h2 beta + h0 sigma must vanish for both fields.
        // (For h0 != 0 the horizontal part alone does not vanish: the
        // vertical term sigma h0 cancels it.)
        let h = ContactStructure::heisenberg();
        let samples = jacobi_fields_at(&h, [0.0; 3], 0.2, 1.0, &[0.2, 0.5, 1.0], 1e-12).unwrap();
        for s in &samples {
            for comps in [&s.perp, &s.vert] {
                let pairing =
                    s.state.h1 * comps.alpha + s.state.h2 * comps.beta + s.state.h0 * comps.sigma;
                assert!(pairing.abs() < 1e-8, "d(delta) pairing {pairing}");
            }
        }
    }

    #[test]
    fn conjugate_times_heisenberg() {
        let h = ContactStructure::heisenberg();
        // straight lines have no conjugate points
        let none = conjugate_time(&h, [0.0; 3], 0.3, 0.0, 5.0, 1e-12).unwrap();
        assert!(none.is_none());
        // h0 = 1 conjugates at 2 pi, h0 = 2 at pi
        let t1 = conjugate_time(&h, [0.0; 3], 0.0, 1.0, 10.0, 1e-12).unwrap().unwrap();
        assert_relative_eq!(t1, TAU, epsilon = 1e-6);
        let t2 = conjugate_time(&h, [0.0; 3], 1.2, 2.0, 10.0, 1e-12).unwrap().unwrap();
        assert_relative_eq!(t2, PI, epsilon = 1e-6);
    }

    #[test]
    fn reparametrized_shooting_consistency() {
        // exp(phi, h0, s t) traces the restriction of the full trajectory
        let h = ContactStructure::heisenberg();
        let traj =
            integrate_with_variations(&h, [0.0; 3], 0.9, 1.3, 1.0, 1e-12, f64::INFINITY).unwrap();
        for s in [0.25, 0.5, 0.75] {
            let partial = exp_map(&h, [0.0; 3], 0.9, 1.3, s, 1e-12).unwrap();
            let full = traj.state(s).unwrap();
            for i in 0..3 {
                assert_relative_eq!(partial.q[i], full.q[i], epsilon = 1e-9);
            }
        }
    }
}
