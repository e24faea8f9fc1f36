//! Smooth unit-speed horizontal curves: steered by an angle law, driven by a
//! prescribed characteristic deviation, or projected from the geodesic flow.
//!
//! With the velocity written as `cos(theta) X1 + sin(theta) X2`, the
//! characteristic deviation is
//!
//! ```text
//! h = theta' - c_{12}^1 cos(theta) - c_{12}^2 sin(theta)
//! ```
//!
//! and the geodesic curvature is `k = dh/dt - eta(velocity)`. Both are
//! evaluated analytically here (jets supply the law derivatives and the
//! structure-constant gradients); a finite-difference route is kept as an
//! independent cross-check.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{Chart, ScalarField};
use crate::flow::{hamiltonian_rhs_fd, HamiltonianState};
use crate::geometry::{ContactStructure, FrameData, StructureRef};
use crate::linalg::{wrap_angle, V3};
use crate::ode::{integrate, OdeOptions, Solution};

/// How the steering angle of the curve is produced.
#[derive(Clone, Debug)]
pub enum CurveSource {
    /// `theta(t)` given directly as an expression in `t`.
    Steered(ScalarField),
    /// `h(t)` prescribed; the steering angle solves
    /// `theta' = h(t) + c_{12}^1 cos(theta) + c_{12}^2 sin(theta)`.
    PrescribedDeviation { law: ScalarField, theta0: f64 },
    /// Projection of the arc-length Hamiltonian flow with initial data
    /// `(phi, h0)`; the angle is recovered from the momenta.
    Geodesic { phi: f64, h0: f64 },
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IntegratorStats {
    pub n_accepted: usize,
    pub n_rejected: usize,
}

/// Sampled deviation and curvature along a curve.
#[derive(Clone, Debug)]
pub struct CurvatureProfile {
    pub ts: Vec<f64>,
    pub h: Vec<f64>,
    pub k: Vec<f64>,
}

/// Dense horizontal curve on `span = [t_a, t_b]` with `0` inside and
/// `zeta(0) = base_point`. Immutable after integration.
#[derive(Clone, Debug)]
pub struct HorizontalCurve {
    structure: StructureRef,
    source: CurveSource,
    base_point: V3,
    span: (f64, f64),
    tol: f64,
    fwd: Option<Solution<6>>,
    bwd: Option<Solution<6>>,
    theta_nodes_fwd: Vec<(f64, f64)>,
    theta_nodes_bwd: Vec<(f64, f64)>,
    pub stats: IntegratorStats,
}

fn theta_law_jet(law: &ScalarField, t: f64, order: usize) -> Result<crate::jet::Jet> {
    Ok(law.eval(&[t, 0.0, 0.0], order)?)
}

impl HorizontalCurve {
    fn rhs(
        structure: &ContactStructure,
        source: &CurveSource,
        t: f64,
        y: &[f64; 6],
    ) -> Result<[f64; 6]> {
        match source {
            CurveSource::Geodesic { .. } => {
                let fd = structure.frame_data([y[0], y[1], y[2]])?;
                Ok(hamiltonian_rhs_fd(&fd, y))
            }
            CurveSource::Steered(law) => {
                let fd = structure.frame_data([y[0], y[1], y[2]])?;
                let lj = theta_law_jet(law, t, 1)?;
                let (s, c) = lj.v.sin_cos();
                let mut out = [0.0; 6];
                for a in 0..3 {
                    out[a] = c * fd.x1[a].v + s * fd.x2[a].v;
                }
                out[3] = lj.g[0];
                Ok(out)
            }
            CurveSource::PrescribedDeviation { law, .. } => {
                let fd = structure.frame_data([y[0], y[1], y[2]])?;
                let theta = y[3];
                let (s, c) = theta.sin_cos();
                let h = theta_law_jet(law, t, 0)?.v;
                let mut out = [0.0; 6];
                for a in 0..3 {
                    out[a] = c * fd.x1[a].v + s * fd.x2[a].v;
                }
                out[3] = h + fd.c12[1].v * c + fd.c12[2].v * s;
                Ok(out)
            }
        }
    }

    fn initial_state(source: &CurveSource, base_point: V3) -> Result<[f64; 6]> {
        let mut y = [0.0; 6];
        y[0..3].copy_from_slice(&base_point);
        match source {
            CurveSource::Steered(law) => {
                y[3] = theta_law_jet(law, 0.0, 0)?.v;
            }
            CurveSource::PrescribedDeviation { theta0, .. } => {
                y[3] = *theta0;
            }
            CurveSource::Geodesic { phi, h0 } => {
                let s = HamiltonianState::initial(base_point, *phi, *h0);
                y = s.to_array();
            }
        }
        Ok(y)
    }

    fn build(
        structure: &StructureRef,
        source: CurveSource,
        base_point: V3,
        span: (f64, f64),
        tol: f64,
    ) -> Result<Self> {
        if !(span.0 <= 0.0 && span.1 >= 0.0) {
            return Err(Error::invalid(format!(
                "curve span [{}, {}] must contain the base time 0",
                span.0, span.1
            )));
        }
        let y0 = Self::initial_state(&source, base_point)?;
        let geo_h0 = match &source {
            CurveSource::Geodesic { h0, .. } => h0.abs(),
            _ => 0.0,
        };
        // keep steps short enough that the momentum angle moves < pi/2
        let h_max = match &source {
            CurveSource::Geodesic { .. } => (0.8 / (geo_h0 + 2.0)).min(0.2),
            _ => f64::INFINITY,
        };
        let opts = OdeOptions { rtol: tol, atol: tol, h_max, ..Default::default() };
        let mut stats = IntegratorStats::default();
        let structure2 = Arc::clone(structure);
        let src2 = source.clone();
        let fwd = if span.1 > 0.0 {
            let sol = integrate(
                |t, y: &[f64; 6]| Self::rhs(&structure2, &src2, t, y),
                0.0,
                y0,
                span.1,
                &opts,
                true,
            )?;
            stats.n_accepted += sol.n_accepted;
            stats.n_rejected += sol.n_rejected;
            Some(sol)
        } else {
            None
        };
        let bwd = if span.0 < 0.0 {
            let sol = integrate(
                |t, y: &[f64; 6]| Self::rhs(structure, &source, t, y),
                0.0,
                y0,
                span.0,
                &opts,
                true,
            )?;
            stats.n_accepted += sol.n_accepted;
            stats.n_rejected += sol.n_rejected;
            Some(sol)
        } else {
            None
        };
        let mut curve = HorizontalCurve {
            structure: Arc::clone(structure),
            source,
            base_point,
            span,
            tol,
            fwd,
            bwd,
            theta_nodes_fwd: Vec::new(),
            theta_nodes_bwd: Vec::new(),
            stats,
        };
        curve.unwrap_theta_nodes()?;
        Ok(curve)
    }

    /// Integrate `q' = cos(theta(t)) X1 + sin(theta(t)) X2` from
    /// `base_point = zeta(0)` over a span containing 0.
    pub fn steered(
        structure: &StructureRef,
        base_point: V3,
        theta_law: ScalarField,
        span: (f64, f64),
        tol: f64,
    ) -> Result<Self> {
        if theta_law.chart() != &Chart::time() {
            return Err(Error::invalid("steering law must be an expression in t"));
        }
        Self::build(structure, CurveSource::Steered(theta_law), base_point, span, tol)
    }

    /// Integrate the unique curve with prescribed characteristic deviation
    /// `h(t)`, initial point and initial angle.
    pub fn prescribed_deviation(
        structure: &StructureRef,
        base_point: V3,
        theta0: f64,
        h_law: ScalarField,
        span: (f64, f64),
        tol: f64,
    ) -> Result<Self> {
        if h_law.chart() != &Chart::time() {
            return Err(Error::invalid("deviation law must be an expression in t"));
        }
        Self::build(
            structure,
            CurveSource::PrescribedDeviation { law: h_law, theta0 },
            base_point,
            span,
            tol,
        )
    }

    /// The arc-length geodesic through `base_point` as a horizontal curve,
    /// projected from the full Hamiltonian flow.
    pub fn geodesic(
        structure: &StructureRef,
        base_point: V3,
        phi: f64,
        h0: f64,
        span: (f64, f64),
        tol: f64,
    ) -> Result<Self> {
        Self::build(structure, CurveSource::Geodesic { phi, h0 }, base_point, span, tol)
    }

    pub fn structure(&self) -> &StructureRef {
        &self.structure
    }

    pub fn source(&self) -> &CurveSource {
        &self.source
    }

    pub fn span(&self) -> (f64, f64) {
        self.span
    }

    pub fn base_point(&self) -> V3 {
        self.base_point
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    fn check_span(&self, t: f64) -> Result<()> {
        if t < self.span.0 - 1e-12 || t > self.span.1 + 1e-12 {
            return Err(Error::OutOfSpan { t, a: self.span.0, b: self.span.1 });
        }
        Ok(())
    }

    fn state6(&self, t: f64) -> Result<[f64; 6]> {
        self.check_span(t)?;
        if t == 0.0 {
            return Self::initial_state(&self.source, self.base_point);
        }
        let sol = if t > 0.0 { self.fwd.as_ref() } else { self.bwd.as_ref() };
        let sol = sol.ok_or(Error::OutOfSpan { t, a: self.span.0, b: self.span.1 })?;
        sol.eval(t)
    }

    fn unwrap_theta_nodes(&mut self) -> Result<()> {
        if !matches!(self.source, CurveSource::Geodesic { .. }) {
            return Ok(());
        }
        let unwrap = |sol: &Solution<6>, phi0: f64| -> Result<Vec<(f64, f64)>> {
            let mut nodes = Vec::with_capacity(sol.steps.len() + 1);
            let mut prev = phi0;
            let push = |t: f64, y: &[f64; 6], prev: &mut f64, nodes: &mut Vec<(f64, f64)>| {
                let raw = y[4].atan2(y[3]);
                let theta = *prev + wrap_angle(raw - *prev);
                nodes.push((t, theta));
                *prev = theta;
            };
            for s in &sol.steps {
                push(s.t0, &s.y_start(), &mut prev, &mut nodes);
            }
            push(sol.t_end, &sol.y_end, &mut prev, &mut nodes);
            for w in nodes.windows(2) {
                if (w[1].1 - w[0].1).abs() > std::f64::consts::FRAC_PI_2 {
                    return Err(Error::IntegrationFailure {
                        t: w[1].0,
                        detail: "steering angle moved too fast across a step".into(),
                    });
                }
            }
            Ok(nodes)
        };
        let phi0 = match &self.source {
            CurveSource::Geodesic { phi, .. } => *phi,
            _ => unreachable!(),
        };
        if let Some(sol) = &self.fwd {
            self.theta_nodes_fwd = unwrap(sol, phi0)?;
        }
        if let Some(sol) = &self.bwd {
            self.theta_nodes_bwd = unwrap(sol, phi0)?;
        }
        Ok(())
    }

    fn theta_from_state(&self, t: f64, y: &[f64; 6]) -> f64 {
        match &self.source {
            CurveSource::Geodesic { phi, .. } => {
                let nodes = if t >= 0.0 { &self.theta_nodes_fwd } else { &self.theta_nodes_bwd };
                let raw = y[4].atan2(y[3]);
                if nodes.is_empty() {
                    return *phi + wrap_angle(raw - phi);
                }
                // nearest node in time, monotone in |t|
                let mut best = nodes[0].1;
                let mut dist = (nodes[0].0 - t).abs();
                for &(tn, th) in nodes {
                    let d = (tn - t).abs();
                    if d < dist {
                        dist = d;
                        best = th;
                    }
                }
                best + wrap_angle(raw - best)
            }
            _ => y[3],
        }
    }

    /// Position at `t` (dense output).
    pub fn point(&self, t: f64) -> Result<V3> {
        let y = self.state6(t)?;
        Ok([y[0], y[1], y[2]])
    }

    /// Steering angle at `t`, unwrapped (real-valued, not mod 2 pi).
    pub fn theta(&self, t: f64) -> Result<f64> {
        match &self.source {
            CurveSource::Steered(law) => Ok(theta_law_jet(law, t, 0)?.v),
            _ => {
                let y = self.state6(t)?;
                Ok(self.theta_from_state(t, &y))
            }
        }
    }

    /// Position and angle at `t` from a fresh integration that lands on `t`
    /// exactly; use for samples that feed high-accuracy differencing.
    pub fn sample_exact(&self, t: f64) -> Result<(V3, f64)> {
        self.check_span(t)?;
        let y0 = Self::initial_state(&self.source, self.base_point)?;
        if t == 0.0 {
            return Ok(([y0[0], y0[1], y0[2]], self.theta_from_state(0.0, &y0)));
        }
        let geo_h0 = match &self.source {
            CurveSource::Geodesic { h0, .. } => h0.abs(),
            _ => 0.0,
        };
        let h_max = match &self.source {
            CurveSource::Geodesic { .. } => (0.8 / (geo_h0 + 2.0)).min(0.2),
            _ => f64::INFINITY,
        };
        let opts = OdeOptions { rtol: self.tol, atol: self.tol, h_max, ..Default::default() };
        let sol = integrate(
            |tt, y: &[f64; 6]| Self::rhs(&self.structure, &self.source, tt, y),
            0.0,
            y0,
            t,
            &opts,
            false,
        )?;
        let y = sol.y_end;
        Ok(([y[0], y[1], y[2]], self.theta_from_state(t, &y)))
    }

    /// Velocity vector at `t` in chart coordinates.
    pub fn velocity(&self, t: f64) -> Result<V3> {
        let y = self.state6(t)?;
        let fd = self.structure.frame_data([y[0], y[1], y[2]])?;
        let theta = self.theta_from_state(t, &y);
        let theta = match &self.source {
            CurveSource::Steered(law) => theta_law_jet(law, t, 0)?.v,
            _ => theta,
        };
        Ok(fd.horizontal_velocity(theta))
    }

    /// `(theta, theta', theta'')` at `t`, all analytic.
    fn theta_jets(&self, t: f64, y: &[f64; 6], fd: &FrameData) -> Result<(f64, f64, f64)> {
        match &self.source {
            CurveSource::Steered(law) => {
                let j = theta_law_jet(law, t, 2)?;
                Ok((j.v, j.g[0], j.hess(0, 0)))
            }
            CurveSource::PrescribedDeviation { law, .. } => {
                let theta = y[3];
                let (s, c) = theta.sin_cos();
                let hj = theta_law_jet(law, t, 1)?;
                let c1 = fd.c12[1].v;
                let c2 = fd.c12[2].v;
                let theta_dot = hj.v + c1 * c + c2 * s;
                let qdot = fd.horizontal_velocity(theta);
                let dc1 = dot_grad(&fd.c12[1].g, qdot);
                let dc2 = dot_grad(&fd.c12[2].g, qdot);
                let theta_ddot =
                    hj.g[0] + dc1 * c - c1 * s * theta_dot + dc2 * s + c2 * c * theta_dot;
                Ok((theta, theta_dot, theta_ddot))
            }
            CurveSource::Geodesic { .. } => {
                let theta = self.theta_from_state(t, y);
                let h = [y[5], y[3], y[4]];
                let f = hamiltonian_rhs_fd(fd, y);
                let hdot = [f[5], f[3], f[4]];
                let qdot = [f[0], f[1], f[2]];
                // theta' = sum_k c12^k h_k on the unit momentum circle
                let mut theta_dot = 0.0;
                let mut theta_ddot = 0.0;
                for k in 0..3 {
                    theta_dot += fd.c12[k].v * h[k];
                    theta_ddot +=
                        dot_grad(&fd.c12[k].g, qdot) * h[k] + fd.c12[k].v * hdot[k];
                }
                Ok((theta, theta_dot, theta_ddot))
            }
        }
    }

    /// Characteristic deviation `h(t) = theta' - c12^1 cos - c12^2 sin`.
    pub fn characteristic_deviation(&self, t: f64) -> Result<f64> {
        let y = self.state6(t)?;
        let fd = self.structure.frame_data([y[0], y[1], y[2]])?;
        let (theta, theta_dot, _) = self.theta_jets(t, &y, &fd)?;
        let (s, c) = theta.sin_cos();
        Ok(theta_dot - fd.c12[1].v * c - fd.c12[2].v * s)
    }

    /// Independent route: `theta'` from a five-point stencil on the dense
    /// angle instead of the analytic law. Cross-check for the round trip.
    pub fn characteristic_deviation_fd(&self, t: f64) -> Result<f64> {
        let delta = 1e-3_f64
            .min((t - self.span.0).max(0.0) / 2.0 + 1e-9)
            .min((self.span.1 - t).max(0.0) / 2.0 + 1e-9);
        let th = |tt: f64| -> Result<f64> { self.theta(tt) };
        let theta_dot = (-th(t + 2.0 * delta)? + 8.0 * th(t + delta)? - 8.0 * th(t - delta)?
            + th(t - 2.0 * delta)?)
            / (12.0 * delta);
        let y = self.state6(t)?;
        let fd = self.structure.frame_data([y[0], y[1], y[2]])?;
        let theta = self.theta_from_state(t, &y);
        let theta = match &self.source {
            CurveSource::Steered(law) => theta_law_jet(law, t, 0)?.v,
            _ => theta,
        };
        let (s, c) = theta.sin_cos();
        Ok(theta_dot - fd.c12[1].v * c - fd.c12[2].v * s)
    }

    /// Geodesic curvature `k(t) = dh/dt - eta(velocity direction)`.
    pub fn geodesic_curvature(&self, t: f64) -> Result<f64> {
        let y = self.state6(t)?;
        let fd = self.structure.frame_data([y[0], y[1], y[2]])?;
        let (theta, theta_dot, theta_ddot) = self.theta_jets(t, &y, &fd)?;
        let (s, c) = theta.sin_cos();
        let qdot = fd.horizontal_velocity(theta);
        let h_dot = match &self.source {
            CurveSource::PrescribedDeviation { law, .. } => theta_law_jet(law, t, 1)?.g[0],
            CurveSource::Geodesic { .. } => fd.h0_rate(y[3], y[4], y[5]),
            CurveSource::Steered(_) => {
                let dc1 = dot_grad(&fd.c12[1].g, qdot);
                let dc2 = dot_grad(&fd.c12[2].g, qdot);
                theta_ddot - (dc1 * c - fd.c12[1].v * s * theta_dot + dc2 * s
                    + fd.c12[2].v * c * theta_dot)
            }
        };
        let eta = fd.torsion().directional_eta(theta);
        Ok(h_dot - eta)
    }

    /// Batch deviation/curvature samples.
    pub fn curvature_profile(&self, grid: &[f64]) -> Result<CurvatureProfile> {
        let mut h = Vec::with_capacity(grid.len());
        let mut k = Vec::with_capacity(grid.len());
        for &t in grid {
            h.push(self.characteristic_deviation(t)?);
            k.push(self.geodesic_curvature(t)?);
        }
        Ok(CurvatureProfile { ts: grid.to_vec(), h, k })
    }

    /// The normal-coordinate deviation limit `12 z / (x^2+y^2)^{3/2} -> h(0)`
    /// extrapolated to `t -> 0` over a decreasing grid.
    ///
    /// Requires a structure flagged as a normal chart and a curve starting
    /// at the chart origin.
    pub fn normal_coordinate_limit(&self, t_grid: &[f64]) -> Result<f64> {
        if !self.structure.is_normal_chart() {
            return Err(Error::NormalChartMissing {
                structure: self.structure.name().to_string(),
            });
        }
        if self.base_point.iter().any(|c| c.abs() > 1e-12) {
            return Err(Error::invalid(
                "normal-coordinate limit requires the curve to start at the chart origin",
            ));
        }
        if t_grid.len() < 2
            || t_grid.windows(2).any(|w| w[1] >= w[0])
            || t_grid.iter().any(|&t| t <= 0.0)
        {
            return Err(Error::invalid(
                "t grid must be strictly decreasing towards 0 with positive entries",
            ));
        }
        let mut ts = Vec::new();
        let mut psi = Vec::new();
        for &t in t_grid {
            let (q, _) = self.sample_exact(t)?;
            let rho2 = q[0] * q[0] + q[1] * q[1];
            if rho2 <= 0.0 {
                return Err(Error::invalid(format!(
                    "planar projection degenerate at t = {t}"
                )));
            }
            ts.push(t);
            psi.push(12.0 * q[2] / rho2.powf(1.5));
        }
        // polynomial extrapolation to t = 0 on the smallest nodes
        let depth = ts.len().min(4);
        let ts = &ts[ts.len() - depth..];
        let mut col: Vec<f64> = psi[psi.len() - depth..].to_vec();
        for j in 1..depth {
            for i in 0..(depth - j) {
                let (ti, tj) = (ts[i], ts[i + j]);
                col[i] = (tj * col[i] - ti * col[i + 1]) / (tj - ti);
            }
        }
        Ok(col[0])
    }
}

fn dot_grad(g: &[f64; 3], v: V3) -> f64 {
    g[0] * v[0] + g[1] * v[1] + g[2] * v[2]
}

/// Build the isoperimetric lift structure for a planar frame and 1-form and
/// lift the planar curve with the given steering law through it.
#[allow(clippy::too_many_arguments)]
pub fn isoperimetric_lift(
    name: &str,
    y1: &[String; 2],
    y2: &[String; 2],
    a_form: &[String; 2],
    planar_base: [f64; 2],
    steering_law: ScalarField,
    span: (f64, f64),
    tol: f64,
    box_half_width: f64,
) -> Result<(StructureRef, HorizontalCurve)> {
    let structure = ContactStructure::isoperimetric_lift(name, y1, y2, a_form, box_half_width)?;
    let base = [planar_base[0], planar_base[1], 0.0];
    let curve = HorizontalCurve::steered(&structure, base, steering_law, span, tol)?;
    Ok((structure, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{Chart, ScalarField};
    use approx::assert_relative_eq;
    use std::f64::consts::{PI, TAU};

    fn law(src: &str) -> ScalarField {
        ScalarField::parse(src, &Chart::time()).unwrap()
    }

    #[test]
    fn straight_horizontal_line() {
        let h = ContactStructure::heisenberg();
        let c = HorizontalCurve::steered(&h, [0.0; 3], law("0"), (0.0, 1.0), 1e-12).unwrap();
        let q = c.point(1.0).unwrap();
        assert_relative_eq!(q[0], 1.0, epsilon = 1e-11);
        assert_relative_eq!(q[1], 0.0, epsilon = 1e-11);
        assert_relative_eq!(q[2], 0.0, epsilon = 1e-11);
    }

    #[test]
    fn circle_lift_gains_enclosed_area() {
        let h = ContactStructure::heisenberg();
        let c = HorizontalCurve::steered(&h, [0.0; 3], law("t"), (0.0, TAU), 1e-12).unwrap();
        let q = c.point(TAU).unwrap();
        assert_relative_eq!(q[0], 0.0, epsilon = 1e-9);
        assert_relative_eq!(q[1], 0.0, epsilon = 1e-9);
        assert_relative_eq!(q[2], PI, epsilon = 1e-9);
    }

    #[test]
    fn quadratic_steering_deviation_and_curvature() {
        let h = ContactStructure::heisenberg();
        let c =
            HorizontalCurve::steered(&h, [0.0; 3], law("3*t^2"), (-0.5, 0.5), 1e-12).unwrap();
        for &t in &[-0.4, -0.1, 0.0, 0.2, 0.45] {
            assert_relative_eq!(c.characteristic_deviation(t).unwrap(), 6.0 * t, epsilon = 1e-11);
            assert_relative_eq!(c.geodesic_curvature(t).unwrap(), 6.0, epsilon = 1e-10);
        }
        // independent finite-difference route agrees
        for &t in &[-0.2, 0.1, 0.3] {
            assert_relative_eq!(
                c.characteristic_deviation_fd(t).unwrap(),
                6.0 * t,
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn prescribed_zero_deviation_is_geodesic_line() {
        let h = ContactStructure::heisenberg();
        let c = HorizontalCurve::prescribed_deviation(&h, [0.0; 3], 0.0, law("0"), (0.0, 0.9), 1e-12)
            .unwrap();
        let q = c.point(0.9).unwrap();
        assert_relative_eq!(q[0], 0.9, epsilon = 1e-11);
        assert_relative_eq!(q[1], 0.0, epsilon = 1e-11);
        for &t in &[0.2, 0.7] {
            assert_relative_eq!(c.geodesic_curvature(t).unwrap(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn prescribed_unit_deviation_closes_projection() {
        let h = ContactStructure::heisenberg();
        let c = HorizontalCurve::prescribed_deviation(&h, [0.0; 3], 0.0, law("1"), (0.0, TAU), 1e-12)
            .unwrap();
        let q = c.point(TAU).unwrap();
        assert_relative_eq!(q[0], 0.0, epsilon = 1e-9);
        assert_relative_eq!(q[1], 0.0, epsilon = 1e-9);
        assert_relative_eq!(q[2], PI, epsilon = 1e-9);
        // lift of the unit circle has deviation 1 = planar curvature
        assert_relative_eq!(c.characteristic_deviation(2.0).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn prescribed_roundtrip_recovers_law() {
        let s = ContactStructure::gauthier("x^2 + y^2", "z*(x^2 + y^2)", 0.6).unwrap();
        let c = HorizontalCurve::prescribed_deviation(
            &s,
            [0.05, -0.05, 0.0],
            0.3,
            law("sin(t)"),
            (0.0, 0.5),
            1e-12,
        )
        .unwrap();
        let mut sup = 0.0_f64;
        for k in 1..25 {
            let t = 0.02 * k as f64;
            let err = (c.characteristic_deviation_fd(t).unwrap() - t.sin()).abs();
            sup = sup.max(err);
        }
        assert!(sup < 1e-8, "roundtrip sup error {sup}");
    }

    #[test]
    fn uniqueness_under_tolerance_change() {
        let s = ContactStructure::gauthier("x^2 + y^2", "0", 0.6).unwrap();
        let mk = |tol| {
            HorizontalCurve::prescribed_deviation(
                &s,
                [0.1, 0.0, 0.0],
                1.0,
                law("cos(2*t)"),
                (0.0, 0.5),
                tol,
            )
            .unwrap()
        };
        let a = mk(1e-10);
        let b = mk(1e-13);
        let qa = a.point(0.5).unwrap();
        let qb = b.point(0.5).unwrap();
        for i in 0..3 {
            assert!((qa[i] - qb[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn unit_speed_and_horizontality() {
        let s = ContactStructure::gauthier("x^2 + y^2", "z*(x^2 + y^2)", 0.6).unwrap();
        let c = HorizontalCurve::steered(&s, [0.1, 0.1, 0.0], law("2*t"), (0.0, 0.5), 1e-13)
            .unwrap();
        let delta = 5e-3;
        for &t in &[0.1, 0.25, 0.4] {
            // five-point velocity stencil on exact samples
            let q = |tt: f64| c.sample_exact(tt).unwrap().0;
            let (qp2, qp1, qm1, qm2) =
                (q(t + 2.0 * delta), q(t + delta), q(t - delta), q(t - 2.0 * delta));
            let mut v = [0.0; 3];
            for i in 0..3 {
                v[i] = (-qp2[i] + 8.0 * qp1[i] - 8.0 * qm1[i] + qm2[i]) / (12.0 * delta);
            }
            let fd = s.frame_data(c.point(t).unwrap()).unwrap();
            let dec = fd.decompose(v).unwrap();
            let speed = dec.a1.hypot(dec.a2);
            assert!((speed - 1.0).abs() < 1e-9, "speed error {}", speed - 1.0);
            assert!(dec.a0.abs() < 1e-9, "omega component {}", dec.a0);
            // velocity() agrees with the stencil
            let vel = c.velocity(t).unwrap();
            for i in 0..3 {
                assert!((vel[i] - v[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn geodesic_curve_has_constant_deviation_and_zero_curvature() {
        let h = ContactStructure::heisenberg();
        let c = HorizontalCurve::geodesic(&h, [0.0; 3], 0.4, 0.7, (-0.5, 1.5), 1e-12).unwrap();
        for &t in &[-0.4, 0.3, 1.2] {
            assert_relative_eq!(c.characteristic_deviation(t).unwrap(), 0.7, epsilon = 1e-10);
            assert_relative_eq!(c.geodesic_curvature(t).unwrap(), 0.0, epsilon = 1e-10);
        }
        // on a chi != 0 structure the same must hold (trace-free torsion)
        let s = ContactStructure::gauthier("0", "x^2 - y^2", 0.6).unwrap();
        let c = HorizontalCurve::geodesic(&s, [0.0; 3], 1.1, 0.5, (0.0, 0.5), 1e-12).unwrap();
        for &t in &[0.1, 0.3, 0.45] {
            assert!(c.geodesic_curvature(t).unwrap().abs() < 1e-7);
        }
        // deviation along the geodesic equals the evolved h0, not a constant
        let h_end = c.characteristic_deviation(0.45).unwrap();
        assert!((h_end - 0.5).abs() > 1e-4, "h0 must drift when chi != 0");
    }

    #[test]
    fn zero_deviation_curve_curvature_is_minus_eta() {
        let s = ContactStructure::gauthier("0", "x^2 - y^2", 0.6).unwrap();
        let c = HorizontalCurve::prescribed_deviation(&s, [0.0; 3], 0.2, law("0"), (0.0, 0.4), 1e-12)
            .unwrap();
        for &t in &[0.05, 0.2, 0.35] {
            let k = c.geodesic_curvature(t).unwrap();
            let q = c.point(t).unwrap();
            let theta = c.theta(t).unwrap();
            let eta = s.directional_eta(q, theta).unwrap();
            assert_relative_eq!(k, -eta, epsilon = 1e-8);
        }
    }

    #[test]
    fn normal_coordinate_limits() {
        let h = ContactStructure::heisenberg();
        let grid: Vec<f64> = (0..9).map(|k| 0.2 * 0.8_f64.powi(k)).collect();
        // h(0) = 0 for the quadratic steering curve
        let c = HorizontalCurve::steered(&h, [0.0; 3], law("3*t^2"), (0.0, 0.25), 1e-13).unwrap();
        let lim = c.normal_coordinate_limit(&grid).unwrap();
        assert!(lim.abs() < 1e-3, "limit {lim}");
        // h = 1 circle lift
        let c = HorizontalCurve::prescribed_deviation(&h, [0.0; 3], 0.0, law("1"), (0.0, 0.25), 1e-13)
            .unwrap();
        let lim = c.normal_coordinate_limit(&grid).unwrap();
        assert_relative_eq!(lim, 1.0, epsilon = 1e-3);
        // prescribed h(0) = 2 on a non-flat normal chart
        let s = ContactStructure::gauthier("x^2 + y^2", "0", 0.6).unwrap();
        let c = HorizontalCurve::prescribed_deviation(&s, [0.0; 3], 0.7, law("2"), (0.0, 0.25), 1e-13)
            .unwrap();
        let lim = c.normal_coordinate_limit(&grid).unwrap();
        assert_relative_eq!(lim, 2.0, epsilon = 1e-3);
    }

    #[test]
    fn normal_coordinate_limit_preconditions() {
        let h = ContactStructure::heisenberg();
        let c = HorizontalCurve::steered(&h, [0.0; 3], law("0"), (0.0, 0.3), 1e-12).unwrap();
        assert!(c.normal_coordinate_limit(&[0.1, 0.2]).is_err());
        let y1 = ["1".to_string(), "0".into()];
        let y2 = ["0".to_string(), "1".into()];
        let a = ["-y/2".to_string(), "x/2".into()];
        let (s, curve) = isoperimetric_lift(
            "flat",
            &y1,
            &y2,
            &a,
            [0.0, 0.0],
            law("0"),
            (0.0, 0.3),
            1e-12,
            1.0,
        )
        .unwrap();
        // not flagged as a normal chart even though it happens to be one
        assert!(!s.is_normal_chart());
        assert!(matches!(
            curve.normal_coordinate_limit(&[0.2, 0.1]),
            Err(Error::NormalChartMissing { .. })
        ));
    }

    #[test]
    fn isoperimetric_lifts() {
        // unit circle under the flat area form: deviation = planar curvature = 1
        let y1 = ["1".to_string(), "0".into()];
        let y2 = ["0".to_string(), "1".into()];
        let a = ["-y/2".to_string(), "x/2".into()];
        let (_s, curve) = isoperimetric_lift(
            "flat-area",
            &y1,
            &y2,
            &a,
            [0.0, 0.0],
            law("t"),
            (0.0, 1.0),
            1e-12,
            2.0,
        )
        .unwrap();
        for &t in &[0.2, 0.6, 0.9] {
            assert_relative_eq!(curve.characteristic_deviation(t).unwrap(), 1.0, epsilon = 1e-8);
        }
        // A = x dy (dA = dx ^ dy): x-axis lift has h = 0
        let a = ["0".to_string(), "x".into()];
        let (_s, curve) = isoperimetric_lift(
            "x-dy",
            &y1,
            &y2,
            &a,
            [0.0, 0.0],
            law("0"),
            (0.0, 1.0),
            1e-12,
            2.0,
        )
        .unwrap();
        for &t in &[0.3, 0.8] {
            assert_relative_eq!(curve.characteristic_deviation(t).unwrap(), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn out_of_span_rejected() {
        let h = ContactStructure::heisenberg();
        let c = HorizontalCurve::steered(&h, [0.0; 3], law("0"), (0.0, 0.5), 1e-12).unwrap();
        assert!(matches!(c.point(0.7), Err(Error::OutOfSpan { .. })));
        assert!(matches!(c.point(-0.1), Err(Error::OutOfSpan { .. })));
    }
}
