//! JSON run configuration: schema-validated before any numerics runs.
//! Unknown keys are rejected everywhere.

use serde::{Deserialize, Serialize};

use crate::curve::HorizontalCurve;
use crate::error::{Error, Result};
use crate::expr::{Chart, ScalarField};
use crate::geometry::{ContactStructure, StructureRef};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    CheckStructure,
    Curve,
    Geodesic,
    Distance,
    Expand,
    Theta,
    JacobiAsymptotics,
    DeviationLimit,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::CheckStructure => "check-structure",
            Experiment::Curve => "curve",
            Experiment::Geodesic => "geodesic",
            Experiment::Distance => "distance",
            Experiment::Expand => "expand",
            Experiment::Theta => "theta",
            Experiment::JacobiAsymptotics => "jacobi-asymptotics",
            Experiment::DeviationLimit => "deviation-limit",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GauthierSpec {
    pub u: String,
    pub v: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSpec {
    pub x1: [String; 3],
    pub x2: [String; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reeb: Option<[String; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsoperimetricSpec {
    pub y1: [String; 2],
    pub y2: [String; 2],
    pub a_form: [String; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

/// Exactly one of `name`, `gauthier`, `frame`, `isoperimetric`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauthier: Option<GauthierSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<FrameSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isoperimetric: Option<IsoperimetricSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_half_width: Option<f64>,
}

impl StructureSpec {
    pub fn build(&self) -> Result<StructureRef> {
        let variants = [
            self.name.is_some(),
            self.gauthier.is_some(),
            self.frame.is_some(),
            self.isoperimetric.is_some(),
        ];
        if variants.iter().filter(|v| **v).count() != 1 {
            return Err(Error::invalid(
                "structure needs exactly one of: name, gauthier, frame, isoperimetric",
            ));
        }
        if let Some(name) = &self.name {
            return match name.as_str() {
                "heisenberg" => Ok(ContactStructure::heisenberg()),
                other => Err(Error::invalid(format!(
                    "unknown built-in structure '{other}' (available: heisenberg)"
                ))),
            };
        }
        if let Some(g) = &self.gauthier {
            return ContactStructure::gauthier(&g.u, &g.v, self.box_half_width.unwrap_or(0.6));
        }
        if let Some(f) = &self.frame {
            return ContactStructure::from_frame(
                f.name.as_deref().unwrap_or("custom"),
                &f.x1,
                &f.x2,
                f.reeb.as_ref(),
                self.box_half_width.unwrap_or(1.0),
            );
        }
        let iso = self.isoperimetric.as_ref().unwrap();
        ContactStructure::isoperimetric_lift(
            iso.name.as_deref().unwrap_or("isoperimetric"),
            &iso.y1,
            &iso.y2,
            &iso.a_form,
            self.box_half_width.unwrap_or(1.0),
        )
    }
}

/// Exactly one of `steering`, `deviation`, `geodesic`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steering: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geodesic: Option<GeodesicSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_point: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

impl CurveSpec {
    pub fn build(&self, structure: &StructureRef, default_span: (f64, f64)) -> Result<HorizontalCurve> {
        let variants =
            [self.steering.is_some(), self.deviation.is_some(), self.geodesic.is_some()];
        if variants.iter().filter(|v| **v).count() != 1 {
            return Err(Error::invalid(
                "curve needs exactly one of: steering, deviation, geodesic",
            ));
        }
        let base = self.base_point.unwrap_or([0.0; 3]);
        let span = self.span.map(|s| (s[0], s[1])).unwrap_or(default_span);
        let tol = self.tol.unwrap_or(1e-12);
        if let Some(src) = &self.steering {
            if self.theta0.is_some() {
                return Err(Error::invalid("theta0 applies to deviation curves only"));
            }
            let law = ScalarField::parse(src, &Chart::time())?;
            return HorizontalCurve::steered(structure, base, law, span, tol);
        }
        if let Some(src) = &self.deviation {
            let law = ScalarField::parse(src, &Chart::time())?;
            return HorizontalCurve::prescribed_deviation(
                structure,
                base,
                self.theta0.unwrap_or(0.0),
                law,
                span,
                tol,
            );
        }
        let g = self.geodesic.as_ref().unwrap();
        HorizontalCurve::geodesic(structure, base, g.phi, g.h0, span, tol)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeodesicSpec {
    pub phi: f64,
    pub h0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_point: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

/// Epsilon grid: an explicit strictly decreasing list of magnitudes, or a
/// geometric descriptor.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, untagged)]
pub enum EpsGrid {
    List(Vec<f64>),
    Geometric {
        max: f64,
        ratio: f64,
        count: usize,
    },
}

impl EpsGrid {
    pub fn magnitudes(&self) -> Result<Vec<f64>> {
        let mags = match self {
            EpsGrid::List(v) => v.clone(),
            EpsGrid::Geometric { max, ratio, count } => {
                if !(*ratio > 0.0 && *ratio < 1.0) || *count < 1 || *max <= 0.0 {
                    return Err(Error::invalid("geometric grid needs max > 0, 0 < ratio < 1, count >= 1"));
                }
                (0..*count).map(|k| max * ratio.powi(k as i32)).collect()
            }
        };
        if mags.is_empty() || mags.iter().any(|&m| m <= 0.0) || mags.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(Error::invalid("eps grid must be positive and strictly decreasing"));
        }
        Ok(mags)
    }
}

fn default_eps_grid() -> EpsGrid {
    EpsGrid::Geometric { max: 0.4, ratio: 0.8, count: 8 }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_phi: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_h: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_max_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct_segments: Option<usize>,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            integrator_tol: None,
            newton_tol: None,
            n_phi: None,
            n_h: None,
            h_max_scale: None,
            direct_segments: None,
        }
    }
}

impl SolverSpec {
    pub fn shoot_opts(&self, expansion_grade: bool) -> crate::distance::ShootOpts {
        let mut o = if expansion_grade {
            crate::distance::ShootOpts::expansion_grade()
        } else {
            crate::distance::ShootOpts::default()
        };
        if let Some(v) = self.integrator_tol {
            o.integrator_tol = v;
        }
        if let Some(v) = self.newton_tol {
            o.newton_tol = v;
        }
        if let Some(v) = self.n_phi {
            o.n_phi = v;
        }
        if let Some(v) = self.n_h {
            o.n_h = v;
        }
        if let Some(v) = self.h_max_scale {
            o.h_max_scale = v;
        }
        o
    }
}

/// Pass/fail thresholds, pinned to the theorem-level targets by default.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceSpec {
    /// Relative error of the fitted sixth-order coefficient vs `k^2/720`.
    pub expansion_rel: f64,
    /// Relative error of `theta''(0)` vs `k/6`.
    pub theta_rel: f64,
    /// Relative error of the -4, -6, 4 bracket limits.
    pub asymptotics_rel: f64,
    /// Relative error of the sigma scalings 1/2 and -1/6.
    pub sigma_rel: f64,
    /// Energy drift along flows.
    pub energy_drift: f64,
    /// Geodesic null case: `|d - |eps||` bound.
    pub geodesic_distance_abs: f64,
    /// Pointwise identity checks (rotation law, c normalization, ...).
    pub identity_abs: f64,
    /// Radial deviation limit error at the smallest grid time.
    pub deviation_limit_abs: f64,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        ToleranceSpec {
            expansion_rel: 0.05,
            theta_rel: 0.05,
            asymptotics_rel: 0.03,
            sigma_rel: 0.01,
            energy_drift: 1e-10,
            geodesic_distance_abs: 1e-10,
            identity_abs: 1e-9,
            deviation_limit_abs: 0.05,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointPair {
    pub p: [f64; 3],
    pub q: [f64; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub structure: StructureSpec,
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<CurveSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geodesic: Option<GeodesicSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<EpsGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<PointPair>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("config parse error: {e}")))
    }

    pub fn eps_magnitudes(&self) -> Result<Vec<f64>> {
        self.epsilons.clone().unwrap_or_else(default_eps_grid).magnitudes()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let cfg = RunConfig::from_json(
            r#"{"structure": {"name": "heisenberg"},
                "experiment": "expand",
                "curve": {"steering": "3*t^2", "span": [-0.45, 0.45]},
                "t0": 0.0}"#,
        )
        .unwrap();
        assert_eq!(cfg.experiment, Experiment::Expand);
        let s = cfg.structure.build().unwrap();
        assert_eq!(s.name(), "heisenberg");
        assert_eq!(cfg.eps_magnitudes().unwrap().len(), 8);
    }

    #[test]
    fn rejects_unknown_keys() {
        let r = RunConfig::from_json(
            r#"{"structure": {"name": "heisenberg"}, "experiment": "curve", "bogus": 1}"#,
        );
        assert!(r.is_err());
    }

    #[test]
    fn rejects_ambiguous_structure() {
        let cfg = RunConfig::from_json(
            r#"{"structure": {"name": "heisenberg", "gauthier": {"u": "0", "v": "0"}},
                "experiment": "curve"}"#,
        )
        .unwrap();
        assert!(cfg.structure.build().is_err());
    }

    #[test]
    fn rejects_malformed_expression() {
        let cfg = RunConfig::from_json(
            r#"{"structure": {"gauthier": {"u": "x*(", "v": "0"}}, "experiment": "curve"}"#,
        )
        .unwrap();
        assert!(cfg.structure.build().is_err());
    }

    #[test]
    fn geometric_eps_grid() {
        let g = EpsGrid::Geometric { max: 0.4, ratio: 0.8, count: 3 };
        let m = g.magnitudes().unwrap();
        assert_eq!(m.len(), 3);
        assert!((m[0] - 0.4).abs() < 1e-15);
        assert!((m[2] - 0.256).abs() < 1e-15);
        assert!(EpsGrid::List(vec![0.1, 0.2]).magnitudes().is_err());
    }
}
