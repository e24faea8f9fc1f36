//! 3D contact sub-Riemannian structures built from a declared orthonormal
//! frame of the distribution.
//!
//! Everything is derived from the two frame fields by brackets and pointwise
//! linear algebra on jets: the normalized contact form (`omega([X1,X2]) = 1`),
//! the Reeb field, structure constants, and the torsion invariants eta, iota,
//! chi. No connection object is ever materialized; the bracket formulas are
//! used throughout.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{Chart, ScalarField};
use crate::jet::Jet;
use crate::linalg::{cross3, det3, dot3, norm3, solve3, M3, V3};

/// A vector field given by three jet-evaluable coefficient expressions.
pub type FieldVec = [ScalarField; 3];

/// A vector (or covector) of jets at a point.
pub type JetVec = [Jet; 3];

const REL_DEGENERACY: f64 = 1e-10;

pub fn jv_values(a: &JetVec) -> V3 {
    [a[0].v, a[1].v, a[2].v]
}

pub fn jv_add(a: &JetVec, b: &JetVec) -> JetVec {
    [a[0].add(&b[0]), a[1].add(&b[1]), a[2].add(&b[2])]
}

pub fn jv_scale_jet(a: &JetVec, s: &Jet) -> JetVec {
    [a[0].mul(s), a[1].mul(s), a[2].mul(s)]
}

pub fn jv_scale(a: &JetVec, s: f64) -> JetVec {
    [a[0].scale(s), a[1].scale(s), a[2].scale(s)]
}

/// Coordinate Lie bracket `[A, B]^k = sum_j A^j d_j B^k - B^j d_j A^k`.
/// The result is one jet order lower than the lesser operand. Fused over
/// the stored derivative entries; this is the hottest kernel in the crate.
pub fn bracket_jets(a: &JetVec, b: &JetVec) -> JetVec {
    use crate::jet::{H_AT, H_PAIRS, T_AT};
    let m = a[0].order.min(b[0].order).saturating_sub(1);
    let mut out = [Jet::constant(0.0, m); 3];
    for kk in 0..3 {
        let (ak, bk) = (&a[kk], &b[kk]);
        let mut v = 0.0;
        for j in 0..3 {
            v += a[j].v * bk.g[j] - b[j].v * ak.g[j];
        }
        out[kk].v = v;
        if m >= 1 {
            for d in 0..3 {
                let mut s = 0.0;
                for j in 0..3 {
                    s += a[j].g[d] * bk.g[j] + a[j].v * bk.h[H_AT[j][d]]
                        - b[j].g[d] * ak.g[j]
                        - b[j].v * ak.h[H_AT[j][d]];
                }
                out[kk].g[d] = s;
            }
        }
        if m >= 2 {
            for (n, &(d, e)) in H_PAIRS.iter().enumerate() {
                let mut s = 0.0;
                for j in 0..3 {
                    s += a[j].h[n] * bk.g[j]
                        + a[j].g[d] * bk.h[H_AT[j][e]]
                        + a[j].g[e] * bk.h[H_AT[j][d]]
                        + a[j].v * bk.t[T_AT[j][d][e]]
                        - b[j].h[n] * ak.g[j]
                        - b[j].g[d] * ak.h[H_AT[j][e]]
                        - b[j].g[e] * ak.h[H_AT[j][d]]
                        - b[j].v * ak.t[T_AT[j][d][e]];
                }
                out[kk].h[n] = s;
            }
        }
    }
    out
}

pub fn cross_jets(a: &JetVec, b: &JetVec) -> JetVec {
    [
        a[1].mul(&b[2]).sub(&a[2].mul(&b[1])),
        a[2].mul(&b[0]).sub(&a[0].mul(&b[2])),
        a[0].mul(&b[1]).sub(&a[1].mul(&b[0])),
    ]
}

/// Pairing of a covector of jets with a vector of jets.
pub fn pair_jets(omega: &JetVec, v: &JetVec) -> Jet {
    omega[0].mul(&v[0]).add(&omega[1].mul(&v[1])).add(&omega[2].mul(&v[2]))
}

/// Solve `a0 * basis0 + a1 * basis1 + a2 * basis2 = target` over jets up to
/// order 1 (values, then gradients by implicit differentiation).
fn decompose_jets(basis: [&JetVec; 3], target: &JetVec, point: V3) -> Result<[Jet; 3]> {
    let m: M3 = [
        [basis[0][0].v, basis[1][0].v, basis[2][0].v],
        [basis[0][1].v, basis[1][1].v, basis[2][1].v],
        [basis[0][2].v, basis[1][2].v, basis[2][2].v],
    ];
    let vals = solve3(&m, jv_values(target)).ok_or(Error::SingularBasis { point })?;
    let order = basis
        .iter()
        .map(|b| b[0].order)
        .min()
        .unwrap()
        .min(target[0].order)
        .min(1);
    let mut out = [
        Jet::constant(vals[0], order),
        Jet::constant(vals[1], order),
        Jet::constant(vals[2], order),
    ];
    if order >= 1 {
        for d in 0..3 {
            // d_d coeffs solve  M (d_d a) = d_d target - (d_d M) a
            let mut rhs = [0.0; 3];
            for row in 0..3 {
                let mut s = target[row].g[d];
                for col in 0..3 {
                    s -= basis[col][row].g[d] * vals[col];
                }
                rhs[row] = s;
            }
            let grads = solve3(&m, rhs).ok_or(Error::SingularBasis { point })?;
            for col in 0..3 {
                out[col].g[d] = grads[col];
            }
        }
    }
    Ok(out)
}

/// Coefficients of a tangent vector on the basis `(X0, X1, X2)` at a point.
#[derive(Clone, Copy, Debug)]
pub struct FrameDecomposition {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

/// Structure constants `c[i][j][k]` of `[X_i, X_j]` on `(X0, X1, X2)`,
/// indices 0, 1, 2 naming X0, X1, X2.
#[derive(Clone, Copy, Debug)]
pub struct StructureConstants {
    pub c: [[[f64; 3]; 3]; 3],
}

/// Torsion invariants at a point: `eta1 = eta(X1)`, `iota1 = iota(X1)` and
/// the frame-independent `chi = sqrt(eta1^2 + iota1^2)`.
#[derive(Clone, Copy, Debug)]
pub struct TorsionData {
    pub eta1: f64,
    pub iota1: f64,
    pub chi: f64,
}

impl TorsionData {
    /// `eta(X_theta)` for `X_theta = cos(theta) X1 + sin(theta) X2`.
    pub fn directional_eta(&self, theta: f64) -> f64 {
        (2.0 * theta).cos() * self.eta1 + (2.0 * theta).sin() * self.iota1
    }

    /// `iota(X_theta)` under the same rotation.
    pub fn directional_iota(&self, theta: f64) -> f64 {
        -(2.0 * theta).sin() * self.eta1 + (2.0 * theta).cos() * self.iota1
    }
}

/// Everything the rest of the crate needs at one point of one structure,
/// computed in a single pass: frame jets (order 3), derived contact form and
/// Reeb field (order 1), structure constants with gradients where jets allow,
/// and the torsion invariants.
#[derive(Clone, Debug)]
pub struct FrameData {
    pub point: V3,
    /// Frame coefficient jets, order 3.
    pub x1: JetVec,
    pub x2: JetVec,
    /// Reeb coefficients, order 1.
    pub x0: JetVec,
    /// Normalized contact form coefficients, order >= 1.
    pub omega: JetVec,
    /// `c_{12}^k` as order-1 jets (value + gradient), k on (X0, X1, X2).
    pub c12: [Jet; 3],
    /// `c_{i0}^k` as order-1 jets for i = 1, 2. Gradients are only
    /// available when the structure carries a Reeb override (order-3 Reeb
    /// jets); otherwise these are value-only and the flow Jacobian falls
    /// back to finite differences for the corresponding row.
    pub ci0: [[Jet; 3]; 2],
    /// Whether `ci0` carries trustworthy gradients.
    pub ci0_grads: bool,
    /// All structure-constant values, antisymmetric in the first two slots.
    pub c: [[[f64; 3]; 3]; 3],
    pub eta1: f64,
    pub iota1: f64,
}

impl FrameData {
    pub fn x1_values(&self) -> V3 {
        jv_values(&self.x1)
    }

    pub fn x2_values(&self) -> V3 {
        jv_values(&self.x2)
    }

    pub fn x0_values(&self) -> V3 {
        jv_values(&self.x0)
    }

    /// Coefficient Jacobian `d_b X^a` of a frame jet vector.
    pub fn jacobian(v: &JetVec) -> M3 {
        let mut m = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] = v[a].g[b];
            }
        }
        m
    }

    /// Decompose a coordinate vector on `(X0, X1, X2)` at this point.
    pub fn decompose(&self, v: V3) -> Result<FrameDecomposition> {
        let m: M3 = [
            [self.x0[0].v, self.x1[0].v, self.x2[0].v],
            [self.x0[1].v, self.x1[1].v, self.x2[1].v],
            [self.x0[2].v, self.x1[2].v, self.x2[2].v],
        ];
        let a = solve3(&m, v).ok_or(Error::SingularBasis { point: self.point })?;
        Ok(FrameDecomposition { a0: a[0], a1: a[1], a2: a[2] })
    }

    /// Velocity of the horizontal direction with steering angle `theta`.
    pub fn horizontal_velocity(&self, theta: f64) -> V3 {
        let (s, c) = theta.sin_cos();
        [
            c * self.x1[0].v + s * self.x2[0].v,
            c * self.x1[1].v + s * self.x2[1].v,
            c * self.x1[2].v + s * self.x2[2].v,
        ]
    }

    /// `omega(v)` for a coordinate vector at this point.
    pub fn omega_pair(&self, v: V3) -> f64 {
        self.omega[0].v * v[0] + self.omega[1].v * v[1] + self.omega[2].v * v[2]
    }

    pub fn torsion(&self) -> TorsionData {
        TorsionData {
            eta1: self.eta1,
            iota1: self.iota1,
            chi: self.eta1.hypot(self.iota1),
        }
    }

    /// Momentum drift `dh0/dt = sum_{i,k} c_{i0}^k h_i h_k` of the
    /// Hamiltonian flow, used both by the flow and its Jacobian row.
    pub fn h0_rate(&self, h1: f64, h2: f64, h0: f64) -> f64 {
        let h = [h0, h1, h2];
        let mut s = 0.0;
        for (i, &hi) in [h1, h2].iter().enumerate() {
            let ci0 = &self.c[i + 1][0];
            for k in 0..3 {
                s += ci0[k] * hi * h[k];
            }
        }
        s
    }
}

/// Where the steering data of a built-in structure comes from.
#[derive(Clone, Debug, PartialEq)]
enum Origin {
    Heisenberg,
    Gauthier { u: String, v: String },
    Custom,
}

/// A 3D contact sub-Riemannian structure on a chart box.
///
/// The frame `(X1, X2)` is declared orthonormal and direct; `J X1 = X2`.
/// Immutable and cheap to share.
#[derive(Clone, Debug)]
pub struct ContactStructure {
    name: String,
    chart: Chart,
    x1: FieldVec,
    x2: FieldVec,
    reeb_override: Option<FieldVec>,
    box_half_width: f64,
    normal_chart: bool,
    origin: Origin,
}

pub type StructureRef = Arc<ContactStructure>;

fn parse_field_vec(srcs: &[String; 3], chart: &Chart) -> Result<FieldVec> {
    Ok([
        ScalarField::parse(&srcs[0], chart)?,
        ScalarField::parse(&srcs[1], chart)?,
        ScalarField::parse(&srcs[2], chart)?,
    ])
}

impl ContactStructure {
    /// Build a structure from six coefficient expressions and validate
    /// bracket generation on a 5x5x5 probe grid over the chart box.
    pub fn from_frame(
        name: &str,
        x1: &[String; 3],
        x2: &[String; 3],
        reeb_override: Option<&[String; 3]>,
        box_half_width: f64,
    ) -> Result<Arc<Self>> {
        let chart = Chart::xyz();
        let s = ContactStructure {
            name: name.to_string(),
            chart: chart.clone(),
            x1: parse_field_vec(x1, &chart)?,
            x2: parse_field_vec(x2, &chart)?,
            reeb_override: match reeb_override {
                Some(r) => Some(parse_field_vec(r, &chart)?),
                None => None,
            },
            box_half_width,
            normal_chart: false,
            origin: Origin::Custom,
        };
        s.validate_probe_grid()?;
        Ok(Arc::new(s))
    }

    /// The Heisenberg group chart: `X1 = (1, 0, -y/2)`, `X2 = (0, 1, x/2)`.
    /// Ships with its known Reeb field, which also makes the flow Jacobian
    /// fully analytic on this structure.
    pub fn heisenberg() -> Arc<Self> {
        let chart = Chart::xyz();
        let parse = |s: &str| ScalarField::parse(s, &chart).unwrap();
        let s = ContactStructure {
            name: "heisenberg".into(),
            x1: [parse("1"), parse("0"), parse("-y/2")],
            x2: [parse("0"), parse("1"), parse("x/2")],
            chart: chart.clone(),
            reeb_override: Some([parse("0"), parse("0"), parse("1")]),
            box_half_width: 1.0,
            normal_chart: true,
            origin: Origin::Heisenberg,
        };
        s.validate_probe_grid().expect("Heisenberg frame is bracket generating");
        Arc::new(s)
    }

    /// Normal-coordinate frame parametrized by two smooth functions `u, v`
    /// that vanish on the z-axis (`v` to first order):
    ///
    /// ```text
    /// X1 = (1 + u y^2,  -u x y,  -(y/2)(1 + v))
    /// X2 = (  -u x y, 1 + u x^2,  (x/2)(1 + v))
    /// ```
    ///
    /// `u = v = 0` recovers the Heisenberg chart.
    pub fn gauthier(u_src: &str, v_src: &str, box_half_width: f64) -> Result<Arc<Self>> {
        let chart = Chart::xyz();
        // parse once to reject bad input with offsets relative to the user source
        ScalarField::parse(u_src, &chart)?;
        ScalarField::parse(v_src, &chart)?;
        let u = format!("({u_src})");
        let v = format!("({v_src})");
        let x1 = [
            format!("1 + {u}*y^2"),
            format!("-({u}*x*y)"),
            format!("-(y/2)*(1 + {v})"),
        ];
        let x2 = [
            format!("-({u}*x*y)"),
            format!("1 + {u}*x^2"),
            format!("(x/2)*(1 + {v})"),
        ];
        let s = ContactStructure {
            name: format!("gauthier(u={u_src}, v={v_src})"),
            chart: chart.clone(),
            x1: parse_field_vec(&x1, &chart)?,
            x2: parse_field_vec(&x2, &chart)?,
            reeb_override: None,
            box_half_width,
            normal_chart: true,
            origin: Origin::Gauthier { u: u_src.into(), v: v_src.into() },
        };
        s.validate_gauthier_axis(u_src, v_src)?;
        s.validate_probe_grid()?;
        Ok(Arc::new(s))
    }

    /// Lift a planar Riemannian frame `(Y1, Y2)` on `(x, y)` and a 1-form
    /// `A = a1 dx + a2 dy` to the contact structure on `(x, y, z)` whose
    /// horizontal curves are the `z = integral of A` lifts. Contact exactly
    /// where `dA` does not vanish, which the probe grid enforces.
    pub fn isoperimetric_lift(
        name: &str,
        y1: &[String; 2],
        y2: &[String; 2],
        a_form: &[String; 2],
        box_half_width: f64,
    ) -> Result<Arc<Self>> {
        let plane = Chart::xy();
        for src in y1.iter().chain(y2.iter()).chain(a_form.iter()) {
            ScalarField::parse(src, &plane)?;
        }
        let lift = |yv: &[String; 2]| -> [String; 3] {
            let (cx, cy) = (format!("({})", yv[0]), format!("({})", yv[1]));
            let (a1, a2) = (format!("({})", a_form[0]), format!("({})", a_form[1]));
            [cx.clone(), cy.clone(), format!("{a1}*{cx} + {a2}*{cy}")]
        };
        let chart = Chart::xyz();
        let x1 = lift(y1);
        let x2 = lift(y2);
        let s = ContactStructure {
            name: name.to_string(),
            chart: chart.clone(),
            x1: parse_field_vec(&x1, &chart)?,
            x2: parse_field_vec(&x2, &chart)?,
            reeb_override: None,
            box_half_width,
            normal_chart: false,
            origin: Origin::Custom,
        };
        s.validate_probe_grid()?;
        Ok(Arc::new(s))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn box_half_width(&self) -> f64 {
        self.box_half_width
    }

    pub fn is_normal_chart(&self) -> bool {
        self.normal_chart
    }

    pub fn in_box(&self, p: V3, slack: f64) -> bool {
        p.iter().all(|c| c.abs() <= self.box_half_width * slack)
    }

    pub fn frame_fields(&self) -> (&FieldVec, &FieldVec) {
        (&self.x1, &self.x2)
    }

    fn validate_gauthier_axis(&self, u_src: &str, v_src: &str) -> Result<()> {
        let chart = Chart::xyz();
        let u = ScalarField::parse(u_src, &chart)?;
        let v = ScalarField::parse(v_src, &chart)?;
        let w = self.box_half_width;
        for &z in &[-w, -w / 2.0, 0.0, w / 2.0, w] {
            let p = [0.0, 0.0, z];
            let uj = u.eval(&p, 0)?;
            let vj = v.eval(&p, 1)?;
            if uj.v.abs() > 1e-9 || vj.v.abs() > 1e-9 || vj.g[0].abs() > 1e-9 || vj.g[1].abs() > 1e-9
            {
                return Err(Error::invalid(format!(
                    "u, v must vanish on the z-axis (v to first order); violated at z = {z}"
                )));
            }
        }
        Ok(())
    }

    fn validate_probe_grid(&self) -> Result<()> {
        let w = self.box_half_width;
        let n = 5;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let f = |m: usize| -w + 2.0 * w * (m as f64) / ((n - 1) as f64);
                    let p = [f(i), f(j), f(k)];
                    let fd = self.frame_data(p)?;
                    if self.reeb_override.is_some() {
                        self.verify_reeb_override(&fd)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Check the defining Reeb identities of an override at a point.
    pub fn verify_reeb_override(&self, fd: &FrameData) -> Result<()> {
        let w = pair_jets(&fd.omega, &fd.x0);
        if (w.v - 1.0).abs() > 1e-9 {
            return Err(Error::ReebOverrideInconsistent {
                point: fd.point,
                detail: format!("omega(X0) = {} instead of 1", w.v),
            });
        }
        for (i, xi) in [&fd.x1, &fd.x2].into_iter().enumerate() {
            let br = bracket_jets(&fd.x0, xi);
            let w = pair_jets(&fd.omega, &br);
            if w.v.abs() > 1e-9 {
                return Err(Error::ReebOverrideInconsistent {
                    point: fd.point,
                    detail: format!("omega([X0, X{}]) = {} instead of 0", i + 1, w.v),
                });
            }
        }
        Ok(())
    }

    /// Evaluate the full per-point frame pipeline. Degeneracy (loss of
    /// bracket generation) is detected here at every evaluation point.
    pub fn frame_data(&self, p: V3) -> Result<FrameData> {
        let x1: JetVec = [
            self.x1[0].eval(&p, 3)?,
            self.x1[1].eval(&p, 3)?,
            self.x1[2].eval(&p, 3)?,
        ];
        let x2: JetVec = [
            self.x2[0].eval(&p, 3)?,
            self.x2[1].eval(&p, 3)?,
            self.x2[2].eval(&p, 3)?,
        ];
        let b12 = bracket_jets(&x1, &x2);

        let x1v = jv_values(&x1);
        let x2v = jv_values(&x2);
        let bv = jv_values(&b12);
        let det = det3(&[x1v, x2v, bv]);
        let scale = norm3(x1v) * norm3(x2v) * norm3(bv) + f64::MIN_POSITIVE;
        if det.abs() <= REL_DEGENERACY * scale {
            return Err(Error::DegenerateFrame {
                point: p,
                detail: format!(
                    "X1, X2, [X1,X2] not linearly independent (relative det {:.3e})",
                    det.abs() / scale
                ),
            });
        }

        // omega from the coordinate cross product, normalized on [X1,X2]
        let omega_raw = cross_jets(&x1, &x2);
        let s = pair_jets(&omega_raw, &b12);
        let s_inv = s.recip().ok_or(Error::DegenerateFrame {
            point: p,
            detail: "omega normalization degenerate".into(),
        })?;
        let omega = jv_scale_jet(&omega_raw, &s_inv);

        // Reeb correction: X0 = [X1,X2] + a X1 + b X2 with
        //   a = -omega([[X1,X2],X2]),  b = omega([[X1,X2],X1])
        let x0 = match &self.reeb_override {
            None => {
                let bb1 = bracket_jets(&b12, &x1);
                let bb2 = bracket_jets(&b12, &x2);
                let b_coef = pair_jets(&omega, &bb1);
                let a_coef = pair_jets(&omega, &bb2).neg();
                jv_add(&b12, &jv_add(&jv_scale_jet(&x1, &a_coef), &jv_scale_jet(&x2, &b_coef)))
            }
            Some(fields) => {
                // identities of the override are verified on the probe grid
                // at build time and in `verify_reeb_override`
                [fields[0].eval(&p, 3)?, fields[1].eval(&p, 3)?, fields[2].eval(&p, 3)?]
            }
        };

        // c_{12}^k with gradients; basis order limits the jets to order 1
        let c12 = decompose_jets([&x0, &x1, &x2], &b12, p)?;

        // brackets with the Reeb field; gradients survive only when the
        // Reeb jets run to order >= 2 (override case)
        let b10 = bracket_jets(&x1, &x0);
        let b20 = bracket_jets(&x2, &x0);
        let c10 = decompose_jets([&x0, &x1, &x2], &b10, p)?;
        let c20 = decompose_jets([&x0, &x1, &x2], &b20, p)?;
        let ci0_grads = c10[0].order >= 1 && c20[0].order >= 1;

        let mut c = [[[0.0; 3]; 3]; 3];
        for k in 0..3 {
            c[1][2][k] = c12[k].v;
            c[2][1][k] = -c12[k].v;
            c[1][0][k] = c10[k].v;
            c[0][1][k] = -c10[k].v;
            c[2][0][k] = c20[k].v;
            c[0][2][k] = -c20[k].v;
        }

        // eta(X1) = g([X1,X0],X1), iota(X1) = (g([X2,X0],X1)+g([X1,X0],X2))/2
        let eta1 = c[1][0][1];
        let iota1 = 0.5 * (c[2][0][1] + c[1][0][2]);

        Ok(FrameData {
            point: p,
            x1,
            x2,
            x0,
            omega,
            c12,
            ci0: [c10, c20],
            ci0_grads,
            c,
            eta1,
            iota1,
        })
    }

    /// Frame coefficient values only; fast path for inner optimization
    /// loops that do not need jets.
    pub fn frame_values(&self, p: V3) -> Result<(V3, V3)> {
        Ok((
            [
                self.x1[0].eval_value(&p)?,
                self.x1[1].eval_value(&p)?,
                self.x1[2].eval_value(&p)?,
            ],
            [
                self.x2[0].eval_value(&p)?,
                self.x2[1].eval_value(&p)?,
                self.x2[2].eval_value(&p)?,
            ],
        ))
    }

    /// Bracket of two expression-valued vector fields at a point.
    pub fn lie_bracket(&self, a: &FieldVec, b: &FieldVec, p: V3) -> Result<V3> {
        let aj: JetVec = [a[0].eval(&p, 1)?, a[1].eval(&p, 1)?, a[2].eval(&p, 1)?];
        let bj: JetVec = [b[0].eval(&p, 1)?, b[1].eval(&p, 1)?, b[2].eval(&p, 1)?];
        Ok(jv_values(&bracket_jets(&aj, &bj)))
    }

    /// The Reeb field as jets up to `jet_order` (at most 1 for derived
    /// Reeb fields; overrides carry more). With an override present the
    /// defining identities are re-verified at the query point.
    pub fn reeb_field(&self, p: V3, jet_order: usize) -> Result<JetVec> {
        assert!(jet_order <= 1, "derived Reeb jets are available up to order 1");
        let fd = self.frame_data(p)?;
        if self.reeb_override.is_some() {
            self.verify_reeb_override(&fd)?;
        }
        Ok(fd.x0)
    }

    pub fn frame_decompose(&self, v: V3, p: V3) -> Result<FrameDecomposition> {
        self.frame_data(p)?.decompose(v)
    }

    pub fn structure_constants(&self, p: V3) -> Result<StructureConstants> {
        Ok(StructureConstants { c: self.frame_data(p)?.c })
    }

    pub fn torsion_invariants(&self, p: V3) -> Result<TorsionData> {
        Ok(self.frame_data(p)?.torsion())
    }

    pub fn directional_eta(&self, p: V3, theta: f64) -> Result<f64> {
        Ok(self.torsion_invariants(p)?.directional_eta(theta))
    }

    pub fn directional_iota(&self, p: V3, theta: f64) -> Result<f64> {
        Ok(self.torsion_invariants(p)?.directional_iota(theta))
    }

    /// Jacobi cyclic sum `[[A,B],C] + [[B,C],A] + [[C,A],B]` of three
    /// expression fields, for the bracket consistency checks.
    pub fn jacobi_cyclic(&self, a: &FieldVec, b: &FieldVec, c: &FieldVec, p: V3) -> Result<V3> {
        let eval = |f: &FieldVec| -> Result<JetVec> {
            Ok([f[0].eval(&p, 3)?, f[1].eval(&p, 3)?, f[2].eval(&p, 3)?])
        };
        let (aj, bj, cj) = (eval(a)?, eval(b)?, eval(c)?);
        let term = |x: &JetVec, y: &JetVec, z: &JetVec| bracket_jets(&bracket_jets(x, y), z);
        let s = jv_add(&jv_add(&term(&aj, &bj, &cj), &term(&bj, &cj, &aj)), &term(&cj, &aj, &bj));
        Ok(jv_values(&s))
    }

    /// Heisenberg chart closed-form shooting seed, exact on the Heisenberg
    /// structure and a useful first guess elsewhere.
    pub fn is_heisenberg(&self) -> bool {
        self.origin == Origin::Heisenberg
    }
}

/// Independent Reeb oracle: solve `omega(X0) = 1`, `d omega(X0, Xi) = 0`
/// as a pointwise 3x3 linear system, with `d omega` from central finite
/// differences of the normalized contact form (step `fd_step`).
///
/// Shares nothing with the bracket-based derivation except the definition
/// of `omega` itself; used by tests and the structure check experiment.
pub fn reeb_oracle(structure: &ContactStructure, p: V3, fd_step: f64) -> Result<V3> {
    let omega_at = |q: V3| -> Result<V3> {
        let (x1f, x2f) = structure.frame_fields();
        let x1 = [
            x1f[0].eval_value(&q)?,
            x1f[1].eval_value(&q)?,
            x1f[2].eval_value(&q)?,
        ];
        let x2 = [
            x2f[0].eval_value(&q)?,
            x2f[1].eval_value(&q)?,
            x2f[2].eval_value(&q)?,
        ];
        let raw = cross3(x1, x2);
        // normalize against the finite-difference bracket [X1, X2]
        let mut br = [0.0; 3];
        for d in 0..3 {
            let mut qp = q;
            let mut qm = q;
            qp[d] += fd_step;
            qm[d] -= fd_step;
            let x2p = [
                x2f[0].eval_value(&qp)?,
                x2f[1].eval_value(&qp)?,
                x2f[2].eval_value(&qp)?,
            ];
            let x2m = [
                x2f[0].eval_value(&qm)?,
                x2f[1].eval_value(&qm)?,
                x2f[2].eval_value(&qm)?,
            ];
            let x1p = [
                x1f[0].eval_value(&qp)?,
                x1f[1].eval_value(&qp)?,
                x1f[2].eval_value(&qp)?,
            ];
            let x1m = [
                x1f[0].eval_value(&qm)?,
                x1f[1].eval_value(&qm)?,
                x1f[2].eval_value(&qm)?,
            ];
            for kk in 0..3 {
                br[kk] += x1[d] * (x2p[kk] - x2m[kk]) / (2.0 * fd_step)
                    - x2[d] * (x1p[kk] - x1m[kk]) / (2.0 * fd_step);
            }
        }
        let s = dot3(raw, br);
        if s == 0.0 {
            return Err(Error::DegenerateFrame { point: q, detail: "oracle normalization".into() });
        }
        Ok(scale3_checked(raw, 1.0 / s))
    };

    let omega0 = omega_at(p)?;
    // dOmega[a][b] = d_a omega_b - d_b omega_a by central differences
    let mut domega = [[0.0; 3]; 3];
    let mut domega_cols = [[0.0; 3]; 3];
    for d in 0..3 {
        let mut qp = p;
        let mut qm = p;
        qp[d] += fd_step;
        qm[d] -= fd_step;
        let op = omega_at(qp)?;
        let om = omega_at(qm)?;
        for b in 0..3 {
            domega_cols[d][b] = (op[b] - om[b]) / (2.0 * fd_step);
        }
    }
    for a in 0..3 {
        for b in 0..3 {
            domega[a][b] = domega_cols[a][b] - domega_cols[b][a];
        }
    }

    let (x1f, x2f) = structure.frame_fields();
    let x1 = [
        x1f[0].eval_value(&p)?,
        x1f[1].eval_value(&p)?,
        x1f[2].eval_value(&p)?,
    ];
    let x2 = [
        x2f[0].eval_value(&p)?,
        x2f[1].eval_value(&p)?,
        x2f[2].eval_value(&p)?,
    ];
    // rows: omega . X0 = 1, (dOmega X1) . X0 = 0, (dOmega X2) . X0 = 0
    let row = |v: V3| -> V3 {
        [
            domega[0][0] * v[0] + domega[1][0] * v[1] + domega[2][0] * v[2],
            domega[0][1] * v[0] + domega[1][1] * v[1] + domega[2][1] * v[2],
            domega[0][2] * v[0] + domega[1][2] * v[1] + domega[2][2] * v[2],
        ]
    };
    let m: M3 = [omega0, row(x1), row(x2)];
    solve3(&m, [1.0, 0.0, 0.0]).ok_or(Error::SingularBasis { point: p })
}

fn scale3_checked(v: V3, s: f64) -> V3 {
    [v[0] * s, v[1] * s, v[2] * s]
}

/// Finite-difference bracket of two expression fields (independent oracle).
pub fn bracket_fd(a: &FieldVec, b: &FieldVec, p: V3, step: f64) -> Result<V3> {
    let val = |f: &FieldVec, q: &V3| -> Result<V3> {
        Ok([f[0].eval_value(q)?, f[1].eval_value(q)?, f[2].eval_value(q)?])
    };
    let av = val(a, &p)?;
    let bv = val(b, &p)?;
    let mut out = [0.0; 3];
    for d in 0..3 {
        let mut qp = p;
        let mut qm = p;
        qp[d] += step;
        qm[d] -= step;
        let bp = val(b, &qp)?;
        let bm = val(b, &qm)?;
        let ap = val(a, &qp)?;
        let am = val(a, &qm)?;
        for kk in 0..3 {
            out[kk] += av[d] * (bp[kk] - bm[kk]) / (2.0 * step)
                - bv[d] * (ap[kk] - am[kk]) / (2.0 * step);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn test_structure() -> Arc<ContactStructure> {
        ContactStructure::gauthier("x^2 + y^2", "z*(x^2 + y^2)", 0.6).unwrap()
    }

    #[test]
    fn heisenberg_basics() {
        let h = ContactStructure::heisenberg();
        for p in [[0.0, 0.0, 0.0], [0.3, -0.8, 0.5]] {
            let fd = h.frame_data(p).unwrap();
            // [X1, X2] = (0, 0, 1) everywhere
            let br = h
                .lie_bracket(h.frame_fields().0, h.frame_fields().1, p)
                .unwrap();
            assert_relative_eq!(br[0], 0.0, epsilon = 1e-14);
            assert_relative_eq!(br[1], 0.0, epsilon = 1e-14);
            assert_relative_eq!(br[2], 1.0, epsilon = 1e-14);
            // Reeb = (0, 0, 1)
            assert_relative_eq!(fd.x0[0].v, 0.0, epsilon = 1e-14);
            assert_relative_eq!(fd.x0[1].v, 0.0, epsilon = 1e-14);
            assert_relative_eq!(fd.x0[2].v, 1.0, epsilon = 1e-14);
            // omega(X0) = 1
            assert_relative_eq!(fd.omega_pair(fd.x0_values()), 1.0, epsilon = 1e-13);
            // c_{12}^0 = 1, everything else 0
            let sc = fd.c;
            assert_relative_eq!(sc[1][2][0], 1.0, epsilon = 1e-13);
            for k in 1..3 {
                assert_relative_eq!(sc[1][2][k], 0.0, epsilon = 1e-13);
            }
            for i in 1..3 {
                for k in 0..3 {
                    assert_relative_eq!(sc[i][0][k], 0.0, epsilon = 1e-13);
                }
            }
            // torsion-free
            let t = fd.torsion();
            assert_relative_eq!(t.eta1, 0.0, epsilon = 1e-12);
            assert_relative_eq!(t.iota1, 0.0, epsilon = 1e-12);
            assert_relative_eq!(t.chi, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn bracket_of_field_with_itself_vanishes() {
        let h = ContactStructure::heisenberg();
        let x1 = h.frame_fields().0;
        let br = h.lie_bracket(x1, x1, [0.2, 0.4, -0.1]).unwrap();
        for c in br {
            assert_relative_eq!(c, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn integrable_distribution_rejected() {
        let x1 = ["1".to_string(), "0".into(), "0".into()];
        let x2 = ["0".to_string(), "1".into(), "0".into()];
        match ContactStructure::from_frame("flat", &x1, &x2, None, 1.0) {
            Err(Error::DegenerateFrame { .. }) => {}
            other => panic!("expected degenerate frame, got {other:?}"),
        }
    }

    #[test]
    fn frame_decompose_examples() {
        let h = ContactStructure::heisenberg();
        let p = [0.4, -0.2, 0.1];
        let fd = h.frame_data(p).unwrap();
        let d = fd.decompose(fd.x1_values()).unwrap();
        assert_relative_eq!(d.a0, 0.0, epsilon = 1e-13);
        assert_relative_eq!(d.a1, 1.0, epsilon = 1e-13);
        assert_relative_eq!(d.a2, 0.0, epsilon = 1e-13);
        let d = fd.decompose([0.0; 3]).unwrap();
        assert_eq!((d.a0, d.a1, d.a2), (0.0, 0.0, 0.0));
        let d = fd.decompose([0.0, 0.0, 1.0]).unwrap();
        assert_relative_eq!(d.a0, 1.0, epsilon = 1e-13);
        // reconstruction residual
        let v = [0.3, -0.7, 0.2];
        let d = fd.decompose(v).unwrap();
        let mut rec = [0.0; 3];
        for i in 0..3 {
            rec[i] =
                d.a0 * fd.x0[i].v + d.a1 * fd.x1[i].v + d.a2 * fd.x2[i].v;
        }
        for i in 0..3 {
            assert_relative_eq!(rec[i], v[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn directional_invariants_rotation() {
        let t = TorsionData { eta1: 0.3, iota1: 0.4, chi: 0.5 };
        assert_relative_eq!(t.directional_eta(0.0), 0.3);
        assert_relative_eq!(
            t.directional_eta(std::f64::consts::FRAC_PI_2),
            -0.3,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            t.directional_eta(std::f64::consts::FRAC_PI_4),
            0.4,
            epsilon = 1e-15
        );
        // eta^2 + iota^2 independent of theta
        for k in 0..16 {
            let th = k as f64 * 0.4;
            let e = t.directional_eta(th);
            let i = t.directional_iota(th);
            assert_relative_eq!(e * e + i * i, 0.25, epsilon = 1e-14);
        }
    }

    #[test]
    fn normalization_holds_on_test_structure() {
        let s = test_structure();
        for p in [[0.1, 0.2, 0.0], [0.3, -0.2, 0.4], [-0.5, 0.5, -0.5]] {
            let fd = s.frame_data(p).unwrap();
            assert_relative_eq!(fd.c[1][2][0], 1.0, epsilon = 1e-10);
            assert_relative_eq!(fd.c[1][0][0], 0.0, epsilon = 1e-9);
            assert_relative_eq!(fd.c[2][0][0], 0.0, epsilon = 1e-9);
            assert_relative_eq!(fd.omega_pair(fd.x0_values()), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn reeb_matches_independent_oracle() {
        let s = test_structure();
        let p = [0.1, 0.2, 0.0];
        let fd = s.frame_data(p).unwrap();
        let oracle = reeb_oracle(&s, p, 1e-5).unwrap();
        for i in 0..3 {
            assert_relative_eq!(fd.x0[i].v, oracle[i], epsilon = 1e-6, max_relative = 1e-6);
        }
    }

    #[test]
    fn structure_constants_match_fd_brackets() {
        let s = test_structure();
        let p = [0.1, 0.2, 0.0];
        let fd = s.frame_data(p).unwrap();
        let (x1f, x2f) = s.frame_fields();
        let br = bracket_fd(x1f, x2f, p, 1e-5).unwrap();
        let dec = fd.decompose(br).unwrap();
        assert_relative_eq!(fd.c[1][2][0], dec.a0, epsilon = 1e-6);
        assert_relative_eq!(fd.c[1][2][1], dec.a1, epsilon = 1e-6);
        assert_relative_eq!(fd.c[1][2][2], dec.a2, epsilon = 1e-6);
    }

    #[test]
    fn torsion_rotation_law_against_bracket_oracle() {
        // eta(X_theta) computed from first principles with a rotated frame
        // must satisfy the cos/sin(2 theta) law.
        let s = test_structure();
        let p = [0.1, 0.2, 0.0];
        let fd = s.frame_data(p).unwrap();
        let t = fd.torsion();
        for k in 0..8 {
            let th = k as f64 * std::f64::consts::PI / 8.0;
            let (sn, cs) = th.sin_cos();
            let xth = jv_add(&jv_scale(&fd.x1, cs), &jv_scale(&fd.x2, sn));
            let jxth = jv_add(&jv_scale(&fd.x1, -sn), &jv_scale(&fd.x2, cs));
            let br = bracket_jets(&xth, &fd.x0);
            let dec = fd.decompose(jv_values(&br)).unwrap();
            // g([X_th, X0], X_th)
            let eta_direct = dec.a1 * cs + dec.a2 * sn;
            assert_relative_eq!(eta_direct, t.directional_eta(th), epsilon = 1e-9);
            // iota via the symmetric combination
            let brj = bracket_jets(&jxth, &fd.x0);
            let decj = fd.decompose(jv_values(&brj)).unwrap();
            let iota_direct = 0.5
                * ((decj.a1 * cs + decj.a2 * sn)
                    + (dec.a1 * (-sn) + dec.a2 * cs));
            assert_relative_eq!(iota_direct, t.directional_iota(th), epsilon = 1e-9);
            // chi^2 frame independence
            assert_relative_eq!(
                eta_direct * eta_direct + iota_direct * iota_direct,
                t.chi * t.chi,
                epsilon = 1e-9 * (1.0 + t.chi * t.chi)
            );
        }
    }

    #[test]
    fn jacobi_identity_numerically() {
        let s = test_structure();
        let (x1f, x2f) = s.frame_fields();
        let p = [0.2, -0.1, 0.3];
        // [[X1,X2],X1] + [[X2,X1],X1]-type cyclic sum with the frame fields
        let sum = s.jacobi_cyclic(x1f, x2f, x1f, p).unwrap();
        for c in sum {
            assert_relative_eq!(c, 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn isoperimetric_flat_lift_is_heisenberg() {
        let y1 = ["1".to_string(), "0".into()];
        let y2 = ["0".to_string(), "1".into()];
        let a = ["-y/2".to_string(), "x/2".into()];
        let s = ContactStructure::isoperimetric_lift("flat-area", &y1, &y2, &a, 1.0).unwrap();
        let h = ContactStructure::heisenberg();
        for p in [[0.0; 3], [0.5, -0.3, 0.2]] {
            let a = s.frame_data(p).unwrap();
            let b = h.frame_data(p).unwrap();
            for i in 0..3 {
                assert_relative_eq!(a.x1[i].v, b.x1[i].v, epsilon = 1e-14);
                assert_relative_eq!(a.x2[i].v, b.x2[i].v, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn isoperimetric_noncontact_rejected() {
        // A = 0 gives dA = 0: integrable, not contact
        let y1 = ["1".to_string(), "0".into()];
        let y2 = ["0".to_string(), "1".into()];
        let a = ["0".to_string(), "0".into()];
        assert!(matches!(
            ContactStructure::isoperimetric_lift("flat-zero", &y1, &y2, &a, 1.0),
            Err(Error::DegenerateFrame { .. })
        ));
    }

    #[test]
    fn reeb_override_checked() {
        let x1 = ["1".to_string(), "0".into(), "-y/2".into()];
        let x2 = ["0".to_string(), "1".into(), "x/2".into()];
        let good = ["0".to_string(), "0".into(), "1".into()];
        let s = ContactStructure::from_frame("h-override", &x1, &x2, Some(&good), 1.0).unwrap();
        let fd = s.frame_data([0.3, 0.1, 0.0]).unwrap();
        assert_relative_eq!(fd.x0[2].v, 1.0);
        let bad = ["0".to_string(), "0".into(), "2".into()];
        assert!(matches!(
            ContactStructure::from_frame("h-bad", &x1, &x2, Some(&bad), 1.0),
            Err(Error::ReebOverrideInconsistent { .. })
        ));
    }
}
