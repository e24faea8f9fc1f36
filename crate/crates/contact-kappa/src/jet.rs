//! Truncated Taylor data (jets) of scalar quantities in three chart variables.
//!
//! A [`Jet`] carries the value of a quantity together with its partial
//! derivatives up to a requested order (at most 3). All arithmetic propagates
//! derivatives exactly (forward mode), so Lie brackets computed downstream are
//! accurate to machine precision rather than finite-difference precision.
//!
//! The cap at order 3 is what the geometry needs: the derived Reeb field
//! consumes two derivative orders of the frame coefficients (one for the
//! bracket `[X1,X2]`, one for the correction coefficients), and brackets
//! *with* the Reeb field consume one more.

/// Highest supported derivative order.
pub const MAX_ORDER: usize = 3;

/// Symmetric index into the Hessian storage, `i <= j`.
#[inline]
fn hidx(i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < 3);
    i * (7 - i) / 2 + (j - i)
}

// full symmetric lookup tables so the hot loops never sort indices
pub const H_AT: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];
pub const H_PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
pub const T_TRIPLES: [(usize, usize, usize); 10] = [
    (0, 0, 0),
    (0, 0, 1),
    (0, 0, 2),
    (0, 1, 1),
    (0, 1, 2),
    (0, 2, 2),
    (1, 1, 1),
    (1, 1, 2),
    (1, 2, 2),
    (2, 2, 2),
];
pub const T_AT: [[[usize; 3]; 3]; 3] = [
    [[0, 1, 2], [1, 3, 4], [2, 4, 5]],
    [[1, 3, 4], [3, 6, 7], [4, 7, 8]],
    [[2, 4, 5], [4, 7, 8], [5, 8, 9]],
];

/// Symmetric index into the third-derivative storage, `i <= j <= k`.
#[inline]
fn tidx(i: usize, j: usize, k: usize) -> usize {
    debug_assert!(i <= j && j <= k && k < 3);
    match (i, j, k) {
        (0, 0, 0) => 0,
        (0, 0, 1) => 1,
        (0, 0, 2) => 2,
        (0, 1, 1) => 3,
        (0, 1, 2) => 4,
        (0, 2, 2) => 5,
        (1, 1, 1) => 6,
        (1, 1, 2) => 7,
        (1, 2, 2) => 8,
        (2, 2, 2) => 9,
        _ => unreachable!(),
    }
}

#[inline]
fn sort2(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[inline]
fn sort3(a: usize, b: usize, c: usize) -> (usize, usize, usize) {
    let (a, b) = sort2(a, b);
    let (b, c) = sort2(b, c);
    let (a, b) = sort2(a, b);
    (a, b, c)
}

/// Value plus partial derivatives up to `order` at a point of the chart.
///
/// Second and third derivatives are stored once per unordered index tuple,
/// so symmetry under index permutation holds by construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub order: usize,
    pub v: f64,
    pub g: [f64; 3],
    pub h: [f64; 6],
    pub t: [f64; 10],
}

impl Jet {
    #[inline]
    pub fn constant(v: f64, order: usize) -> Self {
        debug_assert!(order <= MAX_ORDER);
        Jet { order, v, g: [0.0; 3], h: [0.0; 6], t: [0.0; 10] }
    }

    /// Jet of the chart coordinate `slot` at value `x`.
    #[inline]
    pub fn variable(slot: usize, x: f64, order: usize) -> Self {
        let mut j = Jet::constant(x, order);
        if order >= 1 {
            j.g[slot] = 1.0;
        }
        j
    }

    #[inline]
    pub fn hess(&self, i: usize, j: usize) -> f64 {
        let (i, j) = sort2(i, j);
        self.h[hidx(i, j)]
    }

    #[inline]
    pub fn third(&self, i: usize, j: usize, k: usize) -> f64 {
        let (i, j, k) = sort3(i, j, k);
        self.t[tidx(i, j, k)]
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite()
            && self.g.iter().all(|x| x.is_finite())
            && self.h.iter().all(|x| x.is_finite())
            && self.t.iter().all(|x| x.is_finite())
    }

    /// Jet of the partial derivative along `dir`, one order lower.
    #[inline]
    pub fn partial(&self, dir: usize) -> Jet {
        debug_assert!(self.order >= 1);
        let order = self.order - 1;
        let mut out = Jet::constant(self.g[dir], order);
        if order >= 1 {
            for i in 0..3 {
                out.g[i] = self.h[H_AT[i][dir]];
            }
        }
        if order >= 2 {
            for (n, &(i, j)) in H_PAIRS.iter().enumerate() {
                let (a, b, c) = sort3(i, j, dir);
                out.h[n] = self.t[tidx(a, b, c)];
            }
        }
        out
    }

    #[inline]
    pub fn neg(&self) -> Jet {
        let mut out = *self;
        out.v = -out.v;
        for x in out.g.iter_mut() {
            *x = -*x;
        }
        for x in out.h.iter_mut() {
            *x = -*x;
        }
        for x in out.t.iter_mut() {
            *x = -*x;
        }
        out
    }

    #[inline]
    pub fn add(&self, rhs: &Jet) -> Jet {
        let order = self.order.min(rhs.order);
        let mut out = Jet::constant(self.v + rhs.v, order);
        if order >= 1 {
            for i in 0..3 {
                out.g[i] = self.g[i] + rhs.g[i];
            }
        }
        if order >= 2 {
            for i in 0..6 {
                out.h[i] = self.h[i] + rhs.h[i];
            }
        }
        if order >= 3 {
            for i in 0..10 {
                out.t[i] = self.t[i] + rhs.t[i];
            }
        }
        out
    }

    #[inline]
    pub fn sub(&self, rhs: &Jet) -> Jet {
        let order = self.order.min(rhs.order);
        let mut out = Jet::constant(self.v - rhs.v, order);
        if order >= 1 {
            for i in 0..3 {
                out.g[i] = self.g[i] - rhs.g[i];
            }
        }
        if order >= 2 {
            for i in 0..6 {
                out.h[i] = self.h[i] - rhs.h[i];
            }
        }
        if order >= 3 {
            for i in 0..10 {
                out.t[i] = self.t[i] - rhs.t[i];
            }
        }
        out
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Jet {
        let mut out = *self;
        out.v *= s;
        for x in out.g.iter_mut() {
            *x *= s;
        }
        for x in out.h.iter_mut() {
            *x *= s;
        }
        for x in out.t.iter_mut() {
            *x *= s;
        }
        out
    }

    /// Truncated Leibniz product.
    #[inline]
    pub fn mul(&self, rhs: &Jet) -> Jet {
        let order = self.order.min(rhs.order);
        let (f, g) = (self, rhs);
        let mut out = Jet::constant(f.v * g.v, order);
        match order {
            0 => {}
            1 => {
                for i in 0..3 {
                    out.g[i] = f.v * g.g[i] + f.g[i] * g.v;
                }
            }
            2 => {
                for i in 0..3 {
                    out.g[i] = f.v * g.g[i] + f.g[i] * g.v;
                }
                for (n, &(i, j)) in H_PAIRS.iter().enumerate() {
                    out.h[n] =
                        f.v * g.h[n] + f.g[i] * g.g[j] + f.g[j] * g.g[i] + f.h[n] * g.v;
                }
            }
            _ => {
                for i in 0..3 {
                    out.g[i] = f.v * g.g[i] + f.g[i] * g.v;
                }
                for (n, &(i, j)) in H_PAIRS.iter().enumerate() {
                    out.h[n] =
                        f.v * g.h[n] + f.g[i] * g.g[j] + f.g[j] * g.g[i] + f.h[n] * g.v;
                }
                for (n, &(i, j, k)) in T_TRIPLES.iter().enumerate() {
                    let (jk, ik, ij) = (H_AT[j][k], H_AT[i][k], H_AT[i][j]);
                    out.t[n] = f.v * g.t[n]
                        + f.g[i] * g.h[jk]
                        + f.g[j] * g.h[ik]
                        + f.g[k] * g.h[ij]
                        + f.h[jk] * g.g[i]
                        + f.h[ik] * g.g[j]
                        + f.h[ij] * g.g[k]
                        + f.t[n] * g.v;
                }
            }
        }
        out
    }

    /// Composition with a univariate map given by its derivatives
    /// `d = [phi(v), phi'(v), phi''(v), phi'''(v)]` at the jet value.
    #[inline]
    pub fn chain(&self, d: [f64; 4]) -> Jet {
        let f = self;
        let mut out = Jet::constant(d[0], f.order);
        if f.order >= 1 {
            for i in 0..3 {
                out.g[i] = d[1] * f.g[i];
            }
        }
        if f.order >= 2 {
            for (n, &(i, j)) in H_PAIRS.iter().enumerate() {
                out.h[n] = d[2] * f.g[i] * f.g[j] + d[1] * f.h[n];
            }
        }
        if f.order >= 3 {
            for (n, &(i, j, k)) in T_TRIPLES.iter().enumerate() {
                out.t[n] = d[3] * f.g[i] * f.g[j] * f.g[k]
                    + d[2]
                        * (f.h[H_AT[i][j]] * f.g[k]
                            + f.h[H_AT[i][k]] * f.g[j]
                            + f.h[H_AT[j][k]] * f.g[i])
                    + d[1] * f.t[n];
            }
        }
        out
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.v.sin_cos();
        self.chain([s, c, -s, -c])
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.v.sin_cos();
        self.chain([c, -s, -c, s])
    }

    pub fn exp(&self) -> Jet {
        let e = self.v.exp();
        self.chain([e, e, e, e])
    }

    /// Fails when the value is not strictly positive.
    pub fn sqrt(&self) -> Option<Jet> {
        if self.v <= 0.0 {
            return None;
        }
        let r = self.v.sqrt();
        let d1 = 0.5 / r;
        let d2 = -0.25 / (self.v * r);
        let d3 = 0.375 / (self.v * self.v * r);
        Some(self.chain([r, d1, d2, d3]))
    }

    /// Fails when the value is zero.
    pub fn recip(&self) -> Option<Jet> {
        if self.v == 0.0 {
            return None;
        }
        let iv = 1.0 / self.v;
        Some(self.chain([iv, -iv * iv, 2.0 * iv * iv * iv, -6.0 * iv * iv * iv * iv]))
    }

    /// Integer power by repeated multiplication; negative exponents go
    /// through `recip` and fail on a zero base.
    pub fn powi(&self, n: i32) -> Option<Jet> {
        if n < 0 {
            return self.powi(-n)?.recip();
        }
        let mut acc = Jet::constant(1.0, self.order);
        let mut base = *self;
        let mut n = n as u32;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            n >>= 1;
        }
        Some(acc)
    }
}
