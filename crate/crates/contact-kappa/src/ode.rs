//! Adaptive Dormand-Prince 5(4) integration with dense output.
//!
//! Embedded error control with PI stabilization, FSAL, exact endpoint hits
//! and Hairer's quartic interpolant per accepted step. Checkpointed
//! integration lands on requested output times exactly (no interpolation
//! error at those times), which is what the distance expansion needs.

use crate::error::{Error, Result};

const A: [[f64; 6]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
];
const C: [f64; 6] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0];
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
// 5th-minus-4th order error weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// Hairer dense-output weights
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

#[derive(Clone, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-10, atol: 1e-10, h_max: f64::INFINITY, max_steps: 200_000 }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions { rtol: tol, atol: tol, ..Default::default() }
    }
}

/// One accepted step: `cont` are the interpolation coefficients over
/// `t in [t0, t0 + h]` in Hairer's form.
#[derive(Clone, Debug)]
pub struct Step<const N: usize> {
    pub t0: f64,
    pub h: f64,
    pub cont: [[f64; N]; 5],
}

impl<const N: usize> Step<N> {
    pub fn y_start(&self) -> [f64; N] {
        self.cont[0]
    }

    pub fn eval(&self, t: f64) -> [f64; N] {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = self.cont[0][i]
                + s * (self.cont[1][i]
                    + s1 * (self.cont[2][i] + s * (self.cont[3][i] + s1 * self.cont[4][i])));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct Solution<const N: usize> {
    pub t_start: f64,
    pub t_end: f64,
    pub y_end: [f64; N],
    pub steps: Vec<Step<N>>,
    pub n_accepted: usize,
    pub n_rejected: usize,
}

impl<const N: usize> Solution<N> {
    pub fn direction(&self) -> f64 {
        (self.t_end - self.t_start).signum()
    }

    pub fn contains(&self, t: f64) -> bool {
        let lo = self.t_start.min(self.t_end) - 1e-12;
        let hi = self.t_start.max(self.t_end) + 1e-12;
        t >= lo && t <= hi
    }

    /// Dense evaluation. Fails outside the integrated span.
    pub fn eval(&self, t: f64) -> Result<[f64; N]> {
        if !self.contains(t) {
            return Err(Error::OutOfSpan {
                t,
                a: self.t_start.min(self.t_end),
                b: self.t_start.max(self.t_end),
            });
        }
        if self.steps.is_empty() {
            return Ok(self.y_end);
        }
        let dir = self.direction();
        // binary search for the step whose interval contains t
        let mut lo = 0usize;
        let mut hi = self.steps.len();
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if (t - self.steps[mid].t0) * dir >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(self.steps[lo].eval(t))
    }

    /// Step boundary times (including both endpoints).
    pub fn node_times(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.steps.iter().map(|s| s.t0).collect();
        out.push(self.t_end);
        out
    }

    /// Append a continuation solution produced by integrating onward from
    /// this solution's endpoint.
    pub fn extend(&mut self, next: Solution<N>) {
        self.steps.extend(next.steps);
        self.t_end = next.t_end;
        self.y_end = next.y_end;
        self.n_accepted += next.n_accepted;
        self.n_rejected += next.n_rejected;
    }
}

/// Integrate `y' = rhs(t, y)` from `t0` to `t_end` (either direction).
pub fn integrate<const N: usize, F>(
    mut rhs: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    opts: &OdeOptions,
    store_dense: bool,
) -> Result<Solution<N>>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let span = t_end - t0;
    if span == 0.0 {
        return Ok(Solution {
            t_start: t0,
            t_end,
            y_end: y0,
            steps: Vec::new(),
            n_accepted: 0,
            n_rejected: 0,
        });
    }
    let dir = span.signum();
    let mut t = t0;
    let mut y = y0;
    let mut f0 = rhs(t, &y)?;

    // initial step size from the scaled magnitudes of y and f
    let mut d0: f64 = 0.0;
    let mut d1: f64 = 0.0;
    for i in 0..N {
        let sc = opts.atol + opts.rtol * y[i].abs();
        d0 += (y[i] / sc).powi(2);
        d1 += (f0[i] / sc).powi(2);
    }
    let (d0, d1) = ((d0 / N as f64).sqrt(), (d1 / N as f64).sqrt());
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(span.abs()).min(opts.h_max) * dir;

    let mut steps: Vec<Step<N>> = Vec::new();
    let mut n_accepted = 0usize;
    let mut n_rejected = 0usize;
    let mut facold: f64 = 1e-4;
    const SAFE: f64 = 0.9;
    const BETA: f64 = 0.04;
    const EXPO1: f64 = 0.2 - BETA * 0.75;
    let mut last_rejected = false;

    let mut k = [[0.0; N]; 7];

    loop {
        if n_accepted + n_rejected > opts.max_steps {
            return Err(Error::IntegrationFailure {
                t,
                detail: format!("step budget {} exhausted", opts.max_steps),
            });
        }
        if h.abs() < 1e-15 * (t.abs().max(span.abs()).max(1.0)) {
            return Err(Error::IntegrationFailure { t, detail: "step size underflow".into() });
        }
        let mut final_step = false;
        if (t + h - t_end) * dir >= 0.0 {
            h = t_end - t;
            final_step = true;
        }

        k[0] = f0;
        let mut failed_stage = false;
        for stage in 1..6 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(stage) {
                let a = A[stage][j];
                if a != 0.0 {
                    for i in 0..N {
                        ys[i] += h * a * kj[i];
                    }
                }
            }
            match rhs(t + C[stage] * h, &ys) {
                Ok(val) => k[stage] = val,
                Err(_) if !final_step => {
                    failed_stage = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if failed_stage {
            // stage left the admissible domain; retry with a smaller step
            n_rejected += 1;
            h *= 0.25;
            last_rejected = true;
            continue;
        }

        // 5th order solution (b row equals the last A row, FSAL)
        let mut y5 = y;
        for (j, kj) in k.iter().enumerate().take(6) {
            if B[j] != 0.0 {
                for i in 0..N {
                    y5[i] += h * B[j] * kj[i];
                }
            }
        }
        let f_new = match rhs(t + h, &y5) {
            Ok(val) => val,
            Err(e) => {
                if final_step {
                    return Err(e);
                }
                n_rejected += 1;
                h *= 0.25;
                last_rejected = true;
                continue;
            }
        };
        k[6] = f_new;

        let mut err: f64 = 0.0;
        for i in 0..N {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                if E[j] != 0.0 {
                    e += E[j] * kj[i];
                }
            }
            e *= h;
            let sc = opts.atol + opts.rtol * y[i].abs().max(y5[i].abs());
            err += (e / sc) * (e / sc);
        }
        err = (err / N as f64).sqrt();

        if err.is_nan() || err > 1.0 {
            n_rejected += 1;
            let fac = if err.is_nan() { 4.0 } else { (err.powf(0.2) / SAFE).clamp(1.111, 10.0) };
            h /= fac;
            last_rejected = true;
            continue;
        }

        // accepted
        n_accepted += 1;
        if store_dense {
            let mut cont = [[0.0; N]; 5];
            for i in 0..N {
                let ydiff = y5[i] - y[i];
                let bspl = h * k[0][i] - ydiff;
                cont[0][i] = y[i];
                cont[1][i] = ydiff;
                cont[2][i] = bspl;
                cont[3][i] = ydiff - h * f_new[i] - bspl;
                let mut dsum = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    if D[j] != 0.0 {
                        dsum += D[j] * kj[i];
                    }
                }
                cont[4][i] = h * dsum;
            }
            steps.push(Step { t0: t, h, cont });
        }

        t += h;
        y = y5;
        f0 = f_new;
        if final_step {
            return Ok(Solution { t_start: t0, t_end, y_end: y, steps, n_accepted, n_rejected });
        }

        let fac11 = err.max(1e-16).powf(EXPO1);
        let mut fac = fac11 / facold.powf(BETA);
        fac = (fac / SAFE).clamp(0.2, 10.0);
        let mut h_new = h / fac;
        if last_rejected {
            h_new = if h_new.abs() > h.abs() { h } else { h_new };
            last_rejected = false;
        }
        facold = err.max(1e-4);
        h = if h_new.abs() > opts.h_max { opts.h_max * dir } else { h_new };
    }
}

/// Integrate through a strictly monotone list of output times, hitting each
/// exactly. Returns the state at every requested time plus the merged dense
/// solution over the full range.
pub fn integrate_checkpoints<const N: usize, F>(
    mut rhs: F,
    t0: f64,
    y0: [f64; N],
    times: &[f64],
    opts: &OdeOptions,
    store_dense: bool,
) -> Result<(Solution<N>, Vec<[f64; N]>)>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    if times.is_empty() {
        return Err(Error::invalid("checkpoint list is empty"));
    }
    let dir = (times[times.len() - 1] - t0).signum();
    for w in times.windows(2) {
        if (w[1] - w[0]) * dir <= 0.0 {
            return Err(Error::invalid("checkpoint times must be strictly monotone"));
        }
    }
    let mut states = Vec::with_capacity(times.len());
    let mut merged: Option<Solution<N>> = None;
    let mut t = t0;
    let mut y = y0;
    for &tk in times {
        if tk == t {
            states.push(y);
            continue;
        }
        let seg = integrate(&mut rhs, t, y, tk, opts, store_dense)?;
        t = seg.t_end;
        y = seg.y_end;
        states.push(y);
        match merged.as_mut() {
            Some(m) => m.extend(seg),
            None => merged = Some(seg),
        }
    }
    let merged = merged.unwrap_or(Solution {
        t_start: t0,
        t_end: t0,
        y_end: y0,
        steps: Vec::new(),
        n_accepted: 0,
        n_rejected: 0,
    });
    Ok((merged, states))
}
