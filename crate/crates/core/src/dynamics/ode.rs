//! Adaptive Dormand–Prince 5(4) integrator over complex state vectors, with
//! the standard fourth-order continuous extension for output between steps.
//!
//! Integration may run forward or backward in time; the direction is fixed by
//! the sign of `t_end - t0`.

use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// First trial step; chosen heuristically when `None`.
    pub h_init: Option<f64>,
    /// Cap on the step magnitude; unlimited when `None`.
    pub h_max: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, h_init: None, h_max: None, max_steps: 1_000_000 }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Stepper state. `y` always holds the solution at `t`; after a step the
/// interval `[t_prev, t]` can be sampled through [`DormandPrince::dense`].
pub struct DormandPrince {
    opts: OdeOptions,
    pub t: f64,
    pub y: Vec<C64>,
    t_prev: f64,
    h: f64,
    dir: f64,
    k: [Vec<C64>; 7],
    ytmp: Vec<C64>,
    ynew: Vec<C64>,
    cont: [Vec<C64>; 5],
    fsal_valid: bool,
    pub steps: usize,
}

impl DormandPrince {
    pub fn new(t0: f64, y0: Vec<C64>, direction: f64, opts: OdeOptions) -> Self {
        let n = y0.len();
        let z = || vec![C64::new(0.0, 0.0); n];
        Self {
            opts,
            t: t0,
            t_prev: t0,
            y: y0,
            h: 0.0,
            dir: if direction < 0.0 { -1.0 } else { 1.0 },
            k: [z(), z(), z(), z(), z(), z(), z()],
            ytmp: z(),
            ynew: z(),
            cont: [z(), z(), z(), z(), z()],
            fsal_valid: false,
            steps: 0,
        }
    }

    /// Restarts from `(t, y)`, e.g. after a discontinuous update. The step
    /// size estimate is kept.
    pub fn restart(&mut self, t: f64, y: &[C64]) {
        self.t = t;
        self.t_prev = t;
        self.y.copy_from_slice(y);
        self.fsal_valid = false;
    }

    pub fn t_prev(&self) -> f64 {
        self.t_prev
    }

    fn scale(&self, a: C64, b: C64) -> f64 {
        self.opts.atol + self.opts.rtol * a.norm().max(b.norm())
    }

    fn initial_step<F>(&mut self, f: &mut F, span: f64) -> f64
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        if let Some(h) = self.opts.h_init {
            return h.abs().min(span);
        }
        f(self.t, &self.y, &mut self.k[0]);
        self.fsal_valid = true;
        let (mut d0, mut d1) = (0.0f64, 0.0f64);
        for (yi, ki) in self.y.iter().zip(&self.k[0]) {
            let sc = self.scale(*yi, *yi);
            d0 += (yi.norm() / sc).powi(2);
            d1 += (ki.norm() / sc).powi(2);
        }
        let n = self.y.len().max(1) as f64;
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 * span } else { 0.01 * d0 / d1 };
        h.min(span)
    }

    /// Advances by one accepted step without passing `t_limit`.
    pub fn step<F>(&mut self, f: &mut F, t_limit: f64) -> Result<()>
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        let remaining = (t_limit - self.t) * self.dir;
        if remaining <= 0.0 {
            return Ok(());
        }
        if self.h == 0.0 {
            self.h = self.initial_step(f, remaining);
        }
        if !self.fsal_valid {
            f(self.t, &self.y, &mut self.k[0]);
            self.fsal_valid = true;
        }
        let n = self.y.len();
        let tiny = 1e-14 * self.t.abs().max(remaining);
        loop {
            let mut h = self.h.min(remaining);
            if let Some(hm) = self.opts.h_max {
                h = h.min(hm);
            }
            // Avoid leaving a sliver shorter than the round-off scale.
            if remaining - h < 1e-9 * h {
                h = remaining;
            }
            if h <= tiny {
                return Err(Error::Integrator { time: self.t, reason: "step size underflow".into() });
            }
            let hs = h * self.dir;
            let t = self.t;

            macro_rules! stage {
                ($dst:expr, $c:expr, [$(($a:expr, $ki:expr)),*]) => {{
                    for i in 0..n {
                        let mut acc = self.y[i];
                        $( acc += self.k[$ki][i] * ($a * hs); )*
                        self.ytmp[i] = acc;
                    }
                    f(t + $c * hs, &self.ytmp, &mut self.k[$dst]);
                }};
            }
            stage!(1, C2, [(A21, 0)]);
            stage!(2, C3, [(A31, 0), (A32, 1)]);
            stage!(3, C4, [(A41, 0), (A42, 1), (A43, 2)]);
            stage!(4, C5, [(A51, 0), (A52, 1), (A53, 2), (A54, 3)]);
            stage!(5, 1.0, [(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)]);
            for i in 0..n {
                self.ynew[i] = self.y[i]
                    + (self.k[0][i] * A71
                        + self.k[2][i] * A73
                        + self.k[3][i] * A74
                        + self.k[4][i] * A75
                        + self.k[5][i] * A76)
                        * hs;
            }
            f(t + hs, &self.ynew, &mut self.k[6]);
            let mut err = 0.0;
            for i in 0..n {
                let e = (self.k[0][i] * E1
                    + self.k[2][i] * E3
                    + self.k[3][i] * E4
                    + self.k[4][i] * E5
                    + self.k[5][i] * E6
                    + self.k[6][i] * E7)
                    * hs;
                let sc = self.scale(self.y[i], self.ynew[i]);
                // Max norm: density matrices are mostly zeros, which would
                // dilute an RMS estimate.
                err = f64::max(err, e.norm() / sc);
            }
            if !err.is_finite() {
                self.h = 0.2 * h;
                continue;
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                for i in 0..n {
                    let dy = self.ynew[i] - self.y[i];
                    let bspl = self.k[0][i] * hs - dy;
                    self.cont[0][i] = self.y[i];
                    self.cont[1][i] = dy;
                    self.cont[2][i] = bspl;
                    self.cont[3][i] = dy - self.k[6][i] * hs - bspl;
                    self.cont[4][i] = (self.k[0][i] * D1
                        + self.k[2][i] * D3
                        + self.k[3][i] * D4
                        + self.k[4][i] * D5
                        + self.k[5][i] * D6
                        + self.k[6][i] * D7)
                        * hs;
                }
                self.t_prev = t;
                self.t = if h == remaining { t_limit } else { t + hs };
                std::mem::swap(&mut self.y, &mut self.ynew);
                self.k.swap(0, 6);
                self.h = h * fac;
                self.steps += 1;
                if self.steps > self.opts.max_steps {
                    return Err(Error::Integrator { time: self.t, reason: "step budget exhausted".into() });
                }
                return Ok(());
            }
            self.h = h * fac.min(1.0);
        }
    }

    /// Continuous extension on the last accepted step, `t` in `[t_prev, t]`.
    pub fn dense(&self, t: f64, out: &mut [C64]) {
        let span = self.t - self.t_prev;
        let theta = if span == 0.0 { 1.0 } else { (t - self.t_prev) / span };
        let th1 = 1.0 - theta;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.cont[0][i]
                + (self.cont[1][i]
                    + (self.cont[2][i] + (self.cont[3][i] + self.cont[4][i] * th1) * theta) * th1)
                    * theta;
        }
    }
}

/// Integrates `y' = f(t, y)` from `(t0, y0)` and returns the solution at every
/// entry of `t_out`, which must be monotone in the integration direction and
/// must not precede `t0`.
pub fn integrate<F>(mut f: F, t0: f64, y0: &[C64], t_out: &[f64], opts: OdeOptions) -> Result<Vec<Vec<C64>>>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let Some(&t_end) = t_out.last() else {
        return Ok(Vec::new());
    };
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    for w in t_out.windows(2) {
        if (w[1] - w[0]) * dir <= 0.0 {
            return Err(Error::InvalidParameter("output times must be strictly monotone".into()));
        }
    }
    if (t_out[0] - t0) * dir < 0.0 {
        return Err(Error::InvalidParameter("output times precede the initial time".into()));
    }
    let mut dp = DormandPrince::new(t0, y0.to_vec(), dir, opts);
    let mut out = Vec::with_capacity(t_out.len());
    let mut buf = vec![C64::new(0.0, 0.0); y0.len()];
    for &to in t_out {
        while (to - dp.t) * dir > 0.0 {
            dp.step(&mut f, t_end)?;
        }
        if to == dp.t {
            out.push(dp.y.clone());
        } else {
            dp.dense(to, &mut buf);
            out.push(buf.clone());
        }
    }
    Ok(out)
}
