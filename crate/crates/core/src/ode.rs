//! Adaptive Dormand–Prince 5(4) integrator for complex-valued ODEs.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

// Dormand–Prince tableau
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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Clone, Debug)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
    h: Option<f64>,
    pub steps: usize,
    pub rejected: usize,
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, h_max: f64::INFINITY, max_steps: 10_000_000, h: None, steps: 0, rejected: 0 }
    }

    pub fn with_max_step(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    /// Advance `y` from `t0` to `t1`; the step size carries over between calls.
    pub fn integrate<F>(&mut self, mut f: F, t0: f64, t1: f64, y: &mut [C64]) -> Result<()>
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        let span = t1 - t0;
        if span == 0.0 {
            return Ok(());
        }
        if span < 0.0 {
            return Err(Error::invalid("backward integration is not supported"));
        }
        let n = y.len();
        let mut k: Vec<Vec<C64>> = (0..7).map(|_| vec![C64::new(0.0, 0.0); n]).collect();
        let mut tmp = vec![C64::new(0.0, 0.0); n];
        let mut y_new = vec![C64::new(0.0, 0.0); n];
        let mut t = t0;
        let mut h = self.h.unwrap_or(span.min(self.h_max) * 1e-3).min(self.h_max);
        f(t, y, &mut k[0]);
        let mut local_steps = 0usize;
        while t < t1 {
            if local_steps > self.max_steps {
                return Err(Error::Convergence(format!("ODE step budget exhausted at t = {t}")));
            }
            local_steps += 1;
            let last = t + h >= t1;
            let h_try = if last { t1 - t } else { h };
            let stage = |coeffs: &[(usize, f64)], k: &[Vec<C64>], out: &mut [C64]| {
                for i in 0..n {
                    let mut acc = y[i];
                    for &(j, a) in coeffs {
                        acc += k[j][i] * (a * h_try);
                    }
                    out[i] = acc;
                }
            };
            stage(&[(0, A21)], &k, &mut tmp);
            f(t + C2 * h_try, &tmp, &mut k[1]);
            stage(&[(0, A31), (1, A32)], &k, &mut tmp);
            f(t + C3 * h_try, &tmp, &mut k[2]);
            stage(&[(0, A41), (1, A42), (2, A43)], &k, &mut tmp);
            f(t + C4 * h_try, &tmp, &mut k[3]);
            stage(&[(0, A51), (1, A52), (2, A53), (3, A54)], &k, &mut tmp);
            f(t + C5 * h_try, &tmp, &mut k[4]);
            stage(&[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], &k, &mut tmp);
            f(t + h_try, &tmp, &mut k[5]);
            stage(&[(0, B1), (2, B3), (3, B4), (4, B5), (5, B6)], &k, &mut y_new);
            f(t + h_try, &y_new, &mut k[6]);

            let mut err_sq = 0.0;
            for i in 0..n {
                let e = (k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6 + k[6][i] * E7) * h_try;
                let scale = self.atol + self.rtol * y[i].norm().max(y_new[i].norm());
                err_sq += (e.norm() / scale).powi(2);
            }
            let err = (err_sq / n as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::Convergence(format!("non-finite ODE state at t = {t}")));
            }
            if err <= 1.0 {
                t = if last { t1 } else { t + h_try };
                y.copy_from_slice(&y_new);
                let (first, rest) = k.split_at_mut(1);
                first[0].copy_from_slice(&rest[5]);
                self.steps += 1;
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last {
                    h = (h_try * factor).min(self.h_max);
                }
            } else {
                self.rejected += 1;
                h = h_try * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                if h < 1e-14 * span.abs().max(t.abs()) {
                    return Err(Error::Convergence(format!("ODE step size underflow at t = {t}")));
                }
            }
        }
        self.h = Some(h);
        Ok(())
    }
}

/// `steps` equal Dormand–Prince steps (fifth-order solution, no error control).
///
/// The result is a fixed linear map of `y` when `f` is linear, which iterative
/// solvers built on top of it rely on.
pub fn integrate_fixed<F>(mut f: F, t0: f64, t1: f64, steps: usize, y: &mut [C64])
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let n = y.len();
    let h = (t1 - t0) / steps.max(1) as f64;
    let mut k: Vec<Vec<C64>> = (0..6).map(|_| vec![C64::new(0.0, 0.0); n]).collect();
    let mut tmp = vec![C64::new(0.0, 0.0); n];
    for s in 0..steps.max(1) {
        let t = t0 + s as f64 * h;
        let stage = |coeffs: &[(usize, f64)], k: &[Vec<C64>], y: &[C64], out: &mut [C64]| {
            for i in 0..n {
                let mut acc = y[i];
                for &(j, a) in coeffs {
                    acc += k[j][i] * (a * h);
                }
                out[i] = acc;
            }
        };
        f(t, y, &mut k[0]);
        stage(&[(0, A21)], &k, y, &mut tmp);
        f(t + C2 * h, &tmp, &mut k[1]);
        stage(&[(0, A31), (1, A32)], &k, y, &mut tmp);
        f(t + C3 * h, &tmp, &mut k[2]);
        stage(&[(0, A41), (1, A42), (2, A43)], &k, y, &mut tmp);
        f(t + C4 * h, &tmp, &mut k[3]);
        stage(&[(0, A51), (1, A52), (2, A53), (3, A54)], &k, y, &mut tmp);
        f(t + C5 * h, &tmp, &mut k[4]);
        stage(&[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], &k, y, &mut tmp);
        f(t + h, &tmp, &mut k[5]);
        stage(&[(0, B1), (2, B3), (3, B4), (4, B5), (5, B6)], &k, y, &mut tmp);
        y.copy_from_slice(&tmp);
    }
}
