//! Dormand–Prince 5(4) integration of complex linear-algebra ODEs.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::C64;

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-9, initial_step: 1e-3, max_steps: 2_000_000 }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order weights are the last row of A; these are fifth minus fourth.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t_out[0]` and returns `y` at every output
/// time (which must be ascending). Steps are clipped to land on output times.
pub fn dopri45(
    mut f: impl FnMut(f64, &DVector<C64>) -> Result<DVector<C64>>,
    y0: DVector<C64>,
    t_out: &[f64],
    opts: OdeOptions,
) -> Result<Vec<DVector<C64>>> {
    let Some(&t0) = t_out.first() else { return Ok(Vec::new()) };
    if t_out.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("output times must be ascending".into()));
    }
    let mut out = Vec::with_capacity(t_out.len());
    out.push(y0.clone());
    let mut t = t0;
    let mut y = y0;
    let mut h = opts.initial_step;
    let mut k1 = f(t, &y)?;
    let mut steps = 0usize;
    let mut k = vec![DVector::zeros(y.len()); 7];
    for &target in &t_out[1..] {
        while t < target {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::IntegratorFailure(format!("exceeded {} steps at t = {t}", opts.max_steps)));
            }
            let last = t + h >= target;
            let step = if last { target - t } else { h };
            k[0] = k1.clone();
            for s in 1..7 {
                let mut ys = y.clone();
                for (r, kr) in k.iter().enumerate().take(s) {
                    if A[s][r] != 0.0 {
                        ys.axpy(C64::new(step * A[s][r], 0.0), kr, C64::new(1.0, 0.0));
                    }
                }
                k[s] = f(t + C[s] * step, &ys)?;
            }
            // k[6] was evaluated at the fifth-order solution (FSAL).
            let mut y_new = y.clone();
            for (r, kr) in k.iter().enumerate().take(6) {
                if A[6][r] != 0.0 {
                    y_new.axpy(C64::new(step * A[6][r], 0.0), kr, C64::new(1.0, 0.0));
                }
            }
            let mut err = 0.0f64;
            for i in 0..y.len() {
                let mut e = C64::new(0.0, 0.0);
                for (s, ks) in k.iter().enumerate() {
                    e += ks[i] * E[s];
                }
                let scale = opts.atol + opts.rtol * y[i].norm().max(y_new[i].norm());
                err = err.max((e * step).norm() / scale);
            }
            if !err.is_finite() || y_new.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::IntegratorFailure(format!("non-finite state at t = {t}")));
            }
            if err <= 1.0 {
                t = if last { target } else { t + step };
                y = y_new;
                k1 = k[6].clone();
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            // Do not let a short final step shrink the working step size.
            if !(last && err <= 1.0) {
                h = step * factor;
            }
            if h < 1e-13 * t.abs().max(1.0) {
                return Err(Error::IntegratorFailure(format!("step size collapsed to {h:e} at t = {t}")));
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}
