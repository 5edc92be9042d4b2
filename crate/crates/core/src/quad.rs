//! Adaptive Gauss–Kronrod quadrature for complex-valued integrands.

use std::collections::BinaryHeap;
use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::linalg::C64;

// 15-point Kronrod nodes (non-negative half) and weights, with the embedded
// 7-point Gauss weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Stopping rule for adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel, max_intervals: 4000 }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::new(1e-13, 1e-10)
    }
}

fn gk15(f: &mut impl FnMut(f64) -> C64, a: f64, b: f64) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for k in 0..7 {
        let dx = h * XGK[k];
        let s = f(c - dx) + f(c + dx);
        kronrod += s * WGK[k];
        if k % 2 == 1 {
            gauss += s * WG[k / 2];
        }
    }
    let kronrod = kronrod * h;
    let gauss = gauss * h;
    (kronrod, (kronrod - gauss).norm())
}

/// Nodes and weights of the 15-point Kronrod rule on `[a, b]`, ascending.
pub fn kronrod_rule(a: f64, b: f64) -> [(f64, f64); 15] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut out = [(0.0, 0.0); 15];
    for k in 0..7 {
        out[k] = (c - h * XGK[k], h * WGK[k]);
        out[14 - k] = (c + h * XGK[k], h * WGK[k]);
    }
    out[7] = (c, h * WGK[7]);
    out
}

/// Single non-adaptive 15-point Kronrod estimate over `[a, b]`.
pub fn kronrod(mut f: impl FnMut(f64) -> C64, a: f64, b: f64) -> C64 {
    gk15(&mut f, a, b).0
}

struct Segment {
    a: f64,
    b: f64,
    value: C64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive integration of `f` over `[a, b]`.
pub fn integrate(mut f: impl FnMut(f64) -> C64, a: f64, b: f64, tol: Tolerance) -> Result<C64> {
    integrate_breaks(&mut f, &[a, b], tol)
}

/// Adaptive integration over consecutive intervals of `breaks` (kinks or
/// oscillation scales of the integrand should be listed there).
pub fn integrate_breaks(f: &mut impl FnMut(f64) -> C64, breaks: &[f64], tol: Tolerance) -> Result<C64> {
    let mut heap = BinaryHeap::new();
    let mut total = C64::new(0.0, 0.0);
    let mut err = 0.0;
    for w in breaks.windows(2) {
        if w[1] == w[0] {
            continue;
        }
        let (value, error) = gk15(f, w[0], w[1]);
        total += value;
        err += error;
        heap.push(Segment { a: w[0], b: w[1], value, error });
    }
    let mut count = heap.len();
    while err > tol.abs.max(tol.rel * total.norm()) {
        if count >= tol.max_intervals {
            return Err(Error::QuadratureFailure(format!(
                "no convergence after {count} subintervals (error estimate {err:e}, value {total})"
            )));
        }
        let Some(seg) = heap.pop() else { break };
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // Interval cannot be split further in floating point.
            heap.push(Segment { error: 0.0, ..seg });
            err = heap.iter().map(|s| s.error).sum();
            if err > tol.abs.max(tol.rel * total.norm()) {
                return Err(Error::QuadratureFailure("interval collapse".into()));
            }
            break;
        }
        let (v1, e1) = gk15(f, seg.a, mid);
        let (v2, e2) = gk15(f, mid, seg.b);
        total += v1 + v2 - seg.value;
        err += e1 + e2 - seg.error;
        heap.push(Segment { a: seg.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: seg.b, value: v2, error: e2 });
        count += 1;
    }
    Ok(total)
}

/// Integral over `[a, ∞)` of an integrand decaying on the length `scale`.
///
/// The half line is cut into panels `[a, a+scale], [a+scale, a+3 scale], ...`
/// of geometrically growing width (capped at `max_panel` so oscillations stay
/// resolved). Panels are added until the tail estimate `|piece| (hi - a) / width`,
/// which bounds algebraic tails decaying at least as `t^-2`, falls below the
/// tolerance twice in a row, or `horizon` is reached.
pub fn integrate_half_line(
    mut f: impl FnMut(f64) -> C64,
    a: f64,
    scale: f64,
    max_panel: f64,
    horizon: f64,
    tol: Tolerance,
) -> Result<C64> {
    let mut total = C64::new(0.0, 0.0);
    let mut lo = a;
    let mut width = scale.min(max_panel);
    let mut small = 0;
    let panel_tol = Tolerance { abs: tol.abs * 0.1, ..tol };
    while lo < a + horizon {
        let hi = lo + width;
        let piece = integrate_breaks(&mut f, &[lo, hi], panel_tol)?;
        total += piece;
        if piece.norm() * (hi - a) / width <= tol.abs.max(tol.rel * total.norm()) {
            small += 1;
            if small >= 2 {
                return Ok(total);
            }
        } else {
            small = 0;
        }
        lo = hi;
        width = (width * 1.5).min(max_panel);
    }
    Ok(total)
}

/// Complex trigamma `ψ'(z) = Σ_{k≥0} (z+k)^-2` for `Re z > 0`.
pub fn trigamma(mut z: C64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    while z.re < 12.0 {
        acc += (z * z).inv();
        z += 1.0;
    }
    // Asymptotic series with Bernoulli numbers B_2k.
    let w = z.inv();
    let w2 = w * w;
    let series = w
        + w2 * 0.5
        + w * w2
            * (1.0 / 6.0
                + w2 * (-1.0 / 30.0
                    + w2 * (1.0 / 42.0
                        + w2 * (-1.0 / 30.0 + w2 * (5.0 / 66.0 + w2 * (-691.0 / 2730.0 + w2 * (7.0 / 6.0)))))));
    acc + series
}
