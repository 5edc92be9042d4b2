//! Natural cubic spline on a uniform grid with complex samples.

use crate::error::{Error, Result};
use crate::linalg::C64;

#[derive(Debug, Clone)]
pub struct UniformSpline {
    start: f64,
    step: f64,
    values: Vec<C64>,
    // Second derivatives at the knots.
    curvature: Vec<C64>,
}

impl UniformSpline {
    pub fn new(start: f64, step: f64, values: Vec<C64>) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidParameter(format!("spline step must be positive, got {step}")));
        }
        if values.len() < 3 {
            return Err(Error::InvalidParameter("spline needs at least 3 samples".into()));
        }
        let n = values.len();
        let mut curvature = vec![C64::new(0.0, 0.0); n];
        // Thomas algorithm for the interior system
        // m_{i-1} + 4 m_i + m_{i+1} = 6 (y_{i-1} - 2 y_i + y_{i+1}) / h^2.
        let h2 = step * step;
        let mut diag = vec![4.0; n - 2];
        let mut rhs: Vec<C64> = (1..n - 1)
            .map(|i| (values[i - 1] - values[i] * 2.0 + values[i + 1]) * (6.0 / h2))
            .collect();
        for i in 1..n - 2 {
            let w = 1.0 / diag[i - 1];
            diag[i] -= w;
            let prev = rhs[i - 1];
            rhs[i] -= prev * w;
        }
        for i in (0..n - 2).rev() {
            let next = if i + 1 < n - 2 { curvature[i + 2] } else { C64::new(0.0, 0.0) };
            curvature[i + 1] = (rhs[i] - next) / diag[i];
        }
        Ok(Self { start, step, values, curvature })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.start + self.step * (self.values.len() - 1) as f64
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    /// Interpolated value; `None` outside the tabulated range.
    pub fn eval(&self, x: f64) -> Option<C64> {
        let n = self.values.len();
        let u = (x - self.start) / self.step;
        if !(u >= 0.0) || u > (n - 1) as f64 * (1.0 + 1e-14) {
            return None;
        }
        let i = (u.floor() as usize).min(n - 2);
        let b = u - i as f64;
        let a = 1.0 - b;
        let h2 = self.step * self.step / 6.0;
        Some(
            self.values[i] * a
                + self.values[i + 1] * b
                + (self.curvature[i] * (a * a * a - a) + self.curvature[i + 1] * (b * b * b - b)) * h2,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_knots_and_smooth_functions() {
        let f = |x: f64| C64::new(x.sin(), (-x).exp());
        let h = 0.05;
        let values: Vec<C64> = (0..=200).map(|i| f(i as f64 * h)).collect();
        let s = UniformSpline::new(0.0, h, values).unwrap();
        for i in 0..=200 {
            assert!((s.eval(i as f64 * h).unwrap() - f(i as f64 * h)).norm() < 1e-14);
        }
        // Away from the natural end conditions the error is O(h^4).
        for k in 0..100 {
            let x = 1.0 + 0.0731 * k as f64;
            assert!((s.eval(x).unwrap() - f(x)).norm() < 1e-6, "x={x}");
        }
        assert!(s.eval(-0.1).is_none());
        assert!(s.eval(10.5).is_none());
    }

    #[test]
    fn reproduces_straight_lines_exactly() {
        let values: Vec<C64> = (0..10).map(|i| C64::new(2.0 * i as f64 - 1.0, -(i as f64))).collect();
        let s = UniformSpline::new(0.0, 1.0, values).unwrap();
        let v = s.eval(3.3).unwrap();
        assert!((v - C64::new(5.6, -3.3)).norm() < 1e-13);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(UniformSpline::new(0.0, 0.0, vec![C64::new(0.0, 0.0); 4]).is_err());
        assert!(UniformSpline::new(0.0, 1.0, vec![C64::new(0.0, 0.0); 2]).is_err());
    }
}
