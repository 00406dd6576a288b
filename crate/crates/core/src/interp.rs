//! Natural cubic spline through tabulated samples.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    // second derivatives at the knots
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::invalid("samples", "need at least two (x, y) pairs of equal length"));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("samples", "abscissae must be strictly ascending"));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior equations
            let mut c_prime = vec![0.0; n];
            let mut d_prime = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let a = h0 / 6.0;
                let b = (h0 + h1) / 3.0;
                let c = h1 / 6.0;
                let d = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
                let denom = b - a * c_prime[i - 1];
                c_prime[i] = c / denom;
                d_prime[i] = (d - a * d_prime[i - 1]) / denom;
            }
            for i in (1..n - 1).rev() {
                m[i] = d_prime[i] - c_prime[i] * m[i + 1];
            }
        }
        Ok(Self { x, y, m })
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        }
    }

    /// Value at `t`; outside the table the end segments are extended.
    pub fn eval(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        (self.y[i + 1] - self.y[i]) / h
            + ((1.0 - 3.0 * a * a) * self.m[i] + (3.0 * b * b - 1.0) * self.m[i + 1]) * h / 6.0
    }

    /// Spline sampled on a uniform grid of `n` points over [x0, x1].
    pub fn from_fn(x0: f64, x1: f64, n: usize, f: impl Fn(f64) -> Result<f64>) -> Result<Self> {
        let xs: Vec<f64> = (0..n)
            .map(|k| x0 + (x1 - x0) * k as f64 / (n - 1) as f64)
            .collect();
        let ys = xs.iter().map(|&x| f(x)).collect::<Result<Vec<_>>>()?;
        Self::new(xs, ys)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_knots_and_lines() {
        let s = CubicSpline::new(vec![0.0, 1.0, 2.5, 3.0], vec![1.0, 3.0, 6.0, 7.0]).unwrap();
        assert!((s.eval(1.0) - 3.0).abs() < 1e-14);
        assert!((s.eval(2.5) - 6.0).abs() < 1e-14);
        let line = CubicSpline::new(vec![0.0, 0.3, 1.0, 2.0], vec![1.0, 1.6, 3.0, 5.0]).unwrap();
        for t in [0.1, 0.7, 1.9] {
            assert!((line.eval(t) - (1.0 + 2.0 * t)).abs() < 1e-13);
            assert!((line.derivative(t) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn smooth_function_accuracy() {
        let s = CubicSpline::from_fn(0.0, 3.0, 401, |x| Ok(x.sin())).unwrap();
        for k in 0..100 {
            let t = 0.2 + 2.6 * k as f64 / 99.0;
            assert!((s.eval(t) - t.sin()).abs() < 1e-8);
            assert!((s.derivative(t) - t.cos()).abs() < 1e-5);
        }
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(CubicSpline::new(vec![0.0], vec![1.0]).is_err());
        assert!(CubicSpline::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
    }
}
