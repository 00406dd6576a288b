//! Symmetric tridiagonal eigenproblems: Sturm-sequence bisection for the
//! eigenvalues and shifted inverse iteration for the vectors.

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix with diagonal `diag` and off-diagonal `off`
/// (`off[i]` couples rows i and i + 1).
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

const MAX_INVERSE_ITERATIONS: usize = 12;

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::invalid("off", "off-diagonal must be one shorter than the diagonal"));
        }
        if diag.iter().chain(&off).any(|v| !v.is_finite()) {
            return Err(Error::invalid("diag", "entries must be finite"));
        }
        Ok(Self { diag, off })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut acc = self.diag[i] * v[i];
                if i > 0 {
                    acc += self.off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    acc += self.off[i] * v[i + 1];
                }
                acc
            })
            .collect()
    }

    /// Gershgorin interval containing the whole spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// Upper bound on the operator norm.
    pub fn norm_bound(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs())
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        self.count_below_with(x, f64::EPSILON * self.norm_bound().max(f64::MIN_POSITIVE))
    }

    fn count_below_with(&self, x: f64, tiny: f64) -> usize {
        let mut count = 0;
        let mut q = self.diag[0] - x;
        for i in 0..self.len() {
            if i > 0 {
                q = self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / q;
            }
            if q == 0.0 {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The k-th smallest eigenvalue (k = 0 is the lowest).
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        self.bisect(k, &mut lo, &mut hi);
        0.5 * (lo + hi)
    }

    fn bisect(&self, k: usize, lo: &mut f64, hi: &mut f64) {
        let tiny = f64::EPSILON * self.norm_bound().max(f64::MIN_POSITIVE);
        for _ in 0..2000 {
            let mid = 0.5 * (*lo + *hi);
            if mid <= *lo || mid >= *hi {
                break;
            }
            if self.count_below_with(mid, tiny) > k {
                *hi = mid;
            } else {
                *lo = mid;
            }
        }
    }

    /// The lowest `k` eigenvalues in ascending order.
    pub fn lowest_eigenvalues(&self, k: usize) -> Vec<f64> {
        let k = k.min(self.len());
        let (glo, ghi) = self.gershgorin();
        let mut out = Vec::with_capacity(k);
        let mut lo = glo;
        for level in 0..k {
            // each eigenvalue lies above the previous one
            let mut l = lo;
            let mut h = ghi;
            self.bisect(level, &mut l, &mut h);
            let value = 0.5 * (l + h);
            out.push(value);
            lo = l.min(value);
        }
        out
    }

    /// Solve (T − σ)y = b in place with partial pivoting.
    fn solve_shifted(&self, sigma: f64, b: &mut [f64]) {
        let n = self.len();
        let tiny = f64::EPSILON * self.norm_bound().max(f64::MIN_POSITIVE);
        let mut d: Vec<f64> = self.diag.iter().map(|v| v - sigma).collect();
        let mut dl = self.off.clone();
        let mut du = self.off.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = tiny;
        }
        for i in 0..n.saturating_sub(1) {
            if swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - dl[i] * b[i];
            } else {
                b[i + 1] -= dl[i] * b[i];
            }
        }
        b[n - 1] /= d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
        }
    }

    /// Unit eigenvector for the eigenvalue `value`, orthogonal to `previous`.
    pub fn eigenvector(&self, value: f64, level: usize, previous: &[Vec<f64>]) -> Result<Vec<f64>> {
        let n = self.len();
        let scale = self.norm_bound().max(f64::MIN_POSITIVE);
        // deterministic start vector with components along every mode
        let mut v: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_749_895).sin())
            .collect();
        let sigma = value + 4.0 * f64::EPSILON * scale;
        let mut residual = f64::INFINITY;
        for iteration in 1..=MAX_INVERSE_ITERATIONS {
            self.solve_shifted(sigma, &mut v);
            for p in previous {
                let overlap = dot(p, &v);
                for (vi, pi) in v.iter_mut().zip(p) {
                    *vi -= overlap * pi;
                }
            }
            let norm = dot(&v, &v).sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                break;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            let hv = self.apply(&v);
            let rq = dot(&v, &hv);
            residual = hv
                .iter()
                .zip(&v)
                .map(|(h, x)| (h - rq * x).powi(2))
                .sum::<f64>()
                .sqrt();
            if residual <= 1e-10 * scale && iteration >= 2 {
                return Ok(v);
            }
        }
        if residual <= 1e-8 * scale {
            return Ok(v);
        }
        Err(Error::EigenNonConvergence {
            level,
            residual: residual / scale,
            iterations: MAX_INVERSE_ITERATIONS,
        })
    }

    /// Lowest `k` eigenpairs (values ascending, unit 2-norm vectors).
    pub fn lowest_eigenpairs(&self, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let values = self.lowest_eigenvalues(k);
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(values.len());
        for (level, &value) in values.iter().enumerate() {
            let v = self.eigenvector(value, level, &vectors)?;
            vectors.push(v);
        }
        Ok((values, vectors))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn laplacian(n: usize) -> SymTridiag {
        SymTridiag::new(vec![2.0; n], vec![-1.0; n - 1]).unwrap()
    }

    #[test]
    fn discrete_laplacian_spectrum() {
        let n = 200;
        let t = laplacian(n);
        let (values, vectors) = t.lowest_eigenpairs(5).unwrap();
        for (k, (&value, v)) in values.iter().zip(&vectors).enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * PI / (n + 1) as f64).cos();
            assert!((value - exact).abs() < 1e-13, "{value} vs {exact}");
            let hv = t.apply(v);
            let res: f64 = hv.iter().zip(v).map(|(h, x)| (h - value * x).powi(2)).sum::<f64>().sqrt();
            assert!(res < 1e-10);
        }
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&vectors[i], &vectors[j]) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn agrees_with_dense_solver() {
        let n = 40;
        let diag: Vec<f64> = (0..n).map(|i| ((i * 7 % 11) as f64) - 3.0).collect();
        let off: Vec<f64> = (0..n - 1).map(|i| 0.5 + ((i * 3 % 5) as f64) * 0.3).collect();
        let t = SymTridiag::new(diag.clone(), off.clone()).unwrap();
        let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                diag[i]
            } else if i + 1 == j {
                off[i]
            } else if j + 1 == i {
                off[j]
            } else {
                0.0
            }
        });
        let mut exact: Vec<f64> = dense.symmetric_eigen().eigenvalues.iter().copied().collect();
        exact.sort_by(f64::total_cmp);
        let values = t.lowest_eigenvalues(6);
        for k in 0..6 {
            assert!((values[k] - exact[k]).abs() < 1e-12, "{k}: {} vs {}", values[k], exact[k]);
        }
        assert_eq!(t.count_below(exact[3] + 1e-9), 4);
    }

    #[test]
    fn rejects_mismatched_lengths() {
        assert!(SymTridiag::new(vec![1.0, 2.0], vec![]).is_err());
        assert!(SymTridiag::new(vec![], vec![]).is_err());
    }
}
