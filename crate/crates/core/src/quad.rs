//! Adaptive Simpson quadrature.

use crate::error::Result;

/// ∫_a^b f with adaptive Simpson refinement to `rel_tol` (relative to the
/// running magnitude of the integral).
pub fn adaptive_simpson(f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    // seed with a coarse panel split so narrow features are not skipped
    const PANELS: usize = 16;
    let h = (b - a) / PANELS as f64;
    let mut coarse = Vec::with_capacity(PANELS);
    let mut scale = 0.0;
    for k in 0..PANELS {
        let (x0, x1) = (a + k as f64 * h, a + (k + 1) as f64 * h);
        let xm = 0.5 * (x0 + x1);
        let (f0, fm, f1) = (f(x0)?, f(xm)?, f(x1)?);
        let s = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
        scale += s.abs();
        coarse.push((x0, x1, f0, fm, f1, s));
    }
    let tol = rel_tol * scale.max(f64::MIN_POSITIVE) / PANELS as f64;
    let mut total = 0.0;
    for (x0, x1, f0, fm, f1, s) in coarse {
        total += refine(f, x0, x1, f0, fm, f1, s, tol, 48)?;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn refine(
    f: &dyn Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm)?, f(rm)?);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return Ok(left + right + diff / 15.0);
    }
    Ok(refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}
