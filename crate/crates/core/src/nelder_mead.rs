//! Two-parameter Nelder-Mead simplex minimization.

use crate::error::{Error, Result};

/// Minimize `cost` from `start` with initial simplex steps `scale`.
///
/// Standard coefficients (reflection 1, expansion 2, contraction ½,
/// shrink ½). Stops when the simplex fits within `tol·|scale|` per coordinate
/// or the vertex values spread by less than `tol²`. Returns the best vertex
/// and its value; running out of iterations is an error carrying both.
pub fn nelder_mead(
    mut cost: impl FnMut([f64; 2]) -> f64,
    start: [f64; 2],
    scale: [f64; 2],
    tol: f64,
    max_iter: usize,
) -> Result<([f64; 2], f64)> {
    let f0 = cost(start);
    if !f0.is_finite() {
        return Err(Error::invalid("start", "cost is not finite at the starting point"));
    }
    let mut simplex = [
        (start, f0),
        ([start[0] + scale[0], start[1]], 0.0),
        ([start[0], start[1] + scale[1]], 0.0),
    ];
    for v in simplex.iter_mut().skip(1) {
        v.1 = finite_or_inf(cost(v.0));
    }
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];

    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[2].1 - simplex[0].1;
        let fits = (0..2).all(|k| {
            let lo = simplex.iter().map(|v| v.0[k]).fold(f64::INFINITY, f64::min);
            let hi = simplex.iter().map(|v| v.0[k]).fold(f64::NEG_INFINITY, f64::max);
            hi - lo <= tol * scale[k].abs()
        });
        if fits || spread < tol * tol {
            return Ok(simplex[0]);
        }

        let centroid = lerp(simplex[0].0, simplex[1].0, 0.5);
        let worst = simplex[2];
        let reflected = lerp(worst.0, centroid, 2.0);
        let fr = finite_or_inf(cost(reflected));
        if fr < simplex[0].1 {
            let expanded = lerp(worst.0, centroid, 3.0);
            let fe = finite_or_inf(cost(expanded));
            simplex[2] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr < simplex[1].1 {
            simplex[2] = (reflected, fr);
            continue;
        }
        // contract toward the better of the worst and reflected points
        let (contracted, fc) = if fr < worst.1 {
            let p = lerp(centroid, reflected, 0.5);
            (p, finite_or_inf(cost(p)))
        } else {
            let p = lerp(centroid, worst.0, 0.5);
            (p, finite_or_inf(cost(p)))
        };
        if fc < worst.1.min(fr) {
            simplex[2] = (contracted, fc);
            continue;
        }
        let best = simplex[0].0;
        for v in simplex.iter_mut().skip(1) {
            v.0 = lerp(best, v.0, 0.5);
            v.1 = finite_or_inf(cost(v.0));
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    Err(Error::SimplexNotConverged {
        best: simplex[0].0,
        best_value: simplex[0].1,
        iterations: max_iter,
    })
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let (x, v) = nelder_mead(|p| (p[0] - 3.0).powi(2) + (p[1] + 1.0).powi(2), [0.0, 0.0], [1.0, 1.0], 1e-8, 500).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-7 && (x[1] + 1.0).abs() < 1e-7);
        assert!(v < 1e-14);
    }

    #[test]
    fn rosenbrock() {
        let f = |p: [f64; 2]| (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2);
        let (x, _) = nelder_mead(f, [-1.2, 1.0], [0.5, 0.5], 1e-9, 2000).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-4 && (x[1] - 1.0).abs() < 1e-4, "{x:?}");
    }

    #[test]
    fn constant_cost_returns_start() {
        let (x, v) = nelder_mead(|_| 7.5, [0.3, -0.2], [1.0, 1.0], 1e-6, 100).unwrap();
        assert_eq!(x, [0.3, -0.2]);
        assert_eq!(v, 7.5);
    }

    #[test]
    fn iteration_cap_reports_best() {
        let f = |p: [f64; 2]| (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2);
        match nelder_mead(f, [-1.2, 1.0], [0.5, 0.5], 1e-12, 5) {
            Err(Error::SimplexNotConverged { best_value, iterations, .. }) => {
                assert_eq!(iterations, 5);
                assert!(best_value <= f([-1.2, 1.0]));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_start_is_rejected() {
        assert!(nelder_mead(|_| f64::NAN, [0.0, 0.0], [1.0, 1.0], 1e-6, 10).is_err());
    }
}
