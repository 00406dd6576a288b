//! Realization of a two-level control law as lattice height and trap
//! frequency time series, one simplex minimization per time slice.

use std::io::Write;

use crate::csvio::fmt12;
use crate::error::{Error, Result};
use crate::interp::CubicSpline;
use crate::lattice1d::{lr_basis, project_two_level, Grid1D, TrapParameters};
use crate::nelder_mead::nelder_mead;
use crate::protocols::ControlProtocol;
use crate::units::HBAR;

/// Trap properties held fixed during mapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedTrap {
    pub dx_offset: f64,
    pub d_lattice: f64,
    pub mass: f64,
}

impl FixedTrap {
    pub fn params(&self, v0: f64, omega: f64) -> Result<TrapParameters> {
        TrapParameters::new(v0, omega, self.dx_offset, self.d_lattice, self.mass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappingOptions {
    pub n_slices: usize,
    pub grid: Grid1D,
    /// Largest admissible lattice height, J.
    pub v0_max: f64,
    /// Per-slice acceptance threshold on the normalized cost.
    pub residual_threshold: f64,
    /// Weights of the δ and λ errors in the cost.
    pub weights: [f64; 2],
    /// Below δ^id < hold_fraction·ω₀ the lattice height is frozen and only ω
    /// is adjusted to match λ.
    pub hold_fraction: f64,
    pub simplex_tol: f64,
    pub max_iter: usize,
}

impl Default for MappingOptions {
    fn default() -> Self {
        Self {
            n_slices: 551,
            grid: Grid1D::default(),
            v0_max: 1e-28,
            residual_threshold: 1e-6,
            weights: [1.0, 1.0],
            hold_fraction: 1e-3,
            simplex_tol: 1e-7,
            max_iter: 2000,
        }
    }
}

/// V₀(t) and ω(t) on the slice times, with the per-slice matching cost.
#[derive(Debug, Clone, PartialEq)]
pub struct MappedTrajectory {
    pub times: Vec<f64>,
    pub v0_series: Vec<f64>,
    pub omega_series: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl MappedTrajectory {
    pub fn new(times: Vec<f64>, v0_series: Vec<f64>, omega_series: Vec<f64>, residuals: Vec<f64>) -> Result<Self> {
        let n = times.len();
        if n < 2 || v0_series.len() != n || omega_series.len() != n || residuals.len() != n {
            return Err(Error::invalid("trajectory", "series must share a length of at least 2"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("trajectory", "times must be strictly ascending"));
        }
        Ok(Self {
            times,
            v0_series,
            omega_series,
            residuals,
        })
    }

    pub fn t_final(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Cubic interpolant of (V₀, ω) over the slices.
    pub fn interpolant(&self) -> Result<TrajectoryInterpolant> {
        Ok(TrajectoryInterpolant {
            v0: CubicSpline::new(self.times.clone(), self.v0_series.clone())?,
            omega: CubicSpline::new(self.times.clone(), self.omega_series.clone())?,
            t_min: self.times[0],
            t_max: self.t_final(),
        })
    }

    /// CSV with columns t, V0_joule, omega_rad_s, residual.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "V0_joule", "omega_rad_s", "residual"])?;
        for i in 0..self.times.len() {
            w.write_record([
                fmt12(self.times[i]),
                fmt12(self.v0_series[i]),
                fmt12(self.omega_series[i]),
                fmt12(self.residuals[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// (V₀(t), ω(t)) between slices; clamped to the slice range and V₀ ≥ 0.
#[derive(Debug, Clone)]
pub struct TrajectoryInterpolant {
    v0: CubicSpline,
    omega: CubicSpline,
    t_min: f64,
    t_max: f64,
}

impl TrajectoryInterpolant {
    pub fn controls(&self, t: f64) -> (f64, f64) {
        let t = t.clamp(self.t_min, self.t_max);
        (self.v0.eval(t).max(0.0), self.omega.eval(t))
    }
}

/// (δ, λ) realized by the trap (V₀, ω), rad/s.
pub fn realized_controls(fixed: &FixedTrap, v0: f64, omega: f64, grid: &Grid1D) -> Result<(f64, f64)> {
    let params = fixed.params(v0, omega)?;
    let basis = lr_basis(&params, grid)?;
    Ok(project_two_level(&params, &basis, grid))
}

struct SliceProblem<'a> {
    fixed: &'a FixedTrap,
    grid: &'a Grid1D,
    omega0: f64,
    target: (f64, f64),
    weights: [f64; 2],
}

impl SliceProblem<'_> {
    /// Cost in the scaled variables u = V₀/ħω₀ (sign ignored), v = ω/ω₀.
    fn cost(&self, p: [f64; 2]) -> f64 {
        if !(p[1] > 0.0) {
            return f64::INFINITY;
        }
        match realized_controls(self.fixed, p[0].abs() * HBAR * self.omega0, p[1] * self.omega0, self.grid) {
            Ok((d, l)) => self.weighted(d, l),
            Err(_) => f64::INFINITY,
        }
    }

    fn weighted(&self, d: f64, l: f64) -> f64 {
        let (dd, dl) = ((d - self.target.0) / self.omega0, (l - self.target.1) / self.omega0);
        self.weights[0] * dd * dd + self.weights[1] * dl * dl
    }

    /// λ mismatch at fixed V₀ as a function of v = ω/ω₀.
    fn lambda_error(&self, u: f64, v: f64) -> f64 {
        match realized_controls(self.fixed, u * HBAR * self.omega0, v * self.omega0, self.grid) {
            Ok((_, l)) => (l - self.target.1) / self.omega0,
            Err(_) => f64::NAN,
        }
    }
}

/// Root of the λ mismatch in v by secant steps safeguarded with bisection.
fn match_lambda(problem: &SliceProblem, u: f64, v_start: f64, tol: f64) -> Option<f64> {
    let f = |v: f64| problem.lambda_error(u, v);
    // bracket outward from the warm start
    let (mut a, mut b) = (v_start * 0.98, v_start * 1.02);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..60 {
        if fa.is_finite() && fb.is_finite() && fa.signum() != fb.signum() {
            break;
        }
        if fa.abs() < fb.abs() {
            a = (a - 1.6 * (b - a)).max(1e-6);
            fa = f(a);
        } else {
            b += 1.6 * (b - a);
            fb = f(b);
        }
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return None;
    }
    for _ in 0..200 {
        let secant = b - fb * (b - a) / (fb - fa);
        let m = if secant > a.min(b) && secant < a.max(b) { secant } else { 0.5 * (a + b) };
        let fm = f(m);
        if fm.abs() < tol || (b - a).abs() < 1e-15 * b {
            return Some(m);
        }
        if fm.signum() == fa.signum() {
            // Illinois modification keeps the retained end from stalling
            a = m;
            fa = fm;
            fb *= 0.5;
        } else {
            b = m;
            fb = fm;
            fa *= 0.5;
        }
    }
    Some(0.5 * (a + b))
}

/// Map `target` onto (V₀(t), ω(t)) with per-slice warm-started minimization of
/// [(δ^id − δ)² + (λ^id − λ)²]/ω₀².
pub fn map_protocol(
    target: &ControlProtocol,
    fixed: FixedTrap,
    initial_guess: (f64, f64),
    options: &MappingOptions,
) -> Result<MappedTrajectory> {
    map_protocol_with(target, fixed, initial_guess, options, |_, _| {})
}

/// As [`map_protocol`], reporting each finished slice to `progress`.
pub fn map_protocol_with(
    target: &ControlProtocol,
    fixed: FixedTrap,
    initial_guess: (f64, f64),
    options: &MappingOptions,
    mut progress: impl FnMut(usize, usize),
) -> Result<MappedTrajectory> {
    if options.n_slices < 100 {
        return Err(Error::invalid("n_slices", "at least 100 slices"));
    }
    let omega0 = target.eval(0.0)?.0;
    if !(omega0 > 0.0) {
        return Err(Error::invalid("target", "δ(0) must be positive"));
    }
    if !(initial_guess.1 > 0.0) || initial_guess.0 < 0.0 {
        return Err(Error::invalid("initial_guess", "need V0 ≥ 0 and ω > 0"));
    }
    let tf = target.t_final();
    let n = options.n_slices;
    let u_max = options.v0_max / (HBAR * omega0);

    let mut times = Vec::with_capacity(n);
    let mut v0_series = Vec::with_capacity(n);
    let mut omega_series = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    let mut current = [initial_guess.0 / (HBAR * omega0), initial_guess.1 / omega0];
    let mut step: [f64; 2] = [0.05, 0.01];
    let mut held: Option<f64> = None;

    for i in 0..n {
        let t = if i == n - 1 { tf } else { tf * i as f64 / (n - 1) as f64 };
        let problem = SliceProblem {
            fixed: &fixed,
            grid: &options.grid,
            omega0,
            target: target.eval(t)?,
            weights: options.weights,
        };
        if held.is_none() && problem.target.0 < options.hold_fraction * omega0 {
            held = Some(current[0].abs());
        }
        let (best, residual) = match held {
            Some(u) => {
                let tol = options.residual_threshold.sqrt() * 1e-3;
                let v = match_lambda(&problem, u, current[1], tol).ok_or(Error::UnreachableTarget {
                    slice: i,
                    t,
                    residual: f64::INFINITY,
                })?;
                let e = problem.lambda_error(u, v);
                ([u, v], options.weights[1] * e * e)
            }
            None => {
                let scale = [step[0].max(1e-3 * current[0].abs()).max(1e-4), step[1].max(1e-5)];
                let run = |start: [f64; 2], scale: [f64; 2]| {
                    nelder_mead(|p| problem.cost(p), start, scale, options.simplex_tol, options.max_iter)
                };
                let settle = |r: Result<([f64; 2], f64)>| match r {
                    Err(Error::SimplexNotConverged { best, best_value, .. }) => Ok((best, best_value)),
                    other => other,
                };
                let mut found = settle(run(current, scale))?;
                // restart from the optimum, widening the simplex while short
                for widen in [1.0, 4.0, 16.0] {
                    if found.1 <= 1e-2 * options.residual_threshold {
                        break;
                    }
                    let r = settle(run(found.0, [scale[0] * widen, scale[1] * widen]))?;
                    if r.1 < found.1 {
                        found = r;
                    }
                }
                ([found.0[0].abs(), found.0[1]], found.1)
            }
        };
        if !(residual <= options.residual_threshold) || best[0] > u_max {
            return Err(Error::UnreachableTarget { slice: i, t, residual });
        }
        if i > 0 {
            step = [
                (best[0] - current[0].abs()).abs().max(0.02 * step[0]),
                (best[1] - current[1]).abs().max(0.02 * step[1]),
            ];
        }
        current = best;
        times.push(t);
        v0_series.push(best[0] * HBAR * omega0);
        omega_series.push(best[1] * omega0);
        residuals.push(residual);
        progress(i + 1, n);
    }
    MappedTrajectory::new(times, v0_series, omega_series, residuals)
}

/// The (δ, λ) realized along a trajectory, as a tabulated protocol over the
/// slice times.
pub fn realized_protocol(trajectory: &MappedTrajectory, fixed: &FixedTrap, grid: &Grid1D) -> Result<ControlProtocol> {
    let mut delta = Vec::with_capacity(trajectory.times.len());
    let mut lambda = Vec::with_capacity(trajectory.times.len());
    for i in 0..trajectory.times.len() {
        let (d, l) = realized_controls(fixed, trajectory.v0_series[i], trajectory.omega_series[i], grid)?;
        delta.push(d);
        lambda.push(l);
    }
    ControlProtocol::from_samples(
        crate::protocols::ProtocolKind::Tabulated,
        trajectory.times.clone(),
        delta,
        lambda,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice1d::{DEFAULT_DX_OFFSET, DEFAULT_D_LATTICE};
    use crate::protocols::invariant_protocol;
    use crate::units::MASS_RB87;
    use std::f64::consts::PI;
    use std::sync::OnceLock;

    const W0: f64 = 2.0 * PI * 78.0;

    fn fixed() -> FixedTrap {
        FixedTrap {
            dx_offset: DEFAULT_DX_OFFSET,
            d_lattice: DEFAULT_D_LATTICE,
            mass: MASS_RB87,
        }
    }

    fn options() -> MappingOptions {
        MappingOptions {
            n_slices: 101,
            grid: Grid1D::new(-15e-6, 15e-6, 512).unwrap(),
            ..Default::default()
        }
    }

    fn target() -> ControlProtocol {
        invariant_protocol(W0, 190.0, 190.0, 0.055).unwrap()
    }

    fn mapped() -> &'static MappedTrajectory {
        static CELL: OnceLock<MappedTrajectory> = OnceLock::new();
        CELL.get_or_init(|| map_protocol(&target(), fixed(), (0.0, W0), &options()).unwrap())
    }

    #[test]
    fn every_slice_meets_the_threshold() {
        let traj = mapped();
        assert_eq!(traj.times.len(), 101);
        assert!(traj.residuals.iter().all(|&r| r <= 1e-6), "{:?}", traj.residuals);
    }

    #[test]
    fn first_slice_is_the_bare_harmonic_trap() {
        let traj = mapped();
        assert!(traj.v0_series[0] < 1e-4 * HBAR * W0, "{}", traj.v0_series[0] / (HBAR * W0));
        // the coarse finite-difference grid shifts the harmonic gap slightly
        assert!((traj.omega_series[0] / W0 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn lattice_grows_over_the_last_tenth() {
        let traj = mapped();
        let n = traj.times.len();
        for i in n - n / 10..n {
            assert!(traj.v0_series[i] >= traj.v0_series[i - 1], "slice {i}");
        }
        assert!(traj.v0_series[n - 1] > 1.5 * traj.v0_series[n - n / 10]);
    }

    #[test]
    fn warm_starts_do_not_jump() {
        let traj = mapped();
        let n = traj.times.len();
        let scale = |s: &[f64]| s.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - s.iter().cloned().fold(f64::INFINITY, f64::min);
        let (sv, sw) = (scale(&traj.v0_series), scale(&traj.omega_series));
        // slice-to-slice variation of the target, as a fraction of its range
        let samples = target().samples(n).unwrap();
        let frac = samples
            .windows(2)
            .map(|w| ((w[1].1 - w[0].1).abs() + (w[1].2 - w[0].2).abs()) / W0)
            .fold(0.0, f64::max);
        for i in 1..n {
            assert!((traj.v0_series[i] - traj.v0_series[i - 1]).abs() <= 10.0 * frac.max(0.05) * sv, "V0 at {i}");
            assert!((traj.omega_series[i] - traj.omega_series[i - 1]).abs() <= 10.0 * frac.max(0.05) * sw, "ω at {i}");
        }
    }

    #[test]
    fn realized_controls_track_the_target() {
        let traj = mapped();
        let opts = options();
        let target = target();
        for i in (0..traj.times.len()).step_by(10) {
            let (d, l) = realized_controls(&fixed(), traj.v0_series[i], traj.omega_series[i], &opts.grid).unwrap();
            let (dt, lt) = target.eval(traj.times[i]).unwrap();
            assert!((l - lt).abs() < 1e-3 * W0, "{i}: {l} vs {lt}");
            // held slices only match λ
            if dt >= opts.hold_fraction * W0 {
                assert!((d - dt).abs() < 1e-3 * W0, "{i}: {d} vs {dt}");
            }
        }
    }

    #[test]
    fn own_realization_is_a_fixed_point() {
        let traj = mapped();
        let opts = options();
        let copy = realized_protocol(traj, &fixed(), &opts.grid).unwrap();
        let again = map_protocol(&copy, fixed(), (traj.v0_series[0], traj.omega_series[0]), &opts).unwrap();
        assert!(again.residuals.iter().all(|&r| r <= 1e-10), "{:?}", again.residuals);
        for i in 0..traj.times.len() {
            assert!((again.omega_series[i] / traj.omega_series[i] - 1.0).abs() < 1e-4, "{i}");
        }
    }

    #[test]
    fn restarting_a_slice_never_worsens_it() {
        let traj = mapped();
        let opts = options();
        let target = target();
        let i = 40;
        let problem = SliceProblem {
            fixed: &fixed(),
            grid: &opts.grid,
            omega0: W0,
            target: target.eval(traj.times[i]).unwrap(),
            weights: opts.weights,
        };
        let start = [traj.v0_series[i] / (HBAR * W0), traj.omega_series[i] / W0];
        let before = problem.cost(start);
        let (_, after) = crate::nelder_mead::nelder_mead(|p| problem.cost(p), start, [1e-3, 1e-3], 1e-7, 2000).unwrap();
        assert!(after <= before);
    }

    #[test]
    fn capped_lattice_height_is_reported() {
        let opts = MappingOptions {
            v0_max: 2.0 * HBAR * W0,
            ..options()
        };
        match map_protocol(&target(), fixed(), (0.0, W0), &opts) {
            Err(Error::UnreachableTarget { slice, t, .. }) => assert!(slice > 0 && t > 0.0),
            other => panic!("expected an unreachable target, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let opts = MappingOptions { n_slices: 50, ..options() };
        assert!(map_protocol(&target(), fixed(), (0.0, W0), &opts).is_err());
        assert!(map_protocol(&target(), fixed(), (0.0, -1.0), &options()).is_err());
        assert!(MappedTrajectory::new(vec![0.0, 0.0], vec![0.0; 2], vec![1.0; 2], vec![0.0; 2]).is_err());
    }

    #[test]
    fn trajectory_csv_header() {
        let traj = MappedTrajectory::new(vec![0.0, 1.0], vec![0.0, 1e-31], vec![W0, W0], vec![0.0, 0.0]).unwrap();
        let mut out = Vec::new();
        traj.write_csv(&mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().starts_with("t,V0_joule,omega_rad_s,residual\n"));
    }
}
