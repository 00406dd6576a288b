//! Split-step Fourier propagation of the 1D Schrödinger and Gross-Pitaevskii
//! equations, ground states by imaginary time, and the fidelity and
//! population diagnostics built on them.

use std::f64::consts::{FRAC_PI_4, PI};
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::csvio::fmt12;
use crate::error::{Error, Result};
use crate::lattice1d::{grid_hamiltonian, hamiltonian_matrix, lowest_eigenpairs, potential, Grid1D, TrapParameters};
use crate::mapping::{FixedTrap, MappedTrajectory, TrajectoryInterpolant};
use crate::units::HBAR;

/// Integrated density allowed in the outer 1/32 of the box on either side.
pub const EDGE_DENSITY_LIMIT: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Wavefunction1D {
    pub grid: Grid1D,
    pub amplitudes: Vec<Complex64>,
}

impl Wavefunction1D {
    pub fn new(grid: Grid1D, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != grid.n_points {
            return Err(Error::invalid("amplitudes", "length must match the grid"));
        }
        Ok(Self { grid, amplitudes })
    }

    pub fn from_real(grid: Grid1D, values: &[f64]) -> Result<Self> {
        Self::new(grid, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.spacing()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm_sqr().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::invalid("amplitudes", "cannot normalize a zero or non-finite state"));
        }
        self.amplitudes.iter_mut().for_each(|c| *c /= n);
        Ok(self)
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            * self.grid.spacing()
    }

    /// ⟨φ|ψ⟩ with a real grid state φ.
    pub fn project_real(&self, phi: &[f64]) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(phi)
            .map(|(a, &p)| a * p)
            .sum::<Complex64>()
            * self.grid.spacing()
    }

    pub fn fidelity(&self, other: &Self) -> f64 {
        self.inner(other).norm()
    }

    pub fn density(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn mean_x(&self) -> f64 {
        let h = self.grid.spacing();
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(i, c)| c.norm_sqr() * self.grid.x(i))
            .sum::<f64>()
            * h
    }

    pub fn conj(&self) -> Self {
        Self {
            grid: self.grid,
            amplitudes: self.amplitudes.iter().map(|c| c.conj()).collect(),
        }
    }

    /// Density in the outer 1/32 of the box, the larger of the two sides.
    pub fn edge_density(&self) -> f64 {
        let n = self.grid.n_points;
        let w = (n / 32).max(1);
        let h = self.grid.spacing();
        let left: f64 = self.amplitudes[..w].iter().map(|c| c.norm_sqr()).sum();
        let right: f64 = self.amplitudes[n - w..].iter().map(|c| c.norm_sqr()).sum();
        left.max(right) * h
    }

    /// CSV with columns x, re, im, abs2.
    pub fn write_snapshot_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "re", "im", "abs2"])?;
        for (i, c) in self.amplitudes.iter().enumerate() {
            w.write_record([
                fmt12(self.grid.x(i)),
                fmt12(c.re),
                fmt12(c.im),
                fmt12(c.norm_sqr()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A potential V(x, t) in joules, filled over a whole grid at once.
pub trait TimePotential {
    fn fill(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()>;
}

/// Time-independent potential sampled on the grid.
#[derive(Debug, Clone)]
pub struct StaticPotential(pub Vec<f64>);

impl TimePotential for StaticPotential {
    fn fill(&self, _t: f64, _x: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&self.0);
        Ok(())
    }
}

/// Potential from a pointwise closure V(x, t).
pub struct FnPotential<F: Fn(f64, f64) -> f64>(pub F);

impl<F: Fn(f64, f64) -> f64> TimePotential for FnPotential<F> {
    fn fill(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = (self.0)(xi, t);
        }
        Ok(())
    }
}

/// The lattice-plus-harmonic trap following a mapped (V₀(t), ω(t)).
#[derive(Debug, Clone)]
pub struct TrajectoryPotential {
    pub fixed: FixedTrap,
    controls: TrajectoryInterpolant,
}

impl TrajectoryPotential {
    pub fn new(trajectory: &MappedTrajectory, fixed: FixedTrap) -> Result<Self> {
        Ok(Self {
            fixed,
            controls: trajectory.interpolant()?,
        })
    }

    pub fn params(&self, t: f64) -> Result<TrapParameters> {
        let (v0, omega) = self.controls.controls(t);
        self.fixed.params(v0, omega)
    }
}

impl TimePotential for TrajectoryPotential {
    fn fill(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let p = self.params(t)?;
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = potential(&p, xi);
        }
        Ok(())
    }
}

/// Lattice height ramped linearly at constant trap frequency.
#[derive(Debug, Clone, Copy)]
pub struct LinearRampPotential {
    pub fixed: FixedTrap,
    pub ramp: crate::protocols::LinearRamp,
    pub omega: f64,
}

impl LinearRampPotential {
    pub fn params(&self, t: f64) -> Result<TrapParameters> {
        let t = t.clamp(0.0, self.ramp.t_final);
        self.fixed.params(self.ramp.value(t), self.omega)
    }
}

impl TimePotential for LinearRampPotential {
    fn fill(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let p = self.params(t)?;
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = potential(&p, xi);
        }
        Ok(())
    }
}

/// Split-step machinery for one grid, mass and time step.
pub struct SplitStep {
    grid: Grid1D,
    x: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    kinetic: Vec<Complex64>,
    scratch: Vec<Complex64>,
    v: Vec<f64>,
    dt: f64,
    g1n: f64,
}

impl SplitStep {
    /// Real time step `dt`; `g1n` is the mean-field strength in J·m.
    pub fn new(grid: Grid1D, mass: f64, g1n: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        if !(mass > 0.0) {
            return Err(Error::invalid("mass", "must be positive"));
        }
        let n = grid.n_points;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch = vec![Complex64::new(0.0, 0.0); forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len())];
        let length = n as f64 * grid.spacing();
        let kinetic = (0..n)
            .map(|j| {
                let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                let k = 2.0 * PI * m / length;
                let phase = -HBAR * k * k * dt / (2.0 * mass);
                // the inverse transform is unnormalized
                Complex64::from_polar(1.0 / n as f64, phase)
            })
            .collect();
        Ok(Self {
            grid,
            x: grid.points(),
            forward,
            inverse,
            kinetic,
            scratch,
            v: vec![0.0; n],
            dt,
            g1n,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn half_potential(&self, psi: &mut [Complex64]) {
        let h = 0.5 * self.dt / HBAR;
        for (c, &v) in psi.iter_mut().zip(&self.v) {
            let total = v + self.g1n * c.norm_sqr();
            *c *= Complex64::from_polar(1.0, -total * h);
        }
    }

    /// Advance ψ from t to t + dt with the potential frozen at t + dt/2. Only
    /// the spread of V enters the step-size check; a constant offset is a
    /// global phase.
    pub fn step(&mut self, potential: &dyn TimePotential, t: f64, psi: &mut [Complex64]) -> Result<()> {
        potential.fill(t + 0.5 * self.dt, &self.x, &mut self.v)?;
        let (lo, hi) = self.v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let phase = (hi - lo) * self.dt / HBAR;
        if !(phase <= FRAC_PI_4) {
            return Err(Error::TimeStepTooLarge { phase });
        }
        self.half_potential(psi);
        self.forward.process_with_scratch(psi, &mut self.scratch);
        for (c, k) in psi.iter_mut().zip(&self.kinetic) {
            *c *= k;
        }
        self.inverse.process_with_scratch(psi, &mut self.scratch);
        self.half_potential(psi);
        Ok(())
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }
}

/// Observer hook called after every step with (step index, time, state).
pub type Observer<'a> = dyn FnMut(usize, f64, &Wavefunction1D) -> Result<()> + 'a;

/// Propagate `psi0` from t = 0 to `t_final` with steps of about `dt`.
pub fn propagate_tdse(
    psi0: &Wavefunction1D,
    potential: &dyn TimePotential,
    mass: f64,
    g1n: f64,
    t_final: f64,
    dt: f64,
) -> Result<Wavefunction1D> {
    propagate_tdse_observed(psi0, potential, mass, g1n, 0.0, t_final, dt, &mut |_, _, _| Ok(()))
}

/// As [`propagate_tdse`] over [t_start, t_final], calling `observer` after
/// each step. The step is shrunk so an integer number fits the interval.
#[allow(clippy::too_many_arguments)]
pub fn propagate_tdse_observed(
    psi0: &Wavefunction1D,
    potential: &dyn TimePotential,
    mass: f64,
    g1n: f64,
    t_start: f64,
    t_final: f64,
    dt: f64,
    observer: &mut Observer<'_>,
) -> Result<Wavefunction1D> {
    let span = t_final - t_start;
    if span < 0.0 {
        return Err(Error::invalid("t_final", "must not precede the start time"));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    let steps = (span / dt).ceil() as usize;
    let mut psi = psi0.clone();
    if steps == 0 {
        return Ok(psi);
    }
    let h = span / steps as f64;
    let mut stepper = SplitStep::new(psi0.grid, mass, g1n, h)?;
    let check_every = 1000;
    for k in 0..steps {
        let t = t_start + k as f64 * h;
        stepper.step(potential, t, &mut psi.amplitudes)?;
        if (k + 1) % check_every == 0 || k + 1 == steps {
            let edge = psi.edge_density();
            if edge > EDGE_DENSITY_LIMIT {
                return Err(Error::BoundaryLeak { density: edge });
            }
        }
        observer(k + 1, t + h, &psi)?;
    }
    Ok(psi)
}

/// Ground state of a static potential (J) with mean-field strength `g1n`.
#[derive(Debug, Clone)]
pub struct GroundState {
    pub psi: Wavefunction1D,
    /// Chemical potential μ/ħ, rad/s.
    pub mu: f64,
    /// Energy per particle E/ħ, rad/s.
    pub energy: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct GroundStateOptions {
    /// Imaginary time step, s.
    pub dtau: f64,
    pub max_steps: usize,
    /// Stop once the relative energy change per step is below this.
    pub tol: f64,
    /// ...and the state changes by less than this per unit of μ·dτ, which
    /// bounds the remaining excited admixture.
    pub state_tol: f64,
}

impl Default for GroundStateOptions {
    fn default() -> Self {
        Self {
            dtau: 2e-6,
            max_steps: 400_000,
            tol: 1e-12,
            state_tol: 1e-9,
        }
    }
}

/// Kinetic, potential and interaction energies per particle (rad/s).
fn energy_parts(
    psi: &[Complex64],
    v: &[f64],
    g1n: f64,
    grid: &Grid1D,
    mass: f64,
    fft: &Arc<dyn Fft<f64>>,
) -> (f64, f64, f64) {
    let n = grid.n_points;
    let h = grid.spacing();
    let length = n as f64 * h;
    let mut buf = psi.to_vec();
    fft.process(&mut buf);
    // Parseval: Σ|ψ_k|² = n Σ|ψ_j|²
    let kin: f64 = buf
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
            let k = 2.0 * PI * m / length;
            c.norm_sqr() * HBAR * k * k / (2.0 * mass)
        })
        .sum::<f64>()
        * h
        / n as f64;
    let pot: f64 = psi.iter().zip(v).map(|(c, &vv)| c.norm_sqr() * vv).sum::<f64>() * h / HBAR;
    let int: f64 = psi.iter().map(|c| c.norm_sqr().powi(2)).sum::<f64>() * h * g1n / HBAR;
    (kin, pot, int)
}

/// Mean energy per particle E/ħ (rad/s) including the mean-field term.
pub fn mean_energy(psi: &Wavefunction1D, v: &[f64], mass: f64, g1n: f64) -> f64 {
    let fft = FftPlanner::new().plan_fft_forward(psi.grid.n_points);
    let (k, p, i) = energy_parts(&psi.amplitudes, v, g1n, &psi.grid, mass, &fft);
    (k + p + 0.5 * i) / psi.norm_sqr()
}

/// Imaginary-time relaxation with renormalization every step, started from
/// the linear finite-difference ground state.
pub fn gpe_ground_state(
    v: &[f64],
    mass: f64,
    g1n: f64,
    grid: &Grid1D,
    options: &GroundStateOptions,
) -> Result<GroundState> {
    if v.len() != grid.n_points {
        return Err(Error::invalid("potential", "length must match the grid"));
    }
    let start = lowest_eigenpairs(&grid_hamiltonian(v, mass, grid)?, grid, 1)?;
    let psi0 = Wavefunction1D::from_real(*grid, &start.states[0])?;
    relax(psi0, v, mass, g1n, options)
}

/// Imaginary-time relaxation from a given initial state.
pub fn relax(psi: Wavefunction1D, v: &[f64], mass: f64, g1n: f64, options: &GroundStateOptions) -> Result<GroundState> {
    relax_masked(psi, v, mass, g1n, options, None)
}

/// As [`relax`], with the state projected onto `mask` (0 or 1 per point)
/// after every kinetic step.
pub fn relax_masked(
    mut psi: Wavefunction1D,
    v: &[f64],
    mass: f64,
    g1n: f64,
    options: &GroundStateOptions,
    mask: Option<&[f64]>,
) -> Result<GroundState> {
    let grid = psi.grid;
    if v.len() != grid.n_points || mask.is_some_and(|m| m.len() != grid.n_points) {
        return Err(Error::invalid("potential", "length must match the grid"));
    }
    let project = |amps: &mut [Complex64]| {
        if let Some(m) = mask {
            amps.iter_mut().zip(m).for_each(|(c, &w)| *c *= w);
        }
    };
    project(&mut psi.amplitudes);
    let n = grid.n_points;
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let length = n as f64 * grid.spacing();
    let dtau = options.dtau;
    let vmin = v.iter().copied().fold(f64::INFINITY, f64::min);
    let kinetic: Vec<f64> = (0..n)
        .map(|j| {
            let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
            let k = 2.0 * PI * m / length;
            (-HBAR * k * k * dtau / (2.0 * mass)).exp() / n as f64
        })
        .collect();
    let h = grid.spacing();
    // exp(−(V + g|χ|²)dτ/2ħ)ψ, renormalized
    let half = |psi: &mut [Complex64], density: &[f64]| {
        for ((c, &vv), &n) in psi.iter_mut().zip(v).zip(density) {
            *c *= (-0.5 * (vv - vmin + g1n * n) * dtau / HBAR).exp();
        }
        let norm = (psi.iter().map(|c| c.norm_sqr()).sum::<f64>() * h).sqrt();
        psi.iter_mut().for_each(|c| *c /= norm);
    };
    let density = |psi: &[Complex64]| psi.iter().map(|c| c.norm_sqr()).collect::<Vec<f64>>();
    psi = psi.normalized()?;
    let (k0, p0, i0) = energy_parts(&psi.amplitudes, v, g1n, &grid, mass, &forward);
    let mut energy = k0 + p0 + 0.5 * i0;
    let mut change = f64::INFINITY;
    for step in 1..=options.max_steps {
        // renormalizing between sub-steps keeps the mean-field term from
        // seeing an O(dτ) norm drift
        let previous = psi.amplitudes.clone();
        half(&mut psi.amplitudes, &density(&previous));
        forward.process(&mut psi.amplitudes);
        for (c, k) in psi.amplitudes.iter_mut().zip(&kinetic) {
            *c *= k;
        }
        inverse.process(&mut psi.amplitudes);
        project(&mut psi.amplitudes);
        psi = psi.normalized()?;
        // the closing half uses its own output density, the adjoint of the
        // opening half, so the fixed point is second order in dτ
        let middle = psi.amplitudes.clone();
        let mut guess = density(&middle);
        for _ in 0..4 {
            psi.amplitudes.copy_from_slice(&middle);
            half(&mut psi.amplitudes, &guess);
            guess = density(&psi.amplitudes);
        }
        let (k, p, i) = energy_parts(&psi.amplitudes, v, g1n, &grid, mass, &forward);
        let e = k + p + 0.5 * i;
        change = ((e - energy) / e.abs().max(f64::MIN_POSITIVE)).abs();
        energy = e;
        let moved = previous
            .iter()
            .zip(&psi.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
            * grid.spacing().sqrt();
        let settled = moved < options.state_tol * (k + p + i).abs() * dtau;
        if change < options.tol && settled && step > 1 {
            // fix the global phase: real and positive at the density peak
            let peak = (0..n)
                .max_by(|&a, &b| psi.amplitudes[a].norm_sqr().total_cmp(&psi.amplitudes[b].norm_sqr()))
                .unwrap_or(0);
            let phase = psi.amplitudes[peak].conj() / psi.amplitudes[peak].norm();
            psi.amplitudes.iter_mut().for_each(|c| *c *= phase);
            return Ok(GroundState {
                psi,
                mu: k + p + i,
                energy,
                steps: step,
            });
        }
    }
    Err(Error::GroundStateNonConvergence {
        steps: options.max_steps,
        change,
    })
}

/// P_n = |⟨φ_n|ψ⟩|² in the instantaneous eigenbasis of the full trap.
pub fn instantaneous_populations(psi: &Wavefunction1D, params: &TrapParameters, k: usize) -> Result<Vec<f64>> {
    let h = hamiltonian_matrix(params, &psi.grid);
    let spec = lowest_eigenpairs(&h, &psi.grid, k)?;
    Ok(spec.states.iter().map(|phi| psi.project_real(phi).norm_sqr()).collect())
}

/// Named time series sharing one abscissa.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityTrace {
    pub abscissa: String,
    pub times: Vec<f64>,
    pub series: Vec<(String, Vec<f64>)>,
}

impl FidelityTrace {
    pub fn new(abscissa: &str, names: &[&str]) -> Self {
        Self {
            abscissa: abscissa.to_string(),
            times: Vec::new(),
            series: names.iter().map(|n| (n.to_string(), Vec::new())).collect(),
        }
    }

    pub fn push(&mut self, t: f64, values: &[f64]) {
        self.times.push(t);
        for ((_, s), &v) in self.series.iter_mut().zip(values) {
            s.push(v);
        }
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.series.iter().find(|(n, _)| n == name).map(|(_, s)| s.as_slice())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![self.abscissa.clone()];
        header.extend(self.series.iter().map(|(n, _)| n.clone()));
        w.write_record(&header)?;
        for (i, t) in self.times.iter().enumerate() {
            let mut row = vec![fmt12(*t)];
            row.extend(self.series.iter().map(|(_, s)| fmt12(s[i])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartState {
    Ground,
    Excited,
}

impl StartState {
    pub fn level(self) -> usize {
        match self {
            StartState::Ground => 0,
            StartState::Excited => 1,
        }
    }
}

/// A potential whose instantaneous trap parameters are known.
pub trait TrapSchedule: TimePotential {
    fn trap(&self, t: f64) -> Result<TrapParameters>;
}

impl TrapSchedule for TrajectoryPotential {
    fn trap(&self, t: f64) -> Result<TrapParameters> {
        self.params(t)
    }
}

impl TrapSchedule for LinearRampPotential {
    fn trap(&self, t: f64) -> Result<TrapParameters> {
        self.params(t)
    }
}

/// Result of one demultiplexing run.
#[derive(Debug, Clone)]
pub struct DemuxRun {
    pub fidelity: f64,
    pub final_state: Wavefunction1D,
    /// Populations of the three lowest instantaneous levels, sampled in time.
    pub populations: FidelityTrace,
    /// States at the requested snapshot times (the first step at or past each).
    pub snapshots: Vec<(f64, Wavefunction1D)>,
}

#[derive(Debug, Clone, Copy)]
pub struct DemuxOptions {
    pub grid: Grid1D,
    pub mass: f64,
    pub dt: f64,
    pub stop_early: f64,
    /// Interval between population samples, s (0 disables sampling).
    pub sample_every: f64,
}

/// Start in level 0 or 1 of the initial trap, propagate to t_f − stop_early
/// and compare with the same level of the trap at that time.
pub fn demux_run(schedule: &dyn TrapSchedule, t_final: f64, start: StartState, options: &DemuxOptions) -> Result<DemuxRun> {
    demux_run_with_snapshots(schedule, t_final, start, options, &[])
}

/// As [`demux_run`], also keeping the state at each of `snapshot_times`.
pub fn demux_run_with_snapshots(
    schedule: &dyn TrapSchedule,
    t_final: f64,
    start: StartState,
    options: &DemuxOptions,
    snapshot_times: &[f64],
) -> Result<DemuxRun> {
    let grid = options.grid;
    let stop = t_final - options.stop_early;
    if !(stop > 0.0) {
        return Err(Error::invalid("stop_early", "must be shorter than t_final"));
    }
    let initial = lowest_eigenpairs(&hamiltonian_matrix(&schedule.trap(0.0)?, &grid), &grid, 2)?;
    let psi0 = Wavefunction1D::from_real(grid, &initial.states[start.level()])?;
    let mut trace = FidelityTrace::new("t", &["P0", "P1", "P2"]);
    let mut next_sample = 0.0;
    let sample = |t: f64, psi: &Wavefunction1D, trace: &mut FidelityTrace| -> Result<()> {
        let p = instantaneous_populations(psi, &schedule.trap(t)?, 3)?;
        trace.push(t, &p);
        Ok(())
    };
    if options.sample_every > 0.0 {
        sample(0.0, &psi0, &mut trace)?;
        next_sample = options.sample_every;
    }
    let mut pending: Vec<f64> = snapshot_times.to_vec();
    pending.sort_by(|a, b| b.total_cmp(a));
    let mut snapshots = Vec::new();
    while pending.last().is_some_and(|&s| s <= 0.0) {
        pending.pop();
        snapshots.push((0.0, psi0.clone()));
    }
    let mut observer = |_: usize, t: f64, psi: &Wavefunction1D| -> Result<()> {
        while pending.last().is_some_and(|&s| t >= s - 1e-12 * t_final) {
            pending.pop();
            snapshots.push((t, psi.clone()));
        }
        if options.sample_every > 0.0 && t >= next_sample - 1e-12 * t_final {
            sample(t, psi, &mut trace)?;
            next_sample += options.sample_every;
        }
        Ok(())
    };
    let psi = propagate_tdse_observed(&psi0, schedule, options.mass, 0.0, 0.0, stop, options.dt, &mut observer)?;
    let target = lowest_eigenpairs(&hamiltonian_matrix(&schedule.trap(stop)?, &grid), &grid, 2)?;
    let fidelity = psi.project_real(&target.states[start.level()]).norm();
    Ok(DemuxRun {
        fidelity,
        final_state: psi,
        populations: trace,
        snapshots,
    })
}

/// Fidelity against the target level at t_f − stop_early, for each schedule
/// of a family indexed by t_f.
pub fn demux_fidelity_scan(
    family: &[(f64, &dyn TrapSchedule)],
    start: StartState,
    options: &DemuxOptions,
) -> Result<FidelityTrace> {
    let mut trace = FidelityTrace::new("t_f", &["F"]);
    for &(t_final, schedule) in family {
        let run = demux_run(schedule, t_final, start, &DemuxOptions { sample_every: 0.0, ..*options })?;
        trace.push(t_final, &[run.fidelity]);
    }
    Ok(trace)
}

/// Ground state of the trap displaced by `x0`: a coherent state of the
/// undisplaced trap when it is harmonic.
pub fn displaced_ground_state(params: &TrapParameters, grid: &Grid1D, x0: f64) -> Result<Wavefunction1D> {
    let shifted: Vec<f64> = grid.points().iter().map(|&x| potential(params, x - x0)).collect();
    let spec = lowest_eigenpairs(&grid_hamiltonian(&shifted, params.mass, grid)?, grid, 1)?;
    Wavefunction1D::from_real(*grid, &spec.states[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::MASS_RB87;

    const OMEGA: f64 = 2.0 * PI * 78.0;

    fn harmonic(grid: &Grid1D) -> Vec<f64> {
        grid.points().iter().map(|x| 0.5 * MASS_RB87 * OMEGA * OMEGA * x * x).collect()
    }

    fn harmonic_eigen(grid: &Grid1D, k: usize) -> crate::lattice1d::SpectralDecomposition {
        let params = TrapParameters::rubidium(0.0, OMEGA).unwrap();
        lowest_eigenpairs(&hamiltonian_matrix(&params, grid), grid, k).unwrap()
    }

    fn coarse() -> Grid1D {
        Grid1D::new(-15e-6, 15e-6, 512).unwrap()
    }

    #[test]
    fn eigenstate_is_stationary() {
        let grid = coarse();
        let spec = harmonic_eigen(&grid, 1);
        let psi0 = Wavefunction1D::from_real(grid, &spec.states[0]).unwrap();
        let v = StaticPotential(harmonic(&grid));
        let psi = propagate_tdse(&psi0, &v, MASS_RB87, 0.0, 10e-3, 1e-5).unwrap();
        assert!(psi0.fidelity(&psi) > 1.0 - 1e-6, "{}", psi0.fidelity(&psi));
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
        // global phase follows the mean energy
        let e = mean_energy(&psi0, &harmonic(&grid), MASS_RB87, 0.0);
        assert!((e / (0.5 * OMEGA) - 1.0).abs() < 1e-3);
        let got = psi0.inner(&psi).arg().rem_euclid(2.0 * PI);
        let want = (-e * 10e-3).rem_euclid(2.0 * PI);
        assert!((got - want).abs() < 1e-4, "{got} vs {want}");
    }

    #[test]
    fn displaced_packet_follows_ehrenfest() {
        let grid = coarse();
        let params = TrapParameters::rubidium(0.0, OMEGA).unwrap();
        let x0 = 2e-6;
        let psi0 = displaced_ground_state(&params, &grid, x0).unwrap();
        let v = StaticPotential(harmonic(&grid));
        let mut worst: f64 = 0.0;
        let mut observer = |_: usize, t: f64, psi: &Wavefunction1D| -> Result<()> {
            worst = worst.max((psi.mean_x() - x0 * (OMEGA * t).cos()).abs());
            Ok(())
        };
        propagate_tdse_observed(&psi0, &v, MASS_RB87, 0.0, 0.0, 2.0 * PI / OMEGA, 2e-6, &mut observer).unwrap();
        assert!(worst < 1e-3 * x0, "{worst}");
    }

    #[test]
    fn superposition_populations_are_conserved() {
        let grid = coarse();
        let spec = harmonic_eigen(&grid, 2);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let amps: Vec<f64> = spec.states[0].iter().zip(&spec.states[1]).map(|(a, b)| s * (a + b)).collect();
        let psi0 = Wavefunction1D::from_real(grid, &amps).unwrap();
        let v = StaticPotential(harmonic(&grid));
        let quarter = 0.5 * PI / OMEGA;
        let psi = propagate_tdse(&psi0, &v, MASS_RB87, 0.0, quarter, 1e-6).unwrap();
        let params = TrapParameters::rubidium(0.0, OMEGA).unwrap();
        let p = instantaneous_populations(&psi, &params, 3).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-6 && (p[1] - 0.5).abs() < 1e-6 && p[2] < 1e-6, "{p:?}");
        // a quarter period in: the dipole oscillation passes through zero
        assert!(psi.mean_x().abs() < 1e-3 * psi0.mean_x().abs());
    }

    #[test]
    fn energy_is_conserved_in_a_static_trap() {
        let grid = coarse();
        let params = TrapParameters::rubidium(0.0, OMEGA).unwrap();
        let psi0 = displaced_ground_state(&params, &grid, 1.5e-6).unwrap();
        let v = harmonic(&grid);
        let g = 1e-40;
        let e0 = mean_energy(&psi0, &v, MASS_RB87, g);
        let psi = propagate_tdse(&psi0, &StaticPotential(v.clone()), MASS_RB87, g, 20e-3, 2e-6).unwrap();
        let e1 = mean_energy(&psi, &v, MASS_RB87, g);
        assert!(((e1 - e0) / e0).abs() < 1e-4, "{e0} {e1}");
    }

    #[test]
    fn conjugation_reverses_time() {
        let grid = coarse();
        let params = TrapParameters::rubidium(0.0, OMEGA).unwrap();
        let psi0 = displaced_ground_state(&params, &grid, 1e-6).unwrap();
        let tf = 5e-3;
        let drive = |x: f64, t: f64| 0.5 * MASS_RB87 * OMEGA * OMEGA * x * x * (1.0 + 0.3 * (t / tf))
            + 1e-31 * (x / 1e-6).sin() * (PI * t / tf).sin();
        let forward = FnPotential(drive);
        let backward = FnPotential(|x: f64, t: f64| drive(x, tf - t));
        let psi1 = propagate_tdse(&psi0, &forward, MASS_RB87, 0.0, tf, 1e-6).unwrap();
        let back = propagate_tdse(&psi1.conj(), &backward, MASS_RB87, 0.0, tf, 1e-6).unwrap().conj();
        let err: f64 = back.amplitudes.iter().zip(&psi0.amplitudes).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>()
            * grid.spacing();
        assert!(err.sqrt() < 1e-9, "{}", err.sqrt());
    }

    #[test]
    fn step_error_is_second_order() {
        let grid = coarse();
        let params = TrapParameters::rubidium(0.0, OMEGA).unwrap();
        let psi0 = displaced_ground_state(&params, &grid, 1e-6).unwrap();
        let tf = 4e-3;
        let v = FnPotential(|x: f64, t: f64| 0.5 * MASS_RB87 * OMEGA * OMEGA * x * x * (1.0 + (500.0 * t).sin()));
        let run = |dt| propagate_tdse(&psi0, &v, MASS_RB87, 0.0, tf, dt).unwrap();
        let reference = run(2.5e-7);
        let err = |dt| {
            let psi = run(dt);
            psi.amplitudes.iter().zip(&reference.amplitudes).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
        };
        let ratio = err(4e-6) / err(2e-6);
        assert!(ratio > 3.5 && ratio < 4.5, "{ratio}");
    }

    #[test]
    fn linear_ground_state_matches_oscillator() {
        let grid = coarse();
        let gs = gpe_ground_state(&harmonic(&grid), MASS_RB87, 0.0, &grid, &GroundStateOptions::default()).unwrap();
        assert!((gs.mu / (0.5 * OMEGA) - 1.0).abs() < 1e-4, "{}", gs.mu);
        assert!((gs.energy - gs.mu).abs() < 1e-9 * gs.mu);
    }

    #[test]
    fn strong_interactions_approach_thomas_fermi() {
        let grid = Grid1D::new(-30e-6, 30e-6, 1024).unwrap();
        // g chosen so that μ_TF = 40 ħω
        let mu_tf = 40.0 * HBAR * OMEGA;
        let g = 4.0 / 3.0 * mu_tf.powf(1.5) * (2.0 / (MASS_RB87 * OMEGA * OMEGA)).sqrt();
        let gs = gpe_ground_state(&harmonic(&grid), MASS_RB87, g, &grid, &GroundStateOptions::default()).unwrap();
        let ratio = gs.mu * HBAR / mu_tf;
        assert!((ratio - 1.0).abs() < 0.01, "{ratio}");
        // the energy per particle is 3/5 of μ in the same limit
        assert!((gs.energy / gs.mu - 0.6).abs() < 0.01, "{}", gs.energy / gs.mu);
    }

    #[test]
    fn gpe_ground_state_is_stationary() {
        let grid = coarse();
        let v = harmonic(&grid);
        let g = 5.0 * HBAR * OMEGA * 1e-6;
        let gs = gpe_ground_state(&v, MASS_RB87, g, &grid, &GroundStateOptions::default()).unwrap();
        let t = 10e-3;
        let psi = propagate_tdse(&gs.psi, &StaticPotential(v), MASS_RB87, g, t, 1e-6).unwrap();
        assert!(gs.psi.fidelity(&psi) > 1.0 - 1e-6, "{}", gs.psi.fidelity(&psi));
        let peak = gs.psi.density().iter().cloned().fold(0.0, f64::max);
        let change = gs.psi.density().iter().zip(psi.density()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(change < 1e-6 * peak, "{}", change / peak);
        let got = gs.psi.inner(&psi).arg().rem_euclid(2.0 * PI);
        let want = (-gs.mu * t).rem_euclid(2.0 * PI);
        assert!((got - want).abs() < 1e-3, "{got} vs {want}");
    }

    #[test]
    fn propagation_is_linear() {
        let grid = coarse();
        let spec = harmonic_eigen(&grid, 2);
        let v = FnPotential(|x: f64, t: f64| {
            0.5 * MASS_RB87 * OMEGA * OMEGA * x * x + 2e-31 * (x / 2e-6).cos().powi(2) * (t / 3e-3)
        });
        let a = Complex64::new(0.6, 0.0);
        let b = Complex64::new(0.0, 0.8);
        let run = |amps: Vec<Complex64>| {
            let psi = Wavefunction1D::new(grid, amps).unwrap();
            propagate_tdse(&psi, &v, MASS_RB87, 0.0, 3e-3, 1e-6).unwrap()
        };
        let s0: Vec<Complex64> = spec.states[0].iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let s1: Vec<Complex64> = spec.states[1].iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let mixed: Vec<Complex64> = s0.iter().zip(&s1).map(|(p, q)| a * p + b * q).collect();
        let (p0, p1, pm) = (run(s0), run(s1), run(mixed));
        let err: f64 = pm
            .amplitudes
            .iter()
            .zip(p0.amplitudes.iter().zip(&p1.amplitudes))
            .map(|(m, (x, y))| (m - a * x - b * y).norm_sqr())
            .sum::<f64>()
            * grid.spacing();
        assert!(err.sqrt() < 1e-8, "{}", err.sqrt());
    }

    #[test]
    fn linear_energy_drift_is_small() {
        let grid = coarse();
        let params = TrapParameters::rubidium(0.0, OMEGA).unwrap();
        let psi0 = displaced_ground_state(&params, &grid, 1.5e-6).unwrap();
        let v = harmonic(&grid);
        let e0 = mean_energy(&psi0, &v, MASS_RB87, 0.0);
        let psi = propagate_tdse(&psi0, &StaticPotential(v.clone()), MASS_RB87, 0.0, 1e-2, 1e-7).unwrap();
        let e1 = mean_energy(&psi, &v, MASS_RB87, 0.0);
        assert!(((e1 - e0) / e0).abs() < 1e-8, "{}", (e1 - e0) / e0);
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn linear_double_well_ground_state_matches_eigensolver() {
        let grid = Grid1D::default();
        let params = TrapParameters::rubidium(3.0 * HBAR * OMEGA, OMEGA).unwrap();
        let v: Vec<f64> = grid.points().iter().map(|&x| potential(&params, x)).collect();
        let options = GroundStateOptions { dtau: 1e-5, ..Default::default() };
        let gs = gpe_ground_state(&v, MASS_RB87, 0.0, &grid, &options).unwrap();
        let spec = lowest_eigenpairs(&hamiltonian_matrix(&params, &grid), &grid, 1).unwrap();
        let deficit = 1.0 - gs.psi.project_real(&spec.states[0]).norm_sqr();
        assert!(deficit < 1e-6, "{deficit}");
    }

    #[test]
    fn thomas_fermi_profile() {
        let grid = Grid1D::new(-30e-6, 30e-6, 1024).unwrap();
        let mu_tf = 40.0 * HBAR * OMEGA;
        let g = 4.0 / 3.0 * mu_tf.powf(1.5) * (2.0 / (MASS_RB87 * OMEGA * OMEGA)).sqrt();
        let v = harmonic(&grid);
        let gs = gpe_ground_state(&v, MASS_RB87, g, &grid, &GroundStateOptions::default()).unwrap();
        let mu = gs.mu * HBAR;
        let density = gs.psi.density();
        let peak = mu / g;
        for (i, &n) in density.iter().enumerate() {
            let tf = ((mu - v[i]) / g).max(0.0);
            // away from the edges: well inside the Thomas-Fermi radius
            if v[i] < 0.8 * mu {
                assert!((n - tf).abs() < 0.05 * peak, "{i}: {n} vs {tf}");
            }
        }
    }

    #[test]
    fn oversized_step_is_rejected() {
        let grid = coarse();
        let spec = harmonic_eigen(&grid, 1);
        let psi0 = Wavefunction1D::from_real(grid, &spec.states[0]).unwrap();
        let v = StaticPotential(harmonic(&grid));
        let err = propagate_tdse(&psi0, &v, MASS_RB87, 0.0, 1e-3, 1e-4).unwrap_err();
        assert!(matches!(err, Error::TimeStepTooLarge { .. }));
    }

    #[test]
    fn density_at_the_walls_is_reported() {
        let grid = coarse();
        let params = TrapParameters::rubidium(0.0, OMEGA).unwrap();
        let psi0 = displaced_ground_state(&params, &grid, 13e-6).unwrap();
        let v = StaticPotential(vec![0.0; grid.n_points]);
        let err = propagate_tdse(&psi0, &v, MASS_RB87, 0.0, 1e-5, 1e-6).unwrap_err();
        assert!(matches!(err, Error::BoundaryLeak { .. }));
    }

    #[test]
    fn trace_csv_has_named_columns() {
        let mut trace = FidelityTrace::new("t_f", &["F"]);
        trace.push(0.05, &[0.99]);
        let mut out = Vec::new();
        trace.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("t_f,F\n"));
        assert_eq!(trace.get("F"), Some(&[0.99][..]));
    }
}
