//! Fast-forward splitting of a harmonic trap into a double well: the designed
//! amplitude, the phase that keeps the driving potential real, the potential
//! itself, its robustness against a step-like asymmetry, a moving two-mode
//! model of that robustness and the interaction-versus-asymmetry estimate.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use crate::csvio::fmt12;
use crate::error::{Error, Result};
use crate::interp::CubicSpline;
use crate::lattice1d::{grid_hamiltonian, lowest_eigenpairs, mirror_eigenpairs, Grid1D};
use crate::tdse::{
    gpe_ground_state, propagate_tdse, relax, relax_masked, GroundStateOptions, TimePotential, Wavefunction1D,
};
use crate::twolevel::{self, FnSchedule, TwoLevelAmplitudes, TwoLevelHamiltonian};
use crate::units::{oscillator_length, HBAR, MASS_RB87};

/// Default trap frequency, rad/s.
pub const DEFAULT_OMEGA: f64 = 780.0;
/// Default final half-separation of the wells, m.
pub const DEFAULT_X_F: f64 = 4e-6;
/// Default durations, s.
pub const DEFAULT_T_FINALS: [f64; 3] = [0.020, 0.090, 0.320];
/// φ̇ is a central difference with Δt = t_f / PHI_DOT_DIVISIONS.
pub const PHI_DOT_DIVISIONS: f64 = 1e4;
/// The potential formula is used where r ≥ SUPPORT_FRACTION·max r.
pub const SUPPORT_FRACTION: f64 = 1e-6;
/// The phase is integrated where r ≥ PHASE_FRACTION·max r.
pub const PHASE_FRACTION: f64 = 1e-9;
/// Between the outer maxima r must stay above NODE_FRACTION·max r.
pub const NODE_FRACTION: f64 = 1e-12;
/// Default number of slices for the moving two-mode basis.
pub const DEFAULT_TWO_MODE_SLICES: usize = 201;

/// Physical setting of a splitting run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitParameters {
    pub mass: f64,
    /// Initial trap frequency, rad/s.
    pub omega: f64,
    /// Final well positions ±x_f, m.
    pub x_f: f64,
    pub t_final: f64,
    pub grid: Grid1D,
}

impl SplitParameters {
    pub fn new(mass: f64, omega: f64, x_f: f64, t_final: f64, grid: Grid1D) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::invalid("mass", "must be positive"));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::invalid("omega", "must be positive"));
        }
        if !(x_f > 0.0 && x_f.is_finite()) {
            return Err(Error::invalid("x_f", "must be positive"));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::invalid("t_final", "must be positive"));
        }
        if !grid.is_symmetric() || grid.n_points % 2 != 0 || grid.n_points < 16 {
            return Err(Error::invalid("grid", "needs x_min = −x_max and an even number of points"));
        }
        if x_f >= 0.5 * grid.x_max {
            return Err(Error::invalid("x_f", "wells must sit well inside the grid"));
        }
        Ok(Self {
            mass,
            omega,
            x_f,
            t_final,
            grid,
        })
    }

    /// ⁸⁷Rb on the default grid.
    pub fn rubidium(omega: f64, x_f: f64, t_final: f64) -> Result<Self> {
        Self::new(MASS_RB87, omega, x_f, t_final, Grid1D::default())
    }

    /// Oscillator length √(ħ/mω), m.
    pub fn a0(&self) -> f64 {
        oscillator_length(self.mass, self.omega)
    }

    /// ħω, J.
    pub fn hbar_omega(&self) -> f64 {
        HBAR * self.omega
    }

    /// Blend R(t) = 3s² − 2s³ and its time derivative, s = t/t_f. The
    /// polynomial is continued outside [0, t_f].
    pub fn blend(&self, t: f64) -> (f64, f64) {
        let s = t / self.t_final;
        (s * s * (3.0 - 2.0 * s), 6.0 * s * (1.0 - s) / self.t_final)
    }

    /// Bump centre x0(t) = x_f R(t) and its velocity.
    pub fn x0(&self, t: f64) -> (f64, f64) {
        let (r, r_dot) = self.blend(t);
        (self.x_f * r, self.x_f * r_dot)
    }

    /// Dimensionless coupling ĝN = g1N/(ħω a0) for `g1n` in J·m.
    pub fn g_hat(&self, g1n: f64) -> f64 {
        g1n / (self.hbar_omega() * self.a0())
    }

    /// g1N in J·m for a dimensionless coupling ĝN.
    pub fn g1n(&self, g_hat: f64) -> f64 {
        g_hat * self.hbar_omega() * self.a0()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeKind {
    /// Two Gaussians of width a0 moving apart.
    TwoBump,
    /// Two copies of a blend between the N- and N/2-atom harmonic ground states.
    InterpolatedGpe,
}

/// Designed amplitude r(x, t) with its space and time derivatives on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Amplitude {
    pub r: Vec<f64>,
    pub r_x: Vec<f64>,
    pub r_xx: Vec<f64>,
    pub r_dot: Vec<f64>,
}

/// Phase φ and its gradient φ′ on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub phi: Vec<f64>,
    pub phi_prime: Vec<f64>,
}

#[derive(Clone)]
struct Endpoints {
    // spectra of χ_N and χ_{N/2}
    full: Vec<Complex64>,
    half: Vec<Complex64>,
    k: Vec<f64>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Amplitude design plus the interaction strength it was built for.
#[derive(Clone)]
pub struct AmplitudeDesign {
    params: SplitParameters,
    kind: AmplitudeKind,
    g1n: f64,
    endpoints: Option<Endpoints>,
}

impl std::fmt::Debug for AmplitudeDesign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AmplitudeDesign")
            .field("params", &self.params)
            .field("kind", &self.kind)
            .field("g1n", &self.g1n)
            .finish()
    }
}

impl AmplitudeDesign {
    /// Noninteracting two-bump design.
    pub fn two_bump(params: SplitParameters) -> Self {
        Self {
            params,
            kind: AmplitudeKind::TwoBump,
            g1n: 0.0,
            endpoints: None,
        }
    }

    /// Blend of the harmonic GPE ground states for couplings g1N and g1N/2.
    pub fn interpolated_gpe(params: SplitParameters, g1n: f64, ground: &GroundStateOptions) -> Result<Self> {
        if !(g1n >= 0.0 && g1n.is_finite()) {
            return Err(Error::invalid("g1n", "must be non-negative"));
        }
        let grid = params.grid;
        let v: Vec<f64> = grid
            .points()
            .iter()
            .map(|x| 0.5 * params.mass * params.omega * params.omega * x * x)
            .collect();
        let n = grid.n_points;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let spectrum = |g: f64| -> Result<Vec<Complex64>> {
            let mut amps = gpe_ground_state(&v, params.mass, g, &grid, ground)?.psi.amplitudes;
            // the ground state is real; drop the rounding imaginary part
            amps.iter_mut().for_each(|c| *c = Complex64::new(c.re, 0.0));
            forward.process(&mut amps);
            Ok(amps)
        };
        let full = spectrum(g1n)?;
        let half = spectrum(0.5 * g1n)?;
        let length = n as f64 * grid.spacing();
        let k = (0..n)
            .map(|j| {
                // the Nyquist mode has no odd partner; leave it underived
                if 2 * j == n {
                    0.0
                } else {
                    let m = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
                    2.0 * PI * m / length
                }
            })
            .collect();
        Ok(Self {
            params,
            kind: AmplitudeKind::InterpolatedGpe,
            g1n,
            endpoints: Some(Endpoints {
                full,
                half,
                k,
                inverse: planner.plan_fft_inverse(n),
            }),
        })
    }

    pub fn params(&self) -> &SplitParameters {
        &self.params
    }

    pub fn kind(&self) -> AmplitudeKind {
        self.kind
    }

    /// Mean-field strength g1N, J·m.
    pub fn g1n(&self) -> f64 {
        self.g1n
    }

    /// r, r′, r″ and ṙ at time t, normalized to Σ r² h = 1.
    pub fn amplitude(&self, t: f64) -> Result<Amplitude> {
        let p = &self.params;
        let (x0, x0_dot) = p.x0(t);
        let n = p.grid.n_points;
        let (u, u_x, u_xx, u_dot) = match &self.endpoints {
            None => {
                let a2 = p.a0() * p.a0();
                let mut u = vec![0.0; n];
                let mut u_x = vec![0.0; n];
                let mut u_xx = vec![0.0; n];
                let mut u_dot = vec![0.0; n];
                for i in 0..n {
                    let x = p.grid.x(i);
                    let (yp, ym) = (x - x0, x + x0);
                    let (gp, gm) = ((-yp * yp / (2.0 * a2)).exp(), (-ym * ym / (2.0 * a2)).exp());
                    u[i] = gp + gm;
                    u_x[i] = -(yp * gp + ym * gm) / a2;
                    u_xx[i] = (yp * yp / a2 - 1.0) * gp / a2 + (ym * ym / a2 - 1.0) * gm / a2;
                    u_dot[i] = x0_dot * (yp * gp - ym * gm) / a2;
                }
                (u, u_x, u_xx, u_dot)
            }
            Some(e) => {
                let (blend, blend_dot) = p.blend(t);
                let mut bufs = [(); 4].map(|_| vec![Complex64::new(0.0, 0.0); n]);
                for j in 0..n {
                    let f = e.full[j] * (1.0 - blend) + e.half[j] * blend;
                    let d = (e.half[j] - e.full[j]) * blend_dot;
                    let k = e.k[j];
                    // f(x − x0) + f(x + x0) in Fourier space: 2 f̂ cos(k x0)
                    let (s, c) = (k * x0).sin_cos();
                    let shifted = f * (2.0 * c);
                    bufs[0][j] = shifted;
                    bufs[1][j] = shifted * Complex64::new(0.0, k);
                    bufs[2][j] = shifted * (-k * k);
                    bufs[3][j] = d * (2.0 * c) - f * (2.0 * x0_dot * k * s);
                }
                let scale = 1.0 / n as f64;
                let mut out = bufs.map(|mut b| {
                    e.inverse.process(&mut b);
                    b.iter().map(|c| c.re * scale).collect::<Vec<f64>>()
                });
                let u_dot = std::mem::take(&mut out[3]);
                let u_xx = std::mem::take(&mut out[2]);
                let u_x = std::mem::take(&mut out[1]);
                let u = std::mem::take(&mut out[0]);
                (u, u_x, u_xx, u_dot)
            }
        };
        let h = p.grid.spacing();
        let norm2: f64 = u.iter().map(|v| v * v).sum::<f64>() * h;
        if !(norm2 > 0.0 && norm2.is_finite()) {
            return Err(Error::VanishingAmplitude { x: 0.0 });
        }
        let z = norm2.powf(-0.5);
        // ż = −z³ Σ u u̇ h
        let z_dot = -z * z * z * u.iter().zip(&u_dot).map(|(a, b)| a * b).sum::<f64>() * h;
        Ok(Amplitude {
            r: u.iter().map(|v| z * v).collect(),
            r_x: u_x.iter().map(|v| z * v).collect(),
            r_xx: u_xx.iter().map(|v| z * v).collect(),
            r_dot: u.iter().zip(&u_dot).map(|(a, b)| z * b + z_dot * a).collect(),
        })
    }

    /// Phase at time t.
    pub fn phase(&self, t: f64) -> Result<Phase> {
        phase_solve(&self.amplitude(t)?, &self.params.grid, self.params.mass)
    }

    /// V_FF at time t (J), gauged so that its minimum is zero.
    pub fn potential(&self, t: f64) -> Result<Vec<f64>> {
        let p = &self.params;
        let dt = p.t_final / PHI_DOT_DIVISIONS;
        let amp = self.amplitude(t)?;
        let phase = phase_solve(&amp, &p.grid, p.mass)?;
        let later = self.phase(t + dt)?;
        let earlier = self.phase(t - dt)?;
        let phi_dot: Vec<f64> = later
            .phi
            .iter()
            .zip(&earlier.phi)
            .map(|(a, b)| (a - b) / (2.0 * dt))
            .collect();
        Ok(vff(&amp, &phase, &phi_dot, self.g1n, p))
    }

    /// Trap that holds r(t) at rest: V_FF with φ = 0, gauged to min zero.
    /// At the protocol ends ṙ = 0, so this is the trap before and after the
    /// splitting; mid-protocol the inertial term −ħφ̇ is what drives r.
    pub fn endpoint_potential(&self, t: f64) -> Result<Vec<f64>> {
        let p = &self.params;
        let amp = self.amplitude(t)?;
        let n = p.grid.n_points;
        let still = Phase {
            phi: vec![0.0; n],
            phi_prime: vec![0.0; n],
        };
        Ok(vff(&amp, &still, &vec![0.0; n], self.g1n, p))
    }

    /// Designed state r e^{iφ} at time t.
    pub fn designed_state(&self, t: f64) -> Result<Wavefunction1D> {
        let amp = self.amplitude(t)?;
        let phase = phase_solve(&amp, &self.params.grid, self.params.mass)?;
        let amps = amp
            .r
            .iter()
            .zip(&phase.phi)
            .map(|(&r, &phi)| Complex64::from_polar(r, phi))
            .collect();
        Wavefunction1D::new(self.params.grid, amps)
    }

    /// Long-format CSV (t, x, V in units of ħω) at the given times.
    pub fn write_potential_csv<W: Write>(&self, times: &[f64], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "V_over_hbar_omega"])?;
        let points = self.params.grid.points();
        for &t in times {
            let v = self.potential(t)?;
            for (x, vv) in points.iter().zip(&v) {
                w.write_record([
                    fmt12(t),
                    fmt12(*x),
                    fmt12(vv / self.params.hbar_omega()),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

impl TimePotential for AmplitudeDesign {
    fn fill(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.params.grid.n_points || out.len() != x.len() {
            return Err(Error::invalid("grid", "potential requested on a different grid"));
        }
        out.copy_from_slice(&self.potential(t)?);
        Ok(())
    }
}

/// Index ranges of the positive half of a symmetric even grid.
fn positive_half(grid: &Grid1D) -> usize {
    grid.n_points / 2
}

/// ∫ from the first point of `f` onward, with the trapezoid rule plus the
/// end-point derivative correction; `slope` holds f′ at each point.
fn cumulative(f: &[f64], slope: &[f64], h: f64) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    let mut trap = 0.0;
    for j in 1..f.len() {
        trap += 0.5 * h * (f[j - 1] + f[j]);
        out[j] = trap - h * h / 12.0 * (slope[j] - slope[0]);
    }
    out
}

/// Second-order derivative of samples at spacing h; `mirror` is f(−x0)/f(x0)
/// across the left end (±1), used for the point nearest the origin.
fn derivative(f: &[f64], h: f64, mirror: f64) -> Vec<f64> {
    let m = f.len();
    (0..m)
        .map(|j| {
            if j == 0 {
                (f[1] - mirror * f[0]) / (2.0 * h)
            } else if j + 1 < m {
                (f[j + 1] - f[j - 1]) / (2.0 * h)
            } else if m >= 3 {
                (3.0 * f[j] - 4.0 * f[j - 1] + f[j - 2]) / (2.0 * h)
            } else {
                (f[j] - f[j - 1]) / h
            }
        })
        .collect()
}

/// Solve (r²φ′)′ = −(2m/ħ) ṙ r with φ(0) = φ′(0) = 0 for a mirror-symmetric
/// amplitude on a symmetric grid.
pub fn phase_solve(amp: &Amplitude, grid: &Grid1D, mass: f64) -> Result<Phase> {
    let n = grid.n_points;
    if !grid.is_symmetric() || n % 2 != 0 || amp.r.len() != n || amp.r_dot.len() != n {
        return Err(Error::invalid("grid", "phase solve needs a symmetric even grid matching the amplitude"));
    }
    let half = positive_half(grid);
    let h = grid.spacing();
    let r = &amp.r[half..];
    let r_max = r.iter().copied().fold(0.0, f64::max);
    if !(r_max > 0.0 && r_max.is_finite()) {
        return Err(Error::VanishingAmplitude { x: grid.x(half) });
    }
    let peak = (0..r.len()).max_by(|&a, &b| r[a].total_cmp(&r[b])).unwrap_or(0);
    if let Some(j) = (0..=peak).find(|&j| !(r[j] >= NODE_FRACTION * r_max)) {
        return Err(Error::VanishingAmplitude { x: grid.x(half + j) });
    }
    let valid = (0..r.len()).find(|&j| !(r[j] >= PHASE_FRACTION * r_max)).unwrap_or(r.len());
    let mut phi_prime = vec![0.0; half];
    if valid >= 4 {
        let coef = -2.0 * mass / HBAR;
        // w = φ′ obeys w′ = a w + b with a = −2r′/r (odd) and b = −(2m/ħ)ṙ/r (even)
        let a: Vec<f64> = (0..valid).map(|j| -2.0 * amp.r_x[half + j] / r[j]).collect();
        let b: Vec<f64> = (0..valid).map(|j| coef * amp.r_dot[half + j] / r[j]).collect();
        let mid = |f: &[f64], parity: f64, j: usize| -> f64 {
            // cubic through four neighbours, mirrored across the origin
            let at = |k: isize| -> f64 {
                if k < 0 {
                    parity * f[(-k - 1) as usize]
                } else {
                    f[k as usize]
                }
            };
            let j = j as isize;
            if (j + 2) as usize >= valid {
                (-at(j - 1) + 6.0 * at(j) + 3.0 * at(j + 1)) / 8.0
            } else {
                (-at(j - 1) + 9.0 * at(j) + 9.0 * at(j + 1) - at(j + 2)) / 16.0
            }
        };
        let rate = |aa: f64, bb: f64, w: f64| aa * w + bb;
        // one RK4 step of size ±h between neighbouring points
        let step = |j: usize, k: usize, w: f64| -> f64 {
            let lo = j.min(k);
            let (am, bm) = (mid(&a, -1.0, lo), mid(&b, 1.0, lo));
            let s = if k > j { h } else { -h };
            let k1 = rate(a[j], b[j], w);
            let k2 = rate(am, bm, w + 0.5 * s * k1);
            let k3 = rate(am, bm, w + 0.5 * s * k2);
            let k4 = rate(a[k], b[k], w + s * k3);
            w + s / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        };
        // odd series at the first point: w ≈ b0 x + (b2 + a1 b0) x³/3
        let x0 = 0.5 * h;
        let b2 = (b[1] - b[0]) / (2.0 * h * h);
        let b0 = b[0] - b2 * x0 * x0;
        let a1 = a[0] / x0;
        phi_prime[0] = b0 * x0 + (b2 + a1 * b0) * x0.powi(3) / 3.0;
        // outward to the peak, where the 1/r² mode shrinks
        let top = peak.min(valid - 1);
        for j in 0..top {
            phi_prime[j + 1] = step(j, j + 1, phi_prime[j]);
        }
        // inward from the edge beyond it, seeded from the local balance a w + b ≈ 0
        let last = valid - 1;
        if last > top {
            phi_prime[last] = if a[last] != 0.0 { -b[last] / a[last] } else { 0.0 };
            for j in (top + 2..=last).rev() {
                phi_prime[j - 1] = step(j, j - 1, phi_prime[j]);
            }
        }
    }
    let curvature = derivative(&phi_prime, h, -1.0);
    let mut phi_half = cumulative(&phi_prime, &curvature, h);
    let start = phi_prime[0] * h / 4.0;
    phi_half.iter_mut().for_each(|v| *v += start);
    let mut phi = vec![0.0; n];
    let mut prime = vec![0.0; n];
    for j in 0..half {
        phi[half + j] = phi_half[j];
        phi[half - 1 - j] = phi_half[j];
        prime[half + j] = phi_prime[j];
        prime[half - 1 - j] = -phi_prime[j];
    }
    Ok(Phase { phi, phi_prime: prime })
}

/// V = −ħφ̇ + (ħ²/2m)(r″/r − φ′²) − g1N r² inside the support of r; outside
/// it the edge value is continued with a non-negative slope plus ½mω²Δx².
/// The result is shifted so that its minimum is zero.
pub fn vff(amp: &Amplitude, phase: &Phase, phi_dot: &[f64], g1n: f64, params: &SplitParameters) -> Vec<f64> {
    let grid = &params.grid;
    let n = grid.n_points;
    let half = positive_half(grid);
    let h = grid.spacing();
    let m = params.mass;
    let r_max = amp.r[half..].iter().copied().fold(0.0, f64::max);
    let support = (half..n)
        .find(|&i| !(amp.r[i] >= SUPPORT_FRACTION * r_max))
        .unwrap_or(n)
        - half;
    let mut v_half = vec![0.0; half];
    for j in 0..support.max(1) {
        let i = half + j;
        let kinetic = HBAR * HBAR / (2.0 * m) * (amp.r_xx[i] / amp.r[i] - phase.phi_prime[i].powi(2));
        v_half[j] = -HBAR * phi_dot[i] + kinetic - g1n * amp.r[i] * amp.r[i];
    }
    if support < half {
        let e = support.max(1) - 1;
        let slope = if e >= 2 {
            (3.0 * v_half[e] - 4.0 * v_half[e - 1] + v_half[e - 2]) / (2.0 * h)
        } else {
            0.0
        }
        .max(0.0);
        let curvature = m * params.omega * params.omega;
        let edge = v_half[e];
        for (j, v) in v_half.iter_mut().enumerate().skip(e + 1) {
            let d = (j - e) as f64 * h;
            *v = edge + slope * d + 0.5 * curvature * d * d;
        }
    }
    let mut v = vec![0.0; n];
    for j in 0..half {
        v[half + j] = v_half[j];
        v[half - 1 - j] = v_half[j];
    }
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    v.iter_mut().for_each(|x| *x -= min);
    v
}

/// Default width of the step edge, in grid spacings.
pub const STEP_WIDTH_SPACINGS: f64 = 6.0;

/// Step θ(x) on the grid. With `width_spacings` = 0 it is 0 for x < 0, 1 for
/// x > 0 and ½ on a point at the origin; otherwise the edge is the error
/// function ½[1 + erf(x/√2σ)] with σ = `width_spacings` grid spacings, which
/// keeps the split-step propagator from radiating grid-scale noise.
pub fn step_function(grid: &Grid1D, width_spacings: f64) -> Vec<f64> {
    let h = grid.spacing();
    let sigma = width_spacings.max(0.0) * h;
    grid.points()
        .iter()
        .map(|&x| {
            if sigma > 0.0 {
                0.5 * (1.0 + libm::erf(x / (std::f64::consts::SQRT_2 * sigma)))
            } else if x.abs() < 0.25 * h {
                0.5
            } else if x > 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// V + λθ(x) for any time-dependent potential.
pub struct Perturbed<'a> {
    pub inner: &'a dyn TimePotential,
    /// Step height λ, J.
    pub lambda: f64,
    step: Vec<f64>,
}

impl TimePotential for Perturbed<'_> {
    fn fill(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.inner.fill(t, x, out)?;
        if self.lambda != 0.0 {
            out.iter_mut().zip(&self.step).for_each(|(o, s)| *o += self.lambda * s);
        }
        Ok(())
    }
}

/// Add a step of height λ (J) at x = 0; see [`step_function`] for the width.
pub fn perturbed_potential<'a>(
    inner: &'a dyn TimePotential,
    lambda: f64,
    grid: &Grid1D,
    width_spacings: f64,
) -> Perturbed<'a> {
    Perturbed {
        inner,
        lambda,
        step: step_function(grid, width_spacings),
    }
}

/// Structural, dynamical (perturbed and unperturbed target) and initial fidelities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityQuad {
    pub f_s: f64,
    pub f_d: f64,
    pub f_d0: f64,
    pub f_i: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct FfOptions {
    /// Real time step, s.
    pub dt: f64,
    pub ground: GroundStateOptions,
    pub two_mode_slices: usize,
    /// Edge width of the perturbing step, grid spacings.
    pub step_width: f64,
}

impl Default for FfOptions {
    fn default() -> Self {
        Self {
            dt: 5e-6,
            ground: GroundStateOptions {
                dtau: 1e-5,
                ..GroundStateOptions::default()
            },
            two_mode_slices: DEFAULT_TWO_MODE_SLICES,
            step_width: STEP_WIDTH_SPACINGS,
        }
    }
}

/// Ground state of a double well with interactions, found as two masked
/// wells sharing the population so that their chemical potentials agree.
/// Returns the state and the fraction p in x < 0.
pub fn split_ground_state(
    v: &[f64],
    mass: f64,
    g1n: f64,
    grid: &Grid1D,
    ground: &GroundStateOptions,
) -> Result<(Wavefunction1D, f64)> {
    let n = grid.n_points;
    if v.len() != n {
        return Err(Error::invalid("potential", "length must match the grid"));
    }
    let points = grid.points();
    let left: Vec<f64> = points.iter().map(|&x| if x < 0.0 { 1.0 } else { 0.0 }).collect();
    let right: Vec<f64> = points.iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect();
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let wall = 100.0 * (hi - lo).max(f64::MIN_POSITIVE);
    // linear seeds, each confined to its side by a high wall on the other
    let seed = |mask: &[f64]| -> Result<Wavefunction1D> {
        let walled: Vec<f64> = v.iter().zip(mask).map(|(&vv, &w)| vv + (1.0 - w) * wall).collect();
        let spec = lowest_eigenpairs(&grid_hamiltonian(&walled, mass, grid)?, grid, 1)?;
        let masked: Vec<f64> = spec.states[0].iter().zip(mask).map(|(a, w)| a * w).collect();
        Wavefunction1D::from_real(*grid, &masked)?.normalized()
    };
    let mut psi_l = seed(&left)?;
    let mut psi_r = seed(&right)?;
    let solve = |p: f64, psi_l: &mut Wavefunction1D, psi_r: &mut Wavefunction1D| -> Result<f64> {
        let l = relax_masked(psi_l.clone(), v, mass, g1n * p, ground, Some(&left))?;
        let r = relax_masked(psi_r.clone(), v, mass, g1n * (1.0 - p), ground, Some(&right))?;
        *psi_l = l.psi;
        *psi_r = r.psi;
        Ok(l.mu - r.mu)
    };
    let combine = |p: f64, l: &Wavefunction1D, r: &Wavefunction1D| -> Result<Wavefunction1D> {
        let amps = l
            .amplitudes
            .iter()
            .zip(&r.amplitudes)
            .map(|(a, b)| a * p.sqrt() + b * (1.0 - p).sqrt())
            .collect();
        Wavefunction1D::new(*grid, amps)?.normalized()
    };
    // μ_L − μ_R grows with the left fraction
    let mut a = (0.0, solve(0.0, &mut psi_l, &mut psi_r)?);
    if a.1 >= 0.0 {
        return Ok((combine(0.0, &psi_l, &psi_r)?, 0.0));
    }
    let mut b = (1.0, solve(1.0, &mut psi_l, &mut psi_r)?);
    if b.1 <= 0.0 {
        return Ok((combine(1.0, &psi_l, &psi_r)?, 1.0));
    }
    let mut p = 0.5;
    let mut side = 0i32;
    for _ in 0..60 {
        p = (a.0 * b.1 - b.0 * a.1) / (b.1 - a.1);
        if !(p > a.0 && p < b.0) {
            p = 0.5 * (a.0 + b.0);
        }
        let f = solve(p, &mut psi_l, &mut psi_r)?;
        if f == 0.0 {
            break;
        }
        // Illinois: halve the stale end's weight when one side repeats
        if f < 0.0 {
            a = (p, f);
            if side == -1 {
                b.1 *= 0.5;
            }
            side = -1;
        } else {
            b = (p, f);
            if side == 1 {
                a.1 *= 0.5;
            }
            side = 1;
        }
        if b.0 - a.0 < 1e-10 {
            break;
        }
    }
    Ok((combine(p, &psi_l, &psi_r)?, p))
}

/// The four reference states of a fidelity run.
struct ReferenceStates {
    unperturbed_start: Wavefunction1D,
    perturbed_start: Wavefunction1D,
    unperturbed_end: Wavefunction1D,
    perturbed_end: Wavefunction1D,
}

fn linear_ground(v: &[f64], grid: &Grid1D, mass: f64, symmetric: bool) -> Result<Wavefunction1D> {
    let h = grid_hamiltonian(v, mass, grid)?;
    let spec = if symmetric {
        mirror_eigenpairs(&h, grid, 1)?
    } else {
        lowest_eigenpairs(&h, grid, 1)?
    };
    Wavefunction1D::from_real(*grid, &spec.states[0])
}

fn with_step(v: &[f64], lambda: f64, step: &[f64]) -> Vec<f64> {
    v.iter().zip(step).map(|(a, s)| a + lambda * s).collect()
}

fn end_states(design: &AmplitudeDesign, lambda: f64, options: &FfOptions) -> Result<(Wavefunction1D, Wavefunction1D)> {
    let p = design.params();
    let v = design.endpoint_potential(p.t_final)?;
    let step = step_function(&p.grid, options.step_width);
    if design.g1n() == 0.0 {
        let unperturbed = linear_ground(&v, &p.grid, p.mass, true)?;
        let perturbed = if lambda == 0.0 {
            unperturbed.clone()
        } else {
            linear_ground(&with_step(&v, lambda, &step), &p.grid, p.mass, false)?
        };
        return Ok((unperturbed, perturbed));
    }
    let (unperturbed, _) = split_ground_state(&v, p.mass, design.g1n(), &p.grid, &options.ground)?;
    let perturbed = if lambda == 0.0 {
        unperturbed.clone()
    } else {
        split_ground_state(&with_step(&v, lambda, &step), p.mass, design.g1n(), &p.grid, &options.ground)?.0
    };
    Ok((unperturbed, perturbed))
}

fn reference_states(design: &AmplitudeDesign, lambda: f64, options: &FfOptions) -> Result<ReferenceStates> {
    let p = design.params();
    let v = design.endpoint_potential(0.0)?;
    let step = step_function(&p.grid, options.step_width);
    let (unperturbed_start, perturbed_start) = if design.g1n() == 0.0 {
        let u = linear_ground(&v, &p.grid, p.mass, true)?;
        let w = if lambda == 0.0 {
            u.clone()
        } else {
            linear_ground(&with_step(&v, lambda, &step), &p.grid, p.mass, false)?
        };
        (u, w)
    } else {
        let u = gpe_ground_state(&v, p.mass, design.g1n(), &p.grid, &options.ground)?.psi;
        let w = if lambda == 0.0 {
            u.clone()
        } else {
            relax(u.clone(), &with_step(&v, lambda, &step), p.mass, design.g1n(), &options.ground)?.psi
        };
        (u, w)
    };
    let (unperturbed_end, perturbed_end) = end_states(design, lambda, options)?;
    Ok(ReferenceStates {
        unperturbed_start,
        perturbed_start,
        unperturbed_end,
        perturbed_end,
    })
}

/// F_S = |⟨ψ₀⁻(t_f)|ψ_λ⁻(t_f)⟩| alone; `lambda` in J.
pub fn structural_fidelity(design: &AmplitudeDesign, lambda: f64, options: &FfOptions) -> Result<f64> {
    let (u, w) = end_states(design, lambda, options)?;
    Ok(u.fidelity(&w))
}

/// All four fidelities, propagating ψ_λ⁻(0) under V_FF + λθ; `lambda` in J.
pub fn fidelity_quad(design: &AmplitudeDesign, lambda: f64, options: &FfOptions) -> Result<FidelityQuad> {
    let p = design.params();
    let refs = reference_states(design, lambda, options)?;
    let potential = perturbed_potential(design, lambda, &p.grid, options.step_width);
    let evolved = propagate_tdse(&refs.perturbed_start, &potential, p.mass, design.g1n(), p.t_final, options.dt)?;
    Ok(FidelityQuad {
        f_s: refs.unperturbed_end.fidelity(&refs.perturbed_end),
        f_d: evolved.fidelity(&refs.perturbed_end),
        f_d0: evolved.fidelity(&refs.unperturbed_end),
        f_i: refs.perturbed_start.fidelity(&refs.unperturbed_start),
    })
}

/// Two-mode model in the moving basis R, L = (ψ₀⁻ ± ψ₀⁺)/√2 built from the
/// instantaneous eigenstates of the unperturbed potential.
#[derive(Debug, Clone)]
pub struct TwoModeModel {
    pub t_final: f64,
    pub times: Vec<f64>,
    /// Tunneling rate δ(t) = −2⟨R|H|L⟩/ħ, rad/s.
    pub delta: Vec<f64>,
    /// ⟨R|θ|L⟩, which adds −2λ⟨R|θ|L⟩/ħ to δ under the perturbation.
    pub step_coupling: Vec<f64>,
    log_delta: CubicSpline,
    coupling: CubicSpline,
}

impl TwoModeModel {
    /// Rebuild the basis on `n_slices` uniformly spaced times; the step edge
    /// is `step_width` grid spacings wide.
    pub fn new(design: &AmplitudeDesign, n_slices: usize, step_width: f64) -> Result<Self> {
        if n_slices < 4 {
            return Err(Error::invalid("n_slices", "need at least four slices"));
        }
        let p = design.params();
        let grid = p.grid;
        let spacing = grid.spacing();
        let step = step_function(&grid, step_width);
        let times: Vec<f64> = (0..n_slices)
            .map(|k| p.t_final * k as f64 / (n_slices - 1) as f64)
            .collect();
        let mut delta = Vec::with_capacity(n_slices);
        let mut step_coupling = Vec::with_capacity(n_slices);
        for (k, &t) in times.iter().enumerate() {
            let v = if k == 0 || k + 1 == n_slices {
                design.endpoint_potential(t)?
            } else {
                design.potential(t)?
            };
            let h = grid_hamiltonian(&v, p.mass, &grid)?;
            let spec = mirror_eigenpairs(&h, &grid, 2)?;
            let (g, e) = (&spec.states[0], &spec.states[1]);
            let right: Vec<f64> = g.iter().zip(e).map(|(a, b)| (a + b) / 2f64.sqrt()).collect();
            let left: Vec<f64> = g.iter().zip(e).map(|(a, b)| (a - b) / 2f64.sqrt()).collect();
            // H is stored as H/ħ acting on unit-norm vectors: rescale by h
            let hl = h.apply(&left);
            let rhl: f64 = right.iter().zip(&hl).map(|(a, b)| a * b).sum::<f64>() * spacing;
            let d = -2.0 * rhl;
            if !(d > 0.0) {
                return Err(Error::invalid("design", format!("non-positive tunneling rate at t = {t:e} s")));
            }
            delta.push(d);
            step_coupling.push(right.iter().zip(&left).zip(&step).map(|((a, b), s)| a * b * s).sum::<f64>() * spacing);
        }
        let log_delta = CubicSpline::new(times.clone(), delta.iter().map(|d| d.ln()).collect())?;
        let coupling = CubicSpline::new(times.clone(), step_coupling.clone())?;
        Ok(Self {
            t_final: p.t_final,
            times,
            delta,
            step_coupling,
            log_delta,
            coupling,
        })
    }

    /// Interpolated δ(t), rad/s.
    pub fn delta_at(&self, t: f64) -> f64 {
        self.log_delta.eval(t).exp()
    }

    fn hamiltonian(&self, lambda: f64, t: f64) -> TwoLevelHamiltonian {
        let bias = lambda / HBAR;
        TwoLevelHamiltonian::new(bias, self.delta_at(t) - 2.0 * bias * self.coupling.eval(t))
    }

    /// Model fidelities for a constant step λ (J).
    pub fn fidelities(&self, lambda: f64) -> Result<FidelityQuad> {
        let tf = self.t_final;
        let ground = |lam: f64, t: f64| -> Result<TwoLevelAmplitudes> {
            Ok(twolevel::eigensystem(&self.hamiltonian(lam, t))?.psi_minus)
        };
        let schedule = FnSchedule {
            t_final: tf,
            f: |t: f64| Ok(self.hamiltonian(lambda, t)),
        };
        let start = ground(lambda, 0.0)?;
        let dt = twolevel::default_step(&schedule, tf)?;
        let end = twolevel::propagate(&schedule, start, tf, dt)?;
        let unperturbed_end = ground(0.0, tf)?;
        let perturbed_end = ground(lambda, tf)?;
        Ok(FidelityQuad {
            f_s: twolevel::fidelity(&unperturbed_end, &perturbed_end),
            f_d: twolevel::fidelity(&end, &perturbed_end),
            f_d0: twolevel::fidelity(&end, &unperturbed_end),
            f_i: twolevel::fidelity(&start, &ground(0.0, 0.0)?),
        })
    }
}

/// Model fidelities for one λ (J).
pub fn moving_two_mode(design: &AmplitudeDesign, lambda: f64, options: &FfOptions) -> Result<FidelityQuad> {
    TwoModeModel::new(design, options.two_mode_slices, options.step_width)?.fidelities(lambda)
}

/// Largest λ for which the sudden picture keeps F_D⁰ ≈ 1: 0.2ħ/t_f, J.
pub fn sudden_bound(t_final: f64) -> f64 {
    0.2 * HBAR / t_final
}

/// Scale of the sudden condition λ ≪ 2ħ/t_f, J.
pub fn sudden_condition(t_final: f64) -> f64 {
    2.0 * HBAR / t_final
}

/// Asymmetry up to which interactions keep the splitting balanced: ħω ĝN, J.
pub fn stability_threshold(omega: f64, g_hat: f64) -> f64 {
    HBAR * omega * g_hat
}

/// Energies (E_L, E_R) per particle in units of ħω of two harmonic wells
/// holding fractions `n_left` and 1 − `n_left`; the right well is raised by
/// λ/ħω = `lambda_hat`.
pub fn appendix_a_energies(n_left: f64, lambda_hat: f64, g_hat: f64) -> (f64, f64) {
    let n_right = 1.0 - n_left;
    let c = g_hat / (2.0 * (2.0 * PI).sqrt());
    (
        0.5 * n_left + c * n_left * n_left,
        n_right * (0.5 + lambda_hat) + c * n_right * n_right,
    )
}

/// ΔN/N = (N_L − N_R)/N at the energy minimum, clamped to [−1, 1], for a
/// step λ (J) in a trap of frequency ω and coupling ĝN.
pub fn appendix_a_imbalance(lambda: f64, omega: f64, g_hat: f64) -> Result<f64> {
    if !(g_hat > 0.0 && g_hat.is_finite()) {
        return Err(Error::invalid("g_hat", "must be positive; without interactions the state collapses"));
    }
    if !(omega > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid("omega", "must be positive with a finite step"));
    }
    let lambda_hat = lambda / (HBAR * omega);
    Ok(((2.0 * PI).sqrt() * lambda_hat / g_hat).clamp(-1.0, 1.0))
}

/// ΔN/N by direct minimization of E_L + E_R over the left fraction.
pub fn appendix_a_brute_force(lambda: f64, omega: f64, g_hat: f64) -> Result<f64> {
    if !(g_hat >= 0.0 && omega > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("g_hat", "needs ĝN ≥ 0, ω > 0 and a finite step"));
    }
    let lambda_hat = lambda / (HBAR * omega);
    let total = |n: f64| {
        let (l, r) = appendix_a_energies(n, lambda_hat, g_hat);
        l + r
    };
    // the energy is convex in the fraction: golden-section search
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    while b - a > 1e-13 {
        if total(c) < total(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - ratio * (b - a);
        d = a + ratio * (b - a);
    }
    let n_left = 0.5 * (a + b);
    Ok(2.0 * n_left - 1.0)
}

/// One row of a λ or ĝN scan with the full and model fidelities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityScanRow {
    /// λ/ħω, or ĝN for coupling scans.
    pub abscissa: f64,
    pub full: FidelityQuad,
    pub model: Option<FidelityQuad>,
}

/// CSV with columns (abscissa, F_S, F_D, F_D0, F_I, model_F_S, model_F_D,
/// model_F_D0); missing model values are left empty.
pub fn write_fidelity_scan_csv<W: Write>(abscissa: &str, rows: &[FidelityScanRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([abscissa, "F_S", "F_D", "F_D0", "F_I", "model_F_S", "model_F_D", "model_F_D0"])?;
    for row in rows {
        let mut record = vec![
            fmt12(row.abscissa),
            fmt12(row.full.f_s),
            fmt12(row.full.f_d),
            fmt12(row.full.f_d0),
            fmt12(row.full.f_i),
        ];
        match &row.model {
            Some(m) => record.extend([fmt12(m.f_s), fmt12(m.f_d), fmt12(m.f_d0)]),
            None => record.extend([String::new(), String::new(), String::new()]),
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// `n` values spaced logarithmically over [lo, hi].
pub fn log_space(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::invalid("range", "needs 0 < lo ≤ hi"));
    }
    Ok(match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n - 1) as f64).exp())
            .collect(),
    })
}
