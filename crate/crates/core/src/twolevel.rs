//! Two-mode model of the splitting process.
//!
//! Amplitudes live in the moving bare basis {|L⟩, |R⟩}. With ħ absorbed the
//! Hamiltonian reads H = ½ [[λ, −δ], [−δ, −λ]] in the (R, L) ordering, so
//! ⟨R|H|R⟩ = λ/2, ⟨L|H|L⟩ = −λ/2 and ⟨L|H|R⟩ = −δ/2, all in rad/s.

use num_complex::Complex64;
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// Instantaneous H/ħ of the two-mode model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelHamiltonian {
    /// Bias λ between the wells, rad/s.
    pub lambda_bias: f64,
    /// Tunneling rate δ, rad/s.
    pub delta_tunnel: f64,
}

impl TwoLevelHamiltonian {
    pub fn new(lambda_bias: f64, delta_tunnel: f64) -> Self {
        Self {
            lambda_bias,
            delta_tunnel,
        }
    }

    /// Half the level splitting, ½√(λ²+δ²); also the spectral norm of H/ħ.
    pub fn norm(&self) -> f64 {
        0.5 * self.lambda_bias.hypot(self.delta_tunnel)
    }

    /// (dc_L/dt, dc_R/dt) = −i H (c_L, c_R).
    fn apply_generator(&self, psi: &TwoLevelAmplitudes) -> TwoLevelAmplitudes {
        let (l, d) = (0.5 * self.lambda_bias, 0.5 * self.delta_tunnel);
        let h_l = -l * psi.c_l - d * psi.c_r;
        let h_r = -d * psi.c_l + l * psi.c_r;
        TwoLevelAmplitudes {
            c_l: Complex64::new(h_l.im, -h_l.re),
            c_r: Complex64::new(h_r.im, -h_r.re),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelAmplitudes {
    pub c_l: Complex64,
    pub c_r: Complex64,
}

impl TwoLevelAmplitudes {
    pub fn new(c_l: Complex64, c_r: Complex64) -> Self {
        Self { c_l, c_r }
    }

    pub fn real(c_l: f64, c_r: f64) -> Self {
        Self::new(Complex64::new(c_l, 0.0), Complex64::new(c_r, 0.0))
    }

    pub fn left() -> Self {
        Self::real(1.0, 0.0)
    }

    pub fn right() -> Self {
        Self::real(0.0, 1.0)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c_l.norm_sqr() + self.c_r.norm_sqr()
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.c_l.conj() * other.c_l + self.c_r.conj() * other.c_r
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::new(self.c_l * s, self.c_r * s)
    }

    fn axpy(&self, a: f64, x: &Self) -> Self {
        Self::new(self.c_l + x.c_l * a, self.c_r + x.c_r * a)
    }
}

/// Mixing angle α with tan α = δ/λ, taken in (−π, π] via atan2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingAngle(pub f64);

impl MixingAngle {
    pub fn of(h: &TwoLevelHamiltonian) -> Result<Self> {
        if h.lambda_bias == 0.0 && h.delta_tunnel == 0.0 {
            return Err(Error::DegenerateHamiltonian);
        }
        if h.lambda_bias == 0.0 {
            return Ok(Self(FRAC_PI_2.copysign(h.delta_tunnel)));
        }
        Ok(Self(h.delta_tunnel.atan2(h.lambda_bias)))
    }

    pub fn alpha(&self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigensystem {
    pub e_minus: f64,
    pub e_plus: f64,
    pub psi_minus: TwoLevelAmplitudes,
    pub psi_plus: TwoLevelAmplitudes,
}

/// Fix the global phase: real non-negative c_L, or c_R when c_L vanishes.
fn canonical_phase(psi: TwoLevelAmplitudes) -> TwoLevelAmplitudes {
    let pivot = if psi.c_l.norm() > 1e-12 { psi.c_l } else { psi.c_r };
    if pivot.norm() == 0.0 {
        return psi;
    }
    psi.scale(pivot.conj() / pivot.norm())
}

pub fn eigensystem(h: &TwoLevelHamiltonian) -> Result<Eigensystem> {
    let alpha = MixingAngle::of(h)?.alpha();
    let (s, c) = (0.5 * alpha).sin_cos();
    let half = h.norm();
    Ok(Eigensystem {
        e_minus: -half,
        e_plus: half,
        psi_minus: canonical_phase(TwoLevelAmplitudes::real(c, s)),
        psi_plus: canonical_phase(TwoLevelAmplitudes::real(s, -c)),
    })
}

/// |λ δ̇| / (2 (λ²+δ²)^{3/2}).
pub fn adiabaticity_parameter(lambda: f64, delta: f64, delta_dot: f64) -> Result<f64> {
    if lambda == 0.0 && delta == 0.0 {
        return Err(Error::DegenerateHamiltonian);
    }
    let r2 = lambda * lambda + delta * delta;
    Ok((lambda * delta_dot).abs() / (2.0 * r2 * r2.sqrt()))
}

/// |⟨a|b⟩|.
pub fn fidelity(a: &TwoLevelAmplitudes, b: &TwoLevelAmplitudes) -> f64 {
    a.inner(b).norm()
}

/// A time-dependent two-mode Hamiltonian on [0, t_final].
pub trait Schedule {
    fn t_final(&self) -> f64;
    fn hamiltonian(&self, t: f64) -> Result<TwoLevelHamiltonian>;
}

/// Schedule backed by a closure; handy for ad-hoc control laws.
pub struct FnSchedule<F> {
    pub t_final: f64,
    pub f: F,
}

impl<F> Schedule for FnSchedule<F>
where
    F: Fn(f64) -> Result<TwoLevelHamiltonian>,
{
    fn t_final(&self) -> f64 {
        self.t_final
    }

    fn hamiltonian(&self, t: f64) -> Result<TwoLevelHamiltonian> {
        (self.f)(t)
    }
}

/// Default RK4 step: min(t_f/20000, 2π/(200 max‖H/ħ‖)), with the norm
/// sampled at 1001 points.
pub fn default_step<S: Schedule + ?Sized>(schedule: &S, t_final: f64) -> Result<f64> {
    let mut max_norm = 0.0f64;
    for k in 0..=1000 {
        let t = t_final * k as f64 / 1000.0;
        max_norm = max_norm.max(schedule.hamiltonian(t)?.norm());
    }
    let by_duration = t_final / 20_000.0;
    if max_norm == 0.0 {
        return Ok(by_duration);
    }
    Ok(by_duration.min(std::f64::consts::TAU / (200.0 * max_norm)))
}

/// Integrate i dψ/dt = (H/ħ) ψ from 0 to `t_final` with classic RK4.
///
/// The step is shrunk so an integer number of steps covers the interval.
/// The state is never renormalized.
pub fn propagate<S: Schedule + ?Sized>(
    schedule: &S,
    psi0: TwoLevelAmplitudes,
    t_final: f64,
    dt: f64,
) -> Result<TwoLevelAmplitudes> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("dt", "must be positive and finite"));
    }
    if !(t_final >= 0.0) {
        return Err(Error::invalid("t_final", "must be non-negative"));
    }
    let n = (t_final / dt).ceil().max(1.0) as usize;
    let h = t_final / n as f64;
    let mut psi = psi0;
    let mut h_start = schedule.hamiltonian(0.0)?;
    for k in 0..n {
        let t = k as f64 * h;
        let h_mid = schedule.hamiltonian(t + 0.5 * h)?;
        let h_end = schedule.hamiltonian(t + h)?;
        let k1 = h_start.apply_generator(&psi);
        let k2 = h_mid.apply_generator(&psi.axpy(0.5 * h, &k1));
        let k3 = h_mid.apply_generator(&psi.axpy(0.5 * h, &k2));
        let k4 = h_end.apply_generator(&psi.axpy(h, &k3));
        psi = TwoLevelAmplitudes::new(
            psi.c_l + (k1.c_l + 2.0 * k2.c_l + 2.0 * k3.c_l + k4.c_l) * (h / 6.0),
            psi.c_r + (k1.c_r + 2.0 * k2.c_r + 2.0 * k3.c_r + k4.c_r) * (h / 6.0),
        );
        h_start = h_end;
    }
    Ok(psi)
}
