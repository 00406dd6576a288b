//! Control-law design: FAQUAD, invariant-based inverse engineering, and the
//! reference schedules they are compared against.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{Error, Result};
use crate::interp::CubicSpline;
use crate::quad::adaptive_simpson;
use crate::twolevel::{Schedule, TwoLevelHamiltonian};

/// Minimum number of samples when a protocol is tabulated.
pub const TABULATED_SAMPLES: usize = 4001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Faquad,
    Invariant,
    LinearReference,
    Tabulated,
}

impl std::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ProtocolKind::Faquad => "faquad",
            ProtocolKind::Invariant => "invariant",
            ProtocolKind::LinearReference => "linear_reference",
            ProtocolKind::Tabulated => "tabulated",
        };
        f.write_str(s)
    }
}

/// A control law (δ(t), λ(t)) on [0, t_final], both in rad/s.
#[derive(Debug, Clone)]
pub struct ControlProtocol {
    t_final: f64,
    law: Law,
}

#[derive(Debug, Clone)]
enum Law {
    Faquad(FaquadSchedule),
    Invariant(InvariantSchedule),
    Tabulated {
        kind: ProtocolKind,
        delta: CubicSpline,
        lambda: CubicSpline,
    },
}

impl ControlProtocol {
    pub fn kind(&self) -> ProtocolKind {
        match &self.law {
            Law::Faquad(_) => ProtocolKind::Faquad,
            Law::Invariant(_) => ProtocolKind::Invariant,
            Law::Tabulated { kind, .. } => *kind,
        }
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    fn check_time(&self, t: f64) -> Result<f64> {
        let slack = 1e-12 * self.t_final;
        if !t.is_finite() || t < -slack || t > self.t_final + slack {
            return Err(Error::ProtocolEvaluation {
                t,
                reason: format!("outside [0, {:e}] s", self.t_final),
            });
        }
        Ok(t.clamp(0.0, self.t_final))
    }

    /// (δ(t), λ(t)) in rad/s.
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        let t = self.check_time(t)?;
        let out = match &self.law {
            Law::Faquad(f) => (f.delta(t), f.lambda),
            Law::Invariant(inv) => inv.controls(t),
            Law::Tabulated { delta, lambda, .. } => (delta.eval(t), lambda.eval(t)),
        };
        if !(out.0.is_finite() && out.1.is_finite()) {
            return Err(Error::ProtocolEvaluation {
                t,
                reason: "non-finite control value".into(),
            });
        }
        Ok(out)
    }

    /// dδ/dt: analytic where the law allows it, otherwise a centered
    /// difference (one-sided at the ends).
    pub fn delta_dot(&self, t: f64) -> Result<f64> {
        let t = self.check_time(t)?;
        match &self.law {
            Law::Faquad(f) => Ok(f.delta_dot(t)),
            Law::Tabulated { delta, .. } => Ok(delta.derivative(t)),
            Law::Invariant(_) => {
                let h = 1e-6 * self.t_final;
                let (a, b) = ((t - h).max(0.0), (t + h).min(self.t_final));
                Ok((self.eval(b)?.0 - self.eval(a)?.0) / (b - a))
            }
        }
    }

    /// The FAQUAD adiabaticity constant c, for FAQUAD protocols.
    pub fn faquad_constant(&self) -> Option<f64> {
        match &self.law {
            Law::Faquad(f) => Some(f.c()),
            _ => None,
        }
    }

    /// Build a tabulated protocol from samples (t, δ, λ) with cubic interpolation.
    pub fn from_samples(kind: ProtocolKind, t: Vec<f64>, delta: Vec<f64>, lambda: Vec<f64>) -> Result<Self> {
        if t.len() < 2 || t.len() != delta.len() || t.len() != lambda.len() {
            return Err(Error::invalid("samples", "need at least two rows of equal length"));
        }
        if t[0] != 0.0 {
            return Err(Error::invalid("samples", "first time must be 0"));
        }
        if delta.iter().chain(&lambda).any(|v| !v.is_finite()) {
            return Err(Error::invalid("samples", "non-finite control value"));
        }
        let t_final = t[t.len() - 1];
        Ok(Self {
            t_final,
            law: Law::Tabulated {
                kind,
                delta: CubicSpline::new(t.clone(), delta)?,
                lambda: CubicSpline::new(t, lambda)?,
            },
        })
    }

    /// Uniform samples (t, δ, λ) at `n` points including both ends.
    pub fn samples(&self, n: usize) -> Result<Vec<(f64, f64, f64)>> {
        let n = n.max(2);
        (0..n)
            .map(|k| {
                let t = if k == n - 1 {
                    self.t_final
                } else {
                    self.t_final * k as f64 / (n - 1) as f64
                };
                self.eval(t).map(|(d, l)| (t, d, l))
            })
            .collect()
    }

    /// Dense tabulated copy (≥ 4001 uniform samples).
    pub fn tabulate(&self, n: usize) -> Result<Self> {
        let rows = self.samples(n.max(TABULATED_SAMPLES))?;
        let (t, (d, l)): (Vec<_>, (Vec<_>, Vec<_>)) = rows.into_iter().map(|(t, d, l)| (t, (d, l))).unzip();
        Self::from_samples(ProtocolKind::Tabulated, t, d, l)
    }
}

impl Schedule for ControlProtocol {
    fn t_final(&self) -> f64 {
        self.t_final
    }

    fn hamiltonian(&self, t: f64) -> Result<TwoLevelHamiltonian> {
        let (delta, lambda) = self.eval(t)?;
        Ok(TwoLevelHamiltonian::new(lambda, delta))
    }
}

fn require_positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::invalid(name, format!("must be positive and finite, got {v}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// FAQUAD

/// Constant-bias FAQUAD schedule with closed-form δ_fa(t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaquadSchedule {
    pub omega0: f64,
    pub lambda: f64,
    pub t_final: f64,
}

impl FaquadSchedule {
    fn radicand(&self, t: f64) -> f64 {
        let (w, l, tf) = (self.omega0, self.lambda, self.t_final);
        l * l * tf * tf + w * w * t * (2.0 * tf - t)
    }

    pub fn delta(&self, t: f64) -> f64 {
        self.omega0 * self.lambda * (self.t_final - t) / self.radicand(t).sqrt()
    }

    pub fn delta_dot(&self, t: f64) -> f64 {
        let (w, l, tf) = (self.omega0, self.lambda, self.t_final);
        let d = self.radicand(t);
        -w * l * (l * l + w * w) * tf * tf / (d * d.sqrt())
    }

    /// Constant value of the adiabaticity parameter along the schedule.
    pub fn c(&self) -> f64 {
        let (w, l) = (self.omega0, self.lambda);
        w / (2.0 * l * (w * w + l * l).sqrt() * self.t_final)
    }
}

pub fn faquad_schedule(omega0: f64, lambda_const: f64, t_final: f64) -> Result<ControlProtocol> {
    require_positive("omega0", omega0)?;
    require_positive("lambda", lambda_const)?;
    require_positive("t_final", t_final)?;
    Ok(ControlProtocol {
        t_final,
        law: Law::Faquad(FaquadSchedule {
            omega0,
            lambda: lambda_const,
            t_final,
        }),
    })
}

/// FAQUAD time bound 2π/φ₁₂ with φ₁₂ = ∫₀¹ √(λ²+δ²)(s t_f) ds.
pub fn faquad_min_time(protocol: &ControlProtocol) -> Result<f64> {
    let tf = protocol.t_final();
    let gap = |s: f64| -> Result<f64> {
        let (d, l) = protocol.eval(s * tf)?;
        Ok(l.hypot(d))
    };
    let phi12 = adaptive_simpson(&gap, 0.0, 1.0, 1e-11)?;
    Ok(TAU / phi12)
}

// ---------------------------------------------------------------------------
// Invariant-based inverse engineering

/// Polynomial auxiliary angles θ(t) = Σ a_j t^j (j ≤ 5) and φ(t) = Σ b_j t^j
/// (j ≤ 4) of the two-level invariant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnglePair {
    pub theta_coeffs: [f64; 6],
    pub phi_coeffs: [f64; 5],
    pub t_final: f64,
    pub omega0: f64,
    pub lambda_f: f64,
    pub lambda_dot0: f64,
}

fn horner(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * t + a)
}

/// k-th derivative of Σ c_j t^j.
fn poly_derivative(c: &[f64], k: usize, t: f64) -> f64 {
    let mut acc = 0.0;
    for j in (k..c.len()).rev() {
        let falling: f64 = (j + 1 - k..=j).map(|v| v as f64).product();
        acc = acc * t + c[j] * falling;
    }
    acc
}

/// Taylor coefficients of Σ c_j t^j about t = t0.
fn shift_poly<const N: usize>(c: &[f64; N], t0: f64) -> [f64; N] {
    let mut out = [0.0; N];
    for (k, o) in out.iter_mut().enumerate() {
        let mut binom = 1.0;
        let mut acc = 0.0;
        for j in k..N {
            if j > k {
                binom = binom * j as f64 / (j - k) as f64;
            }
            acc += c[j] * binom * t0.powi((j - k) as i32);
        }
        *o = acc;
    }
    out
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

impl AnglePair {
    pub fn theta(&self, t: f64) -> f64 {
        horner(&self.theta_coeffs, t)
    }

    pub fn phi(&self, t: f64) -> f64 {
        horner(&self.phi_coeffs, t)
    }

    pub fn theta_derivative(&self, order: usize, t: f64) -> f64 {
        poly_derivative(&self.theta_coeffs, order, t)
    }

    pub fn phi_derivative(&self, order: usize, t: f64) -> f64 {
        poly_derivative(&self.phi_coeffs, order, t)
    }

    /// Boundary conditions as (value, required) pairs, θ first then φ.
    pub fn boundary_conditions(&self) -> [(f64, f64); 11] {
        let tf = self.t_final;
        [
            (self.theta(0.0), FRAC_PI_2),
            (self.theta_derivative(1, 0.0), 0.0),
            (self.theta_derivative(2, 0.0), 0.0),
            (self.theta_derivative(3, 0.0), -self.omega0 * self.lambda_dot0),
            (self.theta(tf), 0.0),
            (self.theta_derivative(1, tf), 0.0),
            (self.phi(0.0), PI),
            (self.phi_derivative(1, 0.0), 0.0),
            (self.phi_derivative(2, 0.0), -self.lambda_dot0),
            (self.phi(tf), FRAC_PI_2),
            (self.phi_derivative(1, tf), -self.lambda_f / 3.0),
        ]
    }
}

/// Solve the θ and φ boundary systems.
///
/// The t = 0 conditions fix a₀..a₃ and b₀..b₂ directly; the t_f conditions
/// leave a 2×2 system for each angle, solved in t_f-scaled variables.
pub fn design_invariant_angles(omega0: f64, lambda_f: f64, lambda_dot0: f64, t_final: f64) -> Result<AnglePair> {
    require_positive("omega0", omega0)?;
    require_positive("lambda_f", lambda_f)?;
    if lambda_dot0 == 0.0 || !lambda_dot0.is_finite() {
        return Err(Error::invalid("lambda_dot0", "must be non-zero and finite"));
    }
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(Error::SingularSystem(format!(
            "boundary system is singular for t_final = {t_final}"
        )));
    }
    let tf = t_final;

    let a3 = -omega0 * lambda_dot0 / 6.0;
    // θ(t_f) = 0 and θ̇(t_f) = 0 in A = a₄t_f⁴, B = a₅t_f⁵:
    //   A + B = −(π/2 + a₃t_f³),  4A + 5B = −3a₃t_f³
    let r1 = -(FRAC_PI_2 + a3 * tf.powi(3));
    let r2 = -3.0 * a3 * tf.powi(3);
    let b = r2 - 4.0 * r1;
    let a = r1 - b;
    let theta_coeffs = [FRAC_PI_2, 0.0, 0.0, a3, a / tf.powi(4), b / tf.powi(5)];

    let b2 = -lambda_dot0 / 2.0;
    // φ(t_f) = π/2 and φ̇(t_f) = −λ_f/3 in C = b₃t_f³, D = b₄t_f⁴:
    //   C + D = −π/2 − b₂t_f²,  3C + 4D = −λ_f t_f/3 − 2b₂t_f²
    let s1 = -FRAC_PI_2 - b2 * tf * tf;
    let s2 = -lambda_f * tf / 3.0 - 2.0 * b2 * tf * tf;
    let d = s2 - 3.0 * s1;
    let c = s1 - d;
    let phi_coeffs = [PI, 0.0, b2, c / tf.powi(3), d / tf.powi(4)];

    Ok(AnglePair {
        theta_coeffs,
        phi_coeffs,
        t_final,
        omega0,
        lambda_f,
        lambda_dot0,
    })
}

/// Evaluates (δ^inv, λ^inv) with the vanishing factors of sin φ and cot θ
/// divided out analytically, so the 0/0 limits at both ends are exact.
#[derive(Debug, Clone)]
struct InvariantSchedule {
    angles: AnglePair,
    // Taylor coefficients about t_f; the constant and linear θ terms and the
    // constant φ offset vanish identically and are dropped.
    theta_tf: [f64; 6],
    phi_tf: [f64; 5],
}

impl InvariantSchedule {
    fn new(angles: AnglePair) -> Self {
        let mut theta_tf = shift_poly(&angles.theta_coeffs, angles.t_final);
        theta_tf[0] = 0.0;
        theta_tf[1] = 0.0;
        let mut phi_tf = shift_poly(&angles.phi_coeffs, angles.t_final);
        phi_tf[0] = FRAC_PI_2;
        Self {
            angles,
            theta_tf,
            phi_tf,
        }
    }

    /// sin φ / t² near t = 0, sin φ elsewhere; same sign as sin φ.
    fn reduced_sin_phi(&self, t: f64) -> f64 {
        if t <= 0.5 * self.angles.t_final {
            let b = &self.angles.phi_coeffs;
            let q = b[2] + t * (b[3] + t * b[4]);
            -q * sinc(t * t * q)
        } else {
            (self.angles.phi(t) - FRAC_PI_2).cos()
        }
    }

    /// sin θ, divided by (t − t_f)² near t_f.
    fn reduced_sin_theta(&self, t: f64) -> f64 {
        if t <= 0.5 * self.angles.t_final {
            (self.angles.theta(t) - FRAC_PI_2).cos()
        } else {
            let c = &self.theta_tf;
            let tau = t - self.angles.t_final;
            let u = c[2] + tau * (c[3] + tau * (c[4] + tau * c[5]));
            u * sinc(tau * tau * u)
        }
    }

    fn controls(&self, t: f64) -> (f64, f64) {
        let tf = self.angles.t_final;
        if t <= 0.5 * tf {
            let a = &self.angles.theta_coeffs;
            let b = &self.angles.phi_coeffs;
            // θ − π/2 = t³ P(t),  θ̇ = t² P₁(t),  φ − π = t² Q(t)
            let p = a[3] + t * (a[4] + t * a[5]);
            let p1 = 3.0 * a[3] + t * (4.0 * a[4] + t * 5.0 * a[5]);
            let q = b[2] + t * (b[3] + t * b[4]);
            let big_theta = t * t * t * p;
            let big_phi = t * t * q;
            let phi_dot = t * (2.0 * b[2] + t * (3.0 * b[3] + t * 4.0 * b[4]));
            let delta = p1 / (q * sinc(big_phi));
            let lambda = -delta * big_theta.tan() * big_phi.cos() - phi_dot;
            (delta, lambda)
        } else {
            let c = &self.theta_tf;
            let d = &self.phi_tf;
            let tau = t - tf;
            // θ = τ² U,  θ̇ = τ U₁,  φ − π/2 = τ W
            let u = c[2] + tau * (c[3] + tau * (c[4] + tau * c[5]));
            let u1 = 2.0 * c[2] + tau * (3.0 * c[3] + tau * (4.0 * c[4] + tau * 5.0 * c[5]));
            let w = d[1] + tau * (d[2] + tau * (d[3] + tau * d[4]));
            let phi_dot = d[1] + tau * (2.0 * d[2] + tau * (3.0 * d[3] + tau * 4.0 * d[4]));
            let theta = tau * tau * u;
            let psi = tau * w;
            let delta = -tau * u1 / psi.cos();
            let lambda = -u1 * w * sinc(psi) * theta.cos() / (psi.cos() * u * sinc(theta)) - phi_dot;
            (delta, lambda)
        }
    }

    /// Reject designs whose Hamiltonian diverges inside (0, t_f).
    fn check_regular(&self) -> Result<()> {
        let tf = self.angles.t_final;
        if self.theta_tf[2] == 0.0 || !self.theta_tf[2].is_finite() {
            return Err(Error::SingularProtocol {
                t: tf,
                reason: "θ̈(t_f) = 0 leaves λ(t_f) undetermined".into(),
            });
        }
        let n = TABULATED_SAMPLES;
        let grid = |k: usize| tf * k as f64 / (n - 1) as f64;
        let theta_dot_scale = (0..n)
            .map(|k| self.angles.theta_derivative(1, grid(k)).abs())
            .fold(0.0, f64::max);
        for k in 0..n - 1 {
            let (t0, t1) = (grid(k), grid(k + 1));
            if self.reduced_sin_phi(t0).signum() != self.reduced_sin_phi(t1).signum() {
                let root = bisect(|t| self.reduced_sin_phi(t), t0, t1);
                if self.angles.theta_derivative(1, root).abs() > 1e-9 * theta_dot_scale {
                    return Err(Error::SingularProtocol {
                        t: root,
                        reason: "sin φ vanishes where θ̇ ≠ 0 (δ diverges)".into(),
                    });
                }
            }
            if self.reduced_sin_theta(t0).signum() != self.reduced_sin_theta(t1).signum() {
                let root = bisect(|t| self.reduced_sin_theta(t), t0, t1);
                return Err(Error::SingularProtocol {
                    t: root,
                    reason: "sin θ vanishes inside the interval (λ diverges)".into(),
                });
            }
        }
        Ok(())
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if f(m).signum() == fa.signum() {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// δ^inv = −θ̇/sin φ, λ^inv = −δ cot θ cos φ − φ̇ from the auxiliary angles.
pub fn protocol_from_angles(angles: AnglePair) -> Result<ControlProtocol> {
    for (i, (value, required)) in angles.boundary_conditions().iter().enumerate() {
        if (value - required).abs() > 1e-10 * required.abs().max(1.0) {
            return Err(Error::invalid(
                "angles",
                format!("boundary condition {i} violated: {value} vs {required}"),
            ));
        }
    }
    let schedule = InvariantSchedule::new(angles);
    schedule.check_regular()?;
    Ok(ControlProtocol {
        t_final: angles.t_final,
        law: Law::Invariant(schedule),
    })
}

/// Invariant-based protocol straight from the design inputs.
pub fn invariant_protocol(omega0: f64, lambda_f: f64, lambda_dot0: f64, t_final: f64) -> Result<ControlProtocol> {
    protocol_from_angles(design_invariant_angles(omega0, lambda_f, lambda_dot0, t_final)?)
}

// ---------------------------------------------------------------------------
// Linear ramp of the lattice height

/// V₀(t) = v0_final · t / t_final, in joules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearRamp {
    pub v0_final: f64,
    pub t_final: f64,
}

impl LinearRamp {
    pub fn value(&self, t: f64) -> f64 {
        self.v0_final * t / self.t_final
    }
}

pub fn linear_ramp(v0_final: f64, t_final: f64) -> Result<LinearRamp> {
    require_positive("t_final", t_final)?;
    Ok(LinearRamp { v0_final, t_final })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twolevel::{adiabaticity_parameter, default_step, eigensystem, fidelity, propagate};
    use proptest::prelude::*;

    const W0: f64 = 2.0 * PI * 78.0;
    const LF: f64 = 190.0;
    const LDOT: f64 = 190.0;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn faquad_endpoints() {
        let p = faquad_schedule(W0, LF, 0.055).unwrap();
        assert_eq!(p.eval(0.0).unwrap(), (W0, LF));
        assert_eq!(p.eval(0.055).unwrap().0, 0.0);
    }

    #[test]
    fn faquad_midpoint_against_ode() {
        // Oracle: integrate dδ/dt = −2c(λ²+δ²)^{3/2}/λ from δ(0) = ω₀ with RK4.
        let (tf, l) = (0.055, LF);
        let p = faquad_schedule(W0, l, tf).unwrap();
        let c = p.faquad_constant().unwrap();
        let rhs = |d: f64| -2.0 * c * (l * l + d * d).powf(1.5) / l;
        let n = 200_000;
        let h = 0.5 * tf / n as f64;
        let mut d = W0;
        for _ in 0..n {
            let k1 = rhs(d);
            let k2 = rhs(d + 0.5 * h * k1);
            let k3 = rhs(d + 0.5 * h * k2);
            let k4 = rhs(d + h * k3);
            d += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let closed = p.eval(0.5 * tf).unwrap().0;
        assert!(rel(closed, d) < 1e-9, "{closed} vs {d}");
    }

    #[test]
    fn faquad_adiabaticity_is_constant() {
        let p = faquad_schedule(W0, LF, 0.055).unwrap();
        let c = p.faquad_constant().unwrap();
        for k in 0..=200 {
            let t = 0.055 * k as f64 / 200.0;
            let (d, l) = p.eval(t).unwrap();
            let a = adiabaticity_parameter(l, d, p.delta_dot(t).unwrap()).unwrap();
            assert!(rel(a, c) < 1e-8);
        }
    }

    #[test]
    fn faquad_rejects_bad_inputs() {
        assert!(faquad_schedule(0.0, 1.0, 1.0).is_err());
        assert!(faquad_schedule(1.0, -1.0, 1.0).is_err());
        assert!(faquad_schedule(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn min_time_of_constant_protocols() {
        let flat = |d: f64, l: f64| {
            ControlProtocol::from_samples(ProtocolKind::Tabulated, vec![0.0, 0.5, 1.0], vec![d; 3], vec![l; 3])
                .unwrap()
        };
        assert!(rel(faquad_min_time(&flat(W0, 0.0)).unwrap(), TAU / W0) < 1e-12);
        assert!(rel(faquad_min_time(&flat(0.0, LF)).unwrap(), TAU / LF) < 1e-12);
    }

    #[test]
    fn min_time_of_faquad_against_gauss_legendre() {
        // Oracle: composite 5-point Gauss–Legendre on 4000 panels.
        let p = faquad_schedule(W0, LF, 0.055).unwrap();
        let nodes = [
            (0.0, 128.0 / 225.0),
            (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
            (0.906_179_845_938_664, 0.236_926_885_056_189_1),
        ];
        let panels = 4000;
        let mut phi12 = 0.0;
        for k in 0..panels {
            let (a, b) = (k as f64 / panels as f64, (k + 1) as f64 / panels as f64);
            for (x, w) in nodes {
                let s = 0.5 * (a + b) + 0.5 * (b - a) * x;
                let (d, l) = p.eval(s * 0.055).unwrap();
                phi12 += 0.5 * (b - a) * w * l.hypot(d);
            }
        }
        let t_min = faquad_min_time(&p).unwrap();
        assert!(rel(t_min, TAU / phi12) < 1e-8, "{t_min} vs {}", TAU / phi12);
    }

    #[test]
    fn invariant_boundary_conditions() {
        let angles = design_invariant_angles(W0, LF, LDOT, 0.055).unwrap();
        for (i, (v, want)) in angles.boundary_conditions().iter().enumerate() {
            let scale = want.abs().max(1.0);
            assert!((v - want).abs() <= 1e-10 * scale, "condition {i}: {v} vs {want}");
        }
        assert_eq!(angles.theta(0.0), FRAC_PI_2);
        assert!(rel(angles.phi(0.055), FRAC_PI_2) < 1e-12);
    }

    #[test]
    fn invariant_coefficients_against_dense_solve() {
        // Oracle: assemble the full 6×6 and 5×5 boundary systems and LU-solve.
        let tf = 0.055;
        let angles = design_invariant_angles(W0, LF, LDOT, tf).unwrap();
        let row = |k: usize, t: f64, n: usize| -> Vec<f64> {
            (0..n)
                .map(|j| {
                    if j < k {
                        0.0
                    } else {
                        let falling: f64 = (j + 1 - k..=j).map(|v| v as f64).product();
                        falling * t.powi((j - k) as i32)
                    }
                })
                .collect()
        };
        let theta_rows = [row(0, 0.0, 6), row(1, 0.0, 6), row(2, 0.0, 6), row(3, 0.0, 6), row(0, tf, 6), row(1, tf, 6)];
        let theta_rhs = [FRAC_PI_2, 0.0, 0.0, -W0 * LDOT, 0.0, 0.0];
        let m = nalgebra::DMatrix::from_fn(6, 6, |i, j| theta_rows[i][j]);
        let sol = m.lu().solve(&nalgebra::DVector::from_column_slice(&theta_rhs)).unwrap();
        for j in 0..6 {
            let scale = sol[j].abs().max(1e-300);
            assert!((angles.theta_coeffs[j] - sol[j]).abs() <= 1e-9 * scale.max(1.0 / tf.powi(j as i32) * 1e-6));
        }
        let phi_rows = [row(0, 0.0, 5), row(1, 0.0, 5), row(2, 0.0, 5), row(0, tf, 5), row(1, tf, 5)];
        let phi_rhs = [PI, 0.0, -LDOT, FRAC_PI_2, -LF / 3.0];
        let m = nalgebra::DMatrix::from_fn(5, 5, |i, j| phi_rows[i][j]);
        let sol = m.lu().solve(&nalgebra::DVector::from_column_slice(&phi_rhs)).unwrap();
        for j in 0..5 {
            let scale = sol[j].abs().max(1.0 / tf.powi(j as i32) * 1e-6);
            assert!((angles.phi_coeffs[j] - sol[j]).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn invariant_coefficients_scale_with_duration() {
        // unit-interval solve with rates rescaled by t_f reproduces a_j t_f^j
        let tf = 0.055;
        let angles = design_invariant_angles(W0, LF, LDOT, tf).unwrap();
        let unit = design_invariant_angles(W0 * tf, LF * tf, LDOT * tf * tf, 1.0).unwrap();
        for j in 0..6 {
            let scaled = angles.theta_coeffs[j] * tf.powi(j as i32);
            assert!((scaled - unit.theta_coeffs[j]).abs() <= 1e-12 * unit.theta_coeffs[j].abs().max(1.0));
        }
        for j in 0..5 {
            let scaled = angles.phi_coeffs[j] * tf.powi(j as i32);
            assert!((scaled - unit.phi_coeffs[j]).abs() <= 1e-12 * unit.phi_coeffs[j].abs().max(1.0));
        }
    }

    #[test]
    fn invariant_design_errors() {
        assert!(design_invariant_angles(W0, LF, 0.0, 0.055).is_err());
        assert!(matches!(
            design_invariant_angles(W0, LF, LDOT, 0.0),
            Err(Error::SingularSystem(_))
        ));
    }

    /// Boundary system in the variable τ = t − t₀, solved densely.
    fn dense_angles_about(t0: f64, tf: f64) -> (Vec<f64>, Vec<f64>) {
        let row = |k: usize, tau: f64, n: usize| -> Vec<f64> {
            (0..n)
                .map(|j| {
                    if j < k {
                        0.0
                    } else {
                        let falling: f64 = (j + 1 - k..=j).map(|v| v as f64).product();
                        falling * tau.powi((j - k) as i32)
                    }
                })
                .collect()
        };
        let (s0, sf) = (-t0, tf - t0);
        let rows = [row(0, s0, 6), row(1, s0, 6), row(2, s0, 6), row(3, s0, 6), row(0, sf, 6), row(1, sf, 6)];
        let rhs = [FRAC_PI_2, 0.0, 0.0, -W0 * LDOT, 0.0, 0.0];
        let m = nalgebra::DMatrix::from_fn(6, 6, |i, j| rows[i][j]);
        let theta = m.lu().solve(&nalgebra::DVector::from_column_slice(&rhs)).unwrap();
        let rows = [row(0, s0, 5), row(1, s0, 5), row(2, s0, 5), row(0, sf, 5), row(1, sf, 5)];
        let rhs = [PI, 0.0, -LDOT, FRAC_PI_2, -LF / 3.0];
        let m = nalgebra::DMatrix::from_fn(5, 5, |i, j| rows[i][j]);
        let phi = m.lu().solve(&nalgebra::DVector::from_column_slice(&rhs)).unwrap();
        (theta.iter().copied().collect(), phi.iter().copied().collect())
    }

    /// δ = −θ̇/sin φ, λ = −δ cot θ cos φ − φ̇ evaluated directly, with the
    /// constant terms pulled out so that small offsets keep their digits.
    fn naive(theta: &[f64], phi: &[f64], tau: f64, theta_0: f64, phi_0: f64) -> (f64, f64) {
        let mut th = theta.to_vec();
        th[0] -= theta_0;
        let mut ph = phi.to_vec();
        ph[0] -= phi_0;
        let (dth, dph) = (horner(&th, tau), horner(&ph, tau));
        let (sin_th, cos_th) = ((theta_0 + dth).sin(), (theta_0 + dth).cos());
        let (sin_ph, cos_ph) = if phi_0 == PI { (-dph.sin(), -dph.cos()) } else { (dph.cos(), -dph.sin()) };
        let (sin_th, cos_th) = if theta_0 == FRAC_PI_2 { (dth.cos(), -dth.sin()) } else { (sin_th, cos_th) };
        let delta = -poly_derivative(theta, 1, tau) / sin_ph;
        (delta, -delta * cos_th / sin_th * cos_ph - poly_derivative(phi, 1, tau))
    }

    #[test]
    fn endpoint_limits_match_extrapolation() {
        let tf = 0.055;
        let angles = design_invariant_angles(W0, LF, LDOT, tf).unwrap();
        let p = protocol_from_angles(angles).unwrap();
        assert!(rel(p.eval(0.0).unwrap().0, W0) < 1e-12);
        assert!(p.eval(0.0).unwrap().1.abs() < 1e-12 * W0);
        assert!(p.eval(tf).unwrap().0.abs() < 1e-12 * W0);
        assert!(rel(p.eval(tf).unwrap().1, LF) < 1e-12);

        // Oracle: direct formula at distance h = t_f 10^{-k} from each end,
        // k = 3..6, then Richardson-extrapolated in h.
        let (th0, ph0) = dense_angles_about(0.0, tf);
        let (mut thf, phf) = dense_angles_about(tf, tf);
        // θ(t_f) = θ̇(t_f) = 0 are exact; drop the solver's ~1e-15 remainders
        // which would otherwise swamp θ ~ τ² at k = 6
        thf[0] = 0.0;
        thf[1] = 0.0;
        let near_0: Vec<(f64, f64)> = (3..=6)
            .map(|k| naive(&th0, &ph0, tf * 10f64.powi(-k), FRAC_PI_2, PI))
            .collect();
        let near_tf: Vec<(f64, f64)> = (3..=6)
            .map(|k| naive(&thf, &phf, -tf * 10f64.powi(-k), 0.0, FRAC_PI_2))
            .collect();
        let ext = |f5: f64, f6: f64| f6 + (f6 - f5) / 9.0;
        assert!(rel(near_0[0].0, W0) < 1e-1);
        assert!(rel(ext(near_0[2].0, near_0[3].0), W0) < 1e-7);
        assert!(ext(near_0[2].1, near_0[3].1).abs() < 1e-7 * W0);
        assert!(ext(near_tf[2].0, near_tf[3].0).abs() < 1e-7 * W0);
        assert!(rel(ext(near_tf[2].1, near_tf[3].1), LF) < 1e-7);

        // the factored evaluation agrees with the direct one in the interior
        for k in 1..100 {
            let t = tf * k as f64 / 100.0;
            let a = p.eval(t).unwrap();
            let b = naive(&th0, &ph0, t, FRAC_PI_2, PI);
            assert!((a.0 - b.0).abs() < 1e-9 * W0 && (a.1 - b.1).abs() < 1e-9 * W0, "t = {t}");
        }
    }

    #[test]
    fn reference_curve_shapes() {
        let tf = 0.055;
        let p = invariant_protocol(W0, LF, LDOT, tf).unwrap();
        let rows = p.samples(2001).unwrap();
        let deltas: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let lambdas: Vec<f64> = rows.iter().map(|r| r.2).collect();
        // δ stays positive and decays from its maximum at t = 0
        assert!(deltas[1..deltas.len() - 1].iter().all(|&d| d > 0.0));
        assert!(deltas.windows(2).all(|w| w[1] <= w[0]));
        // λ grows monotonically to λ_f
        assert!(lambdas.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        assert!(rel(lambdas[lambdas.len() - 1], LF) < 1e-12);
    }

    /// Largest jump between neighbouring centered-difference slopes.
    fn max_slope_jump(p: &ControlProtocol, n: usize) -> f64 {
        let tf = p.t_final();
        let h = tf * 1e-6;
        let slopes: Vec<(f64, f64)> = (1..n)
            .map(|k| {
                let t = tf * k as f64 / n as f64;
                let (d0, l0) = p.eval(t - h).unwrap();
                let (d1, l1) = p.eval(t + h).unwrap();
                ((d1 - d0) / (2.0 * h), (l1 - l0) / (2.0 * h))
            })
            .collect();
        slopes
            .windows(2)
            .map(|w| (w[1].0 - w[0].0).abs().max((w[1].1 - w[0].1).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn derivatives_are_smooth() {
        // a continuous derivative makes slope jumps shrink with the spacing
        let p = invariant_protocol(W0, LF, LDOT, 0.055).unwrap();
        let coarse = max_slope_jump(&p, 400);
        let fine = max_slope_jump(&p, 1600);
        assert!(fine < 0.3 * coarse, "{fine} vs {coarse}");
    }

    #[test]
    fn long_protocol_with_reference_rates_is_rejected() {
        // at t_f = 500 ms the cubic θ term forces θ through zero
        let err = invariant_protocol(W0, LF, LDOT, 0.5).unwrap_err();
        assert!(matches!(err, Error::SingularProtocol { .. }), "{err}");
    }

    #[test]
    fn exact_transfer_at_reference_parameters() {
        let tf = 0.055;
        let p = invariant_protocol(W0, LF, LDOT, tf).unwrap();
        let start = eigensystem(&p.hamiltonian(0.0).unwrap()).unwrap();
        let end = eigensystem(&p.hamiltonian(tf).unwrap()).unwrap();
        let dt = default_step(&p, tf).unwrap();
        let minus = propagate(&p, start.psi_minus, tf, dt).unwrap();
        let plus = propagate(&p, start.psi_plus, tf, dt).unwrap();
        assert!(fidelity(&end.psi_minus, &minus) >= 1.0 - 1e-8);
        assert!(fidelity(&end.psi_plus, &plus) >= 1.0 - 1e-8);
    }

    #[test]
    fn tabulated_copy_tracks_original() {
        let p = invariant_protocol(W0, LF, LDOT, 0.055).unwrap();
        let tab = p.tabulate(TABULATED_SAMPLES).unwrap();
        assert_eq!(tab.kind(), ProtocolKind::Tabulated);
        for k in 0..=97 {
            let t = 0.055 * k as f64 / 97.0;
            let (a, b) = (p.eval(t).unwrap(), tab.eval(t).unwrap());
            assert!((a.0 - b.0).abs() < 1e-6 * W0 && (a.1 - b.1).abs() < 1e-6 * W0);
        }
        assert!(tab.eval(0.06).is_err());
    }

    #[test]
    fn linear_ramp_values() {
        let r = linear_ramp(3.0, 2.0).unwrap();
        assert_eq!(r.value(0.0), 0.0);
        assert_eq!(r.value(2.0), 3.0);
        assert_eq!(r.value(1.0), 1.5);
        assert!(linear_ramp(1.0, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn faquad_boundaries_hold(w in 50.0f64..2000.0, l in 10.0f64..1000.0, tf in 1e-3f64..1.0) {
            let p = faquad_schedule(w, l, tf).unwrap();
            let (d0, l0) = p.eval(0.0).unwrap();
            prop_assert!(rel(d0, w) < 1e-12);
            prop_assert_eq!(l0, l);
            prop_assert_eq!(p.eval(tf).unwrap().0, 0.0);
        }
    }
}
