//! Physical constants. Energies inside the toolkit are stored as angular
//! frequencies (E/ħ, rad/s); potentials handed to the coordinate-space
//! solvers are in joules.

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Mass of a ⁸⁷Rb atom, kg.
pub const MASS_RB87: f64 = 1.443_160_60e-25;

/// Oscillator length √(ħ/mω) in meters.
pub fn oscillator_length(mass: f64, omega: f64) -> f64 {
    (HBAR / (mass * omega)).sqrt()
}
