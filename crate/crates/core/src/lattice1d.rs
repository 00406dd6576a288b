//! The realizable trap V(x) = ½mω²x² + V₀cos²(π(x − Δx)/d_l): grids, the
//! finite-difference Hamiltonian, its low spectrum, and the two-level
//! parameters read off from it.

use std::io::Write;

use crate::csvio::fmt12;
use crate::error::{Error, Result};
use crate::tridiag::{dot, SymTridiag};
use crate::units::{HBAR, MASS_RB87};

pub const DEFAULT_D_LATTICE: f64 = 5.18e-6;
pub const DEFAULT_DX_OFFSET: f64 = 200e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapParameters {
    /// Lattice height V₀, J.
    pub v0: f64,
    /// Harmonic frequency ω, rad/s.
    pub omega: f64,
    /// Lattice displacement Δx, m.
    pub dx_offset: f64,
    /// Lattice constant d_l, m.
    pub d_lattice: f64,
    /// Atomic mass, kg.
    pub mass: f64,
}

impl TrapParameters {
    pub fn new(v0: f64, omega: f64, dx_offset: f64, d_lattice: f64, mass: f64) -> Result<Self> {
        if !(d_lattice > 0.0 && d_lattice.is_finite()) {
            return Err(Error::invalid("d_lattice", "must be positive"));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::invalid("mass", "must be positive"));
        }
        if !(omega >= 0.0 && omega.is_finite()) {
            return Err(Error::invalid("omega", "must be non-negative"));
        }
        if !(v0 >= 0.0 && v0.is_finite()) {
            return Err(Error::invalid("v0", "must be non-negative"));
        }
        if !dx_offset.is_finite() {
            return Err(Error::invalid("dx_offset", "must be finite"));
        }
        Ok(Self {
            v0,
            omega,
            dx_offset,
            d_lattice,
            mass,
        })
    }

    /// ⁸⁷Rb in a d_l = 5.18 µm lattice displaced by 200 nm.
    pub fn rubidium(v0: f64, omega: f64) -> Result<Self> {
        Self::new(v0, omega, DEFAULT_DX_OFFSET, DEFAULT_D_LATTICE, MASS_RB87)
    }

    pub fn with_controls(&self, v0: f64, omega: f64) -> Result<Self> {
        Self::new(v0, omega, self.dx_offset, self.d_lattice, self.mass)
    }

    /// Same trap with the lattice centred (Δx = 0).
    pub fn symmetric(&self) -> Self {
        Self {
            dx_offset: 0.0,
            ..*self
        }
    }
}

/// Uniform grid of `n_points` including both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::invalid("grid", "need finite x_min < x_max"));
        }
        if n_points < 64 || !n_points.is_power_of_two() {
            return Err(Error::invalid("n_points", format!("must be a power of two ≥ 64, got {n_points}")));
        }
        Ok(Self {
            x_min,
            x_max,
            n_points,
        })
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    /// Mirror-symmetric about x = 0 (to rounding).
    pub fn is_symmetric(&self) -> bool {
        (self.x_min + self.x_max).abs() <= 1e-12 * (self.x_max - self.x_min)
    }
}

impl Default for Grid1D {
    fn default() -> Self {
        Self {
            x_min: -15e-6,
            x_max: 15e-6,
            n_points: 2048,
        }
    }
}

pub fn potential(params: &TrapParameters, x: f64) -> f64 {
    let c = (std::f64::consts::PI * (x - params.dx_offset) / params.d_lattice).cos();
    0.5 * params.mass * params.omega * params.omega * x * x + params.v0 * c * c
}

fn kinetic_coupling(mass: f64, grid: &Grid1D) -> f64 {
    let h = grid.spacing();
    HBAR / (2.0 * mass * h * h)
}

/// Three-point finite-difference H/ħ (rad/s) with Dirichlet walls.
pub fn hamiltonian_matrix(params: &TrapParameters, grid: &Grid1D) -> SymTridiag {
    let t = kinetic_coupling(params.mass, grid);
    let diag = (0..grid.n_points)
        .map(|i| 2.0 * t + potential(params, grid.x(i)) / HBAR)
        .collect();
    SymTridiag {
        diag,
        off: vec![-t; grid.n_points - 1],
    }
}

/// H/ħ for an arbitrary potential sampled on the grid (J).
pub fn grid_hamiltonian(v: &[f64], mass: f64, grid: &Grid1D) -> Result<SymTridiag> {
    if v.len() != grid.n_points {
        return Err(Error::invalid("potential", "length must match the grid"));
    }
    if !(mass > 0.0) {
        return Err(Error::invalid("mass", "must be positive"));
    }
    let t = kinetic_coupling(mass, grid);
    SymTridiag::new(v.iter().map(|&vv| 2.0 * t + vv / HBAR).collect(), vec![-t; grid.n_points - 1])
}

/// Lowest eigenpairs on a grid: energies E_n/ħ in rad/s, states normalized
/// with Σ|ψ|²·spacing = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub energies: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub spacing: f64,
}

impl SpectralDecomposition {
    /// CSV with columns x, psi0, psi1, ...
    pub fn write_csv<W: Write>(&self, grid: &Grid1D, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["x".to_string()];
        header.extend((0..self.states.len()).map(|k| format!("psi{k}")));
        w.write_record(&header)?;
        for i in 0..grid.n_points {
            let mut row = vec![fmt12(grid.x(i))];
            row.extend(self.states.iter().map(|s| fmt12(s[i])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fix signs: the ground state is positive at its largest-magnitude point,
/// every other state at its extremum on x > 0.
fn apply_sign_convention(states: &mut [Vec<f64>], grid: &Grid1D) {
    for (level, s) in states.iter_mut().enumerate() {
        let start = if level == 0 {
            0
        } else {
            (0..grid.n_points).find(|&i| grid.x(i) > 0.0).unwrap_or(0)
        };
        let peak = (start..grid.n_points)
            .max_by(|&a, &b| s[a].abs().total_cmp(&s[b].abs()))
            .unwrap_or(0);
        if s[peak] < 0.0 {
            s.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

fn to_decomposition(values: Vec<f64>, vectors: Vec<Vec<f64>>, grid: &Grid1D) -> SpectralDecomposition {
    let h = grid.spacing();
    let mut states: Vec<Vec<f64>> = vectors
        .into_iter()
        .map(|v| {
            let scale = 1.0 / h.sqrt();
            v.into_iter().map(|x| x * scale).collect()
        })
        .collect();
    apply_sign_convention(&mut states, grid);
    SpectralDecomposition {
        energies: values,
        states,
        spacing: h,
    }
}

/// Lowest `k` ≤ 6 eigenpairs of `h` on `grid`.
pub fn lowest_eigenpairs(h: &SymTridiag, grid: &Grid1D, k: usize) -> Result<SpectralDecomposition> {
    if k == 0 || k > 6 {
        return Err(Error::invalid("k", "between 1 and 6 eigenpairs"));
    }
    if h.len() != grid.n_points {
        return Err(Error::invalid("grid", "operator size does not match the grid"));
    }
    let (values, vectors) = h.lowest_eigenpairs(k)?;
    Ok(to_decomposition(values, vectors, grid))
}

/// Lowest `k` eigenpairs of a mirror-symmetric trap, solved separately in the
/// even and odd sectors so that near-degenerate doublets stay resolved.
pub fn symmetric_eigenpairs(params: &TrapParameters, grid: &Grid1D, k: usize) -> Result<SpectralDecomposition> {
    if params.dx_offset != 0.0 {
        return Err(Error::invalid("dx_offset", "symmetric solve needs Δx = 0"));
    }
    if !grid.is_symmetric() {
        return Err(Error::invalid("grid", "symmetric solve needs x_min = −x_max"));
    }
    mirror_eigenpairs(&hamiltonian_matrix(params, grid), grid, k)
}

/// As [`symmetric_eigenpairs`] for any operator that is mirror symmetric
/// about the centre of a symmetric grid.
pub fn mirror_eigenpairs(full: &SymTridiag, grid: &Grid1D, k: usize) -> Result<SpectralDecomposition> {
    if !grid.is_symmetric() || full.len() != grid.n_points {
        return Err(Error::invalid("grid", "mirror solve needs x_min = −x_max and a matching operator"));
    }
    if k == 0 || k > 6 {
        return Err(Error::invalid("k", "between 1 and 6 eigenpairs"));
    }
    let n = grid.n_points;
    let half = n / 2;
    // x_{half+j} mirrors x_{half−1−j}; fold the coupling across x = 0
    let t = full.off[half - 1];
    let sector = |parity: f64| -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let mut diag = full.diag[half..].to_vec();
        diag[0] += parity * t;
        let reduced = SymTridiag {
            diag,
            off: full.off[half..].to_vec(),
        };
        // parity alternates level by level, starting even
        let count = if parity > 0.0 { k.div_ceil(2) } else { k / 2 };
        if count == 0 {
            return Ok((Vec::new(), Vec::new()));
        }
        let (values, halves) = reduced.lowest_eigenpairs(count)?;
        let vectors = halves
            .into_iter()
            .map(|v| {
                let mut out = vec![0.0; n];
                for (j, &x) in v.iter().enumerate() {
                    out[half + j] = x / 2f64.sqrt();
                    out[half - 1 - j] = parity * x / 2f64.sqrt();
                }
                out
            })
            .collect();
        Ok((values, vectors))
    };
    let (even_values, even_vectors) = sector(1.0)?;
    let (odd_values, odd_vectors) = sector(-1.0)?;
    let mut merged: Vec<(f64, Vec<f64>)> = even_values
        .into_iter()
        .zip(even_vectors)
        .chain(odd_values.into_iter().zip(odd_vectors))
        .collect();
    merged.sort_by(|a, b| a.0.total_cmp(&b.0));
    merged.truncate(k);
    let (values, vectors) = merged.into_iter().unzip();
    Ok(to_decomposition(values, vectors, grid))
}

/// Left/right localized states of the symmetric trap, sampled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LrBasis {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    /// Ground and first excited energies of the symmetric trap, rad/s.
    pub e_ground: f64,
    pub e_excited: f64,
    pub spacing: f64,
}

/// |R⟩ = (|g⟩ + |e⟩)/√2 and |L⟩ = (|g⟩ − |e⟩)/√2 of the Δx = 0 trap.
pub fn lr_basis(params: &TrapParameters, grid: &Grid1D) -> Result<LrBasis> {
    let spec = symmetric_eigenpairs(&params.symmetric(), grid, 2)?;
    let (g, e) = (&spec.states[0], &spec.states[1]);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Ok(LrBasis {
        left: g.iter().zip(e).map(|(a, b)| s * (a - b)).collect(),
        right: g.iter().zip(e).map(|(a, b)| s * (a + b)).collect(),
        e_ground: spec.energies[0],
        e_excited: spec.energies[1],
        spacing: spec.spacing,
    })
}

/// Relative tolerance for agreement of the R- and L-side λ expressions.
pub const LAMBDA_CONSISTENCY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelParameters {
    /// Tunneling rate δ = −(2/ħ)⟨L|H|R⟩, rad/s.
    pub delta: f64,
    /// Bias (⟨R|H|R⟩ − ⟨L|H|L⟩)/ħ, the mean of the two forms below, rad/s.
    pub lambda: f64,
    /// (2/ħ)⟨R|H − Λ|R⟩.
    pub lambda_right: f64,
    /// −(2/ħ)⟨L|H − Λ|L⟩.
    pub lambda_left: f64,
    /// Λ/ħ, mean of the two lowest levels of the full H, rad/s.
    pub shift: f64,
}

/// Matrix elements ⟨L|H|R⟩, ⟨R|H|R⟩, ⟨L|H|L⟩ (rad/s) of the full trap in
/// the symmetric-trap basis, using H = H_sym + [V(Δx) − V(0)].
fn projected_elements(params: &TrapParameters, basis: &LrBasis, grid: &Grid1D) -> (f64, f64, f64) {
    let sym = params.symmetric();
    let h = basis.spacing;
    let (mut lr, mut rr, mut ll) = (0.0, 0.0, 0.0);
    for i in 0..grid.n_points {
        let x = grid.x(i);
        let dv = (potential(params, x) - potential(&sym, x)) / HBAR;
        let (l, r) = (basis.left[i], basis.right[i]);
        lr += l * r * dv;
        rr += r * r * dv;
        ll += l * l * dv;
    }
    let mid = 0.5 * (basis.e_ground + basis.e_excited);
    let half_gap = 0.5 * (basis.e_excited - basis.e_ground);
    (-half_gap + lr * h, mid + rr * h, mid + ll * h)
}

/// (δ, λ) without the level shift Λ, which cancels from the mean bias.
pub fn project_two_level(params: &TrapParameters, basis: &LrBasis, grid: &Grid1D) -> (f64, f64) {
    let (lr, rr, ll) = projected_elements(params, basis, grid);
    (-2.0 * lr, rr - ll)
}

/// δ and λ of the full trap projected on the symmetric-trap L/R basis.
///
/// The R- and L-side bias forms are compared against `tol`, relative to the
/// larger of |λ| and δ; pass `f64::INFINITY` to skip the check.
pub fn extract_two_level(
    params: &TrapParameters,
    basis: &LrBasis,
    grid: &Grid1D,
    tol: f64,
) -> Result<TwoLevelParameters> {
    let (lr, rr, ll) = projected_elements(params, basis, grid);
    let levels = if params.dx_offset == 0.0 && grid.is_symmetric() {
        [basis.e_ground, basis.e_excited]
    } else {
        lowest_two_levels(params, grid)
    };
    let shift = 0.5 * (levels[0] + levels[1]);
    let delta = -2.0 * lr;
    let lambda_right = 2.0 * (rr - shift);
    let lambda_left = -2.0 * (ll - shift);
    let scale = lambda_right
        .abs()
        .max(lambda_left.abs())
        .max(delta.abs())
        .max(f64::MIN_POSITIVE);
    if (lambda_right - lambda_left).abs() > tol * scale {
        return Err(Error::TwoLevelBreakdown {
            lambda_r: lambda_right,
            lambda_l: lambda_left,
        });
    }
    Ok(TwoLevelParameters {
        delta,
        lambda: rr - ll,
        lambda_right,
        lambda_left,
        shift,
    })
}

/// Lowest two eigenvalues of the full trap, rad/s.
pub fn lowest_two_levels(params: &TrapParameters, grid: &Grid1D) -> [f64; 2] {
    let v = hamiltonian_matrix(params, grid).lowest_eigenvalues(2);
    [v[0], v[1]]
}

/// ⟨a|b⟩ for grid functions normalized with the spacing.
pub fn overlap(a: &[f64], b: &[f64], spacing: f64) -> f64 {
    dot(a, b) * spacing
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::oscillator_length;

    const OMEGA: f64 = 780.0;

    fn harmonic(omega: f64) -> TrapParameters {
        TrapParameters::new(0.0, omega, 0.0, DEFAULT_D_LATTICE, MASS_RB87).unwrap()
    }

    fn ho_grid(n: usize) -> Grid1D {
        let a0 = oscillator_length(MASS_RB87, OMEGA);
        Grid1D::new(-20.0 * a0, 20.0 * a0, n).unwrap()
    }

    #[test]
    fn potential_formula() {
        let p = TrapParameters::rubidium(1e-30, OMEGA).unwrap();
        let x = 1.3e-6;
        let harmonic_part = 0.5 * MASS_RB87 * OMEGA * OMEGA * x * x;
        assert_eq!(potential(&harmonic(OMEGA), x), harmonic_part);
        let at_offset = potential(&p, p.dx_offset);
        let want = 0.5 * MASS_RB87 * OMEGA * OMEGA * p.dx_offset.powi(2) + p.v0;
        assert!((at_offset - want).abs() < 1e-15 * want);
        let node = p.dx_offset + 0.5 * p.d_lattice;
        let want = 0.5 * MASS_RB87 * OMEGA * OMEGA * node * node;
        assert!((potential(&p, node) - want).abs() < 1e-12 * want);
    }

    #[test]
    fn harmonic_spectrum() {
        let grid = ho_grid(1024);
        let spec = lowest_eigenpairs(&hamiltonian_matrix(&harmonic(OMEGA), &grid), &grid, 4).unwrap();
        for (n, e) in spec.energies.iter().enumerate() {
            let exact = OMEGA * (n as f64 + 0.5);
            assert!((e - exact).abs() < 1e-3 * exact, "level {n}: {e}");
        }
        assert!(((spec.energies[1] - spec.energies[0]) / OMEGA - 1.0).abs() < 1e-3);
        let h = hamiltonian_matrix(&harmonic(OMEGA), &grid);
        let scale = h.norm_bound();
        for (e, s) in spec.energies.iter().zip(&spec.states) {
            let hs = h.apply(s);
            let r: f64 = hs.iter().zip(s).map(|(a, b)| (a - e * b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(r <= 1e-8 * scale * norm);
        }
    }

    #[test]
    fn constant_shift_moves_all_levels() {
        let grid = ho_grid(512);
        let mut h = hamiltonian_matrix(&harmonic(OMEGA), &grid);
        let base = h.lowest_eigenvalues(3);
        let c = 1234.5;
        h.diag.iter_mut().for_each(|d| *d += c);
        let shifted = h.lowest_eigenvalues(3);
        for (a, b) in base.iter().zip(&shifted) {
            assert!((b - a - c).abs() < 1e-9 * b.abs());
        }
    }

    #[test]
    fn second_order_convergence() {
        // Richardson check against a 4096-point reference
        let reference = hamiltonian_matrix(&harmonic(OMEGA), &ho_grid(4096)).eigenvalue(1);
        let err = |n| (hamiltonian_matrix(&harmonic(OMEGA), &ho_grid(n)).eigenvalue(1) - reference).abs();
        let ratio = err(256) / err(512);
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn symmetric_sectors_match_full_solve() {
        let grid = Grid1D::default();
        let p = TrapParameters::rubidium(20.0 * HBAR * OMEGA, OMEGA).unwrap().symmetric();
        let full = lowest_eigenpairs(&hamiltonian_matrix(&p, &grid), &grid, 4).unwrap();
        let split = symmetric_eigenpairs(&p, &grid, 4).unwrap();
        for k in 0..4 {
            assert!((full.energies[k] - split.energies[k]).abs() < 1e-9 * full.energies[k]);
        }
        // parity of the two lowest states
        let n = grid.n_points;
        for i in 0..n / 2 {
            let (g, e) = (&split.states[0], &split.states[1]);
            assert!((g[i] - g[n - 1 - i]).abs() < 1e-8);
            assert!((e[i] + e[n - 1 - i]).abs() < 1e-8);
        }
        assert!(split.states[1][n - 1 - n / 4] > 0.0);
    }

    #[test]
    fn deep_double_well_is_near_degenerate() {
        let grid = Grid1D::default();
        let gap = |v0: f64| {
            let p = TrapParameters::rubidium(v0 * HBAR * OMEGA, OMEGA).unwrap().symmetric();
            let s = symmetric_eigenpairs(&p, &grid, 2).unwrap();
            s.energies[1] - s.energies[0]
        };
        let shallow = gap(0.5);
        let deep = gap(40.0);
        assert!(deep > 0.0 && deep < 1e-3 * shallow, "{deep} vs {shallow}");
    }

    #[test]
    fn lr_basis_properties() {
        let grid = Grid1D::default();
        let p = TrapParameters::rubidium(30.0 * HBAR * OMEGA, OMEGA).unwrap();
        let b = lr_basis(&p, &grid).unwrap();
        let h = b.spacing;
        assert!(overlap(&b.left, &b.right, h).abs() < 1e-10);
        assert!((overlap(&b.left, &b.left, h) - 1.0).abs() < 1e-10);
        assert!((overlap(&b.right, &b.right, h) - 1.0).abs() < 1e-10);
        let xs = grid.points();
        let mean = |s: &[f64]| s.iter().zip(&xs).map(|(v, x)| v * v * x).sum::<f64>() * h;
        let (xr, xl) = (mean(&b.right), mean(&b.left));
        assert!(xr > 0.0);
        assert!((xr + xl).abs() < 1e-9 * xr);
        // deep-well limit: centroid sits on the right potential minimum
        let sym = p.symmetric();
        let minimum = xs
            .iter()
            .copied()
            .filter(|&x| x > 0.0 && x < 5e-6)
            .min_by(|a, b| potential(&sym, *a).total_cmp(&potential(&sym, *b)))
            .unwrap();
        assert!((xr / minimum - 1.0).abs() < 0.02, "{xr} vs {minimum}");
    }

    #[test]
    fn harmonic_and_symmetric_extraction() {
        let grid = Grid1D::default();
        let p = TrapParameters::new(0.0, OMEGA, 0.0, DEFAULT_D_LATTICE, MASS_RB87).unwrap();
        let b = lr_basis(&p, &grid).unwrap();
        let tl = extract_two_level(&p, &b, &grid, LAMBDA_CONSISTENCY_TOL).unwrap();
        assert!(tl.lambda.abs() < 1e-8 * OMEGA);
        assert!((tl.delta / OMEGA - 1.0).abs() < 1e-3);
        let p = TrapParameters::rubidium(5.0 * HBAR * OMEGA, OMEGA).unwrap().symmetric();
        let b = lr_basis(&p, &grid).unwrap();
        let tl = extract_two_level(&p, &b, &grid, LAMBDA_CONSISTENCY_TOL).unwrap();
        assert!(tl.lambda.abs() < 1e-8 * OMEGA);
    }

    #[test]
    fn biased_trap_matches_two_level_spectrum() {
        // deep, displaced lattice: the projected splitting √(δ²+λ²) must
        // reproduce the gap of the two lowest levels
        let grid = Grid1D::default();
        for (v0, omega) in [(10.0, 450.0), (30.0, 366.0)] {
            let p = TrapParameters::rubidium(v0 * HBAR * 490.0, omega).unwrap();
            let b = lr_basis(&p, &grid).unwrap();
            let tl = extract_two_level(&p, &b, &grid, f64::INFINITY).unwrap();
            let [e0, e1] = lowest_two_levels(&p, &grid);
            let gap = tl.delta.hypot(tl.lambda);
            assert!((gap / (e1 - e0) - 1.0).abs() < 0.02, "{gap} vs {}", e1 - e0);
            assert!(tl.lambda > 0.0);
            assert!(matches!(
                extract_two_level(&p, &b, &grid, LAMBDA_CONSISTENCY_TOL),
                Err(Error::TwoLevelBreakdown { .. })
            ));
        }
    }

    #[test]
    fn grid_validation() {
        assert!(Grid1D::new(-1.0, 1.0, 100).is_err());
        assert!(Grid1D::new(-1.0, 1.0, 32).is_err());
        assert!(Grid1D::new(1.0, -1.0, 128).is_err());
        let g = Grid1D::new(-1.0, 1.0, 128).unwrap();
        assert!((g.spacing() - 2.0 / 127.0).abs() < 1e-15);
        assert!(TrapParameters::new(-1.0, 1.0, 0.0, 1.0, 1.0).is_err());
        assert!(TrapParameters::new(1.0, 1.0, 0.0, 0.0, 1.0).is_err());
    }
}
