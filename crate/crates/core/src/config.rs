//! Experiment configuration: a TOML document whose keys carry their units.
//! Unknown keys are rejected and every section has documented defaults, so a
//! run is fully described by the resolved echo of its configuration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::ffsplit::{AmplitudeKind, FfOptions, SplitParameters, DEFAULT_TWO_MODE_SLICES, STEP_WIDTH_SPACINGS};
use crate::lattice1d::{Grid1D, DEFAULT_DX_OFFSET, DEFAULT_D_LATTICE};
use crate::mapping::{FixedTrap, MappingOptions};
use crate::protocols::{faquad_schedule, invariant_protocol, ControlProtocol, TABULATED_SAMPLES};
use crate::tdse::{DemuxOptions, GroundStateOptions, StartState};
use crate::units::MASS_RB87;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trap: TrapConfig,
    pub grid: GridConfig,
    pub protocol: ProtocolConfig,
    pub mapping: MappingConfig,
    pub tdse: TdseConfig,
    pub ffsplit: FfsplitConfig,
    pub scan: ScanConfig,
}

/// Lattice-plus-harmonic trap of the demultiplexing runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrapConfig {
    pub mass_kg: f64,
    pub d_lattice_um: f64,
    pub dx_offset_nm: f64,
    /// Initial trap frequency ω₀/2π.
    pub trap_frequency_hz: f64,
}

impl Default for TrapConfig {
    fn default() -> Self {
        Self {
            mass_kg: MASS_RB87,
            d_lattice_um: in_units(DEFAULT_D_LATTICE, 1e6),
            dx_offset_nm: in_units(DEFAULT_DX_OFFSET, 1e9),
            trap_frequency_hz: 78.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// The box is [−x_max, x_max].
    pub x_max_um: f64,
    pub n_points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = Grid1D::default();
        Self {
            x_max_um: in_units(g.x_max, 1e6),
            n_points: g.n_points,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    Invariant,
    Faquad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub kind: DesignKind,
    pub t_final_ms: f64,
    /// Final bias λ_f (the constant bias of a FAQUAD schedule).
    pub lambda_final_per_s: f64,
    /// Initial bias rate λ̇(0) of the invariant design.
    pub lambda_dot0_per_s2: f64,
    pub samples: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            kind: DesignKind::Invariant,
            t_final_ms: 55.0,
            lambda_final_per_s: 190.0,
            lambda_dot0_per_s2: 190.0,
            samples: TABULATED_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingConfig {
    pub n_slices: usize,
    pub v0_max_joule: f64,
    pub residual_threshold: f64,
    pub weight_delta: f64,
    pub weight_lambda: f64,
    pub hold_fraction: f64,
    pub simplex_tol: f64,
    pub max_iter: usize,
}

impl Default for MappingConfig {
    fn default() -> Self {
        let m = MappingOptions::default();
        Self {
            n_slices: m.n_slices,
            v0_max_joule: m.v0_max,
            residual_threshold: m.residual_threshold,
            weight_delta: m.weights[0],
            weight_lambda: m.weights[1],
            hold_fraction: m.hold_fraction,
            simplex_tol: m.simplex_tol,
            max_iter: m.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TdseConfig {
    pub dt_us: f64,
    /// Fidelities are evaluated this long before t_f.
    pub stop_early_ms: f64,
    pub start_state: StartState,
    /// Interval between population samples (0 disables them).
    pub sample_every_ms: f64,
    /// Times at which wavefunction snapshots are written.
    pub snapshot_ms: Vec<f64>,
}

impl Default for TdseConfig {
    fn default() -> Self {
        Self {
            dt_us: 1.0,
            stop_early_ms: 2.0,
            start_state: StartState::Ground,
            sample_every_ms: 0.5,
            snapshot_ms: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FfsplitConfig {
    pub omega_rad_s: f64,
    pub x_f_um: f64,
    pub t_final_ms: f64,
    pub kind: AmplitudeKind,
    /// Dimensionless coupling ĝN (interpolated_gpe only).
    pub g_hat: f64,
    /// Step heights for the fidelity table, in units of ħω.
    pub lambda_over_hbar_omega: Vec<f64>,
    /// Number of equally spaced times of the potential table.
    pub potential_times: usize,
    pub dt_us: f64,
    pub ground_dtau_us: f64,
    pub two_mode_slices: usize,
    pub step_width_spacings: f64,
}

impl Default for FfsplitConfig {
    fn default() -> Self {
        let o = FfOptions::default();
        Self {
            omega_rad_s: crate::ffsplit::DEFAULT_OMEGA,
            x_f_um: in_units(crate::ffsplit::DEFAULT_X_F, 1e6),
            t_final_ms: 320.0,
            kind: AmplitudeKind::TwoBump,
            g_hat: 0.0,
            lambda_over_hbar_omega: vec![0.0, 1e-6, 1e-3],
            potential_times: 11,
            dt_us: in_units(o.dt, 1e6),
            ground_dtau_us: in_units(o.ground.dtau, 1e6),
            two_mode_slices: DEFAULT_TWO_MODE_SLICES,
            step_width_spacings: STEP_WIDTH_SPACINGS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    /// Durations of the demultiplexing scan (shortcut vs linear ramp).
    pub t_final_ms: Vec<f64>,
    /// Step heights of the fast-forward scan, units of ħω.
    pub lambda_over_hbar_omega: Vec<f64>,
    /// Couplings ĝN of the interacting scan.
    pub g_hat: Vec<f64>,
    /// Step height held fixed during the coupling scan, units of ħω.
    pub g_scan_lambda_over_hbar_omega: f64,
    /// Add the moving two-mode prediction to the step-height scan.
    pub with_model: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            t_final_ms: vec![30.0, 50.0, 70.0],
            lambda_over_hbar_omega: vec![1e-8, 1e-6, 1e-4, 1e-2],
            g_hat: vec![0.02, 0.05, 0.1, 0.5],
            g_scan_lambda_over_hbar_omega: 0.02,
            with_model: true,
        }
    }
}

// SI value expressed in the key's unit, rounded to 12 significant digits so
// the defaults echo cleanly
fn in_units(v: f64, scale: f64) -> f64 {
    format!("{:.11e}", v * scale).parse().unwrap_or(v * scale)
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{key}: must be positive and finite, got {v}")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{key}: must be non-negative and finite, got {v}")))
    }
}

fn finite(key: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{key}: must be finite, got {v}")))
    }
}

impl ExperimentConfig {
    /// Parse and validate a TOML document; messages name the offending key.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.trap;
        positive("trap.mass_kg", t.mass_kg)?;
        positive("trap.d_lattice_um", t.d_lattice_um)?;
        finite("trap.dx_offset_nm", t.dx_offset_nm)?;
        positive("trap.trap_frequency_hz", t.trap_frequency_hz)?;
        positive("grid.x_max_um", self.grid.x_max_um)?;
        if self.grid.n_points < 64 || !self.grid.n_points.is_power_of_two() {
            return Err(Error::Config(format!(
                "grid.n_points: must be a power of two ≥ 64, got {}",
                self.grid.n_points
            )));
        }
        let p = &self.protocol;
        positive("protocol.t_final_ms", p.t_final_ms)?;
        finite("protocol.lambda_final_per_s", p.lambda_final_per_s)?;
        finite("protocol.lambda_dot0_per_s2", p.lambda_dot0_per_s2)?;
        if p.samples < 2 {
            return Err(Error::Config("protocol.samples: at least 2".into()));
        }
        let m = &self.mapping;
        if m.n_slices < 100 {
            return Err(Error::Config(format!("mapping.n_slices: at least 100, got {}", m.n_slices)));
        }
        positive("mapping.v0_max_joule", m.v0_max_joule)?;
        positive("mapping.residual_threshold", m.residual_threshold)?;
        non_negative("mapping.weight_delta", m.weight_delta)?;
        non_negative("mapping.weight_lambda", m.weight_lambda)?;
        non_negative("mapping.hold_fraction", m.hold_fraction)?;
        positive("mapping.simplex_tol", m.simplex_tol)?;
        if m.max_iter == 0 {
            return Err(Error::Config("mapping.max_iter: must be positive".into()));
        }
        let d = &self.tdse;
        positive("tdse.dt_us", d.dt_us)?;
        non_negative("tdse.stop_early_ms", d.stop_early_ms)?;
        non_negative("tdse.sample_every_ms", d.sample_every_ms)?;
        for &s in &d.snapshot_ms {
            non_negative("tdse.snapshot_ms", s)?;
        }
        let f = &self.ffsplit;
        positive("ffsplit.omega_rad_s", f.omega_rad_s)?;
        positive("ffsplit.x_f_um", f.x_f_um)?;
        positive("ffsplit.t_final_ms", f.t_final_ms)?;
        non_negative("ffsplit.g_hat", f.g_hat)?;
        for &l in &f.lambda_over_hbar_omega {
            finite("ffsplit.lambda_over_hbar_omega", l)?;
        }
        if f.potential_times < 2 {
            return Err(Error::Config("ffsplit.potential_times: at least 2".into()));
        }
        positive("ffsplit.dt_us", f.dt_us)?;
        positive("ffsplit.ground_dtau_us", f.ground_dtau_us)?;
        if f.two_mode_slices < 3 {
            return Err(Error::Config("ffsplit.two_mode_slices: at least 3".into()));
        }
        non_negative("ffsplit.step_width_spacings", f.step_width_spacings)?;
        let s = &self.scan;
        for &v in &s.t_final_ms {
            positive("scan.t_final_ms", v)?;
        }
        for &v in &s.lambda_over_hbar_omega {
            finite("scan.lambda_over_hbar_omega", v)?;
        }
        for &v in &s.g_hat {
            non_negative("scan.g_hat", v)?;
        }
        finite("scan.g_scan_lambda_over_hbar_omega", s.g_scan_lambda_over_hbar_omega)?;
        Ok(())
    }

    /// ω₀, rad/s.
    pub fn omega0(&self) -> f64 {
        2.0 * PI * self.trap.trap_frequency_hz
    }

    pub fn fixed_trap(&self) -> FixedTrap {
        FixedTrap {
            dx_offset: self.trap.dx_offset_nm * 1e-9,
            d_lattice: self.trap.d_lattice_um * 1e-6,
            mass: self.trap.mass_kg,
        }
    }

    pub fn grid(&self) -> Result<Grid1D> {
        let x = self.grid.x_max_um * 1e-6;
        Grid1D::new(-x, x, self.grid.n_points)
    }

    /// Protocol of the configured kind for a duration `t_final` (s).
    pub fn protocol_for(&self, t_final: f64) -> Result<ControlProtocol> {
        let p = &self.protocol;
        match p.kind {
            DesignKind::Invariant => invariant_protocol(self.omega0(), p.lambda_final_per_s, p.lambda_dot0_per_s2, t_final),
            DesignKind::Faquad => faquad_schedule(self.omega0(), p.lambda_final_per_s, t_final),
        }
    }

    pub fn protocol(&self) -> Result<ControlProtocol> {
        self.protocol_for(self.protocol.t_final_ms * 1e-3)
    }

    pub fn mapping_options(&self) -> Result<MappingOptions> {
        let m = &self.mapping;
        Ok(MappingOptions {
            n_slices: m.n_slices,
            grid: self.grid()?,
            v0_max: m.v0_max_joule,
            residual_threshold: m.residual_threshold,
            weights: [m.weight_delta, m.weight_lambda],
            hold_fraction: m.hold_fraction,
            simplex_tol: m.simplex_tol,
            max_iter: m.max_iter,
        })
    }

    pub fn demux_options(&self) -> Result<DemuxOptions> {
        let d = &self.tdse;
        Ok(DemuxOptions {
            grid: self.grid()?,
            mass: self.trap.mass_kg,
            dt: d.dt_us * 1e-6,
            stop_early: d.stop_early_ms * 1e-3,
            sample_every: d.sample_every_ms * 1e-3,
        })
    }

    /// Fast-forward setting for a duration `t_final` (s).
    pub fn split_parameters_for(&self, t_final: f64) -> Result<SplitParameters> {
        let f = &self.ffsplit;
        SplitParameters::new(self.trap.mass_kg, f.omega_rad_s, f.x_f_um * 1e-6, t_final, self.grid()?)
    }

    pub fn split_parameters(&self) -> Result<SplitParameters> {
        self.split_parameters_for(self.ffsplit.t_final_ms * 1e-3)
    }

    pub fn ff_options(&self) -> FfOptions {
        let f = &self.ffsplit;
        FfOptions {
            dt: f.dt_us * 1e-6,
            ground: GroundStateOptions {
                dtau: f.ground_dtau_us * 1e-6,
                ..FfOptions::default().ground
            },
            two_mode_slices: f.two_mode_slices,
            step_width: f.step_width_spacings,
        }
    }

    /// SHA-256 of the resolved trap and grid sections, hex encoded.
    pub fn trap_hash(&self) -> String {
        #[derive(Serialize)]
        struct Hashed<'a> {
            trap: &'a TrapConfig,
            grid: &'a GridConfig,
        }
        let text = toml::to_string(&Hashed {
            trap: &self.trap,
            grid: &self.grid,
        })
        .expect("trap section serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
