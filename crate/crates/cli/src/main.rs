//! `stasplit`: configuration-driven runs of the design, mapping, propagation
//! and fast-forward tools. Every command writes its CSV tables plus a
//! resolved copy of the configuration into the output directory.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use stasplit::config::ExperimentConfig;
use stasplit::csvio::{read_protocol_csv, read_trajectory_csv, write_protocol_csv, write_trajectory_csv};
use stasplit::ffsplit::{
    fidelity_quad, moving_two_mode, write_fidelity_scan_csv, AmplitudeDesign, AmplitudeKind, FidelityScanRow,
};
use stasplit::mapping::{map_protocol_with, MappedTrajectory};
use stasplit::protocols::linear_ramp;
use stasplit::tdse::{demux_run, demux_run_with_snapshots, FidelityTrace, LinearRampPotential, TrajectoryPotential};
use stasplit::Error;

#[derive(Parser)]
#[command(name = "stasplit", version, about = "Design, map and verify fast trap-splitting protocols")]
struct Cli {
    /// TOML configuration; defaults are used for absent keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for scans (0 uses all cores).
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the control protocol (t, delta, lambda).
    Design,
    /// Map a protocol onto lattice height and trap frequency.
    Map {
        /// Protocol table; defaults to OUT/protocol.csv.
        #[arg(long)]
        protocol: Option<PathBuf>,
    },
    /// Propagate the wavefunction through a mapped trajectory.
    Propagate {
        /// Trajectory table; defaults to OUT/trajectory.csv.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Duration, step-height and coupling scans.
    Scan,
    /// Fast-forward potential table and its fidelity table.
    Ffsplit,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Design => "design",
            Command::Map { .. } => "map",
            Command::Propagate { .. } => "propagate",
            Command::Scan => "scan",
            Command::Ffsplit => "ffsplit",
        }
    }
}

/// Failures sorted by exit code.
enum Failure {
    Config(anyhow::Error),
    Numerical(anyhow::Error),
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Input-validation errors exit with 2, solver failures with 3.
fn classify(e: Error) -> Failure {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::InvalidParameter { .. } => Failure::Config(e.into()),
        other => Failure::Numerical(other.into()),
    }
}

fn config_error(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn io_error(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Numerical(e.into())
}

trait At<T> {
    fn at(self, what: &str) -> Outcome<T>;
}

impl<T> At<T> for stasplit::Result<T> {
    fn at(self, what: &str) -> Outcome<T> {
        self.map_err(|e| match classify(e) {
            Failure::Config(e) => Failure::Config(e.context(what.to_string())),
            Failure::Numerical(e) => Failure::Numerical(e.context(what.to_string())),
        })
    }
}

struct Run {
    config: ExperimentConfig,
    out: PathBuf,
    verbose: bool,
    pool: rayon::ThreadPool,
}

impl Run {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn create(&self, name: &str) -> Outcome<BufWriter<fs::File>> {
        let path = self.out.join(name);
        self.log(format!("writing {}", path.display()));
        fs::File::create(&path)
            .map(BufWriter::new)
            .with_context(|| format!("cannot create {}", path.display()))
            .map_err(io_error)
    }

    fn write_with(&self, name: &str, f: impl FnOnce(&mut BufWriter<fs::File>) -> stasplit::Result<()>) -> Outcome<()> {
        let mut w = self.create(name)?;
        f(&mut w).at(name)?;
        w.flush().with_context(|| format!("cannot write {name}")).map_err(io_error)
    }
}

fn read_text(path: &Path) -> Outcome<String> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(config_error)
}

fn load_config(path: Option<&Path>) -> Outcome<ExperimentConfig> {
    let text = match path {
        Some(p) => read_text(p)?,
        None => String::new(),
    };
    ExperimentConfig::from_toml(&text).map_err(|e| {
        let source = path.map_or("<defaults>".to_string(), |p| p.display().to_string());
        config_error(anyhow!(e).context(format!("invalid configuration {source}")))
    })
}

fn design(run: &Run) -> Outcome<()> {
    let c = &run.config;
    let protocol = c.protocol().at("protocol design")?;
    run.write_with("protocol.csv", |w| write_protocol_csv(&protocol, c.protocol.samples, w))
}

fn map(run: &Run, protocol_path: &Path) -> Outcome<()> {
    let c = &run.config;
    let text = read_text(protocol_path)?;
    let protocol = read_protocol_csv(&text).at(&protocol_path.display().to_string())?;
    let options = c.mapping_options().at("mapping options")?;
    let progress = |done: usize, total: usize| {
        if run.verbose && (done % 50 == 0 || done == total) {
            eprintln!("mapped slice {done}/{total}");
        }
    };
    let trajectory = map_protocol_with(&protocol, c.fixed_trap(), (0.0, c.omega0()), &options, progress).at("mapping")?;
    let hash = c.trap_hash();
    run.write_with("trajectory.csv", |w| write_trajectory_csv(&trajectory, &hash, w))
}

fn load_trajectory(run: &Run, path: &Path) -> Outcome<MappedTrajectory> {
    let text = read_text(path)?;
    let (hash, trajectory) = read_trajectory_csv(&text).at(&path.display().to_string())?;
    let expected = run.config.trap_hash();
    if hash != expected {
        return Err(config_error(anyhow!(
            "{}: trap hash {hash} does not match the configured trap ({expected}); remap with this configuration",
            path.display()
        )));
    }
    Ok(trajectory)
}

fn propagate(run: &Run, trajectory_path: &Path) -> Outcome<()> {
    let c = &run.config;
    let trajectory = load_trajectory(run, trajectory_path)?;
    let schedule = TrajectoryPotential::new(&trajectory, c.fixed_trap()).at("trajectory")?;
    let options = c.demux_options().at("tdse options")?;
    let snapshot_times: Vec<f64> = c.tdse.snapshot_ms.iter().map(|ms| ms * 1e-3).collect();
    let t_final = trajectory.t_final();
    run.log(format!("propagating {:?} start over {t_final} s", c.tdse.start_state));
    let result = demux_run_with_snapshots(&schedule, t_final, c.tdse.start_state, &options, &snapshot_times)
        .at("propagation")?;
    let mut summary = FidelityTrace::new("t", &["F", "mean_x"]);
    summary.push(t_final - options.stop_early, &[result.fidelity, result.final_state.mean_x()]);
    run.write_with("fidelity.csv", |w| summary.write_csv(w))?;
    run.write_with("populations.csv", |w| result.populations.write_csv(w))?;
    for (t, psi) in &result.snapshots {
        run.write_with(&format!("snapshot_{:.6}ms.csv", t * 1e3), |w| psi.write_snapshot_csv(w))?;
    }
    run.write_with("snapshot_final.csv", |w| result.final_state.write_snapshot_csv(w))
}

/// Shortcut and linear-ramp fidelities for one duration.
fn demux_point(config: &ExperimentConfig, t_final: f64) -> stasplit::Result<[f64; 2]> {
    let protocol = config.protocol_for(t_final)?;
    let mut mapping = config.mapping_options()?;
    mapping.n_slices = mapping.n_slices.max((t_final / 1e-4).round() as usize + 1);
    let fixed = config.fixed_trap();
    let trajectory = stasplit::mapping::map_protocol(&protocol, fixed, (0.0, config.omega0()), &mapping)?;
    let options = config.demux_options()?;
    let start = config.tdse.start_state;
    let no_samples = stasplit::tdse::DemuxOptions {
        sample_every: 0.0,
        ..options
    };
    let shortcut = TrajectoryPotential::new(&trajectory, fixed)?;
    let f_shortcut = demux_run(&shortcut, t_final, start, &no_samples)?.fidelity;
    let v0_final = *trajectory.v0_series.last().expect("trajectory has slices");
    let ramp = LinearRampPotential {
        fixed,
        ramp: linear_ramp(v0_final, t_final)?,
        omega: config.omega0(),
    };
    let f_linear = demux_run(&ramp, t_final, start, &no_samples)?.fidelity;
    Ok([f_shortcut, f_linear])
}

fn scan(run: &Run) -> Outcome<()> {
    let c = &run.config;
    let s = &c.scan;

    run.log(format!("duration scan over {} points", s.t_final_ms.len()));
    let demux: Vec<stasplit::Result<[f64; 2]>> =
        run.pool.install(|| s.t_final_ms.par_iter().map(|ms| demux_point(c, ms * 1e-3)).collect());
    let mut trace = FidelityTrace::new("t_f", &["F_shortcut", "F_linear"]);
    for (ms, r) in s.t_final_ms.iter().zip(demux) {
        trace.push(ms * 1e-3, &r.at(&format!("duration scan at t_f = {ms} ms"))?);
    }
    run.write_with("scan_t_final.csv", |w| trace.write_csv(w))?;

    let params = c.split_parameters().at("ffsplit parameters")?;
    let options = c.ff_options();
    let hw = params.hbar_omega();
    run.log(format!("step-height scan over {} points", s.lambda_over_hbar_omega.len()));
    let design = AmplitudeDesign::two_bump(params);
    let rows: Vec<stasplit::Result<FidelityScanRow>> = run.pool.install(|| {
        s.lambda_over_hbar_omega
            .par_iter()
            .map(|&l| {
                let full = fidelity_quad(&design, l * hw, &options)?;
                let model = if s.with_model {
                    Some(moving_two_mode(&design, l * hw, &options)?)
                } else {
                    None
                };
                Ok(FidelityScanRow {
                    abscissa: l,
                    full,
                    model,
                })
            })
            .collect()
    });
    let rows = collect_rows(rows, &s.lambda_over_hbar_omega, "step-height scan at lambda/hbar omega")?;
    run.write_with("scan_lambda.csv", |w| write_fidelity_scan_csv("lambda_over_hbar_omega", &rows, w))?;

    run.log(format!("coupling scan over {} points", s.g_hat.len()));
    let lambda = s.g_scan_lambda_over_hbar_omega * hw;
    let rows: Vec<stasplit::Result<FidelityScanRow>> = run.pool.install(|| {
        s.g_hat
            .par_iter()
            .map(|&g| {
                let design = AmplitudeDesign::interpolated_gpe(params, params.g1n(g), &options.ground)?;
                Ok(FidelityScanRow {
                    abscissa: g,
                    full: fidelity_quad(&design, lambda, &options)?,
                    model: None,
                })
            })
            .collect()
    });
    let rows = collect_rows(rows, &s.g_hat, "coupling scan at g_hat")?;
    run.write_with("scan_g_hat.csv", |w| write_fidelity_scan_csv("g_hat", &rows, w))
}

fn collect_rows(rows: Vec<stasplit::Result<FidelityScanRow>>, keys: &[f64], what: &str) -> Outcome<Vec<FidelityScanRow>> {
    rows.into_iter()
        .zip(keys)
        .map(|(r, k)| r.at(&format!("{what} = {k}")))
        .collect()
}

fn ffsplit(run: &Run) -> Outcome<()> {
    let c = &run.config;
    let f = &c.ffsplit;
    let params = c.split_parameters().at("ffsplit parameters")?;
    let options = c.ff_options();
    let design = match f.kind {
        AmplitudeKind::TwoBump => AmplitudeDesign::two_bump(params),
        AmplitudeKind::InterpolatedGpe => {
            AmplitudeDesign::interpolated_gpe(params, params.g1n(f.g_hat), &options.ground).at("interacting design")?
        }
    };
    let n = f.potential_times;
    let times: Vec<f64> = (0..n).map(|k| params.t_final * k as f64 / (n - 1) as f64).collect();
    run.write_with("ff_potential.csv", |w| design.write_potential_csv(&times, w))?;
    let hw = params.hbar_omega();
    let with_model = design.g1n() == 0.0;
    let rows: Vec<stasplit::Result<FidelityScanRow>> = run.pool.install(|| {
        f.lambda_over_hbar_omega
            .par_iter()
            .map(|&l| {
                Ok(FidelityScanRow {
                    abscissa: l,
                    full: fidelity_quad(&design, l * hw, &options)?,
                    model: if with_model {
                        Some(moving_two_mode(&design, l * hw, &options)?)
                    } else {
                        None
                    },
                })
            })
            .collect()
    });
    let rows = collect_rows(rows, &f.lambda_over_hbar_omega, "fidelity at lambda/hbar omega")?;
    run.write_with("ff_fidelity.csv", |w| write_fidelity_scan_csv("lambda_over_hbar_omega", &rows, w))
}

fn execute(cli: Cli) -> Outcome<()> {
    let config = load_config(cli.config.as_deref())?;
    fs::create_dir_all(&cli.out)
        .with_context(|| format!("cannot create {}", cli.out.display()))
        .map_err(io_error)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
        .map_err(|e| config_error(anyhow!("--workers: {e}")))?;
    let run = Run {
        config,
        out: cli.out.clone(),
        verbose: cli.verbose,
        pool,
    };
    let echo = format!(
        "# resolved configuration of `stasplit {}`\n# trap-sha256: {}\n{}",
        cli.command.name(),
        run.config.trap_hash(),
        run.config.to_toml()
    );
    run.log(&echo);
    let echo_name = format!("{}.resolved.toml", cli.command.name());
    run.create(&echo_name)?
        .write_all(echo.as_bytes())
        .with_context(|| format!("cannot write {echo_name}"))
        .map_err(io_error)?;
    match &cli.command {
        Command::Design => design(&run),
        Command::Map { protocol } => {
            let path = protocol.clone().unwrap_or_else(|| run.out.join("protocol.csv"));
            map(&run, &path)
        }
        Command::Propagate { trajectory } => {
            let path = trajectory.clone().unwrap_or_else(|| run.out.join("trajectory.csv"));
            propagate(&run, &path)
        }
        Command::Scan => scan(&run),
        Command::Ffsplit => ffsplit(&run),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
