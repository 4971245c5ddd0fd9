use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use eoflow::assembly::Convection;
use eoflow::config::{preset, ProblemKind, SimConfig, CHANNEL_WIDTH};
use eoflow::output::{save_vtk, write_mesh_vtk, EnergyCsv};
use eoflow::scheme::EnergyRecord;
use eoflow::verify::{
    run_mms_spatial, run_mms_temporal, run_roughness_study, run_stability_sweep, simulate, MmsCase, RateTable,
    SpatialStudy, TemporalStudy, TEMPORAL_DECAY,
};
use log::{error, info, warn};

#[derive(Parser, Debug)]
#[command(name = "eoflow", version, about = "Electro-osmotic micro-channel flow solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Built-in configuration to start from.
    #[arg(long, global = true, conflicts_with = "config")]
    preset: Option<String>,

    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Number of time steps (overrides the final time).
    #[arg(long, global = true)]
    steps: Option<usize>,

    /// Refinement levels of a convergence study.
    #[arg(long, global = true)]
    levels: Option<usize>,

    /// Exit with status 1 when an acceptance threshold is missed.
    #[arg(long, global = true)]
    assert: bool,

    #[arg(long, global = true, value_enum)]
    convection: Option<ConvectionArg>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Time-step a configuration, writing VTK snapshots and an energy log.
    Run,
    /// Manufactured-solution convergence study.
    Converge {
        #[arg(long, value_enum, default_value_t = Axis::Space)]
        axis: Axis,
        /// Mesh divisions: the coarsest level in space, the fixed mesh in time.
        #[arg(long)]
        divisions: Option<usize>,
    },
    /// Energy bounds over several step sizes.
    Stability {
        /// Comma-separated step sizes.
        #[arg(long, value_delimiter = ',', default_values_t = [1e-7, 1e-6, 1e-5])]
        taus: Vec<f64>,
        #[arg(long, default_value_t = 2e-5)]
        t_final: f64,
    },
    /// Peak streamwise velocity against block height.
    Roughness,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ConvectionArg {
    Skew,
    Plain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Axis {
    Space,
    Time,
}

type CliResult<T> = std::result::Result<T, String>;

fn load_config(cli: &Cli, default: &str) -> CliResult<SimConfig> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(path), _) => SimConfig::from_file(path).map_err(|e| e.to_string())?,
        (None, Some(name)) => preset(name).map_err(|e| e.to_string())?,
        (None, None) => preset(default).map_err(|e| e.to_string())?,
    };
    if let Some(c) = cli.convection {
        cfg.options.convection = match c {
            ConvectionArg::Skew => Convection::Skew,
            ConvectionArg::Plain => Convection::Plain,
        };
    }
    if let Some(n) = cli.steps {
        if n == 0 {
            return Err("--steps must be positive".into());
        }
        cfg.t_final = n as f64 * cfg.tau;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn prepare_out(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn cmd_run(cli: &Cli) -> CliResult<()> {
    let cfg = load_config(cli, "tjunction-nu1")?;
    prepare_out(&cli.out)?;
    let mesh = cfg.mesh().map_err(|e| e.to_string())?;
    info!(
        "{} vertices, {} triangles, tau {:e}, {} steps, {} convection",
        mesh.n_vertices(),
        mesh.n_triangles(),
        cfg.tau,
        cfg.n_steps(),
        cfg.options.convection.name()
    );
    let mut mesh_text = Vec::new();
    write_mesh_vtk(&mut mesh_text, &mesh).map_err(|e| e.to_string())?;
    write_text(&cli.out.join("mesh.vtk"), &String::from_utf8_lossy(&mesh_text))?;
    write_text(&cli.out.join("config.txt"), &cfg.to_text())?;

    let mut log = EnergyCsv::create(&cli.out.join("energy.csv"), cfg.physics.n_species()).map_err(|e| e.to_string())?;
    let steps = cfg.n_steps();
    let every = cfg.output_interval.max(1);
    let result = simulate(&cfg, &mesh, steps, |_, state, energy| {
        log.push(energy)?;
        if state.step % every == 0 || state.step == steps {
            save_vtk(&cli.out, "fields", &mesh, state)?;
            info!("step {} t = {:e}: {}", state.step, state.time, summary(energy));
        }
        Ok(())
    });
    log.finish().map_err(|e| e.to_string())?;
    let last = result.map_err(|e| e.to_string())?;
    info!("finished at t = {:e} after {} steps", last.time, last.step);
    Ok(())
}

fn summary(e: &EnergyRecord) -> String {
    EnergyRecord::entry_names(e.c_l2.len())
        .iter()
        .zip(e.entries())
        .map(|(n, v)| format!("{n} {v:.3e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Fields and thresholds of the convergence checks.
fn rate_checks(table: &RateTable, axis: Axis, n_species: usize) -> Vec<String> {
    let species: Vec<String> = (1..=n_species).map(|i| format!("c{i}")).collect();
    let mut checks: Vec<(String, bool, f64)> = Vec::new();
    match axis {
        Axis::Space => {
            for f in ["rho", "u", "phi"].iter().map(|s| s.to_string()).chain(species) {
                checks.push((f.clone(), false, 1.8));
                checks.push((f, true, 0.8));
            }
            checks.push(("p".into(), false, 0.8));
        }
        Axis::Time => {
            for f in ["rho", "u"].iter().map(|s| s.to_string()).chain(species) {
                checks.push((f, false, 0.8));
            }
        }
    }
    let mut failures = Vec::new();
    for (field, h1, min) in checks {
        let slope = if h1 { table.h1_slope(&field) } else { table.slope(&field) };
        let label = if h1 { format!("{field} H1") } else { format!("{field} L2") };
        match slope {
            Some(s) if s >= min => info!("{label} slope {s:.3} (>= {min})"),
            Some(s) => failures.push(format!("{label} slope {s:.3} < {min}")),
            None => failures.push(format!("{label} slope needs at least 3 levels")),
        }
    }
    failures
}

fn cmd_converge(cli: &Cli, axis: Axis, divisions: Option<usize>) -> CliResult<()> {
    let cfg = load_config(cli, "mms-default")?;
    if cfg.problem != ProblemKind::Manufactured {
        return Err("converge needs a manufactured configuration (try --preset mms-default)".into());
    }
    prepare_out(&cli.out)?;
    let physics = cfg.physics.clone();
    let table = match axis {
        Axis::Space => {
            let mut study = SpatialStudy { options: cfg.options, ..SpatialStudy::default() };
            study.levels = cli.levels.unwrap_or(study.levels);
            study.base_divisions = divisions.unwrap_or(study.base_divisions);
            info!("spatial study: {} levels from {} divisions", study.levels, study.base_divisions);
            run_mms_spatial(&MmsCase::new(physics.clone()), &study)
        }
        Axis::Time => {
            let mut study = TemporalStudy { options: cfg.options, ..TemporalStudy::default() };
            if let Some(n) = cli.levels {
                study.steps = (0..n).map(|k| 10 << k).collect();
            }
            study.divisions = divisions.unwrap_or(study.divisions);
            info!("temporal study: steps {:?} on {} divisions", study.steps, study.divisions);
            run_mms_temporal(&MmsCase::transient(physics.clone(), TEMPORAL_DECAY), &study)
        }
    }
    .map_err(|e| e.to_string())?;
    let name = if axis == Axis::Space { "spatial.csv" } else { "temporal.csv" };
    write_text(&cli.out.join(name), &table.to_csv())?;
    for d in &table.diagnostics {
        info!("{} steps: max |Bu|/|u| {:.2e}, max |mean p| {:.2e}", d.steps, d.divergence_ratio, d.pressure_mean);
    }
    let failures = rate_checks(&table, axis, physics.n_species());
    finish_checks(cli.assert, failures)
}

fn finish_checks(assert: bool, failures: Vec<String>) -> CliResult<()> {
    for f in &failures {
        warn!("{f}");
    }
    if assert && !failures.is_empty() {
        return Err(format!("{} acceptance check(s) failed", failures.len()));
    }
    Ok(())
}

fn cmd_stability(cli: &Cli, taus: &[f64], t_final: f64) -> CliResult<()> {
    let cfg = load_config(cli, "tjunction-nu1")?;
    prepare_out(&cli.out)?;
    let rows = run_stability_sweep(&cfg, taus, t_final).map_err(|e| e.to_string())?;
    let names = EnergyRecord::entry_names(cfg.physics.n_species());
    let mut csv = String::from("tau,steps,finite,bounded");
    for n in &names {
        let _ = write!(csv, ",{n}_max,{n}_early");
    }
    csv.push('\n');
    let mut failures = Vec::new();
    for r in &rows {
        let _ = write!(csv, "{:e},{},{},{}", r.tau, r.steps, r.finite, r.bounded(10.0));
        for (m, i) in r.max.iter().zip(&r.initial_max) {
            let _ = write!(csv, ",{m:.6e},{i:.6e}");
        }
        csv.push('\n');
        if let Some(f) = &r.failure {
            failures.push(format!("tau {:e}: {f}", r.tau));
        } else if !r.bounded(10.0) {
            failures.push(format!("tau {:e}: energy exceeds 10x its early maximum", r.tau));
        }
    }
    write_text(&cli.out.join("stability.csv"), &csv)?;
    finish_checks(cli.assert, failures)
}

fn cmd_roughness(cli: &Cli) -> CliResult<()> {
    let base = load_config(cli, "rough-01h")?;
    prepare_out(&cli.out)?;
    let heights: Vec<f64> = [0.1, 0.2, 0.3, 0.4].iter().map(|f| f * CHANNEL_WIDTH).collect();
    let points = run_roughness_study(&base, &heights).map_err(|e| e.to_string())?;
    let mut csv = String::from("height,max_u1\n");
    for p in &points {
        let _ = writeln!(csv, "{:e},{:.9e}", p.height, p.max_u1);
        info!("height {:.1}H: max |u1| = {:.4e}", p.height / CHANNEL_WIDTH, p.max_u1);
    }
    write_text(&cli.out.join("roughness.csv"), &csv)?;
    let failures: Vec<String> = points
        .windows(2)
        .filter(|w| w[1].max_u1 < 1.01 * w[0].max_u1)
        .map(|w| format!("max |u1| not 1% above the previous height at {:e}", w[1].height))
        .collect();
    finish_checks(cli.assert, failures)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let result = match &cli.command {
        Command::Run => cmd_run(&cli),
        Command::Converge { axis, divisions } => cmd_converge(&cli, *axis, *divisions),
        Command::Stability { taus, t_final } => cmd_stability(&cli, taus, *t_final),
        Command::Roughness => cmd_roughness(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            error!("{msg}");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
