//! Thin command-line front end over the library: list scenarios,
//! calibrate, run Monte-Carlo pipelines, sweep a channel axis. All real
//! work lives in the library; this file only parses arguments, resolves
//! the scenario, and prints a short human summary of what was written.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use distbeam::pipeline::{
    emit_outputs, emit_sweep_outputs, run_calibration, run_monte_carlo, run_sweep, write_manifest,
    SweepAxis,
};
use distbeam::scenario::{
    builtin_scenario, builtin_scenarios, load_scenario, ScenarioConfig, SimMode,
};
use distbeam::{Error, Result};

/// Print a line to stdout, leaving quietly if the reading end has gone
/// away (e.g. the output is piped into `head`).
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        if let Err(e) = writeln!(std::io::stdout(), $($arg)*) {
            let code = if e.kind() == std::io::ErrorKind::BrokenPipe { 0 } else { 4 };
            std::process::exit(code);
        }
    }};
}

#[derive(Parser)]
#[command(
    name = "distbeam",
    version,
    about = "Desk-scale distributed-beamforming simulator: sync, ranging, \
             localization, focus/null beam metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the builtin scenarios.
    Scenarios {
        /// Emit full configurations as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Derive per-pair calibration constants on the reference bench.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Write calibration.json (plus manifest) here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline across Monte-Carlo trials and write reports.
    Run {
        #[command(flatten)]
        common: Common,
        /// Number of Monte-Carlo trials.
        #[arg(long, default_value_t = 1)]
        trials: u64,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also dump reference/transmit/capture IQ under waveforms/.
        #[arg(long)]
        dump_waveforms: bool,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Monte-Carlo the pipeline at several values of a channel knob.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Which knob to sweep.
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Comma-separated axis values, e.g. 10,20,30.
        #[arg(long)]
        values: String,
        /// Trials per sweep point.
        #[arg(long, default_value_t = 1)]
        trials: u64,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// Builtin scenario name, or path to a scenario JSON file.
    #[arg(long)]
    scenario: String,
    /// Override the scenario's fidelity level.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Override the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Synthesized pulses through a simulated channel.
    Waveform,
    /// Timestamp-level error model, no IQ.
    Abstract,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AxisArg {
    /// Link SNR in dB (waveform mode).
    SnrDb,
    /// Timestamp error sigma in seconds (abstract mode).
    AbstractSigmaS,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::SnrDb => SweepAxis::SnrDb,
            AxisArg::AbstractSigmaS => SweepAxis::AbstractSigmaS,
        }
    }
}

/// Resolve --scenario: builtin names win, anything else is a path.
fn resolve(common: &Common) -> Result<(String, ScenarioConfig)> {
    let (name, mut cfg) = match builtin_scenario(&common.scenario) {
        Some(cfg) => (common.scenario.clone(), cfg),
        None if Path::new(&common.scenario).exists() => {
            let cfg = load_scenario(Path::new(&common.scenario))?;
            let stem = Path::new(&common.scenario)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| common.scenario.clone());
            (stem, cfg)
        }
        None => {
            let names: Vec<String> =
                builtin_scenarios().into_iter().map(|s| s.name).collect();
            return Err(Error::Validation(format!(
                "'{}' is neither a builtin scenario nor an existing file; builtins: {}",
                common.scenario,
                names.join(", ")
            )));
        }
    };
    if let Some(mode) = common.mode {
        cfg.mode = match mode {
            ModeArg::Waveform => SimMode::WaveformLevel,
            ModeArg::Abstract => SimMode::AbstractError,
        };
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok((name, cfg))
}

fn scenarios_cmd(json: bool) -> Result<()> {
    let all = builtin_scenarios();
    if json {
        let rows: Vec<serde_json::Value> = all
            .iter()
            .map(|s| serde_json::json!({ "name": s.name, "config": s.config }))
            .collect();
        out!("{}", serde_json::to_string_pretty(&rows)?);
        return Ok(());
    }
    for s in &all {
        let node2 = s.config.node(2).true_position;
        let rx: Vec<String> = s
            .config
            .receivers
            .iter()
            .map(|r| format!("{:?}@({:.2}, {:.2})", r.objective, r.true_position.x_m, r.true_position.y_m))
            .collect();
        out!("{:26} node2 ({:.2}, {:.2})  {}", s.name, node2.x_m, node2.y_m, rx.join("  "));
    }
    Ok(())
}

fn calibrate_cmd(common: &Common, out: Option<&Path>) -> Result<()> {
    let (name, cfg) = resolve(common)?;
    let report = run_calibration(&name, &cfg)?;
    let json = serde_json::to_string_pretty(&report)?;
    match out {
        None => out!("{json}"),
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("calibration.json"), format!("{json}\n"))?;
            write_manifest(dir)?;
            out!("wrote calibration.json to {}", dir.display());
        }
    }
    for rec in &report.records {
        out!(
            "pair {:?}: tau_cal {:.3} ns",
            rec.pair,
            rec.tau_cal_s * 1e9
        );
    }
    Ok(())
}

fn run_cmd(
    common: &Common,
    trials: u64,
    out: &Path,
    dump_waveforms: bool,
    jobs: Option<usize>,
) -> Result<()> {
    let (name, cfg) = resolve(common)?;
    let (report, exchanges) = run_monte_carlo(&name, &cfg, trials, jobs)?;
    let entries = emit_outputs(&cfg, &report, &exchanges, out, dump_waveforms)?;
    out!(
        "{name} ({:?}): {trials} trial(s), seed {}",
        report.mode, report.seed
    );
    for q in &report.localization {
        out!(
            "  {:>3}: rmse {:9.3} mm  bias {:+9.3} mm",
            q.quantity,
            q.rmse_m * 1e3,
            q.bias_m * 1e3
        );
    }
    if let Some(p) = report.beam.null_depth_db {
        out!("  null depth median {:.1} dB (p10 {:.1}, p90 {:.1})", p.median, p.p10, p.p90);
    }
    out!("  coherent gain median {:.4}", report.beam.coherent_gain.median);
    out!("wrote {} files to {}", entries.len() + 1, out.display());
    Ok(())
}

fn sweep_cmd(
    common: &Common,
    axis: AxisArg,
    values: &str,
    trials: u64,
    out: &Path,
    jobs: Option<usize>,
) -> Result<()> {
    let (name, cfg) = resolve(common)?;
    let parsed: Result<Vec<f64>> = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Validation(format!("bad axis value '{v}'")))
        })
        .collect();
    let parsed = parsed?;
    let axis = SweepAxis::from(axis);
    let points = run_sweep(&name, &cfg, axis, &parsed, trials, jobs)?;
    let entries = emit_sweep_outputs(&cfg, axis, &points, out, false)?;
    for p in &points {
        let d1 = &p.report.localization[0];
        let value = if p.axis_value == 0.0 || p.axis_value.abs() >= 0.01 {
            format!("{}", p.axis_value)
        } else {
            format!("{:e}", p.axis_value)
        };
        out!("{} = {value}: d1 rmse {:9.3} mm", axis.name(), d1.rmse_m * 1e3);
    }
    out!("wrote {} files to {}", entries.len() + 1, out.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Scenarios { json } => scenarios_cmd(*json),
        Command::Calibrate { common, out } => calibrate_cmd(common, out.as_deref()),
        Command::Run {
            common,
            trials,
            out,
            dump_waveforms,
            jobs,
        } => run_cmd(common, *trials, out, *dump_waveforms, *jobs),
        Command::Sweep {
            common,
            axis,
            values,
            trials,
            out,
            jobs,
        } => sweep_cmd(common, *axis, values, *trials, out, *jobs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
