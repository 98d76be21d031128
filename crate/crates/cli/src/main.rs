//! `telerehab`: run the experiments, replay demos, or serve a live session.
//!
//! Exit codes: 0 success, 2 configuration error, 3 simulation error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use telerehab_core::error::HarnessError;
use telerehab_core::harness::{pattern_sweep, run_experiment, ExperimentConfig, ExperimentId, RunOutput, PRESET_NAMES};
use telerehab_core::traj::TrajectoryKind;
use telerehab_gateway::{Gateway, GatewayConfig};

#[derive(Parser)]
#[command(name = "telerehab", version, about = "Bilateral teleoperation simulator for upper-limb rehabilitation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment and write telemetry, metrics and demos.
    Run {
        /// Preset to start from (see `list-presets`).
        #[arg(long)]
        exp: Option<String>,
        /// Trajectory pattern; exp2 sweeps all five when absent.
        #[arg(long)]
        traj: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Replay a recorded demo on the master while the second robot follows.
    Replay {
        #[arg(long)]
        demo: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// List the experiment presets.
    ListPresets,
    /// Serve the operator console's WebSocket session.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Preset the session starts from.
        #[arg(long, default_value = "exp3")]
        exp: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the run and its channel.
    #[arg(long)]
    seed: Option<u64>,
    /// Switch both disturbance observers off.
    #[arg(long)]
    no_ndob: bool,
    /// One-way master-to-second delay.
    #[arg(long, value_name = "MS")]
    channel_delay_ms: Option<f64>,
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<(), HarnessError> {
    match cmd {
        Cmd::Run { exp, traj, common } => {
            let cfg = load(exp.as_deref(), &common)?;
            let kind = traj.as_deref().map(parse_pattern).transpose()?;
            let configs = match kind {
                Some(k) => {
                    let mut c = cfg;
                    c.trajectory.kind = k;
                    c.trajectory.shape = None;
                    vec![c]
                }
                None if cfg.experiment == ExperimentId::Exp2 => pattern_sweep(&cfg),
                None => vec![cfg],
            };
            for c in &configs {
                report(&run_experiment(c)?);
            }
            Ok(())
        }
        Cmd::Replay { demo, common } => {
            let mut cfg = load(Some("exp5"), &common)?;
            cfg.trajectory.demo = Some(demo);
            report(&run_experiment(&cfg)?);
            Ok(())
        }
        Cmd::ListPresets => {
            for name in PRESET_NAMES {
                let c = ExperimentConfig::preset(name)?;
                println!("{name:<14} {:>5.1} s  {}", c.duration, describe(&c));
            }
            Ok(())
        }
        Cmd::Serve { host, port, exp, config } => {
            let cfg = match &config {
                Some(path) => ExperimentConfig::from_toml_over(&read(path)?, Some(&exp))?,
                None => ExperimentConfig::preset(&exp)?,
            };
            serve(cfg, &host, port)
        }
    }
}

fn load(exp: Option<&str>, common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match (&common.config, exp) {
        (Some(path), exp) => ExperimentConfig::from_toml_over(&read(path)?, exp)?,
        (None, Some(exp)) => ExperimentConfig::preset(exp)?,
        (None, None) => return Err(HarnessError::ConfigInvalid("give --exp or --config".into())),
    };
    if let Some(d) = common.duration {
        cfg.duration = d;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.session.channel.seed = seed;
    }
    if common.no_ndob {
        cfg.master.ndob_enabled = false;
        cfg.second.ndob_enabled = false;
    }
    if let Some(ms) = common.channel_delay_ms {
        if !(ms.is_finite() && ms >= 0.0) {
            return Err(HarnessError::ConfigInvalid(format!("channel delay must be non-negative, got {ms} ms")));
        }
        cfg.session.channel.delay_ticks = (ms * 1e-3 * cfg.session.channel.rate).round() as u64;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read(path: &PathBuf) -> Result<String, HarnessError> {
    std::fs::read_to_string(path)
        .map_err(|e| HarnessError::ConfigInvalid(format!("cannot read {}: {e}", path.display())))
}

fn parse_pattern(name: &str) -> Result<TrajectoryKind, HarnessError> {
    let name = if name == "figure8" { "figure-eight" } else { name };
    TrajectoryKind::PATTERNS.into_iter().find(|k| k.name() == name).ok_or_else(|| {
        let names: Vec<_> = TrajectoryKind::PATTERNS.iter().map(|k| k.name()).collect();
        HarnessError::ConfigInvalid(format!("unknown trajectory `{name}` (expected one of {})", names.join(", ")))
    })
}

fn describe(c: &ExperimentConfig) -> String {
    match c.experiment {
        ExperimentId::Exp1 => "single robots on a circle, observer off and on".into(),
        ExperimentId::Exp2 | ExperimentId::Custom => "unilateral teleoperation over the five patterns".into(),
        ExperimentId::Exp3 => "pHRI on the master, demo recorded".into(),
        ExperimentId::Exp4 => format!("bilateral feedback, {:?} scenario", c.scenario).to_lowercase(),
        ExperimentId::Exp5 => "replay of a recorded demo, filtered and unfiltered".into(),
    }
}

fn report(outputs: &[RunOutput]) {
    let mm = |m: Option<&telerehab_core::harness::RobotMetrics>| {
        m.map_or("-".to_string(), |m| format!("{:.3} mm", m.rms_tracking_error * 1e3))
    };
    for o in outputs {
        println!(
            "{:<28} master RMS {:>10}  second RMS {:>10}  max |F_ff| {:.2} N  -> {}",
            o.label,
            mm(o.metrics.master.as_ref()),
            mm(o.metrics.second.as_ref()),
            o.metrics.max_abs_feedback_force,
            o.telemetry.display()
        );
        if let Some(d) = &o.demo {
            println!("{:<28} demo -> {}", "", d.display());
        }
    }
}

fn serve(cfg: ExperimentConfig, host: &str, port: u16) -> Result<(), HarnessError> {
    let gateway = Gateway::spawn(cfg, GatewayConfig::default())?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port)).await?;
        eprintln!("serving ws://{}/session", listener.local_addr()?);
        telerehab_gateway::serve(listener, gateway.handle()).await
    })?;
    Ok(())
}
