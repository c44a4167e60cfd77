use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use mcct::hub::Hub;
use mcct::service::{serve, ServeOptions};
use mcct::{agent_client, plot, run_local, scenario_file, stamp, summary_table, telemetry_io, wire};
use mcct_core::agent::{AgentConfig, DriverScript, SourceKind};
use mcct_core::calibration::{step_response, StepProtocol};
use mcct_core::clock::Cadence;
use mcct_core::dynamics::{VehicleParams, VehicleState};
use mcct_core::geometry::Track;
use mcct_core::message::EntityId;
use mcct_core::perception::LocalizationModel;
use mcct_core::scenario::{Mode, Scenario};
use mcct_core::telemetry::{metrics, replay, TelemetryRecord};

#[derive(Parser)]
#[command(name = "mcct", version, about = "Cloud-controlled platooning testbed with physical and virtual vehicles")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Lockstep,
    Realtime,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Lockstep => Mode::Lockstep,
            ModeArg::Realtime => Mode::Realtime,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Virtual,
    Physical,
    HdvScript,
}

impl From<KindArg> for SourceKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Virtual => SourceKind::Virtual,
            KindArg::Physical => SourceKind::Physical,
            KindArg::HdvScript => SourceKind::Hdv,
        }
    }
}

#[derive(clap::Args)]
struct ScenarioArgs {
    /// Scenario JSON file, or a preset name (experiment_a, experiment_b).
    #[arg(env = "MCCT_SCENARIO")]
    scenario: PathBuf,
    #[arg(long, env = "MCCT_SEED")]
    seed: Option<u64>,
    /// Simulated seconds, overriding the scenario.
    #[arg(long, env = "MCCT_DURATION")]
    duration: Option<f64>,
    /// Force every link delay to zero.
    #[arg(long, env = "MCCT_ZERO_DELAY")]
    zero_delay: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario in this process, write telemetry and print metrics.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum, env = "MCCT_MODE")]
        mode: Option<ModeArg>,
        /// Telemetry output (JSON lines).
        #[arg(long, env = "MCCT_OUT", default_value = "telemetry.jsonl")]
        out: PathBuf,
        /// Also write the rows as CSV.
        #[arg(long, env = "MCCT_CSV")]
        csv: Option<PathBuf>,
    },
    /// Start the coordinator service and run the scenario against remote agents.
    Serve {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, env = "MCCT_LISTEN", default_value = "127.0.0.1:7878")]
        listen: String,
        #[arg(long, value_enum, env = "MCCT_MODE", default_value = "realtime")]
        mode: ModeArg,
        #[arg(long, env = "MCCT_OUT", default_value = "telemetry.jsonl")]
        out: PathBuf,
        /// Seconds to wait for the formation to register.
        #[arg(long, env = "MCCT_REGISTER_TIMEOUT", default_value_t = 60.0)]
        register_timeout: f64,
    },
    /// Run one vehicle as a standalone process connected to a coordinator.
    Agent {
        #[arg(long, env = "MCCT_CONNECT", default_value = "127.0.0.1:7878")]
        connect: String,
        #[arg(long, env = "MCCT_ID")]
        id: String,
        #[arg(long, value_enum, env = "MCCT_KIND")]
        kind: Option<KindArg>,
        /// Take start pose, dynamics and seed from this scenario.
        #[arg(long, env = "MCCT_SCENARIO")]
        scenario: Option<PathBuf>,
        #[arg(long, env = "MCCT_SEED")]
        seed: Option<u64>,
        /// Start arc-length on the built-in loop when no scenario is given.
        #[arg(long, env = "MCCT_INITIAL_S", default_value_t = 0.0)]
        initial_s: f64,
        /// Random-stream index when no scenario is given.
        #[arg(long, env = "MCCT_INDEX", default_value_t = 1)]
        index: u64,
    },
    /// Plot speed and gap profiles (SVG and PNG).
    Plot {
        #[arg(env = "MCCT_TELEMETRY")]
        telemetry: PathBuf,
        /// Output file (.svg or .png); without either extension both are written.
        #[arg(long, env = "MCCT_OUT", default_value = "profiles")]
        out: PathBuf,
    },
    /// Print the metrics of a recorded run.
    Metrics {
        #[arg(env = "MCCT_TELEMETRY")]
        telemetry: PathBuf,
        #[arg(long, env = "MCCT_JSON")]
        json: bool,
    },
    /// Re-emit a run's snapshots on stdout as wire lines, paced in real time.
    Replay {
        #[arg(env = "MCCT_TELEMETRY")]
        telemetry: PathBuf,
        #[arg(long, env = "MCCT_SPEED", default_value_t = 1.0)]
        speed: f64,
    },
    /// Write a preset scenario to a JSON file for editing.
    Init {
        /// Preset name (experiment_a, experiment_b).
        preset: String,
        #[arg(long, env = "MCCT_OUT")]
        out: PathBuf,
    },
    /// Compare step responses of the emulated miniature and virtual vehicles.
    Calibrate,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_scenario(args: &ScenarioArgs) -> Result<Scenario, Failure> {
    let mut s = scenario_file::load(&args.scenario).map_err(usage)?;
    if let Some(seed) = args.seed {
        s.seed = seed;
    }
    if let Some(d) = args.duration {
        s.duration = d;
    }
    if args.zero_delay {
        s = s.with_zero_delay();
    }
    s.validate().map_err(|e| usage(anyhow!("{}: {e}", args.scenario.display())))?;
    Ok(s)
}

fn load_record(path: &Path) -> Result<TelemetryRecord, Failure> {
    telemetry_io::load_jsonl(path)
        .with_context(|| format!("{}", path.display()))
        .map_err(usage)
}

fn write_outputs(record: &TelemetryRecord, out: &Path, csv: Option<&Path>) -> Result<(), Failure> {
    telemetry_io::save_jsonl(out, record).with_context(|| format!("writing {}", out.display()))?;
    if let Some(csv) = csv {
        let f = std::fs::File::create(csv).with_context(|| format!("writing {}", csv.display()))?;
        telemetry_io::write_csv(record, f)?;
    }
    Ok(())
}

fn print_metrics(record: &TelemetryRecord) {
    match metrics(record) {
        Ok(m) => print!("{}", summary_table(&m)),
        Err(e) => println!("no metrics: {e}"),
    }
}

fn dispatch(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Run { scenario, mode, out, csv } => {
            let mut s = load_scenario(&scenario)?;
            if let Some(m) = mode {
                s.mode = m.into();
            }
            let started = Instant::now();
            let record = run_local(&s)?;
            info!("{} simulated seconds in {:?}", s.duration, started.elapsed());
            write_outputs(&record, &out, csv.as_deref())?;
            print_metrics(&record);
            println!("telemetry written to {}", out.display());
        }
        Cmd::Serve {
            scenario,
            listen,
            mode,
            out,
            register_timeout,
        } => {
            let s = load_scenario(&scenario)?;
            let hub = Hub::bind(&listen).with_context(|| format!("binding {listen}"))?;
            println!("listening on {}", hub.local_addr());
            let _ = std::io::stdout().flush();
            let opts = ServeOptions {
                mode: mode.into(),
                register_timeout: Duration::from_secs_f64(register_timeout.max(0.0)),
                ..ServeOptions::default()
            };
            let mut record = serve(hub, &s, opts)?;
            stamp(&mut record, &s);
            write_outputs(&record, &out, None)?;
            print_metrics(&record);
            println!("telemetry written to {}", out.display());
        }
        Cmd::Agent {
            connect,
            id,
            kind,
            scenario,
            seed,
            initial_s,
            index,
        } => {
            let (cfg, cadence) = agent_config(&id, kind, scenario.as_deref(), seed, initial_s, index)?;
            let summary = agent_client::run_agent(&connect, cfg, cadence)?;
            info!("{id}: {} ticks, {} commands, last t = {:.2}", summary.ticks, summary.commands, summary.last_t);
        }
        Cmd::Plot { telemetry, out } => {
            let record = load_record(&telemetry)?;
            for f in plot::write_plots(&record, &out)? {
                println!("{}", f.display());
            }
        }
        Cmd::Metrics { telemetry, json } => {
            let record = load_record(&telemetry)?;
            let m = metrics(&record).map_err(usage)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&m)?);
            } else {
                print!("{}", summary_table(&m));
            }
        }
        Cmd::Replay { telemetry, speed } => {
            let record = load_record(&telemetry)?;
            let frames = replay(&record, speed).map_err(usage)?;
            let start = Instant::now();
            let mut stdout = std::io::stdout().lock();
            for (offset, msg) in frames {
                let due = start + Duration::from_secs_f64(offset);
                if let Some(wait) = due.checked_duration_since(Instant::now()) {
                    std::thread::sleep(wait);
                }
                stdout.write_all(&wire::encode(&msg)?)?;
            }
        }
        Cmd::Init { preset, out } => {
            let s = scenario_file::preset(&preset).ok_or_else(|| {
                usage(anyhow!("unknown preset {preset}; expected one of {}", scenario_file::PRESETS.join(", ")))
            })?;
            scenario_file::save(&out, &s).with_context(|| format!("writing {}", out.display()))?;
            println!("{}", out.display());
        }
        Cmd::Calibrate => {
            let (phys, virt) = (VehicleParams::emulated_physical(), VehicleParams::virtual_replica());
            let lon = step_response(&StepProtocol::longitudinal(), &phys, &virt)?;
            let lat = step_response(&StepProtocol::lateral(), &phys, &virt)?;
            println!("longitudinal step: mean absolute speed deviation {:.3} km/h", lon.mean_abs_deviation());
            println!("lateral step: mean absolute heading deviation {:.4} rad", lat.mean_abs_deviation());
        }
    }
    Ok(())
}

fn agent_config(
    id: &str,
    kind: Option<KindArg>,
    scenario: Option<&Path>,
    seed: Option<u64>,
    initial_s: f64,
    index: u64,
) -> Result<(AgentConfig, Cadence), Failure> {
    if let Some(path) = scenario {
        let mut s = scenario_file::load(path).map_err(usage)?;
        if let Some(seed) = seed {
            s.seed = seed;
        }
        let track = s.validate().map_err(usage)?;
        let (i, spec) = s
            .vehicle(id)
            .ok_or_else(|| usage(anyhow!("{}: no vehicle {id}", path.display())))?;
        if let Some(k) = kind {
            if SourceKind::from(k) != spec.kind {
                return Err(usage(anyhow!("{id} is a {} vehicle in {}", spec.kind.as_str(), path.display())));
            }
        }
        return Ok((s.agent_config(&track, i), s.cadence));
    }
    let source: SourceKind = kind.ok_or_else(|| usage(anyhow!("--kind is required without --scenario")))?.into();
    let track = Track::mcct_loop();
    if !(0.0..track.lap_length()).contains(&initial_s) {
        return Err(usage(anyhow!("--initial-s must lie in [0, {})", track.lap_length())));
    }
    let script = (source == SourceKind::Hdv).then_some(DriverScript {
        base_speed: 4.2,
        amplitude: 2.1,
        period: 3.5,
        jitter_std: 0.1,
        start_time: 5.0,
    });
    let cfg = AgentConfig {
        id: EntityId::new(id),
        source,
        params: source.default_params(),
        initial: VehicleState::at_rest(track.point_at(initial_s), 0.0),
        localization: LocalizationModel::default(),
        script,
        seed: seed.unwrap_or(0),
        index,
    };
    Ok((cfg, Cadence::default()))
}
