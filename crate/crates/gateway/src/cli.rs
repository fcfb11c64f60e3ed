//! Command-line front end.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use announcer_core::config::ConfigError;
use announcer_core::engine::{Engine, EngineError};
use announcer_core::experiments::{sweep, verify_threshold, SweepError, SweepParam, SweepSpec};
use announcer_core::shotlog::{read_log, ShotLogError};
use announcer_core::storyboard::export_storyboard;
use announcer_core::{EngineConfig, Scenario};
use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::server::{self, ServeError, ServeOptions};

/// Environment variable holding the tracing filter, e.g. `info` or
/// `announcer_gateway=debug`.
pub const LOG_ENV: &str = "ANNOUNCER_LOG";

#[derive(Debug, Parser)]
#[command(name = "announcer", version, about = "Virtual-world announcer engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Headless run writing a JSON-lines shot log.
    Run {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Simulated seconds; defaults to the scenario's `duration_s`.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Live WebSocket service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        host: IpAddr,
        /// Keep the clock at zero until this many viewers connect.
        #[arg(long, default_value_t = 0)]
        wait_clients: usize,
    },
    /// One headless run per value, plus summary.csv.
    Sweep {
        #[arg(long)]
        param: SweepParam,
        #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Monte-Carlo hit rate of the dynamic threshold.
    VerifyThreshold {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        f: f64,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// One SVG per hold in a shot log.
    Storyboard {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1920.0)]
        width: f64,
        #[arg(long, default_value_t = 1080.0)]
        height: f64,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("{path}: {source}")]
    Log { path: String, source: ShotLogError },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Sweep(SweepError),
    #[error(transparent)]
    Serve(#[from] ServeError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    /// 2 for bad input, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Invalid { .. } | Self::Log { .. } => 2,
            Self::Engine(EngineError::Config(_)) => 2,
            Self::Sweep(SweepError::OutOfBounds { .. }) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig, CliError> {
    let config = match path {
        Some(p) => EngineConfig::load(p)?,
        None => EngineConfig::default(),
    };
    Ok(config)
}

/// Scenario file first, then the config's `world` section, then the
/// built-in campus. `seed` overrides whichever is chosen.
fn load_scenario(path: Option<&Path>, config: &EngineConfig, seed: Option<u64>) -> Result<Scenario, CliError> {
    let mut scenario = match (path, &config.world) {
        (Some(p), _) => Scenario::load(p)?,
        (None, Some(w)) => w.clone(),
        (None, None) => Scenario::campus(seed.unwrap_or(42)),
    };
    if let Some(s) = seed {
        scenario.seed = s;
    }
    Ok(scenario)
}

fn positive(field: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::Invalid {
            field: field.to_string(),
            message: format!("must be a positive number, got {v}"),
        })
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Cmd::Run {
            scenario,
            config,
            duration,
            seed,
            out,
        } => {
            let config = load_config(config.as_deref())?;
            let scenario = load_scenario(scenario.as_deref(), &config, seed)?;
            let duration = duration.unwrap_or(scenario.duration_s);
            positive("duration", duration)?;
            let mut engine = Engine::new(&scenario, &config)?;
            let file = File::create(&out).map_err(io_err(&out))?;
            let mut w = BufWriter::new(file);
            let summary = engine.run(duration, &mut w)?;
            w.flush().map_err(io_err(&out))?;
            println!(
                "ticks={} announcements={} global={} skipped={} prompts={}",
                summary.ticks, summary.announcements, summary.global_announcements, summary.skipped, summary.prompts
            );
        }
        Cmd::Serve {
            config,
            scenario,
            seed,
            port,
            host,
            wait_clients,
        } => {
            let config = load_config(config.as_deref())?;
            let scenario = load_scenario(scenario.as_deref(), &config, seed)?;
            let rt = tokio::runtime::Runtime::new().map_err(io_err(Path::new("runtime")))?;
            rt.block_on(async {
                let opts = ServeOptions {
                    addr: SocketAddr::new(host, port),
                    wait_clients,
                };
                let srv = server::spawn(scenario, config, opts).await?;
                tracing::info!("listening on ws://{}", srv.addr);
                println!("listening on ws://{}", srv.addr);
                match srv.handle.await {
                    Ok(r) => r.map_err(CliError::from),
                    Err(e) => Err(CliError::Io {
                        path: "simulation loop".into(),
                        source: std::io::Error::other(e),
                    }),
                }
            })?;
        }
        Cmd::Sweep {
            param,
            values,
            out,
            scenario,
            config,
            seed,
            duration,
        } => {
            let config = load_config(config.as_deref())?;
            let scenario = load_scenario(scenario.as_deref(), &config, seed)?;
            let duration = duration.unwrap_or(scenario.duration_s);
            positive("duration", duration)?;
            let spec = SweepSpec {
                param,
                values,
                scenario,
                config,
                duration,
            };
            let rows = sweep(&spec, &out).map_err(CliError::Sweep)?;
            for r in &rows {
                println!("{}={} announcements={} maue={:.4}", param_name(param), r.value, r.announcements, r.maue);
            }
            println!("{}", out.join("summary.csv").display());
        }
        Cmd::VerifyThreshold { n, f, trials, seed } => {
            if n == 0 {
                return Err(CliError::Invalid {
                    field: "n".into(),
                    message: "must be at least 1".into(),
                });
            }
            if trials == 0 {
                return Err(CliError::Invalid {
                    field: "trials".into(),
                    message: "must be at least 1".into(),
                });
            }
            if !(0.0..=1.0).contains(&f) {
                return Err(CliError::Invalid {
                    field: "f".into(),
                    message: format!("must lie in [0, 1], got {f}"),
                });
            }
            let rate = verify_threshold(n, f, trials, seed).map_err(|e| CliError::Invalid {
                field: "f".into(),
                message: e.to_string(),
            })?;
            println!("{rate}");
        }
        Cmd::Storyboard { log, out, width, height } => {
            positive("width", width)?;
            positive("height", height)?;
            let file = File::open(&log).map_err(io_err(&log))?;
            let records = read_log(BufReader::new(file)).map_err(|source| CliError::Log {
                path: log.display().to_string(),
                source,
            })?;
            let files = export_storyboard(&records, &out, width, height).map_err(io_err(&out))?;
            println!("{} frames", files.len());
        }
    }
    Ok(())
}

fn param_name(p: SweepParam) -> &'static str {
    match p {
        SweepParam::Transition => "transition",
        SweepParam::Frequency => "frequency",
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn main() -> i32 {
    let filter = tracing_subscriber::EnvFilter::try_from_env(LOG_ENV).unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
