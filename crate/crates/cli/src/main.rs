use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::Parser;
use helmsman::app::Platform;
use helmsman::config::{PlatformConfig, ENV_DATA_DIR, ENV_PORT};
use helmsman::script::{parse_script, ScriptHost, DEFAULT_WAIT};
use tracing_subscriber::EnvFilter;

/// Web operations platform for ROS-style robot cells: message bus, bridge,
/// simulated robot and the services behind the dashboard.
#[derive(Debug, Parser)]
#[command(name = "helmsman", version)]
struct Args {
    /// Platform configuration (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Bridge port, overriding the config.
    #[arg(long, env = ENV_PORT)]
    port: Option<u16>,
    /// Directory for the users file, config CSV, routines and database.
    #[arg(long, value_name = "PATH", env = ENV_DATA_DIR)]
    data_dir: Option<PathBuf>,
    /// Run a session script against a simulated clock and exit.
    #[arg(long, value_name = "PATH")]
    script: Option<PathBuf>,
    /// Address the bridge binds to.
    #[arg(long, default_value = "0.0.0.0")]
    host: IpAddr,
    #[arg(long, default_value = "info")]
    log_level: String,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let filter = EnvFilter::try_new(&args.log_level).unwrap_or_else(|_| EnvFilter::new("info"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
    match run(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load(args: &Args) -> anyhow::Result<PlatformConfig> {
    let mut config = PlatformConfig::load(&args.config)?;
    if let Some(port) = args.port {
        config.bridge.port = port;
    }
    if let Some(dir) = &args.data_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        config.data_dir = dir.clone();
    }
    Ok(config)
}

fn run(args: Args) -> anyhow::Result<ExitCode> {
    let config = load(&args)?;
    if let Some(path) = &args.script {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let lines = parse_script(&text).with_context(|| path.display().to_string())?;
        let (platform, clock) = Platform::boot_sim(config)?;
        let client = platform.connect_local();
        let host = ScriptHost {
            client: &client,
            bus: &platform.bus,
            runtime: &platform.runtime,
            sim: Some(&clock),
            wait: DEFAULT_WAIT,
        };
        // The greeting frame is part of every session.
        let _ = client.recv(DEFAULT_WAIT);
        return Ok(match host.run(&lines) {
            Ok(()) => {
                println!("script ok: {} commands", lines.len());
                ExitCode::SUCCESS
            }
            Err(failure) => {
                eprintln!("{failure}");
                ExitCode::from(1)
            }
        });
    }

    let addr = SocketAddr::new(args.host, config.bridge.port);
    let features: Vec<&str> = config.features.iter().map(|f| f.as_str()).collect();
    let features = features.join(",");
    let platform = Platform::boot_realtime(config)?;
    let server = platform
        .listen(addr)
        .with_context(|| format!("binding {addr}"))?;
    let _driver = platform.drive(Duration::from_millis(10));
    println!(
        "helmsman ready on ws://{} features={}",
        server.local_addr(),
        features
    );
    server.join();
    Ok(ExitCode::SUCCESS)
}
