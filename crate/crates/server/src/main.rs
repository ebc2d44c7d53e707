use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::Parser;
use proofdesk_core::workspace::{Workspace, WorkspaceConfig};
use proofdesk_protocol::mock::{MockConfig, MockProver};
use proofdesk_protocol::ProverAddress;
use proofdesk_server::{serve, spawn_memory_sampler, AppState};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(about = "Web backend for teaching with a proof assistant")]
struct Args {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    /// `tcp:HOST:PORT`, `pipe:COMMAND` or `mock` (an in-process mock prover).
    #[arg(long, default_value = "mock")]
    prover: String,
    #[arg(long, env = "PROVER_PASSWORD", hide_env_values = true)]
    prover_password: Option<String>,
    /// Latency of the in-process mock prover, in seconds.
    #[arg(long, default_value_t = 0.0)]
    mock_latency: f64,
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    /// Holds users.toml, activities/*.toml and keywords.toml.
    #[arg(long)]
    config_dir: Option<PathBuf>,
    /// Seconds to wait for one check's verdict.
    #[arg(long, default_value_t = 120)]
    task_timeout: u64,
    /// Minutes before an idle user's prover session is stopped.
    #[arg(long, default_value_t = 30)]
    session_idle: u64,
}

async fn prover_address(args: &Args) -> anyhow::Result<(ProverAddress, Option<MockProver>)> {
    let password = || {
        args.prover_password
            .clone()
            .context("PROVER_PASSWORD must be set for an external prover")
    };
    if args.prover == "mock" {
        let password = format!("{:032x}", rand_u128());
        let latency = Duration::from_secs_f64(args.mock_latency.max(0.0));
        let mock = MockProver::serve("127.0.0.1:0", MockConfig::new(password.clone(), latency)).await?;
        let port = mock.addr().port();
        tracing::info!(port, "started in-process mock prover");
        return Ok((ProverAddress::tcp("127.0.0.1", port, password), Some(mock)));
    }
    if let Some(rest) = args.prover.strip_prefix("tcp:") {
        let (host, port) = rest.rsplit_once(':').context("expected tcp:HOST:PORT")?;
        let port: u16 = port.parse().context("invalid prover port")?;
        return Ok((ProverAddress::tcp(host, port, password()?), None));
    }
    if let Some(command) = args.prover.strip_prefix("pipe:") {
        return Ok((ProverAddress::pipe(command, password()?), None));
    }
    bail!("--prover must be tcp:HOST:PORT, pipe:COMMAND or mock")
}

fn rand_u128() -> u128 {
    let a = uuid::Uuid::new_v4().as_u128();
    a ^ (std::process::id() as u128)
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let args = Args::parse();
    let (address, _mock) = prover_address(&args).await?;
    let mut config = WorkspaceConfig::new(&args.data_dir);
    config.config_dir = args.config_dir.clone();
    config.prover = Some(address);
    config.task_timeout = Duration::from_secs(args.task_timeout);
    config.session_idle = Duration::from_secs(args.session_idle * 60);
    let workspace = Workspace::open(config).context("opening the workspace")?;
    let state = AppState::new(workspace);
    spawn_memory_sampler(&state.metrics, Duration::from_secs(10));

    let addr: SocketAddr = format!("{}:{}", args.bind, args.port)
        .parse()
        .context("invalid --bind/--port")?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    // Tests and scripts read the bound address from this line.
    println!("listening on {}", listener.local_addr()?);
    serve(listener, state).await?;
    Ok(())
}
