//! Standalone mock prover.
//!
//!   mock-prover --port 9999 --password secret --latency 0.2
//!   mock-prover --stdio --password secret

use std::sync::Arc;
use std::time::Duration;

use clap::Parser;
use proofdesk_protocol::mock::{serve_connection, MockConfig, MockProver, MockState};

#[derive(Parser, Debug)]
#[command(name = "mock-prover", about = "Deterministic stand-in for an Isabelle-style prover server")]
struct Args {
    /// TCP port to listen on (0 picks a free port)
    #[arg(long, default_value_t = 9999)]
    port: u16,

    /// Address to bind
    #[arg(long, default_value = "127.0.0.1")]
    host: String,

    /// Password expected as the first line of every connection
    #[arg(long, env = "MOCK_PROVER_PASSWORD", default_value = "")]
    password: String,

    /// Seconds to wait before each verdict
    #[arg(long, default_value_t = 0.0)]
    latency: f64,

    /// Serve one connection over stdin/stdout instead of TCP
    #[arg(long)]
    stdio: bool,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let args = Args::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .init();
    let latency = Duration::try_from_secs_f64(args.latency).unwrap_or(Duration::ZERO);
    let config = MockConfig::new(args.password, latency);

    if args.stdio {
        serve_connection(
            tokio::io::stdin(),
            tokio::io::stdout(),
            Arc::new(config),
            Arc::new(MockState::default()),
        )
        .await;
        return Ok(());
    }

    let server = MockProver::serve((args.host.as_str(), args.port), config).await?;
    // Printed so scripts can pick up an ephemeral port.
    println!("listening on {}", server.addr());
    tokio::signal::ctrl_c().await?;
    Ok(())
}
