use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use nfvac_service::{serve, AppState};

/// Serves admission decisions of a trained policy over HTTP.
#[derive(Parser, Debug)]
#[command(name = "nfvac-service", version)]
struct Args {
    /// Run configuration the policy was produced for.
    #[arg(long, env = "AC_CONFIG")]
    config: PathBuf,
    /// Policy file, or `greedy` / `always-reject`.
    #[arg(long, env = "AC_POLICY")]
    policy: String,
    #[arg(long, env = "AC_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Use the undivided capacities of the config.
    #[arg(long)]
    full_scale: bool,
    /// Accept a policy whose config hash does not match.
    #[arg(long)]
    force: bool,
}

#[tokio::main]
async fn main() -> ExitCode {
    let args = Args::parse();
    let state = match AppState::load(&args.config, &args.policy, args.full_scale, args.force) {
        Ok(s) => Arc::new(s),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let addr = SocketAddr::new(args.host, args.port);
    let listener = match tokio::net::TcpListener::bind(addr).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: cannot bind {addr}: {e}");
            return ExitCode::from(1);
        }
    };
    let health = state.health();
    eprintln!(
        "serving policy {} (config {}) on http://{}",
        health.policy_label,
        health.config_hash,
        listener.local_addr().map_or(addr, |a| a)
    );
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    if let Err(e) = serve(listener, state, shutdown).await {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
