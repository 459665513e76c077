use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Parser;
use ic_service::{router, ServiceConfig};

/// HTTP service for interactive intrinsic-domain compositing.
#[derive(Debug, Parser)]
#[command(name = "ic-service", version)]
struct Args {
    #[arg(long, env = "IC_HOST", default_value = "127.0.0.1")]
    host: String,
    #[arg(long, env = "IC_PORT", default_value_t = 8080)]
    port: u16,
    /// Scenes kept in memory.
    #[arg(long, env = "IC_STORE_CAP", default_value_t = 16)]
    store_cap: usize,
    /// Persist uploads here so evicted scenes can be reloaded.
    #[arg(long, env = "IC_STORE_DIR")]
    store_dir: Option<PathBuf>,
    /// Default long side for uploaded scenes.
    #[arg(long, env = "IC_RESOLUTION", default_value_t = ic_core::io::DEFAULT_RESOLUTION)]
    resolution: usize,
    /// Browser origin allowed by CORS; any origin when omitted.
    #[arg(long, env = "IC_CORS_ORIGIN")]
    cors_origin: Option<String>,
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IC_LOG", "info")).init();
    let args = Args::parse();
    let config = ServiceConfig {
        store_cap: args.store_cap,
        store_dir: args.store_dir,
        resolution: args.resolution,
        cors_origin: args.cors_origin,
        ..ServiceConfig::default()
    };
    let addr: SocketAddr = format!("{}:{}", args.host, args.port).parse()?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{addr}");
    axum::serve(listener, router(config)).await?;
    Ok(())
}
