use std::net::SocketAddr;

use tracing_subscriber::EnvFilter;

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let addr: SocketAddr = std::env::args()
        .nth(1)
        .or_else(|| std::env::var("DELEGACOIN_ADDR").ok())
        .unwrap_or_else(|| "127.0.0.1:8080".into())
        .parse()
        .unwrap_or_else(|e| {
            eprintln!("usage: delegacoin-server [ADDR]: {e}");
            std::process::exit(2)
        });
    let (bound, task) = match delegacoin_server::spawn(addr, Default::default()).await {
        Ok(v) => v,
        Err(e) => {
            eprintln!("cannot bind {addr}: {e}");
            std::process::exit(1)
        }
    };
    tracing::info!("listening on http://{bound}");
    tokio::select! {
        _ = task => {}
        _ = tokio::signal::ctrl_c() => tracing::info!("shutting down"),
    }
}
