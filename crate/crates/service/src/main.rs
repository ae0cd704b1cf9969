use std::sync::Arc;

use anyhow::{bail, Context, Result};
use delib_service::{router, AppState, ServiceConfig};

#[tokio::main]
async fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let path = match (args.next(), args.next()) {
        (Some(flag), Some(path)) if flag == "--config" => path,
        (Some(path), None) if !path.starts_with('-') => path,
        _ => bail!("usage: delib-server --config <service.toml>"),
    };
    let config = ServiceConfig::load(&path).with_context(|| format!("loading {path}"))?;
    let state = tokio::task::spawn_blocking({
        let config = config.clone();
        move || AppState::from_config(&config)
    })
    .await??;
    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .with_context(|| format!("binding {}", config.listen))?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
