//! HTTP/JSON service over a puzzle dataset: instance listing, interactive
//! episodes, content-addressed view images, piece previews and human
//! calibration records. [`HttpDriver`] is the matching blocking client.

pub mod api;
mod client;
mod routes;
mod state;

use std::net::SocketAddr;
use std::sync::Arc;

pub use client::HttpDriver;
pub use routes::router;
pub use state::{AppState, EpisodeEvent, ServiceConfig, StartError, CALIBRATION_FILE, EPISODE_DIR};

/// Serves until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// A server on its own thread and runtime; stops when dropped.
pub struct BackgroundServer {
    pub addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl BackgroundServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Binds `addr` (port 0 for any free port) and serves in the background.
pub fn spawn(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<BackgroundServer> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        rt.block_on(async move {
            let served = axum::serve(listener, router(state)).with_graceful_shutdown(async {
                let _ = rx.await;
            });
            if let Err(e) = served.await {
                log::error!("server stopped: {e}");
            }
        });
    });
    Ok(BackgroundServer {
        addr,
        stop: Some(tx),
        thread: Some(thread),
    })
}
