//! HTTP service for live ECG dialogue sessions, tool calls and evaluation
//! jobs, plus the pieces the `ecg-agent` command line is built from.
//!
//! Sessions are kept in an append-only log under `data_dir/sessions` and
//! replayed on startup; see [`store`]. Routes are listed in [`api`], the
//! config file format in [`config`].

pub mod api;
pub mod app;
pub mod config;
pub mod error;
pub mod records;
pub mod runner;
pub mod store;

use std::future::Future;
use std::sync::Arc;

pub use app::{backend_factory, AppState, BackendFactory, StartupError};
pub use config::Config;
pub use error::ApiError;

/// Serves `app` on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, api::router(app)).with_graceful_shutdown(shutdown).await
}
