//! HTTP/JSON labeling sessions over precomputed graph artifacts.
//!
//! A human answers LAND queries through the API; every answer is appended to
//! a per-session log so a restart loses nothing.

pub mod api;
pub mod dataset;
pub mod error;
pub mod session;
pub mod state;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::routing::{get, post};
use axum::Router;
use tower_http::services::{ServeDir, ServeFile};

pub use error::{ApiError, ErrorBody};
pub use state::AppState;

/// API routes; unknown paths fall through to `static_dir` when given.
pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/health", get(api::health))
        .route("/datasets", get(api::datasets))
        .route("/sessions", post(api::create_session).get(api::list_sessions))
        .route("/sessions/{id}", get(api::get_session))
        .route("/sessions/{id}/queries", get(api::queries))
        .route("/sessions/{id}/labels", post(api::submit_label).get(api::list_labels))
        .route("/sessions/{id}/propagate", post(api::propagate))
        .route("/sessions/{id}/map", get(api::map))
        .route("/sessions/{id}/pixels/{index}", get(api::pixel))
        .route("/sessions/{id}/metrics", get(api::metrics))
        .with_state(state);
    match static_dir {
        Some(dir) => {
            let index = dir.join("index.html");
            api.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(index)))
        }
        None => api.fallback(api::no_route),
    }
}

pub struct ServeOptions {
    pub artifacts: PathBuf,
    pub addr: SocketAddr,
    pub static_dir: Option<PathBuf>,
}

/// Runs the server until Ctrl-C.
pub async fn serve(options: ServeOptions) -> std::io::Result<()> {
    let state = Arc::new(AppState::open(&options.artifacts)?);
    let app = router(state, options.static_dir);
    let listener = tokio::net::TcpListener::bind(options.addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
