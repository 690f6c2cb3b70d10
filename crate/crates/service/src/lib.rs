//! HTTP service for protocol editing sessions.
//!
//! A session binds one uploaded protocol to the requests made against it,
//! the proposals the agent planned and the reviewer's decisions. Approving a
//! proposal executes it right away; nothing changes the protocol otherwise.

mod api;
pub mod store;

pub use api::{router, ApiError, AppState, ServiceConfig};
pub use store::{EventKind, HistoryEvent, Session, SessionMeta, SessionStore, StoreError};

/// Serves on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    config: &ServiceConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state, config))
        .with_graceful_shutdown(shutdown)
        .await
}
