//! HTTP/JSON annotation service over the dialogue engine.
//!
//! Reads are served from immutable snapshots. Writes are serialized per
//! dialogue, guarded by an optional `If-Match` revision, and are on disk
//! (temporary file, fsync, rename) before they are acknowledged.

pub mod api;
pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;

pub use api::{router, App};
pub use store::{Store, StoreError};

/// Serves `app` on an already bound listener until the process ends.
pub async fn serve(listener: tokio::net::TcpListener, app: App) -> std::io::Result<()> {
    axum::serve(listener, router(Arc::new(app))).await
}

/// Binds `addr`; the returned address has the real port when `addr` used 0.
pub async fn bind(addr: SocketAddr) -> std::io::Result<(tokio::net::TcpListener, SocketAddr)> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((listener, local))
}
