//! HTTP API for browsing reply trees and building conversation drafts.

pub mod config;
pub mod error;
pub mod http;
pub mod schema;
pub mod service;
pub mod store;

use std::sync::Arc;

use threadsmith_core::clock::{Clock, SystemClock};
use threadsmith_core::llm::mock::FixtureTransport;
use threadsmith_core::llm::{ChatTransport, HttpTransport, HttpTransportConfig, RetryPolicy, RetryingTransport};

pub use config::ServiceConfig;
pub use error::{ApiError, ErrorCode};
pub use service::{Reply, Service};
pub use store::{FileEntry, FileKind, FileStore};

/// Fixture replay when configured, otherwise the HTTP API with retries.
pub fn build_transport(config: &ServiceConfig) -> Arc<dyn ChatTransport> {
    match &config.mock_fixtures {
        Some(dir) => Arc::new(FixtureTransport::new(dir.clone())),
        None => {
            let mut http = HttpTransportConfig::new(config.llm_base_url.clone(), config.model.clone());
            http.api_key = config.api_key.clone();
            http.timeout_secs = config.timeout_secs;
            Arc::new(RetryingTransport::new(HttpTransport::new(http), RetryPolicy::default()))
        }
    }
}

pub fn build_service(config: &ServiceConfig, clock: Arc<dyn Clock>) -> std::io::Result<Arc<Service>> {
    let store = FileStore::open(&config.data_dir)?;
    Ok(Arc::new(Service::new(store, build_transport(config), clock)))
}

/// Binds and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let service = build_service(&config, Arc::new(SystemClock))?;
    let app = http::router(service, http::cors_layer(&config.cors_origins));
    let listener = tokio::net::TcpListener::bind(&config.bind).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
