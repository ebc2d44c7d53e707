//! HTTP and WebSocket front end over a [`Workspace`].

pub mod api;
pub mod auth;
pub mod error;
pub mod metrics;
pub mod realtime;

use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::{Request, State};
use axum::middleware::Next;
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use proofdesk_core::workspace::Workspace;

use crate::metrics::Metrics;

/// Largest accepted request body (archives included).
pub const MAX_BODY_BYTES: usize = 64 << 20;

#[derive(Clone)]
pub struct AppState {
    pub workspace: Workspace,
    pub metrics: Arc<Metrics>,
}

impl AppState {
    pub fn new(workspace: Workspace) -> Self {
        Self {
            workspace,
            metrics: Arc::new(Metrics::default()),
        }
    }
}

async fn timed(State(app): State<AppState>, req: Request, next: Next) -> Response {
    let started = Instant::now();
    let response = next.run(req).await;
    app.metrics.record_request(started.elapsed());
    response
}

pub fn router(state: AppState) -> Router {
    use api::*;
    Router::new()
        .route("/health", get(health))
        .route("/login", post(login))
        .route("/guest", post(guest))
        .route("/logout", post(logout))
        .route("/me", get(me))
        .route("/users", post(create_user))
        .route("/theories", get(list_theories))
        .route(
            "/theories/{activity}/{name}",
            get(get_theory).put(put_theory).delete(delete_theory),
        )
        .route("/theories/{activity}/{name}/versions", get(theory_versions))
        .route("/archive", get(export_archive).post(import_archive))
        .route("/lint", post(lint))
        .route("/check", post(submit_check))
        .route("/check/{id}", get(get_check))
        .route("/events", get(poll_events))
        .route("/ws", get(realtime::connect))
        .route("/activities", get(list_activities).post(put_activity))
        .route("/activities/{id}", get(get_activity))
        .route("/export", get(export))
        .route("/import", post(import))
        .route("/metrics", get(metrics))
        .route("/analytics/{measure}", get(analytics))
        .layer(axum::extract::DefaultBodyLimit::max(MAX_BODY_BYTES))
        .layer(axum::middleware::from_fn_with_state(state.clone(), timed))
        .with_state(state)
}

/// Samples resident memory every `period` until the state is dropped.
pub fn spawn_memory_sampler(metrics: &Arc<Metrics>, period: Duration) {
    let weak = Arc::downgrade(metrics);
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            match weak.upgrade() {
                Some(m) => m.sample_memory(),
                None => break,
            }
        }
    });
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
