//! HTTP handlers and their request/response bodies.

use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::Json;
use proofdesk_core::activity::ActivityConfig;
use proofdesk_core::analytics::{GroupBy, Measure, Query as AnalyticsQuery, Report};
use proofdesk_core::isar::{fold_regions, tokenize};
use proofdesk_core::telemetry::EventFilter;
use proofdesk_core::workspace::{
    CheckOptions, CheckState, CheckUpdate, DocumentSummary, Role, TheoryDocument, User, VersionInfo,
};
use proofdesk_core::Diagnostic;
use serde::{Deserialize, Serialize};

use crate::auth::Caller;
use crate::error::{ApiError, ApiResult};
use crate::metrics::{ServerMetrics, ACTIVE_WINDOW};
use crate::AppState;

pub const MAX_POLL_WAIT: Duration = Duration::from_secs(60);
const DEFAULT_POLL_WAIT: Duration = Duration::from_secs(25);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoginRequest {
    pub name: String,
    pub password: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoginResponse {
    pub token: String,
    pub user: User,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewUserRequest {
    pub name: String,
    pub password: String,
    #[serde(default = "student")]
    pub role: Role,
}

fn student() -> Role {
    Role::Student
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaveRequest {
    pub content: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OwnerQuery {
    #[serde(default)]
    pub owner: Option<String>,
    #[serde(default)]
    pub activity: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LintRequest {
    pub activity: String,
    pub content: String,
    #[serde(default)]
    pub linter_disabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub start_line: u32,
    pub end_line: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LintResponse {
    pub diagnostics: Vec<Diagnostic>,
    pub folds: Vec<Fold>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckRequest {
    pub activity: String,
    pub names: Vec<String>,
    #[serde(default)]
    pub linter_disabled: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckAccepted {
    pub check_id: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EventsQuery {
    #[serde(default)]
    pub after: u64,
    #[serde(default)]
    pub wait_ms: Option<u64>,
}

/// Long-poll answer. `next` is the `after` to send with the following poll.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventsResponse {
    pub updates: Vec<CheckUpdate>,
    pub next: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AnalyticsParams {
    #[serde(default)]
    pub user: Option<String>,
    #[serde(default)]
    pub activity: Option<String>,
    #[serde(default)]
    pub group_by: Option<GroupBy>,
    /// Minutes; 0 counts every gap.
    #[serde(default)]
    pub idle_threshold: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportSummary {
    pub imported: usize,
}

pub async fn login(State(app): State<AppState>, Json(req): Json<LoginRequest>) -> ApiResult<Json<LoginResponse>> {
    let (token, user) = app.workspace.accounts().login(&req.name, &req.password)?;
    Ok(Json(LoginResponse { token, user }))
}

pub async fn guest(State(app): State<AppState>) -> Json<LoginResponse> {
    let (token, user) = app.workspace.accounts().guest_login();
    Json(LoginResponse { token, user })
}

pub async fn logout(State(app): State<AppState>, parts: axum::http::request::Parts) -> StatusCode {
    if let Some(token) = crate::auth::token_of(&parts) {
        app.workspace.accounts().logout(token);
    }
    StatusCode::NO_CONTENT
}

pub async fn me(Caller(user): Caller) -> Json<User> {
    Json(user)
}

pub async fn create_user(
    State(app): State<AppState>,
    Caller(user): Caller,
    Json(req): Json<NewUserRequest>,
) -> ApiResult<(StatusCode, Json<User>)> {
    if !user.is_instructor() {
        return Err(ApiError::forbidden("only instructors create users"));
    }
    let created = app.workspace.accounts().register(&req.name, &req.password, req.role)?;
    Ok((StatusCode::CREATED, Json(created)))
}

pub async fn list_theories(
    State(app): State<AppState>,
    Caller(user): Caller,
    Query(q): Query<OwnerQuery>,
) -> ApiResult<Json<Vec<DocumentSummary>>> {
    let owner = q.owner.as_deref().unwrap_or(&user.id);
    Ok(Json(app.workspace.list_theories_of(&user, owner, q.activity.as_deref())?))
}

pub async fn get_theory(
    State(app): State<AppState>,
    Caller(user): Caller,
    Path((activity, name)): Path<(String, String)>,
    Query(q): Query<OwnerQuery>,
) -> ApiResult<Json<TheoryDocument>> {
    let owner = q.owner.as_deref().unwrap_or(&user.id);
    Ok(Json(app.workspace.load_theory_of(&user, owner, &activity, &name)?))
}

fn own_only(user: &User, q: &OwnerQuery) -> ApiResult<()> {
    match &q.owner {
        Some(owner) if owner != &user.id => Err(ApiError::forbidden("only the owner may change a theory")),
        _ => Ok(()),
    }
}

pub async fn put_theory(
    State(app): State<AppState>,
    Caller(user): Caller,
    Path((activity, name)): Path<(String, String)>,
    Query(q): Query<OwnerQuery>,
    Json(req): Json<SaveRequest>,
) -> ApiResult<Json<TheoryDocument>> {
    own_only(&user, &q)?;
    Ok(Json(app.workspace.save_theory(&user, &activity, &name, &req.content)?))
}

pub async fn delete_theory(
    State(app): State<AppState>,
    Caller(user): Caller,
    Path((activity, name)): Path<(String, String)>,
    Query(q): Query<OwnerQuery>,
) -> ApiResult<StatusCode> {
    own_only(&user, &q)?;
    app.workspace.delete_theory(&user, &activity, &name)?;
    Ok(StatusCode::NO_CONTENT)
}

pub async fn theory_versions(
    State(app): State<AppState>,
    Caller(user): Caller,
    Path((activity, name)): Path<(String, String)>,
) -> ApiResult<Json<Vec<VersionInfo>>> {
    Ok(Json(app.workspace.theory_versions(&user, &activity, &name)?))
}

pub async fn lint(
    State(app): State<AppState>,
    Caller(_): Caller,
    Json(req): Json<LintRequest>,
) -> ApiResult<Json<LintResponse>> {
    let options = CheckOptions {
        linter_disabled: req.linter_disabled,
    };
    let diagnostics = app.workspace.lint_text(&req.activity, &req.content, &options)?;
    let folds = fold_regions(&tokenize(&req.content))
        .into_iter()
        .map(|(start_line, end_line)| Fold { start_line, end_line })
        .collect();
    Ok(Json(LintResponse { diagnostics, folds }))
}

pub async fn submit_check(
    State(app): State<AppState>,
    Caller(user): Caller,
    Json(req): Json<CheckRequest>,
) -> ApiResult<(StatusCode, Json<CheckAccepted>)> {
    let options = CheckOptions {
        linter_disabled: req.linter_disabled,
    };
    let check_id = app.workspace.submit_check(&user, &req.activity, &req.names, options)?;
    Ok((StatusCode::ACCEPTED, Json(CheckAccepted { check_id })))
}

pub async fn get_check(
    State(app): State<AppState>,
    Caller(user): Caller,
    Path(id): Path<String>,
) -> ApiResult<Json<CheckState>> {
    app.workspace
        .check_state(&user, &id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("check {id}")))
}

pub async fn poll_events(
    State(app): State<AppState>,
    Caller(user): Caller,
    Query(q): Query<EventsQuery>,
) -> Json<EventsResponse> {
    let wait = q
        .wait_ms
        .map_or(DEFAULT_POLL_WAIT, Duration::from_millis)
        .min(MAX_POLL_WAIT);
    let updates = app.workspace.feeds().poll(&user.id, q.after, wait).await;
    let next = updates.last().map_or(q.after, CheckUpdate::seq);
    Json(EventsResponse { updates, next })
}

pub async fn list_activities(State(app): State<AppState>, Caller(_): Caller) -> Json<Vec<ActivityConfig>> {
    Json(app.workspace.activities())
}

pub async fn get_activity(
    State(app): State<AppState>,
    Caller(_): Caller,
    Path(id): Path<String>,
) -> ApiResult<Json<ActivityConfig>> {
    Ok(Json(app.workspace.activity(&id)?))
}

pub async fn put_activity(
    State(app): State<AppState>,
    Caller(user): Caller,
    Json(config): Json<ActivityConfig>,
) -> ApiResult<(StatusCode, Json<ActivityConfig>)> {
    app.workspace.put_activity(&user, config.clone())?;
    Ok((StatusCode::CREATED, Json(config)))
}

pub async fn export(
    State(app): State<AppState>,
    Caller(user): Caller,
    Query(filter): Query<EventFilter>,
) -> ApiResult<impl IntoResponse> {
    let mut body = Vec::new();
    app.workspace.export_events(&user, &filter, &mut body)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body))
}

pub async fn import(
    State(app): State<AppState>,
    Caller(user): Caller,
    body: Bytes,
) -> ApiResult<Json<ImportSummary>> {
    let imported = app.workspace.import_events(&user, body.as_ref())?;
    Ok(Json(ImportSummary { imported }))
}

pub async fn metrics(State(app): State<AppState>) -> Json<ServerMetrics> {
    let ws = &app.workspace;
    Json(app.metrics.snapshot(
        &ws.check_timings(),
        ws.accounts().active_users(ACTIVE_WINDOW),
        ws.prover().live_sessions(),
    ))
}

pub async fn analytics(
    State(app): State<AppState>,
    Caller(user): Caller,
    Path(measure): Path<String>,
    Query(p): Query<AnalyticsParams>,
) -> ApiResult<Json<Report>> {
    if !user.is_instructor() {
        return Err(ApiError::forbidden("only instructors run analytics"));
    }
    let measure: Measure = measure.parse().map_err(ApiError::not_found)?;
    let mut analyzer = app.workspace.analyzer()?;
    if let Some(min) = p.idle_threshold {
        if !(min >= 0.0 && min.is_finite()) {
            return Err(ApiError::bad_request("idle_threshold must be a non-negative number of minutes"));
        }
        analyzer.idle_threshold = Duration::from_secs_f64(min * 60.0);
    }
    let events = app.workspace.telemetry().query(&EventFilter::default());
    let query = AnalyticsQuery {
        user: p.user,
        activity: p.activity,
        group_by: p.group_by,
    };
    Ok(Json(analyzer.report(measure, &events, &query)))
}

pub async fn export_archive(
    State(app): State<AppState>,
    Caller(user): Caller,
    Query(q): Query<OwnerQuery>,
) -> ApiResult<impl IntoResponse> {
    let bytes = app.workspace.export_archive(&user, q.activity.as_deref())?;
    Ok((
        [
            (header::CONTENT_TYPE, "application/x-tar"),
            (header::CONTENT_DISPOSITION, "attachment; filename=\"theories.tar\""),
        ],
        bytes,
    ))
}

pub async fn import_archive(
    State(app): State<AppState>,
    Caller(user): Caller,
    body: Bytes,
) -> ApiResult<Json<Vec<DocumentSummary>>> {
    let docs = app.workspace.import_archive(&user, &body)?;
    Ok(Json(
        docs.into_iter()
            .map(|d| DocumentSummary {
                size: d.content.len() as u64,
                dirty: d.is_dirty(),
                activity: d.activity,
                name: d.name,
                content_hash: d.content_hash,
                modified: d.modified,
            })
            .collect(),
    ))
}

pub async fn health() -> &'static str {
    "ok"
}
