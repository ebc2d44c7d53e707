//! Bearer-token authentication.

use axum::extract::{FromRef, FromRequestParts};
use axum::http::request::Parts;
use proofdesk_core::workspace::User;

use crate::error::ApiError;
use crate::AppState;

/// The caller, from `Authorization: Bearer <token>` or a `token` query
/// parameter (browsers cannot set headers on WebSocket upgrades).
pub struct Caller(pub User);

fn query_token(parts: &Parts) -> Option<&str> {
    parts
        .uri
        .query()?
        .split('&')
        .find_map(|pair| pair.strip_prefix("token="))
}

pub fn token_of(parts: &Parts) -> Option<&str> {
    parts
        .headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
        .or_else(|| query_token(parts))
}

impl<S> FromRequestParts<S> for Caller
where
    AppState: FromRef<S>,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        let app = AppState::from_ref(state);
        let token = token_of(parts).ok_or_else(ApiError::unauthorized)?;
        app.workspace
            .accounts()
            .authenticate(token)
            .map(Caller)
            .ok_or_else(ApiError::unauthorized)
    }
}
