//! The push channel: a WebSocket carrying a user's check updates.
//!
//! On connect the server replays buffered updates newer than `after`, then
//! forwards live ones. Every update carries a per-user sequence number; a
//! client that reconnects passes the last one it saw. Clients may also
//! submit checks over the socket.

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::response::Response;
use proofdesk_core::workspace::{CheckOptions, CheckUpdate, User};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast::error::RecvError;

use crate::auth::Caller;
use crate::AppState;

#[derive(Debug, Clone, Default, Deserialize)]
pub struct ConnectQuery {
    #[serde(default)]
    pub after: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ClientMessage {
    Check {
        activity: String,
        names: Vec<String>,
        #[serde(default)]
        linter_disabled: bool,
    },
    Ping,
}

/// Replies to client messages. Check updates are sent as
/// [`CheckUpdate`] objects, tagged `progress` or `final`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ControlMessage {
    Accepted { check_id: String },
    Pong,
    Error { message: String },
}

pub async fn connect(
    State(app): State<AppState>,
    Caller(user): Caller,
    Query(q): Query<ConnectQuery>,
    upgrade: WebSocketUpgrade,
) -> Response {
    upgrade.on_upgrade(move |socket| session(app, user, q.after, socket))
}

async fn send_json<T: Serialize>(socket: &mut WebSocket, value: &T) -> bool {
    let text = serde_json::to_string(value).expect("messages serialize");
    socket.send(Message::Text(text.into())).await.is_ok()
}

async fn session(app: AppState, user: User, after: u64, mut socket: WebSocket) {
    let feeds = app.workspace.feeds();
    // Subscribe before reading the buffer so nothing falls in between.
    let mut live = feeds.subscribe(&user.id);
    let mut last = after;
    for update in feeds.updates_after(&user.id, after) {
        last = update.seq();
        if !send_json(&mut socket, &update).await {
            return;
        }
    }
    loop {
        tokio::select! {
            update = live.recv() => {
                let update = match update {
                    Ok(u) => u,
                    Err(RecvError::Lagged(_)) => {
                        // Fall back to the buffer for whatever was skipped.
                        for u in feeds.updates_after(&user.id, last) {
                            last = u.seq();
                            if !send_json(&mut socket, &u).await {
                                return;
                            }
                        }
                        continue;
                    }
                    Err(RecvError::Closed) => return,
                };
                if update.seq() <= last {
                    continue;
                }
                last = update.seq();
                if !send_json(&mut socket, &update).await {
                    return;
                }
            }
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                    Some(Ok(_)) => continue,
                };
                let reply = handle(&app, &user, &text);
                if !send_json(&mut socket, &reply).await {
                    return;
                }
            }
        }
    }
}

fn handle(app: &AppState, user: &User, text: &str) -> ControlMessage {
    match serde_json::from_str::<ClientMessage>(text) {
        Ok(ClientMessage::Ping) => ControlMessage::Pong,
        Ok(ClientMessage::Check {
            activity,
            names,
            linter_disabled,
        }) => match app
            .workspace
            .submit_check(user, &activity, &names, CheckOptions { linter_disabled })
        {
            Ok(check_id) => ControlMessage::Accepted { check_id },
            Err(e) => ControlMessage::Error {
                message: e.to_string(),
            },
        },
        Err(e) => ControlMessage::Error {
            message: format!("unreadable message: {e}"),
        },
    }
}

/// Parses anything the server may push, for clients written in Rust.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Pushed {
    Update(CheckUpdate),
    Control(ControlMessage),
}
