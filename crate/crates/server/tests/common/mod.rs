//! An in-process server on a loopback port, backed by a mock prover, and a
//! small HTTP client for it.

#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use proofdesk_core::workspace::{CheckResult, CheckUpdate, Workspace, WorkspaceConfig};
use proofdesk_protocol::mock::{MockConfig, MockProver};
use proofdesk_protocol::ProverAddress;
use proofdesk_server::api::{CheckAccepted, LoginResponse};
use proofdesk_server::realtime::Pushed;
use proofdesk_server::AppState;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;

pub const MOCK_PASSWORD: &str = "mock-pw";
pub const INSTRUCTOR: (&str, &str) = ("teacher", "teach-pw");

pub fn users_toml() -> String {
    format!(
        "[[users]]\nname = \"{}\"\nrole = \"instructor\"\npassword = \"{}\"\n",
        INSTRUCTOR.0, INSTRUCTOR.1
    )
}

pub fn write_config(dir: &Path) -> PathBuf {
    let config = dir.join("config");
    std::fs::create_dir_all(config.join("activities")).unwrap();
    std::fs::write(config.join("users.toml"), users_toml()).unwrap();
    config
}

pub struct TestServer {
    pub addr: SocketAddr,
    pub mock: MockProver,
    pub state: AppState,
    pub dir: tempfile::TempDir,
}

impl TestServer {
    pub async fn start(latency: Duration) -> Self {
        let dir = tempfile::tempdir().unwrap();
        Self::start_in(dir, latency).await
    }

    /// Starts on an existing directory (`data/` and `config/` inside it).
    pub async fn start_in(dir: tempfile::TempDir, latency: Duration) -> Self {
        let mock = MockProver::serve("127.0.0.1:0", MockConfig::new(MOCK_PASSWORD, latency))
            .await
            .unwrap();
        let mut config = WorkspaceConfig::new(dir.path().join("data"));
        config.config_dir = Some(write_config(dir.path()));
        config.prover = Some(ProverAddress::tcp("127.0.0.1", mock.addr().port(), MOCK_PASSWORD));
        let state = AppState::new(Workspace::open(config).unwrap());
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let serving = state.clone();
        tokio::spawn(async move { proofdesk_server::serve(listener, serving).await });
        Self {
            addr,
            mock,
            state,
            dir,
        }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn anonymous(&self) -> Client {
        Client::new(self.url(), None)
    }

    pub async fn login(&self, name: &str, password: &str) -> Client {
        Client::login(&self.url(), name, password).await
    }

    pub async fn instructor(&self) -> Client {
        self.login(INSTRUCTOR.0, INSTRUCTOR.1).await
    }

    /// Creates a student through the API and logs them in.
    pub async fn student(&self, name: &str) -> Client {
        let teacher = self.instructor().await;
        let (status, _) = teacher
            .post::<Value>("/users", &json!({"name": name, "password": "pw"}))
            .await;
        assert_eq!(status, StatusCode::CREATED);
        self.login(name, "pw").await
    }
}

#[derive(Clone)]
pub struct Client {
    pub base: String,
    pub token: Option<String>,
    pub user: Option<String>,
    http: reqwest::Client,
}

pub fn theory(name: &str, body: &str) -> String {
    format!("theory {name}\n  imports Main\nbegin\n\n{body}\n\nend\n")
}

impl Client {
    pub fn new(base: String, token: Option<String>) -> Self {
        Self {
            base,
            token,
            user: None,
            http: reqwest::Client::new(),
        }
    }

    pub async fn login(base: &str, name: &str, password: &str) -> Self {
        let mut c = Self::new(base.to_owned(), None);
        let (status, body) = c
            .post::<LoginResponse>("/login", &json!({"name": name, "password": password}))
            .await;
        assert_eq!(status, StatusCode::OK, "login {name}");
        let body = body.unwrap();
        c.token = Some(body.token);
        c.user = Some(body.user.id);
        c
    }

    fn req(&self, method: reqwest::Method, path: &str) -> reqwest::RequestBuilder {
        let r = self.http.request(method, format!("{}{}", self.base, path));
        match &self.token {
            Some(t) => r.bearer_auth(t),
            None => r,
        }
    }

    async fn finish<T: DeserializeOwned>(r: reqwest::RequestBuilder) -> (StatusCode, Option<T>) {
        let resp = r.send().await.expect("request sent");
        let status = resp.status();
        let bytes = resp.bytes().await.unwrap();
        (status, serde_json::from_slice(&bytes).ok())
    }

    pub async fn get<T: DeserializeOwned>(&self, path: &str) -> (StatusCode, Option<T>) {
        Self::finish(self.req(reqwest::Method::GET, path)).await
    }

    pub async fn get_bytes(&self, path: &str) -> (StatusCode, Vec<u8>) {
        let resp = self.req(reqwest::Method::GET, path).send().await.unwrap();
        (resp.status(), resp.bytes().await.unwrap().to_vec())
    }

    pub async fn post<T: DeserializeOwned>(&self, path: &str, body: &impl Serialize) -> (StatusCode, Option<T>) {
        Self::finish(self.req(reqwest::Method::POST, path).json(body)).await
    }

    pub async fn post_bytes<T: DeserializeOwned>(&self, path: &str, body: Vec<u8>) -> (StatusCode, Option<T>) {
        Self::finish(self.req(reqwest::Method::POST, path).body(body)).await
    }

    pub async fn put<T: DeserializeOwned>(&self, path: &str, body: &impl Serialize) -> (StatusCode, Option<T>) {
        Self::finish(self.req(reqwest::Method::PUT, path).json(body)).await
    }

    pub async fn delete(&self, path: &str) -> StatusCode {
        self.req(reqwest::Method::DELETE, path).send().await.unwrap().status()
    }

    pub async fn save(&self, activity: &str, name: &str, content: &str) {
        let (status, _) = self
            .put::<Value>(&format!("/theories/{activity}/{name}"), &json!({"content": content}))
            .await;
        assert_eq!(status, StatusCode::OK, "save {name}");
    }

    pub async fn check(&self, activity: &str, names: &[&str]) -> String {
        let (status, body) = self
            .post::<CheckAccepted>("/check", &json!({"activity": activity, "names": names}))
            .await;
        assert_eq!(status, StatusCode::ACCEPTED);
        body.unwrap().check_id
    }

    /// Re-fetches a check until it is done.
    pub async fn result(&self, check_id: &str) -> CheckResult {
        for _ in 0..400 {
            let (status, body) = self.get::<Value>(&format!("/check/{check_id}")).await;
            assert_eq!(status, StatusCode::OK);
            let body = body.unwrap();
            if body["state"] == "done" {
                return serde_json::from_value(body["result"].clone()).unwrap();
            }
            tokio::time::sleep(Duration::from_millis(25)).await;
        }
        panic!("check {check_id} never finished");
    }

    pub async fn socket(&self, after: u64) -> Socket {
        let url = format!(
            "{}/ws?token={}&after={after}",
            self.base.replacen("http", "ws", 1),
            self.token.as_deref().unwrap()
        );
        let (ws, _) = tokio_tungstenite::connect_async(url).await.unwrap();
        Socket { ws }
    }
}

pub struct Socket {
    ws: tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>,
}

impl Socket {
    pub async fn send(&mut self, value: &Value) {
        self.ws.send(Message::Text(value.to_string().into())).await.unwrap();
    }

    pub async fn next(&mut self, wait: Duration) -> Option<Pushed> {
        loop {
            let msg = tokio::time::timeout(wait, self.ws.next()).await.ok()??.ok()?;
            if let Message::Text(t) = msg {
                return Some(serde_json::from_str(&t).expect("pushed message parses"));
            }
        }
    }

    /// Collects updates until `n` final results arrived.
    pub async fn finals(&mut self, n: usize, wait: Duration) -> (Vec<CheckResult>, Vec<CheckUpdate>) {
        let mut finals = Vec::new();
        let mut all = Vec::new();
        while finals.len() < n {
            match self.next(wait).await {
                Some(Pushed::Update(u)) => {
                    if let CheckUpdate::Final { result, .. } = &u {
                        finals.push(result.clone());
                    }
                    all.push(u);
                }
                Some(Pushed::Control(_)) => {}
                None => break,
            }
        }
        (finals, all)
    }

    pub async fn close(mut self) {
        let _ = self.ws.close(None).await;
    }
}
