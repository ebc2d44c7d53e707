mod common;

use std::time::Duration;

use common::{theory, Client, TestServer};
use proofdesk_core::workspace::{CheckStatus, CheckUpdate};
use proofdesk_core::{ActivityConfig, Severity};
use proofdesk_server::api::{EventsResponse, LintResponse};
use proofdesk_server::metrics::ServerMetrics;
use proofdesk_server::realtime::{ControlMessage, Pushed};
use reqwest::StatusCode;
use serde_json::{json, Value};

const FAST: Duration = Duration::from_millis(20);
const WAIT: Duration = Duration::from_secs(10);

#[tokio::test]
async fn requests_without_a_token_are_refused() {
    let server = TestServer::start(FAST).await;
    let anon = server.anonymous();
    for path in ["/me", "/theories", "/activities", "/export", "/check/x"] {
        let (status, body) = anon.get::<Value>(path).await;
        assert_eq!(status, StatusCode::UNAUTHORIZED, "{path}");
        assert_eq!(body.unwrap()["error"], "unauthorized");
    }
    let bogus = Client::new(server.url(), Some("nope".into()));
    assert_eq!(bogus.get::<Value>("/me").await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(anon.get_bytes("/health").await.0, StatusCode::OK);

    let (status, _) = anon
        .post::<Value>("/login", &json!({"name": "teacher", "password": "wrong"}))
        .await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn guests_and_logout() {
    let server = TestServer::start(FAST).await;
    let (status, body) = server.anonymous().post::<Value>("/guest", &json!({})).await;
    assert_eq!(status, StatusCode::OK);
    let body = body.unwrap();
    let guest = Client::new(server.url(), Some(body["token"].as_str().unwrap().to_owned()));
    let (_, me) = guest.get::<Value>("/me").await;
    assert_eq!(me.unwrap()["role"], "guest");
    assert_eq!(guest.post::<Value>("/logout", &json!({})).await.0, StatusCode::NO_CONTENT);
    assert_eq!(guest.get::<Value>("/me").await.0, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn demo_activity_is_served() {
    let server = TestServer::start(FAST).await;
    let ada = server.student("ada").await;
    let (status, list) = ada.get::<Vec<ActivityConfig>>("/activities").await;
    assert_eq!(status, StatusCode::OK);
    assert!(list.unwrap().iter().any(|a| a.id.as_str() == "demo"));
    let (_, demo) = ada.get::<Value>("/activities/demo").await;
    let demo = demo.unwrap();
    let text = demo.to_string();
    assert!(text.contains("Propositional"), "{text}");
    assert!(text.contains("conjI"), "{text}");
    assert_eq!(ada.get::<Value>("/activities/none").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn students_cannot_touch_other_users_or_instructor_routes() {
    let server = TestServer::start(FAST).await;
    let ada = server.student("ada").await;
    let ben = server.student("ben").await;
    ada.save("demo", "Conj1", &theory("Conj1", "lemma \"True\" by simp")).await;

    let (status, _) = ben.get::<Value>("/theories/demo/Conj1?owner=ada").await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, _) = ben.get::<Value>("/theories?owner=ada").await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    // ben's own namespace is separate
    assert_eq!(ben.get::<Value>("/theories/demo/Conj1").await.0, StatusCode::NOT_FOUND);

    let (status, _) = ben.get::<Value>("/analytics/rank").await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, _) = ben.post::<Value>("/users", &json!({"name": "eve", "password": "x"})).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (_, demo) = ben.get::<Value>("/activities/demo").await;
    let (status, _) = ben.post::<Value>("/activities", &demo.unwrap()).await;
    assert_eq!(status, StatusCode::FORBIDDEN);

    let id = ada.check("demo", &["Conj1"]).await;
    let (status, _) = ben.get::<Value>(&format!("/check/{id}")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let teacher = server.instructor().await;
    let (status, doc) = teacher.get::<Value>("/theories/demo/Conj1?owner=ada").await;
    assert_eq!(status, StatusCode::OK);
    assert!(doc.unwrap()["content"].as_str().unwrap().contains("lemma"));
}

#[tokio::test]
async fn theory_crud_and_versions() {
    let server = TestServer::start(FAST).await;
    let ada = server.student("ada").await;
    ada.save("demo", "Scratch", &theory("Scratch", "")).await;
    ada.save("demo", "Scratch", &theory("Scratch", "(* v2 *)")).await;
    let (status, list) = ada.get::<Vec<Value>>("/theories?activity=demo").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(list.unwrap().len(), 1);
    let (_, versions) = ada.get::<Vec<Value>>("/theories/demo/Scratch/versions").await;
    assert_eq!(versions.unwrap().len(), 2);

    let (status, _) = ada
        .put::<Value>("/theories/demo/bad name", &json!({"content": ""}))
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    assert_eq!(ada.delete("/theories/demo/Scratch").await, StatusCode::NO_CONTENT);
    assert_eq!(ada.get::<Value>("/theories/demo/Scratch").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn lint_returns_diagnostics_and_folds() {
    let server = TestServer::start(FAST).await;
    let ada = server.student("ada").await;
    let text = "theory T imports Main begin\nlemma \"A\"\nproof -\n  show ?thesis by auto\nqed\nend\n";
    let (status, body) = ada
        .post::<LintResponse>("/lint", &json!({"activity": "demo", "content": text}))
        .await;
    assert_eq!(status, StatusCode::OK);
    let body = body.unwrap();
    assert_eq!(body.diagnostics.len(), 1, "{:?}", body.diagnostics);
    assert_eq!(body.diagnostics[0].rule_id.as_deref(), Some("no-automation.auto"));
    assert_eq!(body.diagnostics[0].range.unwrap().line, 4);
    assert!(body.folds.iter().any(|f| f.start_line == 3 && f.end_line == 5), "{:?}", body.folds);

    let (_, off) = ada
        .post::<LintResponse>(
            "/lint",
            &json!({"activity": "demo", "content": text, "linter_disabled": true}),
        )
        .await;
    assert!(off.unwrap().diagnostics.is_empty());
}

#[tokio::test]
async fn check_with_mock_error_is_pushed_over_websocket() {
    let server = TestServer::start(FAST).await;
    let ada = server.student("ada").await;
    let body = "lemma \"A ∧ B ⟹ B ∧ A\"\n  (*MOCK:error 5 \"Failed to apply proof method\"*)\n  by blast";
    ada.save("demo", "Conj1", &theory("Conj1", body)).await;
    let mut ws = ada.socket(0).await;
    let id = ada.check("demo", &["Conj1"]).await;
    let (finals, updates) = ws.finals(1, WAIT).await;
    assert_eq!(finals.len(), 1);
    let result = &finals[0];
    assert_eq!(result.check_id, id);
    assert_eq!(result.status, CheckStatus::Finished);
    let errors: Vec<_> = result
        .diagnostics
        .iter()
        .filter(|d| d.severity == Severity::Error)
        .collect();
    assert_eq!(errors.len(), 1, "{:?}", result.diagnostics);
    assert_eq!(errors[0].message, "Failed to apply proof method");
    assert_eq!(errors[0].range.unwrap().line, 5);
    // progress notes precede the final update, in order
    let seqs: Vec<u64> = updates.iter().map(CheckUpdate::seq).collect();
    assert!(seqs.windows(2).all(|w| w[0] < w[1]));

    // a page reload re-fetches the same result
    assert_eq!(&ada.result(&id).await, result);
    ws.close().await;
}

#[tokio::test]
async fn websocket_reconnect_replays_missed_updates() {
    let server = TestServer::start(Duration::from_millis(200)).await;
    let ada = server.student("ada").await;
    ada.save("demo", "Conj1", &theory("Conj1", "lemma \"True\" by (rule TrueI)")).await;

    let mut ws = ada.socket(0).await;
    ws.send(&json!({"type": "ping"})).await;
    assert!(matches!(ws.next(WAIT).await, Some(Pushed::Control(ControlMessage::Pong))));
    ws.send(&json!({"type": "check", "activity": "demo", "names": ["Conj1"]})).await;
    let id = match ws.next(WAIT).await {
        Some(Pushed::Control(ControlMessage::Accepted { check_id })) => check_id,
        other => panic!("expected accepted, got {other:?}"),
    };
    ws.close().await;

    // result lands while disconnected
    let result = ada.result(&id).await;
    let mut again = ada.socket(0).await;
    let (finals, _) = again.finals(1, WAIT).await;
    assert_eq!(finals, vec![result]);

    ws_error_on_bad_message(&mut again).await;
}

async fn ws_error_on_bad_message(ws: &mut common::Socket) {
    ws.send(&json!({"type": "launch"})).await;
    match ws.next(WAIT).await {
        Some(Pushed::Control(ControlMessage::Error { .. })) => {}
        other => panic!("expected error, got {other:?}"),
    }
}

#[tokio::test]
async fn long_poll_delivers_updates() {
    let server = TestServer::start(Duration::from_millis(100)).await;
    let ada = server.student("ada").await;
    ada.save("demo", "Conj1", &theory("Conj1", "lemma \"True\" by (rule TrueI)")).await;
    let (_, empty) = ada.get::<EventsResponse>("/events?after=0&wait_ms=50").await;
    let empty = empty.unwrap();
    assert!(empty.updates.is_empty());
    assert_eq!(empty.next, 0);

    let id = ada.check("demo", &["Conj1"]).await;
    let mut after = 0;
    let mut done = false;
    for _ in 0..20 {
        let (status, resp) = ada
            .get::<EventsResponse>(&format!("/events?after={after}&wait_ms=5000"))
            .await;
        assert_eq!(status, StatusCode::OK);
        let resp = resp.unwrap();
        after = resp.next;
        if resp.updates.iter().any(|u| matches!(u, CheckUpdate::Final { result, .. } if result.check_id == id)) {
            done = true;
            break;
        }
    }
    assert!(done);
}

#[tokio::test]
async fn metrics_split_server_time_from_prover_time() {
    let server = TestServer::start(Duration::from_millis(150)).await;
    let ada = server.student("ada").await;
    ada.save("demo", "Conj1", &theory("Conj1", "lemma \"True\" by (rule TrueI)")).await;
    let id = ada.check("demo", &["Conj1"]).await;
    let result = ada.result(&id).await;
    let d = result.durations.unwrap();
    assert!(d.prover_ms >= 150);
    assert!(d.server_handling_ms < d.prover_ms);

    let (status, m) = server.anonymous().get::<ServerMetrics>("/metrics").await;
    assert_eq!(status, StatusCode::OK);
    let m = m.unwrap();
    assert_eq!(m.checks.server_handling.count, 1);
    assert!(m.checks.server_handling.max_ms < m.checks.prover_wait.max_ms);
    assert!(m.requests.count >= 3);
    assert!(m.active_users >= 1);
    assert_eq!(m.live_prover_sessions, 1);
}

#[tokio::test]
async fn archive_round_trip() {
    let server = TestServer::start(FAST).await;
    let ada = server.student("ada").await;
    let a = theory("Conj1", "lemma \"True\" by simp");
    let b = theory("Disj1", "(* δ *)");
    ada.save("demo", "Conj1", &a).await;
    ada.save("demo", "Disj1", &b).await;
    let (status, tar) = ada.get_bytes("/archive?activity=demo").await;
    assert_eq!(status, StatusCode::OK);

    let ben = server.student("ben").await;
    let (status, docs) = ben.post_bytes::<Vec<Value>>("/archive", tar).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(docs.unwrap().len(), 2);
    let (_, doc) = ben.get::<Value>("/theories/demo/Disj1").await;
    assert_eq!(doc.unwrap()["content"], b);

    let (status, _) = ben.post_bytes::<Value>("/archive", b"not a tar".to_vec()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn instructors_manage_activities_and_analytics() {
    let server = TestServer::start(FAST).await;
    let teacher = server.instructor().await;
    let (_, demo) = teacher.get::<Value>("/activities/demo").await;
    let mut copy = demo.unwrap();
    copy["id"] = json!("week2");
    copy["title"] = json!("Week 2");
    let (status, _) = teacher.post::<Value>("/activities", &copy).await;
    assert_eq!(status, StatusCode::CREATED);
    let (_, list) = teacher.get::<Vec<ActivityConfig>>("/activities").await;
    assert!(list.unwrap().iter().any(|a| a.id.as_str() == "week2"));

    let ada = server.student("ada").await;
    ada.save("demo", "Conj1", &theory("Conj1", "lemma \"A\" sorry")).await;
    let id = ada.check("demo", &["Conj1"]).await;
    ada.result(&id).await;

    for measure in ["rank", "assoc", "freq", "durations"] {
        let (status, body) = teacher.get::<Value>(&format!("/analytics/{measure}")).await;
        assert_eq!(status, StatusCode::OK, "{measure}");
        assert_eq!(body.unwrap()["measure"], measure);
    }
    assert_eq!(teacher.get::<Value>("/analytics/bogus").await.0, StatusCode::NOT_FOUND);
    let (status, _) = teacher.get::<Value>("/analytics/freq?idle_threshold=-1").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, ndjson) = teacher.get_bytes("/export?kind=check-submitted").await;
    assert_eq!(status, StatusCode::OK);
    let ndjson = String::from_utf8(ndjson).unwrap();
    assert!(ndjson.starts_with("{\"schema\""));
    assert_eq!(ndjson.lines().count(), 2, "{ndjson}");
    let (status, _) = ada.get_bytes("/export").await;
    assert_eq!(status, StatusCode::FORBIDDEN);
}
