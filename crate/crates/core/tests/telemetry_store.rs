//! Durability and export/import of the check-event log.

#[path = "support/oracles.rs"]
mod oracles;

use std::io::Write;

use proofdesk_core::telemetry::{
    read_export, write_export, EventFilter, EventKind, NewEvent, TelemetryError, TelemetryStore,
};
use proptest::prelude::*;

const T0: i64 = 1_760_000_000_000;

#[test]
fn torn_tail_is_dropped_and_acknowledged_events_survive() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let acked = {
        let store = TelemetryStore::open(&path).unwrap();
        oracles::synthetic_log(&store, 3, 40, T0)
    };
    let before = std::fs::read(&path).unwrap();
    // A crash in the middle of the next append.
    let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
    f.write_all(br#"{"event_id":41,"user":"ada","activ"#).unwrap();
    drop(f);

    let store = TelemetryStore::open(&path).unwrap();
    let ids: Vec<u64> = store.query(&EventFilter::default()).iter().map(|e| e.event_id).collect();
    assert_eq!(ids, acked);
    assert_eq!(std::fs::read(&path).unwrap(), before);
    let next = store
        .record_event(
            NewEvent::new("ada", "demo", EventKind::CheckSubmitted)
                .check_id("after-crash")
                .snapshot("Conj1", "theory Conj1 imports Main begin end"),
        )
        .unwrap();
    assert_eq!(next, 41);
}

#[test]
fn corrupt_interior_line_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    {
        let store = TelemetryStore::open(&path).unwrap();
        oracles::synthetic_log(&store, 4, 6, T0);
    }
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[2] = "{not json";
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    assert!(matches!(
        TelemetryStore::open(&path),
        Err(TelemetryError::Corrupt { line: 3, .. })
    ));
}

#[test]
fn export_import_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let a = TelemetryStore::open(dir.path().join("a.jsonl")).unwrap();
    oracles::synthetic_log(&a, 9, 120, T0);
    let mut exported = Vec::new();
    a.export(&EventFilter::default(), &mut exported).unwrap();

    let b = TelemetryStore::open(dir.path().join("b.jsonl")).unwrap();
    assert_eq!(b.import(exported.as_slice()).unwrap(), 120);
    let mut again = Vec::new();
    b.export(&EventFilter::default(), &mut again).unwrap();
    assert_eq!(exported, again);
    assert_eq!(a.query(&EventFilter::default()), b.query(&EventFilter::default()));

    // Survives a reopen too.
    drop(b);
    let b = TelemetryStore::open(dir.path().join("b.jsonl")).unwrap();
    assert_eq!(a.query(&EventFilter::default()), b.query(&EventFilter::default()));

    // Re-importing the same ids is refused and leaves the store unchanged.
    assert!(matches!(b.import(exported.as_slice()), Err(TelemetryError::Import(_))));
    assert_eq!(b.len(), 120);
}

#[test]
fn filtered_export_contains_only_matching_events() {
    let dir = tempfile::tempdir().unwrap();
    let store = TelemetryStore::open(dir.path().join("e.jsonl")).unwrap();
    oracles::synthetic_log(&store, 21, 80, T0);
    let filter = EventFilter {
        user: Some("cyd".into()),
        kind: Some(EventKind::CheckSubmitted),
        ..EventFilter::default()
    };
    let mut out = Vec::new();
    let n = store.export(&filter, &mut out).unwrap();
    let events = read_export(out.as_slice()).unwrap();
    assert_eq!(events.len(), n);
    assert!(n > 0);
    assert!(events
        .iter()
        .all(|e| e.user == "cyd" && e.kind == EventKind::CheckSubmitted && !e.theory_snapshot.is_empty()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn export_format_round_trips(seed in any::<u64>(), n in 2usize..60) {
        let dir = tempfile::tempdir().unwrap();
        let store = TelemetryStore::open(dir.path().join("e.jsonl")).unwrap();
        oracles::synthetic_log(&store, seed, n, T0);
        let events = store.query(&EventFilter::default());
        let mut buf = Vec::new();
        write_export(&events, &mut buf).unwrap();
        prop_assert_eq!(read_export(buf.as_slice()).unwrap(), events);
    }
}
