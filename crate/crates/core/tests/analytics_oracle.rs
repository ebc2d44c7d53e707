//! Every analytics measure against a brute-force recomputation on a
//! synthetic 200-event log.

#[path = "support/oracles.rs"]
mod oracles;

use std::collections::BTreeMap;
use std::time::Duration;

use proofdesk_core::analytics::{Analyzer, GroupBy, Measure, Query, Report};
use proofdesk_core::telemetry::{CheckEvent, EventFilter, TelemetryStore};

const T0: i64 = 1_760_000_000_000;

fn log(seed: u64) -> (tempfile::TempDir, Vec<CheckEvent>) {
    let dir = tempfile::tempdir().unwrap();
    let store = TelemetryStore::open(dir.path().join("events.jsonl")).unwrap();
    let ids = oracles::synthetic_log(&store, seed, 200, T0);
    assert_eq!(ids.len(), 200);
    let events = store.query(&EventFilter::default());
    assert_eq!(events.len(), 200);
    (dir, events)
}

fn analyzer(threshold_min: u64) -> Analyzer {
    Analyzer {
        idle_threshold: Duration::from_secs(threshold_min * 60),
        ..Analyzer::from_config_dir(None).unwrap()
    }
}

fn as_map(counts: &[proofdesk_core::analytics::CategoryCount]) -> BTreeMap<&'static str, usize> {
    counts.iter().map(|c| (c.category.as_str(), c.count)).collect()
}

#[test]
fn rank_matches_oracle() {
    for seed in [1, 2, 3] {
        let (_dir, events) = log(seed);
        let a = analyzer(15);
        let all = a.rank_mistakes(&events, GroupBy::All);
        assert_eq!(all.len(), 1);
        assert_eq!(as_map(&all[0].counts), oracles::rank(&events, |_| true));
        for w in all[0].counts.windows(2) {
            assert!(w[0].count >= w[1].count);
        }
        let diagnostics: usize = events
            .iter()
            .filter(|e| proofdesk_core::analytics::is_feedback(e))
            .map(|e| e.diagnostics.len())
            .sum();
        let semantic = oracles::rank(&events, |_| true).get("semantic").copied().unwrap_or(0);
        let total: usize = all[0].counts.iter().map(|c| c.count).sum();
        assert_eq!(total, diagnostics + semantic);

        let by_user = a.rank_mistakes(&events, GroupBy::User);
        let mut summed: BTreeMap<&str, usize> = BTreeMap::new();
        for g in &by_user {
            assert_eq!(as_map(&g.counts), oracles::rank(&events, |o| o.user == g.group));
            for (c, n) in as_map(&g.counts) {
                *summed.entry(c).or_default() += n;
            }
        }
        assert_eq!(summed, as_map(&all[0].counts));
    }
}

#[test]
fn association_matches_oracle() {
    for seed in [1, 2, 3] {
        let (_dir, events) = log(seed);
        let table = analyzer(15).message_mistake_association(&events);
        let got: BTreeMap<(&str, &str), (usize, usize)> = table
            .rows
            .iter()
            .map(|r| {
                assert!((0.0..=1.0).contains(&r.ratio));
                assert!(r.shown_count >= r.disappeared_count);
                assert_eq!(r.ratio, r.disappeared_count as f64 / r.shown_count as f64);
                (
                    (r.message_category.as_str(), r.mistake_category.as_str()),
                    (r.shown_count, r.disappeared_count),
                )
            })
            .collect();
        let want = oracles::association(&events);
        assert!(!want.is_empty());
        assert_eq!(got, want);
    }
}

#[test]
fn frequency_matches_oracle() {
    let (_dir, events) = log(7);
    for threshold in [0, 5, 15, 60] {
        let a = analyzer(threshold);
        for user in oracles::USERS {
            let f = a.check_frequency(&events, user);
            let (total, active) = oracles::frequency(&events, user, threshold as i64 * 60_000);
            assert_eq!((f.total_checks, f.active_ms as i64), (total, active), "{user} {threshold}");
            assert_eq!(f.checks_per_active_hour.is_some(), active > 0);
        }
    }
    let f = analyzer(15).check_frequency(&events, "nobody");
    assert_eq!((f.total_checks, f.checks_per_active_hour), (0, None));
}

#[test]
fn durations_match_oracle() {
    let (_dir, events) = log(11);
    for threshold in [0, 15] {
        let a = analyzer(threshold);
        for user in oracles::USERS {
            let got: Vec<(String, i64)> = a
                .exercise_durations(&events, user)
                .into_iter()
                .map(|d| (d.exercise, d.duration_ms as i64))
                .collect();
            assert_eq!(got, oracles::durations(&events, user, threshold as i64 * 60_000), "{user}");
        }
    }
}

#[test]
fn report_filters_by_user_and_activity() {
    let (_dir, events) = log(5);
    let a = analyzer(15);
    let q = Query {
        user: Some("ada".into()),
        ..Query::default()
    };
    let Report::Rank(groups) = a.report(Measure::Rank, &events, &q) else {
        panic!()
    };
    assert_eq!(as_map(&groups[0].counts), oracles::rank(&events, |o| o.user == "ada"));
    let Report::Freq(rows) = a.report(Measure::Freq, &events, &Query::default()) else {
        panic!()
    };
    assert_eq!(rows.len(), oracles::USERS.len());
    let elsewhere = Query {
        activity: Some("other".into()),
        ..Query::default()
    };
    assert_eq!(a.report(Measure::Assoc, &events, &elsewhere), Report::Assoc(Vec::new()));
}

#[test]
fn cli_over_export_equals_api() {
    let (dir, events) = log(13);
    let store = TelemetryStore::open(dir.path().join("events.jsonl")).unwrap();
    let export = dir.path().join("export.jsonl");
    store
        .export(&EventFilter::default(), std::fs::File::create(&export).unwrap())
        .unwrap();
    let a = analyzer(15);
    for (measure, name) in [
        (Measure::Rank, "rank"),
        (Measure::Assoc, "assoc"),
        (Measure::Freq, "freq"),
        (Measure::Durations, "durations"),
    ] {
        for user in [None, Some("ben")] {
            let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_analyze"));
            cmd.arg(&export).arg(name).arg("--json");
            if let Some(u) = user {
                cmd.args(["--user", u]);
            }
            let out = cmd.output().unwrap();
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            let cli: Report = serde_json::from_slice(&out.stdout).unwrap();
            let query = Query {
                user: user.map(str::to_owned),
                group_by: Some(GroupBy::All),
                ..Query::default()
            };
            assert_eq!(cli, a.report(measure, &events, &query), "{name} {user:?}");
        }
    }
    let text = std::process::Command::new(env!("CARGO_BIN_EXE_analyze"))
        .arg(&export)
        .args(["freq", "--idle-threshold", "0"])
        .output()
        .unwrap();
    assert!(String::from_utf8(text.stdout).unwrap().contains("ada"));
}

#[test]
fn hand_computed_examples() {
    use proofdesk_core::telemetry::{EventKind, NewEvent, Timestamp};
    let dir = tempfile::tempdir().unwrap();
    let store = TelemetryStore::open(dir.path().join("e.jsonl")).unwrap();
    let min = 60_000;
    // Gaps of 1, 2 and 20 minutes; with a 15-minute threshold only 3 count.
    for (i, t) in [0, 1, 3, 23].iter().enumerate() {
        store
            .record_event(
                NewEvent::new("u", "demo", EventKind::CheckSubmitted)
                    .check_id(format!("c{i}"))
                    .snapshot("Conj1", "theory Conj1 imports Main begin end")
                    .at(Timestamp::from_millis(T0 + t * min)),
            )
            .unwrap();
    }
    let events = store.query(&EventFilter::default());
    let f = analyzer(15).check_frequency(&events, "u");
    assert_eq!((f.total_checks, f.active_ms), (4, 3 * min as u64));
    assert_eq!(analyzer(0).check_frequency(&events, "u").active_ms, 23 * min as u64);
}
