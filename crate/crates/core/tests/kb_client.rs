mod common;

use std::fs;

use common::MockServer;
use kgrex_core::kb::{KbClient, KbError};
use kgrex_core::RetryPolicy;

fn entity(id: &str) -> String {
    format!(r#"{{"kb_id":"{id}","label":"Label {id}","instance_of":["human"],"subclass_of":[]}}"#)
}

fn kb_server() -> MockServer {
    MockServer::start(|r, _| match r.path.strip_prefix("/entity/") {
        Some(id) if id.starts_with('Q') => (200, entity(id)),
        _ => (404, "{}".into()),
    })
}

fn ids(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn second_fetch_is_served_from_cache() {
    let server = kb_server();
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache/kb.jsonl");
    let client = KbClient::new(&server.url, &cache, RetryPolicy::immediate(1)).unwrap();
    let (frag, report) = client.fetch(&ids(&["Q1", "Q2", "Q1"])).unwrap();
    assert_eq!(frag.len(), 2);
    assert_eq!((report.fetched, report.from_cache), (2, 0));
    assert_eq!(server.hits(), 2);
    let first = fs::read(&cache).unwrap();

    let (frag2, report2) = client.fetch(&ids(&["Q1", "Q2"])).unwrap();
    assert_eq!(frag2, frag);
    assert_eq!((report2.fetched, report2.from_cache), (0, 2));
    assert_eq!(server.hits(), 2);
    assert_eq!(fs::read(&cache).unwrap(), first);

    // a fresh client over the same cache file also makes no requests
    let again = KbClient::new(&server.url, &cache, RetryPolicy::immediate(1)).unwrap();
    again.fetch(&ids(&["Q2"])).unwrap();
    assert_eq!(server.hits(), 2);
}

#[test]
fn unknown_ids_are_reported() {
    let server = kb_server();
    let dir = tempfile::tempdir().unwrap();
    let client = KbClient::new(
        &server.url,
        dir.path().join("kb.jsonl"),
        RetryPolicy::immediate(1),
    )
    .unwrap();
    let (frag, report) = client.fetch(&ids(&["Q5", "P31"])).unwrap();
    assert_eq!(frag.len(), 1);
    assert_eq!(report.unknown, ["P31"]);
}

#[test]
fn transient_failures_are_retried() {
    let server = MockServer::start(|r, n| {
        if n == 0 {
            (502, "".into())
        } else {
            (200, entity(&r.path[8..]))
        }
    });
    let dir = tempfile::tempdir().unwrap();
    let client = KbClient::new(
        &server.url,
        dir.path().join("kb.jsonl"),
        RetryPolicy::immediate(3),
    )
    .unwrap();
    let (frag, _) = client.fetch(&ids(&["Q9"])).unwrap();
    assert_eq!(frag.get("Q9").unwrap().label, "Label Q9");
    assert_eq!(server.hits(), 2);
}

#[test]
fn partial_results_survive_a_failure() {
    // Q1 resolves, Q2 always fails
    let server = MockServer::start(|r, _| {
        if r.path.ends_with("Q2") {
            (500, "".into())
        } else {
            (200, entity(&r.path[8..]))
        }
    });
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("kb.jsonl");
    let client = KbClient::new(&server.url, &cache, RetryPolicy::immediate(2)).unwrap();
    let err = client.fetch(&ids(&["Q1", "Q2"])).unwrap_err();
    assert!(
        matches!(err, KbError::Remote { ref kb_id, attempts: 2, .. } if kb_id == "Q2"),
        "{err}"
    );
    let cached = fs::read_to_string(&cache).unwrap();
    assert!(cached.contains("\"Q1\"") && !cached.contains("\"Q2\""));
}
