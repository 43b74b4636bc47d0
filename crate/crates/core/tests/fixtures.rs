use std::collections::BTreeSet;
use std::path::PathBuf;

use kgrex_core::ingest::{load_el, ElFilter};
use kgrex_core::model::{validate_corpus, words};
use kgrex_core::{load_corpus, CorpusFormat, RelationSchema};

const FIXTURES: [&str; 3] = ["webnlg_mini", "nyt_mini", "tacred_mini"];

fn dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn schema(name: &str) -> RelationSchema {
    serde_json::from_str(&std::fs::read_to_string(dir(name).join("schema.json")).unwrap()).unwrap()
}

#[test]
fn shipped_fixtures_are_valid() {
    for name in FIXTURES {
        let corpus = load_corpus(dir(name).join("corpus.jsonl"), CorpusFormat::Canonical).unwrap();
        let report = validate_corpus(&corpus, &schema(name));
        assert!(
            report.violations.is_empty(),
            "{name}: {:?}",
            report.violations
        );
        assert!(report.count >= 50, "{name}");
        let sizes: BTreeSet<usize> = corpus.iter().map(|e| e.unique_triples().len()).collect();
        assert_eq!(sizes, BTreeSet::from([1, 2, 3, 4]), "{name}");
    }
}

#[test]
fn linked_spans_match_the_text() {
    for name in FIXTURES {
        let corpus = load_corpus(dir(name).join("corpus.jsonl"), CorpusFormat::Canonical).unwrap();
        let (el, warnings) = load_el(
            dir(name).join("el.jsonl"),
            ElFilter::default(),
            Some(&corpus),
        )
        .unwrap();
        assert!(warnings.is_empty(), "{name}: {warnings:?}");
        assert!(!el.is_empty());
    }
}

#[test]
fn gold_arguments_fit_the_subspan_window() {
    for name in FIXTURES {
        let corpus = load_corpus(dir(name).join("corpus.jsonl"), CorpusFormat::Canonical).unwrap();
        for ex in &corpus {
            for t in &ex.gold_triples {
                assert!(words(&t.subject).len() <= 10 && words(&t.object).len() <= 10);
            }
        }
    }
}
