//! Deterministic workloads for the benchmarks in `benches/`.

use kgrex_core::{Example, Prediction, RelationSchema, RelationTriple, TaskKind};

const WORDS: [&str; 12] = [
    "Grantville",
    "Gazette",
    "Bavarian",
    "Crisis",
    "river",
    "harbor",
    "Lopate",
    "Manhattan",
    "north",
    "sequel",
    "company",
    "Alico",
];

pub const RELATIONS: [&str; 6] = [
    "precededBy",
    "followedBy",
    "contains",
    "neighborhood_of",
    "place of birth",
    "org:founded_by",
];

pub fn schema() -> RelationSchema {
    RelationSchema::new(RELATIONS, None)
}

/// `n` words cycled from a fixed vocabulary with a varying stride.
pub fn text(n: usize) -> String {
    (0..n)
        .map(|i| WORDS[(i * 7 + i / 3) % WORDS.len()])
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn triples(k: usize) -> Vec<RelationTriple> {
    (0..k)
        .map(|i| {
            RelationTriple::new(
                format!("{} {}", WORDS[i % 12], WORDS[(i + 5) % 12]),
                RELATIONS[i % RELATIONS.len()],
                format!("{} {}", WORDS[(i + 3) % 12], WORDS[(i + 8) % 12]),
            )
        })
        .collect()
}

/// A corpus of `n` examples with 1-4 triples each, and predictions that get
/// roughly two thirds of them right.
pub fn scored_corpus(n: usize) -> (Vec<Example>, Vec<Prediction>) {
    let mut gold = Vec::with_capacity(n);
    let mut preds = Vec::with_capacity(n);
    for i in 0..n {
        let ts = triples(1 + i % 4);
        let mut p = ts.clone();
        if i % 3 == 0 {
            p[0].object.push_str(" x");
        }
        gold.push(Example {
            id: format!("e{i}"),
            text: String::new(),
            gold_entities: vec![],
            gold_triples: ts,
            task: TaskKind::Jree,
        });
        preds.push(Prediction {
            id: format!("e{i}"),
            triples: p,
            rejected: vec![],
        });
    }
    (gold, preds)
}
