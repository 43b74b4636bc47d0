#!/usr/bin/env python3
"""Regenerates the synthetic fixture corpora under fixtures/.

Output is deterministic for a given seed. Each fixture directory holds
corpus.jsonl, el.jsonl, snapshot.jsonl and schema.json.
"""

import argparse
import json
import random
from pathlib import Path

PEOPLE = [
    "Alan Bean", "Ruth Calloway", "Marek Nowak", "José Ortega", "Ingrid Solberg",
    "Tomas Keller", "Amara Obi", "Lena Fischer", "Hugo Laurent", "Priya Raman",
    "Oskar Lind", "Sofia Marchetti", "Daniel Reyes", "Keiko Tanaka", "Felix Brandt",
    "Nadia Petrova", "Samuel Achebe", "Clara Vogel", "Ivan Horvat", "Maya Cohen",
    "Rafael Duarte", "Elena Popescu", "Jonas Berg", "Aisha Karim", "Victor Hale",
]
CITIES = [
    "Wheeler", "Zürich", "Port Elm", "Castlebury", "New Harlow", "Valmont",
    "Rivergate", "Oakhaven", "Brightwater", "San Lucero", "Kestrel Bay", "Marden",
    "Ashford", "Luxembourg City", "Tarnow", "Belmira",
]
COUNTRIES = ["Norland", "Estovia", "Marvania", "Quelland", "Barovia", "Sundara", "Veltria"]
ORGS = [
    "Apex Dynamics", "Northwind Labs", "Harbor Freight Lines", "Blue Finch Media",
    "Vantage Mutual", "Copperline Rail", "Ironbridge Capital", "Solace Health",
    "Meridian Press", "Greyfield Motors", "Lumen Robotics", "Kite Energy",
]
BOOKS = [
    "The Glass Orchard", "Winter at Ostend", "A Map of Salt", "The Ninth Lantern",
    "Harbour Lights", "The Copper Year", "Tidewater", "The Quiet Meridian",
    "Seven Bridges", "The Long Crossing", "Ember and Ash", "North of Nowhere",
]
LANGUAGES = ["Estovian", "Norlandic", "Marvanian", "Quellish"]
TITLES = ["chief executive", "treasurer", "director", "chairman", "spokesman", "editor"]
DISTRACTORS = [("Monday", "Q8001", "day of the week"), ("Reuters", "Q8002", "news agency"),
               ("Tuesday", "Q8003", "day of the week"), ("Parliament", "Q8004", "legislature")]

TYPE_CANDIDATES = {
    "person": (["human"], "PERSON"),
    "city": (["city", "big city"], "PLACE"),
    "country": (["country", "sovereign state"], "PLACE"),
    "org": (["business", "enterprise"], "ORGANIZATION"),
    "book": (["literary work", "novel"], "WORK"),
    "language": (["language"], "LANGUAGE"),
    "title": ([], "TITLE"),
}


class Registry:
    """Assigns stable KB ids and snapshot entries to entity names."""

    def __init__(self, rng):
        self.rng = rng
        self.ids = {}
        self.entries = {}

    def kb_id(self, name, kind):
        if name not in self.ids:
            qid = f"Q{9000 + len(self.ids)}"
            self.ids[name] = qid
            types, _ = TYPE_CANDIDATES[kind]
            types = list(types)
            if len(types) > 1:
                self.rng.shuffle(types)
                types = types[: self.rng.choice([1, 2])]
            label = name
            if kind == "person" and self.rng.random() < 0.3:
                label = name + " (" + self.rng.choice(["writer", "engineer", "politician"]) + ")"
            self.entries[qid] = {"kb_id": qid, "label": label, "instance_of": types,
                                 "subclass_of": [] if kind != "city" else ["human settlement"]}
        return self.ids[name]

    def add_raw(self, qid, label, type_label):
        self.ids.setdefault(label, qid)
        self.entries.setdefault(qid, {"kb_id": qid, "label": label, "instance_of": [type_label], "subclass_of": []})


def pool(kind):
    return {"person": PEOPLE, "city": CITIES, "country": COUNTRIES, "org": ORGS,
            "book": BOOKS, "language": LANGUAGES, "title": TITLES}[kind]


WEBNLG = [
    ("birthPlace", "person", "city", "was born in"),
    ("occupation", "person", "title", "worked as a"),
    ("author", "book", "person", "was written by"),
    ("precededBy", "book", "book", "is the sequel to"),
    ("publisher", "book", "org", "was published by"),
    ("country", "city", "country", "lies in"),
    ("capital", "country", "city", "has its capital at"),
    ("language", "country", "language", "speaks"),
    ("leaderName", "country", "person", "is led by"),
]
NYT = [
    ("contains", "country", "city", "includes the town of"),
    ("place_lived", "person", "city", "has lived in"),
    ("nationality", "person", "country", "holds a passport from"),
    ("company", "person", "org", "works for"),
    ("founders", "org", "person", "was founded by"),
    ("place_founded", "org", "city", "was started in"),
    ("capital", "country", "city", "is governed from"),
]
TACRED = [
    ("org:founded_by", "org", "person", "was founded by"),
    ("per:employee_of", "person", "org", "is employed by"),
    ("per:title", "person", "title", "serves as"),
    ("per:city_of_birth", "person", "city", "was born in"),
    ("org:city_of_headquarters", "org", "city", "is based in"),
    ("per:countries_of_residence", "person", "country", "now lives in"),
    ("org:subsidiaries", "org", "org", "owns"),
]


def build_example(rng, relations, k, reg, distractors):
    """Returns (text, triples, mentions) with k triples over distinct entity pairs."""
    clauses, triples, used = [], [], set()
    while len(triples) < k:
        rel, sk, ok, phrase = rng.choice(relations)
        s, o = rng.choice(pool(sk)), rng.choice(pool(ok))
        if s == o or (s, rel, o) in used:
            continue
        used.add((s, rel, o))
        clauses.append(((s, sk), phrase, (o, ok)))
        triples.append({"subject": s, "relation": rel, "object": o})
    text, mentions = "", {}
    for i, ((s, sk), phrase, (o, ok)) in enumerate(clauses):
        if i:
            text += " , and " if i == len(clauses) - 1 else " , "
        start = len(text)
        text += s
        mentions.setdefault(s, (start, start + len(s), sk))
        text += " " + phrase + " "
        start = len(text)
        text += o
        mentions.setdefault(o, (start, start + len(o), ok))
    extra = []
    if distractors:
        word, qid, ty = rng.choice(DISTRACTORS)
        text += " , " + rng.choice(["said", "reported", "noted"]) + " " + word
        extra.append((word, len(text) - len(word), len(text), qid, ty))
    text += " ."
    return text, triples, mentions, extra


def el_mentions(rng, mentions, reg, link_all):
    out = []
    for surface, (start, end, kind) in sorted(mentions.items(), key=lambda kv: kv[1][0]):
        if kind == "title":
            continue
        qid = reg.kb_id(surface, kind)
        if not link_all and rng.random() < 0.2:
            continue
        score = round(rng.uniform(-4.4, -0.1), 3)
        if not link_all and rng.random() < 0.1:
            score = round(rng.uniform(-7.0, -4.6), 3)
        out.append({"surface": surface, "start": start, "end": end, "kb_id": qid, "score": score})
        if rng.random() < 0.2:
            # a weaker competing candidate for the same span
            decoy = rng.choice([n for n in pool(kind) if n != surface])
            out.append({"surface": surface, "start": start, "end": end,
                        "kb_id": reg.kb_id(decoy, kind), "score": round(score - rng.uniform(0.5, 2.0), 3)})
    return out


def sizes(n, rng):
    base = [1, 1, 2, 2, 3, 4] * (n // 6 + 1)
    rng.shuffle(base)
    base = base[:n]
    for k in (1, 2, 3, 4):
        if k not in base:
            base[k] = k
    return base


def generate(name, relations, task, n, seed, null_relation=None, distractors=False, link_all=False):
    rng = random.Random(seed)
    reg = Registry(rng)
    corpus, el, seen = [], [], set()
    for i, k in enumerate(sizes(n, rng)):
        while True:
            text, triples, mentions, extra = build_example(rng, relations, k, reg, distractors)
            if text not in seen:
                seen.add(text)
                break
        ex_id = f"{name}-{i:03d}"
        ex = {"id": ex_id, "text": text, "entities": [], "triples": triples, "task": task}
        if task != "JREE":
            for surface, (start, end, kind) in sorted(mentions.items(), key=lambda kv: kv[1][0]):
                ex["entities"].append({"surface": surface, "start": start, "end": end,
                                       "type": TYPE_CANDIDATES[kind][1] or "MISC"})
        corpus.append(ex)
        ms = el_mentions(rng, mentions, reg, link_all)
        for word, start, end, qid, ty in extra:
            reg.add_raw(qid, word, ty)
            ms.append({"surface": word, "start": start, "end": end, "kb_id": qid, "score": -1.5})
        ms.sort(key=lambda m: (m["start"], -m["score"]))
        if ms:
            el.append({"example_id": ex_id, "mentions": ms})
    schema = {"relations": sorted({r[0] for r in relations}), "null_relation": null_relation}
    return corpus, el, [reg.entries[q] for q in sorted(reg.entries)], schema


def write(out, name, parts):
    corpus, el, snapshot, schema = parts
    d = out / name
    d.mkdir(parents=True, exist_ok=True)
    for fname, rows in (("corpus.jsonl", corpus), ("el.jsonl", el), ("snapshot.jsonl", snapshot)):
        with open(d / fname, "w", encoding="utf-8") as f:
            for row in rows:
                f.write(json.dumps(row, ensure_ascii=False) + "\n")
    with open(d / "schema.json", "w", encoding="utf-8") as f:
        json.dump(schema, f, indent=2)
        f.write("\n")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "fixtures")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("-n", type=int, default=60)
    args = ap.parse_args()
    write(args.out, "webnlg_mini", generate("webnlg", WEBNLG, "JREE", args.n, args.seed))
    write(args.out, "nyt_mini", generate("nyt", NYT, "JREE", args.n, args.seed + 1, distractors=True, link_all=True))
    write(args.out, "tacred_mini", generate("tacred", TACRED, "ETRC", args.n, args.seed + 2, null_relation="no_relation"))


if __name__ == "__main__":
    main()
