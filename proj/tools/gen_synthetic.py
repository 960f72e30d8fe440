#!/usr/bin/env python3
# Copyright 2026 The conceptidx Authors.
# SPDX-License-Identifier: Apache-2.0
"""Writes the bundled synthetic corpus to data/synthetic.

Output is a pure function of --seed: a 51-node topic taxonomy, a phrase
vocabulary, 200 documents, 20 held-out queries with graded qrels, and
planted.jsonl naming the document each held-out query was written for.
"""

import argparse
import json
import random
from pathlib import Path

FIELDS = {
    "machine learning": {
        "representation learning": ["contrastive pretraining", "graph embeddings"],
        "probabilistic modeling": ["variational inference", "bayesian optimization"],
        "reinforcement learning": ["policy gradients", "offline control"],
    },
    "information retrieval": {
        "ranking models": ["dense retrieval", "learning to rank"],
        "recommender systems": ["collaborative filtering", "session recommendation"],
        "query understanding": ["query expansion", "query suggestion"],
    },
    "computer vision": {
        "visual recognition": ["object detection", "image segmentation"],
        "generative imaging": ["diffusion sampling", "image synthesis"],
        "video understanding": ["action recognition", "video tracking"],
    },
    "natural language processing": {
        "language modeling": ["instruction tuning", "long context"],
        "information extraction": ["entity linking", "relation extraction"],
        "machine translation": ["multilingual transfer", "low resource translation"],
    },
    "computer systems": {
        "distributed computing": ["consensus protocols", "stream processing"],
        "storage engines": ["log structured storage", "index compression"],
        "compilers": ["loop vectorization", "register allocation"],
    },
}

GENERIC = [
    "benchmark dataset", "proposed method", "experimental results", "baseline comparison",
    "ablation study", "open source release", "scalable training", "evaluation protocol",
]
HEADS = ["model", "encoder", "objective", "estimator", "pipeline", "graph", "kernel", "index",
         "scheduler", "metric", "loss", "sampler"]
SYLLABLES = ["ka", "ro", "mi", "vel", "tor", "nas", "qui", "ber", "lo", "zen", "pha", "dri",
             "sul", "mon", "tek", "ira", "gos", "hal", "pe", "wyn"]


def pseudo_word(rng, used):
    while True:
        w = "".join(rng.choice(SYLLABLES) for _ in range(rng.randint(2, 3)))
        if w not in used:
            used.add(w)
            return w


def build(seed):
    rng = random.Random(seed)
    nodes = [{"id": "n00", "name": "computer science", "parent": None}]
    leaves = []  # (node id, leaf name, subfield name, field name)
    counter = 1

    def new_id():
        nonlocal counter
        nid = f"n{counter:02d}"
        counter += 1
        return nid

    for field, subs in FIELDS.items():
        fid = new_id()
        nodes.append({"id": fid, "name": field, "parent": "n00"})
        for sub, leaf_names in subs.items():
            sid = new_id()
            nodes.append({"id": sid, "name": sub, "parent": fid})
            for leaf in leaf_names:
                lid = new_id()
                nodes.append({"id": lid, "name": leaf, "parent": sid})
                leaves.append((lid, leaf, sub, field))

    used = set()
    leaf_phrases = {}
    for lid, leaf, _, _ in leaves:
        words = [pseudo_word(rng, used) for _ in range(5)]
        phrases = [f"{w} {rng.choice(HEADS)}" for w in words]
        phrases += [f"{words[i]} {words[i + 1]}" for i in range(3)]
        leaf_phrases[lid] = phrases

    vocab = []
    for _, leaf, sub, field in leaves:
        for p in (leaf, sub, field):
            if p not in vocab:
                vocab.append(p)
    for lid, _, _, _ in leaves:
        vocab.extend(leaf_phrases[lid])
    vocab.extend(GENERIC)

    sentences = [
        "We study {a} in the context of {leaf}.",
        "Our approach couples {a} with {b} to improve {g}.",
        "A {b} is introduced and analysed against a {g}.",
        "Results on a {g} show that {a} matters for {sub}.",
        "We further relate {a} to {other} from neighbouring work.",
        "The {b} generalizes across {field} settings.",
    ]
    docs = []
    doc_leaf = []
    for i in range(200):
        lid, leaf, sub, field = leaves[i % len(leaves)]
        own = leaf_phrases[lid]
        sibling = [l for l in leaves if l[2] == sub and l[0] != lid][0]
        pick = rng.sample(own, 4)
        title = f"{pick[0].capitalize()} and {pick[1]} for {leaf}"
        parts = []
        for tmpl in rng.sample(sentences, 5):
            parts.append(tmpl.format(a=rng.choice(pick), b=rng.choice(pick[2:]), g=rng.choice(GENERIC),
                                     leaf=leaf, sub=sub, field=field,
                                     other=rng.choice(leaf_phrases[sibling[0]])))
        docs.append({"id": f"d{i:03d}", "title": title, "abstract": " ".join(parts)})
        doc_leaf.append(lid)

    queries, qrels, planted = [], [], []
    for qi, (lid, leaf, sub, _) in enumerate(rng.sample(leaves, 20), start=1):
        qid = f"q{qi:02d}"
        members = [d["id"] for d, l in zip(docs, doc_leaf) if l == lid]
        target = rng.choice(members)
        queries.append({"qid": qid, "text": f"{leaf} methods in {sub}"})
        planted.append({"qid": qid, "doc_id": target})
        for m in members:
            qrels.append(f"{qid} 0 {m} {2 if m == target else 1}")
    return nodes, vocab, docs, queries, qrels, planted


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=2026)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "synthetic"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    nodes, vocab, docs, queries, qrels, planted = build(args.seed)

    def jsonl(rows):
        return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows)

    (out / "taxonomy.json").write_text(json.dumps(nodes, indent=1) + "\n")
    (out / "phrases.txt").write_text("\n".join(vocab) + "\n")
    (out / "corpus.jsonl").write_text(jsonl(docs))
    (out / "queries.jsonl").write_text(jsonl(queries))
    (out / "qrels.txt").write_text("\n".join(qrels) + "\n")
    (out / "planted.jsonl").write_text(jsonl(planted))


if __name__ == "__main__":
    main()
