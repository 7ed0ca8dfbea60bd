"""Planted-rule synthetic knowledge graphs for desk-scale experiments.

A target relation and an alias relation are both implied by the same
two-hop rule ``body1(a, b) & body2(b, c) => head(a, c)``, instantiated on
disjoint chains. The target is kept data-poor and the alias data-rich, and
their descriptions share most character trigrams. Three noise relations
connect random pairs.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .kg import KnowledgeGraph, save_relation_texts, save_triples
from .rng import substream

RELATIONS = ["r_body1", "r_body2", "r_target", "r_alias", "r_noise1", "r_noise2", "r_noise3"]
TEXTS = {
    "r_body1": "leads into",
    "r_body2": "flows onto",
    "r_target": "has target of",
    "r_alias": "has alias of",
    "r_noise1": "painted color",
    "r_noise2": "lives near city",
    "r_noise3": "member of club",
}


def gen_synthetic_kg(n_entities: int = 200, seed: int = 0, n_target: int = 8,
                     n_alias: int = 48, n_plain: int = 0, noise_edges: int | None = None,
                     K: int = 3):
    """Return ``(kg, truth)``; ``truth`` records the planted chains by entity name."""
    if n_entities < 30:
        raise ValueError("n_entities must be >= 30")
    if n_target < K + 2:
        raise ValueError(f"need at least K+2={K + 2} target instances, got {n_target}")
    if n_alias < 1:
        raise ValueError("need at least one alias instance")
    rng = substream(seed, "synthetic")
    rel = {name: i for i, name in enumerate(RELATIONS)}
    names = [f"e{i:03d}" for i in range(n_entities)]

    pool: list[int] = []

    def take3():
        nonlocal pool
        while True:
            if len(pool) < 3:
                pool = pool + rng.permutation(n_entities).tolist()
            a, b, c = pool[:3]
            pool = pool[3:]
            if len({a, b, c}) == 3:
                return a, b, c

    chains = {"target": [], "alias": [], "plain": []}
    triplets = []
    for kind, count in (("target", n_target), ("alias", n_alias), ("plain", n_plain)):
        for _ in range(count):
            a, b, c = take3()
            chains[kind].append((a, b, c))
            triplets.append((a, rel["r_body1"], b))
            triplets.append((b, rel["r_body2"], c))
            if kind != "plain":
                triplets.append((a, rel[f"r_{kind}"], c))

    n_noise = n_entities // 2 if noise_edges is None else noise_edges
    for name in ("r_noise1", "r_noise2", "r_noise3"):
        for _ in range(n_noise):
            h, t = rng.choice(n_entities, size=2, replace=False)
            triplets.append((int(h), rel[name], int(t)))

    texts = {rel[n]: TEXTS[n] for n in RELATIONS}
    kg = KnowledgeGraph(names, RELATIONS, triplets, texts)
    if len(kg.triplets_of(rel["r_target"])) < K + 2:
        raise ValueError("too few distinct target instances were planted")

    def named(cs):
        return [[names[x] for x in c] for c in cs]

    truth = {
        "seed": seed,
        "target": "r_target",
        "alias": "r_alias",
        "rule": ["r_body1", "r_body2"],
        "target_chains": named(chains["target"]),
        "alias_chains": named(chains["alias"]),
        "plain_chains": named(chains["plain"]),
    }
    return kg, truth


def write_synthetic(kg: KnowledgeGraph, truth: dict, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_triples(kg, out / "triples.tsv")
    save_relation_texts(kg, out / "relation_texts.tsv")
    (out / "truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n",
                                    encoding="utf-8")
    return out
