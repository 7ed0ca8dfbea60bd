"""Knowledge-graph storage, loading, and few-shot task construction."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .rng import substream

logger = logging.getLogger(__name__)

OUT, IN = 1, -1


class KGFormatError(ValueError):
    """Malformed or empty knowledge-graph input file."""


class TaskError(ValueError):
    pass


@dataclass(frozen=True)
class Triplet:
    head: int
    relation: int
    tail: int


class KnowledgeGraph:
    """Immutable multi-relational graph with dense integer ids.

    ``triplets`` is an ``(n, 3)`` int64 array of (head, relation, tail).
    ``adjacency[e]`` lists ``(neighbor, relation, direction)`` for every
    incident triplet, with direction ``+1`` when ``e`` is the head.
    """

    def __init__(self, entity_names: Sequence[str], relation_names: Sequence[str],
                 triplets, relation_texts: dict[int, str] | None = None):
        self.entity_names = list(entity_names)
        self.relation_names = list(relation_names)
        self.entity_index = {n: i for i, n in enumerate(self.entity_names)}
        self.relation_index = {n: i for i, n in enumerate(self.relation_names)}
        arr = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
        if len(arr):
            if arr[:, [0, 2]].min() < 0 or arr[:, [0, 2]].max() >= len(self.entity_names):
                raise ValueError("entity id out of range")
            if arr[:, 1].min() < 0 or arr[:, 1].max() >= len(self.relation_names):
                raise ValueError("relation id out of range")
        _, first = np.unique(arr, axis=0, return_index=True)
        arr = arr[np.sort(first)]
        arr.setflags(write=False)
        self.triplets = arr
        texts = dict(relation_texts or {})
        self.relation_texts = {r: texts.get(r, self.relation_names[r])
                               for r in range(len(self.relation_names))}

        self.adjacency: list[list[tuple[int, int, int]]] = [[] for _ in self.entity_names]
        for h, r, t in arr.tolist():
            self.adjacency[h].append((t, r, OUT))
            self.adjacency[t].append((h, r, IN))
        self._neighbors = [frozenset(n for n, _, _ in adj) for adj in self.adjacency]
        self._true = set(map(tuple, arr.tolist()))
        self._by_relation: dict[int, np.ndarray] = {}
        for r in range(len(self.relation_names)):
            self._by_relation[r] = arr[arr[:, 1] == r]

    @property
    def entity_count(self) -> int:
        return len(self.entity_names)

    @property
    def relation_count(self) -> int:
        return len(self.relation_names)

    def __len__(self):
        return len(self.triplets)

    def __repr__(self):
        return (f"KnowledgeGraph(entities={self.entity_count}, "
                f"relations={self.relation_count}, triplets={len(self)})")

    def neighbors(self, entity: int) -> frozenset:
        return self._neighbors[entity]

    def degree(self, entity: int) -> int:
        return len(self.adjacency[entity])

    def has_triplet(self, head: int, relation: int, tail: int) -> bool:
        return (head, relation, tail) in self._true

    def triplets_of(self, relation: int) -> np.ndarray:
        return self._by_relation[relation]

    def relation_id(self, relation) -> int:
        if isinstance(relation, (int, np.integer)):
            if not 0 <= relation < self.relation_count:
                raise KeyError(f"unknown relation id {relation}")
            return int(relation)
        try:
            return self.relation_index[relation]
        except KeyError:
            raise KeyError(f"unknown relation {relation!r}") from None

    def entity_id(self, entity) -> int:
        if isinstance(entity, (int, np.integer)):
            if not 0 <= entity < self.entity_count:
                raise KeyError(f"unknown entity id {entity}")
            return int(entity)
        try:
            return self.entity_index[entity]
        except KeyError:
            raise KeyError(f"unknown entity {entity!r}") from None

    def with_texts(self, relation_texts: dict[int, str]) -> "KnowledgeGraph":
        return KnowledgeGraph(self.entity_names, self.relation_names, self.triplets,
                              relation_texts)

    def without_relation(self, relation: int) -> "KnowledgeGraph":
        """Copy with every triplet of ``relation`` removed (vocabularies kept)."""
        keep = self.triplets[self.triplets[:, 1] != relation]
        return KnowledgeGraph(self.entity_names, self.relation_names, keep,
                              self.relation_texts)


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line


def load_triples(path) -> KnowledgeGraph:
    """Read a ``head<TAB>relation<TAB>tail`` file, interning names in first-seen order."""
    entities: dict[str, int] = {}
    relations: dict[str, int] = {}
    rows = []
    seen = set()
    duplicates = 0
    for lineno, line in _read_lines(path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise KGFormatError(f"{path}:{lineno}: expected 3 tab-separated fields, "
                                f"got {len(parts)}")
        h, r, t = (p.strip() for p in parts)
        hi = entities.setdefault(h, len(entities))
        ri = relations.setdefault(r, len(relations))
        ti = entities.setdefault(t, len(entities))
        if (hi, ri, ti) in seen:
            duplicates += 1
            continue
        seen.add((hi, ri, ti))
        rows.append((hi, ri, ti))
    if not rows:
        raise KGFormatError(f"{path}: no triplets")
    if duplicates:
        logger.warning("%s: skipped %d duplicate triplet line(s)", path, duplicates)
    kg = KnowledgeGraph(list(entities), list(relations), rows)
    kg.duplicate_count = duplicates
    return kg


def load_relation_texts(kg: KnowledgeGraph, path) -> KnowledgeGraph:
    """Attach relation descriptions; relations missing from the file keep their name."""
    texts = {}
    for lineno, line in _read_lines(path):
        name, _, text = line.partition("\t")
        name = name.strip()
        if name not in kg.relation_index:
            logger.warning("%s:%d: unknown relation %r, skipped", path, lineno, name)
            continue
        texts[kg.relation_index[name]] = text.strip()
    return kg.with_texts(texts)


def save_triples(kg: KnowledgeGraph, path, header: str | None = None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header:
            fh.write(f"# {header}\n")
        for h, r, t in kg.triplets.tolist():
            fh.write(f"{kg.entity_names[h]}\t{kg.relation_names[r]}\t{kg.entity_names[t]}\n")


def save_relation_texts(kg: KnowledgeGraph, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r, name in enumerate(kg.relation_names):
            fh.write(f"{name}\t{kg.relation_texts[r]}\n")


@dataclass
class Query:
    positive: tuple[int, int]
    negatives: list[tuple[int, int]]


@dataclass
class FewShotTask:
    target_relation: int
    support: list[tuple[int, int]]
    queries: list[Query] = field(default_factory=list)


def build_task(kg: KnowledgeGraph, relation, K: int = 3, num_negatives: int = 50,
               seed: int = 0) -> tuple[FewShotTask, KnowledgeGraph]:
    """Split ``relation``'s triplets into K support pairs and scored queries.

    Returns the task and a background copy of ``kg`` with every triplet of
    ``relation`` removed.
    """
    r = kg.relation_id(relation)
    pairs = kg.triplets_of(r)[:, [0, 2]]
    if len(pairs) <= K:
        raise TaskError(f"insufficient instances: relation {kg.relation_names[r]!r} "
                        f"has {len(pairs)} triplets, need more than K={K}")
    order = substream(seed, "task", r).permutation(len(pairs))
    pairs = [tuple(int(x) for x in pairs[i]) for i in order]
    support, positives = pairs[:K], pairs[K:]

    queries = []
    for qi, (h, t) in enumerate(positives):
        rng = substream(seed, "negative", r, qi)
        banned = {e for e in range(kg.entity_count) if kg.has_triplet(h, r, e)}
        if kg.entity_count - len(banned) < num_negatives:
            raise TaskError(f"cannot draw {num_negatives} distinct negatives for head {h}")
        negs: list[tuple[int, int]] = []
        chosen = set()
        while len(negs) < num_negatives:
            e = int(rng.integers(kg.entity_count))
            if e in banned or e in chosen:
                continue
            chosen.add(e)
            negs.append((h, e))
        queries.append(Query((h, t), negs))
    return FewShotTask(r, support, queries), kg.without_relation(r)


def k_hop_neighbors(kg: KnowledgeGraph, entity: int, hops: int) -> set[int]:
    """Entities within ``hops`` undirected steps of ``entity`` (inclusive)."""
    if hops < 1:
        raise ValueError("hops must be >= 1")
    if not 0 <= entity < kg.entity_count:
        raise KeyError(f"unknown entity id {entity}")
    return set(bfs_distances(kg, entity, hops))


def bfs_distances(kg: KnowledgeGraph, entity: int, hops: int) -> dict[int, int]:
    dist = {entity: 0}
    frontier = deque([entity])
    while frontier:
        v = frontier.popleft()
        if dist[v] == hops:
            continue
        for u in kg.neighbors(v):
            if u not in dist:
                dist[u] = dist[v] + 1
                frontier.append(u)
    return dist
