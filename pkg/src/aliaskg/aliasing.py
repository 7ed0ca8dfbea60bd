"""Aliasing-relation selection by text similarity and AR-subgraph evidence."""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .encoder import ModelParams, encode, ones_mask
from .kg import KnowledgeGraph
from .rng import substream
from .subgraph import DEFAULT_MAX_NODES, DEFAULT_MIN_EDGES, extract_enclosing

logger = logging.getLogger(__name__)

# Instrumentation: how often each entry point ran in this process.
CALL_COUNTS: Counter = Counter()


class AliasError(ValueError):
    pass


class TextEmbeddingProvider:
    """Maps relation ids to fixed-width text vectors."""

    width: int

    def vector(self, relation: int) -> np.ndarray:
        raise NotImplementedError

    def matrix(self, relations) -> np.ndarray:
        return np.stack([self.vector(r) for r in relations])


class StaticProvider(TextEmbeddingProvider):
    """Vectors given up front, as a ``(num_relations, width)`` array or dict."""

    def __init__(self, vectors):
        if isinstance(vectors, dict):
            self._vectors = {int(k): np.asarray(v, dtype=np.float64) for k, v in vectors.items()}
        else:
            arr = np.asarray(vectors, dtype=np.float64)
            self._vectors = {i: row for i, row in enumerate(arr)}
        widths = {v.shape for v in self._vectors.values()}
        if len(widths) != 1:
            raise ValueError(f"inconsistent vector widths {sorted(widths)}")
        (shape,) = widths
        self.width = shape[0]

    def vector(self, relation: int) -> np.ndarray:
        try:
            return self._vectors[relation]
        except KeyError:
            raise KeyError(f"no text embedding for relation id {relation}") from None


def char_trigrams(text: str) -> Counter:
    s = " " + " ".join(text.lower().split()) + " "
    return Counter(s[i:i + 3] for i in range(len(s) - 2))


def _bucket(trigram: str, width: int) -> int:
    h = hashlib.blake2b(trigram.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(h, "little") % width


class TrigramHashProvider(TextEmbeddingProvider):
    """Character-trigram counts hashed into ``width`` buckets, L2-normalised."""

    def __init__(self, kg: KnowledgeGraph, width: int = 256):
        self.width = width
        self._texts = dict(kg.relation_texts)
        self._cache: dict[int, np.ndarray] = {}

    def embed_text(self, text: str) -> np.ndarray:
        v = np.zeros(self.width)
        for tri, c in char_trigrams(text).items():
            v[_bucket(tri, self.width)] += c
        n = np.linalg.norm(v)
        return v / n if n else v

    def vector(self, relation: int) -> np.ndarray:
        if relation not in self._cache:
            self._cache[relation] = self.embed_text(self._texts[relation])
        return self._cache[relation]


def load_embedding_file(path, kg: KnowledgeGraph) -> StaticProvider:
    """Read ``{"relation": name, "vector": [...]}`` JSON lines."""
    vectors = {}
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                name, vec = rec["relation"], rec["vector"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad embedding record ({exc})") from None
            vec = np.asarray(vec, dtype=np.float64)
            if vec.ndim != 1 or not np.isfinite(vec).all():
                raise ValueError(f"{path}:{lineno}: vector must be a finite 1-d list")
            if width is None:
                width = len(vec)
            elif len(vec) != width:
                raise ValueError(f"{path}:{lineno}: width {len(vec)} != {width}")
            if name not in kg.relation_index:
                logger.warning("%s:%d: unknown relation %r, skipped", path, lineno, name)
                continue
            vectors[kg.relation_index[name]] = vec
    if not vectors:
        raise ValueError(f"{path}: no usable embeddings")
    missing = [kg.relation_names[r] for r in range(kg.relation_count) if r not in vectors]
    if missing:
        raise ValueError(f"{path}: missing vectors for relations {missing}")
    return StaticProvider(vectors)


@dataclass
class AliasSet:
    target: int
    aliases: list[int]
    scores: list[float]


def select_aliases(provider: TextEmbeddingProvider, kg: KnowledgeGraph, target: int,
                   m: int = 3) -> AliasSet:
    """Top-``m`` relations by text cosine to ``target``; ties go to the lower id."""
    CALL_COUNTS["select_aliases"] += 1
    if m < 1:
        raise ValueError("m must be >= 1")
    if kg.relation_count < 2:
        raise AliasError("no candidate aliases")
    t = provider.vector(target)
    tn = np.linalg.norm(t)
    scored = []
    for r in range(kg.relation_count):
        if r == target:
            continue
        v = provider.vector(r)
        vn = np.linalg.norm(v)
        s = float(t @ v / (tn * vn)) if tn and vn else 0.0
        scored.append((-round(s, 12), r, s))
    scored.sort()
    top = scored[:m]
    return AliasSet(target, [r for _, r, _ in top], [s for _, _, s in top])


def sample_ar_subgraphs(kg: KnowledgeGraph, alias_set: AliasSet, k: int = 10, hops: int = 1,
                        max_nodes: int = DEFAULT_MAX_NODES, seed: int = 0,
                        min_edges: int = DEFAULT_MIN_EDGES):
    """``k`` enclosing subgraphs per alias (with replacement when an alias has < k triplets)."""
    CALL_COUNTS["sample_ar_subgraphs"] += 1
    out = []
    for a in alias_set.aliases:
        trips = kg.triplets_of(a)
        if len(trips) == 0:
            logger.warning("alias relation %s has no triplets, skipped", kg.relation_names[a])
            continue
        rng = substream(seed, "ar", alias_set.target, a)
        picks = rng.choice(len(trips), size=k, replace=len(trips) < k)
        graphs = []
        for i in picks:
            h, r, t = (int(x) for x in trips[i])
            graphs.append(extract_enclosing(kg, h, t, hops, max_nodes, min_edges, seed,
                                            exclude=(h, r, t)))
        out.append(graphs)
    if not out:
        raise AliasError("no AR evidence")
    return out


def encode_ar(subgraphs, fg_params: ModelParams) -> np.ndarray:
    """Mean frozen-encoder embedding over all AR subgraphs (all-ones masks)."""
    CALL_COUNTS["encode_ar"] += 1
    flat = [g for group in subgraphs for g in group] if subgraphs and \
        isinstance(subgraphs[0], (list, tuple)) else list(subgraphs)
    if not flat:
        raise AliasError("encode_ar needs at least one subgraph")
    with ad.no_grad():
        total = np.zeros(fg_params.embedding_dim)
        for g in flat:
            total += encode(g, ones_mask(g), fg_params).data
    return total / len(flat)
