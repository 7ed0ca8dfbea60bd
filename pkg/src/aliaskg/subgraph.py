"""Enclosing-subgraph extraction around a (head, tail) pair."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .kg import OUT, KnowledgeGraph, bfs_distances
from .rng import substream

DEFAULT_MAX_NODES = 64
DEFAULT_MIN_EDGES = 1


@dataclass(frozen=True)
class EnclosingSubgraph:
    """Local view of a pair's neighborhood.

    ``nodes[i]`` is the entity id of local node ``i``; ``edges`` hold local
    endpoints with the KG relation id between them, direction preserved.
    """

    nodes: tuple
    edges: tuple
    head_idx: int
    tail_idx: int

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def index(self) -> "GraphIndex":
        return GraphIndex.build(self)


@dataclass(frozen=True)
class GraphIndex:
    """Integer arrays used by the message-passing code."""

    src: np.ndarray
    dst: np.ndarray
    rel: np.ndarray
    inc_edge: np.ndarray
    inc_node: np.ndarray
    indicators: np.ndarray
    num_nodes: int

    @classmethod
    def build(cls, g: EnclosingSubgraph) -> "GraphIndex":
        e = np.asarray(g.edges, dtype=np.int64).reshape(-1, 3)
        src, rel, dst = e[:, 0], e[:, 1], e[:, 2]
        eid = np.arange(len(e))
        loop = src == dst
        inc_edge = np.concatenate([eid, eid[~loop]])
        inc_node = np.concatenate([src, dst[~loop]])
        ind = np.zeros((g.num_nodes, 2))
        ind[g.head_idx, 0] = 1.0
        ind[g.tail_idx, 1] = 1.0
        return cls(src, dst, rel, inc_edge, inc_node, ind, g.num_nodes)


def _induced_edges(kg: KnowledgeGraph, nodes: set, exclude=None) -> list:
    edges = []
    for v in nodes:
        for u, r, d in kg.adjacency[v]:
            if d == OUT and u in nodes and (v, r, u) != exclude:
                edges.append((v, r, u))
    return edges


def _local_distances(start, edges, hops) -> dict:
    adj: dict = {}
    for h, _, t in edges:
        adj.setdefault(h, set()).add(t)
        adj.setdefault(t, set()).add(h)
    dist = {start: 0}
    frontier = deque([start])
    while frontier:
        v = frontier.popleft()
        if dist[v] == hops:
            continue
        for u in adj.get(v, ()):
            if u not in dist:
                dist[u] = dist[v] + 1
                frontier.append(u)
    return dist


def _prune(kg, head, tail, nodes, hops, exclude):
    while True:
        edges = _induced_edges(kg, nodes, exclude)
        dh = _local_distances(head, edges, hops)
        dt = _local_distances(tail, edges, hops)
        touched = {h for h, _, _ in edges} | {t for _, _, t in edges}
        keep = {v for v in nodes
                if v in (head, tail) or (v in touched and v in dh and v in dt)}
        if keep == nodes:
            return nodes, edges
        nodes = keep


def extract_enclosing(kg: KnowledgeGraph, head: int, tail: int, hops: int = 1,
                      max_nodes: int = DEFAULT_MAX_NODES,
                      min_edges: int = DEFAULT_MIN_EDGES, seed: int = 0,
                      exclude=None) -> EnclosingSubgraph:
    """Intersect the ``hops``-neighborhoods of ``head`` and ``tail``.

    Nodes isolated in the induced edge set, or farther than ``hops`` from an
    endpoint inside it, are pruned. Too few edges triggers seeded sampling of
    1-hop neighbors of the endpoints; more than ``max_nodes`` nodes triggers
    seeded down-sampling. ``exclude`` names one (h, r, t) triplet to leave
    out, used when the pair itself is a KG edge.
    """
    if hops < 1:
        raise ValueError("hops must be >= 1")
    rng = substream(seed, "extract", head, tail)
    dh = bfs_distances(kg, head, hops)
    dt = bfs_distances(kg, tail, hops)
    nodes = (set(dh) & set(dt)) | {head, tail}
    nodes, edges = _prune(kg, head, tail, nodes, hops, exclude)

    if len(edges) < min_edges:
        pool = sorted((kg.neighbors(head) | kg.neighbors(tail)) - nodes)
        for i in rng.permutation(len(pool)):
            nodes.add(pool[i])
            edges = _induced_edges(kg, nodes, exclude)
            if len(edges) >= min_edges:
                break

    if len(nodes) > max_nodes:
        rest = sorted(nodes - {head, tail})
        n_keep = max(max_nodes - len({head, tail}), 0)
        picked = rng.choice(len(rest), size=n_keep, replace=False) if n_keep else []
        nodes = {head, tail} | {rest[i] for i in picked}
        edges = _induced_edges(kg, nodes, exclude)

    return relabel(EnclosingSubgraph(tuple(sorted(nodes)), tuple(edges),
                                     -1, -1), head=head, tail=tail)


def relabel(g: EnclosingSubgraph, head: int | None = None,
            tail: int | None = None) -> EnclosingSubgraph:
    """Canonical form: head is local 0, tail local 1, the rest by entity id.

    ``edges`` of the input are in entity ids when ``head``/``tail`` are given
    (fresh extraction), otherwise local ids of ``g``.
    """
    if head is None:
        head, tail = g.nodes[g.head_idx], g.nodes[g.tail_idx]
        edges = [(g.nodes[a], r, g.nodes[b]) for a, r, b in g.edges]
    else:
        edges = list(g.edges)
    rest = sorted(set(g.nodes) - {head, tail})
    order = [head] if head == tail else [head, tail]
    order += rest
    local = {e: i for i, e in enumerate(order)}
    new_edges = tuple(sorted((local[a], int(r), local[b]) for a, r, b in edges))
    return EnclosingSubgraph(tuple(int(x) for x in order), new_edges,
                             0, local[tail])


def write_subgraph(kg: KnowledgeGraph, g: EnclosingSubgraph, path):
    names = kg.entity_names
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# head={names[g.nodes[g.head_idx]]} tail={names[g.nodes[g.tail_idx]]}\n")
        for a, r, b in g.edges:
            fh.write(f"{names[g.nodes[a]]}\t{kg.relation_names[r]}\t{names[g.nodes[b]]}\n")
