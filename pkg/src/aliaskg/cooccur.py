"""Co-occurrence pattern extraction, aggregation, reconstruction and scoring."""

from __future__ import annotations

import json
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .encoder import ModelParams, decode_mask, encode
from .subgraph import EnclosingSubgraph

DEFAULT_ROUNDS = 2
DEFAULT_EPSILON = 0.5


def extract_cooccurrence(support_graphs: Sequence[EnclosingSubgraph], params: ModelParams,
                         rounds: int = DEFAULT_ROUNDS, trace: list | None = None):
    """Iteratively shrink all-ones masks to the pattern shared by every support graph.

    Each round visits graphs in order and replaces ``M_p`` in place by the
    elementwise minimum over ``q`` of ``decode(G_p, encode(G_q, M_q))``, so
    later graphs in a round already see the updated earlier masks. When
    ``trace`` is a list, the per-q reconstructions of the last round are
    appended to it as ``(p, [M_pq ...])``.
    """
    graphs = list(support_graphs)
    if not graphs:
        raise ValueError("extract_cooccurrence needs at least one support graph")
    masks = [np.ones(g.num_edges) for g in graphs]
    with ad.no_grad():
        for rnd in range(rounds):
            for p, gp in enumerate(graphs):
                recon = [decode_mask(gp, encode(gq, masks[q], params), params).data
                         for q, gq in enumerate(graphs)]
                masks[p] = np.clip(np.min(recon, axis=0), 0.0, 1.0) if gp.num_edges \
                    else np.ones(0)
                if trace is not None and rnd == rounds - 1:
                    trace.append((p, recon))
    return masks


def aggregate_pattern(support_graphs, masks, params: ModelParams) -> ad.Tensor:
    """Mean encoder embedding of the masked support graphs."""
    if len(support_graphs) != len(masks) or not masks:
        raise ValueError("need one mask per support graph")
    embs = [encode(g, m, params) for g, m in zip(support_graphs, masks)]
    total = embs[0]
    for e in embs[1:]:
        total = total + e
    return ad.scale(total, 1.0 / len(embs))


def reconstruct(query_graph: EnclosingSubgraph, pattern, params: ModelParams) -> ad.Tensor:
    return decode_mask(query_graph, pattern, params)


def score(pattern, query_graph: EnclosingSubgraph, params: ModelParams) -> float:
    """Cosine between ``pattern`` and the query graph re-encoded under its reconstructed mask."""
    with ad.no_grad():
        mask = reconstruct(query_graph, pattern, params)
        return ad.cosine_similarity(pattern, encode(query_graph, mask, params)).item()


def accept(score_value: float, epsilon: float = DEFAULT_EPSILON) -> bool:
    return score_value > epsilon


def pairwise_min_cosine(support_graphs, masks, params: ModelParams) -> float:
    """Smallest cosine between masked support embeddings (diagnostic only)."""
    with ad.no_grad():
        embs = [encode(g, m, params) for g, m in zip(support_graphs, masks)]
    best = 1.0
    for i in range(len(embs)):
        for j in range(i + 1, len(embs)):
            best = min(best, ad.cosine_similarity(embs[i], embs[j]).item())
    return best


def dump_masks(masks, path):
    with open(path, "w", encoding="utf-8") as fh:
        for i, m in enumerate(masks):
            fh.write(json.dumps({"graph": i, "weights": [float(x) for x in m]}) + "\n")
