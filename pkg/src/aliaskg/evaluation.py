"""Ranking evaluation of few-shot tasks."""

from __future__ import annotations

import csv
import json
import math
from fractions import Fraction
from dataclasses import dataclass

import numpy as np

from . import aliasing
from . import autodiff as ad
from .cooccur import aggregate_pattern, extract_cooccurrence, score
from .fusion import fuse_sum
from .kg import FewShotTask, KnowledgeGraph, Query
from .subgraph import extract_enclosing
from .trainer import TrainedModel

METRIC_KEYS = ("mrr", "hits1", "hits5", "hits10")


def rank_from_scores(positive: float, negatives) -> int:
    """1 + #strictly better negatives + half the exact ties, rounded up."""
    negatives = np.asarray(negatives, dtype=np.float64)
    better = int(np.sum(negatives > positive))
    ties = int(np.sum(negatives == positive))
    return 1 + better + math.ceil(0.5 * ties)


def mrr(ranks) -> float:
    """Mean reciprocal rank, summed exactly so the result is order-independent."""
    ranks = [int(r) for r in ranks]
    if not ranks:
        raise ValueError("mrr of an empty rank list")
    if min(ranks) < 1:
        raise ValueError("ranks must be >= 1")
    return float(sum(Fraction(1, r) for r in ranks) / len(ranks))


def hits_at(ranks, h: int) -> float:
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise ValueError("hits_at of an empty rank list")
    return float(np.mean(ranks <= h))


def metrics(ranks) -> dict:
    return {"mrr": mrr(ranks), "hits1": hits_at(ranks, 1), "hits5": hits_at(ranks, 5),
            "hits10": hits_at(ranks, 10)}


@dataclass
class Prototype:
    """Final task representation and the pieces it came from."""

    fused: np.ndarray
    pattern: np.ndarray
    ar_embedding: np.ndarray | None
    masks: list


class Pipeline:
    """Scores (head, tail) pairs for tasks against a frozen trained model.

    ``background`` is the KG with the target relation removed. With
    ``use_aliasing=False`` the AR branch is never touched.
    """

    def __init__(self, model: TrainedModel, background: KnowledgeGraph, provider=None,
                 use_aliasing: bool = True, lambda3: float | None = None):
        self.model = model
        self.config = model.config
        self.background = background
        self.use_aliasing = use_aliasing
        self.lambda3 = self.config.lambda3 if lambda3 is None else lambda3
        self._provider = provider
        self._graphs: dict = {}

    @property
    def provider(self):
        if self._provider is None:
            self._provider = aliasing.TrigramHashProvider(self.background,
                                                          self.config.text_dim)
        return self._provider

    def subgraph(self, head: int, tail: int):
        key = (head, tail)
        if key not in self._graphs:
            c = self.config
            self._graphs[key] = extract_enclosing(self.background, head, tail, c.hops,
                                                  c.max_nodes, c.min_edges, c.seed)
        return self._graphs[key]

    def ar_embedding(self, relation: int) -> np.ndarray:
        c = self.config
        aset = aliasing.select_aliases(self.provider, self.background, relation, c.m)
        graphs = aliasing.sample_ar_subgraphs(self.background, aset, c.k_ar, c.hops,
                                              c.max_nodes, c.seed, c.min_edges)
        return aliasing.encode_ar(graphs, self.model.fg_params)

    def _wants_ar(self) -> bool:
        if not self.use_aliasing:
            return False
        return self.config.fusion == "sum" or self.config.learn_plus_sum

    def prototype(self, task: FewShotTask) -> Prototype:
        params = self.model.params
        graphs = [self.subgraph(h, t) for h, t in task.support]
        masks = extract_cooccurrence(graphs, params, self.config.rounds)
        with ad.no_grad():
            pattern = aggregate_pattern(graphs, masks, params).data
        ar = self.ar_embedding(task.target_relation) if self._wants_ar() else None
        fused = pattern if ar is None else fuse_sum(pattern, ar, self.lambda3).data
        return Prototype(fused, pattern, ar, masks)

    def score_pair(self, proto: Prototype, head: int, tail: int) -> float:
        return score(proto.fused, self.subgraph(head, tail), self.model.params)

    def rank_query(self, task: FewShotTask, query: Query, proto: Prototype | None = None):
        proto = proto or self.prototype(task)
        pos = self.score_pair(proto, *query.positive)
        negs = [self.score_pair(proto, h, t) for h, t in query.negatives]
        return rank_from_scores(pos, negs)

    def evaluate(self, task: FewShotTask) -> dict:
        proto = self.prototype(task)
        ranks = [self.rank_query(task, q, proto) for q in task.queries]
        return {"ranks": ranks, **metrics(ranks)}


def rank_query(pipeline: Pipeline, task: FewShotTask, query: Query) -> int:
    return pipeline.rank_query(task, query)


def report_row(task_name: str, result: dict) -> dict:
    row = {"task": task_name}
    row.update({k: result[k] for k in METRIC_KEYS})
    row["n_queries"] = len(result["ranks"])
    return row


def write_metrics(rows: list[dict], json_path, csv_path):
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["task", *METRIC_KEYS, "n_queries"],
                           lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
