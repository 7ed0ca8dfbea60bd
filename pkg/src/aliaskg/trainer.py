"""Self-supervised objective and training loop."""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import aliasing
from .encoder import ModelParams, decode_mask, encode
from .fusion import FUSION_MODES, alignment_loss
from .kg import KnowledgeGraph
from .optim import adamw_step, load_checkpoint, save_checkpoint
from .rng import substream
from .subgraph import EnclosingSubgraph, extract_enclosing

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lambda1: float = 1.0
    lambda2: float = 0.1
    lambda3: float = 0.01
    gamma: float = 0.1
    contrastive_sign: str = "standard"
    fusion: str = "sum"
    learn_plus_sum: bool = False
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    epochs: int = 300
    batch_size: int = 8
    mask_bernoulli_p: float = 0.5
    fg_pretrain_steps: int = 500
    fg_lr: float | None = None
    warm_start: bool = True
    seed: int = 0
    dim: int = 128
    layers: int = 3
    activation: str = "sigmoid"
    hops: int = 1
    max_nodes: int = 64
    min_edges: int = 1
    rounds: int = 2
    epsilon: float = 0.5
    m: int = 3
    k_ar: int = 10
    text_dim: int = 256

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be non-negative")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.fusion not in FUSION_MODES:
            raise ValueError(f"fusion must be one of {FUSION_MODES}")
        if self.contrastive_sign not in ("standard", "literal"):
            raise ValueError("contrastive_sign must be 'standard' or 'literal'")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


PROFILES = {
    "nell": dict(lambda1=1.0, lambda2=0.1, lambda3=0.01, hops=2),
    "fb": dict(lambda1=1.0, lambda2=1.0, lambda3=0.01, hops=1),
    "conceptnet": dict(lambda1=2.0, lambda2=0.5, lambda3=10.0, hops=1),
    "full": dict(epochs=5000, batch_size=8, lr=1e-5, dim=128, layers=3),
    # desk-scale settings for the synthetic benchmark
    "synth": dict(lambda1=1.0, lambda2=0.1, lambda3=0.01, hops=1, dim=32, layers=3,
                  activation="tanh", lr=1e-3, fg_lr=5e-3, epochs=300, batch_size=8,
                  fg_pretrain_steps=300),
}


def profile_config(name: str, **overrides) -> TrainConfig:
    if name not in PROFILES:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    return TrainConfig(**{**PROFILES[name], **overrides})


# ---------------------------------------------------------------------------
# losses


def reconstruction_loss(graph: EnclosingSubgraph, mask, params: ModelParams) -> ad.Tensor:
    if graph.num_edges == 0:
        logger.debug("reconstruction loss on a zero-edge graph is 0")
        return ad.Tensor(0.0)
    pred = decode_mask(graph, encode(graph, mask, params), params)
    return ad.binary_cross_entropy(pred, mask)


def contrastive_loss(graph, negative_graph, mask, params: ModelParams, gamma: float,
                     sign: str = "standard", embedding=None) -> ad.Tensor:
    """Margin between the re-encoded graph and a different-relation graph.

    ``standard`` penalises the negative being closer than the positive;
    ``literal`` swaps the two cosines.
    """
    e = encode(graph, mask, params) if embedding is None else embedding
    e_pos = encode(graph, decode_mask(graph, e, params), params)
    e_neg = encode(negative_graph, decode_mask(negative_graph, e, params), params)
    pos = ad.cosine_similarity(e_pos, e)
    neg = ad.cosine_similarity(e_neg, e)
    if sign == "literal":
        return ad.margin_hinge(neg, pos, gamma)
    return ad.margin_hinge(pos, neg, gamma)


@dataclass
class TrainSample:
    graph: EnclosingSubgraph
    mask: np.ndarray
    negative: EnclosingSubgraph
    ar_embedding: np.ndarray | None = None


def sample_loss(s: TrainSample, params: ModelParams, config: TrainConfig):
    e = encode(s.graph, s.mask, params)
    if s.graph.num_edges:
        l_r = ad.binary_cross_entropy(decode_mask(s.graph, e, params), s.mask)
    else:
        l_r = ad.Tensor(0.0)
    l_c = contrastive_loss(s.graph, s.negative, s.mask, params, config.gamma,
                           config.contrastive_sign, embedding=e)
    total = ad.scale(l_r, config.lambda1) + ad.scale(l_c, config.lambda2)
    l_mse = ad.Tensor(0.0)
    if config.fusion == "learn" and s.ar_embedding is not None:
        l_mse = alignment_loss(e, s.ar_embedding)
        total = total + l_mse
    return total, {"l_r": l_r.item(), "l_c": l_c.item(), "l_mse": l_mse.item()}


def total_loss(batch, params: ModelParams, config: TrainConfig):
    """Batch mean of ``lambda1 * L_r + lambda2 * L_c (+ L_mse in learn mode)``."""
    totals, parts = [], {"l_r": 0.0, "l_c": 0.0, "l_mse": 0.0}
    for s in batch:
        t, p = sample_loss(s, params, config)
        totals.append(t)
        for k in parts:
            parts[k] += p[k] / len(batch)
    out = totals[0]
    for t in totals[1:]:
        out = out + t
    return ad.scale(out, 1.0 / len(batch)), parts


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainedModel:
    params: ModelParams
    fg_params: ModelParams
    config: TrainConfig
    history: list = field(default_factory=list)
    skipped: int = 0

    def save(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out / "model.ckpt", self.params.state_dict())
        save_checkpoint(out / "fg.ckpt", fg_state(self.fg_params))
        (out / "config.json").write_text(self.config.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, out_dir, num_relations: int) -> "TrainedModel":
        out = Path(out_dir)
        config = TrainConfig.load(out / "config.json")
        params = ModelParams(num_relations, config.dim, config.layers, config.activation)
        params.load_state_dict(load_checkpoint(out / "model.ckpt"))
        fg = ModelParams(num_relations, config.dim, config.layers, config.activation)
        fg.load_state_dict({k[3:]: v for k, v in load_checkpoint(out / "fg.ckpt").items()})
        return cls(params, fg, config)


def fg_state(fg: ModelParams) -> dict:
    return {"fg." + k: v for k, v in fg.state_dict().items()}


class _Sampler:
    """Draws training triplets and their (cached) enclosing subgraphs."""

    def __init__(self, kg: KnowledgeGraph, config: TrainConfig, stream: str):
        self.kg = kg
        self.config = config
        self.rng = substream(config.seed, stream)
        self.relations = [r for r in range(kg.relation_count) if len(kg.triplets_of(r))]
        self._cache: dict = {}
        self.skipped = 0

    def graph(self, h, r, t) -> EnclosingSubgraph:
        key = (h, r, t)
        if key not in self._cache:
            c = self.config
            self._cache[key] = extract_enclosing(self.kg, h, t, c.hops, c.max_nodes,
                                                 c.min_edges, c.seed, exclude=key)
        return self._cache[key]

    def triplet(self, r):
        trips = self.kg.triplets_of(r)
        h, _, t = (int(x) for x in trips[self.rng.integers(len(trips))])
        return h, r, t

    def draw(self, max_tries: int = 50):
        for _ in range(max_tries):
            r = self.relations[self.rng.integers(len(self.relations))]
            h, _, t = self.triplet(r)
            g = self.graph(h, r, t)
            if g.num_edges == 0:
                self.skipped += 1
                continue
            return r, g
        raise RuntimeError("could not draw a training subgraph with edges")

    def mask(self, g) -> np.ndarray:
        return (self.rng.random(g.num_edges) < self.config.mask_bernoulli_p).astype(np.float64)

    def negative(self, r) -> EnclosingSubgraph:
        others = [x for x in self.relations if x != r]
        if not others:
            raise ValueError("training needs at least two relations with triplets")
        r2 = others[self.rng.integers(len(others))]
        h, _, t = self.triplet(r2)
        return self.graph(h, r2, t)


def _pretrain_fg(kg, config, params: ModelParams) -> ModelParams:
    """Reconstruction-only pretraining of the encoder later frozen as f_g."""
    sampler = _Sampler(kg, config, "fg-sampling")
    ps = params.parameters()
    lr = config.lr if config.fg_lr is None else config.fg_lr
    for _ in range(config.fg_pretrain_steps):
        losses = []
        for _ in range(config.batch_size):
            _, g = sampler.draw()
            losses.append(reconstruction_loss(g, sampler.mask(g), params))
        loss = losses[0]
        for x in losses[1:]:
            loss = loss + x
        ad.scale(loss, 1.0 / len(losses)).backward()
        adamw_step(ps, lr, config.beta1, config.beta2, config.eps, config.weight_decay)
    return params


class ARCache:
    """Per-relation AR embeddings from the frozen encoder."""

    def __init__(self, kg, config, fg_params, provider=None):
        self.kg = kg
        self.config = config
        self.fg = fg_params
        self.provider = provider or aliasing.TrigramHashProvider(kg, config.text_dim)
        self._cache: dict = {}

    def get(self, relation: int):
        if relation not in self._cache:
            c = self.config
            try:
                aset = aliasing.select_aliases(self.provider, self.kg, relation, c.m)
                graphs = aliasing.sample_ar_subgraphs(self.kg, aset, c.k_ar, c.hops,
                                                      c.max_nodes, c.seed, c.min_edges)
                self._cache[relation] = aliasing.encode_ar(graphs, self.fg)
            except aliasing.AliasError as exc:
                logger.warning("no AR embedding for relation %d: %s", relation, exc)
                self._cache[relation] = None
        return self._cache[relation]


def train(kg: KnowledgeGraph, config: TrainConfig, provider=None, log_path=None,
          progress=None) -> TrainedModel:
    """Pretrain and freeze f_g, then optimise the joint objective on ``kg``."""
    if kg.relation_count < 2:
        raise ValueError("training needs at least two relations")
    init = ModelParams(kg.relation_count, config.dim, config.layers, config.activation,
                       seed=config.seed)
    fg = _pretrain_fg(kg, config, init.copy())
    for p in fg.parameters():
        p.requires_grad = False
    params = fg.copy() if config.warm_start else init

    sampler = _Sampler(kg, config, "sampling")
    ar = ARCache(kg, config, fg, provider) if config.fusion == "learn" else None
    ps = params.parameters()
    history = []
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for step in range(config.epochs):
            batch = []
            for _ in range(config.batch_size):
                r, g = sampler.draw()
                batch.append(TrainSample(g, sampler.mask(g), sampler.negative(r),
                                         ar.get(r) if ar else None))
            loss, parts = total_loss(batch, params, config)
            loss.backward()
            adamw_step(ps, config.lr, config.beta1, config.beta2, config.eps,
                       config.weight_decay)
            rec = {"step": step, "loss": loss.item(), **parts}
            history.append(rec)
            if log_fh:
                log_fh.write(json.dumps(rec) + "\n")
            if progress:
                progress(rec)
    finally:
        if log_fh:
            log_fh.close()
    if sampler.skipped:
        logger.info("skipped %d zero-edge training samples", sampler.skipped)
    return TrainedModel(params, fg, config, history, sampler.skipped)
