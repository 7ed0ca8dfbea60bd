"""Relational message-passing encoder and mask decoder.

Edges start from a learned per-relation embedding. Each layer computes a
mask-weighted mean of incident edge states at every node (with an extra
``1`` in the denominator), appends head/tail indicator bits, and updates
every edge from ``[head-end node, tail-end node, edge]`` through a dense
layer. The encoder reads out ``max over nodes || head || tail`` of the
final node attention; the decoder adds a projection of a pattern
embedding to the initial edge states and emits one sigmoid weight per
edge.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .rng import substream
from .subgraph import EnclosingSubgraph

ACTIVATIONS = {"sigmoid": ad.sigmoid, "tanh": ad.tanh, "relu": ad.relu}


def _glorot(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class ModelParams:
    """Encoder ``fe.*``, decoder ``fd.*`` and the shared ``rel_emb`` table."""

    def __init__(self, num_relations: int, dim: int = 128, layers: int = 3,
                 activation: str = "sigmoid", seed: int = 0):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.num_relations = num_relations
        self.dim = dim
        self.layers = layers
        self.activation = activation
        d, dn = dim, dim + 2
        fan_in = 2 * dn + d

        def init(name, fi, fo, shape):
            return Parameter(_glorot(substream(seed, "init", name), fi, fo, shape), name)

        self.rel_emb = init("rel_emb", num_relations, d, (num_relations, d))
        self.enc = [(init(f"fe.W{i}", fan_in, d, (fan_in, d)),
                     Parameter(np.zeros(d), f"fe.b{i}")) for i in range(layers)]
        self.dec = [(init(f"fd.W{i}", fan_in, d, (fan_in, d)),
                     Parameter(np.zeros(d), f"fd.b{i}")) for i in range(layers)]
        self.proj = init("fd.proj", 3 * d, d, (3 * d, d))
        self.out_w = init("fd.out_w", d, 1, (d, 1))
        self.out_b = Parameter(np.zeros(1), "fd.out_b")

    @property
    def embedding_dim(self) -> int:
        return 3 * self.dim

    def parameters(self) -> list[Parameter]:
        ps = [self.rel_emb]
        for w, b in self.enc:
            ps += [w, b]
        for w, b in self.dec:
            ps += [w, b]
        ps += [self.proj, self.out_w, self.out_b]
        return ps

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        for p in self.parameters():
            if p.name not in state:
                raise KeyError(f"checkpoint lacks parameter {p.name!r}")
            if state[p.name].shape != p.data.shape:
                raise ValueError(f"{p.name}: checkpoint shape {state[p.name].shape} "
                                 f"!= model shape {p.data.shape}")
            p.data[...] = state[p.name]

    def copy(self) -> "ModelParams":
        other = ModelParams(self.num_relations, self.dim, self.layers, self.activation)
        other.load_state_dict(self.state_dict())
        return other


def _check_mask(graph: EnclosingSubgraph, mask):
    data = mask.data if isinstance(mask, Tensor) else np.asarray(mask, dtype=np.float64)
    if data.shape != (graph.num_edges,):
        raise ValueError(f"mask has shape {data.shape}, graph has {graph.num_edges} edges")
    if data.size and (data.min() < 0.0 or data.max() > 1.0):
        raise ValueError("mask entries must lie in [0, 1]")


def _propagate(graph, r_e, mask_col, layers, act):
    """Run the layer stack; return final node attention and edge states."""
    idx = graph.index
    n = idx.num_nodes
    norm = ad.segment_sum(ad.take(mask_col, idx.inc_edge), idx.inc_node, n) + 1.0

    def attention(r):
        msg = ad.take(r * mask_col, idx.inc_edge)
        return ad.segment_sum(msg, idx.inc_node, n) / norm

    for w, b in layers:
        node = ad.concat([attention(r_e), idx.indicators])
        x = ad.concat([ad.take(node, idx.src), ad.take(node, idx.dst), r_e])
        r_e = act(x @ w + b)
    return attention(r_e), r_e


def encode(graph: EnclosingSubgraph, mask, params: ModelParams) -> Tensor:
    """Pattern embedding of ``graph`` under edge ``mask`` (width ``3 * dim``)."""
    _check_mask(graph, mask)
    mask_col = ad.reshape(ad.as_tensor(mask), (-1, 1))
    r_e = ad.take(params.rel_emb, graph.index.rel)
    att, _ = _propagate(graph, r_e, mask_col, params.enc, ACTIVATIONS[params.activation])
    return ad.concat([ad.max_(att, axis=0), ad.take(att, graph.head_idx),
                      ad.take(att, graph.tail_idx)])


def decode_mask(graph: EnclosingSubgraph, embedding, params: ModelParams) -> Tensor:
    """Per-edge weights in (0, 1) for ``graph`` given a pattern embedding."""
    embedding = ad.as_tensor(embedding)
    if embedding.shape != (params.embedding_dim,):
        raise ad.ShapeError(f"decode_mask: embedding shape {embedding.shape}, "
                            f"expected ({params.embedding_dim},)")
    r_e = ad.take(params.rel_emb, graph.index.rel) + embedding @ params.proj
    ones = ad.Tensor(np.ones((graph.num_edges, 1)))
    _, r_e = _propagate(graph, r_e, ones, params.dec, ACTIVATIONS[params.activation])
    logits = r_e @ params.out_w + params.out_b
    return ad.reshape(ad.sigmoid(logits), (-1,))


def ones_mask(graph: EnclosingSubgraph) -> np.ndarray:
    return np.ones(graph.num_edges)
