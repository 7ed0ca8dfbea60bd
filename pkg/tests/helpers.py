import numpy as np

from aliaskg.kg import KnowledgeGraph
from aliaskg.subgraph import EnclosingSubgraph


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


def random_kg(seed, n_entities=20, n_relations=4, n_triplets=40):
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n_triplets):
        h, t = rng.choice(n_entities, size=2, replace=False)
        rows.append((int(h), int(rng.integers(n_relations)), int(t)))
    return KnowledgeGraph([f"e{i}" for i in range(n_entities)],
                          [f"r{i}" for i in range(n_relations)], rows)


def random_subgraph(rng, n_nodes=5, n_edges=5, n_relations=4):
    edges = set()
    while len(edges) < n_edges:
        a, b = rng.choice(n_nodes, size=2, replace=False)
        edges.add((int(a), int(rng.integers(n_relations)), int(b)))
    return EnclosingSubgraph(tuple(range(n_nodes)), tuple(sorted(edges)), 0, 1)
