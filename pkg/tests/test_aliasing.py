import json
import logging
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aliaskg import aliasing
from aliaskg.aliasing import (AliasError, AliasSet, StaticProvider, TrigramHashProvider,
                              char_trigrams, encode_ar, load_embedding_file,
                              sample_ar_subgraphs, select_aliases)
from aliaskg.encoder import ModelParams, encode
from aliaskg.kg import KnowledgeGraph

from helpers import random_kg, write_lines


def named_kg(n_relations, texts=None, rows=()):
    return KnowledgeGraph([f"e{i}" for i in range(12)], [f"r{i}" for i in range(n_relations)],
                          list(rows), relation_texts=texts)


class TestSelect:
    def test_one_hot_ties_break_on_id(self):
        vecs = np.eye(5)
        vecs[3] = vecs[0]
        kg = named_kg(5)
        out = select_aliases(StaticProvider(vecs), kg, target=0, m=3)
        # r3 matches exactly; the rest tie at 0 and go in id order
        assert out.aliases == [3, 1, 2]
        assert out.scores == pytest.approx([1.0, 0.0, 0.0])

    def test_identical_vector_ranks_first(self):
        rng = np.random.default_rng(2)
        vecs = rng.normal(size=(6, 8))
        vecs[4] = vecs[1] * 3.0
        out = select_aliases(StaticProvider(vecs), named_kg(6), target=1, m=1)
        assert out.aliases == [4]

    def test_target_never_selected(self):
        vecs = np.ones((4, 3))
        out = select_aliases(StaticProvider(vecs), named_kg(4), target=2, m=10)
        assert out.aliases == [0, 1, 3]

    def test_zero_vector_scores_zero(self):
        vecs = np.array([[1.0, 0.0], [0.0, 0.0], [0.5, 0.5]])
        out = select_aliases(StaticProvider(vecs), named_kg(3), target=0, m=2)
        assert out.aliases == [2, 1] and out.scores[1] == 0.0

    def test_needs_two_relations(self):
        with pytest.raises(AliasError, match="no candidate aliases"):
            select_aliases(StaticProvider(np.ones((1, 3))), named_kg(1), 0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(3, 9), st.integers(1, 4))
    def test_invariant_to_global_scaling(self, seed, n, m):
        vecs = np.random.default_rng(seed).normal(size=(n, 6))
        kg = named_kg(n)
        a = select_aliases(StaticProvider(vecs), kg, 0, m)
        b = select_aliases(StaticProvider(vecs * 7.3), kg, 0, m)
        assert a.aliases == b.aliases

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_matches_argsort_oracle(self, seed):
        rng = np.random.default_rng(seed)
        vecs = rng.normal(size=(7, 5))
        unit = vecs / np.linalg.norm(vecs, axis=1, keepdims=True)
        sims = unit @ unit[2]
        sims[2] = -np.inf
        expect = list(np.argsort(-sims, kind="stable")[:3])
        assert select_aliases(StaticProvider(vecs), named_kg(7), 2, 3).aliases == expect


class TestTrigrams:
    def test_counts_by_hand(self):
        assert char_trigrams("Ab  c") == Counter({" ab": 1, "ab ": 1, "b c": 1, " c ": 1})
        assert char_trigrams("") == Counter()

    def test_vector_matches_hand_oracle(self):
        kg = named_kg(2, texts={0: "aaa", 1: "xy"})
        p = TrigramHashProvider(kg, width=64)
        tri = {" aa": 1, "aaa": 1, "aa ": 1}
        v = np.zeros(64)
        for t, c in tri.items():
            v[aliasing._bucket(t, 64)] += c
        np.testing.assert_allclose(p.vector(0), v / np.linalg.norm(v))
        assert np.linalg.norm(p.vector(1)) == pytest.approx(1.0)

    def test_case_and_spacing_insensitive(self):
        kg = named_kg(2, texts={0: "Has  Alias", 1: "has alias"})
        p = TrigramHashProvider(kg)
        np.testing.assert_array_equal(p.vector(0), p.vector(1))

    def test_falls_back_to_relation_name(self):
        kg = named_kg(2)
        p = TrigramHashProvider(kg, width=32)
        np.testing.assert_array_equal(p.vector(1), p.embed_text("r1"))


class TestEmbeddingFile:
    def _kg(self):
        return named_kg(2)

    def test_roundtrip(self, tmp_path):
        path = write_lines(tmp_path / "e.jsonl", [
            json.dumps({"relation": "r1", "vector": [0.0, 2.0]}),
            json.dumps({"relation": "r0", "vector": [1.0, 0.0]})])
        prov = load_embedding_file(path, self._kg())
        np.testing.assert_array_equal(prov.matrix([0, 1]), [[1.0, 0.0], [0.0, 2.0]])

    @pytest.mark.parametrize("lines,match", [
        (['{"relation": "r0", "vector": [1, 2]}', '{"relation": "r1", "vector": [1]}'], "width"),
        (['{"relation": "r0", "vector": [1, 2]}'], "missing"),
        (['not json'], ":1: bad embedding"),
        (['{"relation": "r0", "vector": [1, NaN]}'], "finite"),
    ])
    def test_errors(self, tmp_path, lines, match):
        path = write_lines(tmp_path / "e.jsonl", lines)
        with pytest.raises(ValueError, match=match):
            load_embedding_file(path, self._kg())

    def test_unknown_relation_warns(self, tmp_path, caplog):
        path = write_lines(tmp_path / "e.jsonl", [
            json.dumps({"relation": r, "vector": [1.0]}) for r in ("r0", "r1", "zz")])
        with caplog.at_level(logging.WARNING):
            load_embedding_file(path, self._kg())
        assert "zz" in caplog.text


class TestSampling:
    def test_k_per_alias_and_exclusion(self):
        kg = random_kg(0, n_entities=15, n_relations=3, n_triplets=60)
        aset = AliasSet(0, [1, 2], [0.9, 0.8])
        groups = sample_ar_subgraphs(kg, aset, k=4, seed=3)
        assert [len(g) for g in groups] == [4, 4]
        for alias, group in zip(aset.aliases, groups):
            for g in group:
                h, t = g.nodes[g.head_idx], g.nodes[g.tail_idx]
                assert kg.has_triplet(h, alias, t)
                assert (g.head_idx, alias, g.tail_idx) not in g.edges

    def test_with_replacement_when_short(self):
        kg = named_kg(2, rows=[(0, 0, 1), (1, 1, 2), (2, 0, 3)])
        (group,) = sample_ar_subgraphs(kg, AliasSet(0, [1], [1.0]), k=5)
        assert len(group) == 5
        assert all(g.nodes[:2] == (1, 2) for g in group)

    def test_deterministic(self):
        kg = random_kg(1, n_triplets=80)
        aset = AliasSet(0, [1, 3], [0.5, 0.4])
        assert sample_ar_subgraphs(kg, aset, seed=9) == sample_ar_subgraphs(kg, aset, seed=9)

    def test_empty_alias_skipped(self, caplog):
        kg = named_kg(3, rows=[(0, 0, 1), (1, 2, 2)])
        with caplog.at_level(logging.WARNING):
            groups = sample_ar_subgraphs(kg, AliasSet(0, [1, 2], [1.0, 0.5]), k=2)
        assert len(groups) == 1 and "r1" in caplog.text

    def test_no_evidence(self):
        kg = named_kg(3, rows=[(0, 0, 1)])
        with pytest.raises(AliasError, match="no AR evidence"):
            sample_ar_subgraphs(kg, AliasSet(0, [1, 2], [1.0, 0.5]))


def test_encode_ar_is_mean_over_all_subgraphs():
    kg = random_kg(2, n_entities=15, n_relations=3, n_triplets=60)
    groups = sample_ar_subgraphs(kg, AliasSet(0, [1, 2], [1.0, 1.0]), k=3)
    fg = ModelParams(3, dim=5, layers=2, seed=4)
    flat = [g for grp in groups for g in grp]
    assert len(flat) == 6
    manual = sum(encode(g, np.ones(g.num_edges), fg).data for g in flat) / 6
    np.testing.assert_allclose(encode_ar(groups, fg), manual, rtol=1e-13)
    np.testing.assert_array_equal(encode_ar(groups, fg), encode_ar(flat, fg))
    with pytest.raises(AliasError):
        encode_ar([], fg)


def test_family_relations_by_hand():
    texts = {0: "father of", 1: "mother of", 2: "color of", 3: "parent of"}
    # unhashed trigram cosines with "father of": mother 6/9, color 3/sqrt(72), parent 2/9
    base = char_trigrams(texts[0])
    for r, want in ((1, 6 / 9), (2, 3 / np.sqrt(72)), (3, 2 / 9)):
        other = char_trigrams(texts[r])
        dot = sum(base[t] * other[t] for t in base)
        norms = np.sqrt(sum(v * v for v in base.values()) * sum(v * v for v in other.values()))
        assert dot / norms == pytest.approx(want)
    kg = named_kg(4, texts=texts)
    assert select_aliases(TrigramHashProvider(kg), kg, 0, m=2).aliases == [1, 2]
