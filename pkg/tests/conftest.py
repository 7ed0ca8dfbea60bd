import pytest

from aliaskg.kg import KnowledgeGraph


@pytest.fixture
def toy_kg():
    return KnowledgeGraph(["A", "B", "C"], ["r1", "r2"], [(0, 0, 1), (1, 1, 2)])
