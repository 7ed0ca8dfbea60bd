"""Few-shot knowledge-graph completion from shared subgraph patterns and aliasing relations."""

__version__ = "0.1.0"
