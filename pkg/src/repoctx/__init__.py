"""Repository-aware context retrieval for code generation.

Indexes a Python repository into a graph of functions, classes, and
module variables, mines ground-truth dependency triplets by static
analysis, and retrieves generation context through a scope-restricted
relevance classifier combined with lexical usage-example search.
"""

from __future__ import annotations

__version__ = "0.1.0"

__all__ = ["__version__"]
