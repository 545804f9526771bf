"""Lexical (BM25) and dense (cosine) similarity retrieval.

Both retrievers rank any corpus of documents keyed by id: code units,
text chunks, or anything else. The dense path consumes precomputed
embedding vectors; no encoder runs here.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .graph import CodeUnit

DEFAULT_K1 = 1.5
DEFAULT_B = 0.75
DEFAULT_TOP_K = 5

_WORD_RE = re.compile(r"[A-Za-z0-9_]+")
_CAMEL_RE = re.compile(r"[A-Z]+(?=[A-Z][a-z0-9])|[A-Z]?[a-z0-9]+|[A-Z]+")


def tokenize(text: str) -> list[str]:
    """Lowercased identifier-aware tokens.

    Each alphanumeric word contributes its lowercased compound form plus
    its snake_case and camelCase subtokens; the compound is dropped when
    it equals its only subtoken, so plain words appear once.
    """
    tokens: list[str] = []
    for match in _WORD_RE.finditer(text):
        word = match.group()
        subtokens = [
            piece.lower()
            for part in word.split("_")
            for piece in _CAMEL_RE.findall(part)
        ]
        compound = word.lower()
        if subtokens == [compound]:
            tokens.append(compound)
        else:
            tokens.append(compound)
            tokens.extend(subtokens)
    return tokens


def unit_document(unit: CodeUnit) -> str:
    """Document text indexed for a code unit."""
    parts = [unit.signature]
    if unit.docstring:
        parts.append(unit.docstring)
    parts.append(unit.body_text)
    return "\n".join(parts)


@dataclass(frozen=True)
class Bm25Params:
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B

    def __post_init__(self) -> None:
        if self.k1 <= 0:
            raise ValueError(f"k1 must be positive, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must lie in [0, 1], got {self.b}")


@dataclass(frozen=True)
class RankedHit:
    doc_id: str
    score: float
    rank: int


class Bm25Index:
    """Inverted index storing term frequencies and document lengths.

    Read-only after construction; safe to query from multiple threads.
    """

    def __init__(
        self,
        token_streams: Mapping[str, Sequence[str]]
        | Iterable[tuple[str, Sequence[str]]],
    ) -> None:
        if isinstance(token_streams, Mapping):
            items = list(token_streams.items())
        else:
            items = list(token_streams)
        self.doc_ids: tuple[str, ...] = tuple(doc_id for doc_id, _ in items)
        if len(self.doc_ids) != len(set(self.doc_ids)):
            raise ValueError("duplicate document ids")
        self.doc_lengths: dict[str, int] = {}
        self.postings: dict[str, dict[str, int]] = {}
        for doc_id, tokens in items:
            self.doc_lengths[doc_id] = len(tokens)
            for token in tokens:
                bucket = self.postings.setdefault(token, {})
                bucket[doc_id] = bucket.get(doc_id, 0) + 1
        self.doc_count: int = len(self.doc_ids)
        total = sum(self.doc_lengths.values())
        self.avgdl: float = total / self.doc_count if self.doc_count else 0.0

    @classmethod
    def from_documents(cls, documents: Mapping[str, str]) -> "Bm25Index":
        return cls({doc_id: tokenize(text) for doc_id, text in documents.items()})

    @classmethod
    def from_units(cls, units: Iterable[CodeUnit]) -> "Bm25Index":
        return cls.from_documents({unit.id: unit_document(unit) for unit in units})

    def idf(self, term: str) -> float:
        """Smoothed inverse document frequency, never negative."""
        n_t = len(self.postings.get(term, ()))
        return math.log((self.doc_count - n_t + 0.5) / (n_t + 0.5) + 1.0)

    def term_frequency(self, term: str, doc_id: str) -> int:
        return self.postings.get(term, {}).get(doc_id, 0)


def bm25_score(
    index: Bm25Index, params: Bm25Params, query_tokens: Sequence[str], doc_id: str
) -> float:
    """Sum over query terms of IDF-weighted, length-normalized term
    frequency saturation."""
    if doc_id not in index.doc_lengths:
        raise KeyError(f"unknown document: {doc_id}")
    doc_len = index.doc_lengths[doc_id]
    norm = 1.0 - params.b + params.b * (doc_len / index.avgdl if index.avgdl else 0.0)
    score = 0.0
    for term in query_tokens:
        tf = index.term_frequency(term, doc_id)
        if tf == 0:
            continue
        score += index.idf(term) * tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
    return score


def bm25_topk(
    index: Bm25Index,
    params: Bm25Params,
    query_text: str,
    k: int = DEFAULT_TOP_K,
    exclude: frozenset[str] | set[str] = frozenset(),
) -> list[RankedHit]:
    """Top-k documents by score, ties broken by ascending doc id.

    Documents sharing no term with the query are excluded, as are ids in
    ``exclude`` (used to keep an anchor out of its own results).
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    query_tokens = tokenize(query_text)
    accumulator: dict[str, float] = {}
    # A term repeated in the query contributes once per occurrence, the
    # same as summing bm25_score over every document.
    for term in query_tokens:
        for doc_id in index.postings.get(term, {}):
            if doc_id in exclude:
                continue
            accumulator[doc_id] = accumulator.get(doc_id, 0.0) + _term_contribution(
                index, params, term, doc_id
            )
    ranked = sorted(accumulator.items(), key=lambda item: (-item[1], item[0]))[:k]
    return [
        RankedHit(doc_id=doc_id, score=score, rank=rank)
        for rank, (doc_id, score) in enumerate(ranked, start=1)
    ]


def _term_contribution(
    index: Bm25Index, params: Bm25Params, term: str, doc_id: str
) -> float:
    tf = index.term_frequency(term, doc_id)
    doc_len = index.doc_lengths[doc_id]
    norm = 1.0 - params.b + params.b * (doc_len / index.avgdl if index.avgdl else 0.0)
    return index.idf(term) * tf * (params.k1 + 1.0) / (tf + params.k1 * norm)


def cosine_rank(
    vectors: Mapping[str, Sequence[float]],
    query_vector: Sequence[float],
    k: int = DEFAULT_TOP_K,
) -> list[RankedHit]:
    """Rank documents by cosine similarity to the query vector."""
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    query = np.asarray(query_vector, dtype=np.float64)
    if query.ndim != 1:
        raise ValueError("query vector must be one-dimensional")
    query_norm = np.linalg.norm(query)
    if query_norm == 0.0:
        raise ValueError("query vector has zero norm")
    if not vectors:
        return []
    doc_ids = list(vectors)
    matrix = np.asarray([vectors[doc_id] for doc_id in doc_ids], dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != query.shape[0]:
        raise ValueError("vector dimensions do not match the query")
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0.0):
        zero = doc_ids[int(np.argmin(norms))]
        raise ValueError(f"zero-norm vector for document {zero}")
    similarities = (matrix @ query) / (norms * query_norm)
    order = sorted(
        range(len(doc_ids)), key=lambda i: (-float(similarities[i]), doc_ids[i])
    )[:k]
    return [
        RankedHit(doc_id=doc_ids[i], score=float(similarities[i]), rank=rank)
        for rank, i in enumerate(order, start=1)
    ]


def save_embeddings(path: str | Path, vectors: Mapping[str, Sequence[float]]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for doc_id, vector in vectors.items():
            record = {"doc_id": doc_id, "vector": [float(x) for x in vector]}
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_embeddings(path: str | Path) -> dict[str, list[float]]:
    vectors: dict[str, list[float]] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            vectors[record["doc_id"]] = [float(x) for x in record["vector"]]
    return vectors
