"""Hybrid context assembly: dependencies plus usage examples.

For one anchor, the dependency retriever supplies the units the target
function is predicted to need, and lexical search over the unit corpus
supplies similar code to imitate. The two lists are merged (dependency
copies win), rendered into a deterministic prompt, and written as one
JSON-Lines record per task.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

from .dar import DarConfig, filter_by_threshold, score_candidates
from .graph import CodeGraph, CodeUnit
from .oracle import Query, candidate_scope
from .similarity import DEFAULT_TOP_K, Bm25Index, Bm25Params, RankedHit, bm25_topk

DEFAULT_BUDGET = 16000

DEPENDENCIES_HEADER = "# Dependencies"
SIMILAR_HEADER = "# Similar code"


@dataclass(frozen=True)
class RetrievedContext:
    """Everything retrieved for one generation task."""

    anchor_id: str
    dependency_units: tuple[str, ...]
    exemplar_hits: tuple[RankedHit, ...]
    rendered_prompt: str
    retrieval_latency_ms: float

    def __post_init__(self) -> None:
        exemplar_ids = [hit.doc_id for hit in self.exemplar_hits]
        overlap = set(self.dependency_units) & set(exemplar_ids)
        if overlap:
            raise ValueError(f"units retrieved twice: {sorted(overlap)}")
        if self.anchor_id in self.dependency_units or self.anchor_id in exemplar_ids:
            raise ValueError(f"anchor {self.anchor_id} retrieved as its own context")

    def to_dict(self) -> dict:
        return {
            "anchor_id": self.anchor_id,
            "dependency_units": list(self.dependency_units),
            "exemplar_hits": [
                {"doc_id": hit.doc_id, "score": hit.score, "rank": hit.rank}
                for hit in self.exemplar_hits
            ],
            "rendered_prompt": self.rendered_prompt,
            "retrieval_latency_ms": self.retrieval_latency_ms,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RetrievedContext":
        return cls(
            anchor_id=payload["anchor_id"],
            dependency_units=tuple(payload["dependency_units"]),
            exemplar_hits=tuple(
                RankedHit(doc_id=h["doc_id"], score=h["score"], rank=h["rank"])
                for h in payload["exemplar_hits"]
            ),
            rendered_prompt=payload["rendered_prompt"],
            retrieval_latency_ms=payload["retrieval_latency_ms"],
        )


def task_text(graph: CodeGraph, anchor_id: str) -> str:
    """The task statement shown to a generator: signature + docstring."""
    unit = graph.lookup(anchor_id)
    if unit is None:
        raise KeyError(f"unknown unit: {anchor_id}")
    if unit.docstring:
        return f"{unit.signature}\n{unit.docstring}"
    return unit.signature


def hydra_retrieve(
    graph: CodeGraph,
    bm25_index: Bm25Index,
    query: Query,
    dar_config: DarConfig,
    k_sim: int = DEFAULT_TOP_K,
    bm25_params: Bm25Params | None = None,
    budget: int = DEFAULT_BUDGET,
) -> RetrievedContext:
    """Run both retrieval paths for one anchor and render the prompt.

    Exemplars that duplicate a retrieved dependency are dropped without
    backfilling, so the exemplar list may be shorter than k_sim. Latency
    covers retrieval only, not rendering.
    """
    params = bm25_params or Bm25Params()
    started = time.perf_counter()
    scope = candidate_scope(
        graph, query.anchor_id, dar_config.kinds, dar_config.include_methods
    )
    scored = score_candidates(query, scope, graph, dar_config.scorer)
    dependencies = tuple(filter_by_threshold(scored, dar_config.threshold))
    hits = bm25_topk(
        bm25_index, params, query.text, k=k_sim, exclude={query.anchor_id}
    )
    dependency_set = set(dependencies)
    exemplars = tuple(hit for hit in hits if hit.doc_id not in dependency_set)
    latency_ms = (time.perf_counter() - started) * 1000.0

    context = RetrievedContext(
        anchor_id=query.anchor_id,
        dependency_units=dependencies,
        exemplar_hits=exemplars,
        rendered_prompt="",
        retrieval_latency_ms=latency_ms,
    )
    return replace(context, rendered_prompt=render_prompt(context, graph, budget))


def _display_units(
    context: RetrievedContext, graph: CodeGraph
) -> tuple[list[CodeUnit], list[CodeUnit]]:
    """Units to emit per section, after supersumption dedup.

    A method whose parent class was also retrieved (in either list) is
    dropped; the class body already contains it.
    """
    retrieved_ids = set(context.dependency_units) | {
        hit.doc_id for hit in context.exemplar_hits
    }

    def emit(unit_ids: Iterable[str]) -> list[CodeUnit]:
        units = []
        for unit_id in unit_ids:
            unit = graph.lookup(unit_id)
            if unit is None:
                raise KeyError(f"retrieved unit not in graph: {unit_id}")
            if unit.parent_class and unit.parent_class in retrieved_ids:
                continue
            units.append(unit)
        return units

    return (
        emit(context.dependency_units),
        emit(hit.doc_id for hit in context.exemplar_hits),
    )


def _assemble(dep_units: list[CodeUnit], sim_units: list[CodeUnit], task: str) -> str:
    def block(unit: CodeUnit) -> str:
        return f"# {unit.span.file_path}\n{unit.body_text}"

    sections = []
    if dep_units:
        sections.append(
            DEPENDENCIES_HEADER + "\n" + "\n\n".join(block(u) for u in dep_units)
        )
    if sim_units:
        sections.append(
            SIMILAR_HEADER + "\n" + "\n\n".join(block(u) for u in sim_units)
        )
    sections.append(task)
    return "\n\n".join(sections)


def render_prompt(context: RetrievedContext, graph: CodeGraph, budget: int = DEFAULT_BUDGET) -> str:
    """Deterministic prompt: dependencies, then similar code, then task.

    Whole units are dropped to fit the character budget — exemplars from
    the lowest rank up, then dependencies from the end of the list; unit
    bodies are never cut. Empty sections are omitted, so with nothing
    retrievable the prompt is exactly the task text.
    """
    if budget <= 0:
        raise ValueError(f"budget must be positive, got {budget}")
    task = task_text(graph, context.anchor_id)
    if len(task) > budget:
        raise ValueError(
            f"budget {budget} cannot fit the task text ({len(task)} characters)"
        )
    dep_units, sim_units = _display_units(context, graph)
    while True:
        prompt = _assemble(dep_units, sim_units, task)
        if len(prompt) <= budget:
            return prompt
        if sim_units:
            sim_units.pop()
        elif dep_units:
            dep_units.pop()
        else:
            return task


def save_contexts(path: str | Path, contexts: Iterable[RetrievedContext]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for context in contexts:
            handle.write(json.dumps(context.to_dict(), ensure_ascii=False) + "\n")


def load_contexts(path: str | Path) -> list[RetrievedContext]:
    contexts: list[RetrievedContext] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                contexts.append(RetrievedContext.from_dict(json.loads(line)))
    return contexts
