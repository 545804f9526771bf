"""Dependency-aware retrieval: scope, score, threshold.

Candidates come from the anchor's file and its one-hop imports only, so
per-query scoring cost is bounded by local scope size, not repository
size. A pairwise scorer assigns each candidate a probability of being a
true dependency; candidates with probability strictly above the
threshold are retained, in scope order.

The threshold is tuned on validation pairs with the balanced recall
penalty: brp = recall_1 - alpha * (recall_1 - recall_0)^2, where alpha =
1 / floor((n_pos + n_neg) / n_pos) scales the penalty by class
imbalance. The grid argmax wins; ties go to the smaller threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .graph import ALL_KINDS, CodeGraph, UnitKind
from .oracle import CandidateScope, Query, Triplet, candidate_scope, query_for
from .scorers import Scorer, ScoreRequest
from .similarity import unit_document

DEFAULT_THRESHOLD = 0.25
GRID_START = 0.15
GRID_STOP = 0.50
GRID_STEP = 0.05


@dataclass(frozen=True)
class ScoredCandidate:
    unit_id: str
    probability: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(
                f"probability must lie in [0, 1], got {self.probability}"
            )


@dataclass(frozen=True)
class DarConfig:
    scorer: Scorer
    threshold: float = DEFAULT_THRESHOLD
    kinds: frozenset[UnitKind] = field(default_factory=lambda: ALL_KINDS)
    include_methods: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold}")


@dataclass(frozen=True)
class BrpPoint:
    threshold: float
    recall_1: float
    recall_0: float
    alpha: float
    brp: float


def score_candidates(
    query: Query, scope: CandidateScope, graph: CodeGraph, scorer: Scorer
) -> list[ScoredCandidate]:
    """One probability per scope candidate, in scope order.

    The scorer sees the query text and the candidate's full document
    (signature, docstring, body); feature-based scorers additionally get
    file and name metadata.
    """
    if scope.anchor_id != query.anchor_id:
        raise ValueError("scope and query refer to different anchors")
    anchor = graph.lookup(query.anchor_id)
    anchor_file = anchor.span.file_path if anchor else ""
    requests = []
    for index, candidate_id in enumerate(scope.candidate_ids):
        unit = graph.lookup(candidate_id)
        if unit is None:
            raise KeyError(f"candidate not in graph: {candidate_id}")
        requests.append(
            ScoreRequest(
                pair_id=f"{index}:{candidate_id}",
                query_text=query.text,
                candidate_text=unit_document(unit),
                anchor_id=query.anchor_id,
                candidate_id=candidate_id,
                anchor_file=anchor_file,
                candidate_file=unit.span.file_path,
                candidate_name=unit.name,
                candidate_signature=unit.signature,
                candidate_docstring=unit.docstring or "",
            )
        )
    probabilities = scorer.score(requests)
    return [
        ScoredCandidate(unit_id=candidate_id, probability=probability)
        for candidate_id, probability in zip(scope.candidate_ids, probabilities)
    ]


def filter_by_threshold(
    candidates: Sequence[ScoredCandidate], threshold: float
) -> list[str]:
    """Ids with probability strictly above the threshold, input order."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    return [c.unit_id for c in candidates if c.probability > threshold]


def dar_retrieve(graph: CodeGraph, anchor_id: str, config: DarConfig) -> list[str]:
    """Retrieved dependency ids for one anchor."""
    scope = candidate_scope(graph, anchor_id, config.kinds, config.include_methods)
    query = query_for(graph, anchor_id)
    scored = score_candidates(query, scope, graph, config.scorer)
    return filter_by_threshold(scored, config.threshold)


def compute_alpha(n_pos: int, n_neg: int) -> float:
    """Penalty coefficient from class counts."""
    if n_pos < 1:
        raise ValueError("alpha requires at least one positive sample")
    return 1.0 / ((n_pos + n_neg) // n_pos)


def brp(recall_1: float, recall_0: float, alpha: float) -> float:
    return recall_1 - alpha * (recall_1 - recall_0) ** 2


def default_grid() -> list[float]:
    """Thresholds 0.15 through 0.50 in steps of 0.05."""
    count = round((GRID_STOP - GRID_START) / GRID_STEP) + 1
    return [round(GRID_START + GRID_STEP * i, 10) for i in range(count)]


def tune_threshold(
    pairs: Sequence[tuple[float, int]], grid: Sequence[float] | None = None
) -> tuple[float, list[BrpPoint]]:
    """Grid-search the decision threshold on scored validation pairs.

    Each pair is (predicted probability, gold label). Recall on each
    class is computed under the strict p > T rule; the returned
    threshold maximizes brp, with ties resolved toward the smaller T.
    """
    thresholds = list(grid) if grid is not None else default_grid()
    if not thresholds:
        raise ValueError("threshold grid is empty")
    n_pos = sum(1 for _, label in pairs if label == 1)
    n_neg = sum(1 for _, label in pairs if label != 1)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("tuning requires both classes in the gold labels")
    alpha = compute_alpha(n_pos, n_neg)

    points: list[BrpPoint] = []
    for threshold in thresholds:
        true_pos = sum(1 for p, label in pairs if label == 1 and p > threshold)
        true_neg = sum(1 for p, label in pairs if label != 1 and p <= threshold)
        recall_1 = true_pos / n_pos
        recall_0 = true_neg / n_neg
        points.append(
            BrpPoint(
                threshold=threshold,
                recall_1=recall_1,
                recall_0=recall_0,
                alpha=alpha,
                brp=brp(recall_1, recall_0, alpha),
            )
        )
    best = max(points, key=lambda point: (point.brp, -point.threshold))
    return best.threshold, points


def triplet_pairs(
    triplets: Iterable[Triplet], graph: CodeGraph, scorer: Scorer
) -> list[tuple[float, int]]:
    """Score every (anchor, candidate) pair of the given triplets.

    Expands each triplet into labeled pairs and runs the scorer once per
    anchor batch; used to produce the validation pairs that threshold
    tuning consumes.
    """
    pairs: list[tuple[float, int]] = []
    for triplet in triplets:
        candidate_ids = sorted(triplet.positives) + sorted(triplet.negatives)
        if not candidate_ids:
            continue
        scope = CandidateScope(
            anchor_id=triplet.query.anchor_id, candidate_ids=tuple(candidate_ids)
        )
        scored = score_candidates(triplet.query, scope, graph, scorer)
        for candidate in scored:
            label = 1 if candidate.unit_id in triplet.positives else 0
            pairs.append((candidate.probability, label))
    return pairs


def save_scored_pairs(path: str | Path, pairs: Iterable[tuple[float, int]]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for probability, label in pairs:
            record = {"probability": probability, "label": label}
            handle.write(json.dumps(record) + "\n")


def load_scored_pairs(path: str | Path) -> list[tuple[float, int]]:
    pairs: list[tuple[float, int]] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            pairs.append((float(record["probability"]), int(record["label"])))
    return pairs
