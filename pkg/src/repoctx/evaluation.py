"""Evaluation metrics: retrieval quality, Pass@k, dependency invocation
rate, and latency summaries, plus the report builder that ties them to
retrieval outputs and solution files.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .graph import ID_SEPARATOR, CodeGraph, UnitKind
from .hybrid import RetrievedContext
from .oracle import DependencyAnalyzer, candidate_scope

PER_KIND_FIELDS = {
    UnitKind.FUNCTION: "frecall",
    UnitKind.CLASS: "crecall",
    UnitKind.VARIABLE: "vrecall",
}


@dataclass(frozen=True)
class RetrievalEval:
    """Precision, recall, and F1 against gold dependencies.

    Per-kind recalls are None when the gold set contains no unit of that
    kind; aggregation skips absent values instead of counting zeros.
    """

    precision: float
    recall: float
    f1: float
    frecall: float | None
    crecall: float | None
    vrecall: float | None


@dataclass(frozen=True)
class PassKInput:
    n: int
    c: int
    k: int

    def __post_init__(self) -> None:
        if not 0 <= self.c <= self.n:
            raise ValueError(f"need 0 <= c <= n, got c={self.c}, n={self.n}")
        if not 1 <= self.k <= self.n:
            raise ValueError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")


@dataclass(frozen=True)
class DirInput:
    invoked: frozenset[str]
    gold: frozenset[str]

    def __post_init__(self) -> None:
        if not self.gold:
            raise ValueError("invocation rate is undefined for an empty gold set")


@dataclass(frozen=True)
class LatencySummary:
    min: float
    max: float
    mean: float
    median: float

    def to_dict(self) -> dict:
        return {
            "min": self.min,
            "max": self.max,
            "mean": self.mean,
            "median": self.median,
        }


def _unit_kind(graph: CodeGraph, unit_id: str) -> UnitKind | None:
    unit = graph.lookup(unit_id)
    if unit is not None:
        return unit.kind
    tail = unit_id.rsplit(ID_SEPARATOR, 1)[-1]
    try:
        return UnitKind.parse(tail)
    except ValueError:
        return None


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def retrieval_eval(
    retrieved: set[str] | frozenset[str],
    gold: set[str] | frozenset[str],
    graph: CodeGraph,
) -> RetrievalEval:
    """Set-level scores of retrieved ids against gold ids."""
    if not gold:
        raise ValueError("retrieval scores are undefined for an empty gold set")
    hit = retrieved & gold
    precision = len(hit) / len(retrieved) if retrieved else 0.0
    recall = len(hit) / len(gold)
    per_kind: dict[str, float | None] = {}
    for kind, field_name in PER_KIND_FIELDS.items():
        gold_kind = {g for g in gold if _unit_kind(graph, g) is kind}
        if not gold_kind:
            per_kind[field_name] = None
        else:
            per_kind[field_name] = len(retrieved & gold_kind) / len(gold_kind)
    return RetrievalEval(
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        frecall=per_kind["frecall"],
        crecall=per_kind["crecall"],
        vrecall=per_kind["vrecall"],
    )


def pass_at_k(inp: PassKInput) -> float:
    """Unbiased estimate of the chance that at least one of k samples
    drawn from n passes, given c passing samples.

    Computed as 1 - prod_{i=0}^{k-1} (n-c-i)/(n-i), the stable product
    form of 1 - C(n-c, k)/C(n, k).
    """
    if inp.c == 0:
        return 0.0
    if inp.n - inp.c < inp.k:
        return 1.0
    product = 1.0
    for i in range(inp.k):
        product *= (inp.n - inp.c - i) / (inp.n - i)
    return 1.0 - product


def dependency_invocation_rate(inp: DirInput) -> float:
    """Share of gold dependencies actually referenced by a solution."""
    return len(inp.invoked & inp.gold) / len(inp.gold)


def latency_summary(samples: Sequence[float]) -> LatencySummary:
    """Order statistics of latency samples in milliseconds."""
    if not samples:
        raise ValueError("latency summary requires at least one sample")
    return LatencySummary(
        min=min(samples),
        max=max(samples),
        mean=statistics.fmean(samples),
        median=statistics.median(samples),
    )


def retrieved_ids(context: RetrievedContext) -> set[str]:
    """The id set a context's retrieval mode is judged on.

    Dependency modes fill dependency_units; pure similarity modes leave
    it empty, so their exemplar hits are what gets scored.
    """
    if context.dependency_units:
        return set(context.dependency_units)
    return {hit.doc_id for hit in context.exemplar_hits}


@dataclass(frozen=True)
class Solution:
    anchor_id: str
    sample_index: int
    body_text: str
    passed: bool


def load_solutions(path: str | Path) -> list[Solution]:
    solutions: list[Solution] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            solutions.append(
                Solution(
                    anchor_id=record["anchor_id"],
                    sample_index=int(record["sample_index"]),
                    body_text=record["body_text"],
                    passed=bool(record["passed"]),
                )
            )
    return solutions


def load_gold_deps(path: str | Path) -> dict[str, set[str]]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return {anchor: set(ids) for anchor, ids in payload.items()}


def evaluate_run(
    graph: CodeGraph,
    contexts: Sequence[RetrievedContext],
    gold_deps: Mapping[str, set[str]],
    solutions: Sequence[Solution] = (),
    k_values: Iterable[int] = (1,),
    dir_best_of_n: bool = False,
) -> dict:
    """Full evaluation report over one retrieval run.

    Retrieval scores are micro-averaged over tasks with non-empty gold;
    per-kind recalls aggregate only where that kind occurs in gold.
    Pass@k aggregates per-task estimates; the invocation rate analyzes
    each solution body against the task's candidate scope and averages
    per task (or takes the best sample with ``dir_best_of_n``).
    """
    analyzer = DependencyAnalyzer(graph)
    per_task: list[dict] = []

    hit_total = 0
    retrieved_total = 0
    gold_total = 0
    kind_hit: dict[str, int] = {f: 0 for f in PER_KIND_FIELDS.values()}
    kind_gold: dict[str, int] = {f: 0 for f in PER_KIND_FIELDS.values()}

    by_anchor: dict[str, list[Solution]] = {}
    for solution in solutions:
        by_anchor.setdefault(solution.anchor_id, []).append(solution)

    dir_values: list[float] = []
    parse_failures = 0
    pass_rates: dict[int, list[float]] = {k: [] for k in k_values}

    for context in contexts:
        anchor_id = context.anchor_id
        task_report: dict = {"anchor_id": anchor_id}
        retrieved = retrieved_ids(context)
        gold = set(gold_deps.get(anchor_id, set()))

        if gold:
            scores = retrieval_eval(retrieved, gold, graph)
            task_report["retrieval"] = {
                "precision": scores.precision,
                "recall": scores.recall,
                "f1": scores.f1,
                "frecall": scores.frecall,
                "crecall": scores.crecall,
                "vrecall": scores.vrecall,
            }
            hit_total += len(retrieved & gold)
            retrieved_total += len(retrieved)
            gold_total += len(gold)
            for kind, field_name in PER_KIND_FIELDS.items():
                gold_kind = {g for g in gold if _unit_kind(graph, g) is kind}
                kind_hit[field_name] += len(retrieved & gold_kind)
                kind_gold[field_name] += len(gold_kind)
        else:
            task_report["retrieval"] = None

        task_solutions = sorted(by_anchor.get(anchor_id, []), key=lambda s: s.sample_index)
        if task_solutions:
            n = len(task_solutions)
            c = sum(1 for s in task_solutions if s.passed)
            task_report["samples"] = n
            task_report["passed"] = c
            for k in pass_rates:
                if k <= n:
                    pass_rates[k].append(pass_at_k(PassKInput(n=n, c=c, k=k)))
            if gold:
                scope = candidate_scope(graph, anchor_id)
                sample_rates = []
                for solution in task_solutions:
                    invoked, parsed = analyzer.analyze_body(
                        anchor_id, scope, solution.body_text
                    )
                    if not parsed:
                        parse_failures += 1
                        sample_rates.append(0.0)
                        continue
                    sample_rates.append(
                        dependency_invocation_rate(
                            DirInput(invoked=frozenset(invoked), gold=frozenset(gold))
                        )
                    )
                task_dir = max(sample_rates) if dir_best_of_n else statistics.fmean(sample_rates)
                task_report["dir"] = task_dir
                dir_values.append(task_dir)

        per_task.append(task_report)

    micro_precision = hit_total / retrieved_total if retrieved_total else 0.0
    micro_recall = hit_total / gold_total if gold_total else 0.0
    report: dict = {
        "tasks": len(contexts),
        "retrieval": {
            "precision": micro_precision,
            "recall": micro_recall,
            "f1": f1_score(micro_precision, micro_recall),
        },
        "per_task": per_task,
    }
    for field_name in PER_KIND_FIELDS.values():
        if kind_gold[field_name]:
            report["retrieval"][field_name] = kind_hit[field_name] / kind_gold[field_name]
        else:
            report["retrieval"][field_name] = None

    if solutions:
        report["pass_at_k"] = {
            str(k): (statistics.fmean(rates) if rates else None)
            for k, rates in pass_rates.items()
        }
        report["dir"] = {
            "mean": statistics.fmean(dir_values) if dir_values else None,
            "best_of_n": dir_best_of_n,
            "parse_failures": parse_failures,
        }

    latencies = [context.retrieval_latency_ms for context in contexts]
    if latencies:
        report["latency_ms"] = latency_summary(latencies).to_dict()
    return report
