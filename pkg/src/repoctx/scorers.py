"""Pairwise relevance scorers.

A scorer maps (query text, candidate text) pairs to probabilities of the
candidate being a true dependency. The subprocess scorer speaks a
JSON-Lines protocol so any trained classifier can attach; the built-in
scorers keep the pipeline runnable without one.

Every scorer counts the pairs it has scored in ``pairs_scored``; the
counter is what lets tests assert that retrieval cost scales with scope
size rather than repository size.
"""

from __future__ import annotations

import json
import logging
import math
import os
import queue
import random
import shlex
import subprocess
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

from .similarity import tokenize

logger = logging.getLogger(__name__)

TIMEOUT_ENV_VAR = "REPOCTX_SCORER_TIMEOUT"
DEFAULT_TIMEOUT_SECONDS = 30.0
DEFAULT_BATCH_SIZE = 64


class ScorerError(RuntimeError):
    """A scorer failed to produce probabilities for a batch."""


@dataclass(frozen=True)
class ScoreRequest:
    """One pair to score, with metadata for feature-based scorers.

    Only ``pair_id``, ``query_text``, and ``candidate_text`` cross the
    subprocess wire; the rest stays in-process.
    """

    pair_id: str
    query_text: str
    candidate_text: str
    anchor_id: str = ""
    candidate_id: str = ""
    anchor_file: str = ""
    candidate_file: str = ""
    candidate_name: str = ""
    candidate_signature: str = ""
    candidate_docstring: str = ""


class Scorer(ABC):
    """Base scorer with pair-count instrumentation."""

    def __init__(self) -> None:
        self.pairs_scored = 0

    def score(self, requests: Sequence[ScoreRequest]) -> list[float]:
        """Probabilities in request order; every value lies in [0, 1]."""
        self.pairs_scored += len(requests)
        if not requests:
            return []
        probabilities = self._score_batch(requests)
        if len(probabilities) != len(requests):
            raise ScorerError(
                f"scorer returned {len(probabilities)} probabilities "
                f"for {len(requests)} requests"
            )
        for request, probability in zip(requests, probabilities):
            if not 0.0 <= probability <= 1.0:
                raise ScorerError(
                    f"probability {probability} for pair {request.pair_id} "
                    "is outside [0, 1]"
                )
        return probabilities

    @abstractmethod
    def _score_batch(self, requests: Sequence[ScoreRequest]) -> list[float]:
        raise NotImplementedError

    def close(self) -> None:
        """Release any resources; safe to call more than once."""

    def __enter__(self) -> "Scorer":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


def _overlap(query_tokens: set[str], candidate_tokens: set[str]) -> float:
    """Fraction of candidate tokens also present in the query."""
    if not candidate_tokens:
        return 0.0
    return len(query_tokens & candidate_tokens) / len(candidate_tokens)


class HeuristicScorer(Scorer):
    """Logistic model over lexical-overlap features.

    Features: share of the candidate's name tokens, signature tokens,
    and docstring tokens that appear in the query text, plus a same-file
    indicator. The fixed weights favor name overlap, which is the
    strongest dependency signal in identifier-heavy code.
    """

    def __init__(
        self,
        bias: float = -2.0,
        name_weight: float = 3.0,
        signature_weight: float = 1.5,
        docstring_weight: float = 1.5,
        same_file_weight: float = 0.5,
    ) -> None:
        super().__init__()
        self.bias = bias
        self.name_weight = name_weight
        self.signature_weight = signature_weight
        self.docstring_weight = docstring_weight
        self.same_file_weight = same_file_weight

    def _score_batch(self, requests: Sequence[ScoreRequest]) -> list[float]:
        probabilities = []
        for request in requests:
            query_tokens = set(tokenize(request.query_text))
            name_overlap = _overlap(query_tokens, set(tokenize(request.candidate_name)))
            signature_overlap = _overlap(
                query_tokens, set(tokenize(request.candidate_signature))
            )
            docstring_overlap = _overlap(
                query_tokens, set(tokenize(request.candidate_docstring or ""))
            )
            same_file = 1.0 if request.anchor_file == request.candidate_file else 0.0
            logit = (
                self.bias
                + self.name_weight * name_overlap
                + self.signature_weight * signature_overlap
                + self.docstring_weight * docstring_overlap
                + self.same_file_weight * same_file
            )
            probabilities.append(1.0 / (1.0 + math.exp(-logit)))
        return probabilities


class OracleScorer(Scorer):
    """Perfect scorer backed by the static dependency analysis.

    Returns 1.0 for candidates the analysis marks as dependencies of the
    anchor and 0.0 otherwise. Used to validate the retrieval plumbing
    end to end.
    """

    def __init__(self, graph) -> None:
        super().__init__()
        from .oracle import DependencyAnalyzer, candidate_scope

        self._graph = graph
        self._analyzer = DependencyAnalyzer(graph)
        self._scope_fn = candidate_scope
        self._cache: dict[str, set[str]] = {}

    def _dependencies(self, anchor_id: str) -> set[str]:
        if anchor_id not in self._cache:
            scope = self._scope_fn(self._graph, anchor_id)
            self._cache[anchor_id] = self._analyzer.analyze(anchor_id, scope)
        return self._cache[anchor_id]

    def _score_batch(self, requests: Sequence[ScoreRequest]) -> list[float]:
        return [
            1.0 if request.candidate_id in self._dependencies(request.anchor_id) else 0.0
            for request in requests
        ]


class ConstantScorer(Scorer):
    def __init__(self, probability: float = 0.5) -> None:
        super().__init__()
        if not 0.0 <= probability <= 1.0:
            raise ValueError(f"probability must lie in [0, 1], got {probability}")
        self.probability = probability

    def _score_batch(self, requests: Sequence[ScoreRequest]) -> list[float]:
        return [self.probability] * len(requests)


class RandomScorer(Scorer):
    """Seeded uniform probabilities; the no-signal baseline."""

    def __init__(self, seed: int = 0) -> None:
        super().__init__()
        self._rng = random.Random(seed)

    def _score_batch(self, requests: Sequence[ScoreRequest]) -> list[float]:
        return [self._rng.random() for _ in requests]


def scorer_timeout_seconds() -> float:
    """Per-batch subprocess timeout, overridable via environment."""
    raw = os.environ.get(TIMEOUT_ENV_VAR)
    if raw is None:
        return DEFAULT_TIMEOUT_SECONDS
    try:
        value = float(raw)
    except ValueError:
        logger.warning(
            "ignoring invalid %s=%r, using %.0f s",
            TIMEOUT_ENV_VAR,
            raw,
            DEFAULT_TIMEOUT_SECONDS,
        )
        return DEFAULT_TIMEOUT_SECONDS
    return value if value > 0 else DEFAULT_TIMEOUT_SECONDS


class SubprocessScorer(Scorer):
    """Drives an external scorer process over JSON-Lines pipes.

    Each request line carries {id, query_text, candidate_text}; the
    process must answer one {id, probability} line per request, in any
    order. A batch that is not fully answered within the timeout fails
    with the missing pair ids named. One consumer drives the process at
    a time.
    """

    def __init__(
        self,
        command: str | Sequence[str],
        batch_size: int = DEFAULT_BATCH_SIZE,
        timeout: float | None = None,
    ) -> None:
        super().__init__()
        if batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {batch_size}")
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.batch_size = batch_size
        self.timeout = timeout if timeout is not None else scorer_timeout_seconds()
        self._lock = threading.Lock()
        self._process: subprocess.Popen | None = None
        self._responses: "queue.Queue[dict | None]" = queue.Queue()
        self._reader: threading.Thread | None = None

    def _ensure_process(self) -> subprocess.Popen:
        if self._process is None or self._process.poll() is not None:
            self._process = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
            self._responses = queue.Queue()
            self._reader = threading.Thread(
                target=self._read_loop, args=(self._process,), daemon=True
            )
            self._reader.start()
        return self._process

    def _read_loop(self, process: subprocess.Popen) -> None:
        assert process.stdout is not None
        for line in process.stdout:
            line = line.strip()
            if not line:
                continue
            try:
                self._responses.put(json.loads(line))
            except json.JSONDecodeError:
                self._responses.put({"malformed": line})
        self._responses.put(None)

    def _score_batch(self, requests: Sequence[ScoreRequest]) -> list[float]:
        with self._lock:
            results: dict[str, float] = {}
            for start in range(0, len(requests), self.batch_size):
                batch = requests[start : start + self.batch_size]
                results.update(self._exchange(batch))
        return [results[request.pair_id] for request in requests]

    def _exchange(self, batch: Sequence[ScoreRequest]) -> dict[str, float]:
        process = self._ensure_process()
        assert process.stdin is not None
        pending = {request.pair_id for request in batch}
        try:
            for request in batch:
                line = json.dumps(
                    {
                        "id": request.pair_id,
                        "query_text": request.query_text,
                        "candidate_text": request.candidate_text,
                    },
                    ensure_ascii=False,
                )
                process.stdin.write(line + "\n")
            process.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ScorerError(
                f"scorer process rejected batch of {len(batch)} pairs: {exc}"
            ) from exc

        results: dict[str, float] = {}
        while pending:
            try:
                response = self._responses.get(timeout=self.timeout)
            except queue.Empty:
                raise ScorerError(
                    f"scorer timed out after {self.timeout:.1f} s; "
                    f"unanswered pairs: {sorted(pending)}"
                ) from None
            if response is None:
                raise ScorerError(
                    f"scorer process exited with pairs unanswered: {sorted(pending)}"
                )
            if "malformed" in response:
                raise ScorerError(f"malformed scorer response: {response['malformed']!r}")
            pair_id = response.get("id")
            if pair_id not in pending:
                logger.warning("ignoring unexpected scorer response id %r", pair_id)
                continue
            try:
                results[pair_id] = float(response["probability"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ScorerError(
                    f"scorer response for pair {pair_id} lacks a numeric probability"
                ) from exc
            pending.discard(pair_id)
        return results

    def close(self) -> None:
        if self._process is not None:
            if self._process.stdin is not None:
                try:
                    self._process.stdin.close()
                except OSError:
                    pass
            try:
                self._process.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self._process.kill()
                self._process.wait()
            self._process = None
