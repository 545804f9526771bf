"""Command-line entry point.

Subcommands cover the whole pipeline: index a repository (units or
chunks), build the dependency dataset, tune the decision threshold,
retrieve contexts in any mode, evaluate a run, and benchmark retrieval
latency. Machine-readable output goes to standard out; logs go to
standard error. Exit codes: 0 success, 1 usage error, 2 runtime
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .chunking import (
    DEFAULT_CHUNK_SIZE,
    DEFAULT_OVERLAP,
    build_chunk_index,
    chunk_documents,
    save_chunk_index,
)
from .dar import (
    DEFAULT_THRESHOLD,
    DarConfig,
    dar_retrieve,
    default_grid,
    load_scored_pairs,
    tune_threshold,
)
from .evaluation import evaluate_run, latency_summary, load_gold_deps, load_solutions
from .extractor import DEFAULT_IGNORE_GLOBS, ExtractionConfig, build_graph
from .graph import ALL_KINDS, CodeGraph, UnitKind
from .hybrid import (
    DEFAULT_BUDGET,
    RetrievedContext,
    hydra_retrieve,
    load_contexts,
    render_prompt,
    save_contexts,
)
from .oracle import (
    Query,
    build_triplets,
    dataset_stats,
    query_for,
    save_triplets,
    split_and_balance,
)
from .scorers import (
    ConstantScorer,
    HeuristicScorer,
    OracleScorer,
    RandomScorer,
    Scorer,
    SubprocessScorer,
)
from .similarity import (
    DEFAULT_B,
    DEFAULT_K1,
    DEFAULT_TOP_K,
    Bm25Index,
    Bm25Params,
    bm25_topk,
    cosine_rank,
    load_embeddings,
    unit_document,
)

logger = logging.getLogger("repoctx")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

BUILTIN_SCORERS = ("heuristic", "oracle", "constant", "random")


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with code 1."""

    def error(self, message: str) -> "argparse.NoReturn":  # type: ignore[name-defined]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _grid_spec(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("grid must be start:stop:step")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"non-numeric grid bound: {text}") from exc
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError(f"invalid grid range: {text}")
    count = math.floor((stop - start) / step + 1e-9) + 1
    return [round(start + i * step, 10) for i in range(count)]


def _kinds_spec(text: str) -> frozenset[UnitKind]:
    kinds = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            kinds.add(UnitKind.parse(part))
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    if not kinds:
        raise argparse.ArgumentTypeError("at least one unit kind is required")
    return frozenset(kinds)


def _k_list_spec(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"non-integer k: {text}") from exc
    if not values or any(k < 1 for k in values):
        raise argparse.ArgumentTypeError("k values must be positive integers")
    return values


def _require_inputs(*paths: str | None) -> None:
    for path in paths:
        if path is not None and not Path(path).exists():
            raise FileNotFoundError(f"input file not found: {path}")


def load_tasks(path: str | Path) -> list[dict]:
    """Task list: one JSON object per line with anchor_id and an
    optional query_text override."""
    tasks: list[dict] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if "anchor_id" not in record:
                raise ValueError(f"{path}:{line_number}: task lacks anchor_id")
            tasks.append(record)
    return tasks


def load_any_index(path: str | Path) -> tuple[str, CodeGraph | dict]:
    """Load either a unit graph or a chunk index, reporting which."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if "units" in payload:
        return "units", CodeGraph.from_dict(payload)
    if "chunks" in payload:
        return "chunks", payload
    raise ValueError(f"not a recognized index file: {path}")


class _LockedScorer(Scorer):
    """Serializes access to a scorer shared across worker threads."""

    def __init__(self, inner: Scorer) -> None:
        super().__init__()
        self._inner = inner
        self._lock = threading.Lock()

    def score(self, requests):  # type: ignore[override]
        with self._lock:
            return self._inner.score(requests)

    def _score_batch(self, requests):
        raise NotImplementedError("delegated to the wrapped scorer")

    @property
    def pairs_scored(self) -> int:  # type: ignore[override]
        return self._inner.pairs_scored

    @pairs_scored.setter
    def pairs_scored(self, value: int) -> None:
        pass

    def close(self) -> None:
        self._inner.close()


def make_scorer(args: argparse.Namespace, graph: CodeGraph | None) -> Scorer:
    if getattr(args, "scorer_cmd", None):
        return SubprocessScorer(args.scorer_cmd, batch_size=args.scorer_batch_size)
    name = getattr(args, "scorer", "heuristic")
    if name == "heuristic":
        return HeuristicScorer()
    if name == "oracle":
        if graph is None:
            raise ValueError("the oracle scorer needs a unit index")
        return OracleScorer(graph)
    if name == "constant":
        return ConstantScorer()
    if name == "random":
        return RandomScorer(seed=args.seed)
    raise ValueError(f"unknown scorer: {name}")


def _task_query(graph: CodeGraph | None, task: dict, full_text: bool) -> Query:
    anchor_id = task["anchor_id"]
    if "query_text" in task:
        return Query(anchor_id=anchor_id, text=task["query_text"])
    if graph is None:
        raise ValueError(f"task {anchor_id} needs query_text with a chunk index")
    if full_text:
        unit = graph.lookup(anchor_id)
        if unit is None:
            raise KeyError(f"unknown unit: {anchor_id}")
        return Query(anchor_id=anchor_id, text=unit_document(unit))
    return query_for(graph, anchor_id)


def _chunk_prompt(hits, documents: dict[str, str], task_statement: str) -> str:
    sections = []
    if hits:
        blocks = "\n\n".join(
            f"# {hit.doc_id.split('::', 1)[0]}\n{documents[hit.doc_id]}" for hit in hits
        )
        sections.append(f"# Similar code\n{blocks}")
    sections.append(task_statement)
    return "\n\n".join(sections)


def cmd_index(args: argparse.Namespace) -> int:
    ignore_globs = DEFAULT_IGNORE_GLOBS + tuple(args.ignore)
    config = ExtractionConfig(ignore_globs=ignore_globs, jobs=args.jobs)
    if args.mode == "units":
        graph = build_graph(args.repo_root, config)
        graph.save(args.out)
        logger.info(
            "indexed %d files, %d units, %d import edges -> %s",
            len(graph.files),
            len(graph),
            len(graph.import_edges),
            args.out,
        )
    else:
        index = build_chunk_index(args.repo_root, args.chunk_size, args.overlap, config)
        save_chunk_index(index, args.out)
        logger.info(
            "chunked %d files into %d chunks -> %s",
            len(index["files"]),
            len(index["chunks"]),
            args.out,
        )
    return EXIT_OK


def cmd_build_dataset(args: argparse.Namespace) -> int:
    _require_inputs(args.index)
    graph = CodeGraph.load(args.index)
    triplets = build_triplets(graph, args.kinds, not args.no_methods)
    save_triplets(args.out, triplets)
    logger.info("wrote %d triplets -> %s", len(triplets), args.out)
    stats: dict = {"triplets": len(triplets)}
    if args.split_out:
        split = split_and_balance(triplets, args.seed)
        out_dir = Path(args.split_out)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name in ("train", "validation", "test"):
            save_triplets(out_dir / f"{name}.jsonl", getattr(split, name))
        stats = dataset_stats(split)
        (out_dir / "stats.json").write_text(
            json.dumps(stats, indent=2) + "\n", encoding="utf-8"
        )
        logger.info("wrote splits -> %s", out_dir)
    print(json.dumps(stats, indent=2))
    return EXIT_OK


def cmd_tune_threshold(args: argparse.Namespace) -> int:
    _require_inputs(args.scored)
    pairs = load_scored_pairs(args.scored)
    grid = args.grid if args.grid is not None else default_grid()
    best, points = tune_threshold(pairs, grid)
    result = {
        "threshold": best,
        "points": [
            {
                "threshold": p.threshold,
                "recall_1": p.recall_1,
                "recall_0": p.recall_0,
                "alpha": p.alpha,
                "brp": p.brp,
            }
            for p in points
        ],
    }
    print(json.dumps(result, indent=2))
    return EXIT_OK


def _retrieve_contexts(args: argparse.Namespace) -> list[RetrievedContext]:
    kind, index = load_any_index(args.index)
    graph = index if kind == "units" else None
    tasks = load_tasks(args.tasks)
    params = Bm25Params(k1=args.k1, b=args.b)

    if args.mode in ("dar", "hydra"):
        if graph is None:
            raise ValueError(f"mode {args.mode} requires a unit index")
        scorer: Scorer = _LockedScorer(make_scorer(args, graph))
        dar_config = DarConfig(
            scorer=scorer,
            threshold=args.threshold,
            kinds=args.kinds,
            include_methods=not args.no_methods,
        )
    if args.mode == "hydra":
        bm25_index = Bm25Index.from_units(iter(graph))
    elif args.mode == "bm25":
        if graph is not None:
            bm25_index = Bm25Index.from_units(iter(graph))
        else:
            documents = chunk_documents(index)
            bm25_index = Bm25Index.from_documents(documents)
    elif args.mode == "dense":
        _require_inputs(args.embeddings, args.query_embeddings)
        if args.embeddings is None or args.query_embeddings is None:
            raise ValueError("dense mode requires --embeddings and --query-embeddings")
        doc_vectors = load_embeddings(args.embeddings)
        query_vectors = load_embeddings(args.query_embeddings)

    def run_task(task: dict) -> RetrievedContext:
        query = _task_query(graph, task, args.query_full_text)
        if args.mode == "hydra":
            return hydra_retrieve(
                graph,
                bm25_index,
                query,
                dar_config,
                k_sim=args.k,
                bm25_params=params,
                budget=args.budget,
            )
        started = time.perf_counter()
        if args.mode == "dar":
            dependencies = tuple(dar_retrieve(graph, query.anchor_id, dar_config))
            elapsed = (time.perf_counter() - started) * 1000.0
            context = RetrievedContext(
                anchor_id=query.anchor_id,
                dependency_units=dependencies,
                exemplar_hits=(),
                rendered_prompt="",
                retrieval_latency_ms=elapsed,
            )
            return replace(
                context, rendered_prompt=render_prompt(context, graph, args.budget)
            )
        if args.mode == "bm25":
            hits = tuple(
                bm25_topk(
                    bm25_index, params, query.text, k=args.k, exclude={query.anchor_id}
                )
            )
            elapsed = (time.perf_counter() - started) * 1000.0
            context = RetrievedContext(
                anchor_id=query.anchor_id,
                dependency_units=(),
                exemplar_hits=hits,
                rendered_prompt="",
                retrieval_latency_ms=elapsed,
            )
            if graph is not None:
                prompt = render_prompt(context, graph, args.budget)
            else:
                prompt = _chunk_prompt(hits, documents, query.text)
            return replace(context, rendered_prompt=prompt)
        if args.mode == "dense":
            if query.anchor_id not in query_vectors:
                raise KeyError(f"no query embedding for {query.anchor_id}")
            corpus = {
                doc_id: vector
                for doc_id, vector in doc_vectors.items()
                if doc_id != query.anchor_id
            }
            hits = tuple(cosine_rank(corpus, query_vectors[query.anchor_id], k=args.k))
            elapsed = (time.perf_counter() - started) * 1000.0
            context = RetrievedContext(
                anchor_id=query.anchor_id,
                dependency_units=(),
                exemplar_hits=hits,
                rendered_prompt="",
                retrieval_latency_ms=elapsed,
            )
            if graph is not None and all(
                graph.lookup(hit.doc_id) is not None for hit in hits
            ):
                context = replace(
                    context, rendered_prompt=render_prompt(context, graph, args.budget)
                )
            return context
        raise ValueError(f"unknown mode: {args.mode}")

    try:
        if args.jobs > 1:
            with ThreadPoolExecutor(max_workers=args.jobs) as pool:
                contexts = list(pool.map(run_task, tasks))
        else:
            contexts = [run_task(task) for task in tasks]
    finally:
        if args.mode in ("dar", "hydra"):
            scorer.close()

    if args.zero_latency:
        contexts = [replace(c, retrieval_latency_ms=0.0) for c in contexts]
    return contexts


def cmd_retrieve(args: argparse.Namespace) -> int:
    _require_inputs(args.index, args.tasks)
    contexts = _retrieve_contexts(args)
    save_contexts(args.out, contexts)
    logger.info("wrote %d contexts -> %s", len(contexts), args.out)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    _require_inputs(args.index, args.tasks, args.solutions, args.gold_deps)
    graph = CodeGraph.load(args.index)
    contexts = load_contexts(args.tasks)
    gold = load_gold_deps(args.gold_deps)
    solutions = load_solutions(args.solutions) if args.solutions else []
    report = evaluate_run(
        graph,
        contexts,
        gold,
        solutions=solutions,
        k_values=args.k_values,
        dir_best_of_n=args.dir_best_of_n,
    )
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        logger.info("wrote report -> %s", args.out)
    else:
        print(text)
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    _require_inputs(args.index, args.tasks)
    mode = args.mode
    if mode == "chunks":
        args = argparse.Namespace(**{**vars(args), "mode": "bm25"})
    latencies: list[float] = []
    for _ in range(args.repeat):
        contexts = _retrieve_contexts(args)
        latencies.extend(c.retrieval_latency_ms for c in contexts)
    summary = latency_summary(latencies)
    print(
        json.dumps(
            {
                "mode": mode,
                "tasks": len(latencies),
                "latency_ms": summary.to_dict(),
            },
            indent=2,
        )
    )
    return EXIT_OK


def _add_common_retrieval_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--index", required=True, help="index JSON produced by `index`")
    parser.add_argument("--tasks", required=True, help="tasks JSON-Lines ({anchor_id, query_text?})")
    parser.add_argument("--k", type=int, default=DEFAULT_TOP_K, help="similarity hits per query")
    parser.add_argument("--k1", type=float, default=DEFAULT_K1, help="BM25 k1")
    parser.add_argument("--b", type=float, default=DEFAULT_B, help="BM25 b")
    parser.add_argument(
        "--threshold", type=float, default=DEFAULT_THRESHOLD, help="decision threshold"
    )
    parser.add_argument(
        "--kinds",
        type=_kinds_spec,
        default=ALL_KINDS,
        help="unit kinds in scope (comma-separated: function,class,variable)",
    )
    parser.add_argument(
        "--no-methods", action="store_true", help="exclude methods from the scope"
    )
    parser.add_argument(
        "--scorer",
        choices=BUILTIN_SCORERS,
        default="heuristic",
        help="built-in pairwise scorer",
    )
    parser.add_argument(
        "--scorer-cmd",
        default=None,
        help="external scorer command (JSON-Lines over stdin/stdout)",
    )
    parser.add_argument(
        "--scorer-batch-size", type=int, default=64, help="pairs per scorer batch"
    )
    parser.add_argument(
        "--budget", type=int, default=DEFAULT_BUDGET, help="prompt character budget"
    )
    parser.add_argument(
        "--embeddings", default=None, help="document embeddings JSON-Lines (dense mode)"
    )
    parser.add_argument(
        "--query-embeddings", default=None, help="query embeddings JSON-Lines (dense mode)"
    )
    parser.add_argument(
        "--query-full-text",
        action="store_true",
        help="use the anchor's full text as the similarity query",
    )
    parser.add_argument(
        "--zero-latency",
        action="store_true",
        help="record zero latency for reproducible artifacts",
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="repoctx", description=__doc__)
    parser.add_argument("--version", action="version", version=f"repoctx {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    common.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    common.add_argument(
        "--jobs",
        type=int,
        default=max(1, os.cpu_count() or 1),
        help="worker threads for per-file and per-task work",
    )
    subparsers = parser.add_subparsers(dest="subcommand", parser_class=_Parser)

    def add_command(name: str, help_text: str) -> argparse.ArgumentParser:
        return subparsers.add_parser(name, help=help_text, parents=[common])

    p_index = add_command("index", "index a repository")
    p_index.add_argument("repo_root", help="repository directory")
    p_index.add_argument("--out", required=True, help="output index JSON path")
    p_index.add_argument(
        "--ignore",
        action="append",
        default=[],
        metavar="GLOB",
        help="extra ignore pattern (repeatable)",
    )
    p_index.add_argument("--mode", choices=("units", "chunks"), default="units")
    p_index.add_argument("--chunk-size", type=int, default=DEFAULT_CHUNK_SIZE)
    p_index.add_argument("--overlap", type=float, default=DEFAULT_OVERLAP)
    p_index.set_defaults(handler=cmd_index)

    p_dataset = add_command("build-dataset", "mine dependency triplets")
    p_dataset.add_argument("index", help="unit index JSON")
    p_dataset.add_argument("--out", required=True, help="triplets JSON-Lines path")
    p_dataset.add_argument("--split-out", default=None, help="directory for splits")
    p_dataset.add_argument(
        "--kinds", type=_kinds_spec, default=ALL_KINDS, help="candidate kinds"
    )
    p_dataset.add_argument("--no-methods", action="store_true")
    p_dataset.set_defaults(handler=cmd_build_dataset)

    p_tune = add_command("tune-threshold", "grid-search the threshold")
    p_tune.add_argument(
        "--scored", required=True, help="scored pairs JSON-Lines ({probability, label})"
    )
    p_tune.add_argument(
        "--grid",
        type=_grid_spec,
        default=None,
        metavar="START:STOP:STEP",
        help="threshold grid (default 0.15:0.5:0.05)",
    )
    p_tune.set_defaults(handler=cmd_tune_threshold)

    p_retrieve = add_command("retrieve", "retrieve contexts for tasks")
    p_retrieve.add_argument(
        "--mode", choices=("bm25", "dense", "dar", "hydra"), required=True
    )
    _add_common_retrieval_flags(p_retrieve)
    p_retrieve.add_argument("--out", required=True, help="contexts JSON-Lines path")
    p_retrieve.set_defaults(handler=cmd_retrieve)

    p_eval = add_command("evaluate", "score a retrieval run")
    p_eval.add_argument("--index", required=True, help="unit index JSON")
    p_eval.add_argument(
        "--tasks", required=True, help="retrieval contexts JSON-Lines (one per task)"
    )
    p_eval.add_argument("--solutions", default=None, help="solutions JSON-Lines")
    p_eval.add_argument("--gold-deps", required=True, help="gold dependencies JSON")
    p_eval.add_argument("--out", default=None, help="report path (default: stdout)")
    p_eval.add_argument(
        "--k-values", type=_k_list_spec, default=(1,), help="Pass@k values, comma-separated"
    )
    p_eval.add_argument("--dir-best-of-n", action="store_true")
    p_eval.set_defaults(handler=cmd_evaluate)

    p_bench = add_command("bench", "measure retrieval latency")
    p_bench.add_argument(
        "--mode", choices=("hydra", "bm25", "dar", "chunks"), required=True
    )
    _add_common_retrieval_flags(p_bench)
    p_bench.add_argument("--repeat", type=int, default=1, help="passes over the tasks")
    p_bench.set_defaults(handler=cmd_bench)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    verbose = getattr(args, "verbose", False)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handler: Callable[[argparse.Namespace], int] | None = getattr(args, "handler", None)
    if handler is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return handler(args)
    except Exception as exc:  # noqa: BLE001 - boundary: report and set exit code
        logger.error("%s", exc)
        if verbose:
            logger.exception("traceback")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
