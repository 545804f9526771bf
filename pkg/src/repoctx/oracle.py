"""Ground-truth dependency analysis and training-triplet construction.

For an anchor function, the candidate scope is every unit of its own file
plus its one-hop imported files. Static analysis of the anchor's body
(plus decorators, defaults, and annotations) marks the scope candidates
it references; those become the positive set d+, the rest the negative
set d-, and (query, d+, d-) triplets feed the relevance classifier.

Resolution rules, applied to Load contexts only:
  - top-level functions match when their name is a call target
    (decorator references count as call targets);
  - classes match on any name reference (instantiation, attribute base,
    annotation, bare load);
  - variables match on any name load (augmented assignment reads count);
  - methods match on an attribute call whose name equals the method's
    unqualified name; the owner class sits in a scope file by
    construction, since candidates are drawn from scope files.

Names resolve through the file's import aliases. A name bound anywhere
inside the anchor (parameters, assignments, loop targets, nested
definitions) is shadowed and never matches, unless declared global or
nonlocal. Import statements route names instead of shadowing them.
Attribute chains that start from a module binding resolve to members of
the target file; chains that resolve nowhere are ignored.
"""

from __future__ import annotations

import ast
import json
import logging
import random
import textwrap
from collections import defaultdict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

from .extractor import ImportBindings, collect_import_bindings, parse_file
from .graph import ALL_KINDS, CodeGraph, CodeUnit, UnitKind

logger = logging.getLogger(__name__)

TRAIN_FRACTION = 0.8
VALIDATION_FRACTION = 0.1


@dataclass(frozen=True)
class Query:
    """Retrieval query for one anchor: signature plus docstring."""

    anchor_id: str
    text: str


@dataclass(frozen=True)
class CandidateScope:
    """Ordered retrieval candidates for one anchor.

    Own-file units come first in source order, then units of imported
    files in path order. The anchor itself is never a candidate.
    """

    anchor_id: str
    candidate_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.anchor_id in self.candidate_ids:
            raise ValueError(f"anchor {self.anchor_id} appears in its own scope")

    def __len__(self) -> int:
        return len(self.candidate_ids)


@dataclass(frozen=True)
class Triplet:
    """One training sample: query, true dependencies, scope remainder."""

    query: Query
    positives: frozenset[str]
    negatives: frozenset[str]

    def __post_init__(self) -> None:
        if self.positives & self.negatives:
            raise ValueError("positives and negatives overlap")
        if self.query.anchor_id in self.positives | self.negatives:
            raise ValueError("anchor appears in its own triplet")


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[Triplet, ...]
    validation: tuple[Triplet, ...]
    test: tuple[Triplet, ...]
    seed: int


def _require_function(graph: CodeGraph, anchor_id: str) -> CodeUnit:
    unit = graph.lookup(anchor_id)
    if unit is None:
        raise KeyError(f"unknown unit: {anchor_id}")
    if unit.kind is not UnitKind.FUNCTION:
        raise ValueError(f"anchor must be a Function unit, got {unit.kind.value}: {anchor_id}")
    return unit


def query_for(graph: CodeGraph, anchor_id: str) -> Query:
    """Query text: the signature, with the docstring appended if present."""
    unit = _require_function(graph, anchor_id)
    text = unit.signature
    if unit.docstring:
        text = f"{text}\n{unit.docstring}"
    return Query(anchor_id=anchor_id, text=text)


def candidate_scope(
    graph: CodeGraph,
    anchor_id: str,
    kinds: frozenset[UnitKind] | set[UnitKind] = ALL_KINDS,
    include_methods: bool = True,
) -> CandidateScope:
    """Units of the requested kinds from the anchor's file and its
    one-hop imports, minus the anchor.

    ``include_methods=False`` drops Function units that belong to a
    class, leaving only free functions among the Function candidates.
    """
    anchor = _require_function(graph, anchor_id)
    anchor_file = anchor.span.file_path
    files = [anchor_file] + sorted(graph.imported_files(anchor_file))
    candidates: list[str] = []
    for file_path in files:
        for unit in graph.units_in_file(file_path):
            if unit.id == anchor_id:
                continue
            if unit.kind not in kinds:
                continue
            if not include_methods and unit.kind is UnitKind.FUNCTION and unit.parent_class:
                continue
            candidates.append(unit.id)
    return CandidateScope(anchor_id=anchor_id, candidate_ids=tuple(candidates))


def _function_nodes(tree: ast.Module) -> dict[str, ast.AST]:
    """Map qualified function names to their def nodes (last one wins)."""
    nodes: dict[str, ast.AST] = {}

    def visit_class(node: ast.ClassDef, prefix: str) -> None:
        for stmt in node.body:
            if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
                nodes[f"{prefix}.{stmt.name}"] = stmt
            elif isinstance(stmt, ast.ClassDef):
                visit_class(stmt, f"{prefix}.{stmt.name}")

    for stmt in tree.body:
        if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
            nodes[stmt.name] = stmt
        elif isinstance(stmt, ast.ClassDef):
            visit_class(stmt, stmt.name)
    return nodes


def _collect_shadowed(root: ast.AST) -> set[str]:
    """Names bound anywhere inside a function definition.

    Covers parameters (of the root and of nested functions and lambdas),
    plain and augmented assignment targets, loop and with targets,
    comprehension variables, exception names, nested def and class
    names, and match-pattern captures. Names declared global or nonlocal
    are removed; import bindings are alias routes, not shadows.
    """
    bound: set[str] = set()
    declared: set[str] = set()

    def add_args(args: ast.arguments) -> None:
        for arg in (
            list(args.posonlyargs)
            + list(args.args)
            + list(args.kwonlyargs)
            + ([args.vararg] if args.vararg else [])
            + ([args.kwarg] if args.kwarg else [])
        ):
            bound.add(arg.arg)

    def visit(node: ast.AST) -> None:
        if isinstance(node, (ast.Global, ast.Nonlocal)):
            declared.update(node.names)
            return
        if isinstance(node, (ast.Import, ast.ImportFrom)):
            return
        if isinstance(node, ast.Name) and isinstance(node.ctx, (ast.Store, ast.Del)):
            bound.add(node.id)
        elif isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            if node is not root:
                bound.add(node.name)
            add_args(node.args)
        elif isinstance(node, ast.Lambda):
            add_args(node.args)
        elif isinstance(node, ast.ClassDef) and node is not root:
            bound.add(node.name)
        elif isinstance(node, ast.ExceptHandler) and node.name:
            bound.add(node.name)
        elif isinstance(node, (ast.MatchAs, ast.MatchStar)) and node.name:
            bound.add(node.name)
        elif isinstance(node, ast.MatchMapping) and node.rest:
            bound.add(node.rest)
        for child in ast.iter_child_nodes(node):
            visit(child)

    visit(root)
    return bound - declared


def _flatten_chain(node: ast.Attribute) -> list[str] | None:
    """[root, attr, ...] when the chain is names all the way down."""
    parts: list[str] = [node.attr]
    current: ast.expr = node.value
    while isinstance(current, ast.Attribute):
        parts.append(current.attr)
        current = current.value
    if isinstance(current, ast.Name):
        parts.append(current.id)
        return list(reversed(parts))
    return None


class _ReferenceMatcher:
    """Walks one function body and collects referenced scope candidates."""

    def __init__(
        self,
        anchor_file: str,
        candidates: Iterable[CodeUnit],
        bindings: ImportBindings,
        shadowed: set[str],
    ) -> None:
        self.anchor_file = anchor_file
        self.bindings = bindings
        self.shadowed = shadowed
        self.matches: set[str] = set()
        self.top_level: dict[tuple[str, str], list[CodeUnit]] = defaultdict(list)
        self.methods_by_name: dict[str, list[CodeUnit]] = defaultdict(list)
        for unit in candidates:
            if unit.kind is UnitKind.FUNCTION and unit.parent_class:
                self.methods_by_name[unit.name].append(unit)
            elif "." not in unit.qualified_name:
                self.top_level[(unit.span.file_path, unit.qualified_name)].append(unit)

    def run(self, node: ast.AST) -> set[str]:
        self._walk(node)
        return self.matches

    def _walk(self, node: ast.AST, call_target: bool = False) -> None:
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
            for decorator in node.decorator_list:
                self._walk(decorator, call_target=True)
            for child in ast.iter_child_nodes(node):
                if any(child is d for d in node.decorator_list):
                    continue
                self._walk(child)
            return
        if isinstance(node, ast.Call):
            self._walk(node.func, call_target=True)
            for arg in node.args:
                self._walk(arg)
            for keyword in node.keywords:
                self._walk(keyword.value)
            return
        if isinstance(node, ast.Attribute):
            self._attribute(node, call_target)
            return
        if isinstance(node, ast.Name):
            if isinstance(node.ctx, ast.Load):
                self._name(node.id, call_target)
            return
        if isinstance(node, ast.AugAssign):
            if isinstance(node.target, ast.Name):
                self._name(node.target.id, call_target=False)
            else:
                self._walk(node.target)
            self._walk(node.value)
            return
        for child in ast.iter_child_nodes(node):
            self._walk(child)

    def _name(self, name: str, call_target: bool) -> None:
        if name in self.shadowed:
            return
        alias = self.bindings.member_aliases.get(name)
        if alias is not None:
            target_file, member = alias
            self._match_top_level(target_file, member, call_target)
            return
        if name in self.bindings.module_aliases or name in self.bindings.dotted_modules:
            return
        for file_path in (self.anchor_file, *self.bindings.star_files):
            key = (file_path, name)
            if key in self.top_level:
                for unit in self.top_level[key]:
                    self._try_unit(unit, call_target)
                return

    def _attribute(self, node: ast.Attribute, call_target: bool) -> None:
        if not isinstance(node.ctx, ast.Load):
            self._walk(node.value)
            return
        chain = _flatten_chain(node)
        if chain is not None and chain[0] not in self.shadowed:
            resolved = self._resolve_module_prefix(chain)
            if resolved is not None:
                target_file, member_index = resolved
                if member_index < len(chain):
                    member = chain[member_index]
                    is_last = member_index == len(chain) - 1
                    self._match_top_level(target_file, member, call_target and is_last)
                    if not is_last and call_target:
                        self._method_call(chain[-1])
                return
        if call_target:
            self._method_call(node.attr)
        self._walk(node.value)

    def _resolve_module_prefix(self, chain: list[str]) -> tuple[str, int] | None:
        for end in range(len(chain), 0, -1):
            dotted = ".".join(chain[:end])
            target = self.bindings.dotted_modules.get(dotted)
            if target is None and end == 1:
                target = self.bindings.module_aliases.get(dotted)
            if target is not None:
                return target, end
        return None

    def _match_top_level(self, file_path: str, name: str, call_target: bool) -> None:
        for unit in self.top_level.get((file_path, name), []):
            self._try_unit(unit, call_target)

    def _try_unit(self, unit: CodeUnit, call_target: bool) -> None:
        if unit.kind is UnitKind.FUNCTION:
            if call_target:
                self.matches.add(unit.id)
        else:
            self.matches.add(unit.id)

    def _method_call(self, attr_name: str) -> None:
        for unit in self.methods_by_name.get(attr_name, []):
            self.matches.add(unit.id)


class DependencyAnalyzer:
    """Caches parsed files and alias tables for repeated analyses."""

    def __init__(self, graph: CodeGraph) -> None:
        self.graph = graph
        self._trees: dict[str, ast.Module | None] = {}
        self._bindings: dict[str, ImportBindings] = {}
        self._nodes: dict[str, dict[str, ast.AST]] = {}

    def _tree(self, file_path: str) -> ast.Module | None:
        if file_path not in self._trees:
            full = Path(self.graph.repo_root) / file_path
            try:
                parsed = parse_file(full, file_path)
            except OSError as exc:
                logger.warning("%s: source unavailable for analysis (%s)", file_path, exc)
                self._trees[file_path] = None
                return None
            self._trees[file_path] = parsed.syntax_tree
        return self._trees[file_path]

    def _file_bindings(self, file_path: str) -> ImportBindings:
        if file_path not in self._bindings:
            tree = self._tree(file_path)
            if tree is None:
                self._bindings[file_path] = ImportBindings({}, {}, {}, ())
            else:
                self._bindings[file_path] = collect_import_bindings(
                    tree, file_path, set(self.graph.files)
                )
        return self._bindings[file_path]

    def _def_node(self, file_path: str, qualified_name: str) -> ast.AST | None:
        if file_path not in self._nodes:
            tree = self._tree(file_path)
            self._nodes[file_path] = {} if tree is None else _function_nodes(tree)
        return self._nodes[file_path].get(qualified_name)

    def analyze(self, anchor_id: str, scope: CandidateScope) -> set[str]:
        if scope.anchor_id != anchor_id:
            raise ValueError("scope was computed for a different anchor")
        anchor = _require_function(self.graph, anchor_id)
        anchor_file = anchor.span.file_path
        node = self._def_node(anchor_file, anchor.qualified_name)
        if node is None:
            logger.warning("%s: definition not found for analysis", anchor_id)
            return set()
        candidates = [self.graph.lookup(cid) for cid in scope.candidate_ids]
        matcher = _ReferenceMatcher(
            anchor_file=anchor_file,
            candidates=[u for u in candidates if u is not None],
            bindings=self._file_bindings(anchor_file),
            shadowed=_collect_shadowed(node),
        )
        return matcher.run(node)

    def analyze_body(
        self, anchor_id: str, scope: CandidateScope, body_text: str
    ) -> tuple[set[str], bool]:
        """Analyze replacement source for the anchor (e.g. generated code).

        The text is parsed standalone and its first function definition
        is analyzed against the anchor's scope with the anchor file's
        import aliases. Returns (references, parsed); an unparseable or
        definition-free body yields (empty set, False).
        """
        anchor = _require_function(self.graph, anchor_id)
        anchor_file = anchor.span.file_path
        try:
            tree = ast.parse(textwrap.dedent(body_text))
        except SyntaxError:
            return set(), False
        node = next(
            (
                stmt
                for stmt in tree.body
                if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef))
            ),
            None,
        )
        if node is None:
            return set(), False
        candidates = [self.graph.lookup(cid) for cid in scope.candidate_ids]
        matcher = _ReferenceMatcher(
            anchor_file=anchor_file,
            candidates=[u for u in candidates if u is not None],
            bindings=self._file_bindings(anchor_file),
            shadowed=_collect_shadowed(node),
        )
        return matcher.run(node), True


def analyze_dependencies(
    graph: CodeGraph, anchor_id: str, scope: CandidateScope | None = None
) -> set[str]:
    """Scope candidates the anchor's definition references."""
    if scope is None:
        scope = candidate_scope(graph, anchor_id)
    return DependencyAnalyzer(graph).analyze(anchor_id, scope)


def build_triplets(
    graph: CodeGraph,
    kinds: frozenset[UnitKind] | set[UnitKind] = ALL_KINDS,
    include_methods: bool = True,
) -> list[Triplet]:
    """One triplet per Function unit with a non-empty candidate scope."""
    analyzer = DependencyAnalyzer(graph)
    triplets: list[Triplet] = []
    for unit in graph:
        if unit.kind is not UnitKind.FUNCTION:
            continue
        scope = candidate_scope(graph, unit.id, kinds, include_methods)
        if not scope.candidate_ids:
            continue
        positives = frozenset(analyzer.analyze(unit.id, scope))
        negatives = frozenset(scope.candidate_ids) - positives
        triplets.append(
            Triplet(query=query_for(graph, unit.id), positives=positives, negatives=negatives)
        )
    return triplets


def split_and_balance(triplets: list[Triplet], seed: int) -> DatasetSplit:
    """Seeded shuffle, 8:1:1 split, then 1:1 negative downsampling.

    Downsampling happens at the expanded pair level, globally across the
    training split only; validation and test keep every negative.
    """
    rng = random.Random(seed)
    order = list(triplets)
    rng.shuffle(order)
    n = len(order)
    n_train = int(n * TRAIN_FRACTION)
    n_val = int(n * VALIDATION_FRACTION)
    train = order[:n_train]
    validation = tuple(order[n_train : n_train + n_val])
    test = tuple(order[n_train + n_val :])

    positive_total = sum(len(t.positives) for t in train)
    negative_pairs = [
        (index, negative_id)
        for index, triplet in enumerate(train)
        for negative_id in sorted(triplet.negatives)
    ]
    if len(negative_pairs) > positive_total:
        kept_rows = set(rng.sample(range(len(negative_pairs)), positive_total))
        surviving: dict[int, set[str]] = defaultdict(set)
        for row, (index, negative_id) in enumerate(negative_pairs):
            if row in kept_rows:
                surviving[index].add(negative_id)
        train = [
            replace(t, negatives=frozenset(surviving.get(index, set())))
            for index, t in enumerate(train)
        ]
    return DatasetSplit(train=tuple(train), validation=validation, test=test, seed=seed)


def dataset_stats(split: DatasetSplit) -> dict:
    """Triplet and expanded-pair counts per split."""
    stats: dict = {"seed": split.seed, "splits": {}}
    total_triplets = 0
    total_pairs = 0
    for name in ("train", "validation", "test"):
        part: tuple[Triplet, ...] = getattr(split, name)
        positives = sum(len(t.positives) for t in part)
        negatives = sum(len(t.negatives) for t in part)
        stats["splits"][name] = {
            "triplets": len(part),
            "positive_pairs": positives,
            "negative_pairs": negatives,
        }
        total_triplets += len(part)
        total_pairs += positives + negatives
    stats["total_triplets"] = total_triplets
    stats["total_pairs"] = total_pairs
    return stats


def triplet_to_dict(triplet: Triplet) -> dict:
    return {
        "query": {"anchor_id": triplet.query.anchor_id, "text": triplet.query.text},
        "positives": sorted(triplet.positives),
        "negatives": sorted(triplet.negatives),
    }


def triplet_from_dict(payload: dict) -> Triplet:
    return Triplet(
        query=Query(
            anchor_id=payload["query"]["anchor_id"], text=payload["query"]["text"]
        ),
        positives=frozenset(payload["positives"]),
        negatives=frozenset(payload["negatives"]),
    )


def save_triplets(path: str | Path, triplets: Iterable[Triplet]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for triplet in triplets:
            handle.write(json.dumps(triplet_to_dict(triplet), ensure_ascii=False) + "\n")


def load_triplets(path: str | Path) -> list[Triplet]:
    triplets: list[Triplet] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                triplets.append(triplet_from_dict(json.loads(line)))
    return triplets
