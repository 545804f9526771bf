"""Parse Python sources into code units and import edges.

Uses the stdlib ``ast`` module. Every extracted unit keeps its complete
source text (sliced by byte offsets, so ``file_bytes[start:end]`` equals
``body_text``) together with its header signature and docstring.

Import statements are resolved against the set of repository files;
imports of stdlib or third-party modules produce no edges.
"""

from __future__ import annotations

import ast
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fnmatch import fnmatch
from pathlib import Path

from .graph import (
    STAR_IMPORT,
    CodeGraph,
    CodeUnit,
    ImportEdge,
    SourceSpan,
    UnitKind,
    unit_id,
)

logger = logging.getLogger(__name__)

DEFAULT_IGNORE_GLOBS = (
    ".git",
    "__pycache__",
    ".venv",
    "venv",
    ".tox",
    ".nox",
    ".mypy_cache",
    ".pytest_cache",
    ".eggs",
    "*.egg-info",
    "node_modules",
)

PYTHON_EXTENSION = ".py"


@dataclass
class ParsedFile:
    """A source file and its (possibly absent) syntax tree.

    A file with fatal parse errors yields zero units but is still listed
    in the graph's file set; the errors are recorded as (line, message).
    """

    path: str
    syntax_tree: ast.Module | None
    source: str
    raw: bytes
    line_starts: list[int]
    parse_errors: list[tuple[int, str]] = field(default_factory=list)

    def byte_offset(self, lineno: int, col_offset: int) -> int:
        """Byte offset in the raw file for an ast (lineno, col) position.

        ast column offsets are UTF-8 byte offsets within the line, so this
        is a plain addition.
        """
        return self.line_starts[lineno - 1] + col_offset

    def line_start(self, lineno: int) -> int:
        return self.line_starts[lineno - 1]


def parse_file(path: str | Path, rel_path: str) -> ParsedFile:
    """Read and parse one file; parse failures are recorded, not raised."""
    raw = Path(path).read_bytes()
    try:
        source = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        return ParsedFile(
            path=rel_path,
            syntax_tree=None,
            source="",
            raw=raw,
            line_starts=[0],
            parse_errors=[(0, f"not valid UTF-8: {exc}")],
        )

    line_starts = [0]
    for i, byte in enumerate(raw):
        if byte == 0x0A:
            line_starts.append(i + 1)

    try:
        tree = ast.parse(source, filename=rel_path)
    except SyntaxError as exc:
        return ParsedFile(
            path=rel_path,
            syntax_tree=None,
            source=source,
            raw=raw,
            line_starts=line_starts,
            parse_errors=[(exc.lineno or 0, exc.msg or "syntax error")],
        )

    return ParsedFile(
        path=rel_path,
        syntax_tree=tree,
        source=source,
        raw=raw,
        line_starts=line_starts,
        parse_errors=[],
    )


def _find_header_colon(segment: str) -> int:
    """Index of the colon ending a def/class header, or -1.

    Tracks bracket depth, string literals, and comments so colons inside
    annotations, lambda defaults, or comments are skipped.
    """
    depth = 0
    i = 0
    n = len(segment)
    while i < n:
        ch = segment[i]
        if ch in "\"'":
            quote = ch
            if segment.startswith(quote * 3, i):
                end = segment.find(quote * 3, i + 3)
                i = n if end == -1 else end + 3
                continue
            i += 1
            while i < n:
                if segment[i] == "\\":
                    i += 2
                    continue
                if segment[i] == quote:
                    i += 1
                    break
                i += 1
            continue
        if ch == "#":
            newline = segment.find("\n", i)
            i = n if newline == -1 else newline
            continue
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        elif ch == ":" and depth == 0:
            return i
        i += 1
    return -1


def _definition_signature(parsed: ParsedFile, node: ast.AST) -> str:
    """Header text of a def/class, from the keyword through the colon."""
    start = parsed.byte_offset(node.lineno, node.col_offset)
    segment = parsed.raw[start : parsed.byte_offset(node.end_lineno, node.end_col_offset)]
    text = segment.decode("utf-8")
    colon = _find_header_colon(text)
    if colon == -1:
        return text.splitlines()[0] if text else ""
    return text[: colon + 1]


def _node_span(parsed: ParsedFile, node: ast.AST) -> tuple[SourceSpan, str]:
    """Span and exact source slice for a unit.

    The span starts at the beginning of the construct's first physical
    line (the first decorator line for decorated definitions), so the
    slice carries any leading indentation with it.
    """
    decorators = getattr(node, "decorator_list", [])
    first_line = min([node.lineno] + [d.lineno for d in decorators])
    start_byte = parsed.line_start(first_line)
    end_byte = parsed.byte_offset(node.end_lineno, node.end_col_offset)
    span = SourceSpan(
        file_path=parsed.path,
        start_line=first_line,
        end_line=node.end_lineno,
        start_byte=start_byte,
        end_byte=end_byte,
    )
    return span, parsed.raw[start_byte:end_byte].decode("utf-8")


def _variable_targets(stmt: ast.stmt) -> list[str]:
    """Plain-name targets of a module-level assignment.

    Tuple or list unpacking yields one name per element; attribute and
    subscript targets are never units. Annotation-only statements
    (``x: int`` with no value) bind nothing and are skipped.
    """
    if isinstance(stmt, ast.Assign):
        names: list[str] = []
        for target in stmt.targets:
            if isinstance(target, ast.Name):
                names.append(target.id)
            elif isinstance(target, (ast.Tuple, ast.List)):
                for element in target.elts:
                    if isinstance(element, ast.Starred):
                        element = element.value
                    if isinstance(element, ast.Name):
                        names.append(element.id)
        return names
    if isinstance(stmt, ast.AnnAssign) and stmt.value is not None:
        if isinstance(stmt.target, ast.Name):
            return [stmt.target.id]
    return []


def extract_units(parsed: ParsedFile) -> list[CodeUnit]:
    """All top-level functions, classes (with their methods), and
    module-level variables of one parsed file, in source order.

    Methods become Function units with ``parent_class`` set; the enclosing
    Class unit's body text still contains them in full. Redefinitions of
    the same name keep the last definition, mirroring runtime binding.
    """
    if parsed.syntax_tree is None:
        return []

    units: list[CodeUnit] = []

    def add_function(node: ast.AST, qualified: str, parent: str | None) -> None:
        span, body = _node_span(parsed, node)
        units.append(
            CodeUnit(
                id=unit_id(parsed.path, qualified, UnitKind.FUNCTION),
                kind=UnitKind.FUNCTION,
                qualified_name=qualified,
                signature=_definition_signature(parsed, node),
                docstring=ast.get_docstring(node),
                body_text=body,
                span=span,
                parent_class=parent,
            )
        )

    def add_class(node: ast.ClassDef, qualified: str) -> None:
        span, body = _node_span(parsed, node)
        class_id = unit_id(parsed.path, qualified, UnitKind.CLASS)
        units.append(
            CodeUnit(
                id=class_id,
                kind=UnitKind.CLASS,
                qualified_name=qualified,
                signature=_definition_signature(parsed, node),
                docstring=ast.get_docstring(node),
                body_text=body,
                span=span,
                parent_class=None,
            )
        )
        for stmt in node.body:
            if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
                add_function(stmt, f"{qualified}.{stmt.name}", class_id)
            elif isinstance(stmt, ast.ClassDef):
                add_class(stmt, f"{qualified}.{stmt.name}")

    for stmt in parsed.syntax_tree.body:
        if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
            add_function(stmt, stmt.name, None)
        elif isinstance(stmt, ast.ClassDef):
            add_class(stmt, stmt.name)
        else:
            for name in _variable_targets(stmt):
                span, body = _node_span(parsed, stmt)
                units.append(
                    CodeUnit(
                        id=unit_id(parsed.path, name, UnitKind.VARIABLE),
                        kind=UnitKind.VARIABLE,
                        qualified_name=name,
                        signature=body.splitlines()[0] if body else "",
                        docstring=None,
                        body_text=body,
                        span=span,
                        parent_class=None,
                    )
                )

    # Keep the last definition when a name is bound twice in one file.
    seen: dict[str, int] = {}
    deduped: list[CodeUnit | None] = []
    for unit in units:
        if unit.id in seen:
            logger.warning("%s: duplicate definition of %s, keeping the last", parsed.path, unit.id)
            deduped[seen[unit.id]] = None
        seen[unit.id] = len(deduped)
        deduped.append(unit)
    return [u for u in deduped if u is not None]


@dataclass(frozen=True)
class ImportBindings:
    """Name bindings a file gains from its import statements.

    member_aliases maps a bound name to (target file, original name) for
    ``from X import a as b``. module_aliases maps a bound name to a file
    for ``import X [as y]`` and ``from pkg import submodule``.
    dotted_modules maps full dotted paths of ``import a.b`` style
    statements to their files, for resolving attribute chains.
    star_files lists targets of ``from X import *``.
    """

    member_aliases: dict[str, tuple[str, str]]
    module_aliases: dict[str, str]
    dotted_modules: dict[str, str]
    star_files: tuple[str, ...]


def _resolve_module(parts: list[str], repo_files: set[str]) -> str | None:
    """Resolve a dotted module path (repo-root relative) to a file."""
    if not parts or any(not p for p in parts):
        return None
    base = "/".join(parts)
    for candidate in (f"{base}/__init__.py", f"{base}.py"):
        if candidate in repo_files:
            return candidate
    return None


def _relative_base(file_path: str, level: int) -> list[str] | None:
    """Package path that a relative import of the given level starts from."""
    parts = file_path.split("/")[:-1]
    up = level - 1
    if up > len(parts):
        return None
    return parts[: len(parts) - up] if up else parts


def collect_import_bindings(
    tree: ast.Module, file_path: str, repo_files: set[str]
) -> ImportBindings:
    """Walk the whole tree (function-local imports included) and resolve
    every import against the repository file set. Imports that resolve
    outside the repository contribute nothing.
    """
    member_aliases: dict[str, tuple[str, str]] = {}
    module_aliases: dict[str, str] = {}
    dotted_modules: dict[str, str] = {}
    star_files: list[str] = []

    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            for alias in node.names:
                parts = alias.name.split(".")
                resolved = _resolve_module(parts, repo_files)
                if alias.asname:
                    if resolved:
                        module_aliases[alias.asname] = resolved
                else:
                    if resolved:
                        dotted_modules[alias.name] = resolved
                    # `import a.b` binds `a`; every resolvable prefix is
                    # reachable through attribute access.
                    for end in range(1, len(parts)):
                        prefix = _resolve_module(parts[:end], repo_files)
                        if prefix:
                            dotted_modules[".".join(parts[:end])] = prefix
                    root = _resolve_module(parts[:1], repo_files)
                    if root:
                        module_aliases[parts[0]] = root
        elif isinstance(node, ast.ImportFrom):
            if node.level == 0:
                base_parts = (node.module or "").split(".") if node.module else []
            else:
                rel = _relative_base(file_path, node.level)
                if rel is None:
                    logger.warning(
                        "%s: relative import beyond repository root (level %d)",
                        file_path,
                        node.level,
                    )
                    continue
                base_parts = rel + (node.module.split(".") if node.module else [])
            base_file = _resolve_module(base_parts, repo_files)
            for alias in node.names:
                if alias.name == STAR_IMPORT:
                    if base_file:
                        star_files.append(base_file)
                    continue
                bound = alias.asname or alias.name
                submodule = _resolve_module(base_parts + [alias.name], repo_files)
                if submodule and (base_file is None or base_file.endswith("/__init__.py")):
                    module_aliases[bound] = submodule
                elif base_file:
                    member_aliases[bound] = (base_file, alias.name)

    return ImportBindings(
        member_aliases=member_aliases,
        module_aliases=module_aliases,
        dotted_modules=dotted_modules,
        star_files=tuple(star_files),
    )


def extract_imports(parsed: ParsedFile, repo_files: set[str]) -> list[ImportEdge]:
    """Import edges of one file, merged per target file.

    ``imported_names`` carries the member names pulled from the target
    ("*" for star imports); module imports contribute an edge with no
    names. Self-edges are dropped.
    """
    if parsed.syntax_tree is None:
        return []
    bindings = collect_import_bindings(parsed.syntax_tree, parsed.path, repo_files)

    names_by_target: dict[str, set[str]] = {}
    star_targets: set[str] = set()

    def touch(target: str) -> None:
        names_by_target.setdefault(target, set())

    for _, (target, member) in bindings.member_aliases.items():
        touch(target)
        names_by_target[target].add(member)
    for target in bindings.module_aliases.values():
        touch(target)
    for target in bindings.dotted_modules.values():
        touch(target)
    for target in bindings.star_files:
        touch(target)
        star_targets.add(target)

    edges = []
    for target in sorted(names_by_target):
        if target == parsed.path:
            continue
        names = sorted(names_by_target[target])
        if target in star_targets:
            names = [STAR_IMPORT] + names
        edges.append(
            ImportEdge(from_file=parsed.path, to_file=target, imported_names=tuple(names))
        )
    return edges


@dataclass(frozen=True)
class ExtractionConfig:
    ignore_globs: tuple[str, ...] = DEFAULT_IGNORE_GLOBS
    jobs: int = 1


def _is_ignored(rel_parts: tuple[str, ...], patterns: tuple[str, ...]) -> bool:
    rel = "/".join(rel_parts)
    for pattern in patterns:
        if fnmatch(rel, pattern):
            return True
        if any(fnmatch(part, pattern) for part in rel_parts):
            return True
    return False


def discover_files(repo_root: Path, config: ExtractionConfig) -> list[str]:
    """Repo-relative paths of all indexable Python files, sorted."""
    found: list[str] = []
    for dirpath, dirnames, filenames in os.walk(repo_root):
        rel_dir = Path(dirpath).relative_to(repo_root)
        dirnames[:] = sorted(
            d
            for d in dirnames
            if not _is_ignored(rel_dir.parts + (d,), config.ignore_globs)
        )
        for filename in sorted(filenames):
            if not filename.endswith(PYTHON_EXTENSION):
                continue
            parts = rel_dir.parts + (filename,)
            if _is_ignored(parts, config.ignore_globs):
                continue
            found.append("/".join(parts))
    return sorted(found)


def build_graph(repo_root: str | Path, config: ExtractionConfig | None = None) -> CodeGraph:
    """Index a repository directory into a CodeGraph.

    Per-file read or parse failures are logged and leave the file in the
    graph's file list with no units; an unreadable root is fatal.
    """
    config = config or ExtractionConfig()
    root = Path(repo_root).resolve()
    if not root.is_dir():
        raise NotADirectoryError(f"not a readable directory: {repo_root}")

    files = discover_files(root, config)
    file_set = set(files)

    def process(rel_path: str) -> tuple[list[CodeUnit], list[ImportEdge]]:
        try:
            parsed = parse_file(root / rel_path, rel_path)
        except OSError as exc:
            logger.warning("%s: unreadable (%s)", rel_path, exc)
            return [], []
        for line, message in parsed.parse_errors:
            logger.warning("%s:%d: %s", rel_path, line, message)
        return extract_units(parsed), extract_imports(parsed, file_set)

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(process, files))
    else:
        results = [process(path) for path in files]

    units: list[CodeUnit] = []
    edges: list[ImportEdge] = []
    for file_units, file_edges in results:
        units.extend(file_units)
        edges.extend(file_edges)

    return CodeGraph(repo_root=str(root), files=files, units=units, import_edges=edges)
