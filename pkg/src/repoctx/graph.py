"""Structural data model of an indexed repository.

A repository is represented as a collection of code units (functions,
classes, module-level variables) plus file-level import edges, instead of
flat text chunks. Units keep their complete source text and exact byte
location so retrieval always returns whole, self-contained definitions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator

STAR_IMPORT = "*"

ID_SEPARATOR = "::"


class UnitKind(Enum):
    """The three structural unit kinds tracked in the graph."""

    FUNCTION = "Function"
    CLASS = "Class"
    VARIABLE = "Variable"

    @classmethod
    def parse(cls, value: str) -> "UnitKind":
        for kind in cls:
            if kind.value.lower() == value.lower():
                return kind
        raise ValueError(f"unknown unit kind: {value!r}")


ALL_KINDS = frozenset(UnitKind)


@dataclass(frozen=True)
class SourceSpan:
    """Location of a unit inside its file.

    Lines are 1-based and inclusive; byte offsets index the raw file bytes
    on disk, so ``file_bytes[start_byte:end_byte]`` reproduces the unit's
    stored text exactly.
    """

    file_path: str
    start_line: int
    end_line: int
    start_byte: int
    end_byte: int

    def __post_init__(self) -> None:
        if self.start_line < 1:
            raise ValueError(f"start_line must be 1-based, got {self.start_line}")
        if self.start_line > self.end_line:
            raise ValueError(f"start_line {self.start_line} > end_line {self.end_line}")
        if self.start_byte >= self.end_byte:
            raise ValueError(f"start_byte {self.start_byte} >= end_byte {self.end_byte}")

    def to_dict(self) -> dict:
        return {
            "file_path": self.file_path,
            "start_line": self.start_line,
            "end_line": self.end_line,
            "start_byte": self.start_byte,
            "end_byte": self.end_byte,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SourceSpan":
        return cls(
            file_path=data["file_path"],
            start_line=data["start_line"],
            end_line=data["end_line"],
            start_byte=data["start_byte"],
            end_byte=data["end_byte"],
        )


def unit_id(file_path: str, qualified_name: str, kind: UnitKind) -> str:
    """Stable unit identifier: ``path::qualified_name::kind``."""
    return ID_SEPARATOR.join((file_path, qualified_name, kind.value))


@dataclass(frozen=True)
class CodeUnit:
    """One structural node: a function, class, or module-level variable.

    ``body_text`` is always the complete implementation, never a fragment.
    A Function unit with ``parent_class`` set is a method; the referenced
    parent is a Class unit in the same graph.
    """

    id: str
    kind: UnitKind
    qualified_name: str
    signature: str
    docstring: str | None
    body_text: str
    span: SourceSpan
    parent_class: str | None = None

    def __post_init__(self) -> None:
        expected = unit_id(self.span.file_path, self.qualified_name, self.kind)
        if self.id != expected:
            raise ValueError(f"inconsistent unit id {self.id!r}, expected {expected!r}")

    @property
    def name(self) -> str:
        """Unqualified name (last component of the qualified name)."""
        return self.qualified_name.rsplit(".", 1)[-1]

    @property
    def file_path(self) -> str:
        return self.span.file_path

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "qualified_name": self.qualified_name,
            "signature": self.signature,
            "docstring": self.docstring,
            "body_text": self.body_text,
            "span": self.span.to_dict(),
            "parent_class": self.parent_class,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CodeUnit":
        return cls(
            id=data["id"],
            kind=UnitKind.parse(data["kind"]),
            qualified_name=data["qualified_name"],
            signature=data["signature"],
            docstring=data["docstring"],
            body_text=data["body_text"],
            span=SourceSpan.from_dict(data["span"]),
            parent_class=data["parent_class"],
        )


@dataclass(frozen=True)
class ImportEdge:
    """File-level import relationship.

    ``imported_names`` lists the names pulled in by ``from X import ...``
    statements; the entry ``"*"`` marks a star import. A plain
    ``import X`` produces an edge with no specific names.
    """

    from_file: str
    to_file: str
    imported_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.from_file == self.to_file:
            raise ValueError(f"self-import edge for {self.from_file}")

    @property
    def is_star(self) -> bool:
        return STAR_IMPORT in self.imported_names

    def to_dict(self) -> dict:
        return {
            "from_file": self.from_file,
            "to_file": self.to_file,
            "imported_names": list(self.imported_names),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ImportEdge":
        return cls(
            from_file=data["from_file"],
            to_file=data["to_file"],
            imported_names=tuple(data["imported_names"]),
        )


class UnknownFileError(KeyError):
    """Raised when an operation references a path the graph never indexed."""


class CodeGraph:
    """All units of a repository plus its import edges.

    Immutable after construction and therefore safe for concurrent reads.
    Unit lookup by id is O(1).
    """

    def __init__(
        self,
        repo_root: str,
        files: list[str],
        units: list[CodeUnit],
        import_edges: list[ImportEdge],
    ):
        self.repo_root = repo_root
        self.files = list(files)
        self.units = list(units)
        self.import_edges = list(import_edges)

        self._file_set = set(self.files)
        self._by_id: dict[str, CodeUnit] = {}
        for unit in self.units:
            if unit.id in self._by_id:
                raise ValueError(f"duplicate unit id: {unit.id}")
            self._by_id[unit.id] = unit

        self._units_by_file: dict[str, list[CodeUnit]] = {path: [] for path in self.files}
        for unit in self.units:
            if unit.span.file_path not in self._file_set:
                raise ValueError(f"unit {unit.id} references unindexed file {unit.span.file_path}")
            self._units_by_file[unit.span.file_path].append(unit)

        self._imports_by_file: dict[str, list[ImportEdge]] = {}
        for edge in self.import_edges:
            if edge.from_file not in self._file_set or edge.to_file not in self._file_set:
                raise ValueError(
                    f"import edge {edge.from_file} -> {edge.to_file} references unindexed file"
                )
            self._imports_by_file.setdefault(edge.from_file, []).append(edge)

    def lookup(self, unit_id: str) -> CodeUnit | None:
        """Return the unit with the given id, or None."""
        return self._by_id.get(unit_id)

    def units_in_file(self, path: str) -> list[CodeUnit]:
        """Units of one file, in source order."""
        if path not in self._file_set:
            raise UnknownFileError(path)
        return list(self._units_by_file.get(path, []))

    def imported_files(self, path: str) -> set[str]:
        """Files directly imported by ``path`` (one hop, no transitive closure)."""
        if path not in self._file_set:
            raise UnknownFileError(path)
        return {edge.to_file for edge in self._imports_by_file.get(path, [])}

    def edges_from(self, path: str) -> list[ImportEdge]:
        if path not in self._file_set:
            raise UnknownFileError(path)
        return list(self._imports_by_file.get(path, []))

    def __iter__(self) -> Iterator[CodeUnit]:
        return iter(self.units)

    def __len__(self) -> int:
        return len(self.units)

    def to_dict(self) -> dict:
        return {
            "repo_root": self.repo_root,
            "files": list(self.files),
            "units": [unit.to_dict() for unit in self.units],
            "import_edges": [edge.to_dict() for edge in self.import_edges],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CodeGraph":
        return cls(
            repo_root=data["repo_root"],
            files=data["files"],
            units=[CodeUnit.from_dict(u) for u in data["units"]],
            import_edges=[ImportEdge.from_dict(e) for e in data["import_edges"]],
        )

    def save(self, path: str | Path) -> None:
        """Write the index as a single UTF-8 JSON document."""
        Path(path).write_text(serialize_graph(self), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CodeGraph":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if "units" not in data:
            raise ValueError(f"{path} is not a unit index (missing 'units')")
        return cls.from_dict(data)


def serialize_graph(graph: CodeGraph) -> str:
    return json.dumps(graph.to_dict(), ensure_ascii=False, indent=2) + "\n"
