"""Fixed-size overlapping chunk indexing, the structure-free baseline.

Files are tokenized with the retrieval tokenizer and cut into windows of
``chunk_size`` tokens whose starts step by ``stride = ceil(chunk_size *
(1 - overlap_fraction))``. A window starts at every stride multiple
below the file's token count, so the final window may be partial.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

from .extractor import ExtractionConfig, discover_files
from .similarity import tokenize

logger = logging.getLogger(__name__)

DEFAULT_CHUNK_SIZE = 2048
DEFAULT_OVERLAP = 0.5


@dataclass(frozen=True)
class Chunk:
    """One token window of a file.

    ``text`` is the space-joined token slice; token offsets index the
    file's token stream, not characters.
    """

    file_path: str
    chunk_index: int
    token_start: int
    token_end: int
    text: str

    def __post_init__(self) -> None:
        if self.token_start < 0 or self.token_end <= self.token_start:
            raise ValueError(
                f"invalid token range [{self.token_start}, {self.token_end})"
            )

    @property
    def id(self) -> str:
        return f"{self.file_path}::chunk-{self.chunk_index}"

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "file_path": self.file_path,
            "chunk_index": self.chunk_index,
            "token_start": self.token_start,
            "token_end": self.token_end,
            "text": self.text,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Chunk":
        return cls(
            file_path=payload["file_path"],
            chunk_index=payload["chunk_index"],
            token_start=payload["token_start"],
            token_end=payload["token_end"],
            text=payload["text"],
        )


def chunk_stride(chunk_size: int, overlap_fraction: float) -> int:
    return max(1, math.ceil(chunk_size * (1.0 - overlap_fraction)))


def chunk_file(
    text: str,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    overlap_fraction: float = DEFAULT_OVERLAP,
    file_path: str = "",
) -> list[Chunk]:
    """Cut one file's text into overlapping token windows."""
    if chunk_size < 2:
        raise ValueError(f"chunk_size must be at least 2, got {chunk_size}")
    if not 0.0 <= overlap_fraction < 1.0:
        raise ValueError(
            f"overlap_fraction must lie in [0, 1), got {overlap_fraction}"
        )
    tokens = tokenize(text)
    stride = chunk_stride(chunk_size, overlap_fraction)
    chunks: list[Chunk] = []
    start = 0
    while start < len(tokens):
        end = min(start + chunk_size, len(tokens))
        chunks.append(
            Chunk(
                file_path=file_path,
                chunk_index=len(chunks),
                token_start=start,
                token_end=end,
                text=" ".join(tokens[start:end]),
            )
        )
        start += stride
    return chunks


def build_chunk_index(
    repo_root: str | Path,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    overlap_fraction: float = DEFAULT_OVERLAP,
    config: ExtractionConfig | None = None,
) -> dict:
    """Chunk every Python file of a repository.

    Returns the same index envelope as the unit graph, with ``chunks``
    in place of ``units``; chunking extracts no import structure.
    """
    config = config or ExtractionConfig()
    root = Path(repo_root).resolve()
    if not root.is_dir():
        raise NotADirectoryError(f"not a readable directory: {repo_root}")
    files = discover_files(root, config)
    chunks: list[Chunk] = []
    for rel_path in files:
        try:
            text = (root / rel_path).read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            logger.warning("%s: skipped (%s)", rel_path, exc)
            continue
        chunks.extend(chunk_file(text, chunk_size, overlap_fraction, rel_path))
    return {
        "repo_root": str(root),
        "files": files,
        "chunks": [chunk.to_dict() for chunk in chunks],
        "import_edges": [],
    }


def save_chunk_index(index: dict, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(index, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def load_chunk_index(path: str | Path) -> dict:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if "chunks" not in payload:
        raise ValueError(f"not a chunk index: {path}")
    return payload


def chunk_documents(index: dict) -> dict[str, str]:
    """Chunk id to text mapping, ready for lexical indexing."""
    return {record["id"]: record["text"] for record in index["chunks"]}
