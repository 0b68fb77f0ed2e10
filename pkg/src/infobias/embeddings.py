"""Bit-exact storage of per-sentence embedding vectors (EMB1 format).

EMB1 is little-endian binary: magic ``EMB1``, u32 dim, u32 count, then
``count`` records of [u16 id byte-length, UTF-8 id, dim x f32].  Vectors are
stored at 32-bit precision; training code upcasts to 64-bit.  Tables are
produced per fold by an external encoder (file-name convention
``emb.fold<k>.emb1``); fold and encoder provenance live in an optional
``<file>.meta.json`` sidecar because the binary layout has no header room
for them.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Corpus
from .errors import FormatError, MissingInputError

MAGIC = b"EMB1"


@dataclass
class EmbeddingTable:
    dim: int
    entries: dict[str, np.ndarray] = field(default_factory=dict)  # id -> float32[dim]
    fold_tag: int | None = None
    encoder_tag: str = ""

    def __post_init__(self):
        if self.dim <= 0:
            raise FormatError(f"embedding dim must be positive, got {self.dim}")

    def add(self, sentence_id: str, vector) -> None:
        vec = np.asarray(vector, dtype=np.float32)
        if vec.shape != (self.dim,):
            raise FormatError(
                f"vector for {sentence_id!r} has shape {vec.shape}, expected ({self.dim},)"
            )
        if not np.all(np.isfinite(vec)):
            raise FormatError(f"vector for {sentence_id!r} contains non-finite values")
        self.entries[sentence_id] = vec

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, sentence_id: str) -> bool:
        return sentence_id in self.entries

    def vector(self, sentence_id: str) -> np.ndarray:
        try:
            return self.entries[sentence_id]
        except KeyError:
            raise MissingInputError(f"no embedding for sentence {sentence_id!r}") from None

    def vector64(self, sentence_id: str) -> np.ndarray:
        return self.vector(sentence_id).astype(np.float64)


def _sidecar_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def write_embeddings(table: EmbeddingTable, path) -> None:
    """Write EMB1; ids are emitted in sorted order so equal tables give
    byte-identical files."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", table.dim, len(table.entries)))
        for sid in sorted(table.entries):
            raw = sid.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise FormatError(f"sentence id too long for format: {sid[:40]!r}...")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(table.entries[sid].astype("<f4").tobytes())
    if table.fold_tag is not None or table.encoder_tag:
        meta = {"fold_tag": table.fold_tag, "encoder_tag": table.encoder_tag}
        _sidecar_path(path).write_text(json.dumps(meta, sort_keys=True) + "\n")


def read_embeddings(path) -> EmbeddingTable:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except FileNotFoundError as exc:
        raise MissingInputError(f"embedding file not found: {path}") from exc

    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated header")
    dim, count = struct.unpack_from("<II", raw, 4)
    if dim == 0:
        raise FormatError(f"{path}: declared dim is zero")

    table = EmbeddingTable(dim=dim)
    offset = 12
    vec_bytes = 4 * dim
    for k in range(count):
        if offset + 2 > len(raw):
            raise FormatError(f"{path}: truncated at record {k} (id length)")
        (id_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        if offset + id_len + vec_bytes > len(raw):
            raise FormatError(f"{path}: truncated at record {k}")
        try:
            sid = raw[offset:offset + id_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: record {k} id is not valid UTF-8") from exc
        offset += id_len
        vec = np.frombuffer(raw, dtype="<f4", count=dim, offset=offset).copy()
        offset += vec_bytes
        if not np.all(np.isfinite(vec)):
            raise FormatError(f"{path}: record {k} ({sid!r}) contains non-finite values")
        if sid in table.entries:
            raise FormatError(f"{path}: duplicate id {sid!r}")
        table.entries[sid] = vec
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes after {count} records")

    sidecar = _sidecar_path(path)
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        table.fold_tag = meta.get("fold_tag")
        table.encoder_tag = meta.get("encoder_tag", "")
    return table


def write_tsv(table: EmbeddingTable, path) -> None:
    """Debug exporter: id, tab, space-separated decimals.  Not authoritative;
    decimal round-trip may lose the exact bit pattern."""
    with open(path, "w", encoding="utf-8") as fh:
        for sid in sorted(table.entries):
            vals = " ".join(repr(float(v)) for v in table.entries[sid])
            fh.write(f"{sid}\t{vals}\n")


def coverage_check(table: EmbeddingTable, corpus: Corpus) -> list[str]:
    """Sentence ids present in the corpus but absent from the table, sorted.
    Extra table entries are tolerated."""
    return sorted(sid for sid in corpus.sentence_ids() if sid not in table.entries)


def tables_equal(a: EmbeddingTable, b: EmbeddingTable) -> bool:
    if a.dim != b.dim or set(a.entries) != set(b.entries):
        return False
    return all(np.array_equal(a.entries[k], b.entries[k]) for k in a.entries)
