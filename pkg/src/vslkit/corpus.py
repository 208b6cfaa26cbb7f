"""Document ingestion and the binary token shard format.

Shard layout (all integers little-endian)::

    magic        8 bytes   b"VSLSHRD1"
    version      u16
    token_width  u16       always 4
    doc_count    u64
    then per document:
    doc_id       u64
    length       u64
    tokens       length * u32
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

SHARD_MAGIC = b"VSLSHRD1"
SHARD_VERSION = 1
TOKEN_WIDTH = 4
MAX_TOKEN = 1 << 32

_HEADER = struct.Struct("<8sHHQ")
_DOC_HEADER = struct.Struct("<QQ")
_TOKEN_DTYPE = np.dtype("<u4")


class CorpusError(ValueError):
    """Malformed corpus input (bad JSONL line, duplicate id, bad token)."""


class ShardFormatError(ValueError):
    """The file is not a token shard (bad magic, version or token width)."""


class ShardCorruptionError(ValueError):
    """The shard header is valid but the payload is truncated or inconsistent."""


class TokenizedDocument:
    """One document: a stable 64-bit id and a uint32 token array."""

    __slots__ = ("doc_id", "tokens")

    def __init__(self, doc_id: int, tokens):
        doc_id = int(doc_id)
        if not 0 <= doc_id < (1 << 64):
            raise CorpusError(f"doc_id {doc_id} does not fit in 64 bits")
        arr = np.asarray(tokens)
        if arr.dtype != np.uint32:
            if arr.size and (arr.min() < 0 or arr.max() >= MAX_TOKEN):
                raise CorpusError(f"document {doc_id}: token ids must lie in [0, 2^32)")
            arr = arr.astype(np.uint32)
        if arr.ndim != 1:
            raise CorpusError(f"document {doc_id}: tokens must be one-dimensional")
        self.doc_id = doc_id
        self.tokens = arr

    @property
    def source_len(self) -> int:
        return int(self.tokens.shape[0])

    def __len__(self) -> int:
        return self.source_len

    def __eq__(self, other):
        if not isinstance(other, TokenizedDocument):
            return NotImplemented
        return self.doc_id == other.doc_id and np.array_equal(self.tokens, other.tokens)

    def __repr__(self):
        head = self.tokens[:8].tolist()
        more = ", ..." if self.source_len > 8 else ""
        return f"TokenizedDocument({self.doc_id}, {head}{more}, {self.source_len})"


@dataclass(frozen=True)
class ShardHeader:
    magic: bytes = SHARD_MAGIC
    version: int = SHARD_VERSION
    token_width: int = TOKEN_WIDTH
    doc_count: int = 0

    def pack(self) -> bytes:
        return _HEADER.pack(self.magic, self.version, self.token_width, self.doc_count)

    @classmethod
    def unpack(cls, raw: bytes) -> "ShardHeader":
        if len(raw) < _HEADER.size:
            raise ShardFormatError("file too short for a shard header")
        magic, version, width, count = _HEADER.unpack(raw[: _HEADER.size])
        if magic != SHARD_MAGIC:
            raise ShardFormatError(f"bad magic {magic!r}, expected {SHARD_MAGIC!r}")
        if version != SHARD_VERSION:
            raise ShardFormatError(f"unsupported shard version {version}")
        if width != TOKEN_WIDTH:
            raise ShardFormatError(f"unsupported token width {width}")
        return cls(magic, version, width, count)


def byte_tokenize(text: str, doc_id: int = 0) -> TokenizedDocument:
    """Tokenize ``text`` as its UTF-8 byte values. Test helper only."""
    return TokenizedDocument(doc_id, np.frombuffer(text.encode("utf-8"), dtype=np.uint8))


def read_jsonl(path: str | os.PathLike) -> Iterator[TokenizedDocument]:
    """Yield documents from a JSONL file of ``{"id": int, "tokens": [int, ...]}`` lines.

    Blank lines are skipped. Errors name the 1-based line number.
    """
    seen: set[int] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                doc_id = obj["id"]
                tokens = obj["tokens"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusError(f"line {lineno}: malformed document ({exc})") from None
            if isinstance(doc_id, bool) or not isinstance(doc_id, int):
                raise CorpusError(f"line {lineno}: 'id' must be an integer")
            if not isinstance(tokens, list) or not all(
                isinstance(t, int) and not isinstance(t, bool) for t in tokens
            ):
                raise CorpusError(f"line {lineno}: 'tokens' must be a list of integers")
            if doc_id in seen:
                raise CorpusError(f"line {lineno}: duplicate document id {doc_id}")
            seen.add(doc_id)
            try:
                doc = TokenizedDocument(doc_id, np.array(tokens, dtype=np.int64))
            except (CorpusError, OverflowError) as exc:
                raise CorpusError(f"line {lineno}: {exc}") from None
            yield doc


def write_jsonl(docs: Iterable[TokenizedDocument], path: str | os.PathLike) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps({"id": doc.doc_id, "tokens": doc.tokens.tolist()}) + "\n")
            n += 1
    return n


def write_shard(docs: Sequence[TokenizedDocument], path: str | os.PathLike) -> ShardHeader:
    """Write ``docs`` to ``path`` in the shard layout and return the header."""
    docs = list(docs)
    header = ShardHeader(doc_count=len(docs))
    with open(path, "wb") as fh:
        fh.write(header.pack())
        for doc in docs:
            fh.write(_DOC_HEADER.pack(doc.doc_id, doc.source_len))
            fh.write(doc.tokens.astype(_TOKEN_DTYPE, copy=False).tobytes())
    return header


def read_shard_header(path: str | os.PathLike) -> ShardHeader:
    with open(path, "rb") as fh:
        return ShardHeader.unpack(fh.read(_HEADER.size))


def read_shard(path: str | os.PathLike) -> Iterator[TokenizedDocument]:
    """Yield the documents stored in a shard, in write order."""
    with open(path, "rb") as fh:
        header = ShardHeader.unpack(fh.read(_HEADER.size))
        for k in range(header.doc_count):
            raw = fh.read(_DOC_HEADER.size)
            if len(raw) != _DOC_HEADER.size:
                raise ShardCorruptionError(
                    f"truncated shard: header claims {header.doc_count} documents, "
                    f"payload ends inside document {k}"
                )
            doc_id, length = _DOC_HEADER.unpack(raw)
            nbytes = length * TOKEN_WIDTH
            payload = fh.read(nbytes)
            if len(payload) != nbytes:
                raise ShardCorruptionError(
                    f"truncated shard: document {k} (id {doc_id}) expects {length} tokens, "
                    f"got {len(payload) // TOKEN_WIDTH}"
                )
            tokens = np.frombuffer(payload, dtype=_TOKEN_DTYPE).astype(np.uint32)
            yield TokenizedDocument(doc_id, tokens)
        if fh.read(1):
            raise ShardCorruptionError(
                f"trailing bytes after the {header.doc_count} documents declared in the header"
            )


def is_shard(path: str | os.PathLike) -> bool:
    with open(path, "rb") as fh:
        return fh.read(len(SHARD_MAGIC)) == SHARD_MAGIC


def load_documents(path: str | os.PathLike) -> list[TokenizedDocument]:
    """Read a corpus from either a shard or a JSONL file, detected by magic bytes."""
    if is_shard(path):
        return list(read_shard(path))
    return list(read_jsonl(path))
