"""Turning documents into training sequences.

Three preparation strategies live here:

* dataset decomposition: every document is cut into adjacent power-of-two
  spans, each span going to the bucket of its length;
* concat-and-chunk: shuffle, join with an end-of-text token, slice into
  fixed-length chunks;
* best-fit-decreasing packing of pre-chunked documents into fixed bins.

plus the two synthetic bucket transforms (split long sequences into shorter
ones, or glue short ones into longer multi-document sequences).

Sequences are described by provenance only (document id, offset, length);
token arrays are materialized on demand.
"""

from __future__ import annotations

import bisect
import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from ._validation import check_exponent_range, check_int, check_seed, check_token_id
from .corpus import TokenizedDocument
from .prng import SplitMix64

RESERVED_DOC_ID = (1 << 64) - 1
"""doc_id carried by end-of-text and pad segments."""


class SequenceRecord(NamedTuple):
    """A training sequence located inside a single source document."""

    doc_id: int
    offset: int
    length: int


class Segment(NamedTuple):
    """A contiguous span of one document placed inside a chunk."""

    doc_id: int
    doc_offset: int
    start: int
    length: int

    @property
    def reserved(self) -> bool:
        return self.doc_id == RESERVED_DOC_ID


@dataclass
class ChunkedSequence:
    """A fixed-length training sequence assembled from document segments.

    Segments tile ``[0, target_len - pad_count)`` in order; the remaining
    ``pad_count`` positions hold ``fill_token``. Reserved segments (end-of-text
    separators) also materialize as ``fill_token``.
    """

    target_len: int
    segments: list[Segment] = field(default_factory=list)
    pad_count: int = 0
    fill_token: int | None = None

    def check(self) -> None:
        pos = 0
        for seg in self.segments:
            if seg.start != pos or seg.length < 1:
                raise ValueError(f"segment {seg} does not continue the tiling at {pos}")
            pos += seg.length
        if pos + self.pad_count != self.target_len:
            raise ValueError(
                f"segments ({pos}) + pad ({self.pad_count}) != target length {self.target_len}"
            )

    def materialize(self, docs: Mapping[int, TokenizedDocument]) -> np.ndarray:
        out = np.empty(self.target_len, dtype=np.uint32)
        for seg in self.segments:
            if seg.reserved:
                out[seg.start : seg.start + seg.length] = self.fill_token
            else:
                src = docs[seg.doc_id].tokens
                out[seg.start : seg.start + seg.length] = src[seg.doc_offset : seg.doc_offset + seg.length]
        if self.pad_count:
            out[self.target_len - self.pad_count :] = self.fill_token
        return out

    def to_json(self) -> dict:
        return {
            "target_len": self.target_len,
            "segments": [list(s) for s in self.segments],
            "pad_count": self.pad_count,
        }

    @classmethod
    def from_json(cls, obj: dict, fill_token: int | None = None) -> "ChunkedSequence":
        return cls(
            int(obj["target_len"]),
            [Segment(*map(int, s)) for s in obj["segments"]],
            int(obj.get("pad_count", 0)),
            fill_token,
        )


@dataclass(frozen=True)
class PackConfig:
    context_size: int
    pad_token: int = 0

    def __post_init__(self):
        check_int(self.context_size, "context_size", min_value=1)
        check_token_id(self.pad_token, "pad_token")


@dataclass
class BucketStore:
    """Decomposition output: ``buckets[i]`` holds records of length ``2**i``."""

    min_exp: int
    max_exp: int
    buckets: dict[int, list[SequenceRecord]] = field(default_factory=dict)
    dropped_tokens: int = 0
    append_eot: bool = False
    eot_token: int | None = None

    def __post_init__(self):
        for i in range(self.min_exp, self.max_exp + 1):
            self.buckets.setdefault(i, [])

    def __getitem__(self, exp: int) -> list[SequenceRecord]:
        return self.buckets[exp]

    def bucket_tokens(self, exp: int) -> int:
        return len(self.buckets.get(exp, ())) << exp

    @property
    def total_tokens(self) -> int:
        return sum(self.bucket_tokens(i) for i in self.buckets)

    @property
    def n_records(self) -> int:
        return sum(len(v) for v in self.buckets.values())

    def items(self) -> Iterator[tuple[int, SequenceRecord]]:
        for exp in sorted(self.buckets):
            for rec in self.buckets[exp]:
                yield exp, rec

    def materialize(self, record: SequenceRecord, doc: TokenizedDocument) -> np.ndarray:
        return materialize_record(record, doc, self.eot_token if self.append_eot else None)

    def check(self) -> None:
        for exp, recs in self.buckets.items():
            for rec in recs:
                if rec.length != 1 << exp:
                    raise ValueError(f"record {rec} in bucket {exp} is not of length {1 << exp}")

    def write_manifest(self, path: str | os.PathLike) -> None:
        """One JSON line per record: ``{"exp", "doc", "off", "len"}``."""
        with open(path, "w", encoding="utf-8") as fh:
            for exp, rec in self.items():
                fh.write(json.dumps({"exp": exp, "doc": rec.doc_id, "off": rec.offset, "len": rec.length}) + "\n")

    @classmethod
    def read_manifest(cls, path: str | os.PathLike) -> "BucketStore":
        buckets: dict[int, list[SequenceRecord]] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    exp, rec = int(obj["exp"]), SequenceRecord(int(obj["doc"]), int(obj["off"]), int(obj["len"]))
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise ValueError(f"{path}: line {lineno}: malformed bucket record ({exc})") from None
                if rec.length != 1 << exp:
                    raise ValueError(f"{path}: line {lineno}: length {rec.length} does not match exp {exp}")
                buckets.setdefault(exp, []).append(rec)
        if not buckets:
            return cls(0, 0, {})
        return cls(min(buckets), max(buckets), buckets)


def materialize_record(
    record: SequenceRecord, doc: TokenizedDocument, eot_token: int | None = None
) -> np.ndarray:
    """Token ids of ``record``; with ``eot_token`` the document is read as ``tokens + [eot]``."""
    if record.doc_id != doc.doc_id:
        raise ValueError(f"record belongs to document {record.doc_id}, got {doc.doc_id}")
    end = record.offset + record.length
    n = doc.source_len
    if eot_token is not None and end == n + 1:
        return np.append(doc.tokens[record.offset :], np.uint32(eot_token))
    if end > n:
        raise ValueError(f"record {record} runs past the end of document {doc.doc_id} (length {n})")
    return doc.tokens[record.offset : end]


def decompose_length(
    doc_id: int, length: int, min_exp: int, max_exp: int
) -> tuple[list[SequenceRecord], int]:
    top = 1 << max_exp
    records = [SequenceRecord(doc_id, k * top, top) for k in range(length >> max_exp)]
    offset = len(records) * top
    rest = length & (top - 1)
    for i in range(max_exp - 1, min_exp - 1, -1):
        if rest >> i & 1:
            records.append(SequenceRecord(doc_id, offset, 1 << i))
            offset += 1 << i
    dropped = rest & ((1 << min_exp) - 1)
    return records, dropped


def decompose_document(
    doc: TokenizedDocument, min_exp: int = 6, max_exp: int = 13, *, append_eot: bool = False
) -> tuple[list[SequenceRecord], int]:
    """Binary decomposition of one document.

    Full ``2**max_exp`` spans come first, then the binary digits of the
    remainder in descending order, all adjacent from the document start.
    Digits below ``2**min_exp`` are dropped; their token count is returned.
    """
    min_exp, max_exp = check_exponent_range(min_exp, max_exp)
    length = doc.source_len + (1 if append_eot else 0)
    return decompose_length(doc.doc_id, length, min_exp, max_exp)


def decompose_corpus(
    docs: Iterable[TokenizedDocument],
    min_exp: int = 6,
    max_exp: int = 13,
    *,
    append_eot: bool = False,
    eot_token: int | None = None,
) -> BucketStore:
    min_exp, max_exp = check_exponent_range(min_exp, max_exp)
    if append_eot:
        if eot_token is None:
            raise ValueError("append_eot requires eot_token")
        eot_token = check_token_id(eot_token, "eot_token")
    store = BucketStore(min_exp, max_exp, append_eot=append_eot, eot_token=eot_token)
    buckets = store.buckets
    extra = 1 if append_eot else 0
    for doc in docs:
        if doc.source_len == 0:
            continue
        records, dropped = decompose_length(doc.doc_id, doc.source_len + extra, min_exp, max_exp)
        for rec in records:
            buckets[rec.length.bit_length() - 1].append(rec)
        store.dropped_tokens += dropped
    return store


def _shuffled(items: list, seed: int | None) -> list:
    items = list(items)
    if seed is not None:
        SplitMix64(seed).shuffle(items)
    return items


def concat_and_chunk(
    docs: Sequence[TokenizedDocument], target_len: int, eot_token: int, shuffle_seed: int | None = 0
) -> list[ChunkedSequence]:
    """Shuffle documents, join them with one EOT after each, slice into full chunks.

    ``shuffle_seed=None`` keeps the input order. Empty documents are skipped
    (no separator is emitted for them). The trailing partial chunk is dropped.
    """
    target_len = check_int(target_len, "target_len", min_value=1)
    eot_token = check_token_id(eot_token, "eot_token")
    docs = list(docs)
    order = _shuffled(range(len(docs)), check_seed(shuffle_seed))

    chunks: list[ChunkedSequence] = []
    segments: list[Segment] = []
    fill = 0

    def place(doc_id: int, length: int) -> None:
        nonlocal segments, fill
        off = 0
        while length:
            take = min(length, target_len - fill)
            segments.append(Segment(doc_id, off, fill, take))
            fill += take
            off += take
            length -= take
            if fill == target_len:
                chunks.append(ChunkedSequence(target_len, segments, 0, eot_token))
                segments, fill = [], 0

    for k in order:
        doc = docs[k]
        if doc.source_len == 0:
            continue
        place(doc.doc_id, doc.source_len)
        place(RESERVED_DOC_ID, 1)
    return chunks


def prechunk(docs: Iterable[TokenizedDocument], n: int) -> list[SequenceRecord]:
    """Split each document into ``n``-token pieces plus one shorter tail piece."""
    n = check_int(n, "n", min_value=1)
    out = []
    for doc in docs:
        length = doc.source_len
        for off in range(0, length, n):
            out.append(SequenceRecord(doc.doc_id, off, min(n, length - off)))
    return out


def best_fit_pack(chunks: Sequence[SequenceRecord], config: PackConfig) -> list[ChunkedSequence]:
    """Best-fit-decreasing packing into bins of ``config.context_size`` tokens.

    Chunks are visited longest first (ties by input index). Each goes to the
    feasible bin with the least capacity left after placement (ties to the
    lowest bin index), or opens a new bin. Leftover capacity becomes padding.
    """
    n = config.context_size
    for k, c in enumerate(chunks):
        if c.length > n:
            raise ValueError(f"chunk {k} has length {c.length} > context size {n}")
        if c.length < 1:
            raise ValueError(f"chunk {k} is empty")
    order = sorted(range(len(chunks)), key=lambda k: (-chunks[k].length, k))

    contents: list[list[SequenceRecord]] = []
    remaining: list[int] = []
    # (remaining capacity, bin index), sorted; full bins are dropped from it
    open_bins: list[tuple[int, int]] = []
    for k in order:
        chunk = chunks[k]
        pos = bisect.bisect_left(open_bins, (chunk.length, -1))
        if pos == len(open_bins):
            idx = len(contents)
            contents.append([])
            remaining.append(n)
        else:
            _, idx = open_bins.pop(pos)
        contents[idx].append(chunk)
        remaining[idx] -= chunk.length
        if remaining[idx]:
            bisect.insort(open_bins, (remaining[idx], idx))

    bins = []
    for placed, rem in zip(contents, remaining):
        segs, start = [], 0
        for c in placed:
            segs.append(Segment(c.doc_id, c.offset, start, c.length))
            start += c.length
        bins.append(ChunkedSequence(n, segs, rem, config.pad_token))
    return bins


def _common_exp(records: Sequence[SequenceRecord]) -> int:
    length = records[0].length
    if length < 1 or length & (length - 1):
        raise ValueError(f"record length {length} is not a power of two")
    if any(r.length != length for r in records):
        raise ValueError("all records of a bucket must share one length")
    return length.bit_length() - 1


def chunk_transform(
    records: Sequence[SequenceRecord], target_exp: int, shuffle_seed: int | None = 0
) -> list[SequenceRecord]:
    """Split every length-``2**a`` record into ``2**(a - target_exp)`` adjacent pieces, then shuffle globally."""
    target_exp = check_int(target_exp, "target_exp", min_value=0)
    if not records:
        return []
    exp = _common_exp(records)
    if target_exp >= exp:
        raise ValueError(f"target_exp ({target_exp}) must be below the source exponent ({exp})")
    step = 1 << target_exp
    out = [
        SequenceRecord(r.doc_id, r.offset + k * step, step)
        for r in records
        for k in range(1 << (exp - target_exp))
    ]
    return _shuffled(out, check_seed(shuffle_seed))


class ConcatTransformResult(NamedTuple):
    sequences: list[ChunkedSequence]
    dropped_records: int


def concat_transform(
    records: Sequence[SequenceRecord], target_exp: int, shuffle_seed: int | None = 0
) -> ConcatTransformResult:
    """Shuffle length-``2**a`` records and glue runs of ``2**(target_exp - a)`` into one sequence.

    Records left over after the last full run are dropped and counted.
    """
    target_exp = check_int(target_exp, "target_exp", min_value=0)
    if not records:
        return ConcatTransformResult([], 0)
    exp = _common_exp(records)
    if target_exp <= exp:
        raise ValueError(f"target_exp ({target_exp}) must exceed the source exponent ({exp})")
    run = 1 << (target_exp - exp)
    shuffled = _shuffled(records, check_seed(shuffle_seed))
    n_full = len(shuffled) // run
    seqs = []
    for g in range(n_full):
        group = shuffled[g * run : (g + 1) * run]
        segs = [Segment(r.doc_id, r.offset, k << exp, r.length) for k, r in enumerate(group)]
        seqs.append(ChunkedSequence(1 << target_exp, segs, 0))
    return ConcatTransformResult(seqs, len(shuffled) - n_full * run)


def write_chunk_manifest(chunks: Iterable[ChunkedSequence], path: str | os.PathLike) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for c in chunks:
            fh.write(json.dumps(c.to_json()) + "\n")
            n += 1
    return n


def read_chunk_manifest(path: str | os.PathLike) -> list[ChunkedSequence]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(ChunkedSequence.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: line {lineno}: malformed chunk record ({exc})") from None
    return out
