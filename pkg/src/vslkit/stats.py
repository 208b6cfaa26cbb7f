"""Sequence-length and context-length statistics.

For sequences of lengths ``l_1..l_N`` the average sequence length is
``sum(l) / N``. Training autoregressively on a length-``l`` sequence sees
contexts ``0..l-1``, so the token-weighted average context length is
``sum(l * (l - 1)) / (2 * sum(l))``.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .corpus import TokenizedDocument
from .decompose import BucketStore, ChunkedSequence, SequenceRecord
from .scheduler import MixtureSpec


@dataclass(frozen=True)
class LengthStats:
    avg_seq_len: float
    avg_ctx_len: float
    total_tokens: int
    total_sequences: int

    def to_json(self) -> dict:
        return {
            "avg_seq_len": self.avg_seq_len,
            "avg_ctx_len": self.avg_ctx_len,
            "total_tokens": self.total_tokens,
            "total_sequences": self.total_sequences,
        }


def _from_sums(n_seq: int, tokens: int, pair_sum: int) -> LengthStats:
    return LengthStats(tokens / n_seq, pair_sum / (2 * tokens), tokens, n_seq)


def avg_lengths(lengths: Iterable[int]) -> LengthStats:
    # Python ints are exact, so the sums cannot overflow at any corpus scale.
    n = tokens = pair_sum = 0
    for length in lengths:
        length = int(length)
        if length < 1:
            raise ValueError(f"sequence lengths must be >= 1, got {length}")
        n += 1
        tokens += length
        pair_sum += length * (length - 1)
    if n == 0:
        raise ValueError("avg_lengths needs at least one sequence")
    return _from_sums(n, tokens, pair_sum)


def mixture_avg_lengths(spec: MixtureSpec) -> LengthStats:
    """Closed form of :func:`avg_lengths` over the sequences a mixture implies."""
    active = spec.active()
    if not active:
        raise ValueError(f"mixture {spec.name!r} has no tokens")
    n_seq = sum(n >> i for i, n in active.items())
    tokens = sum(active.values())
    pair_sum = sum(n * ((1 << i) - 1) for i, n in active.items())
    return _from_sums(n_seq, tokens, pair_sum)


@dataclass
class Histogram:
    """Integer-binned histogram: ``counts[k]`` is the mass in ``[edges[k], edges[k+1])``."""

    edges: np.ndarray
    counts: np.ndarray

    @classmethod
    def from_counts(cls, counts) -> "Histogram":
        counts = np.asarray(counts, dtype=np.int64)
        return cls(np.arange(len(counts) + 1, dtype=np.int64), counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def as_dict(self) -> dict[int, int]:
        return {int(self.edges[k]): int(c) for k, c in enumerate(self.counts) if c}

    def mean(self) -> float:
        """Mean for unit-width bins (each bin's value is its left edge)."""
        total = self.total
        if total == 0:
            raise ValueError("empty histogram")
        s = sum(int(e) * int(c) for e, c in zip(self.edges[:-1], self.counts) if c)
        return s / total

    def rebin_log2(self) -> "Histogram":
        """Merge bins into ``[0, 1), [1, 2), [2, 4), [4, 8), ...``."""
        top = int(self.edges[-1])
        edges = [0, 1]
        while edges[-1] < top:
            edges.append(edges[-1] * 2)
        cum = np.concatenate([[0], np.cumsum(self.counts)])
        idx = np.searchsorted(self.edges, np.minimum(edges, top))
        return Histogram(np.asarray(edges, dtype=np.int64), np.diff(cum[idx]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_start", "bin_end", "count"])
        for k, c in enumerate(self.counts):
            w.writerow([int(self.edges[k]), int(self.edges[k + 1]), int(c)])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"edges": self.edges.tolist(), "counts": self.counts.tolist()}


def _segment_lengths(items: Iterable[ChunkedSequence | SequenceRecord]) -> list[int]:
    lengths = []
    for item in items:
        if isinstance(item, SequenceRecord):
            lengths.append(item.length)
        else:
            lengths.extend(s.length for s in item.segments if not s.reserved)
    return lengths


def length_distribution(lengths: Iterable[int]) -> Histogram:
    lengths = np.asarray(list(lengths), dtype=np.int64)
    if lengths.size == 0:
        return Histogram.from_counts([])
    return Histogram.from_counts(np.bincount(lengths))


def context_distribution(items: Iterable[ChunkedSequence | SequenceRecord]) -> Histogram:
    """Histogram of same-document context length over all document tokens.

    A token at position ``p`` of a segment starting at ``s`` can attend to
    ``p - s`` earlier tokens of its own document. End-of-text and pad
    positions are excluded. Plain records count as one-segment sequences.
    """
    lengths = np.asarray(_segment_lengths(items), dtype=np.int64)
    if lengths.size == 0:
        return Histogram.from_counts([])
    # A segment of length L adds one count to each context 0..L-1.
    at_most = np.cumsum(np.bincount(lengths))
    return Histogram.from_counts(lengths.size - at_most[: int(lengths.max())])


def segment_stats(items: Iterable[ChunkedSequence | SequenceRecord]) -> LengthStats:
    """Length statistics over document segments (the context-relevant unit)."""
    return avg_lengths(_segment_lengths(items))


def provenance_histogram(
    store: BucketStore, docs: Iterable[TokenizedDocument] | Mapping[int, int]
) -> dict[int, dict[int, int]]:
    """Tokens per bucket, grouped by ``floor(log2(source length))`` of their document.

    ``docs`` is either the documents or a ``doc_id -> length`` mapping.
    """
    if isinstance(docs, Mapping):
        lengths = {int(k): int(v) for k, v in docs.items()}
    else:
        lengths = {d.doc_id: d.source_len for d in docs}
    extra = 1 if store.append_eot else 0
    out: dict[int, dict[int, int]] = {}
    for exp in sorted(store.buckets):
        mass: dict[int, int] = defaultdict(int)
        for rec in store.buckets[exp]:
            try:
                l = lengths[rec.doc_id] + extra
            except KeyError:
                raise KeyError(f"document {rec.doc_id} referenced by bucket {exp} is missing") from None
            mass[l.bit_length() - 1] += rec.length
        out[exp] = dict(sorted(mass.items()))
    return out


def provenance_csv(hist: Mapping[int, Mapping[int, int]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bucket", "length_class", "tokens"])
    for exp, row in hist.items():
        for k, n in row.items():
            w.writerow([exp, k, n])
    return buf.getvalue()


def stats_report(lengths: list[int], context: Histogram | None = None) -> dict:
    st = avg_lengths(lengths)
    report = st.to_json()
    report["histograms"] = {"sequence_length": length_distribution(lengths).rebin_log2().to_json()}
    if context is not None:
        report["histograms"]["context_length"] = context.rebin_log2().to_json()
        if context.total:
            report["context_mean"] = context.mean()
    return report
