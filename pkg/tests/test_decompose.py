from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bfd_reference, binary_digits_desc, optimal_bins
from vslkit.corpus import TokenizedDocument
from vslkit.decompose import (
    RESERVED_DOC_ID,
    BucketStore,
    ChunkedSequence,
    PackConfig,
    Segment,
    SequenceRecord,
    best_fit_pack,
    chunk_transform,
    concat_and_chunk,
    concat_transform,
    decompose_corpus,
    decompose_document,
    materialize_record,
    prechunk,
    read_chunk_manifest,
    write_chunk_manifest,
)


def doc(doc_id, length, start=0):
    return TokenizedDocument(doc_id, np.arange(start, start + length, dtype=np.uint32))


# --- dataset decomposition -------------------------------------------------


def test_decompose_eleven():
    recs, dropped = decompose_document(doc(0, 11), 0, 13)
    assert [r.length for r in recs] == [8, 2, 1]
    assert [r.offset for r in recs] == [0, 8, 10]
    assert dropped == 0


def test_decompose_20000():
    recs, dropped = decompose_document(doc(0, 20000), 6, 13)
    assert [r.length for r in recs] == [8192, 8192, 2048, 1024, 512]
    # 20000 = 2*8192 + 2048 + 1024 + 512 + 32, and 32 < 64 is dropped
    assert dropped == 32
    assert sum(r.length for r in recs) + dropped == 20000
    assert binary_digits_desc(20000, 6, 13) == ([8192, 8192, 2048, 1024, 512], 32)


def test_decompose_exact_power():
    recs, dropped = decompose_document(doc(0, 64), 6, 13)
    assert recs == [SequenceRecord(0, 0, 64)] and dropped == 0


def test_decompose_empty_doc():
    assert decompose_document(doc(0, 0), 0, 13) == ([], 0)


def test_decompose_bad_range():
    with pytest.raises(ValueError):
        decompose_document(doc(0, 5), 4, 3)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 100_000), st.integers(0, 8), st.integers(0, 8))
def test_maximality_and_adjacency(l, lo, span):
    hi = lo + span
    recs, dropped = decompose_document(doc(1, l), lo, hi)
    assert ([r.length for r in recs], dropped) == binary_digits_desc(l, lo, hi)
    pos = 0
    for r in recs:
        assert r.offset == pos
        pos += r.length
    assert pos + dropped == l


def test_decompose_corpus_small():
    store = decompose_corpus([doc(0, 3), doc(1, 5)], 0, 13)
    counts = {i: len(v) for i, v in store.buckets.items() if v}
    assert counts == {0: 2, 1: 1, 2: 1}
    assert store.buckets[0] == [SequenceRecord(0, 2, 1), SequenceRecord(1, 4, 1)]
    store.check()


def test_decompose_corpus_empty():
    store = decompose_corpus([], 6, 13)
    assert store.n_records == 0 and store.dropped_tokens == 0
    assert sorted(store.buckets) == list(range(6, 14))


def test_decompose_corpus_conservation_and_slices():
    rng = np.random.default_rng(1)
    docs = [TokenizedDocument(i, rng.integers(0, 50000, size=rng.integers(0, 3000))) for i in range(1000)]
    store = decompose_corpus(docs, 4, 10)
    total = sum(d.source_len for d in docs)
    assert store.total_tokens + store.dropped_tokens == total
    by_id = {d.doc_id: d for d in docs}
    covered = Counter()
    for exp, rec in store.items():
        assert rec.length == 1 << exp
        d = by_id[rec.doc_id]
        assert np.array_equal(store.materialize(rec, d), d.tokens[rec.offset : rec.offset + rec.length])
        covered[rec.doc_id] += rec.length
    for d in docs:
        assert d.source_len - covered[d.doc_id] < 16


def test_append_eot():
    d = doc(0, 7)
    store = decompose_corpus([d], 0, 13, append_eot=True, eot_token=99)
    assert [r.length for _, r in store.items()] == [8]
    (rec,) = store.buckets[3]
    assert store.materialize(rec, d).tolist() == list(range(7)) + [99]
    with pytest.raises(ValueError):
        decompose_corpus([d], 0, 13, append_eot=True)


def test_bucket_manifest_roundtrip(tmp_path):
    store = decompose_corpus([doc(0, 300), doc(7, 100)], 2, 8)
    path = tmp_path / "b.jsonl"
    store.write_manifest(path)
    first = path.read_text().splitlines()[0]
    assert first == '{"exp": 2, "doc": 0, "off": 296, "len": 4}'
    back = BucketStore.read_manifest(path)
    assert {i: v for i, v in back.buckets.items() if v} == {i: v for i, v in store.buckets.items() if v}


def test_materialize_rejects_out_of_bounds():
    with pytest.raises(ValueError):
        materialize_record(SequenceRecord(0, 4, 4), doc(0, 6))


# --- concat and chunk ------------------------------------------------------


def test_concat_chunk_two_docs_identity():
    chunks = concat_and_chunk([doc(0, 3), doc(1, 3)], 4, eot_token=500, shuffle_seed=None)
    assert len(chunks) == 2
    assert chunks[0].segments == [Segment(0, 0, 0, 3), Segment(RESERVED_DOC_ID, 0, 3, 1)]
    assert chunks[1].segments == [Segment(1, 0, 0, 3), Segment(RESERVED_DOC_ID, 0, 3, 1)]
    docs = {0: doc(0, 3), 1: doc(1, 3, start=10)}
    assert chunks[1].materialize(docs).tolist() == [10, 11, 12, 500]


def test_concat_chunk_long_doc():
    chunks = concat_and_chunk([doc(0, 10)], 4, eot_token=0, shuffle_seed=None)
    assert [c.segments for c in chunks] == [[Segment(0, 0, 0, 4)], [Segment(0, 4, 0, 4)]]


def test_concat_chunk_shuffle_is_seeded():
    docs = [doc(i, 5) for i in range(20)]
    a = concat_and_chunk(docs, 16, 0, shuffle_seed=5)
    b = concat_and_chunk(docs, 16, 0, shuffle_seed=5)
    c = concat_and_chunk(docs, 16, 0, shuffle_seed=6)
    assert a == b
    assert a != c


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 40), max_size=30), st.integers(1, 50), st.integers(0, 2**64 - 1))
def test_concat_chunk_invariants(lengths, target, seed):
    docs = [doc(i, l) for i, l in enumerate(lengths)]
    chunks = concat_and_chunk(docs, target, 7, seed)
    nonempty = [l for l in lengths if l]
    assert len(chunks) * target == (sum(nonempty) + len(nonempty)) // target * target
    for c in chunks:
        c.check()
        assert c.target_len == target and c.pad_count == 0
    seen = Counter()
    for c in chunks:
        for s in c.segments:
            if not s.reserved:
                seen[s.doc_id] += s.length
    for i, l in enumerate(lengths):
        assert seen[i] <= l


# --- prechunk / best-fit decreasing ---------------------------------------


@pytest.mark.parametrize("l,n,expected", [(10, 4, [4, 4, 2]), (4, 4, [4]), (0, 4, [])])
def test_prechunk(l, n, expected):
    assert [c.length for c in prechunk([doc(0, l)], n)] == expected


def chunks_of(lengths):
    return [SequenceRecord(k, 0, l) for k, l in enumerate(lengths)]


def placement(bins):
    return [[s.doc_id for s in b.segments] for b in bins]


def test_bfd_example():
    bins = best_fit_pack(chunks_of([5, 4, 3, 2]), PackConfig(7, 0))
    assert placement(bins) == [[0, 3], [1, 2]]
    assert [b.pad_count for b in bins] == [0, 0]
    assert optimal_bins([5, 4, 3, 2], 7) == 2


def test_bfd_full_bins():
    bins = best_fit_pack(chunks_of([4, 4, 4]), PackConfig(4, 0))
    assert len(bins) == 3 and all(b.pad_count == 0 for b in bins)


def test_bfd_padding():
    (b,) = best_fit_pack(chunks_of([3]), PackConfig(8, 9))
    assert b.pad_count == 5
    assert b.materialize({0: doc(0, 3)}).tolist() == [0, 1, 2] + [9] * 5


def test_bfd_rejects_oversized():
    with pytest.raises(ValueError):
        best_fit_pack(chunks_of([9]), PackConfig(8, 0))


@settings(max_examples=400, deadline=None)
@given(st.integers(1, 16).flatmap(lambda n: st.tuples(st.just(n), st.lists(st.integers(1, n), max_size=8))))
def test_bfd_against_oracles(case):
    n, lengths = case
    bins = best_fit_pack(chunks_of(lengths), PackConfig(n, 0))
    for b in bins:
        b.check()
    assert placement(bins) == bfd_reference(lengths, n)
    assert len(bins) >= optimal_bins(lengths, n)


def test_bfd_segments_materialize():
    docs = [doc(0, 10), doc(1, 3, start=100)]
    bins = best_fit_pack(prechunk(docs, 4), PackConfig(4, 0))
    by_id = {d.doc_id: d for d in docs}
    flat = np.concatenate([b.materialize(by_id)[: 4 - b.pad_count] for b in bins])
    assert sorted(flat.tolist()) == sorted(list(range(10)) + [100, 101, 102])


def test_chunk_manifest_roundtrip(tmp_path):
    bins = best_fit_pack(chunks_of([3, 2, 6]), PackConfig(8, 0))
    p = tmp_path / "c.jsonl"
    write_chunk_manifest(bins, p)
    back = read_chunk_manifest(p)
    assert [(b.segments, b.pad_count, b.target_len) for b in back] == [
        (b.segments, b.pad_count, b.target_len) for b in bins
    ]


def test_chunked_sequence_check_detects_gap():
    with pytest.raises(ValueError):
        ChunkedSequence(4, [Segment(0, 0, 0, 2), Segment(1, 0, 3, 1)]).check()


# --- synthetic transforms --------------------------------------------------


def test_chunk_transform_8192_to_1024():
    out = chunk_transform([SequenceRecord(3, 0, 8192)], 10, shuffle_seed=1)
    assert len(out) == 8
    assert sorted(r.offset for r in out) == list(range(0, 8192, 1024))
    assert all(r.length == 1024 and r.doc_id == 3 for r in out)


def test_chunk_transform_conserves_tokens():
    records = [SequenceRecord(d, 0, 4) for d in range(5)]
    out = chunk_transform(records, 0, shuffle_seed=2)
    assert len(out) == 20
    assert sorted((r.doc_id, r.offset) for r in out) == [(d, o) for d in range(5) for o in range(4)]
    with pytest.raises(ValueError):
        chunk_transform(records, 2)


def test_concat_transform_128_to_1024():
    records = [SequenceRecord(d, 0, 128) for d in range(8)]
    result = concat_transform(records, 10, shuffle_seed=0)
    (seq,) = result.sequences
    assert result.dropped_records == 0
    assert seq.target_len == 1024 and len(seq.segments) == 8
    seq.check()
    assert sorted(s.doc_id for s in seq.segments) == list(range(8))


def test_concat_transform_drops_remainder():
    records = [SequenceRecord(d, 0, 128) for d in range(9)]
    result = concat_transform(records, 10, shuffle_seed=4)
    assert len(result.sequences) == 1 and result.dropped_records == 1
    used = {s.doc_id for s in result.sequences[0].segments}
    assert len(used) == 8
    with pytest.raises(ValueError):
        concat_transform(records, 7)
