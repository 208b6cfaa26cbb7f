from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import avg_ctx_direct
from vslkit.corpus import TokenizedDocument
from vslkit.decompose import RESERVED_DOC_ID, ChunkedSequence, Segment, SequenceRecord, decompose_corpus
from vslkit.scheduler import MixtureSpec, mixture_preset
from vslkit.stats import (
    Histogram,
    avg_lengths,
    context_distribution,
    length_distribution,
    mixture_avg_lengths,
    provenance_csv,
    provenance_histogram,
)


def doc(i, l):
    return TokenizedDocument(i, np.zeros(l, dtype=np.uint32))


def test_avg_lengths_uniform_four():
    s = avg_lengths([4, 4])
    assert s.avg_seq_len == 4 and s.avg_ctx_len == 1.5
    assert s.total_tokens == 8 and s.total_sequences == 2


def test_avg_lengths_empty_and_invalid():
    with pytest.raises(ValueError):
        avg_lengths([])
    with pytest.raises(ValueError):
        avg_lengths([3, 0])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 3000), min_size=1, max_size=40))
def test_avg_ctx_matches_enumeration(lengths):
    s = avg_lengths(lengths)
    assert s.avg_ctx_len == pytest.approx(avg_ctx_direct(lengths), rel=1e-12)
    # token-weighted, so it can exceed avg_seq_len; bounded by the longest sequence
    assert 0 <= s.avg_ctx_len <= (max(lengths) - 1) / 2


@pytest.mark.parametrize("l", [1, 2, 7, 1024])
def test_uniform_length_context(l):
    assert avg_lengths([l] * 5).avg_ctx_len == (l - 1) / 2


def test_natural_cross_check():
    s = mixture_avg_lengths(mixture_preset("natural"))
    # sequence count in units of 2**30 / 2**13: sum(coef * 2**(13 - i)) = 1631
    assert s.avg_seq_len == pytest.approx(96 * 8192 / 1631)
    assert s.avg_ctx_len == pytest.approx(195424 / 192)


@pytest.mark.parametrize(
    "name,seq,ctx",
    [("1k-only", 1024, 511.5), ("le2k", 195.05, 335.5), ("ge1k", 2184.53, 1919.5), ("ge256", 780.19, 1343.5)],
)
def test_mixture_closed_form_values(name, seq, ctx):
    s = mixture_avg_lengths(mixture_preset(name))
    assert s.avg_seq_len == pytest.approx(seq, abs=0.01)
    assert s.avg_ctx_len == pytest.approx(ctx, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.dictionaries(st.integers(0, 8), st.integers(0, 20), min_size=1))
def test_mixture_equals_expanded(counts):
    if not any(counts.values()):
        return
    spec = MixtureSpec({i: c << i for i, c in counts.items()})
    expanded = [1 << i for i, c in counts.items() for _ in range(c)]
    assert mixture_avg_lengths(spec) == avg_lengths(expanded)


def test_mixture_all_zero():
    with pytest.raises(ValueError):
        mixture_avg_lengths(MixtureSpec({5: 0}))


def test_context_pure_sequence():
    h = context_distribution([SequenceRecord(0, 0, 4)])
    assert h.as_dict() == {0: 1, 1: 1, 2: 1, 3: 1}


def test_context_two_segments():
    chunk = ChunkedSequence(4, [Segment(0, 0, 0, 3), Segment(1, 0, 3, 1)])
    assert context_distribution([chunk]).as_dict() == {0: 2, 1: 1, 2: 1}


def test_context_excludes_reserved_and_pad():
    chunk = ChunkedSequence(8, [Segment(0, 0, 0, 3), Segment(RESERVED_DOC_ID, 0, 3, 1), Segment(1, 0, 4, 2)], 2)
    h = context_distribution([chunk])
    assert h.total == 5
    assert h.as_dict() == {0: 2, 1: 2, 2: 1}


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 500), min_size=1, max_size=30))
def test_context_mean_identity(lengths):
    h = context_distribution([SequenceRecord(k, 0, l) for k, l in enumerate(lengths)])
    exact = Fraction(sum(l * (l - 1) for l in lengths), 2 * sum(lengths))
    assert h.total == sum(lengths)
    assert h.mean() == pytest.approx(float(exact), rel=1e-12)


def test_histogram_rebin_and_csv():
    h = Histogram.from_counts([1, 2, 3, 4, 5])
    r = h.rebin_log2()
    assert r.edges.tolist() == [0, 1, 2, 4, 8]
    assert r.counts.tolist() == [1, 2, 7, 5]
    assert r.total == h.total
    assert h.to_csv().splitlines()[:2] == ["bin_start,bin_end,count", "0,1,1"]


def test_length_distribution():
    assert length_distribution([2, 2, 5]).as_dict() == {2: 2, 5: 1}


def test_provenance_eleven():
    d = doc(0, 11)
    store = decompose_corpus([d], 0, 13)
    h = provenance_histogram(store, [d])
    assert (h[3], h[1], h[0]) == ({3: 8}, {3: 2}, {3: 1})
    assert all(not h[i] for i in h if i not in (0, 1, 3))


def test_provenance_exact_power():
    d = doc(0, 512)
    h = provenance_histogram(decompose_corpus([d], 6, 13), {0: 512})
    assert h[9] == {9: 512}
    assert all(not v for i, v in h.items() if i != 9)


def test_provenance_lower_bound_and_missing():
    rng = np.random.default_rng(0)
    docs = [doc(i, int(l)) for i, l in enumerate(rng.integers(0, 20000, 300))]
    store = decompose_corpus(docs, 6, 13)
    h = provenance_histogram(store, docs)
    for i, row in h.items():
        assert all(k >= i for k in row)
        assert sum(row.values()) == store.bucket_tokens(i)
    assert provenance_csv(h).startswith("bucket,length_class,tokens\n")
    with pytest.raises(KeyError, match="missing"):
        provenance_histogram(store, docs[:10])
