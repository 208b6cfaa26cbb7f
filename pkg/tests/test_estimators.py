import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from vslkit import (
    BestFitPacker,
    ConcatChunker,
    DatasetDecomposer,
    MixtureSpec,
    SequenceRecord,
    TokenizedDocument,
    VSLScheduler,
    decompose_corpus,
)
from vslkit.corpus import CorpusError
from vslkit.scheduler import ScheduleError, validate_schedule


def docs(*lengths):
    return [TokenizedDocument(i, np.arange(l)) for i, l in enumerate(lengths)]


def test_decomposer_params_and_clone():
    est = DatasetDecomposer(min_exp=0, max_exp=5)
    assert est.get_params() == {"min_exp": 0, "max_exp": 5, "append_eot": False, "eot_token": None}
    assert clone(est).get_params() == est.get_params()
    est.set_params(max_exp=6)
    assert est.max_exp == 6


def test_decomposer_matches_function():
    d = docs(3, 5, 100)
    store = DatasetDecomposer(0, 5).fit_transform(iter(d))
    assert store == decompose_corpus(d, 0, 5)


def test_decomposer_accepts_raw_inputs():
    store = DatasetDecomposer(0, 3).fit_transform(["abc", [1, 2, 3, 4, 5]])
    assert store.buckets[2] == [SequenceRecord(1, 0, 4)]


def test_decomposer_validates_on_fit():
    with pytest.raises(ValueError):
        DatasetDecomposer(5, 2).fit()
    with pytest.raises(ValueError):
        DatasetDecomposer(append_eot=True).fit()
    with pytest.raises(NotFittedError):
        DatasetDecomposer().transform(docs(3))


def test_duplicate_ids_rejected():
    d = [TokenizedDocument(1, [1]), TokenizedDocument(1, [2])]
    with pytest.raises(CorpusError):
        DatasetDecomposer(0, 2).fit_transform(d)


def test_chunker_and_packer():
    d = docs(3, 3)
    chunks = ConcatChunker(target_len=4, eot_token=9, shuffle_seed=None).fit_transform(d)
    assert len(chunks) == 2
    bins = BestFitPacker(context_size=4, pad_token=0).fit_transform(docs(3))
    assert len(bins) == 1 and bins[0].pad_count == 1
    with pytest.raises(ValueError):
        ConcatChunker(target_len=0).fit()


def test_scheduler_estimator():
    d = [TokenizedDocument(i, np.zeros(2**e, dtype=np.uint32)) for i, e in enumerate([3] * 8 + [4] * 4)]
    store = DatasetDecomposer(3, 4).fit_transform(d)
    sched = VSLScheduler(curriculum="uniform")
    sched.set_params(mixture=MixtureSpec({3: 64, 4: 64}), batch_tokens=32, seed=5)
    report = sched.fit_transform(store)
    assert validate_schedule(report, sched.selection_, 32)
    assert len(report.steps) == 4
    assert sched.curriculum_.odds == {3: 1, 4: 1}


def test_scheduler_preset_scaled():
    d = [TokenizedDocument(i, np.zeros(1024, dtype=np.uint32)) for i in range(100)]
    store = DatasetDecomposer(6, 13).fit_transform(d)
    sched = VSLScheduler("1k-only", "grow-p2", cycles=2, batch_tokens=8192, budget_unit=1024, seed=1)
    report = sched.fit_transform(store)
    assert len(report.steps) == 96 * 1024 // 8192
    assert {s.cycle_index for s in report.steps} == {1, 2}


def test_scheduler_refuses_bad_b():
    d = [TokenizedDocument(i, np.zeros(16, dtype=np.uint32)) for i in range(4)]
    store = DatasetDecomposer(0, 4).fit_transform(d)
    with pytest.raises(ScheduleError):
        VSLScheduler(MixtureSpec({4: 64}), "uniform", batch_tokens=8).fit_transform(store)
