"""Token-budgeted mixtures over buckets and variable-sequence-length schedules.

A schedule is a list of optimization steps. Each step draws one bucket ``i``
and pops ``b / 2**i`` sequences from it, so every step carries exactly ``b``
tokens. Which bucket is drawn is governed by per-bucket odds, optionally
repeated over several cycles (a length curriculum).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, NamedTuple, Sequence

from ._validation import check_int, check_seed
from .decompose import BucketStore, SequenceRecord
from .prng import SplitMix64

GIB = 1 << 30

Selection = dict[int, list[SequenceRecord]]


class ScheduleError(ValueError):
    pass


class InsufficientTokensError(ScheduleError):
    def __init__(self, exp: int, requested: int, available: int):
        self.exp, self.requested, self.available = exp, requested, available
        super().__init__(
            f"bucket {exp}: budget {requested} tokens exceeds the {available} available "
            f"(short by {requested - available})"
        )


@dataclass(frozen=True)
class MixtureSpec:
    budgets: Mapping[int, int]
    name: str = "custom"

    def __post_init__(self):
        clean = {}
        for exp, n in self.budgets.items():
            exp = check_int(exp, "bucket exponent", min_value=0)
            n = check_int(n, f"budget of bucket {exp}", min_value=0)
            if n % (1 << exp):
                raise ScheduleError(f"bucket {exp}: budget {n} is not a whole number of {1 << exp}-token sequences")
            clean[exp] = n
        object.__setattr__(self, "budgets", dict(sorted(clean.items())))

    @property
    def total_tokens(self) -> int:
        return sum(self.budgets.values())

    def active(self) -> dict[int, int]:
        return {i: n for i, n in self.budgets.items() if n > 0}

    def scaled(self, factor: int) -> "MixtureSpec":
        return MixtureSpec({i: n * factor for i, n in self.budgets.items()}, self.name)

    def to_json(self) -> dict:
        return {"name": self.name, "budgets": {str(i): n for i, n in self.budgets.items()}}

    @classmethod
    def from_json(cls, obj: dict) -> "MixtureSpec":
        return cls({int(i): int(n) for i, n in obj["budgets"].items()}, obj.get("name", "custom"))


@dataclass(frozen=True)
class CurriculumSpec:
    odds: Mapping[int, float]
    cycles: int = 1
    name: str = "custom"

    def __post_init__(self):
        check_int(self.cycles, "cycles", min_value=1)
        clean = {}
        for exp, o in self.odds.items():
            if not o >= 0:
                raise ScheduleError(f"bucket {exp}: odds must be non-negative, got {o}")
            clean[int(exp)] = o
        object.__setattr__(self, "odds", dict(sorted(clean.items())))

    def to_json(self) -> dict:
        return {"name": self.name, "cycles": self.cycles, "odds": {str(i): o for i, o in self.odds.items()}}

    @classmethod
    def from_json(cls, obj: dict) -> "CurriculumSpec":
        return cls({int(i): o for i, o in obj["odds"].items()}, int(obj.get("cycles", 1)), obj.get("name", "custom"))


# Table-2 style mixtures, coefficients in units of 2**30 tokens.
MIXTURE_PRESETS: dict[str, dict[int, int]] = {
    "natural": dict(zip(range(6, 14), (3, 6, 10, 17, 21, 17, 13, 9))),
    "equal": dict(zip(range(6, 14), (12,) * 8)),
    "1k-only": {10: 96},
    "le2k": dict(zip(range(6, 12), (16,) * 6)),
    "ge256": dict(zip(range(8, 14), (16,) * 6)),
    "mid": dict(zip(range(8, 12), (24,) * 4)),
    "ge1k": dict(zip(range(10, 14), (24,) * 4)),
}
MIXTURE_ALIASES = {"≤2k": "le2k", "<=2k": "le2k", "≥256": "ge256", ">=256": "ge256", "≥1k": "ge1k", ">=1k": "ge1k"}


def mixture_preset(name: str, unit: int = GIB) -> MixtureSpec:
    """Named mixture with budgets ``coefficient * unit`` tokens."""
    key = MIXTURE_ALIASES.get(name, name).lower()
    try:
        coef = MIXTURE_PRESETS[key]
    except KeyError:
        raise ScheduleError(f"unknown mixture preset {name!r}; choose from {sorted(MIXTURE_PRESETS)}") from None
    return MixtureSpec({i: c * unit for i, c in coef.items()}, key)


# Curriculum odds as a function of the bucket exponent. On D8..D13 these give
# exactly the tabulated odds; outside that range the same progression continues.
CURRICULUM_PRESETS: dict[str, Callable[[int], float]] = {
    "uniform": lambda i: 1,
    "grow-linear": lambda i: 14 - i,
    "grow-p2": lambda i: 2 ** (13 - i),
    "grow-p100": lambda i: 100 ** (13 - i),
    "shrink-p100": lambda i: 100 ** (i - 8),
}


def curriculum_preset(name: str, cycles: int = 1, exponents: Sequence[int] = range(8, 14)) -> CurriculumSpec:
    key = name.lower()
    try:
        fn = CURRICULUM_PRESETS[key]
    except KeyError:
        raise ScheduleError(
            f"unknown curriculum preset {name!r}; choose from {sorted(CURRICULUM_PRESETS)}"
        ) from None
    return CurriculumSpec({i: fn(i) for i in exponents}, cycles, key)


class BatchStep(NamedTuple):
    step_index: int
    cycle_index: int
    exp: int
    refs: list[SequenceRecord]

    @property
    def tokens(self) -> int:
        return sum(r.length for r in self.refs)


@dataclass
class ScheduleReport:
    steps: list[BatchStep]
    dropped_tail_tokens: dict[int, int]
    seed: int
    b: int
    curriculum: CurriculumSpec | None = None
    mixture_name: str | None = None
    draws: int = 0

    @property
    def total_tokens(self) -> int:
        return len(self.steps) * self.b

    def sequence_lengths(self) -> Iterator[int]:
        for step in self.steps:
            for r in step.refs:
                yield r.length

    def header(self) -> dict:
        cur = self.curriculum
        return {
            "seed": self.seed,
            "b": self.b,
            "curriculum": cur.name if cur else None,
            "odds": {str(i): o for i, o in cur.odds.items()} if cur else {},
            "cycles": cur.cycles if cur else 1,
            "mixture": self.mixture_name,
            "dropped_tail_tokens": {str(i): n for i, n in sorted(self.dropped_tail_tokens.items())},
            "steps": len(self.steps),
        }

    def manifest_lines(self) -> Iterator[str]:
        yield json.dumps(self.header())
        for s in self.steps:
            line = {"step": s.step_index, "cycle": s.cycle_index, "exp": s.exp,
                    "refs": [[r.doc_id, r.offset] for r in s.refs]}
            yield json.dumps(line)

    def write_manifest(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.manifest_lines():
                fh.write(line + "\n")

    @classmethod
    def read_manifest(cls, path: str | os.PathLike) -> "ScheduleReport":
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln for ln in fh if ln.strip()]
        if not lines:
            raise ScheduleError(f"{path}: empty schedule manifest")
        head = json.loads(lines[0])
        if "b" not in head or "seed" not in head:
            raise ScheduleError(f"{path}: first line is not a schedule header")
        steps = []
        for lineno, line in enumerate(lines[1:], start=2):
            obj = json.loads(line)
            exp = int(obj["exp"])
            refs = [SequenceRecord(int(d), int(o), 1 << exp) for d, o in obj["refs"]]
            steps.append(BatchStep(int(obj["step"]), int(obj["cycle"]), exp, refs))
        cur = None
        if head.get("curriculum") is not None or head.get("odds"):
            cur = CurriculumSpec({int(i): o for i, o in head.get("odds", {}).items()},
                                 int(head.get("cycles", 1)), head.get("curriculum") or "custom")
        dropped = {int(i): int(n) for i, n in head.get("dropped_tail_tokens", {}).items()}
        return cls(steps, dropped, int(head["seed"]), int(head["b"]), cur, head.get("mixture"))


def build_mixture(store: BucketStore, spec: MixtureSpec, seed: int = 0) -> Selection:
    """Shuffle each bucket and keep the first ``n_i / 2**i`` records.

    Buckets are processed in ascending exponent order from one generator, so
    the selection depends only on the store, the budgets and the seed.
    """
    rng = SplitMix64(check_seed(seed))
    selection: Selection = {}
    for exp, n in spec.active().items():
        available = store.bucket_tokens(exp) if exp in store.buckets else 0
        if n > available:
            raise InsufficientTokensError(exp, n, available)
    for exp, n in spec.active().items():
        pool = list(store.buckets[exp])
        rng.shuffle(pool)
        selection[exp] = pool[: n >> exp]
    return selection


def _cycle_subsets(records: list[SequenceRecord], per_batch: int, cycles: int) -> list[list[SequenceRecord]]:
    n_batches = len(records) // per_batch
    base = n_batches // cycles
    subsets, pos = [], 0
    for j in range(cycles):
        size = base * per_batch
        if j == cycles - 1:
            size = len(records) - pos
        subsets.append(records[pos : pos + size])
        pos += size
    return subsets


def make_schedule(
    selection: Mapping[int, Sequence[SequenceRecord]],
    curriculum: CurriculumSpec,
    b: int,
    seed: int = 0,
    *,
    mixture_name: str | None = None,
) -> ScheduleReport:
    """Length-based sampling with a cyclic curriculum.

    Each bucket's selection is cut into ``cycles`` contiguous subsets of whole
    batches (the last also takes the remainder). Within a cycle, each step
    draws a bucket with probability proportional to its odds among buckets
    whose subset still holds a full batch, then pops ``b / 2**i`` sequences.
    One generator value is consumed per step. Leftovers smaller than a batch
    are reported in ``dropped_tail_tokens``.
    """
    b = check_int(b, "b", min_value=1)
    seed = check_seed(seed)
    active = sorted(i for i, recs in selection.items() if len(recs))
    for i in active:
        if b % (1 << i):
            raise ScheduleError(f"b={b} is not a multiple of the bucket {i} sequence length {1 << i}")
        if not curriculum.odds.get(i, 0) > 0:
            raise ScheduleError(f"bucket {i} has a non-empty selection but no positive odds")
        bad = next((r for r in selection[i] if r.length != 1 << i), None)
        if bad is not None:
            raise ScheduleError(f"bucket {i} holds record {bad} of the wrong length")

    c = curriculum.cycles
    per_batch = {i: b >> i for i in active}
    subsets = {i: _cycle_subsets(list(selection[i]), per_batch[i], c) for i in active}
    dropped = {i: 0 for i in active}

    rng = SplitMix64(seed)
    steps: list[BatchStep] = []
    for j in range(c):
        cursor = {i: 0 for i in active}
        live = []
        for i in active:
            sub = subsets[i][j]
            if len(sub) >= per_batch[i]:
                live.append(i)
            else:
                dropped[i] += len(sub) << i
        while live:
            odds = [float(curriculum.odds[i]) for i in live]
            total = sum(odds)
            cumulative, acc = [], 0.0
            for o in odds:
                acc += o / total
                cumulative.append(acc)
            i = live[rng.choice_index(cumulative)]
            sub, k = subsets[i][j], cursor[i]
            take = per_batch[i]
            steps.append(BatchStep(len(steps) + 1, j + 1, i, sub[k : k + take]))
            cursor[i] = k + take
            if len(sub) - cursor[i] < take:
                dropped[i] += (len(sub) - cursor[i]) << i
                live.remove(i)
    return ScheduleReport(steps, dropped, seed, b, curriculum, mixture_name, rng.draws)


class Verdict(NamedTuple):
    ok: bool
    reason: str = "ok"

    def __bool__(self) -> bool:
        return self.ok


def validate_schedule(
    report: ScheduleReport, selection: Mapping[int, Sequence[SequenceRecord]], b: int | None = None
) -> Verdict:
    """Check a schedule against its selection; return the first violation found."""
    b = report.b if b is None else b
    pool = {r: i for i, recs in selection.items() for r in recs}
    seen = set()
    last_cycle = 0
    for k, step in enumerate(report.steps, start=1):
        if step.step_index != k:
            return Verdict(False, f"step numbering: expected {k}, got {step.step_index}")
        if step.cycle_index < last_cycle:
            return Verdict(False, f"cycle order: step {k} returns to cycle {step.cycle_index}")
        last_cycle = step.cycle_index
        for r in step.refs:
            if r.length != 1 << step.exp:
                return Verdict(False, f"sequence length: step {k} has {r} in bucket {step.exp}")
        if len(step.refs) << step.exp != b:
            return Verdict(False, f"token count: step {k} carries {len(step.refs) << step.exp} tokens, expected {b}")
        for r in step.refs:
            if r in seen:
                return Verdict(False, f"duplicate sequence: {r} appears twice (step {k})")
            seen.add(r)
            if pool.get(r) != step.exp:
                return Verdict(False, f"foreign sequence: {r} at step {k} is not in the bucket {step.exp} selection")
    selected = sum(len(recs) << i for i, recs in selection.items())
    accounted = len(report.steps) * b + sum(report.dropped_tail_tokens.values())
    if accounted != selected:
        return Verdict(False, f"token accounting: steps + dropped = {accounted}, selected = {selected}")
    return Verdict(True)
