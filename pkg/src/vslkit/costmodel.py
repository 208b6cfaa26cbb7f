"""Affine step-time model ``T(l) = alpha + beta * l`` at fixed tokens per step.

With ``b`` tokens per step, attention work per step grows like ``b * l``, so
step time is affine in the sequence length ``l``. Because every VSL step has
the same ``b``, a mixture that puts ``n_i`` tokens in bucket ``i`` spends a
fraction ``n_i / sum(n)`` of its steps at length ``2**i``.
"""

from __future__ import annotations

import csv
import json
import os
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .scheduler import MixtureSpec


@dataclass(frozen=True)
class Measurement:
    seq_len: int
    step_time: float
    b: int

    def __post_init__(self):
        if not (self.seq_len > 0 and self.step_time > 0 and self.b > 0):
            raise ValueError(f"measurement values must be positive: {self}")


class StepTimeModel(RegressorMixin, BaseEstimator):
    """Least-squares affine fit of step time (ms) against sequence length.

    Parameters
    ----------
    b_ref : int or None
        Tokens per step the measurements were taken at. Only recorded; it
        cannot be inferred from ``(seq_len, time)`` pairs alone.

    Attributes
    ----------
    alpha_ : float
        Length-independent cost per step, in ms.
    beta_ : float
        Extra ms per token of sequence length.
    negative_beta_ : bool
        Set when the fit slopes downward, which the model does not expect.
    """

    def __init__(self, b_ref: int | None = None):
        self.b_ref = b_ref

    def fit(self, X, y):
        x = _as_lengths(X)
        y = np.asarray(y, dtype=np.float64).ravel()
        if x.shape != y.shape:
            raise ValueError(f"X and y disagree in length: {x.shape[0]} vs {y.shape[0]}")
        if np.unique(x).size < 2:
            raise ValueError("need at least two distinct sequence lengths to fit a line")
        xm, ym = x.mean(), y.mean()
        dx = x - xm
        self.beta_ = float(np.dot(dx, y - ym) / np.dot(dx, dx))
        self.alpha_ = float(ym - self.beta_ * xm)
        self.negative_beta_ = self.beta_ < 0
        if self.negative_beta_:
            warnings.warn(f"fitted beta {self.beta_:.6g} is negative", UserWarning, stacklevel=2)
        if self.alpha_ < 0:
            warnings.warn(f"fitted alpha {self.alpha_:.6g} is negative", UserWarning, stacklevel=2)
        self.source_measurements_ = [(float(l), float(t)) for l, t in zip(x, y)]
        self.n_features_in_ = 1
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, ("alpha_", "beta_"))
        return self.alpha_ + self.beta_ * _as_lengths(X)

    def expected_step_time(self, spec: MixtureSpec) -> float:
        return expected_step_time(self, spec)

    def speedup(self, spec: MixtureSpec, baseline_len: int) -> float:
        return speedup(self, spec, baseline_len)

    def to_json(self) -> dict:
        check_is_fitted(self, ("alpha_", "beta_"))
        return {
            "alpha": self.alpha_,
            "beta": self.beta_,
            "b_ref": self.b_ref,
            "source_measurements": [[l, t, self.b_ref] for l, t in self.source_measurements_],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "StepTimeModel":
        model = cls(b_ref=obj.get("b_ref"))
        model.alpha_ = float(obj["alpha"])
        model.beta_ = float(obj["beta"])
        model.negative_beta_ = model.beta_ < 0
        model.source_measurements_ = [(float(m[0]), float(m[1])) for m in obj.get("source_measurements", [])]
        model.n_features_in_ = 1
        return model

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "StepTimeModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _as_lengths(X) -> np.ndarray:
    x = np.asarray(X, dtype=np.float64)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise ValueError(f"expected a single feature (sequence length), got {x.shape[1]}")
        x = x[:, 0]
    elif x.ndim != 1:
        x = x.ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("sequence lengths must be finite")
    return x


def fit(measurements: Sequence[Measurement]) -> StepTimeModel:
    """Fit a model from measurements taken at a single tokens-per-step value."""
    measurements = list(measurements)
    if len(measurements) < 2:
        raise ValueError("need at least two measurements")
    bs = {m.b for m in measurements}
    if len(bs) != 1:
        raise ValueError(f"measurements mix tokens-per-step values {sorted(bs)}; calibrate per b")
    (b,) = bs
    return StepTimeModel(b_ref=b).fit([m.seq_len for m in measurements], [m.step_time for m in measurements])


def expected_step_time(model: StepTimeModel, spec: MixtureSpec) -> float:
    """Mean step time when steps land in bucket ``i`` with frequency ``n_i / sum(n)``."""
    check_is_fitted(model, ("alpha_", "beta_"))
    active = spec.active()
    total = sum(active.values())
    if total == 0:
        raise ValueError(f"mixture {spec.name!r} has no tokens")
    mean_len = sum(n << i for i, n in active.items()) / total
    return model.alpha_ + model.beta_ * mean_len


def speedup(model: StepTimeModel, spec: MixtureSpec, baseline_len: int) -> float:
    """Baseline fixed-length step time divided by the mixture's expected step time."""
    return float(model.predict([baseline_len])[0]) / expected_step_time(model, spec)


def read_measurements(path: str | os.PathLike) -> list[Measurement]:
    """Read ``seq_len,step_time_ms,b`` rows (a header row is optional)."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and not row[0].strip().lstrip("-").isdigit():
                continue
            try:
                l, t, b = row[:3]
                out.append(Measurement(int(l), float(t), int(b)))
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    return out


def write_measurements(measurements: Iterable[Measurement], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seq_len", "step_time_ms", "b"])
        for m in measurements:
            w.writerow([m.seq_len, m.step_time, m.b])
