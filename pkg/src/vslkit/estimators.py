"""scikit-learn style wrappers around the preparation and scheduling functions.

The estimators are stateless transformers over document collections (``fit``
only validates parameters) except :class:`VSLScheduler`, whose ``fit`` draws
the mixture selection from a :class:`~vslkit.decompose.BucketStore`.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_documents, check_exponent_range, check_int, check_seed, check_token_id
from .decompose import (
    BucketStore,
    PackConfig,
    best_fit_pack,
    concat_and_chunk,
    decompose_corpus,
    prechunk,
)
from .scheduler import (
    CurriculumSpec,
    MixtureSpec,
    ScheduleError,
    ScheduleReport,
    build_mixture,
    curriculum_preset,
    make_schedule,
    mixture_preset,
    validate_schedule,
)


class _DocumentTransformer(TransformerMixin, BaseEstimator):
    def _check_params(self):
        pass

    def fit(self, X=None, y=None):
        self._check_params()
        self.is_fitted_ = True
        return self

    def fit_transform(self, X, y=None, **fit_params):
        # X may be a one-shot iterator; fit does not consume it.
        return self.fit().transform(X)


class DatasetDecomposer(_DocumentTransformer):
    """Binary decomposition of documents into power-of-two buckets.

    Parameters
    ----------
    min_exp, max_exp : int
        Smallest and largest bucket exponents. Spans shorter than
        ``2**min_exp`` are dropped; documents longer than ``2**max_exp``
        yield several top-bucket sequences.
    append_eot : bool
        Append ``eot_token`` to every document before decomposing.
    eot_token : int or None
    """

    def __init__(self, min_exp: int = 6, max_exp: int = 13, append_eot: bool = False, eot_token: int | None = None):
        self.min_exp = min_exp
        self.max_exp = max_exp
        self.append_eot = append_eot
        self.eot_token = eot_token

    def _check_params(self):
        check_exponent_range(self.min_exp, self.max_exp)
        if self.append_eot:
            if self.eot_token is None:
                raise ValueError("append_eot=True requires eot_token")
            check_token_id(self.eot_token, "eot_token")

    def transform(self, X) -> BucketStore:
        check_is_fitted(self)
        return decompose_corpus(
            check_documents(X), self.min_exp, self.max_exp, append_eot=self.append_eot, eot_token=self.eot_token
        )


class ConcatChunker(_DocumentTransformer):
    def __init__(self, target_len: int = 8192, eot_token: int = 0, shuffle_seed: int | None = 0):
        self.target_len = target_len
        self.eot_token = eot_token
        self.shuffle_seed = shuffle_seed

    def _check_params(self):
        check_int(self.target_len, "target_len", min_value=1)
        check_token_id(self.eot_token, "eot_token")
        check_seed(self.shuffle_seed)

    def transform(self, X):
        check_is_fitted(self)
        return concat_and_chunk(check_documents(X), self.target_len, self.eot_token, self.shuffle_seed)


class BestFitPacker(_DocumentTransformer):
    def __init__(self, context_size: int = 2048, pad_token: int = 0):
        self.context_size = context_size
        self.pad_token = pad_token

    def _check_params(self):
        PackConfig(self.context_size, self.pad_token)

    def transform(self, X):
        check_is_fitted(self)
        config = PackConfig(self.context_size, self.pad_token)
        return best_fit_pack(prechunk(check_documents(X), config.context_size), config)


class VSLScheduler(BaseEstimator):
    """Variable-sequence-length batch scheduler.

    ``fit(store)`` selects the mixture's sequences; ``transform`` (or
    ``fit_transform``) emits a validated :class:`ScheduleReport`.

    Parameters
    ----------
    mixture : MixtureSpec or str
        A spec, or a preset name whose coefficients are scaled by ``budget_unit``.
    curriculum : CurriculumSpec or str
        A spec, or a preset name expanded over the mixture's buckets.
    cycles : int or None
        Overrides the curriculum's cycle count when given.
    batch_tokens : int
        Tokens per optimization step.
    budget_unit : int
        Tokens per preset coefficient (``2**30`` reproduces full-scale budgets).
    seed : int
    """

    def __init__(
        self,
        mixture="natural",
        curriculum="uniform",
        cycles: int | None = None,
        batch_tokens: int = 1 << 19,
        budget_unit: int = 1 << 30,
        seed: int = 0,
    ):
        self.mixture = mixture
        self.curriculum = curriculum
        self.cycles = cycles
        self.batch_tokens = batch_tokens
        self.budget_unit = budget_unit
        self.seed = seed

    def _resolve(self) -> tuple[MixtureSpec, CurriculumSpec]:
        mixture = self.mixture
        if isinstance(mixture, str):
            mixture = mixture_preset(mixture, check_int(self.budget_unit, "budget_unit", min_value=1))
        curriculum = self.curriculum
        if isinstance(curriculum, str):
            curriculum = curriculum_preset(curriculum, self.cycles or 1, sorted(mixture.active()))
        elif self.cycles is not None:
            curriculum = CurriculumSpec(curriculum.odds, self.cycles, curriculum.name)
        return mixture, curriculum

    def fit(self, X: BucketStore, y=None):
        check_int(self.batch_tokens, "batch_tokens", min_value=1)
        self.mixture_, self.curriculum_ = self._resolve()
        self.selection_ = build_mixture(X, self.mixture_, check_seed(self.seed))
        return self

    def transform(self, X=None) -> ScheduleReport:
        check_is_fitted(self, "selection_")
        report = make_schedule(
            self.selection_, self.curriculum_, self.batch_tokens, self.seed, mixture_name=self.mixture_.name
        )
        verdict = validate_schedule(report, self.selection_, self.batch_tokens)
        if not verdict:
            raise ScheduleError(f"refusing invalid schedule: {verdict.reason}")
        self.report_ = report
        return report

    def fit_transform(self, X: BucketStore, y=None) -> ScheduleReport:
        return self.fit(X).transform()
