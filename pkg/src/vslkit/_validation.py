"""Input validation helpers shared by the functional API and the estimators."""

from __future__ import annotations

import numbers
from typing import Iterable

from .corpus import CorpusError, TokenizedDocument, byte_tokenize

MAX_EXP = 62


def check_int(value, name: str, *, min_value: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    value = int(value)
    if min_value is not None and value < min_value:
        raise ValueError(f"{name} must be >= {min_value}, got {value}")
    return value


def check_exponent_range(min_exp, max_exp) -> tuple[int, int]:
    min_exp = check_int(min_exp, "min_exp", min_value=0)
    max_exp = check_int(max_exp, "max_exp", min_value=0)
    if min_exp > max_exp:
        raise ValueError(f"min_exp ({min_exp}) must not exceed max_exp ({max_exp})")
    if max_exp > MAX_EXP:
        raise ValueError(f"max_exp must be <= {MAX_EXP}, got {max_exp}")
    return min_exp, max_exp


def check_seed(seed) -> int | None:
    if seed is None:
        return None
    seed = check_int(seed, "seed", min_value=0)
    if seed >= 1 << 64:
        raise ValueError("seed must fit in 64 bits")
    return seed


def check_token_id(token, name: str) -> int:
    token = check_int(token, name, min_value=0)
    if token >= 1 << 32:
        raise ValueError(f"{name} must be < 2^32, got {token}")
    return token


def check_documents(X: Iterable) -> list[TokenizedDocument]:
    """Coerce ``X`` into a list of documents with unique ids.

    Items may be :class:`TokenizedDocument`, strings (byte-tokenized), or
    integer sequences; the latter two get their position as id.
    """
    if isinstance(X, (str, bytes)):
        raise TypeError("expected an iterable of documents, got a single string")
    docs = []
    seen = set()
    for k, item in enumerate(X):
        if isinstance(item, TokenizedDocument):
            doc = item
        elif isinstance(item, str):
            doc = byte_tokenize(item, doc_id=k)
        else:
            doc = TokenizedDocument(k, item)
        if doc.doc_id in seen:
            raise CorpusError(f"duplicate document id {doc.doc_id}")
        seen.add(doc.doc_id)
        docs.append(doc)
    return docs
