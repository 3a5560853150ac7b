"""Semantic class relevance from normalized Google distance over an offline hit-count table.

The table file is JSON::

    {"total_N": 25270000000,
     "counts": {"open door": 1200, "close door": 800, "close door||open door": 150}}

Terms are canonicalised (lower case, trimmed, inner whitespace collapsed)
and pair keys are the two canonical terms sorted and joined by ``||``.
"""

import json
import math
import re

import numpy as np

from .exceptions import InvalidConfigurationError, InvalidInputError, UnknownTermError

PAIR_SEP = "||"


def canonical_term(term):
    return re.sub(r"\s+", " ", str(term).strip().lower())


def pair_key(p, q):
    a, b = sorted((canonical_term(p), canonical_term(q)))
    return a + PAIR_SEP + b


class HitCountTable:
    """Read-only hit counts keyed by canonical term or canonical term pair."""

    def __init__(self, total_N, counts):
        self.total_N = float(total_N)
        self._single = {}
        self._pair = {}
        for key, value in counts.items():
            value = float(value)
            if not value >= 0 or math.isinf(value):
                raise InvalidInputError(f"count for {key!r} must be finite and >= 0")
            if PAIR_SEP in key:
                p, q = key.split(PAIR_SEP, 1)
                self._pair[pair_key(p, q)] = value
            else:
                self._single[canonical_term(key)] = value
        if self._single and self.total_N < max(self._single.values()):
            raise InvalidInputError("total_N must be at least every single-term count")

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        try:
            return cls(doc["total_N"], doc["counts"])
        except KeyError as exc:
            raise InvalidInputError(f"hit-count table missing field {exc}") from None

    def to_dict(self):
        counts = dict(sorted(self._single.items()))
        counts.update(sorted(self._pair.items()))
        return {"total_N": self.total_N, "counts": counts}

    def count(self, term):
        key = canonical_term(term)
        try:
            return self._single[key]
        except KeyError:
            raise UnknownTermError(key) from None

    def joint_count(self, p, q):
        if canonical_term(p) == canonical_term(q):
            return self.count(p)
        key = pair_key(p, q)
        try:
            return self._pair[key]
        except KeyError:
            raise UnknownTermError(key) from None


def ngd(p, q, provider):
    """Normalized Google distance between terms ``p`` and ``q``.

    Returns ``math.inf`` when the terms never co-occur.
    """
    gp, gq = provider.count(p), provider.count(q)
    gpq = provider.joint_count(p, q)
    N = provider.total_N
    if gp <= 0 or gq <= 0:
        raise InvalidInputError(f"terms need positive hit counts, got {gp} and {gq}")
    if not N > max(gp, gq):
        raise InvalidConfigurationError("total_N must exceed both single-term counts")
    if gpq == 0:
        return math.inf
    lp, lq = math.log(gp), math.log(gq)
    return (max(lp, lq) - math.log(gpq)) / (math.log(N) - min(lp, lq))


def ngd_class_relevance(src_terms, trg_terms, provider):
    """``O[p, q] = exp(-NGD(src_terms[p], trg_terms[q]))``."""
    O = np.empty((len(src_terms), len(trg_terms)))
    for a, p in enumerate(src_terms):
        for b, q in enumerate(trg_terms):
            O[a, b] = math.exp(-ngd(p, q, provider))
    return O
