"""Dirichlet-multinomial machinery for uncertain likelihood models.

All quantities are returned in the log domain. ``-inf`` is a legitimate
value (zero probability / zero likelihood ratio); ``+inf`` only appears as
the certain-evidence limit of a matched hypothesis.

Categories are indexed from 0.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln

PROB_ATOL = 1e-12
TOTAL_ATOL = 1e-9


def _as_vector(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < 2:
        raise ValueError(f"{name} needs at least 2 categories, got {arr.size}")
    return arr


@dataclass(frozen=True, eq=False)
class CategoricalParams:
    """Probability vector over K >= 2 signal categories."""

    probs: np.ndarray

    def __post_init__(self):
        p = _as_vector(self.probs, "probs")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError(f"probabilities must be finite and non-negative: {p}")
        if abs(p.sum() - 1.0) > PROB_ATOL:
            raise ValueError(f"probabilities must sum to 1 (got {p.sum()!r})")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def K(self) -> int:
        return self.probs.size

    def __eq__(self, other):
        if not isinstance(other, CategoricalParams):
            return NotImplemented
        return self.K == other.K and bool(np.all(self.probs == other.probs))

    def __hash__(self):
        return hash(self.probs.tobytes())

    def __repr__(self):
        return f"CategoricalParams({self.probs.tolist()})"


@dataclass(frozen=True, eq=False)
class EvidenceCounts:
    """Prior evidence for one hypothesis at one agent.

    Either finite pseudo-counts ``counts`` (real valued, possibly zero) or
    a certain model carrying the exact distribution in ``certain``.
    Use the :meth:`finite`, :meth:`idealized` and :meth:`certain_model`
    constructors rather than building instances by hand.
    """

    counts: Optional[np.ndarray] = None
    certain: Optional[CategoricalParams] = None
    _total: float = field(default=0.0, repr=False)

    def __post_init__(self):
        if (self.counts is None) == (self.certain is None):
            raise ValueError("exactly one of counts / certain must be given")
        if self.counts is not None:
            r = _as_vector(self.counts, "counts")
            if not np.all(np.isfinite(r)) or np.any(r < 0):
                raise ValueError(f"evidence counts must be finite and >= 0: {r}")
            r.setflags(write=False)
            object.__setattr__(self, "counts", r)
            object.__setattr__(self, "_total", float(r.sum()))

    @classmethod
    def finite(cls, counts, total: Optional[float] = None) -> "EvidenceCounts":
        ev = cls(counts=counts)
        if total is not None and abs(total - ev.total) > TOTAL_ATOL:
            raise ValueError(f"total {total} does not match sum of counts {ev.total}")
        return ev

    @classmethod
    def idealized(cls, R: float, pi) -> "EvidenceCounts":
        """Evidence exactly proportional to ``pi``: r = R * pi."""
        if not R >= 0:
            raise ValueError(f"R must be >= 0, got {R}")
        pi = pi if isinstance(pi, CategoricalParams) else CategoricalParams(pi)
        return cls(counts=R * pi.probs)

    @classmethod
    def vacuous(cls, K: int) -> "EvidenceCounts":
        return cls(counts=np.zeros(K))

    @classmethod
    def certain_model(cls, pi) -> "EvidenceCounts":
        pi = pi if isinstance(pi, CategoricalParams) else CategoricalParams(pi)
        return cls(certain=pi)

    @property
    def is_certain(self) -> bool:
        return self.certain is not None

    @property
    def total(self) -> float:
        return math.inf if self.is_certain else self._total

    @property
    def K(self) -> int:
        return self.certain.K if self.is_certain else self.counts.size

    def __repr__(self):
        if self.is_certain:
            return f"EvidenceCounts(certain={self.certain.probs.tolist()})"
        return f"EvidenceCounts(counts={self.counts.tolist()})"


@dataclass(frozen=True, eq=False)
class ObservationHistogram:
    """Integer counts of observed signals; ``time`` is their total."""

    counts: np.ndarray

    def __post_init__(self):
        n = np.array(self.counts)
        if n.ndim != 1 or n.size < 2:
            raise ValueError(f"histogram must be a vector with K >= 2 entries, got {n!r}")
        if not np.all(np.equal(np.mod(n, 1), 0)) or np.any(n < 0):
            raise ValueError(f"histogram entries must be non-negative integers: {n}")
        n = n.astype(np.int64)
        n.setflags(write=False)
        object.__setattr__(self, "counts", n)

    @classmethod
    def empty(cls, K: int) -> "ObservationHistogram":
        return cls(np.zeros(K, dtype=np.int64))

    @classmethod
    def from_signals(cls, signals: Sequence[int], K: int) -> "ObservationHistogram":
        return cls(np.bincount(np.asarray(signals, dtype=np.int64), minlength=K))

    @property
    def K(self) -> int:
        return self.counts.size

    @property
    def time(self) -> int:
        return int(self.counts.sum())

    def observe(self, k: int) -> "ObservationHistogram":
        if not 0 <= k < self.K:
            raise ValueError(f"category {k} outside 0..{self.K - 1}")
        n = self.counts.copy()
        n[k] += 1
        return ObservationHistogram(n)


class UlrOutcome(str, enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    UNSURE = "unsure"


@dataclass(frozen=True)
class UlrTestOutcome:
    outcome: UlrOutcome
    threshold: float
    log_ratio: float


def _check_same_K(*objs):
    Ks = {o.K for o in objs}
    if len(Ks) != 1:
        raise ValueError(f"inconsistent number of categories: {sorted(Ks)}")


def _finite_counts(evidence: EvidenceCounts, op: str) -> np.ndarray:
    if evidence.is_certain:
        raise ValueError(f"{op} requires finite evidence, got a certain model")
    return evidence.counts


_STIRLING_MIN = 10.0
_HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


def _stirling_corr(x: np.ndarray) -> np.ndarray:
    # lgamma(x) - [(x - 1/2) log x - x + log(2 pi) / 2], valid for x >= 10
    z = 1.0 / (x * x)
    return (
        1 / 12 - z * (1 / 360 - z * (1 / 1260 - z * (1 / 1680 - z * (1 / 1188 - z * 691 / 360360))))
    ) / x


def _log_beta2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """log B(a, b) without the cancellation of lgamma(a) + lgamma(b) - lgamma(a + b).

    Large arguments go through Stirling differences written with log1p.
    """
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    s = lo + hi
    out = gammaln(lo) + gammaln(hi) - gammaln(s)
    big = hi >= _STIRLING_MIN
    if np.any(big):
        l, h, t = lo[big], hi[big], s[big]
        both = l >= _STIRLING_MIN
        lb = np.empty_like(l)
        # both large
        lw, hw, tw = l[both], h[both], t[both]
        lb[both] = (
            (lw - 0.5) * np.log(lw / tw)
            + (hw - 0.5) * np.log1p(-lw / tw)
            - 0.5 * np.log(tw)
            + _HALF_LOG_2PI
            + _stirling_corr(lw)
            + _stirling_corr(hw)
            - _stirling_corr(tw)
        )
        # one small: lgamma(lo) + [lgamma(hi) - lgamma(hi + lo)]
        one = ~both
        lw, hw, tw = l[one], h[one], t[one]
        lb[one] = (
            gammaln(lw)
            - (hw - 0.5) * np.log1p(lw / hw)
            - lw * np.log(tw)
            + lw
            + _stirling_corr(hw)
            - _stirling_corr(tw)
        )
        out[big] = lb
    return out


def log_beta_rows(a: np.ndarray) -> np.ndarray:
    # unchecked, last axis is the category axis; B(a) = prod_k B(a_1 + .. + a_{k-1}, a_k)
    a = np.asarray(a, dtype=float)
    partial = np.cumsum(a, axis=-1)
    return _log_beta2(partial[..., :-1], a[..., 1:]).sum(axis=-1)


def log_beta(alpha) -> float:
    """log of the multivariate Beta function, sum(lgamma(a)) - lgamma(sum(a))."""
    a = np.asarray(alpha, dtype=float)
    if a.ndim != 1 or a.size < 2:
        raise ValueError(f"log_beta needs a vector of length >= 2, got shape {a.shape}")
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise ValueError(f"log_beta is defined for finite positive arguments only: {a}")
    return float(log_beta_rows(a))


def _xlogy(x: np.ndarray, y: np.ndarray) -> float:
    # x*log(y) with 0*log(0) = 0 and x*log(0) = -inf for x > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.log(y)
        terms = np.where(x > 0, x * logs, 0.0)
    return float(terms.sum())


def dirichlet_log_pdf(pi: CategoricalParams, evidence: EvidenceCounts) -> float:
    """Log density of the Dirichlet(r + 1) posterior evaluated at ``pi``."""
    r = _finite_counts(evidence, "dirichlet_log_pdf")
    _check_same_K(pi, evidence)
    return _xlogy(r, pi.probs) - log_beta(r + 1.0)


def log_posterior_predictive(n: ObservationHistogram, evidence: EvidenceCounts) -> float:
    """log B(r + n + 1) - log B(r + 1)."""
    r = _finite_counts(evidence, "log_posterior_predictive")
    _check_same_K(n, evidence)
    return log_beta(r + n.counts + 1.0) - log_beta(r + 1.0)


def log_ulr(n: ObservationHistogram, evidence: EvidenceCounts) -> float:
    """Log uncertain likelihood ratio: posterior predictive over the vacuous model.

    For a certain model this is the multinomial likelihood of ``n`` divided
    by the vacuous predictive, which is what the certain likelihood updates
    telescope to.
    """
    _check_same_K(n, evidence)
    nc = n.counts.astype(float)
    K = n.K
    vacuous = log_beta(nc + 1.0) - log_beta(np.ones(K))
    if evidence.is_certain:
        return _xlogy(nc, evidence.certain.probs) - vacuous
    r = evidence.counts
    return log_beta(r + nc + 1.0) - log_beta(r + 1.0) - vacuous


def log_likelihood_update(
    n_prev: ObservationHistogram, k: int, evidence: EvidenceCounts, t: int
) -> float:
    """Log of the one-step likelihood ratio update after observing category ``k`` at time ``t``."""
    _check_same_K(n_prev, evidence)
    K = n_prev.K
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    if n_prev.time != t - 1:
        raise ValueError(f"histogram total {n_prev.time} does not match t - 1 = {t - 1}")
    if not 0 <= k < K:
        raise ValueError(f"category {k} out of range for K = {K}")
    nk = float(n_prev.counts[k])
    if evidence.is_certain:
        p = evidence.certain.probs[k]
        if p == 0.0:
            return -math.inf
        return math.log(p) + math.log(t + K - 1) - math.log(nk + 1.0)
    r = evidence.counts
    R = evidence.total
    # (r_k + n_k + 1) / (n_k + 1) times (t + K - 1) / (R + t + K - 1), each factor via log1p
    return math.log1p(r[k] / (nk + 1.0)) - math.log1p(R / (t + K - 1))


def log_asymptotic_ulr(evidence: EvidenceCounts, ground_truth: CategoricalParams) -> float:
    """Large-t limit of the log ULR for finite evidence ``r`` and true distribution ``ground_truth``."""
    if evidence.is_certain:
        raise ValueError(
            "the asymptotic ULR of a certain model is 0 or infinity; use limit_log_ulr"
        )
    _check_same_K(evidence, ground_truth)
    r = evidence.counts
    return log_beta(np.ones(r.size)) - log_beta(r + 1.0) + _xlogy(r, ground_truth.probs)


def limit_log_ulr(evidence: EvidenceCounts, ground_truth: CategoricalParams) -> float:
    """Like :func:`log_asymptotic_ulr` but also defined for certain models (+inf or -inf)."""
    if evidence.is_certain:
        _check_same_K(evidence, ground_truth)
        return math.inf if evidence.certain == ground_truth else -math.inf
    return log_asymptotic_ulr(evidence, ground_truth)


def ulrt_classify(log_ratio: float, upsilon: float) -> UlrTestOutcome:
    if not upsilon > 1:
        raise ValueError(f"threshold upsilon must exceed 1, got {upsilon}")
    if math.isnan(log_ratio):
        raise ValueError("log_ratio is NaN")
    bound = math.log(upsilon)
    if log_ratio >= bound:
        outcome = UlrOutcome.ACCEPT
    elif log_ratio < -bound:
        outcome = UlrOutcome.REJECT
    else:
        outcome = UlrOutcome.UNSURE
    return UlrTestOutcome(outcome, float(upsilon), float(log_ratio))


def classify_array(log_ratios, upsilon: float) -> np.ndarray:
    """Vectorised :func:`ulrt_classify`; returns an array of outcome strings."""
    if not upsilon > 1:
        raise ValueError(f"threshold upsilon must exceed 1, got {upsilon}")
    x = np.asarray(log_ratios, dtype=float)
    if np.any(np.isnan(x)):
        raise ValueError("log ratios contain NaN")
    bound = math.log(upsilon)
    out = np.full(x.shape, UlrOutcome.UNSURE.value, dtype=object)
    out[x >= bound] = UlrOutcome.ACCEPT.value
    out[x < -bound] = UlrOutcome.REJECT.value
    return out


def softmax_log(log_values) -> np.ndarray:
    """Normalise exp(log_values) to a probability vector; -inf entries map to 0."""
    x = np.asarray(log_values, dtype=float)
    if np.all(np.isneginf(x)):
        raise ValueError("cannot normalise: every log value is -inf")
    w = np.exp(x - x.max())
    return w / w.sum()


def normalized_belief_limits(
    hypotheses: Sequence[EvidenceCounts], ground_truth: CategoricalParams
) -> np.ndarray:
    """Large-t limit of beliefs normalised over the hypothesis set (uniform priors).

    The common vacuous normaliser cancels, so the limit is a softmax of the
    asymptotic log ULRs.
    """
    if len(hypotheses) < 2:
        raise ValueError("need at least two hypotheses to normalise over")
    limits = [log_asymptotic_ulr(ev, ground_truth) for ev in hypotheses]
    return softmax_log(limits)
